//! Subcommand implementations. Each one writes its files into the job
//! directory and returns a pass/fail outcome with a one-line summary.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use otlab_core::config::{is_step_case_file, step_cases_from_tree, ExperimentConfig, Experiment, StepProblem};
use otlab_core::costs::RadialProfile;
use otlab_core::criteria::{
    lsi_gap as lsi_gap_of, radial_theta_lsi, simpler_condition, theorem_criterion, CriterionReport, TestFunction,
};
use otlab_core::diagnostics::{lsi_certificate, ppower_flow_constants, tol_d, LsiCertificate, PpowerReport};
use otlab_core::io::{write_json, write_margins, write_rows, write_trace, write_transport};
use otlab_core::jko::{jko_step, run_flow, JkoConfig};
use otlab_core::moduli::{ppower_c, ppower_tp, verify_modulus, ModulusReport};
use otlab_core::transport::{five_gradients_value, TransportSolution};

use crate::Options;

/// Modulus margins above `-MODULUS_TOL * tol_scale` pass.
const MODULUS_TOL: f64 = 1e-8;

/// Oracle distance accepted for a single JKO step.
const STEP_ORACLE_TOL: f64 = 1e-3;

/// Agreement required between the fast and brute-force c-transforms.
const C_TRANSFORM_TOL: f64 = 1e-9;

pub struct Outcome {
    pub passed: bool,
    pub summary: String,
}

fn experiment(tree: toml::Value) -> anyhow::Result<Experiment> {
    Ok(ExperimentConfig::from_tree(tree)?.build()?)
}

fn name(exp: &Experiment) -> String {
    exp.config.name.clone().unwrap_or_else(|| "experiment".into())
}

#[derive(Serialize)]
struct ModuliReport {
    sigma: ModulusReport,
    omega: ModulusReport,
    tol: f64,
    passed: bool,
}

#[derive(Serialize)]
struct GapRow {
    test: String,
    gap: f64,
    tol: f64,
    passed: bool,
}

#[derive(Serialize)]
struct CriterionOutput {
    name: String,
    z_max: f64,
    theorem: Option<CriterionReport>,
    simpler: Option<CriterionReport>,
    moduli: Option<ModuliReport>,
    lsi_gap: Option<Vec<GapRow>>,
    passed: bool,
}

fn moduli_report(exp: &Experiment, options: &Options) -> anyhow::Result<ModuliReport> {
    let samples = exp.config.criterion.pair_samples;
    let sigma = verify_modulus(&exp.potential, &exp.sigma, samples)?;
    let omega = verify_modulus(&exp.potential, &exp.omega, samples)?;
    let tol = MODULUS_TOL * options.tol_scale;
    let passed = sigma.passed(tol) && omega.passed(tol);
    Ok(ModuliReport { sigma, omega, tol, passed })
}

fn gap_rows(exp: &Experiment, tests: &[TestFunction], options: &Options) -> anyhow::Result<Vec<GapRow>> {
    let big_g = exp.total_cost();
    let tol = tol_d(exp.grid.dx(), 0.0, options.tol_scale);
    tests
        .iter()
        .map(|g| {
            let gap = lsi_gap_of(g, &exp.eta, &exp.potential, &big_g)?;
            Ok(GapRow { test: serde_json::to_string(g)?, gap, tol, passed: gap >= -tol })
        })
        .collect()
}

pub fn criterion(tree: toml::Value, options: &Options, out: &Path) -> anyhow::Result<Outcome> {
    let exp = experiment(tree)?;
    let checks = &exp.config.checks;
    let wants = |c: &str| checks.iter().any(|x| x == c);
    let (z_max, n_z) = (exp.z_max(), exp.config.criterion.n_z);

    let theorem = if wants("theorem_criterion") {
        let r = theorem_criterion(&exp.system, &exp.sigma, &exp.omega, z_max, n_z)?;
        write_margins(&out.join("margins_theorem.csv"), &r)?;
        Some(r)
    } else {
        None
    };
    let simpler = if wants("simpler_condition") {
        let r = simpler_condition(&exp.system.h, &exp.sigma, &exp.omega, z_max, n_z)?;
        write_margins(&out.join("margins_simpler.csv"), &r)?;
        Some(r)
    } else {
        None
    };
    let moduli = if wants("moduli") || options.oracle { Some(moduli_report(&exp, options)?) } else { None };
    let lsi_gap = if wants("lsi_gap") { Some(gap_rows(&exp, &exp.test_functions(), options)?) } else { None };

    let passed = theorem.as_ref().is_none_or(|r| r.passed)
        && simpler.as_ref().is_none_or(|r| r.passed)
        && moduli.as_ref().is_none_or(|m| m.passed)
        && lsi_gap.as_ref().is_none_or(|rows| rows.iter().all(|r| r.passed));
    let mut summary = format!("criterion {}", name(&exp));
    if let Some(r) = &theorem {
        summary += &format!(" theorem worst margin {:.3e} at z = {:.3e}", r.worst_margin, r.worst_z);
    }
    if let Some(r) = &simpler {
        match r.minimal_c {
            Some(c) => summary += &format!(", minimal C {c:.6}"),
            None => summary += ", no finite C",
        }
    }
    let output = CriterionOutput { name: name(&exp), z_max, theorem, simpler, moduli, lsi_gap, passed };
    write_json(&out.join("criterion.json"), &output)?;
    Ok(Outcome { passed, summary })
}

#[derive(Serialize)]
struct FlowSummary {
    name: String,
    steps: usize,
    final_sup_dist: f64,
    final_free_energy: f64,
    energy_increases: usize,
    worst_residual_margin: f64,
    residuals_ok: bool,
    criterion_passed: bool,
    max_oracle_distance: Option<f64>,
    certificate: LsiCertificate,
    ppower: Option<PpowerReport>,
    passed: bool,
}

pub fn flow(tree: toml::Value, options: &Options, out: &Path) -> anyhow::Result<Outcome> {
    let exp = experiment(tree)?;
    let spec = exp.config.flow.clone().context("config has no [flow] section")?;
    let mut solver = spec.solver.clone();
    solver.oracle_check |= options.oracle;
    let criterion_passed = theorem_criterion(&exp.system, &exp.sigma, &exp.omega, exp.z_max(), exp.config.criterion.n_z)?.passed;
    let trace = run_flow(
        &exp.rho0,
        &exp.potential,
        &exp.system.h,
        spec.n_steps,
        &solver,
        &exp.system,
        &exp.sigma,
        &exp.omega,
    )?;
    let certificate = lsi_certificate(&trace, options.tol_scale);
    let worst_residual_margin = trace.worst_residual_margin(options.tol_scale);
    let ppower = match &exp.config.ppower {
        Some(pp) => Some(ppower_flow_constants(&trace, pp.alpha()?, pp.beta(), pp.p, pp.tau, options.tol_scale)?),
        None => None,
    };
    let max_oracle_distance = trace
        .steps
        .iter()
        .filter_map(|s| s.oracle_distance)
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let residuals_ok = worst_residual_margin >= 0.0;
    let passed = certificate.certified
        && residuals_ok
        && ppower.as_ref().is_none_or(|r| r.passed())
        && max_oracle_distance.is_none_or(|d| d <= STEP_ORACLE_TOL);
    let last = trace.last();
    let summary = format!(
        "flow {} steps {} sup_dist {:.3e} F {:.3e} certificate {:?} residual margin {:.3e}{}",
        name(&exp),
        trace.steps.len(),
        last.sup_dist_to_eta,
        last.free_energy,
        certificate.status,
        worst_residual_margin,
        if ppower.is_some() { " (p-power report attached)" } else { "" },
    );
    write_trace(&out.join("trace.csv"), &trace)?;
    write_json(&out.join("certificate.json"), &certificate)?;
    let output = FlowSummary {
        name: name(&exp),
        steps: trace.steps.len(),
        final_sup_dist: last.sup_dist_to_eta,
        final_free_energy: last.free_energy,
        energy_increases: trace.energy_increases(),
        worst_residual_margin,
        residuals_ok,
        criterion_passed,
        max_oracle_distance,
        certificate,
        ppower,
        passed,
    };
    write_json(&out.join("summary.json"), &output)?;
    Ok(Outcome { passed, summary })
}

#[derive(Serialize)]
struct StepOutput {
    name: String,
    residual: f64,
    opt_tol: f64,
    objective: f64,
    transport_cost: f64,
    duality_gap: f64,
    inner_iters: usize,
    restarts: usize,
    oracle_distance: Option<f64>,
    passed: bool,
}

#[derive(Serialize)]
struct StepRow {
    x: f64,
    mu: f64,
    rho_next: f64,
    map: f64,
    psi: f64,
}

fn solve_step(problem: &StepProblem, config: &JkoConfig, out: &Path, file: &str) -> anyhow::Result<StepOutput> {
    let r = jko_step(&problem.mu, &problem.potential, &problem.h, config)
        .with_context(|| format!("step case `{}`", problem.name))?;
    let x = problem.mu.grid().nodes();
    let rows: Vec<StepRow> = (0..x.len())
        .map(|i| StepRow {
            x: x[i],
            mu: problem.mu.density()[i],
            rho_next: r.rho_next.density()[i],
            map: r.map[i],
            psi: r.psi[i],
        })
        .collect();
    write_rows(&out.join(file), &rows)?;
    let passed = r.residual <= config.opt_tol && r.oracle_distance.is_none_or(|d| d <= STEP_ORACLE_TOL);
    Ok(StepOutput {
        name: problem.name.clone(),
        residual: r.residual,
        opt_tol: config.opt_tol,
        objective: r.objective,
        transport_cost: r.transport_cost,
        duality_gap: r.duality_gap,
        inner_iters: r.inner_iters,
        restarts: r.restarts,
        oracle_distance: r.oracle_distance,
        passed,
    })
}

pub fn step(tree: toml::Value, options: &Options, out: &Path) -> anyhow::Result<Outcome> {
    let mut results = Vec::new();
    if is_step_case_file(&tree) {
        let config = JkoConfig { oracle_check: options.oracle, ..JkoConfig::default() };
        for case in step_cases_from_tree(tree)? {
            let problem = case.build()?;
            results.push(solve_step(&problem, &config, out, &format!("step_{}.csv", case.name))?);
        }
    } else {
        let exp = experiment(tree)?;
        let mut config = exp.config.flow.as_ref().map(|f| f.solver.clone()).unwrap_or_default();
        config.oracle_check |= options.oracle;
        let problem = StepProblem {
            name: name(&exp),
            mu: exp.rho0.clone(),
            potential: exp.potential.clone(),
            h: exp.system.h.clone(),
        };
        results.push(solve_step(&problem, &config, out, "step.csv")?);
    }
    write_json(&out.join("step.json"), &results)?;
    let passed = results.iter().all(|r| r.passed);
    let worst = results.iter().map(|r| r.residual).fold(0.0, f64::max);
    let oracle = results.iter().filter_map(|r| r.oracle_distance).fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));
    let mut summary = format!("step {} case(s) worst residual {worst:.3e}", results.len());
    if let Some(d) = oracle {
        summary += &format!(" worst oracle distance {d:.3e}");
    }
    Ok(Outcome { passed, summary })
}

#[derive(Serialize)]
struct TransportOutput {
    name: String,
    cost: f64,
    duality_gap: f64,
    gap_tol: f64,
    reconstruction_error: f64,
    reconstruction_tol: f64,
    brute_force_phi_error: Option<f64>,
    passed: bool,
}

fn brute_force_c_transform(nodes: &[f64], psi: &[f64], h: &RadialProfile) -> Vec<f64> {
    nodes
        .iter()
        .map(|&y| (0..nodes.len()).map(|i| h.eval(nodes[i] - y) - psi[i]).fold(f64::INFINITY, f64::min))
        .collect()
}

pub fn transport(tree: toml::Value, options: &Options, out: &Path) -> anyhow::Result<Outcome> {
    let exp = experiment(tree)?;
    let h = &exp.system.h;
    let sol = TransportSolution::solve_unchecked(&exp.rho0, &exp.target, h)?;
    let reconstruction_error = sol.reconstruction_error(&exp.rho0, h);
    let reconstruction_tol = 10.0 * exp.grid.dx() * options.tol_scale;
    let brute_force_phi_error = options.oracle.then(|| {
        let phi = brute_force_c_transform(&sol.nodes, &sol.psi, h);
        phi.iter().zip(&sol.phi).map(|(a, b)| (a - b).abs() / (1.0 + a.abs())).fold(0.0, f64::max)
    });
    let passed = sol.duality_gap.abs() <= sol.gap_tol
        && reconstruction_error <= reconstruction_tol
        && brute_force_phi_error.is_none_or(|e| e <= C_TRANSFORM_TOL);
    write_transport(&out.join("transport.csv"), &sol)?;
    let output = TransportOutput {
        name: name(&exp),
        cost: sol.cost,
        duality_gap: sol.duality_gap,
        gap_tol: sol.gap_tol,
        reconstruction_error,
        reconstruction_tol,
        brute_force_phi_error,
        passed,
    };
    write_json(&out.join("transport.json"), &output)?;
    let summary = format!(
        "transport {} cost {:.6e} gap {:.3e} (tol {:.3e}) reconstruction {:.3e}",
        output.name, output.cost, output.duality_gap, output.gap_tol, reconstruction_error
    );
    Ok(Outcome { passed, summary })
}

#[derive(Serialize)]
struct FiveGradientsOutput {
    name: String,
    value: f64,
    tol: f64,
    passed: bool,
}

pub fn five_gradients(tree: toml::Value, options: &Options, out: &Path) -> anyhow::Result<Outcome> {
    let exp = experiment(tree)?;
    let value = five_gradients_value(&exp.rho0, &exp.target, &exp.system.fisher, &exp.system.h)?;
    let tol = tol_d(exp.grid.dx(), 0.0, options.tol_scale);
    let output = FiveGradientsOutput { name: name(&exp), value, tol, passed: value >= -tol };
    write_json(&out.join("five_gradients.json"), &output)?;
    Ok(Outcome { passed: output.passed, summary: format!("five-gradients {} value {value:.6e} (tol {tol:.3e})", output.name) })
}

#[derive(Serialize)]
#[allow(non_snake_case)]
struct PpowerOutput {
    p: f64,
    C: f64,
    t_p: f64,
    bound_2_2mp_over_p: f64,
    passed: bool,
}

pub fn ppower(tree: toml::Value, out: &Path) -> anyhow::Result<Outcome> {
    let p = tree
        .get("p")
        .and_then(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
        .context("p must be a number")?;
    let c = ppower_c(p)?;
    let t_p = ppower_tp(p)?;
    let bound = 2f64.powf(2.0 - p) / p;
    let output = PpowerOutput { p, C: c, t_p, bound_2_2mp_over_p: bound, passed: c >= bound - 1e-12 };
    write_json(&out.join("ppower.json"), &output)?;
    Ok(Outcome { passed: output.passed, summary: format!("ppower p {p} C {c:.12} t_p {t_p:.12} bound {bound:.12}") })
}

pub fn lsi_gap(tree: toml::Value, options: &Options, out: &Path) -> anyhow::Result<Outcome> {
    let exp = experiment(tree)?;
    let rows = gap_rows(&exp, &exp.test_functions(), options)?;
    write_rows(&out.join("lsi_gap.csv"), &rows)?;
    write_json(&out.join("lsi_gap.json"), &rows)?;
    let passed = rows.iter().all(|r| r.passed);
    let worst = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    Ok(Outcome { passed, summary: format!("lsi-gap {} {} test(s), smallest gap {worst:.6e}", name(&exp), rows.len()) })
}

#[derive(Serialize)]
struct ProfileRow {
    s: f64,
    l: f64,
    l_prime: f64,
}

pub fn theta_lsi(tree: toml::Value, _options: &Options, out: &Path) -> anyhow::Result<Outcome> {
    let exp = experiment(tree)?;
    let spec = exp.config.theta.clone().context("config has no [theta] section")?;
    let theta = |t: f64| spec.eval(t);
    let (l, report) = radial_theta_lsi(&theta, &exp.sigma, &exp.omega, spec.c, spec.t_max, spec.n_t)?;
    let s_max = spec.eval(spec.t_max);
    let rows: Vec<ProfileRow> = (0..=200)
        .map(|k| {
            let s = s_max * k as f64 / 200.0;
            ProfileRow { s, l: l.value(s), l_prime: l.derivative(s) }
        })
        .collect();
    write_rows(&out.join("theta_l.csv"), &rows)?;
    write_json(&out.join("theta_lsi.json"), &report)?;
    let summary = format!(
        "theta-lsi {} worst margin {:.3e} at t = {:.3e}, conjugate error {:.3e}",
        name(&exp),
        report.worst_margin,
        report.worst_t,
        report.conjugate_error
    );
    Ok(Outcome { passed: report.passed, summary })
}
