//! Dissipation diagnostics along a discrete flow: Fisher informations, the
//! entropy and Fisher dissipation residuals, the log-Sobolev certificate
//! obtained by telescoping them, and the rates of the `p`-power setting.
//!
//! The pressure gradient `u'` of an iterate is taken from the optimality
//! condition, `u' = -psi'`; the initial measure uses finite differences.

use serde::Serialize;

use crate::costs::{alpha, CostSystem, RadialProfile};
use crate::error::{Error, Result};
use crate::grid::{free_energy, pressure, GridMeasure, Potential};
use crate::moduli::Modulus;

/// Default convergence level for [`lsi_certificate`].
pub const CONVERGED_SUP_DISTANCE: f64 = 1e-4;

/// Discretization tolerance `scale * 100 dx (1 + magnitude)`.
pub fn tol_d(dx: f64, magnitude: f64, scale: f64) -> f64 {
    scale * 100.0 * dx * (1.0 + magnitude.abs())
}

/// A flow iterate with its pressure gradient.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub density: GridMeasure,
    pub pressure_gradient: Vec<f64>,
}

/// Solver statistics of one JKO step.
#[derive(Debug, Clone, Serialize)]
pub struct StepInfo {
    pub transport_cost: f64,
    pub residual: f64,
    pub duality_gap: f64,
    pub inner_iters: usize,
    pub objective: f64,
    pub oracle_distance: Option<f64>,
}

/// Per-iterate quantities. The residual columns refer to the step that
/// produced this iterate and are empty for the initial state.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub k: usize,
    pub free_energy: f64,
    pub fisher_h: f64,
    pub fisher_l: f64,
    pub fisher_g: f64,
    /// `I_G` with the finite-difference pressure gradient, as a cross-check.
    pub fisher_g_fd: f64,
    pub r_ent: f64,
    pub r_inf: f64,
    pub delta: f64,
    pub sup_dist_to_eta: f64,
    pub transport_cost: f64,
    pub entropy_residual: Option<f64>,
    pub entropy_tol: Option<f64>,
    pub fisher_residual: Option<f64>,
    pub fisher_tol: Option<f64>,
}

/// Iterates of a flow together with their diagnostics.
#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub states: Vec<FlowState>,
    pub steps: Vec<StepInfo>,
    pub rows: Vec<TraceRow>,
    pub dx: f64,
}

/// `int W(|g|) drho` for nodal gradients `g`.
pub fn fisher_from_gradient(rho: &GridMeasure, gradient: &[f64], w: &RadialProfile) -> f64 {
    let vals: Vec<f64> = gradient.iter().map(|g| w.eval(*g)).collect();
    rho.expect(&vals)
}

/// `I_W(rho) = int W(|u'|) drho` with the finite-difference pressure gradient.
pub fn fisher_information(rho: &GridMeasure, potential: &Potential, w: &RadialProfile) -> Result<f64> {
    Ok(fisher_from_gradient(rho, &pressure(rho, potential)?.gradient, w))
}

/// `(h*)'(|u'|)`, the displacement magnitude associated with `u'`.
fn displacement(system: &CostSystem, g: f64) -> f64 {
    system.h.conj_derivative(g.abs())
}

/// The pieces of the entropy dissipation evaluated at one iterate.
struct EntropyTerms {
    young: f64,
    young_conj: f64,
    sigma: f64,
    alpha_omega: f64,
}

fn entropy_terms(state: &FlowState, system: &CostSystem, sigma: &Modulus, omega: &Modulus) -> Result<EntropyTerms> {
    let g = &state.pressure_gradient;
    let mut young = Vec::with_capacity(g.len());
    let mut young_conj = Vec::with_capacity(g.len());
    let mut sig = Vec::with_capacity(g.len());
    let mut aw = Vec::with_capacity(g.len());
    for &z in g {
        let d = displacement(system, z);
        young.push(system.young.eval(z));
        young_conj.push(system.young_conj.value(d));
        sig.push(sigma.value(d));
        aw.push(if z == 0.0 { 0.0 } else { alpha(z, system)? * omega.value(d) });
    }
    let rho = &state.density;
    Ok(EntropyTerms {
        young: rho.expect(&young),
        young_conj: rho.expect(&young_conj),
        sigma: rho.expect(&sig),
        alpha_omega: rho.expect(&aw),
    })
}

impl FlowTrace {
    /// Computes all diagnostics for the given iterates.
    pub fn new(
        states: Vec<FlowState>,
        steps: Vec<StepInfo>,
        potential: &Potential,
        system: &CostSystem,
        sigma: &Modulus,
        omega: &Modulus,
    ) -> Result<Self> {
        if states.is_empty() || steps.len() + 1 != states.len() {
            return Err(Error::Domain("a trace needs one more state than steps".into()));
        }
        let dx = potential.grid().dx();
        let eta = GridMeasure::new(potential.grid(), potential.gibbs_density())?;
        let total = system.total();
        let mut terms = Vec::with_capacity(states.len());
        let mut rows: Vec<TraceRow> = Vec::with_capacity(states.len());
        for (k, state) in states.iter().enumerate() {
            let t = entropy_terms(state, system, sigma, omega)?;
            let fisher_h = fisher_from_gradient(&state.density, &state.pressure_gradient, &system.fisher);
            let r_ent = t.young + t.young_conj - t.sigma;
            let r_inf = t.alpha_omega;
            rows.push(TraceRow {
                k,
                free_energy: free_energy(&state.density, potential)?,
                fisher_h,
                fisher_l: t.young,
                fisher_g: fisher_h + t.young,
                fisher_g_fd: fisher_information(&state.density, potential, &total)?,
                r_ent,
                r_inf,
                delta: r_ent - r_inf,
                sup_dist_to_eta: state.density.sup_distance(&eta),
                transport_cost: if k == 0 { 0.0 } else { steps[k - 1].transport_cost },
                entropy_residual: None,
                entropy_tol: None,
                fisher_residual: None,
                fisher_tol: None,
            });
            terms.push(t);
        }
        for k in 1..rows.len() {
            let (prev, cur) = (&rows[k - 1], &rows[k]);
            let t = &terms[k];
            // F(rho) + int L(u_mu') dmu + int L*(..) drho - F(mu) - int sigma(..) drho
            let ent = cur.free_energy + prev.fisher_l + t.young_conj - prev.free_energy - t.sigma;
            let ent_mag = cur.free_energy.abs() + prev.fisher_l + t.young_conj + prev.free_energy.abs() + t.sigma;
            // I_H(mu) - I_H(rho) - int alpha omega(..) drho
            let fis = prev.fisher_h - cur.fisher_h - t.alpha_omega;
            let fis_mag = prev.fisher_h + cur.fisher_h + t.alpha_omega;
            let row = &mut rows[k];
            row.entropy_residual = Some(ent);
            row.entropy_tol = Some(tol_d(dx, ent_mag, 1.0));
            row.fisher_residual = Some(fis);
            row.fisher_tol = Some(tol_d(dx, fis_mag, 1.0));
        }
        Ok(Self { states, steps, rows, dx })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> &TraceRow {
        self.rows.last().expect("traces are never empty")
    }

    /// Number of steps where the free energy increased.
    pub fn energy_increases(&self) -> usize {
        self.rows.windows(2).filter(|w| w[1].free_energy > w[0].free_energy).count()
    }

    /// Worst `residual + tol` over the entropy and Fisher residuals, scaled
    /// by `scale` (nonnegative means every residual is within tolerance).
    pub fn worst_residual_margin(&self, scale: f64) -> f64 {
        self.rows
            .iter()
            .filter_map(|r| {
                let e = r.entropy_residual? + scale * r.entropy_tol?;
                let f = r.fisher_residual? + scale * r.fisher_tol?;
                Some(e.min(f))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Entropy dissipation residual of the step `k -> k + 1`:
/// `F(rho_{k+1}) + int L(u_k') drho_k + int L*(d) drho_{k+1} - F(rho_k) - int sigma(d) drho_{k+1}`
/// with `d = (h*)'(|u_{k+1}'|)`.
pub fn entropy_dissipation_residual(trace: &FlowTrace, k: usize) -> Result<f64> {
    trace
        .rows
        .get(k + 1)
        .and_then(|r| r.entropy_residual)
        .ok_or_else(|| Error::Domain(format!("trace has no step {k}")))
}

/// Fisher dissipation residual of the step `k -> k + 1`:
/// `I_H(rho_k) - I_H(rho_{k+1}) - int alpha(u') omega(d) drho_{k+1}`.
pub fn fisher_dissipation_residual(trace: &FlowTrace, k: usize) -> Result<f64> {
    trace
        .rows
        .get(k + 1)
        .and_then(|r| r.fisher_residual)
        .ok_or_else(|| Error::Domain(format!("trace has no step {k}")))
}

/// Outcome of [`lsi_certificate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateStatus {
    Certified,
    Violated,
    Inconclusive,
}

/// Log-Sobolev certificate from a flow.
#[derive(Debug, Clone, Serialize)]
#[allow(non_snake_case)]
pub struct LsiCertificate {
    pub F0: f64,
    pub IG0: f64,
    pub Fn: f64,
    pub IGn: f64,
    pub sum_delta: f64,
    pub certified: bool,
    pub tol: f64,
    pub status: CertificateStatus,
    /// Worst `rhs + tol - lhs` of the telescoped inequality
    /// `F_0 - F_n <= I_G(rho_0) - I_G(rho_n) + sum_{k=1..n} Delta_k`.
    pub telescoping_margin: f64,
    pub converged: bool,
}

/// Checks `F(rho_0) <= I_G(rho_0)` and the telescoped dissipation inequality
/// at every `n`. Traces that did not reach equilibrium are inconclusive.
pub fn lsi_certificate(trace: &FlowTrace, tol_scale: f64) -> LsiCertificate {
    let first = &trace.rows[0];
    let last = trace.last();
    let tol = tol_d(trace.dx, first.free_energy.abs() + first.fisher_g, tol_scale);
    let mut sum_delta = 0.0;
    let mut telescoping_margin = f64::INFINITY;
    for row in &trace.rows[1..] {
        sum_delta += row.delta;
        let lhs = first.free_energy - row.free_energy;
        let rhs = first.fisher_g - row.fisher_g + sum_delta;
        telescoping_margin = telescoping_margin.min(rhs + tol - lhs);
    }
    let converged = last.sup_dist_to_eta < CONVERGED_SUP_DISTANCE;
    let bound_holds = first.free_energy <= first.fisher_g + tol;
    let telescoping_ok = telescoping_margin >= 0.0;
    let status = if !converged {
        CertificateStatus::Inconclusive
    } else if bound_holds && telescoping_ok {
        CertificateStatus::Certified
    } else {
        CertificateStatus::Violated
    };
    LsiCertificate {
        F0: first.free_energy,
        IG0: first.fisher_g,
        Fn: last.free_energy,
        IGn: last.fisher_g,
        sum_delta,
        certified: status == CertificateStatus::Certified,
        tol,
        status,
        telescoping_margin,
        converged,
    }
}

/// Rates of the `p`-power setting along a flow.
#[derive(Debug, Clone, Serialize)]
pub struct PpowerReport {
    pub p: f64,
    pub q: f64,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    /// `I_q(rho_k) = int |u_k'|^q drho_k`.
    pub fisher_q: Vec<f64>,
    /// `F_{k+1} + I_q(rho_k) / (q alpha^(q-1)) - F_k` per step.
    pub energy_margins: Vec<f64>,
    /// `I_q(rho_k) / (1 + theta) + tol - I_q(rho_{k+1})` per step.
    pub decay_margins: Vec<f64>,
    /// `I_q(rho_0) (1 + tol) / (1 + theta)^k - I_q(rho_k)`.
    pub geometric_margins: Vec<f64>,
    /// `(1 + 1/theta) / (q alpha^(q-1))`.
    pub summed_constant: f64,
    pub f0: f64,
    pub summed_bound: f64,
    pub tol: f64,
    pub energy_ok: bool,
    pub decay_ok: bool,
    pub geometric_ok: bool,
    pub summed_ok: bool,
}

impl PpowerReport {
    pub fn passed(&self) -> bool {
        self.energy_ok && self.decay_ok && self.geometric_ok && self.summed_ok
    }
}

/// Checks the per-step energy inequality, the geometric decay of `I_q` with
/// rate `1 + theta`, `theta = beta tau^(p-1)`, and the summed bound
/// `F_0 <= (1 + 1/theta) I_q(rho_0) / (q alpha^(q-1))`.
pub fn ppower_flow_constants(
    trace: &FlowTrace,
    alpha_coef: f64,
    beta_coef: f64,
    p: f64,
    tau: f64,
    tol_scale: f64,
) -> Result<PpowerReport> {
    if !(p > 1.0) || !p.is_finite() || !(alpha_coef > 0.0) || !(beta_coef > 0.0) || !(tau > 0.0) {
        return Err(Error::Config(format!(
            "p-power constants need p > 1 and positive alpha, beta, tau; got p = {p}, alpha = {alpha_coef}, beta = {beta_coef}, tau = {tau}"
        )));
    }
    let q = p / (p - 1.0);
    let theta = beta_coef * tau.powf(p - 1.0);
    let c = 1.0 / (q * alpha_coef.powf(q - 1.0));
    let tol = tol_scale * 100.0 * trace.dx;
    let fisher_q: Vec<f64> = trace
        .states
        .iter()
        .map(|s| {
            let v: Vec<f64> = s.pressure_gradient.iter().map(|g| g.abs().powf(q)).collect();
            s.density.expect(&v)
        })
        .collect();
    let f: Vec<f64> = trace.rows.iter().map(|r| r.free_energy).collect();
    let energy_margins: Vec<f64> = (1..f.len()).map(|k| f[k] + c * fisher_q[k - 1] - f[k - 1]).collect();
    let decay_margins: Vec<f64> =
        (1..f.len()).map(|k| fisher_q[k - 1] / (1.0 + theta) + tol - fisher_q[k]).collect();
    let geometric_margins: Vec<f64> = (0..f.len())
        .map(|k| fisher_q[0] * (1.0 + tol) / (1.0 + theta).powi(k as i32) - fisher_q[k])
        .collect();
    let summed_constant = c * (1.0 + 1.0 / theta);
    let summed_bound = summed_constant * fisher_q[0];
    let energy_tol = tol * (1.0 + f[0].abs() + c * fisher_q[0]);
    Ok(PpowerReport {
        p,
        q,
        tau,
        alpha: alpha_coef,
        beta: beta_coef,
        theta,
        energy_ok: energy_margins.iter().all(|m| *m >= -energy_tol),
        decay_ok: decay_margins.iter().all(|m| *m >= 0.0),
        geometric_ok: geometric_margins.iter().all(|m| *m >= -tol),
        summed_ok: f[0] <= summed_bound + tol,
        fisher_q,
        energy_margins,
        decay_margins,
        geometric_margins,
        summed_constant,
        f0: f[0],
        summed_bound,
        tol,
    })
}
