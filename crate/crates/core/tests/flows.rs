//! End-to-end properties of discrete flows and their diagnostics.

use otlab_core::costs::{CostSystem, RadialProfile};
use otlab_core::diagnostics::{
    entropy_dissipation_residual, fisher_dissipation_residual, fisher_information, lsi_certificate,
    tol_d, CertificateStatus, FlowTrace,
};
use otlab_core::grid::{make_gibbs, Grid, GridMeasure, Potential, PotentialSpec};
use otlab_core::jko::{run_flow, JkoConfig, SolverKind};
use otlab_core::moduli::{ppower_c, Modulus, ModulusKind};
use otlab_core::Error;

/// `h = r^2 / (2 tau)`, `H = r^2 / 2`, `L = h* = tau r^2 / 2`.
fn quadratic_system(tau: f64) -> CostSystem {
    CostSystem::new(
        RadialProfile::scaled(tau, RadialProfile::quadratic()).unwrap(),
        RadialProfile::quadratic(),
        RadialProfile::multiple(tau, RadialProfile::quadratic()).unwrap(),
        10.0,
    )
    .unwrap()
}

fn setup(spec: PotentialSpec, a: f64, n: usize) -> (Grid, Potential, GridMeasure) {
    let grid = Grid::new(-a, a, n).unwrap();
    let (v, eta) = make_gibbs(&spec, &grid).unwrap();
    (grid, v, eta)
}

fn flow(rho0: &GridMeasure, v: &Potential, system: &CostSystem, sigma: &Modulus, omega: &Modulus, steps: usize) -> FlowTrace {
    run_flow(rho0, v, &system.h, steps, &JkoConfig::default(), system, sigma, omega).unwrap()
}

fn worst_residuals(trace: &FlowTrace) -> (f64, f64) {
    (0..trace.len() - 1).fold((f64::INFINITY, f64::INFINITY), |(e, f), k| {
        (
            e.min(entropy_dissipation_residual(trace, k).unwrap()),
            f.min(fisher_dissipation_residual(trace, k).unwrap()),
        )
    })
}

#[test]
fn cubic_potential_residuals_shrink_with_dx() {
    let system = quadratic_system(0.2);
    let sigma = Modulus::power(3.0, ppower_c(3.0).unwrap(), ModulusKind::Convexity).unwrap();
    let omega = Modulus::power(3.0, 0.5, ModulusKind::Monotonicity).unwrap();
    let mut negative = Vec::new();
    for n in [201, 401] {
        let (grid, v, _) = setup(PotentialSpec::Power { p: 3.0, coeff: 1.0 }, 2.0, n);
        let rho0 = GridMeasure::from_log_fn(&grid, |x| -(x - 0.6f64).powi(2) / 0.5).unwrap();
        let trace = flow(&rho0, &v, &system, &sigma, &omega, 50);
        let (e, f) = worst_residuals(&trace);
        let tol = tol_d(grid.dx(), 0.0, 1.0);
        assert!(e >= -tol && f >= -tol, "n = {n}: {e}, {f}");
        negative.push((-e).max(-f).max(0.0));
    }
    assert!(negative[1] <= 0.5 * negative[0] + 1e-12, "{negative:?}");
}

#[test]
fn telescoping_is_exact_on_the_trace() {
    let system = quadratic_system(0.1);
    let (grid, v, _) = setup(PotentialSpec::Quadratic { lambda: 1.0 }, 4.0, 201);
    let sigma = Modulus::power(2.0, 0.5, ModulusKind::Convexity).unwrap();
    let omega = Modulus::power(2.0, 1.0, ModulusKind::Monotonicity).unwrap();
    let rho0 = GridMeasure::from_log_fn(&grid, |x| -(x - 1.0f64).powi(2) / 2.0).unwrap();
    let trace = flow(&rho0, &v, &system, &sigma, &omega, 30);
    let f: Vec<f64> = trace.rows.iter().map(|r| r.free_energy).collect();
    let mut sum = 0.0;
    for n in 1..f.len() {
        sum += f[n - 1] - f[n];
        assert!((sum - (f[0] - f[n])).abs() <= 1e-14 * (1.0 + f[0].abs()));
    }
    assert!(trace.energy_increases() == 0);
}

#[test]
fn equilibrium_start_is_certified_trivially() {
    let system = quadratic_system(0.1);
    let (_, v, eta) = setup(PotentialSpec::Quadratic { lambda: 1.0 }, 4.0, 201);
    let sigma = Modulus::power(2.0, 0.5, ModulusKind::Convexity).unwrap();
    let omega = Modulus::power(2.0, 1.0, ModulusKind::Monotonicity).unwrap();
    let trace = flow(&eta, &v, &system, &sigma, &omega, 10);
    assert_eq!(trace.len(), 1);
    let cert = lsi_certificate(&trace, 1.0);
    assert!(cert.certified);
    assert!(cert.F0.abs() < 1e-12 && cert.IG0.abs() < 1e-12);
}

#[test]
fn short_flow_is_inconclusive() {
    let system = quadratic_system(0.1);
    let (grid, v, _) = setup(PotentialSpec::Quadratic { lambda: 1.0 }, 4.0, 201);
    let sigma = Modulus::power(2.0, 0.5, ModulusKind::Convexity).unwrap();
    let omega = Modulus::power(2.0, 1.0, ModulusKind::Monotonicity).unwrap();
    let rho0 = GridMeasure::from_log_fn(&grid, |x| -(x - 1.0f64).powi(2) / 2.0).unwrap();
    let trace = flow(&rho0, &v, &system, &sigma, &omega, 3);
    let cert = lsi_certificate(&trace, 1.0);
    assert_eq!(cert.status, CertificateStatus::Inconclusive);
    assert!(!cert.certified && !cert.converged);
}

#[test]
fn solver_failure_reports_the_step() {
    let system = quadratic_system(0.1);
    let (grid, v, _) = setup(PotentialSpec::Quadratic { lambda: 1.0 }, 4.0, 101);
    let sigma = Modulus::power(2.0, 0.5, ModulusKind::Convexity).unwrap();
    let omega = Modulus::power(2.0, 1.0, ModulusKind::Monotonicity).unwrap();
    let rho0 = GridMeasure::from_log_fn(&grid, |x| -(x - 1.0f64).powi(2) / 2.0).unwrap();
    let config = JkoConfig { solver: SolverKind::FixedPoint, max_inner_iters: 2, max_restarts: 0, ..JkoConfig::default() };
    let err = run_flow(&rho0, &v, &system.h, 5, &config, &system, &sigma, &omega).unwrap_err();
    assert!(matches!(err, Error::FlowStep { step: 0, .. }), "{err}");
    assert!(matches!(run_flow(&rho0, &v, &system.h, 0, &JkoConfig::default(), &system, &sigma, &omega), Err(Error::Config(_))));
}

#[test]
fn fisher_information_detects_departure_from_equilibrium() {
    let (grid, v, eta) = setup(PotentialSpec::Quadratic { lambda: 1.0 }, 4.0, 401);
    let w = RadialProfile::quadratic();
    assert!(fisher_information(&eta, &v, &w).unwrap() < 1e-20);
    for eps in [1e-5, 1e-3, 1e-1] {
        let rho = GridMeasure::new(
            &grid,
            eta.density().iter().zip(grid.nodes()).map(|(d, x)| d * (1.0 + eps * x.sin())).collect(),
        )
        .unwrap();
        assert!(rho.sup_distance(&eta) > 1e-6);
        assert!(fisher_information(&rho, &v, &w).unwrap() > 0.0, "eps = {eps}");
    }
}

#[test]
fn oracle_tracks_the_flow() {
    let system = quadratic_system(0.5);
    let (grid, v, _) = setup(PotentialSpec::Quadratic { lambda: 1.0 }, 2.0, 81);
    let sigma = Modulus::power(2.0, 0.5, ModulusKind::Convexity).unwrap();
    let omega = Modulus::power(2.0, 1.0, ModulusKind::Monotonicity).unwrap();
    let rho0 = GridMeasure::from_log_fn(&grid, |x| -(x - 0.5f64).powi(2) / 2.0).unwrap();
    let config = JkoConfig { oracle_check: true, ..JkoConfig::default() };
    let trace = run_flow(&rho0, &v, &system.h, 3, &config, &system, &sigma, &omega).unwrap();
    for step in &trace.steps {
        assert!(step.oracle_distance.unwrap() <= 1e-3);
    }
}
