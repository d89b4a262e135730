//! The one-step JKO problem `min_rho F(rho) + T_h(rho, mu)` and the discrete
//! flow obtained by iterating it.
//!
//! The minimizer is characterized by `log rho + V + psi_rho = c`, where
//! `psi_rho` is the Kantorovich potential from `rho` to `mu`. The solver
//! iterates on `l = log rho`, stepping along `-P^{-1} R(l)` for the residual
//! `R = l + V + psi - c`. With `P = I` this is the damped fixed point
//! `l <- (1 - lambda) l + lambda (-V - psi)`; the default uses the Jacobian of
//! `R` (bordered by the mass constraint) as `P`, which removes the stiffness
//! of small time steps.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::{CostSystem, RadialProfile};
use crate::diagnostics::{FlowState, FlowTrace, StepInfo};
use crate::error::{Error, Result};
use crate::grid::{free_energy, pressure, Grid, GridMeasure, Potential, DENSITY_FLOOR};
use crate::moduli::Modulus;
use crate::transport::{gap_tolerance, optimal_map, potential_gradient, transport_cost, Cdf, TransportSolution};

/// Flows stop once `sup |rho_k - eta|` falls below this.
pub const EQUILIBRIUM_THRESHOLD: f64 = 1e-9;

/// Largest curvature used in the Jacobian, guarding `h'' = inf` at the origin.
const MAX_CURVATURE: f64 = 1e12;

/// Update rule of the one-step solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Damped Newton on the optimality condition (chord updates, backtracking).
    #[default]
    Newton,
    /// Damped fixed point `l <- (1 - lambda) l + lambda (-V - psi)`.
    FixedPoint,
}

/// Settings of the one-step solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JkoConfig {
    /// Step length of the fixed-point update; in Newton mode, the cap on
    /// the step after the first restart.
    pub relaxation: f64,
    pub max_inner_iters: usize,
    /// Sup-norm target for the optimality residual.
    pub opt_tol: f64,
    /// Duality-gap tolerance; `None` uses `max(1e-4, 10 dx^2)(1 + cost)`.
    pub gap_tol: Option<f64>,
    /// Cross-check every step against the projected-gradient oracle.
    pub oracle_check: bool,
    pub solver: SolverKind,
    /// Restarts with halved step after non-convergence.
    pub max_restarts: usize,
}

impl Default for JkoConfig {
    fn default() -> Self {
        Self {
            relaxation: 0.5,
            max_inner_iters: 500,
            opt_tol: 1e-8,
            gap_tol: None,
            oracle_check: false,
            solver: SolverKind::Newton,
            max_restarts: 3,
        }
    }
}

impl JkoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::Config(format!("relaxation must lie in (0, 1], got {}", self.relaxation)));
        }
        if !(self.opt_tol > 0.0) {
            return Err(Error::Config(format!("opt_tol must be positive, got {}", self.opt_tol)));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::Config("max_inner_iters must be positive".into()));
        }
        if let Some(t) = self.gap_tol {
            if !(t > 0.0) {
                return Err(Error::Config(format!("gap_tol must be positive, got {t}")));
            }
        }
        Ok(())
    }
}

/// Output of [`jko_step`].
#[derive(Debug, Clone)]
pub struct JkoStepResult {
    pub rho_next: GridMeasure,
    /// Kantorovich potential from `rho_next` to `mu`, zero at the left end.
    pub psi: Vec<f64>,
    pub psi_prime: Vec<f64>,
    /// Optimal map from `rho_next` to `mu`.
    pub map: Vec<f64>,
    /// Sup-norm of `log rho + V + psi - c`, `c` the `rho`-mean.
    pub residual: f64,
    /// `F(rho_next) + T_h(rho_next, mu)`.
    pub objective: f64,
    pub transport_cost: f64,
    pub duality_gap: f64,
    pub inner_iters: usize,
    pub restarts: usize,
    /// Sup-norm distance to the oracle solution, when requested.
    pub oracle_distance: Option<f64>,
}

/// Residual of the optimality condition at a normalized log-density.
struct Evaluation {
    log_rho: Vec<f64>,
    rho: Vec<f64>,
    map: Vec<f64>,
    psi_prime: Vec<f64>,
    psi: Vec<f64>,
    residual: Vec<f64>,
    sup: f64,
}

struct Problem<'a> {
    grid: &'a Grid,
    mu: &'a GridMeasure,
    mu_cdf: Cdf,
    potential: &'a Potential,
    h: &'a RadialProfile,
}

fn normalize_log(grid: &Grid, log_rho: &mut [f64]) {
    let max = log_rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_rho.iter().map(|l| (l - max).exp()).collect();
    let z = max + grid.integrate(&shifted).ln();
    log_rho.iter_mut().for_each(|l| *l -= z);
}

impl<'a> Problem<'a> {
    fn evaluate(&self, mut log_rho: Vec<f64>) -> Result<Evaluation> {
        normalize_log(self.grid, &mut log_rho);
        let rho: Vec<f64> = log_rho.iter().map(|l| l.exp().max(DENSITY_FLOOR)).collect();
        let measure = GridMeasure::new(self.grid, rho.clone())?;
        let map = optimal_map(&measure, self.mu)?;
        let psi_prime = potential_gradient(self.grid, &map, self.h);
        let psi = self.grid.cumulative(&psi_prime);
        let raw: Vec<f64> = (0..rho.len()).map(|i| log_rho[i] + self.potential.values()[i] + psi[i]).collect();
        let c = self.grid.integrate_product(&raw, &rho);
        let residual: Vec<f64> = raw.iter().map(|v| v - c).collect();
        let sup = residual.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !sup.is_finite() {
            return Err(Error::SolverFailure { residual: sup, iterations: 0 });
        }
        Ok(Evaluation { log_rho, rho, map, psi_prime, psi, residual, sup })
    }

    /// LU factors of the bordered Jacobian
    /// `[I + W D W diag(rho), -1; (w rho)^T, 0]`, where `W` is the
    /// cumulative-trapezoid matrix and `D = -h''(x - T) / mu(T)`.
    fn jacobian(&self, e: &Evaluation) -> Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
        let n = e.rho.len();
        let dx = self.grid.dx();
        let x = self.grid.nodes();
        let d: Vec<f64> = (0..n)
            .map(|k| {
                let curv = self.h.second_derivative((x[k] - e.map[k]).abs()).min(MAX_CURVATURE);
                let dens = self.mu_cdf.density_at(e.map[k]).max(DENSITY_FLOOR);
                -curv / dens
            })
            .collect();
        let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut u = vec![0.0; n];
        for j in 0..n {
            // column j of W, scaled by D
            for (k, uk) in u.iter_mut().enumerate() {
                let w = if k < j || k == 0 {
                    0.0
                } else if k == j || j == 0 {
                    0.5 * dx
                } else {
                    dx
                };
                *uk = w * d[k];
            }
            // column j of W D W, by a cumulative trapezoid of u
            let mut acc = 0.0;
            a[(0, j)] = 0.0;
            for k in 1..n {
                acc += 0.5 * dx * (u[k - 1] + u[k]);
                a[(k, j)] = acc * e.rho[j];
            }
            a[(j, j)] += 1.0;
            a[(n, j)] = self.grid.weight(j) * e.rho[j];
        }
        for k in 0..n {
            a[(k, n)] = -1.0;
        }
        if a.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let lu = a.lu();
        if lu.is_invertible() {
            Some(lu)
        } else {
            None
        }
    }
}

fn newton_direction(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, e: &Evaluation) -> Option<Vec<f64>> {
    let n = e.residual.len();
    let mut rhs = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        rhs[i] = -e.residual[i];
    }
    let sol = lu.solve(&rhs)?;
    let dir: Vec<f64> = sol.iter().take(n).cloned().collect();
    dir.iter().all(|v| v.is_finite()).then_some(dir)
}

/// One attempt of the iteration with a given step cap. Returns the last
/// evaluation, the number of iterations and whether it converged.
fn iterate(problem: &Problem, start: Vec<f64>, cap: f64, config: &JkoConfig) -> Result<(Evaluation, usize, bool)> {
    let mut current = problem.evaluate(start)?;
    let mut lu = None;
    let mut refresh = true;
    for iter in 0..config.max_inner_iters {
        if current.sup <= config.opt_tol {
            return Ok((current, iter, true));
        }
        let accepted = match config.solver {
            SolverKind::FixedPoint => {
                let next: Vec<f64> =
                    current.log_rho.iter().zip(&current.residual).map(|(l, r)| l - cap * r).collect();
                Some(problem.evaluate(next)?)
            }
            SolverKind::Newton => {
                let mut accepted = None;
                for attempt in 0..2 {
                    if refresh || lu.is_none() || attempt == 1 {
                        lu = problem.jacobian(&current);
                        refresh = false;
                    }
                    let Some(dir) = lu.as_ref().and_then(|lu| newton_direction(lu, &current)) else {
                        break;
                    };
                    let mut step = if iter == 0 && cap >= 1.0 { 1.0 } else { cap.min(1.0) };
                    while step >= 1.0 / 1024.0 {
                        let trial: Vec<f64> =
                            current.log_rho.iter().zip(&dir).map(|(l, d)| l + step * d).collect();
                        if let Ok(e) = problem.evaluate(trial) {
                            if e.sup < current.sup * (1.0 - 1e-4 * step) {
                                accepted = Some(e);
                                break;
                            }
                        }
                        step *= 0.5;
                    }
                    if accepted.is_some() {
                        break;
                    }
                }
                accepted
            }
        };
        let Some(next) = accepted else {
            return Ok((current, iter, false));
        };
        // a slowly contracting chord step asks for a fresh Jacobian
        refresh = next.sup > 0.25 * current.sup;
        current = next;
    }
    let converged = current.sup <= config.opt_tol;
    Ok((current, config.max_inner_iters, converged))
}

/// Solves the one-step JKO problem from `mu`.
pub fn jko_step(mu: &GridMeasure, potential: &Potential, h: &RadialProfile, config: &JkoConfig) -> Result<JkoStepResult> {
    config.validate()?;
    let grid = mu.grid();
    grid.check_same(potential.grid())?;
    if !mu.is_strictly_positive() {
        return Err(Error::InvalidDensity("JKO step needs a strictly positive measure".into()));
    }
    let problem = Problem { grid, mu, mu_cdf: Cdf::new(mu), potential, h };

    let mut cap = match config.solver {
        SolverKind::Newton => 1.0,
        SolverKind::FixedPoint => config.relaxation,
    };
    let mut total_iters = 0;
    let mut last_sup = f64::INFINITY;
    let mut solution = None;
    for restart in 0..=config.max_restarts {
        let (eval, iters, converged) = iterate(&problem, mu.log_density(), cap, config)?;
        total_iters += iters;
        last_sup = eval.sup;
        if converged {
            solution = Some((eval, restart));
            break;
        }
        cap = if restart == 0 && config.solver == SolverKind::Newton { config.relaxation } else { cap * 0.5 };
    }
    let Some((eval, restarts)) = solution else {
        return Err(Error::SolverFailure { residual: last_sup, iterations: total_iters });
    };

    let rho_next = GridMeasure::new(grid, eval.rho)?;
    let sol = TransportSolution::solve_unchecked(&rho_next, mu, h)?;
    let gap_tol = config.gap_tol.unwrap_or_else(|| gap_tolerance(grid, sol.cost));
    if !(sol.duality_gap.abs() <= gap_tol) {
        return Err(Error::DualInfeasible { gap: sol.duality_gap, tol: gap_tol });
    }
    let objective = free_energy(&rho_next, potential)? + sol.cost;
    let oracle_distance = if config.oracle_check {
        let oracle = jko_step_oracle(mu, potential, h, &OracleConfig::default())?;
        Some(oracle.sup_distance(&rho_next))
    } else {
        None
    };
    Ok(JkoStepResult {
        rho_next,
        psi: eval.psi,
        psi_prime: eval.psi_prime,
        map: eval.map,
        residual: eval.sup,
        objective,
        transport_cost: sol.cost,
        duality_gap: sol.duality_gap,
        inner_iters: total_iters,
        restarts,
        oracle_distance,
    })
}

/// Settings of the projected-gradient oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub max_iters: usize,
    /// Stop when the sup-norm change of an iterate falls below this.
    pub step_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { max_iters: 200_000, step_tol: 1e-13 }
    }
}

/// Projection onto `{rho >= 0, sum w rho = 1}` in the `w`-weighted norm:
/// `rho_i = max(z_i - theta, 0)` with `theta` found by bisection.
fn project_simplex(grid: &Grid, z: &[f64]) -> Vec<f64> {
    let mass = |theta: f64| -> f64 { (0..z.len()).map(|i| grid.weight(i) * (z[i] - theta).max(0.0)).sum() };
    let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = z.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0 / grid.length();
    let mut hi = zmax;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    z.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Independent solver for the one-step problem: accelerated projected
/// gradient on the weighted simplex with the first variation
/// `log rho + V + psi_rho` as gradient.
pub fn jko_step_oracle(
    mu: &GridMeasure,
    potential: &Potential,
    h: &RadialProfile,
    config: &OracleConfig,
) -> Result<GridMeasure> {
    let grid = mu.grid();
    grid.check_same(potential.grid())?;
    let x = grid.nodes();
    let gradient = |rho: &[f64]| -> Result<Vec<f64>> {
        let m = GridMeasure::with_zeros(grid, rho.to_vec())?;
        let map = optimal_map(&m, mu)?;
        let psi = grid.cumulative(&potential_gradient(grid, &map, h));
        Ok((0..rho.len())
            .map(|i| rho[i].max(DENSITY_FLOOR).ln() + potential.values()[i] + psi[i])
            .collect())
    };
    // curvature bound: 1/rho from the entropy plus the transport Hessian
    let span = grid.length();
    let max_curv = (0..=64)
        .map(|k| h.second_derivative(span * k as f64 / 64.0))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let rho_floor = 0.5 * mu.min_density();
    let lipschitz = 1.0 / rho_floor + span * span * max_curv / rho_floor;
    let mut step = 1.0 / lipschitz;

    'outer: for _ in 0..8 {
        let mut rho = mu.density().to_vec();
        let mut y = rho.clone();
        let mut t = 1.0f64;
        for _ in 0..config.max_iters {
            let g = gradient(&y)?;
            let z: Vec<f64> = y.iter().zip(&g).map(|(y, g)| y - step * g).collect();
            let next = project_simplex(grid, &z);
            if next.iter().any(|v| !v.is_finite()) {
                step *= 0.5;
                continue 'outer;
            }
            let change = next.iter().zip(&rho).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
            if change < config.step_tol {
                return GridMeasure::with_zeros(grid, next);
            }
            // restart momentum when the step points uphill
            let uphill: f64 = (0..x.len()).map(|i| g[i] * (next[i] - rho[i]) * grid.weight(i)).sum();
            let t_next = if uphill > 0.0 { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let beta = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_next };
            y = next.iter().zip(&rho).map(|(n, r)| n + beta * (n - r)).collect();
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            rho = next;
            t = t_next;
        }
        return GridMeasure::with_zeros(grid, rho);
    }
    Err(Error::SolverFailure { residual: f64::NAN, iterations: config.max_iters })
}

/// Iterates [`jko_step`] from `rho0` and records the trace; stops early at
/// equilibrium.
#[allow(clippy::too_many_arguments)]
pub fn run_flow(
    rho0: &GridMeasure,
    potential: &Potential,
    h: &RadialProfile,
    n_steps: usize,
    config: &JkoConfig,
    system: &CostSystem,
    sigma: &Modulus,
    omega: &Modulus,
) -> Result<FlowTrace> {
    if n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    config.validate()?;
    let eta = GridMeasure::new(potential.grid(), potential.gibbs_density())?;
    let initial = FlowState {
        pressure_gradient: pressure(rho0, potential)?.gradient,
        density: rho0.clone(),
    };
    let mut states = vec![initial];
    let mut steps = Vec::new();
    for k in 0..n_steps {
        let current = &states.last().unwrap().density;
        if current.sup_distance(&eta) < EQUILIBRIUM_THRESHOLD {
            break;
        }
        let result = jko_step(current, potential, h, config).map_err(|e| Error::FlowStep { step: k, source: Box::new(e) })?;
        steps.push(StepInfo {
            transport_cost: result.transport_cost,
            residual: result.residual,
            duality_gap: result.duality_gap,
            inner_iters: result.inner_iters,
            objective: result.objective,
            oracle_distance: result.oracle_distance,
        });
        states.push(FlowState {
            pressure_gradient: result.psi_prime.iter().map(|p| -p).collect(),
            density: result.rho_next,
        });
    }
    FlowTrace::new(states, steps, potential, system, sigma, omega)
}

/// `F(rho) + T_h(rho, mu)`, the one-step objective.
pub fn step_objective(rho: &GridMeasure, mu: &GridMeasure, potential: &Potential, h: &RadialProfile) -> Result<f64> {
    Ok(free_energy(rho, potential)? + transport_cost(rho, mu, h)?)
}
