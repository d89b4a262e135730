//! Pointwise sufficient conditions for the generalized log-Sobolev
//! inequality and its direct evaluation on test functions.
//!
//! * [`theorem_criterion`]: `L(z) + L*(d) <= sigma(d) + alpha(z) omega(d)`
//!   with `d = (h*)'(|z|)`, for all `z != 0`.
//! * [`simpler_condition`]: `h'(z) z <= sigma(z) + C omega(z)` and the
//!   smallest such `C`.
//! * [`radial_theta_lsi`]: the profile `l(t) = int_0^t theta^{-1}` built from
//!   a comparison function `theta <= sigma + C omega`.
//! * [`lsi_gap`] and [`classical_lsi_limit`]: the inequality itself, evaluated
//!   by quadrature.

use serde::{Deserialize, Serialize};

use crate::costs::{alpha, CostSystem, RadialProfile};
use crate::error::{Error, Result};
use crate::grid::{make_gibbs, Grid, GridMeasure, Potential, PotentialSpec};
use crate::moduli::{Modulus, ModulusKind};

/// Margins above this (negative) level, relative to `1 + |lhs| + |rhs|`,
/// count as satisfied.
pub const CRITERION_TOL: f64 = -1e-10;

/// Ratio between the smallest and largest point of the z-grid.
const Z_RANGE: f64 = 1e-6;

/// Margins of a pointwise inequality on a z-grid.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub z_grid: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `rhs - lhs` per z.
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub worst_z: f64,
    /// Margin at the smallest z, a proxy for the behaviour as `z -> 0`.
    pub small_z_margin: f64,
    /// Smallest admissible constant, for [`simpler_condition`].
    pub minimal_c: Option<f64>,
    /// The resulting log-Sobolev constant `1 + C`, for [`simpler_condition`].
    pub lsi_constant: Option<f64>,
    pub passed: bool,
}

impl CriterionReport {
    fn from_sides(z_grid: Vec<f64>, lhs: Vec<f64>, rhs: Vec<f64>) -> Self {
        let margins: Vec<f64> = rhs.iter().zip(&lhs).map(|(r, l)| r - l).collect();
        let (worst_margin, worst_z) = margins
            .iter()
            .zip(&z_grid)
            .fold((f64::INFINITY, 0.0), |m, (v, z)| if *v < m.0 { (*v, *z) } else { m });
        let worst_margin = if worst_margin.is_nan() { f64::NEG_INFINITY } else { worst_margin };
        let passed = (0..margins.len())
            .all(|i| margins[i] >= CRITERION_TOL * (1.0 + lhs[i].abs() + rhs[i].abs()));
        Self {
            small_z_margin: margins[0],
            passed,
            z_grid,
            lhs,
            rhs,
            margins,
            worst_margin,
            worst_z,
            minimal_c: None,
            lsi_constant: None,
        }
    }
}

/// `n_z` log-spaced points on `[1e-6 z_max, z_max]`.
pub fn log_z_grid(z_max: f64, n_z: usize) -> Result<Vec<f64>> {
    if !(z_max > 0.0) || !z_max.is_finite() || n_z < 2 {
        return Err(Error::Domain(format!("need z_max > 0 and n_z >= 2, got {z_max}, {n_z}")));
    }
    let lo = Z_RANGE.ln();
    Ok((0..n_z)
        .map(|i| z_max * (lo - lo * i as f64 / (n_z - 1) as f64).exp())
        .collect())
}

/// `Lip(V) + max_{r <= b - a} h'(r)`, a bound on the pressure gradients a
/// flow on this grid can produce.
pub fn default_z_max(potential: &Potential, h: &RadialProfile) -> f64 {
    potential.lipschitz() + h.derivative(potential.grid().length())
}

/// Margins of `sigma(d) + alpha(z) omega(d) - L(z) - L*(d)`, `d = (h*)'(z)`.
pub fn theorem_criterion(
    system: &CostSystem,
    sigma: &Modulus,
    omega: &Modulus,
    z_max: f64,
    n_z: usize,
) -> Result<CriterionReport> {
    let z_grid = log_z_grid(z_max, n_z)?;
    let mut lhs = Vec::with_capacity(n_z);
    let mut rhs = Vec::with_capacity(n_z);
    for &z in &z_grid {
        let d = system.h.conj_derivative(z);
        lhs.push(system.young.value(z) + system.young_conj.value(d));
        rhs.push(sigma.value(d) + alpha(z, system)? * omega.value(d));
    }
    Ok(CriterionReport::from_sides(z_grid, lhs, rhs))
}

/// The condition `h'(z) z <= sigma(z) + C omega(z)` with the smallest
/// admissible `C >= 0`. Where `omega` vanishes and `h'(z) z > sigma(z)` no
/// finite `C` exists and the report fails with `minimal_c = None`.
pub fn simpler_condition(
    h: &RadialProfile,
    sigma: &Modulus,
    omega: &Modulus,
    z_max: f64,
    n_z: usize,
) -> Result<CriterionReport> {
    let z_grid = log_z_grid(z_max, n_z)?;
    let mut needed = 0.0f64;
    let mut feasible = true;
    for &z in &z_grid {
        let excess = h.derivative(z) * z - sigma.value(z);
        let w = omega.value(z);
        if w > 0.0 {
            needed = needed.max(excess / w);
        } else if excess > -CRITERION_TOL * (1.0 + sigma.value(z)) {
            feasible = false;
        }
    }
    let c = if feasible { needed.max(0.0) } else { 0.0 };
    let lhs: Vec<f64> = z_grid.iter().map(|&z| h.derivative(z) * z).collect();
    let rhs: Vec<f64> = z_grid.iter().map(|&z| sigma.value(z) + c * omega.value(z)).collect();
    let mut report = CriterionReport::from_sides(z_grid, lhs, rhs);
    if feasible {
        report.minimal_c = Some(c);
        report.lsi_constant = Some(1.0 + c);
    } else {
        report.passed = false;
    }
    Ok(report)
}

/// Verification of `theta <= sigma + C omega` and the constructed profile.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaReport {
    pub t_grid: Vec<f64>,
    /// `sigma(t) + C omega(t) - theta(t)` per t.
    pub margins: Vec<f64>,
    pub worst_margin: f64,
    pub worst_t: f64,
    pub passed: bool,
    /// Sup distance between `l` and the numerical conjugate of `int theta`.
    pub conjugate_error: f64,
    /// Worst `|k(r) + l(theta(r)) - r theta(r)|` with `k = int theta`.
    pub young_error: f64,
}

/// Inverse of a strictly increasing `theta` by bisection, with
/// `theta^{-1}(s) = 0` below `theta(0)`.
fn invert_increasing(theta: &dyn Fn(f64) -> f64, s: f64) -> f64 {
    if s <= theta(0.0) {
        return 0.0;
    }
    let mut hi = 1.0;
    while theta(hi) < s {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if theta(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(int_a^b f)` by Gauss-Legendre with five nodes.
fn gauss5(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
    r * X.iter().zip(&W).map(|(x, w)| w * f(m + r * x)).sum::<f64>()
}

/// Cumulative integrals of `f` over consecutive nodes, starting at zero.
fn cumulative_integral(f: &dyn Fn(f64) -> f64, nodes: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in nodes.windows(2) {
        acc += gauss5(f, w[0], w[1]);
        out.push(acc);
    }
    out
}

/// Checks `theta(t) <= sigma(t) + C omega(t)` on `n_t` points of
/// `[0, t_max]` and builds `l(s) = int_0^s theta^{-1}` on `[0, theta(t_max)]`.
pub fn radial_theta_lsi(
    theta: &dyn Fn(f64) -> f64,
    sigma: &Modulus,
    omega: &Modulus,
    c: f64,
    t_max: f64,
    n_t: usize,
) -> Result<(RadialProfile, ThetaReport)> {
    if !(t_max > 0.0) || n_t < 16 || !(c >= 0.0) {
        return Err(Error::Domain(format!("need t_max > 0, n_t >= 16, C >= 0; got {t_max}, {n_t}, {c}")));
    }
    let t_grid: Vec<f64> = (0..n_t).map(|i| t_max * i as f64 / (n_t - 1) as f64).collect();
    let th: Vec<f64> = t_grid.iter().map(|&t| theta(t)).collect();
    if th[0] < 0.0 || th.iter().any(|v| !v.is_finite()) || th.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("theta must be finite, nonnegative at 0 and strictly increasing".into()));
    }
    let margins: Vec<f64> = t_grid
        .iter()
        .zip(&th)
        .map(|(&t, &v)| sigma.value(t) + c * omega.value(t) - v)
        .collect();
    let (worst_margin, worst_t) = margins
        .iter()
        .zip(&t_grid)
        .skip(1)
        .fold((f64::INFINITY, 0.0), |m, (v, t)| if *v < m.0 { (*v, *t) } else { m });

    // l on a grid that is dense near 0, where theta^{-1} may be singular
    let s_max = th[n_t - 1];
    let s_nodes: Vec<f64> = crate::costs::log_spaced_radii(s_max, crate::costs::DEFAULT_TABLE_POINTS);
    let inv = |s: f64| invert_increasing(theta, s);
    let l_values = cumulative_integral(&inv, &s_nodes);
    let l_slopes: Vec<f64> = s_nodes.iter().map(|&s| inv(s)).collect();
    let l = RadialProfile::table_with_slopes(s_nodes.clone(), l_values, l_slopes)?;

    // k = int theta, whose conjugate must coincide with l
    let r_nodes = crate::costs::log_spaced_radii(t_max, crate::costs::DEFAULT_TABLE_POINTS);
    let k_values = cumulative_integral(theta, &r_nodes);
    let k_slopes: Vec<f64> = r_nodes.iter().map(|&r| theta(r)).collect();
    let kappa = RadialProfile::table_with_slopes(r_nodes.clone(), k_values, k_slopes)?;
    let k_conj = kappa.conjugate()?;
    let conjugate_error = s_nodes
        .iter()
        .filter(|&&s| s >= th[0])
        .map(|&s| (k_conj.value(s) - l.value(s)).abs())
        .fold(0.0f64, f64::max);
    let young_error = r_nodes
        .iter()
        .map(|&r| (kappa.value(r) + l.value(theta(r)) - r * theta(r)).abs())
        .fold(0.0f64, f64::max);

    let report = ThetaReport {
        t_grid,
        margins,
        worst_margin,
        worst_t,
        passed: worst_margin >= CRITERION_TOL,
        conjugate_error,
        young_error,
    };
    Ok((l, report))
}

/// Test functions `g` for the log-Sobolev inequality, given by `log g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    /// `g = e^{t x}`.
    Tilt { t: f64 },
    /// `g = exp(-(x - center)^2 / (2 width^2))`.
    Bump { center: f64, width: f64 },
    /// `g = weight * bump_1 + (1 - weight) * bump_2`.
    Mixture {
        weight: f64,
        first: (f64, f64),
        second: (f64, f64),
    },
    /// `g = 1`.
    Constant,
}

impl TestFunction {
    pub fn log_value(&self, x: f64) -> f64 {
        let bump = |c: f64, w: f64| -(x - c).powi(2) / (2.0 * w * w);
        match *self {
            TestFunction::Tilt { t } => t * x,
            TestFunction::Bump { center, width } => bump(center, width),
            TestFunction::Mixture { weight, first, second } => {
                let a = weight.ln() + bump(first.0, first.1);
                let b = (1.0 - weight).ln() + bump(second.0, second.1);
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
            TestFunction::Constant => 0.0,
        }
    }

    /// Tilts, bumps and two-bump mixtures scaled to a domain of half-width
    /// `scale`.
    pub fn standard_family(scale: f64) -> Vec<TestFunction> {
        let s = scale / 8.0;
        vec![
            TestFunction::Constant,
            TestFunction::Tilt { t: 0.5 / s },
            TestFunction::Tilt { t: -1.0 / s },
            TestFunction::Tilt { t: 0.1 / s },
            TestFunction::Bump { center: 0.5 * s, width: 2.0 * s },
            TestFunction::Bump { center: -s, width: 0.7 * s },
            TestFunction::Mixture { weight: 0.3, first: (-1.5 * s, 0.6 * s), second: (1.0 * s, 0.8 * s) },
            TestFunction::Mixture { weight: 0.5, first: (-0.5 * s, 1.5 * s), second: (2.0 * s, 0.5 * s) },
        ]
    }

    /// Exponential tilts only, the near-equality family.
    pub fn tilt_family(scale: f64) -> Vec<TestFunction> {
        let s = scale / 8.0;
        [0.1, 0.25, 0.5, -0.5, 1.0].iter().map(|t| TestFunction::Tilt { t: t / s }).collect()
    }
}

/// `int G(|(log g)'|) g deta - int g log g deta` for `g` given by nodal
/// log-values, renormalized so that `int g deta = 1`.
pub fn lsi_gap_from_log(log_g: &[f64], eta: &GridMeasure, big_g: &RadialProfile) -> Result<f64> {
    let grid = eta.grid();
    if log_g.len() != grid.len() || log_g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("log g must be finite at every node".into()));
    }
    let max = log_g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_g.iter().map(|l| (l - max).exp()).collect();
    let norm = max + eta.expect(&shifted).ln();
    let log_g: Vec<f64> = log_g.iter().map(|l| l - norm).collect();
    let g: Vec<f64> = log_g.iter().map(|l| l.exp()).collect();
    let dlog = grid.derivative(&log_g);
    let fisher: Vec<f64> = (0..g.len()).map(|i| big_g.eval(dlog[i]) * g[i]).collect();
    let ent: Vec<f64> = (0..g.len()).map(|i| g[i] * log_g[i]).collect();
    Ok(eta.expect(&fisher) - eta.expect(&ent))
}

/// [`lsi_gap_from_log`] for a test function.
pub fn lsi_gap(g: &TestFunction, eta: &GridMeasure, potential: &Potential, big_g: &RadialProfile) -> Result<f64> {
    eta.grid().check_same(potential.grid())?;
    let log_g: Vec<f64> = eta.grid().nodes().iter().map(|&x| g.log_value(x)).collect();
    lsi_gap_from_log(&log_g, eta, big_g)
}

/// The smallest `A` for which the criterion holds with `h = r^2/(2 tau)`,
/// `H = A r^2`, `L = h*` and the moduli of `Lambda x^2 / 2`, by bisection.
pub fn minimal_fisher_weight(lambda: f64, tau: f64) -> Result<f64> {
    let sigma = Modulus::power(2.0, lambda / 2.0, ModulusKind::Convexity)?;
    let omega = Modulus::power(2.0, lambda, ModulusKind::Monotonicity)?;
    let h = RadialProfile::scaled(tau, RadialProfile::quadratic())?;
    let young = RadialProfile::multiple(tau, RadialProfile::quadratic())?;
    let passes = |a: f64| -> Result<bool> {
        let fisher = RadialProfile::multiple(2.0 * a, RadialProfile::quadratic())?;
        let system = CostSystem::new(h.clone(), fisher, young.clone(), 10.0)?;
        Ok(theorem_criterion(&system, &sigma, &omega, 10.0, 64)?.passed)
    };
    let mut hi = 1.0 / lambda;
    while !passes(hi)? {
        hi *= 2.0;
    }
    let mut lo = 1e-12 * hi;
    if passes(lo)? {
        return Ok(0.0);
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Per-`tau` results of [`classical_lsi_limit`].
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalRow {
    pub tau: f64,
    /// Smallest excess over the test family.
    pub excess: Vec<f64>,
    pub minimal_a: f64,
    pub expected_a: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassicalReport {
    pub lambda: f64,
    pub rows: Vec<ClassicalRow>,
    /// `lsi_gap` with `G = r^2 / (2 Lambda)` per test function.
    pub limit: Vec<f64>,
    /// Whether each test function's excess decreases along the sequence.
    pub monotone: bool,
    /// `max |excess(tau_last) - limit|`.
    pub limit_error: f64,
    pub min_limit_gap: f64,
}

/// Evaluates `Ent <= int (|(log g)'|^2 / (2 Lambda) + tau |(log g)'|^2 / 2) g deta`
/// for `V = Lambda x^2 / 2` on `[-8/sqrt(Lambda), 8/sqrt(Lambda)]` along a
/// decreasing `tau` sequence, against the `tau = 0` bound.
pub fn classical_lsi_limit(lambda: f64, taus: &[f64], tests: &[TestFunction], n: usize) -> Result<ClassicalReport> {
    if !(lambda > 0.0) || taus.is_empty() || taus.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Domain("need Lambda > 0 and positive tau values".into()));
    }
    if taus.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Domain("tau values must be strictly decreasing".into()));
    }
    let half = 8.0 / lambda.sqrt();
    let grid = Grid::new(-half, half, n)?;
    let (potential, eta) = make_gibbs(&PotentialSpec::Quadratic { lambda }, &grid)?;
    let base = RadialProfile::multiple(1.0 / lambda, RadialProfile::quadratic())?;
    let limit = tests
        .iter()
        .map(|g| lsi_gap(g, &eta, &potential, &base))
        .collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let big_g = RadialProfile::multiple(1.0 / lambda + tau, RadialProfile::quadratic())?;
        let excess = tests
            .iter()
            .map(|g| lsi_gap(g, &eta, &potential, &big_g))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ClassicalRow {
            tau,
            excess,
            minimal_a: minimal_fisher_weight(lambda, tau)?,
            expected_a: 1.0 / (2.0 * lambda) - tau / 4.0,
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].excess.iter().zip(&w[0].excess).all(|(b, a)| *b <= *a + 1e-14));
    let last = rows.last().expect("nonempty");
    let limit_error = last.excess.iter().zip(&limit).map(|(e, l)| (e - l).abs()).fold(0.0, f64::max);
    let min_limit_gap = limit.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(ClassicalReport { lambda, rows, limit, monotone, limit_error, min_limit_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moduli::ModulusKind;

    fn quad_moduli(lambda: f64) -> (Modulus, Modulus) {
        (
            Modulus::power(2.0, lambda / 2.0, ModulusKind::Convexity).unwrap(),
            Modulus::power(2.0, lambda, ModulusKind::Monotonicity).unwrap(),
        )
    }

    #[test]
    fn gaussian_quadratic_criterion_passes() {
        let tau = 0.05;
        let system = CostSystem::new(
            RadialProfile::scaled(tau, RadialProfile::quadratic()).unwrap(),
            RadialProfile::quadratic(),
            RadialProfile::multiple(tau, RadialProfile::quadratic()).unwrap(),
            10.0,
        )
        .unwrap();
        let (s, w) = quad_moduli(1.0);
        let r = theorem_criterion(&system, &s, &w, 20.0, 200).unwrap();
        assert!(r.passed, "{}", r.worst_margin);
        assert_eq!(r.margins.len(), 200);
    }

    #[test]
    fn dominating_young_function_fails() {
        let system = CostSystem::new(
            RadialProfile::quadratic(),
            RadialProfile::quadratic(),
            RadialProfile::multiple(1e3, RadialProfile::quadratic()).unwrap(),
            10.0,
        )
        .unwrap();
        let s = Modulus::power(2.0, 1e-3, ModulusKind::Convexity).unwrap();
        let w = Modulus::power(2.0, 1e-3, ModulusKind::Monotonicity).unwrap();
        let r = theorem_criterion(&system, &s, &w, 10.0, 100).unwrap();
        assert!(!r.passed && r.worst_margin < 0.0);
    }

    #[test]
    fn simpler_condition_for_quadratics() {
        for lambda in [0.5, 1.0, 2.0, 4.0] {
            let (s, w) = quad_moduli(lambda);
            let r = simpler_condition(&RadialProfile::quadratic(), &s, &w, 10.0, 100).unwrap();
            let expected = (1.0 / lambda - 0.5f64).max(0.0);
            assert!((r.minimal_c.unwrap() - expected).abs() < 1e-12, "{lambda}: {:?}", r.minimal_c);
            assert!(r.passed);
        }
        let (s, w) = quad_moduli(1.0);
        let r = simpler_condition(&RadialProfile::quadratic(), &s, &w, 10.0, 100).unwrap();
        assert!((r.lsi_constant.unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn simpler_condition_saturated_and_infeasible() {
        let h = RadialProfile::power(3.0).unwrap();
        // h'(z) z = z^3
        let s = Modulus::power(3.0, 1.0, ModulusKind::Convexity).unwrap();
        let w = Modulus::power(2.0, 1.0, ModulusKind::Monotonicity).unwrap();
        assert!(simpler_condition(&h, &s, &w, 5.0, 50).unwrap().minimal_c.unwrap() < 1e-12);
        let cube = RadialProfile::multiple(3.0, RadialProfile::power(3.0).unwrap()).unwrap();
        let s3 = Modulus::power(3.0, 1.0, ModulusKind::Convexity).unwrap();
        let w3 = Modulus::power(3.0, 1.0, ModulusKind::Monotonicity).unwrap();
        let r = simpler_condition(&cube, &s3, &w3, 5.0, 50).unwrap();
        assert!((r.minimal_c.unwrap() - 2.0).abs() < 1e-12);
        let zero = Modulus::zero(ModulusKind::Monotonicity);
        let r = simpler_condition(&cube, &s3, &zero, 5.0, 50).unwrap();
        assert!(r.minimal_c.is_none() && !r.passed);
    }

    #[test]
    fn theta_identity_gives_half_square() {
        let (s, w) = quad_moduli(1.0);
        let (l, report) = radial_theta_lsi(&|t| t, &s, &w, 1.0, 4.0, 200).unwrap();
        for s in [0.0, 0.5, 1.0, 3.9] {
            assert!((l.value(s) - s * s / 2.0).abs() < 1e-9);
        }
        assert!(report.conjugate_error < 1e-6 && report.young_error < 1e-6, "{report:?}");
    }

    #[test]
    fn theta_cube_gives_four_thirds_power() {
        let (s, w) = quad_moduli(1.0);
        let (l, report) = radial_theta_lsi(&|t: f64| t.powi(3), &s, &w, 10.0, 2.0, 200).unwrap();
        for s in [0.001f64, 0.3, 1.0, 7.9] {
            let exact = 0.75 * s.powf(4.0 / 3.0);
            assert!((l.value(s) - exact).abs() < 1e-7, "{s}: {} vs {exact}", l.value(s));
        }
        assert!(report.young_error < 1e-6, "{report:?}");
    }

    #[test]
    fn theta_hypothesis_fails_near_zero() {
        let lambda = 2.0;
        let (s, w) = quad_moduli(lambda);
        let (_, report) = radial_theta_lsi(&|t| lambda * t, &s, &w, 0.5, 3.0, 301).unwrap();
        assert!(!report.passed);
        assert!(report.worst_t < 1.0);
        assert!(radial_theta_lsi(&|t: f64| (3.0 * t).sin(), &s, &w, 0.5, 3.0, 301).is_err());
    }

    #[test]
    fn gaussian_lsi_gap_at_tilts() {
        let grid = Grid::new(-6.0, 6.0, 2001).unwrap();
        let (v, eta) = make_gibbs(&PotentialSpec::Quadratic { lambda: 1.0 }, &grid).unwrap();
        let t = 0.5;
        let half = RadialProfile::quadratic();
        let gap = lsi_gap(&TestFunction::Tilt { t }, &eta, &v, &half).unwrap();
        assert!(gap.abs() < 1e-5, "{gap}");
        let full = RadialProfile::multiple(2.0, RadialProfile::quadratic()).unwrap();
        let gap = lsi_gap(&TestFunction::Tilt { t }, &eta, &v, &full).unwrap();
        assert!((gap - t * t / 2.0).abs() < 1e-5, "{gap}");
        assert!(lsi_gap(&TestFunction::Constant, &eta, &v, &half).unwrap().abs() < 1e-12);
    }

    #[test]
    fn minimal_weight_matches_closed_form() {
        for (lambda, tau) in [(1.0, 0.1), (2.0, 0.01), (0.5, 0.5)] {
            let a = minimal_fisher_weight(lambda, tau).unwrap();
            let expected = 1.0 / (2.0 * lambda) - tau / 4.0;
            assert!((a - expected).abs() < 1e-9, "{a} vs {expected}");
        }
    }

    #[test]
    fn classical_limit_for_unit_lambda() {
        let taus = [1.0, 0.1, 0.01, 0.001];
        let tests = vec![TestFunction::Constant, TestFunction::Tilt { t: 0.5 }];
        let r = classical_lsi_limit(1.0, &taus, &tests, 1601).unwrap();
        assert!(r.monotone);
        assert!(r.limit_error < 1e-3);
        assert!(r.rows.iter().all(|row| row.excess[0].abs() < 1e-12));
    }
}
