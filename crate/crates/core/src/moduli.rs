//! Moduli of convexity and monotonicity for a potential, their brute-force
//! validation on grid pairs, and the constants of the `p`-power modulus.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Potential;

/// Bracket width for the scalar searches in [`ppower_c`] and [`ppower_tp`].
const SCALAR_TOL: f64 = 1e-12;

/// Relative size below which a pair margin is treated as exact equality.
const ROUNDING_SLACK: f64 = 64.0 * f64::EPSILON;

/// Which inequality a modulus certifies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusKind {
    /// `V(x) >= V(y) + V'(y)(x - y) + sigma(x - y)`.
    Convexity,
    /// `(V'(x) - V'(y))(x - y) >= omega(x - y)`.
    Monotonicity,
}

/// Tagged radial modulus profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusSpec {
    /// `coeff * t^p`.
    Power { p: f64, coeff: f64 },
    /// Piecewise-linear through `(r_j, values_j)`, extended linearly.
    Table { r: Vec<f64>, values: Vec<f64> },
    /// The trivial modulus.
    Zero,
}

/// A radial modulus `t -> profile(t)` with `profile(0) = 0`, `profile >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Modulus {
    spec: ModulusSpec,
    kind: ModulusKind,
}

impl Modulus {
    pub fn new(spec: ModulusSpec, kind: ModulusKind) -> Result<Self> {
        match &spec {
            ModulusSpec::Power { p, coeff } => {
                if !(*p > 0.0) || !(*coeff >= 0.0) || !p.is_finite() || !coeff.is_finite() {
                    return Err(Error::Domain(format!("power modulus needs p > 0, coeff >= 0; got {p}, {coeff}")));
                }
            }
            ModulusSpec::Table { r, values } => {
                if r.len() < 2 || r.len() != values.len() {
                    return Err(Error::Domain("modulus table needs >= 2 matching samples".into()));
                }
                if r[0] != 0.0 || values[0] != 0.0 {
                    return Err(Error::Domain("modulus table must start at (0, 0)".into()));
                }
                if r.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Domain("modulus radii must be strictly increasing".into()));
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Domain("modulus values must be finite and nonnegative".into()));
                }
            }
            ModulusSpec::Zero => {}
        }
        Ok(Self { spec, kind })
    }

    /// `coeff * t^p`.
    pub fn power(p: f64, coeff: f64, kind: ModulusKind) -> Result<Self> {
        Self::new(ModulusSpec::Power { p, coeff }, kind)
    }

    pub fn zero(kind: ModulusKind) -> Self {
        Self { spec: ModulusSpec::Zero, kind }
    }

    pub fn kind(&self) -> ModulusKind {
        self.kind
    }

    pub fn spec(&self) -> &ModulusSpec {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        match &self.spec {
            ModulusSpec::Zero => true,
            ModulusSpec::Power { coeff, .. } => *coeff == 0.0,
            ModulusSpec::Table { values, .. } => values.iter().all(|v| *v == 0.0),
        }
    }

    /// Profile value at radius `t >= 0`.
    pub fn value(&self, t: f64) -> f64 {
        let t = t.abs();
        match &self.spec {
            ModulusSpec::Power { p, coeff } => coeff * t.powf(*p),
            ModulusSpec::Zero => 0.0,
            ModulusSpec::Table { r, values } => {
                let n = r.len();
                let j = r.partition_point(|&v| v <= t).clamp(1, n - 1);
                let (r0, r1) = (r[j - 1], r[j]);
                let (v0, v1) = (values[j - 1], values[j]);
                (v0 + (v1 - v0) * (t - r0) / (r1 - r0)).max(0.0)
            }
        }
    }

    /// The same profile multiplied by `c >= 0`, possibly of another kind.
    pub fn scaled(&self, c: f64, kind: ModulusKind) -> Result<Self> {
        let spec = match &self.spec {
            ModulusSpec::Power { p, coeff } => ModulusSpec::Power { p: *p, coeff: c * coeff },
            ModulusSpec::Zero => ModulusSpec::Zero,
            ModulusSpec::Table { r, values } => ModulusSpec::Table {
                r: r.clone(),
                values: values.iter().map(|v| c * v).collect(),
            },
        };
        Self::new(spec, kind)
    }
}

/// Worst margin of a modulus over sampled grid pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusReport {
    pub min_margin: f64,
    pub witness_pair: (f64, f64),
    pub samples: usize,
}

impl ModulusReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.min_margin >= -tol
    }
}

/// Evenly spaced node indices, `m` of them (or all nodes if fewer).
fn subsample(n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..m)
        .map(|k| ((k as f64) * (n - 1) as f64 / (m - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Minimum over ordered pairs of distinct subsampled nodes of the modulus
/// margin: `D_V(x:y) - sigma(|x - y|)` or
/// `(V'(x) - V'(y))(x - y) - omega(|x - y|)`.
pub fn verify_modulus(potential: &Potential, modulus: &Modulus, pair_samples: usize) -> Result<ModulusReport> {
    if pair_samples < 1000 {
        return Err(Error::Domain(format!("need at least 1000 pair samples, got {pair_samples}")));
    }
    let grid = potential.grid();
    let x = grid.nodes();
    let v = potential.values();
    let dv = potential.gradient();
    let per_axis = ((pair_samples as f64).sqrt().ceil() as usize).max(2);
    let idx = subsample(grid.len(), per_axis);

    let mut min_margin = f64::INFINITY;
    let mut witness_pair = (x[idx[0]], x[idx[0]]);
    let mut samples = 0;
    for &i in &idx {
        for &j in &idx {
            if i == j {
                continue;
            }
            let d = x[i] - x[j];
            let lhs = match modulus.kind() {
                ModulusKind::Convexity => v[i] - v[j] - dv[j] * d,
                ModulusKind::Monotonicity => (dv[i] - dv[j]) * d,
            };
            let bound = modulus.value(d);
            let mut margin = lhs - bound;
            // equality cases (such as x = -y for power moduli) round to either sign
            if margin.abs() <= ROUNDING_SLACK * (lhs.abs() + bound.abs()) {
                margin = 0.0;
            }
            samples += 1;
            if margin < min_margin {
                min_margin = margin;
                witness_pair = (x[i], x[j]);
            }
        }
    }
    Ok(ModulusReport { min_margin, witness_pair, samples })
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(Error::Domain(format!("p-power constants need p >= 2, got {p}")));
    }
    Ok(())
}

/// `f(t) = |t+1|^p/p - |t|^p/p - |t|^(p-2) t` on `[-1, 0]`.
pub fn ppower_objective(p: f64, t: f64) -> f64 {
    let a = (t + 1.0).abs();
    let b = t.abs();
    a.powf(p) / p - b.powf(p) / p - b.powf(p - 2.0) * t
}

/// `f'(t)` for `t` in `[-1, 0]`.
fn ppower_slope(p: f64, t: f64) -> f64 {
    let a = t + 1.0;
    let b = t.abs();
    a.abs().powf(p - 2.0) * a - b.powf(p - 2.0) * t - (p - 1.0) * b.powf(p - 2.0)
}

/// `C(p) = min_{t in [-1, 0]} f(t)`, by golden-section search.
pub fn ppower_c(p: f64) -> Result<f64> {
    check_p(p)?;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (-1.0f64, 0.0f64);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (ppower_objective(p, c), ppower_objective(p, d));
    while hi - lo > SCALAR_TOL {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = ppower_objective(p, c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = ppower_objective(p, d);
        }
    }
    Ok(ppower_objective(p, 0.5 * (lo + hi)).min(fc).min(fd))
}

/// The minimizer `t_p` of [`ppower_objective`], the root of `f'` in `[-1, 0]`
/// found by bisection. For `p = 2` the objective is constant and `-1/2` is
/// returned.
pub fn ppower_tp(p: f64) -> Result<f64> {
    check_p(p)?;
    if p == 2.0 {
        return Ok(-0.5);
    }
    let (mut lo, mut hi) = (-1.0f64, 0.0f64);
    while hi - lo > SCALAR_TOL {
        let mid = 0.5 * (lo + hi);
        if ppower_slope(p, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
