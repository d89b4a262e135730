//! Radial convex profiles `kappa` (so that `h(z) = kappa(|z|)`), their
//! Legendre conjugates, and the cost triple `(h, H, L)`.
//!
//! Closed-form profiles carry exact conjugates. Tabulated profiles are
//! stored as cubic Hermite interpolants and conjugated by pairing every node
//! `r_j` with its slope `s_j = kappa'(r_j)`: the conjugate table is
//! `(s_j, r_j s_j - kappa(r_j), r_j)`, so conjugating twice is the identity.
//! Profiles without a closed-form conjugate (sums) are conjugated pointwise by
//! inverting `kappa'`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sample count for tabulated profiles.
pub const DEFAULT_TABLE_POINTS: usize = 4096;

/// Relative strictness threshold used by [`verify_cost_axioms`].
const STRICTNESS: f64 = 1e-10;

/// Cubic Hermite interpolant through `(x_j, f_j, f'_j)`, extended linearly
/// beyond its last node.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteTable {
    x: Vec<f64>,
    f: Vec<f64>,
    df: Vec<f64>,
}

impl HermiteTable {
    pub fn new(x: Vec<f64>, f: Vec<f64>, df: Vec<f64>) -> Result<Self> {
        if x.len() < 3 || x.len() != f.len() || x.len() != df.len() {
            return Err(Error::Domain("table needs >= 3 nodes and equal lengths".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("table abscissae must be strictly increasing".into()));
        }
        if x.iter().chain(&f).chain(&df).any(|v| !v.is_finite()) {
            return Err(Error::Domain("table contains non-finite values".into()));
        }
        Ok(Self { x, f, df })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn slopes(&self) -> &[f64] {
        &self.df
    }

    fn locate(&self, t: f64) -> usize {
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k => (k - 1).min(self.x.len() - 2),
        }
    }

    /// Value, first and second derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let last = self.x.len() - 1;
        if t <= self.x[0] {
            return (self.f[0] + self.df[0] * (t - self.x[0]), self.df[0], 0.0);
        }
        if t >= self.x[last] {
            return (self.f[last] + self.df[last] * (t - self.x[last]), self.df[last], 0.0);
        }
        let j = self.locate(t);
        let h = self.x[j + 1] - self.x[j];
        let s = (t - self.x[j]) / h;
        let (f0, f1) = (self.f[j], self.f[j + 1]);
        let (m0, m1) = (self.df[j] * h, self.df[j + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * f0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * f1
            + (s3 - s2) * m1;
        let d = ((6.0 * s2 - 6.0 * s) * f0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * f1
            + (3.0 * s2 - 2.0 * s) * m1)
            / h;
        let dd = ((12.0 * s - 6.0) * f0
            + (6.0 * s - 4.0) * m0
            + (-12.0 * s + 6.0) * f1
            + (6.0 * s - 2.0) * m1)
            / (h * h);
        (v, d, dd)
    }
}

/// Radii `0, r_max * 10^(-6 .. 0)` on a logarithmic scale.
pub fn log_spaced_radii(r_max: f64, n: usize) -> Vec<f64> {
    let n = n.max(4);
    let mut r = Vec::with_capacity(n);
    r.push(0.0);
    let lo = -6.0f64;
    for j in 0..n - 1 {
        let e = lo - lo * j as f64 / (n - 2) as f64;
        r.push(r_max * 10f64.powf(e));
    }
    *r.last_mut().unwrap() = r_max;
    r
}

/// Derivative at `x[j]` of the Lagrange polynomial through the stencil nodes.
fn lagrange_slope(x: &[f64], f: &[f64], j: usize, stencil: std::ops::Range<usize>) -> f64 {
    let xj = x[j];
    let mut d = 0.0;
    for k in stencil.clone() {
        let weight = if k == j {
            stencil.clone().filter(|&m| m != j).map(|m| 1.0 / (xj - x[m])).sum::<f64>()
        } else {
            let mut num = 1.0;
            let mut den = 1.0;
            for m in stencil.clone().filter(|&m| m != k) {
                if m != j {
                    num *= xj - x[m];
                }
                den *= x[k] - x[m];
            }
            num / den
        };
        d += weight * f[k];
    }
    d
}

/// Fourth-order derivative estimates on a nonuniform grid (five-point
/// stencils, shifted near the ends). For convex data each interior estimate
/// is clamped between the neighbouring secant slopes, which keeps the
/// estimates monotone.
fn table_slopes(r: &[f64], k: &[f64]) -> Vec<f64> {
    let n = r.len();
    let width = n.min(5);
    let secant: Vec<f64> = (0..n - 1).map(|j| (k[j + 1] - k[j]) / (r[j + 1] - r[j])).collect();
    let convex = secant.windows(2).all(|w| w[1] >= w[0]);
    (0..n)
        .map(|j| {
            let lo = j.saturating_sub(width / 2).min(n - width);
            let d = lagrange_slope(r, k, j, lo..lo + width);
            if !convex {
                d
            } else if j == 0 {
                d.min(secant[0])
            } else if j == n - 1 {
                d.max(secant[n - 2])
            } else {
                d.clamp(secant[j - 1], secant[j])
            }
        })
        .collect()
}

/// Slope-scan conjugate of a tabulated convex profile, or the witness triple
/// of the first convexity violation.
fn table_conjugate(t: &HermiteTable) -> std::result::Result<HermiteTable, (f64, f64, f64)> {
    let (r, k, d) = (&t.x, &t.f, &t.df);
    for j in 1..r.len() - 1 {
        let left = (k[j] - k[j - 1]) / (r[j] - r[j - 1]);
        let right = (k[j + 1] - k[j]) / (r[j + 1] - r[j]);
        if right < left - 1e-12 * (1.0 + left.abs()) {
            return Err((r[j - 1], r[j], r[j + 1]));
        }
    }
    let mut xs = Vec::with_capacity(r.len());
    let mut fs = Vec::with_capacity(r.len());
    let mut ds = Vec::with_capacity(r.len());
    for j in 0..r.len() {
        let s = d[j];
        if let Some(&prev) = xs.last() {
            if s <= prev {
                // flat stretch of kappa' (a kink of the conjugate): keep the leftmost node
                continue;
            }
        }
        xs.push(s);
        fs.push(r[j] * s - k[j]);
        ds.push(r[j]);
    }
    HermiteTable::new(xs, fs, ds).map_err(|_| (r[0], r[1], r[2]))
}

#[derive(Debug, Clone)]
enum Kind {
    Power(f64),
    Exponential,
    Scaled(f64, Arc<RadialProfile>),
    Multiple(f64, Arc<RadialProfile>),
    Conjugate(Arc<RadialProfile>),
    Sum(Vec<RadialProfile>),
    Table {
        primal: HermiteTable,
        dual: std::result::Result<HermiteTable, (f64, f64, f64)>,
    },
}

/// A radial profile `kappa: [0, inf) -> [0, inf)` with its conjugate
/// `kappa*(s) = sup_r (r s - kappa(r))`.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    kind: Kind,
}

impl RadialProfile {
    /// `r^2 / 2`, self-conjugate.
    pub fn quadratic() -> Self {
        Self::power(2.0).expect("p = 2 is valid")
    }

    /// `r^p / p` for `p > 1`; the conjugate is `s^q / q` with `1/p + 1/q = 1`.
    pub fn power(p: f64) -> Result<Self> {
        if !(p > 1.0) || !p.is_finite() {
            return Err(Error::Domain(format!("power profile needs p > 1, got {p}")));
        }
        Ok(Self { kind: Kind::Power(p) })
    }

    /// `e^r - 1 - r`, with conjugate `(1 + s) log(1 + s) - s`.
    pub fn exponential() -> Self {
        Self { kind: Kind::Exponential }
    }

    /// `tau * kappa(r / tau)`: the time-step family of a cost.
    pub fn scaled(tau: f64, inner: RadialProfile) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Domain(format!("scale needs tau > 0, got {tau}")));
        }
        Ok(Self { kind: Kind::Scaled(tau, Arc::new(inner)) })
    }

    /// `c * kappa(r)`.
    pub fn multiple(c: f64, inner: RadialProfile) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Domain(format!("multiple needs c > 0, got {c}")));
        }
        Ok(Self { kind: Kind::Multiple(c, Arc::new(inner)) })
    }

    /// Pointwise sum; the conjugate is computed by inverting the derivative.
    pub fn sum(terms: Vec<RadialProfile>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Domain("sum of zero profiles".into()));
        }
        Ok(Self { kind: Kind::Sum(terms) })
    }

    /// Tabulated profile from samples; derivatives come from finite differences.
    pub fn table(r: Vec<f64>, kappa: Vec<f64>) -> Result<Self> {
        if r.len() < 3 || r.len() != kappa.len() {
            return Err(Error::Domain("table needs >= 3 matching samples".into()));
        }
        let slopes = table_slopes(&r, &kappa);
        Self::from_hermite(HermiteTable::new(r, kappa, slopes)?)
    }

    /// Tabulated profile with known derivatives.
    pub fn table_with_slopes(r: Vec<f64>, kappa: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        Self::from_hermite(HermiteTable::new(r, kappa, slopes)?)
    }

    fn from_hermite(primal: HermiteTable) -> Result<Self> {
        let dual = table_conjugate(&primal);
        Ok(Self { kind: Kind::Table { primal, dual } })
    }

    /// Samples `kappa` on [`log_spaced_radii`] and tabulates it.
    pub fn sampled(kappa: impl Fn(f64) -> f64, r_max: f64, n: usize) -> Result<Self> {
        let r = log_spaced_radii(r_max, n);
        let k = r.iter().map(|&t| kappa(t)).collect();
        Self::table(r, k)
    }

    /// Whether the conjugate is known in closed form.
    pub fn is_analytic(&self) -> bool {
        match &self.kind {
            Kind::Power(_) | Kind::Exponential => true,
            Kind::Scaled(_, i) | Kind::Multiple(_, i) | Kind::Conjugate(i) => i.is_analytic(),
            Kind::Sum(_) | Kind::Table { .. } => false,
        }
    }

    /// `kappa(r)` for `r >= 0`.
    pub fn value(&self, r: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => r.powf(*p) / p,
            Kind::Exponential => r.exp_m1() - r,
            Kind::Scaled(tau, i) => tau * i.value(r / tau),
            Kind::Multiple(c, i) => c * i.value(r),
            Kind::Conjugate(i) => i.conj_value(r),
            Kind::Sum(ts) => ts.iter().map(|t| t.value(r)).sum(),
            Kind::Table { primal, .. } => primal.eval(r).0,
        }
    }

    /// `kappa'(r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => r.powf(p - 1.0),
            Kind::Exponential => r.exp_m1(),
            Kind::Scaled(tau, i) => i.derivative(r / tau),
            Kind::Multiple(c, i) => c * i.derivative(r),
            Kind::Conjugate(i) => i.conj_derivative(r),
            Kind::Sum(ts) => ts.iter().map(|t| t.derivative(r)).sum(),
            Kind::Table { primal, .. } => primal.eval(r).1,
        }
    }

    /// `kappa''(r)`; may be infinite at the origin.
    pub fn second_derivative(&self, r: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => {
                if *p == 2.0 {
                    1.0
                } else {
                    (p - 1.0) * r.powf(p - 2.0)
                }
            }
            Kind::Exponential => r.exp(),
            Kind::Scaled(tau, i) => i.second_derivative(r / tau) / tau,
            Kind::Multiple(c, i) => c * i.second_derivative(r),
            Kind::Conjugate(i) => 1.0 / i.second_derivative(i.conj_derivative(r)),
            Kind::Sum(ts) => ts.iter().map(|t| t.second_derivative(r)).sum(),
            Kind::Table { primal, .. } => primal.eval(r).2,
        }
    }

    /// `kappa*(s)` for `s >= 0`.
    pub fn conj_value(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => {
                let q = p / (p - 1.0);
                s.powf(q) / q
            }
            Kind::Exponential => (1.0 + s) * s.ln_1p() - s,
            Kind::Scaled(tau, i) => tau * i.conj_value(s),
            Kind::Multiple(c, i) => c * i.conj_value(s / c),
            Kind::Conjugate(i) => i.value(s),
            Kind::Sum(_) => {
                let r = self.invert_derivative(s);
                r * s - self.value(r)
            }
            Kind::Table { dual, .. } => dual.as_ref().map_or(f64::NAN, |d| d.eval(s).0),
        }
    }

    /// `(kappa*)'(s)`, the inverse of `kappa'`.
    pub fn conj_derivative(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Power(p) => s.powf(1.0 / (p - 1.0)),
            Kind::Exponential => s.ln_1p(),
            Kind::Scaled(tau, i) => tau * i.conj_derivative(s),
            Kind::Multiple(c, i) => i.conj_derivative(s / c),
            Kind::Conjugate(i) => i.derivative(s),
            Kind::Sum(_) => self.invert_derivative(s),
            Kind::Table { dual, .. } => dual.as_ref().map_or(f64::NAN, |d| d.eval(s).1),
        }
    }

    /// Solves `kappa'(r) = s` for `r >= 0` by bracketing and bisection.
    fn invert_derivative(&self, s: f64) -> f64 {
        if s <= self.derivative(0.0) {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.derivative(hi) < s {
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
            if self.derivative(mid) < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `h(z) = kappa(|z|)`.
    pub fn eval(&self, z: f64) -> f64 {
        self.value(z.abs())
    }

    /// `h'(z) = kappa'(|z|) sign(z)`, zero at the origin.
    pub fn grad(&self, z: f64) -> f64 {
        if z == 0.0 {
            0.0
        } else {
            self.derivative(z.abs()) * z.signum()
        }
    }

    /// `h*(z) = kappa*(|z|)`.
    pub fn conj_eval(&self, z: f64) -> f64 {
        self.conj_value(z.abs())
    }

    /// `(h*)'(z) = (kappa*)'(|z|) sign(z)`.
    pub fn conj_grad(&self, z: f64) -> f64 {
        if z == 0.0 {
            0.0
        } else {
            self.conj_derivative(z.abs()) * z.signum()
        }
    }

    /// The conjugate profile. Tabulated profiles are conjugated by the slope
    /// scan and fail on non-convex data; every other profile is wrapped so
    /// that values and conjugate values swap roles.
    pub fn conjugate(&self) -> Result<RadialProfile> {
        match &self.kind {
            Kind::Conjugate(inner) => Ok((**inner).clone()),
            Kind::Table { primal, dual } => match dual {
                Ok(d) => Ok(Self {
                    kind: Kind::Table { primal: d.clone(), dual: Ok(primal.clone()) },
                }),
                Err((a, b, c)) => Err(Error::ConvexityViolation(*a, *b, *c)),
            },
            _ => Ok(Self { kind: Kind::Conjugate(Arc::new(self.clone())) }),
        }
    }

    /// Tabulates the profile on `n` log-spaced radii in `[0, r_max]`.
    pub fn tabulate(&self, r_max: f64, n: usize) -> Result<RadialProfile> {
        let r = log_spaced_radii(r_max, n);
        let k = r.iter().map(|&t| self.value(t)).collect();
        let d = r.iter().map(|&t| self.derivative(t)).collect();
        Self::table_with_slopes(r, k, d)
    }
}

/// Result of [`verify_cost_axioms`]. Margins are worst cases over the sample
/// and must be positive for the corresponding property to pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub zero_at_zero: bool,
    pub value_at_zero: f64,
    pub strictly_convex: bool,
    pub convexity_margin: f64,
    pub superlinear: bool,
    pub superlinearity_margin: f64,
    pub samples: usize,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.zero_at_zero && self.strictly_convex && self.superlinear
    }
}

/// Checks `kappa(0) = 0`, strict convexity (relative second differences) and
/// superlinearity (`kappa(r)/r` increasing on the upper half of the sample)
/// on a uniform grid of `[0, r_max]`.
pub fn verify_cost_axioms(profile: &RadialProfile, r_max: f64, n_samples: usize) -> Result<AxiomReport> {
    if !(r_max > 0.0) || n_samples < 64 {
        return Err(Error::Domain(format!(
            "need r_max > 0 and n_samples >= 64, got {r_max}, {n_samples}"
        )));
    }
    let dr = r_max / (n_samples - 1) as f64;
    let r: Vec<f64> = (0..n_samples).map(|i| i as f64 * dr).collect();
    let k: Vec<f64> = r.iter().map(|&t| profile.value(t)).collect();
    let value_at_zero = k[0];
    let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);

    let relative = |lo: f64, hi: f64| {
        let den = lo.abs() + hi.abs();
        if den == 0.0 {
            0.0
        } else {
            (hi - lo) / den
        }
    };
    let convexity_margin = (1..n_samples - 1)
        .map(|j| relative(k[j] - k[j - 1], k[j + 1] - k[j]))
        .fold(f64::INFINITY, f64::min)
        - STRICTNESS;
    let ratios: Vec<f64> = r[n_samples / 2..].iter().zip(&k[n_samples / 2..]).map(|(r, k)| k / r).collect();
    let superlinearity_margin = ratios
        .windows(2)
        .map(|w| relative(w[0], w[1]))
        .fold(f64::INFINITY, f64::min)
        - STRICTNESS;

    Ok(AxiomReport {
        zero_at_zero: value_at_zero.abs() <= 1e-12 * scale,
        value_at_zero,
        strictly_convex: convexity_margin > 0.0,
        convexity_margin,
        superlinear: superlinearity_margin > 0.0,
        superlinearity_margin,
        samples: n_samples,
    })
}

/// Tagged cost description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec {
    Quadratic,
    Power { p: f64 },
    Exponential,
    Scaled { tau: f64, inner: Box<CostSpec> },
    Multiple { c: f64, inner: Box<CostSpec> },
    Conjugate { inner: Box<CostSpec> },
    Sum { terms: Vec<CostSpec> },
    Table { r: Vec<f64>, kappa: Vec<f64> },
}

impl CostSpec {
    pub fn build(&self) -> Result<RadialProfile> {
        match self {
            CostSpec::Quadratic => Ok(RadialProfile::quadratic()),
            CostSpec::Power { p } => RadialProfile::power(*p),
            CostSpec::Exponential => Ok(RadialProfile::exponential()),
            CostSpec::Scaled { tau, inner } => RadialProfile::scaled(*tau, inner.build()?),
            CostSpec::Multiple { c, inner } => RadialProfile::multiple(*c, inner.build()?),
            CostSpec::Conjugate { inner } => inner.build()?.conjugate(),
            CostSpec::Sum { terms } => {
                RadialProfile::sum(terms.iter().map(CostSpec::build).collect::<Result<_>>()?)
            }
            CostSpec::Table { r, kappa } => RadialProfile::table(r.clone(), kappa.clone()),
        }
    }
}

/// The transport cost `h`, the Fisher weight `H` and the Young function `L`
/// (with its conjugate `L*`).
#[derive(Debug, Clone)]
pub struct CostSystem {
    pub h: RadialProfile,
    pub fisher: RadialProfile,
    pub young: RadialProfile,
    pub young_conj: RadialProfile,
}

impl CostSystem {
    /// Validates the axioms on `[0, r_check]`: `h` and `L` strictly convex,
    /// superlinear and zero at zero; `H` convex and zero at zero.
    pub fn new(h: RadialProfile, fisher: RadialProfile, young: RadialProfile, r_check: f64) -> Result<Self> {
        let report = verify_cost_axioms(&h, r_check, 256)?;
        if !report.passed() {
            return Err(Error::Domain(format!("h is not a cost function: {report:?}")));
        }
        let report = verify_cost_axioms(&young, r_check, 256)?;
        if !report.passed() {
            return Err(Error::Domain(format!("L is not convex superlinear: {report:?}")));
        }
        let report = verify_cost_axioms(&fisher, r_check, 256)?;
        if !report.zero_at_zero || report.convexity_margin < -1e-8 {
            return Err(Error::Domain(format!("H is not convex with H(0) = 0: {report:?}")));
        }
        let young_conj = young.conjugate()?;
        Ok(Self { h, fisher, young, young_conj })
    }

    /// `G = H + L`.
    pub fn total(&self) -> RadialProfile {
        RadialProfile::sum(vec![self.fisher.clone(), self.young.clone()]).expect("two terms")
    }
}

/// `alpha(z) = |H'(z)| / |(h*)'(z)|`, with `alpha(0) = 0`.
pub fn alpha(z: f64, system: &CostSystem) -> Result<f64> {
    if z == 0.0 {
        return Ok(0.0);
    }
    let r = z.abs();
    let den = system.h.conj_derivative(r).abs();
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateCost(z));
    }
    Ok(system.fisher.derivative(r).abs() / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn builtins() -> Vec<RadialProfile> {
        vec![
            RadialProfile::quadratic(),
            RadialProfile::power(1.5).unwrap(),
            RadialProfile::power(3.0).unwrap(),
            RadialProfile::power(4.0).unwrap(),
            RadialProfile::exponential(),
            RadialProfile::scaled(0.1, RadialProfile::quadratic()).unwrap(),
            RadialProfile::scaled(0.5, RadialProfile::power(3.0).unwrap()).unwrap(),
            RadialProfile::multiple(2.5, RadialProfile::power(1.5).unwrap()).unwrap(),
            RadialProfile::sum(vec![RadialProfile::quadratic(), RadialProfile::power(4.0).unwrap()]).unwrap(),
        ]
    }

    #[test]
    fn quadratic_is_self_conjugate() {
        let q = RadialProfile::quadratic();
        for s in [0.0, 0.3, 1.0, 7.5] {
            assert!((q.conj_value(s) - s * s / 2.0).abs() < 1e-15);
            assert!((q.conj_derivative(s) - s).abs() < 1e-15);
        }
    }

    #[test]
    fn power_conjugate_pair() {
        let p = 3.0;
        let q = 1.5;
        let prof = RadialProfile::power(p).unwrap();
        for s in [0.1, 1.0, 2.0, 9.0] {
            assert!((prof.conj_value(s) - s.powf(q) / q).abs() < 1e-12);
        }
        assert!(RadialProfile::power(1.0).is_err());
    }

    #[test]
    fn sampled_exponential_conjugate_matches_closed_form() {
        let table = RadialProfile::sampled(|r| r.exp() - 1.0 - r, 5.0, DEFAULT_TABLE_POINTS).unwrap();
        assert!(!table.is_analytic());
        let conj = table.conjugate().unwrap();
        let s_max = 5f64.exp() - 1.0;
        let mut worst = 0.0f64;
        for i in 0..=2000 {
            let s = s_max * i as f64 / 2000.0;
            let exact = (1.0 + s) * s.ln_1p() - s;
            worst = worst.max((conj.value(s) - exact).abs());
        }
        assert!(worst < 1e-5, "worst conjugate error {worst}");
    }

    #[test]
    fn table_double_conjugate_is_identity() {
        let table = RadialProfile::sampled(|r| r * (1.0 + r).ln(), 10.0, 512).unwrap();
        let back = table.conjugate().unwrap().conjugate().unwrap();
        for i in 0..=500 {
            let r = 10.0 * i as f64 / 500.0;
            assert!((back.value(r) - table.value(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn non_convex_table_reports_witness() {
        let r: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let k: Vec<f64> = r.iter().map(|&t| (3.0 * t).sin() + t * t).collect();
        let prof = RadialProfile::table(r, k).unwrap();
        match prof.conjugate() {
            Err(Error::ConvexityViolation(a, b, c)) => assert!(a < b && b < c),
            other => panic!("expected convexity violation, got {other:?}"),
        }
    }

    #[test]
    fn young_equality_on_builtins() {
        for prof in builtins() {
            for i in 1..=200 {
                let r = 3.0 * i as f64 / 200.0;
                let s = prof.derivative(r);
                let lhs = prof.value(r) + prof.conj_value(s);
                let rhs = r * s;
                assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "{prof:?} at r = {r}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn double_conjugate_of_builtins() {
        for prof in builtins() {
            let back = prof.conjugate().unwrap().conjugate().unwrap();
            for i in 0..=100 {
                let r = 3.0 * i as f64 / 100.0;
                assert!((back.value(r) - prof.value(r)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn conjugate_derivative_inverts_derivative() {
        for prof in builtins() {
            for i in 1..=50 {
                let r = 2.0 * i as f64 / 50.0;
                let back = prof.conj_derivative(prof.derivative(r));
                assert!((back - r).abs() < 1e-9 * (1.0 + r), "{prof:?}: {back} vs {r}");
            }
        }
    }

    #[test]
    fn scaled_family() {
        let tau = 0.1;
        let h = RadialProfile::scaled(tau, RadialProfile::quadratic()).unwrap();
        assert!((h.value(0.3) - 0.09 / (2.0 * tau)).abs() < 1e-14);
        assert!((h.conj_value(2.0) - tau * 2.0).abs() < 1e-14);
        assert!((h.second_derivative(1.0) - 1.0 / tau).abs() < 1e-12);
    }

    #[test]
    fn axioms_of_quadratic_and_linear() {
        let q = verify_cost_axioms(&RadialProfile::quadratic(), 10.0, 256).unwrap();
        assert!(q.passed(), "{q:?}");
        let lin = RadialProfile::table((0..64).map(|i| i as f64).collect(), (0..64).map(|i| i as f64).collect())
            .unwrap();
        let l = verify_cost_axioms(&lin, 10.0, 256).unwrap();
        assert!(!l.strictly_convex && l.convexity_margin < 0.0);
        assert!(!l.superlinear && l.superlinearity_margin < 0.0);
        assert!(verify_cost_axioms(&lin, 10.0, 10).is_err());
    }

    #[test]
    fn axioms_of_r_log_one_plus_r() {
        let prof = RadialProfile::sampled(|r| r * r.ln_1p(), 10.0, 1024).unwrap();
        let report = verify_cost_axioms(&prof, 10.0, 512).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    fn quadratic_system(a: f64) -> CostSystem {
        CostSystem::new(
            RadialProfile::quadratic(),
            RadialProfile::multiple(2.0 * a, RadialProfile::quadratic()).unwrap(),
            RadialProfile::quadratic(),
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn alpha_of_quadratic_pair() {
        let sys = quadratic_system(0.7);
        for z in [-3.0, -0.1, 0.5, 4.0] {
            assert!((alpha(z, &sys).unwrap() - 1.4).abs() < 1e-12);
        }
        assert_eq!(alpha(0.0, &sys).unwrap(), 0.0);
    }

    #[test]
    fn alpha_of_matched_powers_is_one() {
        let sys = CostSystem::new(
            RadialProfile::power(3.0).unwrap(),
            RadialProfile::power(1.5).unwrap(),
            RadialProfile::quadratic(),
            10.0,
        )
        .unwrap();
        for z in [0.01, 0.5, 2.0, 11.0] {
            assert!((alpha(z, &sys).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn alpha_is_scale_of_conjugate_multiple() {
        let h = RadialProfile::scaled(0.3, RadialProfile::power(3.0).unwrap()).unwrap();
        let c = 2.75;
        let fisher = RadialProfile::multiple(c, h.conjugate().unwrap()).unwrap();
        let sys = CostSystem::new(h, fisher, RadialProfile::quadratic(), 10.0).unwrap();
        for i in 1..=100 {
            let z = 0.05 * i as f64 * if i % 2 == 0 { 1.0 } else { -1.0 };
            assert!((alpha(z, &sys).unwrap() - c).abs() < 1e-10);
        }
    }

    #[test]
    fn cost_system_rejects_non_cost() {
        let lin = RadialProfile::table((0..64).map(|i| i as f64).collect(), (0..64).map(|i| i as f64).collect())
            .unwrap();
        assert!(CostSystem::new(lin, RadialProfile::quadratic(), RadialProfile::quadratic(), 10.0).is_err());
    }

    #[test]
    fn spec_round_trip_through_json() {
        let spec: CostSpec =
            serde_json::from_str(r#"{"kind":"scaled","tau":0.1,"inner":{"kind":"quadratic"}}"#).unwrap();
        let h = spec.build().unwrap();
        assert!((h.value(1.0) - 5.0).abs() < 1e-12);
    }
}
