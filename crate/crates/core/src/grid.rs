//! Uniform 1D grids, discretized probability densities and the free-energy
//! functionals evaluated on them.
//!
//! All integrals use the trapezoid rule on the grid nodes. Densities are
//! renormalized on construction so that their trapezoid mass is exactly one
//! (up to rounding), and potentials are shifted so that `exp(-V)` is itself a
//! probability density: the Gibbs measure `eta`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard used only to keep `ln` finite; never reached by well-posed inputs.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Smallest admissible number of nodes.
pub const MIN_NODES: usize = 16;

/// A uniform grid on `[a, b]` with `n` nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
    #[serde(skip)]
    nodes: Vec<f64>,
    #[serde(skip)]
    dx: f64,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b && self.n == other.n
    }
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidGrid(format!("need finite a < b, got [{a}, {b}]")));
        }
        if n < MIN_NODES {
            return Err(Error::InvalidGrid(format!("need n >= {MIN_NODES}, got {n}")));
        }
        let dx = (b - a) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| a + i as f64 * dx).collect();
        nodes[n - 1] = b;
        Ok(Self { a, b, n, nodes, dx })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// The grid with `2n - 1` nodes sharing every node of `self`.
    pub fn refined(&self) -> Self {
        Self::new(self.a, self.b, 2 * self.n - 1).expect("refinement of a valid grid")
    }

    /// Trapezoid quadrature weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.dx
        } else {
            self.dx
        }
    }

    /// Trapezoid rule for nodal values `f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        let inner: f64 = f[1..self.n - 1].iter().sum();
        self.dx * (inner + 0.5 * (f[0] + f[self.n - 1]))
    }

    /// Trapezoid rule for the product `f * g`.
    pub fn integrate_product(&self, f: &[f64], g: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.n);
        debug_assert_eq!(g.len(), self.n);
        (0..self.n).map(|i| self.weight(i) * f[i] * g[i]).sum()
    }

    /// Cumulative trapezoid integral from the left endpoint; entry 0 is zero.
    pub fn cumulative(&self, f: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n);
        let mut acc = 0.0;
        out.push(0.0);
        for i in 1..self.n {
            acc += 0.5 * self.dx * (f[i - 1] + f[i]);
            out.push(acc);
        }
        out
    }

    /// Second-order finite-difference derivative: central in the interior,
    /// three-point one-sided at the endpoints.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let n = self.n;
        let h = self.dx;
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
        }
        d[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
        d[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
        d
    }

    /// Linear interpolation of nodal values at an arbitrary point (clamped).
    pub fn interpolate(&self, f: &[f64], x: f64) -> f64 {
        let t = ((x - self.a) / self.dx).clamp(0.0, (self.n - 1) as f64);
        let i = (t.floor() as usize).min(self.n - 2);
        let s = t - i as f64;
        (1.0 - s) * f[i] + s * f[i + 1]
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "[{}, {}; {}] vs [{}, {}; {}]",
                self.a, self.b, self.n, other.a, other.b, other.n
            )))
        }
    }
}

/// A probability density sampled on a [`Grid`].
///
/// Measures built with [`GridMeasure::new`] are strictly positive. Measures
/// built with [`GridMeasure::with_zeros`] may vanish on part of the grid and
/// are meant for transport computations only.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Grid,
    density: Vec<f64>,
}

impl GridMeasure {
    /// Strictly positive density, renormalized to unit trapezoid mass.
    pub fn new(grid: &Grid, density: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = density.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity(format!("density[{i}] = {v} is not strictly positive")));
        }
        Self::with_zeros(grid, density)
    }

    /// Nonnegative density with positive mass, renormalized.
    pub fn with_zeros(grid: &Grid, mut density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.len() {
            return Err(Error::InvalidDensity(format!(
                "expected {} values, got {}",
                grid.len(),
                density.len()
            )));
        }
        if let Some((i, v)) = density.iter().enumerate().find(|(_, v)| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidDensity(format!("density[{i}] = {v} is negative or non-finite")));
        }
        let mass = grid.integrate(&density);
        if !(mass > 0.0) {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        density.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { grid: grid.clone(), density })
    }

    /// Density proportional to `f(x)` at the nodes.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().iter().map(|&x| f(x)).collect())
    }

    /// Density proportional to `exp(log_f(x))`, shifted for stability.
    pub fn from_log_fn(grid: &Grid, log_f: impl Fn(f64) -> f64) -> Result<Self> {
        let logs: Vec<f64> = grid.nodes().iter().map(|&x| log_f(x)).collect();
        Self::from_log_density(grid, &logs)
    }

    /// Density proportional to `exp(logs)`.
    pub fn from_log_density(grid: &Grid, logs: &[f64]) -> Result<Self> {
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::InvalidDensity("non-finite log-density".into()));
        }
        Self::new(grid, logs.iter().map(|l| (l - max).exp().max(DENSITY_FLOOR)).collect())
    }

    pub fn uniform(grid: &Grid) -> Self {
        Self::new(grid, vec![1.0; grid.len()]).expect("uniform density is valid")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.density)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.density.iter().all(|&v| v > 0.0)
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().cloned().fold(0.0, f64::max)
    }

    pub fn log_density(&self) -> Vec<f64> {
        self.density.iter().map(|&v| v.max(DENSITY_FLOOR).ln()).collect()
    }

    /// `sup_i |self_i - other_i|`.
    pub fn sup_distance(&self, other: &GridMeasure) -> f64 {
        self.density
            .iter()
            .zip(&other.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Expectation of nodal values `f` under this measure.
    pub fn expect(&self, f: &[f64]) -> f64 {
        self.grid.integrate_product(&self.density, f)
    }

    /// Cumulative distribution function at the nodes, pinned to `[0, 1]`.
    pub fn cdf(&self) -> Vec<f64> {
        let mut c = self.grid.cumulative(&self.density);
        let total = *c.last().unwrap();
        c.iter_mut().for_each(|v| *v = (*v / total).clamp(0.0, 1.0));
        c
    }
}

/// Tagged potential description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// `V(x) = lambda * x^2 / 2`.
    Quadratic { lambda: f64 },
    /// `V(x) = coeff * |x|^p / p`.
    Power { p: f64, coeff: f64 },
    /// `V(x) = slope * x`.
    Linear { slope: f64 },
    /// Nodal values; the gradient comes from finite differences.
    Table { values: Vec<f64> },
}

impl PotentialSpec {
    fn evaluate(&self, grid: &Grid) -> Result<(Vec<f64>, Vec<f64>)> {
        let xs = grid.nodes();
        let (values, gradient): (Vec<f64>, Vec<f64>) = match *self {
            PotentialSpec::Quadratic { lambda } => {
                xs.iter().map(|&x| (0.5 * lambda * x * x, lambda * x)).unzip()
            }
            PotentialSpec::Power { p, coeff } => {
                if !(p >= 1.0) {
                    return Err(Error::InvalidPotential(format!("power potential needs p >= 1, got {p}")));
                }
                xs.iter()
                    .map(|&x| {
                        let ax = x.abs();
                        (coeff * ax.powf(p) / p, coeff * ax.powf(p - 1.0) * x.signum())
                    })
                    .unzip()
            }
            PotentialSpec::Linear { slope } => xs.iter().map(|&x| (slope * x, slope)).unzip(),
            PotentialSpec::Table { ref values } => {
                if values.len() != grid.len() {
                    return Err(Error::InvalidPotential(format!(
                        "table has {} values for a {}-node grid",
                        values.len(),
                        grid.len()
                    )));
                }
                (values.clone(), grid.derivative(values))
            }
        };
        if let Some(i) = values.iter().chain(&gradient).position(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential(format!("non-finite value at index {}", i % grid.len())));
        }
        Ok((values, gradient))
    }
}

/// A potential `V` on a grid, shifted so that `exp(-V)` has unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    grid: Grid,
    values: Vec<f64>,
    gradient: Vec<f64>,
    normalization_shift: f64,
}

impl Potential {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    /// `log Z`, the amount added to the raw potential.
    pub fn normalization_shift(&self) -> f64 {
        self.normalization_shift
    }

    /// `max |V'|` over the nodes.
    pub fn lipschitz(&self) -> f64 {
        self.gradient.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    /// Nodal values of `exp(-V)`.
    pub fn gibbs_density(&self) -> Vec<f64> {
        self.values.iter().map(|v| (-v).exp()).collect()
    }
}

/// Normalizes `V` so that `exp(-V)` integrates to one and returns it with
/// the Gibbs measure `eta = exp(-V)`.
pub fn make_gibbs(spec: &PotentialSpec, grid: &Grid) -> Result<(Potential, GridMeasure)> {
    let (raw, gradient) = spec.evaluate(grid)?;
    make_gibbs_from_values(grid, raw, gradient)
}

/// As [`make_gibbs`] but from explicit nodal values and gradient.
pub fn make_gibbs_from_values(
    grid: &Grid,
    mut values: Vec<f64>,
    gradient: Vec<f64>,
) -> Result<(Potential, GridMeasure)> {
    if values.len() != grid.len() || gradient.len() != grid.len() {
        return Err(Error::InvalidPotential("length does not match grid".into()));
    }
    if values.iter().chain(&gradient).any(|v| !v.is_finite()) {
        return Err(Error::InvalidPotential("non-finite values".into()));
    }
    let vmin = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let scaled: Vec<f64> = values.iter().map(|v| (vmin - v).exp()).collect();
    let shift = grid.integrate(&scaled).ln() - vmin;
    values.iter_mut().for_each(|v| *v += shift);
    // one more pass absorbs the rounding left by the first shift
    let residual = grid.integrate(&values.iter().map(|v| (-v).exp()).collect::<Vec<_>>()).ln();
    values.iter_mut().for_each(|v| *v += residual);
    let potential = Potential {
        grid: grid.clone(),
        values,
        gradient,
        normalization_shift: shift + residual,
    };
    let eta = GridMeasure::new(grid, potential.gibbs_density())?;
    Ok((potential, eta))
}

/// `int rho log rho`, with `0 log 0 = 0`.
pub fn entropy(rho: &GridMeasure) -> f64 {
    let g = rho.grid();
    rho.density
        .iter()
        .enumerate()
        .map(|(i, &r)| if r > 0.0 { g.weight(i) * r * r.ln() } else { 0.0 })
        .sum()
}

/// `F(rho) = int rho log rho + int V d rho`.
///
/// With a normalized potential this is the relative entropy of `rho` with
/// respect to `eta`; it is accumulated as `sum w (rho log(rho/eta) - rho + eta)`,
/// whose terms are all nonnegative.
pub fn free_energy(rho: &GridMeasure, potential: &Potential) -> Result<f64> {
    rho.grid().check_same(potential.grid())?;
    let g = rho.grid();
    Ok(rho
        .density
        .iter()
        .zip(&potential.values)
        .enumerate()
        .map(|(i, (&r, &v))| {
            let eta = (-v).exp();
            let term = if r > 0.0 { eta * entropy_kernel(r.ln() + v) } else { eta };
            g.weight(i) * term
        })
        .sum())
}

/// `e^u (u - 1) + 1 >= 0`, the relative-entropy integrand per unit of `eta`;
/// a Taylor series near zero keeps it accurate where it is `~ u^2 / 2`.
fn entropy_kernel(u: f64) -> f64 {
    if u.abs() < 0.05 {
        // sum_{m >= 2} (m - 1) u^m / m!
        let mut term = u;
        let mut sum = 0.0;
        for m in 2..=12 {
            term *= u / m as f64;
            sum += (m - 1) as f64 * term;
        }
        sum
    } else {
        u.exp() * (u - 1.0) + 1.0
    }
}

/// The pressure `u = log rho + V` and its finite-difference gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Pressure {
    pub values: Vec<f64>,
    pub gradient: Vec<f64>,
}

pub fn pressure(rho: &GridMeasure, potential: &Potential) -> Result<Pressure> {
    rho.grid().check_same(potential.grid())?;
    let values: Vec<f64> = rho
        .log_density()
        .iter()
        .zip(&potential.values)
        .map(|(l, v)| l + v)
        .collect();
    let gradient = rho.grid().derivative(&values);
    Ok(Pressure { values, gradient })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        assert!(Grid::new(1.0, 0.0, 32).is_err());
        assert!(Grid::new(0.0, 1.0, 8).is_err());
        let g = unit(101);
        assert!((g.dx() - 0.01).abs() < 1e-15);
        assert_eq!(g.nodes()[100], 1.0);
    }

    #[test]
    fn measures_are_normalized() {
        let g = unit(64);
        let m = GridMeasure::from_fn(&g, |x| 1.0 + x * x).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-12);
        assert!(GridMeasure::new(&g, vec![0.0; 64]).is_err());
        let mut d = vec![1.0; 64];
        d[3] = 0.0;
        assert!(GridMeasure::new(&g, d.clone()).is_err());
        assert!(GridMeasure::with_zeros(&g, d).is_ok());
    }

    #[test]
    fn gibbs_of_zero_potential_is_uniform() {
        let g = unit(101);
        let (v, eta) = make_gibbs(&PotentialSpec::Quadratic { lambda: 0.0 }, &g).unwrap();
        assert!(v.normalization_shift().abs() < 1e-14);
        assert!(eta.density().iter().all(|d| (d - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gibbs_of_linear_potential() {
        let g = unit(1001);
        let (v, eta) = make_gibbs(&PotentialSpec::Linear { slope: 1.0 }, &g).unwrap();
        let z = 1.0 - (-1.0f64).exp();
        // trapezoid error of int e^{-x} is dx^2/12 * (f'(1) - f'(0))
        assert!((v.normalization_shift() - z.ln()).abs() < 1e-7);
        for (x, d) in g.nodes().iter().zip(eta.density()) {
            assert!((d - (-x).exp() / z).abs() < 2e-7);
        }
        let check = g.integrate(&v.gibbs_density());
        assert!((check - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gibbs_of_gaussian_potential() {
        let g = Grid::new(-4.0, 4.0, 801).unwrap();
        let (v, _) = make_gibbs(&PotentialSpec::Quadratic { lambda: 1.0 }, &g).unwrap();
        // truncated mass of the standard normal outside [-4, 4] is 6.334e-5
        let expected = (2.0 * std::f64::consts::PI).sqrt().ln() + (1.0 - 6.334248366623996e-5f64).ln();
        assert!((v.normalization_shift() - expected).abs() < 1e-7);
    }

    #[test]
    fn entropy_of_uniform_measures() {
        assert!(entropy(&GridMeasure::uniform(&unit(101))).abs() < 1e-14);
        let g2 = Grid::new(0.0, 2.0, 101).unwrap();
        assert!((entropy(&GridMeasure::uniform(&g2)) + 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn free_energy_of_uniform_against_linear_gibbs() {
        let g = unit(2001);
        let (v, eta) = make_gibbs(&PotentialSpec::Linear { slope: 1.0 }, &g).unwrap();
        let rho = GridMeasure::uniform(&g);
        let expected = 0.5 + (1.0 - (-1.0f64).exp()).ln();
        assert!((free_energy(&rho, &v).unwrap() - expected).abs() < 1e-7);
        assert!(free_energy(&eta, &v).unwrap().abs() < 1e-12);
    }

    #[test]
    fn free_energy_rejects_mismatched_grids() {
        let (v, _) = make_gibbs(&PotentialSpec::Linear { slope: 1.0 }, &unit(64)).unwrap();
        assert!(matches!(
            free_energy(&GridMeasure::uniform(&unit(65)), &v),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn pressure_of_gibbs_vanishes() {
        let g = Grid::new(-3.0, 3.0, 301).unwrap();
        let (v, eta) = make_gibbs(&PotentialSpec::Power { p: 3.0, coeff: 1.0 }, &g).unwrap();
        let p = pressure(&eta, &v).unwrap();
        assert!(p.values.iter().all(|u| u.abs() < 1e-12));
        assert!(p.gradient.iter().all(|u| u.abs() < 1e-9));
    }

    #[test]
    fn pressure_of_uniform_against_linear_gibbs() {
        let g = unit(201);
        let (v, _) = make_gibbs(&PotentialSpec::Linear { slope: 1.0 }, &g).unwrap();
        let p = pressure(&GridMeasure::uniform(&g), &v).unwrap();
        let shift = v.normalization_shift();
        for ((x, u), du) in g.nodes().iter().zip(&p.values).zip(&p.gradient) {
            assert!((u - (x + shift)).abs() < 1e-12);
            assert!((du - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn table_potential_requires_matching_length() {
        let g = unit(32);
        assert!(make_gibbs(&PotentialSpec::Table { values: vec![0.0; 31] }, &g).is_err());
        let bad = PotentialSpec::Table { values: vec![f64::NAN; 32] };
        assert!(matches!(make_gibbs(&bad, &g), Err(Error::InvalidPotential(_))));
    }
}
