//! Exact one-dimensional optimal transport for strictly convex radial costs.
//!
//! The optimal plan is the monotone rearrangement `T = Q_nu o F_mu`. Densities
//! are linear between nodes, so each CDF is piecewise quadratic and its
//! inverse is found cell by cell from a quadratic equation. Kantorovich
//! potentials follow from `psi' = h'(x - T(x))` and a discrete c-transform,
//! and the duality gap certifies their accuracy.

use serde::Serialize;

use crate::costs::RadialProfile;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridMeasure};

/// Piecewise-quadratic CDF of a nodal density with linear interpolation.
#[derive(Debug, Clone)]
pub struct Cdf {
    a: f64,
    dx: f64,
    density: Vec<f64>,
    levels: Vec<f64>,
}

impl Cdf {
    pub fn new(m: &GridMeasure) -> Self {
        let grid = m.grid();
        let mass = m.mass();
        let density: Vec<f64> = m.density().iter().map(|r| r / mass).collect();
        let mut levels = grid.cumulative(&density);
        for l in levels.iter_mut() {
            *l = l.clamp(0.0, 1.0);
        }
        *levels.last_mut().unwrap() = 1.0;
        Self { a: grid.a(), dx: grid.dx(), density, levels }
    }

    /// CDF values at the grid nodes.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    fn cell_of(&self, x: f64) -> (usize, f64) {
        let n = self.density.len();
        let t = ((x - self.a) / self.dx).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        (i, t - i as f64)
    }

    /// Normalized density at `x`, linearly interpolated.
    pub fn density_at(&self, x: f64) -> f64 {
        let (i, s) = self.cell_of(x);
        self.density[i] + (self.density[i + 1] - self.density[i]) * s
    }

    /// `F(x)`, exact for the piecewise-linear density.
    pub fn eval(&self, x: f64) -> f64 {
        let (i, s) = self.cell_of(x);
        let r0 = self.density[i];
        let slope = self.density[i + 1] - r0;
        (self.levels[i] + self.dx * (r0 * s + 0.5 * slope * s * s)).clamp(0.0, 1.0)
    }

    /// Position of level `y` inside cell `i`, assuming `F_i <= y <= F_{i+1}`.
    fn invert_in_cell(&self, i: usize, y: f64) -> f64 {
        let r0 = self.density[i];
        let slope = self.density[i + 1] - r0;
        let m = ((y - self.levels[i]) / self.dx).max(0.0);
        // r0 s + slope s^2 / 2 = m, in the cancellation-free form
        let disc = (r0 * r0 + 2.0 * slope * m).max(0.0);
        let den = r0 + disc.sqrt();
        let s = if den > 0.0 { 2.0 * m / den } else { 0.0 };
        self.a + self.dx * (i as f64 + s.clamp(0.0, 1.0))
    }

    /// First cell that can contain the leftmost preimage of `y`, starting
    /// the search at `start`.
    fn advance(&self, mut start: usize, y: f64) -> usize {
        let last = self.levels.len() - 2;
        if y <= 0.0 {
            // the quantile of level zero is where the support begins
            while start < last && self.levels[start + 1] <= 0.0 {
                start += 1;
            }
            return start;
        }
        while start < last && self.levels[start + 1] < y {
            start += 1;
        }
        start
    }

    /// Leftmost `x` with `F(x) >= y` (for `y = 0`, the left end of the support).
    pub fn quantile(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        let i = if y <= 0.0 {
            self.advance(0, y)
        } else {
            self.levels[1..].partition_point(|&l| l < y).min(self.levels.len() - 2)
        };
        self.invert_in_cell(i, y)
    }

    /// Quantiles of nondecreasing levels by a single forward scan.
    pub fn quantiles_sorted(&self, ys: &[f64]) -> Vec<f64> {
        let mut cell = 0;
        ys.iter()
            .map(|&y| {
                let y = y.clamp(0.0, 1.0);
                cell = self.advance(cell, y);
                self.invert_in_cell(cell, y)
            })
            .collect()
    }
}

fn check_pair(mu: &GridMeasure, nu: &GridMeasure) -> Result<()> {
    mu.grid().check_same(nu.grid())
}

/// The monotone map `T(x_i) = Q_nu(F_mu(x_i))` at every node.
pub fn optimal_map(mu: &GridMeasure, nu: &GridMeasure) -> Result<Vec<f64>> {
    check_pair(mu, nu)?;
    let f_mu = Cdf::new(mu);
    let f_nu = Cdf::new(nu);
    Ok(f_nu.quantiles_sorted(f_mu.levels()))
}

/// `int h(x - T(x)) dmu`.
pub fn transport_cost(mu: &GridMeasure, nu: &GridMeasure, h: &RadialProfile) -> Result<f64> {
    let map = optimal_map(mu, nu)?;
    Ok(cost_of_map(mu, &map, h))
}

fn cost_of_map(mu: &GridMeasure, map: &[f64], h: &RadialProfile) -> f64 {
    let grid = mu.grid();
    let hc: Vec<f64> = grid.nodes().iter().zip(map).map(|(x, t)| h.eval(x - t)).collect();
    grid.integrate_product(&hc, mu.density()) / mu.mass()
}

/// Duality-gap tolerance `max(1e-4, 10 dx^2) (1 + cost)`.
pub fn gap_tolerance(grid: &Grid, cost: f64) -> f64 {
    1e-4f64.max(10.0 * grid.dx() * grid.dx()) * (1.0 + cost.abs())
}

/// `psi'(x) = h'(x - T(x))` at every node.
pub fn potential_gradient(grid: &Grid, map: &[f64], h: &RadialProfile) -> Vec<f64> {
    grid.nodes().iter().zip(map).map(|(x, t)| h.grad(x - t)).collect()
}

/// Row minima `min_i cost(i, j)` and their leftmost arguments for every
/// column `j` of an `n x n` Monge array, by divide and conquer.
fn monotone_minima(n: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<usize>) {
    let mut values = vec![0.0; n];
    let mut args = vec![0usize; n];
    let mut stack = vec![(0usize, n, 0usize, n - 1)];
    while let Some((lo, hi, opt_lo, opt_hi)) = stack.pop() {
        if lo >= hi {
            continue;
        }
        let mid = (lo + hi) / 2;
        let mut best = f64::INFINITY;
        let mut arg = opt_lo;
        for i in opt_lo..=opt_hi {
            let v = cost(i, mid);
            if v < best {
                best = v;
                arg = i;
            }
        }
        values[mid] = best;
        args[mid] = arg;
        stack.push((lo, mid, opt_lo, arg));
        stack.push((mid + 1, hi, arg, opt_hi));
    }
    (values, args)
}

/// Discrete c-transform `phi(y_j) = min_i [h(x_i - y_j) - psi_i]`.
///
/// The cost `h(x - y)` has the Monge property, so the leftmost minimizing
/// index is nondecreasing in `j` and divide and conquer needs
/// `O(n log n)` evaluations.
pub fn c_transform(grid: &Grid, psi: &[f64], h: &RadialProfile) -> Vec<f64> {
    let x = grid.nodes();
    monotone_minima(x.len(), |i, j| h.eval(x[i] - x[j]) - psi[i]).0
}

/// The map recovered from the dual potential alone:
/// `T(x_i) = argmin_j [h(x_i - y_j) - phi_j]`.
pub fn map_from_dual(grid: &Grid, phi: &[f64], h: &RadialProfile) -> Vec<f64> {
    let x = grid.nodes();
    let (_, args) = monotone_minima(x.len(), |j, i| h.eval(x[i] - x[j]) - phi[j]);
    args.into_iter().map(|j| x[j]).collect()
}

/// Sup distance between the monotone map and [`map_from_dual`] over interior
/// nodes where `mu` carries mass (density above `1e-6` of its maximum).
/// Endpoints are skipped: there the map takes the support ends by convention,
/// which the discrete dual potential cannot resolve when the map is steep.
pub fn reconstruction_error(mu: &GridMeasure, map: &[f64], phi: &[f64], h: &RadialProfile) -> f64 {
    let rebuilt = map_from_dual(mu.grid(), phi, h);
    let floor = 1e-6 * mu.max_density();
    (1..map.len() - 1)
        .filter(|&i| mu.density()[i] > floor)
        .map(|i| (rebuilt[i] - map[i]).abs())
        .fold(0.0, f64::max)
}

/// Kantorovich potentials `(psi, phi)` and the duality gap
/// `cost - (int psi dmu + int phi dnu)`.
///
/// `psi` is anchored at zero on the left endpoint; `phi` is its c-transform.
/// A gap above [`gap_tolerance`] is reported as [`Error::DualInfeasible`].
pub fn kantorovich_potentials(
    mu: &GridMeasure,
    nu: &GridMeasure,
    h: &RadialProfile,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let sol = TransportSolution::solve(mu, nu, h)?;
    Ok((sol.psi, sol.phi, sol.duality_gap))
}

/// Optimal map, cost, potentials and duality gap between two measures.
#[derive(Debug, Clone, Serialize)]
pub struct TransportSolution {
    pub nodes: Vec<f64>,
    pub map: Vec<f64>,
    pub cost: f64,
    pub psi: Vec<f64>,
    pub psi_prime: Vec<f64>,
    pub phi: Vec<f64>,
    pub duality_gap: f64,
    pub gap_tol: f64,
}

impl TransportSolution {
    /// See [`reconstruction_error`].
    pub fn reconstruction_error(&self, mu: &GridMeasure, h: &RadialProfile) -> f64 {
        reconstruction_error(mu, &self.map, &self.phi, h)
    }
}

impl TransportSolution {
    /// Solves the transport problem and checks the duality gap.
    pub fn solve(mu: &GridMeasure, nu: &GridMeasure, h: &RadialProfile) -> Result<Self> {
        let sol = Self::solve_unchecked(mu, nu, h)?;
        if sol.duality_gap.abs() > sol.gap_tol || !sol.duality_gap.is_finite() {
            return Err(Error::DualInfeasible { gap: sol.duality_gap, tol: sol.gap_tol });
        }
        Ok(sol)
    }

    /// As [`TransportSolution::solve`] without the duality-gap check.
    pub fn solve_unchecked(mu: &GridMeasure, nu: &GridMeasure, h: &RadialProfile) -> Result<Self> {
        let map = optimal_map(mu, nu)?;
        let grid = mu.grid();
        let cost = cost_of_map(mu, &map, h);
        let psi_prime = potential_gradient(grid, &map, h);
        let psi = grid.cumulative(&psi_prime);
        let phi = c_transform(grid, &psi, h);
        let dual = grid.integrate_product(&psi, mu.density()) / mu.mass()
            + grid.integrate_product(&phi, nu.density()) / nu.mass();
        Ok(Self {
            nodes: grid.nodes().to_vec(),
            map,
            cost,
            psi,
            psi_prime,
            phi,
            duality_gap: cost - dual,
            gap_tol: gap_tolerance(grid, cost),
        })
    }
}

/// The discrete five-gradients functional
/// `int H'(psi') mu' + int H'(phi') nu'`, with `phi'(y) = h'(y - S(y))` for
/// the inverse map `S` and finite-difference density gradients.
pub fn five_gradients_value(
    mu: &GridMeasure,
    nu: &GridMeasure,
    fisher: &RadialProfile,
    h: &RadialProfile,
) -> Result<f64> {
    check_pair(mu, nu)?;
    let grid = mu.grid();
    let forward = optimal_map(mu, nu)?;
    let backward = optimal_map(nu, mu)?;
    let psi_prime = potential_gradient(grid, &forward, h);
    let phi_prime = potential_gradient(grid, &backward, h);
    let dmu = grid.derivative(mu.density());
    let dnu = grid.derivative(nu.density());
    let integrand: Vec<f64> = (0..grid.len())
        .map(|i| fisher.grad(psi_prime[i]) * dmu[i] / mu.mass() + fisher.grad(phi_prime[i]) * dnu[i] / nu.mass())
        .collect();
    Ok(grid.integrate(&integrand))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(a: f64, b: f64, n: usize) -> Grid {
        Grid::new(a, b, n).unwrap()
    }

    fn translation_pair(n: usize) -> (GridMeasure, GridMeasure) {
        let g = grid(0.0, 2.0, n);
        let mu = GridMeasure::with_zeros(&g, g.nodes().iter().map(|&x| if x <= 1.0 { 1.0 } else { 0.0 }).collect())
            .unwrap();
        let nu = GridMeasure::with_zeros(
            &g,
            g.nodes().iter().map(|&x| if (0.5..=1.5).contains(&x) { 1.0 } else { 0.0 }).collect(),
        )
        .unwrap();
        (mu, nu)
    }

    #[test]
    fn identity_map_for_equal_measures() {
        let g = grid(-3.0, 3.0, 301);
        let mu = GridMeasure::from_log_fn(&g, |x| -x * x / 2.0).unwrap();
        let t = optimal_map(&mu, &mu).unwrap();
        for (x, tx) in g.nodes().iter().zip(&t) {
            assert!((x - tx).abs() < 1e-9, "{x} -> {tx}");
        }
        assert!(transport_cost(&mu, &mu, &RadialProfile::quadratic()).unwrap() < 1e-15);
    }

    #[test]
    fn translation_map_and_costs() {
        let n = 2001;
        let (mu, nu) = translation_pair(n);
        let dx = mu.grid().dx();
        let t = optimal_map(&mu, &nu).unwrap();
        for (x, tx) in mu.grid().nodes().iter().zip(&t) {
            if *x <= 1.0 {
                assert!((tx - x - 0.5).abs() < 2.0 * dx, "{x} -> {tx}");
            }
        }
        let c2 = transport_cost(&mu, &nu, &RadialProfile::quadratic()).unwrap();
        assert!((c2 - 0.125).abs() < 1e-3, "{c2}");
        let c3 = transport_cost(&mu, &nu, &RadialProfile::power(3.0).unwrap()).unwrap();
        assert!((c3 - 1.0 / 24.0).abs() < 1e-3, "{c3}");
    }

    #[test]
    fn square_root_map() {
        let g = grid(0.0, 1.0, 1001);
        let mu = GridMeasure::uniform(&g);
        let nu = GridMeasure::with_zeros(&g, g.nodes().iter().map(|x| 2.0 * x).collect()).unwrap();
        let t = optimal_map(&mu, &nu).unwrap();
        for (x, tx) in g.nodes().iter().zip(&t) {
            assert!((tx - x.sqrt()).abs() < 1e-9, "{x} -> {tx}");
        }
    }

    #[test]
    fn push_forward_matches_cdf() {
        let g = grid(-2.0, 2.0, 401);
        let mu = GridMeasure::from_log_fn(&g, |x| -(x - 0.3).powi(2)).unwrap();
        let nu = GridMeasure::from_log_fn(&g, |x| -2.0 * (x + 0.5).powi(2) + 0.3 * x.powi(3)).unwrap();
        let t = optimal_map(&mu, &nu).unwrap();
        let f_mu = Cdf::new(&mu);
        let f_nu = Cdf::new(&nu);
        for (i, tx) in t.iter().enumerate() {
            assert!((f_nu.eval(*tx) - f_mu.levels()[i]).abs() < 1e-8);
        }
        assert!(t.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn map_rejects_grid_mismatch() {
        let a = GridMeasure::uniform(&grid(0.0, 1.0, 64));
        let b = GridMeasure::uniform(&grid(0.0, 1.0, 65));
        assert!(matches!(optimal_map(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn potentials_of_equal_measures_are_constant() {
        let g = grid(-3.0, 3.0, 201);
        let mu = GridMeasure::from_log_fn(&g, |x| -x * x).unwrap();
        let (psi, phi, gap) = kantorovich_potentials(&mu, &mu, &RadialProfile::quadratic()).unwrap();
        for (p, f) in psi.iter().zip(&phi) {
            assert!(p.abs() < 1e-12 && (p + f).abs() < 1e-12);
        }
        assert!(gap.abs() < 1e-12);
    }

    #[test]
    fn translation_potential_slope() {
        let (mu, nu) = translation_pair(801);
        let sol = TransportSolution::solve(&mu, &nu, &RadialProfile::quadratic()).unwrap();
        let dx = mu.grid().dx();
        for (x, dp) in sol.nodes.iter().zip(&sol.psi_prime) {
            if *x <= 1.0 {
                assert!((dp + 0.5).abs() < 2.0 * dx, "{x}: {dp}");
            }
        }
        assert!(sol.duality_gap.abs() <= sol.gap_tol);
    }

    #[test]
    fn map_rebuilt_from_potential_gradient() {
        let g = grid(-2.0, 2.0, 401);
        let mu = GridMeasure::from_log_fn(&g, |x| -x * x + 0.5 * (3.0 * x).sin()).unwrap();
        let nu = GridMeasure::from_log_fn(&g, |x| -(x - 0.4).powi(2) / 0.5).unwrap();
        let h = RadialProfile::power(3.0).unwrap();
        let sol = TransportSolution::solve(&mu, &nu, &h).unwrap();
        for ((x, dp), t) in sol.nodes.iter().zip(&sol.psi_prime).zip(&sol.map) {
            let rebuilt = x - h.conj_grad(*dp);
            assert!((rebuilt - t).abs() < 10.0 * g.dx());
        }
    }

    #[test]
    fn c_transform_matches_brute_force() {
        let g = grid(-1.0, 1.0, 157);
        let psi: Vec<f64> = g.nodes().iter().map(|x| (4.0 * x).sin() - x * x).collect();
        let h = RadialProfile::power(1.5).unwrap();
        let fast = c_transform(&g, &psi, &h);
        for (j, y) in g.nodes().iter().enumerate() {
            let brute = g.nodes().iter().zip(&psi).map(|(x, p)| h.eval(x - y) - p).fold(f64::INFINITY, f64::min);
            assert_eq!(fast[j], brute);
        }
    }

    #[test]
    fn five_gradients_of_equal_measures_vanishes() {
        let g = grid(-3.0, 3.0, 301);
        let mu = GridMeasure::from_log_fn(&g, |x| -x * x / 2.0).unwrap();
        let v = five_gradients_value(&mu, &mu, &RadialProfile::quadratic(), &RadialProfile::quadratic()).unwrap();
        assert!(v.abs() < 1e-8);
    }

    #[test]
    fn dual_potential_recovers_the_map() {
        let g = grid(-2.0, 2.0, 401);
        let mu = GridMeasure::from_log_fn(&g, |x| -(x - 0.5).powi(2)).unwrap();
        let nu = GridMeasure::from_log_fn(&g, |x| -x * x / 0.5).unwrap();
        let h = RadialProfile::quadratic();
        let sol = TransportSolution::solve(&mu, &nu, &h).unwrap();
        assert!(sol.reconstruction_error(&mu, &h) <= 10.0 * g.dx());
    }

    #[test]
    fn quantile_of_flat_stretch_is_leftmost() {
        let g = grid(0.0, 3.0, 301);
        let m = GridMeasure::with_zeros(
            &g,
            g.nodes().iter().map(|&x| if (1.0..=2.0).contains(&x) { 0.0 } else { 1.0 }).collect(),
        )
        .unwrap();
        let cdf = Cdf::new(&m);
        let flat_level = cdf.levels()[150];
        let left = cdf.quantile(flat_level);
        assert!(left <= 1.0 + 1e-12 && left > 0.95, "{left}");
        assert_eq!(cdf.quantiles_sorted(&[flat_level])[0], left);
        assert_eq!(cdf.quantile(0.0), 0.0);
        assert!((cdf.quantile(1.0) - 3.0).abs() < 1e-12);
    }
}
