//! Finitely supported probabilities on the real line.
//!
//! The CDF convention is right-continuous; quantiles use the left-continuous
//! generalized inverse. Atoms closer than [`MERGE_TOL`] are merged on
//! construction so push-forwards cannot create spurious zero-gap atoms.

use crate::error::{Error, Result};
use crate::gauss;
use serde::{Deserialize, Serialize};

/// Atom-merging tolerance on positions.
pub const MERGE_TOL: f64 = 1e-12;

/// Default tolerance for the convex-order predicate.
pub const CONVEX_ORDER_TOL: f64 = 1e-9;

/// A finitely supported probability measure on the line: strictly increasing
/// atom positions with strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure1D {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl Measure1D {
    /// Build from atom/weight pairs. Atoms are sorted, near-duplicates merged,
    /// weights normalized to total mass one. Nonpositive weights are rejected.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "atom/weight length mismatch: {} vs {}",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        for (&x, &w) in atoms.iter().zip(&weights) {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::InvalidMeasure("non-finite atom or weight".into()));
            }
            if w < 0.0 {
                return Err(Error::InvalidMeasure(format!("negative weight {w}")));
            }
        }
        let mut pairs: Vec<(f64, f64)> = atoms
            .into_iter()
            .zip(weights)
            .filter(|&(_, w)| w > 0.0)
            .collect();
        if pairs.is_empty() {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match merged.last_mut() {
                Some(last) if (x - last.0).abs() <= MERGE_TOL * x.abs().max(1.0) => {
                    // weighted position keeps the barycenter exact under merges
                    let tw = last.1 + w;
                    last.0 = (last.0 * last.1 + x * w) / tw;
                    last.1 = tw;
                }
                _ => merged.push((x, w)),
            }
        }
        let total: f64 = merged.iter().map(|p| p.1).sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        Ok(Self {
            atoms: merged.iter().map(|p| p.0).collect(),
            weights: merged.iter().map(|p| p.1 / total).collect(),
        })
    }

    /// Dirac mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self {
            atoms: vec![x],
            weights: vec![1.0],
        }
    }

    /// Empirical measure of weighted samples (weights need not be normalized).
    pub fn from_weighted_samples(samples: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(samples.to_vec(), weights.to_vec())
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_dirac(&self) -> bool {
        self.atoms.len() == 1
    }

    /// True when every atom is strictly positive.
    pub fn positive_support(&self) -> bool {
        self.atoms[0] > 0.0
    }

    /// Barycenter b(eta) = sum w_i x_i.
    pub fn barycenter(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * x * w)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let b = self.barycenter();
        self.second_moment() - b * b
    }

    /// Expectation of an arbitrary function.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Right-continuous CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            if a <= x {
                acc += w;
            } else {
                break;
            }
        }
        acc
    }

    /// Left-continuous generalized inverse: smallest atom with cumulative
    /// weight >= u.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let mut acc = 0.0;
        for (&a, &w) in self.atoms.iter().zip(&self.weights) {
            acc += w;
            if acc >= u - 1e-15 {
                return a;
            }
        }
        *self.atoms.last().unwrap()
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().unwrap()
    }
}

/// Integrated-call-price potential u_eta(x) = int |x-y| eta(dy), piecewise
/// linear with breakpoints at the atoms. Prefix sums give O(log n) evaluation.
#[derive(Debug, Clone)]
pub struct Potential {
    atoms: Vec<f64>,
    cum_weight: Vec<f64>,
    cum_moment: Vec<f64>,
    total_mass: f64,
    total_moment: f64,
}

impl Potential {
    pub fn of(m: &Measure1D) -> Self {
        Self::of_parts(m.atoms(), m.weights())
    }

    /// Potential of a (sub-)measure given as raw atoms/weights; atoms must be
    /// sorted ascending.
    pub fn of_parts(atoms: &[f64], weights: &[f64]) -> Self {
        let mut cw = Vec::with_capacity(atoms.len());
        let mut cm = Vec::with_capacity(atoms.len());
        let (mut aw, mut am) = (0.0, 0.0);
        for (&x, &w) in atoms.iter().zip(weights) {
            aw += w;
            am += w * x;
            cw.push(aw);
            cm.push(am);
        }
        Self {
            atoms: atoms.to_vec(),
            cum_weight: cw,
            cum_moment: cm,
            total_mass: aw,
            total_moment: am,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = self.atoms.partition_point(|&a| a <= x);
        let (w_le, m_le) = if i == 0 {
            (0.0, 0.0)
        } else {
            (self.cum_weight[i - 1], self.cum_moment[i - 1])
        };
        // below-x part: sum w (x - y); above-x part: sum w (y - x)
        (w_le * x - m_le) + (self.total_moment - m_le) - (self.total_mass - w_le) * x
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
}

/// Convex-order predicate mu <=_c nu: equal barycenters within `tol` and
/// u_mu <= u_nu + tol at every atom of either measure.
pub fn convex_order_leq(mu: &Measure1D, nu: &Measure1D, tol: f64) -> bool {
    if (mu.barycenter() - nu.barycenter()).abs() > tol {
        return false;
    }
    let (pm, pn) = (Potential::of(mu), Potential::of(nu));
    mu.atoms()
        .iter()
        .chain(nu.atoms())
        .all(|&z| pm.eval(z) <= pn.eval(z) + tol)
}

/// One irreducible component of a marginal pair.
#[derive(Debug, Clone)]
pub struct Component {
    /// Open interval carrying the component's transport.
    pub interval: (f64, f64),
    /// Mass of mu inside the interval.
    pub mass: f64,
    /// Restriction of mu to the interval, renormalized.
    pub mu: Measure1D,
    /// Matching part of nu (interior atoms plus boundary shares), renormalized.
    pub nu: Measure1D,
}

/// Decomposition of a convex-ordered pair into irreducible components plus
/// the mass transported identically.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub components: Vec<Component>,
    /// Atoms of mu outside every component: forced identity transport.
    pub frozen: Vec<(f64, f64)>,
}

impl Decomposition {
    pub fn frozen_mass(&self) -> f64 {
        self.frozen.iter().map(|p| p.1).sum()
    }
}

/// Decompose (mu, nu) into maximal open intervals where u_nu > u_mu.
///
/// Boundary atoms of nu shared between adjacent components are split so that
/// each restricted pair has matching mass and barycenter; the split is the
/// unique solution of the two linear moment equations.
pub fn irreducible_components(mu: &Measure1D, nu: &Measure1D, tol: f64) -> Result<Decomposition> {
    if !convex_order_leq(mu, nu, tol) {
        return Err(Error::NotInConvexOrder);
    }
    let (pm, pn) = (Potential::of(mu), Potential::of(nu));
    let mut grid: Vec<f64> = mu.atoms().iter().chain(nu.atoms()).copied().collect();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL * a.abs().max(1.0));
    let gap: Vec<f64> = grid.iter().map(|&z| pn.eval(z) - pm.eval(z)).collect();

    let mut components = Vec::new();
    let mut i = 0;
    while i < grid.len() {
        if gap[i] > tol {
            let start = i;
            while i < grid.len() && gap[i] > tol {
                i += 1;
            }
            // the potential difference is piecewise linear and nonnegative, so
            // it vanishes at the neighbouring grid atoms
            let a = if start == 0 {
                grid[0] - 1.0 // unreachable for convex-ordered pairs; kept defensive
            } else {
                grid[start - 1]
            };
            let b = if i == grid.len() {
                grid[grid.len() - 1] + 1.0
            } else {
                grid[i]
            };
            components.push(build_component(mu, nu, a, b)?);
        } else {
            i += 1;
        }
    }

    // mu mass at zero-gap atoms is frozen
    let mut frozen = Vec::new();
    for (&x, &w) in mu.atoms().iter().zip(mu.weights()) {
        let inside = components
            .iter()
            .any(|c| x > c.interval.0 && x < c.interval.1);
        if !inside {
            frozen.push((x, w));
        }
    }
    Ok(Decomposition { components, frozen })
}

fn build_component(mu: &Measure1D, nu: &Measure1D, a: f64, b: f64) -> Result<Component> {
    let mut mu_a = Vec::new();
    let mut mu_w = Vec::new();
    for (&x, &w) in mu.atoms().iter().zip(mu.weights()) {
        if x > a && x < b {
            mu_a.push(x);
            mu_w.push(w);
        }
    }
    let mass: f64 = mu_w.iter().sum();
    let moment: f64 = mu_a.iter().zip(&mu_w).map(|(x, w)| x * w).sum();
    if mass <= 0.0 {
        return Err(Error::ReduciblePair(format!(
            "component ({a}, {b}) carries no mu mass"
        )));
    }

    let mut nu_a = Vec::new();
    let mut nu_w = Vec::new();
    let mut in_mass = 0.0;
    let mut in_moment = 0.0;
    for (&y, &w) in nu.atoms().iter().zip(nu.weights()) {
        if y > a && y < b {
            nu_a.push(y);
            nu_w.push(w);
            in_mass += w;
            in_moment += y * w;
        }
    }
    // boundary shares from mass and first-moment matching
    let dm = mass - in_mass;
    let ds = moment - in_moment;
    if b - a > 0.0 {
        let wb = (ds - a * dm) / (b - a);
        let wa = dm - wb;
        let clamp = |w: f64| -> Result<f64> {
            if w < -1e-9 {
                Err(Error::InvalidMeasure(format!(
                    "negative boundary share {w:.3e} in component ({a}, {b})"
                )))
            } else {
                Ok(w.max(0.0))
            }
        };
        let wa = clamp(wa)?;
        let wb = clamp(wb)?;
        if wa > 0.0 {
            nu_a.push(a);
            nu_w.push(wa);
        }
        if wb > 0.0 {
            nu_a.push(b);
            nu_w.push(wb);
        }
    }
    Ok(Component {
        interval: (a, b),
        mass,
        mu: Measure1D::new(mu_a, mu_w)?,
        nu: Measure1D::new(nu_a, nu_w)?,
    })
}

/// W1 distance between finitely supported measures: the exact area between
/// their step CDFs.
pub fn wasserstein1(a: &Measure1D, b: &Measure1D) -> f64 {
    let mut xs: Vec<f64> = a.atoms().iter().chain(b.atoms()).copied().collect();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xs.dedup();
    let mut acc = 0.0;
    let (mut fa, mut fb) = (0.0, 0.0);
    let (mut ia, mut ib) = (0, 0);
    for k in 0..xs.len() {
        while ia < a.len() && a.atoms()[ia] <= xs[k] {
            fa += a.weights()[ia];
            ia += 1;
        }
        while ib < b.len() && b.atoms()[ib] <= xs[k] {
            fb += b.weights()[ib];
            ib += 1;
        }
        if k + 1 < xs.len() {
            acc += (fa - fb).abs() * (xs[k + 1] - xs[k]);
        }
    }
    acc
}

/// Monotone right-continuous CDF sampled on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfGrid {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl CdfGrid {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() < 2 {
            return Err(Error::InvalidMeasure(
                "cdf grid needs matching lengths >= 2".into(),
            ));
        }
        for w in grid.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidMeasure("grid not strictly increasing".into()));
            }
        }
        let mut values = values;
        let mut prev = f64::NEG_INFINITY;
        for v in values.iter_mut() {
            *v = v.clamp(0.0, 1.0);
            if *v < prev {
                if prev - *v > 1e-9 {
                    return Err(Error::InvalidMeasure("cdf values decreasing".into()));
                }
                *v = prev;
            }
            prev = *v;
        }
        Ok(Self { grid, values })
    }

    /// CDF of the centred Gaussian with standard deviation `sigma`, sampled
    /// uniformly on `mean ± 8.5 sigma`.
    pub fn gaussian(mean: f64, sigma: f64, n: usize) -> Self {
        assert!(sigma > 0.0 && n >= 2);
        let half = 8.5 * sigma;
        let h = 2.0 * half / (n - 1) as f64;
        let grid: Vec<f64> = (0..n).map(|i| mean - half + h * i as f64).collect();
        let values: Vec<f64> = grid.iter().map(|&x| gauss::cdf((x - mean) / sigma)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        (self.grid[self.grid.len() - 1] - self.grid[0]) / (self.grid.len() - 1) as f64
    }

    pub fn cdf(&self, x: f64) -> f64 {
        gauss::interp(&self.grid, &self.values, x)
    }

    /// Left-continuous generalized inverse on the grid representation.
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let i = self.values.partition_point(|&v| v < u);
        if i == 0 {
            return self.grid[0];
        }
        if i >= self.values.len() {
            return *self.grid.last().unwrap();
        }
        let (v0, v1) = (self.values[i - 1], self.values[i]);
        if v1 > v0 {
            let t = (u - v0) / (v1 - v0);
            self.grid[i - 1] + t * (self.grid[i] - self.grid[i - 1])
        } else {
            self.grid[i - 1]
        }
    }

    /// Barycenter of the underlying measure (midpoint Stieltjes sum; the grid
    /// is assumed to cover all but negligible mass).
    pub fn barycenter(&self) -> f64 {
        let mut acc = self.values[0] * self.grid[0];
        for i in 0..self.grid.len() - 1 {
            let dm = self.values[i + 1] - self.values[i];
            acc += dm * 0.5 * (self.grid[i] + self.grid[i + 1]);
        }
        acc += (1.0 - self.values[self.values.len() - 1]) * self.grid[self.grid.len() - 1];
        acc
    }

    /// Atomize: mass increments placed at interval midpoints (plus any
    /// leftover tail mass at the grid ends).
    pub fn atomize(&self) -> Result<Measure1D> {
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        if self.values[0] > 0.0 {
            atoms.push(self.grid[0]);
            weights.push(self.values[0]);
        }
        for i in 0..self.grid.len() - 1 {
            let dm = self.values[i + 1] - self.values[i];
            if dm > 0.0 {
                atoms.push(0.5 * (self.grid[i] + self.grid[i + 1]));
                weights.push(dm);
            }
        }
        let last = self.values[self.values.len() - 1];
        if last < 1.0 {
            atoms.push(*self.grid.last().unwrap());
            weights.push(1.0 - last);
        }
        Measure1D::new(atoms, weights)
    }
}

/// CDF of (measure with CDF `f`) convolved with the centred Gaussian of
/// variance `t`, on a uniform grid extending the input by ±8 sqrt(t).
pub fn gaussian_convolve_cdf(f: &CdfGrid, t: f64) -> Result<CdfGrid> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("convolution time must be > 0".into()));
    }
    let s = t.sqrt();
    let pad = 8.0 * s;
    let (lo, hi) = (f.grid()[0] - pad, *f.grid().last().unwrap() + pad);
    // the output is smooth at scale s, so never resolve finer than s/64
    let target = f.spacing().max(s / 64.0);
    let n = (((hi - lo) / target).ceil() as usize + 1).clamp(64, 200_000);
    let h = (hi - lo) / (n - 1) as f64;
    let out_grid: Vec<f64> = (0..n).map(|i| lo + h * i as f64).collect();
    // integration by parts: int Phi_s(x - y) dF(y) = int phi_s(x - y) F(y) dy
    let out_vals = gauss::smooth_eval(f.grid(), f.values(), s, &out_grid);
    CdfGrid::new(out_grid, out_vals)
}

/// Either representation of a one-dimensional law.
#[derive(Debug, Clone)]
pub enum Marginal {
    Atomic(Measure1D),
    Grid(CdfGrid),
}

impl Marginal {
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Marginal::Atomic(m) => m.cdf(x),
            Marginal::Grid(g) => g.cdf(x),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::Atomic(m) => m.quantile(u),
            Marginal::Grid(g) => g.quantile(u),
        }
    }

    pub fn barycenter(&self) -> f64 {
        match self {
            Marginal::Atomic(m) => m.barycenter(),
            Marginal::Grid(g) => g.barycenter(),
        }
    }

    /// Atomic view (grids atomized at their own resolution).
    pub fn to_measure(&self) -> Result<Measure1D> {
        match self {
            Marginal::Atomic(m) => Ok(m.clone()),
            Marginal::Grid(g) => g.atomize(),
        }
    }

    pub fn support_bounds(&self) -> (f64, f64) {
        match self {
            Marginal::Atomic(m) => (m.min_atom(), m.max_atom()),
            Marginal::Grid(g) => (g.grid()[0], *g.grid().last().unwrap()),
        }
    }
}

impl From<Measure1D> for Marginal {
    fn from(m: Measure1D) -> Self {
        Marginal::Atomic(m)
    }
}

impl From<CdfGrid> for Marginal {
    fn from(g: CdfGrid) -> Self {
        Marginal::Grid(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(atoms: &[f64], weights: &[f64]) -> Measure1D {
        Measure1D::new(atoms.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn barycenter_examples() {
        assert_abs_diff_eq!(Measure1D::dirac(2.0).barycenter(), 2.0);
        assert_abs_diff_eq!(m(&[1.0, 3.0], &[0.5, 0.5]).barycenter(), 2.0);
        assert_abs_diff_eq!(
            m(&[1.0, 3.0, 5.0], &[0.3, 0.4, 0.3]).barycenter(),
            3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn atoms_merge_and_normalize() {
        let mm = m(&[1.0, 1.0 + 1e-14, 2.0], &[1.0, 1.0, 2.0]);
        assert_eq!(mm.len(), 2);
        assert_abs_diff_eq!(mm.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mm.weights()[0], 0.5);
    }

    #[test]
    fn convex_order_examples() {
        let two = m(&[1.0, 3.0], &[0.5, 0.5]);
        let d2 = Measure1D::dirac(2.0);
        assert!(convex_order_leq(&two, &two, CONVEX_ORDER_TOL));
        assert!(convex_order_leq(&d2, &two, CONVEX_ORDER_TOL));
        assert!(!convex_order_leq(&two, &d2, CONVEX_ORDER_TOL));
    }

    #[test]
    fn potential_convexity_and_slopes() {
        let mm = m(&[0.5, 1.0, 2.5, 4.0], &[0.1, 0.4, 0.3, 0.2]);
        let p = Potential::of(&mm);
        let b = mm.barycenter();
        // u(x) >= |x - b| and asymptotic slopes ±1
        for i in -50..=50 {
            let x = i as f64 * 0.2;
            assert!(p.eval(x) >= (x - b).abs() - 1e-12);
        }
        let far = 1e6;
        assert_abs_diff_eq!(p.eval(far) - p.eval(far - 1.0), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.eval(-far) - p.eval(-far + 1.0), 1.0, epsilon = 1e-9);
        // midpoint convexity on the breakpoint grid
        for w in mm.atoms().windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            assert!(p.eval(mid) <= 0.5 * (p.eval(w[0]) + p.eval(w[1])) + 1e-12);
        }
    }

    #[test]
    fn components_equal_marginals_all_frozen() {
        let mm = m(&[1.0, 3.0], &[0.5, 0.5]);
        let d = irreducible_components(&mm, &mm, CONVEX_ORDER_TOL).unwrap();
        assert!(d.components.is_empty());
        assert_abs_diff_eq!(d.frozen_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn components_dirac_to_two_point() {
        let d2 = Measure1D::dirac(2.0);
        let two = m(&[1.0, 3.0], &[0.5, 0.5]);
        let d = irreducible_components(&d2, &two, CONVEX_ORDER_TOL).unwrap();
        assert_eq!(d.components.len(), 1);
        let c = &d.components[0];
        assert!(c.interval.0 <= 1.0 && c.interval.1 >= 3.0);
        assert_abs_diff_eq!(c.mass, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wasserstein1(&c.nu, &two), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn components_split_at_touching_potential() {
        // u_nu(3) = u_mu(3) = 1 splits the pair into two components
        let mu = m(&[2.0, 4.0], &[0.5, 0.5]);
        let nu = m(&[1.0, 3.0, 5.0], &[0.25, 0.5, 0.25]);
        let d = irreducible_components(&mu, &nu, CONVEX_ORDER_TOL).unwrap();
        assert_eq!(d.components.len(), 2);
        assert_abs_diff_eq!(d.frozen_mass(), 0.0, epsilon = 1e-12);
        let c0 = &d.components[0];
        let c1 = &d.components[1];
        assert_eq!(c0.interval, (1.0, 3.0));
        assert_eq!(c1.interval, (3.0, 5.0));
        // each restricted pair is in convex order, and the boundary atom at 3
        // splits 1/4 + 1/4
        for c in &d.components {
            assert!(convex_order_leq(&c.mu, &c.nu, 1e-9));
        }
        let expect0 = m(&[1.0, 3.0], &[0.5, 0.5]);
        assert_abs_diff_eq!(wasserstein1(&c0.nu, &expect0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn wasserstein_examples() {
        assert_abs_diff_eq!(
            wasserstein1(&Measure1D::dirac(-1.0), &Measure1D::dirac(4.0)),
            5.0
        );
        let e = m(&[0.0, 2.0], &[0.5, 0.5]);
        assert_abs_diff_eq!(wasserstein1(&e, &e), 0.0);
        assert_abs_diff_eq!(wasserstein1(&e, &Measure1D::dirac(1.0)), 1.0);
    }

    #[test]
    fn cdf_quantile_roundtrip_on_grid() {
        let g = CdfGrid::gaussian(0.0, 1.0, 2048);
        for &u in &[0.01, 0.2, 0.5, 0.9, 0.999] {
            let x = g.quantile(u);
            assert_abs_diff_eq!(g.cdf(x), u, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(g.barycenter(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn convolve_dirac_gives_standard_normal() {
        // step CDF of delta_0 on a tight grid
        let grid: Vec<f64> = vec![-1e-9, 0.0, 1e-9];
        let vals = vec![0.0, 1.0, 1.0];
        let f = CdfGrid::new(grid, vals).unwrap();
        let g = gaussian_convolve_cdf(&f, 1.0).unwrap();
        // output grid resolves at sqrt(t)/64, so interpolation error ~1e-5
        for &x in &[-2.0, -0.5, 0.0, 1.0, 3.0] {
            assert_abs_diff_eq!(g.cdf(x), gauss::cdf(x), epsilon = 5e-5);
        }
    }

    #[test]
    fn convolve_gaussian_adds_variances() {
        let f = CdfGrid::gaussian(0.0, 1.0, 2048);
        let g = gaussian_convolve_cdf(&f, 1.0).unwrap();
        for &x in &[-3.0, -1.0, 0.0, 0.7, 2.5] {
            assert_abs_diff_eq!(g.cdf(x), gauss::cdf(x / 2.0f64.sqrt()), epsilon = 1e-5);
        }
    }

    #[test]
    fn convolve_two_point_mixture() {
        let mix = m(&[-1.0, 1.0], &[0.5, 0.5]);
        // represent the step CDF on a fine grid
        let n = 4001;
        let grid: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&x| mix.cdf(x)).collect();
        let f = CdfGrid::new(grid, vals).unwrap();
        let g = gaussian_convolve_cdf(&f, 1.0).unwrap();
        for &x in &[-2.0, 0.0, 0.5, 2.0] {
            let expect = 0.5 * gauss::cdf(x + 1.0) + 0.5 * gauss::cdf(x - 1.0);
            assert_abs_diff_eq!(g.cdf(x), expect, epsilon = 2e-4);
        }
    }

    #[test]
    fn smoothed_barycenter_preserved() {
        let f = CdfGrid::gaussian(1.5, 0.8, 2048);
        let g = gaussian_convolve_cdf(&f, 0.5).unwrap();
        assert_abs_diff_eq!(g.barycenter(), 1.5, epsilon = 1e-6);
    }
}
