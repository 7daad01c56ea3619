//! Change-of-numeraire transformation on measures, discrete couplings,
//! lifted couplings, path ensembles and cost functionals.
//!
//! The transform sends a positive martingale law to the law of the reciprocal
//! process under the terminal-value-reweighted measure. It is an involution
//! and commutes with marginal projection; both facts are relied on throughout
//! and asserted in the tests.

use crate::error::{Error, Result};
use crate::measure1d::Measure1D;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Transform a measure: atom x of weight w maps to 1/x with weight x w / b.
pub fn cn_measure(eta: &Measure1D) -> Result<Measure1D> {
    if !eta.positive_support() {
        return Err(Error::NonPositiveSupport);
    }
    let b = eta.barycenter();
    let atoms: Vec<f64> = eta.atoms().iter().map(|&x| 1.0 / x).collect();
    let weights: Vec<f64> = eta
        .atoms()
        .iter()
        .zip(eta.weights())
        .map(|(&x, &w)| x * w / b)
        .collect();
    Measure1D::new(atoms, weights)
}

/// Discrete two-step martingale transport plan as a weighted table over
/// atom pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MartingaleCoupling {
    source_atoms: Vec<f64>,
    target_atoms: Vec<f64>,
    /// Row-major |source| x |target| table of nonnegative weights summing to 1.
    weights: Vec<f64>,
}

pub const MARGINAL_TOL: f64 = 1e-10;
pub const MARTINGALE_TOL: f64 = 1e-9;

impl MartingaleCoupling {
    /// Validates positivity, normalization and the row-barycenter constraint.
    pub fn new(source_atoms: Vec<f64>, target_atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let (n, m) = (source_atoms.len(), target_atoms.len());
        if weights.len() != n * m || n == 0 || m == 0 {
            return Err(Error::InvalidMeasure("coupling table shape mismatch".into()));
        }
        if weights.iter().any(|&w| !w.is_finite() || w < -1e-15) {
            return Err(Error::InvalidMeasure("negative coupling weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidMeasure(format!(
                "coupling mass {total} != 1"
            )));
        }
        let c = Self {
            source_atoms,
            target_atoms,
            weights: weights.iter().map(|w| w.max(0.0) / total).collect(),
        };
        let resid = c.martingale_residual();
        if resid > MARTINGALE_TOL {
            return Err(Error::MartingaleViolation(resid));
        }
        Ok(c)
    }

    /// Product coupling delta-free constructor: pi = mu (x) nu is a martingale
    /// coupling only when mu is a Dirac at b(nu).
    pub fn product(mu: &Measure1D, nu: &Measure1D) -> Result<Self> {
        let mut w = Vec::with_capacity(mu.len() * nu.len());
        for &wm in mu.weights() {
            for &wn in nu.weights() {
                w.push(wm * wn);
            }
        }
        Self::new(mu.atoms().to_vec(), nu.atoms().to_vec(), w)
    }

    /// Identity coupling of a measure with itself.
    pub fn identity(mu: &Measure1D) -> Self {
        let n = mu.len();
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            w[i * n + i] = mu.weights()[i];
        }
        Self {
            source_atoms: mu.atoms().to_vec(),
            target_atoms: mu.atoms().to_vec(),
            weights: w,
        }
    }

    pub fn source_atoms(&self) -> &[f64] {
        &self.source_atoms
    }

    pub fn target_atoms(&self) -> &[f64] {
        &self.target_atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.target_atoms.len() + j]
    }

    pub fn source_marginal(&self) -> Result<Measure1D> {
        let m = self.target_atoms.len();
        let w: Vec<f64> = (0..self.source_atoms.len())
            .map(|i| self.weights[i * m..(i + 1) * m].iter().sum())
            .collect();
        Measure1D::new(self.source_atoms.clone(), w)
    }

    pub fn target_marginal(&self) -> Result<Measure1D> {
        let m = self.target_atoms.len();
        let mut w = vec![0.0; m];
        for i in 0..self.source_atoms.len() {
            for j in 0..m {
                w[j] += self.weights[i * m + j];
            }
        }
        Measure1D::new(self.target_atoms.clone(), w)
    }

    /// Max over rows of |row barycenter - source atom| (rows with mass).
    pub fn martingale_residual(&self) -> f64 {
        let m = self.target_atoms.len();
        let mut worst: f64 = 0.0;
        for (i, &x) in self.source_atoms.iter().enumerate() {
            let row = &self.weights[i * m..(i + 1) * m];
            let mass: f64 = row.iter().sum();
            if mass <= 1e-14 {
                continue;
            }
            let mean: f64 = row
                .iter()
                .zip(&self.target_atoms)
                .map(|(w, y)| w * y)
                .sum::<f64>()
                / mass;
            worst = worst.max((mean - x).abs());
        }
        worst
    }

    /// Conditional distribution of the target given source atom i.
    pub fn disintegration(&self, i: usize) -> Result<Measure1D> {
        let m = self.target_atoms.len();
        Measure1D::new(
            self.target_atoms.clone(),
            self.weights[i * m..(i + 1) * m].to_vec(),
        )
    }

    /// Expected cost sum c(x_i, y_j) w_ij.
    pub fn expected_cost(&self, c: impl Fn(f64, f64) -> f64) -> f64 {
        let m = self.target_atoms.len();
        let mut acc = 0.0;
        for (i, &x) in self.source_atoms.iter().enumerate() {
            for (j, &y) in self.target_atoms.iter().enumerate() {
                acc += self.weights[i * m + j] * c(x, y);
            }
        }
        acc
    }

    pub fn positive_support(&self) -> bool {
        self.source_atoms[0] > 0.0 && self.target_atoms[0] > 0.0
    }
}

/// Transform a coupling cellwise: (x, y, w) -> (1/x, 1/y, y w / b(nu)).
/// Zero-mass rows are dropped first so no 0/0 barycenters arise.
pub fn cn_coupling(pi: &MartingaleCoupling) -> Result<MartingaleCoupling> {
    if !pi.positive_support() {
        return Err(Error::NonPositiveSupport);
    }
    let resid = pi.martingale_residual();
    if resid > MARTINGALE_TOL {
        return Err(Error::MartingaleViolation(resid));
    }
    let (n, m) = (pi.source_atoms().len(), pi.target_atoms().len());
    let b_nu: f64 = {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..m {
                acc += pi.weight(i, j) * pi.target_atoms()[j];
            }
        }
        acc
    };
    // keep rows with mass
    let live: Vec<usize> = (0..n)
        .filter(|&i| (0..m).map(|j| pi.weight(i, j)).sum::<f64>() > 1e-14)
        .collect();
    // transformed atoms come out in reverse order since x -> 1/x is antitone
    let src: Vec<f64> = live
        .iter()
        .rev()
        .map(|&i| 1.0 / pi.source_atoms()[i])
        .collect();
    let tgt: Vec<f64> = pi.target_atoms().iter().rev().map(|&y| 1.0 / y).collect();
    let mut w = vec![0.0; src.len() * tgt.len()];
    for (ri, &i) in live.iter().rev().enumerate() {
        for (rj, j) in (0..m).rev().enumerate() {
            w[ri * tgt.len() + rj] = pi.target_atoms()[j] * pi.weight(i, j) / b_nu;
        }
    }
    MartingaleCoupling::new(src, tgt, w)
}

/// Weighted set of discrete-time paths on a common time grid.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    times: Vec<f64>,
    n_paths: usize,
    /// Flat row-major n_paths x times.len() table.
    values: Vec<f64>,
    /// Positive weights summing to one.
    weights: Vec<f64>,
    /// Set once the martingale diagnostic has passed; see pathlab.
    martingale_checked: bool,
}

impl PathEnsemble {
    pub fn new(times: Vec<f64>, values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = times.len();
        if m < 2 {
            return Err(Error::InvalidArgument("need at least two time points".into()));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::InvalidArgument("times not increasing".into()));
            }
        }
        let n = weights.len();
        if values.len() != n * m || n == 0 {
            return Err(Error::InvalidArgument("path table shape mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite path value".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument("weights must be positive".into()));
        }
        Ok(Self {
            times,
            n_paths: n,
            values,
            weights: weights.iter().map(|w| w / total).collect(),
            martingale_checked: false,
        })
    }

    pub fn is_martingale_checked(&self) -> bool {
        self.martingale_checked
    }

    pub fn set_martingale_checked(&mut self, checked: bool) {
        self.martingale_checked = checked;
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn path(&self, k: usize) -> &[f64] {
        let m = self.times.len();
        &self.values[k * m..(k + 1) * m]
    }

    pub fn values_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }

    /// Weighted empirical marginal at time index `k`.
    pub fn marginal(&self, k: usize) -> Result<Measure1D> {
        let m = self.times.len();
        let vals: Vec<f64> = (0..self.n_paths).map(|p| self.values[p * m + k]).collect();
        Measure1D::from_weighted_samples(&vals, &self.weights)
    }

    pub fn terminal(&self, k: usize) -> f64 {
        let m = self.times.len();
        self.values[k * m + m - 1]
    }

    pub fn initial(&self, k: usize) -> f64 {
        let m = self.times.len();
        self.values[k * m]
    }

    /// Weighted mean of a per-path statistic.
    pub fn weighted_mean(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.n_paths).map(|k| self.weights[k] * f(k)).sum()
    }

    /// Weighted mean and standard error of a per-path statistic.
    pub fn weighted_mean_se(&self, f: impl Fn(usize) -> f64) -> (f64, f64) {
        let vals: Vec<f64> = (0..self.n_paths).map(&f).collect();
        let mean: f64 = vals
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum();
        let var: f64 = vals
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * w * (v - mean) * (v - mean))
            .sum();
        (mean, var.sqrt())
    }
}

/// Transform an ensemble: paths inverted pointwise, path weights multiplied by
/// their terminal value and renormalized. The time grid is unchanged.
pub fn cn_paths(e: &PathEnsemble) -> Result<PathEnsemble> {
    if !e.is_positive() {
        return Err(Error::NonPositivePath);
    }
    let m = e.times().len();
    let mut values = Vec::with_capacity(e.values_flat().len());
    let mut weights = Vec::with_capacity(e.n_paths());
    for k in 0..e.n_paths() {
        let p = e.path(k);
        values.extend(p.iter().map(|&v| 1.0 / v));
        weights.push(e.weights()[k] * p[m - 1]);
    }
    PathEnsemble::new(e.times().to_vec(), values, weights)
}

/// Path cost functional c(path) evaluated on a time grid.
#[derive(Clone)]
pub struct PathCost {
    pub name: String,
    f: Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>,
}

impl PathCost {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, times: &[f64], path: &[f64]) -> f64 {
        (self.f)(times, path)
    }

    /// Weighted ensemble average with standard error.
    pub fn expect(&self, e: &PathEnsemble) -> (f64, f64) {
        e.weighted_mean_se(|k| self.eval(e.times(), e.path(k)))
    }
}

/// Cost transform S*(c)(x) = x_T c(1/x).
pub fn cn_cost_path(c: &PathCost) -> PathCost {
    let inner = c.f.clone();
    PathCost {
        name: format!("cn({})", c.name),
        f: Arc::new(move |times: &[f64], path: &[f64]| {
            let inv: Vec<f64> = path.iter().map(|&v| 1.0 / v).collect();
            path[path.len() - 1] * inner(times, &inv)
        }),
    }
}

/// Weak (measure-valued) cost functional C: P_1(R_++) -> R.
#[derive(Clone)]
pub struct WeakCost {
    pub name: String,
    pub lower_bound: f64,
    f: Arc<dyn Fn(&Measure1D) -> Result<f64> + Send + Sync>,
}

impl WeakCost {
    pub fn new(
        name: impl Into<String>,
        lower_bound: f64,
        f: impl Fn(&Measure1D) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            lower_bound,
            f: Arc::new(f),
        }
    }

    pub fn eval(&self, eta: &Measure1D) -> Result<f64> {
        (self.f)(eta)
    }
}

/// Weak cost transform S*(C)(rho) = b(rho) C(S(rho)).
pub fn cn_cost_weak(c: &WeakCost) -> WeakCost {
    let inner = c.f.clone();
    WeakCost {
        name: format!("cn({})", c.name),
        lower_bound: f64::NEG_INFINITY,
        f: Arc::new(move |rho: &Measure1D| {
            let s_rho = cn_measure(rho)?;
            Ok(rho.barycenter() * inner(&s_rho)?)
        }),
    }
}

/// One row of a lifted coupling: mass w at (x0, u, x1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiftedTriple {
    pub x0: f64,
    pub u: f64,
    pub x1: f64,
    pub w: f64,
}

/// Weighted table over (x0, u, x1) triples; the discrete stand-in for a
/// lifted martingale transport plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedCoupling {
    triples: Vec<LiftedTriple>,
}

impl LiftedCoupling {
    pub fn new(mut triples: Vec<LiftedTriple>) -> Result<Self> {
        triples.retain(|t| t.w > 0.0);
        if triples.is_empty() {
            return Err(Error::InvalidMeasure("empty lifted coupling".into()));
        }
        for t in &triples {
            if !(t.u >= -1e-12 && t.u <= 1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!("u out of [0,1]: {}", t.u)));
            }
            if !t.w.is_finite() || !t.x0.is_finite() || !t.x1.is_finite() {
                return Err(Error::InvalidMeasure("non-finite lifted entry".into()));
            }
        }
        let total: f64 = triples.iter().map(|t| t.w).sum();
        for t in triples.iter_mut() {
            t.w /= total;
        }
        Ok(Self { triples })
    }

    pub fn triples(&self) -> &[LiftedTriple] {
        &self.triples
    }

    pub fn positive_support(&self) -> bool {
        self.triples.iter().all(|t| t.x0 > 0.0 && t.x1 > 0.0)
    }

    /// x1-marginal.
    pub fn target_marginal(&self) -> Result<Measure1D> {
        let xs: Vec<f64> = self.triples.iter().map(|t| t.x1).collect();
        let ws: Vec<f64> = self.triples.iter().map(|t| t.w).collect();
        Measure1D::from_weighted_samples(&xs, &ws)
    }

    /// x0-marginal.
    pub fn source_x_marginal(&self) -> Result<Measure1D> {
        let xs: Vec<f64> = self.triples.iter().map(|t| t.x0).collect();
        let ws: Vec<f64> = self.triples.iter().map(|t| t.w).collect();
        Measure1D::from_weighted_samples(&xs, &ws)
    }

    /// Max over (x0, u) cells of |conditional barycenter - x0|.
    pub fn conditional_barycenter_residual(&self) -> f64 {
        use std::collections::HashMap;
        let mut cells: HashMap<(u64, u64), (f64, f64, f64)> = HashMap::new();
        for t in &self.triples {
            let key = (t.x0.to_bits(), t.u.to_bits());
            let e = cells.entry(key).or_insert((0.0, 0.0, t.x0));
            e.0 += t.w;
            e.1 += t.w * t.x1;
        }
        cells
            .values()
            .filter(|(m, _, _)| *m > 1e-14)
            .map(|(m, s, x0)| (s / m - x0).abs())
            .fold(0.0, f64::max)
    }

    /// Collapse u to get the plain (x0, x1) coupling table.
    pub fn project(&self) -> Result<MartingaleCoupling> {
        let mut xs: Vec<f64> = self.triples.iter().map(|t| t.x0).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs.dedup();
        let mut ys: Vec<f64> = self.triples.iter().map(|t| t.x1).collect();
        ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ys.dedup();
        let mut w = vec![0.0; xs.len() * ys.len()];
        for t in &self.triples {
            let i = xs.partition_point(|&v| v < t.x0);
            let j = ys.partition_point(|&v| v < t.x1);
            w[i * ys.len() + j] += t.w;
        }
        MartingaleCoupling::new(xs, ys, w)
    }
}

/// Extended transform on lifted couplings: (x0, u, x1, w) maps to
/// (1/x0, u, 1/x1, x1 w / Z) with Z = sum x1 w; u rides along untouched.
pub fn cn_lifted(pi: &LiftedCoupling) -> Result<LiftedCoupling> {
    if !pi.positive_support() {
        return Err(Error::NonPositiveSupport);
    }
    let z: f64 = pi.triples().iter().map(|t| t.x1 * t.w).sum();
    let triples = pi
        .triples()
        .iter()
        .map(|t| LiftedTriple {
            x0: 1.0 / t.x0,
            u: t.u,
            x1: 1.0 / t.x1,
            w: t.x1 * t.w / z,
        })
        .collect();
    LiftedCoupling::new(triples)
}
