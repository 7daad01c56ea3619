//! Bass fixed-point solver for stretched Brownian motion between two
//! marginals in convex order, plus the maximal-covariance functional and
//! transport values derived from the fixed point.
//!
//! The iteration runs on a uniform grid: starting from the standard normal
//! CDF, each step smooths the iterate with a unit Gaussian, composes with the
//! target quantile, smooths again and composes with the source CDF. The fixed
//! point is unique up to translation; each iterate is re-centred so the
//! underlying measure has barycenter zero, by shifting the argument of the
//! smooth inner map rather than resampling the (possibly discontinuous) CDF.

use crate::error::{Error, Result};
use crate::gauss::{self, interp, smooth_uniform};
use crate::measure1d::{
    gaussian_convolve_cdf, irreducible_components, CdfGrid, Marginal, Measure1D,
};
use crate::numeraire::cn_measure;

/// Solver settings. The defaults resolve well-spread marginals; widen
/// `half_width` (or let the solver auto-expand) for heavy-tailed inputs.
#[derive(Debug, Clone)]
pub struct BassConfig {
    pub n_grid: usize,
    pub half_width: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Acceptable CDF mass outside the grid; exceeding it triggers expansion.
    pub boundary_mass: f64,
}

impl Default for BassConfig {
    fn default() -> Self {
        Self {
            n_grid: 2048,
            half_width: 12.0,
            tol: 1e-8,
            max_iter: 500,
            boundary_mass: 1e-9,
        }
    }
}

/// Monotone increasing map stored as values on a grid, evaluated by linear
/// interpolation with constant extension.
#[derive(Debug, Clone)]
pub struct MapGrid {
    grid: Vec<f64>,
    vals: Vec<f64>,
}

impl MapGrid {
    pub fn new(grid: Vec<f64>, vals: Vec<f64>) -> Self {
        assert_eq!(grid.len(), vals.len());
        Self { grid, vals }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn vals(&self) -> &[f64] {
        &self.vals
    }

    pub fn eval(&self, x: f64) -> f64 {
        interp(&self.grid, &self.vals, x)
    }
}

/// The monotone (quantile) rearrangement Q_b(F_a(x)).
pub fn monotone_map<'a>(a: &'a Marginal, b: &'a Marginal) -> impl Fn(f64) -> f64 + 'a {
    move |x| b.quantile(a.cdf(x))
}

/// Smooth inner map of the fixed-point step: the unit-Gaussian smoothing of
/// Q_nu composed with the unit-Gaussian smoothing of `f`.
fn smooth_map(h: f64, f: &[f64], nu: &Marginal) -> Vec<f64> {
    let g = smooth_uniform(h, f, 1.0);
    let q: Vec<f64> = g.iter().map(|&u| nu.quantile(u.clamp(0.0, 1.0))).collect();
    smooth_uniform(h, &q, 1.0)
}

/// One (unpinned) fixed-point step applied to CDF values `f` on a uniform
/// grid of spacing `h`.
pub fn bass_operator(h: f64, f: &[f64], mu: &Marginal, nu: &Marginal) -> Vec<f64> {
    smooth_map(h, f, nu).iter().map(|&v| mu.cdf(v)).collect()
}

/// Barycenter of the measure with CDF values `f` on `grid` (midpoint
/// Stieltjes; boundary mass sits at the grid ends).
fn cdf_barycenter(grid: &[f64], f: &[f64]) -> f64 {
    let n = grid.len();
    let mut acc = f[0] * grid[0] + (1.0 - f[n - 1]) * grid[n - 1];
    for i in 0..n - 1 {
        acc += (f[i + 1] - f[i]) * 0.5 * (grid[i] + grid[i + 1]);
    }
    acc
}

/// Expectation of the piecewise-linear integrand with node values `p` against
/// the measure with CDF values `f` on `grid`.
fn stieltjes_expect(grid: &[f64], f: &[f64], p: &[f64]) -> f64 {
    let n = grid.len();
    let mut acc = f[0] * p[0] + (1.0 - f[n - 1]) * p[n - 1];
    for i in 0..n - 1 {
        acc += (f[i + 1] - f[i]) * 0.5 * (p[i] + p[i + 1]);
    }
    acc
}

/// Converged fixed point: the Bass measure CDF plus the terminal transport
/// map, from which the maps at interior times and the transport value follow.
#[derive(Debug, Clone)]
pub struct BassSolution {
    grid: Vec<f64>,
    h: f64,
    f_alpha: Vec<f64>,
    t1_vals: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

impl BassSolution {
    /// CDF of the Bass measure (barycenter-pinned to zero).
    pub fn alpha(&self) -> CdfGrid {
        CdfGrid::new(self.grid.clone(), self.f_alpha.clone()).expect("valid by construction")
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn alpha_cdf_values(&self) -> &[f64] {
        &self.f_alpha
    }

    pub fn t1_values(&self) -> &[f64] {
        &self.t1_vals
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Terminal map pushing the unit-time Gaussian spread of alpha to nu.
    pub fn t1(&self) -> MapGrid {
        MapGrid::new(self.grid.clone(), self.t1_vals.clone())
    }

    /// Transport map at time t in [0, 1]: the terminal map smoothed with a
    /// Gaussian of standard deviation sqrt(1 - t).
    pub fn map_at_time(&self, t: f64) -> MapGrid {
        assert!((0.0..=1.0).contains(&t), "time out of [0,1]");
        let s = (1.0 - t).sqrt();
        MapGrid::new(self.grid.clone(), smooth_uniform(self.h, &self.t1_vals, s))
    }

    /// Transport value E[X_1 B_1] - E[X_0 B_0] of the stretched Brownian
    /// motion, by Stieltjes quadrature against alpha and its unit-time
    /// Gaussian spread.
    pub fn value(&self) -> Result<f64> {
        let t0 = self.map_at_time(0.0);
        let p0: Vec<f64> = self
            .grid
            .iter()
            .zip(t0.vals())
            .map(|(&x, &v)| x * v)
            .collect();
        let e0 = stieltjes_expect(&self.grid, &self.f_alpha, &p0);

        let spread = gaussian_convolve_cdf(&self.alpha(), 1.0)?;
        let t1 = self.t1();
        let p1: Vec<f64> = spread
            .grid()
            .iter()
            .map(|&x| x * t1.eval(x))
            .collect();
        let e1 = stieltjes_expect(spread.grid(), spread.values(), &p1);
        Ok(e1 - e0)
    }
}

fn validate_pair(mu: &Marginal, nu: &Marginal) -> Result<()> {
    let (a, b) = (mu.to_measure()?, nu.to_measure()?);
    if let (Marginal::Atomic(ma), Marginal::Atomic(mn)) = (mu, nu) {
        let dec = irreducible_components(ma, mn, crate::measure1d::CONVEX_ORDER_TOL)?;
        if dec.components.len() != 1 || dec.frozen_mass() > 1e-12 {
            return Err(Error::ReduciblePair(format!(
                "{} components, frozen mass {:.3e}",
                dec.components.len(),
                dec.frozen_mass()
            )));
        }
        return Ok(());
    }
    // grid marginals: atomized convex-order check plus strict variance gap
    if !crate::measure1d::convex_order_leq(&a, &b, 1e-6) {
        return Err(Error::NotInConvexOrder);
    }
    if b.variance() - a.variance() < 1e-12 {
        return Err(Error::ReduciblePair("no variance gap".into()));
    }
    Ok(())
}

fn solve_on_grid(
    mu: &Marginal,
    nu: &Marginal,
    cfg: &BassConfig,
    half: f64,
) -> Result<BassSolution> {
    let n = cfg.n_grid;
    let h = 2.0 * half / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| -half + h * i as f64).collect();
    let mut f: Vec<f64> = grid.iter().map(|&x| gauss::cdf(x)).collect();
    let mut prev: Option<Vec<f64>> = None;
    let mut history = Vec::new();

    for iter in 1..=cfg.max_iter {
        let m_vals = smooth_map(h, &f, nu);
        let f_tilde: Vec<f64> = m_vals.iter().map(|&v| mu.cdf(v)).collect();
        let shift = cdf_barycenter(&grid, &f_tilde);
        let f_next: Vec<f64> = grid
            .iter()
            .map(|&x| mu.cdf(interp(&grid, &m_vals, x + shift)))
            .collect();

        let sup = f_next
            .iter()
            .zip(&f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        history.push(sup);
        // discontinuous CDFs can settle into a two-cycle whose jump hops
        // between adjacent grid nodes; comparing against the iterate two
        // steps back catches that
        let cycle = prev
            .as_ref()
            .map(|p| {
                f_next
                    .iter()
                    .zip(p)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .unwrap_or(f64::INFINITY);
        prev = Some(std::mem::replace(&mut f, f_next));

        if sup < cfg.tol || cycle < cfg.tol {
            let g = smooth_uniform(h, &f, 1.0);
            let t1_vals: Vec<f64> = g.iter().map(|&u| nu.quantile(u.clamp(0.0, 1.0))).collect();
            return Ok(BassSolution {
                grid,
                h,
                f_alpha: f,
                t1_vals,
                iterations: iter,
                residual: sup,
                residual_history: history,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iter,
        residual: *history.last().unwrap_or(&f64::NAN),
    })
}

/// Solve the fixed-point equation for an irreducible convex-ordered pair.
/// The grid auto-expands while the Bass measure leaks mass past its edges.
pub fn bass_solve(mu: &Marginal, nu: &Marginal, cfg: &BassConfig) -> Result<BassSolution> {
    validate_pair(mu, nu)?;
    let mut half = cfg.half_width;
    let mut last = None;
    for _ in 0..5 {
        let sol = solve_on_grid(mu, nu, cfg, half)?;
        let leak = sol.f_alpha[0].max(1.0 - sol.f_alpha[cfg.n_grid - 1]);
        if leak <= cfg.boundary_mass {
            return Ok(sol);
        }
        last = Some(sol);
        half *= 1.5;
    }
    Ok(last.expect("at least one solve attempt"))
}

/// Per-component outcome of [`bass_solve_components`].
#[derive(Debug, Clone)]
pub enum BassPart {
    /// Mass transported identically (mu and nu agree here): constant paths.
    Frozen(Measure1D),
    /// Genuine component with its fixed-point solution.
    Solved {
        mu: Measure1D,
        nu: Measure1D,
        solution: BassSolution,
    },
}

#[derive(Debug, Clone)]
pub struct ComponentSolution {
    pub mass: f64,
    pub part: BassPart,
}

/// Decompose an atomic pair into irreducible components and solve each one;
/// frozen mass is returned as-is for constant-path transport.
pub fn bass_solve_components(
    mu: &Measure1D,
    nu: &Measure1D,
    cfg: &BassConfig,
) -> Result<Vec<ComponentSolution>> {
    let dec = irreducible_components(mu, nu, crate::measure1d::CONVEX_ORDER_TOL)?;
    let mut out = Vec::new();
    for c in &dec.components {
        let solution = bass_solve(
            &Marginal::Atomic(c.mu.clone()),
            &Marginal::Atomic(c.nu.clone()),
            cfg,
        )?;
        out.push(ComponentSolution {
            mass: c.mass,
            part: BassPart::Solved {
                mu: c.mu.clone(),
                nu: c.nu.clone(),
                solution,
            },
        });
    }
    if dec.frozen_mass() > 0.0 {
        let atoms: Vec<f64> = dec.frozen.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = dec.frozen.iter().map(|p| p.1).collect();
        out.push(ComponentSolution {
            mass: dec.frozen_mass(),
            part: BassPart::Frozen(Measure1D::new(atoms, weights)?),
        });
    }
    Ok(out)
}

/// Maximal covariance with the standard Gaussian, int_0^1 Q_eta(u) Qn(u) du
/// with Qn the standard normal quantile. Exact for atomic measures via the
/// antiderivative of the normal quantile, -phi(Qn(u)).
pub fn mcov(eta: &Measure1D) -> f64 {
    let mut c = 0.0;
    let mut prev = 0.0; // phi(Qn(0)) = 0
    let mut acc = 0.0;
    let n = eta.len();
    for (i, (&x, &w)) in eta.atoms().iter().zip(eta.weights()).enumerate() {
        c += w;
        let cur = if i + 1 == n || c >= 1.0 {
            0.0
        } else {
            gauss::pdf(gauss::quantile(c))
        };
        acc += x * (prev - cur);
        prev = cur;
    }
    acc
}

/// [`mcov`] for either marginal representation (grids are atomized at their
/// own resolution first).
pub fn mcov_marginal(eta: &Marginal) -> Result<f64> {
    Ok(mcov(&eta.to_measure()?))
}

/// Transport value of stretched Brownian motion between `mu` and `nu`.
pub fn value_sbm(mu: &Marginal, nu: &Marginal, cfg: &BassConfig) -> Result<f64> {
    bass_solve(mu, nu, cfg)?.value()
}

/// Value of geometric stretched Brownian motion between positive marginals:
/// the change of numeraire sends it to plain stretched Brownian motion, so
/// the value is b(mu) times the plain value of the transformed pair.
pub fn value_gsbm(mu: &Measure1D, nu: &Measure1D, cfg: &BassConfig) -> Result<f64> {
    let smu = cn_measure(mu)?;
    let snu = cn_measure(nu)?;
    let v = value_sbm(&Marginal::Atomic(smu), &Marginal::Atomic(snu), cfg)?;
    Ok(mu.barycenter() * v)
}
