//! Discrete martingale optimal transport via linear programming: the linear
//! problem, shadow measures, lifted shadow couplings (left-/right-monotone
//! and sunset presets) and their change-of-numeraire correspondence.

pub mod simplex;

use crate::error::{Error, Result};
use crate::measure1d::{convex_order_leq, Measure1D, Potential, CONVEX_ORDER_TOL};
use crate::numeraire::{cn_measure, LiftedCoupling, LiftedTriple, MartingaleCoupling};
use simplex::{Cmp, LpProblem};

/// Tie-breaking perturbation for the lifted shadow LP. The plain cost
/// ignores x0, which ties all within-cell reallocations; the perturbation
/// sqrt(1 + y^2) [(x + 1/x) + (xy + 1/(xy))] breaks them. Both factors are
/// invariant under (x, y) -> (1/x, 1/y), so the perturbed objectives on the
/// two sides of the change-of-numeraire duality stay exactly proportional
/// and both LPs pick corresponding vertices; the xy + 1/(xy) term is
/// supermodular in (ln x, ln y), which orders the within-cell allocation.
const TIE_EPS: f64 = 1e-5;

fn tie_break(x: f64, y: f64) -> f64 {
    let base = (1.0 + y * y).sqrt();
    TIE_EPS * base * ((x + 1.0 / x) + (x * y + 1.0 / (x * y)))
}

/// Sub-probability measure: atoms with raw (unnormalized) weights.
#[derive(Debug, Clone)]
pub struct SubMeasure {
    pub atoms: Vec<f64>,
    pub weights: Vec<f64>,
}

impl SubMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() || atoms.is_empty() {
            return Err(Error::InvalidMeasure("bad sub-measure shape".into()));
        }
        if weights.iter().any(|&w| w < -1e-14 || !w.is_finite()) {
            return Err(Error::InvalidMeasure("negative sub-measure weight".into()));
        }
        // keep atoms ascending; the potential evaluation depends on it
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(Self {
            atoms: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1.max(0.0)).collect(),
        })
    }

    pub fn of(m: &Measure1D, scale: f64) -> Self {
        Self {
            atoms: m.atoms().to_vec(),
            weights: m.weights().iter().map(|w| w * scale).collect(),
        }
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn moment(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| x * w)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment() / self.mass()
    }

    pub fn normalized(&self) -> Result<Measure1D> {
        Measure1D::new(self.atoms.clone(), self.weights.clone())
    }
}

/// Cost table for the linear problem: row-major over mu x nu atoms.
pub fn cost_table(mu: &Measure1D, nu: &Measure1D, c: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut t = Vec::with_capacity(mu.len() * nu.len());
    for &x in mu.atoms() {
        for &y in nu.atoms() {
            t.push(c(x, y));
        }
    }
    t
}

/// Linear martingale optimal transport: minimize sum c(x_i, y_j) w_ij over
/// couplings with the given marginals and row barycenters.
pub fn mot_solve_linear(
    mu: &Measure1D,
    nu: &Measure1D,
    cost: &[f64],
) -> Result<(f64, MartingaleCoupling)> {
    let (n, m) = (mu.len(), nu.len());
    if cost.len() != n * m {
        return Err(Error::InvalidArgument("cost table shape mismatch".into()));
    }
    let mut p = LpProblem::new(n * m, cost.to_vec());
    for i in 0..n {
        let mut row = vec![0.0; n * m];
        row[i * m..(i + 1) * m].fill(1.0);
        p.add_row(row, Cmp::Eq, mu.weights()[i]);
        let mut bary = vec![0.0; n * m];
        for j in 0..m {
            bary[i * m + j] = nu.atoms()[j] - mu.atoms()[i];
        }
        p.add_row(bary, Cmp::Eq, 0.0);
    }
    for j in 0..m {
        let mut col = vec![0.0; n * m];
        for i in 0..n {
            col[i * m + j] = 1.0;
        }
        p.add_row(col, Cmp::Eq, nu.weights()[j]);
    }
    let sol = p.solve()?;
    let pi = MartingaleCoupling::new(mu.atoms().to_vec(), nu.atoms().to_vec(), sol.x)?;
    Ok((sol.value, pi))
}

/// Shadow of a sub-measure in `nu`: the convex-order minimal rho with
/// 0 <= rho <= nu atomwise, matching mass and first moment, dominating theta
/// in convex order. The strictly convex objective sqrt(1 + y^2) selects the
/// minimal element. `caps` restricts the available mass per nu atom
/// (defaults to the full weights).
pub fn shadow_measure_capped(
    theta: &SubMeasure,
    nu: &Measure1D,
    caps: &[f64],
) -> Result<SubMeasure> {
    let m = nu.len();
    assert_eq!(caps.len(), m);
    let obj: Vec<f64> = nu.atoms().iter().map(|&y| (1.0 + y * y).sqrt()).collect();
    let mut p = LpProblem::new(m, obj);
    p.add_row(vec![1.0; m], Cmp::Eq, theta.mass());
    p.add_row(nu.atoms().to_vec(), Cmp::Eq, theta.moment());
    for j in 0..m {
        let mut row = vec![0.0; m];
        row[j] = 1.0;
        p.add_row(row, Cmp::Le, caps[j]);
    }
    // convex-order domination: potentials checked at every kink of either side
    let pot = Potential::of_parts(&theta.atoms, &theta.weights);
    for &z in nu.atoms().iter().chain(&theta.atoms) {
        let row: Vec<f64> = nu.atoms().iter().map(|&y| (y - z).abs()).collect();
        p.add_row(row, Cmp::Ge, pot.eval(z));
    }
    let sol = p.solve()?;
    SubMeasure::new(nu.atoms().to_vec(), sol.x)
}

pub fn shadow_measure(theta: &SubMeasure, nu: &Measure1D) -> Result<SubMeasure> {
    shadow_measure_capped(theta, nu, nu.weights())
}

/// One cell of a source: atom x carrying `mass` on the u-interval
/// [u_lo, u_hi).
#[derive(Debug, Clone, Copy)]
pub struct SourceCell {
    pub x: f64,
    pub u_lo: f64,
    pub u_hi: f64,
    pub mass: f64,
}

impl SourceCell {
    pub fn u_mid(&self) -> f64 {
        0.5 * (self.u_lo + self.u_hi)
    }
}

/// Probability on R_++ x [0,1] with x-marginal mu, discretized over K
/// equal-width u-cells. The presets realize the couplings of interest:
/// monotone (u = F_mu(x)) gives the left-monotone coupling, antitone the
/// right-monotone one, product the sunset coupling.
#[derive(Debug, Clone)]
pub struct Source {
    cells: Vec<SourceCell>,
    mu: Measure1D,
    pub k: usize,
}

impl Source {
    pub fn monotone(mu: &Measure1D, k: usize) -> Self {
        Self::from_u_intervals(mu, k, false)
    }

    pub fn antitone(mu: &Measure1D, k: usize) -> Self {
        Self::from_u_intervals(mu, k, true)
    }

    fn from_u_intervals(mu: &Measure1D, k: usize, reversed: bool) -> Self {
        assert!(k >= 1);
        let mut cells = Vec::new();
        let mut c = 0.0;
        for (&x, &w) in mu.atoms().iter().zip(mu.weights()) {
            let (lo, hi) = if reversed {
                (1.0 - c - w, 1.0 - c)
            } else {
                (c, c + w)
            };
            // split the atom's u-interval at the K-cell boundaries
            let first = (lo * k as f64).floor() as usize;
            let last = ((hi * k as f64).ceil() as usize).min(k);
            for cell in first..last {
                let a = (cell as f64 / k as f64).max(lo);
                let b = ((cell + 1) as f64 / k as f64).min(hi);
                if b - a > 1e-14 {
                    cells.push(SourceCell {
                        x,
                        u_lo: a,
                        u_hi: b,
                        mass: b - a,
                    });
                }
            }
            c += w;
        }
        cells.sort_by(|a, b| a.u_lo.partial_cmp(&b.u_lo).unwrap());
        Self {
            cells,
            mu: mu.clone(),
            k,
        }
    }

    pub fn product(mu: &Measure1D, k: usize) -> Self {
        assert!(k >= 1);
        let mut cells = Vec::new();
        for cell in 0..k {
            let (a, b) = (cell as f64 / k as f64, (cell + 1) as f64 / k as f64);
            for (&x, &w) in mu.atoms().iter().zip(mu.weights()) {
                cells.push(SourceCell {
                    x,
                    u_lo: a,
                    u_hi: b,
                    mass: w / k as f64,
                });
            }
        }
        Self {
            cells,
            mu: mu.clone(),
            k,
        }
    }

    pub fn cells(&self) -> &[SourceCell] {
        &self.cells
    }

    pub fn mu(&self) -> &Measure1D {
        &self.mu
    }
}

/// Change of numeraire on a source: cells map to (1/x, same u-interval) with
/// mass x m / b(mu); the x-marginal becomes the transformed measure.
pub fn cn_source(src: &Source) -> Result<Source> {
    if !src.mu.positive_support() {
        return Err(Error::NonPositiveSupport);
    }
    let b = src.mu.barycenter();
    let cells: Vec<SourceCell> = src
        .cells
        .iter()
        .map(|c| SourceCell {
            x: 1.0 / c.x,
            u_lo: c.u_lo,
            u_hi: c.u_hi,
            mass: c.x * c.mass / b,
        })
        .collect();
    Ok(Source {
        cells,
        mu: cn_measure(&src.mu)?,
        k: src.k,
    })
}

fn shadow_objective(u_mid: f64, x: f64, y: f64) -> f64 {
    (1.0 - u_mid) * (1.0 + y * y).sqrt() + tie_break(x, y)
}

/// Alternative strictly-decreasing-in-u, strictly-convex-in-y objective for
/// the uniqueness probe.
fn probe_objective(u_mid: f64, x: f64, y: f64) -> f64 {
    (-u_mid).exp() * y.cosh() + tie_break(x, y)
}

fn lifted_lp(
    src: &Source,
    nu: &Measure1D,
    objective: impl Fn(f64, f64, f64) -> f64,
) -> Result<(f64, LiftedCoupling)> {
    let cells = src.cells();
    let (nc, m) = (cells.len(), nu.len());
    let obj: Vec<f64> = cells
        .iter()
        .flat_map(|c| {
            nu.atoms()
                .iter()
                .map(|&y| objective(c.u_mid(), c.x, y))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut p = LpProblem::new(nc * m, obj);
    for (i, c) in cells.iter().enumerate() {
        let mut row = vec![0.0; nc * m];
        row[i * m..(i + 1) * m].fill(1.0);
        p.add_row(row, Cmp::Eq, c.mass);
        let mut bary = vec![0.0; nc * m];
        for j in 0..m {
            bary[i * m + j] = nu.atoms()[j] - c.x;
        }
        p.add_row(bary, Cmp::Eq, 0.0);
    }
    for j in 0..m {
        let mut col = vec![0.0; nc * m];
        for i in 0..nc {
            col[i * m + j] = 1.0;
        }
        p.add_row(col, Cmp::Eq, nu.weights()[j]);
    }
    let sol = p.solve()?;
    let mut triples = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        for (j, &y) in nu.atoms().iter().enumerate() {
            let w = sol.x[i * m + j];
            if w > 1e-13 {
                triples.push(LiftedTriple {
                    x0: c.x,
                    u: c.u_mid(),
                    x1: y,
                    w,
                });
            }
        }
    }
    Ok((sol.value, LiftedCoupling::new(triples)?))
}

/// Shadow coupling of the source and `nu`: the optimizer of the lifted LP
/// with cost (1 - u) sqrt(1 + x1^2).
pub fn shadow_coupling(src: &Source, nu: &Measure1D) -> Result<(f64, LiftedCoupling)> {
    if !convex_order_leq(&src.mu, nu, CONVEX_ORDER_TOL) {
        return Err(Error::Infeasible);
    }
    lifted_lp(src, nu, shadow_objective)
}

/// Uniqueness probe: re-solve with the equivalent objective
/// exp(-u) cosh(y); the projection should not move on irreducible instances.
pub fn shadow_coupling_probe(src: &Source, nu: &Measure1D) -> Result<(f64, LiftedCoupling)> {
    lifted_lp(src, nu, probe_objective)
}

/// Incremental construction of the same object: walk u-cells in increasing
/// order, give each one the shadow of its mass in the remaining target, and
/// couple within the cell by a feasibility LP. Cross-validates the single
/// lifted LP.
pub fn shadow_coupling_incremental(src: &Source, nu: &Measure1D) -> Result<LiftedCoupling> {
    if !convex_order_leq(&src.mu, nu, CONVEX_ORDER_TOL) {
        return Err(Error::Infeasible);
    }
    let mut caps = nu.weights().to_vec();
    let mut triples = Vec::new();
    // group cells sharing a u-interval (the product preset has one group per
    // u-cell; monotone/antitone groups are single cells)
    let cells = src.cells();
    let mut i = 0;
    while i < cells.len() {
        let mut j = i + 1;
        while j < cells.len() && (cells[j].u_lo - cells[i].u_lo).abs() < 1e-14 {
            j += 1;
        }
        let group = &cells[i..j];
        let theta = SubMeasure::new(
            group.iter().map(|c| c.x).collect(),
            group.iter().map(|c| c.mass).collect(),
        )?;
        let rho = shadow_measure_capped(&theta, nu, &caps)?;
        for (c, r) in caps.iter_mut().zip(&rho.weights) {
            *c = (*c - r).max(0.0);
        }
        let u_mid = group[0].u_mid();
        if group.len() == 1 {
            for (&y, &w) in rho.atoms.iter().zip(&rho.weights) {
                if w > 1e-13 {
                    triples.push(LiftedTriple {
                        x0: group[0].x,
                        u: u_mid,
                        x1: y,
                        w,
                    });
                }
            }
        } else {
            // distribute the group's shadow across its atoms with the same
            // tie-break cost the one-shot LP uses, so both constructions and
            // both sides of the numeraire duality make the same choice
            let (n, m) = (group.len(), rho.atoms.len());
            let obj: Vec<f64> = group
                .iter()
                .flat_map(|c| {
                    rho.atoms
                        .iter()
                        .map(|&y| tie_break(c.x, y))
                        .collect::<Vec<_>>()
                })
                .collect();
            let mut p = LpProblem::new(n * m, obj);
            for (r, c) in group.iter().enumerate() {
                let mut row = vec![0.0; n * m];
                row[r * m..(r + 1) * m].fill(1.0);
                p.add_row(row, Cmp::Eq, c.mass);
                let mut bary = vec![0.0; n * m];
                for (jj, &y) in rho.atoms.iter().enumerate() {
                    bary[r * m + jj] = y - c.x;
                }
                p.add_row(bary, Cmp::Eq, 0.0);
            }
            for (jj, &w) in rho.weights.iter().enumerate() {
                let mut col = vec![0.0; n * m];
                for r in 0..n {
                    col[r * m + jj] = 1.0;
                }
                p.add_row(col, Cmp::Eq, w);
            }
            let sol = p.solve()?;
            for (r, c) in group.iter().enumerate() {
                for (jj, &y) in rho.atoms.iter().enumerate() {
                    let w = sol.x[r * m + jj];
                    if w > 1e-13 {
                        triples.push(LiftedTriple {
                            x0: c.x,
                            u: u_mid,
                            x1: y,
                            w,
                        });
                    }
                }
            }
        }
        i = j;
    }
    LiftedCoupling::new(triples)
}

/// Inner weak-transport cost of a single source slice at x = m: the lifted
/// LP from delta_m (x) (u-cells) to eta with cost (1 - u) sqrt(1 + x1^2).
/// `u_cells` lists (u_lo, u_hi, mass).
pub fn weak_shadow_cost(eta: &Measure1D, u_cells: &[(f64, f64, f64)], m: f64) -> Result<f64> {
    if (eta.barycenter() - m).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "slice barycenter {m} does not match b(eta) = {}",
            eta.barycenter()
        )));
    }
    let (nc, ny) = (u_cells.len(), eta.len());
    let obj: Vec<f64> = u_cells
        .iter()
        .flat_map(|&(lo, hi, _)| {
            let u_mid = 0.5 * (lo + hi);
            eta.atoms()
                .iter()
                .map(|&y| (1.0 - u_mid) * (1.0 + y * y).sqrt())
                .collect::<Vec<_>>()
        })
        .collect();
    let mut p = LpProblem::new(nc * ny, obj);
    for (i, &(_, _, mass)) in u_cells.iter().enumerate() {
        let mut row = vec![0.0; nc * ny];
        row[i * ny..(i + 1) * ny].fill(1.0);
        p.add_row(row, Cmp::Eq, mass);
        let mut bary = vec![0.0; nc * ny];
        for (j, &y) in eta.atoms().iter().enumerate() {
            bary[i * ny + j] = y - m;
        }
        p.add_row(bary, Cmp::Eq, 0.0);
    }
    let total: f64 = u_cells.iter().map(|c| c.2).sum();
    for (j, &w) in eta.weights().iter().enumerate() {
        let mut col = vec![0.0; nc * ny];
        for i in 0..nc {
            col[i * ny + j] = 1.0;
        }
        p.add_row(col, Cmp::Eq, w * total);
    }
    Ok(p.solve()?.value)
}

/// Largest elementwise weight difference between two couplings over the
/// union of their atom grids (atoms matched within 1e-9).
pub fn coupling_max_diff(a: &MartingaleCoupling, b: &MartingaleCoupling) -> f64 {
    let match_idx = |atoms: &[f64], x: f64| -> Option<usize> {
        atoms
            .iter()
            .position(|&v| (v - x).abs() <= 1e-9 * x.abs().max(1.0))
    };
    let mut xs: Vec<f64> = a
        .source_atoms()
        .iter()
        .chain(b.source_atoms())
        .copied()
        .collect();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xs.dedup_by(|p, q| (*p - *q).abs() <= 1e-9 * p.abs().max(1.0));
    let mut ys: Vec<f64> = a
        .target_atoms()
        .iter()
        .chain(b.target_atoms())
        .copied()
        .collect();
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.dedup_by(|p, q| (*p - *q).abs() <= 1e-9 * p.abs().max(1.0));
    let weight = |c: &MartingaleCoupling, x: f64, y: f64| -> f64 {
        match (match_idx(c.source_atoms(), x), match_idx(c.target_atoms(), y)) {
            (Some(i), Some(j)) => c.weight(i, j),
            _ => 0.0,
        }
    };
    let mut worst: f64 = 0.0;
    for &x in &xs {
        for &y in &ys {
            worst = worst.max((weight(a, x, y) - weight(b, x, y)).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ShadowReport {
    /// Elementwise max difference between the two projections.
    pub max_diff: f64,
    pub value_original: f64,
    pub value_transformed: f64,
    pub pass: bool,
}

/// How to compute a shadow coupling: the one-shot lifted LP, or the
/// incremental cumulative-shadow construction (the same optimizer, built
/// from many small LPs; much faster on large sources).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShadowMethod {
    Lp,
    Incremental,
}

fn solve_shadow(src: &Source, nu: &Measure1D, method: ShadowMethod) -> Result<(f64, LiftedCoupling)> {
    match method {
        ShadowMethod::Lp => shadow_coupling(src, nu),
        ShadowMethod::Incremental => {
            let lifted = shadow_coupling_incremental(src, nu)?;
            let value = lifted
                .triples()
                .iter()
                .map(|t| shadow_objective(t.u, t.x0, t.x1) * t.w)
                .sum();
            Ok((value, lifted))
        }
    }
}

/// Change-of-numeraire correspondence of shadow couplings: transforming the
/// optimizer must give the optimizer of the transformed problem.
pub fn verify_cn_shadow_with(
    src: &Source,
    nu: &Measure1D,
    tol: f64,
    method: ShadowMethod,
) -> Result<ShadowReport> {
    if !src.mu().positive_support() || !nu.positive_support() {
        return Err(Error::NonPositiveSupport);
    }
    let (va, lifted) = solve_shadow(src, nu, method)?;
    let a = crate::numeraire::cn_coupling(&lifted.project()?)?;
    let (vb, lifted_b) = solve_shadow(&cn_source(src)?, &cn_measure(nu)?, method)?;
    let b = lifted_b.project()?;
    let max_diff = coupling_max_diff(&a, &b);
    Ok(ShadowReport {
        max_diff,
        value_original: va,
        value_transformed: vb,
        pass: max_diff <= tol,
    })
}

pub fn verify_cn_shadow(src: &Source, nu: &Measure1D, tol: f64) -> Result<ShadowReport> {
    verify_cn_shadow_with(src, nu, tol, ShadowMethod::Lp)
}

/// Left-monotone crossing rule: no x < x' whose target supports interleave
/// as y1 < y2 < y3 with (x,y1), (x,y3), (x',y2) all charged.
pub fn is_left_monotone(pi: &MartingaleCoupling, tol: f64) -> bool {
    let (n, m) = (pi.source_atoms().len(), pi.target_atoms().len());
    for i in 0..n {
        for ip in i + 1..n {
            for j2 in 0..m {
                if pi.weight(ip, j2) <= tol {
                    continue;
                }
                let lower = (0..j2).any(|j1| pi.weight(i, j1) > tol);
                let upper = (j2 + 1..m).any(|j3| pi.weight(i, j3) > tol);
                if lower && upper {
                    return false;
                }
            }
        }
    }
    true
}
