//! Dense two-phase primal simplex.
//!
//! Small martingale-transport instances (a few thousand variables) fit the
//! dense tableau comfortably, so no sparse machinery is used. Pricing is
//! Dantzig (most negative reduced cost) for speed, falling back to Bland's
//! rule when the objective stalls, which restores the anti-cycling guarantee.

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;
/// Iterations of no objective progress before switching to Bland's rule.
const STALL_LIMIT: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cmp {
    Eq,
    Le,
    Ge,
}

/// Linear program: minimize c.x subject to the added rows, x >= 0.
#[derive(Debug, Clone)]
pub struct LpProblem {
    n_vars: usize,
    c: Vec<f64>,
    rows: Vec<Vec<f64>>,
    cmps: Vec<Cmp>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

impl LpProblem {
    pub fn new(n_vars: usize, objective: Vec<f64>) -> Self {
        assert_eq!(objective.len(), n_vars);
        Self {
            n_vars,
            c: objective,
            rows: Vec::new(),
            cmps: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) {
        assert_eq!(coeffs.len(), self.n_vars);
        self.rows.push(coeffs);
        self.cmps.push(cmp);
        self.rhs.push(rhs);
    }

    pub fn solve(&self) -> Result<LpSolution> {
        Tableau::build(self).solve()
    }
}

struct Tableau {
    m: usize,       // rows
    n_struct: usize, // original + slack columns
    n_total: usize,  // + artificial columns
    /// m rows of length n_total + 1 (last entry is the rhs).
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    /// artificial column index per row (usize::MAX when the slack serves).
    cost: Vec<f64>, // phase-2 costs over structural columns
    n_orig: usize,
    iterations: usize,
}

impl Tableau {
    fn build(p: &LpProblem) -> Self {
        let m = p.rows.len();
        let n_slack = p.cmps.iter().filter(|c| **c != Cmp::Eq).count();
        let n_struct = p.n_vars + n_slack;
        // artificial per row except Le rows with nonnegative rhs, whose slack
        // can start basic
        let needs_art: Vec<bool> = p
            .cmps
            .iter()
            .zip(&p.rhs)
            .map(|(c, &b)| !(*c == Cmp::Le && b >= 0.0))
            .collect();
        let n_art = needs_art.iter().filter(|&&x| x).count();
        let n_total = n_struct + n_art;

        let mut t = vec![vec![0.0; n_total + 1]; m];
        let mut basis = vec![usize::MAX; m];
        let mut slack_col = p.n_vars;
        let mut art_col = n_struct;
        for i in 0..m {
            let row = &mut t[i];
            row[..p.n_vars].copy_from_slice(&p.rows[i]);
            row[n_total] = p.rhs[i];
            match p.cmps[i] {
                Cmp::Eq => {}
                Cmp::Le => {
                    row[slack_col] = 1.0;
                    if !needs_art[i] {
                        basis[i] = slack_col;
                    }
                    slack_col += 1;
                }
                Cmp::Ge => {
                    row[slack_col] = -1.0;
                    slack_col += 1;
                }
            }
            if row[n_total] < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            if needs_art[i] {
                row[art_col] = 1.0;
                basis[i] = art_col;
                art_col += 1;
            }
        }
        let mut cost = vec![0.0; n_struct];
        cost[..p.n_vars].copy_from_slice(&p.c);
        Self {
            m,
            n_struct,
            n_total,
            t,
            basis,
            cost,
            n_orig: p.n_vars,
            iterations: 0,
        }
    }

    /// Reduced-cost row for cost vector `c` (over all columns, artificials
    /// priced at their entries of `c`).
    fn reduced_costs(&self, c: &[f64]) -> (Vec<f64>, f64) {
        let mut d = c.to_vec();
        let mut obj = 0.0;
        for i in 0..self.m {
            let cb = c[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i];
                for j in 0..self.n_total {
                    d[j] -= cb * row[j];
                }
                obj += cb * row[self.n_total];
            }
        }
        (d, obj)
    }

    fn pivot(&mut self, r: usize, col: usize, d: &mut [f64], obj: &mut f64) {
        let mut prow = std::mem::take(&mut self.t[r]);
        let inv = 1.0 / prow[col];
        for v in prow.iter_mut() {
            *v *= inv;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i][col];
            if f != 0.0 {
                let row = &mut self.t[i];
                for (a, &b) in row.iter_mut().zip(prow.iter()) {
                    *a -= f * b;
                }
                row[col] = 0.0; // exact zero against roundoff
            }
        }
        let f = d[col];
        if f != 0.0 {
            for (a, &b) in d.iter_mut().zip(prow.iter()) {
                *a -= f * b;
            }
            d[col] = 0.0;
            *obj += f * prow[self.n_total];
        }
        self.t[r] = prow;
        self.basis[r] = col;
    }

    /// Run the simplex loop minimizing the reduced costs `d` until optimal.
    /// `allowed` bounds the column range eligible to enter.
    fn iterate(&mut self, d: &mut Vec<f64>, obj: &mut f64, allowed: usize) -> Result<()> {
        let max_iter = 200 * (self.m + self.n_total).max(100);
        let mut best_obj = *obj;
        let mut stall = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > max_iter {
                return Err(Error::IterationLimit(max_iter));
            }
            let bland = stall > STALL_LIMIT;
            let mut col = usize::MAX;
            let mut best = -EPS;
            for j in 0..allowed {
                if d[j] < best {
                    col = j;
                    best = d[j];
                    if bland {
                        break;
                    }
                }
            }
            if col == usize::MAX {
                return Ok(());
            }
            // ratio test; ties resolved toward the smallest basis index
            let mut r = usize::MAX;
            let mut best_ratio = f64::INFINITY;
            for i in 0..self.m {
                let a = self.t[i][col];
                if a > EPS {
                    let ratio = self.t[i][self.n_total] / a;
                    if ratio < best_ratio - 1e-12
                        || (ratio < best_ratio + 1e-12
                            && r != usize::MAX
                            && self.basis[i] < self.basis[r])
                    {
                        r = i;
                        best_ratio = ratio;
                    }
                }
            }
            if r == usize::MAX {
                return Err(Error::Unbounded);
            }
            self.pivot(r, col, d, obj);
            if *obj < best_obj - 1e-12 {
                best_obj = *obj;
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }

    fn solve(mut self) -> Result<LpSolution> {
        // phase 1: minimize the sum of artificials
        if self.n_total > self.n_struct {
            let mut c1 = vec![0.0; self.n_total];
            for j in self.n_struct..self.n_total {
                c1[j] = 1.0;
            }
            let (mut d, mut obj) = self.reduced_costs(&c1);
            self.iterate(&mut d, &mut obj, self.n_total)?;
            if obj > 1e-7 {
                return Err(Error::Infeasible);
            }
            // drive residual artificials out of the basis
            for i in 0..self.m {
                if self.basis[i] >= self.n_struct {
                    let col = (0..self.n_struct).find(|&j| self.t[i][j].abs() > 1e-7);
                    match col {
                        Some(j) => self.pivot(i, j, &mut d, &mut obj),
                        None => {
                            // redundant row: blank it so it can never pivot
                            let row = &mut self.t[i];
                            for v in row.iter_mut() {
                                *v = 0.0;
                            }
                        }
                    }
                }
            }
        }
        // phase 2 over structural columns only
        let mut c2 = vec![0.0; self.n_total];
        c2[..self.n_struct].copy_from_slice(&self.cost);
        let (mut d, mut obj) = self.reduced_costs(&c2);
        self.iterate(&mut d, &mut obj, self.n_struct)?;

        let mut x = vec![0.0; self.n_orig];
        for i in 0..self.m {
            if self.basis[i] < self.n_orig {
                x[self.basis[i]] = self.t[i][self.n_total].max(0.0);
            }
        }
        let value = x
            .iter()
            .zip(&self.cost[..self.n_orig])
            .map(|(a, b)| a * b)
            .sum();
        Ok(LpSolution {
            value,
            x,
            iterations: self.iterations,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tiny_transport_value() {
        // transport delta_0 to delta_1 with |x - y| cost: one variable w = 1
        let mut p = LpProblem::new(1, vec![1.0]);
        p.add_row(vec![1.0], Cmp::Eq, 1.0);
        let s = p.solve().unwrap();
        assert_abs_diff_eq!(s.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_by_two_assignment_unique_vertex() {
        // min 1*w00 + 3*w01 + 2*w10 + 1*w11 with doubly stochastic rows/cols
        // of mass 1/2; unique optimum w00 = w11 = 1/2, value 1
        let mut p = LpProblem::new(4, vec![1.0, 3.0, 2.0, 1.0]);
        p.add_row(vec![1.0, 1.0, 0.0, 0.0], Cmp::Eq, 0.5);
        p.add_row(vec![0.0, 0.0, 1.0, 1.0], Cmp::Eq, 0.5);
        p.add_row(vec![1.0, 0.0, 1.0, 0.0], Cmp::Eq, 0.5);
        p.add_row(vec![0.0, 1.0, 0.0, 1.0], Cmp::Eq, 0.5);
        let s = p.solve().unwrap();
        assert_abs_diff_eq!(s.value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.x[3], 0.5, epsilon = 1e-12);
        // oracle: enumerate the two vertices of the Birkhoff square
        // diag cost 1 + 1 vs anti-diag 3 + 2; LP must pick the diagonal
        assert!(s.value < 0.5 * (3.0 + 2.0));
    }

    #[test]
    fn infeasible_detected() {
        let mut p = LpProblem::new(1, vec![0.0]);
        p.add_row(vec![1.0], Cmp::Eq, 1.0);
        p.add_row(vec![1.0], Cmp::Eq, 2.0);
        assert!(matches!(p.solve(), Err(Error::Infeasible)));
    }

    #[test]
    fn unbounded_detected() {
        // minimize -x with x >= 1 only
        let mut p = LpProblem::new(1, vec![-1.0]);
        p.add_row(vec![1.0], Cmp::Ge, 1.0);
        assert!(matches!(p.solve(), Err(Error::Unbounded)));
    }

    #[test]
    fn inequalities_and_degenerate_rows() {
        // min x + y, x + y >= 2, x <= 5, duplicate redundant equality
        let mut p = LpProblem::new(2, vec![1.0, 1.0]);
        p.add_row(vec![1.0, 1.0], Cmp::Ge, 2.0);
        p.add_row(vec![1.0, 0.0], Cmp::Le, 5.0);
        p.add_row(vec![2.0, 2.0], Cmp::Ge, 4.0);
        let s = p.solve().unwrap();
        assert_abs_diff_eq!(s.value, 2.0, epsilon = 1e-12);
    }
}
