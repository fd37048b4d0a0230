//! Dense two-phase tableau simplex for small linear programs.
//!
//! Entering columns follow Dantzig's rule until a run of degenerate pivots,
//! then Bland's rule (smallest index) so cycling cannot occur.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

const EPS: f64 = 1e-9;
const DEGENERATE_RUN: usize = 32;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

/// `maximize objective·x` subject to `rows` and `x ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<(Vec<f64>, Cmp, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(n_vars: usize, objective: Vec<f64>) -> Self {
        Self { n_vars, objective, rows: Vec::new() }
    }

    pub fn push(&mut self, coeffs: Vec<f64>, cmp: Cmp, rhs: f64) {
        self.rows.push((coeffs, cmp, rhs));
    }
}

struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the RHS.
    t: Vec<f64>,
    m: usize,
    cols: usize,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.t[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        self.t[r * w + c] = 1.0;
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                let v = self.t[r * w + j];
                if v != 0.0 {
                    self.t[i * w + j] -= f * v;
                }
            }
            self.t[i * w + c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Maximize the objective row over columns `< allowed`. The objective row
    /// stores `-reduced cost`, so a negative entry improves.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let mut degenerate = 0;
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Lp(format!("no convergence after {MAX_PIVOTS} pivots")));
            }
            let obj = self.m;
            let enter = if degenerate >= DEGENERATE_RUN {
                (0..allowed).find(|&j| self.at(obj, j) < -EPS)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..allowed {
                    let d = self.at(obj, j);
                    if d < -EPS && best.is_none_or(|(_, b)| d < b) {
                        best = Some((j, d));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(c) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, c);
                if a > EPS {
                    let ratio = self.rhs(r) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - EPS
                                || (ratio <= lratio + EPS && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(Error::Lp("objective is unbounded".into()));
            };
            degenerate = if ratio <= EPS { degenerate + 1 } else { 0 };
            self.pivot(r, c);
        }
    }
}

/// Solve to optimality. Infeasible and unbounded programs are errors.
pub fn maximize(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.n_vars;
    let m = lp.rows.len();
    if lp.objective.len() != n || lp.rows.iter().any(|(a, _, b)| a.len() != n || !b.is_finite()) {
        return Err(Error::Lp("malformed linear program".into()));
    }
    // normalize to b >= 0
    let rows: Vec<(Vec<f64>, Cmp, f64)> = lp
        .rows
        .iter()
        .map(|(a, cmp, b)| {
            if *b < 0.0 {
                let flip = match cmp {
                    Cmp::Le => Cmp::Ge,
                    Cmp::Ge => Cmp::Le,
                    Cmp::Eq => Cmp::Eq,
                };
                (a.iter().map(|v| -v).collect(), flip, -b)
            } else {
                (a.clone(), *cmp, *b)
            }
        })
        .collect();
    let n_slack = rows.iter().filter(|r| r.1 != Cmp::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != Cmp::Le).count();
    let cols = n + n_slack + n_art;
    let w = cols + 1;
    let mut tab = Tableau { t: vec![0.0; (m + 1) * w], m, cols, basis: vec![0; m], pivots: 0 };
    let (mut s, mut a) = (n, n + n_slack);
    for (i, (coeffs, cmp, b)) in rows.iter().enumerate() {
        tab.t[i * w..i * w + n].copy_from_slice(coeffs);
        tab.t[i * w + cols] = *b;
        match cmp {
            Cmp::Le => {
                tab.t[i * w + s] = 1.0;
                tab.basis[i] = s;
                s += 1;
            }
            Cmp::Ge => {
                tab.t[i * w + s] = -1.0;
                s += 1;
                tab.t[i * w + a] = 1.0;
                tab.basis[i] = a;
                a += 1;
            }
            Cmp::Eq => {
                tab.t[i * w + a] = 1.0;
                tab.basis[i] = a;
                a += 1;
            }
        }
    }

    if n_art > 0 {
        // phase 1: maximize -Σ artificials
        let obj = m * w;
        for i in 0..m {
            if tab.basis[i] >= n + n_slack {
                for j in 0..w {
                    tab.t[obj + j] -= tab.t[i * w + j];
                }
            }
        }
        for j in n + n_slack..cols {
            tab.t[obj + j] = 0.0;
        }
        tab.optimize(cols)?;
        if -tab.rhs(m) > 1e-7 {
            return Err(Error::Lp(format!("infeasible (phase-one residual {:.3e})", -tab.rhs(m))));
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..m {
            if tab.basis[r] >= n + n_slack
                && let Some(c) = (0..n + n_slack).find(|&j| tab.at(r, j).abs() > EPS) {
                    tab.pivot(r, c);
                }
        }
    }

    // phase 2 objective row: -c plus basic corrections
    let obj = m * w;
    for j in 0..w {
        tab.t[obj + j] = 0.0;
    }
    for j in 0..n {
        tab.t[obj + j] = -lp.objective[j];
    }
    for r in 0..m {
        let bcol = tab.basis[r];
        let cb = if bcol < n { lp.objective[bcol] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..w {
                tab.t[obj + j] += cb * tab.t[r * w + j];
            }
        }
    }
    tab.optimize(n + n_slack)?;

    let mut x = vec![0.0; n];
    for r in 0..m {
        if tab.basis[r] < n {
            x[tab.basis[r]] = tab.rhs(r).max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    Ok(LpSolution { x, objective, pivots: tab.pivots })
}
