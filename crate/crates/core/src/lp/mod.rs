//! Linear programs: problem representation, a dense bounded-variable simplex
//! used as the reference backend, a primal-dual hybrid gradient backend for
//! large sparse instances, the prescient sizing LP, and a small dense QP
//! solver for MPC horizons.

mod pdhg;
mod prescient;
pub mod qp;
mod simplex;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use pdhg::{solve_first_order, PdhgOptions};
pub use prescient::{build_prescient_lp, size_caps, PrescientBattery, PrescientLayout, PrescientLp};
pub use simplex::{solve_dense, DENSE_LIMIT};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            vals: Vec::new(),
        }
    }

    /// Build from `(row, col, value)` triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(r, c, v) in &sorted {
            if r >= rows || c >= cols {
                return invalid(format!("entry ({r}, {c}) outside {rows}x{cols}"));
            }
            if !v.is_finite() {
                return invalid(format!("non-finite coefficient at ({r}, {c})"));
            }
        }
        sorted.sort_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *vals.last_mut().expect("previous entry") += v;
            } else {
                col_idx.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        };
        m.drop_zeros();
        Ok(m)
    }

    fn drop_zeros(&mut self) {
        if self.vals.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut row_ptr = vec![0; self.rows + 1];
        let mut col_idx = Vec::with_capacity(self.vals.len());
        let mut vals = Vec::with_capacity(self.vals.len());
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.vals[k] != 0.0 {
                    col_idx.push(self.col_idx[k]);
                    vals.push(self.vals[k]);
                }
            }
            row_ptr[r + 1] = vals.len();
        }
        self.row_ptr = row_ptr;
        self.col_idx = col_idx;
        self.vals = vals;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (self.col_idx[k], self.vals[k]))
    }

    /// `out = self * x`.
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.vals[k] * x[self.col_idx[k]];
            }
            *o = s;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_into(x, &mut out);
        out
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for c in 0..self.cols {
            counts[c + 1] += counts[c];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let dst = next[c];
                col_idx[dst] = r;
                vals[dst] = self.vals[k];
                next[c] += 1;
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            vals,
        }
    }

    /// Scale entry (r, c) by `row[r] * col[c]`.
    pub(crate) fn scale(&mut self, row: &[f64], col: &[f64]) {
        for r in 0..self.rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                self.vals[k] *= row[r] * col[self.col_idx[k]];
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        d
    }

    /// Vertical concatenation; `other` rows are scaled by `sign`.
    pub(crate) fn stack(&self, other: &Self, sign: f64) -> Self {
        debug_assert_eq!(self.cols, other.cols);
        let mut row_ptr = self.row_ptr.clone();
        let base = self.nnz();
        row_ptr.extend(other.row_ptr[1..].iter().map(|p| p + base));
        let mut col_idx = self.col_idx.clone();
        col_idx.extend_from_slice(&other.col_idx);
        let mut vals = self.vals.clone();
        vals.extend(other.vals.iter().map(|v| v * sign));
        Self {
            rows: self.rows + other.rows,
            cols: self.cols,
            row_ptr,
            col_idx,
            vals,
        }
    }
}

/// `min c'x` subject to `A_eq x = b_eq`, `A_ineq x <= b_ineq`, `lo <= x <= hi`.
/// Bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_eq: SparseMatrix,
    pub b_eq: Vec<f64>,
    pub a_ineq: SparseMatrix,
    pub b_ineq: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.lo.len() != n || self.hi.len() != n {
            return invalid("bound vectors do not match the number of variables");
        }
        if self.a_eq.cols() != n || self.a_ineq.cols() != n {
            return invalid("constraint matrices do not match the number of variables");
        }
        if self.a_eq.rows() != self.b_eq.len() || self.a_ineq.rows() != self.b_ineq.len() {
            return invalid("right-hand sides do not match the constraint rows");
        }
        if self.c.iter().chain(&self.b_eq).chain(&self.b_ineq).any(|v| !v.is_finite()) {
            return invalid("costs and right-hand sides must be finite");
        }
        for j in 0..n {
            let (l, h) = (self.lo[j], self.hi[j]);
            if l.is_nan() || h.is_nan() || l > h || l == f64::INFINITY || h == f64::NEG_INFINITY {
                return invalid(format!("variable {j}: invalid bounds [{l}, {h}]"));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let eq = self
            .a_eq
            .mul(x)
            .iter()
            .zip(&self.b_eq)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let ineq = self
            .a_ineq
            .mul(x)
            .iter()
            .zip(&self.b_ineq)
            .map(|(a, b)| (a - b).max(0.0))
            .fold(0.0, f64::max);
        let bounds = x
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &h))| (l - v).max(v - h).max(0.0))
            .fold(0.0, f64::max);
        eq.max(ineq).max(bounds)
    }

    /// Write the problem in CPLEX LP text format.
    pub fn write_lp_format<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let term = |out: &mut W, first: &mut bool, v: f64, j: usize| -> std::io::Result<()> {
            if v == 0.0 {
                return Ok(());
            }
            let sign = if v < 0.0 { " -" } else if *first { "" } else { " +" };
            *first = false;
            write!(out, "{sign} {} x{j}", v.abs())
        };
        writeln!(out, "Minimize")?;
        write!(out, " obj:")?;
        let mut first = true;
        for (j, &v) in self.c.iter().enumerate() {
            term(&mut out, &mut first, v, j)?;
        }
        if first {
            write!(out, " 0 x0")?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for (name, m, b, op) in [("e", &self.a_eq, &self.b_eq, "="), ("l", &self.a_ineq, &self.b_ineq, "<=")] {
            for r in 0..m.rows() {
                write!(out, " {name}{r}:")?;
                let mut first = true;
                for (j, v) in m.row(r) {
                    term(&mut out, &mut first, v, j)?;
                }
                if first {
                    write!(out, " 0 x0")?;
                }
                writeln!(out, " {op} {}", b[r])?;
            }
        }
        writeln!(out, "Bounds")?;
        for j in 0..self.n_vars() {
            let (l, h) = (self.lo[j], self.hi[j]);
            match (l.is_finite(), h.is_finite()) {
                (true, true) if l == h => writeln!(out, " x{j} = {l}")?,
                (true, true) => writeln!(out, " {l} <= x{j} <= {h}")?,
                (true, false) => writeln!(out, " x{j} >= {l}")?,
                (false, true) => writeln!(out, " -inf <= x{j} <= {h}")?,
                (false, false) => writeln!(out, " x{j} free")?,
            }
        }
        writeln!(out, "End")
    }
}

/// Incremental construction of an [`LpProblem`].
#[derive(Debug, Default, Clone)]
pub struct LpBuilder {
    c: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    eq: Vec<(usize, usize, f64)>,
    b_eq: Vec<f64>,
    ineq: Vec<(usize, usize, f64)>,
    b_ineq: Vec<f64>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        self.c.push(cost);
        self.lo.push(lo);
        self.hi.push(hi);
        self.c.len() - 1
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.c[var] = cost;
    }

    pub fn add_eq(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let r = self.b_eq.len();
        self.eq.extend(terms.iter().map(|&(j, v)| (r, j, v)));
        self.b_eq.push(rhs);
    }

    pub fn add_le(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let r = self.b_ineq.len();
        self.ineq.extend(terms.iter().map(|&(j, v)| (r, j, v)));
        self.b_ineq.push(rhs);
    }

    pub fn add_ge(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let neg: Vec<(usize, f64)> = terms.iter().map(|&(j, v)| (j, -v)).collect();
        self.add_le(&neg, -rhs);
    }

    pub fn build(self) -> Result<LpProblem> {
        let n = self.c.len();
        let p = LpProblem {
            a_eq: SparseMatrix::from_triplets(self.b_eq.len(), n, &self.eq)?,
            a_ineq: SparseMatrix::from_triplets(self.b_ineq.len(), n, &self.ineq)?,
            c: self.c,
            b_eq: self.b_eq,
            b_ineq: self.b_ineq,
            lo: self.lo,
            hi: self.hi,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Largest constraint or bound violation of `x`.
    pub primal_residual: f64,
    /// Size of the reduced-cost violation of the dual estimate.
    pub dual_residual: f64,
    /// Absolute primal-dual objective gap (0 for the simplex).
    pub gap: f64,
    pub iterations: usize,
}
