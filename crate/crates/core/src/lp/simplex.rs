//! Dense two-phase bounded-variable simplex with Bland's rule.
//!
//! Intended for small instances where it serves as the reference solution.

use super::{LpProblem, LpSolution, LpStatus};
use crate::error::{invalid, Result};

/// Largest number of original variables accepted by [`solve_dense`].
pub const DENSE_LIMIT: usize = 500;

const PIVOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lo + z
    Shift { col: usize, lo: f64 },
    /// x = hi - z
    Mirror { col: usize, hi: f64 },
    /// x = z+ - z-
    Split { col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    width: usize,
    /// Row-major `m x width` matrix B^-1 A.
    t: Vec<f64>,
    /// Current basic values.
    xb: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    upper: Vec<f64>,
    /// Reduced costs.
    d: Vec<f64>,
    /// Columns allowed to enter.
    enter_ok: Vec<bool>,
    iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn set_costs(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.width..(i + 1) * self.width];
                for (d, &a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.t[r * w + e];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + e];
            if f != 0.0 {
                for (v, &pr) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * w + e] = 0.0;
            }
        }
        let f = self.d[e];
        if f != 0.0 {
            for (d, &pr) in self.d.iter_mut().zip(&pivot_row) {
                *d -= f * pr;
            }
            self.d[e] = 0.0;
        }
    }

    fn run(&mut self, tol: f64, max_iter: usize) -> Outcome {
        loop {
            if self.iterations >= max_iter {
                return Outcome::IterationLimit;
            }
            // Bland: lowest eligible index enters.
            let entering = (0..self.width).find(|&j| {
                self.enter_ok[j]
                    && self.upper[j] > 0.0
                    && match self.state[j] {
                        State::Lower => self.d[j] < -tol,
                        State::Upper => self.d[j] > tol,
                        State::Basic => false,
                    }
            });
            let Some(e) = entering else {
                return Outcome::Optimal;
            };
            self.iterations += 1;
            let dir = if self.state[e] == State::Lower { 1.0 } else { -1.0 };

            let mut theta = self.upper[e];
            let mut leave: Option<(usize, State)> = None;
            for i in 0..self.m {
                let alpha = dir * self.at(i, e);
                let (limit, to) = if alpha > PIVOT_TOL {
                    (self.xb[i].max(0.0) / alpha, State::Lower)
                } else if alpha < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    ((self.upper[self.basis[i]] - self.xb[i]).max(0.0) / -alpha, State::Upper)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if limit < theta - 1e-12 => true,
                    Some((r, _)) if limit <= theta + 1e-12 => self.basis[i] < self.basis[r],
                    None if limit <= theta + 1e-12 => true,
                    _ => false,
                };
                if better {
                    theta = limit.min(theta);
                    leave = Some((i, to));
                }
            }
            if !theta.is_finite() {
                return Outcome::Unbounded;
            }
            for i in 0..self.m {
                let a = self.at(i, e);
                if a != 0.0 {
                    self.xb[i] -= theta * dir * a;
                }
            }
            match leave {
                None => {
                    self.state[e] = if dir > 0.0 { State::Upper } else { State::Lower };
                }
                Some((r, to)) => {
                    let start = if dir > 0.0 { 0.0 } else { self.upper[e] };
                    let old = self.basis[r];
                    self.state[old] = to;
                    self.state[e] = State::Basic;
                    self.basis[r] = e;
                    self.xb[r] = start + dir * theta;
                    self.pivot(r, e);
                }
            }
        }
    }

    fn value(&self, j: usize) -> f64 {
        match self.state[j] {
            State::Lower => 0.0,
            State::Upper => self.upper[j],
            State::Basic => {
                let r = self.basis.iter().position(|&b| b == j).expect("basic column in basis");
                self.xb[r]
            }
        }
    }

    fn reduced_cost_violation(&self) -> f64 {
        (0..self.width)
            .filter(|&j| self.enter_ok[j] && self.upper[j] > 0.0)
            .map(|j| match self.state[j] {
                State::Lower => (-self.d[j]).max(0.0),
                State::Upper => self.d[j].max(0.0),
                State::Basic => 0.0,
            })
            .fold(0.0, f64::max)
    }
}

/// Solve a small LP exactly (up to `tol`) with a dense tableau.
pub fn solve_dense(problem: &LpProblem, tol: f64) -> Result<LpSolution> {
    problem.validate()?;
    let n = problem.n_vars();
    if n > DENSE_LIMIT {
        return invalid(format!(
            "dense simplex is limited to {DENSE_LIMIT} variables, problem has {n}"
        ));
    }
    if !(tol > 0.0) {
        return invalid("tolerance must be positive");
    }

    // Standard form: A z (+ s) = b, 0 <= z <= u.
    let mut maps = Vec::with_capacity(n);
    let mut upper: Vec<f64> = Vec::new();
    let mut cost: Vec<f64> = Vec::new();
    for j in 0..n {
        let (lo, hi, c) = (problem.lo[j], problem.hi[j], problem.c[j]);
        let col = upper.len();
        if lo.is_finite() {
            maps.push(VarMap::Shift { col, lo });
            upper.push(hi - lo);
            cost.push(c);
        } else if hi.is_finite() {
            maps.push(VarMap::Mirror { col, hi });
            upper.push(f64::INFINITY);
            cost.push(-c);
        } else {
            maps.push(VarMap::Split { col });
            upper.extend([f64::INFINITY; 2]);
            cost.extend([c, -c]);
        }
    }
    let n_struct = upper.len();
    let m_eq = problem.a_eq.rows();
    let m_in = problem.a_ineq.rows();
    let m = m_eq + m_in;
    let n_cols = n_struct + m_in;
    let width = n_cols + m;
    upper.extend(std::iter::repeat_n(f64::INFINITY, m_in + m));
    cost.extend(std::iter::repeat_n(0.0, m_in + m));

    let mut t = vec![0.0; m * width];
    let mut b = vec![0.0; m];
    let rows = (0..m_eq)
        .map(|r| (&problem.a_eq, r, problem.b_eq[r]))
        .chain((0..m_in).map(|r| (&problem.a_ineq, r, problem.b_ineq[r])));
    for (i, (mat, r, rhs)) in rows.enumerate() {
        let mut rhs = rhs;
        for (j, a) in mat.row(r) {
            match maps[j] {
                VarMap::Shift { col, lo } => {
                    t[i * width + col] += a;
                    rhs -= a * lo;
                }
                VarMap::Mirror { col, hi } => {
                    t[i * width + col] -= a;
                    rhs -= a * hi;
                }
                VarMap::Split { col } => {
                    t[i * width + col] += a;
                    t[i * width + col + 1] -= a;
                }
            }
        }
        if i >= m_eq {
            t[i * width + n_struct + (i - m_eq)] = 1.0;
        }
        if rhs < 0.0 {
            for v in &mut t[i * width..i * width + n_cols] {
                *v = -*v;
            }
            rhs = -rhs;
        }
        t[i * width + n_cols + i] = 1.0;
        b[i] = rhs;
    }

    let mut tab = Tableau {
        m,
        width,
        t,
        xb: b.clone(),
        basis: (n_cols..width).collect(),
        state: (0..width).map(|j| if j >= n_cols { State::Basic } else { State::Lower }).collect(),
        upper,
        d: vec![0.0; width],
        enter_ok: vec![true; width],
        iterations: 0,
    };
    let max_iter = 200 * (width + m).max(50);

    // Phase 1: minimise the sum of artificials.
    let phase1: Vec<f64> = (0..width).map(|j| if j >= n_cols { 1.0 } else { 0.0 }).collect();
    tab.set_costs(&phase1);
    let scale = 1.0 + b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    match tab.run(tol * 1e-3, max_iter) {
        Outcome::Optimal => {}
        Outcome::Unbounded => unreachable!("phase 1 objective is bounded below"),
        Outcome::IterationLimit => return Ok(failed(problem, LpStatus::IterationLimit, tab.iterations)),
    }
    let infeas: f64 = (n_cols..width).map(|j| tab.value(j)).sum();
    if infeas > tol * scale {
        return Ok(failed(problem, LpStatus::Infeasible, tab.iterations));
    }
    // Drive remaining artificials out where possible.
    for r in 0..m {
        if tab.basis[r] >= n_cols {
            if let Some(j) = (0..n_cols).find(|&j| tab.state[j] != State::Basic && tab.at(r, j).abs() > 1e-9) {
                let e_val = tab.value(j);
                let old = tab.basis[r];
                tab.state[old] = State::Lower;
                tab.state[j] = State::Basic;
                tab.basis[r] = j;
                tab.xb[r] = e_val;
                tab.pivot(r, j);
            }
        }
    }
    for j in n_cols..width {
        tab.upper[j] = 0.0;
        tab.enter_ok[j] = false;
        if tab.state[j] != State::Basic {
            tab.state[j] = State::Lower;
        }
    }

    tab.set_costs(&cost);
    let outcome = tab.run(tol, max_iter);
    let status = match outcome {
        Outcome::Optimal => LpStatus::Optimal,
        Outcome::Unbounded => return Ok(failed(problem, LpStatus::Unbounded, tab.iterations)),
        Outcome::IterationLimit => LpStatus::IterationLimit,
    };
    let z: Vec<f64> = (0..n_struct).map(|j| tab.value(j)).collect();
    let x: Vec<f64> = maps
        .iter()
        .map(|&mp| match mp {
            VarMap::Shift { col, lo } => lo + z[col],
            VarMap::Mirror { col, hi } => hi - z[col],
            VarMap::Split { col } => z[col] - z[col + 1],
        })
        .collect();
    Ok(LpSolution {
        status,
        objective: problem.objective(&x),
        primal_residual: problem.max_violation(&x),
        dual_residual: tab.reduced_cost_violation(),
        gap: 0.0,
        iterations: tab.iterations,
        x,
    })
}

fn failed(problem: &LpProblem, status: LpStatus, iterations: usize) -> LpSolution {
    let objective = match status {
        LpStatus::Infeasible => f64::INFINITY,
        LpStatus::Unbounded => f64::NEG_INFINITY,
        _ => f64::NAN,
    };
    LpSolution {
        status,
        x: vec![f64::NAN; problem.n_vars()],
        objective,
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        gap: f64::NAN,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::LpBuilder;
    use approx::assert_relative_eq;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn single_lower_bound() {
        let mut b = LpBuilder::new();
        let x = b.add_var(f64::NEG_INFINITY, INF, 1.0);
        b.add_ge(&[(x, 1.0)], 3.0);
        let s = solve_dense(&b.build().unwrap(), 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn textbook_vertex() {
        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, INF, -1.0);
        let y = b.add_var(0.0, INF, -1.0);
        b.add_le(&[(x, 1.0), (y, 1.0)], 1.0);
        let s = solve_dense(&b.build().unwrap(), 1e-9).unwrap();
        assert_relative_eq!(s.objective, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn upper_bounds_and_equalities() {
        // max 3x + 2y, x + y = 4, x <= 3, y in [0, 10] -> x = 3, y = 1.
        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, 3.0, -3.0);
        let y = b.add_var(0.0, 10.0, -2.0);
        b.add_eq(&[(x, 1.0), (y, 1.0)], 4.0);
        let s = solve_dense(&b.build().unwrap(), 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.x[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mirrored_and_free_variables() {
        // min -x + y with x <= 2 (no lower bound), y free, y >= x - 5, y >= -x.
        let mut b = LpBuilder::new();
        let x = b.add_var(f64::NEG_INFINITY, 2.0, -1.0);
        let y = b.add_var(f64::NEG_INFINITY, INF, 1.0);
        b.add_ge(&[(y, 1.0), (x, -1.0)], -5.0);
        b.add_ge(&[(y, 1.0), (x, 1.0)], 0.0);
        let s = solve_dense(&b.build().unwrap(), 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        // x = 2, y = max(-3, -2) = -2.
        assert_relative_eq!(s.objective, -4.0, epsilon = 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut b = LpBuilder::new();
        let x = b.add_var(f64::NEG_INFINITY, INF, 0.0);
        b.add_le(&[(x, 1.0)], 0.0);
        b.add_ge(&[(x, 1.0)], 1.0);
        assert_eq!(solve_dense(&b.build().unwrap(), 1e-9).unwrap().status, LpStatus::Infeasible);

        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, INF, -1.0);
        let y = b.add_var(0.0, INF, 0.0);
        b.add_le(&[(x, 1.0), (y, -1.0)], 1.0);
        assert_eq!(solve_dense(&b.build().unwrap(), 1e-9).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_equalities() {
        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, INF, 1.0);
        let y = b.add_var(0.0, INF, 2.0);
        b.add_eq(&[(x, 1.0), (y, 1.0)], 2.0);
        b.add_eq(&[(x, 2.0), (y, 2.0)], 4.0);
        let s = solve_dense(&b.build().unwrap(), 1e-9).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.objective, 2.0, epsilon = 1e-12);
    }
}
