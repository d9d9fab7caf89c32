//! Restarted primal-dual hybrid gradient for large sparse LPs.
//!
//! The problem is rewritten as `min c'x` subject to `K x (=, >=) q` with equality
//! rows first, box bounds on `x`, and dual variables `y` that are free on the
//! equality rows and non-negative on the rest. Iterations run on a diagonally
//! rescaled copy; termination is judged on unscaled residuals.

use super::{LpProblem, LpSolution, LpStatus, SparseMatrix};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdhgOptions {
    /// Relative tolerance on primal residual, dual residual and gap.
    pub tol: f64,
    pub max_iters: usize,
    pub ruiz_iters: usize,
    /// Restart and termination checks happen every `check_every` iterations.
    pub check_every: usize,
}

impl Default for PdhgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 200_000,
            ruiz_iters: 10,
            check_every: 64,
        }
    }
}

const RESTART_SUFFICIENT: f64 = 0.2;
const RESTART_NECESSARY: f64 = 0.8;
const RESTART_ARTIFICIAL: f64 = 0.36;
const RAY_TOL: f64 = 1e-6;

struct Scaled {
    k: SparseMatrix,
    kt: SparseMatrix,
    c: Vec<f64>,
    q: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    d_row: Vec<f64>,
    d_col: Vec<f64>,
    m_eq: usize,
}

struct Kkt {
    primal: f64,
    dual: f64,
    gap: f64,
    p_obj: f64,
    d_obj: f64,
}

impl Kkt {
    fn error(&self) -> f64 {
        (self.primal * self.primal + self.dual * self.dual + self.gap * self.gap).sqrt()
    }
}

fn row_abs<F: Fn(f64, f64) -> f64>(k: &SparseMatrix, f: F) -> (Vec<f64>, Vec<f64>) {
    let mut rows = vec![0.0; k.rows()];
    let mut cols = vec![0.0; k.cols()];
    for (r, acc) in rows.iter_mut().enumerate() {
        for (c, v) in k.row(r) {
            *acc = f(*acc, v.abs());
            cols[c] = f(cols[c], v.abs());
        }
    }
    (rows, cols)
}

fn inv_sqrt(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { 1.0 / x.sqrt() } else { 1.0 }).collect()
}

fn scale_problem(p: &LpProblem, ruiz_iters: usize) -> Scaled {
    let m_eq = p.a_eq.rows();
    let mut k = p.a_eq.stack(&p.a_ineq, -1.0);
    let mut q: Vec<f64> = p.b_eq.clone();
    q.extend(p.b_ineq.iter().map(|b| -b));
    let mut d_row = vec![1.0; k.rows()];
    let mut d_col = vec![1.0; k.cols()];
    let mut apply = |k: &mut SparseMatrix, r: Vec<f64>, c: Vec<f64>| {
        k.scale(&r, &c);
        d_row.iter_mut().zip(&r).for_each(|(d, s)| *d *= s);
        d_col.iter_mut().zip(&c).for_each(|(d, s)| *d *= s);
    };
    for _ in 0..ruiz_iters {
        let (r, c) = row_abs(&k, f64::max);
        apply(&mut k, inv_sqrt(&r), inv_sqrt(&c));
    }
    let (r, c) = row_abs(&k, |a, b| a + b);
    apply(&mut k, inv_sqrt(&r), inv_sqrt(&c));

    q.iter_mut().zip(&d_row).for_each(|(q, d)| *q *= d);
    let c: Vec<f64> = p.c.iter().zip(&d_col).map(|(c, d)| c * d).collect();
    let lo = p.lo.iter().zip(&d_col).map(|(l, d)| l / d).collect();
    let hi = p.hi.iter().zip(&d_col).map(|(h, d)| h / d).collect();
    Scaled {
        kt: k.transpose(),
        k,
        c,
        q,
        lo,
        hi,
        d_row,
        d_col,
        m_eq,
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn spectral_norm(k: &SparseMatrix, kt: &SparseMatrix) -> f64 {
    let n = k.cols();
    if n == 0 || k.nnz() == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..n).map(|j| 1.0 + 0.01 * ((j * 7919) % 101) as f64).collect();
    let mut kv = vec![0.0; k.rows()];
    let mut w = vec![0.0; n];
    let mut sigma = 0.0;
    for _ in 0..100 {
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        k.mul_into(&v, &mut kv);
        kt.mul_into(&kv, &mut w);
        let next = norm2(&w).sqrt();
        std::mem::swap(&mut v, &mut w);
        if (next - sigma).abs() <= 1e-6 * next {
            sigma = next;
            break;
        }
        sigma = next;
    }
    sigma
}

impl Scaled {
    /// Residuals in the unscaled space at scaled point `(x, y)`.
    fn kkt(&self, x: &[f64], y: &[f64], kx: &[f64], kty: &[f64]) -> Kkt {
        let mut primal = 0.0;
        for i in 0..self.q.len() {
            let mut r = (self.q[i] - kx[i]) / self.d_row[i];
            if i >= self.m_eq {
                r = r.max(0.0);
            }
            primal += r * r;
        }
        let mut dual = 0.0;
        let mut bound_term = 0.0;
        for j in 0..x.len() {
            let r = self.c[j] - kty[j];
            if r > 0.0 {
                if self.lo[j].is_finite() {
                    bound_term += self.lo[j] * r;
                } else {
                    dual += (r / self.d_col[j]).powi(2);
                }
            } else if r < 0.0 {
                if self.hi[j].is_finite() {
                    bound_term += self.hi[j] * r;
                } else {
                    dual += (r / self.d_col[j]).powi(2);
                }
            }
        }
        let p_obj = dot(&self.c, x);
        let d_obj = dot(&self.q, y) + bound_term;
        Kkt {
            primal: primal.sqrt(),
            dual: dual.sqrt(),
            gap: (p_obj - d_obj).abs(),
            p_obj,
            d_obj,
        }
    }

    /// Does `dy` (scaled) certify primal infeasibility?
    fn is_dual_ray(&self, dy: &[f64], kt_dy: &[f64]) -> bool {
        let scale = dy
            .iter()
            .zip(&self.d_row)
            .map(|(v, d)| (v * d).abs())
            .fold(0.0, f64::max);
        if scale <= 0.0 {
            return false;
        }
        let mut violation: f64 = 0.0;
        for i in self.m_eq..dy.len() {
            violation = violation.max(-dy[i] * self.d_row[i] / scale);
        }
        let mut obj = dot(&self.q, dy) / scale;
        for j in 0..kt_dy.len() {
            let r = -kt_dy[j] / scale;
            if r > 0.0 {
                if self.lo[j].is_finite() {
                    obj += self.lo[j] * r;
                } else {
                    violation = violation.max(r / self.d_col[j]);
                }
            } else if r < 0.0 {
                if self.hi[j].is_finite() {
                    obj += self.hi[j] * r;
                } else {
                    violation = violation.max(-r / self.d_col[j]);
                }
            }
        }
        obj > RAY_TOL && violation <= RAY_TOL * obj
    }

    /// Does `dx` (scaled) certify unboundedness?
    fn is_primal_ray(&self, dx: &[f64], k_dx: &[f64]) -> bool {
        let scale = dx
            .iter()
            .zip(&self.d_col)
            .map(|(v, d)| (v * d).abs())
            .fold(0.0, f64::max);
        if scale <= 0.0 {
            return false;
        }
        let obj = dot(&self.c, dx) / scale;
        if obj >= -RAY_TOL {
            return false;
        }
        let mut violation: f64 = 0.0;
        for (i, &v) in k_dx.iter().enumerate() {
            let v = v / (scale * self.d_row[i]);
            violation = violation.max(if i < self.m_eq { v.abs() } else { -v });
        }
        for j in 0..dx.len() {
            let v = dx[j] / scale;
            if self.lo[j].is_finite() {
                violation = violation.max(-v * self.d_col[j]);
            }
            if self.hi[j].is_finite() {
                violation = violation.max(v * self.d_col[j]);
            }
        }
        violation <= RAY_TOL * -obj
    }
}

fn box_only(p: &LpProblem) -> LpSolution {
    let mut x = Vec::with_capacity(p.n_vars());
    let mut unbounded = false;
    for j in 0..p.n_vars() {
        let (l, h, c) = (p.lo[j], p.hi[j], p.c[j]);
        let v = if c > 0.0 {
            l
        } else if c < 0.0 {
            h
        } else {
            0.0f64.clamp(l, h)
        };
        unbounded |= !v.is_finite();
        x.push(v);
    }
    if unbounded {
        return LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NEG_INFINITY,
            primal_residual: f64::NAN,
            dual_residual: f64::NAN,
            gap: f64::NAN,
            iterations: 0,
            x: vec![f64::NAN; p.n_vars()],
        };
    }
    LpSolution {
        status: LpStatus::Optimal,
        objective: p.objective(&x),
        primal_residual: 0.0,
        dual_residual: 0.0,
        gap: 0.0,
        iterations: 0,
        x,
    }
}

/// Solve an LP with restarted PDHG.
pub fn solve_first_order(problem: &LpProblem, options: &PdhgOptions) -> Result<LpSolution> {
    problem.validate()?;
    if !(options.tol > 0.0) || options.check_every == 0 {
        return invalid("PDHG needs a positive tolerance and check interval");
    }
    let m = problem.a_eq.rows() + problem.a_ineq.rows();
    if m == 0 {
        return Ok(box_only(problem));
    }
    let s = scale_problem(problem, options.ruiz_iters);
    let n = problem.n_vars();
    let norm_k = spectral_norm(&s.k, &s.kt);
    if norm_k == 0.0 {
        // All-zero constraint matrix: feasible iff every row is.
        let ok = s.q.iter().enumerate().all(|(i, &q)| if i < s.m_eq { q == 0.0 } else { q <= 0.0 });
        if !ok {
            return Ok(terminal(problem, LpStatus::Infeasible, 0));
        }
        return Ok(box_only(problem));
    }
    let eta = 0.9 / (norm_k * 1.01);
    let (cn, qn) = (norm2(&s.c), norm2(&s.q));
    let mut omega = if cn > 1e-10 && qn > 1e-10 { cn / qn } else { 1.0 };

    let c_norm = norm2(&problem.c);
    let q_norm = (norm2(&problem.b_eq).powi(2) + norm2(&problem.b_ineq).powi(2)).sqrt();
    let tol = options.tol;
    let converged = |k: &Kkt| {
        k.primal <= tol * (1.0 + q_norm)
            && k.dual <= tol * (1.0 + c_norm)
            && k.gap <= tol * (1.0 + k.p_obj.abs() + k.d_obj.abs())
    };

    let mut x: Vec<f64> = (0..n).map(|j| 0.0f64.clamp(s.lo[j], s.hi[j])).collect();
    let mut y = vec![0.0; m];
    let mut kx = s.k.mul(&x);
    let mut kty = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut kx_new = vec![0.0; m];

    let mut sum = (vec![0.0; n], vec![0.0; m], vec![0.0; m], vec![0.0; n]);
    let mut n_avg = 0usize;
    let mut restart_x = x.clone();
    let mut restart_y = y.clone();
    let mut restart_kkt = s.kkt(&x, &y, &kx, &kty).error();
    let mut last_candidate = f64::INFINITY;
    let mut since_restart = 0usize;
    let mut check_x = x.clone();
    let mut check_y = y.clone();
    let mut ray_hits = (0usize, 0usize);

    for it in 1..=options.max_iters {
        let tau = eta / omega;
        let sigma = eta * omega;
        for j in 0..n {
            x_new[j] = (x[j] - tau * (s.c[j] - kty[j])).clamp(s.lo[j], s.hi[j]);
        }
        s.k.mul_into(&x_new, &mut kx_new);
        for i in 0..m {
            let v = y[i] + sigma * (s.q[i] - 2.0 * kx_new[i] + kx[i]);
            y[i] = if i >= s.m_eq { v.max(0.0) } else { v };
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut kx, &mut kx_new);
        s.kt.mul_into(&y, &mut kty);

        for (a, v) in sum.0.iter_mut().zip(&x) {
            *a += v;
        }
        for (a, v) in sum.1.iter_mut().zip(&y) {
            *a += v;
        }
        for (a, v) in sum.2.iter_mut().zip(&kx) {
            *a += v;
        }
        for (a, v) in sum.3.iter_mut().zip(&kty) {
            *a += v;
        }
        n_avg += 1;
        since_restart += 1;

        if it % options.check_every != 0 {
            continue;
        }
        let inv = 1.0 / n_avg as f64;
        let avg: [Vec<f64>; 4] = [
            sum.0.iter().map(|v| v * inv).collect(),
            sum.1.iter().map(|v| v * inv).collect(),
            sum.2.iter().map(|v| v * inv).collect(),
            sum.3.iter().map(|v| v * inv).collect(),
        ];
        let cur = s.kkt(&x, &y, &kx, &kty);
        let av = s.kkt(&avg[0], &avg[1], &avg[2], &avg[3]);
        if converged(&cur) {
            return Ok(finish(problem, &s, &x, LpStatus::Optimal, it, &cur));
        }
        if converged(&av) {
            return Ok(finish(problem, &s, &avg[0], LpStatus::Optimal, it, &av));
        }

        // Infeasibility checks on the last interval's iterate differences.
        let dy: Vec<f64> = y.iter().zip(&check_y).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&check_x).map(|(a, b)| a - b).collect();
        let kt_dy = s.kt.mul(&dy);
        let k_dx = s.k.mul(&dx);
        ray_hits.0 = if s.is_dual_ray(&dy, &kt_dy) { ray_hits.0 + 1 } else { 0 };
        ray_hits.1 = if s.is_primal_ray(&dx, &k_dx) { ray_hits.1 + 1 } else { 0 };
        if ray_hits.0 >= 3 {
            return Ok(terminal(problem, LpStatus::Infeasible, it));
        }
        if ray_hits.1 >= 3 {
            return Ok(terminal(problem, LpStatus::Unbounded, it));
        }

        let (cand_err, use_avg) = if av.error() < cur.error() {
            (av.error(), true)
        } else {
            (cur.error(), false)
        };
        let restart = cand_err <= RESTART_SUFFICIENT * restart_kkt
            || (cand_err <= RESTART_NECESSARY * restart_kkt && cand_err > last_candidate)
            || since_restart as f64 >= RESTART_ARTIFICIAL * it as f64;
        last_candidate = cand_err;
        if restart {
            if use_avg {
                let [ax, ay, akx, akty] = avg;
                x = ax;
                y = ay;
                kx = akx;
                kty = akty;
            }
            let dx = norm2(&x.iter().zip(&restart_x).map(|(a, b)| a - b).collect::<Vec<_>>());
            let dy = norm2(&y.iter().zip(&restart_y).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dx > 1e-10 && dy > 1e-10 {
                omega = (0.5 * (dy / dx).ln() + 0.5 * omega.ln()).exp();
            }
            restart_x.copy_from_slice(&x);
            restart_y.copy_from_slice(&y);
            restart_kkt = cand_err;
            last_candidate = f64::INFINITY;
            since_restart = 0;
            for v in [&mut sum.0, &mut sum.3] {
                v.iter_mut().for_each(|a| *a = 0.0);
            }
            for v in [&mut sum.1, &mut sum.2] {
                v.iter_mut().for_each(|a| *a = 0.0);
            }
            n_avg = 0;
        }
        check_x.copy_from_slice(&x);
        check_y.copy_from_slice(&y);
    }
    let cur = s.kkt(&x, &y, &kx, &kty);
    Ok(finish(problem, &s, &x, LpStatus::IterationLimit, options.max_iters, &cur))
}

fn finish(problem: &LpProblem, s: &Scaled, x_scaled: &[f64], status: LpStatus, iterations: usize, k: &Kkt) -> LpSolution {
    let x: Vec<f64> = x_scaled
        .iter()
        .zip(&s.d_col)
        .enumerate()
        .map(|(j, (v, d))| (v * d).clamp(problem.lo[j], problem.hi[j]))
        .collect();
    LpSolution {
        status,
        objective: problem.objective(&x),
        primal_residual: problem.max_violation(&x),
        dual_residual: k.dual,
        gap: k.gap,
        iterations,
        x,
    }
}

fn terminal(problem: &LpProblem, status: LpStatus, iterations: usize) -> LpSolution {
    LpSolution {
        status,
        objective: if status == LpStatus::Infeasible {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        },
        primal_residual: f64::NAN,
        dual_residual: f64::NAN,
        gap: f64::NAN,
        iterations,
        x: vec![f64::NAN; problem.n_vars()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_dense, LpBuilder};

    const INF: f64 = f64::INFINITY;

    fn opts() -> PdhgOptions {
        PdhgOptions {
            tol: 1e-8,
            ..PdhgOptions::default()
        }
    }

    #[test]
    fn matches_simplex_on_small_lp() {
        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, 3.0, -3.0);
        let y = b.add_var(0.0, 10.0, -2.0);
        let z = b.add_var(f64::NEG_INFINITY, INF, 1.0);
        b.add_eq(&[(x, 1.0), (y, 1.0)], 4.0);
        b.add_ge(&[(z, 1.0), (x, -1.0)], -1.0);
        b.add_ge(&[(z, 1.0), (y, 1.0)], 0.5);
        let p = b.build().unwrap();
        let exact = solve_dense(&p, 1e-10).unwrap();
        let fo = solve_first_order(&p, &opts()).unwrap();
        assert_eq!(fo.status, LpStatus::Optimal);
        assert!((fo.objective - exact.objective).abs() < 1e-6, "{} vs {}", fo.objective, exact.objective);
    }

    #[test]
    fn box_only_problem() {
        let mut b = LpBuilder::new();
        b.add_var(1.0, 2.0, 1.0);
        b.add_var(-1.0, 5.0, -1.0);
        let s = solve_first_order(&b.build().unwrap(), &opts()).unwrap();
        assert_eq!(s.x, vec![1.0, 5.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, INF, 1.0);
        let y = b.add_var(0.0, INF, 1.0);
        b.add_le(&[(x, 1.0), (y, 1.0)], 1.0);
        b.add_ge(&[(x, 1.0), (y, 1.0)], 2.0);
        let s = solve_first_order(&b.build().unwrap(), &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);

        let mut b = LpBuilder::new();
        let x = b.add_var(0.0, INF, -1.0);
        let y = b.add_var(0.0, INF, 0.0);
        b.add_le(&[(x, 1.0), (y, -1.0)], 1.0);
        let s = solve_first_order(&b.build().unwrap(), &opts()).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }
}
