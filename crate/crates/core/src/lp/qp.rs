//! Small dense convex QPs by operator splitting (ADMM).
//!
//! Solves `min ½x'Px + q'x` subject to `l <= Ax <= u`. The KKT matrix
//! `P + σI + A' diag(ρ) A` is factored once and reused while only `q`, `l`
//! and `u` change, which is the pattern of a receding-horizon controller.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation in (0, 2).
    pub alpha: f64,
    /// Re-evaluate the penalty every this many iterations.
    pub adapt_every: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-6,
            eps_rel: 1e-6,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            adapt_every: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Constraint multipliers.
    pub y: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

/// A QP with a cached factorization.
pub struct QpSolver {
    p: DMatrix<f64>,
    a: DMatrix<f64>,
    q: DVector<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    settings: QpSettings,
    rho: f64,
    factor: Cholesky<f64, Dyn>,
}

const EQ_RHO_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

impl QpSolver {
    pub fn new(p: DMatrix<f64>, q: Vec<f64>, a: DMatrix<f64>, l: Vec<f64>, u: Vec<f64>, settings: QpSettings) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || q.len() != n || a.ncols() != n || l.len() != a.nrows() || u.len() != a.nrows() {
            return invalid("QP dimensions are inconsistent");
        }
        if !(settings.alpha > 0.0 && settings.alpha < 2.0) || !(settings.rho > 0.0) || !(settings.sigma > 0.0) {
            return invalid("QP settings need rho, sigma > 0 and alpha in (0, 2)");
        }
        let factor = Self::factorize(&p, &a, &l, &u, settings.rho, settings.sigma)?;
        let mut s = Self {
            p,
            a,
            q: DVector::from_vec(q),
            l: DVector::zeros(0),
            u: DVector::zeros(0),
            rho: settings.rho,
            settings,
            factor,
        };
        s.set_bounds(l, u)?;
        Ok(s)
    }

    fn rho_vec(l: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
        DVector::from_iterator(
            l.len(),
            l.iter().zip(u.iter()).map(|(lo, hi)| if lo == hi { rho * EQ_RHO_SCALE } else { rho }),
        )
    }

    fn factorize(
        p: &DMatrix<f64>,
        a: &DMatrix<f64>,
        l: &[f64],
        u: &[f64],
        rho: f64,
        sigma: f64,
    ) -> Result<Cholesky<f64, Dyn>> {
        let l = DVector::from_column_slice(l);
        let u = DVector::from_column_slice(u);
        let r = Self::rho_vec(&l, &u, rho);
        let mut k = p.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += sigma;
        }
        let mut ra = a.clone();
        for (i, mut row) in ra.row_iter_mut().enumerate() {
            row *= r[i];
        }
        k += a.transpose() * ra;
        Cholesky::new(k).ok_or_else(|| Error::Numerical("QP KKT matrix is not positive definite".into()))
    }

    /// Replace the linear cost.
    pub fn set_q(&mut self, q: &[f64]) -> Result<()> {
        if q.len() != self.q.len() || q.iter().any(|v| !v.is_finite()) {
            return invalid("linear cost has the wrong length or non-finite entries");
        }
        self.q.copy_from_slice(q);
        Ok(())
    }

    /// Replace the constraint bounds. Changing which rows are equalities
    /// triggers a refactorization.
    pub fn set_bounds(&mut self, l: Vec<f64>, u: Vec<f64>) -> Result<()> {
        if l.len() != self.a.nrows() || u.len() != self.a.nrows() {
            return invalid("bound vectors have the wrong length");
        }
        if l.iter().zip(&u).any(|(a, b)| a.is_nan() || b.is_nan() || a > b) {
            return invalid("QP bounds need l <= u");
        }
        let pattern_changed = self.l.len() != l.len()
            || self.l.iter().zip(self.u.iter()).zip(l.iter().zip(&u)).any(|((a, b), (c, d))| (a == b) != (c == d));
        self.l = DVector::from_vec(l);
        self.u = DVector::from_vec(u);
        if pattern_changed {
            self.factor = Self::factorize(
                &self.p,
                &self.a,
                self.l.as_slice(),
                self.u.as_slice(),
                self.rho,
                self.settings.sigma,
            )?;
        }
        Ok(())
    }

    /// Re-solve the equality system of the guessed active set. Returns the
    /// refined point when it is feasible, dual-consistent and more accurate.
    fn polish(&self, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>, residual: f64) -> Option<QpSolution> {
        let n = x.len();
        let m = z.len();
        // (row, target, sign): sign -1 lower, +1 upper, 0 equality.
        let active: Vec<(usize, f64, f64)> = (0..m)
            .filter_map(|i| {
                if self.l[i] == self.u[i] {
                    Some((i, self.l[i], 0.0))
                } else if z[i] - self.l[i] < -y[i] {
                    Some((i, self.l[i], -1.0))
                } else if self.u[i] - z[i] < y[i] {
                    Some((i, self.u[i], 1.0))
                } else {
                    None
                }
            })
            .collect();
        let k = active.len();
        let delta = 1e-9;
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.p);
        for (r, &(i, _, _)) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + r, j)] = self.a[(i, j)];
                kkt[(j, n + r)] = self.a[(i, j)];
            }
        }
        let mut rhs = DVector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -self.q[j];
        }
        for (r, &(_, target, _)) in active.iter().enumerate() {
            rhs[n + r] = target;
        }
        let mut reg = kkt.clone();
        for j in 0..n {
            reg[(j, j)] += delta;
        }
        for r in 0..k {
            reg[(n + r, n + r)] -= delta;
        }
        let lu = reg.lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..5 {
            let corr = lu.solve(&(&rhs - &kkt * &sol))?;
            sol += corr;
        }
        let xp = sol.rows(0, n).into_owned();
        let mut yp = DVector::zeros(m);
        for (r, &(i, _, sign)) in active.iter().enumerate() {
            let v = sol[n + r];
            if sign * v < -1e-9 * (1.0 + v.abs()) {
                return None;
            }
            yp[i] = v;
        }
        let ax = &self.a * &xp;
        let px = &self.p * &xp;
        let r_prim = (0..m)
            .map(|i| (self.l[i] - ax[i]).max(ax[i] - self.u[i]).max(0.0))
            .fold(0.0, f64::max);
        let r_dual = inf_norm(&(&px + &self.q + self.a.transpose() * &yp));
        if !(r_prim.max(r_dual) <= residual) {
            return None;
        }
        Some(QpSolution {
            objective: 0.5 * xp.dot(&px) + self.q.dot(&xp),
            x: xp.as_slice().to_vec(),
            y: yp.as_slice().to_vec(),
            iterations: 0,
            primal_residual: r_prim,
            dual_residual: r_dual,
        })
    }

    /// Solve from an optional warm start `(x, y)`.
    pub fn solve(&mut self, warm: Option<(&[f64], &[f64])>) -> Result<QpSolution> {
        let n = self.p.nrows();
        let m = self.a.nrows();
        let (mut x, mut y) = match warm {
            Some((x0, y0)) if x0.len() == n && y0.len() == m => {
                (DVector::from_column_slice(x0), DVector::from_column_slice(y0))
            }
            _ => (DVector::zeros(n), DVector::zeros(m)),
        };
        let mut z = (&self.a * &x).zip_zip_map(&self.l, &self.u, |v, lo, hi| v.clamp(lo, hi));
        let sigma = self.settings.sigma;
        let alpha = self.settings.alpha;
        let mut rho = Self::rho_vec(&self.l, &self.u, self.rho);
        let (mut r_prim, mut r_dual) = (f64::INFINITY, f64::INFINITY);

        for it in 1..=self.settings.max_iter {
            let rhs = sigma * &x - &self.q + self.a.transpose() * (rho.component_mul(&z) - &y);
            let x_tilde = self.factor.solve(&rhs);
            let z_tilde = &self.a * &x_tilde;
            let x_next = alpha * &x_tilde + (1.0 - alpha) * &x;
            let z_relax = alpha * &z_tilde + (1.0 - alpha) * &z;
            let z_next = (&z_relax + y.component_div(&rho)).zip_zip_map(&self.l, &self.u, |v, lo, hi| v.clamp(lo, hi));
            y += rho.component_mul(&(&z_relax - &z_next));
            x = x_next;
            z = z_next;

            let ax = &self.a * &x;
            let px = &self.p * &x;
            let aty = self.a.transpose() * &y;
            r_prim = inf_norm(&(&ax - &z));
            r_dual = inf_norm(&(&px + &self.q + &aty));
            let scale_p = inf_norm(&ax).max(inf_norm(&z));
            let scale_d = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&self.q));
            let eps = &self.settings;
            if r_prim <= eps.eps_abs + eps.eps_rel * scale_p && r_dual <= eps.eps_abs + eps.eps_rel * scale_d {
                if let Some(polished) = self.polish(&x, &z, &y, r_prim.max(r_dual)) {
                    return Ok(QpSolution { iterations: it, ..polished });
                }
                let objective = 0.5 * x.dot(&px) + self.q.dot(&x);
                return Ok(QpSolution {
                    x: x.as_slice().to_vec(),
                    y: y.as_slice().to_vec(),
                    objective,
                    iterations: it,
                    primal_residual: r_prim,
                    dual_residual: r_dual,
                });
            }
            if it % self.settings.adapt_every == 0 {
                let num = r_prim / scale_p.max(1e-12);
                let den = r_dual / scale_d.max(1e-12);
                let ratio = (num / den.max(1e-30)).sqrt();
                if !(0.2..=5.0).contains(&ratio) {
                    let new_rho = (self.rho * ratio).clamp(RHO_MIN, RHO_MAX);
                    if new_rho != self.rho {
                        self.rho = new_rho;
                        self.factor = Self::factorize(
                            &self.p,
                            &self.a,
                            self.l.as_slice(),
                            self.u.as_slice(),
                            self.rho,
                            sigma,
                        )?;
                        rho = Self::rho_vec(&self.l, &self.u, self.rho);
                    }
                }
            }
        }
        Err(Error::Numerical(format!(
            "QP did not converge in {} iterations (primal residual {r_prim:.3e}, dual residual {r_dual:.3e})",
            self.settings.max_iter
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn box_constrained_scalar() {
        // min (x - 3)^2 s.t. 0 <= x <= 1.
        let mut s = QpSolver::new(
            DMatrix::from_element(1, 1, 2.0),
            vec![-6.0],
            DMatrix::identity(1, 1),
            vec![0.0],
            vec![1.0],
            QpSettings::default(),
        )
        .unwrap();
        let sol = s.solve(None).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-5);
        assert!(sol.y[0] > 0.0);
    }

    #[test]
    fn equality_constrained_pair() {
        // min x^2 + y^2 s.t. x + y = 2 -> (1, 1).
        let mut s = QpSolver::new(
            DMatrix::identity(2, 2) * 2.0,
            vec![0.0, 0.0],
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            vec![2.0],
            vec![2.0],
            QpSettings::default(),
        )
        .unwrap();
        let sol = s.solve(None).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(sol.x[1], 1.0, epsilon = 1e-5);
        assert_relative_eq!(sol.objective, 2.0, epsilon = 1e-4);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(QpSolver::new(
            DMatrix::identity(1, 1),
            vec![0.0],
            DMatrix::identity(1, 1),
            vec![1.0],
            vec![0.0],
            QpSettings::default(),
        )
        .is_err());
    }
}
