//! Primal-dual interior-point method for the same programs as
//! [`super::barrier`], started from a strictly feasible point.
//!
//! Each iteration takes one Newton step on the perturbed KKT system
//!
//! ```text
//! grad f0(z) + sum lambda_i grad f_i(z) = 0
//! -lambda_i f_i(z) = 1 / t
//! ```
//!
//! with `t` set from the surrogate duality gap `-f(z)^T lambda`, followed by
//! a backtracking search on the residual norm that keeps `f(z) < 0`,
//! `lambda > 0` and every product `-lambda_i f_i` above a fixed fraction of
//! the average gap.

use nalgebra::DMatrix;

use super::barrier::{is_strictly_feasible, kkt_with_duals, BarrierSolution, ConvexProgram};

#[derive(Debug, Clone, PartialEq)]
pub struct PdSettings {
    /// Target for the relative dual residual and the relative surrogate gap.
    pub tol: f64,
    pub max_iters: usize,
    /// Factor applied to `m / gap` when choosing `t`.
    pub mu: f64,
    pub armijo: f64,
    pub backtrack: f64,
    /// Upper bound on the centrality fraction enforced by the line search.
    pub centrality: f64,
    /// Centrality below which an iteration only recenters.
    pub recenter_below: f64,
}

impl Default for PdSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 100,
            mu: 10.0,
            armijo: 0.01,
            backtrack: 0.5,
            centrality: 0.01,
            recenter_below: 0.1,
        }
    }
}

struct Work {
    f: Vec<f64>,
    /// Row-major constraint Jacobian.
    jac: Vec<f64>,
    /// Largest absolute entry of each Jacobian row.
    jac_inf: Vec<f64>,
    g0: Vec<f64>,
    gi: Vec<f64>,
    hess: DMatrix<f64>,
    r_d: Vec<f64>,
}

impl Work {
    fn new(n: usize, m: usize) -> Self {
        Self {
            f: vec![0.0; m],
            jac: vec![0.0; m * n],
            jac_inf: vec![0.0; m],
            g0: vec![0.0; n],
            gi: vec![0.0; n],
            hess: DMatrix::zeros(n, n),
            r_d: vec![0.0; n],
        }
    }

    /// Constraint values, Jacobian, dual residual and (optionally) the
    /// Hessian of the Lagrangian at `(z, lam)`.
    fn eval<P: ConvexProgram + ?Sized>(&mut self, prob: &P, z: &[f64], lam: &[f64], with_hess: bool) {
        let n = self.g0.len();
        self.g0.iter_mut().for_each(|v| *v = 0.0);
        self.hess.fill(0.0);
        prob.add_objective_derivs(z, 1.0, &mut self.g0, &mut self.hess);
        prob.constraints(z, &mut self.f);
        self.r_d.copy_from_slice(&self.g0);
        for (i, &l) in lam.iter().enumerate() {
            prob.constraint_derivs(i, z, &mut self.gi, &mut self.hess, if with_hess { l } else { 0.0 });
            let row = &mut self.jac[i * n..(i + 1) * n];
            row.copy_from_slice(&self.gi);
            let mut inf = 0.0f64;
            for (r, g) in self.r_d.iter_mut().zip(&self.gi) {
                *r += l * g;
                inf = inf.max(g.abs());
            }
            self.jac_inf[i] = inf;
        }
    }

    /// Squared norm of the perturbed KKT residual for weight `t`.
    fn residual(&self, lam: &[f64], t: f64) -> f64 {
        let cent: f64 = lam.iter().zip(&self.f).map(|(l, f)| (-l * f - 1.0 / t).powi(2)).sum();
        self.r_d.iter().map(|v| v * v).sum::<f64>() + cent
    }

    /// `max |r_d| / max(|grad f0|, lambda_i |grad f_i|)`
    fn rel_dual(&self, lam: &[f64]) -> f64 {
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let scale = lam.iter().zip(&self.jac_inf).map(|(l, j)| l * j).fold(inf(&self.g0), f64::max);
        inf(&self.r_d) / scale.max(f64::MIN_POSITIVE)
    }
}

/// In-place Cholesky of the lower triangle of a row-major `n x n` matrix.
fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let (head, tail) = a.split_at_mut((j + 1) * n);
        let row_j = &mut head[j * n..];
        let d = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        row_j[j] = d;
        let row_j = &row_j[..j];
        for i in j + 1..n {
            let row_i = &mut tail[(i - j - 1) * n..(i - j) * n];
            row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) / d;
        }
    }
    true
}

/// Solves `L L^T x = b` in place.
fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let row = &l[i * n..i * n + i];
        b[i] = (b[i] - dot(row, &b[..i])) / l[i * n + i];
    }
    for i in (0..n).rev() {
        b[i] /= l[i * n + i];
        let xi = b[i];
        let row = &l[i * n..i * n + i];
        for (v, r) in b[..i].iter_mut().zip(row) {
            *v -= r * xi;
        }
    }
}

/// Factors `D k D` with `D = diag(k)^(-1/2)`, adding a growing diagonal
/// shift if it is numerically indefinite. Only the lower triangle of the
/// column-major `k` is read. `work` receives the row-major factor and
/// `diag` the scaling.
fn factor(k: &[f64], n: usize, work: &mut [f64], diag: &mut [f64]) -> bool {
    for i in 0..n {
        let d = k[i * n + i];
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        diag[i] = 1.0 / d.sqrt();
    }
    let mut shift = 0.0;
    for _ in 0..10 {
        for i in 0..n {
            for c in 0..i {
                work[i * n + c] = k[c * n + i] * diag[i] * diag[c];
            }
            work[i * n + i] = 1.0 + shift;
        }
        if cholesky_in_place(work, n) {
            return true;
        }
        shift = if shift == 0.0 { 1e-14 } else { shift * 100.0 };
    }
    false
}

/// Solves `k x = b` in place given the output of [`factor`].
fn factored_solve(l: &[f64], diag: &[f64], n: usize, b: &mut [f64]) {
    for (v, d) in b.iter_mut().zip(diag) {
        *v *= d;
    }
    cholesky_solve(l, n, b);
    for (v, d) in b.iter_mut().zip(diag) {
        *v *= d;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Smallest complementarity product relative to the average one.
fn centrality(lam: &[f64], f: &[f64]) -> f64 {
    let products = lam.iter().zip(f).map(|(l, f)| -l * f);
    let (min, sum) = products.fold((f64::INFINITY, 0.0), |(lo, s), p| (lo.min(p), s + p));
    min * lam.len() as f64 / sum
}

/// Solves from a strictly feasible `z0`, with optional positive dual
/// estimates `lam0` (default `1 / -f_i(z0)`). Returns `None` if `z0` is not
/// strictly feasible, the iteration budget runs out, or the line search
/// makes no progress.
pub fn solve<P: ConvexProgram + ?Sized>(prob: &P, z0: &[f64], lam0: Option<&[f64]>, settings: &PdSettings) -> Option<BarrierSolution> {
    let n = prob.dim();
    let m = prob.num_constraints();
    if !is_strictly_feasible(prob, z0) {
        return None;
    }
    let mut z = z0.to_vec();
    let mut w = Work::new(n, m);
    let mut trial = Work::new(n, m);
    prob.constraints(&z, &mut w.f);
    let mut lam: Vec<f64> = match lam0 {
        Some(l) if l.len() == m && l.iter().all(|v| *v > 0.0) => l.to_vec(),
        _ => w.f.iter().map(|f| 1.0 / -f).collect(),
    };
    let mut z_new = vec![0.0; n];
    let mut lam_new = vec![0.0; m];
    let mut nz: Vec<(usize, f64)> = Vec::with_capacity(n);
    let mut kmat = vec![0.0; n * n];
    let mut chol = vec![0.0; n * n];
    let mut scaling = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dlam = vec![0.0; m];
    let gamma = settings.centrality.min(0.5 * centrality(&lam, &w.f));
    for iter in 0..settings.max_iters {
        w.eval(prob, &z, &lam, true);
        let obj = prob.objective(&z);
        let gap: f64 = lam.iter().zip(&w.f).map(|(l, f)| -l * f).sum();
        if w.rel_dual(&lam) <= settings.tol && gap <= settings.tol * obj.abs().max(1.0) {
            let t = m as f64 / gap.max(f64::MIN_POSITIVE);
            return Some(BarrierSolution {
                kkt: kkt_with_duals(prob, &z, &lam, t),
                objective: obj,
                z,
                duals: lam,
                t,
                newton_steps: iter,
            });
        }
        // Pure centering while the dual residual is large or some pair has
        // drifted off the central path.
        let sigma = if centrality(&lam, &w.f) < settings.recenter_below {
            1.0
        } else {
            w.rel_dual(&lam).clamp(1.0 / settings.mu, 1.0)
        };
        let t = m as f64 / (sigma * gap);

        // (H + sum lam_i / -f_i grad f_i grad f_i^T) dz = -(grad f0 + sum grad f_i / (t (-f_i)))
        kmat.copy_from_slice(w.hess.as_slice());
        dz.copy_from_slice(&w.g0);
        for i in 0..m {
            let slack = -w.f[i];
            let row = &w.jac[i * n..(i + 1) * n];
            nz.clear();
            nz.extend(row.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(c, v)| (c, *v)));
            let di = lam[i] / slack;
            for &(b, vb) in &nz {
                let col = di * vb;
                let base = b * n;
                for &(a, va) in nz.iter().filter(|(a, _)| *a >= b) {
                    kmat[base + a] += va * col;
                }
                dz[b] += vb / (t * slack);
            }
        }
        dz.iter_mut().for_each(|v| *v = -*v);
        if !factor(&kmat, n, &mut chol, &mut scaling) {
            return None;
        }
        factored_solve(&chol, &scaling, n, &mut dz);
        for i in 0..m {
            let jdz = dot(&w.jac[i * n..(i + 1) * n], &dz);
            // dlam_i = (lam_i grad f_i . dz + lam_i f_i + 1/t) / (-f_i)
            dlam[i] = (lam[i] * jdz + lam[i] * w.f[i] + 1.0 / t) / -w.f[i];
        }

        let mut s = (lam
            .iter()
            .zip(&dlam)
            .filter(|(_, d)| **d < 0.0)
            .map(|(l, d)| -l / d)
            .fold(1.0, f64::min)
            * 0.99)
            .min(1.0);
        let r0 = w.residual(&lam, t).sqrt();
        loop {
            for j in 0..n {
                z_new[j] = z[j] + s * dz[j];
            }
            for i in 0..m {
                lam_new[i] = lam[i] + s * dlam[i];
            }
            prob.constraints(&z_new, &mut trial.f);
            if trial.f.iter().all(|v| *v < 0.0) && prob.objective(&z_new).is_finite() {
                trial.eval(prob, &z_new, &lam_new, false);
                if centrality(&lam_new, &trial.f) >= gamma && trial.residual(&lam_new, t).sqrt() <= (1.0 - settings.armijo * s) * r0 {
                    break;
                }
            }
            s *= settings.backtrack;
            if s < 1e-14 {
                return None;
            }
        }
        std::mem::swap(&mut z, &mut z_new);
        std::mem::swap(&mut lam, &mut lam_new);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    /// minimize (z0 - 3)^2 + (z1 + 1)^2  s.t.  z0^2 + z1^2 <= 1,  z0 >= -0.5
    struct Disk;

    impl ConvexProgram for Disk {
        fn dim(&self) -> usize {
            2
        }
        fn num_constraints(&self) -> usize {
            2
        }
        fn objective(&self, z: &[f64]) -> f64 {
            (z[0] - 3.0).powi(2) + (z[1] + 1.0).powi(2)
        }
        fn add_objective_derivs(&self, z: &[f64], s: f64, g: &mut [f64], h: &mut DMatrix<f64>) {
            g[0] += s * 2.0 * (z[0] - 3.0);
            g[1] += s * 2.0 * (z[1] + 1.0);
            h[(0, 0)] += 2.0 * s;
            h[(1, 1)] += 2.0 * s;
        }
        fn constraints(&self, z: &[f64], out: &mut [f64]) {
            out[0] = z[0] * z[0] + z[1] * z[1] - 1.0;
            out[1] = -0.5 - z[0];
        }
        fn constraint_derivs(&self, i: usize, z: &[f64], g: &mut [f64], h: &mut DMatrix<f64>, w: f64) {
            if i == 0 {
                g[0] = 2.0 * z[0];
                g[1] = 2.0 * z[1];
                h[(0, 0)] += 2.0 * w;
                h[(1, 1)] += 2.0 * w;
            } else {
                g[0] = -1.0;
                g[1] = 0.0;
            }
        }
    }

    #[test]
    fn reaches_projection_with_duals() {
        for start in [[0.0, 0.0], [0.9, -0.1], [-0.4, 0.8]] {
            let sol = solve(&Disk, &start, None, &PdSettings::default()).unwrap();
            let norm = 10f64.sqrt();
            assert!((sol.z[0] - 3.0 / norm).abs() < 1e-8);
            assert!((sol.z[1] + 1.0 / norm).abs() < 1e-8);
            assert!((sol.duals[0] - (norm - 1.0)).abs() < 1e-7);
            let slack = 0.5 + sol.z[0];
            assert!(sol.duals[1] * slack <= PdSettings::default().tol * sol.objective.max(1.0));
            assert!(sol.kkt.max() < 1e-8, "{:?}", sol.kkt);
        }
    }

    #[test]
    fn rejects_infeasible_start() {
        assert!(solve(&Disk, &[2.0, 0.0], None, &PdSettings::default()).is_none());
    }
}
