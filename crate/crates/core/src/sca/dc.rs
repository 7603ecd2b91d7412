//! Difference-of-convex pieces of the per-subset precoding problem.
//!
//! The SINR constraint `|h w_k|^2 / u_k >= interference + noise` has a convex
//! left-hand side in `(w_k, u_k)`. Replacing it by its first-order expansion
//! gives a convex inner approximation of the feasible set.
//!
//! Complex vectors are handled through the real composite embedding
//! `x = [Re w; Im w]`, under which `w^H H w = x^T A x` for the real symmetric
//! `A = [[Re H, -Im H], [Im H, Re H]]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// `[Re w; Im w]`
pub fn embed_vector(w: &[Complex64]) -> Vec<f64> {
    w.iter().map(|z| z.re).chain(w.iter().map(|z| z.im)).collect()
}

pub fn unembed_vector(x: &[f64]) -> Vec<Complex64> {
    let m = x.len() / 2;
    (0..m).map(|i| Complex64::new(x[i], x[m + i])).collect()
}

/// Real embedding of the Hermitian rank-one form `h^H h`.
pub fn embed_outer(h: &[Complex64]) -> DMatrix<f64> {
    let m = h.len();
    let mut a = DMatrix::zeros(2 * m, 2 * m);
    for r in 0..m {
        for c in 0..m {
            // (h^H h)[r, c] = conj(h_r) h_c
            let z = h[r].conj() * h[c];
            a[(r, c)] = z.re;
            a[(r, m + c)] = -z.im;
            a[(m + r, c)] = z.im;
            a[(m + r, m + c)] = z.re;
        }
    }
    a
}

/// Coefficients of the affine under-estimator of `x^T A x / u` expanded at
/// `(x_hat, u_hat)`:
///
/// ```text
/// rhs(x, u) = grad . x + u_coeff * u + asym
/// grad    = (A + A^T) x_hat / u_hat
/// u_coeff = -x_hat^T A x_hat / u_hat^2
/// asym    = x_hat^T (A - A^T) x_hat / u_hat
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedSignal {
    pub grad: Vec<f64>,
    pub u_coeff: f64,
    pub asym: f64,
}

impl LinearizedSignal {
    pub fn rhs(&self, x: &[f64], u: f64) -> f64 {
        self.grad.iter().zip(x).map(|(g, v)| g * v).sum::<f64>() + self.u_coeff * u + self.asym
    }

    pub fn rhs_complex(&self, w: &[Complex64], u: f64) -> f64 {
        self.rhs(&embed_vector(w), u)
    }
}

/// Expands user `k`'s signal term `|h_k w_k|^2 / u_k` around `(w_hat, u_hat)`.
///
/// `h_row` is the user's channel restricted to the active antennas.
pub fn dc_linearize(h_row: &[Complex64], w_hat: &[Complex64], u_hat: f64) -> LinearizedSignal {
    debug_assert!(u_hat > 0.0);
    let a = embed_outer(h_row);
    let x = DVector::from_vec(embed_vector(w_hat));
    let ax = &a * &x;
    let atx = a.tr_mul(&x);
    let quad = x.dot(&ax);
    let grad = (&ax + &atx) / u_hat;
    let asym = (quad - x.dot(&atx)) / u_hat;
    debug_assert!(
        asym.abs() <= 1e-12 * (quad.abs() / u_hat).max(f64::MIN_POSITIVE),
        "non-Hermitian signal form: {asym}"
    );
    LinearizedSignal {
        grad: grad.as_slice().to_vec(),
        u_coeff: -quad / (u_hat * u_hat),
        asym,
    }
}

/// `x^T A x / y`
pub fn quadratic_over_linear(a: &DMatrix<f64>, x: &[f64], y: f64) -> f64 {
    let xv = DVector::from_column_slice(x);
    xv.dot(&(a * &xv)) / y
}

/// Hessian of `F(x, y) = x^T A x / y` in block form.
pub fn quadratic_over_linear_hessian(a: &DMatrix<f64>, x: &[f64], y: f64) -> DMatrix<f64> {
    let n = x.len();
    let sym = a + a.transpose();
    let xv = DVector::from_column_slice(x);
    let sx = &sym * &xv;
    let mut h = DMatrix::zeros(n + 1, n + 1);
    h.view_mut((0, 0), (n, n)).copy_from(&(&sym / y));
    for i in 0..n {
        h[(i, n)] = -sx[i] / (y * y);
        h[(n, i)] = -sx[i] / (y * y);
    }
    h[(n, n)] = 2.0 * xv.dot(&(a * &xv)) / (y * y * y);
    h
}

/// Smallest eigenvalue of the Hessian of `x^T A x / y`. Non-negative (up to
/// rounding) whenever `A` is positive semidefinite and `y > 0`.
pub fn convexity_certificate(a: &DMatrix<f64>, x: &[f64], y: f64) -> f64 {
    let h = quadratic_over_linear_hessian(a, x, y);
    SymmetricEigen::new(h).eigenvalues.min()
}
