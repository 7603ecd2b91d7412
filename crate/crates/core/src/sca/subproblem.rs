//! The convexified precoding problem around one expansion point.
//!
//! Variables are scaled so that noise power and power budget are both one:
//! `v_k = w_k / sqrt(P)` and `g_k = h_k sqrt(P) / sigma`. SINRs are unchanged.
//!
//! Layout of `z`: the embedded precoders `x_0 .. x_{K-1}` (each `2M` reals)
//! followed by `y_0 .. y_{K-1}` with `u_k = u_hat_k y_k`, so the expansion
//! point sits at `y = 1`. Constraint order: total power, the `K` QoS floors
//! `u_k >= eta`, then the `K` linearized SINR constraints. QoS and SINR rows
//! are normalized to be O(1) at the expansion point.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::barrier::ConvexProgram;
use super::dc::{dc_linearize, embed_vector, unembed_vector, LinearizedSignal};
use crate::model::{CMatrix, ChannelMatrix, PrecodingMatrix, SystemConfig};

/// Channel rows in normalized units together with their real embeddings.
#[derive(Debug, Clone)]
pub(crate) struct ScaledChannel {
    pub rows: Vec<Vec<Complex64>>,
    /// `Re(g . v) = re_part . x`, `Im(g . v) = im_part . x`.
    re_part: Vec<Vec<f64>>,
    im_part: Vec<Vec<f64>>,
    /// `2 (re re^T + im im^T)`, the Hessian of `|g . v|^2`.
    hess: Vec<DMatrix<f64>>,
    pub sqrt_power: f64,
    pub m: usize,
}

impl ScaledChannel {
    pub fn new(h_a: &ChannelMatrix, cfg: &SystemConfig) -> Self {
        let m = h_a.num_antennas();
        let sqrt_power = cfg.power_budget_w.sqrt();
        let s = sqrt_power / cfg.noise_power_w.sqrt();
        let rows: Vec<Vec<Complex64>> = (0..h_a.num_users()).map(|k| (0..m).map(|j| h_a.gain(k, j) * s).collect()).collect();
        let re_part: Vec<Vec<f64>> = rows
            .iter()
            .map(|g| g.iter().map(|z| z.re).chain(g.iter().map(|z| -z.im)).collect())
            .collect();
        let im_part: Vec<Vec<f64>> = rows
            .iter()
            .map(|g| g.iter().map(|z| z.im).chain(g.iter().map(|z| z.re)).collect())
            .collect();
        let hess = re_part
            .iter()
            .zip(&im_part)
            .map(|(a, b)| DMatrix::from_fn(2 * m, 2 * m, |r, c| 2.0 * (a[r] * a[c] + b[r] * b[c])))
            .collect();
        Self {
            rows,
            re_part,
            im_part,
            hess,
            sqrt_power,
            m,
        }
    }

    pub fn num_users(&self) -> usize {
        self.rows.len()
    }

    /// Real and imaginary parts of `g_k . v` for an embedded precoder.
    fn gain(&self, k: usize, x: &[f64]) -> (f64, f64) {
        let re: f64 = self.re_part[k].iter().zip(x).map(|(a, b)| a * b).sum();
        let im: f64 = self.im_part[k].iter().zip(x).map(|(a, b)| a * b).sum();
        (re, im)
    }

    pub fn embed(&self, w: &PrecodingMatrix) -> Vec<f64> {
        let cols = w.columns();
        let mut x = Vec::with_capacity(2 * self.m * cols.ncols());
        for k in 0..cols.ncols() {
            let v: Vec<Complex64> = cols.column(k).iter().map(|z| z / self.sqrt_power).collect();
            x.extend(embed_vector(&v));
        }
        x
    }

    pub fn unembed(&self, x: &[f64]) -> PrecodingMatrix {
        let k = self.num_users();
        let blk = 2 * self.m;
        let mut cols = CMatrix::zeros(self.m, k);
        for u in 0..k {
            let v = unembed_vector(&x[u * blk..(u + 1) * blk]);
            for (r, z) in v.into_iter().enumerate() {
                cols[(r, u)] = z * self.sqrt_power;
            }
        }
        PrecodingMatrix::new(cols)
    }
}

pub(crate) struct DcSubproblem<'a> {
    ch: &'a ScaledChannel,
    lin: Vec<LinearizedSignal>,
    /// Each linearized SINR constraint is divided by this to make it O(1).
    dc_scale: Vec<f64>,
    u_hat: Vec<f64>,
    eta: f64,
}

impl<'a> DcSubproblem<'a> {
    /// Linearizes every user's signal term at `(x_hat, u_hat)`.
    pub fn new(ch: &'a ScaledChannel, x_hat: &[f64], u_hat: &[f64], eta: f64) -> Self {
        let blk = 2 * ch.m;
        let lin: Vec<LinearizedSignal> = (0..ch.num_users())
            .map(|k| {
                let w = unembed_vector(&x_hat[k * blk..(k + 1) * blk]);
                dc_linearize(&ch.rows[k], &w, u_hat[k])
            })
            .collect();
        let dc_scale = lin
            .iter()
            .enumerate()
            .map(|(k, l)| l.rhs(&x_hat[k * blk..(k + 1) * blk], u_hat[k]).max(1.0))
            .collect();
        Self {
            ch,
            lin,
            dc_scale,
            u_hat: u_hat.to_vec(),
            eta,
        }
    }

    fn k(&self) -> usize {
        self.ch.num_users()
    }

    fn blk(&self) -> usize {
        2 * self.ch.m
    }

    fn u_index(&self, k: usize) -> usize {
        self.blk() * self.k() + k
    }

    /// `[x; y]` for precoders `x` and SINR bounds `u`.
    pub fn to_z(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        x.iter().copied().chain(u.iter().zip(&self.u_hat).map(|(a, b)| a / b)).collect()
    }

    /// Splits `z` into precoders and SINR bounds.
    pub fn from_z(&self, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let uo = self.u_index(0);
        let u = z[uo..].iter().zip(&self.u_hat).map(|(y, b)| y * b).collect();
        (z[..uo].to_vec(), u)
    }
}

impl ConvexProgram for DcSubproblem<'_> {
    fn dim(&self) -> usize {
        (self.blk() + 1) * self.k()
    }

    fn num_constraints(&self) -> usize {
        2 * self.k() + 1
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let uo = self.u_index(0);
        let mut s = 0.0;
        for (y, b) in z[uo..].iter().zip(&self.u_hat) {
            let u = y * b;
            if u <= -1.0 {
                return f64::INFINITY;
            }
            s -= u.ln_1p();
        }
        s
    }

    fn add_objective_derivs(&self, z: &[f64], scale: f64, grad: &mut [f64], hess: &mut DMatrix<f64>) {
        let uo = self.u_index(0);
        for k in 0..self.k() {
            let b = self.u_hat[k];
            let d = b / (1.0 + b * z[uo + k]);
            grad[uo + k] -= scale * d;
            hess[(uo + k, uo + k)] += scale * d * d;
        }
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        let k_users = self.k();
        let blk = self.blk();
        let xs = &z[..blk * k_users];
        out[0] = xs.iter().map(|v| v * v).sum::<f64>() - 1.0;
        for k in 0..k_users {
            let u = z[self.u_index(k)] * self.u_hat[k];
            out[1 + k] = 1.0 - u / self.eta;
            let mut interference = 0.0;
            for i in (0..k_users).filter(|&i| i != k) {
                let (re, im) = self.ch.gain(k, &xs[i * blk..(i + 1) * blk]);
                interference += re * re + im * im;
            }
            out[1 + k_users + k] = (interference + 1.0 - self.lin[k].rhs(&xs[k * blk..(k + 1) * blk], u)) / self.dc_scale[k];
        }
    }

    fn constraint_derivs(&self, i: usize, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>, weight: f64) {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let k_users = self.k();
        let blk = self.blk();
        if i == 0 {
            for j in 0..blk * k_users {
                grad[j] = 2.0 * z[j];
                hess[(j, j)] += 2.0 * weight;
            }
        } else if i <= k_users {
            grad[self.u_index(i - 1)] = -self.u_hat[i - 1] / self.eta;
        } else {
            let k = i - 1 - k_users;
            let c = 1.0 / self.dc_scale[k];
            let weight = weight * c;
            for other in (0..k_users).filter(|&o| o != k) {
                let off = other * blk;
                let (re, im) = self.ch.gain(k, &z[off..off + blk]);
                for j in 0..blk {
                    grad[off + j] = 2.0 * c * (re * self.ch.re_part[k][j] + im * self.ch.im_part[k][j]);
                }
                if weight != 0.0 {
                    let mut block = hess.view_mut((off, off), (blk, blk));
                    block.zip_apply(&self.ch.hess[k], |h, a| *h += weight * a);
                }
            }
            let off = k * blk;
            for j in 0..blk {
                grad[off + j] = -c * self.lin[k].grad[j];
            }
            grad[self.u_index(k)] = -c * self.lin[k].u_coeff * self.u_hat[k];
        }
    }
}
