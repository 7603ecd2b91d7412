//! Fully connected classifier: `tansig` hidden layers and a softmax output.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "laspd-mlp v1";

/// Probabilities are kept inside `[CLAMP, 1 - CLAMP]` inside the loss.
pub const CLAMP: f64 = 1e-12;

/// `2 / (1 + exp(-2z)) - 1`, evaluated as `tanh` so it saturates cleanly.
pub fn tansig(z: f64) -> f64 {
    z.tanh()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    /// `weights[l]` maps layer `l` (columns) to layer `l + 1` (rows).
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

/// Cross-entropy variant used by [`loss_and_grad`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    /// `-sum b log f + (1 - b) log(1 - f)`
    #[default]
    TwoSided,
    /// `-sum b log f`
    OneSided,
}

impl MlpModel {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Dimension(format!("invalid layer dims {dims:?}")));
        }
        Ok(Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| DMatrix::zeros(w[1], w[0])).collect(),
            biases: dims[1..].iter().map(|&d| DVector::zeros(d)).collect(),
        })
    }

    /// Weights uniform on `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn glorot<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        for w in &mut model.weights {
            let r = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.gen_range(-r..r));
        }
        Ok(model)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("at least two layers")
    }

    pub fn num_params(&self) -> usize {
        self.dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// All parameters, layer by layer: weights column-major, then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b.as_slice());
        }
        out
    }

    pub fn set_params(&mut self, theta: &[f64]) {
        assert_eq!(theta.len(), self.num_params());
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let nw = w.len();
            w.as_mut_slice().copy_from_slice(&theta[at..at + nw]);
            at += nw;
            let nb = b.len();
            b.as_mut_slice().copy_from_slice(&theta[at..at + nb]);
            at += nb;
        }
    }

    /// Activations of every layer for a batch stored one sample per column.
    fn activations(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * acts.last().expect("input present");
            for mut col in z.column_iter_mut() {
                col += b;
            }
            if l < last {
                z.apply(|v| *v = tansig(*v));
            } else {
                for mut col in z.column_iter_mut() {
                    softmax_in_place(col.as_mut_slice());
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} entries, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let batch = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.activations(&batch).pop().expect("output layer").as_slice().to_vec())
    }

    /// Class probabilities, one column per input column.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.activations(x).pop().expect("output layer")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MODEL_HEADER}").unwrap();
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        writeln!(s, "{}", dims.join(" ")).unwrap();
        let row = |s: &mut String, vals: &mut dyn Iterator<Item = f64>| {
            let parts: Vec<String> = vals.map(|v| format!("{v:.16e}")).collect();
            writeln!(s, "{}", parts.join(" ")).unwrap();
        };
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for r in 0..w.nrows() {
                row(&mut s, &mut w.row(r).iter().copied());
            }
            row(&mut s, &mut b.iter().copied());
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            what: "model",
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == MODEL_HEADER => {}
            _ => return Err(bad(format!("first line must be `{MODEL_HEADER}`"))),
        }
        let (_, dims_line) = lines.next().ok_or_else(|| bad("missing layer dims".into()))?;
        let dims: Vec<usize> = dims_line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad layer dim `{t}`"))))
            .collect::<Result<_>>()?;
        let mut model = Self::zeros(&dims).map_err(|e| bad(e.to_string()))?;
        let mut read_row = |want: usize| -> Result<Vec<f64>> {
            let (no, line) = lines.next().ok_or_else(|| bad("truncated parameters".into()))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(format!("line {}: bad number `{t}`", no + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != want || vals.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!("line {}: expected {want} finite values, got {}", no + 1, vals.len())));
            }
            Ok(vals)
        };
        for (w, b) in model.weights.iter_mut().zip(&mut model.biases) {
            for r in 0..w.nrows() {
                let vals = read_row(w.ncols())?;
                w.row_mut(r).iter_mut().zip(vals).for_each(|(d, v)| *d = v);
            }
            *b = DVector::from_vec(read_row(b.len())?);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?, path)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let top = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - top).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

/// Regularized cross-entropy over a batch (`x` one sample per column) and
/// its gradient in [`MlpModel::params`] layout:
///
/// `(1/S) sum_s CE(f(x_s), b_s) + lambda/(2S) ||theta||^2`
pub fn loss_and_grad(model: &MlpModel, x: &DMatrix<f64>, labels: &[usize], lambda: f64, kind: LossKind) -> (f64, Vec<f64>) {
    let s = labels.len();
    assert_eq!(x.ncols(), s, "one label per sample column");
    let acts = model.activations(x);
    let out = acts.last().expect("output layer");
    let inv_s = 1.0 / s as f64;

    let mut loss = 0.0;
    // dL/dz at the softmax input.
    let mut delta = DMatrix::zeros(out.nrows(), s);
    let mut g = vec![0.0; out.nrows()];
    for (c, &label) in labels.iter().enumerate() {
        let f = out.column(c);
        for (n, gn) in g.iter_mut().enumerate() {
            let raw = f[n];
            let fc = raw.clamp(CLAMP, 1.0 - CLAMP);
            let inside = raw > CLAMP && raw < 1.0 - CLAMP;
            let (l, d) = match (kind, n == label) {
                (_, true) => (-fc.ln(), -1.0 / fc),
                (LossKind::TwoSided, false) => (-(1.0 - fc).ln(), 1.0 / (1.0 - fc)),
                (LossKind::OneSided, false) => (0.0, 0.0),
            };
            loss += l;
            *gn = if inside { d } else { 0.0 };
        }
        let fg: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum();
        for n in 0..g.len() {
            delta[(n, c)] = f[n] * (g[n] - fg) * inv_s;
        }
    }
    let theta = model.params();
    loss = loss * inv_s + 0.5 * lambda * inv_s * theta.iter().map(|v| v * v).sum::<f64>();

    let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(model.weights.len());
    for l in (0..model.weights.len()).rev() {
        let gw = &delta * acts[l].transpose() + &model.weights[l] * (lambda * inv_s);
        let gb = delta.column_sum() + &model.biases[l] * (lambda * inv_s);
        if l > 0 {
            let mut back = model.weights[l].transpose() * &delta;
            back.zip_apply(&acts[l], |d, a| *d *= 1.0 - a * a);
            delta = back;
        }
        grads.push((gw, gb));
    }
    let mut flat = Vec::with_capacity(theta.len());
    for (gw, gb) in grads.iter().rev() {
        flat.extend_from_slice(gw.as_slice());
        flat.extend_from_slice(gb.as_slice());
    }
    (loss, flat)
}

/// Relative error `||fd - g|| / ||g||` of the analytic gradient against
/// central differences with step `h`, one entry per parameter block in
/// [`MlpModel::params`] order (weights then biases of each layer).
pub fn gradient_check(model: &MlpModel, x: &DMatrix<f64>, labels: &[usize], lambda: f64, kind: LossKind, h: f64) -> Vec<f64> {
    let (_, grad) = loss_and_grad(model, x, labels, lambda, kind);
    let theta = model.params();
    let mut probe = model.clone();
    let mut p = theta.clone();
    let mut fd = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        p[i] = theta[i] + h;
        probe.set_params(&p);
        let up = loss_and_grad(&probe, x, labels, lambda, kind).0;
        p[i] = theta[i] - h;
        probe.set_params(&p);
        let down = loss_and_grad(&probe, x, labels, lambda, kind).0;
        p[i] = theta[i];
        fd[i] = (up - down) / (2.0 * h);
    }
    let mut errors = Vec::with_capacity(2 * model.weights.len());
    let mut at = 0;
    for (w, b) in model.weights.iter().zip(&model.biases) {
        for len in [w.len(), b.len()] {
            let range = at..at + len;
            let diff: f64 = range.clone().map(|i| (fd[i] - grad[i]).powi(2)).sum::<f64>().sqrt();
            let norm: f64 = range.map(|i| grad[i] * grad[i]).sum::<f64>().sqrt();
            errors.push(diff / norm.max(f64::MIN_POSITIVE));
            at += len;
        }
    }
    errors
}
