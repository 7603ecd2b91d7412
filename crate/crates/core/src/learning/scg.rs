//! Full-batch scaled conjugate gradient training with early stopping.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::mlp::{loss_and_grad, LossKind, MlpModel};
use crate::channel::stream_rng;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight of `||theta||^2 / (2 S)` in the loss.
    pub lambda_reg: f64,
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    /// Finite-difference step scale for curvature estimates.
    pub sigma0: f64,
    /// Initial trust-region regularizer.
    pub lambda0: f64,
    pub validation_fraction: f64,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-3,
            hidden: vec![100, 100],
            max_epochs: 1000,
            sigma0: 5e-5,
            lambda0: 5e-7,
            validation_fraction: 0.1,
            patience: 20,
            seed: 0,
            loss: LossKind::TwoSided,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_reg >= 0.0
            && self.max_epochs > 0
            && self.sigma0 > 0.0
            && self.lambda0 > 0.0
            && self.validation_fraction > 0.0
            && self.validation_fraction < 1.0
            && self.patience > 0
            && !self.hidden.contains(&0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSystem(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Whether the SCG step was taken.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 is the initialization).
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

/// Columns of `x` selected by `idx`.
fn columns(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), idx.len(), |r, c| x[(r, idx[c])])
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trains a `[input, hidden.., classes]` network on samples stored one per
/// column of `x`. A seeded shuffle holds out `validation_fraction` of the
/// samples; the parameters with the lowest validation loss are returned.
pub fn scg_train(x: &DMatrix<f64>, labels: &[usize], classes: usize, cfg: &TrainConfig) -> Result<(MlpModel, TrainingLog)> {
    cfg.validate()?;
    let s = labels.len();
    if s == 0 || x.ncols() != s {
        return Err(Error::Dimension(format!("{} feature columns for {s} labels", x.ncols())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Dimension(format!("label {bad} outside {classes} classes")));
    }
    let mut order: Vec<usize> = (0..s).collect();
    let mut rng = stream_rng(cfg.seed, 0);
    order.shuffle(&mut rng);
    let n_val = if s > 1 {
        ((s as f64 * cfg.validation_fraction).round() as usize).clamp(1, s - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let x_tr = columns(x, train_idx);
    let y_tr: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let x_va = columns(x, val_idx);
    let y_va: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();

    let mut dims = vec![x.nrows()];
    dims.extend(&cfg.hidden);
    dims.push(classes);
    let mut model = MlpModel::glorot(&dims, &mut stream_rng(cfg.seed, 1))?;

    let eval = |m: &MlpModel| loss_and_grad(m, &x_tr, &y_tr, cfg.lambda_reg, cfg.loss);
    let val_loss = |m: &MlpModel| {
        if y_va.is_empty() {
            f64::NAN
        } else {
            loss_and_grad(m, &x_va, &y_va, 0.0, cfg.loss).0
        }
    };
    let finite = |v: f64| if v.is_finite() { Ok(v) } else { Err(Error::DivergenceDetected(v)) };

    let mut w = model.params();
    let n = w.len();
    let (f0, g0) = eval(&model);
    let mut f_now = finite(f0)?;
    let mut grad = g0;
    let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut probe = model.clone();
    let mut beta = cfg.lambda0;
    let (beta_min, beta_max) = (1e-15, 1e100);
    let mut success = true;
    let mut n_success = 0;
    let (mut mu, mut kappa, mut gamma) = (0.0, 0.0, 0.0);

    let mut best = (val_loss(&model), 0, w.clone());
    let mut log = TrainingLog {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: best.0,
    };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        if success {
            mu = dot(&d, &grad);
            if mu >= 0.0 {
                d = grad.iter().map(|g| -g).collect();
                mu = dot(&d, &grad);
            }
            kappa = dot(&d, &d);
            if kappa < f64::EPSILON {
                break;
            }
            let sigma = cfg.sigma0 / kappa.sqrt();
            let shifted: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + sigma * b).collect();
            probe.set_params(&shifted);
            let (_, g_plus) = eval(&probe);
            gamma = d
                .iter()
                .zip(g_plus.iter().zip(&grad))
                .map(|(di, (gp, g))| di * (gp - g))
                .sum::<f64>()
                / sigma;
        }
        let mut delta = gamma + beta * kappa;
        if delta <= 0.0 {
            delta = beta * kappa;
            beta -= gamma / kappa;
        }
        let alpha = -mu / delta;
        let trial: Vec<f64> = w.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
        probe.set_params(&trial);
        let (f_new, g_new) = eval(&probe);
        finite(f_new)?;
        let ratio = 2.0 * (f_new - f_now) / (alpha * mu);
        success = ratio >= 0.0;
        if success {
            w = trial;
            f_now = f_new;
            n_success += 1;
        }
        if ratio < 0.25 {
            beta = (4.0 * beta).min(beta_max);
        }
        if ratio > 0.75 {
            beta = (0.5 * beta).max(beta_min);
        }
        if success {
            let g_old = std::mem::replace(&mut grad, g_new);
            if n_success == n {
                d = grad.iter().map(|g| -g).collect();
                n_success = 0;
            } else {
                let cg = g_old.iter().zip(&grad).map(|(o, g)| (o - g) * g).sum::<f64>() / mu;
                d.iter_mut().zip(&grad).for_each(|(di, g)| *di = cg * *di - g);
            }
        }

        model.set_params(&w);
        let v = val_loss(&model);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss: f_now,
            val_loss: v,
            accepted: success,
        });
        if v < best.0 {
            best = (v, epoch, w.clone());
            stale = 0;
        } else if !y_va.is_empty() {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
        if dot(&grad, &grad) == 0.0 {
            break;
        }
    }
    if !y_va.is_empty() {
        model.set_params(&best.2);
        log.best_epoch = best.1;
        log.best_val_loss = best.0;
    } else {
        log.best_epoch = log.epochs.len();
    }
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    /// Two Gaussian blobs on either side of the plane `x0 + x1 = 1`.
    fn separable(s: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DMatrix::zeros(3, s);
        let mut y = Vec::with_capacity(s);
        for c in 0..s {
            let label = c % 2;
            let shift = if label == 0 { -0.3 } else { 0.3 };
            let a: f64 = rng.gen_range(0.0..1.0);
            x[(0, c)] = a + shift;
            x[(1, c)] = 1.0 - a + shift;
            x[(2, c)] = rng.gen_range(0.0..1.0);
            y.push(label);
        }
        (x, y)
    }

    fn accuracy(m: &MlpModel, x: &DMatrix<f64>, y: &[usize]) -> f64 {
        let p = m.forward_batch(x);
        let hits = (0..y.len()).filter(|&c| p.column(c).argmax().0 == y[c]).count();
        hits as f64 / y.len() as f64
    }

    fn small() -> TrainConfig {
        TrainConfig {
            hidden: vec![8],
            max_epochs: 200,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn separates_two_blobs() {
        let (x, y) = separable(400, 1);
        let (m, log) = scg_train(&x, &y, 2, &small()).unwrap();
        assert!(log.epochs.len() <= 200);
        assert!(accuracy(&m, &x, &y) >= 0.99);
    }

    #[test]
    fn training_loss_never_increases() {
        let (x, y) = separable(200, 2);
        let (_, log) = scg_train(&x, &y, 2, &small()).unwrap();
        assert!(log.epochs.iter().any(|e| e.accepted));
        for w in log.epochs.windows(2) {
            assert!(w[1].train_loss <= w[0].train_loss);
        }
    }

    #[test]
    fn heavy_regularization_flattens_the_output() {
        let (x, y) = separable(200, 3);
        let cfg = TrainConfig {
            lambda_reg: 1e3,
            ..small()
        };
        let (m, _) = scg_train(&x, &y, 2, &cfg).unwrap();
        let theta = m.params();
        assert!(theta.iter().map(|v| v * v).sum::<f64>().sqrt() < 0.5);
        let p = m.forward_batch(&x);
        assert!(p.iter().all(|v| (v - 0.5).abs() < 0.1));
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (x, y) = separable(120, 5);
        let a = scg_train(&x, &y, 2, &small()).unwrap();
        let b = scg_train(&x, &y, 2, &small()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, y) = separable(10, 6);
        assert!(scg_train(&x, &y, 1, &small()).is_err());
        assert!(scg_train(&x, &y[..5], 2, &small()).is_err());
        let bad = TrainConfig {
            validation_fraction: 1.0,
            ..small()
        };
        assert!(scg_train(&x, &y, 2, &bad).is_err());
    }
}
