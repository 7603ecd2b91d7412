//! Zero-forcing precoders scaled to meet every user's QoS target exactly.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{sinr, CMatrix, ChannelMatrix, PrecodingMatrix, SystemConfig};

/// Condition-number ceiling for `H H^H` before users count as collinear.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

/// Unit-gain zero-forcing directions `H^H (H H^H)^{-1}` (columns), so that
/// `h_k . d_i = delta_ki`.
pub fn zf_directions(h: &ChannelMatrix) -> Result<CMatrix> {
    let hm = h.entries();
    if hm.nrows() > hm.ncols() {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let gram = hm * hm.adjoint();
    let eig = SymmetricEigen::new(gram.clone());
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_GRAM_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient { condition })?;
    let inv = chol.inverse();
    Ok(hm.adjoint() * inv)
}

/// Total power zero forcing needs so that every user reaches `target_sinr`.
pub fn zf_qos_power(h: &ChannelMatrix, noise_power_w: f64, target_sinr: f64) -> Result<f64> {
    let d = zf_directions(h)?;
    let col_norms: f64 = d.iter().map(|z| z.norm_sqr()).sum();
    Ok(noise_power_w * target_sinr * col_norms)
}

/// Zero-forcing precoders that put each user exactly on its QoS target.
#[derive(Debug, Clone)]
pub struct ZfPoint {
    pub precoders: PrecodingMatrix,
    pub achieved_sinr: Vec<f64>,
    pub required_power_w: f64,
}

pub fn zf_qos_point(h: &ChannelMatrix, cfg: &SystemConfig, target_sinr: f64) -> Result<ZfPoint> {
    let dirs = zf_directions(h)?;
    let amp = Complex64::new((cfg.noise_power_w * target_sinr).sqrt(), 0.0);
    let precoders = PrecodingMatrix::new(dirs.map(|z| z * amp));
    let required_power_w = precoders.total_power();
    if required_power_w > cfg.power_budget_w * (1.0 + 1e-12) {
        return Err(Error::Infeasible {
            required_w: required_power_w,
            budget_w: cfg.power_budget_w,
        });
    }
    let achieved_sinr = (0..h.num_users()).map(|k| sinr(h, &precoders, k, cfg.noise_power_w)).collect();
    Ok(ZfPoint {
        precoders,
        achieved_sinr,
        required_power_w,
    })
}

/// Zero-forcing directions with sum-rate-maximizing power control under the
/// QoS floors (water-filling with per-user lower bounds).
pub fn zf_power_control(h: &ChannelMatrix, cfg: &SystemConfig, target_sinr: f64) -> Result<PrecodingMatrix> {
    let dirs = zf_directions(h)?;
    let k = h.num_users();
    // Power p_k on unit-gain direction d_k yields SINR p_k / (sigma^2 |d_k|^2).
    let cost: Vec<f64> = (0..k)
        .map(|i| cfg.noise_power_w * dirs.column(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .collect();
    let floor: Vec<f64> = cost.iter().map(|c| c * target_sinr).collect();
    let floor_total: f64 = floor.iter().sum();
    if floor_total > cfg.power_budget_w * (1.0 + 1e-12) {
        return Err(Error::Infeasible {
            required_w: floor_total,
            budget_w: cfg.power_budget_w,
        });
    }
    // p_k = max(floor_k, level - cost_k); bisection on the water level.
    let alloc = |level: f64| -> Vec<f64> { (0..k).map(|i| floor[i].max(level - cost[i])).collect() };
    let budget = cfg.power_budget_w;
    let mut lo = 0.0;
    let mut hi = budget + cost.iter().cloned().fold(0.0, f64::max) + floor.iter().cloned().fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if alloc(mid).iter().sum::<f64>() > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p = alloc(lo);
    let cols = CMatrix::from_fn(dirs.nrows(), k, |r, c| {
        let norm = (cost[c] / cfg.noise_power_w).sqrt();
        dirs[(r, c)] * (p[c].sqrt() / norm)
    });
    Ok(PrecodingMatrix::new(cols))
}
