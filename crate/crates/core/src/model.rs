//! System constants and the rate, power and overhead arithmetic shared by
//! every other module.
//!
//! Units are linear throughout: rates in bit/s, powers in watts, durations in
//! channel uses (c.u.). Decibel conversions only happen in
//! [`crate::channel`].

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative slack applied when deciding whether a user's QoS target is met.
pub const QOS_REL_TOL: f64 = 1e-9;

/// Scalar constants of one downlink cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub bandwidth_hz: f64,
    /// Coherence block length `T` in channel uses.
    pub block_len_cu: f64,
    pub cu_duration_s: f64,
    pub noise_power_w: f64,
    pub power_budget_w: f64,
    /// Per-user minimum effective rate, identical for every user.
    pub qos_bps: f64,
    pub num_antennas: usize,
    pub num_rf_chains: usize,
    /// Time charged for one precoding solve on one candidate subset.
    pub solve_cost_cu: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 1e6,
            block_len_cu: 200.0,
            cu_duration_s: 66.7e-6,
            // -140 dBm/Hz over 1 MHz.
            noise_power_w: 1e-11,
            power_budget_w: 1.0,
            qos_bps: 2e6,
            num_antennas: 8,
            num_rf_chains: 4,
            solve_cost_cu: 0.2,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("block_len_cu", self.block_len_cu),
            ("cu_duration_s", self.cu_duration_s),
            ("noise_power_w", self.noise_power_w),
            ("power_budget_w", self.power_budget_w),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidSystem(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.qos_bps.is_finite() && self.qos_bps >= 0.0) {
            return Err(Error::InvalidSystem(format!("qos_bps must be non-negative, got {}", self.qos_bps)));
        }
        if !(self.solve_cost_cu.is_finite() && self.solve_cost_cu >= 0.0) {
            return Err(Error::InvalidSystem("solve_cost_cu must be non-negative".into()));
        }
        if self.num_rf_chains == 0 || self.num_antennas < self.num_rf_chains {
            return Err(Error::InvalidSystem(format!(
                "need N >= M >= 1, got N={} M={}",
                self.num_antennas, self.num_rf_chains
            )));
        }
        let worst = channel_overhead(self.num_rf_chains, self.num_antennas, self.num_rf_chains) as f64;
        if worst >= self.block_len_cu {
            return Err(Error::InvalidSystem(format!(
                "CSI overhead {worst} c.u. at K=M leaves no room in a {} c.u. block",
                self.block_len_cu
            )));
        }
        Ok(())
    }

    /// Pilot time for `num_users` users with this cell's antenna layout.
    pub fn csi_overhead_cu(&self, num_users: usize) -> f64 {
        channel_overhead(num_users, self.num_antennas, self.num_rf_chains) as f64
    }

    /// Minimum SINR that meets the rate target over `effective_bw` Hz.
    pub fn qos_sinr(&self, effective_bw: f64) -> f64 {
        (self.qos_bps / effective_bw).exp2() - 1.0
    }

    pub fn with_antennas(&self, n: usize) -> Self {
        Self {
            num_antennas: n,
            ..self.clone()
        }
    }

    pub fn with_power(&self, p: f64) -> Self {
        Self {
            power_budget_w: p,
            ..self.clone()
        }
    }
}

/// Pilot overhead `K(floor(N/M) + 1)` in channel uses.
pub fn channel_overhead(num_users: usize, num_antennas: usize, num_rf_chains: usize) -> usize {
    num_users * (num_antennas / num_rf_chains + 1)
}

/// Bandwidth left for data once pilots and processing are paid for.
pub fn effective_bandwidth(cfg: &SystemConfig, tau_pro_cu: f64, num_users: usize) -> Result<f64> {
    let overhead = cfg.csi_overhead_cu(num_users) + tau_pro_cu;
    if overhead >= cfg.block_len_cu {
        return Err(Error::OverheadExceedsBlock {
            overhead_cu: overhead,
            block_cu: cfg.block_len_cu,
        });
    }
    Ok(cfg.bandwidth_hz * (1.0 - overhead / cfg.block_len_cu))
}

/// Complex `K x N` channel, row `k` is user `k`'s gains including pathloss.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    entries: CMatrix,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::Dimension("channel needs at least one user and one antenna".into()));
        }
        if entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Dimension("channel has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let k = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged channel rows".into()));
        }
        Self::new(CMatrix::from_fn(k, n, |i, j| rows[i][j]))
    }

    pub fn num_users(&self) -> usize {
        self.entries.nrows()
    }

    pub fn num_antennas(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn gain(&self, user: usize, antenna: usize) -> Complex64 {
        self.entries[(user, antenna)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: self.entries.map(|z| z * c),
        }
    }
}

/// Sorted set of `M` distinct antenna indices in `[0, N)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AntennaSubset {
    indices: Vec<usize>,
}

impl AntennaSubset {
    pub fn new(indices: Vec<usize>, num_antennas: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Dimension("empty antenna subset".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Dimension(format!("subset {indices:?} is not strictly increasing")));
        }
        if indices.last().is_some_and(|&a| a >= num_antennas) {
            return Err(Error::Dimension(format!("subset {indices:?} exceeds N={num_antennas}")));
        }
        Ok(Self { indices })
    }

    /// `{0, ..., m-1}`
    pub fn first(m: usize) -> Self {
        Self { indices: (0..m).collect() }
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl fmt::Display for AntennaSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, a) in self.indices.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "}}")
    }
}

/// `M x K` precoders, column `k` drives user `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingMatrix {
    columns: CMatrix,
}

impl PrecodingMatrix {
    pub fn new(columns: CMatrix) -> Self {
        Self { columns }
    }

    pub fn zeros(num_rf_chains: usize, num_users: usize) -> Self {
        Self {
            columns: CMatrix::zeros(num_rf_chains, num_users),
        }
    }

    pub fn columns(&self) -> &CMatrix {
        &self.columns
    }

    pub fn num_users(&self) -> usize {
        self.columns.ncols()
    }

    pub fn total_power(&self) -> f64 {
        self.columns.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn user_power(&self, k: usize) -> f64 {
        self.columns.column(k).iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Column gather: column `j` of the result is column `subset[j]` of `h`.
pub fn restrict_channel(h: &ChannelMatrix, subset: &AntennaSubset) -> ChannelMatrix {
    let idx = subset.indices();
    let entries = CMatrix::from_fn(h.num_users(), idx.len(), |i, j| h.entries[(i, idx[j])]);
    ChannelMatrix { entries }
}

/// `h_k . w_i` for the restricted channel.
fn inner(h_a: &ChannelMatrix, w: &PrecodingMatrix, k: usize, i: usize) -> Complex64 {
    h_a.entries.row(k).iter().zip(w.columns.column(i).iter()).map(|(a, b)| a * b).sum()
}

pub fn sinr(h_a: &ChannelMatrix, w: &PrecodingMatrix, k: usize, noise_power_w: f64) -> f64 {
    let signal = inner(h_a, w, k, k).norm_sqr();
    let interference: f64 = (0..w.num_users()).filter(|&i| i != k).map(|i| inner(h_a, w, k, i).norm_sqr()).sum();
    signal / (interference + noise_power_w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub per_user_rate_bps: Vec<f64>,
    pub per_user_sinr: Vec<f64>,
    pub sum_rate_bps: f64,
    pub qos_satisfied: Vec<bool>,
    pub total_power_w: f64,
    pub tau_pro_cu: f64,
    pub tau_csi_cu: f64,
    pub effective_bandwidth_hz: f64,
    pub bandwidth_hz: f64,
}

impl RateReport {
    /// Shannon sum rate over the full bandwidth, no overhead charged.
    pub fn raw_sum_rate_bps(&self) -> f64 {
        self.bandwidth_hz * self.per_user_sinr.iter().map(|s| s.ln_1p()).sum::<f64>() / std::f64::consts::LN_2
    }

    pub fn all_qos_satisfied(&self) -> bool {
        self.qos_satisfied.iter().all(|&q| q)
    }
}

/// Effective per-user and total rates of precoders `w` on a restricted channel.
pub fn sum_rate(h_a: &ChannelMatrix, w: &PrecodingMatrix, cfg: &SystemConfig, tau_pro_cu: f64) -> Result<RateReport> {
    let k_users = h_a.num_users();
    if w.num_users() != k_users || w.columns.nrows() != h_a.num_antennas() {
        return Err(Error::Dimension(format!(
            "precoder is {}x{}, channel is {}x{}",
            w.columns.nrows(),
            w.num_users(),
            k_users,
            h_a.num_antennas()
        )));
    }
    let bw = effective_bandwidth(cfg, tau_pro_cu, k_users)?;
    let per_user_sinr: Vec<f64> = (0..k_users).map(|k| sinr(h_a, w, k, cfg.noise_power_w)).collect();
    let per_user_rate_bps: Vec<f64> = per_user_sinr.iter().map(|s| bw * s.ln_1p() / std::f64::consts::LN_2).collect();
    let qos_satisfied = per_user_rate_bps
        .iter()
        .map(|&r| r > 0.0 && r >= cfg.qos_bps * (1.0 - QOS_REL_TOL))
        .collect();
    Ok(RateReport {
        sum_rate_bps: per_user_rate_bps.iter().sum(),
        per_user_rate_bps,
        per_user_sinr,
        qos_satisfied,
        total_power_w: w.total_power(),
        tau_pro_cu,
        tau_csi_cu: cfg.csi_overhead_cu(k_users),
        effective_bandwidth_hz: bw,
        bandwidth_hz: cfg.bandwidth_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg_b1e6() -> SystemConfig {
        SystemConfig {
            num_antennas: 9,
            num_rf_chains: 4,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn overhead_examples() {
        assert_eq!(channel_overhead(4, 9, 4), 12);
        assert_eq!(channel_overhead(4, 10, 4), 12);
        assert_eq!(channel_overhead(4, 6, 4), 8);
        assert_eq!(channel_overhead(2, 8, 4), 6);
    }

    #[test]
    fn overhead_monotonicity() {
        for k in 1..6 {
            for m in 1..6 {
                for n in m..12 {
                    let v = channel_overhead(k, n, m);
                    assert!(channel_overhead(k + 1, n, m) >= v);
                    assert!(channel_overhead(k, n + 1, m) >= v);
                    if m + 1 <= n {
                        assert!(channel_overhead(k, n, m + 1) <= v);
                    }
                }
            }
        }
    }

    #[test]
    fn effective_bandwidth_examples() {
        // N=9, M=4, K=4 gives 12 c.u. of pilots.
        let cfg = cfg_b1e6();
        assert_relative_eq!(effective_bandwidth(&cfg, 2.0, 4).unwrap(), 0.93e6, max_relative = 1e-12);
        // N=6, M=4, K=4 gives 8 c.u.
        let cfg6 = cfg.with_antennas(6);
        assert_relative_eq!(effective_bandwidth(&cfg6, 0.0, 4).unwrap(), 0.96e6, max_relative = 1e-12);
        // 190 c.u. of pilots plus 20 of processing overflows a 200 c.u. block.
        let huge = SystemConfig {
            num_antennas: 188,
            num_rf_chains: 4,
            ..SystemConfig::default()
        };
        assert_eq!(huge.csi_overhead_cu(4), 192.0);
        assert!(matches!(
            effective_bandwidth(&huge, 20.0, 4),
            Err(Error::OverheadExceedsBlock { .. })
        ));
        let cfg_t = SystemConfig {
            num_antennas: 8,
            ..SystemConfig::default()
        };
        assert!(matches!(
            effective_bandwidth(&cfg_t, 200.0, 1),
            Err(Error::OverheadExceedsBlock { .. })
        ));
    }

    #[test]
    fn validate_rejects_bad_layouts() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = SystemConfig {
            num_antennas: 3,
            num_rf_chains: 4,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            noise_power_w: 0.0,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemConfig {
            block_len_cu: 10.0,
            ..SystemConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn restrict_gathers_columns() {
        let h = ChannelMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 2.0), c(3.0, 0.0), c(4.0, 0.0)]]).unwrap();
        let a = AntennaSubset::new(vec![0, 2], 4).unwrap();
        let r = restrict_channel(&h, &a);
        assert_eq!(r.entries().as_slice(), &[c(1.0, 0.0), c(3.0, 0.0)]);

        let full = AntennaSubset::first(4);
        assert_eq!(restrict_channel(&h, &full), h);

        let h2 = ChannelMatrix::new(CMatrix::from_fn(2, 5, |i, j| c(i as f64, j as f64))).unwrap();
        let r2 = restrict_channel(&h2, &AntennaSubset::new(vec![1, 3, 4], 5).unwrap());
        for i in 0..2 {
            for (j, &a) in [1usize, 3, 4].iter().enumerate() {
                assert_eq!(r2.gain(i, j), h2.gain(i, a));
            }
        }
    }

    #[test]
    fn subset_validation() {
        assert!(AntennaSubset::new(vec![0, 2, 1], 4).is_err());
        assert!(AntennaSubset::new(vec![0, 0], 4).is_err());
        assert!(AntennaSubset::new(vec![0, 4], 4).is_err());
        assert_eq!(AntennaSubset::new(vec![1, 3], 4).unwrap().to_string(), "{1,3}");
    }

    #[test]
    fn sinr_single_user_no_interference() {
        let h = ChannelMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)]]).unwrap();
        let p: f64 = 2.0;
        let w = PrecodingMatrix::new(CMatrix::from_column_slice(2, 1, &[c(p.sqrt(), 0.0), c(0.0, 0.0)]));
        assert_relative_eq!(sinr(&h, &w, 0, 1e-3), p / 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn sinr_orthogonal_zero_forcing() {
        let h = ChannelMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.0, 2.0)]]).unwrap();
        let w = PrecodingMatrix::new(CMatrix::from_column_slice(
            2,
            2,
            &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 1.0)],
        ));
        let sigma2 = 0.1;
        assert_relative_eq!(sinr(&h, &w, 0, sigma2), 0.25 / sigma2, max_relative = 1e-12);
        assert_relative_eq!(sinr(&h, &w, 1, sigma2), 8.0 / sigma2, max_relative = 1e-12);
    }

    #[test]
    fn sinr_matches_scalar_recomputation() {
        // Hand-expanded complex products, independent of the matrix helpers.
        let h = [[(0.3, -1.2), (0.7, 0.4)], [(-0.5, 0.9), (1.1, -0.2)]];
        let w = [[(0.2, 0.1), (-0.4, 0.6)], [(0.9, -0.3), (0.05, 0.2)]]; // w[user][antenna]
        let sigma2 = 0.05;
        let dot = |k: usize, i: usize| {
            let mut re = 0.0;
            let mut im = 0.0;
            for m in 0..2 {
                let (a, b) = h[k][m];
                let (cr, ci) = w[i][m];
                re += a * cr - b * ci;
                im += a * ci + b * cr;
            }
            re * re + im * im
        };
        let hm = ChannelMatrix::from_rows(&h.iter().map(|r| r.iter().map(|&(a, b)| c(a, b)).collect()).collect::<Vec<_>>()).unwrap();
        let wm = PrecodingMatrix::new(CMatrix::from_fn(2, 2, |m, i| c(w[i][m].0, w[i][m].1)));
        for k in 0..2 {
            let expected = dot(k, k) / (dot(k, 1 - k) + sigma2);
            assert_relative_eq!(sinr(&hm, &wm, k, sigma2), expected, max_relative = 1e-13);
        }
    }

    #[test]
    fn sum_rate_single_user_mrt() {
        // |h|^2 = 1e-7, P = 2, sigma^2 = 1e-11, effective bandwidth 0.93 MHz.
        let cfg = SystemConfig {
            num_antennas: 9,
            power_budget_w: 2.0,
            ..SystemConfig::default()
        };
        let g = (0.5e-7f64).sqrt();
        let h = ChannelMatrix::from_rows(&[vec![c(g, 0.0), c(0.0, g)]]).unwrap();
        let norm = 1e-7f64.sqrt();
        let w = PrecodingMatrix::new(CMatrix::from_column_slice(
            2,
            1,
            &[c(g, 0.0) * (2f64.sqrt() / norm), c(0.0, -g) * (2f64.sqrt() / norm)],
        ));
        // tau_csi = 1*(2+1) = 3; pick tau_pro so that the bandwidth is 0.93 MHz.
        let rep = sum_rate(&h, &w, &cfg, 11.0).unwrap();
        assert_relative_eq!(rep.effective_bandwidth_hz, 0.93e6, max_relative = 1e-12);
        let expected = 0.93e6 * (1.0f64 + 2e4).log2();
        assert_relative_eq!(rep.sum_rate_bps, expected, max_relative = 1e-9);
        assert!((rep.sum_rate_bps - 13.29e6).abs() < 0.01e6);
        assert!(rep.all_qos_satisfied());
        assert!(rep.raw_sum_rate_bps() > rep.sum_rate_bps);
    }

    #[test]
    fn zero_precoder_gives_zero_rate() {
        let h = ChannelMatrix::new(CMatrix::from_fn(2, 4, |i, j| c(1.0 + i as f64, j as f64))).unwrap();
        let rep = sum_rate(&h, &PrecodingMatrix::zeros(4, 2), &SystemConfig::default(), 0.0).unwrap();
        assert_eq!(rep.sum_rate_bps, 0.0);
        assert!(rep.qos_satisfied.iter().all(|q| !q));
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(-1.0..1.0f64, 2 * 2 * 3),
            proptest::collection::vec(-1.0..1.0f64, 2 * 3 * 2),
        )
    }

    fn build(hv: &[f64], wv: &[f64]) -> (ChannelMatrix, PrecodingMatrix) {
        let h = ChannelMatrix::new(CMatrix::from_fn(2, 3, |i, j| c(hv[2 * (3 * i + j)], hv[2 * (3 * i + j) + 1]))).unwrap();
        let w = PrecodingMatrix::new(CMatrix::from_fn(3, 2, |i, j| c(wv[2 * (2 * i + j)], wv[2 * (2 * i + j) + 1])));
        (h, w)
    }

    proptest! {
        #[test]
        fn common_phase_rotation_of_a_column_is_invisible((hv, wv) in arb_instance(), phi in 0.0..6.3f64, col in 0usize..2) {
            let cfg = SystemConfig { num_antennas: 3, num_rf_chains: 3, noise_power_w: 0.1, ..SystemConfig::default() };
            let (h, w) = build(&hv, &wv);
            let mut rotated = w.columns().clone();
            let rot = Complex64::from_polar(1.0, phi);
            rotated.column_mut(col).iter_mut().for_each(|z| *z *= rot);
            let a = sum_rate(&h, &w, &cfg, 0.0).unwrap();
            let b = sum_rate(&h, &PrecodingMatrix::new(rotated), &cfg, 0.0).unwrap();
            for (x, y) in a.per_user_rate_bps.iter().zip(&b.per_user_rate_bps) {
                prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
            }
        }

        #[test]
        fn channel_and_noise_scaling_preserves_sinr((hv, wv) in arb_instance(), scale in 1e-4..1e3f64) {
            let (h, w) = build(&hv, &wv);
            let hs = h.scaled(scale);
            for k in 0..2 {
                let s0 = sinr(&h, &w, k, 0.1);
                let s1 = sinr(&hs, &w, k, 0.1 * scale * scale);
                prop_assert!((s0 - s1).abs() <= 1e-9 * s0.max(1e-12));
            }
        }

        #[test]
        fn rate_strictly_decreases_with_processing_time((hv, wv) in arb_instance(), tau in 0.0..150.0f64) {
            let cfg = SystemConfig { num_antennas: 3, num_rf_chains: 3, noise_power_w: 0.1, ..SystemConfig::default() };
            let (h, w) = build(&hv, &wv);
            let a = sum_rate(&h, &w, &cfg, tau).unwrap().sum_rate_bps;
            let b = sum_rate(&h, &w, &cfg, tau + 1.0).unwrap().sum_rate_bps;
            prop_assert!(b < a);
        }
    }
}
