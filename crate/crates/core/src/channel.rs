//! Seeded Rayleigh-fading scenario generator.
//!
//! Every scenario draws from its own ChaCha stream selected by
//! `(seed, index)`, so batches can be generated in any order or in parallel
//! and still come out bit-identical.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{CMatrix, ChannelMatrix, SystemConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Closed pathloss interval in dB, `(low, high)`.
    pub pathloss_db: (f64, f64),
    /// Inclusive user-count range.
    pub users: (usize, usize),
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            pathloss_db: (-74.6, -59.4),
            users: (1, 4),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        let (lo, hi) = self.pathloss_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidSystem(format!("empty pathloss interval [{lo}, {hi}]")));
        }
        let (kmin, kmax) = self.users;
        if kmin < 1 || kmin > kmax || kmax > cfg.num_rf_chains {
            return Err(Error::InvalidSystem(format!(
                "user range [{kmin}, {kmax}] must satisfy 1 <= Kmin <= Kmax <= M={}",
                cfg.num_rf_chains
            )));
        }
        Ok(())
    }

    pub fn with_users(&self, kmin: usize, kmax: usize) -> Self {
        Self {
            users: (kmin, kmax),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub channel: ChannelMatrix,
    pub pathloss_db: Vec<f64>,
}

impl Scenario {
    pub fn num_users(&self) -> usize {
        self.channel.num_users()
    }
}

/// Independent generator for item `index` of the batch rooted at `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_pathloss<R: Rng + ?Sized>(scfg: &ScenarioConfig, rng: &mut R) -> f64 {
    let (lo, hi) = scfg.pathloss_db;
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo..=hi)
}

/// Circularly-symmetric complex Gaussian with unit total variance.
pub fn sample_fading<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn sample_scenario<R: Rng + ?Sized>(scfg: &ScenarioConfig, cfg: &SystemConfig, rng: &mut R) -> Scenario {
    let (kmin, kmax) = scfg.users;
    let k = rng.gen_range(kmin..=kmax);
    let pathloss_db: Vec<f64> = (0..k).map(|_| sample_pathloss(scfg, rng)).collect();
    let n = cfg.num_antennas;
    let mut entries = CMatrix::zeros(k, n);
    for (row, &pl) in pathloss_db.iter().enumerate() {
        let amp = db_to_linear(pl).sqrt();
        for col in 0..n {
            entries[(row, col)] = sample_fading(rng) * amp;
        }
    }
    Scenario {
        channel: ChannelMatrix::new(entries).expect("sampled channel is finite and non-empty"),
        pathloss_db,
    }
}

/// Scenario `index` of the batch described by `scfg.seed`.
pub fn scenario_at(scfg: &ScenarioConfig, cfg: &SystemConfig, index: u64) -> Scenario {
    sample_scenario(scfg, cfg, &mut stream_rng(scfg.seed, index))
}
