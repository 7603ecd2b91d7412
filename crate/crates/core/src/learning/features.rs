//! Channel features for the subset classifier.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CMatrix, ChannelMatrix, SystemConfig};

/// Which Gram matrix of the zero-padded channel `H_bar` (`M x N`) is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureMap {
    /// `|H_bar H_bar^H|`, `M^2` entries. Blind to antenna order.
    UserGram,
    /// `|H_bar^H H_bar|`, `N^2` entries.
    #[default]
    AntennaGram,
}

impl FeatureMap {
    pub fn len(self, num_antennas: usize, num_rf_chains: usize) -> usize {
        match self {
            FeatureMap::UserGram => num_rf_chains * num_rf_chains,
            FeatureMap::AntennaGram => num_antennas * num_antennas,
        }
    }
}

impl fmt::Display for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMap::UserGram => "user_gram",
            FeatureMap::AntennaGram => "antenna_gram",
        })
    }
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user_gram" => Ok(FeatureMap::UserGram),
            "antenna_gram" => Ok(FeatureMap::AntennaGram),
            other => Err(Error::InvalidSystem(format!("unknown feature map `{other}`"))),
        }
    }
}

/// Normalized classifier input; the largest entry is 1 unless all are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `(P/sigma^2) |Gram|`, vectorized column by column, divided by its maximum.
pub fn build_features(h: &ChannelMatrix, cfg: &SystemConfig, map: FeatureMap) -> Result<FeatureVector> {
    let (k, n, m) = (h.num_users(), h.num_antennas(), cfg.num_rf_chains);
    if k > m || n != cfg.num_antennas {
        return Err(Error::Dimension(format!("{k}x{n} channel for N={} M={m}", cfg.num_antennas)));
    }
    let mut padded = CMatrix::zeros(m, n);
    padded.rows_mut(0, k).copy_from(h.entries());
    let gram = match map {
        FeatureMap::UserGram => &padded * padded.adjoint(),
        FeatureMap::AntennaGram => padded.adjoint() * &padded,
    };
    let snr = cfg.power_budget_w / cfg.noise_power_w;
    let mut x: Vec<f64> = gram.iter().map(|z| snr * z.norm()).collect();
    let top = x.iter().copied().fold(0.0, f64::max);
    if top > 0.0 {
        x.iter_mut().for_each(|v| *v /= top);
    }
    Ok(FeatureVector(x))
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64;
    use proptest::prelude::*;

    use super::*;
    use crate::channel::{scenario_at, ScenarioConfig};

    fn cfg(n: usize, m: usize) -> SystemConfig {
        SystemConfig {
            num_antennas: n,
            num_rf_chains: m,
            ..SystemConfig::default()
        }
    }

    #[test]
    fn lengths_follow_the_map() {
        let c = cfg(8, 4);
        let h = scenario_at(&ScenarioConfig::default(), &c, 0).channel;
        assert_eq!(build_features(&h, &c, FeatureMap::UserGram).unwrap().len(), 16);
        assert_eq!(build_features(&h, &c, FeatureMap::AntennaGram).unwrap().len(), 64);
    }

    #[test]
    fn identity_channel_gives_identity_pattern() {
        let c = cfg(3, 3);
        let h = ChannelMatrix::new(CMatrix::identity(3, 3)).unwrap();
        for map in [FeatureMap::UserGram, FeatureMap::AntennaGram] {
            let x = build_features(&h, &c, map).unwrap();
            assert_eq!(x.0, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn padded_rows_contribute_nothing() {
        let c = cfg(3, 2);
        let h = ChannelMatrix::from_rows(&[vec![Complex64::new(1.0, 0.5), Complex64::new(-0.2, 0.0), Complex64::new(0.0, 2.0)]]).unwrap();
        let x = build_features(&h, &c, FeatureMap::UserGram).unwrap();
        assert_eq!(x.0[0], 1.0);
        assert_eq!(&x.0[1..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_channel_is_not_normalized() {
        let c = cfg(2, 2);
        let h = ChannelMatrix::new(CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(build_features(&h, &c, FeatureMap::AntennaGram).unwrap().0, vec![0.0; 4]);
    }

    #[test]
    fn feature_map_names_round_trip() {
        for map in [FeatureMap::UserGram, FeatureMap::AntennaGram] {
            assert_eq!(map.to_string().parse::<FeatureMap>().unwrap(), map);
        }
        assert!("gram".parse::<FeatureMap>().is_err());
    }

    proptest! {
        #[test]
        fn invariant_to_channel_scale_and_snr_level(seed in 0u64..1000, scale in 0.01f64..100.0, ratio in 0.1f64..10.0) {
            let c = cfg(6, 4);
            let h = scenario_at(&ScenarioConfig::default().with_seed(seed), &c, 0).channel;
            for map in [FeatureMap::UserGram, FeatureMap::AntennaGram] {
                let base = build_features(&h, &c, map).unwrap();
                let scaled = build_features(&h.scaled(scale), &c, map).unwrap();
                let other = SystemConfig { power_budget_w: c.power_budget_w * ratio, noise_power_w: c.noise_power_w * ratio, ..c.clone() };
                let same_ratio = build_features(&h, &other, map).unwrap();
                let top = base.0.iter().copied().fold(0.0, f64::max);
                prop_assert!((top - 1.0).abs() < 1e-15);
                for ((a, b), d) in base.0.iter().zip(&scaled.0).zip(&same_ratio.0) {
                    prop_assert!((a - b).abs() < 1e-12);
                    prop_assert!((a - d).abs() < 1e-12);
                }
            }
        }
    }
}
