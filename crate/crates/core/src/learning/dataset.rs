//! Labelled training data: features of random scenarios and the subset the
//! exhaustive search selects for each.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::features::{build_features, FeatureMap};
use crate::channel::{sample_scenario, stream_rng, ScenarioConfig};
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::sca::SolverSettings;
use crate::selection::{jaspd_best_index, SubsetEnumeration};

pub const GENERATOR_VERSION: &str = "antsel-dataset 1";

/// Resample attempts per sample before giving up.
const MAX_ATTEMPTS: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub seed: u64,
    pub num_antennas: usize,
    pub num_rf_chains: usize,
    pub users: (usize, usize),
    pub power_budget_w: f64,
    pub noise_power_w: f64,
    pub num_samples: usize,
    pub feature_map: FeatureMap,
    /// Scenarios redrawn because every subset was infeasible.
    pub resampled: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// One feature vector per row.
    pub features: Vec<Vec<f64>>,
    /// Lexicographic subset index of the exhaustive-search winner.
    pub labels: Vec<usize>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        SubsetEnumeration::new(self.meta.num_antennas, self.meta.num_rf_chains).map_or(0, |e| e.count())
    }

    /// Features as a `dim x samples` matrix.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        let dim = self.features.first().map_or(0, Vec::len);
        DMatrix::from_fn(dim, self.len(), |r, c| self.features[c][r])
    }

    pub fn to_csv(&self) -> String {
        let dim = self.features.first().map_or(0, Vec::len);
        let mut s = String::new();
        for i in 0..dim {
            write!(s, "f{i},").unwrap();
        }
        s.push_str("label\n");
        for (row, label) in self.features.iter().zip(&self.labels) {
            for v in row {
                write!(s, "{v},").unwrap();
            }
            writeln!(s, "{label}").unwrap();
        }
        s
    }

    pub fn meta_text(&self) -> String {
        let m = &self.meta;
        format!(
            "generator = {GENERATOR_VERSION}\nseed = {}\nnum_antennas = {}\nnum_rf_chains = {}\nusers_min = {}\nusers_max = {}\n\
             power_budget_w = {}\nnoise_power_w = {}\nnum_samples = {}\nfeature_map = {}\nresampled = {}\n",
            m.seed,
            m.num_antennas,
            m.num_rf_chains,
            m.users.0,
            m.users.1,
            m.power_budget_w,
            m.noise_power_w,
            m.num_samples,
            m.feature_map,
            m.resampled
        )
    }

    /// Writes the CSV and its `.meta` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        std::fs::write(meta_path(path), self.meta_text())?;
        Ok(())
    }

    /// Reads a CSV written by [`Dataset::save`] together with its sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let meta = parse_meta(&std::fs::read_to_string(meta_path(path))?, &meta_path(path))?;
        let text = std::fs::read_to_string(path)?;
        let bad = |message: String| Error::Format {
            what: "dataset",
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let cols = header.split(',').count();
        if cols < 2 || !header.ends_with(",label") {
            return Err(bad("header must be f0,...,label".into()));
        }
        let classes = SubsetEnumeration::new(meta.num_antennas, meta.num_rf_chains)?.count();
        let (mut features, mut labels) = (Vec::new(), Vec::new());
        for (no, line) in lines.enumerate() {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != cols {
                return Err(bad(format!("line {}: {} columns, header has {cols}", no + 2, parts.len())));
            }
            let row: Vec<f64> = parts[..cols - 1]
                .iter()
                .map(|t| t.parse().map_err(|_| bad(format!("line {}: bad number `{t}`", no + 2))))
                .collect::<Result<_>>()?;
            let label: usize = parts[cols - 1].parse().map_err(|_| bad(format!("line {}: bad label", no + 2)))?;
            if label >= classes {
                return Err(bad(format!("line {}: label {label} >= {classes}", no + 2)));
            }
            features.push(row);
            labels.push(label);
        }
        Ok(Self { features, labels, meta })
    }
}

/// `data.csv -> data.meta`
pub fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta")
}

fn parse_meta(text: &str, path: &Path) -> Result<DatasetMeta> {
    let bad = |message: String| Error::Format {
        what: "dataset metadata",
        path: path.to_path_buf(),
        message,
    };
    let get = |key: &str| -> Result<&str> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim())
            .ok_or_else(|| bad(format!("missing `{key}`")))
    };
    fn num<T: std::str::FromStr>(v: &str, key: &str, bad: &dyn Fn(String) -> Error) -> Result<T> {
        v.parse().map_err(|_| bad(format!("bad value for `{key}`")))
    }
    let n = |key: &str| -> Result<usize> { num(get(key)?, key, &bad) };
    let f = |key: &str| -> Result<f64> { num(get(key)?, key, &bad) };
    Ok(DatasetMeta {
        seed: num(get("seed")?, "seed", &bad)?,
        num_antennas: n("num_antennas")?,
        num_rf_chains: n("num_rf_chains")?,
        users: (n("users_min")?, n("users_max")?),
        power_budget_w: f("power_budget_w")?,
        noise_power_w: f("noise_power_w")?,
        num_samples: n("num_samples")?,
        feature_map: get("feature_map")?.parse()?,
        resampled: n("resampled")?,
    })
}

/// Draws `num_samples` scenarios and labels each with the exhaustive-search
/// winner. Sample `t` uses stream `t` of `scfg.seed`; a scenario with no
/// feasible subset is replaced by a draw from stream `t + (a << 40)` for
/// attempt `a`, so the result does not depend on scheduling.
pub fn generate_dataset(
    scfg: &ScenarioConfig,
    cfg: &SystemConfig,
    num_samples: usize,
    map: FeatureMap,
    settings: &SolverSettings,
) -> Result<Dataset> {
    cfg.validate()?;
    scfg.validate(cfg)?;
    if num_samples == 0 {
        return Err(Error::InvalidSystem("a dataset needs at least one sample".into()));
    }
    let rows: Vec<(Vec<f64>, usize, u64)> = (0..num_samples as u64)
        .into_par_iter()
        .map(|t| {
            for attempt in 0..MAX_ATTEMPTS {
                let scenario = sample_scenario(scfg, cfg, &mut stream_rng(scfg.seed, t + (attempt << 40)));
                match jaspd_best_index(&scenario.channel, cfg, settings) {
                    Ok(label) => return Ok((build_features(&scenario.channel, cfg, map)?.0, label, attempt)),
                    Err(Error::AllSubsetsInfeasible) => continue,
                    Err(e) => return Err(e),
                }
            }
            Err(Error::AllSubsetsInfeasible)
        })
        .collect::<Result<_>>()?;
    let resampled = rows.iter().map(|r| r.2 as usize).sum();
    let (features, labels) = rows.into_iter().map(|(f, l, _)| (f, l)).unzip();
    Ok(Dataset {
        features,
        labels,
        meta: DatasetMeta {
            seed: scfg.seed,
            num_antennas: cfg.num_antennas,
            num_rf_chains: cfg.num_rf_chains,
            users: scfg.users,
            power_budget_w: cfg.power_budget_w,
            noise_power_w: cfg.noise_power_w,
            num_samples,
            feature_map: map,
            resampled,
        },
    })
}
