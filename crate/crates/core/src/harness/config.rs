//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! seed = 7
//! system.power_budget_w = 2.0
//! experiment.sweep = 1, 2, 5, 10
//! ```
//!
//! Unknown or repeated keys are errors that name the file, line and key.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::ScenarioConfig;
use crate::error::{Error, Result};
use crate::learning::{FeatureMap, LossKind, TrainConfig};
use crate::model::SystemConfig;
use crate::sca::{SolverSettings, StartPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExperimentId {
    Convergence,
    Tradeoff,
    SamplesCurve,
    VsKs,
    VsPtot,
    VsN,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 6] = [
        ExperimentId::Convergence,
        ExperimentId::Tradeoff,
        ExperimentId::SamplesCurve,
        ExperimentId::VsKs,
        ExperimentId::VsPtot,
        ExperimentId::VsN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Convergence => "convergence",
            ExperimentId::Tradeoff => "tradeoff",
            ExperimentId::SamplesCurve => "samples_curve",
            ExperimentId::VsKs => "vs_ks",
            ExperimentId::VsPtot => "vs_ptot",
            ExperimentId::VsN => "vs_n",
        }
    }

    /// Sweep used when the configuration does not give one.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            ExperimentId::Convergence => vec![],
            ExperimentId::Tradeoff | ExperimentId::VsKs => vec![1.0, 2.0, 3.0, 5.0, 7.0, 10.0],
            ExperimentId::SamplesCurve => vec![250.0, 500.0, 1000.0],
            ExperimentId::VsPtot => vec![1.0, 2.0, 3.0, 4.0, 5.0],
            ExperimentId::VsN => vec![6.0, 7.0, 8.0],
        }
    }

    /// Whether the experiment evaluates a trained model.
    pub fn needs_model(self) -> bool {
        !matches!(self, ExperimentId::Convergence | ExperimentId::SamplesCurve)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    /// Explicit sweep; `None` means [`ExperimentId::default_sweep`].
    pub sweep: Option<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Model file; `{n}` is replaced by the antenna count.
    pub model_path: Option<String>,
    /// Training data for `samples_curve`.
    pub dataset_path: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            id: ExperimentId::Tradeoff,
            sweep: None,
            trials: 100,
            seed: 0,
            output: None,
            model_path: None,
            dataset_path: None,
        }
    }
}

impl ExperimentSpec {
    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep.clone().unwrap_or_else(|| self.id.default_sweep())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidSystem("experiment.trials must be at least 1".into()));
        }
        let sweep = self.sweep_values();
        if self.id != ExperimentId::Convergence && sweep.is_empty() {
            return Err(Error::InvalidSystem(format!("{} needs a non-empty sweep", self.id)));
        }
        if let Some(bad) = sweep.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidSystem(format!("sweep value {bad} must be positive")));
        }
        if self.id != ExperimentId::VsPtot {
            if let Some(bad) = sweep.iter().find(|v| v.fract() != 0.0) {
                return Err(Error::InvalidSystem(format!("{} sweeps integers, got {bad}", self.id)));
            }
        }
        Ok(())
    }

    /// Model path for an `n`-antenna system.
    pub fn model_path_for(&self, n: usize) -> Option<PathBuf> {
        self.model_path.as_ref().map(|p| PathBuf::from(p.replace("{n}", &n.to_string())))
    }
}

/// Everything a subcommand may need, with defaults for every key.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub system: SystemConfig,
    pub scenario: ScenarioConfig,
    pub solver: SolverSettings,
    pub train: TrainConfig,
    pub feature_map: FeatureMap,
    /// Candidate subsets for L-ASPD and the random heuristic.
    pub k_s: usize,
    pub n_samples: usize,
    pub experiment: ExperimentSpec,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            system: SystemConfig::default(),
            scenario: ScenarioConfig::default(),
            solver: SolverSettings::default(),
            train: TrainConfig::default(),
            feature_map: FeatureMap::default(),
            k_s: 5,
            n_samples: 1000,
            experiment: ExperimentSpec::default(),
        }
    }
}

fn parse_list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("cannot parse `{s}`")))
        .collect()
}

fn parse<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse `{value}`"))
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    /// Parses `text`; `origin` names the source in error messages.
    pub fn parse_str(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Config::default();
        let mut seen = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |key: &str, message: String| Error::ConfigInvalid {
                path: origin.to_string(),
                line: idx + 1,
                key: key.to_string(),
                message,
            };
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| err(line, "expected `key = value`".into()))?;
            if !seen.insert(key.to_string()) {
                return Err(err(key, "key given twice".into()));
            }
            cfg.set(key, value).map_err(|m| err(key, m))?;
        }
        cfg.experiment.seed = cfg.seed;
        cfg.scenario.seed = cfg.seed;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    /// Applies one assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let s = &mut self.system;
        let e = &mut self.experiment;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = parse(value)?,
            "system.bandwidth_hz" => s.bandwidth_hz = parse(value)?,
            "system.block_len_cu" => s.block_len_cu = parse(value)?,
            "system.cu_duration_s" => s.cu_duration_s = parse(value)?,
            "system.noise_power_w" => s.noise_power_w = parse(value)?,
            "system.power_budget_w" => s.power_budget_w = parse(value)?,
            "system.qos_bps" => s.qos_bps = parse(value)?,
            "system.num_antennas" => s.num_antennas = parse(value)?,
            "system.num_rf_chains" => s.num_rf_chains = parse(value)?,
            "system.solve_cost_cu" => s.solve_cost_cu = parse(value)?,
            "scenario.pathloss_db_min" => self.scenario.pathloss_db.0 = parse(value)?,
            "scenario.pathloss_db_max" => self.scenario.pathloss_db.1 = parse(value)?,
            "scenario.users_min" => self.scenario.users.0 = parse(value)?,
            "scenario.users_max" => self.scenario.users.1 = parse(value)?,
            "solver.outer_tol" => self.solver.outer_tol = parse(value)?,
            "solver.max_outer_iters" => self.solver.max_outer_iters = parse(value)?,
            "solver.kkt_tol" => self.solver.kkt_tol = parse(value)?,
            "solver.start" => {
                self.solver.start = match value {
                    "water_filled" => StartPoint::WaterFilled,
                    "qos_exact" => StartPoint::QosExact,
                    _ => return Err(format!("unknown start `{value}` (water_filled or qos_exact)")),
                }
            }
            "selection.k_s" => self.k_s = parse(value)?,
            "features.map" => self.feature_map = value.parse().map_err(|e: Error| e.to_string())?,
            "dataset.n_samples" => self.n_samples = parse(value)?,
            "train.lambda" => t.lambda_reg = parse(value)?,
            "train.hidden" => t.hidden = parse_list(value)?,
            "train.max_epochs" => t.max_epochs = parse(value)?,
            "train.validation_fraction" => t.validation_fraction = parse(value)?,
            "train.patience" => t.patience = parse(value)?,
            "train.sigma0" => t.sigma0 = parse(value)?,
            "train.lambda0" => t.lambda0 = parse(value)?,
            "train.loss" => {
                t.loss = match value {
                    "two_sided" => LossKind::TwoSided,
                    "one_sided" => LossKind::OneSided,
                    _ => return Err(format!("unknown loss `{value}` (two_sided or one_sided)")),
                }
            }
            "experiment.id" => e.id = value.parse()?,
            "experiment.sweep" => e.sweep = Some(parse_list(value)?),
            "experiment.trials" => e.trials = parse(value)?,
            "experiment.output" => e.output = Some(PathBuf::from(value)),
            "experiment.model_path" => e.model_path = Some(value.to_string()),
            "experiment.dataset_path" => e.dataset_path = Some(PathBuf::from(value)),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.scenario.seed = seed;
        self.train.seed = seed;
        self.experiment.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.scenario.validate(&self.system)?;
        self.solver.validate()?;
        self.train.validate()?;
        self.experiment.validate()?;
        if self.k_s == 0 {
            return Err(Error::InvalidSystem("selection.k_s must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn parses_every_section() {
        let text = "\
# sample
seed = 9
system.power_budget_w = 2.5   # watts
system.num_antennas = 6
scenario.users_min = 2
scenario.users_max = 3
solver.max_outer_iters = 40
selection.k_s = 7
features.map = user_gram
train.hidden = 32, 16
train.loss = one_sided
experiment.id = vs_n
experiment.sweep = 6 7 8
experiment.trials = 12
experiment.model_path = models/n{n}.txt
";
        let cfg = Config::parse_str(text, "t.cfg").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scenario.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.system.power_budget_w, 2.5);
        assert_eq!(cfg.system.num_antennas, 6);
        assert_eq!(cfg.scenario.users, (2, 3));
        assert_eq!(cfg.solver.max_outer_iters, 40);
        assert_eq!(cfg.k_s, 7);
        assert_eq!(cfg.feature_map, FeatureMap::UserGram);
        assert_eq!(cfg.train.hidden, vec![32, 16]);
        assert_eq!(cfg.train.loss, LossKind::OneSided);
        assert_eq!(cfg.experiment.id, ExperimentId::VsN);
        assert_eq!(cfg.experiment.sweep_values(), vec![6.0, 7.0, 8.0]);
        assert_eq!(cfg.experiment.trials, 12);
        assert_eq!(cfg.experiment.model_path_for(7), Some(PathBuf::from("models/n7.txt")));
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_names_line_and_key() {
        let err = Config::parse_str("seed = 1\n\nsystem.power_budget = 3\n", "bad.cfg").unwrap_err();
        match err {
            Error::ConfigInvalid { path, line, key, .. } => {
                assert_eq!(path, "bad.cfg");
                assert_eq!(line, 3);
                assert_eq!(key, "system.power_budget");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_lines_are_rejected() {
        for text in [
            "seed 4",
            "seed = four",
            "seed = 1\nseed = 2",
            "experiment.id = nope",
            "train.loss = hinge",
        ] {
            assert!(matches!(Config::parse_str(text, "x"), Err(Error::ConfigInvalid { .. })), "{text}");
        }
    }

    #[test]
    fn semantic_checks_happen_in_validate() {
        let cfg = Config::parse_str("experiment.trials = 0", "x").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = Config::parse_str("experiment.id = vs_ks\nexperiment.sweep = 2.5", "x").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = Config::parse_str("system.num_rf_chains = 9", "x").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn experiment_names_round_trip() {
        for id in ExperimentId::ALL {
            assert_eq!(id.name().parse::<ExperimentId>().unwrap(), id);
        }
    }
}
