//! Monte Carlo studies over seeded scenarios, emitted as one CSV per run.
//!
//! Every trial `t` of an experiment sees the scenario drawn from stream `t`
//! of the configured seed, so methods and sweep points are compared on the
//! same channel realizations. Rows are sorted before writing, which makes
//! the output independent of scheduling.

use std::fmt;
use std::io::{self, Write};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{Config, ExperimentId};
use crate::channel::{sample_scenario, scenario_at, stream_rng, ScenarioConfig};
use crate::error::{Error, Result};
use crate::learning::{l_aspd, scg_train, Dataset, MlpModel};
use crate::model::{effective_bandwidth, restrict_channel, AntennaSubset, ChannelMatrix, SystemConfig};
use crate::sca::{sca_solve, SolverSettings};
use crate::selection::{bd_eliminate_baseline, heuristic_baseline, jaspd_exhaustive, SelectionResult, SubsetEnumeration};

pub const CSV_HEADER: &str = "sweep_value,method,trial,raw_rate_bps,effective_rate_bps,subsets_examined,wall_ms";

/// Offset of the random-heuristic streams, far from the scenario streams.
const HEURISTIC_STREAM: u64 = 1 << 48;
/// Redraws allowed for a convergence trial whose instance is infeasible.
const MAX_REDRAWS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Sca,
    Jaspd,
    Laspd,
    Heuristic,
    BdElimination,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Sca => "sca",
            Method::Jaspd => "jaspd",
            Method::Laspd => "laspd",
            Method::Heuristic => "heuristic",
            Method::BdElimination => "bd_elimination",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One method on one trial at one sweep point. For `convergence` the sweep
/// value is the outer iteration index.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub sweep_value: f64,
    pub method: Method,
    pub trial: usize,
    pub raw_rate_bps: f64,
    pub effective_rate_bps: f64,
    pub subsets_examined: usize,
    pub wall_ms: f64,
}

impl RunRecord {
    fn from_selection(sweep_value: f64, method: Method, trial: usize, outcome: Outcome, wall_ms: f64) -> Self {
        let (raw, eff, examined) = match outcome {
            Outcome::Served(r) => (r.raw_rate_bps(), r.effective_rate_bps(), r.subsets_examined),
            Outcome::Outage(examined) => (0.0, 0.0, examined),
        };
        RunRecord {
            sweep_value,
            method,
            trial,
            raw_rate_bps: raw,
            effective_rate_bps: eff,
            subsets_examined: examined,
            wall_ms,
        }
    }
}

#[derive(Clone)]
enum Outcome {
    Served(SelectionResult),
    /// No examined subset could meet the QoS targets; rates are zero.
    Outage(usize),
}

fn outcome(result: Result<SelectionResult>, examined: usize) -> Result<Outcome> {
    match result {
        Ok(r) => Ok(Outcome::Served(r)),
        Err(Error::AllSubsetsInfeasible | Error::Infeasible { .. } | Error::RankDeficient { .. }) => Ok(Outcome::Outage(examined)),
        Err(e) => Err(e),
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let value = f();
    (value, start.elapsed().as_secs_f64() * 1e3)
}

/// Orders rows by sweep value, method and trial.
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.method.cmp(&b.method))
            .then(a.trial.cmp(&b.trial))
    });
}

/// Writes the records as CSV. Wall times are written as 0 unless
/// `include_wall_time` is set, so that files from repeated runs are
/// byte-identical.
pub fn write_csv<W: Write>(records: &[RunRecord], include_wall_time: bool, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        let wall = if include_wall_time { r.wall_ms } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.sweep_value, r.method, r.trial, r.raw_rate_bps, r.effective_rate_bps, r.subsets_examined, wall
        )?;
    }
    Ok(())
}

/// Mean raw and effective rate of `method` at `sweep_value`.
pub fn method_means(records: &[RunRecord], method: Method, sweep_value: f64) -> Option<(f64, f64)> {
    let rows: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.method == method && r.sweep_value == sweep_value)
        .collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let raw = rows.iter().map(|r| r.raw_rate_bps).sum::<f64>() / n;
    let eff = rows.iter().map(|r| r.effective_rate_bps).sum::<f64>() / n;
    Some((raw, eff))
}

fn load_model(config: &Config, sys: &SystemConfig) -> Result<MlpModel> {
    let path = config.experiment.model_path_for(sys.num_antennas).ok_or(Error::MissingModel)?;
    let model = MlpModel::load(&path)?;
    check_model(&model, config, sys)?;
    Ok(model)
}

/// Rejects a model whose input or output width does not fit `sys`.
pub fn check_model(model: &MlpModel, config: &Config, sys: &SystemConfig) -> Result<()> {
    let inputs = config.feature_map.len(sys.num_antennas, sys.num_rf_chains);
    let classes = SubsetEnumeration::new(sys.num_antennas, sys.num_rf_chains)?.count();
    if model.input_dim() != inputs || model.output_dim() != classes {
        return Err(Error::Dimension(format!(
            "model maps {} -> {} but N={} M={} with {} features needs {inputs} -> {classes}",
            model.input_dim(),
            model.output_dim(),
            sys.num_antennas,
            sys.num_rf_chains,
            config.feature_map
        )));
    }
    Ok(())
}

fn as_count(v: f64) -> usize {
    v as usize
}

fn check_ks(values: &[f64], sys: &SystemConfig) -> Result<()> {
    let count = SubsetEnumeration::new(sys.num_antennas, sys.num_rf_chains)?.count();
    match values.iter().find(|&&k| as_count(k) > count) {
        Some(k) => Err(Error::InvalidSystem(format!("K_S={k} exceeds the {count} available subsets"))),
        None => Ok(()),
    }
}

fn heuristic_rng(seed: u64, trial: usize, k_s: usize) -> rand_chacha::ChaCha12Rng {
    stream_rng(seed, HEURISTIC_STREAM + ((trial as u64) << 16) + k_s as u64)
}

struct Ctx<'a> {
    config: &'a Config,
    settings: &'a SolverSettings,
    seed: u64,
}

impl Ctx<'_> {
    fn jaspd(&self, h: &ChannelMatrix, sys: &SystemConfig) -> Result<(Outcome, f64)> {
        let count = SubsetEnumeration::new(sys.num_antennas, sys.num_rf_chains)?.count();
        let (r, ms) = timed(|| jaspd_exhaustive(h, sys, self.settings));
        Ok((outcome(r, count)?, ms))
    }

    fn laspd(&self, model: &MlpModel, h: &ChannelMatrix, sys: &SystemConfig, k_s: usize) -> Result<(Outcome, f64)> {
        let (r, ms) = timed(|| l_aspd(model, h, sys, k_s, self.config.feature_map, self.settings));
        Ok((outcome(r, k_s)?, ms))
    }

    fn heuristic(&self, h: &ChannelMatrix, sys: &SystemConfig, trial: usize, k_s: usize) -> Result<(Outcome, f64)> {
        let mut rng = heuristic_rng(self.seed, trial, k_s);
        let (r, ms) = timed(|| heuristic_baseline(h, sys, k_s, &mut rng, self.settings));
        Ok((outcome(r, k_s)?, ms))
    }

    fn bd(&self, h: &ChannelMatrix, sys: &SystemConfig) -> Result<(Outcome, f64)> {
        let (r, ms) = timed(|| bd_eliminate_baseline(h, sys, self.settings));
        Ok((outcome(r, 1)?, ms))
    }
}

fn push(rows: &mut Vec<RunRecord>, sweep: f64, method: Method, trial: usize, (o, ms): (Outcome, f64)) {
    rows.push(RunRecord::from_selection(sweep, method, trial, o, ms));
}

fn trials_par<F>(trials: usize, f: F) -> Result<Vec<RunRecord>>
where
    F: Fn(usize) -> Result<Vec<RunRecord>> + Sync + Send,
{
    let per_trial: Vec<Vec<RunRecord>> = (0..trials).into_par_iter().map(f).collect::<Result<_>>()?;
    let mut rows: Vec<RunRecord> = per_trial.into_iter().flatten().collect();
    sort_records(&mut rows);
    Ok(rows)
}

fn scenario_cfg(config: &Config) -> ScenarioConfig {
    config.scenario.with_seed(config.experiment.seed)
}

/// Runs the configured experiment and returns its rows in output order.
pub fn run_experiment(config: &Config) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let ctx = Ctx {
        config,
        settings: &config.solver,
        seed: config.experiment.seed,
    };
    let spec = &config.experiment;
    let sweep = spec.sweep_values();
    let sys = &config.system;
    let scfg = scenario_cfg(config);
    match spec.id {
        ExperimentId::Convergence => convergence(config),
        ExperimentId::Tradeoff | ExperimentId::VsKs => {
            let model = load_model(config, sys)?;
            check_ks(&sweep, sys)?;
            let with_bd = spec.id == ExperimentId::VsKs;
            trials_par(spec.trials, |trial| {
                let h = scenario_at(&scfg, sys, trial as u64).channel;
                let mut rows = Vec::new();
                let (j, j_ms) = ctx.jaspd(&h, sys)?;
                let bd = if with_bd { Some(ctx.bd(&h, sys)?) } else { None };
                for &k in &sweep {
                    let k_s = as_count(k);
                    rows.push(RunRecord::from_selection(k, Method::Jaspd, trial, j.clone(), j_ms));
                    if let Some((b, b_ms)) = &bd {
                        rows.push(RunRecord::from_selection(k, Method::BdElimination, trial, b.clone(), *b_ms));
                    }
                    push(&mut rows, k, Method::Laspd, trial, ctx.laspd(&model, &h, sys, k_s)?);
                    push(&mut rows, k, Method::Heuristic, trial, ctx.heuristic(&h, sys, trial, k_s)?);
                }
                Ok(rows)
            })
        }
        ExperimentId::SamplesCurve => {
            check_ks(&[config.k_s as f64], sys)?;
            let models = samples_curve_models(config, &sweep)?;
            trials_par(spec.trials, |trial| {
                let h = scenario_at(&scfg, sys, trial as u64).channel;
                let mut rows = Vec::new();
                let (j, j_ms) = ctx.jaspd(&h, sys)?;
                for (&s, model) in sweep.iter().zip(&models) {
                    rows.push(RunRecord::from_selection(s, Method::Jaspd, trial, j.clone(), j_ms));
                    push(&mut rows, s, Method::Laspd, trial, ctx.laspd(model, &h, sys, config.k_s)?);
                }
                Ok(rows)
            })
        }
        ExperimentId::VsPtot => {
            let model = load_model(config, sys)?;
            check_ks(&[config.k_s as f64], sys)?;
            trials_par(spec.trials, |trial| {
                let h = scenario_at(&scfg, sys, trial as u64).channel;
                let mut rows = Vec::new();
                for &p in &sweep {
                    let sys_p = sys.with_power(p);
                    push(&mut rows, p, Method::Jaspd, trial, ctx.jaspd(&h, &sys_p)?);
                    push(&mut rows, p, Method::Laspd, trial, ctx.laspd(&model, &h, &sys_p, config.k_s)?);
                    push(
                        &mut rows,
                        p,
                        Method::Heuristic,
                        trial,
                        ctx.heuristic(&h, &sys_p, trial, config.k_s)?,
                    );
                    push(&mut rows, p, Method::BdElimination, trial, ctx.bd(&h, &sys_p)?);
                }
                Ok(rows)
            })
        }
        ExperimentId::VsN => {
            let mut per_n = Vec::with_capacity(sweep.len());
            for &n in &sweep {
                let sys_n = sys.with_antennas(as_count(n));
                sys_n.validate()?;
                let model = load_model(config, &sys_n)?;
                check_ks(&[config.k_s as f64], &sys_n)?;
                per_n.push((n, sys_n, model));
            }
            trials_par(spec.trials, |trial| {
                let mut rows = Vec::new();
                for (n, sys_n, model) in &per_n {
                    let h = scenario_at(&scfg, sys_n, trial as u64).channel;
                    push(&mut rows, *n, Method::Jaspd, trial, ctx.jaspd(&h, sys_n)?);
                    push(&mut rows, *n, Method::Laspd, trial, ctx.laspd(model, &h, sys_n, config.k_s)?);
                    push(
                        &mut rows,
                        *n,
                        Method::Heuristic,
                        trial,
                        ctx.heuristic(&h, sys_n, trial, config.k_s)?,
                    );
                    push(&mut rows, *n, Method::BdElimination, trial, ctx.bd(&h, sys_n)?);
                }
                Ok(rows)
            })
        }
    }
}

/// Trains one model per training-set size on prefixes of the dataset.
fn samples_curve_models(config: &Config, sizes: &[f64]) -> Result<Vec<MlpModel>> {
    let path = config
        .experiment
        .dataset_path
        .as_ref()
        .ok_or_else(|| Error::InvalidSystem("samples_curve needs experiment.dataset_path".into()))?;
    let data = Dataset::load(path)?;
    let sys = &config.system;
    let classes = SubsetEnumeration::new(sys.num_antennas, sys.num_rf_chains)?.count();
    let inputs = config.feature_map.len(sys.num_antennas, sys.num_rf_chains);
    if data.features.first().map(Vec::len) != Some(inputs) {
        return Err(Error::Dimension(format!(
            "dataset features do not have the {inputs} entries this system needs"
        )));
    }
    sizes
        .iter()
        .map(|&s| {
            let s = as_count(s);
            if s < 2 || s > data.len() {
                return Err(Error::InvalidSystem(format!("training size {s} outside [2, {}]", data.len())));
            }
            let prefix = Dataset {
                features: data.features[..s].to_vec(),
                labels: data.labels[..s].to_vec(),
                meta: data.meta.clone(),
            };
            let (model, _) = scg_train(&prefix.feature_matrix(), &prefix.labels, classes, &config.train)?;
            Ok(model)
        })
        .collect()
}

/// Objective traces of the SCA precoder on the first `M` antennas. Trials
/// whose instance is infeasible are redrawn from a separate stream family.
fn convergence(config: &Config) -> Result<Vec<RunRecord>> {
    let sys = &config.system;
    let scfg = scenario_cfg(config);
    let subset = AntennaSubset::first(sys.num_rf_chains);
    let tau = sys.solve_cost_cu;
    trials_par(config.experiment.trials, |trial| {
        for attempt in 0..MAX_REDRAWS {
            let mut rng = stream_rng(scfg.seed, trial as u64 + (attempt << 40));
            let h = sample_scenario(&scfg, sys, &mut rng).channel;
            let h_a = restrict_channel(&h, &subset);
            let (solved, ms) = timed(|| sca_solve(&h_a, sys, tau, &config.solver));
            let sol = match solved {
                Ok(sol) => sol,
                Err(Error::Infeasible { .. } | Error::RankDeficient { .. }) => continue,
                Err(e) => return Err(e),
            };
            let bw = effective_bandwidth(sys, tau, h_a.num_users())?;
            let raw_per_eff = sys.bandwidth_hz / bw;
            let per_iter = ms / sol.objective_trace.len() as f64;
            return Ok(sol
                .objective_trace
                .iter()
                .enumerate()
                .map(|(it, &obj)| RunRecord {
                    sweep_value: it as f64,
                    method: Method::Sca,
                    trial,
                    raw_rate_bps: obj * raw_per_eff,
                    effective_rate_bps: obj,
                    subsets_examined: 1,
                    wall_ms: per_iter * it as f64,
                })
                .collect());
        }
        Err(Error::AllSubsetsInfeasible)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sca::StartPoint;

    fn small(id: ExperimentId) -> Config {
        let mut cfg = Config::default().with_seed(3);
        cfg.system.num_antennas = 5;
        cfg.experiment.id = id;
        cfg.experiment.trials = 4;
        cfg
    }

    fn fake_model(cfg: &Config) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for n in [5usize, 6] {
            let sys = cfg.system.with_antennas(n);
            let classes = SubsetEnumeration::new(n, sys.num_rf_chains).unwrap().count();
            let dims = [cfg.feature_map.len(n, sys.num_rf_chains), 4, classes];
            let model = MlpModel::glorot(&dims, &mut stream_rng(1, n as u64)).unwrap();
            model.save(&dir.path().join(format!("m{n}.txt"))).unwrap();
        }
        dir
    }

    fn csv(rows: &[RunRecord]) -> String {
        let mut buf = Vec::new();
        write_csv(rows, false, &mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn convergence_traces_are_monotone() {
        let mut cfg = small(ExperimentId::Convergence);
        cfg.system.num_antennas = 4;
        cfg.system.power_budget_w = 5.0;
        for start in [StartPoint::QosExact, StartPoint::WaterFilled] {
            cfg.solver.start = start;
            let rows = run_experiment(&cfg).unwrap();
            for t in 0..4 {
                let trace: Vec<f64> = rows.iter().filter(|r| r.trial == t).map(|r| r.effective_rate_bps).collect();
                assert!(!trace.is_empty());
                assert!(start == StartPoint::WaterFilled || trace.len() >= 2);
                assert!(trace.windows(2).all(|w| w[1] >= w[0]));
            }
            assert!(rows.iter().all(|r| r.effective_rate_bps <= r.raw_rate_bps));
        }
    }

    #[test]
    fn selection_experiments_need_a_model() {
        for id in [ExperimentId::Tradeoff, ExperimentId::VsKs, ExperimentId::VsPtot, ExperimentId::VsN] {
            assert!(matches!(run_experiment(&small(id)), Err(Error::MissingModel)), "{id}");
        }
    }

    #[test]
    fn vs_n_uses_one_model_per_antenna_count() {
        let mut cfg = small(ExperimentId::VsN);
        let dir = fake_model(&cfg);
        cfg.experiment.model_path = Some(dir.path().join("m{n}.txt").display().to_string());
        cfg.experiment.sweep = Some(vec![5.0, 6.0]);
        cfg.experiment.trials = 2;
        cfg.k_s = 3;
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 4);
        for r in &rows {
            assert!(r.effective_rate_bps <= r.raw_rate_bps);
            assert!(r.raw_rate_bps.is_finite());
        }
        let jaspd: Vec<&RunRecord> = rows.iter().filter(|r| r.method == Method::Jaspd).collect();
        assert!(jaspd.iter().any(|r| r.sweep_value == 6.0 && r.subsets_examined == 15));
        let (j, _) = method_means(&rows, Method::Jaspd, 5.0).unwrap();
        let (l, _) = method_means(&rows, Method::Laspd, 5.0).unwrap();
        assert!(l <= j * (1.0 + 1e-9));
    }

    #[test]
    fn tradeoff_rows_are_sorted_and_repeatable() {
        let mut cfg = small(ExperimentId::Tradeoff);
        let dir = fake_model(&cfg);
        cfg.experiment.model_path = Some(dir.path().join("m5.txt").display().to_string());
        cfg.experiment.sweep = Some(vec![5.0, 1.0]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(csv(&a), csv(&b));
        let mut sorted = a.clone();
        sort_records(&mut sorted);
        assert_eq!(a, sorted);
        assert_eq!(a[0].sweep_value, 1.0);
        // All five subsets examined by L-ASPD equals exhaustive search.
        let full: Vec<&RunRecord> = a.iter().filter(|r| r.sweep_value == 5.0).collect();
        for t in 0..4 {
            let j = full.iter().find(|r| r.trial == t && r.method == Method::Jaspd).unwrap();
            let l = full.iter().find(|r| r.trial == t && r.method == Method::Laspd).unwrap();
            assert_eq!(j.raw_rate_bps, l.raw_rate_bps);
        }
    }

    #[test]
    fn oversized_ks_is_rejected() {
        let mut cfg = small(ExperimentId::VsKs);
        let dir = fake_model(&cfg);
        cfg.experiment.model_path = Some(dir.path().join("m5.txt").display().to_string());
        cfg.experiment.sweep = Some(vec![6.0]);
        assert!(matches!(run_experiment(&cfg), Err(Error::InvalidSystem(_))));
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let mut cfg = small(ExperimentId::VsPtot);
        let dir = fake_model(&cfg);
        cfg.experiment.model_path = Some(dir.path().join("m6.txt").display().to_string());
        assert!(matches!(run_experiment(&cfg), Err(Error::Dimension(_))));
    }

    #[test]
    fn csv_header_and_wall_time_switch() {
        let row = RunRecord {
            sweep_value: 2.0,
            method: Method::Heuristic,
            trial: 1,
            raw_rate_bps: 3.5,
            effective_rate_bps: 3.0,
            subsets_examined: 2,
            wall_ms: 12.5,
        };
        assert_eq!(csv(std::slice::from_ref(&row)), format!("{CSV_HEADER}\n2,heuristic,1,3.5,3,2,0\n"));
        let mut buf = Vec::new();
        write_csv(&[row], true, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with(",12.5\n"));
    }
}
