//! Argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{Config, ExperimentId};
use super::experiment::{check_model, run_experiment, write_csv};
use super::selftest::run_selftest;
use crate::channel::scenario_at;
use crate::error::Result;
use crate::learning::{build_features, generate_dataset, l_aspd, predict_topk, scg_train, Dataset, MlpModel};
use crate::model::ChannelMatrix;
use crate::selection::{jaspd_exhaustive, write_log_csv, SelectionResult, SubsetEnumeration};

#[derive(Debug, Parser)]
#[command(name = "antsel", version, about = "Joint antenna selection and precoding simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ScenarioPick {
    /// Scenario index within the seeded batch.
    #[arg(long, default_value_t = 0)]
    index: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labeled dataset (CSV plus `.meta` sidecar).
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the subset classifier on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss CSV.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Rank antenna subsets for one scenario.
    Predict {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pick: ScenarioPick,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        k_s: Option<usize>,
    },
    /// Exhaustive selection and precoding for one scenario.
    Jaspd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pick: ScenarioPick,
        /// Per-subset objective log CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learning-assisted selection and precoding for one scenario.
    Laspd {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pick: ScenarioPick,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        k_s: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured experiment and write its CSV.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Overrides `experiment.id`.
        #[arg(long)]
        id: Option<ExperimentId>,
        #[arg(long)]
        trials: Option<usize>,
        /// Overrides `experiment.model_path`; `{n}` becomes the antenna count.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write measured wall times instead of zeros.
        #[arg(long)]
        wall_time: bool,
    },
    /// Run the invariant suites.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn cli_dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let cfg = match common.seed {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    Ok(BufWriter::new(File::create(path)?))
}

fn scenario(cfg: &Config, index: u64) -> ChannelMatrix {
    scenario_at(&cfg.scenario.with_seed(cfg.seed), &cfg.system, index).channel
}

fn load_model(path: &Path, cfg: &Config) -> Result<MlpModel> {
    let model = MlpModel::load(path)?;
    check_model(&model, cfg, &cfg.system)?;
    Ok(model)
}

fn report(label: &str, cfg: &Config, index: u64, users: usize, r: &SelectionResult) {
    println!(
        "{label}: seed {} scenario {index}, K={users}, N={}, M={}",
        cfg.seed, cfg.system.num_antennas, cfg.system.num_rf_chains
    );
    println!("best subset: {} (index {})", r.best_subset, r.best_index);
    println!("raw sum rate: {:.6e} bit/s", r.raw_rate_bps());
    println!("effective sum rate: {:.6e} bit/s", r.effective_rate_bps());
    println!("subsets examined: {}", r.subsets_examined);
}

fn write_log(path: Option<&PathBuf>, r: &SelectionResult) -> Result<()> {
    if let Some(path) = path {
        let mut w = create(path)?;
        write_log_csv(&r.log, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::GenData { common, n_samples, out } => {
            let cfg = load_config(&common)?;
            let n = n_samples.unwrap_or(cfg.n_samples);
            let scfg = cfg.scenario.with_seed(cfg.seed);
            let data = generate_dataset(&scfg, &cfg.system, n, cfg.feature_map, &cfg.solver)?;
            ensure_parent(&out)?;
            data.save(&out)?;
            println!(
                "wrote {} samples ({} classes, {} redrawn) to {}",
                data.len(),
                SubsetEnumeration::new(cfg.system.num_antennas, cfg.system.num_rf_chains)?.count(),
                data.meta.resampled,
                out.display()
            );
        }
        Command::Train { common, data, out, log } => {
            let cfg = load_config(&common)?;
            let data = Dataset::load(&data)?;
            let classes = SubsetEnumeration::new(data.meta.num_antennas, data.meta.num_rf_chains)?.count();
            let (model, training) = scg_train(&data.feature_matrix(), &data.labels, classes, &cfg.train)?;
            ensure_parent(&out)?;
            model.save(&out)?;
            if let Some(path) = log {
                let mut w = create(&path)?;
                writeln!(w, "epoch,train_loss,val_loss,accepted")?;
                for e in &training.epochs {
                    writeln!(w, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.accepted as u8)?;
                }
                w.flush()?;
            }
            println!(
                "trained {:?} for {} epochs; best validation loss {:.6} at epoch {}; model written to {}",
                model.dims(),
                training.epochs.len(),
                training.best_val_loss,
                training.best_epoch,
                out.display()
            );
        }
        Command::Predict { common, pick, model, k_s } => {
            let cfg = load_config(&common)?;
            let model = load_model(&model, &cfg)?;
            let h = scenario(&cfg, pick.index);
            let en = SubsetEnumeration::new(cfg.system.num_antennas, cfg.system.num_rf_chains)?;
            let x = build_features(&h, &cfg.system, cfg.feature_map)?;
            let k = k_s.unwrap_or(cfg.k_s);
            println!("rank,subset_index,antennas,probability");
            for (rank, r) in predict_topk(&model, x.values(), k, &en)?.iter().enumerate() {
                println!("{},{},\"{}\",{:.6}", rank + 1, r.index, r.subset, r.probability);
            }
        }
        Command::Jaspd { common, pick, out } => {
            let cfg = load_config(&common)?;
            let h = scenario(&cfg, pick.index);
            let r = jaspd_exhaustive(&h, &cfg.system, &cfg.solver)?;
            report("jaspd", &cfg, pick.index, h.num_users(), &r);
            write_log(out.as_ref(), &r)?;
        }
        Command::Laspd {
            common,
            pick,
            model,
            k_s,
            out,
        } => {
            let cfg = load_config(&common)?;
            let model = load_model(&model, &cfg)?;
            let h = scenario(&cfg, pick.index);
            let k = k_s.unwrap_or(cfg.k_s);
            let r = l_aspd(&model, &h, &cfg.system, k, cfg.feature_map, &cfg.solver)?;
            report("laspd", &cfg, pick.index, h.num_users(), &r);
            write_log(out.as_ref(), &r)?;
        }
        Command::Experiment {
            common,
            id,
            trials,
            model,
            out,
            wall_time,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(id) = id {
                cfg.experiment.id = id;
            }
            if let Some(t) = trials {
                cfg.experiment.trials = t;
            }
            if model.is_some() {
                cfg.experiment.model_path = model;
            }
            let out = out
                .or_else(|| cfg.experiment.output.clone())
                .unwrap_or_else(|| PathBuf::from(format!("{}.csv", cfg.experiment.id)));
            let rows = run_experiment(&cfg)?;
            let mut w = create(&out)?;
            write_csv(&rows, wall_time, &mut w)?;
            w.flush()?;
            println!("{}: {} rows written to {}", cfg.experiment.id, rows.len(), out.display());
        }
        Command::Selftest { common } => {
            let cfg = load_config(&common)?;
            let results = run_selftest(cfg.seed);
            for r in &results {
                match &r.outcome {
                    Ok(detail) => println!("PASS {}: {detail}", r.name),
                    Err(msg) => println!("FAIL {}: {msg}", r.name),
                }
            }
            if !results.iter().all(|r| r.passed()) {
                return Ok(1);
            }
        }
    }
    Ok(0)
}
