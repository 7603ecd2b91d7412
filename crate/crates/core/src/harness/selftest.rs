//! Fast invariant suites behind the `selftest` subcommand.

use nalgebra::DMatrix;
use rand::Rng;

use crate::channel::{scenario_at, stream_rng, ScenarioConfig};
use crate::learning::{gradient_check, LossKind, MlpModel};
use crate::model::{effective_bandwidth, SystemConfig};
use crate::sca::{convexity_certificate, sca_solve, SolverSettings};
use crate::selection::{complexity_gain, enumerate_subsets};

/// Outcome of one suite; `Err` carries the first violation found.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub outcome: Result<String, String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.outcome.is_ok()
    }
}

type Suite = fn(u64) -> Result<String, String>;

const SUITES: [(&str, Suite); 7] = [
    ("complexity arithmetic", complexity),
    ("subset ranking round trip", ranking),
    ("quadratic-over-linear convexity", convexity),
    ("network gradient", gradient),
    ("sca monotone with kkt", sca_monotone),
    ("single-user mrt", single_user),
    ("scenario determinism", determinism),
];

/// Runs every suite with randomness rooted at `seed`.
pub fn run_selftest(seed: u64) -> Vec<SuiteResult> {
    SUITES
        .iter()
        .map(|&(name, suite)| SuiteResult {
            name,
            outcome: suite(seed),
        })
        .collect()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn complexity(_: u64) -> Result<String, String> {
    let g = complexity_gain(5, 8, 4);
    ensure(g == 13.0 / 14.0, || format!("complexity_gain(5,8,4) = {g}"))?;
    let count = enumerate_subsets(20, 8).map_err(|e| e.to_string())?.count();
    ensure(count == 125_970, || format!("C(20,8) = {count}"))?;
    Ok("13/14 and 125970".into())
}

fn ranking(_: u64) -> Result<String, String> {
    let en = enumerate_subsets(10, 4).map_err(|e| e.to_string())?;
    for i in 0..en.count() {
        let s = en.subset(i);
        let back = en.index_of(&s).map_err(|e| e.to_string())?;
        ensure(back == i, || format!("subset {i} ranks back to {back}"))?;
        ensure(s.indices().windows(2).all(|w| w[0] < w[1]), || format!("subset {i} not increasing"))?;
    }
    Ok(format!("{} subsets", en.count()))
}

fn convexity(seed: u64) -> Result<String, String> {
    let mut rng = stream_rng(seed, 1);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let n = rng.gen_range(2..=6);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let a = &b * b.transpose();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y = rng.gen_range(0.1..10.0);
        worst = worst.min(convexity_certificate(&a, &x, y));
    }
    ensure(worst >= -1e-8, || format!("Hessian eigenvalue {worst:e}"))?;
    Ok(format!("min eigenvalue {worst:.3e}"))
}

fn gradient(seed: u64) -> Result<String, String> {
    let mut rng = stream_rng(seed, 2);
    let model = MlpModel::glorot(&[16, 8, 8, 15], &mut rng).map_err(|e| e.to_string())?;
    let x = DMatrix::from_fn(16, 6, |_, _| rng.gen_range(0.0..1.0));
    let labels: Vec<usize> = (0..6).map(|_| rng.gen_range(0..15)).collect();
    let errors = gradient_check(&model, &x, &labels, 1e-3, LossKind::TwoSided, 1e-6);
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    ensure(worst < 1e-5, || format!("block relative errors {errors:?}"))?;
    Ok(format!("{} blocks, max relative error {worst:.2e}", errors.len()))
}

fn sca_monotone(seed: u64) -> Result<String, String> {
    let cfg = SystemConfig {
        num_antennas: 4,
        power_budget_w: 5.0,
        ..SystemConfig::default()
    };
    let scfg = ScenarioConfig::default().with_users(4, 4).with_seed(seed);
    let settings = SolverSettings::default();
    let mut solved = 0;
    for t in 0..15 {
        let h = scenario_at(&scfg, &cfg, t).channel;
        let Ok(sol) = sca_solve(&h, &cfg, cfg.solve_cost_cu, &settings) else {
            continue;
        };
        solved += 1;
        let trace = &sol.objective_trace;
        ensure(trace.windows(2).all(|w| w[1] >= w[0]), || {
            format!("trial {t}: trace decreases {trace:?}")
        })?;
        ensure(sol.max_kkt_residual <= settings.kkt_tol, || {
            format!("trial {t}: kkt {}", sol.max_kkt_residual)
        })?;
        ensure(sol.rate.sum_rate_bps <= sol.rate.raw_sum_rate_bps(), || {
            format!("trial {t}: effective above raw")
        })?;
    }
    ensure(solved > 0, || "no feasible instance".into())?;
    Ok(format!("{solved} instances"))
}

fn single_user(seed: u64) -> Result<String, String> {
    let cfg = SystemConfig {
        num_antennas: 4,
        ..SystemConfig::default()
    };
    let scfg = ScenarioConfig::default().with_users(1, 1).with_seed(seed);
    let settings = SolverSettings::default();
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        let h = scenario_at(&scfg, &cfg, t).channel;
        let Ok(sol) = sca_solve(&h, &cfg, cfg.solve_cost_cu, &settings) else {
            continue;
        };
        let bw = effective_bandwidth(&cfg, cfg.solve_cost_cu, 1).map_err(|e| e.to_string())?;
        let gain: f64 = h.entries().iter().map(|z| z.norm_sqr()).sum();
        let mrt = bw * (1.0 + cfg.power_budget_w * gain / cfg.noise_power_w).log2();
        worst = worst.max((sol.rate.sum_rate_bps - mrt).abs() / mrt);
    }
    ensure(worst <= 1e-3, || format!("relative gap to MRT {worst:e}"))?;
    Ok(format!("max relative gap {worst:.2e}"))
}

fn determinism(seed: u64) -> Result<String, String> {
    let cfg = SystemConfig::default();
    let scfg = ScenarioConfig::default().with_seed(seed);
    for t in 0..20 {
        ensure(scenario_at(&scfg, &cfg, t) == scenario_at(&scfg, &cfg, t), || {
            format!("scenario {t} differs")
        })?;
    }
    Ok("20 scenarios".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for r in run_selftest(0) {
            assert!(r.passed(), "{}: {:?}", r.name, r.outcome);
        }
    }
}
