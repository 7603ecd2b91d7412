//! Antenna-subset enumeration, exhaustive joint selection and precoding,
//! and the two reference baselines.
//!
//! Subsets of size `M` out of `N` antennas are numbered in lexicographic
//! order, `0 -> {0, .., M-1}`. Every selection routine solves precoding
//! with [`crate::sca::sca_solve`] on each candidate and keeps the best
//! effective sum rate; near-ties (relative `1e-9`) go to the lowest index.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{restrict_channel, AntennaSubset, ChannelMatrix, PrecodingMatrix, RateReport, SystemConfig};
use crate::sca::{sca_solve, zf_qos_power, SolverSettings};

/// Relative tolerance under which two objectives count as tied.
pub const TIE_REL_TOL: f64 = 1e-9;

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Lexicographic numbering of the `M`-subsets of `N` antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubsetEnumeration {
    n: usize,
    m: usize,
    count: usize,
}

impl SubsetEnumeration {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::InvalidSystem(format!("cannot choose {m} of {n} antennas")));
        }
        let count = binomial(n, m);
        if count > usize::MAX as u64 {
            return Err(Error::InvalidSystem(format!("C({n},{m}) is too large to enumerate")));
        }
        Ok(Self {
            n,
            m,
            count: count as usize,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.n
    }

    pub fn subset_size(&self) -> usize {
        self.m
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Subset number `index`.
    ///
    /// # Panics
    /// If `index >= count()`.
    pub fn subset(&self, index: usize) -> AntennaSubset {
        assert!(index < self.count, "subset index {index} out of range {}", self.count);
        let mut rest = index as u64;
        let mut out = Vec::with_capacity(self.m);
        let mut next = 0;
        for slot in 0..self.m {
            let mut c = next;
            loop {
                let block = binomial(self.n - c - 1, self.m - slot - 1);
                if rest < block {
                    break;
                }
                rest -= block;
                c += 1;
            }
            out.push(c);
            next = c + 1;
        }
        AntennaSubset::from_sorted_unchecked(out)
    }

    /// Position of `subset` in the enumeration.
    pub fn index_of(&self, subset: &AntennaSubset) -> Result<usize> {
        let idx = subset.indices();
        if idx.len() != self.m || idx.last().is_some_and(|&a| a >= self.n) {
            return Err(Error::Dimension(format!(
                "{subset} is not a {}-subset of {} antennas",
                self.m, self.n
            )));
        }
        let mut rank = 0u64;
        let mut next = 0;
        for (slot, &a) in idx.iter().enumerate() {
            for c in next..a {
                rank += binomial(self.n - c - 1, self.m - slot - 1);
            }
            next = a + 1;
        }
        Ok(rank as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = AntennaSubset> + '_ {
        (0..self.count).map(|i| self.subset(i))
    }
}

pub fn enumerate_subsets(n: usize, m: usize) -> Result<SubsetEnumeration> {
    SubsetEnumeration::new(n, m)
}

/// Fraction of exhaustive-search solve time saved by examining `k_s` subsets.
pub fn complexity_gain(k_s: usize, n: usize, m: usize) -> f64 {
    1.0 - k_s as f64 / binomial(n, m) as f64
}

/// One examined candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetRecord {
    pub subset_index: usize,
    /// Effective sum rate, `-inf` when the subset admits no QoS-feasible precoder.
    pub objective_bps: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct SelectionResult {
    pub best_subset: AntennaSubset,
    pub best_index: usize,
    pub best_precoders: PrecodingMatrix,
    /// Rates of the winner with this method's processing time charged.
    pub best_rate: RateReport,
    pub subsets_examined: usize,
    /// Candidates in the order they were examined.
    pub log: Vec<SubsetRecord>,
}

impl SelectionResult {
    pub fn effective_rate_bps(&self) -> f64 {
        self.best_rate.sum_rate_bps
    }

    /// Sum rate before any overhead is charged.
    pub fn raw_rate_bps(&self) -> f64 {
        self.best_rate.raw_sum_rate_bps()
    }
}

/// Writes `subset_index,objective_bps,feasible_flag` rows.
pub fn write_log_csv<W: Write>(log: &[SubsetRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "subset_index,objective_bps,feasible_flag")?;
    for r in log {
        writeln!(out, "{},{},{}", r.subset_index, r.objective_bps, u8::from(r.feasible))?;
    }
    Ok(())
}

/// Lowest index whose objective is within the tie tolerance of the maximum.
fn pick_best(records: &[SubsetRecord]) -> Option<&SubsetRecord> {
    let top = records
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.objective_bps)
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return None;
    }
    let floor = top - TIE_REL_TOL * top.abs();
    records
        .iter()
        .filter(|r| r.feasible && r.objective_bps >= floor)
        .min_by_key(|r| r.subset_index)
}

fn is_infeasibility(e: &Error) -> bool {
    matches!(e, Error::Infeasible { .. } | Error::RankDeficient { .. })
}

type Solved = Option<(PrecodingMatrix, RateReport)>;

fn solve_subset(h: &ChannelMatrix, subset: &AntennaSubset, cfg: &SystemConfig, tau_pro: f64, settings: &SolverSettings) -> Result<Solved> {
    match sca_solve(&restrict_channel(h, subset), cfg, tau_pro, settings) {
        Ok(sol) => Ok(Some((sol.precoders, sol.rate))),
        Err(e) if is_infeasibility(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Solves precoding on every candidate (in parallel) and reduces with the
/// shared tie rule. `tau_pro` is charged to every candidate.
pub fn evaluate_candidates(
    h: &ChannelMatrix,
    cfg: &SystemConfig,
    candidates: &[usize],
    tau_pro: f64,
    settings: &SolverSettings,
) -> Result<SelectionResult> {
    let en = SubsetEnumeration::new(h.num_antennas(), cfg.num_rf_chains)?;
    let solved: Vec<Solved> = candidates
        .par_iter()
        .map(|&i| solve_subset(h, &en.subset(i), cfg, tau_pro, settings))
        .collect::<Result<_>>()?;
    let log: Vec<SubsetRecord> = candidates
        .iter()
        .zip(&solved)
        .map(|(&i, s)| SubsetRecord {
            subset_index: i,
            objective_bps: s.as_ref().map_or(f64::NEG_INFINITY, |(_, r)| r.sum_rate_bps),
            feasible: s.is_some(),
        })
        .collect();
    let best = *pick_best(&log).ok_or(Error::AllSubsetsInfeasible)?;
    let pos = candidates
        .iter()
        .position(|&i| i == best.subset_index)
        .expect("winner is a candidate");
    let (precoders, rate) = solved[pos].clone().expect("winner is feasible");
    Ok(SelectionResult {
        best_subset: en.subset(best.subset_index),
        best_index: best.subset_index,
        best_precoders: precoders,
        best_rate: rate,
        subsets_examined: log.len(),
        log,
    })
}

/// Exhaustive joint antenna selection and precoding over all `C(N, M)`
/// subsets, charging `solve_cost_cu * C(N, M)` of processing time.
pub fn jaspd_exhaustive(h: &ChannelMatrix, cfg: &SystemConfig, settings: &SolverSettings) -> Result<SelectionResult> {
    let en = SubsetEnumeration::new(h.num_antennas(), cfg.num_rf_chains)?;
    let all: Vec<usize> = (0..en.count()).collect();
    evaluate_candidates(h, cfg, &all, cfg.solve_cost_cu * en.count() as f64, settings)
}

/// Largest `sum_k ln(1 + a_k p_k)` over `p >= 0`, `sum p = 1` (water-filling).
fn water_filling_value(gains: &[f64]) -> f64 {
    let mut a: Vec<f64> = gains.iter().copied().filter(|g| *g > 0.0).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    // With the j strongest users active, the water level is
    // (1 + sum 1/a_i) / j; stop once the next user would get negative power.
    let mut inv_sum = 0.0;
    let mut best = 0.0;
    for (j, &g) in a.iter().enumerate() {
        let level = (1.0 + inv_sum + 1.0 / g) / (j + 1) as f64;
        if level <= 1.0 / g {
            break;
        }
        inv_sum += 1.0 / g;
        best = a[..=j].iter().map(|g| (g * level).ln()).sum();
    }
    best
}

/// Upper bound on the effective sum rate of `subset`: interference is
/// dropped and each user sees its full restricted channel gain.
fn subset_upper_bound(h: &ChannelMatrix, subset: &AntennaSubset, cfg: &SystemConfig, effective_bw: f64) -> f64 {
    let snr = cfg.power_budget_w / cfg.noise_power_w;
    let gains: Vec<f64> = (0..h.num_users())
        .map(|k| subset.indices().iter().map(|&a| h.gain(k, a).norm_sqr()).sum::<f64>() * snr)
        .collect();
    effective_bw * water_filling_value(&gains) / std::f64::consts::LN_2
}

/// The subset index [`jaspd_exhaustive`] would select, found without solving
/// subsets whose interference-free bound cannot reach the incumbent.
pub fn jaspd_best_index(h: &ChannelMatrix, cfg: &SystemConfig, settings: &SolverSettings) -> Result<usize> {
    let en = SubsetEnumeration::new(h.num_antennas(), cfg.num_rf_chains)?;
    let tau_pro = cfg.solve_cost_cu * en.count() as f64;
    let bw = crate::model::effective_bandwidth(cfg, tau_pro, h.num_users())?;
    let mut order: Vec<(f64, usize)> = (0..en.count())
        .map(|i| (subset_upper_bound(h, &en.subset(i), cfg, bw), i))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut records = Vec::new();
    let mut incumbent = f64::NEG_INFINITY;
    for (bound, i) in order {
        // Slack on both sides keeps near-ties (and bound round-off) in play.
        if bound * (1.0 + 1e-9) < incumbent * (1.0 - 2.0 * TIE_REL_TOL) {
            break;
        }
        let solved = solve_subset(h, &en.subset(i), cfg, tau_pro, settings)?;
        let objective_bps = solved.as_ref().map_or(f64::NEG_INFINITY, |(_, r)| r.sum_rate_bps);
        incumbent = incumbent.max(objective_bps);
        records.push(SubsetRecord {
            subset_index: i,
            objective_bps,
            feasible: solved.is_some(),
        });
    }
    pick_best(&records).map(|r| r.subset_index).ok_or(Error::AllSubsetsInfeasible)
}

/// Greedy backward elimination: starting from all antennas, repeatedly drop
/// the one whose removal leaves the smallest QoS-meeting zero-forcing power,
/// then design precoding on the surviving `M` antennas.
pub fn bd_eliminate_baseline(h: &ChannelMatrix, cfg: &SystemConfig, settings: &SolverSettings) -> Result<SelectionResult> {
    let en = SubsetEnumeration::new(h.num_antennas(), cfg.num_rf_chains)?;
    let tau_pro = cfg.solve_cost_cu;
    let bw = crate::model::effective_bandwidth(cfg, tau_pro, h.num_users())?;
    let eta = cfg.qos_sinr(bw);
    let mut active: Vec<usize> = (0..h.num_antennas()).collect();
    while active.len() > cfg.num_rf_chains {
        let mut best: Option<(f64, usize)> = None;
        let mut last_err = None;
        for pos in 0..active.len() {
            let mut trial = active.clone();
            trial.remove(pos);
            let subset = AntennaSubset::new(trial, h.num_antennas())?;
            match zf_qos_power(&restrict_channel(h, &subset), cfg.noise_power_w, eta) {
                Ok(p) if p <= cfg.power_budget_w => {
                    if best.map_or(true, |(b, _)| p < b) {
                        best = Some((p, pos));
                    }
                }
                Ok(p) => {
                    last_err = Some(Error::Infeasible {
                        required_w: p,
                        budget_w: cfg.power_budget_w,
                    })
                }
                Err(e) => last_err = Some(e),
            }
        }
        match best {
            Some((_, pos)) => {
                active.remove(pos);
            }
            None => return Err(last_err.unwrap_or(Error::AllSubsetsInfeasible)),
        }
    }
    let subset = AntennaSubset::new(active, h.num_antennas())?;
    let index = en.index_of(&subset)?;
    evaluate_candidates(h, cfg, &[index], tau_pro, settings).map_err(|e| match e {
        Error::AllSubsetsInfeasible => Error::Infeasible {
            required_w: f64::NAN,
            budget_w: cfg.power_budget_w,
        },
        e => e,
    })
}

/// `k_s` subsets drawn uniformly without replacement, charged
/// `solve_cost_cu * k_s`.
pub fn heuristic_baseline<R: Rng + ?Sized>(
    h: &ChannelMatrix,
    cfg: &SystemConfig,
    k_s: usize,
    rng: &mut R,
    settings: &SolverSettings,
) -> Result<SelectionResult> {
    let en = SubsetEnumeration::new(h.num_antennas(), cfg.num_rf_chains)?;
    if k_s == 0 || k_s > en.count() {
        return Err(Error::InvalidSystem(format!("K_S={k_s} outside [1, {}]", en.count())));
    }
    let picks = rand::seq::index::sample(rng, en.count(), k_s).into_vec();
    evaluate_candidates(h, cfg, &picks, cfg.solve_cost_cu * k_s as f64, settings)
}
