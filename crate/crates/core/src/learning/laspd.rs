//! Learning-assisted selection: solve precoding only on the subsets the
//! classifier ranks highest.

use super::features::{build_features, FeatureMap};
use super::mlp::MlpModel;
use crate::error::{Error, Result};
use crate::model::{AntennaSubset, ChannelMatrix, SystemConfig};
use crate::sca::SolverSettings;
use crate::selection::{evaluate_candidates, SelectionResult, SubsetEnumeration};

/// One ranked candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSubset {
    pub index: usize,
    pub subset: AntennaSubset,
    pub probability: f64,
}

/// The `k_s` most probable subsets, most probable first; equal
/// probabilities are ordered by subset index.
pub fn predict_topk(model: &MlpModel, features: &[f64], k_s: usize, en: &SubsetEnumeration) -> Result<Vec<RankedSubset>> {
    if model.output_dim() != en.count() {
        return Err(Error::Dimension(format!(
            "model predicts {} classes, C(N,M) = {}",
            model.output_dim(),
            en.count()
        )));
    }
    if k_s == 0 || k_s > en.count() {
        return Err(Error::InvalidSystem(format!("K_S={k_s} outside [1, {}]", en.count())));
    }
    let p = model.forward(features)?;
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    Ok(order[..k_s]
        .iter()
        .map(|&i| RankedSubset {
            index: i,
            subset: en.subset(i),
            probability: p[i],
        })
        .collect())
}

/// Ranks subsets with `model`, solves precoding on the top `k_s` and keeps
/// the best, charging `solve_cost_cu * k_s` of processing time.
pub fn l_aspd(
    model: &MlpModel,
    h: &ChannelMatrix,
    cfg: &SystemConfig,
    k_s: usize,
    map: FeatureMap,
    settings: &SolverSettings,
) -> Result<SelectionResult> {
    let en = SubsetEnumeration::new(h.num_antennas(), cfg.num_rf_chains)?;
    let x = build_features(h, cfg, map)?;
    let candidates: Vec<usize> = predict_topk(model, x.values(), k_s, &en)?.into_iter().map(|r| r.index).collect();
    evaluate_candidates(h, cfg, &candidates, cfg.solve_cost_cu * k_s as f64, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{scenario_at, ScenarioConfig};
    use crate::selection::jaspd_exhaustive;

    fn cfg(n: usize) -> SystemConfig {
        SystemConfig {
            num_antennas: n,
            ..SystemConfig::default()
        }
    }

    /// A model that always puts its mass on `class`.
    fn oracle(input: usize, classes: usize, class: usize) -> MlpModel {
        let mut m = MlpModel::zeros(&[input, 2, classes]).unwrap();
        let mut theta = m.params();
        let n = theta.len();
        theta[n - classes + class] = 30.0;
        m.set_params(&theta);
        m
    }

    #[test]
    fn zero_model_ranks_by_index() {
        let en = SubsetEnumeration::new(6, 4).unwrap();
        let m = MlpModel::zeros(&[36, 3, 15]).unwrap();
        let top = predict_topk(&m, &[0.5; 36], 4, &en).unwrap();
        assert_eq!(top.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let all = predict_topk(&m, &[0.5; 36], 15, &en).unwrap();
        assert_eq!(all.iter().map(|r| r.index).collect::<Vec<_>>(), (0..15).collect::<Vec<_>>());
        assert!(predict_topk(&m, &[0.5; 36], 16, &en).is_err());
        assert!(predict_topk(&m, &[0.5; 36], 0, &en).is_err());
    }

    #[test]
    fn top_one_is_the_argmax() {
        let en = SubsetEnumeration::new(6, 4).unwrap();
        let m = oracle(36, 15, 9);
        let top = predict_topk(&m, &[0.1; 36], 1, &en).unwrap();
        assert_eq!(top[0].index, 9);
        assert_eq!(top[0].subset, en.subset(9));
    }

    #[test]
    fn full_candidate_set_reproduces_the_exhaustive_search() {
        let c = cfg(6);
        let scfg = ScenarioConfig::default().with_seed(6);
        let m = MlpModel::glorot(&[36, 5, 15], &mut crate::channel::stream_rng(1, 0)).unwrap();
        for i in 0..3 {
            let h = scenario_at(&scfg, &c, i).channel;
            let full = jaspd_exhaustive(&h, &c, &SolverSettings::default()).unwrap();
            let learned = l_aspd(&m, &h, &c, 15, FeatureMap::AntennaGram, &SolverSettings::default()).unwrap();
            assert_eq!(learned.best_subset, full.best_subset);
            assert_eq!(learned.raw_rate_bps(), full.raw_rate_bps());
        }
    }

    #[test]
    fn oracle_model_with_one_candidate_matches_the_exhaustive_winner() {
        let c = cfg(6);
        let h = scenario_at(&ScenarioConfig::default().with_seed(8), &c, 0).channel;
        let full = jaspd_exhaustive(&h, &c, &SolverSettings::default()).unwrap();
        let m = oracle(36, 15, full.best_index);
        let learned = l_aspd(&m, &h, &c, 1, FeatureMap::AntennaGram, &SolverSettings::default()).unwrap();
        assert_eq!(learned.best_subset, full.best_subset);
        assert_eq!(learned.subsets_examined, 1);
        assert!(learned.effective_rate_bps() > full.effective_rate_bps());
    }

    #[test]
    fn more_candidates_never_lower_the_raw_rate() {
        let c = cfg(6);
        let h = scenario_at(&ScenarioConfig::default().with_users(2, 2).with_seed(10), &c, 1).channel;
        let m = MlpModel::glorot(&[36, 5, 15], &mut crate::channel::stream_rng(2, 0)).unwrap();
        let en = SubsetEnumeration::new(6, 4).unwrap();
        let x = build_features(&h, &c, FeatureMap::AntennaGram).unwrap();
        let mut prev = f64::NEG_INFINITY;
        let mut prev_list: Vec<usize> = Vec::new();
        for k_s in 1..=15 {
            let list: Vec<usize> = predict_topk(&m, x.values(), k_s, &en).unwrap().iter().map(|r| r.index).collect();
            assert_eq!(&list[..prev_list.len()], &prev_list[..]);
            prev_list = list;
            // Same processing charge for every K_S so that only the candidate set differs.
            let fixed = SystemConfig {
                solve_cost_cu: 0.0,
                ..c.clone()
            };
            let best = l_aspd(&m, &h, &fixed, k_s, FeatureMap::AntennaGram, &SolverSettings::default()).unwrap();
            assert!(best.raw_rate_bps() >= prev);
            prev = best.raw_rate_bps();
        }
    }

    #[test]
    fn mismatched_model_is_rejected() {
        let c = cfg(6);
        let h = scenario_at(&ScenarioConfig::default(), &c, 0).channel;
        let m = MlpModel::zeros(&[16, 3, 15]).unwrap();
        assert!(l_aspd(&m, &h, &c, 3, FeatureMap::AntennaGram, &SolverSettings::default()).is_err());
        let m = MlpModel::zeros(&[36, 3, 70]).unwrap();
        assert!(l_aspd(&m, &h, &c, 3, FeatureMap::AntennaGram, &SolverSettings::default()).is_err());
    }
}
