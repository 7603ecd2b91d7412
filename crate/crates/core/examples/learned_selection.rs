//! Train the subset classifier and use it to shortlist candidates.

use antsel::channel::{scenario_at, ScenarioConfig};
use antsel::learning::{build_features, generate_dataset, l_aspd, predict_topk, scg_train, FeatureMap, TrainConfig};
use antsel::model::SystemConfig;
use antsel::sca::SolverSettings;
use antsel::selection::{jaspd_exhaustive, SubsetEnumeration};

fn main() -> antsel::Result<()> {
    let sys = SystemConfig::default();
    let settings = SolverSettings::default();
    let map = FeatureMap::AntennaGram;
    let data = generate_dataset(&ScenarioConfig::default().with_seed(1), &sys, 600, map, &settings)?;
    let en = SubsetEnumeration::new(sys.num_antennas, sys.num_rf_chains)?;
    let train = TrainConfig {
        hidden: vec![64, 64],
        ..TrainConfig::default()
    };
    let (model, log) = scg_train(&data.feature_matrix(), &data.labels, en.count(), &train)?;
    println!(
        "{} epochs, best validation loss {:.4} at epoch {}",
        log.epochs.len(),
        log.best_val_loss,
        log.best_epoch
    );

    let held_out = ScenarioConfig::default().with_seed(99);
    for t in 0..3 {
        let h = scenario_at(&held_out, &sys, t).channel;
        let x = build_features(&h, &sys, map)?;
        let top: Vec<String> = predict_topk(&model, x.values(), 3, &en)?
            .iter()
            .map(|r| format!("{} p={:.3}", r.subset, r.probability))
            .collect();
        let learned = l_aspd(&model, &h, &sys, 5, map, &settings)?;
        let exact = jaspd_exhaustive(&h, &sys, &settings)?;
        println!("scenario {t}: shortlist [{}]", top.join(", "));
        println!(
            "  l-aspd {} raw {:.4e} eff {:.4e} | jaspd {} raw {:.4e} eff {:.4e}",
            learned.best_subset,
            learned.raw_rate_bps(),
            learned.effective_rate_bps(),
            exact.best_subset,
            exact.raw_rate_bps(),
            exact.effective_rate_bps()
        );
    }
    Ok(())
}
