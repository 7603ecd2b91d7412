//! Generate a small labeled dataset, save it and read it back.

use antsel::channel::ScenarioConfig;
use antsel::learning::{generate_dataset, Dataset, FeatureMap};
use antsel::model::SystemConfig;
use antsel::sca::SolverSettings;

fn main() -> antsel::Result<()> {
    let sys = SystemConfig::default();
    let scfg = ScenarioConfig::default().with_seed(5);
    let data = generate_dataset(&scfg, &sys, 40, FeatureMap::AntennaGram, &SolverSettings::default())?;

    let mut counts = vec![0usize; data.num_classes()];
    for &l in &data.labels {
        counts[l] += 1;
    }
    println!(
        "{} samples, {} features, {} redrawn",
        data.len(),
        data.features[0].len(),
        data.meta.resampled
    );
    println!("label histogram {counts:?}");

    let dir = std::env::temp_dir().join("antsel-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("data.csv");
    data.save(&path)?;
    assert_eq!(Dataset::load(&path)?, data);
    println!("round trip through {} ok", path.display());
    Ok(())
}
