//! Exhaustive joint antenna selection and precoding, with the per-subset log.

use antsel::channel::{scenario_at, ScenarioConfig};
use antsel::model::SystemConfig;
use antsel::sca::SolverSettings;
use antsel::selection::{jaspd_exhaustive, write_log_csv, SubsetEnumeration};

fn main() -> antsel::Result<()> {
    let sys = SystemConfig::default();
    let h = scenario_at(&ScenarioConfig::default().with_seed(3), &sys, 0).channel;
    let result = jaspd_exhaustive(&h, &sys, &SolverSettings::default())?;
    let en = SubsetEnumeration::new(sys.num_antennas, sys.num_rf_chains)?;

    println!("best {} of {} subsets: {}", result.best_index, en.count(), result.best_subset);
    println!(
        "effective {:.4e} bit/s, raw {:.4e} bit/s",
        result.effective_rate_bps(),
        result.raw_rate_bps()
    );
    let mut top = result.log.clone();
    top.sort_by(|a, b| b.objective_bps.total_cmp(&a.objective_bps));
    top.truncate(5);
    write_log_csv(&top, std::io::stdout())?;
    Ok(())
}
