//! Exhaustive search against backward elimination and random candidates.
//! Raw rates ignore processing time; effective rates charge every solve.

use antsel::channel::{scenario_at, stream_rng, ScenarioConfig};
use antsel::model::SystemConfig;
use antsel::sca::SolverSettings;
use antsel::selection::{bd_eliminate_baseline, heuristic_baseline, jaspd_exhaustive};

fn main() -> antsel::Result<()> {
    let sys = SystemConfig::default();
    let settings = SolverSettings::default();
    let scfg = ScenarioConfig::default().with_seed(11);
    let mut rng = stream_rng(11, 1 << 48);
    println!("trial,method,raw_bps,effective_bps,subsets");
    for t in 0..5 {
        let h = scenario_at(&scfg, &sys, t).channel;
        let runs = [
            ("jaspd", jaspd_exhaustive(&h, &sys, &settings)),
            ("bd_elimination", bd_eliminate_baseline(&h, &sys, &settings)),
            ("heuristic_k5", heuristic_baseline(&h, &sys, 5, &mut rng, &settings)),
        ];
        for (name, r) in runs {
            match r {
                Ok(r) => println!(
                    "{t},{name},{:.4e},{:.4e},{}",
                    r.raw_rate_bps(),
                    r.effective_rate_bps(),
                    r.subsets_examined
                ),
                Err(e) => println!("{t},{name},0,0,{e}"),
            }
        }
    }
    Ok(())
}
