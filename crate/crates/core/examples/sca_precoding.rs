//! Sum-rate precoding on one antenna subset, from both zero-forcing starts.

use antsel::channel::{scenario_at, ScenarioConfig};
use antsel::model::{restrict_channel, AntennaSubset, SystemConfig};
use antsel::sca::{sca_solve, SolverSettings, StartPoint};

fn main() -> antsel::Result<()> {
    let sys = SystemConfig {
        power_budget_w: 5.0,
        ..SystemConfig::default()
    };
    let scfg = ScenarioConfig::default().with_users(4, 4).with_seed(7);
    let h = scenario_at(&scfg, &sys, 0).channel;
    let h_a = restrict_channel(&h, &AntennaSubset::new(vec![0, 2, 5, 7], sys.num_antennas)?);

    for start in [StartPoint::QosExact, StartPoint::WaterFilled] {
        let settings = SolverSettings {
            start,
            ..SolverSettings::default()
        };
        let sol = sca_solve(&h_a, &sys, sys.solve_cost_cu, &settings)?;
        println!(
            "{start:?}: {} outer iterations, max KKT residual {:.1e}",
            sol.iterations, sol.max_kkt_residual
        );
        for (i, v) in sol.objective_trace.iter().enumerate() {
            println!("  {i:>2}  {v:.6e}");
        }
        println!("  rate {:.6e} bit/s, power {:.4} W", sol.rate.sum_rate_bps, sol.rate.total_power_w);
    }
    Ok(())
}
