//! Draw a seeded scenario and evaluate the rate model on a zero-forcing precoder.

use antsel::channel::{scenario_at, ScenarioConfig};
use antsel::model::{channel_overhead, effective_bandwidth, restrict_channel, sum_rate, AntennaSubset, SystemConfig};
use antsel::sca::zf_power_control;

fn main() -> antsel::Result<()> {
    let sys = SystemConfig::default();
    let scfg = ScenarioConfig::default().with_seed(42);
    let scenario = scenario_at(&scfg, &sys, 0);
    let k = scenario.num_users();
    println!("{k} users, pathloss {:?} dB", scenario.pathloss_db);

    let tau_pro = sys.solve_cost_cu;
    println!("csi overhead {} c.u.", channel_overhead(k, sys.num_antennas, sys.num_rf_chains));
    println!("effective bandwidth {:.0} Hz", effective_bandwidth(&sys, tau_pro, k)?);

    let subset = AntennaSubset::first(sys.num_rf_chains);
    let h_a = restrict_channel(&scenario.channel, &subset);
    let bw = effective_bandwidth(&sys, tau_pro, k)?;
    let w = zf_power_control(&h_a, &sys, sys.qos_sinr(bw))?;
    let report = sum_rate(&h_a, &w, &sys, tau_pro)?;
    for (u, (r, s)) in report.per_user_rate_bps.iter().zip(&report.per_user_sinr).enumerate() {
        println!("user {u}: sinr {s:.3e}, rate {r:.4e} bit/s");
    }
    println!(
        "sum {:.4e} bit/s effective, {:.4e} raw, power {:.3} W",
        report.sum_rate_bps,
        report.raw_sum_rate_bps(),
        report.total_power_w
    );
    Ok(())
}
