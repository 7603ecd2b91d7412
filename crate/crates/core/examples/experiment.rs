//! Configure and run the convergence experiment in-process.

use antsel::harness::{run_experiment, write_csv, Config};

fn main() -> antsel::Result<()> {
    let cfg = Config::parse_str(
        "seed = 4\n\
         system.num_antennas = 4\n\
         system.power_budget_w = 5\n\
         scenario.users_min = 4\n\
         solver.start = qos_exact\n\
         experiment.id = convergence\n\
         experiment.trials = 3\n",
        "inline",
    )?;
    let rows = run_experiment(&cfg)?;
    write_csv(&rows, false, std::io::stdout())?;
    Ok(())
}
