use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::channel::{scenario_at, ScenarioConfig};
use crate::model::{effective_bandwidth, restrict_channel, AntennaSubset};

const TAU_PRO: f64 = 0.2;

fn square_cfg(m: usize, power: f64) -> SystemConfig {
    SystemConfig {
        num_antennas: m,
        num_rf_chains: m,
        power_budget_w: power,
        ..SystemConfig::default()
    }
}

fn channels(k: usize, cfg: &SystemConfig, seed: u64, count: u64) -> impl Iterator<Item = ChannelMatrix> + '_ {
    let scfg = ScenarioConfig::default().with_users(k, k).with_seed(seed);
    (0..count).map(move |i| scenario_at(&scfg, cfg, i).channel)
}

#[test]
fn single_user_converges_to_mrt() {
    let cfg = square_cfg(4, 2.0);
    let mut checked = 0;
    for h in channels(1, &cfg, 11, 25) {
        let Ok(sol) = sca_solve(&h, &cfg, TAU_PRO, &SolverSettings::default()) else {
            continue;
        };
        let bw = effective_bandwidth(&cfg, TAU_PRO, 1).unwrap();
        let gain: f64 = h.entries().iter().map(|z| z.norm_sqr()).sum();
        let mrt = bw * (1.0 + cfg.power_budget_w * gain / cfg.noise_power_w).log2();
        assert!(
            (sol.rate.sum_rate_bps - mrt).abs() <= 1e-3 * mrt,
            "{} vs {mrt}",
            sol.rate.sum_rate_bps
        );
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn first_subproblem_already_improves_single_user() {
    let cfg = square_cfg(4, 1.0);
    let h = channels(1, &cfg, 5, 1).next().unwrap();
    let bw = effective_bandwidth(&cfg, TAU_PRO, 1).unwrap();
    let init = zf_initialize(&h, &cfg, bw).unwrap();
    let sol = solve_subproblem(&h, &init, &cfg, bw, &SolverSettings::default()).unwrap();
    assert!(sol.iterate.sinr_targets[0] >= init.sinr_targets[0]);
    assert!(sol.kkt.max() <= 1e-6);
    let gain: f64 = h.entries().iter().map(|z| z.norm_sqr()).sum();
    assert!(sol.iterate.sinr_targets[0] <= cfg.power_budget_w * gain / cfg.noise_power_w * (1.0 + 1e-9));
}

#[test]
fn water_filled_start_dominates_zf_power_control() {
    let cfg = square_cfg(4, 5.0);
    let qos_exact = SolverSettings {
        start: StartPoint::QosExact,
        ..SolverSettings::default()
    };
    let mut checked = 0;
    for h in channels(3, &cfg, 21, 15) {
        let Ok(sol) = sca_solve(&h, &cfg, TAU_PRO, &SolverSettings::default()) else {
            continue;
        };
        let bw = effective_bandwidth(&cfg, TAU_PRO, 3).unwrap();
        let zf = zf_power_control(&h, &cfg, cfg.qos_sinr(bw)).unwrap();
        let zf_rate = sum_rate(&h, &zf, &cfg, TAU_PRO).unwrap().sum_rate_bps;
        assert!(sol.objective_trace[0] >= zf_rate * (1.0 - 1e-3));
        assert!(sol.rate.sum_rate_bps >= zf_rate * (1.0 - 1e-6));
        let slow = sca_solve(&h, &cfg, TAU_PRO, &qos_exact).unwrap();
        assert!(slow.objective_trace[0] <= sol.objective_trace[0]);
        assert!(slow.iterations >= sol.iterations);
        checked += 1;
    }
    assert!(checked >= 10);
}

#[test]
fn objective_is_monotone_and_subproblems_meet_kkt() {
    let cfg = square_cfg(4, 5.0);
    for h in channels(4, &cfg, 2, 20) {
        let Ok(sol) = sca_solve(&h, &cfg, TAU_PRO, &SolverSettings::default()) else {
            continue;
        };
        for w in sol.objective_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!(sol.max_kkt_residual <= 1e-6);
        assert!(sol.converged);
        assert!(sol.rate.total_power_w <= cfg.power_budget_w * (1.0 + 1e-9));
        assert!(sol.rate.all_qos_satisfied());
    }
}

#[test]
fn sinr_bounds_are_tight_at_convergence() {
    let cfg = square_cfg(4, 1.0);
    for h in channels(3, &cfg, 9, 15) {
        let Ok(sol) = sca_solve(&h, &cfg, TAU_PRO, &SolverSettings::default()) else {
            continue;
        };
        let last = *sol.objective_trace.last().unwrap();
        let achieved = sol.rate.sum_rate_bps;
        assert!(last <= achieved * (1.0 + 1e-9), "bound objective {last} above achieved {achieved}");
        assert!(achieved - last <= 1e-3 * achieved, "bound objective {last} vs achieved {achieved}");
        for (u, s) in sol.iterate.sinr_targets.iter().zip(&sol.rate.per_user_sinr) {
            assert!(u >= s);
        }
    }
}

#[test]
fn weak_user_sits_on_its_qos_floor_under_a_tight_budget() {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let strong = [c(1e-3, 0.0), c(2e-4, 3e-4)];
    let weak = [c(1e-5, -4e-5), c(6e-5, 2e-5)];
    let h = ChannelMatrix::from_rows(&[strong.to_vec(), weak.to_vec()]).unwrap();
    let base = square_cfg(2, 1.0);
    let bw = effective_bandwidth(&base, TAU_PRO, 2).unwrap();
    let eta = base.qos_sinr(bw);
    let need = zf_qos_power(&h, base.noise_power_w, eta).unwrap();
    let cfg = base.with_power(need * 1.5);
    let settings = SolverSettings::default();
    let sol = sca_solve(&h, &cfg, TAU_PRO, &settings).unwrap();
    let u_weak = sol.iterate.sinr_targets[1];
    assert!((u_weak - eta).abs() <= 1e-6 * eta, "{u_weak} vs {eta}");
    let last = solve_subproblem(&h, &sol.iterate, &cfg, bw, &settings).unwrap();
    // Constraint order: power, QoS floors, linearized SINRs.
    assert!(last.duals[2] > 1e-6, "QoS multiplier {}", last.duals[2]);
    assert!(last.duals[1] < 1e-6);
}

#[test]
fn rank_deficient_and_infeasible_inputs_are_reported() {
    let c = Complex64::new(1e-4, 0.0);
    let h = ChannelMatrix::from_rows(&[vec![c, c], vec![c * 2.0, c * 2.0]]).unwrap();
    let cfg = square_cfg(2, 1.0);
    assert!(matches!(
        sca_solve(&h, &cfg, TAU_PRO, &SolverSettings::default()),
        Err(Error::RankDeficient { .. })
    ));

    let tiny = ChannelMatrix::from_rows(&[vec![Complex64::new(1e-9, 0.0), Complex64::new(0.0, 1e-9)]]).unwrap();
    assert!(matches!(
        sca_solve(&tiny, &cfg, TAU_PRO, &SolverSettings::default()),
        Err(Error::Infeasible { .. })
    ));
}

#[test]
fn solver_settings_are_validated() {
    assert!(SolverSettings::default().validate().is_ok());
    let bad = SolverSettings {
        kkt_tol: 0.0,
        ..Default::default()
    };
    assert!(bad.validate().is_err());
    let bad = SolverSettings {
        interior: PdSettings {
            mu: 1.0,
            ..Default::default()
        },
        ..Default::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn restricted_subset_solve_matches_direct_solve() {
    let cfg = SystemConfig {
        num_antennas: 6,
        ..SystemConfig::default()
    };
    let scfg = ScenarioConfig::default().with_users(2, 2).with_seed(4);
    let h = scenario_at(&scfg, &cfg, 0).channel;
    let subset = AntennaSubset::new(vec![1, 2, 4, 5], 6).unwrap();
    let h_a = restrict_channel(&h, &subset);
    let a = sca_solve(&h_a, &cfg, TAU_PRO, &SolverSettings::default()).unwrap();
    let b = sca_solve(&h_a, &cfg, TAU_PRO, &SolverSettings::default()).unwrap();
    assert_eq!(a.objective_trace, b.objective_trace);
    assert_eq!(a.precoders, b.precoders);
}

fn psd_instance() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, f64)> {
    (2usize..=6).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n * n),
            prop::collection::vec(-3.0f64..3.0, n),
            0.1f64..10.0,
        )
            .prop_map(move |(b, x, y)| {
                let b = DMatrix::from_vec(n, n, b);
                (&b * b.transpose(), x, y)
            })
    })
}

proptest! {
    #[test]
    fn quadratic_over_linear_is_convex((a, x, y) in psd_instance()) {
        prop_assert!(convexity_certificate(&a, &x, y) >= -1e-8);
    }

    #[test]
    fn rates_ignore_precoder_phase(seed in 0u64..50, phase in 0.0f64..std::f64::consts::TAU) {
        let cfg = square_cfg(4, 1.0);
        let h = channels(2, &cfg, seed, 1).next().unwrap();
        if let Ok(sol) = sca_solve(&h, &cfg, TAU_PRO, &SolverSettings::default()) {
            let mut cols = sol.precoders.columns().clone();
            let rot = Complex64::from_polar(1.0, phase);
            cols.column_mut(0).iter_mut().for_each(|z| *z *= rot);
            let rotated = sum_rate(&h, &PrecodingMatrix::new(cols), &cfg, TAU_PRO).unwrap();
            prop_assert!((rotated.sum_rate_bps - sol.rate.sum_rate_bps).abs() <= 1e-9 * sol.rate.sum_rate_bps);
        }
    }
}

#[test]
fn previously_stalling_instances_solve() {
    use crate::selection::SubsetEnumeration;
    // (antennas, scenario index, subset index) that once exhausted both solvers.
    for (n, index, subset) in [(8usize, 4111u64, 37usize), (6, 2775, 12)] {
        let cfg = SystemConfig::default().with_antennas(n);
        let h = scenario_at(&ScenarioConfig::default().with_seed(1), &cfg, index).channel;
        let en = SubsetEnumeration::new(n, cfg.num_rf_chains).unwrap();
        let h_a = restrict_channel(&h, &en.subset(subset));
        let tau = cfg.solve_cost_cu * en.count() as f64;
        let sol = sca_solve(&h_a, &cfg, tau, &SolverSettings::default()).unwrap();
        assert!(sol.max_kkt_residual <= 1e-6);
        assert!(sol.rate.all_qos_satisfied());
    }
}
