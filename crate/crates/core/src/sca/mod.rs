//! Sum-rate precoding for a fixed antenna subset by successive convex
//! approximation.
//!
//! Starting from a QoS-exact zero-forcing point, each outer iteration
//! linearizes the convex signal term of every SINR constraint around the
//! current iterate and solves the resulting convex program with an
//! interior-point method. The objective sequence is nondecreasing because
//! the current iterate stays feasible for the next convexification.

pub mod barrier;
pub mod dc;
pub mod pdip;
mod subproblem;
pub mod zf;

use crate::error::{Error, Result};
use crate::model::{effective_bandwidth, sinr, sum_rate, ChannelMatrix, PrecodingMatrix, RateReport, SystemConfig};

use barrier::ConvexProgram;
pub use barrier::{BarrierSettings, KktResidual};
pub use dc::{convexity_certificate, dc_linearize, LinearizedSignal};
pub use pdip::PdSettings;
use subproblem::{DcSubproblem, ScaledChannel};
pub use zf::{zf_directions, zf_power_control, zf_qos_point, zf_qos_power};

/// Expansion point of the first convexification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartPoint {
    /// Zero-forcing with every user exactly on its QoS floor.
    QosExact,
    /// Zero-forcing with the remaining budget water-filled above the floors.
    #[default]
    WaterFilled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Outer loop stops when the relative objective change drops below this.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    /// Largest relative KKT residual accepted from a subproblem solve.
    pub kkt_tol: f64,
    pub start: StartPoint,
    /// Primary subproblem solver.
    pub interior: PdSettings,
    /// Fallback path-following solver.
    pub barrier: BarrierSettings,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            outer_tol: 1e-3,
            max_outer_iters: 50,
            kkt_tol: 1e-6,
            start: StartPoint::default(),
            interior: PdSettings::default(),
            barrier: BarrierSettings::default(),
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let b = &self.barrier;
        let ok = self.outer_tol > 0.0
            && self.kkt_tol > 0.0
            && self.max_outer_iters > 0
            && self.interior.tol > 0.0
            && self.interior.mu > 1.0
            && self.interior.armijo > 0.0
            && self.interior.armijo < 0.5
            && self.interior.backtrack > 0.0
            && self.interior.backtrack < 1.0
            && self.interior.centrality >= 0.0
            && self.interior.centrality < 1.0
            && self.interior.recenter_below >= 0.0
            && b.t0 > 0.0
            && b.mu > 1.0
            && b.gap_tol > 0.0
            && b.newton_tol > 0.0
            && b.armijo > 0.0
            && b.armijo < 0.5
            && b.backtrack > 0.0
            && b.backtrack < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSystem(format!("invalid solver settings {self:?}")))
        }
    }
}

/// One point of the DC reformulation: precoders plus SINR lower bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DcIterate {
    pub precoders: PrecodingMatrix,
    pub sinr_targets: Vec<f64>,
    /// `B_eff * sum log2(1 + u_k)`
    pub objective_bps: f64,
}

fn objective_bps(effective_bw: f64, u: &[f64]) -> f64 {
    effective_bw * u.iter().map(|v| v.ln_1p()).sum::<f64>() / std::f64::consts::LN_2
}

/// QoS-exact zero-forcing starting point with `u_k` set to the achieved SINRs.
pub fn zf_initialize(h_a: &ChannelMatrix, cfg: &SystemConfig, effective_bw: f64) -> Result<DcIterate> {
    let target = cfg.qos_sinr(effective_bw);
    let point = zf_qos_point(h_a, cfg, target)?;
    Ok(DcIterate {
        objective_bps: objective_bps(effective_bw, &point.achieved_sinr),
        precoders: point.precoders,
        sinr_targets: point.achieved_sinr,
    })
}

/// Relative slack kept on the budget and the QoS floors by [`zf_start`].
const START_SLACK: f64 = 1e-3;

/// Zero-forcing point with the budget water-filled above the QoS floors,
/// leaving a `START_SLACK` fraction of both unused so that the first
/// convexification has an interior around it. `None` when that slack does
/// not fit.
pub fn zf_start(h_a: &ChannelMatrix, cfg: &SystemConfig, effective_bw: f64) -> Result<Option<DcIterate>> {
    let target = cfg.qos_sinr(effective_bw) * (1.0 + START_SLACK);
    let reduced = SystemConfig {
        power_budget_w: cfg.power_budget_w * (1.0 - START_SLACK),
        ..cfg.clone()
    };
    let precoders = match zf_power_control(h_a, &reduced, target) {
        Ok(w) => w,
        Err(Error::Infeasible { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let u: Vec<f64> = (0..h_a.num_users()).map(|k| sinr(h_a, &precoders, k, cfg.noise_power_w)).collect();
    Ok(Some(DcIterate {
        objective_bps: objective_bps(effective_bw, &u),
        precoders,
        sinr_targets: u,
    }))
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub iterate: DcIterate,
    pub kkt: KktResidual,
    /// Multipliers in constraint order: power, QoS floors, linearized SINRs.
    pub duals: Vec<f64>,
    pub newton_steps: usize,
}

/// Smallest constraint slack accepted for a start without multipliers.
const COLD_START_MARGIN: f64 = 1e-6;

fn has_margin(sub: &DcSubproblem<'_>, z: &[f64], margin: f64) -> bool {
    let mut f = vec![0.0; sub.num_constraints()];
    sub.constraints(z, &mut f);
    f.iter().all(|&v| v < -margin) && sub.objective(z).is_finite()
}

/// Strictly feasible start for the subproblem built around its expansion point `z`.
fn starting_point(sub: &DcSubproblem<'_>, z: &[f64], split: usize, margin: f64, settings: &BarrierSettings) -> Option<Vec<f64>> {
    if has_margin(sub, z, margin) {
        return Some(z.to_vec());
    }
    // A QoS-exact point sits on the boundary. Spend part of the unused power
    // budget: scaling precoders by sqrt(a) and SINR bounds by sqrt(a) is
    // strictly feasible whenever interference vanishes and a > 1.
    let used: f64 = z[..split].iter().map(|v| v * v).sum();
    if used > 0.0 && used < 1.0 {
        let a = 0.5 * (1.0 + 1.0 / used);
        let s = a.sqrt();
        let inflated: Vec<f64> = z.iter().map(|v| v * s).collect();
        if has_margin(sub, &inflated, margin) {
            return Some(inflated);
        }
    }
    if margin > 0.0 && barrier::is_strictly_feasible(sub, z) {
        return Some(z.to_vec());
    }
    barrier::find_interior_point(sub, z, settings)
}

fn solve_scaled(
    ch: &ScaledChannel,
    x: &[f64],
    u: &[f64],
    eta: f64,
    duals: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<Option<(Vec<f64>, Vec<f64>, barrier::BarrierSolution)>> {
    let sub = DcSubproblem::new(ch, x, u, eta);
    let z0 = sub.to_z(x, u);
    let margin = if duals.is_some() { 0.0 } else { COLD_START_MARGIN };
    let Some(start) = starting_point(&sub, &z0, x.len(), margin, &settings.barrier) else {
        return Ok(None);
    };
    if let Some(sol) = pdip::solve(&sub, &start, duals, &settings.interior) {
        if sol.kkt.max() <= settings.kkt_tol {
            let (x_new, u_new) = sub.from_z(&sol.z);
            return Ok(Some((x_new, u_new, sol)));
        }
    }
    let sol = barrier::solve(&sub, &start, &settings.barrier)?;
    if !(sol.kkt.max() <= settings.kkt_tol) {
        return Err(Error::SolverStalled {
            iterations: sol.newton_steps,
            decrement: sol.kkt.stationarity,
            gap: sol.kkt.gap,
        });
    }
    let (x_new, u_new) = sub.from_z(&sol.z);
    Ok(Some((x_new, u_new, sol)))
}

/// Solves one convexified problem around `expansion`.
pub fn solve_subproblem(
    h_a: &ChannelMatrix,
    expansion: &DcIterate,
    cfg: &SystemConfig,
    effective_bw: f64,
    settings: &SolverSettings,
) -> Result<SubproblemSolution> {
    let ch = ScaledChannel::new(h_a, cfg);
    let eta = cfg.qos_sinr(effective_bw);
    let x = ch.embed(&expansion.precoders);
    match solve_scaled(&ch, &x, &expansion.sinr_targets, eta, None, settings)? {
        Some((x_new, u_new, sol)) => Ok(SubproblemSolution {
            iterate: DcIterate {
                precoders: ch.unembed(&x_new),
                objective_bps: objective_bps(effective_bw, &u_new),
                sinr_targets: u_new,
            },
            kkt: sol.kkt,
            duals: sol.duals,
            newton_steps: sol.newton_steps,
        }),
        None => Err(Error::SolverStalled {
            iterations: 0,
            decrement: f64::NAN,
            gap: f64::NAN,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct ScaSolution {
    pub precoders: PrecodingMatrix,
    /// Rates recomputed from `precoders`.
    pub rate: RateReport,
    /// Final point with SINR bounds raised to the achieved SINRs.
    pub iterate: DcIterate,
    /// `B_eff sum log2(1 + u)` of the starting point and every accepted iterate.
    pub objective_trace: Vec<f64>,
    /// Subproblems solved.
    pub iterations: usize,
    pub converged: bool,
    /// Subproblem solutions discarded because they did not improve.
    pub rejected_steps: usize,
    pub max_kkt_residual: f64,
    pub newton_steps: usize,
}

/// Iterative DC precoding design on a fixed subset; `tau_pro_cu` is the
/// processing time charged against the block.
pub fn sca_solve(h_a: &ChannelMatrix, cfg: &SystemConfig, tau_pro_cu: f64, settings: &SolverSettings) -> Result<ScaSolution> {
    let bw = effective_bandwidth(cfg, tau_pro_cu, h_a.num_users())?;
    let mut init = zf_initialize(h_a, cfg, bw)?;
    if settings.start == StartPoint::WaterFilled {
        if let Some(filled) = zf_start(h_a, cfg, bw)? {
            init = filled;
        }
    }
    let eta = cfg.qos_sinr(bw);
    let ch = ScaledChannel::new(h_a, cfg);
    let mut x = ch.embed(&init.precoders);
    let mut u = init.sinr_targets.clone();
    let mut current = init.objective_bps;
    let mut trace = vec![current];
    let mut iterations = 0;
    let mut rejected = 0;
    let mut converged = false;
    let mut max_kkt: f64 = 0.0;
    let mut newton_steps = 0;
    let mut duals: Option<Vec<f64>> = None;
    while iterations < settings.max_outer_iters {
        let Some((x_new, u_new, sol)) = solve_scaled(&ch, &x, &u, eta, duals.as_deref(), settings)? else {
            // Feasible set of the convexification has no interior: the
            // current point is all we can certify.
            converged = true;
            break;
        };
        iterations += 1;
        newton_steps += sol.newton_steps;
        let next = objective_bps(bw, &u_new);
        if next < current {
            rejected += 1;
            converged = true;
            break;
        }
        max_kkt = max_kkt.max(sol.kkt.max());
        x = x_new;
        u = u_new;
        duals = Some(sol.duals);
        let change = next - current;
        current = next;
        trace.push(current);
        if change <= settings.outer_tol * current.abs() {
            converged = true;
            break;
        }
    }
    let precoders = ch.unembed(&x);
    let rate = sum_rate(h_a, &precoders, cfg, tau_pro_cu)?;
    // Raising each bound to the achieved SINR keeps every constraint and
    // cannot lower the objective.
    let tightened: Vec<f64> = u.iter().zip(&rate.per_user_sinr).map(|(a, b)| a.max(*b)).collect();
    Ok(ScaSolution {
        iterate: DcIterate {
            precoders: precoders.clone(),
            objective_bps: objective_bps(bw, &tightened),
            sinr_targets: tightened,
        },
        precoders,
        rate,
        objective_trace: trace,
        iterations,
        converged,
        rejected_steps: rejected,
        max_kkt_residual: max_kkt,
        newton_steps,
    })
}

#[cfg(test)]
mod tests;
