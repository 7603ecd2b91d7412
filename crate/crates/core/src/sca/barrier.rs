//! Dense log-barrier interior-point method for small smooth convex programs
//!
//! ```text
//! minimize f0(z)  subject to  f_i(z) < 0,  i = 1..m
//! ```
//!
//! Each centering step runs damped Newton on `t f0(z) - sum log(-f_i(z))`
//! with a feasibility-preserving backtracking line search, then `t` grows
//! geometrically until the duality gap `m / t` is below tolerance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A convex program with twice-differentiable objective and constraints.
pub trait ConvexProgram {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn objective(&self, z: &[f64]) -> f64;
    /// Adds `scale * grad f0` and `scale * hess f0`.
    fn add_objective_derivs(&self, z: &[f64], scale: f64, grad: &mut [f64], hess: &mut DMatrix<f64>);
    fn constraints(&self, z: &[f64], out: &mut [f64]);
    /// Overwrites `grad` with `grad f_i` and adds `weight * hess f_i`.
    fn constraint_derivs(&self, i: usize, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>, weight: f64);
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSettings {
    /// Initial barrier weight `t`.
    pub t0: f64,
    /// Growth factor of `t` between centering steps.
    pub mu: f64,
    /// Stop once `m / t <= gap_tol * max(1, |f0|)`.
    pub gap_tol: f64,
    /// Centering stops when half the squared Newton decrement falls below this.
    pub newton_tol: f64,
    pub max_newton_steps: usize,
    pub armijo: f64,
    pub backtrack: f64,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            t0: 1.0,
            mu: 20.0,
            gap_tol: 1e-10,
            newton_tol: 1e-10,
            max_newton_steps: 400,
            armijo: 0.01,
            backtrack: 0.5,
        }
    }
}

/// First-order optimality measures at a returned point, all relative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResidual {
    pub stationarity: f64,
    pub gap: f64,
    pub infeasibility: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.gap).max(self.infeasibility)
    }
}

#[derive(Debug, Clone)]
pub struct BarrierSolution {
    pub z: Vec<f64>,
    pub objective: f64,
    /// Dual estimates `1 / (t (-f_i))`.
    pub duals: Vec<f64>,
    pub t: f64,
    pub newton_steps: usize,
    pub kkt: KktResidual,
}

struct Workspace {
    grad: Vec<f64>,
    gi: Vec<f64>,
    hess: DMatrix<f64>,
    fvals: Vec<f64>,
    trial: Vec<f64>,
    trial_f: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, m: usize) -> Self {
        Self {
            grad: vec![0.0; n],
            gi: vec![0.0; n],
            hess: DMatrix::zeros(n, n),
            fvals: vec![0.0; m],
            trial: vec![0.0; n],
            trial_f: vec![0.0; m],
        }
    }
}

pub fn is_strictly_feasible<P: ConvexProgram + ?Sized>(prob: &P, z: &[f64]) -> bool {
    let mut f = vec![0.0; prob.num_constraints()];
    prob.constraints(z, &mut f);
    f.iter().all(|&v| v < 0.0) && prob.objective(z).is_finite()
}

fn barrier_value<P: ConvexProgram + ?Sized>(prob: &P, t: f64, z: &[f64], f: &mut [f64]) -> f64 {
    prob.constraints(z, f);
    if f.iter().any(|&v| !(v < 0.0)) {
        return f64::INFINITY;
    }
    let obj = prob.objective(z);
    if !obj.is_finite() {
        return f64::INFINITY;
    }
    t * obj - f.iter().map(|&v| (-v).ln()).sum::<f64>()
}

/// Fills gradient and Hessian of the barrier function at `z`.
fn assemble<P: ConvexProgram + ?Sized>(prob: &P, t: f64, z: &[f64], ws: &mut Workspace) {
    let n = prob.dim();
    ws.grad.iter_mut().for_each(|g| *g = 0.0);
    ws.hess.fill(0.0);
    prob.add_objective_derivs(z, t, &mut ws.grad, &mut ws.hess);
    prob.constraints(z, &mut ws.fvals);
    for i in 0..prob.num_constraints() {
        let fi = ws.fvals[i];
        let inv = 1.0 / (-fi);
        prob.constraint_derivs(i, z, &mut ws.gi, &mut ws.hess, inv);
        let inv2 = inv * inv;
        for c in 0..n {
            let gc = ws.gi[c];
            if gc == 0.0 {
                continue;
            }
            ws.grad[c] += gc * inv;
            let s = gc * inv2;
            for r in 0..n {
                ws.hess[(r, c)] += ws.gi[r] * s;
            }
        }
    }
}

fn newton_direction(hess: &DMatrix<f64>, grad: &[f64]) -> Option<DVector<f64>> {
    let n = grad.len();
    let rhs = DVector::from_iterator(n, grad.iter().map(|g| -g));
    if let Some(ch) = hess.clone().cholesky() {
        return Some(ch.solve(&rhs));
    }
    // Regularize a numerically indefinite Hessian.
    let scale = (0..n).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 1e-14 * scale;
    for _ in 0..8 {
        let mut h = hess.clone();
        for i in 0..n {
            h[(i, i)] += shift;
        }
        if let Some(ch) = h.cholesky() {
            return Some(ch.solve(&rhs));
        }
        shift *= 100.0;
    }
    None
}

/// Relative KKT residual of `z` treating it as a central point for weight `t`.
pub fn kkt_residual<P: ConvexProgram + ?Sized>(prob: &P, z: &[f64], t: f64) -> (KktResidual, Vec<f64>) {
    let mut f = vec![0.0; prob.num_constraints()];
    prob.constraints(z, &mut f);
    let duals: Vec<f64> = f.iter().map(|&v| if v < 0.0 { 1.0 / (t * -v) } else { 0.0 }).collect();
    (kkt_with_duals(prob, z, &duals, t), duals)
}

/// Relative KKT residual of the primal-dual pair `(z, duals)`.
pub fn kkt_with_duals<P: ConvexProgram + ?Sized>(prob: &P, z: &[f64], duals: &[f64], t: f64) -> KktResidual {
    let n = prob.dim();
    let m = prob.num_constraints();
    let mut g0 = vec![0.0; n];
    let mut scratch = DMatrix::zeros(n, n);
    prob.add_objective_derivs(z, 1.0, &mut g0, &mut scratch);
    let mut f = vec![0.0; m];
    prob.constraints(z, &mut f);
    let mut stat = g0.clone();
    let mut gi = vec![0.0; n];
    let mut scale = g0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (i, &lam) in duals.iter().enumerate() {
        prob.constraint_derivs(i, z, &mut gi, &mut scratch, 0.0);
        let gnorm = gi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        scale = scale.max(lam * gnorm);
        for (s, g) in stat.iter_mut().zip(&gi) {
            *s += lam * g;
        }
    }
    let stationarity = stat.iter().fold(0.0f64, |a, v| a.max(v.abs())) / scale.max(f64::MIN_POSITIVE);
    let obj = prob.objective(z);
    let gap = m as f64 / t / obj.abs().max(1.0);
    let infeasibility = f.iter().fold(0.0f64, |a, &v| a.max(v)).max(0.0);
    KktResidual {
        stationarity,
        gap,
        infeasibility,
    }
}

/// One primal-dual Newton correction at a centered point: the primal step
/// plus the matching first-order dual update. The pair it returns has a
/// stationarity residual quadratic in the remaining Newton decrement.
fn polish<P: ConvexProgram + ?Sized>(prob: &P, t: f64, z: &[f64], ws: &mut Workspace) -> Option<(Vec<f64>, Vec<f64>)> {
    assemble(prob, t, z, ws);
    let dir = newton_direction(&ws.hess, &ws.grad)?;
    let n = prob.dim();
    let m = prob.num_constraints();
    let mut f = vec![0.0; m];
    prob.constraints(z, &mut f);
    let mut gi = vec![0.0; n];
    let mut scratch = DMatrix::zeros(n, n);
    let mut duals = Vec::with_capacity(m);
    for i in 0..m {
        let slack = -f[i];
        prob.constraint_derivs(i, z, &mut gi, &mut scratch, 0.0);
        let df: f64 = gi.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
        duals.push((1.0 + df / slack).max(0.0) / (t * slack));
    }
    let z_new: Vec<f64> = z.iter().zip(dir.iter()).map(|(a, d)| a + d).collect();
    is_strictly_feasible(prob, &z_new).then_some((z_new, duals))
}

/// Runs damped Newton at fixed `t` until centered. Returns the steps taken.
fn center<P: ConvexProgram + ?Sized>(
    prob: &P,
    t: f64,
    z: &mut [f64],
    ws: &mut Workspace,
    settings: &BarrierSettings,
    budget: usize,
    mut stop_early: impl FnMut(&[f64]) -> bool,
) -> std::result::Result<(usize, f64), f64> {
    let mut steps = 0;
    let mut fcur = vec![0.0; prob.num_constraints()];
    let mut phi = barrier_value(prob, t, z, &mut fcur);
    loop {
        if steps >= budget {
            return Err(f64::NAN);
        }
        assemble(prob, t, z, ws);
        let dir = match newton_direction(&ws.hess, &ws.grad) {
            Some(d) => d,
            None => return Err(f64::NAN),
        };
        let slope: f64 = ws.grad.iter().zip(dir.iter()).map(|(g, d)| g * d).sum();
        let decrement = -slope;
        if !(decrement.is_finite()) {
            return Err(decrement);
        }
        if decrement / 2.0 <= settings.newton_tol {
            return Ok((steps, decrement));
        }
        let mut s = 1.0;
        let quadratic_zone = decrement < 0.05;
        loop {
            for (tz, (zc, d)) in ws.trial.iter_mut().zip(z.iter().zip(dir.iter())) {
                *tz = zc + s * d;
            }
            let val = barrier_value(prob, t, &ws.trial, &mut ws.trial_f);
            if quadratic_zone && val.is_finite() && !(val < phi) {
                // The decrement is at round-off level for this barrier weight.
                return Ok((steps, decrement));
            }
            if val.is_finite() && (quadratic_zone || val <= phi + settings.armijo * s * slope) {
                phi = val;
                break;
            }
            s *= settings.backtrack;
            if s < 1e-16 {
                // No representable progress left along the Newton direction.
                return Ok((steps, decrement));
            }
        }
        z.copy_from_slice(&ws.trial);
        steps += 1;
        if stop_early(z) {
            return Ok((steps, decrement));
        }
    }
}

/// Solves from a strictly feasible starting point.
pub fn solve<P: ConvexProgram + ?Sized>(prob: &P, z0: &[f64], settings: &BarrierSettings) -> Result<BarrierSolution> {
    let n = prob.dim();
    let m = prob.num_constraints() as f64;
    debug_assert_eq!(z0.len(), n);
    let mut ws = Workspace::new(n, prob.num_constraints());
    let mut z = z0.to_vec();
    let mut t = settings.t0;
    let mut total = 0usize;
    loop {
        let budget = settings.max_newton_steps.saturating_sub(total);
        match center(prob, t, &mut z, &mut ws, settings, budget, |_| false) {
            Ok((steps, _)) => total += steps,
            Err(decrement) => {
                return Err(Error::SolverStalled {
                    iterations: total,
                    decrement,
                    gap: m / t,
                })
            }
        }
        let obj = prob.objective(&z);
        if m / t <= settings.gap_tol * obj.abs().max(1.0) {
            let (mut kkt, mut duals) = kkt_residual(prob, &z, t);
            if let Some((zp, dp)) = polish(prob, t, &z, &mut ws) {
                let kp = kkt_with_duals(prob, &zp, &dp, t);
                if kp.max() < kkt.max() {
                    z = zp;
                    duals = dp;
                    kkt = kp;
                }
            }
            let obj = prob.objective(&z);
            return Ok(BarrierSolution {
                z,
                objective: obj,
                duals,
                t,
                newton_steps: total,
                kkt,
            });
        }
        t *= settings.mu;
    }
}

/// `minimize s  s.t.  f_i(z) <= s`, used to locate a strictly feasible point.
struct PhaseOne<'a, P: ?Sized> {
    inner: &'a P,
}

impl<P: ConvexProgram + ?Sized> ConvexProgram for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn num_constraints(&self) -> usize {
        self.inner.num_constraints()
    }

    fn objective(&self, z: &[f64]) -> f64 {
        z[self.inner.dim()]
    }

    fn add_objective_derivs(&self, _z: &[f64], scale: f64, grad: &mut [f64], _hess: &mut DMatrix<f64>) {
        grad[self.inner.dim()] += scale;
    }

    fn constraints(&self, z: &[f64], out: &mut [f64]) {
        let n = self.inner.dim();
        self.inner.constraints(&z[..n], out);
        out.iter_mut().for_each(|v| *v -= z[n]);
    }

    fn constraint_derivs(&self, i: usize, z: &[f64], grad: &mut [f64], hess: &mut DMatrix<f64>, weight: f64) {
        let n = self.inner.dim();
        let mut inner_hess = hess.view_mut((0, 0), (n, n));
        // Route through a temporary so the inner program sees an n x n matrix.
        let mut tmp = DMatrix::zeros(n, n);
        self.inner.constraint_derivs(i, &z[..n], &mut grad[..n], &mut tmp, weight);
        inner_hess += tmp;
        grad[n] = -1.0;
    }
}

/// Finds a strictly feasible point near `z0`, or `None` if the feasible set
/// appears to have empty interior.
pub fn find_interior_point<P: ConvexProgram + ?Sized>(prob: &P, z0: &[f64], settings: &BarrierSettings) -> Option<Vec<f64>> {
    let n = prob.dim();
    let mut f = vec![0.0; prob.num_constraints()];
    prob.constraints(z0, &mut f);
    let worst = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if worst < 0.0 {
        return Some(z0.to_vec());
    }
    let phase = PhaseOne { inner: prob };
    let mut z = z0.to_vec();
    z.push(worst.abs().max(1.0) * 1.5 + worst);
    let mut ws = Workspace::new(n + 1, prob.num_constraints());
    let mut t = 1.0 / worst.abs().max(1e-12);
    let mut total = 0;
    for _ in 0..30 {
        let budget = settings.max_newton_steps.saturating_sub(total);
        let res = center(&phase, t, &mut z, &mut ws, settings, budget, |zz| zz[n] < 0.0);
        match res {
            Ok((steps, _)) => total += steps,
            Err(_) => return None,
        }
        if z[n] < 0.0 {
            z.truncate(n);
            return is_strictly_feasible(prob, &z).then_some(z);
        }
        t *= settings.mu;
    }
    None
}
