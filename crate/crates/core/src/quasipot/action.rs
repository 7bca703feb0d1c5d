//! Variational approximation of the quasipotential: minimize the discretized
//! action Σ Δt·L(midpoint, finite-difference velocity) over interior path
//! nodes, and a two-point Hamiltonian shooting method for cross-checks.
//!
//! The infinite-horizon infimum is approached through a ladder of finite
//! horizons; the minimum over the ladder is the quasipotential estimate.

use super::QuasipotError;
use crate::dynamics::{self, Path};
use crate::hamiltonian::{eval_h, lagrangian_seeded};
use crate::network::{compatibility_class, Network};
use nalgebra::DVector;
use rayon::prelude::*;

/// Interior floor: a node at or below this is boundary contact.
const NODE_FLOOR: f64 = 1e-8;
const MAX_LBFGS_ITERS: usize = 500;
const GRAD_TOL: f64 = 1e-8;

/// A fixed-endpoint, fixed-horizon path optimization problem.
#[derive(Debug, Clone)]
pub struct ActionProblem {
    pub start: DVector<f64>,
    pub end: DVector<f64>,
    pub horizon: f64,
    /// Path nodes including both endpoints; at least 16.
    pub nodes: usize,
}

/// Outcome of a minimum-action solve.
#[derive(Debug, Clone)]
pub struct ActionResult {
    pub path: Path,
    pub value: f64,
    pub converged: bool,
    pub grad_norm: f64,
    /// A node was clamped at the interior floor during optimization.
    pub boundary_contact: bool,
    /// Which multistart produced this result.
    pub initializer: &'static str,
}

struct Discretized<'a> {
    net: &'a Network,
    dt: f64,
    nodes: usize,
    /// Baseline path (the initializer); decision variables are offsets from
    /// it along the stoichiometric basis, which keeps every iterate inside
    /// the compatibility class where the action is finite.
    base: Vec<DVector<f64>>,
    /// Orthonormal basis of the stoichiometric subspace, one column per
    /// free direction.
    basis: Vec<DVector<f64>>,
    /// Per-segment momentum warm starts, reused across iterations.
    warm: Vec<Option<DVector<f64>>>,
}

impl<'a> Discretized<'a> {
    fn new(net: &'a Network, problem: &ActionProblem, base: Vec<DVector<f64>>) -> Self {
        let basis = crate::network::stoichiometric_basis(net).basis;
        Discretized {
            net,
            dt: problem.horizon / (problem.nodes - 1) as f64,
            nodes: problem.nodes,
            base,
            basis,
            warm: vec![None; problem.nodes - 1],
        }
    }

    fn rank(&self) -> usize {
        self.basis.len()
    }

    fn node(&self, z: &[f64], i: usize) -> DVector<f64> {
        if i == 0 || i == self.nodes - 1 {
            return self.base[i].clone();
        }
        let r = self.rank();
        let mut x = self.base[i].clone();
        for (j, b) in self.basis.iter().enumerate() {
            x += b * z[(i - 1) * r + j];
        }
        x
    }

    /// Action value and gradient with respect to the flattened interior
    /// offsets. Configurations with a node at or below the interior floor,
    /// or with an infeasible velocity, report +∞ with a zero gradient (the
    /// line search backs off).
    fn eval(&mut self, z: &[f64]) -> Result<(f64, Vec<f64>), QuasipotError> {
        let nseg = self.nodes - 1;
        let d = self.net.dim();
        let mut value = 0.0;
        // Per-segment (dL/dx, p*) for the gradient assembly.
        let mut seg_x = vec![DVector::zeros(d); nseg];
        let mut seg_p = vec![DVector::zeros(d); nseg];
        let nodes: Vec<DVector<f64>> = (0..self.nodes).map(|i| self.node(z, i)).collect();
        for x in &nodes[1..self.nodes - 1] {
            if x.iter().any(|&v| v <= NODE_FLOOR) {
                return Ok((f64::INFINITY, vec![0.0; z.len()]));
            }
        }
        for s in 0..nseg {
            let mid = (&nodes[s] + &nodes[s + 1]) * 0.5;
            let vel = (&nodes[s + 1] - &nodes[s]) / self.dt;
            let l = lagrangian_seeded(self.net, &mid, &vel, self.warm[s].as_ref())?;
            if !l.value.is_finite() {
                return Ok((f64::INFINITY, vec![0.0; z.len()]));
            }
            let p = l.dual_p.expect("finite Lagrangian carries a momentum");
            let h = eval_h(self.net, &mid, &p)?;
            value += self.dt * l.value;
            seg_x[s] = h.grad_x * (-1.0); // dL/dx at the midpoint
            seg_p[s] = p.clone();
            self.warm[s] = Some(p);
        }
        let r = self.rank();
        let mut grad = vec![0.0; z.len()];
        for k in 1..self.nodes - 1 {
            // Node k touches segment k-1 (as right end) and k (as left end).
            let gk = &seg_x[k - 1] * (self.dt * 0.5) + &seg_p[k - 1]
                + &seg_x[k] * (self.dt * 0.5)
                - &seg_p[k];
            for (j, b) in self.basis.iter().enumerate() {
                grad[(k - 1) * r + j] = b.dot(&gk);
            }
        }
        Ok((value, grad))
    }
}

/// Limited-memory BFGS with Armijo backtracking. The objective reports +∞
/// outside its domain, which the line search treats as a rejection.
/// Returns (z, value, grad_inf_norm, converged).
fn lbfgs<F>(
    mut eval: F,
    mut z: Vec<f64>,
) -> Result<(Vec<f64>, f64, f64, bool), QuasipotError>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>), QuasipotError>,
{
    let n = z.len();
    let (mut f, mut g) = eval(&z)?;
    if !f.is_finite() {
        return Ok((z, f, f64::INFINITY, false));
    }
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new(); // (s, y, rho)
    let m = 10;
    for _iter in 0..MAX_LBFGS_ITERS {
        let gnorm = g.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if gnorm <= GRAD_TOL * (1.0 + f.abs()) {
            return Ok((z, f, gnorm, true));
        }
        // Two-loop recursion.
        let mut q: Vec<f64> = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let alpha = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= alpha * y[i];
            }
            alphas.push(alpha);
        }
        let gamma = history
            .last()
            .map(|(s, y, _)| dot(s, y) / dot(y, y).max(1e-300))
            .unwrap_or(1.0);
        for v in q.iter_mut() {
            *v *= gamma;
        }
        for ((s, y, rho), &alpha) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (alpha - beta);
            }
        }
        let mut dir: Vec<f64> = q.iter().map(|&v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // Not a descent direction (stale curvature): restart on -g.
            history.clear();
            dir = g.iter().map(|&v| -v).collect();
            slope = dot(&g, &dir);
        }
        // Armijo backtracking.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let z_new: Vec<f64> = z
                .iter()
                .zip(dir.iter())
                .map(|(&zi, &di)| zi + t * di)
                .collect();
            let (f_new, g_new) = eval(&z_new)?;
            if f_new.is_finite() && f_new <= f + 1e-4 * t * slope {
                let s: Vec<f64> = z_new.iter().zip(z.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    history.push((s, y, 1.0 / sy));
                    if history.len() > m {
                        history.remove(0);
                    }
                }
                z = z_new;
                f = f_new;
                g = g_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            let gnorm = g.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
            // Line search exhausted: either we are at numerical resolution
            // (treat as converged) or genuinely stuck.
            let converged = gnorm <= 1e-5 * (1.0 + f.abs());
            return Ok((z, f, gnorm, converged));
        }
    }
    let gnorm = g.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    Ok((z, f, gnorm, false))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn validate(net: &Network, problem: &ActionProblem) -> Result<(), QuasipotError> {
    if problem.nodes < 16 {
        return Err(QuasipotError::InvalidProblem(format!(
            "need at least 16 path nodes, got {}",
            problem.nodes
        )));
    }
    if problem.horizon <= 0.0 {
        return Err(QuasipotError::InvalidProblem(format!(
            "horizon must be positive, got {}",
            problem.horizon
        )));
    }
    for (label, x) in [("start", &problem.start), ("end", &problem.end)] {
        if x.iter().any(|&v| v <= 0.0) {
            return Err(QuasipotError::InvalidProblem(format!(
                "{label} point must be interior (strictly positive)"
            )));
        }
    }
    let class = compatibility_class(net, &problem.start)?;
    if !class.contains(&problem.end, 1e-9) {
        return Err(QuasipotError::InvalidProblem(
            "start and end lie in different compatibility classes".to_string(),
        ));
    }
    Ok(())
}

/// Initial guess: straight line between the endpoints.
fn linear_init(problem: &ActionProblem) -> Vec<DVector<f64>> {
    let n = problem.nodes;
    (0..n)
        .map(|i| {
            let w = i as f64 / (n - 1) as f64;
            &problem.start * (1.0 - w) + &problem.end * w
        })
        .collect()
}

/// Initial guess: the drift flow from `end` run backwards in time, which is
/// the shape of an uphill instanton.
fn reversed_flow_init(net: &Network, problem: &ActionProblem) -> Option<Vec<DVector<f64>>> {
    let n = problem.nodes;
    let path = dynamics::integrate_ode(net, &problem.end, problem.horizon, 1e-8).ok()?;
    let mut nodes: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let t_rev = problem.horizon * (n - 1 - i) as f64 / (n - 1) as f64;
            path.sample(t_rev)
        })
        .collect();
    nodes[0] = problem.start.clone();
    nodes[n - 1] = problem.end.clone();
    Some(nodes)
}

/// Minimize the discretized action over interior nodes by L-BFGS with
/// analytic gradients through the dual momenta, multistarting from a linear
/// interpolation and the time-reversed drift flow.
pub fn minimum_action(
    net: &Network,
    problem: &ActionProblem,
) -> Result<ActionResult, QuasipotError> {
    validate(net, problem)?;
    let mut inits: Vec<(&'static str, Vec<DVector<f64>>)> =
        vec![("linear", linear_init(problem))];
    if let Some(nodes) = reversed_flow_init(net, problem) {
        inits.push(("reversed-flow", nodes));
    }

    let runs: Vec<Result<ActionResult, QuasipotError>> = inits
        .into_par_iter()
        .map(|(label, nodes)| {
            let mut disc = Discretized::new(net, problem, nodes);
            let z0 = vec![0.0; (problem.nodes - 2) * disc.rank()];
            let (z, value, grad_norm, converged) = lbfgs(|z| disc.eval(z), z0)?;
            let dt = problem.horizon / (problem.nodes - 1) as f64;
            let times: Vec<f64> = (0..problem.nodes).map(|i| i as f64 * dt).collect();
            let states: Vec<DVector<f64>> =
                (0..problem.nodes).map(|i| disc.node(&z, i)).collect();
            let boundary_contact = states
                .iter()
                .any(|x| x.iter().any(|&v| v <= 2.0 * NODE_FLOOR));
            Ok(ActionResult {
                path: Path {
                    times,
                    states,
                    momenta: None,
                    energies: None,
                    clipped: false,
                },
                value,
                converged,
                grad_norm,
                boundary_contact,
                initializer: label,
            })
        })
        .collect();

    let mut best: Option<ActionResult> = None;
    let mut last_err: Option<QuasipotError> = None;
    for run in runs {
        match run {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        (r.converged && !b.converged && r.value.is_finite())
                            || (r.converged == b.converged && r.value < b.value)
                    }
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let best = match best {
        Some(b) => b,
        None => return Err(last_err.expect("at least one multistart ran")),
    };
    if !best.converged && !best.value.is_finite() {
        return Err(QuasipotError::InvalidProblem(
            "no feasible path found from any initializer".to_string(),
        ));
    }
    if !best.converged {
        return Err(QuasipotError::NonConvergence {
            grad_norm: best.grad_norm,
            iters: MAX_LBFGS_ITERS,
        });
    }
    Ok(best)
}

/// Quasipotential estimate: minimum of the action over a ladder of horizons
/// (node count scales with the horizon). Returns the best value and run.
pub fn quasipotential_estimate(
    net: &Network,
    c: &DVector<f64>,
    x: &DVector<f64>,
    horizons: &[f64],
) -> Result<(f64, ActionResult), QuasipotError> {
    let results: Vec<Result<ActionResult, QuasipotError>> = horizons
        .par_iter()
        .map(|&t| {
            let nodes = ((16.0 * t) as usize).clamp(48, 320);
            minimum_action(
                net,
                &ActionProblem {
                    start: c.clone(),
                    end: x.clone(),
                    horizon: t,
                    nodes,
                },
            )
        })
        .collect();
    let mut best: Option<ActionResult> = None;
    let mut last_err = None;
    for r in results {
        match r {
            Ok(r) => {
                if best.as_ref().map(|b| r.value < b.value).unwrap_or(true) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(b) => Ok((b.value, b)),
        None => Err(last_err.expect("ladder is nonempty")),
    }
}

/// Result of the two-point Hamiltonian boundary-value experiment.
#[derive(Debug, Clone)]
pub struct ShootResult {
    pub path: Path,
    pub p0: DVector<f64>,
    pub terminal_mismatch: f64,
    /// Action cost of the shot trajectory, for comparison with
    /// [`minimum_action`].
    pub cost: f64,
}

fn terminal_state(
    net: &Network,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>, QuasipotError> {
    let path = dynamics::integrate_hamilton(net, x0, p0, t, 1e-10)?;
    Ok(path.final_state().clone())
}

/// Shoot on the initial momentum so the Hamiltonian flow lands on `x_end` at
/// time T. Scalar problems bracket and bisect; higher dimensions run damped
/// Newton with a finite-difference Jacobian. No optimality is claimed for
/// the returned trajectory; its cost is reported for comparison.
pub fn hamiltonian_bvp_shoot(
    net: &Network,
    x_start: &DVector<f64>,
    x_end: &DVector<f64>,
    t: f64,
) -> Result<ShootResult, QuasipotError> {
    if t <= 0.0 {
        return Err(QuasipotError::InvalidProblem(format!(
            "horizon must be positive, got {t}"
        )));
    }
    for (label, x) in [("start", x_start), ("end", x_end)] {
        if x.iter().any(|&v| v <= 0.0) {
            return Err(QuasipotError::InvalidProblem(format!(
                "{label} point must be interior"
            )));
        }
    }
    let d = net.dim();
    let scale = 1.0 + x_end.norm();
    let p0 = if d == 1 {
        shoot_bisect_1d(net, x_start, x_end, t)?
    } else {
        shoot_newton(net, x_start, x_end, t)?
    };
    let path = dynamics::integrate_hamilton(net, x_start, &p0, t, 1e-10)?;
    let mismatch = (path.final_state() - x_end).norm();
    if mismatch > 1e-6 * scale {
        return Err(QuasipotError::ShootingDiverged {
            best_mismatch: mismatch,
        });
    }
    let cost = crate::hamiltonian::path_cost(net, &path.times, &path.states)?;
    Ok(ShootResult {
        path,
        p0,
        terminal_mismatch: mismatch,
        cost,
    })
}

fn shoot_bisect_1d(
    net: &Network,
    x_start: &DVector<f64>,
    x_end: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>, QuasipotError> {
    let target = x_end[0];
    let eval = |p: f64| -> Option<f64> {
        terminal_state(net, x_start, &DVector::from_vec(vec![p]), t)
            .ok()
            .map(|x| x[0] - target)
    };
    let g0 = eval(0.0).ok_or(QuasipotError::ShootingDiverged {
        best_mismatch: f64::INFINITY,
    })?;
    if g0.abs() < 1e-10 * (1.0 + target) {
        return Ok(DVector::from_vec(vec![0.0]));
    }
    // The terminal state grows with p0: positive p0 pushes uphill.
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut lo = 0.0;
    let mut hi = dir * 1e-12;
    let mut found = false;
    for _ in 0..120 {
        match eval(hi) {
            Some(g) if g * g0 < 0.0 => {
                found = true;
                break;
            }
            Some(_) => {
                lo = hi;
                hi *= 4.0;
            }
            // Integration failure (overflow on an expanding orbit) counts
            // as overshoot.
            None => {
                found = true;
                break;
            }
        }
        if hi.abs() > 700.0 {
            break;
        }
    }
    if !found {
        return Err(QuasipotError::ShootingDiverged {
            best_mismatch: eval(lo).map(|g| g.abs()).unwrap_or(f64::INFINITY),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match eval(mid) {
            Some(g) if g * g0 >= 0.0 => lo = mid,
            _ => hi = mid,
        }
        if (hi - lo).abs() < 1e-16 + 1e-14 * lo.abs() {
            break;
        }
    }
    Ok(DVector::from_vec(vec![0.5 * (lo + hi)]))
}

fn shoot_newton(
    net: &Network,
    x_start: &DVector<f64>,
    x_end: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>, QuasipotError> {
    let d = net.dim();
    let mut p = DVector::zeros(d);
    let mut best_mismatch = f64::INFINITY;
    for _ in 0..60 {
        let xt = terminal_state(net, x_start, &p, t).map_err(|_| {
            QuasipotError::ShootingDiverged { best_mismatch }
        })?;
        let f = &xt - x_end;
        best_mismatch = best_mismatch.min(f.norm());
        if f.norm() < 1e-10 * (1.0 + x_end.norm()) {
            return Ok(p);
        }
        let mut jac = nalgebra::DMatrix::zeros(d, d);
        let h = 1e-7;
        for j in 0..d {
            let mut pj = p.clone();
            pj[j] += h;
            let xj = terminal_state(net, x_start, &pj, t).map_err(|_| {
                QuasipotError::ShootingDiverged { best_mismatch }
            })?;
            for i in 0..d {
                jac[(i, j)] = (xj[i] - xt[i]) / h;
            }
        }
        let step = jac
            .lu()
            .solve(&f)
            .ok_or(QuasipotError::ShootingDiverged { best_mismatch })?;
        // Damped update.
        let mut tstep = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand = &p - &step * tstep;
            if let Ok(xc) = terminal_state(net, x_start, &cand, t) {
                if (xc - x_end).norm() < f.norm() {
                    p = cand;
                    improved = true;
                    break;
                }
            }
            tstep *= 0.5;
        }
        if !improved {
            return Err(QuasipotError::ShootingDiverged { best_mismatch });
        }
    }
    Err(QuasipotError::ShootingDiverged { best_mismatch })
}
