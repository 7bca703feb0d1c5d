//! The mass-action Hamiltonian, its gradients, the law-of-large-numbers
//! drift, and the Legendre-dual Lagrangian with path costs.
//!
//! For a network with reactions (a, b), rate constants κ and reaction
//! vectors ζ = b − a, the Hamiltonian is
//!
//! ```text
//! H(x, p) = Σ κ_{a,b} x^a (exp⟨ζ_{a,b}, p⟩ − 1)
//! ```
//!
//! The drift is its p-gradient at p = 0, and the local rate (Lagrangian)
//! is the convex conjugate L(x, β) = sup_p ⟨p, β⟩ − H(x, p). The dual is
//! solved by damped Newton in coordinates of the stoichiometric subspace;
//! the optimal reaction fluxes are recovered from the maximizing momentum
//! as u_{a,b} = λ_{a,b}(x) exp⟨ζ, p*⟩.

use crate::network::Network;
use crate::special::entropy_kernel;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Exponent cap: beyond this, exp overflows f64 headroom and the evaluation
/// is reported as an overflow instead of returning inf.
pub const EXP_ARG_MAX: f64 = 700.0;

/// Momentum-norm threshold for declaring the dual unbounded while the
/// objective is still climbing.
const DIVERGENCE_NORM: f64 = 1e3;

const MAX_DUAL_ITERS: usize = 200;

#[derive(Debug, Error)]
pub enum HamiltonianError {
    #[error("exp overflow: <zeta, p> = {value:.3e} for reaction {reaction} exceeds {max}")]
    Overflow {
        reaction: usize,
        value: f64,
        max: f64,
    },
    #[error("dual solver did not converge after {iters} iterations (|grad| = {grad_norm:.3e})")]
    NonConvergence { iters: usize, grad_norm: f64 },
    #[error("path needs at least two points, got {0}")]
    PathTooShort(usize),
    #[error("path timestamps must be strictly increasing (t[{index}] = {value})")]
    NonIncreasingTime { index: usize, value: f64 },
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
}

/// Value and both gradients of H at a point (x, p).
#[derive(Debug, Clone)]
pub struct HamiltonianEval {
    pub value: f64,
    pub grad_x: DVector<f64>,
    pub grad_p: DVector<f64>,
}

/// Evaluate H, D_xH and D_pH. Requires x ≥ 0; errors if any ⟨ζ, p⟩
/// exceeds the overflow guard.
pub fn eval_h(
    net: &Network,
    x: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<HamiltonianEval, HamiltonianError> {
    crate::network::require_nonnegative(x)?;
    let d = net.dim();
    let mut value = 0.0;
    let mut grad_x = DVector::zeros(d);
    let mut grad_p = DVector::zeros(d);
    for (ri, r) in net.reactions().iter().enumerate() {
        let zeta = r.vector_f64();
        let dot = zeta.dot(p);
        if dot > EXP_ARG_MAX {
            return Err(HamiltonianError::Overflow {
                reaction: ri,
                value: dot,
                max: EXP_ARG_MAX,
            });
        }
        let e = dot.exp();
        let lam = r.intensity(x);
        value += lam * (e - 1.0);
        grad_p += &zeta * (lam * e);
        for i in 0..d {
            let dmono = r.reactant.monomial_deriv(x, i);
            if dmono != 0.0 {
                grad_x[i] += r.rate * dmono * (e - 1.0);
            }
        }
    }
    Ok(HamiltonianEval {
        value,
        grad_x,
        grad_p,
    })
}

/// The deterministic (law-of-large-numbers) vector field
/// Σ κ x^a ζ = D_pH(x, 0).
pub fn drift(net: &Network, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(net.dim());
    for r in net.reactions() {
        out += r.vector_f64() * r.intensity(x);
    }
    out
}

/// Jacobian of the drift field, D_x of Σ κ x^a ζ.
pub fn drift_jacobian(net: &Network, x: &DVector<f64>) -> DMatrix<f64> {
    let d = net.dim();
    let mut jac = DMatrix::zeros(d, d);
    for r in net.reactions() {
        let zeta = r.vector();
        for j in 0..d {
            let dmono = r.reactant.monomial_deriv(x, j);
            if dmono != 0.0 {
                for i in 0..d {
                    jac[(i, j)] += r.rate * dmono * zeta[i] as f64;
                }
            }
        }
    }
    jac
}

/// Why a Lagrangian evaluation is +∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// β has a component outside the span of the active reaction vectors.
    OffSubspace,
    /// β lies in the span but outside the attainable cone: the dual climbs
    /// without bound.
    OutsideCone,
    /// The primal optimum sits on the boundary of the feasible flux set
    /// (some flux pinned at zero); the reported value is the infimum over
    /// the closed set.
    BoundaryTie,
}

/// Result of the Legendre transform at (x, β).
#[derive(Debug, Clone)]
pub struct LagrangianEval {
    /// L(x, β) ∈ [0, +∞]; `f64::INFINITY` when infeasible.
    pub value: f64,
    /// Maximizing momentum, present when the value is finite.
    pub dual_p: Option<DVector<f64>>,
    /// Optimal reaction fluxes u_{a,b} ≥ 0, present when the value is finite.
    pub fluxes: Option<Vec<f64>>,
    pub infeasible: Option<InfeasibleReason>,
}

impl LagrangianEval {
    fn infinite(reason: InfeasibleReason) -> Self {
        LagrangianEval {
            value: f64::INFINITY,
            dual_p: None,
            fluxes: None,
            infeasible: Some(reason),
        }
    }
}

/// L(x, β) = sup_p ⟨p, β⟩ − H(x, p) by damped Newton on the concave dual.
///
/// At boundary states (some xᵢ = 0) the inactive reactions drop out of H and
/// force zero flux; the value is then assembled from the flux (primal) form
/// Σ λ ℓ(u/λ) over the active reactions.
pub fn lagrangian(
    net: &Network,
    x: &DVector<f64>,
    beta: &DVector<f64>,
) -> Result<LagrangianEval, HamiltonianError> {
    lagrangian_seeded(net, x, beta, None)
}

/// [`lagrangian`] with an initial momentum guess; repeated nearby solves
/// (path optimization) converge in one or two Newton steps this way.
pub fn lagrangian_seeded(
    net: &Network,
    x: &DVector<f64>,
    beta: &DVector<f64>,
    p_guess: Option<&DVector<f64>>,
) -> Result<LagrangianEval, HamiltonianError> {
    crate::network::require_nonnegative(x)?;
    let d = net.dim();

    // Active reactions and their intensities: λ = 0 contributes nothing to H
    // and pins its flux to zero.
    let lambdas: Vec<f64> = net.reactions().iter().map(|r| r.intensity(x)).collect();
    let active: Vec<usize> = (0..lambdas.len()).filter(|&i| lambdas[i] > 0.0).collect();
    let boundary = x.iter().any(|&v| v == 0.0);

    // Orthonormal basis of span{zeta_active}. H(x, .) only varies along this
    // span, so the dual is solved in these coordinates; the orthogonal part
    // of beta decides feasibility outright.
    let zetas: Vec<DVector<f64>> = net.reactions().iter().map(|r| r.vector_f64()).collect();
    let mut span: Vec<DVector<f64>> = Vec::new();
    for &i in &active {
        let mut v = zetas[i].clone();
        for _ in 0..2 {
            for b in &span {
                let c = b.dot(&v);
                v -= b * c;
            }
        }
        if v.norm() > 1e-12 {
            let n = v.norm();
            span.push(v / n);
        }
    }
    let project = |v: &DVector<f64>| -> DVector<f64> {
        let mut out = DVector::zeros(d);
        for b in &span {
            out += b * b.dot(v);
        }
        out
    };
    let beta_par = project(beta);
    let beta_perp = beta - &beta_par;
    if beta_perp.norm() > 1e-9 * (1.0 + beta.norm()) {
        return Ok(LagrangianEval::infinite(InfeasibleReason::OffSubspace));
    }
    if span.is_empty() {
        // No active reactions: only standing still is free.
        return Ok(LagrangianEval {
            value: 0.0,
            dual_p: Some(DVector::zeros(d)),
            fluxes: Some(vec![0.0; lambdas.len()]),
            infeasible: None,
        });
    }

    let rdim = span.len();
    // Reduced coordinates: p = Span q.
    let reduce = |v: &DVector<f64>| -> DVector<f64> {
        DVector::from_iterator(rdim, span.iter().map(|b| b.dot(v)))
    };
    let expand = |q: &DVector<f64>| -> DVector<f64> {
        let mut p = DVector::zeros(d);
        for (b, &qi) in span.iter().zip(q.iter()) {
            p += b * qi;
        }
        p
    };
    let b_red = reduce(beta);

    // Dual objective pieces in reduced coordinates.
    let h_parts = |q: &DVector<f64>| -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let p = expand(q);
        let mut h = 0.0;
        let mut grad = DVector::zeros(rdim);
        let mut hess = DMatrix::zeros(rdim, rdim);
        for &i in &active {
            let dot = zetas[i].dot(&p);
            if dot > EXP_ARG_MAX {
                return None;
            }
            let e = dot.exp();
            let zr = reduce(&zetas[i]);
            h += lambdas[i] * (e - 1.0);
            grad += &zr * (lambdas[i] * e);
            hess += &zr * zr.transpose() * (lambdas[i] * e);
        }
        Some((h, grad, hess))
    };
    let objective = |q: &DVector<f64>| -> Option<f64> {
        let p = expand(q);
        let mut h = 0.0;
        for &i in &active {
            let dot = zetas[i].dot(&p);
            if dot > EXP_ARG_MAX {
                return None;
            }
            h += lambdas[i] * (dot.exp() - 1.0);
        }
        Some(q.dot(&b_red) - h)
    };

    let mut q = DVector::zeros(rdim);
    let mut g_val = 0.0; // objective at q = 0 is exactly 0
    if let Some(p0) = p_guess {
        let q0 = reduce(p0);
        if let Some(v0) = objective(&q0) {
            if v0 >= g_val {
                q = q0;
                g_val = v0;
            }
        }
    }
    let mut last_increase = f64::INFINITY;
    let scale = 1.0 + b_red.norm() + lambdas.iter().sum::<f64>();
    for iter in 0..MAX_DUAL_ITERS {
        let (_, grad_h, hess_h) = match h_parts(&q) {
            Some(parts) => parts,
            None => return Ok(LagrangianEval::infinite(InfeasibleReason::OutsideCone)),
        };
        let grad = &b_red - &grad_h;
        if grad.norm() <= 1e-13 * scale {
            return Ok(finish(
                net, x, beta, &lambdas, &zetas, &expand(&q), boundary, g_val,
            ));
        }
        // Newton direction; fall back to gradient ascent when the reduced
        // Hessian is numerically singular.
        let dir = hess_h
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&grad))
            .unwrap_or_else(|| grad.clone() / (1.0 + hess_h.norm()));
        // Inside the quadratic-convergence basin the objective differences
        // fall below f64 resolution before the gradient does; take undamped
        // Newton steps there instead of line-searching on the objective.
        if grad.norm() <= 1e-5 * scale {
            let q_new = &q + &dir;
            if let Some(val) = objective(&q_new) {
                q = q_new;
                g_val = val;
                continue;
            }
        }
        // Backtracking until the concave objective increases.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let q_new = &q + &dir * t;
            if let Some(val) = objective(&q_new) {
                if val > g_val + 1e-4 * t * grad.dot(&dir) {
                    last_increase = val - g_val;
                    q = q_new;
                    g_val = val;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(HamiltonianError::NonConvergence {
                iters: iter,
                grad_norm: grad.norm(),
            });
        }
        if q.norm() > DIVERGENCE_NORM && last_increase > 0.0 {
            return Ok(LagrangianEval::infinite(InfeasibleReason::OutsideCone));
        }
    }
    Err(HamiltonianError::NonConvergence {
        iters: MAX_DUAL_ITERS,
        grad_norm: f64::NAN,
    })
}

/// Assemble the finite result at the maximizing momentum.
#[allow(clippy::too_many_arguments)]
fn finish(
    net: &Network,
    _x: &DVector<f64>,
    beta: &DVector<f64>,
    lambdas: &[f64],
    zetas: &[DVector<f64>],
    p_star: &DVector<f64>,
    boundary: bool,
    dual_value: f64,
) -> LagrangianEval {
    let nr = net.reactions().len();
    let mut fluxes = vec![0.0; nr];
    let mut primal = 0.0;
    for i in 0..nr {
        if lambdas[i] > 0.0 {
            let u = lambdas[i] * zetas[i].dot(p_star).exp();
            fluxes[i] = u;
            primal += lambdas[i] * entropy_kernel(u / lambdas[i]);
        }
    }
    // Interior states report the dual value; boundary states report the
    // flux-form value (they agree to rounding when the dual attains its sup).
    let value = if boundary { primal } else { dual_value };
    // Clamp tiny negatives from rounding: L is nonnegative by construction.
    let value = if value < 0.0 && value > -1e-12 { 0.0 } else { value };
    let tie = {
        let recon: DVector<f64> = zetas
            .iter()
            .zip(fluxes.iter())
            .map(|(z, &u)| z * u)
            .fold(DVector::zeros(beta.len()), |acc, v| acc + v);
        (recon - beta).norm() > 1e-6 * (1.0 + beta.norm())
    };
    LagrangianEval {
        value,
        dual_p: Some(p_star.clone()),
        fluxes: Some(fluxes),
        infeasible: if tie {
            Some(InfeasibleReason::BoundaryTie)
        } else {
            None
        },
    }
}

/// Time-stamped trajectory cost: composite midpoint quadrature of
/// L(φ(t), φ̇(t)) with finite-difference velocities per segment. Returns
/// +∞ as soon as one segment is infeasible.
pub fn path_cost(net: &Network, times: &[f64], states: &[DVector<f64>]) -> Result<f64, HamiltonianError> {
    if times.len() < 2 || states.len() != times.len() {
        return Err(HamiltonianError::PathTooShort(times.len()));
    }
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(HamiltonianError::NonIncreasingTime {
                index: i + 1,
                value: w[1],
            });
        }
    }
    let mut total = 0.0;
    for i in 0..times.len() - 1 {
        let dt = times[i + 1] - times[i];
        let mid = (&states[i] + &states[i + 1]) * 0.5;
        let vel = (&states[i + 1] - &states[i]) / dt;
        let l = lagrangian(net, &mid, &vel)?;
        if !l.value.is_finite() {
            return Ok(f64::INFINITY);
        }
        total += dt * l.value;
    }
    Ok(total)
}
