//! Deterministic dynamics: the law-of-large-numbers flow, steady states with
//! stability classification, and Hamilton's equations of motion.

mod rk45;

use crate::hamiltonian::{self, drift, drift_jacobian, HamiltonianError};
use crate::network::{compatibility_class, stoichiometric_basis, Network, NetworkError};
use nalgebra::{Complex, DMatrix, DVector};
use rk45::{Rk45Error, Rk45Options, StepOutcome};
use thiserror::Error;

/// Residual bound below which a steady-state report is accepted.
pub const STEADY_STATE_RESIDUAL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("step size underflow at t = {t} (stiff problem); last state {state:?}")]
    StepUnderflow { t: f64, state: Vec<f64> },
    #[error("state left the positive orthant at t = {t} (component {index})")]
    LeftPositiveOrthant { t: f64, index: usize },
    #[error("energy drift {drift:.3e} exceeded bound {bound:.3e} at t = {t}")]
    EnergyDrift { t: f64, drift: f64, bound: f64 },
    #[error("steady-state search did not converge: {reason}")]
    NoConvergence { reason: String },
    #[error("dynamics converged to a boundary state {state:?}")]
    ConvergedToBoundary { state: Vec<f64> },
    #[error("horizon must be positive, got {0}")]
    NonpositiveHorizon(f64),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// A time-stamped trajectory in concentration space, optionally carrying
/// momenta and per-step energies (Hamiltonian flows).
#[derive(Debug, Clone)]
pub struct Path {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub momenta: Option<Vec<DVector<f64>>>,
    pub energies: Option<Vec<f64>>,
    /// True when nonnegativity clipping absorbed rounding noise.
    pub clipped: bool,
}

impl Path {
    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("paths are never empty")
    }

    /// Linear interpolation between recorded points.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        match self.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => self.states[i].clone(),
            Err(0) => self.states[0].clone(),
            Err(i) if i >= self.times.len() => self.final_state().clone(),
            Err(i) => {
                let (t0, t1) = (self.times[i - 1], self.times[i]);
                let w = (t - t0) / (t1 - t0);
                &self.states[i - 1] * (1.0 - w) + &self.states[i] * w
            }
        }
    }

    /// CSV with columns t, x_1..x_d and, when present, p_1..p_d, H.
    pub fn to_csv(&self) -> String {
        let d = self.states[0].len();
        let mut out = String::new();
        out.push('t');
        for i in 1..=d {
            out.push_str(&format!(",x_{i}"));
        }
        if self.momenta.is_some() {
            for i in 1..=d {
                out.push_str(&format!(",p_{i}"));
            }
        }
        if self.energies.is_some() {
            out.push_str(",H");
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t}"));
            for v in self.states[i].iter() {
                out.push_str(&format!(",{v}"));
            }
            if let Some(ps) = &self.momenta {
                for v in ps[i].iter() {
                    out.push_str(&format!(",{v}"));
                }
            }
            if let Some(es) = &self.energies {
                out.push_str(&format!(",{}", es[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// A located steady state with its drift residual and linear stability.
#[derive(Debug, Clone)]
pub struct SteadyStateReport {
    pub c: DVector<f64>,
    /// ‖drift(c)‖∞
    pub residual: f64,
    pub stable: bool,
    /// Eigenvalues of the drift Jacobian restricted to the stoichiometric
    /// subspace (conserved directions contribute structural zeros and are
    /// excluded).
    pub jacobian_eigs: Vec<Complex<f64>>,
}

fn map_rk_error(e: Rk45Error) -> DynamicsError {
    match e {
        Rk45Error::StepUnderflow { t, y } => DynamicsError::StepUnderflow {
            t,
            state: y.iter().copied().collect(),
        },
        Rk45Error::Rhs { t, message } => DynamicsError::NoConvergence {
            reason: format!("vector field failed at t = {t}: {message}"),
        },
        Rk45Error::Hook { t, message } => DynamicsError::NoConvergence {
            reason: format!("aborted at t = {t}: {message}"),
        },
    }
}

/// Integrate the deterministic dynamics ẋ = D_pH(x, 0) from x0 over [0, T].
/// States are clipped at zero (with a flag) to absorb rounding noise; the
/// mass-action drift points inward at the boundary.
pub fn integrate_ode(
    net: &Network,
    x0: &DVector<f64>,
    t_final: f64,
    tol: f64,
) -> Result<Path, DynamicsError> {
    crate::network::require_nonnegative(x0)?;
    if t_final <= 0.0 {
        return Err(DynamicsError::NonpositiveHorizon(t_final));
    }
    let mut clipped = false;
    let opts = Rk45Options::new(tol);
    let (times, states) = rk45::integrate(
        |_, y| Ok(drift(net, y)),
        |_, y| {
            for v in y.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    clipped = true;
                }
            }
            StepOutcome::Continue
        },
        0.0,
        x0.clone(),
        t_final,
        &opts,
    )
    .map_err(map_rk_error)?;
    Ok(Path {
        times,
        states,
        momenta: None,
        energies: None,
        clipped,
    })
}

/// Integrate Hamilton's equations ẋ = D_pH, ṗ = −D_xH from (x0, p0),
/// recording the energy at every step. Errors if the state leaves the
/// positive orthant or the energy drifts by more than 100·tol.
pub fn integrate_hamilton(
    net: &Network,
    x0: &DVector<f64>,
    p0: &DVector<f64>,
    t_final: f64,
    tol: f64,
) -> Result<Path, DynamicsError> {
    if t_final <= 0.0 {
        return Err(DynamicsError::NonpositiveHorizon(t_final));
    }
    let d = net.dim();
    if x0.iter().any(|&v| v <= 0.0) {
        return Err(DynamicsError::LeftPositiveOrthant {
            t: 0.0,
            index: x0.iter().position(|&v| v <= 0.0).unwrap(),
        });
    }
    let h0 = hamiltonian::eval_h(net, x0, p0)?.value;
    let bound = 100.0 * tol;

    let mut y0 = DVector::zeros(2 * d);
    y0.rows_mut(0, d).copy_from(x0);
    y0.rows_mut(d, d).copy_from(p0);

    // The hook cannot return structured errors through rk45, so remember the
    // failure and translate afterwards.
    let mut failure: Option<DynamicsError> = None;
    let opts = Rk45Options::new(tol);
    let result = rk45::integrate(
        |_, y| {
            let x = DVector::from(y.rows(0, d));
            let p = DVector::from(y.rows(d, d));
            if x.iter().any(|&v| v < 0.0) {
                return Err("state left positive orthant".to_string());
            }
            let h = hamiltonian::eval_h(net, &x, &p).map_err(|e| e.to_string())?;
            let mut dy = DVector::zeros(2 * d);
            dy.rows_mut(0, d).copy_from(&h.grad_p);
            dy.rows_mut(d, d).copy_from(&(-&h.grad_x));
            Ok(dy)
        },
        |t, y| {
            let x = DVector::from(y.rows(0, d));
            let p = DVector::from(y.rows(d, d));
            if let Some(i) = x.iter().position(|&v| v < 0.0) {
                failure = Some(DynamicsError::LeftPositiveOrthant { t, index: i });
                return StepOutcome::Abort("left positive orthant".into());
            }
            match hamiltonian::eval_h(net, &x, &p) {
                Ok(h) => {
                    let drift = (h.value - h0).abs();
                    if drift > bound {
                        failure = Some(DynamicsError::EnergyDrift { t, drift, bound });
                        return StepOutcome::Abort("energy drift".into());
                    }
                }
                Err(e) => {
                    failure = Some(DynamicsError::Hamiltonian(e));
                    return StepOutcome::Abort("hamiltonian evaluation failed".into());
                }
            }
            StepOutcome::Continue
        },
        0.0,
        y0,
        t_final,
        &opts,
    );
    let (times, ys) = match result {
        Ok(ok) => ok,
        Err(e) => return Err(failure.take().unwrap_or_else(|| map_rk_error(e))),
    };

    let mut states = Vec::with_capacity(ys.len());
    let mut momenta = Vec::with_capacity(ys.len());
    let mut energies = Vec::with_capacity(ys.len());
    for y in &ys {
        let x = DVector::from(y.rows(0, d));
        let p = DVector::from(y.rows(d, d));
        energies.push(hamiltonian::eval_h(net, &x, &p)?.value);
        states.push(x);
        momenta.push(p);
    }
    Ok(Path {
        times,
        states,
        momenta: Some(momenta),
        energies: Some(energies),
        clipped: false,
    })
}

/// Long-horizon integration to near-stationarity, then Newton restricted to
/// the stoichiometric compatibility class through x0, then an eigenvalue
/// stability classification on the restricted Jacobian.
pub fn find_steady_state(
    net: &Network,
    x0: &DVector<f64>,
) -> Result<SteadyStateReport, DynamicsError> {
    crate::network::require_nonnegative(x0)?;
    let class = compatibility_class(net, x0)?;

    // Phase 1: relax along the flow until the drift is small.
    let mut x = x0.clone();
    let mut horizon = 10.0;
    let mut total = 0.0;
    loop {
        let res = drift(net, &x).amax();
        if res < 1e-6 {
            break;
        }
        if total > 2e4 {
            return Err(DynamicsError::NoConvergence {
                reason: format!(
                    "drift residual still {res:.3e} after t = {total} (divergent or oscillatory)"
                ),
            });
        }
        let path = integrate_ode(net, &x, horizon, 1e-10)?;
        x = path.final_state().clone();
        if x.amax() > 1e9 {
            return Err(DynamicsError::NoConvergence {
                reason: format!("state norm {:.3e} diverged", x.amax()),
            });
        }
        total += horizon;
        horizon *= 2.0;
    }

    // Phase 2: Newton on the drift within the class: x <- x + B u with
    // (B^T J B) u = -(B^T drift).
    let basis = stoichiometric_basis(net);
    let d = net.dim();
    let r = basis.dim;
    let bmat = DMatrix::from_fn(d, r, |i, j| basis.basis[j][i]);
    for _ in 0..60 {
        let g = drift(net, &x);
        if g.amax() < 1e-13 {
            break;
        }
        let jac = drift_jacobian(net, &x);
        let reduced = bmat.transpose() * &jac * &bmat;
        let rhs = -(bmat.transpose() * &g);
        let du = reduced.lu().solve(&rhs).ok_or_else(|| {
            DynamicsError::NoConvergence {
                reason: "singular reduced Jacobian in Newton".to_string(),
            }
        })?;
        let mut step = 1.0;
        // Keep iterates in the orthant.
        loop {
            let cand = &x + &bmat * &du * step;
            if cand.iter().all(|&v| v >= 0.0) {
                x = cand;
                break;
            }
            step *= 0.5;
            if step < 1e-8 {
                return Err(DynamicsError::ConvergedToBoundary {
                    state: x.iter().copied().collect(),
                });
            }
        }
    }

    let residual = drift(net, &x).amax();
    if residual >= STEADY_STATE_RESIDUAL {
        return Err(DynamicsError::NoConvergence {
            reason: format!("Newton stalled at residual {residual:.3e}"),
        });
    }
    if x.iter().any(|&v| v < 1e-9) && x0.iter().any(|&v| v > 0.0) {
        return Err(DynamicsError::ConvergedToBoundary {
            state: x.iter().copied().collect(),
        });
    }
    if !class.contains(&x, 1e-7) {
        return Err(DynamicsError::NoConvergence {
            reason: "steady state left the compatibility class".to_string(),
        });
    }

    let jac = drift_jacobian(net, &x);
    let reduced = bmat.transpose() * &jac * &bmat;
    let eigs: Vec<Complex<f64>> = reduced.complex_eigenvalues().iter().copied().collect();
    let stable = eigs.iter().all(|e| e.re < 1e-8);
    Ok(SteadyStateReport {
        c: x,
        residual,
        stable,
        jacobian_eigs: eigs,
    })
}
