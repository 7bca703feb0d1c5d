//! Complex balance, the Horn-Jackson function V(c, x), and steady-state HJB
//! residuals.
//!
//! A state c balances a complex z when the total mass-action flow into z
//! equals the flow out of it. Balancing every complex is stronger than being
//! a steady state (which only balances every species) and is exactly the
//! condition under which V(c, x) = Σ cᵢ ℓ(xᵢ/cᵢ) solves the steady-state
//! HJB H(x, D_xV) = 0.

use crate::dynamics::{self, DynamicsError};
use crate::hamiltonian::{self, HamiltonianError};
use crate::network::{Complex, Network, NetworkError};
use crate::special::entropy_kernel;
use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

/// Default relative tolerance on per-complex residuals.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("complex balance requires a strictly positive state; component {index} is {value}")]
    NotPositive { index: usize, value: f64 },
    #[error("gradient of V undefined at the boundary: species `{species}` vanishes")]
    GradientAtBoundary { species: String },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Hamiltonian(#[from] HamiltonianError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Inflow-minus-outflow per complex at a candidate state.
#[derive(Debug, Clone, Serialize)]
pub struct ComplexBalanceReport {
    pub c: Vec<f64>,
    /// One entry per complex, in [`Network::complexes`] order: rendered
    /// complex, inflow, outflow, residual = inflow − outflow.
    pub per_complex: Vec<ComplexResidual>,
    pub balanced: bool,
    pub tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComplexResidual {
    pub complex: String,
    pub inflow: f64,
    pub outflow: f64,
    pub residual: f64,
}

impl ComplexBalanceReport {
    pub fn max_abs_residual(&self) -> f64 {
        self.per_complex
            .iter()
            .map(|r| r.residual.abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

fn complex_label(net: &Network, z: &Complex) -> String {
    if z.is_empty_complex() {
        return "0".to_string();
    }
    let mut parts = Vec::new();
    for (i, &cnt) in z.0.iter().enumerate() {
        match cnt {
            0 => {}
            1 => parts.push(net.species()[i].clone()),
            _ => parts.push(format!("{cnt} {}", net.species()[i])),
        }
    }
    parts.join(" + ")
}

/// Evaluate the complex-balance residuals at c > 0: for each complex z,
/// Σ_{a:(a,z)} κ_{a,z} c^a − Σ_{b:(z,b)} κ_{z,b} c^z. Balanced when every
/// residual is below `tol` relative to the larger of the two flows.
pub fn complex_balance_residuals(
    net: &Network,
    c: &DVector<f64>,
) -> Result<ComplexBalanceReport, BalanceError> {
    for (i, &v) in c.iter().enumerate() {
        if v <= 0.0 {
            return Err(BalanceError::NotPositive { index: i, value: v });
        }
    }
    let mut per_complex = Vec::with_capacity(net.complexes().len());
    let mut balanced = true;
    for z in net.complexes() {
        let mut inflow = 0.0;
        let mut outflow = 0.0;
        for r in net.reactions() {
            if &r.product == z {
                inflow += r.rate * r.reactant.monomial(c);
            }
            if &r.reactant == z {
                outflow += r.rate * z.monomial(c);
            }
        }
        let residual = inflow - outflow;
        let scale = inflow.max(outflow).max(f64::MIN_POSITIVE);
        if residual.abs() > BALANCE_TOL * scale {
            balanced = false;
        }
        per_complex.push(ComplexResidual {
            complex: complex_label(net, z),
            inflow,
            outflow,
            residual,
        });
    }
    Ok(ComplexBalanceReport {
        c: c.iter().copied().collect(),
        per_complex,
        balanced,
        tol: BALANCE_TOL,
    })
}

/// The Horn-Jackson function V(c, x) = Σ cᵢ ℓ(xᵢ/cᵢ) with
/// ℓ(z) = z ln z − z + 1. Terms with xᵢ = 0 contribute cᵢ.
pub fn lyapunov_v(c: &DVector<f64>, x: &DVector<f64>) -> f64 {
    c.iter()
        .zip(x.iter())
        .map(|(&ci, &xi)| ci * entropy_kernel(xi / ci))
        .sum()
}

/// Gradient of V: ∂V/∂xᵢ = ln(xᵢ/cᵢ); only defined for x > 0.
pub fn lyapunov_grad(
    net: &Network,
    c: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>, BalanceError> {
    for (i, &v) in x.iter().enumerate() {
        if v <= 0.0 {
            return Err(BalanceError::GradientAtBoundary {
                species: net.species()[i].clone(),
            });
        }
    }
    Ok(DVector::from_iterator(
        c.len(),
        c.iter().zip(x.iter()).map(|(&ci, &xi)| (xi / ci).ln()),
    ))
}

/// The steady-state HJB residual H(x, gradV(x)) for a candidate gradient
/// field. Zero on the class identifies gradV as the quasipotential gradient.
pub fn hjb_residual<F>(net: &Network, grad_v: F, x: &DVector<f64>) -> Result<f64, BalanceError>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>, BalanceError>,
{
    let g = grad_v(x)?;
    Ok(hamiltonian::eval_h(net, x, &g)?.value)
}

/// Verdict plus certificate: locate the steady state in the class of x0 and
/// evaluate the complex-balance residuals there.
pub fn is_complex_balanced_network(
    net: &Network,
    x0: &DVector<f64>,
) -> Result<(bool, ComplexBalanceReport), BalanceError> {
    let steady = dynamics::find_steady_state(net, x0)?;
    let report = complex_balance_residuals(net, &steady.c)?;
    Ok((report.balanced, report))
}
