//! The combinatorial polytope potential g_P(y) = Σ aᵢ(y) ln aᵢ(y) with
//! aᵢ(y) = ⟨μᵢ, y⟩ − λᵢ, and its comparison against the quasipotential of a
//! complex-balanced network on a reparametrized compatibility class.

use super::QuasipotError;
use crate::balance::{complex_balance_residuals, lyapunov_v};
use crate::network::{conserved_vectors, Network};
use nalgebra::{DMatrix, DVector};

/// A convex polytope given by facet data: P = {y : ⟨μᵢ, y⟩ ≥ λᵢ}.
#[derive(Debug, Clone)]
pub struct PolytopeSpec {
    /// (μᵢ, λᵢ) pairs; μ entries are integers by convention.
    pub facets: Vec<(DVector<f64>, f64)>,
    pub dim: usize,
}

impl PolytopeSpec {
    pub fn facet_values(&self, y: &DVector<f64>) -> Vec<f64> {
        self.facets.iter().map(|(mu, lam)| mu.dot(y) - lam).collect()
    }

    pub fn contains_interior(&self, y: &DVector<f64>) -> bool {
        self.facet_values(y).iter().all(|&a| a > 0.0)
    }
}

/// g_P(y) = Σ aᵢ ln aᵢ over the facet functions (unweighted sum; scaling
/// conventions are absorbed by the comparison fit). Errors on or outside a
/// facet.
pub fn kahler_potential(spec: &PolytopeSpec, y: &DVector<f64>) -> Result<f64, QuasipotError> {
    let mut total = 0.0;
    for (i, a) in spec.facet_values(y).iter().enumerate() {
        if *a <= 0.0 {
            return Err(QuasipotError::OutsidePolytope {
                facet: i,
                value: *a,
            });
        }
        total += a * a.ln();
    }
    Ok(total)
}

/// Hessian of g_P: Σ μᵢ μᵢᵀ / aᵢ(y); positive definite on the interior.
pub fn kahler_hessian(
    spec: &PolytopeSpec,
    y: &DVector<f64>,
) -> Result<DMatrix<f64>, QuasipotError> {
    let mut hess = DMatrix::zeros(spec.dim, spec.dim);
    for (i, ((mu, _), a)) in spec
        .facets
        .iter()
        .zip(spec.facet_values(y).iter())
        .enumerate()
    {
        if *a <= 0.0 {
            return Err(QuasipotError::OutsidePolytope {
                facet: i,
                value: *a,
            });
        }
        hess += mu * mu.transpose() / *a;
    }
    Ok(hess)
}

/// Affine chart x = offset + matrix·y mapping polytope coordinates into the
/// compatibility class.
#[derive(Debug, Clone)]
pub struct AffineChart {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl AffineChart {
    pub fn apply(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.matrix * y
    }
}

/// Result of fitting s·g_P + t to the quasipotential on a grid.
#[derive(Debug, Clone)]
pub struct KahlerComparison {
    pub scale: f64,
    pub offset: f64,
    pub max_deviation: f64,
    pub grid_size: usize,
}

/// Compare Q(x(y)) = V(c, x(y)) against the Kähler potential on a grid of
/// interior polytope points, fitting scale and offset by least squares.
/// The network must be complex-balanced at c and the chart image must stay
/// in the compatibility class of c.
pub fn compare_q_to_kahler(
    net: &Network,
    c: &DVector<f64>,
    spec: &PolytopeSpec,
    chart: &AffineChart,
    ys: &[DVector<f64>],
) -> Result<KahlerComparison, QuasipotError> {
    let report = complex_balance_residuals(net, c)?;
    if !report.balanced {
        return Err(QuasipotError::InvalidProblem(
            "Kähler comparison requires a complex-balanced network".to_string(),
        ));
    }
    let ws = conserved_vectors(net);
    let targets: Vec<f64> = ws.iter().map(|w| w.dot(c)).collect();

    let interior: Vec<&DVector<f64>> =
        ys.iter().filter(|y| spec.contains_interior(y)).collect();
    if interior.len() < 3 {
        return Err(QuasipotError::InvalidProblem(format!(
            "need at least 3 interior grid points, got {}",
            interior.len()
        )));
    }

    let mut g_vals = Vec::with_capacity(interior.len());
    let mut q_vals = Vec::with_capacity(interior.len());
    for y in &interior {
        let x = chart.apply(y);
        for (w, &tv) in ws.iter().zip(targets.iter()) {
            let violation = (w.dot(&x) - tv).abs();
            if violation > 1e-9 * (1.0 + tv.abs()) {
                return Err(QuasipotError::ChartLeavesClass { violation });
            }
        }
        if x.iter().any(|&v| v < 0.0) {
            return Err(QuasipotError::InvalidProblem(
                "chart image leaves the nonnegative orthant".to_string(),
            ));
        }
        g_vals.push(kahler_potential(spec, y)?);
        q_vals.push(lyapunov_v(c, &x));
    }

    // Least-squares fit q ~ s*g + t.
    let n = g_vals.len() as f64;
    let mean_g: f64 = g_vals.iter().sum::<f64>() / n;
    let mean_q: f64 = q_vals.iter().sum::<f64>() / n;
    let var_g: f64 = g_vals.iter().map(|g| (g - mean_g) * (g - mean_g)).sum::<f64>();
    if var_g < 1e-20 {
        return Err(QuasipotError::DegenerateChart);
    }
    let cov: f64 = g_vals
        .iter()
        .zip(q_vals.iter())
        .map(|(g, q)| (g - mean_g) * (q - mean_q))
        .sum();
    let scale = cov / var_g;
    let offset = mean_q - scale * mean_g;
    let max_deviation = g_vals
        .iter()
        .zip(q_vals.iter())
        .map(|(g, q)| (q - scale * g - offset).abs())
        .fold(0.0, f64::max);
    Ok(KahlerComparison {
        scale,
        offset,
        max_deviation,
        grid_size: interior.len(),
    })
}
