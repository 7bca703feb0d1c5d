//! Stoichiometric subspace, compatibility classes, and weak reversibility.

use super::{Network, NetworkError, RANK_TOL};
use nalgebra::DVector;

/// Orthonormal basis of the span of the reaction vectors.
#[derive(Debug, Clone)]
pub struct StoichiometricBasis {
    pub basis: Vec<DVector<f64>>,
    pub dim: usize,
}

impl StoichiometricBasis {
    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for b in &self.basis {
            out += b * b.dot(v);
        }
        out
    }

    /// Component of `v` orthogonal to the subspace.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.project(v)
    }
}

/// Orthonormalized span of the reaction vectors; rank decided by pivoted
/// Gram-Schmidt with tolerance [`RANK_TOL`].
pub fn stoichiometric_basis(net: &Network) -> StoichiometricBasis {
    let d = net.dim();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in net.reactions() {
        let mut v = r.vector_f64();
        let norm0 = v.norm();
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        // Re-orthogonalize once; classical Gram-Schmidt loses orthogonality
        // for near-dependent inputs.
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        if v.norm() > RANK_TOL * norm0.max(1.0) {
            let n = v.norm();
            basis.push(v / n);
        }
        if basis.len() == d {
            break;
        }
    }
    let dim = basis.len();
    StoichiometricBasis { basis, dim }
}

/// Orthonormal basis of the orthogonal complement of the stoichiometric
/// subspace: the conserved linear quantities ⟨w, x⟩.
pub fn conserved_vectors(net: &Network) -> Vec<DVector<f64>> {
    let d = net.dim();
    let stoich = stoichiometric_basis(net);
    let mut conserved: Vec<DVector<f64>> = Vec::new();
    for i in 0..d {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        for b in &stoich.basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        for b in &conserved {
            let c = b.dot(&v);
            v -= b * c;
        }
        // Second pass for numerical orthogonality.
        for b in stoich.basis.iter().chain(conserved.iter()) {
            let c = b.dot(&v);
            v -= b * c;
        }
        if v.norm() > RANK_TOL {
            let n = v.norm();
            conserved.push(v / n);
        }
    }
    conserved
}

/// The stoichiometric compatibility class through an anchor point: the
/// affine slice anchor + span{ζ} intersected with the nonnegative orthant.
#[derive(Debug, Clone)]
pub struct CompatibilityClass {
    pub anchor: DVector<f64>,
    pub basis: StoichiometricBasis,
    /// Conserved directions with their anchored values ⟨w, x(0)⟩.
    pub conserved: Vec<(DVector<f64>, f64)>,
}

impl CompatibilityClass {
    /// Membership: x ≥ 0 and every conserved quantity matches the anchor.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.iter().any(|&v| v < -tol) {
            return false;
        }
        self.conserved
            .iter()
            .all(|(w, val)| (w.dot(x) - val).abs() <= tol * (1.0 + val.abs()))
    }
}

/// Build the compatibility class through `x0` (requires x0 ≥ 0).
pub fn compatibility_class(
    net: &Network,
    x0: &DVector<f64>,
) -> Result<CompatibilityClass, NetworkError> {
    super::require_nonnegative(x0)?;
    let basis = stoichiometric_basis(net);
    let conserved = conserved_vectors(net)
        .into_iter()
        .map(|w| {
            let val = w.dot(x0);
            (w, val)
        })
        .collect();
    Ok(CompatibilityClass {
        anchor: x0.clone(),
        basis,
        conserved,
    })
}

/// True iff every reaction's endpoints lie in the same strongly connected
/// component of the complex digraph (nodes = complexes, edges = reactions).
pub fn is_weakly_reversible(net: &Network) -> bool {
    let n = net.complexes().len();
    let index_of = |c: &super::Complex| net.complexes().iter().position(|d| d == c).unwrap();
    let mut adj = vec![Vec::new(); n];
    let mut edges = Vec::new();
    for r in net.reactions() {
        let a = index_of(&r.reactant);
        let b = index_of(&r.product);
        adj[a].push(b);
        edges.push((a, b));
    }
    let comp = tarjan_scc(&adj);
    edges.iter().all(|&(a, b)| comp[a] == comp[b])
}

/// Tarjan's strongly connected components; returns a component id per node.
pub(crate) fn tarjan_scc(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comp = vec![usize::MAX; n];
    let mut next_index = 0usize;
    let mut next_comp = 0usize;

    // Iterative DFS: (node, child position) frames.
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut frames: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut ci)) = frames.last_mut() {
            if *ci == 0 {
                index[v] = next_index;
                lowlink[v] = next_index;
                next_index += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if *ci < adj[v].len() {
                let w = adj[v][*ci];
                *ci += 1;
                if index[w] == usize::MAX {
                    frames.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                frames.pop();
                if let Some(&(parent, _)) = frames.last() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}
