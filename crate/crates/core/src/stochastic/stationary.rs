//! Stationary distributions of the truncated scale-n chain.
//!
//! The truncation is reflecting: transitions that would cross a cap are
//! dropped, which redirects their rate into holding still. The stationary
//! equation πQ = 0 with π·1 = 1 is solved by the Grassmann-Taksar-Heyman
//! elimination, which is subtraction-free and therefore stable down to the
//! tail masses this module is asked to resolve (total variation checks at
//! 1e-8). Supports too large for a dense elimination fall back to
//! uniformized power iteration on the sparse transition structure.

use super::{intensities_counts, to_counts, Distribution, StochasticError};
use crate::balance::complex_balance_residuals;
use crate::network::{conserved_vectors, Network};
use crate::special::ln_factorial;
use nalgebra::DVector;
use std::collections::HashMap;

/// Hard cap on truncated supports.
pub const MAX_STATES: usize = 2_000_000;
/// Largest support handed to the dense GTH elimination.
const GTH_MAX: usize = 4096;

/// Stationary distribution of the reflecting truncation over the full box
/// Π [0, capᵢ]. Errors if the truncated chain has more than one closed
/// communicating class (the classes are reported) or if a state's entire
/// outflow is redirected by the caps.
pub fn stationary_truncated(
    net: &Network,
    n: u64,
    caps: &[u64],
) -> Result<Distribution, StochasticError> {
    let states = enumerate_box(caps)?;
    solve_on_support(net, n, caps, states)
}

/// Same as [`stationary_truncated`] but restricted to the states reachable
/// from an anchor lattice point; this is how a single compatibility class is
/// solved when conservation laws split the box into many closed classes.
pub fn stationary_truncated_from(
    net: &Network,
    n: u64,
    caps: &[u64],
    anchor: &DVector<f64>,
) -> Result<Distribution, StochasticError> {
    let start = to_counts(anchor, n)?;
    for (i, (&k, &cap)) in start.iter().zip(caps.iter()).enumerate() {
        if k > cap {
            return Err(StochasticError::OffLattice {
                index: i,
                value: anchor[i],
                n,
            });
        }
    }
    let zetas: Vec<Vec<i64>> = net.reactions().iter().map(|r| r.vector()).collect();
    let mut states = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut queue = std::collections::VecDeque::new();
    seen.insert(start.clone(), 0);
    states.push(start);
    queue.push_back(0usize);
    while let Some(i) = queue.pop_front() {
        let here = states[i].clone();
        let lambdas = intensities_counts(net, n, &here);
        for (r, &lam) in lambdas.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            if let Some(next) = apply_jump(&here, &zetas[r], caps) {
                if !seen.contains_key(&next) {
                    if states.len() >= MAX_STATES {
                        return Err(StochasticError::TooManyStates {
                            count: states.len() + 1,
                            max: MAX_STATES,
                        });
                    }
                    seen.insert(next.clone(), states.len());
                    states.push(next);
                    queue.push_back(states.len() - 1);
                }
            }
        }
    }
    solve_on_support(net, n, caps, states)
}

fn enumerate_box(caps: &[u64]) -> Result<Vec<Vec<u64>>, StochasticError> {
    let mut total: usize = 1;
    for &c in caps {
        total = total.saturating_mul(c as usize + 1);
        if total > MAX_STATES {
            return Err(StochasticError::TooManyStates {
                count: total,
                max: MAX_STATES,
            });
        }
    }
    let mut states = Vec::with_capacity(total);
    let mut cur = vec![0u64; caps.len()];
    loop {
        states.push(cur.clone());
        let mut i = 0;
        loop {
            if i == caps.len() {
                return Ok(states);
            }
            if cur[i] < caps[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
            i += 1;
        }
    }
}

fn apply_jump(counts: &[u64], zeta: &[i64], caps: &[u64]) -> Option<Vec<u64>> {
    let mut out = Vec::with_capacity(counts.len());
    for ((&k, &dz), &cap) in counts.iter().zip(zeta.iter()).zip(caps.iter()) {
        let v = k as i64 + dz;
        if v < 0 || v as u64 > cap {
            return None;
        }
        out.push(v as u64);
    }
    Some(out)
}

fn solve_on_support(
    net: &Network,
    n: u64,
    caps: &[u64],
    states: Vec<Vec<u64>>,
) -> Result<Distribution, StochasticError> {
    let m = states.len();
    if m > MAX_STATES {
        return Err(StochasticError::TooManyStates {
            count: m,
            max: MAX_STATES,
        });
    }
    let index: HashMap<Vec<u64>, usize> = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();
    let zetas: Vec<Vec<i64>> = net.reactions().iter().map(|r| r.vector()).collect();

    // Kept transitions under the reflecting truncation. States whose entire
    // outflow was redirected by the caps are only an error if the stationary
    // mass actually concentrates there (checked after the class analysis).
    let mut edges: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut artificially_absorbing = vec![false; m];
    for (i, s) in states.iter().enumerate() {
        let lambdas = intensities_counts(net, n, s);
        let mut natural = 0.0;
        let mut kept = 0.0;
        for (r, &lam) in lambdas.iter().enumerate() {
            if lam <= 0.0 {
                continue;
            }
            let rate = lam * n as f64;
            natural += rate;
            if let Some(next) = apply_jump(s, &zetas[r], caps) {
                if let Some(&j) = index.get(&next) {
                    edges[i].push((j, rate));
                    kept += rate;
                }
            }
        }
        if natural > 0.0 && kept == 0.0 {
            artificially_absorbing[i] = true;
        }
    }

    // Closed communicating classes of the kept digraph.
    let adj: Vec<Vec<usize>> = edges
        .iter()
        .map(|es| es.iter().map(|&(j, _)| j).collect())
        .collect();
    let comp = crate::network::tarjan_scc(&adj);
    let ncomp = comp.iter().copied().max().map(|c| c + 1).unwrap_or(0);
    let mut closed = vec![true; ncomp];
    for (i, es) in edges.iter().enumerate() {
        for &(j, _) in es {
            if comp[j] != comp[i] {
                closed[comp[i]] = false;
            }
        }
    }
    let closed_ids: Vec<usize> = (0..ncomp).filter(|&c| closed[c]).collect();
    if closed_ids.len() > 1 {
        let classes = closed_ids
            .iter()
            .map(|&c| {
                states
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| comp[i] == c)
                    .map(|(_, s)| s.clone())
                    .collect()
            })
            .collect();
        return Err(StochasticError::Reducible { classes });
    }
    let target = closed_ids[0];

    // Solve on the closed class; transient states carry zero mass.
    let class: Vec<usize> = (0..m).filter(|&i| comp[i] == target).collect();
    if let Some(&bad) = class.iter().find(|&&i| artificially_absorbing[i]) {
        return Err(StochasticError::DegenerateTruncation {
            state: states[bad].clone(),
        });
    }
    let local: HashMap<usize, usize> = class
        .iter()
        .enumerate()
        .map(|(li, &gi)| (gi, li))
        .collect();
    let mc = class.len();
    let class_edges: Vec<Vec<(usize, f64)>> = class
        .iter()
        .map(|&gi| {
            edges[gi]
                .iter()
                .filter_map(|&(j, rate)| local.get(&j).map(|&lj| (lj, rate)))
                .collect()
        })
        .collect();
    let pi_class = if mc <= GTH_MAX {
        gth(&class_edges)?
    } else {
        uniformized_power(&class_edges)?
    };

    let mut log_w = vec![f64::NEG_INFINITY; m];
    for (li, &gi) in class.iter().enumerate() {
        log_w[gi] = pi_class[li].max(f64::MIN_POSITIVE).ln();
    }
    Ok(Distribution::from_log_weights(n, states, log_w))
}

/// Grassmann-Taksar-Heyman elimination on a dense copy of the rates.
/// No subtractions: every update is a sum of nonnegative terms.
fn gth(edges: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, StochasticError> {
    let m = edges.len();
    if m == 0 {
        return Err(StochasticError::SolveFailed("empty class".to_string()));
    }
    if m == 1 {
        return Ok(vec![1.0]);
    }
    let mut r = vec![0.0f64; m * m];
    for (i, es) in edges.iter().enumerate() {
        for &(j, rate) in es {
            r[i * m + j] += rate;
        }
    }
    // Exit rates toward lower-indexed states at elimination time; needed
    // again in the backsubstitution.
    let mut s_vals = vec![0.0f64; m];
    for k in (1..m).rev() {
        let s: f64 = r[k * m..k * m + k].iter().sum();
        if s <= 0.0 {
            return Err(StochasticError::SolveFailed(format!(
                "state {k} cannot reach lower-indexed states (class not strongly connected)"
            )));
        }
        s_vals[k] = s;
        for i in 0..k {
            let f = r[i * m + k] / s;
            if f > 0.0 {
                for j in 0..k {
                    if j != i {
                        r[i * m + j] += f * r[k * m + j];
                    }
                }
            }
        }
    }
    let mut pi = vec![0.0f64; m];
    pi[0] = 1.0;
    for k in 1..m {
        let mut acc = 0.0;
        for i in 0..k {
            acc += pi[i] * r[i * m + k];
        }
        pi[k] = acc / s_vals[k];
    }
    let total: f64 = pi.iter().sum();
    for v in &mut pi {
        *v /= total;
    }
    Ok(pi)
}

/// Power iteration on the uniformized chain P = I + Q/Λ for supports too
/// large to eliminate densely.
fn uniformized_power(edges: &[Vec<(usize, f64)>]) -> Result<Vec<f64>, StochasticError> {
    let m = edges.len();
    let out_rate: Vec<f64> = edges
        .iter()
        .map(|es| es.iter().map(|&(_, r)| r).sum())
        .collect();
    let lam = out_rate.iter().copied().fold(0.0, f64::max) * 1.05 + 1e-12;
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0f64; m];
    for _ in 0..2_000_000 {
        for v in next.iter_mut() {
            *v = 0.0;
        }
        for (i, es) in edges.iter().enumerate() {
            let stay = pi[i] * (1.0 - out_rate[i] / lam);
            next[i] += stay;
            for &(j, rate) in es {
                next[j] += pi[i] * rate / lam;
            }
        }
        let diff: f64 = pi
            .iter()
            .zip(next.iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        std::mem::swap(&mut pi, &mut next);
        if diff < 1e-14 {
            return Ok(pi);
        }
    }
    Err(StochasticError::SolveFailed(
        "uniformized power iteration did not converge".to_string(),
    ))
}

/// Caps with product-form tail mass below ~1e-12: mean + 12 standard
/// deviations plus a fixed margin, per species.
fn default_caps(n: u64, c: &DVector<f64>) -> Vec<u64> {
    c.iter()
        .map(|&ci| {
            let mean = n as f64 * ci;
            (mean + 12.0 * mean.sqrt() + 50.0).ceil() as u64
        })
        .collect()
}

/// Product-form stationary law for a complex-balanced state c:
/// log πⁿ(x) = Σᵢ [−n cᵢ + n xᵢ ln(n cᵢ) − ln((n xᵢ)!)], restricted to the
/// lattice slice of the compatibility class through c and renormalized
/// there. `caps` defaults to a tail-mass bound of ~1e-12 per species but
/// can be widened to cover far-tail query points.
pub fn product_form_stationary(
    net: &Network,
    n: u64,
    c: &DVector<f64>,
    caps: Option<&[u64]>,
) -> Result<Distribution, StochasticError> {
    let report = complex_balance_residuals(net, c)?;
    if !report.balanced {
        return Err(StochasticError::NotComplexBalanced);
    }
    let caps: Vec<u64> = match caps {
        Some(c) => c.to_vec(),
        None => default_caps(n, c),
    };

    // Conserved constraints select the lattice slice of the class.
    let ws = conserved_vectors(net);
    let targets: Vec<f64> = ws.iter().map(|w| n as f64 * w.dot(c)).collect();

    let mut box_cells: usize = 1;
    for &cap in &caps {
        box_cells = box_cells.saturating_mul(cap as usize + 1);
        if box_cells > 100_000_000 {
            return Err(StochasticError::TooManyStates {
                count: box_cells,
                max: 100_000_000,
            });
        }
    }

    let d = net.dim();
    let mut states: Vec<Vec<u64>> = Vec::new();
    let mut log_w: Vec<f64> = Vec::new();
    let mut cur = vec![0u64; d];
    'outer: loop {
        let in_class = ws.iter().zip(targets.iter()).all(|(w, &tv)| {
            let dot: f64 = w
                .iter()
                .zip(cur.iter())
                .map(|(&wi, &ki)| wi * ki as f64)
                .sum();
            (dot - tv).abs() <= 1e-6 * (1.0 + tv.abs())
        });
        if in_class {
            let mut lw = 0.0;
            for (i, &ki) in cur.iter().enumerate() {
                let mean = n as f64 * c[i];
                lw += -mean + ki as f64 * mean.ln() - ln_factorial(ki);
            }
            states.push(cur.clone());
            log_w.push(lw);
            if states.len() > MAX_STATES {
                return Err(StochasticError::TooManyStates {
                    count: states.len(),
                    max: MAX_STATES,
                });
            }
        }
        let mut i = 0;
        loop {
            if i == d {
                break 'outer;
            }
            if cur[i] < caps[i] {
                cur[i] += 1;
                break;
            }
            cur[i] = 0;
            i += 1;
        }
    }
    if states.is_empty() {
        return Err(StochasticError::SolveFailed(
            "no lattice states in the compatibility class slice".to_string(),
        ));
    }
    Ok(Distribution::from_log_weights(n, states, log_w))
}
