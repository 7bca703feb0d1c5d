//! The scaled jump Markov process: exact simulation, truncated stationary
//! solves, product-form stationary laws, and the −(1/n) log scaling limit.
//!
//! States of the scale-n process live on the lattice n⁻¹ℤ₊ᵈ and are stored
//! as integer count vectors (the lattice point times n), which keeps jump
//! arithmetic exact. All stationary mass is kept in natural-log space;
//! factorials at scale n = 10⁴ overflow f64 long before the regimes of
//! interest.

mod stationary;

pub use stationary::{product_form_stationary, stationary_truncated, stationary_truncated_from};

use crate::network::{Network, NetworkError};
use crate::rng::Rng;
use nalgebra::DVector;
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

/// Hard cap on simulated jumps; reached means the path is truncated and
/// flagged.
pub const MAX_JUMPS: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum StochasticError {
    #[error("component {index} = {value} is not on the lattice (n = {n})")]
    OffLattice { index: usize, value: f64, n: u64 },
    #[error("horizon must be positive, got {0}")]
    NonpositiveHorizon(f64),
    #[error("truncated state space has {count} states, above the limit {max}")]
    TooManyStates { count: usize, max: usize },
    #[error("truncated chain is reducible: {} closed classes", classes.len())]
    Reducible { classes: Vec<Vec<Vec<u64>>> },
    #[error("degenerate truncation: state {state:?} has positive outflow entirely redirected by the caps (no stationary distribution in the truncation sense)")]
    DegenerateTruncation { state: Vec<u64> },
    #[error("product-form stationary law requires a complex-balanced state")]
    NotComplexBalanced,
    #[error("state {counts:?} is outside the distribution support")]
    NotInSupport { counts: Vec<u64> },
    #[error("stationary solve failed: {0}")]
    SolveFailed(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Balance(#[from] crate::balance::BalanceError),
}

/// Convert a scaled lattice point x ∈ n⁻¹ℤ₊ᵈ to integer counts, rejecting
/// off-lattice inputs (tolerance 1e-9 on each component times n).
pub fn to_counts(x: &DVector<f64>, n: u64) -> Result<Vec<u64>, StochasticError> {
    let mut counts = Vec::with_capacity(x.len());
    for (i, &v) in x.iter().enumerate() {
        let scaled = v * n as f64;
        let k = scaled.round();
        if (scaled - k).abs() > 1e-9 || k < 0.0 {
            return Err(StochasticError::OffLattice {
                index: i,
                value: v,
                n,
            });
        }
        counts.push(k as u64);
    }
    Ok(counts)
}

/// Scaled intensities λⁿ at integer counts k = n·x:
/// λⁿ_{a,b} = κ_{a,b} n^{−|a|} Π (kᵢ)(kᵢ−1)…(kᵢ−aᵢ+1), zero when any
/// kᵢ < aᵢ. Computed as a product of (kᵢ − j)/n factors so nothing
/// overflows. The process jumps at rate n·λⁿ.
pub fn intensities_counts(net: &Network, n: u64, counts: &[u64]) -> Vec<f64> {
    net.reactions()
        .iter()
        .map(|r| {
            let mut acc = r.rate;
            for (i, &a) in r.reactant.0.iter().enumerate() {
                let k = counts[i];
                if k < a as u64 {
                    return 0.0;
                }
                for j in 0..a as u64 {
                    acc *= (k - j) as f64 / n as f64;
                }
            }
            acc
        })
        .collect()
}

/// Scaled intensities at a lattice point given in concentration units.
pub fn intensities(
    net: &Network,
    n: u64,
    x: &DVector<f64>,
) -> Result<Vec<f64>, StochasticError> {
    Ok(intensities_counts(net, n, &to_counts(x, n)?))
}

/// A realization of the scale-n jump process. States are integer counts;
/// divide by n for lattice coordinates.
#[derive(Debug, Clone)]
pub struct JumpPath {
    pub n: u64,
    pub seed: u64,
    /// Jump instants, starting with 0.0 for the initial state.
    pub times: Vec<f64>,
    /// Count vector after each jump; same length as `times`.
    pub counts: Vec<Vec<u64>>,
    /// True when the jump cap fired and the path is partial.
    pub truncated: bool,
}

impl JumpPath {
    /// Scaled state right-continuously in effect at time t.
    pub fn value_at(&self, t: f64) -> DVector<f64> {
        let idx = match self
            .times
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        };
        self.state_scaled(idx)
    }

    pub fn state_scaled(&self, idx: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.counts[idx].len(),
            self.counts[idx].iter().map(|&k| k as f64 / self.n as f64),
        )
    }

    /// CSV with columns t, x_1..x_d in lattice (concentration) units.
    pub fn to_csv(&self) -> String {
        let d = self.counts[0].len();
        let mut out = String::from("t");
        for i in 1..=d {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for (t, counts) in self.times.iter().zip(self.counts.iter()) {
            out.push_str(&format!("{t}"));
            for &k in counts {
                out.push_str(&format!(",{}", k as f64 / self.n as f64));
            }
            out.push('\n');
        }
        out
    }
}

/// Exact stochastic simulation (direct method): exponential holding time at
/// the total rate n·Σλⁿ, categorical reaction choice proportional to λⁿ.
/// Bit-reproducible for a given seed.
pub fn ssa_simulate(
    net: &Network,
    n: u64,
    x0: &DVector<f64>,
    t_final: f64,
    seed: u64,
) -> Result<JumpPath, StochasticError> {
    ssa_simulate_capped(net, n, x0, t_final, seed, MAX_JUMPS)
}

fn ssa_simulate_capped(
    net: &Network,
    n: u64,
    x0: &DVector<f64>,
    t_final: f64,
    seed: u64,
    max_jumps: u64,
) -> Result<JumpPath, StochasticError> {
    if t_final <= 0.0 {
        return Err(StochasticError::NonpositiveHorizon(t_final));
    }
    let mut counts = to_counts(x0, n)?;
    let mut rng = Rng::new(seed);
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut path_counts = vec![counts.clone()];
    let mut truncated = false;
    let zetas: Vec<Vec<i64>> = net.reactions().iter().map(|r| r.vector()).collect();
    let mut jumps = 0u64;
    loop {
        let lambdas = intensities_counts(net, n, &counts);
        let total_rate: f64 = lambdas.iter().sum::<f64>() * n as f64;
        if total_rate <= 0.0 {
            // Absorbing state: nothing happens until the horizon.
            break;
        }
        let tau = rng.exponential(total_rate);
        if t + tau > t_final {
            break;
        }
        t += tau;
        // Categorical choice proportional to the intensities.
        let u = rng.unit() * lambdas.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut chosen = lambdas.len() - 1;
        for (i, &l) in lambdas.iter().enumerate() {
            acc += l;
            if u < acc {
                chosen = i;
                break;
            }
        }
        for (i, &dz) in zetas[chosen].iter().enumerate() {
            counts[i] = (counts[i] as i64 + dz) as u64;
        }
        times.push(t);
        path_counts.push(counts.clone());
        jumps += 1;
        if jumps >= max_jumps {
            truncated = true;
            break;
        }
    }
    Ok(JumpPath {
        n,
        seed,
        times,
        counts: path_counts,
        truncated,
    })
}

/// Run independent SSA realizations in parallel, one RNG stream per seed.
pub fn ssa_ensemble(
    net: &Network,
    n: u64,
    x0: &DVector<f64>,
    t_final: f64,
    seeds: &[u64],
) -> Result<Vec<JumpPath>, StochasticError> {
    seeds
        .par_iter()
        .map(|&seed| ssa_simulate(net, n, x0, t_final, seed))
        .collect()
}

/// A probability mass function over a truncated scaled lattice, stored in
/// log space and normalized so Σ exp(log_mass) = 1.
#[derive(Debug, Clone)]
pub struct Distribution {
    pub n: u64,
    states: Vec<Vec<u64>>,
    index: HashMap<Vec<u64>, usize>,
    log_mass: Vec<f64>,
}

impl Distribution {
    /// Build from unnormalized log weights (−∞ allowed for zero mass).
    pub fn from_log_weights(n: u64, states: Vec<Vec<u64>>, mut log_w: Vec<f64>) -> Self {
        let log_z = log_sum_exp(&log_w);
        for w in &mut log_w {
            *w -= log_z;
        }
        let index = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        Distribution {
            n,
            states,
            index,
            log_mass: log_w,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<u64>] {
        &self.states
    }

    pub fn log_mass_at(&self, counts: &[u64]) -> Option<f64> {
        self.index.get(counts).map(|&i| self.log_mass[i])
    }

    pub fn mass_at(&self, counts: &[u64]) -> Option<f64> {
        self.log_mass_at(counts).map(f64::exp)
    }

    /// Total probability (should be 1 up to rounding; exposed for checks).
    pub fn total_mass(&self) -> f64 {
        self.log_mass.iter().map(|&l| l.exp()).sum()
    }

    /// The most probable state. Exact ties (Poisson laws with integer mean
    /// have two) resolve to the later state in enumeration order, so the
    /// mode of Poisson(n·c) reports n·c rather than n·c − 1.
    pub fn mode(&self) -> &[u64] {
        let max = self
            .log_mass
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let mut best = 0;
        for (i, &lm) in self.log_mass.iter().enumerate() {
            if lm >= max - 1e-12 {
                best = i;
            }
        }
        &self.states[best]
    }

    /// −(1/n) log πⁿ(x) at a lattice point given in concentration units.
    /// Zero-mass states report +∞.
    pub fn scaled_log_limit(&self, x: &DVector<f64>) -> Result<f64, StochasticError> {
        let counts = to_counts(x, self.n)?;
        match self.log_mass_at(&counts) {
            Some(lm) if lm.is_finite() => Ok(-lm / self.n as f64),
            Some(_) => Ok(f64::INFINITY),
            None => Err(StochasticError::NotInSupport { counts }),
        }
    }

    /// Total variation distance, ½ Σ |p − q| over the union of supports.
    pub fn total_variation(&self, other: &Distribution) -> f64 {
        assert_eq!(self.n, other.n, "distributions live on different lattices");
        let mut tv = 0.0;
        for (s, &lm) in self.states.iter().zip(self.log_mass.iter()) {
            let p = lm.exp();
            let q = other.mass_at(s).unwrap_or(0.0);
            tv += (p - q).abs();
        }
        for (s, &lm) in other.states.iter().zip(other.log_mass.iter()) {
            if self.log_mass_at(s).is_none() {
                tv += lm.exp();
            }
        }
        0.5 * tv
    }

    /// CSV with lattice coordinates (concentration units), probability, and
    /// log probability.
    pub fn to_csv(&self) -> String {
        let d = self.states.first().map(|s| s.len()).unwrap_or(0);
        let mut out = String::new();
        for i in 1..=d {
            out.push_str(&format!("x_{i},"));
        }
        out.push_str("probability,log_probability\n");
        for (s, &lm) in self.states.iter().zip(self.log_mass.iter()) {
            for &k in s {
                out.push_str(&format!("{},", k as f64 / self.n as f64));
            }
            out.push_str(&format!("{},{}\n", lm.exp(), lm));
        }
        out
    }
}

pub(crate) fn log_sum_exp(vals: &[f64]) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + vals.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_network;

    fn vec1(x: f64) -> DVector<f64> {
        DVector::from_vec(vec![x])
    }

    #[test]
    fn intensities_linear_reaction() {
        // A <-> 0 at n=10, x=0.3: death intensity 0.3, birth 1.
        let net = parse_network("A <-> 0, k=1, k=1").unwrap();
        let l = intensities(&net, 10, &vec1(0.3)).unwrap();
        let death = net
            .reactions()
            .iter()
            .position(|r| r.vector() == vec![-1])
            .unwrap();
        let birth = 1 - death;
        assert!((l[death] - 0.3).abs() < 1e-15);
        assert!((l[birth] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn intensities_second_order_falling_factorial() {
        // a = 2A at n=10, x=0.3: kappa * (3*2)/100 = 0.06 kappa.
        let net = parse_network("2A -> 0, k=1.5").unwrap();
        let l = intensities(&net, 10, &vec1(0.3)).unwrap();
        assert!((l[0] - 1.5 * 0.06).abs() < 1e-15);
    }

    #[test]
    fn intensities_indicator_zero_below_order() {
        // nx < a_i forces a zero intensity.
        let net = parse_network("2A -> 0, k=1").unwrap();
        let l = intensities(&net, 10, &vec1(0.1)).unwrap();
        assert_eq!(l[0], 0.0);
    }

    #[test]
    fn intensities_reject_off_lattice() {
        let net = parse_network("A -> 0, k=1").unwrap();
        assert!(matches!(
            intensities(&net, 10, &vec1(0.33)),
            Err(StochasticError::OffLattice { .. })
        ));
    }

    #[test]
    fn intensities_converge_to_mass_action() {
        // lambda^n(x_n) -> kappa x^a as n grows.
        let net = parse_network("2A -> 0, k=1").unwrap();
        let x = 0.7;
        let mut prev_gap = f64::INFINITY;
        for &n in &[10u64, 100, 1000, 10000] {
            let xn = (x * n as f64).round() / n as f64;
            let l = intensities(&net, n, &vec1(xn)).unwrap()[0];
            let gap = (l - x * x).abs();
            assert!(gap < prev_gap || gap < 1e-6);
            prev_gap = gap;
        }
        assert!(prev_gap < 2e-4);
    }

    #[test]
    fn ssa_deterministic_given_seed() {
        let net = parse_network("A <-> 0, k=1, k=1").unwrap();
        let a = ssa_simulate(&net, 100, &vec1(2.0), 3.0, 12345).unwrap();
        let b = ssa_simulate(&net, 100, &vec1(2.0), 3.0, 12345).unwrap();
        assert_eq!(a.times, b.times);
        assert_eq!(a.counts, b.counts);
        assert!(!a.truncated);
    }

    #[test]
    fn ssa_absorbing_state_stays_put() {
        // Pure death from zero: no events until the horizon.
        let net = parse_network("A -> 0, k=1").unwrap();
        let path = ssa_simulate(&net, 10, &vec1(0.0), 5.0, 7).unwrap();
        assert_eq!(path.times.len(), 1);
        assert_eq!(path.counts[0], vec![0]);
        assert_eq!(path.value_at(4.9), vec1(0.0));
    }

    #[test]
    fn ssa_jump_cap_flags_truncation() {
        let net = parse_network("A <-> 0, k=1, k=1").unwrap();
        let path = super::ssa_simulate_capped(&net, 100, &vec1(1.0), 1e6, 3, 50).unwrap();
        assert!(path.truncated);
        assert_eq!(path.counts.len(), 51);
    }

    #[test]
    fn ssa_counts_move_by_reaction_vectors() {
        let net = parse_network("A <-> 0, k=1, k=1").unwrap();
        let path = ssa_simulate(&net, 50, &vec1(1.0), 2.0, 99).unwrap();
        for w in path.counts.windows(2) {
            let dz = w[1][0] as i64 - w[0][0] as i64;
            assert!(dz == 1 || dz == -1);
        }
        for w in path.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn ssa_holding_rate_consistency() {
        // Empirical mean first holding time at a fixed state matches
        // 1/(n 'Sigma lambda^n) within 3 standard errors.
        let net = parse_network("A <-> 0, k=1, k=1").unwrap();
        let n = 100u64;
        let x0 = vec1(2.0);
        let lambdas = intensities(&net, n, &x0).unwrap();
        let rate = n as f64 * lambdas.iter().sum::<f64>();
        let samples = 100_000;
        let mut total = 0.0;
        for seed in 0..samples {
            // Short horizon: only the first holding time matters, and the
            // total rate here is ~300 so a jump before t = 0.5 is certain
            // at f64 resolution.
            let path = ssa_simulate(&net, n, &x0, 0.5, seed as u64).unwrap();
            total += path.times[1];
        }
        let mean = total / samples as f64;
        let expected = 1.0 / rate;
        let stderr = expected / (samples as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * stderr,
            "mean {mean} expected {expected} stderr {stderr}"
        );
    }

    #[test]
    fn lln_single_run_tracks_ode() {
        // One large-n run stays near 1 + 2 e^{-t}.
        let net = parse_network("A <-> 0, k=1, k=1").unwrap();
        let path = ssa_simulate(&net, 1000, &vec1(3.0), 5.0, 4242).unwrap();
        let mut sup: f64 = 0.0;
        for i in 0..path.times.len() {
            let t = path.times[i];
            let x = path.counts[i][0] as f64 / 1000.0;
            let exact = 1.0 + 2.0 * (-t).exp();
            sup = sup.max((x - exact).abs());
            if i + 1 < path.times.len() {
                let t_next = path.times[i + 1];
                let exact_next = 1.0 + 2.0 * (-t_next).exp();
                sup = sup.max((x - exact_next).abs());
            }
        }
        assert!(sup < 0.3, "sup deviation {sup}");
    }

    #[test]
    fn distribution_normalization_and_lookup() {
        let states = vec![vec![0u64], vec![1], vec![2]];
        let d = Distribution::from_log_weights(10, states, vec![0.0, 1.0, -1.0]);
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert_eq!(d.mode(), &[1]);
        assert!(d.log_mass_at(&[3]).is_none());
        let sll = d.scaled_log_limit(&vec1(0.1)).unwrap();
        assert!((sll - (-d.log_mass_at(&[1]).unwrap() / 10.0)).abs() < 1e-15);
    }

    #[test]
    fn total_variation_disjoint_supports() {
        let a = Distribution::from_log_weights(1, vec![vec![0]], vec![0.0]);
        let b = Distribution::from_log_weights(1, vec![vec![1]], vec![0.0]);
        assert!((a.total_variation(&b) - 1.0).abs() < 1e-12);
        assert!(a.total_variation(&a) < 1e-15);
    }
}
