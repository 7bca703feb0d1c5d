//! Reaction network data model, text format, and structural analyses.
//!
//! A network is a finite set of species, a set of complexes (integer count
//! vectors over the species), and an ordered list of reactions `a -> b` with
//! mass-action rate constants. Everything downstream — Hamiltonians,
//! deterministic and stochastic dynamics, quasipotentials — is derived from
//! this structure, so it is immutable after construction and all invariants
//! are enforced in the constructor.

mod parse;
mod structure;

pub use parse::{parse_network, ParseError};
pub(crate) use structure::tarjan_scc;
pub use structure::{
    compatibility_class, conserved_vectors, is_weakly_reversible, stoichiometric_basis,
    CompatibilityClass, StoichiometricBasis,
};

use nalgebra::DVector;
use thiserror::Error;

/// Tolerance for rank decisions and span membership in the structural
/// analyses. Inputs are small integers, so this sits far above rounding
/// noise.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("rate constant for reaction {reaction} must be strictly positive, got {rate}")]
    NonpositiveRate { reaction: String, rate: f64 },
    #[error("duplicate reaction {reaction}")]
    DuplicateReaction { reaction: String },
    #[error("reactant equals product in reaction {complex} -> {complex}")]
    SelfLoop { complex: String },
    #[error("network has no reactions")]
    EmptyNetwork,
    #[error("state has negative component {index} = {value}")]
    NegativeState { index: usize, value: f64 },
}

/// A complex: integer species counts, indexed consistently with
/// [`Network::species`]. The zero vector is the empty complex ∅.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Complex(pub Vec<u32>);

impl Complex {
    pub fn empty(dim: usize) -> Self {
        Complex(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty_complex(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// Total molecularity |a| = Σ aᵢ.
    pub fn order(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    /// The monomial x^a with the convention 0^0 = 1.
    pub fn monomial(&self, x: &DVector<f64>) -> f64 {
        self.0
            .iter()
            .zip(x.iter())
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }

    /// d/dxᵢ of x^a: aᵢ x^(a − eᵢ). Returns 0 when aᵢ = 0; evaluates the
    /// reduced monomial directly so xᵢ = 0 is handled one-sidedly without a
    /// division.
    pub fn monomial_deriv(&self, x: &DVector<f64>, i: usize) -> f64 {
        let ai = self.0[i];
        if ai == 0 {
            return 0.0;
        }
        let mut acc = ai as f64;
        for (j, (&a, &xj)) in self.0.iter().zip(x.iter()).enumerate() {
            let e = if j == i { a - 1 } else { a };
            acc *= xj.powi(e as i32);
        }
        acc
    }

    fn render(&self, species: &[String]) -> String {
        if self.is_empty_complex() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (i, &c) in self.0.iter().enumerate() {
            match c {
                0 => {}
                1 => parts.push(species[i].clone()),
                _ => parts.push(format!("{c} {}", species[i])),
            }
        }
        parts.join(" + ")
    }
}

/// A single reaction `reactant -> product` with its mass-action rate
/// constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactant: Complex,
    pub product: Complex,
    pub rate: f64,
}

impl Reaction {
    /// The reaction vector ζ = product − reactant (never zero).
    pub fn vector(&self) -> Vec<i64> {
        self.reactant
            .0
            .iter()
            .zip(self.product.0.iter())
            .map(|(&a, &b)| b as i64 - a as i64)
            .collect()
    }

    pub fn vector_f64(&self) -> DVector<f64> {
        DVector::from_iterator(self.reactant.dim(), self.vector().into_iter().map(|z| z as f64))
    }

    /// Mass-action intensity λ(x) = κ x^a.
    pub fn intensity(&self, x: &DVector<f64>) -> f64 {
        self.rate * self.reactant.monomial(x)
    }
}

/// An immutable chemical reaction network with mass-action rate constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    species: Vec<String>,
    complexes: Vec<Complex>,
    reactions: Vec<Reaction>,
}

impl Network {
    /// Build a network from species names and reactions, inferring the
    /// complex set. Rejects nonpositive rates, self-loop reactions,
    /// duplicate (reactant, product) pairs, and the empty reaction list.
    pub fn new(species: Vec<String>, reactions: Vec<Reaction>) -> Result<Self, NetworkError> {
        if reactions.is_empty() {
            return Err(NetworkError::EmptyNetwork);
        }
        let mut complexes = Vec::new();
        let mut seen_pairs: Vec<(&Complex, &Complex)> = Vec::new();
        for r in &reactions {
            debug_assert_eq!(r.reactant.dim(), species.len());
            debug_assert_eq!(r.product.dim(), species.len());
            if r.reactant == r.product {
                return Err(NetworkError::SelfLoop {
                    complex: r.reactant.render(&species),
                });
            }
            if !r.rate.is_finite() || r.rate <= 0.0 {
                return Err(NetworkError::NonpositiveRate {
                    reaction: format!(
                        "{} -> {}",
                        r.reactant.render(&species),
                        r.product.render(&species)
                    ),
                    rate: r.rate,
                });
            }
            if seen_pairs.contains(&(&r.reactant, &r.product)) {
                return Err(NetworkError::DuplicateReaction {
                    reaction: format!(
                        "{} -> {}",
                        r.reactant.render(&species),
                        r.product.render(&species)
                    ),
                });
            }
            seen_pairs.push((&r.reactant, &r.product));
        }
        for r in &reactions {
            for c in [&r.reactant, &r.product] {
                if !complexes.contains(c) {
                    complexes.push(c.clone());
                }
            }
        }
        complexes.sort();
        Ok(Network {
            species,
            complexes,
            reactions,
        })
    }

    pub fn dim(&self) -> usize {
        self.species.len()
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn complexes(&self) -> &[Complex] {
        &self.complexes
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    /// Canonical text form: a species header fixing the index order, then one
    /// reaction per line. Parsing the output reproduces the network exactly.
    pub fn render(&self) -> String {
        let mut out = format!("species {};\n", self.species.join(", "));
        for r in &self.reactions {
            out.push_str(&format!(
                "{} -> {}, k={}\n",
                r.reactant.render(&self.species),
                r.product.render(&self.species),
                r.rate
            ));
        }
        out
    }

    /// Stable FNV-1a hash of the canonical rendering; used to tag output
    /// files with the network they came from.
    pub fn hash64(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.render().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

/// Check x ≥ 0 componentwise.
pub fn require_nonnegative(x: &DVector<f64>) -> Result<(), NetworkError> {
    for (i, &v) in x.iter().enumerate() {
        if v < 0.0 {
            return Err(NetworkError::NegativeState { index: i, value: v });
        }
    }
    Ok(())
}
