//! Distances and distribution discrepancies.
//!
//! Everything here is a pure function of its inputs. The discrete cases
//! (Minkowski family, KL, transport cost) are exact; the sample-based MMD
//! estimators come in biased (V-statistic) and unbiased (U-statistic) form.

mod distance;
mod emd;
mod kernel;
mod kl;
mod mmd;

pub use distance::{euclidean_distance, manhattan_distance, minkowski_distance, squared_euclidean};
pub use emd::{emd_discrete, transport, TransportSolution};
pub use kernel::{gram_matrix, imq_kernel, kernel, KernelFamily, KernelSpec};
pub use kl::kl_divergence;
pub use mmd::{mmd_biased, mmd_unbiased, mmd_unbiased_grad};

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Tolerance on the total mass of a [`DiscreteDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A finitely supported probability distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    locations: Vec<Vec<f64>>,
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates and builds a distribution from `(location, mass)` atoms.
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::domain("distribution needs at least one atom"));
        }
        let dim = atoms[0].0.len();
        let mut total = 0.0;
        for (loc, mass) in &atoms {
            if loc.len() != dim {
                return Err(Error::Dimension { expected: dim, actual: loc.len() });
            }
            if loc.is_empty() || loc.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("atom locations must be finite and non-empty"));
            }
            if !(mass.is_finite() && *mass >= 0.0) {
                return Err(Error::domain(format!("invalid atom mass {mass}")));
            }
            total += mass;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::domain(format!("masses sum to {total}, expected 1")));
        }
        for i in 0..atoms.len() {
            for j in i + 1..atoms.len() {
                if atoms[i].0 == atoms[j].0 {
                    return Err(Error::domain("atom locations must be pairwise distinct"));
                }
            }
        }
        let (locations, masses) = atoms.into_iter().unzip();
        Ok(DiscreteDistribution { locations, masses })
    }

    /// Probability vector over the implicit locations `0, 1, ..., n-1` on the line.
    pub fn from_probabilities(probs: &[f64]) -> Result<Self> {
        Self::new(probs.iter().enumerate().map(|(i, &p)| (alloc::vec![i as f64], p)).collect())
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.locations[0].len()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Mass at `location`, zero when it is not an atom.
    pub fn mass_at(&self, location: &[f64]) -> f64 {
        self.locations.iter().position(|l| l.as_slice() == location).map_or(0.0, |i| self.masses[i])
    }
}
