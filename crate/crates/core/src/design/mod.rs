//! Space-filling designs: good-lattice-point designs on the unit cube,
//! mapped into a [`Domain`] through its chain of conditional inverse CDFs.

mod domain;
mod glp;

pub use domain::{Affine, Dimension, Distribution, Domain};
pub use glp::{centered_l2_discrepancy, centered_l2_discrepancy_sq};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("a design needs at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("fewer than {d} integers below {n} are coprime to it; pick another design size")]
    GeneratorUnavailable { n: usize, d: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unit-cube coordinate {index} is {value}, outside [0, 1]")]
    OutsideUnitCube { index: usize, value: f64 },
    #[error("conditional support of `{dim}` is empty at this point")]
    EmptyConditional { dim: String },
    #[error("dimension `{dim}`: {message}")]
    InvalidDistribution { dim: String, message: String },
    #[error("a domain needs at least one dimension")]
    EmptyDomain,
    #[error("domain file: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Glp,
    Random,
    CandidatePool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub points: Vec<Vec<f64>>,
    pub provenance: Provenance,
    /// Generating vector, for lattice designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<usize>>,
}

impl DesignMatrix {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// `n`-point good-lattice-point design on `[0,1)^d`, points
/// `((i·h_j mod n) + 0.5) / n` for the discrepancy-minimizing generator.
pub fn glp_unit_design(n: usize, d: usize) -> Result<DesignMatrix, DesignError> {
    if n < 2 {
        return Err(DesignError::TooFewPoints { need: 2, got: n });
    }
    if d == 0 {
        return Err(DesignError::EmptyDomain);
    }
    let gen = glp::choose_generator(n, d)?;
    let points = (0..n).map(|i| gen.iter().map(|&h| glp::lattice_coord(i, h, n)).collect()).collect();
    Ok(DesignMatrix { points, provenance: Provenance::Glp, generator: Some(gen) })
}

fn map_into(dom: &Domain, unit: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>, DesignError> {
    unit.iter().map(|u| dom.inv_rosenblatt(u)).collect()
}

/// Lattice design of `n` points mapped into `dom`.
pub fn uniform_design(dom: &Domain, n: usize) -> Result<DesignMatrix, DesignError> {
    let unit = glp_unit_design(n, dom.dim())?;
    Ok(DesignMatrix { points: map_into(dom, unit.points)?, ..unit })
}

/// `n` independent draws from the domain distribution.
pub fn random_design(dom: &Domain, n: usize, seed: u64) -> Result<DesignMatrix, DesignError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = (0..n).map(|_| (0..dom.dim()).map(|_| rng.gen::<f64>()).collect()).collect();
    Ok(DesignMatrix { points: map_into(dom, unit)?, provenance: Provenance::Random, generator: None })
}

/// Centered Latin-hypercube sample of `m` points: coordinate `j` of point
/// `i` is `(π_j(i) + 0.5) / m` for seeded permutations `π_j`.
pub fn candidate_pool(dom: &Domain, m: usize, seed: u64) -> Result<DesignMatrix, DesignError> {
    if m == 0 {
        return Err(DesignError::TooFewPoints { need: 1, got: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..dom.dim())
        .map(|_| {
            let mut p: Vec<usize> = (0..m).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let unit = (0..m)
        .map(|i| perms.iter().map(|p| (p[i] as f64 + 0.5) / m as f64).collect())
        .collect();
    Ok(DesignMatrix { points: map_into(dom, unit)?, provenance: Provenance::CandidatePool, generator: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glp_one_dimension() {
        let d = glp_unit_design(5, 1).unwrap();
        let xs: Vec<f64> = d.points.iter().map(|p| p[0]).collect();
        let expected = [0.1, 0.3, 0.5, 0.7, 0.9];
        for (a, b) in xs.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn glp_rejects_tiny_designs() {
        assert!(matches!(glp_unit_design(1, 2), Err(DesignError::TooFewPoints { .. })));
    }

    #[test]
    fn pool_of_one_is_centre() {
        let dom = Domain::uniform_box(&[("a", 0.0, 2.0), ("b", -1.0, 1.0)]).unwrap();
        assert_eq!(candidate_pool(&dom, 1, 9).unwrap().points, vec![vec![1.0, 0.0]]);
    }

    #[test]
    fn pools_depend_on_seed() {
        let dom = Domain::uniform_box(&[("a", 0.0, 1.0), ("b", 0.0, 1.0)]).unwrap();
        let a = candidate_pool(&dom, 64, 1).unwrap();
        let b = candidate_pool(&dom, 64, 2).unwrap();
        assert_ne!(a.points, b.points);
        assert_eq!(a, candidate_pool(&dom, 64, 1).unwrap());
        assert!(a.points.iter().all(|p| dom.contains(p)));
    }

    #[test]
    fn uniform_design_stays_in_box() {
        let dom = Domain::uniform_box(&[("a", 3.0, 4.0), ("b", -2.0, 0.0)]).unwrap();
        let d = uniform_design(&dom, 10).unwrap();
        assert_eq!(d.len(), 10);
        assert!(d.points.iter().all(|p| dom.contains(p)));
    }
}
