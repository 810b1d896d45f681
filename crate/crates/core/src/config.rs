use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Exact algebraic identities (reality, symmetry, closed forms).
    pub algebraic: f64,
    /// Iterative solver and eigen residual contracts.
    pub iterative: f64,
    /// Condition estimate beyond which a solve is rejected.
    pub near_singular: f64,
    /// Inner Krylov solves.
    pub krylov: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { algebraic: 1e-10, iterative: 1e-8, near_singular: 1e12, krylov: 1e-13 }
    }
}
