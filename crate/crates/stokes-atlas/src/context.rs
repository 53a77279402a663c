//! All numerical tolerances in one place.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Tolerance and configuration context shared by every module.
///
/// Every field has a default; a JSON file passed with `--tol-context` may
/// override any subset of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Iteration cap of the simultaneous root iteration.
    pub root_max_iter: usize,
    /// Roots closer than this (relative to `max(1, |eps|)`) form a multiple root.
    pub root_cluster_rel: f64,
    /// `|Re lambda| <= center_band * |lambda|` declares a center.
    pub center_band: f64,
    /// Escape radius is `escape_factor * max(1, |eps|)`.
    pub escape_factor: f64,
    /// Capture radius is `capture_factor * (min pairwise root distance)`.
    pub capture_factor: f64,
    /// A separatrix that comes back out beyond `reescape_factor * escape radius` is homoclinic.
    pub reescape_factor: f64,
    /// Admissible slants satisfy `|slant| < pi/2 - slant_margin`.
    pub slant_margin: f64,
    /// Relative local error for trajectory integration.
    pub flow_rtol: f64,
    /// Step budget per trajectory.
    pub flow_max_steps: usize,
    /// Tolerance for the per-sample ODE residual check.
    pub ode_residual_tol: f64,
    /// Relative target for adaptive quadrature.
    pub quad_rtol: f64,
    /// Agreement required between residue and path-integral values of tau.
    pub tau_check: f64,
    /// Beyond this disagreement tau computation fails.
    pub tau_fail: f64,
    /// Slant grid used by `classify_epsilon`.
    pub slant_grid: Vec<f64>,
    /// Bifurcation band for refusals, relative to `max |nu|`.
    pub bifurcation_band: f64,
    /// Closing residual allowed when computing gates.
    pub gate_consistency: f64,
    /// Entries below `nonzero_rel * max-norm` count as zero.
    pub nonzero_rel: f64,
    /// Margin on eigenvalue separation in `factor_invertible`.
    pub factor_margin: f64,
    /// Relative local error for fundamental-matrix transport.
    pub transport_rtol: f64,
    /// Distance from a root (relative to min root distance) where flags are seeded.
    pub flag_seed_radius: f64,
    /// Floor on `Re((a_i - a_{i+1}) e^{-i slant})`.
    pub growth_floor: f64,
    /// Floor on principal angles between alpha and omega flags.
    pub transversality_floor: f64,
    /// Off-triangle residual allowed in extracted Stokes matrices.
    pub triangularity: f64,
    /// Residual certifying a conjugator.
    pub conjugacy_residual: f64,
    /// Residual allowed in cocycle checks.
    pub cocycle_residual: f64,
    /// Relative singular value below which a vector is in a nullspace.
    pub nullspace_rel: f64,
    /// Longest braid word tried when matching loop systems of two diagrams.
    pub braid_depth: usize,
    /// Seed of the random combinations tried by the conjugacy solver.
    pub seed: u64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            root_max_iter: 200,
            root_cluster_rel: 1e-8,
            center_band: 1e-9,
            escape_factor: 10.0,
            capture_factor: 1e-4,
            reescape_factor: 1.5,
            slant_margin: PI / 8.0,
            flow_rtol: 1e-10,
            flow_max_steps: 200_000,
            ode_residual_tol: 5e-2,
            quad_rtol: 1e-12,
            tau_check: 1e-6,
            tau_fail: 1e-5,
            slant_grid: vec![0.0, PI / 16.0, -PI / 16.0, PI / 8.0, -PI / 8.0],
            bifurcation_band: 1e-9,
            gate_consistency: 1e-10,
            nonzero_rel: 1e-12,
            factor_margin: 1e-6,
            transport_rtol: 1e-12,
            flag_seed_radius: 1e-7,
            growth_floor: 1e-3,
            transversality_floor: 1e-3,
            triangularity: 1e-7,
            conjugacy_residual: 1e-9,
            cocycle_residual: 1e-8,
            nullspace_rel: 1e-7,
            braid_depth: 4,
            seed: 0x5eed,
        }
    }
}

impl Tolerances {
    /// Parse a (possibly partial) JSON override.
    pub fn from_json(text: &str) -> crate::Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::Error::Schema(e.to_string()))
    }

    pub fn max_slant(&self) -> f64 {
        PI / 2.0 - self.slant_margin
    }
}
