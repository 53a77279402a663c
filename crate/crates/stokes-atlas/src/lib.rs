//! Numerical toolkit for the analytic classification of unfoldings of
//! nonresonant irregular singularities `y' = A(e, x) / p_e(x) y`.
//!
//! The crate is organised bottom-up:
//!
//! * [`polyfield`] — the polynomial `p_e`, its roots, residues and scaling.
//! * [`flow`] — trajectories and separatrices of `x' = p_e(x)`.
//! * [`dsdomain`] — Douady–Sentenac diagrams, tau-coordinates, classification.
//! * [`stokesdata`] — formal invariants, Stokes collections, gates, normalisation.
//! * [`monodromy`] — loop words, evaluation, numerical monodromy, compatibility.
//! * [`extraction`] — Stokes data of concrete rational systems.
//! * [`io`] — documents, system files, SVG portraits, sweeps.

pub mod context;
pub mod dsdomain;
pub mod error;
pub mod extraction;
pub mod flow;
pub mod io;
pub mod linalg;
pub mod monodromy;
pub mod ode;
pub mod polyfield;
pub mod stokesdata;

pub use context::Tolerances;
pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use polyfield::{Parameter, PointKind, SingularPoint, Stability};
