//! Shared inputs for the benchmarks in `benches/`.

use stokes_atlas::polyfield::Parameter;
use stokes_atlas::Complex64;

/// A fixed parameter in generic position for each `k`.
pub fn generic_parameter(k: usize) -> Parameter {
    let coeffs = (0..k).map(|j| Complex64::new(0.3 - 0.2 * j as f64, 0.25 + 0.1 * j as f64)).collect();
    Parameter::new(coeffs).expect("finite coefficients")
}
