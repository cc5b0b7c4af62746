//! Shared numeric thresholds.
//!
//! Every zero test in the crate goes through one of these constants so the
//! accessibility, STLC and verification modules agree on what "zero" means.

/// Relative singular-value cutoff for numerical rank: sigma_i counts toward
/// the rank when sigma_i > RANK_TOL * sigma_max. CLI-overridable.
pub const RANK_TOL: f64 = 1e-8;

/// A bracket value B(x) is treated as zero when
/// ||B(x)|| < TRIVIAL_TOL * (1 + max norm of the generating fields at x).
pub const TRIVIAL_TOL: f64 = 1e-9;

/// Zero test for scalar bracket components (P_a, P_ab, R_i, ...):
/// |v| < P_ZERO_TOL * (1 + field scale). Same constant as [`TRIVIAL_TOL`]
/// so the triviality rule and the certificate conditions cannot drift apart.
pub const P_ZERO_TOL: f64 = TRIVIAL_TOL;

/// Residual threshold for involutivity checks, scaled by the generator
/// column norms at the sample state.
pub const INVOLUTIVITY_TOL: f64 = 1e-6;

/// Default number of random sample states for involutivity certification.
pub const INVOLUTIVITY_SAMPLES: usize = 200;

/// Bracket nesting depth accepted by the numeric evaluator. Evaluation of a
/// depth-d expression differentiates through d nested dual levels, and the
/// dual tower is compiled to this bound.
pub const MAX_BRACKET_DEPTH: usize = 6;

/// Bad-bracket enumeration horizon for neutralization ledgers: one above
/// the maximum theta-degree-5 horizon that matters at equilibria.
pub const BAD_BRACKET_DEGREE_LIMIT: usize = 7;

/// Default absolute and relative tolerance for the adaptive integrator.
pub const SIM_TOL: f64 = 1e-10;

/// Step used by first-order finite-difference Jacobians (the depth-1
/// bracket oracle): h = FD_STEP_DEPTH1 * max(1, ||x||).
pub const FD_STEP_DEPTH1: f64 = 1e-5;

/// Scale a zero threshold by a field magnitude.
pub fn zero_threshold(scale: f64) -> f64 {
    TRIVIAL_TOL * (1.0 + scale)
}
