//! Numerical toolkit for p-energies with degenerate weights on a bounded interval.
//!
//! Given a nonnegative, locally integrable weight `w` on `(a, b)` and an exponent
//! `1 < p < ∞`, the crate computes
//!
//! * the open set where `w^{-1/(p-1)}` is locally integrable and its decomposition
//!   into intervals ([`degeneracy`]),
//! * the auxiliary weight `ŵ_p` built from inverse integrals of `w^{-1/(p-1)}`
//!   ([`auxweight`]),
//! * Dom_w membership, the norms of `L^p(ŵ_p^{p-1})` and `W`, and numerical checks
//!   of the double-weight Poincaré inequalities ([`function_space`]),
//! * the original and relaxed p-energies plus the explicit absolutely continuous
//!   approximation sequences ([`relaxation`]),
//! * the accumulating-zeros cascade example ([`cascade`]).
//!
//! Everything sits on an adaptive Gauss–Kronrod engine with geometric grading
//! toward singular endpoints and an explicit convergent/divergent verdict for
//! improper integrals ([`quadrature`]).

pub mod auxweight;
pub mod cascade;
pub mod degeneracy;
mod error;
pub mod function_space;
pub mod quadrature;
pub mod relaxation;
pub mod weight;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// A value in `[0, +∞]` (or a real that may be infinite).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_finite(&self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }
}

/// Limits the rayon pool used by the batteries. Reads `DEGEN_RELAX_THREADS`.
///
/// Calling it more than once is harmless; only the first successful call
/// configures the global pool.
pub fn init_thread_pool_from_env() {
    if let Some(n) = std::env::var("DEGEN_RELAX_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
