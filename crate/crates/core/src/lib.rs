//! Heat kernels on SU(2), the CR spheres S^{2d+1}, and the Heisenberg groups
//! H^{2d+1}, together with the Hermite functions (ξ̃p_t)/p_t of those kernels
//! and the small-time convergence experiments that relate them.
//!
//! The crate is organized bottom-up:
//!
//! - [`faa_di_bruno`]: exact higher-order chain-rule combinatorics;
//! - [`special_functions`]: stable derivative families for arccos², arccosh²,
//!   and the trig/hyperbolic compositions appearing in theta-series remainders;
//! - [`quadrature`]: adaptive Gauss–Kronrod integration on half-lines;
//! - [`riemannian_kernel`]: the Riemannian heat kernel q_t on SU(2)≅S³ and the
//!   odd-sphere kernels q_{t,d} obtained from it by differentiation;
//! - [`heisenberg_kernel`]: the Heisenberg-group kernel h_{t,d} and derivatives;
//! - [`subelliptic_kernel`]: the subelliptic kernels p_t (SU(2)) and p_{t,d}
//!   (spheres) via the Gaussian transform of the Riemannian kernels;
//! - [`lie_words`] and [`operator_algebra`]: frame words, a small expression
//!   engine for left-invariant fields, and Hermite-function evaluation;
//! - [`harness`]: convergence reports, lemma checks, and property suites.

pub mod error;
pub mod heisenberg_kernel;
pub mod faa_di_bruno;
pub mod lie_words;
pub mod harness;
pub mod operator_algebra;
pub mod quadrature;
pub mod riemannian_kernel;
pub mod special_functions;
pub mod subelliptic_kernel;

pub use error::{KernelError, Result};
pub use lie_words::{beta_map, word_degree, Letter, LieWord, Space};
