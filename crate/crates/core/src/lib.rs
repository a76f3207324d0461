//! Numerical laboratory for Riesz potentials of self-intersection measures of
//! symmetric stable processes.
//!
//! The crate is organised by subsystem:
//!
//! * [`stable_sim`] samples discretized paths of the isotropic symmetric
//!   β-stable process with exponent `ψ(λ) = |λ|^β`.
//! * [`riesz_core`] evaluates the functionals η, η^z, ζ and the occupation
//!   field ξ on sampled paths, together with their closed-form moments.
//! * [`renorm`] builds the dyadic triangular decomposition of `{r < s}` and
//!   the centered series γ for `β ≤ σ < min(3β/2, d)`.
//! * [`spectral`] implements the smoothing kernel, the weight ℘_{α,ε}, the
//!   kernel θ_{α,ε} and the smoothed functional in time and frequency form.
//! * [`variational`] solves the lattice variational problem for ρ_{α,ε,M},
//!   extrapolates in `M`, and exposes the rate constants built from ρ.
//! * [`potential_field`] samples the action `F(t)` in a white-noise potential.
//! * [`mc_lab`] holds the Monte Carlo harness: seeded replicas, mergeable
//!   estimators, tail curves, exponent fits and the two-sample KS test.
//! * [`cli`] is the batch front end used by the `riesz-lab` binary.

pub mod cli;
pub mod error;
pub mod mc_lab;
pub mod potential_field;
pub mod quad;
pub mod renorm;
pub mod riesz_core;
pub mod rng;
pub mod spectral;
pub mod stable_sim;
pub mod variational;

pub use error::{LabError, Result};
pub use rng::Lane;
pub use riesz_core::{QuadratureSpec, Regime, RieszParams, TimeRule};
pub use stable_sim::{StableParams, StablePath};
