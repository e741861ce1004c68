//! Perimeter cascades of critical heavy-tailed branching structures.
//!
//! This crate turns a family of limit theorems about nested loop perimeters
//! on random planar maps into executable probability:
//!
//! * [`analytic`] — every closed form needed downstream (the first-generation
//!   moment transform `phi_alpha`, Malthusian exponents, Bessel-`K`-based
//!   Laplace transforms, large-deviation rate functions, nesting cumulants)
//!   plus the deterministic numerics (adaptive quadrature, golden-section
//!   maximization, Lanczos gamma) they are checked against.
//! * [`offspring`] — critical offspring laws with `k^{-alpha-1}` tails,
//!   either built from a weight sequence via an admissibility fixed point or
//!   from a parametric stable family, with exact inverse-CDF sampling.
//! * [`walk`] — the skip-free random-walk engine: first-passage excursions,
//!   Łukasiewicz forest decoding, and exact dynamic-programming oracles for
//!   first-passage identities.
//! * [`cascade`] — the perimeter cascade itself: rejection sampling of the
//!   size-biased first generation, breadth-first tree growth, additive and
//!   Malthusian martingales.
//! * [`identities`] — verification suites pairing each identity with an
//!   oracle (exact DP, quadrature, or seeded Monte Carlo) and producing
//!   machine-readable pass/fail reports.
//!
//! Everything downstream of a seed is deterministic: replicate `i` of a run
//! with master seed `s` draws from an RNG stream derived only from `(s, i)`,
//! so results are byte-identical regardless of how replicates are scheduled
//! across workers.

pub mod analytic;
pub mod cascade;
pub mod identities;
pub mod offspring;
pub mod quad;
pub mod rng;
pub mod special;
pub mod tolerances;
pub mod walk;

pub use analytic::{CascadeParameters, Phase};
pub use cascade::{CascadeTree, UlamLabel};
pub use identities::{Estimate, Method, ToleranceRule, VerificationReport, Verdict};
pub use offspring::OffspringLaw;
pub use walk::{StepLaw, WalkRun};
