//! Numerical toolkit for ODEs driven by fractional Brownian motion with
//! singular drift and bounded-variation path-dependent terms (reflection on
//! boxes, running max/min perturbations).
//!
//! The crate is organised bottom-up:
//!
//! - [`paths`]: grid paths, variation and Hölder norms, controls, oscillation counts
//! - [`fbm`]: exact fractional Brownian motion samplers and analytic fixtures
//! - [`skorokhod`]: the Skorokhod map on boxes and bounds on its reflection term
//! - [`perturbed`]: the running max/min perturbation map
//! - [`fields`]: drift fields with prescribed Hölder regularity, averaged fields
//! - [`young`]: dyadic sewing of germs (nonlinear and linear Young integrals)
//! - [`solver`]: fixed-point solvers `X = Γ(x₀ + ∫ f(X) ds + W)`
//! - [`experiments`]: seeded Monte Carlo campaigns with JSON reports

// negated comparisons are used on purpose so that NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fbm;
pub mod fields;
pub mod paths;
pub mod perturbed;
pub mod rng;
pub mod skorokhod;
pub mod solver;
pub mod stats;
pub mod young;

pub use error::{Error, Result};
pub use paths::GridPath;
