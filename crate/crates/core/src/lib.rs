//! Numerical laboratory for generalized geometry on the double tangent
//! fiber TM ⊕ T*M over coordinate charts.
//!
//! The crate works pointwise on a single chart ℝᵐ. A generalized vector is a
//! pair X + ξ stored as 2m components `(X; ξ)`; the neutral pairing is
//! ⟨X + ξ, Y + η⟩ = η(X) + ξ(Y), signature (m, m). On top of that sit the
//! twisted Courant (Dorfman-form) bracket, generalized complex structures and
//! generalized metrics, and the reduction pipeline: extended actions with
//! moment maps, the distributions K, K^⊥, K^𝒢 they cut out of the fiber, and
//! the structures those distributions inherit.
//!
//! Module map:
//! - [`ad`]: nested dual numbers and the smooth-map trait everything rides on
//! - [`linalg`]: tolerance-aware subspaces of the fiber (real and complex)
//! - [`fields`]: scalar/vector/form/section/matrix fields on a chart
//! - [`calculus`]: pairing, d, twisted brackets, bracket axiom residuals
//! - [`structures`]: generalized complex/metric structures, Dirac
//!   structures, bihermitian data and the block-matrix dictionary
//! - [`reduction`]: extended actions, level sets, reduced fibers
//! - [`scenarios`]: built-in worked examples with frozen expectations
//! - [`report`]: serializable run reports
//! - [`cli`]: the `courantlab` command-line front end

pub mod ad;
pub mod calculus;
pub mod cli;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod reduction;
pub mod report;
pub mod scenarios;
pub mod structures;

pub use error::{Error, Result};
