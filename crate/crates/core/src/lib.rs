//! Minimal hypersurfaces of Scherk type in `ℝ^{n+1}`: two parallel
//! hyperplanes joined by a lattice of small catenoidal necks.
//!
//! The neck is a perturbed `ε`-catenoid ([`neck`]), the rest is a pair of
//! minimal graphs over `ℝ^{n-m} × T^m` minus a ball ([`outer`]), and
//! [`gluing`] matches the two across `|x| = ρ`. The classical Scherk surface in
//! `ℝ³` ([`scherk`]) serves as an exact reference. The guide in `book/` walks
//! through each piece; its code blocks run as doctests.

pub mod catenoid;
pub mod config;
pub mod error;
pub mod gluing;
pub mod mesh;
pub mod neck;
pub mod numerics;
pub mod outer;
pub mod scherk;
pub mod sphere;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};

#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/scherk.md")]
    pub mod scherk {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    pub mod lattice {}
    #[doc = include_str!("../../../book/src/catenoid.md")]
    pub mod catenoid {}
    #[doc = include_str!("../../../book/src/neck.md")]
    pub mod neck {}
    #[doc = include_str!("../../../book/src/outer.md")]
    pub mod outer {}
    #[doc = include_str!("../../../book/src/gluing.md")]
    pub mod gluing {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/verification.md")]
    pub mod verification {}
}
