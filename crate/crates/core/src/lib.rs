//! Exact-arithmetic toolkit for a finite, first-order model of Kuranishi
//! geometry: charts and their 1-/2-morphisms, coordinate changes, atlases,
//! stack descent on finite sites, pointwise invariants and fibre products,
//! and a small polytope chain complex.
//!
//! Everything is computed over arbitrary-precision rationals; there is no
//! floating point anywhere, so every rank/exactness/coherence condition is
//! decided, not approximated.

pub mod descent;
pub mod exactlin;
pub mod kchart;
pub mod kinvariant;
pub mod kspace;
pub mod mchain;
pub mod twocat;

pub use exactlin::{FinGSet, FinGroup, GroupHom, Rat, RationalMatrix};
pub use kchart::{ChartMorphism, ChartTwoMorphism, DiscreteChart};
pub use kinvariant::{FibreChart, FibrePoint, InvariantTriple, MorphismTriple};
pub use kspace::{KuranishiAtlas, SpaceMorphism, SpaceTwoMorphism};
pub use mchain::{AffineMap, MChain, PolytopeComponent, PolytopeGenerator};
