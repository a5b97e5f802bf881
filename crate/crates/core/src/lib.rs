//! Grid-based solver for configurational tunneling systems.
//!
//! The pipeline is: build a [`frame::CoordinateFrame`], obtain a
//! [`potential::PotentialField`] (analytic model or ingested samples), assemble
//! a [`operator::GridOperator`] on a [`grid::GridSpec`], find the lowest
//! eigenpairs with [`eigensolve::lowest`] and analyze them with [`spectra`].

pub mod case;
pub mod eigensolve;
pub mod frame;
pub mod grid;
pub mod operator;
pub mod potential;
pub mod presets;
pub mod renorm;
pub mod spectra;
pub mod strain;
pub mod units;
