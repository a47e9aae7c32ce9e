//! Simulator for the kappa-LYZ coupled flow on flat Kaehler tori.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod error;
pub mod field;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod monitor;
pub mod spectral;
