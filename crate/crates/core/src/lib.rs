//! Time-dependent Eikonal equation on random weighted geometric graphs.
//!
//! The crate builds ε-neighbourhood graphs over random point clouds, advances
//! the graph Eikonal equation with explicit or implicit Euler steps, and
//! compares the result against reference solutions of the local PDE.

pub mod geometry;
pub mod kernel;
pub mod numfmt;
pub mod rng;
pub mod graph;
pub mod solver;
pub mod reference;
pub mod io;
pub mod harness;
