//! Batch front end for the pseudosolid solver.

pub mod commands;
pub mod svg;
