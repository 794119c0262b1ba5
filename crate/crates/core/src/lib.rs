//! Multi-objective evolutionary discovery of composite data-driven models.

pub mod atoms;
pub mod evo;
pub mod graph;
pub mod io;
pub mod moead;
pub mod objectives;
pub mod tasks;
