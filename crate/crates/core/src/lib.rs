//! Simulation and analysis of synchronous distributed protocols among
//! rational agents that may duplicate themselves.

pub mod blocks;
pub mod bounds;
pub mod cli;
pub mod engine;
pub mod protocols;
pub mod rationality;
pub mod scenario;
pub mod topology;
