//! Ranking-certificate synthesis for infinite-state polynomial
//! reachability games.
//!
//! The pipeline parses a game, normalizes it, optionally expands the target
//! by one predecessor step, instantiates polynomial templates for a ranking
//! function and a REACH strategy, collects the defining implications,
//! translates them into existential constraints with Farkas or Putinar
//! multipliers, and solves them with external SMT solvers. Every model is
//! re-validated by exact sampling, play simulation, and, for finite games,
//! an attractor oracle.

pub mod game;
pub mod certify;
pub mod cli;
pub mod constraints;
pub mod par;
pub mod poly;
pub mod psatz;
pub mod smt;
