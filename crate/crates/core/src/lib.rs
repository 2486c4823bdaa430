//! Risk-sensitive quantal response equilibria for finite-horizon Markov
//! games, learned by optimistic value iteration with linear function
//! approximation.

pub mod risk;
pub mod envs;
pub mod eval;
pub mod linear_fa;
pub mod ovi;
pub mod stage_solver;
