//! Command-line laboratory for the Cauchy problem `u_t + ½σ²(x)u_xx = 0`:
//! scenario files, a rayon executor for the path simulators, CSV/JSON
//! artifacts and the `cauchy-lab` subcommands.

pub mod cli;
pub mod config;
pub mod exec;
pub mod output;
