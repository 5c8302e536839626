//! The guide in `book/src`, one module per chapter, plus the README, so that
//! `cargo test` compiles and runs every code block in them.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/stationary.md")]
pub mod stationary {}
#[doc = include_str!("../../../book/src/hamiltonian.md")]
pub mod hamiltonian {}
#[doc = include_str!("../../../book/src/kinetic.md")]
pub mod kinetic {}
#[doc = include_str!("../../../book/src/hj.md")]
pub mod hj {}
#[doc = include_str!("../../../book/src/monte-carlo.md")]
pub mod monte_carlo {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../book/src/outputs.md")]
pub mod outputs {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
