pub mod config;
pub mod expr;
pub mod flow;
pub mod hamiltonian;
pub mod hjsolver;
pub mod kinetic;
pub mod linalg;
pub mod model;
pub mod pdmp;
pub mod quadrature;
pub mod stationary;
