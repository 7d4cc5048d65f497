//! Lie-point symmetries of scalar Ito equations with multiplicative noise,
//! symmetry-based integration by a change of variables, and the Monte Carlo
//! tooling used to check the results.

pub mod expr;
pub mod quad;
pub mod sde;
pub mod classifier;
pub mod corpus;
pub mod kozlov;
pub mod montecarlo;
