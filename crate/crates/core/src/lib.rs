//! Lambda-coalescents with freeze.
//!
//! The crate simulates the allelic partition of a Λ-coalescent started from
//! `n` singletons, where every active block freezes (receives a mutation) at
//! rate `rho`. Around the simulator sit an exact layer for small samples
//! (the Möhle recursion, the Ewens sampling formula and a brute-force
//! absorption chain), the deterministic fluid limit of the rescaled
//! Bolthausen-Sznitman freeze chain, and a seeded Monte Carlo harness that
//! checks the large-`n` asymptotics.

pub mod cli;
pub mod coalescent_sim;
pub mod error;
pub mod exact_solver;
pub mod experiments;
pub mod fluid_limit;
pub mod lambda_rates;
pub mod numeric;
pub mod seeding;

pub use error::{Error, Result};
pub use lambda_rates::LambdaModel;
