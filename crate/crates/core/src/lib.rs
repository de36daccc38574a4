//! Computable pieces of the Khintchine-Groshev theory for systems of linear forms.
//!
//! The crate is organised bottom-up:
//!
//! * [`numtheory`] – factored integers and the multiplicative functions built on them,
//! * [`measures`] – exact Lebesgue measures of the slab sets `B(q, δ)` and `B'(q, δ)`,
//! * [`series`] – approximating functions, lattice-point counts and exact sums,
//! * [`montecarlo`] – seeded, worker-independent Monte Carlo oracles and reports,
//! * [`gauge`] and [`counterexample`] – the certified construction of approximating
//!   functions whose error weight dominates the main term.
//!
//! Every exact quantity is carried as a reduced [`rational::Rational`].

pub mod counterexample;
pub mod error;
pub mod gauge;
pub mod measures;
pub mod montecarlo;
pub mod numtheory;
pub mod rational;
pub mod selftest;
pub mod series;

pub use error::{Error, Result};
pub use rational::Rational;
