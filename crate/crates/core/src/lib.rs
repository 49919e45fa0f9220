//! Coalition-stable, payment-mediated lane assignment for platoons of
//! vehicles with heterogeneous values of time approaching parallel queues.
//!
//! - [`partitions`]: coalitions and set partitions of the agent set.
//! - [`vertical`]: the static point-queue Stackelberg game with coalitions.
//! - [`game`] and [`values`]: the partition function game and its solution
//!   concepts (externality-free and McQuillin values, strong core).
//! - [`core_program`]: the ε-relaxed strong-core program and its exact solver.
//! - [`horizontal`]: event-driven simulation of the dynamic spatial queue.
//! - [`experiments`]: batch drivers for the vertical and dynamic studies.

pub mod core_program;
pub mod error;
pub mod experiments;
pub mod game;
pub mod horizontal;
pub mod lp;
pub mod partitions;
pub mod values;
pub mod vertical;

pub use error::{Error, Result};
pub use game::PartitionFunctionGame;
pub use partitions::{Coalition, Partition};
pub use values::{CoreRule, Imputation};
