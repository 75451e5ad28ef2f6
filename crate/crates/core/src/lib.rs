//! Runtime prediction and configuration advice for tiled, distributed
//! tensor-contraction workloads.
//!
//! The library ingests ⟨O, V, nodes, tile_size⟩ → runtime records, trains
//! regression models on them, answers two user-facing questions — which
//! configuration minimizes runtime (shortest time) and which minimizes
//! node-hours (budget) — and runs active-learning loops that reach useful
//! accuracy from small experiment budgets. A deterministic analytic cost
//! oracle stands in for production measurements in tests and simulations.
//!
//! Everything randomized is reproducible: all RNG streams derive from an
//! explicit seed, and with the `parallel` feature (default) the rayon
//! fan-outs preserve per-unit streams so results are independent of
//! thread count.

pub mod active;
pub mod advisor;
pub mod data;
pub mod error;
pub mod metrics;
pub(crate) mod par;
pub mod regressors;
pub mod seeding;
pub mod synth;
pub mod tuning;

pub use error::{Error, Result};
