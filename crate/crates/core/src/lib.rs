//! Cycle-level simulator and functional library for NAND-centric LLM inference.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: transformer shape descriptors, parameter footprints, per-token OPs.
//! - [`ecc`]: SEC-DED segment codec and seeded raw-bit-error injection.
//! - [`erdpe`]: the out-of-order error-corrected dot product and GEMV decomposition.
//! - [`nand`]: plane/cluster fabric timing, weight layout and prefetch streaming.
//! - [`sched`]: KV-cache-aware bitmap rebalancing of Q/K/V/O columns.
//! - [`sim`]: hardware presets, the discrete-event engine, baselines, roofline, energy.
//! - [`config`]: the versioned JSON experiment schema consumed by the CLI.

pub mod config;
pub mod ecc;
pub mod erdpe;
pub mod error;
pub mod model;
pub mod nand;
pub mod rng;
pub mod sched;
pub mod sim;

pub use error::{Error, Result};
