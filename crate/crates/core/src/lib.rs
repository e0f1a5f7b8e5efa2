//! Fault-injection laboratory for a small RV32I core: a cycle-stepped
//! emulator, the characterization test programs, glitch physics for EM and
//! voltage attacks, campaign orchestration and fault-model attribution.

pub mod attribution;
pub mod campaign;
pub mod error;
pub mod faults;
pub mod hex;
pub mod isa;
pub mod physics;
pub mod report;
pub mod results;
pub mod testprogs;

pub use error::{Error, Result};
