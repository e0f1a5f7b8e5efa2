//! Cycle-stepped RV32I-subset core with a direct-mapped instruction cache.
//!
//! Timing is one cycle per instruction plus one stall cycle per icache miss.
//! Fault overlays perturb the fetched word, the decoded action (skip),
//! loaded/stored values, or register-file reads of a single step.

mod instruction;
mod machine;

pub use instruction::{decode, reg_name, Instruction, Kind, NOP_WORD};
pub use machine::{
    run_from, CacheAccess, Execution, Flash, ICache, MachineState, MemAccess, RunResult,
    StepInfo, Termination, TrapCause, FLASH_BASE, ICACHE_BYTES, ICACHE_LINE_BYTES, RAM_BASE,
    RAM_SIZE, STACK_TOP,
};

/// ABI register numbers used by the characterization tests.
pub mod reg {
    pub const ZERO: u8 = 0;
    pub const SP: u8 = 2;
    pub const T0: u8 = 5;
    pub const T1: u8 = 6;
}
