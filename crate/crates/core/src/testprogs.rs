//! Builders for the three characterization tests.
//!
//! Every test starts with a prologue that fills the otherwise-unused
//! registers with [`SENTINEL`] and initializes the counters. The loop body
//! follows:
//!
//! * register loop: `t0 += 1; t1 -= 1; blt zero, t1, loop`
//! * memory loop: counters live at `sp-4` / `sp-8` and are loaded, updated
//!   and stored back every iteration
//! * unrolled loop: `n` copies of `t0 += 1`, no branches

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::faults::{FaultSchedule, SENTINEL};
use crate::isa::{reg, run_from, Instruction, MachineState, RunResult, FLASH_BASE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestId {
    RegisterLoop,
    MemoryLoop,
    UnrolledLoop,
}

impl TestId {
    pub const ALL: [TestId; 3] = [TestId::RegisterLoop, TestId::MemoryLoop, TestId::UnrolledLoop];

    /// Command number used by the board protocol (`#1`..`#3`).
    pub fn number(self) -> u8 {
        match self {
            TestId::RegisterLoop => 1,
            TestId::MemoryLoop => 2,
            TestId::UnrolledLoop => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        TestId::ALL.into_iter().find(|t| t.number() == n)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TestId::RegisterLoop => "register_loop",
            TestId::MemoryLoop => "memory_loop",
            TestId::UnrolledLoop => "unrolled_loop",
        }
    }

    /// Whether `t1` is a loop counter (false: it holds the sentinel).
    pub fn uses_t1(self) -> bool {
        self != TestId::UnrolledLoop
    }

    pub fn build(self, n: u32) -> TestProgram {
        match self {
            TestId::RegisterLoop => build_register_loop(n),
            TestId::MemoryLoop => build_memory_loop(n),
            TestId::UnrolledLoop => build_unrolled_loop(n),
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if let Ok(n) = s.parse::<u8>() {
            return TestId::from_number(n).ok_or_else(|| format!("no test #{n}"));
        }
        TestId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown test {s:?}"))
    }
}

/// What a static instruction does in its test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Prologue,
    Add,
    Sub,
    Branch,
    LoadT0,
    LoadT1,
    StoreT0,
    StoreT1,
}

/// Values the board reports after a run: the counters and every unused
/// register that lost its sentinel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Observables {
    pub t0: u32,
    pub t1: u32,
    pub corrupted: Vec<(u8, u32)>,
}

impl fmt::Display for Observables {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(t0, t1) = ({:#x}, {:#x})", self.t0, self.t1)?;
        for (r, v) in &self.corrupted {
            write!(f, " {}={v:#010x}", crate::isa::reg_name(*r))?;
        }
        Ok(())
    }
}

/// An encoded characterization test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestProgram {
    pub id: TestId,
    pub n: u32,
    pub text: Vec<u32>,
    pub entry: u32,
    pub roles: Vec<Role>,
    pub loop_start: u32,
    pub golden_cycles: u64,
    pub sentinel: u32,
    unused: Vec<u8>,
}

/// Registers loaded with the sentinel by the prologue of `test`.
pub fn unused_registers(test: TestId) -> Vec<u8> {
    (1u8..32)
        .filter(|&r| r != reg::SP && r != reg::T0 && (r != reg::T1 || !test.uses_t1()))
        .collect()
}

struct Builder {
    text: Vec<u32>,
    roles: Vec<Role>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            text: Vec::new(),
            roles: Vec::new(),
        }
    }

    fn push(&mut self, role: Role, i: Instruction) {
        self.text.push(i.encode());
        self.roles.push(role);
    }

    fn load_imm(&mut self, rd: u8, value: u32) {
        let lo = ((value & 0xfff) as i32) << 20 >> 20;
        let hi = value.wrapping_sub(lo as u32);
        self.push(Role::Prologue, Instruction::Lui { rd, imm: hi as i32 });
        self.push(Role::Prologue, Instruction::Addi { rd, rs1: rd, imm: lo });
    }

    fn prologue(&mut self, test: TestId, n: u32) {
        for r in unused_registers(test) {
            self.load_imm(r, SENTINEL);
        }
        self.push(Role::Prologue, Instruction::Addi { rd: reg::T0, rs1: reg::ZERO, imm: 0 });
        if test.uses_t1() {
            self.load_imm(reg::T1, n);
        }
    }

    fn pc(&self) -> u32 {
        FLASH_BASE + 4 * self.text.len() as u32
    }

    fn finish(self, id: TestId, n: u32, loop_start: u32) -> TestProgram {
        let mut p = TestProgram {
            id,
            n,
            text: self.text,
            entry: FLASH_BASE,
            roles: self.roles,
            loop_start,
            golden_cycles: 0,
            sentinel: SENTINEL,
            unused: unused_registers(id),
        };
        let golden = p.run(&FaultSchedule::empty(), u64::MAX);
        assert!(golden.completed() && p.is_expected(&golden.final_state.regs));
        p.golden_cycles = golden.final_state.cycle;
        p
    }
}

const ADD: Instruction = Instruction::Addi { rd: reg::T0, rs1: reg::T0, imm: 1 };
const SUB: Instruction = Instruction::Addi { rd: reg::T1, rs1: reg::T1, imm: -1 };

pub fn build_register_loop(n: u32) -> TestProgram {
    assert!(n >= 1, "loop count must be positive");
    let mut b = Builder::new();
    b.prologue(TestId::RegisterLoop, n);
    let top = b.pc();
    b.push(Role::Add, ADD);
    b.push(Role::Sub, SUB);
    let back = top.wrapping_sub(b.pc()) as i32;
    b.push(Role::Branch, Instruction::Blt { rs1: reg::ZERO, rs2: reg::T1, imm: back });
    b.finish(TestId::RegisterLoop, n, top)
}

pub fn build_memory_loop(n: u32) -> TestProgram {
    assert!(n >= 1, "loop count must be positive");
    let mut b = Builder::new();
    // t0 <- 0 and t1 <- n come from the prologue; the stores follow each
    b.prologue(TestId::MemoryLoop, n);
    let sw_t0 = Instruction::Sw { rs1: reg::SP, rs2: reg::T0, imm: -4 };
    let sw_t1 = Instruction::Sw { rs1: reg::SP, rs2: reg::T1, imm: -8 };
    b.push(Role::Prologue, sw_t0);
    b.push(Role::Prologue, sw_t1);
    let top = b.pc();
    b.push(Role::LoadT0, Instruction::Lw { rd: reg::T0, rs1: reg::SP, imm: -4 });
    b.push(Role::LoadT1, Instruction::Lw { rd: reg::T1, rs1: reg::SP, imm: -8 });
    b.push(Role::Add, ADD);
    b.push(Role::Sub, SUB);
    b.push(Role::StoreT0, sw_t0);
    b.push(Role::StoreT1, sw_t1);
    let back = top.wrapping_sub(b.pc()) as i32;
    b.push(Role::Branch, Instruction::Blt { rs1: reg::ZERO, rs2: reg::T1, imm: back });
    b.finish(TestId::MemoryLoop, n, top)
}

pub fn build_unrolled_loop(n: u32) -> TestProgram {
    assert!(n >= 1, "loop count must be positive");
    let mut b = Builder::new();
    b.prologue(TestId::UnrolledLoop, n);
    let top = b.pc();
    for _ in 0..n {
        b.push(Role::Add, ADD);
    }
    b.finish(TestId::UnrolledLoop, n, top)
}

impl TestProgram {
    pub fn prologue_len(&self) -> usize {
        ((self.loop_start - FLASH_BASE) / 4) as usize
    }

    pub fn text_bytes(&self) -> u32 {
        4 * self.text.len() as u32
    }

    pub fn unused_registers(&self) -> &[u8] {
        &self.unused
    }

    pub fn role_at(&self, pc: u32) -> Option<Role> {
        let idx = pc.checked_sub(FLASH_BASE)? / 4;
        self.roles.get(idx as usize).copied()
    }

    pub fn instruction_at(&self, pc: u32) -> Option<Instruction> {
        let idx = pc.checked_sub(FLASH_BASE)? / 4;
        self.text.get(idx as usize).map(|&w| crate::isa::decode(w))
    }

    /// Reset state with a cold cache.
    pub fn initial_state(&self) -> MachineState {
        MachineState::new(self.text.clone())
    }

    /// Reset state whose icache holds whatever a full fault-free run left in it.
    pub fn warm_state(&self) -> MachineState {
        let warm = self.run(&FaultSchedule::empty(), u64::MAX);
        warm.final_state.reset_keeping_cache()
    }

    /// Cold-start run.
    pub fn run(&self, schedule: &FaultSchedule, budget: u64) -> RunResult {
        run_from(self.initial_state(), schedule, budget)
    }

    pub fn expected_t1(&self) -> u32 {
        if self.id.uses_t1() {
            0
        } else {
            self.sentinel
        }
    }

    /// The pass predicate: counters at their expected values and every
    /// unused register still holding the sentinel.
    pub fn is_expected(&self, regs: &[u32; 32]) -> bool {
        regs[reg::T0 as usize] == self.n
            && regs[reg::T1 as usize] == self.expected_t1()
            && self.unused.iter().all(|&r| regs[r as usize] == self.sentinel)
    }

    /// Unused registers whose final value differs from the sentinel.
    pub fn corrupted_registers(&self, regs: &[u32; 32]) -> Vec<(u8, u32)> {
        self.unused
            .iter()
            .filter(|&&r| regs[r as usize] != self.sentinel)
            .map(|&r| (r, regs[r as usize]))
            .collect()
    }

    pub fn observe(&self, regs: &[u32; 32]) -> Observables {
        Observables {
            t0: regs[reg::T0 as usize],
            t1: regs[reg::T1 as usize],
            corrupted: self.corrupted_registers(regs),
        }
    }

    pub fn expected_observables(&self) -> Observables {
        Observables {
            t0: self.n,
            t1: self.expected_t1(),
            corrupted: Vec::new(),
        }
    }

    /// The pass predicate expressed on reported values.
    pub fn observables_expected(&self, obs: &Observables) -> bool {
        *obs == self.expected_observables()
    }

    /// Text listing, one instruction per line.
    pub fn disassemble(&self) -> String {
        let mut out = String::new();
        for (i, (&w, role)) in self.text.iter().zip(&self.roles).enumerate() {
            let pc = FLASH_BASE + 4 * i as u32;
            if pc == self.loop_start {
                out.push_str("loop:\n");
            }
            let _ = writeln!(
                out,
                "  {pc:08x}:  {w:08x}  {:<24} # {role:?}",
                crate::isa::decode(w).to_string()
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{FaultEvent, NO_FAULTS};
    use crate::isa::{Execution, MemAccess, Termination, ICACHE_BYTES};
    use proptest::prelude::*;

    fn regs_after(p: &TestProgram, sched: &FaultSchedule) -> [u32; 32] {
        let r = p.run(sched, 10 * p.golden_cycles);
        assert_eq!(r.termination, Termination::Completed);
        r.final_state.regs
    }

    #[test]
    fn register_loop_golden() {
        let p = build_register_loop(10_000);
        let regs = regs_after(&p, &FaultSchedule::empty());
        assert_eq!((regs[5], regs[6]), (0x2710, 0));
        assert!(p.is_expected(&regs));
    }

    #[test]
    fn memory_loop_golden_and_stack() {
        let p = build_memory_loop(10_000);
        let r = p.run(&FaultSchedule::empty(), u64::MAX);
        assert_eq!((r.final_state.regs[5], r.final_state.regs[6]), (0x2710, 0));
        assert_eq!(r.final_state.load_word(crate::isa::STACK_TOP - 4), Ok(0x2710));
        assert_eq!(r.final_state.load_word(crate::isa::STACK_TOP - 8), Ok(0));
    }

    #[test]
    fn smallest_loops_execute_once() {
        let p = build_register_loop(1);
        let mut exec = Execution::new(p.initial_state(), &NO_FAULTS, u64::MAX);
        let mut adds = 0;
        while let Some(info) = exec.step() {
            adds += (p.role_at(info.pc) == Some(Role::Add)) as u32;
        }
        assert_eq!(adds, 1);

        let p = build_memory_loop(1);
        let mut exec = Execution::new(p.initial_state(), &NO_FAULTS, u64::MAX);
        let (mut loads, mut stores) = (0, 0);
        while let Some(info) = exec.step() {
            match info.mem {
                Some(MemAccess::Load { .. }) => loads += 1,
                Some(MemAccess::Store { .. }) => stores += 1,
                None => {}
            }
        }
        // two initial stores plus one round trip per counter
        assert_eq!((loads, stores), (2, 4));
    }

    #[test]
    fn memory_ops_per_iteration() {
        let p = build_memory_loop(3);
        let mut exec = Execution::new(p.initial_state(), &NO_FAULTS, u64::MAX);
        let mut in_loop = 0;
        while let Some(info) = exec.step() {
            if info.pc >= p.loop_start && info.mem.is_some() {
                in_loop += 1;
            }
        }
        assert_eq!(in_loop, 4 * 3);
    }

    #[test]
    fn golden_cycles_reproduce() {
        let p = build_register_loop(50);
        let r = p.run(&FaultSchedule::empty(), u64::MAX);
        assert_eq!(r.final_state.cycle, p.golden_cycles);
        assert_eq!(build_register_loop(50).golden_cycles, p.golden_cycles);
        // prologue: 28 sentinels * 2 + t0 + 2 for t1; loop: 3 per iteration;
        // plus one stall per distinct cache line
        let instructions = 59 + 3 * 50;
        let lines = (p.text_bytes() as u64).div_ceil(32);
        assert_eq!(p.golden_cycles, instructions + lines);
    }

    #[test]
    fn unrolled_footprint() {
        let p = build_unrolled_loop(10_000);
        assert_eq!(p.text_bytes(), 4 * (10_000 + p.prologue_len() as u32));
        assert!(p.text_bytes() > ICACHE_BYTES);
        assert!(40_000 < p.text_bytes());
        let small = build_unrolled_loop(300);
        assert_eq!(small.text_bytes() - 4 * small.prologue_len() as u32, 1200);
        assert!(small.text_bytes() < ICACHE_BYTES);
        let r = build_unrolled_loop(3).run(&FaultSchedule::empty(), u64::MAX);
        assert_eq!(r.final_state.regs[5], 3);
        assert_eq!(r.final_state.regs[6], SENTINEL);
    }

    #[test]
    fn warm_start_avoids_flash_for_small_programs() {
        for p in [build_register_loop(100), build_memory_loop(100), build_unrolled_loop(300)] {
            let r = run_from(p.warm_state(), &FaultSchedule::empty(), u64::MAX);
            assert_eq!(r.final_state.flash_fetch_count, 0, "{}", p.id);
        }
        let big = build_unrolled_loop(10_000);
        let r = run_from(big.warm_state(), &FaultSchedule::empty(), u64::MAX);
        assert!(r.final_state.flash_fetch_count >= (40_000 - 16_384) / 32);
    }

    #[test]
    fn flash_traffic_stops_after_first_iteration() {
        let p = build_register_loop(20);
        let mut exec = Execution::new(p.initial_state(), &NO_FAULTS, u64::MAX);
        let mut fetches_at_second_iteration = None;
        let mut adds = 0;
        while let Some(info) = exec.step() {
            if p.role_at(info.pc) == Some(Role::Add) {
                adds += 1;
                if adds == 2 {
                    fetches_at_second_iteration = Some(exec.state().flash_fetch_count);
                }
            }
        }
        assert_eq!(fetches_at_second_iteration, Some(exec.state().flash_fetch_count));
    }

    #[test]
    fn disassembly_lists_every_instruction() {
        let p = build_memory_loop(5);
        let text = p.disassemble();
        assert_eq!(text.lines().filter(|l| l.starts_with("  ")).count(), p.text.len());
        assert!(text.contains("lw t0, -4(sp)"));
        assert!(text.contains("blt zero, t1, -24"));
    }

    #[test]
    fn test_id_parsing() {
        assert_eq!("1".parse::<TestId>(), Ok(TestId::RegisterLoop));
        assert_eq!("unrolled_loop".parse::<TestId>(), Ok(TestId::UnrolledLoop));
        assert!("4".parse::<TestId>().is_err());
    }

    /// Skip the `occurrence`-th dynamic execution of the first instruction with `role`.
    fn skip_role(p: &TestProgram, role: Role, occurrence: u32) -> FaultSchedule {
        let mut exec = Execution::new(p.initial_state(), &NO_FAULTS, u64::MAX);
        let mut seen = 0;
        while let Some(info) = exec.step() {
            if p.role_at(info.pc) == Some(role) {
                seen += 1;
                if seen == occurrence {
                    return FaultSchedule::new(vec![FaultEvent::skip(info.start_cycle)], true).unwrap();
                }
            }
        }
        panic!("occurrence {occurrence} of {role:?} not reached");
    }

    #[test]
    fn register_loop_branch_skip_reported_row() {
        let p = build_register_loop(10_000);
        let regs = regs_after(&p, &skip_role(&p, Role::Branch, 7190));
        assert_eq!((regs[5], regs[6]), (0x1c16, 0xafa));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn golden_runs_hold_predicate(n in 1u32..=1000) {
            for id in TestId::ALL {
                let p = id.build(n);
                let r = p.run(&FaultSchedule::empty(), 10 * p.golden_cycles);
                prop_assert!(r.completed());
                prop_assert!(p.is_expected(&r.final_state.regs));
                prop_assert_eq!(r.final_state.regs[2], crate::isa::STACK_TOP);
            }
            let (a, b) = (build_register_loop(n), build_memory_loop(n));
            let ra = a.run(&FaultSchedule::empty(), u64::MAX).final_state.regs;
            let rb = b.run(&FaultSchedule::empty(), u64::MAX).final_state.regs;
            prop_assert_eq!((ra[5], ra[6]), (rb[5], rb[6]));
        }

        #[test]
        fn unrolled_single_skip_loses_one(n in 1u32..200, k in 1u32..200) {
            let k = 1 + (k - 1) % n;
            let p = build_unrolled_loop(n);
            let regs = regs_after(&p, &skip_role(&p, Role::Add, k));
            prop_assert_eq!(regs[5], n - 1);
        }

        #[test]
        fn register_loop_branch_skip_conserves_sum(n in 2u32..400, k in 1u32..400) {
            let k = 1 + (k - 1) % (n - 1);
            let p = build_register_loop(n);
            let regs = regs_after(&p, &skip_role(&p, Role::Branch, k));
            prop_assert_eq!(regs[5].wrapping_add(regs[6]), n);
            prop_assert_eq!(regs[6], n - k);
        }

        #[test]
        fn register_loop_sub_skip_adds_iteration(n in 1u32..400, k in 1u32..400) {
            let k = 1 + (k - 1) % n;
            let p = build_register_loop(n);
            let regs = regs_after(&p, &skip_role(&p, Role::Sub, k));
            prop_assert_eq!((regs[5], regs[6]), (n + 1, 0));
        }
    }
}
