use std::sync::Arc;

use super::instruction::{decode, Instruction};
use crate::faults::{apply_effect, Effect, FaultEvent, FaultSchedule, Surface};

pub const FLASH_BASE: u32 = 0x2000_0000;
pub const RAM_BASE: u32 = 0x8000_0000;
pub const RAM_SIZE: u32 = 4096;
pub const STACK_TOP: u32 = RAM_BASE + RAM_SIZE;

pub const ICACHE_BYTES: u32 = 16 * 1024;
pub const ICACHE_LINE_BYTES: u32 = 32;

/// Program text held in (read-only) flash, with a pre-decoded copy.
#[derive(Debug, Clone)]
pub struct Flash {
    words: Arc<[u32]>,
    decoded: Arc<[Instruction]>,
}

impl Flash {
    pub fn new(words: Vec<u32>) -> Self {
        let decoded = words.iter().map(|&w| decode(w)).collect();
        Flash {
            words: words.into(),
            decoded,
        }
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn len_bytes(&self) -> u32 {
        self.words.len() as u32 * 4
    }

    pub fn end(&self) -> u32 {
        FLASH_BASE + self.len_bytes()
    }

    pub fn contains(&self, addr: u32) -> bool {
        addr >= FLASH_BASE && addr < self.end()
    }

    fn slot(&self, addr: u32) -> usize {
        ((addr - FLASH_BASE) / 4) as usize
    }
}

impl PartialEq for Flash {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.words, &other.words) || self.words == other.words
    }
}

impl Eq for Flash {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheAccess {
    Hit,
    Miss,
}

/// Direct-mapped instruction cache; only tags are modeled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ICache {
    line_bytes: u32,
    tags: Vec<Option<u32>>,
}

impl ICache {
    pub fn new(capacity_bytes: u32, line_bytes: u32) -> Self {
        assert!(line_bytes.is_power_of_two() && capacity_bytes % line_bytes == 0);
        ICache {
            line_bytes,
            tags: vec![None; (capacity_bytes / line_bytes) as usize],
        }
    }

    pub fn capacity_bytes(&self) -> u32 {
        self.tags.len() as u32 * self.line_bytes
    }

    pub fn line_bytes(&self) -> u32 {
        self.line_bytes
    }

    fn index_tag(&self, addr: u32) -> (usize, u32) {
        let line = addr / self.line_bytes;
        ((line as usize) % self.tags.len(), line)
    }

    pub fn probe(&self, addr: u32) -> CacheAccess {
        let (idx, tag) = self.index_tag(addr);
        if self.tags[idx] == Some(tag) {
            CacheAccess::Hit
        } else {
            CacheAccess::Miss
        }
    }

    /// Look up `addr`, installing its line on a miss.
    pub fn access(&mut self, addr: u32) -> CacheAccess {
        let (idx, tag) = self.index_tag(addr);
        if self.tags[idx] == Some(tag) {
            CacheAccess::Hit
        } else {
            self.tags[idx] = Some(tag);
            CacheAccess::Miss
        }
    }

    pub fn invalidate(&mut self) {
        self.tags.iter_mut().for_each(|t| *t = None);
    }
}

impl Default for ICache {
    fn default() -> Self {
        ICache::new(ICACHE_BYTES, ICACHE_LINE_BYTES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrapCause {
    IllegalInstruction,
    MemoryFault,
    PcOutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemAccess {
    Load { addr: u32, value: u32 },
    Store { addr: u32, value: u32 },
}

/// What happened during one retired step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub pc: u32,
    pub start_cycle: u64,
    pub instruction: Instruction,
    pub cache: CacheAccess,
    pub skipped: bool,
    pub mem: Option<MemAccess>,
}

/// Architectural state of the core plus the memory hierarchy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MachineState {
    pub pc: u32,
    pub regs: [u32; 32],
    pub flash: Flash,
    pub ram: Vec<u8>,
    pub icache: ICache,
    pub cycle: u64,
    pub flash_fetch_count: u64,
    pub halted: bool,
}

impl MachineState {
    /// Reset state: pc at the start of flash, sp at the top of ram,
    /// every other register zero, cold cache.
    pub fn new(text: Vec<u32>) -> Self {
        let mut regs = [0u32; 32];
        regs[2] = STACK_TOP;
        MachineState {
            pc: FLASH_BASE,
            regs,
            flash: Flash::new(text),
            ram: vec![0; RAM_SIZE as usize],
            icache: ICache::default(),
            cycle: 0,
            flash_fetch_count: 0,
            halted: false,
        }
    }

    /// Same program and cache contents, architectural state and counters reset.
    pub fn reset_keeping_cache(&self) -> Self {
        let mut s = MachineState::new(Vec::new());
        s.flash = self.flash.clone();
        s.icache = self.icache.clone();
        s
    }

    pub fn icache_lookup(&mut self, addr: u32) -> CacheAccess {
        let access = self.icache.access(addr);
        if access == CacheAccess::Miss {
            self.flash_fetch_count += 1;
        }
        access
    }

    pub fn load_word(&self, addr: u32) -> Result<u32, TrapCause> {
        if addr % 4 != 0 {
            return Err(TrapCause::MemoryFault);
        }
        if let Some(off) = ram_offset(addr) {
            Ok(u32::from_le_bytes(self.ram[off..off + 4].try_into().unwrap()))
        } else if self.flash.contains(addr) {
            Ok(self.flash.words[self.flash.slot(addr)])
        } else {
            Err(TrapCause::MemoryFault)
        }
    }

    pub fn store_word(&mut self, addr: u32, value: u32) -> Result<(), TrapCause> {
        match ram_offset(addr) {
            Some(off) if addr % 4 == 0 => {
                self.ram[off..off + 4].copy_from_slice(&value.to_le_bytes());
                Ok(())
            }
            _ => Err(TrapCause::MemoryFault),
        }
    }

    /// Cycles the next step will take if it does not trap.
    pub fn next_step_cost(&self) -> u64 {
        match self.icache.probe(self.pc) {
            CacheAccess::Hit => 1,
            CacheAccess::Miss => 2,
        }
    }

    /// Execute one instruction, applying `events` as overlays.
    ///
    /// The caller passes the events whose cycles fall inside this step's
    /// window. On a trap the architectural state is left untouched.
    pub fn step(&mut self, events: &[FaultEvent]) -> Result<StepInfo, TrapCause> {
        debug_assert!(!self.halted, "step on a halted machine");
        let pc = self.pc;
        if pc % 4 != 0 || !self.flash.contains(pc) {
            return Err(TrapCause::PcOutOfRange);
        }
        let start_cycle = self.cycle;
        let cache = self.icache_lookup(pc);
        let slot = self.flash.slot(pc);
        let original = self.flash.words[slot];

        let mut word = original;
        let mut skipped = false;
        for ev in events {
            let applies = match ev.surface() {
                Surface::FlashFetch => cache == CacheAccess::Miss,
                Surface::ICacheFetch | Surface::ExecuteStage => true,
                _ => false,
            };
            if applies {
                match ev.effect() {
                    Effect::SkipInstruction => skipped = true,
                    Effect::FlipBits { mask } => word ^= mask,
                    Effect::ReplaceValue { .. } => {}
                }
            }
        }
        let instruction = if word == original {
            self.flash.decoded[slot]
        } else {
            decode(word)
        };
        let cost = match cache {
            CacheAccess::Hit => 1,
            CacheAccess::Miss => 2,
        };

        let mut info = StepInfo {
            pc,
            start_cycle,
            instruction,
            cache,
            skipped,
            mem: None,
        };
        if skipped {
            self.retire(pc.wrapping_add(4), cost);
            return Ok(info);
        }

        let read = |state: &MachineState, r: u8| -> u32 {
            if r == 0 {
                return 0;
            }
            let mut v = state.regs[r as usize];
            for ev in events {
                if ev.surface() == Surface::RegisterFile && ev.target_reg() == Some(r) {
                    v = apply_effect(ev.effect(), v).unwrap_or(v);
                }
            }
            v
        };
        let data = |surface: Surface, mut v: u32| -> u32 {
            for ev in events.iter().filter(|e| e.surface() == surface) {
                v = apply_effect(ev.effect(), v).unwrap_or(v);
            }
            v
        };

        let mut next_pc = pc.wrapping_add(4);
        let mut write: Option<(u8, u32)> = None;
        match instruction {
            Instruction::Addi { rd, rs1, imm } => {
                write = Some((rd, read(self, rs1).wrapping_add(imm as u32)));
            }
            Instruction::Add { rd, rs1, rs2 } => {
                write = Some((rd, read(self, rs1).wrapping_add(read(self, rs2))));
            }
            Instruction::Sub { rd, rs1, rs2 } => {
                write = Some((rd, read(self, rs1).wrapping_sub(read(self, rs2))));
            }
            Instruction::Lw { rd, rs1, imm } => {
                let addr = read(self, rs1).wrapping_add(imm as u32);
                let value = data(Surface::DCacheLoad, self.load_word(addr)?);
                info.mem = Some(MemAccess::Load { addr, value });
                write = Some((rd, value));
            }
            Instruction::Sw { rs1, rs2, imm } => {
                let addr = read(self, rs1).wrapping_add(imm as u32);
                let value = data(Surface::DCacheStore, read(self, rs2));
                self.store_word(addr, value)?;
                info.mem = Some(MemAccess::Store { addr, value });
            }
            Instruction::Lui { rd, imm } => write = Some((rd, imm as u32)),
            Instruction::Blt { rs1, rs2, imm } => {
                if (read(self, rs1) as i32) < (read(self, rs2) as i32) {
                    next_pc = pc.wrapping_add(imm as u32);
                }
            }
            Instruction::Bge { rs1, rs2, imm } => {
                if (read(self, rs1) as i32) >= (read(self, rs2) as i32) {
                    next_pc = pc.wrapping_add(imm as u32);
                }
            }
            Instruction::Bne { rs1, rs2, imm } => {
                if read(self, rs1) != read(self, rs2) {
                    next_pc = pc.wrapping_add(imm as u32);
                }
            }
            Instruction::Jal { rd, imm } => {
                write = Some((rd, pc.wrapping_add(4)));
                next_pc = pc.wrapping_add(imm as u32);
            }
            Instruction::Nop => {}
            Instruction::Illegal(_) => return Err(TrapCause::IllegalInstruction),
        }
        if let Some((rd, v)) = write {
            if rd != 0 {
                self.regs[rd as usize] = v;
            }
        }
        self.retire(next_pc, cost);
        Ok(info)
    }

    fn retire(&mut self, next_pc: u32, cost: u64) {
        self.regs[0] = 0;
        self.pc = next_pc;
        self.cycle += cost;
        if next_pc == self.flash.end() {
            self.halted = true;
        }
    }
}

fn ram_offset(addr: u32) -> Option<usize> {
    (addr >= RAM_BASE && addr.wrapping_sub(RAM_BASE) <= RAM_SIZE - 4).then(|| (addr - RAM_BASE) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Completed,
    Trapped,
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub termination: Termination,
    pub final_state: MachineState,
    pub trap_cause: Option<TrapCause>,
}

impl RunResult {
    pub fn completed(&self) -> bool {
        self.termination == Termination::Completed
    }
}

/// An in-progress run of a machine under a fault schedule.
pub struct Execution<'a> {
    state: MachineState,
    events: &'a [FaultEvent],
    cursor: usize,
    budget: u64,
    done: Option<(Termination, Option<TrapCause>)>,
}

impl<'a> Execution<'a> {
    /// Start from `state`. Events scheduled before `state.cycle` are ignored.
    pub fn new(state: MachineState, schedule: &'a FaultSchedule, budget: u64) -> Self {
        let events = schedule.events();
        let cursor = events.partition_point(|e| e.cycle() < state.cycle);
        let done = state.halted.then_some((Termination::Completed, None));
        Execution {
            state,
            events,
            cursor,
            budget,
            done,
        }
    }

    pub fn state(&self) -> &MachineState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.done.is_some()
    }

    /// Advance one instruction. Returns `None` once the run has ended.
    pub fn step(&mut self) -> Option<StepInfo> {
        if self.done.is_some() {
            return None;
        }
        if self.state.cycle >= self.budget {
            self.done = Some((Termination::BudgetExceeded, None));
            return None;
        }
        let start = self.state.cycle;
        let end = start + self.state.next_step_cost();
        let first = self.cursor;
        while self.cursor < self.events.len() && self.events[self.cursor].cycle() < end {
            self.cursor += 1;
        }
        match self.state.step(&self.events[first..self.cursor]) {
            Ok(info) => {
                if self.state.halted {
                    self.done = Some((Termination::Completed, None));
                }
                Some(info)
            }
            Err(cause) => {
                self.done = Some((Termination::Trapped, Some(cause)));
                None
            }
        }
    }

    pub fn finish(mut self) -> RunResult {
        while self.step().is_some() {}
        let (termination, trap_cause) = self.done.expect("run finished");
        RunResult {
            termination,
            final_state: self.state,
            trap_cause,
        }
    }
}

/// Run from `state` until halt, trap, or `cycle >= budget`.
pub fn run_from(state: MachineState, schedule: &FaultSchedule, budget: u64) -> RunResult {
    Execution::new(state, schedule, budget).finish()
}
