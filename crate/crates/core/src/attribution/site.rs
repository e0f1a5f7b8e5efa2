//! Faults addressed by program location instead of cycle, and a fast
//! executor that covers the fault-free stretches of a run analytically.

use serde::{Deserialize, Serialize};

use crate::faults::{Effect, FaultEvent, FaultSchedule, Surface, SENTINEL};
use crate::isa::{reg, MachineState, RunResult, Termination, FLASH_BASE, STACK_TOP};
use crate::testprogs::{TestId, TestProgram};

/// What a site fault does to the instruction it hits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteEffect {
    /// On the instruction itself (skip or corrupted word).
    Instr(Effect),
    /// On the value returned by the instruction's load.
    Load(Effect),
    /// On the value written by the instruction's store.
    Store(Effect),
    /// On one register read by the instruction.
    RegRead { reg: u8, effect: Effect },
}

impl SiteEffect {
    pub fn event(self, cycle: u64) -> FaultEvent {
        let (surface, effect, target) = match self {
            SiteEffect::Instr(e) => (Surface::ExecuteStage, e, None),
            SiteEffect::Load(e) => (Surface::DCacheLoad, e, None),
            SiteEffect::Store(e) => (Surface::DCacheStore, e, None),
            SiteEffect::RegRead { reg, effect } => (Surface::RegisterFile, effect, Some(reg)),
        };
        FaultEvent::new(cycle, surface, effect, target).expect("site effects are valid for their surface")
    }
}

/// A fault on the `occurrence`-th execution (1-based) of the instruction at `pc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SiteFault {
    pub pc: u32,
    pub occurrence: u32,
    pub effect: SiteEffect,
}

impl SiteFault {
    pub fn new(pc: u32, occurrence: u32, effect: SiteEffect) -> Self {
        SiteFault { pc, occurrence, effect }
    }
}

/// Where the fast executor stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Post {
    /// Trap, budget, step cap, or a fault that never fired.
    Dead,
    Halted { regs: [u32; 32], steps: u64 },
    /// Back in the fault-free loop with every fault applied. `regs` are the
    /// live registers; `ab` is the counter pair the loop continues from;
    /// `iter` is the iteration about to start (for the unrolled test, the
    /// number of additions already done).
    Canonical { regs: [u32; 32], ab: (u32, u32), iter: u32, steps: u64 },
}

const STEP_CAP: u64 = 1 << 17;

/// Static facts about a test program the executor relies on.
#[derive(Debug, Clone)]
pub struct Shape {
    pub test: TestId,
    pub n: u32,
    pub loop_start: u32,
    pub end: u32,
    pub body_len: u32,
    pub prologue_len: u32,
}

impl Shape {
    pub fn of(p: &TestProgram) -> Self {
        let end = FLASH_BASE + p.text_bytes();
        let body_len = match p.id {
            TestId::UnrolledLoop => 1,
            _ => (end - p.loop_start) / 4,
        };
        Shape {
            test: p.id,
            n: p.n,
            loop_start: p.loop_start,
            end,
            body_len,
            prologue_len: p.prologue_len() as u32,
        }
    }

    pub fn in_body(&self, pc: u32) -> bool {
        pc >= self.loop_start && pc < self.end
    }

    /// The pc and occurrence of body slot `slot` in iteration `iter`.
    pub fn site(&self, slot: u32, iter: u32) -> (u32, u32) {
        match self.test {
            TestId::UnrolledLoop => (self.loop_start + 4 * (iter - 1), 1),
            _ => (self.loop_start + 4 * slot, iter),
        }
    }

    /// Iteration (or unrolled position) of a body site.
    pub fn iteration_of(&self, pc: u32, occurrence: u32) -> Option<u32> {
        if !self.in_body(pc) {
            return None;
        }
        Some(match self.test {
            TestId::UnrolledLoop => (pc - self.loop_start) / 4 + 1,
            _ => occurrence,
        })
    }

    pub fn slot_of(&self, pc: u32) -> Option<u32> {
        if !self.in_body(pc) {
            return None;
        }
        Some(match self.test {
            TestId::UnrolledLoop => 0,
            _ => (pc - self.loop_start) / 4,
        })
    }

    /// Number of iterations (unrolled: additions) in a fault-free run.
    pub fn iterations(&self) -> u32 {
        self.n
    }

    pub fn branch_slot(&self) -> Option<u32> {
        match self.test {
            TestId::UnrolledLoop => None,
            _ => Some(self.body_len - 1),
        }
    }

    /// Steps of a fault-free run up to the top of iteration `iter`.
    fn steps_before(&self, iter: u32) -> u64 {
        u64::from(self.prologue_len) + u64::from(iter - 1) * u64::from(self.body_len)
    }
}

fn ram_word(state: &MachineState, addr: u32) -> u32 {
    state.load_word(addr).unwrap_or(0)
}

/// Site-addressed executor over a reusable scratch machine.
pub struct FastSim<'a> {
    program: &'a TestProgram,
    shape: &'a Shape,
    scratch: MachineState,
    budget: u64,
}

impl<'a> FastSim<'a> {
    pub fn new(program: &'a TestProgram, shape: &'a Shape, warm: &MachineState, budget: u64) -> Self {
        FastSim {
            program,
            shape,
            scratch: warm.clone(),
            budget,
        }
    }

    fn reset(&mut self) {
        let s = &mut self.scratch;
        s.regs = [0; 32];
        s.regs[reg::SP as usize] = STACK_TOP;
        s.ram.fill(0);
        s.cycle = 0;
        s.flash_fetch_count = 0;
        s.halted = false;
        s.pc = FLASH_BASE;
    }

    /// Load the fault-free state at the top of iteration `iter`.
    fn load_iteration(&mut self, iter: u32) {
        let shape = self.shape;
        self.reset();
        let s = &mut self.scratch;
        for &r in self.program.unused_registers() {
            s.regs[r as usize] = SENTINEL;
        }
        let done = iter - 1;
        s.regs[reg::T0 as usize] = done;
        match shape.test {
            TestId::UnrolledLoop => s.pc = shape.loop_start + 4 * done,
            TestId::RegisterLoop => {
                s.regs[reg::T1 as usize] = shape.n - done;
                s.pc = shape.loop_start;
            }
            TestId::MemoryLoop => {
                s.regs[reg::T1 as usize] = shape.n - done;
                s.store_word(STACK_TOP - 4, done).unwrap();
                s.store_word(STACK_TOP - 8, shape.n - done).unwrap();
                s.pc = shape.loop_start;
            }
        }
        s.cycle = shape.steps_before(iter);
    }

    fn canonical(&self) -> Option<(u32, u32, u32)> {
        let s = &self.scratch;
        let shape = self.shape;
        match shape.test {
            TestId::UnrolledLoop => shape
                .in_body(s.pc)
                .then(|| (s.regs[reg::T0 as usize], s.regs[reg::T1 as usize], (s.pc - shape.loop_start) / 4)),
            TestId::RegisterLoop => {
                (s.pc == shape.loop_start).then(|| (s.regs[reg::T0 as usize], s.regs[reg::T1 as usize], 0))
            }
            TestId::MemoryLoop => (s.pc == shape.loop_start && s.regs[reg::SP as usize] == STACK_TOP)
                .then(|| (ram_word(s, STACK_TOP - 4), ram_word(s, STACK_TOP - 8), 0)),
        }
    }

    /// Run with `faults` until every fault has fired and the machine is
    /// back in the fault-free loop, or until it halts or dies.
    pub fn run_to_post(&mut self, faults: &[SiteFault]) -> Post {
        let shape = self.shape;
        let mut counters = vec![0u32; faults.len()];
        let mut fired = vec![false; faults.len()];
        // iteration about to start, for the looping tests
        let mut iter: u32;
        if faults.iter().any(|f| !shape.in_body(f.pc)) || faults.is_empty() {
            self.reset();
            iter = 0;
        } else {
            let first = faults
                .iter()
                .map(|f| shape.iteration_of(f.pc, f.occurrence).unwrap())
                .min()
                .unwrap();
            if first == 0 || first > shape.iterations() {
                return Post::Dead;
            }
            if shape.test == TestId::UnrolledLoop && faults.iter().any(|f| f.occurrence != 1) {
                return Post::Dead;
            }
            self.load_iteration(first);
            iter = first;
            if shape.test != TestId::UnrolledLoop {
                for c in counters.iter_mut() {
                    *c = first - 1;
                }
            }
        }
        let mut actual = 0u64;
        let mut events: Vec<FaultEvent> = Vec::with_capacity(2);
        loop {
            if self.scratch.halted {
                return if fired.iter().all(|&f| f) {
                    Post::Halted {
                        regs: self.scratch.regs,
                        steps: self.scratch.cycle,
                    }
                } else {
                    Post::Dead
                };
            }
            if let Some((a, b, pos)) = self.canonical() {
                let iter_now = if shape.test == TestId::UnrolledLoop { pos } else { iter };
                if fired.iter().all(|&f| f) {
                    return Post::Canonical {
                        regs: self.scratch.regs,
                        ab: (a, b),
                        iter: iter_now,
                        steps: self.scratch.cycle,
                    };
                }
                if !self.jump_to_next(faults, &fired, &mut counters, &mut iter, a, b) {
                    return Post::Dead;
                }
            }
            if actual >= STEP_CAP || self.scratch.cycle >= self.budget {
                return Post::Dead;
            }
            let pc = self.scratch.pc;
            events.clear();
            for (k, f) in faults.iter().enumerate() {
                if f.pc == pc {
                    counters[k] += 1;
                    if !fired[k] && counters[k] == f.occurrence {
                        fired[k] = true;
                        events.push(f.effect.event(self.scratch.cycle));
                    }
                }
            }
            let cycle = self.scratch.cycle;
            if self.scratch.step(&events).is_err() {
                return Post::Dead;
            }
            // every step counts as one cycle here, whatever the cache did
            self.scratch.cycle = cycle + 1;
            actual += 1;
            if self.scratch.pc == shape.loop_start && shape.test != TestId::UnrolledLoop {
                iter += 1;
            }
        }
    }

    /// From a canonical point, advance analytically to the next pending
    /// fault. False when that fault can never fire.
    fn jump_to_next(
        &mut self,
        faults: &[SiteFault],
        fired: &[bool],
        counters: &mut [u32],
        iter: &mut u32,
        a: u32,
        b: u32,
    ) -> bool {
        let shape = self.shape;
        let pending = faults.iter().zip(fired).filter(|(_, &f)| !f).map(|(f, _)| f);
        match shape.test {
            TestId::UnrolledLoop => {
                let pc = self.scratch.pc;
                let Some(next) = pending.map(|f| f.pc).min() else { return true };
                if next < pc {
                    return false;
                }
                let skip = (next - pc) / 4;
                let s = &mut self.scratch;
                s.regs[reg::T0 as usize] = a.wrapping_add(skip);
                s.pc = next;
                s.cycle += u64::from(skip);
                true
            }
            _ => {
                let mut c = u32::MAX;
                for (k, f) in faults.iter().enumerate() {
                    if fired[k] {
                        continue;
                    }
                    if !shape.in_body(f.pc) || f.occurrence <= counters[k] {
                        return false;
                    }
                    c = c.min(f.occurrence - counters[k] - 1);
                }
                if c == 0 {
                    return true;
                }
                // the loop must stay in for all c iterations
                if (b as i32 as i64) < i64::from(c) + 1 {
                    return false;
                }
                let (a2, b2) = (a.wrapping_add(c), b.wrapping_sub(c));
                let s = &mut self.scratch;
                s.regs[reg::T0 as usize] = a2;
                s.regs[reg::T1 as usize] = b2;
                if shape.test == TestId::MemoryLoop {
                    s.store_word(STACK_TOP - 4, a2).unwrap();
                    s.store_word(STACK_TOP - 8, b2).unwrap();
                }
                s.cycle += u64::from(c) * u64::from(shape.body_len);
                for (k, f) in faults.iter().enumerate() {
                    if shape.in_body(f.pc) {
                        counters[k] += c;
                    }
                }
                *iter += c;
                true
            }
        }
    }

    /// Final registers of a full run under `faults`, or `None` if it would
    /// not complete.
    pub fn run(&mut self, faults: &[SiteFault]) -> Option<[u32; 32]> {
        let post = self.run_to_post(faults);
        finish(self.shape, &post, self.budget)
    }
}

/// Complete a run from where the fast executor stopped.
pub fn finish(shape: &Shape, post: &Post, budget: u64) -> Option<[u32; 32]> {
    match *post {
        Post::Dead => None,
        Post::Halted { regs, .. } => Some(regs),
        Post::Canonical { mut regs, ab: (a, b), iter, steps } => {
            match shape.test {
                TestId::UnrolledLoop => {
                    let left = shape.n - iter;
                    if steps + u64::from(left) > budget {
                        return None;
                    }
                    regs[reg::T0 as usize] = a.wrapping_add(left);
                }
                _ => {
                    let m: u64 = if b as i32 >= 1 {
                        u64::from(b)
                    } else if (b.wrapping_sub(1) as i32) >= 1 {
                        // wraps from i32::MIN to a huge positive count
                        1 + u64::from(b.wrapping_sub(1))
                    } else {
                        1
                    };
                    if steps + m * u64::from(shape.body_len) > budget {
                        return None;
                    }
                    regs[reg::T0 as usize] = a.wrapping_add(m as u32);
                    regs[reg::T1 as usize] = b.wrapping_sub(m as u32);
                }
            }
            Some(regs)
        }
    }
}

/// Full cycle-accurate run from `warm` with site faults turned into
/// cycle-keyed events as they fire. Returns the resulting schedule (events
/// that never fired are absent) and the run, or `None` if two faults put
/// the same surface in one step.
pub fn materialize(warm: &MachineState, faults: &[SiteFault], budget: u64) -> Option<(FaultSchedule, RunResult)> {
    let mut state = warm.clone();
    let mut counters = vec![0u32; faults.len()];
    let mut fired = Vec::new();
    let mut step_events = Vec::with_capacity(2);
    let (termination, trap_cause) = loop {
        if state.halted {
            break (Termination::Completed, None);
        }
        if state.cycle >= budget {
            break (Termination::BudgetExceeded, None);
        }
        step_events.clear();
        for (k, f) in faults.iter().enumerate() {
            if f.pc == state.pc {
                counters[k] += 1;
                if counters[k] == f.occurrence {
                    step_events.push(f.effect.event(state.cycle));
                }
            }
        }
        fired.extend_from_slice(&step_events);
        if let Err(cause) = state.step(&step_events) {
            break (Termination::Trapped, Some(cause));
        }
    };
    let schedule = FaultSchedule::new(fired, true).ok()?;
    Some((
        schedule,
        RunResult {
            termination,
            final_state: state,
            trap_cause,
        },
    ))
}
