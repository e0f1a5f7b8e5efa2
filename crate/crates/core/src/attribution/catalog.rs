//! Per-test catalog of single-site effects and how their outcome depends on
//! the iteration they hit.
//!
//! Every effect is simulated at two consecutive iterations in a few regimes
//! (early, middle, late). Within a regime each final register is taken to be
//! affine in the iteration, which lets a reported value be solved for the
//! iteration directly. Solutions are only candidates; the caller verifies
//! each by re-simulation.

use rayon::prelude::*;

use super::site::{finish, FastSim, Post, Shape, SiteEffect, SiteFault};
use crate::faults::{Effect, SENTINEL};
use crate::isa::{decode, reg, Instruction, MachineState, FLASH_BASE};
use crate::testprogs::{TestId, TestProgram};

/// Largest flip count tried on a loop-body instruction word.
pub const MAX_BODY_FLIPS: u32 = 4;

/// Registers that differ from a reference, each affine in the iteration.
#[derive(Debug, Clone, Default)]
pub struct AffineRegs {
    /// (register, value at the regime's first iteration, slope)
    terms: Vec<(u8, u32, u32)>,
}

impl AffineRegs {
    fn new(r1: &[u32; 32], r2: &[u32; 32], reference: &[u32; 32]) -> Self {
        let terms = (1u8..32)
            .filter(|&r| r != reg::SP)
            .filter(|&r| r1[r as usize] != reference[r as usize] || r2[r as usize] != r1[r as usize])
            .map(|r| (r, r1[r as usize], r2[r as usize].wrapping_sub(r1[r as usize])))
            .collect();
        AffineRegs { terms }
    }

    fn term(&self, r: u8) -> Option<(u32, u32)> {
        self.terms.iter().find(|t| t.0 == r).map(|t| (t.1, t.2))
    }
}

/// Solution of a set of affine equations in the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solved {
    /// Every iteration of the regime satisfies them.
    Free,
    /// Offset from the regime's first iteration.
    At(i64),
}

#[derive(Default)]
struct Solver {
    at: Option<i64>,
    failed: bool,
}

impl Solver {
    fn eq(&mut self, base: u32, slope: u32, target: u32) {
        if self.failed {
            return;
        }
        if slope == 0 {
            self.failed = base != target;
            return;
        }
        let diff = target.wrapping_sub(base) as i32 as i64;
        let s = slope as i32 as i64;
        if diff % s != 0 {
            self.failed = true;
            return;
        }
        let t = diff / s;
        match self.at {
            Some(prev) if prev != t => self.failed = true,
            _ => self.at = Some(t),
        }
    }

    fn done(self) -> Option<Solved> {
        if self.failed {
            None
        } else {
            Some(self.at.map_or(Solved::Free, Solved::At))
        }
    }
}

/// Loop state right after the faulted iteration, affine in the iteration.
#[derive(Debug, Clone)]
pub struct PostAffine {
    regs: AffineRegs,
    a: (u32, u32),
    b: (u32, u32),
    /// `iter - i`, the iteration about to start relative to the faulted one.
    iter_offset: i64,
}

#[derive(Debug, Clone)]
pub struct Regime {
    /// First sampled iteration; 0 for fixed (prologue) sites.
    pub first: u32,
    single: Option<AffineRegs>,
    post: Option<PostAffine>,
}

/// One effect at one static instruction.
#[derive(Debug, Clone)]
pub struct Entry {
    /// Loop-body slot, or `None` for a prologue instruction.
    pub slot: Option<u32>,
    pub pc: u32,
    pub effect: SiteEffect,
    pub regimes: Vec<Regime>,
    /// Constant change of t0 when the effect only shifts the final count.
    pub delta: Option<i32>,
}

impl Entry {
    /// The site fault this entry describes at iteration `iter`.
    pub fn at(&self, shape: &Shape, iter: u32) -> SiteFault {
        match self.slot {
            Some(slot) => {
                let (pc, occ) = shape.site(slot, iter);
                SiteFault::new(pc, occ, self.effect)
            }
            None => SiteFault::new(self.pc, 1, self.effect),
        }
    }
}

/// A solved iteration, possibly one of a family that all fit.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub entry: usize,
    pub iter: u32,
    pub free: bool,
}

pub struct Catalog {
    pub entries: Vec<Entry>,
    reference: [u32; 32],
}

/// Masks of `1..=max` bits over a 32-bit word.
fn masks(max: u32) -> Vec<u32> {
    let mut out = Vec::new();
    fn rec(start: u32, left: u32, acc: u32, out: &mut Vec<u32>) {
        for b in start..32 {
            let m = acc | 1 << b;
            out.push(m);
            if left > 1 {
                rec(b + 1, left - 1, m, out);
            }
        }
    }
    rec(0, max, 0, &mut out);
    out
}

fn data_effects() -> impl Iterator<Item = Effect> {
    std::iter::once(Effect::ReplaceValue { value: SENTINEL }).chain((0..32).map(|b| Effect::FlipBits { mask: 1 << b }))
}

/// Effects tried on one instruction word.
pub fn effects_for(word: u32, max_flips: u32) -> Vec<SiteEffect> {
    let mut out = vec![SiteEffect::Instr(Effect::SkipInstruction)];
    out.extend(
        masks(max_flips)
            .into_iter()
            .filter(|&m| !matches!(decode(word ^ m), Instruction::Illegal(_)))
            .map(|mask| SiteEffect::Instr(Effect::FlipBits { mask })),
    );
    let ins = decode(word);
    match ins {
        Instruction::Lw { .. } => out.extend(data_effects().map(SiteEffect::Load)),
        Instruction::Sw { .. } => out.extend(data_effects().map(SiteEffect::Store)),
        _ => {}
    }
    let mut sources: Vec<u8> = ins.sources().into_iter().flatten().filter(|&r| r != 0).collect();
    sources.dedup();
    for r in sources {
        out.extend(data_effects().map(|effect| SiteEffect::RegRead { reg: r, effect }));
    }
    out
}

fn sample_points(n: u32) -> Vec<u32> {
    let mut firsts = vec![1, n / 2, n.saturating_sub(1)];
    firsts.retain(|&i| i >= 1 && i < n);
    firsts.dedup();
    firsts
}

impl Catalog {
    pub fn build(program: &TestProgram, shape: &Shape, warm: &MachineState, golden: &[u32; 32], budget: u64) -> Self {
        let mut work: Vec<(Option<u32>, u32, SiteEffect)> = Vec::new();
        for slot in 0..shape.body_len {
            let pc = shape.loop_start + 4 * slot;
            let word = program.text[((pc - FLASH_BASE) / 4) as usize];
            for e in effects_for(word, MAX_BODY_FLIPS) {
                work.push((Some(slot), pc, e));
            }
        }
        for idx in 0..shape.prologue_len {
            let pc = FLASH_BASE + 4 * idx;
            for e in effects_for(program.text[idx as usize], 1) {
                work.push((None, pc, e));
            }
        }
        let firsts = sample_points(shape.n);
        let entries: Vec<Entry> = work
            .into_par_iter()
            .map_init(
                || FastSim::new(program, shape, warm, budget),
                |sim, (slot, pc, effect)| {
                    let mut entry = Entry {
                        slot,
                        pc,
                        effect,
                        regimes: Vec::new(),
                        delta: None,
                    };
                    if slot.is_none() {
                        let f = entry.at(shape, 1);
                        let post = sim.run_to_post(&[f]);
                        if let Some(r) = regime(shape, 0, &post, &post, golden, budget, 0) {
                            entry.regimes.push(r);
                        }
                    } else {
                        for &first in &firsts {
                            let p1 = sim.run_to_post(&[entry.at(shape, first)]);
                            let p2 = sim.run_to_post(&[entry.at(shape, first + 1)]);
                            if let Some(r) = regime(shape, first, &p1, &p2, golden, budget, 1) {
                                entry.regimes.push(r);
                            }
                        }
                    }
                    entry.delta = delta(shape, &entry, golden);
                    entry
                },
            )
            .filter(|e| e.regimes.iter().any(|r| r.single.as_ref().is_some_and(|s| !s.terms.is_empty()) || r.post.is_some()))
            .collect();
        Catalog {
            entries,
            reference: *golden,
        }
    }

    /// Regs of the reported state that differ from the fault-free result.
    fn differing(&self, target: &[u32; 32]) -> Vec<u8> {
        (1u8..32)
            .filter(|&r| r != reg::SP && target[r as usize] != self.reference[r as usize])
            .collect()
    }

    /// Single effects whose final registers can equal `target`.
    pub fn singles(&self, shape: &Shape, target: &[u32; 32]) -> Vec<Hit> {
        let diff = self.differing(target);
        let mut hits = Vec::new();
        for (idx, e) in self.entries.iter().enumerate() {
            for r in &e.regimes {
                let Some(single) = &r.single else { continue };
                if !diff.iter().all(|&d| single.term(d).is_some()) {
                    continue;
                }
                let mut s = Solver::default();
                for &(reg, base, slope) in &single.terms {
                    s.eq(base, slope, target[reg as usize]);
                }
                if let Some(hit) = place(shape, idx, r, s.done()) {
                    hits.push(hit);
                    break;
                }
            }
        }
        hits
    }

    /// Effects after which skipping a later branch yields `target`. Returns
    /// the effect's hit and the iteration of the skipped branch.
    pub fn with_branch_skip(&self, shape: &Shape, target: &[u32; 32]) -> Vec<(Hit, u32)> {
        let (t0, t1) = (target[reg::T0 as usize], target[reg::T1 as usize]);
        let diff: Vec<u8> = self
            .differing(target)
            .into_iter()
            .filter(|&r| r != reg::T0 && r != reg::T1)
            .collect();
        let mut out = Vec::new();
        for (idx, e) in self.entries.iter().enumerate() {
            for r in &e.regimes {
                let Some(post) = &r.post else { continue };
                if !diff.iter().all(|&d| post.regs.term(d).is_some()) {
                    continue;
                }
                let mut s = Solver::default();
                for &(reg, base, slope) in &post.regs.terms {
                    if reg != reg::T0 && reg != reg::T1 {
                        s.eq(base, slope, target[reg as usize]);
                    }
                }
                s.eq(
                    post.a.0.wrapping_add(post.b.0),
                    post.a.1.wrapping_add(post.b.1),
                    t0.wrapping_add(t1),
                );
                let Some(hit) = place(shape, idx, r, s.done()) else { continue };
                let off = i64::from(hit.iter) - i64::from(r.first.max(1));
                let a = post.a.0.wrapping_add(post.a.1.wrapping_mul(off as u32));
                let d = t0.wrapping_sub(a) as i32 as i64;
                let iter = i64::from(hit.iter) + post.iter_offset;
                let k = iter + d - 1;
                if d >= 1 && k >= 1 && k <= i64::from(shape.n) {
                    out.push((hit, k as u32));
                    break;
                }
            }
        }
        out
    }
}

fn place(shape: &Shape, entry: usize, r: &Regime, solved: Option<Solved>) -> Option<Hit> {
    let solved = solved?;
    if r.first == 0 {
        return Some(Hit {
            entry,
            iter: 1,
            free: false,
        });
    }
    let (iter, free) = match solved {
        Solved::Free => (i64::from(r.first), true),
        Solved::At(t) => (i64::from(r.first) + t, false),
    };
    (1..=i64::from(shape.n)).contains(&iter).then_some(Hit {
        entry,
        iter: iter as u32,
        free,
    })
}

fn regime(
    shape: &Shape,
    first: u32,
    p1: &Post,
    p2: &Post,
    golden: &[u32; 32],
    budget: u64,
    step: u32,
) -> Option<Regime> {
    let f1 = finish(shape, p1, budget);
    let f2 = finish(shape, p2, budget);
    let single = match (f1, f2) {
        (Some(a), Some(b)) => Some(AffineRegs::new(&a, &b, golden)),
        _ => None,
    };
    let post = match (p1, p2) {
        (
            Post::Canonical {
                regs: r1,
                ab: ab1,
                iter: it1,
                ..
            },
            Post::Canonical {
                regs: r2,
                ab: ab2,
                iter: it2,
                ..
            },
        ) if i64::from(*it2) - i64::from(*it1) == i64::from(step) => Some(PostAffine {
            regs: AffineRegs::new(r1, r2, golden),
            a: (ab1.0, ab2.0.wrapping_sub(ab1.0)),
            b: (ab1.1, ab2.1.wrapping_sub(ab1.1)),
            iter_offset: i64::from(*it1) - i64::from(first.max(1)),
        }),
        _ => None,
    };
    (single.is_some() || post.is_some()).then_some(Regime { first, single, post })
}

/// The constant shift of t0 an entry causes, if that is all it does.
fn delta(shape: &Shape, e: &Entry, golden: &[u32; 32]) -> Option<i32> {
    let mut value = None;
    for r in &e.regimes {
        let single = r.single.as_ref()?;
        let mut d = None;
        for &(reg, base, slope) in &single.terms {
            if reg != reg::T0 || slope != 0 {
                return None;
            }
            d = Some(base.wrapping_sub(golden[reg::T0 as usize]) as i32);
        }
        let d = d?;
        if value.is_some_and(|v| v != d) {
            return None;
        }
        value = Some(d);
    }
    // prologue effects shift the start, not the count, of the loop
    if shape.test == TestId::UnrolledLoop || e.slot.is_some() {
        value
    } else {
        None
    }
}
