//! Fault-model attribution: explain a successful attempt's reported values
//! by fault hypotheses that reproduce them exactly under re-simulation.
//!
//! Hypotheses are single faults first, then pairs (a fault followed by a
//! skipped loop branch, or two count adjusters), then triples only when
//! nothing smaller fits. Runs of skipped additions or subtractions are a
//! separate burst family and are not bound by the pair/triple limit.

mod catalog;
mod labels;
pub mod oracle;
pub mod reported;
pub mod site;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

use crate::faults::{Effect, FaultSchedule, SENTINEL};
use crate::isa::{decode, reg, run_from, Instruction, MachineState, FLASH_BASE};
use crate::results::{AttemptRecord, Outcome};
use crate::testprogs::{Observables, Role, TestId, TestProgram};
use catalog::{Catalog, Hit};
pub use labels::{satisfies, Field, Label, LabelKind, LabelPattern};
use site::{materialize, FastSim, Shape, SiteEffect, SiteFault};

/// Budget factor used when re-simulating hypotheses.
pub const BUDGET_FACTOR: u64 = 10;

/// Reported values within this distance of the sentinel are read as a
/// sentinel that leaked into a counter.
pub const SENTINEL_RADIUS: u32 = 1 << 20;

/// Longest run of skipped additions or subtractions considered.
pub const MAX_BURST: u32 = 256;

/// Exhaustive single-fault lookup is built for loops up to this size.
pub const SMALL_N: u32 = 128;

/// A verified hypothesis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Explanation {
    pub observables: Observables,
    pub labels: Vec<Label>,
    pub faults: Vec<SiteFault>,
    /// Cycle-keyed events that reproduce the observables from a warm start.
    pub witness: FaultSchedule,
    pub event_count: usize,
    /// Set when the hypothesis stands for a family of equivalent ones.
    pub family: Option<String>,
}

impl Explanation {
    /// Sorted distinct label kinds.
    pub fn kinds(&self) -> Vec<LabelKind> {
        kinds_of(&self.labels)
    }
}

fn kinds_of(labels: &[Label]) -> Vec<LabelKind> {
    let mut k: Vec<LabelKind> = labels.iter().map(|l| l.kind).collect();
    k.sort();
    k.dedup();
    k
}

/// Label for one site fault in `program`.
pub fn label_for(program: &TestProgram, fault: &SiteFault) -> Label {
    let shape = Shape::of(program);
    let role = program.role_at(fault.pc).unwrap_or(Role::Prologue);
    let word = program.text[((fault.pc - FLASH_BASE) / 4) as usize];
    let is_store = matches!(decode(word), Instruction::Sw { .. });
    let kind = match fault.effect {
        SiteEffect::Instr(Effect::SkipInstruction) => match role {
            Role::Add => LabelKind::SkipAdd,
            Role::Sub => LabelKind::SkipSub,
            Role::Branch => LabelKind::SkipBranch,
            Role::LoadT0 | Role::LoadT1 => LabelKind::SkipLoad,
            Role::StoreT0 | Role::StoreT1 => LabelKind::SkipStore,
            Role::Prologue if is_store => LabelKind::SkipStore,
            Role::Prologue => LabelKind::RegisterCorruption,
        },
        SiteEffect::Instr(_) => match role {
            Role::Add => LabelKind::ManipulateAdd,
            Role::Sub => LabelKind::ManipulateSub,
            Role::Branch => LabelKind::ManipulateBranch,
            Role::LoadT0 | Role::LoadT1 | Role::StoreT0 | Role::StoreT1 => LabelKind::MemoryCorruption,
            Role::Prologue if is_store => LabelKind::MemoryCorruption,
            Role::Prologue => LabelKind::RegisterCorruption,
        },
        SiteEffect::Load(_) | SiteEffect::Store(_) => LabelKind::MemoryCorruption,
        SiteEffect::RegRead { .. } => LabelKind::RegisterCorruption,
    };
    let (value, field) = match fault.effect {
        SiteEffect::Instr(Effect::FlipBits { mask }) => (Some(word ^ mask), Some(Field::of_mask(word, mask))),
        SiteEffect::Load(Effect::ReplaceValue { value })
        | SiteEffect::Store(Effect::ReplaceValue { value })
        | SiteEffect::RegRead {
            effect: Effect::ReplaceValue { value },
            ..
        } => (Some(value), None),
        _ => (None, None),
    };
    Label {
        kind,
        iteration: shape.iteration_of(fault.pc, fault.occurrence),
        value,
        field,
    }
}

struct Candidate {
    faults: Vec<SiteFault>,
    family: Option<String>,
}

impl Candidate {
    fn new(faults: Vec<SiteFault>) -> Self {
        Candidate { faults, family: None }
    }

    fn family(faults: Vec<SiteFault>, family: String) -> Self {
        Candidate {
            faults,
            family: Some(family),
        }
    }
}

/// Attribution engine for one test program.
pub struct Attributor {
    program: TestProgram,
    shape: Shape,
    warm: MachineState,
    golden: [u32; 32],
    budget: u64,
    catalog: OnceLock<Catalog>,
    adjusters: OnceLock<BTreeMap<i32, Vec<usize>>>,
    index: OnceLock<HashMap<Observables, Vec<SiteFault>>>,
}

impl Attributor {
    pub fn new(test: TestId, n: u32) -> Self {
        let program = test.build(n);
        let shape = Shape::of(&program);
        let warm = program.warm_state();
        let golden_run = run_from(warm.clone(), &FaultSchedule::empty(), u64::MAX);
        let budget = golden_run.final_state.cycle * BUDGET_FACTOR;
        Attributor {
            golden: golden_run.final_state.regs,
            program,
            shape,
            warm,
            budget,
            catalog: OnceLock::new(),
            adjusters: OnceLock::new(),
            index: OnceLock::new(),
        }
    }

    /// Process-wide instance for `(test, n)`; the catalog is built once.
    pub fn shared(test: TestId, n: u32) -> Arc<Attributor> {
        static CACHE: OnceLock<Mutex<HashMap<(TestId, u32), Arc<Attributor>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
        map.entry((test, n)).or_insert_with(|| Arc::new(Attributor::new(test, n))).clone()
    }

    pub fn program(&self) -> &TestProgram {
        &self.program
    }

    fn catalog(&self) -> &Catalog {
        self.catalog
            .get_or_init(|| Catalog::build(&self.program, &self.shape, &self.warm, &self.golden, self.budget))
    }

    /// Catalog entries that only shift the final count, by shift.
    fn adjusters(&self) -> &BTreeMap<i32, Vec<usize>> {
        self.adjusters.get_or_init(|| {
            let cat = self.catalog();
            let mut per: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
            let mut seen = HashSet::new();
            for (idx, e) in cat.entries.iter().enumerate() {
                let Some(d) = e.delta else { continue };
                if d == 0 {
                    continue;
                }
                let kind = label_for(&self.program, &e.at(&self.shape, 1)).kind;
                // a couple of representatives per kind is enough
                if seen.insert((d, kind, 0)) || seen.insert((d, kind, 1)) {
                    per.entry(d).or_default().push(idx);
                }
            }
            per
        })
    }

    fn index(&self) -> &HashMap<Observables, Vec<SiteFault>> {
        self.index.get_or_init(|| {
            let mut sim = self.sim();
            let mut out: HashMap<Observables, Vec<SiteFault>> = HashMap::new();
            for f in self.dynamic_sites() {
                if let Some(regs) = sim.run(&[f]) {
                    out.entry(self.program.observe(&regs)).or_default().push(f);
                }
            }
            out
        })
    }

    /// Every single-event fault of the exhaustive model along the golden
    /// path: skip, one-bit flips, and a sentinel on loads.
    pub fn dynamic_sites(&self) -> Vec<SiteFault> {
        let mut out = Vec::new();
        let mut push = |pc: u32, occ: u32| {
            let word = self.program.text[((pc - FLASH_BASE) / 4) as usize];
            out.push(SiteFault::new(pc, occ, SiteEffect::Instr(Effect::SkipInstruction)));
            for b in 0..32 {
                out.push(SiteFault::new(pc, occ, SiteEffect::Instr(Effect::FlipBits { mask: 1 << b })));
            }
            if matches!(decode(word), Instruction::Lw { .. }) {
                out.push(SiteFault::new(
                    pc,
                    occ,
                    SiteEffect::Load(Effect::ReplaceValue { value: SENTINEL }),
                ));
            }
        };
        for idx in 0..self.shape.prologue_len {
            push(FLASH_BASE + 4 * idx, 1);
        }
        for iter in 1..=self.shape.n {
            for slot in 0..self.shape.body_len {
                let (pc, occ) = self.shape.site(slot, iter);
                push(pc, occ);
            }
        }
        out
    }

    fn sim(&self) -> FastSim<'_> {
        FastSim::new(&self.program, &self.shape, &self.warm, self.budget)
    }

    /// Full register file the observables stand for (sp excluded).
    fn target(&self, obs: &Observables) -> [u32; 32] {
        let mut t = self.golden;
        for &r in self.program.unused_registers() {
            t[r as usize] = self.program.sentinel;
        }
        t[reg::T0 as usize] = obs.t0;
        t[reg::T1 as usize] = obs.t1;
        for &(r, v) in &obs.corrupted {
            t[r as usize] = v;
        }
        t
    }

    fn slot(&self, role: Role) -> Option<u32> {
        (0..self.shape.body_len).find(|&s| self.program.role_at(self.shape.loop_start + 4 * s) == Some(role))
    }

    fn at(&self, role: Role, iter: u32, effect: SiteEffect) -> Option<SiteFault> {
        let slot = self.slot(role)?;
        (iter >= 1 && iter <= self.shape.n).then(|| {
            let (pc, occ) = self.shape.site(slot, iter);
            SiteFault::new(pc, occ, effect)
        })
    }

    fn is_loop(&self) -> bool {
        self.shape.test != TestId::UnrolledLoop
    }

    /// Verified explanations of `obs`, deduplicated by label-kind set and
    /// ordered by event count. Empty for expected values or when nothing fits.
    pub fn explain(&self, obs: &Observables) -> Vec<Explanation> {
        if self.program.observables_expected(obs) {
            return Vec::new();
        }
        let target = self.target(obs);
        let mut sim = self.sim();
        let mut found: Vec<Explanation> = Vec::new();
        let mut seen: HashSet<Vec<LabelKind>> = HashSet::new();
        let mut attempt = |c: Candidate, found: &mut Vec<Explanation>| {
            let labels: Vec<Label> = c.faults.iter().map(|f| label_for(&self.program, f)).collect();
            let kinds = kinds_of(&labels);
            if seen.contains(&kinds) || !sim.run(&c.faults).is_some_and(|r| same(&r, &target)) {
                return;
            }
            let Some((witness, run)) = materialize(&self.warm, &c.faults, self.budget) else {
                return;
            };
            if !run.completed() || !same(&run.final_state.regs, &target) {
                return;
            }
            seen.insert(kinds);
            found.push(Explanation {
                observables: obs.clone(),
                event_count: witness.len(),
                labels,
                faults: c.faults,
                witness,
                family: c.family,
            });
        };

        for c in self.singles(obs, &target) {
            attempt(c, &mut found);
        }
        let mut level2 = self.pairs(obs, &target, &found);
        level2.sort_by_key(|c| c.faults.len());
        for c in level2 {
            attempt(c, &mut found);
        }
        for c in self.bursts(obs) {
            attempt(c, &mut found);
        }
        if found.is_empty() {
            for c in self.triples(obs) {
                attempt(c, &mut found);
            }
        }
        found.sort_by(|a, b| (a.event_count, a.kinds()).cmp(&(b.event_count, b.kinds())));
        found
    }

    fn singles(&self, obs: &Observables, target: &[u32; 32]) -> Vec<Candidate> {
        let mut out = Vec::new();
        let n = self.shape.n;
        let skip = SiteEffect::Instr(Effect::SkipInstruction);
        if self.is_loop() && obs.corrupted.is_empty() && obs.t0.wrapping_add(obs.t1) == n && (obs.t1 as i32) > 0 {
            out.extend(self.at(Role::Branch, obs.t0, skip).map(|f| Candidate::new(vec![f])));
        }
        out.extend(self.sentinel_hypotheses(obs).into_iter().map(|f| Candidate::new(vec![f])));
        if n <= SMALL_N {
            if let Some(fs) = self.index().get(obs) {
                out.extend(fs.iter().map(|&f| Candidate::new(vec![f])));
            }
        }
        let cat = self.catalog();
        for hit in cat.singles(&self.shape, target) {
            out.push(self.hit_candidate(&hit, Vec::new()));
        }
        out
    }

    fn hit_candidate(&self, hit: &Hit, mut extra: Vec<SiteFault>) -> Candidate {
        let f = self.catalog().entries[hit.entry].at(&self.shape, hit.iter);
        let mut faults = vec![f];
        faults.append(&mut extra);
        if hit.free {
            Candidate::family(
                faults,
                format!("iteration {} shown; neighbouring iterations give the same values", hit.iter),
            )
        } else {
            Candidate::new(faults)
        }
    }

    /// A sentinel read in place of a counter near its end.
    fn sentinel_hypotheses(&self, obs: &Observables) -> Vec<SiteFault> {
        let n = self.shape.n;
        let near = |v: u32| (v.wrapping_sub(SENTINEL) as i32).unsigned_abs() <= SENTINEL_RADIUS;
        let mut out = Vec::new();
        if !obs.corrupted.is_empty() {
            return out;
        }
        let replace = |value| Effect::ReplaceValue { value };
        if near(obs.t0) && obs.t1 == self.program.expected_t1() {
            // v + 1 + (n - i) = t0 at iteration i, with v = S when that fits
            let at_s = i64::from(SENTINEL) + 1 + i64::from(n) - i64::from(obs.t0);
            let (i, v) = if (1..=i64::from(n)).contains(&at_s) {
                (at_s as u32, SENTINEL)
            } else {
                (1, obs.t0.wrapping_sub(n))
            };
            out.extend(self.at(Role::Add, i, SiteEffect::RegRead { reg: reg::T0, effect: replace(v) }));
            out.extend(self.at(Role::LoadT0, i, SiteEffect::Load(replace(v))));
            // a stored value is reloaded one iteration later, before the add
            let (i, v) = if (1..i64::from(n)).contains(&(at_s - 1)) {
                ((at_s - 1) as u32, SENTINEL)
            } else {
                (1, obs.t0.wrapping_sub(n).wrapping_add(1))
            };
            out.extend(self.at(Role::StoreT0, i, SiteEffect::Store(replace(v))));
        }
        if self.is_loop() && near(obs.t1) && obs.t0 >= 1 && obs.t0 <= n {
            let v = obs.t1.wrapping_add(1);
            out.extend(self.at(Role::Sub, obs.t0, SiteEffect::RegRead { reg: reg::T1, effect: replace(v) }));
            out.extend(self.at(Role::LoadT1, obs.t0, SiteEffect::Load(replace(v))));
            if obs.t0 >= 2 {
                out.extend(self.at(Role::StoreT1, obs.t0 - 1, SiteEffect::Store(replace(v))));
            }
        }
        out
    }

    fn pairs(&self, obs: &Observables, target: &[u32; 32], singles: &[Explanation]) -> Vec<Candidate> {
        let mut out = Vec::new();
        let skip = SiteEffect::Instr(Effect::SkipInstruction);
        if self.is_loop() {
            let cat = self.catalog();
            for (hit, k) in cat.with_branch_skip(&self.shape, target) {
                if let Some(sb) = self.at(Role::Branch, k, skip) {
                    out.push(self.hit_candidate(&hit, vec![sb]));
                }
            }
            // a single that already fits, with its own iteration's branch skipped
            let branch = self.shape.branch_slot();
            for e in singles.iter().filter(|e| e.faults.len() == 1) {
                let f = e.faults[0];
                let (Some(slot), Some(iter)) = (self.shape.slot_of(f.pc), self.shape.iteration_of(f.pc, f.occurrence)) else {
                    continue;
                };
                if Some(slot) < branch {
                    if let Some(sb) = self.at(Role::Branch, iter, skip) {
                        out.push(Candidate::new(vec![f, sb]));
                    }
                }
            }
        }
        if let Some(dt) = self.count_shift(obs) {
            let adj = self.adjusters();
            let mut per_kinds: HashMap<(LabelKind, LabelKind), usize> = HashMap::new();
            for (&d1, list1) in adj {
                let Some(list2) = adj.get(&dt.wrapping_sub(d1)) else { continue };
                for &e1 in list1 {
                    for &e2 in list2 {
                        if let Some(c) = self.adjuster_set(&[e1, e2]) {
                            let k = (c.0, c.1);
                            let count = per_kinds.entry(k).or_default();
                            if *count < 3 {
                                *count += 1;
                                out.push(Candidate::new(c.2));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn triples(&self, obs: &Observables) -> Vec<Candidate> {
        let Some(dt) = self.count_shift(obs) else {
            return Vec::new();
        };
        let adj = self.adjusters();
        let keys: Vec<i32> = adj.keys().copied().collect();
        let mut out = Vec::new();
        let mut per_kinds: HashMap<Vec<LabelKind>, usize> = HashMap::new();
        for (a, &d1) in keys.iter().enumerate() {
            for &d2 in &keys[a..] {
                let Some(list3) = adj.get(&dt.wrapping_sub(d1).wrapping_sub(d2)) else { continue };
                let (e1, e2) = (adj[&d1][0], adj[&d2][0]);
                for &e3 in list3 {
                    let Some(faults) = self.place_adjusters(&[e1, e2, e3]) else { continue };
                    let kinds = kinds_of(&faults.iter().map(|f| label_for(&self.program, f)).collect::<Vec<_>>());
                    let count = per_kinds.entry(kinds).or_default();
                    if *count < 3 {
                        *count += 1;
                        out.push(Candidate::new(faults));
                    }
                }
                if out.len() > 512 {
                    return out;
                }
            }
        }
        out
    }

    /// t0 shift to explain by count adjusters, if that is all that differs.
    fn count_shift(&self, obs: &Observables) -> Option<i32> {
        (obs.corrupted.is_empty() && obs.t1 == self.program.expected_t1())
            .then(|| obs.t0.wrapping_sub(self.shape.n) as i32)
    }

    fn adjuster_set(&self, entries: &[usize; 2]) -> Option<(LabelKind, LabelKind, Vec<SiteFault>)> {
        let faults = self.place_adjusters(entries)?;
        let k1 = label_for(&self.program, &faults[0]).kind;
        let k2 = label_for(&self.program, &faults[1]).kind;
        Some((k1.min(k2), k1.max(k2), faults))
    }

    /// Adjusters on successive iterations starting at the first.
    fn place_adjusters(&self, entries: &[usize]) -> Option<Vec<SiteFault>> {
        let cat = self.catalog();
        let mut faults = Vec::new();
        let mut iter = 1;
        for &e in entries {
            let entry = &cat.entries[e];
            let f = entry.at(&self.shape, iter);
            if entry.slot.is_some() {
                iter += 1;
            }
            if faults.iter().any(|g: &SiteFault| g.pc == f.pc && g.occurrence == f.occurrence) {
                return None;
            }
            faults.push(f);
        }
        (iter <= self.shape.n + 1).then_some(faults)
    }

    /// Runs of skipped additions (count short by k) or subtractions (count
    /// over by k).
    fn bursts(&self, obs: &Observables) -> Vec<Candidate> {
        let Some(dt) = self.count_shift(obs) else {
            return Vec::new();
        };
        let skip = SiteEffect::Instr(Effect::SkipInstruction);
        let (role, k) = if dt < 0 {
            (Role::Add, dt.unsigned_abs())
        } else if self.is_loop() {
            (Role::Sub, dt as u32)
        } else {
            return Vec::new();
        };
        if k < 2 || k > MAX_BURST || k > self.shape.n {
            return Vec::new();
        }
        let faults: Option<Vec<SiteFault>> = (1..=k).map(|i| self.at(role, i, skip)).collect();
        let what = if role == Role::Add { "additions" } else { "subtractions" };
        faults
            .map(|f| vec![Candidate::family(f, format!("any {k} skipped {what} give the same values"))])
            .unwrap_or_default()
    }

    /// Check a record's explanation against the golden program.
    pub fn verify(&self, expl: &Explanation) -> bool {
        let run = run_from(self.warm.clone(), &expl.witness, self.budget);
        run.completed() && self.program.observe(&run.final_state.regs) == expl.observables
    }
}

fn same(regs: &[u32; 32], target: &[u32; 32]) -> bool {
    (1..32).filter(|&r| r != reg::SP as usize).all(|r| regs[r] == target[r])
}

/// Explanations of reported values for `(test, n)`.
pub fn attribute_observables(test: TestId, n: u32, obs: &Observables) -> Vec<Explanation> {
    Attributor::shared(test, n).explain(obs)
}

/// Attach label sets to a record. Only successful records are attributed;
/// running it again gives the same result.
pub fn attribute(record: &mut AttemptRecord) -> Vec<Explanation> {
    let obs = match (record.outcome, record.observables()) {
        (Outcome::Successful, Some(obs)) => obs,
        _ => {
            record.labels = None;
            record.unexplained = false;
            return Vec::new();
        }
    };
    let expl = attribute_observables(record.test, record.n, &obs);
    record.unexplained = expl.is_empty();
    record.labels = Some(expl.iter().map(Explanation::kinds).collect());
    expl
}

/// Whether the witness of `expl` reproduces its observables exactly.
pub fn verify(expl: &Explanation, test: TestId, n: u32) -> bool {
    Attributor::shared(test, n).verify(expl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::reg;

    fn skip() -> SiteEffect {
        SiteEffect::Instr(Effect::SkipInstruction)
    }

    #[test]
    fn labels_follow_the_instruction_role() {
        let p = TestId::MemoryLoop.build(100);
        let shape = Shape::of(&p);
        let pc_of = |role| {
            (0..shape.body_len)
                .map(|s| shape.loop_start + 4 * s)
                .find(|&pc| p.role_at(pc) == Some(role))
                .unwrap()
        };
        let cases = [
            (Role::Add, skip(), LabelKind::SkipAdd),
            (Role::Sub, skip(), LabelKind::SkipSub),
            (Role::Branch, skip(), LabelKind::SkipBranch),
            (Role::LoadT1, skip(), LabelKind::SkipLoad),
            (Role::StoreT0, skip(), LabelKind::SkipStore),
            (Role::Add, SiteEffect::Instr(Effect::FlipBits { mask: 1 << 20 }), LabelKind::ManipulateAdd),
            (Role::Branch, SiteEffect::Instr(Effect::FlipBits { mask: 1 << 8 }), LabelKind::ManipulateBranch),
            (Role::LoadT0, SiteEffect::Load(Effect::ReplaceValue { value: 7 }), LabelKind::MemoryCorruption),
            (
                Role::Sub,
                SiteEffect::RegRead {
                    reg: reg::T1,
                    effect: Effect::FlipBits { mask: 1 },
                },
                LabelKind::RegisterCorruption,
            ),
        ];
        for (role, effect, kind) in cases {
            let label = label_for(&p, &SiteFault::new(pc_of(role), 9, effect));
            assert_eq!(label.kind, kind, "{role:?}");
            assert_eq!(label.iteration, Some(9));
        }
        let flip = label_for(&p, &SiteFault::new(pc_of(Role::Add), 1, SiteEffect::Instr(Effect::FlipBits { mask: 1 << 20 })));
        assert_eq!(flip.field, Some(Field::Immediate));
        assert_eq!(flip.value, Some(p.text[((pc_of(Role::Add) - FLASH_BASE) / 4) as usize] ^ (1 << 20)));
        assert_eq!(label_for(&p, &SiteFault::new(FLASH_BASE, 1, skip())).iteration, None);
    }

    #[test]
    fn expected_values_need_no_explanation() {
        let a = Attributor::new(TestId::RegisterLoop, 40);
        assert!(a.explain(&a.program().expected_observables()).is_empty());
    }

    #[test]
    fn branch_skip_is_the_cheapest_explanation() {
        let a = Attributor::new(TestId::RegisterLoop, 1000);
        let obs = Observables {
            t0: 300,
            t1: 700,
            corrupted: Vec::new(),
        };
        let expl = a.explain(&obs);
        assert_eq!(expl[0].kinds(), vec![LabelKind::SkipBranch]);
        assert_eq!(expl[0].labels[0].iteration, Some(300));
        assert!(expl.windows(2).all(|w| w[0].event_count <= w[1].event_count));
        assert!(expl.iter().all(|e| a.verify(e)));
    }

    #[test]
    fn tampered_witness_fails_verification() {
        let a = Attributor::new(TestId::RegisterLoop, 1000);
        let obs = Observables {
            t0: 999,
            t1: 0,
            corrupted: Vec::new(),
        };
        let mut e = a.explain(&obs).remove(0);
        assert!(a.verify(&e));
        let moved: Vec<_> = e.witness.events().iter().map(|ev| ev.at_cycle(ev.cycle() + 1)).collect();
        e.witness = FaultSchedule::new(moved, true).unwrap();
        assert!(!a.verify(&e));
    }

    #[test]
    fn impossible_values_are_unexplained() {
        let a = Attributor::new(TestId::UnrolledLoop, 500);
        // more corrupted registers than three faults can reach
        let obs = Observables {
            t0: 500,
            t1: a.program().sentinel,
            corrupted: vec![(7, 1), (8, 2), (9, 3), (10, 4)],
        };
        assert!(a.explain(&obs).is_empty());
    }

    #[test]
    fn bursts_cover_long_runs_of_skipped_additions() {
        let a = Attributor::new(TestId::UnrolledLoop, 2000);
        let obs = Observables {
            t0: 2000 - 40,
            t1: a.program().sentinel,
            corrupted: Vec::new(),
        };
        let expl = a.explain(&obs);
        let burst = expl.iter().find(|e| e.event_count == 40).expect("burst explanation");
        assert_eq!(burst.kinds(), vec![LabelKind::SkipAdd]);
        assert!(burst.family.is_some());
        assert!(a.verify(burst));
    }
}
