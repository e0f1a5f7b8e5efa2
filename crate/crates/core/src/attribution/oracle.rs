//! Brute-force reference: every single-event fault of the exhaustive model,
//! run cycle-accurately from the warm start.

use super::site::SiteFault;
use super::{label_for, Attributor, Label};
use crate::faults::FaultSchedule;
use crate::isa::run_from;
use crate::testprogs::{Observables, TestId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleOutcome {
    pub fault: SiteFault,
    pub cycle: u64,
    pub label: Label,
    pub observables: Observables,
}

/// Successful single-event outcomes of `(test, n)`. Meant for small `n`.
pub fn oracle_exhaustive(test: TestId, n: u32) -> Vec<OracleOutcome> {
    let attr = Attributor::new(test, n);
    let program = attr.program();
    let warm = program.warm_state();
    let golden = run_from(warm.clone(), &FaultSchedule::empty(), u64::MAX);
    let budget = golden.final_state.cycle * super::BUDGET_FACTOR;

    // cycle at which each (pc, occurrence) executes on the golden path
    let mut trace = std::collections::HashMap::new();
    let mut counts = std::collections::HashMap::new();
    let mut state = warm.clone();
    while !state.halted {
        let occ = counts.entry(state.pc).or_insert(0u32);
        *occ += 1;
        trace.insert((state.pc, *occ), state.cycle);
        state.step(&[]).expect("golden run does not trap");
    }

    let mut out = Vec::new();
    for fault in attr.dynamic_sites() {
        let cycle = trace[&(fault.pc, fault.occurrence)];
        let schedule = FaultSchedule::new(vec![fault.effect.event(cycle)], true).expect("one event");
        let run = run_from(warm.clone(), &schedule, budget);
        if !run.completed() {
            continue;
        }
        let obs = program.observe(&run.final_state.regs);
        if program.observables_expected(&obs) {
            continue;
        }
        out.push(OracleOutcome {
            fault,
            cycle,
            label: label_for(program, &fault),
            observables: obs,
        });
    }
    out
}
