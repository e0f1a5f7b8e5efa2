//! Outcomes reported from real glitching campaigns on the three tests, with
//! the fault labels they were attributed to.

use serde::Deserialize;

use super::LabelPattern;
use crate::faults::SENTINEL;
use crate::isa::reg;
use crate::physics::{Attack, ClockLabel};
use crate::testprogs::{Observables, TestId};

const ROWS: &str = include_str!("../../fixtures/reported_outcomes.jsonl");

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportedRow {
    pub attack: Attack,
    pub clock: ClockLabel,
    pub test: TestId,
    pub n: u32,
    #[serde(with = "crate::hex")]
    pub t0: u32,
    #[serde(with = "crate::hex")]
    pub t1: u32,
    /// Alternatives separated by `|`, each a `+`-joined set of patterns.
    pub expected: String,
}

impl ReportedRow {
    pub fn observables(&self) -> Observables {
        // t1 is a sentinel register in the unrolled test
        let corrupted = if !self.test.uses_t1() && self.t1 != SENTINEL {
            vec![(reg::T1, self.t1)]
        } else {
            Vec::new()
        };
        Observables {
            t0: self.t0,
            t1: self.t1,
            corrupted,
        }
    }

    pub fn alternatives(&self) -> Vec<Vec<LabelPattern>> {
        parse_alternatives(&self.expected).expect("fixture patterns parse")
    }
}

pub fn parse_alternatives(s: &str) -> Result<Vec<Vec<LabelPattern>>, String> {
    s.split('|')
        .map(|alt| alt.split('+').map(|p| p.trim().parse()).collect())
        .collect()
}

pub fn reported_rows() -> Vec<ReportedRow> {
    ROWS.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("fixture rows parse"))
        .collect()
}
