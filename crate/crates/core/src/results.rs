//! Attempt records and the line-delimited results file.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attribution::LabelKind;
use crate::error::{Error, Result};
use crate::faults::FaultEvent;
use crate::hex;
use crate::physics::{Attack, ClockLabel, GlitchSpec, EMFI_PULSE_NS, NOMINAL_V};
use crate::testprogs::{Observables, TestId, TestProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Expected,
    CrashMute,
    Successful,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Expected, Outcome::CrashMute, Outcome::Successful];

    /// Category name used in plot data.
    pub fn category(self) -> &'static str {
        match self {
            Outcome::Expected => "expected",
            Outcome::CrashMute => "crash",
            Outcome::Successful => "success",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Expected => "expected",
            Outcome::CrashMute => "crash_mute",
            Outcome::Successful => "successful",
        })
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.to_string() == s)
            .ok_or_else(|| format!("unknown outcome {s:?}"))
    }
}

/// An unused register that no longer holds the sentinel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptedReg {
    pub reg: u8,
    #[serde(with = "hex")]
    pub value: u32,
}

/// One campaign attempt. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub index: u64,
    pub seed: u64,
    pub attack: Attack,
    pub clock_label: ClockLabel,
    pub freq_hz: f64,
    pub test: TestId,
    pub n: u32,
    pub outcome: Outcome,
    #[serde(with = "hex::option")]
    pub t0_hex: Option<u32>,
    #[serde(with = "hex::option")]
    pub t1_hex: Option<u32>,
    pub corrupted_regs: Vec<CorruptedReg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_ns: Option<f64>,
    pub delay_ns: f64,
    pub ground_truth_events: Vec<FaultEvent>,
    pub flash_fetch_count: Option<u64>,
    /// Label sets of the verified explanations; `None` until attributed.
    pub labels: Option<Vec<Vec<LabelKind>>>,
    pub unexplained: bool,
}

impl AttemptRecord {
    pub fn glitch(&self) -> Option<GlitchSpec> {
        match self.attack {
            Attack::Emfi => Some(GlitchSpec::Emfi {
                power_pct: self.power_pct?,
                delay_ns: self.delay_ns,
                x_um: self.x_um?,
                y_um: self.y_um?,
                pulse_ns: EMFI_PULSE_NS,
            }),
            Attack::Vfi => Some(GlitchSpec::Vfi {
                voltage_v: self.voltage_v?,
                length_ns: self.length_ns?,
                delay_ns: self.delay_ns,
                nominal_v: NOMINAL_V,
            }),
        }
    }

    /// Copy the glitch parameters into the flat record fields.
    pub fn set_glitch(&mut self, glitch: &GlitchSpec) {
        self.delay_ns = glitch.delay_ns();
        match *glitch {
            GlitchSpec::Emfi {
                power_pct, x_um, y_um, ..
            } => {
                self.power_pct = Some(power_pct);
                self.x_um = Some(x_um);
                self.y_um = Some(y_um);
            }
            GlitchSpec::Vfi {
                voltage_v, length_ns, ..
            } => {
                self.voltage_v = Some(voltage_v);
                self.length_ns = Some(length_ns);
            }
        }
    }

    /// Reported values, if the board answered.
    pub fn observables(&self) -> Option<Observables> {
        Some(Observables {
            t0: self.t0_hex?,
            t1: self.t1_hex?,
            corrupted: self.corrupted_regs.iter().map(|c| (c.reg, c.value)).collect(),
        })
    }

    pub fn set_observables(&mut self, program: &TestProgram, regs: &[u32; 32]) {
        let obs = program.observe(regs);
        self.t0_hex = Some(obs.t0);
        self.t1_hex = Some(obs.t1);
        self.corrupted_regs = obs
            .corrupted
            .iter()
            .map(|&(reg, value)| CorruptedReg { reg, value })
            .collect();
    }
}

pub fn render_record(r: &AttemptRecord) -> String {
    serde_json::to_string(r).expect("records always serialize")
}

pub fn parse_record(line: &str) -> Result<AttemptRecord, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

pub fn render_records(records: &[AttemptRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&render_record(r));
        out.push('\n');
    }
    out
}

/// Parse a results file body; blank lines are ignored.
pub fn parse_records(text: &str, path: &Path) -> Result<Vec<AttemptRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_record(l).map_err(|message| Error::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

pub fn read_records(path: &Path) -> Result<Vec<AttemptRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(&line).map_err(|message| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        })?);
    }
    Ok(records)
}

pub fn write_records(path: &Path, records: &[AttemptRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", render_record(r)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{Effect, Surface};

    fn sample() -> AttemptRecord {
        AttemptRecord {
            index: 3,
            seed: 1,
            attack: Attack::Emfi,
            clock_label: ClockLabel::FastEmfi,
            freq_hz: 320e6,
            test: TestId::RegisterLoop,
            n: 10000,
            outcome: Outcome::Successful,
            t0_hex: Some(0x1c16),
            t1_hex: Some(0xafa),
            corrupted_regs: vec![CorruptedReg { reg: 7, value: 0 }],
            power_pct: Some(61.25),
            x_um: Some(750.0),
            y_um: Some(0.0),
            voltage_v: None,
            length_ns: None,
            delay_ns: 12345.5,
            ground_truth_events: vec![FaultEvent::skip(4000)],
            flash_fetch_count: Some(0),
            labels: None,
            unexplained: false,
        }
    }

    #[test]
    fn field_order_and_hex() {
        let line = render_record(&sample());
        let keys = [
            "index", "seed", "attack", "clock_label", "freq_hz", "test", "n", "outcome", "t0_hex", "t1_hex",
            "corrupted_regs", "power_pct", "x_um", "y_um", "delay_ns", "ground_truth_events",
            "flash_fetch_count", "labels", "unexplained",
        ];
        let pos: Vec<usize> = keys.iter().map(|k| line.find(&format!("\"{k}\"")).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]), "{line}");
        assert!(line.contains(r#""t0_hex":"0x00001c16""#));
        assert!(line.contains(r#""corrupted_regs":[{"reg":7,"value":"0x00000000"}]"#));
        assert!(!line.contains("voltage_v"));
        assert_eq!(parse_record(&line).unwrap(), sample());
    }

    #[test]
    fn crash_records_have_null_counters() {
        let mut r = sample();
        r.outcome = Outcome::CrashMute;
        r.t0_hex = None;
        r.t1_hex = None;
        r.flash_fetch_count = None;
        let line = render_record(&r);
        assert!(line.contains(r#""t0_hex":null"#));
        assert_eq!(parse_record(&line).unwrap(), r);
        assert_eq!(r.observables(), None);
    }

    #[test]
    fn glitch_round_trip() {
        let mut r = sample();
        let g = GlitchSpec::vfi(1.25, 640.0, 99.0);
        r.attack = Attack::Vfi;
        r.power_pct = None;
        r.x_um = None;
        r.y_um = None;
        r.set_glitch(&g);
        assert_eq!(r.glitch(), Some(g));
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let good = render_record(&sample());
        let text = format!("{good}\n\n{{\"index\": 1}}\n");
        let err = parse_records(&text, Path::new("r.jsonl")).unwrap_err();
        assert!(matches!(err, Error::Record { line: 3, .. }), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/r.jsonl");
        let mut b = sample();
        b.index = 4;
        b.ground_truth_events = vec![FaultEvent::new(9, Surface::DCacheLoad, Effect::ReplaceValue { value: 5 }, None).unwrap()];
        let recs = vec![sample(), b];
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);
        assert_eq!(fs::read_to_string(&path).unwrap(), render_records(&recs));
    }
}
