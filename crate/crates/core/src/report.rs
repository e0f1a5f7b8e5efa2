//! Text summaries and sensitivity-map plot data for a results file.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::Serialize;

use crate::campaign::{attempt_rng, CampaignSummary};
use crate::physics::{Attack, ClockLabel};
use crate::results::{AttemptRecord, Outcome};
use crate::testprogs::TestId;

/// Largest plot offset added to a grid point so markers do not overlap.
pub const JITTER_UM: f64 = 400.0;

// Separates the jitter stream from the attempt's physics stream.
const JITTER_SALT: u64 = 0x6a17_7e12_5ca7_7e25;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub attempts: u64,
    pub expected: u64,
    pub crash_mute: u64,
    pub successful: u64,
}

impl Tally {
    fn add(&mut self, outcome: Outcome) {
        self.attempts += 1;
        match outcome {
            Outcome::Expected => self.expected += 1,
            Outcome::CrashMute => self.crash_mute += 1,
            Outcome::Successful => self.successful += 1,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.successful as f64 / self.attempts as f64
        }
    }
}

/// Outcome totals overall and per (attack, clock, test).
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub total: Tally,
    pub groups: BTreeMap<(Attack, ClockLabel, TestId), Tally>,
    pub labeled: u64,
    pub unexplained: u64,
}

impl Report {
    pub fn new(records: &[AttemptRecord]) -> Self {
        let mut r = Report::default();
        for rec in records {
            r.total.add(rec.outcome);
            r.groups
                .entry((rec.attack, rec.clock_label, rec.test))
                .or_default()
                .add(rec.outcome);
            r.labeled += u64::from(rec.labels.is_some());
            r.unexplained += u64::from(rec.unexplained);
        }
        r
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let t = &self.total;
        let _ = writeln!(
            s,
            "attempts {}  expected {}  crash/mute {}  successful {}  success rate {:.4}",
            t.attempts,
            t.expected,
            t.crash_mute,
            t.successful,
            t.success_rate()
        );
        for ((attack, clock, test), g) in &self.groups {
            let _ = writeln!(
                s,
                "  {:<4} {:<9} {:<13} attempts {:>6}  successful {:>5}  success rate {:.4}",
                attack.as_str(),
                clock.as_str(),
                test.as_str(),
                g.attempts,
                g.successful,
                g.success_rate()
            );
        }
        if self.labeled > 0 {
            let _ = writeln!(s, "attributed {}  unexplained {}", self.labeled, self.unexplained);
        }
        s
    }
}

/// Plot offset of one EMFI attempt, uniform in `[0, JITTER_UM]` on both axes
/// and fixed by the record's seed and index.
pub fn jitter(seed: u64, index: u64) -> (f64, f64) {
    let mut rng = attempt_rng(seed ^ JITTER_SALT, index);
    (rng.gen_range(0.0..=JITTER_UM), rng.gen_range(0.0..=JITTER_UM))
}

#[derive(Serialize)]
struct PointRow {
    x_um: f64,
    y_um: f64,
    expected_count: u64,
    crash_count: u64,
    success_count: u64,
}

#[derive(Serialize)]
struct EmfiScatterRow {
    index: u64,
    x_um: f64,
    y_um: f64,
    category: &'static str,
}

#[derive(Serialize)]
struct VfiScatterRow {
    index: u64,
    voltage_v: f64,
    length_ns: f64,
    category: &'static str,
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("plain rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn emfi(records: &[AttemptRecord]) -> impl Iterator<Item = &AttemptRecord> {
    records.iter().filter(|r| r.attack == Attack::Emfi)
}

/// Per-grid-point outcome counts of the EMFI records.
pub fn points_csv(records: &[AttemptRecord]) -> String {
    let emfi: Vec<AttemptRecord> = emfi(records).cloned().collect();
    let summary = CampaignSummary::from_records(&emfi);
    let rows = summary.points.iter().map(|p| PointRow {
        x_um: p.x_um,
        y_um: p.y_um,
        expected_count: p.expected,
        crash_count: p.crash,
        success_count: p.success,
    });
    with_header(to_csv(rows), "x_um,y_um,expected_count,crash_count,success_count")
}

/// One jittered marker per EMFI attempt.
pub fn emfi_scatter_csv(records: &[AttemptRecord]) -> String {
    let rows = emfi(records).filter_map(|r| {
        let (dx, dy) = jitter(r.seed, r.index);
        Some(EmfiScatterRow {
            index: r.index,
            x_um: r.x_um? + dx,
            y_um: r.y_um? + dy,
            category: r.outcome.category(),
        })
    });
    with_header(to_csv(rows), "index,x_um,y_um,category")
}

/// (voltage, length, outcome) per VFI attempt.
pub fn vfi_scatter_csv(records: &[AttemptRecord]) -> String {
    let rows = records.iter().filter(|r| r.attack == Attack::Vfi).filter_map(|r| {
        Some(VfiScatterRow {
            index: r.index,
            voltage_v: r.voltage_v?,
            length_ns: r.length_ns?,
            category: r.outcome.category(),
        })
    });
    with_header(to_csv(rows), "index,voltage_v,length_ns,category")
}

// csv only writes a header once a row exists
fn with_header(body: String, header: &str) -> String {
    if body.is_empty() {
        format!("{header}\n")
    } else {
        body
    }
}

fn color(category: &str) -> &'static str {
    match category {
        "expected" => "#2e9d44",
        "crash" => "#e3b505",
        _ => "#d1342f",
    }
}

/// Static scatter image: jittered EMFI markers, or voltage against length
/// for VFI records.
pub fn scatter_svg(records: &[AttemptRecord]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 640.0;
    const M: f64 = 48.0;
    let mut pts: Vec<(f64, f64, &'static str)> = Vec::new();
    let (xl, yl) = if emfi(records).next().is_some() {
        for r in emfi(records) {
            if let (Some(x), Some(y)) = (r.x_um, r.y_um) {
                let (dx, dy) = jitter(r.seed, r.index);
                pts.push((x + dx, y + dy, r.outcome.category()));
            }
        }
        ("x (um)", "y (um)")
    } else {
        for r in records {
            if let (Some(v), Some(l)) = (r.voltage_v, r.length_ns) {
                pts.push((l, v, r.outcome.category()));
            }
        }
        ("length (ns)", "voltage (V)")
    };
    let range = |f: fn(&(f64, f64, &str)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (0.0, 1.0)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    // successes last so they stay visible
    for cat in ["expected", "crash", "success"] {
        for p in pts.iter().filter(|p| p.2 == cat) {
            let x = M + (p.0 - x0) / (x1 - x0) * (W - 2.0 * M);
            let y = H - M - (p.1 - y0) / (y1 - y0) * (H - 2.0 * M);
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="2.5" fill="{}"/>"#, color(cat));
        }
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xl}</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{yl}</text>"#,
        H / 2.0,
        H / 2.0
    );
    s.push_str("</svg>\n");
    s
}
