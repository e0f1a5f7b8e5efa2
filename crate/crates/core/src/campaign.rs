//! Campaign orchestration: sample glitch parameters, run attempts, classify
//! outcomes and tally success rates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::FaultSchedule;
use crate::isa::{run_from, Execution, MachineState, RunResult, Termination};
use crate::physics::{
    sample_schedule, vfi_weights, Attack, ChipLayout, ClockConfig, ClockLabel, GlitchSpec, Model,
    PhysicsParams, EMFI_PULSE_NS, NOMINAL_V,
};
use crate::results::{AttemptRecord, Outcome};
use crate::testprogs::{TestId, TestProgram};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "GLITCHBENCH_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmfiRanges {
    pub power_pct: [f64; 2],
    /// Delay as a fraction of the test's execution time.
    pub delay_frac: [f64; 2],
    pub grid: [u32; 2],
    pub step_um: f64,
    /// Grid origin, measured from the lower-left package corner.
    pub origin_um: [f64; 2],
    pub pulse_ns: f64,
}

impl Default for EmfiRanges {
    fn default() -> Self {
        EmfiRanges {
            power_pct: [40.0, 80.0],
            delay_frac: [0.35, 0.65],
            grid: [8, 8],
            step_um: 750.0,
            origin_um: [0.0, 0.0],
            pulse_ns: EMFI_PULSE_NS,
        }
    }
}

impl EmfiRanges {
    pub fn points(&self) -> u64 {
        u64::from(self.grid[0]) * u64::from(self.grid[1])
    }

    /// Grid coordinates of attempt `index` (round-robin over the grid).
    pub fn point(&self, index: u64) -> (f64, f64) {
        let p = index % self.points();
        let (ix, iy) = (p % u64::from(self.grid[0]), p / u64::from(self.grid[0]));
        (
            self.origin_um[0] + ix as f64 * self.step_um,
            self.origin_um[1] + iy as f64 * self.step_um,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VfiRanges {
    pub voltage_v: [f64; 2],
    /// Glitch length range; defaults depend on the clock.
    pub length_ns: Option<[f64; 2]>,
    pub delay_frac: [f64; 2],
    pub nominal_v: f64,
}

impl Default for VfiRanges {
    fn default() -> Self {
        VfiRanges {
            voltage_v: [1.0, 1.6],
            length_ns: None,
            delay_frac: [0.35, 0.65],
            nominal_v: NOMINAL_V,
        }
    }
}

/// Longest glitches that still let the target run, per clock.
pub fn default_length_range(clock: ClockLabel) -> [f64; 2] {
    match clock {
        ClockLabel::Slow => [1000.0, 12000.0],
        ClockLabel::Medium => [150.0, 2000.0],
        ClockLabel::FastEmfi | ClockLabel::FastVfi => [60.0, 800.0],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub attack: Attack,
    pub test_id: TestId,
    #[serde(default = "default_n")]
    pub n: u32,
    pub clock: ClockLabel,
    pub attempts: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: Model,
    #[serde(default)]
    pub emfi: EmfiRanges,
    #[serde(default)]
    pub vfi: VfiRanges,
    #[serde(default)]
    pub layout: ChipLayout,
    #[serde(default)]
    pub physics: PhysicsParams,
    /// Timeout as a multiple of the fault-free cycle count.
    #[serde(default = "default_budget_factor")]
    pub budget_factor: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_n() -> u32 {
    10_000
}

fn default_budget_factor() -> u64 {
    10
}

const DEFAULT_CONFIGS: [(&str, &str); 6] = [
    ("emfi-slow", include_str!("../../../configs/emfi-slow.toml")),
    ("emfi-medium", include_str!("../../../configs/emfi-medium.toml")),
    ("emfi-fast", include_str!("../../../configs/emfi-fast.toml")),
    ("vfi-slow", include_str!("../../../configs/vfi-slow.toml")),
    ("vfi-medium", include_str!("../../../configs/vfi-medium.toml")),
    ("vfi-fast", include_str!("../../../configs/vfi-fast.toml")),
];

/// Names of the shipped configurations.
pub fn default_config_names() -> impl Iterator<Item = &'static str> {
    DEFAULT_CONFIGS.iter().map(|(n, _)| *n)
}

/// A shipped configuration by name (`emfi-slow`, ..., `vfi-fast`).
pub fn default_config(name: &str) -> Option<CampaignConfig> {
    DEFAULT_CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| CampaignConfig::parse(text, Path::new(n)).expect("shipped configs parse"))
}

/// The shipped configuration for an attack at a clock speed
/// (`fast` picks the attack's fast clock).
pub fn shipped_config(attack: Attack, speed: &str) -> Option<CampaignConfig> {
    default_config(&format!("{}-{speed}", attack.as_str()))
}

impl CampaignConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: CampaignConfig = toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate().map_err(|message| Error::Config {
            path: path.to_path_buf(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    pub fn clock_config(&self) -> ClockConfig {
        ClockConfig::preset(self.clock)
    }

    pub fn length_range(&self) -> [f64; 2] {
        self.vfi.length_ns.unwrap_or_else(|| default_length_range(self.clock))
    }

    /// Seed after applying the environment override, if set and valid.
    pub fn apply_seed_env(&mut self) -> std::result::Result<(), String> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer"))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let range = |name: &str, r: [f64; 2], lo: f64, hi: f64| {
            if r[0].is_finite() && r[1].is_finite() && lo <= r[0] && r[0] <= r[1] && r[1] <= hi {
                Ok(())
            } else {
                Err(format!("{name} = {r:?} must satisfy {lo} <= min <= max <= {hi}"))
            }
        };
        if self.attempts == 0 {
            return Err("attempts must be at least 1".into());
        }
        if self.n == 0 {
            return Err("n must be at least 1".into());
        }
        if self.budget_factor == 0 {
            return Err("budget_factor must be at least 1".into());
        }
        self.layout.validate().map_err(|e| format!("layout: {e}"))?;
        match self.attack {
            Attack::Emfi => {
                let e = &self.emfi;
                range("emfi.power_pct", e.power_pct, 0.0, 100.0)?;
                range("emfi.delay_frac", e.delay_frac, 0.0, 1.0)?;
                if e.grid[0] == 0 || e.grid[1] == 0 {
                    return Err("emfi.grid must have at least one point".into());
                }
                if !(e.pulse_ns > 0.0) {
                    return Err("emfi.pulse_ns must be positive".into());
                }
                let far = e.point(e.points() - 1);
                if !self.layout.contains(e.origin_um[0], e.origin_um[1]) || !self.layout.contains(far.0, far.1) {
                    return Err(format!("emfi grid reaches {far:?}, outside the package"));
                }
            }
            Attack::Vfi => {
                let v = &self.vfi;
                range("vfi.voltage_v", v.voltage_v, 0.0, v.nominal_v)?;
                range("vfi.delay_frac", v.delay_frac, 0.0, 1.0)?;
                range("vfi.length_ns", self.length_range(), 0.0, f64::MAX)?;
            }
        }
        Ok(())
    }
}

/// Counter-mode generator for attempt `index`: independent of execution
/// order, so attempts can run in parallel.
pub fn attempt_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

/// Draw the glitch of attempt `index`. `duration_ns` is the fault-free
/// execution time the delay is measured against.
pub fn sample_params<R: Rng + ?Sized>(config: &CampaignConfig, rng: &mut R, index: u64, duration_ns: f64) -> GlitchSpec {
    match config.attack {
        Attack::Emfi => {
            let e = &config.emfi;
            let (x_um, y_um) = e.point(index);
            let power_pct = uniform(rng, e.power_pct);
            let delay_ns = uniform(rng, e.delay_frac) * duration_ns;
            GlitchSpec::Emfi {
                power_pct,
                delay_ns,
                x_um,
                y_um,
                pulse_ns: e.pulse_ns,
            }
        }
        Attack::Vfi => {
            let v = &config.vfi;
            let voltage_v = uniform(rng, v.voltage_v);
            let length_ns = uniform(rng, config.length_range());
            let delay_ns = uniform(rng, v.delay_frac) * duration_ns;
            GlitchSpec::Vfi {
                voltage_v,
                length_ns,
                delay_ns,
                nominal_v: v.nominal_v,
            }
        }
    }
}

const CHECKPOINT_INTERVAL: u64 = 1024;

/// Fault-free reference execution of a warm-started test, with periodic
/// snapshots so faulted runs can skip the unaffected prefix.
#[derive(Debug, Clone)]
pub struct Golden {
    pub program: Arc<TestProgram>,
    pub warm: MachineState,
    pub result: RunResult,
    checkpoints: Vec<MachineState>,
}

impl Golden {
    pub fn new(program: TestProgram) -> Self {
        let warm = program.warm_state();
        let mut checkpoints = vec![warm.clone()];
        let mut exec = Execution::new(warm.clone(), &crate::faults::NO_FAULTS, u64::MAX);
        let mut next = CHECKPOINT_INTERVAL;
        while exec.step().is_some() {
            if exec.state().cycle >= next && !exec.is_done() {
                checkpoints.push(exec.state().clone());
                next = exec.state().cycle + CHECKPOINT_INTERVAL;
            }
        }
        let result = exec.finish();
        assert!(result.completed(), "fault-free run must complete");
        Golden {
            program: Arc::new(program),
            warm,
            result,
            checkpoints,
        }
    }

    pub fn cycles(&self) -> u64 {
        self.result.final_state.cycle
    }

    pub fn budget(&self, factor: u64) -> u64 {
        factor.saturating_mul(self.cycles())
    }

    /// Measured (warm) run under `schedule`, resuming from the latest
    /// snapshot before its first event.
    pub fn run(&self, schedule: &FaultSchedule, budget: u64) -> RunResult {
        let Some(first) = schedule.events().first() else {
            return if budget > self.cycles() {
                self.result.clone()
            } else {
                run_from(self.warm.clone(), schedule, budget)
            };
        };
        let idx = self.checkpoints.partition_point(|c| c.cycle <= first.cycle());
        let start = self.checkpoints[idx.saturating_sub(1)].clone();
        run_from(start, schedule, budget)
    }
}

/// Map a finished run to its outcome class.
pub fn classify(result: &RunResult, program: &TestProgram) -> Outcome {
    match result.termination {
        Termination::Completed if program.is_expected(&result.final_state.regs) => Outcome::Expected,
        Termination::Completed => Outcome::Successful,
        Termination::Trapped | Termination::BudgetExceeded => Outcome::CrashMute,
    }
}

/// Totals for one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub attempts: u64,
    pub expected: u64,
    pub crash_mute: u64,
    pub successful: u64,
    pub success_rate: f64,
    /// Per grid point (EMFI only).
    pub points: Vec<PointTally>,
    /// Success counts binned along each sampled parameter.
    pub marginals: Vec<Marginal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointTally {
    pub x_um: f64,
    pub y_um: f64,
    pub expected: u64,
    pub crash: u64,
    pub success: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub parameter: String,
    pub bins: Vec<MarginalBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalBin {
    pub lo: f64,
    pub hi: f64,
    pub attempts: u64,
    pub successful: u64,
}

const MARGINAL_BINS: usize = 8;

fn marginal(parameter: &str, values: &[(f64, Outcome)]) -> Option<Marginal> {
    let lo = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return None;
    }
    let width = (hi - lo) / MARGINAL_BINS as f64;
    let mut bins: Vec<MarginalBin> = (0..MARGINAL_BINS)
        .map(|i| MarginalBin {
            lo: lo + width * i as f64,
            hi: if i + 1 == MARGINAL_BINS { hi } else { lo + width * (i + 1) as f64 },
            attempts: 0,
            successful: 0,
        })
        .collect();
    for &(v, o) in values {
        let i = if width > 0.0 {
            (((v - lo) / width) as usize).min(MARGINAL_BINS - 1)
        } else {
            0
        };
        bins[i].attempts += 1;
        bins[i].successful += u64::from(o == Outcome::Successful);
    }
    Some(Marginal {
        parameter: parameter.to_string(),
        bins,
    })
}

impl CampaignSummary {
    pub fn from_records(records: &[AttemptRecord]) -> Self {
        let count = |o| records.iter().filter(|r| r.outcome == o).count() as u64;
        let attempts = records.len() as u64;
        let successful = count(Outcome::Successful);
        let mut points: BTreeMap<(u64, u64), PointTally> = BTreeMap::new();
        for r in records {
            if let (Some(x), Some(y)) = (r.x_um, r.y_um) {
                let t = points.entry((x.to_bits(), y.to_bits())).or_insert(PointTally {
                    x_um: x,
                    y_um: y,
                    expected: 0,
                    crash: 0,
                    success: 0,
                });
                match r.outcome {
                    Outcome::Expected => t.expected += 1,
                    Outcome::CrashMute => t.crash += 1,
                    Outcome::Successful => t.success += 1,
                }
            }
        }
        let mut points: Vec<PointTally> = points.into_values().collect();
        points.sort_by(|a, b| (a.y_um, a.x_um).partial_cmp(&(b.y_um, b.x_um)).unwrap());
        let series = |f: fn(&AttemptRecord) -> Option<f64>| -> Vec<(f64, Outcome)> {
            records.iter().filter_map(|r| f(r).map(|v| (v, r.outcome))).collect()
        };
        let marginals = [
            ("power_pct", series(|r| r.power_pct)),
            ("voltage_v", series(|r| r.voltage_v)),
            ("length_ns", series(|r| r.length_ns)),
            ("delay_ns", series(|r| Some(r.delay_ns))),
        ]
        .iter()
        .filter_map(|(name, v)| marginal(name, v))
        .collect();
        CampaignSummary {
            attempts,
            expected: count(Outcome::Expected),
            crash_mute: count(Outcome::CrashMute),
            successful,
            success_rate: if attempts == 0 { 0.0 } else { successful as f64 / attempts as f64 },
            points,
            marginals,
        }
    }
}

/// A configured campaign with its golden reference.
pub struct Campaign {
    pub config: CampaignConfig,
    pub golden: Golden,
    clock: ClockConfig,
}

impl Campaign {
    pub fn new(config: CampaignConfig) -> Result<Self> {
        config.validate().map_err(|message| Error::Config {
            path: config.output.clone().unwrap_or_default(),
            message,
        })?;
        let golden = Golden::new(config.test_id.build(config.n));
        let clock = config.clock_config();
        Ok(Campaign { config, golden, clock })
    }

    pub fn program(&self) -> &TestProgram {
        &self.golden.program
    }

    /// Fault-free execution time of the measured run.
    pub fn duration_ns(&self) -> f64 {
        self.golden.cycles() as f64 * self.clock.period_ns()
    }

    fn empty_record(&self, index: u64) -> AttemptRecord {
        AttemptRecord {
            index,
            seed: self.config.seed,
            attack: self.config.attack,
            clock_label: self.clock.label,
            freq_hz: self.clock.freq_hz,
            test: self.config.test_id,
            n: self.config.n,
            outcome: Outcome::CrashMute,
            t0_hex: None,
            t1_hex: None,
            corrupted_regs: Vec::new(),
            power_pct: None,
            x_um: None,
            y_um: None,
            voltage_v: None,
            length_ns: None,
            delay_ns: 0.0,
            ground_truth_events: Vec::new(),
            flash_fetch_count: None,
            labels: None,
            unexplained: false,
        }
    }

    pub fn run_attempt(&self, index: u64) -> AttemptRecord {
        let mut rng = attempt_rng(self.config.seed, index);
        let glitch = sample_params(&self.config, &mut rng, index, self.duration_ns());
        let weights = match glitch {
            GlitchSpec::Emfi { x_um, y_um, .. } => self
                .config
                .layout
                .surface_weights(x_um, y_um)
                .expect("grid validated against the package"),
            GlitchSpec::Vfi { .. } => vfi_weights(),
        };
        let sampled = sample_schedule(
            &mut rng,
            self.config.model,
            &glitch,
            &self.clock,
            &weights,
            &self.config.physics,
            0,
        );
        let mut record = self.empty_record(index);
        record.set_glitch(&glitch);
        record.ground_truth_events = sampled.schedule.events().to_vec();
        if sampled.crashed {
            return record;
        }
        let result = self.golden.run(&sampled.schedule, self.golden.budget(self.config.budget_factor));
        record.outcome = classify(&result, self.program());
        record.flash_fetch_count = Some(result.final_state.flash_fetch_count);
        if result.completed() {
            record.set_observables(self.program(), &result.final_state.regs);
        }
        record
    }

    /// All attempts, in index order regardless of execution order.
    pub fn run(&self) -> (Vec<AttemptRecord>, CampaignSummary) {
        let records: Vec<AttemptRecord> = (0..self.config.attempts)
            .into_par_iter()
            .map(|i| self.run_attempt(i))
            .collect();
        let summary = CampaignSummary::from_records(&records);
        (records, summary)
    }
}

pub fn run_campaign(config: &CampaignConfig) -> Result<(Vec<AttemptRecord>, CampaignSummary)> {
    Ok(Campaign::new(config.clone())?.run())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::faults::{FaultEvent, NO_FAULTS};
    use crate::isa::Execution;
    use crate::testprogs::Role;

    fn config(attack: Attack, clock: ClockLabel, test: TestId, attempts: u64) -> CampaignConfig {
        let speed = match clock {
            ClockLabel::Slow => "slow",
            ClockLabel::Medium => "medium",
            _ => "fast",
        };
        let mut c = shipped_config(attack, speed).unwrap();
        c.test_id = test;
        c.attempts = attempts;
        c
    }

    #[test]
    fn shipped_configs_are_valid() {
        let names: Vec<_> = default_config_names().collect();
        assert_eq!(names.len(), 6);
        for name in names {
            let c = default_config(name).unwrap();
            assert_eq!(c.model, Model::Charge);
            assert_eq!(c.layout, ChipLayout::default());
            let round = CampaignConfig::parse(&c.to_toml(), Path::new("x")).unwrap();
            assert_eq!(round, c);
        }
        assert_eq!(shipped_config(Attack::Vfi, "fast").unwrap().clock, ClockLabel::FastVfi);
        assert_eq!(shipped_config(Attack::Emfi, "fast").unwrap().clock, ClockLabel::FastEmfi);
    }

    #[test]
    fn config_errors_name_the_field() {
        let err = CampaignConfig::parse("attack = \"emfi\"\ntest_id = \"register_loop\"\nclock = \"slow\"\nattempts = \"many\"\n", Path::new("c.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("c.toml") && err.contains("attempts") && err.contains("line 4"), "{err}");
        let err = CampaignConfig::parse("attack = \"emfi\"\ntest_id = \"register_loop\"\nclock = \"slow\"\nattempts = 0\n", Path::new("c.toml"))
            .unwrap_err()
            .to_string();
        assert!(err.contains("attempts"), "{err}");
    }

    #[test]
    fn sampled_parameters_stay_in_range() {
        let emfi = config(Attack::Emfi, ClockLabel::Medium, TestId::RegisterLoop, 1);
        let vfi = config(Attack::Vfi, ClockLabel::Medium, TestId::RegisterLoop, 1);
        let dur = 1000.0;
        for i in 0..2000 {
            let mut rng = attempt_rng(9, i);
            match sample_params(&emfi, &mut rng, i, dur) {
                GlitchSpec::Emfi {
                    power_pct, delay_ns, x_um, y_um, ..
                } => {
                    assert!((40.0..=80.0).contains(&power_pct));
                    assert!((350.0..=650.0).contains(&delay_ns));
                    assert!(x_um <= 5250.0 && y_um <= 5250.0);
                }
                g => panic!("{g:?}"),
            }
            match sample_params(&vfi, &mut rng, i, dur) {
                GlitchSpec::Vfi {
                    voltage_v,
                    length_ns,
                    delay_ns,
                    ..
                } => {
                    assert!((1.0..=1.6).contains(&voltage_v));
                    assert!(length_ns <= 2000.0);
                    assert!((350.0..=650.0).contains(&delay_ns));
                }
                g => panic!("{g:?}"),
            }
        }
    }

    #[test]
    fn rng_streams_are_independent_of_order() {
        let a: u64 = attempt_rng(5, 17).gen();
        let _ = attempt_rng(5, 3).gen::<u64>();
        assert_eq!(a, attempt_rng(5, 17).gen::<u64>());
        assert_ne!(a, attempt_rng(5, 18).gen::<u64>());
    }

    #[test]
    fn checkpointed_runs_match_full_runs() {
        let golden = Golden::new(TestId::MemoryLoop.build(400));
        let budget = golden.budget(10);
        for cycle in [0, 5, 1500, 2048, 2600] {
            let sched = FaultSchedule::new(vec![FaultEvent::skip(cycle)], true).unwrap();
            assert_eq!(golden.run(&sched, budget), run_from(golden.warm.clone(), &sched, budget));
        }
        assert_eq!(golden.run(&NO_FAULTS, budget), run_from(golden.warm.clone(), &NO_FAULTS, budget));
    }

    #[test]
    fn classification_examples() {
        let p = TestId::RegisterLoop.build(10_000);
        let mut regs = [crate::faults::SENTINEL; 32];
        regs[0] = 0;
        regs[2] = crate::isa::STACK_TOP;
        let done = |regs: [u32; 32]| {
            let mut s = p.initial_state();
            s.regs = regs;
            classify(
                &RunResult {
                    termination: Termination::Completed,
                    final_state: s,
                    trap_cause: None,
                },
                &p,
            )
        };
        regs[5] = 0x2710;
        regs[6] = 0;
        assert_eq!(done(regs), Outcome::Expected);
        regs[5] = 0x270f;
        assert_eq!(done(regs), Outcome::Successful);
        regs[5] = 0x2710;
        regs[9] = 0;
        assert_eq!(done(regs), Outcome::Successful);
    }

    #[test]
    fn branch_skip_attempt_is_successful() {
        let golden = Golden::new(TestId::RegisterLoop.build(10_000));
        let mut exec = Execution::new(golden.warm.clone(), &NO_FAULTS, u64::MAX);
        let mut branches = 0;
        let mut at = 0;
        while let Some(info) = exec.step() {
            if golden.program.role_at(info.pc) == Some(Role::Branch) {
                branches += 1;
                if branches == 7190 {
                    at = info.start_cycle;
                }
            }
        }
        let sched = FaultSchedule::new(vec![FaultEvent::skip(at)], true).unwrap();
        let r = golden.run(&sched, golden.budget(10));
        assert_eq!(classify(&r, &golden.program), Outcome::Successful);
        let (t0, t1) = (r.final_state.regs[5], r.final_state.regs[6]);
        assert_eq!((t0, t1), (0x1c16, 0xafa));
        assert_eq!(t0 + t1, 10_000);
    }

    #[test]
    fn crash_and_quiet_attempts() {
        let mut c = config(Attack::Emfi, ClockLabel::FastEmfi, TestId::RegisterLoop, 256);
        c.n = 200;
        // every cycle crashes
        c.physics.emfi.crash_threshold = -1e9;
        c.physics.emfi.crash_max = 1.0;
        let (records, summary) = run_campaign(&c).unwrap();
        assert_eq!(summary.crash_mute, 256);
        assert!(records.iter().all(|r| r.t0_hex.is_none() && r.flash_fetch_count.is_none()));

        // no energy reaches the chip
        c.physics = PhysicsParams::default();
        c.emfi.power_pct = [0.0, 0.0];
        let (records, summary) = run_campaign(&c).unwrap();
        assert_eq!(summary.expected, 256);
        assert!(records.iter().all(|r| r.ground_truth_events.is_empty() && r.t0_hex == Some(200)));
    }

    #[test]
    fn grid_round_robin_and_determinism() {
        let c = config(Attack::Emfi, ClockLabel::FastEmfi, TestId::RegisterLoop, 64 * 3);
        let mut small = c.clone();
        small.n = 100;
        let (a, summary) = run_campaign(&small).unwrap();
        assert_eq!(summary.points.len(), 64);
        assert!(summary.points.iter().all(|p| p.expected + p.crash + p.success == 3));
        assert_eq!(summary.expected + summary.crash_mute + summary.successful, summary.attempts);
        let (b, _) = run_campaign(&small).unwrap();
        assert_eq!(crate::results::render_records(&a), crate::results::render_records(&b));
        assert!(a.iter().enumerate().all(|(i, r)| r.index == i as u64));
    }

    #[test]
    fn expected_attempts_leave_reported_registers_untouched() {
        // sp is not reported, so a corrupted stack pointer alone stays Expected
        for attack in [Attack::Emfi, Attack::Vfi] {
            for test in TestId::ALL {
                let mut c = config(attack, ClockLabel::Medium, test, 600);
                c.clock = if attack == Attack::Emfi { ClockLabel::FastEmfi } else { ClockLabel::FastVfi };
                c.n = 300;
                let campaign = Campaign::new(c).unwrap();
                let (records, _) = campaign.run();
                let golden = &campaign.golden.result.final_state;
                for r in records.iter().filter(|r| r.outcome == Outcome::Expected) {
                    let sched = FaultSchedule::new(r.ground_truth_events.clone(), true).unwrap();
                    let rerun = campaign.golden.run(&sched, campaign.golden.budget(10));
                    let mut regs = rerun.final_state.regs;
                    regs[2] = golden.regs[2];
                    assert_eq!(regs, golden.regs, "{attack} {test} attempt {}", r.index);
                }
            }
        }
    }
}
