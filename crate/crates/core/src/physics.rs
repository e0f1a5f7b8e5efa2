//! Glitch physics: from a physical glitch description and a clock to
//! per-cycle fault and crash probabilities, and from those to a sampled
//! [`FaultSchedule`].
//!
//! Two susceptibility models are available. The sampling model gives every
//! flip-flop a fixed susceptibility window, so the chance that a transient
//! lands in one per cycle is `min(1, (W + L) / period)`. The charge model
//! compares the injected charge against a critical charge that grows with
//! the clock period. For voltage glitches the charge setting selects a
//! timing-violation model in the same spirit: a supply drop lengthens the
//! critical path and a fault occurs when the extra delay eats the slack.
//!
//! All constants are invented; only the orderings they produce matter.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faults::{sample_effect, EffectParams, FaultEvent, FaultSchedule, Surface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockLabel {
    Slow,
    Medium,
    FastEmfi,
    FastVfi,
}

impl ClockLabel {
    pub const ALL: [ClockLabel; 4] = [
        ClockLabel::Slow,
        ClockLabel::Medium,
        ClockLabel::FastEmfi,
        ClockLabel::FastVfi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClockLabel::Slow => "slow",
            ClockLabel::Medium => "medium",
            ClockLabel::FastEmfi => "fast_emfi",
            ClockLabel::FastVfi => "fast_vfi",
        }
    }

    /// Name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            ClockLabel::Slow => "slow",
            ClockLabel::Medium => "medium",
            ClockLabel::FastEmfi => "fast-em",
            ClockLabel::FastVfi => "fast-vfi",
        }
    }

    pub fn config(self) -> ClockConfig {
        ClockConfig::preset(self)
    }
}

impl fmt::Display for ClockLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClockLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ClockLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s || c.cli_name() == s)
            .ok_or_else(|| format!("unknown clock {s:?} (slow, medium, fast-em, fast-vfi)"))
    }
}

/// Core clock setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockConfig {
    pub label: ClockLabel,
    pub freq_hz: f64,
    pub pll_enabled: bool,
}

impl ClockConfig {
    pub fn preset(label: ClockLabel) -> Self {
        let (freq_hz, pll_enabled) = match label {
            ClockLabel::Slow => (16e6, false),
            ClockLabel::Medium => (90e6, true),
            ClockLabel::FastEmfi => (320e6, true),
            ClockLabel::FastVfi => (240e6, true),
        };
        ClockConfig {
            label,
            freq_hz,
            pll_enabled,
        }
    }

    pub fn period_ns(&self) -> f64 {
        1e9 / self.freq_hz
    }

    /// Number of clock cycles covered by `ns` nanoseconds.
    pub fn cycles(&self, ns: f64) -> f64 {
        ns * self.freq_hz / 1e9
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attack {
    Emfi,
    Vfi,
}

impl Attack {
    pub fn as_str(self) -> &'static str {
        match self {
            Attack::Emfi => "emfi",
            Attack::Vfi => "vfi",
        }
    }
}

impl fmt::Display for Attack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Attack {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "emfi" | "em" => Ok(Attack::Emfi),
            "vfi" | "voltage" => Ok(Attack::Vfi),
            _ => Err(format!("unknown attack {s:?} (emfi, vfi)")),
        }
    }
}

/// Susceptibility model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Sampling,
    #[default]
    Charge,
}

impl FromStr for Model {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sampling" => Ok(Model::Sampling),
            "charge" => Ok(Model::Charge),
            _ => Err(format!("unknown model {s:?} (sampling, charge)")),
        }
    }
}

pub const EMFI_PULSE_NS: f64 = 50.0;
pub const NOMINAL_V: f64 = 1.8;

/// Physical parameters of one glitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "attack", rename_all = "lowercase")]
pub enum GlitchSpec {
    Emfi {
        power_pct: f64,
        delay_ns: f64,
        x_um: f64,
        y_um: f64,
        pulse_ns: f64,
    },
    Vfi {
        voltage_v: f64,
        length_ns: f64,
        delay_ns: f64,
        nominal_v: f64,
    },
}

impl GlitchSpec {
    pub fn emfi(power_pct: f64, delay_ns: f64, x_um: f64, y_um: f64) -> Self {
        GlitchSpec::Emfi {
            power_pct,
            delay_ns,
            x_um,
            y_um,
            pulse_ns: EMFI_PULSE_NS,
        }
    }

    pub fn vfi(voltage_v: f64, length_ns: f64, delay_ns: f64) -> Self {
        GlitchSpec::Vfi {
            voltage_v,
            length_ns,
            delay_ns,
            nominal_v: NOMINAL_V,
        }
    }

    pub fn attack(&self) -> Attack {
        match self {
            GlitchSpec::Emfi { .. } => Attack::Emfi,
            GlitchSpec::Vfi { .. } => Attack::Vfi,
        }
    }

    pub fn delay_ns(&self) -> f64 {
        match *self {
            GlitchSpec::Emfi { delay_ns, .. } | GlitchSpec::Vfi { delay_ns, .. } => delay_ns,
        }
    }

    /// How long the disturbance lasts.
    pub fn duration_ns(&self) -> f64 {
        match *self {
            GlitchSpec::Emfi { pulse_ns, .. } => pulse_ns,
            GlitchSpec::Vfi { length_ns, .. } => length_ns,
        }
    }

    /// Reject physically meaningless values. Campaign ranges are narrower
    /// and enforced when sampling.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGlitch(msg));
        let finite = |v: f64| v.is_finite();
        match *self {
            GlitchSpec::Emfi {
                power_pct,
                delay_ns,
                x_um,
                y_um,
                pulse_ns,
            } => {
                if ![power_pct, delay_ns, x_um, y_um, pulse_ns].into_iter().all(finite) {
                    return bad("non-finite EMFI parameter".into());
                }
                if !(0.0..=100.0).contains(&power_pct) {
                    return bad(format!("power {power_pct}% outside 0..100"));
                }
                if pulse_ns <= 0.0 {
                    return bad(format!("pulse length {pulse_ns} ns"));
                }
                if delay_ns < 0.0 {
                    return bad(format!("negative delay {delay_ns} ns"));
                }
            }
            GlitchSpec::Vfi {
                voltage_v,
                length_ns,
                delay_ns,
                nominal_v,
            } => {
                if ![voltage_v, length_ns, delay_ns, nominal_v].into_iter().all(finite) {
                    return bad("non-finite VFI parameter".into());
                }
                if !(0.0..=nominal_v).contains(&voltage_v) {
                    return bad(format!("glitch voltage {voltage_v} V outside 0..{nominal_v}"));
                }
                if length_ns < 0.0 {
                    return bad(format!("negative glitch length {length_ns} ns"));
                }
                if delay_ns < 0.0 {
                    return bad(format!("negative delay {delay_ns} ns"));
                }
            }
        }
        Ok(())
    }
}

/// First affected cycle and the (possibly fractional) number of cycles the
/// glitch covers.
pub fn affected_cycles(glitch: &GlitchSpec, clock: &ClockConfig, trace_start_cycle: u64) -> (u64, f64) {
    let first = trace_start_cycle + clock.cycles(glitch.delay_ns()).floor() as u64;
    (first, clock.cycles(glitch.duration_ns()).max(0.0))
}

/// Per-surface multipliers at one probe position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceWeights(pub [f64; 6]);

impl SurfaceWeights {
    pub fn uniform(w: f64) -> Self {
        SurfaceWeights([w; 6])
    }

    pub fn get(&self, s: Surface) -> f64 {
        self.0[s.index()]
    }

    pub fn set(&mut self, s: Surface, w: f64) {
        self.0[s.index()] = w;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// `[x0, y0, x1, y1]` in µm, half-open on the upper edges.
    pub rect: [f64; 4],
    pub surface: Surface,
    pub weight: f64,
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        x >= x0 && x < x1 && y >= y0 && y < y1
    }
}

/// Spatial sensitivity of the package to the EM probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChipLayout {
    pub package_um: [f64; 2],
    pub default_weight: f64,
    pub regions: Vec<Region>,
}

impl Default for ChipLayout {
    /// The flash-interface pins sit in the lower-right quadrant.
    fn default() -> Self {
        ChipLayout {
            package_um: [6000.0, 6000.0],
            default_weight: 1.0,
            regions: vec![Region {
                rect: [3000.0, 0.0, 6000.0, 3000.0],
                surface: Surface::FlashFetch,
                weight: 2.5,
            }],
        }
    }
}

impl ChipLayout {
    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.package_um;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidGlitch(format!("package size {w}x{h} um")));
        }
        if self.default_weight < 0.0 {
            return Err(Error::InvalidGlitch("negative default weight".into()));
        }
        for r in &self.regions {
            let [x0, y0, x1, y1] = r.rect;
            if r.weight < 0.0 || x0 < 0.0 || y0 < 0.0 || x1 > w || y1 > h || x0 >= x1 || y0 >= y1 {
                return Err(Error::InvalidGlitch(format!("bad layout region {r:?}")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x_um: f64, y_um: f64) -> bool {
        (0.0..=self.package_um[0]).contains(&x_um) && (0.0..=self.package_um[1]).contains(&y_um)
    }

    /// Weight of every surface at `(x_um, y_um)`: the weight of a region
    /// covering the point for its surface, the default weight otherwise.
    pub fn surface_weights(&self, x_um: f64, y_um: f64) -> Result<SurfaceWeights> {
        if !self.contains(x_um, y_um) {
            return Err(Error::OutsidePackage { x_um, y_um });
        }
        let mut w = SurfaceWeights::uniform(self.default_weight);
        for r in self.regions.iter().filter(|r| r.contains(x_um, y_um)) {
            w.set(r.surface, r.weight);
        }
        Ok(w)
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmfiParams {
    /// Probe voltage at 100 % power.
    pub max_pulse_v: f64,
    /// Critical charge of on-core logic: `q0 + q1 * period_ns` (V·ns).
    pub q0: f64,
    pub q1: f64,
    /// Critical charge of the flash interface; independent of the core clock.
    pub flash_threshold: f64,
    /// Width of every logistic transition (V·ns).
    pub softness: f64,
    /// Charge at which resets become likely.
    pub crash_threshold: f64,
    pub crash_max: f64,
    /// Sampling model: susceptibility window and transient length (ns).
    pub window_ns: f64,
    pub latch_ns: f64,
    /// Sampling model: charge needed to disturb a latch in its window.
    pub sampling_threshold: f64,
}

impl Default for EmfiParams {
    fn default() -> Self {
        EmfiParams {
            max_pulse_v: 470.0,
            q0: 5000.0,
            q1: 3200.0,
            flash_threshold: 30000.0,
            softness: 1500.0,
            crash_threshold: 30000.0,
            crash_max: 0.25,
            window_ns: 0.5,
            latch_ns: 1.5,
            sampling_threshold: 15000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VfiParams {
    /// Extra critical-path delay per volt of supply drop (ns/V).
    pub delay_per_volt_ns: f64,
    /// Setup time and clock-to-q overhead eaten from every period (ns).
    pub setup_ns: f64,
    pub sigma_ns: f64,
    /// Fraction of cycles that exercise a critical path.
    pub activity: f64,
    /// Voltage-driven faults independent of timing.
    pub brownout_max: f64,
    pub brownout_dv: f64,
    pub brownout_width_v: f64,
    /// Reset hazard per nanosecond of glitch at deep drops.
    pub crash_hazard_per_ns: f64,
    pub crash_dv: f64,
    pub crash_width_v: f64,
    /// Drops shallower than this are scaled down linearly to zero.
    pub ramp_v: f64,
    /// Sampling model counterpart of the timing term.
    pub window_ns: f64,
    pub latch_ns: f64,
    pub sampling_dv: f64,
    pub sampling_width_v: f64,
}

impl Default for VfiParams {
    fn default() -> Self {
        VfiParams {
            delay_per_volt_ns: 8.0,
            setup_ns: 2.5,
            sigma_ns: 1.5,
            activity: 0.02,
            brownout_max: 0.02,
            brownout_dv: 0.55,
            brownout_width_v: 0.05,
            crash_hazard_per_ns: 8e-4,
            crash_dv: 0.65,
            crash_width_v: 0.04,
            ramp_v: 0.1,
            window_ns: 0.5,
            latch_ns: 1.5,
            sampling_dv: 0.5,
            sampling_width_v: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsParams {
    pub emfi: EmfiParams,
    pub vfi: VfiParams,
    pub effects: EffectParams,
}

/// Fault probability per surface and crash probability, for one full cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleProbabilities {
    pub surfaces: [f64; 6],
    pub crash: f64,
}

impl CycleProbabilities {
    pub const ZERO: CycleProbabilities = CycleProbabilities {
        surfaces: [0.0; 6],
        crash: 0.0,
    };

    /// Probability that at least one surface faults.
    pub fn fault(&self) -> f64 {
        1.0 - self.surfaces.iter().map(|p| 1.0 - p).product::<f64>()
    }

    pub fn surface(&self, s: Surface) -> f64 {
        self.surfaces[s.index()]
    }
}

/// Sampling-model chance that a transient of length `latch_ns` overlaps a
/// susceptibility window of `window_ns` in one cycle.
pub fn timing_hit_probability(window_ns: f64, latch_ns: f64, period_ns: f64) -> f64 {
    ((window_ns + latch_ns) / period_ns).clamp(0.0, 1.0)
}

/// Injected EM charge before spatial weighting (V·ns).
pub fn emfi_charge(power_pct: f64, pulse_ns: f64, params: &EmfiParams) -> f64 {
    (power_pct / 100.0) * params.max_pulse_v * pulse_ns
}

/// Per-cycle fault probability on every surface plus crash probability.
pub fn fault_and_crash_probability(
    model: Model,
    glitch: &GlitchSpec,
    clock: &ClockConfig,
    weights: &SurfaceWeights,
    params: &PhysicsParams,
) -> CycleProbabilities {
    let period = clock.period_ns();
    match *glitch {
        GlitchSpec::Emfi {
            power_pct,
            pulse_ns,
            ..
        } => {
            let p = &params.emfi;
            let q = emfi_charge(power_pct, pulse_ns, p);
            if q <= 0.0 {
                return CycleProbabilities::ZERO;
            }
            let mut surfaces = [0.0; 6];
            for s in Surface::ALL {
                let qs = q * weights.get(s);
                if qs <= 0.0 {
                    continue;
                }
                surfaces[s.index()] = match (model, s) {
                    (_, Surface::FlashFetch) => logistic((qs - p.flash_threshold) / p.softness),
                    (Model::Charge, _) => logistic((qs - (p.q0 + p.q1 * period)) / p.softness),
                    (Model::Sampling, _) => {
                        timing_hit_probability(p.window_ns, p.latch_ns, period)
                            * logistic((qs - p.sampling_threshold) / p.softness)
                    }
                };
            }
            CycleProbabilities {
                surfaces,
                crash: p.crash_max * logistic((q - p.crash_threshold) / p.softness),
            }
        }
        GlitchSpec::Vfi {
            voltage_v,
            nominal_v,
            ..
        } => {
            let p = &params.vfi;
            let dv = nominal_v - voltage_v;
            if dv <= 0.0 {
                return CycleProbabilities::ZERO;
            }
            let ramp = (dv / p.ramp_v).min(1.0);
            let timing = match model {
                Model::Charge => {
                    let slack = period - p.setup_ns;
                    p.activity * logistic((p.delay_per_volt_ns * dv - slack) / p.sigma_ns)
                }
                Model::Sampling => {
                    p.activity
                        * timing_hit_probability(p.window_ns, p.latch_ns, period)
                        * logistic((dv - p.sampling_dv) / p.sampling_width_v)
                }
            };
            let brownout = p.brownout_max * logistic((dv - p.brownout_dv) / p.brownout_width_v);
            let total = (ramp * (timing + brownout)).clamp(0.0, 1.0);
            let weight_sum: f64 = weights.0.iter().sum();
            let mut surfaces = [0.0; 6];
            if weight_sum > 0.0 {
                for s in Surface::ALL {
                    surfaces[s.index()] = total * weights.get(s) / weight_sum;
                }
            }
            let hazard = ramp * p.crash_hazard_per_ns * logistic((dv - p.crash_dv) / p.crash_width_v);
            CycleProbabilities {
                surfaces,
                crash: 1.0 - (-hazard * period).exp(),
            }
        }
    }
}

/// Surface weights seen by a voltage glitch: every on-core surface equally,
/// the external flash path not at all.
pub fn vfi_weights() -> SurfaceWeights {
    let mut w = SurfaceWeights::uniform(1.0);
    w.set(Surface::FlashFetch, 0.0);
    w
}

/// Outcome of drawing one glitch's effects.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGlitch {
    pub schedule: FaultSchedule,
    pub crashed: bool,
}

/// Walk the affected cycles, drawing a crash trial and then a fault trial in
/// each. A partial final cycle has its probabilities scaled by its fraction.
/// A crash ends the walk; events drawn before it are kept.
#[allow(clippy::too_many_arguments)]
pub fn sample_schedule<R: Rng + ?Sized>(
    rng: &mut R,
    model: Model,
    glitch: &GlitchSpec,
    clock: &ClockConfig,
    weights: &SurfaceWeights,
    params: &PhysicsParams,
    trace_start_cycle: u64,
) -> SampledGlitch {
    let probs = fault_and_crash_probability(model, glitch, clock, weights, params);
    let (first, span) = affected_cycles(glitch, clock, trace_start_cycle);
    let p_fault = probs.fault();
    let mut events = Vec::new();
    let mut crashed = false;
    if p_fault > 0.0 || probs.crash > 0.0 {
        let whole = span.floor() as u64;
        let frac = span - whole as f64;
        let steps = whole + u64::from(frac > 0.0);
        for k in 0..steps {
            let scale = if k < whole { 1.0 } else { frac };
            if rng.gen::<f64>() < probs.crash * scale {
                crashed = true;
                break;
            }
            if rng.gen::<f64>() < p_fault * scale {
                let surface = pick_surface(rng, &probs.surfaces);
                let effect = sample_effect(rng, surface, &params.effects);
                let target = (surface == Surface::RegisterFile).then(|| rng.gen_range(1..32u8));
                let ev = FaultEvent::new(first + k, surface, effect, target)
                    .expect("sampled effects are valid for their surface");
                events.push(ev);
            }
        }
    }
    SampledGlitch {
        schedule: FaultSchedule::new(events, true).expect("one event per cycle"),
        crashed,
    }
}

fn pick_surface<R: Rng + ?Sized>(rng: &mut R, p: &[f64; 6]) -> Surface {
    let total: f64 = p.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for s in Surface::ALL {
        x -= p[s.index()];
        if x < 0.0 {
            return s;
        }
    }
    // rounding left a sliver; fall back to the last surface that can fault
    *Surface::ALL.iter().rev().find(|s| p[s.index()] > 0.0).expect("nonzero total")
}
