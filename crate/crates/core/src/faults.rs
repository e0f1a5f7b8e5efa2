//! Fault-effect vocabulary and schedules.
//!
//! A [`FaultEvent`] is one concrete perturbation injected at a given cycle on
//! one of the modeled fault surfaces. The emulator consumes a sorted
//! [`FaultSchedule`] and applies every event whose cycle falls inside the
//! window of the instruction being executed.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::hex;

/// Fill value pre-loaded into every otherwise-unused register.
pub const SENTINEL: u32 = 0xdead_beef;

/// Maximum number of simultaneously flipped bits in one event.
pub const MAX_FLIPPED_BITS: u32 = 4;

/// Where in the machine a fault lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Surface {
    /// Instruction transfer from the external flash (only on icache misses).
    FlashFetch,
    /// Instruction transfer from the icache to the core.
    ICacheFetch,
    /// Decode/execute of the current instruction.
    ExecuteStage,
    /// Value returned by a data load.
    DCacheLoad,
    /// Value written by a data store.
    DCacheStore,
    /// Value read from one architectural register.
    RegisterFile,
}

impl Surface {
    pub const ALL: [Surface; 6] = [
        Surface::FlashFetch,
        Surface::ICacheFetch,
        Surface::ExecuteStage,
        Surface::DCacheLoad,
        Surface::DCacheStore,
        Surface::RegisterFile,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Surfaces carrying instruction words (skips and word flips).
    pub fn is_instruction_path(self) -> bool {
        matches!(
            self,
            Surface::FlashFetch | Surface::ICacheFetch | Surface::ExecuteStage
        )
    }

    /// Surfaces carrying data values (flips and replacements).
    pub fn is_data_path(self) -> bool {
        !self.is_instruction_path()
    }
}

impl fmt::Display for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// What a fault does to the datum travelling through its surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Effect {
    SkipInstruction,
    FlipBits {
        #[serde(with = "hex")]
        mask: u32,
    },
    ReplaceValue {
        #[serde(with = "hex")]
        value: u32,
    },
}

impl Effect {
    pub fn is_valid_on(self, surface: Surface) -> bool {
        match self {
            Effect::SkipInstruction => surface.is_instruction_path(),
            Effect::FlipBits { mask } => mask != 0 && mask.count_ones() <= MAX_FLIPPED_BITS,
            Effect::ReplaceValue { .. } => surface.is_data_path(),
        }
    }
}

/// Transform a datum with a data effect.
///
/// `SkipInstruction` is not a data transform and is rejected.
pub fn apply_effect(effect: Effect, datum: u32) -> Result<u32, Error> {
    match effect {
        Effect::FlipBits { mask } => Ok(datum ^ mask),
        Effect::ReplaceValue { value } => Ok(value),
        Effect::SkipInstruction => Err(Error::InvalidFault(
            "SkipInstruction is not a data transform".into(),
        )),
    }
}

/// One injected effect at a cycle on a fault surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFaultEvent", into = "RawFaultEvent")]
pub struct FaultEvent {
    cycle: u64,
    surface: Surface,
    effect: Effect,
    target_reg: Option<u8>,
}

#[derive(Serialize, Deserialize)]
struct RawFaultEvent {
    cycle: u64,
    surface: Surface,
    effect: Effect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_reg: Option<u8>,
}

impl TryFrom<RawFaultEvent> for FaultEvent {
    type Error = Error;

    fn try_from(raw: RawFaultEvent) -> Result<Self, Error> {
        FaultEvent::new(raw.cycle, raw.surface, raw.effect, raw.target_reg)
    }
}

impl From<FaultEvent> for RawFaultEvent {
    fn from(ev: FaultEvent) -> Self {
        RawFaultEvent {
            cycle: ev.cycle,
            surface: ev.surface,
            effect: ev.effect,
            target_reg: ev.target_reg,
        }
    }
}

impl FaultEvent {
    pub fn new(
        cycle: u64,
        surface: Surface,
        effect: Effect,
        target_reg: Option<u8>,
    ) -> Result<Self, Error> {
        if !effect.is_valid_on(surface) {
            return Err(Error::InvalidFault(format!(
                "{effect:?} is not valid on {surface}"
            )));
        }
        match (surface, target_reg) {
            (Surface::RegisterFile, Some(r)) if (1..32).contains(&r) => {}
            (Surface::RegisterFile, _) => {
                return Err(Error::InvalidFault(
                    "RegisterFile events need a target register in 1..=31".into(),
                ))
            }
            (_, Some(_)) => {
                return Err(Error::InvalidFault(format!(
                    "target register given for {surface}"
                )))
            }
            (_, None) => {}
        }
        Ok(FaultEvent {
            cycle,
            surface,
            effect,
            target_reg,
        })
    }

    pub fn skip(cycle: u64) -> Self {
        FaultEvent {
            cycle,
            surface: Surface::ExecuteStage,
            effect: Effect::SkipInstruction,
            target_reg: None,
        }
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn surface(&self) -> Surface {
        self.surface
    }

    pub fn effect(&self) -> Effect {
        self.effect
    }

    pub fn target_reg(&self) -> Option<u8> {
        self.target_reg
    }

    pub fn at_cycle(mut self, cycle: u64) -> Self {
        self.cycle = cycle;
        self
    }
}

/// Cycle-ordered list of fault events.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FaultSchedule {
    events: Vec<FaultEvent>,
    ground_truth: bool,
}

/// Shared empty schedule for fault-free runs.
pub static NO_FAULTS: FaultSchedule = FaultSchedule::empty();

impl FaultSchedule {
    pub const fn empty() -> Self {
        FaultSchedule {
            events: Vec::new(),
            ground_truth: false,
        }
    }

    /// Build a schedule, sorting by cycle. Two events on the same
    /// (cycle, surface) pair are rejected.
    pub fn new(mut events: Vec<FaultEvent>, ground_truth: bool) -> Result<Self, Error> {
        events.sort_by_key(|e| (e.cycle, e.surface));
        if let Some(w) = events
            .windows(2)
            .find(|w| w[0].cycle == w[1].cycle && w[0].surface == w[1].surface)
        {
            return Err(Error::InvalidFault(format!(
                "two events on {} at cycle {}",
                w[0].surface, w[0].cycle
            )));
        }
        Ok(FaultSchedule {
            events,
            ground_truth,
        })
    }

    pub fn events(&self) -> &[FaultEvent] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_ground_truth(&self) -> bool {
        self.ground_truth
    }

    pub fn into_events(self) -> Vec<FaultEvent> {
        self.events
    }
}

/// Distribution knobs for [`sample_effect`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectParams {
    /// Probability of a skip on instruction surfaces.
    pub p_skip: f64,
    /// Probability of a bit flip (vs. value replacement) on data surfaces.
    pub p_data_flip: f64,
    /// Probability that a replacement value is the sentinel.
    pub p_sentinel: f64,
}

impl Default for EffectParams {
    fn default() -> Self {
        EffectParams {
            p_skip: 0.3,
            p_data_flip: 0.8,
            p_sentinel: 0.75,
        }
    }
}

/// Mask with `count` distinct uniformly chosen bits set.
pub fn sample_mask<R: Rng + ?Sized>(rng: &mut R, count: u32) -> u32 {
    let mut mask = 0u32;
    while mask.count_ones() < count {
        mask |= 1 << rng.gen_range(0..32);
    }
    mask
}

/// Draw an effect valid for `surface`.
pub fn sample_effect<R: Rng + ?Sized>(rng: &mut R, surface: Surface, params: &EffectParams) -> Effect {
    if surface.is_instruction_path() {
        if rng.gen_bool(params.p_skip) {
            return Effect::SkipInstruction;
        }
        let bits = rng.gen_range(1..=MAX_FLIPPED_BITS);
        return Effect::FlipBits {
            mask: sample_mask(rng, bits),
        };
    }
    if rng.gen_bool(params.p_data_flip) {
        let bits = rng.gen_range(1..=MAX_FLIPPED_BITS);
        Effect::FlipBits {
            mask: sample_mask(rng, bits),
        }
    } else if rng.gen_bool(params.p_sentinel) {
        Effect::ReplaceValue { value: SENTINEL }
    } else {
        Effect::ReplaceValue { value: rng.gen() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flip_single_bit() {
        assert_eq!(apply_effect(Effect::FlipBits { mask: 1 }, 0x2710).unwrap(), 0x2711);
    }

    #[test]
    fn replace_value_ignores_datum() {
        let e = Effect::ReplaceValue { value: SENTINEL };
        assert_eq!(apply_effect(e, 0).unwrap(), 0xdeadbeef);
        assert_eq!(apply_effect(e, 0x1234_5678).unwrap(), 0xdeadbeef);
    }

    #[test]
    fn flip_is_involution() {
        let e = Effect::FlipBits { mask: 0x8001_0040 };
        let x = 0x0bad_f00d;
        assert_eq!(apply_effect(e, apply_effect(e, x).unwrap()).unwrap(), x);
    }

    #[test]
    fn skip_is_not_a_data_transform() {
        assert!(apply_effect(Effect::SkipInstruction, 3).is_err());
    }

    #[test]
    fn event_validation() {
        let skip = Effect::SkipInstruction;
        assert!(FaultEvent::new(0, Surface::DCacheLoad, skip, None).is_err());
        assert!(FaultEvent::new(0, Surface::ExecuteStage, skip, None).is_ok());
        let rep = Effect::ReplaceValue { value: 1 };
        assert!(FaultEvent::new(0, Surface::ICacheFetch, rep, None).is_err());
        assert!(FaultEvent::new(0, Surface::RegisterFile, rep, None).is_err());
        assert!(FaultEvent::new(0, Surface::RegisterFile, rep, Some(0)).is_err());
        assert!(FaultEvent::new(0, Surface::RegisterFile, rep, Some(6)).is_ok());
        assert!(FaultEvent::new(0, Surface::DCacheStore, rep, Some(6)).is_err());
        let wide = Effect::FlipBits { mask: 0x1f };
        assert!(FaultEvent::new(0, Surface::ExecuteStage, wide, None).is_err());
        let none = Effect::FlipBits { mask: 0 };
        assert!(FaultEvent::new(0, Surface::ExecuteStage, none, None).is_err());
    }

    #[test]
    fn schedule_sorts_and_rejects_duplicates() {
        let s = FaultSchedule::new(vec![FaultEvent::skip(9), FaultEvent::skip(3)], true).unwrap();
        assert_eq!(s.events()[0].cycle(), 3);
        assert!(FaultSchedule::new(vec![FaultEvent::skip(3), FaultEvent::skip(3)], true).is_err());
    }

    #[test]
    fn dcache_load_never_skips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = EffectParams::default();
        for _ in 0..10_000 {
            let e = sample_effect(&mut rng, Surface::DCacheLoad, &params);
            assert_ne!(e, Effect::SkipInstruction);
            assert!(e.is_valid_on(Surface::DCacheLoad));
        }
    }

    #[test]
    fn skip_fraction_matches_configuration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = EffectParams::default();
        let samples = 100_000;
        let skips = (0..samples)
            .filter(|_| sample_effect(&mut rng, Surface::ExecuteStage, &params) == Effect::SkipInstruction)
            .count();
        let frac = skips as f64 / samples as f64;
        assert!((frac - params.p_skip).abs() < 0.02, "skip fraction {frac}");
    }

    #[test]
    fn sampled_masks_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = EffectParams::default();
        for surface in Surface::ALL {
            for _ in 0..5_000 {
                if let Effect::FlipBits { mask } = sample_effect(&mut rng, surface, &params) {
                    assert!((1..=4).contains(&mask.count_ones()));
                }
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let params = EffectParams::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64)
                .map(|i| sample_effect(&mut rng, Surface::ALL[i % 6], &params))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(42), draw(42));
    }

    #[test]
    fn event_serde_round_trip() {
        let ev = FaultEvent::new(
            17,
            Surface::RegisterFile,
            Effect::ReplaceValue { value: SENTINEL },
            Some(6),
        )
        .unwrap();
        let json = serde_json::to_string(&ev).unwrap();
        assert_eq!(
            json,
            r#"{"cycle":17,"surface":"RegisterFile","effect":{"kind":"ReplaceValue","value":"0xdeadbeef"},"target_reg":6}"#
        );
        assert_eq!(serde_json::from_str::<FaultEvent>(&json).unwrap(), ev);
        let bad = r#"{"cycle":1,"surface":"DCacheLoad","effect":{"kind":"SkipInstruction"}}"#;
        assert!(serde_json::from_str::<FaultEvent>(bad).is_err());
    }
}
