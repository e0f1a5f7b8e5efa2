use glitchbench::attribution::site::{materialize, SiteEffect, SiteFault};
use glitchbench::attribution::{attribute, label_for, verify, Attributor};
use glitchbench::campaign::{shipped_config, Campaign, CampaignConfig};
use glitchbench::faults::{Effect, SENTINEL};
use glitchbench::physics::Attack;
use glitchbench::results::{read_records, write_records, Outcome};
use glitchbench::testprogs::TestId;
use proptest::prelude::*;

#[test]
fn config_file_campaign_results_survive_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shipped_config(Attack::Emfi, "fast").unwrap();
    cfg.attempts = 256;
    let path = dir.path().join("c.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let loaded = CampaignConfig::load(&path).unwrap();
    let (records, summary) = Campaign::new(loaded).unwrap().run();
    assert_eq!(summary.attempts, 256);
    assert_eq!(summary.expected + summary.crash_mute + summary.successful, 256);
    let out = dir.path().join("r.jsonl");
    write_records(&out, &records).unwrap();
    assert_eq!(read_records(&out).unwrap(), records);
}

#[test]
fn attributed_campaign_records_carry_verified_labels() {
    let mut cfg = shipped_config(Attack::Vfi, "fast").unwrap();
    cfg.attempts = 200;
    cfg.test_id = TestId::MemoryLoop;
    let (mut records, _) = Campaign::new(cfg).unwrap().run();
    let mut explained = 0;
    for r in &mut records {
        let expl = attribute(r);
        match r.outcome {
            Outcome::Successful => {
                assert_eq!(r.unexplained, expl.is_empty());
                assert_eq!(r.labels.as_ref().unwrap().len(), expl.len());
                assert!(expl.iter().all(|e| verify(e, r.test, r.n)));
                explained += usize::from(!expl.is_empty());
            }
            _ => assert!(r.labels.is_none() && !r.unexplained),
        }
    }
    assert!(explained > 0);
}

fn effect_strategy() -> impl Strategy<Value = (u32, SiteEffect)> {
    let data = prop_oneof![
        Just(Effect::ReplaceValue { value: SENTINEL }),
        (0u32..32).prop_map(|b| Effect::FlipBits { mask: 1 << b }),
    ];
    prop_oneof![
        (0u32..3).prop_map(|s| (s, SiteEffect::Instr(Effect::SkipInstruction))),
        (0u32..3, 0u32..32).prop_map(|(s, b)| (s, SiteEffect::Instr(Effect::FlipBits { mask: 1 << b }))),
        (0u32..2, data).prop_map(|(s, effect)| (s, SiteEffect::RegRead { reg: 5 + s as u8, effect })),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Any one-site fault on the register loop that ends with wrong values
    // is explained, with a label of its own kind among the explanations.
    #[test]
    fn single_faults_are_explained((slot, effect) in effect_strategy(), iter in 1u32..=10_000) {
        let attr = Attributor::shared(TestId::RegisterLoop, 10_000);
        let program = attr.program();
        let pc = program.loop_start + 4 * slot;
        let fault = SiteFault::new(pc, iter, effect);
        let warm = program.warm_state();
        let (_, run) = materialize(&warm, &[fault], program.golden_cycles * 10).unwrap();
        prop_assume!(run.completed());
        let obs = program.observe(&run.final_state.regs);
        prop_assume!(!program.observables_expected(&obs));
        let expl = attr.explain(&obs);
        let kind = label_for(program, &fault).kind;
        prop_assert!(expl.iter().all(|e| attr.verify(e)));
        prop_assert!(
            expl.iter().flat_map(|e| e.kinds()).any(|k| k.consistent_with(kind)),
            "{} from {:?} explained as {:?}", obs, fault, expl.iter().map(|e| e.kinds()).collect::<Vec<_>>()
        );
    }
}
