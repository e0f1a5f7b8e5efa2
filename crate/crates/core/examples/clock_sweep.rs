//! Success rate of the shipped campaigns at each clock, for a few seeds.
//!
//! cargo run --release --example clock_sweep [attempts]

use glitchbench::campaign::{run_campaign, shipped_config};
use glitchbench::physics::Attack;

fn main() {
    let attempts: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("attempts must be a number"))
        .unwrap_or(5000);
    println!("attack seed     slow   medium     fast");
    for attack in [Attack::Emfi, Attack::Vfi] {
        for seed in [1, 2, 3] {
            let rates: Vec<String> = ["slow", "medium", "fast"]
                .iter()
                .map(|speed| {
                    let mut c = shipped_config(attack, speed).expect("shipped config");
                    c.seed = seed;
                    c.attempts = attempts;
                    let (_, summary) = run_campaign(&c).expect("valid config");
                    format!("{:.4}", summary.success_rate)
                })
                .collect();
            println!("{:<6} {seed:>4}   {}", attack.as_str(), rates.join("   "));
        }
    }
}
