use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use glitchbench::attribution::oracle::oracle_exhaustive;
use glitchbench::attribution::reported::reported_rows;
use glitchbench::attribution::{attribute, attribute_observables, satisfies, verify};
use glitchbench::campaign::{default_config, CampaignConfig, Campaign, Golden};
use glitchbench::physics::{affected_cycles, Attack, ClockConfig, ClockLabel, GlitchSpec};
use glitchbench::report::{emfi_scatter_csv, points_csv, scatter_svg, vfi_scatter_csv, Report};
use glitchbench::results::{read_records, write_records};
use glitchbench::testprogs::TestId;

#[derive(Parser)]
#[command(name = "glitchbench", version, about = "Simulated clock-frequency fault-injection laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Clock {
    Slow,
    Medium,
    FastEm,
    FastVfi,
}

impl Clock {
    fn label(self) -> ClockLabel {
        match self {
            Clock::Slow => ClockLabel::Slow,
            Clock::Medium => ClockLabel::Medium,
            Clock::FastEm => ClockLabel::FastEmfi,
            Clock::FastVfi => ClockLabel::FastVfi,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackArg {
    Emfi,
    Vfi,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign and write its results and summary.
    Run {
        /// Config file, or the name of a shipped config such as `emfi-slow`.
        /// Without it the shipped config for --attack and --clock is used.
        config: Option<String>,
        #[arg(long)]
        attack: Option<AttackArg>,
        /// 1 = register loop, 2 = memory loop, 3 = unrolled loop.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        test: Option<u8>,
        #[arg(long)]
        clock: Option<Clock>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        attempts: Option<u64>,
        /// Loop count of the test program.
        #[arg(long)]
        n: Option<u32>,
        /// Results file; the summary goes next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label the successful records of a results file.
    Attribute {
        results: PathBuf,
        /// Write here instead of rewriting the input.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print totals and write sensitivity-map data for a results file.
    Report {
        results: PathBuf,
        /// Directory for the CSV (and SVG) files; defaults to the results file's.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also render a static scatter image.
        #[arg(long)]
        svg: bool,
    },
    /// Check attribution against the reported outcomes and the brute-force oracle.
    Oracle,
    /// Golden runs and cycle-conversion checks.
    Selftest,
}

fn speed(clock: ClockLabel) -> &'static str {
    match clock {
        ClockLabel::Slow => "slow",
        ClockLabel::Medium => "medium",
        ClockLabel::FastEmfi | ClockLabel::FastVfi => "fast",
    }
}

fn load_config(config: Option<&str>, attack: Option<AttackArg>, clock: Option<Clock>) -> Result<CampaignConfig> {
    if let Some(c) = config {
        let path = Path::new(c);
        if !path.exists() {
            if let Some(cfg) = default_config(c) {
                return Ok(cfg);
            }
        }
        return CampaignConfig::load(path).with_context(|| format!("cannot load config {}", path.display()));
    }
    let clock = clock.map_or(ClockLabel::Slow, Clock::label);
    let attack = match (attack, clock) {
        (Some(AttackArg::Vfi), _) | (None, ClockLabel::FastVfi) => "vfi",
        _ => "emfi",
    };
    let name = format!("{attack}-{}", speed(clock));
    default_config(&name).with_context(|| format!("no shipped config {name}"))
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: Option<String>,
    attack: Option<AttackArg>,
    test: Option<u8>,
    clock: Option<Clock>,
    seed: Option<u64>,
    attempts: Option<u64>,
    n: Option<u32>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(config.as_deref(), attack, clock)?;
    if let Some(t) = test {
        cfg.test_id = TestId::from_number(t).expect("range checked by clap");
    }
    if let Some(c) = clock {
        cfg.clock = c.label();
    }
    if let Some(a) = attempts {
        cfg.attempts = a;
    }
    if let Some(n) = n {
        cfg.n = n;
    }
    cfg.apply_seed_env().map_err(anyhow::Error::msg)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results.jsonl"));
    let campaign = Campaign::new(cfg)?;
    let (records, summary) = campaign.run();
    write_records(&out, &records)?;
    let summary_path = out.with_extension("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")
        .with_context(|| format!("cannot write {}", summary_path.display()))?;
    print!("{}", Report::new(&records).render());
    println!("results {}  summary {}", out.display(), summary_path.display());
    Ok(())
}

fn cmd_attribute(results: &Path, out: Option<&Path>) -> Result<()> {
    let mut records = read_records(results)?;
    for r in &mut records {
        attribute(r);
    }
    let out = out.unwrap_or(results);
    write_records(out, &records)?;
    let labeled = records.iter().filter(|r| r.labels.is_some()).count();
    let unexplained = records.iter().filter(|r| r.unexplained).count();
    println!("attributed {labeled} successful records, {unexplained} unexplained -> {}", out.display());
    Ok(())
}

fn cmd_report(results: &Path, out_dir: Option<&Path>, svg: bool) -> Result<()> {
    let records = read_records(results)?;
    print!("{}", Report::new(&records).render());
    if records.is_empty() {
        return Ok(());
    }
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| results.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let stem = results.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    let mut files = Vec::new();
    if records.iter().any(|r| r.attack == Attack::Emfi) {
        files.push(("points.csv", points_csv(&records)));
        files.push(("scatter.csv", emfi_scatter_csv(&records)));
    }
    if records.iter().any(|r| r.attack == Attack::Vfi) {
        files.push(("vfi.csv", vfi_scatter_csv(&records)));
    }
    if svg {
        files.push(("svg", scatter_svg(&records)));
    }
    for (ext, body) in files {
        let path = dir.join(format!("{stem}.{ext}"));
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_oracle() -> Result<bool> {
    let mut ok = true;
    let rows = reported_rows();
    let mut missed = 0;
    for r in &rows {
        let expl = attribute_observables(r.test, r.n, &r.observables());
        let sets: Vec<_> = expl.iter().map(|e| e.kinds()).collect();
        let good = satisfies(&sets, &r.alternatives()) && expl.iter().all(|e| verify(e, r.test, r.n));
        if !good {
            missed += 1;
            println!("  unmatched: {} {} t0={:#x} t1={:#x} want {}", r.attack, r.test, r.t0, r.t1, r.expected);
        }
    }
    println!("reported outcomes: {}/{} attributed as reported", rows.len() - missed, rows.len());
    ok &= missed == 0;
    for (test, n) in [(TestId::RegisterLoop, 50), (TestId::MemoryLoop, 50), (TestId::UnrolledLoop, 32)] {
        let mut cache = HashMap::new();
        let outcomes = oracle_exhaustive(test, n);
        let mut missed = 0;
        for o in &outcomes {
            let kinds = cache.entry(o.observables.clone()).or_insert_with(|| {
                attribute_observables(test, n, &o.observables)
                    .iter()
                    .flat_map(|e| e.kinds())
                    .collect::<Vec<_>>()
            });
            missed += usize::from(!kinds.iter().any(|k| k.consistent_with(o.label.kind)));
        }
        println!(
            "oracle {test} n={n}: {}/{} successful single faults explained",
            outcomes.len() - missed,
            outcomes.len()
        );
        ok &= missed == 0;
    }
    Ok(ok)
}

fn cmd_selftest() -> Result<bool> {
    let mut ok = true;
    for test in TestId::ALL {
        for n in [1, 2, 300, 10_000] {
            let g = Golden::new(test.build(n));
            let good = g.result.completed() && g.program.is_expected(&g.result.final_state.regs);
            ok &= good;
            let times: Vec<String> = ClockLabel::ALL
                .iter()
                .map(|c| format!("{c} {:.1}us", g.cycles() as f64 * c.config().period_ns() / 1e3))
                .collect();
            println!(
                "golden {test} n={n}: {} cycles, {} ({})",
                g.cycles(),
                if good { "ok" } else { "WRONG" },
                times.join(", ")
            );
        }
    }
    let pulse = GlitchSpec::emfi(50.0, 0.0, 0.0, 0.0);
    for (label, want) in [(ClockLabel::Slow, 0.8), (ClockLabel::Medium, 4.5), (ClockLabel::FastEmfi, 16.0)] {
        let (_, span) = affected_cycles(&pulse, &ClockConfig::preset(label), 0);
        let good = ((span - want) / want).abs() < 1e-9;
        ok &= good;
        println!("50 ns pulse at {label}: {span} cycles ({})", if good { "ok" } else { "WRONG" });
    }
    Ok(ok)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let ok = match cli.command {
        Command::Run {
            config,
            attack,
            test,
            clock,
            seed,
            attempts,
            n,
            out,
        } => cmd_run(config, attack, test, clock, seed, attempts, n, out).map(|_| true)?,
        Command::Attribute { results, out } => cmd_attribute(&results, out.as_deref()).map(|_| true)?,
        Command::Report { results, out_dir, svg } => cmd_report(&results, out_dir.as_deref(), svg).map(|_| true)?,
        Command::Oracle => cmd_oracle()?,
        Command::Selftest => cmd_selftest()?,
    };
    if !ok {
        bail!("checks failed");
    }
    Ok(())
}
