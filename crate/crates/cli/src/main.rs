mod config;
mod output;

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use grae_core::passk::{ingest_log, passk_table, write_passk_table};
use grae_core::presets::{describe, preset, PRESET_NAMES};
use grae_core::report::{write_metrics_csv, Summary};
use grae_core::trainer::run_experiment;
use grae_core::{Estimator, RewardGroup, Variant};
use serde::{Deserialize, Serialize};

use output::{emit, Staged};

#[derive(Parser)]
#[command(
    name = "grae",
    version,
    about = "Group-relative advantage estimators, bandit simulator and pass@k evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulated training experiment and write metrics.csv, summary.json and config.toml.
    Simulate(SimulateArgs),
    /// Compute advantages for reward groups read from a JSONL file.
    Advantage(AdvantageArgs),
    /// Aggregate pass@k over a JSONL evaluation log.
    Passk(PasskArgs),
    /// List the built-in presets, or print one as TOML.
    Presets {
        #[arg(long, value_name = "NAME")]
        show: Option<String>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    preset: Option<String>,
    /// TOML config layered over the preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set estimator.alpha=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "GRAE_OUTPUT_DIR", default_value = "out")]
    output: PathBuf,
}

#[derive(Args)]
struct AdvantageArgs {
    /// JSONL with one `{"query_id", "rewards"}` record per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "grae")]
    variant: Variant,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PasskArgs {
    /// JSONL with aggregated `{"query_id", "n", "c"}` or per-response `{"query_id", "correct"}` records.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    k: Vec<u64>,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupRecord {
    query_id: String,
    rewards: Vec<f64>,
}

#[derive(Serialize)]
struct AdvantageRecord<'a> {
    query_id: &'a str,
    advantages: &'a [f64],
    degenerate: bool,
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = config::resolve(
        args.preset.as_deref(),
        args.config.as_deref(),
        &args.overrides,
        args.steps,
        args.seed,
    )?;
    let result = run_experiment(&cfg)?;
    let summary = Summary::new(&cfg, &result);
    let config_text = toml::to_string(&cfg).context("serializing config")?;

    let mut staged = Staged::default();
    staged.add(&args.output.join("metrics.csv"), |w| {
        write_metrics_csv(w, &result.metrics)
    })?;
    staged.add(&args.output.join("summary.json"), |w| {
        w.write_all(summary.to_json().as_bytes())
    })?;
    staged.add(&args.output.join("config.toml"), |w| {
        w.write_all(config_text.as_bytes())
    })?;
    staged.commit()?;
    eprintln!(
        "{} steps, final mean entropy {:.6}, written to {}",
        cfg.steps,
        summary.final_mean_entropy,
        args.output.display()
    );
    Ok(())
}

fn read_groups(path: &Path) -> Result<Vec<(String, RewardGroup)>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GroupRecord = serde_json::from_str(&line).with_context(|| format!("line {}", i + 1))?;
        let group = RewardGroup::new(rec.rewards).with_context(|| format!("query `{}`", rec.query_id))?;
        out.push((rec.query_id, group));
    }
    if out.is_empty() {
        bail!("{} contains no reward groups", path.display());
    }
    Ok(out)
}

fn advantage(args: &AdvantageArgs) -> Result<()> {
    let mut est = Estimator::new(args.variant);
    if let Some(b) = args.beta {
        est = est.with_beta(b);
    }
    if let Some(g) = args.gamma {
        est = est.with_gamma(g);
    }
    if let Some(a) = args.alpha {
        est = est.with_alpha(a);
    }
    est.validate()?;

    let records = read_groups(&args.input)?;
    if est.variant.needs_binary() {
        if let Some((id, _)) = records.iter().find(|(_, g)| !g.is_binary()) {
            bail!("query `{id}`: {} requires binary rewards in {{0, 1}}", est.variant);
        }
    }
    let groups: Vec<RewardGroup> = records.iter().map(|(_, g)| g.clone()).collect();
    let advantages = est.compute_batch(&groups, 0)?;

    emit(args.output.as_deref(), |w| {
        for ((id, _), adv) in records.iter().zip(&advantages) {
            let rec = AdvantageRecord {
                query_id: id,
                advantages: &adv.values,
                degenerate: adv.degenerate,
            };
            serde_json::to_writer(&mut *w, &rec)?;
            writeln!(w)?;
        }
        Ok(())
    })
}

fn passk(args: &PasskArgs) -> Result<()> {
    let records = ingest_log(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let rows = passk_table(&records, &args.k)?;
    emit(args.output.as_deref(), |w| write_passk_table(w, &rows))
}

fn presets(show: Option<&str>) -> Result<()> {
    match show {
        Some(name) => {
            let cfg = preset(name)?;
            print!("{}", toml::to_string(&cfg).context("serializing preset")?);
        }
        None => {
            for name in PRESET_NAMES {
                println!("{name:<18} {}", describe(name).unwrap_or_default());
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Advantage(a) => advantage(&a),
        Command::Passk(a) => passk(&a),
        Command::Presets { show } => presets(show.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
