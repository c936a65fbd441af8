//! `nj`: run the simulation studies and the exact-check suite.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nj_core::harness::config::{
    CycleSettings, DecaySettings, KeyValues, NwCheckSettings, SutvaSettings, SwitchbackSettings,
};
use nj_core::harness::experiments::{
    run_cycle_experiment, run_decay_experiment, run_sutva_experiment, run_switchback_experiment,
};
use nj_core::harness::oracle_suite::{check_newey_west, run_oracle_suite_with, Mutation, SuiteSizes};
use nj_core::harness::results::{write_csv, ExperimentOutput};

#[derive(Parser)]
#[command(name = "nj", version, about = "Neyman Jackknife variance experiments and exact checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the replication (or instance) count from the config.
    #[arg(long)]
    reps: Option<usize>,
    /// Where to write the CSV (experiments) or JSON report (checks).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Bernoulli design on a cycle; IPW with both-neighbours exposure.
    Cycle(Common),
    /// Switchback experiment with carryover and burn-in periods.
    Switchback(Common),
    /// Time series with decaying carryover; buffered vs unbuffered deletion.
    Decay(Common),
    /// No interference, completely randomized; jackknife vs Neyman.
    Sutva(Common),
    /// Jackknife against circular Newey–West on random instances.
    NwCheck(Common),
    /// Every exact cross-check, with a pass/fail report.
    OracleSuite {
        #[command(flatten)]
        common: Common,
        /// Inject a deliberate fault to confirm the suite catches it.
        #[arg(long, value_enum, default_value_t = MutationArg::None)]
        mutate: MutationArg,
        /// Smaller instance counts, for a quick look.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MutationArg {
    None,
    DoubleLambda,
    NonMeasurableProxy,
}

impl From<MutationArg> for Mutation {
    fn from(m: MutationArg) -> Self {
        match m {
            MutationArg::None => Mutation::None,
            MutationArg::DoubleLambda => Mutation::DoubleLambda,
            MutationArg::NonMeasurableProxy => Mutation::NonMeasurableProxy,
        }
    }
}

fn load(common: &Common) -> Result<KeyValues> {
    match &common.config {
        Some(p) => KeyValues::from_path(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(KeyValues::default()),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// CSV to `--out`, or to stdout unless `--json` claims it.
fn emit_experiment(out: &ExperimentOutput, common: &Common) -> Result<()> {
    for b in &out.best {
        eprintln!(
            "{}: {} best L={} mean V̂={:.6} ratio={:.4} ± {:.4}",
            out.experiment, b.estimator, b.l, b.mean_vhat, b.ratio, b.ratio_se
        );
    }
    eprintln!("{}: true variance {:.6} over {} draws", out.experiment, out.true_var, out.true_var_reps);
    if common.out.is_some() || !common.json {
        let mut w = sink(common.out.as_deref())?;
        write_csv(&out.all_rows(), &mut w)?;
        w.flush()?;
    }
    if common.json {
        println!("{}", out.to_json());
    }
    Ok(())
}

fn emit_report(text: &str, lines: &[String], passed: bool, common: &Common) -> Result<ExitCode> {
    for l in lines {
        if common.json {
            eprintln!("{l}");
        } else {
            println!("{l}");
        }
    }
    if let Some(p) = &common.out {
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    if common.json {
        println!("{text}");
    }
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Cycle(c) => {
            let mut s = CycleSettings::from_kv(load(&c)?)?;
            s.dgp.seed = c.seed.unwrap_or(s.dgp.seed);
            s.reps = c.reps.unwrap_or(s.reps);
            emit_experiment(&run_cycle_experiment(&s.dgp, &s.l_grid, s.reps)?, &c)?;
        }
        Command::Switchback(c) => {
            let mut s = SwitchbackSettings::from_kv(load(&c)?)?;
            s.dgp.seed = c.seed.unwrap_or(s.dgp.seed);
            s.reps = c.reps.unwrap_or(s.reps);
            emit_experiment(&run_switchback_experiment(&s.dgp, &s.l_grid, s.reps)?, &c)?;
        }
        Command::Decay(c) => {
            let mut s = DecaySettings::from_kv(load(&c)?)?;
            s.dgp.seed = c.seed.unwrap_or(s.dgp.seed);
            s.reps = c.reps.unwrap_or(s.reps);
            emit_experiment(&run_decay_experiment(&s.dgp, s.compare_buffer, s.reps)?, &c)?;
        }
        Command::Sutva(c) => {
            let mut s = SutvaSettings::from_kv(load(&c)?)?;
            s.seed = c.seed.unwrap_or(s.seed);
            s.reps = c.reps.unwrap_or(s.reps);
            emit_experiment(&run_sutva_experiment(s.n, s.n1, s.reps, s.seed)?, &c)?;
        }
        Command::NwCheck(c) => {
            let mut s = NwCheckSettings::from_kv(load(&c)?)?;
            s.seed = c.seed.unwrap_or(s.seed);
            s.instances = c.reps.unwrap_or(s.instances);
            let check = check_newey_west(s.instances, s.max_n, s.seed);
            return emit_report(&serde_json::to_string_pretty(&check)?, &[check.line()], check.passed, &c);
        }
        Command::OracleSuite { common, mutate, quick } => {
            let mut kv = load(&common)?;
            let seed = common.seed.unwrap_or(kv.take_or("seed", 2024)?);
            kv.finish()?;
            let sizes = if quick { SuiteSizes::small() } else { SuiteSizes::default() };
            let report = run_oracle_suite_with(seed, &sizes, mutate.into());
            let lines: Vec<String> = report.checks.iter().map(|c| c.line()).collect();
            return emit_report(&serde_json::to_string_pretty(&report)?, &lines, report.all_passed, &common);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
