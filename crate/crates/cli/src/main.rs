use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;

use intentflow::pipeline::{score_files, OutputFormat, Pipeline, RunConfig};
use intentflow::score::{read_ground_truth, score, BenchmarkScore};
use intentflow::strings::DEFAULT_CANDIDATE_CAP;

/// Modular inter-component and inter-app intent flow analysis over
/// decoded Android apps (apktool output: AndroidManifest.xml + smali/).
#[derive(Parser)]
#[command(name = "intentflow", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Source/sink catalog file (defaults to the bundled one).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Get/put compatibility table (defaults to the bundled one).
    #[arg(long, global = true)]
    compat_table: Option<PathBuf>,
    /// Sender API catalog (defaults to the bundled one).
    #[arg(long, global = true)]
    senders: Option<PathBuf>,
    /// Also report values whose origin could not be traced, at low confidence.
    #[arg(long, global = true)]
    strict: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Maximum number of candidate strings kept per value.
    #[arg(long, global = true, default_value_t = DEFAULT_CANDIDATE_CAP)]
    string_cap: usize,
    /// Maximum number of sender hops behind a derived row.
    #[arg(long, global = true)]
    max_chain: Option<usize>,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Records,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze apps and add their summaries to the database.
    Analyze {
        /// App directories, or directories containing app directories.
        #[arg(required = true)]
        apps: Vec<PathBuf>,
        #[arg(long)]
        db: PathBuf,
    },
    /// Resolve values forwarded through several components.
    Fixpoint {
        #[arg(long)]
        db: PathBuf,
    },
    /// Join intra-component flows with the database and report leaks.
    Report {
        #[arg(long)]
        db: PathBuf,
        /// Flows file; without it flows are derived from the given apps.
        #[arg(long)]
        flows: Option<PathBuf>,
        /// Apps to derive flows from.
        apps: Vec<PathBuf>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Corpus statistics for a database.
    Stats {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a records-format report against ground truth. Precision and
    /// recall with a zero denominator count as 1.0.
    Score {
        #[arg(long)]
        reports: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run every phase on a fresh database.
    Run {
        #[arg(required = true)]
        apps: Vec<PathBuf>,
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        flows: Option<PathBuf>,
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[arg(long)]
        stats_out: Option<PathBuf>,
        /// Ground truth to score the reports against.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

/// Exit statuses: success, some apps failed, configuration or I/O error.
const EXIT_PARTIAL: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn config(common: &Common, db: PathBuf, apps: Vec<PathBuf>, flows: Option<PathBuf>) -> RunConfig {
    RunConfig {
        apps,
        flows,
        catalog: common.catalog.clone(),
        compat_table: common.compat_table.clone(),
        senders: common.senders.clone(),
        strict: common.strict,
        format: match common.format {
            Format::Text => OutputFormat::Text,
            Format::Records => OutputFormat::Records,
        },
        string_cap: common.string_cap,
        max_chain: common.max_chain,
        ..RunConfig::new(db)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn render_score(s: &BenchmarkScore, format: Format) -> String {
    match format {
        Format::Records => serde_json::to_string_pretty(s).expect("score serializes") + "\n",
        Format::Text => {
            let mut o = format!(
                "tp={} fp={} fn={} precision={:.3} recall={:.3} f1={:.3}\n",
                s.tp, s.fp, s.fn_, s.precision, s.recall, s.f1
            );
            for (a, src, sink) in &s.missing {
                o.push_str(&format!("missing: {} {} -> {}\n", a, src, sink));
            }
            for (a, src, sink) in &s.unexpected {
                o.push_str(&format!("unexpected: {} {} -> {}\n", a, src, sink));
            }
            o
        }
    }
}

fn partial(failures: usize) -> u8 {
    if failures > 0 {
        EXIT_PARTIAL
    } else {
        0
    }
}

fn run(cli: Cli) -> Result<u8> {
    let c = &cli.common;
    match cli.command {
        Command::Analyze { apps, db } => {
            let p = Pipeline::new(config(c, db, apps, None))?;
            let s = p.analyze()?;
            println!("analyzed {} app(s), {} row(s) added", s.analyzed.len(), s.rows_added);
            for (dir, e) in &s.failures {
                error!("{}: {}", dir.display(), e);
            }
            Ok(partial(s.failures.len()))
        }
        Command::Fixpoint { db } => {
            let p = Pipeline::new(config(c, db, Vec::new(), None))?;
            println!("{} derived row(s)", p.fixpoint()?);
            Ok(0)
        }
        Command::Report { db, flows, apps, out } => {
            let p = Pipeline::new(config(c, db, apps, flows))?;
            let reports = p.report()?;
            emit(out.as_deref(), &p.render_reports(&reports))?;
            Ok(0)
        }
        Command::Stats { db, out } => {
            let p = Pipeline::new(config(c, db, Vec::new(), None))?;
            let stats = p.stats()?;
            emit(out.as_deref(), &p.render_stats(&stats))?;
            Ok(0)
        }
        Command::Score { reports, truth } => {
            let s = score_files(&reports, &truth)?;
            print!("{}", render_score(&s, c.format));
            Ok(0)
        }
        Command::Run { apps, db, flows, report_out, stats_out, truth } => {
            let p = Pipeline::new(config(c, db, apps, flows))?;
            let outcome = p.run(report_out.as_deref(), stats_out.as_deref())?;
            if report_out.is_none() {
                print!("{}", p.render_reports(&outcome.reports));
            }
            if let Some(t) = truth {
                let s = score(&intentflow::pipeline::report_triples(&outcome.reports), &read_ground_truth(&t)?);
                print!("{}", render_score(&s, c.format));
            }
            for (dir, e) in &outcome.analysis.failures {
                error!("{}: {}", dir.display(), e);
            }
            Ok(partial(outcome.analysis.failures.len()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(EXIT_ERROR)
        }
    }
}
