use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shortcut_core::error::{Error, Result};
use shortcut_core::identify::render_markdown;
use shortcut_core::matchindex::MatchMode;
use shortcut_core::metrics::F1Variant;
use shortcut_core::pipeline::{self, BenchOptions, RunConfig};
use shortcut_core::synthbench::BenchSpec;

/// Find shortcut inference patterns in a text classifier.
#[derive(Parser)]
#[command(name = "shortcut", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract candidate patterns from sampled IID examples.
    Mine {
        #[command(flatten)]
        run: RunArgs,
        /// Continue a partially failed run from its progress file.
        #[arg(long)]
        resume: bool,
    },
    /// Compute statistics for mined candidates on both corpora.
    Score {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to OUTPUT_DIR/candidates.json.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Apply thresholds to computed statistics.
    Identify {
        #[command(flatten)]
        run: RunArgs,
        /// Defaults to OUTPUT_DIR/stats.json.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// mine, score and identify in one go.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Render a report.json as markdown on stdout.
    Report {
        /// Path to report.json.
        path: PathBuf,
    },
    /// Run the pipeline on synthetic benchmarks with planted shortcuts.
    Bench {
        /// Benchmark spec (JSON or TOML); built-in default otherwise.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "bench-out")]
        output_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of consecutive seeds to run.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[command(flatten)]
        knobs: Knobs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Run config (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trace: bool,
    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Args)]
struct Knobs {
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// In percentage points, e.g. -5.
    #[arg(long, allow_hyphen_values = true)]
    lambda3: Option<f64>,
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long)]
    include_fallback: bool,
    /// Match triggers as contiguous runs instead of ordered subsequences.
    #[arg(long)]
    contiguous_match: bool,
    #[arg(long)]
    micro_f1: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(d) = &self.output_dir {
            cfg.output_dir = d.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.trace |= self.trace;
        let k = &self.knobs;
        if let Some(n) = k.n_samples {
            cfg.n_samples = n;
        }
        if let Some(w) = k.workers {
            cfg.workers = w;
        }
        if let Some(v) = k.lambda1 {
            cfg.thresholds.lambda1 = v;
        }
        if let Some(v) = k.lambda2 {
            cfg.thresholds.lambda2 = v;
        }
        if let Some(v) = k.lambda3 {
            cfg.thresholds.lambda3 = v;
        }
        if let Some(v) = k.min_support {
            cfg.thresholds.min_support_ood = v;
        }
        cfg.include_fallback |= k.include_fallback;
        if k.contiguous_match {
            cfg.match_mode = MatchMode::Contiguous;
        }
        if k.micro_f1 {
            cfg.f1_variant = F1Variant::Micro;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_spec(path: &Path) -> Result<BenchSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        Ok(serde_json::from_str(&text)?)
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mine { run, resume } => {
            let cfg = run.resolve()?;
            let session = pipeline::open_adapter(&cfg)?;
            let s = pipeline::run_mine(&cfg, &session, resume)?;
            println!(
                "sampled {} examples, {} reductions, {} candidate patterns ({} fallbacks excluded) -> {}",
                s.sampled,
                s.reductions,
                s.patterns,
                s.excluded_fallbacks,
                s.candidates_path.display()
            );
        }
        Command::Score { run, candidates } => {
            let cfg = run.resolve()?;
            let path = candidates.unwrap_or_else(|| cfg.output_dir.join(pipeline::CANDIDATES_FILE));
            let session = pipeline::open_adapter(&cfg)?;
            let out = pipeline::run_score(&cfg, &session, &path)?;
            println!("wrote {}", out.display());
        }
        Command::Identify { run, stats } => {
            let cfg = run.resolve()?;
            let path = stats.unwrap_or_else(|| cfg.output_dir.join(pipeline::STATS_FILE));
            let report = pipeline::run_identify(&cfg, &path)?;
            print!("{}", render_markdown(&report));
        }
        Command::Run { run } => {
            let cfg = run.resolve()?;
            let session = pipeline::open_adapter(&cfg)?;
            let report = pipeline::run_all(&cfg, &session)?;
            print!("{}", render_markdown(&report));
        }
        Command::Report { path } => {
            let report = pipeline::load_report(&path)?;
            print!("{}", render_markdown(&report));
        }
        Command::Bench {
            spec,
            output_dir,
            seed,
            seeds,
            knobs,
        } => {
            let mut spec = match spec {
                Some(p) => load_spec(&p)?,
                None => BenchSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let mut opts = BenchOptions {
                seeds,
                include_fallback: knobs.include_fallback,
                ..BenchOptions::default()
            };
            if let Some(n) = knobs.n_samples {
                if n == 0 {
                    return Err(Error::Config("n_samples must be positive".into()));
                }
                opts.n_samples = n;
            }
            if let Some(w) = knobs.workers {
                if w == 0 {
                    return Err(Error::Config("workers must be positive".into()));
                }
                opts.workers = w;
            }
            if let Some(v) = knobs.lambda1 {
                opts.thresholds.lambda1 = v;
            }
            if let Some(v) = knobs.lambda2 {
                opts.thresholds.lambda2 = v;
            }
            if let Some(v) = knobs.lambda3 {
                opts.thresholds.lambda3 = v;
            }
            if let Some(v) = knobs.min_support {
                opts.thresholds.min_support_ood = v;
            }
            if knobs.contiguous_match {
                opts.match_mode = MatchMode::Contiguous;
            }
            if knobs.micro_f1 {
                opts.f1_variant = F1Variant::Micro;
            }
            let summary = pipeline::run_bench(&spec, &opts, &output_dir)?;
            print!("{}", pipeline::render_bench_table(&summary));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
