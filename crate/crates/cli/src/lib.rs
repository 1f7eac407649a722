//! Command-line driver for `hamrank-core`: builds representations, verifies
//! them, and writes versioned JSON reports with a CSV summary.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hamrank_core::signcompile::GammaMode;
use num_bigint::BigInt;

use commands::{BenchSuite, ComposeSource, Task};
use config::{Budgets, RunConfig, VerifyRequest, DEFAULT_MAX_DIM, DEFAULT_MAX_PAIRS};
use report::{Report, Status};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] hamrank_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("budget: {0}")]
    Budget(String),
}

#[derive(Debug, Parser)]
#[command(
    name = "hamrank",
    version,
    about = "Exact support-rank and sign-rank constructions for Hamming-distance problems"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exhaustive,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GammaArg {
    #[value(name = "exact_scan", alias = "exact-scan")]
    ExactScan,
    #[value(name = "norm_bound", alias = "norm-bound")]
    NormBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    HdSupp,
    HdSign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgainstArg {
    Semantics,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, env = "HAMRANK_THREADS")]
    pub threads: Option<usize>,
    /// Verification mode; defaults to exhaustive within --max-pairs.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Pair count for --mode sample.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, global = true, env = "HAMRANK_MAX_BITS")]
    pub max_bits: Option<u64>,
    #[arg(long, global = true, env = "HAMRANK_MAX_DIM", default_value_t = DEFAULT_MAX_DIM)]
    pub max_dim: usize,
    #[arg(long, global = true, env = "HAMRANK_MAX_PAIRS", default_value_t = DEFAULT_MAX_PAIRS)]
    pub max_pairs: u64,
    /// Artifact output path (representation or rank-problem JSON).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// CSV summary path (for `bench`, the per-instance table).
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    /// Leave the timing section out of the report.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and verify a support representation of HD>=k.
    BuildSupp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "0,1")]
        alphabet: String,
    },
    /// Verify a stored support representation.
    VerifySupp { rep: PathBuf },
    /// Build and verify a sign representation of HD_k on binary words.
    BuildSign {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "exact_scan")]
        gamma_mode: GammaArg,
    },
    /// Verify a stored sign representation.
    VerifySign { sign: PathBuf },
    /// Write the HD>=k rank problem (or its negation) on binary words.
    BuildRp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        negate: bool,
    },
    /// Build a distance-r composition as a rank problem.
    Compose {
        #[arg(long, conflicts_with = "example_cc_hd", required_unless_present = "example_cc_hd")]
        spec: Option<PathBuf>,
        /// `C,R,N,M`: inners HD<=C on N-bit rows, h(t) = 1{t<=R}, M rows.
        #[arg(long, value_name = "C,R,N,M")]
        example_cc_hd: Option<String>,
        /// With --example-cc-hd: inners HD>=C+1 and h(t) = 1{t=0}.
        #[arg(long, requires = "example_cc_hd")]
        exact_semantics: bool,
    },
    /// Re-verify a stored rank problem against its recorded provenance.
    RpVerify {
        rp: PathBuf,
        #[arg(long, value_enum, default_value = "semantics")]
        against: AgainstArg,
    },
    /// Identity-submatrix lower-bound certificate for a support representation.
    LowerBound { rep: PathBuf },
    /// Time exhaustive verification over a grid of small instances.
    Bench {
        #[arg(long, value_enum, default_value = "hd-supp")]
        suite: SuiteArg,
        #[arg(long, default_value_t = 10)]
        max_n: usize,
    },
}

fn parse_list(s: &str) -> Result<Vec<String>, CliError> {
    let parts: Vec<String> = s.split(',').map(|p| p.trim().to_string()).collect();
    if parts.iter().any(String::is_empty) {
        return Err(CliError::Config(format!("malformed list `{s}`")));
    }
    Ok(parts)
}

fn parse_usizes(s: &str, expect: usize) -> Result<Vec<usize>, CliError> {
    let v = parse_list(s)?
        .iter()
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| CliError::Config(format!("`{p}` is not a count")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if v.len() != expect {
        return Err(CliError::Config(format!("expected {expect} values in `{s}`")));
    }
    Ok(v)
}

impl Cli {
    pub fn config(&self) -> RunConfig {
        let g = &self.global;
        RunConfig {
            seed: g.seed,
            threads: g.threads,
            verify: match g.mode {
                None => VerifyRequest::Auto,
                Some(ModeArg::Exhaustive) => VerifyRequest::Exhaustive,
                Some(ModeArg::Sample) => VerifyRequest::Sample { count: g.samples },
            },
            budgets: Budgets {
                max_bits: g.max_bits,
                max_dim: g.max_dim,
                max_pairs: g.max_pairs,
            },
            out: g.out.clone(),
            report: g.report.clone(),
            csv: g.csv.clone(),
        }
    }

    pub fn task(&self) -> Result<Task, CliError> {
        Ok(match &self.command {
            Command::BuildSupp { n, k, alphabet } => Task::BuildSupp {
                n: *n,
                k: *k,
                alphabet: parse_list(alphabet)?
                    .iter()
                    .map(|v| {
                        v.parse::<BigInt>()
                            .map_err(|_| CliError::Config(format!("`{v}` is not an integer")))
                    })
                    .collect::<Result<_, _>>()?,
            },
            Command::VerifySupp { rep } => Task::VerifySupp { path: rep.clone() },
            Command::BuildSign { n, k, gamma_mode } => Task::BuildSign {
                n: *n,
                k: *k,
                gamma_mode: match gamma_mode {
                    GammaArg::ExactScan => GammaMode::ExactScan,
                    GammaArg::NormBound => GammaMode::NormBound,
                },
            },
            Command::VerifySign { sign } => Task::VerifySign { path: sign.clone() },
            Command::BuildRp { n, k, negate } => Task::BuildRp {
                n: *n,
                k: *k,
                negate: *negate,
            },
            Command::Compose {
                spec,
                example_cc_hd,
                exact_semantics,
            } => Task::Compose {
                source: match (spec, example_cc_hd) {
                    (Some(p), _) => ComposeSource::Spec(p.clone()),
                    (None, Some(s)) => {
                        let v = parse_usizes(s, 4)?;
                        ComposeSource::ExampleCcHd {
                            c: v[0],
                            r: v[1],
                            n: v[2],
                            m: v[3],
                            exact: *exact_semantics,
                        }
                    }
                    (None, None) => return Err(CliError::Config("compose needs --spec or --example-cc-hd".into())),
                },
            },
            Command::RpVerify {
                rp,
                against: AgainstArg::Semantics,
            } => Task::RpVerify { path: rp.clone() },
            Command::LowerBound { rep } => Task::LowerBound { path: rep.clone() },
            Command::Bench { suite, max_n } => Task::Bench {
                suite: match suite {
                    SuiteArg::HdSupp => BenchSuite::HdSupp,
                    SuiteArg::HdSign => BenchSuite::HdSign,
                },
                max_n: *max_n,
            },
        })
    }
}

/// Runs the parsed command, writes the report and CSV, and returns the
/// process exit code (0 only for certified runs).
pub fn execute(cli: &Cli) -> (Report, i32) {
    let cfg = cli.config();
    let mut report = match cli.task() {
        Ok(task) => commands::run(&task, &cfg),
        Err(e) => {
            let mut r = Report::new("invalid", &cfg);
            r.fail(&e);
            r
        }
    };
    if cli.global.no_timing {
        report.timing = None;
    }
    let io = (|| -> Result<(), CliError> {
        match &cfg.report {
            Some(path) => report.write_json(path)?,
            None => println!("{}", report.to_json()),
        }
        if let (Some(path), false) = (&cfg.csv, matches!(cli.command, Command::Bench { .. })) {
            report.write_csv(path)?;
        }
        Ok(())
    })();
    if let Err(e) = io {
        eprintln!("hamrank: {e}");
        return (report, Status::Error.exit_code());
    }
    if let Some(e) = &report.error {
        eprintln!("hamrank: {e}");
    }
    let code = report.status.exit_code();
    (report, code)
}
