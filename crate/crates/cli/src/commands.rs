use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use hamrank_core::hamming::{build_hd_supp, identity_certificate, verify_support_rep, HdSupportRep, HdSupportRepFile};
use hamrank_core::rankprob::{
    compose_semantics, distance_r_compose, example_cc_hd, example_cc_hd_exact, hd_rank_problem, CompositionSpec,
    RankProblem, RankProblemFile,
};
use hamrank_core::signcompile::{
    build_hd_sign, sign_rep_from_file, sign_rep_to_file, tree_dim_bound, verify_sign, GammaMode, HdSignRep, OracleRef,
    SignRepFile, SignReport, StructuredSignRep,
};
use hamrank_core::support::SupportReport;
use hamrank_core::veronese::minor_embed_dim;
use hamrank_core::{exact::rank_exact, ExactInt, SupportOracle, VerifyMode};
use num_bigint::BigInt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::report::{BoundRow, Report, Tally};
use crate::CliError;

pub const SIGN_SCHEMA: &str = "hamrank-sign/1";
pub const RP_SCHEMA: &str = "hamrank-rp/1";

/// What a subcommand operates on, independent of argument parsing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Task {
    BuildSupp {
        n: usize,
        k: usize,
        alphabet: Vec<ExactInt>,
    },
    VerifySupp {
        path: PathBuf,
    },
    BuildSign {
        n: usize,
        k: usize,
        gamma_mode: GammaMode,
    },
    VerifySign {
        path: PathBuf,
    },
    BuildRp {
        n: usize,
        k: usize,
        negate: bool,
    },
    Compose {
        source: ComposeSource,
    },
    RpVerify {
        path: PathBuf,
    },
    LowerBound {
        path: PathBuf,
    },
    Bench {
        suite: BenchSuite,
        max_n: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComposeSource {
    Spec(PathBuf),
    /// `{c, c}`-HD family; `exact` selects the intended-semantics variant.
    ExampleCcHd {
        c: usize,
        r: usize,
        n: usize,
        m: usize,
        exact: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchSuite {
    HdSupp,
    HdSign,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::BuildSupp { .. } => "build-supp",
            Task::VerifySupp { .. } => "verify-supp",
            Task::BuildSign { .. } => "build-sign",
            Task::VerifySign { .. } => "verify-sign",
            Task::BuildRp { .. } => "build-rp",
            Task::Compose { .. } => "compose",
            Task::RpVerify { .. } => "rp-verify",
            Task::LowerBound { .. } => "lower-bound",
            Task::Bench { .. } => "bench",
        }
    }
}

/// On-disk sign representation of `HD_k` on `n`-bit words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignFile {
    pub schema: String,
    pub n: usize,
    pub k: usize,
    pub gamma_mode: GammaMode,
    pub rep: SignRepFile,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    HdThreshold {
        n: usize,
        k: usize,
        negated: bool,
        seed: u64,
    },
    Composition {
        r: usize,
        h: Vec<u8>,
        inners: Vec<RankProblemFile>,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RpFile {
    pub schema: String,
    pub problem: RankProblemFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

/// Composition input: inner problems are paths to rank-problem files,
/// resolved relative to the spec file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionSpecFile {
    pub r: usize,
    pub h: Vec<u8>,
    pub inners: Vec<PathBuf>,
}

/// Runs a task under `cfg`; errors are folded into the report.
pub fn run(task: &Task, cfg: &RunConfig) -> Report {
    let mut report = Report::new(task.name(), cfg);
    let start = Instant::now();
    let result = match cfg.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| dispatch(task, cfg, &mut report)),
            Err(e) => Err(CliError::Config(format!("thread pool: {e}"))),
        },
        None => dispatch(task, cfg, &mut report),
    };
    match result {
        Ok(()) => report.finish(),
        Err(e) => report.fail(&e),
    }
    report.timing = Some(crate::report::Timing {
        elapsed_ms: start.elapsed().as_millis(),
    });
    report
}

fn dispatch(task: &Task, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    match task {
        Task::BuildSupp { n, k, alphabet } => build_supp(*n, *k, alphabet, cfg, report),
        Task::VerifySupp { path } => {
            let rep = load_supp(path)?;
            check_supp(&rep, cfg, report)
        }
        Task::BuildSign { n, k, gamma_mode } => build_sign(*n, *k, *gamma_mode, cfg, report),
        Task::VerifySign { path } => verify_sign_file(path, cfg, report),
        Task::BuildRp { n, k, negate } => build_rp(*n, *k, *negate, cfg, report),
        Task::Compose { source } => compose(source, cfg, report),
        Task::RpVerify { path } => rp_verify(path, cfg, report),
        Task::LowerBound { path } => lower_bound(path, report),
        Task::Bench { suite, max_n } => bench(*suite, *max_n, cfg, report),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_out<T: Serialize>(cfg: &RunConfig, report: &mut Report, value: &T) -> Result<(), CliError> {
    if let Some(out) = &cfg.out {
        write_json(out, value)?;
        report.set("artifact", out.display().to_string());
    }
    Ok(())
}

fn mode_name(mode: &VerifyMode) -> String {
    match mode {
        VerifyMode::Exhaustive => "exhaustive".into(),
        VerifyMode::Sample { count, .. } => format!("sample({count})"),
    }
}

fn support_tally(mode: &VerifyMode, r: &SupportReport) -> Tally {
    Tally {
        mode: mode_name(mode),
        pairs_checked: r.pairs_checked,
        violations: r.violation_count,
        examples: r.violations.iter().take(8).map(|v| (v.x, v.y)).collect(),
    }
}

fn sign_tally(mode: &VerifyMode, r: &SignReport) -> Tally {
    Tally {
        mode: mode_name(mode),
        pairs_checked: r.pairs_checked,
        violations: r.violation_count,
        examples: r.violations.iter().take(8).map(|v| (v.x, v.y)).collect(),
    }
}

/// Checks `pred(x, y)` over all pairs or a sample, in pair order.
fn tally_pairs(domain: usize, mode: &VerifyMode, pred: impl Fn(usize, usize) -> bool + Sync) -> Tally {
    let bad: Vec<(usize, usize)> = match *mode {
        VerifyMode::Exhaustive => (0..domain)
            .into_par_iter()
            .flat_map_iter(|x| {
                let pred = &pred;
                (0..domain)
                    .filter(move |&y| !pred(x, y))
                    .map(move |y| (x, y))
                    .collect::<Vec<_>>()
            })
            .collect(),
        VerifyMode::Sample { count, seed } => hamrank_core::support::sample_pairs(domain, count, seed)
            .into_par_iter()
            .filter(|&(x, y)| !pred(x, y))
            .collect(),
    };
    Tally {
        mode: mode_name(mode),
        pairs_checked: match *mode {
            VerifyMode::Exhaustive => (domain as u64) * (domain as u64),
            VerifyMode::Sample { count, .. } => count,
        },
        violations: bad.len() as u64,
        examples: bad.into_iter().take(8).collect(),
    }
}

fn check_bits(cfg: &RunConfig, what: &str, bits: u64) -> Result<(), CliError> {
    match cfg.budgets.max_bits {
        Some(b) if bits > b => Err(CliError::Budget(format!(
            "{what} needs {bits} bits, above --max-bits {b}"
        ))),
        _ => Ok(()),
    }
}

fn supp_bounds(rep: &HdSupportRep, report: &mut Report) {
    let k = rep.k();
    let dim = rep.dim();
    report
        .bounds
        .push(BoundRow::eq("dim = C(2k,k)", dim, minor_embed_dim(k)));
    let four_k = BigInt::from(4).pow(k as u32);
    report
        .bounds
        .push(BoundRow::le("dim <= 4^k", dim, &four_k, BigInt::from(dim) <= four_k));
}

fn supp_metadata(rep: &HdSupportRep, report: &mut Report) {
    report.set("n", rep.n());
    report.set("k", rep.k());
    report.set(
        "alphabet",
        rep.words()
            .alphabet()
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>(),
    );
    report.set("dim", rep.dim());
    report.set("seed", rep.seed());
    report.set("compressor_attempts", rep.compressor().attempts);
    report.set("compressor_verified", rep.compressor().verified);
}

fn check_supp(rep: &HdSupportRep, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let count = rep.index_count() as u64;
    let mode = cfg.verify_mode(count * count)?;
    check_bits(
        cfg,
        "compressor",
        rep.compressor().left.max_bits().max(rep.compressor().right.max_bits()),
    )?;
    supp_metadata(rep, report);
    let r = verify_support_rep(rep, mode);
    report.tally("support", support_tally(&mode, &r));
    supp_bounds(rep, report);
    Ok(())
}

fn build_supp(n: usize, k: usize, alphabet: &[ExactInt], cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let rep = build_hd_supp(n, k, alphabet, cfg.seed)?;
    check_supp(&rep, cfg, report)?;
    write_out(cfg, report, &rep.to_file())
}

fn load_supp(path: &Path) -> Result<HdSupportRep, CliError> {
    let f: HdSupportRepFile = read_json(path)?;
    Ok(HdSupportRep::from_file(&f)?)
}

fn sign_checks(
    n: usize,
    k: usize,
    rep: &StructuredSignRep,
    max_oracle_dim: usize,
    cfg: &RunConfig,
    report: &mut Report,
) -> Result<(), CliError> {
    let domain = 1usize << n;
    let mode = cfg.verify_mode((domain as u64) * (domain as u64))?;
    let gammas = rep.gammas();
    for g in &gammas {
        check_bits(cfg, "gamma", g.bits())?;
    }
    report.set("n", n);
    report.set("k", k);
    report.set("dim", rep.dim());
    report.set("depth", rep.depth());
    report.set("gammas", gammas.iter().map(ToString::to_string).collect::<Vec<_>>());
    let r = verify_sign(rep, domain, mode, |x, y| (x ^ y).count_ones() as usize == k);
    report.tally("sign", sign_tally(&mode, &r));
    report.bounds.push(BoundRow::eq(
        "dim = 1 + C(2k,k)^2 + C(2k+2,k+1)^2",
        rep.dim(),
        HdSignRep::expected_dim(k),
    ));
    let bound = tree_dim_bound(rep.depth(), max_oracle_dim);
    report.bounds.push(BoundRow::le(
        "dim <= (1+r^2)^q",
        rep.dim(),
        &bound,
        BigInt::from(rep.dim()) <= bound,
    ));
    Ok(())
}

fn build_sign(n: usize, k: usize, gamma_mode: GammaMode, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    if k == 0 || k >= n {
        return Err(CliError::Config(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    cfg.check_dim(HdSignRep::expected_dim(k))?;
    let hd = build_hd_sign(n, k, cfg.seed, gamma_mode)?;
    report.set("seed", cfg.seed);
    report.set("gamma_mode", gamma_mode);
    report.set("oracle_seeds", [hd.lower.seed(), hd.upper.seed()]);
    report.set(
        "oracle_attempts",
        [hd.lower.compressor().attempts, hd.upper.compressor().attempts],
    );
    sign_checks(n, k, &hd.rep, hd.tree.max_oracle_dim(), cfg, report)?;
    let file = SignFile {
        schema: SIGN_SCHEMA.into(),
        n,
        k,
        gamma_mode,
        rep: sign_rep_to_file(&hd.rep)?,
    };
    write_out(cfg, report, &file)
}

fn resolve_hd_oracle(v: &serde_json::Value) -> hamrank_core::Result<OracleRef> {
    let f: HdSupportRepFile = serde_json::from_value(v.clone())?;
    Ok(Arc::new(HdSupportRep::from_file(&f)?))
}

fn verify_sign_file(path: &Path, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let file: SignFile = read_json(path)?;
    if file.schema != SIGN_SCHEMA {
        return Err(CliError::Config(format!("unknown sign schema `{}`", file.schema)));
    }
    if file.n >= usize::BITS as usize / 2 {
        return Err(CliError::Config(format!("n={} too large", file.n)));
    }
    let rep = sign_rep_from_file(&file.rep, resolve_hd_oracle)?;
    let max_oracle = file
        .rep
        .oracles
        .iter()
        .filter_map(|o| o.get("dim").and_then(serde_json::Value::as_u64))
        .max()
        .unwrap_or(0) as usize;
    report.set("gamma_mode", file.gamma_mode);
    sign_checks(file.n, file.k, &rep, max_oracle, cfg, report)
}

fn build_rp(n: usize, k: usize, negate: bool, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let p = hd_rank_problem(n, k, cfg.seed)?;
    let p = if negate { p.negate() } else { p };
    let domain = p.index_count();
    let mode = cfg.verify_mode((domain as u64) * (domain as u64))?;
    report.set("n", n);
    report.set("k", k);
    report.set("order", p.order());
    report.set("symmetric", p.is_symmetric());
    report.tally(
        "eval",
        tally_pairs(domain, &mode, |x, y| {
            p.eval(x, y) == (((x ^ y).count_ones() as usize >= k) != negate)
        }),
    );
    let file = RpFile {
        schema: RP_SCHEMA.into(),
        problem: p.to_file(),
        provenance: Some(Provenance::HdThreshold {
            n,
            k,
            negated: negate,
            seed: cfg.seed,
        }),
    };
    write_out(cfg, report, &file)
}

fn load_rp(path: &Path) -> Result<RpFile, CliError> {
    let f: RpFile = read_json(path)?;
    if f.schema != RP_SCHEMA {
        return Err(CliError::Config(format!("unknown rank-problem schema `{}`", f.schema)));
    }
    Ok(f)
}

fn bits_to_bools(h: &[u8]) -> Result<Vec<bool>, CliError> {
    h.iter()
        .map(|&v| match v {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(CliError::Config(format!("table entry {v} is not 0/1"))),
        })
        .collect()
}

fn composition_spec(source: &ComposeSource, seed: u64) -> Result<CompositionSpec, CliError> {
    Ok(match source {
        ComposeSource::ExampleCcHd { c, r, n, m, exact } => {
            if *exact {
                example_cc_hd_exact(*c, *r, *n, *m, seed)?
            } else {
                example_cc_hd(*c, *r, *n, *m, seed)?
            }
        }
        ComposeSource::Spec(path) => {
            let f: CompositionSpecFile = read_json(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let inners = f
                .inners
                .iter()
                .map(|p| Ok(RankProblem::from_file(&load_rp(&base.join(p))?.problem)?))
                .collect::<Result<Vec<_>, CliError>>()?;
            CompositionSpec::new(f.r, bits_to_bools(&f.h)?, inners)?
        }
    })
}

/// Combinations are evaluated through their block structure: exact ranks of
/// the component matrices, weighted. Their full matrices have side equal to
/// the order and are never materialized here.
fn semantics_tally(spec: &CompositionSpec, p: &RankProblem, mode: &VerifyMode) -> Tally {
    tally_pairs(p.index_count(), mode, |x, y| {
        p.eval_structural(x, y) == compose_semantics(spec, &spec.tuple(x), &spec.tuple(y))
    })
}

fn compose(source: &ComposeSource, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let spec = composition_spec(source, cfg.seed)?;
    let domain = spec
        .domain()
        .ok_or_else(|| CliError::Budget("composition domain overflows".into()))?;
    let mode = cfg.verify_mode((domain as u64) * (domain as u64))?;
    let comp = distance_r_compose(&spec, cfg.seed)?;
    let p = &comp.problem;
    cfg.check_dim(p.side())?;
    report.set("r", spec.r);
    report.set("coordinates", spec.coordinates());
    report.set("inner_size", spec.inner_size());
    report.set("inner_order", spec.inners[0].order());
    report.set("order", p.order());
    report.set("dim", p.side());
    report.set("components", comp.thresholds.len() + 1);
    report.set("symmetric", p.is_symmetric());
    report.set("seed", cfg.seed);
    report.tally("semantics", semantics_tally(&spec, p, &mode));
    let layers = &comp.layers;
    report.tally(
        "capped_rank",
        tally_pairs(domain, &mode, |x, y| {
            let (tx, ty) = (spec.tuple(x), spec.tuple(y));
            let delta = (0..tx.len()).filter(|&i| tx[i] != ty[i]).count();
            delta > spec.r
                || layers.iter().all(|l| {
                    let lhs = rank_exact(&l.matrices[x].checked_sub(&l.matrices[y]).expect("same shape"));
                    let rhs: usize = (0..tx.len()).map(|i| spec.inners[i].rank(tx[i], ty[i]).min(l.t)).sum();
                    lhs == rhs
                })
        }),
    );
    report.bounds.push(BoundRow::eq("symmetric", p.is_symmetric(), true));
    let file = RpFile {
        schema: RP_SCHEMA.into(),
        problem: p.to_file(),
        provenance: Some(Provenance::Composition {
            r: spec.r,
            h: spec.h.iter().map(|&b| u8::from(b)).collect(),
            inners: spec.inners.iter().map(RankProblem::to_file).collect(),
            seed: cfg.seed,
        }),
    };
    write_out(cfg, report, &file)
}

fn rp_verify(path: &Path, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let f = load_rp(path)?;
    let p = RankProblem::from_file(&f.problem)?;
    let domain = p.index_count();
    let mode = cfg.verify_mode((domain as u64) * (domain as u64))?;
    report.set("order", p.order());
    report.set("dim", p.side());
    report.set("symmetric", p.is_symmetric());
    match f.provenance {
        Some(Provenance::Composition { r, h, inners, .. }) => {
            let inners = inners
                .iter()
                .map(RankProblem::from_file)
                .collect::<hamrank_core::Result<Vec<_>>>()?;
            let spec = CompositionSpec::new(r, bits_to_bools(&h)?, inners)?;
            if spec.domain() != Some(domain) {
                return Err(CliError::Config("provenance domain does not match the problem".into()));
            }
            report.set("against", "composition semantics");
            report.tally("semantics", semantics_tally(&spec, &p, &mode));
        }
        Some(Provenance::HdThreshold { k, negated, .. }) => {
            report.set("against", "hamming distance");
            report.set("k", k);
            report.tally(
                "semantics",
                tally_pairs(domain, &mode, |x, y| {
                    p.eval(x, y) == (((x ^ y).count_ones() as usize >= k) != negated)
                }),
            );
        }
        None => {
            return Err(CliError::Config(
                "rank-problem file carries no provenance to verify against".into(),
            ))
        }
    }
    Ok(())
}

fn lower_bound(path: &Path, report: &mut Report) -> Result<(), CliError> {
    let rep = load_supp(path)?;
    supp_metadata(&rep, report);
    let cert = identity_certificate(&rep)?;
    // independent check on the distances themselves
    let words = rep.words();
    let k = rep.k();
    let bad: Vec<(usize, usize)> = cert
        .rows
        .iter()
        .enumerate()
        .flat_map(|(i, &x)| {
            cert.cols
                .iter()
                .enumerate()
                .filter(move |&(j, &y)| (words.distance(x, y) >= k) != (i == j))
                .map(move |(j, _)| (i, j))
        })
        .collect();
    report.tally(
        "certificate",
        Tally {
            mode: "exhaustive".into(),
            pairs_checked: (cert.size * cert.size) as u64,
            violations: bad.len() as u64,
            examples: bad.into_iter().take(8).collect(),
        },
    );
    report.set("certificate_size", cert.size);
    report.set("certificate_rows", &cert.rows);
    report.set("certificate_cols", &cert.cols);
    report
        .bounds
        .push(BoundRow::eq("certificate size = 2^k", cert.size, 1u64 << rep.k()));
    report
        .bounds
        .push(BoundRow::le("2^k <= dim", cert.size, rep.dim(), cert.size <= rep.dim()));
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub dim: usize,
    pub pairs: u64,
    pub seconds: f64,
    pub pairs_per_sec: f64,
}

/// Timing measurements only; floats here never feed a verdict.
fn bench(suite: BenchSuite, max_n: usize, cfg: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let mut rows = Vec::new();
    let mut worst = 0u64;
    let mut checked = 0u64;
    for k in 1..=3usize {
        for n in (k + 1)..=max_n {
            let domain = 1u64 << n;
            let pairs = domain * domain;
            if pairs > cfg.budgets.max_pairs {
                continue;
            }
            let start = Instant::now();
            let (dim, violations) = match suite {
                BenchSuite::HdSupp => {
                    let rep = build_hd_supp(n, k, &[BigInt::from(0), BigInt::from(1)], cfg.seed)?;
                    let r = verify_support_rep(&rep, VerifyMode::Exhaustive);
                    (rep.dim(), r.violation_count)
                }
                BenchSuite::HdSign => {
                    if HdSignRep::expected_dim(k) > cfg.budgets.max_dim {
                        continue;
                    }
                    let hd = build_hd_sign(n, k, cfg.seed, GammaMode::ExactScan)?;
                    let r = verify_sign(&hd.rep, 1 << n, VerifyMode::Exhaustive, |x, y| {
                        (x ^ y).count_ones() as usize == k
                    });
                    (hd.rep.dim(), r.violation_count)
                }
            };
            let seconds = start.elapsed().as_secs_f64();
            worst = worst.max(violations);
            checked += pairs;
            rows.push(BenchRow {
                n,
                k,
                dim,
                pairs,
                seconds,
                pairs_per_sec: pairs as f64 / seconds.max(1e-9),
            });
        }
    }
    report.set("suite", suite);
    report.set("instances", rows.iter().map(|r| (r.n, r.k, r.dim)).collect::<Vec<_>>());
    report.tally(
        "bench",
        Tally {
            mode: "exhaustive".into(),
            pairs_checked: checked,
            violations: worst,
            examples: vec![],
        },
    );
    if let Some(path) = &cfg.csv {
        // header comes from the BenchRow field names
        let mut w = csv::Writer::from_path(path)?;
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    Ok(())
}
