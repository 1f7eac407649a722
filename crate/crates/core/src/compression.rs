//! Rank-capping linear maps `M -> L M R^T` fitted over finite matrix families.
//!
//! A fitted [`Compressor`] satisfies `rank(L M R^T) = min(rank(M), a', b')`
//! for every member `M` of the family it was fitted against. Fitting draws
//! random integer factors and verifies the whole family; the certificate is
//! the exhaustive check, never the genericity argument.

use std::collections::HashSet;

use num_bigint::{BigInt, RandBigInt};
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{det_exact, rank_exact, ExactInt, ExactMat};
use crate::seed::substream;

/// A finite, deterministically enumerable set of `a x b` matrices.
#[derive(Clone, Debug)]
pub enum MatFamily {
    Explicit {
        rows: usize,
        cols: usize,
        members: Vec<ExactMat>,
    },
    /// `{Diag(x - y) : x, y in alphabet^n}`, one member per value pattern.
    DiagonalDifferences {
        n: usize,
        alphabet: Vec<ExactInt>,
        differences: Vec<ExactInt>,
    },
}

/// One family member, kept diagonal when the family is diagonal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Member {
    Dense(ExactMat),
    Diagonal(Vec<ExactInt>),
}

impl Member {
    pub fn rank(&self) -> usize {
        match self {
            Member::Dense(m) => rank_exact(m),
            Member::Diagonal(z) => z.iter().filter(|v| !v.is_zero()).count(),
        }
    }

    pub fn to_matrix(&self) -> ExactMat {
        match self {
            Member::Dense(m) => m.clone(),
            Member::Diagonal(z) => ExactMat::diag(z),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Member::Dense(m) => format!("{m:?}"),
            Member::Diagonal(z) => {
                let parts: Vec<String> = z.iter().map(ToString::to_string).collect();
                format!("Diag({})", parts.join(","))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FamilyDescriptor {
    DiagonalDifferences { n: usize, alphabet: Vec<String> },
    Explicit { rows: usize, cols: usize, count: usize },
}

impl MatFamily {
    /// Deduplicates while keeping first-seen order.
    pub fn explicit(members: Vec<ExactMat>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidInput("empty matrix family".into()));
        };
        let (rows, cols) = first.shape();
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for m in members {
            if m.shape() != (rows, cols) {
                return Err(Error::SizeMismatch(format!(
                    "family member {:?} in a {rows}x{cols} family",
                    m.shape()
                )));
            }
            if seen.insert(m.clone()) {
                kept.push(m);
            }
        }
        Ok(MatFamily::Explicit {
            rows,
            cols,
            members: kept,
        })
    }

    pub fn diagonal_differences(n: usize, alphabet: &[ExactInt]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("diagonal family needs n >= 1".into()));
        }
        validate_alphabet(alphabet)?;
        let mut differences: Vec<ExactInt> = alphabet
            .iter()
            .flat_map(|a| alphabet.iter().map(move |b| a - b))
            .collect();
        differences.sort();
        differences.dedup();
        Ok(MatFamily::DiagonalDifferences {
            n,
            alphabet: alphabet.to_vec(),
            differences,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            MatFamily::Explicit { rows, cols, .. } => (*rows, *cols),
            MatFamily::DiagonalDifferences { n, .. } => (*n, *n),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            MatFamily::Explicit { members, .. } => members.len(),
            MatFamily::DiagonalDifferences { n, differences, .. } => differences.len().pow(*n as u32),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn member(&self, index: usize) -> Member {
        match self {
            MatFamily::Explicit { members, .. } => Member::Dense(members[index].clone()),
            MatFamily::DiagonalDifferences { n, differences, .. } => {
                let base = differences.len();
                let mut rest = index;
                let z = (0..*n)
                    .map(|_| {
                        let d = rest % base;
                        rest /= base;
                        differences[d].clone()
                    })
                    .collect();
                Member::Diagonal(z)
            }
        }
    }

    pub fn descriptor(&self) -> FamilyDescriptor {
        match self {
            MatFamily::Explicit { rows, cols, members } => FamilyDescriptor::Explicit {
                rows: *rows,
                cols: *cols,
                count: members.len(),
            },
            MatFamily::DiagonalDifferences { n, alphabet, .. } => FamilyDescriptor::DiagonalDifferences {
                n: *n,
                alphabet: alphabet.iter().map(ToString::to_string).collect(),
            },
        }
    }

    /// Rebuilds a generator family from its descriptor. Explicit families
    /// are not stored in descriptors and cannot be rebuilt.
    pub fn from_descriptor(d: &FamilyDescriptor) -> Result<Self> {
        match d {
            FamilyDescriptor::DiagonalDifferences { n, alphabet } => {
                let alphabet = alphabet
                    .iter()
                    .map(|s| {
                        s.parse::<BigInt>()
                            .map_err(|_| Error::Json(format!("bad alphabet value `{s}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                MatFamily::diagonal_differences(*n, &alphabet)
            }
            FamilyDescriptor::Explicit { .. } => Err(Error::InvalidInput(
                "explicit families are not recoverable from a descriptor".into(),
            )),
        }
    }
}

pub(crate) fn validate_alphabet(alphabet: &[ExactInt]) -> Result<()> {
    if alphabet.is_empty() {
        return Err(Error::InvalidInput("empty alphabet".into()));
    }
    let distinct: HashSet<&ExactInt> = alphabet.iter().collect();
    if distinct.len() != alphabet.len() {
        return Err(Error::InvalidInput("alphabet values must be distinct".into()));
    }
    Ok(())
}

/// Two-sided linear map `M -> left * M * right^T`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compressor {
    pub left: ExactMat,
    pub right: ExactMat,
    pub seed: u64,
    pub family: FamilyDescriptor,
    pub verified: bool,
    /// Draws consumed by the fit, 0 for deterministic constructions.
    #[serde(default)]
    pub attempts: usize,
}

impl Compressor {
    pub fn source_shape(&self) -> (usize, usize) {
        (self.left.cols(), self.right.cols())
    }

    pub fn target_shape(&self) -> (usize, usize) {
        (self.left.rows(), self.right.rows())
    }

    pub fn apply(&self, m: &ExactMat) -> Result<ExactMat> {
        self.left.checked_mul(m)?.checked_mul(&self.right.transpose())
    }

    /// `sum_i z_i * p_i q_i^T` with `p_i`, `q_i` the columns of left/right.
    pub fn apply_diagonal(&self, z: &[ExactInt]) -> Result<ExactMat> {
        let (a, b) = self.source_shape();
        if z.len() != a || z.len() != b {
            return Err(Error::SizeMismatch(format!(
                "diagonal of length {} for source shape {a}x{b}",
                z.len()
            )));
        }
        let (ta, tb) = self.target_shape();
        let mut out = ExactMat::zeros(ta, tb);
        for (i, zi) in z.iter().enumerate() {
            if zi.is_zero() {
                continue;
            }
            for r in 0..ta {
                let p = zi * self.left.get(r, i);
                if p.is_zero() {
                    continue;
                }
                for c in 0..tb {
                    let v = out.get(r, c) + &p * self.right.get(c, i);
                    out.set(r, c, v);
                }
            }
        }
        Ok(out)
    }

    pub fn apply_member(&self, m: &Member) -> Result<ExactMat> {
        match m {
            Member::Dense(d) => self.apply(d),
            Member::Diagonal(z) => self.apply_diagonal(z),
        }
    }

    fn required_rank(&self, member_rank: usize) -> usize {
        let (ta, tb) = self.target_shape();
        member_rank.min(ta).min(tb)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionViolation {
    pub member: usize,
    pub description: String,
    pub required: usize,
    pub achieved: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompressionReport {
    pub checked: usize,
    pub violations: Vec<CompressionViolation>,
}

impl CompressionReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn check_member(c: &Compressor, family: &MatFamily, i: usize) -> Option<CompressionViolation> {
    let m = family.member(i);
    let required = c.required_rank(m.rank());
    let image = c.apply_member(&m).expect("shapes checked by caller");
    let achieved = rank_exact(&image);
    (achieved != required).then(|| CompressionViolation {
        member: i,
        description: m.describe(),
        required,
        achieved,
    })
}

fn check_shapes(c: &Compressor, family: &MatFamily) -> Result<()> {
    if c.source_shape() != family.shape() {
        return Err(Error::SizeMismatch(format!(
            "compressor source {:?} vs family {:?}",
            c.source_shape(),
            family.shape()
        )));
    }
    Ok(())
}

/// Checks every member; violations come back in member order.
pub fn verify_compressor(c: &Compressor, family: &MatFamily) -> Result<CompressionReport> {
    check_shapes(c, family)?;
    let violations: Vec<CompressionViolation> = (0..family.len())
        .into_par_iter()
        .filter_map(|i| check_member(c, family, i))
        .collect();
    Ok(CompressionReport {
        checked: family.len(),
        violations,
    })
}

fn first_violation(c: &Compressor, family: &MatFamily) -> Option<CompressionViolation> {
    (0..family.len())
        .into_par_iter()
        .find_map_first(|i| check_member(c, family, i))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FitConfig {
    /// Entries are drawn from `[-2^bits, 2^bits]`; `bits` grows by one per retry.
    pub initial_bits: u64,
    pub max_retries: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            initial_bits: 16,
            max_retries: 8,
        }
    }
}

fn random_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize, bound: &BigInt) -> ExactMat {
    let lo = -bound;
    let hi = bound + 1;
    ExactMat::from_fn(rows, cols, |_, _| rng.gen_bigint_range(&lo, &hi))
}

pub fn fit_compressor(
    family: &MatFamily,
    target_rows: usize,
    target_cols: usize,
    seed: u64,
    max_retries: usize,
) -> Result<Compressor> {
    let cfg = FitConfig {
        max_retries,
        ..FitConfig::default()
    };
    fit_compressor_with(family, target_rows, target_cols, seed, &cfg)
}

pub fn fit_compressor_with(
    family: &MatFamily,
    target_rows: usize,
    target_cols: usize,
    seed: u64,
    cfg: &FitConfig,
) -> Result<Compressor> {
    if family.is_empty() {
        return Err(Error::InvalidInput("cannot fit over an empty family".into()));
    }
    if target_rows == 0 || target_cols == 0 {
        return Err(Error::InvalidInput("target shape must be at least 1x1".into()));
    }
    let (a, b) = family.shape();
    if target_rows >= a && target_cols >= b {
        let c = Compressor {
            left: ExactMat::embedding(target_rows, a),
            right: ExactMat::embedding(target_cols, b),
            seed,
            family: family.descriptor(),
            verified: true,
            attempts: 0,
        };
        return Ok(c);
    }

    let mut last = None;
    for attempt in 0..=cfg.max_retries {
        let bound = BigInt::one() << (cfg.initial_bits + attempt as u64);
        let mut rng = substream(seed, &format!("compressor/attempt-{attempt}"));
        let mut c = Compressor {
            left: random_matrix(&mut rng, target_rows, a, &bound),
            right: random_matrix(&mut rng, target_cols, b, &bound),
            seed,
            family: family.descriptor(),
            verified: false,
            attempts: attempt + 1,
        };
        match first_violation(&c, family) {
            None => {
                c.verified = true;
                return Ok(c);
            }
            Some(v) => last = Some(v),
        }
    }
    let v = last.expect("at least one attempt ran");
    Err(Error::RetriesExhausted {
        attempts: cfg.max_retries + 1,
        member: v.description,
        achieved: v.achieved,
        required: v.required,
    })
}

/// Deterministic compressor for binary diagonal families: `left` has
/// Vandermonde columns `(1, t_i, ..., t_i^{k-1})` with `t_i = base^i`, and
/// `right` uses the same nodes in reverse order. Returned unverified; run
/// [`verify_compressor`] or [`dominance_certificate`] before use.
pub fn vandermonde_compressor(n: usize, k: usize, base: u64) -> Compressor {
    let node = |i: usize| BigInt::from(base).pow(i as u32 + 1);
    let left = ExactMat::from_fn(k, n, |r, c| node(c).pow(r as u32));
    let right = ExactMat::from_fn(k, n, |r, c| node(n - 1 - c).pow(r as u32));
    Compressor {
        left,
        right,
        seed: 0,
        family: FamilyDescriptor::DiagonalDifferences {
            n,
            alphabet: vec!["0".into(), "1".into()],
        },
        verified: false,
        attempts: 0,
    }
}

fn subsets_of_size(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    fn rec(items: &[usize], k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Cauchy–Binet dominance check for `{-1,0,1}` diagonals: for every support
/// `S` with `|S| >= k`, the largest `|det(L_T) det(R_T)|` over `k`-subsets
/// `T` of `S` must exceed the sum of all the others, which forces
/// `det(L Diag(z) R^T) != 0` for every sign pattern on `S`.
pub fn dominance_certificate(c: &Compressor) -> Result<bool> {
    let (k, k2) = c.target_shape();
    let (n, n2) = c.source_shape();
    if k != k2 || n != n2 {
        return Err(Error::NonSquare { rows: k, cols: k2 });
    }
    let all: Vec<usize> = (0..n).collect();
    let mut term_cache = std::collections::HashMap::new();
    let rows: Vec<usize> = (0..k).collect();
    for mask in 0u64..(1u64 << n) {
        let support: Vec<usize> = all.iter().copied().filter(|i| mask >> i & 1 == 1).collect();
        if support.len() < k {
            continue;
        }
        let mut terms = Vec::new();
        for t in subsets_of_size(&support, k) {
            let term = term_cache
                .entry(t.clone())
                .or_insert_with(|| {
                    let l = det_exact(&c.left.submatrix(&rows, &t).unwrap()).unwrap();
                    let r = det_exact(&c.right.submatrix(&rows, &t).unwrap()).unwrap();
                    (l * r).abs()
                })
                .clone();
            terms.push(term);
        }
        let max = terms.iter().max().cloned().unwrap_or_default();
        let rest: BigInt = terms.iter().sum::<BigInt>() - &max;
        if max <= rest {
            return Ok(false);
        }
    }
    Ok(true)
}
