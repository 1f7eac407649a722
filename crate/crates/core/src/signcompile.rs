//! Oracle decision trees and their compilation into sign representations.
//!
//! A tree node queries a boolean matrix through a support representation
//! `s(x, y) = <u(a(x)), v(b(y))>` (answer 1 iff `s != 0`). Compilation is
//! bottom-up: leaves become constant signs, and a query node with subtree
//! representations `off` (answer 0) and `on` (answer 1) becomes
//!
//! ```text
//! value(x, y) = off(x, y) + gamma * s(x, y)^2 * on(x, y)
//! ```
//!
//! Where `s = 0` the second term vanishes exactly, so `off` decides the sign.
//! Where `s != 0`, `gamma` is chosen so the second term strictly dominates.
//! The explicit vectors have `dim(off) + dim(oracle)^2 * dim(on)` coordinates.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{dot, sign_of, ExactInt, ExactMat};
use crate::hamming::{build_hd_supp, HdSupportRep};
use crate::seed::derive_seed;
use crate::support::{sample_pairs, SupportOracle, VerifyMode, VIOLATION_SAMPLE};
use crate::veronese::minor_embed_dim;

pub type OracleRef = Arc<dyn SupportOracle>;

/// Input translation from the tree's index domain into an oracle's.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InputMap {
    Identity,
    Table(Arc<Vec<usize>>),
}

impl InputMap {
    pub fn table(t: Vec<usize>) -> Self {
        InputMap::Table(Arc::new(t))
    }

    pub fn apply(&self, x: usize) -> usize {
        match self {
            InputMap::Identity => x,
            InputMap::Table(t) => t[x],
        }
    }

    fn check(&self, domain: usize, target: usize) -> Result<()> {
        match self {
            InputMap::Identity if domain <= target => Ok(()),
            InputMap::Identity => Err(Error::SizeMismatch(format!(
                "identity map from {domain} indices into {target}"
            ))),
            InputMap::Table(t) if t.len() < domain => Err(Error::SizeMismatch(format!(
                "input map of length {} on a domain of {domain}",
                t.len()
            ))),
            InputMap::Table(t) => match t[..domain].iter().find(|&&v| v >= target) {
                Some(&v) => Err(Error::IndexOutOfRange {
                    index: v,
                    bound: target,
                }),
                None => Ok(()),
            },
        }
    }

    fn to_file(&self) -> Option<Vec<usize>> {
        match self {
            InputMap::Identity => None,
            InputMap::Table(t) => Some(t.as_ref().clone()),
        }
    }

    fn from_file(t: &Option<Vec<usize>>) -> Self {
        match t {
            None => InputMap::Identity,
            Some(v) => InputMap::table(v.clone()),
        }
    }
}

/// Deterministic protocol tree over oracle queries.
#[derive(Clone)]
pub enum OracleTree {
    Leaf(bool),
    Query {
        oracle: OracleRef,
        a_map: InputMap,
        b_map: InputMap,
        on_zero: Box<OracleTree>,
        on_one: Box<OracleTree>,
    },
}

impl fmt::Debug for OracleTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleTree::Leaf(b) => write!(f, "Leaf({})", u8::from(*b)),
            OracleTree::Query {
                oracle,
                on_zero,
                on_one,
                ..
            } => write!(f, "Query[{}]({on_zero:?}, {on_one:?})", oracle.describe()),
        }
    }
}

impl OracleTree {
    pub fn query(oracle: OracleRef, on_zero: OracleTree, on_one: OracleTree) -> Self {
        Self::query_mapped(oracle, InputMap::Identity, InputMap::Identity, on_zero, on_one)
    }

    pub fn query_mapped(
        oracle: OracleRef,
        a_map: InputMap,
        b_map: InputMap,
        on_zero: OracleTree,
        on_one: OracleTree,
    ) -> Self {
        OracleTree::Query {
            oracle,
            a_map,
            b_map,
            on_zero: Box::new(on_zero),
            on_one: Box::new(on_one),
        }
    }

    pub fn evaluate(&self, x: usize, y: usize) -> bool {
        match self {
            OracleTree::Leaf(b) => *b,
            OracleTree::Query {
                oracle,
                a_map,
                b_map,
                on_zero,
                on_one,
            } => {
                if oracle.dot(a_map.apply(x), b_map.apply(y)).is_zero() {
                    on_zero.evaluate(x, y)
                } else {
                    on_one.evaluate(x, y)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            OracleTree::Leaf(_) => 0,
            OracleTree::Query { on_zero, on_one, .. } => 1 + on_zero.depth().max(on_one.depth()),
        }
    }

    /// Largest oracle dimension queried anywhere in the tree.
    pub fn max_oracle_dim(&self) -> usize {
        match self {
            OracleTree::Leaf(_) => 0,
            OracleTree::Query {
                oracle,
                on_zero,
                on_one,
                ..
            } => oracle.dim().max(on_zero.max_oracle_dim()).max(on_one.max_oracle_dim()),
        }
    }

    pub fn validate(&self, domain: usize) -> Result<()> {
        if let OracleTree::Query {
            oracle,
            a_map,
            b_map,
            on_zero,
            on_one,
        } = self
        {
            a_map.check(domain, oracle.index_count())?;
            b_map.check(domain, oracle.index_count())?;
            on_zero.validate(domain)?;
            on_one.validate(domain)?;
        }
        Ok(())
    }
}

/// `(1 + r^2)^q`, the dimension bound for a depth-`q` tree over oracles of
/// dimension at most `r`.
pub fn tree_dim_bound(depth: usize, max_oracle_dim: usize) -> BigInt {
    let r = BigInt::from(max_oracle_dim);
    (BigInt::one() + &r * &r).pow(depth as u32)
}

#[derive(Clone)]
pub struct CombineNode {
    pub oracle: OracleRef,
    pub a_map: InputMap,
    pub b_map: InputMap,
    /// Representation used where the oracle dot vanishes.
    pub off: StructuredSignRep,
    /// Representation scaled by `gamma * s^2`; decides the sign where `s != 0`.
    pub on: StructuredSignRep,
    pub gamma: ExactInt,
    dim: usize,
}

#[derive(Clone)]
pub enum StructuredSignRep {
    ConstLeaf(i8),
    Combine(Arc<CombineNode>),
}

impl fmt::Debug for StructuredSignRep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructuredSignRep::ConstLeaf(s) => write!(f, "ConstLeaf({s:+})"),
            StructuredSignRep::Combine(c) => write!(
                f,
                "Combine[{}; gamma={}; dim={}]({:?}, {:?})",
                c.oracle.describe(),
                c.gamma,
                c.dim,
                c.off,
                c.on
            ),
        }
    }
}

impl StructuredSignRep {
    pub fn combine(
        oracle: OracleRef,
        a_map: InputMap,
        b_map: InputMap,
        off: StructuredSignRep,
        on: StructuredSignRep,
        gamma: ExactInt,
    ) -> Self {
        let d = oracle.dim();
        let dim = off.dim().saturating_add(d.saturating_mul(d).saturating_mul(on.dim()));
        StructuredSignRep::Combine(Arc::new(CombineNode {
            oracle,
            a_map,
            b_map,
            off,
            on,
            gamma,
            dim,
        }))
    }

    pub fn dim(&self) -> usize {
        match self {
            StructuredSignRep::ConstLeaf(_) => 1,
            StructuredSignRep::Combine(c) => c.dim,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            StructuredSignRep::ConstLeaf(_) => 0,
            StructuredSignRep::Combine(c) => 1 + c.off.depth().max(c.on.depth()),
        }
    }

    /// Gammas in pre-order (node, off subtree, on subtree).
    pub fn gammas(&self) -> Vec<ExactInt> {
        match self {
            StructuredSignRep::ConstLeaf(_) => Vec::new(),
            StructuredSignRep::Combine(c) => {
                let mut out = vec![c.gamma.clone()];
                out.extend(c.off.gammas());
                out.extend(c.on.gammas());
                out
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    ExactScan,
    NormBound,
}

/// Per-domain evaluation plan: each combine node carries its oracle vectors
/// for every domain index, so pair evaluation is a handful of dot products.
enum Plan {
    Const(i8),
    Combine {
        left: Vec<Vec<ExactInt>>,
        right: Vec<Vec<ExactInt>>,
        gamma: ExactInt,
        off: Box<Plan>,
        on: Box<Plan>,
    },
}

fn oracle_vectors(
    oracle: &dyn SupportOracle,
    a_map: &InputMap,
    b_map: &InputMap,
    domain: usize,
) -> (Vec<Vec<ExactInt>>, Vec<Vec<ExactInt>>) {
    // Distinct oracle inputs are computed once.
    let distinct = |map: &InputMap, f: &(dyn Fn(usize) -> Vec<ExactInt> + Sync)| {
        let keys: Vec<usize> = (0..domain).map(|x| map.apply(x)).collect();
        let mut uniq = keys.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let vecs: HashMap<usize, Vec<ExactInt>> = uniq.par_iter().map(|&k| (k, f(k))).collect();
        keys.into_iter().map(|k| vecs[&k].clone()).collect::<Vec<_>>()
    };
    let left = distinct(a_map, &|x| oracle.left(x));
    let right = distinct(b_map, &|y| oracle.right(y));
    (left, right)
}

impl Plan {
    fn build(rep: &StructuredSignRep, domain: usize) -> Plan {
        match rep {
            StructuredSignRep::ConstLeaf(s) => Plan::Const(*s),
            StructuredSignRep::Combine(c) => {
                let (left, right) = oracle_vectors(c.oracle.as_ref(), &c.a_map, &c.b_map, domain);
                Plan::Combine {
                    left,
                    right,
                    gamma: c.gamma.clone(),
                    off: Box::new(Plan::build(&c.off, domain)),
                    on: Box::new(Plan::build(&c.on, domain)),
                }
            }
        }
    }

    fn value(&self, x: usize, y: usize) -> ExactInt {
        match self {
            Plan::Const(s) => BigInt::from(*s),
            Plan::Combine {
                left,
                right,
                gamma,
                off,
                on,
            } => {
                let s = dot(&left[x], &right[y]);
                let base = off.value(x, y);
                if s.is_zero() {
                    base
                } else {
                    base + gamma * &s * &s * on.value(x, y)
                }
            }
        }
    }

    /// Upper bound on `|value|` over the domain, from Cauchy–Schwarz on
    /// each oracle (`s^2 <= |u|^2 |v|^2`).
    fn abs_bound(&self) -> ExactInt {
        match self {
            Plan::Const(_) => BigInt::one(),
            Plan::Combine {
                left,
                right,
                gamma,
                off,
                on,
            } => {
                let max_sq = |vs: &[Vec<ExactInt>]| {
                    vs.iter()
                        .map(|v| v.iter().map(|e| e * e).sum::<BigInt>())
                        .max()
                        .unwrap_or_default()
                };
                off.abs_bound() + gamma * max_sq(left) * max_sq(right) * on.abs_bound()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GammaChoice {
    pub gamma: ExactInt,
    /// No domain pair hits the oracle's support; dominance is vacuous.
    pub empty_support: bool,
}

/// Chooses `gamma` so that `gamma * s^2 * |on| > |off|` wherever `s != 0`.
///
/// `ExactScan` returns `1 + max ceil(|off| / (s^2 |on|))` over the support.
/// `NormBound` avoids the pair scan: `|off|` is bounded through the oracle
/// norms of its subtree, and `s^2 |on| >= 1` because both are nonzero
/// integers on the support.
pub fn choose_gamma(
    oracle: &OracleRef,
    a_map: &InputMap,
    b_map: &InputMap,
    off: &StructuredSignRep,
    on: &StructuredSignRep,
    domain: usize,
    mode: GammaMode,
) -> Result<GammaChoice> {
    let off_plan = Plan::build(off, domain);
    match mode {
        GammaMode::NormBound => Ok(GammaChoice {
            gamma: off_plan.abs_bound() + 1,
            empty_support: false,
        }),
        GammaMode::ExactScan => {
            let (left, right) = oracle_vectors(oracle.as_ref(), a_map, b_map, domain);
            let on_plan = Plan::build(on, domain);
            let per_row: Vec<Result<Option<BigInt>>> = (0..domain)
                .into_par_iter()
                .map(|x| {
                    let mut best: Option<BigInt> = None;
                    for (y, ry) in right.iter().enumerate() {
                        let s = dot(&left[x], ry);
                        if s.is_zero() {
                            continue;
                        }
                        let on_v = on_plan.value(x, y);
                        if on_v.is_zero() {
                            return Err(Error::ZeroValue { x, y });
                        }
                        let den = &s * &s * on_v.abs();
                        let ratio = off_plan.value(x, y).abs().div_ceil(&den);
                        if best.as_ref().is_none_or(|b| ratio > *b) {
                            best = Some(ratio);
                        }
                    }
                    Ok(best)
                })
                .collect();
            let mut best: Option<BigInt> = None;
            for r in per_row {
                if let Some(v) = r? {
                    if best.as_ref().is_none_or(|b| v > *b) {
                        best = Some(v);
                    }
                }
            }
            Ok(match best {
                Some(m) => GammaChoice {
                    gamma: m + 1,
                    empty_support: false,
                },
                None => GammaChoice {
                    gamma: BigInt::one(),
                    empty_support: true,
                },
            })
        }
    }
}

/// Leaves map to `2b - 1`; each query node becomes a combine node with
/// `off` compiled from the answer-0 subtree and `on` from the answer-1 subtree.
pub fn compile(tree: &OracleTree, domain: usize, mode: GammaMode) -> Result<StructuredSignRep> {
    tree.validate(domain)?;
    compile_validated(tree, domain, mode)
}

fn compile_validated(tree: &OracleTree, domain: usize, mode: GammaMode) -> Result<StructuredSignRep> {
    match tree {
        OracleTree::Leaf(b) => Ok(StructuredSignRep::ConstLeaf(if *b { 1 } else { -1 })),
        OracleTree::Query {
            oracle,
            a_map,
            b_map,
            on_zero,
            on_one,
        } => {
            let off = compile_validated(on_zero, domain, mode)?;
            let on = compile_validated(on_one, domain, mode)?;
            let g = choose_gamma(oracle, a_map, b_map, &off, &on, domain, mode)?;
            Ok(StructuredSignRep::combine(
                oracle.clone(),
                a_map.clone(),
                b_map.clone(),
                off,
                on,
                g.gamma,
            ))
        }
    }
}

/// Direct recursive evaluation from oracle dots; nothing is cached.
pub fn eval_value(rep: &StructuredSignRep, x: usize, y: usize) -> ExactInt {
    match rep {
        StructuredSignRep::ConstLeaf(s) => BigInt::from(*s),
        StructuredSignRep::Combine(c) => {
            let s = c.oracle.dot(c.a_map.apply(x), c.b_map.apply(y));
            let base = eval_value(&c.off, x, y);
            if s.is_zero() {
                base
            } else {
                base + &c.gamma * &s * &s * eval_value(&c.on, x, y)
            }
        }
    }
}

pub fn eval_sign(rep: &StructuredSignRep, x: usize, y: usize) -> Result<i8> {
    match sign_of(&eval_value(rep, x, y)) {
        0 => Err(Error::ZeroValue { x, y }),
        s => Ok(s),
    }
}

fn tensor3(a: &[ExactInt], b: &[ExactInt], c: &[ExactInt], scale: &ExactInt) -> Vec<ExactInt> {
    let mut out = Vec::with_capacity(a.len() * b.len() * c.len());
    for ai in a {
        for bj in b {
            let ab = ai * bj * scale;
            for cl in c {
                out.push(&ab * cl);
            }
        }
    }
    out
}

fn materialize_row(rep: &StructuredSignRep, x: usize, left: bool) -> Vec<ExactInt> {
    match rep {
        StructuredSignRep::ConstLeaf(s) => {
            vec![if left { BigInt::from(*s) } else { BigInt::one() }]
        }
        StructuredSignRep::Combine(c) => {
            let mut row = materialize_row(&c.off, x, left);
            let inner = materialize_row(&c.on, x, left);
            let (v, scale) = if left {
                (c.oracle.left(c.a_map.apply(x)), c.gamma.clone())
            } else {
                (c.oracle.right(c.b_map.apply(x)), BigInt::one())
            };
            row.extend(tensor3(&v, &v, &inner, &scale));
            row
        }
    }
}

/// Explicit factors `U`, `V` (one row per index) with
/// `<U[x], V[y]> = eval_value(x, y)`; `dim` columns each.
pub fn materialize(rep: &StructuredSignRep, indices: &[usize], max_dim: usize) -> Result<(ExactMat, ExactMat)> {
    let dim = rep.dim();
    if dim > max_dim {
        return Err(Error::BudgetExceeded { dim, budget: max_dim });
    }
    let build = |left: bool| -> Result<ExactMat> {
        let rows: Vec<Vec<ExactInt>> = indices.par_iter().map(|&x| materialize_row(rep, x, left)).collect();
        let entries = rows.into_iter().flatten().collect();
        ExactMat::new(indices.len(), dim, entries)
    };
    Ok((build(true)?, build(false)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignViolation {
    pub x: usize,
    pub y: usize,
    pub value_sign: i8,
    pub expected: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignReport {
    pub pairs_checked: u64,
    pub violation_count: u64,
    pub zero_values: u64,
    pub violations: Vec<SignViolation>,
}

impl SignReport {
    pub fn is_clean(&self) -> bool {
        self.violation_count == 0
    }
}

/// Checks `sign(value(x, y)) = +1 <=> expected(x, y)` (zero counts as a violation).
pub fn verify_sign<F>(rep: &StructuredSignRep, domain: usize, mode: VerifyMode, expected: F) -> SignReport
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let plan = Plan::build(rep, domain);
    let check = |x: usize, y: usize| -> Option<SignViolation> {
        let s = sign_of(&plan.value(x, y));
        let want = expected(x, y);
        (s != if want { 1 } else { -1 }).then_some(SignViolation {
            x,
            y,
            value_sign: s,
            expected: want,
        })
    };
    let pairs: Vec<Vec<SignViolation>> = match mode {
        VerifyMode::Exhaustive => (0..domain)
            .into_par_iter()
            .map(|x| (0..domain).filter_map(|y| check(x, y)).collect())
            .collect(),
        VerifyMode::Sample { count, seed } => vec![sample_pairs(domain, count, seed)
            .par_iter()
            .filter_map(|&(x, y)| check(x, y))
            .collect()],
    };
    let all: Vec<SignViolation> = pairs.into_iter().flatten().collect();
    SignReport {
        pairs_checked: match mode {
            VerifyMode::Exhaustive => (domain as u64) * (domain as u64),
            VerifyMode::Sample { count, .. } => count,
        },
        violation_count: all.len() as u64,
        zero_values: all.iter().filter(|v| v.value_sign == 0).count() as u64,
        violations: all.into_iter().take(VIOLATION_SAMPLE).collect(),
    }
}

/// Values over all domain pairs, row-major, through the cached plan.
pub fn value_table(rep: &StructuredSignRep, domain: usize) -> Vec<ExactInt> {
    let plan = Plan::build(rep, domain);
    (0..domain)
        .into_par_iter()
        .flat_map_iter(|x| (0..domain).map(move |y| (x, y)).collect::<Vec<_>>())
        .map(|(x, y)| plan.value(x, y))
        .collect()
}

/// Sign representation of `HD_k` (distance exactly `k`) on binary words.
pub struct HdSignRep {
    pub n: usize,
    pub k: usize,
    pub rep: StructuredSignRep,
    pub tree: OracleTree,
    pub lower: Arc<HdSupportRep>,
    pub upper: Arc<HdSupportRep>,
}

impl HdSignRep {
    /// `1 + C(2k,k)^2 + C(2k+2,k+1)^2`.
    pub fn expected_dim(k: usize) -> usize {
        let a = minor_embed_dim(k);
        let b = minor_embed_dim(k + 1);
        1 + a * a + b * b
    }

    pub fn domain(&self) -> usize {
        1 << self.n
    }
}

/// Tree: ask `HD>=k+1` first (yes: 0); otherwise ask `HD>=k` (yes: 1, no: 0).
/// Putting the deeper subtree on the answer-0 side keeps it out of the
/// squared-oracle factor, which gives `1 + C(2k,k)^2 + C(2k+2,k+1)^2`.
pub fn hd_sign_tree(lower: OracleRef, upper: OracleRef) -> OracleTree {
    OracleTree::query(
        upper,
        OracleTree::query(lower, OracleTree::Leaf(false), OracleTree::Leaf(true)),
        OracleTree::Leaf(false),
    )
}

pub fn build_hd_sign(n: usize, k: usize, seed: u64, mode: GammaMode) -> Result<HdSignRep> {
    if k == 0 || k >= n {
        return Err(Error::InvalidInput(format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    if n >= usize::BITS as usize {
        return Err(Error::InvalidInput(format!("n={n} too large")));
    }
    let binary = [BigInt::zero(), BigInt::one()];
    let lower = Arc::new(build_hd_supp(n, k, &binary, derive_seed(seed, "hd-sign/lower"))?);
    let upper = Arc::new(build_hd_supp(n, k + 1, &binary, derive_seed(seed, "hd-sign/upper"))?);
    let tree = hd_sign_tree(lower.clone(), upper.clone());
    let rep = compile(&tree, 1 << n, mode)?;
    Ok(HdSignRep {
        n,
        k,
        rep,
        tree,
        lower,
        upper,
    })
}

/// Serialized expression tree; oracles are stored once and referenced by index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignRepFile {
    pub dim: usize,
    pub oracles: Vec<serde_json::Value>,
    pub root: SignNodeFile,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum SignNodeFile {
    Leaf {
        sign: i8,
    },
    Combine {
        oracle: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a_map: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b_map: Option<Vec<usize>>,
        gamma: String,
        dim: usize,
        off: Box<SignNodeFile>,
        on: Box<SignNodeFile>,
    },
}

pub fn sign_rep_to_file(rep: &StructuredSignRep) -> Result<SignRepFile> {
    fn walk(rep: &StructuredSignRep, oracles: &mut Vec<(OracleRef, serde_json::Value)>) -> Result<SignNodeFile> {
        match rep {
            StructuredSignRep::ConstLeaf(s) => Ok(SignNodeFile::Leaf { sign: *s }),
            StructuredSignRep::Combine(c) => {
                let idx = match oracles.iter().position(|(o, _)| Arc::ptr_eq(o, &c.oracle)) {
                    Some(i) => i,
                    None => {
                        let json = c.oracle.to_json().ok_or_else(|| {
                            Error::InvalidInput(format!("oracle `{}` has no file form", c.oracle.describe()))
                        })?;
                        oracles.push((c.oracle.clone(), json));
                        oracles.len() - 1
                    }
                };
                Ok(SignNodeFile::Combine {
                    oracle: idx,
                    a_map: c.a_map.to_file(),
                    b_map: c.b_map.to_file(),
                    gamma: c.gamma.to_string(),
                    dim: c.dim,
                    off: Box::new(walk(&c.off, oracles)?),
                    on: Box::new(walk(&c.on, oracles)?),
                })
            }
        }
    }
    let mut oracles = Vec::new();
    let root = walk(rep, &mut oracles)?;
    Ok(SignRepFile {
        dim: rep.dim(),
        oracles: oracles.into_iter().map(|(_, j)| j).collect(),
        root,
    })
}

/// Rebuilds a representation; `resolve` turns each stored oracle back into
/// a live one.
pub fn sign_rep_from_file(
    file: &SignRepFile,
    resolve: impl Fn(&serde_json::Value) -> Result<OracleRef>,
) -> Result<StructuredSignRep> {
    let oracles = file.oracles.iter().map(&resolve).collect::<Result<Vec<_>>>()?;
    fn walk(node: &SignNodeFile, oracles: &[OracleRef]) -> Result<StructuredSignRep> {
        match node {
            SignNodeFile::Leaf { sign } if *sign == 1 || *sign == -1 => Ok(StructuredSignRep::ConstLeaf(*sign)),
            SignNodeFile::Leaf { sign } => Err(Error::Json(format!("leaf sign {sign}"))),
            SignNodeFile::Combine {
                oracle,
                a_map,
                b_map,
                gamma,
                dim,
                off,
                on,
            } => {
                let o = oracles.get(*oracle).ok_or(Error::IndexOutOfRange {
                    index: *oracle,
                    bound: oracles.len(),
                })?;
                let gamma = gamma
                    .parse::<BigInt>()
                    .map_err(|_| Error::Json(format!("bad gamma `{gamma}`")))?;
                let rep = StructuredSignRep::combine(
                    o.clone(),
                    InputMap::from_file(a_map),
                    InputMap::from_file(b_map),
                    walk(off, oracles)?,
                    walk(on, oracles)?,
                    gamma,
                );
                if rep.dim() != *dim {
                    return Err(Error::Json(format!(
                        "stored dim {dim} disagrees with recomputed {}",
                        rep.dim()
                    )));
                }
                Ok(rep)
            }
        }
    }
    let rep = walk(&file.root, &oracles)?;
    if rep.dim() != file.dim {
        return Err(Error::Json(format!(
            "stored dim {} disagrees with recomputed {}",
            file.dim,
            rep.dim()
        )));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::rank_exact;
    use crate::hamming::HdSupportRepFile;

    /// `u_x = (1, x)`, `v_y = (-y, 1)`: support is `x != y`.
    #[derive(Debug)]
    struct NotEqual {
        n: usize,
        scale: i64,
    }

    impl SupportOracle for NotEqual {
        fn dim(&self) -> usize {
            2
        }
        fn index_count(&self) -> usize {
            self.n
        }
        fn left(&self, x: usize) -> Vec<ExactInt> {
            vec![BigInt::from(self.scale), BigInt::from(self.scale * x as i64)]
        }
        fn right(&self, y: usize) -> Vec<ExactInt> {
            vec![-BigInt::from(y), BigInt::one()]
        }
        fn describe(&self) -> String {
            "not-equal".into()
        }
    }

    fn neq(n: usize) -> OracleRef {
        Arc::new(NotEqual { n, scale: 1 })
    }

    #[test]
    fn constant_leaf() {
        let rep = compile(&OracleTree::Leaf(true), 4, GammaMode::ExactScan).unwrap();
        assert_eq!(rep.dim(), 1);
        assert_eq!(eval_sign(&rep, 0, 3).unwrap(), 1);
        let neg = compile(&OracleTree::Leaf(false), 4, GammaMode::ExactScan).unwrap();
        for x in 0..4 {
            for y in 0..4 {
                assert_eq!(eval_sign(&neg, x, y).unwrap(), -1);
            }
        }
        let (u, v) = materialize(&rep, &[0, 1, 2], 10).unwrap();
        assert_eq!(u, ExactMat::from_fn(3, 1, |_, _| BigInt::one()));
        assert_eq!(v, u);
    }

    #[test]
    fn depth_one_not_equal() {
        let tree = OracleTree::query(neq(256), OracleTree::Leaf(false), OracleTree::Leaf(true));
        let rep = compile(&tree, 256, GammaMode::ExactScan).unwrap();
        assert_eq!(rep.dim(), 1 + 4);
        let r = verify_sign(&rep, 256, VerifyMode::Exhaustive, |x, y| x != y);
        assert!(r.is_clean(), "{r:?}");
        assert_eq!(rep.depth(), 1);
    }

    #[test]
    fn gamma_for_constant_children() {
        // s in {0, d} with d = 3: gamma = 1 + ceil(1 / 9)
        #[derive(Debug)]
        struct Blocks;
        impl SupportOracle for Blocks {
            fn dim(&self) -> usize {
                1
            }
            fn index_count(&self) -> usize {
                4
            }
            fn left(&self, x: usize) -> Vec<ExactInt> {
                vec![BigInt::from(if x < 2 { 3 } else { 0 })]
            }
            fn right(&self, _: usize) -> Vec<ExactInt> {
                vec![BigInt::one()]
            }
            fn describe(&self) -> String {
                "blocks".into()
            }
        }
        let o: OracleRef = Arc::new(Blocks);
        let off = StructuredSignRep::ConstLeaf(1);
        let on = StructuredSignRep::ConstLeaf(-1);
        let id = InputMap::Identity;
        let g = choose_gamma(&o, &id, &id, &off, &on, 4, GammaMode::ExactScan).unwrap();
        assert_eq!(g.gamma, BigInt::from(2));
        assert!(!g.empty_support);

        #[derive(Debug)]
        struct Never;
        impl SupportOracle for Never {
            fn dim(&self) -> usize {
                1
            }
            fn index_count(&self) -> usize {
                4
            }
            fn left(&self, _: usize) -> Vec<ExactInt> {
                vec![BigInt::zero()]
            }
            fn right(&self, _: usize) -> Vec<ExactInt> {
                vec![BigInt::one()]
            }
            fn describe(&self) -> String {
                "never".into()
            }
        }
        let o: OracleRef = Arc::new(Never);
        let g = choose_gamma(&o, &id, &id, &off, &on, 4, GammaMode::ExactScan).unwrap();
        assert_eq!(g.gamma, BigInt::one());
        assert!(g.empty_support);
    }

    #[test]
    fn off_support_keeps_off_sign_exactly() {
        let tree = OracleTree::query(neq(16), OracleTree::Leaf(true), OracleTree::Leaf(false));
        let rep = compile(&tree, 16, GammaMode::ExactScan).unwrap();
        for x in 0..16 {
            // diagonal: oracle dot is 0, value is exactly the off constant
            assert_eq!(eval_value(&rep, x, x), BigInt::one());
        }
    }

    #[test]
    fn hd_dims() {
        assert_eq!(HdSignRep::expected_dim(1), 41);
        assert_eq!(HdSignRep::expected_dim(2), 437);
        let hd = build_hd_sign(4, 1, 3, GammaMode::ExactScan).unwrap();
        assert_eq!(hd.rep.dim(), 41);
        assert_eq!(hd.tree.depth(), 2);
        assert!(BigInt::from(hd.rep.dim()) <= tree_dim_bound(hd.tree.depth(), hd.tree.max_oracle_dim()));
        assert!(build_hd_sign(4, 4, 0, GammaMode::ExactScan).is_err());
    }

    #[test]
    fn hd1_n6_exhaustive_and_materialized() {
        let hd = build_hd_sign(6, 1, 11, GammaMode::ExactScan).unwrap();
        let r = verify_sign(&hd.rep, 64, VerifyMode::Exhaustive, |x, y| (x ^ y).count_ones() == 1);
        assert!(r.is_clean(), "{r:?}");
        for x in 0..64 {
            for y in 0..64 {
                assert_eq!(hd.tree.evaluate(x, y), (x ^ y).count_ones() == 1);
            }
        }
        let idx: Vec<usize> = (0..64).collect();
        let (u, v) = materialize(&hd.rep, &idx, 1000).unwrap();
        assert_eq!(u.shape(), (64, 41));
        assert_eq!(v.shape(), (64, 41));
        let table = value_table(&hd.rep, 64);
        for x in 0..64 {
            for y in 0..64 {
                let d = dot(u.row(x), v.row(y));
                assert_eq!(d, table[x * 64 + y]);
                assert_eq!(d, eval_value(&hd.rep, x, y));
            }
        }
        let product = u.checked_mul(&v.transpose()).unwrap();
        assert!(rank_exact(&product) <= 41);
        assert!(matches!(
            materialize(&hd.rep, &idx, 40),
            Err(Error::BudgetExceeded { dim: 41, budget: 40 })
        ));
    }

    #[test]
    fn norm_bound_dominates_scan() {
        let hd = build_hd_sign(5, 1, 2, GammaMode::ExactScan).unwrap();
        let nb = compile(&hd.tree, 32, GammaMode::NormBound).unwrap();
        assert_eq!(nb.dim(), hd.rep.dim());
        for (scan, bound) in hd.rep.gammas().iter().zip(nb.gammas()) {
            assert!(bound >= *scan, "{bound} < {scan}");
        }
        let r = verify_sign(&nb, 32, VerifyMode::Exhaustive, |x, y| (x ^ y).count_ones() == 1);
        assert!(r.is_clean());
    }

    #[test]
    fn independent_rescan_reproduces_gamma() {
        let hd = build_hd_sign(6, 1, 5, GammaMode::ExactScan).unwrap();
        let StructuredSignRep::Combine(root) = &hd.rep else {
            panic!("expected a combine root");
        };
        // second pass with eval_value only
        let mut best = BigInt::zero();
        for x in 0..64 {
            for y in 0..64 {
                let s = root.oracle.dot(x, y);
                if s.is_zero() {
                    continue;
                }
                let off = eval_value(&root.off, x, y).abs();
                let on = eval_value(&root.on, x, y).abs();
                let r = off.div_ceil(&(&s * &s * on));
                best = best.max(r);
            }
        }
        assert_eq!(root.gamma, best + 1);
    }

    #[test]
    fn mapped_queries() {
        // HD>=1 on the low 3 bits of 6-bit words, via a projection map
        let proj = InputMap::table((0..64).map(|x| x & 7).collect());
        let rep3 = Arc::new(crate::hamming::build_hd_supp(3, 1, &[BigInt::zero(), BigInt::one()], 0).unwrap());
        let tree = OracleTree::query_mapped(
            rep3,
            proj.clone(),
            proj,
            OracleTree::Leaf(false),
            OracleTree::Leaf(true),
        );
        let rep = compile(&tree, 64, GammaMode::ExactScan).unwrap();
        let r = verify_sign(&rep, 64, VerifyMode::Exhaustive, |x, y| (x & 7) != (y & 7));
        assert!(r.is_clean());
        let bad = OracleTree::query_mapped(
            neq(4),
            InputMap::table(vec![0, 1, 9]),
            InputMap::Identity,
            OracleTree::Leaf(false),
            OracleTree::Leaf(true),
        );
        assert!(compile(&bad, 3, GammaMode::ExactScan).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let hd = build_hd_sign(4, 1, 8, GammaMode::ExactScan).unwrap();
        let file = sign_rep_to_file(&hd.rep).unwrap();
        assert_eq!(file.oracles.len(), 2);
        let json = serde_json::to_string(&file).unwrap();
        let back: SignRepFile = serde_json::from_str(&json).unwrap();
        let rep = sign_rep_from_file(&back, |v| {
            let f: HdSupportRepFile = serde_json::from_value(v.clone())?;
            Ok(Arc::new(HdSupportRep::from_file(&f)?) as OracleRef)
        })
        .unwrap();
        assert_eq!(rep.dim(), 41);
        assert_eq!(value_table(&rep, 16), value_table(&hd.rep, 16));
        // oracles without a file form are rejected
        let tree = OracleTree::query(neq(4), OracleTree::Leaf(false), OracleTree::Leaf(true));
        let rep = compile(&tree, 4, GammaMode::ExactScan).unwrap();
        assert!(sign_rep_to_file(&rep).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random depth-<=3 trees over two scaled not-equal oracles.
        fn tree_strategy() -> impl Strategy<Value = OracleTree> {
            let leaf = any::<bool>().prop_map(OracleTree::Leaf);
            leaf.prop_recursive(3, 8, 2, |inner| {
                (1i64..=3, inner.clone(), inner)
                    .prop_map(|(scale, a, b)| OracleTree::query(Arc::new(NotEqual { n: 12, scale }), a, b))
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn compiled_sign_matches_tree(tree in tree_strategy()) {
                let rep = compile(&tree, 12, GammaMode::ExactScan).unwrap();
                let r = verify_sign(&rep, 12, VerifyMode::Exhaustive, |x, y| tree.evaluate(x, y));
                prop_assert!(r.is_clean());
                prop_assert!(BigInt::from(rep.dim()) <= tree_dim_bound(tree.depth(), tree.max_oracle_dim().max(1)));
                let nb = compile(&tree, 12, GammaMode::NormBound).unwrap();
                for (s, b) in rep.gammas().iter().zip(nb.gammas()) {
                    prop_assert!(b >= *s);
                }
                let idx: Vec<usize> = (0..12).collect();
                let (u, v) = materialize(&rep, &idx, 10_000).unwrap();
                for x in 0..12 {
                    for y in 0..12 {
                        prop_assert_eq!(dot(u.row(x), v.row(y)), eval_value(&rep, x, y));
                    }
                }
                prop_assert!(rank_exact(&u.checked_mul(&v.transpose()).unwrap()) <= rep.dim());
            }
        }
    }
}
