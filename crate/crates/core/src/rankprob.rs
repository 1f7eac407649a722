//! Rank problems: boolean matrices of the form `g(rank(A(x) + B(y)))`.
//!
//! Covers construction, evaluation, boolean combination, distance-r
//! composition, monotone decomposition into threshold pieces, and the
//! pipeline from a rank problem to a sign representation.

use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::Zero;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compression::{fit_compressor, Compressor, FitConfig, MatFamily};
use crate::error::{Error, Result};
use crate::exact::{block_diag, rank_exact, repeat_diag, ExactMat};
use crate::hamming::{fit_hd_compressor, Words};
use crate::seed::derive_seed;
use crate::signcompile::{
    compile, verify_sign, GammaMode, InputMap, OracleRef, OracleTree, SignReport, StructuredSignRep,
};
use crate::support::{SupportOracle, VerifyMode};
use crate::veronese::{minor_embed, minor_embed_dim, Side};

/// Largest `g` table a combination may produce.
pub const MAX_TABLE: usize = 1 << 26;

/// Retries used when fitting compressors inside constructions.
const FIT_RETRIES: usize = 8;

#[derive(Clone, Debug)]
pub struct Component {
    pub problem: RankProblem,
    pub weight: usize,
    pub row_map: InputMap,
    pub col_map: InputMap,
}

/// Where `A(x)` and `B(y)` come from.
#[derive(Clone, Debug)]
pub enum RankSource {
    Table {
        a: Vec<ExactMat>,
        b: Vec<ExactMat>,
    },
    /// Block diagonal of weighted component copies, built on demand.
    Combined {
        components: Vec<Component>,
    },
}

#[derive(Clone)]
pub struct RankProblem {
    index_count: usize,
    order: usize,
    g: Vec<bool>,
    symmetric: bool,
    side: usize,
    source: Arc<RankSource>,
}

impl fmt::Debug for RankProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g: String = self.g.iter().map(|&b| if b { '1' } else { '0' }).collect();
        let kind = match self.source.as_ref() {
            RankSource::Table { .. } => "table".to_string(),
            RankSource::Combined { components } => format!("{} components", components.len()),
        };
        write!(
            f,
            "RankProblem(N={}, order={}, side={}, g={g}, symmetric={}, {kind})",
            self.index_count, self.order, self.side, self.symmetric
        )
    }
}

fn check_g(g: &[bool], order: usize) -> Result<()> {
    if g.len() != order + 1 {
        return Err(Error::SizeMismatch(format!(
            "g table has {} entries for order {order}",
            g.len()
        )));
    }
    Ok(())
}

impl RankProblem {
    /// Explicit tables of square `side x side` matrices. Symmetry is detected.
    pub fn from_tables(a: Vec<ExactMat>, b: Vec<ExactMat>, g: Vec<bool>, order: usize) -> Result<Self> {
        check_g(&g, order)?;
        if a.len() != b.len() {
            return Err(Error::SizeMismatch(format!(
                "{} A matrices vs {} B matrices",
                a.len(),
                b.len()
            )));
        }
        let side = a.first().map_or(0, ExactMat::rows);
        if let Some(m) = a.iter().chain(&b).find(|m| m.shape() != (side, side)) {
            return Err(Error::SizeMismatch(format!(
                "matrix {:?} in a table of {side}x{side}",
                m.shape()
            )));
        }
        let symmetric = a.iter().zip(&b).all(|(x, y)| x.neg() == *y);
        Ok(RankProblem {
            index_count: a.len(),
            order,
            g,
            symmetric,
            side,
            source: Arc::new(RankSource::Table { a, b }),
        })
    }

    /// `B = -A`.
    pub fn symmetric_from(a: Vec<ExactMat>, g: Vec<bool>, order: usize) -> Result<Self> {
        let b = a.iter().map(ExactMat::neg).collect();
        Self::from_tables(a, b, g, order)
    }

    pub fn index_count(&self) -> usize {
        self.index_count
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn g(&self) -> &[bool] {
        &self.g
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Side length of `A(x)` and `B(y)`.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn source(&self) -> &RankSource {
        &self.source
    }

    /// Same matrices, complemented `g`.
    pub fn negate(&self) -> Self {
        self.with_g(self.g.iter().map(|b| !b).collect(), self.order)
            .expect("same length")
    }

    /// Same matrices with a different step function.
    pub fn with_g(&self, g: Vec<bool>, order: usize) -> Result<Self> {
        check_g(&g, order)?;
        Ok(RankProblem {
            g,
            order,
            ..self.clone()
        })
    }

    pub fn matrix_a(&self, x: usize) -> ExactMat {
        match self.source.as_ref() {
            RankSource::Table { a, .. } => a[x].clone(),
            RankSource::Combined { components } => block_diag(
                &components
                    .iter()
                    .map(|c| repeat_diag(&c.problem.matrix_a(c.row_map.apply(x)), c.weight))
                    .collect::<Vec<_>>(),
            ),
        }
    }

    pub fn matrix_b(&self, y: usize) -> ExactMat {
        match self.source.as_ref() {
            RankSource::Table { b, .. } => b[y].clone(),
            RankSource::Combined { components } => block_diag(
                &components
                    .iter()
                    .map(|c| repeat_diag(&c.problem.matrix_b(c.col_map.apply(y)), c.weight))
                    .collect::<Vec<_>>(),
            ),
        }
    }

    /// `rank_exact(A(x) + B(y))` on the materialized matrices.
    pub fn rank(&self, x: usize, y: usize) -> usize {
        let m = self
            .matrix_a(x)
            .checked_add(&self.matrix_b(y))
            .expect("square tables of one side");
        rank_exact(&m)
    }

    /// Rank through the block structure: `sum w_i * rank_i`. Agrees with
    /// [`RankProblem::rank`]; much cheaper for combinations.
    pub fn structural_rank(&self, x: usize, y: usize) -> usize {
        match self.source.as_ref() {
            RankSource::Table { .. } => self.rank(x, y),
            RankSource::Combined { components } => components
                .iter()
                .map(|c| c.weight * c.problem.structural_rank(c.row_map.apply(x), c.col_map.apply(y)))
                .sum(),
        }
    }

    pub fn g_at(&self, rank: usize) -> bool {
        self.g[rank.min(self.order)]
    }

    pub fn eval(&self, x: usize, y: usize) -> bool {
        self.g_at(self.rank(x, y))
    }

    pub fn eval_structural(&self, x: usize, y: usize) -> bool {
        self.g_at(self.structural_rank(x, y))
    }

    /// Replaces a combined source by explicit tables.
    pub fn to_tables(&self) -> Self {
        let a = (0..self.index_count)
            .into_par_iter()
            .map(|x| self.matrix_a(x))
            .collect();
        let b = (0..self.index_count)
            .into_par_iter()
            .map(|y| self.matrix_b(y))
            .collect();
        RankProblem {
            source: Arc::new(RankSource::Table { a, b }),
            ..self.clone()
        }
    }

    /// Compresses the matrices to `order x order` when they are larger, so
    /// that every rank is at most the order. Rank is preserved up to the cap,
    /// which `g` cannot see anyway.
    pub fn normalized(&self, seed: u64) -> Result<Self> {
        if self.side <= self.order {
            return Ok(self.clone());
        }
        let c = fit_pair_family(self, self.order, derive_seed(seed, "normalize"))?;
        let a: Vec<ExactMat> = (0..self.index_count)
            .map(|x| c.apply(&self.matrix_a(x)))
            .collect::<Result<_>>()?;
        let b: Vec<ExactMat> = (0..self.index_count)
            .map(|y| c.apply(&self.matrix_b(y)))
            .collect::<Result<_>>()?;
        let mut p = RankProblem::from_tables(a, b, self.g.clone(), self.order)?;
        p.symmetric = self.symmetric;
        Ok(p)
    }

    /// Tables stay tables; combinations keep their block structure, since
    /// their matrices have side equal to the (possibly large) order.
    pub fn to_file(&self) -> RankProblemFile {
        let form = match self.source.as_ref() {
            RankSource::Table { a, b } => ProblemForm::Table {
                a: a.clone(),
                b: b.clone(),
            },
            RankSource::Combined { components } => ProblemForm::Combined {
                components: components
                    .iter()
                    .map(|c| ComponentFile {
                        weight: c.weight,
                        row_map: map_to_file(&c.row_map),
                        col_map: map_to_file(&c.col_map),
                        problem: c.problem.to_file(),
                    })
                    .collect(),
            },
        };
        RankProblemFile {
            index_count: self.index_count,
            order: self.order,
            symmetric: self.symmetric,
            g: self.g.iter().map(|&v| u8::from(v)).collect(),
            form,
        }
    }

    pub fn from_file(f: &RankProblemFile) -> Result<Self> {
        if let Some(v) = f.g.iter().find(|&&v| v > 1) {
            return Err(Error::Json(format!("g entry {v} is not 0/1")));
        }
        let g: Vec<bool> = f.g.iter().map(|&v| v == 1).collect();
        let p = match &f.form {
            ProblemForm::Table { a, b } => {
                if a.len() != f.index_count {
                    return Err(Error::Json(format!(
                        "index_count {} but {} A matrices",
                        f.index_count,
                        a.len()
                    )));
                }
                RankProblem::from_tables(a.clone(), b.clone(), g, f.order)?
            }
            ProblemForm::Combined { components } => {
                let parts: Vec<CombineInput> = components
                    .iter()
                    .map(|c| {
                        Ok(CombineInput {
                            problem: RankProblem::from_file(&c.problem)?,
                            row_map: map_from_file(&c.row_map),
                            col_map: map_from_file(&c.col_map),
                        })
                    })
                    .collect::<Result<_>>()?;
                let stored: Vec<usize> = components.iter().map(|c| c.weight).collect();
                // g is stored directly; the gamma passed here is discarded
                let p = bool_combine(f.index_count, |_| false, parts)?.with_g(g, f.order)?;
                let RankSource::Combined { components } = p.source.as_ref() else {
                    unreachable!("bool_combine builds a combination")
                };
                if components.iter().map(|c| c.weight).ne(stored) {
                    return Err(Error::Json("component weights are not mixed radix".into()));
                }
                p
            }
        };
        if p.symmetric != f.symmetric {
            return Err(Error::Json("symmetric flag disagrees with the matrices".into()));
        }
        Ok(p)
    }
}

fn map_to_file(m: &InputMap) -> Option<Vec<usize>> {
    match m {
        InputMap::Identity => None,
        InputMap::Table(t) => Some(t.as_ref().clone()),
    }
}

fn map_from_file(m: &Option<Vec<usize>>) -> InputMap {
    m.as_ref().map_or(InputMap::Identity, |t| InputMap::table(t.clone()))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankProblemFile {
    pub index_count: usize,
    pub order: usize,
    pub symmetric: bool,
    pub g: Vec<u8>,
    #[serde(flatten)]
    pub form: ProblemForm,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ProblemForm {
    /// Explicit `A(x)`, `B(y)` for every index.
    Table { a: Vec<ExactMat>, b: Vec<ExactMat> },
    /// Weighted block-diagonal copies of component problems.
    Combined { components: Vec<ComponentFile> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentFile {
    pub weight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_map: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_map: Option<Vec<usize>>,
    pub problem: RankProblemFile,
}

/// Fits a compressor to `target x target` over `{A(x) + B(y)}`.
fn fit_pair_family(p: &RankProblem, target: usize, seed: u64) -> Result<Compressor> {
    let n = p.index_count;
    let a: Vec<ExactMat> = (0..n).into_par_iter().map(|x| p.matrix_a(x)).collect();
    let b: Vec<ExactMat> = (0..n).into_par_iter().map(|y| p.matrix_b(y)).collect();
    let members: Vec<ExactMat> = (0..n)
        .into_par_iter()
        .flat_map_iter(|x| {
            let ax = &a[x];
            b.iter().map(move |by| ax.checked_add(by).expect("same side"))
        })
        .collect();
    let family = MatFamily::explicit(members)?;
    fit_compressor(&family, target, target, seed, FIT_RETRIES)
}

/// `HD>=k` on words of length `n` over `alphabet`: `A(x) = Pi(Diag(x))`,
/// `B = -A`, `g(t) = 1{t >= k}`. `k` may exceed `n`; the diagonal is then
/// zero-padded to `k x k`.
pub fn hamming_rank_problem(n: usize, alphabet: &[BigInt], k: usize, seed: u64) -> Result<RankProblem> {
    if k == 0 {
        return Err(Error::InvalidInput("threshold must be at least 1".into()));
    }
    let words = Words::new(n, alphabet.to_vec())?;
    let c = fit_hd_compressor(&words, k, seed, &FitConfig::default())?;
    let a: Vec<ExactMat> = (0..words.count())
        .into_par_iter()
        .map(|x| c.apply_diagonal(&words.embed(x)))
        .collect::<Result<_>>()?;
    let g = (0..=k).map(|t| t >= k).collect();
    RankProblem::symmetric_from(a, g, k)
}

pub fn hd_rank_problem(n: usize, k: usize, seed: u64) -> Result<RankProblem> {
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    hamming_rank_problem(n, &[BigInt::zero(), BigInt::from(1)], k, seed)
}

/// `x != y` on `[n]`: `A(x) = [x]`, order 1.
pub fn not_equal_problem(n: usize) -> RankProblem {
    let a = (0..n).map(|x| ExactMat::diag(&[BigInt::from(x)])).collect();
    RankProblem::symmetric_from(a, vec![false, true], 1).expect("1x1 tables")
}

/// One input of a boolean combination.
#[derive(Clone, Debug)]
pub struct CombineInput {
    pub problem: RankProblem,
    pub row_map: InputMap,
    pub col_map: InputMap,
}

impl CombineInput {
    pub fn identity(problem: RankProblem) -> Self {
        CombineInput {
            problem,
            row_map: InputMap::Identity,
            col_map: InputMap::Identity,
        }
    }
}

/// Boolean function given by its truth table, indexed by `sum b_i 2^i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthTable {
    pub arity: usize,
    pub table: Vec<bool>,
}

impl TruthTable {
    pub fn new(arity: usize, table: Vec<bool>) -> Result<Self> {
        if table.len() != 1 << arity {
            return Err(Error::SizeMismatch(format!(
                "truth table of {} entries for {arity} inputs",
                table.len()
            )));
        }
        Ok(TruthTable { arity, table })
    }

    pub fn from_fn(arity: usize, f: impl Fn(&[bool]) -> bool) -> Self {
        let table = (0..1usize << arity)
            .map(|i| f(&(0..arity).map(|j| i >> j & 1 == 1).collect::<Vec<_>>()))
            .collect();
        TruthTable { arity, table }
    }

    pub fn eval(&self, bits: &[bool]) -> bool {
        let i = bits
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &b)| acc | (usize::from(b) << j));
        self.table[i]
    }
}

/// Mixed-radix weights `w_i = prod_{j<i} (k_j + 1)` and the resulting order.
pub fn mixed_radix(orders: &[usize]) -> Result<(Vec<usize>, usize)> {
    let mut weights = Vec::with_capacity(orders.len());
    let mut w: usize = 1;
    for &k in orders {
        weights.push(w);
        w = w.checked_mul(k + 1).ok_or(Error::BudgetExceeded {
            dim: usize::MAX,
            budget: MAX_TABLE,
        })?;
    }
    Ok((weights, w - 1))
}

/// Reads each component rank back out of a combined rank.
pub fn mixed_radix_digits(rank: usize, orders: &[usize]) -> Vec<usize> {
    let mut rest = rank;
    orders
        .iter()
        .map(|&k| {
            let d = rest % (k + 1);
            rest /= k + 1;
            d
        })
        .collect()
}

/// Combines rank problems under `gamma`. Copy `i` of `A_i(x_i)` is repeated
/// `w_i` times block-diagonally, so `rank = sum w_i rank_i` and the mixed
/// radix digits recover every component rank. `gamma` receives the component
/// outputs in order.
pub fn bool_combine(
    index_count: usize,
    gamma: impl Fn(&[bool]) -> bool,
    inputs: Vec<CombineInput>,
) -> Result<RankProblem> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no components to combine".into()));
    }
    for (i, c) in inputs.iter().enumerate() {
        let p = &c.problem;
        if p.side > p.order {
            return Err(Error::InvalidInput(format!(
                "component {i} has side {} above its order {}; normalize it first",
                p.side, p.order
            )));
        }
        let check = |m: &InputMap| match m {
            InputMap::Identity if index_count <= p.index_count => Ok(()),
            InputMap::Identity => Err(Error::SizeMismatch(format!(
                "component {i}: identity map from {index_count} into {}",
                p.index_count
            ))),
            InputMap::Table(t) if t.len() != index_count => Err(Error::SizeMismatch(format!(
                "component {i}: map of length {} on {index_count} indices",
                t.len()
            ))),
            InputMap::Table(t) => match t.iter().find(|&&v| v >= p.index_count) {
                Some(&v) => Err(Error::IndexOutOfRange {
                    index: v,
                    bound: p.index_count,
                }),
                None => Ok(()),
            },
        };
        check(&c.row_map)?;
        check(&c.col_map)?;
    }
    let orders: Vec<usize> = inputs.iter().map(|c| c.problem.order).collect();
    let (weights, order) = mixed_radix(&orders)?;
    if order >= MAX_TABLE {
        return Err(Error::BudgetExceeded {
            dim: order + 1,
            budget: MAX_TABLE,
        });
    }
    let g: Vec<bool> = (0..=order)
        .map(|rank| {
            let bits: Vec<bool> = mixed_radix_digits(rank, &orders)
                .into_iter()
                .zip(&inputs)
                .map(|(d, c)| c.problem.g[d])
                .collect();
            gamma(&bits)
        })
        .collect();
    let symmetric = inputs.iter().all(|c| c.problem.symmetric && c.row_map == c.col_map);
    let side = inputs.iter().zip(&weights).map(|(c, w)| c.problem.side * w).sum();
    let components = inputs
        .into_iter()
        .zip(weights)
        .map(|(c, weight)| Component {
            problem: c.problem,
            weight,
            row_map: c.row_map,
            col_map: c.col_map,
        })
        .collect();
    Ok(RankProblem {
        index_count,
        order,
        g,
        symmetric,
        side,
        source: Arc::new(RankSource::Combined { components }),
    })
}

/// `P` with `g(t) = 1{t >= s}` and order `s`.
#[derive(Clone, Debug)]
pub struct MonotonePiece {
    pub threshold: usize,
    pub problem: RankProblem,
}

/// Binary search on the capped rank; answer 1 at a query means `rank >= threshold`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ThresholdTree {
    Leaf(bool),
    Query {
        threshold: usize,
        below: Box<ThresholdTree>,
        at_or_above: Box<ThresholdTree>,
    },
}

impl ThresholdTree {
    pub fn evaluate(&self, rank: usize) -> bool {
        match self {
            ThresholdTree::Leaf(b) => *b,
            ThresholdTree::Query {
                threshold,
                below,
                at_or_above,
            } => {
                if rank >= *threshold {
                    at_or_above.evaluate(rank)
                } else {
                    below.evaluate(rank)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            ThresholdTree::Leaf(_) => 0,
            ThresholdTree::Query { below, at_or_above, .. } => 1 + below.depth().max(at_or_above.depth()),
        }
    }

    /// Thresholds queried, sorted and deduplicated.
    pub fn thresholds(&self) -> Vec<usize> {
        fn walk(t: &ThresholdTree, out: &mut Vec<usize>) {
            if let ThresholdTree::Query {
                threshold,
                below,
                at_or_above,
            } = t
            {
                out.push(*threshold);
                walk(below, out);
                walk(at_or_above, out);
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Swaps each query for the oracle supplied for its threshold.
    pub fn to_oracle_tree(&self, oracle_for: &impl Fn(usize) -> OracleRef) -> OracleTree {
        match self {
            ThresholdTree::Leaf(b) => OracleTree::Leaf(*b),
            ThresholdTree::Query {
                threshold,
                below,
                at_or_above,
            } => OracleTree::query(
                oracle_for(*threshold),
                below.to_oracle_tree(oracle_for),
                at_or_above.to_oracle_tree(oracle_for),
            ),
        }
    }
}

fn search(g: &[bool], lo: usize, hi: usize) -> ThresholdTree {
    if g[lo..=hi].iter().all(|&v| v == g[lo]) {
        return ThresholdTree::Leaf(g[lo]);
    }
    let mid = (lo + hi).div_ceil(2);
    ThresholdTree::Query {
        threshold: mid,
        below: Box::new(search(g, lo, mid - 1)),
        at_or_above: Box::new(search(g, mid, hi)),
    }
}

/// Threshold pieces for `s = 1..=order` and a binary-search tree over them
/// of depth at most `ceil(log2(order + 1))`; constant ranges are pruned.
pub fn monotone_decompose(p: &RankProblem) -> (Vec<MonotonePiece>, ThresholdTree) {
    let pieces = (1..=p.order)
        .map(|s| MonotonePiece {
            threshold: s,
            problem: p
                .with_g((0..=s).map(|t| t >= s).collect(), s)
                .expect("table matches order"),
        })
        .collect();
    (pieces, search(&p.g, 0, p.order))
}

/// Support representation of `1{rank(A(x) + B(y)) >= s}`: the matrices are
/// compressed to `s x s` over `{A(x) + B(y)}` and paired through minor
/// embeddings, so the dot product is `det(Pi(A(x) + B(y)))`.
#[derive(Debug)]
pub struct ThresholdSupportRep {
    threshold: usize,
    left: Vec<Vec<BigInt>>,
    right: Vec<Vec<BigInt>>,
    compressor: Compressor,
}

impl ThresholdSupportRep {
    pub fn build(p: &RankProblem, s: usize, seed: u64) -> Result<Self> {
        if s == 0 {
            return Err(Error::InvalidInput("threshold must be at least 1".into()));
        }
        let c = fit_pair_family(p, s, seed)?;
        let side = |m: ExactMat, side: Side| -> Result<Vec<BigInt>> { minor_embed(&c.apply(&m)?, side) };
        let left = (0..p.index_count)
            .into_par_iter()
            .map(|x| side(p.matrix_a(x), Side::Left))
            .collect::<Result<_>>()?;
        let right = (0..p.index_count)
            .into_par_iter()
            .map(|y| side(p.matrix_b(y), Side::Right))
            .collect::<Result<_>>()?;
        Ok(ThresholdSupportRep {
            threshold: s,
            left,
            right,
            compressor: c,
        })
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn compressor(&self) -> &Compressor {
        &self.compressor
    }
}

impl SupportOracle for ThresholdSupportRep {
    fn dim(&self) -> usize {
        minor_embed_dim(self.threshold)
    }

    fn index_count(&self) -> usize {
        self.left.len()
    }

    fn left(&self, x: usize) -> Vec<BigInt> {
        self.left[x].clone()
    }

    fn right(&self, y: usize) -> Vec<BigInt> {
        self.right[y].clone()
    }

    fn describe(&self) -> String {
        format!("rank>={}", self.threshold)
    }
}

pub struct RankSignRep {
    pub rep: StructuredSignRep,
    pub tree: ThresholdTree,
    pub oracles: Vec<Arc<ThresholdSupportRep>>,
    pub report: SignReport,
}

/// Monotone pieces to support reps to a compiled sign representation,
/// verified against `eval` over the whole domain.
pub fn to_sign_rep(p: &RankProblem, seed: u64, mode: GammaMode) -> Result<RankSignRep> {
    let (_, tree) = monotone_decompose(p);
    let oracles: Vec<Arc<ThresholdSupportRep>> = tree
        .thresholds()
        .into_iter()
        .map(|s| ThresholdSupportRep::build(p, s, derive_seed(seed, &format!("threshold/{s}"))).map(Arc::new))
        .collect::<Result<_>>()?;
    let lookup = |s: usize| -> OracleRef {
        let o = oracles
            .iter()
            .find(|o| o.threshold == s)
            .expect("one oracle per threshold");
        o.clone()
    };
    let otree = tree.to_oracle_tree(&lookup);
    let rep = compile(&otree, p.index_count, mode)?;
    let report = verify_sign(&rep, p.index_count, VerifyMode::Exhaustive, |x, y| {
        p.eval_structural(x, y)
    });
    if !report.is_clean() {
        return Err(Error::Inconsistent(format!(
            "compiled sign pattern differs from eval on {} pairs",
            report.violation_count
        )));
    }
    Ok(RankSignRep {
        rep,
        tree,
        oracles,
        report,
    })
}

/// Capped-sum fingerprint `c_t = sum_i min(e_i, t)` for `t = 1..=k`.
pub fn capped_sums(multiset: &[usize], k: usize) -> Vec<u64> {
    (1..=k)
        .map(|t| multiset.iter().map(|&e| e.min(t) as u64).sum())
        .collect()
}

/// Inverts [`capped_sums`] on the nonzero elements, returned in descending
/// order. The number of elements `>= t` is `c_t - c_{t-1}`; elements above
/// `k` read as `k`.
pub fn multiset_decode(sums: &[u64], size_bound: usize) -> Result<Vec<usize>> {
    let k = sums.len();
    let mut at_least = Vec::with_capacity(k + 1);
    let mut prev = 0u64;
    for (i, &c) in sums.iter().enumerate() {
        let d = c
            .checked_sub(prev)
            .ok_or_else(|| Error::Inconsistent(format!("capped sums decrease at t={}", i + 1)))?;
        if at_least.last().is_some_and(|&l| d > l) {
            return Err(Error::Inconsistent(format!("more elements >= {} than >= {}", i + 1, i)));
        }
        at_least.push(d);
        prev = c;
    }
    at_least.push(0);
    if at_least[0] as usize > size_bound {
        return Err(Error::Inconsistent(format!(
            "{} nonzero elements exceed the bound {size_bound}",
            at_least[0]
        )));
    }
    let mut out = Vec::new();
    for v in (1..=k).rev() {
        let count = at_least[v - 1] - at_least[v];
        out.extend(std::iter::repeat_n(v, count as usize));
    }
    Ok(out)
}

/// Outer function `h`, distance bound `r` and inner problems, one per coordinate.
#[derive(Clone, Debug)]
pub struct CompositionSpec {
    pub r: usize,
    pub h: Vec<bool>,
    pub inners: Vec<RankProblem>,
}

impl CompositionSpec {
    pub fn new(r: usize, h: Vec<bool>, inners: Vec<RankProblem>) -> Result<Self> {
        if h.len() != r + 1 {
            return Err(Error::SizeMismatch(format!("h has {} entries for r={r}", h.len())));
        }
        let Some(first) = inners.first() else {
            return Err(Error::InvalidInput("composition needs at least one inner".into()));
        };
        for (i, p) in inners.iter().enumerate() {
            if p.index_count != first.index_count {
                return Err(Error::SizeMismatch(format!(
                    "inner {i} has {} indices, inner 0 has {}",
                    p.index_count, first.index_count
                )));
            }
        }
        Ok(CompositionSpec { r, h, inners })
    }

    pub fn coordinates(&self) -> usize {
        self.inners.len()
    }

    pub fn inner_size(&self) -> usize {
        self.inners[0].index_count
    }

    /// `N^m`, or `None` on overflow.
    pub fn domain(&self) -> Option<usize> {
        self.inner_size().checked_pow(self.coordinates() as u32)
    }

    /// Little-endian digits of a tuple index.
    pub fn tuple(&self, x: usize) -> Vec<usize> {
        let n = self.inner_size();
        let mut rest = x;
        (0..self.coordinates())
            .map(|_| {
                let d = rest % n;
                rest /= n;
                d
            })
            .collect()
    }
}

/// Ground truth straight from the definition.
pub fn compose_semantics(spec: &CompositionSpec, x: &[usize], y: &[usize]) -> bool {
    assert_eq!(x.len(), spec.coordinates());
    assert_eq!(y.len(), spec.coordinates());
    let delta: Vec<usize> = (0..x.len()).filter(|&i| x[i] != y[i]).collect();
    if delta.len() > spec.r {
        return false;
    }
    let sum = delta.iter().filter(|&&i| spec.inners[i].eval(x[i], y[i])).count();
    spec.h[sum]
}

/// `A^(t)`: ranks of its differences are `sum_i min(rank_i, t)` when at most
/// `r` coordinates differ.
#[derive(Clone, Debug)]
pub struct CappedLayer {
    pub t: usize,
    pub matrices: Vec<ExactMat>,
}

pub struct Composition {
    pub problem: RankProblem,
    pub layers: Vec<CappedLayer>,
    /// `(t, s)` for each threshold component, after `Q0` at position 0.
    pub thresholds: Vec<(usize, usize)>,
}

fn difference_family(mats: &[ExactMat]) -> Result<MatFamily> {
    let members: Vec<ExactMat> = mats
        .par_iter()
        .flat_map_iter(|x| mats.iter().map(move |y| x.checked_sub(y).expect("same shape")))
        .collect();
    MatFamily::explicit(members)
}

/// Builds the distance-`r` composition as a boolean combination of `Q0`
/// (at most `r` coordinates differ) and thresholds `1{rank(A^(t)(x) -
/// A^(t)(y)) >= s}` for `t` up to the inner order and `s` up to `rt`. The
/// capped sums recover the multiset of inner ranks, which determines the
/// output through the shared inner `g` and `h`.
pub fn distance_r_compose(spec: &CompositionSpec, seed: u64) -> Result<Composition> {
    let first = &spec.inners[0];
    for (i, p) in spec.inners.iter().enumerate() {
        if !p.symmetric {
            return Err(Error::InvalidInput(format!("inner {i} is not symmetric")));
        }
        if p.order != first.order || p.g != first.g {
            return Err(Error::InvalidInput(format!(
                "inner {i} has a different order or g than inner 0"
            )));
        }
    }
    let (n, m, r, k) = (spec.inner_size(), spec.coordinates(), spec.r, first.order);
    let domain = spec.domain().filter(|&d| d <= MAX_TABLE).ok_or(Error::BudgetExceeded {
        dim: usize::MAX,
        budget: MAX_TABLE,
    })?;
    if r == 0 {
        return Err(Error::InvalidInput("distance bound r must be at least 1".into()));
    }
    let inner_a: Vec<Vec<ExactMat>> = spec
        .inners
        .iter()
        .map(|p| (0..n).map(|x| p.matrix_a(x)).collect())
        .collect();

    let alphabet: Vec<BigInt> = (0..n).map(BigInt::from).collect();
    let q0 = hamming_rank_problem(m, &alphabet, r + 1, derive_seed(seed, "compose/q0"))?.negate();
    let mut inputs = vec![CombineInput::identity(q0)];
    let mut layers = Vec::new();
    let mut thresholds = Vec::new();
    for t in 1..=k {
        let coord: Vec<Compressor> = inner_a
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let fam = difference_family(a)?;
                fit_compressor(
                    &fam,
                    t,
                    t,
                    derive_seed(seed, &format!("compose/t{t}/coord{i}")),
                    FIT_RETRIES,
                )
            })
            .collect::<Result<_>>()?;
        let compressed: Vec<Vec<ExactMat>> = inner_a
            .iter()
            .zip(&coord)
            .map(|(a, c)| a.iter().map(|m| c.apply(m)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let blocks: Vec<ExactMat> = (0..domain)
            .into_par_iter()
            .map(|x| {
                let digits = spec.tuple(x);
                block_diag(
                    &digits
                        .iter()
                        .enumerate()
                        .map(|(i, &d)| compressed[i][d].clone())
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let global = fit_compressor(
            &difference_family(&blocks)?,
            r * t,
            r * t,
            derive_seed(seed, &format!("compose/t{t}/global")),
            FIT_RETRIES,
        )?;
        let layer: Vec<ExactMat> = blocks.par_iter().map(|b| global.apply(b)).collect::<Result<_>>()?;
        let layer_family = difference_family(&layer)?;
        for s in 1..=r * t {
            let c = fit_compressor(
                &layer_family,
                s,
                s,
                derive_seed(seed, &format!("compose/t{t}/s{s}")),
                FIT_RETRIES,
            )?;
            let a: Vec<ExactMat> = layer.iter().map(|m| c.apply(m)).collect::<Result<_>>()?;
            let piece = RankProblem::symmetric_from(a, (0..=s).map(|v| v >= s).collect(), s)?;
            inputs.push(CombineInput::identity(piece));
            thresholds.push((t, s));
        }
        layers.push(CappedLayer { t, matrices: layer });
    }

    let g = first.g.clone();
    let h = spec.h.clone();
    let plan = thresholds.clone();
    let gamma = move |bits: &[bool]| -> bool {
        if !bits[0] {
            return false;
        }
        let mut sums = vec![0u64; k];
        for (&(t, s), &b) in plan.iter().zip(&bits[1..]) {
            // thresholds for one t must form a prefix in s
            let c = &mut sums[t - 1];
            match (b, *c as usize + 1 == s) {
                (true, true) => *c += 1,
                (true, false) => return false,
                (false, _) => {}
            }
        }
        match multiset_decode(&sums, r) {
            Ok(ms) => {
                let total = ms.iter().filter(|&&e| g[e]).count();
                total <= r && h[total]
            }
            Err(_) => false,
        }
    };
    let problem = bool_combine(domain, gamma, inputs)?;
    Ok(Composition {
        problem,
        layers,
        thresholds,
    })
}

/// The `{c,c}`-Hamming-distance composition as literally parameterized:
/// inners `HD<=c` on `n`-bit words, `h(t) = 1{t <= r}`, `m` coordinates.
/// Since `h` is constant on `0..=r`, the output is just `|Delta| <= r`.
pub fn example_cc_hd(c: usize, r: usize, n: usize, m: usize, seed: u64) -> Result<CompositionSpec> {
    let inner = cc_inner(n, c, seed)?.negate();
    CompositionSpec::new(r, vec![true; r + 1], vec![inner; m])
}

/// The same family with the intended semantics (at most `r` rows differ and
/// each differing row is within distance `c`): inners `HD>=c+1`, and
/// `h(t) = 1{t = 0}` rejects any far row.
pub fn example_cc_hd_exact(c: usize, r: usize, n: usize, m: usize, seed: u64) -> Result<CompositionSpec> {
    let inner = cc_inner(n, c, seed)?;
    let h = (0..=r).map(|t| t == 0).collect();
    CompositionSpec::new(r, h, vec![inner; m])
}

fn cc_inner(n: usize, c: usize, seed: u64) -> Result<RankProblem> {
    hamming_rank_problem(
        n,
        &[BigInt::zero(), BigInt::from(1)],
        c + 1,
        derive_seed(seed, "cc-hd/inner"),
    )
}

/// Direct definition of `{c,r}`-HD on `m`-tuples of `n`-bit rows.
pub fn cc_hd_semantics(c: usize, r: usize, x: &[usize], y: &[usize]) -> bool {
    let mut changed = 0;
    for (a, b) in x.iter().zip(y) {
        if a != b {
            changed += 1;
            if (a ^ b).count_ones() as usize > c {
                return false;
            }
        }
    }
    changed <= r
}
