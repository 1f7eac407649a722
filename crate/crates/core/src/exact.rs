//! Exact integer matrices.
//!
//! Every rank and determinant in the crate goes through the fraction-free
//! (Bareiss) elimination in this module. Entries are arbitrary-precision
//! integers; rationals only appear in the unit-distance embedding.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ExactInt = BigInt;
pub type ExactRat = BigRational;

/// Dense row-major matrix of arbitrary-precision integers.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MatrixJson", into = "MatrixJson")]
pub struct ExactMat {
    rows: usize,
    cols: usize,
    entries: Vec<ExactInt>,
}

/// Wire form: entries as decimal strings.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<String>,
}

impl From<ExactMat> for MatrixJson {
    fn from(m: ExactMat) -> Self {
        MatrixJson {
            rows: m.rows,
            cols: m.cols,
            entries: m.entries.iter().map(|e| e.to_string()).collect(),
        }
    }
}

impl TryFrom<MatrixJson> for ExactMat {
    type Error = Error;

    fn try_from(j: MatrixJson) -> Result<Self> {
        let entries = j
            .entries
            .iter()
            .map(|s| {
                s.parse::<BigInt>()
                    .map_err(|_| Error::Json(format!("bad integer entry `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        ExactMat::new(j.rows, j.cols, entries)
    }
}

impl fmt::Debug for ExactMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExactMat{}x{}[", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, "; ")?;
            }
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, " ")?;
                }
                write!(f, "{}", self.get(r, c))?;
            }
        }
        write!(f, "]")
    }
}

impl ExactMat {
    pub fn new(rows: usize, cols: usize, entries: Vec<ExactInt>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::SizeMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.entries[i * n + i] = BigInt::one();
        }
        m
    }

    /// `rows x cols` matrix with ones on the leading diagonal; an injective
    /// embedding when `rows >= cols`.
    pub fn embedding(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows.min(cols) {
            m.entries[i * cols + i] = BigInt::one();
        }
        m
    }

    pub fn diag(values: &[ExactInt]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.entries[i * n + i] = v.clone();
        }
        m
    }

    pub fn from_rows<T: Into<ExactInt> + Clone>(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::SizeMismatch("ragged rows".into()));
        }
        let entries = rows
            .iter()
            .flat_map(|row| row.iter().cloned().map(Into::into))
            .collect();
        Self::new(r, c, entries)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> ExactInt) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        Self { rows, cols, entries }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[ExactInt] {
        &self.entries
    }

    pub fn get(&self, r: usize, c: usize) -> &ExactInt {
        &self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: ExactInt) {
        self.entries[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[ExactInt] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<ExactInt> {
        (0..self.rows).map(|r| self.get(r, c).clone()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Zero::is_zero)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).clone())
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(&BigInt, &BigInt) -> BigInt) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::SizeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let entries = self.entries.iter().zip(&other.entries).map(|(a, b)| f(a, b)).collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn neg(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| -e).collect(),
        }
    }

    pub fn scale(&self, s: &ExactInt) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|e| e * s).collect(),
        }
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::SizeMismatch(format!(
                "cannot multiply {:?} by {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(l, j);
                    if !b.is_zero() {
                        out.entries[i * other.cols + j] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        for &r in rows {
            if r >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: r,
                    bound: self.rows,
                });
            }
        }
        for &c in cols {
            if c >= self.cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    bound: self.cols,
                });
            }
        }
        Ok(Self::from_fn(rows.len(), cols.len(), |r, c| {
            self.get(rows[r], cols[c]).clone()
        }))
    }

    /// Largest entry bit length.
    pub fn max_bits(&self) -> u64 {
        self.entries.iter().map(BigInt::bits).max().unwrap_or(0)
    }
}

/// Optional cap on intermediate entry size during elimination.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BitBudget(pub Option<u64>);

impl BitBudget {
    pub const UNLIMITED: BitBudget = BitBudget(None);

    fn check(&self, v: &BigInt) -> Result<()> {
        match self.0 {
            Some(budget) if v.bits() > budget => Err(Error::BitBudgetExceeded { bits: v.bits(), budget }),
            _ => Ok(()),
        }
    }
}

struct Echelon {
    rank: usize,
    swaps: usize,
    last_pivot: BigInt,
}

/// Fraction-free forward elimination. After pivot step `r` every active
/// entry is an `(r+1)`-minor of the input, so each division by the previous
/// pivot is exact.
fn bareiss(m: &ExactMat, budget: BitBudget) -> Result<Echelon> {
    let (rows, cols) = m.shape();
    let mut a = m.entries.clone();
    let mut rank = 0;
    let mut swaps = 0;
    let mut prev = BigInt::one();
    for col in 0..cols {
        if rank == rows {
            break;
        }
        let Some(p) = (rank..rows).find(|&r| !a[r * cols + col].is_zero()) else {
            continue;
        };
        if p != rank {
            for c in 0..cols {
                a.swap(p * cols + c, rank * cols + c);
            }
            swaps += 1;
        }
        let pivot = a[rank * cols + col].clone();
        for r in rank + 1..rows {
            let factor = a[r * cols + col].clone();
            for c in col + 1..cols {
                let v = &pivot * &a[r * cols + c] - &factor * &a[rank * cols + c];
                let v = v / &prev;
                budget.check(&v)?;
                a[r * cols + c] = v;
            }
            a[r * cols + col] = BigInt::zero();
        }
        prev = pivot;
        rank += 1;
    }
    Ok(Echelon {
        rank,
        swaps,
        last_pivot: prev,
    })
}

pub fn rank_exact(m: &ExactMat) -> usize {
    bareiss(m, BitBudget::UNLIMITED)
        .expect("unlimited budget cannot fail")
        .rank
}

pub fn rank_exact_budgeted(m: &ExactMat, budget: BitBudget) -> Result<usize> {
    Ok(bareiss(m, budget)?.rank)
}

pub fn det_exact(m: &ExactMat) -> Result<ExactInt> {
    det_exact_budgeted(m, BitBudget::UNLIMITED)
}

pub fn det_exact_budgeted(m: &ExactMat, budget: BitBudget) -> Result<ExactInt> {
    if !m.is_square() {
        return Err(Error::NonSquare {
            rows: m.rows,
            cols: m.cols,
        });
    }
    let n = m.rows;
    if n == 0 {
        return Ok(BigInt::one());
    }
    let e = bareiss(m, budget)?;
    if e.rank < n {
        return Ok(BigInt::zero());
    }
    Ok(if e.swaps % 2 == 1 { -e.last_pivot } else { e.last_pivot })
}

/// Determinant of the submatrix on `rows` x `cols`; the empty minor is 1.
pub fn minor(m: &ExactMat, rows: &[usize], cols: &[usize]) -> Result<ExactInt> {
    if rows.len() != cols.len() {
        return Err(Error::SizeMismatch(format!(
            "minor with {} rows and {} columns",
            rows.len(),
            cols.len()
        )));
    }
    if rows.is_empty() {
        return Ok(BigInt::one());
    }
    det_exact(&m.submatrix(rows, cols)?)
}

pub fn block_diag(blocks: &[ExactMat]) -> ExactMat {
    let rows = blocks.iter().map(ExactMat::rows).sum();
    let cols = blocks.iter().map(ExactMat::cols).sum();
    let mut out = ExactMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        for r in 0..b.rows {
            for c in 0..b.cols {
                out.set(r0 + r, c0 + c, b.get(r, c).clone());
            }
        }
        r0 += b.rows;
        c0 += b.cols;
    }
    out
}

pub fn repeat_diag(m: &ExactMat, copies: usize) -> ExactMat {
    block_diag(&vec![m.clone(); copies])
}

pub fn dot(u: &[ExactInt], v: &[ExactInt]) -> ExactInt {
    debug_assert_eq!(u.len(), v.len());
    u.iter()
        .zip(v)
        .filter(|(a, b)| !a.is_zero() && !b.is_zero())
        .map(|(a, b)| a * b)
        .sum()
}

pub fn sign_of(v: &BigInt) -> i8 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[i64]]) -> ExactMat {
        let v: Vec<Vec<i64>> = rows.iter().map(|r| r.to_vec()).collect();
        ExactMat::from_rows(&v).unwrap()
    }

    /// Rank via rational Gaussian elimination; independent of Bareiss.
    fn rank_rational(a: &ExactMat) -> usize {
        let mut rows: Vec<Vec<ExactRat>> = (0..a.rows())
            .map(|r| a.row(r).iter().map(|e| ExactRat::from_integer(e.clone())).collect())
            .collect();
        let mut rank = 0;
        for c in 0..a.cols() {
            let Some(p) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
                continue;
            };
            rows.swap(p, rank);
            let pivot = rows[rank][c].clone();
            for r in 0..rows.len() {
                if r != rank && !rows[r][c].is_zero() {
                    let f = &rows[r][c] / &pivot;
                    let pivot_row = rows[rank].clone();
                    for (dst, src) in rows[r][c..].iter_mut().zip(&pivot_row[c..]) {
                        *dst -= src * &f;
                    }
                }
            }
            rank += 1;
        }
        rank
    }

    fn det_cofactor(a: &ExactMat) -> BigInt {
        let n = a.rows();
        if n == 0 {
            return BigInt::one();
        }
        let mut total = BigInt::zero();
        for c in 0..n {
            let rows: Vec<usize> = (1..n).collect();
            let cols: Vec<usize> = (0..n).filter(|&j| j != c).collect();
            let sub = a.submatrix(&rows, &cols).unwrap();
            let term = a.get(0, c) * det_cofactor(&sub);
            if c % 2 == 0 {
                total += term;
            } else {
                total -= term;
            }
        }
        total
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_exact(&m(&[&[1, 0, 0], &[0, -1, 0], &[0, 0, 0]])), 2);
        assert_eq!(rank_exact(&ExactMat::identity(4)), 4);
        let outer = m(&[&[4, 5, 6], &[8, 10, 12], &[12, 15, 18]]);
        let stacked = {
            let mut rows: Vec<Vec<BigInt>> = (0..3).map(|r| outer.row(r).to_vec()).collect();
            rows.extend((0..3).map(|r| outer.row(r).iter().map(|e| e * 2).collect()));
            ExactMat::from_rows(&rows).unwrap()
        };
        // every 2x2 minor vanishes
        for r in 0..6 {
            for r2 in r + 1..6 {
                for c in 0..3 {
                    for c2 in c + 1..3 {
                        assert!(minor(&stacked, &[r, r2], &[c, c2]).unwrap().is_zero());
                    }
                }
            }
        }
        assert_eq!(rank_exact(&stacked), 1);
    }

    #[test]
    fn det_examples() {
        assert_eq!(det_exact(&ExactMat::zeros(0, 0)).unwrap(), BigInt::one());
        assert_eq!(det_exact(&m(&[&[1, 2], &[3, 4]])).unwrap(), BigInt::from(-2));
        assert_eq!(
            det_exact(&ExactMat::zeros(2, 3)),
            Err(Error::NonSquare { rows: 2, cols: 3 })
        );
        // needs a row swap
        assert_eq!(
            det_exact(&m(&[&[0, 1, 2], &[1, 0, 3], &[4, -3, 8]])).unwrap(),
            det_cofactor(&m(&[&[0, 1, 2], &[1, 0, 3], &[4, -3, 8]]))
        );
        let a = m(&[
            &[3, -1, 4, 1, -5],
            &[9, 2, -6, 5, 3],
            &[5, -8, 9, 7, 9],
            &[3, 2, -3, 8, 4],
            &[-6, 2, 6, 4, 3],
        ]);
        assert_eq!(det_exact(&a).unwrap(), det_cofactor(&a));
    }

    #[test]
    fn minor_examples() {
        let a = m(&[&[2, 7, 1], &[8, 2, 8], &[1, 8, 2]]);
        assert_eq!(minor(&a, &[], &[]).unwrap(), BigInt::one());
        assert_eq!(minor(&ExactMat::identity(3), &[1, 2], &[1, 2]).unwrap(), BigInt::one());
        assert_eq!(minor(&a, &[0, 1, 2], &[0, 1, 2]).unwrap(), det_exact(&a).unwrap());
        assert!(matches!(minor(&a, &[0], &[]), Err(Error::SizeMismatch(_))));
        assert!(matches!(minor(&a, &[5], &[0]), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn block_examples() {
        assert_eq!(block_diag(&[]).shape(), (0, 0));
        assert_eq!(repeat_diag(&ExactMat::identity(1), 3), ExactMat::identity(3));
        let r2 = m(&[&[1, 2, 3], &[2, 4, 7]]);
        let r1 = m(&[&[2, 4], &[3, 6]]);
        assert_eq!(rank_exact(&r2), 2);
        assert_eq!(rank_exact(&r1), 1);
        let b = block_diag(&[r2, r1]);
        assert_eq!(b.shape(), (4, 5));
        assert_eq!(rank_exact(&b), 3);
    }

    #[test]
    fn bit_budget_aborts() {
        let big = BigInt::from(1) << 80;
        let a = ExactMat::from_fn(3, 3, |r, c| &big * BigInt::from(r * 3 + c + 1) + 1);
        assert!(matches!(
            rank_exact_budgeted(&a, BitBudget(Some(64))),
            Err(Error::BitBudgetExceeded { .. })
        ));
        assert_eq!(rank_exact_budgeted(&a, BitBudget(Some(1024))).unwrap(), rank_exact(&a));
    }

    #[test]
    fn json_uses_decimal_strings() {
        let a = m(&[&[1, -2], &[3, 4]]);
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"rows":2,"cols":2,"entries":["1","-2","3","4"]}"#);
        let back: ExactMat = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<ExactMat>(r#"{"rows":1,"cols":2,"entries":["1"]}"#).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn small_mat(max: usize) -> impl Strategy<Value = ExactMat> {
            (1..=max, 1..=max).prop_flat_map(|(r, c)| {
                proptest::collection::vec(-4i64..=4, r * c)
                    .prop_map(move |v| ExactMat::new(r, c, v.into_iter().map(BigInt::from).collect()).unwrap())
            })
        }

        /// Product of an r x k and k x c factor; rank <= k.
        fn low_rank_shaped(r: usize, c: usize) -> impl Strategy<Value = ExactMat> {
            (1..=3usize).prop_flat_map(move |k| {
                (
                    proptest::collection::vec(-3i64..=3, r * k),
                    proptest::collection::vec(-3i64..=3, k * c),
                )
                    .prop_map(move |(a, b)| {
                        let a = ExactMat::new(r, k, a.into_iter().map(BigInt::from).collect()).unwrap();
                        let b = ExactMat::new(k, c, b.into_iter().map(BigInt::from).collect()).unwrap();
                        a.checked_mul(&b).unwrap()
                    })
            })
        }

        fn low_rank(max: usize) -> impl Strategy<Value = ExactMat> {
            (1..=max, 1..=max).prop_flat_map(|(r, c)| low_rank_shaped(r, c))
        }

        fn low_rank_pair(max: usize) -> impl Strategy<Value = (ExactMat, ExactMat)> {
            (1..=max, 1..=max).prop_flat_map(|(r, c)| (low_rank_shaped(r, c), low_rank_shaped(r, c)))
        }

        fn square(max: usize) -> impl Strategy<Value = ExactMat> {
            (0..=max).prop_flat_map(|n| {
                proptest::collection::vec(-6i64..=6, n * n)
                    .prop_map(move |v| ExactMat::new(n, n, v.into_iter().map(BigInt::from).collect()).unwrap())
            })
        }

        fn hadamard(a: &ExactMat, b: &ExactMat) -> ExactMat {
            ExactMat::from_fn(a.rows(), a.cols(), |r, c| a.get(r, c) * b.get(r, c))
        }

        proptest! {
            #[test]
            fn rank_matches_rational_elimination(a in small_mat(6)) {
                prop_assert_eq!(rank_exact(&a), rank_rational(&a));
                prop_assert!(rank_exact(&a) <= a.rows().min(a.cols()));
            }

            #[test]
            fn low_rank_products(a in low_rank(6)) {
                prop_assert_eq!(rank_exact(&a), rank_rational(&a));
            }

            #[test]
            fn det_matches_cofactor(a in square(5)) {
                let d = det_exact(&a).unwrap();
                prop_assert_eq!(&d, &det_cofactor(&a));
                prop_assert_eq!(!d.is_zero(), rank_exact(&a) == a.rows());
            }

            #[test]
            fn laplace_along_any_row(a in square(5), row in 0usize..5) {
                let n = a.rows();
                prop_assume!(n > 0);
                let row = row % n;
                let rows: Vec<usize> = (0..n).filter(|&r| r != row).collect();
                let mut total = BigInt::zero();
                for c in 0..n {
                    let cols: Vec<usize> = (0..n).filter(|&j| j != c).collect();
                    let term = a.get(row, c) * minor(&a, &rows, &cols).unwrap();
                    if (row + c) % 2 == 0 { total += term } else { total -= term }
                }
                prop_assert_eq!(total, det_exact(&a).unwrap());
            }

            #[test]
            fn rank_invariant_under_permutation_and_scaling(
                a in small_mat(5),
                seed in any::<u64>(),
                scale in prop_oneof![-5i64..=-1, 1i64..=5],
            ) {
                let mut rp: Vec<usize> = (0..a.rows()).collect();
                let mut cp: Vec<usize> = (0..a.cols()).collect();
                rp.rotate_left((seed % a.rows() as u64) as usize);
                cp.reverse();
                let mut b = a.submatrix(&rp, &cp).unwrap();
                let r = (seed as usize / 7) % b.rows();
                for c in 0..b.cols() {
                    let v = b.get(r, c) * scale;
                    b.set(r, c, v);
                }
                prop_assert_eq!(rank_exact(&a), rank_exact(&b));
            }

            #[test]
            fn hadamard_rank_is_submultiplicative((a, b) in low_rank_pair(5)) {
                let h = hadamard(&a, &b);
                prop_assert!(rank_exact(&h) <= rank_exact(&a) * rank_exact(&b));
            }

            #[test]
            fn block_rank_is_additive(a in small_mat(4), b in small_mat(4)) {
                let bd = block_diag(&[a.clone(), b.clone()]);
                prop_assert_eq!(rank_exact(&bd), rank_exact(&a) + rank_exact(&b));
            }
        }
    }
}
