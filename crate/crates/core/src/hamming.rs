//! Support representations of "Hamming distance at least k".
//!
//! Words over a finite alphabet are embedded as integer vectors, compressed
//! from `Diag(x - y)` (n x n) down to a k x k matrix `A(x) - A(y)` whose
//! determinant is nonzero exactly when `dist(x, y) >= k`, and the determinant
//! is split into a `C(2k, k)`-dimensional inner product by minor embedding.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::compression::{fit_compressor_with, validate_alphabet, verify_compressor, Compressor, FitConfig, MatFamily};
use crate::error::{Error, Result};
use crate::exact::{ExactInt, ExactMat};
use crate::seed::derive_seed;
use crate::support::{verify_support, SupportOracle, SupportReport, VerifyMode};
use crate::veronese::{minor_embed, minor_embed_dim, Side};

/// Words of length `n` over `alphabet`, indexed little-endian in base
/// `|alphabet|` (position 0 is the lowest digit).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Words {
    n: usize,
    alphabet: Vec<ExactInt>,
}

impl Words {
    pub fn new(n: usize, alphabet: Vec<ExactInt>) -> Result<Self> {
        validate_alphabet(&alphabet)?;
        let count = (alphabet.len() as u128).checked_pow(n as u32);
        if count.is_none_or(|c| c > usize::MAX as u128) {
            return Err(Error::InvalidInput(format!(
                "{}^{n} words do not fit in an index",
                alphabet.len()
            )));
        }
        Ok(Words { n, alphabet })
    }

    pub fn binary(n: usize) -> Self {
        Words::new(n, vec![BigInt::zero(), BigInt::one()]).expect("binary alphabet is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> &[ExactInt] {
        &self.alphabet
    }

    pub fn count(&self) -> usize {
        self.alphabet.len().pow(self.n as u32)
    }

    pub fn digits(&self, mut x: usize) -> Vec<usize> {
        let q = self.alphabet.len();
        (0..self.n)
            .map(|_| {
                let d = x % q;
                x /= q;
                d
            })
            .collect()
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        let q = self.alphabet.len();
        digits.iter().rev().fold(0, |acc, &d| acc * q + d)
    }

    pub fn embed(&self, x: usize) -> Vec<ExactInt> {
        self.digits(x).into_iter().map(|d| self.alphabet[d].clone()).collect()
    }

    pub fn distance(&self, x: usize, y: usize) -> usize {
        if self.alphabet.len() == 2 {
            return (x ^ y).count_ones() as usize;
        }
        self.digits(x)
            .iter()
            .zip(self.digits(y))
            .filter(|(a, b)| **a != *b)
            .count()
    }
}

/// Compressor for `{Diag(x - y)}` to `k x k`. For `k = 1` this is the
/// weight vector `(b^0, ..., b^{n-1})` against all-ones with `b` one more
/// than the largest alphabet gap, so `sum z_i b^i = 0` only for `z = 0`.
pub fn fit_hd_compressor(words: &Words, k: usize, seed: u64, cfg: &FitConfig) -> Result<Compressor> {
    let family = MatFamily::diagonal_differences(words.n, &words.alphabet)?;
    if k == 1 {
        let max = words.alphabet.iter().max().expect("nonempty");
        let min = words.alphabet.iter().min().expect("nonempty");
        let base: BigInt = max - min + 1;
        let n = words.n;
        let mut c = Compressor {
            left: ExactMat::from_fn(1, n, |_, i| base.pow(i as u32)),
            right: ExactMat::from_fn(1, n, |_, _| BigInt::one()),
            seed,
            family: family.descriptor(),
            verified: false,
            attempts: 0,
        };
        c.verified = verify_compressor(&c, &family)?.is_clean();
        if !c.verified {
            return Err(Error::RetriesExhausted {
                attempts: 0,
                member: "weight-vector compressor".into(),
                achieved: 0,
                required: 1,
            });
        }
        return Ok(c);
    }
    fit_compressor_with(&family, k, k, derive_seed(seed, "hd/compressor"), cfg)
}

/// Support representation of `HD>=k` on words of length `n`.
#[derive(Clone, Debug)]
pub struct HdSupportRep {
    words: Words,
    k: usize,
    seed: u64,
    compressor: Compressor,
}

impl HdSupportRep {
    pub fn with_compressor(words: Words, k: usize, seed: u64, compressor: Compressor) -> Result<Self> {
        if k == 0 || k > words.n {
            return Err(Error::InvalidInput(format!("threshold k={k} outside 1..={}", words.n)));
        }
        if compressor.source_shape() != (words.n, words.n) || compressor.target_shape() != (k, k) {
            return Err(Error::SizeMismatch(format!(
                "compressor {:?} -> {:?} for n={}, k={k}",
                compressor.source_shape(),
                compressor.target_shape(),
                words.n
            )));
        }
        Ok(HdSupportRep {
            words,
            k,
            seed,
            compressor,
        })
    }

    pub fn words(&self) -> &Words {
        &self.words
    }

    pub fn n(&self) -> usize {
        self.words.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn compressor(&self) -> &Compressor {
        &self.compressor
    }

    pub fn compressor_mut(&mut self) -> &mut Compressor {
        &mut self.compressor
    }

    /// `A(x) = Pi(Diag(embed(x)))`.
    pub fn matrix(&self, x: usize) -> ExactMat {
        self.compressor
            .apply_diagonal(&self.words.embed(x))
            .expect("shape checked at construction")
    }

    pub fn predicate(&self) -> String {
        format!("HD>={}", self.k)
    }

    pub fn to_file(&self) -> HdSupportRepFile {
        HdSupportRepFile {
            kind: "hd_threshold".into(),
            n: self.words.n,
            k: self.k,
            alphabet: self.words.alphabet.iter().map(ToString::to_string).collect(),
            seed: self.seed,
            dim: self.dim(),
            predicate: self.predicate(),
            compressor: self.compressor.clone(),
        }
    }

    pub fn from_file(f: &HdSupportRepFile) -> Result<Self> {
        let alphabet = f
            .alphabet
            .iter()
            .map(|s| {
                s.parse::<BigInt>()
                    .map_err(|_| Error::Json(format!("bad alphabet value `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let rep = HdSupportRep::with_compressor(Words::new(f.n, alphabet)?, f.k, f.seed, f.compressor.clone())?;
        if rep.dim() != f.dim {
            return Err(Error::Json(format!(
                "stored dim {} disagrees with C(2k,k) = {}",
                f.dim,
                rep.dim()
            )));
        }
        Ok(rep)
    }
}

impl SupportOracle for HdSupportRep {
    fn dim(&self) -> usize {
        minor_embed_dim(self.k)
    }

    fn index_count(&self) -> usize {
        self.words.count()
    }

    fn left(&self, x: usize) -> Vec<ExactInt> {
        minor_embed(&self.matrix(x), Side::Left).expect("square")
    }

    fn right(&self, y: usize) -> Vec<ExactInt> {
        minor_embed(&self.matrix(y).neg(), Side::Right).expect("square")
    }

    fn describe(&self) -> String {
        format!(
            "{} on {}-ary words of length {}",
            self.predicate(),
            self.words.alphabet.len(),
            self.words.n
        )
    }

    fn to_json(&self) -> Option<serde_json::Value> {
        serde_json::to_value(self.to_file()).ok()
    }
}

/// On-disk form of [`HdSupportRep`]; embeds the compressor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HdSupportRepFile {
    #[serde(rename = "type")]
    pub kind: String,
    pub n: usize,
    pub k: usize,
    pub alphabet: Vec<String>,
    pub seed: u64,
    pub dim: usize,
    pub predicate: String,
    pub compressor: Compressor,
}

pub fn build_hd_supp(n: usize, k: usize, alphabet: &[ExactInt], seed: u64) -> Result<HdSupportRep> {
    build_hd_supp_with(n, k, alphabet, seed, &FitConfig::default())
}

pub fn build_hd_supp_with(
    n: usize,
    k: usize,
    alphabet: &[ExactInt],
    seed: u64,
    cfg: &FitConfig,
) -> Result<HdSupportRep> {
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!("need 1 <= k <= n, got k={k}, n={n}")));
    }
    let words = Words::new(n, alphabet.to_vec())?;
    let compressor = fit_hd_compressor(&words, k, seed, cfg)?;
    HdSupportRep::with_compressor(words, k, seed, compressor)
}

/// Checks `<u(x), v(y)> != 0 <=> dist(x, y) >= k`.
pub fn verify_support_rep(rep: &HdSupportRep, mode: VerifyMode) -> SupportReport {
    let k = rep.k;
    verify_support(rep, mode, |x, y| rep.words.distance(x, y) >= k)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityCertificate {
    pub size: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Identity pattern of size `2^k` inside `HD>=k`: rows are `w 0^{n-k}`,
/// and the column paired with `w` is `~w 0^{n-k}`, at distance
/// `k - dist(w, w')` from row `w'`. Checked through the representation's dots.
pub fn identity_certificate(rep: &HdSupportRep) -> Result<IdentityCertificate> {
    if rep.words.alphabet.len() != 2 {
        return Err(Error::InvalidInput(
            "identity certificate needs a binary alphabet".into(),
        ));
    }
    let k = rep.k;
    let size = 1usize << k;
    let rows: Vec<usize> = (0..size).collect();
    let mask = size - 1;
    let cols: Vec<usize> = rows.iter().map(|w| !w & mask).collect();
    for (i, &x) in rows.iter().enumerate() {
        let u = rep.left(x);
        for (j, &y) in cols.iter().enumerate() {
            let nonzero = !crate::exact::dot(&u, &rep.right(y)).is_zero();
            if nonzero != (i == j) {
                return Err(Error::PatternViolation { row: i, col: j });
            }
        }
    }
    Ok(IdentityCertificate { size, rows, cols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{det_exact, dot};

    fn ints(v: &[i64]) -> Vec<BigInt> {
        v.iter().map(|&x| BigInt::from(x)).collect()
    }

    #[test]
    fn word_indexing() {
        let w = Words::new(3, ints(&[0, 1, 2])).unwrap();
        assert_eq!(w.count(), 27);
        assert_eq!(w.digits(5), vec![2, 1, 0]);
        assert_eq!(w.index_of(&[2, 1, 0]), 5);
        assert_eq!(w.embed(5), ints(&[2, 1, 0]));
        assert_eq!(w.distance(5, 0), 2);
        let b = Words::binary(4);
        assert_eq!(b.distance(0b1010, 0b0110), 2);
        assert!(Words::new(2, ints(&[1, 1])).is_err());
    }

    #[test]
    fn k1_weight_vector_path() {
        for n in 3..=12 {
            let rep = build_hd_supp(n, 1, &ints(&[0, 1]), 0).unwrap();
            assert_eq!(rep.dim(), 2);
            assert_eq!(rep.compressor().attempts, 0);
            // u(x) = (1, <p, x>), v(y) = (-<p, y>, 1) with p = powers of two
            assert_eq!(rep.left(0b101), ints(&[1, 5]));
            assert_eq!(rep.right(0b11), ints(&[-3, 1]));
        }
        let rep = build_hd_supp(8, 1, &ints(&[0, 1]), 0).unwrap();
        assert!(verify_support_rep(&rep, VerifyMode::Exhaustive).is_clean());
    }

    #[test]
    fn k2_binary_and_ternary() {
        let rep = build_hd_supp(4, 2, &ints(&[0, 1]), 1).unwrap();
        assert_eq!(rep.dim(), 6);
        let r = verify_support_rep(&rep, VerifyMode::Exhaustive);
        assert_eq!(r.pairs_checked, 256);
        assert!(r.is_clean());

        let rep = build_hd_supp(4, 2, &ints(&[0, 1, 2]), 1).unwrap();
        let r = verify_support_rep(&rep, VerifyMode::Exhaustive);
        assert_eq!(r.pairs_checked, 81 * 81);
        assert!(r.is_clean());
    }

    #[test]
    fn dot_equals_direct_determinant() {
        let rep = build_hd_supp(5, 3, &ints(&[0, 1]), 9).unwrap();
        for x in 0..32 {
            for y in 0..32 {
                let direct = det_exact(&rep.matrix(x).checked_sub(&rep.matrix(y)).unwrap()).unwrap();
                let d = rep.dot(x, y);
                assert_eq!(d, direct);
                if x == y {
                    assert!(d.is_zero());
                }
                assert_eq!(d.is_zero(), rep.dot(y, x).is_zero());
            }
        }
    }

    #[test]
    fn zeroed_compressor_kills_all_dots() {
        let mut rep = build_hd_supp(4, 2, &ints(&[0, 1]), 1).unwrap();
        rep.compressor_mut().left = ExactMat::zeros(2, 4);
        let r = verify_support_rep(&rep, VerifyMode::Exhaustive);
        let far = (0..16usize)
            .flat_map(|x| (0..16usize).map(move |y| (x ^ y).count_ones()))
            .filter(|&d| d >= 2)
            .count() as u64;
        assert_eq!(r.violation_count, far);
        assert!(r.violations.iter().all(|v| v.expected));
    }

    #[test]
    fn sampled_verification() {
        let rep = build_hd_supp(10, 3, &ints(&[0, 1]), 4).unwrap();
        let r = verify_support_rep(&rep, VerifyMode::Sample { count: 20_000, seed: 8 });
        assert_eq!(r.pairs_checked, 20_000);
        assert!(r.is_clean());
    }

    #[test]
    fn identity_certificates() {
        let rep = build_hd_supp(3, 1, &ints(&[0, 1]), 0).unwrap();
        let c = identity_certificate(&rep).unwrap();
        assert_eq!(c.size, 2);
        assert_eq!(c.rows, vec![0b000, 0b001]);
        assert_eq!(c.cols, vec![0b001, 0b000]);
        assert_eq!(
            identity_certificate(&build_hd_supp(5, 2, &ints(&[0, 1]), 2).unwrap())
                .unwrap()
                .size,
            4
        );
        assert_eq!(
            identity_certificate(&build_hd_supp(6, 3, &ints(&[0, 1]), 3).unwrap())
                .unwrap()
                .size,
            8
        );

        let mut broken = build_hd_supp(5, 2, &ints(&[0, 1]), 2).unwrap();
        broken.compressor_mut().left = ExactMat::zeros(2, 5);
        assert!(matches!(
            identity_certificate(&broken),
            Err(Error::PatternViolation { row: 0, col: 0 })
        ));
        let ternary = build_hd_supp(3, 1, &ints(&[0, 1, 2]), 0).unwrap();
        assert!(identity_certificate(&ternary).is_err());
    }

    #[test]
    fn file_roundtrip() {
        let rep = build_hd_supp(4, 2, &ints(&[0, 1]), 3).unwrap();
        let json = serde_json::to_string(&rep.to_file()).unwrap();
        let back = HdSupportRep::from_file(&serde_json::from_str(&json).unwrap()).unwrap();
        for x in 0..16 {
            assert_eq!(back.left(x), rep.left(x));
        }
        assert_eq!(rep.to_json().unwrap()["type"], "hd_threshold");
    }

    #[test]
    fn rejects_bad_thresholds() {
        assert!(build_hd_supp(3, 0, &ints(&[0, 1]), 0).is_err());
        assert!(build_hd_supp(3, 4, &ints(&[0, 1]), 0).is_err());
        assert!(dot(&[], &[]).is_zero());
    }
}
