//! Support representations and their verification driver.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::exact::{dot, ExactInt};
use crate::seed::substream;

/// Row/column vector families `(u_x)`, `(v_y)` whose inner products are
/// nonzero exactly on the support of some boolean matrix.
pub trait SupportOracle: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn index_count(&self) -> usize;
    fn left(&self, x: usize) -> Vec<ExactInt>;
    fn right(&self, y: usize) -> Vec<ExactInt>;

    fn dot(&self, x: usize, y: usize) -> ExactInt {
        dot(&self.left(x), &self.right(y))
    }

    fn describe(&self) -> String;

    /// Tagged JSON form, when the oracle kind is serializable.
    fn to_json(&self) -> Option<serde_json::Value> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum VerifyMode {
    Exhaustive,
    Sample { count: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportViolation {
    pub x: usize,
    pub y: usize,
    pub dot: String,
    pub expected: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportReport {
    pub pairs_checked: u64,
    pub violation_count: u64,
    /// First violations in pair order; at most [`VIOLATION_SAMPLE`].
    pub violations: Vec<SupportViolation>,
}

impl SupportReport {
    pub fn is_clean(&self) -> bool {
        self.violation_count == 0
    }
}

pub const VIOLATION_SAMPLE: usize = 64;

/// Precomputed left and right vectors over the full index range.
pub struct VectorCache {
    pub left: Vec<Vec<ExactInt>>,
    pub right: Vec<Vec<ExactInt>>,
}

impl VectorCache {
    pub fn build(oracle: &dyn SupportOracle) -> Self {
        let n = oracle.index_count();
        let left = (0..n).into_par_iter().map(|x| oracle.left(x)).collect();
        let right = (0..n).into_par_iter().map(|y| oracle.right(y)).collect();
        VectorCache { left, right }
    }

    pub fn dot(&self, x: usize, y: usize) -> ExactInt {
        dot(&self.left[x], &self.right[y])
    }
}

/// Deterministic seeded pair sample over `[n] x [n]`.
pub fn sample_pairs(n: usize, count: u64, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = substream(seed, "verify/sample");
    (0..count).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect()
}

/// Checks `dot(x, y) != 0 <=> expected(x, y)` over every ordered pair (or a
/// seeded sample). Results do not depend on the thread count.
pub fn verify_support<F>(oracle: &dyn SupportOracle, mode: VerifyMode, expected: F) -> SupportReport
where
    F: Fn(usize, usize) -> bool + Sync,
{
    let n = oracle.index_count();
    let check = |cache: &VectorCache, x: usize, y: usize| -> Option<SupportViolation> {
        let d = cache.dot(x, y);
        let want = expected(x, y);
        (want == num_traits::Zero::is_zero(&d)).then(|| SupportViolation {
            x,
            y,
            dot: d.to_string(),
            expected: want,
        })
    };
    match mode {
        VerifyMode::Exhaustive => {
            let cache = VectorCache::build(oracle);
            let per_row: Vec<(u64, Vec<SupportViolation>)> = (0..n)
                .into_par_iter()
                .map(|x| {
                    let mut count = 0;
                    let mut first = Vec::new();
                    for y in 0..n {
                        if let Some(v) = check(&cache, x, y) {
                            count += 1;
                            if first.len() < VIOLATION_SAMPLE {
                                first.push(v);
                            }
                        }
                    }
                    (count, first)
                })
                .collect();
            merge(per_row, (n as u64) * (n as u64))
        }
        VerifyMode::Sample { count, seed } => {
            let pairs = sample_pairs(n, count, seed);
            let found: Vec<SupportViolation> = pairs
                .par_iter()
                .filter_map(|&(x, y)| {
                    let d = oracle.dot(x, y);
                    let want = expected(x, y);
                    (want == num_traits::Zero::is_zero(&d)).then(|| SupportViolation {
                        x,
                        y,
                        dot: d.to_string(),
                        expected: want,
                    })
                })
                .collect();
            let violation_count = found.len() as u64;
            SupportReport {
                pairs_checked: count,
                violation_count,
                violations: found.into_iter().take(VIOLATION_SAMPLE).collect(),
            }
        }
    }
}

fn merge(per_row: Vec<(u64, Vec<SupportViolation>)>, pairs: u64) -> SupportReport {
    let mut violation_count = 0;
    let mut violations = Vec::new();
    for (c, vs) in per_row {
        violation_count += c;
        for v in vs {
            if violations.len() < VIOLATION_SAMPLE {
                violations.push(v);
            }
        }
    }
    SupportReport {
        pairs_checked: pairs,
        violation_count,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    /// u_x = (1, x), v_y = (-y, 1): the not-equal matrix.
    #[derive(Debug)]
    struct NotEqual(usize);

    impl SupportOracle for NotEqual {
        fn dim(&self) -> usize {
            2
        }
        fn index_count(&self) -> usize {
            self.0
        }
        fn left(&self, x: usize) -> Vec<ExactInt> {
            vec![BigInt::from(1), BigInt::from(x)]
        }
        fn right(&self, y: usize) -> Vec<ExactInt> {
            vec![-BigInt::from(y), BigInt::from(1)]
        }
        fn describe(&self) -> String {
            "not-equal".into()
        }
    }

    #[test]
    fn exhaustive_and_sampled() {
        let o = NotEqual(20);
        let r = verify_support(&o, VerifyMode::Exhaustive, |x, y| x != y);
        assert_eq!(r.pairs_checked, 400);
        assert!(r.is_clean());
        let bad = verify_support(&o, VerifyMode::Exhaustive, |_, _| true);
        assert_eq!(bad.violation_count, 20);
        assert_eq!(bad.violations[0].x, 0);
        assert_eq!(bad.violations[0].y, 0);
        let s = verify_support(&o, VerifyMode::Sample { count: 500, seed: 3 }, |x, y| x != y);
        assert_eq!(s.pairs_checked, 500);
        assert!(s.is_clean());
        assert_eq!(sample_pairs(20, 10, 3), sample_pairs(20, 10, 3));
    }
}
