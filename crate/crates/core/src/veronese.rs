//! Polynomial vanishing as inner-product vanishing.
//!
//! Three constructions live here: the generic monomial-per-coordinate
//! (Veronese) map, the minor embedding whose pairing computes `det(A + B)`,
//! and a rational unit-distance embedding of the hypercube in the plane.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::{minor, ExactInt, ExactMat, ExactRat};
use crate::seed::substream;
use crate::support::SupportOracle;

/// Index pair `(alpha, beta)` of the determinant-sum expansion, 0-based,
/// with sign `(-1)^{s(alpha) + s(beta)}`. Shifting to 1-based indices adds
/// `2|alpha|` to the exponent, so the parity is the same either way.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct MinorIndex {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub sign: i8,
}

fn subsets(k: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = (0u64..(1u64 << k))
        .map(|mask| (0..k).filter(|i| mask >> i & 1 == 1).collect())
        .collect();
    out.sort();
    out
}

fn complement(set: &[usize], k: usize) -> Vec<usize> {
    (0..k).filter(|i| !set.contains(i)).collect()
}

/// All `(alpha, beta)` with `|alpha| = |beta|`, lexicographic in `(alpha, beta)`.
/// There are `C(2k, k)` of them.
pub fn det_sum_terms(k: usize) -> Vec<MinorIndex> {
    let subs = subsets(k);
    let mut out = Vec::new();
    for alpha in &subs {
        for beta in subs.iter().filter(|b| b.len() == alpha.len()) {
            let s: usize = alpha.iter().sum::<usize>() + beta.iter().sum::<usize>();
            out.push(MinorIndex {
                alpha: alpha.clone(),
                beta: beta.clone(),
                sign: if s.is_multiple_of(2) { 1 } else { -1 },
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Left side: `sign * det(A[alpha, beta])`; right side: `det(B[~alpha, ~beta])`.
/// `<embed(A, Left), embed(B, Right)> = det(A + B)`.
pub fn minor_embed(a: &ExactMat, side: Side) -> Result<Vec<ExactInt>> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let k = a.rows();
    det_sum_terms(k)
        .into_iter()
        .map(|t| match side {
            Side::Left => {
                let m = minor(a, &t.alpha, &t.beta)?;
                Ok(if t.sign < 0 { -m } else { m })
            }
            Side::Right => minor(a, &complement(&t.alpha, k), &complement(&t.beta, k)),
        })
        .collect()
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// `C(2k, k)`, the minor-embedding dimension.
pub fn minor_embed_dim(k: usize) -> usize {
    binomial(2 * k as u64, k as u64) as usize
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub coeff: ExactInt,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
}

/// Polynomial in named left features `a_1..a_m` and right features
/// `b_1..b_m'`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialForm {
    terms: Vec<Monomial>,
    left_features: Vec<String>,
    right_features: Vec<String>,
}

impl MonomialForm {
    /// Merges terms with equal exponent pairs and drops zero coefficients;
    /// first-appearance order is kept.
    pub fn new(left_features: Vec<String>, right_features: Vec<String>, terms: Vec<Monomial>) -> Result<Self> {
        let mut merged: Vec<Monomial> = Vec::new();
        for t in terms {
            if t.left.len() != left_features.len() || t.right.len() != right_features.len() {
                return Err(Error::SizeMismatch(format!(
                    "monomial exponent vectors ({}, {}) for ({}, {}) features",
                    t.left.len(),
                    t.right.len(),
                    left_features.len(),
                    right_features.len()
                )));
            }
            match merged.iter_mut().find(|m| m.left == t.left && m.right == t.right) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|m| !m.coeff.is_zero());
        Ok(Self {
            terms: merged,
            left_features,
            right_features,
        })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    fn is_pure_left(m: &Monomial) -> bool {
        m.right.iter().all(|&e| e == 0)
    }

    fn is_pure_right(m: &Monomial) -> bool {
        !Self::is_pure_left(m) && m.left.iter().all(|&e| e == 0)
    }

    /// Coordinate of each term: terms depending on one side only share a
    /// coordinate with the other pure terms of that side.
    fn layout(&self) -> (Vec<usize>, usize) {
        let mut coord = Vec::with_capacity(self.terms.len());
        let (mut left_slot, mut right_slot) = (None, None);
        let mut next = 0;
        for t in &self.terms {
            let slot = if Self::is_pure_left(t) {
                &mut left_slot
            } else if Self::is_pure_right(t) {
                &mut right_slot
            } else {
                coord.push(next);
                next += 1;
                continue;
            };
            let c = *slot.get_or_insert_with(|| {
                next += 1;
                next - 1
            });
            coord.push(c);
        }
        (coord, next)
    }

    /// Vector dimension; at most the number of monomials.
    pub fn dim(&self) -> usize {
        self.layout().1
    }

    fn values(names: &[String], input: &BTreeMap<String, ExactInt>) -> Result<Vec<ExactInt>> {
        names
            .iter()
            .map(|n| input.get(n).cloned().ok_or_else(|| Error::MissingFeature(n.clone())))
            .collect()
    }

    fn power_product(values: &[ExactInt], exps: &[u32]) -> ExactInt {
        values
            .iter()
            .zip(exps)
            .fold(BigInt::one(), |acc, (v, &e)| acc * v.pow(e))
    }

    pub fn evaluate(&self, left: &BTreeMap<String, ExactInt>, right: &BTreeMap<String, ExactInt>) -> Result<ExactInt> {
        let a = Self::values(&self.left_features, left)?;
        let b = Self::values(&self.right_features, right)?;
        Ok(self
            .terms
            .iter()
            .map(|t| &t.coeff * Self::power_product(&a, &t.left) * Self::power_product(&b, &t.right))
            .sum())
    }
}

/// Splits `form` into `(u, v)` with `<u, v> = form(left, right)`. Each mixed
/// monomial gets its own coordinate with the coefficient on the left.
pub fn poly_to_vectors(
    form: &MonomialForm,
    left: &BTreeMap<String, ExactInt>,
    right: &BTreeMap<String, ExactInt>,
) -> Result<(Vec<ExactInt>, Vec<ExactInt>)> {
    let a = MonomialForm::values(&form.left_features, left)?;
    let b = MonomialForm::values(&form.right_features, right)?;
    let (coord, dim) = form.layout();
    let mut u = vec![BigInt::zero(); dim];
    let mut v = vec![BigInt::zero(); dim];
    for (t, &c) in form.terms.iter().zip(&coord) {
        let lv = &t.coeff * MonomialForm::power_product(&a, &t.left);
        let rv = MonomialForm::power_product(&b, &t.right);
        if MonomialForm::is_pure_left(t) {
            u[c] += lv;
            v[c] = BigInt::one();
        } else if MonomialForm::is_pure_right(t) {
            u[c] = BigInt::one();
            v[c] += &t.coeff * rv;
        } else {
            u[c] = lv;
            v[c] = rv;
        }
    }
    Ok((u, v))
}

/// `sum_i (a_i - b_i)^2 - radius_sq` over `d` coordinates.
pub fn squared_distance_form(d: usize, radius_sq: ExactInt) -> MonomialForm {
    let left: Vec<String> = (1..=d).map(|i| format!("a{i}")).collect();
    let right: Vec<String> = (1..=d).map(|i| format!("b{i}")).collect();
    let unit = |i: usize, e: u32| {
        let mut v = vec![0; d];
        v[i] = e;
        v
    };
    let mut terms = Vec::new();
    for i in 0..d {
        terms.push(Monomial {
            coeff: BigInt::one(),
            left: unit(i, 2),
            right: vec![0; d],
        });
    }
    terms.push(Monomial {
        coeff: -radius_sq,
        left: vec![0; d],
        right: vec![0; d],
    });
    for i in 0..d {
        terms.push(Monomial {
            coeff: BigInt::one(),
            left: vec![0; d],
            right: unit(i, 2),
        });
    }
    for i in 0..d {
        terms.push(Monomial {
            coeff: BigInt::from(-2),
            left: unit(i, 1),
            right: unit(i, 1),
        });
    }
    MonomialForm::new(left, right, terms).expect("well-formed by construction")
}

pub type Point2 = (ExactRat, ExactRat);

/// Hypercube points `p_x = sum_{i : x_i = 1} u_i` for rational unit vectors `u_i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitEmbedding {
    pub n: usize,
    pub units: Vec<Point2>,
    pub points: Vec<Point2>,
    pub attempts: usize,
}

fn squared_norm(p: &Point2) -> ExactRat {
    &p.0 * &p.0 + &p.1 * &p.1
}

fn sub(p: &Point2, q: &Point2) -> Point2 {
    (&p.0 - &q.0, &p.1 - &q.1)
}

/// `((1 - t^2) / (1 + t^2), 2t / (1 + t^2))`.
pub fn pythagorean_unit(t: &ExactRat) -> Point2 {
    let one = ExactRat::one();
    let t2 = t * t;
    let den = &one + &t2;
    ((&one - &t2) / &den, (t * ExactRat::from_integer(2.into())) / den)
}

pub fn embed_with_units(units: Vec<Point2>) -> UnitEmbedding {
    let n = units.len();
    let zero = (ExactRat::zero(), ExactRat::zero());
    let points = (0..1usize << n)
        .map(|x| {
            (0..n)
                .filter(|i| x >> i & 1 == 1)
                .fold(zero.clone(), |acc, i| (&acc.0 + &units[i].0, &acc.1 + &units[i].1))
        })
        .collect();
    UnitEmbedding {
        n,
        units,
        points,
        attempts: 0,
    }
}

/// Pairs `(x, y)` with `x < y` where unit distance and Hamming distance 1 disagree.
pub fn unit_embedding_violations(e: &UnitEmbedding) -> Vec<(usize, usize)> {
    let one = ExactRat::one();
    let mut out = Vec::new();
    for x in 0..e.points.len() {
        for y in x + 1..e.points.len() {
            let unit = squared_norm(&sub(&e.points[x], &e.points[y])) == one;
            let adjacent = (x ^ y).count_ones() == 1;
            if unit != adjacent {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn hypercube_unit_embed(n: usize, seed: u64, max_retries: usize) -> Result<UnitEmbedding> {
    if n == 0 {
        return Err(Error::InvalidInput("hypercube dimension must be >= 1".into()));
    }
    let mut last = (0, 0);
    for attempt in 0..=max_retries {
        let mut rng = substream(seed, &format!("unit-embed/attempt-{attempt}"));
        let units: Vec<Point2> = (0..n)
            .map(|_| {
                let p: i64 = rng.gen_range(1..=1 << 12);
                let q: i64 = rng.gen_range(1..=1 << 12);
                pythagorean_unit(&ExactRat::new(p.into(), q.into()))
            })
            .collect();
        let mut e = embed_with_units(units);
        e.attempts = attempt + 1;
        match unit_embedding_violations(&e).first() {
            None => return Ok(e),
            Some(&v) => last = v,
        }
    }
    Err(Error::RetriesExhausted {
        attempts: max_retries + 1,
        member: format!("pair {last:?}"),
        achieved: 0,
        required: 1,
    })
}

/// Support representation of "not Hamming distance 1" built from a unit
/// embedding: points are scaled by a common denominator `D` and fed through
/// `sum (a_i - b_i)^2 - D^2`.
#[derive(Clone, Debug)]
pub struct UnitDistanceRep {
    pub embedding: UnitEmbedding,
    pub scale: ExactInt,
    form: MonomialForm,
    scaled: Vec<(ExactInt, ExactInt)>,
}

impl UnitDistanceRep {
    pub fn new(embedding: UnitEmbedding) -> Self {
        let scale = embedding
            .units
            .iter()
            .flat_map(|(a, b)| [a.denom().clone(), b.denom().clone()])
            .fold(BigInt::one(), |acc, d| acc.lcm(&d));
        let s = ExactRat::from_integer(scale.clone());
        let scaled = embedding
            .points
            .iter()
            .map(|(a, b)| {
                let a = a * &s;
                let b = b * &s;
                debug_assert!(a.is_integer() && b.is_integer());
                (a.to_integer(), b.to_integer())
            })
            .collect();
        let form = squared_distance_form(2, &scale * &scale);
        UnitDistanceRep {
            embedding,
            scale,
            form,
            scaled,
        }
    }

    pub fn form(&self) -> &MonomialForm {
        &self.form
    }

    fn features(&self, x: usize, prefix: &str) -> BTreeMap<String, ExactInt> {
        let (a, b) = &self.scaled[x];
        BTreeMap::from([(format!("{prefix}1"), a.clone()), (format!("{prefix}2"), b.clone())])
    }

    fn vectors(&self, x: usize, y: usize) -> (Vec<ExactInt>, Vec<ExactInt>) {
        poly_to_vectors(&self.form, &self.features(x, "a"), &self.features(y, "b")).expect("features supplied")
    }
}

impl SupportOracle for UnitDistanceRep {
    fn dim(&self) -> usize {
        self.form.dim()
    }

    fn index_count(&self) -> usize {
        self.scaled.len()
    }

    fn left(&self, x: usize) -> Vec<ExactInt> {
        self.vectors(x, 0).0
    }

    fn right(&self, y: usize) -> Vec<ExactInt> {
        self.vectors(0, y).1
    }

    fn describe(&self) -> String {
        format!("not-HD1 unit-distance rep, n={}", self.embedding.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{det_exact, dot};
    use crate::support::{verify_support, VerifyMode};
    use rand::SeedableRng;

    fn ints(rows: &[&[i64]]) -> ExactMat {
        let v: Vec<Vec<i64>> = rows.iter().map(|r| r.to_vec()).collect();
        ExactMat::from_rows(&v).unwrap()
    }

    #[test]
    fn det_sum_terms_small() {
        let t1 = det_sum_terms(1);
        assert_eq!(
            t1,
            vec![
                MinorIndex {
                    alpha: vec![],
                    beta: vec![],
                    sign: 1
                },
                MinorIndex {
                    alpha: vec![0],
                    beta: vec![0],
                    sign: 1
                },
            ]
        );
        // C(4,2) = sum_j C(2,j)^2 = 1 + 4 + 1
        assert_eq!(det_sum_terms(2).len(), 6);
        let t3 = det_sum_terms(3);
        assert_eq!(t3.len(), 20);
        for t in &t3 {
            // 1-based parity check
            let s: usize = t.alpha.iter().map(|i| i + 1).sum::<usize>() + t.beta.iter().map(|i| i + 1).sum::<usize>();
            assert_eq!(t.sign, if s.is_multiple_of(2) { 1 } else { -1 });
        }
        let mut sorted = t3.clone();
        sorted.sort_by(|a, b| (&a.alpha, &a.beta).cmp(&(&b.alpha, &b.beta)));
        assert_eq!(sorted, t3);
        assert_eq!(det_sum_terms(0).len(), 1);
    }

    #[test]
    fn minor_embed_one_by_one() {
        let a = ints(&[&[5]]);
        let b = ints(&[&[-3]]);
        let u = minor_embed(&a, Side::Left).unwrap();
        let v = minor_embed(&b, Side::Right).unwrap();
        assert_eq!(u, vec![BigInt::from(1), BigInt::from(5)]);
        assert_eq!(v, vec![BigInt::from(-3), BigInt::from(1)]);
        assert_eq!(dot(&u, &v), BigInt::from(2));
    }

    #[test]
    fn minor_embed_zero_matrix() {
        let b = ints(&[&[2, 1], &[7, 3]]);
        let u = minor_embed(&ExactMat::zeros(2, 2), Side::Left).unwrap();
        assert_eq!(u[0], BigInt::one());
        assert!(u[1..].iter().all(Zero::is_zero));
        let v = minor_embed(&b, Side::Right).unwrap();
        assert_eq!(dot(&u, &v), det_exact(&b).unwrap());
        assert!(matches!(
            minor_embed(&ExactMat::zeros(2, 3), Side::Left),
            Err(Error::NonSquare { .. })
        ));
    }

    #[test]
    fn minor_embed_random_two_by_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = ExactMat::from_fn(2, 2, |_, _| BigInt::from(rng.gen_range(-50..=50)));
            let b = ExactMat::from_fn(2, 2, |_, _| BigInt::from(rng.gen_range(-50..=50)));
            let lhs = dot(
                &minor_embed(&a, Side::Left).unwrap(),
                &minor_embed(&b, Side::Right).unwrap(),
            );
            assert_eq!(lhs, det_exact(&a.checked_add(&b).unwrap()).unwrap());
        }
    }

    fn named(pairs: &[(&str, i64)]) -> BTreeMap<String, ExactInt> {
        pairs.iter().map(|(k, v)| (k.to_string(), BigInt::from(*v))).collect()
    }

    /// a1^2 + b1^2 - a1 b1 + 3 a2 b2
    fn worked_example() -> MonomialForm {
        let m = |c: i64, l: [u32; 2], r: [u32; 2]| Monomial {
            coeff: c.into(),
            left: l.to_vec(),
            right: r.to_vec(),
        };
        MonomialForm::new(
            vec!["a1".into(), "a2".into()],
            vec!["b1".into(), "b2".into()],
            vec![
                m(1, [2, 0], [0, 0]),
                m(1, [0, 0], [2, 0]),
                m(-1, [1, 0], [1, 0]),
                m(3, [0, 1], [0, 1]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn worked_example_vectors() {
        let form = worked_example();
        let a = named(&[("a1", 2), ("a2", 5)]);
        let b = named(&[("b1", 7), ("b2", -1)]);
        let (u, v) = poly_to_vectors(&form, &a, &b).unwrap();
        let big = |x: i64| BigInt::from(x);
        // (a1^2, 1, -a1, 3 a2) and (1, b1^2, b1, b2)
        assert_eq!(u, vec![big(4), big(1), big(-2), big(15)]);
        assert_eq!(v, vec![big(1), big(49), big(7), big(-1)]);
        assert_eq!(form.dim(), 4);
        assert_eq!(dot(&u, &v), form.evaluate(&a, &b).unwrap());
        assert!(matches!(
            poly_to_vectors(&form, &named(&[("a1", 1)]), &b),
            Err(Error::MissingFeature(f)) if f == "a2"
        ));
    }

    #[test]
    fn constant_polynomial() {
        let form = MonomialForm::new(
            vec![],
            vec![],
            vec![Monomial {
                coeff: BigInt::one(),
                left: vec![],
                right: vec![],
            }],
        )
        .unwrap();
        let (u, v) = poly_to_vectors(&form, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(u, vec![BigInt::one()]);
        assert_eq!(v, vec![BigInt::one()]);
    }

    #[test]
    fn merges_and_drops_terms() {
        let t = |c: i64| Monomial {
            coeff: c.into(),
            left: vec![1],
            right: vec![1],
        };
        let f = MonomialForm::new(vec!["a".into()], vec!["b".into()], vec![t(2), t(-2)]).unwrap();
        assert!(f.terms().is_empty());
        assert_eq!(f.dim(), 0);
    }

    #[test]
    fn axis_aligned_square() {
        let e = embed_with_units(vec![
            (ExactRat::one(), ExactRat::zero()),
            (ExactRat::zero(), ExactRat::one()),
        ]);
        let d = |x: usize, y: usize| squared_norm(&sub(&e.points[x], &e.points[y]));
        assert_eq!(d(0, 1), ExactRat::one());
        assert_eq!(d(0, 2), ExactRat::one());
        assert_eq!(d(0, 3), ExactRat::from_integer(2.into()));
        assert!(unit_embedding_violations(&e).is_empty());
    }

    #[test]
    fn pythagorean_units_have_norm_one() {
        for (p, q) in [(1, 2), (3, 7), (5, 1), (0, 1)] {
            let u = pythagorean_unit(&ExactRat::new(BigInt::from(p), BigInt::from(q)));
            assert_eq!(squared_norm(&u), ExactRat::one());
        }
    }

    #[test]
    fn seeded_cube_and_support_rep() {
        let e = hypercube_unit_embed(3, 5, 4).unwrap();
        assert_eq!(e.points.len(), 8);
        assert!(unit_embedding_violations(&e).is_empty());
        let rep = UnitDistanceRep::new(e);
        assert_eq!(rep.dim(), 4);
        let r = verify_support(&rep, VerifyMode::Exhaustive, |x, y| (x ^ y).count_ones() != 1);
        assert_eq!(r.pairs_checked, 64);
        assert!(r.is_clean());
        // the dot is the scaled polynomial itself
        for (x, y) in [(0, 1), (2, 5), (7, 7)] {
            let val = rep
                .form()
                .evaluate(&rep.features(x, "a"), &rep.features(y, "b"))
                .unwrap();
            assert_eq!(rep.dot(x, y), val);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pair(k: usize) -> impl Strategy<Value = (ExactMat, ExactMat)> {
            (
                proptest::collection::vec(-20i64..=20, k * k),
                proptest::collection::vec(-20i64..=20, k * k),
            )
                .prop_map(move |(a, b)| {
                    let f = |v: Vec<i64>| ExactMat::new(k, k, v.into_iter().map(BigInt::from).collect()).unwrap();
                    (f(a), f(b))
                })
        }

        proptest! {
            #[test]
            fn det_of_sum_identity((a, b) in (0usize..=4).prop_flat_map(pair)) {
                let u = minor_embed(&a, Side::Left).unwrap();
                let v = minor_embed(&b, Side::Right).unwrap();
                prop_assert_eq!(u.len(), minor_embed_dim(a.rows()));
                prop_assert!(u.len() as u64 <= 4u64.pow(a.rows() as u32));
                prop_assert_eq!(dot(&u, &v), det_exact(&a.checked_add(&b).unwrap()).unwrap());
            }

            #[test]
            fn veronese_is_faithful(a1 in -9i64..=9, a2 in -9i64..=9, b1 in -9i64..=9, b2 in -9i64..=9) {
                let form = worked_example();
                let l = named(&[("a1", a1), ("a2", a2)]);
                let r = named(&[("b1", b1), ("b2", b2)]);
                let (u, v) = poly_to_vectors(&form, &l, &r).unwrap();
                prop_assert!(u.len() <= form.terms().len());
                prop_assert_eq!(dot(&u, &v), form.evaluate(&l, &r).unwrap());
            }
        }
    }
}
