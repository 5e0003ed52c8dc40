//! Chaos polynomials `Z = Σ_k Z_k` and their decoupled forms.

use crate::distributions::DistributionSpec;
use crate::numeric::{binomial_f64, binomial_u128, factorial, falling_factorial, for_each_combination, permanent};
use crate::tensors::{SymmetricTetrahedralTensor, TensorRecord};
use crate::{error::check_dim, Error, Result, Stream};
use serde::{Deserialize, Serialize};

/// Sum of homogeneous tetrahedral parts of degrees `0..=degree` over a
/// common index set. `parts[k]` always has degree `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChaosRecord", into = "ChaosRecord")]
pub struct ChaosPolynomial {
    ambient_n: usize,
    dim: usize,
    parts: Vec<SymmetricTetrahedralTensor>,
}

/// Wire form: the degree plus the list of tensor records. Degrees not
/// present in `parts` are zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChaosRecord {
    pub degree: usize,
    pub parts: Vec<TensorRecord>,
}

impl ChaosPolynomial {
    /// Assemble from any subset of homogeneous parts; missing degrees up to
    /// `degree` are filled with zeros.
    pub fn new(degree: usize, ambient_n: usize, parts: Vec<SymmetricTetrahedralTensor>) -> Result<Self> {
        let dim = parts.first().map_or(1, |p| p.dim());
        let mut slots: Vec<Option<SymmetricTetrahedralTensor>> = vec![None; degree + 1];
        for p in parts {
            if p.degree() > degree {
                return Err(Error::Parameter(format!("part of degree {} exceeds chaos degree {degree}", p.degree())));
            }
            if p.ambient_n() != ambient_n {
                return Err(Error::Parameter(format!(
                    "part of degree {} has ambient_n {}, expected {ambient_n}",
                    p.degree(),
                    p.ambient_n()
                )));
            }
            if p.dim() != dim {
                return Err(Error::Parameter("parts disagree on coefficient dimension".into()));
            }
            let k = p.degree();
            if slots[k].replace(p).is_some() {
                return Err(Error::Parameter(format!("two parts of degree {k}")));
            }
        }
        let parts = slots
            .into_iter()
            .enumerate()
            .map(|(k, p)| p.unwrap_or_else(|| SymmetricTetrahedralTensor::zero_vector(k, ambient_n, dim)))
            .collect();
        Ok(Self { ambient_n, dim, parts })
    }

    /// Random scalar chaos with `support` nonzero entries in each degree
    /// `1..=degree` (capped at the number of available tuples) and a random
    /// constant term.
    pub fn random(
        degree: usize,
        ambient_n: usize,
        support: usize,
        coefficient_law: &DistributionSpec,
        stream: &Stream,
    ) -> Result<Self> {
        let parts = (0..=degree)
            .map(|k| {
                let available = binomial_u128(ambient_n as u64, k as u64).unwrap_or(u128::MAX);
                let s = if k == 0 { 1 } else { (support as u128).min(available) as usize };
                SymmetricTetrahedralTensor::random(k, ambient_n, s, coefficient_law, &stream.index(k as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(degree, ambient_n, parts)
    }

    pub fn degree(&self) -> usize {
        self.parts.len() - 1
    }

    pub fn ambient_n(&self) -> usize {
        self.ambient_n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn parts(&self) -> &[SymmetricTetrahedralTensor] {
        &self.parts
    }

    pub fn part(&self, k: usize) -> Option<&SymmetricTetrahedralTensor> {
        self.parts.get(k)
    }

    pub fn is_zero(&self) -> bool {
        self.parts.iter().all(SymmetricTetrahedralTensor::is_zero)
    }

    /// Same chaos with the constant term removed.
    pub fn without_constant(&self) -> Self {
        let mut out = self.clone();
        out.parts[0] = SymmetricTetrahedralTensor::zero_vector(0, self.ambient_n, self.dim);
        out
    }

    /// Same coefficients viewed over a larger index set.
    pub fn with_ambient_n(&self, ambient_n: usize) -> Result<Self> {
        let parts = self.parts.iter().map(|p| p.with_ambient_n(ambient_n)).collect::<Result<_>>()?;
        Ok(Self { ambient_n, dim: self.dim, parts })
    }

    fn require_scalar(&self) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::Usage(format!("chaos has {}-dimensional coefficients; use the vector form", self.dim)));
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.require_scalar()?;
        check_dim(self.ambient_n, x.len())?;
        self.parts.iter().map(|p| p.evaluate(x)).sum()
    }

    /// Per-coordinate evaluation of a vector-valued chaos.
    pub fn evaluate_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.ambient_n, x.len())?;
        let mut out = vec![0.0; self.dim];
        for p in &self.parts {
            for (o, v) in out.iter_mut().zip(p.evaluate_vector(x)?) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Decoupled value from `d = degree` independent copies of the input.
    ///
    /// Degree `k` contributes `C(d,k)^{-1}` times the sum over slot subsets
    /// `r_1 < … < r_k` of the full multilinear form in `x^{(r_1)},…,x^{(r_k)}`.
    /// For a stored increasing tuple the sum over its orderings is the
    /// permanent of `M[b][c] = x^{(r_b)}_{j_c}`. The constant passes through.
    pub fn evaluate_decoupled(&self, copies: &[&[f64]]) -> Result<f64> {
        self.require_scalar()?;
        let d = self.degree();
        if d == 0 {
            return Err(Error::Usage("decoupling needs degree at least 1".into()));
        }
        if copies.len() != d {
            return Err(Error::Usage(format!("expected {d} copies, got {}", copies.len())));
        }
        for c in copies {
            check_dim(self.ambient_n, c.len())?;
        }
        let mut total = self.parts[0].entries().next().map_or(0.0, |(_, v)| v[0]);
        let mut m = Vec::with_capacity(d * d);
        for (k, part) in self.parts.iter().enumerate().skip(1) {
            if part.is_zero() {
                continue;
            }
            let mut acc = 0.0;
            for_each_combination(d, k, |slots| {
                for (tuple, v) in part.entries() {
                    m.clear();
                    for &r in slots {
                        m.extend(tuple.iter().map(|&j| copies[r][j]));
                    }
                    acc += v[0] * permanent(&m, k);
                }
            });
            total += acc / binomial_f64(d, k);
        }
        Ok(total)
    }

    /// Kernel `h_{i_1..i_d}(x_1..x_d)` whose sum over all ordered distinct
    /// `d`-tuples from `0..big_n` reproduces the chaos.
    ///
    /// Degree `k` enters with weight `((d-k)!/d!)·((N-d)!/(N-k)!)` times the
    /// sum over ordered distinct slot tuples, which equals `k!` times the sum
    /// over slot subsets.
    pub fn h_kernel(&self, indices: &[usize], args: &[f64], big_n: usize) -> Result<f64> {
        self.require_scalar()?;
        let d = self.degree();
        check_dim(d, indices.len())?;
        check_dim(d, args.len())?;
        if big_n < d {
            return Err(Error::Parameter(format!("N = {big_n} is smaller than the degree {d}")));
        }
        if big_n < self.ambient_n {
            return Err(Error::Parameter(format!("N = {big_n} is smaller than ambient_n {}", self.ambient_n)));
        }
        let mut seen = indices.to_vec();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Parameter("kernel indices must be pairwise distinct".into()));
        }
        if seen.last().is_some_and(|&m| m >= big_n) {
            return Err(Error::Parameter(format!("kernel index out of range for N = {big_n}")));
        }
        let mut total = 0.0;
        let mut sub = Vec::with_capacity(d);
        for (k, part) in self.parts.iter().enumerate() {
            if part.is_zero() {
                continue;
            }
            let weight = 1.0 / (falling_factorial(d as u64, k) * falling_factorial((big_n - k) as u64, d - k));
            let mut acc = 0.0;
            for_each_combination(d, k, |slots| {
                sub.clear();
                sub.extend(slots.iter().map(|&r| indices[r]));
                // indices beyond ambient_n carry zero coefficients
                if sub.iter().all(|&i| i < self.ambient_n) {
                    let a = part.full_coefficient(&sub).unwrap_or(0.0);
                    if a != 0.0 {
                        acc += a * slots.iter().map(|&r| args[r]).product::<f64>();
                    }
                }
            });
            total += weight * factorial(k) * acc;
        }
        Ok(total)
    }
}

impl TryFrom<ChaosRecord> for ChaosPolynomial {
    type Error = Error;

    fn try_from(r: ChaosRecord) -> Result<Self> {
        let parts = r.parts.into_iter().map(SymmetricTetrahedralTensor::try_from).collect::<Result<Vec<_>>>()?;
        let ambient_n = parts
            .first()
            .map(SymmetricTetrahedralTensor::ambient_n)
            .ok_or_else(|| Error::Parameter("chaos record needs at least one part".into()))?;
        Self::new(r.degree, ambient_n, parts)
    }
}

impl From<ChaosPolynomial> for ChaosRecord {
    fn from(c: ChaosPolynomial) -> Self {
        let degree = c.degree();
        Self { degree, parts: c.parts.into_iter().map(TensorRecord::from).collect() }
    }
}

/// Sum of `h_kernel` over every ordered distinct `d`-tuple from `0..big_n`,
/// fed with the matching coordinates of `x`. Exponential cost; a check only.
pub fn h_kernel_total(c: &ChaosPolynomial, x: &[f64], big_n: usize) -> Result<f64> {
    check_dim(big_n, x.len())?;
    let d = c.degree();
    let mut total = 0.0;
    let mut err = None;
    let mut args = vec![0.0; d];
    crate::numeric::for_each_distinct_tuple(big_n, d, |t| {
        if err.is_some() {
            return;
        }
        for (a, &i) in args.iter_mut().zip(t) {
            *a = x[i];
        }
        match c.h_kernel(t, &args, big_n) {
            Ok(v) => total += v,
            Err(e) => err = Some(e),
        }
    });
    err.map_or(Ok(total), Err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::two_point_atoms;
    use crate::numeric::for_each_distinct_tuple;
    use proptest::prelude::*;

    fn gaussian() -> DistributionSpec {
        DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 }
    }

    /// Z^dec by direct expansion over every index tuple and slot subset.
    fn brute_decoupled(c: &ChaosPolynomial, copies: &[Vec<f64>]) -> f64 {
        let d = c.degree();
        let n = c.ambient_n();
        let mut total = c.part(0).unwrap().entries().next().map_or(0.0, |(_, v)| v[0]);
        for k in 1..=d {
            let part = c.part(k).unwrap();
            let mut s = 0.0;
            for_each_combination(d, k, |slots| {
                let mut tuple = vec![0usize; k];
                for code in 0..n.pow(k as u32) {
                    let mut r = code;
                    for t in tuple.iter_mut() {
                        *t = r % n;
                        r /= n;
                    }
                    let mono: f64 = slots.iter().zip(&tuple).map(|(&r, &i)| copies[r][i]).product();
                    s += part.full_coefficient(&tuple).unwrap() * mono;
                }
            });
            total += s / binomial_f64(d, k);
        }
        total
    }

    #[test]
    fn constant_chaos() {
        let c = ChaosPolynomial::new(0, 3, vec![SymmetricTetrahedralTensor::constant(3, 5.0)]).unwrap();
        assert_eq!(c.evaluate(&[1.0, -2.0, 9.0]).unwrap(), 5.0);
        assert_eq!(c.evaluate(&[0.0; 3]).unwrap(), 5.0);
    }

    #[test]
    fn two_point_chaos_vanishes() {
        let p = 0.2;
        let (hi, _) = two_point_atoms(p);
        assert!((hi - (1.0 - p) / (p * (1.0 - p)).sqrt()).abs() < 1e-15);
        let k = 2;
        let coef = -(p * (1.0 - p)).sqrt() / (1.0 - p);
        let c = ChaosPolynomial::new(
            1,
            4,
            vec![
                SymmetricTetrahedralTensor::constant(4, 1.0),
                SymmetricTetrahedralTensor::from_entries(1, 4, [(vec![k], coef)]).unwrap(),
            ],
        )
        .unwrap();
        let mut x = vec![0.3; 4];
        x[k] = hi;
        assert!(c.evaluate(&x).unwrap().abs() < 1e-14);
        assert!((c.part(1).unwrap().evaluate(&x).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn missing_degrees_are_zero_and_invariants_checked() {
        let q = SymmetricTetrahedralTensor::from_entries(2, 4, [(vec![0, 1], 1.0)]).unwrap();
        let c = ChaosPolynomial::new(3, 4, vec![q.clone()]).unwrap();
        assert_eq!(c.degree(), 3);
        assert!(c.part(1).unwrap().is_zero() && c.part(3).unwrap().is_zero());
        assert_eq!(c.part(3).unwrap().degree(), 3);
        assert!(ChaosPolynomial::new(1, 4, vec![q.clone()]).is_err());
        assert!(ChaosPolynomial::new(2, 5, vec![q.clone()]).is_err());
        assert!(ChaosPolynomial::new(2, 4, vec![q.clone(), q]).is_err());
    }

    #[test]
    fn decoupled_hand_example() {
        let q = SymmetricTetrahedralTensor::from_entries(2, 3, [(vec![0, 1], 1.0)]).unwrap();
        let c = ChaosPolynomial::new(2, 3, vec![q]).unwrap();
        let e0 = [1.0, 0.0, 0.0];
        let e1 = [0.0, 1.0, 0.0];
        assert_eq!(c.evaluate_decoupled(&[&e0, &e1]).unwrap(), 1.0);
        assert!(c.evaluate_decoupled(&[&e0]).is_err());
    }

    #[test]
    fn degree_one_decoupling_is_evaluation() {
        let s = Stream::root(3);
        let c = ChaosPolynomial::random(1, 6, 4, &gaussian(), &s.child("c")).unwrap();
        let x = gaussian().sample(&mut s.child("x").rng(), 6).unwrap();
        assert_eq!(c.evaluate_decoupled(&[&x]).unwrap(), c.evaluate(&x).unwrap());
    }

    #[test]
    fn constant_only_kernel() {
        let (n, d) = (5usize, 2usize);
        let count = (n * (n - 1)) as f64;
        let c = ChaosPolynomial::new(
            d,
            n,
            vec![SymmetricTetrahedralTensor::constant(n, count)],
        )
        .unwrap();
        assert!((c.h_kernel(&[0, 3], &[0.7, -2.0], n).unwrap() - 1.0).abs() < 1e-14);
        assert!((h_kernel_total(&c, &[0.0; 5], n).unwrap() - count).abs() < 1e-12);
    }

    #[test]
    fn kernel_argument_errors() {
        let c = ChaosPolynomial::random(2, 4, 3, &gaussian(), &Stream::root(1)).unwrap();
        assert!(c.h_kernel(&[1, 1], &[0.0, 0.0], 4).is_err());
        assert!(c.h_kernel(&[0, 1], &[0.0, 0.0], 3).is_err());
        assert!(c.h_kernel(&[0, 4], &[0.0, 0.0], 4).is_err());
        assert!(c.h_kernel(&[0], &[0.0], 4).is_err());
    }

    #[test]
    fn vector_chaos_per_coordinate() {
        let p = SymmetricTetrahedralTensor::from_vector_entries(1, 2, 2, [(vec![1], vec![2.0, -1.0])]).unwrap();
        let c = ChaosPolynomial::new(1, 2, vec![p]).unwrap();
        assert_eq!(c.evaluate_vector(&[5.0, 3.0]).unwrap(), vec![6.0, -3.0]);
        assert!(c.evaluate(&[5.0, 3.0]).is_err());
    }

    #[test]
    fn record_round_trip() {
        let c = ChaosPolynomial::random(2, 4, 3, &gaussian(), &Stream::root(9)).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.starts_with(r#"{"degree":2,"parts":[{"degree":0"#));
        let back: ChaosPolynomial = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn evaluate_is_sum_of_parts(seed in any::<u64>()) {
            let s = Stream::root(seed);
            let c = ChaosPolynomial::random(3, 6, 8, &gaussian(), &s.child("c")).unwrap();
            let x = gaussian().sample(&mut s.child("x").rng(), 6).unwrap();
            let parts: f64 = c.parts().iter().map(|p| p.evaluate(&x).unwrap()).sum();
            prop_assert!((c.evaluate(&x).unwrap() - parts).abs() <= 1e-12 * (1.0 + parts.abs()));
        }

        #[test]
        fn recoupling_identity(seed in any::<u64>(), d in 1usize..=4) {
            let s = Stream::root(seed);
            let c = ChaosPolynomial::random(d, 7, 10, &gaussian(), &s.child("c")).unwrap();
            let x = gaussian().sample(&mut s.child("x").rng(), 7).unwrap();
            let copies: Vec<&[f64]> = vec![&x; d];
            let z = c.evaluate(&x).unwrap();
            let zd = c.evaluate_decoupled(&copies).unwrap();
            prop_assert!((z - zd).abs() <= 1e-9 * (1.0 + z.abs()));
        }

        #[test]
        fn decoupled_matches_expansion(seed in any::<u64>(), d in 1usize..=3) {
            let s = Stream::root(seed);
            let n = 5;
            let c = ChaosPolynomial::random(d, n, 6, &gaussian(), &s.child("c")).unwrap();
            let copies: Vec<Vec<f64>> =
                (0..d).map(|r| gaussian().sample(&mut s.child("x").index(r as u64).rng(), n).unwrap()).collect();
            let refs: Vec<&[f64]> = copies.iter().map(Vec::as_slice).collect();
            let fast = c.evaluate_decoupled(&refs).unwrap();
            let slow = brute_decoupled(&c, &copies);
            prop_assert!((fast - slow).abs() <= 1e-10 * (1.0 + slow.abs()));
        }

        #[test]
        fn kernel_decomposition(seed in any::<u64>(), d in 1usize..=3, n in 3usize..=7, extra in 0usize..=1) {
            let s = Stream::root(seed);
            let c = ChaosPolynomial::random(d, n, 5, &gaussian(), &s.child("c")).unwrap();
            // N may exceed ambient_n; coordinates past it carry no coefficients
            let big_n = n + extra;
            let x = gaussian().sample(&mut s.child("x").rng(), big_n).unwrap();
            let total = h_kernel_total(&c, &x, big_n).unwrap();
            let z = c.evaluate(&x[..n]).unwrap();
            prop_assert!((total - z).abs() <= 1e-10 * (1.0 + z.abs()));
        }

        #[test]
        fn kernel_permutation_symmetry(seed in any::<u64>()) {
            let s = Stream::root(seed);
            let c = ChaosPolynomial::random(3, 6, 8, &gaussian(), &s.child("c")).unwrap();
            let args = gaussian().sample(&mut s.child("x").rng(), 3).unwrap();
            let idx = [4usize, 0, 2];
            let base = c.h_kernel(&idx, &args, 8).unwrap();
            let mut perms = Vec::new();
            for_each_distinct_tuple(3, 3, |p| perms.push(p.to_vec()));
            for p in perms {
                let pi: Vec<usize> = p.iter().map(|&r| idx[r]).collect();
                let pa: Vec<f64> = p.iter().map(|&r| args[r]).collect();
                let v = c.h_kernel(&pi, &pa, 8).unwrap();
                prop_assert!((v - base).abs() <= 1e-12 * (1.0 + base.abs()));
            }
        }
    }
}
