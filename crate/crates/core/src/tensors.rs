//! Sparse symmetric coefficient arrays with vanishing diagonals.
//!
//! Only strictly increasing index tuples are stored. Symmetry and the
//! vanishing diagonal then hold by construction, and every full-array sum
//! is `k!` times the corresponding sum over stored entries.

use crate::distributions::DistributionSpec;
use crate::numeric::{binomial_u128, factorial, unrank_combination, CompensatedSum};
use crate::{error::check_dim, Error, Result, Stream};
use rand::seq::index;
use serde::{Deserialize, Serialize};

/// Summation strategy for evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Summation {
    #[default]
    Naive,
    Compensated,
}

/// Degree-`k` symmetric tetrahedral tensor over indices `0..ambient_n`,
/// with coefficients in `R^dim` (`dim == 1` for scalars).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRecord", into = "TensorRecord")]
pub struct SymmetricTetrahedralTensor {
    degree: usize,
    ambient_n: usize,
    dim: usize,
    /// Flattened increasing tuples, `degree` indices per entry, sorted.
    indices: Vec<usize>,
    /// Flattened values, `dim` per entry.
    values: Vec<f64>,
}

impl SymmetricTetrahedralTensor {
    pub fn zero(degree: usize, ambient_n: usize) -> Self {
        Self::zero_vector(degree, ambient_n, 1)
    }

    pub fn zero_vector(degree: usize, ambient_n: usize, dim: usize) -> Self {
        Self { degree, ambient_n, dim, indices: Vec::new(), values: Vec::new() }
    }

    /// Degree-0 tensor holding `a_∅`.
    pub fn constant(ambient_n: usize, value: f64) -> Self {
        Self { degree: 0, ambient_n, dim: 1, indices: Vec::new(), values: vec![value] }
    }

    /// Scalar tensor from `(tuple, value)` pairs. Tuples may be given in any
    /// order; repeated indices within a tuple or duplicate tuples are rejected.
    pub fn from_entries<I>(degree: usize, ambient_n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        Self::from_vector_entries(degree, ambient_n, 1, entries.into_iter().map(|(t, v)| (t, vec![v])))
    }

    pub fn from_vector_entries<I>(degree: usize, ambient_n: usize, dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(Error::Parameter("coefficient dimension must be positive".into()));
        }
        let mut list: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();
        for (mut tuple, value) in entries {
            if tuple.len() != degree {
                return Err(Error::Usage(format!("tuple {tuple:?} has length {} but degree is {degree}", tuple.len())));
            }
            check_dim(dim, value.len())?;
            if value.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("non-finite coefficient at {tuple:?}")));
            }
            tuple.sort_unstable();
            if tuple.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Parameter(format!("diagonal entry {tuple:?}: coefficients must vanish on diagonals")));
            }
            if let Some(&m) = tuple.last() {
                if m >= ambient_n {
                    return Err(Error::Parameter(format!("index {m} out of range 0..{ambient_n}")));
                }
            }
            list.push((tuple, value));
        }
        list.sort_by(|a, b| a.0.cmp(&b.0));
        if list.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Parameter("duplicate tuple after canonical ordering".into()));
        }
        if degree == 0 && list.len() > 1 {
            return Err(Error::Parameter("degree-0 tensor holds a single value".into()));
        }
        let mut indices = Vec::with_capacity(list.len() * degree);
        let mut values = Vec::with_capacity(list.len() * dim);
        for (t, v) in list {
            indices.extend(t);
            values.extend(v);
        }
        Ok(Self { degree, ambient_n, dim, indices, values })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ambient_n(&self) -> usize {
        self.ambient_n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Stored `(increasing tuple, value)` entries.
    pub fn entries(&self) -> impl Iterator<Item = (&[usize], &[f64])> + '_ {
        (0..self.nnz()).map(move |e| self.entry(e))
    }

    fn entry(&self, e: usize) -> (&[usize], &[f64]) {
        (&self.indices[e * self.degree..(e + 1) * self.degree], &self.values[e * self.dim..(e + 1) * self.dim])
    }

    fn lookup(&self, sorted: &[usize]) -> Option<&[f64]> {
        if self.degree == 0 {
            return (self.nnz() == 1).then(|| &self.values[..self.dim]);
        }
        let n = self.nnz();
        let (mut lo, mut hi) = (0, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.entry(mid).0.cmp(sorted) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(self.entry(mid).1),
            }
        }
        None
    }

    /// Coefficient of the full symmetric array at an arbitrary tuple.
    pub fn full_coefficient_vector(&self, tuple: &[usize]) -> Result<Vec<f64>> {
        if tuple.len() != self.degree {
            return Err(Error::Usage(format!("expected {} indices, got {}", self.degree, tuple.len())));
        }
        let mut sorted = tuple.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Ok(vec![0.0; self.dim]);
        }
        Ok(self.lookup(&sorted).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; self.dim]))
    }

    pub fn full_coefficient(&self, tuple: &[usize]) -> Result<f64> {
        self.require_scalar()?;
        Ok(self.full_coefficient_vector(tuple)?[0])
    }

    fn require_scalar(&self) -> Result<()> {
        if self.dim == 1 {
            Ok(())
        } else {
            Err(Error::Usage(format!("scalar operation on a tensor with {}-dimensional coefficients", self.dim)))
        }
    }

    /// `sum_{i_1..i_k} a_{i_1..i_k} x_{i_1} ... x_{i_k}` over all tuples.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.require_scalar()?;
        check_dim(self.ambient_n, x.len())?;
        let k = self.degree;
        let mut acc = 0.0;
        for (e, v) in self.values.iter().enumerate() {
            let mono: f64 = self.indices[e * k..(e + 1) * k].iter().map(|&i| x[i]).product();
            acc += v * mono;
        }
        Ok(factorial(k) * acc)
    }

    pub fn evaluate_with(&self, x: &[f64], mode: Summation) -> Result<f64> {
        self.require_scalar()?;
        Ok(self.evaluate_vector_with(x, mode)?[0])
    }

    pub fn evaluate_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluate_vector_with(x, Summation::Naive)
    }

    pub fn evaluate_vector_with(&self, x: &[f64], mode: Summation) -> Result<Vec<f64>> {
        check_dim(self.ambient_n, x.len())?;
        let mult = factorial(self.degree);
        let mut out = vec![0.0; self.dim];
        match mode {
            Summation::Naive => {
                for (tuple, value) in self.entries() {
                    let mono: f64 = tuple.iter().map(|&i| x[i]).product();
                    for (o, v) in out.iter_mut().zip(value) {
                        *o += v * mono;
                    }
                }
            }
            Summation::Compensated => {
                let mut acc = vec![CompensatedSum::new(); self.dim];
                for (tuple, value) in self.entries() {
                    let mono: f64 = tuple.iter().map(|&i| x[i]).product();
                    for (a, v) in acc.iter_mut().zip(value) {
                        a.add(v * mono);
                    }
                }
                for (o, a) in out.iter_mut().zip(&acc) {
                    *o = a.value();
                }
            }
        }
        for o in &mut out {
            *o *= mult;
        }
        Ok(out)
    }

    /// Sum of squared coefficients over all tuples (all components).
    pub fn l2_norm_sq(&self) -> f64 {
        factorial(self.degree) * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    /// Same support with coefficients multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= c;
        }
        out
    }

    /// Reindex into a larger ambient space.
    pub fn with_ambient_n(&self, ambient_n: usize) -> Result<Self> {
        if self.indices.iter().any(|&i| i >= ambient_n) {
            return Err(Error::Parameter(format!("support does not fit in 0..{ambient_n}")));
        }
        let mut out = self.clone();
        out.ambient_n = ambient_n;
        Ok(out)
    }

    /// `support_size` distinct increasing tuples drawn uniformly without
    /// replacement, with i.i.d. values from `value_law`.
    pub fn random(
        degree: usize,
        ambient_n: usize,
        support_size: usize,
        value_law: &DistributionSpec,
        stream: &Stream,
    ) -> Result<Self> {
        let law = value_law.law()?;
        let total = binomial_u128(ambient_n as u64, degree as u64)
            .ok_or_else(|| Error::Parameter("C(ambient_n, degree) overflows".into()))?;
        if support_size as u128 > total {
            return Err(Error::Parameter(format!(
                "support size {support_size} exceeds C({ambient_n}, {degree}) = {total}"
            )));
        }
        let mut rng = stream.rng();
        let ranks: Vec<u128> = if total <= usize::MAX as u128 {
            index::sample(&mut rng, total as usize, support_size).into_iter().map(|r| r as u128).collect()
        } else {
            return Err(Error::Parameter("tuple space too large to sample".into()));
        };
        let entries: Vec<(Vec<usize>, f64)> = ranks
            .into_iter()
            .map(|r| unrank_combination(r, degree, ambient_n))
            .map(|t| (t, law.sample_one(&mut rng)))
            .collect();
        Self::from_entries(degree, ambient_n, entries)
    }
}

/// Wire form: `{degree, ambient_n, entries: [[[i...], value], ...]}`.
/// Vector coefficients are written as arrays and carry `dim`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TensorRecord {
    pub degree: usize,
    pub ambient_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub entries: Vec<(Vec<usize>, Coefficient)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl TryFrom<TensorRecord> for SymmetricTetrahedralTensor {
    type Error = Error;

    fn try_from(r: TensorRecord) -> Result<Self> {
        let dim = r.dim.unwrap_or(1);
        let entries = r.entries.into_iter().map(|(t, c)| {
            let v = match c {
                Coefficient::Scalar(x) => vec![x],
                Coefficient::Vector(v) => v,
            };
            (t, v)
        });
        Self::from_vector_entries(r.degree, r.ambient_n, dim, entries)
    }
}

impl From<SymmetricTetrahedralTensor> for TensorRecord {
    fn from(t: SymmetricTetrahedralTensor) -> Self {
        let scalar = t.dim == 1;
        let entries = t
            .entries()
            .map(|(tuple, v)| {
                let c = if scalar { Coefficient::Scalar(v[0]) } else { Coefficient::Vector(v.to_vec()) };
                (tuple.to_vec(), c)
            })
            .collect();
        TensorRecord { degree: t.degree, ambient_n: t.ambient_n, dim: (!scalar).then_some(t.dim), entries }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Brute force over all `n^k` tuples through `full_coefficient`.
    fn brute_evaluate(t: &SymmetricTetrahedralTensor, x: &[f64]) -> f64 {
        let (n, k) = (t.ambient_n(), t.degree());
        let mut total = 0.0;
        let mut tuple = vec![0usize; k];
        for code in 0..n.pow(k as u32) {
            let mut c = code;
            for slot in tuple.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            let mono: f64 = tuple.iter().map(|&i| x[i]).product();
            total += t.full_coefficient(&tuple).unwrap() * mono;
        }
        total
    }

    fn brute_norm(t: &SymmetricTetrahedralTensor) -> f64 {
        let (n, k) = (t.ambient_n(), t.degree());
        let mut tuple = vec![0usize; k];
        let mut total = 0.0;
        for code in 0..n.pow(k as u32) {
            let mut c = code;
            for slot in tuple.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            total += t.full_coefficient(&tuple).unwrap().powi(2);
        }
        total
    }

    fn gaussian() -> DistributionSpec {
        DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 }
    }

    #[test]
    fn full_coefficient_examples() {
        let t = SymmetricTetrahedralTensor::from_entries(2, 6, [(vec![5, 2], 1.5), (vec![0, 3], -2.0)]).unwrap();
        assert_eq!(t.full_coefficient(&[3, 3]).unwrap(), 0.0);
        assert_eq!(t.full_coefficient(&[5, 2]).unwrap(), t.full_coefficient(&[2, 5]).unwrap());
        assert_eq!(t.full_coefficient(&[2, 5]).unwrap(), 1.5);
        assert_eq!(t.full_coefficient(&[1, 4]).unwrap(), 0.0);
        assert!(matches!(t.full_coefficient(&[1]), Err(Error::Usage(_))));
        let c = SymmetricTetrahedralTensor::constant(4, 7.0);
        assert_eq!(c.full_coefficient(&[]).unwrap(), 7.0);
    }

    #[test]
    fn evaluate_examples() {
        let lin = SymmetricTetrahedralTensor::from_entries(1, 4, [(vec![0], 2.0), (vec![3], -1.0)]).unwrap();
        assert_eq!(lin.evaluate(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 2.0);
        let quad = SymmetricTetrahedralTensor::from_entries(2, 4, [(vec![0, 1], 1.0)]).unwrap();
        assert_eq!(quad.evaluate(&[1.0, 1.0, 0.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(quad.evaluate(&[1.0]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn l2_norm_examples() {
        assert_eq!(SymmetricTetrahedralTensor::zero(3, 5).l2_norm_sq(), 0.0);
        let t = SymmetricTetrahedralTensor::from_entries(2, 3, [(vec![0, 2], 3.0)]).unwrap();
        assert_eq!(t.l2_norm_sq(), 18.0);
    }

    #[test]
    fn diagonal_and_duplicates_rejected() {
        assert!(SymmetricTetrahedralTensor::from_entries(2, 3, [(vec![1, 1], 1.0)]).is_err());
        assert!(SymmetricTetrahedralTensor::from_entries(2, 3, [(vec![0, 1], 1.0), (vec![1, 0], 2.0)]).is_err());
        assert!(SymmetricTetrahedralTensor::from_entries(2, 3, [(vec![0, 3], 1.0)]).is_err());
    }

    #[test]
    fn random_tensor_examples() {
        let s = Stream::root(11).child("t");
        let t = SymmetricTetrahedralTensor::random(2, 5, 10, &DistributionSpec::Rademacher, &s).unwrap();
        assert_eq!(t.nnz(), 10);
        assert!(t.entries().all(|(tup, _)| tup[0] < tup[1]));
        let c = SymmetricTetrahedralTensor::random(0, 5, 1, &gaussian(), &s).unwrap();
        assert_eq!((c.degree(), c.nnz()), (0, 1));
        let again = SymmetricTetrahedralTensor::random(2, 5, 10, &DistributionSpec::Rademacher, &s).unwrap();
        assert_eq!(t, again);
        assert!(SymmetricTetrahedralTensor::random(2, 5, 11, &gaussian(), &s).is_err());
    }

    #[test]
    fn compensated_mode_agrees() {
        let s = Stream::root(5);
        let t = SymmetricTetrahedralTensor::random(3, 9, 40, &gaussian(), &s.child("t")).unwrap();
        let x = gaussian().sample(&mut s.child("x").rng(), 9).unwrap();
        let a = t.evaluate(&x).unwrap();
        let b = t.evaluate_with(&x, Summation::Compensated).unwrap();
        assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn vector_coefficients_evaluate_per_component() {
        let t = SymmetricTetrahedralTensor::from_vector_entries(
            2,
            3,
            2,
            [(vec![0, 1], vec![1.0, -1.0]), (vec![1, 2], vec![0.5, 2.0])],
        )
        .unwrap();
        let v = t.evaluate_vector(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v, vec![2.0 * (2.0 + 3.0), 2.0 * (-2.0 + 12.0)]);
        assert!(t.evaluate(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn record_round_trip() {
        let t = SymmetricTetrahedralTensor::from_entries(2, 4, [(vec![0, 3], 1.25), (vec![1, 2], -3.0)]).unwrap();
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"{"degree":2,"ambient_n":4,"entries":[[[0,3],1.25],[[1,2],-3.0]]}"#);
        let back: SymmetricTetrahedralTensor = serde_json::from_str(&json).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<SymmetricTetrahedralTensor>(r#"{"degree":2,"ambient_n":4,"entries":[[[1,1],1.0]]}"#).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn matches_brute_force(seed in any::<u64>(), n in 1usize..=8, k in 0usize..=4, frac in 0.0f64..1.0) {
            prop_assume!(k <= n);
            let total = binomial_u128(n as u64, k as u64).unwrap() as usize;
            let support = ((total as f64 * frac).ceil() as usize).min(total);
            let s = Stream::root(seed);
            let t = SymmetricTetrahedralTensor::random(k, n, support, &gaussian(), &s.child("t")).unwrap();
            let x = gaussian().sample(&mut s.child("x").rng(), n).unwrap();
            let fast = t.evaluate(&x).unwrap();
            let slow = brute_evaluate(&t, &x);
            prop_assert!((fast - slow).abs() <= 1e-10 * (1.0 + slow.abs()));
            prop_assert!((t.l2_norm_sq() - brute_norm(&t)).abs() <= 1e-10 * (1.0 + brute_norm(&t)));
        }

        #[test]
        fn affine_in_each_coordinate(seed in any::<u64>(), j in 0usize..6) {
            let s = Stream::root(seed);
            let t = SymmetricTetrahedralTensor::random(3, 6, 12, &gaussian(), &s.child("t")).unwrap();
            let mut x = gaussian().sample(&mut s.child("x").rng(), 6).unwrap();
            let mut at = |v: f64| { x[j] = v; t.evaluate(&x).unwrap() };
            let (f0, f1, f3) = (at(0.0), at(1.0), at(3.0));
            // linear in x_j: f(3) - f(0) = 3 (f(1) - f(0)), and no x_j^2 terms
            prop_assert!((f3 - f0 - 3.0 * (f1 - f0)).abs() <= 1e-9 * (1.0 + f3.abs() + f0.abs()));
        }

        #[test]
        fn permutation_invariance(seed in any::<u64>()) {
            let s = Stream::root(seed);
            let n = 7;
            let t = SymmetricTetrahedralTensor::random(3, n, 15, &gaussian(), &s.child("t")).unwrap();
            let x = gaussian().sample(&mut s.child("x").rng(), n).unwrap();
            let perm: Vec<usize> = index::sample(&mut s.child("p").rng(), n, n).into_vec();
            let relabeled = SymmetricTetrahedralTensor::from_entries(
                3, n, t.entries().map(|(tup, v)| (tup.iter().map(|&i| perm[i]).collect(), v[0])),
            ).unwrap();
            let mut y = vec![0.0; n];
            for i in 0..n { y[perm[i]] = x[i]; }
            let a = t.evaluate(&x).unwrap();
            let b = relabeled.evaluate(&y).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }
}
