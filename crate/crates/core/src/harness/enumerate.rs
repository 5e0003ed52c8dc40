//! Exact oracles over Rademacher sign patterns: tails of a chaos and of its
//! decoupled version, the least grid-feasible decoupling constant, and the
//! reverse triangle inequality in `L_2`.

use crate::chaos::ChaosPolynomial;
use crate::numeric::factorial;
use crate::{Error, Result, Stream};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest `ambient_n` for [`exact_tail`].
pub const MAX_TAIL_BITS: usize = 20;
/// Largest `d · ambient_n` for [`exact_decoupled_tail`].
pub const MAX_DECOUPLED_BITS: usize = 24;
pub const DECOUPLING_C_CAP: f64 = 1e4;
pub const DEFAULT_DECOUPLING_GRID_POINTS: usize = 32;

fn signs(pattern: u64, n: usize, out: &mut [f64]) {
    for (i, x) in out.iter_mut().enumerate().take(n) {
        *x = if pattern >> i & 1 == 1 { 1.0 } else { -1.0 };
    }
}

fn require_scalar(c: &ChaosPolynomial) -> Result<()> {
    if c.dim() != 1 {
        return Err(Error::Parameter("tail oracles need a scalar chaos".into()));
    }
    Ok(())
}

/// The law of `|Z|` under uniform sign patterns, as sorted absolute values
/// of equal weight.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsoluteLaw {
    sorted: Vec<f64>,
}

impl AbsoluteLaw {
    pub fn from_values(values: Vec<f64>) -> Self {
        let mut sorted: Vec<f64> = values.into_iter().map(f64::abs).collect();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    /// `|evaluate(c, ε)|` over all `2^n` patterns.
    pub fn coupled(c: &ChaosPolynomial) -> Result<Self> {
        require_scalar(c)?;
        let n = c.ambient_n();
        if n > MAX_TAIL_BITS {
            return Err(Error::EnumerationCap { what: format!("2^{n} sign patterns"), limit: MAX_TAIL_BITS });
        }
        let values = (0..1u64 << n)
            .into_par_iter()
            .map_init(
                || vec![0.0; n],
                |x, p| {
                    signs(p, n, x);
                    c.evaluate(x)
                },
            )
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self::from_values(values))
    }

    /// `|evaluate_decoupled(c, ε^(1..d))|` over all `2^{dn}` patterns.
    pub fn decoupled(c: &ChaosPolynomial) -> Result<Self> {
        require_scalar(c)?;
        let (n, d) = (c.ambient_n(), c.degree());
        if d == 0 {
            return Self::coupled(c);
        }
        if d * n > MAX_DECOUPLED_BITS {
            return Err(Error::EnumerationCap {
                what: format!("2^{} decoupled sign patterns", d * n),
                limit: MAX_DECOUPLED_BITS,
            });
        }
        let values = (0..1u64 << (d * n))
            .into_par_iter()
            .map_init(
                || vec![0.0; d * n],
                |x, p| {
                    signs(p, d * n, x);
                    let copies: Vec<&[f64]> = (0..d).map(|j| &x[j * n..(j + 1) * n]).collect();
                    c.evaluate_decoupled(&copies)
                },
            )
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self::from_values(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn prob_gt(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v <= x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }

    pub fn prob_ge(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&v| v < x);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.sorted.last().copied().unwrap_or(0.0)
    }

    fn min_positive(&self) -> Option<f64> {
        self.sorted.iter().copied().find(|&v| v > 0.0)
    }
}

/// Exact `P(|Z| >= threshold)` for Rademacher inputs.
pub fn exact_tail(c: &ChaosPolynomial, threshold: f64) -> Result<f64> {
    Ok(AbsoluteLaw::coupled(c)?.prob_ge(threshold))
}

/// Exact `P(|Z^dec| >= threshold)` over `d` independent Rademacher copies.
pub fn exact_decoupled_tail(c: &ChaosPolynomial, threshold: f64) -> Result<f64> {
    Ok(AbsoluteLaw::decoupled(c)?.prob_ge(threshold))
}

fn rademacher<R: Rng + ?Sized>(rng: &mut R, x: &mut [f64]) {
    for v in x {
        *v = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
}

fn mc_frequency(samples: u64, stream: &Stream, f: impl Fn(&mut rand_chacha::ChaCha8Rng) -> Result<bool> + Sync) -> Result<(f64, f64)> {
    let hits = (0..samples)
        .into_par_iter()
        .map(|i| f(&mut stream.index(i).rng()).map(u64::from))
        .sum::<Result<u64>>()?;
    let p = if samples == 0 { 0.0 } else { hits as f64 / samples as f64 };
    Ok((p, crate::harness::report::binomial_se(p, samples)))
}

/// Monte Carlo `P(|Z| >= threshold)` and its SE.
pub fn mc_tail(c: &ChaosPolynomial, threshold: f64, samples: u64, stream: &Stream) -> Result<(f64, f64)> {
    require_scalar(c)?;
    let n = c.ambient_n();
    mc_frequency(samples, stream, |rng| {
        let mut x = vec![0.0; n];
        rademacher(rng, &mut x);
        Ok(c.evaluate(&x)?.abs() >= threshold)
    })
}

/// Monte Carlo `P(|Z^dec| >= threshold)` and its SE.
pub fn mc_decoupled_tail(c: &ChaosPolynomial, threshold: f64, samples: u64, stream: &Stream) -> Result<(f64, f64)> {
    require_scalar(c)?;
    let (n, d) = (c.ambient_n(), c.degree());
    if d == 0 {
        return mc_tail(c, threshold, samples, stream);
    }
    mc_frequency(samples, stream, |rng| {
        let mut x = vec![0.0; d * n];
        rademacher(rng, &mut x);
        let copies: Vec<&[f64]> = (0..d).map(|j| &x[j * n..(j + 1) * n]).collect();
        Ok(c.evaluate_decoupled(&copies)?.abs() >= threshold)
    })
}

/// Least constants on a grid, each found by bisection over `[1, 10^4]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingConstants {
    /// Least `C` with `P(|Z| > Ct) <= C P(|Z^dec| > t)` on the grid.
    #[serde(with = "crate::harness::report::json_f64")]
    pub coupled_by_decoupled: f64,
    /// Least `C` with `P(|Z^dec| > Ct) <= C P(|Z| > t)` on the grid.
    #[serde(with = "crate::harness::report::json_f64")]
    pub decoupled_by_coupled: f64,
}

impl DecouplingConstants {
    pub fn max(&self) -> f64 {
        self.coupled_by_decoupled.max(self.decoupled_by_coupled)
    }
}

/// Geometric grid from a quarter of the smallest positive value of either
/// law up to the largest value.
pub fn decoupling_grid(a: &AbsoluteLaw, b: &AbsoluteLaw, points: usize) -> Vec<f64> {
    let lo = match (a.min_positive(), b.min_positive()) {
        (Some(x), Some(y)) => x.min(y) / 4.0,
        (Some(x), None) | (None, Some(x)) => x / 4.0,
        (None, None) => return vec![1.0],
    };
    let hi = a.max().max(b.max());
    if points < 2 || hi <= lo {
        return vec![lo];
    }
    let ratio = (hi / lo).powf(1.0 / (points - 1) as f64);
    (0..points).map(|i| lo * ratio.powi(i as i32)).collect()
}

/// Least `C` in `[1, 10^4]` with `P(|A| > Ct) <= C P(|B| > t)` for all grid
/// `t`, or `+∞` if infeasible at the cap. Feasibility is monotone in `C`.
pub fn least_constant(a: &AbsoluteLaw, b: &AbsoluteLaw, t_grid: &[f64]) -> f64 {
    let feasible = |c: f64| t_grid.iter().all(|&t| a.prob_gt(c * t) <= c * b.prob_gt(t) + 1e-15);
    if feasible(1.0) {
        return 1.0;
    }
    if !feasible(DECOUPLING_C_CAP) {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (1.0, DECOUPLING_C_CAP);
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Both decoupling constants of a scalar chaos by exact enumeration. An
/// empty `t_grid` selects [`decoupling_grid`].
pub fn min_decoupling_constant(c: &ChaosPolynomial, t_grid: &[f64]) -> Result<DecouplingConstants> {
    let z = AbsoluteLaw::coupled(c)?;
    let zd = AbsoluteLaw::decoupled(c)?;
    let grid =
        if t_grid.is_empty() { decoupling_grid(&z, &zd, DEFAULT_DECOUPLING_GRID_POINTS) } else { t_grid.to_vec() };
    if let Some(bad) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Parameter(format!("grid points must be positive, got {bad}")));
    }
    Ok(DecouplingConstants {
        coupled_by_decoupled: least_constant(&z, &zd, &grid),
        decoupled_by_coupled: least_constant(&zd, &z, &grid),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReverseTriangle {
    /// `‖Z_j‖_2`, `j = 0..=d`.
    pub part_norms: Vec<f64>,
    /// `Σ_j ‖Z_j‖_2`.
    pub lhs: f64,
    /// `‖Σ_j Z_j‖_2`.
    pub rhs: f64,
    pub ratio: f64,
    /// `sqrt(d+1)`.
    pub bound: f64,
}

/// `L_2` norms of the homogeneous parts for centred independent inputs of
/// common variance, `‖Z_j‖² = j! ‖a_j‖² σ^{2j}` with the full-array norm,
/// and of their sum by orthogonality.
pub fn reverse_triangle_check(c: &ChaosPolynomial, variance: f64) -> Result<ReverseTriangle> {
    require_scalar(c)?;
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Parameter(format!("variance must be positive, got {variance}")));
    }
    let part_norms: Vec<f64> = c
        .parts()
        .iter()
        .enumerate()
        .map(|(j, a)| (factorial(j) * a.l2_norm_sq() * variance.powi(j as i32)).sqrt())
        .collect();
    Ok(triangle_from_norms(part_norms, None))
}

fn triangle_from_norms(part_norms: Vec<f64>, total: Option<f64>) -> ReverseTriangle {
    let lhs: f64 = part_norms.iter().sum();
    let rhs = total.unwrap_or_else(|| part_norms.iter().map(|x| x * x).sum::<f64>().sqrt());
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    let bound = (part_norms.len() as f64).sqrt();
    ReverseTriangle { part_norms, lhs, rhs, ratio, bound }
}

/// Enumerated second moments for Rademacher inputs: the Gram matrix
/// `E Z_j Z_k` of the homogeneous parts and the triangle quantities built
/// from it, without using orthogonality.
#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedNorms {
    pub gram: Vec<Vec<f64>>,
    pub triangle: ReverseTriangle,
}

pub fn enumerated_norms(c: &ChaosPolynomial) -> Result<EnumeratedNorms> {
    require_scalar(c)?;
    let n = c.ambient_n();
    if n > MAX_TAIL_BITS {
        return Err(Error::EnumerationCap { what: format!("2^{n} sign patterns"), limit: MAX_TAIL_BITS });
    }
    let parts = c.parts();
    let m = parts.len();
    // fixed chunks summed in order keep the result independent of scheduling
    const CHUNK: u64 = 1 << 12;
    let total = 1u64 << n;
    let chunks = (0..total.div_ceil(CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut x = vec![0.0; n];
            let mut acc = vec![0.0; m * m];
            for p in chunk * CHUNK..((chunk + 1) * CHUNK).min(total) {
                signs(p, n, &mut x);
                let z = parts.iter().map(|a| a.evaluate(&x)).collect::<Result<Vec<f64>>>()?;
                for (ij, v) in acc.iter_mut().enumerate() {
                    *v += z[ij / m] * z[ij % m];
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut gram_sum = vec![0.0; m * m];
    for acc in &chunks {
        for (s, v) in gram_sum.iter_mut().zip(acc) {
            *s += v;
        }
    }
    let count = (1u64 << n) as f64;
    let gram: Vec<Vec<f64>> = gram_sum.chunks(m).map(|row| row.iter().map(|v| v / count).collect()).collect();
    let part_norms = (0..m).map(|j| gram[j][j].max(0.0).sqrt()).collect();
    let total = gram.iter().flatten().sum::<f64>().max(0.0).sqrt();
    Ok(EnumeratedNorms { gram, triangle: triangle_from_norms(part_norms, Some(total)) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::tensors::SymmetricTetrahedralTensor;
    use proptest::prelude::{any, prop_assert, proptest, ProptestConfig};

    fn gaussian() -> DistributionSpec {
        DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 }
    }

    fn single(degree: usize, n: usize, entries: Vec<(Vec<usize>, f64)>) -> ChaosPolynomial {
        let t = SymmetricTetrahedralTensor::from_entries(degree, n, entries).unwrap();
        let mut parts: Vec<SymmetricTetrahedralTensor> =
            (0..degree).map(|k| SymmetricTetrahedralTensor::zero(k, n)).collect();
        parts.push(t);
        ChaosPolynomial::new(degree, n, parts).unwrap()
    }

    #[test]
    fn tail_examples() {
        let x0 = single(1, 1, vec![(vec![0], 1.0)]);
        assert_eq!(exact_tail(&x0, 0.5).unwrap(), 1.0);
        let prod = single(2, 2, vec![(vec![0, 1], 1.0)]);
        assert_eq!(exact_tail(&prod, 1.0).unwrap(), 1.0);
        assert_eq!(exact_tail(&prod, 2.0).unwrap(), 1.0);
        assert_eq!(exact_tail(&prod, 2.5).unwrap(), 0.0);
        let zero = single(2, 3, vec![]);
        assert_eq!(exact_tail(&zero, 1e-9).unwrap(), 0.0);
        assert_eq!(exact_decoupled_tail(&zero, 1e-9).unwrap(), 0.0);
        // ε0 + ε1 hits 0 half the time
        let sum = single(1, 2, vec![(vec![0], 1.0), (vec![1], 1.0)]);
        assert_eq!(exact_tail(&sum, 1.0).unwrap(), 0.5);
        assert_eq!(exact_tail(&sum, 2.0).unwrap(), 0.5);
    }

    #[test]
    fn enumeration_caps() {
        let big = single(1, 21, vec![(vec![0], 1.0)]);
        assert!(matches!(exact_tail(&big, 1.0), Err(Error::EnumerationCap { .. })));
        let wide = single(2, 13, vec![(vec![0, 1], 1.0)]);
        assert!(matches!(exact_decoupled_tail(&wide, 1.0), Err(Error::EnumerationCap { .. })));
        assert!(exact_decoupled_tail(&single(2, 12, vec![(vec![0, 1], 1.0)]), 1.0).is_ok());
    }

    #[test]
    fn decoupled_product_tail() {
        // Z^dec = 2 ε^(1)_0 ε^(2)_1 up to symmetrisation: (ε1_0 ε2_1 + ε1_1 ε2_0)
        let prod = single(2, 2, vec![(vec![0, 1], 1.0)]);
        assert_eq!(exact_decoupled_tail(&prod, 1.0).unwrap(), 0.5);
        assert_eq!(exact_decoupled_tail(&prod, 2.5).unwrap(), 0.0);
        let c = min_decoupling_constant(&prod, &[]).unwrap();
        assert_eq!(c.decoupled_by_coupled, 1.0);
        // P(|Z| > C t) <= C/2 at t just below 2 needs C >= 2
        assert!((c.coupled_by_decoupled - 2.0).abs() < 1e-6, "{c:?}");
    }

    #[test]
    fn degree_one_constant_is_one() {
        let c = ChaosPolynomial::random(1, 8, 5, &gaussian(), &Stream::root(3)).unwrap();
        assert_eq!(exact_tail(&c, 0.7).unwrap(), exact_decoupled_tail(&c, 0.7).unwrap());
        let k = min_decoupling_constant(&c, &[]).unwrap();
        assert_eq!((k.coupled_by_decoupled, k.decoupled_by_coupled), (1.0, 1.0));
        let zero = ChaosPolynomial::new(2, 4, vec![]).unwrap();
        assert_eq!(min_decoupling_constant(&zero, &[]).unwrap().max(), 1.0);
        assert!(min_decoupling_constant(&c, &[0.0]).is_err());
    }

    #[test]
    fn infeasible_constant_is_infinite() {
        let a = AbsoluteLaw::from_values(vec![1.0]);
        let b = AbsoluteLaw::from_values(vec![0.0]);
        assert_eq!(least_constant(&a, &b, &[1e-6]), f64::INFINITY);
        assert_eq!(least_constant(&b, &a, &[1e-6]), 1.0);
    }

    #[test]
    fn decoupled_tail_matches_monte_carlo() {
        let c = ChaosPolynomial::random(2, 10, 12, &gaussian(), &Stream::root(4)).unwrap();
        let law = AbsoluteLaw::decoupled(&c).unwrap();
        let threshold = law.values()[law.values().len() / 2];
        let exact = law.prob_ge(threshold);
        let (p, _) = mc_decoupled_tail(&c, threshold, 40_000, &Stream::root(5)).unwrap();
        let se = crate::harness::report::binomial_se(exact, 40_000);
        assert!((p - exact).abs() <= 4.0 * se, "{p} vs {exact}");
        let coupled = AbsoluteLaw::coupled(&c).unwrap();
        let t2 = coupled.values()[coupled.values().len() / 3];
        let (q, _) = mc_tail(&c, t2, 40_000, &Stream::root(6)).unwrap();
        let e2 = coupled.prob_ge(t2);
        assert!((q - e2).abs() <= 4.0 * crate::harness::report::binomial_se(e2, 40_000));
    }

    #[test]
    fn reverse_triangle_examples() {
        let one = single(2, 3, vec![(vec![0, 1], 2.0)]);
        let r = reverse_triangle_check(&one, 1.0).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-15);
        // parts of equal norm 1 in degrees 0, 1, 2
        let t0 = SymmetricTetrahedralTensor::constant(2, 1.0);
        let t1 = SymmetricTetrahedralTensor::from_entries(1, 2, [(vec![0], 1.0)]).unwrap();
        let t2 = SymmetricTetrahedralTensor::from_entries(2, 2, [(vec![0, 1], 0.5)]).unwrap();
        let c = ChaosPolynomial::new(2, 2, vec![t0, t1, t2]).unwrap();
        let r = reverse_triangle_check(&c, 1.0).unwrap();
        assert!(r.part_norms.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert!((r.ratio - 3f64.sqrt()).abs() < 1e-12);
        let e = enumerated_norms(&c).unwrap();
        assert!((e.triangle.ratio - 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(reverse_triangle_check(&ChaosPolynomial::new(1, 2, vec![]).unwrap(), 1.0).unwrap().ratio, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn orthogonality_and_norms_by_enumeration(seed in any::<u64>(), d in 1usize..=4, n in 4usize..=10) {
            let c = ChaosPolynomial::random(d, n, 6, &gaussian(), &Stream::root(seed)).unwrap();
            let exact = reverse_triangle_check(&c, 1.0).unwrap();
            let e = enumerated_norms(&c).unwrap();
            let scale = e.gram.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
            for (j, row) in e.gram.iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    if j != k {
                        prop_assert!(v.abs() <= 1e-12 * scale);
                    }
                }
            }
            for (a, b) in exact.part_norms.iter().zip(&e.triangle.part_norms) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
            }
            prop_assert!(exact.ratio <= exact.bound + 1e-12);
            prop_assert!((exact.ratio - e.triangle.ratio).abs() <= 1e-9);
        }

        #[test]
        fn tail_is_monotone(seed in any::<u64>()) {
            let c = ChaosPolynomial::random(2, 6, 5, &gaussian(), &Stream::root(seed)).unwrap();
            let law = AbsoluteLaw::coupled(&c).unwrap();
            let mut last = 1.0;
            for t in [0.0, 0.1, 0.5, 1.0, 2.0, 5.0] {
                let p = law.prob_ge(t);
                prop_assert!(p <= last && law.prob_gt(t) <= p);
                last = p;
            }
        }
    }
}
