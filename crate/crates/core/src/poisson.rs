//! Poisson processes on finite cell spaces, multiple Wiener–Itô integrals
//! of step kernels, the first-chaos example on `[0,1]`, trimming and the
//! Mehler operator.
//!
//! Cells are laid end to end on a line, cell `i` occupying an interval of
//! length `λ_i`, so a process with points is a unit-intensity process on
//! `[0, Σλ)`. The single cell of mass one is the unit interval.

use crate::harness::report::{binomial_se, ExperimentReport, Metric};
use crate::numeric::{factorial, falling_factorial, for_each_combination};
use crate::tensors::SymmetricTetrahedralTensor;
use crate::{Error, Result, Stream};
use rand::Rng;
use rand_distr::{Distribution as _, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Largest degree accepted by [`wiener_ito_explicit`].
pub const EXPLICIT_MAX_DEGREE: usize = 4;
pub const DEFAULT_OUTER_PATHS: u64 = 64;
pub const DEFAULT_INNER_PATHS: u64 = 4096;

/// Disjoint cells with finite positive masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CellSpace {
    measures: Vec<f64>,
    offsets: Vec<f64>,
}

impl CellSpace {
    pub fn new(measures: Vec<f64>) -> Result<Self> {
        if measures.is_empty() {
            return Err(Error::Parameter("a cell space needs at least one cell".into()));
        }
        if let Some(bad) = measures.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Parameter(format!("cell masses must be finite and positive, got {bad}")));
        }
        let offsets = measures
            .iter()
            .scan(0.0, |acc, &m| {
                let start = *acc;
                *acc += m;
                Some(start)
            })
            .collect();
        Ok(Self { measures, offsets })
    }

    /// `[0,1)` with Lebesgue intensity.
    pub fn unit_interval() -> Self {
        Self::new(vec![1.0]).expect("valid")
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    pub fn measures(&self) -> &[f64] {
        &self.measures
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.measures.iter().map(|m| m * c).collect())
    }
}

impl TryFrom<Vec<f64>> for CellSpace {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<CellSpace> for Vec<f64> {
    fn from(s: CellSpace) -> Self {
        s.measures
    }
}

/// Symmetric step kernel `Σ a_{i_1..i_k} 1_{A_{i_1} × … × A_{i_k}}` with
/// vanishing diagonal, stored as a tetrahedral tensor over cell indices.
#[derive(Clone, Debug, PartialEq)]
pub struct StepKernel {
    tensor: SymmetricTetrahedralTensor,
    space: Arc<CellSpace>,
}

/// Wire form of a [`StepKernel`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepKernelRecord {
    pub space: CellSpace,
    pub tensor: SymmetricTetrahedralTensor,
}

impl StepKernel {
    pub fn new(tensor: SymmetricTetrahedralTensor, space: Arc<CellSpace>) -> Result<Self> {
        if tensor.ambient_n() != space.len() {
            return Err(Error::Dimension { expected: space.len(), got: tensor.ambient_n() });
        }
        if tensor.dim() != 1 {
            return Err(Error::Parameter("step kernels are scalar-valued".into()));
        }
        Ok(Self { tensor, space })
    }

    pub fn random(
        degree: usize,
        space: Arc<CellSpace>,
        support: usize,
        value_law: &crate::distributions::DistributionSpec,
        stream: &Stream,
    ) -> Result<Self> {
        let tensor = SymmetricTetrahedralTensor::random(degree, space.len(), support, value_law, stream)?;
        Self::new(tensor, space)
    }

    pub fn degree(&self) -> usize {
        self.tensor.degree()
    }

    pub fn tensor(&self) -> &SymmetricTetrahedralTensor {
        &self.tensor
    }

    pub fn space(&self) -> &Arc<CellSpace> {
        &self.space
    }

    pub fn to_record(&self) -> StepKernelRecord {
        StepKernelRecord { space: (*self.space).clone(), tensor: self.tensor.clone() }
    }

    pub fn from_record(r: StepKernelRecord) -> Result<Self> {
        Self::new(r.tensor, Arc::new(r.space))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub cell: usize,
    /// Coordinate on the line `[0, Σλ)`.
    pub position: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PoissonSample {
    pub counts: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Point>>,
}

impl PoissonSample {
    pub fn empty(cells: usize, with_points: bool) -> Self {
        Self { counts: vec![0; cells], points: with_points.then(Vec::new) }
    }

    /// Sum of two samples on the same space. Points are kept only when both
    /// carry them.
    pub fn superpose(&self, other: &PoissonSample) -> Result<PoissonSample> {
        if self.counts.len() != other.counts.len() {
            return Err(Error::Dimension { expected: self.counts.len(), got: other.counts.len() });
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        let points = match (&self.points, &other.points) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(PoissonSample { counts, points })
    }
}

fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Independent `Poisson(λ_i)` counts.
pub fn sample_process(space: &CellSpace, stream: &Stream) -> PoissonSample {
    sample_counts(space, &mut stream.rng())
}

pub fn sample_counts<R: Rng + ?Sized>(space: &CellSpace, rng: &mut R) -> PoissonSample {
    PoissonSample { counts: space.measures.iter().map(|&m| poisson_count(rng, m)).collect(), points: None }
}

/// Counts plus uniformly placed points inside each cell's interval.
pub fn sample_process_with_points(space: &CellSpace, stream: &Stream) -> PoissonSample {
    sample_points(space, &mut stream.rng())
}

pub fn sample_points<R: Rng + ?Sized>(space: &CellSpace, rng: &mut R) -> PoissonSample {
    let mut counts = Vec::with_capacity(space.len());
    let mut points = Vec::new();
    for (cell, (&m, &start)) in space.measures.iter().zip(&space.offsets).enumerate() {
        let c = poisson_count(rng, m);
        counts.push(c);
        points.extend((0..c).map(|_| Point { cell, position: start + m * rng.random::<f64>() }));
    }
    PoissonSample { counts, points: Some(points) }
}

fn check_sample(kernel: &StepKernel, sample: &PoissonSample) -> Result<()> {
    if sample.counts.len() != kernel.space.len() {
        return Err(Error::Dimension { expected: kernel.space.len(), got: sample.counts.len() });
    }
    Ok(())
}

/// `I_k(f) = k! Σ_{i_1<…<i_k} a_i Π_j (N_{i_j} - λ_{i_j})`.
pub fn multiple_integral(kernel: &StepKernel, sample: &PoissonSample) -> Result<f64> {
    check_sample(kernel, sample)?;
    let centred: Vec<f64> =
        sample.counts.iter().zip(kernel.space.measures()).map(|(&n, &l)| n as f64 - l).collect();
    kernel.tensor.evaluate(&centred)
}

/// The alternating sum over `J ⊂ [k]` of `∫ f dη^{(|J|)} dλ^{k-|J|}`, with
/// the factorial-measure integrals evaluated per cell as falling factorials
/// `(N_c)_{m_c}` of the multiplicities `m_c` of cell `c` among the slots in
/// `J`. Sums over all `M^k` ordered cell tuples of the full array.
pub fn wiener_ito_explicit(kernel: &StepKernel, sample: &PoissonSample) -> Result<f64> {
    check_sample(kernel, sample)?;
    let k = kernel.degree();
    if k > EXPLICIT_MAX_DEGREE {
        return Err(Error::EnumerationCap { what: "explicit Wiener–Itô degree".into(), limit: EXPLICIT_MAX_DEGREE });
    }
    let m = kernel.space.len();
    let lambda = kernel.space.measures();
    let mut tuple = vec![0usize; k];
    let mut mult = vec![0usize; m];
    let mut total = 0.0;
    for code in 0..m.pow(k as u32) {
        let mut c = code;
        for slot in tuple.iter_mut() {
            *slot = c % m;
            c /= m;
        }
        let a = kernel.tensor.full_coefficient(&tuple)?;
        if a == 0.0 {
            continue;
        }
        for size in 0..=k {
            let sign = if (k - size).is_multiple_of(2) { 1.0 } else { -1.0 };
            for_each_combination(k, size, |j| {
                mult.iter_mut().for_each(|x| *x = 0);
                let mut in_j = [false; EXPLICIT_MAX_DEGREE];
                for &s in j {
                    mult[tuple[s]] += 1;
                    in_j[s] = true;
                }
                let eta: f64 = mult
                    .iter()
                    .enumerate()
                    .filter(|(_, &r)| r > 0)
                    .map(|(cell, &r)| falling_factorial(sample.counts[cell], r))
                    .product();
                let lam: f64 = (0..k).filter(|&s| !in_j[s]).map(|s| lambda[tuple[s]]).product();
                total += sign * a * eta * lam;
            });
        }
    }
    Ok(total)
}

/// `E I_k(f)^2 = k! ‖f‖² = (k!)² Σ_{i_1<…<i_k} a_i² Π λ_{i_j}`.
pub fn integral_second_moment_exact(kernel: &StepKernel) -> f64 {
    let k = kernel.degree();
    let lambda = kernel.space.measures();
    let s: f64 = kernel
        .tensor
        .entries()
        .map(|(t, v)| v[0] * v[0] * t.iter().map(|&i| lambda[i]).product::<f64>())
        .sum();
    factorial(k) * factorial(k) * s
}

/// Keeps each point independently with probability `t`.
pub fn trim<R: Rng + ?Sized>(sample: &PoissonSample, t: f64, rng: &mut R) -> Result<PoissonSample> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("trimming level must lie in [0,1], got {t}")));
    }
    let points = sample
        .points
        .as_ref()
        .ok_or_else(|| Error::Usage("trimming needs a sample with points".into()))?;
    let kept: Vec<Point> = points.iter().copied().filter(|_| rng.random::<f64>() < t).collect();
    let mut counts = vec![0u64; sample.counts.len()];
    for p in &kept {
        counts[p.cell] += 1;
    }
    Ok(PoissonSample { counts, points: Some(kept) })
}

/// `trim` driven by a named stream.
pub fn trim_with_stream(sample: &PoissonSample, t: f64, stream: &Stream) -> Result<PoissonSample> {
    trim(sample, t, &mut stream.rng())
}

/// `F = c + Σ_k I_k(f_k)` on one cell space.
#[derive(Clone, Debug, PartialEq)]
pub struct MehlerFunctional {
    pub constant: f64,
    pub kernels: Vec<StepKernel>,
}

impl MehlerFunctional {
    pub fn new(constant: f64, kernels: Vec<StepKernel>) -> Result<Self> {
        if let Some(first) = kernels.first() {
            if kernels.iter().any(|k| k.space != first.space) {
                return Err(Error::Parameter("all kernels must live on the same cell space".into()));
            }
        }
        Ok(Self { constant, kernels })
    }

    pub fn evaluate(&self, sample: &PoissonSample) -> Result<f64> {
        let mut v = self.constant;
        for k in &self.kernels {
            v += multiple_integral(k, sample)?;
        }
        Ok(v)
    }

    /// `E F + Σ_k t^k I_k(f_k)`.
    pub fn mehler_closed_form(&self, sample: &PoissonSample, t: f64) -> Result<f64> {
        let mut v = self.constant;
        for k in &self.kernels {
            v += t.powi(k.degree() as i32) * multiple_integral(k, sample)?;
        }
        Ok(v)
    }
}

/// Per outer path, a Monte Carlo estimate of `P_t F(η) = E[F(η_t + η'_{1-t}) | η]`
/// from `inner_paths` draws of the trimming marks and of `η'`, compared with
/// the closed form. Passes when every deviation is within 4 inner SE.
pub fn mehler_apply(
    f: &MehlerFunctional,
    t: f64,
    outer_paths: u64,
    inner_paths: u64,
    stream: &Stream,
) -> Result<ExperimentReport> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("t must lie in [0,1], got {t}")));
    }
    let space = match f.kernels.first() {
        Some(k) => (**k.space()).clone(),
        None => CellSpace::unit_interval(),
    };
    let fresh = if t < 1.0 { Some(space.scaled(1.0 - t)?) } else { None };
    let rows = (0..outer_paths)
        .into_par_iter()
        .map(|o| {
            let s = stream.index(o);
            let eta = sample_points(&space, &mut s.child("eta").rng());
            let target = f.mehler_closed_form(&eta, t)?;
            let mut rng = s.child("inner").rng();
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..inner_paths {
                let mut tilde = trim(&eta, t, &mut rng)?;
                if let Some(fresh) = &fresh {
                    tilde = tilde.superpose(&sample_points(fresh, &mut rng))?;
                }
                let v = f.evaluate(&tilde)?;
                sum += v;
                sum_sq += v * v;
            }
            let n = inner_paths.max(1) as f64;
            let mean = sum / n;
            let var = if inner_paths > 1 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
            Ok((mean - target, (var / n).sqrt()))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let mut report = ExperimentReport::new("mehler");
    let tag = format!("t={t}");
    let max_dev = rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max);
    let max_se = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    // tolerance for rounding when the inner estimate is exact (t = 1)
    let within = |&(d, se): &(f64, f64)| d.abs() <= 4.0 * se + 1e-9 * (1.0 + d.abs());
    let inside = rows.iter().filter(|r| within(r)).count() as u64;
    report.push(Metric::monte_carlo(format!("max_abs_deviation[{tag}]"), max_dev, max_se, inner_paths));
    report.push(
        Metric::exact(format!("paths_within_4se[{tag}]"), inside as f64 / outer_paths.max(1) as f64)
            .with_reference(1.0)
            .with_verdict(inside == outer_paths),
    );
    Ok(report)
}

/// Stabilisation index of `F_n = n η([0,1/n]) - 1`: the first `n` with
/// `F_m = -1` for all `m >= n`, i.e. `floor(1/x_min) + 1`, or `1` without
/// points.
pub fn stabilization_index(points: &[f64]) -> u64 {
    match points.iter().copied().reduce(f64::min) {
        Some(x) if x > 0.0 => (1.0 / x).floor() as u64 + 1,
        Some(_) => u64::MAX,
        None => 1,
    }
}

/// `P(index <= n) = P(η([0,1/n]) = 0) = e^{-1/n}`.
pub fn stabilization_cdf(n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (-1.0 / n as f64).exp()
    }
}

/// `F_n` for `n = 1..=n_max` on one realisation of the points.
pub fn first_chaos_trajectory(points: &[f64], n_max: usize) -> Vec<f64> {
    (1..=n_max)
        .map(|n| {
            let hits = points.iter().filter(|&&x| x <= 1.0 / n as f64).count();
            (n * hits) as f64 - 1.0
        })
        .collect()
}

/// Checkpoints at which the empirical law of the stabilisation index is
/// compared with the exact one.
pub const STABILIZATION_CHECKPOINTS: [u64; 8] = [1, 2, 3, 5, 10, 20, 50, 100];

/// Unit-intensity process on `[0,1]`, `F_n = I_1(n 1_{[0,1/n]})`. Reports the
/// fraction of paths whose trajectory reaches `-1` and stays there, and the
/// empirical CDF of the stabilisation index at fixed checkpoints against
/// `e^{-1/n}` in 4-SE bands.
pub fn simulate_first_chaos_example(n_max: usize, paths: u64, stream: &Stream) -> Result<ExperimentReport> {
    if n_max == 0 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    let space = CellSpace::unit_interval();
    let per_path: Vec<(u64, bool)> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let sample = sample_points(&space, &mut stream.index(i).rng());
            let xs: Vec<f64> = sample.points.unwrap_or_default().iter().map(|p| p.position).collect();
            let idx = stabilization_index(&xs);
            let traj = first_chaos_trajectory(&xs, n_max);
            // consistent: -1 from the index on, and not -1 just before it
            let settled = traj.iter().skip(idx.saturating_sub(1) as usize).all(|&v| v == -1.0);
            let sharp = idx == 1 || idx as usize > n_max + 1 || traj[idx as usize - 2] != -1.0;
            (idx, settled && sharp)
        })
        .collect();
    let mut report = ExperimentReport::new("poisson-example");
    if paths == 0 {
        return Ok(report);
    }
    let finite = per_path.iter().filter(|p| p.0 < u64::MAX).count() as u64;
    report.push(Metric::proportion("finite_stabilization_index", finite, paths).with_reference(1.0).with_verdict(finite == paths));
    let consistent = per_path.iter().filter(|p| p.1).count() as u64;
    report.push(
        Metric::proportion("trajectory_matches_index", consistent, paths)
            .with_reference(1.0)
            .with_verdict(consistent == paths),
    );
    let settled_by_max = per_path.iter().filter(|p| p.0 <= n_max as u64).count() as u64;
    report.push(Metric::proportion(format!("stabilized_by[n={n_max}]"), settled_by_max, paths));
    for n in STABILIZATION_CHECKPOINTS {
        let hits = per_path.iter().filter(|p| p.0 <= n).count() as u64;
        let exact = stabilization_cdf(n);
        let m = Metric::proportion(format!("index_cdf[n={n}]"), hits, paths);
        let ok = (m.value - exact).abs() <= 4.0 * binomial_se(exact, paths);
        report.push(m.with_reference(exact).with_verdict(ok));
    }
    Ok(report)
}

/// Monte Carlo check of the isometry `E I_k(f)² = k!‖f‖²` for each kernel
/// and of orthogonality `E I_k(f) I_m(g) = 0` across distinct degrees, all
/// on shared samples.
pub fn simulate_isometry(kernels: &[StepKernel], samples: u64, stream: &Stream) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("poisson-isometry");
    let Some(first) = kernels.first() else { return Ok(report) };
    if kernels.iter().any(|k| k.space != first.space) {
        return Err(Error::Parameter("all kernels must live on the same cell space".into()));
    }
    if samples < 2 {
        return Ok(report);
    }
    let space = (**first.space()).clone();
    let values: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let s = sample_counts(&space, &mut stream.index(i).rng());
            kernels.iter().map(|k| multiple_integral(k, &s)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let n = samples as f64;
    let moment = |f: &dyn Fn(&[f64]) -> f64| {
        let xs: Vec<f64> = values.iter().map(|v| f(v)).collect();
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    for (i, k) in kernels.iter().enumerate() {
        let exact = integral_second_moment_exact(k);
        let (mean, se) = moment(&|v| v[i] * v[i]);
        let m = Metric::monte_carlo(format!("second_moment[kernel={i},k={}]", k.degree()), mean, se, samples);
        report.push(m.with_reference(exact).with_verdict((mean - exact).abs() <= 4.0 * se));
    }
    for i in 0..kernels.len() {
        for j in i + 1..kernels.len() {
            if kernels[i].degree() == kernels[j].degree() {
                continue;
            }
            let (mean, se) = moment(&|v| v[i] * v[j]);
            let m = Metric::monte_carlo(format!("cross_moment[kernels={i},{j}]"), mean, se, samples);
            report.push(m.with_reference(0.0).with_verdict(mean.abs() <= 4.0 * se));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;
    use crate::numeric::for_each_distinct_tuple;
    use proptest::prelude::*;

    fn space(m: &[f64]) -> Arc<CellSpace> {
        Arc::new(CellSpace::new(m.to_vec()).unwrap())
    }

    fn kernel(degree: usize, sp: &Arc<CellSpace>, entries: Vec<(Vec<usize>, f64)>) -> StepKernel {
        StepKernel::new(SymmetricTetrahedralTensor::from_entries(degree, sp.len(), entries).unwrap(), sp.clone())
            .unwrap()
    }

    fn gaussian() -> DistributionSpec {
        DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 }
    }

    /// The explicit formula with factorial measures evaluated by enumerating
    /// ordered tuples of distinct points, and the λ-integrals by the cell
    /// masses; the slow cross-check.
    fn explicit_by_points(kernel: &StepKernel, sample: &PoissonSample) -> f64 {
        let k = kernel.degree();
        let pts = sample.points.as_ref().unwrap();
        let lambda = kernel.space().measures();
        let m = lambda.len();
        let mut total = 0.0;
        for size in 0..=k {
            let sign = if (k - size).is_multiple_of(2) { 1.0 } else { -1.0 };
            for_each_combination(k, size, |j| {
                let rest: Vec<usize> = (0..k).filter(|s| !j.contains(s)).collect();
                for_each_distinct_tuple(pts.len(), size, |pt| {
                    let mut tuple = vec![0usize; k];
                    for (slot, &p) in j.iter().zip(pt) {
                        tuple[*slot] = pts[p].cell;
                    }
                    for code in 0..m.pow(rest.len() as u32) {
                        let mut c = code;
                        let mut lam = 1.0;
                        for &slot in &rest {
                            tuple[slot] = c % m;
                            lam *= lambda[c % m];
                            c /= m;
                        }
                        total += sign * kernel.tensor().full_coefficient(&tuple).unwrap() * lam;
                    }
                });
            });
        }
        total
    }

    #[test]
    fn cell_space_rejects_bad_masses() {
        assert!(CellSpace::new(vec![0.0]).is_err());
        assert!(CellSpace::new(vec![1.0, f64::INFINITY]).is_err());
        assert!(CellSpace::new(vec![]).is_err());
        let s: CellSpace = serde_json::from_str("[1.0,2.5]").unwrap();
        assert_eq!(s.measures(), &[1.0, 2.5]);
        assert!(serde_json::from_str::<CellSpace>("[1.0,-2.5]").is_err());
    }

    #[test]
    fn poisson_counts_moments() {
        let sp = CellSpace::new(vec![1.0, 3.0]).unwrap();
        let mut rng = Stream::root(1).rng();
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sample_counts(&sp, &mut rng).counts[0] as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((mean - 1.0).abs() < 4.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.05);
        let a = sample_process(&sp, &Stream::root(5));
        assert_eq!(a, sample_process(&sp, &Stream::root(5)));
    }

    #[test]
    fn points_agree_with_counts() {
        let sp = CellSpace::new(vec![2.0, 0.5, 3.0]).unwrap();
        let s = sample_process_with_points(&sp, &Stream::root(8));
        let pts = s.points.as_ref().unwrap();
        for (c, &n) in s.counts.iter().enumerate() {
            assert_eq!(pts.iter().filter(|p| p.cell == c).count() as u64, n);
        }
        for p in pts {
            let lo = sp.offsets[p.cell];
            assert!(p.position >= lo && p.position < lo + sp.measures()[p.cell]);
        }
    }

    #[test]
    fn integral_examples() {
        let sp = space(&[1.0, 1.0]);
        let one = kernel(1, &sp, vec![(vec![0], 1.0)]);
        let s = PoissonSample { counts: vec![2, 3], points: None };
        assert_eq!(multiple_integral(&one, &s).unwrap(), 1.0);
        let two = kernel(2, &sp, vec![(vec![0, 1], 1.0)]);
        assert_eq!(multiple_integral(&two, &s).unwrap(), 4.0);
        assert_eq!(wiener_ito_explicit(&two, &s).unwrap(), 4.0);
        let lin = kernel(1, &sp, vec![(vec![0], 2.0), (vec![1], -1.0)]);
        assert_eq!(wiener_ito_explicit(&lin, &s).unwrap(), 2.0 * 1.0 - 2.0);
        assert!(multiple_integral(&two, &PoissonSample { counts: vec![1], points: None }).is_err());
        assert!(SymmetricTetrahedralTensor::from_entries(2, 2, [(vec![1, 1], 1.0)]).is_err());
    }

    #[test]
    fn second_moment_examples() {
        let a = kernel(1, &space(&[2.0, 1.0]), vec![(vec![0], 1.0)]);
        assert_eq!(integral_second_moment_exact(&a), 2.0);
        let b = kernel(2, &space(&[1.0, 2.0]), vec![(vec![0, 1], 3.0)]);
        assert_eq!(integral_second_moment_exact(&b), 72.0);
        let z = kernel(2, &space(&[1.0, 2.0]), vec![]);
        assert_eq!(integral_second_moment_exact(&z), 0.0);
    }

    #[test]
    fn isometry_and_orthogonality_by_monte_carlo() {
        let sp = space(&[1.0, 2.0]);
        let b = kernel(2, &sp, vec![(vec![0, 1], 3.0)]);
        let a = kernel(1, &sp, vec![(vec![0], 1.0), (vec![1], -0.5)]);
        let r = simulate_isometry(&[a, b], 100_000, &Stream::root(3)).unwrap();
        assert!(r.all_pass(), "{:?}", r.metrics);
        assert_eq!(r.metrics.len(), 3);
    }

    #[test]
    fn trimming() {
        let sp = CellSpace::new(vec![10.0]).unwrap();
        let s = sample_process_with_points(&sp, &Stream::root(9));
        let mut rng = Stream::root(10).rng();
        assert_eq!(trim(&s, 1.0, &mut rng).unwrap(), s);
        assert_eq!(trim(&s, 0.0, &mut rng).unwrap().counts, vec![0]);
        assert!(trim(&s, 1.5, &mut rng).is_err());
        assert!(trim(&PoissonSample { counts: vec![1], points: None }, 0.5, &mut rng).is_err());
        let n = 20_000;
        let kept: Vec<f64> = (0..n)
            .map(|i| {
                let s = sample_process_with_points(&sp, &Stream::root(11).index(i));
                trim(&s, 0.5, &mut rng).unwrap().counts[0] as f64
            })
            .collect();
        let mean = kept.iter().sum::<f64>() / n as f64;
        // thinned process is Poisson(5)
        assert!((mean - 5.0).abs() < 4.0 * (5.0 / n as f64).sqrt());
    }

    #[test]
    fn stabilization_examples() {
        assert_eq!(stabilization_index(&[]), 1);
        assert_eq!(first_chaos_trajectory(&[], 5), vec![-1.0; 5]);
        assert_eq!(stabilization_index(&[0.3, 0.9]), 4);
        let traj = first_chaos_trajectory(&[0.3, 0.9], 6);
        assert_eq!(traj, vec![1.0, 1.0, 2.0, -1.0, -1.0, -1.0]);
        assert_eq!(stabilization_index(&[0.25]), 5);
        assert_eq!(first_chaos_trajectory(&[0.25], 5)[3], 3.0);
        assert!((stabilization_cdf(1) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn first_chaos_report() {
        let r = simulate_first_chaos_example(200, 4000, &Stream::root(12)).unwrap();
        assert!(r.all_pass(), "{:?}", r.failures().collect::<Vec<_>>());
        assert_eq!(r.metric("finite_stabilization_index").unwrap().value, 1.0);
    }

    #[test]
    fn mehler_edges() {
        let sp = space(&[1.0, 0.5, 2.0]);
        let s = Stream::root(13);
        let f = MehlerFunctional::new(
            0.7,
            vec![
                StepKernel::random(1, sp.clone(), 3, &gaussian(), &s.child("k1")).unwrap(),
                StepKernel::random(2, sp.clone(), 3, &gaussian(), &s.child("k2")).unwrap(),
            ],
        )
        .unwrap();
        for t in [0.0, 0.5, 1.0] {
            let r = mehler_apply(&f, t, 8, 2000, &s.child("run")).unwrap();
            assert!(r.all_pass(), "t={t}: {:?}", r.metrics);
        }
        let exact = mehler_apply(&f, 1.0, 4, 3, &s).unwrap();
        assert!(exact.metrics[0].value < 1e-12);
        assert!(mehler_apply(&f, -0.1, 1, 1, &s).is_err());
        let other = StepKernel::random(1, space(&[1.0]), 1, &gaussian(), &s).unwrap();
        assert!(MehlerFunctional::new(0.0, vec![f.kernels[0].clone(), other]).is_err());
    }

    #[test]
    fn record_round_trip() {
        let k = kernel(2, &space(&[1.0, 2.0, 0.5]), vec![(vec![0, 2], 1.5)]);
        let json = serde_json::to_string(&k.to_record()).unwrap();
        let back = StepKernel::from_record(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, k);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn explicit_formula_matches_product_form(seed in any::<u64>(), k in 0usize..=3, m in 1usize..=5) {
            prop_assume!(k <= m);
            let s = Stream::root(seed);
            let masses: Vec<f64> = (0..m).map(|i| 0.3 + (i as f64) * 0.4).collect();
            let sp = space(&masses);
            let support = crate::numeric::binomial_f64(m, k).min(4.0) as usize;
            let ker = StepKernel::random(k, sp.clone(), support, &gaussian(), &s.child("k")).unwrap();
            let sample = sample_process_with_points(&sp, &s.child("eta"));
            let a = multiple_integral(&ker, &sample).unwrap();
            let b = wiener_ito_explicit(&ker, &sample).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
            if sample.points.as_ref().unwrap().len() <= 7 {
                let c = explicit_by_points(&ker, &sample);
                prop_assert!((a - c).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {c}");
            }
        }
    }
}
