//! Integral conditions for the convergence decomposition property, the
//! i.i.d. counterexample schedule, the triangular-array WLLN terms and the
//! two simulators built on them.
//!
//! All verdicts are over a finite grid of `t` values, never "for all t".

use crate::distributions::{DistributionSpec, Law};
use crate::harness::report::{binomial_se, json_f64, ExperimentReport, Metric};
use crate::{Error, Result, Stream};
use num::{BigInt, BigRational, One, ToPrimitive};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;

pub const DEFAULT_C_MAX: f64 = 1e3;
pub const DEFAULT_GRID_POINTS: usize = 64;
/// Smallest point of the geometric part of the default grid, `2^-40`.
pub const DEFAULT_GRID_T_MIN: f64 = 9.094947017729282e-13;
/// Tolerances reported by convergence-in-probability simulations.
pub const EPS_LEVELS: [f64; 3] = [0.05, 0.1, 0.2];

/// A grid point where a ratio exceeded the cap. `member` identifies the
/// sequence element for multi-law checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    #[serde(with = "json_f64")]
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdpVerdict {
    pub holds: bool,
    /// Largest ratio seen on the grid; the least admissible `C` when `holds`.
    #[serde(with = "json_f64")]
    pub witness_c: f64,
    pub violations: Vec<Violation>,
    pub t_grid: Vec<f64>,
}

/// Geometric grid from `1` down to `2^-40` plus the reciprocals of the
/// law's nonzero atoms, decreasing and without duplicates.
pub fn default_grid(dist: &DistributionSpec) -> Result<Vec<f64>> {
    grid_below(dist, f64::INFINITY)
}

/// [`default_grid`] restricted to `t <= t_max`.
pub fn grid_below(dist: &DistributionSpec, t_max: f64) -> Result<Vec<f64>> {
    let law = dist.law()?;
    let last = (DEFAULT_GRID_POINTS - 1) as f64;
    let mut grid: Vec<f64> = (0..DEFAULT_GRID_POINTS)
        .map(|i| DEFAULT_GRID_T_MIN.powf(i as f64 / last))
        .chain(law.structural_levels().into_iter().map(|x| 1.0 / x))
        .filter(|&t| t > 0.0 && t <= t_max && t.is_finite())
        .collect();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    Ok(grid)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn require_positive_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("t must be positive and finite, got {t}")))
    }
}

fn require_nonzero(law: &Law) -> Result<()> {
    if law.is_zero() {
        Err(Error::Domain("the law is identically zero; the condition holds trivially".into()))
    } else {
        Ok(())
    }
}

/// `|E X1{|X|<=1/t}| / ((1/t) P(|X|>1/t) + t Var(X1{|X|<=1/t}))`.
pub fn cdp_ratio(dist: &DistributionSpec, t: f64) -> Result<f64> {
    let law = dist.law()?;
    require_nonzero(&law)?;
    require_positive_t(t)?;
    Ok(law_ratio(&law, t))
}

pub(crate) fn law_ratio(law: &Law, t: f64) -> f64 {
    let u = 1.0 / t;
    let num = law.truncated_mean(u).abs();
    let den = u * law.tail_prob(u) + t * law.truncated_variance(u);
    ratio(num, den)
}

/// Median-centred ratio
/// `|m + E(X-m)1{|X-m|<=1/t}| / ((1/t) P(|X|>1/t) + t E(X-m)^2 1{|X-m|<=1/t})`
/// with `m` the lower median.
pub fn median_ratio(dist: &DistributionSpec, t: f64) -> Result<f64> {
    let law = dist.law()?;
    require_nonzero(&law)?;
    require_positive_t(t)?;
    Ok(law_median_ratio(&law, t))
}

fn law_median_ratio(law: &Law, t: f64) -> f64 {
    let u = 1.0 / t;
    let m = law.median();
    let (m1, m2) = law.centered_moments(m, u);
    ratio((m + m1).abs(), u * law.tail_prob(u) + t * m2)
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::Parameter("t grid is empty".into()));
    }
    for &t in t_grid {
        require_positive_t(t)?;
    }
    Ok(())
}

fn scan<F>(laws: &[Law], t_grid: &[f64], c_max: f64, f: F) -> CdpVerdict
where
    F: Fn(&Law, f64) -> f64,
{
    let mut witness = 0.0f64;
    let mut violations = Vec::new();
    for (i, law) in laws.iter().enumerate() {
        for &t in t_grid {
            let r = f(law, t);
            witness = witness.max(r);
            if r > c_max {
                violations.push(Violation { t, ratio: r, member: (laws.len() > 1).then_some(i) });
            }
        }
    }
    CdpVerdict { holds: violations.is_empty(), witness_c: witness, violations, t_grid: t_grid.to_vec() }
}

/// The i.i.d. criterion over a grid. A law that is identically zero holds
/// with witness 0.
pub fn check_iid_cdp(dist: &DistributionSpec, t_grid: &[f64], c_max: f64) -> Result<CdpVerdict> {
    check_grid(t_grid)?;
    let law = dist.law()?;
    if law.is_zero() {
        return Ok(CdpVerdict { holds: true, witness_c: 0.0, violations: Vec::new(), t_grid: t_grid.to_vec() });
    }
    Ok(scan(std::slice::from_ref(&law), t_grid, c_max, law_ratio))
}

/// The uniform-in-`n` version of the ratio bound for a finite sequence.
/// Members that are identically zero satisfy every bound and are skipped.
pub fn check_sequence_condition(dists: &[DistributionSpec], t_grid: &[f64], c_max: f64) -> Result<CdpVerdict> {
    check_grid(t_grid)?;
    let laws = dists.iter().map(DistributionSpec::law).collect::<Result<Vec<_>>>()?;
    let mut v = scan(&laws, t_grid, c_max, |law, t| if law.is_zero() { 0.0 } else { law_ratio(law, t) });
    if dists.len() == 1 {
        for x in &mut v.violations {
            x.member = Some(0);
        }
    }
    Ok(v)
}

/// The median-centred condition. Every member must be nonzero.
pub fn check_median_condition(dists: &[DistributionSpec], t_grid: &[f64], c_max: f64) -> Result<CdpVerdict> {
    check_grid(t_grid)?;
    let laws = dists.iter().map(DistributionSpec::law).collect::<Result<Vec<_>>>()?;
    for law in &laws {
        require_nonzero(law)?;
    }
    Ok(scan(&laws, t_grid, c_max, law_median_ratio))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntiConcentration {
    pub holds: bool,
    /// Largest mass found in an open window of half-width `delta`.
    pub sup_mass: f64,
    /// False when the supremum was taken over a grid of centres.
    pub exact: bool,
}

/// `sup_x P(X ∈ (x-δ, x+δ)) <= 1-δ`.
///
/// Discrete laws are scanned exactly: the best open window may be taken to
/// start at an atom and then holds the atoms less than `2δ` above it.
/// Continuous laws use centres spaced `δ/8` apart and are flagged inexact.
pub fn check_anti_concentration(dist: &DistributionSpec, delta: f64) -> Result<AntiConcentration> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Parameter(format!("delta must lie in (0,1), got {delta}")));
    }
    let law = dist.law()?;
    let (sup_mass, exact) = match &law {
        Law::Discrete(d) => {
            let atoms = d.atoms();
            let mut best = 0.0f64;
            let mut hi = 0;
            let mut mass = 0.0;
            for lo in 0..atoms.len() {
                while hi < atoms.len() && atoms[hi].0 - atoms[lo].0 < 2.0 * delta {
                    mass += atoms[hi].1;
                    hi += 1;
                }
                best = best.max(mass);
                mass -= atoms[lo].1;
            }
            (best, true)
        }
        Law::Gaussian { mean, sd } => (grid_window_mass(&law, *mean, 10.0 * sd, delta), false),
        Law::Uniform { a, b } => (grid_window_mass(&law, 0.5 * (a + b), 0.5 * (b - a), delta), false),
    };
    Ok(AntiConcentration { holds: sup_mass <= 1.0 - delta, sup_mass, exact })
}

/// Centres `centre + j δ/8` covering `centre ± half_span`.
fn grid_window_mass(law: &Law, centre: f64, half_span: f64, delta: f64) -> f64 {
    let step = delta / 8.0;
    let count = (half_span / step).ceil() as i64;
    (-count..=count)
        .map(|j| {
            let x = centre + j as f64 * step;
            law.cdf(x + delta) - law.cdf(x - delta)
        })
        .fold(0.0, f64::max)
}

/// Largest `t0` with `E X^2 1{|X| <= 1/t0} >= 1/2`.
pub fn second_moment_t0(dist: &DistributionSpec) -> Result<f64> {
    let law = dist.law()?;
    let m2 = |u: f64| law.truncated_second_moment(u);
    let short = || Error::Domain("E X^2 < 1/2; no admissible t0".into());
    match &law {
        Law::Discrete(_) => law
            .structural_levels()
            .into_iter()
            .find(|&u| m2(u) >= 0.5)
            .map(|u| 1.0 / u)
            .ok_or_else(short),
        _ => {
            let mut hi = 1.0;
            while m2(hi) < 0.5 {
                hi *= 2.0;
                if hi > 1e300 {
                    return Err(short());
                }
            }
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if m2(mid) >= 0.5 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(1.0 / hi)
        }
    }
}

/// `max(2, 2 t0^2)`, the bound on the ratio for `t < t0` when `X` is
/// centred with unit variance.
pub fn uniform_integrability_bound(t0: f64) -> f64 {
    2f64.max(2.0 * t0 * t0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    /// Target ratio level: `R(t) > n`.
    pub n: u32,
    pub t: f64,
    /// `±t`, with the sign of the truncated mean.
    pub a: f64,
    /// The sum runs over `k + 1` terms.
    pub k: u128,
    #[serde(with = "json_f64")]
    pub ratio: f64,
    pub truncated_mean: f64,
    /// `(k+1) t |E X1{|X|<=1/t}| - 1`, evaluated exactly in rational
    /// arithmetic on the floating-point values of `t` and the mean.
    pub sum_defect: f64,
}

/// `k + 1 = floor(1/x)` and `(k+1) x - 1` for `x = t·|m|`, exact in the
/// floating-point inputs. `None` when `k < 1`.
fn exact_terms(t: f64, m: f64) -> Option<(u128, f64)> {
    let x = BigRational::from_float(t)? * BigRational::from_float(m.abs())?;
    if x <= BigRational::from_integer(BigInt::from(0)) {
        return None;
    }
    let terms = x.recip().floor();
    let k = (terms.to_integer() - BigInt::one()).to_u128()?;
    let defect = (terms * &x - BigRational::one()).to_f64()?;
    (k >= 1).then_some((k, defect))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleSchedule {
    pub entries: Vec<ScheduleEntry>,
}

impl CounterexampleSchedule {
    pub fn t_n(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.t).collect()
    }

    pub fn a_n(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.a).collect()
    }

    pub fn k_n(&self) -> Vec<u128> {
        self.entries.iter().map(|e| e.k).collect()
    }

    pub fn entry(&self, n: u32) -> Option<&ScheduleEntry> {
        self.entries.iter().find(|e| e.n == n)
    }

    /// Row `n` of the array `X_{n,k} = a_n X_k`, `k = 0..=k_n`.
    pub fn rows(&self, dist: &DistributionSpec) -> Vec<TriangularRow> {
        self.entries
            .iter()
            .map(|e| TriangularRow {
                entries: vec![RowEntry { dist: dist.clone(), scale: e.a, multiplicity: e.k + 1 }],
            })
            .collect()
    }
}

/// Schedule over the default grid.
pub fn build_iid_counterexample_schedule(
    dist: &DistributionSpec,
    n_range: RangeInclusive<u32>,
) -> Result<CounterexampleSchedule> {
    build_iid_counterexample_schedule_on(dist, n_range, &default_grid(dist)?)
}

/// For each `n`, `t_n` is the largest grid point strictly below `t_{n-1}`
/// with `R(t_n) > n` and `k_n = floor(1/(t_n |E X1{|X|<=1/t_n}|)) - 1 >= 1`.
pub fn build_iid_counterexample_schedule_on(
    dist: &DistributionSpec,
    n_range: RangeInclusive<u32>,
    t_grid: &[f64],
) -> Result<CounterexampleSchedule> {
    check_grid(t_grid)?;
    let law = dist.law()?;
    if law.is_zero() {
        return Err(Error::NoSchedule("the law is identically zero".into()));
    }
    let mut grid = t_grid.to_vec();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();
    let ratios: Vec<f64> = grid.iter().map(|&t| law_ratio(&law, t)).collect();
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let mut entries = Vec::new();
    let mut next = 0;
    for n in n_range {
        let found = (next..grid.len()).find_map(|i| {
            if ratios[i] <= n as f64 {
                return None;
            }
            let t = grid[i];
            let m = law.truncated_mean(1.0 / t);
            let (k, sum_defect) = exact_terms(t, m)?;
            let a = if m > 0.0 { t } else { -t };
            Some((i, ScheduleEntry { n, t, a, k, ratio: ratios[i], truncated_mean: m, sum_defect }))
        });
        match found {
            Some((i, e)) => {
                entries.push(e);
                next = i + 1;
            }
            None if entries.is_empty() => {
                return Err(Error::NoSchedule(format!(
                    "no grid point has ratio above {n} (largest ratio on the grid is {max_ratio})"
                )))
            }
            None => {
                return Err(Error::NoSchedule(format!(
                    "grid exhausted at n = {n}: no smaller t has ratio above {n} (largest ratio on the grid is {max_ratio})"
                )))
            }
        }
    }
    Ok(CounterexampleSchedule { entries })
}

/// `multiplicity` independent copies of `scale · X`, `X ~ dist`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowEntry {
    pub dist: DistributionSpec,
    pub scale: f64,
    pub multiplicity: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangularRow {
    pub entries: Vec<RowEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WllnTerms {
    /// `Σ_k E X_{n,k} 1{|X_{n,k}| <= τ}`.
    pub a: f64,
    /// `Σ_k P(|X_{n,k}| > τ) + Var(X_{n,k} 1{|X_{n,k}| <= τ})`.
    pub b: f64,
}

pub fn wlln_conditions(rows: &[TriangularRow], tau: f64) -> Result<Vec<WllnTerms>> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Parameter(format!("tau must be positive and finite, got {tau}")));
    }
    rows.iter()
        .map(|row| {
            let (mut a, mut b) = (0.0, 0.0);
            for e in &row.entries {
                if e.scale == 0.0 || e.multiplicity == 0 {
                    continue;
                }
                let law = e.dist.law()?;
                let u = tau / e.scale.abs();
                let m = e.multiplicity as f64;
                a += m * e.scale * law.truncated_mean(u);
                b += m * (law.tail_prob(u) + e.scale * e.scale * law.truncated_variance(u));
            }
            Ok(WllnTerms { a, b })
        })
        .collect()
}

/// Monte Carlo estimates of `P(|S_n - 1| > ε)`, `S_n = a_n Σ_{k=0}^{k_n} X_k`,
/// for every schedule entry with at most `max_terms` summands.
pub fn simulate_schedule(
    schedule: &CounterexampleSchedule,
    dist: &DistributionSpec,
    paths: u64,
    max_terms: u128,
    stream: &Stream,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("counterexample-iid");
    if paths == 0 {
        return Ok(report);
    }
    let law = dist.law()?;
    for e in &schedule.entries {
        let terms = e.k + 1;
        if terms > max_terms || terms > u64::MAX as u128 {
            continue;
        }
        let s = stream.child("schedule").index(e.n as u64);
        let sums = (0..paths)
            .into_par_iter()
            .map(|i| Ok(e.a * law.sample_sum(&mut s.index(i).rng(), terms as u64)?))
            .collect::<Result<Vec<f64>>>()?;
        for eps in EPS_LEVELS {
            let hits = sums.iter().filter(|&&x| (x - 1.0).abs() > eps).count() as u64;
            report.push(Metric::proportion(format!("tail_prob[n={},eps={eps}]", e.n), hits, paths));
        }
    }
    Ok(report)
}

/// The sequence `n ↦ p_{k_n}`, indexed from `n = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwoPointSequence {
    /// `p = 1 - 2^-n`.
    Geometric,
    Constant { p: f64 },
    Explicit { p: Vec<f64> },
}

impl TwoPointSequence {
    /// `1 - p_n`, exact for the geometric sequence.
    pub fn q(&self, n: usize) -> Result<f64> {
        let p = match self {
            TwoPointSequence::Geometric => return Ok((-(n as f64)).exp2()),
            TwoPointSequence::Constant { p } => *p,
            TwoPointSequence::Explicit { p } => *p
                .get(n - 1)
                .ok_or_else(|| Error::Parameter(format!("explicit sequence has no entry for n = {n}")))?,
        };
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!("p must lie in (0,1), got {p}")));
        }
        Ok(1.0 - p)
    }
}

/// Report plus per-path trajectories `Z_n` and `Z_{n,1}`, `n = 1..=n_max`.
#[derive(Clone, Debug)]
pub struct TwoPointRun {
    pub report: ExperimentReport,
    pub z: Vec<Vec<f64>>,
    pub z1: Vec<Vec<f64>>,
}

/// Simulates `Z_n = 1 - (sqrt(p(1-p))/(1-p)) X_{k_n}` with independent
/// two-point `X_{k_n}` of parameter `p_{k_n}`.
///
/// Reports `P(Z_{n,1} = -1)` against `1 - q_n` in 4-SE bands, the fraction of
/// paths with `Z_m = 0` for every `m` in `stable_from..=n_max` against the
/// union bound, and the mean index after which a path stays at zero.
pub fn simulate_two_point_counterexample(
    sequence: &TwoPointSequence,
    n_max: usize,
    paths: u64,
    stable_from: usize,
    stream: &Stream,
) -> Result<TwoPointRun> {
    if n_max == 0 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    let q = (1..=n_max).map(|n| sequence.q(n)).collect::<Result<Vec<_>>>()?;
    let (z, z1): (Vec<Vec<f64>>, Vec<Vec<f64>>) = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream.index(i).rng();
            q.iter()
                .map(|&q| {
                    if rng.random::<f64>() >= q {
                        (0.0, -1.0)
                    } else {
                        (1.0 / q, (1.0 - q) / q)
                    }
                })
                .unzip()
        })
        .unzip();
    let mut report = ExperimentReport::new("counterexample-two-point");
    if paths == 0 {
        return Ok(TwoPointRun { report, z, z1 });
    }
    for n in 1..=n_max {
        let hits = z1.iter().filter(|path| path[n - 1] == -1.0).count() as u64;
        let p = 1.0 - q[n - 1];
        let m = Metric::proportion(format!("p_z1_minus_one[n={n}]"), hits, paths);
        let ok = (m.value - p).abs() <= 4.0 * binomial_se(p, paths);
        report.push(m.with_reference(p).with_verdict(ok));
    }
    let index: Vec<usize> =
        z.iter().map(|path| path.iter().rposition(|&v| v != 0.0).map_or(1, |last| last + 2)).collect();
    if (1..=n_max).contains(&stable_from) {
        let stable = index.iter().filter(|&&i| i <= stable_from).count() as u64;
        let bound = 1.0 - q[stable_from - 1..].iter().sum::<f64>();
        let m = Metric::proportion(format!("stable_fraction[from={stable_from}]"), stable, paths);
        let slack = 4.0 * binomial_se(bound.clamp(0.0, 1.0), paths);
        report.push(m.clone().with_reference(bound).with_verdict(m.value >= bound - slack));
    }
    let mean = index.iter().map(|&i| i as f64).sum::<f64>() / paths as f64;
    let var = index.iter().map(|&i| (i as f64 - mean).powi(2)).sum::<f64>() / (paths as f64 - 1.0).max(1.0);
    report.push(Metric::monte_carlo("mean_stabilization_index", mean, (var / paths as f64).sqrt(), paths));
    Ok(TwoPointRun { report, z, z1 })
}
