//! Univariate laws with exact truncated-moment and tail queries.
//!
//! A [`DistributionSpec`] is the serializable description used in configs;
//! [`Law`] is its validated, query-ready form. Discrete kinds are answered by
//! exact atom sums; Gaussian and uniform laws use closed-form partial moments.

use crate::numeric::{sum_descending, CompensatedSum};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::{Binomial, Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Atoms closer than this relative distance to a truncation level count as
/// lying on it. Reciprocals of reciprocals are only accurate to an ulp or two.
const SNAP: f64 = 8.0 * f64::EPSILON;

/// Tolerance on the total mass of user-supplied atoms.
const MASS_TOL: f64 = 1e-12;

pub const DEFAULT_HEAVY_TAIL_N_MAX: u32 = 200;

fn default_n_max() -> u32 {
    DEFAULT_HEAVY_TAIL_N_MAX
}

/// Serializable description of a univariate law.
///
/// Configs use tagged records, e.g. `{"kind": "two_point", "p": 0.9}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// Finitely many `(value, prob)` atoms.
    FiniteDiscrete { atoms: Vec<(f64, f64)> },
    Gaussian { mean: f64, sd: f64 },
    Uniform { a: f64, b: f64 },
    Rademacher,
    /// Centered two-point law of variance one with `P(X = (1-p)/sqrt(p(1-p))) = p`.
    TwoPoint { p: f64 },
    /// `P(X = 2^n/n^2) = 2^-(n+1)` for `n = 1..=n_max`, `P(X = -pi^2/6) = 1/2`,
    /// and the remaining mass `2^-(n_max+1)` on a sentinel atom that keeps the
    /// mean exactly zero.
    HeavyTailedExample {
        #[serde(default = "default_n_max")]
        n_max: u32,
    },
    Deterministic { c: f64 },
}

impl DistributionSpec {
    pub fn law(&self) -> Result<Law> {
        Law::new(self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Result<Vec<f64>> {
        Ok(self.law()?.sample(rng, count))
    }

    /// `E[X 1{|X| <= u}]`.
    pub fn truncated_mean(&self, u: f64) -> Result<f64> {
        check_level(u)?;
        Ok(self.law()?.truncated_mean(u))
    }

    /// `P(|X| > u)`.
    pub fn tail_prob(&self, u: f64) -> Result<f64> {
        check_level(u)?;
        Ok(self.law()?.tail_prob(u))
    }

    /// `Var(X 1{|X| <= u})`.
    pub fn truncated_variance(&self, u: f64) -> Result<f64> {
        check_level(u)?;
        Ok(self.law()?.truncated_variance(u))
    }

    pub fn label(&self) -> String {
        match self {
            Self::FiniteDiscrete { atoms } => format!("finite_discrete[{}]", atoms.len()),
            Self::Gaussian { mean, sd } => format!("gaussian({mean},{sd})"),
            Self::Uniform { a, b } => format!("uniform({a},{b})"),
            Self::Rademacher => "rademacher".into(),
            Self::TwoPoint { p } => format!("two_point({p})"),
            Self::HeavyTailedExample { n_max } => format!("heavy_tailed_example({n_max})"),
            Self::Deterministic { c } => format!("deterministic({c})"),
        }
    }
}

fn check_level(u: f64) -> Result<()> {
    if u > 0.0 && !u.is_nan() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("truncation level must be positive, got {u}")))
    }
}

/// Atoms of the two-point law, `(high, low)`.
pub fn two_point_atoms(p: f64) -> (f64, f64) {
    let s = (p * (1.0 - p)).sqrt();
    ((1.0 - p) / s, -p / s)
}

/// `sum_{n > m} 1/n^2`, accurate to full precision for every `m`.
pub fn basel_tail(m: u32) -> f64 {
    // Direct summation up to a cutoff, Euler-Maclaurin beyond it.
    let cutoff = m.max(2000) as u64;
    let mut acc = CompensatedSum::new();
    let big = cutoff as f64;
    let inv = 1.0 / big;
    let inv2 = inv * inv;
    let em = inv - 0.5 * inv2 + inv2 * inv / 6.0 - inv2 * inv2 * inv / 30.0
        + inv2 * inv2 * inv2 * inv / 42.0;
    acc.add(em);
    for n in ((m as u64 + 1)..=cutoff).rev() {
        let x = n as f64;
        acc.add(1.0 / (x * x));
    }
    acc.value()
}

#[derive(Clone, Debug)]
enum DiscreteSampler {
    /// Inversion over the cumulative mass in atom order.
    Inversion { cum: Vec<f64> },
    Rademacher,
    TwoPoint { p: f64, hi: f64, lo: f64 },
    HeavyTailed { n_max: u32 },
}

/// A finitely supported law.
#[derive(Clone, Debug)]
pub struct DiscreteLaw {
    /// `(value, prob)` sorted by value.
    atoms: Vec<(f64, f64)>,
    /// Mean known in closed form; truncated means are then computed from the
    /// (usually much smaller) outside sum.
    exact_mean: Option<f64>,
    sampler: DiscreteSampler,
}

impl DiscreteLaw {
    fn new(mut atoms: Vec<(f64, f64)>, exact_mean: Option<f64>, sampler: Option<DiscreteSampler>) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let sampler = sampler.unwrap_or_else(|| {
            let mut acc = CompensatedSum::new();
            let cum = atoms
                .iter()
                .map(|&(_, p)| {
                    acc.add(p);
                    acc.value()
                })
                .collect();
            DiscreteSampler::Inversion { cum }
        });
        Self { atoms, exact_mean, sampler }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    fn inside(x: f64, center: f64, u: f64) -> bool {
        (x - center).abs() <= u * (1.0 + SNAP)
    }
}

/// A validated law ready for exact queries and sampling.
#[derive(Clone, Debug)]
pub enum Law {
    Discrete(DiscreteLaw),
    Gaussian { mean: f64, sd: f64 },
    Uniform { a: f64, b: f64 },
}

fn finite(name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite, got {x}")))
    }
}

impl Law {
    pub fn new(spec: &DistributionSpec) -> Result<Self> {
        use DistributionSpec as S;
        Ok(match *spec {
            S::FiniteDiscrete { ref atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Parameter("finite_discrete needs at least one atom".into()));
                }
                for &(x, p) in atoms {
                    finite("atom value", x)?;
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(Error::Parameter(format!("atom probability must lie in (0,1], got {p}")));
                    }
                }
                let total = sum_descending(atoms.iter().map(|a| a.1).collect());
                if (total - 1.0).abs() > MASS_TOL {
                    return Err(Error::Parameter(format!("atom probabilities sum to {total}, not 1")));
                }
                Law::Discrete(DiscreteLaw::new(atoms.clone(), None, None))
            }
            S::Gaussian { mean, sd } => {
                finite("mean", mean)?;
                finite("sd", sd)?;
                if sd <= 0.0 {
                    return Err(Error::Parameter(format!("gaussian sd must be positive, got {sd}")));
                }
                Law::Gaussian { mean, sd }
            }
            S::Uniform { a, b } => {
                finite("a", a)?;
                finite("b", b)?;
                if a >= b {
                    return Err(Error::Parameter(format!("uniform needs a < b, got [{a}, {b}]")));
                }
                Law::Uniform { a, b }
            }
            S::Rademacher => Law::Discrete(DiscreteLaw::new(
                vec![(-1.0, 0.5), (1.0, 0.5)],
                Some(0.0),
                Some(DiscreteSampler::Rademacher),
            )),
            S::TwoPoint { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Parameter(format!("two_point needs p in (0,1), got {p}")));
                }
                let (hi, lo) = two_point_atoms(p);
                Law::Discrete(DiscreteLaw::new(
                    vec![(lo, 1.0 - p), (hi, p)],
                    Some(0.0),
                    Some(DiscreteSampler::TwoPoint { p, hi, lo }),
                ))
            }
            S::HeavyTailedExample { n_max } => {
                if n_max == 0 || n_max > 1000 {
                    return Err(Error::Parameter(format!("heavy_tailed_example needs 1 <= n_max <= 1000, got {n_max}")));
                }
                Law::Discrete(DiscreteLaw::new(heavy_tailed_atoms(n_max), Some(0.0), Some(DiscreteSampler::HeavyTailed { n_max })))
            }
            S::Deterministic { c } => {
                finite("c", c)?;
                Law::Discrete(DiscreteLaw::new(vec![(c, 1.0)], Some(c), None))
            }
        })
    }

    pub fn as_discrete(&self) -> Option<&DiscreteLaw> {
        match self {
            Law::Discrete(d) => Some(d),
            _ => None,
        }
    }

    /// True when the law is the point mass at zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, Law::Discrete(d) if d.atoms.iter().all(|&(x, _)| x == 0.0))
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Discrete(d) => d
                .exact_mean
                .unwrap_or_else(|| sum_descending(d.atoms.iter().map(|&(x, p)| x * p).collect())),
            Law::Gaussian { mean, .. } => *mean,
            Law::Uniform { a, b } => 0.5 * (a + b),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Law::Discrete(d) => {
                let m = self.mean();
                sum_descending(d.atoms.iter().map(|&(x, p)| p * (x - m) * (x - m)).collect())
            }
            Law::Gaussian { sd, .. } => sd * sd,
            Law::Uniform { a, b } => (b - a) * (b - a) / 12.0,
        }
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Law::Discrete(d) => sum_descending(d.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).collect()),
            Law::Gaussian { mean, sd } => std_normal_cdf((x - mean) / sd),
            Law::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    /// Lower median `inf{x : F(x) >= 1/2}`.
    pub fn median(&self) -> f64 {
        match self {
            Law::Discrete(d) => {
                let mut acc = CompensatedSum::new();
                for &(x, p) in &d.atoms {
                    acc.add(p);
                    if acc.value() >= 0.5 - 1e-13 {
                        return x;
                    }
                }
                d.atoms.last().map(|a| a.0).unwrap_or(0.0)
            }
            Law::Gaussian { mean, .. } => *mean,
            Law::Uniform { a, b } => 0.5 * (a + b),
        }
    }

    /// `P(|X| > u)`.
    pub fn tail_prob(&self, u: f64) -> f64 {
        match self {
            Law::Discrete(d) => sum_descending(
                d.atoms
                    .iter()
                    .filter(|a| !DiscreteLaw::inside(a.0, 0.0, u))
                    .map(|a| a.1)
                    .collect(),
            ),
            Law::Gaussian { mean, sd } => {
                std_normal_cdf((-u - mean) / sd) + std_normal_sf((u - mean) / sd)
            }
            Law::Uniform { a, b } => {
                let w = b - a;
                ((b.min(-u) - a).max(0.0) + (b - a.max(u)).max(0.0)) / w
            }
        }
    }

    /// `E[X 1{|X| > u}]`.
    pub fn tail_mean(&self, u: f64) -> f64 {
        match self {
            Law::Discrete(d) => sum_descending(
                d.atoms
                    .iter()
                    .filter(|a| !DiscreteLaw::inside(a.0, 0.0, u))
                    .map(|&(x, p)| x * p)
                    .collect(),
            ),
            _ => self.mean() - self.truncated_mean(u),
        }
    }

    /// `E[X 1{|X| <= u}]`.
    pub fn truncated_mean(&self, u: f64) -> f64 {
        match self {
            Law::Discrete(d) => match d.exact_mean {
                Some(m) => {
                    let outside: Vec<f64> = d
                        .atoms
                        .iter()
                        .filter(|a| !DiscreteLaw::inside(a.0, 0.0, u))
                        .map(|&(x, p)| x * p)
                        .collect();
                    if outside.is_empty() {
                        m
                    } else {
                        let mut terms = outside;
                        for t in terms.iter_mut() {
                            *t = -*t;
                        }
                        terms.push(m);
                        sum_descending(terms)
                    }
                }
                None => self.centered_moments(0.0, u).0,
            },
            _ => self.centered_moments(0.0, u).0,
        }
    }

    /// `E[X^2 1{|X| <= u}]`.
    pub fn truncated_second_moment(&self, u: f64) -> f64 {
        self.centered_moments(0.0, u).1
    }

    /// `Var(X 1{|X| <= u})`.
    pub fn truncated_variance(&self, u: f64) -> f64 {
        let m = self.truncated_mean(u);
        (self.truncated_second_moment(u) - m * m).max(0.0)
    }

    /// `(E[(X-c) 1{|X-c| <= u}], E[(X-c)^2 1{|X-c| <= u}])`.
    pub fn centered_moments(&self, center: f64, u: f64) -> (f64, f64) {
        match self {
            Law::Discrete(d) => {
                let mut m1 = Vec::new();
                let mut m2 = Vec::new();
                for &(x, p) in &d.atoms {
                    if DiscreteLaw::inside(x, center, u) {
                        let y = x - center;
                        m1.push(p * y);
                        m2.push(p * y * y);
                    }
                }
                (sum_descending(m1), sum_descending(m2))
            }
            &Law::Gaussian { mean, sd } => {
                let alpha = (center - u - mean) / sd;
                let beta = (center + u - mean) / sd;
                let p0 = normal_interval_mass(alpha, beta);
                let p1 = std_normal_pdf(alpha) - std_normal_pdf(beta);
                let p2 = p0 + x_pdf(alpha) - x_pdf(beta);
                let d = mean - center;
                (d * p0 + sd * p1, d * d * p0 + 2.0 * d * sd * p1 + sd * sd * p2)
            }
            &Law::Uniform { a, b } => {
                let lo = a.max(center - u);
                let hi = b.min(center + u);
                if lo >= hi {
                    return (0.0, 0.0);
                }
                let w = b - a;
                let (l, h) = (lo - center, hi - center);
                ((h * h - l * l) / (2.0 * w), (h * h * h - l * l * l) / (3.0 * w))
            }
        }
    }

    /// Atoms' absolute values (discrete kinds only), sorted and deduplicated.
    pub fn structural_levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = match self {
            Law::Discrete(d) => d.atoms.iter().map(|a| a.0.abs()).filter(|&x| x > 0.0).collect(),
            Law::Uniform { a, b } => [a.abs(), b.abs()].into_iter().filter(|&x| x > 0.0).collect(),
            Law::Gaussian { .. } => Vec::new(),
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Discrete(d) => match &d.sampler {
                DiscreteSampler::Rademacher => {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                &DiscreteSampler::TwoPoint { p, hi, lo } => {
                    if rng.random::<f64>() < p {
                        hi
                    } else {
                        lo
                    }
                }
                &DiscreteSampler::HeavyTailed { n_max } => {
                    if rng.random::<bool>() {
                        return -PI * PI / 6.0;
                    }
                    // n >= 1 with P(n) = 2^-n given the positive branch
                    let mut n: u64 = 1;
                    loop {
                        let r: u64 = rng.random();
                        if r == 0 {
                            n += 64;
                            continue;
                        }
                        n += r.trailing_zeros() as u64;
                        break;
                    }
                    if n > n_max as u64 {
                        // sentinel is the largest atom
                        d.atoms.last().unwrap().0
                    } else {
                        let n = n as i32;
                        2f64.powi(n) / (n * n) as f64
                    }
                }
                DiscreteSampler::Inversion { cum } => {
                    let total = *cum.last().unwrap();
                    let u = rng.random::<f64>() * total;
                    let i = cum.partition_point(|&c| c <= u).min(d.atoms.len() - 1);
                    d.atoms[i].0
                }
            },
            &Law::Gaussian { mean, sd } => Normal::new(mean, sd).unwrap().sample(rng),
            &Law::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// Sum of `count` i.i.d. draws.
    ///
    /// Discrete laws draw the atom multiplicities from a multinomial via
    /// sequential binomials, so the cost is independent of `count`.
    pub fn sample_sum<R: Rng + ?Sized>(&self, rng: &mut R, count: u64) -> Result<f64> {
        match self {
            Law::Discrete(d) => {
                let mut order: Vec<(f64, f64)> = d.atoms.clone();
                order.sort_by(|a, b| b.1.total_cmp(&a.1));
                // suffix masses computed from the small end
                let mut suffix = vec![0.0; order.len() + 1];
                for i in (0..order.len()).rev() {
                    suffix[i] = suffix[i + 1] + order[i].1;
                }
                let mut remaining = count;
                let mut acc = CompensatedSum::new();
                for (i, &(x, p)) in order.iter().enumerate() {
                    if remaining == 0 {
                        break;
                    }
                    let k = if i + 1 == order.len() {
                        remaining
                    } else {
                        let q = (p / suffix[i]).clamp(0.0, 1.0);
                        Binomial::new(remaining, q)
                            .map_err(|e| Error::Parameter(e.to_string()))?
                            .sample(rng)
                    };
                    remaining -= k;
                    acc.add(x * k as f64);
                }
                Ok(acc.value())
            }
            &Law::Gaussian { mean, sd } => {
                let c = count as f64;
                Ok(Normal::new(c * mean, c.sqrt() * sd).unwrap().sample(rng))
            }
            Law::Uniform { .. } => {
                if count > 100_000_000 {
                    return Err(Error::Parameter(format!("uniform sum of {count} terms is too long to simulate")));
                }
                let mut acc = CompensatedSum::new();
                for _ in 0..count {
                    acc.add(self.sample_one(rng));
                }
                Ok(acc.value())
            }
        }
    }
}

fn heavy_tailed_atoms(n_max: u32) -> Vec<(f64, f64)> {
    let mut atoms = Vec::with_capacity(n_max as usize + 2);
    atoms.push((-PI * PI / 6.0, 0.5));
    for n in 1..=n_max as i32 {
        atoms.push((2f64.powi(n) / (n * n) as f64, 2f64.powi(-(n + 1))));
    }
    // Residual mass 2^-(N+1) carries sum_{n>N} 2^-(n+1) 2^n/n^2 = tail/2,
    // so the sentinel sits at 2^N * sum_{n>N} 1/n^2.
    let sentinel = 2f64.powi(n_max as i32) * basel_tail(n_max);
    atoms.push((sentinel, 2f64.powi(-(n_max as i32 + 1))));
    atoms
}

pub fn std_normal_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

fn x_pdf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * std_normal_pdf(x)
    }
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

fn normal_interval_mass(alpha: f64, beta: f64) -> f64 {
    if alpha > 0.0 {
        std_normal_sf(alpha) - std_normal_sf(beta)
    } else {
        std_normal_cdf(beta) - std_normal_cdf(alpha)
    }
}
