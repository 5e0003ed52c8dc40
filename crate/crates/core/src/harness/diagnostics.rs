//! Empirical tail curves for almost-sure convergence of simulated
//! trajectories.

use crate::harness::report::{binomial_se, Metric};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// What a trajectory is compared with from step `n` on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// `sup_{n<=l<=m} |Z_n - Z_l| >= ε`, the Cauchy-type oscillation.
    Cauchy,
    /// `sup_{n<=l<=m} |Z_l - c| >= ε`.
    Target { c: f64 },
}

/// `n ↦ P(event from step n on)` for one `ε`, `n = 1..=m`, with binomial SEs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub eps: f64,
    pub values: Vec<f64>,
    pub se: Vec<f64>,
    pub paths: u64,
}

impl ConvergenceCurve {
    /// Value at step `n` (1-based).
    pub fn at(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.values.get(i)).copied()
    }

    pub fn se_at(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.se.get(i)).copied()
    }

    /// `curve[n]` as a proportion metric.
    pub fn metric(&self, prefix: &str, n: usize) -> Option<Metric> {
        let v = self.at(n)?;
        let hits = (v * self.paths as f64).round() as u64;
        Some(Metric::proportion(format!("{prefix}[eps={},n={n}]", self.eps), hits, self.paths))
    }
}

/// For each `ε`, the fraction of paths whose trajectory moves by at least
/// `ε` (relative to the reference) somewhere in `n..=m`, where `m` is the
/// common trajectory length. Because the window `n..=m'` only grows with
/// `m'`, the supremum over horizons is attained at `m' = m`.
pub fn as_convergence_diagnostic(
    paths: &[Vec<f64>],
    eps_levels: &[f64],
    reference: Reference,
) -> Result<Vec<ConvergenceCurve>> {
    let Some(first) = paths.first() else {
        return Err(Error::Parameter("no trajectories".into()));
    };
    let m = first.len();
    if paths.iter().any(|p| p.len() != m) {
        return Err(Error::Parameter("trajectories must share one length".into()));
    }
    if let Some(bad) = eps_levels.iter().find(|e| e.partial_cmp(&&0.0) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::Parameter(format!("eps must be positive, got {bad}")));
    }
    // per path and n: sup over the window n..=m
    let sups: Vec<Vec<f64>> = paths
        .iter()
        .map(|z| match reference {
            Reference::Target { c } => {
                let mut out = vec![0.0; m];
                let mut run = 0.0f64;
                for l in (0..m).rev() {
                    run = run.max((z[l] - c).abs());
                    out[l] = run;
                }
                out
            }
            Reference::Cauchy => {
                // running max and min of z over l..m
                let mut out = vec![0.0; m];
                let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
                for l in (0..m).rev() {
                    hi = hi.max(z[l]);
                    lo = lo.min(z[l]);
                    out[l] = (hi - z[l]).max(z[l] - lo);
                }
                out
            }
        })
        .collect();
    let count = paths.len() as u64;
    Ok(eps_levels
        .iter()
        .map(|&eps| {
            let values: Vec<f64> = (0..m)
                .map(|l| sups.iter().filter(|s| s[l] >= eps).count() as f64 / count as f64)
                .collect();
            let se = values.iter().map(|&p| binomial_se(p, count)).collect();
            ConvergenceCurve { eps, values, se, paths: count }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Stream;
    use rand::Rng;

    #[test]
    fn constant_trajectories_give_zero() {
        let paths = vec![vec![3.0; 10]; 5];
        for r in [Reference::Cauchy, Reference::Target { c: 3.0 }] {
            let c = as_convergence_diagnostic(&paths, &[0.1, 1.0], r).unwrap();
            assert!(c.iter().all(|c| c.values.iter().all(|&v| v == 0.0)));
        }
        let off = as_convergence_diagnostic(&paths, &[0.5], Reference::Target { c: 0.0 }).unwrap();
        assert!(off[0].values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn errors() {
        assert!(as_convergence_diagnostic(&[], &[0.1], Reference::Cauchy).is_err());
        assert!(as_convergence_diagnostic(&[vec![1.0], vec![]], &[0.1], Reference::Cauchy).is_err());
        assert!(as_convergence_diagnostic(&[vec![1.0]], &[0.0], Reference::Cauchy).is_err());
    }

    #[test]
    fn cauchy_window() {
        let c = as_convergence_diagnostic(&[vec![0.0, 1.0, 1.0, 0.9]], &[0.5], Reference::Cauchy).unwrap();
        assert_eq!(c[0].values, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c[0].at(1), Some(1.0));
        assert_eq!(c[0].at(0), None);
    }

    #[test]
    fn rademacher_partial_windows_match_exact() {
        // i.i.d. signs: the window n..=m is constant with probability 2^-(m-n)
        let m = 12;
        let paths: Vec<Vec<f64>> = (0..20_000u64)
            .map(|i| {
                let mut rng = Stream::root(7).index(i).rng();
                (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
            })
            .collect();
        let curve = &as_convergence_diagnostic(&paths, &[1.0], Reference::Cauchy).unwrap()[0];
        for n in 1..=m {
            let exact = 1.0 - 0.5f64.powi((m - n) as i32);
            let se = binomial_se(exact, paths.len() as u64).max(1e-12);
            assert!((curve.at(n).unwrap() - exact).abs() <= 4.0 * se, "n={n}");
        }
        assert!(curve.values.windows(2).all(|w| w[1] <= w[0]));
        assert!(curve.at(4).unwrap() > 0.99);
    }
}
