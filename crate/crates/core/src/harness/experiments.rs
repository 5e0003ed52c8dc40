//! The experiment runner. Each experiment draws from the stream named by
//! its id (suffixed with an occurrence counter when a suite repeats one),
//! so adding experiments leaves existing streams untouched.

use super::config::*;
use super::diagnostics::{as_convergence_diagnostic, Reference};
use super::enumerate::{
    enumerated_norms, mc_decoupled_tail, mc_tail, min_decoupling_constant, reverse_triangle_check, AbsoluteLaw,
};
use super::report::{binomial_se, ExperimentReport, Metric, Precision, Verdict};
use crate::cdp::{
    build_iid_counterexample_schedule, check_iid_cdp, default_grid, grid_below, law_ratio, second_moment_t0,
    simulate_schedule, simulate_two_point_counterexample, uniform_integrability_bound, wlln_conditions,
    CounterexampleSchedule,
};
use crate::chaos::{h_kernel_total, ChaosPolynomial};
use crate::distributions::DistributionSpec;
use crate::poisson::{
    integral_second_moment_exact, mehler_apply, multiple_integral, sample_process_with_points,
    simulate_first_chaos_example, simulate_isometry, wiener_ito_explicit, CellSpace, MehlerFunctional, StepKernel,
};
use crate::{Error, Result, Stream};
use rand::Rng;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

/// Factor applied to the sample sizes when a stochastic experiment fails.
pub const RERUN_FACTOR: u64 = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub paths: Option<u64>,
}

/// Runs every experiment of the suite in order.
pub fn run(config: &SuiteConfig, opts: RunOptions) -> Result<Vec<ExperimentReport>> {
    let seed = opts.seed.unwrap_or(config.seed);
    let root = Stream::root(seed);
    let mut seen: HashMap<&str, usize> = HashMap::new();
    config
        .experiments
        .iter()
        .map(|exp| {
            let count = seen.entry(exp.id()).or_insert(0);
            *count += 1;
            let label = if *count == 1 { exp.id().to_string() } else { format!("{}#{count}", exp.id()) };
            let mut exp = exp.clone();
            if let Some(p) = opts.paths {
                exp.set_paths(p);
            }
            run_experiment(&exp, seed, &root.child(&label))
        })
        .collect()
}

/// One experiment; a stochastic experiment with failing verdicts is run
/// once more on a fresh stream with [`RERUN_FACTOR`] times the samples and
/// that second report is final.
pub fn run_experiment(exp: &ExperimentConfig, seed: u64, stream: &Stream) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = dispatch(exp, stream)?;
    if !report.all_pass() && exp.is_stochastic() {
        let mut bigger = exp.clone();
        if let Some(p) = exp.paths() {
            bigger.set_paths(p.saturating_mul(RERUN_FACTOR));
        }
        report = dispatch(&bigger, &stream.child("rerun"))?;
        report.push(Metric::exact("rerun_sample_factor", RERUN_FACTOR as f64));
    }
    report.runtime = Some(start.elapsed());
    Ok(report.stamped(exp.hash(), seed))
}

fn dispatch(exp: &ExperimentConfig, stream: &Stream) -> Result<ExperimentReport> {
    match exp {
        ExperimentConfig::CdpScan(p) => cdp_scan(p),
        ExperimentConfig::CounterexampleIid(p) => counterexample_iid(p, stream),
        ExperimentConfig::CounterexampleTwoPoint(p) => counterexample_two_point(p, stream),
        ExperimentConfig::DecouplingCertify(p) => decoupling_certify(p, stream),
        ExperimentConfig::ReverseTriangle(p) => reverse_triangle(p, stream),
        ExperimentConfig::PoissonExample(p) => simulate_first_chaos_example(p.n_max, p.paths, stream),
        ExperimentConfig::PoissonIsometry(p) => poisson_isometry(p, stream),
        ExperimentConfig::Mehler(p) => mehler(p, stream),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// `t_n = n²/2^n`, the reciprocal of the `n`-th atom of the heavy-tailed law.
pub fn heavy_tailed_level(n: u32) -> f64 {
    (n as f64).powi(2) / 2f64.powi(n as i32)
}

fn cdp_scan(p: &CdpScanParams) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("cdp-scan");
    for d in &p.pass_families {
        let v = check_iid_cdp(d, &grid_below(d, p.pass_t_max)?, p.c_max)?;
        r.push(
            Metric::exact(format!("witness_c[{}]", d.label()), v.witness_c)
                .with_reference(0.0)
                .with_verdict(v.holds && v.witness_c == 0.0),
        );
        // ratio bound below t0 for unit-variance laws
        let t0 = second_moment_t0(d)?;
        let law = d.law()?;
        let grid: Vec<f64> = default_grid(d)?.into_iter().filter(|&t| t <= t0).collect();
        let worst = grid.iter().map(|&t| law_ratio(&law, t)).fold(0.0, f64::max);
        let bound = uniform_integrability_bound(t0);
        r.push(
            Metric::exact(format!("ui_max_ratio[{}]", d.label()), worst)
                .with_reference(bound)
                .with_verdict(worst <= bound),
        );
    }
    for d in &p.fail_families {
        let v = check_iid_cdp(d, &default_grid(d)?, p.c_max)?;
        r.push(
            Metric::exact(format!("max_ratio[{}]", d.label()), v.witness_c)
                .with_reference(p.c_max)
                .with_verdict(!v.holds),
        );
        if matches!(d, DistributionSpec::HeavyTailedExample { .. }) && p.monotone_from < p.monotone_to {
            let law = d.law()?;
            let ratios: Vec<f64> =
                (p.monotone_from..=p.monotone_to).map(|n| law_ratio(&law, heavy_tailed_level(n))).collect();
            let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
            r.push(
                Metric::exact(
                    format!("ratio_increasing[{},n={}..{}]", d.label(), p.monotone_from, p.monotone_to),
                    f64::from(u8::from(increasing)),
                )
                .with_reference(1.0)
                .with_verdict(increasing),
            );
        }
    }
    Ok(r)
}

fn counterexample_iid(p: &IidParams, stream: &Stream) -> Result<ExperimentReport> {
    let schedule = build_iid_counterexample_schedule(&p.dist, p.n_from..=p.n_to)?;
    let terms = wlln_conditions(&schedule.rows(&p.dist), 1.0)?;
    let mut r = ExperimentReport::new("counterexample-iid");
    for (e, w) in schedule.entries.iter().zip(&terms).filter(|(e, _)| e.n >= p.check_from) {
        // A_n - 1 exactly, from rational arithmetic
        let slack = 2.0 * e.t * e.truncated_mean.abs();
        r.push(
            Metric::exact(format!("a_minus_one[n={}]", e.n), e.sum_defect)
                .with_reference(slack)
                .with_verdict(e.sum_defect.abs() <= slack),
        );
        r.push(
            Metric::exact(format!("b[n={}]", e.n), w.b)
                .with_reference(1.0 / e.n as f64)
                .with_verdict(w.b < 1.0 / e.n as f64),
        );
    }
    let Some(last) = schedule.entries.iter().filter(|e| e.k <= p.max_k as u128).max_by_key(|e| e.n) else {
        return Err(Error::NoSchedule(format!("no row has k_n <= {}", p.max_k)));
    };
    r.push(Metric::exact("simulated_n", last.n as f64));
    r.push(Metric::exact("simulated_k", last.k as f64));
    let one = CounterexampleSchedule { entries: vec![last.clone()] };
    let sim = simulate_schedule(&one, &p.dist, p.paths, u128::MAX, stream)?;
    r.metrics.extend(sim.metrics.iter().cloned());
    let name = format!("tail_prob[n={},eps={}]", last.n, p.eps);
    // the configured eps need not be one of the reported levels
    let law = p.dist.law()?;
    let s = stream.child("fixture");
    let sums = (0..p.paths)
        .into_par_iter()
        .map(|i| Ok(last.a * law.sample_sum(&mut s.index(i).rng(), (last.k + 1) as u64)?))
        .collect::<Result<Vec<f64>>>()?;
    let hits = sums.iter().filter(|&&x| (x - 1.0).abs() > p.eps).count() as u64;
    let m = Metric::proportion(format!("fixture_{name}"), hits, p.paths);
    let m = match p.tail_fixture {
        Some(f) => {
            let ok = m.value <= f;
            m.with_reference(f).with_verdict(ok)
        }
        None => m,
    };
    r.push(m);
    Ok(r)
}

fn counterexample_two_point(p: &TwoPointParams, stream: &Stream) -> Result<ExperimentReport> {
    let run = simulate_two_point_counterexample(&p.sequence, p.n_max, p.paths, p.stable_from, stream)?;
    let mut r = run.report;
    if p.paths == 0 {
        return Ok(r);
    }
    let stable = run.z.iter().filter(|z| z[p.stable_from.saturating_sub(1)..].iter().all(|&v| v == 0.0)).count() as u64;
    let m = Metric::proportion(format!("stable_paths[from={}]", p.stable_from), stable, p.paths);
    let ok = m.value >= p.stable_fraction_min;
    r.push(m.with_reference(p.stable_fraction_min).with_verdict(ok));

    let z = &as_convergence_diagnostic(&run.z, &[p.eps], Reference::Cauchy)?[0];
    let m = z.metric("z_cauchy_tail", p.stable_from).expect("in range");
    let ok = m.value <= 1.0 - p.stable_fraction_min;
    r.push(m.with_reference(1.0 - p.stable_fraction_min).with_verdict(ok));

    // Z_{n,1} stays at distance >= 1 from 0; its tail at eps < 1 is 1 for every n
    let limit = 1.0;
    let z1 = &as_convergence_diagnostic(&run.z1, &[p.eps], Reference::Target { c: 0.0 })?[0];
    let (n_min, v_min) =
        z1.values.iter().enumerate().fold((1, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i + 1, v) } else { acc });
    r.push(
        z1.metric("z1_target_tail", n_min)
            .expect("in range")
            .with_reference(p.limit_fraction * limit)
            .with_verdict(v_min >= p.limit_fraction * limit),
    );
    let z1c = &as_convergence_diagnostic(&run.z1, &[p.eps], Reference::Cauchy)?[0];
    r.push(z1c.metric("z1_cauchy_tail", p.stable_from).expect("in range"));
    Ok(r)
}

fn decoupling_certify(p: &DecouplingParams, stream: &Stream) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("decoupling-certify");
    let inst = stream.child("instance");
    for i in 0..p.instances {
        let c = ChaosPolynomial::random(p.degree, p.n, p.support, &p.coefficients, &inst.index(i as u64))?;
        let grid = if p.grid_points == 0 { vec![] } else {
            let z = AbsoluteLaw::coupled(&c)?;
            let zd = AbsoluteLaw::decoupled(&c)?;
            super::enumerate::decoupling_grid(&z, &zd, p.grid_points)
        };
        let k = min_decoupling_constant(&c, &grid)?;
        for (dir, v) in [("coupled_by_decoupled", k.coupled_by_decoupled), ("decoupled_by_coupled", k.decoupled_by_coupled)] {
            r.push(
                Metric::exact(format!("decoupling_constant[instance={i},{dir}]"), v)
                    .with_reference(p.bound)
                    .with_verdict(v.is_finite() && v <= p.bound),
            );
        }
        if i < p.mc_instances {
            let s = stream.child("mc").index(i as u64);
            for (what, law, dec) in [("tail", AbsoluteLaw::coupled(&c)?, false), ("decoupled_tail", AbsoluteLaw::decoupled(&c)?, true)] {
                let v = law.values();
                let threshold = v[v.len() / 2];
                let exact = law.prob_ge(threshold);
                let (est, se) = if dec {
                    mc_decoupled_tail(&c, threshold, p.mc_samples, &s.child(what))?
                } else {
                    mc_tail(&c, threshold, p.mc_samples, &s.child(what))?
                };
                let band = 4.0 * binomial_se(exact, p.mc_samples);
                r.push(
                    Metric::monte_carlo(format!("{what}_mc[instance={i}]"), est, se, p.mc_samples)
                        .with_reference(exact)
                        .with_verdict((est - exact).abs() <= band),
                );
            }
        }
    }

    let mut worst = 0.0f64;
    let rec = stream.child("recoupling");
    for i in 0..p.recoupling_inputs {
        let d = 1 + i % p.recoupling_max_degree.max(1);
        let s = rec.index(i as u64);
        let c = ChaosPolynomial::random(d, p.recoupling_n, p.support, &p.coefficients, &s.child("chaos"))?;
        let x = p.coefficients.sample(&mut s.child("x").rng(), p.recoupling_n)?;
        let copies: Vec<&[f64]> = vec![&x; d];
        worst = worst.max(rel_err(c.evaluate_decoupled(&copies)?, c.evaluate(&x)?));
    }
    r.push(Metric::exact("recoupling_max_rel_error", worst).with_reference(1e-9).with_verdict(worst <= 1e-9));

    let mut worst = 0.0f64;
    let hk = stream.child("h-kernel");
    for i in 0..p.h_kernel_instances {
        let s = hk.index(i as u64);
        let mut rng = s.child("shape").rng();
        let n = rng.random_range(1..=p.h_kernel_max_n.max(1));
        let d = rng.random_range(1..=p.h_kernel_max_degree.max(1).min(n));
        let big_n = n + rng.random_range(0..=1usize);
        let c = ChaosPolynomial::random(d, n, p.support, &p.coefficients, &s.child("chaos"))?;
        let x = p.coefficients.sample(&mut s.child("x").rng(), big_n)?;
        let direct = c.evaluate(&x[..n])?;
        let total = h_kernel_total(&c, &x, big_n)?;
        worst = worst.max(rel_err(total, direct));
    }
    r.push(Metric::exact("h_kernel_max_rel_error", worst).with_reference(1e-9).with_verdict(worst <= 1e-9));
    Ok(r)
}

fn reverse_triangle(p: &ReverseTriangleParams, stream: &Stream) -> Result<ExperimentReport> {
    let mut r = ExperimentReport::new("reverse-triangle");
    let mut cross = 0.0f64;
    let mut ortho = 0.0f64;
    for i in 0..p.instances {
        let d = 1 + i % p.max_degree.max(1);
        let c = ChaosPolynomial::random(d, p.n, p.support, &p.coefficients, &stream.index(i as u64))?;
        let t = reverse_triangle_check(&c, 1.0)?;
        r.push(
            Metric::exact(format!("ratio[instance={i},d={d}]"), t.ratio)
                .with_reference(t.bound)
                .with_verdict(t.ratio <= t.bound * (1.0 + 1e-12)),
        );
        let e = enumerated_norms(&c)?;
        cross = cross.max(rel_err(e.triangle.lhs, t.lhs)).max(rel_err(e.triangle.rhs, t.rhs));
        let scale = e.gram.iter().enumerate().map(|(j, row)| row[j]).fold(1.0f64, f64::max);
        for (j, row) in e.gram.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                if j != k {
                    ortho = ortho.max(v.abs() / scale);
                }
            }
        }
    }
    r.push(Metric::exact("enumeration_max_rel_error", cross).with_reference(1e-9).with_verdict(cross <= 1e-9));
    r.push(Metric::exact("max_cross_moment", ortho).with_reference(1e-9).with_verdict(ortho <= 1e-9));
    Ok(r)
}

fn poisson_isometry(p: &PoissonIsometryParams, stream: &Stream) -> Result<ExperimentReport> {
    let space = Arc::new(CellSpace::new(p.cells.clone())?);
    let mut worst = 0.0f64;
    let ex = stream.child("explicit");
    for i in 0..p.explicit_instances {
        let k = 1 + i % p.explicit_max_degree.max(1);
        let s = ex.index(i as u64);
        let support = crate::numeric::binomial_f64(space.len(), k).min(p.support as f64) as usize;
        let kernel = StepKernel::random(k, space.clone(), support, &p.coefficients, &s.child("kernel"))?;
        let sample = sample_process_with_points(&space, &s.child("eta"));
        worst = worst.max(rel_err(multiple_integral(&kernel, &sample)?, wiener_ito_explicit(&kernel, &sample)?));
    }
    let kernels = p
        .degrees
        .iter()
        .map(|&k| {
            let support = crate::numeric::binomial_f64(space.len(), k).min(p.support as f64) as usize;
            StepKernel::random(k, space.clone(), support, &p.coefficients, &stream.child("kernel").index(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut r = simulate_isometry(&kernels, p.samples, &stream.child("isometry"))?;
    r.metrics.insert(
        0,
        Metric::exact("explicit_formula_max_rel_error", worst).with_reference(1e-9).with_verdict(worst <= 1e-9),
    );
    for (i, k) in kernels.iter().enumerate() {
        r.push(Metric::exact(format!("exact_second_moment[kernel={i},k={}]", k.degree()), integral_second_moment_exact(k)));
    }
    Ok(r)
}

fn mehler(p: &MehlerParams, stream: &Stream) -> Result<ExperimentReport> {
    let space = Arc::new(CellSpace::new(p.cells.clone())?);
    let kernels = (1..=p.degree)
        .map(|k| {
            let support = crate::numeric::binomial_f64(space.len(), k).min(p.support as f64) as usize;
            StepKernel::random(k, space.clone(), support, &p.coefficients, &stream.child("kernel").index(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let f = MehlerFunctional::new(p.constant, kernels)?;
    let mut r = ExperimentReport::new("mehler");
    for (i, &t) in p.t_values.iter().enumerate() {
        let sub = mehler_apply(&f, t, p.outer_paths, p.inner_paths, &stream.child("t").index(i as u64))?;
        r.metrics.extend(sub.metrics);
    }
    Ok(r)
}

/// Verdict summary: `(passed, failed, informational)`.
pub fn tally(reports: &[ExperimentReport]) -> (usize, usize, usize) {
    let mut out = (0, 0, 0);
    for m in reports.iter().flat_map(|r| &r.metrics) {
        match m.verdict {
            Verdict::Pass => out.0 += 1,
            Verdict::Fail => out.1 += 1,
            Verdict::Info => out.2 += 1,
        }
    }
    out
}

/// Whether every Monte Carlo metric carries a standard error.
pub fn stochastic_metrics_have_se(report: &ExperimentReport) -> bool {
    report.metrics.iter().all(|m| match m.precision {
        Precision::MonteCarlo { se, .. } => se.is_finite() && se >= 0.0,
        Precision::Exact => true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_suite() -> SuiteConfig {
        let mut s = SuiteConfig::paper_suite().unwrap();
        for e in &mut s.experiments {
            match e {
                ExperimentConfig::CounterexampleIid(p) => p.paths = 200,
                ExperimentConfig::CounterexampleTwoPoint(p) => p.paths = 500,
                ExperimentConfig::DecouplingCertify(p) => {
                    p.n = 6;
                    p.instances = 3;
                    p.mc_instances = 2;
                    p.mc_samples = 2000;
                    p.recoupling_inputs = 40;
                    p.h_kernel_instances = 10;
                }
                ExperimentConfig::ReverseTriangle(p) => {
                    p.instances = 8;
                    p.n = 8;
                }
                ExperimentConfig::PoissonExample(p) => p.paths = 500,
                ExperimentConfig::PoissonIsometry(p) => p.samples = 5000,
                ExperimentConfig::Mehler(p) => {
                    p.outer_paths = 4;
                    p.inner_paths = 300;
                }
                ExperimentConfig::CdpScan(_) => {}
            }
        }
        s
    }

    #[test]
    fn small_suite_runs_and_is_deterministic() {
        let s = small_suite();
        let a = run(&s, RunOptions::default()).unwrap();
        let b = run(&s, RunOptions::default()).unwrap();
        assert_eq!(a.len(), EXPERIMENT_IDS.len());
        let ja: Vec<String> = a.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        let jb: Vec<String> = b.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        assert_eq!(ja, jb);
        assert!(a.iter().all(stochastic_metrics_have_se));
        for r in &a {
            assert_eq!(r.seed, s.seed);
            assert_eq!(r.config_hash.len(), 64);
            assert!(r.runtime.is_some());
        }
        let other = run(&s, RunOptions { seed: Some(1), paths: None }).unwrap();
        assert_eq!(other[0].metrics, a[0].metrics);
        assert_ne!(other[2].metrics, a[2].metrics);
    }

    #[test]
    fn cdp_scan_metrics() {
        let r = cdp_scan(&CdpScanParams::default()).unwrap();
        for m in r.metrics.iter().filter(|m| m.name.starts_with("witness_c") || m.name.starts_with("ui_max")) {
            assert_eq!(m.verdict, Verdict::Pass, "{m:?}");
        }
        let heavy = r.metric("max_ratio[heavy_tailed_example(200)]").unwrap();
        assert!(heavy.value > 60.0 && heavy.value < 70.0);
        assert_eq!(r.metric("ratio_increasing[heavy_tailed_example(200),n=10..35]").unwrap().verdict, Verdict::Pass);
    }

    #[test]
    fn enumeration_cap_surfaces() {
        let cfg = ExperimentConfig::DecouplingCertify(DecouplingParams { n: 30, ..Default::default() });
        assert!(matches!(run_experiment(&cfg, 0, &Stream::root(0)), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn heavy_level_is_reciprocal_atom() {
        assert_eq!(heavy_tailed_level(1), 0.5);
        assert_eq!(1.0 / heavy_tailed_level(10), 1024.0 / 100.0);
    }
}
