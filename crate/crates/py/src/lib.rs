//! Python bindings for `cdp_core`.
//!
//! Records cross the boundary as JSON text in the same wire forms the core
//! crate reads and writes, so Python can build them with `json.dumps`.

use std::sync::Arc;

use cdp_core::chaos::{h_kernel_total, ChaosPolynomial, ChaosRecord};
use cdp_core::distributions::DistributionSpec;
use cdp_core::harness::config::SuiteConfig;
use cdp_core::harness::experiments::{run, RunOptions};
use cdp_core::harness::report::write_json_lines;
use cdp_core::poisson::{self, CellSpace, PoissonSample, StepKernel, StepKernelRecord};
use cdp_core::tensors::SymmetricTetrahedralTensor;
use cdp_core::{cdp, Stream};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: cdp_core::Error) -> PyErr {
    match e {
        cdp_core::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(json_err)
}

/// A univariate law, e.g. `Distribution('{"kind": "two_point", "p": 0.9}')`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Distribution {
    spec: DistributionSpec,
}

#[pymethods]
impl Distribution {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let spec: DistributionSpec = serde_json::from_str(spec_json).map_err(json_err)?;
        spec.law().map_err(err)?;
        Ok(Self { spec })
    }

    #[staticmethod]
    fn rademacher() -> Self {
        Self { spec: DistributionSpec::Rademacher }
    }

    #[staticmethod]
    fn two_point(p: f64) -> PyResult<Self> {
        Self::checked(DistributionSpec::TwoPoint { p })
    }

    #[staticmethod]
    fn gaussian(mean: f64, sd: f64) -> PyResult<Self> {
        Self::checked(DistributionSpec::Gaussian { mean, sd })
    }

    #[staticmethod]
    #[pyo3(signature = (n_max = 200))]
    fn heavy_tailed(n_max: u32) -> PyResult<Self> {
        Self::checked(DistributionSpec::HeavyTailedExample { n_max })
    }

    #[staticmethod]
    fn finite_discrete(atoms: Vec<(f64, f64)>) -> PyResult<Self> {
        Self::checked(DistributionSpec::FiniteDiscrete { atoms })
    }

    fn sample(&self, count: usize, seed: u64) -> PyResult<Vec<f64>> {
        self.spec.sample(&mut Stream::root(seed).rng(), count).map_err(err)
    }

    fn tail_prob(&self, u: f64) -> PyResult<f64> {
        self.spec.tail_prob(u).map_err(err)
    }

    fn truncated_mean(&self, u: f64) -> PyResult<f64> {
        self.spec.truncated_mean(u).map_err(err)
    }

    fn truncated_variance(&self, u: f64) -> PyResult<f64> {
        self.spec.truncated_variance(u).map_err(err)
    }

    fn cdp_ratio(&self, t: f64) -> PyResult<f64> {
        cdp::cdp_ratio(&self.spec, t).map_err(err)
    }

    /// Verdict as JSON; the default grid is used when `t_grid` is omitted.
    #[pyo3(signature = (c_max, t_grid = None))]
    fn check_cdp(&self, c_max: f64, t_grid: Option<Vec<f64>>) -> PyResult<String> {
        let grid = match t_grid {
            Some(g) => g,
            None => cdp::default_grid(&self.spec).map_err(err)?,
        };
        to_json(&cdp::check_iid_cdp(&self.spec, &grid, c_max).map_err(err)?)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.spec)
    }

    fn __repr__(&self) -> String {
        format!("Distribution({})", self.spec.label())
    }
}

impl Distribution {
    fn checked(spec: DistributionSpec) -> PyResult<Self> {
        spec.law().map_err(err)?;
        Ok(Self { spec })
    }
}

/// Symmetric coefficient array with vanishing diagonals.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Tensor {
    inner: SymmetricTetrahedralTensor,
}

#[pymethods]
impl Tensor {
    /// `entries` holds `(indices, value)` pairs; any ordering of the indices
    /// names the same coefficient.
    #[new]
    fn new(degree: usize, ambient_n: usize, entries: Vec<(Vec<usize>, f64)>) -> PyResult<Self> {
        let inner = SymmetricTetrahedralTensor::from_entries(degree, ambient_n, entries).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(json_err)? })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn ambient_n(&self) -> usize {
        self.inner.ambient_n()
    }

    fn full_coefficient(&self, indices: Vec<usize>) -> PyResult<f64> {
        self.inner.full_coefficient(&indices).map_err(err)
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&x).map_err(err)
    }

    fn l2_norm_sq(&self) -> f64 {
        self.inner.l2_norm_sq()
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }
}

/// Sum of homogeneous tetrahedral forms of degrees `0..=degree`.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Chaos {
    inner: ChaosPolynomial,
}

#[pymethods]
impl Chaos {
    #[new]
    fn new(degree: usize, ambient_n: usize, parts: Vec<Tensor>) -> PyResult<Self> {
        let parts = parts.into_iter().map(|t| t.inner).collect();
        Ok(Self { inner: ChaosPolynomial::new(degree, ambient_n, parts).map_err(err)? })
    }

    #[staticmethod]
    fn random(degree: usize, ambient_n: usize, support: usize, coefficients: &Distribution, seed: u64) -> PyResult<Self> {
        let inner = ChaosPolynomial::random(degree, ambient_n, support, &coefficients.spec, &Stream::root(seed))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let record: ChaosRecord = serde_json::from_str(text).map_err(json_err)?;
        Ok(Self { inner: ChaosPolynomial::try_from(record).map_err(err)? })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn ambient_n(&self) -> usize {
        self.inner.ambient_n()
    }

    fn part(&self, k: usize) -> Option<Tensor> {
        self.inner.part(k).map(|t| Tensor { inner: t.clone() })
    }

    fn evaluate(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&x).map_err(err)
    }

    /// Value on `degree` independent copies of the input.
    fn evaluate_decoupled(&self, copies: Vec<Vec<f64>>) -> PyResult<f64> {
        let refs: Vec<&[f64]> = copies.iter().map(Vec::as_slice).collect();
        self.inner.evaluate_decoupled(&refs).map_err(err)
    }

    /// Sum of the kernel over all ordered distinct index tuples from `0..big_n`.
    fn h_kernel_total(&self, x: Vec<f64>, big_n: usize) -> PyResult<f64> {
        h_kernel_total(&self.inner, &x, big_n).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&ChaosRecord::from(self.inner.clone()))
    }
}

/// Step kernel on a finite cell space.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Kernel {
    inner: StepKernel,
}

#[pymethods]
impl Kernel {
    #[new]
    fn new(cells: Vec<f64>, tensor: &Tensor) -> PyResult<Self> {
        let space = Arc::new(CellSpace::new(cells).map_err(err)?);
        Ok(Self { inner: StepKernel::new(tensor.inner.clone(), space).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let record: StepKernelRecord = serde_json::from_str(text).map_err(json_err)?;
        Ok(Self { inner: StepKernel::from_record(record).map_err(err)? })
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    fn cells(&self) -> Vec<f64> {
        self.inner.space().measures().to_vec()
    }

    /// `E I_k(f)^2` in closed form.
    fn second_moment(&self) -> f64 {
        poisson::integral_second_moment_exact(&self.inner)
    }

    fn integral(&self, sample: &Sample) -> PyResult<f64> {
        poisson::multiple_integral(&self.inner, &sample.inner).map_err(err)
    }

    fn integral_explicit(&self, sample: &Sample) -> PyResult<f64> {
        poisson::wiener_ito_explicit(&self.inner, &sample.inner).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner.to_record())
    }
}

/// Realisation of a Poisson process on a cell space.
#[pyclass(frozen)]
struct Sample {
    inner: PoissonSample,
}

#[pymethods]
impl Sample {
    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.inner.counts.clone()
    }

    /// `(cell, position)` pairs, or `None` when only counts were drawn.
    #[getter]
    fn points(&self) -> Option<Vec<(usize, f64)>> {
        self.inner.points.as_ref().map(|ps| ps.iter().map(|p| (p.cell, p.position)).collect())
    }

    /// Keeps each point independently with probability `t`.
    fn trim(&self, t: f64, seed: u64) -> PyResult<Sample> {
        let inner = poisson::trim_with_stream(&self.inner, t, &Stream::root(seed)).map_err(err)?;
        Ok(Sample { inner })
    }
}

#[pyfunction]
#[pyo3(signature = (cells, seed, with_points = true))]
fn sample_process(cells: Vec<f64>, seed: u64, with_points: bool) -> PyResult<Sample> {
    let space = CellSpace::new(cells).map_err(err)?;
    let stream = Stream::root(seed);
    let inner = if with_points {
        poisson::sample_process_with_points(&space, &stream)
    } else {
        poisson::sample_process(&space, &stream)
    };
    Ok(Sample { inner })
}

/// Runs a suite (a config path, JSON text or `"paper-suite"`) and returns the
/// reports as JSON lines.
#[pyfunction]
#[pyo3(signature = (config = "paper-suite", seed = None, paths = None))]
fn run_suite(py: Python<'_>, config: &str, seed: Option<u64>, paths: Option<u64>) -> PyResult<String> {
    let suite = if config.trim_start().starts_with('{') {
        SuiteConfig::from_json(config)
    } else {
        SuiteConfig::load(config)
    }
    .map_err(err)?;
    let reports = py.detach(|| run(&suite, RunOptions { seed, paths })).map_err(err)?;
    let mut buf = Vec::new();
    write_json_lines(&mut buf, &reports).map_err(err)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// One experiment with its default parameters.
#[pyfunction]
#[pyo3(signature = (experiment_id, seed = 0, paths = None))]
fn run_experiment(py: Python<'_>, experiment_id: &str, seed: u64, paths: Option<u64>) -> PyResult<String> {
    let suite = SuiteConfig::single(experiment_id, seed).map_err(err)?;
    let reports = py.detach(|| run(&suite, RunOptions { seed: None, paths })).map_err(err)?;
    to_json(&reports[0])
}

#[pymodule]
fn cdp_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Distribution>()?;
    m.add_class::<Tensor>()?;
    m.add_class::<Chaos>()?;
    m.add_class::<Kernel>()?;
    m.add_class::<Sample>()?;
    m.add_function(wrap_pyfunction!(sample_process, m)?)?;
    m.add_function(wrap_pyfunction!(run_suite, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
