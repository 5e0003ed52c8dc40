//! Suite configuration: a JSON document naming a root seed and a list of
//! experiments with their parameters. Omitted parameters take the defaults
//! below, which are the sizes used by the acceptance suite.

use crate::cdp::{TwoPointSequence, DEFAULT_C_MAX};
use crate::distributions::DistributionSpec;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const PAPER_SUITE_NAME: &str = "paper-suite";
pub const PAPER_SUITE_JSON: &str = include_str!("../../configs/paper-suite.json");

/// Pilot estimate 0.7571 (SE 0.0043, seed 777, 10^4 paths) plus 4 SE.
pub const PILOT_TAIL_FIXTURE: f64 = 0.7743;

pub const EXPERIMENT_IDS: [&str; 8] = [
    "cdp-scan",
    "counterexample-iid",
    "counterexample-two-point",
    "decoupling-certify",
    "reverse-triangle",
    "poisson-example",
    "poisson-isometry",
    "mehler",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub experiments: Vec<ExperimentConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    CdpScan(CdpScanParams),
    CounterexampleIid(IidParams),
    CounterexampleTwoPoint(TwoPointParams),
    DecouplingCertify(DecouplingParams),
    ReverseTriangle(ReverseTriangleParams),
    PoissonExample(PoissonExampleParams),
    PoissonIsometry(PoissonIsometryParams),
    Mehler(MehlerParams),
}

fn gaussian() -> DistributionSpec {
    DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 }
}

fn heavy() -> DistributionSpec {
    DistributionSpec::HeavyTailedExample { n_max: 200 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdpScanParams {
    /// Laws expected to pass with witness 0 on the grid `t <= pass_t_max`.
    pub pass_families: Vec<DistributionSpec>,
    pub pass_t_max: f64,
    /// Laws expected to exceed `c_max` on the default grid.
    pub fail_families: Vec<DistributionSpec>,
    pub c_max: f64,
    /// Range of `n` over which the heavy-tailed ratio at `t_n = n²/2^n` must
    /// increase.
    pub monotone_from: u32,
    pub monotone_to: u32,
}

impl Default for CdpScanParams {
    fn default() -> Self {
        let s3 = 3f64.sqrt();
        Self {
            pass_families: vec![
                gaussian(),
                DistributionSpec::Rademacher,
                DistributionSpec::Uniform { a: -s3, b: s3 },
                DistributionSpec::TwoPoint { p: 0.2 },
                DistributionSpec::TwoPoint { p: 0.5 },
                DistributionSpec::TwoPoint { p: 0.8 },
            ],
            pass_t_max: 0.25,
            fail_families: vec![heavy()],
            c_max: DEFAULT_C_MAX,
            monotone_from: 10,
            monotone_to: 35,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IidParams {
    pub dist: DistributionSpec,
    pub n_from: u32,
    pub n_to: u32,
    /// First `n` at which the exact WLLN inequalities are checked.
    pub check_from: u32,
    pub paths: u64,
    /// The simulated row is the largest `n` with `k_n` at most this.
    pub max_k: u64,
    pub eps: f64,
    /// Upper bound for the simulated `P(|S_n - 1| > eps)`.
    pub tail_fixture: Option<f64>,
}

impl Default for IidParams {
    fn default() -> Self {
        Self {
            dist: heavy(),
            n_from: 1,
            n_to: 25,
            check_from: 10,
            paths: 10_000,
            max_k: 1_000_000,
            eps: 0.1,
            tail_fixture: Some(PILOT_TAIL_FIXTURE),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPointParams {
    pub sequence: TwoPointSequence,
    pub n_max: usize,
    pub paths: u64,
    pub stable_from: usize,
    pub stable_fraction_min: f64,
    pub eps: f64,
    /// `Z_{n,1}` keeps its tail at `eps` above this fraction of its exact
    /// limit.
    pub limit_fraction: f64,
}

impl Default for TwoPointParams {
    fn default() -> Self {
        Self {
            sequence: TwoPointSequence::Geometric,
            n_max: 40,
            paths: 10_000,
            stable_from: 20,
            stable_fraction_min: 0.99,
            eps: 0.5,
            limit_fraction: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecouplingParams {
    pub degree: usize,
    pub n: usize,
    pub instances: usize,
    pub support: usize,
    pub coefficients: DistributionSpec,
    pub bound: f64,
    pub grid_points: usize,
    pub mc_instances: usize,
    pub mc_samples: u64,
    pub recoupling_inputs: usize,
    pub recoupling_max_degree: usize,
    pub recoupling_n: usize,
    pub h_kernel_instances: usize,
    pub h_kernel_max_n: usize,
    pub h_kernel_max_degree: usize,
}

impl Default for DecouplingParams {
    fn default() -> Self {
        Self {
            degree: 2,
            n: 10,
            instances: 20,
            support: 10,
            coefficients: gaussian(),
            bound: 50.0,
            grid_points: 32,
            mc_instances: 10,
            mc_samples: 20_000,
            recoupling_inputs: 1000,
            recoupling_max_degree: 4,
            recoupling_n: 10,
            h_kernel_instances: 50,
            h_kernel_max_n: 7,
            h_kernel_max_degree: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReverseTriangleParams {
    pub instances: usize,
    pub max_degree: usize,
    pub n: usize,
    pub support: usize,
    pub coefficients: DistributionSpec,
}

impl Default for ReverseTriangleParams {
    fn default() -> Self {
        Self { instances: 50, max_degree: 4, n: 12, support: 8, coefficients: gaussian() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonExampleParams {
    pub n_max: usize,
    pub paths: u64,
}

impl Default for PoissonExampleParams {
    fn default() -> Self {
        Self { n_max: 1000, paths: 10_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoissonIsometryParams {
    pub cells: Vec<f64>,
    pub degrees: Vec<usize>,
    pub support: usize,
    pub coefficients: DistributionSpec,
    pub samples: u64,
    pub explicit_instances: usize,
    pub explicit_max_degree: usize,
}

impl Default for PoissonIsometryParams {
    fn default() -> Self {
        Self {
            cells: vec![0.5, 1.0, 1.5, 2.0, 0.8, 1.2],
            degrees: vec![1, 2, 3],
            support: 4,
            coefficients: gaussian(),
            samples: 100_000,
            explicit_instances: 20,
            explicit_max_degree: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MehlerParams {
    pub cells: Vec<f64>,
    pub degree: usize,
    pub support: usize,
    pub coefficients: DistributionSpec,
    pub constant: f64,
    pub t_values: Vec<f64>,
    pub outer_paths: u64,
    pub inner_paths: u64,
}

impl Default for MehlerParams {
    fn default() -> Self {
        Self {
            cells: vec![1.0, 0.5, 2.0, 1.5],
            degree: 2,
            support: 3,
            coefficients: gaussian(),
            constant: 0.5,
            t_values: vec![0.0, 0.25, 0.5, 1.0],
            outer_paths: crate::poisson::DEFAULT_OUTER_PATHS,
            inner_paths: crate::poisson::DEFAULT_INNER_PATHS,
        }
    }
}

impl ExperimentConfig {
    pub fn id(&self) -> &'static str {
        match self {
            Self::CdpScan(_) => "cdp-scan",
            Self::CounterexampleIid(_) => "counterexample-iid",
            Self::CounterexampleTwoPoint(_) => "counterexample-two-point",
            Self::DecouplingCertify(_) => "decoupling-certify",
            Self::ReverseTriangle(_) => "reverse-triangle",
            Self::PoissonExample(_) => "poisson-example",
            Self::PoissonIsometry(_) => "poisson-isometry",
            Self::Mehler(_) => "mehler",
        }
    }

    /// The experiment with default parameters.
    pub fn default_for(id: &str) -> Result<Self> {
        Ok(match id {
            "cdp-scan" => Self::CdpScan(Default::default()),
            "counterexample-iid" => Self::CounterexampleIid(Default::default()),
            "counterexample-two-point" => Self::CounterexampleTwoPoint(Default::default()),
            "decoupling-certify" => Self::DecouplingCertify(Default::default()),
            "reverse-triangle" => Self::ReverseTriangle(Default::default()),
            "poisson-example" => Self::PoissonExample(Default::default()),
            "poisson-isometry" => Self::PoissonIsometry(Default::default()),
            "mehler" => Self::Mehler(Default::default()),
            other => return Err(Error::UnknownExperiment(other.into())),
        })
    }

    /// Whether verdicts depend on Monte Carlo draws.
    pub fn is_stochastic(&self) -> bool {
        !matches!(self, Self::CdpScan(_) | Self::ReverseTriangle(_))
    }

    /// Replaces the main Monte Carlo sample count.
    pub fn set_paths(&mut self, paths: u64) {
        match self {
            Self::CounterexampleIid(p) => p.paths = paths,
            Self::CounterexampleTwoPoint(p) => p.paths = paths,
            Self::DecouplingCertify(p) => p.mc_samples = paths,
            Self::PoissonExample(p) => p.paths = paths,
            Self::PoissonIsometry(p) => p.samples = paths,
            Self::Mehler(p) => p.inner_paths = paths,
            Self::CdpScan(_) | Self::ReverseTriangle(_) => {}
        }
    }

    pub fn paths(&self) -> Option<u64> {
        match self {
            Self::CounterexampleIid(p) => Some(p.paths),
            Self::CounterexampleTwoPoint(p) => Some(p.paths),
            Self::DecouplingCertify(p) => Some(p.mc_samples),
            Self::PoissonExample(p) => Some(p.paths),
            Self::PoissonIsometry(p) => Some(p.samples),
            Self::Mehler(p) => Some(p.inner_paths),
            Self::CdpScan(_) | Self::ReverseTriangle(_) => None,
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configs serialize");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

impl SuiteConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        // name unknown experiments before serde reports a bare variant error
        if let Some(list) = value.get("experiments").and_then(|v| v.as_array()) {
            for e in list {
                match e.get("experiment").and_then(|v| v.as_str()) {
                    Some(id) if EXPERIMENT_IDS.contains(&id) => {}
                    Some(id) => return Err(Error::UnknownExperiment(id.into())),
                    None => return Err(Error::Config("every experiment needs an \"experiment\" name".into())),
                }
            }
        }
        serde_json::from_value(value).map_err(|e| Error::Config(format!("malformed config: {e}")))
    }

    /// A file path, or the name of a bundled suite.
    pub fn load(source: &str) -> Result<Self> {
        if source == PAPER_SUITE_NAME {
            return Self::paper_suite();
        }
        let path = Path::new(source);
        if !path.exists() {
            return Err(Error::Config(format!("no config file or bundled suite named `{source}`")));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn paper_suite() -> Result<Self> {
        Self::from_json(PAPER_SUITE_JSON)
    }

    /// One experiment with default parameters.
    pub fn single(id: &str, seed: u64) -> Result<Self> {
        Ok(Self { name: id.into(), seed, experiments: vec![ExperimentConfig::default_for(id)?] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_suite_parses_with_every_experiment() {
        let s = SuiteConfig::paper_suite().unwrap();
        assert_eq!(s.name, PAPER_SUITE_NAME);
        let ids: Vec<&str> = s.experiments.iter().map(ExperimentConfig::id).collect();
        assert_eq!(ids, EXPERIMENT_IDS);
        assert_eq!(SuiteConfig::load("paper-suite").unwrap(), s);
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let s = SuiteConfig::from_json(r#"{"name":"x","experiments":[{"experiment":"mehler","degree":1}]}"#).unwrap();
        match &s.experiments[0] {
            ExperimentConfig::Mehler(p) => {
                assert_eq!(p.degree, 1);
                assert_eq!(p.inner_paths, 4096);
            }
            _ => panic!(),
        }
        assert_eq!(s.seed, 0);
    }

    #[test]
    fn config_errors() {
        let unknown = r#"{"name":"x","experiments":[{"experiment":"nope"}]}"#;
        assert!(matches!(SuiteConfig::from_json(unknown), Err(Error::UnknownExperiment(id)) if id == "nope"));
        assert!(matches!(SuiteConfig::from_json("{"), Err(Error::Config(_))));
        let typo = r#"{"name":"x","experiments":[{"experiment":"mehler","degre":1}]}"#;
        assert!(matches!(SuiteConfig::from_json(typo), Err(Error::Config(_))));
        assert!(matches!(SuiteConfig::load("/no/such/file.json"), Err(Error::Config(_))));
        assert!(ExperimentConfig::default_for("x").is_err());
    }

    #[test]
    fn hash_tracks_parameters() {
        let a = ExperimentConfig::default_for("mehler").unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        b.set_paths(10);
        assert_ne!(a.hash(), b.hash());
        assert_eq!(b.paths(), Some(10));
    }
}
