//! Structured experiment reports and their JSON-lines / CSV writers.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Duration;

pub const SCHEMA_VERSION: u32 = 1;

/// JSON has no infinities; non-finite values travel as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
pub mod json_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Recorded value without an acceptance check.
    Info,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// How a metric value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Precision {
    Exact,
    MonteCarlo { se: f64, samples: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    #[serde(with = "json_f64")]
    pub value: f64,
    pub precision: Precision,
    pub verdict: Verdict,
    /// Reference value the verdict compares against, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

impl Metric {
    pub fn exact(name: impl Into<String>, value: f64) -> Self {
        Self { name: name.into(), value, precision: Precision::Exact, verdict: Verdict::Info, reference: None }
    }

    pub fn monte_carlo(name: impl Into<String>, value: f64, se: f64, samples: u64) -> Self {
        Self {
            name: name.into(),
            value,
            precision: Precision::MonteCarlo { se, samples },
            verdict: Verdict::Info,
            reference: None,
        }
    }

    /// Empirical frequency of `hits` out of `samples`, with its plug-in SE.
    pub fn proportion(name: impl Into<String>, hits: u64, samples: u64) -> Self {
        let p = if samples == 0 { 0.0 } else { hits as f64 / samples as f64 };
        Self::monte_carlo(name, p, binomial_se(p, samples), samples)
    }

    pub fn with_verdict(mut self, ok: bool) -> Self {
        self.verdict = Verdict::from_bool(ok);
        self
    }

    pub fn with_reference(mut self, reference: f64) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn se(&self) -> Option<f64> {
        match self.precision {
            Precision::MonteCarlo { se, .. } => Some(se),
            Precision::Exact => None,
        }
    }
}

pub fn binomial_se(p: f64, samples: u64) -> f64 {
    if samples == 0 {
        return 0.0;
    }
    (p * (1.0 - p) / samples as f64).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub metrics: Vec<Metric>,
    /// Wall time; kept out of the serialized form so that reports are pure
    /// functions of (config, seed).
    #[serde(skip)]
    pub runtime: Option<Duration>,
}

impl ExperimentReport {
    pub fn new(experiment_id: impl Into<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment_id: experiment_id.into(),
            config_hash: String::new(),
            seed: 0,
            metrics: Vec::new(),
            runtime: None,
        }
    }

    pub fn stamped(mut self, config_hash: impl Into<String>, seed: u64) -> Self {
        self.config_hash = config_hash.into();
        self.seed = seed;
        self
    }

    pub fn push(&mut self, m: Metric) {
        self.metrics.push(m);
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn all_pass(&self) -> bool {
        self.metrics.iter().all(|m| m.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Metric> {
        self.metrics.iter().filter(|m| m.verdict == Verdict::Fail)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    JsonLines,
    Csv,
}

/// One JSON object per report, newline-terminated.
pub fn write_json_lines<W: Write>(mut w: W, reports: &[ExperimentReport]) -> crate::Result<()> {
    for r in reports {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub const CSV_HEADER: &str =
    "schema_version,experiment_id,config_hash,seed,metric,value,precision,standard_error,samples,reference,verdict";

/// Summary table, one row per metric.
pub fn write_csv<W: Write>(mut w: W, reports: &[ExperimentReport]) -> crate::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        for m in &r.metrics {
            let (prec, se, samples) = match m.precision {
                Precision::Exact => ("exact", String::new(), String::new()),
                Precision::MonteCarlo { se, samples } => ("monte_carlo", fmt_f64(se), samples.to_string()),
            };
            let verdict = match m.verdict {
                Verdict::Pass => "pass",
                Verdict::Fail => "fail",
                Verdict::Info => "info",
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.schema_version,
                csv_field(&r.experiment_id),
                r.config_hash,
                r.seed,
                csv_field(&m.name),
                fmt_f64(m.value),
                prec,
                se,
                samples,
                m.reference.map(fmt_f64).unwrap_or_default(),
                verdict
            )?;
        }
    }
    Ok(())
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
