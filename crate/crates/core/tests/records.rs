//! The structured text records shared by configs and data files.

use cdp_core::chaos::{ChaosPolynomial, ChaosRecord};
use cdp_core::distributions::DistributionSpec;
use cdp_core::harness::report::{write_json_lines, ExperimentReport, Metric};
use cdp_core::poisson::{StepKernel, StepKernelRecord};
use cdp_core::tensors::SymmetricTetrahedralTensor;
use cdp_core::Stream;

#[test]
fn distribution_records() {
    let cases = [
        (r#"{"kind":"two_point","p":0.9}"#, DistributionSpec::TwoPoint { p: 0.9 }),
        (r#"{"kind":"rademacher"}"#, DistributionSpec::Rademacher),
        (r#"{"kind":"heavy_tailed_example"}"#, DistributionSpec::HeavyTailedExample { n_max: 200 }),
        (r#"{"kind":"finite_discrete","atoms":[[-1.0,0.5],[1.0,0.5]]}"#, DistributionSpec::FiniteDiscrete {
            atoms: vec![(-1.0, 0.5), (1.0, 0.5)],
        }),
    ];
    for (text, want) in cases {
        let got: DistributionSpec = serde_json::from_str(text).unwrap();
        assert_eq!(got, want);
        let again: DistributionSpec = serde_json::from_str(&serde_json::to_string(&got).unwrap()).unwrap();
        assert_eq!(again, want);
    }
    assert!(serde_json::from_str::<DistributionSpec>(r#"{"kind":"cauchy"}"#).is_err());
}

#[test]
fn tensor_and_chaos_records() {
    let t: SymmetricTetrahedralTensor =
        serde_json::from_str(r#"{"degree":2,"ambient_n":4,"entries":[[[3,0],1.25],[[1,2],-3.0]]}"#).unwrap();
    assert_eq!(t.full_coefficient(&[0, 3]).unwrap(), 1.25);
    assert!(serde_json::from_str::<SymmetricTetrahedralTensor>(
        r#"{"degree":2,"ambient_n":4,"entries":[[[1,1],1.0]]}"#
    )
    .is_err());

    let c = ChaosPolynomial::random(3, 6, 4, &DistributionSpec::Rademacher, &Stream::root(1)).unwrap();
    let record = ChaosRecord::from(c.clone());
    let text = serde_json::to_string(&record).unwrap();
    let back = ChaosPolynomial::try_from(serde_json::from_str::<ChaosRecord>(&text).unwrap()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn kernel_records() {
    let text = r#"{"space":[1.0,2.0],"tensor":{"degree":2,"ambient_n":2,"entries":[[[0,1],3.0]]}}"#;
    let k = StepKernel::from_record(serde_json::from_str::<StepKernelRecord>(text).unwrap()).unwrap();
    assert_eq!(cdp_core::poisson::integral_second_moment_exact(&k), 72.0);
    let mismatch = r#"{"space":[1.0],"tensor":{"degree":2,"ambient_n":2,"entries":[[[0,1],3.0]]}}"#;
    assert!(StepKernel::from_record(serde_json::from_str::<StepKernelRecord>(mismatch).unwrap()).is_err());
}

#[test]
fn reports_are_versioned_json_lines() {
    let mut r = ExperimentReport::new("demo").stamped("h", 3);
    r.push(Metric::exact("x", 1.0));
    let mut buf = Vec::new();
    write_json_lines(&mut buf, &[r.clone(), r]).unwrap();
    let text = String::from_utf8(buf).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["metrics"][0]["precision"]["kind"], "exact");
    }
}
