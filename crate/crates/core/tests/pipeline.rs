use neumann_lab::coeff::CoefficientSpec;
use neumann_lab::config::{DataSpec, MeshSpec, PolePolicy, RunConfig};
use neumann_lab::experiment::{experiment, experiment_names, run_experiment};
use neumann_lab::report::{emit_report, ReportFormat};
use neumann_lab::Error;

fn small(kind: &str) -> RunConfig {
    RunConfig {
        kind: kind.into(),
        seed: 7,
        mesh: MeshSpec::Box { extents: [1.0; 3], cells: 8 },
        coefficient: CoefficientSpec::ScalarCheckerboard { contrast: 10.0, cell_size: 0.25, seed: 0 },
        ..Default::default()
    }
}

#[test]
fn config_round_trips_through_text() {
    let configs = [
        small("solve"),
        RunConfig {
            kind: "kernel".into(),
            mesh: MeshSpec::Graph { half_width: 1.0, height: 2.0, spacing: 0.25, amplitude: 0.25 },
            coefficient: CoefficientSpec::SkewPerturbed { base: Box::new(CoefficientSpec::Identity { m: 2 }), amplitude: 0.5 },
            poles: PolePolicy::Lattice(3),
            data: DataSpec::Constant { f: 0.0, g: 1.0 },
            study_levels: vec![8, 12],
            ..Default::default()
        },
    ];
    for c in configs {
        let text = c.to_key_value();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(back.to_key_value(), text);
    }
}

#[test]
fn reports_are_deterministic() {
    for kind in ["verify-coeff", "solve", "kernel"] {
        let a = run_experiment(&small(kind));
        let b = run_experiment(&small(kind));
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap(), "{kind}");
        assert!(a.failures.is_empty(), "{kind}: {:?}", a.failures);
    }
}

#[test]
fn emitted_bundles_are_byte_identical() {
    let report = run_experiment(&small("kernel"));
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for format in [ReportFormat::Json, ReportFormat::CsvBundle] {
        let p1 = emit_report(&report, d1.path(), format).unwrap();
        let p2 = emit_report(&report, d2.path(), format).unwrap();
        assert_eq!(p1.len(), p2.len());
        for (a, b) in p1.iter().zip(&p2) {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
    }
}

#[test]
fn registry_resolves_every_name() {
    for name in experiment_names() {
        assert_eq!(experiment(name).unwrap().name(), name);
    }
    assert!(matches!(experiment("nope"), Err(Error::UnknownStrategy { .. })));
}

#[test]
fn incompatible_data_is_reported_not_solved() {
    let mut c = small("solve");
    c.data = DataSpec::Constant { f: 1.0, g: 0.0 };
    let report = run_experiment(&c);
    let failure = report.failures.iter().find(|f| f.stage == "compatibility").expect("compatibility failure");
    assert_eq!(failure.exit_code, 1);
    assert!(failure.residual.as_ref().unwrap()[0].abs() > 0.5);
    assert_eq!(report.exit_code(), 1);
}
