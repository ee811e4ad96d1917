//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use neumann_lab::coeff::{adjoint_coefficients, make_coefficient, CoefficientSpec};
use neumann_lab::config::{MeshSpec, PolePolicy, RunConfig, Windows};
use neumann_lab::error::Error;
use neumann_lab::estimates::{local_lp_norm, run_condition_study, ConditionStudy, Quantity};
use neumann_lab::experiment::{
    defining_identity_record, kernel_slope_records, manufactured_convergence, oracle_box_record, oracle_graph_record,
    poles, representation_record, run_experiment, symmetry_records,
};
use neumann_lab::kernel::{build_kernel, KernelConfig, Mollifier, MOLLIFIER_NORMALIZATION};
use neumann_lab::mesh::{build_box_mesh, Point};
use neumann_lab::report::{emit_report, ReportFormat};
use neumann_lab::solve::{solve_neumann_bounded, NeumannSystem, SolveConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome, Error>;

fn checkerboard() -> CoefficientSpec {
    CoefficientSpec::ScalarCheckerboard { contrast: 10.0, cell_size: 0.25, seed: 0 }
}

fn mollifier() -> Result<Outcome, Error> {
    let mesh = build_box_mesh([1.0; 3], 8)?;
    let m = Mollifier::new([0.5, 0.45, 0.55], 0.3)?;
    let integral = m.integral(&mesh, 5, 8)?;
    let sup = (0..=10_000).map(|i| Mollifier::profile(i as f64 / 10_000.0)).fold(f64::NEG_INFINITY, f64::max);
    let expected = 105.0 / (32.0 * std::f64::consts::PI);
    let bounded = (0..=2_000).map(|i| Mollifier::profile(1.5 * i as f64 / 2_000.0)).all(|v| (0.0..=2.0).contains(&v));
    let pass = (integral - 1.0).abs() <= 1e-6 && (sup - expected).abs() <= 1e-9 && (MOLLIFIER_NORMALIZATION - expected).abs() <= 1e-15 && bounded;
    Ok(Outcome { pass, detail: format!("|∫Φ_ε − 1| = {:.2e}, |sup Φ − 105/(32π)| = {:.2e}, 0 ≤ Φ ≤ 2: {bounded}", (integral - 1.0).abs(), (sup - expected).abs()) })
}

fn defining_identity() -> Result<Outcome, Error> {
    let config = SolveConfig::default();
    let field = make_coefficient(checkerboard())?;
    let mesh = build_box_mesh([1.0; 3], 12)?;
    let system = NeumannSystem::new(&mesh, &field, &config)?;
    let k = build_kernel(&system, &[0.5; 3], &KernelConfig::default())?;
    let bounded = defining_identity_record(&system, &k, 20, 11, 1e-8)?;
    let gmesh = MeshSpec::Graph { half_width: 1.0, height: 2.0, spacing: 1.0 / 6.0, amplitude: 0.0 }.build()?;
    let gsystem = NeumannSystem::new(&gmesh, &field, &config)?;
    let gk = build_kernel(&gsystem, &[0.0, 0.0, 5.0 / 6.0], &KernelConfig::default())?;
    let graph = defining_identity_record(&gsystem, &gk, 20, 12, 1e-8)?;
    let (b, g) = (bounded.constant.unwrap(), graph.constant.unwrap());
    Ok(Outcome { pass: bounded.pass && graph.pass, detail: format!("max residual bounded {b:.2e}, graph {g:.2e} (tol 1e-8, 20 fields, 12³)") })
}

fn symmetry() -> Result<Outcome, Error> {
    let spec = CoefficientSpec::SkewPerturbed { base: Box::new(CoefficientSpec::Identity { m: 1 }), amplitude: 0.5 };
    let field = make_coefficient(spec)?;
    let adj = adjoint_coefficients(&field);
    let config = SolveConfig::default();
    let run = RunConfig { poles: PolePolicy::Lattice(3), mesh: MeshSpec::Box { extents: [1.0; 3], cells: 16 }, ..Default::default() };
    let mesh = run.mesh.build()?;
    let ys = poles(&run, &mesh)?;
    let system = NeumannSystem::new(&mesh, &field, &config)?;
    let adjoint = NeumannSystem::new(&mesh, &adj, &config)?;
    let kc = KernelConfig::default();
    let kernels = ys.iter().map(|y| build_kernel(&system, y, &kc)).collect::<Result<Vec<_>, _>>()?;
    let recs = symmetry_records(&system, &adjoint, &kernels, &kc, false, 1e-8)?;
    let (defect, asym) = (recs[0].constant.unwrap(), recs[1].constant.unwrap());
    Ok(Outcome {
        pass: defect <= 1e-8 && asym > 1e-3,
        detail: format!("pairing defect {defect:.2e} (tol 1e-8), max |N(x,y) − N(y,x)| = {asym:.3e} (> 1e-3) over {} poles", ys.len()),
    })
}

fn representation() -> Result<Outcome, Error> {
    let field = make_coefficient(checkerboard())?;
    let mesh = build_box_mesh([1.0; 3], 8)?;
    let system = NeumannSystem::new(&mesh, &field, &SolveConfig::default())?;
    let rec = representation_record(&system, 5, 1e-7)?;
    Ok(Outcome { pass: rec.pass, detail: format!("relative L² difference {:.2e} over {} column solves (tol 1e-7)", rec.constant.unwrap(), rec.samples[0][0]) })
}

fn slope_records() -> Result<Vec<neumann_lab::estimates::CheckRecord>, Error> {
    let field = make_coefficient(checkerboard())?;
    let mesh = build_box_mesh([1.0; 3], 24)?;
    let system = NeumannSystem::new(&mesh, &field, &SolveConfig::default())?;
    let k = build_kernel(&system, &[0.5; 3], &KernelConfig::default())?;
    kernel_slope_records(&mesh, &k, &Windows::default())
}

thread_local! {
    static SLOPES: std::cell::OnceCell<Vec<neumann_lab::estimates::CheckRecord>> = const { std::cell::OnceCell::new() };
}

fn slopes(names: &[&str]) -> Result<Outcome, Error> {
    let recs = SLOPES.with(|c| -> Result<_, Error> {
        if c.get().is_none() {
            let _ = c.set(slope_records()?);
        }
        Ok(c.get().unwrap().clone())
    })?;
    let mut pass = true;
    let mut parts = Vec::new();
    for n in names {
        let r = recs.iter().find(|r| r.name == *n).expect("record");
        pass &= r.pass;
        let w = r.window.unwrap();
        parts.push(format!("{n} {:.3} ± {:.3} in [{:.2}, {:.2}]: {}", r.slope.unwrap_or(f64::NAN), r.stderr.unwrap_or(f64::NAN), w[0], w[1], if r.pass { "ok" } else { "out" }));
    }
    Ok(Outcome { pass, detail: parts.join("; ") })
}

fn decay() -> Result<Outcome, Error> {
    slopes(&["pointwise-decay"])
}

fn weak_type() -> Result<Outcome, Error> {
    slopes(&["weak-type-value", "weak-type-gradient"])
}

fn annulus() -> Result<Outcome, Error> {
    slopes(&["annulus-value-l6", "annulus-gradient-l2"])
}

fn local_lp() -> Result<Outcome, Error> {
    let mut o = slopes(&["local-value-l1", "local-gradient-l1"])?;
    let mesh = build_box_mesh([1.0; 3], 4)?;
    let cols = [neumann_lab::field::DiscreteField::zeros(&mesh, 1)];
    let rej_n = matches!(local_lp_norm(&mesh, &cols, &[0.5; 3], 0.25, 3.0, Quantity::Value), Err(Error::ExponentRange { .. }));
    let rej_g = matches!(local_lp_norm(&mesh, &cols, &[0.5; 3], 0.25, 1.5, Quantity::Gradient), Err(Error::ExponentRange { .. }));
    o.pass &= rej_n && rej_g;
    o.detail.push_str(&format!("; p = 3 (N) rejected: {rej_n}, p = 1.5 (DN) rejected: {rej_g}"));
    Ok(o)
}

fn oracle_cube() -> Result<Outcome, Error> {
    let field = make_coefficient(CoefficientSpec::Identity { m: 1 })?;
    let mesh = build_box_mesh([1.0; 3], 32)?;
    let system = NeumannSystem::new(&mesh, &field, &SolveConfig::default())?;
    let k = build_kernel(&system, &[0.5; 3], &KernelConfig::default())?;
    let rec = oracle_box_record(&mesh, &k, [1.0; 3], 20, 0.05)?;
    let l2 = rec.parameters.iter().find(|p| p.0 == "l2-relative-all").unwrap().1;
    Ok(Outcome {
        pass: rec.pass,
        detail: format!("max relative error {:.3e} over {} probes with |x−y| ∈ [4h, d_y/2] (tol 5e-2); ℓ² over all interior probes ≥ 4h {:.3e}", rec.constant.unwrap(), rec.samples.len(), l2),
    })
}

fn oracle_graph() -> Result<Outcome, Error> {
    let field = make_coefficient(CoefficientSpec::Identity { m: 1 })?;
    let spec = MeshSpec::Graph { half_width: 2.0, height: 4.0, spacing: 0.125, amplitude: 0.0 };
    let robin = SolveConfig { far_boundary: "robin-monopole".into(), ..Default::default() };
    let rec = oracle_graph_record(&spec, &field, &robin, 0.10)?;
    let dirichlet = oracle_graph_record(&spec, &field, &SolveConfig::default(), 0.10)?;
    Ok(Outcome {
        pass: rec.pass,
        detail: format!(
            "robin-monopole: width 4 → {:.3e}, width 8 → {:.3e} (tol 1e-1, decreasing); homogeneous-dirichlet for reference: {:.3e}, {:.3e}",
            rec.samples[0][1], rec.samples[1][1], dirichlet.samples[0][1], dirichlet.samples[1][1]
        ),
    })
}

fn manufactured() -> Result<Outcome, Error> {
    let field = make_coefficient(CoefficientSpec::Identity { m: 1 })?;
    let rec = manufactured_convergence([1.0; 3], 8, &field, &SolveConfig::default())?;
    Ok(Outcome { pass: rec.pass, detail: format!("L² errors {:.3e} → {:.3e}, ratio {:.3} in [3.4, 4.6]", rec.samples[0][1], rec.samples[1][1], rec.constant.unwrap()) })
}

fn compatibility() -> Result<Outcome, Error> {
    let field = make_coefficient(checkerboard())?;
    let mesh = build_box_mesh([1.0; 3], 8)?;
    let config = SolveConfig::default();
    let one = |_: &Point, o: &mut [f64]| o[0] = 1.0;
    let rejected = solve_neumann_bounded(&mesh, &field, Some(&one), None, &config);
    let residual = match &rejected {
        Err(Error::Incompatible { residual, .. }) => Some(residual[0]),
        _ => None,
    };
    let six = |_: &Point, o: &mut [f64]| o[0] = 6.0;
    let minus = |_: &Point, _: &Point, o: &mut [f64]| o[0] = -1.0;
    let accepted = solve_neumann_bounded(&mesh, &field, Some(&six), Some(&minus), &config).is_ok();
    let pass = residual.is_some_and(|r| (r - 1.0).abs() < 1e-12) && accepted;
    Ok(Outcome { pass, detail: format!("(f, g) = (1, 0) rejected with residual {residual:?}; (6, −1) accepted: {accepted}") })
}

fn conditions() -> Result<Outcome, Error> {
    let out = run_condition_study(&checkerboard(), &ConditionStudy::default(), &SolveConfig::default())?;
    let pass = out.records.iter().all(|r| r.pass) && out.consistent.iter().all(|c| *c);
    let parts: Vec<String> = out
        .records
        .iter()
        .map(|r| {
            let v: Vec<String> = r.samples.iter().map(|s| format!("{:.3}", s[1])).collect();
            let var = r.parameters.iter().find(|p| p.0 == "variation").unwrap().1;
            format!("{} [{}] var {:.1}%", r.name, v.join(" → "), 100.0 * var)
        })
        .collect();
    Ok(Outcome { pass, detail: format!("{}; flags agree {:?}", parts.join("; "), out.consistent) })
}

fn determinism() -> Result<Outcome, Error> {
    let dir = std::env::temp_dir().join(format!("neumann-lab-determinism-{}", std::process::id()));
    let mut config = RunConfig::parse("kind = full-suite\nseed = 17\nstudy.levels = 8,12\nstudy.trials = 4\n")?;
    let mut bytes = Vec::new();
    for run in 0..2 {
        config.output = dir.join(format!("run{run}"));
        let report = run_experiment(&config);
        let mut files = emit_report(&report, &config.output, ReportFormat::Json)?;
        files.extend(emit_report(&report, &config.output, ReportFormat::CsvBundle)?);
        let mut all = Vec::new();
        for f in files {
            all.push((f.file_name().unwrap().to_owned(), std::fs::read(&f)?));
        }
        bytes.push(all);
    }
    let _ = std::fs::remove_dir_all(&dir);
    let same = bytes[0] == bytes[1];
    Ok(Outcome { pass: same && !bytes[0].is_empty(), detail: format!("{} files compared, identical: {same}", bytes[0].len()) })
}

fn main() {
    let criteria: [(&str, Check); 14] = [
        ("mollifier normalization", mollifier),
        ("discrete defining identity", defining_identity),
        ("symmetry identity", symmetry),
        ("representation formula", representation),
        ("interior pointwise decay", decay),
        ("weak-type exponents", weak_type),
        ("annulus norms", annulus),
        ("local Lp norms", local_lp),
        ("cube oracle agreement", oracle_cube),
        ("graph-domain oracle", oracle_graph),
        ("manufactured convergence", manufactured),
        ("compatibility enforcement", compatibility),
        ("condition constants stability", conditions),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut run = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id == *f || name.contains(f.as_str())) {
            continue;
        }
        run += 1;
        let start = Instant::now();
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(Ok(o)) => o,
            Ok(Err(e)) => Outcome { pass: false, detail: format!("error: {e}") },
            Err(_) => Outcome { pass: false, detail: "panicked".into() },
        };
        if !outcome.pass {
            failed += 1;
        }
        println!("criterion {id} {:<30} {} [{:.1}s] {}", name, if outcome.pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64(), outcome.detail);
    }
    println!("acceptance: {} of {run} criteria pass", run - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
