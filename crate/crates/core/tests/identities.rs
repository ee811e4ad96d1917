use neumann_lab::coeff::{adjoint_coefficients, make_coefficient, CoefficientSpec};
use neumann_lab::config::MeshSpec;
use neumann_lab::discretize::{boundary_weights, gradient_norm_sq, estimate_poincare_constant};
use neumann_lab::estimates::{caccioppoli_check, l2_error};
use neumann_lab::experiment::{defining_identity_record, manufactured_convergence, representation_record};
use neumann_lab::field::DiscreteField;
use neumann_lab::kernel::{build_kernel, check_defining_identity, check_symmetry_identity, KernelConfig};
use neumann_lab::mesh::{build_box_mesh, Point};
use neumann_lab::solve::{solve_neumann_bounded, NeumannSystem, SolveConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn checkerboard() -> CoefficientSpec {
    CoefficientSpec::ScalarCheckerboard { contrast: 10.0, cell_size: 0.25, seed: 0 }
}

#[test]
fn defining_identity_bounded() {
    let mesh = build_box_mesh([1.0; 3], 12).unwrap();
    let field = make_coefficient(checkerboard()).unwrap();
    let system = NeumannSystem::new(&mesh, &field, &SolveConfig::default()).unwrap();
    let k = build_kernel(&system, &[0.5; 3], &KernelConfig::default()).unwrap();
    let rec = defining_identity_record(&system, &k, 10, 1, 1e-8).unwrap();
    assert!(rec.pass, "residual {:?}", rec.constant);
}

#[test]
fn defining_identity_graph_both_far_conditions() {
    let field = make_coefficient(checkerboard()).unwrap();
    for (far, amplitude) in [("homogeneous-dirichlet", 0.0), ("robin-monopole", 0.0), ("homogeneous-dirichlet", 1.0 / 6.0)] {
        let mesh = MeshSpec::Graph { half_width: 1.0, height: 2.0, spacing: 1.0 / 6.0, amplitude }.build().unwrap();
        let config = SolveConfig { far_boundary: far.into(), ..Default::default() };
        let system = NeumannSystem::new(&mesh, &field, &config).unwrap();
        let y = mesh.nodes()[mesh.nearest_node(&[0.0, 0.0, 5.0 / 6.0]).unwrap()];
        let k = build_kernel(&system, &y, &KernelConfig::default()).unwrap();
        let rec = defining_identity_record(&system, &k, 10, 2, 1e-8).unwrap();
        assert!(rec.pass, "{far} amplitude {amplitude}: residual {:?}", rec.constant);
    }
}

#[test]
fn constant_test_field_has_zero_residual() {
    let mesh = build_box_mesh([1.0; 3], 12).unwrap();
    let field = make_coefficient(CoefficientSpec::CellwiseRandom { m: 2, lambda: 1.0, bound: 5.0, cell_size: 0.25, seed: 9 }).unwrap();
    let system = NeumannSystem::new(&mesh, &field, &SolveConfig::default()).unwrap();
    let k = build_kernel(&system, &[0.5; 3], &KernelConfig::default()).unwrap();
    let phi = DiscreteField::interpolate(&mesh, 2, |_, o| o.copy_from_slice(&[3.0, -1.5]));
    let r = check_defining_identity(&system, &k, &phi).unwrap();
    assert!(r.iter().all(|v| v.abs() < 1e-10), "{r:?}");
}

#[test]
fn symmetry_identity_for_a_skew_coefficient() {
    let spec = CoefficientSpec::SkewPerturbed { base: Box::new(checkerboard()), amplitude: 0.5 };
    let field = make_coefficient(spec).unwrap();
    let adj = adjoint_coefficients(&field);
    let mesh = build_box_mesh([1.0; 3], 12).unwrap();
    let config = SolveConfig::default();
    let system = NeumannSystem::new(&mesh, &field, &config).unwrap();
    let adjoint = NeumannSystem::new(&mesh, &adj, &config).unwrap();
    let kc = KernelConfig::default();
    let (x, y): (Point, Point) = ([0.5, 0.5, 0.5], [7.0 / 12.0, 5.0 / 12.0, 0.5]);
    let n_y = build_kernel(&system, &y, &kc).unwrap();
    let a_x = build_kernel(&adjoint, &x, &kc).unwrap();
    assert!(check_symmetry_identity(&n_y, &a_x).unwrap() < 1e-8);
    assert!(check_symmetry_identity(&n_y, &n_y).is_err());
}

#[test]
fn representation_reproduces_solves() {
    let mesh = build_box_mesh([1.0; 3], 6).unwrap();
    let field = make_coefficient(checkerboard()).unwrap();
    let system = NeumannSystem::new(&mesh, &field, &SolveConfig::default()).unwrap();
    let rec = representation_record(&system, 4, 1e-7).unwrap();
    assert!(rec.pass, "difference {:?}", rec.constant);
}

#[test]
fn manufactured_cosine_converges_at_second_order() {
    let field = make_coefficient(CoefficientSpec::Identity { m: 1 }).unwrap();
    let rec = manufactured_convergence([1.0; 3], 8, &field, &SolveConfig::default()).unwrap();
    assert!(rec.pass, "ratio {:?}", rec.constant);
}

#[test]
fn poincare_inequality_holds_on_mean_zero_fields() {
    let mesh = build_box_mesh([1.0; 3], 6).unwrap();
    let c = estimate_poincare_constant(&mesh).unwrap().constant;
    let b = boundary_weights(&mesh);
    let total: f64 = b.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let mut v: Vec<f64> = (0..mesh.node_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = v.iter().zip(&b).map(|(x, w)| x * w).sum::<f64>() / total;
        v.iter_mut().for_each(|x| *x -= mean);
        let u = DiscreteField::from_values(&mesh, 1, v).unwrap();
        let l2 = l2_error(&mesh, &u, &|_, o| o[0] = 0.0).unwrap();
        let grad = gradient_norm_sq(&mesh, &u, 2).unwrap().sqrt();
        assert!(l2 <= c * grad * (1.0 + 1e-8), "{l2} > {c} · {grad}");
    }
}

#[test]
fn poincare_constant_grows_under_nested_refinement() {
    let c: Vec<f64> = [3, 6, 12].iter().map(|n| estimate_poincare_constant(&build_box_mesh([1.0; 3], *n).unwrap()).unwrap().constant).collect();
    assert!(c[0] < c[1] && c[1] < c[2], "{c:?}");
}

#[test]
fn caccioppoli_ratio_is_stable_under_refinement() {
    let field = make_coefficient(checkerboard()).unwrap();
    let pi = std::f64::consts::PI;
    let f = move |x: &Point, o: &mut [f64]| o[0] = (pi * x[0]).cos() * (pi * x[1]).cos() * (pi * x[2]).cos();
    let zero = |_: &Point, o: &mut [f64]| o[0] = 0.0;
    let ratios: Vec<f64> = [8, 16]
        .iter()
        .map(|n| {
            let mesh = build_box_mesh([1.0; 3], *n).unwrap();
            let u = solve_neumann_bounded(&mesh, &field, Some(&f), None, &SolveConfig::default()).unwrap().field;
            caccioppoli_check(&mesh, &u, &[0.5; 3], 0.5, &f, &zero).unwrap().ratio
        })
        .collect();
    assert!((ratios[0] - ratios[1]).abs() <= 0.3 * ratios[1], "{ratios:?}");
}
