use neumann_lab::coeff::{adjoint_coefficients, make_coefficient, CoefficientField, CoefficientSpec};
use neumann_lab::discretize::{assemble_stiffness, gradient_norm_sq};
use neumann_lab::estimates::{annulus_norms, distribution_function, fit_power_law, local_lp_norm, Quantity};
use neumann_lab::field::DiscreteField;
use neumann_lab::kernel::relative_difference;
use neumann_lab::mesh::{build_box_mesh, Mesh};
use neumann_lab::oracle::{BoxNeumannOracle, SeriesConfig};
use neumann_lab::solve::{NeumannSystem, SolveConfig};
use proptest::prelude::*;

const ORDER: usize = 2;

fn coefficient(m: usize, seed: u64, lambda: f64, spread: f64, skew: f64) -> CoefficientField {
    let base = CoefficientSpec::CellwiseRandom { m, lambda, bound: lambda * spread, cell_size: 0.5, seed };
    let spec = if skew > 0.0 { CoefficientSpec::SkewPerturbed { base: Box::new(base), amplitude: skew } } else { base };
    make_coefficient(spec).unwrap()
}

fn field(mesh: &Mesh, m: usize, raw: &[f64]) -> DiscreteField {
    DiscreteField::from_values(mesh, m, raw[..mesh.node_count() * m].to_vec()).unwrap()
}

fn compatible_load(raw: &[f64], m: usize) -> Vec<f64> {
    let n = raw.len() / m;
    let mut load = raw[..n * m].to_vec();
    for i in 0..m {
        let mean = (0..n).map(|p| load[p * m + i]).sum::<f64>() / n as f64;
        for p in 0..n {
            load[p * m + i] -= mean;
        }
    }
    load
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn form_is_coercive(m in 1usize..3, seed in 0u64..1000, lambda in 0.2..2.0f64, spread in 1.0..8.0f64,
                        skew in 0.0..0.6f64, raw in values(250)) {
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let a = coefficient(m, seed, lambda, spread, skew);
        let k = assemble_stiffness(&mesh, &a, ORDER).unwrap();
        let u = field(&mesh, m, &raw);
        let energy = gradient_norm_sq(&mesh, &u, ORDER).unwrap();
        prop_assert!(k.form(&u, &u) >= a.lambda() * energy * (1.0 - 1e-10));
    }

    #[test]
    fn form_is_bounded(m in 1usize..3, seed in 0u64..1000, lambda in 0.2..2.0f64, spread in 1.0..8.0f64,
                       skew in 0.0..0.6f64, ru in values(250), rv in values(250)) {
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let a = coefficient(m, seed, lambda, spread, skew);
        let k = assemble_stiffness(&mesh, &a, ORDER).unwrap();
        let (u, v) = (field(&mesh, m, &ru), field(&mesh, m, &rv));
        let bound = a.bound() * (gradient_norm_sq(&mesh, &u, ORDER).unwrap() * gradient_norm_sq(&mesh, &v, ORDER).unwrap()).sqrt();
        prop_assert!(k.form(&u, &v).abs() <= bound * (1.0 + 1e-10));
    }

    #[test]
    fn adjoint_form_is_transposed(seed in 0u64..1000, skew in 0.0..0.6f64, ru in values(250), rv in values(250)) {
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let a = coefficient(2, seed, 1.0, 4.0, skew);
        let k = assemble_stiffness(&mesh, &a, ORDER).unwrap();
        let kt = assemble_stiffness(&mesh, &adjoint_coefficients(&a), ORDER).unwrap();
        let (u, v) = (field(&mesh, 2, &ru), field(&mesh, 2, &rv));
        let (x, y) = (k.form(&u, &v), kt.form(&v, &u));
        prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
    }

    #[test]
    fn solution_is_linear_in_data(seed in 0u64..1000, skew in 0.0..0.6f64, alpha in -3.0..3.0f64, beta in -3.0..3.0f64,
                                  r1 in values(125), r2 in values(125)) {
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let a = coefficient(1, seed, 1.0, 4.0, skew);
        let system = NeumannSystem::new(&mesh, &a, &SolveConfig { tolerance: 1e-12, ..Default::default() }).unwrap();
        let (l1, l2) = (compatible_load(&r1, 1), compatible_load(&r2, 1));
        let combined: Vec<f64> = l1.iter().zip(&l2).map(|(x, y)| alpha * x + beta * y).collect();
        let u1 = system.solve_bounded_load(&l1).unwrap().field;
        let u2 = system.solve_bounded_load(&l2).unwrap().field;
        let u = system.solve_bounded_load(&combined).unwrap().field;
        let expected: Vec<f64> = u1.values().iter().zip(u2.values()).map(|(x, y)| alpha * x + beta * y).collect();
        let expected = DiscreteField::from_values(&mesh, 1, expected).unwrap();
        prop_assert!(relative_difference(&u, &expected) < 1e-8);
    }

    #[test]
    fn distribution_is_non_increasing(samples in prop::collection::vec(0.0..10.0f64, 64), lo in 0.01..1.0f64, steps in 2usize..12) {
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let thresholds: Vec<f64> = (0..steps).map(|k| lo * 1.5f64.powi(k as i32)).collect();
        let d = distribution_function(&mesh, &samples, &thresholds).unwrap();
        prop_assert!(d.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(d[0] <= mesh.volume() * (1.0 + 1e-12));
    }

    #[test]
    fn local_norm_grows_with_radius(raw in values(729), r in 0.1..0.3f64, grow in 1.0..1.6f64, p in 1.0..1.45f64,
                                    gradient in any::<bool>()) {
        let mesh = build_box_mesh([1.0; 3], 8).unwrap();
        let u = [field(&mesh, 1, &raw)];
        let q = if gradient { Quantity::Gradient } else { Quantity::Value };
        let small = local_lp_norm(&mesh, &u, &[0.5; 3], r, p, q).unwrap();
        let large = local_lp_norm(&mesh, &u, &[0.5; 3], r * grow, p, q).unwrap();
        prop_assert!(large >= small * (1.0 - 1e-12));
    }

    #[test]
    fn annulus_norms_shrink_with_radius(raw in values(729), r in 0.5..0.7f64, grow in 1.0..1.4f64) {
        let mesh = build_box_mesh([1.0; 3], 8).unwrap();
        let u = [field(&mesh, 1, &raw)];
        let (v0, g0) = annulus_norms(&mesh, &u, &[0.5; 3], r).unwrap();
        let (v1, g1) = annulus_norms(&mesh, &u, &[0.5; 3], r * grow).unwrap();
        prop_assert!(v1 <= v0 * (1.0 + 1e-12) && g1 <= g0 * (1.0 + 1e-12));
    }

    #[test]
    fn power_fit_recovers_exact_laws(c in 0.01..100.0f64, s in -4.0..4.0f64, lo in 0.01..1.0f64, n in 2usize..10) {
        let samples: Vec<(f64, f64)> = (0..n).map(|k| {
            let r = lo * 1.3f64.powi(k as i32);
            (r, c * r.powf(s))
        }).collect();
        let fit = fit_power_law(&samples).unwrap();
        prop_assert!((fit.slope - s).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
        prop_assert!(fit.stderr < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn box_oracle_is_symmetric(x in prop::array::uniform3(0.1..0.9f64), y in prop::array::uniform3(0.1..0.9f64)) {
        let d = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt();
        prop_assume!(d > 0.05);
        let o = BoxNeumannOracle::unit_cube(SeriesConfig::default()).unwrap();
        let a = o.neumann(&x, &y).unwrap().value;
        let b = o.neumann(&y, &x).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
    }
}
