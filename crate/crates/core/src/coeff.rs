//! Coefficient tensors `A^{αβ}_{ij}(x)` for divergence-form systems.
//!
//! A tensor value is stored as a dense `(3m) × (3m)` row-major matrix whose
//! row index is `(α, i) ↦ α·m + i` and column index `(β, j) ↦ β·m + j`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

const DIM: usize = 3;

/// Fixed skew generator used by [`CoefficientSpec::SkewPerturbed`].
const SKEW: [[f64; 3]; 3] = [[0.0, 1.0, 1.0], [-1.0, 0.0, 1.0], [-1.0, -1.0, 0.0]];

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientSpec {
    Identity { m: usize },
    /// Scalar field taking the values `1` and `contrast` on alternating
    /// lattice cubes of side `cell_size`; the seed parity picks the phase.
    ScalarCheckerboard { contrast: f64, cell_size: f64, seed: u64 },
    /// Independent symmetric tensors per lattice cube, spectrum in
    /// `[lambda, bound]`.
    CellwiseRandom { m: usize, lambda: f64, bound: f64, cell_size: f64, seed: u64 },
    /// `A_base + amplitude · s_{αβ} δ_{ij}` with a fixed skew matrix `s`.
    SkewPerturbed { base: Box<CoefficientSpec>, amplitude: f64 },
    /// `(1 + amplitude · Π_a sin(2π frequency x_a)) δ_{αβ} δ_{ij}`.
    SmoothVmo { m: usize, frequency: f64, amplitude: f64 },
}

impl CoefficientSpec {
    pub fn m(&self) -> usize {
        match self {
            CoefficientSpec::Identity { m } => *m,
            CoefficientSpec::ScalarCheckerboard { .. } => 1,
            CoefficientSpec::CellwiseRandom { m, .. } => *m,
            CoefficientSpec::SkewPerturbed { base, .. } => base.m(),
            CoefficientSpec::SmoothVmo { m, .. } => *m,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CoefficientSpec::Identity { m } => format!("identity(m={m})"),
            CoefficientSpec::ScalarCheckerboard { contrast, cell_size, seed } => {
                format!("checkerboard(contrast={contrast},cell={cell_size},seed={seed})")
            }
            CoefficientSpec::CellwiseRandom { m, lambda, bound, cell_size, seed } => format!(
                "cellwise-random(m={m},lambda={lambda},bound={bound},cell={cell_size},seed={seed})"
            ),
            CoefficientSpec::SkewPerturbed { base, amplitude } => {
                format!("skew-perturbed(base={},amplitude={amplitude})", base.describe())
            }
            CoefficientSpec::SmoothVmo { m, frequency, amplitude } => {
                format!("smooth-vmo(m={m},frequency={frequency},amplitude={amplitude})")
            }
        }
    }
}

/// An evaluable coefficient field with declared ellipticity `λ` and bound `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    spec: CoefficientSpec,
    m: usize,
    lambda: f64,
    bound: f64,
    transposed: bool,
}

pub fn make_coefficient(spec: CoefficientSpec) -> Result<CoefficientField> {
    let (lambda, bound) = declared_bounds(&spec)?;
    let m = spec.m();
    Ok(CoefficientField { spec, m, lambda, bound, transposed: false })
}

fn declared_bounds(spec: &CoefficientSpec) -> Result<(f64, f64)> {
    match spec {
        CoefficientSpec::Identity { m } => {
            if *m == 0 {
                return Err(Error::Config("system size m must be at least 1".into()));
            }
            Ok((1.0, 1.0))
        }
        CoefficientSpec::ScalarCheckerboard { contrast, cell_size, .. } => {
            if !(*contrast > 0.0) || !contrast.is_finite() {
                return Err(Error::NonElliptic(format!("checkerboard contrast {contrast}")));
            }
            if *contrast < 1.0 {
                return Err(Error::Config(format!("checkerboard contrast {contrast} < 1")));
            }
            if !(*cell_size > 0.0) {
                return Err(Error::Config("checkerboard cell size must be positive".into()));
            }
            Ok((1.0, *contrast))
        }
        CoefficientSpec::CellwiseRandom { m, lambda, bound, cell_size, .. } => {
            if *m == 0 {
                return Err(Error::Config("system size m must be at least 1".into()));
            }
            if !(*lambda > 0.0) {
                return Err(Error::NonElliptic(format!("target lambda {lambda}")));
            }
            if !(*bound >= *lambda) || !bound.is_finite() {
                return Err(Error::Config(format!("bound {bound} below lambda {lambda}")));
            }
            if !(*cell_size > 0.0) {
                return Err(Error::Config("cell size must be positive".into()));
            }
            Ok((*lambda, *bound))
        }
        CoefficientSpec::SkewPerturbed { base, amplitude } => {
            if !amplitude.is_finite() {
                return Err(Error::Config("skew amplitude must be finite".into()));
            }
            let (l, b) = declared_bounds(base)?;
            Ok((l, b + amplitude.abs() * 3f64.sqrt()))
        }
        CoefficientSpec::SmoothVmo { m, frequency, amplitude } => {
            if *m == 0 {
                return Err(Error::Config("system size m must be at least 1".into()));
            }
            if !frequency.is_finite() || !amplitude.is_finite() {
                return Err(Error::Config("smooth field parameters must be finite".into()));
            }
            let lambda = 1.0 - amplitude.abs();
            if !(lambda > 0.0) {
                return Err(Error::NonElliptic(format!("amplitude {amplitude} leaves lambda {lambda}")));
            }
            Ok((lambda, 1.0 + amplitude.abs()))
        }
    }
}

fn lattice_index(x: &Point, cell: f64) -> [i64; 3] {
    [
        (x[0] / cell).floor() as i64,
        (x[1] / cell).floor() as i64,
        (x[2] / cell).floor() as i64,
    ]
}

fn cell_seed(seed: u64, idx: [i64; 3]) -> u64 {
    let mut h: u64 = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in idx {
        h ^= v as u64;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

fn eval_spec(spec: &CoefficientSpec, x: &Point, out: &mut [f64]) {
    let m = spec.m();
    let n = DIM * m;
    match spec {
        CoefficientSpec::Identity { .. } => {
            out.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..n {
                out[r * n + r] = 1.0;
            }
        }
        CoefficientSpec::ScalarCheckerboard { contrast, cell_size, seed } => {
            let idx = lattice_index(x, *cell_size);
            let parity = (idx[0] + idx[1] + idx[2] + (*seed % 2) as i64).rem_euclid(2);
            let a = if parity == 0 { *contrast } else { 1.0 };
            out.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..n {
                out[r * n + r] = a;
            }
        }
        CoefficientSpec::CellwiseRandom { lambda, bound, cell_size, seed, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(*seed, lattice_index(x, *cell_size)));
            let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let q = g.qr().q();
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(*lambda..=*bound)).collect();
            for r in 0..n {
                for c in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += q[(r, k)] * d[k] * q[(c, k)];
                    }
                    out[r * n + c] = s;
                }
            }
            // exact symmetry regardless of rounding in the product
            for r in 0..n {
                for c in 0..r {
                    let v = 0.5 * (out[r * n + c] + out[c * n + r]);
                    out[r * n + c] = v;
                    out[c * n + r] = v;
                }
            }
        }
        CoefficientSpec::SkewPerturbed { base, amplitude } => {
            eval_spec(base, x, out);
            for alpha in 0..DIM {
                for beta in 0..DIM {
                    let s = SKEW[alpha][beta] * amplitude;
                    if s == 0.0 {
                        continue;
                    }
                    for i in 0..m {
                        out[(alpha * m + i) * n + beta * m + i] += s;
                    }
                }
            }
        }
        CoefficientSpec::SmoothVmo { frequency, amplitude, .. } => {
            let w = 2.0 * std::f64::consts::PI * frequency;
            let a = 1.0 + amplitude * (w * x[0]).sin() * (w * x[1]).sin() * (w * x[2]).sin();
            out.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..n {
                out[r * n + r] = a;
            }
        }
    }
}

impl CoefficientField {
    pub fn m(&self) -> usize {
        self.m
    }

    /// Row/column size `3m` of a tensor value.
    pub fn block(&self) -> usize {
        DIM * self.m
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn spec(&self) -> &CoefficientSpec {
        &self.spec
    }

    pub fn is_adjoint(&self) -> bool {
        self.transposed
    }

    /// True when the tensor is symmetric at every point.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self.spec, CoefficientSpec::SkewPerturbed { amplitude, .. } if amplitude != 0.0)
    }

    pub fn describe(&self) -> String {
        if self.transposed {
            format!("adjoint({})", self.spec.describe())
        } else {
            self.spec.describe()
        }
    }

    /// Writes `A(x)` (or its transpose for an adjoint field) into `out`.
    pub fn eval_into(&self, x: &Point, out: &mut [f64]) {
        let n = self.block();
        debug_assert_eq!(out.len(), n * n);
        eval_spec(&self.spec, x, out);
        if self.transposed {
            for r in 0..n {
                for c in 0..r {
                    out.swap(r * n + c, c * n + r);
                }
            }
        }
    }

    pub fn eval(&self, x: &Point) -> Vec<f64> {
        let n = self.block();
        let mut out = vec![0.0; n * n];
        self.eval_into(x, &mut out);
        out
    }

    /// Entry `A^{αβ}_{ij}(x)`.
    pub fn entry(&self, x: &Point, alpha: usize, beta: usize, i: usize, j: usize) -> f64 {
        let n = self.block();
        self.eval(x)[(alpha * self.m + i) * n + beta * self.m + j]
    }

    /// Per-cell tensor table, one line per cell (tensor sampled at the cell
    /// centre).
    pub fn snapshot(&self, mesh: &Mesh) -> String {
        let h = mesh.spacing();
        let mut out = String::new();
        for (c, cell) in mesh.cells().iter().enumerate() {
            let x = [cell.lo[0] + 0.5 * h[0], cell.lo[1] + 0.5 * h[1], cell.lo[2] + 0.5 * h[2]];
            let vals: Vec<String> = self.eval(&x).iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{c} {} {} {} {}", cell.index[0], cell.index[1], cell.index[2], vals.join(" "));
        }
        out
    }
}

/// The adjoint field `ᵗA^{αβ}_{ij} = A^{βα}_{ji}`.
pub fn adjoint_coefficients(field: &CoefficientField) -> CoefficientField {
    CoefficientField { transposed: !field.transposed, ..field.clone() }
}

/// Sampled `(λ_est, M_est)`: smallest eigenvalue of the symmetric part and
/// largest spectral norm over the sample points.
pub fn verify_ellipticity_bounds(field: &CoefficientField, points: &[Point]) -> Result<(f64, f64)> {
    if points.is_empty() {
        return Err(Error::Config("at least one sample point is required".into()));
    }
    let n = field.block();
    let mut lambda_est = f64::INFINITY;
    let mut bound_est: f64 = 0.0;
    let mut buf = vec![0.0; n * n];
    for x in points {
        field.eval_into(x, &mut buf);
        let a = DMatrix::from_row_slice(n, n, &buf);
        let sym = (&a + a.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        lambda_est = lambda_est.min(min);
        let ata = a.transpose() * &a;
        let top = SymmetricEigen::new(ata).eigenvalues.iter().cloned().fold(0.0, f64::max);
        bound_est = bound_est.max(top.max(0.0).sqrt());
    }
    if !(lambda_est > 0.0) {
        return Err(Error::NonElliptic(format!("sampled lambda {lambda_est}")));
    }
    if lambda_est < field.lambda - 1e-12 || bound_est > field.bound + 1e-12 {
        return Err(Error::NonElliptic(format!(
            "sampled ({lambda_est}, {bound_est}) outside declared ({}, {})",
            field.lambda, field.bound
        )));
    }
    Ok((lambda_est, bound_est))
}

/// Seeded uniform sample points inside the mesh cells.
pub fn sample_points(mesh: &Mesh, count: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = mesh.spacing();
    let cells = mesh.cells();
    (0..count)
        .map(|_| {
            let c = &cells[rng.gen_range(0..cells.len())];
            [
                c.lo[0] + rng.gen::<f64>() * h[0],
                c.lo[1] + rng.gen::<f64>() * h[1],
                c.lo[2] + rng.gen::<f64>() * h[2],
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_mesh;

    fn checker() -> CoefficientField {
        make_coefficient(CoefficientSpec::ScalarCheckerboard { contrast: 10.0, cell_size: 0.25, seed: 0 })
            .unwrap()
    }

    #[test]
    fn identity_values() {
        let f = make_coefficient(CoefficientSpec::Identity { m: 1 }).unwrap();
        assert_eq!((f.lambda(), f.bound()), (1.0, 1.0));
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(f.entry(&[0.3, 0.1, 0.9], a, b, 0, 0), if a == b { 1.0 } else { 0.0 });
            }
        }
        let pts = sample_points(&build_box_mesh([1.0; 3], 4).unwrap(), 20, 1);
        assert_eq!(verify_ellipticity_bounds(&f, &pts).unwrap(), (1.0, 1.0));
    }

    #[test]
    fn checkerboard_values_and_bounds() {
        let f = checker();
        assert_eq!((f.lambda(), f.bound()), (1.0, 10.0));
        let a = f.eval(&[0.1, 0.1, 0.1])[0];
        let b = f.eval(&[0.3, 0.1, 0.1])[0];
        assert_eq!([a.min(b), a.max(b)], [1.0, 10.0]);
        let pts = sample_points(&build_box_mesh([1.0; 3], 8).unwrap(), 200, 3);
        let (l, m) = verify_ellipticity_bounds(&f, &pts).unwrap();
        assert!((l - 1.0).abs() < 1e-12 && (m - 10.0).abs() < 1e-12);
    }

    #[test]
    fn skew_keeps_quadratic_form() {
        let f = make_coefficient(CoefficientSpec::SkewPerturbed {
            base: Box::new(CoefficientSpec::Identity { m: 1 }),
            amplitude: 0.5,
        })
        .unwrap();
        assert_eq!(f.lambda(), 1.0);
        assert!(!f.is_symmetric());
        let x = [0.2, 0.4, 0.6];
        let a = f.eval(&x);
        assert_eq!(a[1], 0.5);
        let pts = sample_points(&build_box_mesh([1.0; 3], 2).unwrap(), 10, 0);
        let (l, _) = verify_ellipticity_bounds(&f, &pts).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        // A + ᵗA has zero skew part
        let t = adjoint_coefficients(&f).eval(&x);
        for r in 0..3 {
            for c in 0..3 {
                let s = a[r * 3 + c] + t[r * 3 + c];
                let st = a[c * 3 + r] + t[c * 3 + r];
                assert!((s - st).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn adjoint_is_transpose_and_involution() {
        let f = make_coefficient(CoefficientSpec::SkewPerturbed {
            base: Box::new(CoefficientSpec::CellwiseRandom { m: 2, lambda: 0.5, bound: 2.0, cell_size: 0.5, seed: 9 }),
            amplitude: 0.3,
        })
        .unwrap();
        let adj = adjoint_coefficients(&f);
        let x = [0.3, 0.8, 0.1];
        let (a, t) = (f.eval(&x), adj.eval(&x));
        let m = 2;
        for al in 0..3 {
            for be in 0..3 {
                for i in 0..m {
                    for j in 0..m {
                        assert_eq!(adj.entry(&x, al, be, i, j), f.entry(&x, be, al, j, i));
                    }
                }
            }
        }
        assert_ne!(a, t);
        assert_eq!(adjoint_coefficients(&adj), f);
        assert_eq!(adjoint_coefficients(&adj).eval(&x), a);
    }

    #[test]
    fn scalar_symmetric_field_is_self_adjoint() {
        let f = checker();
        let x = [0.6, 0.2, 0.9];
        assert_eq!(adjoint_coefficients(&f).eval(&x), f.eval(&x));
    }

    #[test]
    fn cellwise_random_is_reproducible_and_bounded() {
        let spec = CoefficientSpec::CellwiseRandom { m: 2, lambda: 0.5, bound: 3.0, cell_size: 0.25, seed: 42 };
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let pts = sample_points(&mesh, 100, 7);
        let a = verify_ellipticity_bounds(&make_coefficient(spec.clone()).unwrap(), &pts).unwrap();
        let b = verify_ellipticity_bounds(&make_coefficient(spec).unwrap(), &pts).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        assert!(a.0 >= 0.5 - 1e-12 && a.1 <= 3.0 + 1e-12);
    }

    #[test]
    fn piecewise_constant_per_cell() {
        let f = make_coefficient(CoefficientSpec::CellwiseRandom { m: 1, lambda: 1.0, bound: 4.0, cell_size: 0.5, seed: 1 })
            .unwrap();
        assert_eq!(f.eval(&[0.1, 0.1, 0.1]), f.eval(&[0.4, 0.3, 0.45]));
        assert_ne!(f.eval(&[0.1, 0.1, 0.1]), f.eval(&[0.6, 0.1, 0.1]));
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!(
            make_coefficient(CoefficientSpec::SmoothVmo { m: 1, frequency: 1.0, amplitude: 1.0 }),
            Err(Error::NonElliptic(_))
        ));
        assert!(matches!(
            make_coefficient(CoefficientSpec::ScalarCheckerboard { contrast: -1.0, cell_size: 0.5, seed: 0 }),
            Err(Error::NonElliptic(_))
        ));
        assert!(matches!(
            make_coefficient(CoefficientSpec::CellwiseRandom { m: 1, lambda: 0.0, bound: 1.0, cell_size: 0.5, seed: 0 }),
            Err(Error::NonElliptic(_))
        ));
    }
}
