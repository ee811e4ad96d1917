//! Assembly of the bilinear form, load functionals, and the boundary-trace
//! constraint on trilinear hexahedral elements.
//!
//! Degrees of freedom are ordered node-major: `(p, i) ↦ p·m + i`.

use rayon::prelude::*;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::field::DiscreteField;
use crate::linalg::{CsrMatrix, LinearOperator};
use crate::mesh::{Facet, FacetKind, Mesh, Point};
use crate::quadrature::{shape, shape_gradients, square_rule, CellRule};

/// Volume density `x ↦ f(x) ∈ ℝ^m`.
pub type VolumeDensity<'a> = &'a (dyn Fn(&Point, &mut [f64]) + Sync);
/// Boundary density `(x, n) ↦ g(x) ∈ ℝ^m` with the outward normal `n`.
pub type BoundaryDensity<'a> = &'a (dyn Fn(&Point, &Point, &mut [f64]) + Sync);

/// The assembled form `B(u, v) = vᵀ K u` for one mesh and coefficient field.
#[derive(Debug, Clone)]
pub struct StiffnessOperator {
    matrix: CsrMatrix,
    m: usize,
    mesh: u64,
    symmetric: bool,
    adjoint: bool,
    description: String,
}

impl StiffnessOperator {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.matrix.n()
    }

    pub fn mesh_fingerprint(&self) -> u64 {
        self.mesh
    }

    /// Whether the coefficient field is symmetric, so `K = Kᵀ`.
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// `B(u, v)` for fields on the same mesh.
    pub fn form(&self, u: &DiscreteField, v: &DiscreteField) -> f64 {
        self.matrix.pair(v.values(), u.values())
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y);
    }
}

impl LinearOperator for StiffnessOperator {
    fn dim(&self) -> usize {
        self.matrix.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y);
    }
}

/// Node-to-node adjacency through shared cells, sorted.
fn node_adjacency(mesh: &Mesh) -> Vec<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); mesh.node_count()];
    for cell in mesh.cells() {
        for &p in &cell.nodes {
            adj[p].extend_from_slice(&cell.nodes);
        }
    }
    adj.par_iter_mut().for_each(|r| {
        r.sort_unstable();
        r.dedup();
    });
    adj
}

/// Block pattern with `m` components per node.
pub(crate) fn block_pattern(mesh: &Mesh, m: usize) -> CsrMatrix {
    let adj = node_adjacency(mesh);
    let mut rows = Vec::with_capacity(mesh.node_count() * m);
    for nb in &adj {
        for _ in 0..m {
            let mut r = Vec::with_capacity(nb.len() * m);
            for &q in nb {
                for j in 0..m {
                    r.push(q * m + j);
                }
            }
            rows.push(r);
        }
    }
    CsrMatrix::from_pattern(rows)
}

fn cell_point(mesh: &Mesh, cell: usize, xi: &[f64; 3]) -> Point {
    let lo = mesh.cells()[cell].lo;
    let h = mesh.spacing();
    [lo[0] + xi[0] * h[0], lo[1] + xi[1] * h[1], lo[2] + xi[2] * h[2]]
}

/// `∫_Ω A^{αβ}_{ij} D_β ψ_q D_α ψ_p` for every pair of trilinear basis
/// functions, with tensor Gauss quadrature of the given order per cell.
pub fn assemble_stiffness(mesh: &Mesh, field: &CoefficientField, order: usize) -> Result<StiffnessOperator> {
    let rule = CellRule::gauss(order)?;
    let m = field.m();
    let nb = 3 * m;
    let h = mesh.spacing();
    let vol = mesh.cell_volume();
    let grads: Vec<[[f64; 3]; 8]> = rule.points.iter().map(|xi| shape_gradients(xi, &h)).collect();

    let local: Vec<Vec<f64>> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let size = 8 * m;
            let mut ke = vec![0.0; size * size];
            let mut a = vec![0.0; nb * nb];
            for (q, xi) in rule.points.iter().enumerate() {
                field.eval_into(&cell_point(mesh, c, xi), &mut a);
                let w = rule.weights[q] * vol;
                let g = &grads[q];
                for pa in 0..8 {
                    for i in 0..m {
                        let row = (pa * m + i) * size;
                        for qb in 0..8 {
                            for j in 0..m {
                                let mut s = 0.0;
                                for al in 0..3 {
                                    let arow = (al * m + i) * nb;
                                    for be in 0..3 {
                                        s += a[arow + be * m + j] * g[qb][be] * g[pa][al];
                                    }
                                }
                                ke[row + qb * m + j] += w * s;
                            }
                        }
                    }
                }
            }
            ke
        })
        .collect();

    let mut matrix = block_pattern(mesh, m);
    for (c, ke) in local.iter().enumerate() {
        let nodes = &mesh.cells()[c].nodes;
        let size = 8 * m;
        for pa in 0..8 {
            for i in 0..m {
                let r = nodes[pa] * m + i;
                for qb in 0..8 {
                    for j in 0..m {
                        matrix.add(r, nodes[qb] * m + j, ke[(pa * m + i) * size + qb * m + j]);
                    }
                }
            }
        }
    }
    if matrix_has_nonfinite(&matrix) {
        return Err(Error::Numeric("non-finite stiffness entry".into()));
    }
    Ok(StiffnessOperator {
        matrix,
        m,
        mesh: mesh.fingerprint(),
        symmetric: field.is_symmetric(),
        adjoint: field.is_adjoint(),
        description: field.describe(),
    })
}

fn matrix_has_nonfinite(a: &CsrMatrix) -> bool {
    (0..a.n()).any(|r| a.row(r).1.iter().any(|v| !v.is_finite()))
}

/// Scalar consistent mass matrix `∫ ψ_p ψ_q`.
pub fn assemble_mass(mesh: &Mesh, order: usize) -> Result<CsrMatrix> {
    let rule = CellRule::gauss(order)?;
    let vol = mesh.cell_volume();
    let mut me = [[0.0; 8]; 8];
    for (xi, w) in rule.points.iter().zip(&rule.weights) {
        let n = shape(xi);
        for a in 0..8 {
            for b in 0..8 {
                me[a][b] += w * vol * n[a] * n[b];
            }
        }
    }
    let mut mass = block_pattern(mesh, 1);
    for cell in mesh.cells() {
        for a in 0..8 {
            for b in 0..8 {
                mass.add(cell.nodes[a], cell.nodes[b], me[a][b]);
            }
        }
    }
    Ok(mass)
}

/// `∫_Ω f^i ψ_p` under a per-cell rule.
pub fn assemble_volume_load(mesh: &Mesh, m: usize, f: VolumeDensity, rule: &CellRule) -> Vec<f64> {
    assemble_volume_load_on(mesh, m, f, rule, None)
}

/// Volume load restricted to the listed cells (all cells when `None`).
pub fn assemble_volume_load_on(
    mesh: &Mesh,
    m: usize,
    f: VolumeDensity,
    rule: &CellRule,
    cells: Option<&[usize]>,
) -> Vec<f64> {
    let vol = mesh.cell_volume();
    let shapes: Vec<[f64; 8]> = rule.points.iter().map(shape).collect();
    let ids: Vec<usize> = match cells {
        Some(c) => c.to_vec(),
        None => (0..mesh.cells().len()).collect(),
    };
    let local: Vec<Vec<f64>> = ids
        .par_iter()
        .map(|&c| {
            let mut fe = vec![0.0; 8 * m];
            let mut val = vec![0.0; m];
            for (q, xi) in rule.points.iter().enumerate() {
                f(&cell_point(mesh, c, xi), &mut val);
                let w = rule.weights[q] * vol;
                for a in 0..8 {
                    for i in 0..m {
                        fe[a * m + i] += w * shapes[q][a] * val[i];
                    }
                }
            }
            fe
        })
        .collect();
    let mut out = vec![0.0; mesh.node_count() * m];
    for (k, &c) in ids.iter().enumerate() {
        for (a, &p) in mesh.cells()[c].nodes.iter().enumerate() {
            for i in 0..m {
                out[p * m + i] += local[k][a * m + i];
            }
        }
    }
    out
}

/// Quadrature points and weights on a facet.
pub fn facet_rule(facet: &Facet, order: usize) -> Result<Vec<(Point, f64)>> {
    let (t0, t1) = match facet.axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    Ok(square_rule(order)?
        .into_iter()
        .map(|(s, w)| {
            let mut x = facet.center;
            x[t0] += (2.0 * s[0] - 1.0) * facet.half[0];
            x[t1] += (2.0 * s[1] - 1.0) * facet.half[1];
            (x, w * facet.area)
        })
        .collect())
}

/// Facets that carry boundary data: every facet on a bounded domain, the
/// graph facets on a truncated graph domain.
pub fn data_facets(mesh: &Mesh) -> impl Iterator<Item = &Facet> {
    mesh.facets().iter().filter(|f| f.kind != FacetKind::Far)
}

/// `∫_{∂Ω} g^i ψ_p` by facet quadrature. Far facets are skipped.
pub fn assemble_boundary_load(mesh: &Mesh, m: usize, g: BoundaryDensity, order: usize) -> Result<Vec<f64>> {
    let h = mesh.spacing();
    let mut out = vec![0.0; mesh.node_count() * m];
    let mut val = vec![0.0; m];
    for facet in data_facets(mesh) {
        let cell = &mesh.cells()[facet.owner];
        for (x, w) in facet_rule(facet, order)? {
            let xi = [(x[0] - cell.lo[0]) / h[0], (x[1] - cell.lo[1]) / h[1], (x[2] - cell.lo[2]) / h[2]];
            let n = shape(&xi);
            g(&x, &facet.normal, &mut val);
            for a in 0..8 {
                if n[a] == 0.0 {
                    continue;
                }
                for i in 0..m {
                    out[cell.nodes[a] * m + i] += w * n[a] * val[i];
                }
            }
        }
    }
    Ok(out)
}

/// Load vector `∫_Ω f·ψ + ∫_{∂Ω} g·ψ`; either density may be absent.
pub fn assemble_load(
    mesh: &Mesh,
    m: usize,
    f: Option<VolumeDensity>,
    g: Option<BoundaryDensity>,
    order: usize,
) -> Result<Vec<f64>> {
    let mut out = match f {
        Some(f) => assemble_volume_load(mesh, m, f, &CellRule::gauss(order)?),
        None => vec![0.0; mesh.node_count() * m],
    };
    if let Some(g) = g {
        let b = assemble_boundary_load(mesh, m, g, order)?;
        out.iter_mut().zip(&b).for_each(|(o, b)| *o += b);
    }
    Ok(out)
}

/// Per-component totals `Σ_p F_{(p,i)}` of a load vector.
pub fn load_totals(load: &[f64], m: usize) -> Vec<f64> {
    let mut t = vec![0.0; m];
    for (k, v) in load.iter().enumerate() {
        t[k % m] += v;
    }
    t
}

/// `b_p = ∫_{∂Ω} ψ_p` over the data facets. Exact for flat facets: each of
/// the four facet nodes receives a quarter of the area.
pub fn boundary_weights(mesh: &Mesh) -> Vec<f64> {
    let mut b = vec![0.0; mesh.node_count()];
    for f in data_facets(mesh) {
        for &n in &f.nodes {
            b[n] += 0.25 * f.area;
        }
    }
    b
}

/// Measure of the data boundary (`|∂Ω|` on bounded domains).
pub fn data_boundary_measure(mesh: &Mesh) -> f64 {
    data_facets(mesh).map(|f| f.area).sum()
}

/// Raw and averaged boundary integrals of each component.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMean {
    pub integral: Vec<f64>,
    pub average: Vec<f64>,
}

/// `∫_{∂Ω} u^i dσ` and `⨍_{∂Ω} u^i dσ`. On graph meshes the integral runs
/// over the graph facets only.
pub fn boundary_mean(mesh: &Mesh, u: &DiscreteField) -> Result<BoundaryMean> {
    u.check_mesh(mesh)?;
    let measure = data_boundary_measure(mesh);
    if measure <= 0.0 {
        return Err(Error::Unsupported("mesh has no data boundary".into()));
    }
    let b = boundary_weights(mesh);
    let m = u.m();
    let mut integral = vec![0.0; m];
    for (p, bp) in b.iter().enumerate() {
        if *bp != 0.0 {
            for (i, s) in integral.iter_mut().enumerate() {
                *s += bp * u.node_value(p, i);
            }
        }
    }
    let average = integral.iter().map(|v| v / measure).collect();
    Ok(BoundaryMean { integral, average })
}

/// `Σ_cells ∫ |Du|²` (Frobenius over components and directions).
pub fn gradient_norm_sq(mesh: &Mesh, u: &DiscreteField, order: usize) -> Result<f64> {
    u.check_mesh(mesh)?;
    let rule = CellRule::gauss(order)?;
    let vol = mesh.cell_volume();
    let m = u.m();
    let parts: Vec<f64> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let mut g = vec![[0.0; 3]; m];
            let mut s = 0.0;
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                u.gradient_local(mesh, c, xi, &mut g);
                s += w * vol * g.iter().map(|r| r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sum::<f64>();
            }
            s
        })
        .collect();
    Ok(parts.iter().sum())
}

/// Poincaré constant `C = μ_min^{-1/2}` of the mean-zero-trace subspace,
/// with the iterate history.
#[derive(Debug, Clone, PartialEq)]
pub struct PoincareEstimate {
    pub constant: f64,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Smallest eigenvalue of `K v = μ M v` on `{bᵀv = 0}` by inverse iteration,
/// each step a bordered solve `K x + b λ = M v`, `bᵀx = 0`.
pub fn estimate_poincare_constant(mesh: &Mesh) -> Result<PoincareEstimate> {
    estimate_poincare_constant_with(mesh, 1e-10, 400)
}

pub fn estimate_poincare_constant_with(mesh: &Mesh, tolerance: f64, max_iterations: usize) -> Result<PoincareEstimate> {
    if mesh.is_graph() {
        return Err(Error::Unsupported("Poincaré constant needs a bounded domain".into()));
    }
    let identity = crate::coeff::make_coefficient(crate::coeff::CoefficientSpec::Identity { m: 1 })?;
    let k = assemble_stiffness(mesh, &identity, 2)?;
    let mass = assemble_mass(mesh, 2)?;
    let b = boundary_weights(mesh);
    let bordered = crate::solve::BorderedSystem::new(&k, &b);
    let control = crate::krylov::Control { tolerance: 1e-12, max_iterations: 20_000 };

    let n = mesh.node_count();
    // smooth start with nonzero projection on the lowest modes
    let mut v: Vec<f64> = mesh.nodes().iter().map(|x| x[0] + 0.3 * x[1] + 0.1 * x[2] * x[2]).collect();
    let mut mv = vec![0.0; n];
    let mut kv = vec![0.0; n];
    let mut history = Vec::new();
    let mut previous = f64::INFINITY;
    for it in 1..=max_iterations {
        mass.matvec(&v, &mut mv);
        let (x, _, _) = bordered.solve(&mv, &control)?;
        let mnorm = mass.pair(&x, &x).sqrt();
        if !(mnorm > 0.0) || !mnorm.is_finite() {
            return Err(Error::Numeric(format!("inverse iteration collapsed at step {it}")));
        }
        v = x.iter().map(|t| t / mnorm).collect();
        k.matrix().matvec(&v, &mut kv);
        let mu = crate::linalg::dot(&v, &kv);
        history.push(mu);
        if (mu - previous).abs() <= tolerance * mu {
            return Ok(PoincareEstimate { constant: 1.0 / mu.sqrt(), eigenvalue: mu, iterations: it, history });
        }
        previous = mu;
    }
    Err(Error::NotConverged {
        iterations: max_iterations,
        residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{adjoint_coefficients, make_coefficient, CoefficientSpec};
    use crate::mesh::build_box_mesh;

    fn identity(m: usize) -> CoefficientField {
        make_coefficient(CoefficientSpec::Identity { m }).unwrap()
    }

    #[test]
    fn laplacian_row_sums_vanish() {
        let mesh = build_box_mesh([1.0; 3], 3).unwrap();
        let k = assemble_stiffness(&mesh, &identity(2), 2).unwrap();
        let ones = vec![1.0; k.dim()];
        let mut y = vec![0.0; k.dim()];
        k.apply(&ones, &mut y);
        assert!(y.iter().all(|v| v.abs() < 1e-12));
        assert!(k.matrix().asymmetry() < 1e-15);
    }

    #[test]
    fn single_cell_laplacian_matches_closed_form() {
        // trilinear hexahedron of side h: diagonal h/3, face-adjacent 0,
        // edge-diagonal -h/12, body-diagonal -h/12
        let mesh = build_box_mesh([0.5; 3], 1).unwrap();
        let k = assemble_stiffness(&mesh, &identity(1), 2).unwrap();
        let h = 0.5;
        let expect = |a: usize, b: usize| match (a ^ b).count_ones() {
            0 => h / 3.0,
            1 => 0.0,
            _ => -h / 12.0,
        };
        for a in 0..8 {
            for b in 0..8 {
                let (p, q) = (mesh.cells()[0].nodes[a], mesh.cells()[0].nodes[b]);
                assert!((k.matrix().get(p, q) - expect(a, b)).abs() < 1e-14, "{a} {b}");
            }
        }
    }

    #[test]
    fn energy_of_linear_field() {
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let k = assemble_stiffness(&mesh, &identity(1), 2).unwrap();
        let u = DiscreteField::interpolate(&mesh, 1, |x, o| o[0] = x[0]);
        assert!((k.form(&u, &u) - 1.0).abs() < 1e-12);
        assert!((gradient_norm_sq(&mesh, &u, 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_assembles_the_transpose() {
        let mesh = build_box_mesh([1.0; 3], 3).unwrap();
        let spec = CoefficientSpec::SkewPerturbed {
            base: Box::new(CoefficientSpec::CellwiseRandom { m: 2, lambda: 0.5, bound: 3.0, cell_size: 1.0 / 3.0, seed: 4 }),
            amplitude: 0.5,
        };
        let a = make_coefficient(spec).unwrap();
        let k = assemble_stiffness(&mesh, &a, 2).unwrap();
        let kt = assemble_stiffness(&mesh, &adjoint_coefficients(&a), 2).unwrap();
        let t = k.matrix().transpose();
        for r in 0..k.dim() {
            let (cols, vals) = kt.matrix().row(r);
            for (c, v) in cols.iter().zip(vals) {
                assert!((v - t.get(r, *c)).abs() < 1e-14);
            }
        }
        assert!(k.matrix().asymmetry() > 1e-3);
    }

    #[test]
    fn load_totals_follow_partition_of_unity() {
        let mesh = build_box_mesh([1.0, 2.0, 1.0], 4).unwrap();
        let zero = assemble_load(&mesh, 1, None, None, 2).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let f = |_: &Point, o: &mut [f64]| {
            o[0] = 3.0;
            o[1] = -1.0;
        };
        let load = assemble_load(&mesh, 2, Some(&f), None, 2).unwrap();
        let t = load_totals(&load, 2);
        assert!((t[0] - 6.0).abs() < 1e-12 && (t[1] + 2.0).abs() < 1e-12);
        let g = |_: &Point, _: &Point, o: &mut [f64]| o[0] = 0.5;
        let load = assemble_load(&mesh, 1, None, Some(&g), 2).unwrap();
        assert!((load_totals(&load, 1)[0] - 0.5 * mesh.boundary_measure()).abs() < 1e-12);
    }

    #[test]
    fn boundary_means() {
        let mesh = build_box_mesh([1.0; 3], 6).unwrap();
        let one = DiscreteField::interpolate(&mesh, 2, |_, o| o.fill(1.0));
        let bm = boundary_mean(&mesh, &one).unwrap();
        assert!((bm.integral[0] - 6.0).abs() < 1e-12 && (bm.average[1] - 1.0).abs() < 1e-12);
        let c = DiscreteField::interpolate(&mesh, 1, |x, o| o[0] = (std::f64::consts::PI * x[0]).cos());
        assert!(boundary_mean(&mesh, &c).unwrap().integral[0].abs() < 1e-12);
    }

    #[test]
    fn poincare_scales_with_length() {
        let a = build_box_mesh([1.0; 3], 4).unwrap();
        let b = build_box_mesh([2.5; 3], 4).unwrap();
        let ca = estimate_poincare_constant(&a).unwrap();
        let cb = estimate_poincare_constant(&b).unwrap();
        assert!(ca.constant > 0.0 && ca.constant.is_finite());
        assert!((cb.constant / ca.constant - 2.5).abs() < 1e-8 * 2.5);
    }
}
