//! Mollified and nodal Neumann functions, their defining identity, the
//! adjoint-symmetry pairing, and the representation formula.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;

use crate::discretize::{assemble_volume_load_on, load_totals, BoundaryDensity, VolumeDensity};
use crate::error::{Error, Result};
use crate::field::DiscreteField;
use crate::linalg::dot;
use crate::mesh::{Mesh, Point};
use crate::quadrature::CellRule;
use crate::solve::{graph_foot, NeumannSystem, Telemetry};

/// `c` in `Φ(z) = c (1 − |z|²)²₊`, fixed by `∫Φ = 1` in three dimensions.
pub const MOLLIFIER_NORMALIZATION: f64 = 105.0 / (32.0 * PI);

/// `Φ_ε(x) = ε⁻³ Φ((x − y)/ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mollifier {
    pub center: Point,
    pub radius: f64,
}

impl Mollifier {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::Domain(format!("mollifier radius {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Unscaled profile `Φ(z)` at `|z| = s`.
    pub fn profile(s: f64) -> f64 {
        let t = 1.0 - s * s;
        if t > 0.0 {
            MOLLIFIER_NORMALIZATION * t * t
        } else {
            0.0
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let r2: f64 = (0..3).map(|a| (x[a] - self.center[a]).powi(2)).sum();
        Self::profile(r2.sqrt() / self.radius) / self.radius.powi(3)
    }

    /// Cells meeting the open support ball.
    pub fn support_cells(&self, mesh: &Mesh) -> Vec<usize> {
        let h = mesh.spacing();
        mesh.cells()
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                let d2: f64 = (0..3)
                    .map(|a| {
                        let lo = c.lo[a];
                        let hi = lo + h[a];
                        let p = self.center[a].clamp(lo, hi);
                        (p - self.center[a]).powi(2)
                    })
                    .sum();
                d2 < self.radius * self.radius
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// `∫_Ω Φ_ε` with `order`-point Gauss rules on `sub³` sub-cells.
    pub fn integral(&self, mesh: &Mesh, order: usize, sub: usize) -> Result<f64> {
        let rule = CellRule::subdivided(order, sub)?;
        let f = |x: &Point, o: &mut [f64]| o[0] = self.eval(x);
        let cells = self.support_cells(mesh);
        Ok(load_totals(&assemble_volume_load_on(mesh, 1, &f, &rule, Some(&cells)), 1)[0])
    }

    /// Nodal weights `∫ Φ_ε ψ_p`, rescaled to sum to one so the discrete
    /// source carries unit mass exactly.
    pub fn nodal_weights(&self, mesh: &Mesh) -> Result<Vec<(usize, f64)>> {
        let rule = CellRule::subdivided(3, 4)?;
        let f = |x: &Point, o: &mut [f64]| o[0] = self.eval(x);
        let cells = self.support_cells(mesh);
        let load = assemble_volume_load_on(mesh, 1, &f, &rule, Some(&cells));
        let total: f64 = load.iter().sum();
        if !(total > 0.0) {
            return Err(Error::UnderResolved("mollifier misses every quadrature point".into()));
        }
        Ok(load.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(p, v)| (p, v / total)).collect())
    }
}

/// How the pole is represented on the mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoleSource {
    /// `Φ_ε(· − y)`.
    Mollified { radius: f64 },
    /// The functional `v ↦ v(node)`.
    NodalDelta { node: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    Bounded,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    /// `ε = epsilon_factor · h` unless `epsilon` is set.
    pub epsilon_factor: f64,
    pub epsilon: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { epsilon_factor: 2.0, epsilon: None }
    }
}

impl KernelConfig {
    pub fn radius(&self, mesh: &Mesh) -> f64 {
        self.epsilon.unwrap_or(self.epsilon_factor * mesh.h())
    }
}

/// `N(·, y)`: column `k` is the vector field `N(·, y) e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumannKernel {
    pub pole: Point,
    pub source: PoleSource,
    pub mode: KernelMode,
    pub adjoint: bool,
    pub columns: Vec<DiscreteField>,
    /// Nodal source weights `w_p` (unit total).
    pub weights: Vec<(usize, f64)>,
    pub telemetry: Vec<Telemetry>,
    pub truncation_warning: bool,
    mesh: u64,
}

impl NeumannKernel {
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    pub fn radius(&self) -> Option<f64> {
        match self.source {
            PoleSource::Mollified { radius } => Some(radius),
            PoleSource::NodalDelta { .. } => None,
        }
    }

    pub fn mesh_fingerprint(&self) -> u64 {
        self.mesh
    }

    /// `N_{jk}(x, y)`, row-major `m × m`.
    pub fn value_at(&self, mesh: &Mesh, x: &Point) -> Result<Vec<f64>> {
        let m = self.m();
        let mut out = vec![0.0; m * m];
        for (k, col) in self.columns.iter().enumerate() {
            let v = col.eval_at(mesh, x)?;
            for j in 0..m {
                out[j * m + k] = v[j];
            }
        }
        Ok(out)
    }

    /// Frobenius norm of `N(x, y)`.
    pub fn magnitude_at(&self, mesh: &Mesh, x: &Point) -> Result<f64> {
        Ok(self.value_at(mesh, x)?.iter().map(|v| v * v).sum::<f64>().sqrt())
    }

    /// `⟨w, N_{·k}⟩` component `j`, for nodal weights `w`.
    pub fn pair(&self, weights: &[(usize, f64)], j: usize, k: usize) -> f64 {
        weights.iter().map(|(p, w)| w * self.columns[k].node_value(*p, j)).sum()
    }

    /// `x y z value` table of `N_{jk}(·, y)`.
    pub fn slice_table(&self, mesh: &Mesh, j: usize, k: usize) -> String {
        self.columns[k].component(j).to_table(mesh)
    }
}

fn check_pole(system: &NeumannSystem, y: &Point, radius: f64) -> Result<()> {
    let mesh = system.mesh();
    let h = mesh.h();
    if radius < 2.0 * h * (1.0 - 1e-12) {
        return Err(Error::UnderResolved(format!("ε = {radius} below 2h = {}", 2.0 * h)));
    }
    let d = mesh.distance_to_boundary(y, false)?;
    if d < radius * (1.0 - 1e-12) {
        return Err(Error::InvalidGeometry(format!("B_ε(y) leaves the domain: dist {d} < ε {radius}")));
    }
    Ok(())
}

fn source_load(system: &NeumannSystem, weights: &[(usize, f64)], k: usize) -> Vec<f64> {
    let m = system.m();
    let n = system.mesh().node_count();
    let mut load = vec![0.0; n * m];
    for (p, w) in weights {
        load[p * m + k] += w;
    }
    if !system.is_graph() {
        let s = 1.0 / system.boundary_measure();
        for (p, b) in system.boundary_weights().iter().enumerate() {
            load[p * m + k] -= s * b;
        }
    }
    load
}

fn solve_column(system: &NeumannSystem, y: &Point, weights: &[(usize, f64)], k: usize) -> Result<(DiscreteField, Telemetry, bool)> {
    let load = source_load(system, weights, k);
    let sol = if system.is_graph() {
        let center = graph_foot(system.mesh(), y);
        system.solve_graph_load(&load, &center)?
    } else {
        system.solve_bounded_load(&load)?
    };
    Ok((sol.field, sol.telemetry, sol.truncation_warning))
}

/// Column `k` of the mollified kernel: bounded mode solves
/// `L v = Φ_ε e_k` with conormal data `−e_k/|∂Ω|`; graph mode has zero
/// conormal data.
pub fn build_mollified_column(system: &NeumannSystem, y: &Point, radius: f64, k: usize) -> Result<(DiscreteField, Telemetry)> {
    if k >= system.m() {
        return Err(Error::Interface(format!("column {k} of an m = {} system", system.m())));
    }
    check_pole(system, y, radius)?;
    let weights = Mollifier::new(*y, radius)?.nodal_weights(system.mesh())?;
    let (f, t, _) = solve_column(system, y, &weights, k)?;
    Ok((f, t))
}

fn assemble_kernel(system: &NeumannSystem, y: Point, source: PoleSource, weights: Vec<(usize, f64)>) -> Result<NeumannKernel> {
    let m = system.m();
    let built: Vec<Result<(DiscreteField, Telemetry, bool)>> =
        (0..m).into_par_iter().map(|k| solve_column(system, &y, &weights, k)).collect();
    let mut columns = Vec::with_capacity(m);
    let mut telemetry = Vec::with_capacity(m);
    let mut warning = false;
    for r in built {
        let (f, t, w) = r?;
        columns.push(f);
        telemetry.push(t);
        warning |= w;
    }
    Ok(NeumannKernel {
        pole: y,
        source,
        mode: if system.is_graph() { KernelMode::Graph } else { KernelMode::Bounded },
        adjoint: system.stiffness().is_adjoint(),
        columns,
        weights,
        telemetry,
        truncation_warning: warning,
        mesh: system.mesh().fingerprint(),
    })
}

/// All `m` columns at `ε = ε(h)`. Requires `d_y ≥ 4h`, measured to the
/// graph boundary in graph mode.
pub fn build_kernel(system: &NeumannSystem, y: &Point, config: &KernelConfig) -> Result<NeumannKernel> {
    let mesh = system.mesh();
    let dy = mesh.distance_to_boundary(y, mesh.is_graph())?;
    if dy < 4.0 * mesh.h() * (1.0 - 1e-12) {
        return Err(Error::UnderResolved(format!("d_y = {dy} below 4h = {}", 4.0 * mesh.h())));
    }
    let radius = config.radius(mesh);
    check_pole(system, y, radius)?;
    let weights = Mollifier::new(*y, radius)?.nodal_weights(mesh)?;
    assemble_kernel(system, *y, PoleSource::Mollified { radius }, weights)
}

/// Kernel whose source is the nodal functional at `node`.
pub fn build_nodal_kernel(system: &NeumannSystem, node: usize) -> Result<NeumannKernel> {
    let mesh = system.mesh();
    if node >= mesh.node_count() {
        return Err(Error::Interface(format!("node {node} out of range")));
    }
    assemble_kernel(system, mesh.nodes()[node], PoleSource::NodalDelta { node }, vec![(node, 1.0)])
}

/// Nodal kernels indexed by pole node.
#[derive(Debug, Clone, Default)]
pub struct KernelSet {
    kernels: BTreeMap<usize, NeumannKernel>,
}

impl KernelSet {
    pub fn insert(&mut self, k: NeumannKernel) -> Result<()> {
        match k.source {
            PoleSource::NodalDelta { node } => {
                self.kernels.insert(node, k);
                Ok(())
            }
            PoleSource::Mollified { .. } => Err(Error::Interface("kernel sets hold nodal kernels".into())),
        }
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn get(&self, node: usize) -> Option<&NeumannKernel> {
        self.kernels.get(&node)
    }

    /// Total column solves recorded in the set.
    pub fn column_count(&self) -> usize {
        self.kernels.values().map(|k| k.m()).sum()
    }
}

/// Nodal kernels at the given nodes (all nodes when `None`), built in
/// parallel.
pub fn build_kernel_set(system: &NeumannSystem, nodes: Option<&[usize]>) -> Result<KernelSet> {
    let ids: Vec<usize> = match nodes {
        Some(n) => n.to_vec(),
        None => (0..system.mesh().node_count()).collect(),
    };
    let built: Vec<Result<NeumannKernel>> = ids.par_iter().map(|&p| build_nodal_kernel(system, p)).collect();
    let mut set = KernelSet::default();
    for k in built {
        set.insert(k?)?;
    }
    Ok(set)
}

/// Per-component residual of
/// `B(N(·,y)e_k, φ) + (1/|∂Ω|) ∫_{∂Ω} φ^k − ∫ Φ_ε φ^k`; graph mode drops the
/// boundary term and requires `φ = 0` on the far boundary.
pub fn check_defining_identity(system: &NeumannSystem, kernel: &NeumannKernel, phi: &DiscreteField) -> Result<Vec<f64>> {
    let mesh = system.mesh();
    if kernel.mesh != mesh.fingerprint() || system.stiffness().is_adjoint() != kernel.adjoint {
        return Err(Error::Interface("kernel built on a different system".into()));
    }
    phi.check_mesh(mesh)?;
    let m = kernel.m();
    if phi.m() != m {
        return Err(Error::Interface(format!("test field has {} components, kernel {m}", phi.m())));
    }
    if system.is_graph() && (0..mesh.node_count()).any(|p| mesh.is_far_node(p) && (0..m).any(|i| phi.node_value(p, i) != 0.0)) {
        return Err(Error::Interface("graph-mode test fields must vanish on the far boundary".into()));
    }
    let b = system.boundary_weights();
    let measure = system.boundary_measure();
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let form = system.stiffness().form(&kernel.columns[k], phi);
        let boundary = if system.is_graph() {
            0.0
        } else {
            b.iter().enumerate().map(|(p, bp)| bp * phi.node_value(p, k)).sum::<f64>() / measure
        };
        let source: f64 = kernel.weights.iter().map(|(p, w)| w * phi.node_value(*p, k)).sum();
        out.push(form + boundary - source);
    }
    Ok(out)
}

/// `max_{l,k} |⟨Φ(·;x), N_{lk}(·,y)⟩ − ⟨Φ(·;y), Ñ_{kl}(·,x)⟩|` for a
/// kernel `N` at `y` and an adjoint kernel `Ñ` at `x`.
pub fn check_symmetry_identity(n_y: &NeumannKernel, adj_x: &NeumannKernel) -> Result<f64> {
    if n_y.mesh != adj_x.mesh {
        return Err(Error::Interface("kernels on different meshes".into()));
    }
    if n_y.adjoint == adj_x.adjoint {
        return Err(Error::Interface("pairing needs a kernel and an adjoint kernel".into()));
    }
    match (n_y.source, adj_x.source) {
        (PoleSource::Mollified { radius: a }, PoleSource::Mollified { radius: b }) if a != b => {
            return Err(Error::Interface(format!("mollification radii differ: {a} vs {b}")));
        }
        (PoleSource::Mollified { .. }, PoleSource::NodalDelta { .. })
        | (PoleSource::NodalDelta { .. }, PoleSource::Mollified { .. }) => {
            return Err(Error::Interface("pole sources differ".into()));
        }
        _ => {}
    }
    if n_y.m() != adj_x.m() {
        return Err(Error::Interface("component counts differ".into()));
    }
    let m = n_y.m();
    let mut defect: f64 = 0.0;
    for l in 0..m {
        for k in 0..m {
            let a = n_y.pair(&adj_x.weights, l, k);
            let b = adj_x.pair(&n_y.weights, k, l);
            defect = defect.max((a - b).abs());
        }
    }
    Ok(defect)
}

/// `u = Σ_y N(·, y) F_y` over the nodal kernels, where `F` is the
/// assembled load of `(f, g)`.
pub fn representation_solve(
    mesh: &Mesh,
    set: &KernelSet,
    m: usize,
    f: Option<VolumeDensity>,
    g: Option<BoundaryDensity>,
    order: usize,
) -> Result<DiscreteField> {
    let load = crate::discretize::assemble_load(mesh, m, f, g, order)?;
    representation_from_load(mesh, set, m, &load)
}

pub fn representation_from_load(mesh: &Mesh, set: &KernelSet, m: usize, load: &[f64]) -> Result<DiscreteField> {
    let n = mesh.node_count();
    if load.len() != n * m {
        return Err(Error::Interface("load length does not match the mesh".into()));
    }
    let poles: Vec<usize> = (0..n).filter(|p| (0..m).any(|i| load[p * m + i] != 0.0)).collect();
    let missing = poles.iter().filter(|p| set.get(**p).is_none()).count();
    if missing > 0 {
        return Err(Error::Coverage(missing));
    }
    let mut u = vec![0.0; n * m];
    for p in poles {
        let k = set.get(p).expect("covered");
        if k.mesh != mesh.fingerprint() || k.m() != m {
            return Err(Error::Interface("kernel set built on a different system".into()));
        }
        for c in 0..m {
            let a = load[p * m + c];
            if a != 0.0 {
                crate::linalg::axpy(a, k.columns[c].values(), &mut u);
            }
        }
    }
    DiscreteField::from_values(mesh, m, u)
}

/// Relative `ℓ²` difference `‖a − b‖ / ‖b‖` of two fields.
pub fn relative_difference(a: &DiscreteField, b: &DiscreteField) -> f64 {
    let d: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    let nb = dot(b.values(), b.values()).sqrt();
    let nd = dot(&d, &d).sqrt();
    if nb == 0.0 {
        nd
    } else {
        nd / nb
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{make_coefficient, CoefficientSpec};
    use crate::discretize::boundary_mean;
    use crate::mesh::build_box_mesh;
    use crate::solve::SolveConfig;

    #[test]
    fn mollifier_constants() {
        // 4π ∫₀¹ (1 − r²)² r² dr = 32π/105
        assert!((4.0 * PI * MOLLIFIER_NORMALIZATION * 8.0 / 105.0 - 1.0).abs() < 1e-15);
        assert!((Mollifier::profile(0.0) - 1.044_454_314_040_563).abs() < 1e-9);
        let m = Mollifier::new([0.5; 3], 0.2).unwrap();
        assert_eq!(m.eval(&[0.75, 0.5, 0.5]), 0.0);
        assert_eq!(m.eval(&[0.5, 0.5, 0.2]), 0.0);
        assert!(Mollifier::new([0.0; 3], 0.0).is_err());
    }

    #[test]
    fn mollifier_integrates_to_one() {
        let mesh = build_box_mesh([1.0; 3], 16).unwrap();
        let m = Mollifier::new([0.5, 0.47, 0.52], 4.0 / 16.0).unwrap();
        assert!((m.integral(&mesh, 4, 6).unwrap() - 1.0).abs() < 1e-6);
        let w = m.nodal_weights(&mesh).unwrap();
        assert!((w.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn column_preconditions() {
        let mesh = build_box_mesh([1.0; 3], 8).unwrap();
        let a = make_coefficient(CoefficientSpec::Identity { m: 1 }).unwrap();
        let sys = NeumannSystem::new(&mesh, &a, &SolveConfig::default()).unwrap();
        assert!(matches!(build_mollified_column(&sys, &[0.5; 3], 0.1, 0), Err(Error::UnderResolved(_))));
        assert!(matches!(build_mollified_column(&sys, &[0.2, 0.5, 0.5], 0.25, 0), Err(Error::InvalidGeometry(_))));
        assert!(matches!(build_kernel(&sys, &[0.25, 0.5, 0.5], &KernelConfig::default()), Err(Error::UnderResolved(_))));
    }

    #[test]
    fn kernel_basics() {
        let mesh = build_box_mesh([1.0; 3], 8).unwrap();
        let a = make_coefficient(CoefficientSpec::Identity { m: 1 }).unwrap();
        let sys = NeumannSystem::new(&mesh, &a, &SolveConfig::default()).unwrap();
        let k = build_kernel(&sys, &[0.5; 3], &KernelConfig::default()).unwrap();
        assert!(boundary_mean(&mesh, &k.columns[0]).unwrap().integral[0].abs() < 1e-10);
        assert!(k.value_at(&mesh, &[0.5; 3]).unwrap()[0] > 0.0);
        let c = DiscreteField::interpolate(&mesh, 1, |_, o| o[0] = 2.5);
        assert!(check_defining_identity(&sys, &k, &c).unwrap()[0].abs() < 1e-12);
        let again = build_kernel(&sys, &[0.5; 3], &KernelConfig::default()).unwrap();
        assert_eq!(k, again);
    }

    #[test]
    fn coverage_error() {
        let mesh = build_box_mesh([1.0; 3], 2).unwrap();
        let a = make_coefficient(CoefficientSpec::Identity { m: 1 }).unwrap();
        let sys = NeumannSystem::new(&mesh, &a, &SolveConfig::default()).unwrap();
        let set = build_kernel_set(&sys, Some(&[0, 1])).unwrap();
        let g = |x: &Point, _: &Point, o: &mut [f64]| o[0] = 1.0 + x[0];
        assert_eq!(representation_solve(&mesh, &set, 1, None, Some(&g), 2).unwrap_err(), Error::Coverage(24));
        let zero = representation_solve(&mesh, &set, 1, None, None, 2).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
    }
}
