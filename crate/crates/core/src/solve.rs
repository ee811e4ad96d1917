//! Pure-Neumann solves on bounded domains (zero boundary mean) and on
//! truncated graph domains.
//!
//! Two strategy families are looked up by name:
//!
//! * constraint methods: `bordered-lagrange`, `projected-krylov`;
//! * far-boundary conditions: `homogeneous-dirichlet`, `robin-monopole`.

use serde::Serialize;

use crate::coeff::CoefficientField;
use crate::discretize::{
    assemble_load, assemble_stiffness, boundary_weights, data_boundary_measure, facet_rule,
    load_totals, BoundaryDensity, StiffnessOperator, VolumeDensity,
};
use crate::error::{Error, Result};
use crate::field::DiscreteField;
use crate::krylov::{krylov_solver, Control, SolveStats};
use crate::linalg::{dot, CsrMatrix, Jacobi, LinearOperator, Preconditioner};
use crate::mesh::{Domain, FacetKind, Mesh, Point};
use crate::quadrature::{shape, CellRule};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveConfig {
    /// Relative residual of the linear solve.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub constraint: String,
    pub quadrature_order: usize,
    pub far_boundary: String,
    /// Krylov method override; chosen from the operator symmetry when absent.
    pub krylov: Option<String>,
    /// Relative threshold of the compatibility test.
    pub compatibility_tolerance: f64,
    /// Minimal distance between the support of `f` and the far boundary.
    pub truncation_margin: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 20_000,
            constraint: "bordered-lagrange".into(),
            quadrature_order: 2,
            far_boundary: "homogeneous-dirichlet".into(),
            krylov: None,
            compatibility_tolerance: 1e-8,
            truncation_margin: 0.5,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::Config(format!("tolerance {} outside (0, 1)", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        constraint_method(&self.constraint)?;
        far_boundary_condition(&self.far_boundary)?;
        if let Some(k) = &self.krylov {
            krylov_solver(k)?;
        }
        Ok(())
    }

    fn control(&self) -> Control {
        Control { tolerance: self.tolerance, max_iterations: self.max_iterations }
    }

    fn pick_solver(&self, symmetric: bool, symmetric_default: &str, general_default: &str) -> Result<Box<dyn crate::krylov::KrylovSolver>> {
        let name = match &self.krylov {
            Some(k) => k.as_str(),
            None if symmetric => symmetric_default,
            None => general_default,
        };
        let s = krylov_solver(name)?;
        if s.needs_symmetric() && !symmetric {
            return Err(Error::Config(format!("{name} needs a symmetric operator")));
        }
        Ok(s)
    }
}

/// Linear-solve record for reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Telemetry {
    pub method: String,
    pub solver: String,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
}

impl Telemetry {
    fn new(method: &str, solver: &str, stats: SolveStats) -> Self {
        Self {
            method: method.into(),
            solver: solver.into(),
            iterations: stats.iterations,
            residual: stats.residual,
            history: stats.history,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: DiscreteField,
    /// Lagrange multipliers (bounded mode; zero for compatible data).
    pub multipliers: Vec<f64>,
    pub telemetry: Telemetry,
    /// The source reaches within the truncation margin of the far boundary.
    pub truncation_warning: bool,
}

// ---------------------------------------------------------------------------
// bordered system

/// `[K B; Bᵀ 0]` with `B = b ⊗ I_m`, acting on `(u, λ) ∈ ℝ^{n·m + m}`.
pub struct BorderedSystem<'a> {
    k: &'a StiffnessOperator,
    b: &'a [f64],
    m: usize,
}

impl<'a> BorderedSystem<'a> {
    pub fn new(k: &'a StiffnessOperator, b: &'a [f64]) -> Self {
        Self { k, b, m: k.m() }
    }

    fn preconditioner(&self) -> BlockDiagonal {
        let diag = self.k.matrix().diagonal();
        let m = self.m;
        let mut schur = vec![0.0; m];
        for (p, bp) in self.b.iter().enumerate() {
            for i in 0..m {
                let d = diag[p * m + i].abs();
                if d > 0.0 {
                    schur[i] += bp * bp / d;
                }
            }
        }
        let mut inv: Vec<f64> = diag.iter().map(|d| if d.abs() > 0.0 { 1.0 / d.abs() } else { 1.0 }).collect();
        inv.extend(schur.iter().map(|s| if *s > 0.0 { 1.0 / s } else { 1.0 }));
        BlockDiagonal { inv }
    }

    /// Solves `K u + B λ = F`, `Bᵀ u = 0` with MINRES (symmetric `K`) or
    /// GMRES, unless `krylov` overrides the choice.
    pub fn solve_with(&self, load: &[f64], control: &Control, krylov: Option<&str>) -> Result<(Vec<f64>, Vec<f64>, Telemetry)> {
        let n = self.k.dim();
        let name = krylov.unwrap_or(if self.k.is_symmetric() { "minres" } else { "gmres" });
        let solver = krylov_solver(name)?;
        let mut rhs = load.to_vec();
        rhs.extend(std::iter::repeat(0.0).take(self.m));
        let mut x = vec![0.0; n + self.m];
        let stats = solver.solve(self, &self.preconditioner(), &rhs, &mut x, control)?;
        let lambda = x.split_off(n);
        Ok((x, lambda, Telemetry::new("bordered-lagrange", name, stats)))
    }

    pub fn solve(&self, load: &[f64], control: &Control) -> Result<(Vec<f64>, Vec<f64>, Telemetry)> {
        self.solve_with(load, control, None)
    }
}

impl LinearOperator for BorderedSystem<'_> {
    fn dim(&self) -> usize {
        self.k.dim() + self.m
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.k.dim();
        let m = self.m;
        let (xu, xl) = x.split_at(n);
        let (yu, yl) = y.split_at_mut(n);
        self.k.apply(xu, yu);
        yl.iter_mut().for_each(|v| *v = 0.0);
        for (p, bp) in self.b.iter().enumerate() {
            if *bp == 0.0 {
                continue;
            }
            for i in 0..m {
                yu[p * m + i] += bp * xl[i];
                yl[i] += bp * xu[p * m + i];
            }
        }
    }
}

struct BlockDiagonal {
    inv: Vec<f64>,
}

impl Preconditioner for BlockDiagonal {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.iter_mut().zip(r.iter().zip(&self.inv)).for_each(|(z, (r, d))| *z = r * d);
    }
}

/// `K + β B Bᵀ`: nonsingular, and for compatible loads its solution has zero
/// boundary mean and solves `K u = F`.
struct Penalized<'a> {
    k: &'a StiffnessOperator,
    b: &'a [f64],
    m: usize,
    beta: f64,
}

impl LinearOperator for Penalized<'_> {
    fn dim(&self) -> usize {
        self.k.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.k.apply(x, y);
        let m = self.m;
        let mut s = vec![0.0; m];
        for (p, bp) in self.b.iter().enumerate() {
            for i in 0..m {
                s[i] += bp * x[p * m + i];
            }
        }
        for (p, bp) in self.b.iter().enumerate() {
            if *bp == 0.0 {
                continue;
            }
            for i in 0..m {
                y[p * m + i] += self.beta * bp * s[i];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// constraint methods

/// Realization of the zero-boundary-mean constraint.
pub trait ConstraintMethod: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns `(u, λ, telemetry)` for a compatible load.
    fn solve(&self, k: &StiffnessOperator, b: &[f64], load: &[f64], config: &SolveConfig) -> Result<(Vec<f64>, Vec<f64>, Telemetry)>;
}

pub struct BorderedLagrange;

impl ConstraintMethod for BorderedLagrange {
    fn name(&self) -> &'static str {
        "bordered-lagrange"
    }

    fn solve(&self, k: &StiffnessOperator, b: &[f64], load: &[f64], config: &SolveConfig) -> Result<(Vec<f64>, Vec<f64>, Telemetry)> {
        let sys = BorderedSystem::new(k, b);
        if let Some(name) = &config.krylov {
            let s = krylov_solver(name)?;
            if s.needs_symmetric() && (!k.is_symmetric() || s.name() == "cg") {
                return Err(Error::Config(format!("{name} cannot solve the bordered system")));
            }
        }
        sys.solve_with(load, &config.control(), config.krylov.as_deref())
    }
}

pub struct ProjectedKrylov;

impl ConstraintMethod for ProjectedKrylov {
    fn name(&self) -> &'static str {
        "projected-krylov"
    }

    fn solve(&self, k: &StiffnessOperator, b: &[f64], load: &[f64], config: &SolveConfig) -> Result<(Vec<f64>, Vec<f64>, Telemetry)> {
        let m = k.m();
        let diag = k.matrix().diagonal();
        let bmax = b.iter().cloned().fold(0.0, f64::max);
        if bmax <= 0.0 {
            return Err(Error::Unsupported("no boundary weights".into()));
        }
        let mean_diag = diag.iter().map(|d| d.abs()).sum::<f64>() / diag.len() as f64;
        let beta = mean_diag / (bmax * bmax);
        // remove the incompatible part along b, which is what λ absorbs
        let totals = load_totals(load, m);
        let bsum: f64 = b.iter().sum();
        let mut rhs = load.to_vec();
        let mut lambda = vec![0.0; m];
        for i in 0..m {
            lambda[i] = totals[i] / bsum;
            for (p, bp) in b.iter().enumerate() {
                rhs[p * m + i] -= lambda[i] * bp;
            }
        }
        let op = Penalized { k, b, m, beta };
        let mut pdiag = diag.clone();
        for (p, bp) in b.iter().enumerate() {
            for i in 0..m {
                pdiag[p * m + i] = pdiag[p * m + i].abs() + beta * bp * bp;
            }
        }
        let pc = Jacobi::from_diagonal(&pdiag);
        let solver = config.pick_solver(k.is_symmetric(), "cg", "bicgstab")?;
        let mut x = vec![0.0; k.dim()];
        let stats = solver.solve(&op, &pc, &rhs, &mut x, &config.control())?;
        Ok((x, lambda, Telemetry::new(self.name(), solver.name(), stats)))
    }
}

type ConstraintFactory = fn() -> Box<dyn ConstraintMethod>;

const CONSTRAINTS: &[(&str, ConstraintFactory)] = &[
    ("bordered-lagrange", || Box::new(BorderedLagrange)),
    ("projected-krylov", || Box::new(ProjectedKrylov)),
];

pub fn constraint_method(name: &str) -> Result<Box<dyn ConstraintMethod>> {
    CONSTRAINTS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, f)| f())
        .ok_or_else(|| Error::UnknownStrategy { kind: "constraint method", name: name.into() })
}

pub fn constraint_method_names() -> Vec<&'static str> {
    CONSTRAINTS.iter().map(|(n, _)| *n).collect()
}

// ---------------------------------------------------------------------------
// far-boundary conditions

/// Condition imposed on the artificial truncation facets of a graph mesh.
pub trait FarBoundary: Send + Sync {
    fn name(&self) -> &'static str;

    /// Solves the truncated problem. `center` locates the source, projected
    /// onto the graph.
    fn solve(&self, mesh: &Mesh, k: &StiffnessOperator, load: &[f64], center: &Point, config: &SolveConfig) -> Result<(Vec<f64>, Telemetry)>;
}

/// `u = 0` on far facets: far rows and columns are replaced by identity.
pub struct HomogeneousDirichlet;

struct Masked<'a> {
    k: &'a CsrMatrix,
    mask: Vec<bool>,
}

impl LinearOperator for Masked<'_> {
    fn dim(&self) -> usize {
        self.k.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let xm: Vec<f64> = x.iter().zip(&self.mask).map(|(v, f)| if *f { 0.0 } else { *v }).collect();
        self.k.matvec(&xm, y);
        for (r, f) in self.mask.iter().enumerate() {
            if *f {
                y[r] = x[r];
            }
        }
    }
}

fn dof_mask(mesh: &Mesh, m: usize) -> Vec<bool> {
    mesh.far_mask().iter().flat_map(|f| std::iter::repeat(*f).take(m)).collect()
}

impl FarBoundary for HomogeneousDirichlet {
    fn name(&self) -> &'static str {
        "homogeneous-dirichlet"
    }

    fn solve(&self, mesh: &Mesh, k: &StiffnessOperator, load: &[f64], _center: &Point, config: &SolveConfig) -> Result<(Vec<f64>, Telemetry)> {
        let mask = dof_mask(mesh, k.m());
        let rhs: Vec<f64> = load.iter().zip(&mask).map(|(v, f)| if *f { 0.0 } else { *v }).collect();
        let mut diag = k.matrix().diagonal();
        diag.iter_mut().zip(&mask).for_each(|(d, f)| {
            if *f {
                *d = 1.0
            }
        });
        let op = Masked { k: k.matrix(), mask };
        let solver = config.pick_solver(k.is_symmetric(), "cg", "gmres")?;
        let mut x = vec![0.0; k.dim()];
        let stats = solver.solve(&op, &Jacobi::from_diagonal(&diag), &rhs, &mut x, &config.control())?;
        Ok((x, Telemetry::new(self.name(), solver.name(), stats)))
    }
}

/// `∂u/∂n + κ u = 0` on far facets with `κ = n·(x − c)/|x − c|²`, the
/// condition satisfied exactly by a monopole `1/|x − c|`.
pub struct RobinMonopole;

impl FarBoundary for RobinMonopole {
    fn name(&self) -> &'static str {
        "robin-monopole"
    }

    fn solve(&self, mesh: &Mesh, k: &StiffnessOperator, load: &[f64], center: &Point, config: &SolveConfig) -> Result<(Vec<f64>, Telemetry)> {
        let m = k.m();
        let mut a = k.matrix().clone();
        let h = mesh.spacing();
        for facet in mesh.facets().iter().filter(|f| f.kind == FacetKind::Far) {
            let cell = &mesh.cells()[facet.owner];
            for (x, w) in facet_rule(facet, config.quadrature_order)? {
                let d = [x[0] - center[0], x[1] - center[1], x[2] - center[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let kappa = (facet.normal[0] * d[0] + facet.normal[1] * d[1] + facet.normal[2] * d[2]) / r2;
                if kappa <= 0.0 {
                    return Err(Error::InvalidGeometry("Robin centre outside the truncation box".into()));
                }
                let xi = [(x[0] - cell.lo[0]) / h[0], (x[1] - cell.lo[1]) / h[1], (x[2] - cell.lo[2]) / h[2]];
                let n = shape(&xi);
                for pa in 0..8 {
                    for qb in 0..8 {
                        let v = w * kappa * n[pa] * n[qb];
                        if v == 0.0 {
                            continue;
                        }
                        for i in 0..m {
                            a.add(cell.nodes[pa] * m + i, cell.nodes[qb] * m + i, v);
                        }
                    }
                }
            }
        }
        let solver = config.pick_solver(k.is_symmetric(), "cg", "gmres")?;
        let mut x = vec![0.0; k.dim()];
        let stats = solver.solve(&a, &Jacobi::from_diagonal(&a.diagonal()), load, &mut x, &config.control())?;
        Ok((x, Telemetry::new(self.name(), solver.name(), stats)))
    }
}

type FarFactory = fn() -> Box<dyn FarBoundary>;

const FAR_CONDITIONS: &[(&str, FarFactory)] = &[
    ("homogeneous-dirichlet", || Box::new(HomogeneousDirichlet)),
    ("robin-monopole", || Box::new(RobinMonopole)),
];

pub fn far_boundary_condition(name: &str) -> Result<Box<dyn FarBoundary>> {
    FAR_CONDITIONS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, f)| f())
        .ok_or_else(|| Error::UnknownStrategy { kind: "far-boundary condition", name: name.into() })
}

pub fn far_boundary_names() -> Vec<&'static str> {
    FAR_CONDITIONS.iter().map(|(n, _)| *n).collect()
}

// ---------------------------------------------------------------------------
// problems

/// An assembled operator ready for repeated solves with different loads.
pub struct NeumannSystem<'a> {
    mesh: &'a Mesh,
    stiffness: StiffnessOperator,
    weights: Vec<f64>,
    measure: f64,
    config: SolveConfig,
}

impl<'a> NeumannSystem<'a> {
    pub fn new(mesh: &'a Mesh, field: &CoefficientField, config: &SolveConfig) -> Result<Self> {
        config.validate()?;
        let stiffness = assemble_stiffness(mesh, field, config.quadrature_order)?;
        Ok(Self::from_stiffness(mesh, stiffness, config.clone()))
    }

    pub fn from_stiffness(mesh: &'a Mesh, stiffness: StiffnessOperator, config: SolveConfig) -> Self {
        let weights = boundary_weights(mesh);
        let measure = data_boundary_measure(mesh);
        Self { mesh, stiffness, weights, measure, config }
    }

    pub fn mesh(&self) -> &'a Mesh {
        self.mesh
    }

    pub fn stiffness(&self) -> &StiffnessOperator {
        &self.stiffness
    }

    pub fn m(&self) -> usize {
        self.stiffness.m()
    }

    pub fn config(&self) -> &SolveConfig {
        &self.config
    }

    /// `b_p = ∫_{∂Ω} ψ_p` over the data facets.
    pub fn boundary_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Measure of the data boundary.
    pub fn boundary_measure(&self) -> f64 {
        self.measure
    }

    pub fn is_graph(&self) -> bool {
        self.mesh.is_graph()
    }

    /// Bounded mode: the constrained solve of `K u = F` for an assembled
    /// load already known to be compatible.
    pub fn solve_bounded_load(&self, load: &[f64]) -> Result<Solution> {
        if self.is_graph() {
            return Err(Error::Unsupported("bounded solve on a graph mesh".into()));
        }
        let method = constraint_method(&self.config.constraint)?;
        let (u, multipliers, telemetry) = method.solve(&self.stiffness, &self.weights, load, &self.config)?;
        Ok(Solution {
            field: DiscreteField::from_values(self.mesh, self.m(), u)?,
            multipliers,
            telemetry,
            truncation_warning: false,
        })
    }

    /// Graph mode: natural condition on graph facets, the configured
    /// condition on far facets.
    pub fn solve_graph_load(&self, load: &[f64], center: &Point) -> Result<Solution> {
        if !self.is_graph() {
            return Err(Error::Unsupported("graph solve on a bounded mesh".into()));
        }
        let far = far_boundary_condition(&self.config.far_boundary)?;
        let (u, telemetry) = far.solve(self.mesh, &self.stiffness, load, center, &self.config)?;
        Ok(Solution {
            field: DiscreteField::from_values(self.mesh, self.m(), u)?,
            multipliers: vec![],
            telemetry,
            truncation_warning: false,
        })
    }

    /// `Σ_p F_(p,i) − (Σ_p b_p) λ_i` style residual is not needed here; this
    /// returns `‖K u − F‖ / ‖F‖` restricted to the degrees of freedom the
    /// variational identity tests against.
    pub fn relative_residual(&self, u: &[f64], load: &[f64]) -> f64 {
        let mut r = vec![0.0; u.len()];
        self.stiffness.apply(u, &mut r);
        let mask = self.is_graph().then(|| dof_mask(self.mesh, self.m()));
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..r.len() {
            if mask.as_ref().is_some_and(|m| m[k]) {
                continue;
            }
            num += (r[k] - load[k]).powi(2);
            den += load[k].powi(2);
        }
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }
}

/// `∫_Ω f + ∫_{∂Ω} g` per component, by the assembly quadrature.
pub fn check_compatibility(mesh: &Mesh, m: usize, f: Option<VolumeDensity>, g: Option<BoundaryDensity>, order: usize) -> Result<Vec<f64>> {
    let load = assemble_load(mesh, m, f, g, order)?;
    Ok(load_totals(&load, m))
}

/// `‖f‖_{L¹(Ω)} + ‖g‖_{L¹(∂Ω)}` by the same quadrature, summed over
/// components.
fn data_l1(mesh: &Mesh, m: usize, f: Option<VolumeDensity>, g: Option<BoundaryDensity>, order: usize) -> Result<f64> {
    let rule = CellRule::gauss(order)?;
    let h = mesh.spacing();
    let vol = mesh.cell_volume();
    let mut total = 0.0;
    let mut val = vec![0.0; m];
    if let Some(f) = f {
        for cell in mesh.cells() {
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let x = [cell.lo[0] + xi[0] * h[0], cell.lo[1] + xi[1] * h[1], cell.lo[2] + xi[2] * h[2]];
                f(&x, &mut val);
                total += w * vol * val.iter().map(|v| v.abs()).sum::<f64>();
            }
        }
    }
    if let Some(g) = g {
        for facet in crate::discretize::data_facets(mesh) {
            for (x, w) in facet_rule(facet, order)? {
                g(&x, &facet.normal, &mut val);
                total += w * val.iter().map(|v| v.abs()).sum::<f64>();
            }
        }
    }
    Ok(total)
}

/// The unique discrete `u` with zero boundary mean and
/// `B(u, v) = ∫ f·v + ∫ g·v` for every discrete `v`.
pub fn solve_neumann_bounded(
    mesh: &Mesh,
    field: &CoefficientField,
    f: Option<VolumeDensity>,
    g: Option<BoundaryDensity>,
    config: &SolveConfig,
) -> Result<Solution> {
    if mesh.is_graph() {
        return Err(Error::Unsupported("bounded solve on a graph mesh".into()));
    }
    let m = field.m();
    let residual = check_compatibility(mesh, m, f, g, config.quadrature_order)?;
    let scale = data_l1(mesh, m, f, g, config.quadrature_order)?;
    let rnorm = residual.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rnorm > config.compatibility_tolerance * scale {
        return Err(Error::Incompatible { residual, tolerance: config.compatibility_tolerance * scale });
    }
    let system = NeumannSystem::new(mesh, field, config)?;
    let load = assemble_load(mesh, m, f, g, config.quadrature_order)?;
    system.solve_bounded_load(&load)
}

/// Distance from `x` to the far boundary of a truncated graph mesh.
pub fn far_distance(mesh: &Mesh, x: &Point) -> f64 {
    match mesh.domain() {
        Domain::TruncatedGraph { truncation, .. } => {
            let (lo, hi) = (truncation.lo, truncation.hi);
            (x[0] - lo[0]).min(hi[0] - x[0]).min(x[1] - lo[1]).min(hi[1] - x[1]).min(hi[2] - x[2])
        }
        _ => f64::INFINITY,
    }
}

/// Graph profile height below `x`, or the domain bottom when not a graph.
pub fn graph_foot(mesh: &Mesh, x: &Point) -> Point {
    match mesh.domain() {
        Domain::TruncatedGraph { profile, .. } => [x[0], x[1], profile.eval(x[0], x[1])],
        _ => *x,
    }
}

/// Graph-domain solve with `f` only (no compatibility condition).
pub fn solve_neumann_graph(mesh: &Mesh, field: &CoefficientField, f: Option<VolumeDensity>, config: &SolveConfig) -> Result<Solution> {
    if !mesh.is_graph() {
        return Err(Error::Unsupported("graph solve needs a truncated graph mesh".into()));
    }
    let m = field.m();
    let system = NeumannSystem::new(mesh, field, config)?;
    let load = assemble_load(mesh, m, f, None, config.quadrature_order)?;
    // source centroid and support reach, from the load vector
    let mut weight = 0.0;
    let mut centroid = [0.0; 3];
    let mut closest = f64::INFINITY;
    for (p, x) in mesh.nodes().iter().enumerate() {
        let a: f64 = (0..m).map(|i| load[p * m + i].abs()).sum();
        if a > 0.0 {
            weight += a;
            for d in 0..3 {
                centroid[d] += a * x[d];
            }
            closest = closest.min(far_distance(mesh, x));
        }
    }
    if weight == 0.0 {
        let zero = DiscreteField::zeros(mesh, m);
        return Ok(Solution {
            field: zero,
            multipliers: vec![],
            telemetry: Telemetry { method: config.far_boundary.clone(), ..Default::default() },
            truncation_warning: false,
        });
    }
    centroid.iter_mut().for_each(|c| *c /= weight);
    let center = graph_foot(mesh, &centroid);
    let mut sol = system.solve_graph_load(&load, &center)?;
    sol.truncation_warning = closest < config.truncation_margin;
    Ok(sol)
}

/// `⟨u, v⟩` for two discrete fields, used in tests and reports.
pub fn pairing(u: &DiscreteField, v: &DiscreteField) -> f64 {
    dot(u.values(), v.values())
}
