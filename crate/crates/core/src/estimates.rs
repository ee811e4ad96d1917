//! Norms, level-set measures, seminorms and log–log fits used to test the
//! kernel estimates and the regularity conditions.
//!
//! Magnitudes are Frobenius norms: `|N|² = Σ_{jk} N_{jk}²` for kernels and
//! `|Du|² = Σ_{i,α} (D_α u^i)²` for gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coeff::CoefficientField;
use crate::discretize::{assemble_load, data_facets, facet_rule, load_totals};
use crate::error::{Error, Result};
use crate::field::DiscreteField;
use crate::mesh::{Mesh, Point};
use crate::quadrature::CellRule;
use crate::solve::{NeumannSystem, SolveConfig};

/// Dimension-dependent exponents for `d = 3`.
pub const DIM: f64 = 3.0;

fn dist(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Least-squares line through `(log scale, log value)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for two samples.
    pub stderr: f64,
    pub samples: usize,
}

/// Ordinary least squares in log–log coordinates.
pub fn fit_power_law(samples: &[(f64, f64)]) -> Result<PowerFit> {
    if samples.len() < 2 {
        return Err(Error::Domain(format!("{} samples, at least 2 needed", samples.len())));
    }
    if let Some(s) = samples.iter().find(|(a, b)| !(*a > 0.0 && *b > 0.0)) {
        return Err(Error::Domain(format!("non-positive sample {s:?}")));
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all scales coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if samples.len() > 2 {
        let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerFit { slope, intercept, stderr, samples: samples.len() })
}

/// `n` geometrically spaced values in `[lo, hi]`.
pub fn geometric_range(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

/// Squared magnitudes of the value and the gradient of a set of columns at
/// local coordinates of a cell.
fn local_magnitudes(mesh: &Mesh, cols: &[DiscreteField], cell: usize, xi: &[f64; 3]) -> (f64, f64) {
    let mut v2 = 0.0;
    let mut g2 = 0.0;
    for c in cols {
        let m = c.m();
        let mut v = vec![0.0; m];
        let mut g = vec![[0.0; 3]; m];
        c.eval_local(mesh, cell, xi, &mut v);
        c.gradient_local(mesh, cell, xi, &mut g);
        v2 += v.iter().map(|t| t * t).sum::<f64>();
        g2 += g.iter().map(|r| r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sum::<f64>();
    }
    (v2, g2)
}

fn cell_corner_distances(mesh: &Mesh, cell: usize, y: &Point) -> (f64, f64) {
    let c = &mesh.cells()[cell];
    let h = mesh.spacing();
    let mut far: f64 = 0.0;
    let mut near2 = 0.0;
    for a in 0..3 {
        let lo = c.lo[a];
        let hi = lo + h[a];
        let p = y[a].clamp(lo, hi);
        near2 += (p - y[a]).powi(2);
        far += (y[a] - lo).abs().max((y[a] - hi).abs()).powi(2);
    }
    (near2.sqrt(), far.sqrt())
}

/// Which part of the domain an integral runs over.
#[derive(Debug, Clone, Copy)]
enum Region {
    /// `Ω ∖ B_r(y)`, cells entirely outside the ball.
    Outside { y: Point, r: f64 },
    /// `Ω ∩ B_r(y)`, sub-cell quadrature cut by the ball.
    Inside { y: Point, r: f64 },
}

/// `∫_region |N|^p` and `∫_region |DN|^q` over the columns.
fn region_integrals(mesh: &Mesh, cols: &[DiscreteField], region: Region, p: f64, q: f64) -> Result<(f64, f64)> {
    let coarse = CellRule::gauss(3)?;
    let fine = CellRule::subdivided(2, 4)?;
    let vol = mesh.cell_volume();
    let parts: Vec<(f64, f64)> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let (near, far) = match region {
                Region::Outside { y, .. } | Region::Inside { y, .. } => cell_corner_distances(mesh, c, &y),
            };
            let (rule, test): (&CellRule, Option<(Point, f64)>) = match region {
                Region::Outside { r, .. } => {
                    if near < r {
                        return (0.0, 0.0);
                    }
                    (&coarse, None)
                }
                Region::Inside { y, r } => {
                    if near >= r {
                        return (0.0, 0.0);
                    }
                    if far <= r {
                        (&coarse, None)
                    } else {
                        (&fine, Some((y, r)))
                    }
                }
            };
            let lo = mesh.cells()[c].lo;
            let h = mesh.spacing();
            let mut sv = 0.0;
            let mut sg = 0.0;
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                if let Some((y, r)) = test {
                    let x = [lo[0] + xi[0] * h[0], lo[1] + xi[1] * h[1], lo[2] + xi[2] * h[2]];
                    if dist(&x, &y) >= r {
                        continue;
                    }
                }
                let (v2, g2) = local_magnitudes(mesh, cols, c, xi);
                sv += w * vol * v2.powf(p / 2.0);
                sg += w * vol * g2.powf(q / 2.0);
            }
            (sv, sg)
        })
        .collect();
    Ok(parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1)))
}

/// `(‖N(·,y)‖_{L⁶(Ω∖B_r)}, ‖DN(·,y)‖_{L²(Ω∖B_r)})` over cells entirely
/// outside `B_r(y)`.
pub fn annulus_norms(mesh: &Mesh, cols: &[DiscreteField], y: &Point, r: f64) -> Result<(f64, f64)> {
    if r < 4.0 * mesh.h() * (1.0 - 1e-12) {
        return Err(Error::UnderResolved(format!("r = {r} below 4h = {}", 4.0 * mesh.h())));
    }
    let q = 2.0 * DIM / (DIM - 2.0);
    let (v, g) = region_integrals(mesh, cols, Region::Outside { y: *y, r }, q, 2.0)?;
    Ok((v.powf(1.0 / q), g.sqrt()))
}

/// Which quantity a local norm measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    Value,
    Gradient,
}

/// Exclusive upper limit of the admissible `p` for `N` (`d/(d−2)`) and for
/// `DN` (`d/(d−1)`).
pub fn exponent_limit(q: Quantity) -> f64 {
    match q {
        Quantity::Value => DIM / (DIM - 2.0),
        Quantity::Gradient => DIM / (DIM - 1.0),
    }
}

/// `‖N(·,y)‖_{L^p(B_r(y))}` or `‖DN(·,y)‖_{L^p(B_r(y))}`, pole cell included.
pub fn local_lp_norm(mesh: &Mesh, cols: &[DiscreteField], y: &Point, r: f64, p: f64, q: Quantity) -> Result<f64> {
    let limit = exponent_limit(q);
    if !(p >= 1.0 && p < limit) {
        return Err(Error::ExponentRange { p, limit });
    }
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius {r}")));
    }
    let (pv, pg) = match q {
        Quantity::Value => (p, 1.0),
        Quantity::Gradient => (1.0, p),
    };
    let (v, g) = region_integrals(mesh, cols, Region::Inside { y: *y, r }, pv, pg)?;
    Ok(match q {
        Quantity::Value => v.powf(1.0 / p),
        Quantity::Gradient => g.powf(1.0 / p),
    })
}

/// `|N|` or `|DN|` sampled at every cell centre.
pub fn cell_center_magnitudes(mesh: &Mesh, cols: &[DiscreteField], q: Quantity) -> Vec<f64> {
    (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let (v2, g2) = local_magnitudes(mesh, cols, c, &[0.5; 3]);
            match q {
                Quantity::Value => v2.sqrt(),
                Quantity::Gradient => g2.sqrt(),
            }
        })
        .collect()
}

/// `|{|·| > t}|` as the total volume of cells whose centre sample exceeds
/// `t`.
pub fn distribution_function(mesh: &Mesh, samples: &[f64], thresholds: &[f64]) -> Result<Vec<f64>> {
    if thresholds.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Domain("thresholds must be positive".into()));
    }
    if thresholds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("thresholds must increase".into()));
    }
    let vol = mesh.cell_volume();
    Ok(thresholds.iter().map(|t| samples.iter().filter(|v| **v > *t).count() as f64 * vol).collect())
}

/// One fitted or measured check with the table it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub slope: Option<f64>,
    pub stderr: Option<f64>,
    pub target: Option<f64>,
    /// Accepted `[lo, hi]` for the slope or the variation.
    pub window: Option<[f64; 2]>,
    /// Empirical constant (sup of the bound-normalized ratio).
    pub constant: Option<f64>,
    pub parameters: Vec<(String, f64)>,
    pub columns: [String; 2],
    pub samples: Vec<[f64; 2]>,
    pub pass: bool,
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, columns: [&str; 2]) -> Self {
        Self {
            name: name.into(),
            slope: None,
            stderr: None,
            target: None,
            window: None,
            constant: None,
            parameters: vec![],
            columns: [columns[0].into(), columns[1].into()],
            samples: vec![],
            pass: false,
            note: None,
        }
    }

    /// Fits the samples and sets `pass` from the slope window.
    pub fn fit_slope(mut self, samples: Vec<[f64; 2]>, target: f64, half_width: f64) -> Result<Self> {
        let fit = fit_power_law(&samples.iter().map(|s| (s[0], s[1])).collect::<Vec<_>>())?;
        self.slope = Some(fit.slope);
        self.stderr = Some(fit.stderr);
        self.target = Some(target);
        self.window = Some([target - half_width, target + half_width]);
        self.pass = (fit.slope - target).abs() <= half_width;
        self.samples = samples;
        Ok(self)
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.parameters.push((key.into(), value));
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Sample table as CSV with the record's column names.
    pub fn csv(&self) -> String {
        let mut out = format!("{},{}\n", self.columns[0], self.columns[1]);
        for s in &self.samples {
            out.push_str(&format!("{:e},{:e}\n", s[0], s[1]));
        }
        out
    }
}

/// Interior probes at the nodes with `|x − y| ∈ [lo, hi]`.
pub fn node_probes(mesh: &Mesh, y: &Point, lo: f64, hi: f64) -> Vec<Point> {
    mesh.nodes()
        .iter()
        .filter(|x| {
            let r = dist(x, y);
            r >= lo * (1.0 - 1e-12) && r <= hi * (1.0 + 1e-12)
        })
        .copied()
        .collect()
}

/// Decay of `|N(x, y)|` against `|x − y|` with the constant
/// `C₂ = max |N(x,y)| |x − y|^{d−2}`.
pub fn pointwise_decay_check(mesh: &Mesh, cols: &[DiscreteField], y: &Point, probes: &[Point]) -> Result<CheckRecord> {
    let h = mesh.h();
    let mut samples = Vec::new();
    let mut c2: f64 = 0.0;
    for x in probes {
        let r = dist(x, y);
        if r < 4.0 * h * (1.0 - 1e-12) {
            return Err(Error::UnderResolved(format!("probe at distance {r} below 4h")));
        }
        let mut v2 = 0.0;
        for c in cols {
            v2 += c.eval_at(mesh, x)?.iter().map(|t| t * t).sum::<f64>();
        }
        let v = v2.sqrt();
        c2 = c2.max(v * r.powf(DIM - 2.0));
        samples.push([r, v]);
    }
    let positive: Vec<[f64; 2]> = samples.iter().copied().filter(|s| s[1] > 0.0).collect();
    let mut rec = CheckRecord::new("pointwise-decay", ["distance", "magnitude"]);
    if positive.len() >= 2 {
        rec = rec.fit_slope(positive, 2.0 - DIM, 0.3)?;
    }
    rec.samples = samples;
    rec.constant = Some(c2);
    Ok(rec)
}

/// Hölder seminorm on `B_{R/2}(x)` and the ratio
/// `[u]_{C^μ(B_{R/2})} R^μ / (⨍_{B_R} |u|²)^{1/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderMeasure {
    pub seminorm: f64,
    pub ratio: f64,
    pub pairs: usize,
}

pub fn holder_seminorm(mesh: &Mesh, u: &DiscreteField, x: &Point, radius: f64, mu: f64) -> Result<HolderMeasure> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Domain(format!("Hölder exponent {mu} outside (0, 1]")));
    }
    let d = mesh.distance_to_boundary(x, false)?;
    if d < radius * (1.0 - 1e-12) {
        return Err(Error::InvalidGeometry(format!("B_R(x) leaves the domain: dist {d} < R {radius}")));
    }
    u.check_mesh(mesh)?;
    let m = u.m();
    let nodes: Vec<usize> = (0..mesh.node_count()).filter(|&p| dist(&mesh.nodes()[p], x) <= 0.5 * radius * (1.0 + 1e-12)).collect();
    let best: f64 = nodes
        .par_iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut s: f64 = 0.0;
            for &b in &nodes[i + 1..] {
                let diff2: f64 = (0..m).map(|c| (u.node_value(a, c) - u.node_value(b, c)).powi(2)).sum();
                s = s.max(diff2.sqrt() / dist(&mesh.nodes()[a], &mesh.nodes()[b]).powf(mu));
            }
            s
        })
        .reduce(|| 0.0, f64::max);
    let ball = Region::Inside { y: *x, r: radius };
    let (l2, _) = region_integrals(mesh, std::slice::from_ref(u), ball, 2.0, 1.0)?;
    let volume = 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
    let mean = (l2 / volume).sqrt();
    let ratio = if mean > 0.0 { best * radius.powf(mu) / mean } else { 0.0 };
    Ok(HolderMeasure { seminorm: best, ratio, pairs: nodes.len() * nodes.len().saturating_sub(1) / 2 })
}

/// Smooth data `(f, g)` from a seed: a few random trigonometric modes.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomData {
    m: usize,
    modes_f: Vec<([f64; 3], f64, f64, usize)>,
    modes_g: Vec<([f64; 3], f64, f64, usize)>,
    /// Constant added to `g` for exact discrete compatibility.
    pub shift: Vec<f64>,
}

fn eval_modes(modes: &[([f64; 3], f64, f64, usize)], x: &Point, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (k, phase, amp, comp) in modes {
        out[*comp] += amp * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2] + phase).cos();
    }
}

impl RandomData {
    /// Modes do not depend on the mesh; only the compatibility shift does.
    pub fn generate(m: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut modes = |count: usize| {
            (0..count)
                .map(|_| {
                    let k = [rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0)];
                    (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0), rng.gen_range(0..m))
                })
                .collect::<Vec<_>>()
        };
        let modes_f = modes(4);
        let modes_g = modes(3);
        Self { m, modes_f, modes_g, shift: vec![0.0; m] }
    }

    /// Drops the volume source, leaving an `L`-harmonic problem driven by
    /// boundary flux only.
    pub fn boundary_only(mut self) -> Self {
        self.modes_f.clear();
        self
    }

    pub fn f(&self, x: &Point, out: &mut [f64]) {
        eval_modes(&self.modes_f, x, out);
    }

    pub fn g(&self, x: &Point, out: &mut [f64]) {
        eval_modes(&self.modes_g, x, out);
        for (o, s) in out.iter_mut().zip(&self.shift) {
            *o += s;
        }
    }

    /// Sets the shift so that the assembled load has zero total per
    /// component.
    pub fn make_compatible(&mut self, mesh: &Mesh, order: usize) -> Result<Vec<f64>> {
        self.shift = vec![0.0; self.m];
        let f = |x: &Point, o: &mut [f64]| self.f(x, o);
        let g = |x: &Point, _: &Point, o: &mut [f64]| self.g(x, o);
        let load = assemble_load(mesh, self.m, Some(&f), Some(&g), order)?;
        let totals = load_totals(&load, self.m);
        let measure: f64 = crate::discretize::data_boundary_measure(mesh);
        self.shift = totals.iter().map(|t| -t / measure).collect();
        let f = |x: &Point, o: &mut [f64]| self.f(x, o);
        let g = |x: &Point, _: &Point, o: &mut [f64]| self.g(x, o);
        assemble_load(mesh, self.m, Some(&f), Some(&g), order)
    }
}

/// Local data sizes on `Ω_R(x) = Ω ∩ B_R(x)` and `Σ_R = ∂Ω ∩ B_R(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalData {
    pub u_l2: f64,
    pub u_max_half: f64,
    pub du_l2_half: f64,
    pub f_max: f64,
    pub g_max: f64,
}

fn local_data(
    mesh: &Mesh,
    u: &DiscreteField,
    x: &Point,
    radius: f64,
    f: &(dyn Fn(&Point, &mut [f64]) + Sync),
    g: &(dyn Fn(&Point, &mut [f64]) + Sync),
) -> Result<LocalData> {
    let m = u.m();
    let (u2, _) = region_integrals(mesh, std::slice::from_ref(u), Region::Inside { y: *x, r: radius }, 2.0, 1.0)?;
    let (_, du2) = region_integrals(mesh, std::slice::from_ref(u), Region::Inside { y: *x, r: 0.5 * radius }, 1.0, 2.0)?;
    let mut u_max: f64 = 0.0;
    for (p, xp) in mesh.nodes().iter().enumerate() {
        if dist(xp, x) <= 0.5 * radius * (1.0 + 1e-12) {
            let v2: f64 = (0..m).map(|i| u.node_value(p, i).powi(2)).sum();
            u_max = u_max.max(v2.sqrt());
        }
    }
    let rule = CellRule::gauss(2)?;
    let h = mesh.spacing();
    let mut val = vec![0.0; m];
    let mut f_max: f64 = 0.0;
    for cell in mesh.cells() {
        for xi in &rule.points {
            let p = [cell.lo[0] + xi[0] * h[0], cell.lo[1] + xi[1] * h[1], cell.lo[2] + xi[2] * h[2]];
            if dist(&p, x) < radius {
                f(&p, &mut val);
                f_max = f_max.max(val.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
    }
    let mut g_max: f64 = 0.0;
    for facet in data_facets(mesh) {
        for (p, _) in facet_rule(facet, 2)? {
            if dist(&p, x) < radius {
                g(&p, &mut val);
                g_max = g_max.max(val.iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
    }
    Ok(LocalData { u_l2: u2.sqrt(), u_max_half: u_max, du_l2_half: du2.sqrt(), f_max, g_max })
}

/// One (LB) trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundednessTrial {
    pub center: Point,
    pub radius: f64,
    pub ratio: f64,
}

/// Result of [`test_local_boundedness`]: the max ratio is a lower bound for
/// the (LB) constant `C₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundednessReport {
    pub constant: f64,
    pub trials: Vec<BoundednessTrial>,
    pub skipped: usize,
}

/// Seeded trial geometry, independent of the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPlan {
    pub data: RandomData,
    pub center: Point,
    pub radius: f64,
}

/// Trial plans inside the box `[lo, hi]` with radii in `[r_lo, r_hi]`.
pub fn trial_plans(m: usize, count: usize, seed: u64, lo: Point, hi: Point, r_lo: f64, r_hi: f64) -> Vec<TrialPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let data = RandomData::generate(m, &mut rng);
            let center = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1]), rng.gen_range(lo[2]..hi[2])];
            let radius = rng.gen_range(r_lo..r_hi);
            TrialPlan { data, center, radius }
        })
        .collect()
}

/// `‖u‖_{L^∞(Ω_{R/2})} / (R^{−d/2}‖u‖_{L²(Ω_R)} + R²‖f‖_∞ + R‖g‖_∞)`
/// maximized over seeded trials; `(f, g) = 0` trials are skipped.
pub fn test_local_boundedness(mesh: &Mesh, field: &CoefficientField, trials: usize, seed: u64, config: &SolveConfig) -> Result<BoundednessReport> {
    let bb = bounding_box(mesh);
    let plans = trial_plans(field.m(), trials, seed, bb.0, bb.1, 0.25, 0.5);
    local_boundedness_with(mesh, field, plans, config)
}

fn bounding_box(mesh: &Mesh) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for x in mesh.nodes() {
        for a in 0..3 {
            lo[a] = lo[a].min(x[a]);
            hi[a] = hi[a].max(x[a]);
        }
    }
    (lo, hi)
}

pub fn local_boundedness_with(mesh: &Mesh, field: &CoefficientField, plans: Vec<TrialPlan>, config: &SolveConfig) -> Result<BoundednessReport> {
    let system = NeumannSystem::new(mesh, field, config)?;
    let mut out = Vec::new();
    let mut skipped = 0;
    let mut constant: f64 = 0.0;
    for mut plan in plans {
        if !mesh.contains(&plan.center) {
            skipped += 1;
            continue;
        }
        let load = plan.data.make_compatible(mesh, config.quadrature_order)?;
        let u = system.solve_bounded_load(&load)?.field;
        let data = &plan.data;
        let f = |x: &Point, o: &mut [f64]| data.f(x, o);
        let g = |x: &Point, o: &mut [f64]| data.g(x, o);
        let ld = local_data(mesh, &u, &plan.center, plan.radius, &f, &g)?;
        let r = plan.radius;
        let denom = r.powf(-DIM / 2.0) * ld.u_l2 + r * r * ld.f_max + r * ld.g_max;
        if denom == 0.0 {
            skipped += 1;
            continue;
        }
        let ratio = ld.u_max_half / denom;
        constant = constant.max(ratio);
        out.push(BoundednessTrial { center: plan.center, radius: r, ratio });
    }
    Ok(BoundednessReport { constant, trials: out, skipped })
}

/// Caccioppoli quantities at one ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaccioppoliMeasure {
    /// `‖Du‖_{L²(Ω_{R/2})}`.
    pub lhs: f64,
    /// `R⁻¹‖u‖_{L²(Ω_R)} + R^{d/2}(1+R)‖g‖_∞ + R^{d/2+1}‖f‖_∞`.
    pub rhs: f64,
    pub ratio: f64,
    /// `(∫ η² |Du|²)^{1/2}` with the radial cutoff `η`.
    pub cutoff_energy: f64,
}

/// Radial cutoff: `1` on `B_{R/2}`, `0` outside `B_R`, smoothstep between,
/// `|Dη| ≤ 3/R`.
pub fn cutoff(s: f64, radius: f64) -> f64 {
    let t = ((s - 0.5 * radius) / (0.5 * radius)).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

pub fn caccioppoli_check(
    mesh: &Mesh,
    u: &DiscreteField,
    x: &Point,
    radius: f64,
    f: &(dyn Fn(&Point, &mut [f64]) + Sync),
    g: &(dyn Fn(&Point, &mut [f64]) + Sync),
) -> Result<CaccioppoliMeasure> {
    if radius < 4.0 * mesh.h() * (1.0 - 1e-12) {
        return Err(Error::UnderResolved(format!("R = {radius} below 4h = {}", 4.0 * mesh.h())));
    }
    u.check_mesh(mesh)?;
    let ld = local_data(mesh, u, x, radius, f, g)?;
    let rhs = ld.u_l2 / radius + radius.powf(DIM / 2.0) * (1.0 + radius) * ld.g_max + radius.powf(DIM / 2.0 + 1.0) * ld.f_max;
    let ratio = if rhs > 0.0 { ld.du_l2_half / rhs } else { 0.0 };
    // η-weighted energy with the cutoff sampled at quadrature points
    let rule = CellRule::subdivided(2, 2)?;
    let h = mesh.spacing();
    let vol = mesh.cell_volume();
    let m = u.m();
    let parts: Vec<f64> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let (near, _) = cell_corner_distances(mesh, c, x);
            if near >= radius {
                return 0.0;
            }
            let lo = mesh.cells()[c].lo;
            let mut g = vec![[0.0; 3]; m];
            let mut s = 0.0;
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let p = [lo[0] + xi[0] * h[0], lo[1] + xi[1] * h[1], lo[2] + xi[2] * h[2]];
                let eta = cutoff(dist(&p, x), radius);
                if eta == 0.0 {
                    continue;
                }
                u.gradient_local(mesh, c, xi, &mut g);
                s += w * vol * eta * eta * g.iter().map(|r| r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sum::<f64>();
            }
            s
        })
        .collect();
    let energy: f64 = parts.iter().sum();
    Ok(CaccioppoliMeasure { lhs: ld.du_l2_half, rhs, ratio, cutoff_energy: energy.sqrt() })
}

/// Hölder ratio maximized over boundary-driven `L`-harmonic fields.
pub fn holder_constant(system: &NeumannSystem, plans: &[TrialPlan], x: &Point, radius: f64, mu: f64) -> Result<f64> {
    let mut best: f64 = 0.0;
    for plan in plans {
        let mut data = plan.data.clone().boundary_only();
        let load = data.make_compatible(system.mesh(), system.config().quadrature_order)?;
        let u = system.solve_bounded_load(&load)?.field;
        best = best.max(holder_seminorm(system.mesh(), &u, x, radius, mu)?.ratio);
    }
    Ok(best)
}

/// Caccioppoli ratio maximized over seeded trials.
pub fn caccioppoli_constant(system: &NeumannSystem, plans: &[TrialPlan]) -> Result<f64> {
    let mut best: f64 = 0.0;
    for plan in plans {
        let mut data = plan.data.clone();
        let load = data.make_compatible(system.mesh(), system.config().quadrature_order)?;
        let u = system.solve_bounded_load(&load)?.field;
        let f = |x: &Point, o: &mut [f64]| data.f(x, o);
        let g = |x: &Point, o: &mut [f64]| data.g(x, o);
        best = best.max(caccioppoli_check(system.mesh(), &u, &plan.center, plan.radius, &f, &g)?.ratio);
    }
    Ok(best)
}

/// Condition constants measured on one mesh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionLevel {
    pub cells: usize,
    pub h: f64,
    /// Hölder ratio at `μ` (lower bound for `C₀`).
    pub c0: f64,
    /// Local-boundedness ratio (lower bound for `C₁`).
    pub c1: f64,
    /// `max |N(x,y)| |x − y|^{d−2}` over the probe set.
    pub c2: f64,
    pub caccioppoli: f64,
}

/// Setup of a refinement study on the unit cube.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionStudy {
    pub levels: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub mu: f64,
    /// Accepted relative variation across levels.
    pub variation: f64,
}

impl Default for ConditionStudy {
    fn default() -> Self {
        Self { levels: vec![8, 16, 24], trials: 20, seed: 0, mu: 0.5, variation: 0.5 }
    }
}

/// Outcome of [`run_condition_study`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionStudyReport {
    pub levels: Vec<ConditionLevel>,
    pub records: Vec<CheckRecord>,
    /// Per level: (LB)-ratio bounded and `C₂` bounded agree.
    pub consistent: Vec<bool>,
}

/// Runs the study on the unit cube with the pole and the Hölder ball at the
/// centre. Probes, data, centres and radii are fixed in physical space so
/// that the levels measure the same quantities.
pub fn run_condition_study(spec: &crate::coeff::CoefficientSpec, study: &ConditionStudy, config: &SolveConfig) -> Result<ConditionStudyReport> {
    use crate::kernel::{build_kernel, KernelConfig};
    let field = crate::coeff::make_coefficient(spec.clone())?;
    let m = field.m();
    let coarsest = *study.levels.iter().min().ok_or_else(|| Error::Config("no refinement levels".into()))?;
    let y = [0.5; 3];
    let probe_mesh = crate::mesh::build_box_mesh([1.0; 3], coarsest)?;
    let probes = node_probes(&probe_mesh, &y, 0.5, f64::INFINITY);
    let lb_plans = trial_plans(m, study.trials, study.seed, [0.0; 3], [1.0; 3], 0.25, 0.5);
    let r_min = 4.0 / coarsest as f64;
    let cacc_plans = trial_plans(m, study.trials, study.seed.wrapping_add(1), [0.0; 3], [1.0; 3], r_min, 1.5 * r_min);
    let holder_plans = trial_plans(m, study.trials.min(5), study.seed.wrapping_add(2), [0.5; 3], [0.5 + 1e-9; 3], 0.4, 0.4 + 1e-9);
    let mut levels = Vec::new();
    for &n in &study.levels {
        let mesh = crate::mesh::build_box_mesh([1.0; 3], n)?;
        let system = NeumannSystem::new(&mesh, &field, config)?;
        let kernel = build_kernel(&system, &y, &KernelConfig::default())?;
        let c2 = pointwise_decay_check(&mesh, &kernel.columns, &y, &probes)?.constant.unwrap_or(0.0);
        let c1 = local_boundedness_with(&mesh, &field, lb_plans.clone(), config)?.constant;
        let c0 = holder_constant(&system, &holder_plans, &y, 0.4, study.mu)?;
        let cacc = caccioppoli_constant(&system, &cacc_plans)?;
        levels.push(ConditionLevel { cells: n, h: mesh.h(), c0, c1, c2, caccioppoli: cacc });
    }
    let mut records = Vec::new();
    let named: [(&str, fn(&ConditionLevel) -> f64); 4] = [
        ("holder-constant", |l| l.c0),
        ("local-boundedness-constant", |l| l.c1),
        ("decay-constant", |l| l.c2),
        ("caccioppoli-constant", |l| l.caccioppoli),
    ];
    for (name, get) in named {
        let values: Vec<f64> = levels.iter().map(get).collect();
        let var = relative_variation(&values);
        let mut rec = CheckRecord::new(name, ["cells", "constant"]);
        rec.samples = levels.iter().map(|l| [l.cells as f64, get(l)]).collect();
        rec.constant = values.iter().cloned().fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
        rec.window = Some([0.0, study.variation]);
        rec.pass = var <= study.variation;
        records.push(rec.param("variation", var).param("mu", study.mu));
    }
    let bounded = |values: &[f64], k: usize| values[k].is_finite() && relative_variation(&values[..=k]) <= study.variation;
    let c1s: Vec<f64> = levels.iter().map(|l| l.c1).collect();
    let c2s: Vec<f64> = levels.iter().map(|l| l.c2).collect();
    let consistent = (0..levels.len()).map(|k| bounded(&c1s, k) == bounded(&c2s, k)).collect();
    Ok(ConditionStudyReport { levels, records, consistent })
}

/// `‖u − exact‖_{L²(Ω)}` by order-3 Gauss quadrature.
pub fn l2_error(mesh: &Mesh, u: &DiscreteField, exact: &(dyn Fn(&Point, &mut [f64]) + Sync)) -> Result<f64> {
    u.check_mesh(mesh)?;
    let rule = CellRule::gauss(3)?;
    let h = mesh.spacing();
    let vol = mesh.cell_volume();
    let m = u.m();
    let parts: Vec<f64> = (0..mesh.cells().len())
        .into_par_iter()
        .map(|c| {
            let lo = mesh.cells()[c].lo;
            let mut a = vec![0.0; m];
            let mut b = vec![0.0; m];
            let mut s = 0.0;
            for (xi, w) in rule.points.iter().zip(&rule.weights) {
                let p = [lo[0] + xi[0] * h[0], lo[1] + xi[1] * h[1], lo[2] + xi[2] * h[2]];
                u.eval_local(mesh, c, xi, &mut a);
                exact(&p, &mut b);
                s += w * vol * a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            }
            s
        })
        .collect();
    Ok(parts.iter().sum::<f64>().sqrt())
}

/// `(max − min) / min` of a positive sequence.
pub fn relative_variation(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return f64::INFINITY;
    }
    (max - min) / min
}

/// All records of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimateReport {
    pub records: Vec<CheckRecord>,
}

impl EstimateReport {
    pub fn push(&mut self, r: CheckRecord) {
        self.records.push(r);
    }

    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }
}
