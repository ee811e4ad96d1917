//! Analytic references for `L = −Δ`: the free-space fundamental solution,
//! the Neumann function of a box in the boundary-mean-zero normalization,
//! and the half-space reflection kernel.
//!
//! # Normalization of the box kernel
//!
//! The cosine expansion
//!
//! ```text
//! G(x, y) = Σ_{k≠0} φ_k(x) φ_k(y) / λ_k
//! ```
//!
//! solves `−ΔG = δ_y − 1/|Ω|` with zero flux and `∫_Ω G = 0`. The kernel
//! used by the lab instead has flux `−1/|∂Ω|` and zero boundary mean, so
//!
//! ```text
//! N(x, y) = G(x, y) + w(x) + c(y),
//! −Δw = 1/|Ω|,  ∂w/∂n = −1/|∂Ω|,
//! c(y) = −(∫_{∂Ω} G(·, y) + ∫_{∂Ω} w) / |∂Ω|.
//! ```
//!
//! On a box `w(x) = −Σ_i (x_i − a_i/2)² / (a_i |∂Ω|)` and
//! `∫_{∂Ω} G(·, y) = Σ_i a_i B₂(y_i / a_i)` with `B₂(t) = t² − t + 1/6`.
//!
//! # Evaluation
//!
//! The mode sum converges slowly near the diagonal. It is rearranged
//! exactly with the heat kernel split at time `α`:
//!
//! ```text
//! G = Σ_{0<|k|≤K} e^{−λ_k α} φ_k(x) φ_k(y) / λ_k
//!   + Σ_images erfc(|x − z| / 2√α) / (4π|x − z|) − α/|Ω|
//! ```
//!
//! where `z` runs over the reflections of `y` across the box faces. With
//! `α` tied to the cutoff `K` the omitted modes are below `e^{−36.8}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    /// Modes per axis: `0 ≤ k_i ≤ cutoff`.
    pub cutoff: usize,
    /// Target accuracy of the image sum; exceeding it raises the
    /// truncation warning.
    pub tolerance: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { cutoff: 20, tolerance: 1e-10 }
    }
}

/// `1 / (4π|x − y|)`.
pub fn fundamental_solution(x: &Point, y: &Point) -> Result<f64> {
    let r = dist(x, y);
    if r == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(1.0 / (4.0 * PI * r))
}

/// `Γ(x − y) + Γ(x − y*)` with `y*` the mirror image of `y` in `{x₃ = 0}`.
pub fn halfspace_neumann(x: &Point, y: &Point) -> Result<f64> {
    if x[2] <= 0.0 || y[2] <= 0.0 {
        return Err(Error::OutOfDomain(if x[2] <= 0.0 { *x } else { *y }));
    }
    let star = [y[0], y[1], -y[2]];
    Ok(fundamental_solution(x, y)? + fundamental_solution(x, &star)?)
}

fn dist(x: &Point, y: &Point) -> f64 {
    ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)).sqrt()
}

/// Box oracle value with its truncation flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    pub truncation_warning: bool,
}

/// The Neumann function of `−Δ` on `[0, a₁] × [0, a₂] × [0, a₃]`.
#[derive(Debug, Clone)]
pub struct BoxNeumannOracle {
    a: [f64; 3],
    config: SeriesConfig,
    alpha: f64,
    images: i64,
    volume: f64,
    area: f64,
}

impl BoxNeumannOracle {
    pub fn new(extents: [f64; 3], config: SeriesConfig) -> Result<Self> {
        if extents.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidGeometry("box extents must be positive".into()));
        }
        if config.cutoff == 0 {
            return Err(Error::Config("series cutoff must be at least 1".into()));
        }
        let amax = extents.iter().cloned().fold(0.0, f64::max);
        let amin = extents.iter().cloned().fold(f64::INFINITY, f64::min);
        // smallest omitted eigenvalue is at least π²(K+1)²/amax²
        let kk = (config.cutoff + 1) as f64 / amax;
        let alpha = 36.8 / (PI * PI * kk * kk);
        // image shells needed for erfc(d / 2√α) below the tolerance
        let reach = 2.0 * alpha.sqrt() * erfc_inverse_bound(config.tolerance.max(1e-300));
        let images = ((reach / amin + 1.0) / 2.0).ceil() as i64 + 1;
        let volume = extents[0] * extents[1] * extents[2];
        let area = 2.0 * (extents[0] * extents[1] + extents[1] * extents[2] + extents[0] * extents[2]);
        Ok(Self { a: extents, config, alpha, images, volume, area })
    }

    pub fn unit_cube(config: SeriesConfig) -> Result<Self> {
        Self::new([1.0; 3], config)
    }

    fn inside(&self, x: &Point) -> bool {
        (0..3).all(|i| x[i] > 0.0 && x[i] < self.a[i])
    }

    /// Volume-mean-zero, zero-flux kernel `G`.
    pub fn green(&self, x: &Point, y: &Point) -> Result<SeriesValue> {
        if !self.inside(x) || !self.inside(y) {
            return Err(Error::OutOfDomain(if self.inside(x) { *y } else { *x }));
        }
        if x == y {
            return Err(Error::Singularity);
        }
        let k = self.config.cutoff;
        // per-axis mode products φ_k(x_i) φ_k(y_i)
        let mut table: Vec<Vec<f64>> = Vec::with_capacity(3);
        for i in 0..3 {
            let mut v = vec![0.0; k + 1];
            for (n, slot) in v.iter_mut().enumerate() {
                let c2 = if n == 0 { 1.0 / self.a[i] } else { 2.0 / self.a[i] };
                let w = n as f64 * PI / self.a[i];
                *slot = c2 * (w * x[i]).cos() * (w * y[i]).cos();
            }
            table.push(v);
        }
        let mut spectral = 0.0;
        for k0 in 0..=k {
            let l0 = (k0 as f64 * PI / self.a[0]).powi(2);
            for k1 in 0..=k {
                let l1 = (k1 as f64 * PI / self.a[1]).powi(2);
                let p01 = table[0][k0] * table[1][k1];
                for k2 in 0..=k {
                    if k0 + k1 + k2 == 0 {
                        continue;
                    }
                    let lam = l0 + l1 + (k2 as f64 * PI / self.a[2]).powi(2);
                    spectral += p01 * table[2][k2] * (-lam * self.alpha).exp() / lam;
                }
            }
        }
        let s = 2.0 * self.alpha.sqrt();
        let mut local = 0.0;
        let mut tail: f64 = 0.0;
        let n = self.images;
        for n0 in -n..=n {
            for s0 in [1.0, -1.0] {
                let z0 = s0 * y[0] + 2.0 * n0 as f64 * self.a[0];
                for n1 in -n..=n {
                    for s1 in [1.0, -1.0] {
                        let z1 = s1 * y[1] + 2.0 * n1 as f64 * self.a[1];
                        for n2 in -n..=n {
                            for s2 in [1.0, -1.0] {
                                let z2 = s2 * y[2] + 2.0 * n2 as f64 * self.a[2];
                                let r = dist(x, &[z0, z1, z2]);
                                let term = libm::erfc(r / s) / (4.0 * PI * r);
                                local += term;
                                if n0.abs() == n || n1.abs() == n || n2.abs() == n {
                                    tail = tail.max(term.abs());
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(SeriesValue {
            value: spectral + local - self.alpha / self.volume,
            truncation_warning: tail > self.config.tolerance,
        })
    }

    /// `w(x) = −Σ_i (x_i − a_i/2)² / (a_i |∂Ω|)`.
    pub fn correction(&self, x: &Point) -> f64 {
        -(0..3).map(|i| (x[i] - 0.5 * self.a[i]).powi(2) / self.a[i]).sum::<f64>() / self.area
    }

    /// `∫_{∂Ω} w dσ`.
    pub fn correction_boundary_integral(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..3 {
            let face = self.volume / self.a[i];
            let mut s = 0.25 * self.a[i] * face;
            for j in 0..3 {
                if j != i {
                    s += self.a[j] * face / 12.0;
                }
            }
            total += 2.0 * s;
        }
        -total / self.area
    }

    /// `∫_{∂Ω} G(·, y) dσ = Σ_i a_i B₂(y_i / a_i)`.
    pub fn green_boundary_integral(&self, y: &Point) -> f64 {
        (0..3)
            .map(|i| {
                let t = y[i] / self.a[i];
                self.a[i] * (t * t - t + 1.0 / 6.0)
            })
            .sum()
    }

    /// `N(x, y) = G(x, y) + w(x) + c(y)`.
    pub fn neumann(&self, x: &Point, y: &Point) -> Result<SeriesValue> {
        let g = self.green(x, y)?;
        let c = -(self.green_boundary_integral(y) + self.correction_boundary_integral()) / self.area;
        Ok(SeriesValue { value: g.value + self.correction(x) + c, ..g })
    }

    pub fn extents(&self) -> [f64; 3] {
        self.a
    }

    pub fn boundary_measure(&self) -> f64 {
        self.area
    }
}

/// `t` with `erfc(t) ≤ tol` (a safe upper bound).
fn erfc_inverse_bound(tol: f64) -> f64 {
    let mut t = 0.5;
    while libm::erfc(t) > tol && t < 30.0 {
        t += 0.25;
    }
    t
}

/// Neumann function of `−Δ` on the unit cube with zero boundary mean and
/// flux `−1/|∂Ω|`.
pub fn cube_neumann_series(x: &Point, y: &Point, config: &SeriesConfig) -> Result<f64> {
    Ok(BoxNeumannOracle::unit_cube(*config)?.neumann(x, y)?.value)
}

/// One probe row: point, distance to the pole, value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub x: Point,
    pub distance: f64,
    pub value: f64,
}

/// Probe table in the CSV schema shared with kernel probes.
pub fn probe_csv(samples: &[ProbeSample]) -> String {
    let mut out = String::from("x0,x1,x2,distance,value\n");
    for s in samples {
        out.push_str(&format!("{},{},{},{},{:e}\n", s.x[0], s.x[1], s.x[2], s.distance, s.value));
    }
    out
}

/// Evaluates an oracle at a list of probes around `y`.
pub fn sample_oracle(probes: &[Point], y: &Point, f: impl Fn(&Point, &Point) -> Result<f64>) -> Result<Vec<ProbeSample>> {
    probes
        .iter()
        .map(|x| Ok(ProbeSample { x: *x, distance: dist(x, y), value: f(x, y)? }))
        .collect()
}
