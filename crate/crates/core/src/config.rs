//! Run configuration in a line-oriented `key = value` format.
//!
//! Blank lines and lines starting with `#` are ignored; every key has a
//! default, unknown keys are rejected. The canonical rendering
//! ([`RunConfig::to_key_value`]) lists every key and is what the config hash
//! is computed from.
//!
//! | key | default |
//! |-----|---------|
//! | `version` | `1` |
//! | `kind` | `full-suite` |
//! | `seed` | `0` |
//! | `output` | `out` |
//! | `mesh.kind` | `box` (`box`, `l-shape`, `graph`) |
//! | `mesh.extents` | `1,1,1` |
//! | `mesh.cells` | `12` (cells per unit length for `l-shape`) |
//! | `mesh.half_width`, `mesh.height` | `2`, `4` (graph truncation box) |
//! | `mesh.spacing` | `0.125` (graph) |
//! | `mesh.profile`, `mesh.amplitude` | `flat`, `0` (`wave`: `a sin x₁ sin x₂`) |
//! | `coefficient.kind` | `identity` (`checkerboard`, `cellwise-random`, `skew`, `vmo`) |
//! | `coefficient.m` | `1` |
//! | `coefficient.contrast`, `coefficient.cell_size` | `10`, `0.25` |
//! | `coefficient.lambda`, `coefficient.bound` | `1`, `4` |
//! | `coefficient.amplitude`, `coefficient.frequency` | `0.5`, `2` |
//! | `coefficient.base` | `cellwise-random` (base of `skew`) |
//! | `solve.*` | see [`SolveConfig`] |
//! | `poles` | `center` (`near-boundary`, `lattice`) |
//! | `poles.lattice` | `2` |
//! | `kernel.epsilon_factor` | `2` |
//! | `oracle.cutoff` | `20` |
//! | `data.kind`, `data.f`, `data.g` | `cosine`, `0`, `0` (`random`, `constant`) |
//! | `study.levels` | `8,16,24` (empty disables the study) |
//! | `study.trials`, `study.mu` | `20`, `0.5` |
//! | `window.*` | see [`Windows`] |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::coeff::CoefficientSpec;
use crate::error::{Error, Result};
use crate::mesh::{build_box_mesh_cells, build_staircase_mesh, build_truncated_graph_mesh, AxisBox, GraphProfile, Mesh};
use crate::solve::SolveConfig;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSpec {
    Box { extents: [f64; 3], cells: usize },
    /// `[0,1]³` minus the quadrant `[0.5,1]² × [0,1]`.
    LShape { cells: usize },
    Graph { half_width: f64, height: f64, spacing: f64, amplitude: f64 },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshSpec::Box { extents, cells } => {
                let n = |e: f64| ((e * *cells as f64).round() as usize).max(1);
                build_box_mesh_cells(*extents, [n(extents[0]), n(extents[1]), n(extents[2])])
            }
            MeshSpec::LShape { cells } => build_staircase_mesh(
                &[AxisBox::new([0.0; 3], [0.5, 1.0, 1.0]), AxisBox::new([0.5, 0.0, 0.0], [1.0, 0.5, 1.0])],
                1.0 / *cells as f64,
            ),
            MeshSpec::Graph { half_width, height, spacing, amplitude } => {
                let (l, a) = (*half_width, *amplitude);
                let profile = if a == 0.0 {
                    GraphProfile::flat([-l, -l], [l, l], 0.0)
                } else {
                    let n = ((2.0 * l / (*spacing / 4.0)).round() as usize).max(1) + 1;
                    GraphProfile::from_fn([-l, -l], [l, l], [n, n], move |x1, x2| a * x1.sin() * x2.sin())
                };
                let k = profile.lipschitz_constant();
                let top = a.abs() + height;
                build_truncated_graph_mesh(&profile, k, AxisBox::new([-l, -l, -a.abs()], [l, l, top]), *spacing)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            MeshSpec::Box { extents, cells } => format!("box({},{},{};cells={cells})", extents[0], extents[1], extents[2]),
            MeshSpec::LShape { cells } => format!("l-shape(cells={cells})"),
            MeshSpec::Graph { half_width, height, spacing, amplitude } => {
                format!("graph(half_width={half_width},height={height},h={spacing},amplitude={amplitude})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolePolicy {
    Center,
    /// Centre of the face `x₁ = lo` pushed inwards to `d_y = 4h`.
    NearBoundary,
    /// Interior nodes of an `n³` sub-lattice.
    Lattice(usize),
}

/// What data the `solve` experiment uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataSpec {
    /// Exact solution `Π cos(π x_a / e_a)` of the Laplacian on a box.
    Cosine,
    Random,
    Constant { f: f64, g: f64 },
}

/// Accepted half-widths of slope windows and tolerances of the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Windows {
    pub decay: f64,
    pub weak_value: f64,
    pub weak_gradient: f64,
    pub annulus: f64,
    pub lp_value: f64,
    pub lp_gradient: f64,
    pub identity: f64,
    pub representation: f64,
    pub oracle: f64,
    pub graph_oracle: f64,
    pub variation: f64,
}

impl Default for Windows {
    fn default() -> Self {
        Self {
            decay: 0.3,
            weak_value: 0.6,
            weak_gradient: 0.3,
            annulus: 0.15,
            lp_value: 0.3,
            lp_gradient: 0.2,
            identity: 1e-8,
            representation: 1e-7,
            oracle: 0.05,
            graph_oracle: 0.10,
            variation: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: String,
    pub seed: u64,
    pub output: PathBuf,
    pub mesh: MeshSpec,
    pub coefficient: CoefficientSpec,
    pub solve: SolveConfig,
    pub poles: PolePolicy,
    pub epsilon_factor: f64,
    pub oracle_cutoff: usize,
    pub data: DataSpec,
    pub study_levels: Vec<usize>,
    pub study_trials: usize,
    pub study_mu: f64,
    pub windows: Windows,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: "full-suite".into(),
            seed: 0,
            output: PathBuf::from("out"),
            mesh: MeshSpec::Box { extents: [1.0; 3], cells: 12 },
            coefficient: CoefficientSpec::Identity { m: 1 },
            solve: SolveConfig::default(),
            poles: PolePolicy::Center,
            epsilon_factor: 2.0,
            oracle_cutoff: 20,
            data: DataSpec::Cosine,
            study_levels: vec![8, 16, 24],
            study_trials: 20,
            study_mu: 0.5,
            windows: Windows::default(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::Config(format!("{key}: `{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: `{v}` is not finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Config(format!("{key}: `{v}` is not a non-negative integer")))
}

fn parse_list<T>(key: &str, v: &str, f: fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(vec![]);
    }
    v.split(',').map(|s| f(key, s.trim())).collect()
}

fn parse_triple(key: &str, v: &str) -> Result<[f64; 3]> {
    let xs = parse_list(key, v, parse_f64)?;
    xs.try_into().map_err(|_| Error::Config(format!("{key}: expected three comma-separated numbers")))
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses a config file's text, then validates it.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{}`", i + 1, k.trim())));
            }
        }
        Self::from_map(&kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn from_map(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = RunConfig::default();
        let get = |k: &str| kv.get(k).map(|s| s.as_str());
        if let Some(v) = get("version") {
            if parse_usize("version", v)? != CONFIG_VERSION as usize {
                return Err(Error::Config(format!("unsupported config version {v}")));
            }
        }
        if let Some(v) = get("kind") {
            c.kind = v.to_string();
        }
        if let Some(v) = get("seed") {
            c.seed = v.parse().map_err(|_| Error::Config(format!("seed: `{v}`")))?;
        }
        if let Some(v) = get("output") {
            c.output = PathBuf::from(v);
        }

        let mesh_kind = get("mesh.kind").unwrap_or("box");
        let cells = get("mesh.cells").map(|v| parse_usize("mesh.cells", v)).transpose()?.unwrap_or(12);
        c.mesh = match mesh_kind {
            "box" => MeshSpec::Box {
                extents: get("mesh.extents").map(|v| parse_triple("mesh.extents", v)).transpose()?.unwrap_or([1.0; 3]),
                cells,
            },
            "l-shape" => MeshSpec::LShape { cells },
            "graph" => {
                let f = |k: &str, d: f64| get(k).map(|v| parse_f64(k, v)).transpose().map(|x| x.unwrap_or(d));
                let amplitude = match get("mesh.profile").unwrap_or("flat") {
                    "flat" => 0.0,
                    "wave" => f("mesh.amplitude", 0.0)?,
                    p => return Err(Error::Config(format!("mesh.profile: unknown `{p}`"))),
                };
                MeshSpec::Graph { half_width: f("mesh.half_width", 2.0)?, height: f("mesh.height", 4.0)?, spacing: f("mesh.spacing", 0.125)?, amplitude }
            }
            k => return Err(Error::Config(format!("mesh.kind: unknown `{k}`"))),
        };

        c.coefficient = parse_coefficient(kv, c.seed)?;

        let s = &mut c.solve;
        if let Some(v) = get("solve.tolerance") {
            s.tolerance = parse_f64("solve.tolerance", v)?;
        }
        if let Some(v) = get("solve.max_iterations") {
            s.max_iterations = parse_usize("solve.max_iterations", v)?;
        }
        if let Some(v) = get("solve.constraint") {
            s.constraint = v.into();
        }
        if let Some(v) = get("solve.far_boundary") {
            s.far_boundary = v.into();
        }
        if let Some(v) = get("solve.krylov") {
            s.krylov = if v == "auto" { None } else { Some(v.into()) };
        }
        if let Some(v) = get("solve.quadrature_order") {
            s.quadrature_order = parse_usize("solve.quadrature_order", v)?;
        }
        if let Some(v) = get("solve.compatibility_tolerance") {
            s.compatibility_tolerance = parse_f64("solve.compatibility_tolerance", v)?;
        }
        if let Some(v) = get("solve.truncation_margin") {
            s.truncation_margin = parse_f64("solve.truncation_margin", v)?;
        }

        c.poles = match get("poles").unwrap_or("center") {
            "center" => PolePolicy::Center,
            "near-boundary" => PolePolicy::NearBoundary,
            "lattice" => PolePolicy::Lattice(get("poles.lattice").map(|v| parse_usize("poles.lattice", v)).transpose()?.unwrap_or(2)),
            p => return Err(Error::Config(format!("poles: unknown policy `{p}`"))),
        };
        if let Some(v) = get("kernel.epsilon_factor") {
            c.epsilon_factor = parse_f64("kernel.epsilon_factor", v)?;
        }
        if let Some(v) = get("oracle.cutoff") {
            c.oracle_cutoff = parse_usize("oracle.cutoff", v)?;
        }
        c.data = match get("data.kind").unwrap_or("cosine") {
            "cosine" => DataSpec::Cosine,
            "random" => DataSpec::Random,
            "constant" => DataSpec::Constant {
                f: get("data.f").map(|v| parse_f64("data.f", v)).transpose()?.unwrap_or(0.0),
                g: get("data.g").map(|v| parse_f64("data.g", v)).transpose()?.unwrap_or(0.0),
            },
            k => return Err(Error::Config(format!("data.kind: unknown `{k}`"))),
        };
        if let Some(v) = get("study.levels") {
            c.study_levels = parse_list("study.levels", v, parse_usize)?;
        }
        if let Some(v) = get("study.trials") {
            c.study_trials = parse_usize("study.trials", v)?;
        }
        if let Some(v) = get("study.mu") {
            c.study_mu = parse_f64("study.mu", v)?;
        }
        let w = &mut c.windows;
        for (key, slot) in [
            ("window.decay", &mut w.decay),
            ("window.weak_value", &mut w.weak_value),
            ("window.weak_gradient", &mut w.weak_gradient),
            ("window.annulus", &mut w.annulus),
            ("window.lp_value", &mut w.lp_value),
            ("window.lp_gradient", &mut w.lp_gradient),
            ("window.identity", &mut w.identity),
            ("window.representation", &mut w.representation),
            ("window.oracle", &mut w.oracle),
            ("window.graph_oracle", &mut w.graph_oracle),
            ("window.variation", &mut w.variation),
        ] {
            if let Some(v) = get(key) {
                *slot = parse_f64(key, v)?;
            }
        }

        let known = c.key_values();
        if let Some(k) = kv.keys().find(|k| !known.iter().any(|(kk, _)| kk == *k) && !OPTIONAL_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key `{k}`")));
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.solve.validate()?;
        crate::coeff::make_coefficient(self.coefficient.clone())?;
        if let MeshSpec::Box { cells: 0, .. } | MeshSpec::LShape { cells: 0 } = self.mesh {
            return Err(Error::Config("mesh.cells must be at least 1".into()));
        }
        if !(self.epsilon_factor >= 2.0) {
            return Err(Error::Config(format!("kernel.epsilon_factor {} below 2", self.epsilon_factor)));
        }
        if self.oracle_cutoff == 0 {
            return Err(Error::Config("oracle.cutoff must be at least 1".into()));
        }
        if !(self.study_mu > 0.0 && self.study_mu <= 1.0) {
            return Err(Error::Config(format!("study.mu {} outside (0, 1]", self.study_mu)));
        }
        if self.study_trials == 0 {
            return Err(Error::Config("study.trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Every key with its effective value, in a fixed order.
    pub fn key_values(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| out.push((k.to_string(), v));
        put("version", CONFIG_VERSION.to_string());
        put("kind", self.kind.clone());
        put("seed", self.seed.to_string());
        put("output", self.output.display().to_string());
        match &self.mesh {
            MeshSpec::Box { extents, cells } => {
                put("mesh.kind", "box".into());
                put("mesh.extents", join(extents));
                put("mesh.cells", cells.to_string());
            }
            MeshSpec::LShape { cells } => {
                put("mesh.kind", "l-shape".into());
                put("mesh.cells", cells.to_string());
            }
            MeshSpec::Graph { half_width, height, spacing, amplitude } => {
                put("mesh.kind", "graph".into());
                put("mesh.half_width", half_width.to_string());
                put("mesh.height", height.to_string());
                put("mesh.spacing", spacing.to_string());
                put("mesh.profile", if *amplitude == 0.0 { "flat" } else { "wave" }.into());
                put("mesh.amplitude", amplitude.to_string());
            }
        }
        for (k, v) in coefficient_keys(&self.coefficient) {
            put(&k, v);
        }
        let s = &self.solve;
        put("solve.tolerance", s.tolerance.to_string());
        put("solve.max_iterations", s.max_iterations.to_string());
        put("solve.constraint", s.constraint.clone());
        put("solve.far_boundary", s.far_boundary.clone());
        put("solve.krylov", s.krylov.clone().unwrap_or_else(|| "auto".into()));
        put("solve.quadrature_order", s.quadrature_order.to_string());
        put("solve.compatibility_tolerance", s.compatibility_tolerance.to_string());
        put("solve.truncation_margin", s.truncation_margin.to_string());
        match self.poles {
            PolePolicy::Center => put("poles", "center".into()),
            PolePolicy::NearBoundary => put("poles", "near-boundary".into()),
            PolePolicy::Lattice(n) => {
                put("poles", "lattice".into());
                put("poles.lattice", n.to_string());
            }
        }
        put("kernel.epsilon_factor", self.epsilon_factor.to_string());
        put("oracle.cutoff", self.oracle_cutoff.to_string());
        match self.data {
            DataSpec::Cosine => put("data.kind", "cosine".into()),
            DataSpec::Random => put("data.kind", "random".into()),
            DataSpec::Constant { f, g } => {
                put("data.kind", "constant".into());
                put("data.f", f.to_string());
                put("data.g", g.to_string());
            }
        }
        put("study.levels", join(&self.study_levels));
        put("study.trials", self.study_trials.to_string());
        put("study.mu", self.study_mu.to_string());
        let w = &self.windows;
        put("window.decay", w.decay.to_string());
        put("window.weak_value", w.weak_value.to_string());
        put("window.weak_gradient", w.weak_gradient.to_string());
        put("window.annulus", w.annulus.to_string());
        put("window.lp_value", w.lp_value.to_string());
        put("window.lp_gradient", w.lp_gradient.to_string());
        put("window.identity", w.identity.to_string());
        put("window.representation", w.representation.to_string());
        put("window.oracle", w.oracle.to_string());
        put("window.graph_oracle", w.graph_oracle.to_string());
        put("window.variation", w.variation.to_string());
        out
    }

    /// Canonical `key = value` text; parses back to the same config.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.key_values() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Hex SHA-256 of the canonical text, excluding the output directory.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.key_values() {
            if k != "output" {
                h.update(format!("{k} = {v}\n").as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Keys accepted on input even when the chosen variant does not render them.
const OPTIONAL_KEYS: &[&str] = &[
    "mesh.extents",
    "mesh.half_width",
    "mesh.height",
    "mesh.spacing",
    "mesh.profile",
    "mesh.amplitude",
    "coefficient.m",
    "coefficient.contrast",
    "coefficient.cell_size",
    "coefficient.lambda",
    "coefficient.bound",
    "coefficient.amplitude",
    "coefficient.frequency",
    "coefficient.base",
    "coefficient.seed",
    "poles.lattice",
    "data.f",
    "data.g",
];

fn parse_coefficient(kv: &BTreeMap<String, String>, seed: u64) -> Result<CoefficientSpec> {
    let get = |k: &str| kv.get(k).map(|s| s.as_str());
    let f = |k: &str, d: f64| get(k).map(|v| parse_f64(k, v)).transpose().map(|x| x.unwrap_or(d));
    let m = get("coefficient.m").map(|v| parse_usize("coefficient.m", v)).transpose()?.unwrap_or(1);
    let cseed = get("coefficient.seed").map(|v| v.parse::<u64>().map_err(|_| Error::Config(format!("coefficient.seed: `{v}`")))).transpose()?.unwrap_or(seed);
    let build = |kind: &str| -> Result<CoefficientSpec> {
        Ok(match kind {
            "identity" => CoefficientSpec::Identity { m },
            "checkerboard" => CoefficientSpec::ScalarCheckerboard { contrast: f("coefficient.contrast", 10.0)?, cell_size: f("coefficient.cell_size", 0.25)?, seed: cseed },
            "cellwise-random" => CoefficientSpec::CellwiseRandom {
                m,
                lambda: f("coefficient.lambda", 1.0)?,
                bound: f("coefficient.bound", 4.0)?,
                cell_size: f("coefficient.cell_size", 0.25)?,
                seed: cseed,
            },
            "vmo" => CoefficientSpec::SmoothVmo { m, frequency: f("coefficient.frequency", 2.0)?, amplitude: f("coefficient.amplitude", 0.5)? },
            k => return Err(Error::Config(format!("coefficient.kind: unknown `{k}`"))),
        })
    };
    match get("coefficient.kind").unwrap_or("identity") {
        "skew" => {
            let base = build(get("coefficient.base").unwrap_or("cellwise-random"))?;
            Ok(CoefficientSpec::SkewPerturbed { base: Box::new(base), amplitude: f("coefficient.amplitude", 0.5)? })
        }
        k => build(k),
    }
}

fn coefficient_keys(spec: &CoefficientSpec) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut put = |k: &str, v: String| out.push((format!("coefficient.{k}"), v));
    fn base_keys(spec: &CoefficientSpec, put: &mut dyn FnMut(&str, String)) {
        match spec {
            CoefficientSpec::Identity { m } => {
                put("m", m.to_string());
            }
            CoefficientSpec::ScalarCheckerboard { contrast, cell_size, seed } => {
                put("contrast", contrast.to_string());
                put("cell_size", cell_size.to_string());
                put("seed", seed.to_string());
            }
            CoefficientSpec::CellwiseRandom { m, lambda, bound, cell_size, seed } => {
                put("m", m.to_string());
                put("lambda", lambda.to_string());
                put("bound", bound.to_string());
                put("cell_size", cell_size.to_string());
                put("seed", seed.to_string());
            }
            CoefficientSpec::SmoothVmo { m, frequency, amplitude } => {
                put("m", m.to_string());
                put("frequency", frequency.to_string());
                put("amplitude", amplitude.to_string());
            }
            CoefficientSpec::SkewPerturbed { base, .. } => base_keys(base, put),
        }
    }
    match spec {
        CoefficientSpec::SkewPerturbed { base, amplitude } => {
            put("kind", "skew".into());
            put("base", kind_name(base).into());
            put("amplitude", amplitude.to_string());
            base_keys(base, &mut put);
        }
        s => {
            put("kind", kind_name(s).into());
            base_keys(s, &mut put);
        }
    }
    out
}

fn kind_name(spec: &CoefficientSpec) -> &'static str {
    match spec {
        CoefficientSpec::Identity { .. } => "identity",
        CoefficientSpec::ScalarCheckerboard { .. } => "checkerboard",
        CoefficientSpec::CellwiseRandom { .. } => "cellwise-random",
        CoefficientSpec::SmoothVmo { .. } => "vmo",
        CoefficientSpec::SkewPerturbed { .. } => "skew",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::parse(&c.to_key_value()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn variants_round_trip() {
        let text = "kind = kernel\nseed = 7\nmesh.kind = graph\nmesh.profile = wave\nmesh.amplitude = 0.2\n\
                    coefficient.kind = skew\ncoefficient.base = cellwise-random\ncoefficient.m = 2\n\
                    poles = lattice\npoles.lattice = 3\ndata.kind = constant\ndata.f = 1\nstudy.levels =\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.poles, PolePolicy::Lattice(3));
        assert!(c.study_levels.is_empty());
        assert!(matches!(c.coefficient, CoefficientSpec::SkewPerturbed { .. }));
        assert_eq!(RunConfig::parse(&c.to_key_value()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["mesh.cellz = 3", "seed = -1", "solve.constraint = magic", "window.decay = x", "kind", "version = 2", "seed = 1\nseed = 2"] {
            assert!(RunConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn hash_tracks_content_not_output() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
