//! Hexahedral lattice meshes for boxes, staircase unions of boxes and
//! truncated Lipschitz-graph domains.
//!
//! Every mesh is a set of active cells on a uniform lattice. Nodes are the
//! corners of active cells; boundary facets are the cell faces without an
//! active neighbour. Local corner numbering inside a cell is the bit pattern
//! `a = ix + 2 iy + 4 iz`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub type Point = [f64; 3];

const NONE: usize = usize::MAX;

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox {
    pub lo: Point,
    pub hi: Point,
}

impl AxisBox {
    pub fn new(lo: Point, hi: Point) -> Self {
        Self { lo, hi }
    }

    fn contains(&self, x: &Point) -> bool {
        (0..3).all(|a| x[a] >= self.lo[a] && x[a] <= self.hi[a])
    }
}

/// Piecewise-bilinear height profile `x_3 = φ(x_1, x_2)` sampled on a
/// regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphProfile {
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub counts: [usize; 2],
    /// Row-major samples, index `i + counts[0] * j`.
    pub values: Vec<f64>,
}

impl GraphProfile {
    pub fn flat(lo: [f64; 2], hi: [f64; 2], height: f64) -> Self {
        Self {
            origin: lo,
            spacing: [hi[0] - lo[0], hi[1] - lo[1]],
            counts: [2, 2],
            values: vec![height; 4],
        }
    }

    pub fn from_fn(
        lo: [f64; 2],
        hi: [f64; 2],
        counts: [usize; 2],
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let spacing = [
            (hi[0] - lo[0]) / (counts[0] - 1) as f64,
            (hi[1] - lo[1]) / (counts[1] - 1) as f64,
        ];
        let mut values = Vec::with_capacity(counts[0] * counts[1]);
        for j in 0..counts[1] {
            for i in 0..counts[0] {
                values.push(f(lo[0] + i as f64 * spacing[0], lo[1] + j as f64 * spacing[1]));
            }
        }
        Self { origin: lo, spacing, counts, values }
    }

    fn sample(&self, i: usize, j: usize) -> f64 {
        self.values[i + self.counts[0] * j]
    }

    fn validate(&self) -> Result<()> {
        if self.counts[0] < 2 || self.counts[1] < 2 {
            return Err(Error::InvalidGeometry("profile needs at least 2 samples per axis".into()));
        }
        if self.values.len() != self.counts[0] * self.counts[1] {
            return Err(Error::InvalidGeometry("profile sample count mismatch".into()));
        }
        if !(self.spacing[0] > 0.0 && self.spacing[1] > 0.0) {
            return Err(Error::InvalidGeometry("profile spacing must be positive".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("profile samples must be finite".into()));
        }
        Ok(())
    }

    /// Bilinear interpolation, clamped to the sampled rectangle.
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        let (i, s) = Self::locate(x1, self.origin[0], self.spacing[0], self.counts[0]);
        let (j, t) = Self::locate(x2, self.origin[1], self.spacing[1], self.counts[1]);
        let v00 = self.sample(i, j);
        let v10 = self.sample(i + 1, j);
        let v01 = self.sample(i, j + 1);
        let v11 = self.sample(i + 1, j + 1);
        (1.0 - s) * (1.0 - t) * v00 + s * (1.0 - t) * v10 + (1.0 - s) * t * v01 + s * t * v11
    }

    fn locate(x: f64, origin: f64, h: f64, n: usize) -> (usize, f64) {
        let u = ((x - origin) / h).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n - 2);
        (i, u - i as f64)
    }

    /// Exact Lipschitz constant of the interpolant: the gradient of a
    /// bilinear patch is extremal at the patch corners.
    pub fn lipschitz_constant(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.counts[1] - 1 {
            for i in 0..self.counts[0] - 1 {
                let v00 = self.sample(i, j);
                let v10 = self.sample(i + 1, j);
                let v01 = self.sample(i, j + 1);
                let v11 = self.sample(i + 1, j + 1);
                let dx_lo = (v10 - v00) / self.spacing[0];
                let dx_hi = (v11 - v01) / self.spacing[0];
                let dy_lo = (v01 - v00) / self.spacing[1];
                let dy_hi = (v11 - v10) / self.spacing[1];
                for (dx, dy) in [(dx_lo, dy_lo), (dx_lo, dy_hi), (dx_hi, dy_lo), (dx_hi, dy_hi)] {
                    worst = worst.max(dx.hypot(dy));
                }
            }
        }
        worst
    }

    /// Maximum of the interpolant over a rectangle.
    fn max_over(&self, lo: [f64; 2], hi: [f64; 2]) -> f64 {
        let coords = |axis: usize| {
            let mut c = vec![lo[axis], hi[axis]];
            for k in 0..self.counts[axis] {
                let g = self.origin[axis] + k as f64 * self.spacing[axis];
                if g > lo[axis] && g < hi[axis] {
                    c.push(g);
                }
            }
            c
        };
        let xs = coords(0);
        let ys = coords(1);
        let mut best = f64::NEG_INFINITY;
        for &x in &xs {
            for &y in &ys {
                best = best.max(self.eval(x, y));
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    Box { extents: [f64; 3] },
    Staircase { boxes: Vec<AxisBox> },
    TruncatedGraph {
        profile: GraphProfile,
        lipschitz: f64,
        truncation: AxisBox,
    },
}

/// Boundary facet classification. `Graph` facets carry the conormal
/// condition in graph mode, `Far` facets are the artificial truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetKind {
    Plain,
    Graph,
    Far,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub nodes: [usize; 4],
    pub area: f64,
    pub normal: Point,
    pub owner: usize,
    pub center: Point,
    /// Tangential half-extents along the two in-plane axes.
    pub half: [f64; 2],
    pub axis: usize,
    pub kind: FacetKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub nodes: [usize; 8],
    pub index: [usize; 3],
    pub lo: Point,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    origin: Point,
    spacing: [f64; 3],
    dims: [usize; 3],
    nodes: Vec<Point>,
    lattice_node: Vec<usize>,
    cells: Vec<Cell>,
    lattice_cell: Vec<usize>,
    facets: Vec<Facet>,
    is_boundary: Vec<bool>,
    is_far: Vec<bool>,
    domain: Domain,
    boundary_measure: f64,
    volume: f64,
    fingerprint: u64,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
            && self.nodes == other.nodes
            && self.cells == other.cells
            && self.facets == other.facets
    }
}

/// Uniform mesh of the box `[0, extents]` with `n` cells along every axis.
pub fn build_box_mesh(extents: [f64; 3], n: usize) -> Result<Mesh> {
    build_box_mesh_cells(extents, [n, n, n])
}

/// Box mesh with an explicit cell count per axis.
pub fn build_box_mesh_cells(extents: [f64; 3], cells: [usize; 3]) -> Result<Mesh> {
    if extents.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidGeometry(format!("extents must be positive, got {extents:?}")));
    }
    if cells.iter().any(|&c| c == 0) {
        return Err(Error::InvalidGeometry("cell count must be at least 1".into()));
    }
    let spacing = [
        extents[0] / cells[0] as f64,
        extents[1] / cells[1] as f64,
        extents[2] / cells[2] as f64,
    ];
    let active = vec![true; cells[0] * cells[1] * cells[2]];
    Mesh::from_lattice([0.0; 3], spacing, cells, active, Domain::Box { extents }, |_, _| {
        FacetKind::Plain
    })
}

/// Box mesh with cell size `h` (extents must be integer multiples of `h`).
pub fn build_box_mesh_spacing(extents: [f64; 3], h: f64) -> Result<Mesh> {
    if !(h > 0.0) {
        return Err(Error::InvalidGeometry("cell size must be positive".into()));
    }
    let cells = lattice_counts(&extents, h)?;
    build_box_mesh_cells(extents, cells)
}

fn lattice_counts(extents: &[f64; 3], h: f64) -> Result<[usize; 3]> {
    let mut out = [0usize; 3];
    for a in 0..3 {
        let n = extents[a] / h;
        let r = n.round();
        if !(extents[a] > 0.0) || (n - r).abs() > 1e-9 * n.max(1.0) || r < 1.0 {
            return Err(Error::InvalidGeometry(format!(
                "extent {} is not a positive multiple of h = {h}",
                extents[a]
            )));
        }
        out[a] = r as usize;
    }
    Ok(out)
}

/// Union of lattice-aligned boxes. The union's interior must be connected
/// through shared cell faces.
pub fn build_staircase_mesh(boxes: &[AxisBox], h: f64) -> Result<Mesh> {
    if boxes.is_empty() {
        return Err(Error::InvalidGeometry("staircase profile has no boxes".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidGeometry("cell size must be positive".into()));
    }
    let mut lo = boxes[0].lo;
    let mut hi = boxes[0].hi;
    for b in boxes {
        for a in 0..3 {
            if !(b.hi[a] > b.lo[a]) {
                return Err(Error::InvalidGeometry(format!("degenerate box {b:?}")));
            }
            let on_lattice = |v: f64| ((v / h) - (v / h).round()).abs() < 1e-9;
            if !on_lattice(b.lo[a]) || !on_lattice(b.hi[a]) {
                return Err(Error::InvalidGeometry(format!("box {b:?} is not aligned to h = {h}")));
            }
            lo[a] = lo[a].min(b.lo[a]);
            hi[a] = hi[a].max(b.hi[a]);
        }
    }
    let extents = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let dims = lattice_counts(&extents, h)?;
    let mut active = vec![false; dims[0] * dims[1] * dims[2]];
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let c = [
                    lo[0] + (i as f64 + 0.5) * h,
                    lo[1] + (j as f64 + 0.5) * h,
                    lo[2] + (k as f64 + 0.5) * h,
                ];
                active[i + dims[0] * (j + dims[1] * k)] = boxes.iter().any(|b| b.contains(&c));
            }
        }
    }
    check_connected(&active, dims)?;
    let domain = if boxes.len() == 1 && lo == [0.0; 3] {
        Domain::Box { extents }
    } else {
        Domain::Staircase { boxes: boxes.to_vec() }
    };
    Mesh::from_lattice(lo, [h; 3], dims, active, domain, |_, _| FacetKind::Plain)
}

/// Staircase approximation of `{x_3 > φ(x')} ∩ truncation` at resolution `h`.
///
/// A lattice cell is kept when its bottom face lies on or above the profile
/// over its whole footprint, so every interior node sits strictly above the
/// graph. Facets on the truncation planes (sides and top) are `Far`; the
/// remaining boundary is the staircase graph surface.
pub fn build_truncated_graph_mesh(
    profile: &GraphProfile,
    lipschitz: f64,
    truncation: AxisBox,
    h: f64,
) -> Result<Mesh> {
    profile.validate()?;
    if !(lipschitz >= 0.0) {
        return Err(Error::InvalidGeometry("Lipschitz constant must be non-negative".into()));
    }
    let observed = profile.lipschitz_constant();
    if observed > lipschitz * (1.0 + 1e-12) + 1e-14 {
        return Err(Error::LipschitzViolation { observed, declared: lipschitz });
    }
    let extents = [
        truncation.hi[0] - truncation.lo[0],
        truncation.hi[1] - truncation.lo[1],
        truncation.hi[2] - truncation.lo[2],
    ];
    let dims = lattice_counts(&extents, h)?;
    let lo = truncation.lo;
    let mut active = vec![false; dims[0] * dims[1] * dims[2]];
    for j in 0..dims[1] {
        for i in 0..dims[0] {
            let a = [lo[0] + i as f64 * h, lo[1] + j as f64 * h];
            let b = [a[0] + h, a[1] + h];
            let top = profile.max_over(a, b);
            for k in 0..dims[2] {
                let bottom = lo[2] + k as f64 * h;
                active[i + dims[0] * (j + dims[1] * k)] = bottom >= top - 1e-12 * h;
            }
        }
    }
    if !active.iter().any(|&a| a) {
        return Err(Error::InvalidGeometry("truncation box lies below the graph".into()));
    }
    check_connected(&active, dims)?;
    let tol = 1e-9 * h;
    let hi = truncation.hi;
    let classify = move |axis: usize, center: &Point| {
        let far = match axis {
            0 | 1 => (center[axis] - lo[axis]).abs() < tol || (center[axis] - hi[axis]).abs() < tol,
            _ => (center[2] - hi[2]).abs() < tol,
        };
        if far {
            FacetKind::Far
        } else {
            FacetKind::Graph
        }
    };
    let domain = Domain::TruncatedGraph {
        profile: profile.clone(),
        lipschitz,
        truncation,
    };
    Mesh::from_lattice(lo, [h; 3], dims, active, domain, classify)
}

fn check_connected(active: &[bool], dims: [usize; 3]) -> Result<()> {
    let total = active.iter().filter(|&&a| a).count();
    let Some(start) = active.iter().position(|&a| a) else {
        return Err(Error::InvalidGeometry("empty domain".into()));
    };
    let mut seen = vec![false; active.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut count = 0;
    while let Some(c) = queue.pop_front() {
        count += 1;
        let i = c % dims[0];
        let j = (c / dims[0]) % dims[1];
        let k = c / (dims[0] * dims[1]);
        let idx = [i, j, k];
        for axis in 0..3 {
            for dir in [-1i64, 1] {
                let n = idx[axis] as i64 + dir;
                if n < 0 || n >= dims[axis] as i64 {
                    continue;
                }
                let mut nb = idx;
                nb[axis] = n as usize;
                let id = nb[0] + dims[0] * (nb[1] + dims[1] * nb[2]);
                if active[id] && !seen[id] {
                    seen[id] = true;
                    queue.push_back(id);
                }
            }
        }
    }
    if count != total {
        return Err(Error::InvalidGeometry(format!(
            "domain is disconnected ({count} of {total} cells reachable)"
        )));
    }
    Ok(())
}

impl Mesh {
    fn from_lattice(
        origin: Point,
        spacing: [f64; 3],
        dims: [usize; 3],
        active: Vec<bool>,
        domain: Domain,
        classify: impl Fn(usize, &Point) -> FacetKind,
    ) -> Result<Self> {
        let nd = [dims[0] + 1, dims[1] + 1, dims[2] + 1];
        let cell_id = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
        let node_id = |i: usize, j: usize, k: usize| i + nd[0] * (j + nd[1] * k);

        let mut lattice_node = vec![NONE; nd[0] * nd[1] * nd[2]];
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    if active[cell_id(i, j, k)] {
                        for a in 0..8 {
                            lattice_node[node_id(i + (a & 1), j + ((a >> 1) & 1), k + (a >> 2))] = 0;
                        }
                    }
                }
            }
        }
        let mut nodes = Vec::new();
        for k in 0..nd[2] {
            for j in 0..nd[1] {
                for i in 0..nd[0] {
                    let id = node_id(i, j, k);
                    if lattice_node[id] != NONE {
                        lattice_node[id] = nodes.len();
                        nodes.push([
                            origin[0] + i as f64 * spacing[0],
                            origin[1] + j as f64 * spacing[1],
                            origin[2] + k as f64 * spacing[2],
                        ]);
                    }
                }
            }
        }

        let mut lattice_cell = vec![NONE; active.len()];
        let mut cells = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let id = cell_id(i, j, k);
                    if !active[id] {
                        continue;
                    }
                    let mut cn = [0usize; 8];
                    for (a, slot) in cn.iter_mut().enumerate() {
                        *slot = lattice_node[node_id(i + (a & 1), j + ((a >> 1) & 1), k + (a >> 2))];
                    }
                    lattice_cell[id] = cells.len();
                    cells.push(Cell {
                        nodes: cn,
                        index: [i, j, k],
                        lo: [
                            origin[0] + i as f64 * spacing[0],
                            origin[1] + j as f64 * spacing[1],
                            origin[2] + k as f64 * spacing[2],
                        ],
                    });
                }
            }
        }

        let mut facets = Vec::new();
        let mut is_boundary = vec![false; nodes.len()];
        let mut is_far = vec![false; nodes.len()];
        for (cid, cell) in cells.iter().enumerate() {
            for axis in 0..3 {
                for side in 0..2usize {
                    let idx = cell.index;
                    let neighbour_active = if side == 0 {
                        idx[axis] > 0 && {
                            let mut nb = idx;
                            nb[axis] -= 1;
                            active[cell_id(nb[0], nb[1], nb[2])]
                        }
                    } else {
                        idx[axis] + 1 < dims[axis] && {
                            let mut nb = idx;
                            nb[axis] += 1;
                            active[cell_id(nb[0], nb[1], nb[2])]
                        }
                    };
                    if neighbour_active {
                        continue;
                    }
                    let local: Vec<usize> = (0..8).filter(|a| (a >> axis) & 1 == side).collect();
                    // local corners in bit order; reorder into a cycle
                    let fnodes = [
                        cell.nodes[local[0]],
                        cell.nodes[local[1]],
                        cell.nodes[local[3]],
                        cell.nodes[local[2]],
                    ];
                    let (t0, t1) = match axis {
                        0 => (1, 2),
                        1 => (0, 2),
                        _ => (0, 1),
                    };
                    let mut center = [0.0; 3];
                    for a in 0..3 {
                        center[a] = cell.lo[a] + 0.5 * spacing[a];
                    }
                    center[axis] = cell.lo[axis] + side as f64 * spacing[axis];
                    let mut normal = [0.0; 3];
                    normal[axis] = if side == 0 { -1.0 } else { 1.0 };
                    let kind = classify(axis, &center);
                    for &n in &fnodes {
                        is_boundary[n] = true;
                        if kind == FacetKind::Far {
                            is_far[n] = true;
                        }
                    }
                    facets.push(Facet {
                        nodes: fnodes,
                        area: spacing[t0] * spacing[t1],
                        normal,
                        owner: cid,
                        center,
                        half: [0.5 * spacing[t0], 0.5 * spacing[t1]],
                        axis,
                        kind,
                    });
                }
            }
        }
        let boundary_measure = facets.iter().map(|f| f.area).sum();
        let volume = cells.len() as f64 * spacing[0] * spacing[1] * spacing[2];

        let mut fp: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            fp ^= v;
            fp = fp.wrapping_mul(0x0100_0000_01b3);
        };
        for a in 0..3 {
            mix(origin[a].to_bits());
            mix(spacing[a].to_bits());
            mix(dims[a] as u64);
        }
        for (i, &a) in active.iter().enumerate() {
            if a {
                mix(i as u64);
            }
        }
        for f in &facets {
            mix(f.kind as u64);
        }

        Ok(Self {
            origin,
            spacing,
            dims,
            nodes,
            lattice_node,
            cells,
            lattice_cell,
            facets,
            is_boundary,
            is_far,
            domain,
            boundary_measure,
            volume,
            fingerprint: fp,
        })
    }

    pub fn dim(&self) -> usize {
        3
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Largest cell edge.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// |∂Ω|, the sum of all facet areas.
    pub fn boundary_measure(&self) -> f64 {
        self.boundary_measure
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn is_graph(&self) -> bool {
        matches!(self.domain, Domain::TruncatedGraph { .. })
    }

    pub fn is_boundary_node(&self, n: usize) -> bool {
        self.is_boundary[n]
    }

    pub fn is_far_node(&self, n: usize) -> bool {
        self.is_far[n]
    }

    pub fn far_mask(&self) -> &[bool] {
        &self.is_far
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&n| self.is_boundary[n]).collect()
    }

    /// Node at a lattice position, if active.
    pub fn lattice_node(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        let nd = [self.dims[0] + 1, self.dims[1] + 1];
        if i > self.dims[0] || j > self.dims[1] || k > self.dims[2] {
            return None;
        }
        let id = self.lattice_node[i + nd[0] * (j + nd[1] * k)];
        (id != NONE).then_some(id)
    }

    pub fn lattice_cell(&self, i: usize, j: usize, k: usize) -> Option<usize> {
        if i >= self.dims[0] || j >= self.dims[1] || k >= self.dims[2] {
            return None;
        }
        let id = self.lattice_cell[i + self.dims[0] * (j + self.dims[1] * k)];
        (id != NONE).then_some(id)
    }

    /// Node closest to `x` (lattice rounding), if that node exists.
    pub fn nearest_node(&self, x: &Point) -> Option<usize> {
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let u = ((x[a] - self.origin[a]) / self.spacing[a]).round();
            if u < 0.0 || u > self.dims[a] as f64 {
                return None;
            }
            idx[a] = u as usize;
        }
        self.lattice_node(idx[0], idx[1], idx[2])
    }

    /// Active cell containing `x` (closed cells; ties go to any active
    /// candidate) and the local coordinates in `[0, 1]^3`.
    pub fn locate(&self, x: &Point) -> Option<(usize, [f64; 3])> {
        let mut base = [0i64; 3];
        for a in 0..3 {
            let u = (x[a] - self.origin[a]) / self.spacing[a];
            if u < -1e-12 || u > self.dims[a] as f64 + 1e-12 {
                return None;
            }
            base[a] = (u.floor() as i64).clamp(0, self.dims[a] as i64 - 1);
        }
        for off in 0..8usize {
            let mut idx = [0usize; 3];
            let mut ok = true;
            for a in 0..3 {
                let shift = ((off >> a) & 1) as i64;
                let v = base[a] - shift;
                if v < 0 {
                    ok = false;
                    break;
                }
                idx[a] = v as usize;
            }
            if !ok {
                continue;
            }
            if let Some(c) = self.lattice_cell(idx[0], idx[1], idx[2]) {
                let lo = self.cells[c].lo;
                let mut xi = [0.0; 3];
                let mut inside = true;
                for a in 0..3 {
                    let t = (x[a] - lo[a]) / self.spacing[a];
                    if !(-1e-9..=1.0 + 1e-9).contains(&t) {
                        inside = false;
                    }
                    xi[a] = t.clamp(0.0, 1.0);
                }
                if inside {
                    return Some((c, xi));
                }
            }
        }
        None
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.locate(x).is_some()
    }

    /// dist(x, ∂Ω). With `exclude_far`, truncation facets are ignored.
    pub fn distance_to_boundary(&self, x: &Point, exclude_far: bool) -> Result<f64> {
        if !self.contains(x) {
            return Err(Error::OutOfDomain(*x));
        }
        let mut best = f64::INFINITY;
        for f in &self.facets {
            if exclude_far && f.kind == FacetKind::Far {
                continue;
            }
            best = best.min(facet_distance(f, x));
        }
        Ok(best)
    }

    /// d'_x = min(d_x, R_c) measured to the graph boundary only.
    pub fn graph_distance_capped(&self, x: &Point, cap: f64) -> Result<f64> {
        Ok(self.distance_to_boundary(x, true)?.min(cap))
    }

    /// Plain-text dump, one record per line.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# kind id fields...");
        for (i, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "node {i} {} {} {}", p[0], p[1], p[2]);
        }
        for (i, c) in self.cells.iter().enumerate() {
            let ids: Vec<String> = c.nodes.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "cell {i} {}", ids.join(" "));
        }
        for (i, f) in self.facets.iter().enumerate() {
            let kind = match f.kind {
                FacetKind::Plain => "plain",
                FacetKind::Graph => "graph",
                FacetKind::Far => "far",
            };
            let _ = writeln!(
                out,
                "facet {i} {} {} {} {} {} {} {} {} {} {kind}",
                f.nodes[0], f.nodes[1], f.nodes[2], f.nodes[3], f.area, f.normal[0], f.normal[1],
                f.normal[2], f.owner
            );
        }
        out
    }
}

fn facet_distance(f: &Facet, x: &Point) -> f64 {
    let (t0, t1) = match f.axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let dn = x[f.axis] - f.center[f.axis];
    let d0 = ((x[t0] - f.center[t0]).abs() - f.half[0]).max(0.0);
    let d1 = ((x[t1] - f.center[t1]).abs() - f.half[1]).max(0.0);
    (dn * dn + d0 * d0 + d1 * d1).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l_shape(h: f64) -> Mesh {
        build_staircase_mesh(
            &[
                AxisBox::new([0.0, 0.0, 0.0], [1.0, 0.5, 1.0]),
                AxisBox::new([0.0, 0.5, 0.0], [0.5, 1.0, 1.0]),
            ],
            h,
        )
        .unwrap()
    }

    #[test]
    fn unit_cube_counts() {
        let m = build_box_mesh([1.0; 3], 1).unwrap();
        assert_eq!((m.node_count(), m.cells().len(), m.facets().len()), (8, 1, 6));
        assert!((m.boundary_measure() - 6.0).abs() < 1e-14);
        let m = build_box_mesh([1.0; 3], 2).unwrap();
        assert_eq!((m.node_count(), m.cells().len(), m.facets().len()), (27, 8, 24));
        let m = build_box_mesh([1.0; 3], 5).unwrap();
        assert_eq!(m.node_count(), 216);
        assert_eq!(m.facets().len(), 6 * 25);
    }

    #[test]
    fn elongated_box_surface() {
        let m = build_box_mesh_spacing([2.0, 1.0, 1.0], 0.5).unwrap();
        assert!((m.boundary_measure() - 10.0).abs() < 1e-12);
        assert!((m.volume() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_box() {
        assert!(matches!(build_box_mesh([1.0, 0.0, 1.0], 2), Err(Error::InvalidGeometry(_))));
        assert!(matches!(build_box_mesh([1.0; 3], 0), Err(Error::InvalidGeometry(_))));
        assert!(matches!(build_box_mesh([-1.0, 1.0, 1.0], 2), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn facet_invariants() {
        for m in [build_box_mesh([1.0, 2.0, 0.5], 3).unwrap(), l_shape(0.25)] {
            let mut closure = [0.0; 3];
            let mut owned = vec![0usize; m.cells().len()];
            for f in m.facets() {
                let len = f.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((len - 1.0).abs() < 1e-12);
                assert!(f.area > 0.0);
                for a in 0..3 {
                    closure[a] += f.area * f.normal[a];
                }
                owned[f.owner] += 1;
            }
            assert!(closure.iter().all(|c| c.abs() < 1e-10));
            let total: f64 = m.facets().iter().map(|f| f.area).sum();
            assert_eq!(total, m.boundary_measure());
        }
    }

    #[test]
    fn single_box_staircase_matches_box() {
        let s = build_staircase_mesh(&[AxisBox::new([0.0; 3], [1.0; 3])], 0.25).unwrap();
        let b = build_box_mesh([1.0; 3], 4).unwrap();
        assert_eq!(s, b);
    }

    #[test]
    fn l_shape_counts_and_area() {
        // brute-force lattice count of the set difference
        let h = 0.25;
        let mut expected = 0;
        for i in 0..4 {
            for j in 0..4 {
                for _k in 0..4 {
                    let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
                    if !(x > 0.5 && y > 0.5) {
                        expected += 1;
                    }
                }
            }
        }
        let m = l_shape(h);
        assert_eq!(m.cells().len(), expected);
        assert_eq!(expected, 48);
        // exposed lattice faces counted independently of the mesh builder
        let inside = |i: i64, j: i64, k: i64| {
            (0..4).contains(&i) && (0..4).contains(&j) && (0..4).contains(&k) && !(i >= 2 && j >= 2)
        };
        let mut faces = 0;
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    if !inside(i, j, k) {
                        continue;
                    }
                    for (di, dj, dk) in [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)] {
                        if !inside(i + di, j + dj, k + dk) {
                            faces += 1;
                        }
                    }
                }
            }
        }
        let area = faces as f64 * h * h;
        assert!((area - 5.5).abs() < 1e-12);
        assert!((m.boundary_measure() - area).abs() < 1e-12);
        for h in [0.125, 0.0625] {
            let r = l_shape(h);
            assert!((r.boundary_measure() - area).abs() < 1e-12);
            assert!((r.volume() - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn disconnected_union_rejected() {
        let r = build_staircase_mesh(
            &[
                AxisBox::new([0.0; 3], [0.5; 3]),
                AxisBox::new([1.0, 1.0, 1.0], [1.5, 1.5, 1.5]),
            ],
            0.25,
        );
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
        // edge-touching boxes share no face
        let r = build_staircase_mesh(
            &[
                AxisBox::new([0.0; 3], [0.5, 0.5, 1.0]),
                AxisBox::new([0.5, 0.5, 0.0], [1.0, 1.0, 1.0]),
            ],
            0.25,
        );
        assert!(matches!(r, Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn flat_graph_is_cube() {
        let p = GraphProfile::flat([0.0, 0.0], [1.0, 1.0], 0.0);
        let g = build_truncated_graph_mesh(&p, 0.0, AxisBox::new([0.0; 3], [1.0; 3]), 0.25).unwrap();
        let b = build_box_mesh([1.0; 3], 4).unwrap();
        assert_eq!(g.nodes(), b.nodes());
        assert_eq!(g.cells(), b.cells());
        for f in g.facets() {
            let bottom = f.normal[2] < -0.5;
            assert_eq!(f.kind == FacetKind::Graph, bottom);
            assert_eq!(f.kind == FacetKind::Far, !bottom);
        }
    }

    fn wedge() -> GraphProfile {
        GraphProfile::from_fn([0.0, 0.0], [1.0, 1.0], [3, 2], |x, _| 0.5 * (x - 0.5).abs())
    }

    #[test]
    fn wedge_graph_interior_above_profile() {
        let p = wedge();
        assert!((p.lipschitz_constant() - 0.5).abs() < 1e-12);
        let m = build_truncated_graph_mesh(&p, 0.5, AxisBox::new([0.0; 3], [1.0; 3]), 0.125).unwrap();
        let mut interior = 0;
        for (n, x) in m.nodes().iter().enumerate() {
            if !m.is_boundary_node(n) {
                interior += 1;
                assert!(x[2] > p.eval(x[0], x[1]));
            }
        }
        assert!(interior > 0);
        // graph and far facets partition the boundary
        let graph = m.facets().iter().filter(|f| f.kind == FacetKind::Graph).count();
        let far = m.facets().iter().filter(|f| f.kind == FacetKind::Far).count();
        assert_eq!(graph + far, m.facets().len());
        assert!(graph > 0 && far > 0);
    }

    #[test]
    fn lipschitz_violation() {
        let r = build_truncated_graph_mesh(&wedge(), 0.1, AxisBox::new([0.0; 3], [1.0; 3]), 0.125);
        assert!(matches!(r, Err(Error::LipschitzViolation { .. })));
    }

    #[test]
    fn boundary_distances() {
        let m = build_box_mesh([1.0; 3], 4).unwrap();
        assert!((m.distance_to_boundary(&[0.5; 3], false).unwrap() - 0.5).abs() < 1e-14);
        assert!((m.distance_to_boundary(&[0.1, 0.5, 0.5], false).unwrap() - 0.1).abs() < 1e-14);
        assert!(matches!(
            m.distance_to_boundary(&[1.5, 0.5, 0.5], false),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn l_shape_reentrant_distance() {
        let m = l_shape(0.25);
        let x = [0.45, 0.45, 0.5];
        // brute force over dense facet sample points
        let mut brute = f64::INFINITY;
        for f in m.facets() {
            let (t0, t1) = match f.axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for a in 0..=50 {
                for b in 0..=50 {
                    let mut p = f.center;
                    p[t0] += f.half[0] * (2.0 * a as f64 / 50.0 - 1.0);
                    p[t1] += f.half[1] * (2.0 * b as f64 / 50.0 - 1.0);
                    let d = ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2) + (p[2] - x[2]).powi(2)).sqrt();
                    brute = brute.min(d);
                }
            }
        }
        let d = m.distance_to_boundary(&x, false).unwrap();
        assert!((d - brute).abs() < 1e-12);
        assert!((d - 0.05 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dump_has_one_line_per_record() {
        let m = build_box_mesh([1.0; 3], 1).unwrap();
        let d = m.dump();
        assert_eq!(d.lines().filter(|l| l.starts_with("node")).count(), 8);
        assert_eq!(d.lines().filter(|l| l.starts_with("cell")).count(), 1);
        assert_eq!(d.lines().filter(|l| l.starts_with("facet")).count(), 6);
    }
}
