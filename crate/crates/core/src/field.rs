//! Nodal vector fields on a mesh.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};
use crate::quadrature::{shape, shape_gradients};

/// `m` values per node, stored node-major (`values[node * m + i]`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    mesh: u64,
    m: usize,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(mesh: &Mesh, m: usize) -> Self {
        Self { mesh: mesh.fingerprint(), m, values: vec![0.0; mesh.node_count() * m] }
    }

    pub fn from_values(mesh: &Mesh, m: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() * m {
            return Err(Error::Interface(format!(
                "{} values for {} nodes with m = {m}",
                values.len(),
                mesh.node_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite field value".into()));
        }
        Ok(Self { mesh: mesh.fingerprint(), m, values })
    }

    /// Nodal interpolant of a function.
    pub fn interpolate(mesh: &Mesh, m: usize, f: impl Fn(&Point, &mut [f64])) -> Self {
        let mut values = vec![0.0; mesh.node_count() * m];
        for (n, x) in mesh.nodes().iter().enumerate() {
            f(x, &mut values[n * m..(n + 1) * m]);
        }
        Self { mesh: mesh.fingerprint(), m, values }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mesh_fingerprint(&self) -> u64 {
        self.mesh
    }

    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if self.mesh != mesh.fingerprint() || self.values.len() != mesh.node_count() * self.m {
            return Err(Error::Interface("field belongs to a different mesh".into()));
        }
        Ok(())
    }

    pub fn node_value(&self, node: usize, i: usize) -> f64 {
        self.values[node * self.m + i]
    }

    /// Component `i` as a scalar field.
    pub fn component(&self, i: usize) -> DiscreteField {
        let values = self.values.iter().skip(i).step_by(self.m).copied().collect();
        Self { mesh: self.mesh, m: 1, values }
    }

    pub fn scaled(&self, a: f64) -> DiscreteField {
        Self { values: self.values.iter().map(|v| a * v).collect(), ..self.clone() }
    }

    /// Values at local coordinates of a cell.
    pub fn eval_local(&self, mesh: &Mesh, cell: usize, xi: &[f64; 3], out: &mut [f64]) {
        let n = shape(xi);
        let nodes = &mesh.cells()[cell].nodes;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (a, &node) in nodes.iter().enumerate() {
            for i in 0..self.m {
                out[i] += n[a] * self.values[node * self.m + i];
            }
        }
    }

    /// Gradient rows `D u^i` at local coordinates of a cell.
    pub fn gradient_local(&self, mesh: &Mesh, cell: usize, xi: &[f64; 3], out: &mut [[f64; 3]]) {
        let g = shape_gradients(xi, &mesh.spacing());
        let nodes = &mesh.cells()[cell].nodes;
        out.iter_mut().for_each(|v| *v = [0.0; 3]);
        for (a, &node) in nodes.iter().enumerate() {
            for i in 0..self.m {
                let u = self.values[node * self.m + i];
                for d in 0..3 {
                    out[i][d] += g[a][d] * u;
                }
            }
        }
    }

    /// Point readout: the nodal value when `x` is a node, trilinear
    /// interpolation otherwise.
    pub fn eval_at(&self, mesh: &Mesh, x: &Point) -> Result<Vec<f64>> {
        self.check_mesh(mesh)?;
        if let Some(n) = mesh.nearest_node(x) {
            let p = mesh.nodes()[n];
            let d2: f64 = (0..3).map(|a| (p[a] - x[a]).powi(2)).sum();
            if d2 <= (1e-12 * mesh.h()).powi(2) {
                return Ok(self.values[n * self.m..(n + 1) * self.m].to_vec());
            }
        }
        let (cell, xi) = mesh.locate(x).ok_or(Error::OutOfDomain(*x))?;
        let mut out = vec![0.0; self.m];
        self.eval_local(mesh, cell, &xi, &mut out);
        Ok(out)
    }

    /// Node-value table, one `x y z v_1 … v_m` row per node.
    pub fn to_table(&self, mesh: &Mesh) -> String {
        let mut out = String::new();
        for (n, x) in mesh.nodes().iter().enumerate() {
            out.push_str(&format!("{} {} {}", x[0], x[1], x[2]));
            for i in 0..self.m {
                out.push_str(&format!(" {:e}", self.values[n * self.m + i]));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_box_mesh;

    #[test]
    fn trilinear_fields_are_reproduced() {
        let mesh = build_box_mesh([1.0, 2.0, 1.0], 4).unwrap();
        let f = DiscreteField::interpolate(&mesh, 2, |x, out| {
            out[0] = 1.0 + 2.0 * x[0] - x[1] + 0.5 * x[2];
            out[1] = x[0] * x[1] * x[2];
        });
        let x = [0.33, 1.21, 0.77];
        let v = f.eval_at(&mesh, &x).unwrap();
        assert!((v[0] - (1.0 + 0.66 - 1.21 + 0.385)).abs() < 1e-14);
        assert!((v[1] - 0.33 * 1.21 * 0.77).abs() < 1e-14);
        let (cell, xi) = mesh.locate(&x).unwrap();
        let mut g = [[0.0; 3]; 2];
        f.gradient_local(&mesh, cell, &xi, &mut g);
        assert!((g[0][0] - 2.0).abs() < 1e-13 && (g[0][1] + 1.0).abs() < 1e-13 && (g[0][2] - 0.5).abs() < 1e-13);
        assert!(f.eval_at(&mesh, &[2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn node_readout_is_exact() {
        let mesh = build_box_mesh([1.0; 3], 4).unwrap();
        let f = DiscreteField::interpolate(&mesh, 1, |x, out| out[0] = (x[0] * 7.0).sin());
        assert_eq!(f.eval_at(&mesh, &[0.25, 0.5, 1.0]).unwrap()[0], (0.25f64 * 7.0).sin());
    }

    #[test]
    fn mesh_mismatch() {
        let a = build_box_mesh([1.0; 3], 2).unwrap();
        let b = build_box_mesh([1.0; 3], 3).unwrap();
        let f = DiscreteField::zeros(&a, 1);
        assert!(matches!(f.check_mesh(&b), Err(Error::Interface(_))));
        assert!(DiscreteField::from_values(&a, 1, vec![0.0; 3]).is_err());
    }
}
