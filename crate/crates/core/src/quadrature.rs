//! Gauss–Legendre rules on the unit interval and trilinear shape functions
//! on the unit cell.

use crate::error::{Error, Result};

/// Points and weights of the n-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_1d(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, w): (Vec<f64>, Vec<f64>) = match order {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (0.6f64).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0f64 / 5.0).sqrt() * 2.0 / 7.0;
            let a = (3.0 / 7.0 - s).sqrt();
            let b = (3.0 / 7.0 + s).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let s = 2.0 * (10.0f64 / 7.0).sqrt();
            let a = (5.0 - s).sqrt() / 3.0;
            let b = (5.0 + s).sqrt() / 3.0;
            let r = 13.0 * 70f64.sqrt();
            let wa = (322.0 + r) / 900.0;
            let wb = (322.0 - r) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, 128.0 / 225.0, wa, wb])
        }
        _ => return Err(Error::Unsupported(format!("quadrature order {order}"))),
    };
    Ok((
        x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w.iter().map(|v| 0.5 * v).collect(),
    ))
}

/// Tensor rule on the unit cube: local points and weights (summing to 1).
#[derive(Debug, Clone)]
pub struct CellRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl CellRule {
    pub fn gauss(order: usize) -> Result<Self> {
        Self::subdivided(order, 1)
    }

    /// `sub^3` congruent sub-cells, each with an `order`-point tensor rule.
    pub fn subdivided(order: usize, sub: usize) -> Result<Self> {
        let (x, w) = gauss_1d(order)?;
        let sub = sub.max(1);
        let s = 1.0 / sub as f64;
        let mut xs = Vec::with_capacity(sub * x.len());
        let mut ws = Vec::with_capacity(sub * x.len());
        for c in 0..sub {
            for (xi, wi) in x.iter().zip(&w) {
                xs.push((c as f64 + xi) * s);
                ws.push(wi * s);
            }
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for k in 0..xs.len() {
            for j in 0..xs.len() {
                for i in 0..xs.len() {
                    points.push([xs[i], xs[j], xs[k]]);
                    weights.push(ws[i] * ws[j] * ws[k]);
                }
            }
        }
        Ok(Self { points, weights })
    }

    /// Midpoint samples of `sub^3` sub-cells.
    pub fn midpoints(sub: usize) -> Self {
        let sub = sub.max(1);
        let s = 1.0 / sub as f64;
        let mut points = Vec::new();
        for k in 0..sub {
            for j in 0..sub {
                for i in 0..sub {
                    points.push([(i as f64 + 0.5) * s, (j as f64 + 0.5) * s, (k as f64 + 0.5) * s]);
                }
            }
        }
        let n = points.len();
        Self { points, weights: vec![1.0 / n as f64; n] }
    }
}

/// Tensor rule on the unit square.
pub fn square_rule(order: usize) -> Result<Vec<([f64; 2], f64)>> {
    let (x, w) = gauss_1d(order)?;
    let mut out = Vec::new();
    for j in 0..x.len() {
        for i in 0..x.len() {
            out.push(([x[i], x[j]], w[i] * w[j]));
        }
    }
    Ok(out)
}

/// Trilinear basis values at local coordinates, corner `a = ix + 2 iy + 4 iz`.
pub fn shape(xi: &[f64; 3]) -> [f64; 8] {
    let mut n = [0.0; 8];
    for (a, v) in n.iter_mut().enumerate() {
        let mut p = 1.0;
        for d in 0..3 {
            p *= if (a >> d) & 1 == 1 { xi[d] } else { 1.0 - xi[d] };
        }
        *v = p;
    }
    n
}

/// Physical gradients of the trilinear basis in a cell with edge lengths `h`.
pub fn shape_gradients(xi: &[f64; 3], h: &[f64; 3]) -> [[f64; 3]; 8] {
    let mut g = [[0.0; 3]; 8];
    for (a, ga) in g.iter_mut().enumerate() {
        for d in 0..3 {
            let mut p = 1.0 / h[d];
            if (a >> d) & 1 == 0 {
                p = -p;
            }
            for e in 0..3 {
                if e != d {
                    p *= if (a >> e) & 1 == 1 { xi[e] } else { 1.0 - xi[e] };
                }
            }
            ga[d] = p;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_exactness() {
        for order in 1..=5 {
            let (x, w) = gauss_1d(order).unwrap();
            for p in 0..(2 * order) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "order {order} degree {p}");
            }
        }
        assert!(gauss_1d(6).is_err());
    }

    #[test]
    fn subdivided_weights_sum_to_one() {
        let r = CellRule::subdivided(3, 4).unwrap();
        assert_eq!(r.points.len(), 12usize.pow(3));
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn partition_of_unity_and_zero_gradient_sum() {
        let xi = [0.2, 0.7, 0.4];
        assert!((shape(&xi).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = shape_gradients(&xi, &[0.5, 0.25, 1.0]);
        for d in 0..3 {
            assert!(g.iter().map(|ga| ga[d]).sum::<f64>().abs() < 1e-14);
        }
    }
}
