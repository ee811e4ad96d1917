//! Krylov solvers behind a common trait, looked up by name.
//!
//! | name       | operator             | preconditioner |
//! |------------|----------------------|----------------|
//! | `cg`       | symmetric definite   | SPD            |
//! | `minres`   | symmetric indefinite | SPD            |
//! | `gmres`    | general              | any (right)    |
//! | `bicgstab` | general              | any (right)    |
//!
//! Every solver stops on the true relative residual `‖b − Ax‖ / ‖b‖`,
//! recomputed before returning.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, scale, xpby, LinearOperator, Preconditioner};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final true relative residual.
    pub residual: f64,
    /// Relative residual estimate per iteration.
    pub history: Vec<f64>,
}

pub trait KrylovSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether the method needs a symmetric operator.
    fn needs_symmetric(&self) -> bool;

    /// Solves `A x = b`, starting from the incoming `x`.
    fn solve(
        &self,
        op: &dyn LinearOperator,
        pc: &dyn Preconditioner,
        b: &[f64],
        x: &mut [f64],
        ctl: &Control,
    ) -> Result<SolveStats>;
}

type Factory = fn() -> Box<dyn KrylovSolver>;

const REGISTRY: &[(&str, Factory)] = &[
    ("cg", || Box::new(Cg)),
    ("minres", || Box::new(Minres)),
    ("gmres", || Box::new(Gmres { restart: 60 })),
    ("bicgstab", || Box::new(BiCgStab)),
];

pub fn krylov_solver(name: &str) -> Result<Box<dyn KrylovSolver>> {
    REGISTRY
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, f)| f())
        .ok_or_else(|| Error::UnknownStrategy { kind: "krylov solver", name: name.to_string() })
}

pub fn krylov_solver_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|(n, _)| *n).collect()
}

fn residual(op: &dyn LinearOperator, b: &[f64], x: &[f64], r: &mut [f64]) {
    op.apply(x, r);
    r.iter_mut().zip(b).for_each(|(r, b)| *r = b - *r);
}

fn trivial(b: &[f64], x: &mut [f64]) -> Option<SolveStats> {
    if norm(b) == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Some(SolveStats { iterations: 0, residual: 0.0, history: vec![] });
    }
    None
}

fn not_converged(stats: SolveStats) -> Error {
    Error::NotConverged {
        iterations: stats.iterations,
        residual: stats.residual,
        history: stats.history,
    }
}

/// Preconditioned conjugate gradients.
pub struct Cg;

impl KrylovSolver for Cg {
    fn name(&self) -> &'static str {
        "cg"
    }

    fn needs_symmetric(&self) -> bool {
        true
    }

    fn solve(
        &self,
        op: &dyn LinearOperator,
        pc: &dyn Preconditioner,
        b: &[f64],
        x: &mut [f64],
        ctl: &Control,
    ) -> Result<SolveStats> {
        if let Some(s) = trivial(b, x) {
            return Ok(s);
        }
        let n = b.len();
        let bnorm = norm(b);
        let mut stats = SolveStats::default();
        let mut r = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        while stats.iterations < ctl.max_iterations {
            residual(op, b, x, &mut r);
            let mut rel = norm(&r) / bnorm;
            if rel <= ctl.tolerance {
                stats.residual = rel;
                return Ok(stats);
            }
            pc.apply(&r, &mut z);
            p.copy_from_slice(&z);
            let mut rz = dot(&r, &z);
            while stats.iterations < ctl.max_iterations {
                op.apply(&p, &mut q);
                let pq = dot(&p, &q);
                if !(pq > 0.0) {
                    break;
                }
                let alpha = rz / pq;
                axpy(alpha, &p, x);
                axpy(-alpha, &q, &mut r);
                stats.iterations += 1;
                rel = norm(&r) / bnorm;
                stats.history.push(rel);
                if rel <= 0.5 * ctl.tolerance {
                    break;
                }
                pc.apply(&r, &mut z);
                let rz_new = dot(&r, &z);
                xpby(&z, rz_new / rz, &mut p);
                rz = rz_new;
            }
            residual(op, b, x, &mut r);
            stats.residual = norm(&r) / bnorm;
            if stats.residual <= ctl.tolerance {
                return Ok(stats);
            }
            if rel > 0.5 * ctl.tolerance {
                break;
            }
        }
        Err(not_converged(stats))
    }
}

/// Preconditioned MINRES (Paige–Saunders recurrences, SPD preconditioner).
pub struct Minres;

impl KrylovSolver for Minres {
    fn name(&self) -> &'static str {
        "minres"
    }

    fn needs_symmetric(&self) -> bool {
        true
    }

    fn solve(
        &self,
        op: &dyn LinearOperator,
        pc: &dyn Preconditioner,
        b: &[f64],
        x: &mut [f64],
        ctl: &Control,
    ) -> Result<SolveStats> {
        if let Some(s) = trivial(b, x) {
            return Ok(s);
        }
        let n = b.len();
        let bnorm = norm(b);
        let mut stats = SolveStats::default();
        let mut r = vec![0.0; n];
        let mut az = vec![0.0; n];
        loop {
            residual(op, b, x, &mut r);
            stats.residual = norm(&r) / bnorm;
            if stats.residual <= ctl.tolerance {
                return Ok(stats);
            }
            if stats.iterations >= ctl.max_iterations {
                return Err(not_converged(stats));
            }
            let before = stats.iterations;
            // Lanczos vectors: v_prev, v (unnormalised), z = M⁻¹ v
            let mut v_prev = vec![0.0; n];
            let mut v = r.clone();
            let mut z = vec![0.0; n];
            pc.apply(&v, &mut z);
            let mut gamma = dot(&z, &v);
            if !(gamma > 0.0) {
                return Err(Error::Numeric("preconditioner is not positive definite".into()));
            }
            gamma = gamma.sqrt();
            let gamma0 = gamma;
            let mut gamma_prev = 1.0;
            let mut eta = gamma;
            let (mut s_prev, mut s) = (0.0, 0.0);
            let (mut c_prev, mut c) = (1.0, 1.0);
            let mut w_prev = vec![0.0; n];
            let mut w = vec![0.0; n];
            let mut w_next = vec![0.0; n];
            let mut z_next = vec![0.0; n];
            // scales the preconditioned reduction to the true residual at restart
            let scale_to_true = stats.residual;
            while stats.iterations < ctl.max_iterations {
                scale(1.0 / gamma, &mut z);
                op.apply(&z, &mut az);
                let delta = dot(&az, &z);
                // v_next = A z − (δ/γ) v − (γ/γ_prev) v_prev
                let mut v_next = az.clone();
                axpy(-delta / gamma, &v, &mut v_next);
                axpy(-gamma / gamma_prev, &v_prev, &mut v_next);
                pc.apply(&v_next, &mut z_next);
                let gg = dot(&z_next, &v_next);
                let gamma_next = if gg > 0.0 { gg.sqrt() } else { 0.0 };
                let a0 = c * delta - c_prev * s * gamma;
                let a1 = a0.hypot(gamma_next);
                let a2 = s * delta + c_prev * c * gamma;
                let a3 = s_prev * gamma;
                if a1 == 0.0 {
                    return Err(Error::Numeric("MINRES breakdown".into()));
                }
                let c_next = a0 / a1;
                let s_next = gamma_next / a1;
                for k in 0..n {
                    w_next[k] = (z[k] - a3 * w_prev[k] - a2 * w[k]) / a1;
                }
                axpy(c_next * eta, &w_next, x);
                eta = -s_next * eta;
                stats.iterations += 1;
                let est = (eta.abs() / gamma0) * scale_to_true;
                stats.history.push(est);

                std::mem::swap(&mut w_prev, &mut w);
                std::mem::swap(&mut w, &mut w_next);
                v_prev = std::mem::replace(&mut v, v_next);
                std::mem::swap(&mut z, &mut z_next);
                gamma_prev = gamma;
                gamma = gamma_next;
                s_prev = s;
                s = s_next;
                c_prev = c;
                c = c_next;
                if est <= 0.1 * ctl.tolerance || gamma_next == 0.0 {
                    break;
                }
            }
            if stats.iterations == before {
                return Err(not_converged(stats));
            }
        }
    }
}

/// Restarted GMRES with right preconditioning.
pub struct Gmres {
    pub restart: usize,
}

impl KrylovSolver for Gmres {
    fn name(&self) -> &'static str {
        "gmres"
    }

    fn needs_symmetric(&self) -> bool {
        false
    }

    fn solve(
        &self,
        op: &dyn LinearOperator,
        pc: &dyn Preconditioner,
        b: &[f64],
        x: &mut [f64],
        ctl: &Control,
    ) -> Result<SolveStats> {
        if let Some(s) = trivial(b, x) {
            return Ok(s);
        }
        let n = b.len();
        let m = self.restart.max(1);
        let bnorm = norm(b);
        let mut stats = SolveStats::default();
        let mut r = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        loop {
            residual(op, b, x, &mut r);
            let beta = norm(&r);
            stats.residual = beta / bnorm;
            if stats.residual <= ctl.tolerance {
                return Ok(stats);
            }
            if stats.iterations >= ctl.max_iterations {
                return Err(not_converged(stats));
            }
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
            let mut v0 = r.clone();
            scale(1.0 / beta, &mut v0);
            basis.push(v0);
            let mut hess = vec![vec![0.0; m]; m + 1];
            let mut cs = vec![0.0; m];
            let mut sn = vec![0.0; m];
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut k_used = 0;
            for k in 0..m {
                if stats.iterations >= ctl.max_iterations {
                    break;
                }
                pc.apply(&basis[k], &mut tmp);
                let mut w = vec![0.0; n];
                op.apply(&tmp, &mut w);
                for (i, vi) in basis.iter().enumerate() {
                    let hik = dot(&w, vi);
                    hess[i][k] = hik;
                    axpy(-hik, vi, &mut w);
                }
                let wn = norm(&w);
                hess[k + 1][k] = wn;
                for i in 0..k {
                    let t = cs[i] * hess[i][k] + sn[i] * hess[i + 1][k];
                    hess[i + 1][k] = -sn[i] * hess[i][k] + cs[i] * hess[i + 1][k];
                    hess[i][k] = t;
                }
                let d = hess[k][k].hypot(hess[k + 1][k]);
                cs[k] = if d == 0.0 { 1.0 } else { hess[k][k] / d };
                sn[k] = if d == 0.0 { 0.0 } else { hess[k + 1][k] / d };
                hess[k][k] = d;
                hess[k + 1][k] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
                stats.iterations += 1;
                k_used = k + 1;
                let est = g[k + 1].abs() / bnorm;
                stats.history.push(est);
                if est <= 0.1 * ctl.tolerance || wn == 0.0 {
                    break;
                }
                scale(1.0 / wn, &mut w);
                basis.push(w);
            }
            // back substitution
            let mut yv = vec![0.0; k_used];
            for i in (0..k_used).rev() {
                let mut s = g[i];
                for j in i + 1..k_used {
                    s -= hess[i][j] * yv[j];
                }
                yv[i] = s / hess[i][i];
            }
            let mut update = vec![0.0; n];
            for (j, yj) in yv.iter().enumerate() {
                axpy(*yj, &basis[j], &mut update);
            }
            pc.apply(&update, &mut tmp);
            axpy(1.0, &tmp, x);
        }
    }
}

/// Right-preconditioned BiCGSTAB.
pub struct BiCgStab;

impl KrylovSolver for BiCgStab {
    fn name(&self) -> &'static str {
        "bicgstab"
    }

    fn needs_symmetric(&self) -> bool {
        false
    }

    fn solve(
        &self,
        op: &dyn LinearOperator,
        pc: &dyn Preconditioner,
        b: &[f64],
        x: &mut [f64],
        ctl: &Control,
    ) -> Result<SolveStats> {
        if let Some(s) = trivial(b, x) {
            return Ok(s);
        }
        let n = b.len();
        let bnorm = norm(b);
        let mut stats = SolveStats::default();
        let mut r = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut v = vec![0.0; n];
        let mut phat = vec![0.0; n];
        let mut shat = vec![0.0; n];
        let mut t = vec![0.0; n];
        loop {
            residual(op, b, x, &mut r);
            stats.residual = norm(&r) / bnorm;
            if stats.residual <= ctl.tolerance {
                return Ok(stats);
            }
            if stats.iterations >= ctl.max_iterations {
                return Err(not_converged(stats));
            }
            let before = stats.iterations;
            let r0 = r.clone();
            let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            p.iter_mut().for_each(|e| *e = 0.0);
            while stats.iterations < ctl.max_iterations {
                let rho_new = dot(&r0, &r);
                if rho_new == 0.0 || omega == 0.0 {
                    break;
                }
                let beta = (rho_new / rho) * (alpha / omega);
                rho = rho_new;
                for k in 0..n {
                    p[k] = r[k] + beta * (p[k] - omega * v[k]);
                }
                pc.apply(&p, &mut phat);
                op.apply(&phat, &mut v);
                let r0v = dot(&r0, &v);
                if r0v == 0.0 {
                    break;
                }
                alpha = rho / r0v;
                axpy(alpha, &phat, x);
                axpy(-alpha, &v, &mut r);
                stats.iterations += 1;
                let mut rel = norm(&r) / bnorm;
                if rel <= 0.5 * ctl.tolerance {
                    stats.history.push(rel);
                    break;
                }
                pc.apply(&r, &mut shat);
                op.apply(&shat, &mut t);
                let tt = dot(&t, &t);
                omega = if tt > 0.0 { dot(&t, &r) / tt } else { 0.0 };
                axpy(omega, &shat, x);
                axpy(-omega, &t, &mut r);
                rel = norm(&r) / bnorm;
                stats.history.push(rel);
                if rel <= 0.5 * ctl.tolerance {
                    break;
                }
            }
            if stats.iterations == before {
                return Err(not_converged(stats));
            }
        }
    }
}
