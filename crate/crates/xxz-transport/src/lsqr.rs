//! LSQR (Paige-Saunders bidiagonalization) for complex least-squares systems
//! given only matrix-vector products. Used by the steady-state solver, where
//! the operator is the vectorized Liouvillian plus a trace row and is never
//! materialized.

use crate::basis::C64;

pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// y = A x
    fn apply(&self, x: &[C64], y: &mut [C64]);
    /// x = A^H y
    fn apply_adjoint(&self, y: &[C64], x: &mut [C64]);
}

#[derive(Debug, Clone, Copy)]
pub struct LsqrOptions {
    pub atol: f64,
    pub btol: f64,
    pub max_iter: usize,
}

impl Default for LsqrOptions {
    fn default() -> Self {
        Self {
            atol: 1e-14,
            btol: 1e-14,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LsqrOutcome {
    pub iterations: usize,
    /// Estimated ||b - A x||.
    pub residual_norm: f64,
    /// Estimated ||A^H (b - A x)||.
    pub normal_residual_norm: f64,
    pub converged: bool,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn scale(v: &mut [C64], s: f64) {
    for c in v.iter_mut() {
        *c *= s;
    }
}

/// v = a*x + v
fn axpy(a: f64, x: &[C64], v: &mut [C64]) {
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi += a * xi;
    }
}

/// Minimize ||A (x0 + dx) - b|| over dx; `x` holds the initial guess on entry
/// and the solution on exit.
pub fn lsqr(op: &dyn LinearOperator, b: &[C64], x: &mut [C64], opts: &LsqrOptions) -> LsqrOutcome {
    let m = op.rows();
    let n = op.cols();
    assert_eq!(b.len(), m);
    assert_eq!(x.len(), n);

    let mut u = vec![C64::default(); m];
    let mut v = vec![C64::default(); n];
    let mut w;
    let mut dx = vec![C64::default(); n];
    let mut tmp_m = vec![C64::default(); m];
    let mut tmp_n = vec![C64::default(); n];

    // u = b - A x0
    op.apply(x, &mut tmp_m);
    for ((ui, bi), ti) in u.iter_mut().zip(b).zip(&tmp_m) {
        *ui = bi - ti;
    }
    let mut beta = norm(&u);
    let b_norm = beta;
    if beta == 0.0 {
        return LsqrOutcome {
            iterations: 0,
            residual_norm: 0.0,
            normal_residual_norm: 0.0,
            converged: true,
        };
    }
    scale(&mut u, 1.0 / beta);

    op.apply_adjoint(&u, &mut v);
    let mut alpha = norm(&v);
    if alpha == 0.0 {
        // b - A x0 is orthogonal to the range: x0 already optimal
        return LsqrOutcome {
            iterations: 0,
            residual_norm: beta,
            normal_residual_norm: 0.0,
            converged: true,
        };
    }
    scale(&mut v, 1.0 / alpha);
    w = v.clone();

    let mut phibar = beta;
    let mut rhobar = alpha;
    let mut anorm_sq = alpha * alpha;
    let mut r_norm = beta;
    let mut atr_norm = alpha * beta;
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iter {
        iterations = it;

        // u = A v - alpha u
        op.apply(&v, &mut tmp_m);
        for (ui, ti) in u.iter_mut().zip(&tmp_m) {
            *ui = ti - alpha * *ui;
        }
        beta = norm(&u);
        if beta > 0.0 {
            scale(&mut u, 1.0 / beta);
        }
        anorm_sq += alpha * alpha + beta * beta;

        // v = A^H u - beta v
        op.apply_adjoint(&u, &mut tmp_n);
        for (vi, ti) in v.iter_mut().zip(&tmp_n) {
            *vi = ti - beta * *vi;
        }
        alpha = norm(&v);
        if alpha > 0.0 {
            scale(&mut v, 1.0 / alpha);
        }

        // plane rotation of the lower-bidiagonal system
        let rho = rhobar.hypot(beta);
        let c = rhobar / rho;
        let s = beta / rho;
        let theta = s * alpha;
        rhobar = -c * alpha;
        let phi = c * phibar;
        phibar *= s;

        // dx += (phi/rho) w;  w = v - (theta/rho) w
        axpy(phi / rho, &w, &mut dx);
        let t = theta / rho;
        for (wi, vi) in w.iter_mut().zip(&v) {
            *wi = vi - t * *wi;
        }

        r_norm = phibar;
        atr_norm = phibar * alpha * c.abs();
        let anorm = anorm_sq.sqrt();

        if r_norm <= opts.btol * b_norm + opts.atol * anorm * norm(&dx) {
            converged = true;
            break;
        }
        if atr_norm <= opts.atol * anorm * r_norm {
            converged = true;
            break;
        }
        if beta == 0.0 || alpha == 0.0 {
            converged = true;
            break;
        }
    }

    for (xi, di) in x.iter_mut().zip(&dx) {
        *xi += di;
    }
    LsqrOutcome {
        iterations,
        residual_norm: r_norm,
        normal_residual_norm: atr_norm,
        converged,
    }
}
