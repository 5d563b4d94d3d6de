//! Exact Lindblad evolution of the density operator for small chains:
//!
//!   d rho/dt = -i [H, rho] + (Gamma/2) ( D[s+_0] + D[s-_{N-1}] ) rho,
//!   D[x] rho = 2 x rho x+ - {x+x, rho},
//!
//! with fixed-step RK4 time evolution and a direct steady-state solver that
//! runs LSQR on the matrix-free vectorized Liouvillian augmented by a trace
//! row. This module is the oracle the trajectory solver is checked against.

use crate::basis::{BasisIndex, PureState, C64};
use crate::error::{Error, Result};
use crate::lsqr::{lsqr, LinearOperator, LsqrOptions};
use crate::model::{kernel_h, CouplingTable};
use crate::observables::{ObservableSeries, SpinObservables};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::cell::RefCell;

/// The vectorized Liouvillian has 4^N entries; past seven sites the direct
/// solve is handed over to trajectories.
pub const NESS_DIRECT_MAX_SITES: usize = 7;

/// Columns are dispatched to rayon above this Hilbert-space dimension.
const PAR_DIM: usize = 256;

/// 2^N x 2^N density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    n_sites: usize,
    mat: DMatrix<C64>,
}

impl DensityOp {
    pub fn from_matrix(n_sites: usize, mat: DMatrix<C64>) -> Result<Self> {
        let dim = 1usize << n_sites;
        if mat.nrows() != dim || mat.ncols() != dim {
            return Err(Error::Config(format!(
                "density matrix is {}x{}, expected {dim}x{dim}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { n_sites, mat })
    }

    /// |psi><psi|.
    pub fn pure(state: &PureState) -> Self {
        let dim = state.dim();
        let a = state.amplitudes();
        let mat = DMatrix::from_fn(dim, dim, |r, c| a[r] * a[c].conj());
        Self {
            n_sites: state.n_sites(),
            mat,
        }
    }

    pub fn basis_projector(n_sites: usize, index: BasisIndex) -> Self {
        Self::pure(&PureState::basis_state(n_sites, index))
    }

    pub fn maximally_mixed(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        let mut mat = DMatrix::zeros(dim, dim);
        let w = C64::new(1.0 / dim as f64, 0.0);
        for k in 0..dim {
            mat[(k, k)] = w;
        }
        Self { n_sites, mat }
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    #[inline]
    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    #[inline]
    pub fn matrix_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.mat
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|k| self.mat[(k, k)]).sum()
    }

    pub fn purity(&self) -> f64 {
        // tr(rho^2) for hermitian rho = sum |rho_rc|^2
        self.mat.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..self.dim() {
            for r in 0..=c {
                worst = worst.max((self.mat[(r, c)] - self.mat[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue through the real symmetric embedding
    /// [[Re, -Im], [Im, Re]], which shares the spectrum of a hermitian matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let mut emb = DMatrix::<f64>::zeros(2 * d, 2 * d);
        for c in 0..d {
            for r in 0..d {
                let v = self.mat[(r, c)];
                emb[(r, c)] = v.re;
                emb[(r + d, c + d)] = v.re;
                emb[(r + d, c)] = v.im;
                emb[(r, c + d)] = -v.im;
            }
        }
        emb.symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hermitize_and_normalize(&mut self) {
        let d = self.dim();
        for c in 0..d {
            for r in 0..c {
                let avg = 0.5 * (self.mat[(r, c)] + self.mat[(c, r)].conj());
                self.mat[(r, c)] = avg;
                self.mat[(c, r)] = avg.conj();
            }
            let re = self.mat[(c, c)].re;
            self.mat[(c, c)] = C64::new(re, 0.0);
        }
        let tr = self.trace().re;
        if tr != 0.0 {
            let inv = C64::new(1.0 / tr, 0.0);
            for v in self.mat.iter_mut() {
                *v *= inv;
            }
        }
    }

    pub fn frobenius_distance(&self, other: &DensityOp) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpDirection {
    Raise,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpOp {
    pub site: usize,
    pub direction: JumpDirection,
    pub rate: f64,
}

/// Dissipator list. The production scheme is the two-bath boundary drive;
/// arbitrary lists are accepted for oracle setups.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladSpec {
    pub jumps: Vec<JumpOp>,
}

impl LindbladSpec {
    /// Pump up at site 0, drain at site N-1, both at rate gamma.
    pub fn boundary_driven(n_sites: usize, gamma: f64) -> Self {
        Self {
            jumps: vec![
                JumpOp {
                    site: 0,
                    direction: JumpDirection::Raise,
                    rate: gamma,
                },
                JumpOp {
                    site: n_sites - 1,
                    direction: JumpDirection::Lower,
                    rate: gamma,
                },
            ],
        }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        for j in &self.jumps {
            if j.site >= n_sites {
                return Err(Error::Config(format!(
                    "jump site {} out of range for {n_sites} sites",
                    j.site
                )));
            }
            if !(j.rate >= 0.0) {
                return Err(Error::Config(format!("jump rate {} must be >= 0", j.rate)));
            }
        }
        Ok(())
    }
}

pub(crate) struct LWorkspace {
    hr: Vec<C64>,
    tr: Vec<C64>,
    ht: Vec<C64>,
}

impl LWorkspace {
    pub(crate) fn new(dim: usize) -> Self {
        Self {
            hr: vec![C64::default(); dim * dim],
            tr: vec![C64::default(); dim * dim],
            ht: vec![C64::default(); dim * dim],
        }
    }
}

fn h_columns(table: &CouplingTable, src: &[C64], dst: &mut [C64], dim: usize) {
    if dim >= PAR_DIM {
        dst.par_chunks_mut(dim).enumerate().for_each(|(c, col)| {
            kernel_h::h_into(table, &src[c * dim..(c + 1) * dim], col);
        });
    } else {
        for (c, col) in dst.chunks_mut(dim).enumerate() {
            kernel_h::h_into(table, &src[c * dim..(c + 1) * dim], col);
        }
    }
}

/// Accumulate the dissipator terms of the (forward or adjoint) generator.
fn dissipators_accum(
    spec: &LindbladSpec,
    src: &[C64],
    out: &mut [C64],
    dim: usize,
    adjoint: bool,
) {
    for jump in &spec.jumps {
        if jump.rate == 0.0 {
            continue;
        }
        let g = jump.rate;
        let m = 1usize << jump.site;
        // forward Raise and adjoint Lower both write bit-set entries from
        // bit-clear sources; the other two cases are the reverse
        let set_from_clear = match (jump.direction, adjoint) {
            (JumpDirection::Raise, false) | (JumpDirection::Lower, true) => true,
            _ => false,
        };
        let si = m;
        let stride = m << 1;
        let mut cbase = 0;
        while cbase < dim {
            for clo in 0..si {
                let c0 = cbase + clo;
                let c1 = c0 | m;
                let mut rbase = 0;
                while rbase < dim {
                    for rlo in 0..si {
                        let r0 = rbase + rlo;
                        let r1 = r0 | m;
                        if set_from_clear {
                            out[c1 * dim + r1] += g * src[c0 * dim + r0];
                        } else {
                            out[c0 * dim + r0] += g * src[c1 * dim + r1];
                        }
                    }
                    rbase += stride;
                }
            }
            cbase += stride;
        }
        // anticommutator with the projector x+x (forward and adjoint agree):
        // Raise has x+x = P_down(site), Lower has P_up(site)
        let penalize_clear = jump.direction == JumpDirection::Raise;
        let half_g = 0.5 * g;
        for c in 0..dim {
            let pc = (c & m == 0) == penalize_clear;
            for r in 0..dim {
                let pr = (r & m == 0) == penalize_clear;
                let p = (pr as u8 + pc as u8) as f64;
                if p > 0.0 {
                    out[c * dim + r] -= half_g * p * src[c * dim + r];
                }
            }
        }
    }
}

/// out = L(src) (forward) or L^dagger(src) (adjoint), matrix-free.
///
/// `hermitian_src` enables the shortcut rho*H = (H rho)^dagger, exact on
/// hermitian input and cheaper by one Hamiltonian pass; the general path
/// goes through an explicit transpose.
pub(crate) fn l_apply_into(
    table: &CouplingTable,
    spec: &LindbladSpec,
    src: &[C64],
    hermitian_src: bool,
    adjoint: bool,
    ws: &mut LWorkspace,
    out: &mut [C64],
) {
    let dim = 1usize << table.n_sites();
    debug_assert_eq!(src.len(), dim * dim);
    h_columns(table, src, &mut ws.hr, dim);
    // commutator sign: forward -i[H, r], adjoint +i[H, r]
    let pref = if adjoint {
        C64::new(0.0, 1.0)
    } else {
        C64::new(0.0, -1.0)
    };
    if hermitian_src {
        for c in 0..dim {
            for r in 0..dim {
                let hr = ws.hr[c * dim + r];
                let rh = ws.hr[r * dim + c].conj();
                out[c * dim + r] = pref * (hr - rh);
            }
        }
    } else {
        // tr = src^T (plain transpose), ht = H src^T, (src H)[r,c] = ht[r*dim+c]
        for c in 0..dim {
            for r in 0..dim {
                ws.tr[r * dim + c] = src[c * dim + r];
            }
        }
        h_columns(table, &ws.tr, &mut ws.ht, dim);
        for c in 0..dim {
            for r in 0..dim {
                let hr = ws.hr[c * dim + r];
                let rh = ws.ht[r * dim + c];
                out[c * dim + r] = pref * (hr - rh);
            }
        }
    }
    dissipators_accum(spec, src, out, dim, adjoint);
}

/// Generator action -i[H,rho] + (Gamma/2) sum D[x] rho, valid for arbitrary
/// (not necessarily hermitian) input.
pub fn liouvillian_apply(
    table: &CouplingTable,
    spec: &LindbladSpec,
    rho: &DensityOp,
) -> Result<DensityOp> {
    if rho.n_sites() != table.n_sites() {
        return Err(Error::Config(format!(
            "density operator has {} sites, coupling table {}",
            rho.n_sites(),
            table.n_sites()
        )));
    }
    spec.validate(table.n_sites())?;
    let dim = rho.dim();
    let mut ws = LWorkspace::new(dim);
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    l_apply_into(
        table,
        spec,
        rho.matrix().as_slice(),
        false,
        false,
        &mut ws,
        out.as_mut_slice(),
    );
    DensityOp::from_matrix(rho.n_sites(), out)
}

/// Frobenius norm of L(rho); the convergence figure of the steady state.
pub fn ness_residual(table: &CouplingTable, spec: &LindbladSpec, rho: &DensityOp) -> f64 {
    let l = liouvillian_apply(table, spec, rho).expect("dimension mismatch");
    l.matrix().iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between observable samples.
    pub sample_every: usize,
    pub record_series: bool,
    /// Early stop once the bond-averaged current moves relatively less than
    /// `tol` across a trailing window of `window` time units.
    pub convergence: Option<ConvergenceCheck>,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceCheck {
    pub rel_tol: f64,
    pub window: f64,
}

impl Default for ConvergenceCheck {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            window: 50.0,
        }
    }
}

impl EvolveOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            sample_every: 10,
            record_series: true,
            convergence: None,
        }
    }

    pub fn with_convergence(mut self) -> Self {
        self.convergence = Some(ConvergenceCheck::default());
        self
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub series: ObservableSeries,
    pub final_rho: DensityOp,
    pub converged_at: Option<f64>,
    pub steps: usize,
}

/// View over a raw column-major density matrix used during evolution.
struct RhoSlice<'a> {
    n_sites: usize,
    dim: usize,
    data: &'a [C64],
}

impl SpinObservables for RhoSlice<'_> {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn sz_expectation(&self, site: usize) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.dim {
            let z = if k >> site & 1 == 1 { 1.0 } else { -1.0 };
            acc += z * self.data[k * self.dim + k].re;
        }
        acc
    }

    fn bond_coherence(&self, bond: usize) -> C64 {
        let si = 1usize << bond;
        let stride = si << 2;
        let mut acc = C64::default();
        let mut base = 0;
        while base < self.dim {
            for lo in 0..si {
                let row = base + si + lo;
                let col = base + 2 * si + lo;
                acc += self.data[col * self.dim + row];
            }
            base += stride;
        }
        acc
    }
}

fn rk4_stability_guard(table: &CouplingTable, spec: &LindbladSpec, dt: f64) -> Result<()> {
    let max_zz = table.zz_diag().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h_bound = max_zz + 0.5 * table.j() * (table.n_sites() - 1) as f64;
    let rate_sum: f64 = spec.jumps.iter().map(|j| j.rate).sum();
    let l_bound = 2.0 * h_bound + 2.0 * rate_sum;
    if dt * l_bound > 2.78 {
        return Err(Error::StepSize(format!(
            "dt = {dt} puts dt*||L|| ~ {:.2} outside the RK4 stability region; reduce dt below {:.3}",
            dt * l_bound,
            2.78 / l_bound
        )));
    }
    Ok(())
}

/// Classical fixed-step RK4 integration of the master equation.
pub fn evolve_rk4(
    table: &CouplingTable,
    spec: &LindbladSpec,
    rho0: &DensityOp,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    if rho0.n_sites() != table.n_sites() {
        return Err(Error::Config("initial state dimension mismatch".into()));
    }
    spec.validate(table.n_sites())?;
    if !(opts.dt > 0.0) || !(opts.t_end > 0.0) {
        return Err(Error::Config("dt and t_end must be positive".into()));
    }
    rk4_stability_guard(table, spec, opts.dt)?;

    let n = table.n_sites();
    let dim = rho0.dim();
    let len = dim * dim;
    let mut rho = rho0.clone();
    rho.hermitize_and_normalize();
    let mut state: Vec<C64> = rho.matrix().as_slice().to_vec();
    let mut k1 = vec![C64::default(); len];
    let mut k2 = vec![C64::default(); len];
    let mut k3 = vec![C64::default(); len];
    let mut k4 = vec![C64::default(); len];
    let mut stage = vec![C64::default(); len];
    let mut ws = LWorkspace::new(dim);

    let dt = opts.dt;
    let n_steps = (opts.t_end / dt).round() as usize;
    let mut series = ObservableSeries::default();
    let mut current_log: Vec<(f64, f64)> = Vec::new();
    let mut converged_at = None;

    let sample = |t: f64,
                      data: &[C64],
                      series: &mut ObservableSeries,
                      current_log: &mut Vec<(f64, f64)>|
     -> Result<Option<f64>> {
        let view = RhoSlice {
            n_sites: n,
            dim,
            data,
        };
        let mut tr = 0.0;
        for k in 0..dim {
            tr += data[k * dim + k].re;
        }
        if (tr - 1.0).abs() > 1e-6 {
            return Err(Error::IntegrationFailure(format!(
                "trace drifted to {tr:.9} at t = {t}; reduce dt"
            )));
        }
        let currents = crate::observables::bond_currents(&view, table.j());
        let mean_j = currents.iter().sum::<f64>() / currents.len() as f64;
        current_log.push((t, mean_j));
        if opts.record_series {
            series.push(t, table.j(), &view);
        }
        if let Some(conv) = &opts.convergence {
            if t >= conv.window {
                // compare against the sample one window earlier
                let target = t - conv.window;
                if let Some(&(_, old)) = current_log
                    .iter()
                    .rev()
                    .find(|(tt, _)| *tt <= target + 1e-9)
                {
                    let scale = mean_j.abs().max(1e-300);
                    if ((mean_j - old) / scale).abs() < conv.rel_tol {
                        return Ok(Some(t));
                    }
                }
            }
        }
        Ok(None)
    };

    sample(0.0, &state, &mut series, &mut current_log)?;

    let mut steps_done = 0;
    for step in 1..=n_steps {
        // k1 = L(rho)
        l_apply_into(table, spec, &state, true, false, &mut ws, &mut k1);
        // k2 = L(rho + dt/2 k1)
        for i in 0..len {
            stage[i] = state[i] + 0.5 * dt * k1[i];
        }
        l_apply_into(table, spec, &stage, true, false, &mut ws, &mut k2);
        // k3 = L(rho + dt/2 k2)
        for i in 0..len {
            stage[i] = state[i] + 0.5 * dt * k2[i];
        }
        l_apply_into(table, spec, &stage, true, false, &mut ws, &mut k3);
        // k4 = L(rho + dt k3)
        for i in 0..len {
            stage[i] = state[i] + dt * k3[i];
        }
        l_apply_into(table, spec, &stage, true, false, &mut ws, &mut k4);
        let w = dt / 6.0;
        for i in 0..len {
            state[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        steps_done = step;

        if step % opts.sample_every == 0 || step == n_steps {
            let t = step as f64 * dt;
            if let Some(tc) = sample(t, &state, &mut series, &mut current_log)? {
                converged_at = Some(tc);
                break;
            }
        }
    }

    let mat = DMatrix::from_column_slice(dim, dim, &state);
    Ok(Evolution {
        series,
        final_rho: DensityOp::from_matrix(n, mat)?,
        converged_at,
        steps: steps_done,
    })
}

/// Augmented operator [vec L; trace row] for the least-squares steady state.
struct NessOperator<'a> {
    table: &'a CouplingTable,
    spec: &'a LindbladSpec,
    dim: usize,
    ws: RefCell<LWorkspace>,
}

impl LinearOperator for NessOperator<'_> {
    fn rows(&self) -> usize {
        self.dim * self.dim + 1
    }

    fn cols(&self) -> usize {
        self.dim * self.dim
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let d2 = self.dim * self.dim;
        let mut ws = self.ws.borrow_mut();
        l_apply_into(
            self.table,
            self.spec,
            x,
            true,
            false,
            &mut ws,
            &mut y[..d2],
        );
        let mut tr = C64::default();
        for k in 0..self.dim {
            tr += x[k * self.dim + k];
        }
        y[d2] = tr;
    }

    fn apply_adjoint(&self, y: &[C64], x: &mut [C64]) {
        let d2 = self.dim * self.dim;
        let mut ws = self.ws.borrow_mut();
        l_apply_into(self.table, self.spec, &y[..d2], true, true, &mut ws, x);
        let lam = y[d2];
        for k in 0..self.dim {
            x[k * self.dim + k] += lam;
        }
    }
}

fn deterministic_random_start(dim: usize) -> Vec<C64> {
    // G G^H / tr, from a fixed xorshift stream: hermitian, positive, trace 1
    let mut s = 0x8D5C_F5A3_1234_BEEFu64;
    let mut next = move || {
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        (s.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let g = DMatrix::from_fn(dim, dim, |_, _| C64::new(next(), next()));
    let mut m = &g * g.adjoint();
    let tr: f64 = (0..dim).map(|k| m[(k, k)].re).sum();
    let inv = C64::new(1.0 / tr, 0.0);
    for v in m.iter_mut() {
        *v *= inv;
    }
    m.as_slice().to_vec()
}

fn ness_solve_from(
    table: &CouplingTable,
    spec: &LindbladSpec,
    start: Vec<C64>,
) -> Result<DensityOp> {
    let dim = 1usize << table.n_sites();
    let d2 = dim * dim;
    let op = NessOperator {
        table,
        spec,
        dim,
        ws: RefCell::new(LWorkspace::new(dim)),
    };
    let mut b = vec![C64::default(); d2 + 1];
    b[d2] = C64::new(1.0, 0.0);
    let mut x = start;
    let out = lsqr(
        &op,
        &b,
        &mut x,
        &LsqrOptions {
            atol: 1e-14,
            btol: 1e-14,
            max_iter: 150_000,
        },
    );
    if !out.converged {
        return Err(Error::IntegrationFailure(format!(
            "steady-state least squares stalled after {} iterations (residual {:.3e})",
            out.iterations, out.residual_norm
        )));
    }
    let mut rho = DensityOp::from_matrix(
        table.n_sites(),
        DMatrix::from_column_slice(dim, dim, &x),
    )?;
    rho.hermitize_and_normalize();
    Ok(rho)
}

/// Direct steady state: the trace-one null vector of the Liouvillian.
///
/// Solves the least-squares system twice from independent starting points
/// and requires the results to coincide, which would fail loudly if the
/// kernel were degenerate.
pub fn ness_direct(table: &CouplingTable, spec: &LindbladSpec) -> Result<DensityOp> {
    let n = table.n_sites();
    if n > NESS_DIRECT_MAX_SITES {
        return Err(Error::SolverGuard(format!(
            "ness-direct solves a 4^N system and is limited to N <= {NESS_DIRECT_MAX_SITES}; got N = {n}"
        )));
    }
    spec.validate(n)?;
    let dim = 1usize << n;

    let mixed = DensityOp::maximally_mixed(n).matrix().as_slice().to_vec();
    let rho_a = ness_solve_from(table, spec, mixed)?;
    let rho_b = ness_solve_from(table, spec, deterministic_random_start(dim))?;

    let diff = rho_a.frobenius_distance(&rho_b);
    if diff > 1e-7 {
        return Err(Error::Ambiguity(format!(
            "two independent starting points relaxed to steady states {diff:.3e} apart; \
             the Liouvillian kernel does not look one-dimensional"
        )));
    }
    let resid = ness_residual(table, spec, &rho_a);
    if resid > 1e-9 {
        return Err(Error::IntegrationFailure(format!(
            "steady-state residual ||L(rho)|| = {resid:.3e} above tolerance"
        )));
    }
    Ok(rho_a)
}
