//! Monte Carlo wave-function unraveling of the boundary-driven master
//! equation: deterministic drift under the non-hermitian effective
//! Hamiltonian
//!
//!   H_eff = H - (i/2) Gamma ( s-_0 s+_0 + s+_{N-1} s-_{N-1} ),
//!
//! interrupted by stochastic pump/drain jumps with first-order probabilities
//! dp = dt Gamma <psi| s-+ s+- |psi>, followed by ensemble and time
//! averaging. Trajectories are independent tasks on counter-based random
//! streams; a fixed chunk partition and an id-ordered merge keep every
//! aggregate deterministic under any worker count.

use crate::basis::{kernel, PureState, C64};
use crate::error::{Error, Result};
use crate::model::{kernel_h, CouplingTable};
use crate::observables::SpinObservables;
use crate::rng::TrajectoryRng;
use crate::stats::Welford;
use rayon::prelude::*;

/// Fixed partition width for deterministic parallel aggregation.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpChannel {
    /// sigma^+ fired on site 0.
    PumpHead,
    /// sigma^- fired on site N-1.
    DrainTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagator {
    /// RK4 on the effective generator (default; dt-robust).
    #[default]
    Rk4,
    /// Literal first-order update (1 - i dt H_eff) / sqrt(1 - dp).
    Euler,
}

/// One stochastic wave function mid-run.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub psi: PureState,
    pub t: f64,
    pub rng: TrajectoryRng,
    pub jump_log: Vec<(f64, JumpChannel)>,
}

impl TrajectoryState {
    pub fn new(n_sites: usize, master_seed: u64, trajectory_id: u64) -> Self {
        Self {
            psi: PureState::up_at_head(n_sites),
            t: 0.0,
            rng: TrajectoryRng::new(master_seed, trajectory_id),
            jump_log: Vec::new(),
        }
    }

    pub fn with_initial(mut self, psi: PureState) -> Self {
        self.psi = psi;
        self
    }
}

/// Scratch buffers reused across steps.
pub struct Workspace {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    stage: Vec<C64>,
}

impl Workspace {
    pub fn new(n_sites: usize) -> Self {
        let dim = 1usize << n_sites;
        Self {
            k1: vec![C64::default(); dim],
            k2: vec![C64::default(); dim],
            k3: vec![C64::default(); dim],
            k4: vec![C64::default(); dim],
            stage: vec![C64::default(); dim],
        }
    }
}

/// H_eff |psi>: Hamiltonian action plus the imaginary boundary decay.
pub fn effective_apply(table: &CouplingTable, gamma: f64, psi: &PureState) -> Result<PureState> {
    if psi.n_sites() != table.n_sites() {
        return Err(Error::Config("state dimension mismatch".into()));
    }
    let n = table.n_sites();
    let mut out = PureState::zero(n);
    // -i H_eff psi, then multiply by i to get H_eff psi
    kernel_h::schroedinger_rhs_into(table, gamma, psi.amplitudes(), out.amplitudes_mut());
    let i = C64::new(0.0, 1.0);
    for a in out.amplitudes_mut() {
        *a *= i;
    }
    Ok(out)
}

/// First-order jump probabilities (pump, drain) for one step of length dt.
pub fn jump_probabilities(gamma: f64, psi: &PureState, dt: f64) -> Result<(f64, f64)> {
    let n = psi.n_sites();
    let p0 = dt * gamma * kernel::population_down(psi.amplitudes(), 0);
    let p1 = dt * gamma * kernel::population_up(psi.amplitudes(), n - 1);
    if p0 + p1 > 0.1 {
        return Err(Error::StepSize(format!(
            "total jump probability {:.3} per step exceeds 0.1; the first-order \
             jump expansion needs a smaller dt",
            p0 + p1
        )));
    }
    Ok((p0, p1))
}

/// One step on raw amplitudes; returns the jump fired, if any.
fn step_core(
    psi: &mut [C64],
    n_sites: usize,
    table: &CouplingTable,
    gamma: f64,
    dt: f64,
    propagator: Propagator,
    ws: &mut Workspace,
    r: f64,
) -> Result<Option<JumpChannel>> {
    let p0 = dt * gamma * kernel::population_down(psi, 0);
    let p1 = dt * gamma * kernel::population_up(psi, n_sites - 1);
    let dp = p0 + p1;
    if dp > 0.1 {
        return Err(Error::StepSize(format!(
            "total jump probability {dp:.3} per step exceeds 0.1; reduce dt"
        )));
    }

    if r < dp {
        // channel chosen proportionally to (p0, p1) by reusing the same draw
        let channel = if r < p0 {
            kernel::sigma_plus_into(psi, 0, &mut ws.stage);
            JumpChannel::PumpHead
        } else {
            kernel::sigma_minus_into(psi, n_sites - 1, &mut ws.stage);
            JumpChannel::DrainTail
        };
        psi.copy_from_slice(&ws.stage);
        let norm = normalize(psi);
        if norm <= 0.0 {
            return Err(Error::IntegrationFailure(
                "zero-norm state after jump; jump probabilities are inconsistent".into(),
            ));
        }
        return Ok(Some(channel));
    }

    match propagator {
        Propagator::Rk4 => {
            kernel_h::schroedinger_rhs_into(table, gamma, psi, &mut ws.k1);
            for i in 0..psi.len() {
                ws.stage[i] = psi[i] + 0.5 * dt * ws.k1[i];
            }
            kernel_h::schroedinger_rhs_into(table, gamma, &ws.stage, &mut ws.k2);
            for i in 0..psi.len() {
                ws.stage[i] = psi[i] + 0.5 * dt * ws.k2[i];
            }
            kernel_h::schroedinger_rhs_into(table, gamma, &ws.stage, &mut ws.k3);
            for i in 0..psi.len() {
                ws.stage[i] = psi[i] + dt * ws.k3[i];
            }
            kernel_h::schroedinger_rhs_into(table, gamma, &ws.stage, &mut ws.k4);
            let w = dt / 6.0;
            for i in 0..psi.len() {
                psi[i] += w * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
            }
        }
        Propagator::Euler => {
            kernel_h::schroedinger_rhs_into(table, gamma, psi, &mut ws.k1);
            let scale = 1.0 / (1.0 - dp).sqrt();
            for i in 0..psi.len() {
                psi[i] = (psi[i] + dt * ws.k1[i]) * scale;
            }
        }
    }
    normalize(psi);
    Ok(None)
}

fn normalize(psi: &mut [C64]) -> f64 {
    let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        let inv = 1.0 / norm;
        for a in psi.iter_mut() {
            *a *= inv;
        }
    }
    norm
}

/// Advance a trajectory by one step: draw, jump or drift, renormalize.
pub fn step(
    traj: &mut TrajectoryState,
    table: &CouplingTable,
    gamma: f64,
    dt: f64,
    propagator: Propagator,
    ws: &mut Workspace,
) -> Result<()> {
    let r = traj.rng.uniform();
    step_with_draw(traj, table, gamma, dt, propagator, ws, r)
}

/// Step with an externally supplied uniform draw (deterministic tests).
pub fn step_with_draw(
    traj: &mut TrajectoryState,
    table: &CouplingTable,
    gamma: f64,
    dt: f64,
    propagator: Propagator,
    ws: &mut Workspace,
    r: f64,
) -> Result<()> {
    let n = traj.psi.n_sites();
    let fired = step_core(
        traj.psi.amplitudes_mut(),
        n,
        table,
        gamma,
        dt,
        propagator,
        ws,
        r,
    )?;
    traj.t += dt;
    if let Some(channel) = fired {
        traj.jump_log.push((traj.t, channel));
    }
    Ok(())
}

/// Time-stepping plan shared by every trajectory of an ensemble.
#[derive(Debug, Clone)]
pub struct TrajectoryOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between observable samples.
    pub sample_every: usize,
    /// Start of the steady averaging window.
    pub steady_start: f64,
    pub propagator: Propagator,
    /// Keep the decimated bond-averaged current per sample.
    pub record_series: bool,
}

impl TrajectoryOptions {
    /// Defaults: sample every 10 steps, steady window = trailing 25%.
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            sample_every: 10,
            steady_start: 0.75 * t_end,
            propagator: Propagator::Rk4,
            record_series: false,
        }
    }

    pub fn n_steps(&self) -> u64 {
        (self.t_end / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return Err(Error::Config("dt and t_end must be positive".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if !(0.0..self.t_end).contains(&self.steady_start) {
            return Err(Error::Config(format!(
                "steady window start {} outside (0, t_end = {})",
                self.steady_start, self.t_end
            )));
        }
        let sample_dt = self.dt * self.sample_every as f64;
        if (self.t_end - self.steady_start) / sample_dt < 10.0 {
            return Err(Error::Config(
                "steady window spans fewer than 10 sample intervals".into(),
            ));
        }
        Ok(())
    }
}

/// Running sums inside the steady window plus the final-sample snapshot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowAccum {
    pub samples: u64,
    pub current_sum: f64,
    pub bond_sums: Vec<f64>,
    pub pol_sums: Vec<f64>,
    pub bottleneck_sum: f64,
    pub snapshot_current: f64,
    pub snapshot_bond_currents: Vec<f64>,
}

/// Everything needed to continue a trajectory mid-run.
#[derive(Debug, Clone)]
pub struct TrajectoryProgress {
    pub id: u64,
    pub step: u64,
    pub psi: PureState,
    pub rng: TrajectoryRng,
    pub n_jumps: u64,
    pub acc: WindowAccum,
    /// Bond-averaged current per sample, when series recording is on.
    pub series: Option<Vec<f64>>,
}

impl TrajectoryProgress {
    pub fn new(n_sites: usize, master_seed: u64, id: u64, record_series: bool) -> Self {
        Self {
            id,
            step: 0,
            psi: PureState::up_at_head(n_sites),
            rng: TrajectoryRng::new(master_seed, id),
            n_jumps: 0,
            acc: WindowAccum::default(),
            series: record_series.then(Vec::new),
        }
    }
}

fn record_sample(
    progress: &mut TrajectoryProgress,
    table: &CouplingTable,
    opts: &TrajectoryOptions,
    t: f64,
) {
    let psi = &progress.psi;
    let n = psi.n_sites();
    let currents: Vec<f64> = (0..n - 1)
        .map(|k| 2.0 * table.j() * psi.bond_coherence(k).im)
        .collect();
    let mean_j = currents.iter().sum::<f64>() / currents.len() as f64;
    if let Some(series) = progress.series.as_mut() {
        series.push(mean_j);
    }
    progress.acc.snapshot_current = mean_j;
    progress.acc.snapshot_bond_currents = currents.clone();
    if t >= opts.steady_start - 1e-9 {
        let acc = &mut progress.acc;
        if acc.bond_sums.is_empty() {
            acc.bond_sums = vec![0.0; n - 1];
            acc.pol_sums = vec![0.0; n];
        }
        acc.samples += 1;
        acc.current_sum += mean_j;
        for (s, c) in acc.bond_sums.iter_mut().zip(&currents) {
            *s += c;
        }
        let mut pol0 = 0.0;
        let mut pol1 = 0.0;
        for (site, slot) in acc.pol_sums.iter_mut().enumerate() {
            let p = psi.sz_expectation(site);
            if site == 0 {
                pol0 = p;
            } else if site == 1 {
                pol1 = p;
            }
            *slot += p;
        }
        acc.bottleneck_sum += pol0 - pol1;
    }
}

/// Advance to `target_step`, sampling on the global step grid.
pub fn advance(
    progress: &mut TrajectoryProgress,
    table: &CouplingTable,
    gamma: f64,
    opts: &TrajectoryOptions,
    target_step: u64,
    ws: &mut Workspace,
) -> Result<()> {
    let n = progress.psi.n_sites();
    let n_steps = opts.n_steps();
    if progress.step == 0 {
        record_sample(progress, table, opts, 0.0);
    }
    while progress.step < target_step {
        let r = progress.rng.uniform();
        let fired = step_core(
            progress.psi.amplitudes_mut(),
            n,
            table,
            gamma,
            opts.dt,
            opts.propagator,
            ws,
            r,
        )?;
        progress.step += 1;
        if fired.is_some() {
            progress.n_jumps += 1;
        }
        if progress.step % opts.sample_every as u64 == 0 || progress.step == n_steps {
            let t = progress.step as f64 * opts.dt;
            record_sample(progress, table, opts, t);
        }
    }
    Ok(())
}

/// Scalar results of one finished trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    pub id: u64,
    pub n_jumps: u64,
    pub window_samples: u64,
    pub window_current: f64,
    pub window_bond_currents: Vec<f64>,
    pub window_polarizations: Vec<f64>,
    pub window_bottleneck: f64,
    pub snapshot_current: f64,
    pub snapshot_bond_currents: Vec<f64>,
}

impl TrajectorySummary {
    fn from_progress(p: &TrajectoryProgress) -> Self {
        let s = p.acc.samples.max(1) as f64;
        Self {
            id: p.id,
            n_jumps: p.n_jumps,
            window_samples: p.acc.samples,
            window_current: p.acc.current_sum / s,
            window_bond_currents: p.acc.bond_sums.iter().map(|v| v / s).collect(),
            window_polarizations: p.acc.pol_sums.iter().map(|v| v / s).collect(),
            window_bottleneck: p.acc.bottleneck_sum / s,
            snapshot_current: p.acc.snapshot_current,
            snapshot_bond_currents: p.acc.snapshot_bond_currents.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryRun {
    pub summary: TrajectorySummary,
    pub series: Option<Vec<f64>>,
    pub jump_count: u64,
}

/// Run one whole trajectory with per-sample expectation values.
pub fn run_trajectory(
    table: &CouplingTable,
    gamma: f64,
    master_seed: u64,
    id: u64,
    opts: &TrajectoryOptions,
) -> Result<TrajectoryRun> {
    opts.validate()?;
    let mut progress = TrajectoryProgress::new(table.n_sites(), master_seed, id, opts.record_series);
    let mut ws = Workspace::new(table.n_sites());
    advance(&mut progress, table, gamma, opts, opts.n_steps(), &mut ws)?;
    Ok(TrajectoryRun {
        summary: TrajectorySummary::from_progress(&progress),
        series: progress.series.take(),
        jump_count: progress.n_jumps,
    })
}

/// Ensemble aggregate over trajectories `id_offset .. id_offset + n_traj`.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    pub n_traj: u64,
    pub window: (f64, f64),
    /// Over per-trajectory window time-averages.
    pub current: Welford,
    pub bottleneck: Welford,
    pub bond_currents: Vec<Welford>,
    pub polarizations: Vec<Welford>,
    /// Over per-trajectory final-sample values.
    pub snapshot_current: Welford,
    /// Final-sample single-bond currents, one accumulator per bond.
    pub snapshot_bond_currents: Vec<Welford>,
    pub per_traj_window_current: Vec<f64>,
    pub per_traj_snapshot_current: Vec<f64>,
    /// Final-sample current on the middle bond, per trajectory.
    pub per_traj_snapshot_mid_bond: Vec<f64>,
    /// Sample times and the across-trajectory spread of the bond-averaged
    /// current, when series recording is on.
    pub series: Option<(Vec<f64>, Vec<Welford>)>,
    /// Whether the two halves of the steady window agree within one
    /// standard error of the window mean.
    pub window_halves_agree: bool,
    pub total_jumps: u64,
}

impl EnsembleStats {
    /// First sample time at which the ensemble-mean current enters and stays
    /// inside max(3 SE, 2%) of its final value; needs the recorded series.
    pub fn transient_estimate(&self) -> Option<f64> {
        let (times, welfords) = self.series.as_ref()?;
        if times.len() < 4 {
            return None;
        }
        let means: Vec<f64> = welfords.iter().map(|w| w.mean).collect();
        // smooth over ~25 time units to suppress sampling noise
        let dt_s = times[1] - times[0];
        let half = ((12.5 / dt_s).round() as usize).max(1);
        let smooth = |i: usize| -> f64 {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(means.len());
            means[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        };
        let last = means.len() - 1;
        let final_val = smooth(last);
        let final_se = welfords[last].std_error();
        let band = (3.0 * final_se).max(0.02 * final_val.abs());
        let mut t_star = times[last];
        for i in (0..means.len()).rev() {
            if (smooth(i) - final_val).abs() <= band {
                t_star = times[i];
            } else {
                break;
            }
        }
        Some(t_star)
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleOptions {
    pub n_traj: u64,
    pub id_offset: u64,
    pub master_seed: u64,
    pub trajectory: TrajectoryOptions,
}

impl EnsembleOptions {
    pub fn new(master_seed: u64, n_traj: u64, trajectory: TrajectoryOptions) -> Self {
        Self {
            n_traj,
            id_offset: 0,
            master_seed,
            trajectory,
        }
    }
}

/// Run the ensemble to completion (no checkpointing); deterministic for a
/// fixed seed regardless of worker count.
pub fn ensemble_average(
    table: &CouplingTable,
    gamma: f64,
    opts: &EnsembleOptions,
) -> Result<EnsembleStats> {
    opts.trajectory.validate()?;
    if opts.n_traj == 0 {
        return Err(Error::Config("ensemble needs at least one trajectory".into()));
    }
    let ids: Vec<u64> = (opts.id_offset..opts.id_offset + opts.n_traj).collect();
    let progresses = run_ids(table, gamma, opts, &ids)?;
    Ok(aggregate(table, &opts.trajectory, &progresses))
}

/// Advance every listed trajectory from scratch to t_end.
pub(crate) fn run_ids(
    table: &CouplingTable,
    gamma: f64,
    opts: &EnsembleOptions,
    ids: &[u64],
) -> Result<Vec<TrajectoryProgress>> {
    let n_steps = opts.trajectory.n_steps();
    let mut progresses: Vec<TrajectoryProgress> = ids
        .iter()
        .map(|&id| {
            TrajectoryProgress::new(
                table.n_sites(),
                opts.master_seed,
                id,
                opts.trajectory.record_series,
            )
        })
        .collect();
    advance_all(table, gamma, &opts.trajectory, &mut progresses, n_steps)?;
    Ok(progresses)
}

/// Advance a set of in-flight trajectories to `target_step` in parallel.
pub(crate) fn advance_all(
    table: &CouplingTable,
    gamma: f64,
    topts: &TrajectoryOptions,
    progresses: &mut [TrajectoryProgress],
    target_step: u64,
) -> Result<()> {
    progresses
        .par_chunks_mut(CHUNK)
        .map(|chunk| {
            let mut ws = Workspace::new(table.n_sites());
            for p in chunk {
                advance(p, table, gamma, topts, target_step, &mut ws)?;
            }
            Ok(())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

/// Merge finished trajectories in id order.
pub(crate) fn aggregate(
    table: &CouplingTable,
    topts: &TrajectoryOptions,
    progresses: &[TrajectoryProgress],
) -> EnsembleStats {
    let n = table.n_sites();
    let mid_bond = (n - 1) / 2;
    let mut current = Welford::default();
    let mut bottleneck = Welford::default();
    let mut snapshot = Welford::default();
    let mut snapshot_bonds = vec![Welford::default(); n - 1];
    let mut bonds = vec![Welford::default(); n - 1];
    let mut pols = vec![Welford::default(); n];
    let mut per_traj_window = Vec::with_capacity(progresses.len());
    let mut per_traj_snapshot = Vec::with_capacity(progresses.len());
    let mut per_traj_snapshot_mid = Vec::with_capacity(progresses.len());
    let mut total_jumps = 0;

    let mut series_acc: Option<Vec<Welford>> = None;
    for p in progresses {
        let s = TrajectorySummary::from_progress(p);
        current.push(s.window_current);
        bottleneck.push(s.window_bottleneck);
        snapshot.push(s.snapshot_current);
        for (w, v) in snapshot_bonds.iter_mut().zip(&s.snapshot_bond_currents) {
            w.push(*v);
        }
        for (w, v) in bonds.iter_mut().zip(&s.window_bond_currents) {
            w.push(*v);
        }
        for (w, v) in pols.iter_mut().zip(&s.window_polarizations) {
            w.push(*v);
        }
        per_traj_window.push(s.window_current);
        per_traj_snapshot.push(s.snapshot_current);
        per_traj_snapshot_mid.push(
            s.snapshot_bond_currents
                .get(mid_bond)
                .copied()
                .unwrap_or(s.snapshot_current),
        );
        total_jumps += s.n_jumps;
        if let Some(series) = &p.series {
            let acc = series_acc.get_or_insert_with(|| vec![Welford::default(); series.len()]);
            for (w, v) in acc.iter_mut().zip(series) {
                w.push(*v);
            }
        }
    }

    let series = series_acc.map(|acc| {
        let times = sample_times(topts);
        debug_assert_eq!(times.len(), acc.len());
        (times, acc)
    });

    // steady-window halves comparison on the per-sample ensemble means
    let window_halves_agree = match &series {
        Some((times, acc)) => {
            let in_window: Vec<usize> = times
                .iter()
                .enumerate()
                .filter(|(_, t)| **t >= topts.steady_start - 1e-9)
                .map(|(i, _)| i)
                .collect();
            if in_window.len() >= 4 {
                let mid = in_window.len() / 2;
                let mean_of = |idx: &[usize]| -> f64 {
                    idx.iter().map(|&i| acc[i].mean).sum::<f64>() / idx.len() as f64
                };
                let m1 = mean_of(&in_window[..mid]);
                let m2 = mean_of(&in_window[mid..]);
                (m1 - m2).abs() <= current.std_error().max(1e-12)
            } else {
                true
            }
        }
        None => true,
    };

    EnsembleStats {
        n_traj: progresses.len() as u64,
        window: (topts.steady_start, topts.t_end),
        current,
        bottleneck,
        bond_currents: bonds,
        polarizations: pols,
        snapshot_current: snapshot,
        snapshot_bond_currents: snapshot_bonds,
        per_traj_window_current: per_traj_window,
        per_traj_snapshot_current: per_traj_snapshot,
        per_traj_snapshot_mid_bond: per_traj_snapshot_mid,
        series,
        window_halves_agree,
        total_jumps,
    }
}

/// The shared sampling grid of an ensemble.
pub fn sample_times(topts: &TrajectoryOptions) -> Vec<f64> {
    let n_steps = topts.n_steps();
    let mut times: Vec<f64> = Vec::new();
    times.push(0.0);
    let mut step = topts.sample_every as u64;
    while step < n_steps {
        times.push(step as f64 * topts.dt);
        step += topts.sample_every as u64;
    }
    if n_steps % topts.sample_every as u64 == 0 {
        if n_steps > 0 {
            // already emitted by the loop? the loop stops before n_steps
            times.push(n_steps as f64 * topts.dt);
        }
    } else {
        times.push(n_steps as f64 * topts.dt);
    }
    times
}
