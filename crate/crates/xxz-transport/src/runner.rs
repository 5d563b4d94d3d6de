//! Steady-state point solving and the resumable sweep engine.
//!
//! A sweep is a list of (N, alpha, gamma) points, each solved by the exact
//! direct solver, exact time evolution, or a trajectory ensemble. Points run
//! in index order; trajectory ensembles advance in time slices so a
//! checkpoint can capture every in-flight wave function, its window
//! accumulators and its random-stream position. Resuming from such a
//! checkpoint continues bit-exactly, and per-point failures are recorded in
//! the row status while the sweep carries on.

use crate::analysis::{RowStatus, SolverKind, SweepRecord};
use crate::error::{Error, Result};
use crate::io::{InFlightPoint, SweepCheckpoint, SweepConfig, SweepPoint, TrajSnapshot};
use crate::jumps::{
    advance_all, aggregate, EnsembleStats, Propagator, TrajectoryOptions, TrajectoryProgress,
};
use crate::master::{
    evolve_rk4, ness_direct, DensityOp, EvolveOptions, LindbladSpec,
};
use crate::model::{ChainConfig, CouplingTable};
use crate::observables::{bond_currents, bottleneck, polarization_profile};
use std::path::PathBuf;

/// The exact evolution holds 2^N x 2^N dense matrices.
pub const EXACT_RK4_MAX_SITES: usize = 10;

/// Fully resolved work order for one steady-state point.
#[derive(Debug, Clone)]
pub struct PointSpec {
    pub n: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub solver: SolverKind,
    pub j: f64,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub n_traj: u64,
    pub steady_frac: f64,
    pub sample_every: usize,
    pub propagator: Propagator,
    pub record_series: bool,
}

impl PointSpec {
    pub fn from_sweep(cfg: &SweepConfig, pt: SweepPoint) -> Self {
        Self {
            n: pt.n,
            alpha: pt.alpha,
            gamma: pt.gamma,
            solver: cfg.solver.choose(pt.n),
            j: cfg.j,
            dt: cfg.dt,
            t_end: cfg.t_end.unwrap_or_else(|| ChainConfig::default_t_end(pt.n)),
            seed: cfg.seed,
            n_traj: cfg.n_traj,
            steady_frac: cfg.steady_frac,
            sample_every: cfg.sample_every,
            propagator: cfg.propagator.into(),
            record_series: false,
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            n_sites: self.n,
            j: self.j,
            alpha: self.alpha,
            gamma: self.gamma,
            dt: self.dt,
            t_end: self.t_end,
            seed: self.seed,
        }
    }

    pub fn trajectory_options(&self) -> TrajectoryOptions {
        TrajectoryOptions {
            dt: self.dt,
            t_end: self.t_end,
            sample_every: self.sample_every,
            steady_start: (1.0 - self.steady_frac) * self.t_end,
            propagator: self.propagator,
            record_series: self.record_series,
        }
    }

    fn blank_record(&self) -> SweepRecord {
        SweepRecord {
            n_sites: self.n,
            alpha: self.alpha,
            gamma: self.gamma,
            solver: self.solver,
            n_traj: 0,
            j_ness: 0.0,
            j_stderr: 0.0,
            bottleneck: 0.0,
            bottleneck_stderr: 0.0,
            transient_cut: 0.0,
            t_end: 0.0,
            seed: self.seed,
            status: RowStatus::Ok,
            profile: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub record: SweepRecord,
    /// Present for trajectory points solved in this process.
    pub stats: Option<EnsembleStats>,
}

fn record_from_density(spec: &PointSpec, rho: &DensityOp, transient_cut: f64) -> SweepRecord {
    let js = bond_currents(rho, spec.j);
    let mut rec = spec.blank_record();
    rec.j_ness = js.iter().sum::<f64>() / js.len() as f64;
    rec.bottleneck = bottleneck(rho).expect("n >= 2 enforced by config");
    rec.transient_cut = transient_cut;
    rec.profile = Some(polarization_profile(rho));
    rec
}

fn record_from_stats(spec: &PointSpec, stats: &EnsembleStats) -> SweepRecord {
    let mut rec = spec.blank_record();
    rec.n_traj = stats.n_traj;
    rec.j_ness = stats.current.mean;
    rec.j_stderr = stats.current.std_error();
    rec.bottleneck = stats.bottleneck.mean;
    rec.bottleneck_stderr = stats.bottleneck.std_error();
    rec.transient_cut = stats.window.0;
    rec.t_end = stats.window.1;
    rec.profile = Some(stats.polarizations.iter().map(|w| w.mean).collect());
    rec
}

fn solve_point_inner(spec: &PointSpec) -> Result<PointOutcome> {
    let cfg = spec.chain_config();
    cfg.validate()?;
    let table = CouplingTable::new(&cfg)?;
    let lindblad = LindbladSpec::boundary_driven(spec.n, spec.gamma);
    match spec.solver {
        SolverKind::NessDirect => {
            let rho = ness_direct(&table, &lindblad)?;
            Ok(PointOutcome {
                record: record_from_density(spec, &rho, 0.0),
                stats: None,
            })
        }
        SolverKind::ExactRk4 => {
            if spec.n > EXACT_RK4_MAX_SITES {
                return Err(Error::SolverGuard(format!(
                    "exact-rk4 holds dense 2^N matrices and is limited to N <= {EXACT_RK4_MAX_SITES}; got N = {}",
                    spec.n
                )));
            }
            let rho0 = DensityOp::pure(&crate::basis::PureState::up_at_head(spec.n));
            let opts = EvolveOptions {
                dt: spec.dt,
                t_end: spec.t_end,
                sample_every: spec.sample_every.max(10),
                record_series: false,
                convergence: Some(Default::default()),
            };
            let out = evolve_rk4(&table, &lindblad, &rho0, &opts)?;
            let mut rec =
                record_from_density(spec, &out.final_rho, out.converged_at.unwrap_or(spec.t_end));
            rec.t_end = spec.t_end;
            Ok(PointOutcome {
                record: rec,
                stats: None,
            })
        }
        SolverKind::Trajectories => {
            let topts = spec.trajectory_options();
            topts.validate()?;
            let mut progresses: Vec<TrajectoryProgress> = (0..spec.n_traj)
                .map(|id| {
                    TrajectoryProgress::new(spec.n, spec.seed, id, topts.record_series)
                })
                .collect();
            advance_all(&table, spec.gamma, &topts, &mut progresses, topts.n_steps())?;
            let stats = aggregate(&table, &topts, &progresses);
            let record = record_from_stats(spec, &stats);
            Ok(PointOutcome {
                record,
                stats: Some(stats),
            })
        }
    }
}

/// Solve one point; any failure becomes a status column entry.
pub fn solve_point(spec: &PointSpec) -> PointOutcome {
    match solve_point_inner(spec) {
        Ok(out) => out,
        Err(e) => {
            let mut rec = spec.blank_record();
            rec.status = RowStatus::Failed(e.to_string());
            PointOutcome {
                record: rec,
                stats: None,
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub checkpoint_path: Option<PathBuf>,
    /// Time units between in-flight checkpoints of a trajectory point.
    pub checkpoint_interval: f64,
    pub resume: bool,
}

impl SweepOptions {
    pub fn with_checkpoint(path: PathBuf, resume: bool) -> Self {
        Self {
            checkpoint_path: Some(path),
            checkpoint_interval: 250.0,
            resume,
        }
    }
}

/// Run a sweep in point order with optional checkpoint/resume.
pub fn run_sweep(
    points: &[PointSpec],
    config_digest: &str,
    opts: &SweepOptions,
) -> Result<Vec<PointOutcome>> {
    let mut checkpoint = match (&opts.checkpoint_path, opts.resume) {
        (Some(path), true) if path.exists() => {
            let ckpt = SweepCheckpoint::load(path)?;
            if ckpt.config_digest != config_digest {
                return Err(Error::Config(format!(
                    "checkpoint {} belongs to a different sweep configuration",
                    path.display()
                )));
            }
            ckpt
        }
        _ => SweepCheckpoint::new(config_digest.to_string()),
    };

    let mut outcomes: Vec<Option<PointOutcome>> = vec![None; points.len()];
    for (idx, rec) in &checkpoint.completed {
        if *idx < points.len() {
            outcomes[*idx] = Some(PointOutcome {
                record: rec.clone(),
                stats: None,
            });
        }
    }

    for (idx, spec) in points.iter().enumerate() {
        if outcomes[idx].is_some() {
            continue;
        }
        let outcome = if spec.solver == SolverKind::Trajectories {
            solve_trajectory_point_resumable(spec, idx, &mut checkpoint, opts)?
        } else {
            solve_point(spec)
        };
        checkpoint
            .completed
            .push((idx, outcome.record.clone()));
        checkpoint.in_flight = None;
        if let Some(path) = &opts.checkpoint_path {
            checkpoint.write(path)?;
        }
        outcomes[idx] = Some(outcome);
    }

    Ok(outcomes.into_iter().map(|o| o.unwrap()).collect())
}

fn solve_trajectory_point_resumable(
    spec: &PointSpec,
    index: usize,
    checkpoint: &mut SweepCheckpoint,
    opts: &SweepOptions,
) -> Result<PointOutcome> {
    let cfg = spec.chain_config();
    if let Err(e) = cfg.validate() {
        let mut rec = spec.blank_record();
        rec.status = RowStatus::Failed(e.to_string());
        return Ok(PointOutcome {
            record: rec,
            stats: None,
        });
    }
    let table = CouplingTable::new(&cfg)?;
    let topts = spec.trajectory_options();
    topts.validate()?;
    let n_steps = topts.n_steps();

    let mut progresses: Vec<TrajectoryProgress> = match checkpoint
        .in_flight
        .take()
        .filter(|f| f.point_index == index)
    {
        Some(in_flight) => in_flight
            .trajectories
            .iter()
            .map(|s| s.restore(spec.n, spec.seed))
            .collect::<Result<_>>()?,
        None => (0..spec.n_traj)
            .map(|id| TrajectoryProgress::new(spec.n, spec.seed, id, topts.record_series))
            .collect(),
    };

    let slice_steps = if opts.checkpoint_path.is_some() && opts.checkpoint_interval > 0.0 {
        ((opts.checkpoint_interval / spec.dt).round() as u64).max(1)
    } else {
        n_steps
    };

    let mut reached = progresses.iter().map(|p| p.step).min().unwrap_or(0);
    while reached < n_steps {
        let target = (reached + slice_steps).min(n_steps);
        match advance_all(&table, spec.gamma, &topts, &mut progresses, target) {
            Ok(()) => {}
            Err(e) => {
                let mut rec = spec.blank_record();
                rec.status = RowStatus::Failed(e.to_string());
                return Ok(PointOutcome {
                    record: rec,
                    stats: None,
                });
            }
        }
        reached = target;
        if reached < n_steps {
            if let Some(path) = &opts.checkpoint_path {
                checkpoint.in_flight = Some(InFlightPoint {
                    point_index: index,
                    trajectories: progresses
                        .iter()
                        .map(|p| TrajSnapshot::capture(p, spec.seed, spec.dt))
                        .collect(),
                });
                checkpoint.write(path)?;
            }
        }
    }

    let stats = aggregate(&table, &topts, &progresses);
    let record = record_from_stats(spec, &stats);
    Ok(PointOutcome {
        record,
        stats: Some(stats),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn base_spec(n: usize, solver: SolverKind) -> PointSpec {
        PointSpec {
            n,
            alpha: 2.0,
            gamma: 2.0,
            solver,
            j: 1.0,
            dt: 0.01,
            t_end: 300.0,
            seed: 9,
            n_traj: 16,
            steady_frac: 0.25,
            sample_every: 10,
            propagator: Propagator::Rk4,
            record_series: false,
        }
    }

    #[test]
    fn direct_and_evolved_points_agree() {
        let direct = solve_point(&base_spec(3, SolverKind::NessDirect));
        assert!(direct.record.status.is_ok());
        let mut spec = base_spec(3, SolverKind::ExactRk4);
        spec.t_end = 600.0;
        let evolved = solve_point(&spec);
        assert!(evolved.record.status.is_ok());
        assert_abs_diff_eq!(
            direct.record.j_ness,
            evolved.record.j_ness,
            epsilon = 1e-6
        );
        assert_abs_diff_eq!(direct.record.j_ness, 0.373443983, epsilon = 1e-6);
        assert!(direct.record.profile.is_some());
        assert_eq!(direct.record.n_traj, 0);
        assert_eq!(direct.record.j_stderr, 0.0);
    }

    #[test]
    fn guard_violations_become_failed_rows() {
        let out = solve_point(&base_spec(8, SolverKind::NessDirect));
        assert!(matches!(out.record.status, RowStatus::Failed(_)));
        let out = solve_point(&base_spec(11, SolverKind::ExactRk4));
        assert!(matches!(out.record.status, RowStatus::Failed(_)));
        let bad = PointSpec {
            alpha: -1.0,
            ..base_spec(4, SolverKind::NessDirect)
        };
        let out = solve_point(&bad);
        assert!(matches!(out.record.status, RowStatus::Failed(_)));
    }

    #[test]
    fn trajectory_point_carries_errors_and_stats() {
        let mut spec = base_spec(3, SolverKind::Trajectories);
        spec.t_end = 120.0;
        spec.n_traj = 24;
        let out = solve_point(&spec);
        assert!(out.record.status.is_ok());
        let stats = out.stats.unwrap();
        assert_eq!(stats.n_traj, 24);
        assert!(out.record.j_stderr > 0.0);
        assert_eq!(out.record.n_traj, 24);
        assert_eq!(out.record.transient_cut, 90.0);
    }

    #[test]
    fn sweep_resume_reproduces_uninterrupted_results() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("ckpt.json");
        let mut points = vec![
            base_spec(2, SolverKind::NessDirect),
            base_spec(3, SolverKind::Trajectories),
        ];
        points[1].t_end = 100.0;
        points[1].n_traj = 12;

        // uninterrupted reference
        let reference = run_sweep(&points, "digest-a", &SweepOptions::default()).unwrap();

        // simulate a kill: run with a checkpoint after every 30 time units,
        // then throw the in-memory result away and resume from disk
        let opts = SweepOptions {
            checkpoint_path: Some(ckpt.clone()),
            checkpoint_interval: 30.0,
            resume: false,
        };
        let _ = run_sweep(&points[..1], "digest-a", &opts).unwrap();
        // first point done, second untouched; now resume the full list
        let opts_resume = SweepOptions {
            checkpoint_path: Some(ckpt.clone()),
            checkpoint_interval: 30.0,
            resume: true,
        };
        let resumed = run_sweep(&points, "digest-a", &opts_resume).unwrap();

        for (a, b) in reference.iter().zip(&resumed) {
            assert_eq!(a.record, b.record);
        }

        // a different config digest must refuse the checkpoint
        let err = run_sweep(&points, "digest-b", &opts_resume);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn mid_point_checkpoint_resume_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("ckpt.json");
        let mut spec = base_spec(3, SolverKind::Trajectories);
        spec.t_end = 120.0;
        spec.n_traj = 8;
        let points = vec![spec];

        let reference = run_sweep(&points, "d", &SweepOptions::default()).unwrap();

        // write a checkpoint mid-point by slicing, then resume from the
        // half-way file: emulate the kill by running the slice loop manually
        let opts = SweepOptions {
            checkpoint_path: Some(ckpt.clone()),
            checkpoint_interval: 40.0,
            resume: false,
        };
        // run fully (writes intermediate checkpoints along the way)
        let full = run_sweep(&points, "d", &opts).unwrap();
        assert_eq!(full[0].record, reference[0].record);

        // now rebuild an artificial half-done checkpoint and resume
        let cfg = points[0].chain_config();
        let table = CouplingTable::new(&cfg).unwrap();
        let topts = points[0].trajectory_options();
        let mut progresses: Vec<TrajectoryProgress> = (0..points[0].n_traj)
            .map(|id| TrajectoryProgress::new(3, points[0].seed, id, false))
            .collect();
        advance_all(&table, points[0].gamma, &topts, &mut progresses, 6000).unwrap();
        let mut half = SweepCheckpoint::new("d".to_string());
        half.in_flight = Some(InFlightPoint {
            point_index: 0,
            trajectories: progresses
                .iter()
                .map(|p| TrajSnapshot::capture(p, points[0].seed, points[0].dt))
                .collect(),
        });
        half.write(&ckpt).unwrap();

        let resumed = run_sweep(
            &points,
            "d",
            &SweepOptions {
                checkpoint_path: Some(ckpt),
                checkpoint_interval: 40.0,
                resume: true,
            },
        )
        .unwrap();
        assert_eq!(resumed[0].record, reference[0].record);
    }
}
