//! Long-horizon transition studies: chain-length series of steady currents
//! with ensemble sizes grown adaptively until the standard error is small
//! enough for the saturation detector, plus record-level caching so a
//! multi-hour series survives interruption.

use crate::analysis::{detect_transition, RowStatus, SolverKind, SweepRecord};
use crate::error::Result;
use crate::jumps::{advance_all, aggregate, EnsembleStats, Propagator, TrajectoryOptions, TrajectoryProgress};
use crate::model::{ChainConfig, CouplingTable};
use crate::master::{ness_direct, LindbladSpec};
use crate::observables::{bond_currents, bottleneck, polarization_profile};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Trajectory-ensemble cost/precision knobs for long sweeps.
#[derive(Debug, Clone, Serialize)]
pub struct StudyBudget {
    pub dt: f64,
    /// Grow the ensemble until SE <= this fraction of |j|.
    pub se_target_frac: f64,
    pub m_min: u64,
    pub m_max: u64,
    pub m_batch: u64,
    pub sample_every: usize,
    pub steady_frac: f64,
    pub seed: u64,
    pub propagator_euler: bool,
}

impl Default for StudyBudget {
    fn default() -> Self {
        Self {
            dt: 0.02,
            se_target_frac: 0.008,
            m_min: 48,
            m_max: 144,
            m_batch: 24,
            sample_every: 25,
            steady_frac: 0.3,
            seed: 0x5EED,
            propagator_euler: false,
        }
    }
}

impl StudyBudget {
    fn trajectory_options(&self, n: usize, record_series: bool) -> TrajectoryOptions {
        let t_end = ChainConfig::default_t_end(n);
        TrajectoryOptions {
            dt: self.dt,
            t_end,
            sample_every: self.sample_every,
            steady_start: (1.0 - self.steady_frac) * t_end,
            propagator: if self.propagator_euler {
                Propagator::Euler
            } else {
                Propagator::Rk4
            },
            record_series,
        }
    }

    pub fn digest(&self) -> String {
        crate::io::config_digest(&serde_json::to_value(self).expect("budget serializes"))
    }
}

/// Trajectory steady-state point with the ensemble grown in batches until
/// the current's standard error meets the budget target.
pub fn adaptive_trajectory_point(
    n: usize,
    alpha: f64,
    gamma: f64,
    budget: &StudyBudget,
    record_series: bool,
) -> Result<(SweepRecord, EnsembleStats)> {
    let cfg = ChainConfig {
        dt: budget.dt,
        seed: budget.seed,
        ..ChainConfig::new(n, alpha, gamma)
    };
    let table = CouplingTable::new(&cfg)?;
    let topts = budget.trajectory_options(n, record_series);
    topts.validate()?;
    let n_steps = topts.n_steps();

    let mut progresses: Vec<TrajectoryProgress> = Vec::new();
    let mut stats;
    loop {
        let have = progresses.len() as u64;
        let grow = if have == 0 {
            budget.m_min
        } else {
            budget.m_batch
        };
        let mut batch: Vec<TrajectoryProgress> = (have..have + grow)
            .map(|id| TrajectoryProgress::new(n, budget.seed, id, record_series))
            .collect();
        advance_all(&table, gamma, &topts, &mut batch, n_steps)?;
        progresses.extend(batch);
        stats = aggregate(&table, &topts, &progresses);
        let m = progresses.len() as u64;
        let good_enough =
            stats.current.std_error() <= budget.se_target_frac * stats.current.mean.abs();
        if m >= budget.m_min && (good_enough || m >= budget.m_max) {
            break;
        }
    }

    let record = SweepRecord {
        n_sites: n,
        alpha,
        gamma,
        solver: SolverKind::Trajectories,
        n_traj: stats.n_traj,
        j_ness: stats.current.mean,
        j_stderr: stats.current.std_error(),
        bottleneck: stats.bottleneck.mean,
        bottleneck_stderr: stats.bottleneck.std_error(),
        transient_cut: stats.window.0,
        t_end: stats.window.1,
        seed: budget.seed,
        status: RowStatus::Ok,
        profile: Some(stats.polarizations.iter().map(|w| w.mean).collect()),
    };
    Ok((record, stats))
}

/// Exact direct-solver record for small chains.
pub fn exact_point(n: usize, alpha: f64, gamma: f64, seed: u64) -> Result<SweepRecord> {
    let cfg = ChainConfig::new(n, alpha, gamma);
    let table = CouplingTable::new(&cfg)?;
    let rho = ness_direct(&table, &LindbladSpec::boundary_driven(n, gamma))?;
    let js = bond_currents(&rho, cfg.j);
    Ok(SweepRecord {
        n_sites: n,
        alpha,
        gamma,
        solver: SolverKind::NessDirect,
        n_traj: 0,
        j_ness: js.iter().sum::<f64>() / js.len() as f64,
        j_stderr: 0.0,
        bottleneck: bottleneck(&rho)?,
        bottleneck_stderr: 0.0,
        transient_cut: 0.0,
        t_end: 0.0,
        seed,
        status: RowStatus::Ok,
        profile: Some(polarization_profile(&rho)),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct StudyCache {
    digest: String,
    records: Vec<SweepRecord>,
}

fn load_cache(path: &Path, digest: &str) -> Vec<SweepRecord> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Vec::new();
    };
    match serde_json::from_str::<StudyCache>(&text) {
        Ok(cache) if cache.digest == digest => cache.records,
        _ => Vec::new(),
    }
}

fn store_cache(path: &Path, digest: &str, records: &[SweepRecord]) -> Result<()> {
    let cache = StudyCache {
        digest: digest.to_string(),
        records: records.to_vec(),
    };
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string(&cache)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Result of one chain-length series at fixed (alpha, gamma).
#[derive(Debug, Clone)]
pub struct TransitionSeries {
    pub alpha: f64,
    pub gamma: f64,
    pub records: Vec<SweepRecord>,
    pub transition_n: Option<usize>,
    /// Ensemble transient estimates per N (time to enter the steady band).
    pub transients: Vec<(usize, Option<f64>)>,
    /// Too-short-horizon suspicions raised by the window-halves check.
    pub warnings: Vec<String>,
}

/// Sweep N upward at fixed (alpha, gamma) until the saturation detector has
/// three confirming pairs past the transition (or n_max is reached). Every
/// finished point is cached on disk keyed by the budget digest, so a killed
/// run resumes at the first uncomputed chain length.
pub fn transition_series(
    alpha: f64,
    gamma: f64,
    n_lo: usize,
    n_max: usize,
    epsilon: f64,
    budget: &StudyBudget,
    cache_path: Option<&Path>,
    mut progress_sink: Option<&mut dyn FnMut(&SweepRecord)>,
) -> Result<TransitionSeries> {
    let digest = format!("{}:{alpha}:{gamma}:{n_lo}", budget.digest());
    let mut cached = cache_path
        .map(|p| load_cache(p, &digest))
        .unwrap_or_default();
    cached.retain(|r| r.alpha == alpha && r.gamma == gamma && r.status.is_ok());
    cached.sort_by_key(|r| r.n_sites);

    let mut records: Vec<SweepRecord> = Vec::new();
    let mut transients: Vec<(usize, Option<f64>)> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut transition = None;
    for n in n_lo..=n_max {
        let (record, transient) = match cached.iter().find(|r| r.n_sites == n) {
            Some(r) => (r.clone(), None),
            None => {
                let (record, stats) = adaptive_trajectory_point(n, alpha, gamma, budget, true)?;
                if !stats.window_halves_agree {
                    warnings.push(format!(
                        "N = {n}: steady-window halves disagree; t_end may be too short"
                    ));
                }
                let transient = stats.transient_estimate();
                cached.push(record.clone());
                if let Some(path) = cache_path {
                    store_cache(path, &digest, &cached)?;
                }
                (record, transient)
            }
        };
        if let Some(sink) = progress_sink.as_deref_mut() {
            sink(&record);
        }
        transients.push((n, transient));
        records.push(record);

        if records.len() >= 4 {
            if let Some(t) = detect_transition(&records, epsilon)? {
                // require three confirming pairs before stopping early
                if n >= t + 3 {
                    transition = Some(t);
                    break;
                }
            }
        }
    }
    if transition.is_none() && records.len() >= 3 {
        transition = detect_transition(&records, epsilon)?;
    }
    Ok(TransitionSeries {
        alpha,
        gamma,
        records,
        transition_n: transition,
        transients,
        warnings,
    })
}
