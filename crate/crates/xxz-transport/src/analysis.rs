//! Post-processing of steady-state sweeps: power-law fits of current versus
//! chain length, saturation (transition) detection, regime classification
//! and the driving-strength scan for negative differential conductivity.
//!
//! Diffusive series follow j ∝ N^(-gamma_exp) with gamma_exp > 0; ballistic
//! series are flat. Saturation is declared by a reproducible rule: the
//! smallest N from which every consecutive relative change stays below a
//! threshold (default 3%), with at least two such pairs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Reproducible stand-in for reading saturation off a log plot by eye.
pub const DEFAULT_SATURATION_EPSILON: f64 = 0.03;

/// Fits skip the edge-dominated shortest chains by default.
pub const DEFAULT_FIT_N_MIN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "exact-rk4")]
    ExactRk4,
    #[serde(rename = "ness-direct")]
    NessDirect,
    #[serde(rename = "trajectories")]
    Trajectories,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::ExactRk4 => "exact-rk4",
            SolverKind::NessDirect => "ness-direct",
            SolverKind::Trajectories => "trajectories",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact-rk4" => Ok(SolverKind::ExactRk4),
            "ness-direct" => Ok(SolverKind::NessDirect),
            "trajectories" => Ok(SolverKind::Trajectories),
            other => Err(Error::Data(format!("unknown solver kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

impl RowStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RowStatus::Ok)
    }
}

/// One steady-state data point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub n_sites: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub solver: SolverKind,
    /// 0 for exact solvers.
    pub n_traj: u64,
    pub j_ness: f64,
    /// 0 for exact solvers, > 0 for stochastic ones.
    pub j_stderr: f64,
    pub bottleneck: f64,
    pub bottleneck_stderr: f64,
    /// Start of the averaging window (or detected convergence time).
    pub transient_cut: f64,
    pub t_end: f64,
    pub seed: u64,
    pub status: RowStatus,
    /// Per-site steady polarizations; carried in the companion profile file.
    #[serde(default)]
    pub profile: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    Diffusive,
    Ballistic,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    /// Exponent gamma_exp of j ∝ N^(-gamma_exp).
    pub gamma_exp: f64,
    pub amplitude: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Per-point log-space residuals (n, ln j - fit).
    pub residuals: Vec<(usize, f64)>,
    pub transition_n: Option<usize>,
    /// Regime of the largest fitted chain length.
    pub regime: Regime,
    pub epsilon: f64,
}

fn check_series(records: &[SweepRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Data("empty record series".into()));
    }
    let (alpha, gamma) = (records[0].alpha, records[0].gamma);
    for r in records {
        if !r.status.is_ok() {
            return Err(Error::Data(format!(
                "record at N = {} carries a failure status",
                r.n_sites
            )));
        }
        if r.alpha != alpha || r.gamma != gamma {
            return Err(Error::Data(format!(
                "mixed series: (alpha, gamma) = ({}, {}) and ({}, {})",
                alpha, gamma, r.alpha, r.gamma
            )));
        }
    }
    for w in records.windows(2) {
        if w[1].n_sites <= w[0].n_sites {
            return Err(Error::Data(format!(
                "records must be sorted by strictly increasing N; saw {} then {}",
                w[0].n_sites, w[1].n_sites
            )));
        }
    }
    Ok(())
}

/// Weighted least squares of ln j on ln N; the weight of a stochastic point
/// is its inverse log-variance, exact points share the tightest weight.
pub fn powerlaw_fit(records: &[SweepRecord], range: Option<(usize, usize)>) -> Result<FitResult> {
    powerlaw_fit_with_epsilon(records, range, DEFAULT_SATURATION_EPSILON)
}

/// As [`powerlaw_fit`] with an explicit saturation threshold.
pub fn powerlaw_fit_with_epsilon(
    records: &[SweepRecord],
    range: Option<(usize, usize)>,
    epsilon: f64,
) -> Result<FitResult> {
    check_series(records)?;
    let (lo, hi) = range.unwrap_or((DEFAULT_FIT_N_MIN, usize::MAX));
    let pts: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| (lo..=hi).contains(&r.n_sites))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "power-law fit needs at least 3 points in range, found {}",
            pts.len()
        )));
    }
    for r in &pts {
        if r.j_ness <= 0.0 {
            return Err(Error::Data(format!(
                "nonpositive current {} at N = {} cannot enter a log fit",
                r.j_ness, r.n_sites
            )));
        }
    }

    // sigma of ln j; exact rows inherit a tenth of the tightest stochastic sigma
    let min_stoch = pts
        .iter()
        .filter(|r| r.j_stderr > 0.0)
        .map(|r| r.j_stderr / r.j_ness)
        .fold(f64::INFINITY, f64::min);
    let sigma_floor = if min_stoch.is_finite() {
        min_stoch / 10.0
    } else {
        1.0
    };
    let mut sw = 0.0;
    let mut swx = 0.0;
    let mut swy = 0.0;
    let mut swxx = 0.0;
    let mut swxy = 0.0;
    for r in &pts {
        let x = (r.n_sites as f64).ln();
        let y = r.j_ness.ln();
        let sigma = if r.j_stderr > 0.0 {
            r.j_stderr / r.j_ness
        } else {
            sigma_floor
        };
        let w = 1.0 / (sigma * sigma);
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if det.abs() < 1e-300 {
        return Err(Error::Fit("degenerate fit system".into()));
    }
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swxx * swy - swx * swxy) / det;

    let residuals: Vec<(usize, f64)> = pts
        .iter()
        .map(|r| {
            let x = (r.n_sites as f64).ln();
            (r.n_sites, r.j_ness.ln() - (intercept + slope * x))
        })
        .collect();

    let transition_n = detect_transition(records, epsilon)?;
    let n_max = pts.last().unwrap().n_sites;
    let regime = classify_regime(records, n_max, epsilon)?;
    Ok(FitResult {
        gamma_exp: -slope,
        amplitude: intercept.exp(),
        n_min: pts.first().unwrap().n_sites,
        n_max,
        residuals,
        transition_n,
        regime,
        epsilon,
    })
}

/// Smallest N* such that every consecutive pair from N* on changes by less
/// than `epsilon` relatively, with at least two qualifying pairs.
pub fn detect_transition(records: &[SweepRecord], epsilon: f64) -> Result<Option<usize>> {
    check_series(records)?;
    if records.len() < 3 {
        return Ok(None);
    }
    let rel_change: Vec<bool> = records
        .windows(2)
        .map(|w| {
            let denom = w[0].j_ness.abs().max(1e-300);
            ((w[1].j_ness - w[0].j_ness) / denom).abs() < epsilon
        })
        .collect();
    // last index from which all pair flags hold
    let mut start = rel_change.len();
    while start > 0 && rel_change[start - 1] {
        start -= 1;
    }
    if rel_change.len() - start >= 2 {
        Ok(Some(records[start].n_sites))
    } else {
        Ok(None)
    }
}

/// Ballistic at N if the series has saturated by then.
pub fn classify_regime(records: &[SweepRecord], n: usize, epsilon: f64) -> Result<Regime> {
    let transition = detect_transition(records, epsilon)?;
    Ok(match transition {
        Some(t) if n >= t => Regime::Ballistic,
        _ => Regime::Diffusive,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NdcResult {
    /// Location of the maximum after quadratic refinement in ln(gamma).
    pub gamma_max: f64,
    /// Current at the refined maximum (parabola value).
    pub j_max: f64,
    /// Index of the discrete maximum in the scanned series.
    pub argmax_index: usize,
}

/// Locate the driving strength of maximum current in a (gamma, j) scan.
/// Requires an interior maximum; a maximum on the scan boundary means the
/// range was too narrow to establish negative differential conductivity.
pub fn ndc_scan(points: &[(f64, f64)]) -> Result<NdcResult> {
    if points.len() < 5 {
        return Err(Error::Config(format!(
            "gamma scan needs at least 5 points, found {}",
            points.len()
        )));
    }
    for w in points.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Data("gamma scan must be sorted by gamma".into()));
        }
    }
    let span = points.last().unwrap().0 / points.first().unwrap().0;
    if span < 10.0 {
        return Err(Error::Config(format!(
            "gamma scan spans only a factor {span:.2}; at least a decade is required"
        )));
    }
    let argmax = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
        .unwrap()
        .0;
    if argmax == 0 || argmax == points.len() - 1 {
        return Err(Error::Inconclusive(format!(
            "maximum current sits on the scan boundary (gamma = {}); widen the range",
            points[argmax].0
        )));
    }
    // parabola through the three bracketing points in (ln gamma, j)
    let (x0, y0) = (points[argmax - 1].0.ln(), points[argmax - 1].1);
    let (x1, y1) = (points[argmax].0.ln(), points[argmax].1);
    let (x2, y2) = (points[argmax + 1].0.ln(), points[argmax + 1].1);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    let (x_star, j_max) = if curv < 0.0 {
        let x = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
        let x = x.clamp(x0, x2);
        // evaluate the Newton parabola at x
        let j = y0 + d01 * (x - x0) + curv * (x - x0) * (x - x1);
        (x, j)
    } else {
        (x1, y1)
    };
    Ok(NdcResult {
        gamma_max: x_star.exp(),
        j_max,
        argmax_index: argmax,
    })
}
