//! File formats: JSON run/sweep configs, the fixed-schema sweep CSV, the
//! polarization-profile companion CSV, run manifests and sweep checkpoints.
//!
//! Floats are written with 17 significant digits, which round-trips f64
//! exactly; the sweep CSV column order is part of the format.

use crate::analysis::{RowStatus, SolverKind, SweepRecord};
use crate::error::{Error, Result};
use crate::jumps::{Propagator, TrajectoryProgress, WindowAccum};
use crate::model::ChainConfig;
use crate::rng::TrajectoryRng;
use serde::{Deserialize, Serialize};
use std::io::{BufWriter, Write};
use std::path::Path;

pub const SCHEMA_VERSION: &str = "1";

pub const SWEEP_CSV_HEADER: &str =
    "N,alpha,gamma,solver,n_traj,j_ness,j_stderr,bottleneck,bottleneck_stderr,transient_cut,t_end,seed,status";

pub const PROFILE_CSV_HEADER: &str = "N,alpha,gamma,site,sz";

/// 17 significant digits: exact decimal round-trip for f64.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Data(format!("cannot parse {what} from '{s}'")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::Data(format!("cannot parse {what} from '{s}'")))
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    s.parse::<u64>()
        .map_err(|_| Error::Data(format!("cannot parse {what} from '{s}'")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PropagatorChoice {
    #[default]
    #[serde(rename = "rk4")]
    Rk4,
    #[serde(rename = "euler")]
    Euler,
}

impl From<PropagatorChoice> for Propagator {
    fn from(p: PropagatorChoice) -> Self {
        match p {
            PropagatorChoice::Rk4 => Propagator::Rk4,
            PropagatorChoice::Euler => Propagator::Euler,
        }
    }
}

fn default_j() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    0.01
}

fn default_n_traj() -> u64 {
    1000
}

fn default_steady_frac() -> f64 {
    0.25
}

fn default_sample_every() -> usize {
    10
}

/// Single-point run configuration (JSON).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub solver: SolverKind,
    #[serde(default = "default_j")]
    pub j: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Defaults to the per-N transient formula when absent.
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_traj")]
    pub n_traj: u64,
    /// Fraction of the run used as the steady averaging window.
    #[serde(default = "default_steady_frac")]
    pub steady_frac: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub propagator: PropagatorChoice,
}

impl RunConfig {
    pub fn resolved_t_end(&self) -> f64 {
        self.t_end
            .unwrap_or_else(|| ChainConfig::default_t_end(self.n))
    }

    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            n_sites: self.n,
            j: self.j,
            alpha: self.alpha,
            gamma: self.gamma,
            dt: self.dt,
            t_end: self.resolved_t_end(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain_config().validate()?;
        if !(self.steady_frac > 0.0 && self.steady_frac < 1.0) {
            return Err(Error::Config(format!(
                "steady_frac = {} must lie in (0, 1)",
                self.steady_frac
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if self.solver == SolverKind::Trajectories && self.n_traj == 0 {
            return Err(Error::Config("n_traj must be positive for trajectories".into()));
        }
        Ok(())
    }
}

/// Solver assignment for sweep points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SolverPolicy {
    /// ness-direct up to 7 sites, trajectories beyond.
    #[default]
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "exact-rk4")]
    ExactRk4,
    #[serde(rename = "ness-direct")]
    NessDirect,
    #[serde(rename = "trajectories")]
    Trajectories,
}

impl SolverPolicy {
    pub fn choose(&self, n: usize) -> SolverKind {
        match self {
            SolverPolicy::Auto => {
                if n <= crate::master::NESS_DIRECT_MAX_SITES {
                    SolverKind::NessDirect
                } else {
                    SolverKind::Trajectories
                }
            }
            SolverPolicy::ExactRk4 => SolverKind::ExactRk4,
            SolverPolicy::NessDirect => SolverKind::NessDirect,
            SolverPolicy::Trajectories => SolverKind::Trajectories,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub alpha: f64,
    pub gamma: f64,
}

/// Sweep configuration: the cartesian product of the three lists plus any
/// explicit extra points.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub gamma: Vec<f64>,
    #[serde(default)]
    pub points: Vec<SweepPoint>,
    #[serde(default)]
    pub solver: SolverPolicy,
    #[serde(default = "default_j")]
    pub j: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_traj")]
    pub n_traj: u64,
    #[serde(default = "default_steady_frac")]
    pub steady_frac: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    #[serde(default)]
    pub propagator: PropagatorChoice,
}

impl SweepConfig {
    pub fn expand_points(&self) -> Result<Vec<SweepPoint>> {
        let mut out = Vec::new();
        for &alpha in &self.alpha {
            for &gamma in &self.gamma {
                for &n in &self.n {
                    out.push(SweepPoint { n, alpha, gamma });
                }
            }
        }
        out.extend(self.points.iter().copied());
        if out.is_empty() {
            return Err(Error::Config(
                "sweep expands to zero points; give n/alpha/gamma lists or explicit points".into(),
            ));
        }
        Ok(out)
    }
}

pub fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
}

/// Reproducibility sidecar written next to every output set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: String,
    pub code_version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, master_seed: u64, config: serde_json::Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            master_seed,
            config,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }
}

fn status_field(status: &RowStatus) -> String {
    match status {
        RowStatus::Ok => "ok".to_string(),
        RowStatus::Failed(msg) => format!("failed:{}", msg.replace([',', '\n'], ";")),
    }
}

fn parse_status(s: &str) -> Result<RowStatus> {
    if s == "ok" {
        Ok(RowStatus::Ok)
    } else if let Some(msg) = s.strip_prefix("failed:") {
        Ok(RowStatus::Failed(msg.to_string()))
    } else {
        Err(Error::Data(format!("unknown status field '{s}'")))
    }
}

pub fn sweep_record_to_csv_row(r: &SweepRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.n_sites,
        format_f64(r.alpha),
        format_f64(r.gamma),
        r.solver.as_str(),
        r.n_traj,
        format_f64(r.j_ness),
        format_f64(r.j_stderr),
        format_f64(r.bottleneck),
        format_f64(r.bottleneck_stderr),
        format_f64(r.transient_cut),
        format_f64(r.t_end),
        r.seed,
        status_field(&r.status),
    )
}

pub fn write_sweep_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", sweep_record_to_csv_row(r))?;
    }
    Ok(())
}

pub fn parse_sweep_csv_row(line: &str, lineno: usize) -> Result<SweepRecord> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 13 {
        return Err(Error::Data(format!(
            "line {lineno}: expected 13 fields, found {}",
            fields.len()
        )));
    }
    Ok(SweepRecord {
        n_sites: parse_usize(fields[0], "N")?,
        alpha: parse_f64(fields[1], "alpha")?,
        gamma: parse_f64(fields[2], "gamma")?,
        solver: SolverKind::parse(fields[3])?,
        n_traj: parse_u64(fields[4], "n_traj")?,
        j_ness: parse_f64(fields[5], "j_ness")?,
        j_stderr: parse_f64(fields[6], "j_stderr")?,
        bottleneck: parse_f64(fields[7], "bottleneck")?,
        bottleneck_stderr: parse_f64(fields[8], "bottleneck_stderr")?,
        transient_cut: parse_f64(fields[9], "transient_cut")?,
        t_end: parse_f64(fields[10], "t_end")?,
        seed: parse_u64(fields[11], "seed")?,
        status: parse_status(fields[12])?,
        profile: None,
    })
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = std::fs::read_to_string(path)?;
    parse_sweep_csv_text(&text)
}

pub fn parse_sweep_csv_text(text: &str) -> Result<Vec<SweepRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SWEEP_CSV_HEADER => {}
        Some(h) => {
            return Err(Error::Data(format!(
                "unexpected CSV header '{h}'; expected '{SWEEP_CSV_HEADER}'"
            )))
        }
        None => return Err(Error::Data("empty CSV".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        out.push(parse_sweep_csv_row(line, i + 2)?);
    }
    Ok(out)
}

pub fn write_profile_csv(path: &Path, records: &[SweepRecord]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{PROFILE_CSV_HEADER}")?;
    for r in records {
        if let Some(profile) = &r.profile {
            for (site, sz) in profile.iter().enumerate() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.n_sites,
                    format_f64(r.alpha),
                    format_f64(r.gamma),
                    site,
                    format_f64(*sz)
                )?;
            }
        }
    }
    Ok(())
}

pub fn parse_profile_csv_text(text: &str) -> Result<Vec<(usize, f64, f64, usize, f64)>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == PROFILE_CSV_HEADER => {}
        Some(h) => {
            return Err(Error::Data(format!(
                "unexpected profile header '{h}'; expected '{PROFILE_CSV_HEADER}'"
            )))
        }
        None => return Err(Error::Data("empty profile CSV".into())),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Data(format!(
                "profile line {}: expected 5 fields, found {}",
                i + 2,
                fields.len()
            )));
        }
        out.push((
            parse_usize(fields[0], "N")?,
            parse_f64(fields[1], "alpha")?,
            parse_f64(fields[2], "gamma")?,
            parse_usize(fields[3], "site")?,
            parse_f64(fields[4], "sz")?,
        ));
    }
    Ok(out)
}

/// Merge a profile companion file back into records read from the sweep CSV.
pub fn attach_profiles(records: &mut [SweepRecord], rows: &[(usize, f64, f64, usize, f64)]) {
    for r in records.iter_mut() {
        let mut profile: Vec<(usize, f64)> = rows
            .iter()
            .filter(|(n, a, g, _, _)| *n == r.n_sites && *a == r.alpha && *g == r.gamma)
            .map(|(_, _, _, site, sz)| (*site, *sz))
            .collect();
        if !profile.is_empty() {
            profile.sort_by_key(|(site, _)| *site);
            r.profile = Some(profile.into_iter().map(|(_, sz)| sz).collect());
        }
    }
}

/// FNV-1a over the canonical config JSON; checkpoints refuse to resume a
/// different sweep.
pub fn config_digest(config: &serde_json::Value) -> String {
    let text = config.to_string();
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}

/// Serializable snapshot of one in-flight trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajSnapshot {
    pub id: u64,
    pub step: u64,
    pub t: f64,
    /// Amplitudes as (re, im) pairs over the 2^N basis.
    pub psi: Vec<(f64, f64)>,
    /// ChaCha word position split into (high, low) 64-bit halves.
    pub rng_word_pos: (u64, u64),
    pub n_jumps: u64,
    pub window_samples: u64,
    pub window_current_sum: f64,
    pub window_bond_sums: Vec<f64>,
    pub window_pol_sums: Vec<f64>,
    pub window_bottleneck_sum: f64,
    pub snapshot_current: f64,
    #[serde(default)]
    pub snapshot_bond_currents: Vec<f64>,
    #[serde(default)]
    pub series: Option<Vec<f64>>,
}

impl TrajSnapshot {
    pub fn capture(p: &TrajectoryProgress, master_seed: u64, dt: f64) -> Self {
        let _ = master_seed;
        let pos = p.rng.word_pos();
        Self {
            id: p.id,
            step: p.step,
            t: p.step as f64 * dt,
            psi: p
                .psi
                .amplitudes()
                .iter()
                .map(|c| (c.re, c.im))
                .collect(),
            rng_word_pos: ((pos >> 64) as u64, pos as u64),
            n_jumps: p.n_jumps,
            window_samples: p.acc.samples,
            window_current_sum: p.acc.current_sum,
            window_bond_sums: p.acc.bond_sums.clone(),
            window_pol_sums: p.acc.pol_sums.clone(),
            window_bottleneck_sum: p.acc.bottleneck_sum,
            snapshot_current: p.acc.snapshot_current,
            snapshot_bond_currents: p.acc.snapshot_bond_currents.clone(),
            series: p.series.clone(),
        }
    }

    pub fn restore(&self, n_sites: usize, master_seed: u64) -> Result<TrajectoryProgress> {
        let dim = 1usize << n_sites;
        if self.psi.len() != dim {
            return Err(Error::Data(format!(
                "checkpointed state has {} amplitudes, expected {dim}",
                self.psi.len()
            )));
        }
        let amps = self
            .psi
            .iter()
            .map(|(re, im)| crate::basis::C64::new(*re, *im))
            .collect();
        let psi = crate::basis::PureState::from_amplitudes(n_sites, amps)?;
        let mut rng = TrajectoryRng::new(master_seed, self.id);
        rng.set_word_pos(((self.rng_word_pos.0 as u128) << 64) | self.rng_word_pos.1 as u128);
        Ok(TrajectoryProgress {
            id: self.id,
            step: self.step,
            psi,
            rng,
            n_jumps: self.n_jumps,
            acc: WindowAccum {
                samples: self.window_samples,
                current_sum: self.window_current_sum,
                bond_sums: self.window_bond_sums.clone(),
                pol_sums: self.window_pol_sums.clone(),
                bottleneck_sum: self.window_bottleneck_sum,
                snapshot_current: self.snapshot_current,
                snapshot_bond_currents: self.snapshot_bond_currents.clone(),
            },
            series: self.series.clone(),
        })
    }
}

/// Results and in-flight state of a partially completed sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepCheckpoint {
    pub schema_version: String,
    pub config_digest: String,
    pub completed: Vec<(usize, SweepRecord)>,
    #[serde(default)]
    pub in_flight: Option<InFlightPoint>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InFlightPoint {
    pub point_index: usize,
    pub trajectories: Vec<TrajSnapshot>,
}

impl SweepCheckpoint {
    pub fn new(digest: String) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            config_digest: digest,
            completed: Vec::new(),
            in_flight: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        // write-then-rename keeps the checkpoint valid under interruption
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
            serde_json::to_writer(&mut w, self)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: SweepCheckpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Data(format!("corrupt checkpoint {}: {e}", path.display())))?;
        if ckpt.schema_version != SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "checkpoint schema {} does not match {}",
                ckpt.schema_version, SCHEMA_VERSION
            )));
        }
        Ok(ckpt)
    }
}
