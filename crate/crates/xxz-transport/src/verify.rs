//! Self-verification suite behind the `verify` subcommand: closed-form
//! eigensystem residuals, steady-state invariants of the exact solver, the
//! current sign convention, and trajectory-versus-exact agreement, all at
//! desk scale.

use crate::analytic::{analytic_eigvecs_n3, f_pm, hamiltonian_n3_dense, ThreeSiteCouplings};
use crate::basis::{PureState, C64};
use crate::jumps::{ensemble_average, EnsembleOptions, TrajectoryOptions};
use crate::master::{ness_direct, ness_residual, LindbladSpec};
use crate::model::{ChainConfig, CouplingTable};
use crate::observables::{bond_currents, polarization_profile, spin_current};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn rng_stream(seed: u64) -> impl FnMut() -> f64 {
    let mut x = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
    move || {
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        (x.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

fn check_f_pm_spots() -> CheckResult {
    let sqrt2 = std::f64::consts::SQRT_2;
    let (fp, fm) = f_pm(&ThreeSiteCouplings {
        jx: 0.5,
        jz1: 1.3,
        jz2: 1.3,
    })
    .expect("jx != 0");
    let d1 = (fp - sqrt2).abs().max((fm + sqrt2).abs());
    let (fp2, fm2) = f_pm(&ThreeSiteCouplings {
        jx: 1.0,
        jz1: 1.0,
        jz2: 0.0,
    })
    .expect("jx != 0");
    let d2 = (fp2 - 2.0).abs().max((fm2 + 1.0).abs());
    CheckResult::new(
        "f± spot values (equal couplings -> ±sqrt2; (1,1,0) -> (2,-1))",
        d1 < 1e-12 && d2 < 1e-12,
        format!("max deviations {d1:.2e}, {d2:.2e}"),
    )
}

fn check_eigvec_residuals() -> CheckResult {
    let mut next = rng_stream(17);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = ThreeSiteCouplings {
            jx: 0.2 + 2.0 * (next() + 0.5),
            jz1: 4.0 * next(),
            jz2: 4.0 * next(),
        };
        let h = hamiltonian_n3_dense(&c);
        for vec in analytic_eigvecs_n3(&c).expect("jx != 0") {
            let v = nalgebra::DVector::from_column_slice(&vec.normalized());
            let hv = &h * &v;
            let lambda = v.dot(&hv);
            worst = worst.max((&hv - lambda * &v).norm());
        }
    }
    CheckResult::new(
        "three-site analytic eigenvectors vs dense diagonalization (50 random couplings)",
        worst < 1e-10,
        format!("worst residual {worst:.2e}"),
    )
}

fn check_current_convention() -> CheckResult {
    // ladder-form current against the dense (J/2)(sx sy - sy sx) operator;
    // a flipped sign or factor in either route fails here
    let zero = C64::default();
    let one = C64::new(1.0, 0.0);
    let sx = nalgebra::DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]);
    let sy = nalgebra::DMatrix::from_row_slice(
        2,
        2,
        &[zero, C64::new(0.0, 1.0), C64::new(0.0, -1.0), zero],
    );
    let mut worst = 0.0f64;
    for n in [2usize, 3] {
        let site_op = |s: usize, op: &nalgebra::DMatrix<C64>| {
            let mut m = nalgebra::DMatrix::identity(1, 1);
            for b in 0..n {
                let f = if b == s {
                    op.clone()
                } else {
                    nalgebra::DMatrix::identity(2, 2)
                };
                m = f.kronecker(&m);
            }
            m
        };
        for bond in 0..n - 1 {
            let op = (site_op(bond, &sx) * site_op(bond + 1, &sy)
                - site_op(bond, &sy) * site_op(bond + 1, &sx))
                * C64::new(0.5, 0.0);
            let mut next = rng_stream(91 + bond as u64);
            for _ in 0..20 {
                let amps: Vec<C64> = (0..1 << n).map(|_| C64::new(next(), next())).collect();
                let mut psi = PureState::from_amplitudes(n, amps).expect("sized");
                psi.normalize();
                let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
                let dense = (v.adjoint() * &op * &v)[(0, 0)].re;
                let fast = spin_current(&psi, 1.0, bond).expect("bond in range");
                worst = worst.max((dense - fast).abs());
            }
        }
    }
    CheckResult::new(
        "current sign convention: ladder form vs dense construction",
        worst < 1e-12,
        format!("worst deviation {worst:.2e}"),
    )
}

fn check_two_site_ising_independence() -> CheckResult {
    let spec = LindbladSpec::boundary_driven(2, 2.0);
    let reference = ness_direct(
        &CouplingTable::new(&ChainConfig::new(2, 0.1, 2.0)).expect("valid"),
        &spec,
    );
    let Ok(reference) = reference else {
        return CheckResult::new("two-site Ising independence", false, "solver failed".into());
    };
    let mut worst = 0.0f64;
    for alpha in [1.0, 1000.0] {
        let t = CouplingTable::new(&ChainConfig::new(2, alpha, 2.0)).expect("valid");
        match ness_direct(&t, &spec) {
            Ok(rho) => worst = worst.max(reference.frobenius_distance(&rho)),
            Err(_) => {
                return CheckResult::new("two-site Ising independence", false, "solver failed".into())
            }
        }
    }
    for factor in [0.0, 10.0] {
        let t = CouplingTable::new(&ChainConfig::new(2, 1.0, 2.0))
            .expect("valid")
            .scaled_zz(factor);
        match ness_direct(&t, &spec) {
            Ok(rho) => worst = worst.max(reference.frobenius_distance(&rho)),
            Err(_) => {
                return CheckResult::new("two-site Ising independence", false, "solver failed".into())
            }
        }
    }
    CheckResult::new(
        "two-site steady state independent of Ising range and strength",
        worst < 1e-10,
        format!("worst state distance {worst:.2e}"),
    )
}

fn check_exact_invariants() -> CheckResult {
    let cfg = ChainConfig::new(5, 2.0, 2.0);
    let table = CouplingTable::new(&cfg).expect("valid");
    let spec = LindbladSpec::boundary_driven(5, 2.0);
    let rho = match ness_direct(&table, &spec) {
        Ok(r) => r,
        Err(e) => {
            return CheckResult::new("exact steady-state invariants", false, e.to_string())
        }
    };
    let resid = ness_residual(&table, &spec, &rho);
    let js = bond_currents(&rho, cfg.j);
    let uni = js
        .iter()
        .map(|j| (j - js[0]).abs())
        .fold(0.0f64, f64::max);
    let pol = polarization_profile(&rho);
    let asym = (0..5)
        .map(|i| (pol[i] + pol[4 - i]).abs())
        .fold(0.0f64, f64::max);
    let passed = resid < 1e-9 && uni < 1e-8 && asym < 1e-8;
    CheckResult::new(
        "five-site steady state: residual, bond uniformity, polarization antisymmetry",
        passed,
        format!("residual {resid:.2e}, uniformity {uni:.2e}, antisymmetry {asym:.2e}"),
    )
}

fn check_trajectories_against_exact(n_traj: u64) -> CheckResult {
    let cfg = ChainConfig::new(5, 2.0, 2.0);
    let table = CouplingTable::new(&cfg).expect("valid");
    let spec = LindbladSpec::boundary_driven(5, 2.0);
    let exact = match ness_direct(&table, &spec) {
        Ok(r) => r,
        Err(e) => return CheckResult::new("trajectories vs exact", false, e.to_string()),
    };
    let j_exact = bond_currents(&exact, cfg.j)[2];

    let topts = TrajectoryOptions::new(0.01, 300.0);
    let stats = match ensemble_average(&table, 2.0, &EnsembleOptions::new(2024, n_traj, topts)) {
        Ok(s) => s,
        Err(e) => return CheckResult::new("trajectories vs exact", false, e.to_string()),
    };
    let dev = (stats.current.mean - j_exact).abs();
    let limit = 3.0 * stats.current.std_error();
    CheckResult::new(
        "trajectory ensemble current within 3 SE of the exact value (N = 5)",
        dev <= limit,
        format!(
            "|{:.6} - {:.6}| = {:.2e} vs 3 SE = {:.2e} ({} trajectories)",
            stats.current.mean,
            j_exact,
            dev,
            limit,
            stats.n_traj
        ),
    )
}

fn check_dt_band(n_traj: u64) -> CheckResult {
    // currents across the trusted dt band agree within combined error bars
    let cfg = ChainConfig::new(3, 2.0, 2.0);
    let table = CouplingTable::new(&cfg).expect("valid");
    let mut results = Vec::new();
    for dt in [0.005, 0.01, 0.02] {
        let topts = TrajectoryOptions::new(dt, 200.0);
        match ensemble_average(&table, 2.0, &EnsembleOptions::new(77, n_traj, topts)) {
            Ok(s) => results.push((dt, s.current.mean, s.current.std_error())),
            Err(e) => return CheckResult::new("dt band agreement", false, e.to_string()),
        }
    }
    let mut passed = true;
    let mut detail = String::new();
    for i in 0..results.len() {
        for k in i + 1..results.len() {
            let (da, ja, sa) = results[i];
            let (db, jb, sb) = results[k];
            let dev = (ja - jb).abs();
            let limit = 3.0 * (sa * sa + sb * sb).sqrt();
            if dev > limit {
                passed = false;
            }
            detail.push_str(&format!(
                "dt {da} vs {db}: |{ja:.5} - {jb:.5}| = {dev:.2e} (3 SE = {limit:.2e}); "
            ));
        }
    }
    CheckResult::new(
        "trajectory currents agree across dt in [0.005, 0.02]",
        passed,
        detail,
    )
}

/// The desk-scale verification suite; `n_traj` sizes the stochastic checks.
pub fn run_verification(n_traj: u64) -> Vec<CheckResult> {
    vec![
        check_f_pm_spots(),
        check_eigvec_residuals(),
        check_current_convention(),
        check_two_site_ising_independence(),
        check_exact_invariants(),
        check_trajectories_against_exact(n_traj),
        check_dt_band((n_traj / 2).max(100)),
    ]
}
