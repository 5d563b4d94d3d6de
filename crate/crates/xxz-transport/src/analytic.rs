//! Closed-form two- and three-site oracles: the exact eigenvectors of the
//! short XXZ chain, the f± coefficient pair that controls how the Ising
//! couplings deform the hopping eigenvectors, and the alpha-resolved curve
//! connecting the long-range limit to the nearest-neighbor one.
//!
//! Convention note: the three-site Hamiltonian here is
//!
//!   H3 = (Jx/2)(s+_1 s-_2 + s+_2 s-_3 + h.c.)
//!      + (Jz1/4)(sz_1 sz_2 + sz_2 sz_3) + (Jz2/4) sz_1 sz_3
//!
//! with ±1 Pauli z factors, i.e. the z couplings carry the same 1/4
//! normalization as the chain Hamiltonian. This is the unique reading under
//! which f± below diagonalizes H3 exactly; with Jx = J, Jz_r = J/(A r^alpha)
//! it coincides with the three-site chain Hamiltonian.

use crate::error::{Error, Result};
use crate::model::weighing_constant;
use nalgebra::DMatrix;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeSiteCouplings {
    pub jx: f64,
    /// Nearest-neighbor ZZ coupling.
    pub jz1: f64,
    /// Next-nearest ZZ coupling; nonzero only with long range.
    pub jz2: f64,
}

impl ThreeSiteCouplings {
    /// Chain-normalized couplings of the N = 3 chain at (j, alpha).
    pub fn from_chain(j: f64, alpha: f64, jx: f64) -> Self {
        let a = weighing_constant(3, alpha).expect("N = 3 is always valid");
        Self {
            jx,
            jz1: j / a,
            jz2: j / a * 2f64.powf(-alpha),
        }
    }
}

/// Both roots of f^2 - f (Jz1 - Jz2)/Jx - 2 = 0:
///
///   f± = ( Jz1 - Jz2 ± sqrt(8 Jx^2 + Jz1^2 - 2 Jz1 Jz2 + Jz2^2) ) / (2 Jx).
pub fn f_pm(c: &ThreeSiteCouplings) -> Result<(f64, f64)> {
    if c.jx == 0.0 {
        return Err(Error::Config(
            "f± divides by Jx; the pure Ising case has no hopping eigenvector deformation".into(),
        ));
    }
    let d = c.jz1 - c.jz2;
    let root = (8.0 * c.jx * c.jx + d * d).sqrt();
    Ok(((d + root) / (2.0 * c.jx), (d - root) / (2.0 * c.jx)))
}

/// Dense two-site Hamiltonian (Jx/2)(s+s- + h.c.) + (Jz/4) sz sz.
pub fn hamiltonian_n2_dense(jx: f64, jz: f64) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(4, 4);
    // codes: 0 dd, 1 ud, 2 du, 3 uu
    h[(1, 2)] = 0.5 * jx;
    h[(2, 1)] = 0.5 * jx;
    h[(0, 0)] = 0.25 * jz;
    h[(3, 3)] = 0.25 * jz;
    h[(1, 1)] = -0.25 * jz;
    h[(2, 2)] = -0.25 * jz;
    h
}

/// Dense three-site Hamiltonian in the crate basis (site = bit, 1 = up).
pub fn hamiltonian_n3_dense(c: &ThreeSiteCouplings) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(8, 8);
    let z = |k: usize, s: usize| if k >> s & 1 == 1 { 1.0 } else { -1.0 };
    for k in 0..8 {
        h[(k, k)] = 0.25 * c.jz1 * (z(k, 0) * z(k, 1) + z(k, 1) * z(k, 2))
            + 0.25 * c.jz2 * z(k, 0) * z(k, 2);
    }
    for bond in 0..2 {
        let si = 1usize << bond;
        for k in 0..8usize {
            if k & si != 0 && k & (si << 1) == 0 {
                let k2 = k ^ si ^ (si << 1);
                h[(k, k2)] += 0.5 * c.jx;
                h[(k2, k)] += 0.5 * c.jx;
            }
        }
    }
    h
}

/// One labeled analytic eigenvector over the 8-dim basis.
#[derive(Debug, Clone)]
pub struct LabeledVector {
    pub label: &'static str,
    /// Unnormalized coefficients, indexed by basis code.
    pub coefficients: Vec<f64>,
}

impl LabeledVector {
    pub fn normalized(&self) -> Vec<f64> {
        let n: f64 = self
            .coefficients
            .iter()
            .map(|c| c * c)
            .sum::<f64>()
            .sqrt();
        self.coefficients.iter().map(|c| c / n).collect()
    }
}

/// The eight three-site eigenvectors: the first four deform with f±, the
/// last four are range-independent.
///
/// Codes: uud = 3, udu = 5, duu = 6 (two up); udd = 1, dud = 2, ddu = 4.
pub fn analytic_eigvecs_n3(c: &ThreeSiteCouplings) -> Result<Vec<LabeledVector>> {
    let (f_plus, f_minus) = f_pm(c)?;
    let mut vecs = Vec::with_capacity(8);
    let mut v = |label, entries: &[(usize, f64)]| {
        let mut coeff = vec![0.0; 8];
        for &(code, value) in entries {
            coeff[code] = value;
        }
        vecs.push(LabeledVector {
            label,
            coefficients: coeff,
        });
    };
    v("psi1", &[(3, 1.0), (5, -f_plus), (6, 1.0)]);
    v("psi2", &[(3, 1.0), (5, -f_minus), (6, 1.0)]);
    v("psi3", &[(1, 1.0), (2, -f_plus), (4, 1.0)]);
    v("psi4", &[(1, 1.0), (2, -f_minus), (4, 1.0)]);
    v("psi5", &[(1, 1.0), (4, -1.0)]);
    v("psi6", &[(3, 1.0), (6, -1.0)]);
    v("psi7", &[(7, 1.0)]);
    v("psi8", &[(0, 1.0)]);
    Ok(vecs)
}

/// One row of the alpha-resolved eigenvector-deformation curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaCurveRow {
    pub alpha: f64,
    pub jz1: f64,
    pub jz2: f64,
    pub f_plus: f64,
    pub f_minus: f64,
}

/// f±(alpha) for the chain-normalized N = 3 couplings at fixed Jx; spans the
/// crossover from the hopping-only eigenvectors (f± -> ±sqrt(2) as the two
/// ZZ couplings merge) to the nearest-neighbor values.
pub fn eigvec_alpha_curve(alpha_grid: &[f64], jx: f64) -> Result<Vec<AlphaCurveRow>> {
    alpha_grid
        .iter()
        .map(|&alpha| {
            let c = ThreeSiteCouplings::from_chain(1.0, alpha, jx);
            let (f_plus, f_minus) = f_pm(&c)?;
            Ok(AlphaCurveRow {
                alpha,
                jz1: c.jz1,
                jz2: c.jz2,
                f_plus,
                f_minus,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn rng_stream(seed: u64) -> impl FnMut() -> f64 {
        let mut x = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
        move || {
            x ^= x >> 12;
            x ^= x << 25;
            x ^= x >> 27;
            (x.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        }
    }

    #[test]
    fn equal_zz_couplings_give_sqrt_two() {
        for (jx, jz) in [(0.5, 0.8), (1.0, 0.0), (2.0, -1.3), (0.25, 5.0)] {
            let (fp, fm) = f_pm(&ThreeSiteCouplings {
                jx,
                jz1: jz,
                jz2: jz,
            })
            .unwrap();
            assert_abs_diff_eq!(fp, SQRT2, epsilon = 1e-12);
            assert_abs_diff_eq!(fm, -SQRT2, epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_form_spot_value() {
        let (fp, fm) = f_pm(&ThreeSiteCouplings {
            jx: 1.0,
            jz1: 1.0,
            jz2: 0.0,
        })
        .unwrap();
        assert_abs_diff_eq!(fp, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fm, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_jx_is_a_domain_error() {
        assert!(f_pm(&ThreeSiteCouplings {
            jx: 0.0,
            jz1: 1.0,
            jz2: 0.5
        })
        .is_err());
    }

    #[test]
    fn all_eight_vectors_diagonalize_the_dense_hamiltonian() {
        let mut next = rng_stream(2024);
        for _ in 0..50 {
            let c = ThreeSiteCouplings {
                jx: 0.2 + 2.0 * (next() + 0.5),
                jz1: 4.0 * next(),
                jz2: 4.0 * next(),
            };
            let h = hamiltonian_n3_dense(&c);
            for vec in analytic_eigvecs_n3(&c).unwrap() {
                let v = nalgebra::DVector::from_column_slice(&vec.normalized());
                let hv = &h * &v;
                let lambda = v.dot(&hv);
                let resid = (&hv - lambda * &v).norm();
                assert!(
                    resid < 1e-10,
                    "{} residual {resid} for {c:?}",
                    vec.label
                );
            }
        }
    }

    #[test]
    fn hopping_limit_recovers_the_xx_eigenvectors() {
        // Jz1 = Jz2 = 0: the deformed vectors become uud -+ sqrt2 udu + duu
        let c = ThreeSiteCouplings {
            jx: 1.0,
            jz1: 0.0,
            jz2: 0.0,
        };
        let vecs = analytic_eigvecs_n3(&c).unwrap();
        assert_abs_diff_eq!(vecs[0].coefficients[5], -SQRT2, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[1].coefficients[5], SQRT2, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[2].coefficients[2], -SQRT2, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[3].coefficients[2], SQRT2, epsilon = 1e-12);
    }

    #[test]
    fn aligned_state_carries_no_current() {
        use crate::basis::{BasisIndex, PureState};
        let psi7 = PureState::basis_state(3, BasisIndex(7));
        for bond in 0..2 {
            assert_abs_diff_eq!(
                crate::observables::spin_current(&psi7, 1.0, bond).unwrap(),
                0.0,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn two_site_eigenvectors_hold_for_any_coupling_ratio() {
        for jz in [-3.0, 0.0, 0.7, 10.0] {
            let h = hamiltonian_n2_dense(1.0, jz);
            let vectors: [(&[f64; 4], &str); 4] = [
                (&[0.0, 0.0, 0.0, 1.0], "uu"),
                (&[1.0, 0.0, 0.0, 0.0], "dd"),
                (&[0.0, 1.0, 1.0, 0.0], "ud+du"),
                (&[0.0, 1.0, -1.0, 0.0], "ud-du"),
            ];
            for (coeff, label) in vectors {
                let mut v = nalgebra::DVector::from_column_slice(coeff);
                v /= v.norm();
                let hv = &h * &v;
                let lambda = v.dot(&hv);
                assert!(
                    (&hv - lambda * &v).norm() < 1e-12,
                    "{label} fails at jz = {jz}"
                );
            }
        }
    }

    #[test]
    fn two_spin_current_reduces_to_the_coherence_antisymmetry() {
        // j = i J (c3* c4 - c4* c3) on c3 |ud> + c4 |du>
        use crate::basis::{PureState, C64};
        let mut next = rng_stream(7);
        for _ in 0..100 {
            let mut amps = vec![C64::default(); 4];
            amps[0] = C64::new(next(), next());
            amps[1] = C64::new(next(), next());
            amps[2] = C64::new(next(), next());
            amps[3] = C64::new(next(), next());
            let mut psi = PureState::from_amplitudes(2, amps).unwrap();
            psi.normalize();
            let c3 = psi.amplitudes()[1];
            let c4 = psi.amplitudes()[2];
            let expected = (C64::new(0.0, 1.0) * (c3.conj() * c4 - c4.conj() * c3)).re;
            let j = crate::observables::spin_current(&psi, 1.0, 0).unwrap();
            assert_abs_diff_eq!(j, expected, epsilon = 1e-13);
        }
    }

    #[test]
    fn alpha_curve_interpolates_between_the_limits() {
        let grid: Vec<f64> = (0..400).map(|i| 0.01 * 1.02f64.powi(i)).collect();
        let rows = eigvec_alpha_curve(&grid, 0.5).unwrap();

        // extreme long range: both couplings merge and f± approach ±sqrt(2)
        let first = rows.first().unwrap();
        assert!((first.f_plus - SQRT2).abs() < 1e-2);
        assert!((first.f_minus + SQRT2).abs() < 1e-2);

        // f± are monotone in alpha since Jz1 - Jz2 is
        for w in rows.windows(2) {
            assert!(w[1].f_plus >= w[0].f_plus - 1e-12);
            assert!(w[1].f_minus >= w[0].f_minus - 1e-12);
            assert!(w[1].jz1 - w[1].jz2 >= w[0].jz1 - w[0].jz2 - 1e-12);
        }

        // deviation from the hopping-only limit shrinks linearly with the
        // coupling difference as alpha -> 0
        for (alpha, bound) in [(1e-2, 1e-2), (1e-3, 1e-3), (1e-4, 1e-4)] {
            let row = &eigvec_alpha_curve(&[alpha], 0.5).unwrap()[0];
            assert!(
                (row.f_plus - SQRT2).abs() < bound,
                "alpha = {alpha}: deviation {}",
                (row.f_plus - SQRT2).abs()
            );
        }
    }

    #[test]
    fn nearest_neighbor_limit_drops_the_second_coupling() {
        let row = &eigvec_alpha_curve(&[1000.0], 0.5).unwrap()[0];
        assert!(row.jz2 / row.jz1 < 1e-30);
        let (fp, fm) = f_pm(&ThreeSiteCouplings {
            jx: 0.5,
            jz1: row.jz1,
            jz2: 0.0,
        })
        .unwrap();
        assert_abs_diff_eq!(row.f_plus, fp, epsilon = 1e-12);
        assert_abs_diff_eq!(row.f_minus, fm, epsilon = 1e-12);
    }

    #[test]
    fn chain_adapter_matches_the_chain_hamiltonian() {
        // with Jx = J the three-site dense forms coincide
        let c = ThreeSiteCouplings::from_chain(1.0, 0.8, 1.0);
        let h_here = hamiltonian_n3_dense(&c);
        let cfg = crate::model::ChainConfig::new(3, 0.8, 2.0);
        let t = crate::model::CouplingTable::new(&cfg).unwrap();
        let h_chain = crate::model::hamiltonian_dense(&t).unwrap();
        for r in 0..8 {
            for col in 0..8 {
                assert_abs_diff_eq!(h_here[(r, col)], h_chain[(r, col)].re, epsilon = 1e-12);
            }
        }
    }
}
