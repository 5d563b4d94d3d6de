//! Computational basis for N spin-1/2 sites and matrix-free action of local
//! Pauli and ladder operators on state vectors.
//!
//! Bit convention, fixed crate-wide: bit `b` of a basis code is the state of
//! site `b`, with 1 = up. Site 0 is the driven-up edge of the chain, site
//! N-1 the driven-down edge. All other modules route basis access through
//! here; nothing else may reinterpret bits.

use crate::error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Index into the 2^N computational basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex(pub usize);

impl BasisIndex {
    #[inline]
    pub fn is_up(self, site: usize) -> bool {
        self.0 >> site & 1 == 1
    }

    /// Eigenvalue of sigma^z at `site`: +1 for up, -1 for down.
    #[inline]
    pub fn z(self, site: usize) -> f64 {
        if self.is_up(site) {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn flipped(self, site: usize) -> BasisIndex {
        BasisIndex(self.0 ^ (1 << site))
    }
}

/// Pure state |psi> as a complex amplitude vector over the 2^N basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    n_sites: usize,
    amps: Vec<C64>,
}

impl PureState {
    pub fn zero(n_sites: usize) -> Self {
        Self {
            n_sites,
            amps: vec![C64::default(); 1 << n_sites],
        }
    }

    pub fn basis_state(n_sites: usize, index: BasisIndex) -> Self {
        let mut s = Self::zero(n_sites);
        s.amps[index.0] = C64::new(1.0, 0.0);
        s
    }

    /// |up down down ...>: the default trajectory initial state.
    pub fn up_at_head(n_sites: usize) -> Self {
        Self::basis_state(n_sites, BasisIndex(1))
    }

    pub fn from_amplitudes(n_sites: usize, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != 1 << n_sites {
            return Err(Error::Config(format!(
                "amplitude vector has length {}, expected {}",
                amps.len(),
                1usize << n_sites
            )));
        }
        Ok(Self { n_sites, amps })
    }

    #[inline]
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    #[inline]
    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
        n
    }

    /// <self|other>.
    pub fn inner(&self, other: &PureState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

fn check_site(state: &PureState, site: usize) -> Result<()> {
    if site >= state.n_sites() {
        return Err(Error::Config(format!(
            "site {site} out of range for {} sites",
            state.n_sites()
        )));
    }
    Ok(())
}

/// sigma^z at `site`, out of place.
pub fn apply_sigma_z(state: &PureState, site: usize) -> Result<PureState> {
    check_site(state, site)?;
    let mut out = PureState::zero(state.n_sites());
    kernel::sigma_z_into(state.amplitudes(), site, out.amplitudes_mut());
    Ok(out)
}

/// sigma^+ at `site`: maps down to up, annihilates up.
pub fn apply_sigma_plus(state: &PureState, site: usize) -> Result<PureState> {
    check_site(state, site)?;
    let mut out = PureState::zero(state.n_sites());
    kernel::sigma_plus_into(state.amplitudes(), site, out.amplitudes_mut());
    Ok(out)
}

/// sigma^- at `site`: adjoint of sigma^+.
pub fn apply_sigma_minus(state: &PureState, site: usize) -> Result<PureState> {
    check_site(state, site)?;
    let mut out = PureState::zero(state.n_sites());
    kernel::sigma_minus_into(state.amplitudes(), site, out.amplitudes_mut());
    Ok(out)
}

/// Bond flip-flop (sigma^+_i sigma^-_{i+1} + sigma^-_i sigma^+_{i+1})/2:
/// swaps antiparallel neighbor configurations with weight 1/2.
pub fn hop_apply(state: &PureState, bond: usize) -> Result<PureState> {
    if bond + 1 >= state.n_sites() {
        return Err(Error::Config(format!(
            "bond {bond} out of range for {} sites",
            state.n_sites()
        )));
    }
    let mut out = PureState::zero(state.n_sites());
    kernel::hop_accum(
        state.amplitudes(),
        bond,
        C64::new(0.5, 0.0),
        out.amplitudes_mut(),
    );
    Ok(out)
}

/// Allocation-free slice kernels. Sites are assumed pre-validated; state
/// vectors must have power-of-two length. These are the hot paths of every
/// solver: they iterate in two-level blocks so inner loops stay contiguous.
pub mod kernel {
    use super::C64;

    /// dst[k] = ±src[k] by the z eigenvalue of `site`.
    pub fn sigma_z_into(src: &[C64], site: usize, dst: &mut [C64]) {
        let si = 1usize << site;
        let stride = si << 1;
        let mut base = 0;
        while base < src.len() {
            for lo in 0..si {
                dst[base + lo] = -src[base + lo];
                dst[base + si + lo] = src[base + si + lo];
            }
            base += stride;
        }
    }

    /// dst = sigma^+_site src (moves amplitude from down to up, zeroes the rest).
    pub fn sigma_plus_into(src: &[C64], site: usize, dst: &mut [C64]) {
        let si = 1usize << site;
        let stride = si << 1;
        let zero = C64::default();
        let mut base = 0;
        while base < src.len() {
            for lo in 0..si {
                dst[base + si + lo] = src[base + lo];
                dst[base + lo] = zero;
            }
            base += stride;
        }
    }

    /// dst = sigma^-_site src.
    pub fn sigma_minus_into(src: &[C64], site: usize, dst: &mut [C64]) {
        let si = 1usize << site;
        let stride = si << 1;
        let zero = C64::default();
        let mut base = 0;
        while base < src.len() {
            for lo in 0..si {
                dst[base + lo] = src[base + si + lo];
                dst[base + si + lo] = zero;
            }
            base += stride;
        }
    }

    /// dst += coeff * swap of antiparallel configurations on bond (i, i+1).
    /// The weight-1/2 flip-flop operator is obtained with coeff = 1/2.
    pub fn hop_accum(src: &[C64], bond: usize, coeff: C64, dst: &mut [C64]) {
        let si = 1usize << bond;
        let stride = si << 2;
        let mut base = 0;
        while base < src.len() {
            // offsets base+si.. have site i up / i+1 down; base+2si.. the reverse
            for lo in 0..si {
                let a = base + si + lo;
                let b = base + 2 * si + lo;
                let ta = coeff * src[b];
                let tb = coeff * src[a];
                dst[a] += ta;
                dst[b] += tb;
            }
            base += stride;
        }
    }

    /// Population of the up level at `site`: sum of |amp|^2 over set-bit codes.
    pub fn population_up(src: &[C64], site: usize) -> f64 {
        let si = 1usize << site;
        let stride = si << 1;
        let mut acc = 0.0;
        let mut base = 0;
        while base < src.len() {
            for lo in 0..si {
                acc += src[base + si + lo].norm_sqr();
            }
            base += stride;
        }
        acc
    }

    /// Population of the down level at `site`.
    pub fn population_down(src: &[C64], site: usize) -> f64 {
        let si = 1usize << site;
        let stride = si << 1;
        let mut acc = 0.0;
        let mut base = 0;
        while base < src.len() {
            for lo in 0..si {
                acc += src[base + lo].norm_sqr();
            }
            base += stride;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_state(n_sites: usize, seed: u64) -> PureState {
        // xorshift stream; test-only
        let mut x = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
        let mut next = move || {
            x ^= x >> 12;
            x ^= x << 25;
            x ^= x >> 27;
            (x.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let amps: Vec<C64> = (0..1usize << n_sites).map(|_| c(next(), next())).collect();
        let mut s = PureState::from_amplitudes(n_sites, amps).unwrap();
        s.normalize();
        s
    }

    #[test]
    fn sigma_z_on_single_spin() {
        let up = PureState::basis_state(1, BasisIndex(1));
        let out = apply_sigma_z(&up, 0).unwrap();
        assert_eq!(out.amplitudes()[1], c(1.0, 0.0));

        let down = PureState::basis_state(1, BasisIndex(0));
        let out = apply_sigma_z(&down, 0).unwrap();
        assert_eq!(out.amplitudes()[0], c(-1.0, 0.0));
    }

    #[test]
    fn sigma_z_flips_relative_sign_in_superposition() {
        // (|ud> + |du>)/sqrt2 -> (|ud> - |du>)/sqrt2 under sigma^z at site 0
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut s = PureState::zero(2);
        s.amplitudes_mut()[1] = c(r, 0.0); // |ud>: site 0 up
        s.amplitudes_mut()[2] = c(r, 0.0); // |du>
        let out = apply_sigma_z(&s, 0).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[1].re, r, epsilon = 1e-15);
        assert_abs_diff_eq!(out.amplitudes()[2].re, -r, epsilon = 1e-15);
    }

    #[test]
    fn sigma_plus_raises_and_annihilates() {
        let down = PureState::basis_state(1, BasisIndex(0));
        let out = apply_sigma_plus(&down, 0).unwrap();
        assert_eq!(out.amplitudes()[1], c(1.0, 0.0));

        let up = PureState::basis_state(1, BasisIndex(1));
        let out = apply_sigma_plus(&up, 0).unwrap();
        assert_abs_diff_eq!(out.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sigma_minus_on_three_sites() {
        // sigma^-_1 |uud> = |udd>   (site order left to right; codes 3 -> 1)
        let s = PureState::basis_state(3, BasisIndex(3));
        let out = apply_sigma_minus(&s, 1).unwrap();
        assert_eq!(out.amplitudes()[1], c(1.0, 0.0));
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn hop_swaps_antiparallel_pair() {
        // |ud> -> 1/2 |du>
        let s = PureState::basis_state(2, BasisIndex(1));
        let out = hop_apply(&s, 0).unwrap();
        assert_eq!(out.amplitudes()[2], c(0.5, 0.0));
        assert_eq!(out.amplitudes()[1], c(0.0, 0.0));
    }

    #[test]
    fn hop_annihilates_parallel_pair() {
        let s = PureState::basis_state(2, BasisIndex(3));
        let out = hop_apply(&s, 0).unwrap();
        assert_abs_diff_eq!(out.norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hop_on_bond_zero_of_three_sites() {
        // bond 0 of |udu> (code 5) -> 1/2 |duu> (code 6)
        let s = PureState::basis_state(3, BasisIndex(5));
        let out = hop_apply(&s, 0).unwrap();
        assert_eq!(out.amplitudes()[6], c(0.5, 0.0));
    }

    #[test]
    fn out_of_range_site_is_config_error() {
        let s = PureState::zero(2);
        assert!(apply_sigma_z(&s, 2).is_err());
        assert!(apply_sigma_plus(&s, 5).is_err());
        assert!(hop_apply(&s, 1).is_err());
    }

    #[test]
    fn sigma_z_twice_is_identity() {
        let s = random_state(4, 7);
        let once = apply_sigma_z(&s, 2).unwrap();
        let twice = apply_sigma_z(&once, 2).unwrap();
        for (a, b) in twice.amplitudes().iter().zip(s.amplitudes()) {
            assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn populations_sum_to_norm() {
        let s = random_state(5, 11);
        for site in 0..5 {
            let total = kernel::population_up(s.amplitudes(), site)
                + kernel::population_down(s.amplitudes(), site);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn ladder_completeness(seed in 1u64..1000, site in 0usize..4) {
            // sigma^+ sigma^- + sigma^- sigma^+ = identity on any state
            let s = random_state(4, seed);
            let pm = apply_sigma_plus(&apply_sigma_minus(&s, site).unwrap(), site).unwrap();
            let mp = apply_sigma_minus(&apply_sigma_plus(&s, site).unwrap(), site).unwrap();
            for ((a, b), orig) in pm.amplitudes().iter().zip(mp.amplitudes()).zip(s.amplitudes()) {
                prop_assert!((a + b - orig).norm() < 1e-14);
            }
        }

        #[test]
        fn hop_is_hermitian(seed in 1u64..500, bond in 0usize..3) {
            let phi = random_state(4, seed);
            let psi = random_state(4, seed.wrapping_add(991));
            let h_psi = hop_apply(&psi, bond).unwrap();
            let h_phi = hop_apply(&phi, bond).unwrap();
            let lhs = phi.inner(&h_psi);
            let rhs = psi.inner(&h_phi).conj();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
