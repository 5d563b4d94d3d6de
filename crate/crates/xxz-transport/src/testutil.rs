//! Shared helpers for unit tests.

use crate::basis::{PureState, C64};

/// Deterministic pseudo-random normalized state from a xorshift stream.
pub fn random_state(n_sites: usize, seed: u64) -> PureState {
    let mut x = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
    let mut next = move || {
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        (x.wrapping_mul(0x2545F4914F6CDD1D) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let amps: Vec<C64> = (0..1usize << n_sites)
        .map(|_| C64::new(next(), next()))
        .collect();
    let mut s = PureState::from_amplitudes(n_sites, amps).unwrap();
    s.normalize();
    s
}
