#![allow(dead_code)]

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use relay_ris::channel::{ChannelSet, SystemConfig};
use relay_ris::CMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// i.i.d. CN(0, scale²) entries.
pub fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex::new(re, im) * (scale / 2f64.sqrt())
    })
}

/// Unit-variance Rayleigh channels with the given dimensions.
pub fn random_channels(m: usize, n: usize, l: usize, k: usize, seed: u64) -> ChannelSet {
    let mut r = rng(seed);
    ChannelSet {
        h_tr: gaussian(n, m, 1.0, &mut r),
        h_ti: gaussian(l, m, 1.0, &mut r),
        h_ir: gaussian(n, l, 1.0, &mut r),
        h_t: gaussian(k, m, 0.3, &mut r),
        h_r: gaussian(k, n, 1.0, &mut r),
        h_i: gaussian(k, l, 0.5, &mut r),
    }
}

/// Configuration matching [`random_channels`] with unit noise power.
pub fn unit_config(m: usize, n: usize, l: usize, k: usize, bits: u32, rate: f64) -> SystemConfig {
    SystemConfig {
        bs_antennas: m,
        relay_antennas: n,
        ris_elements: l,
        users: k,
        phase_bits: bits,
        noise_power: 1.0,
        rate_threshold: rate,
        ..SystemConfig::default()
    }
}
