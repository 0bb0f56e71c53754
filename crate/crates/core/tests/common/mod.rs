#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use targetrate::model::{ChannelSet, Problem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` channels with gains log-uniform on `gain_range`, targets uniform on
/// `[0, max_target]`, and a budget between 5% and 150% of the caps sum.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, gain_range: (f64, f64), max_target: f64) -> Problem {
    let (lo, hi) = (gain_range.0.ln(), gain_range.1.ln());
    let gains: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi).exp()).collect();
    let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..max_target)).collect();
    let channels = ChannelSet::new(gains, targets).unwrap();
    let p_tot = (rng.gen_range(0.05..1.5) * channels.caps_sum()).max(1e-3);
    Problem::new(channels, p_tot).unwrap()
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
