use rayon::prelude::*;

use crate::rng::{self, StreamRng};

const CHUNK: u64 = 1 << 16;

/// Runs `trials` Monte-Carlo trials in fixed-size chunks, each chunk with
/// its own stream under `seed`, and sums the per-trial values in chunk
/// order. The result does not depend on the thread count.
pub(crate) fn chunked_sum<F>(trials: u64, seed: u64, f: F) -> f64
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    let chunks = trials.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, &[c]);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n).map(|_| f(&mut r)).sum::<f64>()
        })
        .collect();
    partial.iter().sum()
}

/// Number of trials for which `event` holds.
pub(crate) fn chunked_count<F>(trials: u64, seed: u64, event: F) -> u64
where
    F: Fn(&mut StreamRng) -> bool + Sync,
{
    chunked_sum(trials, seed, |r| if event(r) { 1.0 } else { 0.0 }) as u64
}

/// Frequency and its binomial standard error.
pub(crate) fn frequency(hits: u64, trials: u64) -> (f64, f64) {
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sums_are_deterministic_across_pools() {
        let f = |r: &mut StreamRng| r.random::<f64>();
        let a = chunked_sum(200_000, 9, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| chunked_sum(200_000, 9, f));
        assert_eq!(a, b);
        assert!((a / 200_000.0 - 0.5).abs() < 0.01);
        assert_eq!(chunked_count(10, 1, |_| true), 10);
    }
}
