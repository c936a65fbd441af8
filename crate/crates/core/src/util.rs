//! Small numeric helpers shared across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `C(n, k)` as a float. Exact for every value that fits in a `u128`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step.
        match acc.checked_mul((n - i) as u128) {
            Some(v) => acc = v / (i as u128 + 1),
            None => {
                let mut f = acc as f64;
                for j in i..k {
                    f = f * (n - j) as f64 / (j + 1) as f64;
                }
                return f;
            }
        }
    }
    acc as f64
}

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is reproducible regardless of how the inputs were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// A replicate-specific generator: the master seed picks the key, the
/// replicate index picks the ChaCha stream. Streams never overlap, and the
/// draws for replicate `i` do not depend on which thread runs it.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Sample variance with divisor `n - 1`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean = pairwise_sum(xs) / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    pairwise_sum(&dev) / (n - 1) as f64
}
