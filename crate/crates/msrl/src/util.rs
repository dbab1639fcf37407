//! Shared numeric helpers: exact summation and seeded RNG streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Named RNG streams. Every randomized component draws from
/// `ChaCha12Rng` seeded with the user seed and a distinct stream id, so
/// "same seed, same result" holds across platforms and across changes in
/// how much randomness any one component consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitR,
    InitD,
    InitQ,
    Reference,
    Shuffle,
    Permutation,
    DataGen,
    Split,
    Subsample,
    Other(u64),
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::InitR => 0,
            Stream::InitD => 1,
            Stream::InitQ => 2,
            Stream::Reference => 3,
            Stream::Shuffle => 4,
            Stream::Permutation => 5,
            Stream::DataGen => 6,
            Stream::Split => 7,
            Stream::Subsample => 8,
            Stream::Other(k) => 16 + k,
        }
    }
}

/// RNG for a (seed, substream) pair. Substreams sharing a seed are
/// independent ChaCha streams, not reseedings, so they never collide.
pub fn rng_for(seed: u64, stream: Stream) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}

/// RNG for a per-restart (or per-fold, per-cell) substream.
pub fn rng_for_indexed(seed: u64, index: u64, stream: Stream) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // 64 substreams per index leaves room for every named stream.
    rng.set_stream(index * 64 + stream.id());
    rng
}

/// Fresh 64-bit seed derived from a (seed, index, stream) triple.
pub fn derive_seed(seed: u64, index: u64, stream: Stream) -> u64 {
    rng_for_indexed(seed, index, stream).random::<u64>()
}

/// First `cap` indices of a seeded permutation of `0..n` (all of them
/// when `n <= cap`).
pub fn subsample_indices(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    if n > cap {
        let mut rng = rng_for(seed, Stream::Subsample);
        idx.shuffle(&mut rng);
        idx.truncate(cap);
    }
    idx
}

/// One standard normal draw via Box-Muller. Two uniforms are consumed per
/// call; the second variate is discarded to keep the stream layout simple
/// and reproducible.
pub fn normal(rng: &mut ChaCha12Rng) -> f64 {
    // Guard against u1 == 0.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact floating-point sum (Shewchuk's expansion algorithm, as in
/// Python's `math.fsum`). The result is the correctly rounded sum of the
/// inputs and therefore independent of accumulation order; U-statistic
/// values computed with it are exactly invariant under row permutations.
pub fn fsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    partials.iter().sum()
}
