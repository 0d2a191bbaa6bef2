use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent sub-streams of one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Split = 1,
    Embeddings = 2,
    Weights = 3,
    NullPairs = 4,
    Synthetic = 5,
    PluginWeights = 6,
    ClassifierWeights = 7,
}

/// SplitMix64 finalizer over `seed` and a stream tag.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream as u64))
}

/// Generator for the `epoch`-th draw of `stream`.
pub fn rng_for_epoch(seed: u64, stream: Stream, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, stream as u64), epoch as u64 + 1))
}
