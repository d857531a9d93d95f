//! Seed derivation. One run seed fans out into independent ChaCha streams so that,
//! for example, changing the number of training epochs never shifts the random
//! explanation pairing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ParameterInit = 1,
    BatchShuffle = 2,
    MismatchSampling = 3,
    RandomPairing = 4,
    ExpertBaselineShuffle = 5,
    Evaluation = 6,
    Synthetic = 7,
}

pub fn stream(seed: u64, tag: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag as u64);
    rng
}
