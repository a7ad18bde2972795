//! Deterministic RNG streams.
//!
//! Splitting rule: everything derives from one master seed; consumer `i`
//! (a sequence index, noise pass, parameter-init pass, ...) gets its own
//! ChaCha stream via `set_stream(i)`, so streams never overlap and any
//! sequence can be regenerated in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream ids reserved for well-known consumers.
pub const STREAM_PARAMS: u64 = 1 << 60;
pub const STREAM_NOISE: u64 = (1 << 60) + 1;
pub const STREAM_SCRAMBLE: u64 = (1 << 60) + 2;
pub const STREAM_TRAIN: u64 = (1 << 60) + 3;

/// RNG for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
