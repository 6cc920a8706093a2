//! Seed derivation for independent, replayable random streams.
//!
//! Every random draw in an experiment comes from a ChaCha stream whose seed
//! is a hash of `(master seed, trial, round, purpose)`, so streams never
//! share state and adding a consumer does not shift anyone else's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Environment,
    Noise,
    Sampling,
    TieBreak,
    Exploration,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Environment => 0x656e_7669,
            Stream::Noise => 0x6e6f_6973,
            Stream::Sampling => 0x7361_6d70,
            Stream::TieBreak => 0x7469_6562,
            Stream::Exploration => 0x6578_706c,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes the four coordinates into one 64-bit seed.
pub fn derive_seed(master: u64, trial: u64, round: u64, stream: Stream) -> u64 {
    let mut h = splitmix64(master);
    for v in [trial, round, stream.tag()] {
        h = splitmix64(h ^ v);
    }
    h
}

pub fn stream_rng(master: u64, trial: u64, round: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, trial, round, stream))
}
