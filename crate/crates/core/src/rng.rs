//! Seed splitting.
//!
//! Every random draw in a drop comes from a ChaCha stream selected by
//! `(drop seed, subsystem, entity)`. Streams are independent of each other, so
//! the order in which subsystems consume randomness never changes the values
//! another subsystem sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Subsystem {
    StaPlacement = 1,
    LargeScale = 2,
    KFactor = 3,
    Fading = 4,
    Traffic = 5,
    Backoff = 6,
    Decode = 7,
    RateControl = 8,
}

/// Independent stream for one entity of one subsystem.
pub fn stream(seed: u64, subsystem: Subsystem, entity: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((subsystem as u64) << 48) ^ entity);
    rng
}
