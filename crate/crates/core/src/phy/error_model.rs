//! Thresholded log-linear PER waterfall.
//!
//! Per-MPDU error rate for a reference 1500-byte MPDU: certain loss more than
//! 1 dB below the MCS's minimum SINR, 10% at the minimum, and one decade per
//! dB above it. Other payload sizes scale through the per-bit survival rate.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// Payload the waterfall is anchored to.
pub const REFERENCE_BITS: f64 = 12_000.0;

pub fn packet_error_rate(sinr_db: f64, min_sinr_db: f64) -> f64 {
    if sinr_db.is_nan() {
        return 1.0;
    }
    10f64.powf(-(sinr_db - min_sinr_db + 1.0)).min(1.0)
}

pub fn packet_error_rate_for(sinr_db: f64, min_sinr_db: f64, payload_bits: u64) -> f64 {
    let per = packet_error_rate(sinr_db, min_sinr_db);
    if per >= 1.0 || payload_bits as f64 == REFERENCE_BITS {
        return per;
    }
    1.0 - (1.0 - per).powf(payload_bits as f64 / REFERENCE_BITS)
}

pub fn decode_outcome<R: Rng + ?Sized>(
    sinr_db: f64,
    min_sinr_db: f64,
    payload_bits: u64,
    rng: &mut R,
) -> bool {
    rng.random::<f64>() >= packet_error_rate_for(sinr_db, min_sinr_db, payload_bits)
}

/// Number of successfully decoded MPDUs out of `n` equal-size MPDUs.
pub fn decode_successes<R: Rng + ?Sized>(
    sinr_db: f64,
    min_sinr_db: f64,
    payload_bits: u64,
    n: u32,
    rng: &mut R,
) -> u32 {
    if n == 0 {
        return 0;
    }
    let p_ok = 1.0 - packet_error_rate_for(sinr_db, min_sinr_db, payload_bits);
    if p_ok <= 0.0 {
        0
    } else if p_ok >= 1.0 {
        n
    } else {
        Binomial::new(u64::from(n), p_ok)
            .expect("valid probability")
            .sample(rng) as u32
    }
}
