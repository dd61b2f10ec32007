//! MU-MIMO PHY abstraction.

pub mod error_model;
pub mod mcs;
pub mod minstrel;
pub mod sounding;
pub mod zf;

use serde::Serialize;

pub use error_model::{decode_outcome, decode_successes, packet_error_rate};
pub use mcs::{McsEntry, McsTable};
pub use minstrel::MinstrelState;
pub use sounding::SoundingPolicy;
pub use zf::{dl_sinr_db, ul_zf_sinr_db, zf_gains, zf_precoders};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Direction {
    #[serde(rename = "DL")]
    Downlink,
    #[serde(rename = "UL")]
    Uplink,
}

impl Direction {
    pub fn other(self) -> Direction {
        match self {
            Direction::Downlink => Direction::Uplink,
            Direction::Uplink => Direction::Downlink,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::Downlink => 0,
            Direction::Uplink => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::Downlink => "DL",
            Direction::Uplink => "UL",
        }
    }
}

/// Per-recipient part of a PPDU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PpduUser {
    pub sta: usize,
    pub mcs: u8,
    pub n_streams: u32,
    pub mpdus: u32,
    pub payload_bits: u64,
}

/// One over-the-air data transmission.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ppdu {
    pub ap: usize,
    pub direction: Direction,
    pub users: Vec<PpduUser>,
    pub bandwidth_mhz: u32,
    pub duration_us: u64,
    pub preamble_us: u64,
}

impl Ppdu {
    pub fn total_streams(&self) -> u32 {
        self.users.iter().map(|u| u.n_streams).sum()
    }
}
