//! FTP model 3: Poisson file arrivals of fixed size per STA and direction.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::config::TrafficConfig;
use crate::phy::Direction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub file_size_bytes: u64,
    pub offered_load_bps: f64,
    pub dl_fraction: f64,
}

impl From<&TrafficConfig> for FlowConfig {
    fn from(t: &TrafficConfig) -> Self {
        FlowConfig {
            file_size_bytes: t.file_size_bytes,
            offered_load_bps: t.offered_load_bps,
            dl_fraction: t.dl_fraction,
        }
    }
}

impl FlowConfig {
    /// Files per second per STA, both directions together.
    pub fn arrival_rate(&self) -> f64 {
        self.offered_load_bps / (self.file_size_bytes as f64 * 8.0)
    }

    pub fn direction_rate(&self, dir: Direction) -> f64 {
        let share = match dir {
            Direction::Downlink => self.dl_fraction,
            Direction::Uplink => 1.0 - self.dl_fraction,
        };
        self.arrival_rate() * share
    }

    pub fn mpdus_per_file(&self, mpdu_bytes: u32) -> u64 {
        self.file_size_bytes.div_ceil(u64::from(mpdu_bytes))
    }

    /// Seconds until the next file in `dir`, or `None` for a silent flow.
    pub fn next_arrival<R: Rng + ?Sized>(&self, dir: Direction, rng: &mut R) -> Option<f64> {
        let rate = self.direction_rate(dir);
        if !(rate > 0.0) {
            return None;
        }
        Some(Exp::new(rate).expect("positive rate").sample(rng))
    }
}
