//! Channel-sounding airtime.
//!
//! Explicit sounding: NDP announcement, NDP with one training field per
//! sounded stream, then one compressed beamforming report per STA sent at a
//! low control rate. With single-antenna STAs each report carries
//! `2(n_ss - 1)` angles per subcarrier group.
//!
//! Implicit sounding: one trigger, SIFS, then a trigger-based NDP carrying one
//! training slot per STA; its length does not depend on the AP antenna count.

use crate::config::{SoundingConfig, SoundingMode};

#[derive(Debug, Clone)]
pub struct SoundingPolicy {
    pub params: SoundingConfig,
    pub sifs_us: f64,
}

impl SoundingPolicy {
    pub fn new(params: SoundingConfig, sifs_us: u64) -> Self {
        SoundingPolicy {
            params,
            sifs_us: sifs_us as f64,
        }
    }

    pub fn mode(&self) -> SoundingMode {
        self.params.mode
    }

    /// Airtime in microseconds charged before data. `data_subcarriers`
    /// fixes the number of feedback groups for the channel width.
    pub fn overhead_us(&self, n_sta: usize, n_ss: usize, data_subcarriers: u32) -> f64 {
        if n_sta == 0 {
            return 0.0;
        }
        let p = &self.params;
        match p.mode {
            SoundingMode::Explicit => {
                let groups = data_subcarriers.div_ceil(p.subcarrier_grouping) as f64;
                let angles = 2.0 * (n_ss.max(1) as f64 - 1.0);
                let report_us = angles * groups * p.bits_per_angle / p.feedback_rate_mbps;
                let per_sta = self.sifs_us + p.feedback_preamble_us + report_us;
                p.ndpa_us
                    + self.sifs_us
                    + p.ndp_base_us
                    + n_ss as f64 * p.ltf_us
                    + n_sta as f64 * per_sta
            }
            SoundingMode::Implicit => {
                p.trigger_us + self.sifs_us + n_sta as f64 * p.pilot_slot_us
            }
        }
    }
}
