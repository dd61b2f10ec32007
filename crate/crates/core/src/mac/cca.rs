//! Clear channel assessment: energy detection plus preamble detection.

use serde::Serialize;

use crate::channel::{db_to_linear, linear_to_db};
use crate::config::MacConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcaConfig {
    pub energy_threshold_dbm: f64,
    pub preamble_threshold_dbm: f64,
    pub preamble_min_sinr_db: f64,
}

impl From<&MacConfig> for CcaConfig {
    fn from(m: &MacConfig) -> Self {
        CcaConfig {
            energy_threshold_dbm: m.cca_energy_dbm,
            preamble_threshold_dbm: m.preamble_detect_dbm,
            preamble_min_sinr_db: m.preamble_min_sinr_db,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Medium {
    Idle,
    Busy,
}

/// One active transmission as seen by a listening device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RxSignal {
    pub power_dbm: f64,
    /// Carries a preamble this device can decode (same technology).
    pub same_technology: bool,
}

pub fn total_power_dbm(signals: &[RxSignal]) -> f64 {
    linear_to_db(signals.iter().map(|s| db_to_linear(s.power_dbm)).sum())
}

/// Energy-detection branch alone.
pub fn energy_busy(signals: &[RxSignal], cfg: &CcaConfig) -> bool {
    !signals.is_empty() && total_power_dbm(signals) >= cfg.energy_threshold_dbm
}

/// Whether signal `idx` has a detectable preamble against all other energy
/// plus receiver noise.
pub fn preamble_detectable(signals: &[RxSignal], idx: usize, noise_dbm: f64, cfg: &CcaConfig) -> bool {
    let s = signals[idx];
    if !s.same_technology || s.power_dbm < cfg.preamble_threshold_dbm {
        return false;
    }
    let others: f64 = signals
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != idx)
        .map(|(_, o)| db_to_linear(o.power_dbm))
        .sum();
    let sinr = s.power_dbm - linear_to_db(others + db_to_linear(noise_dbm));
    sinr >= cfg.preamble_min_sinr_db
}

/// BUSY when aggregate energy crosses the energy threshold, or when the
/// strongest same-technology signal has a decodable preamble.
pub fn cca_verdict(signals: &[RxSignal], noise_dbm: f64, cfg: &CcaConfig) -> Medium {
    if energy_busy(signals, cfg) {
        return Medium::Busy;
    }
    let strongest = signals
        .iter()
        .enumerate()
        .filter(|(_, s)| s.same_technology)
        .max_by(|a, b| a.1.power_dbm.total_cmp(&b.1.power_dbm))
        .map(|(i, _)| i);
    match strongest {
        Some(i) if preamble_detectable(signals, i, noise_dbm, cfg) => Medium::Busy,
        _ => Medium::Idle,
    }
}
