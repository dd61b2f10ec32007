//! HE MCS table, OFDM symbol timing and PPDU airtime.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// OFDM symbol without guard interval (HE, 78.125 kHz subcarrier spacing).
pub const SYMBOL_US: f64 = 12.8;
/// SERVICE field plus tail bits.
pub const SERVICE_TAIL_BITS: u64 = 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub index: u8,
    pub modulation: String,
    pub bits_per_symbol: u32,
    pub code_rate_num: u32,
    pub code_rate_den: u32,
    pub min_sinr_db: f64,
    /// Published single-stream rates at 0.8 us GI, keyed by bandwidth in MHz.
    pub rate_mbps: BTreeMap<String, f64>,
}

impl McsEntry {
    pub fn code_rate(&self) -> f64 {
        f64::from(self.code_rate_num) / f64::from(self.code_rate_den)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsTable {
    /// Data subcarriers keyed by bandwidth in MHz.
    pub data_subcarriers: BTreeMap<String, u32>,
    pub entries: Vec<McsEntry>,
}

impl McsTable {
    /// 802.11ax MCS 0-11 with receiver-sensitivity derived minimum SINRs.
    pub fn he_default() -> McsTable {
        const MODS: [(&str, u32, u32, u32); 12] = [
            ("BPSK", 1, 1, 2),
            ("QPSK", 2, 1, 2),
            ("QPSK", 2, 3, 4),
            ("16-QAM", 4, 1, 2),
            ("16-QAM", 4, 3, 4),
            ("64-QAM", 6, 2, 3),
            ("64-QAM", 6, 3, 4),
            ("64-QAM", 6, 5, 6),
            ("256-QAM", 8, 3, 4),
            ("256-QAM", 8, 5, 6),
            ("1024-QAM", 10, 3, 4),
            ("1024-QAM", 10, 5, 6),
        ];
        // Minimum sensitivity (20 MHz) + 86 dB: noise floor with 10 dB NF
        // and a 5 dB implementation margin.
        const MIN_SINR: [f64; 12] = [4.0, 7.0, 9.0, 12.0, 16.0, 20.0, 21.0, 22.0, 27.0, 29.0, 32.0, 34.0];
        const R20: [f64; 12] = [8.6, 17.2, 25.8, 34.4, 51.6, 68.8, 77.4, 86.0, 103.2, 114.7, 129.0, 143.4];
        const R40: [f64; 12] = [17.2, 34.4, 51.6, 68.8, 103.2, 137.6, 154.9, 172.1, 206.5, 229.4, 258.1, 286.8];
        const R80: [f64; 12] = [36.0, 72.1, 108.1, 144.1, 216.2, 288.2, 324.3, 360.3, 432.4, 480.4, 540.4, 600.5];
        const R160: [f64; 12] = [72.1, 144.1, 216.2, 288.2, 432.4, 576.5, 648.5, 720.6, 864.7, 960.8, 1080.9, 1201.0];

        let entries = MODS
            .iter()
            .enumerate()
            .map(|(i, &(m, bits, num, den))| McsEntry {
                index: i as u8,
                modulation: m.to_string(),
                bits_per_symbol: bits,
                code_rate_num: num,
                code_rate_den: den,
                min_sinr_db: MIN_SINR[i],
                rate_mbps: [("20", R20[i]), ("40", R40[i]), ("80", R80[i]), ("160", R160[i])]
                    .into_iter()
                    .map(|(k, v)| (k.to_string(), v))
                    .collect(),
            })
            .collect();
        McsTable {
            data_subcarriers: [("20", 234), ("40", 468), ("80", 980), ("160", 1960)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            entries,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<McsTable> {
        let t: McsTable = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("MCS table serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(SimError::Config("MCS table is empty".into()));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if usize::from(e.index) != i || e.code_rate_den == 0 || e.bits_per_symbol == 0 {
                return Err(SimError::Config(format!("malformed MCS entry {i}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, mcs: u8) -> &McsEntry {
        &self.entries[usize::from(mcs)]
    }

    pub fn top(&self) -> u8 {
        (self.entries.len() - 1) as u8
    }

    pub fn subcarriers(&self, bandwidth_mhz: u32) -> Result<u32> {
        self.data_subcarriers
            .get(&bandwidth_mhz.to_string())
            .copied()
            .ok_or_else(|| SimError::Config(format!("no subcarrier count for {bandwidth_mhz} MHz")))
    }

    /// Coded data bits carried by one OFDM symbol.
    pub fn bits_per_ofdm_symbol(&self, mcs: u8, bandwidth_mhz: u32, nss: u32) -> Result<f64> {
        let e = self.entry(mcs);
        let nsd = self.subcarriers(bandwidth_mhz)?;
        Ok(f64::from(nsd) * f64::from(e.bits_per_symbol) * e.code_rate() * f64::from(nss))
    }

    /// Tabulated rate, scaled linearly with spatial streams.
    pub fn rate_mbps(&self, mcs: u8, bandwidth_mhz: u32, nss: u32) -> Result<f64> {
        self.entry(mcs)
            .rate_mbps
            .get(&bandwidth_mhz.to_string())
            .map(|r| r * f64::from(nss))
            .ok_or_else(|| SimError::Config(format!("no MCS rate for {bandwidth_mhz} MHz")))
    }
}

pub fn symbol_duration_us(gi_us: f64) -> f64 {
    SYMBOL_US + gi_us
}

/// Airtime in whole microseconds of a (possibly multi-user) PPDU. Users are
/// padded to the slowest one. `air_bits[i]` is the MAC payload plus framing
/// for user `i`, `bits_per_symbol[i]` its per-symbol data bits.
pub fn ppdu_duration_us(air_bits: &[u64], bits_per_symbol: &[f64], gi_us: f64, preamble_us: u64) -> u64 {
    debug_assert_eq!(air_bits.len(), bits_per_symbol.len());
    let symbols = air_bits
        .iter()
        .zip(bits_per_symbol)
        .filter(|(&b, _)| b > 0)
        .map(|(&b, &per_sym)| ((b + SERVICE_TAIL_BITS) as f64 / per_sym).ceil() as u64)
        .max()
        .unwrap_or(0);
    preamble_us + (symbols as f64 * symbol_duration_us(gi_us)).ceil() as u64
}

/// Largest framed bit count that fits in `data_us` of airtime.
pub fn capacity_bits(data_us: u64, bits_per_symbol: f64, gi_us: f64) -> u64 {
    let symbols = (data_us as f64 / symbol_duration_us(gi_us)).floor();
    ((symbols * bits_per_symbol).floor() as u64).saturating_sub(SERVICE_TAIL_BITS)
}
