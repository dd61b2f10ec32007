//! Simulation configuration.
//!
//! A [`SimConfig`] is a fully resolved parameter set. Two presets reproduce the
//! enterprise 802.11ax and 802.11be deployments; a TOML file may pick a preset
//! and override any subset of keys. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub label: String,
    pub deployment: DeploymentConfig,
    pub phy: PhyConfig,
    pub mac: MacConfig,
    pub channel: ChannelConfig,
    pub scheduler: SchedulerConfig,
    pub minstrel: MinstrelConfig,
    pub sounding: SoundingConfig,
    pub traffic: TrafficConfig,
    pub engine: EngineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentConfig {
    pub floor_width_m: f64,
    pub floor_depth_m: f64,
    /// APs are mounted at this height.
    pub ceiling_height_m: f64,
    pub sta_height_m: f64,
    pub ap_grid_x: usize,
    pub ap_grid_y: usize,
    pub ap_spacing_m: f64,
    pub n_stas: usize,
    pub sta_min_separation_m: f64,
    pub channel_reuse: usize,
    /// Rejection-sampling attempts allowed per STA.
    pub sta_placement_attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyConfig {
    pub carrier_ghz: f64,
    pub channel_bandwidth_mhz: u32,
    pub guard_interval_us: f64,
    pub ap_tx_power_dbm: f64,
    pub sta_tx_power_dbm: f64,
    pub ap_array_rows: usize,
    pub ap_array_cols: usize,
    pub element_spacing_wavelengths: f64,
    pub ap_noise_figure_db: f64,
    pub sta_noise_figure_db: f64,
    pub preamble_us: u64,
    pub max_scheduled_stas: usize,
    pub mpdu_payload_bytes: u32,
    /// MAC header, FCS and A-MPDU delimiter bytes per MPDU.
    pub mpdu_overhead_bytes: u32,
    /// Optional path to an alternate MCS table (TOML).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcs_table: Option<String>,
}

impl PhyConfig {
    pub fn ap_antennas(&self) -> usize {
        self.ap_array_rows * self.ap_array_cols
    }

    pub fn bandwidth_hz(&self) -> f64 {
        f64::from(self.channel_bandwidth_mhz) * 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacConfig {
    pub cca_energy_dbm: f64,
    pub preamble_detect_dbm: f64,
    pub preamble_min_sinr_db: f64,
    pub slot_us: u64,
    pub sifs_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u8,
    pub max_txop_us: u64,
    /// Duration of trigger and block-ACK control exchanges.
    pub control_frame_us: u64,
    /// Channel state older than this is re-sounded at TXOP start.
    pub csi_max_age_us: u64,
}

impl MacConfig {
    pub fn difs_us(&self) -> u64 {
        self.sifs_us + 2 * self.slot_us
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub noise_psd_dbm_hz: f64,
    pub shadowing_los_db: f64,
    pub shadowing_nlos_db: f64,
    pub k_factor_mean_db: f64,
    pub k_factor_std_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulerConfig {
    /// Minimum fraction of a candidate's channel norm that must survive
    /// projection onto the orthogonal complement of the selected users.
    pub sus_epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinstrelConfig {
    pub probe_fraction: f64,
    pub ewma_weight: f64,
    pub stats_interval_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoundingMode {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundingConfig {
    pub mode: SoundingMode,
    pub ndpa_us: f64,
    /// NDP duration excluding the per-stream training fields.
    pub ndp_base_us: f64,
    pub ltf_us: f64,
    pub feedback_preamble_us: f64,
    pub feedback_rate_mbps: f64,
    pub subcarrier_grouping: u32,
    pub bits_per_angle: f64,
    pub trigger_us: f64,
    pub pilot_slot_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub file_size_bytes: u64,
    pub offered_load_bps: f64,
    pub dl_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub drops: usize,
    pub duration_s: f64,
    pub seed: u64,
    pub warmup_s: f64,
}

impl EngineConfig {
    pub fn duration_us(&self) -> u64 {
        (self.duration_s * 1e6).round() as u64
    }

    pub fn warmup_us(&self) -> u64 {
        (self.warmup_s * 1e6).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Ax,
    Be,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Preset> {
        match name.trim_start_matches('.').to_ascii_lowercase().as_str() {
            "11ax" | "ax" | "802.11ax" => Ok(Preset::Ax),
            "11be" | "be" | "802.11be" => Ok(Preset::Be),
            other => Err(SimError::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Preset::Ax => "11ax",
            Preset::Be => "11be",
        }
    }
}

impl SimConfig {
    pub fn preset(preset: Preset) -> SimConfig {
        let be = preset == Preset::Be;
        SimConfig {
            label: preset.label().to_string(),
            deployment: DeploymentConfig {
                floor_width_m: 40.0,
                floor_depth_m: 40.0,
                ceiling_height_m: 3.0,
                sta_height_m: 1.0,
                ap_grid_x: 4,
                ap_grid_y: 4,
                ap_spacing_m: 10.0,
                n_stas: 512,
                sta_min_separation_m: 0.1,
                channel_reuse: 4,
                sta_placement_attempts: 10_000,
            },
            phy: PhyConfig {
                carrier_ghz: if be { 6.2 } else { 5.18 },
                channel_bandwidth_mhz: if be { 160 } else { 80 },
                guard_interval_us: 0.8,
                ap_tx_power_dbm: 24.0,
                sta_tx_power_dbm: 15.0,
                ap_array_rows: 4,
                ap_array_cols: if be { 4 } else { 2 },
                element_spacing_wavelengths: 0.5,
                ap_noise_figure_db: 7.0,
                sta_noise_figure_db: 9.0,
                preamble_us: 44,
                max_scheduled_stas: if be { 16 } else { 8 },
                mpdu_payload_bytes: 1500,
                mpdu_overhead_bytes: 38,
                mcs_table: None,
            },
            mac: MacConfig {
                cca_energy_dbm: -62.0,
                preamble_detect_dbm: -82.0,
                preamble_min_sinr_db: -0.8,
                slot_us: 9,
                sifs_us: 16,
                cw_min: 15,
                cw_max: 1023,
                retry_limit: 7,
                max_txop_us: 4000,
                control_frame_us: 32,
                csi_max_age_us: 20_000,
            },
            channel: ChannelConfig {
                noise_psd_dbm_hz: -174.0,
                shadowing_los_db: 3.0,
                shadowing_nlos_db: 8.0,
                k_factor_mean_db: 9.0,
                k_factor_std_db: 3.5,
            },
            scheduler: SchedulerConfig { sus_epsilon: 0.3 },
            minstrel: MinstrelConfig {
                probe_fraction: 0.1,
                ewma_weight: 0.25,
                stats_interval_us: 100_000,
            },
            sounding: SoundingConfig {
                mode: if be {
                    SoundingMode::Implicit
                } else {
                    SoundingMode::Explicit
                },
                ndpa_us: 32.0,
                ndp_base_us: 36.0,
                ltf_us: 8.0,
                feedback_preamble_us: 20.0,
                feedback_rate_mbps: 100.0,
                subcarrier_grouping: 16,
                bits_per_angle: 8.0,
                trigger_us: 32.0,
                pilot_slot_us: 48.0,
            },
            traffic: TrafficConfig {
                file_size_bytes: 500_000,
                offered_load_bps: 75e6,
                dl_fraction: 0.5,
            },
            engine: EngineConfig {
                drops: 100,
                duration_s: 10.0,
                seed: 1,
                warmup_s: 0.5,
            },
        }
    }

    /// Parses a TOML document. An optional top-level `preset` key selects the
    /// base configuration (`fallback` otherwise); all other keys override it.
    pub fn from_toml_str(text: &str, fallback: Preset) -> Result<SimConfig> {
        let mut overrides: toml::Table =
            toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        let preset = match overrides.remove("preset") {
            Some(toml::Value::String(name)) => Preset::parse(&name)?,
            Some(other) => {
                return Err(SimError::Config(format!(
                    "'preset' must be a string, got {other}"
                )))
            }
            None => fallback,
        };
        let base = toml::Table::try_from(SimConfig::preset(preset))
            .map_err(|e| SimError::Parse(e.to_string()))?;
        let merged = merge_tables(base, overrides)?;
        let cfg: SimConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, fallback: Preset) -> Result<SimConfig> {
        let text = std::fs::read_to_string(path)?;
        SimConfig::from_toml_str(&text, fallback)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.deployment;
        let p = &self.phy;
        let m = &self.mac;
        let bad = |msg: String| Err(SimError::Config(msg));

        if !(d.floor_width_m > 0.0 && d.floor_depth_m > 0.0 && d.ceiling_height_m > 0.0) {
            return bad("floor dimensions must be positive".into());
        }
        if !(d.sta_height_m > 0.0 && d.sta_height_m <= d.ceiling_height_m) {
            return bad("STA height must lie in (0, ceiling height]".into());
        }
        if d.ap_grid_x == 0 || d.ap_grid_y == 0 || d.ap_spacing_m <= 0.0 {
            return bad("AP grid must be non-empty with positive spacing".into());
        }
        if d.n_stas == 0 {
            return bad("at least one STA is required".into());
        }
        if !(0.5..=100.0).contains(&p.carrier_ghz) {
            return bad(format!("carrier {} GHz outside [0.5, 100]", p.carrier_ghz));
        }
        if !matches!(p.channel_bandwidth_mhz, 20 | 40 | 80 | 160) {
            return bad(format!(
                "unsupported channel bandwidth {} MHz",
                p.channel_bandwidth_mhz
            ));
        }
        if p.ap_antennas() == 0 {
            return bad("AP array needs at least one element".into());
        }
        if p.max_scheduled_stas == 0 {
            return bad("max scheduled STAs must be at least 1".into());
        }
        if p.max_scheduled_stas > p.ap_antennas() {
            return bad(format!(
                "max scheduled STAs ({}) exceeds AP antennas ({}): zero forcing infeasible",
                p.max_scheduled_stas,
                p.ap_antennas()
            ));
        }
        if p.mpdu_payload_bytes == 0 {
            return bad("MPDU payload must be positive".into());
        }
        if m.preamble_detect_dbm >= m.cca_energy_dbm {
            return bad("preamble detection threshold must be below the energy threshold".into());
        }
        if m.cw_min == 0 || m.cw_min > m.cw_max {
            return bad("contention window bounds must satisfy 0 < CWmin <= CWmax".into());
        }
        if m.slot_us == 0 || m.max_txop_us == 0 {
            return bad("slot and TXOP durations must be positive".into());
        }
        if !(self.scheduler.sus_epsilon > 0.0 && self.scheduler.sus_epsilon <= 1.0) {
            return bad("SUS threshold must lie in (0, 1]".into());
        }
        let mc = &self.minstrel;
        if !(0.0..=1.0).contains(&mc.probe_fraction) || !(mc.ewma_weight > 0.0 && mc.ewma_weight <= 1.0)
        {
            return bad("Minstrel probe fraction and EWMA weight must lie in [0, 1]".into());
        }
        let s = &self.sounding;
        if s.feedback_rate_mbps <= 0.0 || s.subcarrier_grouping == 0 {
            return bad("sounding feedback rate and grouping must be positive".into());
        }
        let t = &self.traffic;
        if t.file_size_bytes == 0 || t.offered_load_bps < 0.0 || !(0.0..=1.0).contains(&t.dl_fraction)
        {
            return bad("traffic parameters out of range".into());
        }
        let e = &self.engine;
        if e.drops == 0 {
            return bad("at least one drop is required".into());
        }
        if !(e.duration_s > 0.0) || e.warmup_s < 0.0 || e.warmup_s >= e.duration_s {
            return bad("need duration > warm-up >= 0".into());
        }
        Ok(())
    }
}

fn merge_tables(mut base: toml::Table, overrides: toml::Table) -> Result<toml::Table> {
    for (key, value) in overrides {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => {
                let merged = merge_tables(std::mem::take(b), o)?;
                *b = merged;
            }
            (_, value) => {
                // Unknown keys are inserted and then rejected by deserialization.
                base.insert(key, value);
            }
        }
    }
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn be_preset_matches_deployment_table() {
        let c = SimConfig::preset(Preset::Be);
        assert_eq!(c.phy.channel_bandwidth_mhz, 160);
        assert_eq!(c.phy.carrier_ghz, 6.2);
        assert_eq!(c.phy.ap_antennas(), 16);
        assert_eq!((c.phy.ap_array_rows, c.phy.ap_array_cols), (4, 4));
        assert_eq!(c.phy.max_scheduled_stas, 16);
        assert_eq!(c.sounding.mode, SoundingMode::Implicit);
        c.validate().unwrap();
    }

    #[test]
    fn ax_preset_matches_deployment_table() {
        let c = SimConfig::preset(Preset::Ax);
        assert_eq!(c.phy.channel_bandwidth_mhz, 80);
        assert_eq!(c.phy.carrier_ghz, 5.18);
        assert_eq!(c.phy.ap_antennas(), 8);
        assert_eq!((c.phy.ap_array_rows, c.phy.ap_array_cols), (4, 2));
        assert_eq!(c.phy.max_scheduled_stas, 8);
        assert_eq!(c.sounding.mode, SoundingMode::Explicit);
        assert_eq!(c.deployment.n_stas, 512);
        assert_eq!(c.mac.max_txop_us, 4000);
        assert_eq!(c.phy.ap_tx_power_dbm, 24.0);
        assert_eq!(c.phy.sta_tx_power_dbm, 15.0);
        assert_eq!((c.phy.ap_noise_figure_db, c.phy.sta_noise_figure_db), (7.0, 9.0));
        c.validate().unwrap();
    }

    #[test]
    fn overrides_merge_onto_preset() {
        let c = SimConfig::from_toml_str(
            "preset = \"11be\"\n[engine]\ndrops = 3\n[scheduler]\nsus_epsilon = 0.2\n",
            Preset::Ax,
        )
        .unwrap();
        assert_eq!(c.label, "11be");
        assert_eq!(c.engine.drops, 3);
        assert_eq!(c.engine.duration_s, 10.0);
        assert_eq!(c.scheduler.sus_epsilon, 0.2);
    }

    #[test]
    fn too_many_scheduled_stas_rejected() {
        let err = SimConfig::from_toml_str("[phy]\nmax_scheduled_stas = 32\n", Preset::Be)
            .unwrap_err();
        assert!(err.to_string().contains("zero forcing"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(SimConfig::from_toml_str("[phy]\nwarp_drive = true\n", Preset::Ax).is_err());
        assert!(SimConfig::from_toml_str("bogus = 1\n", Preset::Ax).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = SimConfig::preset(Preset::Be);
        let back = SimConfig::from_toml_str(&c.to_toml_string(), Preset::Ax).unwrap();
        assert_eq!(c, back);
    }
}
