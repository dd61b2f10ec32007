//! Independent drops run in parallel and aggregated per configuration.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::drop::{run_drop, DropContext, DropResult};
use super::stats::{mean, median, percentile};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::phy::Direction;

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: SimConfig,
    /// Sorted by drop index.
    pub drops: Vec<DropResult>,
}

impl CampaignResult {
    /// Per-AP throughput samples pooled over all drops.
    pub fn samples(&self, dir: Direction) -> Vec<f64> {
        self.drops.iter().flat_map(|d| d.throughputs(dir)).collect()
    }

    pub fn median(&self, dir: Direction) -> f64 {
        median(&self.samples(dir)).unwrap_or(f64::NAN)
    }

    pub fn p5(&self, dir: Direction) -> f64 {
        percentile(&self.samples(dir), 5.0).unwrap_or(f64::NAN)
    }

    pub fn mean(&self, dir: Direction) -> f64 {
        mean(&self.samples(dir))
    }

    /// Per-drop median of per-AP throughput.
    pub fn drop_medians(&self, dir: Direction) -> Vec<f64> {
        self.drops
            .iter()
            .map(|d| median(&d.throughputs(dir)).unwrap_or(f64::NAN))
            .collect()
    }

    /// Median of the per-AP DL+UL sum.
    pub fn median_total(&self) -> f64 {
        let s: Vec<f64> = self
            .drops
            .iter()
            .flat_map(|d| d.aps.iter().map(|a| a.dl_mbps + a.ul_mbps))
            .collect();
        median(&s).unwrap_or(f64::NAN)
    }
}

/// Runs `cfg.engine.drops` drops on `jobs` worker threads. Results do not
/// depend on `jobs`.
pub fn run_campaign(cfg: &SimConfig, jobs: usize) -> Result<CampaignResult> {
    if jobs == 0 {
        return Err(SimError::Argument("--jobs must be at least 1".into()));
    }
    let ctx = DropContext::new(cfg.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| SimError::Argument(e.to_string()))?;
    let drops = pool.install(|| {
        (0..cfg.engine.drops)
            .into_par_iter()
            .map(|i| run_drop(ctx.clone(), i))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(CampaignResult {
        config: cfg.clone(),
        drops,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionStats {
    pub median_mbps: f64,
    pub p5_mbps: f64,
    pub mean_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub label: String,
    pub drops: usize,
    pub seeds: Vec<u64>,
    pub dl: DirectionStats,
    pub ul: DirectionStats,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub version: String,
    pub configs: Vec<ConfigSummary>,
    /// Ratios of each configuration to the first one, keyed
    /// `"<label>/<first label>"`.
    pub ratios: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Summary {
    pub fn new(results: &[CampaignResult]) -> Summary {
        let stats = |r: &CampaignResult, dir| DirectionStats {
            median_mbps: r.median(dir),
            p5_mbps: r.p5(dir),
            mean_mbps: r.mean(dir),
        };
        let configs: Vec<ConfigSummary> = results
            .iter()
            .map(|r| ConfigSummary {
                label: r.config.label.clone(),
                drops: r.drops.len(),
                seeds: r.drops.iter().map(|d| d.seed).collect(),
                dl: stats(r, Direction::Downlink),
                ul: stats(r, Direction::Uplink),
                config: r.config.clone(),
            })
            .collect();
        let mut ratios = BTreeMap::new();
        if let Some(base) = configs.first() {
            for c in &configs[1..] {
                let m = BTreeMap::from([
                    ("median_dl".to_string(), c.dl.median_mbps / base.dl.median_mbps),
                    ("median_ul".to_string(), c.ul.median_mbps / base.ul.median_mbps),
                    ("p5_dl".to_string(), c.dl.p5_mbps / base.dl.p5_mbps),
                    ("p5_ul".to_string(), c.ul.p5_mbps / base.ul.p5_mbps),
                ]);
                ratios.insert(format!("{}/{}", c.label, base.label), m);
            }
        }
        Summary {
            version: env!("CARGO_PKG_VERSION").to_string(),
            configs,
            ratios,
        }
    }
}
