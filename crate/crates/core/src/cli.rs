//! Command-line front end.

use std::path::PathBuf;

use clap::Parser;

use crate::config::{Preset, SimConfig};
use crate::engine::campaign::{run_campaign, CampaignResult, Summary};
use crate::engine::drop::{run_drop_traced, DropContext};
use crate::engine::output::{write_outputs, write_trace};
use crate::error::{Result, SimError};

#[derive(Debug, Clone, Parser)]
#[command(name = "wlansim", version, about = "Enterprise WLAN MU-MIMO system-level simulator")]
pub struct Cli {
    /// TOML configuration file (repeatable). May set `preset = "11ax"|"11be"`.
    #[arg(long = "config", value_name = "FILE")]
    pub configs: Vec<PathBuf>,

    /// Built-in configuration (repeatable): 11ax or 11be. With neither
    /// --config nor --preset both presets run.
    #[arg(long = "preset", value_name = "NAME")]
    pub presets: Vec<String>,

    #[arg(long)]
    pub drops: Option<usize>,

    #[arg(long = "duration-s")]
    pub duration_s: Option<f64>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long = "warmup-s")]
    pub warmup_s: Option<f64>,

    #[arg(long = "out-dir", default_value = "out")]
    pub out_dir: PathBuf,

    /// Also write a JSON-lines event trace of every drop.
    #[arg(long)]
    pub trace: bool,

    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl Cli {
    /// Resolved configurations in command-line order (files first).
    pub fn resolve(&self) -> Result<Vec<SimConfig>> {
        if self.drops == Some(0) {
            return Err(SimError::Argument("--drops must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(SimError::Argument("--jobs must be at least 1".into()));
        }
        let mut cfgs = Vec::new();
        for path in &self.configs {
            cfgs.push(SimConfig::load(path, Preset::Ax)?);
        }
        for name in &self.presets {
            cfgs.push(SimConfig::preset(Preset::parse(name)?));
        }
        if cfgs.is_empty() {
            cfgs = vec![SimConfig::preset(Preset::Ax), SimConfig::preset(Preset::Be)];
        }
        for cfg in &mut cfgs {
            let e = &mut cfg.engine;
            if let Some(v) = self.drops {
                e.drops = v;
            }
            if let Some(v) = self.duration_s {
                e.duration_s = v;
            }
            if let Some(v) = self.seed {
                e.seed = v;
            }
            if let Some(v) = self.warmup_s {
                e.warmup_s = v;
            }
            cfg.validate()?;
        }
        Ok(cfgs)
    }

    pub fn run(&self) -> Result<Summary> {
        let cfgs = self.resolve()?;
        let mut results: Vec<CampaignResult> = Vec::with_capacity(cfgs.len());
        for cfg in &cfgs {
            results.push(run_campaign(cfg, self.jobs)?);
        }
        if self.trace {
            let dir = self.out_dir.join("trace");
            std::fs::create_dir_all(&dir)?;
            for cfg in &cfgs {
                let ctx = DropContext::new(cfg.clone())?;
                for drop in 0..cfg.engine.drops {
                    let (_, records) = run_drop_traced(ctx.clone(), drop)?;
                    let file = std::fs::File::create(dir.join(format!("{}_drop{drop}.jsonl", cfg.label)))?;
                    write_trace(&records, std::io::BufWriter::new(file))?;
                }
            }
        }
        write_outputs(&self.out_dir, &results)
    }
}
