//! One drop: a fixed deployment simulated for the configured duration.
//!
//! Only APs contend for the medium. A won TXOP may start with channel
//! sounding and then runs rounds of downlink and trigger-based uplink MU-MIMO
//! exchanges, each direction getting the same data airtime per round.
//! Interference is tracked per receiver as the time average of co-channel
//! energy over the PPDU, using large-scale gains.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use super::event::{EventKind, EventQueue};
use crate::channel::{db_to_linear, linear_to_db, noise_power_dbm, FadingState, LargeScaleMap, C64};
use crate::channel::k_factor_sample;
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::mac::cca::{preamble_detectable, CcaConfig, RxSignal};
use crate::mac::{DcfState, ExchangeTiming, InFlight, TxQueue};
use crate::phy::error_model::decode_successes;
use crate::phy::mcs::{capacity_bits, ppdu_duration_us, symbol_duration_us};
use crate::phy::{zf_gains, Direction, McsTable, MinstrelState, SoundingPolicy};
use crate::rng::{self, SimRng, Subsystem};
use crate::scenario::{associate, Deployment};
use crate::scheduler::{sus_select, SchedulerState};
use crate::traffic::FlowConfig;

const DIRS: [Direction; 2] = [Direction::Downlink, Direction::Uplink];

/// Campaign-wide inputs shared by all drops of one configuration.
#[derive(Debug, Clone)]
pub struct DropContext {
    pub cfg: SimConfig,
    pub mcs: McsTable,
}

impl DropContext {
    pub fn new(cfg: SimConfig) -> Result<Arc<Self>> {
        cfg.validate()?;
        let mcs = match &cfg.phy.mcs_table {
            Some(path) => McsTable::from_toml_str(&std::fs::read_to_string(path)?)?,
            None => McsTable::he_default(),
        };
        mcs.subcarriers(cfg.phy.channel_bandwidth_mhz)?;
        mcs.rate_mbps(0, cfg.phy.channel_bandwidth_mhz, 1)?;
        Ok(Arc::new(DropContext { cfg, mcs }))
    }

    /// Upper bound on what one AP can deliver per direction: every scheduled
    /// user at the top MCS for the whole run.
    pub fn ap_rate_ceiling_mbps(&self) -> f64 {
        let p = &self.cfg.phy;
        self.mcs
            .rate_mbps(self.mcs.top(), p.channel_bandwidth_mhz, 1)
            .expect("validated bandwidth")
            * p.max_scheduled_stas as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub ap: usize,
    pub channel: usize,
    pub stations: usize,
    pub dl_mbps: f64,
    pub ul_mbps: f64,
    pub txops: u64,
    pub failed_txops: u64,
    pub sounding_us: u64,
}

impl ApResult {
    pub fn mbps(&self, dir: Direction) -> f64 {
        match dir {
            Direction::Downlink => self.dl_mbps,
            Direction::Uplink => self.ul_mbps,
        }
    }
}

/// Bookkeeping checked at the end of every drop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropAudit {
    pub duration_us: u64,
    pub measured_us: u64,
    /// Indexed by direction (DL, UL).
    pub generated_mpdus: [u64; 2],
    pub delivered_mpdus: [u64; 2],
    pub dropped_mpdus: [u64; 2],
    pub queued_mpdus: [u64; 2],
    pub in_flight_mpdus: [u64; 2],
    pub generated_bits: [u64; 2],
    pub delivered_bits: [u64; 2],
    /// Union of emission intervals per channel.
    pub channel_busy_us: Vec<u64>,
    pub ap_rate_ceiling_mbps: f64,
}

impl DropAudit {
    /// All conservation checks; the first violation is reported.
    pub fn check(&self, aps: &[ApResult]) -> Result<()> {
        for d in 0..2 {
            let accounted = self.delivered_mpdus[d]
                + self.dropped_mpdus[d]
                + self.queued_mpdus[d]
                + self.in_flight_mpdus[d];
            if accounted != self.generated_mpdus[d] {
                return Err(SimError::Invariant(format!(
                    "{} MPDUs not conserved: generated {} accounted {accounted}",
                    DIRS[d].label(),
                    self.generated_mpdus[d]
                )));
            }
            if self.delivered_bits[d] > self.generated_bits[d] {
                return Err(SimError::Invariant(format!(
                    "{} delivered {} bits of {} generated",
                    DIRS[d].label(),
                    self.delivered_bits[d],
                    self.generated_bits[d]
                )));
            }
        }
        for (c, &busy) in self.channel_busy_us.iter().enumerate() {
            if busy > self.duration_us {
                return Err(SimError::Invariant(format!(
                    "channel {c} busy {busy} us in a {} us run",
                    self.duration_us
                )));
            }
        }
        for ap in aps {
            for dir in DIRS {
                if ap.mbps(dir) > self.ap_rate_ceiling_mbps {
                    return Err(SimError::Invariant(format!(
                        "AP {} {} throughput {:.1} Mb/s above ceiling {:.1}",
                        ap.ap,
                        dir.label(),
                        ap.mbps(dir),
                        self.ap_rate_ceiling_mbps
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropResult {
    pub drop: usize,
    pub seed: u64,
    pub aps: Vec<ApResult>,
    pub audit: DropAudit,
}

impl DropResult {
    pub fn throughputs(&self, dir: Direction) -> Vec<f64> {
        self.aps.iter().map(|a| a.mbps(dir)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceUser {
    pub sta: usize,
    pub mcs: u8,
    pub mpdus: u32,
    pub delivered: u32,
    pub sinr_db: f64,
}

/// Optional per-drop event log, one JSON object per line.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceRecord {
    TxopStart {
        t_us: u64,
        ap: usize,
        dl_group: Vec<usize>,
        ul_group: Vec<usize>,
        sounding_us: u64,
    },
    Ppdu {
        t_us: u64,
        ap: usize,
        direction: Direction,
        duration_us: u64,
        data_cap_us: u64,
        users: Vec<TraceUser>,
    },
    TxopEnd {
        t_us: u64,
        ap: usize,
        success: bool,
    },
}

struct Reception {
    receivers: Vec<usize>,
    current_mw: Vec<f64>,
    integral_mw_us: Vec<f64>,
    last_us: u64,
}

struct Emission {
    id: u64,
    owner: usize,
    sources: Vec<(usize, f64)>,
    start_us: u64,
    locked_aps: Vec<usize>,
    reception: Option<Reception>,
}

struct UserTx {
    sta: usize,
    mcs: u8,
    batch: InFlight,
    gain: f64,
}

struct PendingPpdu {
    dir: Direction,
    users: Vec<UserTx>,
    k: usize,
    duration_us: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Stage {
    Sounding,
    Begin(Direction),
    UlTrigger,
    UlData,
    Data,
    AckPending,
    Ack,
    Timeout,
}

struct Txop {
    start_us: u64,
    groups: [Vec<usize>; 2],
    rows: Vec<(usize, Vec<C64>)>,
    pending: VecDeque<(Direction, u64)>,
    cap_us: u64,
    /// Airtime already spent per direction before the first round.
    debt_us: [u64; 2],
    sounded: Vec<usize>,
    stage: Stage,
    exchanges: u32,
    ppdu: Option<PendingPpdu>,
    outcome: Vec<Vec<u32>>,
    delivered_any: bool,
}

struct ApState {
    node: usize,
    channel: usize,
    stas: Vec<usize>,
    dcf: DcfState,
    sched: SchedulerState,
    busy: bool,
    locks: usize,
    idle_since: Option<u64>,
    pending_expiry: Option<u64>,
    generation: u64,
    txop: Option<Txop>,
    rng_backoff: SimRng,
    rng_fading: SimRng,
    rng_decode: SimRng,
    rng_rate: SimRng,
    noise_mw: f64,
    delivered_bits: [u64; 2],
    txops: u64,
    failed_txops: u64,
    sounding_us: u64,
}

pub struct DropSim {
    ctx: Arc<DropContext>,
    drop: usize,
    seed: u64,
    now: u64,
    duration_us: u64,
    warmup_us: u64,
    n_aps: usize,
    n_nodes: usize,
    gain: Vec<f64>,
    channel_aps: Vec<Vec<usize>>,
    aps: Vec<ApState>,
    sta_ap: Vec<usize>,
    sta_gain: Vec<f64>,
    fading: Vec<FadingState>,
    queues: [Vec<TxQueue>; 2],
    minstrel: [Vec<MinstrelState>; 2],
    csi_time: Vec<Option<u64>>,
    traffic_rng: Vec<SimRng>,
    flow: FlowConfig,
    events: EventQueue,
    active: Vec<Vec<Emission>>,
    next_emission: u64,
    busy_since: Vec<Option<u64>>,
    busy_us: Vec<u64>,
    cca: CcaConfig,
    timing: ExchangeTiming,
    sounding: SoundingPolicy,
    noise_sta_mw: f64,
    ap_tx_mw: f64,
    sta_tx_mw: f64,
    bps: Vec<f64>,
    min_sinr: Vec<f64>,
    nsd: u32,
    trace: Option<Vec<TraceRecord>>,
}

impl DropSim {
    pub fn new(ctx: Arc<DropContext>, drop: usize, trace: bool) -> Result<Self> {
        let cfg = &ctx.cfg;
        let seed = cfg.engine.seed.wrapping_add(drop as u64);
        let mut dep = Deployment::generate(&cfg.deployment, &cfg.phy, seed)?;
        let ls = LargeScaleMap::generate(&dep, &cfg.channel, cfg.phy.carrier_ghz, seed)?;
        let n_aps = dep.aps.len();
        let n_stas = dep.stas.len();
        let n_nodes = dep.n_nodes();
        dep.association = associate(n_aps, n_stas, |ap, sta| {
            cfg.phy.ap_tx_power_dbm - ls.loss_db(ap, n_aps + sta)
        });

        let mut gain = vec![0.0; n_nodes * n_nodes];
        for tx in 0..n_nodes {
            for rx in 0..n_nodes {
                if tx != rx {
                    gain[tx * n_nodes + rx] = db_to_linear(-ls.loss_db(tx, rx));
                }
            }
        }

        let bw_hz = cfg.phy.bandwidth_hz();
        let psd = cfg.channel.noise_psd_dbm_hz;
        let n_channels = dep.channel_of_ap.iter().max().map_or(1, |m| m + 1);
        let mut channel_aps = vec![Vec::new(); n_channels];
        for (ap, &c) in dep.channel_of_ap.iter().enumerate() {
            channel_aps[c].push(ap);
        }
        let per_ap = dep.stas_per_ap();
        let aps = (0..n_aps)
            .map(|ap| {
                let mut rng_backoff = rng::stream(seed, Subsystem::Backoff, ap as u64);
                ApState {
                    node: ap,
                    channel: dep.channel_of_ap[ap],
                    stas: per_ap[ap].clone(),
                    dcf: DcfState::new(cfg.mac.cw_min, cfg.mac.cw_max, &mut rng_backoff),
                    sched: SchedulerState::new(cfg.scheduler.sus_epsilon, cfg.phy.max_scheduled_stas),
                    busy: false,
                    locks: 0,
                    idle_since: None,
                    pending_expiry: None,
                    generation: 0,
                    txop: None,
                    rng_backoff,
                    rng_fading: rng::stream(seed, Subsystem::Fading, ap as u64),
                    rng_decode: rng::stream(seed, Subsystem::Decode, ap as u64),
                    rng_rate: rng::stream(seed, Subsystem::RateControl, ap as u64),
                    noise_mw: db_to_linear(noise_power_dbm(psd, bw_hz, cfg.phy.ap_noise_figure_db)),
                    delivered_bits: [0, 0],
                    txops: 0,
                    failed_txops: 0,
                    sounding_us: 0,
                }
            })
            .collect();

        let mut sta_gain = Vec::with_capacity(n_stas);
        let mut fading = Vec::with_capacity(n_stas);
        for sta in 0..n_stas {
            let ap = dep.association[sta];
            let node = n_aps + sta;
            sta_gain.push(gain[ap * n_nodes + node]);
            let mut rng_k = rng::stream(seed, Subsystem::KFactor, sta as u64);
            let k = k_factor_sample(ls.link(ap, node).is_los, &cfg.channel, &mut rng_k);
            let a = &dep.aps[ap];
            let s = &dep.stas[sta];
            fading.push(FadingState::new(k, &a.array, &a.position, &s.array, &s.position));
        }

        let bw = cfg.phy.channel_bandwidth_mhz;
        let mcs = &ctx.mcs;
        let rates: Vec<f64> = (0..mcs.len() as u8)
            .map(|m| mcs.rate_mbps(m, bw, 1))
            .collect::<Result<_>>()?;
        let bps = (0..mcs.len() as u8)
            .map(|m| mcs.bits_per_ofdm_symbol(m, bw, 1))
            .collect::<Result<_>>()?;
        let min_sinr = mcs.entries.iter().map(|e| e.min_sinr_db).collect();
        let nsd = mcs.subcarriers(bw)?;

        let traffic_rng = (0..2 * n_stas)
            .map(|e| rng::stream(seed, Subsystem::Traffic, e as u64))
            .collect();

        let mut sim = DropSim {
            drop,
            seed,
            now: 0,
            duration_us: cfg.engine.duration_us(),
            warmup_us: cfg.engine.warmup_us(),
            n_aps,
            n_nodes,
            gain,
            channel_aps,
            aps,
            sta_ap: dep.association.clone(),
            sta_gain,
            fading,
            queues: [
                (0..n_stas).map(|_| TxQueue::new()).collect(),
                (0..n_stas).map(|_| TxQueue::new()).collect(),
            ],
            minstrel: [
                (0..n_stas).map(|_| MinstrelState::new(rates.clone())).collect(),
                (0..n_stas).map(|_| MinstrelState::new(rates.clone())).collect(),
            ],
            csi_time: vec![None; n_stas],
            traffic_rng,
            flow: FlowConfig::from(&cfg.traffic),
            events: EventQueue::new(),
            active: (0..n_channels).map(|_| Vec::new()).collect(),
            next_emission: 0,
            busy_since: vec![None; n_channels],
            busy_us: vec![0; n_channels],
            cca: CcaConfig::from(&cfg.mac),
            timing: ExchangeTiming::from_config(&cfg.mac, &cfg.phy),
            sounding: SoundingPolicy::new(cfg.sounding.clone(), cfg.mac.sifs_us),
            noise_sta_mw: db_to_linear(noise_power_dbm(psd, bw_hz, cfg.phy.sta_noise_figure_db)),
            ap_tx_mw: db_to_linear(cfg.phy.ap_tx_power_dbm),
            sta_tx_mw: db_to_linear(cfg.phy.sta_tx_power_dbm),
            bps,
            min_sinr,
            nsd,
            trace: trace.then(Vec::new),
            ctx: ctx.clone(),
        };
        for sta in 0..n_stas {
            for dir in DIRS {
                sim.schedule_arrival(sta, dir);
            }
        }
        Ok(sim)
    }

    fn cfg(&self) -> &SimConfig {
        &self.ctx.cfg
    }

    fn schedule_arrival(&mut self, sta: usize, dir: Direction) {
        let rng = &mut self.traffic_rng[2 * sta + dir.index()];
        if let Some(dt) = self.flow.next_arrival(dir, rng) {
            let t = self.now + (dt * 1e6).round() as u64;
            self.events.push(t, EventKind::Arrival { sta, dir });
        }
    }

    /// Runs the drop to completion and audits it.
    pub fn run(mut self) -> Result<(DropResult, Option<Vec<TraceRecord>>)> {
        while let Some(t) = self.events.peek_time() {
            if t >= self.duration_us {
                break;
            }
            let (t, ev) = self.events.pop().expect("peeked");
            self.now = t;
            match ev {
                EventKind::Arrival { sta, dir } => self.on_arrival(sta, dir),
                EventKind::BackoffExpiry { ap, generation } => self.on_backoff_expiry(ap, generation)?,
                EventKind::TxopStep { ap } => self.on_txop_step(ap)?,
                EventKind::EmissionEnd { id } => self.on_emission_end(id)?,
            }
        }
        self.finish()
    }

    // ---- traffic -------------------------------------------------------

    fn on_arrival(&mut self, sta: usize, dir: Direction) {
        let cfg = &self.ctx.cfg;
        self.queues[dir.index()][sta].enqueue_file(cfg.traffic.file_size_bytes, cfg.phy.mpdu_payload_bytes);
        self.schedule_arrival(sta, dir);
        let ap = self.sta_ap[sta];
        let a = &self.aps[ap];
        if a.txop.is_none() && !a.busy && a.idle_since.is_none() {
            self.start_countdown(ap);
        }
    }

    fn backlogged(&self, ap: usize) -> bool {
        self.aps[ap]
            .stas
            .iter()
            .any(|&s| !self.queues[0][s].is_empty() || !self.queues[1][s].is_empty())
    }

    // ---- contention ----------------------------------------------------

    fn start_countdown(&mut self, ap: usize) {
        let difs = self.cfg().mac.difs_us();
        let slot = self.cfg().mac.slot_us;
        let now = self.now;
        let a = &mut self.aps[ap];
        a.generation += 1;
        a.idle_since = Some(now);
        let t = now + difs + u64::from(a.dcf.backoff_counter) * slot;
        a.pending_expiry = Some(t);
        let generation = a.generation;
        self.events.push(t, EventKind::BackoffExpiry { ap, generation });
    }

    fn freeze_countdown(&mut self, ap: usize) {
        let difs = self.cfg().mac.difs_us();
        let slot = self.cfg().mac.slot_us;
        let now = self.now;
        let a = &mut self.aps[ap];
        if let Some(since) = a.idle_since.take() {
            if a.pending_expiry == Some(now) {
                // Sensing is not instantaneous: a countdown ending in the same
                // instant still fires and may collide.
                a.idle_since = Some(since);
                return;
            }
            let elapsed = now - since;
            if elapsed > difs {
                a.dcf.consume_idle_slots((elapsed - difs) / slot);
            }
            a.generation += 1;
            a.pending_expiry = None;
        }
    }

    fn on_backoff_expiry(&mut self, ap: usize, generation: u64) -> Result<()> {
        let a = &mut self.aps[ap];
        if a.generation != generation || a.txop.is_some() {
            return Ok(());
        }
        a.idle_since = None;
        a.pending_expiry = None;
        a.dcf.backoff_counter = 0;
        if !self.backlogged(ap) {
            return Ok(());
        }
        self.start_txop(ap)
    }

    /// Received power in mW at `node` from all active emissions on `channel`
    /// except `skip`.
    fn energy_at(&self, channel: usize, node: usize, skip: Option<u64>) -> f64 {
        self.active[channel]
            .iter()
            .filter(|e| Some(e.id) != skip)
            .map(|e| self.emission_power_at(e, node))
            .sum()
    }

    fn emission_power_at(&self, e: &Emission, node: usize) -> f64 {
        e.sources
            .iter()
            .map(|&(src, p)| p * self.gain[src * self.n_nodes + node])
            .sum()
    }

    fn refresh_cca(&mut self, channel: usize) {
        for i in 0..self.channel_aps[channel].len() {
            let ap = self.channel_aps[channel][i];
            if self.aps[ap].txop.is_some() {
                continue;
            }
            let node = self.aps[ap].node;
            let energy_dbm = linear_to_db(self.energy_at(channel, node, None));
            let busy = energy_dbm >= self.cca.energy_threshold_dbm || self.aps[ap].locks > 0;
            if busy == self.aps[ap].busy {
                continue;
            }
            self.aps[ap].busy = busy;
            if busy {
                self.freeze_countdown(ap);
            } else if self.backlogged(ap) {
                self.start_countdown(ap);
            }
        }
    }

    // ---- emissions -----------------------------------------------------

    fn integrate(&mut self, channel: usize) {
        let now = self.now;
        for e in &mut self.active[channel] {
            if let Some(r) = &mut e.reception {
                let dt = (now - r.last_us) as f64;
                for (acc, cur) in r.integral_mw_us.iter_mut().zip(&r.current_mw) {
                    *acc += cur * dt;
                }
                r.last_us = now;
            }
        }
    }

    fn recompute_interference(&mut self, channel: usize) {
        let mut updates = Vec::new();
        for (i, e) in self.active[channel].iter().enumerate() {
            if let Some(r) = &e.reception {
                let cur: Vec<f64> = r
                    .receivers
                    .iter()
                    .map(|&rx| self.energy_at(channel, rx, Some(e.id)))
                    .collect();
                updates.push((i, cur));
            }
        }
        for (i, cur) in updates {
            if let Some(r) = &mut self.active[channel][i].reception {
                r.current_mw = cur;
            }
        }
    }

    fn start_emission(
        &mut self,
        owner: usize,
        sources: Vec<(usize, f64)>,
        duration_us: u64,
        receivers: Option<Vec<usize>>,
    ) -> u64 {
        let channel = self.aps[owner].channel;
        let now = self.now;
        self.integrate(channel);
        let id = self.next_emission;
        self.next_emission += 1;
        let reception = receivers.map(|receivers| Reception {
            current_mw: vec![0.0; receivers.len()],
            integral_mw_us: vec![0.0; receivers.len()],
            receivers,
            last_us: now,
        });
        let mut e = Emission {
            id,
            owner,
            sources,
            start_us: now,
            locked_aps: Vec::new(),
            reception,
        };
        // Preamble detection by idle co-channel APs.
        for &ap in &self.channel_aps[channel] {
            if ap == owner || self.aps[ap].txop.is_some() {
                continue;
            }
            let node = self.aps[ap].node;
            let mut signals: Vec<RxSignal> = self.active[channel]
                .iter()
                .map(|o| RxSignal {
                    power_dbm: linear_to_db(self.emission_power_at(o, node)),
                    same_technology: true,
                })
                .collect();
            signals.push(RxSignal {
                power_dbm: linear_to_db(self.emission_power_at(&e, node)),
                same_technology: true,
            });
            let idx = signals.len() - 1;
            if preamble_detectable(&signals, idx, linear_to_db(self.aps[ap].noise_mw), &self.cca) {
                e.locked_aps.push(ap);
            }
        }
        for &ap in &e.locked_aps {
            self.aps[ap].locks += 1;
        }
        if self.active[channel].is_empty() {
            self.busy_since[channel] = Some(now);
        }
        self.active[channel].push(e);
        self.recompute_interference(channel);
        self.refresh_cca(channel);
        self.events.push(now + duration_us, EventKind::EmissionEnd { id });
        id
    }

    fn on_emission_end(&mut self, id: u64) -> Result<()> {
        let channel = self
            .active
            .iter()
            .position(|list| list.iter().any(|e| e.id == id))
            .ok_or_else(|| SimError::Invariant(format!("unknown emission {id}")))?;
        self.integrate(channel);
        let pos = self.active[channel].iter().position(|e| e.id == id).expect("found");
        let e = self.active[channel].remove(pos);
        for &ap in &e.locked_aps {
            self.aps[ap].locks -= 1;
        }
        if self.active[channel].is_empty() {
            if let Some(s) = self.busy_since[channel].take() {
                self.busy_us[channel] += self.now - s;
            }
        }
        self.recompute_interference(channel);
        self.refresh_cca(channel);
        self.txop_continue(e.owner, Some(e))
    }

    // ---- TXOP ----------------------------------------------------------

    fn channel_row(&mut self, ap: usize, sta: usize) -> Vec<C64> {
        let amp = self.sta_gain[sta].sqrt();
        self.fading[sta]
            .channel_row(&mut self.aps[ap].rng_fading)
            .into_iter()
            .map(|v| v * amp)
            .collect()
    }

    fn start_txop(&mut self, ap: usize) -> Result<()> {
        let now = self.now;
        let k_max = self.cfg().phy.max_scheduled_stas;
        let eps = self.cfg().scheduler.sus_epsilon;
        let stas = self.aps[ap].stas.clone();
        let mut rows: Vec<(usize, Vec<C64>)> = Vec::new();
        let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for dir in DIRS {
            let q = &self.queues[dir.index()];
            let order = self.aps[ap]
                .sched
                .candidate_order(dir, stas.len(), |i| !q[stas[i]].is_empty());
            let Some(&head) = order.first() else { continue };
            self.aps[ap].sched.advance_round_robin(dir, head, stas.len());
            let mut cand_rows = Vec::with_capacity(order.len());
            for &i in &order {
                let sta = stas[i];
                let row = match rows.iter().find(|(s, _)| *s == sta) {
                    Some((_, r)) => r.clone(),
                    None => {
                        let r = self.channel_row(ap, sta);
                        rows.push((sta, r.clone()));
                        r
                    }
                };
                cand_rows.push(row);
            }
            groups[dir.index()] = sus_select(&cand_rows, eps, k_max)
                .into_iter()
                .map(|i| stas[order[i]])
                .collect();
        }

        let max_age = self.cfg().mac.csi_max_age_us;
        let stale: Vec<usize> = groups[0]
            .iter()
            .copied()
            .filter(|&s| self.csi_time[s].is_none_or(|t| now - t > max_age))
            .collect();
        let n_ant = self.cfg().phy.ap_antennas();
        let sounding_us = self.sounding.overhead_us(stale.len(), n_ant, self.nsd).ceil() as u64;

        let a = &mut self.aps[ap];
        a.generation += 1;
        a.idle_since = None;
        a.pending_expiry = None;
        a.txops += 1;
        a.sounding_us += sounding_us;
        if let Some(tr) = &mut self.trace {
            tr.push(TraceRecord::TxopStart {
                t_us: now,
                ap,
                dl_group: groups[0].clone(),
                ul_group: groups[1].clone(),
                sounding_us,
            });
        }
        a.txop = Some(Txop {
            start_us: now,
            groups,
            rows,
            pending: VecDeque::new(),
            cap_us: 0,
            debt_us: [sounding_us, 0],
            sounded: stale,
            stage: Stage::Sounding,
            exchanges: 0,
            ppdu: None,
            outcome: Vec::new(),
            delivered_any: false,
        });
        if sounding_us > 0 {
            let src = vec![(self.aps[ap].node, self.ap_tx_mw)];
            let rx = vec![self.aps[ap].node];
            self.start_emission(ap, src, sounding_us, Some(rx));
            Ok(())
        } else {
            self.plan_next(ap, true)
        }
    }

    /// Decides the next exchange; `first` means no SIFS precedes it.
    fn plan_next(&mut self, ap: usize, first: bool) -> Result<()> {
        let now = self.now;
        let sifs = self.cfg().mac.sifs_us;
        let max_txop = self.cfg().mac.max_txop_us;
        let gap = if first { 0 } else { sifs };
        let min_cap = symbol_duration_us(self.cfg().phy.guard_interval_us).ceil() as u64;
        let has_data = |sim: &Self, dir: Direction, stas: &[usize]| {
            stas.iter().any(|&s| !sim.queues[dir.index()][s].is_empty())
        };
        let mut txop = self.aps[ap].txop.take().expect("in TXOP");
        let mut next = None;
        while let Some((dir, cap)) = txop.pending.pop_front() {
            if has_data(self, dir, &txop.groups[dir.index()]) {
                next = Some(dir);
                txop.cap_us = cap;
                break;
            }
        }
        if next.is_none() {
            for dir in DIRS {
                let q = &self.queues[dir.index()];
                txop.groups[dir.index()].retain(|&s| !q[s].is_empty());
            }
            let dirs: Vec<Direction> = DIRS
                .into_iter()
                .filter(|d| !txop.groups[d.index()].is_empty())
                .collect();
            let end = txop.start_us + max_txop;
            let remaining = end.saturating_sub(now + gap);
            let debt = std::mem::take(&mut txop.debt_us);
            txop.pending = self.timing.round_data_caps(remaining, &dirs, debt, min_cap).into();
            if let Some((dir, cap)) = txop.pending.pop_front() {
                next = Some(dir);
                txop.cap_us = cap;
            }
        }
        match next {
            Some(dir) => {
                txop.stage = Stage::Begin(dir);
                self.aps[ap].txop = Some(txop);
                if first {
                    self.on_txop_step(ap)
                } else {
                    self.events.push(now + sifs, EventKind::TxopStep { ap });
                    Ok(())
                }
            }
            None => {
                let ok = txop.exchanges == 0 || txop.delivered_any;
                self.aps[ap].txop = Some(txop);
                self.end_txop(ap, ok)
            }
        }
    }

    fn end_txop(&mut self, ap: usize, success: bool) -> Result<()> {
        let now = self.now;
        let a = &mut self.aps[ap];
        a.txop = None;
        if success {
            a.dcf.on_success(&mut a.rng_backoff);
        } else {
            a.failed_txops += 1;
            a.dcf.on_failure(&mut a.rng_backoff);
        }
        if let Some(tr) = &mut self.trace {
            tr.push(TraceRecord::TxopEnd { t_us: now, ap, success });
        }
        let channel = self.aps[ap].channel;
        let node = self.aps[ap].node;
        let energy_dbm = linear_to_db(self.energy_at(channel, node, None));
        let busy = energy_dbm >= self.cca.energy_threshold_dbm || self.aps[ap].locks > 0;
        self.aps[ap].busy = busy;
        if !busy && self.backlogged(ap) {
            self.start_countdown(ap);
        }
        Ok(())
    }

    fn on_txop_step(&mut self, ap: usize) -> Result<()> {
        let stage = match &self.aps[ap].txop {
            Some(t) => t.stage,
            None => return Ok(()),
        };
        let control = self.timing.control_us;
        match stage {
            Stage::Begin(Direction::Downlink) => self.start_ppdu(ap, Direction::Downlink),
            Stage::Begin(Direction::Uplink) => {
                self.set_stage(ap, Stage::UlTrigger);
                let src = vec![(self.aps[ap].node, self.ap_tx_mw)];
                self.start_emission(ap, src, control, None);
                Ok(())
            }
            Stage::UlData => self.start_ppdu(ap, Direction::Uplink),
            Stage::AckPending => {
                self.set_stage(ap, Stage::Ack);
                let txop = self.aps[ap].txop.as_ref().expect("in TXOP");
                let ppdu = txop.ppdu.as_ref().expect("PPDU awaiting ACK");
                let src = match ppdu.dir {
                    Direction::Downlink => ppdu
                        .users
                        .iter()
                        .zip(&txop.outcome)
                        .filter(|(_, ok)| ok.iter().sum::<u32>() > 0)
                        .map(|(u, _)| (self.n_aps + u.sta, self.sta_tx_mw))
                        .collect(),
                    Direction::Uplink => vec![(self.aps[ap].node, self.ap_tx_mw)],
                };
                self.start_emission(ap, src, control, None);
                Ok(())
            }
            Stage::Timeout => self.finish_exchange(ap),
            other => Err(SimError::Invariant(format!("unexpected TXOP step in {other:?}"))),
        }
    }

    fn set_stage(&mut self, ap: usize, stage: Stage) {
        self.aps[ap].txop.as_mut().expect("in TXOP").stage = stage;
    }

    fn txop_continue(&mut self, ap: usize, ended: Option<Emission>) -> Result<()> {
        let Some(stage) = self.aps[ap].txop.as_ref().map(|t| t.stage) else {
            return Ok(());
        };
        let sifs = self.cfg().mac.sifs_us;
        let now = self.now;
        match stage {
            Stage::Sounding => {
                if self.sounding_received(ap, ended.expect("sounding emission")) {
                    self.plan_next(ap, false)
                } else {
                    self.end_txop(ap, false)
                }
            }
            Stage::UlTrigger => {
                self.set_stage(ap, Stage::UlData);
                self.events.push(now + sifs, EventKind::TxopStep { ap });
                Ok(())
            }
            Stage::Data => {
                let e = ended.expect("data emission");
                self.decode(ap, e)?;
                let any = self.aps[ap].txop.as_ref().expect("in TXOP").outcome.iter().flatten().any(|&n| n > 0);
                if any {
                    self.set_stage(ap, Stage::AckPending);
                    self.events.push(now + sifs, EventKind::TxopStep { ap });
                } else {
                    // No block ACK comes back; the originator waits out the
                    // ACK timeout.
                    self.set_stage(ap, Stage::Timeout);
                    self.events.push(now + sifs + self.timing.control_us, EventKind::TxopStep { ap });
                }
                Ok(())
            }
            Stage::Ack => self.finish_exchange(ap),
            other => Err(SimError::Invariant(format!("emission ended in {other:?}"))),
        }
    }

    /// Whether the sounding exchange survived: the weakest sounded STA must
    /// reach the lowest MCS threshold at the AP against the interference
    /// seen during the exchange. On success the STAs' CSI is refreshed.
    fn sounding_received(&mut self, ap: usize, e: Emission) -> bool {
        let r = e.reception.expect("sounding has a receiver");
        let dur = (self.now - e.start_us).max(1) as f64;
        let interference = r.integral_mw_us[0] / dur;
        let sounded = std::mem::take(&mut self.aps[ap].txop.as_mut().expect("in TXOP").sounded);
        let weakest = sounded
            .iter()
            .map(|&s| self.sta_gain[s])
            .fold(f64::INFINITY, f64::min);
        let sinr_db = linear_to_db(self.sta_tx_mw * weakest / (self.aps[ap].noise_mw + interference));
        if sinr_db < self.min_sinr[0] {
            return false;
        }
        for s in sounded {
            self.csi_time[s] = Some(e.start_us);
        }
        true
    }

    fn start_ppdu(&mut self, ap: usize, dir: Direction) -> Result<()> {
        let phy = &self.ctx.cfg.phy;
        let gi = phy.guard_interval_us;
        let preamble = phy.preamble_us;
        let overhead = phy.mpdu_overhead_bytes;
        let probe = self.ctx.cfg.minstrel.probe_fraction;
        let mut txop = self.aps[ap].txop.take().expect("in TXOP");
        let cap = txop.cap_us;
        let q = &self.queues[dir.index()];
        let mut users: Vec<usize> = txop.groups[dir.index()]
            .iter()
            .copied()
            .filter(|&s| !q[s].is_empty())
            .collect();

        let mut list = Vec::new();
        for &sta in &users {
            let mcs = self.minstrel[dir.index()][sta].select(probe, &mut self.aps[ap].rng_rate);
            let bits = capacity_bits(cap, self.bps[usize::from(mcs)], gi);
            let batch = self.queues[dir.index()][sta].take(bits, overhead);
            if !batch.is_empty() {
                list.push(UserTx {
                    sta,
                    mcs,
                    batch,
                    gain: 0.0,
                });
            }
        }
        users = list.iter().map(|u| u.sta).collect();
        let gains = loop {
            if users.is_empty() {
                break Vec::new();
            }
            let rows: Vec<C64> = users
                .iter()
                .flat_map(|s| txop.rows.iter().find(|(r, _)| r == s).expect("row drawn").1.clone())
                .collect();
            let h = DMatrix::from_row_slice(users.len(), rows.len() / users.len(), &rows);
            match zf_gains(&h) {
                Ok(g) => break g,
                Err(SimError::DegenerateSelection { .. }) => {
                    // Return the newest user's batch untouched and retry.
                    let u = list.pop().expect("non-empty");
                    self.queues[dir.index()][u.sta].restore(u.batch);
                    users.pop();
                }
                Err(e) => return Err(e),
            }
        };
        for (u, g) in list.iter_mut().zip(&gains) {
            u.gain = *g;
        }
        // Users that could not fit a single MPDU, or broke the rank, sit out
        // the rest of the TXOP; the data cap only shrinks.
        txop.groups[dir.index()].retain(|s| users.contains(s));
        if list.is_empty() {
            self.aps[ap].txop = Some(txop);
            return self.plan_next(ap, true);
        }

        let air: Vec<u64> = list.iter().map(|u| TxQueue::air_bits(&u.batch, overhead)).collect();
        let per_sym: Vec<f64> = list.iter().map(|u| self.bps[usize::from(u.mcs)]).collect();
        let duration = ppdu_duration_us(&air, &per_sym, gi, preamble);
        let (sources, receivers) = match dir {
            Direction::Downlink => (
                vec![(self.aps[ap].node, self.ap_tx_mw)],
                list.iter().map(|u| self.n_aps + u.sta).collect(),
            ),
            Direction::Uplink => (
                list.iter().map(|u| (self.n_aps + u.sta, self.sta_tx_mw)).collect(),
                vec![self.aps[ap].node],
            ),
        };
        txop.stage = Stage::Data;
        txop.ppdu = Some(PendingPpdu {
            dir,
            k: list.len(),
            users: list,
            duration_us: duration,
        });
        self.aps[ap].txop = Some(txop);
        self.start_emission(ap, sources, duration, Some(receivers));
        Ok(())
    }

    fn decode(&mut self, ap: usize, e: Emission) -> Result<()> {
        let r = e.reception.expect("data emission has receivers");
        let dur = (self.now - e.start_us).max(1) as f64;
        let interference: Vec<f64> = r.integral_mw_us.iter().map(|v| v / dur).collect();
        let ewma = self.ctx.cfg.minstrel.ewma_weight;
        let interval = self.ctx.cfg.minstrel.stats_interval_us;
        let mut txop = self.aps[ap].txop.take().expect("in TXOP");
        let ppdu = txop.ppdu.as_ref().expect("PPDU in flight");
        let mut outcome = Vec::with_capacity(ppdu.users.len());
        let mut trace_users = Vec::new();
        for (i, u) in ppdu.users.iter().enumerate() {
            let sinr = match ppdu.dir {
                Direction::Downlink => {
                    self.ap_tx_mw / ppdu.k as f64 * u.gain / (self.noise_sta_mw + interference[i])
                }
                Direction::Uplink => self.sta_tx_mw * u.gain / (self.aps[ap].noise_mw + interference[0]),
            };
            let sinr_db = linear_to_db(sinr);
            let min = self.min_sinr[usize::from(u.mcs)];
            let ok: Vec<u32> = u
                .batch
                .parts
                .iter()
                .map(|p| {
                    decode_successes(sinr_db, min, u64::from(p.bytes) * 8, p.count, &mut self.aps[ap].rng_decode)
                })
                .collect();
            let delivered: u32 = ok.iter().sum();
            self.minstrel[ppdu.dir.index()][u.sta].record(
                u.mcs,
                u64::from(delivered),
                u64::from(u.batch.mpdus()),
                self.now,
                interval,
                ewma,
            );
            if self.trace.is_some() {
                trace_users.push(TraceUser {
                    sta: u.sta,
                    mcs: u.mcs,
                    mpdus: u.batch.mpdus(),
                    delivered,
                    sinr_db,
                });
            }
            outcome.push(ok);
        }
        if let Some(tr) = &mut self.trace {
            tr.push(TraceRecord::Ppdu {
                t_us: e.start_us,
                ap,
                direction: ppdu.dir,
                duration_us: ppdu.duration_us,
                data_cap_us: txop.cap_us,
                users: trace_users,
            });
        }
        txop.outcome = outcome;
        self.aps[ap].txop = Some(txop);
        Ok(())
    }

    /// Applies block-ACK results to the queues and moves on.
    fn finish_exchange(&mut self, ap: usize) -> Result<()> {
        let retry = self.ctx.cfg.mac.retry_limit;
        let count = self.now >= self.warmup_us;
        let mut txop = self.aps[ap].txop.take().expect("in TXOP");
        let ppdu = txop.ppdu.take().expect("PPDU resolved");
        let outcome = std::mem::take(&mut txop.outcome);
        let mut delivered = 0;
        for (u, ok) in ppdu.users.into_iter().zip(&outcome) {
            let rep = self.queues[ppdu.dir.index()][u.sta].arq_on_ack(u.batch, ok, retry);
            delivered += rep.delivered_mpdus;
            if count {
                self.aps[ap].delivered_bits[ppdu.dir.index()] += rep.delivered_bits;
            }
        }
        txop.exchanges += 1;
        txop.delivered_any |= delivered > 0;
        let abort = txop.exchanges == 1 && delivered == 0;
        self.aps[ap].txop = Some(txop);
        if abort {
            self.end_txop(ap, false)
        } else {
            self.plan_next(ap, false)
        }
    }

    // ---- wrap-up -------------------------------------------------------

    fn finish(mut self) -> Result<(DropResult, Option<Vec<TraceRecord>>)> {
        for c in 0..self.busy_since.len() {
            if let Some(s) = self.busy_since[c].take() {
                self.busy_us[c] += self.duration_us.saturating_sub(s);
            }
        }
        let measured_us = self.duration_us - self.warmup_us;
        let mut audit = DropAudit {
            duration_us: self.duration_us,
            measured_us,
            generated_mpdus: [0; 2],
            delivered_mpdus: [0; 2],
            dropped_mpdus: [0; 2],
            queued_mpdus: [0; 2],
            in_flight_mpdus: [0; 2],
            generated_bits: [0; 2],
            delivered_bits: [0; 2],
            channel_busy_us: self.busy_us.clone(),
            ap_rate_ceiling_mbps: self.ctx.ap_rate_ceiling_mbps(),
        };
        for d in 0..2 {
            for q in &self.queues[d] {
                if !q.is_conserved() {
                    return Err(SimError::Invariant("per-link MPDU accounting broken".into()));
                }
                audit.generated_mpdus[d] += q.generated_mpdus;
                audit.delivered_mpdus[d] += q.delivered_mpdus;
                audit.dropped_mpdus[d] += q.dropped_mpdus;
                audit.queued_mpdus[d] += q.queued_mpdus();
                audit.in_flight_mpdus[d] += q.in_flight_mpdus();
                audit.generated_bits[d] += q.generated_bits;
                audit.delivered_bits[d] += q.delivered_bits;
            }
        }
        let aps: Vec<ApResult> = self
            .aps
            .iter()
            .enumerate()
            .map(|(i, a)| ApResult {
                ap: i,
                channel: a.channel,
                stations: a.stas.len(),
                dl_mbps: a.delivered_bits[0] as f64 / measured_us as f64,
                ul_mbps: a.delivered_bits[1] as f64 / measured_us as f64,
                txops: a.txops,
                failed_txops: a.failed_txops,
                sounding_us: a.sounding_us,
            })
            .collect();
        audit.check(&aps)?;
        let result = DropResult {
            drop: self.drop,
            seed: self.seed,
            aps,
            audit,
        };
        Ok((result, self.trace.take()))
    }
}

/// Simulates one drop of the campaign.
pub fn run_drop(ctx: Arc<DropContext>, drop: usize) -> Result<DropResult> {
    DropSim::new(ctx, drop, false)?
        .run()
        .map(|(r, _)| r)
        .map_err(|e| SimError::Drop {
            drop,
            source: Box::new(e),
        })
}

/// Like [`run_drop`], also returning the event trace.
pub fn run_drop_traced(ctx: Arc<DropContext>, drop: usize) -> Result<(DropResult, Vec<TraceRecord>)> {
    DropSim::new(ctx, drop, true)?
        .run()
        .map(|(r, t)| (r, t.unwrap_or_default()))
        .map_err(|e| SimError::Drop {
            drop,
            source: Box::new(e),
        })
}
