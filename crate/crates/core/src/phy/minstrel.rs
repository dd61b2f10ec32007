//! Minstrel-style rate control: EWMA success tracking per MCS with random
//! probing of non-best rates that could improve on the current best.
//!
//! The engine feeds MPDU counts through [`MinstrelState::record`], which
//! accumulates them over a statistics interval before folding the interval's
//! success ratio into the EWMA. A rate seen for the first time takes its
//! interval ratio directly.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct MinstrelState {
    rates_mbps: Vec<f64>,
    success_prob: Vec<f64>,
    attempts: Vec<u64>,
    best: usize,
    second_best: usize,
    probes: u64,
    window_ok: Vec<u64>,
    window_tried: Vec<u64>,
    window_end_us: Option<u64>,
}

impl MinstrelState {
    /// Rates must be listed in MCS order.
    pub fn new(rates_mbps: Vec<f64>) -> Self {
        assert!(!rates_mbps.is_empty(), "rate set must be non-empty");
        let n = rates_mbps.len();
        MinstrelState {
            rates_mbps,
            success_prob: vec![0.0; n],
            attempts: vec![0; n],
            best: 0,
            second_best: 0,
            probes: 0,
            window_ok: vec![0; n],
            window_tried: vec![0; n],
            window_end_us: None,
        }
    }

    pub fn best(&self) -> u8 {
        self.best as u8
    }

    pub fn second_best(&self) -> u8 {
        self.second_best as u8
    }

    pub fn lowest(&self) -> u8 {
        0
    }

    pub fn probes(&self) -> u64 {
        self.probes
    }

    pub fn success_prob(&self, mcs: u8) -> f64 {
        self.success_prob[usize::from(mcs)]
    }

    pub fn attempts(&self, mcs: u8) -> u64 {
        self.attempts[usize::from(mcs)]
    }

    pub fn expected_throughput(&self, mcs: u8) -> f64 {
        let i = usize::from(mcs);
        self.rates_mbps[i] * self.success_prob[i]
    }

    /// Directly sets a rate's success estimate (used to seed known channels).
    pub fn set_success_prob(&mut self, mcs: u8, p: f64) {
        self.success_prob[usize::from(mcs)] = p.clamp(0.0, 1.0);
        self.rank();
    }

    /// Picks the MCS for the next transmission. With probability
    /// `probe_fraction` a probe goes to a random non-best rate whose nominal
    /// rate could still beat the best rate's expected throughput; when no
    /// such rate exists the best rate is used.
    pub fn select<R: Rng + ?Sized>(&mut self, probe_fraction: f64, rng: &mut R) -> u8 {
        if rng.random::<f64>() < probe_fraction {
            let floor = self.expected_throughput(self.best as u8);
            let candidates: Vec<usize> = (0..self.rates_mbps.len())
                .filter(|&i| i != self.best && self.rates_mbps[i] > floor)
                .collect();
            if !candidates.is_empty() {
                self.probes += 1;
                return candidates[rng.random_range(0..candidates.len())] as u8;
            }
        }
        self.best as u8
    }

    /// Folds one observation (fraction of MPDUs delivered at `mcs`) into the
    /// EWMA with weight `ewma_weight` on the new sample.
    pub fn update(&mut self, mcs: u8, success_ratio: f64, ewma_weight: f64) {
        let i = usize::from(mcs);
        let obs = success_ratio.clamp(0.0, 1.0);
        self.success_prob[i] = ewma_weight * obs + (1.0 - ewma_weight) * self.success_prob[i];
        self.attempts[i] += 1;
        self.rank();
    }

    /// Accumulates `delivered` of `tried` MPDUs sent at `mcs` at time `now_us`.
    /// Once `interval_us` has elapsed since the window opened, every rate
    /// tried in the window is folded into its EWMA and the ranking refreshed.
    pub fn record(
        &mut self,
        mcs: u8,
        delivered: u64,
        tried: u64,
        now_us: u64,
        interval_us: u64,
        ewma_weight: f64,
    ) {
        let i = usize::from(mcs);
        self.window_ok[i] += delivered.min(tried);
        self.window_tried[i] += tried;
        let end = *self.window_end_us.get_or_insert(now_us + interval_us);
        if now_us < end {
            return;
        }
        for r in 0..self.rates_mbps.len() {
            let tried = self.window_tried[r];
            if tried == 0 {
                continue;
            }
            let obs = self.window_ok[r] as f64 / tried as f64;
            self.success_prob[r] = if self.attempts[r] == 0 {
                obs
            } else {
                ewma_weight * obs + (1.0 - ewma_weight) * self.success_prob[r]
            };
            self.attempts[r] += 1;
            self.window_ok[r] = 0;
            self.window_tried[r] = 0;
        }
        self.window_end_us = Some(now_us + interval_us);
        self.rank();
    }

    fn rank(&mut self) {
        let mut best = 0;
        let mut second = 0;
        let mut best_t = f64::NEG_INFINITY;
        let mut second_t = f64::NEG_INFINITY;
        for i in 0..self.rates_mbps.len() {
            let t = self.rates_mbps[i] * self.success_prob[i];
            if t > best_t {
                second = best;
                second_t = best_t;
                best = i;
                best_t = t;
            } else if t > second_t {
                second = i;
                second_t = t;
            }
        }
        self.best = best;
        self.second_best = second;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Subsystem};

    fn rates() -> Vec<f64> {
        crate::phy::mcs::McsTable::he_default()
            .entries
            .iter()
            .map(|e| e.rate_mbps["80"])
            .collect()
    }

    #[test]
    fn fresh_state_starts_at_lowest() {
        let mut m = MinstrelState::new(rates());
        let mut rng = stream(1, Subsystem::RateControl, 0);
        assert_eq!(m.select(0.0, &mut rng), 0);
        assert_eq!(m.best(), m.lowest());
    }

    #[test]
    fn argmax_of_rate_times_probability() {
        let mut m = MinstrelState::new(rates());
        m.set_success_prob(7, 0.9);
        let mut rng = stream(1, Subsystem::RateControl, 0);
        assert_eq!(m.select(0.0, &mut rng), 7);
    }

    #[test]
    fn ewma_converges_after_successes() {
        let mut m = MinstrelState::new(rates());
        for _ in 0..100 {
            m.update(5, 1.0, 0.25);
        }
        assert!(m.success_prob(5) >= 1.0 - 0.75f64.powi(100) - 1e-12);
        assert!(m.success_prob(5) <= 1.0);
    }

    #[test]
    fn record_waits_for_the_interval() {
        let mut m = MinstrelState::new(vec![10.0, 20.0]);
        m.record(1, 64, 64, 0, 100_000, 0.25);
        m.record(1, 0, 64, 50_000, 100_000, 0.25);
        assert_eq!(m.success_prob(1), 0.0);
        assert_eq!(m.best(), 0);
        m.record(1, 64, 64, 100_000, 100_000, 0.25);
        // First fold takes the window ratio as is.
        assert!((m.success_prob(1) - 128.0 / 192.0).abs() < 1e-12);
        assert_eq!(m.best(), 1);
        m.record(1, 0, 64, 200_000, 100_000, 0.25);
        assert!((m.success_prob(1) - 0.75 * 128.0 / 192.0).abs() < 1e-12);
    }

    #[test]
    fn probes_avoid_the_best_rate() {
        let mut m = MinstrelState::new(rates());
        m.set_success_prob(4, 1.0);
        let mut rng = stream(2, Subsystem::RateControl, 0);
        let mut probes = 0;
        for _ in 0..10_000 {
            let s = m.select(0.1, &mut rng);
            if s != 4 {
                assert!(s > 4, "MCS {s} cannot beat MCS 4 at full success");
                probes += 1;
            }
        }
        assert!((800..=1200).contains(&probes), "{probes}");
        assert_eq!(m.probes(), probes);
    }

    #[test]
    fn no_probes_when_nothing_can_beat_the_best() {
        let mut m = MinstrelState::new(rates());
        m.set_success_prob(11, 1.0);
        let mut rng = stream(4, Subsystem::RateControl, 0);
        assert!((0..1000).all(|_| m.select(0.5, &mut rng) == 11));
        assert_eq!(m.probes(), 0);
    }

    #[test]
    fn converges_to_throughput_argmax_on_synthetic_channel() {
        // Three rates with stationary per-MPDU success probabilities: expected
        // throughputs 9.5, 16, 9 -> the middle rate wins. Each observation is
        // the delivered fraction of a 64-MPDU aggregate.
        let truth = [0.95, 0.8, 0.3];
        let mut m = MinstrelState::new(vec![10.0, 20.0, 30.0]);
        let mut rng = stream(3, Subsystem::RateControl, 0);
        for _ in 0..5_000 {
            let r = m.select(0.1, &mut rng);
            let ok = (0..64).filter(|_| rng.random::<f64>() < truth[usize::from(r)]).count();
            m.update(r, ok as f64 / 64.0, 0.25);
        }
        let mut hits = 0;
        for _ in 0..500 {
            let r = m.select(0.1, &mut rng);
            let ok = (0..64).filter(|_| rng.random::<f64>() < truth[usize::from(r)]).count();
            m.update(r, ok as f64 / 64.0, 0.25);
            if m.best() == 1 {
                hits += 1;
            }
        }
        assert!(hits >= 400, "{hits}");
    }
}
