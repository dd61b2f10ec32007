//! Distributed coordination function: slotted binary exponential backoff.

use rand::Rng;
use serde::Serialize;

use super::cca::Medium;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DcfPhase {
    Idle,
    Defer,
    Backoff,
    Tx,
    WaitAck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcfState {
    pub backoff_counter: u32,
    pub contention_window: u32,
    pub cw_min: u32,
    pub cw_max: u32,
    pub phase: DcfPhase,
}

impl DcfState {
    pub fn new<R: Rng + ?Sized>(cw_min: u32, cw_max: u32, rng: &mut R) -> Self {
        let mut s = DcfState {
            backoff_counter: 0,
            contention_window: cw_min,
            cw_min,
            cw_max,
            phase: DcfPhase::Idle,
        };
        s.draw(rng);
        s
    }

    fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.backoff_counter = rng.random_range(0..=self.contention_window);
    }

    /// One slot of the countdown (after DIFS). Returns true when the device
    /// may start transmitting.
    pub fn backoff_step(&mut self, medium: Medium) -> bool {
        match medium {
            Medium::Busy => {
                self.phase = DcfPhase::Defer;
                false
            }
            Medium::Idle => {
                self.phase = DcfPhase::Backoff;
                self.backoff_counter = self.backoff_counter.saturating_sub(1);
                if self.backoff_counter == 0 {
                    self.phase = DcfPhase::Tx;
                    true
                } else {
                    false
                }
            }
        }
    }

    /// Applies `slots` idle slots at once; returns the remaining count.
    pub fn consume_idle_slots(&mut self, slots: u64) -> u32 {
        let n = slots.min(u64::from(self.backoff_counter)) as u32;
        self.backoff_counter -= n;
        self.backoff_counter
    }

    /// Failed exchange: double the window (up to CWmax) and redraw.
    pub fn on_failure<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.contention_window = (2 * (self.contention_window + 1) - 1).min(self.cw_max);
        self.phase = DcfPhase::Idle;
        self.draw(rng);
    }

    /// Successful exchange: reset the window and redraw.
    pub fn on_success<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.contention_window = self.cw_min;
        self.phase = DcfPhase::Idle;
        self.draw(rng);
    }
}
