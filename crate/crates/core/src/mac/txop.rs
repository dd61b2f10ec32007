//! TXOP airtime budgeting.
//!
//! A downlink exchange is `MU PPDU, SIFS, block ACK`. An uplink exchange is
//! `trigger, SIFS, TB PPDU, SIFS, multi-STA block ACK`. Exchanges inside a
//! TXOP are separated by SIFS. Within one round every backlogged direction
//! gets one exchange and the same data airtime.

use crate::config::{MacConfig, PhyConfig};
use crate::phy::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeTiming {
    pub sifs_us: u64,
    pub control_us: u64,
    pub preamble_us: u64,
}

impl ExchangeTiming {
    pub fn from_config(mac: &MacConfig, phy: &PhyConfig) -> Self {
        ExchangeTiming {
            sifs_us: mac.sifs_us,
            control_us: mac.control_frame_us,
            preamble_us: phy.preamble_us,
        }
    }

    /// Fixed airtime of an exchange, excluding the PPDU's data symbols.
    pub fn fixed_us(&self, dir: Direction) -> u64 {
        match dir {
            Direction::Downlink => self.preamble_us + self.sifs_us + self.control_us,
            Direction::Uplink => {
                self.control_us + self.sifs_us + self.preamble_us + self.sifs_us + self.control_us
            }
        }
    }

    /// Equal data airtime for each exchange of a round that must fit in
    /// `remaining_us`, or `None` if nothing fits.
    pub fn round_data_cap(&self, remaining_us: u64, dirs: &[Direction]) -> Option<u64> {
        if dirs.is_empty() {
            return None;
        }
        let fixed: u64 = dirs.iter().map(|&d| self.fixed_us(d)).sum::<u64>()
            + (dirs.len() as u64 - 1) * self.sifs_us;
        let free = remaining_us.checked_sub(fixed)?;
        let cap = free / dirs.len() as u64;
        (cap > 0).then_some(cap)
    }

    /// Data airtime per direction for one round so that every direction
    /// occupies the same airtime, where `debt_us[d]` was already spent for
    /// direction `d` before the round. Directions left with less than
    /// `min_cap_us` sit the round out. Returns `(direction, cap)` in input
    /// order.
    pub fn round_data_caps(
        &self,
        remaining_us: u64,
        dirs: &[Direction],
        debt_us: [u64; 2],
        min_cap_us: u64,
    ) -> Vec<(Direction, u64)> {
        let mut active: Vec<Direction> = dirs.to_vec();
        while !active.is_empty() {
            let n = active.len() as i64;
            let total = remaining_us as i64 + active.iter().map(|d| debt_us[d.index()] as i64).sum::<i64>()
                - (n - 1) * self.sifs_us as i64;
            let share = total.div_euclid(n);
            let caps: Vec<i64> = active
                .iter()
                .map(|&d| share - self.fixed_us(d) as i64 - debt_us[d.index()] as i64)
                .collect();
            if caps.iter().all(|&c| c >= min_cap_us as i64) {
                return active.into_iter().zip(caps).map(|(d, c)| (d, c as u64)).collect();
            }
            // Drop the direction that is worst off and re-split.
            let worst = (0..active.len()).min_by_key(|&i| caps[i]).expect("non-empty");
            active.remove(worst);
        }
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Direction::*;

    const T: ExchangeTiming = ExchangeTiming {
        sifs_us: 16,
        control_us: 32,
        preamble_us: 44,
    };

    #[test]
    fn fixed_costs() {
        assert_eq!(T.fixed_us(Downlink), 92);
        assert_eq!(T.fixed_us(Uplink), 140);
    }

    #[test]
    fn round_fits_budget() {
        let cap = T.round_data_cap(4000, &[Downlink, Uplink]).unwrap();
        let used = 2 * cap + T.fixed_us(Downlink) + T.fixed_us(Uplink) + 16;
        assert!(used <= 4000 && used + 2 > 4000);
        assert_eq!(T.round_data_cap(4000, &[Uplink]), Some(4000 - 140));
        assert_eq!(T.round_data_cap(100, &[Uplink]), None);
        assert_eq!(T.round_data_cap(4000, &[]), None);
    }

    #[test]
    fn debt_is_charged_to_its_direction() {
        let caps = T.round_data_caps(3000, &[Downlink, Uplink], [600, 0], 14);
        let (dl, ul) = (caps[0].1, caps[1].1);
        let dl_air = 600 + T.fixed_us(Downlink) + dl;
        let ul_air = T.fixed_us(Uplink) + ul;
        assert!(dl_air.abs_diff(ul_air) <= 1, "{dl_air} vs {ul_air}");
        assert!(dl + ul + T.fixed_us(Downlink) + T.fixed_us(Uplink) + 16 <= 3000);

        // Without debt the cheaper downlink exchange gets the extra data time.
        let even = T.round_data_caps(4000, &[Downlink, Uplink], [0, 0], 14);
        assert_eq!(even[0].1 - even[1].1, T.fixed_us(Uplink) - T.fixed_us(Downlink));
    }

    #[test]
    fn crushing_debt_leaves_the_other_direction_alone() {
        let caps = T.round_data_caps(1000, &[Downlink, Uplink], [5000, 0], 14);
        assert_eq!(caps, vec![(Uplink, 1000 - 140)]);
        assert!(T.round_data_caps(50, &[Downlink, Uplink], [0, 0], 14).is_empty());
    }
}
