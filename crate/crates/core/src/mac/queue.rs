//! Per-link MPDU queue with plain ARQ.
//!
//! MPDUs of equal size and retry count are kept as run-length segments, so a
//! 0.5 MB file costs two queue entries rather than 334.

use std::collections::VecDeque;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub count: u32,
    pub bytes: u32,
    pub retry: u8,
}

/// MPDUs handed to the PHY and awaiting their block ACK, in queue order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InFlight {
    pub parts: Vec<Segment>,
}

impl InFlight {
    pub fn mpdus(&self) -> u32 {
        self.parts.iter().map(|p| p.count).sum()
    }

    pub fn payload_bits(&self) -> u64 {
        self.parts
            .iter()
            .map(|p| u64::from(p.count) * u64::from(p.bytes) * 8)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AckReport {
    pub delivered_mpdus: u64,
    pub delivered_bits: u64,
    pub requeued_mpdus: u64,
    pub dropped_mpdus: u64,
}

#[derive(Debug, Clone, Default)]
pub struct TxQueue {
    segments: VecDeque<Segment>,
    queued_mpdus: u64,
    in_flight_mpdus: u64,
    pub generated_mpdus: u64,
    pub generated_bits: u64,
    pub delivered_mpdus: u64,
    pub delivered_bits: u64,
    pub dropped_mpdus: u64,
}

impl TxQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.queued_mpdus == 0
    }

    pub fn queued_mpdus(&self) -> u64 {
        self.queued_mpdus
    }

    pub fn in_flight_mpdus(&self) -> u64 {
        self.in_flight_mpdus
    }

    /// Segments a file into `mpdu_bytes` payloads with a final partial MPDU.
    /// Returns the number of MPDUs enqueued.
    pub fn enqueue_file(&mut self, file_bytes: u64, mpdu_bytes: u32) -> u64 {
        if file_bytes == 0 {
            return 0;
        }
        let full = file_bytes / u64::from(mpdu_bytes);
        let tail = (file_bytes % u64::from(mpdu_bytes)) as u32;
        if full > 0 {
            self.push_back(Segment {
                count: full as u32,
                bytes: mpdu_bytes,
                retry: 0,
            });
        }
        if tail > 0 {
            self.push_back(Segment {
                count: 1,
                bytes: tail,
                retry: 0,
            });
        }
        let n = full + u64::from(tail > 0);
        self.generated_mpdus += n;
        self.generated_bits += file_bytes * 8;
        n
    }

    fn push_back(&mut self, seg: Segment) {
        self.queued_mpdus += u64::from(seg.count);
        if let Some(last) = self.segments.back_mut() {
            if last.bytes == seg.bytes && last.retry == seg.retry {
                last.count += seg.count;
                return;
            }
        }
        self.segments.push_back(seg);
    }

    fn push_front(&mut self, seg: Segment) {
        self.queued_mpdus += u64::from(seg.count);
        if let Some(first) = self.segments.front_mut() {
            if first.bytes == seg.bytes && first.retry == seg.retry {
                first.count += seg.count;
                return;
            }
        }
        self.segments.push_front(seg);
    }

    /// Removes MPDUs from the head while their framed size fits in
    /// `capacity_bits`. Each MPDU costs `(bytes + overhead_bytes) * 8` bits.
    pub fn take(&mut self, capacity_bits: u64, overhead_bytes: u32) -> InFlight {
        let mut left = capacity_bits;
        let mut out = InFlight::default();
        while let Some(seg) = self.segments.front_mut() {
            let cost = u64::from(seg.bytes + overhead_bytes) * 8;
            let fit = (left / cost).min(u64::from(seg.count)) as u32;
            if fit == 0 {
                break;
            }
            left -= u64::from(fit) * cost;
            out.parts.push(Segment {
                count: fit,
                bytes: seg.bytes,
                retry: seg.retry,
            });
            seg.count -= fit;
            if seg.count == 0 {
                self.segments.pop_front();
            } else {
                break;
            }
        }
        let n = u64::from(out.mpdus());
        self.queued_mpdus -= n;
        self.in_flight_mpdus += n;
        out
    }

    /// Puts an untransmitted batch back at the head, unchanged.
    pub fn restore(&mut self, batch: InFlight) {
        self.in_flight_mpdus -= u64::from(batch.mpdus());
        for seg in batch.parts.into_iter().rev() {
            self.push_front(seg);
        }
    }

    /// Framed bits of a batch, as the PHY sees them.
    pub fn air_bits(batch: &InFlight, overhead_bytes: u32) -> u64 {
        batch
            .parts
            .iter()
            .map(|p| u64::from(p.count) * u64::from(p.bytes + overhead_bytes) * 8)
            .sum()
    }

    /// Resolves a batch. `successes[i]` MPDUs of `batch.parts[i]` were
    /// acknowledged; the rest go back to the head of the queue with one more
    /// retry, or are dropped once the retry limit is exceeded.
    pub fn arq_on_ack(&mut self, batch: InFlight, successes: &[u32], retry_limit: u8) -> AckReport {
        assert_eq!(batch.parts.len(), successes.len(), "one outcome per batch part");
        let mut report = AckReport::default();
        let mut failed = Vec::new();
        for (part, &ok) in batch.parts.iter().zip(successes) {
            let ok = ok.min(part.count);
            report.delivered_mpdus += u64::from(ok);
            report.delivered_bits += u64::from(ok) * u64::from(part.bytes) * 8;
            let lost = part.count - ok;
            if lost == 0 {
                continue;
            }
            if part.retry >= retry_limit {
                report.dropped_mpdus += u64::from(lost);
            } else {
                failed.push(Segment {
                    count: lost,
                    bytes: part.bytes,
                    retry: part.retry + 1,
                });
            }
        }
        for seg in failed.into_iter().rev() {
            report.requeued_mpdus += u64::from(seg.count);
            self.push_front(seg);
        }
        self.in_flight_mpdus -= u64::from(batch.mpdus());
        self.delivered_mpdus += report.delivered_mpdus;
        self.delivered_bits += report.delivered_bits;
        self.dropped_mpdus += report.dropped_mpdus;
        report
    }

    /// generated == delivered + dropped + queued + in flight.
    pub fn is_conserved(&self) -> bool {
        self.generated_mpdus
            == self.delivered_mpdus + self.dropped_mpdus + self.queued_mpdus + self.in_flight_mpdus
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_megabyte_file_is_334_mpdus() {
        let mut q = TxQueue::new();
        assert_eq!(q.enqueue_file(500_000, 1500), 334);
        assert_eq!(500_000u64.div_ceil(1500), 334);
        assert_eq!(q.queued_mpdus(), 334);
        assert_eq!(q.generated_bits, 4_000_000);
    }

    #[test]
    fn all_success_shrinks_queue() {
        let mut q = TxQueue::new();
        q.enqueue_file(15_000, 1500);
        let batch = q.take(4 * 1538 * 8, 38);
        assert_eq!(batch.mpdus(), 4);
        let r = q.arq_on_ack(batch, &[4], 7);
        assert_eq!(r.delivered_mpdus, 4);
        assert_eq!(r.delivered_bits, 4 * 1500 * 8);
        assert_eq!(q.queued_mpdus(), 6);
        assert!(q.is_conserved());
    }

    #[test]
    fn failures_at_retry_limit_are_dropped() {
        let mut q = TxQueue::new();
        q.enqueue_file(3000, 1500);
        for _ in 0..=7 {
            let b = q.take(u64::MAX, 38);
            assert_eq!(b.mpdus(), 2);
            let r = q.arq_on_ack(b, &[0], 7);
            assert_eq!(r.delivered_bits, 0);
        }
        assert!(q.is_empty());
        assert_eq!(q.dropped_mpdus, 2);
        assert_eq!(q.delivered_bits, 0);
        assert!(q.is_conserved());
    }

    #[test]
    fn mixed_outcomes_partition_the_batch() {
        let mut q = TxQueue::new();
        q.enqueue_file(500_000, 1500);
        let b = q.take(100 * 1538 * 8, 38);
        let n = b.mpdus();
        let r = q.arq_on_ack(b, &[60], 7);
        assert_eq!(r.delivered_mpdus + r.requeued_mpdus + r.dropped_mpdus, u64::from(n));
        assert!(q.is_conserved());
        // Failed MPDUs are retried first.
        let head = q.take(1538 * 8, 38);
        assert_eq!(head.parts[0].retry, 1);
    }

    #[test]
    fn restored_batch_keeps_order_and_retries() {
        let mut q = TxQueue::new();
        q.enqueue_file(4600, 1500);
        let before = q.clone();
        let b = q.take(u64::MAX, 38);
        q.restore(b);
        assert_eq!(q.segments, before.segments);
        assert_eq!(q.queued_mpdus(), 4);
        assert_eq!(q.in_flight_mpdus(), 0);
        assert!(q.is_conserved());
    }

    #[test]
    fn partial_tail_mpdu_fits_separately() {
        let mut q = TxQueue::new();
        q.enqueue_file(1600, 1500);
        let b = q.take(u64::MAX, 38);
        assert_eq!(b.parts.len(), 2);
        assert_eq!(b.payload_bits(), 1600 * 8);
        assert_eq!(TxQueue::air_bits(&b, 38), (1538 + 138) * 8);
    }
}
