//! Time-ordered event queue. Ties are broken by insertion order, which keeps
//! runs reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::phy::Direction;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Arrival { sta: usize, dir: Direction },
    BackoffExpiry { ap: usize, generation: u64 },
    TxopStep { ap: usize },
    EmissionEnd { id: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Scheduled {
    time: u64,
    seq: u64,
    kind: EventKind,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; earliest (time, seq) must come out first.
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: u64, kind: EventKind) {
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            kind,
        });
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(u64, EventKind)> {
        self.heap.pop().map(|s| (s.time, s.kind))
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|s| s.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_insertion_order() {
        let mut q = EventQueue::new();
        q.push(5, EventKind::TxopStep { ap: 0 });
        q.push(3, EventKind::TxopStep { ap: 1 });
        q.push(5, EventKind::TxopStep { ap: 2 });
        q.push(3, EventKind::EmissionEnd { id: 9 });
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(
            order,
            vec![
                (3, EventKind::TxopStep { ap: 1 }),
                (3, EventKind::EmissionEnd { id: 9 }),
                (5, EventKind::TxopStep { ap: 0 }),
                (5, EventKind::TxopStep { ap: 2 }),
            ]
        );
        assert!(q.is_empty());
    }
}
