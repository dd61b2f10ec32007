//! Round-robin MU grouping with semi-orthogonal user selection.

use crate::channel::C64;
use crate::phy::Direction;

/// Round-robin pointers of one AP, one per direction, over its STAs.
#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerState {
    pointer: [usize; 2],
    pub epsilon: f64,
    pub max_multiplexed: usize,
}

impl SchedulerState {
    pub fn new(epsilon: f64, max_multiplexed: usize) -> Self {
        SchedulerState {
            pointer: [0, 0],
            epsilon,
            max_multiplexed,
        }
    }

    pub fn pointer(&self, dir: Direction) -> usize {
        self.pointer[dir.index()]
    }

    /// Positions (into a list of `n` STAs) in round-robin order starting at
    /// the pointer, keeping only those for which `backlogged` holds.
    pub fn candidate_order(
        &self,
        dir: Direction,
        n: usize,
        mut backlogged: impl FnMut(usize) -> bool,
    ) -> Vec<usize> {
        let start = if n == 0 { 0 } else { self.pointer(dir) % n };
        (0..n).map(|k| (start + k) % n).filter(|&i| backlogged(i)).collect()
    }

    /// Moves the pointer to the position after the head pick.
    pub fn advance_round_robin(&mut self, dir: Direction, head: usize, n: usize) {
        if n > 0 {
            self.pointer[dir.index()] = (head + 1) % n;
        }
    }
}

/// Greedy semi-orthogonal selection. `rows` are candidate channel vectors in
/// round-robin order. The first candidate is always taken; a later one joins
/// if the part of its channel orthogonal to the span of the selected users
/// keeps at least `epsilon` of its norm. Returns indices into `rows`.
pub fn sus_select(rows: &[Vec<C64>], epsilon: f64, k_max: usize) -> Vec<usize> {
    let mut selected = Vec::new();
    // Orthonormal basis of the selected rows (Gram-Schmidt).
    let mut basis: Vec<Vec<C64>> = Vec::new();
    for (idx, h) in rows.iter().enumerate() {
        if selected.len() >= k_max {
            break;
        }
        let norm = norm(h);
        if !(norm > 0.0) {
            continue;
        }
        let mut resid = h.clone();
        for q in &basis {
            let proj = inner(q, &resid);
            for (r, qv) in resid.iter_mut().zip(q) {
                *r -= qv * proj;
            }
        }
        let rn = self::norm(&resid);
        if selected.is_empty() || rn / norm >= epsilon {
            if rn <= 1e-12 * norm {
                continue;
            }
            basis.push(resid.iter().map(|v| v / rn).collect());
            selected.push(idx);
        }
    }
    selected
}

/// `Σ conj(a_i) b_i`
fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}
