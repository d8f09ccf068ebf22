//! Prefix structures over cluster sizes.

/// Complete binary tree of non-negative weights.
///
/// Every internal node is recomputed from its two children on update, so the
/// stored sums never accumulate drift from repeated add/subtract cycles.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    /// A tree able to hold indices `0..capacity`, all weights zero.
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, w: f64) {
        debug_assert!(w >= 0.0 && w.is_finite(), "weight {w} at {i}");
        let mut p = self.leaves + i;
        self.nodes[p] = w;
        while p > 1 {
            p >>= 1;
            self.nodes[p] = self.nodes[2 * p] + self.nodes[2 * p + 1];
        }
    }

    /// Index `i` with `prefix(i) <= x < prefix(i + 1)`, never returning a
    /// zero-weight leaf as long as the total is positive.
    pub fn find(&self, mut x: f64) -> usize {
        let mut p = 1;
        while p < self.leaves {
            let left = 2 * p;
            let lw = self.nodes[left];
            if (x < lw || self.nodes[left + 1] <= 0.0) && lw > 0.0 {
                p = left;
            } else {
                x -= lw;
                p = left + 1;
            }
        }
        p - self.leaves
    }
}

/// Fenwick tree of exact integer sums, 1-based.
#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<u64>,
}

impl Fenwick {
    /// Tree over indices `1..=len`.
    pub fn new(len: usize) -> Self {
        Self {
            tree: vec![0; len + 1],
        }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(&mut self, mut i: usize, delta: u64) {
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    pub fn sub(&mut self, mut i: usize, delta: u64) {
        while i < self.tree.len() {
            self.tree[i] -= delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over `1..=i` (clamped to the tree length).
    pub fn prefix(&self, i: usize) -> u64 {
        let mut i = i.min(self.len());
        let mut s = 0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }
}
