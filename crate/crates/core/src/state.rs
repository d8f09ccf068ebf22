//! Cluster configurations `L = (L_1, L_2, ...)` with conserved total mass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::index::{Fenwick, SumTree};
use crate::kernel::{Factorization, KernelSpec};

/// Sampling weights for a separable kernel, kept in step with the counts.
#[derive(Debug, Clone)]
pub(crate) struct WeightIndex {
    pub(crate) form: Factorization,
    /// `u(n) L_n`
    pub(crate) first: SumTree,
    /// `v(n) L_n`; absent for product-form kernels, where it equals `first`.
    pub(crate) second: Option<SumTree>,
    /// `u(n)^2 L_n` (product form) or `u(n) v(n) L_n` (symmetric form).
    pub(crate) diag: SumTree,
}

impl WeightIndex {
    fn new(form: Factorization, capacity: usize) -> Option<Self> {
        match form {
            Factorization::Dense => None,
            Factorization::Product { .. } => Some(Self {
                form,
                first: SumTree::new(capacity),
                second: None,
                diag: SumTree::new(capacity),
            }),
            Factorization::Symmetric { .. } => Some(Self {
                form,
                first: SumTree::new(capacity),
                second: Some(SumTree::new(capacity)),
                diag: SumTree::new(capacity),
            }),
        }
    }

    fn refresh(&mut self, n: u64, count: u64) {
        let l = count as f64;
        let i = n as usize;
        match self.form {
            Factorization::Product { u, .. } => {
                let un = u.at(n);
                self.first.set(i, un * l);
                self.diag.set(i, un * un * l);
            }
            Factorization::Symmetric { u, v, .. } => {
                let (un, vn) = (u.at(n), v.at(n));
                self.first.set(i, un * l);
                if let Some(second) = self.second.as_mut() {
                    second.set(i, vn * l);
                }
                self.diag.set(i, un * vn * l);
            }
            Factorization::Dense => {}
        }
    }

    pub(crate) fn second(&self) -> &SumTree {
        self.second.as_ref().unwrap_or(&self.first)
    }
}

/// Integer size-class counts with total mass `N = Σ n L_n`.
///
/// Only non-empty classes are stored. An exact Fenwick tree over sizes keeps
/// `Σ_{n >= k} n L_n` available in `O(log N)`, and an optional weight index
/// serves the event sampler.
#[derive(Debug, Clone)]
pub struct ClusterState {
    total_mass: u64,
    counts: BTreeMap<u64, u64>,
    particle_count: u64,
    mass_index: Fenwick,
    weights: Option<WeightIndex>,
}

impl ClusterState {
    /// `N` particles of size one.
    pub fn init_monodisperse(total_mass: u64) -> Result<Self> {
        if total_mass == 0 {
            return Err(Error::domain("total mass must be at least 1"));
        }
        Self::init_from_profile([(1, total_mass)])
    }

    /// State with the given `(size, count)` pairs; zero counts are ignored.
    pub fn init_from_profile(profile: impl IntoIterator<Item = (u64, u64)>) -> Result<Self> {
        let mut counts = BTreeMap::new();
        for (size, count) in profile {
            if size == 0 {
                return Err(Error::domain("cluster size 0 in profile"));
            }
            if count > 0 {
                *counts.entry(size).or_insert(0) += count;
            }
        }
        if counts.is_empty() {
            return Err(Error::domain("profile has no particles"));
        }
        let mut total_mass = 0u64;
        let mut particle_count = 0u64;
        for (&n, &l) in &counts {
            total_mass = n
                .checked_mul(l)
                .and_then(|x| x.checked_add(total_mass))
                .ok_or_else(|| Error::domain("total mass overflows u64"))?;
            particle_count += l;
        }
        let len = usize::try_from(total_mass)
            .map_err(|_| Error::domain("total mass too large for this platform"))?;
        let mut mass_index = Fenwick::new(len);
        for (&n, &l) in &counts {
            mass_index.add(n as usize, n * l);
        }
        Ok(Self {
            total_mass,
            counts,
            particle_count,
            mass_index,
            weights: None,
        })
    }

    /// Total mass `N`.
    pub fn total_mass(&self) -> u64 {
        self.total_mass
    }

    /// Number of particles `K = Σ L_n`.
    pub fn particle_count(&self) -> u64 {
        self.particle_count
    }

    pub fn count(&self, n: u64) -> u64 {
        self.counts.get(&n).copied().unwrap_or(0)
    }

    /// Non-empty classes in increasing size order.
    pub fn classes(&self) -> impl DoubleEndedIterator<Item = (u64, u64)> + '_ {
        self.counts.iter().map(|(&n, &l)| (n, l))
    }

    pub fn distinct_sizes(&self) -> usize {
        self.counts.len()
    }

    /// Largest size present.
    pub fn largest(&self) -> u64 {
        *self.counts.keys().next_back().expect("state is never empty")
    }

    /// True when a single particle carries all the mass.
    pub fn is_absorbed(&self) -> bool {
        self.particle_count == 1
    }

    /// Replaces one particle of size `m` and one of size `n` by one of size `m + n`.
    ///
    /// # Panics
    ///
    /// If the pair is not present in the state; that is a sampler bug.
    pub fn apply_coagulation(&mut self, m: u64, n: u64) {
        let need_m = if m == n { 2 } else { 1 };
        assert!(
            self.count(m) >= need_m && self.count(n) >= 1,
            "coagulation ({m}, {n}) not possible in current state"
        );
        self.remove_one(m);
        self.remove_one(n);
        let s = m + n;
        let c = self.counts.entry(s).or_insert(0);
        *c += 1;
        let c = *c;
        self.mass_index.sub(m as usize, m);
        self.mass_index.sub(n as usize, n);
        self.mass_index.add(s as usize, s);
        self.particle_count -= 1;
        if let Some(w) = self.weights.as_mut() {
            w.refresh(m, self.counts.get(&m).copied().unwrap_or(0));
            if n != m {
                w.refresh(n, self.counts.get(&n).copied().unwrap_or(0));
            }
            w.refresh(s, c);
        }
    }

    fn remove_one(&mut self, n: u64) {
        let c = self.counts.get_mut(&n).expect("class present");
        *c -= 1;
        if *c == 0 {
            self.counts.remove(&n);
        }
    }

    /// Exact numerator `Σ_{n >= k} n L_n`.
    pub fn mass_tail_numerator(&self, k: u64) -> u64 {
        let below = self.mass_index.prefix(k.saturating_sub(1) as usize);
        self.total_mass - below
    }

    /// `N^{-1} Σ_{n >= k} n L_n`.
    pub fn mass_tail(&self, k: u64) -> f64 {
        self.mass_tail_numerator(k) as f64 / self.total_mass as f64
    }

    /// `N^{-1} Σ_{n >= r} n^p L_n`.
    pub fn moment_tail(&self, p: f64, r: u64) -> f64 {
        let s: f64 = self
            .counts
            .range(r.max(1)..)
            .map(|(&n, &l)| (n as f64).powf(p) * l as f64)
            .sum();
        s / self.total_mass as f64
    }

    /// Builds (or rebuilds) the sampling weights for `kernel`.
    pub(crate) fn attach_weights(&mut self, kernel: &KernelSpec) {
        let form = kernel.factorization();
        if self.weights.as_ref().is_some_and(|w| w.form == form) {
            return;
        }
        self.weights = WeightIndex::new(form, self.total_mass as usize + 1);
        if let Some(w) = self.weights.as_mut() {
            for (&n, &l) in &self.counts {
                w.refresh(n, l);
            }
        }
    }

    pub(crate) fn weights(&self) -> Option<&WeightIndex> {
        self.weights.as_ref()
    }

    /// JSON snapshot `{"t": t, "counts": {"size": count, ...}}`.
    pub fn snapshot(&self, t: f64) -> Snapshot {
        Snapshot {
            t,
            counts: self.counts.iter().map(|(n, l)| (n.to_string(), *l)).collect(),
        }
    }

    /// CSV rows `t,size,count`, one per non-empty class, without header.
    pub fn csv_rows(&self, t: f64) -> String {
        let mut out = String::new();
        for (n, l) in self.classes() {
            let _ = writeln!(out, "{t},{n},{l}");
        }
        out
    }
}

/// Serializable view of a state at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub counts: BTreeMap<String, u64>,
}
