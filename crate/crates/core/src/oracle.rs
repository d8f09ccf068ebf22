//! Exact analysis of the coagulation chain for small total mass.
//!
//! States are the integer partitions of `N`. Each coagulation lowers the
//! number of parts by one, so the chain is a DAG ordered by particle count and
//! first-passage equations are solved by back-substitution.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::observables::{check_after_event, StoppingTimeSpec};
use crate::state::ClusterState;

/// Largest total mass accepted by [`build_chain`].
pub const MAX_CHAIN_MASS: u64 = 30;
/// Largest total mass accepted by [`marginal_at_time`].
pub const MAX_MARGINAL_MASS: u64 = 20;

/// Number of integer partitions of `n`.
pub fn partition_count(n: u64) -> u128 {
    let n = n as usize;
    let mut p = vec![0u128; n + 1];
    p[0] = 1;
    for part in 1..=n {
        for total in part..=n {
            p[total] += p[total - part];
        }
    }
    p[n]
}

/// Continuous-time chain on the partitions of `N`.
#[derive(Debug, Clone)]
pub struct PartitionChain {
    total_mass: u64,
    /// Parts in nonincreasing order.
    states: Vec<Vec<u64>>,
    index: HashMap<Vec<u64>, usize>,
    transitions: Vec<Vec<(usize, f64)>>,
    exit_rates: Vec<f64>,
}

fn partitions(n: u64) -> Vec<Vec<u64>> {
    fn rec(rest: u64, max: u64, cur: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if rest == 0 {
            out.push(cur.clone());
            return;
        }
        for part in (1..=max.min(rest)).rev() {
            cur.push(part);
            rec(rest - part, part, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

fn parts_of(state: &ClusterState) -> Vec<u64> {
    let mut parts = Vec::with_capacity(state.particle_count() as usize);
    for (n, l) in state.classes().rev() {
        parts.extend(std::iter::repeat_n(n, l as usize));
    }
    parts
}

fn state_of(parts: &[u64]) -> ClusterState {
    ClusterState::init_from_profile(parts.iter().map(|&p| (p, 1))).expect("partition is non-empty")
}

/// Enumerates every partition of `n` with its generator rates.
pub fn build_chain(n: u64, kernel: &KernelSpec) -> Result<PartitionChain> {
    if n == 0 {
        return Err(Error::domain("total mass must be at least 1"));
    }
    if n > MAX_CHAIN_MASS {
        return Err(Error::domain(format!(
            "exact chain limited to N <= {MAX_CHAIN_MASS}; N = {n} has {} states",
            partition_count(n)
        )));
    }
    let states = partitions(n);
    let index: HashMap<Vec<u64>, usize> = states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let nf = n as f64;
    let mut transitions = Vec::with_capacity(states.len());
    let mut exit_rates = Vec::with_capacity(states.len());
    for parts in &states {
        let mut counts: Vec<(u64, u64)> = Vec::new();
        for &p in parts {
            match counts.last_mut() {
                Some((s, c)) if *s == p => *c += 1,
                _ => counts.push((p, 1)),
            }
        }
        let mut out = Vec::new();
        let mut total = 0.0;
        for (i, &(m, lm)) in counts.iter().enumerate() {
            for &(k, lk) in &counts[i..] {
                let rate = if k == m {
                    if lm < 2 {
                        continue;
                    }
                    kernel.evaluate(m, m)? * (lm * (lm - 1)) as f64 / (2.0 * nf)
                } else {
                    kernel.evaluate(m, k)? * (lm * lk) as f64 / nf
                };
                let mut next = parts.clone();
                let pos = next.iter().position(|&x| x == m).expect("part present");
                next.remove(pos);
                let pos = next.iter().position(|&x| x == k).expect("part present");
                next.remove(pos);
                let merged = m + k;
                let at = next.partition_point(|&x| x >= merged);
                next.insert(at, merged);
                out.push((index[&next], rate));
                total += rate;
            }
        }
        transitions.push(out);
        exit_rates.push(total);
    }
    Ok(PartitionChain {
        total_mass: n,
        states,
        index,
        transitions,
        exit_rates,
    })
}

impl PartitionChain {
    pub fn total_mass(&self) -> u64 {
        self.total_mass
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn transition_count(&self) -> usize {
        self.transitions.iter().map(Vec::len).sum()
    }

    /// Parts of state `i` in nonincreasing order.
    pub fn parts(&self, i: usize) -> &[u64] {
        &self.states[i]
    }

    pub fn state(&self, i: usize) -> ClusterState {
        state_of(&self.states[i])
    }

    pub fn index_of(&self, state: &ClusterState) -> Option<usize> {
        if state.total_mass() != self.total_mass {
            return None;
        }
        self.index.get(&parts_of(state)).copied()
    }

    /// `(target, rate)` pairs leaving state `i`.
    pub fn transitions(&self, i: usize) -> &[(usize, f64)] {
        &self.transitions[i]
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit_rates[i]
    }

    /// Index of the single-cluster state.
    pub fn absorbing(&self) -> usize {
        self.index[&vec![self.total_mass]]
    }

    fn start_index(&self, start: &ClusterState) -> Result<usize> {
        self.index_of(start).ok_or_else(|| {
            Error::domain(format!(
                "start state has mass {}, chain has mass {}",
                start.total_mass(),
                self.total_mass
            ))
        })
    }
}

/// Mean first time the chain started at `start` enters a state where `target` holds.
///
/// Fails if the target can be missed with positive probability.
pub fn expected_hitting_time(
    chain: &PartitionChain,
    start: &ClusterState,
    target: impl Fn(&ClusterState) -> bool,
) -> Result<f64> {
    let s0 = chain.start_index(start)?;
    // fewest parts first: every successor is solved before its predecessors
    let mut order: Vec<usize> = (0..chain.len()).collect();
    order.sort_by_key(|&i| chain.states[i].len());
    let mut h = vec![f64::INFINITY; chain.len()];
    for i in order {
        if target(&chain.state(i)) {
            h[i] = 0.0;
            continue;
        }
        let r = chain.exit_rates[i];
        if r == 0.0 {
            continue;
        }
        let mut v = 1.0 / r;
        for &(j, rate) in &chain.transitions[i] {
            v += rate / r * h[j];
        }
        h[i] = v;
    }
    if h[s0].is_finite() {
        Ok(h[s0])
    } else {
        Err(Error::domain("target is not reached almost surely from the start state"))
    }
}

/// Mean of a stopping time, evaluated through its detector.
pub fn expected_stopping_time(chain: &PartitionChain, start: &ClusterState, spec: &StoppingTimeSpec) -> Result<f64> {
    check_after_event(spec, start, 0.0)?;
    expected_hitting_time(chain, start, |s| matches!(check_after_event(spec, s, 0.0), Ok(Some(_))))
}

/// Distribution over chain states at time `t` by uniformization.
///
/// The time interval is cut into pieces with `Λ dt <= 50`, and each Poisson
/// series is truncated once its tail is below `1e-14`.
pub fn marginal_at_time(chain: &PartitionChain, start: &ClusterState, t: f64) -> Result<Vec<f64>> {
    if chain.total_mass > MAX_MARGINAL_MASS {
        return Err(Error::domain(format!(
            "transient distribution limited to N <= {MAX_MARGINAL_MASS}, got {}",
            chain.total_mass
        )));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be non-negative, got {t}")));
    }
    let s0 = chain.start_index(start)?;
    let mut pi = vec![0.0; chain.len()];
    pi[s0] = 1.0;
    let lambda = chain.exit_rates.iter().copied().fold(0.0, f64::max);
    if lambda == 0.0 || t == 0.0 {
        return Ok(pi);
    }
    if t.is_infinite() {
        let mut out = vec![0.0; chain.len()];
        out[chain.absorbing()] = 1.0;
        return Ok(out);
    }
    let pieces = (lambda * t / 50.0).ceil().max(1.0);
    let dt = t / pieces;
    let mut term = vec![0.0; chain.len()];
    let mut next = vec![0.0; chain.len()];
    for _ in 0..pieces as u64 {
        let lt = lambda * dt;
        let mut w = (-lt).exp();
        let mut cum = w;
        term.copy_from_slice(&pi);
        let mut acc: Vec<f64> = term.iter().map(|x| x * w).collect();
        let mut k = 0u64;
        while 1.0 - cum > 1e-14 && k < 10_000 {
            k += 1;
            // term <- term P with P = I + Q / Λ
            for (i, x) in next.iter_mut().enumerate() {
                *x = term[i] * (1.0 - chain.exit_rates[i] / lambda);
            }
            for (i, &p) in term.iter().enumerate() {
                if p != 0.0 {
                    for &(j, rate) in &chain.transitions[i] {
                        next[j] += p * rate / lambda;
                    }
                }
            }
            std::mem::swap(&mut term, &mut next);
            w *= lt / k as f64;
            cum += w;
            for (a, x) in acc.iter_mut().zip(&term) {
                *a += w * x;
            }
        }
        pi = acc;
    }
    Ok(pi)
}
