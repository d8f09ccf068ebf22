//! Exact stochastic simulation of the Marcus-Lushnikov process.
//!
//! From state `L` with total mass `N`, each unordered pair of particles of
//! sizes `m`, `n` merges at rate `α(m, n) / N`. The total rate is
//!
//! ```text
//! R(L) = (1 / 2N) Σ_{m,n} α(m, n) (L_m L_n - 1{m = n} L_m)
//! ```
//!
//! For separable kernels the next pair is proposed as an ordered pair from the
//! per-size weight trees and a same-class proposal is kept with probability
//! `(L_n - 1) / L_n`, which gives the generator's law exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{Factorization, KernelSpec};
use crate::observables::{ObservableRecord, ObservableSet};
use crate::state::ClusterState;

/// Proposals per acceptance window.
const WINDOW: u64 = 10_000;
/// Below this windowed acceptance rate the next draw enumerates all pairs.
const MIN_ACCEPTANCE: f64 = 1e-3;
/// `UV - D` smaller than this fraction of `UV` is recomputed pair by pair.
const CANCELLATION: f64 = 1e-6;

/// Generator for replica `replica` of grid point `grid_index`.
///
/// Streams are disjoint ChaCha8 streams keyed by the master seed, so results do
/// not depend on how replicas are scheduled over threads.
pub fn replica_rng(master_seed: u64, grid_index: u32, replica: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((grid_index as u64) << 32) | replica as u64);
    rng
}

/// Aggregate rate of the current state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateAccount {
    pub total_rate: f64,
    /// `Σ u(n) L_n`.
    pub first: f64,
    /// `Σ v(n) L_n` (equal to `first` for product-form kernels).
    pub second: f64,
    /// `Σ u(n)^2 L_n` or `Σ u(n) v(n) L_n`.
    pub diag: f64,
    /// True when the total was summed over pairs instead of from the marginals.
    pub enumerated: bool,
}

impl RateAccount {
    fn dense(total_rate: f64) -> Self {
        Self {
            total_rate,
            first: 0.0,
            second: 0.0,
            diag: 0.0,
            enumerated: true,
        }
    }
}

/// `R(L)` by summing over unordered pairs of occupied classes, `O(K^2)`.
///
/// Fails when a size lies outside a tabulated kernel.
pub fn direct_total_rate(state: &ClusterState, kernel: &KernelSpec) -> Result<f64> {
    let classes: Vec<(u64, u64)> = state.classes().collect();
    let mut sum = 0.0;
    for (i, &(m, lm)) in classes.iter().enumerate() {
        if lm >= 2 {
            sum += 0.5 * kernel.evaluate(m, m)? * (lm * (lm - 1)) as f64;
        }
        for &(n, ln) in &classes[i + 1..] {
            sum += kernel.evaluate(m, n)? * lm as f64 * ln as f64;
        }
    }
    Ok(sum / state.total_mass() as f64)
}

/// Rate account using the attached weight trees when they match `kernel`.
pub fn rate_account(state: &ClusterState, kernel: &KernelSpec) -> Result<RateAccount> {
    if state.particle_count() < 2 {
        return Ok(RateAccount::dense(0.0));
    }
    let form = kernel.factorization();
    let (scale, first, second, diag) = match (form, state.weights().filter(|w| w.form == form)) {
        (Factorization::Dense, _) => {
            return Ok(RateAccount::dense(direct_total_rate(state, kernel)?));
        }
        (Factorization::Product { scale, .. }, Some(w)) | (Factorization::Symmetric { scale, .. }, Some(w)) => {
            (scale, w.first.total(), w.second().total(), w.diag.total())
        }
        (Factorization::Product { scale, u }, None) => {
            let (mut a, mut d) = (0.0, 0.0);
            for (n, l) in state.classes() {
                let un = u.at(n);
                a += un * l as f64;
                d += un * un * l as f64;
            }
            (scale, a, a, d)
        }
        (Factorization::Symmetric { scale, u, v }, None) => {
            let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
            for (n, l) in state.classes() {
                let (un, vn) = (u.at(n), v.at(n));
                a += un * l as f64;
                b += vn * l as f64;
                d += un * vn * l as f64;
            }
            (scale, a, b, d)
        }
    };
    let cross = first * second;
    let raw = cross - diag;
    let n = state.total_mass() as f64;
    let mut acc = RateAccount {
        total_rate: 0.0,
        first,
        second,
        diag,
        enumerated: false,
    };
    if raw > CANCELLATION * cross {
        acc.total_rate = match form {
            Factorization::Product { .. } => scale * raw / (2.0 * n),
            _ => scale * raw / n,
        };
    } else {
        acc.total_rate = direct_total_rate(state, kernel)?;
        acc.enumerated = true;
    }
    Ok(acc)
}

/// `R(L)`; zero exactly when one particle remains.
pub fn total_rate(state: &ClusterState, kernel: &KernelSpec) -> Result<f64> {
    Ok(rate_account(state, kernel)?.total_rate)
}

/// One sampled jump: waiting time and the merging sizes with `m <= n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledEvent {
    pub wait: f64,
    pub m: u64,
    pub n: u64,
}

/// Counters describing how events were drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SamplerStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Events drawn by full pair enumeration.
    pub enumerated: u64,
}

/// Event sampler for a fixed kernel, carrying the rejection-window state.
#[derive(Debug, Clone)]
pub struct Sampler {
    kernel: KernelSpec,
    form: Factorization,
    window_proposals: u64,
    window_accepted: u64,
    force_enumeration: bool,
    stats: SamplerStats,
}

fn exp_wait<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -u.ln() / rate;
        }
    }
}

impl Sampler {
    pub fn new(kernel: &KernelSpec) -> Self {
        Self {
            kernel: kernel.clone(),
            form: kernel.factorization(),
            window_proposals: 0,
            window_accepted: 0,
            force_enumeration: false,
            stats: SamplerStats::default(),
        }
    }

    pub fn stats(&self) -> SamplerStats {
        self.stats
    }

    /// Draws the next jump without applying it.
    ///
    /// Weight trees must be attached for the separable fast path; otherwise
    /// pairs are enumerated, which is exact but `O(K^2)`.
    pub fn sample<R: Rng + ?Sized>(&mut self, state: &ClusterState, rng: &mut R) -> Result<SampledEvent> {
        let acc = rate_account(state, &self.kernel)?;
        if !(acc.total_rate > 0.0) {
            return Err(Error::Absorbed);
        }
        let wait = exp_wait(rng, acc.total_rate);
        let indexed = state.weights().filter(|w| w.form == self.form);
        let force = std::mem::take(&mut self.force_enumeration);
        let (m, n) = match indexed {
            Some(w) if !acc.enumerated && !force => {
                match self.propose(state, w, rng) {
                    Some(pair) => pair,
                    None => self.enumerate(state, rng)?,
                }
            }
            _ => self.enumerate(state, rng)?,
        };
        Ok(SampledEvent { wait, m, n })
    }

    /// Rejection loop; `None` when the acceptance window trips the guard.
    fn propose<R: Rng + ?Sized>(
        &mut self,
        state: &ClusterState,
        w: &crate::state::WeightIndex,
        rng: &mut R,
    ) -> Option<(u64, u64)> {
        let (t1, t2) = (&w.first, w.second());
        loop {
            let m = t1.find(rng.random::<f64>() * t1.total()) as u64;
            let n = t2.find(rng.random::<f64>() * t2.total()) as u64;
            self.stats.proposals += 1;
            self.window_proposals += 1;
            let keep = if m == n {
                let l = state.count(m);
                l >= 2 && rng.random::<f64>() * (l as f64) < (l - 1) as f64
            } else {
                true
            };
            if keep {
                self.stats.accepted += 1;
                self.window_accepted += 1;
            }
            if self.window_proposals >= WINDOW {
                let rate = self.window_accepted as f64 / self.window_proposals as f64;
                self.window_proposals = 0;
                self.window_accepted = 0;
                if rate < MIN_ACCEPTANCE && !keep {
                    return None;
                }
                self.force_enumeration = rate < MIN_ACCEPTANCE;
            }
            if keep {
                return Some((m.min(n), m.max(n)));
            }
        }
    }

    fn enumerate<R: Rng + ?Sized>(&mut self, state: &ClusterState, rng: &mut R) -> Result<(u64, u64)> {
        self.stats.enumerated += 1;
        let classes: Vec<(u64, u64)> = state.classes().collect();
        let mut pairs = Vec::with_capacity(classes.len() * (classes.len() + 1) / 2);
        let mut total = 0.0;
        for (i, &(m, lm)) in classes.iter().enumerate() {
            if lm >= 2 {
                total += 0.5 * self.kernel.evaluate(m, m)? * (lm * (lm - 1)) as f64;
                pairs.push((m, m, total));
            }
            for &(n, ln) in &classes[i + 1..] {
                total += self.kernel.evaluate(m, n)? * lm as f64 * ln as f64;
                pairs.push((m, n, total));
            }
        }
        if !(total > 0.0) {
            return Err(Error::Absorbed);
        }
        let x = rng.random::<f64>() * total;
        let i = pairs.partition_point(|p| p.2 <= x).min(pairs.len() - 1);
        Ok((pairs[i].0, pairs[i].1))
    }
}

/// Draws one jump from `state` without applying it.
///
/// Attaches the kernel's weight trees to `state` if needed; counts are not
/// changed. A state with one particle gives [`Error::Absorbed`].
pub fn sample_event<R: Rng + ?Sized>(
    state: &mut ClusterState,
    kernel: &KernelSpec,
    rng: &mut R,
) -> Result<SampledEvent> {
    state.attach_weights(kernel);
    Sampler::new(kernel).sample(state, rng)
}

/// One applied coagulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub m: u64,
    pub n: u64,
    pub new_size: u64,
    pub pre_particle_count: u64,
}

/// Event log as CSV with header `event_index,t,m,n`.
pub fn events_csv(events: &[EventRecord]) -> String {
    let mut out = String::from("event_index,t,m,n\n");
    for (i, e) in events.iter().enumerate() {
        out.push_str(&format!("{},{},{},{}\n", i + 1, e.time, e.m, e.n));
    }
    out
}

/// When a trajectory stops. A single remaining particle always stops it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCondition {
    pub t_max: f64,
    /// Stop once every configured stopping time has been hit.
    pub until_all_hit: bool,
    pub max_events: Option<u64>,
}

impl Default for StopCondition {
    fn default() -> Self {
        Self {
            t_max: f64::INFINITY,
            until_all_hit: false,
            max_events: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    TimeLimit,
    Coalesced,
    AllHit,
    EventBudget,
}

/// Result of [`run_trajectory`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub final_state: ClusterState,
    pub record: ObservableRecord,
    pub events: Option<Vec<EventRecord>>,
    pub n_events: u64,
    pub t_end: f64,
    pub stop_reason: StopReason,
    pub sampler: SamplerStats,
}

impl Trajectory {
    /// The event budget ran out before any other stop condition held.
    pub fn truncated(&self) -> bool {
        self.stop_reason == StopReason::EventBudget
    }
}

fn check_table(kernel: &KernelSpec, state: &ClusterState) -> Result<()> {
    match kernel.max_size() {
        Some(max) if state.particle_count() >= 2 && state.largest() > max => Err(Error::domain(format!(
            "cluster of size {} exceeds kernel table (max size {max})",
            state.largest()
        ))),
        _ => Ok(()),
    }
}

/// Simulates from `init` until `stop` holds, feeding every event to `observers`.
pub fn run_trajectory<R: Rng + ?Sized>(
    init: ClusterState,
    kernel: &KernelSpec,
    stop: &StopCondition,
    rng: &mut R,
    mut observers: ObservableSet,
    log_events: bool,
) -> Result<Trajectory> {
    let mut state = init;
    state.attach_weights(kernel);
    check_table(kernel, &state)?;
    let mut sampler = Sampler::new(kernel);
    let mut events = log_events.then(Vec::new);
    let mut t = 0.0;
    let mut n_events = 0u64;
    observers.start(&state, t);

    let reason = loop {
        if state.is_absorbed() {
            break StopReason::Coalesced;
        }
        if stop.until_all_hit && observers.all_hit() {
            break StopReason::AllHit;
        }
        if stop.max_events.is_some_and(|b| n_events >= b) {
            break StopReason::EventBudget;
        }
        let ev = sampler.sample(&state, rng)?;
        let t_next = t + ev.wait;
        if t_next > stop.t_max {
            t = stop.t_max;
            break StopReason::TimeLimit;
        }
        if !(t_next > t) {
            return Err(Error::Integration {
                t,
                reason: format!("event time did not increase (wait {})", ev.wait),
            });
        }
        observers.advance_to(&state, t_next, false);
        let pre = state.particle_count();
        state.apply_coagulation(ev.m, ev.n);
        n_events += 1;
        t = t_next;
        check_table(kernel, &state)?;
        if let Some(log) = events.as_mut() {
            log.push(EventRecord {
                time: t,
                m: ev.m,
                n: ev.n,
                new_size: ev.m + ev.n,
                pre_particle_count: pre,
            });
        }
        observers.after_event(&state, t, n_events);
    };
    match reason {
        StopReason::TimeLimit => observers.advance_to(&state, t, true),
        // nothing changes after absorption
        StopReason::Coalesced => observers.advance_to(&state, f64::INFINITY, true),
        _ => {}
    }
    let record = observers.finish(&state, t);
    Ok(Trajectory {
        final_state: state,
        record,
        events,
        n_events,
        t_end: t,
        stop_reason: reason,
        sampler: sampler.stats(),
    })
}
