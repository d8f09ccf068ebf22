//! Online detectors for first-hitting times and sampled time series.
//!
//! The state of the process is piecewise constant between coagulation events,
//! so checking each condition right after every event (and once at `t = 0`)
//! finds the exact infimum. All tail masses `N^{-1} Σ_{n>=k} n L_n` are
//! nondecreasing in time, hence once a mass condition holds it keeps holding.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::ClusterState;

/// A stopping time of the coagulation process.
#[derive(Debug, Clone, PartialEq)]
pub enum StoppingTimeSpec {
    /// First time the mass fraction in clusters of size `>= c N^b` reaches `delta`.
    Tau { b: f64, c: f64, delta: f64 },
    /// First time the mass fraction in clusters of size `>= k` reaches `delta`.
    Tk { k: u64, delta: f64 },
    /// `Tk` with `k = ceil(A ln N / ln ln N)`.
    ThatA { a: f64, delta: f64 },
    /// First time some cluster has size `>= ceil(N / 2)`.
    Sigma,
    /// First time a single cluster holds all the mass.
    TauTilde,
    /// Level `l` is hit once the mass fraction in sizes `>= r` is at least
    /// `deltas[r-1]` for every `r <= l`.
    SigmaLadder { deltas: Vec<f64> },
    /// First time `N^{-1} Σ_{n>=r} n^p L_n >= threshold`.
    Tpr { p: f64, r: u64, threshold: f64 },
}

fn unit_interval(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 1], got {x}")))
    }
}

fn fmt_list(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(";"))
}

/// `ceil(x)` that ignores rounding noise just above an integer.
fn ceil_size(x: f64) -> u64 {
    let r = x.round();
    let c = if (x - r).abs() <= 1e-9 * x.abs().max(1.0) { r } else { x.ceil() };
    (c.max(1.0)) as u64
}

/// Gel-size threshold `ceil(c N^b)`.
pub fn tau_threshold(n: u64, b: f64, c: f64) -> u64 {
    ceil_size(c * (n as f64).powf(b))
}

/// `k = ceil(A ln N / ln ln N)`; requires `N >= 16`.
pub fn that_threshold(n: u64, a: f64) -> Result<u64> {
    if n < 16 {
        return Err(Error::domain(format!(
            "ThatA needs N >= 16 so that ln ln N > 1, got N = {n}"
        )));
    }
    let ln = (n as f64).ln();
    Ok(ceil_size(a * ln / ln.ln()))
}

/// Decreasing thresholds `δ_l = k^{-s (l-1)}`, `l = 1..=k`.
pub fn ladder_schedule(k: u64, s: f64) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(Error::domain(format!("ladder needs k >= 2, got {k}")));
    }
    if !(s > 0.0) {
        return Err(Error::domain(format!("ladder needs s > 0, got {s}")));
    }
    let kf = k as f64;
    if 2.0 * kf.powf(-s) > 1.0 {
        return Err(Error::domain(format!(
            "ladder constraint 2 k^(-s) <= 1 violated: 2 * {k}^(-{s}) = {}",
            2.0 * kf.powf(-s)
        )));
    }
    Ok((1..=k).map(|l| kf.powf(-s * (l - 1) as f64)).collect())
}

/// Largest cluster size present.
pub fn largest_cluster(state: &ClusterState) -> u64 {
    state.largest()
}

impl StoppingTimeSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            StoppingTimeSpec::Tau { b, c, delta } => {
                unit_interval("delta", *delta)?;
                if !(*c > 0.0 && c.is_finite() && b.is_finite()) {
                    return Err(Error::domain(format!("Tau needs c > 0 and finite b, got c={c}, b={b}")));
                }
            }
            StoppingTimeSpec::Tk { k, delta } => {
                unit_interval("delta", *delta)?;
                if *k == 0 {
                    return Err(Error::domain("Tk needs k >= 1"));
                }
            }
            StoppingTimeSpec::ThatA { a, delta } => {
                unit_interval("delta", *delta)?;
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::domain(format!("ThatA needs A > 0, got {a}")));
                }
            }
            StoppingTimeSpec::Sigma | StoppingTimeSpec::TauTilde => {}
            StoppingTimeSpec::SigmaLadder { deltas } => {
                if deltas.is_empty() {
                    return Err(Error::domain("SigmaLadder needs at least one threshold"));
                }
                for d in deltas {
                    unit_interval("ladder threshold", *d)?;
                }
            }
            StoppingTimeSpec::Tpr { p, r, threshold } => {
                if !(*p >= 1.0 && p.is_finite()) || *r == 0 || !(*threshold > 0.0) {
                    return Err(Error::domain(format!(
                        "Tpr needs p >= 1, r >= 1, A > 0; got p={p}, r={r}, A={threshold}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Canonical key used in output files, e.g. `Tk(k=12,delta=0.5)`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    /// Keys under which this spec reports hit times (one per ladder level).
    pub fn output_keys(&self) -> Vec<String> {
        match self {
            StoppingTimeSpec::SigmaLadder { deltas } => (1..=deltas.len())
                .map(|l| format!("{}[l={l}]", self.canonical()))
                .collect(),
            _ => vec![self.canonical()],
        }
    }
}

impl fmt::Display for StoppingTimeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoppingTimeSpec::Tau { b, c, delta } => write!(f, "Tau(b={b},c={c},delta={delta})"),
            StoppingTimeSpec::Tk { k, delta } => write!(f, "Tk(k={k},delta={delta})"),
            StoppingTimeSpec::ThatA { a, delta } => write!(f, "ThatA(A={a},delta={delta})"),
            StoppingTimeSpec::Sigma => write!(f, "Sigma"),
            StoppingTimeSpec::TauTilde => write!(f, "TauTilde"),
            StoppingTimeSpec::SigmaLadder { deltas } => {
                write!(f, "SigmaLadder(deltas={})", fmt_list(deltas))
            }
            StoppingTimeSpec::Tpr { p, r, threshold } => write!(f, "Tpr(p={p},r={r},A={threshold})"),
        }
    }
}

impl FromStr for StoppingTimeSpec {
    type Err = Error;

    /// Parses the canonical form. `SigmaLadder(k=4,s=1)` is also accepted and
    /// expands to the geometric ladder schedule.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            Some(_) => return Err(Error::config(format!("malformed stopping time '{s}'"))),
            None => (s, ""),
        };
        let mut kv = BTreeMap::new();
        for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::config(format!("expected key=value in '{s}'")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let num = |key: &str| -> Result<f64> {
            kv.get(key)
                .ok_or_else(|| Error::config(format!("'{s}' is missing {key}")))?
                .parse::<f64>()
                .map_err(|e| Error::config(format!("'{s}': {key}: {e}")))
        };
        let int = |key: &str| -> Result<u64> {
            kv.get(key)
                .ok_or_else(|| Error::config(format!("'{s}' is missing {key}")))?
                .parse::<u64>()
                .map_err(|e| Error::config(format!("'{s}': {key}: {e}")))
        };
        let spec = match name {
            "Tau" => StoppingTimeSpec::Tau {
                b: num("b")?,
                c: num("c")?,
                delta: num("delta")?,
            },
            "Tk" => StoppingTimeSpec::Tk {
                k: int("k")?,
                delta: num("delta")?,
            },
            "ThatA" => StoppingTimeSpec::ThatA {
                a: num("A")?,
                delta: num("delta")?,
            },
            "Sigma" => StoppingTimeSpec::Sigma,
            "TauTilde" => StoppingTimeSpec::TauTilde,
            "SigmaLadder" => {
                if let Some(list) = kv.get("deltas") {
                    let inner = list.trim_start_matches('[').trim_end_matches(']');
                    let deltas = inner
                        .split(';')
                        .map(|x| x.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| Error::config(format!("'{s}': deltas: {e}")))?;
                    StoppingTimeSpec::SigmaLadder { deltas }
                } else {
                    StoppingTimeSpec::SigmaLadder {
                        deltas: ladder_schedule(int("k")?, num("s")?)?,
                    }
                }
            }
            "Tpr" => StoppingTimeSpec::Tpr {
                p: num("p")?,
                r: int("r")?,
                threshold: num("A")?,
            },
            other => return Err(Error::config(format!("unknown stopping time '{other}'"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// A stopping time bound to a particular total mass.
#[derive(Debug, Clone)]
enum Detector {
    Tail { k: u64, delta: f64 },
    Largest { threshold: u64 },
    Absorbed,
    Ladder { deltas: Vec<f64> },
    Moment { p: f64, r: u64, threshold: f64 },
}

impl Detector {
    fn resolve(spec: &StoppingTimeSpec, n: u64) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            StoppingTimeSpec::Tau { b, c, delta } => Detector::Tail {
                k: tau_threshold(n, *b, *c),
                delta: *delta,
            },
            StoppingTimeSpec::Tk { k, delta } => Detector::Tail {
                k: *k,
                delta: *delta,
            },
            StoppingTimeSpec::ThatA { a, delta } => Detector::Tail {
                k: that_threshold(n, *a)?,
                delta: *delta,
            },
            StoppingTimeSpec::Sigma => Detector::Largest {
                threshold: n.div_ceil(2),
            },
            StoppingTimeSpec::TauTilde => Detector::Absorbed,
            StoppingTimeSpec::SigmaLadder { deltas } => Detector::Ladder {
                deltas: deltas.clone(),
            },
            StoppingTimeSpec::Tpr { p, r, threshold } => Detector::Moment {
                p: *p,
                r: *r,
                threshold: *threshold,
            },
        })
    }

    /// Number of ladder levels (1 for non-ladder detectors) satisfied now.
    fn levels_satisfied(&self, state: &ClusterState) -> usize {
        let holds = match self {
            Detector::Tail { k, delta } => state.mass_tail(*k) >= *delta,
            Detector::Largest { threshold } => state.largest() >= *threshold,
            Detector::Absorbed => state.is_absorbed(),
            Detector::Moment { p, r, threshold } => state.moment_tail(*p, *r) >= *threshold,
            Detector::Ladder { deltas } => {
                return deltas
                    .iter()
                    .enumerate()
                    .take_while(|(i, &d)| state.mass_tail(*i as u64 + 1) >= d)
                    .count();
            }
        };
        usize::from(holds)
    }
}

/// Checks one stopping time against the state reached at time `t`.
///
/// Returns `Some(t)` when the defining condition holds (for a ladder: when
/// every level holds). Fails for `ThatA` with `N < 16`.
pub fn check_after_event(spec: &StoppingTimeSpec, state: &ClusterState, t: f64) -> Result<Option<f64>> {
    let det = Detector::resolve(spec, state.total_mass())?;
    let need = match &det {
        Detector::Ladder { deltas } => deltas.len(),
        _ => 1,
    };
    Ok((det.levels_satisfied(state) >= need).then_some(t))
}

/// Outcome of one stopping time on one trajectory.
///
/// `t` is the hitting time when `hit`, otherwise the time the run ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitTime {
    pub hit: bool,
    pub t: f64,
}

impl HitTime {
    pub fn censored(&self) -> bool {
        !self.hit
    }

    pub fn time(&self) -> Option<f64> {
        self.hit.then_some(self.t)
    }
}

/// Time-series sampling options.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeriesConfig {
    /// Events between rows; defaults to `max(1, N / 1000)`.
    pub stride: Option<u64>,
    pub mass_tail_ks: Vec<u64>,
    /// `(p, r)` pairs for `N^{-1} Σ_{n>=r} n^p L_n`.
    pub moments: Vec<(f64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub particle_count: u64,
    pub largest: u64,
    pub mass_tails: Vec<f64>,
    pub moments: Vec<f64>,
}

/// Fixed observation times for comparison with the deterministic limit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointConfig {
    /// Increasing observation times.
    pub times: Vec<f64>,
    /// Densities `L_n / N` are recorded for `n = 1..=n_report`.
    pub n_report: u64,
    /// Clusters of size `>= sol_cutoff` are excluded from the sol mass.
    pub sol_cutoff: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointRow {
    pub t: f64,
    pub particle_count: u64,
    pub largest: u64,
    /// `N^{-1} Σ_{n < cutoff} n L_n`, or 1 without a cutoff.
    pub sol_mass: f64,
    pub densities: Vec<f64>,
}

/// Everything observed along one trajectory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub hit_times: BTreeMap<String, HitTime>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<Vec<SeriesRow>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checkpoints: Vec<CheckpointRow>,
}

impl ObservableRecord {
    pub fn hit_time(&self, spec: &StoppingTimeSpec) -> Option<HitTime> {
        self.hit_times.get(&spec.canonical()).copied()
    }
}

struct Tracker {
    keys: Vec<String>,
    detector: Detector,
    /// First time each level was reached.
    hits: Vec<Option<f64>>,
}

/// Per-trajectory observer: stopping-time detectors, series and checkpoints.
pub struct ObservableSet {
    trackers: Vec<Tracker>,
    series_cfg: Option<SeriesConfig>,
    stride: u64,
    series: Vec<SeriesRow>,
    checkpoint_cfg: Option<CheckpointConfig>,
    checkpoints: Vec<CheckpointRow>,
}

impl ObservableSet {
    pub fn new(
        specs: &[StoppingTimeSpec],
        series: Option<SeriesConfig>,
        checkpoints: Option<CheckpointConfig>,
        total_mass: u64,
    ) -> Result<Self> {
        let trackers = specs
            .iter()
            .map(|spec| {
                let detector = Detector::resolve(spec, total_mass)?;
                let keys = spec.output_keys();
                Ok(Tracker {
                    hits: vec![None; keys.len()],
                    keys,
                    detector,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(cp) = &checkpoints {
            if cp.times.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::config("checkpoint times must be nondecreasing"));
            }
        }
        let stride = series
            .as_ref()
            .and_then(|s| s.stride)
            .unwrap_or((total_mass / 1000).max(1))
            .max(1);
        Ok(Self {
            trackers,
            series_cfg: series,
            stride,
            series: Vec::new(),
            checkpoint_cfg: checkpoints,
            checkpoints: Vec::new(),
        })
    }

    /// Stopping times only.
    pub fn stopping_times(specs: &[StoppingTimeSpec], total_mass: u64) -> Result<Self> {
        Self::new(specs, None, None, total_mass)
    }

    pub fn all_hit(&self) -> bool {
        self.trackers.iter().all(|tr| tr.hits.iter().all(Option::is_some))
    }

    fn update_hits(&mut self, state: &ClusterState, t: f64) {
        for tr in &mut self.trackers {
            if tr.hits.iter().all(Option::is_some) {
                continue;
            }
            let reached = tr.detector.levels_satisfied(state);
            for h in tr.hits.iter_mut().take(reached) {
                h.get_or_insert(t);
            }
        }
    }

    fn push_series(&mut self, state: &ClusterState, t: f64) {
        if let Some(cfg) = &self.series_cfg {
            if self.series.last().is_some_and(|r| r.t == t) {
                return;
            }
            self.series.push(SeriesRow {
                t,
                particle_count: state.particle_count(),
                largest: state.largest(),
                mass_tails: cfg.mass_tail_ks.iter().map(|&k| state.mass_tail(k)).collect(),
                moments: cfg.moments.iter().map(|&(p, r)| state.moment_tail(p, r)).collect(),
            });
        }
    }

    /// Records the initial state at `t = 0`.
    pub(crate) fn start(&mut self, state: &ClusterState, t: f64) {
        self.update_hits(state, t);
        self.push_series(state, t);
    }

    /// Records every checkpoint strictly before `t_next` while `state` is current.
    pub(crate) fn advance_to(&mut self, state: &ClusterState, t_next: f64, inclusive: bool) {
        let Some(cfg) = &self.checkpoint_cfg else { return };
        while let Some(&tc) = cfg.times.get(self.checkpoints.len()) {
            if tc < t_next || (inclusive && tc <= t_next) {
                let n = state.total_mass() as f64;
                let sol_mass = cfg.sol_cutoff.map_or(1.0, |c| 1.0 - state.mass_tail(c));
                self.checkpoints.push(CheckpointRow {
                    t: tc,
                    particle_count: state.particle_count(),
                    largest: state.largest(),
                    sol_mass,
                    densities: (1..=cfg.n_report).map(|s| state.count(s) as f64 / n).collect(),
                });
            } else {
                break;
            }
        }
    }

    /// Called after each applied event; `index` counts events from 1.
    pub(crate) fn after_event(&mut self, state: &ClusterState, t: f64, index: u64) {
        self.update_hits(state, t);
        if index.is_multiple_of(self.stride) {
            self.push_series(state, t);
        }
    }

    /// Closes the record; unhit stopping times are censored at `t_end`.
    pub(crate) fn finish(mut self, state: &ClusterState, t_end: f64) -> ObservableRecord {
        self.push_series(state, t_end);
        let mut hit_times = BTreeMap::new();
        for tr in &self.trackers {
            for (key, hit) in tr.keys.iter().zip(&tr.hits) {
                let ht = match hit {
                    Some(t) => HitTime { hit: true, t: *t },
                    None => HitTime { hit: false, t: t_end },
                };
                hit_times.insert(key.clone(), ht);
            }
        }
        ObservableRecord {
            hit_times,
            series: self.series_cfg.as_ref().map(|_| self.series),
            checkpoints: self.checkpoints,
        }
    }
}

/// CSV header for series rows.
pub fn series_header(cfg: &SeriesConfig) -> String {
    let mut cols = vec!["t".to_string(), "particle_count".into(), "largest".into()];
    cols.extend(cfg.mass_tail_ks.iter().map(|k| format!("mass_tail_k{k}")));
    cols.extend(cfg.moments.iter().map(|(p, r)| format!("moment_p{p}_r{r}")));
    cols.join(",")
}

/// Series rows as CSV, header included.
pub fn series_csv(cfg: &SeriesConfig, rows: &[SeriesRow]) -> String {
    let mut out = series_header(cfg);
    out.push('\n');
    for r in rows {
        let mut cols = vec![r.t.to_string(), r.particle_count.to_string(), r.largest.to_string()];
        cols.extend(r.mass_tails.iter().map(f64::to_string));
        cols.extend(r.moments.iter().map(f64::to_string));
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ladder_examples() {
        assert_eq!(ladder_schedule(4, 1.0).unwrap(), vec![1.0, 0.25, 0.0625, 0.015625]);
        assert_eq!(ladder_schedule(2, 1.0).unwrap(), vec![1.0, 0.5]);
        assert!(ladder_schedule(3, 0.1).is_err());
        assert!(ladder_schedule(1, 1.0).is_err());
        assert!(ladder_schedule(4, 0.0).is_err());
    }

    #[test]
    fn largest_examples() {
        let s = ClusterState::init_from_profile([(1, 2), (5, 1)]).unwrap();
        assert_eq!(largest_cluster(&s), 5);
        assert_eq!(largest_cluster(&ClusterState::init_monodisperse(9).unwrap()), 1);
        assert_eq!(largest_cluster(&ClusterState::init_from_profile([(7, 1)]).unwrap()), 7);
    }

    #[test]
    fn check_initial_hit_and_equality() {
        let s = ClusterState::init_from_profile([(1, 1), (3, 1)]).unwrap();
        let tk = StoppingTimeSpec::Tk { k: 3, delta: 0.75 };
        assert_eq!(check_after_event(&tk, &s, 0.0).unwrap(), Some(0.0));

        let mut s = ClusterState::init_monodisperse(4).unwrap();
        let tk = StoppingTimeSpec::Tk { k: 2, delta: 0.5 };
        assert_eq!(check_after_event(&tk, &s, 0.0).unwrap(), None);
        s.apply_coagulation(1, 1);
        assert_eq!(check_after_event(&tk, &s, 0.3).unwrap(), Some(0.3));
    }

    #[test]
    fn tau_tilde_needs_n_minus_one_events() {
        let mut s = ClusterState::init_monodisperse(4).unwrap();
        let spec = StoppingTimeSpec::TauTilde;
        s.apply_coagulation(1, 1);
        assert!(check_after_event(&spec, &s, 1.0).unwrap().is_none());
        s.apply_coagulation(1, 1);
        assert!(check_after_event(&spec, &s, 2.0).unwrap().is_none());
        s.apply_coagulation(2, 2);
        assert_eq!(check_after_event(&spec, &s, 3.0).unwrap(), Some(3.0));
    }

    #[test]
    fn sigma_uses_ceiling_half() {
        let s = ClusterState::init_from_profile([(1, 3), (4, 1)]).unwrap();
        // N = 7, threshold 4
        assert!(check_after_event(&StoppingTimeSpec::Sigma, &s, 0.0).unwrap().is_some());
        let s = ClusterState::init_from_profile([(1, 4), (3, 1)]).unwrap();
        assert!(check_after_event(&StoppingTimeSpec::Sigma, &s, 0.0).unwrap().is_none());
    }

    #[test]
    fn that_a_thresholds() {
        let s = ClusterState::init_monodisperse(15).unwrap();
        let spec = StoppingTimeSpec::ThatA { a: 1.0, delta: 0.5 };
        assert!(matches!(check_after_event(&spec, &s, 0.0), Err(Error::Domain(_))));
        // ln(2^16) / ln ln(2^16) = 11.09 / 2.406 = 4.61
        assert_eq!(that_threshold(1 << 16, 1.0).unwrap(), 5);
        assert_eq!(that_threshold(1 << 19, 0.1).unwrap(), 1);
    }

    #[test]
    fn tau_threshold_rounding() {
        assert_eq!(tau_threshold(1000, 2.0 / 3.0, 1.0), 100);
        assert_eq!(tau_threshold(1000, 2.0 / 3.0, 0.5), 50);
        assert_eq!(tau_threshold(10, 0.5, 1e-6), 1);
    }

    #[test]
    fn ladder_levels_report_partial_progress() {
        let spec = StoppingTimeSpec::SigmaLadder {
            deltas: vec![1.0, 0.5, 0.5],
        };
        let s = ClusterState::init_from_profile([(1, 2), (2, 1)]).unwrap();
        // tails: r=1 -> 1, r=2 -> 0.5, r=3 -> 0
        let mut obs = ObservableSet::stopping_times(std::slice::from_ref(&spec), 4).unwrap();
        obs.start(&s, 0.0);
        let rec = obs.finish(&s, 2.0);
        let keys = spec.output_keys();
        assert_eq!(rec.hit_times[&keys[0]], HitTime { hit: true, t: 0.0 });
        assert_eq!(rec.hit_times[&keys[1]], HitTime { hit: true, t: 0.0 });
        assert_eq!(rec.hit_times[&keys[2]], HitTime { hit: false, t: 2.0 });
    }

    #[test]
    fn canonical_round_trip() {
        for s in [
            "Tau(b=0.5,c=2,delta=0.5)",
            "Tk(k=12,delta=0.5)",
            "ThatA(A=0.1,delta=0.5)",
            "Sigma",
            "TauTilde",
            "SigmaLadder(deltas=[1;0.25;0.0625])",
            "Tpr(p=2,r=3,A=1.5)",
        ] {
            let spec: StoppingTimeSpec = s.parse().unwrap();
            assert_eq!(spec.canonical(), s);
        }
        let spec: StoppingTimeSpec = "SigmaLadder(k=4,s=1)".parse().unwrap();
        assert_eq!(spec.canonical(), "SigmaLadder(deltas=[1;0.25;0.0625;0.015625])");
        assert!("Tk(k=2,delta=1.5)".parse::<StoppingTimeSpec>().is_err());
        assert!("Foo".parse::<StoppingTimeSpec>().is_err());
        assert!("Tk(k=2".parse::<StoppingTimeSpec>().is_err());
    }

    #[test]
    fn series_csv_layout() {
        let cfg = SeriesConfig {
            stride: Some(1),
            mass_tail_ks: vec![1, 12],
            moments: vec![(2.0, 3)],
        };
        assert_eq!(
            series_header(&cfg),
            "t,particle_count,largest,mass_tail_k1,mass_tail_k12,moment_p2_r3"
        );
    }
}
