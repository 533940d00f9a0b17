//! Observables extracted from recorded trajectories: hitting times, phase
//! segmentation, final states, invasion, and cycle statistics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecology::{FitnessSummary, TypeIndex, FEASIBILITY_TOL};
use crate::lv::{interior_point, PointKind};
use crate::sim::{StopRule, Terminal, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhaseError {
    #[error("level {level} of type {ty} was not recorded")]
    InsufficientRecording { ty: TypeIndex, level: u64 },
    #[error("invalid analysis configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub eps: f64,
    /// Length of the trailing window over which the final-state ball must
    /// hold.
    pub final_window: f64,
    /// Hysteresis, in individuals, below `floor(eps K)` that a type must
    /// fall to before a new excursion can start.
    pub prominence: u64,
    /// L1 radius of the final-state ball; `eps` when unset.
    #[serde(default)]
    pub final_radius: Option<f64>,
}

impl AnalysisConfig {
    /// Window `3 ln K` and prominence `max(floor(eps^2 K), 5)`.
    pub fn standard(eps: f64, carrying_capacity: u64) -> Self {
        let k = carrying_capacity as f64;
        AnalysisConfig {
            eps,
            final_window: 3.0 * k.ln(),
            prominence: ((eps * eps * k).floor() as u64).max(5),
            final_radius: None,
        }
    }

    pub fn validate(&self) -> Result<(), PhaseError> {
        if !(self.eps > 0.0) || !(self.final_window > 0.0) || self.prominence < 1 {
            return Err(PhaseError::Config(format!("{self:?}")));
        }
        Ok(())
    }

    fn radius(&self) -> f64 {
        self.final_radius.unwrap_or(self.eps)
    }
}

/// First time `N_i` equals `level`, or `None` if it never does.
pub fn hitting_time(traj: &Trajectory, ty: TypeIndex, level: u64) -> Result<Option<f64>, PhaseError> {
    let i = ty.idx();
    let first = traj.samples.first().map(|s| s.counts[i]);
    if first == Some(level) {
        return Ok(Some(0.0));
    }
    if !traj.record.resolves(level) {
        return Err(PhaseError::InsufficientRecording { ty, level });
    }
    Ok(traj.samples.iter().find(|s| s.counts[i] == level).map(|s| s.time))
}

/// True iff `N_i > floor K` at every recorded time from `from_time` on (and
/// there is at least one such record).
pub fn detect_invasion(traj: &Trajectory, ty: TypeIndex, floor: f64, from_time: f64) -> bool {
    let threshold = floor * traj.carrying_capacity as f64;
    let mut any = false;
    for s in traj.samples.iter().filter(|s| s.time >= from_time) {
        any = true;
        if !(s.counts[ty.idx()] as f64 > threshold) {
            return false;
        }
    }
    any
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalState {
    Point { kind: PointKind, density: [f64; 3] },
    Undetermined,
}

impl FinalState {
    pub fn kind(&self) -> Option<PointKind> {
        match self {
            FinalState::Point { kind, .. } => Some(*kind),
            FinalState::Undetermined => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            FinalState::Point { kind, .. } => point_label(*kind),
            FinalState::Undetermined => "undetermined".into(),
        }
    }
}

pub fn point_label(kind: PointKind) -> String {
    match kind {
        PointKind::Origin => "none".into(),
        PointKind::Axis(i) => format!("{i}"),
        PointKind::Planar(i, j) => format!("{i}{j}"),
        PointKind::Interior => "012".into(),
    }
}

/// Candidate limit points: origin, viable axes, feasible pairs, and a
/// feasible interior point.
pub fn candidate_points(summary: &FitnessSummary) -> Vec<(PointKind, [f64; 3])> {
    let mut out = vec![(PointKind::Origin, [0.0; 3])];
    for i in TypeIndex::ALL {
        if summary.nbar[i.idx()] > 0.0 {
            out.push((PointKind::Axis(i), summary.axis_point(i.idx())));
        }
    }
    for k in TypeIndex::ALL {
        if let Some(p) = summary.pair_point(k.idx()) {
            let (i, j) = crate::ecology::pair_of(k);
            out.push((PointKind::Planar(i, j), p));
        }
    }
    if let Some((n, _)) = interior_point(summary) {
        if n.iter().all(|&v| v > FEASIBILITY_TOL) {
            out.push((PointKind::Interior, n));
        }
    }
    out
}

fn density(counts: &[u64; 3], k: f64) -> [f64; 3] {
    counts.map(|c| c as f64 / k)
}

fn l1(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).sum()
}

fn stopped_monomorphic(traj: &Trajectory, stop: &[StopRule]) -> bool {
    match traj.terminal {
        Terminal::Stopped(r) => matches!(stop.get(r), Some(StopRule::Monomorphic)),
        _ => false,
    }
}

/// Final state by ball containment over the trailing window. A run stopped
/// because a single type is left is assigned that type's equilibrium.
pub fn detect_final_state(
    traj: &Trajectory,
    cfg: &AnalysisConfig,
    summary: &FitnessSummary,
    stop: &[StopRule],
) -> FinalState {
    let last = traj.final_counts();
    if last == [0; 3] {
        return FinalState::Point {
            kind: PointKind::Origin,
            density: [0.0; 3],
        };
    }
    if stopped_monomorphic(traj, stop) {
        if let Some(i) = (0..3).find(|&i| last[i] > 0) {
            return FinalState::Point {
                kind: PointKind::Axis(TypeIndex::ALL[i]),
                density: summary.axis_point(i),
            };
        }
    }
    if traj.terminal != Terminal::HorizonReached {
        return FinalState::Undetermined;
    }
    let end = traj.end_time();
    if end < cfg.final_window {
        return FinalState::Undetermined;
    }
    let k = traj.carrying_capacity as f64;
    let radius = cfg.radius();
    let window: Vec<[f64; 3]> = traj
        .samples
        .iter()
        .filter(|s| s.time >= end - cfg.final_window)
        .map(|s| density(&s.counts, k))
        .collect();
    let holding: Vec<_> = candidate_points(summary)
        .into_iter()
        .filter(|(_, p)| window.iter().all(|z| l1(z, p) < radius))
        .collect();
    match holding.as_slice() {
        [(kind, p)] => FinalState::Point {
            kind: *kind,
            density: *p,
        },
        _ => FinalState::Undetermined,
    }
}

/// Time from which the trajectory stays inside the final ball with every
/// type absent from the final point extinct.
pub fn sweep_duration(traj: &Trajectory, cfg: &AnalysisConfig, final_state: &FinalState) -> Option<f64> {
    settle_time(traj, cfg, final_state, true)
}

/// Time from which the trajectory stays inside the final ball, whether or
/// not the absent types have died out yet.
pub fn final_ball_entry(traj: &Trajectory, cfg: &AnalysisConfig, final_state: &FinalState) -> Option<f64> {
    settle_time(traj, cfg, final_state, false)
}

fn settle_time(traj: &Trajectory, cfg: &AnalysisConfig, final_state: &FinalState, extinct: bool) -> Option<f64> {
    let FinalState::Point { density: p, .. } = final_state else {
        return None;
    };
    let k = traj.carrying_capacity as f64;
    let radius = cfg.radius();
    let settled =
        |c: &[u64; 3]| l1(&density(c, k), p) < radius && (!extinct || (0..3).all(|i| p[i] > 0.0 || c[i] == 0));
    let samples = &traj.samples;
    if !settled(&samples.last()?.counts) {
        return None;
    }
    match samples.iter().rposition(|s| !settled(&s.counts)) {
        None => Some(0.0),
        Some(idx) => samples.get(idx + 1).map(|s| s.time),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    /// Some present type is below `eps K`.
    Stochastic,
    /// Every present type is above `eps K`.
    Deterministic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub kind: PhaseKind,
    /// Types at or above `floor(eps K)`.
    pub abundant: Vec<TypeIndex>,
    /// Present types below `floor(eps K)`.
    pub rare: Vec<TypeIndex>,
}

/// Maximal intervals over which the sets of abundant and rare types are
/// constant.
pub fn segment_phases(traj: &Trajectory, eps: f64) -> Vec<Segment> {
    let level = (eps * traj.carrying_capacity as f64).floor() as u64;
    let classify = |c: &[u64; 3]| {
        let abundant: Vec<_> = TypeIndex::ALL.into_iter().filter(|t| c[t.idx()] >= level.max(1)).collect();
        let rare: Vec<_> = TypeIndex::ALL
            .into_iter()
            .filter(|t| c[t.idx()] > 0 && c[t.idx()] < level.max(1))
            .collect();
        (abundant, rare)
    };
    let mut out: Vec<Segment> = Vec::new();
    for s in &traj.samples {
        let (abundant, rare) = classify(&s.counts);
        match out.last_mut() {
            Some(seg) if seg.abundant == abundant && seg.rare == rare => seg.end = s.time,
            _ => {
                if let Some(seg) = out.last_mut() {
                    seg.end = s.time;
                }
                let kind = if rare.is_empty() {
                    PhaseKind::Deterministic
                } else {
                    PhaseKind::Stochastic
                };
                out.push(Segment {
                    start: s.time,
                    end: s.time,
                    kind,
                    abundant,
                    rare,
                });
            }
        }
    }
    if let Some(seg) = out.last_mut() {
        seg.end = traj.end_time();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingRecord {
    pub ty: TypeIndex,
    pub level: u64,
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub hitting_times: Vec<HittingRecord>,
    pub phases: Vec<Segment>,
    pub final_state: FinalState,
    pub sweep_duration: Option<f64>,
    /// Entry into the final ball for good, absent types possibly still alive.
    #[serde(default)]
    pub final_entry: Option<f64>,
    pub cycles: CycleReport,
}

impl PhaseReport {
    pub fn hitting(&self, ty: TypeIndex, level: u64) -> Option<f64> {
        self.hitting_times
            .iter()
            .find(|h| h.ty == ty && h.level == level)
            .and_then(|h| h.time)
    }

    pub const CSV_HEADER: &'static str = "final_state,sweep_duration,t1_eps,t2_eps,cycles";

    /// One CSV row in the layout of `CSV_HEADER`.
    pub fn csv_row(&self, level: u64) -> String {
        let f = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        format!(
            "{},{},{},{},{}",
            self.final_state.label(),
            f(self.sweep_duration),
            f(self.hitting(TypeIndex::FIRST, level)),
            f(self.hitting(TypeIndex::SECOND, level)),
            self.cycles.count
        )
    }
}

/// Full analysis of one trajectory. Hitting times are reported for every
/// level the trajectory recorded.
pub fn analyze(traj: &Trajectory, cfg: &AnalysisConfig, summary: &FitnessSummary, stop: &[StopRule]) -> PhaseReport {
    let mut hitting_times = Vec::new();
    for ty in TypeIndex::ALL {
        for &level in &traj.record.levels {
            let time = hitting_time(traj, ty, level).ok().flatten();
            hitting_times.push(HittingRecord { ty, level, time });
        }
    }
    let final_state = detect_final_state(traj, cfg, summary, stop);
    PhaseReport {
        hitting_times,
        phases: segment_phases(traj, cfg.eps),
        sweep_duration: sweep_duration(traj, cfg, &final_state),
        final_entry: final_ball_entry(traj, cfg, &final_state),
        final_state,
        cycles: detect_cycles(traj, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cycle {
    pub start: f64,
    pub end: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycles: Vec<Cycle>,
    pub count: usize,
}

/// Peak times of the excursions of one type above `level`. An excursion
/// starts when the count reaches `level` and ends when it falls below
/// `level - prominence`; its peak is the largest recorded count inside.
pub fn excursion_peaks(traj: &Trajectory, ty: TypeIndex, level: u64, prominence: u64) -> Vec<f64> {
    let rearm = level.saturating_sub(prominence);
    let mut peaks = Vec::new();
    let mut current: Option<(u64, f64)> = None;
    for s in &traj.samples {
        let n = s.counts[ty.idx()];
        match current {
            None if n >= level && level > 0 => current = Some((n, s.time)),
            Some((best, _)) if n > best => current = Some((n, s.time)),
            Some((_, at)) if n < rearm => {
                peaks.push(at);
                current = None;
            }
            _ => {}
        }
    }
    if let Some((_, at)) = current {
        peaks.push(at);
    }
    peaks
}

/// Cycles between consecutive type 1 peaks that enclose at least one type 2
/// and one type 0 peak.
pub fn detect_cycles(traj: &Trajectory, cfg: &AnalysisConfig) -> CycleReport {
    let level = (cfg.eps * traj.carrying_capacity as f64).floor() as u64;
    let p1 = excursion_peaks(traj, TypeIndex::FIRST, level, cfg.prominence);
    let p2 = excursion_peaks(traj, TypeIndex::SECOND, level, cfg.prominence);
    let p0 = excursion_peaks(traj, TypeIndex::WILD, level, cfg.prominence);
    let inside = |peaks: &[f64], a: f64, b: f64| peaks.iter().any(|&t| t > a && t < b);
    let cycles: Vec<Cycle> = p1
        .windows(2)
        .filter(|w| inside(&p2, w[0], w[1]) && inside(&p0, w[0], w[1]))
        .map(|w| Cycle {
            start: w[0],
            end: w[1],
            duration: w[1] - w[0],
        })
        .collect();
    CycleReport {
        count: cycles.len(),
        cycles,
    }
}
