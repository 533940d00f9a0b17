//! Monte Carlo experiments: replicate runs with derived seeds, estimators
//! with confidence intervals, and verdicts against the predictions.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecology::{EcologyParams, FitnessSummary, TypeIndex};
use crate::phase::{self, AnalysisConfig};
use crate::predict::{self, Branch, PredictedFinal, Prediction, Regime};
use crate::presets;
use crate::sim::{self, derive_seed, Condition, SimConfig, SimError, StopRule, Terminal};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("could not build the worker pool: {0}")]
    Pool(String),
}

const Z95: f64 = 1.959_963_984_540_054;
const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Stream index reserved for bootstrap resampling, far above any replicate.
const BOOTSTRAP_STREAM: u64 = 1 << 62;

// ------------------------------------------------------------------ spec ---

/// Parameters either from a named preset, with optional overrides, or given
/// in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsSource {
    Preset {
        preset: String,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default, rename = "K")]
        carrying_capacity: Option<u64>,
    },
    Explicit(EcologyParams),
}

impl ParamsSource {
    pub fn resolve(&self) -> Result<EcologyParams, HarnessError> {
        match self {
            ParamsSource::Explicit(p) => Ok(p.clone()),
            ParamsSource::Preset {
                preset,
                alpha,
                carrying_capacity,
            } => {
                let mut p = presets::by_name(preset).ok_or_else(|| HarnessError::UnknownPreset(preset.clone()))?;
                if alpha.is_some() {
                    p.alpha = *alpha;
                }
                if let Some(k) = carrying_capacity {
                    p.carrying_capacity = *k;
                }
                Ok(p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// Absolute time; `50 ln K` when unset.
    pub horizon: Option<f64>,
    pub max_events: Option<u64>,
    /// Schedule mutant 2 at `alpha ln K`; on whenever `alpha` is set.
    pub mutation2: Option<bool>,
    pub initial: Option<[u64; 3]>,
    /// Stop once a single type is left and no injection is pending.
    #[serde(default = "yes")]
    pub stop_monomorphic: bool,
    pub stride: Option<f64>,
}

fn yes() -> bool {
    true
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            horizon: None,
            max_events: None,
            mutation2: None,
            initial: None,
            stop_monomorphic: true,
            stride: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "default_eps")]
    pub eps: f64,
    pub final_window: Option<f64>,
    pub prominence: Option<u64>,
    pub final_radius: Option<f64>,
}

fn default_eps() -> f64 {
    0.1
}

impl Default for AnalysisSection {
    fn default() -> Self {
        AnalysisSection {
            eps: default_eps(),
            final_window: None,
            prominence: None,
            final_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conditioning {
    pub condition: Condition,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
}

fn default_attempts() -> u32 {
    200
}

/// A quantity estimated from the replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Target {
    /// Fraction of replicates in which `ty` reaches `floor(eps K)`.
    InvasionProb { ty: TypeIndex },
    /// Fraction ending at `state` (a point label such as `0` or `12`), with
    /// the listed mutants having reached `floor(eps K)` on the way.
    FinalStateFreq {
        state: String,
        #[serde(default)]
        invaded: Vec<TypeIndex>,
    },
    /// Quantile of the sweep duration over replicates with a final state.
    SweepDurationQuantile { q: f64 },
    /// Quantile of the first time `ty` reaches `floor(eps K)`, measured
    /// from the injection of mutant 2 when `from_injection` is set.
    InvasionTimeQuantile {
        ty: TypeIndex,
        q: f64,
        #[serde(default)]
        from_injection: bool,
    },
    /// Quantile of the time from which the trajectory stays in the final
    /// ball, measured from the injection of mutant 2 when `from_injection`
    /// is set.
    FinalEntryQuantile {
        q: f64,
        #[serde(default)]
        from_injection: bool,
    },
    /// Fraction of replicates with at least `at_least` cycles.
    CycleCountFreq { at_least: usize },
    /// Quantile of the duration of cycle `index` (from 1).
    CycleDurationQuantile { index: usize, q: f64 },
    /// Quantile of the ratio of cycle `index + 1` to cycle `index`.
    CycleRatioQuantile { index: usize, q: f64 },
    /// Accepted runs per attempt under rejection sampling.
    AcceptanceRate,
}

impl Target {
    pub fn name(&self) -> String {
        match self {
            Target::InvasionProb { ty } => format!("invasion_prob({ty})"),
            Target::FinalStateFreq { state, invaded } if invaded.is_empty() => format!("final_state_freq({state})"),
            Target::FinalStateFreq { state, invaded } => {
                let via: String = invaded.iter().map(|t| t.to_string()).collect();
                format!("final_state_freq({state} via {via})")
            }
            Target::SweepDurationQuantile { q } => format!("sweep_duration_q{q}"),
            Target::InvasionTimeQuantile { ty, q, from_injection } => {
                format!("invasion_time({ty}{})_q{q}", if *from_injection { ", from injection" } else { "" })
            }
            Target::FinalEntryQuantile { q, from_injection } => {
                format!("final_entry{}_q{q}", if *from_injection { "(from injection)" } else { "" })
            }
            Target::CycleCountFreq { at_least } => format!("cycle_count_freq(>={at_least})"),
            Target::CycleDurationQuantile { index, q } => format!("cycle_duration({index})_q{q}"),
            Target::CycleRatioQuantile { index, q } => format!("cycle_ratio({}/{index})_q{q}", index + 1),
            Target::AcceptanceRate => "acceptance_rate".into(),
        }
    }

    fn tolerance_kind(&self) -> ToleranceKind {
        match self {
            Target::InvasionProb { .. }
            | Target::FinalStateFreq { .. }
            | Target::CycleCountFreq { .. }
            | Target::AcceptanceRate => ToleranceKind::Frequency,
            Target::SweepDurationQuantile { .. }
            | Target::InvasionTimeQuantile { .. }
            | Target::FinalEntryQuantile { .. }
            | Target::CycleDurationQuantile { .. } => ToleranceKind::Duration,
            Target::CycleRatioQuantile { .. } => ToleranceKind::Ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    #[serde(flatten)]
    pub target: Target,
    /// Replaces the predictor's value.
    #[serde(default)]
    pub prediction: Option<f64>,
    /// Replaces the policy slack for this target.
    #[serde(default)]
    pub slack: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancePolicy {
    /// Absolute slack added to both ends of the CI of a frequency.
    #[serde(default = "freq_slack")]
    pub frequency_abs: f64,
    /// Relative slack, as a fraction of the prediction, for durations.
    #[serde(default = "duration_slack")]
    pub duration_rel: f64,
    /// Absolute slack for ratios of durations.
    #[serde(default = "ratio_slack")]
    pub ratio_abs: f64,
}

fn freq_slack() -> f64 {
    0.05
}
fn duration_slack() -> f64 {
    0.2
}
fn ratio_slack() -> f64 {
    0.15
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy {
            frequency_abs: freq_slack(),
            duration_rel: duration_slack(),
            ratio_abs: ratio_slack(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToleranceKind {
    Frequency,
    Duration,
    Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub params: ParamsSource,
    pub replicates: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub conditioning: Option<Conditioning>,
    #[serde(default)]
    pub tolerance: TolerancePolicy,
    #[serde(rename = "target", default)]
    pub targets: Vec<TargetSpec>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| HarnessError::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Spec(m));
        if self.replicates < 1 {
            return bad("replicates must be at least 1".into());
        }
        let params = self.params.resolve()?;
        params.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
        if !(self.analysis.eps > 0.0 && self.analysis.eps < 1.0) {
            return bad(format!("eps must lie in (0, 1), got {}", self.analysis.eps));
        }
        if let Some(c) = &self.conditioning {
            if c.max_attempts < 1 {
                return bad("max_attempts must be at least 1".into());
            }
        }
        for t in &self.targets {
            match &t.target {
                Target::SweepDurationQuantile { q }
                | Target::InvasionTimeQuantile { q, .. }
                | Target::FinalEntryQuantile { q, .. }
                | Target::CycleDurationQuantile { q, .. }
                | Target::CycleRatioQuantile { q, .. }
                    if !(*q > 0.0 && *q < 1.0) =>
                {
                    return bad(format!("{}: quantile must lie in (0, 1)", t.target.name()));
                }
                Target::CycleCountFreq { at_least: 0 } => {
                    return bad("cycle_count_freq needs at_least >= 1".into());
                }
                Target::CycleDurationQuantile { index: 0, .. } | Target::CycleRatioQuantile { index: 0, .. } => {
                    return bad("cycle index starts at 1".into());
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn sim_config(&self, params: &EcologyParams, seed: u64) -> SimConfig {
        let mut cfg = SimConfig::standard(params, self.analysis.eps, seed);
        if let Some(h) = self.sim.horizon {
            cfg.horizon = h;
        }
        if let Some(m) = self.sim.max_events {
            cfg.max_events = m;
        }
        if let Some(m) = self.sim.mutation2 {
            cfg.mutation2_enabled = m;
        }
        cfg.initial = self.sim.initial;
        if let Some(dt) = self.sim.stride {
            cfg.record.stride = Some(dt);
        }
        if self.sim.stop_monomorphic {
            cfg.stop.push(StopRule::Monomorphic);
        }
        cfg
    }

    pub fn analysis_config(&self, params: &EcologyParams) -> AnalysisConfig {
        let mut a = AnalysisConfig::standard(self.analysis.eps, params.carrying_capacity);
        if let Some(w) = self.analysis.final_window {
            a.final_window = w;
        }
        if let Some(p) = self.analysis.prominence {
            a.prominence = p;
        }
        a.final_radius = self.analysis.final_radius;
        a
    }
}

// ------------------------------------------------------------- replicates ---

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: u32,
    pub seed: u64,
    /// Attempts used, the accepted one included.
    pub attempts: u32,
    /// False when the rejection budget ran out.
    pub accepted: bool,
    pub invaded: [bool; 3],
    pub final_state: String,
    pub sweep_duration: Option<f64>,
    pub final_entry: Option<f64>,
    /// First time each type reaches `floor(eps K)`.
    pub invasion_time: [Option<f64>; 3],
    pub injected_at: Option<f64>,
    pub cycle_durations: Vec<f64>,
    pub terminal: Option<Terminal>,
    pub events: u64,
}

impl ReplicateOutcome {
    /// `t` measured from the injection of mutant 2 when `from_injection` is
    /// set; `None` if mutant 2 was never injected.
    fn shifted(&self, t: f64, from_injection: bool) -> Option<f64> {
        if from_injection {
            self.injected_at.map(|a| t - a)
        } else {
            Some(t)
        }
    }

    pub const CSV_HEADER: &'static str =
        "index,seed,attempts,accepted,invaded1,invaded2,final_state,sweep_duration,final_entry,t1_eps,t2_eps,injected_at,cycles,events";

    pub fn csv_row(&self) -> String {
        let f = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.index,
            self.seed,
            self.attempts,
            self.accepted,
            self.invaded[1],
            self.invaded[2],
            self.final_state,
            f(self.sweep_duration),
            f(self.final_entry),
            f(self.invasion_time[1]),
            f(self.invasion_time[2]),
            f(self.injected_at),
            self.cycle_durations.len(),
            self.events
        )
    }
}

fn run_replicate(spec: &ExperimentSpec, params: &EcologyParams, summary: &FitnessSummary, index: u32) -> Result<ReplicateOutcome, HarnessError> {
    let seed = derive_seed(spec.seed, u64::from(index));
    let cfg = spec.sim_config(params, seed);
    let acfg = spec.analysis_config(params);
    let level = ((spec.analysis.eps * params.carrying_capacity as f64).floor() as u64).max(1);
    let (traj, attempts) = match &spec.conditioning {
        None => (sim::simulate(params, &cfg)?, 1),
        Some(c) => match sim::simulate_conditioned(params, &cfg, c.condition, spec.analysis.eps, c.max_attempts) {
            Ok((t, rejected)) => (t, rejected + 1),
            Err(SimError::RejectionBudgetExceeded(n)) => {
                return Ok(ReplicateOutcome {
                    index,
                    seed,
                    attempts: n,
                    accepted: false,
                    invaded: [false; 3],
                    final_state: "undetermined".into(),
                    sweep_duration: None,
                    final_entry: None,
                    invasion_time: [None; 3],
                    injected_at: None,
                    cycle_durations: vec![],
                    terminal: None,
                    events: 0,
                })
            }
            Err(e) => return Err(e.into()),
        },
    };
    let report = phase::analyze(&traj, &acfg, summary, &cfg.stop);
    let invasion_time = TypeIndex::ALL.map(|ty| phase::hitting_time(&traj, ty, level).ok().flatten());
    Ok(ReplicateOutcome {
        index,
        seed,
        attempts,
        accepted: true,
        invaded: [0, 1, 2].map(|i| traj.peak[i] >= level),
        final_state: report.final_state.label(),
        sweep_duration: report.sweep_duration,
        final_entry: report.final_entry,
        invasion_time,
        injected_at: traj.injected2_at,
        cycle_durations: report.cycles.cycles.iter().map(|c| c.duration).collect(),
        terminal: Some(traj.terminal),
        events: traj.events,
    })
}

// -------------------------------------------------------------- estimates ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    /// Sample size behind the estimate.
    pub n: usize,
}

/// Wilson score interval at 95%.
pub fn wilson(successes: usize, n: usize) -> Estimate {
    if n == 0 {
        return Estimate {
            point: f64::NAN,
            lo: 0.0,
            hi: 1.0,
            n,
        };
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    Estimate {
        point: p,
        lo: (centre - half).max(0.0),
        hi: (centre + half).min(1.0),
        n,
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = q * (n - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

/// Sample quantile with a 95% percentile-bootstrap interval.
pub fn bootstrap_quantile(data: &[f64], q: f64, seed: u64) -> Estimate {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let point = quantile_sorted(&sorted, q);
    if sorted.len() < 2 {
        return Estimate {
            point,
            lo: point,
            hi: point,
            n: sorted.len(),
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buf = vec![0.0; sorted.len()];
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in buf.iter_mut() {
            *slot = sorted[rng.random_range(0..sorted.len())];
        }
        buf.sort_by(f64::total_cmp);
        stats.push(quantile_sorted(&buf, q));
    }
    stats.sort_by(f64::total_cmp);
    Estimate {
        point,
        lo: quantile_sorted(&stats, 0.025),
        hi: quantile_sorted(&stats, 0.975),
        n: sorted.len(),
    }
}

fn estimate(spec: &ExperimentSpec, target: &Target, slot: usize, outs: &[ReplicateOutcome]) -> Option<Estimate> {
    let accepted: Vec<&ReplicateOutcome> = outs.iter().filter(|o| o.accepted).collect();
    let freq = |pred: &dyn Fn(&ReplicateOutcome) -> bool| {
        let hits = accepted.iter().filter(|o| pred(o)).count();
        Some(wilson(hits, accepted.len()))
    };
    let boot_seed = derive_seed(spec.seed, BOOTSTRAP_STREAM + slot as u64);
    let quant = |data: Vec<f64>, q: f64| {
        if data.is_empty() {
            None
        } else {
            Some(bootstrap_quantile(&data, q, boot_seed))
        }
    };
    match target {
        Target::InvasionProb { ty } => freq(&|o| o.invaded[ty.idx()]),
        Target::FinalStateFreq { state, invaded } => {
            freq(&|o| o.final_state == *state && invaded.iter().all(|t| o.invaded[t.idx()]))
        }
        Target::CycleCountFreq { at_least } => freq(&|o| o.cycle_durations.len() >= *at_least),
        Target::AcceptanceRate => {
            let attempts: u64 = outs.iter().map(|o| u64::from(o.attempts)).sum();
            Some(wilson(accepted.len(), attempts as usize))
        }
        Target::SweepDurationQuantile { q } => quant(accepted.iter().filter_map(|o| o.sweep_duration).collect(), *q),
        Target::InvasionTimeQuantile { ty, q, from_injection } => quant(
            accepted
                .iter()
                .filter_map(|o| o.shifted(o.invasion_time[ty.idx()]?, *from_injection))
                .collect(),
            *q,
        ),
        Target::FinalEntryQuantile { q, from_injection } => quant(
            accepted
                .iter()
                .filter_map(|o| o.shifted(o.final_entry?, *from_injection))
                .collect(),
            *q,
        ),
        Target::CycleDurationQuantile { index, q } => {
            quant(accepted.iter().filter_map(|o| o.cycle_durations.get(index - 1).copied()).collect(), *q)
        }
        Target::CycleRatioQuantile { index, q } => quant(
            accepted
                .iter()
                .filter_map(|o| Some(o.cycle_durations.get(*index)? / o.cycle_durations.get(index - 1)?))
                .collect(),
            *q,
        ),
    }
}

// ------------------------------------------------------------ predictions ---

/// Conditional mass of `pick` among branches compatible with `cond`.
fn conditional_mass(preds: &[Prediction], cond: Option<Condition>, pick: impl Fn(&Prediction) -> bool) -> Option<f64> {
    let admitted = |p: &Prediction| cond.is_none_or(|c| c.types().iter().all(|&i| p.invaders[i]));
    let total: f64 = preds.iter().filter(|p| admitted(p)).map(|p| p.probability).sum();
    if !(total > 0.0) {
        return None;
    }
    Some(preds.iter().filter(|p| admitted(p) && pick(p)).map(|p| p.probability).sum::<f64>() / total)
}

/// The branch carrying essentially all conditional mass, if any.
fn dominant(preds: &[Prediction], cond: Option<Condition>) -> Option<&Prediction> {
    preds
        .iter()
        .find(|p| conditional_mass(preds, cond, |b| std::ptr::eq(b, *p)).is_some_and(|m| m > 0.999))
}

fn predicted(
    target: &Target,
    preds: &[Prediction],
    summary: &FitnessSummary,
    params: &EcologyParams,
    cond: Option<Condition>,
) -> Option<f64> {
    let ln_k = params.log_k();
    let alpha = params.alpha.unwrap_or_default();
    match target {
        Target::InvasionProb { ty } => {
            if ty.idx() == 0 {
                return None;
            }
            conditional_mass(preds, cond, |p| p.invaders[ty.idx()])
        }
        Target::FinalStateFreq { state, invaded } => conditional_mass(preds, cond, |p| {
            predict::final_label(&p.final_state) == *state && invaded.iter().all(|t| p.invaders[t.idx()])
        }),
        Target::AcceptanceRate => {
            let c = cond?;
            Some(
                preds
                    .iter()
                    .filter(|p| c.types().iter().all(|&i| p.invaders[i]))
                    .map(|p| p.probability)
                    .sum(),
            )
        }
        Target::SweepDurationQuantile { q } if *q == 0.5 => dominant(preds, cond)?.duration_coeff.map(|d| d * ln_k),
        Target::FinalEntryQuantile {
            q,
            from_injection: true,
        } if *q == 0.5 => {
            let b = dominant(preds, cond)?;
            match b.branch {
                Branch::Both => predict::speedup_fitness(summary, alpha).ok().map(|s| ln_k / s.effective_fitness),
                Branch::SecondOnly => Some(ln_k / summary.s(2, 0)),
                _ => None,
            }
        }
        Target::CycleCountFreq { .. } => {
            predict::rps_cycle_prediction(summary, alpha, 1, params.carrying_capacity as f64).ok()?;
            conditional_mass(preds, cond, |p| p.final_state == PredictedFinal::RpsCycles)
        }
        Target::CycleDurationQuantile { index, q } if *q == 0.5 => {
            predict::rps_cycle_prediction(summary, alpha, *index as u32, params.carrying_capacity as f64)
                .ok()
                .map(|c| c.duration)
        }
        Target::CycleRatioQuantile { index, q } if *q == 0.5 => {
            predict::rps_cycle_prediction(summary, alpha, *index as u32, params.carrying_capacity as f64)
                .ok()
                .map(|c| c.ratio)
        }
        _ => None,
    }
}

// ----------------------------------------------------------------- report ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub name: String,
    pub target: Target,
    pub estimate: Option<Estimate>,
    pub prediction: Option<f64>,
    pub tolerance_kind: ToleranceKind,
    /// Slack used for the verdict; the target's own when it sets one.
    pub slack: f64,
    #[serde(default)]
    pub slack_override: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub base_seed: u64,
    pub replicates: u32,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub accepted: u32,
    pub attempts: u64,
    /// Replicates whose rejection budget ran out.
    pub exhausted: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub regime: Regime,
    pub estimates: Vec<TargetResult>,
    pub predictions: Vec<Prediction>,
    pub acceptance: Acceptance,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn all_pass(&self) -> bool {
        self.estimates.iter().all(|t| t.verdict != Verdict::Fail)
    }

    /// JSON without the wall-time field, for reproducibility comparisons.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.provenance.wall_time_s = 0.0;
        serde_json::to_string_pretty(&r).unwrap_or_default()
    }

    pub fn target(&self, name: &str) -> Option<&TargetResult> {
        self.estimates.iter().find(|t| t.name == name)
    }
}

fn slack_for(policy: &TolerancePolicy, kind: ToleranceKind) -> f64 {
    match kind {
        ToleranceKind::Frequency => policy.frequency_abs,
        ToleranceKind::Duration => policy.duration_rel,
        ToleranceKind::Ratio => policy.ratio_abs,
    }
}

/// Pass iff the prediction lies in the CI widened by the slack: absolute for
/// frequencies and ratios, relative to the prediction for durations.
pub fn judge(estimate: Option<Estimate>, prediction: Option<f64>, kind: ToleranceKind, slack: f64) -> Verdict {
    let (Some(e), Some(p)) = (estimate, prediction) else {
        return Verdict::NotApplicable;
    };
    if !e.point.is_finite() || !p.is_finite() {
        return Verdict::NotApplicable;
    }
    let widen = match kind {
        ToleranceKind::Duration => slack * p.abs(),
        ToleranceKind::Frequency | ToleranceKind::Ratio => slack,
    };
    if p >= e.lo - widen && p <= e.hi + widen {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Runs the experiment on `parallelism` worker threads. The report does not
/// depend on the thread count.
pub fn run(spec: &ExperimentSpec, parallelism: usize) -> Result<ExperimentReport, HarnessError> {
    run_detailed(spec, parallelism).map(|(r, _)| r)
}

pub fn run_detailed(spec: &ExperimentSpec, parallelism: usize) -> Result<(ExperimentReport, Vec<ReplicateOutcome>), HarnessError> {
    spec.validate()?;
    let started = Instant::now();
    let params = spec.params.resolve()?;
    let summary = FitnessSummary::new(&params);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let outs: Vec<ReplicateOutcome> = pool.install(|| {
        (0..spec.replicates)
            .into_par_iter()
            .map(|i| run_replicate(spec, &params, &summary, i))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let cond = spec.conditioning.as_ref().map(|c| c.condition);
    let preds = predict::predict(&params).unwrap_or_default();
    let estimates = spec
        .targets
        .iter()
        .enumerate()
        .map(|(slot, t)| {
            let kind = t.target.tolerance_kind();
            let est = estimate(spec, &t.target, slot, &outs);
            let prediction = t.prediction.or_else(|| predicted(&t.target, &preds, &summary, &params, cond));
            let slack = t.slack.unwrap_or_else(|| slack_for(&spec.tolerance, kind));
            TargetResult {
                name: t.target.name(),
                target: t.target.clone(),
                estimate: est,
                prediction,
                tolerance_kind: kind,
                slack,
                slack_override: t.slack,
                verdict: judge(est, prediction, kind, slack),
            }
        })
        .collect();
    let report = ExperimentReport {
        name: spec.name.clone(),
        regime: predict::regime(&summary, params.alpha),
        estimates,
        predictions: preds,
        acceptance: Acceptance {
            accepted: outs.iter().filter(|o| o.accepted).count() as u32,
            attempts: outs.iter().map(|o| u64::from(o.attempts)).sum(),
            exhausted: outs.iter().filter(|o| !o.accepted).count() as u32,
        },
        provenance: Provenance {
            base_seed: spec.seed,
            replicates: spec.replicates,
            wall_time_s: started.elapsed().as_secs_f64(),
        },
    };
    Ok((report, outs))
}

/// Re-judges every target under `policy`, keeping per-target overrides.
pub fn verify(report: &ExperimentReport, policy: &TolerancePolicy) -> (bool, String) {
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<40} {:>10} {:>21} {:>10} {:>8}  verdict",
        "target", "estimate", "95% CI", "predicted", "slack"
    );
    let mut ok = true;
    for t in &report.estimates {
        let slack = t.slack_override.unwrap_or_else(|| slack_for(policy, t.tolerance_kind));
        let v = judge(t.estimate, t.prediction, t.tolerance_kind, slack);
        ok &= v != Verdict::Fail;
        let (pt, ci) = match t.estimate {
            Some(e) => (format!("{:.4}", e.point), format!("[{:.4}, {:.4}]", e.lo, e.hi)),
            None => ("-".into(), "-".into()),
        };
        let pred = t.prediction.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            table,
            "{:<40} {:>10} {:>21} {:>10} {:>8}  {}",
            t.name,
            pt,
            ci,
            pred,
            slack,
            match v {
                Verdict::Pass => "PASS",
                Verdict::Fail => "FAIL",
                Verdict::NotApplicable => "n/a",
            }
        );
    }
    (ok, table)
}
