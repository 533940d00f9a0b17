//! Leading-order predictions for the two-mutation schedule: which regime the
//! arrival time falls in, the outcome branches with their probabilities,
//! final states and sweep durations, and the closed-form statements about
//! invasion speed, invasion probability and cycling.

pub mod table;

use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::ecology::{EcologyError, EcologyParams, FitnessSummary, TypeIndex};
use crate::lv::{self, LvError, Outcome, PointKind};
use table::{CaseTable, FinalToken, Leaf, Tree};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("case table: {0}")]
    Table(String),
    #[error("several cases match: {0}")]
    AmbiguousCase(String),
    #[error("no case matches sign pattern {0}")]
    UnhandledCase(String),
    #[error("no prediction in this regime: {0}")]
    NotPredictive(String),
    #[error("parameters do not fit the requested case: {0}")]
    CaseMismatch(String),
    #[error("condition fails: {0}")]
    ConditionsFail(String),
    #[error("no invasion-probability rule applies")]
    NoRuleApplies,
    #[error(transparent)]
    Ecology(#[from] EcologyError),
    #[error(transparent)]
    Lv(#[from] LvError),
}

/// Position of the second arrival relative to the first sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "regime", content = "reason")]
pub enum Regime {
    /// Mutant 2 arrives while mutant 1 is still rare, and mutant 1 reaches
    /// order K first.
    EarlyArrival,
    /// Mutant 2 arrives while mutant 1 is still rare and overtakes it.
    EarlyOvertake,
    /// Mutant 2 arrives after mutant 1 has settled, while the wild type is
    /// either still at order K or not yet extinct.
    LateArrival,
    /// No second mutation is scheduled.
    NoInterference,
    Invalid(String),
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::EarlyArrival => "early-arrival",
            Regime::EarlyOvertake => "early-overtake",
            Regime::LateArrival => "late-arrival",
            Regime::NoInterference => "no-interference",
            Regime::Invalid(_) => "invalid",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Invalid(r) => write!(f, "invalid ({r})"),
            other => f.write_str(other.label()),
        }
    }
}

fn strictly(name: &str, lhs: f64, rhs: f64) -> Result<bool, String> {
    if lhs == rhs {
        Err(format!("boundary: {name}"))
    } else {
        Ok(lhs < rhs)
    }
}

/// Classifies the arrival time `alpha` (in units of ln K).
pub fn regime(summary: &FitnessSummary, alpha: Option<f64>) -> Regime {
    let Some(alpha) = alpha else {
        return Regime::NoInterference;
    };
    let (s10, s20, s01) = (summary.s(1, 0), summary.s(2, 0), summary.s(0, 1));
    if !(s10 > 0.0) {
        return Regime::Invalid("mutant 1 is not beneficial when rare".into());
    }
    if !alpha.is_finite() {
        return Regime::Invalid("arrival time is not finite".into());
    }
    let inner = || -> Result<Regime, String> {
        if !strictly("alpha = 0", 0.0, alpha)? {
            return Ok(Regime::Invalid("mutant 2 arrives before mutant 1".into()));
        }
        let end_first = 1.0 / s10;
        if strictly("alpha = 1/S10", alpha, end_first)? {
            if !strictly("S20 = 0", 0.0, s20)? {
                return Ok(Regime::Invalid(
                    "mutant 2 arrives during the first sweep but cannot invade the resident".into(),
                ));
            }
            let overtake = end_first - 1.0 / s20;
            if overtake <= 0.0 || !strictly("alpha = 1/S10 - 1/S20", alpha, overtake)? {
                Ok(Regime::EarlyArrival)
            } else {
                Ok(Regime::EarlyOvertake)
            }
        } else if strictly("S01 = 0", 0.0, s01)?
            || strictly("alpha = 1/S10 + 1/|S01|", alpha, end_first + 1.0 / s01.abs())?
        {
            Ok(Regime::LateArrival)
        } else {
            Ok(Regime::Invalid("the wild type is already extinct when mutant 2 arrives".into()))
        }
    };
    inner().unwrap_or_else(Regime::Invalid)
}

/// Which mutants establish (survive their rare phase).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    NoneEstablish,
    FirstOnly,
    SecondOnly,
    Both,
}

impl Branch {
    pub fn label(self) -> &'static str {
        match self {
            Branch::NoneEstablish => "none",
            Branch::FirstOnly => "1-only",
            Branch::SecondOnly => "2-only",
            Branch::Both => "both",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseLabel {
    pub tree: Tree,
    pub letter: String,
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.tree {
            Tree::Early => "early",
            Tree::Late => "late",
        };
        write!(f, "{t}/{}", self.letter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictedFinal {
    Point { point: PointKind, density: [f64; 3] },
    /// The limit set is not determined by the signs alone.
    Ambiguous { candidates: Vec<PointKind>, classes: Option<String> },
    RpsCycles,
}

impl PredictedFinal {
    pub fn point(&self) -> Option<PointKind> {
        match self {
            PredictedFinal::Point { point, .. } => Some(*point),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub branch: Branch,
    pub case_label: Option<CaseLabel>,
    pub final_state: PredictedFinal,
    /// Sweep duration in units of ln K, measured from time 0.
    pub duration_coeff: Option<f64>,
    pub probability: f64,
    /// Which mutants reach `eps K` on this branch (entry 0 is unused).
    pub invaders: [bool; 3],
    pub notes: Vec<String>,
}

/// Density of a fixed point of the full system.
fn point_density(summary: &FitnessSummary, kind: PointKind) -> [f64; 3] {
    match kind {
        PointKind::Origin => [0.0; 3],
        PointKind::Axis(i) => summary.axis_point(i.idx()),
        PointKind::Planar(i, j) => summary
            .pair_point(TypeIndex::complement(i, j).idx())
            .unwrap_or([f64::NAN; 3]),
        PointKind::Interior => lv::interior_point(summary).map(|(n, _)| n).unwrap_or([f64::NAN; 3]),
    }
}

fn point(summary: &FitnessSummary, kind: PointKind) -> PredictedFinal {
    PredictedFinal::Point {
        point: kind,
        density: point_density(summary, kind),
    }
}

const W: TypeIndex = TypeIndex::WILD;
const M1: TypeIndex = TypeIndex::FIRST;
const M2: TypeIndex = TypeIndex::SECOND;

fn resolve_leaf(summary: &FitnessSummary, leaf: &Leaf) -> Result<PredictedFinal, PredictError> {
    let classes = leaf.classes.clone();
    Ok(match leaf.final_state {
        FinalToken::Extinct => point(summary, PointKind::Origin),
        FinalToken::Wild => point(summary, PointKind::Axis(W)),
        FinalToken::First => point(summary, PointKind::Axis(M1)),
        FinalToken::Second => point(summary, PointKind::Axis(M2)),
        FinalToken::Pair01 => point(summary, PointKind::Planar(W, M1)),
        FinalToken::Pair02 => point(summary, PointKind::Planar(W, M2)),
        FinalToken::Pair12 => point(summary, PointKind::Planar(M1, M2)),
        FinalToken::Interior => point(summary, PointKind::Interior),
        FinalToken::Cycles => PredictedFinal::RpsCycles,
        FinalToken::Ambiguous => PredictedFinal::Ambiguous {
            candidates: lv::classify(summary)
                .map(|q| match q.outcome {
                    Outcome::Bistable(c) | Outcome::AmbiguousPossiblyPeriodic(c) => c,
                    _ => vec![PointKind::Interior],
                })
                .unwrap_or_default(),
            classes,
        },
        FinalToken::Classify => match lv::classify(summary)?.outcome {
            Outcome::GlobalExclusion(i) => point(summary, PointKind::Axis(i)),
            Outcome::PlanarCoexistence(i, j) => point(summary, PointKind::Planar(i, j)),
            Outcome::InteriorCoexistence => point(summary, PointKind::Interior),
            Outcome::Bistable(c) | Outcome::AmbiguousPossiblyPeriodic(c) => PredictedFinal::Ambiguous {
                candidates: c,
                classes,
            },
        },
    })
}

fn has_zero_fitness(summary: &FitnessSummary) -> bool {
    (0..3).any(|i| (0..3).any(|j| i != j && summary.s(i, j) == 0.0))
        || (0..3).any(|k| summary.s_tri(k) == Some(0.0))
}

/// The both-establish branch resolved through `tree` at `alpha`, carrying
/// the given branch probability.
pub fn tree_prediction(
    summary: &FitnessSummary,
    tree: Tree,
    alpha: f64,
    probability: f64,
) -> Result<Prediction, PredictError> {
    let leaf = CaseTable::builtin().select(tree, summary, alpha)?;
    let final_state = resolve_leaf(summary, &leaf)?;
    let duration_coeff = match final_state {
        PredictedFinal::RpsCycles => None,
        _ => Some(leaf.duration),
    };
    let mut notes: Vec<String> = leaf.note.iter().cloned().collect();
    if duration_coeff.is_none() {
        notes.push(format!("all three types at order K after {:.4} ln K", leaf.duration));
    }
    Ok(Prediction {
        branch: Branch::Both,
        case_label: Some(CaseLabel {
            tree,
            letter: leaf.label,
        }),
        final_state,
        duration_coeff,
        probability,
        invaders: [false, true, leaf.second_invades],
        notes,
    })
}

/// Final state and duration when only mutant 1 establishes.
fn first_only(summary: &FitnessSummary, probability: f64, notes: Vec<String>) -> Prediction {
    let kind = if summary.s(0, 1) > 0.0 {
        PointKind::Planar(W, M1)
    } else {
        PointKind::Axis(M1)
    };
    Prediction {
        branch: Branch::FirstOnly,
        case_label: None,
        final_state: point(summary, kind),
        duration_coeff: Some(1.0 / summary.s(1, 0)),
        probability,
        invaders: [false, true, false],
        notes,
    }
}

/// Final state and duration when only mutant 2 establishes in the wild type.
fn second_only(summary: &FitnessSummary, alpha: f64, probability: f64) -> Prediction {
    let kind = if summary.s(0, 2) > 0.0 {
        PointKind::Planar(W, M2)
    } else {
        PointKind::Axis(M2)
    };
    Prediction {
        branch: Branch::SecondOnly,
        case_label: None,
        final_state: point(summary, kind),
        duration_coeff: Some(alpha + 1.0 / summary.s(2, 0)),
        probability,
        invaders: [false, false, true],
        notes: vec![],
    }
}

fn none_establish(summary: &FitnessSummary, probability: f64) -> Prediction {
    Prediction {
        branch: Branch::NoneEstablish,
        case_label: None,
        final_state: point(summary, PointKind::Axis(W)),
        duration_coeff: None,
        probability,
        invaders: [false; 3],
        notes: vec![],
    }
}

fn early_branches(summary: &FitnessSummary, alpha: f64) -> Result<Vec<Prediction>, PredictError> {
    let q1 = summary.s(1, 0) / summary.beta[1];
    let q2 = summary.s(2, 0) / summary.beta[2];
    let mut both = tree_prediction(summary, Tree::Early, alpha, q1 * q2)?;
    both.notes.extend(closed_form_notes(summary, alpha));
    Ok(vec![
        none_establish(summary, (1.0 - q1) * (1.0 - q2)),
        first_only(summary, q1 * (1.0 - q2), vec![]),
        second_only(summary, alpha, (1.0 - q1) * q2),
        both,
    ])
}

fn swap_kind(kind: PointKind) -> PointKind {
    let s = |t: TypeIndex| match t.idx() {
        1 => M2,
        2 => M1,
        _ => t,
    };
    match kind {
        PointKind::Axis(i) => PointKind::Axis(s(i)),
        PointKind::Planar(i, j) => {
            let (a, b) = (s(i), s(j));
            if a.idx() < b.idx() {
                PointKind::Planar(a, b)
            } else {
                PointKind::Planar(b, a)
            }
        }
        other => other,
    }
}

/// Relabels a final state with mutants 1 and 2 exchanged.
pub fn swap_final(f: PredictedFinal) -> PredictedFinal {
    match f {
        PredictedFinal::Point { point, density } => PredictedFinal::Point {
            point: swap_kind(point),
            density: [density[0], density[2], density[1]],
        },
        PredictedFinal::Ambiguous { candidates, classes } => PredictedFinal::Ambiguous {
            candidates: candidates.into_iter().map(swap_kind).collect(),
            classes,
        },
        PredictedFinal::RpsCycles => PredictedFinal::RpsCycles,
    }
}

/// Exchanges the names of types 1 and 2 in a table note.
fn swap_type_names(note: &str) -> String {
    note.replace("type 1", "type \u{0}")
        .replace("type 2", "type 1")
        .replace("type \u{0}", "type 2")
        .replace("mutant 1", "mutant \u{0}")
        .replace("mutant 2", "mutant 1")
        .replace("mutant \u{0}", "mutant 2")
}

/// Overtaking regime: the early tree with the mutants exchanged, the arrival
/// time negated and every duration shifted by the arrival time.
fn overtake_branches(params: &EcologyParams, summary: &FitnessSummary, alpha: f64) -> Result<Vec<Prediction>, PredictError> {
    let swapped = FitnessSummary::new(&params.swap_mutants());
    let q1 = summary.s(1, 0) / summary.beta[1];
    let q2 = summary.s(2, 0) / summary.beta[2];
    let mut both = tree_prediction(&swapped, Tree::Early, -alpha, q1 * q2)?;
    both.final_state = swap_final(both.final_state);
    both.duration_coeff = both.duration_coeff.map(|d| d + alpha);
    both.invaders.swap(1, 2);
    both.notes = both.notes.iter().map(|n| swap_type_names(n)).collect();
    both.notes.push("mutant 2 reaches order K before mutant 1; types 1 and 2 exchanged in the case tree".into());
    Ok(vec![
        none_establish(summary, (1.0 - q1) * (1.0 - q2)),
        first_only(summary, q1 * (1.0 - q2), vec![]),
        second_only(summary, alpha, (1.0 - q1) * q2),
        both,
    ])
}

fn late_branches(summary: &FitnessSummary, alpha: f64) -> Result<Vec<Prediction>, PredictError> {
    let q1 = summary.s(1, 0) / summary.beta[1];
    let q2 = summary.s(2, 0) / summary.beta[2];
    let (s01, s21) = (summary.s(0, 1), summary.s(2, 1));
    let mut out = Vec::new();
    if summary.s(2, 0) > 0.0 {
        out.push(none_establish(summary, (1.0 - q1) * (1.0 - q2)));
        out.push(second_only(summary, alpha, (1.0 - q1) * q2));
    } else {
        out.push(none_establish(summary, 1.0 - q1));
    }
    // Probability that mutant 2 establishes in the resident left by mutant 1.
    let q2_late = if s01 > 0.0 {
        let s201 = summary.s_tri(2).ok_or_else(|| {
            PredictError::NotPredictive("the wild type and mutant 1 do not coexist".into())
        })?;
        (s201 / summary.beta[2]).max(0.0)
    } else {
        (s21 / summary.beta[2]).max(0.0)
    };
    if q2_late < 1.0 && q2_late > 0.0 {
        out.push(first_only(
            summary,
            q1 * (1.0 - q2_late),
            vec!["mutant 2 is lost after arriving in the mutant 1 resident".into()],
        ));
    }
    // A leaf with q2_late = 0 still absorbs the whole q1 weight: mutant 2
    // cannot invade, and the table row records the outcome.
    let weight = if q2_late > 0.0 { q1 * q2_late } else { q1 };
    let mut leaf = tree_prediction(summary, Tree::Late, alpha, weight)?;
    leaf.notes.extend(closed_form_notes(summary, alpha));
    if q2_late == 0.0 {
        leaf.branch = Branch::FirstOnly;
    }
    out.push(leaf);
    Ok(out)
}

/// All outcome branches for `params` with leading-order probabilities.
pub fn predict(params: &EcologyParams) -> Result<Vec<Prediction>, PredictError> {
    params.validate()?;
    let summary = FitnessSummary::new(params);
    if has_zero_fitness(&summary) {
        return Err(PredictError::NotPredictive("an invasion fitness is exactly zero".into()));
    }
    match regime(&summary, params.alpha) {
        Regime::EarlyArrival => early_branches(&summary, params.alpha.unwrap_or_default()),
        Regime::EarlyOvertake => overtake_branches(params, &summary, params.alpha.unwrap_or_default()),
        Regime::LateArrival => late_branches(&summary, params.alpha.unwrap_or_default()),
        Regime::NoInterference => Ok(single_mutant(&summary)),
        Regime::Invalid(r) => Err(PredictError::NotPredictive(r)),
    }
}

fn single_mutant(summary: &FitnessSummary) -> Vec<Prediction> {
    let q1 = summary.s(1, 0) / summary.beta[1];
    let mut p = first_only(summary, q1, vec![]);
    if summary.s(0, 1) < 0.0 {
        p.duration_coeff = Some(single_sweep_fixation_coeff(summary));
        p.notes.push("duration runs until the wild type is extinct".into());
    }
    vec![none_establish(summary, 1.0 - q1), p]
}

/// Duration of a complete single sweep: growth of mutant 1, then decay
/// of the wild type.
pub fn single_sweep_fixation_coeff(summary: &FitnessSummary) -> f64 {
    1.0 / summary.s(1, 0) + 1.0 / summary.s(0, 1).abs()
}

fn closed_form_notes(summary: &FitnessSummary, alpha: f64) -> Vec<String> {
    let mut notes = Vec::new();
    if let Ok(shift) = speedup_fitness(summary, alpha) {
        notes.push(format!(
            "invasion of mutant 2 {} by mutant 1: effective fitness {:.4} against {:.4}",
            match shift.direction {
                Direction::Speedup => "sped up",
                Direction::Slowdown => "slowed down",
            },
            shift.effective_fitness,
            summary.s(2, 0)
        ));
    }
    if let Ok(v) = invasion_probability_prediction(summary, alpha) {
        notes.push(match v.effect {
            InvasionEffect::Prevented => "mutant 1 prevents the invasion of mutant 2".to_string(),
            InvasionEffect::Enabled => "mutant 1 enables the invasion of mutant 2".to_string(),
        });
    }
    if rps_cycle_prediction(summary, alpha, 1, 2.0).is_ok() {
        notes.push("cyclic dominance: repeated cycles of the three types".into());
    }
    notes
}

// ------------------------------------------------------------ speed shift ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Speedup,
    Slowdown,
}

/// Resident that mutant 2 grows against once mutant 1 has swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftRoute {
    /// Mutant 1 alone.
    FirstResident,
    /// The wild type and mutant 1 at their coexistence point.
    CoexistingPair,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedShift {
    pub route: ShiftRoute,
    pub direction: Direction,
    /// Fitness of mutant 2 in the resident it eventually invades.
    pub resident_fitness: f64,
    /// Constant rate that gives the same invasion time, measured from the
    /// arrival of mutant 2.
    pub effective_fitness: f64,
}

/// Effective invasion rate for growth at `s20` until `1/s10` and at `s`
/// afterwards, starting from `alpha`.
pub fn tilde_fitness(s: f64, s10: f64, s20: f64, alpha: f64) -> f64 {
    1.0 / (1.0 / s + (1.0 / s10 - alpha) * (1.0 - s20 / s))
}

pub fn speedup_fitness(summary: &FitnessSummary, alpha: f64) -> Result<SpeedShift, PredictError> {
    let s = |i, j| summary.s(i, j);
    if !(s(0, 2) < 0.0 && s(1, 2) < 0.0) {
        return Err(PredictError::CaseMismatch("requires S02 < 0 and S12 < 0".into()));
    }
    let (route, resident_fitness) = if s(0, 1) < 0.0 && s(2, 1) > 0.0 {
        (ShiftRoute::FirstResident, s(2, 1))
    } else if s(0, 1) > 0.0 && summary.s_tri(2).is_some_and(|v| v > 0.0) {
        (ShiftRoute::CoexistingPair, summary.s_tri(2).unwrap_or_default())
    } else {
        return Err(PredictError::CaseMismatch(
            "mutant 2 cannot invade the resident left by mutant 1".into(),
        ));
    };
    let s20 = s(2, 0);
    let direction = if resident_fitness > s20 {
        Direction::Speedup
    } else if resident_fitness < s20 {
        Direction::Slowdown
    } else {
        return Err(PredictError::CaseMismatch("resident fitness equals S20".into()));
    };
    Ok(SpeedShift {
        route,
        direction,
        resident_fitness,
        effective_fitness: tilde_fitness(resident_fitness, s(1, 0), s20, alpha),
    })
}

// ----------------------------------------------------- invasion probability ---

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvasionEffect {
    /// Mutant 2 could invade the wild type but not what mutant 1 leaves.
    Prevented,
    /// Mutant 2 cannot invade the wild type but can invade after mutant 1.
    Enabled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvasionVerdict {
    pub effect: InvasionEffect,
    pub condition: &'static str,
    /// Invasion probability of mutant 2 given that mutant 1 establishes.
    pub given_first_established: f64,
    /// Invasion probability of mutant 2 under the two-mutation schedule.
    pub unconditional: f64,
    /// Invasion probability of mutant 2 arriving alone in the wild type.
    pub without_interference: f64,
}

pub fn invasion_probability_prediction(summary: &FitnessSummary, alpha: f64) -> Result<InvasionVerdict, PredictError> {
    let s = |i, j| summary.s(i, j);
    let (q1, b2) = (s(1, 0) / summary.beta[1], summary.beta[2]);
    let s201 = summary.s_tri(2);
    let reg = regime(summary, Some(alpha));
    let alone = (s(2, 0) / b2).max(0.0);
    let prevented = |condition| InvasionVerdict {
        effect: InvasionEffect::Prevented,
        condition,
        given_first_established: 0.0,
        unconditional: (1.0 - q1) * alone,
        without_interference: alone,
    };
    match reg {
        Regime::EarlyArrival => {
            if s(0, 1) > 0.0 && s201.is_some_and(|v| v < 0.0) {
                return Ok(prevented("S01 > 0, S2(01) < 0, early arrival"));
            }
            if s(0, 1) < 0.0 && s(2, 1) < 0.0 {
                return Ok(prevented("S01 < 0, S21 < 0, early arrival"));
            }
        }
        Regime::LateArrival => {
            if s(0, 1) < 0.0 && s(2, 1) < 0.0 && s(2, 0) > 0.0 {
                return Ok(prevented("S01 < 0, S21 < 0, S20 > 0, late arrival"));
            }
            if s(2, 0) < 0.0 {
                let enabled = |condition, rate: f64| InvasionVerdict {
                    effect: InvasionEffect::Enabled,
                    condition,
                    given_first_established: rate / b2,
                    unconditional: q1 * rate / b2,
                    without_interference: 0.0,
                };
                if s(0, 1) > 0.0 && s201.is_some_and(|v| v > 0.0) {
                    return Ok(enabled("S01 > 0, S2(01) > 0, S20 < 0, late arrival", s201.unwrap_or_default()));
                }
                if s(0, 1) < 0.0 && s(2, 1) > 0.0 {
                    let lag = alpha - 1.0 / s(1, 0);
                    let window = 1.0 / s(0, 1).abs() - 1.0 / s(2, 1);
                    let type0_regrows_safely = s(1, 2) > 0.0 || s(0, 2) < 0.0;
                    if (lag > 0.0 && lag < window && type0_regrows_safely) || lag > window {
                        return Ok(enabled("S01 < 0 < S21, S20 < 0, late arrival", s(2, 1)));
                    }
                }
            }
        }
        _ => {}
    }
    Err(PredictError::NoRuleApplies)
}

// ------------------------------------------------------------------ cycles ---

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CyclePrediction {
    /// Probability that at least `l` cycles occur.
    pub probability: f64,
    /// Duration of cycle `l` in absolute time.
    pub duration: f64,
    /// Ratio of consecutive cycle durations.
    pub ratio: f64,
}

pub fn rps_cycle_prediction(
    summary: &FitnessSummary,
    alpha: f64,
    l: u32,
    carrying_capacity: f64,
) -> Result<CyclePrediction, PredictError> {
    let s = |i, j| summary.s(i, j);
    let fail = |m: &str| Err(PredictError::ConditionsFail(m.to_string()));
    if l == 0 {
        return fail("cycle index must be at least 1");
    }
    if !(s(0, 1) < 0.0 && s(1, 0) > 0.0) {
        return fail("S01 < 0 < S10");
    }
    if !(s(1, 2) < 0.0 && s(2, 1) > 0.0) {
        return fail("S12 < 0 < S21");
    }
    if !(s(2, 0) < 0.0 && s(0, 2) > 0.0) {
        return fail("S20 < 0 < S02");
    }
    let (a01, a12, a20) = (s(0, 1).abs(), s(1, 2).abs(), s(2, 0).abs());
    let (s02, s10, s21) = (s(0, 2), s(1, 0), s(2, 1));
    let lag = alpha - 1.0 / s10;
    if !(lag > 0.0) {
        return fail("alpha > 1/S10");
    }
    let bound = (1.0 / a01).min(s02 / (a12 * a01)).min(s02 * s10 / (a12 * a01 * a20)) - 1.0 / s21;
    if !(lag < bound) {
        return fail("alpha - 1/S10 below the cycling bound");
    }
    let ratio = a01 * a12 * a20 / (s02 * s21 * s10);
    let first = (lag + 1.0 / s21) * (1.0 + a01 / s02 + a01 * a12 / (s02 * s10));
    Ok(CyclePrediction {
        probability: s10 / summary.beta[1] * s21 / summary.beta[2],
        duration: first * ratio.powi(l as i32 - 1) * carrying_capacity.ln(),
        ratio,
    })
}

// --------------------------------------------------------------- rendering ---

pub fn final_label(f: &PredictedFinal) -> String {
    match f {
        PredictedFinal::Point { point, .. } => crate::phase::point_label(*point),
        PredictedFinal::Ambiguous { .. } => "ambiguous".into(),
        PredictedFinal::RpsCycles => "rps-cycles".into(),
    }
}

/// Plain-text table, one line per branch.
pub fn render_text(preds: &[Prediction]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8} {:<8} {:<12} {:>10} {:>12}  notes", "branch", "case", "final", "prob", "duration");
    for p in preds {
        let case = p.case_label.as_ref().map(|c| c.to_string()).unwrap_or_else(|| "-".into());
        let dur = p.duration_coeff.map(|d| format!("{d:.4} lnK")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<8} {:<8} {:<12} {:>10.4} {:>12}  {}",
            p.branch.label(),
            case,
            final_label(&p.final_state),
            p.probability,
            dur,
            p.notes.join("; ")
        );
    }
    out
}
