//! Deterministic competitive Lotka-Volterra dynamics
//! `dn_i/dt = n_i (rho_i - sum_j C_ij n_j)` on two or three of the types.

use std::fmt::{self, Write as _};
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecology::{pair_of, EcologyParams, FitnessSummary, TypeIndex, FEASIBILITY_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LvError {
    #[error("step size underflow at t = {t}")]
    StepFailure { t: f64 },
    #[error("trajectory did not settle within horizon {horizon}")]
    NotSettled { horizon: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("degenerate system: {0}")]
    Degenerate(String),
    #[error("sign pattern is not the cyclic one: {0}")]
    WrongSignPattern(String),
    #[error("no diagonal Volterra-Lyapunov weights found")]
    NotFound,
}

/// An LV system over a subset of the three types. Inactive coordinates are
/// held at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LvSystem {
    pub growth: [f64; 3],
    pub comp: [[f64; 3]; 3],
    pub active: [bool; 3],
}

impl LvSystem {
    pub fn new(params: &EcologyParams, types: &[TypeIndex]) -> Result<Self, LvError> {
        if types.is_empty() || types.len() > 3 {
            return Err(LvError::Invalid("need one to three types".into()));
        }
        let mut active = [false; 3];
        for t in types {
            if active[t.idx()] {
                return Err(LvError::Invalid(format!("type {t} listed twice")));
            }
            active[t.idx()] = true;
        }
        Ok(LvSystem {
            growth: TypeIndex::ALL.map(|i| params.growth(i)),
            comp: params.comp,
            active,
        })
    }

    pub fn full(params: &EcologyParams) -> Self {
        Self::new(params, &TypeIndex::ALL).expect("three distinct types")
    }

    pub fn from_summary(summary: &FitnessSummary) -> Self {
        LvSystem {
            growth: summary.rho,
            comp: summary.comp,
            active: [true; 3],
        }
    }

    pub fn rhs(&self, n: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            if self.active[i] {
                let load: f64 = (0..3).filter(|&j| self.active[j]).map(|j| self.comp[i][j] * n[j]).sum();
                out[i] = n[i] * (self.growth[i] - load);
            }
        }
        out
    }

    fn project(&self, mut z: [f64; 3]) -> [f64; 3] {
        for (zi, &on) in z.iter_mut().zip(&self.active) {
            if !on {
                *zi = 0.0;
            }
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OdeTerminal {
    Converged,
    HorizonReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<[f64; 3]>,
    pub terminal: OdeTerminal,
}

impl OdeSolution {
    pub fn last(&self) -> [f64; 3] {
        *self.states.last().expect("solution has at least the initial point")
    }

    /// State at time `t` by linear interpolation between stored points.
    pub fn at(&self, t: f64) -> [f64; 3] {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.states[0];
        }
        if k >= self.times.len() {
            return self.last();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.states[k - 1], self.states[k]);
        [0, 1, 2].map(|i| a[i] + w * (b[i] - a[i]))
    }

    /// Writes `t,n0,n1,n2`, either every stored step or on a fixed stride.
    pub fn write_csv<W: io::Write>(&self, mut w: W, stride: Option<f64>) -> io::Result<()> {
        writeln!(w, "t,n0,n1,n2")?;
        match stride {
            None => {
                for (t, n) in self.times.iter().zip(&self.states) {
                    writeln!(w, "{t},{},{},{}", n[0], n[1], n[2])?;
                }
            }
            Some(dt) => {
                let end = *self.times.last().unwrap_or(&0.0);
                let mut k = 0u64;
                loop {
                    let t = k as f64 * dt;
                    if t > end + 1e-12 {
                        break;
                    }
                    let n = self.at(t);
                    writeln!(w, "{t},{},{},{}", n[0], n[1], n[2])?;
                    k += 1;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Stop early once `max |dn/dt|` falls below this.
    pub rest_tol: Option<f64>,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: 1e-8,
            atol: 1e-12,
            max_step: f64::INFINITY,
            rest_tol: None,
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Adaptive Dormand-Prince integration. Steps that would make a coordinate
/// negative are rejected and retried with a smaller step.
pub fn integrate(sys: &LvSystem, z0: [f64; 3], horizon: f64, opts: IntegrateOptions) -> Result<OdeSolution, LvError> {
    if z0.iter().any(|&z| !(z >= 0.0 && z.is_finite())) {
        return Err(LvError::Invalid(format!("initial state must be finite and nonnegative: {z0:?}")));
    }
    if !(horizon > 0.0) {
        return Err(LvError::Invalid(format!("horizon must be positive: {horizon}")));
    }
    let mut y = sys.project(z0);
    let mut t = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![y];
    let mut h = (1e-3f64).min(opts.max_step).min(horizon);
    let mut k = [[0.0; 3]; 7];
    k[0] = sys.rhs(&y);
    let mut terminal = OdeTerminal::HorizonReached;
    while horizon - t > 1e-12 * horizon.max(1.0) {
        if let Some(tol) = opts.rest_tol {
            if k[0].iter().all(|v| v.abs() < tol) {
                terminal = OdeTerminal::Converged;
                break;
            }
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(LvError::StepFailure { t });
        }
        h = h.min(horizon - t).min(opts.max_step);
        for s in 1..7 {
            let mut ys = y;
            for (r, a) in A[s].iter().enumerate().take(s) {
                for i in 0..3 {
                    ys[i] += h * a * k[r][i];
                }
            }
            k[s] = sys.rhs(&ys);
        }
        let mut y5 = y;
        let mut err = 0.0f64;
        for i in 0..3 {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let scale = opts.atol + opts.rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (d5 - d4)).abs() / scale);
        }
        let negative = y5.iter().any(|&v| v < 0.0);
        if err <= 1.0 && !negative {
            t += h;
            y = y5;
            k[0] = k[6];
            times.push(t);
            states.push(y);
        }
        let factor = if negative {
            0.25
        } else if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
    Ok(OdeSolution { times, states, terminal })
}

fn l1(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).abs()).sum()
}

/// The attractor of the two-type system on `i` and `j`, as a density triple.
pub fn stable_equilibrium_2d(summary: &FitnessSummary, i: TypeIndex, j: TypeIndex) -> Option<[f64; 3]> {
    let (a, b) = (i.idx(), j.idx());
    let (s_ab, s_ba) = (summary.s(a, b), summary.s(b, a));
    if s_ab > 0.0 && s_ba > 0.0 {
        summary.pair_point(TypeIndex::complement(i, j).idx())
    } else if s_ab < 0.0 && s_ba > 0.0 {
        Some(summary.axis_point(b))
    } else if s_ba < 0.0 && s_ab > 0.0 {
        Some(summary.axis_point(a))
    } else {
        None
    }
}

/// Settling time: the first time after which the solution stays within
/// `eps^2` (L1) of `target`. Staying is checked over a window ten times the
/// entry time, capped at `max_horizon`.
pub fn time_to_equilibrium(
    sys: &LvSystem,
    z0: [f64; 3],
    target: [f64; 3],
    eps: f64,
    max_horizon: f64,
) -> Result<f64, LvError> {
    let radius = eps * eps;
    if l1(&z0, &target) < radius && sys.rhs(&z0).iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let opts = IntegrateOptions {
        max_step: 0.05,
        ..IntegrateOptions::default()
    };
    let mut horizon = 50.0f64.min(max_horizon);
    loop {
        let sol = integrate(sys, z0, horizon, opts)?;
        let mut entry = None;
        for w in (1..sol.times.len()).rev() {
            if l1(&sol.states[w - 1], &target) >= radius {
                if l1(&sol.states[w], &target) >= radius {
                    break;
                }
                // Linear interpolation of the last crossing.
                let (d0, d1) = (l1(&sol.states[w - 1], &target), l1(&sol.states[w], &target));
                let frac = (d0 - radius) / (d0 - d1);
                entry = Some(sol.times[w - 1] + frac * (sol.times[w] - sol.times[w - 1]));
                break;
            }
            if w == 1 {
                entry = Some(0.0);
            }
        }
        match entry {
            Some(s) if horizon >= 11.0 * s || horizon >= max_horizon => return Ok(s),
            _ if horizon >= max_horizon => return Err(LvError::NotSettled { horizon }),
            Some(s) => horizon = (11.0 * s).min(max_horizon),
            None => horizon = (horizon * 4.0).min(max_horizon),
        }
    }
}

/// Worst settling time over initial conditions near the resident type 0
/// equilibrium with a small invader population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstCase {
    pub time: f64,
    pub start: [f64; 3],
}

pub fn worst_case_settling(
    params: &EcologyParams,
    invader: TypeIndex,
    eps: f64,
    grid: usize,
) -> Result<WorstCase, LvError> {
    if invader == TypeIndex::WILD {
        return Err(LvError::Invalid("invader must be a mutant type".into()));
    }
    let summary = FitnessSummary::new(params);
    if !(summary.s(invader.idx(), 0) > 0.0) {
        return Err(LvError::Invalid("invader cannot invade the resident".into()));
    }
    let target = stable_equilibrium_2d(&summary, TypeIndex::WILD, invader)
        .ok_or_else(|| LvError::Degenerate("no stable two-type equilibrium".into()))?;
    let sys = LvSystem::new(params, &[TypeIndex::WILD, invader])?;
    let c = &params.comp;
    let radius = 3.0 * eps * (c[0][1] + c[0][2]) / c[0][0];
    let nbar0 = summary.nbar[0];
    let lo = (nbar0 - radius).max(nbar0 * 1e-3);
    let hi = nbar0 + radius;
    let span = |g: usize, lo: f64, hi: f64| -> Vec<f64> {
        if g <= 1 {
            vec![0.5 * (lo + hi)]
        } else {
            (0..g).map(|k| lo + (hi - lo) * k as f64 / (g - 1) as f64).collect()
        }
    };
    let mut worst = WorstCase {
        time: f64::NEG_INFINITY,
        start: [0.0; 3],
    };
    for &r in &span(grid, lo, hi) {
        for &m in &span(grid, eps / 2.0, eps) {
            let mut z = [0.0; 3];
            z[0] = r;
            z[invader.idx()] = m;
            let t = time_to_equilibrium(&sys, z, target, eps, 1e5)?;
            if t > worst.time {
                worst = WorstCase { time: t, start: z };
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Origin,
    Axis(TypeIndex),
    /// The pair of types that are present.
    Planar(TypeIndex, TypeIndex),
    Interior,
}

impl fmt::Display for PointKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointKind::Origin => write!(f, "origin"),
            PointKind::Axis(i) => write!(f, "axis {i}"),
            PointKind::Planar(i, j) => write!(f, "pair {i}{j}"),
            PointKind::Interior => write!(f, "interior"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPoint {
    pub kind: PointKind,
    pub location: [f64; 3],
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    GlobalExclusion(TypeIndex),
    PlanarCoexistence(TypeIndex, TypeIndex),
    InteriorCoexistence,
    Bistable(Vec<PointKind>),
    /// A unique interior point whose neighbourhood may carry periodic
    /// orbits; the candidate limit sets are listed.
    AmbiguousPossiblyPeriodic(Vec<PointKind>),
}

fn join(kinds: &[PointKind]) -> String {
    kinds.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::GlobalExclusion(i) => write!(f, "type {i} excludes the others"),
            Outcome::PlanarCoexistence(i, j) => write!(f, "types {i} and {j} coexist"),
            Outcome::InteriorCoexistence => write!(f, "all three types coexist"),
            Outcome::Bistable(k) => write!(f, "bistable between {}", join(k)),
            Outcome::AmbiguousPossiblyPeriodic(k) => write!(f, "ambiguous, possibly periodic; candidates {}", join(k)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualitativeOutcome {
    pub fixed_points: Vec<FixedPoint>,
    pub outcome: Outcome,
    pub permanent: Option<bool>,
    /// Filled by `classify_certified` only.
    pub vl_certificate: Option<[f64; 3]>,
    /// Signs of S01 S02 S10 S12 S20 S21, then of S_0(12) S_1(02) S_2(01)
    /// (`.` where the pair is infeasible).
    pub sign_pattern: String,
}

fn sign_char(x: Option<f64>) -> char {
    match x {
        Some(v) if v > 0.0 => '+',
        Some(v) if v < 0.0 => '-',
        Some(_) => '0',
        None => '.',
    }
}

pub fn sign_pattern(summary: &FitnessSummary) -> String {
    let mut out = String::new();
    for (i, j) in [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)] {
        out.push(sign_char(Some(summary.s(i, j))));
    }
    out.push(' ');
    for k in 0..3 {
        out.push(sign_char(summary.s_tri(k)));
    }
    out
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Solution of `C n = rho` by Cramer's rule, with the determinant.
pub fn interior_point(summary: &FitnessSummary) -> Option<([f64; 3], f64)> {
    let c = &summary.comp;
    let det = det3(c);
    if det == 0.0 {
        return None;
    }
    let mut n = [0.0; 3];
    for (col, slot) in n.iter_mut().enumerate() {
        let mut m = *c;
        for (m_row, &r) in m.iter_mut().zip(&summary.rho) {
            m_row[col] = r;
        }
        *slot = det3(&m) / det;
    }
    Some((n, det))
}

/// Routh-Hurwitz test on the Jacobian `-diag(n) C` at an interior point.
fn interior_locally_stable(n: &[f64; 3], c: &[[f64; 3]; 3]) -> bool {
    let mut j = [[0.0; 3]; 3];
    for r in 0..3 {
        for s in 0..3 {
            j[r][s] = -n[r] * c[r][s];
        }
    }
    let trace = j[0][0] + j[1][1] + j[2][2];
    let minors = j[0][0] * j[1][1] - j[0][1] * j[1][0] + j[0][0] * j[2][2] - j[0][2] * j[2][0]
        + j[1][1] * j[2][2]
        - j[1][2] * j[2][1];
    let (a2, a1, a0) = (-trace, minors, -det3(&j));
    a2 > 0.0 && a0 > 0.0 && a2 * a1 > a0
}

pub fn classify(summary: &FitnessSummary) -> Result<QualitativeOutcome, LvError> {
    if summary.nbar.iter().any(|&n| !(n > 0.0)) {
        return Err(LvError::Invalid("every type must be viable alone".into()));
    }
    let s = |i: usize, j: usize| summary.s(i, j);
    let mut points = vec![FixedPoint {
        kind: PointKind::Origin,
        location: [0.0; 3],
        stable: false,
    }];
    for i in TypeIndex::ALL {
        let (a, b) = pair_of(i);
        points.push(FixedPoint {
            kind: PointKind::Axis(i),
            location: summary.axis_point(i.idx()),
            stable: s(a.idx(), i.idx()) < 0.0 && s(b.idx(), i.idx()) < 0.0,
        });
    }
    for k in TypeIndex::ALL {
        let (i, j) = pair_of(k);
        if let Some(loc) = summary.pair_point(k.idx()) {
            let in_plane = s(i.idx(), j.idx()) > 0.0 && s(j.idx(), i.idx()) > 0.0;
            let transversal = summary.s_tri(k.idx()).is_some_and(|v| v < 0.0);
            points.push(FixedPoint {
                kind: PointKind::Planar(i, j),
                location: loc,
                stable: in_plane && transversal,
            });
        }
    }
    let interior = interior_point(summary).filter(|(n, _)| n.iter().all(|&v| v > FEASIBILITY_TOL));
    if let Some((n, _)) = interior {
        points.push(FixedPoint {
            kind: PointKind::Interior,
            location: n,
            stable: interior_locally_stable(&n, &summary.comp),
        });
    }
    let boundary: Vec<PointKind> = points
        .iter()
        .filter(|p| p.stable && p.kind != PointKind::Interior)
        .map(|p| p.kind)
        .collect();
    let all_pairs_invadable = (0..3).all(|i| (0..3).all(|j| i == j || s(i, j) > 0.0));
    let all_pairs_exclusive = (0..3).all(|i| (0..3).all(|j| i == j || s(i, j) < 0.0));

    let outcome = match interior {
        // A feasible interior point of index +1 on the carrying simplex.
        Some((_, det)) if det > 0.0 => {
            if boundary.is_empty() && all_pairs_invadable && (0..3).all(|k| summary.s_tri(k).is_some_and(|v| v > 0.0)) {
                Outcome::InteriorCoexistence
            } else if all_pairs_exclusive {
                Outcome::Bistable(boundary)
            } else {
                let mut cands = boundary;
                cands.push(PointKind::Interior);
                Outcome::AmbiguousPossiblyPeriodic(cands)
            }
        }
        _ => match boundary.as_slice() {
            [PointKind::Axis(i)] => Outcome::GlobalExclusion(*i),
            [PointKind::Planar(i, j)] => Outcome::PlanarCoexistence(*i, *j),
            [] if summary.is_rps_cycle() || mirrored_cycle(summary) => Outcome::AmbiguousPossiblyPeriodic(vec![]),
            [] => {
                return Err(LvError::Degenerate(format!(
                    "no attractor identified for sign pattern {}",
                    sign_pattern(summary)
                )))
            }
            _ => Outcome::Bistable(boundary),
        },
    };
    let permanent = permanence_check(summary).ok();
    Ok(QualitativeOutcome {
        fixed_points: points,
        outcome,
        permanent,
        vl_certificate: None,
        sign_pattern: sign_pattern(summary),
    })
}

/// `classify` plus a search for diagonal Volterra-Lyapunov weights, which
/// costs a grid search over the weight simplex.
pub fn classify_certified(summary: &FitnessSummary) -> Result<QualitativeOutcome, LvError> {
    let mut q = classify(summary)?;
    q.vl_certificate = vl_certificate(&summary.comp).ok();
    Ok(q)
}

fn mirrored_cycle(summary: &FitnessSummary) -> bool {
    use crate::ecology::PairOrder::Less;
    summary.order(0, 2) == Less && summary.order(2, 1) == Less && summary.order(1, 0) == Less
}

/// Permanence verdict under the cyclic pattern 0 < 1 < 2 < 0.
pub fn permanence_check(summary: &FitnessSummary) -> Result<bool, LvError> {
    let s = |i: usize, j: usize| summary.s(i, j);
    let cyclic = s(0, 1) < 0.0 && s(1, 0) > 0.0 && s(1, 2) < 0.0 && s(2, 1) > 0.0 && s(2, 0) < 0.0 && s(0, 2) > 0.0;
    if !cyclic {
        return Err(LvError::WrongSignPattern(sign_pattern(summary)));
    }
    let losses = (s(0, 1) * s(1, 2) * s(2, 0)).abs();
    let gains = s(0, 2) * s(2, 1) * s(1, 0);
    Ok(losses < gains)
}

/// Symmetric part `D C + C^T D` for weights `d`.
fn weighted_symmetric(comp: &[[f64; 3]; 3], d: &[f64; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = d[i] * comp[i][j] + d[j] * comp[j][i];
        }
    }
    m
}

/// Exact test of a certificate through the leading principal minors.
pub fn verify_vl_certificate(comp: &[[f64; 3]; 3], d: &[f64; 3]) -> bool {
    if d.iter().any(|&v| !(v > 0.0)) {
        return false;
    }
    let m = weighted_symmetric(comp, d);
    m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0 && det3(&m) > 0.0
}

/// Smallest eigenvalue of a symmetric 3x3 matrix, scaled by its trace.
fn margin(m: &[[f64; 3]; 3]) -> f64 {
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let p1 = m[0][1].powi(2) + m[0][2].powi(2) + m[1][2].powi(2);
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p == 0.0 {
        return 1.0;
    }
    let mut b = *m;
    for (i, row) in b.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - if i == j { q } else { 0.0 }) / p;
        }
    }
    let r = (det3(&b) / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let smallest = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    smallest / (3.0 * q).abs().max(f64::MIN_POSITIVE)
}

/// Diagonal weights `d > 0` (with `d0 = 1`) making `D C + C^T D` positive
/// definite. The search is sound but not complete.
pub fn vl_certificate(comp: &[[f64; 3]; 3]) -> Result<[f64; 3], LvError> {
    const GRID: usize = 200;
    let score = |l1: f64, l2: f64| margin(&weighted_symmetric(comp, &[1.0, l1.exp(), l2.exp()]));
    let (lo, hi) = (1e-3f64.ln(), 1e3f64.ln());
    let step = (hi - lo) / (GRID - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for a in 0..GRID {
        for b in 0..GRID {
            let (x, y) = (lo + a as f64 * step, lo + b as f64 * step);
            let v = score(x, y);
            if v > best.0 {
                best = (v, x, y);
            }
        }
    }
    let (mut v, mut x, mut y) = best;
    let mut h = step;
    while h > 1e-9 {
        let mut moved = false;
        for (dx, dy) in [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)] {
            let w = score(x + dx, y + dy);
            if w > v {
                (v, x, y) = (w, x + dx, y + dy);
                moved = true;
            }
        }
        if !moved {
            h /= 2.0;
        }
    }
    let d = [1.0, x.exp(), y.exp()];
    if verify_vl_certificate(comp, &d) {
        Ok(d)
    } else {
        Err(LvError::NotFound)
    }
}

/// Human-readable rendering of a classification.
pub fn render(q: &QualitativeOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "outcome: {}", q.outcome);
    let _ = writeln!(s, "signs (S01 S02 S10 S12 S20 S21 | S_0(12) S_1(02) S_2(01)): {}", q.sign_pattern);
    for p in &q.fixed_points {
        let _ = writeln!(
            s,
            "  {:<10} [{:.6}, {:.6}, {:.6}] {}",
            p.kind.to_string(),
            p.location[0],
            p.location[1],
            p.location[2],
            if p.stable { "stable" } else { "unstable" }
        );
    }
    let permanent = match q.permanent {
        Some(true) => "yes",
        Some(false) => "no",
        None => "undecided",
    };
    let _ = writeln!(s, "permanent: {permanent}");
    match q.vl_certificate {
        Some(d) => {
            let _ = writeln!(s, "vl certificate: d = [{:.6}, {:.6}, {:.6}]", d[0], d[1], d[2]);
        }
        None => {
            let _ = writeln!(s, "vl certificate: none found");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ecology::{coexistence_equilibrium, cyclic_competition};
    use proptest::prelude::*;

    fn fig1() -> EcologyParams {
        EcologyParams {
            beta: [2.0, 3.0, 1.0],
            delta: [0.5; 3],
            comp: [[1.0; 3]; 3],
            carrying_capacity: 1000,
            alpha: None,
        }
    }

    fn rps() -> EcologyParams {
        EcologyParams {
            beta: [2.0; 3],
            delta: [0.0; 3],
            comp: [[2.0, 2.5, 1.0], [1.0, 2.0, 3.0], [3.0, 1.0, 2.0]],
            carrying_capacity: 1000,
            alpha: Some(1.1),
        }
    }

    #[test]
    fn zero_start_stays_zero() {
        let sol = integrate(&LvSystem::full(&fig1()), [0.0; 3], 10.0, IntegrateOptions::default()).unwrap();
        assert!(sol.states.iter().all(|s| *s == [0.0; 3]));
    }

    #[test]
    fn logistic_matches_closed_form() {
        let p = fig1();
        let sys = LvSystem::new(&p, &[TypeIndex::WILD]).unwrap();
        let sol = integrate(&sys, [0.1, 0.0, 0.0], 8.0, IntegrateOptions::default()).unwrap();
        let (r, k, n0) = (1.5f64, 1.5f64, 0.1f64);
        for (t, s) in sol.times.iter().zip(&sol.states) {
            let exact = k / (1.0 + (k / n0 - 1.0) * (-r * t).exp());
            assert!((s[0] - exact).abs() < 1e-7 * exact.max(1.0), "t={t}");
        }
        let long = integrate(&sys, [0.1, 0.0, 0.0], 60.0, IntegrateOptions::default()).unwrap();
        assert!((long.last()[0] - 1.5).abs() < 1e-8);
    }

    #[test]
    fn fig1_pair_converges_to_mutant() {
        let p = fig1();
        let sys = LvSystem::new(&p, &[TypeIndex::WILD, TypeIndex::FIRST]).unwrap();
        let sol = integrate(&sys, [1.5, 0.01, 0.0], 200.0, IntegrateOptions::default()).unwrap();
        let end = sol.last();
        assert!(end[0] < 1e-6 && (end[1] - 2.5).abs() < 1e-6 && end[2] == 0.0);
    }

    #[test]
    fn settling_time_properties() {
        let p = fig1();
        let s = FitnessSummary::new(&p);
        let sys = LvSystem::new(&p, &[TypeIndex::WILD, TypeIndex::FIRST]).unwrap();
        let target = stable_equilibrium_2d(&s, TypeIndex::WILD, TypeIndex::FIRST).unwrap();
        assert_eq!(target, [0.0, 2.5, 0.0]);
        assert_eq!(time_to_equilibrium(&sys, target, target, 0.1, 1e4).unwrap(), 0.0);
        let coarse = time_to_equilibrium(&sys, [1.5, 0.05, 0.0], target, 0.1, 1e4).unwrap();
        let fine = time_to_equilibrium(&sys, [1.5, 0.05, 0.0], target, 0.05, 1e4).unwrap();
        assert!(coarse.is_finite() && coarse > 0.0);
        assert!(fine >= coarse);
        // K plays no role in the deterministic system.
        let mut big = p.clone();
        big.carrying_capacity = 1_000_000;
        let sys_big = LvSystem::new(&big, &[TypeIndex::WILD, TypeIndex::FIRST]).unwrap();
        assert_eq!(time_to_equilibrium(&sys_big, [1.5, 0.05, 0.0], target, 0.1, 1e4).unwrap(), coarse);
    }

    #[test]
    fn worst_case_dominates_points() {
        let p = fig1();
        let w = worst_case_settling(&p, TypeIndex::FIRST, 0.1, 5).unwrap();
        let one = worst_case_settling(&p, TypeIndex::FIRST, 0.1, 1).unwrap();
        assert!(w.time.is_finite() && w.time >= one.time);
        let sys = LvSystem::new(&p, &[TypeIndex::WILD, TypeIndex::FIRST]).unwrap();
        let single = time_to_equilibrium(&sys, one.start, [0.0, 2.5, 0.0], 0.1, 1e5).unwrap();
        assert_eq!(single, one.time);
        // Regression fixture for the Fig. 1 system at eps = 0.1.
        assert!((w.time - 10.23765).abs() < 1e-4, "worst case {}", w.time);
    }

    #[test]
    fn classify_examples() {
        let q = classify(&FitnessSummary::new(&fig1())).unwrap();
        assert_eq!(q.outcome, Outcome::GlobalExclusion(TypeIndex::FIRST));
        let q = classify(&FitnessSummary::new(&rps())).unwrap();
        assert!(matches!(q.outcome, Outcome::AmbiguousPossiblyPeriodic(_)));
        assert_eq!(q.permanent, Some(true));
        let coex = EcologyParams {
            beta: [2.0; 3],
            delta: [0.0; 3],
            comp: [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]],
            carrying_capacity: 10,
            alpha: None,
        };
        let q = classify(&FitnessSummary::new(&coex)).unwrap();
        assert_eq!(q.outcome, Outcome::InteriorCoexistence);
        let bistable = EcologyParams {
            comp: [[1.0, 2.0, 2.0], [2.0, 1.0, 2.0], [2.0, 2.0, 1.0]],
            ..coex
        };
        let q = classify(&FitnessSummary::new(&bistable)).unwrap();
        assert_eq!(q.outcome.clone(), Outcome::Bistable(TypeIndex::ALL.map(PointKind::Axis).to_vec()));
    }

    #[test]
    fn permanence_examples() {
        assert_eq!(permanence_check(&FitnessSummary::new(&rps())), Ok(true));
        let ns = EcologyParams {
            beta: [1.156, 1.0, 2.0],
            delta: [0.0; 3],
            comp: [[2.0, 1.0, 1.0], [1.0, 0.844, 1.0], [3.84, 1.0, 1.75]],
            carrying_capacity: 1000,
            alpha: None,
        };
        assert_eq!(permanence_check(&FitnessSummary::new(&ns)), Ok(true));
        assert!(matches!(permanence_check(&FitnessSummary::new(&fig1())), Err(LvError::WrongSignPattern(_))));
    }

    #[test]
    fn permanence_equality_is_not_permanent() {
        // Every loss is -0.5 and every gain 0.5, so both products are 0.125.
        let p = EcologyParams {
            beta: [1.0; 3],
            delta: [0.0; 3],
            comp: [[1.0, 1.5, 0.5], [0.5, 1.0, 1.5], [1.5, 0.5, 1.0]],
            carrying_capacity: 10,
            alpha: None,
        };
        let s = FitnessSummary::new(&p);
        assert_eq!(s.s(0, 1), -0.5);
        assert_eq!(s.s(1, 0), 0.5);
        assert_eq!(permanence_check(&s), Ok(false));
    }

    #[test]
    fn vl_examples() {
        let c = cyclic_competition(0.25, [1.0; 3], [2.0; 3]).unwrap();
        assert!(verify_vl_certificate(&c, &[1.0; 3]));
        let d = vl_certificate(&c).unwrap();
        assert!(verify_vl_certificate(&c, &d));
        let diag = [[10.0, 0.1, 0.2], [0.3, 8.0, 0.1], [0.2, 0.1, 12.0]];
        assert!(vl_certificate(&diag).is_ok());
        // Strong mutual exclusion admits no certificate.
        let excl = [[1.0, 3.0, 3.0], [3.0, 1.0, 3.0], [3.0, 3.0, 1.0]];
        assert_eq!(vl_certificate(&excl), Err(LvError::NotFound));
    }

    #[test]
    fn csv_layout() {
        let sol = integrate(&LvSystem::full(&rps()), [0.5, 0.3, 0.2], 1.0, IntegrateOptions::default()).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf, Some(0.25)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,n0,n1,n2");
        assert_eq!(lines.len(), 6);
    }

    fn draw() -> impl Strategy<Value = EcologyParams> {
        (prop::array::uniform3(0.3f64..3.0), prop::array::uniform3(prop::array::uniform3(0.1f64..3.0))).prop_map(
            |(beta, comp)| EcologyParams {
                beta,
                delta: [0.0; 3],
                comp,
                carrying_capacity: 1000,
                alpha: None,
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn planar_feasibility_agrees(p in draw()) {
            let s = FitnessSummary::new(&p);
            let q = classify(&s);
            prop_assume!(q.is_ok());
            let q = q.unwrap();
            for k in TypeIndex::ALL {
                let (i, j) = pair_of(k);
                let listed = q.fixed_points.iter().any(|f| f.kind == PointKind::Planar(i, j));
                prop_assert_eq!(listed, coexistence_equilibrium(&p, i, j).densities().is_some());
            }
        }

        #[test]
        fn fixed_points_have_zero_residual(p in draw()) {
            if let Ok(q) = classify(&FitnessSummary::new(&p)) {
                let sys = LvSystem::full(&p);
                for f in &q.fixed_points {
                    let r = sys.rhs(&f.location);
                    prop_assert!(r.iter().map(|v| v.abs()).sum::<f64>() < 1e-9, "{:?}", f);
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn axes_are_invariant(p in draw(), z in prop::array::uniform3(0.0f64..2.0), zero in 0usize..3) {
            let mut z0 = z;
            z0[zero] = 0.0;
            let sol = integrate(&LvSystem::full(&p), z0, 20.0, IntegrateOptions::default()).unwrap();
            prop_assert!(sol.states.iter().all(|s| s[zero] == 0.0 && s.iter().all(|&v| v >= 0.0)));
            prop_assert!(sol.times.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
