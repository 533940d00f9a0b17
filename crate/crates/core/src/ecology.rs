//! Model parameters and the closed-form fitness and equilibrium algebra.
//!
//! Row `i` of the competition matrix holds the effect of each type on the
//! death rate of an `i`-individual, so `comp[i][j]` is the impact of one
//! `j`-individual.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default threshold for "strictly positive" in feasibility decisions.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// One of the three types; 0 is the wild type, 1 and 2 the two mutants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TypeIndex(u8);

impl TypeIndex {
    pub const WILD: TypeIndex = TypeIndex(0);
    pub const FIRST: TypeIndex = TypeIndex(1);
    pub const SECOND: TypeIndex = TypeIndex(2);
    pub const ALL: [TypeIndex; 3] = [Self::WILD, Self::FIRST, Self::SECOND];

    pub fn new(value: u8) -> Result<Self, EcologyError> {
        if value < 3 {
            Ok(TypeIndex(value))
        } else {
            Err(EcologyError::BadType(value))
        }
    }

    pub fn idx(self) -> usize {
        self.0 as usize
    }

    /// The third type, given two distinct ones.
    pub fn complement(a: TypeIndex, b: TypeIndex) -> TypeIndex {
        debug_assert_ne!(a, b);
        TypeIndex(3 - a.0 - b.0)
    }
}

impl TryFrom<u8> for TypeIndex {
    type Error = EcologyError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        TypeIndex::new(v)
    }
}

impl From<TypeIndex> for u8 {
    fn from(t: TypeIndex) -> u8 {
        t.0
    }
}

impl fmt::Display for TypeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EcologyError {
    #[error("type index {0} is not in {{0, 1, 2}}")]
    BadType(u8),
    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("pair ({0}, {1}) has no feasible coexistence equilibrium")]
    PairInfeasible(TypeIndex, TypeIndex),
    #[error("types must be distinct")]
    SameType,
    #[error("invalid eta: {0}")]
    InvalidEta(String),
    #[error("constructed parameters are not cyclic: {0}")]
    NotCyclic(String),
}

/// A full model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatParams", into = "FlatParams")]
pub struct EcologyParams {
    pub beta: [f64; 3],
    pub delta: [f64; 3],
    pub comp: [[f64; 3]; 3],
    pub carrying_capacity: u64,
    /// Mutant 2 appears at `alpha * ln K`. `None` means it never appears.
    pub alpha: Option<f64>,
}

impl EcologyParams {
    pub fn validate(&self) -> Result<(), EcologyError> {
        let bad = |name: String, reason: &str| EcologyError::InvalidParam {
            name,
            reason: reason.to_string(),
        };
        for i in 0..3 {
            if !(self.beta[i] > 0.0 && self.beta[i].is_finite()) {
                return Err(bad(format!("beta{i}"), "must be positive and finite"));
            }
            if !(self.delta[i] >= 0.0 && self.delta[i].is_finite()) {
                return Err(bad(format!("delta{i}"), "must be nonnegative and finite"));
            }
            for j in 0..3 {
                if !(self.comp[i][j] > 0.0 && self.comp[i][j].is_finite()) {
                    return Err(bad(format!("c{i}{j}"), "must be positive and finite"));
                }
            }
        }
        if self.carrying_capacity < 1 {
            return Err(bad("K".into(), "must be at least 1"));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(bad("alpha".into(), "must be nonnegative and finite"));
            }
        }
        Ok(())
    }

    pub fn growth(&self, i: TypeIndex) -> f64 {
        self.beta[i.idx()] - self.delta[i.idx()]
    }

    pub fn log_k(&self) -> f64 {
        (self.carrying_capacity as f64).ln()
    }

    /// Time at which mutant 2 is injected, if it is.
    pub fn injection_time(&self) -> Option<f64> {
        self.alpha.map(|a| a * self.log_k())
    }

    /// Parameters with types 1 and 2 exchanged.
    pub fn swap_mutants(&self) -> EcologyParams {
        let p = [0usize, 2, 1];
        let mut out = self.clone();
        for i in 0..3 {
            out.beta[i] = self.beta[p[i]];
            out.delta[i] = self.delta[p[i]];
            for j in 0..3 {
                out.comp[i][j] = self.comp[p[i]][p[j]];
            }
        }
        out
    }
}

/// On-disk layout: one flat table of scalar keys.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatParams {
    beta0: f64,
    beta1: f64,
    beta2: f64,
    #[serde(default)]
    delta0: f64,
    #[serde(default)]
    delta1: f64,
    #[serde(default)]
    delta2: f64,
    c00: f64,
    c01: f64,
    c02: f64,
    c10: f64,
    c11: f64,
    c12: f64,
    c20: f64,
    c21: f64,
    c22: f64,
    #[serde(rename = "K")]
    k: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
}

impl TryFrom<FlatParams> for EcologyParams {
    type Error = EcologyError;
    fn try_from(f: FlatParams) -> Result<Self, Self::Error> {
        let p = EcologyParams {
            beta: [f.beta0, f.beta1, f.beta2],
            delta: [f.delta0, f.delta1, f.delta2],
            comp: [
                [f.c00, f.c01, f.c02],
                [f.c10, f.c11, f.c12],
                [f.c20, f.c21, f.c22],
            ],
            carrying_capacity: f.k,
            alpha: f.alpha,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<EcologyParams> for FlatParams {
    fn from(p: EcologyParams) -> Self {
        let c = p.comp;
        FlatParams {
            beta0: p.beta[0],
            beta1: p.beta[1],
            beta2: p.beta[2],
            delta0: p.delta[0],
            delta1: p.delta[1],
            delta2: p.delta[2],
            c00: c[0][0],
            c01: c[0][1],
            c02: c[0][2],
            c10: c[1][0],
            c11: c[1][1],
            c12: c[1][2],
            c20: c[2][0],
            c21: c[2][1],
            c22: c[2][2],
            k: p.carrying_capacity,
            alpha: p.alpha,
        }
    }
}

/// Density of a single-type population at equilibrium. Can be nonpositive
/// when the type cannot grow on its own.
pub fn monomorphic_equilibrium(params: &EcologyParams, i: TypeIndex) -> f64 {
    params.growth(i) / params.comp[i.idx()][i.idx()]
}

/// Per-capita growth of a rare `i` in a resident `j` population.
pub fn invasion_fitness(params: &EcologyParams, i: TypeIndex, j: TypeIndex) -> f64 {
    if i == j {
        return 0.0;
    }
    params.growth(i) - params.comp[i.idx()][j.idx()] * monomorphic_equilibrium(params, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfeasibleReason {
    /// `C_ii C_jj = C_ij C_ji`.
    Degenerate,
    NonPositive,
}

/// Two-type equilibrium, coordinates ordered as the requested pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairEquilibrium {
    Coexist { first: f64, second: f64 },
    Infeasible(InfeasibleReason),
}

impl PairEquilibrium {
    pub fn densities(&self) -> Option<(f64, f64)> {
        match *self {
            PairEquilibrium::Coexist { first, second } => Some((first, second)),
            PairEquilibrium::Infeasible(_) => None,
        }
    }
}

pub fn coexistence_equilibrium(params: &EcologyParams, i: TypeIndex, j: TypeIndex) -> PairEquilibrium {
    coexistence_equilibrium_tol(params, i, j, FEASIBILITY_TOL)
}

pub fn coexistence_equilibrium_tol(
    params: &EcologyParams,
    i: TypeIndex,
    j: TypeIndex,
    tol: f64,
) -> PairEquilibrium {
    let c = &params.comp;
    let (a, b) = (i.idx(), j.idx());
    let det = c[a][a] * c[b][b] - c[a][b] * c[b][a];
    if i == j || det == 0.0 {
        return PairEquilibrium::Infeasible(InfeasibleReason::Degenerate);
    }
    let (ri, rj) = (params.growth(i), params.growth(j));
    let first = (c[b][b] * ri - c[a][b] * rj) / det;
    let second = (c[a][a] * rj - c[b][a] * ri) / det;
    if first > tol && second > tol {
        PairEquilibrium::Coexist { first, second }
    } else {
        PairEquilibrium::Infeasible(InfeasibleReason::NonPositive)
    }
}

/// Fitness of `k` against the coexisting `i`/`j` resident pair.
pub fn trimorphic_fitness(
    params: &EcologyParams,
    k: TypeIndex,
    i: TypeIndex,
    j: TypeIndex,
) -> Result<f64, EcologyError> {
    if i == j || k == i || k == j {
        return Err(EcologyError::SameType);
    }
    // Always evaluate in canonical order so that S_kij == S_kji bit for bit.
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    let (ni, nj) = coexistence_equilibrium(params, i, j)
        .densities()
        .ok_or(EcologyError::PairInfeasible(i, j))?;
    let c = &params.comp[k.idx()];
    Ok(params.growth(k) - c[i.idx()] * ni - c[j.idx()] * nj)
}

/// The order on types induced by mutual invasibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairOrder {
    /// The first type is invaded by the second and cannot invade back.
    Less,
    Greater,
    Equivalent,
}

pub fn pairwise_order(params: &EcologyParams, i: TypeIndex, j: TypeIndex) -> PairOrder {
    order_from_signs(invasion_fitness(params, i, j), invasion_fitness(params, j, i))
}

fn order_from_signs(s_ij: f64, s_ji: f64) -> PairOrder {
    if s_ij * s_ji >= 0.0 {
        PairOrder::Equivalent
    } else if s_ij < 0.0 {
        PairOrder::Less
    } else {
        PairOrder::Greater
    }
}

/// All derived quantities for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessSummary {
    pub rho: [f64; 3],
    pub nbar: [f64; 3],
    /// Indexed by the excluded type: entry `k` is the pair `{i, j}` with
    /// `i < j`, coordinates in that order.
    pub nbar_pair: [PairEquilibrium; 3],
    #[serde(rename = "S")]
    pub invasion: [[f64; 3]; 3],
    /// Entry `k` is the fitness of `k` against the other two types'
    /// coexistence equilibrium, absent when that pair is infeasible.
    #[serde(rename = "S_tri")]
    pub pair_invasion: [Option<f64>; 3],
    #[serde(rename = "Ctilde")]
    pub rescaled_comp: [[f64; 3]; 3],
    #[serde(rename = "C")]
    pub comp: [[f64; 3]; 3],
    pub beta: [f64; 3],
}

impl FitnessSummary {
    pub fn new(params: &EcologyParams) -> Self {
        Self::with_tolerance(params, FEASIBILITY_TOL)
    }

    pub fn with_tolerance(params: &EcologyParams, tol: f64) -> Self {
        let t = TypeIndex::ALL;
        let rho = t.map(|i| params.growth(i));
        let nbar = t.map(|i| monomorphic_equilibrium(params, i));
        let mut invasion = [[0.0; 3]; 3];
        let mut rescaled_comp = [[0.0; 3]; 3];
        for i in t {
            for j in t {
                invasion[i.idx()][j.idx()] = invasion_fitness(params, i, j);
                rescaled_comp[i.idx()][j.idx()] =
                    params.comp[i.idx()][j.idx()] / params.comp[j.idx()][j.idx()];
            }
        }
        let nbar_pair = t.map(|k| {
            let (i, j) = pair_of(k);
            coexistence_equilibrium_tol(params, i, j, tol)
        });
        let pair_invasion = t.map(|k| {
            let (i, j) = pair_of(k);
            nbar_pair[k.idx()].densities().map(|(ni, nj)| {
                let c = &params.comp[k.idx()];
                rho[k.idx()] - c[i.idx()] * ni - c[j.idx()] * nj
            })
        });
        FitnessSummary {
            rho,
            nbar,
            nbar_pair,
            invasion,
            pair_invasion,
            rescaled_comp,
            comp: params.comp,
            beta: params.beta,
        }
    }

    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.invasion[i][j]
    }

    /// Fitness of `k` in the coexisting pair of the other two types.
    pub fn s_tri(&self, k: usize) -> Option<f64> {
        self.pair_invasion[k]
    }

    /// Density triple of the coexistence point of the pair excluding `k`.
    pub fn pair_point(&self, k: usize) -> Option<[f64; 3]> {
        let (i, j) = pair_of(TypeIndex(k as u8));
        self.nbar_pair[k].densities().map(|(a, b)| {
            let mut n = [0.0; 3];
            n[i.idx()] = a;
            n[j.idx()] = b;
            n
        })
    }

    pub fn axis_point(&self, i: usize) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[i] = self.nbar[i];
        n
    }

    pub fn order(&self, i: usize, j: usize) -> PairOrder {
        order_from_signs(self.invasion[i][j], self.invasion[j][i])
    }

    /// True for the cyclic order 0 < 1 < 2 < 0.
    pub fn is_rps_cycle(&self) -> bool {
        self.order(0, 1) == PairOrder::Less
            && self.order(1, 2) == PairOrder::Less
            && self.order(2, 0) == PairOrder::Less
    }
}

/// The pair `(i, j)`, `i < j`, complementary to `k`.
pub fn pair_of(k: TypeIndex) -> (TypeIndex, TypeIndex) {
    match k.0 {
        0 => (TypeIndex(1), TypeIndex(2)),
        1 => (TypeIndex(0), TypeIndex(2)),
        _ => (TypeIndex(0), TypeIndex(1)),
    }
}

/// Which transitivity conclusion is available for rescaled competition
/// coefficients confined to `[c1, c2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitivityRegime {
    /// Every parameter choice yields a transitive order.
    ForcedTransitive,
    /// Some two-type orders force the third.
    WeaklyTransitive,
    /// A cyclic order can be constructed.
    CycleConstructible,
    None,
}

pub fn transitivity_regime(c1: f64, c2: f64) -> TransitivityRegime {
    let hi = c1.max(1.0 / c2);
    let lo = (1.0 / c1).min(c2);
    let upper = hi * hi > c2;
    let lower = lo * lo < c1;
    if upper && lower {
        TransitivityRegime::ForcedTransitive
    } else if upper || lower {
        TransitivityRegime::WeaklyTransitive
    } else if hi * hi < c2 && lo * lo > c1 {
        TransitivityRegime::CycleConstructible
    } else {
        TransitivityRegime::None
    }
}

/// Parameters with cyclic dominance 0 < 1 < 2 < 0, rescaled competition
/// inside `[c1, c2]`, and type 2 growth `rho2`.
///
/// Growth rates form a geometric sequence with ratio `r = min(c2, 1/c1) - eta`
/// and death rates are zero.
pub fn build_rps_parameters(
    c1: f64,
    c2: f64,
    eta: f64,
    rho2: f64,
    self_comp: [f64; 3],
    carrying_capacity: u64,
) -> Result<EcologyParams, EcologyError> {
    if !(c1 > 0.0 && c1 < 1.0 && c2 > 1.0) {
        return Err(EcologyError::InvalidEta(format!(
            "requires c1 < 1 < c2, got c1={c1}, c2={c2}"
        )));
    }
    let r = c2.min(1.0 / c1) - eta;
    if !(eta > 0.0) || !(r * r > c1) || !(1.0 / (r * r) < c2) {
        return Err(EcologyError::InvalidEta(format!(
            "eta={eta} gives ratio {r}, need r^2 > {c1} and r^-2 < {c2}"
        )));
    }
    let rho = [r * r * rho2, r * rho2, rho2];
    // Rescaled matrix: entry (i, j) is C_ij / C_jj.
    let tilde = [[1.0, c2, c1], [c1, 1.0, c2], [c2, c1, 1.0]];
    let mut comp = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            comp[i][j] = tilde[i][j] * self_comp[j];
        }
    }
    let params = EcologyParams {
        beta: rho,
        delta: [0.0; 3],
        comp,
        carrying_capacity,
        alpha: None,
    };
    params.validate()?;
    let summary = FitnessSummary::new(&params);
    if !summary.is_rps_cycle() {
        return Err(EcologyError::NotCyclic(format!("fitness matrix {:?}", summary.invasion)));
    }
    Ok(params)
}

/// Cyclic competition matrix such that `S_{i+1,i} = (1 - eta) rho_{i+1}` and
/// `S_{i,i+1} = -eta rho_i`, indices mod 3.
pub fn cyclic_competition(eta: f64, rho: [f64; 3], self_comp: [f64; 3]) -> Result<[[f64; 3]; 3], EcologyError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(EcologyError::InvalidEta(format!("need 0 < eta < 1, got {eta}")));
    }
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        let n = (i + 1) % 3;
        c[i][i] = self_comp[i];
        c[n][i] = eta * rho[n] / rho[i] * self_comp[i];
        c[i][n] = (1.0 + eta) * rho[i] / rho[n] * self_comp[n];
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn fig1() -> EcologyParams {
        EcologyParams {
            beta: [2.0, 3.0, 1.0],
            delta: [0.5, 0.5, 0.5],
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

    const T0: TypeIndex = TypeIndex::WILD;
    const T1: TypeIndex = TypeIndex::FIRST;
    const T2: TypeIndex = TypeIndex::SECOND;

    #[test]
    fn fig1_values() {
        let p = fig1();
        assert_eq!(monomorphic_equilibrium(&p, T0), 1.5);
        assert_eq!(invasion_fitness(&p, T1, T0), 1.0);
        assert_eq!(invasion_fitness(&p, T0, T1), -1.0);
        assert_eq!(pairwise_order(&p, T0, T1), PairOrder::Less);
        assert_eq!(
            coexistence_equilibrium(&p, T0, T1),
            PairEquilibrium::Infeasible(InfeasibleReason::Degenerate)
        );
    }

    #[test]
    fn zero_growth_gives_zero_density() {
        let mut p = fig1();
        p.delta[0] = p.beta[0];
        assert_eq!(monomorphic_equilibrium(&p, T0), 0.0);
    }

    #[test]
    fn rps_orders_and_pairs() {
        let p = rps();
        for i in TypeIndex::ALL {
            assert_eq!(monomorphic_equilibrium(&p, i), 1.0);
        }
        assert_eq!(pairwise_order(&p, T0, T1), PairOrder::Less);
        assert_eq!(pairwise_order(&p, T1, T2), PairOrder::Less);
        assert_eq!(pairwise_order(&p, T2, T0), PairOrder::Less);
        assert_eq!(
            coexistence_equilibrium(&p, T1, T2),
            PairEquilibrium::Infeasible(InfeasibleReason::NonPositive)
        );
        assert!(FitnessSummary::new(&p).is_rps_cycle());
    }

    #[test]
    fn symmetric_pair_equilibrium() {
        let p = EcologyParams {
            beta: [2.0; 3],
            delta: [0.0; 3],
            comp: [[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]],
            carrying_capacity: 10,
            alpha: None,
        };
        let (a, b) = coexistence_equilibrium(&p, T0, T1).densities().unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-15 && (b - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn neumann_schuster_fitnesses() {
        let p = EcologyParams {
            beta: [1.156, 1.0, 2.0],
            delta: [0.0; 3],
            comp: [[2.0, 1.0, 1.0], [1.0, 0.844, 1.0], [3.84, 1.0, 1.75]],
            carrying_capacity: 1000,
            alpha: None,
        };
        let s = FitnessSummary::new(&p);
        let close = |x: f64, y: f64, tol: f64| (x - y).abs() < tol;
        assert!(close(s.s(1, 0), 0.422, 5e-4));
        assert!(close(s.s(0, 1), -0.0288, 5e-4));
        assert!(close(s.s(2, 1), 0.816, 1e-3));
        assert!(close(s.s(2, 0), -0.220, 1e-3));
        assert!(close(s.s(0, 2), 0.0131, 5e-4));
        assert!(close(s.s(1, 2), -0.143, 1e-3));
    }

    #[test]
    fn trimorphic_requires_feasible_pair() {
        let p = rps();
        assert_eq!(trimorphic_fitness(&p, T0, T1, T2), Err(EcologyError::PairInfeasible(T1, T2)));
    }

    #[test]
    fn transitivity_examples() {
        assert_eq!(transitivity_regime(0.9, 0.92), TransitivityRegime::ForcedTransitive);
        assert_eq!(transitivity_regime(0.5, 2.0), TransitivityRegime::CycleConstructible);
        assert_eq!(transitivity_regime(1.0, 1.0), TransitivityRegime::None);
    }

    #[test]
    fn rps_construction() {
        let p = build_rps_parameters(0.5, 2.0, 0.1, 1.0, [1.0, 2.0, 3.0], 1000).unwrap();
        assert!(FitnessSummary::new(&p).is_rps_cycle());
        assert!(matches!(
            build_rps_parameters(0.5, 2.0, 0.0, 1.0, [1.0; 3], 1000),
            Err(EcologyError::InvalidEta(_))
        ));
        assert!(matches!(
            build_rps_parameters(0.5, 2.0, 1.8, 1.0, [1.0; 3], 1000),
            Err(EcologyError::InvalidEta(_))
        ));
    }

    #[test]
    fn cyclic_competition_matches_hand_values() {
        let c = cyclic_competition(0.25, [1.0; 3], [2.0; 3]).unwrap();
        let want = [[2.0, 2.5, 0.5], [0.5, 2.0, 2.5], [2.5, 0.5, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[i][j] - want[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn flat_config_roundtrip() {
        let text = "beta0 = 2.0\nbeta1 = 3.0\nbeta2 = 1.0\ndelta0 = 0.5\ndelta1 = 0.5\ndelta2 = 0.5\n\
                    c00 = 1.0\nc01 = 1.0\nc02 = 1.0\nc10 = 1.0\nc11 = 1.0\nc12 = 1.0\n\
                    c20 = 1.0\nc21 = 1.0\nc22 = 1.0\nK = 1000\n";
        let p: EcologyParams = toml::from_str(text).unwrap();
        assert_eq!(p, fig1());
        let back: EcologyParams = toml::from_str(&toml::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(toml::from_str::<EcologyParams>(&text.replace("c11 = 1.0", "c11 = -1.0")).is_err());
    }

    #[test]
    fn summary_json_field_names() {
        let v = serde_json::to_value(FitnessSummary::new(&rps())).unwrap();
        for key in ["rho", "nbar", "nbar_pair", "S", "S_tri", "Ctilde"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["S_tri"][0].is_null());
    }

    fn params_strategy() -> impl Strategy<Value = EcologyParams> {
        (
            prop::array::uniform3(0.1f64..5.0),
            prop::array::uniform3(0.0f64..1.0),
            prop::array::uniform3(prop::array::uniform3(0.05f64..5.0)),
        )
            .prop_map(|(beta, delta, comp)| EcologyParams {
                beta,
                delta,
                comp,
                carrying_capacity: 1000,
                alpha: None,
            })
    }

    proptest! {
        #[test]
        fn self_fitness_is_zero(p in params_strategy()) {
            let s = FitnessSummary::new(&p);
            for i in 0..3 {
                prop_assert_eq!(s.s(i, i), 0.0);
                let direct = p.growth(TypeIndex::ALL[i]) - p.comp[i][i] * s.nbar[i];
                prop_assert!(direct.abs() < 1e-12);
            }
        }

        #[test]
        fn trimorphic_symmetry(p in params_strategy()) {
            for k in TypeIndex::ALL {
                let (i, j) = pair_of(k);
                prop_assert_eq!(trimorphic_fitness(&p, k, i, j), trimorphic_fitness(&p, k, j, i));
            }
        }

        #[test]
        fn feasible_pair_is_a_fixed_point(p in params_strategy()) {
            for k in TypeIndex::ALL {
                let (i, j) = pair_of(k);
                if let Some((ni, nj)) = coexistence_equilibrium(&p, i, j).densities() {
                    let c = &p.comp;
                    let (a, b) = (i.idx(), j.idx());
                    let fi = ni * (p.growth(i) - c[a][a] * ni - c[a][b] * nj);
                    let fj = nj * (p.growth(j) - c[b][a] * ni - c[b][b] * nj);
                    prop_assert!(fi.abs() < 1e-9 && fj.abs() < 1e-9);
                }
            }
        }

        #[test]
        fn uniform_competition_is_transitive(
            beta in prop::array::uniform3(0.5f64..5.0),
            delta in prop::array::uniform3(0.0f64..0.4),
            c in 0.1f64..4.0,
        ) {
            let p = EcologyParams { beta, delta, comp: [[c; 3]; 3], carrying_capacity: 100, alpha: None };
            let s = FitnessSummary::new(&p);
            for i in 0..3 {
                for j in 0..3 {
                    if i == j { continue; }
                    prop_assert!((s.s(i, j) + s.s(j, i)).abs() < 1e-12);
                    for k in 0..3 {
                        if k == i || k == j { continue; }
                        prop_assert!((s.s(i, k) - (s.s(i, j) + s.s(j, k))).abs() < 1e-12);
                        if s.s(i, j) > 0.0 && s.s(j, k) > 0.0 {
                            prop_assert!(s.s(i, k) > 0.0);
                        }
                    }
                }
            }
        }

    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn forced_transitive_never_cycles(
            c1 in 0.5f64..1.0,
            width in 0.0f64..0.2,
            tilde in prop::array::uniform6(0.0f64..1.0),
            rho in prop::array::uniform3(0.1f64..3.0),
        ) {
            let c2 = c1 + width * (1.0 - c1);
            prop_assume!(transitivity_regime(c1, c2) == TransitivityRegime::ForcedTransitive);
            let off = [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)];
            let mut comp = [[1.0; 3]; 3];
            for (n, &(i, j)) in off.iter().enumerate() {
                comp[i][j] = c1 + tilde[n] * (c2 - c1);
            }
            let p = EcologyParams { beta: rho, delta: [0.0; 3], comp, carrying_capacity: 100, alpha: None };
            let s = FitnessSummary::new(&p);
            prop_assert!(!s.is_rps_cycle());
            let rev = [s.order(0, 2), s.order(2, 1), s.order(1, 0)];
            prop_assert!(!rev.iter().all(|o| *o == PairOrder::Less));
        }
    }
}
