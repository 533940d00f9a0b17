//! Establishment of mutant 2 at finite K. Mutant 2 survives with a
//! probability set by the whole time course of its background, not only by
//! the resident it meets in the limit. The oracle below integrates the
//! linear birth-death survival formula along the deterministic sweep of
//! mutant 1 and averages over the random size of an established mutant 1
//! lineage. It should agree with the simulator at K = 1000 and approach the
//! leading-order branch probability as K grows.

use clonint::ecology::{EcologyParams, FitnessSummary};
use clonint::harness::{self, ExperimentSpec};
use clonint::lv::{self, IntegrateOptions, LvSystem};
use clonint::presets;

const QUANTILES: usize = 60;
const DT: f64 = 0.005;

/// Probability that both mutants establish, averaging over the limit size
/// `W ~ Exp(mean beta1 / S10)` of a surviving mutant 1 lineage.
fn establishment_oracle(params: &EcologyParams, k: f64) -> f64 {
    let s = FitnessSummary::new(params);
    let s10 = s.s(1, 0);
    let n0 = s.nbar[0];
    let inject = params.alpha.expect("second mutant is scheduled") * k.ln();
    let end = inject + 60.0;
    let opts = IntegrateOptions {
        max_step: 0.01,
        ..IntegrateOptions::default()
    };
    let sys = LvSystem::full(params);
    let (b2, d2) = (params.beta[2], params.delta[2]);
    let mean_w = params.beta[1] / s10;
    let mut total = 0.0;
    for q in 0..QUANTILES {
        let u = (q as f64 + 0.5) / QUANTILES as f64;
        let w = -(1.0 - u).ln() * mean_w;
        let sol = lv::integrate(&sys, [n0, w / k, 0.0], end, opts).expect("sweep integrates");
        // Survival from one individual: 1 / (1 + int death(t) exp(-int growth)).
        let (mut cum, mut integral, mut t) = (0.0f64, 0.0, inject);
        while t < end && cum > -30.0 {
            let n = sol.at(t);
            let crowd: f64 = (0..3).map(|j| params.comp[2][j] * n[j]).sum();
            let growth = b2 - d2 - crowd;
            integral += (b2 - growth) * cum.exp() * DT;
            cum -= growth * DT;
            t += DT;
        }
        total += 1.0 / (1.0 + integral);
    }
    s10 / params.beta[1] * total / QUANTILES as f64
}

fn leading_order(params: &EcologyParams, late: bool) -> f64 {
    let s = FitnessSummary::new(params);
    let second = if late { s.s(2, 1) } else { s.s(2, 0) };
    s.s(1, 0) / params.beta[1] * second / params.beta[2]
}

#[test]
fn oracle_matches_simulated_acceptance() {
    let spec = ExperimentSpec::from_toml(include_str!("../../../experiments/speedup.toml")).unwrap();
    let report = harness::run(&spec, 2).unwrap();
    let est = report.target("acceptance_rate").and_then(|t| t.estimate).unwrap();
    let oracle = establishment_oracle(&presets::speedup(), 1000.0);
    assert!((est.point - oracle).abs() < 0.02, "simulated {} vs oracle {oracle}", est.point);
    // The leading-order value lies well outside the simulated interval.
    assert!(leading_order(&presets::speedup(), false) < est.lo - 0.02);
}

#[test]
fn oracle_approaches_leading_order() {
    for (params, late) in [(presets::speedup(), false), (presets::annihilation(), true)] {
        let want = leading_order(&params, late);
        let gaps: Vec<f64> = [1e3, 1e5, 1e8, 1e12]
            .iter()
            .map(|&k| (establishment_oracle(&params, k) - want).abs())
            .collect();
        assert!(gaps.windows(2).all(|g| g[1] < g[0]), "{gaps:?}");
        assert!(gaps[3] < 0.005, "{gaps:?}");
    }
}

#[test]
fn cyclic_case_converges_slowly() {
    // Mutant 2 arrives just 0.1 ln K after mutant 1 would have swept, so the
    // gap closes only logarithmically.
    let params = presets::rock_paper_scissors();
    let want = leading_order(&params, true);
    let at = |k: f64| establishment_oracle(&params, k);
    let (small, large) = (at(1e3), at(1e12));
    assert!(small < large && large < want, "{small} {large} {want}");
    assert!((small - 0.12).abs() < 0.02, "{small}");
}
