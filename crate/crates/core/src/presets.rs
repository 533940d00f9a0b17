//! Named parameter sets used by the examples, the experiments and the tests.

use crate::ecology::EcologyParams;

pub const DEFAULT_K: u64 = 1000;

/// Single sweep of a fitter mutant under uniform competition; type 2 is
/// present only as a placeholder and is never injected.
pub fn single_sweep() -> EcologyParams {
    EcologyParams {
        beta: [2.0, 3.0, 1.0],
        delta: [0.5; 3],
        comp: [[1.0; 3]; 3],
        carrying_capacity: DEFAULT_K,
        alpha: None,
    }
}

/// Mutant 2 invades faster in the type 1 resident than in the wild type.
pub fn speedup() -> EcologyParams {
    EcologyParams {
        beta: [2.0; 3],
        delta: [0.0; 3],
        comp: [[1.8, 4.0, 3.0], [1.0, 2.3, 3.0], [1.5, 1.0, 2.1]],
        carrying_capacity: DEFAULT_K,
        alpha: Some(0.5),
    }
}

/// Mutant 2 displaces mutant 1 and is then displaced by the wild type.
pub fn annihilation() -> EcologyParams {
    EcologyParams {
        beta: [2.0; 3],
        delta: [0.0; 3],
        comp: [[1.8, 2.5, 1.5], [1.0, 2.3, 5.0], [3.0, 1.0, 2.1]],
        carrying_capacity: DEFAULT_K,
        alpha: Some(1.9),
    }
}

/// Cyclic dominance 0 < 1 < 2 < 0.
pub fn rock_paper_scissors() -> EcologyParams {
    EcologyParams {
        beta: [2.0; 3],
        delta: [0.0; 3],
        comp: [[2.0, 2.5, 1.0], [1.0, 2.0, 3.0], [3.0, 1.0, 2.0]],
        carrying_capacity: DEFAULT_K,
        alpha: Some(1.1),
    }
}

pub fn by_name(name: &str) -> Option<EcologyParams> {
    match name {
        "single-sweep" => Some(single_sweep()),
        "speedup" => Some(speedup()),
        "annihilation" => Some(annihilation()),
        "rps" => Some(rock_paper_scissors()),
        _ => None,
    }
}

pub const NAMES: [&str; 4] = ["single-sweep", "speedup", "annihilation", "rps"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_name_resolves_and_validates() {
        for name in NAMES {
            by_name(name).unwrap().validate().unwrap();
        }
        assert!(by_name("nope").is_none());
    }
}
