//! Exact stochastic simulation (Gillespie direct method) of the three-type
//! birth-death process with logistic competition.
//!
//! A `j`-individual adds `C_ij / K` to the death rate of every
//! `i`-individual. Mutant 2 is injected as a single individual at time
//! `alpha * ln K`.

use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ecology::{monomorphic_equilibrium, EcologyError, EcologyParams, TypeIndex};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] EcologyError),
    #[error("resident density {0} is not positive")]
    NonviableResident(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("condition not met after {0} attempts")]
    RejectionBudgetExceeded(u32),
}

/// Seed of stream `stream` derived from `base` (SplitMix64 finaliser).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub counts: [u64; 3],
    pub time: f64,
}

/// What produced a recorded sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Birth(u8),
    Death(u8),
    Inject,
    /// Start, end, or stride sample.
    Sample,
}

impl Event {
    pub fn code(&self) -> &'static str {
        match self {
            Event::Birth(0) => "b0",
            Event::Birth(1) => "b1",
            Event::Birth(_) => "b2",
            Event::Death(0) => "d0",
            Event::Death(1) => "d1",
            Event::Death(_) => "d2",
            Event::Inject => "inj2",
            Event::Sample => "sample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub counts: [u64; 3],
    pub event: Event,
}

/// What gets recorded. The options combine: a sample is stored if any of
/// them asks for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    pub every_event: bool,
    /// Record the state on the grid `k * stride`.
    pub stride: Option<f64>,
    /// Record every event after which the changed type's count equals one
    /// of these levels, which makes hitting times of those levels exact.
    pub levels: Vec<u64>,
}

impl Recording {
    pub fn every_event() -> Self {
        Recording {
            every_event: true,
            stride: None,
            levels: vec![],
        }
    }

    /// Levels 0, 1, `eps^2 K`, `eps K`, and the full and half equilibrium
    /// sizes of each type, plus a 0.1 stride.
    pub fn standard(params: &EcologyParams, eps: f64) -> Self {
        let k = params.carrying_capacity as f64;
        let mut levels = vec![0, 1, (eps * eps * k).floor() as u64, (eps * k).floor() as u64];
        for i in TypeIndex::ALL {
            let n = monomorphic_equilibrium(params, i);
            if n > 0.0 {
                levels.push((n * k).floor() as u64);
                levels.push((n * k / 2.0).floor() as u64);
            }
        }
        levels.sort_unstable();
        levels.dedup();
        Recording {
            every_event: false,
            stride: Some(0.1),
            levels,
        }
    }

    /// Whether hitting times of `level` can be read off exactly.
    pub fn resolves(&self, level: u64) -> bool {
        self.every_event || self.levels.binary_search(&level).is_ok()
    }
}

/// Early termination rules, checked after every event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Count of `ty` reaches `level`.
    Reached { ty: TypeIndex, level: u64 },
    /// Count of `ty` drops to `level` or below, once `ty` has been present.
    Below { ty: TypeIndex, level: u64 },
    /// At most one type is left and no injection is pending.
    Monomorphic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub horizon: f64,
    pub max_events: u64,
    pub record: Recording,
    pub mutation2_enabled: bool,
    /// Overrides the default start `(floor(nbar_0 K), 1, 0)`.
    #[serde(default)]
    pub initial: Option<[u64; 3]>,
    #[serde(default)]
    pub stop: Vec<StopRule>,
}

impl SimConfig {
    /// Horizon `50 ln K`, budget `1e9` events, standard recording.
    pub fn standard(params: &EcologyParams, eps: f64, seed: u64) -> Self {
        SimConfig {
            seed,
            horizon: 50.0 * params.log_k(),
            max_events: 1_000_000_000,
            record: Recording::standard(params, eps),
            mutation2_enabled: params.alpha.is_some(),
            initial: None,
            stop: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    AllExtinct,
    HorizonReached,
    EventBudget,
    /// A stop rule fired; the index into `SimConfig::stop`.
    Stopped(usize),
    /// The conditioning event became impossible (used internally by
    /// rejection sampling).
    Doomed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub terminal: Terminal,
    pub injected2_at: Option<f64>,
    pub events: u64,
    /// Largest count reached by each type.
    pub peak: [u64; 3],
    pub carrying_capacity: u64,
    pub record: Recording,
}

impl Trajectory {
    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.time)
    }

    pub fn final_counts(&self) -> [u64; 3] {
        self.samples.last().map_or([0; 3], |s| s.counts)
    }

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,n0,n1,n2,event")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.time,
                s.counts[0],
                s.counts[1],
                s.counts[2],
                s.event.code()
            )?;
        }
        Ok(())
    }
}

/// Start `(floor(nbar_0 K), 1, 0)`.
pub fn initial_state(params: &EcologyParams) -> Result<PopulationState, SimError> {
    let n0 = monomorphic_equilibrium(params, TypeIndex::WILD);
    if !(n0 > 0.0) {
        return Err(SimError::NonviableResident(n0));
    }
    Ok(PopulationState {
        counts: [(n0 * params.carrying_capacity as f64).floor() as u64, 1, 0],
        time: 0.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Mutant1Survives,
    Mutant2Survives,
    BothSurvive,
}

impl Condition {
    pub fn types(&self) -> &'static [usize] {
        match self {
            Condition::Mutant1Survives => &[1],
            Condition::Mutant2Survives => &[2],
            Condition::BothSurvive => &[1, 2],
        }
    }

    /// Met when each required mutant reached `level` at some point.
    pub fn holds(&self, traj: &Trajectory, level: u64) -> bool {
        self.types().iter().all(|&i| traj.peak[i] >= level)
    }
}

pub fn simulate(params: &EcologyParams, config: &SimConfig) -> Result<Trajectory, SimError> {
    run(params, config, None)
}

/// Rejection sampling: re-simulates with derived seeds until `condition`
/// holds at level `floor(eps K)`. Returns the accepted trajectory and the
/// number of rejected attempts.
pub fn simulate_conditioned(
    params: &EcologyParams,
    config: &SimConfig,
    condition: Condition,
    eps: f64,
    max_attempts: u32,
) -> Result<(Trajectory, u32), SimError> {
    let level = ((eps * params.carrying_capacity as f64).floor() as u64).max(1);
    for attempt in 0..max_attempts {
        let mut cfg = config.clone();
        if attempt > 0 {
            cfg.seed = derive_seed(config.seed, u64::from(attempt));
        }
        let traj = run(params, &cfg, Some((condition, level)))?;
        if traj.terminal != Terminal::Doomed && condition.holds(&traj, level) {
            return Ok((traj, attempt));
        }
    }
    Err(SimError::RejectionBudgetExceeded(max_attempts))
}

struct Engine<'a> {
    params: &'a EcologyParams,
    inv_k: f64,
    counts: [u64; 3],
    /// `sum_j C_ij n_j` for each `i`.
    load: [f64; 3],
}

impl Engine<'_> {
    fn refresh_load(&mut self) {
        for i in 0..3 {
            self.load[i] = (0..3).map(|j| self.params.comp[i][j] * self.counts[j] as f64).sum();
        }
    }

    fn change(&mut self, ty: usize, up: bool) {
        if up {
            self.counts[ty] += 1;
        } else {
            self.counts[ty] -= 1;
        }
        let sign = if up { 1.0 } else { -1.0 };
        for i in 0..3 {
            self.load[i] += sign * self.params.comp[i][ty];
        }
    }

    fn rates(&self) -> [f64; 6] {
        let p = self.params;
        let mut r = [0.0; 6];
        for i in 0..3 {
            let n = self.counts[i] as f64;
            r[2 * i] = p.beta[i] * n;
            r[2 * i + 1] = (p.delta[i] + self.load[i] * self.inv_k) * n;
        }
        r
    }
}

fn run(params: &EcologyParams, config: &SimConfig, condition: Option<(Condition, u64)>) -> Result<Trajectory, SimError> {
    params.validate()?;
    if !(config.horizon > 0.0) || config.max_events == 0 {
        return Err(SimError::Config("horizon and max_events must be positive".into()));
    }
    if let Some(dt) = config.record.stride {
        if !(dt > 0.0) {
            return Err(SimError::Config(format!("stride must be positive, got {dt}")));
        }
    }
    let injection = if config.mutation2_enabled {
        Some(
            params
                .injection_time()
                .ok_or_else(|| SimError::Config("mutation 2 enabled but alpha is unset".into()))?,
        )
    } else {
        None
    };
    let start = match config.initial {
        Some(c) => c,
        None => initial_state(params)?.counts,
    };

    let max_level = config.record.levels.iter().copied().max().unwrap_or(0) as usize;
    let mut is_level = vec![false; max_level + 1];
    for &l in &config.record.levels {
        is_level[l as usize] = true;
    }
    let hits_level = |n: u64| (n as usize) < is_level.len() && is_level[n as usize];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eng = Engine {
        params,
        inv_k: 1.0 / params.carrying_capacity as f64,
        counts: start,
        load: [0.0; 3],
    };
    eng.refresh_load();
    let mut t = 0.0f64;
    let mut samples = vec![Sample {
        time: 0.0,
        counts: start,
        event: Event::Sample,
    }];
    let mut next_stride = config.record.stride;
    let mut pending = injection;
    let mut injected2_at = None;
    let mut events = 0u64;
    let mut peak = start;
    let mut present = start.map(|n| n > 0);

    let stopped = |counts: &[u64; 3], present: &[bool; 3], pending: bool| -> Option<usize> {
        config.stop.iter().position(|rule| match *rule {
            StopRule::Reached { ty, level } => counts[ty.idx()] >= level,
            StopRule::Below { ty, level } => present[ty.idx()] && counts[ty.idx()] <= level,
            StopRule::Monomorphic => !pending && counts.iter().filter(|&&n| n > 0).count() <= 1,
        })
    };
    // A required mutant that died out before reaching the level can no
    // longer meet the condition; mutant 2 only counts once injected.
    let doomed = |counts: &[u64; 3], peak: &[u64; 3], pending: bool| -> bool {
        let Some((cond, level)) = condition else { return false };
        cond.types()
            .iter()
            .any(|&i| !(i == 2 && pending) && counts[i] == 0 && peak[i] < level)
    };

    let terminal = loop {
        if eng.counts == [0; 3] {
            break Terminal::AllExtinct;
        }
        if let Some(rule) = stopped(&eng.counts, &present, pending.is_some()) {
            break Terminal::Stopped(rule);
        }
        if doomed(&eng.counts, &peak, pending.is_some()) {
            break Terminal::Doomed;
        }
        if events >= config.max_events {
            break Terminal::EventBudget;
        }
        let rates = eng.rates();
        let total: f64 = rates.iter().sum();
        let u: f64 = rng.random();
        let t_next = t - (1.0 - u).ln() / total;

        // Stride samples hold the state before the next event.
        if let Some(mut s) = next_stride {
            let dt = config.record.stride.unwrap_or(1.0);
            while s <= t_next.min(pending.unwrap_or(f64::INFINITY)).min(config.horizon) {
                samples.push(Sample {
                    time: s,
                    counts: eng.counts,
                    event: Event::Sample,
                });
                s = (((s / dt).round()) + 1.0) * dt;
            }
            next_stride = Some(s);
        }

        if let Some(ti) = pending {
            if t_next >= ti && ti <= config.horizon {
                assert_eq!(eng.counts[2], 0, "mutant 2 injected twice");
                t = ti;
                eng.change(2, true);
                present[2] = true;
                peak[2] = peak[2].max(eng.counts[2]);
                pending = None;
                injected2_at = Some(ti);
                samples.push(Sample {
                    time: t,
                    counts: eng.counts,
                    event: Event::Inject,
                });
                // The exponential clock is memoryless, so the pending event
                // is discarded and redrawn from the new state.
                continue;
            }
        }
        if t_next > config.horizon {
            t = config.horizon;
            break Terminal::HorizonReached;
        }
        t = t_next;

        let mut pick = rng.random::<f64>() * total;
        let mut channel = 5;
        for (c, &r) in rates.iter().enumerate() {
            if pick < r {
                channel = c;
                break;
            }
            pick -= r;
        }
        // Guard against landing on a zero-rate channel through rounding.
        while rates[channel] == 0.0 {
            channel -= 1;
        }
        let ty = channel / 2;
        let birth = channel % 2 == 0;
        eng.change(ty, birth);
        events += 1;
        if events & 0xFFFF == 0 {
            eng.refresh_load();
        }
        peak[ty] = peak[ty].max(eng.counts[ty]);
        present[ty] = true;
        if config.record.every_event || hits_level(eng.counts[ty]) {
            samples.push(Sample {
                time: t,
                counts: eng.counts,
                event: if birth { Event::Birth(ty as u8) } else { Event::Death(ty as u8) },
            });
        }
    };

    if samples.last().map(|s| (s.time, s.counts)) != Some((t, eng.counts)) {
        samples.push(Sample {
            time: t,
            counts: eng.counts,
            event: Event::Sample,
        });
    }
    Ok(Trajectory {
        samples,
        terminal,
        injected2_at,
        events,
        peak,
        carrying_capacity: params.carrying_capacity,
        record: config.record.clone(),
    })
}
