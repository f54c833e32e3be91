//! Discrete-time simulation of emitted pairs: independent detector switching,
//! per-side inspect/delay/output, and event-complete tallies that are
//! reproducible under any parallel schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    Bit, CorrelationKind, DelayPolicy, InstructionCard, PairProgram, Setting, SwitchModel,
    TargetPair,
};
use crate::stats::TallyTable;
use crate::strategies::Strategy;

#[derive(Error, Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineError {
    #[error("trial count must be at least 1")]
    NoTrials,
}

/// One detector's setting and its per-step switching law. A detector evolves
/// on its own randomness only, independent of the source, both cards, and the
/// other detector.
#[derive(Clone, Copy, Debug)]
pub struct DetectorProcess {
    pub current: Setting,
    pub switch: SwitchModel,
}

impl DetectorProcess {
    pub fn new(initial: Setting, switch: SwitchModel) -> DetectorProcess {
        DetectorProcess { current: initial, switch }
    }

    /// One time step: flip to the other setting with probability p.
    pub fn step(&mut self, rng: &mut impl Rng) {
        if rng.random_bool(self.switch.p()) {
            self.current = self.current.other();
        }
    }
}

/// Everything recorded for one emitted pair. Exactly one output per side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialRecord {
    pub final_setting_a: Setting,
    pub final_setting_b: Setting,
    pub out_a: Bit,
    pub out_b: Bit,
    pub waited_a: u32,
    pub waited_b: u32,
}

impl TrialRecord {
    pub fn correlation(&self) -> CorrelationKind {
        CorrelationKind::of(self.out_a, self.out_b)
    }
}

/// One side's contribution to a trial record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideRecord {
    pub final_setting: Setting,
    pub out: Bit,
    pub waited: u32,
}

/// Simulate one particle from arrival to output. Reads only its own card,
/// its own detector, and its own randomness; locality is structural, not
/// asserted after the fact.
///
/// The output bit is always the card entry for the setting faced at output
/// time, so a switch onto the target during a delay yields the on-target bit.
pub fn run_side(
    card: &InstructionCard,
    policy: DelayPolicy,
    switch: SwitchModel,
    initial: Setting,
    rng: &mut impl Rng,
) -> SideRecord {
    let immediate = SideRecord { final_setting: initial, out: card.out(initial), waited: 0 };
    match policy {
        DelayPolicy::None => immediate,
        _ if initial == card.target => immediate,
        DelayPolicy::FixedDelay(steps) => {
            // The particle inspects again only when the delay elapses.
            let mut detector = DetectorProcess::new(initial, switch);
            for _ in 0..steps.get() {
                detector.step(rng);
            }
            SideRecord {
                final_setting: detector.current,
                out: card.out(detector.current),
                waited: steps.get(),
            }
        }
        DelayPolicy::WaitUntilTarget(max_steps) => {
            // Re-inspect after every step; give up after max_steps.
            let mut detector = DetectorProcess::new(initial, switch);
            let mut waited = 0;
            while waited < max_steps.get() {
                detector.step(rng);
                waited += 1;
                if detector.current == card.target {
                    break;
                }
            }
            SideRecord {
                final_setting: detector.current,
                out: card.out(detector.current),
                waited,
            }
        }
    }
}

/// Run both sides of one emitted pair. Initial detector settings are drawn
/// uniformly and independently, each from its own side's randomness; after
/// that the sides never share state.
pub fn run_trial(
    program: &PairProgram,
    policy: DelayPolicy,
    model: SwitchModel,
    rng_a: &mut impl Rng,
    rng_b: &mut impl Rng,
) -> TrialRecord {
    let initial_a = random_setting(rng_a);
    let initial_b = random_setting(rng_b);
    let a = run_side(&program.card_a, policy, model, initial_a, rng_a);
    let b = run_side(&program.card_b, policy, model, initial_b, rng_b);
    TrialRecord {
        final_setting_a: a.final_setting,
        final_setting_b: b.final_setting,
        out_a: a.out,
        out_b: b.out,
        waited_a: a.waited,
        waited_b: b.waited,
    }
}

/// Stream lanes per trial: the source draws targets and the shared bit, each
/// side owns its detector randomness outright.
pub const LANE_SOURCE: u64 = 0;
pub const LANE_SIDE_A: u64 = 1;
pub const LANE_SIDE_B: u64 = 2;
const STREAM_LANES: u64 = 4;

/// The generator for one (trial, lane) cell: a fixed function of the master
/// seed only, so any execution order reproduces the same experiment.
pub fn lane_rng(seed: u64, trial: u64, lane: u64) -> ChaCha8Rng {
    debug_assert!(lane < STREAM_LANES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(STREAM_LANES).wrapping_add(lane));
    rng
}

fn random_setting(rng: &mut impl Rng) -> Setting {
    if rng.random::<bool>() {
        Setting::S2
    } else {
        Setting::S1
    }
}

fn random_bit(rng: &mut impl Rng) -> Bit {
    Bit::new(rng.random::<bool>())
}

/// Emit and measure the pair at `index` within the experiment `seed` defines:
/// fresh uniform targets and shared bit from the source lane, then one trial
/// on the side lanes. Exposed so tests can replay any single trial.
pub fn indexed_trial(
    strategy: Strategy,
    policy: DelayPolicy,
    model: SwitchModel,
    seed: u64,
    index: u64,
) -> (PairProgram, TrialRecord) {
    let mut source = lane_rng(seed, index, LANE_SOURCE);
    let targets = TargetPair::new(random_setting(&mut source), random_setting(&mut source));
    let x = random_bit(&mut source);
    let program = strategy.program(targets, x);
    let mut rng_a = lane_rng(seed, index, LANE_SIDE_A);
    let mut rng_b = lane_rng(seed, index, LANE_SIDE_B);
    let record = run_trial(&program, policy, model, &mut rng_a, &mut rng_b);
    (program, record)
}

/// Run `n_trials` independent trials and tally every one of them. The tally
/// is a pure function of (strategy, policy, model, n_trials, seed); trials
/// run in parallel and partial tallies merge cell-wise, so no schedule can
/// change the result.
pub fn run_experiment(
    strategy: Strategy,
    policy: DelayPolicy,
    model: SwitchModel,
    n_trials: u64,
    seed: u64,
) -> Result<TallyTable, EngineError> {
    if n_trials == 0 {
        return Err(EngineError::NoTrials);
    }
    let tally = (0..n_trials)
        .into_par_iter()
        .fold(TallyTable::new, |mut tally, index| {
            let (_, record) = indexed_trial(strategy, policy, model, seed, index);
            tally.record(record.final_setting_a, record.final_setting_b, record.correlation());
            tally
        })
        .reduce(TallyTable::new, |mut left, right| {
            left.merge(&right);
            left
        });
    Ok(tally)
}
