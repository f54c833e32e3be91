//! Domain vocabulary shared by every other module: detector settings, binary
//! outputs, instruction cards, switch models, delay policies, and the fixed
//! Same/Anti pattern the protocol aims to reproduce.

use std::fmt;
use std::num::NonZeroU32;
use std::ops::BitXor;

use thiserror::Error;

/// One of the two possible detector positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Setting {
    S1,
    S2,
}

impl Setting {
    pub const ALL: [Setting; 2] = [Setting::S1, Setting::S2];

    /// The unique setting different from `self`. Involution: `s.other().other() == s`.
    pub fn other(self) -> Setting {
        match self {
            Setting::S1 => Setting::S2,
            Setting::S2 => Setting::S1,
        }
    }

    /// Array slot: S1 → 0, S2 → 1.
    pub fn index(self) -> usize {
        match self {
            Setting::S1 => 0,
            Setting::S2 => 1,
        }
    }

    /// 1-based label used in reports.
    pub fn label(self) -> u8 {
        match self {
            Setting::S1 => 1,
            Setting::S2 => 2,
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// A binary outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bit(bool);

impl Bit {
    pub const ZERO: Bit = Bit(false);
    pub const ONE: Bit = Bit(true);

    pub fn new(value: bool) -> Bit {
        Bit(value)
    }

    pub fn flipped(self) -> Bit {
        Bit(!self.0)
    }

    pub fn is_one(self) -> bool {
        self.0
    }

    pub fn as_u8(self) -> u8 {
        self.0 as u8
    }
}

impl BitXor for Bit {
    type Output = Bit;

    fn bitxor(self, rhs: Bit) -> Bit {
        Bit(self.0 ^ rhs.0)
    }
}

impl From<bool> for Bit {
    fn from(value: bool) -> Bit {
        Bit(value)
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// The pair of target settings a source assigns to the two particles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TargetPair {
    pub a: Setting,
    pub b: Setting,
}

impl TargetPair {
    pub const ALL: [TargetPair; 4] = [
        TargetPair { a: Setting::S1, b: Setting::S1 },
        TargetPair { a: Setting::S1, b: Setting::S2 },
        TargetPair { a: Setting::S2, b: Setting::S1 },
        TargetPair { a: Setting::S2, b: Setting::S2 },
    ];

    pub fn new(a: Setting, b: Setting) -> TargetPair {
        TargetPair { a, b }
    }

    /// Slot in per-pair tables, following the order of [`TargetPair::ALL`].
    pub fn index(self) -> usize {
        self.a.index() * 2 + self.b.index()
    }
}

/// What one particle carries away from the source: its target setting and the
/// output bit to produce at each possible detector setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InstructionCard {
    pub target: Setting,
    out: [Bit; 2],
}

impl InstructionCard {
    pub fn new(target: Setting, out_s1: Bit, out_s2: Bit) -> InstructionCard {
        InstructionCard { target, out: [out_s1, out_s2] }
    }

    /// The output bit for a given detector setting; total over both settings.
    pub fn out(&self, setting: Setting) -> Bit {
        self.out[setting.index()]
    }
}

/// The instruction cards handed to the two particles of one emitted pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairProgram {
    pub card_a: InstructionCard,
    pub card_b: InstructionCard,
}

/// Whether two outputs agree or disagree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorrelationKind {
    Same,
    Anti,
}

impl CorrelationKind {
    pub fn of(a: Bit, b: Bit) -> CorrelationKind {
        if a == b {
            CorrelationKind::Same
        } else {
            CorrelationKind::Anti
        }
    }
}

/// The correlation each final-setting cell must show for the CHSH sum to grow:
/// the three plus-terms want Anti, the minus-term (S2, S2) wants Same.
pub fn desired_correlation(a: Setting, b: Setting) -> CorrelationKind {
    match (a, b) {
        (Setting::S2, Setting::S2) => CorrelationKind::Same,
        _ => CorrelationKind::Anti,
    }
}

#[derive(Error, Debug, Clone, Copy, PartialEq)]
pub enum ModelError {
    #[error("switch probability must lie in [0, 1], got {0}")]
    InvalidSwitchProbability(f64),
}

/// Per-time-step probability that a detector flips its setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchModel {
    p: f64,
}

impl SwitchModel {
    pub fn new(p: f64) -> Result<SwitchModel, ModelError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidSwitchProbability(p));
        }
        Ok(SwitchModel { p })
    }

    pub fn p(self) -> f64 {
        self.p
    }
}

/// What a particle does when its first inspection does not show the target
/// setting. `None` outputs immediately regardless of the setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayPolicy {
    None,
    FixedDelay(NonZeroU32),
    WaitUntilTarget(NonZeroU32),
}

impl DelayPolicy {
    /// Fixed delay of `steps` time steps; `None` if `steps == 0`.
    pub const fn fixed(steps: u32) -> Option<DelayPolicy> {
        match NonZeroU32::new(steps) {
            Some(steps) => Some(DelayPolicy::FixedDelay(steps)),
            None => None,
        }
    }

    /// Re-inspect after every step, giving up after `max_steps`; `None` if zero.
    pub const fn wait(max_steps: u32) -> Option<DelayPolicy> {
        match NonZeroU32::new(max_steps) {
            Some(max_steps) => Some(DelayPolicy::WaitUntilTarget(max_steps)),
            None => None,
        }
    }
}

impl fmt::Display for DelayPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayPolicy::None => write!(f, "none"),
            DelayPolicy::FixedDelay(steps) => write!(f, "fixed:{steps}"),
            DelayPolicy::WaitUntilTarget(max) => write!(f, "wait:{max}"),
        }
    }
}
