//! Instruction-card strategies: the delayed-output program family and static
//! lookup tables, plus exhaustive enumeration of the static family.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Bit, CorrelationKind, InstructionCard, PairProgram, Setting, TargetPair};

/// Pre-assigned outputs for the four questions A1, A2, B1, B2, independent of
/// anything that happens after emission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StaticTable {
    pub a1: Bit,
    pub a2: Bit,
    pub b1: Bit,
    pub b2: Bit,
}

impl StaticTable {
    /// All 16 assignments, ordered by the `a1 a2 b1 b2` bit pattern.
    pub fn all() -> impl Iterator<Item = StaticTable> {
        (0u8..16).map(|code| StaticTable {
            a1: Bit::new(code & 0b1000 != 0),
            a2: Bit::new(code & 0b0100 != 0),
            b1: Bit::new(code & 0b0010 != 0),
            b2: Bit::new(code & 0b0001 != 0),
        })
    }

    fn out_a(self, setting: Setting) -> Bit {
        match setting {
            Setting::S1 => self.a1,
            Setting::S2 => self.a2,
        }
    }

    fn out_b(self, setting: Setting) -> Bit {
        match setting {
            Setting::S1 => self.b1,
            Setting::S2 => self.b2,
        }
    }

    /// CHSH S for this table under uniform independent settings, with each
    /// term taken as the anti-correlated fraction of its cell. Exact: every
    /// cell is deterministic, so each term is 0 or 1.
    pub fn s_value(self) -> f64 {
        let anti = |a: Setting, b: Setting| -> f64 {
            (CorrelationKind::of(self.out_a(a), self.out_b(b)) == CorrelationKind::Anti) as u8
                as f64
        };
        anti(Setting::S1, Setting::S1) + anti(Setting::S1, Setting::S2)
            + anti(Setting::S2, Setting::S1)
            - anti(Setting::S2, Setting::S2)
    }
}

impl fmt::Display for StaticTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}{}", self.a1, self.a2, self.b1, self.b2)
    }
}

#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("static table must be four binary digits in the order a1 a2 b1 b2, got {0:?}")]
pub struct ParseStaticTableError(String);

impl FromStr for StaticTable {
    type Err = ParseStaticTableError;

    fn from_str(s: &str) -> Result<StaticTable, ParseStaticTableError> {
        let digits: Vec<Bit> = s
            .chars()
            .map(|c| match c {
                '0' => Ok(Bit::ZERO),
                '1' => Ok(Bit::ONE),
                _ => Err(ParseStaticTableError(s.to_owned())),
            })
            .collect::<Result<_, _>>()?;
        match digits[..] {
            [a1, a2, b1, b2] => Ok(StaticTable { a1, a2, b1, b2 }),
            _ => Err(ParseStaticTableError(s.to_owned())),
        }
    }
}

/// How the source fills in instruction cards for each emitted pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Cards keyed to the pair's fresh target settings and shared random bit.
    Delay,
    /// The same fixed table for every pair, ignoring targets and the shared bit.
    Static(StaticTable),
}

impl Strategy {
    /// The program the source emits for one pair, given that pair's target
    /// settings and shared random bit.
    pub fn program(self, targets: TargetPair, x: Bit) -> PairProgram {
        match self {
            Strategy::Delay => delay_strategy_program(targets, x),
            Strategy::Static(table) => static_program(table),
        }
    }
}

/// The delayed-output instruction cards for target pair `(τa, τb)` and shared
/// bit `x`.
///
/// The four bits per card are the unique solution (up to flipping `x`, which
/// flips every bit on both cards) of the constraint set: each final-setting
/// cell in which at least one particle sits at its target must show the
/// correlation `desired_correlation` asks for. Only the double-miss cell
/// `(other(τa), other(τb))` is left unconstrained, and there the cards fail
/// the desired correlation; no assignment does better, because the four
/// desired parities XOR to 1. Both facts are certified exhaustively in the
/// oracle tests.
pub fn delay_strategy_program(targets: TargetPair, x: Bit) -> PairProgram {
    let xf = x.flipped();
    let ((a1, a2), (b1, b2)) = match (targets.a, targets.b) {
        (Setting::S1, Setting::S1) => ((x, x), (xf, xf)),
        (Setting::S1, Setting::S2) => ((x, xf), (xf, xf)),
        (Setting::S2, Setting::S1) => ((x, x), (xf, x)),
        (Setting::S2, Setting::S2) => ((xf, x), (xf, x)),
    };
    PairProgram {
        card_a: InstructionCard::new(targets.a, a1, a2),
        card_b: InstructionCard::new(targets.b, b1, b2),
    }
}

/// Cards that reproduce a static table. The target fields are never consulted
/// when the delay policy is `None`; they are fixed at S1 so the program is a
/// pure function of the table.
pub fn static_program(table: StaticTable) -> PairProgram {
    PairProgram {
        card_a: InstructionCard::new(Setting::S1, table.a1, table.a2),
        card_b: InstructionCard::new(Setting::S1, table.b1, table.b2),
    }
}

/// Every static table together with its exact S value.
pub fn enumerate_static() -> Vec<(StaticTable, f64)> {
    StaticTable::all().map(|t| (t, t.s_value())).collect()
}
