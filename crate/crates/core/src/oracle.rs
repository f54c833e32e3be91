//! Ground truth without sampling: exact cell probabilities by exhaustive
//! enumeration of the finite per-trial sample space, brute-force search over
//! all 65536 per-target instruction tables, and the parity argument for why
//! one cell must always be wrong.

use std::fmt;
use std::num::NonZeroU32;

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{
    desired_correlation, Bit, CorrelationKind, DelayPolicy, InstructionCard, PairProgram, Setting,
    SwitchModel, TargetPair,
};
use crate::stats::{cell_slot, net_flip_probability, StatsError};
use crate::strategies::{delay_strategy_program, Strategy};

/// Joint same/anti probability mass for one final-setting cell.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CellProb {
    pub same: f64,
    pub anti: f64,
}

impl CellProb {
    pub fn total(self) -> f64 {
        self.same + self.anti
    }
}

/// Exact counterpart of a tally table: probability mass instead of counts,
/// summing to 1 over all cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactTally {
    cells: [[CellProb; 2]; 2],
}

impl ExactTally {
    fn add(&mut self, a: Setting, b: Setting, kind: CorrelationKind, weight: f64) {
        let cell = &mut self.cells[a.index()][b.index()];
        match kind {
            CorrelationKind::Same => cell.same += weight,
            CorrelationKind::Anti => cell.anti += weight,
        }
    }

    pub fn cell(&self, a: Setting, b: Setting) -> CellProb {
        self.cells[a.index()][b.index()]
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().map(|c| c.total()).sum()
    }

    /// Conditional probability of Anti given the cell, the exact counterpart
    /// of a tallied anti fraction.
    pub fn anti_fraction(&self, a: Setting, b: Setting) -> Result<f64, StatsError> {
        let cell = self.cell(a, b);
        if cell.total() == 0.0 {
            return Err(StatsError::EmptyCell(a, b));
        }
        Ok(cell.anti / cell.total())
    }

    /// The four conditional anti fractions in [`cell_slot`] order.
    pub fn fractions(&self) -> Result<[f64; 4], StatsError> {
        let mut out = [0.0; 4];
        for a in Setting::ALL {
            for b in Setting::ALL {
                out[cell_slot(a, b)] = self.anti_fraction(a, b)?;
            }
        }
        Ok(out)
    }

    /// CHSH S in the fraction convention.
    pub fn s_paper(&self) -> Result<f64, StatsError> {
        let f = self.fractions()?;
        Ok(f[0] + f[1] + f[2] - f[3])
    }
}

/// At most two distinct (final setting, output) outcomes exist per side:
/// stay where it started or reach the card's target.
struct SideOutcomes {
    items: [(Setting, Bit, f64); 2],
    len: usize,
}

impl SideOutcomes {
    fn one(setting: Setting, out: Bit) -> SideOutcomes {
        SideOutcomes { items: [(setting, out, 1.0); 2], len: 1 }
    }

    fn two(first: (Setting, Bit, f64), second: (Setting, Bit, f64)) -> SideOutcomes {
        SideOutcomes { items: [first, second], len: 2 }
    }

    fn iter(&self) -> impl Iterator<Item = (Setting, Bit, f64)> + '_ {
        self.items[..self.len].iter().copied()
    }
}

/// Distribution of one particle's (final setting, output) given its card, the
/// delay policy, and the setting first inspected.
fn side_outcomes(card: &InstructionCard, policy: DelayPolicy, p: f64, initial: Setting) -> SideOutcomes {
    let on_target = initial == card.target;
    match policy {
        DelayPolicy::None => SideOutcomes::one(initial, card.out(initial)),
        _ if on_target => SideOutcomes::one(initial, card.out(initial)),
        DelayPolicy::FixedDelay(steps) => {
            // The detector evolves blind for `steps` ticks; only the net flip
            // matters for where the particle finally looks.
            let reach = net_flip_probability(p, steps.get());
            SideOutcomes::two(
                (card.target, card.out(card.target), reach),
                (initial, card.out(initial), 1.0 - reach),
            )
        }
        DelayPolicy::WaitUntilTarget(max_steps) => {
            // From the off-target setting, any flip lands on the target, so
            // "never reached within max_steps" means no flip at all.
            let miss = (1.0 - p).powi(max_steps.get() as i32);
            SideOutcomes::two(
                (card.target, card.out(card.target), 1.0 - miss),
                (initial, card.out(initial), miss),
            )
        }
    }
}

/// Exact tally for an arbitrary source: `program_of` maps each (target pair,
/// shared bit) to the emitted cards. Enumerates targets (weight 1/4 each),
/// the shared bit (1/2), initial settings (1/4 per pair), and both sides'
/// outcome distributions.
pub fn exact_tally_with(
    program_of: impl Fn(TargetPair, Bit) -> PairProgram,
    policy: DelayPolicy,
    model: SwitchModel,
) -> ExactTally {
    let p = model.p();
    let mut tally = ExactTally::default();
    for targets in TargetPair::ALL {
        for x in [Bit::ZERO, Bit::ONE] {
            let program = program_of(targets, x);
            for initial_a in Setting::ALL {
                for initial_b in Setting::ALL {
                    let base = 0.25 * 0.5 * 0.25;
                    let side_a = side_outcomes(&program.card_a, policy, p, initial_a);
                    let side_b = side_outcomes(&program.card_b, policy, p, initial_b);
                    for (final_a, out_a, w_a) in side_a.iter() {
                        for (final_b, out_b, w_b) in side_b.iter() {
                            tally.add(
                                final_a,
                                final_b,
                                CorrelationKind::of(out_a, out_b),
                                base * w_a * w_b,
                            );
                        }
                    }
                }
            }
        }
    }
    tally
}

/// Exact tally for one of the packaged strategies.
pub fn exact_tally(strategy: Strategy, policy: DelayPolicy, model: SwitchModel) -> ExactTally {
    exact_tally_with(|targets, x| strategy.program(targets, x), policy, model)
}

/// Exact CHSH S (fraction convention) for one of the packaged strategies.
pub fn exact_s(
    strategy: Strategy,
    policy: DelayPolicy,
    model: SwitchModel,
) -> Result<f64, StatsError> {
    exact_tally(strategy, policy, model).s_paper()
}

/// One full source behavior in the brute-force search space: four output bits
/// (a at S1, a at S2, b at S1, b at S2) for each of the four target pairs,
/// stored relative to x = 0. The shared bit flips every output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TableAssignment(u16);

impl TableAssignment {
    pub const COUNT: u32 = 1 << 16;

    pub fn from_encoding(encoding: u16) -> TableAssignment {
        TableAssignment(encoding)
    }

    pub fn encoding(self) -> u16 {
        self.0
    }

    /// The assignment the delayed-output strategy uses, read off the strategy
    /// itself so the two can never drift apart.
    pub fn derived() -> TableAssignment {
        let mut encoding = 0u16;
        for targets in TargetPair::ALL {
            let program = delay_strategy_program(targets, Bit::ZERO);
            let bits = [
                program.card_a.out(Setting::S1),
                program.card_a.out(Setting::S2),
                program.card_b.out(Setting::S1),
                program.card_b.out(Setting::S2),
            ];
            for (k, bit) in bits.into_iter().enumerate() {
                encoding |= (bit.as_u8() as u16) << (targets.index() * 4 + k);
            }
        }
        TableAssignment(encoding)
    }

    /// The assignment with every output bit complemented; produces the same
    /// programs with the roles of x = 0 and x = 1 swapped.
    pub fn flip_x(self) -> TableAssignment {
        TableAssignment(!self.0)
    }

    fn bits_for(self, targets: TargetPair) -> [Bit; 4] {
        let group = self.0 >> (targets.index() * 4);
        [
            Bit::new(group & 0b0001 != 0),
            Bit::new(group & 0b0010 != 0),
            Bit::new(group & 0b0100 != 0),
            Bit::new(group & 0b1000 != 0),
        ]
    }

    /// The cards this assignment emits for one pair.
    pub fn program(self, targets: TargetPair, x: Bit) -> PairProgram {
        let [mut a1, mut a2, mut b1, mut b2] = self.bits_for(targets);
        if x.is_one() {
            a1 = a1.flipped();
            a2 = a2.flipped();
            b1 = b1.flipped();
            b2 = b2.flipped();
        }
        PairProgram {
            card_a: InstructionCard::new(targets.a, a1, a2),
            card_b: InstructionCard::new(targets.b, b1, b2),
        }
    }
}

impl fmt::Display for TableAssignment {
    /// Four dash-separated groups in target-pair order (1,1) (1,2) (2,1)
    /// (2,2), each `a1 a2 b1 b2` at x = 0.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, targets) in TargetPair::ALL.into_iter().enumerate() {
            if i > 0 {
                write!(f, "-")?;
            }
            let [a1, a2, b1, b2] = self.bits_for(targets);
            write!(f, "{a1}{a2}{b1}{b2}")?;
        }
        Ok(())
    }
}

/// Exhaustive search over all assignments under a fixed delay: the maximum
/// exact S and one maximizer (ties broken by smallest encoding).
pub fn brute_force_tables(
    model: SwitchModel,
    delay_steps: NonZeroU32,
) -> (TableAssignment, f64) {
    let policy = DelayPolicy::FixedDelay(delay_steps);
    let (encoding, s_max) = (0..TableAssignment::COUNT)
        .into_par_iter()
        .map(|encoding| {
            let assignment = TableAssignment::from_encoding(encoding as u16);
            let s = exact_tally_with(|t, x| assignment.program(t, x), policy, model)
                .s_paper()
                .expect("final-setting masses do not depend on output bits, no cell is empty");
            (encoding, s)
        })
        .reduce(
            || (u32::MAX, f64::NEG_INFINITY),
            |best, candidate| {
                if candidate.1 > best.1 || (candidate.1 == best.1 && candidate.0 < best.0) {
                    candidate
                } else {
                    best
                }
            },
        );
    (TableAssignment::from_encoding(encoding as u16), s_max)
}

/// Which cell the derived cards get wrong for one target pair.
#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub struct WrongCell {
    pub target_a: u8,
    pub target_b: u8,
    pub cell_a: u8,
    pub cell_b: u8,
}

/// Exhaustive certificate that no instruction table satisfies all four
/// final-setting cells, and that the derived cards fail only at the
/// double-miss cell.
#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct ObstructionReport {
    /// Cells whose desired correlation is Anti; always 3 of 4.
    pub desired_anti_cells: u8,
    /// XOR over the four desired-correlation bits; odd parity is the
    /// obstruction, since any table's four cell parities XOR to 0.
    pub desired_parity_odd: bool,
    /// Target pairs times 16 four-bit tables.
    pub cases_checked: u32,
    /// Best simultaneous satisfaction over all cases; always 3.
    pub max_satisfied_cells: u8,
    /// The one failing cell of the derived cards, per target pair.
    pub derived_wrong_cells: Vec<WrongCell>,
    /// True when every failing cell above is (other(target_a), other(target_b)).
    pub wrong_cell_always_double_miss: bool,
}

fn satisfied_cells(out_a: impl Fn(Setting) -> Bit, out_b: impl Fn(Setting) -> Bit) -> u8 {
    let mut satisfied = 0;
    for a in Setting::ALL {
        for b in Setting::ALL {
            if CorrelationKind::of(out_a(a), out_b(b)) == desired_correlation(a, b) {
                satisfied += 1;
            }
        }
    }
    satisfied
}

pub fn parity_obstruction_check() -> ObstructionReport {
    let mut desired_anti_cells = 0;
    let mut parity = Bit::ZERO;
    for a in Setting::ALL {
        for b in Setting::ALL {
            let anti = desired_correlation(a, b) == CorrelationKind::Anti;
            desired_anti_cells += anti as u8;
            parity = parity ^ Bit::new(anti);
        }
    }

    let mut cases_checked = 0;
    let mut max_satisfied_cells = 0;
    for _targets in TargetPair::ALL {
        // Targets only select which cell a table is allowed to miss; the
        // satisfaction ceiling is a property of the bits alone, checked once
        // per pair anyway to match the claimed case count.
        for code in 0u8..16 {
            let bit = |k: u8| Bit::new(code >> k & 1 == 1);
            let (a1, a2, b1, b2) = (bit(0), bit(1), bit(2), bit(3));
            let count = satisfied_cells(
                |s| if s == Setting::S1 { a1 } else { a2 },
                |s| if s == Setting::S1 { b1 } else { b2 },
            );
            max_satisfied_cells = max_satisfied_cells.max(count);
            cases_checked += 1;
        }
    }

    let mut derived_wrong_cells = Vec::new();
    let mut wrong_cell_always_double_miss = true;
    for targets in TargetPair::ALL {
        let program = delay_strategy_program(targets, Bit::ZERO);
        for a in Setting::ALL {
            for b in Setting::ALL {
                let got = CorrelationKind::of(program.card_a.out(a), program.card_b.out(b));
                if got != desired_correlation(a, b) {
                    derived_wrong_cells.push(WrongCell {
                        target_a: targets.a.label(),
                        target_b: targets.b.label(),
                        cell_a: a.label(),
                        cell_b: b.label(),
                    });
                    if (a, b) != (targets.a.other(), targets.b.other()) {
                        wrong_cell_always_double_miss = false;
                    }
                }
            }
        }
    }
    // One wrong cell per target pair; more would contradict max_satisfied_cells.
    wrong_cell_always_double_miss &= derived_wrong_cells.len() == TargetPair::ALL.len();

    ObstructionReport {
        desired_anti_cells,
        desired_parity_odd: parity == Bit::ONE,
        cases_checked,
        max_satisfied_cells,
        derived_wrong_cells,
        wrong_cell_always_double_miss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::StaticTable;

    fn sm(p: f64) -> SwitchModel {
        SwitchModel::new(p).unwrap()
    }

    fn fixed(steps: u32) -> DelayPolicy {
        DelayPolicy::fixed(steps).unwrap()
    }

    #[test]
    fn delay_strategy_fractions_at_p_zero() {
        // No switching: every off-target particle stays put, and only the
        // double-miss cell (probability 1/4 of its cell) goes wrong.
        let tally = exact_tally(Strategy::Delay, fixed(1), sm(0.0));
        let f = tally.fractions().unwrap();
        assert_eq!(f, [0.75, 0.75, 0.75, 0.25]);
        assert_eq!(tally.s_paper().unwrap(), 2.0);
    }

    #[test]
    fn delay_strategy_fractions_at_p_one() {
        // Deterministic flips repair every double miss.
        let tally = exact_tally(Strategy::Delay, fixed(1), sm(1.0));
        let f = tally.fractions().unwrap();
        assert_eq!(f, [1.0, 1.0, 1.0, 0.0]);
        assert_eq!(tally.s_paper().unwrap(), 3.0);
    }

    #[test]
    fn static_table_1000_fractions() {
        let table: StaticTable = "1000".parse().unwrap();
        for p in [0.0, 0.3, 1.0] {
            let tally = exact_tally(Strategy::Static(table), DelayPolicy::None, sm(p));
            assert_eq!(tally.fractions().unwrap(), [1.0, 1.0, 0.0, 0.0]);
            assert_eq!(tally.s_paper().unwrap(), 2.0);
        }
    }

    #[test]
    fn exact_s_matches_closed_form_at_p_03() {
        let s = exact_s(Strategy::Delay, fixed(1), sm(0.3)).unwrap();
        assert!((s - 2.51).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        for p in [0.0, 0.17, 0.5, 0.99, 1.0] {
            for policy in [DelayPolicy::None, fixed(1), fixed(3), DelayPolicy::wait(4).unwrap()] {
                let tally = exact_tally(Strategy::Delay, policy, sm(p));
                assert!((tally.total() - 1.0).abs() < 1e-12, "p={p} policy={policy}");
            }
        }
    }

    #[test]
    fn delay_strategy_cells_carry_quarter_mass_each() {
        for p in [0.0, 0.3, 0.5, 1.0] {
            for policy in [DelayPolicy::None, fixed(1), fixed(2), DelayPolicy::wait(3).unwrap()] {
                let tally = exact_tally(Strategy::Delay, policy, sm(p));
                for a in Setting::ALL {
                    for b in Setting::ALL {
                        assert!(
                            (tally.cell(a, b).total() - 0.25).abs() < 1e-12,
                            "p={p} policy={policy} cell=({a},{b})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn derived_assignment_reproduces_the_strategy() {
        let derived = TableAssignment::derived();
        for targets in TargetPair::ALL {
            for x in [Bit::ZERO, Bit::ONE] {
                assert_eq!(derived.program(targets, x), delay_strategy_program(targets, x));
            }
        }
    }

    #[test]
    fn x_flip_preserves_exact_s() {
        let derived = TableAssignment::derived();
        let flipped = derived.flip_x();
        assert_ne!(derived, flipped);
        for p in [0.2, 0.6] {
            let s = |a: TableAssignment| {
                exact_tally_with(|t, x| a.program(t, x), fixed(1), sm(p)).s_paper().unwrap()
            };
            assert_eq!(s(derived), s(flipped));
        }
    }

    #[test]
    fn brute_force_at_half_finds_the_derived_ceiling() {
        let (best, s_max) = brute_force_tables(sm(0.5), NonZeroU32::new(1).unwrap());
        assert!((s_max - 2.75).abs() < 1e-12);
        let derived_s = exact_s(Strategy::Delay, fixed(1), sm(0.5)).unwrap();
        assert!((derived_s - s_max).abs() < 1e-12);
        // The returned maximizer is one of several (x-flips per target pair
        // preserve S), so check its score, not its identity.
        let best_s =
            exact_tally_with(|t, x| best.program(t, x), fixed(1), sm(0.5)).s_paper().unwrap();
        assert_eq!(best_s, s_max);
    }

    #[test]
    fn obstruction_report_certifies_the_ceiling() {
        let report = parity_obstruction_check();
        assert_eq!(report.desired_anti_cells, 3);
        assert!(report.desired_parity_odd);
        assert_eq!(report.cases_checked, 64);
        assert_eq!(report.max_satisfied_cells, 3);
        assert_eq!(report.derived_wrong_cells.len(), 4);
        assert!(report.wrong_cell_always_double_miss);
        assert_eq!(
            report.derived_wrong_cells[0],
            WrongCell { target_a: 1, target_b: 1, cell_a: 2, cell_b: 2 }
        );
    }

    #[test]
    fn assignment_display_groups_by_target_pair() {
        let derived = TableAssignment::derived();
        assert_eq!(derived.to_string(), "0011-0111-0010-1010");
        assert_eq!(TableAssignment::from_encoding(0).to_string(), "0000-0000-0000-0000");
    }
}
