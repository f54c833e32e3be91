//! Counting and scoring: tally tables over final-setting cells, CHSH S in the
//! anti-fraction and standard conventions, closed-form predictions for the
//! delayed-output strategy, and Wilson score intervals.

use thiserror::Error;

use crate::model::{CorrelationKind, Setting};

/// Default confidence level for reported half-widths (two-sided 95%).
pub const DEFAULT_Z: f64 = 1.96;

/// Two-sided 99.99% quantile, for agreement checks that almost never
/// false-alarm on a correct implementation.
pub const Z_99_99: f64 = 3.890591886413094;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum StatsError {
    #[error("tally cell ({0}, {1}) has no samples")]
    EmptyCell(Setting, Setting),
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("successes ({successes}) exceed sample count ({n})")]
    TooManySuccesses { successes: u64, n: u64 },
}

/// Same/anti counts for one final-setting cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CellCount {
    pub same: u64,
    pub anti: u64,
}

impl CellCount {
    pub fn total(self) -> u64 {
        self.same + self.anti
    }
}

/// Correlation counts indexed by the final settings of the two detectors.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TallyTable {
    cells: [[CellCount; 2]; 2],
}

impl TallyTable {
    pub fn new() -> TallyTable {
        TallyTable::default()
    }

    pub fn record(&mut self, a: Setting, b: Setting, kind: CorrelationKind) {
        let cell = &mut self.cells[a.index()][b.index()];
        match kind {
            CorrelationKind::Same => cell.same += 1,
            CorrelationKind::Anti => cell.anti += 1,
        }
    }

    pub fn cell(&self, a: Setting, b: Setting) -> CellCount {
        self.cells[a.index()][b.index()]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().map(|c| c.total()).sum()
    }

    /// Cell-wise addition. Commutative and associative, so parallel partial
    /// tallies reduce to the same table in any order.
    pub fn merge(&mut self, other: &TallyTable) {
        for a in 0..2 {
            for b in 0..2 {
                self.cells[a][b].same += other.cells[a][b].same;
                self.cells[a][b].anti += other.cells[a][b].anti;
            }
        }
    }
}

/// Fraction of anti-correlated pairs among all pairs recorded in cell `(a, b)`.
pub fn anti_fraction(tally: &TallyTable, a: Setting, b: Setting) -> Result<f64, StatsError> {
    let cell = tally.cell(a, b);
    if cell.total() == 0 {
        return Err(StatsError::EmptyCell(a, b));
    }
    Ok(cell.anti as f64 / cell.total() as f64)
}

/// Slot of cell `(a, b)` in the flattened order (1,1), (1,2), (2,1), (2,2).
pub fn cell_slot(a: Setting, b: Setting) -> usize {
    a.index() * 2 + b.index()
}

/// One CHSH evaluation of a tally, carrying both conventions side by side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SReport {
    /// Anti-correlated fraction per cell, in [`cell_slot`] order.
    pub e_frac: [f64; 4],
    /// S = e11 + e12 + e21 - e22 over the anti fractions. Range [-1, 3].
    pub s_paper: f64,
    /// Standard correlators P(same) - P(anti) per cell; each is 1 - 2 e_frac.
    pub e_std: [f64; 4],
    /// S over the standard correlators. Always 2 - 2 * s_paper.
    pub s_std: f64,
    /// Sum of the four per-cell Wilson half-widths at [`DEFAULT_Z`]; a
    /// conservative half-width for both S estimates.
    pub ci_halfwidth: f64,
    /// Total recorded pairs.
    pub n: u64,
}

/// Score a tally. Fails with the offending cell when any cell is empty.
pub fn chsh_s(tally: &TallyTable) -> Result<SReport, StatsError> {
    let mut e_frac = [0.0; 4];
    let mut e_std = [0.0; 4];
    let mut ci_halfwidth = 0.0;
    for a in Setting::ALL {
        for b in Setting::ALL {
            let cell = tally.cell(a, b);
            let f = anti_fraction(tally, a, b)?;
            let slot = cell_slot(a, b);
            e_frac[slot] = f;
            e_std[slot] = 1.0 - 2.0 * f;
            let (lo, hi) = wilson_interval(cell.anti, cell.total(), DEFAULT_Z)?;
            ci_halfwidth += (hi - lo) / 2.0;
        }
    }
    let s_of = |e: &[f64; 4]| e[0] + e[1] + e[2] - e[3];
    Ok(SReport {
        e_frac,
        s_paper: s_of(&e_frac),
        e_std,
        s_std: s_of(&e_std),
        ci_halfwidth,
        n: tally.total(),
    })
}

/// Probability that a detector's setting differs from where it started after
/// `steps` switching opportunities with per-step flip probability `p`.
///
/// The setting is a two-state chain, so the net-flip probability follows
/// (1 - (1 - 2p)^steps) / 2: each step pulls the distribution toward the
/// uniform fixed point by a factor (1 - 2p).
pub fn net_flip_probability(p: f64, steps: u32) -> f64 {
    assert!((0.0..=1.0).contains(&p), "p must lie in [0, 1], got {p}");
    assert!(steps >= 1, "steps must be at least 1");
    (1.0 - (1.0 - 2.0 * p).powi(steps as i32)) / 2.0
}

/// Probability that a pair lands in its double-miss cell with the wrong
/// correlation, for the delayed-output strategy with a fixed delay.
///
/// Both particles must start off-target (probability 1/4) and both must still
/// be off-target after the delay, which for a particle that started off-target
/// means its detector made no net flip in `delay_steps` steps.
pub fn analytic_wrong_probability(p: f64, delay_steps: u32) -> f64 {
    let stay = 1.0 - net_flip_probability(p, delay_steps);
    0.25 * stay * stay
}

/// Closed-form S for the delayed-output strategy with a fixed delay: three
/// cells are always right, and the wrong mass sits entirely in cells of total
/// probability 1/4 each, so S = 3 - 4 * wrong. For one delay step this is
/// 3 - (1 - p)^2.
pub fn analytic_s(p: f64, delay_steps: u32) -> f64 {
    3.0 - 4.0 * analytic_wrong_probability(p, delay_steps)
}

/// Wilson score interval for a binomial proportion, clamped to [0, 1].
///
/// At the boundaries the score equation solves exactly: zero successes pin
/// the lower bound to 0 and all successes pin the upper bound to 1, so those
/// endpoints are returned without the rounding the general formula incurs.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<(f64, f64), StatsError> {
    if n == 0 {
        return Err(StatsError::NoSamples);
    }
    if successes > n {
        return Err(StatsError::TooManySuccesses { successes, n });
    }
    assert!(z.is_finite() && z > 0.0, "z must be positive and finite, got {z}");
    let n = n as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if p_hat == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if p_hat == 1.0 { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// The Tsirelson bound 2 * sqrt(2), the ceiling for quantum correlations in
/// the standard convention; printed alongside reports for scale.
pub fn quantum_reference() -> f64 {
    2.0 * std::f64::consts::SQRT_2
}
