//! Command-line front end: flag parsing with exhaustive violation reporting,
//! p-sweeps, and CSV/JSON report emission.

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::engine::{run_experiment, EngineError};
use crate::model::{Bit, DelayPolicy, SwitchModel};
use crate::oracle::{brute_force_tables, exact_tally, parity_obstruction_check, TableAssignment};
use crate::stats::{analytic_s, chsh_s, quantum_reference, StatsError};
use crate::strategies::{enumerate_static, StaticTable, Strategy};

/// Steps and sweep counts beyond this are almost certainly typos, and huge
/// step counts would overflow the closed-form exponents.
const MAX_POLICY_STEPS: u32 = 1_000_000;
const MAX_SWEEP_COUNT: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Monte Carlo experiment over the requested p values.
    Simulate,
    /// Exact cell probabilities by enumeration, no sampling.
    Exact,
    /// All 16 static tables with their exact S values.
    EnumerateStatic,
    /// Exhaustive search over all 65536 per-target-pair instruction tables.
    BruteForceTables,
    /// Certificate that no table satisfies all four cells at once.
    Obstruction,
}

impl Mode {
    /// The name the user typed on the command line.
    fn cli_name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Exact => "exact",
            Mode::EnumerateStatic => "enumerate-static",
            Mode::BruteForceTables => "brute-force-tables",
            Mode::Obstruction => "obstruction",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Convention {
    /// e-columns carry anti-correlated fractions.
    Paper,
    /// e-columns carry standard correlators P(same) - P(anti).
    Standard,
    /// e-columns carry fractions; both S columns are always present anyway.
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(
    name = "chsh-delay",
    version,
    about = "CHSH simulator and exact oracle for instruction cards that delay their output until a target detector setting"
)]
struct RawArgs {
    /// What to compute.
    #[arg(long, value_enum)]
    mode: Mode,

    /// Source behavior: 'delay' or 'static:<a1a2b1b2>' (e.g. static:1000).
    #[arg(long, default_value = "delay")]
    strategy: String,

    /// Off-target behavior: 'none', 'fixed:<steps>' or 'wait:<max>'. Defaults
    /// to fixed:1 for the delay strategy and none for static tables.
    #[arg(long)]
    policy: Option<String>,

    /// Switch probability; repeatable. 'start:stop:count' sweeps inclusively.
    #[arg(long = "p", value_name = "P|START:STOP:COUNT")]
    p: Vec<String>,

    /// Monte Carlo pair count (simulate mode).
    #[arg(long, default_value_t = 0)]
    trials: u64,

    /// Master seed; each trial derives its random streams from (seed, index, side).
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Which expectation values fill the e-columns.
    #[arg(long, value_enum, default_value_t = Convention::Both)]
    convention: Convention,

    /// csv writes the fixed header to stdout; json writes one object per line.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

/// A fully validated run request.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub strategy: Strategy,
    pub policy: DelayPolicy,
    pub p_values: Vec<f64>,
    pub trials: u64,
    pub seed: u64,
    pub convention: Convention,
    pub format: Format,
}

#[derive(Error, Debug)]
pub enum ConfigError {
    #[error(transparent)]
    Flags(#[from] clap::Error),
    #[error("invalid configuration:{}", format_violations(.0))]
    Usage(Vec<String>),
}

impl ConfigError {
    /// True for --help and --version, which print and exit successfully.
    pub fn is_informational(&self) -> bool {
        matches!(
            self,
            ConfigError::Flags(e) if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            )
        )
    }
}

fn format_violations(violations: &[String]) -> String {
    violations.iter().map(|v| format!("\n  - {v}")).collect()
}

#[derive(Error, Debug)]
pub enum RunError {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
}

fn parse_strategy(text: &str) -> Result<Strategy, String> {
    if text == "delay" {
        return Ok(Strategy::Delay);
    }
    if let Some(bits) = text.strip_prefix("static:") {
        return bits.parse::<StaticTable>().map(Strategy::Static).map_err(|e| e.to_string());
    }
    Err(format!("strategy must be 'delay' or 'static:<4 bits>', got {text:?}"))
}

fn parse_policy(text: &str) -> Result<DelayPolicy, String> {
    if text == "none" {
        return Ok(DelayPolicy::None);
    }
    let usage = || {
        format!("policy must be 'none', 'fixed:<steps>' or 'wait:<max>', got {text:?}")
    };
    let (kind, steps_text) = text.split_once(':').ok_or_else(usage)?;
    let steps: u32 = steps_text
        .parse()
        .map_err(|_| format!("policy steps must be an integer in 1..={MAX_POLICY_STEPS}, got {steps_text:?}"))?;
    if !(1..=MAX_POLICY_STEPS).contains(&steps) {
        return Err(format!("policy steps must lie in 1..={MAX_POLICY_STEPS}, got {steps}"));
    }
    match kind {
        "fixed" => Ok(DelayPolicy::fixed(steps).expect("steps bounds checked")),
        "wait" => Ok(DelayPolicy::wait(steps).expect("steps bounds checked")),
        _ => Err(usage()),
    }
}

fn parse_probability(text: &str) -> Result<f64, String> {
    let value: f64 = text
        .parse()
        .map_err(|_| format!("p must be a number in [0, 1], got {text:?}"))?;
    if !(0.0..=1.0).contains(&value) {
        return Err(format!("p must lie in [0, 1], got {text}"));
    }
    Ok(value)
}

/// One --p argument: either a single probability or an inclusive linear sweep
/// 'start:stop:count'.
fn parse_p_entry(text: &str, into: &mut Vec<f64>) -> Result<(), String> {
    let Some((start_text, rest)) = text.split_once(':') else {
        into.push(parse_probability(text)?);
        return Ok(());
    };
    let Some((stop_text, count_text)) = rest.split_once(':') else {
        return Err(format!("sweep must be 'start:stop:count', got {text:?}"));
    };
    let start = parse_probability(start_text)?;
    let stop = parse_probability(stop_text)?;
    let count: u64 = count_text
        .parse()
        .map_err(|_| format!("sweep count must be an integer in 1..={MAX_SWEEP_COUNT}, got {count_text:?}"))?;
    if !(1..=MAX_SWEEP_COUNT).contains(&count) {
        return Err(format!("sweep count must lie in 1..={MAX_SWEEP_COUNT}, got {count}"));
    }
    if count == 1 {
        into.push(start);
        return Ok(());
    }
    let step = (stop - start) / (count - 1) as f64;
    let (lo, hi) = (start.min(stop), start.max(stop));
    for k in 0..count {
        if k == count - 1 {
            into.push(stop);
        } else {
            // Clamp away float drift so every point stays a valid probability.
            into.push((start + k as f64 * step).clamp(lo, hi));
        }
    }
    Ok(())
}

/// Parse and validate argv (including the program name). All violations are
/// reported together, not just the first.
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, ConfigError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let raw = RawArgs::try_parse_from(argv)?;
    let mut violations = Vec::new();

    let strategy = match parse_strategy(&raw.strategy) {
        Ok(strategy) => Some(strategy),
        Err(violation) => {
            violations.push(violation);
            None
        }
    };

    let policy = match &raw.policy {
        Some(text) => match parse_policy(text) {
            Ok(policy) => Some(policy),
            Err(violation) => {
                violations.push(violation);
                None
            }
        },
        None => Some(default_policy(raw.mode, strategy)),
    };

    let mut p_values = Vec::new();
    for entry in &raw.p {
        if let Err(violation) = parse_p_entry(entry, &mut p_values) {
            violations.push(violation);
        }
    }

    match raw.mode {
        Mode::Simulate | Mode::Exact | Mode::BruteForceTables => {
            if raw.p.is_empty() {
                violations.push(format!("{} requires at least one --p value", raw.mode.cli_name()));
            }
        }
        Mode::EnumerateStatic | Mode::Obstruction => {}
    }
    if raw.mode == Mode::Simulate && raw.trials == 0 {
        violations.push("simulate requires --trials >= 1".to_owned());
    }
    if raw.mode == Mode::BruteForceTables {
        if let Some(policy) = policy {
            if !matches!(policy, DelayPolicy::FixedDelay(_)) {
                violations
                    .push(format!("brute-force-tables requires a fixed:<steps> policy, got {policy}"));
            }
        }
    }
    if let (Some(Strategy::Static(_)), Some(policy)) = (strategy, policy) {
        if policy != DelayPolicy::None {
            violations.push(format!(
                "static tables answer immediately; combine them with --policy none, not {policy}"
            ));
        }
    }

    if !violations.is_empty() {
        return Err(ConfigError::Usage(violations));
    }
    Ok(RunConfig {
        mode: raw.mode,
        strategy: strategy.expect("parsed or violation recorded"),
        policy: policy.expect("parsed or violation recorded"),
        p_values,
        trials: raw.trials,
        seed: raw.seed,
        convention: raw.convention,
        format: raw.format,
    })
}

fn default_policy(mode: Mode, strategy: Option<Strategy>) -> DelayPolicy {
    match (mode, strategy) {
        (Mode::BruteForceTables, _) => DelayPolicy::fixed(1).expect("1 is non-zero"),
        (_, Some(Strategy::Static(_))) => DelayPolicy::None,
        _ => DelayPolicy::fixed(1).expect("1 is non-zero"),
    }
}

/// Closed-form S the row's configuration should approach.
fn analytic_reference(strategy: Strategy, policy: DelayPolicy, p: f64) -> f64 {
    match strategy {
        Strategy::Static(table) => table.s_value(),
        Strategy::Delay => match policy {
            // Without a delay the cards are a uniform mixture over targets
            // and x of tables that each satisfy three cells: S = 2 at any p.
            DelayPolicy::None => 2.0,
            DelayPolicy::FixedDelay(steps) => analytic_s(p, steps.get()),
            // The double miss survives only if neither detector ever flips
            // during max_steps chances per side.
            DelayPolicy::WaitUntilTarget(max_steps) => {
                3.0 - (1.0 - p).powi(2 * max_steps.get() as i32)
            }
        },
    }
}

/// Format with 12 significant digits: fixed notation for moderate exponents,
/// otherwise scientific with a signed two-digit exponent, trailing zeros
/// trimmed either way.
pub fn fmt_sig(value: f64) -> String {
    if value == 0.0 {
        return "0".to_owned();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let sci = format!("{value:.11e}");
    let (mantissa, exp_text) = sci.split_once('e').expect("always scientific");
    let exp: i32 = exp_text.parse().expect("exponent is an integer");
    if (-4..12).contains(&exp) {
        // 11 - exp decimals keeps 12 significant digits; re-rounding the
        // original value cuts at the same digit, so nothing shifts.
        let decimals = (11 - exp) as usize;
        trim_zeros(format!("{value:.decimals$}"))
    } else {
        let mantissa = trim_zeros(mantissa.to_owned());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn trim_zeros(mut text: String) -> String {
    if text.contains('.') {
        while text.ends_with('0') {
            text.pop();
        }
        if text.ends_with('.') {
            text.pop();
        }
    }
    text
}

pub const SWEEP_HEADER: &str =
    "p,e11,e12,e21,e22,s_paper,s_std,s_analytic,ci_halfwidth,trials,seed";
pub const STATIC_HEADER: &str = "table,e11,e12,e21,e22,s_paper,s_std";
pub const BRUTE_FORCE_HEADER: &str =
    "p,delay_steps,s_max,s_analytic,best_assignment,derived_s,derived_attains_max";
pub const OBSTRUCTION_HEADER: &str =
    "target_a,target_b,wrong_cell_a,wrong_cell_b,max_satisfied,desired_parity_odd";

#[derive(Serialize)]
struct SweepRecord {
    p: f64,
    e11: f64,
    e12: f64,
    e21: f64,
    e22: f64,
    s_paper: f64,
    s_std: f64,
    s_analytic: f64,
    ci_halfwidth: f64,
    trials: u64,
    seed: u64,
    s_quantum_max: f64,
}

#[derive(Serialize)]
struct StaticRecord {
    table: String,
    e11: f64,
    e12: f64,
    e21: f64,
    e22: f64,
    s_paper: f64,
    s_std: f64,
    s_quantum_max: f64,
}

#[derive(Serialize)]
struct BruteForceRecord {
    p: f64,
    delay_steps: u32,
    s_max: f64,
    s_analytic: f64,
    best_assignment: String,
    derived_s: f64,
    derived_attains_max: bool,
    s_quantum_max: f64,
}

/// Execute a validated config, writing the report to `out`. CSV runs also
/// write the quantum-maximum reference note to `note`, keeping stdout exactly
/// the documented table; JSON records carry it as s_quantum_max instead.
pub fn run(config: &RunConfig, out: &mut dyn Write, note: &mut dyn Write) -> Result<(), RunError> {
    if config.format == Format::Csv {
        writeln!(
            note,
            "quantum maximum (standard convention): 2*sqrt(2) = {}; reference constant only, not simulated",
            fmt_sig(quantum_reference())
        )?;
    }
    match config.mode {
        Mode::Simulate | Mode::Exact => run_sweep(config, out),
        Mode::EnumerateStatic => run_enumerate_static(config, out),
        Mode::BruteForceTables => run_brute_force(config, out),
        Mode::Obstruction => run_obstruction(config, out),
    }
}

fn run_sweep(config: &RunConfig, out: &mut dyn Write) -> Result<(), RunError> {
    if config.format == Format::Csv {
        writeln!(out, "{SWEEP_HEADER}")?;
    }
    for &p in &config.p_values {
        let model = SwitchModel::new(p).expect("validated at parse time");
        let (e_frac, ci_halfwidth, trials) = match config.mode {
            Mode::Simulate => {
                let tally =
                    run_experiment(config.strategy, config.policy, model, config.trials, config.seed)?;
                let report = chsh_s(&tally)?;
                (report.e_frac, report.ci_halfwidth, config.trials)
            }
            Mode::Exact => {
                let tally = exact_tally(config.strategy, config.policy, model);
                (tally.fractions()?, 0.0, 0)
            }
            _ => unreachable!("run_sweep is only called for simulate/exact"),
        };
        let e_std = e_frac.map(|f| 1.0 - 2.0 * f);
        let s_of = |e: &[f64; 4]| e[0] + e[1] + e[2] - e[3];
        let e_shown = match config.convention {
            Convention::Paper | Convention::Both => e_frac,
            Convention::Standard => e_std,
        };
        let record = SweepRecord {
            p,
            e11: e_shown[0],
            e12: e_shown[1],
            e21: e_shown[2],
            e22: e_shown[3],
            s_paper: s_of(&e_frac),
            s_std: s_of(&e_std),
            s_analytic: analytic_reference(config.strategy, config.policy, p),
            ci_halfwidth,
            trials,
            seed: config.seed,
            s_quantum_max: quantum_reference(),
        };
        match config.format {
            Format::Csv => writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_sig(record.p),
                fmt_sig(record.e11),
                fmt_sig(record.e12),
                fmt_sig(record.e21),
                fmt_sig(record.e22),
                fmt_sig(record.s_paper),
                fmt_sig(record.s_std),
                fmt_sig(record.s_analytic),
                fmt_sig(record.ci_halfwidth),
                record.trials,
                record.seed,
            )?,
            Format::Json => {
                writeln!(out, "{}", serde_json::to_string(&record).expect("plain fields"))?
            }
        }
    }
    Ok(())
}

fn run_enumerate_static(config: &RunConfig, out: &mut dyn Write) -> Result<(), RunError> {
    if config.format == Format::Csv {
        writeln!(out, "{STATIC_HEADER}")?;
    }
    for (table, s_paper) in enumerate_static() {
        let anti = |a: Bit, b: Bit| (a != b) as u8 as f64;
        let e_frac =
            [anti(table.a1, table.b1), anti(table.a1, table.b2), anti(table.a2, table.b1), anti(table.a2, table.b2)];
        let e_std = e_frac.map(|f| 1.0 - 2.0 * f);
        let e_shown = match config.convention {
            Convention::Paper | Convention::Both => e_frac,
            Convention::Standard => e_std,
        };
        let record = StaticRecord {
            table: table.to_string(),
            e11: e_shown[0],
            e12: e_shown[1],
            e21: e_shown[2],
            e22: e_shown[3],
            s_paper,
            s_std: e_std[0] + e_std[1] + e_std[2] - e_std[3],
            s_quantum_max: quantum_reference(),
        };
        match config.format {
            Format::Csv => writeln!(
                out,
                "{},{},{},{},{},{},{}",
                record.table,
                fmt_sig(record.e11),
                fmt_sig(record.e12),
                fmt_sig(record.e21),
                fmt_sig(record.e22),
                fmt_sig(record.s_paper),
                fmt_sig(record.s_std),
            )?,
            Format::Json => {
                writeln!(out, "{}", serde_json::to_string(&record).expect("plain fields"))?
            }
        }
    }
    Ok(())
}

fn run_brute_force(config: &RunConfig, out: &mut dyn Write) -> Result<(), RunError> {
    let DelayPolicy::FixedDelay(steps) = config.policy else {
        unreachable!("validated at parse time");
    };
    if config.format == Format::Csv {
        writeln!(out, "{BRUTE_FORCE_HEADER}")?;
    }
    for &p in &config.p_values {
        let model = SwitchModel::new(p).expect("validated at parse time");
        let (best, s_max) = brute_force_tables(model, steps);
        let derived = TableAssignment::derived();
        let derived_s = crate::oracle::exact_tally_with(
            |targets, x| derived.program(targets, x),
            config.policy,
            model,
        )
        .s_paper()?;
        let record = BruteForceRecord {
            p,
            delay_steps: steps.get(),
            s_max,
            s_analytic: analytic_s(p, steps.get()),
            best_assignment: best.to_string(),
            derived_s,
            derived_attains_max: (s_max - derived_s).abs() <= 1e-12,
            s_quantum_max: quantum_reference(),
        };
        match config.format {
            Format::Csv => writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_sig(record.p),
                record.delay_steps,
                fmt_sig(record.s_max),
                fmt_sig(record.s_analytic),
                record.best_assignment,
                fmt_sig(record.derived_s),
                record.derived_attains_max,
            )?,
            Format::Json => {
                writeln!(out, "{}", serde_json::to_string(&record).expect("plain fields"))?
            }
        }
    }
    Ok(())
}

fn run_obstruction(config: &RunConfig, out: &mut dyn Write) -> Result<(), RunError> {
    let report = parity_obstruction_check();
    match config.format {
        Format::Json => {
            writeln!(out, "{}", serde_json::to_string(&report).expect("plain fields"))?;
        }
        Format::Csv => {
            writeln!(out, "{OBSTRUCTION_HEADER}")?;
            for cell in &report.derived_wrong_cells {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    cell.target_a,
                    cell.target_b,
                    cell.cell_a,
                    cell.cell_b,
                    report.max_satisfied_cells,
                    report.desired_parity_odd,
                )?;
            }
        }
    }
    Ok(())
}
