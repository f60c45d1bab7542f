//! Command-line front end for the susceptance-placement library.
//!
//! Subcommands fall into three groups: ingestion (`import`), analysis
//! (`pf`, `opf`, `alpha-c`, `verify`, `export-dot`), and optimization
//! (`place`, `sweep`, `robust`, `n1`). Reports are machine-first: a
//! JSON document goes to stdout (or `-o`), optional CSV tables and DOT
//! graphs go to their own paths, and human commentary is confined to
//! stderr. Identical inputs and flags produce byte-identical outputs —
//! reports carry no timestamps and all collections are emitted in index
//! order.
//!
//! Exit codes: 0 success/feasible, 1 domain infeasibility (an overload
//! placement cannot relieve, an infeasible dispatch, a failed
//! verification), 2 input error (missing file, parse failure, bad
//! parameter).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use factsopt::grid::{
    beta_from_native, beta_to_native, from_native, parse_matpower, scenario_from_native,
    to_native, BusKind, GridModel, Scenario, NATIVE_FORMAT_VERSION,
};
use factsopt::optimizer::{
    base_opf, detect_jumps, line_loadings, n1_scenarios, place, scale_scenario, sweep,
    PlacementOptions, PlacementResult, PlacementStatus, Strategy, SweepPoint, SweepPointStatus,
    ViolationMove,
};
use factsopt::powerflow::alpha_c;
use factsopt::{Error, Result};

const REPORT_FORMAT: &str = "factsopt-report";
const CONFIG_FORMAT: &str = "factsopt-config";

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Input problems exit with 2, domain failures with 1; success paths
/// return their code from the command itself.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Data(_)
        | Error::Schema { .. }
        | Error::Disconnected(_)
        | Error::Unbalanced { .. }
        | Error::Invalid(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::Singular { .. }
        | Error::Unstressable
        | Error::InfeasibleDispatch(_)
        | Error::Numerical(_) => 1,
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let count = match flag {
        Some(n) => Some(n),
        None => match std::env::var("FACTSOPT_THREADS") {
            Ok(raw) => Some(raw.trim().parse().map_err(|_| {
                Error::Invalid(format!("FACTSOPT_THREADS must be a positive integer, got '{raw}'"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(n) = count {
        if n == 0 {
            return Err(Error::Invalid("thread count must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Invalid(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

#[derive(Parser)]
#[command(
    name = "factsopt",
    version,
    about = "Minimal-cost susceptance placement for relieving transmission overloads"
)]
struct Cli {
    /// Cap the worker thread count (default: FACTSOPT_THREADS, then all
    /// cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a MATPOWER case file to the native grid format.
    Import(ImportArgs),
    /// Solve DC power flow and report per-line loadings.
    Pf(PfArgs),
    /// Dispatch generation at minimal linear cost within line limits.
    Opf(OpfArgs),
    /// Critical stress scaling of the cost-optimal dispatch.
    AlphaC(AlphaCArgs),
    /// Find the cheapest susceptance correction for one scenario.
    Place(PlaceArgs),
    /// Correction cost across a range of stress scalings.
    Sweep(SweepArgs),
    /// One correction covering several scenarios at once.
    Robust(RobustArgs),
    /// One correction covering a scenario and all its single-line
    /// outages.
    N1(N1Args),
    /// Check a susceptance vector against scenarios; exit 0 iff feasible.
    Verify(VerifyArgs),
    /// Render the grid as a DOT graph, optionally colored by a result.
    ExportDot(ExportDotArgs),
}

#[derive(Args)]
struct ImportArgs {
    /// MATPOWER case file.
    case: PathBuf,
    /// Native grid output path.
    #[arg(short, long, value_name = "FILE")]
    out: PathBuf,
}

/// Stress selection shared by the analysis and placement commands: scale
/// the cost-optimal dispatch, or load an explicit scenario file.
#[derive(Args)]
struct StressArgs {
    /// Scale the cost-optimal dispatch by this factor.
    #[arg(long, value_name = "A", conflicts_with_all = ["alpha_ratio", "scenario"])]
    alpha: Option<f64>,
    /// Scale the cost-optimal dispatch to this multiple of the critical
    /// scaling.
    #[arg(long, value_name = "R", conflicts_with = "scenario")]
    alpha_ratio: Option<f64>,
    /// Operating scenario file (factsopt-scenario JSON).
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
}

impl StressArgs {
    fn is_empty(&self) -> bool {
        self.alpha.is_none() && self.alpha_ratio.is_none() && self.scenario.is_none()
    }
}

/// Placement options shared by `place`, `sweep`, `robust`, and `n1`.
/// Values resolve in three layers: built-in defaults, then the config
/// file, then explicit flags.
#[derive(Args)]
struct PlacementFlags {
    /// Options file (factsopt-config JSON); explicit flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Iteration scheme.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// How violated constraints enter the included set.
    #[arg(long, value_enum)]
    violation_move: Option<MoveArg>,
    /// Outer-iteration cap.
    #[arg(long, value_name = "N")]
    max_iters: Option<usize>,
    /// Convergence threshold on the susceptance step (infinity norm).
    #[arg(long, value_name = "TOL")]
    beta_tol: Option<f64>,
    /// Susceptance floor applied to every line.
    #[arg(long, value_name = "B")]
    beta_lower: Option<f64>,
    /// Per-line susceptance ceilings (factsopt-beta JSON).
    #[arg(long, value_name = "FILE")]
    beta_upper: Option<PathBuf>,
    /// Relative feasibility slack on line limits.
    #[arg(long, value_name = "TOL")]
    feas_tol: Option<f64>,
}

#[derive(Args)]
struct PfArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    #[command(flatten)]
    stress: StressArgs,
    /// Susceptance vector to evaluate (factsopt-beta JSON); defaults to
    /// the grid's own.
    #[arg(long, value_name = "FILE")]
    beta: Option<PathBuf>,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-line CSV table path.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct OpfArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-line CSV table path.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct AlphaCArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlaceArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    #[command(flatten)]
    stress: StressArgs,
    #[command(flatten)]
    opts: PlacementFlags,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-line susceptance table (CSV).
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Colored network graph (DOT).
    #[arg(long, value_name = "FILE")]
    dot: Option<PathBuf>,
    /// Final susceptance vector (factsopt-beta JSON), ready for `verify`.
    #[arg(long, value_name = "FILE")]
    beta_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    /// First scaling factor.
    #[arg(long, value_name = "A")]
    from: f64,
    /// Last scaling factor (inclusive).
    #[arg(long, value_name = "A")]
    to: f64,
    /// Scaling increment.
    #[arg(long, value_name = "S")]
    step: f64,
    /// Interpret the range as multiples of the critical scaling.
    #[arg(long)]
    relative: bool,
    /// Flag consecutive solved points whose costs differ by this factor.
    #[arg(long, value_name = "F", default_value_t = 2.0)]
    jump_factor: f64,
    #[command(flatten)]
    opts: PlacementFlags,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// One-row-per-scaling CSV table path.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct RobustArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    /// Scenario file (factsopt-scenario JSON); repeat for each scenario.
    #[arg(long, value_name = "FILE", required = true)]
    scenario: Vec<PathBuf>,
    #[command(flatten)]
    opts: PlacementFlags,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-scenario overload table (CSV).
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Colored network graph (DOT).
    #[arg(long, value_name = "FILE")]
    dot: Option<PathBuf>,
    /// Final susceptance vector (factsopt-beta JSON), ready for `verify`.
    #[arg(long, value_name = "FILE")]
    beta_out: Option<PathBuf>,
}

#[derive(Args)]
struct N1Args {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    #[command(flatten)]
    stress: StressArgs,
    #[command(flatten)]
    opts: PlacementFlags,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Per-line susceptance table (CSV).
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Colored network graph (DOT).
    #[arg(long, value_name = "FILE")]
    dot: Option<PathBuf>,
    /// Final susceptance vector (factsopt-beta JSON), ready for `verify`.
    #[arg(long, value_name = "FILE")]
    beta_out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    /// Susceptance vector to check (factsopt-beta JSON).
    #[arg(long, value_name = "FILE")]
    beta: PathBuf,
    /// Scenario file (factsopt-scenario JSON); repeat for each scenario.
    #[arg(long, value_name = "FILE", required = true)]
    scenario: Vec<PathBuf>,
    /// Relative slack on line limits.
    #[arg(long, value_name = "TOL", default_value_t = 1e-6)]
    tolerance: f64,
    /// Report path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportDotArgs {
    /// Grid file (native JSON, or MATPOWER when the extension is .m).
    grid: PathBuf,
    #[command(flatten)]
    stress: StressArgs,
    /// Final susceptance vector (factsopt-beta JSON): modified lines turn
    /// green and carry percent-change labels.
    #[arg(long, value_name = "FILE")]
    beta: Option<PathBuf>,
    /// Graph path (stdout when omitted).
    #[arg(short, long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum StrategyArg {
    Direct,
    Improved,
}

impl From<StrategyArg> for Strategy {
    fn from(value: StrategyArg) -> Strategy {
        match value {
            StrategyArg::Direct => Strategy::Direct,
            StrategyArg::Improved => Strategy::Improved,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MoveArg {
    AllViolated,
    MostViolated,
}

impl From<MoveArg> for ViolationMove {
    fn from(value: MoveArg) -> ViolationMove {
        match value {
            MoveArg::AllViolated => ViolationMove::AllViolated,
            MoveArg::MostViolated => ViolationMove::MostViolated,
        }
    }
}

fn run(command: &Command) -> Result<u8> {
    match command {
        Command::Import(args) => cmd_import(args),
        Command::Pf(args) => cmd_pf(args),
        Command::Opf(args) => cmd_opf(args),
        Command::AlphaC(args) => cmd_alpha_c(args),
        Command::Place(args) => cmd_place(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Robust(args) => cmd_robust(args),
        Command::N1(args) => cmd_n1(args),
        Command::Verify(args) => cmd_verify(args),
        Command::ExportDot(args) => cmd_export_dot(args),
    }
}

// ---------------------------------------------------------------------
// File plumbing

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn load_grid(path: &Path) -> Result<GridModel> {
    let text = read_file(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("m")) {
        parse_matpower(&text)
    } else {
        from_native(&text)
    }
}

fn load_scenario(path: &Path, model: &GridModel) -> Result<Scenario> {
    let scenario = scenario_from_native(&read_file(path)?)?;
    scenario.validate(model)?;
    Ok(scenario)
}

fn load_beta(path: &Path, model: &GridModel) -> Result<Vec<f64>> {
    let beta = beta_from_native(&read_file(path)?)?;
    if beta.len() != model.num_lines() {
        return Err(Error::Invalid(format!(
            "{}: susceptance vector has {} entries, grid has {} lines",
            path.display(),
            beta.len(),
            model.num_lines()
        )));
    }
    Ok(beta)
}

fn write_output(path: Option<&Path>, content: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, content)
            .map_err(|e| Error::Invalid(format!("{}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn report_json<T: Serialize>(doc: &T) -> String {
    serde_json::to_string_pretty(doc).expect("report serializes") + "\n"
}

// ---------------------------------------------------------------------
// Options and stress resolution

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    format: String,
    version: u32,
    #[serde(default)]
    strategy: Option<StrategyArg>,
    #[serde(default)]
    violation_move: Option<MoveArg>,
    #[serde(default)]
    max_outer_iters: Option<usize>,
    #[serde(default)]
    beta_tolerance: Option<f64>,
    #[serde(default)]
    beta_lower: Option<f64>,
    #[serde(default)]
    beta_upper: Option<Vec<f64>>,
    #[serde(default)]
    feasibility_tolerance: Option<f64>,
}

fn resolve_options(flags: &PlacementFlags, model: &GridModel) -> Result<PlacementOptions> {
    let mut options = PlacementOptions::default();
    if let Some(path) = &flags.config {
        let doc: ConfigDoc = serde_json::from_str(&read_file(path)?)?;
        if doc.format != CONFIG_FORMAT {
            return Err(Error::schema(
                "format",
                format!("expected '{CONFIG_FORMAT}', got '{}'", doc.format),
            ));
        }
        if doc.version != NATIVE_FORMAT_VERSION {
            return Err(Error::schema(
                "version",
                format!(
                    "unsupported version {}, this build reads {NATIVE_FORMAT_VERSION}",
                    doc.version
                ),
            ));
        }
        if let Some(v) = doc.strategy {
            options.strategy = v.into();
        }
        if let Some(v) = doc.violation_move {
            options.violation_move = v.into();
        }
        if let Some(v) = doc.max_outer_iters {
            options.max_outer_iters = v;
        }
        if let Some(v) = doc.beta_tolerance {
            options.beta_tolerance = Some(v);
        }
        if let Some(v) = doc.beta_lower {
            options.beta_lower = v;
        }
        if let Some(v) = doc.beta_upper {
            options.beta_upper = Some(v);
        }
        if let Some(v) = doc.feasibility_tolerance {
            options.feasibility_tolerance = v;
        }
    }
    if let Some(v) = flags.strategy {
        options.strategy = v.into();
    }
    if let Some(v) = flags.violation_move {
        options.violation_move = v.into();
    }
    if let Some(v) = flags.max_iters {
        options.max_outer_iters = v;
    }
    if let Some(v) = flags.beta_tol {
        options.beta_tolerance = Some(v);
    }
    if let Some(v) = flags.beta_lower {
        options.beta_lower = v;
    }
    if let Some(path) = &flags.beta_upper {
        options.beta_upper = Some(load_beta(path, model)?);
    }
    if let Some(v) = flags.feas_tol {
        options.feasibility_tolerance = v;
    }
    Ok(options)
}

struct ResolvedStress {
    scenario: Scenario,
    /// Scaling applied to the dispatch, when the stress came from one.
    alpha: Option<f64>,
    /// Critical scaling, when `--alpha-ratio` forced computing it.
    alpha_c: Option<f64>,
}

fn resolve_stress(model: &GridModel, stress: &StressArgs) -> Result<ResolvedStress> {
    if let Some(path) = &stress.scenario {
        return Ok(ResolvedStress {
            scenario: load_scenario(path, model)?,
            alpha: None,
            alpha_c: None,
        });
    }
    let dispatch = base_opf(model)?;
    let (alpha, critical) = match (stress.alpha, stress.alpha_ratio) {
        (Some(a), None) => (a, None),
        (None, Some(r)) => {
            let crit = alpha_c(model, &dispatch)?;
            (r * crit.alpha, Some(crit.alpha))
        }
        (None, None) => {
            return Err(Error::Invalid(
                "one of --alpha, --alpha-ratio, or --scenario is required".into(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
    };
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Invalid(format!("scaling factor must be positive, got {alpha}")));
    }
    Ok(ResolvedStress {
        scenario: scale_scenario(&dispatch, alpha),
        alpha: Some(alpha),
        alpha_c: critical,
    })
}

// ---------------------------------------------------------------------
// Report building blocks

#[derive(Serialize)]
struct GridSummary {
    buses: usize,
    lines: usize,
    slack: usize,
    base_mva: f64,
}

fn grid_summary(model: &GridModel) -> GridSummary {
    GridSummary {
        buses: model.num_buses(),
        lines: model.num_lines(),
        slack: model.slack(),
        base_mva: model.base_mva(),
    }
}

#[derive(Serialize)]
struct LoadRow {
    scenario: String,
    line: usize,
    from: usize,
    to: usize,
    flow_mw: f64,
    /// `null` for unlimited lines.
    limit_mw: Option<f64>,
    utilization: f64,
}

fn load_rows(model: &GridModel, beta: &[f64], scenarios: &[Scenario]) -> Result<Vec<LoadRow>> {
    let lines = model.lines();
    Ok(line_loadings(model, beta, scenarios)?
        .into_iter()
        .map(|l| LoadRow {
            scenario: scenarios[l.scenario].label.clone(),
            line: l.line,
            from: lines[l.line].from,
            to: lines[l.line].to,
            flow_mw: l.flow,
            limit_mw: l.limit.is_finite().then_some(l.limit),
            utilization: l.utilization,
        })
        .collect())
}

#[derive(Serialize)]
struct OverloadRow {
    line: usize,
    utilization: f64,
}

#[derive(Serialize)]
struct VerifyBlock {
    scenario: String,
    feasible: bool,
    max_utilization: f64,
    overloaded_lines: Vec<OverloadRow>,
}

/// Exact per-scenario feasibility at `beta`: worst utilization and the
/// lines above `1 + tolerance`.
fn verification_blocks(
    model: &GridModel,
    beta: &[f64],
    scenarios: &[Scenario],
    tolerance: f64,
) -> Result<Vec<VerifyBlock>> {
    let mut blocks: Vec<VerifyBlock> = scenarios
        .iter()
        .map(|s| VerifyBlock {
            scenario: s.label.clone(),
            feasible: true,
            max_utilization: 0.0,
            overloaded_lines: Vec::new(),
        })
        .collect();
    for row in line_loadings(model, beta, scenarios)? {
        let block = &mut blocks[row.scenario];
        block.max_utilization = block.max_utilization.max(row.utilization);
        if row.utilization > 1.0 + tolerance {
            block.feasible = false;
            block.overloaded_lines.push(OverloadRow {
                line: row.line,
                utilization: row.utilization,
            });
        }
    }
    Ok(blocks)
}

#[derive(Serialize)]
struct ChangeRow {
    line: usize,
    from: usize,
    to: usize,
    beta_initial: f64,
    beta_final: f64,
    delta: f64,
    /// `100 · (β_final − β_initial) / β_initial`.
    percent_change: f64,
}

fn change_rows(model: &GridModel, beta_opt: &[f64]) -> Vec<ChangeRow> {
    model
        .lines()
        .iter()
        .map(|l| {
            let delta = beta_opt[l.index] - l.susceptance;
            ChangeRow {
                line: l.index,
                from: l.from,
                to: l.to,
                beta_initial: l.susceptance,
                beta_final: beta_opt[l.index],
                delta,
                percent_change: 100.0 * delta / l.susceptance,
            }
        })
        .collect()
}

#[derive(Serialize)]
struct IterRow {
    cost: f64,
    included: usize,
    max_violation: f64,
}

#[derive(Serialize)]
struct OptionsEcho {
    strategy: &'static str,
    violation_move: &'static str,
    max_outer_iters: usize,
    beta_tolerance: Option<f64>,
    beta_lower: f64,
    feasibility_tolerance: f64,
}

fn options_echo(options: &PlacementOptions) -> OptionsEcho {
    OptionsEcho {
        strategy: match options.strategy {
            Strategy::Direct => "direct",
            Strategy::Improved => "improved",
        },
        violation_move: match options.violation_move {
            ViolationMove::AllViolated => "all_violated",
            ViolationMove::MostViolated => "most_violated",
        },
        max_outer_iters: options.max_outer_iters,
        beta_tolerance: options.beta_tolerance,
        beta_lower: options.beta_lower,
        feasibility_tolerance: options.feasibility_tolerance,
    }
}

fn status_str(status: PlacementStatus) -> &'static str {
    match status {
        PlacementStatus::Solved => "solved",
        PlacementStatus::InfeasibleLP => "infeasible_lp",
        PlacementStatus::IterLimit => "iter_limit",
    }
}

fn sweep_status_str(status: SweepPointStatus) -> &'static str {
    match status {
        SweepPointStatus::Solved => "solved",
        SweepPointStatus::InfeasibleLP => "infeasible_lp",
        SweepPointStatus::IterLimit => "iter_limit",
        SweepPointStatus::Failed => "failed",
    }
}

// ---------------------------------------------------------------------
// DOT rendering

/// Render the network as an undirected DOT graph. Controllable buses are
/// boxes, fixed buses ellipses, the slack bus bold. Lines in `hidden`
/// (outages) are omitted; overloaded lines are red, modified lines green,
/// lines that are both are blue. When `beta` is given, modified lines are
/// labeled with their percent susceptance change.
fn render_dot(
    model: &GridModel,
    hidden: &BTreeSet<usize>,
    overloaded: &BTreeSet<usize>,
    beta: Option<&[f64]>,
) -> String {
    let beta0 = model.susceptances();
    let scale = beta0.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let modified: BTreeSet<usize> = match beta {
        Some(b) => (0..model.num_lines())
            .filter(|&l| (b[l] - beta0[l]).abs() > 1e-6 * scale)
            .collect(),
        None => BTreeSet::new(),
    };

    let mut out = String::from("graph factsopt {\n");
    for bus in model.buses() {
        let shape = match bus.kind {
            BusKind::Controllable => "box",
            BusKind::Uncontrollable => "ellipse",
        };
        let style = if bus.id == model.slack() { " style=bold" } else { "" };
        out.push_str(&format!("  b{} [label=\"{}\" shape={shape}{style}];\n", bus.id, bus.id));
    }
    for line in model.lines() {
        if hidden.contains(&line.index) {
            continue;
        }
        let mut label = format!("l{}", line.index);
        if let Some(b) = beta {
            if modified.contains(&line.index) {
                let percent = 100.0 * (b[line.index] - beta0[line.index]) / beta0[line.index];
                label.push_str(&format!(" {percent:+.1}%"));
            }
        }
        let color = match (overloaded.contains(&line.index), modified.contains(&line.index)) {
            (true, true) => " color=blue",
            (true, false) => " color=red",
            (false, true) => " color=green",
            (false, false) => "",
        };
        out.push_str(&format!(
            "  b{} -- b{} [label=\"{label}\"{color}];\n",
            line.from, line.to
        ));
    }
    out.push_str("}\n");
    out
}

// ---------------------------------------------------------------------
// CSV tables

fn csv_cell_limit(limit: Option<f64>) -> String {
    limit.map(|l| l.to_string()).unwrap_or_default()
}

fn csv_loads(rows: &[LoadRow]) -> String {
    let mut out = String::from("scenario,line,from,to,flow_mw,limit_mw,utilization\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.scenario,
            r.line,
            r.from,
            r.to,
            r.flow_mw,
            csv_cell_limit(r.limit_mw),
            r.utilization
        ));
    }
    out
}

fn csv_changes(rows: &[ChangeRow]) -> String {
    let mut out = String::from("line,from,to,beta_initial,beta_final,delta,percent_change\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.line, r.from, r.to, r.beta_initial, r.beta_final, r.delta, r.percent_change
        ));
    }
    out
}

fn join_lines(lines: &[usize]) -> String {
    lines.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";")
}

fn csv_sweep(points: &[SweepPoint]) -> String {
    let mut out = String::from("alpha,status,cost,overloaded_lines,modified_lines\n");
    for p in points {
        let cost = if p.cost.is_finite() { p.cost.to_string() } else { String::new() };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.alpha,
            sweep_status_str(p.status),
            cost,
            join_lines(&p.overloaded_lines),
            join_lines(&p.modified_lines)
        ));
    }
    out
}

fn csv_overloads(model: &GridModel, before: &[VerifyBlock], after: &[VerifyBlock]) -> String {
    let lines = model.lines();
    let mut out = String::from("scenario,line,from,to,utilization_initial,utilization_final\n");
    for (block_before, block_after) in before.iter().zip(after) {
        for row in &block_before.overloaded_lines {
            let final_u = after_utilization(block_after, row.line);
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                block_before.scenario,
                row.line,
                lines[row.line].from,
                lines[row.line].to,
                row.utilization,
                final_u
            ));
        }
    }
    out
}

/// Final utilization of `line` if it is still overloaded, else blank.
fn after_utilization(block: &VerifyBlock, line: usize) -> String {
    block
        .overloaded_lines
        .iter()
        .find(|r| r.line == line)
        .map(|r| r.utilization.to_string())
        .unwrap_or_default()
}

// ---------------------------------------------------------------------
// Commands

fn cmd_import(args: &ImportArgs) -> Result<u8> {
    let model = parse_matpower(&read_file(&args.case)?)?;
    fs::write(&args.out, to_native(&model))
        .map_err(|e| Error::Invalid(format!("{}: {e}", args.out.display())))?;
    println!(
        "{} buses, {} lines, slack bus {}, base {} MVA",
        model.num_buses(),
        model.num_lines(),
        model.slack(),
        model.base_mva()
    );
    Ok(0)
}

#[derive(Serialize)]
struct PfReport {
    format: &'static str,
    version: u32,
    command: &'static str,
    grid: GridSummary,
    scenario: String,
    max_utilization: f64,
    loads: Vec<LoadRow>,
}

fn cmd_pf(args: &PfArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let beta = match &args.beta {
        Some(path) => load_beta(path, &model)?,
        None => model.susceptances(),
    };
    let scenario = if args.stress.is_empty() {
        Scenario::base(model.base_injections(), "base")
    } else {
        resolve_stress(&model, &args.stress)?.scenario
    };
    let loads = load_rows(&model, &beta, std::slice::from_ref(&scenario))?;
    let report = PfReport {
        format: REPORT_FORMAT,
        version: NATIVE_FORMAT_VERSION,
        command: "pf",
        grid: grid_summary(&model),
        scenario: scenario.label.clone(),
        max_utilization: loads.iter().fold(0.0_f64, |a, r| a.max(r.utilization)),
        loads,
    };
    if let Some(path) = &args.csv {
        write_output(Some(path), &csv_loads(&report.loads))?;
    }
    write_output(args.out.as_deref(), &report_json(&report))?;
    Ok(0)
}

#[derive(Serialize)]
struct OpfReport {
    format: &'static str,
    version: u32,
    command: &'static str,
    grid: GridSummary,
    injections_mw: Vec<f64>,
    dispatch_cost: f64,
    max_utilization: f64,
    loads: Vec<LoadRow>,
}

fn cmd_opf(args: &OpfArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let dispatch = base_opf(&model)?;
    let cost: f64 = model
        .buses()
        .iter()
        .filter(|b| b.kind == BusKind::Controllable)
        .map(|b| b.cost_linear * dispatch[b.id])
        .sum();
    let scenario = Scenario::base(dispatch.clone(), "opf");
    let loads = load_rows(&model, &model.susceptances(), std::slice::from_ref(&scenario))?;
    let report = OpfReport {
        format: REPORT_FORMAT,
        version: NATIVE_FORMAT_VERSION,
        command: "opf",
        grid: grid_summary(&model),
        injections_mw: dispatch,
        dispatch_cost: cost,
        max_utilization: loads.iter().fold(0.0_f64, |a, r| a.max(r.utilization)),
        loads,
    };
    if let Some(path) = &args.csv {
        write_output(Some(path), &csv_loads(&report.loads))?;
    }
    write_output(args.out.as_deref(), &report_json(&report))?;
    Ok(0)
}

#[derive(Serialize)]
struct CriticalLine {
    index: usize,
    from: usize,
    to: usize,
    limit_mw: Option<f64>,
}

#[derive(Serialize)]
struct AlphaCReport {
    format: &'static str,
    version: u32,
    command: &'static str,
    grid: GridSummary,
    alpha_c: f64,
    critical_line: CriticalLine,
    injections_mw: Vec<f64>,
    loads: Vec<LoadRow>,
}

fn cmd_alpha_c(args: &AlphaCArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let dispatch = base_opf(&model)?;
    let critical = alpha_c(&model, &dispatch)?;
    let line = &model.lines()[critical.line];
    let scenario = Scenario::base(dispatch.clone(), "opf");
    let loads = load_rows(&model, &model.susceptances(), std::slice::from_ref(&scenario))?;
    let report = AlphaCReport {
        format: REPORT_FORMAT,
        version: NATIVE_FORMAT_VERSION,
        command: "alpha-c",
        grid: grid_summary(&model),
        alpha_c: critical.alpha,
        critical_line: CriticalLine {
            index: line.index,
            from: line.from,
            to: line.to,
            limit_mw: line.limit.is_finite().then_some(line.limit),
        },
        injections_mw: dispatch,
        loads,
    };
    write_output(args.out.as_deref(), &report_json(&report))?;
    Ok(0)
}

#[derive(Serialize)]
struct PlaceReport {
    format: &'static str,
    version: u32,
    command: &'static str,
    grid: GridSummary,
    scenarios: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_c: Option<f64>,
    options: OptionsEcho,
    status: &'static str,
    cost: f64,
    modified_lines: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    skipped_bridges: Option<Vec<usize>>,
    iterations: Vec<IterRow>,
    initial: Vec<VerifyBlock>,
    verification: Vec<VerifyBlock>,
    lines: Vec<ChangeRow>,
}

/// Where a placement command sends its outputs, plus the bits of
/// context that differ between `place`, `robust`, and `n1`.
struct PlacementEmit<'a> {
    command: &'static str,
    alpha: Option<f64>,
    alpha_c: Option<f64>,
    skipped_bridges: Option<Vec<usize>>,
    out: Option<&'a Path>,
    csv: Option<&'a Path>,
    csv_overload_table: bool,
    dot: Option<&'a Path>,
    beta_out: Option<&'a Path>,
}

fn run_placement(
    model: &GridModel,
    scenarios: &[Scenario],
    options: &PlacementOptions,
    emit: &PlacementEmit,
) -> Result<u8> {
    let beta0 = model.susceptances();
    let initial = verification_blocks(model, &beta0, scenarios, options.feasibility_tolerance)?;
    let result: PlacementResult = place(model, scenarios, options)?;
    let verification =
        verification_blocks(model, &result.beta_opt, scenarios, options.feasibility_tolerance)?;
    let feasible =
        result.status == PlacementStatus::Solved && verification.iter().all(|b| b.feasible);

    let report = PlaceReport {
        format: REPORT_FORMAT,
        version: NATIVE_FORMAT_VERSION,
        command: emit.command,
        grid: grid_summary(model),
        scenarios: scenarios.iter().map(|s| s.label.clone()).collect(),
        alpha: emit.alpha,
        alpha_c: emit.alpha_c,
        options: options_echo(options),
        status: status_str(result.status),
        cost: result.cost,
        modified_lines: result.modified_lines.clone(),
        skipped_bridges: emit.skipped_bridges.clone(),
        iterations: result
            .iterations
            .iter()
            .map(|r| IterRow {
                cost: r.cost,
                included: r.included,
                max_violation: r.max_violation,
            })
            .collect(),
        initial,
        verification,
        lines: change_rows(model, &result.beta_opt),
    };

    if let Some(path) = emit.csv {
        let table = if emit.csv_overload_table {
            csv_overloads(model, &report.initial, &report.verification)
        } else {
            csv_changes(&report.lines)
        };
        write_output(Some(path), &table)?;
    }
    if let Some(path) = emit.dot {
        // Outages drawn only when every scenario agrees a line is out;
        // overloads are the union of the pre-correction violations.
        let hidden: BTreeSet<usize> = (0..model.num_lines())
            .filter(|l| scenarios.iter().all(|s| s.outaged_lines.contains(l)))
            .collect();
        let overloaded: BTreeSet<usize> = report
            .initial
            .iter()
            .flat_map(|b| b.overloaded_lines.iter().map(|r| r.line))
            .collect();
        write_output(Some(path), &render_dot(model, &hidden, &overloaded, Some(&result.beta_opt)))?;
    }
    if let Some(path) = emit.beta_out {
        write_output(Some(path), &beta_to_native(&result.beta_opt))?;
    }
    write_output(emit.out, &report_json(&report))?;

    if !feasible {
        let worst = report
            .verification
            .iter()
            .fold(0.0_f64, |a, b| a.max(b.max_utilization));
        eprintln!(
            "{}: status {}, worst utilization {worst:.6}",
            emit.command,
            status_str(result.status)
        );
    }
    Ok(if feasible { 0 } else { 1 })
}

fn cmd_place(args: &PlaceArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let options = resolve_options(&args.opts, &model)?;
    let stress = resolve_stress(&model, &args.stress)?;
    run_placement(
        &model,
        std::slice::from_ref(&stress.scenario),
        &options,
        &PlacementEmit {
            command: "place",
            alpha: stress.alpha,
            alpha_c: stress.alpha_c,
            skipped_bridges: None,
            out: args.out.as_deref(),
            csv: args.csv.as_deref(),
            csv_overload_table: false,
            dot: args.dot.as_deref(),
            beta_out: args.beta_out.as_deref(),
        },
    )
}

fn cmd_robust(args: &RobustArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let options = resolve_options(&args.opts, &model)?;
    let scenarios: Vec<Scenario> = args
        .scenario
        .iter()
        .map(|path| load_scenario(path, &model))
        .collect::<Result<_>>()?;
    run_placement(
        &model,
        &scenarios,
        &options,
        &PlacementEmit {
            command: "robust",
            alpha: None,
            alpha_c: None,
            skipped_bridges: None,
            out: args.out.as_deref(),
            csv: args.csv.as_deref(),
            csv_overload_table: true,
            dot: args.dot.as_deref(),
            beta_out: args.beta_out.as_deref(),
        },
    )
}

fn cmd_n1(args: &N1Args) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let options = resolve_options(&args.opts, &model)?;
    let stress = resolve_stress(&model, &args.stress)?;
    let family = n1_scenarios(&model, &stress.scenario)?;
    let mut scenarios = vec![stress.scenario];
    scenarios.extend(family.scenarios);
    run_placement(
        &model,
        &scenarios,
        &options,
        &PlacementEmit {
            command: "n1",
            alpha: stress.alpha,
            alpha_c: stress.alpha_c,
            skipped_bridges: Some(family.skipped_bridges),
            out: args.out.as_deref(),
            csv: args.csv.as_deref(),
            csv_overload_table: false,
            dot: args.dot.as_deref(),
            beta_out: args.beta_out.as_deref(),
        },
    )
}

#[derive(Serialize)]
struct PointRow {
    alpha: f64,
    status: &'static str,
    /// `null` when the point is infeasible or failed.
    cost: Option<f64>,
    overloaded_lines: Vec<usize>,
    modified_lines: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Serialize)]
struct JumpRow {
    alpha_before: f64,
    alpha_after: f64,
    cost_before: f64,
    cost_after: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct SweepReport {
    format: &'static str,
    version: u32,
    command: &'static str,
    grid: GridSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_c: Option<f64>,
    jump_factor: f64,
    options: OptionsEcho,
    points: Vec<PointRow>,
    jumps: Vec<JumpRow>,
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let options = resolve_options(&args.opts, &model)?;
    if !(args.from > 0.0 && args.step > 0.0 && args.to >= args.from) {
        return Err(Error::Invalid(format!(
            "sweep range must satisfy 0 < from <= to with step > 0, got from {} to {} step {}",
            args.from, args.to, args.step
        )));
    }
    if !(args.jump_factor > 1.0) {
        return Err(Error::Invalid(format!(
            "jump factor must exceed 1, got {}",
            args.jump_factor
        )));
    }
    let dispatch = base_opf(&model)?;
    let critical = if args.relative {
        Some(alpha_c(&model, &dispatch)?.alpha)
    } else {
        None
    };
    let scale = critical.unwrap_or(1.0);
    let count = ((args.to - args.from) / args.step + 1e-9).floor() as usize;
    let alphas: Vec<f64> = (0..=count)
        .map(|i| (args.from + i as f64 * args.step) * scale)
        .collect();

    let points = sweep(&model, &dispatch, &alphas, &options)?;
    let jumps = detect_jumps(&points, args.jump_factor);
    let any_solved = points.iter().any(|p| p.status == SweepPointStatus::Solved);

    let report = SweepReport {
        format: REPORT_FORMAT,
        version: NATIVE_FORMAT_VERSION,
        command: "sweep",
        grid: grid_summary(&model),
        alpha_c: critical,
        jump_factor: args.jump_factor,
        options: options_echo(&options),
        points: points
            .iter()
            .map(|p| PointRow {
                alpha: p.alpha,
                status: sweep_status_str(p.status),
                cost: p.cost.is_finite().then_some(p.cost),
                overloaded_lines: p.overloaded_lines.clone(),
                modified_lines: p.modified_lines.clone(),
                note: p.note.clone(),
            })
            .collect(),
        jumps: jumps
            .iter()
            .map(|j| JumpRow {
                alpha_before: j.alpha_before,
                alpha_after: j.alpha_after,
                cost_before: j.cost_before,
                cost_after: j.cost_after,
                ratio: j.ratio,
            })
            .collect(),
    };
    if let Some(path) = &args.csv {
        write_output(Some(path), &csv_sweep(&points))?;
    }
    write_output(args.out.as_deref(), &report_json(&report))?;
    if !any_solved {
        eprintln!("sweep: no point solved");
    }
    Ok(if any_solved { 0 } else { 1 })
}

#[derive(Serialize)]
struct VerifyReport {
    format: &'static str,
    version: u32,
    command: &'static str,
    grid: GridSummary,
    tolerance: f64,
    feasible: bool,
    scenarios: Vec<VerifyBlock>,
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    if !(args.tolerance >= 0.0 && args.tolerance.is_finite()) {
        return Err(Error::Invalid(format!(
            "tolerance must be finite and nonnegative, got {}",
            args.tolerance
        )));
    }
    let beta = load_beta(&args.beta, &model)?;
    let scenarios: Vec<Scenario> = args
        .scenario
        .iter()
        .map(|path| load_scenario(path, &model))
        .collect::<Result<_>>()?;
    let blocks = verification_blocks(&model, &beta, &scenarios, args.tolerance)?;
    let feasible = blocks.iter().all(|b| b.feasible);
    let report = VerifyReport {
        format: REPORT_FORMAT,
        version: NATIVE_FORMAT_VERSION,
        command: "verify",
        grid: grid_summary(&model),
        tolerance: args.tolerance,
        feasible,
        scenarios: blocks,
    };
    write_output(args.out.as_deref(), &report_json(&report))?;
    if !feasible {
        for block in &report.scenarios {
            for row in &block.overloaded_lines {
                eprintln!(
                    "overload: scenario '{}' line {} at {:.6}",
                    block.scenario, row.line, row.utilization
                );
            }
        }
    }
    Ok(if feasible { 0 } else { 1 })
}

fn cmd_export_dot(args: &ExportDotArgs) -> Result<u8> {
    let model = load_grid(&args.grid)?;
    let beta = args.beta.as_deref().map(|p| load_beta(p, &model)).transpose()?;
    let (hidden, overloaded) = if args.stress.is_empty() {
        (BTreeSet::new(), BTreeSet::new())
    } else {
        // Overloads are evaluated at the grid's own susceptances — the
        // pre-correction picture a placement run starts from.
        let stress = resolve_stress(&model, &args.stress)?;
        let blocks = verification_blocks(
            &model,
            &model.susceptances(),
            std::slice::from_ref(&stress.scenario),
            1e-6,
        )?;
        let overloaded = blocks[0].overloaded_lines.iter().map(|r| r.line).collect();
        (stress.scenario.outaged_lines.clone(), overloaded)
    };
    write_output(
        args.out.as_deref(),
        &render_dot(&model, &hidden, &overloaded, beta.as_deref()),
    )?;
    Ok(0)
}
