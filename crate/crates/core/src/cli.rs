//! Command-line front end.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use crate::closed_form::{solve, ClosedFormSolution, FixedPointSettings, SolutionSource};
use crate::error::EconError;
use crate::json;
use crate::model::{cost, gain, GainTarget, ModelKind, ParamsFile, Strategy, ValidatedParams};
use crate::oracle::{minimize_cost, GridSpec};
use crate::sessions::{
    fit_cost_params, fit_gain_params, random_design, read_jsonl, simulate, simulate_design,
    viability, write_jsonl, EstimationResult,
};
use crate::statics::{audit_claims, sweep, AuditConfig, FormulaVariant, Parameter, Region};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  numerical failure (fixed point diverged, unbounded or infeasible problem)
  2  invalid input: arguments, files or parameter values
  3  no interior optimum for the requested closed form
  4  insufficient design for estimation";

#[derive(Debug, Parser)]
#[command(name = "convecon", version, about = "Economic models of conversational search", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form optimal strategies (every variant for the model)
    Optimize(OptimizeArgs),
    /// Grid-search constrained minimisation with KKT diagnostics
    Oracle(OracleArgs),
    /// Audit comparative-statics claims over a parameter region
    Audit(AuditArgs),
    /// Sweep one parameter and tabulate formulas against the oracle
    Sweep(SweepArgs),
    /// Generate synthetic session logs as JSON Lines
    Simulate(SimulateArgs),
    /// Estimate gain and cost parameters from session logs
    Fit(FitArgs),
    /// Compare optimal costs of all three models
    Viability(ViabilityArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct Problem {
    /// Parameter file (JSON with alpha, beta, gamma1, gamma2, c_query, c_feedback, c_assess)
    #[arg(long)]
    pub params: PathBuf,
    /// Gain target G
    #[arg(long)]
    pub gain: f64,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write the document here instead of standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[command(flatten)]
    pub problem: Problem,
    /// Also report the cheapest feasible integer strategy near the oracle optimum
    #[arg(long)]
    pub integer: bool,
    /// Grid spec for the integer search: a JSON file path or inline JSON
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[command(flatten)]
    pub problem: Problem,
    /// Grid spec: a JSON file path or inline JSON
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Region file (JSON); defaults to the built-in region
    #[arg(long)]
    pub region: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100.0)]
    pub gain: f64,
    /// Oracle grid used inside the audit: a JSON file path or inline JSON
    #[arg(long)]
    pub grid: Option<String>,
    /// JSON report path; the text summary goes to standard output
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Format of standard output when no report path is given
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[command(flatten)]
    pub problem: Problem,
    /// Parameter to vary (alpha, beta, gamma1, gamma2, c_query, c_feedback, c_assess, f)
    #[arg(long)]
    pub param: Parameter,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long)]
    pub steps: usize,
    /// Comma-separated formula names; defaults to every formula of the model
    #[arg(long, value_delimiter = ',')]
    pub formulas: Vec<FormulaVariant>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long)]
    pub params: PathBuf,
    /// Queries per session (ignored with --random-design)
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub f: f64,
    #[arg(long)]
    pub a: Option<f64>,
    /// Draw each session's counts log-uniformly from 1..=32
    #[arg(long)]
    pub random_design: bool,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Standard deviation of the log-normal gain noise
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON Lines output path
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// JSON Lines session logs
    #[arg(long)]
    pub logs: PathBuf,
    /// Model to fit; defaults to the model recorded in the logs
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct ViabilityArgs {
    #[command(flatten)]
    pub problem: Problem,
    #[arg(long)]
    pub grid: Option<String>,
    #[command(flatten)]
    pub out: Output,
}

/// Failure carrying the process exit status.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<EconError> for CliError {
    fn from(e: EconError) -> Self {
        CliError {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

pub fn exit_code(e: &EconError) -> i32 {
    match e {
        EconError::Domain(_) => 2,
        EconError::NoInteriorOptimum(_) => 3,
        EconError::InsufficientDesign { .. } => 4,
        EconError::Diverged { .. } | EconError::Unbounded(_) | EconError::Infeasible { .. } => 1,
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_params(path: &Path) -> CliResult<ValidatedParams> {
    Ok(ParamsFile::load(path)?.validated()?)
}

fn load_grid(spec: Option<&str>) -> CliResult<GridSpec> {
    let Some(spec) = spec else {
        return Ok(GridSpec::default());
    };
    if spec.trim_start().starts_with('{') {
        return Ok(GridSpec::from_json(spec)?);
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| CliError::input(format!("cannot read grid file {spec}: {e}")))?;
    Ok(GridSpec::from_json(&text)?)
}

fn emit(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", p.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::input(format!("cannot write output: {e}"))),
    }
}

/// JSON document, or its flattened `path value` rendering.
fn render<T: Serialize>(doc: &T, format: Format) -> CliResult<String> {
    let text = json::to_string_pretty(doc)?;
    match format {
        Format::Json => Ok(text + "\n"),
        Format::Text => {
            let value: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("rendering output: {e}")))?;
            let mut rows = Vec::new();
            flatten("", &value, &mut rows);
            let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
            Ok(rows
                .into_iter()
                .map(|(k, v)| format!("{k:<width$}  {v}\n"))
                .collect())
        }
        Format::Csv => Err(CliError::input("csv output is only available for sweep")),
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        Value::Array(xs) => {
            if xs.is_empty() {
                out.push((prefix.to_string(), "[]".to_string()));
            }
            for (i, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::Number(n) => {
            let s = match (n.as_u64(), n.as_i64(), n.as_f64()) {
                (Some(u), _, _) => u.to_string(),
                (_, Some(i), _) => i.to_string(),
                (_, _, Some(f)) => format!("{f:.16e}"),
                _ => n.to_string(),
            };
            out.push((prefix.to_string(), s));
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Bool(b) => out.push((prefix.to_string(), b.to_string())),
        Value::Null => out.push((prefix.to_string(), "null".to_string())),
    }
}

#[derive(Serialize)]
struct VariantOutcome {
    source: SolutionSource,
    solution: Option<ClosedFormSolution>,
    error: Option<String>,
}

#[derive(Serialize)]
struct IntegerOutcome {
    strategy: Option<Strategy>,
    achieved_gain: Option<f64>,
    total_cost: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct OptimizeDoc {
    model: ModelKind,
    gain_target: f64,
    solutions: Vec<VariantOutcome>,
    integer: Option<IntegerOutcome>,
}

pub fn cmd_optimize(args: &OptimizeArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let p = load_params(&args.problem.params)?;
    let g = GainTarget::new(args.problem.gain)?;
    let grid = load_grid(args.grid.as_deref())?;
    let settings = FixedPointSettings::default();
    let mut first_error = None;
    let solutions: Vec<VariantOutcome> = SolutionSource::for_model(args.model)
        .iter()
        .map(|&source| match solve(source, &p, g, &settings) {
            Ok(sol) => VariantOutcome {
                source,
                solution: Some(sol),
                error: None,
            },
            Err(e) => {
                let msg = e.to_string();
                first_error.get_or_insert(e);
                VariantOutcome {
                    source,
                    solution: None,
                    error: Some(msg),
                }
            }
        })
        .collect();
    if solutions.iter().all(|s| s.solution.is_none()) {
        return Err(first_error.expect("at least one variant per model").into());
    }
    let integer = args
        .integer
        .then(|| match minimize_cost(args.model, &p, g, &grid) {
            Ok(sol) => match sol.integer_neighbor {
                Some(s) => IntegerOutcome {
                    strategy: Some(s),
                    achieved_gain: Some(gain(&s, p.eff())),
                    total_cost: Some(cost(&s, p.cost())),
                    error: None,
                },
                None => IntegerOutcome {
                    strategy: None,
                    achieved_gain: None,
                    total_cost: None,
                    error: Some(EconError::Infeasible { radius: 1 }.to_string()),
                },
            },
            Err(e) => IntegerOutcome {
                strategy: None,
                achieved_gain: None,
                total_cost: None,
                error: Some(e.to_string()),
            },
        });
    let doc = OptimizeDoc {
        model: args.model,
        gain_target: g.value(),
        solutions,
        integer,
    };
    emit(
        args.out.output.as_deref(),
        &render(&doc, args.out.format)?,
        stdout,
    )
}

pub fn cmd_oracle(args: &OracleArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let p = load_params(&args.problem.params)?;
    let g = GainTarget::new(args.problem.gain)?;
    let grid = load_grid(args.grid.as_deref())?;
    let sol = minimize_cost(args.model, &p, g, &grid)?;
    emit(
        args.out.output.as_deref(),
        &render(&sol, args.out.format)?,
        stdout,
    )
}

pub fn cmd_audit(args: &AuditArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let region = match &args.region {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::input(format!("cannot read region file {}: {e}", path.display()))
            })?;
            Region::from_json(&text)?
        }
        None => Region::default(),
    };
    if args.samples == 0 {
        return Err(CliError::input("samples must be >= 1"));
    }
    let mut config = AuditConfig::default();
    if let Some(spec) = &args.grid {
        config.oracle_grid = load_grid(Some(spec))?;
    }
    let g = GainTarget::new(args.gain)?;
    let report = audit_claims(&region, args.samples, args.seed, g, &config)?;
    match &args.output {
        Some(path) => {
            emit(Some(path), &render(&report, Format::Json)?, stdout)?;
            emit(None, &report.render_text(), stdout)
        }
        None => match args.format {
            Format::Text => emit(None, &report.render_text(), stdout),
            f => emit(None, &render(&report, f)?, stdout),
        },
    }
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let p = load_params(&args.problem.params)?;
    let g = GainTarget::new(args.problem.gain)?;
    let grid = load_grid(args.grid.as_deref())?;
    let formulas = if args.formulas.is_empty() {
        FormulaVariant::for_model(args.model)
    } else {
        args.formulas.clone()
    };
    let table = sweep(
        args.model, &p, args.param, args.from, args.to, args.steps, g, &formulas, &grid,
    )?;
    let text = match args.format {
        Format::Csv => table.to_csv(),
        f => render(&table, f)?,
    };
    emit(args.output.as_deref(), &text, stdout)
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let p = load_params(&args.params)?;
    let logs = if args.random_design {
        let design = random_design(args.model, args.n, args.seed);
        simulate_design(&design, &p, args.sigma, args.seed)?
    } else {
        let (Some(q), Some(a)) = (args.q, args.a) else {
            return Err(CliError::input("give --q and --a, or --random-design"));
        };
        let s = Strategy::new(args.model, q, args.f, a)?;
        simulate(&s, &p, args.sigma, args.seed, args.n)?
    };
    let mut buf = Vec::new();
    write_jsonl(&logs, &mut buf)?;
    let text = String::from_utf8(buf).map_err(|e| CliError::input(e.to_string()))?;
    emit(args.output.as_deref(), &text, stdout)
}

pub fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = fs::File::open(&args.logs)
        .map_err(|e| CliError::input(format!("cannot read logs {}: {e}", args.logs.display())))?;
    let logs = read_jsonl(BufReader::new(file))?;
    let model = match (args.model, logs.first()) {
        (Some(m), _) => m,
        (None, Some(l)) => l.model,
        (None, None) => return Err(CliError::input("log file is empty")),
    };
    let g = fit_gain_params(&logs, model)?;
    let c = fit_cost_params(&logs)?;
    let est = EstimationResult::combine(&g, &c);
    emit(
        args.out.output.as_deref(),
        &render(&est, args.out.format)?,
        stdout,
    )
}

pub fn cmd_viability(args: &ViabilityArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let p = load_params(&args.problem.params)?;
    let g = GainTarget::new(args.problem.gain)?;
    let grid = load_grid(args.grid.as_deref())?;
    let rec = viability(&p, g, &grid)?;
    emit(
        args.out.output.as_deref(),
        &render(&rec, args.out.format)?,
        stdout,
    )
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Optimize(a) => cmd_optimize(a, stdout),
        Command::Oracle(a) => cmd_oracle(a, stdout),
        Command::Audit(a) => cmd_audit(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Simulate(a) => cmd_simulate(a, stdout),
        Command::Fit(a) => cmd_fit(a, stdout),
        Command::Viability(a) => cmd_viability(a, stdout),
    }
}

/// Parses the process arguments, runs, and returns the exit status.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        let cases: &[&[&str]] = &[
            &[
                "convecon", "optimize", "--model", "m0", "--params", "p.json", "--gain", "100",
            ],
            &[
                "convecon",
                "oracle",
                "--model",
                "m2",
                "--params",
                "p.json",
                "--gain",
                "10",
                "--grid",
                "{\"min\":0.001,\"max\":10000,\"points\":50,\"refinements\":2}",
            ],
            &["convecon", "audit", "--samples", "10", "--seed", "3"],
            &[
                "convecon",
                "sweep",
                "--model",
                "m0",
                "--params",
                "p.json",
                "--gain",
                "100",
                "--param",
                "c_query",
                "--from",
                "1",
                "--to",
                "50",
                "--steps",
                "50",
                "--formulas",
                "a0_star",
            ],
            &[
                "convecon", "simulate", "--model", "m1", "--params", "p.json", "--q", "2", "--f",
                "1", "--a", "3", "--n", "4",
            ],
            &["convecon", "fit", "--logs", "l.jsonl"],
            &[
                "convecon",
                "viability",
                "--params",
                "p.json",
                "--gain",
                "100",
                "--format",
                "text",
            ],
        ];
        for args in cases {
            Cli::try_parse_from(*args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
        assert!(Cli::try_parse_from(["convecon", "optimize", "--model", "m9"]).is_err());
        assert!(Cli::try_parse_from([
            "convecon", "sweep", "--model", "m0", "--params", "p", "--gain", "1", "--param",
            "delta", "--from", "1", "--to", "2", "--steps", "2"
        ])
        .is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&EconError::Domain("x".into())), 2);
        assert_eq!(exit_code(&EconError::NoInteriorOptimum("x".into())), 3);
        assert_eq!(
            exit_code(&EconError::InsufficientDesign {
                distinct: 1,
                required: 3
            }),
            4
        );
        assert_eq!(exit_code(&EconError::Unbounded("x".into())), 1);
    }

    #[test]
    fn text_rendering_carries_the_json_numbers() {
        #[derive(Serialize)]
        struct Doc {
            x: f64,
            n: u32,
            v: Vec<f64>,
        }
        let doc = Doc {
            x: 0.1,
            n: 7,
            v: vec![1.0 / 3.0],
        };
        let j = render(&doc, Format::Json).unwrap();
        let t = render(&doc, Format::Text).unwrap();
        assert!(j.contains("1.0000000000000001e-1") && t.contains("1.0000000000000001e-1"));
        assert!(j.contains("3.3333333333333331e-1") && t.contains("v[0]  3.3333333333333331e-1"));
        assert!(t.contains("n     7"));
        assert!(render(&doc, Format::Csv).is_err());
    }

    #[test]
    fn grid_accepts_inline_json_or_path() {
        let g = load_grid(Some(
            "{\"min\":0.01,\"max\":100,\"points\":20,\"refinements\":1}",
        ))
        .unwrap();
        assert_eq!(g.points, 20);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grid.json");
        fs::write(
            &path,
            "{\"min\":0.01,\"max\":100,\"points\":30,\"refinements\":1}",
        )
        .unwrap();
        assert_eq!(load_grid(Some(path.to_str().unwrap())).unwrap().points, 30);
        let err = load_grid(Some("/nonexistent/grid.json")).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("/nonexistent/grid.json"));
        assert_eq!(load_grid(None).unwrap(), GridSpec::default());
    }
}
