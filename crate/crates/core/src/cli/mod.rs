//! The `deq` command line.
//!
//! Every run prints one JSON document on stdout. On success it is a report:
//!
//! ```text
//! { "task": ..., "input": <problem file>, "results": ..., "seed": ...,
//!   "version": ..., "wall_time_ms": ... }
//! ```
//!
//! `input` is a complete problem file, so `deq --problem` on it reproduces
//! `results` byte for byte. On failure the document is
//! `{ "error": { "kind": ..., "message": ... }, "exit_code": ... }`.
//!
//! Exit codes: 0 on success, including non-convergence findings; 2 on usage,
//! JSON, validation and I/O errors; 3 when evaluation fails.
//!
//! A problem file has the keys `structure`, `function`, `preset`, `task`,
//! `seed` and `params`. `params` uses the long flag names of the task in
//! snake case, with the convergence flags nested under `convergence`.

mod problem;
mod tasks;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

pub use problem::{preset, Coords, ProblemFile, Resolved, Task};
pub use tasks::{
    execute, ContinuityParams, ConvergenceArgs, EquicontinuityParams, FiniteParams, FitParams, FitTarget,
    IterateParams, LimitExchangeParams, NewtonParams, ScheduleArg, SubsequenceParams, TaskParams,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_EVALUATION: i32 = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Json(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Library(#[from] crate::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Json(_) => "json",
            CliError::Io(_) => "io",
            CliError::Library(e) if e.is_evaluation() => "evaluation",
            CliError::Library(_) => "invalid_input",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Library(e) if e.is_evaluation() => EXIT_EVALUATION,
            _ => EXIT_USAGE,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() }, "exit_code": self.exit_code() })
    }
}

const FUNCTION_HELP: &str = "Preset structure and function: identity, logistic, square (on [0,1]), \
averaging (on [-1,1]^2) or newton:<coeffs> (on [-2,2]^2; coefficients leading first, e.g. newton:1,0,-1 is z^2 - 1)";

#[derive(Debug, Parser)]
#[command(
    name = "deq",
    version,
    about = "Deep equilibria of iterated layer maps",
    long_about = "Deep equilibria of iterated layer maps.\n\n\
        Polynomial coefficients are always given in descending order, leading coefficient first."
)]
struct Cli {
    /// Run the task described by a JSON problem file instead of a subcommand.
    #[arg(long, global = true)]
    problem: Option<PathBuf>,
    /// Seed for every randomised step; overrides the problem file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Path for CSV grids.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Spaces per indent level of the JSON report; 0 prints one line.
    #[arg(long, global = true, default_value_t = 2)]
    json_indent: usize,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact deep equilibrium of a self-map of {1..m}.
    Finite(FiniteParams),
    /// Doubling test for the deep equilibrium on sample states.
    Iterate {
        #[arg(long, help = FUNCTION_HELP)]
        function: String,
        #[command(flatten)]
        params: IterateParams,
    },
    /// Newton basins of a real polynomial on a grid; CSV to --out.
    NewtonBasins(NewtonParams),
    /// Randomised continuity probe of the deep equilibrium at one state.
    Continuity {
        #[arg(long, help = FUNCTION_HELP)]
        function: String,
        #[command(flatten)]
        params: ContinuityParams,
    },
    /// Compares the two iterated limits along a geometric state sequence.
    LimitExchange {
        #[arg(long, help = FUNCTION_HELP)]
        function: String,
        #[command(flatten)]
        params: LimitExchangeParams,
    },
    /// Uniform approximation of a target by max/min of affine predicates.
    Fit {
        #[arg(long, help = FUNCTION_HELP)]
        function: Option<String>,
        #[command(flatten)]
        params: FitParams,
    },
    /// Subsequence certificate on a finite set of states.
    Subsequence {
        #[arg(long, help = FUNCTION_HELP)]
        function: String,
        #[command(flatten)]
        params: SubsequenceParams,
    },
    /// Growth of nearby-pair distances under iterates.
    Equicontinuity {
        #[arg(long, help = FUNCTION_HELP)]
        function: String,
        #[command(flatten)]
        params: EquicontinuityParams,
    },
}

impl Command {
    fn into_parts(self) -> (Option<String>, TaskParams) {
        match self {
            Command::Finite(p) => (None, TaskParams::Finite(p)),
            Command::Iterate { function, params } => (Some(function), TaskParams::Iterate(params)),
            Command::NewtonBasins(p) => (None, TaskParams::NewtonBasins(p)),
            Command::Continuity { function, params } => (Some(function), TaskParams::Continuity(params)),
            Command::LimitExchange { function, params } => (Some(function), TaskParams::LimitExchange(params)),
            Command::Fit { function, params } => (function, TaskParams::Fit(params)),
            Command::Subsequence { function, params } => (Some(function), TaskParams::Subsequence(params)),
            Command::Equicontinuity { function, params } => (Some(function), TaskParams::Equicontinuity(params)),
        }
    }
}

#[derive(Serialize)]
struct Report {
    task: Task,
    input: ProblemFile,
    results: Value,
    seed: u64,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<u64>,
}

fn report(r: Resolved, out: Option<&Path>, started: Option<Instant>) -> Result<Report, CliError> {
    let results = execute(&r, out)?;
    Ok(Report {
        task: r.params.task(),
        input: r.echo(),
        results,
        seed: r.seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_time_ms: started.map(|t| t.elapsed().as_millis() as u64),
    })
}

/// Runs a problem file and returns the report without its timing field, so
/// equal problems give equal values.
pub fn solve(problem: ProblemFile, out: Option<&Path>) -> Result<Value, CliError> {
    let r = Resolved::from_problem(problem, None)?;
    Ok(serde_json::to_value(report(r, out, None)?).expect("reports serialize"))
}

fn resolve(cli: Cli) -> Result<Resolved, CliError> {
    match (cli.problem, cli.command) {
        (Some(_), Some(_)) => Err(CliError::Usage("`--problem` cannot be combined with a subcommand".into())),
        (None, None) => Err(CliError::Usage("give a subcommand or `--problem <file>`; see --help".into())),
        (Some(path), None) => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let problem: ProblemFile = serde_json::from_str(&text).map_err(|e| CliError::Json(e.to_string()))?;
            Resolved::from_problem(problem, cli.seed)
        }
        (None, Some(cmd)) => {
            let (function, params) = cmd.into_parts();
            Resolved::new(None, None, function.as_deref(), cli.seed.unwrap_or(0), params)
        }
    }
}

fn write_json(out: &mut dyn Write, v: &impl Serialize, indent: usize) -> std::io::Result<()> {
    if indent == 0 {
        serde_json::to_writer(&mut *out, v)?;
    } else {
        let pad = vec![b' '; indent];
        let fmt = serde_json::ser::PrettyFormatter::with_indent(&pad);
        v.serialize(&mut serde_json::Serializer::with_formatter(&mut *out, fmt))?;
    }
    writeln!(out)
}

/// Parses `args` (program name first), runs the task and writes the JSON
/// document to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return EXIT_OK;
            }
            let err = CliError::Usage(e.render().to_string().trim_end().to_string());
            let _ = write_json(out, &err.to_json(), 2);
            return err.exit_code();
        }
    };
    let indent = cli.json_indent;
    let out_path = cli.out.clone();
    let started = Instant::now();
    let outcome = resolve(cli).and_then(|r| report(r, out_path.as_deref(), Some(started)));
    let (written, code) = match outcome {
        Ok(report) => (write_json(out, &report, indent), EXIT_OK),
        Err(err) => (write_json(out, &err.to_json(), indent), err.exit_code()),
    };
    match written {
        Ok(()) => code,
        Err(_) => EXIT_USAGE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run(std::iter::once("deq").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    fn results(args: &[&str]) -> Value {
        let (code, text) = call(args);
        assert_eq!(code, 0, "{text}");
        serde_json::from_str::<Value>(&text).unwrap()["results"].clone()
    }

    #[test]
    fn finite_example() {
        let r = results(&["finite", "--map", "2,3,2,1"]);
        assert_eq!(r["N"], 2);
        assert_eq!(r["f_star"], json!([3, 2, 3, 2]));
        assert_eq!(r["tail_n"], 2);
        assert_eq!(r["order_K"], 2);
        assert_eq!(r["idempotent"], true);
    }

    #[test]
    fn out_of_range_map_is_a_usage_error() {
        let (code, text) = call(&["finite", "--map", "2,3,5"]);
        assert_eq!(code, 2);
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["error"]["kind"], "invalid_input");
        assert_eq!(v["exit_code"], 2);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(call(&[]).0, 2);
        assert_eq!(call(&["bogus"]).0, 2);
        assert_eq!(call(&["iterate", "--function", "cubic", "--state", "0.3"]).0, 2);
        assert_eq!(call(&["iterate", "--function", "square"]).0, 2);
        let (code, text) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(text.contains("leading coefficient first"));
    }

    #[test]
    fn evaluation_errors_exit_three() {
        // z = 0 is a critical point of z^2 - 1
        let (code, text) = call(&["iterate", "--function", "newton:1,0,-1", "--state", "0,0"]);
        assert_eq!(code, 3, "{text}");
        assert_eq!(serde_json::from_str::<Value>(&text).unwrap()["error"]["kind"], "evaluation");
    }

    #[test]
    fn non_convergence_is_a_finding() {
        let r = results(&["iterate", "--function", "logistic", "--state", "0.3", "--tol", "1e-6"]);
        assert_eq!(r["equilibrium"]["status"]["status"], "non_convergence");
        assert_eq!(r["idempotence_residual"], Value::Null);
    }

    #[test]
    fn negative_coordinates_parse() {
        let r = results(&["iterate", "--function", "averaging", "--state", "-0.5,1", "--samples", "3"]);
        let eq = &r["equilibrium"];
        assert_eq!(eq["table"].as_array().unwrap().len(), 4);
        let out = eq["table"][0]["output"][0].as_f64().unwrap();
        assert!((out - 0.5).abs() < 1e-8);
    }

    #[test]
    fn compact_output_is_one_line() {
        let (_, text) = call(&["finite", "--map", "1", "--json-indent", "0"]);
        assert_eq!(text.lines().count(), 1);
    }
}
