//! The `mspeu` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 when loading, big-M
//! computation or solving fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::backward::{extract_policy, solve_backward};
use crate::bench::{bench_dir, compute_table, emit_table, BenchOptions, BigMMethod, Input, TableFormat};
use crate::error::{Error, Result};
use crate::ftcp::{self, generate_instance, DiscountMode, GeneratorParams};
use crate::milp::{self, lp_format, Backend, SolveParams, SolveStatus};
use crate::model::{build_node_formulation, BigMTable, MspeuProblem, MspeuSolution};

#[derive(Parser, Debug)]
#[command(name = "mspeu", version, about = "Multistage stochastic programs with decision-dependent distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BigMArg {
    General,
    GeneralStagewise,
    GeneralExact,
    FtcpFast,
}

impl From<BigMArg> for BigMMethod {
    fn from(a: BigMArg) -> BigMMethod {
        match a {
            BigMArg::General => BigMMethod::General,
            BigMArg::GeneralStagewise => BigMMethod::GeneralStagewise,
            BigMArg::GeneralExact => BigMMethod::GeneralExact,
            BigMArg::FtcpFast => BigMMethod::FtcpFast,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Monolithic,
    Backward,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DiscountArg {
    PaperLiteral,
    Compound,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExportFormat {
    Lp,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write seeded team composition instances, one file per team.
    Generate {
        #[arg(long, default_value_t = 1)]
        teams: usize,
        #[arg(long)]
        compositions: usize,
        #[arg(long)]
        samples: usize,
        #[arg(long)]
        stages: usize,
        /// Team t (1-based) uses seed + t - 1.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        correlation: Option<f64>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, value_enum)]
        discount: Option<DiscountArg>,
        /// Keep the synthetic player values in the audit block.
        #[arg(long)]
        record_players: bool,
    },
    /// Compute a big-M table (always in the units of the generic problem).
    Bigm {
        #[arg(long, value_enum)]
        method: BigMArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        omit_timings: bool,
    },
    /// Solve an instance monolithically or with the backward algorithm.
    Solve {
        #[arg(long, value_enum)]
        method: MethodArg,
        #[arg(long = "in")]
        input: PathBuf,
        /// Big-M table file; computed with the input's default method when absent.
        #[arg(long)]
        bigm: Option<PathBuf>,
        /// `builtin` or `external:<command>`; defaults to MSPEU_SOLVER.
        #[arg(long)]
        solver: Option<String>,
        /// Result JSON; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-node decisions: CSV for team instances, JSON otherwise.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Dump of the backward value table.
        #[arg(long)]
        phi: Option<PathBuf>,
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        omit_timings: bool,
    },
    /// Run both methods on every instance of a directory.
    Bench {
        #[arg(long = "in")]
        input: PathBuf,
        /// Table file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        markdown: bool,
        #[arg(long, value_enum)]
        bigm_method: Option<BigMArg>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        time_limit: Option<f64>,
        /// Leave timing columns empty so the output is reproducible.
        #[arg(long)]
        omit_timings: bool,
        /// Report model sizes without solving.
        #[arg(long)]
        counts_only: bool,
    },
    /// Write the monolithic model for an external solver.
    Export {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "lp")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        bigm: Option<PathBuf>,
    },
}

/// Failures after argument parsing.
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Run(e)
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match dispatch(cli.command, &mut stdout) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn params(time_limit: Option<f64>) -> CliResult<SolveParams> {
    let mut p = SolveParams::default();
    if let Some(t) = time_limit {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Failure::Usage(format!("--time-limit must be a positive number of seconds, got {t}")));
        }
        p.time_limit = Some(Duration::from_secs_f64(t));
    }
    Ok(p)
}

fn load(path: &Path) -> CliResult<(Input, MspeuProblem)> {
    let input = Input::load(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let problem = input.problem()?;
    Ok((input, problem))
}

fn table_for(input: &Input, problem: &MspeuProblem, file: Option<&Path>, params: &SolveParams) -> CliResult<BigMTable> {
    let table = match file {
        Some(f) => BigMTable::from_json(&std::fs::read_to_string(f).map_err(Error::from)?)?,
        None => compute_table(input, problem, BigMMethod::default_for(input), params)?,
    };
    table.check_complete(&problem.tree)?;
    Ok(table)
}

fn check_method(input: &Input, method: BigMMethod) -> CliResult {
    if method == BigMMethod::FtcpFast && input.ftcp().is_none() {
        return Err(Failure::Usage("--method ftcp-fast needs a team composition instance".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveReport {
    method: &'static str,
    status: SolveStatus,
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    subproblems: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    solve_time_s: Option<f64>,
}

fn write_solution(path: &Path, input: &Input, sol: &MspeuSolution) -> Result<()> {
    match input {
        Input::Ftcp(inst) => {
            let rows = ftcp::solution_rows(inst, sol)?;
            ftcp::write_solution_csv(&rows, std::fs::File::create(path)?)
        }
        Input::Problem(_) => Ok(std::fs::write(path, serde_json::to_string_pretty(sol)? + "\n")?),
    }
}

fn dispatch(cmd: Command, out: &mut impl Write) -> CliResult {
    match cmd {
        Command::Generate {
            teams,
            compositions,
            samples,
            stages,
            seed,
            out: dir,
            players,
            correlation,
            rho,
            budget,
            discount,
            record_players,
        } => {
            if teams == 0 {
                return Err(Failure::Usage("--teams must be at least 1".into()));
            }
            let defaults = GeneratorParams::default();
            std::fs::create_dir_all(&dir).map_err(Error::from)?;
            let width = teams.to_string().len().max(2);
            for t in 0..teams {
                let p = GeneratorParams {
                    num_compositions: compositions,
                    samples,
                    stages,
                    players_per_composition: players.unwrap_or(defaults.players_per_composition),
                    correlation: correlation.unwrap_or(defaults.correlation),
                    seed: seed + t as u64,
                    budget,
                    rho: rho.unwrap_or(defaults.rho),
                    discount_mode: match discount {
                        Some(DiscountArg::Compound) => DiscountMode::Compound,
                        _ => DiscountMode::PaperLiteral,
                    },
                    record_players,
                    ..defaults.clone()
                };
                let inst = generate_instance(&p)?;
                let path = dir.join(format!("team{:0width$}.json", t + 1));
                inst.save(&path)?;
                writeln!(out, "{}", path.display()).map_err(Error::from)?;
            }
        }
        Command::Bigm { method, input, out: file, time_limit, omit_timings } => {
            let params = params(time_limit)?;
            let (input, problem) = load(&input)?;
            let method = BigMMethod::from(method);
            check_method(&input, method)?;
            let t = Instant::now();
            let table = compute_table(&input, &problem, method, &params)?;
            let secs = t.elapsed().as_secs_f64();
            std::fs::write(&file, table.to_json()? + "\n").map_err(Error::from)?;
            if !omit_timings {
                writeln!(out, "bigm {}: {} entries in {secs:.6} s", method.name(), table.len()).map_err(Error::from)?;
            }
        }
        Command::Solve { method, input, bigm, solver, out: file, solution, phi, time_limit, omit_timings } => {
            let mut params = params(time_limit)?;
            params.backend = match solver {
                Some(s) => Backend::parse(&s).map_err(|e| Failure::Usage(e.to_string()))?,
                None => Backend::from_env()?,
            };
            let (input, problem) = load(&input)?;
            let table = table_for(&input, &problem, bigm.as_deref(), &params)?;
            let t = Instant::now();
            let (report, sol) = match method {
                MethodArg::Monolithic => {
                    let f = build_node_formulation(&problem, &table)?;
                    let s = milp::solve(&f.model, &params)?;
                    let report = SolveReport {
                        method: "monolithic",
                        status: s.status,
                        objective: s.has_solution().then_some(s.objective),
                        best_bound: s.best_bound.is_finite().then_some(s.best_bound),
                        nodes: Some(s.nodes),
                        subproblems: None,
                        solve_time_s: None,
                    };
                    (report, s.has_solution().then(|| f.extract(&problem, &s)))
                }
                MethodArg::Backward => {
                    let r = solve_backward(&problem, &table, &params)?;
                    if !omit_timings {
                        for st in &r.stages {
                            writeln!(
                                out,
                                "stage {}: {} subproblems in {:.6} s",
                                st.stage,
                                st.subproblems,
                                st.elapsed.as_secs_f64()
                            )
                            .map_err(Error::from)?;
                        }
                    }
                    if let Some(path) = &phi {
                        std::fs::write(path, r.phi.to_json()? + "\n").map_err(Error::from)?;
                    }
                    let sol = match (&solution, r.status) {
                        (Some(_), SolveStatus::Optimal) => Some(extract_policy(&problem, &table, &r, &params)?),
                        _ => None,
                    };
                    let report = SolveReport {
                        method: "backward",
                        status: r.status,
                        objective: r.z.is_finite().then_some(r.z),
                        best_bound: None,
                        nodes: None,
                        subproblems: Some(r.subproblems),
                        solve_time_s: None,
                    };
                    (report, sol)
                }
            };
            let report = SolveReport { solve_time_s: (!omit_timings).then(|| t.elapsed().as_secs_f64()), ..report };
            let text = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
            match &file {
                Some(path) => std::fs::write(path, text).map_err(Error::from)?,
                None => out.write_all(text.as_bytes()).map_err(Error::from)?,
            }
            if let (Some(path), Some(sol)) = (&solution, &sol) {
                write_solution(path, &input, sol)?;
            }
            if matches!(report.status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
                return Err(Failure::Run(Error::invalid(format!("the instance is {}", report.status))));
            }
        }
        Command::Bench { input, out: file, markdown, bigm_method, jobs, time_limit, omit_timings, counts_only } => {
            if jobs == 0 {
                return Err(Failure::Usage("--jobs must be at least 1".into()));
            }
            let opts = BenchOptions { bigm: bigm_method.map(BigMMethod::from), params: params(time_limit)?, counts_only, jobs };
            let mut records = bench_dir(&input, &opts)?;
            if omit_timings {
                records = records.into_iter().map(|r| r.without_timings()).collect();
            }
            let format = if markdown { TableFormat::Markdown } else { TableFormat::Csv };
            let text = emit_table(&records, format);
            match &file {
                Some(path) => std::fs::write(path, text).map_err(Error::from)?,
                None => out.write_all(text.as_bytes()).map_err(Error::from)?,
            }
        }
        Command::Export { input, format: ExportFormat::Lp, out: file, bigm } => {
            let params = SolveParams::default();
            let (input, problem) = load(&input)?;
            let table = table_for(&input, &problem, bigm.as_deref(), &params)?;
            let f = build_node_formulation(&problem, &table)?;
            std::fs::write(&file, lp_format::write_lp(&f.model)?).map_err(Error::from)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run(["mspeu", "bench", "--bogus"]), 1);
        assert_eq!(run(["mspeu"]), 1);
    }

    #[test]
    fn missing_input_is_a_run_failure() {
        assert_eq!(run(["mspeu", "solve", "--method", "backward", "--in", "/nonexistent/x.json"]), 2);
    }
}
