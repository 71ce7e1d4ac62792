//! Hand-off to an external MILP solver.
//!
//! The command receives two paths: the model in LP format and a file it must
//! write. The solution file holds one `name value` pair per line; a line
//! `status <optimal|infeasible|unbounded|limit>` and a line `objective <v>`
//! are optional. Variables not listed are taken as 0.

use std::process::Command;
use std::time::{Duration, Instant};

use super::lp_format::write_lp;
use super::model::MilpModel;
use super::{MilpSolution, SolveStatus};
use crate::error::{Error, Result};

/// Parses a solution file against `model`.
pub fn parse_solution(model: &MilpModel, text: &str, wall_time: Duration) -> Result<MilpSolution> {
    let mut status = SolveStatus::Optimal;
    let mut values = vec![0.0; model.num_vars()];
    for (k, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(name), Some(val), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::External(format!("solution line {} is not `name value`: {line}", k + 1)));
        };
        match name {
            "status" => {
                status = match val {
                    "optimal" => SolveStatus::Optimal,
                    "infeasible" => SolveStatus::Infeasible,
                    "unbounded" => SolveStatus::Unbounded,
                    "limit" => SolveStatus::Limit,
                    other => return Err(Error::External(format!("unknown status `{other}`"))),
                };
            }
            // recomputed from the values below
            "objective" => {}
            _ => {
                let v = model
                    .var_by_name(name)
                    .ok_or_else(|| Error::External(format!("solution names unknown variable `{name}`")))?;
                values[v.idx()] = val
                    .parse()
                    .map_err(|_| Error::External(format!("bad value `{val}` for `{name}`")))?;
            }
        }
    }
    if matches!(status, SolveStatus::Infeasible | SolveStatus::Unbounded) {
        return Ok(MilpSolution::without_point(status, wall_time));
    }
    let objective = model.evaluate_objective(&values);
    Ok(MilpSolution {
        status,
        values,
        objective,
        best_bound: objective,
        gap: 0.0,
        nodes: 0,
        lp_iterations: 0,
        wall_time,
    })
}

pub(super) fn solve_external(model: &MilpModel, cmd: &str) -> Result<MilpSolution> {
    let start = Instant::now();
    let dir = std::env::temp_dir().join(format!("mspeu-{}-{:?}", std::process::id(), start));
    std::fs::create_dir_all(&dir)?;
    let lp_path = dir.join("model.lp");
    let sol_path = dir.join("solution.txt");
    std::fs::write(&lp_path, write_lp(model)?)?;

    let mut parts = cmd.split_whitespace();
    let program = parts.next().ok_or_else(|| Error::External("empty solver command".into()))?;
    let output = Command::new(program)
        .args(parts)
        .arg(&lp_path)
        .arg(&sol_path)
        .output()
        .map_err(|e| Error::External(format!("could not run `{program}`: {e}")));
    let result = output.and_then(|out| {
        if !out.status.success() {
            return Err(Error::External(format!(
                "`{cmd}` exited with {}: {}",
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&sol_path)
            .map_err(|e| Error::External(format!("no solution file from `{cmd}`: {e}")))?;
        parse_solution(model, &text, start.elapsed())
    });
    let _ = std::fs::remove_dir_all(&dir);
    result
}
