//! Benchmark harness: loads instances, computes big-M tables, runs both
//! solution methods and lays the results out as comparison tables.
//!
//! Timings use [`Instant`]. Big-M time is kept apart from solve time, and
//! solve time includes building the models.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;

use crate::backward::solve_backward;
use crate::bigm::{compute_bigm_general, ftcp_fast_bigm, Relaxation};
use crate::error::{Error, Result};
use crate::ftcp::{self, FtcpInstance};
use crate::milp::{self, SolveParams, SolveStatus};
use crate::model::{build_node_formulation, count_model, BigMTable, Convention, MspeuProblem, PROBLEM_FORMAT};
use crate::tree::{DistId, NodeId};

/// A problem file, recognized by its `format` field.
#[derive(Clone, Debug)]
pub enum Input {
    Ftcp(FtcpInstance),
    Problem(MspeuProblem),
}

impl Input {
    pub fn from_json(text: &str) -> Result<Input> {
        #[derive(serde::Deserialize)]
        struct Probe {
            format: Option<String>,
        }
        let probe: Probe = serde_json::from_str(text)?;
        match probe.format.as_deref() {
            Some(ftcp::FORMAT) => Ok(Input::Ftcp(FtcpInstance::from_json(text)?)),
            Some(PROBLEM_FORMAT) => Ok(Input::Problem(MspeuProblem::from_json(text)?)),
            Some(other) => Err(Error::schema(
                "/format",
                format!("unknown format \"{other}\", expected \"{}\" or \"{PROBLEM_FORMAT}\"", ftcp::FORMAT),
            )),
            None => Err(Error::schema("/format", "missing format field")),
        }
    }

    pub fn load(path: &Path) -> Result<Input> {
        Input::from_json(&std::fs::read_to_string(path)?)
    }

    /// The generic problem; FTCP instances go through their mapping.
    pub fn problem(&self) -> Result<MspeuProblem> {
        match self {
            Input::Ftcp(inst) => ftcp::to_mspeu(inst),
            Input::Problem(p) => Ok(p.clone()),
        }
    }

    pub fn ftcp(&self) -> Option<&FtcpInstance> {
        match self {
            Input::Ftcp(inst) => Some(inst),
            Input::Problem(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BigMMethod {
    General,
    GeneralStagewise,
    GeneralExact,
    FtcpFast,
}

impl BigMMethod {
    pub fn parse(s: &str) -> Option<BigMMethod> {
        Some(match s {
            "general" => BigMMethod::General,
            "general-stagewise" => BigMMethod::GeneralStagewise,
            "general-exact" => BigMMethod::GeneralExact,
            "ftcp-fast" => BigMMethod::FtcpFast,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BigMMethod::General => "general",
            BigMMethod::GeneralStagewise => "general-stagewise",
            BigMMethod::GeneralExact => "general-exact",
            BigMMethod::FtcpFast => "ftcp-fast",
        }
    }

    /// The closed form for FTCP files, the LP procedure otherwise.
    pub fn default_for(input: &Input) -> BigMMethod {
        match input {
            Input::Ftcp(_) => BigMMethod::FtcpFast,
            Input::Problem(_) => BigMMethod::General,
        }
    }
}

/// Big-M table in the units of the generic problem.
pub fn compute_table(input: &Input, problem: &MspeuProblem, method: BigMMethod, params: &SolveParams) -> Result<BigMTable> {
    let relaxation = match method {
        BigMMethod::FtcpFast => {
            return match input {
                Input::Ftcp(inst) => Ok(ftcp::to_mspeu_bigm(inst, &ftcp_fast_bigm(inst))),
                Input::Problem(_) => Err(Error::invalid("ftcp-fast needs a team composition instance")),
            };
        }
        BigMMethod::General => Relaxation::Lp,
        BigMMethod::GeneralStagewise => Relaxation::StagewiseDrop,
        BigMMethod::GeneralExact => Relaxation::Exact,
    };
    compute_bigm_general(problem, relaxation, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Monolithic,
    Backward,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Monolithic => "monolithic",
            Method::Backward => "backward",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRecord {
    pub instance: String,
    pub compositions: usize,
    pub samples: usize,
    pub vars: usize,
    pub bins: usize,
    pub cons: usize,
    pub method: Method,
    pub bigm_method: Option<BigMMethod>,
    /// Seconds.
    pub bigm_time: Option<f64>,
    /// Seconds, model building included.
    pub solve_time: Option<f64>,
    pub objective: Option<f64>,
    /// A solver status, `too_large`, `error` or `skipped`.
    pub status: String,
    /// Only on backward records whose monolithic twin also finished optimal.
    pub delta_tau_pct: Option<f64>,
}

impl BenchRecord {
    pub fn without_timings(mut self) -> BenchRecord {
        self.bigm_time = None;
        self.solve_time = None;
        self.delta_tau_pct = None;
        self
    }
}

pub fn delta_tau_pct(tau_backward: f64, tau_monolithic: f64) -> f64 {
    100.0 * (tau_backward - tau_monolithic) / tau_monolithic
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    /// Defaults per input, see [`BigMMethod::default_for`].
    pub bigm: Option<BigMMethod>,
    pub params: SolveParams,
    /// Report model sizes only.
    pub counts_only: bool,
    pub jobs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { bigm: None, params: SolveParams::default(), counts_only: false, jobs: 1 }
    }
}

fn status_name(status: SolveStatus) -> String {
    status.to_string()
}

fn error_status(e: &Error) -> String {
    match e {
        Error::TooLarge { .. } => "too_large".into(),
        _ => "error".into(),
    }
}

/// Two records per instance, monolithic first.
pub fn bench_input(id: &str, input: &Input, opts: &BenchOptions) -> Result<Vec<BenchRecord>> {
    let problem = input.problem()?;
    let tree = &problem.tree;
    let root_dists = tree.num_distributions(NodeId::ROOT);
    let compositions = input.ftcp().map_or(root_dists, |i| i.num_compositions());
    let samples = if root_dists > 0 { tree.children(NodeId::ROOT, DistId(0)).len() } else { 0 };
    let counts = match input {
        Input::Ftcp(_) => count_model(&problem, Convention::TableConvention)
            .or_else(|_| count_model(&problem, Convention::AllVars))?,
        Input::Problem(_) => count_model(&problem, Convention::AllVars)?,
    };
    let base = BenchRecord {
        instance: id.to_string(),
        compositions,
        samples,
        vars: counts.vars,
        bins: counts.bins,
        cons: counts.cons,
        method: Method::Monolithic,
        bigm_method: None,
        bigm_time: None,
        solve_time: None,
        objective: None,
        status: "skipped".into(),
        delta_tau_pct: None,
    };
    if opts.counts_only {
        return Ok(vec![base.clone(), BenchRecord { method: Method::Backward, ..base }]);
    }

    let method = opts.bigm.unwrap_or_else(|| BigMMethod::default_for(input));
    let t = Instant::now();
    let table = match compute_table(input, &problem, method, &opts.params) {
        Ok(table) => table,
        Err(e) => {
            log::warn!("{id}: big-M computation failed: {e}");
            let failed = BenchRecord { bigm_method: Some(method), status: error_status(&e), ..base };
            return Ok(vec![failed.clone(), BenchRecord { method: Method::Backward, ..failed }]);
        }
    };
    let bigm_time = t.elapsed().as_secs_f64();
    let base = BenchRecord { bigm_method: Some(method), bigm_time: Some(bigm_time), ..base };

    let t = Instant::now();
    let mono = build_node_formulation(&problem, &table).and_then(|f| milp::solve(&f.model, &opts.params));
    let mono_time = t.elapsed().as_secs_f64();
    let mono = match mono {
        Ok(s) => BenchRecord {
            solve_time: Some(mono_time),
            objective: s.has_solution().then_some(s.objective),
            status: status_name(s.status),
            ..base.clone()
        },
        Err(e) => {
            log::warn!("{id}: monolithic solve failed: {e}");
            BenchRecord { status: error_status(&e), ..base.clone() }
        }
    };

    let t = Instant::now();
    let back = solve_backward(&problem, &table, &opts.params);
    let back_time = t.elapsed().as_secs_f64();
    let mut back = match back {
        Ok(r) => BenchRecord {
            method: Method::Backward,
            solve_time: Some(back_time),
            objective: r.z.is_finite().then_some(r.z),
            status: status_name(r.status),
            ..base
        },
        Err(e) => {
            log::warn!("{id}: backward solve failed: {e}");
            BenchRecord { method: Method::Backward, status: error_status(&e), ..base }
        }
    };
    if mono.status == "optimal" && back.status == "optimal" {
        if let (Some(tb), Some(tm)) = (back.solve_time, mono.solve_time) {
            back.delta_tau_pct = Some(delta_tau_pct(tb, tm));
        }
    }
    Ok(vec![mono, back])
}

/// Instance files of a directory, sorted by name.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Runs every instance of `dir`; `opts.jobs` instances at a time.
pub fn bench_dir(dir: &Path, opts: &BenchOptions) -> Result<Vec<BenchRecord>> {
    let files = instance_files(dir)?;
    let inputs = files
        .iter()
        .map(|f| {
            let id = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Input::load(f).map(|i| (id, i)).map_err(|e| Error::invalid(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>>>()?;

    let slots: Vec<Mutex<Option<Result<Vec<BenchRecord>>>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = opts.jobs.max(1).min(inputs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some((id, input)) = inputs.get(k) else { break };
                log::info!("bench {id}");
                let r = bench_input(id, input, opts);
                *slots[k].lock().expect("no panics while holding the slot") = Some(r);
            });
        }
    });
    let mut records = Vec::new();
    for slot in slots {
        records.extend(slot.into_inner().expect("workers finished").expect("every slot filled")?);
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

/// One line of the results table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TableRow {
    pub team: String,
    pub samples: Option<f64>,
    pub vars: Option<f64>,
    pub bins: Option<f64>,
    pub cons: Option<f64>,
    pub tau_monolithic: Option<f64>,
    pub tau_backward: Option<f64>,
    pub obj_monolithic: Option<f64>,
    pub obj_backward: Option<f64>,
    pub delta_tau_pct: Option<f64>,
    pub tau_bigm: Option<f64>,
    pub bigm_method: String,
    pub status_monolithic: String,
    pub status_backward: String,
}

const HEADER: [&str; 14] = [
    "Team",
    "S",
    "#Var",
    "#Bin",
    "#Con",
    "tau_monolithic",
    "tau_backward",
    "obj_monolithic",
    "obj_backward",
    "delta_tau_pct",
    "tau_bigm",
    "bigm_method",
    "status_monolithic",
    "status_backward",
];

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Pairs monolithic and backward records per instance and appends the
/// average row when there is at least one instance.
pub fn table_rows(records: &[BenchRecord]) -> Vec<TableRow> {
    let mut rows: Vec<TableRow> = Vec::new();
    for r in records {
        let k = match rows.iter().position(|row| row.team == r.instance) {
            Some(k) => k,
            None => {
                rows.push(TableRow {
                    team: r.instance.clone(),
                    samples: Some(r.samples as f64),
                    vars: Some(r.vars as f64),
                    bins: Some(r.bins as f64),
                    cons: Some(r.cons as f64),
                    tau_bigm: r.bigm_time,
                    bigm_method: r.bigm_method.map(|m| m.name().to_string()).unwrap_or_default(),
                    ..TableRow::default()
                });
                rows.len() - 1
            }
        };
        let row = &mut rows[k];
        match r.method {
            Method::Monolithic => {
                row.tau_monolithic = r.solve_time;
                row.obj_monolithic = r.objective;
                row.status_monolithic = r.status.clone();
            }
            Method::Backward => {
                row.tau_backward = r.solve_time;
                row.obj_backward = r.objective;
                row.status_backward = r.status.clone();
                row.delta_tau_pct = r.delta_tau_pct;
            }
        }
    }
    if rows.is_empty() {
        return rows;
    }
    let avg = TableRow {
        team: "Avg".into(),
        samples: mean(rows.iter().map(|r| r.samples)),
        vars: mean(rows.iter().map(|r| r.vars)),
        bins: mean(rows.iter().map(|r| r.bins)),
        cons: mean(rows.iter().map(|r| r.cons)),
        tau_monolithic: mean(rows.iter().map(|r| r.tau_monolithic)),
        tau_backward: mean(rows.iter().map(|r| r.tau_backward)),
        obj_monolithic: mean(rows.iter().map(|r| r.obj_monolithic)),
        obj_backward: mean(rows.iter().map(|r| r.obj_backward)),
        delta_tau_pct: mean(rows.iter().map(|r| r.delta_tau_pct)),
        tau_bigm: mean(rows.iter().map(|r| r.tau_bigm)),
        ..TableRow::default()
    };
    rows.push(avg);
    rows
}

fn fmt(v: Option<f64>, decimals: usize) -> String {
    v.map(|x| format!("{x:.decimals$}")).unwrap_or_default()
}

fn cells(row: &TableRow) -> [String; 14] {
    // instance rows carry whole counts, the average row does not
    let count_decimals = usize::from(row.team == "Avg");
    [
        row.team.clone(),
        fmt(row.samples, count_decimals),
        fmt(row.vars, count_decimals),
        fmt(row.bins, count_decimals),
        fmt(row.cons, count_decimals),
        fmt(row.tau_monolithic, 4),
        fmt(row.tau_backward, 4),
        fmt(row.obj_monolithic, 6),
        fmt(row.obj_backward, 6),
        fmt(row.delta_tau_pct, 3),
        fmt(row.tau_bigm, 4),
        row.bigm_method.clone(),
        row.status_monolithic.clone(),
        row.status_backward.clone(),
    ]
}

pub fn emit_table(records: &[BenchRecord], format: TableFormat) -> String {
    let rows = table_rows(records);
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(HEADER).expect("writing to memory");
            for row in &rows {
                w.write_record(cells(row)).expect("writing to memory");
            }
            String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", HEADER.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(HEADER.len()));
            for row in &rows {
                let c = cells(row).map(|s| s.replace('|', "\\|"));
                let _ = writeln!(out, "| {} |", c.join(" | "));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str, method: Method, tau: f64, obj: f64) -> BenchRecord {
        BenchRecord {
            instance: id.into(),
            compositions: 3,
            samples: 2,
            vars: 100,
            bins: 60,
            cons: 80,
            method,
            bigm_method: Some(BigMMethod::FtcpFast),
            bigm_time: Some(0.5),
            solve_time: Some(tau),
            objective: Some(obj),
            status: "optimal".into(),
            delta_tau_pct: None,
        }
    }

    #[test]
    fn delta_tau_formula() {
        assert!((delta_tau_pct(80.0, 100.0) + 20.0).abs() < 1e-12);
        let mut back = record("a", Method::Backward, 80.0, 1.0);
        back.delta_tau_pct = Some(delta_tau_pct(80.0, 100.0));
        let csv = emit_table(&[record("a", Method::Monolithic, 100.0, 1.0), back], TableFormat::Csv);
        assert!(csv.lines().nth(1).unwrap().contains(",-20.000,"), "{csv}");
    }

    #[test]
    fn single_record_average_matches_row() {
        let rows = table_rows(&[record("a", Method::Monolithic, 2.0, 7.5)]);
        assert_eq!(rows.len(), 2);
        let (row, avg) = (&rows[0], &rows[1]);
        assert_eq!(avg.team, "Avg");
        assert_eq!(row.vars, avg.vars);
        assert_eq!(row.tau_monolithic, avg.tau_monolithic);
        assert_eq!(row.obj_monolithic, avg.obj_monolithic);
        assert_eq!(avg.tau_backward, None);
    }

    #[test]
    fn empty_table_is_header_only() {
        let csv = emit_table(&[], TableFormat::Csv);
        assert_eq!(csv.lines().count(), 1);
        assert!(csv.starts_with("Team,S,#Var,#Bin,#Con,tau_monolithic"));
        let md = emit_table(&[], TableFormat::Markdown);
        assert_eq!(md.lines().count(), 2);
    }

    #[test]
    fn average_over_many_instances() {
        let mut records = Vec::new();
        for k in 0..20 {
            records.push(record(&format!("t{k:02}"), Method::Monolithic, k as f64, 1.0 + k as f64));
            records.push(record(&format!("t{k:02}"), Method::Backward, 0.5 * k as f64, 1.0 + k as f64));
        }
        let rows = table_rows(&records);
        let avg = rows.last().unwrap();
        assert!((avg.tau_monolithic.unwrap() - 9.5).abs() < 1e-9);
        assert!((avg.tau_backward.unwrap() - 4.75).abs() < 1e-9);
        assert!((avg.obj_backward.unwrap() - 10.5).abs() < 1e-9);
    }

    #[test]
    fn bench_toy_instance() {
        let params = ftcp::GeneratorParams { num_compositions: 2, samples: 1, stages: 3, seed: 3, ..Default::default() };
        let input = Input::Ftcp(ftcp::generate_instance(&params).unwrap());
        let records = bench_input("t", &input, &BenchOptions::default()).unwrap();
        assert_eq!(records.len(), 2);
        let (m, b) = (records[0].objective.unwrap(), records[1].objective.unwrap());
        assert!((m - b).abs() <= 1e-6 * m.abs().max(1.0));
        assert!(records[1].delta_tau_pct.is_some());
        // the table convention: 7 nodes of (4 + 2 + 1) variables
        assert_eq!(records[0].vars, 7 * 7);
    }

    #[test]
    fn unknown_format_is_rejected() {
        let err = Input::from_json(r#"{"format": "nope"}"#).unwrap_err();
        assert!(err.to_string().contains("/format"));
    }
}
