//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs without the test harness so the lines always show up in the
//! output of `cargo test`. Exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{battery, close, ftcp};
use mspeu::backward::solve_backward;
use mspeu::bigm::{compute_bigm_general, ftcp_fast_bigm, pairwise_bigm, validate_bigm, BoundPair, Relaxation};
use mspeu::ftcp::{to_mspeu, to_mspeu_bigm};
use mspeu::milp::{self, MilpModel, Relation, Sense, SolveParams, SolveStatus, VarKind};
use mspeu::model::{count_model, enumerate_oracle, Convention, MspeuProblem};
use mspeu::tree::DistId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REL_TOL: f64 = 1e-6;
const COUNT_BUDGET: Duration = Duration::from_secs(1);
const BATTERY_BUDGET: Duration = Duration::from_secs(120);
const MILP_CASES: usize = 100;
const SCALING_ENVELOPE: f64 = 8.0;
const REPETITIONS: usize = 3;

type Check = (bool, String);

fn c1_model_sizes() -> Check {
    let expected = [
        ((3, 4), (24505, 16965, 22620)),
        ((3, 5), (47008, 32544, 43392)),
        ((4, 4), (91749, 69904, 65535)),
        ((4, 5), (176841, 134736, 126315)),
        ((5, 4), (261051, 210525, 151578)),
        ((5, 5), (504556, 406900, 292968)),
    ];
    let mut problems = Vec::new();
    for &((k, s), _) in &expected {
        problems.push(to_mspeu(&ftcp(k, s, 4, 1)).unwrap());
    }
    let start = Instant::now();
    let mut wrong = Vec::new();
    for (p, &((k, s), want)) in problems.iter().zip(&expected) {
        let c = count_model(p, Convention::TableConvention).unwrap();
        if (c.vars, c.bins, c.cons) != want {
            wrong.push(format!("(|I|={k}, S={s}) gave ({}, {}, {})", c.vars, c.bins, c.cons));
        }
    }
    let took = start.elapsed();
    let ok = wrong.is_empty() && took < COUNT_BUDGET;
    (ok, format!("6 configurations counted in {:.3} s; mismatches: {:?}", took.as_secs_f64(), wrong))
}

fn c2_pairwise() -> Check {
    let bounds: BTreeMap<DistId, BoundPair> = [(10.0, 5.0), (9.0, 4.0), (8.0, 3.0)]
        .iter()
        .enumerate()
        .map(|(d, &(max, min))| (DistId(d), BoundPair { max, min }))
        .collect();
    let m: Vec<f64> = pairwise_bigm(&bounds).into_values().collect();
    (m == [4.0, 6.0, 7.0], format!("pairwise M = {m:?}"))
}

struct BatteryRow {
    id: String,
    oracle: f64,
    backward: f64,
    monolithic: f64,
    general_issues: Vec<String>,
    fast_issues: Vec<String>,
    subproblems: usize,
    expected_subproblems: usize,
    c_is_zero: bool,
}

fn run_battery() -> (Vec<BatteryRow>, Duration) {
    let params = SolveParams::default();
    let start = Instant::now();
    let mut rows = Vec::new();
    for (id, inst) in battery() {
        let p = to_mspeu(&inst).unwrap();
        let oracle = enumerate_oracle(&p, &params).unwrap().objective;
        let general = compute_bigm_general(&p, Relaxation::Lp, &params).unwrap();
        let back = solve_backward(&p, &general, &params).unwrap();
        let rg = validate_bigm(&p, &general, 1, &params).unwrap();
        let fast = to_mspeu_bigm(&inst, &ftcp_fast_bigm(&inst));
        let rf = validate_bigm(&p, &fast, 1, &params).unwrap();
        rows.push(BatteryRow {
            id,
            oracle,
            backward: back.z,
            monolithic: rg.monolithic,
            general_issues: rg.issues,
            fast_issues: rf.issues,
            subproblems: back.subproblems,
            expected_subproblems: expected_subproblems(&p),
            c_is_zero: p.c_is_zero,
        });
    }
    (rows, start.elapsed())
}

fn expected_subproblems(p: &MspeuProblem) -> usize {
    p.tree.non_leaves().map(|n| p.tree.num_distributions(n)).sum::<usize>() + 1
}

fn c3_equivalence(rows: &[BatteryRow], took: Duration) -> Check {
    let bad: Vec<&str> = rows
        .iter()
        .filter(|r| !(close(r.backward, r.oracle) && close(r.monolithic, r.oracle)))
        .map(|r| r.id.as_str())
        .collect();
    let ok = rows.len() >= 50 && bad.is_empty() && took < BATTERY_BUDGET;
    (
        ok,
        format!(
            "{} instances, backward = monolithic = oracle within {REL_TOL:e} on {}; battery took {:.1} s; disagreeing: {:?}",
            rows.len(),
            rows.len() - bad.len(),
            took.as_secs_f64(),
            bad
        ),
    )
}

fn c4_bigm_validity(rows: &[BatteryRow]) -> Check {
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| !(r.general_issues.is_empty() && r.fast_issues.is_empty()))
        .map(|r| format!("{}: {:?} {:?}", r.id, r.general_issues, r.fast_issues))
        .collect();
    (bad.is_empty(), format!("general and fast tables valid on {} of {} instances {:?}", rows.len() - bad.len(), rows.len(), bad))
}

/// A random MILP with up to 8 binaries and a few bounded continuous variables.
fn random_milp(rng: &mut ChaCha8Rng) -> (MilpModel, usize) {
    let nb = rng.random_range(1..=8);
    let nc = rng.random_range(0..=3);
    let sense = if rng.random_bool(0.5) { Sense::Maximize } else { Sense::Minimize };
    let mut m = MilpModel::new(sense);
    let mut vars = Vec::new();
    for j in 0..nb {
        vars.push(m.add_var(format!("b{j}"), 0.0, 1.0, VarKind::Binary).unwrap());
    }
    for j in 0..nc {
        vars.push(m.add_var(format!("c{j}"), 0.0, rng.random_range(1.0..5.0), VarKind::Continuous).unwrap());
    }
    for &v in &vars {
        m.set_objective(v, rng.random_range(-5.0..5.0f64).round());
    }
    for k in 0..rng.random_range(1..=5) {
        let terms = vars.iter().map(|&v| (v, rng.random_range(-4.0..4.0f64).round())).collect();
        let rel = [Relation::Le, Relation::Ge, Relation::Le][rng.random_range(0..3)];
        let rhs = rng.random_range(-2.0..6.0f64).round();
        m.add_constraint(format!("r{k}"), terms, rel, rhs).unwrap();
    }
    (m, nb)
}

fn enumerate_binaries(model: &MilpModel, nb: usize, params: &SolveParams) -> Option<f64> {
    let mut best: Option<f64> = None;
    for code in 0..1usize << nb {
        let mut fixed = model.clone();
        for j in 0..nb {
            let v = fixed.var_mut(mspeu::milp::VarId(j));
            let bit = ((code >> j) & 1) as f64;
            v.lower = bit;
            v.upper = bit;
        }
        let s = milp::solve(&fixed, params).unwrap();
        if s.status == SolveStatus::Optimal {
            let better = match (best, model.sense) {
                (None, _) => true,
                (Some(b), Sense::Maximize) => s.objective > b,
                (Some(b), Sense::Minimize) => s.objective < b,
            };
            if better {
                best = Some(s.objective);
            }
        }
    }
    best
}

fn c5_milp_soundness() -> Check {
    let params = SolveParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut feasible_cases) = (0, 0);
    let mut bad = Vec::new();
    for case in 0..MILP_CASES {
        let (m, nb) = random_milp(&mut rng);
        let s = milp::solve(&m, &params).unwrap();
        let truth = enumerate_binaries(&m, nb, &params);
        let ok = match (s.status, truth) {
            (SolveStatus::Optimal, Some(t)) => {
                feasible_cases += 1;
                close(s.objective, t) && m.max_violation(&s.values, params.int_tol) <= 1e-6
            }
            (SolveStatus::Infeasible, None) => true,
            _ => false,
        };
        if ok {
            agree += 1;
        } else {
            bad.push(case);
        }
    }
    (
        agree == MILP_CASES,
        format!("{agree}/{MILP_CASES} random MILPs match enumeration ({feasible_cases} feasible, rechecked row by row); failing cases {bad:?}"),
    )
}

fn c6_c_is_zero(rows: &[BatteryRow]) -> Check {
    let mut checked = rows.len();
    let mut ok = rows.iter().all(|r| r.c_is_zero);
    for (k, s, t) in [(2, 3, 4), (3, 2, 4), (4, 2, 3), (5, 1, 3), (1, 2, 3)] {
        for seed in 0..3 {
            checked += 1;
            ok &= to_mspeu(&ftcp(k, s, t, seed)).unwrap().c_is_zero;
        }
    }
    (ok, format!("C = 0 on {checked} generated instances"))
}

fn c7_subproblem_count(rows: &[BatteryRow]) -> Check {
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.subproblems != r.expected_subproblems)
        .map(|r| format!("{}: {} vs {}", r.id, r.subproblems, r.expected_subproblems))
        .collect();
    (bad.is_empty(), format!("subproblem count equals sum of |D_n| + 1 on {} instances {:?}", rows.len() - bad.len(), bad))
}

fn c8_scaling() -> Check {
    let params = SolveParams::default();
    let seeds = 0..4u64;
    let prepare = |k: usize| -> Vec<_> {
        seeds
            .clone()
            .map(|seed| {
                let inst = ftcp(k, 2, 3, 500 + seed);
                let table = to_mspeu_bigm(&inst, &ftcp_fast_bigm(&inst));
                (to_mspeu(&inst).unwrap(), table)
            })
            .collect()
    };
    let small = prepare(2);
    let large = prepare(3);
    let time = |set: &[(MspeuProblem, mspeu::model::BigMTable)]| -> f64 {
        let mut reps: Vec<f64> = (0..REPETITIONS)
            .map(|_| {
                let t = Instant::now();
                for (p, table) in set {
                    let r = solve_backward(p, table, &params).unwrap();
                    assert_eq!(r.status, SolveStatus::Optimal);
                }
                t.elapsed().as_secs_f64()
            })
            .collect();
        reps.sort_by(f64::total_cmp);
        reps[REPETITIONS / 2]
    };
    let nodes = |set: &[(MspeuProblem, mspeu::model::BigMTable)]| set[0].0.tree.num_nodes() as f64;
    let (ts, tl) = (time(&small), time(&large));
    let node_ratio = nodes(&large) / nodes(&small);
    let time_ratio = tl / ts;
    (
        node_ratio <= 4.0 && time_ratio <= SCALING_ENVELOPE,
        format!(
            "|I| 2 -> 3 at S=2, T=3: nodes x{node_ratio:.2}, backward time x{time_ratio:.2} (median of {REPETITIONS}: {ts:.4} s -> {tl:.4} s)"
        ),
    )
}

fn cli(args: &[&str]) -> i32 {
    mspeu::cli::run(std::iter::once("mspeu").chain(args.iter().copied()))
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let d = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let inst = d("inst");
    assert_eq!(cli(&["generate", "--teams", "2", "--compositions", "2", "--samples", "2", "--stages", "3", "--seed", "11", "--out", &inst]), 0);
    let team = format!("{inst}/team01.json");
    assert_eq!(cli(&["bigm", "--method", "general", "--in", &team, "--out", &d("general.json"), "--omit-timings"]), 0);
    assert_eq!(cli(&["bigm", "--method", "ftcp-fast", "--in", &team, "--out", &d("fast.json"), "--omit-timings"]), 0);
    for method in ["backward", "monolithic"] {
        let out = d(&format!("{method}.json"));
        let sol = d(&format!("{method}.csv"));
        let args = ["solve", "--method", method, "--in", &team, "--bigm", &d("general.json"), "--out", &out, "--solution", &sol, "--omit-timings"];
        assert_eq!(cli(&args), 0);
    }
    assert_eq!(cli(&["bench", "--in", &inst, "--out", &d("bench.csv"), "--omit-timings", "--jobs", "2"]), 0);
    let mut files = Vec::new();
    for entry in walk(dir) {
        let rel = entry.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        files.push((rel, std::fs::read(&entry).unwrap()));
    }
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn c9_determinism() -> Check {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (pipeline(a.path()), pipeline(b.path()));
    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    let differing: Vec<&str> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    (
        fa.len() == fb.len() && differing.is_empty(),
        format!("{} output files of generate/bigm/solve/bench identical across runs {:?}; differing {:?}", fa.len(), names, differing),
    )
}

fn guarded(f: impl FnOnce() -> Check) -> Check {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(c) => c,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    // the harness-less target still receives the usual test-runner flags
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut results: Vec<(u8, Check)> = Vec::new();
    results.push((1, guarded(c1_model_sizes)));
    results.push((2, guarded(c2_pairwise)));
    let battery = catch_unwind(run_battery);
    match &battery {
        Ok((rows, took)) => {
            results.push((3, guarded(|| c3_equivalence(rows, *took))));
            results.push((4, guarded(|| c4_bigm_validity(rows))));
        }
        Err(_) => {
            results.push((3, (false, "battery panicked".into())));
            results.push((4, (false, "battery panicked".into())));
        }
    }
    results.push((5, guarded(c5_milp_soundness)));
    match &battery {
        Ok((rows, _)) => {
            results.push((6, guarded(|| c6_c_is_zero(rows))));
            results.push((7, guarded(|| c7_subproblem_count(rows))));
        }
        Err(_) => {
            results.push((6, (false, "battery panicked".into())));
            results.push((7, (false, "battery panicked".into())));
        }
    }
    results.push((8, guarded(c8_scaling)));
    results.push((9, guarded(c9_determinism)));

    let mut failed = 0;
    for (id, (ok, detail)) in &results {
        println!("{} criterion {id}: {detail}", if *ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
