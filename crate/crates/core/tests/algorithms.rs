mod common;

use std::fs;

use common::{close, ftcp, random_problem};
use mspeu::backward::{extract_policy, solve_backward};
use mspeu::bigm::{compute_bigm_general, ftcp_fast_bigm, validate_bigm, Relaxation};
use mspeu::ftcp::{direct_objective, to_mspeu, to_mspeu_bigm};
use mspeu::milp::{self, SolveParams, SolveStatus};
use mspeu::model::{build_node_formulation, enumerate_oracle, evaluate_solution};
use proptest::prelude::*;

fn cli(args: &[&str]) -> i32 {
    mspeu::cli::run(std::iter::once("mspeu").chain(args.iter().copied()))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn backward_monolithic_and_oracle_agree(seed in 0u64..10_000, samples in 1usize..=2) {
        let p = random_problem(seed, 3, 2, samples);
        let params = SolveParams::default();
        let oracle = enumerate_oracle(&p, &params).unwrap();
        let bigm = compute_bigm_general(&p, Relaxation::Lp, &params).unwrap();

        let back = solve_backward(&p, &bigm, &params).unwrap();
        let expected: usize = p.tree.non_leaves().map(|n| p.tree.num_distributions(n)).sum::<usize>() + 1;
        prop_assert_eq!(back.subproblems, expected);

        let form = build_node_formulation(&p, &bigm).unwrap();
        let mono = milp::solve(&form.model, &params).unwrap();
        prop_assert_eq!(oracle.status, SolveStatus::Optimal);
        prop_assert_eq!(mono.status, SolveStatus::Optimal);
        prop_assert_eq!(back.status, SolveStatus::Optimal);
        prop_assert!(close(oracle.objective, mono.objective), "oracle {} monolithic {}", oracle.objective, mono.objective);
        prop_assert!(close(oracle.objective, back.z), "oracle {} backward {}", oracle.objective, back.z);
        prop_assert!(validate_bigm(&p, &bigm, 1, &params).unwrap().is_ok());
    }
}

#[test]
fn extracted_policy_is_feasible_and_scores_z() {
    let params = SolveParams::default();
    for seed in 0..6 {
        let inst = ftcp(3, 2, 3, 500 + seed);
        let p = to_mspeu(&inst).unwrap();
        let bigm = to_mspeu_bigm(&inst, &ftcp_fast_bigm(&inst));
        let res = solve_backward(&p, &bigm, &params).unwrap();
        let sol = extract_policy(&p, &bigm, &res, &params).unwrap();
        let eval = evaluate_solution(&p, &sol).unwrap();
        assert!(eval.feasible, "seed {seed}: {:?}", eval.violations);
        assert!(close(eval.objective, res.z), "seed {seed}: {} vs {}", eval.objective, res.z);
        assert!(close(direct_objective(&inst, &sol).unwrap(), res.z));
    }
}

#[test]
fn counts_only_bench_reports_table_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    let out = dir.path().join("sizes.csv");
    let inst_s = inst.to_str().unwrap();
    assert_eq!(cli(&["generate", "--compositions", "3", "--samples", "4", "--stages", "4", "--seed", "2", "--out", inst_s]), 0);
    assert_eq!(cli(&["bench", "--in", inst_s, "--out", out.to_str().unwrap(), "--counts-only"]), 0);
    let text = fs::read_to_string(&out).unwrap();
    let row = text.lines().nth(1).expect("one data row");
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(&cells[2..5], &["24505", "16965", "22620"], "{row}");
}

#[test]
fn cli_solvers_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    assert_eq!(cli(&["generate", "--compositions", "2", "--samples", "2", "--stages", "3", "--seed", "9", "--out", &p("inst")]), 0);
    let team = format!("{}/team01.json", p("inst"));
    assert_eq!(cli(&["bigm", "--method", "ftcp-fast", "--in", &team, "--out", &p("m.json")]), 0);
    let mut z = Vec::new();
    for method in ["monolithic", "backward"] {
        let out = p(&format!("{method}.json"));
        assert_eq!(cli(&["solve", "--method", method, "--in", &team, "--bigm", &p("m.json"), "--out", &out]), 0);
        let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(report["status"], "optimal");
        z.push(report["objective"].as_f64().unwrap());
    }
    assert!(close(z[0], z[1]), "{z:?}");
}

#[test]
fn empty_directory_gives_header_only_table() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty");
    fs::create_dir(&input).unwrap();
    let out = dir.path().join("t.csv");
    assert_eq!(cli(&["bench", "--in", input.to_str().unwrap(), "--out", out.to_str().unwrap()]), 0);
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("Team,S,#Var"));
}

#[test]
fn missing_bigm_file_is_a_run_failure() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    assert_eq!(cli(&["generate", "--compositions", "2", "--samples", "1", "--stages", "2", "--out", &p("inst")]), 0);
    let team = format!("{}/team01.json", p("inst"));
    assert_eq!(cli(&["solve", "--method", "backward", "--in", &team, "--bigm", &p("nope.json")]), 2);
    assert_eq!(cli(&["solve", "--method", "sideways", "--in", &team]), 1);
}
