//! Backward decomposition: one small MILP per (node, distribution),
//! solved stage by stage from the leaves up.

use mspeu::backward::{extract_policy, solve_backward};
use mspeu::bigm::ftcp_fast_bigm;
use mspeu::ftcp::{generate_instance, to_mspeu, to_mspeu_bigm, GeneratorParams};
use mspeu::milp::SolveParams;
use mspeu::model::evaluate_solution;

fn main() -> mspeu::Result<()> {
    let inst = generate_instance(&GeneratorParams { num_compositions: 3, samples: 2, stages: 4, seed: 3, ..Default::default() })?;
    let problem = to_mspeu(&inst)?;
    let params = SolveParams::default();

    // the fast recursion works on team instances and needs no LP solves
    let bigm = to_mspeu_bigm(&inst, &ftcp_fast_bigm(&inst));
    let res = solve_backward(&problem, &bigm, &params)?;
    for st in &res.stages {
        println!("stage {}: {} subproblems in {:.4} s", st.stage, st.subproblems, st.elapsed.as_secs_f64());
    }
    println!("status {}, z = {:.6}, {} subproblems total", res.status, res.z, res.subproblems);

    let root = res.root.as_ref().expect("optimal run has a root decision");
    if let Some(d) = root.chosen {
        println!("root keeps {}", inst.compositions[d.idx()]);
    }

    let sol = extract_policy(&problem, &bigm, &res, &params)?;
    let eval = evaluate_solution(&problem, &sol)?;
    println!("policy value {:.6}, feasible {}", eval.objective, eval.feasible);
    Ok(())
}
