//! Solves a team composition instance as one big-M MILP and checks the
//! answer against the exact oracle.

use mspeu::bigm::{compute_bigm_general, Relaxation};
use mspeu::ftcp::{generate_instance, to_mspeu, GeneratorParams};
use mspeu::milp::{self, SolveParams};
use mspeu::model::{build_node_formulation, enumerate_oracle, evaluate_solution};

fn main() -> mspeu::Result<()> {
    let inst = generate_instance(&GeneratorParams { num_compositions: 2, samples: 2, stages: 3, seed: 11, ..Default::default() })?;
    let problem = to_mspeu(&inst)?;
    let params = SolveParams::default();

    let bigm = compute_bigm_general(&problem, Relaxation::Lp, &params)?;
    let form = build_node_formulation(&problem, &bigm)?;
    let counts = form.model.counts();
    println!("model: {} vars ({} binary), {} rows", counts.vars, counts.bins, counts.cons);

    let s = milp::solve(&form.model, &params)?;
    println!("status {}, z = {:.6}, {} nodes, {} LP iterations", s.status, s.objective, s.nodes, s.lp_iterations);

    let sol = form.extract(&problem, &s);
    let eval = evaluate_solution(&problem, &sol)?;
    println!("recursion value {:.6}, feasible {}", eval.objective, eval.feasible);

    let oracle = enumerate_oracle(&problem, &params)?;
    println!("oracle {:.6}", oracle.objective);
    for n in problem.tree.non_leaves() {
        if let Some(d) = sol.chosen(n) {
            println!("  node {} keeps composition {}", n.idx(), inst.compositions[d.idx()]);
        }
    }
    Ok(())
}
