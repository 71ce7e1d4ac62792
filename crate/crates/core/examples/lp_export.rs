//! Writes the monolithic model in LP format, for use with an external solver.

use mspeu::bigm::ftcp_fast_bigm;
use mspeu::ftcp::{generate_instance, to_mspeu, to_mspeu_bigm, GeneratorParams};
use mspeu::milp::lp_format::write_lp;
use mspeu::model::build_node_formulation;

fn main() -> mspeu::Result<()> {
    let inst = generate_instance(&GeneratorParams { num_compositions: 2, samples: 1, stages: 2, seed: 1, ..Default::default() })?;
    let problem = to_mspeu(&inst)?;
    let bigm = to_mspeu_bigm(&inst, &ftcp_fast_bigm(&inst));
    let form = build_node_formulation(&problem, &bigm)?;
    let text = write_lp(&form.model)?;
    match std::env::args().nth(1) {
        Some(path) => {
            std::fs::write(&path, &text)?;
            println!("wrote {} lines to {path}", text.lines().count());
        }
        None => print!("{text}"),
    }
    Ok(())
}
