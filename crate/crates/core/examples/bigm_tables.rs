//! Big-M constants: the pairwise rule, the general relaxation procedure
//! and the fast team composition recursion.

use std::collections::BTreeMap;

use mspeu::bigm::{compute_bigm_general, ftcp_fast_bigm, pairwise_bigm, validate_bigm, BoundPair, Relaxation};
use mspeu::ftcp::{generate_instance, to_mspeu, to_mspeu_bigm, GeneratorParams};
use mspeu::milp::SolveParams;
use mspeu::tree::DistId;

fn main() -> mspeu::Result<()> {
    let bounds: BTreeMap<DistId, BoundPair> = [(10.0, 5.0), (9.0, 4.0), (8.0, 3.0)]
        .into_iter()
        .enumerate()
        .map(|(d, (max, min))| (DistId(d), BoundPair { max, min }))
        .collect();
    println!("pairwise: {:?}", pairwise_bigm(&bounds).values().collect::<Vec<_>>());

    let inst = generate_instance(&GeneratorParams { num_compositions: 2, samples: 2, stages: 3, seed: 5, ..Default::default() })?;
    let problem = to_mspeu(&inst)?;
    let params = SolveParams::default();

    let general = compute_bigm_general(&problem, Relaxation::Lp, &params)?;
    let stagewise = compute_bigm_general(&problem, Relaxation::StagewiseDrop, &params)?;
    let fast = to_mspeu_bigm(&inst, &ftcp_fast_bigm(&inst));
    println!("{:>6} {:>12} {:>12} {:>12}", "n:d", "general", "stagewise", "fast");
    for (n, d, m) in general.iter() {
        println!(
            "{:>6} {m:>12.3} {:>12.3} {:>12.3}",
            format!("{}:{}", n.idx(), d.idx()),
            stagewise.get(n, d).unwrap_or(f64::NAN),
            fast.get(n, d).unwrap_or(f64::NAN)
        );
    }

    for (name, table) in [("general", &general), ("fast", &fast)] {
        let report = validate_bigm(&problem, table, 1, &params)?;
        println!("{name}: valid {}", report.is_ok());
    }
    Ok(())
}
