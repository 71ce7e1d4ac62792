//! Generates a team composition instance and prints what it contains.

use mspeu::ftcp::{generate_instance, GeneratorParams};

fn main() -> mspeu::Result<()> {
    let params = GeneratorParams { num_compositions: 3, samples: 2, stages: 3, seed: 7, ..Default::default() };
    let inst = generate_instance(&params)?;
    let tree = &inst.tree;
    println!("compositions: {:?}", inst.compositions);
    println!("{} nodes, budget {:.2}, rho {}", tree.num_nodes(), inst.budget, inst.rho);

    for t in 1..=tree.num_stages() {
        let nodes = tree.stage_nodes(t);
        let (lo, hi) = nodes
            .iter()
            .flat_map(|&n| inst.value[n.idx()].iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        println!("stage {t}: {} nodes, composition values in [{lo:.1}, {hi:.1}]", nodes.len());
    }

    let root = tree.nodes().next().unwrap().idx();
    println!("root transfer costs:");
    for (i, row) in inst.transition[root].iter().enumerate() {
        println!("  from {}: {:.2?}", inst.compositions[i], row);
    }

    // the JSON form is what the command-line tool reads
    let json = inst.to_json()?;
    println!("serialized to {} bytes", json.len());
    Ok(())
}
