//! Builds a small multi-distribution tree and prints its shape.

use mspeu::tree::{build_uniform_tree, DistId, ProbRule};

fn main() -> mspeu::Result<()> {
    // two distributions per node, realizations weighted 0.7 / 0.3
    let tree = build_uniform_tree(3, 2, 2, &ProbRule::Given(vec![0.7, 0.3]))?;
    let report = tree.validate();
    println!("{} nodes over {} stages, valid: {}", tree.num_nodes(), tree.num_stages(), report.is_valid());

    for n in tree.nodes() {
        let indent = "  ".repeat(tree.stage(n) - 1);
        let origin = tree.origin_distribution(n).map(|d| format!(" via d{}", d.idx())).unwrap_or_default();
        println!("{indent}node {}{origin}  pi = {:.3}", n.idx(), tree.probability(n));
    }

    // every distribution's children carry the parent's probability mass
    let root = tree.nodes().next().unwrap();
    for d in 0..tree.num_distributions(root) {
        let mass: f64 = tree.children(root, DistId(d)).iter().map(|&c| tree.probability(c)).sum();
        println!("root, d{d}: child mass {mass:.3}");
    }

    let size = tree.size_report(5, 3);
    println!(
        "node form: {} vars / {} cons; scenario form: {} scenarios, {} vars, ~{} non-anticipativity rows",
        size.node_form_vars, size.node_form_cons, size.scenario_count, size.scenario_form_vars, size.nac_count_estimate
    );
    Ok(())
}
