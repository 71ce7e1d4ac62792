#![allow(dead_code)]

use mspeu::ftcp::{generate_instance, FtcpInstance, GeneratorParams};
use mspeu::model::{MspeuProblem, NodeBlock, VarDomain};
use mspeu::tree::{build_uniform_tree, ProbRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative agreement used across the equivalence checks.
pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

/// A random C = 0 problem on a uniform tree. Every node has one integer
/// and one continuous decision plus a slack, so each row is feasible for
/// any parent choice; the parent's distribution moves the right-hand side.
pub fn random_problem(seed: u64, stages: usize, dists: usize, samples: usize) -> MspeuProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tree = build_uniform_tree(stages, dists, samples, &ProbRule::Uniform).unwrap();
    let mut blocks = Vec::with_capacity(tree.num_nodes());
    for n in tree.nodes() {
        let nd = tree.num_distributions(n);
        let leaf = tree.is_leaf(n);
        let child_rows = if leaf { 0 } else { 1 };
        let q = (0..nd).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b = vec![(0..nd).map(|_| if rng.random_bool(0.3) { rng.random_range(-1.0..0.0) } else { 0.0 }).collect()];
        let d = (0..child_rows).map(|_| (0..nd).map(|_| rng.random_range(-2.0..0.0)).collect()).collect();
        blocks.push(NodeBlock {
            r: vec![rng.random_range(-1.0..3.0), rng.random_range(-1.0..3.0), rng.random_range(-0.5..0.0)],
            q,
            a: vec![vec![1.0, 2.0, 1.0]],
            b,
            c_to_children: vec![vec![0.0; 3]; child_rows],
            d_to_children: d,
            h: vec![rng.random_range(1.0..4.0)],
            theta_terminal: leaf.then(|| rng.random_range(0.0..5.0)),
            domains: vec![
                VarDomain { lower: 0.0, upper: 3.0, integer: true },
                VarDomain::continuous(0.0, 3.0),
                VarDomain::continuous(0.0, 10.0),
            ],
        });
    }
    MspeuProblem::new(tree, blocks).unwrap()
}

pub fn ftcp(compositions: usize, samples: usize, stages: usize, seed: u64) -> FtcpInstance {
    generate_instance(&GeneratorParams { num_compositions: compositions, samples, stages, seed, ..Default::default() }).unwrap()
}

/// The equivalence battery: T = 3 team instances with |I| <= 3 and S <= 2.
pub fn battery() -> Vec<(String, FtcpInstance)> {
    let mut out = Vec::new();
    for (k, s, count) in [(2, 1, 20), (2, 2, 20), (3, 1, 12)] {
        for seed in 0..count {
            out.push((format!("I{k}-S{s}-seed{seed}"), ftcp(k, s, 3, 1000 + seed)));
        }
    }
    out
}
