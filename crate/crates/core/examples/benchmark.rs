//! Monolithic against backward on a handful of generated teams, printed as
//! a markdown table.

use mspeu::bench::{bench_input, emit_table, BenchOptions, Input, TableFormat};
use mspeu::ftcp::{generate_instance, GeneratorParams};

fn main() -> mspeu::Result<()> {
    let opts = BenchOptions::default();
    let mut records = Vec::new();
    for team in 1..=4u64 {
        let inst = generate_instance(&GeneratorParams { num_compositions: 2, samples: 2, stages: 3, seed: 100 + team, ..Default::default() })?;
        records.extend(bench_input(&format!("team{team:02}"), &Input::Ftcp(inst), &opts)?);
    }
    print!("{}", emit_table(&records, TableFormat::Markdown));
    Ok(())
}
