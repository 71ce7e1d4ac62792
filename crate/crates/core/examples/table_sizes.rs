//! Model sizes of the team composition formulation, counted without
//! building anything.

use mspeu::ftcp::{generate_instance, to_mspeu, GeneratorParams};
use mspeu::model::{count_model, Convention};

fn main() -> mspeu::Result<()> {
    println!("{:>3} {:>3} {:>3} {:>8} {:>8} {:>8}", "I", "S", "T", "#Var", "#Bin", "#Con");
    for (k, s, t) in [(2, 2, 3), (3, 2, 3), (3, 3, 4), (3, 4, 4), (4, 3, 4)] {
        let inst = generate_instance(&GeneratorParams { num_compositions: k, samples: s, stages: t, ..Default::default() })?;
        let c = count_model(&to_mspeu(&inst)?, Convention::TableConvention)?;
        println!("{k:>3} {s:>3} {t:>3} {:>8} {:>8} {:>8}", c.vars, c.bins, c.cons);
    }
    Ok(())
}
