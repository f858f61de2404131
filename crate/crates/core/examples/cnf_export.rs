//! Encodes a tiny robustness query as CNF and solves it with the bundled
//! DPLL solver.

use bnnverify::synth::tiny_instance;
use bnnverify::verifier::dpll::solve;
use bnnverify::verifier::{brute_force_verify, export_cnf};
use bnnverify::vnnlib::check_witness;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (net, prop) = tiny_instance(&mut rng, 1.0);
    let export = export_cnf(&net, &prop, None)?;
    let dimacs = export.formula.to_dimacs();
    println!("{}", dimacs.lines().next().unwrap_or_default());
    for line in export.render_var_map().lines().take(8) {
        println!("  {line}");
    }
    match solve(&export.formula) {
        Some(model) => {
            let w = export.decode_witness(&net, &model).ok_or("undecodable model")?;
            println!("sat, witness valid: {}", check_witness(&net, &prop, &w)?);
        }
        None => println!("unsat"),
    }
    println!("brute force: {}", brute_force_verify(&net, &prop)?.verdict.as_str());
    Ok(())
}
