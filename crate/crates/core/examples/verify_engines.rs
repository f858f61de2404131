//! Runs the four engines on a batch of tiny random instances.

use bnnverify::bench::run::run_engine;
use bnnverify::bench::{Engine, RunConfig};
use bnnverify::synth::tiny_instance;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = RunConfig::default();
    println!("{:>3} {:>4} {:>8} {:>8} {:>8} {:>8}", "#", "eps", "ibp", "bab", "falsify", "brute");
    for i in 0..12 {
        let eps = (i % 3) as f64;
        let (net, prop) = tiny_instance(&mut rng, eps);
        let verdicts = Engine::ALL
            .iter()
            .map(|&e| run_engine(&net, &prop, e, None, &cfg).map(|r| r.verdict.as_str()))
            .collect::<Result<Vec<_>, _>>()?;
        println!(
            "{i:>3} {eps:>4} {:>8} {:>8} {:>8} {:>8}",
            verdicts[0], verdicts[1], verdicts[2], verdicts[3]
        );
    }
    Ok(())
}
