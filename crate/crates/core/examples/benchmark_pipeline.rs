//! Builds the 45-instance benchmark from synthetic models and images, then
//! runs the falsifier over it.
//!
//! cargo run --release --example benchmark_pipeline -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use bnnverify::bench::{
    generate_benchmark, render_results, run_instances, synthetic_images, synthetic_models, Engine,
    GenerateConfig, RunConfig,
};
use bnnverify::falsifier::AttackConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("bnnverify-benchmark"));
    let t = Instant::now();
    let models = synthetic_models(7);
    let images = synthetic_images(&models, 4, 7);
    let bench = generate_benchmark(&models, &images, &GenerateConfig::default(), &out)?;
    println!(
        "{} instances, {} s total budget, generated in {:.2?}",
        bench.instances.len(),
        bench.total_budget(),
        t.elapsed()
    );
    for (model, picked) in &bench.selections {
        println!("{model}: images {picked:?}");
    }

    let cfg = RunConfig {
        engine: Engine::Falsify,
        timeout_cap: Some(2.0),
        witness_dir: Some(out.join("witnesses")),
        attack: AttackConfig {
            max_samples: 512,
            ..AttackConfig::default()
        },
        ..RunConfig::default()
    };
    let t = Instant::now();
    let records = run_instances(&bench.csv_path, &cfg)?;
    print!("{}", render_results(&records));
    println!("falsifier finished in {:.2?}", t.elapsed());
    Ok(())
}
