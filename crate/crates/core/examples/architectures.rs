//! Builds the three benchmark architectures and prints their layer chains
//! and parameter counts.

use bnnverify::bnn::{build_arch_a, build_arch_b, build_arch_xnor, count_params};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, net) in [
        ("arch A, 64x64", build_arch_a(64, 64)?),
        ("arch B, 48x48", build_arch_b(48, 48)?),
        ("XNOR, 30x30", build_arch_xnor(30, 30)?),
    ] {
        println!("{name}");
        for (layer, shape) in net.layers().iter().zip(&net.shape_chain()[1..]) {
            println!("  {:<10} {shape:?}", layer.name());
        }
        let p = count_params(&net);
        println!("  binary={} real={} total={}\n", p.binary, p.real, p.total);
    }
    Ok(())
}
