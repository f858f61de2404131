//! Serializes a randomly weighted XNOR network to ONNX, reads it back and
//! compares predictions.

use bnnverify::bnn::build_arch_xnor;
use bnnverify::onnx::{parse_model, serialize_model};
use bnnverify::synth::{random_image, randomize, PIXEL_RMS};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = randomize(&build_arch_xnor(30, 30)?, &mut rng, PIXEL_RMS);
    let bytes = serialize_model(&net);
    let back = parse_model(&bytes)?;
    println!("{} bytes, structurally equal: {}", bytes.len(), back == net);
    for _ in 0..5 {
        let img = random_image(&mut rng, 30, 30);
        println!("prediction {} / {}", net.predict(&img)?, back.predict(&img)?);
    }
    Ok(())
}
