//! Greedy and random counterexample search on a four-pixel toy network.

use bnnverify::bnn::{Layer, QDense};
use bnnverify::falsifier::{greedy_trace, random_attack, AttackConfig};
use bnnverify::vnnlib::{check_witness, RobustnessProperty};
use bnnverify::{Network, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Y_0 - Y_1 = 2 * x3, so class 0 holds only while x3 > 0.
    let dense = QDense::new(4, 2, vec![1, 1, 1, 1, 1, 1, 1, -1], false)?;
    let net = Network::new(vec![4], vec![Layer::QDense(dense)], 2)?;
    let prop = RobustnessProperty::around(&Tensor::vector(vec![3.0, 0.0, 0.0, 1.0]), 1.0, 0, 2, false)?;

    let cfg = AttackConfig::default();
    let trace = greedy_trace(&net, &prop, &cfg)?;
    println!("greedy: {} moves, objective {:?}", trace.moves, trace.objective);
    if let Some(w) = &trace.witness {
        print!("sat\n{}", w.render());
        println!("check: {}", check_witness(&net, &prop, w)?);
    }
    let random = random_attack(&net, &prop, &AttackConfig { seed: 9, ..cfg })?;
    println!("random attack found a witness: {}", random.is_some());
    Ok(())
}
