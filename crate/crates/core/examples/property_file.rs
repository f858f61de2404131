//! Writes the robustness property for one image and parses it back.

use bnnverify::vnnlib::{parse_property, property_file_name, RobustnessProperty};
use bnnverify::Tensor;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut data = vec![100.0; 30 * 30 * 3];
    data[2699] = 24.0;
    let image = Tensor::new(vec![30, 30, 3], data)?;
    let prop = RobustnessProperty::around(&image, 10.0, 38, 43, false)?.with_source(1678, 10.0);
    let text = prop.render();
    println!("{}", property_file_name(30, 1678, 10.0));
    for line in text.lines().filter(|l| l.contains("X_2699 ") || l.contains("(assert (or")) {
        println!("{line}");
    }
    let back = parse_property(&text)?;
    println!("parsed {} inputs, target {}", back.num_inputs, back.target_label);
    Ok(())
}
