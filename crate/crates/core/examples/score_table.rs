//! Scores the published competition counts for the traffic-sign benchmark.

use bnnverify::bench::{render_table, score_results, ToolCounts};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = score_results(&[
        ToolCounts::new("Marabou", 0, 18, 0, 1),
        ToolCounts::new("PyRAT", 0, 7, 0, 1),
        ToolCounts::new("NeuralSAT", 0, 31, 0, 4),
        ToolCounts::new("alpha-beta-CROWN", 0, 39, 0, 3),
    ])?;
    print!("{}", render_table(&rows));
    Ok(())
}
