//! The six-algorithm comparison on the 20-node, three-cluster network at
//! reduced Monte-Carlo scale. Pass a run count as the first argument.

use proxdiff::analysis::to_db;
use proxdiff::experiment::{run_experiment, summary};
use proxdiff::scenario::preset;

fn main() -> proxdiff::Result<()> {
    let runs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(10);
    let mut scenario = preset("fig3")?;
    scenario.runs = runs;
    let result = run_experiment(&scenario, 0)?;

    let s = summary(&result);
    println!(
        "network MSD (dB), trailing {} iterations of each stage, {runs} runs",
        s.steady_window
    );
    println!(
        "{:<14} {:>9} {:>9} {:>9}",
        "variant", "stage 1", "stage 2", "stage 3"
    );
    for v in &s.variants {
        let cols: Vec<String> = v
            .stages
            .iter()
            .map(|st| format!("{:>9.2}", st.network_db))
            .collect();
        println!("{:<14} {}", v.name, cols.join(" "));
    }

    // Common and distinct entries for the smallest cluster over the first stage.
    let curves = result.curves("prox_rw")?;
    let (_, end) = result.stage_ranges()[0];
    if let (Some(common), Some(distinct)) = (curves.common[2][end - 1], curves.distinct[2][end - 1])
    {
        println!(
            "\nprox_rw cluster 3, end of stage 1: common {:.2} dB, distinct {:.2} dB",
            to_db(common),
            to_db(distinct)
        );
    }
    Ok(())
}
