//! Cooperative spectrum sensing with censored path losses. Clusters that
//! never observe the second primary user recover its PSD only through the
//! coregularizer.

use proxdiff::experiment::{run_experiment, summary};
use proxdiff::scenario::preset;

fn main() -> proxdiff::Result<()> {
    let runs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(4);
    let mut scenario = preset("spectrum")?;
    scenario.runs = runs;
    let result = run_experiment(&scenario, 0)?;

    for v in summary(&result).variants {
        println!(
            "{:<10} steady-state network MSD {:.2} dB",
            v.name,
            v.steady_state_db.unwrap_or(f64::NAN)
        );
    }
    println!("\nPSD reconstruction error on the PU support, [cluster][PU]");
    for name in ["diffusion", "prox_l1"] {
        println!("{name}");
        for (q, row) in result.psd_miss(name, 0.1)?.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|e| format!("{e:.3e}")).collect();
            println!("  cluster {q}: {}", cells.join("  "));
        }
    }
    Ok(())
}
