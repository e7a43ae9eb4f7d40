//! Differential steady-state MSD against η for the ℓ1 and reweighted
//! coregularizers, one row per stage.

use proxdiff::experiment::{run_experiment, sweep_csv, sweep_table};
use proxdiff::scenario::{preset, EtaGrid};

fn main() -> proxdiff::Result<()> {
    let runs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(5);
    let mut scenario = preset("fig5")?;
    scenario.runs = runs;
    if let Some(sweep) = scenario.sweep.as_mut() {
        sweep.eta = EtaGrid::Linspace {
            start: 0.0,
            stop: 0.14,
            points: 8,
        };
    }
    let result = run_experiment(&scenario, 0)?;
    print!("{}", sweep_csv(&sweep_table(&result)));
    Ok(())
}
