use std::path::Path;

use proxdiff::experiment::{results_csv, run_experiment, summary, write_outputs};
use proxdiff::scenario::{preset, Scenario};

fn tiny() -> Scenario {
    Scenario::load(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/common_tiny.json")
            .to_str()
            .unwrap(),
    )
    .unwrap()
}

#[test]
fn manifest_replays_byte_identical_results() {
    let first = run_experiment(&tiny(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&first, dir.path()).unwrap();
    let replay = Scenario::load(dir.path().join("manifest.json").to_str().unwrap()).unwrap();
    let second = run_experiment(&replay, 2).unwrap();
    assert_eq!(results_csv(&first), results_csv(&second));
}

#[test]
fn variant_order_does_not_change_its_curves() {
    let s = tiny();
    let mut reversed = s.clone();
    reversed.variants.reverse();
    let a = run_experiment(&s, 1).unwrap();
    let b = run_experiment(&reversed, 1).unwrap();
    for v in &a.variants {
        assert_eq!(
            a.curves(&v.name).unwrap(),
            b.curves(&v.name).unwrap(),
            "{}",
            v.name
        );
    }
}

#[test]
fn single_variant_sees_same_data_as_in_a_group() {
    let s = tiny();
    let mut alone = s.clone();
    alone.variants.retain(|v| v.name == "prox_rw");
    let a = run_experiment(&s, 1).unwrap();
    let b = run_experiment(&alone, 1).unwrap();
    assert_eq!(a.curves("prox_rw").unwrap(), b.curves("prox_rw").unwrap());
}

#[test]
fn csv_lists_cluster_metrics_for_multi_cluster_networks() {
    let csv = results_csv(&run_experiment(&tiny(), 1).unwrap());
    let metrics: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    let expected: std::collections::BTreeSet<&str> =
        ["network_msd", "cluster_msd", "common_msd", "distinct_msd"].into();
    assert_eq!(metrics, expected);
    // One network row per variant and iteration.
    let network_rows = csv
        .lines()
        .filter(|l| l.contains(",network_msd,all,"))
        .count();
    assert_eq!(network_rows, 3 * 80);
}

#[test]
fn csv_omits_cluster_metrics_for_one_cluster() {
    let mut s = tiny();
    s.topology.cluster_of = vec![0.into(); 4];
    s.topology.edges = vec![[0, 1], [1, 2], [2, 3]];
    if let proxdiff::scenario::SignalConfig::Lms { stages, .. } = &mut s.signal {
        for st in stages {
            st.deltas.truncate(1);
        }
    }
    s.variants.retain(|v| v.name == "diffusion");
    let csv = results_csv(&run_experiment(&s, 1).unwrap());
    assert!(csv.lines().skip(1).all(|l| l.contains(",network_msd,all,")));
}

#[test]
fn summary_stages_follow_schedule() {
    let r = run_experiment(&tiny(), 1).unwrap();
    let s = summary(&r);
    let v = &s.variants[0];
    assert_eq!(v.stages.len(), 2);
    assert_eq!((v.stages[0].start, v.stages[0].end), (0, 40));
    assert_eq!((v.stages[1].start, v.stages[1].end), (40, 80));
    assert_eq!(v.n_runs_effective, 5);
}

#[test]
fn sweep_table_starts_at_zero_gain() {
    let mut s = preset("fig5").unwrap();
    s.runs = 2;
    s.iterations = 120;
    if let proxdiff::scenario::SignalConfig::Lms { stages, .. } = &mut s.signal {
        stages[1].start = 40;
        stages[2].start = 80;
    }
    let r = run_experiment(&s, 0).unwrap();
    let rows = proxdiff::experiment::sweep_table(&r);
    assert_eq!(rows.len(), 2 * 15 * 3);
    for row in rows.iter().filter(|r| r.eta == 0.0) {
        assert_eq!(row.diff_db, 0.0);
    }
}
