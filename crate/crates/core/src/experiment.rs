//! Monte-Carlo orchestration and result files.
//!
//! Every variant of a run consumes the same data batch at each iteration.
//! Runs execute on a rayon pool and are reduced in run order, so the output
//! does not depend on the number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    to_db, MsdAccumulator, MsdCurves, RunCurves, StabilityReport, STEADY_WINDOW,
};
use crate::data::{node_rng, SignalModel};
use crate::engine::{AlgorithmVariant, Network};
use crate::error::{Error, Result};
use crate::scenario::{sweep_name, Resolved, Scenario};

/// Runs reduced together; fixed so batching never depends on the pool size.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Diverged { iteration: usize, node: usize },
}

#[derive(Debug, Clone)]
pub struct VariantResult {
    pub name: String,
    /// `None` when every run diverged.
    pub curves: Option<MsdCurves>,
    pub status: Vec<RunStatus>,
    pub stability: StabilityReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub resolved: Resolved,
    pub variants: Vec<VariantResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub software: String,
    pub seed: u64,
    pub runs: usize,
    pub iterations: usize,
    /// Fully resolved scenario; loading this file replays the experiment.
    pub scenario: Scenario,
    pub run_status: Vec<VariantStatus>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantStatus {
    pub variant: String,
    pub runs: Vec<RunStatus>,
}

impl ExperimentResult {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn curves(&self, name: &str) -> Result<&MsdCurves> {
        let v = self
            .variant(name)
            .ok_or_else(|| Error::Config(format!("no variant named '{name}'")))?;
        v.curves.as_ref().ok_or(Error::NoData)
    }

    pub fn any_fully_diverged(&self) -> bool {
        self.variants.iter().any(|v| v.curves.is_none())
    }

    /// `[start, end)` of each stage of the optimum schedule.
    pub fn stage_ranges(&self) -> Vec<(usize, usize)> {
        let schedule = self.resolved.signal.schedule();
        let iterations = self.resolved.scenario.iterations;
        (0..schedule.stages().len())
            .map(|s| schedule.stage_range(s, iterations))
            .collect()
    }

    /// Mean squared PSD reconstruction error of the trailing-window mean
    /// estimate, indexed `[cluster][primary user]`, restricted to the
    /// frequencies where the true PSD exceeds `support_frac` of its peak.
    pub fn psd_miss(&self, name: &str, support_frac: f64) -> Result<Vec<Vec<f64>>> {
        let SignalModel::Spectrum(model) = &self.resolved.signal else {
            return Err(Error::Config("not a spectrum scenario".into()));
        };
        let curves = self.curves(name)?;
        let cluster_of = self.resolved.topology.clusters();
        let n_clusters = model.schedule.n_clusters();
        let last = self.resolved.scenario.iterations.saturating_sub(1);
        let mut out = vec![vec![0.0; model.n_pu()]; n_clusters];
        let mut count = vec![0usize; n_clusters];
        for (k, err) in curves.mean_window_error.iter().enumerate() {
            let q = cluster_of[k];
            count[q] += 1;
            let truth = model.schedule.optimum(q, last);
            for (p, slot) in out[q].iter_mut().enumerate() {
                let psd = model.block_psd(truth, p);
                let cut = support_frac * psd.max();
                let miss = model.block_psd(err, p);
                let support: Vec<usize> = (0..psd.len()).filter(|&j| psd[j] > cut).collect();
                if !support.is_empty() {
                    *slot += support.iter().map(|&j| miss[j] * miss[j]).sum::<f64>()
                        / support.len() as f64;
                }
            }
        }
        for (row, &n) in out.iter_mut().zip(&count) {
            row.iter_mut().for_each(|v| *v /= n.max(1) as f64);
        }
        Ok(out)
    }

    pub fn manifest(&self) -> Manifest {
        let s = &self.resolved.scenario;
        Manifest {
            software: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            seed: s.seed,
            runs: s.runs,
            iterations: s.iterations,
            scenario: s.clone(),
            run_status: self
                .variants
                .iter()
                .map(|v| VariantStatus {
                    variant: v.name.clone(),
                    runs: v.status.clone(),
                })
                .collect(),
        }
    }
}

/// Runs one Monte-Carlo realization of every variant in lockstep.
fn run_once(resolved: &Resolved, run: usize) -> Result<Vec<(Option<RunCurves>, RunStatus)>> {
    let s = &resolved.scenario;
    let topo = &resolved.topology;
    let schedule = resolved.signal.schedule();
    let dim = resolved.signal.dim();
    let n = topo.n_nodes();
    let cluster_of = topo.clusters();

    let mut nets = Vec::with_capacity(resolved.variants.len());
    for v in &resolved.variants {
        let net = Network::new(topo, &resolved.weights, v.mu.clone(), v.variant.clone())?;
        let state = net.zero_state(dim)?;
        let curves = RunCurves::new(n, topo.n_clusters(), dim, s.iterations, STEADY_WINDOW);
        nets.push((net, Some((state, curves)), RunStatus::Ok));
    }
    let mut rngs: Vec<_> = (0..n)
        .map(|k| node_rng(s.seed, run as u64, k as u64))
        .collect();
    for i in 0..s.iterations {
        let batch = resolved.signal.sample_batch(cluster_of, i, &mut rngs);
        for (net, live, status) in nets.iter_mut() {
            let Some((state, curves)) = live.as_mut() else {
                continue;
            };
            match net.run_iteration(state, &batch) {
                Ok(report) => {
                    curves.max_shift_ratio = curves.max_shift_ratio.max(report.max_shift_ratio);
                    let est: Vec<_> = state.agents.iter().map(|a| a.w.clone()).collect();
                    curves.record(i, &est, cluster_of, schedule, s.iterations);
                }
                Err(Error::DivergenceDetected { iteration, node }) => {
                    *status = RunStatus::Diverged { iteration, node };
                    *live = None;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(nets
        .into_iter()
        .map(|(_, live, status)| (live.map(|(_, c)| c), status))
        .collect())
}

fn stability_for(resolved: &Resolved, idx: usize) -> Result<StabilityReport> {
    let v = &resolved.variants[idx];
    let net = Network::new(
        &resolved.topology,
        &resolved.weights,
        v.mu.clone(),
        v.variant.clone(),
    )?;
    let (eta, eps) = v
        .variant
        .regularizer()
        .map_or((0.0, 1.0), |r| (r.eta, r.epsilon));
    StabilityReport::new(
        net.weights(),
        &v.mu,
        &resolved.covariances(),
        eta,
        eps,
        resolved.signal.dim(),
    )
}

/// One stability report per variant, keyed by variant name.
pub fn stability_reports(resolved: &Resolved) -> Result<Vec<(String, StabilityReport)>> {
    (0..resolved.variants.len())
        .map(|i| {
            Ok((
                resolved.variants[i].name.clone(),
                stability_for(resolved, i)?,
            ))
        })
        .collect()
}

/// Runs every variant of `scenario` with `jobs` worker threads (0 = all cores).
pub fn run_experiment(scenario: &Scenario, jobs: usize) -> Result<ExperimentResult> {
    let resolved = scenario.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let schedule = resolved.signal.schedule();
    let n_var = resolved.variants.len();
    let mut accs: Vec<MsdAccumulator> = (0..n_var)
        .map(|_| MsdAccumulator::new(schedule, scenario.iterations))
        .collect();
    let mut status: Vec<Vec<RunStatus>> = vec![Vec::with_capacity(scenario.runs); n_var];
    let runs: Vec<usize> = (0..scenario.runs).collect();
    for chunk in runs.chunks(CHUNK) {
        let done: Vec<_> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&r| run_once(&resolved, r))
                .collect::<Result<Vec<_>>>()
        })?;
        for run in done {
            for (v, (curves, st)) in run.into_iter().enumerate() {
                accs[v].add(curves);
                status[v].push(st);
            }
        }
    }
    let variants = accs
        .into_iter()
        .zip(status)
        .enumerate()
        .map(|(idx, (acc, status))| {
            Ok(VariantResult {
                name: resolved.variants[idx].name.clone(),
                curves: acc.finish().ok(),
                status,
                stability: stability_for(&resolved, idx)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { resolved, variants })
}

fn push_row(
    out: &mut String,
    variant: &str,
    metric: &str,
    cluster: &str,
    i: usize,
    v: f64,
    n: usize,
) {
    let _ = writeln!(out, "{variant},{metric},{cluster},{i},{},{v},{n}", to_db(v));
}

/// The long-format CSV; cluster curves only appear for multi-cluster networks.
pub fn results_csv(result: &ExperimentResult) -> String {
    let mut out =
        String::from("variant,metric,cluster,iteration,value_db,value_linear,n_runs_effective\n");
    let multi = result.resolved.topology.n_clusters() > 1;
    for v in &result.variants {
        let Some(c) = &v.curves else { continue };
        let n = c.n_runs;
        for (i, &x) in c.network.iter().enumerate() {
            push_row(&mut out, &v.name, "network_msd", "all", i, x, n);
        }
        if !multi {
            continue;
        }
        for q in 0..c.cluster.len() {
            let id = q.to_string();
            for (i, &x) in c.cluster[q].iter().enumerate() {
                push_row(&mut out, &v.name, "cluster_msd", &id, i, x, n);
            }
            for (metric, curve) in [
                ("common_msd", &c.common[q]),
                ("distinct_msd", &c.distinct[q]),
            ] {
                for (i, x) in curve.iter().enumerate() {
                    if let Some(x) = x {
                        push_row(&mut out, &v.name, metric, &id, i, *x, n);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub stage: usize,
    pub start: usize,
    pub end: usize,
    pub network_db: f64,
    pub cluster_db: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariantSummary {
    pub name: String,
    pub variant: AlgorithmVariant,
    pub n_runs_effective: usize,
    pub diverged_runs: usize,
    pub steady_state_db: Option<f64>,
    pub stages: Vec<StageSummary>,
    pub max_shift_ratio: Option<f64>,
    pub stability: StabilityReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub variant: String,
    pub eta: f64,
    pub stage: usize,
    pub msd_db: f64,
    pub diff_db: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub iterations: usize,
    pub runs: usize,
    pub seed: u64,
    pub steady_window: usize,
    pub variants: Vec<VariantSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
}

/// Steady-state network MSD (dB) over the trailing window of every stage.
pub fn stage_steady_state(result: &ExperimentResult, curves: &MsdCurves) -> Vec<StageSummary> {
    result
        .stage_ranges()
        .into_iter()
        .enumerate()
        .map(|(stage, (start, end))| {
            let window = STEADY_WINDOW.min(end - start);
            StageSummary {
                stage,
                start,
                end,
                network_db: to_db(MsdCurves::window_mean(&curves.network, end, window)),
                cluster_db: curves
                    .cluster
                    .iter()
                    .map(|c| to_db(MsdCurves::window_mean(c, end, window)))
                    .collect(),
            }
        })
        .collect()
}

/// MSD(η) − MSD(0) per stage for every swept variant.
pub fn sweep_table(result: &ExperimentResult) -> Vec<SweepRow> {
    let Some(sweep) = &result.resolved.scenario.sweep else {
        return vec![];
    };
    let mut rows = vec![];
    let etas = sweep.eta.values();
    for base in &sweep.variants {
        let stage_db = |eta: f64| {
            result
                .curves(&sweep_name(base, eta))
                .ok()
                .map(|c| stage_steady_state(result, c))
        };
        let Some(reference) = stage_db(0.0).or_else(|| {
            result
                .curves("diffusion")
                .ok()
                .map(|c| stage_steady_state(result, c))
        }) else {
            continue;
        };
        for &eta in &etas {
            let Some(stages) = stage_db(eta) else {
                continue;
            };
            for (s, r) in stages.iter().zip(&reference) {
                rows.push(SweepRow {
                    variant: base.clone(),
                    eta,
                    stage: s.stage,
                    msd_db: s.network_db,
                    diff_db: s.network_db - r.network_db,
                });
            }
        }
    }
    rows
}

pub fn summary(result: &ExperimentResult) -> Summary {
    let s = &result.resolved.scenario;
    Summary {
        scenario: s.name.clone(),
        iterations: s.iterations,
        runs: s.runs,
        seed: s.seed,
        steady_window: STEADY_WINDOW,
        variants: result
            .variants
            .iter()
            .zip(&result.resolved.variants)
            .map(|(v, rv)| {
                let c = v.curves.as_ref();
                VariantSummary {
                    name: v.name.clone(),
                    variant: rv.variant.clone(),
                    n_runs_effective: c.map_or(0, |c| c.n_runs),
                    diverged_runs: v.status.iter().filter(|s| **s != RunStatus::Ok).count(),
                    steady_state_db: c.map(|c| c.steady_state_db(s.iterations)),
                    stages: c.map_or(vec![], |c| stage_steady_state(result, c)),
                    max_shift_ratio: c.map(|c| c.max_shift_ratio),
                    stability: v.stability.clone(),
                }
            })
            .collect(),
        sweep: sweep_table(result),
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("variant,eta,stage,msd_db,diff_db\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.variant, r.eta, r.stage, r.msd_db, r.diff_db
        );
    }
    out
}

/// Writes `results.csv`, `summary.json`, `manifest.json` and, for sweeps, `sweep.csv`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = vec![];
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put("results.csv", results_csv(result))?;
    let sum = summary(result);
    if !sum.sweep.is_empty() {
        put("sweep.csv", sweep_csv(&sum.sweep))?;
    }
    put("summary.json", serde_json::to_string_pretty(&sum)? + "\n")?;
    put(
        "manifest.json",
        serde_json::to_string_pretty(&result.manifest())? + "\n",
    )?;
    Ok(written)
}
