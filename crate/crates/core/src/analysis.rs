//! Mean-stability checks, bias bounds and Monte-Carlo MSD curves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::data::Schedule;
use crate::error::{Error, Result};
use crate::topology::CombinationWeights;

pub const DB_FLOOR: f64 = -320.0;
pub const STEADY_WINDOW: usize = 50;
const PSD_TOL: f64 = 1e-10;

pub fn to_db(linear: f64) -> f64 {
    if linear > 0.0 {
        (10.0 * linear.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

/// Regressor covariance of one node.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// σ²I.
    Isotropic(f64),
    Full(DMatrix<f64>),
}

impl Covariance {
    fn check(&self) -> Result<()> {
        match self {
            Covariance::Isotropic(s) if !(s.is_finite() && *s >= 0.0) => Err(Error::InvalidInput(
                format!("variance {s} is not a valid PSD covariance"),
            )),
            Covariance::Isotropic(_) => Ok(()),
            Covariance::Full(r) => {
                if !r.is_square() || r.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput(
                        "covariance must be square and finite".into(),
                    ));
                }
                let scale = r.amax().max(1.0);
                if (r - r.transpose()).amax() > PSD_TOL * scale {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
                let min = r.clone().symmetric_eigenvalues().min();
                if min < -PSD_TOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance is not positive semidefinite (eigenvalue {min})"
                    )));
                }
                Ok(())
            }
        }
    }

    fn eigenvalues(&self) -> Vec<f64> {
        match self {
            Covariance::Isotropic(s) => vec![*s],
            Covariance::Full(r) => r.clone().symmetric_eigenvalues().iter().copied().collect(),
        }
    }

    fn to_matrix(&self, dim: usize) -> DMatrix<f64> {
        match self {
            Covariance::Isotropic(s) => DMatrix::identity(dim, dim) * *s,
            Covariance::Full(r) => r.clone(),
        }
    }
}

/// Σ_ℓ c_ℓk R_{x,ℓ}, the covariance seen by node k's adaptation step.
pub fn aggregate_covariance(k: usize, c: &DMatrix<f64>, cov: &[Covariance]) -> Result<Covariance> {
    if cov.len() != c.nrows() {
        return Err(Error::InvalidInput(format!(
            "{} covariances for {} nodes",
            cov.len(),
            c.nrows()
        )));
    }
    for r in cov {
        r.check()?;
    }
    let dim = cov.iter().find_map(|r| match r {
        Covariance::Full(m) => Some(m.nrows()),
        Covariance::Isotropic(_) => None,
    });
    match dim {
        None => Ok(Covariance::Isotropic(
            cov.iter()
                .enumerate()
                .map(|(l, r)| match r {
                    Covariance::Isotropic(s) => c[(l, k)] * s,
                    Covariance::Full(_) => unreachable!(),
                })
                .sum(),
        )),
        Some(dim) => {
            let mut sum = DMatrix::zeros(dim, dim);
            for (l, r) in cov.iter().enumerate() {
                if c[(l, k)] != 0.0 {
                    let m = r.to_matrix(dim);
                    if m.nrows() != dim {
                        return Err(Error::InvalidInput(
                            "covariances differ in dimension".into(),
                        ));
                    }
                    sum += m * c[(l, k)];
                }
            }
            Ok(Covariance::Full(sum))
        }
    }
}

/// 2/λ_max(Σ_ℓ c_ℓk R_{x,ℓ}) for every node; infinite when the sum vanishes.
pub fn step_size_bounds(weights: &CombinationWeights, cov: &[Covariance]) -> Result<Vec<f64>> {
    (0..weights.n_nodes())
        .map(|k| {
            let r = aggregate_covariance(k, &weights.c, cov)?;
            let lmax = r.eigenvalues().into_iter().fold(0.0, f64::max);
            Ok(if lmax > 0.0 {
                2.0 / lmax
            } else {
                f64::INFINITY
            })
        })
        .collect()
}

/// ‖𝓑‖_{b,∞} for 𝓑_kℓ = a_ℓk(I − μ_ℓR_ℓ), as max_k Σ_ℓ ‖𝓑_kℓ‖₂.
pub fn block_max_norm(weights: &CombinationWeights, mu: &[f64], cov: &[Covariance]) -> Result<f64> {
    let n = weights.n_nodes();
    let spectral: Vec<f64> = (0..n)
        .map(|l| {
            let r = aggregate_covariance(l, &weights.c, cov)?;
            let ev = r.eigenvalues();
            Ok(ev
                .iter()
                .map(|&e| (1.0 - mu[l] * e).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    Ok((0..n)
        .map(|k| {
            (0..n)
                .map(|l| weights.a[(l, k)].abs() * spectral[l])
                .sum::<f64>()
        })
        .fold(0.0, f64::max))
}

/// The NM×NM matrix 𝓑 itself.
pub fn mean_dynamics_matrix(
    weights: &CombinationWeights,
    mu: &[f64],
    cov: &[Covariance],
    dim: usize,
) -> Result<DMatrix<f64>> {
    let n = weights.n_nodes();
    let mut b = DMatrix::zeros(n * dim, n * dim);
    for (l, &mu_l) in mu.iter().enumerate().take(n) {
        let r = aggregate_covariance(l, &weights.c, cov)?.to_matrix(dim);
        let block = DMatrix::identity(dim, dim) - r * mu_l;
        for k in 0..n {
            let a = weights.a[(l, k)];
            if a != 0.0 {
                b.view_mut((k * dim, l * dim), (dim, dim))
                    .copy_from(&(&block * a));
            }
        }
    }
    Ok(b)
}

/// max_k ‖x_k‖₂ over the M-blocks of `x`.
pub fn block_max_vector_norm(x: &DVector<f64>, dim: usize) -> f64 {
    x.as_slice()
        .chunks(dim)
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasBound {
    pub l1: Option<f64>,
    pub reweighted: Option<f64>,
    /// ‖𝓑‖_{b,∞} ≥ 1: no bound follows.
    pub vacuous: bool,
}

/// ημ_max s_max √M/(1 − ‖𝓑‖_{b,∞}); the reweighted bound divides by ε.
pub fn bias_bound(
    block_norm: f64,
    mu_max: f64,
    eta: f64,
    s_max: f64,
    dim: usize,
    epsilon: f64,
) -> BiasBound {
    let numerator = eta * mu_max * s_max * (dim as f64).sqrt();
    if numerator == 0.0 {
        return BiasBound {
            l1: Some(0.0),
            reweighted: Some(0.0),
            vacuous: false,
        };
    }
    if block_norm >= 1.0 {
        return BiasBound {
            l1: None,
            reweighted: None,
            vacuous: true,
        };
    }
    let l1 = numerator / (1.0 - block_norm);
    BiasBound {
        l1: Some(l1),
        reweighted: Some(l1 / epsilon),
        vacuous: false,
    }
}

/// max_k Σ_ℓ p_kℓ.
pub fn max_regularization_mass(weights: &CombinationWeights) -> f64 {
    (0..weights.n_nodes())
        .map(|k| weights.regularization_mass(k))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub bounds: Vec<f64>,
    pub mu: Vec<f64>,
    pub pass: Vec<bool>,
    pub block_norm: f64,
    pub s_max: f64,
    pub bias: BiasBound,
}

impl StabilityReport {
    pub fn new(
        weights: &CombinationWeights,
        mu: &[f64],
        cov: &[Covariance],
        eta: f64,
        epsilon: f64,
        dim: usize,
    ) -> Result<Self> {
        if mu.len() != weights.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "{} step sizes for {} nodes",
                mu.len(),
                weights.n_nodes()
            )));
        }
        let bounds = step_size_bounds(weights, cov)?;
        let pass = mu
            .iter()
            .zip(&bounds)
            .map(|(&m, &b)| m > 0.0 && m < b)
            .collect();
        let block_norm = block_max_norm(weights, mu, cov)?;
        let s_max = max_regularization_mass(weights);
        let mu_max = mu.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            bias: bias_bound(block_norm, mu_max, eta, s_max, dim, epsilon),
            bounds,
            mu: mu.to_vec(),
            pass,
            block_norm,
            s_max,
        })
    }

    pub fn all_pass(&self) -> bool {
        self.pass.iter().all(|&p| p)
    }
}

/// Squared deviations from one run of one variant, reduced on the fly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCurves {
    /// (1/N) Σ_k ‖w°_k − w_k‖² per iteration.
    pub network: Vec<f64>,
    /// Per cluster, per iteration: mean over members of the full squared error.
    pub cluster: Vec<Vec<f64>>,
    /// Same restricted to the entries common to every cluster.
    pub common: Vec<Vec<f64>>,
    pub distinct: Vec<Vec<f64>>,
    /// Per node, mean of w° − w over the trailing window of the run.
    pub window_error: Vec<DVector<f64>>,
    pub max_shift_ratio: f64,
    window_start: usize,
}

impl RunCurves {
    pub fn new(
        n_nodes: usize,
        n_clusters: usize,
        dim: usize,
        iterations: usize,
        window: usize,
    ) -> Self {
        let per_cluster = vec![Vec::with_capacity(iterations); n_clusters];
        Self {
            network: Vec::with_capacity(iterations),
            cluster: per_cluster.clone(),
            common: per_cluster.clone(),
            distinct: per_cluster,
            window_error: vec![DVector::zeros(dim); n_nodes],
            max_shift_ratio: 0.0,
            window_start: iterations.saturating_sub(window),
        }
    }

    /// Records the estimates produced from the data of `iteration`.
    pub fn record(
        &mut self,
        iteration: usize,
        estimates: &[DVector<f64>],
        cluster_of: &[usize],
        schedule: &Schedule,
        iterations: usize,
    ) {
        let n_clusters = self.cluster.len();
        let stage = schedule.stage_index(iteration);
        let common = schedule.common_entries(stage);
        let mut total = 0.0;
        let mut full = vec![0.0; n_clusters];
        let mut com = vec![0.0; n_clusters];
        let mut count = vec![0usize; n_clusters];
        let in_window = iteration >= self.window_start;
        let window_len = (iterations - self.window_start) as f64;
        for (k, w) in estimates.iter().enumerate() {
            let q = cluster_of[k];
            let err = schedule.optimum(q, iteration) - w;
            let sq = err.norm_squared();
            total += sq;
            full[q] += sq;
            com[q] += common.iter().map(|&m| err[m] * err[m]).sum::<f64>();
            count[q] += 1;
            if in_window {
                self.window_error[k].axpy(1.0 / window_len, &err, 1.0);
            }
        }
        self.network.push(total / estimates.len() as f64);
        for q in 0..n_clusters {
            let c = count[q].max(1) as f64;
            self.cluster[q].push(full[q] / c);
            self.common[q].push(com[q] / c);
            self.distinct[q].push((full[q] - com[q]).max(0.0) / c);
        }
    }
}

/// Monte-Carlo averages of [`RunCurves`].
#[derive(Debug, Clone, PartialEq)]
pub struct MsdCurves {
    pub network: Vec<f64>,
    pub cluster: Vec<Vec<f64>>,
    /// `None` where the common set is empty at that iteration.
    pub common: Vec<Vec<Option<f64>>>,
    pub distinct: Vec<Vec<Option<f64>>>,
    pub mean_window_error: Vec<DVector<f64>>,
    pub max_shift_ratio: f64,
    pub n_runs: usize,
    pub diverged: usize,
}

impl MsdCurves {
    pub fn iterations(&self) -> usize {
        self.network.len()
    }

    /// Mean of `curve` over `[end − window, end)`, clipped to the range.
    pub fn window_mean(curve: &[f64], end: usize, window: usize) -> f64 {
        let end = end.min(curve.len());
        let start = end.saturating_sub(window);
        if end == start {
            return f64::NAN;
        }
        curve[start..end].iter().sum::<f64>() / (end - start) as f64
    }

    pub fn steady_state(&self, end: usize) -> f64 {
        Self::window_mean(&self.network, end, STEADY_WINDOW)
    }

    pub fn steady_state_db(&self, end: usize) -> f64 {
        to_db(self.steady_state(end))
    }

    /// max_k ‖E[w°_k − w_k]‖ over the trailing window.
    pub fn mean_error_block_norm(&self) -> f64 {
        self.mean_window_error
            .iter()
            .map(|e| e.norm())
            .fold(0.0, f64::max)
    }

    /// Relative change between the last two windows of `window` iterations.
    pub fn trailing_drift(&self, window: usize) -> f64 {
        let n = self.network.len();
        let last = Self::window_mean(&self.network, n, window);
        let prev = Self::window_mean(&self.network, n.saturating_sub(window), window);
        ((last - prev) / prev).abs()
    }
}

/// Sums [`RunCurves`] in submission order; diverged runs only bump a counter.
#[derive(Debug, Clone)]
pub struct MsdAccumulator {
    sum: Option<RunCurves>,
    n_runs: usize,
    diverged: usize,
    common_present: Vec<bool>,
    distinct_present: Vec<bool>,
}

impl MsdAccumulator {
    pub fn new(schedule: &Schedule, iterations: usize) -> Self {
        let present = |distinct: bool| {
            (0..iterations)
                .map(|i| {
                    let s = schedule.stage_index(i);
                    let set = if distinct {
                        schedule.distinct_entries(s)
                    } else {
                        schedule.common_entries(s)
                    };
                    !set.is_empty()
                })
                .collect()
        };
        Self {
            sum: None,
            n_runs: 0,
            diverged: 0,
            common_present: present(false),
            distinct_present: present(true),
        }
    }

    pub fn add(&mut self, run: Option<RunCurves>) {
        let Some(run) = run else {
            self.diverged += 1;
            return;
        };
        self.n_runs += 1;
        match &mut self.sum {
            None => self.sum = Some(run),
            Some(sum) => {
                let add =
                    |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                add(&mut sum.network, &run.network);
                for q in 0..sum.cluster.len() {
                    add(&mut sum.cluster[q], &run.cluster[q]);
                    add(&mut sum.common[q], &run.common[q]);
                    add(&mut sum.distinct[q], &run.distinct[q]);
                }
                for (a, b) in sum.window_error.iter_mut().zip(&run.window_error) {
                    *a += b;
                }
                sum.max_shift_ratio = sum.max_shift_ratio.max(run.max_shift_ratio);
            }
        }
    }

    pub fn finish(self) -> Result<MsdCurves> {
        let sum = self.sum.ok_or(Error::NoData)?;
        let n = self.n_runs as f64;
        let scale = |v: &[f64]| v.iter().map(|x| x / n).collect::<Vec<_>>();
        let masked = |v: &[f64], present: &[bool]| {
            v.iter()
                .zip(present)
                .map(|(x, &p)| p.then_some(x / n))
                .collect::<Vec<_>>()
        };
        Ok(MsdCurves {
            network: scale(&sum.network),
            cluster: sum.cluster.iter().map(|c| scale(c)).collect(),
            common: sum
                .common
                .iter()
                .map(|c| masked(c, &self.common_present))
                .collect(),
            distinct: sum
                .distinct
                .iter()
                .map(|c| masked(c, &self.distinct_present))
                .collect(),
            mean_window_error: sum.window_error.iter().map(|e| e / n).collect(),
            max_shift_ratio: sum.max_shift_ratio,
            n_runs: self.n_runs,
            diverged: self.diverged,
        })
    }
}

/// Curves from stored trajectories (`runs[r][i][k]`, `None` for a diverged run).
pub fn network_msd(
    runs: &[Option<Vec<Vec<DVector<f64>>>>],
    schedule: &Schedule,
    cluster_of: &[usize],
) -> Result<MsdCurves> {
    let iterations = runs.iter().flatten().map(|r| r.len()).max().unwrap_or(0);
    let mut acc = MsdAccumulator::new(schedule, iterations);
    for run in runs {
        acc.add(run.as_ref().map(|traj| {
            let n = cluster_of.len();
            let mut curves = RunCurves::new(
                n,
                schedule.n_clusters(),
                schedule.dim(),
                iterations,
                STEADY_WINDOW,
            );
            for (i, est) in traj.iter().enumerate() {
                curves.record(i, est, cluster_of, schedule, iterations);
            }
            curves
        }));
    }
    acc.finish()
}

/// Per-cluster MSD restricted to an explicit entry set (`None` when empty).
pub fn subset_msd(
    estimates: &[DVector<f64>],
    cluster_of: &[usize],
    schedule: &Schedule,
    iteration: usize,
    entries: &[usize],
) -> Vec<Option<f64>> {
    if entries.is_empty() {
        return vec![None; schedule.n_clusters()];
    }
    let mut sum = vec![0.0; schedule.n_clusters()];
    let mut count = vec![0usize; schedule.n_clusters()];
    for (k, w) in estimates.iter().enumerate() {
        let q = cluster_of[k];
        let opt = schedule.optimum(q, iteration);
        sum[q] += entries
            .iter()
            .map(|&m| (opt[m] - w[m]).powi(2))
            .sum::<f64>();
        count[q] += 1;
    }
    sum.iter()
        .zip(count)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// λ_max(R) for diagnostics.
pub fn lambda_max(r: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(r.clone()).eigenvalues.max()
}
