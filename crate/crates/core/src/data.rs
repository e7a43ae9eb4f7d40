//! Streaming data for the two experiment families: linear regression with a
//! piecewise-stationary optimum schedule, and power-spectrum sensing with a
//! Gaussian basis expansion and censored path-loss estimates.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type DataRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, run, node)`; successive iterations consume it in order.
pub fn node_rng(seed: u64, run: u64, node: u64) -> DataRng {
    let a = splitmix64(seed);
    let b = splitmix64(a ^ run);
    let c = splitmix64(b ^ node.rotate_left(17));
    let d = splitmix64(c ^ 0x5151_5151);
    let mut bytes = [0u8; 32];
    for (chunk, w) in bytes.chunks_mut(8).zip([a, b, c, d]) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}

/// Stream for experiment-level draws (base optimum vector, random variances).
pub fn experiment_rng(seed: u64) -> DataRng {
    node_rng(seed, u64::MAX, u64::MAX)
}

pub fn standard_normal(rng: &mut DataRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Optimum vectors per cluster, active from `start` until the next stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub start: usize,
    pub optima: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    stages: Vec<Stage>,
}

impl Schedule {
    pub fn new(stages: Vec<Stage>) -> Result<Self> {
        let first = stages
            .first()
            .ok_or_else(|| Error::Config("optimum schedule is empty".into()))?;
        if first.start != 0 {
            return Err(Error::Config(
                "first stage must start at iteration 0".into(),
            ));
        }
        for w in stages.windows(2) {
            if w[1].start <= w[0].start {
                return Err(Error::Config(
                    "stage start iterations must be strictly increasing".into(),
                ));
            }
        }
        let q = first.optima.len();
        let m = first.optima.first().map_or(0, |v| v.len());
        if q == 0 || m == 0 {
            return Err(Error::Config(
                "stages need at least one nonempty optimum".into(),
            ));
        }
        for s in &stages {
            if s.optima.len() != q || s.optima.iter().any(|v| v.len() != m) {
                return Err(Error::Config(
                    "every stage needs one optimum of equal dimension per cluster".into(),
                ));
            }
        }
        Ok(Self { stages })
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn dim(&self) -> usize {
        self.stages[0].optima[0].len()
    }

    pub fn n_clusters(&self) -> usize {
        self.stages[0].optima.len()
    }

    pub fn stage_index(&self, iteration: usize) -> usize {
        self.stages.partition_point(|s| s.start <= iteration) - 1
    }

    pub fn optimum(&self, cluster: usize, iteration: usize) -> &DVector<f64> {
        &self.stages[self.stage_index(iteration)].optima[cluster]
    }

    /// Iteration range `[start, end)` of stage `s` given the run length.
    pub fn stage_range(&self, s: usize, iterations: usize) -> (usize, usize) {
        let start = self.stages[s].start.min(iterations);
        let end = self
            .stages
            .get(s + 1)
            .map_or(iterations, |n| n.start.min(iterations));
        (start, end)
    }

    /// Entries identical across every cluster in stage `s` (zero-based).
    pub fn common_entries(&self, s: usize) -> Vec<usize> {
        let optima = &self.stages[s].optima;
        (0..self.dim())
            .filter(|&m| optima.iter().all(|w| w[m] == optima[0][m]))
            .collect()
    }

    pub fn distinct_entries(&self, s: usize) -> Vec<usize> {
        let common = self.common_entries(s);
        (0..self.dim()).filter(|m| !common.contains(m)).collect()
    }
}

/// `d = xᵀw° + z` with `x ~ N(0, σ²ₓI)`, `z ~ N(0, σ²_z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmsSignalModel {
    pub sigma_x2: Vec<f64>,
    pub sigma_z2: Vec<f64>,
    pub schedule: Schedule,
}

impl LmsSignalModel {
    pub fn new(sigma_x2: Vec<f64>, sigma_z2: Vec<f64>, schedule: Schedule) -> Result<Self> {
        if sigma_x2.len() != sigma_z2.len() {
            return Err(Error::Config(format!(
                "{} regressor variances but {} noise variances",
                sigma_x2.len(),
                sigma_z2.len()
            )));
        }
        if let Some(v) = sigma_x2.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Config(format!(
                "regressor variance {v} is not positive"
            )));
        }
        if let Some(v) = sigma_z2.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::Config(format!("noise variance {v} is negative")));
        }
        Ok(Self {
            sigma_x2,
            sigma_z2,
            schedule,
        })
    }

    pub fn dim(&self) -> usize {
        self.schedule.dim()
    }

    pub fn n_nodes(&self) -> usize {
        self.sigma_x2.len()
    }

    /// One `(x_k(i), d_k(i))` draw for node `k` in `cluster`.
    pub fn sample_lms(
        &self,
        k: usize,
        cluster: usize,
        iteration: usize,
        rng: &mut DataRng,
    ) -> (DVector<f64>, f64) {
        let sx = self.sigma_x2[k].sqrt();
        let x = DVector::from_fn(self.dim(), |_, _| sx * standard_normal(rng));
        let z = self.sigma_z2[k].sqrt() * standard_normal(rng);
        let d = x.dot(self.schedule.optimum(cluster, iteration)) + z;
        (x, d)
    }
}

/// Planar position.
pub type Point = [f64; 2];

fn sq_dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Cognitive-radio spectrum sensing: node `k` in cluster `q` observes
/// `r = Σₚ ℓₚΦαₚ + ℓ'Φβ_q + z` over `n_freq` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumModel {
    pub n_basis: usize,
    pub n_freq: usize,
    pub basis_var: f64,
    pub node_pos: Vec<Point>,
    pub pu_pos: Vec<Point>,
    /// One interference source per cluster.
    pub is_pos: Vec<Point>,
    pub cluster_of: Vec<usize>,
    pub threshold: f64,
    pub jitter_rel: f64,
    pub noise_std: Vec<f64>,
    pub schedule: Schedule,
    basis: DMatrix<f64>,
    mean_loss: Vec<Vec<f64>>,
}

/// Per-iteration observation at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    /// `[ℓ₁ … ℓ_{N_P}, ℓ'] ⊗ Φ` with the true jittered losses.
    pub phi_true: DMatrix<f64>,
    pub r: DVector<f64>,
    /// Same layout with censored loss estimates; the only regressor the learner sees.
    pub phi_hat: DMatrix<f64>,
    pub loss_hat: Vec<f64>,
}

/// Gaussian basis `φₘ(f) = exp(−(f − fₘ)²/(2σ²))` sampled on a uniform
/// frequency grid over `[0, 1]`, centers uniform over `[0, 1]`.
pub fn gaussian_basis(n_freq: usize, n_basis: usize, var: f64) -> DMatrix<f64> {
    let grid = |n: usize, i: usize| {
        if n == 1 {
            0.5
        } else {
            i as f64 / (n - 1) as f64
        }
    };
    DMatrix::from_fn(n_freq, n_basis, |j, m| {
        let df = grid(n_freq, j) - grid(n_basis, m);
        (-(df * df) / (2.0 * var)).exp()
    })
}

impl SpectrumModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_basis: usize,
        n_freq: usize,
        basis_var: f64,
        node_pos: Vec<Point>,
        pu_pos: Vec<Point>,
        is_pos: Vec<Point>,
        cluster_of: Vec<usize>,
        threshold: f64,
        jitter_rel: f64,
        noise_std: Vec<f64>,
        optima: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if n_basis == 0 || n_freq < n_basis {
            return Err(Error::Config(format!(
                "need 0 < n_basis <= n_freq, got {n_basis} and {n_freq}"
            )));
        }
        if !(basis_var > 0.0) || !(threshold >= 0.0) || !(jitter_rel >= 0.0) {
            return Err(Error::Config(
                "basis variance must be > 0, threshold and jitter >= 0".into(),
            ));
        }
        let n = node_pos.len();
        if cluster_of.len() != n || noise_std.len() != n {
            return Err(Error::Config(
                "per-node arrays disagree on node count".into(),
            ));
        }
        if let Some(q) = cluster_of.iter().find(|&&q| q >= is_pos.len()) {
            return Err(Error::Config(format!(
                "cluster {q} has no interference source"
            )));
        }
        let dim = n_basis * (pu_pos.len() + 1);
        if optima.len() != is_pos.len() || optima.iter().any(|v| v.len() != dim) {
            return Err(Error::Config(format!(
                "need one combination vector of length {dim} per cluster"
            )));
        }
        let mut mean_loss = Vec::with_capacity(n);
        for (k, &pos) in node_pos.iter().enumerate() {
            let mut losses = Vec::with_capacity(pu_pos.len() + 1);
            for src in pu_pos.iter().chain(std::iter::once(&is_pos[cluster_of[k]])) {
                let d2 = sq_dist(pos, *src);
                if !(d2 > 0.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "node {k} coincides with a transmitter at {src:?}"
                    )));
                }
                losses.push(1.0 / d2);
            }
            mean_loss.push(losses);
        }
        let schedule = Schedule::new(vec![Stage { start: 0, optima }])?;
        Ok(Self {
            basis: gaussian_basis(n_freq, n_basis, basis_var),
            n_basis,
            n_freq,
            basis_var,
            node_pos,
            pu_pos,
            is_pos,
            cluster_of,
            threshold,
            jitter_rel,
            noise_std,
            schedule,
            mean_loss,
        })
    }

    pub fn n_pu(&self) -> usize {
        self.pu_pos.len()
    }

    pub fn dim(&self) -> usize {
        self.n_basis * (self.n_pu() + 1)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Inverse-square mean losses `[ℓ̄₁ … ℓ̄_{N_P}, ℓ̄']` at node `k`.
    pub fn mean_loss(&self, k: usize) -> &[f64] {
        &self.mean_loss[k]
    }

    /// `loss ⊗ Φ`.
    pub fn regressor(&self, loss: &[f64]) -> DMatrix<f64> {
        let nb = self.n_basis;
        let mut out = DMatrix::zeros(self.n_freq, nb * loss.len());
        for (p, &l) in loss.iter().enumerate() {
            if l != 0.0 {
                out.columns_mut(p * nb, nb).copy_from(&(&self.basis * l));
            }
        }
        out
    }

    pub fn sample_spectrum(&self, k: usize, rng: &mut DataRng) -> SpectrumSample {
        let mean = &self.mean_loss[k];
        let mut loss = Vec::with_capacity(mean.len());
        let mut loss_hat = Vec::with_capacity(mean.len());
        for &l_bar in mean {
            let l = l_bar + self.jitter_rel * l_bar * standard_normal(rng);
            loss.push(l);
            loss_hat.push(if l > self.threshold { l_bar } else { 0.0 });
        }
        let phi_true = self.regressor(&loss);
        let upsilon = self.schedule.optimum(self.cluster_of[k], 0);
        let sigma = self.noise_std[k];
        let noise = DVector::from_fn(self.n_freq, |_, _| sigma * standard_normal(rng));
        let r = &phi_true * upsilon + noise;
        SpectrumSample {
            phi_hat: self.regressor(&loss_hat),
            phi_true,
            r,
            loss_hat,
        }
    }

    /// Reconstructed PSD `Φ·block` of transmitter block `p` (PUs first, then the IS).
    pub fn block_psd(&self, upsilon: &DVector<f64>, p: usize) -> DVector<f64> {
        &self.basis * upsilon.rows(p * self.n_basis, self.n_basis)
    }
}

/// One node's regression data for a single iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    /// `d = xᵀw° + z`.
    Vector { x: DVector<f64>, d: f64 },
    /// `r = Φw° + z`; `phi` is the regressor the learner sees.
    Block { phi: DMatrix<f64>, r: DVector<f64> },
}

impl Observation {
    pub fn dim(&self) -> usize {
        match self {
            Observation::Vector { x, .. } => x.len(),
            Observation::Block { phi, .. } => phi.ncols(),
        }
    }

    /// Negative half-gradient of the instantaneous squared error at `w`.
    pub fn innovation(&self, w: &DVector<f64>) -> DVector<f64> {
        match self {
            Observation::Vector { x, d } => x * (d - x.dot(w)),
            Observation::Block { phi, r } => phi.tr_mul(&(r - phi * w)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignalModel {
    Lms(LmsSignalModel),
    Spectrum(SpectrumModel),
}

impl SignalModel {
    pub fn schedule(&self) -> &Schedule {
        match self {
            SignalModel::Lms(m) => &m.schedule,
            SignalModel::Spectrum(m) => &m.schedule,
        }
    }

    pub fn dim(&self) -> usize {
        self.schedule().dim()
    }

    pub fn sample(
        &self,
        k: usize,
        cluster: usize,
        iteration: usize,
        rng: &mut DataRng,
    ) -> Observation {
        match self {
            SignalModel::Lms(m) => {
                let (x, d) = m.sample_lms(k, cluster, iteration, rng);
                Observation::Vector { x, d }
            }
            SignalModel::Spectrum(m) => {
                let s = m.sample_spectrum(k, rng);
                Observation::Block {
                    phi: s.phi_hat,
                    r: s.r,
                }
            }
        }
    }

    /// Draws every node's observation for `iteration`, one stream per node.
    pub fn sample_batch(
        &self,
        cluster_of: &[usize],
        iteration: usize,
        rngs: &mut [DataRng],
    ) -> Vec<Observation> {
        rngs.iter_mut()
            .enumerate()
            .map(|(k, rng)| self.sample(k, cluster_of[k], iteration, rng))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_schedule() -> Schedule {
        Schedule::new(vec![Stage {
            start: 0,
            optima: vec![DVector::from_vec(vec![1.0, 0.0])],
        }])
        .unwrap()
    }

    #[test]
    fn noiseless_unit_case() {
        let model = LmsSignalModel::new(vec![1.0], vec![0.0], unit_schedule()).unwrap();
        let mut rng = node_rng(1, 0, 0);
        let (x, d) = model.sample_lms(0, 0, 0, &mut rng);
        assert!((d - x[0]).abs() < 1e-15);
    }

    #[test]
    fn schedule_lookup() {
        let v = |x: f64| DVector::from_element(2, x);
        let s = Schedule::new(vec![
            Stage {
                start: 0,
                optima: vec![v(0.0), v(0.0)],
            },
            Stage {
                start: 500,
                optima: vec![v(1.0), v(0.0)],
            },
            Stage {
                start: 1000,
                optima: vec![v(2.0), v(2.0)],
            },
        ])
        .unwrap();
        assert_eq!(s.stage_index(0), 0);
        assert_eq!(s.stage_index(499), 0);
        assert_eq!(s.stage_index(500), 1);
        assert_eq!(s.stage_index(5000), 2);
        assert_eq!(s.optimum(0, 700)[0], 1.0);
        assert_eq!(s.stage_range(1, 1500), (500, 1000));
        assert_eq!(s.stage_range(2, 1500), (1000, 1500));
        assert_eq!(s.common_entries(0), vec![0, 1]);
        assert_eq!(s.distinct_entries(1), vec![0, 1]);
    }

    #[test]
    fn schedule_validation() {
        let v = DVector::from_element(2, 0.0);
        assert!(Schedule::new(vec![]).is_err());
        assert!(Schedule::new(vec![Stage {
            start: 3,
            optima: vec![v.clone()]
        }])
        .is_err());
        assert!(Schedule::new(vec![
            Stage {
                start: 0,
                optima: vec![v.clone()]
            },
            Stage {
                start: 0,
                optima: vec![v.clone()]
            },
        ])
        .is_err());
    }

    #[test]
    fn streams_reproducible_and_distinct() {
        let draw = |seed, run, node| {
            let mut r = node_rng(seed, run, node);
            (0..4).map(|_| standard_normal(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 2, 3), draw(7, 2, 3));
        assert_ne!(draw(7, 2, 3), draw(7, 2, 4));
        assert_ne!(draw(7, 2, 3), draw(7, 3, 3));
        assert_ne!(draw(7, 2, 3), draw(8, 2, 3));
    }

    #[test]
    fn noise_variance_identity() {
        let zero = Schedule::new(vec![Stage {
            start: 0,
            optima: vec![DVector::zeros(3)],
        }])
        .unwrap();
        let model = LmsSignalModel::new(vec![1.0], vec![0.25], zero).unwrap();
        let mut rng = node_rng(11, 0, 0);
        let n = 100_000;
        let mean_sq: f64 = (0..n)
            .map(|i| model.sample_lms(0, 0, i, &mut rng).1.powi(2))
            .sum::<f64>()
            / n as f64;
        // sd of the sample mean of z² is σ²√(2/n)
        let tol = 3.0 * 0.25 * (2.0 / n as f64).sqrt();
        assert!((mean_sq - 0.25).abs() < tol, "{mean_sq}");
    }

    #[test]
    fn regressors_white_and_independent_of_noise() {
        let zero = Schedule::new(vec![Stage {
            start: 0,
            optima: vec![DVector::zeros(2)],
        }])
        .unwrap();
        let model = LmsSignalModel::new(vec![1.0, 1.0], vec![1.0, 1.0], zero).unwrap();
        let mut r0 = node_rng(5, 0, 0);
        let mut r1 = node_rng(5, 0, 1);
        let n = 50_000;
        let (mut lag, mut cross, mut xz) = (0.0, 0.0, 0.0);
        let mut prev = model.sample_lms(0, 0, 0, &mut r0);
        for i in 1..n {
            let cur = model.sample_lms(0, 0, i, &mut r0);
            let other = model.sample_lms(1, 0, i, &mut r1);
            lag += cur.0[0] * prev.0[0];
            cross += cur.0[0] * other.0[0];
            // w° = 0 so d is pure noise
            xz += cur.0[1] * cur.1;
            prev = cur;
        }
        let tol = 4.0 / (n as f64).sqrt();
        for c in [lag, cross, xz] {
            assert!((c / n as f64).abs() < tol);
        }
    }

    fn tiny_spectrum(threshold: f64, jitter: f64, noise: f64) -> SpectrumModel {
        let upsilon = DVector::from_fn(4, |i, _| (i as f64 + 1.0) / 4.0);
        SpectrumModel::new(
            2,
            4,
            0.01,
            vec![[1.0, 0.0]],
            vec![[0.0, 0.0]],
            vec![[0.0, 2.0]],
            vec![0],
            threshold,
            jitter,
            vec![noise],
            vec![upsilon],
        )
        .unwrap()
    }

    #[test]
    fn spectrum_exact_without_noise() {
        let model = tiny_spectrum(0.0, 0.0, 0.0);
        let mut rng = node_rng(3, 0, 0);
        let s = model.sample_spectrum(0, &mut rng);
        let pred = &s.phi_hat * model.schedule.optimum(0, 0);
        assert!((pred - &s.r).norm() < 1e-12);
        assert_eq!(s.phi_true, s.phi_hat);
    }

    #[test]
    fn censored_block_is_zero() {
        // PU loss is 1, IS loss is 1/5: threshold between them censors the IS
        let model = tiny_spectrum(0.5, 0.0, 0.0);
        let s = model.sample_spectrum(0, &mut node_rng(3, 0, 0));
        assert_eq!(s.loss_hat, vec![1.0, 0.0]);
        assert!(s.phi_hat.columns(2, 2).iter().all(|&v| v == 0.0));
        assert!(s.phi_true.columns(2, 2).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn gaussian_basis_peaks_at_center() {
        let b = gaussian_basis(5, 5, 0.001);
        for m in 0..5 {
            assert_eq!(b[(m, m)], 1.0);
        }
    }

    #[test]
    fn default_basis_full_rank() {
        let b = gaussian_basis(80, 20, 0.001);
        let sv = b.singular_values();
        let (max, min) = (sv.max(), sv.min());
        assert!(min > 1e-8 * max, "condition {}", max / min);
    }

    #[test]
    fn zero_distance_rejected() {
        let err = SpectrumModel::new(
            1,
            2,
            0.01,
            vec![[0.0, 0.0]],
            vec![[0.0, 0.0]],
            vec![[1.0, 1.0]],
            vec![0],
            0.0,
            0.1,
            vec![0.01],
            vec![DVector::zeros(2)],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGeometry(_)));
    }
}
