//! ℓ1 and reweighted-ℓ1 coregularizers, the sparsity measure and the
//! adaptive inter-cluster weight rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prox::WeightedAbsSum;
use crate::topology::ClusteredTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    L1,
    ReweightedL1,
}

/// Which iterate feeds the reweighting differences δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReweightSource {
    /// Combination intermediates φ (default).
    #[default]
    Phi,
    /// Post-prox estimates w.
    W,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub eta: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub adaptive_p: bool,
    #[serde(default = "default_scale")]
    pub adaptive_p_scale: f64,
    #[serde(default)]
    pub reweight_source: ReweightSource,
}

impl RegularizerSpec {
    pub fn l1(eta: f64) -> Self {
        Self {
            kind: RegularizerKind::L1,
            eta,
            epsilon: default_epsilon(),
            adaptive_p: false,
            adaptive_p_scale: default_scale(),
            reweight_source: ReweightSource::Phi,
        }
    }

    pub fn reweighted(eta: f64, epsilon: f64) -> Self {
        Self {
            kind: RegularizerKind::ReweightedL1,
            epsilon,
            ..Self::l1(eta)
        }
    }

    pub fn with_adaptive_p(mut self, scale: f64) -> Self {
        self.adaptive_p = true;
        self.adaptive_p_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::Config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.adaptive_p && !(self.adaptive_p_scale > 0.0) {
            return Err(Error::Config(format!(
                "adaptive_p_scale must be > 0, got {}",
                self.adaptive_p_scale
            )));
        }
        Ok(())
    }
}

/// Per inter-cluster edge reweighting state.
///
/// `edges[k][j]` belongs to the edge from `k` to its `j`-th extra-cluster
/// neighbor, in the order of [`ClusteredTopology::extra_neighbors`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReweightState {
    pub neighbors: Vec<Vec<usize>>,
    pub alpha: Vec<Vec<DVector<f64>>>,
    pub delta: Vec<Vec<DVector<f64>>>,
}

impl ReweightState {
    /// δ(−1) = 0 on every edge; α starts at 1 (ℓ1) or 1/ε (reweighted).
    pub fn new(topo: &ClusteredTopology, dim: usize, spec: &RegularizerSpec) -> Self {
        let neighbors: Vec<Vec<usize>> = (0..topo.n_nodes())
            .map(|k| topo.extra_neighbors(k))
            .collect();
        let delta: Vec<Vec<DVector<f64>>> = neighbors
            .iter()
            .map(|ns| vec![DVector::zeros(dim); ns.len()])
            .collect();
        let mut state = Self {
            alpha: delta.clone(),
            neighbors,
            delta,
        };
        state.refresh_alpha(spec);
        state
    }

    /// α_kℓᵐ = 1/(ε + |[δ_kℓ]ₘ|) from the stored differences, or 1 for ℓ1.
    pub fn refresh_alpha(&mut self, spec: &RegularizerSpec) {
        for (alphas, deltas) in self.alpha.iter_mut().zip(&self.delta) {
            for (alpha, delta) in alphas.iter_mut().zip(deltas) {
                match spec.kind {
                    RegularizerKind::L1 => alpha.fill(1.0),
                    RegularizerKind::ReweightedL1 => {
                        alpha.zip_apply(delta, |a, d| *a = 1.0 / (spec.epsilon + d.abs()))
                    }
                }
            }
        }
    }

    /// δ_kℓ ← vₖ − v_ℓ on every edge.
    pub fn record_differences(&mut self, vectors: &[DVector<f64>]) {
        for (k, (ns, deltas)) in self.neighbors.iter().zip(self.delta.iter_mut()).enumerate() {
            for (&l, delta) in ns.iter().zip(deltas.iter_mut()) {
                delta.copy_from(&vectors[k]);
                *delta -= &vectors[l];
            }
        }
    }

    pub fn alpha_for(&self, k: usize, l: usize) -> Option<&DVector<f64>> {
        let j = self.neighbors[k].iter().position(|&x| x == l)?;
        Some(&self.alpha[k][j])
    }
}

/// Weights for this iteration from the previous differences, then the new
/// differences `φₖ − φ_ℓ` are stored for the next iteration.
pub fn update_alpha(
    mut state: ReweightState,
    phi: &[DVector<f64>],
    spec: &RegularizerSpec,
) -> ReweightState {
    state.refresh_alpha(spec);
    if spec.kind == RegularizerKind::ReweightedL1 {
        state.record_differences(phi);
    }
    state
}

/// Zero differences (‖d‖₂ at or below this) count as maximally sparse.
pub const ZERO_DIFFERENCE_TOL: f64 = 1e-12;

/// ξ(d) = M/(M − √M)·(1 − ‖d‖₁/(√M‖d‖₂)), in `[0, 1]`.
pub fn sparsity_measure(d: &DVector<f64>) -> Result<f64> {
    let m = d.len();
    if m < 2 {
        return Err(Error::InvalidDimension { got: m, min: 2 });
    }
    let l2 = d.norm();
    if l2 <= ZERO_DIFFERENCE_TOL {
        return Ok(1.0);
    }
    let l1 = d.lp_norm(1);
    let sqrt_m = (m as f64).sqrt();
    let xi = m as f64 / (m as f64 - sqrt_m) * (1.0 - l1 / (sqrt_m * l2));
    Ok(xi.clamp(0.0, 1.0))
}

/// p_kℓ = scale·ξ(φₖ − φ_ℓ) on extra-cluster edges, zero elsewhere.
pub fn adaptive_p(
    phi: &[DVector<f64>],
    topo: &ClusteredTopology,
    spec: &RegularizerSpec,
) -> Result<DMatrix<f64>> {
    let n = topo.n_nodes();
    let mut p = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in topo.extra_neighbors(k) {
            if l < k {
                continue;
            }
            let xi = sparsity_measure(&(&phi[k] - &phi[l]))?;
            p[(k, l)] = spec.adaptive_p_scale * xi;
            p[(l, k)] = p[(k, l)];
        }
    }
    Ok(p)
}

/// One `h` per entry: breakpoints `[φ_ℓ]ₘ`, weights `p_kℓ·α_kℓᵐ` over extra-cluster neighbors.
pub fn build_prox_functions(
    k: usize,
    phi: &[DVector<f64>],
    alpha: &ReweightState,
    p: &DMatrix<f64>,
) -> Result<Vec<WeightedAbsSum>> {
    let dim = phi[k].len();
    let neighbors = &alpha.neighbors[k];
    (0..dim)
        .map(|m| {
            WeightedAbsSum::new(
                neighbors
                    .iter()
                    .zip(&alpha.alpha[k])
                    .map(|(&l, a)| (phi[l][m], p[(k, l)] * a[m])),
            )
        })
        .collect()
}

/// s_kᵐ = Σ_ℓ p_kℓ α_kℓᵐ for every entry.
pub fn regularization_mass(
    k: usize,
    alpha: &ReweightState,
    p: &DMatrix<f64>,
    dim: usize,
) -> DVector<f64> {
    let mut s = DVector::zeros(dim);
    for (&l, a) in alpha.neighbors[k].iter().zip(&alpha.alpha[k]) {
        s.axpy(p[(k, l)], a, 1.0);
    }
    s
}
