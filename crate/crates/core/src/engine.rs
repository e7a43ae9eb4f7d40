//! Adapt-then-combine diffusion with a proximal coregularization step.
//!
//! Each iteration runs four barrier-separated phases over all nodes: adapt,
//! combine, regularizer-state update, prox. Every phase reads only the
//! outputs of the previous one, so the node order inside a phase is irrelevant.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Observation;
use crate::error::{Error, Result};
use crate::prox::prox;
use crate::regularization::{
    adaptive_p, build_prox_functions, RegularizerKind, RegularizerSpec, ReweightSource,
    ReweightState,
};
use crate::topology::{ClusteredTopology, CombinationWeights};

/// Entries beyond this magnitude count as divergence; their squares would
/// overflow the error accumulators.
pub const DIVERGENCE_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum AlgorithmVariant {
    /// A = C = I, η = 0.
    NonCooperativeLms,
    /// A = C = I with the coregularizer.
    RegularizedLms {
        regularizer: RegularizerSpec,
    },
    /// Intra-cluster diffusion, η = 0.
    DiffusionNoReg,
    ProximalDiffusion {
        regularizer: RegularizerSpec,
    },
}

impl AlgorithmVariant {
    pub fn cooperates(&self) -> bool {
        matches!(
            self,
            AlgorithmVariant::DiffusionNoReg | AlgorithmVariant::ProximalDiffusion { .. }
        )
    }

    /// The active regularizer; `None` when the prox step is the identity.
    pub fn regularizer(&self) -> Option<&RegularizerSpec> {
        match self {
            AlgorithmVariant::RegularizedLms { regularizer }
            | AlgorithmVariant::ProximalDiffusion { regularizer }
                if regularizer.eta > 0.0 =>
            {
                Some(regularizer)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AlgorithmVariant::RegularizedLms { regularizer }
            | AlgorithmVariant::ProximalDiffusion { regularizer } => regularizer.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub w: DVector<f64>,
    pub psi: DVector<f64>,
    pub phi: DVector<f64>,
}

impl AgentState {
    pub fn new(w: DVector<f64>) -> Self {
        Self {
            psi: w.clone(),
            phi: w.clone(),
            w,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// Number of completed iterations.
    pub iteration: usize,
    pub agents: Vec<AgentState>,
    pub reweight: Option<ReweightState>,
    /// Inter-cluster regularization factors used by the last prox step.
    pub p: DMatrix<f64>,
}

impl NetworkState {
    pub fn estimates(&self) -> Vec<DVector<f64>> {
        self.agents.iter().map(|a| a.w.clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IterationReport {
    /// max over nodes of ‖w − φ‖ / (ημ s √M), scaled by ε for reweighted ℓ1.
    pub max_shift_ratio: f64,
}

fn check_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidInput(format!(
            "{what} has dimension {got}, expected {want}"
        )));
    }
    Ok(())
}

/// ψₖ = wₖ + μₖ Σ_ℓ c_ℓk · innovation of node ℓ's data at wₖ.
pub fn adapt(
    k: usize,
    w: &DVector<f64>,
    data: &[Observation],
    c: &DMatrix<f64>,
    mu: f64,
) -> Result<DVector<f64>> {
    if c.nrows() != data.len() || k >= c.ncols() {
        return Err(Error::InvalidInput(format!(
            "node {k}: {} observations for a {}x{} data-weight matrix",
            data.len(),
            c.nrows(),
            c.ncols()
        )));
    }
    let mut psi = w.clone();
    for (l, obs) in data.iter().enumerate() {
        let weight = c[(l, k)];
        if weight == 0.0 {
            continue;
        }
        check_dim("observation", obs.dim(), w.len())?;
        if let Observation::Block { phi, r } = obs {
            check_dim("block response", r.len(), phi.nrows())?;
        }
        psi.axpy(mu * weight, &obs.innovation(w), 1.0);
    }
    Ok(psi)
}

/// ψ = Υ + μΦ̂ᵀ(r − Φ̂Υ).
pub fn adapt_block(
    upsilon: &DVector<f64>,
    phi_hat: &DMatrix<f64>,
    r: &DVector<f64>,
    mu: f64,
) -> Result<DVector<f64>> {
    check_dim("regressor columns", phi_hat.ncols(), upsilon.len())?;
    check_dim("response", r.len(), phi_hat.nrows())?;
    Ok(upsilon + phi_hat.tr_mul(&(r - phi_hat * upsilon)) * mu)
}

/// φₖ = Σ_ℓ a_ℓk ψ_ℓ.
pub fn combine(k: usize, psi: &[DVector<f64>], a: &DMatrix<f64>) -> DVector<f64> {
    let mut phi = DVector::zeros(psi[k].len());
    for (l, p) in psi.iter().enumerate() {
        let weight = a[(l, k)];
        if weight != 0.0 {
            phi.axpy(weight, p, 1.0);
        }
    }
    phi
}

/// wₖ[m] = prox(h_{k,m}, ημₖ, φₖ[m]) for every entry.
pub fn prox_step(
    k: usize,
    phi: &[DVector<f64>],
    alpha: &ReweightState,
    p: &DMatrix<f64>,
    eta: f64,
    mu: f64,
) -> Result<DVector<f64>> {
    let lambda = eta * mu;
    if lambda == 0.0 || alpha.neighbors[k].is_empty() {
        return Ok(phi[k].clone());
    }
    let hs = build_prox_functions(k, phi, alpha, p)?;
    let mut w = phi[k].clone();
    for (m, h) in hs.iter().enumerate() {
        w[m] = prox(h, lambda, phi[k][m])?.value;
    }
    Ok(w)
}

/// A configured network running one algorithm variant.
#[derive(Debug, Clone)]
pub struct Network<'a> {
    topo: &'a ClusteredTopology,
    weights: CombinationWeights,
    mu: Vec<f64>,
    variant: AlgorithmVariant,
}

impl<'a> Network<'a> {
    /// Non-cooperative variants replace A and C by the identity.
    pub fn new(
        topo: &'a ClusteredTopology,
        weights: &CombinationWeights,
        mu: Vec<f64>,
        variant: AlgorithmVariant,
    ) -> Result<Self> {
        let n = topo.n_nodes();
        if weights.n_nodes() != n || mu.len() != n {
            return Err(Error::InvalidInput(format!(
                "{n} nodes but {} weight rows and {} step sizes",
                weights.n_nodes(),
                mu.len()
            )));
        }
        if let Some(&m) = mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidStepsize(m));
        }
        variant.validate()?;
        let weights = if variant.cooperates() {
            weights.clone()
        } else {
            weights.without_combination()
        };
        Ok(Self {
            topo,
            weights,
            mu,
            variant,
        })
    }

    pub fn topology(&self) -> &ClusteredTopology {
        self.topo
    }

    pub fn weights(&self) -> &CombinationWeights {
        &self.weights
    }

    pub fn variant(&self) -> &AlgorithmVariant {
        &self.variant
    }

    pub fn initial_state(&self, w0: Vec<DVector<f64>>) -> Result<NetworkState> {
        if w0.len() != self.topo.n_nodes() {
            return Err(Error::InvalidInput(format!(
                "{} initial estimates for {} nodes",
                w0.len(),
                self.topo.n_nodes()
            )));
        }
        let dim = w0.first().map_or(0, |w| w.len());
        if dim == 0 {
            return Err(Error::InvalidDimension { got: 0, min: 1 });
        }
        for w in &w0 {
            check_dim("initial estimate", w.len(), dim)?;
        }
        let reweight = self
            .variant
            .regularizer()
            .map(|spec| ReweightState::new(self.topo, dim, spec));
        Ok(NetworkState {
            iteration: 0,
            agents: w0.into_iter().map(AgentState::new).collect(),
            reweight,
            p: self.weights.p.clone(),
        })
    }

    pub fn zero_state(&self, dim: usize) -> Result<NetworkState> {
        self.initial_state(vec![DVector::zeros(dim); self.topo.n_nodes()])
    }

    pub fn run_iteration(
        &self,
        state: &mut NetworkState,
        batch: &[Observation],
    ) -> Result<IterationReport> {
        let n = self.topo.n_nodes();
        if batch.len() != n {
            return Err(Error::InvalidInput(format!(
                "batch has {} observations for {n} nodes",
                batch.len()
            )));
        }
        let psi = (0..n)
            .map(|k| adapt(k, &state.agents[k].w, batch, &self.weights.c, self.mu[k]))
            .collect::<Result<Vec<_>>>()?;
        let phi: Vec<DVector<f64>> = (0..n).map(|k| combine(k, &psi, &self.weights.a)).collect();

        let mut report = IterationReport::default();
        let w_next = match (self.variant.regularizer(), state.reweight.as_mut()) {
            (Some(spec), Some(rw)) => {
                if spec.adaptive_p {
                    state.p = adaptive_p(&phi, self.topo, spec)?;
                }
                match (spec.kind, spec.reweight_source) {
                    (RegularizerKind::L1, _) => rw.refresh_alpha(spec),
                    (RegularizerKind::ReweightedL1, ReweightSource::Phi) => {
                        rw.refresh_alpha(spec);
                        rw.record_differences(&phi);
                    }
                    (RegularizerKind::ReweightedL1, ReweightSource::W) => {
                        let w: Vec<_> = state.agents.iter().map(|a| a.w.clone()).collect();
                        rw.record_differences(&w);
                        rw.refresh_alpha(spec);
                    }
                }
                let scale = match spec.kind {
                    RegularizerKind::L1 => 1.0,
                    RegularizerKind::ReweightedL1 => 1.0 / spec.epsilon,
                };
                let sqrt_m = (phi[0].len() as f64).sqrt();
                let mut w_next = Vec::with_capacity(n);
                for k in 0..n {
                    let w = prox_step(k, &phi, rw, &state.p, spec.eta, self.mu[k])?;
                    let s_k: f64 = rw.neighbors[k].iter().map(|&l| state.p[(k, l)]).sum();
                    let bound = spec.eta * self.mu[k] * s_k * sqrt_m * scale;
                    if bound > 0.0 {
                        let ratio = (&w - &phi[k]).norm() / bound;
                        report.max_shift_ratio = report.max_shift_ratio.max(ratio);
                    }
                    w_next.push(w);
                }
                w_next
            }
            _ => phi.clone(),
        };

        let iteration = state.iteration;
        for (k, (agent, ((w, ps), ph))) in state
            .agents
            .iter_mut()
            .zip(w_next.into_iter().zip(psi).zip(phi))
            .enumerate()
        {
            if !w
                .iter()
                .all(|v| v.is_finite() && v.abs() < DIVERGENCE_LIMIT)
            {
                return Err(Error::DivergenceDetected { iteration, node: k });
            }
            agent.w = w;
            agent.psi = ps;
            agent.phi = ph;
        }
        state.iteration += 1;
        Ok(report)
    }
}
