//! JSON scenario files: topology, weights, signal model, variants and
//! Monte-Carlo settings. Random parameters are resolved from the seed into
//! explicit values so a resolved scenario replays bit-identically.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::Covariance;
use crate::data::{
    experiment_rng, standard_normal, LmsSignalModel, Point, Schedule, SignalModel, SpectrumModel,
    Stage,
};
use crate::engine::AlgorithmVariant;
use crate::error::{Error, Result};
use crate::topology::{uniform_weights, validate, ClusteredTopology, CombinationWeights};

const PRESETS: &[(&str, &str)] = &[
    ("fig3", include_str!("../../../scenarios/fig3.json")),
    ("fig5", include_str!("../../../scenarios/fig5.json")),
    ("fig6", include_str!("../../../scenarios/fig6.json")),
    ("spectrum", include_str!("../../../scenarios/spectrum.json")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn preset_source(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn preset(name: &str) -> Result<Scenario> {
    let src =
        preset_source(name).ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
    Scenario::from_json(src)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Kept as raw JSON so malformed ids can be reported per node.
    pub cluster_of: Vec<Value>,
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsConfig {
    /// `"uniform"`.
    Directive(String),
    Explicit {
        c: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        rho: Vec<Vec<f64>>,
    },
}

impl Default for WeightsConfig {
    fn default() -> Self {
        WeightsConfig::Directive("uniform".into())
    }
}

/// A per-node quantity: one value for all, a list, or a uniform draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerNode {
    Constant(f64),
    List(Vec<f64>),
    Uniform { uniform: [f64; 2] },
}

impl PerNode {
    fn resolve(&self, n: usize, what: &str, rng: &mut crate::data::DataRng) -> Result<Vec<f64>> {
        match self {
            PerNode::Constant(v) => Ok(vec![*v; n]),
            PerNode::List(v) if v.len() == n => Ok(v.clone()),
            PerNode::List(v) => Err(Error::Config(format!(
                "{what}: {} values for {n} nodes",
                v.len()
            ))),
            PerNode::Uniform { uniform: [lo, hi] } if lo <= hi => {
                Ok((0..n).map(|_| rng.random_range(*lo..=*hi)).collect())
            }
            PerNode::Uniform { .. } => Err(Error::Config(format!(
                "{what}: uniform range must have lo <= hi"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaseVector {
    Explicit(Vec<f64>),
    /// `"gaussian"`: entries N(0,1) from the experiment seed.
    Drawn(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub start: usize,
    /// Per-cluster offsets added to the base vector.
    pub deltas: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalConfig {
    Lms {
        dim: usize,
        regressor_variance: PerNode,
        noise_variance: PerNode,
        base: BaseVector,
        stages: Vec<StageConfig>,
    },
    Spectrum {
        n_basis: usize,
        n_freq: usize,
        basis_variance: f64,
        nodes: Vec<Point>,
        primary_users: Vec<Point>,
        interference_sources: Vec<Point>,
        /// Censoring threshold ℓ₀ on the jittered path loss.
        threshold: f64,
        #[serde(default = "default_jitter")]
        jitter: f64,
        noise_std: PerNode,
        /// Per-cluster stacked PU and IS basis weights.
        combination: Vec<Vec<f64>>,
    },
}

fn default_jitter() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSizes {
    Uniform(f64),
    PerNode(Vec<f64>),
}

impl StepSizes {
    fn resolve(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            StepSizes::Uniform(m) => Ok(vec![*m; n]),
            StepSizes::PerNode(v) if v.len() == n => Ok(v.clone()),
            StepSizes::PerNode(v) => Err(Error::Config(format!(
                "{} step sizes for {n} nodes",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub name: String,
    #[serde(flatten)]
    pub variant: AlgorithmVariant,
    /// Overrides the scenario step sizes for this variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<StepSizes>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaGrid {
    List(Vec<f64>),
    Linspace {
        start: f64,
        stop: f64,
        points: usize,
    },
}

impl EtaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            EtaGrid::List(v) => v.clone(),
            EtaGrid::Linspace { points: 0, .. } => vec![],
            EtaGrid::Linspace {
                start, points: 1, ..
            } => vec![*start],
            EtaGrid::Linspace {
                start,
                stop,
                points,
            } => (0..*points)
                .map(|i| start + (stop - start) * i as f64 / (*points - 1) as f64)
                .collect(),
        }
    }
}

/// Expands each listed regularized variant into one copy per η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eta: EtaGrid,
    pub variants: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub topology: TopologyConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    pub signal: SignalConfig,
    pub mu: StepSizes,
    pub variants: Vec<VariantConfig>,
    pub iterations: usize,
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// A scenario with topology, weights and signal model built.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// Copy with every random parameter replaced by its realized value.
    pub scenario: Scenario,
    pub topology: ClusteredTopology,
    pub weights: CombinationWeights,
    pub signal: SignalModel,
    pub variants: Vec<ResolvedVariant>,
}

#[derive(Debug, Clone)]
pub struct ResolvedVariant {
    pub name: String,
    pub variant: AlgorithmVariant,
    pub mu: Vec<f64>,
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn parse_clusters(raw: &[Value]) -> Result<Vec<usize>> {
    raw.iter()
        .enumerate()
        .map(|(k, v)| {
            v.as_u64().map(|q| q as usize).ok_or_else(|| {
                Error::Config(format!(
                    "node {k}: cluster id {v} is not a nonnegative integer"
                ))
            })
        })
        .collect()
}

impl Scenario {
    /// Parses a scenario, or the `scenario` field of a run manifest.
    pub fn from_json(src: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(src)?;
        let inner = match value.get("scenario") {
            Some(s) if value.get("topology").is_none() => s.clone(),
            _ => value,
        };
        let scenario: Scenario = serde_json::from_value(inner).or_else(|_| {
            // re-parse from text for line/column diagnostics
            serde_json::from_str::<Scenario>(src)
        })?;
        scenario.check()?;
        Ok(scenario)
    }

    /// A path, or a preset name when no such file exists.
    pub fn load(path: &str) -> Result<Self> {
        if !Path::new(path).exists() {
            if let Some(src) = preset_source(path) {
                return Self::from_json(src);
            }
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("variant list is empty".into()));
        }
        if self.iterations == 0 || self.runs == 0 {
            return Err(Error::Config("iterations and runs must be positive".into()));
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("duplicate variant name '{}'", w[0])));
        }
        if let Some(sweep) = &self.sweep {
            for name in &sweep.variants {
                let v = self
                    .variants
                    .iter()
                    .find(|v| &v.name == name)
                    .ok_or_else(|| {
                        Error::Config(format!("sweep names unknown variant '{name}'"))
                    })?;
                if !matches!(
                    v.variant,
                    AlgorithmVariant::ProximalDiffusion { .. }
                        | AlgorithmVariant::RegularizedLms { .. }
                ) {
                    return Err(Error::Config(format!(
                        "sweep variant '{name}' has no regularizer"
                    )));
                }
            }
            if sweep.eta.values().iter().any(|e| !(*e >= 0.0)) {
                return Err(Error::Config("sweep η values must be nonnegative".into()));
            }
        }
        parse_clusters(&self.topology.cluster_of)?;
        Ok(())
    }

    /// Variants after sweep expansion, as `(name, config)` pairs.
    pub fn expanded_variants(&self) -> Vec<VariantConfig> {
        let mut out = self.variants.clone();
        if let Some(sweep) = &self.sweep {
            for name in &sweep.variants {
                let base = self.variants.iter().find(|v| &v.name == name).unwrap();
                for eta in sweep.eta.values() {
                    let mut v = base.clone();
                    v.name = sweep_name(name, eta);
                    match &mut v.variant {
                        AlgorithmVariant::ProximalDiffusion { regularizer }
                        | AlgorithmVariant::RegularizedLms { regularizer } => regularizer.eta = eta,
                        _ => unreachable!(),
                    }
                    out.push(v);
                }
            }
        }
        out
    }

    pub fn resolve(&self) -> Result<Resolved> {
        let clusters = parse_clusters(&self.topology.cluster_of)?;
        let n = clusters.len();
        let topology =
            ClusteredTopology::new(&clusters, self.topology.edges.iter().map(|e| (e[0], e[1])))?;
        let weights = match &self.weights {
            WeightsConfig::Directive(d) if d == "uniform" => uniform_weights(&topology),
            WeightsConfig::Directive(d) => {
                return Err(Error::Config(format!("unknown weights directive '{d}'")))
            }
            WeightsConfig::Explicit { c, a, rho } => CombinationWeights::new(
                matrix(c, n, "c")?,
                matrix(a, n, "a")?,
                matrix(rho, n, "rho")?,
            ),
        };
        let violations = validate(&topology, &weights);
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Config(format!(
                "invalid weights: {}",
                list.join("; ")
            )));
        }

        let mut scenario = self.clone();
        let mut rng = experiment_rng(self.seed);
        let n_clusters = topology.n_clusters();
        let signal = match &mut scenario.signal {
            SignalConfig::Lms {
                dim,
                regressor_variance,
                noise_variance,
                base,
                stages,
            } => {
                let base_vec = match base {
                    BaseVector::Explicit(v) => v.clone(),
                    BaseVector::Drawn(s) if s == "gaussian" => {
                        (0..*dim).map(|_| standard_normal(&mut rng)).collect()
                    }
                    BaseVector::Drawn(s) => {
                        return Err(Error::Config(format!("unknown base directive '{s}'")))
                    }
                };
                if base_vec.len() != *dim {
                    return Err(Error::Config(format!(
                        "base vector has {} entries, dim is {dim}",
                        base_vec.len()
                    )));
                }
                let sx = regressor_variance.resolve(n, "regressor_variance", &mut rng)?;
                let sz = noise_variance.resolve(n, "noise_variance", &mut rng)?;
                let mut built = Vec::with_capacity(stages.len());
                for st in stages.iter() {
                    if st.deltas.len() != n_clusters {
                        return Err(Error::Config(format!(
                            "stage at {}: {} deltas for {n_clusters} clusters",
                            st.start,
                            st.deltas.len()
                        )));
                    }
                    let optima = st
                        .deltas
                        .iter()
                        .map(|d| {
                            if d.len() != *dim {
                                return Err(Error::Config(format!(
                                    "stage at {}: delta of length {} for dim {dim}",
                                    st.start,
                                    d.len()
                                )));
                            }
                            Ok(DVector::from_iterator(
                                *dim,
                                base_vec.iter().zip(d).map(|(b, d)| b + d),
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    built.push(Stage {
                        start: st.start,
                        optima,
                    });
                }
                let model = LmsSignalModel::new(sx.clone(), sz.clone(), Schedule::new(built)?)?;
                *base = BaseVector::Explicit(base_vec);
                *regressor_variance = PerNode::List(sx);
                *noise_variance = PerNode::List(sz);
                SignalModel::Lms(model)
            }
            SignalConfig::Spectrum {
                n_basis,
                n_freq,
                basis_variance,
                nodes,
                primary_users,
                interference_sources,
                threshold,
                jitter,
                noise_std,
                combination,
            } => {
                if nodes.len() != n {
                    return Err(Error::Config(format!(
                        "{} node positions for {n} nodes",
                        nodes.len()
                    )));
                }
                let noise = noise_std.resolve(n, "noise_std", &mut rng)?;
                let model = SpectrumModel::new(
                    *n_basis,
                    *n_freq,
                    *basis_variance,
                    nodes.clone(),
                    primary_users.clone(),
                    interference_sources.clone(),
                    topology.clusters().to_vec(),
                    *threshold,
                    *jitter,
                    noise.clone(),
                    combination
                        .iter()
                        .map(|c| DVector::from_column_slice(c))
                        .collect(),
                )?;
                *noise_std = PerNode::List(noise);
                SignalModel::Spectrum(model)
            }
        };

        let base_mu = self.mu.resolve(n)?;
        let variants = self
            .expanded_variants()
            .into_iter()
            .map(|v| {
                v.variant.validate()?;
                let mu = match &v.mu {
                    Some(m) => m.resolve(n)?,
                    None => base_mu.clone(),
                };
                if let Some(&m) = mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
                    return Err(Error::InvalidStepsize(m));
                }
                Ok(ResolvedVariant {
                    name: v.name,
                    variant: v.variant,
                    mu,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let (SignalModel::Lms(_), Some(v)) = (
            &signal,
            variants.iter().find(|v| {
                v.variant.regularizer().is_some_and(|r| r.adaptive_p) && signal.dim() < 2
            }),
        ) {
            return Err(Error::Config(format!(
                "variant '{}': adaptive p needs dimension at least 2",
                v.name
            )));
        }

        Ok(Resolved {
            scenario,
            topology,
            weights,
            signal,
            variants,
        })
    }
}

pub fn sweep_name(base: &str, eta: f64) -> String {
    format!("{base}@eta={eta}")
}

impl Resolved {
    /// Regressor covariances for the stability check. The spectrum model
    /// uses the uncensored mean losses, which bounds the true second moment
    /// from above and so gives conservative step-size bounds.
    pub fn covariances(&self) -> Vec<Covariance> {
        match &self.signal {
            SignalModel::Lms(m) => m
                .sigma_x2
                .iter()
                .map(|&s| Covariance::Isotropic(s))
                .collect(),
            SignalModel::Spectrum(m) => {
                let gram = m.basis().tr_mul(m.basis());
                (0..m.node_pos.len())
                    .map(|k| {
                        let l = DVector::from_column_slice(m.mean_loss(k));
                        Covariance::Full((&l * l.transpose()).kronecker(&gram))
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "name": "tiny",
        "topology": {"cluster_of": [0, 0, 1], "edges": [[0, 1], [1, 2]]},
        "signal": {"type": "lms", "dim": 2, "regressor_variance": {"uniform": [0.8, 1.2]},
                   "noise_variance": 0.01, "base": "gaussian",
                   "stages": [{"start": 0, "deltas": [[0, 0], [1, 0]]}]},
        "mu": 0.05,
        "variants": [{"name": "d", "algorithm": "diffusion_no_reg"},
                     {"name": "p", "algorithm": "proximal_diffusion",
                      "regularizer": {"kind": "l1", "eta": 0.1}}],
        "iterations": 10, "runs": 2, "seed": 3
    }"#;

    #[test]
    fn parses_and_resolves() {
        let s = Scenario::from_json(TINY).unwrap();
        let r = s.resolve().unwrap();
        assert_eq!(r.topology.n_clusters(), 2);
        assert_eq!(r.variants.len(), 2);
        match &r.scenario.signal {
            SignalConfig::Lms {
                base: BaseVector::Explicit(b),
                regressor_variance: PerNode::List(v),
                ..
            } => {
                assert_eq!(b.len(), 2);
                assert!(v.iter().all(|x| (0.8..=1.2).contains(x)));
            }
            other => panic!("{other:?}"),
        }
        // resolved copy replays to the same model
        let again = r.scenario.resolve().unwrap();
        assert_eq!(again.signal, r.signal);
        let json = serde_json::to_string(&r.scenario).unwrap();
        assert_eq!(Scenario::from_json(&json).unwrap(), r.scenario);
    }

    #[test]
    fn malformed_cluster_names_node() {
        let bad = TINY.replace("[0, 0, 1]", "[0, -1, 1]");
        let err = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("node 1"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let bad = TINY.replace("\"mu\": 0.05", "\"mu\": 0.05,,");
        let err = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn rejects_empty_variants_and_zero_runs() {
        let v: Value = serde_json::from_str(TINY).unwrap();
        let mut a = v.clone();
        a["variants"] = Value::Array(vec![]);
        assert!(Scenario::from_json(&a.to_string()).is_err());
        let mut b = v;
        b["runs"] = 0.into();
        assert!(Scenario::from_json(&b.to_string()).is_err());
    }

    #[test]
    fn disconnected_cluster_rejected() {
        let bad = TINY.replace("[[0, 1], [1, 2]]", "[[1, 2]]");
        let err = Scenario::from_json(&bad)
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(err.contains("cluster"), "{err}");
    }

    #[test]
    fn presets_load() {
        let fig3 = preset("fig3").unwrap();
        let r = fig3.resolve().unwrap();
        assert_eq!(r.topology.n_nodes(), 20);
        let sizes: Vec<usize> = (0..3)
            .map(|q| r.topology.cluster_members(q).len())
            .collect();
        assert_eq!(sizes, vec![10, 5, 5]);
        assert_eq!(r.signal.dim(), 18);
        assert_eq!(fig3.runs, 200);
        let starts: Vec<usize> = r
            .signal
            .schedule()
            .stages()
            .iter()
            .map(|s| s.start)
            .collect();
        assert_eq!(starts, vec![0, 500, 1000]);
        assert!(r.variants.iter().all(|v| v.mu.iter().all(|&m| m == 0.02)));
        assert_eq!(r.signal.schedule().distinct_entries(0), vec![0, 6]);
        let etas: Vec<(f64, f64)> = r
            .variants
            .iter()
            .filter_map(|v| v.variant.regularizer())
            .map(|s| (s.eta, s.epsilon))
            .collect();
        assert!(etas.contains(&(0.06, 0.1)) && etas.contains(&(0.04, 0.1)));

        let fig6 = preset("fig6").unwrap().resolve().unwrap();
        assert!(fig6
            .variants
            .iter()
            .filter_map(|v| v.variant.regularizer())
            .all(|s| s.adaptive_p && s.adaptive_p_scale == 1.0));
        for name in preset_names() {
            preset(name).unwrap().resolve().unwrap();
        }
    }

    #[test]
    fn stage_two_delta() {
        let r = preset("fig3").unwrap().resolve().unwrap();
        let s = r.signal.schedule();
        let d = s.optimum(1, 500) - s.optimum(0, 500);
        let mut want = vec![0.0; 18];
        want[..3].fill(-1.0);
        want[3] = 1.0;
        assert!((d - DVector::from_vec(want)).amax() < 1e-12);
        let mut first = DVector::zeros(18);
        first[0] = -1.0;
        assert!((s.optimum(1, 499) - s.optimum(0, 499) - first).amax() < 1e-12);
    }

    #[test]
    fn sweep_expands() {
        let mut s = Scenario::from_json(TINY).unwrap();
        s.sweep = Some(SweepConfig {
            eta: EtaGrid::Linspace {
                start: 0.0,
                stop: 0.1,
                points: 3,
            },
            variants: vec!["p".into()],
        });
        let names: Vec<String> = s.expanded_variants().into_iter().map(|v| v.name).collect();
        assert_eq!(names, vec!["d", "p", "p@eta=0", "p@eta=0.05", "p@eta=0.1"]);
        s.sweep.as_mut().unwrap().variants = vec!["d".into()];
        assert!(s.check().is_err());
    }
}
