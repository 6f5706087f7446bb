//! JSON experiment configuration, dotted-key overrides and canned presets.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::network::{self, Graph};
use crate::presets;
use crate::sensing::{Hypothesis, LinearModelConfig, SigmaSpec};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Nl,
    L,
    Central,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    Ring { n: usize },
    Complete { n: usize },
    Path { n: usize },
    RandomGeometric { n: usize, radius: f64, seed: u64 },
    EdgeList { path: String },
}

impl GraphSpec {
    /// Relative edge-list paths are resolved against `base`.
    pub fn build(&self, base: Option<&Path>) -> Result<Graph> {
        match self {
            GraphSpec::Ring { n } => network::build_ring(*n),
            GraphSpec::Complete { n } => network::build_complete(*n),
            GraphSpec::Path { n } => network::build_path(*n),
            GraphSpec::RandomGeometric { n, radius, seed } => network::build_random_geometric(*n, *radius, *seed),
            GraphSpec::EdgeList { path } => {
                let p = Path::new(path);
                let full = match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p.to_path_buf(),
                };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::InvalidInput(format!("cannot read edge list {}: {e}", full.display())))?;
                Graph::from_edge_list(&text)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Per-agent `H_n` (lists of rows) and noise covariances.
    Linear {
        #[serde(rename = "H")]
        h: Vec<Vec<Vec<f64>>>,
        #[serde(rename = "Sigma")]
        sigma: SigmaSpec,
    },
    /// Ten agents sensing `sin(theta_i + theta_j)` pairs.
    Trig10 { noise_variance: f64 },
    /// `n1` of the agents observe `h theta + noise`, the rest observe pure noise.
    Scalar { n1: usize, h: f64, sigma2: f64 },
}

impl ModelSpec {
    pub fn linear_config(&self) -> Option<LinearModelConfig> {
        match self {
            ModelSpec::Linear { h, sigma } => {
                Some(LinearModelConfig { h: h.clone(), sigma: sigma.clone(), theta_star: None, hypothesis: None })
            }
            _ => None,
        }
    }
}

/// Step-size parameters. Unused fields are ignored by the selected algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    /// Innovation gain numerator.
    pub a: f64,
    /// Consensus gain numerator; defaults to `a` for the linear detector.
    #[serde(default)]
    pub b: Option<f64>,
    /// Consensus decay exponent of the nonlinear detector.
    #[serde(default)]
    pub tau2: Option<f64>,
    /// Decay exponent of the linear detector.
    #[serde(default)]
    pub delta2: Option<f64>,
    /// Fusion-center gain.
    #[serde(default)]
    pub g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    pub algorithm: Algorithm,
    pub graph: GraphSpec,
    pub model: ModelSpec,
    /// Required under H1.
    #[serde(default)]
    pub theta_star: Option<Vec<f64>>,
    #[serde(default = "default_hypothesis")]
    pub hypothesis: Hypothesis,
    pub schedule: ScheduleSpec,
    /// Refresh period of the linear detector; defaults to the minimum.
    #[serde(default)]
    pub k: Option<usize>,
    /// Consensus weight; defaults to `2/(lambda_2 + lambda_N)`.
    #[serde(default)]
    pub delta: Option<f64>,
    pub eta: f64,
    pub horizon: usize,
    pub trials: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Clamp nonlinear estimates to the model's parameter box.
    #[serde(default)]
    pub project: bool,
    #[serde(default)]
    pub allow_assumption_violations: bool,
}

fn default_version() -> u32 {
    CONFIG_VERSION
}
fn default_hypothesis() -> Hypothesis {
    Hypothesis::H1
}
fn default_stride() -> usize {
    DEFAULT_STRIDE
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidInput(format!("unsupported config version {}", self.version)));
        }
        if self.trials == 0 || self.horizon == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter("trials, horizon and stride must be positive".into()));
        }
        if !self.eta.is_finite() {
            return Err(Error::InvalidParameter("eta must be finite".into()));
        }
        if self.hypothesis == Hypothesis::H1 && self.theta_star.is_none() {
            return Err(Error::InvalidInput("theta_star is required under H1".into()));
        }
        let s = &self.schedule;
        match self.algorithm {
            Algorithm::Nl => {
                if s.b.is_none() || s.tau2.is_none() {
                    return Err(Error::InvalidInput("the nl algorithm needs schedule.b and schedule.tau2".into()));
                }
            }
            Algorithm::L => {
                if s.delta2.is_none() {
                    return Err(Error::InvalidInput("the l algorithm needs schedule.delta2".into()));
                }
                if matches!(self.model, ModelSpec::Trig10 { .. }) {
                    return Err(Error::InvalidInput("the l algorithm needs a linear model".into()));
                }
            }
            Algorithm::Central => {
                if s.g.is_none() {
                    return Err(Error::InvalidInput("the central algorithm needs schedule.g".into()));
                }
                if !matches!(self.model, ModelSpec::Scalar { .. }) {
                    return Err(Error::InvalidInput("the central algorithm needs a scalar model".into()));
                }
            }
        }
        Ok(())
    }

    /// Applies `key.sub=value` overrides. Values parse as JSON when possible
    /// and as bare strings otherwise. Every key must already exist.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self)?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("override `{item}` is not key=value")))?;
            let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut v, key, value)?;
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canned experiment by name.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "nl_vib" => Ok(nl_vib()),
            "l_vic" => Ok(l_vic()),
            other => Err(Error::InvalidInput(format!("unknown experiment `{other}`; expected nl_vib or l_vic"))),
        }
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::InvalidInput(format!("`{key}`: `{part}` is not inside an object")))?;
        if !obj.contains_key(*part) {
            return Err(Error::InvalidInput(format!("unknown config key `{key}`")));
        }
        if i + 1 == parts.len() {
            obj.insert((*part).to_string(), value);
            return Ok(());
        }
        cur = obj.get_mut(*part).expect("checked");
    }
    Err(Error::InvalidInput("empty override key".into()))
}

/// Trigonometric benchmark on a random geometric graph.
pub fn nl_vib() -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        algorithm: Algorithm::Nl,
        graph: GraphSpec::RandomGeometric { n: 10, radius: presets::TRIG_RADIUS, seed: presets::TRIG_GRAPH_SEED },
        model: ModelSpec::Trig10 { noise_variance: presets::TRIG_NOISE_VARIANCE },
        theta_star: Some(presets::trig_theta_star().iter().copied().collect()),
        hypothesis: Hypothesis::H1,
        schedule: ScheduleSpec {
            a: presets::TRIG_A,
            b: Some(presets::TRIG_B),
            tau2: Some(presets::TRIG_TAU2),
            delta2: None,
            g: None,
        },
        k: None,
        delta: None,
        eta: presets::TRIG_ETA,
        horizon: presets::TRIG_HORIZON,
        trials: 2000,
        stride: DEFAULT_STRIDE,
        seed: DEFAULT_SEED,
        project: true,
        allow_assumption_violations: false,
    }
}

/// Ten-agent ring with the linear model, run with the simulation schedule.
pub fn l_vic() -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        algorithm: Algorithm::L,
        graph: GraphSpec::Ring { n: 10 },
        model: ModelSpec::Linear {
            h: presets::RING_ROWS.iter().map(|r| vec![r.to_vec()]).collect(),
            sigma: SigmaSpec::Scalar(presets::RING_NOISE_VARIANCE),
        },
        theta_star: Some(presets::ring_theta_star().iter().copied().collect()),
        hypothesis: Hypothesis::H1,
        schedule: ScheduleSpec {
            a: presets::RING_SIM_A,
            b: Some(presets::RING_SIM_B),
            tau2: None,
            delta2: Some(presets::RING_DELTA2),
            g: None,
        },
        k: Some(presets::RING_K),
        delta: None,
        eta: presets::RING_QUOTED_ETA,
        horizon: 10_000,
        trials: 2000,
        stride: 20,
        seed: DEFAULT_SEED,
        project: false,
        allow_assumption_violations: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in ["nl_vib", "l_vic"] {
            let c = ExperimentConfig::preset(name).unwrap();
            let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
            assert_eq!(c, back);
        }
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(ExperimentConfig::preset("nope"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn unknown_field_rejected() {
        let mut v = serde_json::to_value(l_vic()).unwrap();
        v["schedule"]["alpha"] = Value::from(1.0);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
        let mut v = serde_json::to_value(l_vic()).unwrap();
        v["trails"] = Value::from(3);
        assert!(ExperimentConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn defaults_applied() {
        let mut v = serde_json::to_value(l_vic()).unwrap();
        let o = v.as_object_mut().unwrap();
        o.remove("seed");
        o.remove("stride");
        o.remove("version");
        let c = ExperimentConfig::from_json(&v.to_string()).unwrap();
        assert_eq!((c.seed, c.stride, c.version), (42, 10, 1));
    }

    #[test]
    fn overrides() {
        let c = l_vic()
            .with_overrides(&["trials=7".into(), "schedule.a=11".into(), "graph.type=complete".into()])
            .unwrap();
        assert_eq!(c.trials, 7);
        assert_eq!(c.schedule.a, 11.0);
        assert_eq!(c.graph, GraphSpec::Complete { n: 10 });
        assert!(l_vic().with_overrides(&["schedule.alpha=1".into()]).is_err());
        assert!(l_vic().with_overrides(&["trials=abc".into()]).is_err());
        assert!(l_vic().with_overrides(&["trials".into()]).is_err());
        assert!(l_vic().with_overrides(&["trials=0".into()]).is_err());
    }

    #[test]
    fn algorithm_requirements() {
        let mut c = nl_vib();
        c.schedule.tau2 = None;
        assert!(c.validate().is_err());
        let mut c = l_vic();
        c.algorithm = Algorithm::Central;
        c.schedule.g = Some(2.0);
        assert!(c.validate().is_err());
        let mut c = l_vic();
        c.hypothesis = Hypothesis::H1;
        c.theta_star = None;
        assert!(c.validate().is_err());
    }

    #[test]
    fn edge_list_graph() {
        let dir = tempfile::tempdir().unwrap();
        let g = network::build_ring(5).unwrap();
        std::fs::write(dir.path().join("g.txt"), g.to_edge_list()).unwrap();
        let spec = GraphSpec::EdgeList { path: "g.txt".into() };
        assert_eq!(spec.build(Some(dir.path())).unwrap(), g);
    }
}
