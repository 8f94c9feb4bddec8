//! Run configuration file (TOML).
//!
//! Precedence: command-line flags, then the file, then built-in defaults. Relative paths in
//! the file resolve against the file's directory; paths given as flags resolve against the
//! working directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{DataFormat, NodeIndex};
use crate::error::{Error, Result};
use crate::models::{DataModelKind, ModelSpec, NetworkModelKind, Prior, DEFAULT_SIGMA};
use crate::sampler::SamplerSettings;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: DataFormat,
    /// Node list (`index,label` CSV); nodes without records are otherwise unknown.
    pub nodes: Option<PathBuf>,
}

fn default_edge_types() -> usize {
    2
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

/// `[model]`: a model specification whose group labels live in a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub data: DataModelKind,
    #[serde(default)]
    pub network: NetworkModelKind,
    #[serde(default = "default_edge_types")]
    pub edge_types: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub default_trials: Option<u32>,
    /// `label,group` CSV for the stochastic block model.
    pub groups: Option<PathBuf>,
    #[serde(default)]
    pub priors: BTreeMap<String, Prior>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_threshold() -> f64 {
    1e-4
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Edge probabilities below this are omitted from `edges.csv`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_true")]
    pub gof: bool,
    /// Networks sampled per parameter draw into `networks.csv`; 0 disables.
    #[serde(default)]
    pub samples_per_theta: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            threshold: default_threshold(),
            gof: true,
            samples_per_theta: 0,
        }
    }
}

/// A parameter block value: one number (broadcast) or one per element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl BlockValue {
    pub fn as_slice(&self) -> &[f64] {
        match self {
            BlockValue::Scalar(v) => std::slice::from_ref(v),
            BlockValue::Vector(v) => v,
        }
    }
}

/// `[simulate]`: synthetic data generation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub nodes: Option<usize>,
    /// Block values; blocks left out are drawn from the prior.
    #[serde(default)]
    pub parameters: BTreeMap<String, BlockValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub data: DataSection,
    pub model: ModelSection,
    #[serde(default)]
    pub sampler: SamplerSettings,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RunConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.data.path.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.data.nodes.as_mut() {
            resolve(p);
        }
        if let Some(p) = cfg.model.groups.as_mut() {
            resolve(p);
        }
        resolve(&mut cfg.output.dir);
        Ok(cfg)
    }

    /// Model specification with group labels resolved against `nodes`.
    pub fn model_spec(&self, nodes: &NodeIndex) -> Result<ModelSpec> {
        let m = &self.model;
        let groups = match &m.groups {
            None => None,
            Some(path) => Some(read_groups(path, nodes)?),
        };
        Ok(ModelSpec {
            data: m.data,
            network: m.network,
            edge_types: m.edge_types,
            sigma: m.sigma,
            default_trials: m.default_trials,
            groups,
            priors: m.priors.clone(),
        })
    }
}

/// Reads `label,group` rows; every node needs a group.
pub fn read_groups(path: &Path, nodes: &NodeIndex) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut groups = vec![None; nodes.len()];
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let (Some(label), Some(group)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Parse { line, message: "expected label,group".into() });
        };
        let g: usize = group.parse().map_err(|_| Error::Parse {
            line,
            message: format!("group {group:?} is not a non-negative integer"),
        })?;
        let i = nodes.get(label).ok_or_else(|| Error::Parse {
            line,
            message: format!("unknown node {label:?}"),
        })?;
        groups[i] = Some(g);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, g)| g.ok_or_else(|| Error::Config(format!("node {:?} has no group", nodes.label(i)))))
        .collect()
}
