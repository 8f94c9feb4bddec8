//! Pipeline stages behind the `netrecon` subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::RunConfig;
use crate::data::{parse_observations_with_nodes, serialize_observations, validate, NodeIndex, ObservationMatrix, Violation};
use crate::error::{Error, Result};
use crate::gof::{ppc_pvalue, simulate_observations, GofReport, GofSummary};
use crate::math::mix_seed;
use crate::models::{Model, ParameterVector};
use crate::network::{marginal_edge_probabilities, sample_networks, sample_prior_network, AdjacencySample, EdgeMarginalTable};
use crate::sampler::{diagnostics, sample_parameters, Diagnostics, PosteriorDraws};

/// Stream offsets so each stage draws from its own sequence of the master seed.
const NETWORK_STREAM: u64 = 0x6e65_7477;
const GOF_STREAM: u64 = 0x676f_6621;
const SIMULATE_STREAM: u64 = 0x7369_6d75;

pub const TRACE_FILE: &str = "trace.csv";

/// Data and model resolved from a configuration.
pub struct Loaded {
    pub obs: ObservationMatrix,
    pub model: Model,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, text)
}

fn nodes_from_config(cfg: &RunConfig) -> Result<NodeIndex> {
    match &cfg.data.nodes {
        Some(p) => NodeIndex::from_csv(&read(p)?),
        None => Ok(NodeIndex::new()),
    }
}

/// Parses the data file and builds the model, without checking compatibility.
pub fn load(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| Error::Config("no data path: set [data] path or pass --data".into()))?;
    let obs = parse_observations_with_nodes(&read(path)?, cfg.data.format, nodes_from_config(cfg)?)?;
    let model = Model::new(cfg.model_spec(obs.nodes())?, obs.nodes())?;
    Ok(Loaded { obs, model })
}

/// Data/model compatibility problems; empty when the pair is usable.
pub fn cmd_validate(cfg: &RunConfig) -> Result<(Loaded, Vec<Violation>)> {
    let loaded = load(cfg)?;
    let violations = validate(&loaded.obs, loaded.model.spec());
    Ok((loaded, violations))
}

fn load_valid(cfg: &RunConfig) -> Result<Loaded> {
    let (loaded, violations) = cmd_validate(cfg)?;
    if let Some(v) = violations.first() {
        let more = violations.len() - 1;
        return Err(Error::Shape(if more > 0 {
            format!("{v} (and {more} more)")
        } else {
            v.to_string()
        }));
    }
    Ok(loaded)
}

/// Samples parameters; writes `trace.csv`, `diagnostics.json` and `nodes.csv`.
pub fn cmd_fit(cfg: &RunConfig) -> Result<(Loaded, PosteriorDraws, Diagnostics)> {
    let loaded = load_valid(cfg)?;
    let draws = sample_parameters(&loaded.model, &loaded.obs, &cfg.sampler)?;
    let diag = diagnostics(&draws);
    let dir = &cfg.output.dir;
    let mut trace = Vec::new();
    draws.write_trace(&mut trace)?;
    write(dir, TRACE_FILE, trace)?;
    write_json(dir, "diagnostics.json", &diag)?;
    write(dir, "nodes.csv", loaded.obs.nodes().to_csv())?;
    Ok((loaded, draws, diag))
}

fn trace_path(cfg: &RunConfig, trace: Option<&Path>) -> PathBuf {
    trace.map(Path::to_path_buf).unwrap_or_else(|| cfg.output.dir.join(TRACE_FILE))
}

fn load_trace(model: &Model, path: &Path) -> Result<PosteriorDraws> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    PosteriorDraws::read_trace(model.layout().clone(), std::io::BufReader::new(file))
}

fn write_networks(obs: &ObservationMatrix, nets: &[(usize, AdjacencySample)], per_draw: usize) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["draw", "sample", "label_i", "label_j", "k"])?;
    for (idx, (r, a)) in nets.iter().enumerate() {
        let s = (idx % per_draw).to_string();
        for (p, k) in a.edges() {
            w.write_record([
                &r.to_string(),
                &s,
                obs.nodes().label(p.i),
                obs.nodes().label(p.j),
                &k.to_string(),
            ])?;
        }
    }
    w.into_inner().map_err(|e| Error::io("networks", e.into_error()))
}

fn reconstruct(cfg: &RunConfig, loaded: &Loaded, draws: &PosteriorDraws) -> Result<EdgeMarginalTable> {
    let table = marginal_edge_probabilities(&loaded.model, draws, &loaded.obs)?;
    let mut buf = Vec::new();
    table.write_csv(loaded.obs.nodes(), cfg.output.threshold, &mut buf)?;
    write(&cfg.output.dir, "edges.csv", buf)?;
    let per = cfg.output.samples_per_theta;
    if per > 0 {
        let seed = mix_seed(cfg.sampler.seed, NETWORK_STREAM);
        let nets = sample_networks(&loaded.model, &loaded.obs, draws, per, seed)?;
        write(&cfg.output.dir, "networks.csv", write_networks(&loaded.obs, &nets, per)?)?;
    }
    Ok(table)
}

/// Writes `edges.csv` (and `networks.csv` when requested) from an existing trace.
pub fn cmd_reconstruct(cfg: &RunConfig, trace: Option<&Path>) -> Result<EdgeMarginalTable> {
    let loaded = load_valid(cfg)?;
    let draws = load_trace(&loaded.model, &trace_path(cfg, trace))?;
    reconstruct(cfg, &loaded, &draws)
}

/// `summary.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub data_model: String,
    pub network_model: String,
    pub edge_types: usize,
    pub nodes: usize,
    pub records: usize,
    pub parameters: BTreeMap<String, f64>,
    pub gof: GofSummary,
}

fn gof(cfg: &RunConfig, loaded: &Loaded, draws: &PosteriorDraws) -> Result<GofReport> {
    let report = ppc_pvalue(&loaded.model, &loaded.obs, draws, mix_seed(cfg.sampler.seed, GOF_STREAM))?;
    let dir = &cfg.output.dir;
    let mut buf = Vec::new();
    report.write_discrepancies(&mut buf)?;
    write(dir, "gof.csv", buf)?;
    let mut buf = Vec::new();
    report.write_predicted(loaded.obs.nodes(), &mut buf)?;
    write(dir, "predicted.csv", buf)?;
    let names = draws.layout().names();
    let summary = RunSummary {
        data_model: loaded.model.spec().data.name().into(),
        network_model: loaded.model.spec().network.name().into(),
        edge_types: loaded.model.edge_types(),
        nodes: loaded.obs.n(),
        records: loaded.obs.record_count(),
        parameters: names.into_iter().zip(draws.mean()).collect(),
        gof: report.summary(),
    };
    write_json(dir, "summary.json", &summary)?;
    Ok(report)
}

/// Writes `gof.csv`, `predicted.csv` and `summary.json` from an existing trace.
pub fn cmd_gof(cfg: &RunConfig, trace: Option<&Path>) -> Result<GofReport> {
    let loaded = load_valid(cfg)?;
    let draws = load_trace(&loaded.model, &trace_path(cfg, trace))?;
    gof(cfg, &loaded, &draws)
}

/// Fit, reconstruct, then (unless disabled) the posterior-predictive check.
pub fn cmd_run(cfg: &RunConfig) -> Result<(Diagnostics, Option<GofReport>)> {
    let (loaded, draws, diag) = cmd_fit(cfg)?;
    reconstruct(cfg, &loaded, &draws)?;
    let report = if cfg.output.gof { Some(gof(cfg, &loaded, &draws)?) } else { None };
    Ok((diag, report))
}

/// Ground truth and data produced by [`cmd_simulate`].
pub struct Simulated {
    pub model: Model,
    pub theta: ParameterVector,
    pub truth: AdjacencySample,
    pub obs: ObservationMatrix,
}

/// Draws a network from the prior at the configured parameters (missing blocks drawn from
/// their priors), then measurements of it. Writes `data.csv`, `truth.csv`, `nodes.csv` and
/// `params.json`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<Simulated> {
    let n = cfg
        .simulate
        .nodes
        .ok_or_else(|| Error::Config("no node count: set [simulate] nodes or pass --nodes".into()))?;
    let nodes = NodeIndex::numbered(n);
    let model = Model::new(cfg.model_spec(&nodes)?, &nodes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.sampler.seed, SIMULATE_STREAM));
    let layout = model.layout().clone();
    for name in cfg.simulate.parameters.keys() {
        if layout.find(name).is_none() {
            return Err(Error::Model(format!("unknown parameter block {name:?}")));
        }
    }
    let missing = layout.blocks().iter().any(|b| !cfg.simulate.parameters.contains_key(&b.name));
    let mut values = if missing {
        model.sample_prior(&mut rng)?.values().to_vec()
    } else {
        vec![0.0; layout.len()]
    };
    let mut theta = ParameterVector::new_unchecked(layout.clone(), std::mem::take(&mut values))?;
    for (name, v) in &cfg.simulate.parameters {
        theta.set(name, v.as_slice())?;
    }
    theta.check_domain()?;
    let truth = sample_prior_network(&model, &theta, &mut rng)?;
    let obs = simulate_observations(&model, &theta, &nodes, &truth, &mut rng)?;

    let dir = &cfg.output.dir;
    write(dir, "data.csv", serialize_observations(&obs))?;
    write(dir, "nodes.csv", nodes.to_csv())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label_i", "label_j", "k"])?;
    for (p, k) in truth.edges() {
        w.write_record([nodes.label(p.i), nodes.label(p.j), &k.to_string()])?;
    }
    write(dir, "truth.csv", w.into_inner().map_err(|e| Error::io("truth", e.into_error()))?)?;
    let params: BTreeMap<&str, &[f64]> = layout
        .blocks()
        .iter()
        .map(|b| (b.name.as_str(), theta.get(&b.name).unwrap_or(&[])))
        .collect();
    write_json(dir, "params.json", &params)?;
    Ok(Simulated { model, theta, truth, obs })
}
