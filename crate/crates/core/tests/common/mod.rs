#![allow(dead_code)]

use netrecon::data::{all_pairs, NodeIndex, Observation, ObservationMatrix, Pair};
use netrecon::gof::simulate_observations;
use netrecon::math::log_sum_exp;
use netrecon::models::{DataModelKind, Model, ModelSpec, NetworkModelKind, ParameterVector};
use netrecon::network::{sample_prior_network, AdjacencySample};
use rand::Rng;

pub fn model(data: DataModelKind, network: NetworkModelKind, k: usize, n: usize) -> Model {
    let mut spec = ModelSpec::new(data, network).with_edge_types(k);
    if matches!(data, DataModelKind::Binomial | DataModelKind::NodeBinomial) {
        spec.default_trials = Some(6);
    }
    if network == NetworkModelKind::StochasticBlock {
        spec.groups = Some((0..n).map(|i| i % 2).collect());
    }
    Model::new(spec, &NodeIndex::numbered(n)).unwrap()
}

/// Every valid (data, network, K) combination at small K.
pub fn model_zoo(n: usize) -> Vec<Model> {
    use DataModelKind as D;
    use NetworkModelKind as N;
    let mut out = Vec::new();
    for k in 2..=3 {
        for d in [D::Poisson, D::PoissonPropensity, D::Binomial, D::NodeBinomial, D::ReciprocalReport, D::Exact] {
            for net in [N::RandomGraph, N::SoftConfiguration, N::StochasticBlock, N::PoissonMultigraph] {
                let mut spec = ModelSpec::new(d, net).with_edge_types(k);
                spec.default_trials = Some(6);
                spec.groups = Some((0..n).map(|i| i % 2).collect());
                if let Ok(m) = Model::new(spec, &NodeIndex::numbered(n)) {
                    out.push(m);
                }
            }
        }
    }
    out
}

/// Interior parameter vector drawn uniformly in unconstrained space.
pub fn random_theta<R: Rng>(model: &Model, rng: &mut R) -> ParameterVector {
    let t = netrecon::sampler::Transform::new(model.layout().clone());
    let u: Vec<f64> = (0..t.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
    t.from_unconstrained(&u).unwrap()
}

/// Data simulated from the model at `theta`, with its true network.
pub fn simulate<R: Rng>(model: &Model, theta: &ParameterVector, rng: &mut R) -> (ObservationMatrix, AdjacencySample) {
    let nodes = NodeIndex::numbered(model.node_count());
    let truth = sample_prior_network(model, theta, rng).unwrap();
    let obs = simulate_observations(model, theta, &nodes, &truth, rng).unwrap();
    (obs, truth)
}

/// Log of `P(theta) Π mu nu` (up to the prior's constant) for every network, by enumeration.
pub fn enumerate_log_joint(model: &Model, theta: &ParameterVector, obs: &ObservationMatrix) -> Vec<(Vec<usize>, f64)> {
    let pairs: Vec<(Pair, Observation)> = obs.iter_pairs().collect();
    let k = model.edge_types();
    let table: Vec<Vec<f64>> = pairs
        .iter()
        .map(|(p, r)| {
            (0..k)
                .map(|kk| model.log_mu(*p, kk, theta, r).unwrap() + model.log_nu(*p, kk, theta).unwrap())
                .collect()
        })
        .collect();
    let prior = model.log_prior(theta);
    let total = k.pow(pairs.len() as u32);
    let mut out = Vec::with_capacity(total);
    let mut a = vec![0usize; pairs.len()];
    for _ in 0..total {
        let lp = prior + a.iter().zip(&table).map(|(&kk, row)| row[kk]).sum::<f64>();
        out.push((a.clone(), lp));
        for d in a.iter_mut() {
            *d += 1;
            if *d < k {
                break;
            }
            *d = 0;
        }
    }
    out
}

pub fn log_sum(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    log_sum_exp(&v)
}

/// Random observation matrix drawn to suit `model`.
pub fn random_obs<R: Rng>(model: &Model, rng: &mut R) -> ObservationMatrix {
    let n = model.node_count();
    let nodes = NodeIndex::numbered(n);
    let spec = model.spec();
    let directed = model.arity() == 2;
    let mut recs = Vec::new();
    for p in all_pairs(n) {
        let rec = match spec.data {
            DataModelKind::Poisson | DataModelKind::PoissonPropensity => Observation::count(rng.random_range(0..12)),
            DataModelKind::Binomial | DataModelKind::NodeBinomial => Observation::count(rng.random_range(0..=6)),
            DataModelKind::ReciprocalReport => Observation::directed(rng.random_range(0..2), rng.random_range(0..2)),
            DataModelKind::Exact => Observation::count(rng.random_range(0..model.edge_types() as u32)),
        };
        recs.push((p, rec));
    }
    ObservationMatrix::new(nodes, directed, recs).unwrap()
}
