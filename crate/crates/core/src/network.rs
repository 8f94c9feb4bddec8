//! Conditional edge posteriors `Q_ij(k | theta)`, network sampling and posterior averages.
//!
//! Given `theta` the posterior over networks factorizes over pairs, so a network draw is an
//! independent categorical draw per pair and many averages reduce to products of per-pair sums.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{pair_count, NodeIndex, Observation, ObservationMatrix, Pair};
use crate::error::{Error, Result};
use crate::math::{log_sum_exp, mix_seed};
use crate::models::{Model, ParameterVector};
use crate::sampler::PosteriorDraws;

/// Normalizes per-type log weights `log mu(k) + log nu(k)` into `Q(k)`.
/// Returns `None` when every weight is zero.
pub fn edge_posterior_from_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    let l = log_sum_exp(log_weights);
    if !l.is_finite() {
        return None;
    }
    Some(log_weights.iter().map(|w| (w - l).exp()).collect())
}

pub(crate) fn check_inputs(model: &Model, obs: &ObservationMatrix, theta: &ParameterVector) -> Result<()> {
    if theta.layout().as_ref() != model.layout().as_ref() {
        return Err(Error::Shape("parameter vector belongs to a different model".into()));
    }
    if obs.n() != model.node_count() {
        return Err(Error::Shape(format!(
            "data cover {} nodes, model expects {}",
            obs.n(),
            model.node_count()
        )));
    }
    if let Some(v) = crate::data::validate(obs, model.spec()).first() {
        return Err(Error::Shape(v.0.clone()));
    }
    theta.check_domain()
}

/// Writes `Q_ij(.)` for values `t` into `out`.
pub(crate) fn pair_posterior_into(model: &Model, pair: Pair, rec: &Observation, t: &[f64], out: &mut [f64]) -> Result<()> {
    model.pair_log_weights(pair, rec, t, out);
    let l = log_sum_exp(out);
    if !l.is_finite() {
        return Err(Error::DegenerateLikelihood(pair.i, pair.j));
    }
    out.iter_mut().for_each(|w| *w = (*w - l).exp());
    Ok(())
}

/// `Q_ij(k | theta) = mu nu / Σ_k' mu nu` for one pair.
pub fn edge_posterior(model: &Model, theta: &ParameterVector, obs: &ObservationMatrix, pair: Pair) -> Result<Vec<f64>> {
    check_inputs(model, obs, theta)?;
    if pair.j >= obs.n() {
        return Err(Error::Shape(format!("invalid pair ({}, {})", pair.i, pair.j)));
    }
    let mut q = vec![0.0; model.edge_types()];
    pair_posterior_into(model, pair, &obs.get(pair), theta.values(), &mut q)?;
    Ok(q)
}

/// A network: edge type per pair, stored sparsely (type 0 implicit).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AdjacencySample {
    n: usize,
    edges: BTreeMap<Pair, usize>,
}

impl AdjacencySample {
    pub fn empty(n: usize) -> Self {
        AdjacencySample {
            n,
            edges: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sets the type of `pair`; type 0 removes it.
    pub fn set(&mut self, pair: Pair, k: usize) {
        if k == 0 {
            self.edges.remove(&pair);
        } else {
            self.edges.insert(pair, k);
        }
    }

    pub fn get(&self, pair: Pair) -> usize {
        self.edges.get(&pair).copied().unwrap_or(0)
    }

    /// Pairs with type > 0, in pair order.
    pub fn edges(&self) -> impl Iterator<Item = (Pair, usize)> + '_ {
        self.edges.iter().map(|(p, k)| (*p, *k))
    }

    /// Number of pairs with type > 0.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

/// Independent categorical draw per pair from `Q_ij`. `O(n^2 K)`.
pub fn sample_network<R: Rng + ?Sized>(
    model: &Model,
    theta: &ParameterVector,
    obs: &ObservationMatrix,
    rng: &mut R,
) -> Result<AdjacencySample> {
    check_inputs(model, obs, theta)?;
    sample_network_values(model, theta.values(), obs, rng)
}

pub(crate) fn sample_network_values<R: Rng + ?Sized>(
    model: &Model,
    t: &[f64],
    obs: &ObservationMatrix,
    rng: &mut R,
) -> Result<AdjacencySample> {
    let mut q = vec![0.0; model.edge_types()];
    let mut a = AdjacencySample::empty(obs.n());
    for (pair, rec) in obs.iter_pairs() {
        pair_posterior_into(model, pair, &rec, t, &mut q)?;
        let k = categorical(&q, rng.random::<f64>());
        if k > 0 {
            a.edges.insert(pair, k);
        }
    }
    Ok(a)
}

/// Network drawn from the prior `nu_ij(. | theta)`, ignoring data.
pub fn sample_prior_network<R: Rng + ?Sized>(model: &Model, theta: &ParameterVector, rng: &mut R) -> Result<AdjacencySample> {
    if theta.layout().as_ref() != model.layout().as_ref() {
        return Err(Error::Shape("parameter vector belongs to a different model".into()));
    }
    theta.check_domain()?;
    let n = model.node_count();
    let mut w = vec![0.0; model.edge_types()];
    let mut a = AdjacencySample::empty(n);
    for pair in crate::data::all_pairs(n) {
        for (k, slot) in w.iter_mut().enumerate() {
            *slot = model.log_nu_term(pair, k, theta.values(), None);
        }
        let q = edge_posterior_from_log_weights(&w).ok_or(Error::DegenerateLikelihood(pair.i, pair.j))?;
        let k = categorical(&q, rng.random::<f64>());
        if k > 0 {
            a.edges.insert(pair, k);
        }
    }
    Ok(a)
}

fn categorical(q: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (k, &p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // Rounding left u above the final cumulative sum: take the last type with mass.
    q.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// How the sparse sampler reproduces independent per-pair edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseStrategy {
    /// Each pair receives `Poisson(-ln(1 - Q))` hits and is an edge iff hit at least once.
    /// The total hit count is `Poisson(Σ_ij -ln(1 - Q_ij))`; hits are placed by roulette
    /// selection over observation classes. Exact: edges are independent Bernoulli(Q_ij).
    #[default]
    PoissonProcess,
    /// `M ~ Poisson(Σ Q_ij)` distinct edges placed by roulette selection proportional to `Q`,
    /// redrawing collisions. Approximate: overweights pairs with large `Q`'s neighbours when
    /// `Q` is not small.
    Roulette,
}

struct Class {
    q: f64,
    explicit: Vec<Pair>,
    implicit: bool,
}

/// Precomputed sparse sampler for one `theta`. Requires a pair-exchangeable two-type model.
pub struct SparseNetworkSampler {
    n: usize,
    strategy: SparseStrategy,
    classes: Vec<Class>,
    /// Cumulative roulette weights over `classes`.
    cumulative: Vec<f64>,
    /// Classes included with certainty (`Q = 1`) under the Poisson-process strategy.
    certain: Vec<usize>,
    implicit_count: usize,
    explicit_set: HashSet<Pair>,
    implicit_list: Option<Vec<Pair>>,
    /// Upper bound on distinct placeable pairs for the roulette strategy.
    placeable: usize,
}

impl SparseNetworkSampler {
    pub fn new(model: &Model, theta: &ParameterVector, obs: &ObservationMatrix, strategy: SparseStrategy) -> Result<Self> {
        check_inputs(model, obs, theta)?;
        if model.edge_types() != 2 {
            return Err(Error::Unsupported(format!(
                "sparse network sampling needs two edge types, model has {}",
                model.edge_types()
            )));
        }
        if !model.is_exchangeable() || obs.is_directed() {
            return Err(Error::Unsupported(
                "sparse network sampling needs a pair-exchangeable model".into(),
            ));
        }
        let n = obs.n();
        let total = pair_count(n);
        let implicit_count = total - obs.record_count();
        let default = obs.default_record();
        let mut by_value: BTreeMap<Observation, Vec<Pair>> = BTreeMap::new();
        for (p, r) in obs.records() {
            by_value.entry(r).or_default().push(p);
        }
        if implicit_count > 0 {
            by_value.entry(default).or_default();
        }
        let t = theta.values();
        let mut q = [0.0; 2];
        let mut classes = Vec::with_capacity(by_value.len());
        for (value, explicit) in by_value {
            pair_posterior_into(model, Pair::new(0, 1), &value, t, &mut q)?;
            classes.push(Class {
                q: q[1],
                explicit,
                implicit: implicit_count > 0 && value == default,
            });
        }
        let size = |c: &Class| c.explicit.len() + if c.implicit { implicit_count } else { 0 };
        let mut cumulative = Vec::with_capacity(classes.len());
        let mut certain = Vec::new();
        let mut acc = 0.0;
        let mut placeable = 0;
        for (ci, c) in classes.iter().enumerate() {
            let w = match strategy {
                SparseStrategy::PoissonProcess if c.q >= 1.0 => {
                    certain.push(ci);
                    0.0
                }
                SparseStrategy::PoissonProcess => -(-c.q).ln_1p(),
                SparseStrategy::Roulette => c.q,
            };
            if c.q > 0.0 {
                placeable += size(c);
            }
            acc += w * size(c) as f64;
            cumulative.push(acc);
        }
        let explicit_set: HashSet<Pair> = obs.records().map(|(p, _)| p).collect();
        let implicit_list = (implicit_count > 0 && implicit_count <= total / 2).then(|| {
            crate::data::all_pairs(n).filter(|p| !explicit_set.contains(p)).collect()
        });
        Ok(SparseNetworkSampler {
            n,
            strategy,
            classes,
            cumulative,
            certain,
            implicit_count,
            explicit_set,
            implicit_list,
            placeable,
        })
    }

    /// Rate of the Poisson edge-count draw: `Σ -ln(1 - Q)` or `Σ Q` by strategy.
    pub fn total_rate(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    fn class_size(&self, c: &Class) -> usize {
        c.explicit.len() + if c.implicit { self.implicit_count } else { 0 }
    }

    fn pick_member<R: Rng + ?Sized>(&self, c: &Class, rng: &mut R) -> Pair {
        let idx = rng.random_range(0..self.class_size(c));
        if idx < c.explicit.len() {
            return c.explicit[idx];
        }
        if let Some(list) = &self.implicit_list {
            return list[rng.random_range(0..list.len())];
        }
        // Fewer than half of the pairs carry records: rejection terminates quickly.
        loop {
            let i = rng.random_range(0..self.n);
            let mut j = rng.random_range(0..self.n - 1);
            if j >= i {
                j += 1;
            }
            let p = Pair::new(i, j);
            if !self.explicit_set.contains(&p) {
                return p;
            }
        }
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Pair {
        let total = self.total_rate();
        let u = rng.random::<f64>() * total;
        let ci = self.cumulative.partition_point(|&c| c <= u).min(self.classes.len() - 1);
        self.pick_member(&self.classes[ci], rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AdjacencySample {
        let mut a = AdjacencySample::empty(self.n);
        for &ci in &self.certain {
            let c = &self.classes[ci];
            for &p in &c.explicit {
                a.edges.insert(p, 1);
            }
            if c.implicit {
                for p in crate::data::all_pairs(self.n).filter(|p| !self.explicit_set.contains(p)) {
                    a.edges.insert(p, 1);
                }
            }
        }
        let total = self.total_rate();
        if total <= 0.0 {
            return a;
        }
        let m = Poisson::new(total).expect("positive finite rate").sample(rng) as u64;
        match self.strategy {
            SparseStrategy::PoissonProcess => {
                for _ in 0..m {
                    let p = self.pick(rng);
                    a.edges.insert(p, 1);
                }
            }
            SparseStrategy::Roulette => {
                let target = (m as usize).min(self.placeable);
                while a.edges.len() < target {
                    let p = self.pick(rng);
                    a.edges.insert(p, 1);
                }
            }
        }
        a
    }
}

/// Sparse network draw by the exact Poisson-process strategy.
///
/// Errors with [`Error::Unsupported`] for models that are not pair-exchangeable or have more
/// than two edge types; callers fall back to [`sample_network`].
pub fn sample_network_sparse<R: Rng + ?Sized>(
    model: &Model,
    theta: &ParameterVector,
    obs: &ObservationMatrix,
    rng: &mut R,
) -> Result<AdjacencySample> {
    Ok(SparseNetworkSampler::new(model, theta, obs, SparseStrategy::PoissonProcess)?.sample(rng))
}

/// Per-pair edge-type probabilities, row-major over pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMarginalTable {
    n: usize,
    k: usize,
    probs: Vec<f64>,
}

impl EdgeMarginalTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_types(&self) -> usize {
        self.k
    }

    pub fn get(&self, pair: Pair) -> &[f64] {
        let at = pair.linear_index(self.n) * self.k;
        &self.probs[at..at + self.k]
    }

    /// Rows in row-major pair order.
    pub fn rows(&self) -> impl Iterator<Item = (Pair, &[f64])> + '_ {
        crate::data::all_pairs(self.n).zip(self.probs.chunks(self.k))
    }

    /// Writes `label_i,label_j,k,probability` for every `k >= 1` with probability `>= threshold`.
    pub fn write_csv<W: Write>(&self, nodes: &NodeIndex, threshold: f64, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label_i", "label_j", "k", "probability"])?;
        for (pair, row) in self.rows() {
            for (k, &p) in row.iter().enumerate().skip(1) {
                if p >= threshold {
                    w.write_record([
                        nodes.label(pair.i),
                        nodes.label(pair.j),
                        &k.to_string(),
                        &p.to_string(),
                    ])?;
                }
            }
        }
        w.flush().map_err(|e| Error::io("edges", e))?;
        Ok(())
    }
}

pub(crate) fn check_draws(model: &Model, obs: &ObservationMatrix, draws: &PosteriorDraws) -> Result<()> {
    if draws.is_empty() {
        return Err(Error::Shape("no parameter draws".into()));
    }
    let first = draws.theta(0);
    check_inputs(model, obs, &first)
}

/// Rao-Blackwellized table `(1/m) Σ_r Q_ij(. | theta_r)`.
pub fn marginal_edge_probabilities(model: &Model, draws: &PosteriorDraws, obs: &ObservationMatrix) -> Result<EdgeMarginalTable> {
    check_draws(model, obs, draws)?;
    let k = model.edge_types();
    let pairs: Vec<(Pair, Observation)> = obs.iter_pairs().collect();
    let mut probs = vec![0.0; pairs.len() * k];
    let m = draws.len() as f64;
    probs
        .par_chunks_mut(k)
        .zip(pairs.par_iter())
        .try_for_each(|(row, (pair, rec))| -> Result<()> {
            let mut q = vec![0.0; k];
            for d in draws.draws() {
                pair_posterior_into(model, *pair, rec, &d.values, &mut q)?;
                for (a, b) in row.iter_mut().zip(&q) {
                    *a += b;
                }
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= if s > 0.0 { s } else { m });
            Ok(())
        })?;
    Ok(EdgeMarginalTable { n: obs.n(), k, probs })
}

/// Fraction of sampled networks in which each pair has each type.
pub fn empirical_edge_frequencies(n: usize, edge_types: usize, samples: &[AdjacencySample]) -> EdgeMarginalTable {
    let total = pair_count(n);
    let mut counts = vec![0u64; total * edge_types];
    for s in samples {
        for (p, k) in s.edges() {
            counts[p.linear_index(n) * edge_types + k] += 1;
        }
    }
    let m = samples.len().max(1) as f64;
    let mut probs = vec![0.0; total * edge_types];
    for (row, c) in probs.chunks_mut(edge_types).zip(counts.chunks(edge_types)) {
        let nonzero: u64 = c[1..].iter().sum();
        row[0] = (samples.len() as u64 - nonzero) as f64 / m;
        for k in 1..edge_types {
            row[k] = c[k] as f64 / m;
        }
    }
    EdgeMarginalTable { n, k: edge_types, probs }
}

/// `samples_per_theta` networks per draw. RNG streams are keyed by `(seed, draw index)`.
pub fn sample_networks(
    model: &Model,
    obs: &ObservationMatrix,
    draws: &PosteriorDraws,
    samples_per_theta: usize,
    seed: u64,
) -> Result<Vec<(usize, AdjacencySample)>> {
    check_draws(model, obs, draws)?;
    let per_draw: Vec<Result<Vec<AdjacencySample>>> = draws
        .draws()
        .par_iter()
        .enumerate()
        .map(|(r, d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, r as u64));
            (0..samples_per_theta)
                .map(|_| sample_network_values(model, &d.values, obs, &mut rng))
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(draws.len() * samples_per_theta);
    for (r, nets) in per_draw.into_iter().enumerate() {
        out.extend(nets?.into_iter().map(|a| (r, a)));
    }
    Ok(out)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Batch-means standard error; absent with fewer than two batches.
    pub std_error: Option<f64>,
    pub samples: usize,
}

fn batch_means_error(values: &[f64], chain_of: &[usize]) -> Option<f64> {
    let mut batches: Vec<(f64, usize)> = Vec::new();
    let mut last = None;
    for (v, &c) in values.iter().zip(chain_of) {
        if last != Some(c) {
            batches.push((0.0, 0));
            last = Some(c);
        }
        let b = batches.last_mut().unwrap();
        b.0 += v;
        b.1 += 1;
    }
    if batches.len() < 2 {
        // One chain: consecutive batches of about sqrt(N) values.
        let size = (values.len() as f64).sqrt().floor().max(1.0) as usize;
        batches = values.chunks(size).filter(|c| c.len() == size).map(|c| (c.iter().sum(), c.len())).collect();
    }
    if batches.len() < 2 {
        return None;
    }
    let means: Vec<f64> = batches.iter().map(|(s, n)| s / *n as f64).collect();
    let b = means.len() as f64;
    let mu = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (b - 1.0);
    Some((var / b).sqrt())
}

/// `(1/(m n_s)) Σ_r Σ_s f(A_rs, theta_r)` over freshly sampled networks.
pub fn posterior_average<F>(
    model: &Model,
    obs: &ObservationMatrix,
    draws: &PosteriorDraws,
    samples_per_theta: usize,
    seed: u64,
    f: F,
) -> Result<Estimate>
where
    F: Fn(&AdjacencySample, &ParameterVector) -> f64 + Sync,
{
    if samples_per_theta == 0 {
        return Err(Error::Config("samples_per_theta must be >= 1".into()));
    }
    let nets = sample_networks(model, obs, draws, samples_per_theta, seed)?;
    let thetas: Vec<ParameterVector> = (0..draws.len()).map(|r| draws.theta(r)).collect();
    let values: Vec<f64> = nets.par_iter().map(|(r, a)| f(a, &thetas[*r])).collect();
    let chain_of: Vec<usize> = nets.iter().map(|(r, _)| draws.draws()[*r].chain).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Estimate {
        mean,
        std_error: batch_means_error(&values, &chain_of),
        samples: values.len(),
    })
}

/// `(1/m) Σ_r Π_(i,j) Σ_k g_ij(k, theta_r) Q_ij(k | theta_r)` without sampling networks.
pub fn posterior_average_factorized<G>(model: &Model, obs: &ObservationMatrix, draws: &PosteriorDraws, g: G) -> Result<f64>
where
    G: Fn(Pair, usize, &ParameterVector) -> f64 + Sync,
{
    check_draws(model, obs, draws)?;
    let k = model.edge_types();
    let per_draw: Vec<Result<(f64, f64)>> = (0..draws.len())
        .into_par_iter()
        .map(|r| {
            let theta = draws.theta(r);
            let mut q = vec![0.0; k];
            let (mut log_abs, mut sign) = (0.0, 1.0);
            for (pair, rec) in obs.iter_pairs() {
                pair_posterior_into(model, pair, &rec, theta.values(), &mut q)?;
                let s: f64 = q.iter().enumerate().map(|(kk, qk)| g(pair, kk, &theta) * qk).sum();
                if s == 0.0 {
                    return Ok((f64::NEG_INFINITY, 0.0));
                }
                log_abs += s.abs().ln();
                if s < 0.0 {
                    sign = -sign;
                }
            }
            Ok((log_abs, sign))
        })
        .collect();
    let terms = per_draw.into_iter().collect::<Result<Vec<_>>>()?;
    let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let s: f64 = terms.iter().map(|(l, sg)| sg * (l - max).exp()).sum();
    Ok(max.exp() * s / draws.len() as f64)
}
