//! Data models `mu_ij(k, theta)`, network models `nu_ij(k, theta)` and parameter priors.
//!
//! A [`ModelSpec`] names the three modeling choices; [`Model::new`] resolves it against a
//! node set into a parameter layout and the per-pair log densities used everywhere else.

mod params;

use std::collections::BTreeMap;
use std::sync::Arc;

use arrayvec::ArrayVec;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

pub use params::{Block, BlockId, Domain, ParamLayout, ParameterVector, Prior};

use crate::data::{NodeIndex, Observation, ObservationMatrix, Pair};
use crate::error::{Error, Result};
use crate::math::{ln_factorial, log_sum_exp, sigmoid, softplus, xlogy};

/// Default half-normal scale for rate parameters.
pub const DEFAULT_SIGMA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataModelKind {
    /// Poisson counts with one mean per edge type (`lambda_0 <= lambda_1 <= ...`).
    Poisson,
    /// Poisson counts with mean `lambda_k * eta_i * eta_j`, `eta` on the simplex.
    PoissonPropensity,
    /// `X` successes out of `N` trials at rate `alpha` (edge) or `beta` (non-edge).
    Binomial,
    /// Like `Binomial` with per-node rates; a pair uses the mean of its two nodes' rates.
    NodeBinomial,
    /// Ordered-pair reports `(X_ij, X_ji)` with per-node true/false-positive rates.
    ReciprocalReport,
    /// Noise-free: the observation is the edge type itself.
    Exact,
}

impl DataModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            DataModelKind::Poisson => "poisson",
            DataModelKind::PoissonPropensity => "poisson_propensity",
            DataModelKind::Binomial => "binomial",
            DataModelKind::NodeBinomial => "node_binomial",
            DataModelKind::ReciprocalReport => "reciprocal_report",
            DataModelKind::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetworkModelKind {
    /// Every pair has the same type probabilities: `rho` (two types) or `rho_k`.
    #[default]
    RandomGraph,
    /// `nu_ij(1) = 1 / (1 + exp(-d_i d_j))` with real pseudo-degrees `d_i`.
    SoftConfiguration,
    /// `nu_ij(1) = omega[g_i, g_j]` for fixed group labels.
    StochasticBlock,
    /// `nu_ij(k) ∝ omega^k / k!`, truncated to the configured number of types.
    PoissonMultigraph,
}

impl NetworkModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            NetworkModelKind::RandomGraph => "random_graph",
            NetworkModelKind::SoftConfiguration => "soft_configuration",
            NetworkModelKind::StochasticBlock => "stochastic_block",
            NetworkModelKind::PoissonMultigraph => "poisson_multigraph",
        }
    }
}

fn default_edge_types() -> usize {
    2
}

fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}

/// The three modeling choices plus fixed inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub data: DataModelKind,
    #[serde(default)]
    pub network: NetworkModelKind,
    /// Number of connection types including "no edge".
    #[serde(default = "default_edge_types")]
    pub edge_types: usize,
    /// Scale of the default half-normal / normal priors.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Trial count for pairs that do not carry one.
    #[serde(default)]
    pub default_trials: Option<u32>,
    /// Fixed group label per node for the stochastic block model.
    #[serde(default)]
    pub groups: Option<Vec<usize>>,
    /// Per-block prior overrides, keyed by block name.
    #[serde(default)]
    pub priors: BTreeMap<String, Prior>,
}

impl ModelSpec {
    pub fn new(data: DataModelKind, network: NetworkModelKind) -> Self {
        ModelSpec {
            data,
            network,
            edge_types: 2,
            sigma: DEFAULT_SIGMA,
            default_trials: None,
            groups: None,
            priors: BTreeMap::new(),
        }
    }

    pub fn with_edge_types(mut self, k: usize) -> Self {
        self.edge_types = k;
        self
    }
}

#[derive(Debug, Clone)]
enum DataTerms {
    Poisson { rates: usize },
    PoissonPropensity { rates: usize, eta: usize },
    Binomial { alpha: usize, beta: usize },
    NodeBinomial { alpha: usize, beta: usize },
    Reciprocal { alpha: usize, beta: usize },
    Exact,
}

#[derive(Debug, Clone)]
enum NetworkTerms {
    RandomGraph { rho: usize },
    MultiType { rho: usize },
    SoftConfiguration { degree: usize },
    StochasticBlock { omega: usize, groups: Vec<usize>, blocks: usize },
    PoissonMultigraph { omega: usize },
}

/// Sparse gradient of one log term: `(value index, derivative)`.
pub(crate) type Partials = ArrayVec<(usize, f64), 5>;

/// Mean of a synthetic observation, one entry per measured direction.
pub type ObservationMean = ArrayVec<f64, 2>;

/// A [`ModelSpec`] resolved against a node set.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    n: usize,
    layout: Arc<ParamLayout>,
    data: DataTerms,
    network: NetworkTerms,
}

fn box_alpha() -> Domain {
    Domain::Interval { lo: 0.5, hi: 1.0 }
}

fn box_beta() -> Domain {
    Domain::Interval { lo: 0.0, hi: 0.5 }
}

fn sbm_index(r: usize, s: usize, blocks: usize) -> usize {
    let (r, s) = if r <= s { (r, s) } else { (s, r) };
    // Row-major upper triangle including the diagonal.
    r * blocks - r * r.saturating_sub(1) / 2 + s - r
}

impl Model {
    pub fn new(spec: ModelSpec, nodes: &NodeIndex) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::Model("need at least two nodes".into()));
        }
        let k = spec.edge_types;
        if k < 2 {
            return Err(Error::Model(format!("edge_types must be >= 2, found {k}")));
        }
        if !(spec.sigma > 0.0 && spec.sigma.is_finite()) {
            return Err(Error::Model(format!("sigma must be positive, found {}", spec.sigma)));
        }
        let half_normal = Prior::HalfNormal { scale: spec.sigma };
        let labels = nodes.labels();
        let mut layout = ParamLayout::new();
        let two_types = |what: &str| {
            if k != 2 {
                Err(Error::Model(format!("{what} supports exactly two edge types, found {k}")))
            } else {
                Ok(())
            }
        };

        let data = match spec.data {
            DataModelKind::Poisson => {
                let id = layout.indexed("lambda", k, Domain::OrderedPositive, half_normal);
                DataTerms::Poisson {
                    rates: layout.block(id).offset,
                }
            }
            DataModelKind::PoissonPropensity => {
                let r = layout.indexed("lambda", k, Domain::OrderedPositive, half_normal);
                let e = layout.per_node("eta", labels, Domain::Simplex, Prior::Flat);
                DataTerms::PoissonPropensity {
                    rates: layout.block(r).offset,
                    eta: layout.block(e).offset,
                }
            }
            DataModelKind::Binomial => {
                two_types("the binomial data model")?;
                let a = layout.scalar("alpha", box_alpha(), Prior::Flat);
                let b = layout.scalar("beta", box_beta(), Prior::Flat);
                DataTerms::Binomial {
                    alpha: layout.block(a).offset,
                    beta: layout.block(b).offset,
                }
            }
            DataModelKind::NodeBinomial => {
                two_types("the node binomial data model")?;
                let a = layout.per_node("alpha", labels, box_alpha(), Prior::Flat);
                let b = layout.per_node("beta", labels, box_beta(), Prior::Flat);
                DataTerms::NodeBinomial {
                    alpha: layout.block(a).offset,
                    beta: layout.block(b).offset,
                }
            }
            DataModelKind::ReciprocalReport => {
                two_types("the reciprocal-report data model")?;
                let a = layout.per_node("alpha", labels, box_alpha(), Prior::Flat);
                let b = layout.per_node("beta", labels, box_beta(), Prior::Flat);
                DataTerms::Reciprocal {
                    alpha: layout.block(a).offset,
                    beta: layout.block(b).offset,
                }
            }
            DataModelKind::Exact => DataTerms::Exact,
        };

        let network = match spec.network {
            NetworkModelKind::RandomGraph if k == 2 => {
                let id = layout.scalar("rho", Domain::UnitInterval, Prior::Flat);
                NetworkTerms::RandomGraph {
                    rho: layout.block(id).offset,
                }
            }
            NetworkModelKind::RandomGraph => {
                let id = layout.indexed("rho", k, Domain::Simplex, Prior::Flat);
                NetworkTerms::MultiType {
                    rho: layout.block(id).offset,
                }
            }
            NetworkModelKind::SoftConfiguration => {
                two_types("the soft configuration model")?;
                let id = layout.per_node(
                    "degree",
                    labels,
                    Domain::Real,
                    Prior::Normal { scale: spec.sigma },
                );
                NetworkTerms::SoftConfiguration {
                    degree: layout.block(id).offset,
                }
            }
            NetworkModelKind::StochasticBlock => {
                two_types("the stochastic block model")?;
                let groups = spec
                    .groups
                    .clone()
                    .ok_or_else(|| Error::Model("stochastic block model requires group labels".into()))?;
                if groups.len() != n {
                    return Err(Error::Model(format!(
                        "group labels cover {} nodes, expected {n}",
                        groups.len()
                    )));
                }
                let blocks = groups.iter().max().map_or(0, |&g| g + 1);
                let mut names = Vec::new();
                for r in 0..blocks {
                    for s in r..blocks {
                        names.push(format!("omega_{r}_{s}"));
                    }
                }
                let id = layout.with_names("omega", names, Domain::UnitInterval, Prior::Flat);
                NetworkTerms::StochasticBlock {
                    omega: layout.block(id).offset,
                    groups,
                    blocks,
                }
            }
            NetworkModelKind::PoissonMultigraph => {
                let id = layout.scalar("omega", Domain::Positive, half_normal);
                NetworkTerms::PoissonMultigraph {
                    omega: layout.block(id).offset,
                }
            }
        };

        for (name, prior) in &spec.priors {
            let block = layout
                .block_mut(name)
                .ok_or_else(|| Error::Model(format!("prior given for unknown block {name:?}")))?;
            match (block.domain, prior) {
                (Domain::Real, Prior::HalfNormal { .. }) => {
                    return Err(Error::Model(format!(
                        "half-normal prior is not valid on real-valued block {name:?}"
                    )))
                }
                (_, Prior::HalfNormal { scale } | Prior::Normal { scale })
                    if !(*scale > 0.0 && scale.is_finite()) =>
                {
                    return Err(Error::Model(format!("prior scale for {name:?} must be positive")))
                }
                _ => block.prior = *prior,
            }
        }

        Ok(Model {
            spec,
            n,
            layout: Arc::new(layout),
            data,
            network,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of edge types `K`.
    pub fn edge_types(&self) -> usize {
        self.spec.edge_types
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    /// Values per observation record: 2 for ordered-pair data, else 1.
    pub fn arity(&self) -> usize {
        match self.data {
            DataTerms::Reciprocal { .. } => 2,
            _ => 1,
        }
    }

    /// Whether `mu` and `nu` depend on a pair only through its observation record.
    pub fn is_exchangeable(&self) -> bool {
        matches!(
            self.data,
            DataTerms::Poisson { .. } | DataTerms::Binomial { .. } | DataTerms::Exact
        ) && matches!(
            self.network,
            NetworkTerms::RandomGraph { .. } | NetworkTerms::MultiType { .. } | NetworkTerms::PoissonMultigraph { .. }
        )
    }

    pub fn parameters(&self, values: Vec<f64>) -> Result<ParameterVector> {
        ParameterVector::new(self.layout.clone(), values)
    }

    fn check_theta(&self, theta: &ParameterVector) -> Result<()> {
        if !Arc::ptr_eq(theta.layout(), &self.layout) && **theta.layout() != *self.layout {
            return Err(Error::Shape("parameter vector belongs to a different model".into()));
        }
        theta.check_domain()
    }

    fn check_pair(&self, pair: Pair, k: usize) -> Result<()> {
        if pair.i >= pair.j || pair.j >= self.n {
            return Err(Error::Shape(format!("invalid pair ({}, {})", pair.i, pair.j)));
        }
        if k >= self.edge_types() {
            return Err(Error::Shape(format!(
                "edge type {k} out of range for K = {}",
                self.edge_types()
            )));
        }
        Ok(())
    }

    fn check_observation(&self, obs: &Observation) -> Result<()> {
        match self.data {
            DataTerms::Reciprocal { .. } => {
                if obs.reverse.is_none() {
                    return Err(Error::Shape("reciprocal-report model needs (X_ij, X_ji)".into()));
                }
                if obs.values().any(|x| x > 1) {
                    return Err(Error::Shape("reciprocal-report observations must be 0/1".into()));
                }
            }
            _ if obs.reverse.is_some() => {
                return Err(Error::Shape(format!(
                    "{} data model takes scalar observations",
                    self.spec.data.name()
                )))
            }
            DataTerms::Binomial { .. } | DataTerms::NodeBinomial { .. } => match self.trials(obs) {
                None => return Err(Error::Shape("binomial model needs a trial count".into())),
                Some(n) if obs.count > n => {
                    return Err(Error::Shape(format!("count {} exceeds trials {n}", obs.count)))
                }
                _ => {}
            },
            _ => {}
        }
        Ok(())
    }

    fn trials(&self, obs: &Observation) -> Option<u32> {
        obs.trials.or(self.spec.default_trials)
    }

    /// `log P(X_ij | A_ij = k, theta)`.
    pub fn log_mu(&self, pair: Pair, k: usize, theta: &ParameterVector, obs: &Observation) -> Result<f64> {
        self.check_pair(pair, k)?;
        self.check_theta(theta)?;
        self.check_observation(obs)?;
        Ok(self.log_mu_term(pair, k, theta.values(), obs, None))
    }

    /// `log P(A_ij = k | theta)`.
    pub fn log_nu(&self, pair: Pair, k: usize, theta: &ParameterVector) -> Result<f64> {
        self.check_pair(pair, k)?;
        self.check_theta(theta)?;
        Ok(self.log_nu_term(pair, k, theta.values(), None))
    }

    /// Sum of block log priors (up to a constant); `-inf` outside the domain.
    pub fn log_prior(&self, theta: &ParameterVector) -> f64 {
        theta.log_prior()
    }

    /// `E[X~_ij | A_ij = k, theta]`, one entry per measured direction.
    pub fn predictive_mean_mu(
        &self,
        pair: Pair,
        k: usize,
        theta: &ParameterVector,
        obs: &Observation,
    ) -> Result<ObservationMean> {
        self.check_pair(pair, k)?;
        self.check_theta(theta)?;
        self.check_observation(obs)?;
        Ok(self.mean_term(pair, k, theta.values(), obs))
    }

    /// Draws a synthetic record from `P(X~_ij | A_ij = k, theta)` shaped like `template`.
    pub fn sample_observation<R: Rng + ?Sized>(
        &self,
        pair: Pair,
        k: usize,
        theta: &ParameterVector,
        template: &Observation,
        rng: &mut R,
    ) -> Result<Observation> {
        self.check_pair(pair, k)?;
        self.check_theta(theta)?;
        self.check_observation(template)?;
        Ok(self.sample_term(pair, k, theta.values(), template, rng))
    }

    pub(crate) fn log_mu_term(
        &self,
        pair: Pair,
        k: usize,
        t: &[f64],
        obs: &Observation,
        grad: Option<&mut Partials>,
    ) -> f64 {
        let x = obs.count as f64;
        match self.data {
            DataTerms::Poisson { rates } => {
                let idx = rates + k;
                let rate = t[idx];
                if let Some(g) = grad {
                    let d = if x == 0.0 { -1.0 } else { x / rate - 1.0 };
                    g.push((idx, d));
                }
                xlogy(x, rate) - rate - ln_factorial(obs.count)
            }
            DataTerms::PoissonPropensity { rates, eta } => {
                let (ei, ej) = (t[eta + pair.i], t[eta + pair.j]);
                let lam = t[rates + k];
                let rate = lam * ei * ej;
                if let Some(g) = grad {
                    let c = if x == 0.0 { -1.0 } else { x / rate - 1.0 };
                    g.push((rates + k, c * ei * ej));
                    g.push((eta + pair.i, c * lam * ej));
                    g.push((eta + pair.j, c * lam * ei));
                }
                xlogy(x, rate) - rate - ln_factorial(obs.count)
            }
            DataTerms::Binomial { alpha, beta } => {
                let idx = if k == 1 { alpha } else { beta };
                let p = t[idx];
                let fails = self.trials(obs).unwrap_or(0) as f64 - x;
                if let Some(g) = grad {
                    g.push((idx, x / p - fails / (1.0 - p)));
                }
                xlogy(x, p) + xlogy(fails, 1.0 - p)
            }
            DataTerms::NodeBinomial { alpha, beta } => {
                let base = if k == 1 { alpha } else { beta };
                let p = 0.5 * (t[base + pair.i] + t[base + pair.j]);
                let fails = self.trials(obs).unwrap_or(0) as f64 - x;
                if let Some(g) = grad {
                    let d = 0.5 * (x / p - fails / (1.0 - p));
                    g.push((base + pair.i, d));
                    g.push((base + pair.j, d));
                }
                xlogy(x, p) + xlogy(fails, 1.0 - p)
            }
            DataTerms::Reciprocal { alpha, beta } => {
                let base = if k == 1 { alpha } else { beta };
                let y = obs.reverse.unwrap_or(0) as f64;
                let (pi, pj) = (t[base + pair.i], t[base + pair.j]);
                if let Some(g) = grad {
                    g.push((base + pair.i, x / pi - (1.0 - x) / (1.0 - pi)));
                    g.push((base + pair.j, y / pj - (1.0 - y) / (1.0 - pj)));
                }
                xlogy(x, pi) + xlogy(1.0 - x, 1.0 - pi) + xlogy(y, pj) + xlogy(1.0 - y, 1.0 - pj)
            }
            DataTerms::Exact => {
                if obs.count as usize == k {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub(crate) fn log_nu_term(&self, pair: Pair, k: usize, t: &[f64], grad: Option<&mut Partials>) -> f64 {
        match &self.network {
            NetworkTerms::RandomGraph { rho } => {
                let r = t[*rho];
                if k == 1 {
                    if let Some(g) = grad {
                        g.push((*rho, 1.0 / r));
                    }
                    r.ln()
                } else {
                    if let Some(g) = grad {
                        g.push((*rho, -1.0 / (1.0 - r)));
                    }
                    (1.0 - r).ln()
                }
            }
            NetworkTerms::MultiType { rho } => {
                let r = t[rho + k];
                if let Some(g) = grad {
                    g.push((rho + k, 1.0 / r));
                }
                r.ln()
            }
            NetworkTerms::SoftConfiguration { degree } => {
                let (di, dj) = (t[degree + pair.i], t[degree + pair.j]);
                let s = di * dj;
                let (value, ds) = if k == 1 {
                    (-softplus(-s), sigmoid(-s))
                } else {
                    (-softplus(s), -sigmoid(s))
                };
                if let Some(g) = grad {
                    g.push((degree + pair.i, ds * dj));
                    g.push((degree + pair.j, ds * di));
                }
                value
            }
            NetworkTerms::StochasticBlock { omega, groups, blocks } => {
                let idx = omega + sbm_index(groups[pair.i], groups[pair.j], *blocks);
                let w = t[idx];
                if k == 1 {
                    if let Some(g) = grad {
                        g.push((idx, 1.0 / w));
                    }
                    w.ln()
                } else {
                    if let Some(g) = grad {
                        g.push((idx, -1.0 / (1.0 - w)));
                    }
                    (1.0 - w).ln()
                }
            }
            NetworkTerms::PoissonMultigraph { omega } => {
                let w = t[*omega];
                let kmax = self.edge_types();
                let logs: ArrayVec<f64, 64> = (0..kmax.min(64))
                    .map(|j| xlogy(j as f64, w) - ln_factorial(j as u32))
                    .collect();
                let (log_z, mean_k) = if kmax <= 64 {
                    let lz = log_sum_exp(&logs);
                    let m: f64 = logs.iter().enumerate().map(|(j, l)| j as f64 * (l - lz).exp()).sum();
                    (lz, m)
                } else {
                    let all: Vec<f64> = (0..kmax).map(|j| xlogy(j as f64, w) - ln_factorial(j as u32)).collect();
                    let lz = log_sum_exp(&all);
                    let m: f64 = all.iter().enumerate().map(|(j, l)| j as f64 * (l - lz).exp()).sum();
                    (lz, m)
                };
                if let Some(g) = grad {
                    g.push((*omega, (k as f64 - mean_k) / w));
                }
                xlogy(k as f64, w) - ln_factorial(k as u32) - log_z
            }
        }
    }

    /// `log mu_ij(k) + log nu_ij(k)` for every `k`, written into `out`.
    pub(crate) fn pair_log_weights(&self, pair: Pair, obs: &Observation, t: &[f64], out: &mut [f64]) {
        for (k, w) in out.iter_mut().enumerate() {
            *w = self.log_mu_term(pair, k, t, obs, None) + self.log_nu_term(pair, k, t, None);
        }
    }

    /// As [`Self::pair_log_weights`] with the sparse gradient of each weight.
    pub(crate) fn pair_log_weights_grad(
        &self,
        pair: Pair,
        obs: &Observation,
        t: &[f64],
        out: &mut [f64],
        grads: &mut [Partials],
    ) {
        for k in 0..out.len() {
            let g = &mut grads[k];
            g.clear();
            let mu = self.log_mu_term(pair, k, t, obs, Some(g));
            let nu = self.log_nu_term(pair, k, t, Some(g));
            out[k] = mu + nu;
        }
    }

    /// Log likelihood of the two-report model with per-node logs tabulated once, adding its
    /// gradient with respect to the constrained values into `grad`. `None` for other models.
    ///
    /// Records must be validated: both reports in {0, 1}.
    pub(crate) fn report_log_likelihood(
        &self,
        obs: &ObservationMatrix,
        t: &[f64],
        mut grad: Option<&mut [f64]>,
    ) -> Option<f64> {
        let DataTerms::Reciprocal { alpha, beta } = self.data else {
            return None;
        };
        if self.edge_types() != 2 {
            return None;
        }
        // log[k][i][x]: log probability that node i reports x about a pair of type k.
        let bases = [beta, alpha];
        let mut log = [vec![[0.0; 2]; self.n], vec![[0.0; 2]; self.n]];
        let mut dlog = [vec![[0.0; 2]; self.n], vec![[0.0; 2]; self.n]];
        for k in 0..2 {
            for i in 0..self.n {
                let p = t[bases[k] + i];
                log[k][i] = [(1.0 - p).ln(), p.ln()];
                dlog[k][i] = [-1.0 / (1.0 - p), 1.0 / p];
            }
        }
        let shared_nu = matches!(self.network, NetworkTerms::RandomGraph { .. });
        let any = Pair::new(0, 1);
        let mut nu_parts = [Partials::new(), Partials::new()];
        let shared = [
            self.log_nu_term(any, 0, t, Some(&mut nu_parts[0])),
            self.log_nu_term(any, 1, t, Some(&mut nu_parts[1])),
        ];
        let mut q_sum = [0.0; 2];
        let mut parts = [Partials::new(), Partials::new()];
        let mut total = 0.0;
        for (pair, rec) in obs.iter_pairs() {
            let (x, y) = (rec.count as usize, rec.reverse.unwrap_or(0) as usize);
            debug_assert!(x <= 1 && y <= 1);
            let mut w = [0.0; 2];
            for k in 0..2 {
                let nu = if shared_nu {
                    shared[k]
                } else {
                    parts[k].clear();
                    self.log_nu_term(pair, k, t, Some(&mut parts[k]))
                };
                w[k] = log[k][pair.i][x] + log[k][pair.j][y] + nu;
            }
            let (hi, lo) = if w[1] > w[0] { (1, 0) } else { (0, 1) };
            if w[hi] == f64::NEG_INFINITY {
                return Some(f64::NEG_INFINITY);
            }
            let e = (w[lo] - w[hi]).exp();
            total += w[hi] + e.ln_1p();
            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            let mut q = [0.0; 2];
            q[hi] = 1.0 / (1.0 + e);
            q[lo] = e / (1.0 + e);
            for k in 0..2 {
                if q[k] == 0.0 {
                    continue;
                }
                g[bases[k] + pair.i] += q[k] * dlog[k][pair.i][x];
                g[bases[k] + pair.j] += q[k] * dlog[k][pair.j][y];
                if shared_nu {
                    q_sum[k] += q[k];
                } else {
                    for &(idx, d) in &parts[k] {
                        g[idx] += q[k] * d;
                    }
                }
            }
        }
        if let (Some(g), true) = (grad, shared_nu) {
            for k in 0..2 {
                for &(idx, d) in &nu_parts[k] {
                    g[idx] += q_sum[k] * d;
                }
            }
        }
        Some(total)
    }

    pub(crate) fn mean_term(&self, pair: Pair, k: usize, t: &[f64], obs: &Observation) -> ObservationMean {
        let mut m = ObservationMean::new();
        match self.data {
            DataTerms::Poisson { rates } => m.push(t[rates + k]),
            DataTerms::PoissonPropensity { rates, eta } => {
                m.push(t[rates + k] * t[eta + pair.i] * t[eta + pair.j])
            }
            DataTerms::Binomial { alpha, beta } => {
                let p = t[if k == 1 { alpha } else { beta }];
                m.push(self.trials(obs).unwrap_or(0) as f64 * p);
            }
            DataTerms::NodeBinomial { alpha, beta } => {
                let base = if k == 1 { alpha } else { beta };
                let p = 0.5 * (t[base + pair.i] + t[base + pair.j]);
                m.push(self.trials(obs).unwrap_or(0) as f64 * p);
            }
            DataTerms::Reciprocal { alpha, beta } => {
                let base = if k == 1 { alpha } else { beta };
                m.push(t[base + pair.i]);
                m.push(t[base + pair.j]);
            }
            DataTerms::Exact => m.push(k as f64),
        }
        m
    }

    pub(crate) fn sample_term<R: Rng + ?Sized>(
        &self,
        pair: Pair,
        k: usize,
        t: &[f64],
        template: &Observation,
        rng: &mut R,
    ) -> Observation {
        let poisson = |rate: f64, rng: &mut R| -> u32 {
            if rate <= 0.0 {
                0
            } else {
                let x: f64 = Poisson::new(rate).expect("finite positive rate").sample(rng);
                x.min(u32::MAX as f64) as u32
            }
        };
        let binomial = |n: u32, p: f64, rng: &mut R| -> u32 {
            Binomial::new(n as u64, p.clamp(0.0, 1.0))
                .expect("probability in [0, 1]")
                .sample(rng) as u32
        };
        match self.data {
            DataTerms::Poisson { rates } => Observation::count(poisson(t[rates + k], rng)),
            DataTerms::PoissonPropensity { rates, eta } => {
                Observation::count(poisson(t[rates + k] * t[eta + pair.i] * t[eta + pair.j], rng))
            }
            DataTerms::Binomial { alpha, beta } => {
                let n = self.trials(template).unwrap_or(0);
                Observation {
                    count: binomial(n, t[if k == 1 { alpha } else { beta }], rng),
                    reverse: None,
                    trials: template.trials,
                }
            }
            DataTerms::NodeBinomial { alpha, beta } => {
                let base = if k == 1 { alpha } else { beta };
                let n = self.trials(template).unwrap_or(0);
                Observation {
                    count: binomial(n, 0.5 * (t[base + pair.i] + t[base + pair.j]), rng),
                    reverse: None,
                    trials: template.trials,
                }
            }
            DataTerms::Reciprocal { alpha, beta } => {
                let base = if k == 1 { alpha } else { beta };
                let fwd = rng.random_bool(t[base + pair.i]) as u32;
                let rev = rng.random_bool(t[base + pair.j]) as u32;
                Observation::directed(fwd, rev)
            }
            DataTerms::Exact => Observation::count(k as u32),
        }
    }

    /// Draws a parameter vector from the prior. Fails on improper (flat, unbounded) blocks.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<ParameterVector> {
        let mut values = vec![0.0; self.layout.len()];
        for b in self.layout.blocks() {
            let out = &mut values[b.range()];
            let normal = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
            match (b.domain, b.prior) {
                (Domain::UnitInterval, Prior::Flat) => out.iter_mut().for_each(|x| *x = rng.random()),
                (Domain::Interval { lo, hi }, Prior::Flat) => out
                    .iter_mut()
                    .for_each(|x| *x = lo + (hi - lo) * rng.random_range(1e-12..1.0 - 1e-12)),
                (Domain::Simplex, Prior::Flat) => {
                    let e: Vec<f64> = (0..b.len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                    let s: f64 = e.iter().sum();
                    out.iter_mut().zip(&e).for_each(|(x, v)| *x = v / s);
                    let drift: f64 = 1.0 - out.iter().sum::<f64>();
                    out[b.len - 1] += drift;
                }
                (Domain::Positive | Domain::OrderedPositive, Prior::HalfNormal { scale } | Prior::Normal { scale }) => {
                    out.iter_mut().for_each(|x| *x = (normal(rng) * scale).abs());
                    if b.domain == Domain::OrderedPositive {
                        out.sort_by(f64::total_cmp);
                    }
                }
                (Domain::Real, Prior::Normal { scale }) => out.iter_mut().for_each(|x| *x = normal(rng) * scale),
                (Domain::UnitInterval | Domain::Interval { .. } | Domain::Simplex, Prior::HalfNormal { scale } | Prior::Normal { scale }) => {
                    // Truncated normal by rejection.
                    for x in out.iter_mut() {
                        let (lo, hi) = match b.domain {
                            Domain::Interval { lo, hi } => (lo, hi),
                            _ => (0.0, 1.0),
                        };
                        *x = loop {
                            let v = normal(rng) * scale;
                            if v > lo && v < hi {
                                break v;
                            }
                            if scale > 10.0 * (hi - lo) {
                                break lo + (hi - lo) * rng.random::<f64>();
                            }
                        };
                    }
                    if b.domain == Domain::Simplex {
                        let s: f64 = out.iter().sum();
                        out.iter_mut().for_each(|x| *x /= s);
                    }
                }
                _ => {
                    return Err(Error::Model(format!(
                        "block {:?} has an improper prior and cannot be drawn from it",
                        b.name
                    )))
                }
            }
        }
        ParameterVector::new(self.layout.clone(), values)
    }
}
