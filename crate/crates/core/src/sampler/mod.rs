//! Sampling parameter sets from the marginal posterior `P(theta | X)`.
//!
//! Chains run over unconstrained coordinates (see [`transform`]) with either NUTS or an
//! adaptive random-walk Metropolis kernel. Each chain owns a ChaCha8 stream seeded from
//! `(seed, chain id)`, so results do not depend on thread scheduling.

pub mod adapt;
pub mod diagnostics;
pub mod metropolis;
pub mod nuts;
pub mod posterior;
pub mod transform;

use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservationMatrix;
use crate::error::{Error, Result};
use crate::math::mix_seed;
use crate::models::{Model, ParamLayout, ParameterVector};

pub use diagnostics::{diagnostics, effective_sample_size, split_rhat, Diagnostics, ParameterSummary};
pub use posterior::{
    gradient_log_posterior, log_marginal_posterior, naive_log_likelihood, pooled_log_likelihood, LikelihoodMode,
    Target,
};
pub use transform::Transform;

use adapt::{regularize, DualAveraging, Welford, WindowSchedule};
use metropolis::RandomWalk;
use nuts::{Nuts, State};

/// Environment variable holding the default worker thread count.
pub const THREADS_ENV: &str = "NETRECON_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Nuts,
    Metropolis,
}

fn default_chains() -> usize {
    4
}
fn default_iterations() -> usize {
    1000
}
fn default_seed() -> u64 {
    1
}
fn default_target_accept() -> f64 {
    0.8
}
fn default_max_depth() -> usize {
    10
}
fn default_init_radius() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSettings {
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_iterations")]
    pub warmup: usize,
    /// Kept draws per chain.
    #[serde(default = "default_iterations")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_target_accept")]
    pub target_accept: f64,
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub likelihood: LikelihoodMode,
    /// Initial unconstrained coordinates are drawn from `U[-init_radius, init_radius]`.
    #[serde(default = "default_init_radius")]
    pub init_radius: f64,
    /// Worker threads; falls back to `NETRECON_THREADS`, then the rayon default.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings {
            chains: default_chains(),
            warmup: default_iterations(),
            samples: default_iterations(),
            seed: default_seed(),
            target_accept: default_target_accept(),
            max_depth: default_max_depth(),
            algorithm: Algorithm::default(),
            likelihood: LikelihoodMode::default(),
            init_radius: default_init_radius(),
            threads: None,
        }
    }
}

impl SamplerSettings {
    pub fn check(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be >= 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("samples must be >= 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be >= 1".into()));
        }
        if !(self.init_radius > 0.0 && self.init_radius.is_finite()) {
            return Err(Error::Config("init_radius must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-chain sampler statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain: usize,
    pub algorithm: Algorithm,
    /// Kept iterations.
    pub iterations: usize,
    pub warmup: usize,
    /// Divergent transitions among kept iterations.
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub step_size: f64,
    pub mean_accept: f64,
    pub mean_leapfrog: f64,
    pub max_depth_hits: usize,
    pub inv_metric: Vec<f64>,
    pub init_attempts: usize,
}

/// One kept parameter draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    pub iteration: usize,
    /// Constrained values in layout order.
    pub values: Vec<f64>,
    /// `log P(theta | X)` up to a constant (no Jacobian term).
    pub log_posterior: f64,
}

/// Kept draws ordered by chain, then iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    layout: Arc<ParamLayout>,
    draws: Vec<Draw>,
    stats: Vec<ChainStats>,
}

impl PosteriorDraws {
    /// Assembles draws, checking value lengths and sorting by (chain, iteration).
    pub fn new(layout: Arc<ParamLayout>, mut draws: Vec<Draw>, stats: Vec<ChainStats>) -> Result<Self> {
        if let Some(d) = draws.iter().find(|d| d.values.len() != layout.len()) {
            return Err(Error::Shape(format!(
                "draw (chain {}, iteration {}) has {} values, layout expects {}",
                d.chain,
                d.iteration,
                d.values.len(),
                layout.len()
            )));
        }
        draws.sort_by_key(|d| (d.chain, d.iteration));
        Ok(PosteriorDraws { layout, draws, stats })
    }

    /// A single fixed parameter vector as a one-draw set.
    pub fn single(theta: &ParameterVector) -> Self {
        PosteriorDraws {
            layout: theta.layout().clone(),
            draws: vec![Draw {
                chain: 0,
                iteration: 0,
                values: theta.values().to_vec(),
                log_posterior: f64::NAN,
            }],
            stats: Vec::new(),
        }
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn chain_stats(&self) -> &[ChainStats] {
        &self.stats
    }

    pub fn theta(&self, index: usize) -> ParameterVector {
        ParameterVector::new_unchecked(self.layout.clone(), self.draws[index].values.clone())
            .expect("draw lengths checked on construction")
    }

    /// Distinct chain ids in order.
    pub fn chain_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.draws.iter().map(|d| d.chain).collect();
        ids.dedup();
        ids
    }

    pub fn chain_count(&self) -> usize {
        self.chain_ids().len()
    }

    pub(crate) fn per_chain_values(&self) -> Vec<Vec<&[f64]>> {
        let mut out: Vec<Vec<&[f64]>> = Vec::new();
        let mut last = None;
        for d in &self.draws {
            if last != Some(d.chain) {
                out.push(Vec::new());
                last = Some(d.chain);
            }
            out.last_mut().unwrap().push(&d.values);
        }
        out
    }

    pub fn per_chain_log_posterior(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        let mut last = None;
        for d in &self.draws {
            if last != Some(d.chain) {
                out.push(Vec::new());
                last = Some(d.chain);
            }
            out.last_mut().unwrap().push(d.log_posterior);
        }
        out
    }

    /// Posterior mean of every value.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.layout.len()];
        for d in &self.draws {
            for (a, v) in m.iter_mut().zip(&d.values) {
                *a += v;
            }
        }
        let n = self.draws.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Posterior standard deviation of every value.
    pub fn sd(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut s = vec![0.0; self.layout.len()];
        for d in &self.draws {
            for ((a, v), mu) in s.iter_mut().zip(&d.values).zip(&mean) {
                *a += (v - mu).powi(2);
            }
        }
        let n = (self.draws.len().max(2) - 1) as f64;
        s.iter_mut().for_each(|a| *a = (*a / n).sqrt());
        s
    }

    /// Writes the trace CSV: `chain,iteration,log_posterior,<parameter names...>`.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["chain".to_string(), "iteration".into(), "log_posterior".into()];
        header.extend(self.layout.names());
        w.write_record(&header)?;
        for d in &self.draws {
            let mut row = vec![d.chain.to_string(), d.iteration.to_string(), d.log_posterior.to_string()];
            row.extend(d.values.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("trace", e))?;
        Ok(())
    }

    /// Reads a trace written by [`Self::write_trace`]; the header must match `layout`.
    pub fn read_trace<R: Read>(layout: Arc<ParamLayout>, input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        let mut expected = vec!["chain".to_string(), "iteration".into(), "log_posterior".into()];
        expected.extend(layout.names());
        if header != expected {
            return Err(Error::Shape(format!(
                "trace columns do not match the model: expected {}, found {}",
                expected.join(","),
                header.join(",")
            )));
        }
        let mut draws = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::Parse {
                line: row + 2,
                message: format!("invalid {what} in trace"),
            };
            let chain = rec[0].parse().map_err(|_| bad("chain"))?;
            let iteration = rec[1].parse().map_err(|_| bad("iteration"))?;
            let log_posterior = rec[2].parse().map_err(|_| bad("log_posterior"))?;
            let values = rec
                .iter()
                .skip(3)
                .map(|s| s.parse::<f64>().map_err(|_| bad("value")))
                .collect::<Result<Vec<_>>>()?;
            draws.push(Draw {
                chain,
                iteration,
                values,
                log_posterior,
            });
        }
        if draws.is_empty() {
            return Err(Error::Shape("trace contains no draws".into()));
        }
        Self::new(layout, draws, Vec::new())
    }
}

struct ChainOutput {
    draws: Vec<Draw>,
    stats: ChainStats,
}

fn thread_count(settings: &SamplerSettings) -> Option<usize> {
    settings.threads.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .filter(|&n: &usize| n > 0)
    })
}

/// Runs `f` on a rayon pool sized by settings or the environment.
pub(crate) fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Sampler(format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Samples `chains x samples` parameter draws from `P(theta | X)`.
pub fn sample_parameters(model: &Model, obs: &ObservationMatrix, settings: &SamplerSettings) -> Result<PosteriorDraws> {
    settings.check()?;
    let violations = crate::data::validate(obs, model.spec());
    if !violations.is_empty() {
        let msg: Vec<String> = violations.into_iter().map(|v| v.0).collect();
        return Err(Error::Shape(msg.join("; ")));
    }
    let target = Target::new(model, obs, settings.likelihood)?;
    let outputs: Vec<Result<ChainOutput>> = with_pool(thread_count(settings), || {
        (0..settings.chains)
            .into_par_iter()
            .map(|c| run_chain(&target, settings, c))
            .collect()
    })?;
    let mut draws = Vec::with_capacity(settings.chains * settings.samples);
    let mut stats = Vec::with_capacity(settings.chains);
    for out in outputs {
        let out = out?;
        draws.extend(out.draws);
        stats.push(out.stats);
    }
    PosteriorDraws::new(model.layout().clone(), draws, stats)
}

const MAX_INIT_ATTEMPTS: usize = 100;

fn initial_point(target: &Target, settings: &SamplerSettings, rng: &mut ChaCha8Rng, chain: usize) -> Result<(State, usize)> {
    let dim = target.dim();
    let mut last = f64::NAN;
    for attempt in 1..=MAX_INIT_ATTEMPTS {
        let u: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-settings.init_radius..=settings.init_radius))
            .collect();
        let z = State::new(target, u);
        if z.log_p.is_finite() && z.grad.iter().all(|g| g.is_finite()) {
            return Ok((z, attempt));
        }
        last = z.log_p;
    }
    Err(Error::Sampler(format!(
        "chain {chain}: no starting point with finite log posterior after {MAX_INIT_ATTEMPTS} attempts \
         (last value {last}); check the data against the model"
    )))
}

fn record(target: &Target, chain: usize, iteration: usize, u: &[f64]) -> Draw {
    let mut values = vec![0.0; target.model().layout().len()];
    target.transform().constrain_into(u, &mut values);
    Draw {
        chain,
        iteration,
        values,
        log_posterior: target.log_posterior_constrained(u),
    }
}

fn run_chain(target: &Target, settings: &SamplerSettings, chain: usize) -> Result<ChainOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(settings.seed, chain as u64));
    let (z, init_attempts) = initial_point(target, settings, &mut rng, chain)?;
    match settings.algorithm {
        Algorithm::Nuts => run_nuts(target, settings, chain, z, init_attempts, &mut rng),
        Algorithm::Metropolis => run_metropolis(target, settings, chain, z, init_attempts, &mut rng),
    }
}

fn run_nuts(
    target: &Target,
    settings: &SamplerSettings,
    chain: usize,
    mut z: State,
    init_attempts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut kernel = Nuts::new(dim, 1.0, settings.max_depth);
    kernel.init_step_size(target, &z, rng);
    let mut da = DualAveraging::new(settings.target_accept, kernel.step_size);
    let mut schedule = WindowSchedule::new(settings.warmup);
    let mut var = Welford::new(dim);
    let mut warmup_divergences = 0;

    for _ in 0..settings.warmup {
        let info = kernel.transition(target, &mut z, rng);
        warmup_divergences += info.divergent as usize;
        kernel.step_size = da.update(info.accept_stat);
        if schedule.in_window() {
            var.add(&z.q);
        }
        if schedule.step() {
            kernel.inv_metric = regularize(&var.variance(), var.count());
            var.restart();
            kernel.init_step_size(target, &z, rng);
            da.restart(kernel.step_size);
        }
    }
    if settings.warmup > 0 {
        kernel.step_size = da.final_step();
    }

    let mut draws = Vec::with_capacity(settings.samples);
    let (mut divergences, mut accept, mut leapfrog, mut depth_hits) = (0, 0.0, 0usize, 0);
    for it in 0..settings.samples {
        let info = kernel.transition(target, &mut z, rng);
        divergences += info.divergent as usize;
        accept += info.accept_stat;
        leapfrog += info.n_leapfrog;
        depth_hits += (info.depth >= settings.max_depth) as usize;
        draws.push(record(target, chain, it, &z.q));
    }
    let n = settings.samples as f64;
    Ok(ChainOutput {
        draws,
        stats: ChainStats {
            chain,
            algorithm: Algorithm::Nuts,
            iterations: settings.samples,
            warmup: settings.warmup,
            divergences,
            warmup_divergences,
            step_size: kernel.step_size,
            mean_accept: accept / n,
            mean_leapfrog: leapfrog as f64 / n,
            max_depth_hits: depth_hits,
            inv_metric: kernel.inv_metric,
            init_attempts,
        },
    })
}

fn run_metropolis(
    target: &Target,
    settings: &SamplerSettings,
    chain: usize,
    z: State,
    init_attempts: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ChainOutput> {
    let dim = target.dim();
    let mut kernel = RandomWalk::new(dim);
    let mut schedule = WindowSchedule::new(settings.warmup);
    let mut var = Welford::new(dim);
    let mut x = z.q;
    let mut lp = z.log_p;
    let density = |u: &[f64]| target.log_density(u);

    for _ in 0..settings.warmup {
        let a = kernel.step(density, &mut x, &mut lp, rng);
        kernel.adapt(a);
        if schedule.in_window() {
            var.add(&x);
        }
        if schedule.step() {
            kernel.coord_sd = regularize(&var.variance(), var.count()).iter().map(|v| v.sqrt()).collect();
            var.restart();
            kernel.restart();
        }
    }

    let mut draws = Vec::with_capacity(settings.samples);
    let mut accept = 0.0;
    for it in 0..settings.samples {
        accept += kernel.step(density, &mut x, &mut lp, rng);
        draws.push(record(target, chain, it, &x));
    }
    Ok(ChainOutput {
        draws,
        stats: ChainStats {
            chain,
            algorithm: Algorithm::Metropolis,
            iterations: settings.samples,
            warmup: settings.warmup,
            divergences: 0,
            warmup_divergences: 0,
            step_size: kernel.scale,
            mean_accept: accept / settings.samples as f64,
            mean_leapfrog: 0.0,
            max_depth_hits: 0,
            inv_metric: kernel.coord_sd.iter().map(|s| s * s).collect(),
            init_attempts,
        },
    })
}
