//! Marginal parameter posterior `log P(theta | X)` with every network summed out.

use crate::data::{count_histogram, CountHistogram, Observation, ObservationMatrix, Pair};
use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::models::{Model, ParameterVector, Partials};

use super::transform::Transform;

/// How the per-pair likelihood product is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodMode {
    /// Pooled when the model is pair-exchangeable and the data undirected, else naive.
    #[default]
    Auto,
    /// One term per node pair.
    Naive,
    /// One term per distinct observation record, raised to its multiplicity.
    Pooled,
}

/// `Σ_(i,j) log Σ_k mu_ij(k) nu_ij(k)` by a loop over every pair.
pub fn naive_log_likelihood(model: &Model, obs: &ObservationMatrix, theta: &ParameterVector) -> Result<f64> {
    check_inputs(model, obs, theta)?;
    let t = theta.values();
    let mut w = vec![0.0; model.edge_types()];
    let mut total = 0.0;
    for (pair, rec) in obs.iter_pairs() {
        model.pair_log_weights(pair, &rec, t, &mut w);
        total += log_sum_exp(&w);
    }
    Ok(total)
}

/// `Σ_X n(X) log Σ_k mu(X, k) nu(k)` over histogram bins.
pub fn pooled_log_likelihood(model: &Model, hist: &CountHistogram, theta: &ParameterVector) -> Result<f64> {
    if !model.is_exchangeable() {
        return Err(Error::Unsupported(format!(
            "pooled likelihood needs a pair-exchangeable model ({} / {})",
            model.spec().data.name(),
            model.spec().network.name()
        )));
    }
    theta.check_domain()?;
    let t = theta.values();
    let mut w = vec![0.0; model.edge_types()];
    let mut total = 0.0;
    let any_pair = Pair::new(0, 1);
    for (rec, &count) in &hist.bins {
        model.pair_log_weights(any_pair, rec, t, &mut w);
        let l = log_sum_exp(&w);
        if l == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        total += count as f64 * l;
    }
    Ok(total)
}

/// `log P(theta) + Σ_(i,j) log Σ_k mu_ij(k) nu_ij(k)`; `-inf` outside the domain.
pub fn log_marginal_posterior(model: &Model, obs: &ObservationMatrix, theta: &ParameterVector) -> Result<f64> {
    if theta.layout().as_ref() != model.layout().as_ref() {
        return Err(Error::Shape("parameter vector belongs to a different model".into()));
    }
    let prior = model.log_prior(theta);
    if prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(prior + naive_log_likelihood(model, obs, theta)?)
}

fn check_inputs(model: &Model, obs: &ObservationMatrix, theta: &ParameterVector) -> Result<()> {
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
    let violations = crate::data::validate(obs, model.spec());
    if let Some(v) = violations.first() {
        return Err(Error::Shape(v.0.clone()));
    }
    theta.check_domain()
}

/// Log density over unconstrained coordinates: marginal posterior plus log-Jacobian.
///
/// Holds a pooled view of the data when the model allows it.
pub struct Target<'a> {
    model: &'a Model,
    transform: Transform,
    terms: Terms<'a>,
}

enum Terms<'a> {
    Pairs(&'a ObservationMatrix),
    Pooled(Vec<(Observation, f64)>),
}

impl<'a> Target<'a> {
    pub fn new(model: &'a Model, obs: &'a ObservationMatrix, mode: LikelihoodMode) -> Result<Self> {
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
        let poolable = model.is_exchangeable() && !obs.is_directed();
        let pooled = match mode {
            LikelihoodMode::Auto => poolable,
            LikelihoodMode::Naive => false,
            LikelihoodMode::Pooled if poolable => true,
            LikelihoodMode::Pooled => {
                return Err(Error::Unsupported(
                    "pooled likelihood needs a pair-exchangeable model and undirected data".into(),
                ))
            }
        };
        let terms = if pooled {
            let hist = count_histogram(obs)?;
            Terms::Pooled(hist.bins.into_iter().map(|(o, c)| (o, c as f64)).collect())
        } else {
            Terms::Pairs(obs)
        };
        Ok(Target {
            model,
            transform: Transform::new(model.layout().clone()),
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn is_pooled(&self) -> bool {
        matches!(self.terms, Terms::Pooled(_))
    }

    /// Log likelihood and its gradient with respect to the constrained values.
    fn likelihood_grad(&self, x: &[f64], g_x: &mut [f64]) -> f64 {
        if let Terms::Pairs(obs) = &self.terms {
            if let Some(v) = self.model.report_log_likelihood(obs, x, Some(g_x)) {
                return v;
            }
        }
        self.pairwise_likelihood_grad(x, g_x)
    }

    fn pairwise_likelihood_grad(&self, x: &[f64], g_x: &mut [f64]) -> f64 {
        let k = self.model.edge_types();
        let mut w = vec![0.0; k];
        let mut parts = vec![Partials::new(); k];
        let mut total = 0.0;
        let mut add = |pair: Pair, rec: &Observation, mult: f64, g_x: &mut [f64]| -> bool {
            self.model.pair_log_weights_grad(pair, rec, x, &mut w, &mut parts);
            let l = log_sum_exp(&w);
            if !l.is_finite() {
                return false;
            }
            total += mult * l;
            for (wk, pk) in w.iter().zip(&parts) {
                let q = (wk - l).exp();
                if q == 0.0 {
                    continue;
                }
                for &(idx, d) in pk {
                    g_x[idx] += mult * q * d;
                }
            }
            true
        };
        let ok = match &self.terms {
            Terms::Pairs(obs) => obs.iter_pairs().all(|(p, r)| add(p, &r, 1.0, g_x)),
            Terms::Pooled(bins) => bins.iter().all(|(r, c)| add(Pair::new(0, 1), r, *c, g_x)),
        };
        if ok {
            total
        } else {
            f64::NEG_INFINITY
        }
    }

    fn likelihood(&self, x: &[f64]) -> f64 {
        if let Terms::Pairs(obs) = &self.terms {
            if let Some(v) = self.model.report_log_likelihood(obs, x, None) {
                return if v.is_nan() { f64::NEG_INFINITY } else { v };
            }
        }
        let mut w = vec![0.0; self.model.edge_types()];
        let mut total = 0.0;
        let mut term = |pair: Pair, rec: &Observation, mult: f64| {
            self.model.pair_log_weights(pair, rec, x, &mut w);
            total += mult * log_sum_exp(&w);
        };
        match &self.terms {
            Terms::Pairs(obs) => obs.iter_pairs().for_each(|(p, r)| term(p, &r, 1.0)),
            Terms::Pooled(bins) => bins.iter().for_each(|(r, c)| term(Pair::new(0, 1), r, *c)),
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    fn log_prior_values(&self, x: &[f64], g_x: Option<&mut [f64]>) -> f64 {
        let mut lp = 0.0;
        let mut g_x = g_x;
        for b in self.model.layout().blocks() {
            for i in b.range() {
                lp += b.prior.log_density(x[i]);
                if let Some(g) = g_x.as_deref_mut() {
                    g[i] += b.prior.d_log_density(x[i]);
                }
            }
        }
        lp
    }

    /// Log density at `u` (up to a constant), including the log-Jacobian.
    pub fn log_density(&self, u: &[f64]) -> f64 {
        let mut x = vec![0.0; self.model.layout().len()];
        let lj = self.transform.constrain_into(u, &mut x);
        let v = self.log_prior_values(&x, None) + self.likelihood(&x) + lj;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// As [`Self::log_density`], writing the gradient into `grad`.
    pub fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        let mut x = vec![0.0; self.model.layout().len()];
        let lj = self.transform.constrain_into(u, &mut x);
        let mut g_x = vec![0.0; x.len()];
        let ll = self.likelihood_grad(&x, &mut g_x);
        let lp = self.log_prior_values(&x, Some(&mut g_x));
        self.transform.pullback(u, &x, &g_x, grad);
        let v = ll + lp + lj;
        if v.is_nan() || grad.iter().any(|g| !g.is_finite()) {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    /// `log P(theta | X)` in constrained space (no Jacobian), at `u`.
    pub fn log_posterior_constrained(&self, u: &[f64]) -> f64 {
        let mut x = vec![0.0; self.model.layout().len()];
        self.transform.constrain_into(u, &mut x);
        self.log_prior_values(&x, None) + self.likelihood(&x)
    }
}

/// Value and gradient of the unconstrained log posterior (marginal posterior plus log-Jacobian).
pub fn gradient_log_posterior(model: &Model, obs: &ObservationMatrix, u: &[f64]) -> Result<(f64, Vec<f64>)> {
    let target = Target::new(model, obs, LikelihoodMode::Naive)?;
    if u.len() != target.dim() {
        return Err(Error::Shape(format!(
            "unconstrained vector has {} coordinates, expected {}",
            u.len(),
            target.dim()
        )));
    }
    let mut g = vec![0.0; u.len()];
    let v = target.log_density_grad(u, &mut g);
    if !v.is_finite() {
        return Err(Error::Domain("log posterior or its gradient is not finite at this point".into()));
    }
    Ok((v, g))
}
