//! Convergence diagnostics: split potential scale reduction, effective sample size, summaries.

use serde::{Deserialize, Serialize};

use super::{ChainStats, PosteriorDraws};

/// Split-chain potential scale reduction. `None` with fewer than two chains,
/// fewer than four draws per chain, or zero within-chain variance.
pub fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    if chains.len() < 2 {
        return None;
    }
    let n = chains.iter().map(Vec::len).min()? / 2;
    if n < 2 {
        return None;
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let len = c.len();
        halves.push(&c[..n]);
        halves.push(&c[len - n..]);
    }
    let m = halves.len() as f64;
    let nf = n as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / nf).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = nf / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m;
    if !(w > 0.0) || !w.is_finite() {
        return None;
    }
    let var_plus = (nf - 1.0) / nf * w + b / nf;
    Some((var_plus / w).sqrt())
}

fn autocovariance(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n - lag {
        s += (x[i] - mean) * (x[i + lag] - mean);
    }
    s / n as f64
}

/// Effective sample size across chains using Geyer's initial monotone sequence.
/// `None` for fewer than four draws per chain or zero variance.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> Option<f64> {
    let m = chains.len();
    if m == 0 {
        return None;
    }
    let n = chains.iter().map(Vec::len).min()?;
    if n < 4 {
        return None;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, mu)| autocovariance(c, *mu, 0)).collect();
    let w = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = w * (nf - 1.0) / nf;
    if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return None;
    }
    let rho = |t: usize| -> f64 {
        let mean_acov = chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| autocovariance(c, *mu, t))
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };

    let mut rho_hat = vec![1.0, rho(1)];
    let mut t = 0;
    let mut even = rho_hat[0];
    let mut odd = rho_hat[1];
    while t + 3 < n && even + odd > 0.0 {
        t += 2;
        even = rho(t);
        odd = rho(t + 1);
        if even + odd >= 0.0 {
            rho_hat.push(even);
            rho_hat.push(odd);
        }
    }
    // Enforce a monotone non-increasing sequence of pair sums.
    let pairs = rho_hat.len() / 2;
    for k in 1..pairs {
        let prev = rho_hat[2 * k - 2] + rho_hat[2 * k - 1];
        let cur = rho_hat[2 * k] + rho_hat[2 * k + 1];
        if cur > prev {
            rho_hat[2 * k] = prev / 2.0;
            rho_hat[2 * k + 1] = prev / 2.0;
        }
    }
    let tau = (-1.0 + 2.0 * rho_hat.iter().sum::<f64>()).max(1.0 / (nf * m as f64).log10());
    Some(nf * m as f64 / tau)
}

/// Per-parameter summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    /// Split potential scale reduction; absent for one chain or constant draws.
    pub rhat: Option<f64>,
    pub ess: Option<f64>,
}

/// Multi-chain diagnostics for a set of posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub chains: usize,
    pub draws_per_chain: usize,
    /// False when between-chain statistics could not be computed.
    pub between_chain: bool,
    pub parameters: Vec<ParameterSummary>,
    pub log_posterior: ParameterSummary,
    pub chain_stats: Vec<ChainStats>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn max_rhat(&self) -> Option<f64> {
        self.parameters.iter().filter_map(|p| p.rhat).reduce(f64::max)
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let f = pos - lo as f64;
    sorted[lo] * (1.0 - f) + sorted[hi] * f
}

fn summarize(name: &str, per_chain: &[Vec<f64>]) -> ParameterSummary {
    let mut all: Vec<f64> = per_chain.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let sd = if all.len() > 1 {
        (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    all.sort_by(f64::total_cmp);
    ParameterSummary {
        name: name.to_string(),
        mean,
        sd,
        q05: quantile(&all, 0.05),
        q50: quantile(&all, 0.5),
        q95: quantile(&all, 0.95),
        rhat: split_rhat(per_chain),
        ess: effective_sample_size(per_chain),
    }
}

/// Rhat threshold above which a warning is emitted.
pub const RHAT_WARN: f64 = 1.05;

/// Summaries, scale reduction and effective sample sizes for every scalar parameter.
pub fn diagnostics(draws: &PosteriorDraws) -> Diagnostics {
    let names = draws.layout().names();
    let chains = draws.chain_count();
    let per_chain = draws.per_chain_values();
    let per_chain_lp = draws.per_chain_log_posterior();
    let draws_per_chain = per_chain_lp.iter().map(Vec::len).min().unwrap_or(0);
    let mut warnings = Vec::new();
    let between_chain = chains >= 2;
    if !between_chain {
        warnings.push("single chain: between-chain statistics omitted".to_string());
    }

    let mut parameters = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let series: Vec<Vec<f64>> = per_chain.iter().map(|c| c.iter().map(|v| v[j]).collect()).collect();
        let s = summarize(name, &series);
        if between_chain {
            match s.rhat {
                None => warnings.push(format!("{name}: scale reduction undefined (zero within-chain variance)")),
                Some(r) if r > RHAT_WARN => warnings.push(format!("{name}: scale reduction {r:.3} exceeds {RHAT_WARN}")),
                _ => {}
            }
        }
        parameters.push(s);
    }
    let log_posterior = summarize("log_posterior", &per_chain_lp);
    for cs in draws.chain_stats() {
        let total = cs.iterations.max(1);
        if cs.divergences as f64 > 0.01 * total as f64 {
            warnings.push(format!(
                "chain {}: {} divergent transitions out of {}",
                cs.chain, cs.divergences, total
            ));
        }
    }
    Diagnostics {
        chains,
        draws_per_chain,
        between_chain,
        parameters,
        log_posterior,
        chain_stats: draws.chain_stats().to_vec(),
        warnings,
    }
}
