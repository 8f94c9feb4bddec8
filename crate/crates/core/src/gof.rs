//! Posterior-predictive checks: replicate datasets, predictive means, discrepancies and fit summaries.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{all_pairs, NodeIndex, Observation, ObservationMatrix, Pair};
use crate::error::{Error, Result};
use crate::math::mix_seed;
use crate::models::{Model, ParameterVector};
use crate::network::{check_draws, check_inputs, pair_posterior_into, AdjacencySample};
use crate::sampler::PosteriorDraws;

/// Draws per parallel work unit.
const DRAW_CHUNK: usize = 64;

/// Floor applied to predicted values inside the discrepancy logarithm.
pub const PREDICTION_FLOOR: f64 = 1e-12;

/// Predicted or observed values for every pair, one entry per measured direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PairValues {
    n: usize,
    arity: usize,
    values: Vec<f64>,
}

impl PairValues {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Entries per pair: 2 for ordered-pair records, else 1.
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn get(&self, pair: Pair) -> &[f64] {
        let at = pair.linear_index(self.n) * self.arity;
        &self.values[at..at + self.arity]
    }

    /// All entries in row-major pair order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Observed values of `obs` in the same layout.
    pub fn observed(obs: &ObservationMatrix) -> Self {
        let arity = if obs.is_directed() { 2 } else { 1 };
        let values = obs.iter_pairs().flat_map(|(_, r)| r.values().map(f64::from)).collect();
        PairValues { n: obs.n(), arity, values }
    }
}

fn draw_mean_into(model: &Model, obs: &ObservationMatrix, t: &[f64], out: &mut [f64]) -> Result<()> {
    let k = model.edge_types();
    let arity = model.arity();
    let mut q = vec![0.0; k];
    for ((pair, rec), slot) in obs.iter_pairs().zip(out.chunks_mut(arity)) {
        pair_posterior_into(model, pair, &rec, t, &mut q)?;
        slot.iter_mut().for_each(|v| *v = 0.0);
        for (kk, &qk) in q.iter().enumerate() {
            if qk > 0.0 {
                for (v, m) in slot.iter_mut().zip(model.mean_term(pair, kk, t, &rec)) {
                    *v += qk * m;
                }
            }
        }
    }
    Ok(())
}

/// `X~_ij(theta) = Σ_k E[X~_ij | k, theta] Q_ij(k | theta)` at one parameter vector.
pub fn draw_predictive_mean(model: &Model, theta: &ParameterVector, obs: &ObservationMatrix) -> Result<PairValues> {
    check_inputs(model, obs, theta)?;
    let arity = model.arity();
    let mut values = vec![0.0; obs.pair_count() * arity];
    draw_mean_into(model, obs, theta.values(), &mut values)?;
    Ok(PairValues { n: obs.n(), arity, values })
}

/// Posterior-predictive means `<X~_ij>` averaged over draws, without sampling networks.
pub fn predictive_mean(model: &Model, draws: &PosteriorDraws, obs: &ObservationMatrix) -> Result<PairValues> {
    check_draws(model, obs, draws)?;
    let arity = model.arity();
    let len = obs.pair_count() * arity;
    // Fixed-size chunks summed in order keep the result independent of the thread count.
    let partial: Vec<Result<Vec<f64>>> = draws
        .draws()
        .par_chunks(DRAW_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; len];
            let mut buf = vec![0.0; len];
            for d in chunk {
                draw_mean_into(model, obs, &d.values, &mut buf)?;
                acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
            }
            Ok(acc)
        })
        .collect();
    let mut sum = vec![0.0; len];
    for p in partial {
        sum.iter_mut().zip(&p?).for_each(|(a, b)| *a += b);
    }
    let m = draws.len() as f64;
    Ok(PairValues {
        n: obs.n(),
        arity,
        values: sum.into_iter().map(|v| v / m).collect(),
    })
}

fn simulate_pair<R: Rng + ?Sized>(
    model: &Model,
    pair: Pair,
    rec: &Observation,
    t: &[f64],
    q: &mut [f64],
    rng: &mut R,
) -> Result<Observation> {
    pair_posterior_into(model, pair, rec, t, q)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = q.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (kk, &p) in q.iter().enumerate() {
        acc += p;
        if u < acc {
            k = kk;
            break;
        }
    }
    Ok(model.sample_term(pair, k, t, rec, rng))
}

/// Synthetic dataset: per pair, `A_ij ~ Q_ij(. | theta)` then `X~_ij ~ mu(. | A_ij, theta)`.
/// Trial counts and record shape follow `obs`.
pub fn simulate_dataset<R: Rng + ?Sized>(
    model: &Model,
    theta: &ParameterVector,
    obs: &ObservationMatrix,
    rng: &mut R,
) -> Result<ObservationMatrix> {
    check_inputs(model, obs, theta)?;
    let mut q = vec![0.0; model.edge_types()];
    let default = obs.default_record();
    let mut records = Vec::new();
    for (pair, rec) in obs.iter_pairs() {
        let x = simulate_pair(model, pair, &rec, theta.values(), &mut q, rng)?;
        if x != default {
            records.push((pair, x));
        }
    }
    ObservationMatrix::new(obs.nodes().clone(), obs.is_directed(), records)
}

/// Synthetic measurements of a known network: `X_ij ~ mu(. | A_ij, theta)` for every pair.
///
/// Binomial models take the trial count from the model's `default_trials`. Only records that
/// differ from the all-zero default are stored.
pub fn simulate_observations<R: Rng + ?Sized>(
    model: &Model,
    theta: &ParameterVector,
    nodes: &NodeIndex,
    truth: &AdjacencySample,
    rng: &mut R,
) -> Result<ObservationMatrix> {
    if nodes.len() != model.node_count() || truth.n() != model.node_count() {
        return Err(Error::Shape("node count differs from the model".into()));
    }
    let directed = model.arity() == 2;
    let template = Observation {
        count: 0,
        reverse: directed.then_some(0),
        trials: None,
    };
    // Validates the template (trial count present) and theta once.
    model.predictive_mean_mu(Pair::new(0, 1), 0, theta, &template)?;
    let mut records = Vec::new();
    for pair in all_pairs(nodes.len()) {
        let x = model.sample_term(pair, truth.get(pair), theta.values(), &template, rng);
        if x != template {
            records.push((pair, x));
        }
    }
    ObservationMatrix::new(nodes.clone(), directed, records)
}

/// `D = Σ X log(X / max(X~, floor))` and the number of terms where the floor applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub value: f64,
    pub floored: usize,
}

fn discrepancy_term(x: f64, predicted: f64, floored: &mut usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if predicted < PREDICTION_FLOOR {
        *floored += 1;
    }
    x * (x / predicted.max(PREDICTION_FLOOR)).ln()
}

/// Discrepancy between `data` and predicted values in matching layout.
pub fn discrepancy(data: &PairValues, predicted: &PairValues) -> Result<Discrepancy> {
    if data.n != predicted.n || data.arity != predicted.arity {
        return Err(Error::Shape("data and prediction layouts differ".into()));
    }
    let mut floored = 0;
    let value = data
        .values
        .iter()
        .zip(&predicted.values)
        .map(|(&x, &p)| discrepancy_term(x, p, &mut floored))
        .sum();
    Ok(Discrepancy { value, floored })
}

/// Discrepancies of the observed and of one replicate dataset under draw `draw`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawDiscrepancy {
    pub draw: usize,
    pub d_data: f64,
    pub d_model: f64,
}

/// Fraction of draws with `D_model > D_data`; ties count one half.
pub fn p_value(pairs: &[DrawDiscrepancy]) -> f64 {
    if pairs.is_empty() {
        return f64::NAN;
    }
    let score: f64 = pairs
        .iter()
        .map(|d| {
            if d.d_model > d.d_data {
                1.0
            } else if d.d_model == d.d_data {
                0.5
            } else {
                0.0
            }
        })
        .sum();
    score / pairs.len() as f64
}

/// `1 - SS_res / SS_tot` over all measured values. `None` for constant data.
pub fn r_squared(observed: &PairValues, predicted: &PairValues) -> Option<f64> {
    if observed.values.len() != predicted.values.len() || observed.values.is_empty() {
        return None;
    }
    let n = observed.values.len() as f64;
    let mean = observed.values.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.values.iter().map(|x| (x - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return None;
    }
    let ss_res: f64 = observed.values.iter().zip(&predicted.values).map(|(x, p)| (x - p).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

/// Probability that a reported tie is real: `rho a / (rho a + (1 - rho) b)`.
/// `None` when the denominator vanishes or an input is outside `[0, 1]`.
pub fn precision(alpha: f64, beta: f64, rho: f64) -> Option<f64> {
    if ![alpha, beta, rho].iter().all(|v| (0.0..=1.0).contains(v)) {
        return None;
    }
    let num = rho * alpha;
    let den = num + (1.0 - rho) * beta;
    (den > 0.0).then(|| num / den)
}

/// Posterior-predictive check results.
#[derive(Debug, Clone, PartialEq)]
pub struct GofReport {
    pub draws: Vec<DrawDiscrepancy>,
    pub p_value: f64,
    pub predicted: PairValues,
    pub observed: PairValues,
    pub r_squared: Option<f64>,
    /// Discrepancy terms where the prediction floor applied, over all draws and both datasets.
    pub floor_hits: usize,
}

/// Serializable digest of a [`GofReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofSummary {
    pub draws: usize,
    pub p_value: f64,
    pub r_squared: Option<f64>,
    pub mean_residue: f64,
    pub mean_abs_residue: f64,
    pub rms_residue: f64,
    pub max_abs_residue: f64,
    pub floor_hits: usize,
}

impl GofReport {
    /// `<X~> - X` per measured value.
    pub fn residues(&self) -> Vec<f64> {
        self.predicted.values.iter().zip(&self.observed.values).map(|(p, x)| p - x).collect()
    }

    pub fn summary(&self) -> GofSummary {
        let r = self.residues();
        let n = r.len().max(1) as f64;
        GofSummary {
            draws: self.draws.len(),
            p_value: self.p_value,
            r_squared: self.r_squared,
            mean_residue: r.iter().sum::<f64>() / n,
            mean_abs_residue: r.iter().map(|v| v.abs()).sum::<f64>() / n,
            rms_residue: (r.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            max_abs_residue: r.iter().fold(0.0, |m, v| m.max(v.abs())),
            floor_hits: self.floor_hits,
        }
    }

    /// `draw,D_data,D_model` rows.
    pub fn write_discrepancies<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["draw", "D_data", "D_model"])?;
        for d in &self.draws {
            w.write_record([d.draw.to_string(), d.d_data.to_string(), d.d_model.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("gof", e))?;
        Ok(())
    }

    /// `label_i,label_j,observed,predicted,residue` rows, one per measured direction.
    pub fn write_predicted<W: Write>(&self, nodes: &NodeIndex, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label_i", "label_j", "observed", "predicted", "residue"])?;
        for pair in all_pairs(self.observed.n) {
            let dirs = [(pair.i, pair.j), (pair.j, pair.i)];
            for (d, (x, p)) in self.observed.get(pair).iter().zip(self.predicted.get(pair)).enumerate() {
                let (a, b) = dirs[d];
                w.write_record([
                    nodes.label(a),
                    nodes.label(b),
                    &x.to_string(),
                    &p.to_string(),
                    &(p - x).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("predicted", e))?;
        Ok(())
    }
}

/// Reads `draw,D_data,D_model` rows written by [`GofReport::write_discrepancies`].
pub fn read_discrepancies<R: std::io::Read>(input: R) -> Result<Vec<DrawDiscrepancy>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != ["draw", "D_data", "D_model"] {
        return Err(Error::Shape(format!("unexpected discrepancy header {header:?}")));
    }
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let bad = |m: String| Error::Parse { line: line + 2, message: m };
        let field = |i: usize| row.get(i).ok_or_else(|| bad(format!("missing column {i}")));
        out.push(DrawDiscrepancy {
            draw: field(0)?.parse().map_err(|e| bad(format!("{e}")))?,
            d_data: field(1)?.parse().map_err(|e| bad(format!("{e}")))?,
            d_model: field(2)?.parse().map_err(|e| bad(format!("{e}")))?,
        });
    }
    Ok(out)
}

/// One replicate dataset per draw, keyed by `(seed, draw index)`; both discrepancies use that
/// draw's predictive mean under the observed data.
pub fn ppc_pvalue(model: &Model, obs: &ObservationMatrix, draws: &PosteriorDraws, seed: u64) -> Result<GofReport> {
    check_draws(model, obs, draws)?;
    let observed = PairValues::observed(obs);
    let arity = model.arity();
    let len = obs.pair_count() * arity;
    let per_chunk: Vec<Result<(Vec<DrawDiscrepancy>, usize, Vec<f64>)>> = draws
        .draws()
        .par_chunks(DRAW_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut out = Vec::with_capacity(chunk.len());
            let mut floored = 0;
            let mut acc = vec![0.0; len];
            let mut mean = vec![0.0; len];
            let mut q = vec![0.0; model.edge_types()];
            for (off, d) in chunk.iter().enumerate() {
                let r = c * DRAW_CHUNK + off;
                let t = &d.values;
                draw_mean_into(model, obs, t, &mut mean)?;
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, r as u64));
                let d_data = observed
                    .values
                    .iter()
                    .zip(&mean)
                    .map(|(&x, &p)| discrepancy_term(x, p, &mut floored))
                    .sum();
                let mut d_model = 0.0;
                for ((pair, rec), m) in obs.iter_pairs().zip(mean.chunks(arity)) {
                    let x = simulate_pair(model, pair, &rec, t, &mut q, &mut rng)?;
                    for (v, &p) in x.values().zip(m) {
                        d_model += discrepancy_term(v as f64, p, &mut floored);
                    }
                }
                out.push(DrawDiscrepancy { draw: r, d_data, d_model });
                acc.iter_mut().zip(&mean).for_each(|(a, b)| *a += b);
            }
            Ok((out, floored, acc))
        })
        .collect();
    let mut pairs = Vec::with_capacity(draws.len());
    let mut floor_hits = 0;
    let mut sum = vec![0.0; len];
    for item in per_chunk {
        let (d, f, acc) = item?;
        pairs.extend(d);
        floor_hits += f;
        sum.iter_mut().zip(&acc).for_each(|(a, b)| *a += b);
    }
    let m = draws.len() as f64;
    let predicted = PairValues {
        n: obs.n(),
        arity,
        values: sum.into_iter().map(|v| v / m).collect(),
    };
    Ok(GofReport {
        p_value: p_value(&pairs),
        r_squared: r_squared(&observed, &predicted),
        draws: pairs,
        predicted,
        observed,
        floor_hits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DataModelKind, ModelSpec, NetworkModelKind};

    fn poisson(n: usize, records: &[(usize, usize, u32)]) -> (Model, ObservationMatrix) {
        let nodes = NodeIndex::numbered(n);
        let obs = ObservationMatrix::new(
            nodes.clone(),
            false,
            records.iter().map(|&(i, j, x)| (Pair::new(i, j), Observation::count(x))),
        )
        .unwrap();
        let m = Model::new(ModelSpec::new(DataModelKind::Poisson, NetworkModelKind::RandomGraph), &nodes).unwrap();
        (m, obs)
    }

    #[test]
    fn predictive_mean_examples() {
        let (m, obs) = poisson(2, &[]);
        let theta = m.parameters(vec![0.0, 5.0, 1.0]).unwrap();
        assert_eq!(draw_predictive_mean(&m, &theta, &obs).unwrap().values(), &[5.0]);
        // rho chosen so that X = 0 leaves Q = (1/2, 1/2) when lambda = (0, 10).
        let rho = 1.0 / (1.0 + (-10.0f64).exp());
        let theta = m.parameters(vec![0.0, 10.0, rho]).unwrap();
        let v = predictive_mean(&m, &PosteriorDraws::single(&theta), &obs).unwrap();
        assert!((v.values()[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_model_simulates_zeros() {
        let (m, obs) = poisson(5, &[]);
        let theta = m.parameters(vec![0.0, 1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = simulate_dataset(&m, &theta, &obs, &mut rng).unwrap();
        assert_eq!(x.record_count(), 0);
    }

    #[test]
    fn discrepancy_examples() {
        let (_, obs) = poisson(2, &[(0, 1, 2)]);
        let data = PairValues::observed(&obs);
        assert_eq!(discrepancy(&data, &data).unwrap().value, 0.0);
        let one = PairValues { n: 2, arity: 1, values: vec![1.0] };
        let d = discrepancy(&data, &one).unwrap();
        assert!((d.value - 2.0 * 2f64.ln()).abs() < 1e-15);
        let zero = PairValues { n: 2, arity: 1, values: vec![0.0] };
        let d = discrepancy(&data, &zero).unwrap();
        assert_eq!(d.floored, 1);
        assert!((d.value - 2.0 * (2.0 / PREDICTION_FLOOR).ln()).abs() < 1e-9);
    }

    #[test]
    fn p_value_ties_and_extremes() {
        let mk = |d: f64, m: f64| DrawDiscrepancy { draw: 0, d_data: d, d_model: m };
        assert_eq!(p_value(&[mk(0.0, 1.0), mk(0.0, 2.0)]), 1.0);
        assert_eq!(p_value(&[mk(0.0, 0.0)]), 0.5);
        assert_eq!(p_value(&[mk(1.0, 0.0), mk(0.0, 1.0), mk(1.0, 1.0), mk(2.0, 0.0)]), 0.375);
    }

    #[test]
    fn deterministic_model_ties() {
        let nodes = NodeIndex::numbered(3);
        let m = Model::new(ModelSpec::new(DataModelKind::Exact, NetworkModelKind::RandomGraph), &nodes).unwrap();
        let obs = ObservationMatrix::new(nodes, false, [(Pair::new(0, 1), Observation::count(1))]).unwrap();
        let theta = m.parameters(vec![0.3]).unwrap();
        let r = ppc_pvalue(&m, &obs, &PosteriorDraws::single(&theta), 1).unwrap();
        assert_eq!(r.draws[0].d_data, 0.0);
        assert_eq!(r.draws[0].d_model, 0.0);
        assert_eq!(r.p_value, 0.5);
        assert_eq!(r.r_squared, Some(1.0));
    }

    #[test]
    fn r_squared_examples() {
        let obs = PairValues { n: 3, arity: 1, values: vec![1.0, 2.0, 6.0] };
        assert_eq!(r_squared(&obs, &obs), Some(1.0));
        let flat = PairValues { n: 3, arity: 1, values: vec![3.0; 3] };
        assert_eq!(r_squared(&obs, &flat), Some(0.0));
        assert_eq!(r_squared(&flat, &obs), None);
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision(0.7, 0.0, 0.1), Some(1.0));
        assert!((precision(0.3, 0.3, 0.2).unwrap() - 0.2).abs() < 1e-15);
        assert!((precision(0.7605, 0.0065, 0.004).unwrap() - 0.320).abs() < 1e-3);
        assert_eq!(precision(0.0, 0.0, 0.5), None);
    }

    #[test]
    fn discrepancy_csv_round_trip() {
        let (m, obs) = poisson(4, &[(0, 1, 4), (2, 3, 1)]);
        let theta = m.parameters(vec![0.5, 4.0, 0.3]).unwrap();
        let r = ppc_pvalue(&m, &obs, &PosteriorDraws::single(&theta), 7).unwrap();
        let mut buf = Vec::new();
        r.write_discrepancies(&mut buf).unwrap();
        let back = read_discrepancies(buf.as_slice()).unwrap();
        assert_eq!(back, r.draws);
        assert_eq!(p_value(&back), r.p_value);
    }
}
