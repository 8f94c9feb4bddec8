//! Bijections between constrained parameter blocks and unconstrained coordinates.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::math::{logit, sigmoid, softplus};
use crate::models::{Domain, ParamLayout, ParameterVector};

/// Maps a [`ParamLayout`] to and from `R^d`, `d = layout.free_dim()`.
///
/// | domain | map `x(u)` |
/// |---|---|
/// | unit interval | `sigmoid(u)` |
/// | interval `(lo, hi)` | `lo + (hi - lo) sigmoid(u)` |
/// | positive | `exp(u)` |
/// | ordered positive | `x_0 = exp(u_0)`, `x_k = x_{k-1} + exp(u_k)` |
/// | simplex | stick-breaking, `z_k = sigmoid(u_k - ln(K - 1 - k))` |
/// | real | identity |
#[derive(Debug, Clone)]
pub struct Transform {
    layout: Arc<ParamLayout>,
    dim: usize,
}

impl Transform {
    pub fn new(layout: Arc<ParamLayout>) -> Self {
        let dim = layout.free_dim();
        Transform { layout, dim }
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    /// Number of unconstrained coordinates.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Forward map. Returns the unconstrained point and `log |det dx/du|` at it.
    ///
    /// Values on a domain boundary (a rate of exactly 0, tied ordered values, a
    /// probability of exactly 0 or 1) have no finite preimage and are rejected.
    pub fn to_unconstrained(&self, theta: &ParameterVector) -> Result<(Vec<f64>, f64)> {
        theta.check_domain()?;
        let x = theta.values();
        let mut u = Vec::with_capacity(self.dim);
        for b in self.layout.blocks() {
            let xs = &x[b.range()];
            let boundary = |k: usize| -> Error {
                Error::Domain(format!(
                    "{} = {} lies on the domain boundary",
                    b.element_names[k], xs[k]
                ))
            };
            match b.domain {
                Domain::UnitInterval => {
                    for (k, &v) in xs.iter().enumerate() {
                        if v <= 0.0 || v >= 1.0 {
                            return Err(boundary(k));
                        }
                        u.push(logit(v));
                    }
                }
                Domain::Interval { lo, hi } => {
                    for &v in xs {
                        u.push(logit((v - lo) / (hi - lo)));
                    }
                }
                Domain::Positive => {
                    for (k, &v) in xs.iter().enumerate() {
                        if v <= 0.0 {
                            return Err(boundary(k));
                        }
                        u.push(v.ln());
                    }
                }
                Domain::OrderedPositive => {
                    let mut prev = 0.0;
                    for (k, &v) in xs.iter().enumerate() {
                        let d = v - prev;
                        if d <= 0.0 {
                            return Err(boundary(k));
                        }
                        u.push(d.ln());
                        prev = v;
                    }
                }
                Domain::Simplex => {
                    let kk = xs.len();
                    let mut stick = 1.0;
                    for (k, &v) in xs.iter().enumerate().take(kk.saturating_sub(1)) {
                        let z = v / stick;
                        if !(z > 0.0 && z < 1.0) {
                            return Err(boundary(k));
                        }
                        u.push(logit(z) + ((kk - 1 - k) as f64).ln());
                        stick -= v;
                    }
                }
                Domain::Real => u.extend_from_slice(xs),
            }
        }
        let mut scratch = vec![0.0; self.layout.len()];
        let log_j = self.constrain_into(&u, &mut scratch);
        Ok((u, log_j))
    }

    /// Inverse map. Fails only on a wrong-length input or a non-finite coordinate.
    pub fn from_unconstrained(&self, u: &[f64]) -> Result<ParameterVector> {
        self.check_len(u)?;
        if let Some(k) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("unconstrained coordinate {k} is not finite")));
        }
        let mut x = vec![0.0; self.layout.len()];
        self.constrain_into(u, &mut x);
        ParameterVector::new(self.layout.clone(), x)
    }

    /// `log |det dx/du|` at `u`.
    pub fn log_abs_det_jacobian(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        let mut x = vec![0.0; self.layout.len()];
        Ok(self.constrain_into(u, &mut x))
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::Shape(format!(
                "unconstrained vector has {} coordinates, expected {}",
                u.len(),
                self.dim
            )));
        }
        Ok(())
    }

    /// Writes `x(u)` into `x` and returns `log |det dx/du|`.
    pub(crate) fn constrain_into(&self, u: &[f64], x: &mut [f64]) -> f64 {
        let mut log_j = 0.0;
        let mut at = 0;
        for b in self.layout.blocks() {
            let xs = &mut x[b.range()];
            match b.domain {
                Domain::UnitInterval => {
                    for v in xs.iter_mut() {
                        let t = u[at];
                        at += 1;
                        *v = sigmoid(t);
                        log_j -= softplus(t) + softplus(-t);
                    }
                }
                Domain::Interval { lo, hi } => {
                    let w = hi - lo;
                    for v in xs.iter_mut() {
                        let t = u[at];
                        at += 1;
                        *v = lo + w * sigmoid(t);
                        log_j += w.ln() - softplus(t) - softplus(-t);
                    }
                }
                Domain::Positive => {
                    for v in xs.iter_mut() {
                        let t = u[at];
                        at += 1;
                        *v = t.exp();
                        log_j += t;
                    }
                }
                Domain::OrderedPositive => {
                    let mut acc = 0.0;
                    for v in xs.iter_mut() {
                        let t = u[at];
                        at += 1;
                        acc += t.exp();
                        *v = acc;
                        log_j += t;
                    }
                }
                Domain::Simplex => {
                    let kk = xs.len();
                    let mut stick = 1.0;
                    for k in 0..kk - 1 {
                        let t = u[at] - ((kk - 1 - k) as f64).ln();
                        at += 1;
                        let z = sigmoid(t);
                        xs[k] = stick * z;
                        log_j += stick.ln() - softplus(t) - softplus(-t);
                        stick -= xs[k];
                    }
                    xs[kk - 1] = stick;
                }
                Domain::Real => {
                    xs.copy_from_slice(&u[at..at + b.len]);
                    at += b.len;
                }
            }
        }
        log_j
    }

    /// Writes into `out` the gradient with respect to `u` of
    /// `f(x(u)) + log |det dx/du|`, given `x = x(u)` and `g_x = df/dx`.
    pub(crate) fn pullback(&self, u: &[f64], x: &[f64], g_x: &[f64], out: &mut [f64]) {
        let mut at = 0;
        for b in self.layout.blocks() {
            let r = b.range();
            let (xs, gs) = (&x[r.clone()], &g_x[r]);
            match b.domain {
                Domain::UnitInterval => {
                    for (&v, &g) in xs.iter().zip(gs) {
                        out[at] = g * v * (1.0 - v) + (1.0 - 2.0 * v);
                        at += 1;
                    }
                }
                Domain::Interval { lo, hi } => {
                    let w = hi - lo;
                    for (&v, &g) in xs.iter().zip(gs) {
                        let s = (v - lo) / w;
                        out[at] = g * w * s * (1.0 - s) + (1.0 - 2.0 * s);
                        at += 1;
                    }
                }
                Domain::Positive => {
                    for (&v, &g) in xs.iter().zip(gs) {
                        out[at] = g * v + 1.0;
                        at += 1;
                    }
                }
                Domain::OrderedPositive => {
                    let mut suffix = 0.0;
                    for k in (0..b.len).rev() {
                        suffix += gs[k];
                        out[at + k] = u[at + k].exp() * suffix + 1.0;
                    }
                    at += b.len;
                }
                Domain::Simplex => {
                    let kk = b.len;
                    // Forward pass to recover the sticks and break fractions.
                    let mut sticks = Vec::with_capacity(kk);
                    let mut zs = Vec::with_capacity(kk - 1);
                    let mut stick = 1.0;
                    for k in 0..kk - 1 {
                        let z = sigmoid(u[at + k] - ((kk - 1 - k) as f64).ln());
                        sticks.push(stick);
                        zs.push(z);
                        stick *= 1.0 - z;
                    }
                    // Adjoint of the running stick, seeded by the last element x_{K-1} = stick_{K-1}.
                    let mut a_stick = gs[kk - 1];
                    for k in (0..kk - 1).rev() {
                        let (s, z) = (sticks[k], zs[k]);
                        let a_z = gs[k] * s - a_stick * s + 1.0 / z - 1.0 / (1.0 - z);
                        out[at + k] = a_z * z * (1.0 - z);
                        a_stick = gs[k] * z + a_stick * (1.0 - z) + 1.0 / s;
                    }
                    at += kk - 1;
                }
                Domain::Real => {
                    out[at..at + b.len].copy_from_slice(gs);
                    at += b.len;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Prior;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout() -> Arc<ParamLayout> {
        let mut l = ParamLayout::new();
        l.scalar("rho", Domain::UnitInterval, Prior::Flat);
        l.indexed("lambda", 3, Domain::OrderedPositive, Prior::Flat);
        l.indexed("pi", 4, Domain::Simplex, Prior::Flat);
        l.indexed("alpha", 2, Domain::Interval { lo: 0.5, hi: 1.0 }, Prior::Flat);
        l.scalar("omega", Domain::Positive, Prior::Flat);
        l.indexed("d", 2, Domain::Real, Prior::Flat);
        Arc::new(l)
    }

    #[test]
    fn transform_examples() {
        let mut l = ParamLayout::new();
        l.scalar("rho", Domain::UnitInterval, Prior::Flat);
        let t = Transform::new(Arc::new(l));
        let theta = ParameterVector::new(t.layout().clone(), vec![0.5]).unwrap();
        let (u, _) = t.to_unconstrained(&theta).unwrap();
        assert_eq!(u, vec![0.0]);
        assert_eq!(t.from_unconstrained(&u).unwrap().values(), &[0.5]);

        let mut l = ParamLayout::new();
        l.indexed("lambda", 3, Domain::OrderedPositive, Prior::Flat);
        let t = Transform::new(Arc::new(l));
        let theta = ParameterVector::new(t.layout().clone(), vec![1.0, 2.0, 5.0]).unwrap();
        let (u, _) = t.to_unconstrained(&theta).unwrap();
        assert_eq!(u, vec![0.0, 0.0, 3f64.ln()]);
        assert_eq!(t.from_unconstrained(&u).unwrap().values(), &[1.0, 2.0, 5.0]);
    }

    #[test]
    fn boundary_values_rejected() {
        let mut l = ParamLayout::new();
        l.indexed("lambda", 2, Domain::OrderedPositive, Prior::Flat);
        let t = Transform::new(Arc::new(l));
        let tied = ParameterVector::new(t.layout().clone(), vec![1.0, 1.0]).unwrap();
        assert!(matches!(t.to_unconstrained(&tied), Err(Error::Domain(_))));
        let bad = ParameterVector::new_unchecked(t.layout().clone(), vec![2.0, 1.0]).unwrap();
        assert!(matches!(t.to_unconstrained(&bad), Err(Error::Domain(_))));
    }

    fn random_u(t: &Transform, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..t.dim()).map(|_| rng.random_range(-2.0..2.0)).collect()
    }

    #[test]
    fn round_trip() {
        let t = Transform::new(layout());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let u = random_u(&t, &mut rng);
            let theta = t.from_unconstrained(&u).unwrap();
            let (back, _) = t.to_unconstrained(&theta).unwrap();
            for (a, b) in u.iter().zip(&back) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            let again = t.from_unconstrained(&back).unwrap();
            for (a, b) in theta.values().iter().zip(again.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    /// Determinant of a square matrix by Gaussian elimination with partial pivoting.
    fn det(mut m: Vec<Vec<f64>>) -> f64 {
        let n = m.len();
        let mut d = 1.0;
        for c in 0..n {
            let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
            if m[p][c] == 0.0 {
                return 0.0;
            }
            if p != c {
                m.swap(p, c);
                d = -d;
            }
            d *= m[c][c];
            for r in c + 1..n {
                let f = m[r][c] / m[c][c];
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
            }
        }
        d
    }

    #[test]
    fn log_jacobian_matches_finite_difference_determinant() {
        let t = Transform::new(layout());
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let u = random_u(&t, &mut rng);
            // Drop the last simplex element: the free coordinates map onto the first K-1 values.
            let keep: Vec<usize> = {
                let mut idx = Vec::new();
                for b in t.layout().blocks() {
                    let r = b.range();
                    let end = if b.domain == Domain::Simplex { r.end - 1 } else { r.end };
                    idx.extend(r.start..end);
                }
                idx
            };
            let h = 1e-6;
            let mut jac = vec![vec![0.0; t.dim()]; t.dim()];
            let mut xp = vec![0.0; t.layout().len()];
            let mut xm = vec![0.0; t.layout().len()];
            for c in 0..t.dim() {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[c] += h;
                dn[c] -= h;
                t.constrain_into(&up, &mut xp);
                t.constrain_into(&dn, &mut xm);
                for (r, &i) in keep.iter().enumerate() {
                    jac[r][c] = (xp[i] - xm[i]) / (2.0 * h);
                }
            }
            let fd = det(jac).abs().ln();
            let analytic = t.log_abs_det_jacobian(&u).unwrap();
            assert!((fd - analytic).abs() < 1e-5 * analytic.abs().max(1.0), "{fd} vs {analytic}");
        }
    }

    #[test]
    fn pullback_matches_finite_differences() {
        let t = Transform::new(layout());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let u = random_u(&t, &mut rng);
            let w: Vec<f64> = (0..t.layout().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |u: &[f64]| {
                let mut x = vec![0.0; t.layout().len()];
                let lj = t.constrain_into(u, &mut x);
                x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + lj
            };
            let mut x = vec![0.0; t.layout().len()];
            t.constrain_into(&u, &mut x);
            let mut g = vec![0.0; t.dim()];
            t.pullback(&u, &x, &w, &mut g);
            for c in 0..t.dim() {
                let h = 1e-5;
                let mut up = u.clone();
                let mut dn = u.clone();
                up[c] += h;
                dn[c] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                assert!((fd - g[c]).abs() < 1e-6 * fd.abs().max(1.0), "coord {c}: {fd} vs {}", g[c]);
            }
        }
    }
}
