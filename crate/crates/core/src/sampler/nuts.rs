//! No-U-turn Hamiltonian sampler with multinomial trajectory sampling and a diagonal metric.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::log_add_exp;

/// Energy error beyond which a trajectory is declared divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

/// A differentiable log density on `R^d`. Non-finite values mark invalid points.
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

impl LogDensity for super::posterior::Target<'_> {
    fn dim(&self) -> usize {
        super::posterior::Target::dim(self)
    }

    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        super::posterior::Target::log_density_grad(self, x, grad)
    }
}

/// Phase-space point with cached density and gradient.
#[derive(Debug, Clone)]
pub struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_p: f64,
}

impl State {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let log_p = target.log_density_grad(&q, &mut grad);
        let p = vec![0.0; q.len()];
        State { q, p, grad, log_p }
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionInfo {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
    pub energy: f64,
}

/// NUTS kernel state: step size, inverse metric and tree depth cap.
#[derive(Debug, Clone)]
pub struct Nuts {
    pub step_size: f64,
    pub inv_metric: Vec<f64>,
    pub max_depth: usize,
}

struct Subtree {
    p_beg: Vec<f64>,
    ps_beg: Vec<f64>,
    p_end: Vec<f64>,
    ps_end: Vec<f64>,
    rho: Vec<f64>,
    log_sum_weight: f64,
    proposal: State,
}

#[derive(Default)]
struct TreeStats {
    n_leapfrog: usize,
    sum_metro_prob: f64,
    divergent: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn no_u_turn(ps_minus: &[f64], ps_plus: &[f64], rho: &[f64]) -> bool {
    dot(ps_plus, rho) > 0.0 && dot(ps_minus, rho) > 0.0
}

impl Nuts {
    pub fn new(dim: usize, step_size: f64, max_depth: usize) -> Self {
        Nuts {
            step_size,
            inv_metric: vec![1.0; dim],
            max_depth,
        }
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
    }

    fn hamiltonian(&self, z: &State) -> f64 {
        let h = -z.log_p + self.kinetic(&z.p);
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    fn p_sharp(&self, p: &[f64]) -> Vec<f64> {
        p.iter().zip(&self.inv_metric).map(|(p, m)| p * m).collect()
    }

    fn sample_momentum<R: Rng + ?Sized>(&self, z: &mut State, rng: &mut R) {
        for (p, m) in z.p.iter_mut().zip(&self.inv_metric) {
            let n: f64 = rng.sample(StandardNormal);
            *p = n / m.sqrt();
        }
    }

    fn leapfrog<T: LogDensity + ?Sized>(&self, target: &T, z: &mut State, eps: f64) {
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
        for ((q, p), m) in z.q.iter_mut().zip(&z.p).zip(&self.inv_metric) {
            *q += eps * m * p;
        }
        z.log_p = target.log_density_grad(&z.q, &mut z.grad);
        if !z.log_p.is_finite() {
            z.log_p = f64::NEG_INFINITY;
            return;
        }
        for (p, g) in z.p.iter_mut().zip(&z.grad) {
            *p += 0.5 * eps * g;
        }
    }

    /// Heuristic initial step size: doubles or halves until one leapfrog step crosses 80% acceptance.
    pub fn init_step_size<T: LogDensity + ?Sized, R: Rng + ?Sized>(&mut self, target: &T, z0: &State, rng: &mut R) {
        let threshold = 0.8f64.ln();
        let mut z = z0.clone();
        self.sample_momentum(&mut z, rng);
        let h0 = self.hamiltonian(&z);
        self.leapfrog(target, &mut z, self.step_size);
        let dh = h0 - self.hamiltonian(&z);
        let grow = dh > threshold;
        for _ in 0..100 {
            let mut z = z0.clone();
            self.sample_momentum(&mut z, rng);
            let h0 = self.hamiltonian(&z);
            self.leapfrog(target, &mut z, self.step_size);
            let dh = h0 - self.hamiltonian(&z);
            if (grow && !(dh > threshold)) || (!grow && !(dh < threshold)) {
                break;
            }
            self.step_size = if grow { self.step_size * 2.0 } else { self.step_size * 0.5 };
            if self.step_size > 1e7 || self.step_size < 1e-12 {
                break;
            }
        }
        self.step_size = self.step_size.clamp(1e-12, 1e7);
    }

    /// One NUTS transition from `z`; `z` is replaced by the new sample.
    pub fn transition<T: LogDensity + ?Sized, R: Rng + ?Sized>(
        &self,
        target: &T,
        z: &mut State,
        rng: &mut R,
    ) -> TransitionInfo {
        self.sample_momentum(z, rng);
        let h0 = self.hamiltonian(z);
        let ps0 = self.p_sharp(&z.p);

        let mut z_fwd = z.clone();
        let mut z_bwd = z.clone();
        let mut sample = z.clone();
        let (mut p_left, mut ps_left) = (z.p.clone(), ps0.clone());
        let (mut p_right, mut ps_right) = (z.p.clone(), ps0);
        let mut rho = z.p.clone();
        let mut log_sum_weight = 0.0;
        let mut stats = TreeStats::default();
        let mut depth = 0;

        while depth < self.max_depth {
            let forward = rng.random::<f64>() > 0.5;
            let (start, sign) = if forward { (&mut z_fwd, 1.0) } else { (&mut z_bwd, -1.0) };
            let Some(sub) = self.build_tree(target, start, depth, sign * self.step_size, h0, &mut stats, rng) else {
                break;
            };
            depth += 1;

            if sub.log_sum_weight > log_sum_weight {
                sample = sub.proposal.clone();
            } else {
                let accept = (sub.log_sum_weight - log_sum_weight).exp();
                if rng.random::<f64>() < accept {
                    sample = sub.proposal.clone();
                }
            }
            log_sum_weight = log_add_exp(log_sum_weight, sub.log_sum_weight);

            // Old tree is the first-built part; the subtree extends it in the chosen direction.
            let (ps_far, p_near, ps_near) = if forward {
                (&ps_left, &p_right, &ps_right)
            } else {
                (&ps_right, &p_left, &ps_left)
            };
            let rho_total = add(&rho, &sub.rho);
            let mut persist = no_u_turn(ps_far, &sub.ps_end, &rho_total);
            persist &= no_u_turn(ps_far, &sub.ps_beg, &add(&rho, &sub.p_beg));
            persist &= no_u_turn(ps_near, &sub.ps_end, &add(&sub.rho, p_near));

            rho = rho_total;
            if forward {
                p_right = sub.p_end;
                ps_right = sub.ps_end;
            } else {
                p_left = sub.p_end;
                ps_left = sub.ps_end;
            }
            if !persist {
                break;
            }
        }

        let n = stats.n_leapfrog.max(1);
        sample.p = z.p.clone();
        let energy = self.hamiltonian(&sample);
        *z = sample;
        TransitionInfo {
            accept_stat: stats.sum_metro_prob / n as f64,
            n_leapfrog: stats.n_leapfrog,
            depth,
            divergent: stats.divergent,
            energy,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_tree<T: LogDensity + ?Sized, R: Rng + ?Sized>(
        &self,
        target: &T,
        z: &mut State,
        depth: usize,
        eps: f64,
        h0: f64,
        stats: &mut TreeStats,
        rng: &mut R,
    ) -> Option<Subtree> {
        if depth == 0 {
            self.leapfrog(target, z, eps);
            stats.n_leapfrog += 1;
            let h = self.hamiltonian(z);
            if h - h0 > MAX_ENERGY_ERROR {
                stats.divergent = true;
                return None;
            }
            let dh = h0 - h;
            stats.sum_metro_prob += if dh > 0.0 { 1.0 } else { dh.exp() };
            let ps = self.p_sharp(&z.p);
            return Some(Subtree {
                p_beg: z.p.clone(),
                ps_beg: ps.clone(),
                p_end: z.p.clone(),
                ps_end: ps,
                rho: z.p.clone(),
                log_sum_weight: dh,
                proposal: z.clone(),
            });
        }
        let init = self.build_tree(target, z, depth - 1, eps, h0, stats, rng)?;
        let fin = self.build_tree(target, z, depth - 1, eps, h0, stats, rng)?;

        let log_sum_weight = log_add_exp(init.log_sum_weight, fin.log_sum_weight);
        let take_final = rng.random::<f64>() < (fin.log_sum_weight - log_sum_weight).exp();
        let rho = add(&init.rho, &fin.rho);
        let mut persist = no_u_turn(&init.ps_beg, &fin.ps_end, &rho);
        persist &= no_u_turn(&init.ps_beg, &fin.ps_beg, &add(&init.rho, &fin.p_beg));
        persist &= no_u_turn(&init.ps_end, &fin.ps_end, &add(&fin.rho, &init.p_end));
        if !persist {
            return None;
        }
        Some(Subtree {
            p_beg: init.p_beg,
            ps_beg: init.ps_beg,
            p_end: fin.p_end,
            ps_end: fin.ps_end,
            rho,
            log_sum_weight,
            proposal: if take_final { fin.proposal } else { init.proposal },
        })
    }
}
