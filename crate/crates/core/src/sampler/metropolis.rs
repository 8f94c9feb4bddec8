//! Adaptive random-walk Metropolis over unconstrained coordinates.

use rand::Rng;
use rand_distr::StandardNormal;

/// Gaussian random-walk kernel with per-coordinate proposal scales.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    /// Global multiplier on the per-coordinate scales.
    pub scale: f64,
    pub coord_sd: Vec<f64>,
    target_accept: f64,
    log_scale: f64,
    counter: f64,
}

/// Optimal acceptance rate for high-dimensional random-walk proposals.
pub const RW_TARGET_ACCEPT: f64 = 0.234;

impl RandomWalk {
    pub fn new(dim: usize) -> Self {
        let scale = 2.38 / (dim.max(1) as f64).sqrt();
        RandomWalk {
            scale,
            coord_sd: vec![1.0; dim],
            target_accept: RW_TARGET_ACCEPT,
            log_scale: scale.ln(),
            counter: 0.0,
        }
    }

    /// One step. `log_density` is evaluated at the proposal only.
    pub fn step<F: Fn(&[f64]) -> f64, R: Rng + ?Sized>(
        &self,
        log_density: F,
        x: &mut Vec<f64>,
        log_p: &mut f64,
        rng: &mut R,
    ) -> f64 {
        let proposal: Vec<f64> = x
            .iter()
            .zip(&self.coord_sd)
            .map(|(v, s)| v + self.scale * s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let lp = log_density(&proposal);
        let accept = if lp.is_finite() { (lp - *log_p).exp().min(1.0) } else { 0.0 };
        if rng.random::<f64>() < accept {
            *x = proposal;
            *log_p = lp;
        }
        accept
    }

    /// Robbins-Monro update of the global scale toward the target acceptance.
    pub fn adapt(&mut self, accept: f64) {
        self.counter += 1.0;
        let gain = 1.0 / self.counter.powf(0.6);
        self.log_scale += gain * (accept - self.target_accept);
        self.scale = self.log_scale.exp();
    }

    /// Resets the gain sequence after a change of coordinate scales.
    pub fn restart(&mut self) {
        self.counter = 0.0;
    }
}
