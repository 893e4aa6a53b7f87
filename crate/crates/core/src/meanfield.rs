//! Mean-field Gaussian reference fitted by reparameterized stochastic
//! gradient ascent on the ELBO, with Adam step-size adaptation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::LN_2PI;
use crate::momentum::MomentumModel;
use crate::reference::AugmentedReference;
use crate::target::TargetModel;

#[derive(Debug, Clone)]
pub struct MeanFieldFit {
    pub reference: AugmentedReference,
    /// Minibatch ELBO estimate at every iteration.
    pub elbo_trace: Vec<f64>,
    /// Raw final iterate, before averaging.
    pub last_mean: Vec<f64>,
    pub last_log_scale: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Ascent step on `params` along `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * grad[i];
            self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            params[i] += lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Fits `q0(x) = N(mu, diag(exp(2 log_sigma)))` starting from `N(0, I)`.
///
/// The returned reference uses the average of the iterates over the second
/// half of the run, which removes most of the stochastic-gradient jitter.
pub fn fit_meanfield<T, R>(
    target: &T,
    steps: usize,
    step_size: f64,
    batch: usize,
    momentum: MomentumModel,
    rng: &mut R,
) -> Result<MeanFieldFit>
where
    T: TargetModel + ?Sized,
    R: Rng + ?Sized,
{
    let d = target.dim();
    if batch == 0 {
        return Err(Error::invalid("mean-field batch size must be positive"));
    }
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::invalid("mean-field step size must be positive"));
    }
    if momentum.dim != d {
        return Err(Error::invalid("momentum dimension must match the target"));
    }
    // params = [mu; log_sigma]
    let mut params = vec![0.0f64; 2 * d];
    let mut last_good = params.clone();
    let mut adam = Adam::new(2 * d);
    let mut grad = vec![0.0; 2 * d];
    let mut g = vec![0.0; d];
    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut trace = Vec::with_capacity(steps);
    let mut avg = vec![0.0; 2 * d];
    let mut n_avg = 0usize;
    let entropy_const = 0.5 * d as f64 * (1.0 + LN_2PI);

    let fail = |iteration: usize, detail: &str, last: &[f64]| Error::OptimizationFailure {
        iteration,
        detail: detail.to_string(),
        last_mean: last[..d].to_vec(),
        last_log_scale: last[d..].to_vec(),
    };

    for it in 0..steps {
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut elbo = 0.0;
        for _ in 0..batch {
            for i in 0..d {
                z[i] = rng.sample(StandardNormal);
                x[i] = params[i] + params[d + i].exp() * z[i];
            }
            let lp = target.log_density_and_grad(&x, &mut g);
            elbo += lp;
            for i in 0..d {
                grad[i] += g[i];
                grad[d + i] += g[i] * params[d + i].exp() * z[i];
            }
        }
        let scale = 1.0 / batch as f64;
        for i in 0..d {
            grad[i] *= scale;
            grad[d + i] = grad[d + i] * scale + 1.0;
        }
        let elbo = elbo * scale + params[d..].iter().sum::<f64>() + entropy_const;
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(fail(it, "non-finite gradient", &last_good));
        }
        adam.step(&mut params, &grad, step_size);
        if params.iter().any(|v| !v.is_finite()) {
            return Err(fail(it, "non-finite parameters", &last_good));
        }
        last_good.copy_from_slice(&params);
        trace.push(elbo);
        if it >= steps / 2 {
            for (a, p) in avg.iter_mut().zip(&params) {
                *a += p;
            }
            n_avg += 1;
        }
    }
    if n_avg > 0 {
        avg.iter_mut().for_each(|a| *a /= n_avg as f64);
    } else {
        avg.copy_from_slice(&params);
    }
    let mean = avg[..d].to_vec();
    let scale = avg[d..].iter().map(|s| s.exp()).collect();
    Ok(MeanFieldFit {
        reference: AugmentedReference::new(mean, scale, momentum)?,
        elbo_trace: trace,
        last_mean: params[..d].to_vec(),
        last_log_scale: params[d..].to_vec(),
    })
}
