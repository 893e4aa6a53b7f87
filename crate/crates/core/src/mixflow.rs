//! The MixFlow family `q_{M,N} = (1/(N-M)) sum_{n=M}^{N-1} T^n q0` over any
//! [`FlowTransform`], with sampling, density evaluation and ELBO estimators.
//!
//! All density bookkeeping is done in log space.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowTransform;
use crate::math::{log_add_exp, log_sum_exp, mean, sample_variance, stream_rng};
use crate::reference::AugmentedReference;
use crate::state::AugmentedState;
use crate::target::AugmentedTarget;

/// Result of one backward sweep from a point `x`.
#[derive(Debug, Clone)]
pub struct DensityTriple {
    /// `T^{-(N-1)} x`.
    pub preimage: AugmentedState,
    /// `log q_{M,N}(x)`.
    pub log_density: f64,
    /// `sum_{j=1}^{N-1} log J(T^{-j} x)`.
    pub log_jacobian_product: f64,
}

impl DensityTriple {
    pub fn density(&self) -> f64 {
        self.log_density.exp()
    }

    pub fn jacobian_product(&self) -> f64 {
        self.log_jacobian_product.exp()
    }
}

/// Mean, standard error and per-replicate values of a replicated estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ElboSummary {
    pub mean: f64,
    pub stderr: f64,
    pub values: Vec<f64>,
}

impl ElboSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let m = mean(&values);
        let se = (sample_variance(&values) / values.len() as f64).sqrt();
        Self { mean: m, stderr: se, values }
    }
}

#[derive(Debug, Clone)]
pub struct MixFlow<T> {
    pub reference: AugmentedReference,
    pub transform: T,
    n_steps: usize,
    burn_in: usize,
}

/// Tracks `log z` through the incremental density recursion together with a
/// running bound on its relative rounding error. The subtraction step
/// amplifies that error by `1 / (1 - r)`; once the bound exceeds
/// [`RECOMPUTE_TOL`] the caller recomputes `log z` directly.
struct IncrementalLogDensity {
    log_z: f64,
    rel_err: f64,
}

const RECOMPUTE_TOL: f64 = 1e-11;

impl IncrementalLogDensity {
    fn new(log_z: f64) -> Self {
        Self { log_z, rel_err: 4.0 * f64::EPSILON }
    }

    /// `z <- (z - exp(log_remove)) / exp(log_j) + exp(log_add)`. Returns
    /// `false` when the result can no longer be trusted.
    fn step(&mut self, log_remove: f64, log_j: f64, log_add: f64) -> bool {
        let r = (log_remove - self.log_z).exp();
        if !(r < 1.0) {
            return false;
        }
        let amplified = (self.rel_err + f64::EPSILON) / (1.0 - r);
        let diff = self.log_z + (-r).ln_1p() - log_j;
        let next = log_add_exp(diff, log_add);
        let share = (diff - next).exp();
        self.rel_err = amplified * share + f64::EPSILON;
        self.log_z = next;
        self.log_z.is_finite() && self.rel_err < RECOMPUTE_TOL
    }

    fn reset(&mut self, log_z: f64) {
        *self = Self::new(log_z);
    }
}

/// Per-index scalars along the two-sided trajectory `x_{-(N-1)}, ..., x_{N-1}`.
struct Window {
    offset: usize,
    /// `log q0(x_i)`.
    log_q0: Vec<f64>,
    /// `log p(x_i)`, filled for `i >= 0` only.
    log_p: Vec<f64>,
    /// `cum[t] = sum of log J(x_i)` over window positions below `t`.
    cum: Vec<f64>,
}

impl Window {
    fn idx(&self, i: isize) -> usize {
        (i + self.offset as isize) as usize
    }

    fn log_q0(&self, i: isize) -> f64 {
        self.log_q0[self.idx(i)]
    }

    fn log_p(&self, i: isize) -> f64 {
        self.log_p[self.idx(i)]
    }

    /// `sum_{j=1}^{n} log J(x_{k-j})`.
    fn log_j_sum(&self, k: isize, n: isize) -> f64 {
        self.cum[self.idx(k)] - self.cum[self.idx(k - n)]
    }

    /// `log q_{M,N}(x_k)` by direct summation over the stored window.
    fn log_density_at(&self, k: isize, burn_in: usize, n_steps: usize) -> f64 {
        let terms: Vec<f64> = (burn_in..n_steps)
            .map(|n| {
                let n = n as isize;
                self.log_q0(k - n) - self.log_j_sum(k, n)
            })
            .collect();
        log_sum_exp(&terms) - ((n_steps - burn_in) as f64).ln()
    }
}

impl<T: FlowTransform> MixFlow<T> {
    pub fn new(reference: AugmentedReference, transform: T, n_steps: usize, burn_in: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::invalid("flow length N must be at least 1"));
        }
        if burn_in >= n_steps {
            return Err(Error::invalid(format!("burn-in M = {burn_in} must be below N = {n_steps}")));
        }
        if reference.dim() != transform.dim() {
            return Err(Error::invalid("reference and transform dimensions differ"));
        }
        Ok(Self { reference, transform, n_steps, burn_in })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    /// Same flow with a different burn-in.
    pub fn with_burn_in(&self, burn_in: usize) -> Result<Self>
    where
        T: Clone,
    {
        Self::new(self.reference.clone(), self.transform.clone(), self.n_steps, burn_in)
    }

    /// Same flow with a different length.
    pub fn with_n_steps(&self, n_steps: usize) -> Result<Self>
    where
        T: Clone,
    {
        Self::new(self.reference.clone(), self.transform.clone(), n_steps, self.burn_in.min(n_steps - 1))
    }

    /// Applies `T^k` in place.
    pub fn push_forward(&self, state: &mut AugmentedState, k: usize) -> Result<()> {
        for n in 0..k {
            self.transform.forward(state).map_err(|e| e.at_flow_step(n))?;
        }
        Ok(())
    }

    /// Applies `T^{-k}` in place.
    pub fn pull_back(&self, state: &mut AugmentedState, k: usize) -> Result<()> {
        for n in 0..k {
            self.transform.inverse(state).map_err(|e| e.at_flow_step(n + 1))?;
        }
        Ok(())
    }

    /// Draw `K ~ U{M..N-1}`, `X0 ~ q0`, return `(T^K X0, K)`.
    pub fn sample_with_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(AugmentedState, usize)> {
        let k = rng.random_range(self.burn_in..self.n_steps);
        let mut s = self.reference.sample(rng);
        self.push_forward(&mut s, k)?;
        Ok((s, k))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AugmentedState> {
        self.sample_with_index(rng).map(|(s, _)| s)
    }

    /// Backward sweep returning the preimage, log-density and log Jacobian product.
    pub fn density_triple(&self, state: &AugmentedState) -> Result<DensityTriple> {
        let mut x = state.clone();
        let mut log_jac = 0.0;
        let mut acc = if self.burn_in == 0 { self.reference.log_density(&x) } else { f64::NEG_INFINITY };
        for n in 1..self.n_steps {
            log_jac += self.transform.inverse(&mut x).map_err(|e| e.at_flow_step(n))?;
            if n >= self.burn_in {
                acc = log_add_exp(acc, self.reference.log_density(&x) - log_jac);
            }
        }
        Ok(DensityTriple {
            preimage: x,
            log_density: acc - ((self.n_steps - self.burn_in) as f64).ln(),
            log_jacobian_product: log_jac,
        })
    }

    /// `log q_{M,N}(state)`.
    pub fn log_density(&self, state: &AugmentedState) -> Result<f64> {
        self.density_triple(state).map(|t| t.log_density)
    }

    /// Stores the two-sided trajectory around `x0` needed by the O(N)-memory
    /// estimators.
    fn window(&self, x0: &AugmentedState, target: &AugmentedTarget) -> Result<Window> {
        let n = self.n_steps;
        let offset = n - 1;
        let len = 2 * n - 1;
        let mut log_q0 = vec![0.0; len];
        let mut log_p = vec![f64::NAN; len];
        // log J(x_i) for i in [-(N-1), N-2].
        let mut log_j = vec![0.0; len];

        log_q0[offset] = self.reference.log_density(x0);
        log_p[offset] = target.log_density_state(x0);
        let mut fwd = x0.clone();
        for k in 1..n {
            log_j[offset + k - 1] = self.transform.forward(&mut fwd).map_err(|e| e.at_flow_step(k))?;
            log_q0[offset + k] = self.reference.log_density(&fwd);
            log_p[offset + k] = target.log_density_state(&fwd);
        }
        let mut bwd = x0.clone();
        for k in 1..n {
            log_j[offset - k] = self.transform.inverse(&mut bwd).map_err(|e| e.at_flow_step(k))?;
            log_q0[offset - k] = self.reference.log_density(&bwd);
        }
        let mut cum = vec![0.0; len];
        for t in 1..len {
            cum[t] = cum[t - 1] + log_j[t - 1];
        }
        Ok(Window { offset, log_q0, log_p, cum })
    }

    /// Trajectory-averaged ELBO estimate from one reference draw, using the
    /// incremental density recursion over a stored trajectory.
    pub fn estimate_elbo<R: Rng + ?Sized>(&self, target: &AugmentedTarget, rng: &mut R) -> Result<f64> {
        let x0 = self.reference.sample(rng);
        if self.burn_in > 0 {
            let w = self.window(&x0, target)?;
            return Ok(self.windowed_elbo(&w, self.burn_in));
        }
        self.elbo_from_window(&self.window(&x0, target)?)
    }

    fn elbo_from_window(&self, w: &Window) -> Result<f64> {
        let n = self.n_steps;
        let log_n = (n as f64).ln();
        let big = (n - 1) as isize;
        let mut z = IncrementalLogDensity::new(w.log_density_at(0, 0, n));
        let mut f = w.log_p(0);
        let mut g = z.log_z;
        for k in 1..n as isize {
            let oldest = k - 1 - big;
            let log_remove = w.log_q0(oldest) - log_n - w.log_j_sum(k - 1, big);
            let log_j_prev = w.log_j_sum(k, 1);
            let log_add = w.log_q0(k) - log_n;
            if !z.step(log_remove, log_j_prev, log_add) {
                z.reset(w.log_density_at(k, 0, n));
            }
            f += w.log_p(k);
            g += z.log_z;
        }
        Ok((f - g) / n as f64)
    }

    fn windowed_elbo(&self, w: &Window, burn_in: usize) -> f64 {
        let n = self.n_steps;
        let mut acc = 0.0;
        for k in burn_in..n {
            let k = k as isize;
            acc += w.log_p(k) - w.log_density_at(k, burn_in, n);
        }
        acc / (n - burn_in) as f64
    }

    /// Same estimator as [`estimate_elbo`](Self::estimate_elbo) with
    /// constant auxiliary memory: a second pointer walks forward from
    /// `T^{-(N-1)} x0` instead of reading a stored trajectory.
    pub fn estimate_elbo_const_mem<R: Rng + ?Sized>(&self, target: &AugmentedTarget, rng: &mut R) -> Result<f64> {
        if self.burn_in > 0 {
            return Err(Error::invalid("the constant-memory estimator requires burn-in M = 0"));
        }
        let n = self.n_steps;
        let log_n = (n as f64).ln();
        let mut x = self.reference.sample(rng);
        let triple = self.density_triple(&x)?;
        let mut tail = triple.preimage;
        let mut log_jac = triple.log_jacobian_product;
        let mut z = IncrementalLogDensity::new(triple.log_density);
        let mut f = target.log_density_state(&x);
        let mut g = z.log_z;
        for k in 1..n {
            let log_remove = self.reference.log_density(&tail) - log_n - log_jac;
            let log_j_prev = self.transform.forward(&mut x).map_err(|e| e.at_flow_step(k))?;
            let log_add = self.reference.log_density(&x) - log_n;
            if !z.step(log_remove, log_j_prev, log_add) {
                let fresh = self.log_density(&x)?;
                z.reset(fresh);
            }
            f += target.log_density_state(&x);
            g += z.log_z;
            if k < n - 1 {
                let log_j_tail = self.transform.forward(&mut tail).map_err(|e| e.at_flow_step(k))?;
                log_jac += log_j_prev - log_j_tail;
            }
        }
        Ok((f - g) / n as f64)
    }

    /// Reference estimator: evaluates `log q_N` at every trajectory point with
    /// a full backward sweep, O(N^2) flow evaluations.
    pub fn estimate_elbo_naive<R: Rng + ?Sized>(&self, target: &AugmentedTarget, rng: &mut R) -> Result<f64> {
        let mut x = self.reference.sample(rng);
        self.push_forward(&mut x, self.burn_in)?;
        let mut acc = 0.0;
        for k in self.burn_in..self.n_steps {
            if k > self.burn_in {
                self.transform.forward(&mut x).map_err(|e| e.at_flow_step(k))?;
            }
            acc += target.log_density_state(&x) - self.log_density(&x)?;
        }
        Ok(acc / (self.n_steps - self.burn_in) as f64)
    }

    /// `(1/(N-M)) sum_{n=M}^{N-1} f(T^n X0)` for one reference draw.
    pub fn trajectory_average<R, F>(&self, f: F, rng: &mut R) -> Result<f64>
    where
        R: Rng + ?Sized,
        F: Fn(&AugmentedState) -> f64,
    {
        let mut x = self.reference.sample(rng);
        self.push_forward(&mut x, self.burn_in)?;
        let mut acc = f(&x);
        for k in self.burn_in + 1..self.n_steps {
            self.transform.forward(&mut x).map_err(|e| e.at_flow_step(k))?;
            acc += f(&x);
        }
        Ok(acc / (self.n_steps - self.burn_in) as f64)
    }

    /// ELBO of `q_{M,N}` for each requested `M`, all from one shared trajectory.
    pub fn elbo_vs_burnin<R: Rng + ?Sized>(
        &self,
        target: &AugmentedTarget,
        rng: &mut R,
        burn_in_values: &[usize],
    ) -> Result<Vec<(usize, f64)>> {
        if let Some(bad) = burn_in_values.iter().find(|&&m| m >= self.n_steps) {
            return Err(Error::invalid(format!("burn-in {bad} must be below N = {}", self.n_steps)));
        }
        let x0 = self.reference.sample(rng);
        let w = self.window(&x0, target)?;
        burn_in_values
            .iter()
            .map(|&m| {
                let v = if m == 0 { self.elbo_from_window(&w)? } else { self.windowed_elbo(&w, m) };
                Ok((m, v))
            })
            .collect()
    }

    /// Averages `replicates` independent trajectory estimates; replicate `r`
    /// draws from stream `r` of `seed`.
    pub fn estimate_elbo_replicated(
        &self,
        target: &AugmentedTarget,
        seed: u64,
        replicates: usize,
    ) -> Result<ElboSummary> {
        if replicates == 0 {
            return Err(Error::invalid("at least one replicate is required"));
        }
        let values: Result<Vec<f64>> = (0..replicates)
            .into_par_iter()
            .map(|r| self.estimate_elbo(target, &mut stream_rng(seed, r as u64)))
            .collect();
        Ok(ElboSummary::from_values(values?))
    }

    /// `n` i.i.d. draws; draw `i` uses stream `i` of `seed`.
    pub fn sample_many(&self, seed: u64, n: usize) -> Result<Vec<AugmentedState>> {
        (0..n).into_par_iter().map(|i| self.sample(&mut stream_rng(seed, i as u64))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::IdentityFlow;
    use crate::hamiltonian::{HamFlowParams, HamiltonianFlow};
    use crate::momentum::MomentumModel;
    use crate::target::{augment_target, synthetic_target, SyntheticParams, SyntheticTarget, TargetModel};
    use std::sync::Arc;

    fn identity_on_gauss() -> (MixFlow<IdentityFlow>, AugmentedTarget) {
        let lap = MomentumModel::laplace(1);
        let r = AugmentedReference::new(vec![2.0], vec![2.0], lap).unwrap();
        let target = augment_target(Arc::new(SyntheticTarget::Gauss1d), lap);
        (MixFlow::new(r, IdentityFlow { dim: 1 }, 7, 0).unwrap(), target)
    }

    fn ham_banana(n: usize) -> (MixFlow<HamiltonianFlow>, AugmentedTarget) {
        let lap = MomentumModel::laplace(2);
        let banana: Arc<dyn TargetModel> = Arc::new(synthetic_target("banana", &SyntheticParams::default()).unwrap());
        let flow = HamiltonianFlow::new(banana.clone(), lap, HamFlowParams::new(0.02, 20).unwrap()).unwrap();
        // Roughly the mean-field fit to the banana.
        let r = AugmentedReference::new(vec![0.0, -9.5], vec![2.2, 1.0], lap).unwrap();
        (MixFlow::new(r, flow, n, 0).unwrap(), augment_target(banana, lap))
    }

    #[test]
    fn construction_checks() {
        let lap = MomentumModel::laplace(1);
        let r = AugmentedReference::standard(1, lap).unwrap();
        assert!(MixFlow::new(r.clone(), IdentityFlow { dim: 1 }, 0, 0).is_err());
        assert!(MixFlow::new(r.clone(), IdentityFlow { dim: 1 }, 3, 3).is_err());
        assert!(MixFlow::new(r, IdentityFlow { dim: 2 }, 3, 0).is_err());
    }

    #[test]
    fn single_step_flow_is_reference() {
        let (flow, target) = ham_banana(1);
        let mut a = stream_rng(1, 0);
        let mut b = stream_rng(1, 0);
        let s = flow.sample(&mut a).unwrap();
        let _k: usize = b.random_range(0..1);
        assert_eq!(s, flow.reference.sample(&mut b));
        assert_eq!(flow.log_density(&s).unwrap(), flow.reference.log_density(&s));
        let t = flow.density_triple(&s).unwrap();
        assert_eq!(t.preimage, s);
        assert_eq!(t.jacobian_product(), 1.0);
        let mut r1 = stream_rng(2, 0);
        let mut r2 = stream_rng(2, 0);
        let e = flow.estimate_elbo(&target, &mut r1).unwrap();
        let x0 = flow.reference.sample(&mut r2);
        let want = target.log_density_state(&x0) - flow.reference.log_density(&x0);
        assert!((e - want).abs() < 1e-12);
        let mut r3 = stream_rng(2, 0);
        assert!((flow.estimate_elbo_const_mem(&target, &mut r3).unwrap() - want).abs() < 1e-12);
        let mut r4 = stream_rng(2, 0);
        let avg = flow.trajectory_average(|s| s.x[0], &mut r4).unwrap();
        assert_eq!(avg, x0.x[0]);
    }

    #[test]
    fn identity_flow_collapses_to_reference() {
        let (flow, target) = identity_on_gauss();
        let s = AugmentedState::new(vec![0.3], vec![-1.0], 0.2).unwrap();
        assert!((flow.log_density(&s).unwrap() - flow.reference.log_density(&s)).abs() < 1e-12);
        let mut rng = stream_rng(3, 0);
        assert!(flow.estimate_elbo(&target, &mut rng).unwrap().abs() < 1e-12);
        assert!(flow.estimate_elbo_const_mem(&target, &mut rng).unwrap().abs() < 1e-12);
        for (m, v) in flow.elbo_vs_burnin(&target, &mut rng, &[0, 3, 6]).unwrap() {
            assert!(v.abs() < 1e-12, "M={m}: {v}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let (flow, _) = ham_banana(10);
        let a = flow.sample(&mut stream_rng(5, 1)).unwrap();
        let b = flow.sample(&mut stream_rng(5, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn burnin_range_is_respected() {
        let (flow, target) = ham_banana(10);
        let f = flow.with_burn_in(6).unwrap();
        let mut rng = stream_rng(8, 0);
        for _ in 0..200 {
            let (_, k) = f.sample_with_index(&mut rng).unwrap();
            assert!((6..10).contains(&k));
        }
        assert!(flow.elbo_vs_burnin(&target, &mut rng, &[10]).is_err());
        let out = flow.elbo_vs_burnin(&target, &mut rng, &[4, 0, 2]).unwrap();
        assert_eq!(out.iter().map(|p| p.0).collect::<Vec<_>>(), vec![4, 0, 2]);
        assert!(f.estimate_elbo_const_mem(&target, &mut rng).is_err());
    }

    #[test]
    fn elbo_vs_burnin_zero_matches_estimate_elbo() {
        let (flow, target) = ham_banana(25);
        let a = flow.elbo_vs_burnin(&target, &mut stream_rng(4, 2), &[0, 5]).unwrap();
        let b = flow.estimate_elbo(&target, &mut stream_rng(4, 2)).unwrap();
        assert!((a[0].1 - b).abs() < 1e-6);
        let c = flow.with_burn_in(5).unwrap().estimate_elbo(&target, &mut stream_rng(4, 2)).unwrap();
        assert!((a[1].1 - c).abs() < 1e-12);
        let naive = flow.with_burn_in(5).unwrap().estimate_elbo_naive(&target, &mut stream_rng(4, 2)).unwrap();
        let naive0 = flow.estimate_elbo_naive(&target, &mut stream_rng(4, 2)).unwrap();
        assert!((b - naive0).abs() < 1e-8 * naive0.abs().max(1.0));
        assert!((a[1].1 - naive).abs() < 1e-8 * naive.abs().max(1.0));
    }

    #[test]
    fn log_density_survives_tiny_terms() {
        // Reference far from the evaluation point pushes every term to ~ -1e6.
        let lap = MomentumModel::laplace(1);
        let target: Arc<dyn TargetModel> = Arc::new(SyntheticTarget::Gauss1d);
        let flow = HamiltonianFlow::new(target, lap, HamFlowParams::new(0.05, 5).unwrap()).unwrap();
        let r = AugmentedReference::new(vec![0.0], vec![0.001], lap).unwrap();
        let mf = MixFlow::new(r, flow, 6, 0).unwrap();
        let s = AugmentedState::new(vec![1.4], vec![0.1], 0.3).unwrap();
        let lq = mf.log_density(&s).unwrap();
        assert!(lq.is_finite(), "{lq}");
        assert!(lq < -5e5, "{lq}");
    }
}
