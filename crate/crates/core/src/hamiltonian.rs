//! Uncorrected Hamiltonian flow map.
//!
//! One application composes three measure-preserving steps on `(x, rho, u)`:
//!
//! 1. `L` leapfrog steps of size `epsilon` on `(x, rho)`,
//! 2. a pseudotime shift `u <- (u + xi) mod 1`,
//! 3. a per-coordinate momentum refreshment
//!    `rho_i <- R^{-1}((R(rho_i) + z(x_i, u)) mod 1)`.
//!
//! Steps 1 and 2 have unit Jacobian; step 3 has Jacobian `m(rho') / m(rho'')`.
//! Every inverse mirrors its forward update with the sub-steps reversed so the
//! two directions stay structurally symmetric in floating point.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowTransform;
use crate::momentum::MomentumModel;
use crate::state::AugmentedState;
use crate::target::TargetModel;

pub const DEFAULT_XI: f64 = PI / 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// The refreshment shift `z(x_i, u)`, valued in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefreshFn {
    /// `0.5 sin(2 x + u) + 0.5`
    #[default]
    Sine,
    /// `0.5 sin(2 x) + 0.5`, ignoring the pseudotime.
    SineNoPseudotime,
    /// `0`; refreshment becomes the identity.
    Zero,
}

impl RefreshFn {
    #[inline]
    pub fn eval(&self, x: f64, u: f64) -> f64 {
        match self {
            RefreshFn::Sine => 0.5 * (2.0 * x + u).sin() + 0.5,
            RefreshFn::SineNoPseudotime => 0.5 * (2.0 * x).sin() + 0.5,
            RefreshFn::Zero => 0.0,
        }
    }

    /// `(dz/dx, dz/du)`.
    pub fn partials(&self, x: f64, u: f64) -> (f64, f64) {
        match self {
            RefreshFn::Sine => {
                let c = (2.0 * x + u).cos();
                (c, 0.5 * c)
            }
            RefreshFn::SineNoPseudotime => ((2.0 * x).cos(), 0.0),
            RefreshFn::Zero => (0.0, 0.0),
        }
    }
}

impl std::str::FromStr for RefreshFn {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Self::Sine),
            "sine_no_pseudotime" => Ok(Self::SineNoPseudotime),
            "zero" => Ok(Self::Zero),
            other => Err(Error::invalid(format!("unknown refresh function {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamFlowParams {
    pub epsilon: f64,
    pub n_leapfrog: usize,
    pub xi: f64,
    pub refresh: RefreshFn,
}

impl HamFlowParams {
    /// Step size and leapfrog count with the default shift `pi / 16` and
    /// the sine refreshment.
    pub fn new(epsilon: f64, n_leapfrog: usize) -> Result<Self> {
        let p = Self { epsilon, n_leapfrog, xi: DEFAULT_XI, refresh: RefreshFn::Sine };
        p.validate()?;
        Ok(p)
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_refresh(mut self, refresh: RefreshFn) -> Self {
        self.refresh = refresh;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("step size must be positive and finite, got {}", self.epsilon)));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::invalid("number of leapfrog steps must be at least 1"));
        }
        if !self.xi.is_finite() || self.xi.abs() >= 1.0 {
            return Err(Error::invalid(format!("pseudotime shift must satisfy |xi| < 1, got {}", self.xi)));
        }
        Ok(())
    }
}

fn check_finite(v: &[f64]) -> bool {
    v.iter().all(|a| a.is_finite())
}

/// In-place leapfrog integration. `grad` is scratch of length `d`.
pub fn leapfrog_in_place(
    x: &mut [f64],
    rho: &mut [f64],
    target: &dyn TargetModel,
    momentum: &MomentumModel,
    epsilon: f64,
    n_steps: usize,
    direction: Direction,
    grad: &mut [f64],
) -> Result<()> {
    let half = 0.5 * epsilon;
    target.grad_log_density(x, grad);
    if !check_finite(grad) {
        return Err(Error::divergence(0, "non-finite target gradient at leapfrog start"));
    }
    for k in 0..n_steps {
        match direction {
            Direction::Forward => {
                for i in 0..x.len() {
                    rho[i] += half * grad[i];
                }
                for i in 0..x.len() {
                    x[i] -= epsilon * momentum.grad_logpdf_1d(rho[i]);
                }
                target.grad_log_density(x, grad);
                for i in 0..x.len() {
                    rho[i] += half * grad[i];
                }
            }
            Direction::Inverse => {
                for i in 0..x.len() {
                    rho[i] -= half * grad[i];
                }
                for i in 0..x.len() {
                    x[i] += epsilon * momentum.grad_logpdf_1d(rho[i]);
                }
                target.grad_log_density(x, grad);
                for i in 0..x.len() {
                    rho[i] -= half * grad[i];
                }
            }
        }
        if !(check_finite(x) && check_finite(rho) && check_finite(grad)) {
            return Err(Error::divergence(k, "non-finite value in leapfrog step"));
        }
    }
    Ok(())
}

/// Applies `n_steps` leapfrog steps (or their exact inverse) and returns the
/// new position and momentum.
pub fn leapfrog(
    x: &[f64],
    rho: &[f64],
    target: &dyn TargetModel,
    momentum: &MomentumModel,
    epsilon: f64,
    n_steps: usize,
    direction: Direction,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() != rho.len() || x.len() != target.dim() {
        return Err(Error::invalid("position, momentum and target dimensions differ"));
    }
    if !(epsilon >= 0.0) || n_steps == 0 {
        return Err(Error::invalid("leapfrog needs epsilon >= 0 and at least one step"));
    }
    let mut x = x.to_vec();
    let mut rho = rho.to_vec();
    let mut grad = vec![0.0; x.len()];
    leapfrog_in_place(&mut x, &mut rho, target, momentum, epsilon, n_steps, direction, &mut grad)?;
    Ok((x, rho))
}

/// `(u +/- xi) mod 1`, result in `[0, 1)`.
#[inline]
pub fn pseudotime_shift(u: f64, xi: f64, direction: Direction) -> f64 {
    let v = match direction {
        Direction::Forward => u + xi,
        Direction::Inverse => u - xi,
    };
    let w = v - v.floor();
    // `v - floor(v)` rounds to 1.0 for tiny negative v.
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Deterministic momentum refreshment, in place.
pub fn refresh_momentum_in_place(
    rho: &mut [f64],
    x: &[f64],
    u: f64,
    momentum: &MomentumModel,
    refresh: RefreshFn,
    direction: Direction,
) {
    for (r, &xi) in rho.iter_mut().zip(x) {
        let z = refresh.eval(xi, u);
        let shift = match direction {
            Direction::Forward => z,
            Direction::Inverse => -z,
        };
        *r = momentum.shift_through_cdf(*r, shift);
    }
}

pub fn refresh_momentum(
    rho: &[f64],
    x: &[f64],
    u: f64,
    momentum: &MomentumModel,
    refresh: RefreshFn,
    direction: Direction,
) -> Result<Vec<f64>> {
    if rho.len() != x.len() {
        return Err(Error::invalid("momentum and position lengths differ"));
    }
    let mut out = rho.to_vec();
    refresh_momentum_in_place(&mut out, x, u, momentum, refresh, direction);
    Ok(out)
}

/// `log m(rho_before) - log m(rho_after)` for a refreshment taking
/// `rho_before` to `rho_after`.
#[inline]
pub fn refresh_log_jacobian(momentum: &MomentumModel, rho_before: &[f64], rho_after: &[f64]) -> f64 {
    momentum.log_density(rho_before) - momentum.log_density(rho_after)
}

/// The Hamiltonian flow map `T` bundled with its target and momentum.
#[derive(Debug, Clone)]
pub struct HamiltonianFlow {
    pub target: Arc<dyn TargetModel>,
    pub momentum: MomentumModel,
    pub params: HamFlowParams,
}

impl HamiltonianFlow {
    pub fn new(target: Arc<dyn TargetModel>, momentum: MomentumModel, params: HamFlowParams) -> Result<Self> {
        params.validate()?;
        if momentum.dim != target.dim() {
            return Err(Error::invalid("momentum dimension must match the target dimension"));
        }
        Ok(Self { target, momentum, params })
    }

    fn check_state(&self, s: &AugmentedState) -> Result<()> {
        if s.x.len() != self.target.dim() || s.rho.len() != self.target.dim() {
            return Err(Error::invalid("state dimension does not match the flow"));
        }
        if !s.is_finite() {
            return Err(Error::divergence(0, "non-finite state entering the flow"));
        }
        Ok(())
    }
}

impl FlowTransform for HamiltonianFlow {
    fn dim(&self) -> usize {
        self.target.dim()
    }

    fn forward(&self, s: &mut AugmentedState) -> Result<f64> {
        self.check_state(s)?;
        let p = &self.params;
        let mut grad = vec![0.0; s.x.len()];
        leapfrog_in_place(
            &mut s.x,
            &mut s.rho,
            self.target.as_ref(),
            &self.momentum,
            p.epsilon,
            p.n_leapfrog,
            Direction::Forward,
            &mut grad,
        )?;
        s.u = pseudotime_shift(s.u, p.xi, Direction::Forward);
        let before = s.rho.clone();
        refresh_momentum_in_place(&mut s.rho, &s.x, s.u, &self.momentum, p.refresh, Direction::Forward);
        if !s.is_finite() {
            return Err(Error::divergence(p.n_leapfrog, "non-finite momentum after refreshment"));
        }
        Ok(refresh_log_jacobian(&self.momentum, &before, &s.rho))
    }

    fn inverse(&self, s: &mut AugmentedState) -> Result<f64> {
        self.check_state(s)?;
        let p = &self.params;
        let after = s.rho.clone();
        refresh_momentum_in_place(&mut s.rho, &s.x, s.u, &self.momentum, p.refresh, Direction::Inverse);
        let log_j = refresh_log_jacobian(&self.momentum, &s.rho, &after);
        s.u = pseudotime_shift(s.u, p.xi, Direction::Inverse);
        let mut grad = vec![0.0; s.x.len()];
        leapfrog_in_place(
            &mut s.x,
            &mut s.rho,
            self.target.as_ref(),
            &self.momentum,
            p.epsilon,
            p.n_leapfrog,
            Direction::Inverse,
            &mut grad,
        )?;
        Ok(log_j)
    }
}

/// One forward application; returns the new state and `log J` at the input.
pub fn flow_forward(
    state: &AugmentedState,
    params: &HamFlowParams,
    target: Arc<dyn TargetModel>,
    momentum: &MomentumModel,
) -> Result<(AugmentedState, f64)> {
    state.validate()?;
    let flow = HamiltonianFlow::new(target, *momentum, *params)?;
    let mut s = state.clone();
    let lj = flow.forward(&mut s)?;
    Ok((s, lj))
}

/// One inverse application; returns the preimage and `log J` at the preimage.
pub fn flow_inverse(
    state: &AugmentedState,
    params: &HamFlowParams,
    target: Arc<dyn TargetModel>,
    momentum: &MomentumModel,
) -> Result<(AugmentedState, f64)> {
    state.validate()?;
    let flow = HamiltonianFlow::new(target, *momentum, *params)?;
    let mut s = state.clone();
    let lj = flow.inverse(&mut s)?;
    Ok((s, lj))
}
