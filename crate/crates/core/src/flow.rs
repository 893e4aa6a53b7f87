use crate::error::Result;
use crate::state::AugmentedState;

/// A bijection on the augmented space with a tractable Jacobian.
///
/// Both methods mutate `state` in place and return `log J` evaluated at the
/// *input* of the forward map: `forward` reports `log J(s)` for the state it
/// was given, `inverse` reports `log J(T^{-1} s)` for the preimage it wrote.
pub trait FlowTransform: Send + Sync {
    fn dim(&self) -> usize;

    fn forward(&self, state: &mut AugmentedState) -> Result<f64>;

    fn inverse(&self, state: &mut AugmentedState) -> Result<f64>;
}

impl<T: FlowTransform + ?Sized> FlowTransform for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn forward(&self, state: &mut AugmentedState) -> Result<f64> {
        (**self).forward(state)
    }
    fn inverse(&self, state: &mut AugmentedState) -> Result<f64> {
        (**self).inverse(state)
    }
}

impl<T: FlowTransform + ?Sized> FlowTransform for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn forward(&self, state: &mut AugmentedState) -> Result<f64> {
        (**self).forward(state)
    }
    fn inverse(&self, state: &mut AugmentedState) -> Result<f64> {
        (**self).inverse(state)
    }
}

/// The identity map; every MixFlow built on it collapses to its reference.
#[derive(Debug, Clone, Copy)]
pub struct IdentityFlow {
    pub dim: usize,
}

impl FlowTransform for IdentityFlow {
    fn dim(&self) -> usize {
        self.dim
    }
    fn forward(&self, _state: &mut AugmentedState) -> Result<f64> {
        Ok(0.0)
    }
    fn inverse(&self, _state: &mut AugmentedState) -> Result<f64> {
        Ok(0.0)
    }
}
