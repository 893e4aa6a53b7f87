use crate::error::{Error, Result};

/// A point `(x, rho, u)` of the augmented space: position, momentum and
/// pseudotime in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub u: f64,
}

impl AugmentedState {
    pub fn new(x: Vec<f64>, rho: Vec<f64>, u: f64) -> Result<Self> {
        let s = Self { x, rho, u };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Checks the shape, range and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        if self.x.is_empty() {
            return Err(Error::invalid("state dimension must be at least 1"));
        }
        if self.x.len() != self.rho.len() {
            return Err(Error::invalid(format!(
                "position has length {} but momentum has length {}",
                self.x.len(),
                self.rho.len()
            )));
        }
        if !(0.0..1.0).contains(&self.u) {
            return Err(Error::invalid(format!("pseudotime {} outside [0, 1)", self.u)));
        }
        if !self.is_finite() {
            return Err(Error::invalid("state contains a non-finite component"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.x.iter().chain(&self.rho).all(|v| v.is_finite())
    }

    /// Euclidean distance on `(x, rho)` plus the circular distance on the
    /// pseudotime torus.
    pub fn distance(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.x.iter().zip(&other.x) {
            acc += (a - b) * (a - b);
        }
        for (a, b) in self.rho.iter().zip(&other.rho) {
            acc += (a - b) * (a - b);
        }
        let du = (self.u - other.u).abs();
        let du = du.min(1.0 - du);
        acc += du * du;
        acc.sqrt()
    }

    /// Sup-norm analogue of [`distance`](Self::distance).
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let du = (self.u - other.u).abs();
        let mut m = du.min(1.0 - du);
        for (a, b) in self.x.iter().zip(&other.x).chain(self.rho.iter().zip(&other.rho)) {
            m = m.max((a - b).abs());
        }
        m
    }
}
