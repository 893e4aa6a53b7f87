//! Reference distribution `q0(x, rho, u) = q0(x) m(rho) 1[0 <= u < 1]`.
//!
//! The position marginal is a diagonal Gaussian, optionally pushed through an
//! affine map `M(x) = A x + b`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::math::LN_2PI;
use crate::momentum::MomentumModel;
use crate::state::AugmentedState;

#[derive(Debug, Clone)]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    shift: DVector<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    log_abs_det: f64,
}

impl AffineMap {
    /// `matrix` is row-major `d x d`.
    pub fn new(matrix: &[f64], shift: &[f64]) -> Result<Self> {
        let d = shift.len();
        if d == 0 || matrix.len() != d * d {
            return Err(Error::invalid(format!("affine map needs a {d}x{d} matrix, got {} entries", matrix.len())));
        }
        let m = DMatrix::from_row_slice(d, d, matrix);
        let lu = m.clone().lu();
        let det = lu.determinant();
        if !(det.is_finite() && det != 0.0) {
            return Err(Error::invalid("affine map matrix is singular"));
        }
        Ok(Self { matrix: m, shift: DVector::from_column_slice(shift), lu, log_abs_det: det.abs().ln() })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(z) + &self.shift;
        v.iter().copied().collect()
    }

    pub fn invert(&self, x: &[f64]) -> Vec<f64> {
        let rhs = DVector::from_column_slice(x) - &self.shift;
        let z = self.lu.solve(&rhs).expect("non-singular by construction");
        z.iter().copied().collect()
    }

    pub fn log_abs_det(&self) -> f64 {
        self.log_abs_det
    }

    pub fn matrix_row_major(&self) -> Vec<f64> {
        self.matrix.transpose().iter().copied().collect()
    }

    pub fn shift(&self) -> Vec<f64> {
        self.shift.iter().copied().collect()
    }
}

#[derive(Debug, Clone)]
pub struct AugmentedReference {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub affine: Option<AffineMap>,
    pub momentum: MomentumModel,
}

impl AugmentedReference {
    pub fn new(mean: Vec<f64>, scale: Vec<f64>, momentum: MomentumModel) -> Result<Self> {
        if mean.is_empty() || mean.len() != scale.len() {
            return Err(Error::invalid("reference mean and scale must be non-empty and equal length"));
        }
        if scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("reference scales must be positive and means finite"));
        }
        if momentum.dim != mean.len() {
            return Err(Error::invalid("momentum dimension must match the reference dimension"));
        }
        Ok(Self { mean, scale, affine: None, momentum })
    }

    /// `N(0, I)` position marginal.
    pub fn standard(dim: usize, momentum: MomentumModel) -> Result<Self> {
        Self::new(vec![0.0; dim], vec![1.0; dim], momentum)
    }

    pub fn with_affine(mut self, affine: AffineMap) -> Result<Self> {
        if affine.dim() != self.mean.len() {
            return Err(Error::invalid("affine map dimension must match the reference"));
        }
        self.affine = Some(affine);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn log_density_x(&self, x: &[f64]) -> f64 {
        let (z, log_det) = match &self.affine {
            Some(a) => (a.invert(x), a.log_abs_det()),
            None => (x.to_vec(), 0.0),
        };
        let mut lp = -log_det;
        for ((zi, m), s) in z.iter().zip(&self.mean).zip(&self.scale) {
            let t = (zi - m) / s;
            lp += -0.5 * LN_2PI - s.ln() - 0.5 * t * t;
        }
        lp
    }

    /// `log q0(x) + log m(rho)`; `-inf` outside the pseudotime range.
    pub fn log_density(&self, s: &AugmentedState) -> f64 {
        if !(0.0..1.0).contains(&s.u) {
            return f64::NEG_INFINITY;
        }
        self.log_density_x(&s.x) + self.momentum.log_density(&s.rho)
    }

    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = self
            .mean
            .iter()
            .zip(&self.scale)
            .map(|(m, s)| {
                let e: f64 = rng.sample(StandardNormal);
                m + s * e
            })
            .collect();
        match &self.affine {
            Some(a) => a.apply(&z),
            None => z,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> AugmentedState {
        let x = self.sample_x(rng);
        let rho = self.momentum.sample(rng);
        let u: f64 = rng.random();
        AugmentedState { x, rho, u }
    }
}
