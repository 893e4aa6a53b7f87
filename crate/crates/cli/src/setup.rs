//! Builds targets, references and flows from a resolved config.

use std::path::Path;
use std::sync::Arc;

use mixflow::math::stream_rng;
use mixflow::target::{RegressionKind, SyntheticTarget};
use mixflow::{
    augment_target, fit_meanfield, load_dataset, regression_target, synthetic_target, AugmentedReference,
    AugmentedState, AugmentedTarget, FlowTransform, HamFlowParams, HamiltonianFlow, IdentityFlow, MixFlow,
    MomentumModel, TargetModel,
};
use rand::Rng;

use crate::config::{is_regression, ExperimentConfig, ReferenceKind, TransformKind};
use crate::error::CliError;

/// Independent seed streams, one per purpose.
pub mod tag {
    pub const REFERENCE: u64 = 0;
    pub const ELBO: u64 = 1;
    pub const SAMPLES: u64 = 2;
    pub const STABILITY: u64 = 3;
    pub const DENSITY: u64 = 4;
    pub const TRAJECTORY: u64 = 5;
}

pub fn derived_seed(seed: u64, tag: u64) -> u64 {
    stream_rng(seed, tag).random()
}

/// Stream index of replicate `r` in grid cell `cell`.
pub fn cell_stream(cell: usize, r: usize) -> u64 {
    ((cell as u64) << 32) | r as u64
}

pub struct Setup {
    pub cfg: ExperimentConfig,
    pub target: Arc<dyn TargetModel>,
    pub momentum: MomentumModel,
    pub reference: AugmentedReference,
}

fn build_target(cfg: &ExperimentConfig) -> Result<Arc<dyn TargetModel>, CliError> {
    let t = &cfg.target;
    if is_regression(&t.name) {
        let kind: RegressionKind = t.name.parse()?;
        let path = t.dataset.as_deref().expect("validated");
        let data = load_dataset(path, &t.response, t.standardize)?;
        Ok(Arc::new(regression_target(kind, &data, t.hyper)?))
    } else {
        let s: SyntheticTarget = synthetic_target(&t.name, &t.params)?;
        Ok(Arc::new(s))
    }
}

impl Setup {
    pub fn build(cfg: ExperimentConfig) -> Result<Self, CliError> {
        let target = build_target(&cfg)?;
        let d = target.dim();
        let momentum = MomentumModel::new(cfg.flow.momentum, d);
        let r = &cfg.reference;
        let reference = match r.kind {
            ReferenceKind::Fixed => {
                let mean = r.mean.clone().unwrap_or_else(|| vec![0.0; d]);
                let scale = r.scale.clone().unwrap_or_else(|| vec![1.0; d]);
                if mean.len() != d || scale.len() != d {
                    return Err(CliError::Config(format!("reference.mean/scale must have length {d}")));
                }
                AugmentedReference::new(mean, scale, momentum)?
            }
            ReferenceKind::Meanfield => {
                let mut rng = stream_rng(derived_seed(cfg.seed(), tag::REFERENCE), 0);
                fit_meanfield(target.as_ref(), r.steps, r.step_size, r.batch, momentum, &mut rng)?.reference
            }
        };
        Ok(Self { cfg, target, momentum, reference })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn augmented(&self) -> AugmentedTarget {
        augment_target(self.target.clone(), self.momentum)
    }

    pub fn transform(&self, epsilon: f64) -> Result<Box<dyn FlowTransform>, CliError> {
        let f = &self.cfg.flow;
        Ok(match f.transform {
            TransformKind::Identity => Box::new(IdentityFlow { dim: self.dim() }),
            TransformKind::Hamiltonian => {
                let params = HamFlowParams::new(epsilon, f.leapfrog.expect("resolved"))?
                    .with_xi(f.xi)
                    .with_refresh(f.refresh);
                Box::new(HamiltonianFlow::new(self.target.clone(), self.momentum, params)?)
            }
        })
    }

    pub fn mixflow<'a>(
        &self,
        t: &'a dyn FlowTransform,
        n: usize,
        burn_in: usize,
    ) -> Result<MixFlow<&'a dyn FlowTransform>, CliError> {
        Ok(MixFlow::new(self.reference.clone(), t, n, burn_in)?)
    }

    /// The one step size of a run-style command.
    pub fn single_epsilon(&self) -> Result<f64, CliError> {
        let eps = self.cfg.epsilons();
        if eps.len() != 1 {
            return Err(CliError::Config(format!(
                "this command needs exactly one flow.epsilon, got {}; use sweep for grids",
                eps.len()
            )));
        }
        Ok(eps[0])
    }

    pub fn score(&self) -> impl Fn(&[f64]) -> Vec<f64> + Sync + '_ {
        move |x: &[f64]| {
            let mut g = vec![0.0; x.len()];
            self.target.grad_log_density(x, &mut g);
            g
        }
    }
}

/// Reads states from a CSV with columns `x1..xd, rho1..rhod, u` (extra columns ignored).
pub fn read_states(path: &Path, d: usize) -> Result<Vec<AugmentedState>, CliError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| CliError::Io(format!("cannot read points {}: {e}", path.display())))?;
    let headers = rdr.headers()?.clone();
    let names = crate::output::state_header(d);
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h.trim() == n)
                .ok_or_else(|| CliError::Io(format!("{}: missing column {n}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = idx
            .iter()
            .map(|&i| {
                rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| {
                    CliError::Io(format!("{}: row {} has a non-numeric entry", path.display(), line + 2))
                })
            })
            .collect::<Result<_, _>>()?;
        let s = AugmentedState::new(vals[..d].to_vec(), vals[d..2 * d].to_vec(), vals[2 * d])
            .map_err(|e| CliError::Io(format!("{}: row {}: {e}", path.display(), line + 2)))?;
        out.push(s);
    }
    Ok(out)
}
