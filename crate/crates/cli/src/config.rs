//! Experiment configuration: parsing, defaults and validation.

use std::path::{Path, PathBuf};

use mixflow::hamiltonian::DEFAULT_XI;
use mixflow::target::{RegressionHyper, RegressionKind, SyntheticParams};
use mixflow::{MomentumKind, RefreshFn, Standardize};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_HELP: &str = "\
CONFIG FILE (TOML; a run_meta.json from an earlier run is also accepted)

  [target]
    name          synthetic name (gauss1d, gmm1d, cauchy1d, banana, funnel, cross,
                  warped_gaussian, diag_gaussian) or regression kind (linear_normal,
                  linear_cauchy, logistic, poisson, student_t, sparse)   required
    dataset       CSV path, regression only
    response      response column name                       default \"y\"
    standardize   none | features | features_and_response   default \"features\"
    [target.params]  banana_b, banana_var, dim, funnel_sigma2, mean, sd
    [target.hyper]   gamma_shape, gamma_rate, t_dof, tau1, tau2

  [reference]
    kind          meanfield | fixed                          default \"meanfield\"
    mean, scale   fixed reference vectors                    default 0 and 1
    steps         mean-field Adam iterations                 default 10000
    step_size     mean-field Adam learning rate              default 0.01
    batch         mean-field Monte Carlo batch               default 10

  [flow]
    transform     hamiltonian | identity                     default \"hamiltonian\"
    epsilon       step size grid, e.g. [0.01, 0.02]          default tuned preset
    leapfrog      leapfrog steps between refreshments        default tuned preset
    xi            pseudotime shift                           default pi/16
    n_steps       flow length grid                           default [1, 10, 100, 1000]
    burn_in       burn-in grid (run only)                    default [0]
    momentum      laplace | gaussian                         default \"laplace\"
    refresh       sine | sine_no_pseudotime | zero           default \"sine\"

  [diagnostics]
    ksd           compute KSD                                default true
    samples       i.i.d. draws for samples/KSD/density       default 2000
    ksd_c         IMQ constant c                             default 1.0
    ksd_beta      IMQ exponent beta                          default -0.5
    stability_k   round-trip K grid, ascending               default [0, 10, 50, 100]
    stability_draws  reference draws per K                   default 100

  [replication]
    seed          u64 seed; --seed overrides                 required
    replicates    ELBO replicates per cell                   default 8

  [density]
    points        CSV of states (columns as in samples.csv); default: fresh draws

  out             output directory; --out overrides

Tuned presets (epsilon, leapfrog): banana (0.02, 200), cross (0.005, 60),
funnel (0.01, 80), warped_gaussian (0.005, 80), gauss1d (0.05, 50).
";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub target: TargetSpec,
    #[serde(default)]
    pub reference: ReferenceSpec,
    #[serde(default)]
    pub flow: FlowSpec,
    #[serde(default)]
    pub diagnostics: DiagnosticsSpec,
    #[serde(default)]
    pub replication: ReplicationSpec,
    #[serde(default, skip_serializing_if = "DensitySpec::is_empty")]
    pub density: DensitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default = "default_response")]
    pub response: String,
    #[serde(default)]
    pub standardize: Standardize,
    #[serde(default)]
    pub params: SyntheticParams,
    #[serde(default)]
    pub hyper: RegressionHyper,
}

fn default_response() -> String {
    "y".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    #[default]
    Meanfield,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    pub kind: ReferenceKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<f64>>,
    pub steps: usize,
    pub step_size: f64,
    pub batch: usize,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self { kind: ReferenceKind::Meanfield, mean: None, scale: None, steps: 10_000, step_size: 0.01, batch: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    #[default]
    Hamiltonian,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSpec {
    pub transform: TransformKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leapfrog: Option<usize>,
    pub xi: f64,
    pub n_steps: Vec<usize>,
    pub burn_in: Vec<usize>,
    pub momentum: MomentumKind,
    pub refresh: RefreshFn,
}

impl Default for FlowSpec {
    fn default() -> Self {
        Self {
            transform: TransformKind::Hamiltonian,
            epsilon: None,
            leapfrog: None,
            xi: DEFAULT_XI,
            n_steps: vec![1, 10, 100, 1000],
            burn_in: vec![0],
            momentum: MomentumKind::Laplace,
            refresh: RefreshFn::Sine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSpec {
    pub ksd: bool,
    pub samples: usize,
    pub ksd_c: f64,
    pub ksd_beta: f64,
    pub stability_k: Vec<usize>,
    pub stability_draws: usize,
}

impl Default for DiagnosticsSpec {
    fn default() -> Self {
        Self { ksd: true, samples: 2000, ksd_c: 1.0, ksd_beta: -0.5, stability_k: vec![0, 10, 50, 100], stability_draws: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicationSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub replicates: usize,
}

impl Default for ReplicationSpec {
    fn default() -> Self {
        Self { seed: None, replicates: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
}

impl DensitySpec {
    fn is_empty(&self) -> bool {
        self.points.is_none()
    }
}

/// `(epsilon, leapfrog)` chosen by ELBO maximization on each synthetic target.
pub fn tuned_preset(name: &str) -> Option<(f64, usize)> {
    match name {
        "banana" => Some((0.02, 200)),
        "cross" => Some((0.005, 60)),
        "funnel" => Some((0.01, 80)),
        "warped_gaussian" | "warped" => Some((0.005, 80)),
        "gauss1d" => Some((0.05, 50)),
        _ => None,
    }
}

pub fn is_regression(name: &str) -> bool {
    name.parse::<RegressionKind>().is_ok()
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the file ends in `.json`. A JSON document with
    /// a top-level `config` key (as written to `run_meta.json`) is unwrapped.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let mut v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            if let Some(inner) = v.get_mut("config") {
                v = inner.take();
            }
            serde_json::from_value(v).map_err(|e| config_err(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
        }
    }

    /// Fills the tuned defaults, applies the overrides and validates every
    /// numeric field. Relative dataset paths are resolved against `base`.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>, base: &Path) -> Result<Self, CliError> {
        if seed.is_some() {
            self.replication.seed = seed;
        }
        if out.is_some() {
            self.out = out;
        }
        if self.replication.seed.is_none() {
            return Err(config_err("a seed is required (replication.seed or --seed)"));
        }
        if self.out.is_none() {
            return Err(config_err("an output directory is required (out or --out)"));
        }
        if let Some(p) = &self.target.dataset {
            if p.is_relative() {
                self.target.dataset = Some(base.join(p));
            }
        }
        if let Some(p) = &self.density.points {
            if p.is_relative() {
                self.density.points = Some(base.join(p));
            }
        }
        if self.flow.transform == TransformKind::Hamiltonian {
            let preset = tuned_preset(&self.target.name);
            if self.flow.epsilon.is_none() {
                let (eps, _) = preset.ok_or_else(|| {
                    config_err(format!("target {:?} has no tuned preset; set flow.epsilon", self.target.name))
                })?;
                self.flow.epsilon = Some(vec![eps]);
            }
            if self.flow.leapfrog.is_none() {
                let (_, l) = preset.ok_or_else(|| {
                    config_err(format!("target {:?} has no tuned preset; set flow.leapfrog", self.target.name))
                })?;
                self.flow.leapfrog = Some(l);
            }
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), CliError> {
        let t = &self.target;
        if is_regression(&t.name) {
            if t.dataset.is_none() {
                return Err(config_err(format!("regression target {:?} requires target.dataset", t.name)));
            }
        } else if t.dataset.is_some() {
            return Err(config_err(format!("target.dataset is only used by regression targets, not {:?}", t.name)));
        }

        let r = &self.reference;
        match r.kind {
            ReferenceKind::Meanfield => {
                if r.mean.is_some() || r.scale.is_some() {
                    return Err(config_err("reference.mean/scale require reference.kind = \"fixed\""));
                }
                if !(r.step_size.is_finite() && r.step_size > 0.0) {
                    return Err(config_err("reference.step_size must be positive"));
                }
                if r.batch == 0 {
                    return Err(config_err("reference.batch must be positive"));
                }
            }
            ReferenceKind::Fixed => {
                if let Some(s) = &r.scale {
                    if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                        return Err(config_err("reference.scale entries must be positive"));
                    }
                }
                if let Some(m) = &r.mean {
                    if m.iter().any(|v| !v.is_finite()) {
                        return Err(config_err("reference.mean entries must be finite"));
                    }
                }
            }
        }

        let f = &self.flow;
        if let Some(eps) = &f.epsilon {
            if eps.is_empty() {
                return Err(config_err("flow.epsilon grid is empty"));
            }
            if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
                return Err(config_err("flow.epsilon entries must be positive and finite"));
            }
        }
        if f.leapfrog == Some(0) {
            return Err(config_err("flow.leapfrog must be at least 1"));
        }
        if !(f.xi.is_finite() && f.xi.abs() < 1.0) {
            return Err(config_err("flow.xi must satisfy |xi| < 1"));
        }
        if f.n_steps.is_empty() || f.n_steps.contains(&0) {
            return Err(config_err("flow.n_steps must be a non-empty grid of positive integers"));
        }
        let n_max = *f.n_steps.iter().max().unwrap();
        if f.burn_in.is_empty() {
            return Err(config_err("flow.burn_in grid is empty"));
        }
        if let Some(&m) = f.burn_in.iter().find(|&&m| m >= n_max) {
            return Err(config_err(format!("flow.burn_in entry {m} is not below any flow length")));
        }

        let d = &self.diagnostics;
        if d.ksd && d.samples == 0 {
            return Err(config_err("diagnostics.ksd is enabled but diagnostics.samples is 0"));
        }
        if !(d.ksd_c.is_finite() && d.ksd_c > 0.0) || !(d.ksd_beta.is_finite() && d.ksd_beta < 0.0) {
            return Err(config_err("IMQ kernel needs diagnostics.ksd_c > 0 and diagnostics.ksd_beta < 0"));
        }
        if d.stability_k.is_empty() {
            return Err(config_err("diagnostics.stability_k grid is empty"));
        }
        if d.stability_k.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config_err("diagnostics.stability_k must be strictly ascending"));
        }
        if d.stability_draws == 0 {
            return Err(config_err("diagnostics.stability_draws must be positive"));
        }
        if self.replication.replicates == 0 {
            return Err(config_err("replication.replicates must be positive"));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.replication.seed.expect("resolved config has a seed")
    }

    pub fn out_dir(&self) -> &Path {
        self.out.as_deref().expect("resolved config has an output directory")
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.flow.epsilon.clone().unwrap_or_else(|| vec![f64::NAN])
    }

    pub fn n_max(&self) -> usize {
        *self.flow.n_steps.iter().max().expect("validated grid")
    }
}
