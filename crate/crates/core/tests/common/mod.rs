//! Shared fixtures and independent re-implementations used as oracles.
//!
//! Nothing here calls into the library's flow code: the flow map, its
//! Jacobian and the target derivatives are written out from scratch.
#![allow(dead_code)]

use std::sync::Arc;

use mixflow::math::stream_rng;
use mixflow::{
    fit_meanfield, flow_forward, synthetic_target, AugmentedReference, AugmentedState, AugmentedTarget,
    FlowTransform, HamFlowParams, HamiltonianFlow, MixFlow, MomentumModel, TargetModel,
};
use nalgebra::DMatrix;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const XI: f64 = std::f64::consts::PI / 16.0;

/// Target derivatives written out by hand.
#[derive(Clone, Copy, Debug)]
pub enum OracleTarget {
    /// N(2, 2^2)
    Gauss1d,
    /// Banana with b = 0.1, var = 100.
    Banana,
}

impl OracleTarget {
    pub fn dim(&self) -> usize {
        match self {
            OracleTarget::Gauss1d => 1,
            OracleTarget::Banana => 2,
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            OracleTarget::Gauss1d => -0.5 * LN_2PI - 2f64.ln() - 0.5 * ((x[0] - 2.0) / 2.0).powi(2),
            OracleTarget::Banana => {
                let y2 = x[1] - 0.1 * x[0] * x[0] + 10.0;
                -LN_2PI - 0.5 * 100f64.ln() - x[0] * x[0] / 200.0 - 0.5 * y2 * y2
            }
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        match self {
            OracleTarget::Gauss1d => vec![-(x[0] - 2.0) / 4.0],
            OracleTarget::Banana => {
                let y2 = x[1] - 0.1 * x[0] * x[0] + 10.0;
                vec![-x[0] / 100.0 + 0.2 * x[0] * y2, -y2]
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        match self {
            OracleTarget::Gauss1d => DMatrix::from_element(1, 1, -0.25),
            OracleTarget::Banana => {
                let y2 = x[1] - 0.1 * x[0] * x[0] + 10.0;
                let h11 = -0.01 + 0.2 * y2 - 0.04 * x[0] * x[0];
                let h12 = 0.2 * x[0];
                DMatrix::from_row_slice(2, 2, &[h11, h12, h12, -1.0])
            }
        }
    }
}

pub fn laplace_cdf(v: f64) -> f64 {
    if v < 0.0 {
        0.5 * v.exp()
    } else {
        1.0 - 0.5 * (-v).exp()
    }
}

pub fn laplace_quantile(p: f64) -> f64 {
    if p < 0.5 {
        (2.0 * p).ln()
    } else {
        -(2.0 * (1.0 - p)).ln()
    }
}

pub fn laplace_pdf(v: f64) -> f64 {
    0.5 * (-v.abs()).exp()
}

/// One forward flow step with tangent propagation. `tangent` is the
/// `(2d+1) x (2d+1)` Jacobian of the composition so far, ordered `(x, rho, u)`.
pub fn oracle_step(
    t: OracleTarget,
    s: &mut AugmentedState,
    eps: f64,
    n_leapfrog: usize,
    tangent: &mut DMatrix<f64>,
) {
    let d = t.dim();
    let n = 2 * d + 1;
    for _ in 0..n_leapfrog {
        // half kick
        let g = t.grad(&s.x);
        let h = t.hessian(&s.x);
        let mut step = DMatrix::<f64>::identity(n, n);
        for i in 0..d {
            s.rho[i] += 0.5 * eps * g[i];
            for j in 0..d {
                step[(d + i, j)] += 0.5 * eps * h[(i, j)];
            }
        }
        *tangent = &step * &*tangent;
        // drift, unit Jacobian for Laplace kinetic energy
        for i in 0..d {
            s.x[i] += eps * s.rho[i].signum() * (s.rho[i] != 0.0) as i32 as f64;
        }
        let g = t.grad(&s.x);
        let h = t.hessian(&s.x);
        let mut step = DMatrix::<f64>::identity(n, n);
        for i in 0..d {
            s.rho[i] += 0.5 * eps * g[i];
            for j in 0..d {
                step[(d + i, j)] += 0.5 * eps * h[(i, j)];
            }
        }
        *tangent = &step * &*tangent;
    }
    let w = s.u + XI;
    s.u = w - w.floor();
    let mut step = DMatrix::<f64>::identity(n, n);
    for i in 0..d {
        let arg = 2.0 * s.x[i] + s.u;
        let z = 0.5 * arg.sin() + 0.5;
        let p = laplace_cdf(s.rho[i]) + z;
        let new = laplace_quantile(p - p.floor());
        let r_old = laplace_pdf(s.rho[i]);
        let r_new = laplace_pdf(new);
        step[(d + i, d + i)] = r_old / r_new;
        step[(d + i, i)] = arg.cos() / r_new;
        step[(d + i, 2 * d)] = 0.5 * arg.cos() / r_new;
        s.rho[i] = new;
    }
    *tangent = &step * &*tangent;
}

/// Diagonal-Gaussian position reference with Laplace momentum, written out.
pub fn oracle_log_q0(mean: &[f64], scale: &[f64], s: &AugmentedState) -> f64 {
    if !(0.0..1.0).contains(&s.u) {
        return f64::NEG_INFINITY;
    }
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let z = (s.x[i] - mean[i]) / scale[i];
        lp += -0.5 * LN_2PI - scale[i].ln() - 0.5 * z * z;
        lp += laplace_pdf(s.rho[i]).ln();
    }
    lp
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln()
}

/// Brute-force `log q_N(x)`: for each `n`, the preimage `y_n = T^{-n} x` is
/// taken from the library, checked by pushing it forward with the oracle map,
/// and weighted by `q0(y_n) / |det D T^n(y_n)|` with the determinant from
/// tangent propagation.
pub fn brute_force_log_density(
    t: OracleTarget,
    flow: &MixFlow<HamiltonianFlow>,
    x: &AugmentedState,
) -> f64 {
    let d = t.dim();
    let p = flow.transform.params;
    let mut terms = Vec::new();
    let mut y = x.clone();
    for n in 0..flow.n_steps() {
        if n > 0 {
            flow.pull_back(&mut y, 1).unwrap();
        }
        let mut s = y.clone();
        let mut tangent = DMatrix::<f64>::identity(2 * d + 1, 2 * d + 1);
        for _ in 0..n {
            oracle_step(t, &mut s, p.epsilon, p.n_leapfrog, &mut tangent);
        }
        let resid = s.distance(x);
        assert!(resid < 1e-9, "oracle push-forward misses the point by {resid} at n = {n}");
        let log_det = tangent.determinant().abs().ln();
        terms.push(oracle_log_q0(&flow.reference.mean, &flow.reference.scale, &y) - log_det);
    }
    log_sum_exp(&terms) - (flow.n_steps() as f64).ln()
}

/// Step size and leapfrog count used for each 2-D synthetic target.
pub fn tuned(name: &str) -> (f64, usize) {
    match name {
        "banana" => (0.02, 200),
        "cross" => (0.005, 60),
        "funnel" => (0.01, 80),
        "warped_gaussian" => (0.005, 80),
        other => panic!("no tuned settings for {other}"),
    }
}

pub fn synthetic(name: &str) -> Arc<dyn TargetModel> {
    Arc::new(synthetic_target(name, &Default::default()).unwrap())
}

/// Mean-field reference for `target`, fixed seed.
pub fn meanfield_reference(target: &Arc<dyn TargetModel>, momentum: MomentumModel) -> AugmentedReference {
    fit_meanfield(target, 10_000, 0.01, 10, momentum, &mut stream_rng(1, 0)).unwrap().reference
}

pub fn ham_flow(
    target: &Arc<dyn TargetModel>,
    momentum: MomentumModel,
    eps: f64,
    n_leapfrog: usize,
) -> HamiltonianFlow {
    HamiltonianFlow::new(target.clone(), momentum, HamFlowParams::new(eps, n_leapfrog).unwrap()).unwrap()
}

/// Tuned flow with mean-field reference on a named 2-D synthetic target.
pub fn tuned_mixflow(name: &str, momentum: MomentumModel, n: usize) -> MixFlow<HamiltonianFlow> {
    let t = synthetic(name);
    let (eps, l) = tuned(name);
    let r = meanfield_reference(&t, momentum);
    MixFlow::new(r, ham_flow(&t, momentum, eps, l), n, 0).unwrap()
}

/// All six regression models on a small simulated dataset.
pub fn regression_fixtures() -> Vec<(String, Arc<dyn TargetModel>)> {
    use mixflow::target::{regression_target, RegressionHyper, RegressionKind};
    use mixflow::{Dataset, Standardize};
    use rand::Rng;
    use rand_distr::StandardNormal;

    let mut rng = stream_rng(77, 0);
    let n = 40;
    let p = 3;
    let feats: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    let lin: Vec<f64> = (0..n)
        .map(|i| {
            let e: f64 = rng.sample(StandardNormal);
            0.8 * feats[i * p] - 0.5 * feats[i * p + 1] + 0.1 + 0.3 * e
        })
        .collect();
    let bin: Vec<f64> = lin.iter().map(|v| if *v > 0.0 { 1.0 } else { 0.0 }).collect();
    let counts: Vec<f64> = lin.iter().map(|v| (v.abs() * 3.0).floor()).collect();
    let names: Vec<String> = (0..p).map(|j| format!("f{j}")).collect();
    let ds = |y: &[f64]| Dataset::from_rows(names.clone(), "y".into(), feats.clone(), y.to_vec(), Standardize::Features).unwrap();
    let h = RegressionHyper::default();
    let mk = |kind: RegressionKind, y: &[f64]| -> Arc<dyn TargetModel> { Arc::new(regression_target(kind, &ds(y), h).unwrap()) };
    vec![
        ("linear_normal".into(), mk(RegressionKind::LinearNormal, &lin)),
        ("linear_cauchy".into(), mk(RegressionKind::LinearCauchy, &lin)),
        ("logistic".into(), mk(RegressionKind::Logistic, &bin)),
        ("poisson".into(), mk(RegressionKind::Poisson, &counts)),
        ("student_t".into(), mk(RegressionKind::StudentT, &lin)),
        ("sparse".into(), mk(RegressionKind::Sparse, &lin)),
    ]
}

pub const SYNTHETIC_NAMES: [&str; 7] = ["gauss1d", "gmm1d", "cauchy1d", "banana", "funnel", "cross", "warped_gaussian"];

/// Worst `|fd - g| / max(|g|, 1)` over `points` random points, with central
/// differences at `h = 1e-5`.
pub fn worst_gradient_error(t: &dyn TargetModel, points: usize, spread: f64, seed: u64) -> f64 {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let d = t.dim();
    let mut rng = stream_rng(seed, 0);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut g = vec![0.0; d];
    for _ in 0..points {
        let x: Vec<f64> = (0..d).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
        t.grad_log_density(&x, &mut g);
        for i in 0..d {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (t.log_density(&xp) - t.log_density(&xm)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
    }
    worst
}

/// Midpoint-rule integral of `exp(f)` over `[lo, hi]` with `n` cells.
pub fn integrate_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    (0..n).map(|i| f(lo + (i as f64 + 0.5) * h).exp() * h).sum()
}

/// Grid integral of a normalized synthetic density.
pub fn synthetic_mass(name: &str) -> f64 {
    let t = synthetic(name);
    let f1 = |x: f64| t.log_density(&[x]);
    match name {
        "gauss1d" => integrate_1d(f1, -12.0, 16.0, 20_000),
        "gmm1d" => integrate_1d(f1, -14.0, 12.0, 20_000),
        "cauchy1d" => integrate_1d(f1, -20_000.0, 20_000.0, 4_000_000),
        "banana" => {
            // Pre-warp coordinates y ~ N(0, diag(100, 1)); the map has unit Jacobian.
            integrate_1d(
                |y1| {
                    integrate_1d(|y2| t.log_density(&[y1, y2 + 0.1 * y1 * y1 - 10.0]), -8.0, 8.0, 400).ln()
                },
                -80.0,
                80.0,
                800,
            )
        }
        "funnel" => integrate_1d(
            |x1| {
                let s = (x1 / 4.0).exp();
                integrate_1d(|x2| t.log_density(&[x1, x2]), -8.0 * s, 8.0 * s, 400).ln()
            },
            -48.0,
            48.0,
            2000,
        ),
        "cross" | "warped_gaussian" => integrate_1d(
            |x1| integrate_1d(|x2| t.log_density(&[x1, x2]), -7.0, 7.0, 1400).ln(),
            -7.0,
            7.0,
            1400,
        ),
        other => panic!("unknown {other}"),
    }
}

/// N full density evaluations along one forward trajectory.
pub fn naive_elbo<T: FlowTransform>(flow: &MixFlow<T>, target: &AugmentedTarget, seed: u64) -> f64 {
    let mut x = flow.reference.sample(&mut stream_rng(seed, 0));
    let mut acc = 0.0;
    for n in 0..flow.n_steps() {
        if n > 0 {
            flow.transform.forward(&mut x).unwrap();
        }
        acc += target.log_density_state(&x) - flow.log_density(&x).unwrap();
    }
    acc / flow.n_steps() as f64
}

/// Central finite-difference Jacobian of one flow step on `(x, rho, u)`.
pub fn fd_log_det(s: &AugmentedState, params: &HamFlowParams, t: &Arc<dyn TargetModel>, mom: &MomentumModel) -> f64 {
    let d = s.dim();
    let n = 2 * d + 1;
    let h = 1e-6;
    let flat = |st: &AugmentedState| {
        let mut v = st.x.clone();
        v.extend(&st.rho);
        v.push(st.u);
        v
    };
    let unflat = |v: &[f64]| AugmentedState { x: v[..d].to_vec(), rho: v[d..2 * d].to_vec(), u: v[2 * d] };
    let base = flat(s);
    let mut jac = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[j] += h;
        minus[j] -= h;
        let fp = flat(&flow_forward(&unflat(&plus), params, t.clone(), mom).unwrap().0);
        let fm = flat(&flow_forward(&unflat(&minus), params, t.clone(), mom).unwrap().0);
        for i in 0..n {
            let mut diff = fp[i] - fm[i];
            if i == 2 * d {
                diff -= diff.round();
            }
            jac[(i, j)] = diff / (2.0 * h);
        }
    }
    jac.determinant().abs().ln()
}
