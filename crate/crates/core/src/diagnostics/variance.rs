//! Equal-budget comparison of the i.i.d. MixFlow estimator with the
//! trajectory-averaged estimator.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowTransform;
use crate::math::{mean, sample_variance, stream_rng};
use crate::mixflow::MixFlow;
use crate::state::AugmentedState;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorComparison {
    pub iid_mean: f64,
    pub iid_variance: f64,
    pub trajectory_mean: f64,
    pub trajectory_variance: f64,
    pub trials: usize,
    pub eval_budget: usize,
}

/// Per trial, both estimators spend at most `eval_budget` flow-map
/// evaluations: an i.i.d. draw costs its sampled `K`, a trajectory average
/// costs `N`. Draws are added while they fit in the budget.
pub fn compare_estimators<T, F, R>(
    flow: &MixFlow<T>,
    f: F,
    eval_budget: usize,
    trials: usize,
    rng: &mut R,
) -> Result<EstimatorComparison>
where
    T: FlowTransform,
    F: Fn(&AugmentedState) -> f64 + Sync,
    R: Rng + ?Sized,
{
    let n = flow.n_steps();
    if n < 2 {
        return Err(Error::invalid("estimator comparison needs N >= 2"));
    }
    let traj_cost = n;
    if eval_budget < n {
        return Err(Error::invalid(format!("budget {eval_budget} is below one trajectory ({n} steps)")));
    }
    if trials < 2 {
        return Err(Error::invalid("estimator comparison needs at least two trials"));
    }
    let seed: u64 = rng.random();
    let per_trial: Result<Vec<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, 2 * t as u64);
            let mut spent = 0;
            let mut acc = 0.0;
            let mut count = 0usize;
            loop {
                let (s, k) = flow.sample_with_index(&mut rng)?;
                if spent + k > eval_budget || count > eval_budget + n {
                    break;
                }
                spent += k;
                acc += f(&s);
                count += 1;
            }
            let iid = acc / count.max(1) as f64;

            let mut rng = stream_rng(seed, 2 * t as u64 + 1);
            let reps = eval_budget / traj_cost;
            let mut tacc = 0.0;
            for _ in 0..reps {
                tacc += flow.trajectory_average(&f, &mut rng)?;
            }
            Ok((iid, tacc / reps as f64))
        })
        .collect();
    let (iid, traj): (Vec<f64>, Vec<f64>) = per_trial?.into_iter().unzip();
    Ok(EstimatorComparison {
        iid_mean: mean(&iid),
        iid_variance: sample_variance(&iid),
        trajectory_mean: mean(&traj),
        trajectory_variance: sample_variance(&traj),
        trials,
        eval_budget,
    })
}
