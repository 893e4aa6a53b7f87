//! Forward/backward composition errors of `T^K` and `T^{-K}`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowTransform;
use crate::math::quantile_sorted;
use crate::mixflow::MixFlow;
use crate::state::AugmentedState;

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRecord {
    pub k: usize,
    /// 25th, 50th and 75th percentiles of `|T^{-K} T^K s - s|`.
    pub forward_backward: [f64; 3],
    /// Same for `|T^K T^{-K} s - s|`.
    pub backward_forward: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityProfile {
    pub records: Vec<StabilityRecord>,
    pub n_draws: usize,
}

fn round_trip<T: FlowTransform>(flow: &MixFlow<T>, s: &AugmentedState, k: usize, forward_first: bool) -> f64 {
    let mut y = s.clone();
    let res: Result<()> = if forward_first {
        flow.push_forward(&mut y, k).and_then(|_| flow.pull_back(&mut y, k))
    } else {
        flow.pull_back(&mut y, k).and_then(|_| flow.push_forward(&mut y, k))
    };
    match res {
        Ok(()) => {
            let e = y.distance(s);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        }
        Err(_) => f64::INFINITY,
    }
}

fn quartiles(mut v: Vec<f64>) -> [f64; 3] {
    v.sort_by(|a, b| a.total_cmp(b));
    [quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75)]
}

/// Draws `n_draws` reference states and records composition-error quartiles
/// for every `K` in `ks`. Divergent compositions count as `+inf`.
pub fn stability_profile<T, R>(flow: &MixFlow<T>, ks: &[usize], n_draws: usize, rng: &mut R) -> Result<StabilityProfile>
where
    T: FlowTransform,
    R: Rng + ?Sized,
{
    if ks.is_empty() {
        return Err(Error::invalid("stability profile needs at least one K"));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("stability K grid must be strictly ascending"));
    }
    if n_draws == 0 {
        return Err(Error::invalid("stability profile needs at least one draw"));
    }
    let draws: Vec<AugmentedState> = (0..n_draws).map(|_| flow.reference.sample(rng)).collect();
    let records = ks
        .iter()
        .map(|&k| {
            let (fb, bf): (Vec<f64>, Vec<f64>) = draws
                .par_iter()
                .map(|s| (round_trip(flow, s, k, true), round_trip(flow, s, k, false)))
                .unzip();
            StabilityRecord { k, forward_backward: quartiles(fb), backward_forward: quartiles(bf) }
        })
        .collect();
    Ok(StabilityProfile { records, n_draws })
}
