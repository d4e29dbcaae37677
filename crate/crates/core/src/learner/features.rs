//! Network input assembly.

use crate::approximator::{InputLayout, NeighborScope};
use crate::grid::{Observation, CHANNELS};

use super::policy::MeanAction;

/// Mean, min and max of the median-centred formation residuals plus the
/// agent's own residual, for each of the two axes.
pub const RELATIVE_FEATURES: usize = 8;
pub const PREFERENCE_INPUTS: usize = 2;

pub fn input_layout(fov: usize, neighbors: NeighborScope) -> InputLayout {
    InputLayout {
        fov,
        channels: CHANNELS,
        relative_features: RELATIVE_FEATURES,
        mean_action: 5,
        preference: PREFERENCE_INPUTS,
        neighbors,
    }
}

fn lower_median(values: &mut [i64]) -> i64 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable(mid).1
}

/// Fixed-size summary of the relative positions. The residual of agent `m` is
/// `p^{i,m} - g^{i,m}`; centring by its median makes the own residual the
/// agent's share of the formation deviation. Values are divided by the FOV
/// width.
pub fn relative_summary(obs: &Observation) -> [f64; RELATIVE_FEATURES] {
    let m = obs.rel_positions.len();
    let scale = obs.fov as f64;
    let mut out = [0.0; RELATIVE_FEATURES];
    let mut column = vec![0i64; m];
    for axis in 0..2 {
        let residual = |k: usize| obs.rel_positions[k][axis] - obs.rel_goals[k][axis];
        for (k, c) in column.iter_mut().enumerate() {
            *c = residual(k);
        }
        let median = lower_median(&mut column);
        let centred: Vec<i64> = (0..m).map(|k| residual(k) - median).collect();
        let sum: i64 = centred.iter().sum();
        let base = axis * 4;
        out[base] = sum as f64 / m as f64 / scale;
        out[base + 1] = *centred.iter().min().expect("at least one agent") as f64 / scale;
        out[base + 2] = *centred.iter().max().expect("at least one agent") as f64 / scale;
        out[base + 3] = centred[obs.agent] as f64 / scale;
    }
    out
}

/// Everything but the preference: FOV channels, relative summary, mean action.
pub fn state_features(obs: &Observation, mean: &MeanAction) -> Vec<f64> {
    let mut v = Vec::with_capacity(obs.channels.len() + RELATIVE_FEATURES + 5 + PREFERENCE_INPUTS);
    v.extend_from_slice(&obs.channels);
    v.extend_from_slice(&relative_summary(obs));
    v.extend_from_slice(mean.values());
    v
}

pub fn assemble_input(obs: &Observation, mean: &MeanAction, weights: [f64; 2]) -> Vec<f64> {
    let mut v = state_features(obs, mean);
    v.extend_from_slice(&weights);
    v
}
