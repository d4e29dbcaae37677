//! Mean actions, Q-value evaluation and action selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::assemble_input;
use crate::approximator::{forward, NeighborScope, NetworkSpec, Q_OUTPUTS};
use crate::error::{Error, Result};
use crate::formation::Preference;
use crate::grid::{Action, Cell, Observation};

/// Average of neighbouring agents' one-hot actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanAction([f64; 5]);

impl MeanAction {
    pub fn uniform() -> Self {
        Self([0.2; 5])
    }

    pub fn values(&self) -> &[f64; 5] {
        &self.0
    }

    fn average<'a>(actions: impl Iterator<Item = &'a Action>) -> Self {
        let mut sum = [0.0; 5];
        let mut n = 0usize;
        for a in actions {
            sum[a.index()] += 1.0;
            n += 1;
        }
        if n == 0 {
            return Self::uniform();
        }
        Self(sum.map(|s| s / n as f64))
    }
}

/// Mean of every other agent's previous one-hot action. A lone agent gets the
/// uniform vector.
pub fn mean_action<V: AsRef<[f64]>>(prev: &[V], self_index: usize) -> Result<MeanAction> {
    if prev.is_empty() || self_index >= prev.len() {
        return Err(Error::invalid("mean action needs a non-empty list and a valid index"));
    }
    let actions = prev
        .iter()
        .map(|v| Action::from_one_hot(v.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeanAction::average(
        actions.iter().enumerate().filter(|&(k, _)| k != self_index).map(|(_, a)| a),
    ))
}

/// Mean actions of all agents at once. With [`NeighborScope::Fov`] only
/// agents inside the `fov` window count.
pub fn mean_actions(actions: &[Action], positions: &[Cell], scope: NeighborScope, fov: usize) -> Vec<MeanAction> {
    let r = (fov / 2) as i64;
    (0..actions.len())
        .map(|j| {
            MeanAction::average(actions.iter().enumerate().filter_map(|(k, a)| {
                let visible = match scope {
                    NeighborScope::All => true,
                    NeighborScope::Fov => {
                        (positions[k].x - positions[j].x).abs() <= r && (positions[k].y - positions[j].y).abs() <= r
                    }
                };
                (k != j && visible).then_some(a)
            }))
        })
        .collect()
}

/// Network output viewed as two rows (objectives) of five actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QMatrix([f64; Q_OUTPUTS]);

impl QMatrix {
    pub fn from_output(values: &[f64]) -> Result<Self> {
        let arr: [f64; Q_OUTPUTS] = values
            .try_into()
            .map_err(|_| Error::invalid(format!("Q output needs {Q_OUTPUTS} values, got {}", values.len())))?;
        Ok(Self(arr))
    }

    pub fn get(&self, objective: usize, action: usize) -> f64 {
        self.0[objective * 5 + action]
    }

    /// `Q(s, a, ...)` as a 2-vector.
    pub fn column(&self, action: usize) -> [f64; 2] {
        [self.0[action], self.0[5 + action]]
    }

    pub fn scalarized(&self, weights: [f64; 2]) -> [f64; 5] {
        std::array::from_fn(|a| weights[0] * self.0[a] + weights[1] * self.0[5 + a])
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.map(|v| v * c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn q_values(
    obs: &Observation,
    mean: &MeanAction,
    preference: Preference,
    spec: &NetworkSpec,
    params: &[f64],
) -> Result<QMatrix> {
    let input = assemble_input(obs, mean, preference.weights());
    QMatrix::from_output(forward(params, spec, &input)?.output())
}

/// Softmax of `beta * values` with max-subtraction. Entries equal to
/// negative infinity are masked out.
pub fn softmax(values: &[f64; 5], beta: f64) -> Result<[f64; 5]> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::invalid(format!("Boltzmann parameter must be finite and >= 0, got {beta}")));
    }
    if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::numeric("action values contain NaN or +inf"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::numeric("every action is masked"));
    }
    let weights = values.map(|v| if v == f64::NEG_INFINITY { 0.0 } else { (beta * (v - max)).exp() });
    let total: f64 = weights.iter().sum();
    Ok(weights.map(|w| w / total))
}

/// Action distribution proportional to `exp(beta * omega^T Q(., a))`.
pub fn boltzmann_policy(q: &QMatrix, preference: Preference, beta: f64) -> Result<[f64; 5]> {
    if q.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("Q matrix is not finite"));
    }
    softmax(&q.scalarized(preference.weights()), beta)
}

/// Argmax of the scalarized Q-values, lowest action index on ties.
pub fn greedy_action(q: &QMatrix, preference: Preference) -> Action {
    let s = q.scalarized(preference.weights());
    let mut best = 0;
    for a in 1..5 {
        if s[a] > s[best] {
            best = a;
        }
    }
    Action::ALL[best]
}

pub fn sample_action<R: Rng>(probs: &[f64; 5], rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (a, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Action::ALL[a];
        }
    }
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(4);
    Action::ALL[last]
}
