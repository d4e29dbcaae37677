//! Envelope Bellman targets and the homotopy loss.

use std::sync::Arc;

use super::features::state_features;
use super::policy::{MeanAction, QMatrix};
use super::replay::Transition;
use crate::approximator::{
    accumulate_prefix_grad, backward_prefix_into, forward_with_prefix, prefix_partial, ForwardCache, NetworkSpec,
};
use crate::error::{Error, Result};
use crate::formation::Preference;
use crate::grid::Observation;

fn dot(w: [f64; 2], v: [f64; 2]) -> f64 {
    w[0] * v[0] + w[1] * v[1]
}

fn best_action(q: &QMatrix, weights: [f64; 2]) -> (usize, f64) {
    let s = q.scalarized(weights);
    let mut best = 0;
    for a in 1..5 {
        if s[a] > s[best] {
            best = a;
        }
    }
    (best, s[best])
}

/// Envelope maximization over sampled preferences `omega'` and actions.
///
/// `select[k][j]` and `evaluate[k][j]` hold agent `j`'s next-state Q-values
/// conditioned on the `k`-th sampled preference. The maximizer is chosen by
/// `weights`-scalarized value in `select`; the returned vector sums the
/// matching un-scalarized columns of `evaluate`. With `shared` every agent
/// uses the same `omega'`, otherwise each agent picks its own.
pub fn envelope_backup(select: &[Vec<QMatrix>], evaluate: &[Vec<QMatrix>], weights: [f64; 2], shared: bool) -> Result<[f64; 2]> {
    if select.is_empty() || select.len() != evaluate.len() {
        return Err(Error::invalid("envelope backup needs at least one sampled preference"));
    }
    let agents = select[0].len();
    if select.iter().chain(evaluate).any(|row| row.len() != agents) {
        return Err(Error::invalid("envelope backup rows disagree on the agent count"));
    }
    let mut out = [0.0, 0.0];
    if shared {
        let mut best: Option<(usize, f64)> = None;
        for (k, row) in select.iter().enumerate() {
            let total: f64 = row.iter().map(|q| best_action(q, weights).1).sum();
            if best.is_none_or(|(_, v)| total > v) {
                best = Some((k, total));
            }
        }
        let k = best.expect("non-empty").0;
        for (j, q) in select[k].iter().enumerate() {
            let c = evaluate[k][j].column(best_action(q, weights).0);
            out = [out[0] + c[0], out[1] + c[1]];
        }
    } else {
        for j in 0..agents {
            let mut best = (0, 0, f64::NEG_INFINITY);
            for (k, row) in select.iter().enumerate() {
                let (a, v) = best_action(&row[j], weights);
                if v > best.2 {
                    best = (k, a, v);
                }
            }
            let c = evaluate[best.0][j].column(best.1);
            out = [out[0] + c[0], out[1] + c[1]];
        }
    }
    Ok(out)
}

/// `y = reward_sum + gamma * envelope`, without the bootstrap when terminal.
pub fn envelope_target(
    reward_sum: [f64; 2],
    terminal: bool,
    select: &[Vec<QMatrix>],
    evaluate: &[Vec<QMatrix>],
    weights: [f64; 2],
    gamma: f64,
    shared: bool,
) -> Result<[f64; 2]> {
    if select.is_empty() {
        return Err(Error::invalid("empty preference sample"));
    }
    if terminal {
        return Ok(reward_sum);
    }
    let b = envelope_backup(select, evaluate, weights, shared)?;
    Ok([reward_sum[0] + gamma * b[0], reward_sum[1] + gamma * b[1]])
}

/// Q-values of one observation under each preference, sharing the
/// first-layer work.
pub fn q_for_preferences(
    spec: &NetworkSpec,
    params: &[f64],
    obs: &Observation,
    mean: &MeanAction,
    prefs: &[Preference],
) -> Result<Vec<QMatrix>> {
    let prefix = state_features(obs, mean);
    let pc = prefix_partial(params, spec, &prefix)?;
    prefs
        .iter()
        .map(|p| QMatrix::from_output(forward_with_prefix(params, spec, &pc, &p.weights())?.output()))
        .collect()
}

/// Options of the target computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetOptions {
    pub gamma: f64,
    /// One `omega'` for all agents inside the envelope maximum.
    pub shared_omega: bool,
}

/// Targets `y[n][k]` for transition `n` conditioned on preference `k`. The
/// sampled preferences double as the envelope's `omega'` candidates.
/// `select_params` picks the maximizer with another parameter vector; by
/// default the target parameters both select and evaluate.
pub fn envelope_targets(
    batch: &[Arc<Transition>],
    prefs: &[Preference],
    spec: &NetworkSpec,
    target_params: &[f64],
    select_params: Option<&[f64]>,
    options: TargetOptions,
) -> Result<Vec<Vec<[f64; 2]>>> {
    if prefs.is_empty() {
        return Err(Error::invalid("empty preference sample"));
    }
    let fov = spec.layout.fov;
    let mut out = Vec::with_capacity(batch.len());
    for t in batch {
        let r = t.reward_sum();
        if t.terminal {
            out.push(vec![r; prefs.len()]);
            continue;
        }
        let mut evaluate = vec![Vec::with_capacity(t.agents()); prefs.len()];
        let mut select = vec![Vec::with_capacity(t.agents()); prefs.len()];
        for j in 0..t.agents() {
            let obs = t.next_observation(j, fov);
            let mean = &t.next_mean_actions[j];
            let qe = q_for_preferences(spec, target_params, &obs, mean, prefs)?;
            let qs = match select_params {
                Some(p) => q_for_preferences(spec, p, &obs, mean, prefs)?,
                None => qe.clone(),
            };
            for k in 0..prefs.len() {
                evaluate[k].push(qe[k]);
                select[k].push(qs[k]);
            }
        }
        let row = prefs
            .iter()
            .map(|p| envelope_target(r, false, &select, &evaluate, p.weights(), options.gamma, options.shared_omega))
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub l_a: f64,
    pub l_b: f64,
}

/// `(1 - zeta) * mean ||e||^2 + zeta * mean |w^T e|` over samples, with the
/// gradient with respect to each error vector.
pub fn homotopy_loss(errors: &[[f64; 2]], weights: &[[f64; 2]], zeta: f64) -> Result<(LossValue, Vec<[f64; 2]>)> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::invalid(format!("homotopy weight {zeta} outside [0, 1]")));
    }
    if errors.is_empty() || errors.len() != weights.len() {
        return Err(Error::invalid("loss needs one preference per error sample"));
    }
    let n = errors.len() as f64;
    let mut l_a = 0.0;
    let mut l_b = 0.0;
    let mut grad = Vec::with_capacity(errors.len());
    for (e, w) in errors.iter().zip(weights) {
        let proj = dot(*w, *e);
        l_a += e[0] * e[0] + e[1] * e[1];
        l_b += proj.abs();
        let sign = if proj > 0.0 {
            1.0
        } else if proj < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad.push(std::array::from_fn(|o| {
            ((1.0 - zeta) * 2.0 * e[o] + zeta * sign * w[o]) / n
        }));
    }
    l_a /= n;
    l_b /= n;
    let total = (1.0 - zeta) * l_a + zeta * l_b;
    if !total.is_finite() {
        return Err(Error::numeric("loss is not finite"));
    }
    Ok((LossValue { total, l_a, l_b }, grad))
}

/// Homotopy loss of a batch against fixed targets, and its gradient with
/// respect to `params`. Sample `(n, k)` pairs transition `n` with preference
/// `k`; its prediction sums every agent's Q column for the action it took.
pub fn loss(
    batch: &[Arc<Transition>],
    targets: &[Vec<[f64; 2]>],
    spec: &NetworkSpec,
    params: &[f64],
    prefs: &[Preference],
    zeta: f64,
) -> Result<(LossValue, Vec<f64>)> {
    if targets.len() != batch.len() || targets.iter().any(|row| row.len() != prefs.len()) {
        return Err(Error::invalid("targets do not match the batch"));
    }
    if prefs.is_empty() || batch.is_empty() {
        return Err(Error::invalid("loss needs a non-empty batch and preference sample"));
    }
    let fov = spec.layout.fov;
    let width = spec.layers[0].outputs;
    // Forward pass for every (transition, agent, preference).
    let mut prefixes: Vec<Vec<Vec<f64>>> = Vec::with_capacity(batch.len());
    let mut caches: Vec<Vec<Vec<ForwardCache>>> = Vec::with_capacity(batch.len());
    let mut errors = Vec::with_capacity(batch.len() * prefs.len());
    let mut weights = Vec::with_capacity(batch.len() * prefs.len());
    for (t, y_row) in batch.iter().zip(targets) {
        let mut t_prefixes = Vec::with_capacity(t.agents());
        let mut t_caches = Vec::with_capacity(t.agents());
        for j in 0..t.agents() {
            let prefix = state_features(&t.observation(j, fov), &t.mean_actions[j]);
            let pc = prefix_partial(params, spec, &prefix)?;
            let per_pref = prefs
                .iter()
                .map(|p| forward_with_prefix(params, spec, &pc, &p.weights()))
                .collect::<Result<Vec<_>>>()?;
            t_prefixes.push(prefix);
            t_caches.push(per_pref);
        }
        for (k, p) in prefs.iter().enumerate() {
            let mut pred = [0.0, 0.0];
            for (j, agent_caches) in t_caches.iter().enumerate() {
                let a = t.actions[j].index();
                let out = agent_caches[k].output();
                pred[0] += out[a];
                pred[1] += out[5 + a];
            }
            errors.push([y_row[k][0] - pred[0], y_row[k][1] - pred[1]]);
            weights.push(p.weights());
        }
        prefixes.push(t_prefixes);
        caches.push(t_caches);
    }
    let (value, de) = homotopy_loss(&errors, &weights, zeta)?;
    let mut grad = vec![0.0; params.len()];
    let mut first_delta = vec![0.0; width];
    let mut upstream = [0.0; 10];
    for (n, t) in batch.iter().enumerate() {
        for j in 0..t.agents() {
            first_delta.iter_mut().for_each(|d| *d = 0.0);
            let a = t.actions[j].index();
            for k in 0..prefs.len() {
                let g = de[n * prefs.len() + k];
                if g == [0.0, 0.0] {
                    continue;
                }
                upstream.iter_mut().for_each(|u| *u = 0.0);
                // e = y - prediction, so d/dprediction = -d/de.
                upstream[a] = -g[0];
                upstream[5 + a] = -g[1];
                backward_prefix_into(params, spec, &caches[n][j][k], &upstream, &mut grad, &mut first_delta)?;
            }
            accumulate_prefix_grad(spec, &mut grad, &first_delta, &prefixes[n][j])?;
        }
    }
    Ok((value, grad))
}
