#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use maif_core::grid::{Cell, GridMap, Instance};
use rand::seq::SliceRandom;
use rand::Rng;

pub const MOVES: [(i64, i64); 5] = [(0, -1), (0, 1), (-1, 0), (1, 0), (0, 0)];

/// Exhaustive minimum of `sum_i |u_i - (v_i + delta)|_1` over every integer
/// `delta` in the bounding box of the coordinate differences.
pub fn brute_deviation(current: &[[i64; 2]], desired: &[[i64; 2]]) -> u64 {
    let diffs: Vec<[i64; 2]> = current.iter().zip(desired).map(|(u, v)| [u[0] - v[0], u[1] - v[1]]).collect();
    let lo = |k: usize| diffs.iter().map(|d| d[k]).min().unwrap();
    let hi = |k: usize| diffs.iter().map(|d| d[k]).max().unwrap();
    let mut best = u64::MAX;
    for dx in lo(0)..=hi(0) {
        for dy in lo(1)..=hi(1) {
            let cost: u64 = diffs.iter().map(|d| (d[0] - dx).unsigned_abs() + (d[1] - dy).unsigned_abs()).sum();
            best = best.min(cost);
        }
    }
    best
}

pub fn bfs(map: &GridMap, from: Cell) -> HashMap<Cell, u64> {
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(from, 0);
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        let d = dist[&c];
        for (dx, dy) in &MOVES[..4] {
            let n = Cell::new(c.x + dx, c.y + dy);
            if map.is_free(n) && !dist.contains_key(&n) {
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Random map with distinct free starts and distinct free goals, every goal
/// reachable from its start.
pub fn random_instance<R: Rng>(rng: &mut R, w: usize, h: usize, agents: usize, density: f64) -> Instance {
    loop {
        let obstacles: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(density)).collect();
        let Ok(map) = GridMap::new(w, h, obstacles, 0) else { continue };
        let free: Vec<Cell> = map.cells().filter(|&c| map.is_free(c)).collect();
        if free.len() < agents {
            continue;
        }
        let starts: Vec<Cell> = free.choose_multiple(rng, agents).copied().collect();
        let goals: Vec<Cell> = free.choose_multiple(rng, agents).copied().collect();
        if starts.iter().zip(&goals).any(|(&s, g)| !bfs(&map, s).contains_key(g)) {
            continue;
        }
        if let Ok(inst) = Instance::new(Arc::new(map), starts, goals) {
            return inst;
        }
    }
}

fn formation_cost(joint: &[Cell], goals: &[Cell]) -> u64 {
    let cur: Vec<[i64; 2]> = joint.iter().map(|c| [c.x, c.y]).collect();
    let des: Vec<[i64; 2]> = goals.iter().map(|c| [c.x, c.y]).collect();
    brute_deviation(&cur, &des)
}

fn joint_moves(map: &GridMap, joint: &[Cell]) -> Vec<Vec<Cell>> {
    let m = joint.len();
    let mut out = Vec::new();
    let total = 5usize.pow(m as u32);
    'combo: for code in 0..total {
        let mut next = Vec::with_capacity(m);
        let mut c = code;
        for &p in joint {
            let (dx, dy) = MOVES[c % 5];
            c /= 5;
            let n = Cell::new(p.x + dx, p.y + dy);
            if !map.is_free(n) {
                continue 'combo;
            }
            next.push(n);
        }
        for i in 0..m {
            for j in i + 1..m {
                if next[i] == next[j] || (next[i] == joint[j] && next[j] == joint[i]) {
                    continue 'combo;
                }
            }
        }
        out.push(next);
    }
    out
}

/// Pareto frontier over (makespan, summed deviation) of all collision-free
/// joint paths that end on the goals by `horizon`. Layer `t` keeps, for each
/// joint state, the least deviation accumulated over steps `0..=t`.
pub fn brute_frontier(inst: &Instance, horizon: usize) -> Vec<(u64, u64)> {
    let map = &inst.map;
    let goals = &inst.goals;
    let mut layer: HashMap<Vec<Cell>, u64> = HashMap::new();
    layer.insert(inst.starts.clone(), formation_cost(&inst.starts, goals));
    let mut best_at: Vec<(u64, u64)> = Vec::new();
    for t in 0..=horizon {
        if let Some(&d) = layer.get(goals) {
            best_at.push((t as u64, d));
        }
        if t == horizon {
            break;
        }
        let mut next: HashMap<Vec<Cell>, u64> = HashMap::new();
        let mut cost_cache: HashMap<Vec<Cell>, u64> = HashMap::new();
        for (joint, &acc) in &layer {
            for n in joint_moves(map, joint) {
                let c = *cost_cache.entry(n.clone()).or_insert_with(|| formation_cost(&n, goals));
                let e = next.entry(n).or_insert(u64::MAX);
                *e = (*e).min(acc + c);
            }
        }
        layer = next;
    }
    let mut front: Vec<(u64, u64)> = Vec::new();
    for &(t, d) in &best_at {
        if front.iter().all(|&(_, fd)| d < fd) {
            front.push((t, d));
        }
    }
    front
}

/// Least `lambda * T + (1 - lambda) * sum_{t=1..T} F_t` over single-agent
/// paths for `agent`, where `F_t` is its share of the deviation against the
/// already fixed `others` (held at their last cell) and the path must avoid
/// them and be able to stay on its goal afterwards.
pub fn brute_second_agent_cost(
    inst: &Instance,
    agent: usize,
    others: &[(Vec<Cell>, Cell)],
    lambda: f64,
    horizon: usize,
) -> Option<f64> {
    let at = |p: &Vec<Cell>, t: usize| p[t.min(p.len() - 1)];
    let goal = inst.goals[agent];
    let share = |c: Cell, t: usize| -> f64 {
        if others.is_empty() {
            return 0.0;
        }
        let mut xs: Vec<i64> = others.iter().map(|(p, g)| at(p, t).x - g.x).collect();
        let mut ys: Vec<i64> = others.iter().map(|(p, g)| at(p, t).y - g.y).collect();
        xs.push(c.x - goal.x);
        ys.push(c.y - goal.y);
        xs.sort();
        ys.sort();
        let mid = (xs.len() - 1) / 2;
        ((c.x - goal.x - xs[mid]).abs() + (c.y - goal.y - ys[mid]).abs()) as f64
    };
    let blocked = |c: Cell, t: usize| others.iter().any(|(p, _)| at(p, t) == c);
    let swapped = |from: Cell, to: Cell, t: usize| others.iter().any(|(p, _)| at(p, t - 1) == to && at(p, t) == from);
    let parks = |t: usize| others.iter().all(|(p, _)| (t..=p.len().max(t)).all(|u| at(p, u) != goal));
    let start = inst.starts[agent];
    if blocked(start, 0) {
        return None;
    }
    let mut layer: HashMap<Cell, f64> = HashMap::from([(start, 0.0)]);
    let mut best: Option<f64> = None;
    for t in 0..=horizon {
        if let Some(&g) = layer.get(&goal) {
            if parks(t) {
                best = Some(best.map_or(g, |b: f64| b.min(g)));
            }
        }
        if t == horizon {
            break;
        }
        let mut next: HashMap<Cell, f64> = HashMap::new();
        for (&c, &g) in &layer {
            for (dx, dy) in MOVES {
                let n = Cell::new(c.x + dx, c.y + dy);
                if !inst.map.is_free(n) || blocked(n, t + 1) || swapped(c, n, t + 1) {
                    continue;
                }
                let cost = g + lambda + (1.0 - lambda) * share(n, t + 1);
                let e = next.entry(n).or_insert(f64::INFINITY);
                if cost < *e {
                    *e = cost;
                }
            }
        }
        layer = next;
    }
    best
}

/// Central finite-difference gradient of `f` at `x`.
pub fn finite_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], step: f64, mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        return (a - b).abs();
    }
    (a - b).abs() / scale
}

/// Gradient audit of one random network: analytic gradient of `c . Q(x)`
/// against central differences. Returns the worst relative error.
pub fn gradient_audit(seed: u64) -> f64 {
    use maif_core::approximator::{backward, forward, InputLayout, NeighborScope, NetworkSpec};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let extra = rng.gen_range(1..12);
    let layout = InputLayout {
        fov: 1,
        channels: 1,
        relative_features: extra,
        mean_action: 0,
        preference: 2,
        neighbors: NeighborScope::All,
    };
    let depth = rng.gen_range(0..3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(2..9)).collect();
    let spec = NetworkSpec::mlp(layout, &hidden).unwrap();
    let mut params = spec.init_params(&mut rng);
    for p in params.iter_mut() {
        *p += rng.gen_range(-0.2..0.2);
    }
    let input: Vec<f64> = (0..spec.input_size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let upstream: Vec<f64> = (0..spec.output_size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let objective = |p: &[f64]| -> f64 {
        let out = forward(p, &spec, &input).unwrap();
        out.output().iter().zip(&upstream).map(|(a, b)| a * b).sum()
    };
    let cache = forward(&params, &spec, &input).unwrap();
    let analytic = backward(&params, &spec, &cache, &upstream).unwrap();
    let numeric = finite_difference(&params, 1e-6, objective);
    analytic.iter().zip(&numeric).map(|(&a, &n)| relative_error(a, n)).fold(0.0, f64::max)
}

/// Deterministic 5-state chain with actions left/right. Objective 0 pays for
/// reaching the right end, objective 1 for staying near the left end.
pub struct ChainMdp;

impl ChainMdp {
    pub const STATES: usize = 5;
    pub const ACTIONS: usize = 2;

    pub fn step(s: usize, a: usize) -> (usize, [f64; 2]) {
        let next = if a == 1 { (s + 1).min(4) } else { s.saturating_sub(1) };
        let r0 = if next == 4 { 1.0 } else { -0.1 };
        let r1 = if next == 0 { 0.6 } else { -0.05 * next as f64 };
        (next, [r0, r1])
    }
}

/// Q tables indexed `[preference][state]`, two live actions in a 5-column matrix.
pub type ChainTable = Vec<Vec<maif_core::learner::QMatrix>>;

/// Padding value for the three unused action columns.
pub const MASKED: f64 = -1e9;

pub fn chain_zero_table(prefs: usize) -> ChainTable {
    let mut values = [MASKED; 10];
    for a in 0..ChainMdp::ACTIONS {
        values[a] = 0.0;
        values[5 + a] = 0.0;
    }
    let q = maif_core::learner::QMatrix::from_output(&values).unwrap();
    vec![vec![q; ChainMdp::STATES]; prefs]
}

/// One application of the envelope operator to every (preference, state,
/// action), using the library backup for the maximization.
pub fn chain_envelope_sweep(table: &ChainTable, prefs: &[[f64; 2]], gamma: f64) -> ChainTable {
    use maif_core::learner::{envelope_target, QMatrix};
    let mut out = table.clone();
    for (k, w) in prefs.iter().enumerate() {
        for s in 0..ChainMdp::STATES {
            let mut values = [MASKED; 10];
            for a in 0..ChainMdp::ACTIONS {
                let (next, r) = ChainMdp::step(s, a);
                let rows: Vec<Vec<QMatrix>> = table.iter().map(|per_state| vec![per_state[next]]).collect();
                let y = envelope_target(r, false, &rows, &rows, *w, gamma, true).unwrap();
                values[a] = y[0];
                values[5 + a] = y[1];
            }
            out[k][s] = QMatrix::from_output(&values).unwrap();
        }
    }
    out
}

/// Sup-norm distance between the scalarized live entries of two tables.
pub fn chain_residual(a: &ChainTable, b: &ChainTable, prefs: &[[f64; 2]]) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, w) in prefs.iter().enumerate() {
        for s in 0..ChainMdp::STATES {
            let (x, y) = (a[k][s].scalarized(*w), b[k][s].scalarized(*w));
            for act in 0..ChainMdp::ACTIONS {
                worst = worst.max((x[act] - y[act]).abs());
            }
        }
    }
    worst
}

/// Plain scalar value iteration on reward `w . r`, run to a fixed point.
pub fn chain_scalar_vi(w: [f64; 2], gamma: f64) -> Vec<[f64; 2]> {
    let mut q = vec![[0.0f64; 2]; ChainMdp::STATES];
    for _ in 0..2000 {
        let mut next = q.clone();
        for (s, row) in next.iter_mut().enumerate() {
            for (a, v) in row.iter_mut().enumerate() {
                let (n, r) = ChainMdp::step(s, a);
                *v = w[0] * r[0] + w[1] * r[1] + gamma * q[n][0].max(q[n][1]);
            }
        }
        q = next;
    }
    q
}

/// Random map whose goals repeat the start formation shifted by a random
/// offset, so makespan and deviation can conflict.
pub fn random_formation_instance<R: Rng>(rng: &mut R, w: usize, h: usize, agents: usize, density: f64) -> Instance {
    loop {
        let base = random_instance(rng, w, h, agents, density);
        let (dx, dy) = (rng.gen_range(-(w as i64)..w as i64), rng.gen_range(-(h as i64)..h as i64));
        let goals: Vec<Cell> = base.starts.iter().map(|c| Cell::new(c.x + dx, c.y + dy)).collect();
        if (dx, dy) == (0, 0) || goals.iter().any(|&g| !base.map.is_free(g)) {
            continue;
        }
        if base.starts.iter().zip(&goals).any(|(&s, g)| !bfs(&base.map, s).contains_key(g)) {
            continue;
        }
        if let Ok(inst) = Instance::new(base.map.clone(), base.starts.clone(), goals) {
            return inst;
        }
    }
}
