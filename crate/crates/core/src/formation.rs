//! Formation algebra: L1 formation deviation under the best global
//! translation, its relative-position form, scalarized objectives and Pareto
//! dominance.
//!
//! All deviation arithmetic is exact integer arithmetic. Only `mix` and the
//! per-agent time average produce floating point values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point with integer coordinates in `dim()` dimensions.
pub trait Point {
    fn dim(&self) -> usize;
    fn coord(&self, axis: usize) -> i64;
}

impl Point for Vec<i64> {
    fn dim(&self) -> usize {
        self.len()
    }
    fn coord(&self, axis: usize) -> i64 {
        self[axis]
    }
}

impl Point for [i64] {
    fn dim(&self) -> usize {
        self.len()
    }
    fn coord(&self, axis: usize) -> i64 {
        self[axis]
    }
}

impl<const N: usize> Point for [i64; N] {
    fn dim(&self) -> usize {
        N
    }
    fn coord(&self, axis: usize) -> i64 {
        self[axis]
    }
}

impl<P: Point + ?Sized> Point for &P {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn coord(&self, axis: usize) -> i64 {
        (**self).coord(axis)
    }
}

/// An ordered tuple of agent coordinates in `d` dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Formation {
    points: Vec<Vec<i64>>,
}

impl Formation {
    pub fn new(points: Vec<Vec<i64>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("formation must contain at least one agent"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::invalid("formation coordinates need at least one dimension"));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("formation points have mixed dimensions"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec<i64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Every point shifted by `offset`.
    pub fn translated(&self, offset: &[i64]) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| p.iter().zip(offset).map(|(a, b)| a + b).collect())
            .collect();
        Self { points }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviationResult {
    pub total: u64,
    pub per_agent: Vec<u64>,
    /// Per-dimension median of coordinate differences.
    pub delta: Vec<i64>,
}

fn check_shapes<P: Point, Q: Point>(current: &[P], desired: &[Q]) -> Result<usize> {
    if current.is_empty() {
        return Err(Error::invalid("formations must be non-empty"));
    }
    if current.len() != desired.len() {
        return Err(Error::invalid(format!(
            "formation sizes differ: {} vs {}",
            current.len(),
            desired.len()
        )));
    }
    let dim = current[0].dim();
    if dim == 0 {
        return Err(Error::invalid("coordinates need at least one dimension"));
    }
    if current.iter().any(|p| p.dim() != dim) || desired.iter().any(|p| p.dim() != dim) {
        return Err(Error::invalid("formation coordinate dimensions differ"));
    }
    Ok(dim)
}

/// Lower median. Reorders `values`.
fn lower_median(values: &mut [i64]) -> i64 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable(mid).1
}

/// Sum of `|residual - median(residuals)|` per agent, given residuals laid
/// out agent-major (`residuals[i * dim + j]`).
fn deviation_from_residuals(residuals: &[i64], agents: usize, dim: usize) -> DeviationResult {
    let mut column = vec![0i64; agents];
    let mut delta = vec![0i64; dim];
    for (j, d) in delta.iter_mut().enumerate() {
        for (i, c) in column.iter_mut().enumerate() {
            *c = residuals[i * dim + j];
        }
        *d = lower_median(&mut column);
    }
    let per_agent: Vec<u64> = (0..agents)
        .map(|i| {
            (0..dim)
                .map(|j| (residuals[i * dim + j] - delta[j]).unsigned_abs())
                .sum()
        })
        .collect();
    DeviationResult {
        total: per_agent.iter().sum(),
        per_agent,
        delta,
    }
}

/// Least total L1 effort to move `current` onto some translate of `desired`.
pub fn deviation<P: Point, Q: Point>(current: &[P], desired: &[Q]) -> Result<DeviationResult> {
    let dim = check_shapes(current, desired)?;
    let agents = current.len();
    let mut residuals = Vec::with_capacity(agents * dim);
    for (u, v) in current.iter().zip(desired) {
        for j in 0..dim {
            residuals.push(u.coord(j) - v.coord(j));
        }
    }
    Ok(deviation_from_residuals(&residuals, agents, dim))
}

/// Formation deviation seen by agent `anchor`, which only knows the relative
/// positions `p^{anchor,m} = p^m - p^anchor` of the others, both live and in
/// the desired formation.
pub fn deviation_relative<P: Point, Q: Point>(
    rel_current: &[P],
    rel_desired: &[Q],
    anchor: usize,
) -> Result<DeviationResult> {
    let dim = check_shapes(rel_current, rel_desired)?;
    if anchor >= rel_current.len() {
        return Err(Error::invalid(format!("anchor {anchor} out of range")));
    }
    let self_zero = |p: &dyn Fn(usize) -> i64| (0..dim).all(|j| p(j) == 0);
    if !self_zero(&|j| rel_current[anchor].coord(j)) || !self_zero(&|j| rel_desired[anchor].coord(j)) {
        return Err(Error::invalid("self-relative entry must be the zero vector"));
    }
    // Same residual computation: the constant shift p^i - g^i cancels inside
    // the median.
    deviation(rel_current, rel_desired)
}

/// Linear preference `omega = (lambda, 1 - lambda)` over (makespan, deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    lambda: f64,
}

impl Preference {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lambda) {
            return Err(Error::invalid(format!("preference lambda {lambda} outside [0, 1)")));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weights(&self) -> [f64; 2] {
        [self.lambda, 1.0 - self.lambda]
    }
}

/// Objective pair of a solution. The deviation average is kept as an exact
/// ratio `deviation_sum / agents`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BiObjectiveValue {
    pub makespan: u64,
    /// Sum over time steps of the total formation deviation.
    pub deviation_sum: u64,
    pub agents: u64,
}

impl BiObjectiveValue {
    pub fn new(makespan: u64, deviation_sum: u64, agents: u64) -> Self {
        assert!(agents > 0, "objective value needs at least one agent");
        Self {
            makespan,
            deviation_sum,
            agents,
        }
    }

    pub fn form_dev_avg(&self) -> f64 {
        self.deviation_sum as f64 / self.agents as f64
    }

    /// Exact comparison of the deviation averages.
    fn cmp_deviation(&self, other: &Self) -> Ordering {
        (self.deviation_sum as u128 * other.agents as u128)
            .cmp(&(other.deviation_sum as u128 * self.agents as u128))
    }

    fn same_value(&self, other: &Self) -> bool {
        self.makespan == other.makespan && self.cmp_deviation(other) == Ordering::Equal
    }
}

/// `lambda * makespan + (1 - lambda) * form_dev_avg`.
pub fn mix_values(makespan: f64, form_dev_avg: f64, lambda: f64) -> f64 {
    lambda * makespan + (1.0 - lambda) * form_dev_avg
}

pub fn mix(value: &BiObjectiveValue, pref: Preference) -> f64 {
    mix_values(value.makespan as f64, value.form_dev_avg(), pref.lambda())
}

/// Weak dominance: `a` is no worse than `b` in both objectives.
pub fn dominates(a: &BiObjectiveValue, b: &BiObjectiveValue) -> bool {
    a.makespan <= b.makespan && a.cmp_deviation(b) != Ordering::Greater
}

fn strictly_dominates(a: &BiObjectiveValue, b: &BiObjectiveValue) -> bool {
    dominates(a, b) && !a.same_value(b)
}

/// Non-dominated, deduplicated values sorted by makespan.
pub fn pareto_filter(values: &[BiObjectiveValue]) -> Vec<BiObjectiveValue> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.makespan.cmp(&b.makespan).then_with(|| a.cmp_deviation(b)));
    let mut front: Vec<BiObjectiveValue> = Vec::new();
    for v in sorted {
        // Sorted by (makespan, deviation): v can only be dominated by an
        // earlier point, and the last kept point has the lowest deviation.
        match front.last() {
            Some(last) if last.same_value(&v) || strictly_dominates(last, &v) => {}
            _ => front.push(v),
        }
    }
    front
}

/// Scores a set of per-agent paths against a fixed desired formation. Agents
/// hold their final position once their path ends.
pub fn evaluate_solution<P: Point, Q: Point>(paths: &[Vec<P>], desired: &[Q]) -> Result<BiObjectiveValue> {
    evaluate_with_schedule::<P, Q, Q>(paths, desired, &[])
}

/// As [`evaluate_solution`], with the desired formation replaced by
/// `schedule[k].1` from time step `schedule[k].0` on. The schedule must be
/// sorted by time.
pub fn evaluate_with_schedule<P: Point, Q: Point, R: Point>(
    paths: &[Vec<P>],
    desired: &[Q],
    schedule: &[(u64, Vec<R>)],
) -> Result<BiObjectiveValue> {
    if paths.is_empty() {
        return Err(Error::invalid("solution has no paths"));
    }
    if paths.iter().any(|p| p.is_empty()) {
        return Err(Error::invalid("every path needs at least its start position"));
    }
    if paths.len() != desired.len() {
        return Err(Error::invalid("path count differs from formation size"));
    }
    if schedule.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(Error::invalid("formation schedule must be sorted by time"));
    }
    let makespan = paths.iter().map(|p| p.len() - 1).max().unwrap_or(0);
    let mut sum = 0u64;
    let mut snapshot: Vec<&P> = Vec::with_capacity(paths.len());
    for t in 0..=makespan {
        snapshot.clear();
        snapshot.extend(paths.iter().map(|p| &p[t.min(p.len() - 1)]));
        let active = schedule.iter().rev().find(|(at, _)| *at <= t as u64);
        let dev = match active {
            Some((_, goals)) => deviation(&snapshot, goals)?,
            None => deviation(&snapshot, desired)?,
        };
        sum += dev.total;
    }
    Ok(BiObjectiveValue::new(makespan as u64, sum, paths.len() as u64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(i64, i64)]) -> Vec<[i64; 2]> {
        v.iter().map(|&(x, y)| [x, y]).collect()
    }

    fn val(makespan: u64, dev: u64) -> BiObjectiveValue {
        BiObjectiveValue::new(makespan, dev, 1)
    }

    #[test]
    fn identical_and_translated_formations_have_zero_deviation() {
        let f = pts(&[(0, 0), (4, 1), (2, 7)]);
        let d = deviation(&f, &f).unwrap();
        assert_eq!(d.total, 0);
        assert_eq!(d.per_agent, vec![0, 0, 0]);

        let shifted: Vec<[i64; 2]> = f.iter().map(|p| [p[0] + 3, p[1] + 5]).collect();
        let d = deviation(&shifted, &f).unwrap();
        assert_eq!(d.total, 0);
        assert_eq!(d.delta, vec![3, 5]);
    }

    #[test]
    fn line_versus_chevron() {
        // Brute force over delta in the difference bounding box gives
        // minimum 1 at delta = (0, -2).
        let cur = pts(&[(0, 0), (1, 0), (2, 0)]);
        let des = pts(&[(0, 2), (1, 1), (2, 2)]);
        let d = deviation(&cur, &des).unwrap();
        assert_eq!(d.delta, vec![0, -2]);
        assert_eq!(d.per_agent, vec![0, 1, 0]);
        assert_eq!(d.total, 1);
    }

    #[test]
    fn even_count_uses_lower_median() {
        let cur = pts(&[(0, 0), (5, 0)]);
        let des = pts(&[(0, 0), (0, 0)]);
        let d = deviation(&cur, &des).unwrap();
        assert_eq!(d.delta, vec![0, 0]);
        assert_eq!(d.total, 5);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let a = pts(&[(0, 0), (1, 1)]);
        let b = pts(&[(0, 0)]);
        assert!(deviation(&a, &b).is_err());
        let c: Vec<Vec<i64>> = vec![vec![0, 0], vec![1]];
        let d: Vec<Vec<i64>> = vec![vec![0, 0], vec![1, 1]];
        assert!(deviation(&c, &d).is_err());
        assert!(Formation::new(c).is_err());
    }

    #[test]
    fn relative_form_matches_absolute() {
        let cur = pts(&[(0, 0), (1, 0), (2, 0)]);
        let des = pts(&[(0, 2), (1, 1), (2, 2)]);
        let anchor = 0;
        let rel = |f: &[[i64; 2]]| -> Vec<[i64; 2]> {
            f.iter()
                .map(|p| [p[0] - f[anchor][0], p[1] - f[anchor][1]])
                .collect()
        };
        let d = deviation_relative(&rel(&cur), &rel(&des), anchor).unwrap();
        assert_eq!(d.total, 1);
        assert_eq!(d.per_agent, vec![0, 1, 0]);
    }

    #[test]
    fn relative_single_agent_and_bad_anchor() {
        let zero = pts(&[(0, 0)]);
        assert_eq!(deviation_relative(&zero, &zero, 0).unwrap().total, 0);
        let bad = pts(&[(1, 0), (0, 0)]);
        let ok = pts(&[(0, 0), (3, 3)]);
        assert!(deviation_relative(&bad, &ok, 0).is_err());
        assert!(deviation_relative(&ok, &ok, 2).is_err());
    }

    #[test]
    fn mix_matches_reported_rows() {
        assert!((mix_values(106.33, 14.67, 0.1) - 23.84).abs() <= 0.01);
        assert!((mix_values(98.64, 16.84, 0.5) - 57.74).abs() <= 0.01);
        let v = BiObjectiveValue::new(17, 9, 4);
        assert_eq!(mix(&v, Preference::new(0.0).unwrap()), 9.0 / 4.0);
    }

    #[test]
    fn preference_range() {
        assert!(Preference::new(1.0).is_err());
        assert!(Preference::new(-0.1).is_err());
        assert_eq!(Preference::new(0.25).unwrap().weights(), [0.25, 0.75]);
    }

    #[test]
    fn dominance_cases() {
        assert!(dominates(&val(3, 5), &val(4, 5)));
        assert!(dominates(&val(3, 5), &val(3, 5)));
        assert!(!dominates(&val(3, 6), &val(4, 5)));
        assert!(!dominates(&val(4, 5), &val(3, 6)));
        // 3/2 vs 5/3 compared exactly.
        assert!(dominates(
            &BiObjectiveValue::new(2, 3, 2),
            &BiObjectiveValue::new(2, 5, 3)
        ));
    }

    #[test]
    fn pareto_filter_cases() {
        assert!(pareto_filter(&[]).is_empty());
        assert_eq!(pareto_filter(&[val(3, 5)]), vec![val(3, 5)]);
        assert_eq!(pareto_filter(&[val(4, 5), val(3, 5)]), vec![val(3, 5)]);
        assert_eq!(
            pareto_filter(&[val(5, 7), val(3, 6), val(4, 5)]),
            vec![val(3, 6), val(4, 5)]
        );
        assert_eq!(pareto_filter(&[val(3, 6), val(3, 6)]), vec![val(3, 6)]);
    }

    #[test]
    fn evaluate_trivial_cases() {
        let goals = pts(&[(2, 2), (3, 3)]);
        let paths: Vec<Vec<[i64; 2]>> = goals.iter().map(|g| vec![*g]).collect();
        let v = evaluate_solution(&paths, &goals).unwrap();
        assert_eq!((v.makespan, v.deviation_sum), (0, 0));

        let single = vec![pts(&[(0, 0), (1, 0), (2, 0), (2, 1), (2, 2)])];
        let v = evaluate_solution(&single, &pts(&[(2, 2)])).unwrap();
        assert_eq!(v.makespan, 4);
        assert_eq!(v.form_dev_avg(), 0.0);
    }

    #[test]
    fn evaluate_holds_early_arrivals() {
        // Agent 0 waits at its goal while agent 1 walks three cells.
        let goals = pts(&[(0, 0), (1, 0)]);
        let paths = vec![pts(&[(0, 0)]), pts(&[(4, 0), (3, 0), (2, 0), (1, 0)])];
        let v = evaluate_solution(&paths, &goals).unwrap();
        // Differences in x: {0, 3}, {0, 2}, {0, 1}, {0, 0}; lower median 0.
        assert_eq!(v.makespan, 3);
        assert_eq!(v.deviation_sum, 3 + 2 + 1);
        assert_eq!(v.form_dev_avg(), 3.0);
    }

    #[test]
    fn evaluate_rejects_bad_paths() {
        let goals = pts(&[(0, 0)]);
        let empty: Vec<Vec<[i64; 2]>> = vec![vec![]];
        assert!(evaluate_solution(&empty, &goals).is_err());
        let mixed: Vec<Vec<Vec<i64>>> = vec![vec![vec![0, 0], vec![1]]];
        assert!(evaluate_solution(&mixed, &[vec![0i64, 0]]).is_err());
    }
}
