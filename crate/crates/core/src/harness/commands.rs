use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::experiment::{ExperimentSpec, Method};
use super::results::{aggregate, read_rows, ResultRow, Report};
use crate::approximator::Checkpoint;
use crate::error::{Error, Result};
use crate::formation::{pareto_filter, Preference};
use crate::grid::io::{load_scenario, map_to_string, Scenario};
use crate::grid::{distance_field, Instance};
use crate::learner::{execute_policy, execute_random, train, ExecOptions, Selection, TrainingConfig, TrainingOutcome};
use crate::planners::{default_horizon, jsa_pareto, spp_plan, validate_solution, Solution, ValidationReport};

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Checks that starts lie in the top-left and goals in the bottom-right
/// `corner` x `corner` box and that every goal is reachable.
pub fn check_instance(instance: &Instance, corner: usize) -> Result<()> {
    let (w, h, c) = (instance.map.width() as i64, instance.map.height() as i64, corner as i64);
    for (i, (s, g)) in instance.starts.iter().zip(&instance.goals).enumerate() {
        if s.x >= c || s.y >= c {
            return Err(Error::invalid(format!("start of agent {i} lies outside the start corner")));
        }
        if g.x < w - c || g.y < h - c {
            return Err(Error::invalid(format!("goal of agent {i} lies outside the goal corner")));
        }
        if distance_field(&instance.map, *g)?.get(*s).is_none() {
            return Err(Error::invalid(format!("goal of agent {i} is unreachable")));
        }
    }
    Ok(())
}

/// Writes one map file per distinct map and one scenario per instance.
pub fn cmd_generate(spec: &ExperimentSpec, out: &Path) -> Result<Vec<PathBuf>> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for k in 0..spec.repetitions {
        let inst = spec.instance_at(k)?;
        check_instance(&inst, spec.instance.corner)?;
        let map_name = format!("map-{:03}.map", k / spec.formations);
        let map_path = out.join(&map_name);
        if k % spec.formations == 0 {
            fs::write(&map_path, map_to_string(&inst.map))?;
            written.push(map_path);
        }
        let scen = Scenario::new(map_name, &inst, spec.schedule_for(&inst));
        let scen_path = out.join(format!("instance-{k:03}.json"));
        fs::write(&scen_path, scen.to_json())?;
        written.push(scen_path);
    }
    Ok(written)
}

/// A planner run and the solution it produced, if any.
#[derive(Debug, Clone)]
pub struct Planned {
    pub row: ResultRow,
    pub solution: Option<Solution>,
}

fn plan_failure(seed: u64, id: usize, method: Method, param: f64, wall_ms: f64) -> Planned {
    Planned {
        row: ResultRow::new(seed, id, method, param, false, None, wall_ms),
        solution: None,
    }
}

fn plan_success(instance: &Instance, seed: u64, id: usize, method: Method, param: f64, sol: Solution, wall_ms: f64) -> Planned {
    if !validate_solution(instance, &sol).valid {
        return plan_failure(seed, id, method, param, wall_ms);
    }
    Planned {
        row: ResultRow::new(seed, id, method, param, true, Some(sol.value), wall_ms),
        solution: Some(sol),
    }
}

/// Runs a centralized planner on one instance. Spp yields one row per
/// lambda; jsa yields one row per frontier point of the epsilon sweep, each
/// tagged with the smallest epsilon that found it. Planner failures become
/// unsuccessful rows.
pub fn plan_instance(
    instance: &Instance,
    seed: u64,
    id: usize,
    method: Method,
    params: &[f64],
    horizon: Option<usize>,
) -> Result<Vec<Planned>> {
    let horizon = horizon.unwrap_or_else(|| default_horizon(instance));
    match method {
        Method::Spp => {
            if params.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::invalid("spp lambdas must lie in [0, 1]"));
            }
            let order: Vec<usize> = (0..instance.agents()).collect();
            Ok(params
                .iter()
                .map(|&l| {
                    let start = Instant::now();
                    match spp_plan(instance, l, &order, horizon) {
                        Ok(sol) => plan_success(instance, seed, id, method, l, sol, elapsed_ms(start)),
                        Err(_) => plan_failure(seed, id, method, l, elapsed_ms(start)),
                    }
                })
                .collect())
        }
        Method::Jsa => {
            if params.is_empty() || params.iter().any(|e| !e.is_finite() || *e < 1.0) {
                return Err(Error::invalid("jsa epsilons must be finite and >= 1"));
            }
            let mut eps = params.to_vec();
            eps.sort_by(f64::total_cmp);
            eps.dedup();
            let mut found: Vec<(f64, Solution, f64)> = Vec::new();
            let mut failures = Vec::new();
            for &e in &eps {
                let start = Instant::now();
                match jsa_pareto(instance, &[e], horizon) {
                    Ok(mut sols) => {
                        let sol = sols.remove(0);
                        if !found.iter().any(|(_, s, _)| s.value == sol.value) {
                            found.push((e, sol, elapsed_ms(start)));
                        }
                    }
                    Err(_) => failures.push(plan_failure(seed, id, method, e, elapsed_ms(start))),
                }
            }
            if found.is_empty() {
                return Ok(failures);
            }
            let front = pareto_filter(&found.iter().map(|(_, s, _)| s.value).collect::<Vec<_>>());
            Ok(found
                .into_iter()
                .filter(|(_, s, _)| front.contains(&s.value))
                .map(|(e, s, ms)| plan_success(instance, seed, id, method, e, s, ms))
                .collect())
        }
        Method::Mfceq | Method::Random => Err(Error::invalid(format!("{method} is not a planner, use eval"))),
    }
}

/// Plans every instance of the experiment and optionally writes the
/// solutions to `out`.
pub fn cmd_plan(spec: &ExperimentSpec, out: Option<&Path>) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let params = match spec.method {
        Method::Spp => &spec.lambdas,
        Method::Jsa => &spec.epsilons,
        m => return Err(Error::invalid(format!("{m} is not a planner, use eval"))),
    };
    let per_instance: Vec<Vec<Planned>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|k| plan_instance(&spec.instance_at(k)?, spec.seed, k, spec.method, params, spec.horizon))
        .collect::<Result<_>>()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut rows = Vec::new();
    for planned in per_instance.into_iter().flatten() {
        if let (Some(dir), Some(sol)) = (out, &planned.solution) {
            let name = format!("solution-{:03}-{}-{}.json", planned.row.instance, spec.method, planned.row.param);
            fs::write(dir.join(name), sol.to_json())?;
        }
        rows.push(planned.row);
    }
    Ok(rows)
}

/// Trains and writes `checkpoint.json` and `log.csv` to `out`.
pub fn cmd_train(config: &TrainingConfig, out: &Path) -> Result<TrainingOutcome> {
    let outcome = train(config)?;
    fs::create_dir_all(out)?;
    outcome.checkpoint.save(&out.join("checkpoint.json"))?;
    crate::learner::write_log(&outcome.log, fs::File::create(out.join("log.csv"))?)?;
    Ok(outcome)
}

/// Greedy policy rollouts over instances x preferences. The random baseline
/// ignores the preference but is reported once per lambda for comparison.
pub fn cmd_eval(spec: &ExperimentSpec, checkpoint: Option<&Checkpoint>) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    if !(spec.method == Method::Mfceq || spec.method == Method::Random) {
        return Err(Error::invalid(format!("{} is a planner, use plan", spec.method)));
    }
    if spec.method == Method::Mfceq && checkpoint.is_none() {
        return Err(Error::invalid("mfceq evaluation needs a checkpoint"));
    }
    let options = ExecOptions {
        t_max: spec.t_max,
        time_limit: spec.time_limit_ms.map(Duration::from_millis),
    };
    let per_instance: Vec<Vec<ResultRow>> = (0..spec.repetitions)
        .into_par_iter()
        .map(|k| -> Result<Vec<ResultRow>> {
            let inst = spec.instance_at(k)?;
            let schedule = spec.schedule_for(&inst);
            let mut rows = Vec::with_capacity(spec.lambdas.len());
            for &l in &spec.lambdas {
                let start = Instant::now();
                let run = match checkpoint {
                    Some(ck) if spec.method == Method::Mfceq => {
                        execute_policy(ck, &inst, Preference::new(l)?, Selection::Greedy, &schedule, options)?
                    }
                    _ => execute_random(&inst, spec.instance_seeds(k).1 ^ spec.seed, &schedule, options)?,
                };
                rows.push(ResultRow::new(
                    spec.seed,
                    k,
                    spec.method,
                    l,
                    run.success,
                    Some(run.solution.value),
                    elapsed_ms(start),
                ));
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_instance.into_iter().flatten().collect())
}

/// Aggregates result files that share one schema version.
pub fn cmd_report(files: &[PathBuf]) -> Result<Report> {
    let mut rows = Vec::new();
    for f in files {
        rows.extend(read_rows(fs::File::open(f)?)?);
    }
    aggregate(&rows)
}

/// Outcome of the standalone checker.
#[derive(Debug, Clone, PartialEq)]
pub enum Validated {
    Instance,
    Solution(ValidationReport),
}

/// Checks a scenario (corner placement when `corner` is given, goal
/// reachability) and, when given, a solution against it.
pub fn cmd_validate(scenario: &Path, solution: Option<&Path>, corner: Option<usize>) -> Result<Validated> {
    let (_, inst) = load_scenario(scenario)?;
    let corner = corner.unwrap_or(inst.map.width().max(inst.map.height()));
    check_instance(&inst, corner)?;
    match solution {
        Some(p) => {
            let sol = Solution::from_json(&fs::read_to_string(p)?)?;
            Ok(Validated::Solution(validate_solution(&inst, &sol)))
        }
        None => Ok(Validated::Instance),
    }
}
