use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::experiment::Method;
use crate::error::{Error, Result};
use crate::formation::{mix_values, BiObjectiveValue};

pub const RESULTS_SCHEMA: &str = "maif-results/1";

/// Preferences of the MIX columns.
pub const MIX_LAMBDAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// One run of one method on one instance. The MIX columns are derived from
/// `makespan` and `form_dev_avg` on construction and checked on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema: String,
    pub seed: u64,
    pub instance: usize,
    pub method: Method,
    /// Lambda for spp, mfceq and random, epsilon for jsa.
    pub param: f64,
    pub success: bool,
    pub makespan: Option<u64>,
    pub form_dev_avg: Option<f64>,
    #[serde(rename = "mix@0.1")]
    pub mix_01: Option<f64>,
    #[serde(rename = "mix@0.3")]
    pub mix_03: Option<f64>,
    #[serde(rename = "mix@0.5")]
    pub mix_05: Option<f64>,
    #[serde(rename = "mix@0.7")]
    pub mix_07: Option<f64>,
    #[serde(rename = "mix@0.9")]
    pub mix_09: Option<f64>,
    pub wall_ms: f64,
}

impl ResultRow {
    pub fn new(
        seed: u64,
        instance: usize,
        method: Method,
        param: f64,
        success: bool,
        value: Option<BiObjectiveValue>,
        wall_ms: f64,
    ) -> Self {
        let mut row = Self {
            schema: RESULTS_SCHEMA.to_string(),
            seed,
            instance,
            method,
            param,
            success,
            makespan: value.map(|v| v.makespan),
            form_dev_avg: value.map(|v| v.form_dev_avg()),
            mix_01: None,
            mix_03: None,
            mix_05: None,
            mix_07: None,
            mix_09: None,
            wall_ms,
        };
        let mixes = row.recomputed_mix();
        row.set_mix(mixes);
        row
    }

    pub fn mix(&self) -> [Option<f64>; 5] {
        [self.mix_01, self.mix_03, self.mix_05, self.mix_07, self.mix_09]
    }

    fn set_mix(&mut self, m: [Option<f64>; 5]) {
        [self.mix_01, self.mix_03, self.mix_05, self.mix_07, self.mix_09] = m;
    }

    pub fn recomputed_mix(&self) -> [Option<f64>; 5] {
        let pair = self.makespan.zip(self.form_dev_avg);
        MIX_LAMBDAS.map(|l| pair.map(|(t, f)| mix_values(t as f64, f, l)))
    }

    pub fn check(&self) -> Result<()> {
        if self.schema != RESULTS_SCHEMA {
            return Err(Error::invalid(format!(
                "result schema '{}' does not match '{RESULTS_SCHEMA}'",
                self.schema
            )));
        }
        for (got, want) in self.mix().iter().zip(self.recomputed_mix()) {
            let ok = match (got, want) {
                (None, None) => true,
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
                _ => false,
            };
            if !ok {
                return Err(Error::invalid(format!(
                    "MIX columns of instance {} disagree with makespan and deviation",
                    self.instance
                )));
            }
        }
        Ok(())
    }
}

const ROW_HEADER: [&str; 14] = [
    "schema",
    "seed",
    "instance",
    "method",
    "param",
    "success",
    "makespan",
    "form_dev_avg",
    "mix@0.1",
    "mix@0.3",
    "mix@0.5",
    "mix@0.7",
    "mix@0.9",
    "wall_ms",
];

pub fn write_rows<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(ROW_HEADER)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads result rows, rejecting other schema versions and inconsistent MIX columns.
pub fn read_rows<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in r.deserialize() {
        let row: ResultRow = row?;
        row.check()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Means of one (method, parameter) group. Objective means cover the
/// successful runs only and are empty when there are none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub param: f64,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub makespan: Option<f64>,
    pub form_dev_avg: Option<f64>,
    #[serde(rename = "mix@0.1")]
    pub mix_01: Option<f64>,
    #[serde(rename = "mix@0.3")]
    pub mix_03: Option<f64>,
    #[serde(rename = "mix@0.5")]
    pub mix_05: Option<f64>,
    #[serde(rename = "mix@0.7")]
    pub mix_07: Option<f64>,
    #[serde(rename = "mix@0.9")]
    pub mix_09: Option<f64>,
}

/// A successful run as a point of the makespan/deviation trade-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub method: Method,
    pub param: f64,
    pub seed: u64,
    pub instance: usize,
    pub makespan: u64,
    pub form_dev_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub summary: Vec<SummaryRow>,
    pub points: Vec<ParetoPoint>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups rows by (method, parameter), ordered by method then parameter.
pub fn aggregate(rows: &[ResultRow]) -> Result<Report> {
    for r in rows {
        r.check()?;
    }
    let mut keys: Vec<(Method, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|&(m, p)| m == r.method && p.to_bits() == r.param.to_bits()) {
            keys.push((r.method, r.param));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut summary = Vec::with_capacity(keys.len());
    for (method, param) in keys {
        let group: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.method == method && r.param.to_bits() == param.to_bits())
            .collect();
        let ok: Vec<&ResultRow> = group.iter().copied().filter(|r| r.success).collect();
        let mixes: Vec<Option<f64>> = (0..5).map(|k| mean(ok.iter().filter_map(|r| r.mix()[k]))).collect();
        summary.push(SummaryRow {
            method,
            param,
            runs: group.len(),
            successes: ok.len(),
            success_rate: ok.len() as f64 / group.len() as f64,
            makespan: mean(ok.iter().filter_map(|r| r.makespan.map(|t| t as f64))),
            form_dev_avg: mean(ok.iter().filter_map(|r| r.form_dev_avg)),
            mix_01: mixes[0],
            mix_03: mixes[1],
            mix_05: mixes[2],
            mix_07: mixes[3],
            mix_09: mixes[4],
        });
    }
    let mut points: Vec<ParetoPoint> = rows
        .iter()
        .filter(|r| r.success)
        .filter_map(|r| {
            Some(ParetoPoint {
                method: r.method,
                param: r.param,
                seed: r.seed,
                instance: r.instance,
                makespan: r.makespan?,
                form_dev_avg: r.form_dev_avg?,
            })
        })
        .collect();
    points.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.param.total_cmp(&b.param))
            .then(a.seed.cmp(&b.seed))
            .then(a.instance.cmp(&b.instance))
    });
    Ok(Report { summary, points })
}

pub fn write_csv<T: Serialize, W: Write>(items: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}
