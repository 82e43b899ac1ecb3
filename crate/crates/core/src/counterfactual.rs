//! Ordering-average attribution of outcome changes to the four primitives.
//!
//! Parameters are switched from start to end values one at a time along
//! each of the 24 orderings; a primitive's attribution is the mean of its
//! step changes. Only 16 distinct parameter vectors occur (one per subset
//! of switched primitives), so each is solved once.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::Replicate;
use crate::error::{Error, Result};
use crate::model::{Economy, ModelParams};
use crate::moments::{wage_report, welfare_report, Param};
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeVector {
    pub var_w: f64,
    pub wfwi: f64,
    pub bfwi: f64,
    pub bfwi_share: f64,
    pub var_u: f64,
    pub bfui: f64,
    pub bfui_share: f64,
}

impl OutcomeVector {
    pub const NAMES: [&'static str; 7] = ["var_w", "wfwi", "bfwi", "bfwi_share", "var_u", "bfui", "bfui_share"];

    pub fn as_array(&self) -> [f64; 7] {
        [
            self.var_w,
            self.wfwi,
            self.bfwi,
            self.bfwi_share,
            self.var_u,
            self.bfui,
            self.bfui_share,
        ]
    }
}

pub fn outcome_vector(params: &ModelParams) -> Result<OutcomeVector> {
    let econ = Economy::solve(*params)?;
    let w = wage_report(&econ);
    let u = welfare_report(&econ);
    Ok(OutcomeVector {
        var_w: w.var_w,
        wfwi: w.wfwi,
        bfwi: w.bfwi,
        bfwi_share: w.bfwi_share,
        var_u: u.var_u,
        bfui: u.bfui,
        bfui_share: u.bfui_share,
    })
}

/// Attribution of one primitive across the seven outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub primitive: Param,
    pub change: [f64; 7],
    /// Percent of the total change; `None` where the total is below 1e-12.
    pub share: [Option<f64>; 7],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualTable {
    pub start: ModelParams,
    pub end: ModelParams,
    pub outcomes: Vec<String>,
    /// In the order `σθ, σx, c_a, c_l`.
    pub attributions: Vec<Attribution>,
    pub total: [f64; 7],
}

/// All 24 orderings of four items, lexicographic.
pub fn orderings() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    if p.iter().all(|&i| !std::mem::replace(&mut seen[i], true)) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

fn mixed(start: &ModelParams, end: &ModelParams, mask: usize) -> ModelParams {
    let mut p = *start;
    for (k, prim) in Param::PRIMITIVES.iter().enumerate() {
        if mask & (1 << k) != 0 {
            prim.set(&mut p, prim.get(end));
        }
    }
    p
}

pub fn decompose(start: &ModelParams, end: &ModelParams) -> Result<CounterfactualTable> {
    start.validate()?;
    end.validate()?;
    let cache: Vec<Result<[f64; 7]>> = (0..16usize)
        .into_par_iter()
        .map(|mask| outcome_vector(&mixed(start, end, mask)).map(|o| o.as_array()))
        .collect();
    let perms = orderings();
    let mut sums = [[0.0f64; 7]; 4];
    for perm in &perms {
        let mut mask = 0usize;
        for (step, &k) in perm.iter().enumerate() {
            let next = mask | (1 << k);
            let lookup = |m: usize| -> Result<[f64; 7]> {
                match &cache[m] {
                    Ok(v) => Ok(*v),
                    Err(e) => Err(Error::Counterfactual {
                        permutation: *perm,
                        step,
                        source: Box::new(Error::Domain(e.to_string())),
                    }),
                }
            };
            let before = lookup(mask)?;
            let after = lookup(next)?;
            for o in 0..7 {
                sums[k][o] += after[o] - before[o];
            }
            mask = next;
        }
    }
    let first = cache[0].as_ref().map_err(|e| Error::Domain(e.to_string()))?;
    let last = cache[15].as_ref().map_err(|e| Error::Domain(e.to_string()))?;
    let mut total = [0.0; 7];
    for o in 0..7 {
        total[o] = last[o] - first[o];
    }
    let n = perms.len() as f64;
    let attributions = Param::PRIMITIVES
        .iter()
        .enumerate()
        .map(|(k, &primitive)| {
            let mut change = [0.0; 7];
            let mut share = [None; 7];
            for o in 0..7 {
                change[o] = sums[k][o] / n;
                share[o] = (total[o].abs() >= 1e-12).then(|| 100.0 * change[o] / total[o]);
            }
            Attribution {
                primitive,
                change,
                share,
            }
        })
        .collect();
    Ok(CounterfactualTable {
        start: *start,
        end: *end,
        outcomes: OutcomeVector::NAMES.iter().map(|s| s.to_string()).collect(),
        attributions,
        total,
    })
}

impl CounterfactualTable {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Outcome rows; for each primitive a change column and a share column,
    /// then the total. Undefined shares are written as `undefined`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        let mut header = vec!["outcome".to_string()];
        for a in &self.attributions {
            header.push(format!("{}_change", a.primitive.name()));
            header.push(format!("{}_share_pct", a.primitive.name()));
        }
        header.push("total".into());
        wtr.write_record(&header).map_err(io)?;
        for (o, name) in self.outcomes.iter().enumerate() {
            let mut row = vec![name.to_string()];
            for a in &self.attributions {
                row.push(a.change[o].to_string());
                row.push(a.share[o].map_or_else(|| "undefined".to_string(), |s| s.to_string()));
            }
            row.push(self.total[o].to_string());
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Replicate mean and 2.5/97.5 percentiles of one table cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl CellSummary {
    fn from_values(mut v: Vec<f64>) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let mean = crate::stats::sum(&v) / v.len() as f64;
        v.sort_by(f64::total_cmp);
        Some(Self {
            mean,
            low: percentile_sorted(&v, 0.025),
            high: percentile_sorted(&v, 0.975),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionInterval {
    pub primitive: Param,
    pub change: Vec<CellSummary>,
    /// `None` where fewer than half of the replicate pairs have a defined share.
    pub share: Vec<Option<CellSummary>>,
}

/// Attribution table with percentile intervals over paired replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualIntervals {
    pub point: CounterfactualTable,
    pub outcomes: Vec<String>,
    pub attributions: Vec<AttributionInterval>,
    pub total: Vec<CellSummary>,
    pub n_pairs: usize,
    pub n_failed: usize,
}

/// Decomposes the change between two calibrations replicate by replicate.
/// Replicates are paired by index, so both sides should come from the same
/// replicate seeds; indices present on only one side are skipped.
pub fn bootstrap_decompose(
    point_start: &ModelParams,
    point_end: &ModelParams,
    start: &[Replicate],
    end: &[Replicate],
) -> Result<CounterfactualIntervals> {
    let point = decompose(point_start, point_end)?;
    let by_index: std::collections::HashMap<usize, &Replicate> = end.iter().map(|r| (r.index, r)).collect();
    let pairs: Vec<(&Replicate, &Replicate)> = start
        .iter()
        .filter_map(|a| by_index.get(&a.index).map(|b| (a, *b)))
        .collect();
    let tables: Vec<Result<CounterfactualTable>> = pairs
        .par_iter()
        .map(|(a, b)| decompose(&a.params, &b.params))
        .collect();
    let ok: Vec<&CounterfactualTable> = tables.iter().filter_map(|t| t.as_ref().ok()).collect();
    let n_failed = tables.len() - ok.len();
    if ok.is_empty() || 2 * n_failed > tables.len() {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: tables.len(),
            first: tables
                .iter()
                .find_map(|t| t.as_ref().err().map(|e| e.to_string()))
                .unwrap_or_else(|| "no paired replicates".into()),
        });
    }
    let cell = |f: &dyn Fn(&CounterfactualTable) -> f64| {
        CellSummary::from_values(ok.iter().map(|t| f(t)).collect()).expect("non-empty")
    };
    let attributions = (0..4)
        .map(|k| AttributionInterval {
            primitive: Param::PRIMITIVES[k],
            change: (0..7).map(|o| cell(&|t| t.attributions[k].change[o])).collect(),
            share: (0..7)
                .map(|o| {
                    let v: Vec<f64> = ok.iter().filter_map(|t| t.attributions[k].share[o]).collect();
                    if 2 * v.len() < ok.len() {
                        None
                    } else {
                        CellSummary::from_values(v)
                    }
                })
                .collect(),
        })
        .collect();
    Ok(CounterfactualIntervals {
        outcomes: point.outcomes.clone(),
        point,
        attributions,
        total: (0..7).map(|o| cell(&|t| t.total[o])).collect(),
        n_pairs: ok.len(),
        n_failed,
    })
}

impl CounterfactualIntervals {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Outcome rows with point, mean, low and high columns per cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        let mut header = vec!["outcome".to_string()];
        for a in &self.attributions {
            for kind in ["change", "share_pct"] {
                for stat in ["point", "mean", "low", "high"] {
                    header.push(format!("{}_{kind}_{stat}", a.primitive.name()));
                }
            }
        }
        header.extend(["total_point", "total_mean", "total_low", "total_high"].map(String::from));
        wtr.write_record(&header).map_err(io)?;
        let undefined = || vec!["undefined".to_string(); 3];
        let stats = |c: &CellSummary| vec![c.mean.to_string(), c.low.to_string(), c.high.to_string()];
        for (o, name) in self.outcomes.iter().enumerate() {
            let mut row = vec![name.clone()];
            for (k, a) in self.attributions.iter().enumerate() {
                let p = &self.point.attributions[k];
                row.push(p.change[o].to_string());
                row.extend(stats(&a.change[o]));
                row.push(p.share[o].map_or_else(|| "undefined".to_string(), |s| s.to_string()));
                row.extend(a.share[o].as_ref().map_or_else(undefined, stats));
            }
            row.push(self.point.total[o].to_string());
            row.extend(stats(&self.total[o]));
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
