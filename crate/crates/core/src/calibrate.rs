//! Exact identification of the primitives from five wage moments, and the
//! resampling loop that turns one panel into percentile intervals.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::empirical::{measure_moments, resample, MeasureOptions};
use crate::error::{Error, Result};
use crate::model::{equilibrium_at, inverse_alpha, ModelParams};
use crate::moments::MomentSet;
use crate::panel::Panel;
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identified {
    pub params: ModelParams,
    pub sigma: f64,
}

fn infeasible(what: &str, m: &MomentSet) -> Error {
    Error::Infeasible(format!(
        "{what} (wfwi_weighted = {}, var_of_within_var = {}, wfwi_unweighted = {}, var_log_wage = {})",
        m.wfwi_weighted, m.var_of_within_var, m.wfwi_unweighted, m.var_log_wage
    ))
}

/// Recovers `(σx, σθ, c_a, c_l, ln A)` and `σ` from a moment set.
pub fn identify(m: &MomentSet) -> Result<Identified> {
    let values = [
        m.wfwi_weighted,
        m.var_of_within_var,
        m.wfwi_unweighted,
        m.var_log_wage,
        m.mean_log_wage,
    ];
    if values.iter().any(|v| !v.is_finite()) {
        return Err(infeasible("moments must be finite", m));
    }
    let w = m.wfwi_weighted;
    if !(w > 0.0) || m.var_of_within_var < 0.0 {
        return Err(infeasible("need wfwi_weighted > 0 and var_of_within_var >= 0", m));
    }
    let a = std::f64::consts::SQRT_2 * w;
    let b = m.var_of_within_var.sqrt();
    if !(a > b) {
        return Err(infeasible("need sqrt(2) * wfwi_weighted > sqrt(var_of_within_var)", m));
    }
    let sigma_sq = (a - 0.5 * b) / (a - b);
    if !(sigma_sq > 1.0) {
        return Err(infeasible("implied sigma^2 must exceed 1 (var_of_within_var is zero)", m));
    }
    let sigma = sigma_sq.sqrt();
    let sigma_x = (2.0 * w / (2.0 - 1.0 / sigma_sq)).sqrt();
    if !(sigma > sigma_x) {
        return Err(infeasible("implied sigma must exceed sigma_x", m));
    }
    let st_sq = 0.5 * ((m.wfwi_unweighted / w) * (2.0 * sigma_sq - 1.0) - 1.0);
    if !(st_sq > 0.0) || !(sigma_sq - 1.0 > st_sq) {
        return Err(infeasible("implied sigma_theta^2 must lie in (0, sigma^2 - 1)", m));
    }
    let sigma_theta = st_sq.sqrt();
    let rho_sq = 1.0 - 1.0 / sigma_sq;
    let bfwi = m.var_log_wage - w;
    if !(bfwi > 0.0) {
        return Err(infeasible("need var_log_wage > wfwi_weighted", m));
    }
    let one_plus_q = (2.0 * bfwi).sqrt() / (sigma_x * sigma * rho_sq);
    if !(one_plus_q > 1.0) {
        return Err(infeasible(
            "between-firm wage inequality must exceed between-firm welfare inequality (c_a > 0)",
            m,
        ));
    }
    let c_a = 1.0 / ((one_plus_q - 1.0) * (1.0 - sigma_x / sigma));
    let c_l = (1.0 + 1.0 / c_a) / inverse_alpha(sigma, sigma_x, sigma_theta)?;
    let mut params = ModelParams {
        sigma_x,
        sigma_theta,
        c_a,
        c_l,
        ln_a: 0.0,
    };
    params.validate()?;
    // B is 2 ln A plus terms free of A.
    let b_without_a = equilibrium_at(&params, sigma).b_const;
    let b_target = m.mean_log_wage
        - 0.5 * sigma_x * (sigma + (sigma_sq - 1.0) / (c_a * (sigma - sigma_x)));
    params.ln_a = 0.5 * (b_target - b_without_a);
    Ok(Identified { params, sigma })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub params: ModelParams,
    pub sigma: f64,
    pub moments: MomentSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub seed: u64,
    pub message: String,
}

/// Parameter-shaped bounds; not required to be a valid parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub sigma_x: f64,
    pub sigma_theta: f64,
    pub c_a: f64,
    pub c_l: f64,
    #[serde(rename = "ln_A")]
    pub ln_a: f64,
    pub sigma: f64,
}

impl Bounds {
    fn from_vec(v: [f64; 6]) -> Self {
        Self {
            sigma_x: v[0],
            sigma_theta: v[1],
            c_a: v[2],
            c_l: v[3],
            ln_a: v[4],
            sigma: v[5],
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.sigma_x, self.sigma_theta, self.c_a, self.c_l, self.ln_a, self.sigma]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    /// Replicate mean.
    pub params: ModelParams,
    pub sigma: f64,
    pub ci_low: Bounds,
    pub ci_high: Bounds,
    pub n_replicates: usize,
    pub n_failed: usize,
    pub per_replicate: Vec<Replicate>,
    pub failures: Vec<ReplicateFailure>,
}

fn replicate_values(r: &Replicate) -> [f64; 6] {
    let p = &r.params;
    [p.sigma_x, p.sigma_theta, p.c_a, p.c_l, p.ln_a, r.sigma]
}

/// Seeds for `n` replicates derived from a master seed.
pub fn replicate_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..n).map(|_| rng.random()).collect()
}

pub fn bootstrap_calibrate(panel: &Panel, n_replicates: usize, seed: u64, opts: &MeasureOptions) -> Result<CalibrationResult> {
    bootstrap_calibrate_with_seeds(panel, &replicate_seeds(seed, n_replicates), opts)
}

/// Runs resample, measure and identify once per seed.
pub fn bootstrap_calibrate_with_seeds(panel: &Panel, seeds: &[u64], opts: &MeasureOptions) -> Result<CalibrationResult> {
    if seeds.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "n_replicates",
            value: seeds.len() as f64,
            reason: "at least two replicates are required",
        });
    }
    if panel.workers.is_empty() {
        return Err(Error::EmptyPanel("panel has no workers".into()));
    }
    let outcomes: Vec<std::result::Result<Replicate, ReplicateFailure>> = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &seed)| {
            let run = || -> Result<Replicate> {
                let m = measure_moments(&resample(panel, seed), opts)?.moment_set();
                let id = identify(&m)?;
                Ok(Replicate {
                    index,
                    seed,
                    params: id.params,
                    sigma: id.sigma,
                    moments: m,
                })
            };
            run().map_err(|e| ReplicateFailure {
                index,
                seed,
                message: e.to_string(),
            })
        })
        .collect();
    let mut per_replicate = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => per_replicate.push(r),
            Err(f) => failures.push(f),
        }
    }
    summarize(per_replicate, failures, seeds.len())
}

/// Replicate mean and 2.5/97.5 percentiles over successful replicates.
pub fn summarize(per_replicate: Vec<Replicate>, failures: Vec<ReplicateFailure>, total: usize) -> Result<CalibrationResult> {
    if 2 * failures.len() > total || per_replicate.is_empty() {
        return Err(Error::TooManyFailures {
            failed: failures.len(),
            total,
            first: failures.first().map(|f| f.message.clone()).unwrap_or_default(),
        });
    }
    let k = per_replicate.len() as f64;
    let mut mean = [0.0; 6];
    let mut low = [0.0; 6];
    let mut high = [0.0; 6];
    for c in 0..6 {
        let mut col: Vec<f64> = per_replicate.iter().map(|r| replicate_values(r)[c]).collect();
        mean[c] = crate::stats::sum(&col) / k;
        col.sort_by(f64::total_cmp);
        low[c] = percentile_sorted(&col, 0.025);
        high[c] = percentile_sorted(&col, 0.975);
    }
    Ok(CalibrationResult {
        params: ModelParams {
            sigma_x: mean[0],
            sigma_theta: mean[1],
            c_a: mean[2],
            c_l: mean[3],
            ln_a: mean[4],
        },
        sigma: mean[5],
        ci_low: Bounds::from_vec(low),
        ci_high: Bounds::from_vec(high),
        n_replicates: total,
        n_failed: failures.len(),
        per_replicate,
        failures,
    })
}

impl CalibrationResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per successful replicate.
    pub fn write_replicates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        wtr.write_record(["replicate", "seed", "sigma_x", "sigma_theta", "c_a", "c_l", "ln_A", "sigma"])
            .map_err(io)?;
        for r in &self.per_replicate {
            let v = replicate_values(r);
            let mut row = vec![r.index.to_string(), r.seed.to_string()];
            row.extend(v.iter().map(f64::to_string));
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
