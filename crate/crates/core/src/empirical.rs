//! Calibration targets measured from a panel, and the worker resampler.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::MomentSet;
use crate::panel::Panel;
use crate::stats::{Compensated, Moments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmStats {
    pub firm_id: u64,
    pub size: u64,
    pub mean_lw: f64,
    /// Bessel-corrected within-firm variance.
    pub var_lw: f64,
    /// Central moments with divisor `n`.
    pub mu2_hat: f64,
    pub mu4_hat: f64,
    /// `μ̂4/n − μ̂2² (n − 3)/(n² − n)`.
    pub vov_adjustment: f64,
    /// Unbiased estimate of `Var(var_lw)`; equals `vov_adjustment` for `n < 4`.
    pub vov_adjustment_unbiased: f64,
}

impl FirmStats {
    pub fn from_wages(firm_id: u64, wages: &[f64]) -> Self {
        let m = Moments::from_slice(wages);
        let n = wages.len() as f64;
        let mu2 = m.central2();
        let mu4 = m.central4();
        let plug_in = mu4 / n - mu2 * mu2 * (n - 3.0) / (n * n - n);
        let unbiased = if wages.len() >= 4 {
            n / ((n - 2.0) * (n - 3.0)) * (mu4 - (n * n - 3.0) / ((n - 1.0) * (n - 1.0)) * mu2 * mu2)
        } else {
            plug_in
        };
        Self {
            firm_id,
            size: wages.len() as u64,
            mean_lw: m.mean,
            var_lw: m.sample_variance(),
            mu2_hat: mu2,
            mu4_hat: mu4,
            vov_adjustment: plug_in,
            vov_adjustment_unbiased: unbiased,
        }
    }

    pub fn adjustment(&self, correction: VovCorrection) -> f64 {
        match correction {
            VovCorrection::PlugIn => self.vov_adjustment,
            VovCorrection::Unbiased => self.vov_adjustment_unbiased,
            VovCorrection::None => 0.0,
        }
    }
}

/// Estimator of each firm's sampling variance of `var_lw` that is
/// subtracted when de-noising the variance of within-firm variances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VovCorrection {
    /// Sample central moments plugged into the normal-theory formula.
    PlugIn,
    #[default]
    Unbiased,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub min_firm_size: u64,
    pub correction: VovCorrection,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self {
            min_firm_size: 5,
            correction: VovCorrection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmStatistics {
    pub firms: Vec<FirmStats>,
    pub excluded_firms: usize,
    pub excluded_workers: u64,
}

/// Per-firm statistics for firms with at least `max(min_firm_size, 2)`
/// workers; smaller firms are counted and skipped.
pub fn firm_statistics(panel: &Panel, min_firm_size: u64) -> FirmStatistics {
    let floor = min_firm_size.max(2) as usize;
    let groups = panel.wage_groups();
    let firms: Vec<FirmStats> = groups
        .par_iter()
        .zip(panel.firms.par_iter())
        .filter(|(g, _)| g.len() >= floor)
        .map(|(g, f)| FirmStats::from_wages(f.firm_id, g))
        .collect();
    let excluded: Vec<usize> = groups.iter().filter(|g| g.len() < floor).map(Vec::len).collect();
    FirmStatistics {
        firms,
        excluded_firms: excluded.len(),
        excluded_workers: excluded.iter().sum::<usize>() as u64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredMoments {
    pub year_label: i64,
    pub wfwi_weighted: f64,
    pub var_of_within_var: f64,
    pub wfwi_unweighted: f64,
    pub var_log_wage: f64,
    pub mean_log_wage: f64,
    pub bfwi: f64,
    /// Equal to `wfwi_weighted`; kept under the name used by the decomposition.
    pub wfwi: f64,
    /// Size-weighted variance of `var_lw` before de-noising.
    pub var_of_within_var_raw: f64,
    /// Set when de-noising produced a negative value that was clamped to 0.
    pub vov_clamped: bool,
    /// Set when every retained wage is identical.
    pub degenerate: bool,
    pub n_workers: u64,
    pub n_firms: u64,
    pub excluded_firms: usize,
    pub excluded_workers: u64,
    pub correction: VovCorrection,
}

impl MeasuredMoments {
    pub fn moment_set(&self) -> MomentSet {
        MomentSet {
            wfwi_weighted: self.wfwi_weighted,
            var_of_within_var: self.var_of_within_var,
            wfwi_unweighted: self.wfwi_unweighted,
            var_log_wage: self.var_log_wage,
            mean_log_wage: self.mean_log_wage,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: [&'static str; 12] = [
        "year",
        "wfwi_weighted",
        "var_of_within_var",
        "wfwi_unweighted",
        "var_log_wage",
        "mean_log_wage",
        "bfwi",
        "var_of_within_var_raw",
        "vov_clamped",
        "n_workers",
        "n_firms",
        "excluded_firms",
    ];

    /// Writes rows keyed by year label.
    pub fn write_csv<W: Write>(rows: &[MeasuredMoments], out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
        wtr.write_record(Self::CSV_HEADER).map_err(io)?;
        for m in rows {
            wtr.write_record([
                m.year_label.to_string(),
                m.wfwi_weighted.to_string(),
                m.var_of_within_var.to_string(),
                m.wfwi_unweighted.to_string(),
                m.var_log_wage.to_string(),
                m.mean_log_wage.to_string(),
                m.bfwi.to_string(),
                m.var_of_within_var_raw.to_string(),
                m.vov_clamped.to_string(),
                m.n_workers.to_string(),
                m.n_firms.to_string(),
                m.excluded_firms.to_string(),
            ])
            .map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Measures the five targets from firm statistics. Worker-level weights
/// `n_j / N` are used for within-firm averages and for the dispersion of
/// within-firm variances.
pub fn moments_from_firms(stats: &[FirmStats], year_label: i64, correction: VovCorrection) -> Result<MeasuredMoments> {
    if stats.is_empty() {
        return Err(Error::EmptyPanel("no firm passes the size filter".into()));
    }
    let n_workers: u64 = stats.iter().map(|f| f.size).sum();
    let big_n = n_workers as f64;
    if n_workers < 2 {
        return Err(Error::EmptyPanel("fewer than two workers".into()));
    }
    // Pool firm moments in firm order.
    let mut mean_acc = Compensated::default();
    let mut wfwi = Compensated::default();
    let mut unweighted = Compensated::default();
    let mut v_sq = Compensated::default();
    let mut adj = Compensated::default();
    for f in stats {
        let w = f.size as f64 / big_n;
        mean_acc.add(w * f.mean_lw);
        wfwi.add(w * f.var_lw);
        unweighted.add(f.var_lw);
        adj.add(w * f.adjustment(correction));
    }
    let mean = mean_acc.value();
    let wfwi = wfwi.value();
    let mut between = Compensated::default();
    let mut within_ss = Compensated::default();
    for f in stats {
        let w = f.size as f64 / big_n;
        v_sq.add(w * (f.var_lw - wfwi) * (f.var_lw - wfwi));
        between.add(f.size as f64 * (f.mean_lw - mean) * (f.mean_lw - mean));
        within_ss.add(f.var_lw * (f.size as f64 - 1.0));
    }
    let var_log_wage = (within_ss.value() + between.value()) / (big_n - 1.0);
    let raw = v_sq.value();
    let denoised = raw - adj.value();
    let degenerate = var_log_wage == 0.0;
    let vov_clamped = denoised < 0.0;
    Ok(MeasuredMoments {
        year_label,
        wfwi_weighted: wfwi,
        var_of_within_var: if vov_clamped { 0.0 } else { denoised },
        wfwi_unweighted: unweighted.value() / stats.len() as f64,
        var_log_wage,
        mean_log_wage: mean,
        bfwi: var_log_wage - wfwi,
        wfwi,
        var_of_within_var_raw: raw,
        vov_clamped,
        degenerate,
        n_workers,
        n_firms: stats.len() as u64,
        excluded_firms: 0,
        excluded_workers: 0,
        correction,
    })
}

pub fn measure_moments(panel: &Panel, opts: &MeasureOptions) -> Result<MeasuredMoments> {
    if panel.workers.is_empty() {
        return Err(Error::EmptyPanel("panel has no workers".into()));
    }
    let fs = firm_statistics(panel, opts.min_firm_size);
    let mut m = moments_from_firms(&fs.firms, panel.year_label, opts.correction)?;
    m.excluded_firms = fs.excluded_firms;
    m.excluded_workers = fs.excluded_workers;
    Ok(m)
}

/// Draws `N` workers with replacement, keeps each drawn worker once, and
/// recomputes firm sizes. Firms left without workers are dropped; matching
/// of workers to firms is unchanged.
pub fn resample(panel: &Panel, seed: u64) -> Panel {
    let n = panel.workers.len();
    let mut keep = vec![false; n];
    if n > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..n {
            keep[rng.random_range(0..n)] = true;
        }
    }
    let workers: Vec<_> = panel
        .workers
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(w, _)| *w)
        .collect();
    let mut counts = std::collections::HashMap::with_capacity(panel.firms.len());
    for w in &workers {
        *counts.entry(w.firm_id).or_insert(0u64) += 1;
    }
    let firms = panel
        .firms
        .iter()
        .filter_map(|f| {
            counts.get(&f.firm_id).map(|&size| crate::panel::FirmRecord { size, ..*f })
        })
        .collect();
    Panel {
        year_label: panel.year_label,
        firms,
        workers,
        params_used: panel.params_used,
    }
}
