#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sorteq::empirical::FirmStats;
use sorteq::panel::Panel;
use sorteq::{Economy, ModelParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw from the standard parameter box.
pub fn grid_params<R: Rng>(rng: &mut R) -> ModelParams {
    ModelParams::new(
        rng.random_range(0.05..=1.5),
        rng.random_range(0.05..=2.0),
        rng.random_range(0.5..=50.0),
        rng.random_range(0.05..=5.0),
        rng.random_range(-2.0..=2.0),
    )
    .unwrap()
}

pub fn worked() -> ModelParams {
    ModelParams::new(0.5, 0.5, 4.0, 0.1953125, 0.0).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Names of the statistics produced by [`oracle_statistics`].
pub const ORACLE_NAMES: [&str; 15] = [
    "sigma",
    "rho_sq",
    "var_u",
    "bfui",
    "wfui",
    "var_w",
    "bfwi",
    "wfwi",
    "vov",
    "wfwi_unweighted",
    "var_wfe",
    "var_ffe",
    "two_cov",
    "var_avg_wfe",
    "corr_wfe_ffe",
];

pub fn analytic_targets(econ: &Economy) -> [f64; 15] {
    let u = sorteq::moments::welfare_report(econ);
    let w = sorteq::moments::wage_report(econ);
    let m = sorteq::moments::targeted_moments(econ);
    let a = sorteq::moments::akm_report(econ);
    [
        econ.eq.sigma,
        econ.eq.rho_sq,
        u.var_u,
        u.bfui,
        u.wfui,
        w.var_w,
        w.bfwi,
        w.wfwi,
        m.var_of_within_var,
        m.wfwi_unweighted,
        a.var_wfe,
        a.var_ffe,
        a.two_cov,
        a.var_avg_wfe,
        a.corr_wfe_ffe,
    ]
}

const NSUM: usize = 21;

/// Firm-additive sufficient statistics, so any group of firms can be
/// removed by subtraction.
fn firm_sums(econ: &Economy, wages: &[f64], latent: &[(f64, f64, f64)]) -> [f64; NSUM] {
    let ratio = econ.sigma_ratio();
    let theta = latent[0].2;
    let f = theta * theta / (2.0 * econ.params.c_a * (ratio - 1.0));
    let n = wages.len() as f64;
    let fs = FirmStats::from_wages(0, wages);
    let us: Vec<f64> = latent.iter().map(|l| 0.5 * ratio * l.0 * l.0).collect();
    let u_stats = FirmStats::from_wages(0, &us);
    let mut s = [0.0; NSUM];
    s[0] = n;
    for (k, &(x, h, _)) in latent.iter().enumerate() {
        let u = us[k];
        s[1] += h;
        s[2] += h * h;
        s[3] += u;
        s[4] += u * u;
        s[5] += u * f;
        s[6] += x * x;
        s[7] += x.powi(4);
        s[8] += x * x * theta * theta;
        s[9] += wages[k];
        s[10] += wages[k] * wages[k];
    }
    s[11] = n * f;
    s[12] = n * f * f;
    s[13] = n * theta * theta;
    s[14] = n * theta.powi(4);
    s[15] = n * u_stats.var_lw;
    s[16] = n * fs.var_lw;
    s[17] = n * fs.var_lw * fs.var_lw;
    s[18] = n * fs.vov_adjustment_unbiased;
    s[19] = fs.var_lw;
    s[20] = 1.0;
    s
}

fn var_from(sum: f64, sum_sq: f64, n: f64) -> f64 {
    (sum_sq - sum * sum / n) / (n - 1.0)
}

fn stats_from_sums(s: &[f64; NSUM]) -> [f64; 15] {
    let n = s[0];
    let var_h = var_from(s[1], s[2], n);
    let var_u = var_from(s[3], s[4], n);
    let wfui = s[15] / n;
    let var_w = var_from(s[9], s[10], n);
    let wfwi = s[16] / n;
    let vov = s[17] / n - wfwi * wfwi - s[18] / n;
    let var_f = var_from(s[11], s[12], n);
    let cov_uf = (s[5] - s[3] * s[11] / n) / (n - 1.0);
    let cov_x2t2 = s[8] / n - (s[6] / n) * (s[13] / n);
    let var_x2 = s[7] / n - (s[6] / n).powi(2);
    let var_t2 = s[14] / n - (s[13] / n).powi(2);
    let rho = cov_x2t2 / (var_x2 * var_t2).sqrt();
    [
        var_h.sqrt(),
        rho,
        var_u,
        var_u - wfui,
        wfui,
        var_w,
        var_w - wfwi,
        wfwi,
        vov,
        s[19] / s[20],
        var_u,
        var_f,
        2.0 * cov_uf,
        var_u - wfui,
        rho,
    ]
}

pub struct OracleEstimate {
    pub values: [f64; 15],
    pub se: [f64; 15],
}

/// Oracle estimates of the analytic moments from a simulated panel with
/// latent columns, with delete-a-group jackknife standard errors over
/// `groups` groups of firms.
pub fn oracle_statistics(econ: &Economy, panel: &Panel, min_firm_size: u64, groups: usize) -> OracleEstimate {
    let wages = panel.wage_groups();
    let latent = panel.grouped(|w| {
        let l = w.latent.expect("latent columns");
        (l.x, l.h, l.theta)
    });
    let mut group_sums = vec![[0.0; NSUM]; groups];
    for (j, (wg, lg)) in wages.iter().zip(&latent).enumerate() {
        if (wg.len() as u64) < min_firm_size.max(2) {
            continue;
        }
        let s = firm_sums(econ, wg, lg);
        for k in 0..NSUM {
            group_sums[j % groups][k] += s[k];
        }
    }
    let mut total = [0.0; NSUM];
    for g in &group_sums {
        for k in 0..NSUM {
            total[k] += g[k];
        }
    }
    let values = stats_from_sums(&total);
    let loo: Vec<[f64; 15]> = group_sums
        .iter()
        .map(|g| {
            let mut t = total;
            for k in 0..NSUM {
                t[k] -= g[k];
            }
            stats_from_sums(&t)
        })
        .collect();
    let gf = groups as f64;
    let mut se = [0.0; 15];
    for i in 0..15 {
        let mean = loo.iter().map(|v| v[i]).sum::<f64>() / gf;
        let ss = loo.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>();
        se[i] = ((gf - 1.0) / gf * ss).sqrt();
    }
    OracleEstimate { values, se }
}

/// Central difference with absolute step `h` and a noise estimate from
/// step halving.
pub fn derivative<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> (f64, f64) {
    let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
    let d2 = (f(x + 0.5 * h) - f(x - 0.5 * h)) / h;
    (d2, (d1 - d2).abs())
}
