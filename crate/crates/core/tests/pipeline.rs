//! Simulation, panel I/O, measurement and bootstrap behaviour.

mod common;

use std::io::Cursor;

use common::*;
use sorteq::calibrate::{bootstrap_calibrate, identify};
use sorteq::empirical::{firm_statistics, measure_moments, resample, MeasureOptions, VovCorrection};
use sorteq::error::Error;
use sorteq::panel::Panel;
use sorteq::sim::{draw_sizeweighted_theta, simulate_panel, SimConfig};
use sorteq::{Economy, ModelParams};
use statrs::distribution::{ContinuousCDF, Normal};

fn mild() -> ModelParams {
    ModelParams::new(0.5, 0.6, 2.0, 2.0, 0.2).unwrap()
}

fn panel(params: ModelParams, workers: u64, firms: u64, seed: u64) -> Panel {
    let econ = Economy::solve(params).unwrap();
    simulate_panel(
        &econ,
        &SimConfig {
            n_workers: workers,
            n_firms: firms,
            min_firm_size: 5,
            seed,
            year_label: 2010,
        },
    )
    .unwrap()
}

#[test]
fn size_weighted_draws_follow_the_weighted_normal() {
    let econ = Economy::solve(worked()).unwrap();
    let mut r = rng(11);
    let mut xs: Vec<f64> = (0..20_000).map(|_| draw_sizeweighted_theta(&econ, &mut r)).collect();
    xs.sort_by(f64::total_cmp);
    let dist = Normal::new(0.0, econ.weighted_theta_variance().sqrt()).unwrap();
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = dist.cdf(x);
            (c - i as f64 / n).abs().max((c - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value of the Kolmogorov statistic.
    assert!(d < 1.63 / n.sqrt(), "KS distance {d}");
}

#[test]
fn simulated_panel_respects_its_layout() {
    let econ = Economy::solve(mild()).unwrap();
    let p = panel(mild(), 50_000, 2_000, 3);
    p.validate().unwrap();
    assert_eq!(p.workers.len(), 50_000);
    assert_eq!(p.firms.len(), 2_000);
    assert!(p.firms.iter().all(|f| f.size >= 5));
    let ratio = econ.sigma_ratio();
    let thetas: std::collections::HashMap<u64, f64> =
        p.firms.iter().map(|f| (f.firm_id, f.theta.unwrap())).collect();
    for w in &p.workers {
        let l = w.latent.unwrap();
        assert_eq!(l.x, l.h / ratio);
        assert_eq!(l.theta, thetas[&w.firm_id]);
        assert_eq!(w.log_wage, econ.log_wage(l.x, l.theta));
    }
}

#[test]
fn sizes_follow_equilibrium_firm_size() {
    let econ = Economy::solve(mild()).unwrap();
    let p = panel(mild(), 400_000, 2_000, 4);
    let unpinned: Vec<_> = p.firms.iter().filter(|f| f.size > 5).collect();
    // Ratios of unpinned sizes track ratios of L*(θ) up to rounding.
    let a = unpinned[0];
    for b in unpinned.iter().skip(1).take(200) {
        let expected = econ.firm_size(b.theta.unwrap()).unwrap() / econ.firm_size(a.theta.unwrap()).unwrap();
        let got = b.size as f64 / a.size as f64;
        let slack = 1.0 / b.size as f64 + 1.0 / a.size as f64;
        assert!((got / expected - 1.0).abs() <= slack * 1.01, "{got} vs {expected}");
    }
}

#[test]
fn pooled_job_variance_matches_sigma() {
    let econ = Economy::solve(mild()).unwrap();
    let p = panel(mild(), 1_000_000, 20_000, 5);
    let hs: Vec<f64> = p.workers.iter().map(|w| w.latent.unwrap().h).collect();
    let n = hs.len() as f64;
    let mean = hs.iter().sum::<f64>() / n;
    let m2 = hs.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / n;
    let m4 = hs.iter().map(|h| (h - mean).powi(4)).sum::<f64>() / n;
    // Firms, not workers, are the independent units; inflate by the mean size.
    let se = ((m4 - m2 * m2) / n * (n / p.firms.len() as f64)).sqrt();
    let target = econ.eq.sigma * econ.eq.sigma;
    assert!((m2 - target).abs() < 4.0 * se, "{m2} vs {target} (se {se})");
}

#[test]
fn simulation_is_reproducible() {
    let a = panel(mild(), 20_000, 500, 9);
    let b = panel(mild(), 20_000, 500, 9);
    let c = panel(mild(), 20_000, 500, 10);
    assert_eq!(a.workers, b.workers);
    assert_ne!(a.workers, c.workers);
}

#[test]
fn csv_round_trip_through_files() {
    let p = panel(mild(), 5_000, 200, 12);
    let dir = tempfile::tempdir().unwrap();
    let wp = dir.path().join("workers.csv");
    let fp = dir.path().join("firms.csv");
    p.write_workers_csv(std::fs::File::create(&wp).unwrap()).unwrap();
    p.write_firms_csv(std::fs::File::create(&fp).unwrap()).unwrap();
    let back = Panel::read_csv(
        2010,
        std::fs::File::open(&wp).unwrap(),
        Some(std::fs::File::open(&fp).unwrap()),
    )
    .unwrap();
    assert_eq!(back.workers, p.workers);
    assert_eq!(back.firms, p.firms);
    let m1 = measure_moments(&p, &MeasureOptions::default()).unwrap();
    let m2 = measure_moments(&back, &MeasureOptions::default()).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn malformed_csv_is_rejected_with_the_row() {
    let empty = Panel::read_csv(0, Cursor::new(""), None::<Cursor<&str>>);
    assert!(matches!(empty, Err(Error::EmptyPanel(_))));
    let header_only = Panel::read_csv(0, Cursor::new("worker_id,firm_id,log_wage\n"), None::<Cursor<&str>>);
    assert!(matches!(header_only, Err(Error::EmptyPanel(_))));
    let bad = "worker_id,firm_id,log_wage\n1,1,0.5\n2,1,oops\n";
    match Panel::read_csv(0, Cursor::new(bad), None::<Cursor<&str>>) {
        Err(Error::Schema { row, .. }) => assert_eq!(row, 3),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn measured_moments_are_internally_consistent() {
    let p = panel(mild(), 100_000, 3_000, 13);
    let m = measure_moments(&p, &MeasureOptions::default()).unwrap();
    assert!(rel_err(m.bfwi + m.wfwi_weighted, m.var_log_wage) < 1e-12);
    // Worker-level recomputation from raw wages.
    let groups = p.wage_groups();
    let n: f64 = groups.iter().map(|g| g.len() as f64).sum();
    let mut wfwi = 0.0;
    let mut all = Vec::new();
    for g in &groups {
        let k = g.len() as f64;
        let mean = g.iter().sum::<f64>() / k;
        wfwi += g.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (k - 1.0) * k / n;
        all.extend_from_slice(g);
    }
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(rel_err(m.wfwi_weighted, wfwi) < 1e-10);
    assert!(rel_err(m.var_log_wage, var) < 1e-10);
    assert!(rel_err(m.mean_log_wage, mean) < 1e-12);
    // De-noising removes sampling noise, so the raw value sits above it.
    assert!(m.var_of_within_var_raw > m.var_of_within_var);
    let none = measure_moments(
        &p,
        &MeasureOptions {
            correction: VovCorrection::None,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(none.var_of_within_var, m.var_of_within_var_raw);
}

#[test]
fn size_filter_excludes_small_firms() {
    let p = panel(mild(), 20_000, 1_000, 14);
    let opts = MeasureOptions {
        min_firm_size: 30,
        ..Default::default()
    };
    let m = measure_moments(&p, &opts).unwrap();
    let small: Vec<_> = p.firms.iter().filter(|f| f.size < 30).collect();
    assert_eq!(m.excluded_firms, small.len());
    assert_eq!(m.excluded_workers, small.iter().map(|f| f.size).sum::<u64>());
    assert_eq!(m.n_workers + m.excluded_workers, 20_000);
    assert_eq!(firm_statistics(&p, 30).firms.len() as u64, m.n_firms);
}

#[test]
fn resampling_keeps_a_valid_subpanel() {
    let p = panel(mild(), 20_000, 500, 15);
    let r = resample(&p, 99);
    r.validate().unwrap();
    assert_eq!(r, resample(&p, 99));
    let ids: std::collections::HashSet<u64> = p.workers.iter().map(|w| w.worker_id).collect();
    assert!(r.workers.iter().all(|w| ids.contains(&w.worker_id)));
    assert!(r.workers.windows(2).all(|w| w[0].worker_id < w[1].worker_id));
}

#[test]
fn large_panel_recovers_the_primitives() {
    let p = panel(mild(), 2_000_000, 20_000, 16);
    let m = measure_moments(&p, &MeasureOptions::default()).unwrap();
    let id = identify(&m.moment_set()).unwrap();
    let truth = mild();
    assert!((id.params.sigma_x - truth.sigma_x).abs() < 0.03, "{:?}", id.params);
    assert!((id.params.sigma_theta - truth.sigma_theta).abs() < 0.1, "{:?}", id.params);
}

#[test]
fn bootstrap_is_deterministic_and_brackets_its_mean() {
    let p = panel(mild(), 40_000, 1_000, 17);
    let opts = MeasureOptions::default();
    let a = bootstrap_calibrate(&p, 40, 5, &opts).unwrap();
    let b = bootstrap_calibrate(&p, 40, 5, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_replicates, 40);
    assert_eq!(a.per_replicate.len() + a.n_failed, 40);
    let (lo, hi) = (a.ci_low.as_array(), a.ci_high.as_array());
    for k in 0..6 {
        assert!(lo[k] <= hi[k]);
    }
    assert!(lo[0] <= a.params.sigma_x && a.params.sigma_x <= hi[0]);
    let mut buf = Vec::new();
    a.write_replicates_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), a.per_replicate.len() + 1);
}

#[test]
fn intervals_narrow_with_more_workers() {
    let opts = MeasureOptions::default();
    let small = bootstrap_calibrate(&panel(mild(), 20_000, 500, 18), 60, 1, &opts).unwrap();
    let large = bootstrap_calibrate(&panel(mild(), 320_000, 8_000, 18), 60, 1, &opts).unwrap();
    let width = |r: &sorteq::calibrate::CalibrationResult| r.ci_high.sigma_x - r.ci_low.sigma_x;
    assert!(width(&large) < 0.5 * width(&small), "{} vs {}", width(&large), width(&small));
}

#[test]
fn degenerate_panel_fails_calibration() {
    let econ = Economy::solve(worked()).unwrap();
    let mut p = simulate_panel(
        &econ,
        &SimConfig {
            n_workers: 2_000,
            n_firms: 100,
            min_firm_size: 5,
            seed: 1,
            year_label: 0,
        },
    )
    .unwrap();
    for w in &mut p.workers {
        w.log_wage = 1.0;
    }
    assert!(matches!(
        bootstrap_calibrate(&p, 10, 1, &MeasureOptions::default()),
        Err(Error::TooManyFailures { .. })
    ));
}
