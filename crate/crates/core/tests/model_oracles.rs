//! Quadrature oracles for the equilibrium objects and closed-form moments.

mod common;

use common::*;
use sorteq::moments::{conditional_moments, mean_log_wage, targeted_moments, wage_report, welfare_report};
use sorteq::{Economy, ModelParams};

fn draws(seed: u64, n: usize) -> Vec<Economy> {
    let mut r = rng(seed);
    (0..n).map(|_| Economy::solve(grid_params(&mut r)).unwrap()).collect()
}

#[test]
fn employment_integrates_to_one() {
    for econ in draws(1, 100) {
        let total = econ.total_employment().unwrap();
        assert!((total - 1.0).abs() < 1e-9, "{total} at {:?}", econ.params);
    }
}

#[test]
fn size_weighted_productivity_variance() {
    for econ in draws(2, 100) {
        let v = econ.integrate_over_firms(|t| t * t).unwrap();
        assert!(rel_err(v, econ.weighted_theta_variance()) < 1e-8, "{:?}", econ.params);
    }
}

#[test]
fn mixture_formula_matches_closed_form() {
    for econ in draws(3, 200) {
        for i in 0..21 {
            let h = -5.0 + 0.5 * i as f64;
            let a = econ.job_density_mixture_formula(h);
            let b = econ.job_density_closed_form(h);
            assert!((a - b).abs() < 1e-12 * b.max(1.0), "h={h} {a} {b}");
        }
    }
}

#[test]
fn job_density_has_unit_mass() {
    let econ = Economy::solve(worked()).unwrap();
    // Composite Simpson over ±12σ.
    let s = econ.eq.sigma;
    let n = 400;
    let (a, b) = (-12.0 * s, 12.0 * s);
    let step = (b - a) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * econ.job_density(a + step * i as f64).unwrap();
    }
    assert!((acc * step / 3.0 - 1.0).abs() < 1e-9);
}

#[test]
fn size_and_amenity_maximise_the_firm_objective() {
    for econ in draws(4, 50) {
        for &theta in &[0.0, 0.3, -0.7] {
            let l = econ.firm_size(theta).unwrap();
            let a = econ.log_amenity(theta).exp();
            let f = |size: f64, amen: f64| econ.profit_objective(theta, size, amen);
            let base = f(l, a);
            let (dl, _) = derivative(|v| f(v, a), l, 1e-4 * l);
            // The amenity cost has curvature growing with c_a.
            let (da, _) = derivative(|v| f(l, v), a, 1e-3 * a / (1.0 + econ.params.c_a));
            let scale = base.abs().max(1e-300);
            assert!((dl * l).abs() < 1e-6 * scale, "size FOC {dl} at {:?}", econ.params);
            assert!((da * a).abs() < 1e-6 * scale, "amenity FOC {da} at {:?}", econ.params);
            for bump in [0.9, 1.1] {
                assert!(f(l * bump, a) < base && f(l, a * bump) < base);
            }
        }
    }
}

#[test]
fn profit_is_even_and_grows_with_productivity() {
    let econ = Economy::solve(worked()).unwrap();
    let mut last = 0.0;
    for i in 0..20 {
        let t = 0.1 * i as f64;
        let p = econ.firm_profit(t).unwrap();
        assert!((p - econ.firm_profit(-t).unwrap()).abs() <= 1e-15 * p);
        assert!(p > last);
        last = p;
    }
}

#[test]
fn amenities_vanish_when_they_are_costly() {
    let econ = Economy::solve(ModelParams::new(0.5, 0.5, 1e9, 0.2, 0.0).unwrap()).unwrap();
    for &t in &[0.0, 1.0, 2.0] {
        assert!(econ.log_amenity(t).abs() < 1e-7);
    }
}

#[test]
fn mean_and_variance_of_log_wage_by_quadrature() {
    for econ in draws(5, 50) {
        // Integrate around the intercept to keep the integrand of one sign.
        let b = econ.eq.b_const;
        let mean = b + econ.integrate_over_firms(|t| conditional_moments(&econ, t).e_lnw - b).unwrap();
        assert!((mean - mean_log_wage(&econ)).abs() < 1e-8 * mean.abs().max(1.0), "{:?}", econ.params);
        let second = econ
            .integrate_over_firms(|t| {
                let c = conditional_moments(&econ, t);
                c.var_lnw + (c.e_lnw - mean) * (c.e_lnw - mean)
            })
            .unwrap();
        let w = wage_report(&econ);
        assert!(rel_err(second, w.var_w) < 1e-8, "{second} vs {}", w.var_w);
        let within = econ.integrate_over_firms(|t| conditional_moments(&econ, t).var_lnw).unwrap();
        assert!(rel_err(within, w.wfwi) < 1e-8);
    }
}

#[test]
fn within_variance_dispersion_by_quadrature() {
    for econ in draws(6, 50) {
        let m = targeted_moments(&econ);
        let mean = econ.integrate_over_firms(|t| conditional_moments(&econ, t).var_lnw).unwrap();
        let vov = econ
            .integrate_over_firms(|t| (conditional_moments(&econ, t).var_lnw - mean).powi(2))
            .unwrap();
        assert!(rel_err(vov, m.var_of_within_var) < 1e-7, "{vov} vs {}", m.var_of_within_var);
    }
}

#[test]
fn decompositions_add_up() {
    for econ in draws(7, 500) {
        let u = welfare_report(&econ);
        let w = wage_report(&econ);
        let a = sorteq::moments::akm_report(&econ);
        assert!(rel_err(u.bfui + u.wfui, u.var_u) < 1e-13);
        assert!(rel_err(u.bfui / u.var_u, u.bfui_share) < 1e-10);
        assert!(rel_err(w.bfwi + w.wfwi, w.var_w) < 1e-13);
        assert!(rel_err(a.var_wfe + a.var_ffe + a.two_cov, w.var_w) < 1e-12);
        assert!(rel_err(a.var_avg_wfe, u.bfui) < 1e-10);
        // Amenity compensation only adds to between-firm wage dispersion.
        assert!(w.bfwi >= u.bfui);
    }
}

#[test]
fn utility_effort_and_amenity_pin_wages_up_to_a_constant() {
    for econ in draws(8, 100) {
        let gap = |x: f64, t: f64| econ.log_utility(x) + econ.log_effort(x, t) - econ.log_amenity(t) - econ.log_wage(x, t);
        let reference = 2.0 * econ.params.ln_a - 4f64.ln() - 2.0 * econ.eq.ln_u0;
        for &(x, t) in &[(0.0, 0.0), (0.7, -0.4), (-1.3, 1.1), (2.0, 0.2)] {
            let g = gap(x, t);
            assert!((g - gap(0.0, 0.0)).abs() < 1e-12 * g.abs().max(1.0), "{:?}", econ.params);
            assert!((g - reference).abs() < 1e-12 * reference.abs().max(1.0), "{g} vs {reference}");
        }
    }
}
