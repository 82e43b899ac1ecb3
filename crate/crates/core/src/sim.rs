//! Synthetic panels drawn from a solved economy.
//!
//! Every firm owns a ChaCha stream keyed by `(seed, firm index)`; the firm's
//! productivity is the first draw and its workers' jobs follow. Output is
//! therefore independent of thread count and scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Economy;
use crate::panel::{FirmRecord, Latent, Panel, WorkerRecord};

/// Default lower bound on simulated firm size.
pub const DEFAULT_MIN_FIRM_SIZE: u64 = 5;

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub n_workers: u64,
    pub n_firms: u64,
    pub min_firm_size: u64,
    pub seed: u64,
    pub year_label: i64,
}

fn firm_stream(seed: u64, firm: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(firm);
    rng
}

/// Draws one productivity from the employment-weighted firm distribution,
/// `N(0, σ² − 1)`.
pub fn draw_sizeweighted_theta<R: rand::Rng + ?Sized>(econ: &Economy, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * econ.weighted_theta_variance().sqrt()
}

/// Splits `total` into integer sizes proportional to `exp(log_weights)`,
/// each at least `floor`, summing exactly to `total`. Firms whose share
/// falls below the floor are pinned to it and the rest is re-split;
/// remainders go to the largest fractional parts (ties by index).
pub fn allocate_sizes(log_weights: &[f64], total: u64, floor: u64) -> Result<Vec<u64>> {
    let n = log_weights.len();
    if n == 0 {
        return Err(Error::Layout("no firms".into()));
    }
    if (n as u64).saturating_mul(floor) > total {
        return Err(Error::Layout(format!(
            "{total} workers cannot fill {n} firms of at least {floor}"
        )));
    }
    let peak = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::Layout("firm weights are not finite".into()));
    }
    let weights: Vec<f64> = log_weights.iter().map(|l| (l - peak).exp()).collect();
    let mut pinned = vec![false; n];
    loop {
        let free_total = total - floor * pinned.iter().filter(|&&p| p).count() as u64;
        let free_weight = crate::stats::sum(
            &weights.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(w, _)| *w).collect::<Vec<_>>(),
        );
        let mut changed = false;
        for i in 0..n {
            if !pinned[i] && (free_total as f64) * weights[i] / free_weight < floor as f64 {
                pinned[i] = true;
                changed = true;
            }
        }
        if changed {
            continue;
        }
        let mut sizes = vec![floor; n];
        let mut fracs = Vec::new();
        let mut assigned = 0u64;
        for i in 0..n {
            if pinned[i] {
                continue;
            }
            let exact = (free_total as f64) * weights[i] / free_weight;
            let base = exact.floor() as u64;
            sizes[i] = base;
            assigned += base;
            fracs.push((exact - base as f64, i));
        }
        let mut left = free_total.saturating_sub(assigned);
        fracs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in fracs.iter().cycle().take(fracs.len().max(1) * 2) {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        // Floor rounding of free shares can only undershoot.
        debug_assert_eq!(sizes.iter().sum::<u64>(), total);
        return Ok(sizes);
    }
}

/// Simulates a cross section of `n_workers` workers in `n_firms` firms.
pub fn simulate_panel(econ: &Economy, cfg: &SimConfig) -> Result<Panel> {
    if cfg.n_firms == 0 || cfg.n_workers == 0 {
        return Err(Error::Layout("need at least one worker and one firm".into()));
    }
    let floor = cfg.min_firm_size.max(1);
    let theta_dist = Normal::new(0.0, econ.params.sigma_theta)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let thetas: Vec<f64> = (0..cfg.n_firms)
        .into_par_iter()
        .map(|j| theta_dist.sample(&mut firm_stream(cfg.seed, j)))
        .collect();
    let mut log_weights = Vec::with_capacity(thetas.len());
    for &t in &thetas {
        econ.firm_size(t)?;
        log_weights.push(econ.log_firm_size(t));
    }
    let sizes = allocate_sizes(&log_weights, cfg.n_workers, floor)?;
    let mut offsets = Vec::with_capacity(sizes.len());
    let mut next = 0u64;
    for &s in &sizes {
        offsets.push(next);
        next += s;
    }
    let ratio = econ.sigma_ratio();
    let blocks: Vec<Vec<WorkerRecord>> = (0..cfg.n_firms)
        .into_par_iter()
        .map(|j| {
            let mut rng = firm_stream(cfg.seed, j);
            let theta = theta_dist.sample(&mut rng);
            let n = sizes[j as usize];
            let first = offsets[j as usize];
            (0..n)
                .map(|k| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let h = theta + z;
                    let x = h / ratio;
                    WorkerRecord {
                        worker_id: first + k,
                        firm_id: j,
                        log_wage: econ.log_wage(x, theta),
                        latent: Some(Latent { x, h, theta }),
                    }
                })
                .collect()
        })
        .collect();
    let firms = thetas
        .iter()
        .zip(&sizes)
        .enumerate()
        .map(|(j, (&theta, &size))| FirmRecord {
            firm_id: j as u64,
            theta: Some(theta),
            size,
        })
        .collect();
    Ok(Panel {
        year_label: cfg.year_label,
        firms,
        workers: blocks.into_iter().flatten().collect(),
        params_used: Some(econ.params),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;

    fn econ() -> Economy {
        Economy::solve(ModelParams::new(0.5, 0.5, 4.0, 0.1953125, 0.0).unwrap()).unwrap()
    }

    #[test]
    fn allocation_preserves_total_and_floor() {
        let lw = [0.0, 5.0, -3.0, 1.0, 0.2, -10.0];
        let s = allocate_sizes(&lw, 1000, 5).unwrap();
        assert_eq!(s.iter().sum::<u64>(), 1000);
        assert!(s.iter().all(|&v| v >= 5));
        assert!(s[1] > s[3] && s[3] > s[0]);
        assert!(allocate_sizes(&lw, 29, 5).is_err());
        assert_eq!(allocate_sizes(&lw, 30, 5).unwrap(), vec![5; 6]);
    }

    #[test]
    fn deterministic_and_consistent() {
        let cfg = SimConfig {
            n_workers: 20_000,
            n_firms: 500,
            min_firm_size: 5,
            seed: 11,
            year_label: 1,
        };
        let e = econ();
        let a = simulate_panel(&e, &cfg).unwrap();
        let b = simulate_panel(&e, &cfg).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.workers.len(), 20_000);
        let ratio = e.sigma_ratio();
        for w in &a.workers {
            let l = w.latent.unwrap();
            assert_eq!(l.x, l.h / ratio);
            assert_eq!(w.log_wage.to_bits(), e.log_wage(l.x, l.theta).to_bits());
        }
        let other = simulate_panel(&e, &SimConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.workers[0].log_wage, other.workers[0].log_wage);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let cfg = SimConfig {
            n_workers: 5_000,
            n_firms: 100,
            min_firm_size: 5,
            seed: 3,
            year_label: 0,
        };
        let e = econ();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| simulate_panel(&e, &cfg).unwrap());
        let b = four.install(|| simulate_panel(&e, &cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn infeasible_layout_is_rejected() {
        let cfg = SimConfig {
            n_workers: 10,
            n_firms: 5,
            min_firm_size: 5,
            seed: 0,
            year_label: 0,
        };
        assert!(matches!(simulate_panel(&econ(), &cfg), Err(Error::Layout(_))));
    }
}
