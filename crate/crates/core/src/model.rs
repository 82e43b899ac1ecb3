//! Model primitives and the equilibrium solver.
//!
//! Jobs `h = t + θ` are normally distributed in equilibrium with standard
//! deviation `σ` (the supply of quality jobs). `σ` is the unique root of the
//! strictly increasing map `σ ↦ inverse_alpha(σ)` equal to
//! `α = (1 + c_a) / (c_l c_a)`. Only equilibria in which jobs are normally
//! distributed are sought; other classes of equilibria are not explored.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{self, Tolerance};

/// The five exogenous primitives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Standard deviation of worker skill.
    pub sigma_x: f64,
    /// Standard deviation of firm productivity.
    pub sigma_theta: f64,
    /// Convexity of the amenity provision cost.
    pub c_a: f64,
    /// Convexity of the span-of-control cost.
    pub c_l: f64,
    /// Log total factor productivity.
    #[serde(rename = "ln_A", alias = "ln_a")]
    pub ln_a: f64,
}

impl ModelParams {
    pub fn new(sigma_x: f64, sigma_theta: f64, c_a: f64, c_l: f64, ln_a: f64) -> Result<Self> {
        let p = Self {
            sigma_x,
            sigma_theta,
            c_a,
            c_l,
            ln_a,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma_x", self.sigma_x),
            ("sigma_theta", self.sigma_theta),
            ("c_a", self.c_a),
            ("c_l", self.c_l),
        ];
        for (name, value) in positive {
            if !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be finite",
                });
            }
            if value <= 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    reason: "must be strictly positive",
                });
            }
        }
        if !self.ln_a.is_finite() {
            return Err(Error::InvalidParameter {
                name: "ln_A",
                value: self.ln_a,
                reason: "must be finite",
            });
        }
        Ok(())
    }

    /// Composite `α = (1 + c_a) / (c_l c_a)`.
    pub fn alpha(&self) -> f64 {
        (1.0 + 1.0 / self.c_a) / self.c_l
    }
}

/// Solved endogenous state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Standard deviation of the equilibrium job distribution.
    pub sigma: f64,
    pub alpha: f64,
    /// Sorting strength, `1 - 1/σ²`.
    pub rho_sq: f64,
    /// Log utility of the skill-0 worker.
    pub ln_u0: f64,
    /// Size of the θ = 0 firm.
    pub l_star_0: f64,
    /// Non-stochastic wage intercept.
    pub b_const: f64,
}

/// `α` as a function of `σ`: `(σ/σx − 1)(1/σθ² − 1/(σ² − 1))`.
pub fn inverse_alpha(sigma: f64, sigma_x: f64, sigma_theta: f64) -> Result<f64> {
    if !(sigma > 1.0) {
        return Err(Error::Domain(format!("sigma = {sigma} must exceed 1")));
    }
    if !(sigma > sigma_x) {
        return Err(Error::Domain(format!(
            "sigma = {sigma} must exceed sigma_x = {sigma_x}"
        )));
    }
    Ok(inverse_alpha_unchecked(sigma, sigma_x, sigma_theta))
}

fn inverse_alpha_unchecked(sigma: f64, sigma_x: f64, sigma_theta: f64) -> f64 {
    let st2 = sigma_theta * sigma_theta;
    let excess = sigma.mul_add(sigma, -1.0) - st2;
    let var_bar = sigma.mul_add(sigma, -1.0);
    ((sigma - sigma_x) / sigma_x) * (excess / (st2 * var_bar))
}

fn inverse_alpha_derivative(sigma: f64, sigma_x: f64, sigma_theta: f64) -> f64 {
    let st2 = sigma_theta * sigma_theta;
    let var_bar = sigma.mul_add(sigma, -1.0);
    (1.0 / st2 - 1.0 / var_bar) / sigma_x
        + ((sigma - sigma_x) / sigma_x) * 2.0 * sigma / (var_bar * var_bar)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Required relative residual of `inverse_alpha(σ) = α`.
    pub tolerance: f64,
    /// Cap on doublings of the upper bracket end.
    pub max_expansions: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_expansions: 200,
            max_iterations: 300,
        }
    }
}

/// Solves for `σ` given `α`, `σx` and `σθ` by bracketed bisection with
/// safeguarded Newton steps.
pub fn solve_sigma(alpha: f64, sigma_x: f64, sigma_theta: f64, opts: &SolverOptions) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha = {alpha} must be positive and finite")));
    }
    let f = |s: f64| inverse_alpha_unchecked(s, sigma_x, sigma_theta) - alpha;
    let boundary = sigma_x.max((1.0 + sigma_theta * sigma_theta).sqrt());
    let mut lo = boundary + 1e-9;
    if f(lo) >= 0.0 {
        lo = boundary;
    }
    let mut hi = 2.0 * lo;
    let mut expansions = 0;
    while f(hi) <= 0.0 {
        if expansions >= opts.max_expansions || !hi.is_finite() {
            return Err(Error::NoBracket { expansions, upper: hi });
        }
        lo = hi;
        hi *= 2.0;
        expansions += 1;
    }

    let mut x = 0.5 * (lo + hi);
    for _ in 0..opts.max_iterations {
        let fx = f(x);
        if fx == 0.0 {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / inverse_alpha_derivative(x, sigma_x, sigma_theta);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x || hi - lo <= 2.0 * f64::EPSILON * x {
            x = next;
            break;
        }
        x = next;
    }
    let fx = f(x);
    let residual = (fx / alpha).abs();
    // Near the boundary `σ² − 1 ≈ σθ²` the α-residual is dominated by
    // rounding in the excess. Accept when the root is pinned to a few ulps,
    // either by the bracket or by the implied Newton correction.
    let collapsed = hi - lo <= 8.0 * f64::EPSILON * x;
    let implied = (fx / inverse_alpha_derivative(x, sigma_x, sigma_theta)).abs();
    if residual > opts.tolerance && !collapsed && !(implied <= 16.0 * f64::EPSILON * x) {
        return Err(Error::Domain(format!(
            "root finder stalled at sigma = {x} with relative residual {residual:e}"
        )));
    }
    Ok(x)
}

/// Solves the model with default solver options.
pub fn solve_equilibrium(params: &ModelParams) -> Result<Equilibrium> {
    solve_equilibrium_with(params, &SolverOptions::default())
}

pub fn solve_equilibrium_with(params: &ModelParams, opts: &SolverOptions) -> Result<Equilibrium> {
    params.validate()?;
    let alpha = params.alpha();
    let sigma = solve_sigma(alpha, params.sigma_x, params.sigma_theta, opts)?;
    Ok(equilibrium_at(params, sigma))
}

/// Endogenous state implied by a given supply of quality jobs `σ`, which is
/// assumed to solve the fixed point for `params`.
pub fn equilibrium_at(params: &ModelParams, sigma: f64) -> Equilibrium {
    let alpha = params.alpha();
    let var_bar = sigma.mul_add(sigma, -1.0);
    let ln_mass = params.sigma_theta.ln() - 0.5 * var_bar.ln();
    let ln_u0 = 2.0 * params.ln_a
        - 0.5 * (1.0 - params.sigma_x / sigma).ln()
        - 4f64.ln()
        - ln_mass / alpha
        - params.c_a / (1.0 + params.c_a) * params.c_l.ln_1p();
    let b_const = ln_u0
        + (1.0 / params.c_a).ln_1p()
        + params.c_l / (1.0 + params.c_a) * (ln_mass + params.c_l.ln_1p() / params.c_l);
    Equilibrium {
        sigma,
        alpha,
        rho_sq: 1.0 - 1.0 / (sigma * sigma),
        ln_u0,
        l_star_0: ln_mass.exp(),
        b_const,
    }
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn ln_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// Default exponent cap for quantities that are exponentials of `θ²`.
pub const DEFAULT_OVERFLOW_CAP: f64 = 700.0;

/// A solved economy: primitives plus equilibrium, with the firm- and
/// worker-level equilibrium functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Economy {
    pub params: ModelParams,
    pub eq: Equilibrium,
    #[serde(skip, default = "default_cap")]
    overflow_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_OVERFLOW_CAP
}

impl Economy {
    pub fn solve(params: ModelParams) -> Result<Self> {
        let eq = solve_equilibrium(&params)?;
        Ok(Self {
            params,
            eq,
            overflow_cap: DEFAULT_OVERFLOW_CAP,
        })
    }

    pub fn from_parts(params: ModelParams, eq: Equilibrium) -> Self {
        Self {
            params,
            eq,
            overflow_cap: DEFAULT_OVERFLOW_CAP,
        }
    }

    pub fn with_overflow_cap(mut self, cap: f64) -> Self {
        self.overflow_cap = cap;
        self
    }

    /// `σ / σx`.
    pub fn sigma_ratio(&self) -> f64 {
        self.eq.sigma / self.params.sigma_x
    }

    /// Variance of the size-weighted productivity distribution, `σ² − 1`.
    pub fn weighted_theta_variance(&self) -> f64 {
        self.eq.sigma.mul_add(self.eq.sigma, -1.0)
    }

    /// Skill of the worker assigned to job `h`.
    pub fn assignment_mu(&self, h: f64) -> f64 {
        h / self.sigma_ratio()
    }

    /// `ln u(x) = (σ/σx) x²/2 + ln u(0)`.
    pub fn log_utility(&self, x: f64) -> f64 {
        0.5 * self.sigma_ratio() * x * x + self.eq.ln_u0
    }

    /// `ln L*(θ)`, without an overflow check.
    pub fn log_firm_size(&self, theta: f64) -> f64 {
        self.eq.l_star_0.ln() + self.size_exponent(theta)
    }

    fn size_exponent(&self, theta: f64) -> f64 {
        self.eq.alpha * theta * theta / (2.0 * (self.sigma_ratio() - 1.0))
    }

    /// `L*(θ) = L*(0) exp(α θ² / (2(σ/σx − 1)))`.
    pub fn firm_size(&self, theta: f64) -> Result<f64> {
        let exponent = self.size_exponent(theta);
        if exponent > self.overflow_cap {
            return Err(Error::Overflow {
                exponent,
                cap: self.overflow_cap,
            });
        }
        Ok(self.eq.l_star_0 * exponent.exp())
    }

    /// `ln a*(θ)`.
    pub fn log_amenity(&self, theta: f64) -> f64 {
        let p = &self.params;
        let ratio = self.sigma_ratio();
        let bracket = 2.0 * p.ln_a
            - 4f64.ln()
            - self.eq.ln_u0
            - 0.5 * (1.0 - 1.0 / ratio).ln()
            + theta * theta / (2.0 * (ratio - 1.0));
        (1.0 / p.c_a).ln_1p() + bracket / p.c_a
    }

    /// Log effort required from a worker of skill `x` at firm `θ`, from the
    /// first-order condition `e* = A² exp(μ(h) h) a² / (4 u(μ(h))²)`.
    pub fn log_effort(&self, x: f64, theta: f64) -> f64 {
        self.log_effort_given_amenity(x, self.log_amenity(theta))
    }

    /// Effort first-order condition at an arbitrary amenity level `ln a`.
    pub fn log_effort_given_amenity(&self, x: f64, ln_amenity: f64) -> f64 {
        2.0 * self.params.ln_a + self.sigma_ratio() * x * x + 2.0 * ln_amenity
            - 2.0 * self.log_utility(x)
            - 4f64.ln()
    }

    /// `ln w(x, θ) = (σ/(2σx)) x² + θ² / (2 c_a (σ/σx − 1)) + B`.
    pub fn log_wage(&self, x: f64, theta: f64) -> f64 {
        let ratio = self.sigma_ratio();
        0.5 * ratio * x * x + theta * theta / (2.0 * self.params.c_a * (ratio - 1.0)) + self.eq.b_const
    }

    /// Reservation-inclusive maximised profit `r(θ) = c_l L*(θ)^(1 + c_l)`.
    pub fn firm_profit(&self, theta: f64) -> Result<f64> {
        let c_l = self.params.c_l;
        let exponent = c_l.ln() + (1.0 + c_l) * self.log_firm_size(theta);
        if exponent > self.overflow_cap {
            return Err(Error::Overflow {
                exponent,
                cap: self.overflow_cap,
            });
        }
        Ok(exponent.exp())
    }

    /// Log of the per-worker revenue factor `K(θ) = A² exp(θ²/(2(σ/σx−1))) / (4 u(0) √(1 − σx/σ))`
    /// that multiplies the amenity level in the firm's objective.
    pub fn log_revenue_factor(&self, theta: f64) -> f64 {
        let ratio = self.sigma_ratio();
        2.0 * self.params.ln_a - 4f64.ln() - self.eq.ln_u0 - 0.5 * (1.0 - 1.0 / ratio).ln()
            + theta * theta / (2.0 * (ratio - 1.0))
    }

    /// The firm's objective after substituting optimal effort and
    /// assignment, as a function of size and amenity level.
    pub fn profit_objective(&self, theta: f64, size: f64, amenity: f64) -> f64 {
        let c_a = self.params.c_a;
        let amenity_cost = (c_a * amenity / (1.0 + c_a)).powf(1.0 + c_a) / c_a;
        size * (amenity * self.log_revenue_factor(theta).exp() - amenity_cost - size.powf(self.params.c_l))
    }

    /// Job density from the closed-form equilibrium: `φ(h/σ)/σ`.
    pub fn job_density_closed_form(&self, h: f64) -> f64 {
        std_normal_pdf(h / self.eq.sigma) / self.eq.sigma
    }

    /// Job density from the normal-mixture formula, valid for any `σ`:
    /// `L*(0)/√D · φ(h √(1/(1 + σθ²/D')))` with `D = 1 + σθ²(1 − α/(σ/σx−1))`
    /// and `D' = 1 − ασθ²/(σ/σx−1)`.
    pub fn job_density_mixture_formula(&self, h: f64) -> f64 {
        let st2 = self.params.sigma_theta * self.params.sigma_theta;
        let k = self.eq.alpha / (self.sigma_ratio() - 1.0);
        let outer = 1.0 + st2 * (1.0 - k);
        let inner = 1.0 - k * st2;
        self.eq.l_star_0 / outer.sqrt() * std_normal_pdf(h * (1.0 / (1.0 + st2 / inner)).sqrt())
    }

    /// Log of the mixture integrand `L*(θ) φ(h − θ) φ(θ/σθ) / σθ`.
    fn log_mixture_integrand(&self, h: f64, theta: f64) -> f64 {
        let st = self.params.sigma_theta;
        self.log_firm_size(theta) + ln_std_normal_pdf(h - theta) + ln_std_normal_pdf(theta / st) - st.ln()
    }

    /// Log of the size-weighted productivity density `L*(θ) φ(θ/σθ) / σθ`.
    pub fn log_size_weight(&self, theta: f64) -> f64 {
        let st = self.params.sigma_theta;
        self.log_firm_size(theta) + ln_std_normal_pdf(theta / st) - st.ln()
    }

    /// Job density evaluated by numerically integrating the mixture of
    /// within-firm job distributions over firms.
    pub fn job_density(&self, h: f64) -> Result<f64> {
        let r = quadrature::integrate_peaked(
            |t| self.log_mixture_integrand(h, t),
            |_| 1.0,
            0.5 * h,
            14.0,
            Tolerance::default(),
        )?;
        Ok(r.value)
    }

    /// `∫ g(θ) L*(θ) dΦ(θ/σθ)` by quadrature.
    pub fn integrate_over_firms<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let r = quadrature::integrate_peaked(
            |t| self.log_size_weight(t),
            g,
            0.0,
            14.0,
            Tolerance::default(),
        )?;
        Ok(r.value)
    }

    /// Total employment `∫ L*(θ) dΦ(θ/σθ)`; equals one in equilibrium.
    pub fn total_employment(&self) -> Result<f64> {
        self.integrate_over_firms(|_| 1.0)
    }
}
