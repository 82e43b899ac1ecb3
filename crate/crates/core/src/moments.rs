//! Closed-form population moments of a solved economy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Economy, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    pub var_u: f64,
    pub bfui: f64,
    pub wfui: f64,
    pub bfui_share: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WageReport {
    pub var_w: f64,
    pub bfwi: f64,
    pub wfwi: f64,
    pub bfwi_share: f64,
    pub mean_log_wage: f64,
}

/// The five calibration targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub wfwi_weighted: f64,
    pub var_of_within_var: f64,
    pub wfwi_unweighted: f64,
    pub var_log_wage: f64,
    pub mean_log_wage: f64,
}

/// Variance decomposition into worker and firm fixed effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AkmReport {
    pub var_wfe: f64,
    pub var_ffe: f64,
    pub two_cov: f64,
    pub var_avg_wfe: f64,
    pub corr_wfe_ffe: f64,
}

/// Moments of workers inside a firm of productivity `θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMoments {
    pub e_x2: f64,
    pub var_lnw: f64,
    pub e_lnw: f64,
}

/// `q = 1 / (c_a (1 − σx/σ))`, the amenity loading of the firm wage effect.
pub fn amenity_loading(econ: &Economy) -> f64 {
    1.0 / (econ.params.c_a * (1.0 - econ.params.sigma_x / econ.eq.sigma))
}

pub fn welfare_report(econ: &Economy) -> WelfareReport {
    let sx = econ.params.sigma_x;
    let s = econ.eq.sigma;
    let rho4 = econ.eq.rho_sq * econ.eq.rho_sq;
    let var_u = 0.5 * sx * sx * s * s;
    let wfui = 0.5 * sx * sx * (2.0 - 1.0 / (s * s));
    WelfareReport {
        var_u,
        bfui: var_u - wfui,
        wfui,
        bfui_share: rho4,
    }
}

pub fn wage_report(econ: &Economy) -> WageReport {
    let welfare = welfare_report(econ);
    let q = amenity_loading(econ);
    let rho4 = econ.eq.rho_sq * econ.eq.rho_sq;
    let bfwi = welfare.var_u * rho4 * (1.0 + q) * (1.0 + q);
    let wfwi = welfare.wfui;
    let var_w = bfwi + wfwi;
    WageReport {
        var_w,
        bfwi,
        wfwi,
        bfwi_share: bfwi / var_w,
        mean_log_wage: mean_log_wage(econ),
    }
}

/// `E ln W = 0.5 σx (σ + (σ² − 1) / (c_a (σ − σx))) + B`.
pub fn mean_log_wage(econ: &Economy) -> f64 {
    let sx = econ.params.sigma_x;
    let s = econ.eq.sigma;
    0.5 * sx * (s + econ.weighted_theta_variance() / (econ.params.c_a * (s - sx))) + econ.eq.b_const
}

pub fn conditional_moments(econ: &Economy, theta: f64) -> ConditionalMoments {
    let r = econ.params.sigma_x / econ.eq.sigma;
    let q = amenity_loading(econ);
    let t2 = theta * theta;
    ConditionalMoments {
        e_x2: r * r * (1.0 + t2),
        var_lnw: 0.5 * r * r * (1.0 + 2.0 * t2),
        e_lnw: 0.5 * r * t2 * (1.0 + q) + econ.eq.b_const + 0.5 * r,
    }
}

pub fn targeted_moments(econ: &Economy) -> MomentSet {
    let wage = wage_report(econ);
    let r = econ.params.sigma_x / econ.eq.sigma;
    let st2 = econ.params.sigma_theta * econ.params.sigma_theta;
    let sx2 = econ.params.sigma_x * econ.params.sigma_x;
    let spread = std::f64::consts::SQRT_2 * sx2 * econ.eq.rho_sq;
    MomentSet {
        wfwi_weighted: wage.wfwi,
        var_of_within_var: spread * spread,
        wfwi_unweighted: 0.5 * r * r * (1.0 + 2.0 * st2),
        var_log_wage: wage.var_w,
        mean_log_wage: wage.mean_log_wage,
    }
}

pub fn akm_report(econ: &Economy) -> AkmReport {
    let sx = econ.params.sigma_x;
    let s = econ.eq.sigma;
    let rho2 = econ.eq.rho_sq;
    let q = amenity_loading(econ);
    let base = sx * s * rho2;
    AkmReport {
        var_wfe: 0.5 * (sx * s) * (sx * s),
        var_ffe: 0.5 * (base * q) * (base * q),
        two_cov: base * base * q,
        var_avg_wfe: welfare_report(econ).bfui,
        corr_wfe_ffe: rho2,
    }
}

/// Scalar outcomes available to [`finite_diff_sensitivity`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Sigma,
    RhoSq,
    VarU,
    Bfui,
    Wfui,
    BfuiShare,
    VarW,
    Bfwi,
    Wfwi,
    BfwiShare,
}

impl Outcome {
    pub fn evaluate(self, econ: &Economy) -> f64 {
        match self {
            Outcome::Sigma => econ.eq.sigma,
            Outcome::RhoSq => econ.eq.rho_sq,
            Outcome::VarU => welfare_report(econ).var_u,
            Outcome::Bfui => welfare_report(econ).bfui,
            Outcome::Wfui => welfare_report(econ).wfui,
            Outcome::BfuiShare => welfare_report(econ).bfui_share,
            Outcome::VarW => wage_report(econ).var_w,
            Outcome::Bfwi => wage_report(econ).bfwi,
            Outcome::Wfwi => wage_report(econ).wfwi,
            Outcome::BfwiShare => wage_report(econ).bfwi_share,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    SigmaX,
    SigmaTheta,
    CA,
    CL,
    LnA,
}

impl Param {
    pub const PRIMITIVES: [Param; 4] = [Param::SigmaTheta, Param::SigmaX, Param::CA, Param::CL];

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            Param::SigmaX => p.sigma_x,
            Param::SigmaTheta => p.sigma_theta,
            Param::CA => p.c_a,
            Param::CL => p.c_l,
            Param::LnA => p.ln_a,
        }
    }

    pub fn set(self, p: &mut ModelParams, v: f64) {
        match self {
            Param::SigmaX => p.sigma_x = v,
            Param::SigmaTheta => p.sigma_theta = v,
            Param::CA => p.c_a = v,
            Param::CL => p.c_l = v,
            Param::LnA => p.ln_a = v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::SigmaX => "sigma_x",
            Param::SigmaTheta => "sigma_theta",
            Param::CA => "c_a",
            Param::CL => "c_l",
            Param::LnA => "ln_A",
        }
    }
}

/// Default central-difference step: `1e-5` times the parameter magnitude.
pub fn default_step(params: &ModelParams, param: Param) -> f64 {
    1e-5 * param.get(params).abs().max(1.0e-3)
}

/// Central-difference derivative of `outcome` with respect to `param`.
pub fn finite_diff_sensitivity(params: &ModelParams, outcome: Outcome, param: Param, step: f64) -> Result<f64> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidParameter {
            name: "step",
            value: step,
            reason: "must be positive and finite",
        });
    }
    let at = |delta: f64| -> Result<f64> {
        let mut p = *params;
        param.set(&mut p, param.get(params) + delta);
        Ok(outcome.evaluate(&Economy::solve(p)?))
    };
    Ok((at(step)? - at(-step)?) / (2.0 * step))
}
