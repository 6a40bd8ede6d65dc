//! Asymptotic variance of the composite-likelihood estimator, normalized efficiency, the
//! misspecified-model sandwich, and the influence function.

mod cov;
mod robust;

pub use cov::{score_cov_empirical, score_cov_exact, CovSource, Quadratic, ScoreCov};
pub use robust::{influence, sandwich_variance, weighted_conditional_kl, RobustReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, log_det_spd, matrix_serde, symmetrize};
use crate::scl::SelectionPolicy;

/// Largest parameter dimension for which dense `r × r` reports are formed.
pub const DENSE_PARAM_LIMIT: usize = 3000;

/// Asymptotic variance `Υ Σ Υ` of `√n (θ̂ − θ₀)`.
///
/// `sigma` weights the component scores by their selection probabilities,
/// `Var(Σ_j β_j λ_j ∇S_j)`. `sigma_z` instead uses the joint selection moments,
/// `Σ_ij β_i β_j E[Z_i Z_j] K^(ij)`, i.e. the variance of the per-sample summand under
/// random selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymReport {
    #[serde(with = "matrix_serde")]
    pub upsilon_inv: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub sigma: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub variance: DMatrix<f64>,
    pub trace: f64,
    pub log_det: f64,
    #[serde(with = "matrix_serde")]
    pub sigma_z: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub variance_z: DMatrix<f64>,
    pub trace_z: f64,
    pub log_det_z: f64,
    /// Determinant ratio against the inverse Fisher information, when known.
    pub eff: Option<f64>,
    pub eff_trace: Option<f64>,
    pub eff_z: Option<f64>,
    pub eff_z_trace: Option<f64>,
}

/// Determinant and trace ratios of a variance matrix against the MLE's.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficiency {
    pub det_ratio: f64,
    pub trace_ratio: f64,
}

fn sandwich(upsilon: &DMatrix<f64>, sigma: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(upsilon * sigma * upsilon))
}

/// `Υ⁻¹ = Σ_j β_j λ_j K^(jj)`.
pub fn upsilon_inv(cov: &ScoreCov, policy: &SelectionPolicy, beta: &[f64]) -> DMatrix<f64> {
    let w = beta.iter().zip(&policy.lambda).map(|(b, l)| b * l).collect();
    symmetrize(&cov.aggregate(&Quadratic::diagonal(w)))
}

/// `Σ = Σ_ij β_i λ_i β_j λ_j K^(ij)`.
pub fn sigma(cov: &ScoreCov, policy: &SelectionPolicy, beta: &[f64]) -> DMatrix<f64> {
    let w = beta.iter().zip(&policy.lambda).map(|(b, l)| b * l).collect();
    symmetrize(&cov.aggregate(&Quadratic::outer(w)))
}

fn check_dims(cov: &ScoreCov, policy: &SelectionPolicy, beta: &[f64]) -> Result<()> {
    let k = cov.num_components();
    if policy.lambda.len() != k || beta.len() != k {
        return Err(Error::Dimension(format!(
            "score covariance has {k} components, λ has {}, β has {}",
            policy.lambda.len(),
            beta.len()
        )));
    }
    policy.validate(k)?;
    if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::Contract("component weights must be positive".into()));
    }
    if cov.num_params() > DENSE_PARAM_LIMIT {
        return Err(Error::Dimension(format!(
            "{} parameters exceed the dense limit of {DENSE_PARAM_LIMIT}; use the diagonal approximation",
            cov.num_params()
        )));
    }
    Ok(())
}

pub fn asymptotic_variance(cov: &ScoreCov, policy: &SelectionPolicy, beta: &[f64]) -> Result<AsymReport> {
    check_dims(cov, policy, beta)?;
    let ups_inv = upsilon_inv(cov, policy, beta);
    let upsilon = inverse_spd(&ups_inv, "upsilon_inv")?;
    let sig = sigma(cov, policy, beta);
    let sig_z = symmetrize(&cov.aggregate(&Quadratic::policy(beta, policy)));
    let variance = sandwich(&upsilon, &sig);
    let variance_z = sandwich(&upsilon, &sig_z);
    let log_det_ups_inv = log_det_spd(&ups_inv, "upsilon_inv")?;
    let log_det = log_det_spd(&sig, "sigma")? - 2.0 * log_det_ups_inv;
    let log_det_z = log_det_spd(&sig_z, "sigma_z")? - 2.0 * log_det_ups_inv;
    let (eff, eff_trace, eff_z, eff_z_trace) = match cov.fisher() {
        Some(fisher) => {
            let mle = inverse_spd(fisher, "fisher")?;
            let log_det_fisher = log_det_spd(fisher, "fisher")?;
            let tr = mle.trace();
            (
                Some((log_det + log_det_fisher).exp()),
                Some(variance.trace() / tr),
                Some((log_det_z + log_det_fisher).exp()),
                Some(variance_z.trace() / tr),
            )
        }
        None => (None, None, None, None),
    };
    Ok(AsymReport {
        trace: variance.trace(),
        trace_z: variance_z.trace(),
        upsilon_inv: ups_inv,
        sigma: sig,
        variance,
        log_det,
        sigma_z: sig_z,
        variance_z,
        log_det_z,
        eff,
        eff_trace,
        eff_z,
        eff_z_trace,
    })
}

/// Normalized efficiency of `variance` against `mle_variance = I(θ₀)⁻¹`.
pub fn efficiency(variance: &DMatrix<f64>, mle_variance: &DMatrix<f64>) -> Result<Efficiency> {
    if variance.shape() != mle_variance.shape() || !variance.is_square() {
        return Err(Error::Dimension("variance matrices must be square and of equal size".into()));
    }
    let a = log_det_spd(variance, "variance").map_err(|_| Error::NotPsd("variance".into()))?;
    let b = log_det_spd(mle_variance, "mle_variance").map_err(|_| Error::NotPsd("mle_variance".into()))?;
    Ok(Efficiency {
        det_ratio: (a - b).exp(),
        trace_ratio: variance.trace() / mle_variance.trace(),
    })
}
