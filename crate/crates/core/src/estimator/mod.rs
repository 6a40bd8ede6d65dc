//! Maximization of the (optionally L2-penalized) composite likelihood, and the alternating
//! θ/β procedure that picks component weights from the estimated asymptotic variance.

pub mod optimizer;

use serde::{Deserialize, Serialize};

pub use optimizer::{LineSearch, Method};

use crate::asymptotics::score_cov_empirical;
use crate::beta::{optimize_beta, BetaConstraints, BetaMode, BetaObjective};
use crate::error::{Error, Result};
use crate::mrf::Family;
use crate::scl::{flop_count, ComponentSet, FlopLedger, IndicatorMatrix, Objective, SelectionPolicy};

/// Optimizer settings. The penalty `‖θ‖² / (2σ²)` is applied to the summed objective,
/// i.e. `‖θ‖² / (2σ² n)` on the per-sample scale that is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Sup-norm tolerance on the gradient of the penalized per-sample objective.
    pub gradient_tolerance: f64,
    pub regularizer_sigma2: Option<f64>,
    pub method: Method,
    pub line_search: LineSearch,
    /// Seed for the selection indicators drawn by [`fit_auto_beta`].
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            regularizer_sigma2: None,
            method: Method::Auto,
            line_search: LineSearch::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("gradient_tolerance: must be positive".into()));
        }
        if let Some(s) = self.regularizer_sigma2 {
            if !(s > 0.0) {
                return Err(Error::Config("regularizer_sigma2: must be positive".into()));
            }
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.sufficient_increase > 0.0 && ls.sufficient_increase < 1.0) {
            return Err(Error::Config("line_search: shrink and sufficient_increase must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    /// Penalized objective after every accepted step (first entry: the starting point).
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Cost of one objective evaluation over the data.
    pub ledger: FlopLedger,
    /// Gradient FLOPs spent by the whole run (`evaluations × ledger.gradient_total`).
    pub flops_spent: u64,
}

/// Penalized objective value and gradient.
pub fn penalized<F: Family>(obj: &Objective<F>, theta: &[f64], sigma2: Option<f64>) -> Result<(f64, Vec<f64>)> {
    let (mut v, mut g) = obj.value_and_gradient(theta)?;
    if let Some(s2) = sigma2 {
        let c = 1.0 / (s2 * obj.num_samples() as f64);
        v -= 0.5 * c * theta.iter().map(|t| t * t).sum::<f64>();
        for (gi, t) in g.iter_mut().zip(theta) {
            *gi -= c * t;
        }
    }
    Ok((v, g))
}

/// Maximizes a prepared objective from `init`.
pub fn fit_objective<F: Family>(
    obj: &Objective<F>,
    init: Vec<f64>,
    config: &FitConfig,
    ledger: FlopLedger,
) -> Result<FitResult> {
    config.validate()?;
    if init.len() != obj.model().num_params() {
        return Err(Error::Dimension("initial θ has the wrong length".into()));
    }
    let ascent = optimizer::maximize(
        |t| penalized(obj, t, config.regularizer_sigma2),
        init,
        config.method,
        config.gradient_tolerance,
        config.max_iterations,
        config.line_search,
    )?;
    Ok(FitResult {
        gradient_norm: optimizer::sup_norm(&ascent.gradient),
        theta_hat: ascent.x,
        objective_trace: ascent.trace,
        converged: ascent.converged,
        iterations: ascent.iterations,
        evaluations: ascent.evaluations,
        flops_spent: ledger.gradient_total * ascent.evaluations as u64,
        ledger,
    })
}

/// Maximizes the composite likelihood from θ = 0.
pub fn fit<F: Family>(
    model: &F,
    data: &[F::Sample],
    comps: &ComponentSet,
    z: &IndicatorMatrix,
    config: &FitConfig,
) -> Result<FitResult> {
    let obj = Objective::new(model, data, comps, z)?;
    let ledger = flop_count(model, data, comps, z)?;
    fit_objective(&obj, vec![0.0; model.num_params()], config, ledger)
}

/// Settings of the alternating θ/β procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoBetaConfig {
    pub gamma: f64,
    pub max_outer: usize,
    /// Stop once successive θ estimates differ by less than this in sup-norm.
    pub theta_tolerance: f64,
    pub mode: BetaMode,
    pub constraints: BetaConstraints,
}

impl Default for AutoBetaConfig {
    fn default() -> Self {
        AutoBetaConfig {
            gamma: 1.0,
            max_outer: 10,
            theta_tolerance: 1e-4,
            mode: BetaMode::DiagonalApprox,
            constraints: BetaConstraints {
                groups: Vec::new(),
                normalize: true,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoBetaResult {
    pub fit: FitResult,
    pub beta: Vec<f64>,
    /// Whether θ stabilized before the outer iteration limit.
    pub converged: bool,
    pub outer_iterations: usize,
    /// `(J before, J after)` for every β update, each evaluated with the covariance
    /// estimated at that step's θ̂.
    pub j_trace: Vec<(f64, f64)>,
    pub beta_trace: Vec<Vec<f64>>,
}

/// Alternates θ-maximization of the composite likelihood with a β update that minimizes
/// the estimated log-det asymptotic variance, using θ̂ as plug-in for θ₀ and the training
/// set for the score covariance. Indicators are drawn once from `policy` with
/// `config.seed`.
pub fn fit_auto_beta<F: Family>(
    model: &F,
    data: &[F::Sample],
    comps: &ComponentSet,
    policy: &SelectionPolicy,
    config: &FitConfig,
    auto: &AutoBetaConfig,
) -> Result<AutoBetaResult> {
    policy.validate(comps.len())?;
    let z = policy.draw_indicators(data.len(), config.seed)?;
    let mut obj = Objective::new(model, data, comps, &z)?;
    let ledger = flop_count(model, data, comps, &z)?;
    let mut beta = comps.beta.clone();
    let mut fit = fit_objective(&obj, vec![0.0; model.num_params()], config, ledger.clone())?;
    if comps.len() == 1 {
        return Ok(AutoBetaResult {
            fit,
            beta,
            converged: true,
            outer_iterations: 0,
            j_trace: Vec::new(),
            beta_trace: Vec::new(),
        });
    }
    let mut j_trace = Vec::new();
    let mut beta_trace = vec![beta.clone()];
    let mut converged = false;
    let mut outer = 0;
    while outer < auto.max_outer {
        outer += 1;
        let cov = score_cov_empirical(model, &fit.theta_hat, data, comps)?;
        let bobj = BetaObjective::new(&cov, policy.lambda.clone(), auto.mode)?.with_gamma(auto.gamma)?;
        let out = optimize_beta(&bobj, &beta, &auto.constraints)?;
        j_trace.push((out.initial_value, out.value));
        beta = out.beta;
        beta_trace.push(beta.clone());
        obj.set_beta(&beta)?;
        let previous = fit.theta_hat.clone();
        let evaluations = fit.evaluations;
        fit = fit_objective(&obj, previous.clone(), config, ledger.clone())?;
        fit.evaluations += evaluations;
        fit.flops_spent = ledger.gradient_total * fit.evaluations as u64;
        let change = previous
            .iter()
            .zip(&fit.theta_hat)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        if change < auto.theta_tolerance {
            converged = true;
            break;
        }
    }
    Ok(AutoBetaResult {
        fit,
        beta,
        converged,
        outer_iterations: outer,
        j_trace,
        beta_trace,
    })
}
