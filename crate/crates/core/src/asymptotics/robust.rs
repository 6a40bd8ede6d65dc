use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cov::Quadratic;
use crate::error::{Error, Result};
use crate::estimator::optimizer::{maximize, sup_norm, LineSearch, Method};
use crate::linalg::{inverse_general, matrix_serde, symmetrize};
use crate::mrf::{Assignment, Family, GraphModel};
use crate::scl::{plan_all, ComponentSet, Objective, SelectionPolicy};

const THETA0_TOLERANCE: f64 = 1e-9;

/// Sandwich variance `bread⁻¹ · meat · bread⁻¹` of the estimator when the data come from
/// an arbitrary distribution, together with the parameter it converges to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustReport {
    pub theta0: Vec<f64>,
    #[serde(with = "matrix_serde")]
    pub bread: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub meat: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub sandwich: DMatrix<f64>,
    /// `‖E_P E_Z ψ_θ₀‖_∞` at the returned θ₀.
    pub stationarity: f64,
}

fn expected_hessian(
    model: &GraphModel,
    theta: &[f64],
    states: &[Assignment],
    truth: &[f64],
    comps: &ComponentSet,
    policy: &SelectionPolicy,
) -> Result<DMatrix<f64>> {
    let prep = model.prepare(theta)?;
    let plans = plan_all(model, comps)?;
    let r = model.num_params();
    let mut h = DMatrix::zeros(r, r);
    for (x, &p) in states.iter().zip(truth) {
        if p == 0.0 {
            continue;
        }
        for (j, plan) in plans.iter().enumerate() {
            let c = p * comps.beta[j] * policy.lambda[j];
            h += model.component_hessian(&prep, plan, &x.0) * c;
        }
    }
    Ok(symmetrize(&h))
}

/// Sandwich variance under a true distribution `truth` over `model.states()` (same
/// lexicographic order).
///
/// θ₀ maximizes `M(θ) = E_P Σ_j β_j λ_j log p_θ(X_A_j | X_B_j)`: quasi-Newton ascent
/// followed by Newton polishing with the exact expected Hessian.
pub fn sandwich_variance(
    model: &GraphModel,
    comps: &ComponentSet,
    policy: &SelectionPolicy,
    truth: &[f64],
) -> Result<RobustReport> {
    policy.validate(comps.len())?;
    let states = model.states()?;
    if truth.len() != states.len() {
        return Err(Error::Dimension(format!(
            "true distribution has {} entries, the model has {} states",
            truth.len(),
            states.len()
        )));
    }
    let total: f64 = truth.iter().sum();
    if truth.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract("true distribution must be non-negative and sum to 1".into()));
    }
    let objective = Objective::from_distribution(model, &states, truth, comps, &policy.lambda)?;
    let ascent = maximize(
        |t| objective.value_and_gradient(t),
        vec![0.0; model.num_params()],
        Method::Bfgs,
        THETA0_TOLERANCE,
        2000,
        LineSearch::default(),
    )?;
    let mut theta = ascent.x;
    let mut grad = ascent.gradient;
    for _ in 0..20 {
        if sup_norm(&grad) < 1e-13 {
            break;
        }
        let h = expected_hessian(model, &theta, &states, truth, comps, policy)?;
        let step = inverse_general(&h, "bread")? * DVector::from_column_slice(&grad);
        let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t - s).collect();
        let (_, g) = objective.value_and_gradient(&trial)?;
        if sup_norm(&g) >= sup_norm(&grad) {
            break;
        }
        theta = trial;
        grad = g;
    }
    let bread = expected_hessian(model, &theta, &states, truth, comps, policy)?;
    let meat = expected_meat(model, &theta, &states, truth, comps, policy)?;
    let bread_inv = inverse_general(&bread, "bread")?;
    let sandwich = symmetrize(&(&bread_inv * &meat * &bread_inv));
    Ok(RobustReport {
        theta0: theta,
        bread,
        meat,
        sandwich,
        stationarity: sup_norm(&grad),
    })
}

fn expected_meat(
    model: &GraphModel,
    theta: &[f64],
    states: &[Assignment],
    truth: &[f64],
    comps: &ComponentSet,
    policy: &SelectionPolicy,
) -> Result<DMatrix<f64>> {
    let prep = model.prepare(theta)?;
    let plans = plan_all(model, comps)?;
    let r = model.num_params();
    let q = Quadratic::policy(&comps.beta, policy);
    let k = comps.len();
    let mut meat = DMatrix::zeros(r, r);
    for (x, &p) in states.iter().zip(truth) {
        if p == 0.0 {
            continue;
        }
        let scores: Vec<DVector<f64>> = plans
            .iter()
            .map(|plan| DVector::from_vec(model.component_score(&prep, plan, x)))
            .collect();
        for i in 0..k {
            for j in 0..k {
                let c = q.coef(i, j);
                if c != 0.0 {
                    meat += &scores[i] * scores[j].transpose() * (p * c);
                }
            }
        }
    }
    Ok(symmetrize(&meat))
}

/// First-order effect of adding `(x, z)` to a sample of size `n`:
/// `−(1/n) bread⁻¹ ψ_θ₀(x, z)` with `ψ = Σ_j β_j z_j ∇S_j`.
pub fn influence(
    robust: &RobustReport,
    model: &GraphModel,
    comps: &ComponentSet,
    x: &Assignment,
    z: &[bool],
    n: usize,
) -> Result<Vec<f64>> {
    if z.len() != comps.len() {
        return Err(Error::Dimension("indicator vector length differs from the component count".into()));
    }
    if n == 0 {
        return Err(Error::Dimension("sample size must be positive".into()));
    }
    model.check_assignment(&x.0)?;
    let prep = model.prepare(&robust.theta0)?;
    let plans = plan_all(model, comps)?;
    let mut psi = DVector::zeros(model.num_params());
    for (j, plan) in plans.iter().enumerate() {
        if z[j] {
            psi += DVector::from_vec(model.component_score(&prep, plan, x)) * comps.beta[j];
        }
    }
    let bread_inv = inverse_general(&robust.bread, "bread")?;
    Ok((bread_inv * psi * (-1.0 / n as f64)).iter().copied().collect())
}

/// `Σ_j α_j E_θ[log p_θ(X_A_j | X_B_j) − log p_θ'(X_A_j | X_B_j)]`, the weighted sum of
/// expected conditional KL divergences.
pub fn weighted_conditional_kl(
    model: &GraphModel,
    theta: &[f64],
    theta_prime: &[f64],
    comps: &ComponentSet,
    alpha: &[f64],
) -> Result<f64> {
    if alpha.len() != comps.len() {
        return Err(Error::Dimension("one weight per component is required".into()));
    }
    let table = model.joint_table(theta)?;
    let prep = model.prepare(theta)?;
    let prep_prime = model.prepare(theta_prime)?;
    let plans = plan_all(model, comps)?;
    let mut total = 0.0;
    for (x, p) in &table {
        for (plan, a) in plans.iter().zip(alpha) {
            let d = model.component_log_prob(&prep, plan, x) - model.component_log_prob(&prep_prime, plan, x);
            total += a * p * d;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::{asymptotic_variance, score_cov_exact};

    #[test]
    fn in_family_full_likelihood_reduces_to_inverse_fisher() {
        let bm = GraphModel::boltzmann_machine(3).unwrap();
        let theta = [0.8, -0.4, 0.3];
        let truth: Vec<f64> = bm.joint_table(&theta).unwrap().iter().map(|(_, p)| *p).collect();
        let comps = ComponentSet::full_likelihood(3).unwrap();
        let rep = sandwich_variance(&bm, &comps, &SelectionPolicy::always(1), &truth).unwrap();
        for (a, b) in rep.theta0.iter().zip(&theta) {
            assert!((a - b).abs() < 1e-8);
        }
        let fisher = bm.fisher_information(&theta).unwrap();
        assert!((&rep.bread + &fisher).amax() < 1e-9);
        assert!((&rep.meat - &fisher).amax() < 1e-9);
        assert!(rep.stationarity < 1e-7);
    }

    #[test]
    fn in_family_pseudo_likelihood_matches_asymptotic_variance() {
        let bm = GraphModel::boltzmann_machine(3).unwrap();
        let theta = [0.5, 1.0, -0.7];
        let truth: Vec<f64> = bm.joint_table(&theta).unwrap().iter().map(|(_, p)| *p).collect();
        let comps = ComponentSet::pseudo(3, 1).unwrap();
        let policy = SelectionPolicy::independence(vec![0.5, 0.8, 0.3]).unwrap();
        let rep = sandwich_variance(&bm, &comps, &policy, &truth).unwrap();
        let cov = score_cov_exact(&bm, &theta, &comps).unwrap();
        let asym = asymptotic_variance(&cov, &policy, &comps.beta).unwrap();
        assert!((&rep.sandwich - &asym.variance_z).amax() < 1e-8);
    }

    #[test]
    fn influence_vanishes_without_selection_and_scales() {
        let bm = GraphModel::boltzmann_machine(3).unwrap();
        let truth = vec![0.125; 8];
        let comps = ComponentSet::pseudo(3, 1).unwrap();
        let rep = sandwich_variance(&bm, &comps, &SelectionPolicy::always(3), &truth).unwrap();
        let x = Assignment(vec![1, 0, 1]);
        let zero = influence(&rep, &bm, &comps, &x, &[false; 3], 10).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        let a = influence(&rep, &bm, &comps, &x, &[true; 3], 10).unwrap();
        let b = influence(&rep, &bm, &comps, &x, &[true; 3], 20).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - 2.0 * v).abs() < 1e-15);
        }
    }

    #[test]
    fn conditional_kl_is_zero_at_equal_parameters() {
        let bm = GraphModel::boltzmann_machine(3).unwrap();
        let comps = ComponentSet::pseudo(3, 1).unwrap();
        let theta = [0.3, -1.2, 0.9];
        let kl = weighted_conditional_kl(&bm, &theta, &theta, &comps, &[1.0, 2.0, 0.5]).unwrap();
        assert!(kl.abs() < 1e-12);
        let other = weighted_conditional_kl(&bm, &theta, &[0.0, 0.0, 0.0], &comps, &[1.0, 2.0, 0.5]).unwrap();
        assert!(other > 0.0);
    }
}
