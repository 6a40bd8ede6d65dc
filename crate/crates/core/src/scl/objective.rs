use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ComponentSet, IndicatorMatrix, SelectionPolicy};
use crate::error::{Error, Result};
use crate::mrf::{Family, Flops};

/// Rows per parallel work unit. Fixed so that the reduction tree, and therefore every
/// floating-point sum, does not depend on the number of threads.
const CHUNK: usize = 32;

/// FLOP counts of one evaluation of the objective (and of its gradient).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopLedger {
    pub per_component: Vec<u64>,
    pub per_sample: Vec<u64>,
    pub objective_total: u64,
    pub gradient_total: u64,
}

#[derive(Debug, Clone)]
struct Row<S> {
    sample: S,
    selected: Vec<(usize, f64)>,
    weight: f64,
}

/// The stochastic composite likelihood for fixed data and indicators,
/// `(1/n) Σ_i Σ_j β_j Z_ij log p_θ(x_i,A_j | x_i,B_j)`.
///
/// Identical (sample, indicator row) pairs are merged into one weighted row.
pub struct Objective<'a, F: Family> {
    model: &'a F,
    rows: Vec<Row<F::Sample>>,
    plans: Vec<F::Plan>,
    beta: Vec<f64>,
    n: usize,
    norm: f64,
}

/// Plans for every component of a set.
pub fn plan_all<F: Family>(model: &F, comps: &ComponentSet) -> Result<Vec<F::Plan>> {
    comps.components.iter().map(|c| model.plan(c)).collect()
}

/// For every component, how many components of the set share its order.
pub fn shared_counts<F: Family>(model: &F, plans: &[F::Plan]) -> Vec<usize> {
    let orders: Vec<usize> = plans.iter().map(|p| model.component_order(p)).collect();
    orders
        .iter()
        .map(|o| orders.iter().filter(|q| *q == o).count())
        .collect()
}

fn check_inputs<F: Family>(model: &F, data: &[F::Sample], comps: &ComponentSet, z: &IndicatorMatrix) -> Result<()> {
    comps.validate()?;
    if data.is_empty() {
        return Err(Error::Dimension("dataset is empty".into()));
    }
    if z.rows() != data.len() || z.cols() != comps.len() {
        return Err(Error::Dimension(format!(
            "indicator matrix is {}×{}, expected {}×{}",
            z.rows(),
            z.cols(),
            data.len(),
            comps.len()
        )));
    }
    for s in data {
        model.check_sample(s)?;
    }
    Ok(())
}

impl<'a, F: Family> Objective<'a, F> {
    pub fn new(model: &'a F, data: &[F::Sample], comps: &ComponentSet, z: &IndicatorMatrix) -> Result<Self> {
        check_inputs(model, data, comps, z)?;
        let plans = plan_all(model, comps)?;
        let mut index: HashMap<(&F::Sample, &[bool]), usize> = HashMap::new();
        let mut rows: Vec<Row<F::Sample>> = Vec::new();
        for (i, sample) in data.iter().enumerate() {
            let zrow = z.row(i);
            if !zrow.iter().any(|&b| b) {
                continue;
            }
            match index.get(&(sample, zrow)) {
                Some(&r) => rows[r].weight += 1.0,
                None => {
                    index.insert((sample, zrow), rows.len());
                    rows.push(Row {
                        sample: sample.clone(),
                        selected: (0..zrow.len()).filter(|&j| zrow[j]).map(|j| (j, 1.0)).collect(),
                        weight: 1.0,
                    });
                }
            }
        }
        Ok(Objective {
            model,
            rows,
            plans,
            beta: comps.beta.clone(),
            n: data.len(),
            norm: data.len() as f64,
        })
    }

    /// Expected objective under an explicit distribution over samples, with every
    /// component weighted by `β_j · multipliers[j]` (for example `β_j λ_j`).
    pub fn from_distribution(
        model: &'a F,
        states: &[F::Sample],
        probs: &[f64],
        comps: &ComponentSet,
        multipliers: &[f64],
    ) -> Result<Self> {
        comps.validate()?;
        if states.len() != probs.len() || multipliers.len() != comps.len() {
            return Err(Error::Dimension("distribution or multiplier lengths disagree".into()));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Contract("probabilities must be non-negative".into()));
        }
        let plans = plan_all(model, comps)?;
        let mut rows = Vec::new();
        for (s, &p) in states.iter().zip(probs) {
            model.check_sample(s)?;
            if p > 0.0 {
                rows.push(Row {
                    sample: s.clone(),
                    selected: multipliers.iter().copied().enumerate().filter(|(_, m)| *m != 0.0).collect(),
                    weight: p,
                });
            }
        }
        Ok(Objective {
            model,
            rows,
            plans,
            beta: comps.beta.clone(),
            n: states.len(),
            norm: 1.0,
        })
    }

    pub fn model(&self) -> &F {
        self.model
    }

    pub fn num_samples(&self) -> usize {
        self.n
    }

    /// Number of distinct (sample, selection) rows actually evaluated.
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn set_beta(&mut self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.beta.len() {
            return Err(Error::Dimension("β length differs from the component count".into()));
        }
        if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Contract("component weights must be positive".into()));
        }
        self.beta = beta.to_vec();
        Ok(())
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        let prep = self.model.prepare(theta)?;
        let parts: Vec<f64> = self
            .rows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut v = 0.0;
                for row in chunk {
                    for &(j, m) in &row.selected {
                        v += row.weight * m * self.beta[j] * self.model.component_log_prob(&prep, &self.plans[j], &row.sample);
                    }
                }
                v
            })
            .collect();
        Ok(parts.iter().sum::<f64>() / self.norm)
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let prep = self.model.prepare(theta)?;
        let inv_n = 1.0 / self.norm;
        let parts: Vec<(f64, F::Accum)> = self
            .rows
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = self.model.new_accum();
                let mut v = 0.0;
                for row in chunk {
                    for &(j, m) in &row.selected {
                        let w = row.weight * m * self.beta[j] * inv_n;
                        v += w * self.model.accumulate_component(&prep, &self.plans[j], &row.sample, w, &mut acc);
                    }
                }
                (v, acc)
            })
            .collect();
        let mut total = 0.0;
        let mut acc = self.model.new_accum();
        for (v, a) in parts {
            total += v;
            self.model.merge_accum(&mut acc, a);
        }
        Ok((total, self.model.finish_accum(&prep, acc)))
    }

    pub fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_gradient(theta)?.1)
    }
}

/// `(1/n) Σ_i Σ_j β_j Z_ij log p_θ(x_A | x_B)`.
pub fn scl_value<F: Family>(
    model: &F,
    theta: &[f64],
    data: &[F::Sample],
    comps: &ComponentSet,
    z: &IndicatorMatrix,
) -> Result<f64> {
    Objective::new(model, data, comps, z)?.value(theta)
}

/// Gradient of [`scl_value`] with respect to θ.
pub fn scl_gradient<F: Family>(
    model: &F,
    theta: &[f64],
    data: &[F::Sample],
    comps: &ComponentSet,
    z: &IndicatorMatrix,
) -> Result<Vec<f64>> {
    Objective::new(model, data, comps, z)?.gradient(theta)
}

fn component_costs<F: Family>(model: &F, plans: &[F::Plan], shared: &[usize], sample: &F::Sample) -> Vec<Flops> {
    plans
        .iter()
        .zip(shared)
        .map(|(p, &s)| model.component_flops(p, sample, s))
        .collect()
}

/// FLOP counts of evaluating the objective once over `data` with selections `z`.
pub fn flop_count<F: Family>(
    model: &F,
    data: &[F::Sample],
    comps: &ComponentSet,
    z: &IndicatorMatrix,
) -> Result<FlopLedger> {
    if data.is_empty() {
        return Ok(FlopLedger {
            per_component: vec![0; comps.len()],
            ..FlopLedger::default()
        });
    }
    check_inputs(model, data, comps, z)?;
    let plans = plan_all(model, comps)?;
    let shared = shared_counts(model, &plans);
    let mut ledger = FlopLedger {
        per_component: vec![0; comps.len()],
        per_sample: vec![0; data.len()],
        objective_total: 0,
        gradient_total: 0,
    };
    for (i, sample) in data.iter().enumerate() {
        let costs = component_costs(model, &plans, &shared, sample);
        for (j, c) in costs.iter().enumerate() {
            if z.get(i, j) {
                ledger.per_component[j] += c.objective;
                ledger.per_sample[i] += c.objective;
                ledger.objective_total += c.objective;
                ledger.gradient_total += c.gradient;
            }
        }
    }
    Ok(ledger)
}

/// Expected objective FLOPs `Σ_i Σ_j λ_j cost_j(x_i)` under a selection policy.
pub fn expected_flops<F: Family>(
    model: &F,
    data: &[F::Sample],
    comps: &ComponentSet,
    policy: &SelectionPolicy,
) -> Result<f64> {
    policy.validate(comps.len())?;
    let plans = plan_all(model, comps)?;
    let shared = shared_counts(model, &plans);
    let mut total = 0.0;
    for sample in data {
        model.check_sample(sample)?;
        let costs = component_costs(model, &plans, &shared, sample);
        total += costs
            .iter()
            .zip(&policy.lambda)
            .map(|(c, l)| l * c.objective as f64)
            .sum::<f64>();
    }
    Ok(total)
}
