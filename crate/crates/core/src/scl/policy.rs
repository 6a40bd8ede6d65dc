use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ComponentSet;
use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyFamily {
    /// Each component is selected independently with probability `λ_j`.
    Independence,
    /// Exactly one component is selected, component `j` with probability `λ_j`.
    Multinomial,
    /// Exactly one component per block.
    ProductOfMultinomials,
}

/// Distribution of the per-sample selection indicators `Z`. Also the JSON policy spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub family: PolicyFamily,
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<Vec<usize>>,
}

/// `n × k` binary selection matrix, row `i` the indicators of sample `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl IndicatorMatrix {
    pub fn ones(rows: usize, cols: usize) -> Self {
        IndicatorMatrix {
            rows,
            cols,
            data: vec![true; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        IndicatorMatrix {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Dimension("indicator rows differ in length".into()));
        }
        Ok(IndicatorMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[bool] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.cols + j]
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &z) in out.iter_mut().zip(self.row(i)) {
                if z {
                    *o += 1.0;
                }
            }
        }
        out.iter_mut().for_each(|o| *o /= self.rows.max(1) as f64);
        out
    }

    /// Keeps only the listed columns.
    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for i in 0..self.rows {
            data.extend(keep.iter().map(|&j| self.get(i, j)));
        }
        IndicatorMatrix {
            rows: self.rows,
            cols: keep.len(),
            data,
        }
    }
}

impl SelectionPolicy {
    /// Every component always selected.
    pub fn always(k: usize) -> Self {
        SelectionPolicy {
            family: PolicyFamily::Independence,
            lambda: vec![1.0; k],
            blocks: Vec::new(),
        }
    }

    pub fn independence(lambda: Vec<f64>) -> Result<Self> {
        let p = SelectionPolicy {
            family: PolicyFamily::Independence,
            lambda,
            blocks: Vec::new(),
        };
        p.validate(p.lambda.len())?;
        Ok(p)
    }

    pub fn multinomial(lambda: Vec<f64>) -> Result<Self> {
        let p = SelectionPolicy {
            family: PolicyFamily::Multinomial,
            lambda,
            blocks: Vec::new(),
        };
        p.validate(p.lambda.len())?;
        Ok(p)
    }

    pub fn product_of_multinomials(lambda: Vec<f64>, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let p = SelectionPolicy {
            family: PolicyFamily::ProductOfMultinomials,
            lambda,
            blocks,
        };
        p.validate(p.lambda.len())?;
        Ok(p)
    }

    /// Independent selection of a first group of components with probability `p_first`
    /// and the remaining ones with `p_second`.
    pub fn mixed(first: usize, p_first: f64, second: usize, p_second: f64) -> Result<Self> {
        let mut lambda = vec![p_first; first];
        lambda.extend(std::iter::repeat(p_second).take(second));
        Self::independence(lambda)
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    fn effective_blocks(&self) -> Vec<Vec<usize>> {
        match self.family {
            PolicyFamily::Independence => (0..self.lambda.len()).map(|j| vec![j]).collect(),
            PolicyFamily::Multinomial => vec![(0..self.lambda.len()).collect()],
            PolicyFamily::ProductOfMultinomials => self.blocks.clone(),
        }
    }

    /// Checks the family invariants against a component count `k`; every `λ_j` must be
    /// strictly positive (see [`prune_zero_lambda`]).
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.lambda.len() != k {
            return Err(Error::Policy(format!(
                "lambda has {} entries for {k} components",
                self.lambda.len()
            )));
        }
        if k == 0 {
            return Err(Error::Policy("policy selects from no components".into()));
        }
        if let Some(l) = self.lambda.iter().find(|l| !(l.is_finite() && **l > 0.0 && **l <= 1.0)) {
            return Err(Error::Policy(format!("selection probability {l} outside (0, 1]")));
        }
        match self.family {
            PolicyFamily::Independence => {}
            PolicyFamily::Multinomial => {
                let s: f64 = self.lambda.iter().sum();
                if (s - 1.0).abs() > SUM_TOL {
                    return Err(Error::Policy(format!("multinomial lambda sums to {s}, not 1")));
                }
            }
            PolicyFamily::ProductOfMultinomials => {
                let mut seen = vec![false; k];
                for block in &self.blocks {
                    if block.is_empty() {
                        return Err(Error::Policy("empty block".into()));
                    }
                    for &j in block {
                        if j >= k || seen[j] {
                            return Err(Error::Policy(format!(
                                "blocks must partition 0..{k}; index {j} is out of range or repeated"
                            )));
                        }
                        seen[j] = true;
                    }
                    let s: f64 = block.iter().map(|&j| self.lambda[j]).sum();
                    if (s - 1.0).abs() > SUM_TOL {
                        return Err(Error::Policy(format!("block {block:?} lambda sums to {s}, not 1")));
                    }
                }
                if let Some(j) = seen.iter().position(|s| !s) {
                    return Err(Error::Policy(format!("component {j} belongs to no block")));
                }
            }
        }
        Ok(())
    }

    /// `E[Z_i Z_j]` for every pair of components.
    pub fn second_moments(&self) -> DMatrix<f64> {
        let k = self.lambda.len();
        let mut block_of = vec![0; k];
        for (b, block) in self.effective_blocks().iter().enumerate() {
            for &j in block {
                block_of[j] = b;
            }
        }
        DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                self.lambda[i]
            } else if block_of[i] == block_of[j] {
                0.0
            } else {
                self.lambda[i] * self.lambda[j]
            }
        })
    }

    /// Draws `n` iid indicator rows. Draws never look at data, so the same seed gives the
    /// same matrix regardless of which samples it is paired with.
    pub fn draw_indicators(&self, n: usize, seed: u64) -> Result<IndicatorMatrix> {
        let k = self.lambda.len();
        self.validate(k)?;
        let blocks = self.effective_blocks();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = IndicatorMatrix::zeros(n, k);
        for i in 0..n {
            let row = &mut z.data[i * k..(i + 1) * k];
            match self.family {
                PolicyFamily::Independence => {
                    for (slot, &l) in row.iter_mut().zip(&self.lambda) {
                        *slot = l >= 1.0 || rng.gen::<f64>() < l;
                    }
                }
                _ => {
                    for block in &blocks {
                        let u: f64 = rng.gen();
                        let mut acc = 0.0;
                        let mut pick = *block.last().unwrap();
                        for &j in block {
                            acc += self.lambda[j];
                            if u < acc {
                                pick = j;
                                break;
                            }
                        }
                        row[pick] = true;
                    }
                }
            }
        }
        Ok(z)
    }

    /// Expected number of selected components per sample.
    pub fn expected_selected(&self) -> f64 {
        self.lambda.iter().sum()
    }
}

/// Drops components whose selection probability is exactly zero, returning the reduced
/// component set, policy, and the indices that were kept.
pub fn prune_zero_lambda(
    comps: &ComponentSet,
    policy: &SelectionPolicy,
) -> Result<(ComponentSet, SelectionPolicy, Vec<usize>)> {
    if policy.lambda.len() != comps.len() {
        return Err(Error::Policy(format!(
            "lambda has {} entries for {} components",
            policy.lambda.len(),
            comps.len()
        )));
    }
    let keep: Vec<usize> = (0..comps.len()).filter(|&j| policy.lambda[j] != 0.0).collect();
    let mut remap = vec![usize::MAX; comps.len()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let blocks = policy
        .blocks
        .iter()
        .map(|b| b.iter().filter(|&&j| j < remap.len() && remap[j] != usize::MAX).map(|&j| remap[j]).collect::<Vec<_>>())
        .filter(|b| !b.is_empty())
        .collect();
    let reduced = SelectionPolicy {
        family: policy.family,
        lambda: keep.iter().map(|&j| policy.lambda[j]).collect(),
        blocks,
    };
    reduced.validate(keep.len())?;
    Ok((comps.subset(&keep), reduced, keep))
}
