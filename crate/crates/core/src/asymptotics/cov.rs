use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrf::{Family, GraphModel};
use crate::scl::{plan_all, ComponentSet, SelectionPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovSource {
    /// Expectations taken over the full model distribution at θ₀.
    Exact,
    /// Averages over a dataset, with an estimate plugged in for θ₀.
    Empirical,
    /// Supplied directly as blocks.
    Explicit,
}

#[derive(Debug, Clone)]
enum Storage {
    /// Probability-weighted centered score points; each point holds the `k` score
    /// vectors back to back.
    Points { weights: Vec<f64>, points: Vec<Vec<f64>> },
    /// Row-major `k × k` grid of `r × r` blocks.
    Blocks(Vec<DMatrix<f64>>),
}

/// Joint covariance of the component score vectors,
/// `K^(ij) = Cov(∇S(A_i,B_i), ∇S(A_j,B_j))`.
#[derive(Debug, Clone)]
pub struct ScoreCov {
    k: usize,
    r: usize,
    source: CovSource,
    storage: Storage,
    /// `diag[(i·k + j)·r + l] = K^(ij)_ll`.
    diag: Vec<f64>,
    fisher: Option<DMatrix<f64>>,
}

/// Coefficients `C_ij` of an aggregate `Σ_ij C_ij K^(ij)`, written as a sum of signed
/// rank-one terms plus a diagonal so that point storage never needs all `k²` pairs.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub terms: Vec<(f64, Vec<f64>)>,
    pub diag: Vec<f64>,
}

impl Quadratic {
    /// `Σ_j w_j K^(jj)`.
    pub fn diagonal(w: Vec<f64>) -> Self {
        Quadratic {
            terms: Vec::new(),
            diag: w,
        }
    }

    /// `Σ_ij w_i w_j K^(ij) = Var(Σ_j w_j ∇S_j)`.
    pub fn outer(w: Vec<f64>) -> Self {
        let k = w.len();
        Quadratic {
            terms: vec![(1.0, w)],
            diag: vec![0.0; k],
        }
    }

    /// `Σ_ij β_i β_j E[Z_i Z_j] K^(ij)` for a selection policy.
    pub fn policy(beta: &[f64], policy: &SelectionPolicy) -> Self {
        let w: Vec<f64> = beta.iter().zip(&policy.lambda).map(|(b, l)| b * l).collect();
        let k = w.len();
        let mut terms = vec![(1.0, w.clone())];
        for block in policy_blocks(policy) {
            let mut v = vec![0.0; k];
            for &j in &block {
                v[j] = w[j];
            }
            terms.push((-1.0, v));
        }
        let diag = beta.iter().zip(&policy.lambda).map(|(b, l)| b * b * l).collect();
        Quadratic { terms, diag }
    }

    pub fn coef(&self, i: usize, j: usize) -> f64 {
        let mut c: f64 = self.terms.iter().map(|(s, v)| s * v[i] * v[j]).sum();
        if i == j {
            c += self.diag[i];
        }
        c
    }
}

fn policy_blocks(policy: &SelectionPolicy) -> Vec<Vec<usize>> {
    use crate::scl::PolicyFamily::*;
    match policy.family {
        Independence => (0..policy.lambda.len()).map(|j| vec![j]).collect(),
        Multinomial => vec![(0..policy.lambda.len()).collect()],
        ProductOfMultinomials => policy.blocks.clone(),
    }
}

impl ScoreCov {
    /// Builds the covariance from raw (uncentered) score points with non-negative weights.
    pub fn from_points(
        k: usize,
        r: usize,
        source: CovSource,
        weights: Vec<f64>,
        mut points: Vec<Vec<f64>>,
        fisher: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if weights.len() != points.len() || points.iter().any(|p| p.len() != k * r) {
            return Err(Error::Dimension("score points do not match k·r".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Dimension("score covariance needs positive total weight".into()));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut mean = vec![0.0; k * r];
        for (w, p) in weights.iter().zip(&points) {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += w * v;
            }
        }
        for p in points.iter_mut() {
            for (v, m) in p.iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        let mut diag = vec![0.0; k * k * r];
        for (w, p) in weights.iter().zip(&points) {
            for i in 0..k {
                for j in 0..k {
                    let out = &mut diag[(i * k + j) * r..(i * k + j + 1) * r];
                    for (l, o) in out.iter_mut().enumerate() {
                        *o += w * p[i * r + l] * p[j * r + l];
                    }
                }
            }
        }
        Ok(ScoreCov {
            k,
            r,
            source,
            storage: Storage::Points { weights, points },
            diag,
            fisher,
        })
    }

    /// Builds the covariance from explicit blocks, row-major over `(i, j)`.
    pub fn from_blocks(k: usize, blocks: Vec<DMatrix<f64>>, fisher: Option<DMatrix<f64>>) -> Result<Self> {
        if k == 0 || blocks.len() != k * k {
            return Err(Error::Dimension(format!("expected {} blocks", k * k)));
        }
        let r = blocks[0].nrows();
        if blocks.iter().any(|b| b.nrows() != r || b.ncols() != r) {
            return Err(Error::Dimension("blocks must all be r×r".into()));
        }
        for i in 0..k {
            for j in 0..k {
                let d = &blocks[i * k + j] - blocks[j * k + i].transpose();
                if d.amax() > 1e-10 * (1.0 + blocks[i * k + j].amax()) {
                    return Err(Error::Dimension(format!("K^({i}{j}) is not the transpose of K^({j}{i})")));
                }
            }
        }
        let mut diag = vec![0.0; k * k * r];
        for (b, block) in blocks.iter().enumerate() {
            for l in 0..r {
                diag[b * r + l] = block[(l, l)];
            }
        }
        Ok(ScoreCov {
            k,
            r,
            source: CovSource::Explicit,
            storage: Storage::Blocks(blocks),
            diag,
            fisher,
        })
    }

    pub fn num_components(&self) -> usize {
        self.k
    }

    pub fn num_params(&self) -> usize {
        self.r
    }

    pub fn source(&self) -> CovSource {
        self.source
    }

    /// Fisher information `Var(f(X))` when the covariance came from an exact computation.
    pub fn fisher(&self) -> Option<&DMatrix<f64>> {
        self.fisher.as_ref()
    }

    /// `K^(ij)_ll`.
    pub fn diag_entry(&self, i: usize, j: usize, l: usize) -> f64 {
        self.diag[(i * self.k + j) * self.r + l]
    }

    /// The dense block `K^(ij)`.
    pub fn block(&self, i: usize, j: usize) -> DMatrix<f64> {
        let r = self.r;
        match &self.storage {
            Storage::Blocks(b) => b[i * self.k + j].clone(),
            Storage::Points { weights, points } => {
                let mut out = DMatrix::zeros(r, r);
                for (w, p) in weights.iter().zip(points) {
                    let a = &p[i * r..(i + 1) * r];
                    let b = &p[j * r..(j + 1) * r];
                    for (x, &av) in a.iter().enumerate() {
                        if av == 0.0 {
                            continue;
                        }
                        for (y, &bv) in b.iter().enumerate() {
                            out[(x, y)] += w * av * bv;
                        }
                    }
                }
                out
            }
        }
    }

    /// Dense copy whose off-diagonal entries (within every block) are scaled by `t`.
    pub fn scale_off_diagonal(&self, t: f64) -> ScoreCov {
        let mut blocks = Vec::with_capacity(self.k * self.k);
        for i in 0..self.k {
            for j in 0..self.k {
                let mut b = self.block(i, j);
                for x in 0..self.r {
                    for y in 0..self.r {
                        if x != y {
                            b[(x, y)] *= t;
                        }
                    }
                }
                blocks.push(b);
            }
        }
        ScoreCov {
            k: self.k,
            r: self.r,
            source: self.source,
            storage: Storage::Blocks(blocks),
            diag: self.diag.clone(),
            fisher: self.fisher.clone(),
        }
    }

    /// Dense aggregate `Σ_ij C_ij K^(ij)`.
    pub fn aggregate(&self, q: &Quadratic) -> DMatrix<f64> {
        let r = self.r;
        let k = self.k;
        let mut out = DMatrix::zeros(r, r);
        match &self.storage {
            Storage::Blocks(blocks) => {
                for i in 0..k {
                    for j in 0..k {
                        let c = q.coef(i, j);
                        if c != 0.0 {
                            out += &blocks[i * k + j] * c;
                        }
                    }
                }
            }
            Storage::Points { weights, points } => {
                let mut u = vec![0.0; r];
                for (w, p) in weights.iter().zip(points) {
                    for (sign, v) in &q.terms {
                        u.iter_mut().for_each(|x| *x = 0.0);
                        for (j, &vj) in v.iter().enumerate() {
                            if vj != 0.0 {
                                for (x, s) in u.iter_mut().zip(&p[j * r..(j + 1) * r]) {
                                    *x += vj * s;
                                }
                            }
                        }
                        rank_one(&mut out, w * sign, &u);
                    }
                    for (j, &d) in q.diag.iter().enumerate() {
                        if d != 0.0 {
                            rank_one(&mut out, w * d, &p[j * r..(j + 1) * r]);
                        }
                    }
                }
            }
        }
        out
    }

    /// Diagonal of [`ScoreCov::aggregate`], computed from the stored diagonals only.
    pub fn aggregate_diag(&self, q: &Quadratic) -> Vec<f64> {
        let (k, r) = (self.k, self.r);
        let mut out = vec![0.0; r];
        for i in 0..k {
            for j in 0..k {
                let c = q.coef(i, j);
                if c == 0.0 {
                    continue;
                }
                let d = &self.diag[(i * k + j) * r..(i * k + j + 1) * r];
                for (o, v) in out.iter_mut().zip(d) {
                    *o += c * v;
                }
            }
        }
        out
    }
}

fn rank_one(out: &mut DMatrix<f64>, c: f64, u: &[f64]) {
    if c == 0.0 {
        return;
    }
    for (x, &ux) in u.iter().enumerate() {
        if ux == 0.0 {
            continue;
        }
        for (y, &uy) in u.iter().enumerate() {
            out[(x, y)] += c * ux * uy;
        }
    }
}

/// Exact score covariance at θ₀ by enumerating the model's state space.
pub fn score_cov_exact(model: &GraphModel, theta0: &[f64], comps: &ComponentSet) -> Result<ScoreCov> {
    comps.validate()?;
    let table = model.joint_table(theta0)?;
    let prep = model.prepare(theta0)?;
    let plans = plan_all(model, comps)?;
    let r = model.num_params();
    let k = comps.len();
    let mut weights = Vec::with_capacity(table.len());
    let mut points = Vec::with_capacity(table.len());
    for (x, p) in &table {
        let mut point = Vec::with_capacity(k * r);
        for plan in &plans {
            point.extend(model.component_score(&prep, plan, x));
        }
        weights.push(*p);
        points.push(point);
    }
    let fisher = model.fisher_information(theta0)?;
    ScoreCov::from_points(k, r, CovSource::Exact, weights, points, Some(fisher))
}

/// Training-set plug-in score covariance at `theta`.
pub fn score_cov_empirical<F: Family>(
    model: &F,
    theta: &[f64],
    data: &[F::Sample],
    comps: &ComponentSet,
) -> Result<ScoreCov> {
    comps.validate()?;
    if data.is_empty() {
        return Err(Error::Dimension("empirical score covariance needs data".into()));
    }
    let mut counts: HashMap<&F::Sample, usize> = HashMap::new();
    let mut order = Vec::new();
    for s in data {
        model.check_sample(s)?;
        let c = counts.entry(s).or_insert(0);
        if *c == 0 {
            order.push(s);
        }
        *c += 1;
    }
    let prep = model.prepare(theta)?;
    let plans = plan_all(model, comps)?;
    let r = model.num_params();
    let k = comps.len();
    let mut weights = Vec::with_capacity(order.len());
    let mut points = Vec::with_capacity(order.len());
    for s in order {
        let mut point = Vec::with_capacity(k * r);
        for plan in &plans {
            point.extend(model.component_score(&prep, plan, s));
        }
        weights.push(counts[s] as f64);
        points.push(point);
    }
    ScoreCov::from_points(k, r, CovSource::Empirical, weights, points, None)
}
