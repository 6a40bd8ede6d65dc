use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Assignment, Factor, GraphModel, ModelKind};
use super::{Family, Flops};
use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use crate::scl::Component;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    /// Generative chain over (label, token) pairs; the token is part of the modeled state.
    BoltzmannChain,
    /// Linear-chain CRF; observations are conditioned on.
    Crf,
}

/// One labelled sequence. For a Boltzmann chain every position carries exactly one token;
/// for a CRF each position carries its list of active binary features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sequence {
    pub labels: Vec<usize>,
    pub obs: Vec<Vec<u32>>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Chain model with transition matrix tied across positions and emission weights tied
/// across positions.
///
/// Parameter layout: `(S+1)·S` transition weights first (row `S` is the fixed start
/// state), then emission weights. A Boltzmann chain has one emission weight per
/// (label, token); a CRF has one per supported (feature, label) pair.
#[derive(Debug, Clone)]
pub struct ChainModel {
    kind: ChainKind,
    labels: usize,
    observations: usize,
    emit_slots: Vec<Vec<(usize, usize)>>,
    num_params: usize,
}

#[derive(Debug, Clone)]
pub struct ChainPrepared {
    theta: Vec<f64>,
    emit_lognorm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainPlan {
    Full,
    Window(usize),
}

#[derive(Debug, Clone)]
pub struct ChainAccum {
    grad: Vec<f64>,
    occupancy: Vec<f64>,
}

struct Segment {
    log_z: f64,
    node: Vec<f64>,
}

impl ChainModel {
    pub fn boltzmann_chain(labels: usize, vocab: usize) -> Result<Self> {
        if labels < 2 || vocab < 1 {
            return Err(Error::Dimension("a chain needs ≥ 2 labels and ≥ 1 token".into()));
        }
        let base = (labels + 1) * labels;
        let emit_slots = (0..vocab)
            .map(|o| (0..labels).map(|s| (s, base + s * vocab + o)).collect())
            .collect();
        Ok(ChainModel {
            kind: ChainKind::BoltzmannChain,
            labels,
            observations: vocab,
            emit_slots,
            num_params: base + labels * vocab,
        })
    }

    /// CRF with one weight for every (feature, label) combination.
    pub fn crf_dense(labels: usize, features: usize) -> Result<Self> {
        let pairs: Vec<(usize, usize)> = (0..features)
            .flat_map(|f| (0..labels).map(move |s| (f, s)))
            .collect();
        Self::crf(labels, features, &pairs)
    }

    /// CRF restricted to the given (feature, label) pairs; any other combination has no
    /// weight.
    pub fn crf(labels: usize, features: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if labels < 2 {
            return Err(Error::Dimension("a chain needs ≥ 2 labels".into()));
        }
        let mut emit_slots: Vec<Vec<(usize, usize)>> = vec![Vec::new(); features];
        let mut next = (labels + 1) * labels;
        for &(f, s) in pairs {
            if f >= features || s >= labels {
                return Err(Error::Dimension(format!(
                    "emission pair ({f}, {s}) out of range {features}×{labels}"
                )));
            }
            if emit_slots[f].iter().any(|&(l, _)| l == s) {
                return Err(Error::Dimension(format!("duplicate emission pair ({f}, {s})")));
            }
            emit_slots[f].push((s, next));
            next += 1;
        }
        Ok(ChainModel {
            kind: ChainKind::Crf,
            labels,
            observations: features,
            emit_slots,
            num_params: next,
        })
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    pub fn num_labels(&self) -> usize {
        self.labels
    }

    pub fn num_observations(&self) -> usize {
        self.observations
    }

    pub fn num_transitions(&self) -> usize {
        (self.labels + 1) * self.labels
    }

    /// Index of the transition weight `prev → cur`; `None` is the start state.
    pub fn trans_index(&self, prev: Option<usize>, cur: usize) -> usize {
        prev.unwrap_or(self.labels) * self.labels + cur
    }

    /// Index of the emission weight for (observation, label), if it exists.
    pub fn emit_index(&self, obs: usize, label: usize) -> Option<usize> {
        self.emit_slots
            .get(obs)?
            .iter()
            .find(|&&(l, _)| l == label)
            .map(|&(_, p)| p)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params {
            return Err(Error::Dimension(format!(
                "θ has length {} but the chain has {} parameters",
                theta.len(),
                self.num_params
            )));
        }
        Ok(())
    }

    #[inline]
    fn trans(&self, theta: &[f64], prev: usize, cur: usize) -> f64 {
        theta[prev * self.labels + cur]
    }

    /// Per-position label scores contributed by the observation (CRF) or by the
    /// marginalized token (Boltzmann chain).
    fn unaries(&self, prep: &ChainPrepared, seq: &Sequence) -> Vec<f64> {
        let s = self.labels;
        let mut out = vec![0.0; seq.len() * s];
        match self.kind {
            ChainKind::BoltzmannChain => {
                for row in out.chunks_mut(s) {
                    row.copy_from_slice(&prep.emit_lognorm);
                }
            }
            ChainKind::Crf => {
                for (row, obs) in out.chunks_mut(s).zip(&seq.obs) {
                    for &f in obs {
                        for &(l, p) in &self.emit_slots[f as usize] {
                            row[l] += prep.theta[p];
                        }
                    }
                }
            }
        }
        out
    }

    /// Score of the observed labels (and tokens) at positions `lo..hi`, including the
    /// transition in from the left boundary and out to the right boundary.
    fn observed_score(&self, prep: &ChainPrepared, seq: &Sequence, unary: &[f64], lo: usize, hi: usize) -> f64 {
        let s = self.labels;
        let th = &prep.theta;
        let mut total = 0.0;
        for t in lo..hi {
            let prev = if t == 0 { s } else { seq.labels[t - 1] };
            let y = seq.labels[t];
            total += self.trans(th, prev, y);
            total += match self.kind {
                ChainKind::BoltzmannChain => th[self.emit_slots[seq.obs[t][0] as usize][y].1],
                ChainKind::Crf => unary[t * s + y],
            };
        }
        if hi < seq.len() {
            total += self.trans(th, seq.labels[hi - 1], seq.labels[hi]);
        }
        total
    }

    fn add_observed(&self, seq: &Sequence, lo: usize, hi: usize, w: f64, grad: &mut [f64]) {
        let s = self.labels;
        for t in lo..hi {
            let prev = if t == 0 { s } else { seq.labels[t - 1] };
            let y = seq.labels[t];
            grad[prev * s + y] += w;
            for &f in &seq.obs[t] {
                if let Some(&(_, p)) = self.emit_slots[f as usize].iter().find(|&&(l, _)| l == y) {
                    grad[p] += w;
                }
            }
        }
        if hi < seq.len() {
            grad[seq.labels[hi - 1] * s + seq.labels[hi]] += w;
        }
    }

    /// Forward–backward over a segment of `unary.len()/S` free labels with the label to
    /// the left fixed to `left` (`S` = start) and optionally the label to the right fixed.
    /// Adds `-w` times the expected transition counts into `trans_grad` when given.
    fn segment(
        &self,
        theta: &[f64],
        unary: &[f64],
        left: usize,
        right: Option<usize>,
        trans_grad: Option<(&mut [f64], f64)>,
    ) -> Segment {
        let s = self.labels;
        let len = unary.len() / s;
        let mut alpha = vec![0.0; len * s];
        let mut buf = vec![0.0; s];
        for y in 0..s {
            alpha[y] = self.trans(theta, left, y) + unary[y];
        }
        for t in 1..len {
            for y in 0..s {
                for a in 0..s {
                    buf[a] = alpha[(t - 1) * s + a] + self.trans(theta, a, y);
                }
                alpha[t * s + y] = log_sum_exp(&buf) + unary[t * s + y];
            }
        }
        let mut beta = vec![0.0; len * s];
        if let Some(r) = right {
            for y in 0..s {
                beta[(len - 1) * s + y] = self.trans(theta, y, r);
            }
        }
        for t in (0..len.saturating_sub(1)).rev() {
            for a in 0..s {
                for y in 0..s {
                    buf[y] = self.trans(theta, a, y) + unary[(t + 1) * s + y] + beta[(t + 1) * s + y];
                }
                beta[t * s + a] = log_sum_exp(&buf);
            }
        }
        let last: Vec<f64> = (0..s)
            .map(|y| alpha[(len - 1) * s + y] + beta[(len - 1) * s + y])
            .collect();
        let log_z = log_sum_exp(&last);
        let node: Vec<f64> = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b - log_z).exp())
            .collect();
        if let Some((grad, w)) = trans_grad {
            for y in 0..s {
                grad[left * s + y] -= w * node[y];
            }
            if let Some(r) = right {
                for y in 0..s {
                    grad[y * s + r] -= w * node[(len - 1) * s + y];
                }
            }
            for t in 1..len {
                for a in 0..s {
                    let lhs = alpha[(t - 1) * s + a];
                    for y in 0..s {
                        let v = lhs + self.trans(theta, a, y) + unary[t * s + y] + beta[t * s + y] - log_z;
                        grad[a * s + y] -= w * v.exp();
                    }
                }
            }
        }
        Segment { log_z, node }
    }

    fn windows(plan: ChainPlan, len: usize) -> impl Iterator<Item = (usize, usize)> {
        let width = match plan {
            ChainPlan::Full => len,
            ChainPlan::Window(order) => order.min(len),
        };
        (0..=len - width).map(move |lo| (lo, lo + width))
    }

    fn evaluate(
        &self,
        prep: &ChainPrepared,
        plan: ChainPlan,
        seq: &Sequence,
        mut grad: Option<(&mut ChainAccum, f64)>,
    ) -> f64 {
        let s = self.labels;
        let unary = self.unaries(prep, seq);
        let mut total = 0.0;
        for (lo, hi) in Self::windows(plan, seq.len()) {
            let left = if lo == 0 { s } else { seq.labels[lo - 1] };
            let right = (hi < seq.len()).then(|| seq.labels[hi]);
            let num = self.observed_score(prep, seq, &unary, lo, hi);
            let seg_unary = &unary[lo * s..hi * s];
            match grad.as_mut() {
                None => {
                    let seg = self.segment(&prep.theta, seg_unary, left, right, None);
                    total += num - seg.log_z;
                }
                Some((acc, w)) => {
                    let w = *w;
                    self.add_observed(seq, lo, hi, w, &mut acc.grad);
                    let seg = self.segment(&prep.theta, seg_unary, left, right, Some((&mut acc.grad, w)));
                    total += num - seg.log_z;
                    match self.kind {
                        ChainKind::BoltzmannChain => {
                            for row in seg.node.chunks(s) {
                                for (o, p) in acc.occupancy.iter_mut().zip(row) {
                                    *o += w * p;
                                }
                            }
                        }
                        ChainKind::Crf => {
                            for (k, row) in seg.node.chunks(s).enumerate() {
                                for &f in &seq.obs[lo + k] {
                                    for &(l, p) in &self.emit_slots[f as usize] {
                                        acc.grad[p] -= w * row[l];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        total
    }

    /// `log p(sequence)` for a Boltzmann chain, `log p(labels | obs)` for a CRF.
    pub fn log_likelihood(&self, theta: &[f64], seq: &Sequence) -> Result<f64> {
        self.check_sample(seq)?;
        let prep = self.prepare(theta)?;
        Ok(self.evaluate(&prep, ChainPlan::Full, seq, None))
    }

    /// Log-partition of a Boltzmann chain of the given length by dynamic programming.
    pub fn log_partition(&self, theta: &[f64], len: usize) -> Result<f64> {
        if self.kind != ChainKind::BoltzmannChain {
            return Err(Error::Contract("a CRF's partition function depends on the observations".into()));
        }
        if len == 0 {
            return Err(Error::Dimension("empty chain".into()));
        }
        let prep = self.prepare(theta)?;
        let unary: Vec<f64> = (0..len).flat_map(|_| prep.emit_lognorm.iter().copied()).collect();
        Ok(self.segment(theta, &unary, self.labels, None, None).log_z)
    }

    /// Log-partition of a CRF conditioned on an observation sequence.
    pub fn conditional_log_partition(&self, theta: &[f64], obs: &[Vec<u32>]) -> Result<f64> {
        if self.kind != ChainKind::Crf {
            return Err(Error::Contract("conditional partition applies to CRFs".into()));
        }
        let seq = Sequence {
            labels: vec![0; obs.len()],
            obs: obs.to_vec(),
        };
        self.check_sample(&seq)?;
        let prep = self.prepare(theta)?;
        let unary = self.unaries(&prep, &seq);
        Ok(self.segment(theta, &unary, self.labels, None, None).log_z)
    }

    fn ffbs(&self, theta: &[f64], unary: &[f64], rng: &mut ChaCha8Rng) -> Vec<usize> {
        let s = self.labels;
        let len = unary.len() / s;
        let mut alpha = vec![0.0; len * s];
        let mut buf = vec![0.0; s];
        for y in 0..s {
            alpha[y] = self.trans(theta, s, y) + unary[y];
        }
        for t in 1..len {
            for y in 0..s {
                for a in 0..s {
                    buf[a] = alpha[(t - 1) * s + a] + self.trans(theta, a, y);
                }
                alpha[t * s + y] = log_sum_exp(&buf) + unary[t * s + y];
            }
        }
        let mut labels = vec![0; len];
        labels[len - 1] = draw_log(&alpha[(len - 1) * s..], rng);
        for t in (0..len - 1).rev() {
            let next = labels[t + 1];
            for a in 0..s {
                buf[a] = alpha[t * s + a] + self.trans(theta, a, next);
            }
            labels[t] = draw_log(&buf, rng);
        }
        labels
    }

    /// Draws `n` Boltzmann-chain sequences of length `len` (labels by forward filtering,
    /// backward sampling, then each token from its label's emission distribution).
    pub fn sample_boltzmann(&self, theta: &[f64], len: usize, n: usize, seed: u64) -> Result<Vec<Sequence>> {
        if self.kind != ChainKind::BoltzmannChain {
            return Err(Error::Contract("joint sampling applies to Boltzmann chains".into()));
        }
        if len == 0 {
            return Err(Error::Dimension("empty chain".into()));
        }
        let prep = self.prepare(theta)?;
        let unary: Vec<f64> = (0..len).flat_map(|_| prep.emit_lognorm.iter().copied()).collect();
        let base = self.num_transitions();
        let o = self.observations;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let labels = self.ffbs(theta, &unary, &mut rng);
                let obs = labels
                    .iter()
                    .map(|&y| vec![draw_log(&theta[base + y * o..base + (y + 1) * o], &mut rng) as u32])
                    .collect();
                Sequence { labels, obs }
            })
            .collect())
    }

    /// Draws `n` CRF sequences of length `len`. Each position activates one feature drawn
    /// from `obs_weights` (uniform when empty), then labels are drawn from `p(y | x)`.
    pub fn sample_crf(
        &self,
        theta: &[f64],
        len: usize,
        n: usize,
        obs_weights: &[f64],
        seed: u64,
    ) -> Result<Vec<Sequence>> {
        if self.kind != ChainKind::Crf {
            return Err(Error::Contract("conditional sampling applies to CRFs".into()));
        }
        if len == 0 {
            return Err(Error::Dimension("empty chain".into()));
        }
        if !obs_weights.is_empty() && obs_weights.len() != self.observations {
            return Err(Error::Dimension("observation weights must cover every feature".into()));
        }
        let log_w: Vec<f64> = if obs_weights.is_empty() {
            vec![0.0; self.observations]
        } else {
            obs_weights.iter().map(|w| w.ln()).collect()
        };
        let prep = self.prepare(theta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let obs: Vec<Vec<u32>> = (0..len).map(|_| vec![draw_log(&log_w, &mut rng) as u32]).collect();
                let mut seq = Sequence {
                    labels: vec![0; len],
                    obs,
                };
                let unary = self.unaries(&prep, &seq);
                seq.labels = self.ffbs(theta, &unary, &mut rng);
                seq
            })
            .collect())
    }

    /// Unrolls a sequence into an explicit graph model over its variables plus the
    /// matching assignment. Variables are `y_0..y_{T-1}` followed, for a Boltzmann
    /// chain, by `x_0..x_{T-1}`. For a CRF the observation is folded into label unaries.
    pub fn unroll(&self, seq: &Sequence) -> Result<(GraphModel, Assignment)> {
        self.check_sample(seq)?;
        let s = self.labels;
        let len = seq.len();
        let mut factors = Vec::new();
        let mut start = vec![Vec::new(); s];
        for (y, row) in start.iter_mut().enumerate() {
            row.push((self.trans_index(None, y), 1.0));
            if self.kind == ChainKind::Crf {
                for &f in &seq.obs[0] {
                    if let Some(p) = self.emit_index(f as usize, y) {
                        row.push((p, 1.0));
                    }
                }
            }
        }
        factors.push(Factor::new(vec![0], vec![s], start)?);
        for t in 1..len {
            let mut feats = Vec::with_capacity(s * s);
            for a in 0..s {
                for b in 0..s {
                    feats.push(vec![(self.trans_index(Some(a), b), 1.0)]);
                }
            }
            factors.push(Factor::new(vec![t - 1, t], vec![s, s], feats)?);
        }
        match self.kind {
            ChainKind::BoltzmannChain => {
                let o = self.observations;
                for t in 0..len {
                    let mut feats = Vec::with_capacity(s * o);
                    for y in 0..s {
                        for x in 0..o {
                            feats.push(vec![(self.emit_slots[x][y].1, 1.0)]);
                        }
                    }
                    factors.push(Factor::new(vec![t, len + t], vec![s, o], feats)?);
                }
                let mut cards = vec![s; len];
                cards.extend(std::iter::repeat(o).take(len));
                let mut values = seq.labels.clone();
                values.extend(seq.obs.iter().map(|x| x[0] as usize));
                let g = GraphModel::from_parts(ModelKind::BoltzmannChain, cards, factors, self.num_params)?;
                Ok((g, Assignment(values)))
            }
            ChainKind::Crf => {
                for t in 1..len {
                    let feats = (0..s)
                        .map(|y| {
                            seq.obs[t]
                                .iter()
                                .filter_map(|&f| self.emit_index(f as usize, y).map(|p| (p, 1.0)))
                                .collect()
                        })
                        .collect();
                    factors.push(Factor::new(vec![t], vec![s], feats)?);
                }
                let g = GraphModel::from_parts(ModelKind::LinearChainCrf, vec![s; len], factors, self.num_params)?;
                Ok((g, Assignment(seq.labels.clone())))
            }
        }
    }

    /// Variable sets `(A, B)` of the unrolled model matching window `lo..hi`.
    pub fn window_pair(&self, len: usize, lo: usize, hi: usize) -> (Vec<usize>, Vec<usize>) {
        let mut a: Vec<usize> = (lo..hi).collect();
        if self.kind == ChainKind::BoltzmannChain {
            a.extend((lo..hi).map(|t| len + t));
        }
        let mut b = Vec::new();
        if lo > 0 {
            b.push(lo - 1);
        }
        if hi < len {
            b.push(hi);
        }
        (a, b)
    }
}

fn draw_log(log_w: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    w.len() - 1
}

impl Family for ChainModel {
    type Sample = Sequence;
    type Plan = ChainPlan;
    type Prepared = ChainPrepared;
    type Accum = ChainAccum;

    fn num_params(&self) -> usize {
        self.num_params
    }

    fn check_sample(&self, seq: &Sequence) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Dimension("empty sequence".into()));
        }
        if seq.obs.len() != seq.labels.len() {
            return Err(Error::Dimension(format!(
                "{} labels but {} observation positions",
                seq.labels.len(),
                seq.obs.len()
            )));
        }
        if let Some(&y) = seq.labels.iter().find(|&&y| y >= self.labels) {
            return Err(Error::Dimension(format!("label {y} out of range 0..{}", self.labels)));
        }
        for (t, obs) in seq.obs.iter().enumerate() {
            if self.kind == ChainKind::BoltzmannChain && obs.len() != 1 {
                return Err(Error::Dimension(format!(
                    "position {t} of a Boltzmann chain carries {} tokens",
                    obs.len()
                )));
            }
            if let Some(&f) = obs.iter().find(|&&f| f as usize >= self.observations) {
                return Err(Error::Dimension(format!(
                    "observation {f} at position {t} out of range 0..{}",
                    self.observations
                )));
            }
        }
        Ok(())
    }

    fn plan(&self, component: &Component) -> Result<ChainPlan> {
        match component {
            Component::Full => Ok(ChainPlan::Full),
            Component::Window { order } if *order >= 1 => Ok(ChainPlan::Window(*order)),
            Component::Window { .. } => Err(Error::Contract("window order must be ≥ 1".into())),
            Component::Pair(_) => Err(Error::Contract(
                "explicit m-pairs are not defined over variable-length chains; use window components".into(),
            )),
        }
    }

    fn component_order(&self, plan: &ChainPlan) -> usize {
        match plan {
            ChainPlan::Full => usize::MAX,
            ChainPlan::Window(o) => *o,
        }
    }

    fn prepare(&self, theta: &[f64]) -> Result<ChainPrepared> {
        self.check_theta(theta)?;
        let emit_lognorm = match self.kind {
            ChainKind::BoltzmannChain => {
                let base = self.num_transitions();
                let o = self.observations;
                (0..self.labels)
                    .map(|y| log_sum_exp(&theta[base + y * o..base + (y + 1) * o]))
                    .collect()
            }
            ChainKind::Crf => Vec::new(),
        };
        Ok(ChainPrepared {
            theta: theta.to_vec(),
            emit_lognorm,
        })
    }

    fn component_log_prob(&self, prep: &ChainPrepared, plan: &ChainPlan, seq: &Sequence) -> f64 {
        self.evaluate(prep, *plan, seq, None)
    }

    fn accumulate_component(
        &self,
        prep: &ChainPrepared,
        plan: &ChainPlan,
        seq: &Sequence,
        weight: f64,
        acc: &mut ChainAccum,
    ) -> f64 {
        self.evaluate(prep, *plan, seq, Some((acc, weight)))
    }

    fn new_accum(&self) -> ChainAccum {
        ChainAccum {
            grad: vec![0.0; self.num_params],
            occupancy: vec![0.0; self.labels],
        }
    }

    fn merge_accum(&self, into: &mut ChainAccum, other: ChainAccum) {
        for (a, b) in into.grad.iter_mut().zip(other.grad) {
            *a += b;
        }
        for (a, b) in into.occupancy.iter_mut().zip(other.occupancy) {
            *a += b;
        }
    }

    fn finish_accum(&self, prep: &ChainPrepared, acc: ChainAccum) -> Vec<f64> {
        let mut grad = acc.grad;
        if self.kind == ChainKind::BoltzmannChain {
            let base = self.num_transitions();
            let o = self.observations;
            for (y, &occ) in acc.occupancy.iter().enumerate() {
                if occ == 0.0 {
                    continue;
                }
                let row = base + y * o;
                for x in 0..o {
                    grad[row + x] -= occ * (prep.theta[row + x] - prep.emit_lognorm[y]).exp();
                }
            }
        }
        grad
    }

    /// Forward and backward passes cost `S²` multiply-adds per enumerated position;
    /// unaries cost one add per (label, active feature); normalization one add per
    /// position. The gradient adds pairwise marginals (`4·S²` per position) and feature
    /// expectations.
    fn component_flops(&self, plan: &ChainPlan, seq: &Sequence, _shared: usize) -> Flops {
        let s = self.labels as u64;
        let enumerated: u64 = Self::windows(*plan, seq.len()).map(|(lo, hi)| (hi - lo) as u64).sum();
        let unary: u64 = seq.obs.iter().map(|o| o.len() as u64).sum::<u64>() * s;
        let objective = 2 * enumerated * s * s + unary + enumerated;
        Flops {
            objective,
            gradient: objective + 4 * enumerated * s * s + unary,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_theta(r: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..r).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn boltzmann_partition_matches_unrolled_enumeration() {
        let bc = ChainModel::boltzmann_chain(2, 3).unwrap();
        let theta = random_theta(bc.num_params(), 7);
        let seq = Sequence {
            labels: vec![0, 1, 1, 0],
            obs: vec![vec![0], vec![2], vec![1], vec![0]],
        };
        let (g, x) = bc.unroll(&seq).unwrap();
        let dp = bc.log_partition(&theta, 4).unwrap();
        assert!((dp - g.log_partition(&theta).unwrap()).abs() < 1e-10);
        let ll = bc.log_likelihood(&theta, &seq).unwrap();
        assert!((ll - g.log_prob(&theta, &x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn crf_window_matches_unrolled_conditional() {
        let crf = ChainModel::crf(3, 4, &[(0, 0), (0, 2), (1, 1), (2, 0), (2, 1), (3, 2)]).unwrap();
        let theta = random_theta(crf.num_params(), 3);
        let seq = Sequence {
            labels: vec![2, 0, 1, 1, 0],
            obs: vec![vec![0, 3], vec![1], vec![2], vec![0, 1], vec![3]],
        };
        let (g, x) = crf.unroll(&seq).unwrap();
        let prep = crf.prepare(&theta).unwrap();
        for order in 1..=3 {
            let got = crf.component_log_prob(&prep, &ChainPlan::Window(order), &seq);
            let mut expect = 0.0;
            for lo in 0..=seq.len() - order {
                let (a, b) = crf.window_pair(seq.len(), lo, lo + order);
                expect += g.conditional_log_prob(&theta, &a, &b, &x).unwrap();
            }
            assert!((got - expect).abs() < 1e-10, "order {order}");
        }
    }

    #[test]
    fn single_position_chain() {
        let bc = ChainModel::boltzmann_chain(2, 2).unwrap();
        let theta = random_theta(bc.num_params(), 1);
        let seq = Sequence {
            labels: vec![1],
            obs: vec![vec![0]],
        };
        let (g, _) = bc.unroll(&seq).unwrap();
        assert!((bc.log_partition(&theta, 1).unwrap() - g.log_partition(&theta).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn invalid_sequences_rejected() {
        let bc = ChainModel::boltzmann_chain(2, 2).unwrap();
        let two_tokens = Sequence {
            labels: vec![0],
            obs: vec![vec![0, 1]],
        };
        assert!(bc.check_sample(&two_tokens).is_err());
        let bad_label = Sequence {
            labels: vec![2],
            obs: vec![vec![0]],
        };
        assert!(bc.check_sample(&bad_label).is_err());
        assert!(bc.plan(&Component::Window { order: 0 }).is_err());
    }

    #[test]
    fn samplers_are_seeded() {
        let bc = ChainModel::boltzmann_chain(3, 4).unwrap();
        let theta = random_theta(bc.num_params(), 5);
        let a = bc.sample_boltzmann(&theta, 6, 10, 11).unwrap();
        assert_eq!(a, bc.sample_boltzmann(&theta, 6, 10, 11).unwrap());
        for s in &a {
            bc.check_sample(s).unwrap();
        }
        let crf = ChainModel::crf_dense(3, 5).unwrap();
        let theta = random_theta(crf.num_params(), 6);
        let b = crf.sample_crf(&theta, 4, 5, &[], 2).unwrap();
        assert_eq!(b, crf.sample_crf(&theta, 4, 5, &[], 2).unwrap());
    }
}
