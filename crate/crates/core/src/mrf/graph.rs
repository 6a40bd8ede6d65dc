use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Family, Flops, Odometer};
use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use crate::scl::{Component, MPair};

/// Default limit on the number of configurations any single enumeration may visit.
pub const DEFAULT_ENUM_CAP: u64 = 1 << 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Generic,
    BoltzmannMachine,
    BoltzmannChain,
    LinearChainCrf,
}

/// How a generic clique turns its configuration into features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    /// One parameter per clique, `f_C(x_C) = Π_{i∈C} x_i`.
    #[default]
    Product,
    /// One parameter per clique configuration other than the all-zero one.
    Indicator,
}

/// A joint configuration of all model variables.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn values(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for Assignment {
    fn from(v: Vec<usize>) -> Self {
        Assignment(v)
    }
}

/// A clique with a sparse feature table: for every clique configuration, the list of
/// `(parameter index, feature value)` pairs it activates.
#[derive(Debug, Clone)]
pub struct Factor {
    vars: Vec<usize>,
    radix: Vec<usize>,
    features: Vec<Vec<(usize, f64)>>,
}

impl Factor {
    pub fn new(vars: Vec<usize>, radix: Vec<usize>, features: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if vars.is_empty() || vars.len() != radix.len() {
            return Err(Error::Dimension("factor needs one radix per variable".into()));
        }
        let size: usize = radix.iter().product();
        if features.len() != size {
            return Err(Error::Dimension(format!(
                "factor over {:?} has {} configurations but {} feature rows",
                vars,
                size,
                features.len()
            )));
        }
        Ok(Factor {
            vars,
            radix,
            features,
        })
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    #[inline]
    fn config_index(&self, x: &[usize]) -> usize {
        let mut idx = 0;
        for (&v, &r) in self.vars.iter().zip(&self.radix) {
            idx = idx * r + x[v];
        }
        idx
    }
}

/// A discrete exponential-family MRF `p(x) ∝ exp(Σ_C ⟨θ, f_C(x_C)⟩)` over a fixed set of
/// variables.
#[derive(Debug, Clone)]
pub struct GraphModel {
    kind: ModelKind,
    cards: Vec<usize>,
    factors: Vec<Factor>,
    num_params: usize,
    var_factors: Vec<Vec<usize>>,
    enum_cap: u64,
}

/// θ-dependent cache: per factor, per clique configuration, the log-potential.
#[derive(Debug, Clone)]
pub struct GraphPrepared {
    theta: Vec<f64>,
    log_pot: Vec<Vec<f64>>,
}

impl GraphPrepared {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
}

/// Enumeration plan for one m-pair: the free variables (A first, then the part of the
/// marginalized complement connected to A once B is removed) and the factors touching
/// them. Everything else cancels between numerator and denominator.
#[derive(Debug, Clone)]
pub struct GraphPlan {
    pair: MPair,
    free: Vec<usize>,
    a_len: usize,
    factors: Vec<usize>,
    table: u64,
}

impl GraphPlan {
    pub fn pair(&self) -> &MPair {
        &self.pair
    }

    /// Number of configurations of the enumerated sub-table.
    pub fn table_size(&self) -> u64 {
        self.table
    }
}

impl GraphModel {
    /// Builds a model from explicit factors. Every parameter index in `0..num_params`
    /// must be used by at least one factor and cliques must be distinct as sets.
    pub fn from_factors(
        kind: ModelKind,
        cards: Vec<usize>,
        factors: Vec<Factor>,
        num_params: usize,
    ) -> Result<Self> {
        Self::build(kind, cards, factors, num_params, true)
    }

    /// As [`GraphModel::from_factors`] but parameters may be left unattached, as happens
    /// when a tied chain is unrolled over a short sequence.
    pub(crate) fn from_parts(
        kind: ModelKind,
        cards: Vec<usize>,
        factors: Vec<Factor>,
        num_params: usize,
    ) -> Result<Self> {
        Self::build(kind, cards, factors, num_params, false)
    }

    fn build(
        kind: ModelKind,
        cards: Vec<usize>,
        factors: Vec<Factor>,
        num_params: usize,
        require_cover: bool,
    ) -> Result<Self> {
        if cards.is_empty() {
            return Err(Error::Dimension("model needs at least one variable".into()));
        }
        if let Some(c) = cards.iter().find(|&&c| c < 2) {
            return Err(Error::Dimension(format!("cardinality {c} < 2")));
        }
        let m = cards.len();
        let mut covered = vec![false; num_params];
        let mut seen_sets: Vec<Vec<usize>> = Vec::with_capacity(factors.len());
        let mut var_factors = vec![Vec::new(); m];
        for (fi, f) in factors.iter().enumerate() {
            for (&v, &r) in f.vars.iter().zip(&f.radix) {
                if v >= m {
                    return Err(Error::Dimension(format!("clique variable {v} out of range 0..{m}")));
                }
                if cards[v] != r {
                    return Err(Error::Dimension(format!(
                        "factor radix {r} disagrees with cardinality {} of variable {v}",
                        cards[v]
                    )));
                }
            }
            let mut set = f.vars.clone();
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Dimension(format!("clique {:?} repeats a variable", f.vars)));
            }
            if seen_sets.contains(&set) {
                return Err(Error::Dimension(format!("duplicate clique {set:?}")));
            }
            seen_sets.push(set);
            for row in &f.features {
                for &(p, _) in row {
                    if p >= num_params {
                        return Err(Error::Dimension(format!(
                            "parameter index {p} out of range 0..{num_params}"
                        )));
                    }
                    covered[p] = true;
                }
            }
            for &v in &f.vars {
                var_factors[v].push(fi);
            }
        }
        if let Some(p) = covered.iter().position(|c| !c).filter(|_| require_cover) {
            return Err(Error::Dimension(format!("parameter {p} is not attached to any clique")));
        }
        Ok(GraphModel {
            kind,
            cards,
            factors,
            num_params,
            var_factors,
            enum_cap: DEFAULT_ENUM_CAP,
        })
    }

    /// Fully connected binary Boltzmann machine, `f_ij(x) = x_i x_j` for every `i < j`
    /// in lexicographic order, `x ∈ {0,1}^m`.
    pub fn boltzmann_machine(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::Dimension("a Boltzmann machine needs m ≥ 2".into()));
        }
        let mut factors = Vec::new();
        let mut k = 0;
        for i in 0..m {
            for j in (i + 1)..m {
                let features = vec![vec![], vec![], vec![], vec![(k, 1.0)]];
                factors.push(Factor::new(vec![i, j], vec![2, 2], features)?);
                k += 1;
            }
        }
        Self::from_factors(ModelKind::BoltzmannMachine, vec![2; m], factors, k)
    }

    /// Generic model over the given cliques with the chosen feature map.
    pub fn generic(cards: Vec<usize>, cliques: &[Vec<usize>], map: FeatureMap) -> Result<Self> {
        let m = cards.len();
        let mut factors = Vec::with_capacity(cliques.len());
        let mut next = 0;
        for clique in cliques {
            if let Some(&v) = clique.iter().find(|&&v| v >= m) {
                return Err(Error::Dimension(format!("clique variable {v} out of range 0..{m}")));
            }
            let radix: Vec<usize> = clique.iter().map(|&v| cards[v]).collect();
            let mut odo = Odometer::new(radix.clone());
            let mut features = Vec::new();
            while let Some(cfg) = odo.next() {
                match map {
                    FeatureMap::Product => {
                        let v: f64 = cfg.iter().map(|&s| s as f64).product();
                        features.push(if v != 0.0 { vec![(next, v)] } else { vec![] });
                    }
                    FeatureMap::Indicator => {
                        if cfg.iter().all(|&s| s == 0) {
                            features.push(vec![]);
                        } else {
                            features.push(vec![(next, 1.0)]);
                            next += 1;
                        }
                    }
                }
            }
            if map == FeatureMap::Product {
                next += 1;
            }
            factors.push(Factor::new(clique.clone(), radix, features)?);
        }
        Self::from_factors(ModelKind::Generic, cards, factors, next)
    }

    pub fn with_enum_cap(mut self, cap: u64) -> Self {
        self.enum_cap = cap;
        self
    }

    pub fn enum_cap(&self) -> u64 {
        self.enum_cap
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn num_vars(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cards
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Number of joint configurations.
    pub fn state_space_size(&self) -> u128 {
        self.cards.iter().map(|&c| c as u128).product()
    }

    fn check_cap(&self, configs: u128) -> Result<()> {
        if configs > self.enum_cap as u128 {
            return Err(Error::EnumerationInfeasible {
                configs,
                cap: self.enum_cap,
            });
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params {
            return Err(Error::Dimension(format!(
                "θ has length {} but the model has {} parameters",
                theta.len(),
                self.num_params
            )));
        }
        Ok(())
    }

    pub fn check_assignment(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.cards.len() {
            return Err(Error::Dimension(format!(
                "assignment has {} values, model has {} variables",
                x.len(),
                self.cards.len()
            )));
        }
        if let Some((i, (&v, &c))) = x.iter().zip(&self.cards).enumerate().find(|(_, (&v, &c))| v >= c) {
            return Err(Error::Dimension(format!(
                "value {v} of variable {i} exceeds cardinality {c}"
            )));
        }
        Ok(())
    }

    /// Every joint configuration in lexicographic order (variable 0 most significant).
    pub fn states(&self) -> Result<Vec<Assignment>> {
        self.check_cap(self.state_space_size())?;
        let mut odo = Odometer::new(self.cards.clone());
        let mut out = Vec::with_capacity(self.state_space_size() as usize);
        while let Some(s) = odo.next() {
            out.push(Assignment(s.to_vec()));
        }
        Ok(out)
    }

    fn unnormalized(&self, prep: &GraphPrepared, x: &[usize]) -> f64 {
        self.factors
            .iter()
            .zip(&prep.log_pot)
            .map(|(f, lp)| lp[f.config_index(x)])
            .sum()
    }

    /// `log Z(θ)` by enumeration.
    pub fn log_partition(&self, theta: &[f64]) -> Result<f64> {
        let prep = self.prepare(theta)?;
        self.check_cap(self.state_space_size())?;
        let mut odo = Odometer::new(self.cards.clone());
        let mut scores = Vec::with_capacity(self.state_space_size() as usize);
        while let Some(x) = odo.next() {
            scores.push(self.unnormalized(&prep, x));
        }
        Ok(log_sum_exp(&scores))
    }

    /// `log p_θ(x)`.
    pub fn log_prob(&self, theta: &[f64], x: &Assignment) -> Result<f64> {
        self.check_assignment(&x.0)?;
        let log_z = self.log_partition(theta)?;
        let prep = self.prepare(theta)?;
        Ok(self.unnormalized(&prep, &x.0) - log_z)
    }

    /// `log p_θ(x_A | x_B)` computed from the enumerated sub-table only.
    pub fn conditional_log_prob(
        &self,
        theta: &[f64],
        a: &[usize],
        b: &[usize],
        x: &Assignment,
    ) -> Result<f64> {
        let pair = MPair::new(a.to_vec(), b.to_vec())?;
        let plan = self.plan_pair(&pair)?;
        self.check_assignment(&x.0)?;
        let prep = self.prepare(theta)?;
        Ok(self.eval_plan(&prep, &plan, &x.0, None))
    }

    /// Feature vector `f(x)` with one coordinate per parameter.
    pub fn sufficient_stats(&self, x: &Assignment) -> Result<Vec<f64>> {
        self.check_assignment(&x.0)?;
        let mut out = vec![0.0; self.num_params];
        for f in &self.factors {
            for &(p, v) in &f.features[f.config_index(&x.0)] {
                out[p] += v;
            }
        }
        Ok(out)
    }

    /// The full probability table `(x, p_θ(x))` in lexicographic order.
    pub fn joint_table(&self, theta: &[f64]) -> Result<Vec<(Assignment, f64)>> {
        let prep = self.prepare(theta)?;
        let states = self.states()?;
        let scores: Vec<f64> = states.iter().map(|x| self.unnormalized(&prep, &x.0)).collect();
        let log_z = log_sum_exp(&scores);
        Ok(states
            .into_iter()
            .zip(scores)
            .map(|(x, s)| (x, (s - log_z).exp()))
            .collect())
    }

    /// `E_θ[f(X)]`, the gradient of `log Z(θ)`.
    pub fn expected_stats(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.num_params];
        for (x, p) in self.joint_table(theta)? {
            for (o, s) in out.iter_mut().zip(self.sufficient_stats(&x)?) {
                *o += p * s;
            }
        }
        Ok(out)
    }

    /// Fisher information `I(θ) = Var_θ(f(X))`.
    pub fn fisher_information(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let r = self.num_params;
        let table = self.joint_table(theta)?;
        let mut mean = vec![0.0; r];
        let mut second = DMatrix::zeros(r, r);
        for (x, p) in &table {
            let f = self.sufficient_stats(x)?;
            for i in 0..r {
                mean[i] += p * f[i];
                if f[i] == 0.0 {
                    continue;
                }
                for j in 0..r {
                    second[(i, j)] += p * f[i] * f[j];
                }
            }
        }
        for i in 0..r {
            for j in 0..r {
                second[(i, j)] -= mean[i] * mean[j];
            }
        }
        Ok(second)
    }

    /// Draws `n` iid samples from `p_θ` by inverting the CDF over all configurations.
    pub fn sample_exact(&self, theta: &[f64], n: usize, seed: u64) -> Result<Vec<Assignment>> {
        let table = self.joint_table(theta)?;
        let mut cdf = Vec::with_capacity(table.len());
        let mut acc = 0.0;
        for (_, p) in &table {
            acc += p;
            cdf.push(acc);
        }
        let total = acc;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n)
            .map(|_| {
                let u: f64 = rng.gen::<f64>() * total;
                let idx = cdf.partition_point(|&c| c <= u).min(table.len() - 1);
                table[idx].0.clone()
            })
            .collect())
    }

    /// Builds the enumeration plan for an m-pair.
    pub fn plan_pair(&self, pair: &MPair) -> Result<GraphPlan> {
        let m = self.cards.len();
        if let Some(&v) = pair.a().iter().chain(pair.b()).find(|&&v| v >= m) {
            return Err(Error::Contract(format!("variable {v} out of range 0..{m}")));
        }
        let mut in_b = vec![false; m];
        for &v in pair.b() {
            in_b[v] = true;
        }
        let mut visited = vec![false; m];
        let mut queue = VecDeque::new();
        for &v in pair.a() {
            visited[v] = true;
            queue.push_back(v);
        }
        while let Some(v) = queue.pop_front() {
            for &fi in &self.var_factors[v] {
                for &w in &self.factors[fi].vars {
                    if !visited[w] && !in_b[w] {
                        visited[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        let mut free: Vec<usize> = pair.a().to_vec();
        let a_len = free.len();
        free.extend((0..m).filter(|&v| visited[v] && !pair.a().contains(&v)));
        let mut touches = vec![false; self.factors.len()];
        for &v in &free {
            for &fi in &self.var_factors[v] {
                touches[fi] = true;
            }
        }
        let factors: Vec<usize> = (0..self.factors.len()).filter(|&fi| touches[fi]).collect();
        let table: u128 = free.iter().map(|&v| self.cards[v] as u128).product();
        self.check_cap(table)?;
        Ok(GraphPlan {
            pair: pair.clone(),
            free,
            a_len,
            factors,
            table: table as u64,
        })
    }

    /// Scores of every configuration of the plan's free variables, together with the
    /// indicator of agreement with `x` on A.
    fn plan_scores(&self, prep: &GraphPrepared, plan: &GraphPlan, x: &[usize]) -> (Vec<f64>, Vec<bool>) {
        let mut buf = x.to_vec();
        let radix: Vec<usize> = plan.free.iter().map(|&v| self.cards[v]).collect();
        let mut odo = Odometer::new(radix);
        let mut scores = Vec::with_capacity(plan.table as usize);
        let mut matches = Vec::with_capacity(plan.table as usize);
        while let Some(cfg) = odo.next() {
            for (&v, &s) in plan.free.iter().zip(cfg) {
                buf[v] = s;
            }
            let s: f64 = plan
                .factors
                .iter()
                .map(|&fi| prep.log_pot[fi][self.factors[fi].config_index(&buf)])
                .sum();
            scores.push(s);
            matches.push(
                plan.free[..plan.a_len]
                    .iter()
                    .zip(&cfg[..plan.a_len])
                    .all(|(&v, &s)| x[v] == s),
            );
        }
        (scores, matches)
    }

    fn eval_plan(
        &self,
        prep: &GraphPrepared,
        plan: &GraphPlan,
        x: &[usize],
        grad: Option<(&mut [f64], f64)>,
    ) -> f64 {
        let (scores, matches) = self.plan_scores(prep, plan, x);
        let log_den = log_sum_exp(&scores);
        let num: Vec<f64> = scores
            .iter()
            .zip(&matches)
            .filter(|(_, &m)| m)
            .map(|(&s, _)| s)
            .collect();
        let log_num = log_sum_exp(&num);
        if let Some((grad, weight)) = grad {
            let mut buf = x.to_vec();
            let radix: Vec<usize> = plan.free.iter().map(|&v| self.cards[v]).collect();
            let mut odo = Odometer::new(radix);
            let mut c = 0;
            while let Some(cfg) = odo.next() {
                let w_den = (scores[c] - log_den).exp();
                let w_num = if matches[c] { (scores[c] - log_num).exp() } else { 0.0 };
                let coef = weight * (w_num - w_den);
                c += 1;
                if coef == 0.0 {
                    continue;
                }
                for (&v, &s) in plan.free.iter().zip(cfg) {
                    buf[v] = s;
                }
                for &fi in &plan.factors {
                    let f = &self.factors[fi];
                    for &(p, v) in &f.features[f.config_index(&buf)] {
                        grad[p] += coef * v;
                    }
                }
            }
        }
        log_num - log_den
    }

    /// Hessian `∇² log p(x_A | x_B) = Var(f | x_A, x_B) − Var(f | x_B)` over the plan's
    /// sub-table.
    pub fn component_hessian(&self, prep: &GraphPrepared, plan: &GraphPlan, x: &[usize]) -> DMatrix<f64> {
        let r = self.num_params;
        let (scores, matches) = self.plan_scores(prep, plan, x);
        let log_den = log_sum_exp(&scores);
        let num: Vec<f64> = scores
            .iter()
            .zip(&matches)
            .filter(|(_, &m)| m)
            .map(|(&s, _)| s)
            .collect();
        let log_num = log_sum_exp(&num);
        let mut buf = x.to_vec();
        let radix: Vec<usize> = plan.free.iter().map(|&v| self.cards[v]).collect();
        let mut odo = Odometer::new(radix);
        let mut mean_num = vec![0.0; r];
        let mut mean_den = vec![0.0; r];
        let mut second = DMatrix::zeros(r, r);
        let mut phi = vec![0.0; r];
        let mut c = 0;
        while let Some(cfg) = odo.next() {
            for (&v, &s) in plan.free.iter().zip(cfg) {
                buf[v] = s;
            }
            phi.iter_mut().for_each(|p| *p = 0.0);
            for &fi in &plan.factors {
                let f = &self.factors[fi];
                for &(p, v) in &f.features[f.config_index(&buf)] {
                    phi[p] += v;
                }
            }
            let w_den = (scores[c] - log_den).exp();
            let w_num = if matches[c] { (scores[c] - log_num).exp() } else { 0.0 };
            c += 1;
            let coef = w_num - w_den;
            for i in 0..r {
                if phi[i] == 0.0 {
                    continue;
                }
                mean_num[i] += w_num * phi[i];
                mean_den[i] += w_den * phi[i];
                for j in 0..r {
                    second[(i, j)] += coef * phi[i] * phi[j];
                }
            }
        }
        for i in 0..r {
            for j in 0..r {
                second[(i, j)] += mean_den[i] * mean_den[j] - mean_num[i] * mean_num[j];
            }
        }
        second
    }
}

impl Family for GraphModel {
    type Sample = Assignment;
    type Plan = GraphPlan;
    type Prepared = GraphPrepared;
    type Accum = Vec<f64>;

    fn num_params(&self) -> usize {
        self.num_params
    }

    fn check_sample(&self, sample: &Assignment) -> Result<()> {
        self.check_assignment(&sample.0)
    }

    fn plan(&self, component: &Component) -> Result<GraphPlan> {
        match component {
            Component::Pair(pair) => self.plan_pair(pair),
            Component::Full => self.plan_pair(&MPair::new((0..self.num_vars()).collect(), vec![])?),
            Component::Window { .. } => Err(Error::Contract(
                "window components apply to chain models only".into(),
            )),
        }
    }

    fn component_order(&self, plan: &GraphPlan) -> usize {
        plan.a_len
    }

    fn prepare(&self, theta: &[f64]) -> Result<GraphPrepared> {
        self.check_theta(theta)?;
        let log_pot = self
            .factors
            .iter()
            .map(|f| {
                f.features
                    .iter()
                    .map(|row| row.iter().map(|&(p, v)| theta[p] * v).sum())
                    .collect()
            })
            .collect();
        Ok(GraphPrepared {
            theta: theta.to_vec(),
            log_pot,
        })
    }

    fn component_log_prob(&self, prep: &GraphPrepared, plan: &GraphPlan, sample: &Assignment) -> f64 {
        self.eval_plan(prep, plan, &sample.0, None)
    }

    fn accumulate_component(
        &self,
        prep: &GraphPrepared,
        plan: &GraphPlan,
        sample: &Assignment,
        weight: f64,
        acc: &mut Vec<f64>,
    ) -> f64 {
        self.eval_plan(prep, plan, &sample.0, Some((acc, weight)))
    }

    fn new_accum(&self) -> Vec<f64> {
        vec![0.0; self.num_params]
    }

    fn merge_accum(&self, into: &mut Vec<f64>, other: Vec<f64>) {
        for (a, b) in into.iter_mut().zip(other) {
            *a += b;
        }
    }

    fn finish_accum(&self, _prep: &GraphPrepared, acc: Vec<f64>) -> Vec<f64> {
        acc
    }

    /// Calibrated FLOP model. Each configuration of the enumerated sub-table costs one
    /// multiply-add per factor; the potential of the observed configuration (one
    /// multiply-add per factor) is shared among the `shared` likelihood objects of the
    /// same order evaluated on a sample. The gradient additionally accumulates one
    /// feature vector per factor and configuration.
    fn component_flops(&self, plan: &GraphPlan, _sample: &Assignment, shared: usize) -> Flops {
        let factors = self.factors.len() as u64;
        let observed = factors.div_ceil(shared.max(1) as u64);
        Flops {
            objective: factors * plan.table + observed,
            gradient: factors * self.num_params as u64 * plan.table + observed,
        }
    }
}
