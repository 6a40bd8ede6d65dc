//! Experiment drivers shared by the command-line tool and the test suites: Pareto
//! flags for computation/accuracy tables and the chunking perplexity grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{subsample, FeatureSpec, TokenSequence, CHUNK_LABELS};
use crate::error::{Error, Result};
use crate::estimator::{fit, fit_auto_beta, AutoBetaConfig, FitConfig};
use crate::mrf::{ChainModel, ChainPlan, Family, Sequence};
use crate::scl::{expected_flops, prune_zero_lambda, ComponentSet, PolicyFamily, SelectionPolicy};

/// `true` for every point not dominated by another, where `(cost, loss)` is dominated when
/// another point is no worse in both and strictly better in one. Non-finite points are
/// never on the frontier.
pub fn pareto_flags(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(c, l)| {
            c.is_finite()
                && l.is_finite()
                && !points
                    .iter()
                    .any(|&(c2, l2)| c2 <= c && l2 <= l && (c2 < c || l2 < l))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkModel {
    BoltzmannChain,
    Crf,
}

/// Component families of the chunking grid. `Pl1Fl` and `Pl1Pl2` always select the
/// order-1 windows and select the second component with probability λ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkFamily {
    Fl,
    Pl1Fl,
    Pl1Pl2,
}

impl ChunkFamily {
    fn components(self) -> Result<ComponentSet> {
        Ok(match self {
            ChunkFamily::Fl => ComponentSet::chain_full(),
            ChunkFamily::Pl1Fl => ComponentSet::chain_windows(1)?.concat(&ComponentSet::chain_full()),
            ChunkFamily::Pl1Pl2 => ComponentSet::chain_windows(1)?.concat(&ComponentSet::chain_windows(2)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkConfig {
    pub train_sentences: usize,
    pub seed: u64,
    pub replicates: usize,
    pub models: Vec<ChunkModel>,
    pub families: Vec<ChunkFamily>,
    /// Selection probability of the second component.
    pub lambda_grid: Vec<f64>,
    /// Weight of the second component; the first gets `1 − β`.
    pub beta_grid: Vec<f64>,
    pub sigma2_grid: Vec<f64>,
    /// Adds one row per (λ, σ²) with β chosen by the alternating procedure.
    pub auto_beta: bool,
    pub fit: FitConfig,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            train_sentences: 100,
            seed: 0,
            replicates: 1,
            models: vec![ChunkModel::BoltzmannChain, ChunkModel::Crf],
            families: vec![ChunkFamily::Fl, ChunkFamily::Pl1Fl, ChunkFamily::Pl1Pl2],
            lambda_grid: vec![0.0, 0.1, 0.3, 1.0],
            beta_grid: vec![0.5],
            sigma2_grid: vec![1.0, 10.0, 100.0],
            auto_beta: false,
            fit: FitConfig::default(),
        }
    }
}

impl ChunkConfig {
    pub fn validate(&self) -> Result<()> {
        let nonempty = [
            ("models", self.models.is_empty()),
            ("families", self.families.is_empty()),
            ("lambda_grid", self.lambda_grid.is_empty()),
            ("beta_grid", self.beta_grid.is_empty()),
            ("sigma2_grid", self.sigma2_grid.is_empty()),
        ];
        if let Some((name, _)) = nonempty.iter().find(|(_, empty)| *empty) {
            return Err(Error::Config(format!("{name}: grid must not be empty")));
        }
        if self.replicates == 0 || self.train_sentences == 0 {
            return Err(Error::Config("replicates, train_sentences: must be positive".into()));
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::Config(format!("lambda_grid: {l} outside [0, 1]")));
        }
        if let Some(b) = self.beta_grid.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Config(format!("beta_grid: {b} outside (0, 1)")));
        }
        if let Some(s) = self.sigma2_grid.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Config(format!("sigma2_grid: {s} is not positive")));
        }
        self.fit.validate()
    }
}

/// One grid point. Perplexities are negative mean natural-log likelihoods per sentence:
/// `log p(words, tags)` for the Boltzmann chain, `log p(tags | words)` for the CRF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkRow {
    pub replicate: usize,
    pub model: ChunkModel,
    pub family: ChunkFamily,
    pub lambda: f64,
    /// Weight of the second component after normalization (`1` for `Fl`, `0` when λ = 0).
    pub beta: f64,
    pub sigma2: f64,
    pub auto_beta: bool,
    pub train_perplexity: f64,
    pub test_perplexity: f64,
    pub expected_flops: f64,
    pub realized_flops: u64,
    pub converged: bool,
    pub error: Option<String>,
}

struct Prepared {
    model: ChainModel,
    train: Vec<Sequence>,
    test: Vec<Sequence>,
}

fn prepare(kind: ChunkModel, train: &[TokenSequence], test: &[TokenSequence]) -> Result<Prepared> {
    let spec = FeatureSpec::from_training(train);
    Ok(match kind {
        ChunkModel::BoltzmannChain => {
            let vocab = spec.category_size(crate::data::Category::WordUnigram);
            Prepared {
                model: ChainModel::boltzmann_chain(CHUNK_LABELS.len(), vocab)?,
                train: spec.token_sequences(train),
                test: spec.token_sequences(test),
            }
        }
        ChunkModel::Crf => {
            let ds = spec.extract(train);
            let pairs = ds.supported_pairs();
            Prepared {
                model: ChainModel::crf(CHUNK_LABELS.len(), spec.num_features(), &pairs)?,
                train: ds.sequences,
                test: spec.extract(test).sequences,
            }
        }
    })
}

/// Negative mean log-likelihood per sequence.
pub fn perplexity(model: &ChainModel, theta: &[f64], data: &[Sequence]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dimension("perplexity of an empty set".into()));
    }
    let prep = model.prepare(theta)?;
    let mut total = 0.0;
    for s in data {
        model.check_sample(s)?;
        total += model.component_log_prob(&prep, &ChainPlan::Full, s);
    }
    Ok(-total / data.len() as f64)
}

struct Job {
    replicate: usize,
    model: usize,
    family: ChunkFamily,
    lambda: f64,
    beta: Option<f64>,
    sigma2: f64,
}

/// Runs the full (model × family × λ × β × σ²) grid on a training subsample of each
/// replicate. Grid points that fail are reported in their row's `error` field.
pub fn run_chunk(corpus_train: &[TokenSequence], test: &[TokenSequence], cfg: &ChunkConfig) -> Result<Vec<ChunkRow>> {
    cfg.validate()?;
    if test.is_empty() {
        return Err(Error::Config("test corpus is empty".into()));
    }
    let k = cfg.train_sentences.min(corpus_train.len());
    let mut prepared = Vec::new();
    for rep in 0..cfg.replicates {
        let train = subsample(corpus_train, k, cfg.seed.wrapping_add(rep as u64))?;
        for &m in &cfg.models {
            prepared.push((rep, m, prepare(m, &train, test)?));
        }
    }
    let mut jobs = Vec::new();
    for (idx, (rep, _, _)) in prepared.iter().enumerate() {
        for &family in &cfg.families {
            let lambdas: &[f64] = if family == ChunkFamily::Fl { &[1.0] } else { &cfg.lambda_grid };
            for &lambda in lambdas {
                let mut betas: Vec<Option<f64>> = if family == ChunkFamily::Fl {
                    vec![Some(1.0)]
                } else if lambda == 0.0 {
                    vec![Some(0.0)]
                } else {
                    cfg.beta_grid.iter().map(|b| Some(*b)).collect()
                };
                if cfg.auto_beta && family != ChunkFamily::Fl && lambda > 0.0 {
                    betas.push(None);
                }
                for beta in betas {
                    for &sigma2 in &cfg.sigma2_grid {
                        jobs.push(Job {
                            replicate: *rep,
                            model: idx,
                            family,
                            lambda,
                            beta,
                            sigma2,
                        });
                    }
                }
            }
        }
    }
    Ok(jobs
        .par_iter()
        .map(|job| {
            let (_, kind, p) = &prepared[job.model];
            run_job(job, *kind, p, cfg)
        })
        .collect())
}

fn run_job(job: &Job, kind: ChunkModel, p: &Prepared, cfg: &ChunkConfig) -> ChunkRow {
    let mut row = ChunkRow {
        replicate: job.replicate,
        model: kind,
        family: job.family,
        lambda: job.lambda,
        beta: job.beta.unwrap_or(f64::NAN),
        sigma2: job.sigma2,
        auto_beta: job.beta.is_none(),
        train_perplexity: f64::NAN,
        test_perplexity: f64::NAN,
        expected_flops: f64::NAN,
        realized_flops: 0,
        converged: false,
        error: None,
    };
    if let Err(e) = fill_job(job, p, cfg, &mut row) {
        row.error = Some(e.to_string());
    }
    row
}

fn fill_job(job: &Job, p: &Prepared, cfg: &ChunkConfig, row: &mut ChunkRow) -> Result<()> {
    let comps = job.family.components()?;
    let (comps, policy) = if job.family == ChunkFamily::Fl {
        (comps, SelectionPolicy::always(1))
    } else if job.lambda == 0.0 {
        (ComponentSet::chain_windows(1)?, SelectionPolicy::always(1))
    } else {
        let b = job.beta.unwrap_or(0.5);
        let comps = comps.with_beta(vec![1.0 - b, b])?;
        let raw = SelectionPolicy {
            family: PolicyFamily::Independence,
            lambda: vec![1.0, job.lambda],
            blocks: Vec::new(),
        };
        let (c, pol, _) = prune_zero_lambda(&comps, &raw)?;
        (c, pol)
    };
    let fit_cfg = FitConfig {
        regularizer_sigma2: Some(job.sigma2),
        seed: cfg.seed.wrapping_add(job.replicate as u64),
        ..cfg.fit.clone()
    };
    row.expected_flops = expected_flops(&p.model, &p.train, &comps, &policy)?;
    let (theta, converged, flops) = if job.beta.is_none() {
        let auto = fit_auto_beta(&p.model, &p.train, &comps, &policy, &fit_cfg, &AutoBetaConfig::default())?;
        let total: f64 = auto.beta.iter().sum();
        row.beta = auto.beta[1] / total;
        (auto.fit.theta_hat, auto.fit.converged && auto.converged, auto.fit.ledger.objective_total)
    } else {
        let z = policy.draw_indicators(p.train.len(), fit_cfg.seed)?;
        let r = fit(&p.model, &p.train, &comps, &z, &fit_cfg)?;
        (r.theta_hat, r.converged, r.ledger.objective_total)
    };
    row.converged = converged;
    row.realized_flops = flops;
    row.train_perplexity = perplexity(&p.model, &theta, &p.train)?;
    row.test_perplexity = perplexity(&p.model, &theta, &p.test)?;
    Ok(())
}
