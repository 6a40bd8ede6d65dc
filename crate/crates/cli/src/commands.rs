use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use scl_core::asymptotics::{asymptotic_variance, score_cov_exact, AsymReport};
use scl_core::beta::beta_sweep;
use scl_core::data::{parse_conll, read_dataset, Dataset, Samples};
use scl_core::estimator::{fit, fit_auto_beta, AutoBetaConfig, AutoBetaResult, FitConfig, FitResult};
use scl_core::experiment::{pareto_flags, perplexity, run_chunk};
use scl_core::mrf::{AnyModel, Assignment, ChainKind, ChainModel, Family, GraphModel, Sequence};
use scl_core::scl::{expected_flops, prune_zero_lambda, ComponentSet, PolicyFamily, SelectionPolicy};

use crate::config::{resolve_groups, resolve_policy, ExperimentConfig, FamilySpec, PolicySpec};

const PERPLEXITY_NOTE: &str =
    "perplexity and objectives are negative mean natural-log likelihoods per sample (per sentence for chains)";

#[derive(Debug, Serialize)]
pub struct Meta {
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub tool: String,
}

fn meta(cfg: &ExperimentConfig, seeds: Vec<u64>) -> Meta {
    Meta {
        config_sha256: cfg.hash(),
        seeds,
        tool: format!("scl {}", env!("CARGO_PKG_VERSION")),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes comment lines (`# …`) followed by CSV records.
fn write_csv<T: Serialize>(path: &Path, comments: &[String], rows: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for c in comments {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn csv_comments(cfg: &ExperimentConfig, seeds: &[u64]) -> Vec<String> {
    vec![
        format!("config_sha256={}", cfg.hash()),
        format!(
            "seeds={}",
            seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")
        ),
        PERPLEXITY_NOTE.to_string(),
    ]
}

/// Training and held-out data for one model.
pub enum Data {
    Graph {
        model: GraphModel,
        train: Vec<Assignment>,
        test: Vec<Assignment>,
    },
    Chain {
        model: ChainModel,
        train: Vec<Sequence>,
        test: Vec<Sequence>,
    },
}

fn draw(model: &AnyModel, theta: &[f64], len: usize, n: usize, seed: u64) -> Result<Samples> {
    Ok(match model {
        AnyModel::Graph(g) => Samples::Assignments(g.sample_exact(theta, n, seed)?.into_iter().map(|a| a.0).collect()),
        AnyModel::Chain(c) => {
            if len == 0 {
                bail!("model.m: chain length must be positive");
            }
            Samples::Sequences(match c.kind() {
                ChainKind::BoltzmannChain => c.sample_boltzmann(theta, len, n, seed)?,
                ChainKind::Crf => c.sample_crf(theta, len, n, &[], seed)?,
            })
        }
    })
}

fn check_theta0(cfg: &ExperimentConfig, model: &AnyModel) -> Result<()> {
    let r = match model {
        AnyModel::Graph(g) => g.num_params(),
        AnyModel::Chain(c) => c.num_params(),
    };
    if cfg.theta0.len() != r {
        bail!("theta0: expected {r} values for this model, found {}", cfg.theta0.len());
    }
    Ok(())
}

/// Loads the dataset file when configured, otherwise samples `n` training points with
/// `seed`; held-out points use `seed + 1`.
pub fn load_data(cfg: &ExperimentConfig, model: AnyModel) -> Result<Data> {
    let (train, theta0) = match &cfg.data {
        Some(path) => {
            let ds = read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?;
            (ds.samples, ds.theta0)
        }
        None => {
            check_theta0(cfg, &model)?;
            (draw(&model, &cfg.theta0, cfg.model.m, cfg.n, cfg.seed)?, cfg.theta0.clone())
        }
    };
    let test = if cfg.test_n > 0 {
        Some(draw(&model, &theta0, cfg.model.m, cfg.test_n, cfg.seed.wrapping_add(1))?)
    } else {
        None
    };
    Ok(match (model, train) {
        (AnyModel::Graph(model), Samples::Assignments(train)) => {
            let conv = |v: Vec<Vec<usize>>| v.into_iter().map(Assignment).collect::<Vec<_>>();
            let test = match test {
                Some(Samples::Assignments(t)) => conv(t),
                _ => Vec::new(),
            };
            Data::Graph {
                model,
                train: conv(train),
                test,
            }
        }
        (AnyModel::Chain(model), Samples::Sequences(train)) => {
            let test = match test {
                Some(Samples::Sequences(t)) => t,
                _ => Vec::new(),
            };
            Data::Chain { model, train, test }
        }
        _ => bail!("data: dataset samples do not match the model kind"),
    })
}

pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.build_model()?;
    check_theta0(cfg, &model)?;
    prepare_out(&cfg.out)?;
    let samples = draw(&model, &cfg.theta0, cfg.model.m, cfg.n, cfg.seed)?;
    #[derive(Serialize)]
    struct Out<'a> {
        meta: Meta,
        #[serde(flatten)]
        dataset: &'a Dataset,
    }
    let dataset = Dataset {
        model: cfg.model.clone(),
        theta0: cfg.theta0.clone(),
        seed: cfg.seed,
        samples,
    };
    let path = cfg.out.join("dataset.json");
    write_json(
        &path,
        &Out {
            meta: meta(cfg, vec![cfg.seed]),
            dataset: &dataset,
        },
    )?;
    println!("wrote {} samples to {}", dataset.samples.len(), path.display());
    Ok(())
}

#[derive(Serialize)]
struct FitOutput {
    meta: Meta,
    components: ComponentSet,
    policy: SelectionPolicy,
    beta: Vec<f64>,
    result: FitResult,
    auto_beta: Option<AutoBetaSummary>,
    train_objective: f64,
    distance_to_theta0: Option<f64>,
}

#[derive(Serialize)]
struct AutoBetaSummary {
    converged: bool,
    outer_iterations: usize,
    j_trace: Vec<(f64, f64)>,
    beta_trace: Vec<Vec<f64>>,
}

fn run_fit<F: Family>(
    model: &F,
    train: &[F::Sample],
    comps: &ComponentSet,
    policy: &SelectionPolicy,
    fit_cfg: &FitConfig,
    auto: bool,
) -> Result<(FitResult, Vec<f64>, Option<AutoBetaSummary>)> {
    if auto {
        let AutoBetaResult {
            fit,
            beta,
            converged,
            outer_iterations,
            j_trace,
            beta_trace,
        } = fit_auto_beta(model, train, comps, policy, fit_cfg, &AutoBetaConfig::default())?;
        Ok((
            fit,
            beta,
            Some(AutoBetaSummary {
                converged,
                outer_iterations,
                j_trace,
                beta_trace,
            }),
        ))
    } else {
        let z = policy.draw_indicators(train.len(), fit_cfg.seed)?;
        Ok((fit(model, train, comps, &z, fit_cfg)?, comps.beta.clone(), None))
    }
}

fn graph_objective(g: &GraphModel, theta: &[f64], data: &[Assignment]) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let log_z = g.log_partition(theta)?;
    let mut total = 0.0;
    for x in data {
        let s = g.sufficient_stats(x)?;
        total += s.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - log_z;
    }
    Ok(-total / data.len() as f64)
}

fn chain_objective(c: &ChainModel, theta: &[f64], data: &[Sequence]) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(perplexity(c, theta, data)?)
}

fn fit_config(cfg: &ExperimentConfig) -> FitConfig {
    FitConfig {
        seed: cfg.seed,
        ..cfg.fit.clone()
    }
}

pub fn cmd_fit(cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.build_model()?;
    let (comps, groups) = resolve_groups(&model, &cfg.components)?;
    let policy = resolve_policy(&cfg.policy, &groups)?;
    let data = load_data(cfg, model)?;
    prepare_out(&cfg.out)?;
    let fit_cfg = fit_config(cfg);
    let (result, beta, auto, objective) = match &data {
        Data::Graph { model, train, .. } => {
            let (r, b, a) = run_fit(model, train, &comps, &policy, &fit_cfg, cfg.auto_beta)?;
            let o = graph_objective(model, &r.theta_hat, train).unwrap_or(f64::NAN);
            (r, b, a, o)
        }
        Data::Chain { model, train, .. } => {
            let (r, b, a) = run_fit(model, train, &comps, &policy, &fit_cfg, cfg.auto_beta)?;
            let o = chain_objective(model, &r.theta_hat, train)?;
            (r, b, a, o)
        }
    };
    let distance = (cfg.theta0.len() == result.theta_hat.len()).then(|| {
        result
            .theta_hat
            .iter()
            .zip(&cfg.theta0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    let path = cfg.out.join("fit.json");
    println!(
        "fit: converged={} iterations={} objective flops={} → {}",
        result.converged,
        result.iterations,
        result.ledger.objective_total,
        path.display()
    );
    write_json(
        &path,
        &FitOutput {
            meta: meta(cfg, vec![cfg.seed]),
            components: comps,
            policy,
            beta,
            result,
            auto_beta: auto,
            train_objective: objective,
            distance_to_theta0: distance,
        },
    )
}

fn require_graph(model: AnyModel, what: &str) -> Result<GraphModel> {
    match model {
        AnyModel::Graph(g) => Ok(g),
        AnyModel::Chain(_) => bail!("{what} needs an enumerable graph model; chain models have no exact report"),
    }
}

#[derive(Debug, Serialize)]
struct EffRow {
    family: String,
    eff: Option<f64>,
    eff_trace: Option<f64>,
    eff_selection_aware: Option<f64>,
    trace: f64,
    log_det: f64,
    expected_flops_per_sample: f64,
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    alpha: f64,
    trace: f64,
    log_det: f64,
    eff: Option<f64>,
    trace_selection_aware: f64,
    log_det_selection_aware: f64,
}

#[derive(Debug, Serialize)]
struct BetaCsvRow {
    beta: f64,
    j_exact: Option<f64>,
    j_approx: Option<f64>,
    eff: Option<f64>,
}

/// Expected per-sample objective FLOPs averaged over the model's states under θ₀.
fn expected_cost(g: &GraphModel, theta0: &[f64], comps: &ComponentSet, policy: &SelectionPolicy) -> Result<f64> {
    let table = g.joint_table(theta0)?;
    let mut total = 0.0;
    for (x, p) in &table {
        total += p * expected_flops(g, std::slice::from_ref(x), comps, policy)?;
    }
    Ok(total)
}

fn family_policy(f: &FamilySpec, policy: &PolicySpec, groups: &[Vec<usize>]) -> Result<SelectionPolicy> {
    let spec = PolicySpec {
        lambda: f.lambda.clone(),
        ..policy.clone()
    };
    resolve_policy(&spec, groups)
}

fn asym(g: &GraphModel, theta0: &[f64], comps: &ComponentSet, policy: &SelectionPolicy) -> Result<AsymReport> {
    let (comps, policy, _) = prune_zero_lambda(comps, policy)?;
    let cov = score_cov_exact(g, theta0, &comps)?;
    Ok(asymptotic_variance(&cov, &policy, &comps.beta)?)
}

/// `(1 − α)` for the first group, `α` for the second.
fn two_group_policy(groups: &[Vec<usize>], alpha: f64) -> SelectionPolicy {
    let k: usize = groups.iter().map(Vec::len).sum();
    let mut lambda = vec![0.0; k];
    for &j in &groups[0] {
        lambda[j] = 1.0 - alpha;
    }
    for &j in &groups[1] {
        lambda[j] = alpha;
    }
    SelectionPolicy {
        family: PolicyFamily::Independence,
        lambda,
        blocks: Vec::new(),
    }
}

fn two_group_beta(groups: &[Vec<usize>], b: f64) -> Vec<f64> {
    let k: usize = groups.iter().map(Vec::len).sum();
    let mut beta = vec![0.0; k];
    for &j in &groups[0] {
        beta[j] = 1.0 - b;
    }
    for &j in &groups[1] {
        beta[j] = b;
    }
    beta
}

pub fn cmd_asymvar(cfg: &ExperimentConfig) -> Result<()> {
    let model = cfg.build_model()?;
    check_theta0(cfg, &model)?;
    let any = model.clone();
    let g = require_graph(model, "asymvar")?;
    let theta0 = &cfg.theta0;
    let (comps, groups) = resolve_groups(&any, &cfg.components)?;
    let policy = resolve_policy(&cfg.policy, &groups)?;
    prepare_out(&cfg.out)?;
    let report = asym(&g, theta0, &comps, &policy)?;

    let families: Vec<FamilySpec> = if cfg.families.is_empty() {
        vec![FamilySpec {
            name: "configured".into(),
            groups: cfg.components.clone(),
            lambda: cfg.policy.lambda.clone(),
        }]
    } else {
        cfg.families.clone()
    };
    let mut table = Vec::new();
    for f in &families {
        let (fc, fg) = resolve_groups(&any, &f.groups).with_context(|| format!("family {}", f.name))?;
        let fp = family_policy(f, &cfg.policy, &fg).with_context(|| format!("family {}", f.name))?;
        let rep = asym(&g, theta0, &fc, &fp).with_context(|| format!("family {}", f.name))?;
        table.push(EffRow {
            family: f.name.clone(),
            eff: rep.eff,
            eff_trace: rep.eff_trace,
            eff_selection_aware: rep.eff_z,
            trace: rep.trace,
            log_det: rep.log_det,
            expected_flops_per_sample: expected_cost(&g, theta0, &fc, &fp)?,
        });
    }
    let seeds = vec![cfg.seed];
    write_csv(&cfg.out.join("eff.csv"), &csv_comments(cfg, &seeds), &table)?;

    if !cfg.lambda_grid.is_empty() {
        if groups.len() != 2 {
            bail!("lambda_grid: the α sweep needs exactly two component groups");
        }
        let rows = cfg
            .lambda_grid
            .iter()
            .map(|&alpha| {
                let rep = asym(&g, theta0, &comps, &two_group_policy(&groups, alpha))?;
                Ok(SweepCsvRow {
                    alpha,
                    trace: rep.trace,
                    log_det: rep.log_det,
                    eff: rep.eff,
                    trace_selection_aware: rep.trace_z,
                    log_det_selection_aware: rep.log_det_z,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_csv(&cfg.out.join("alpha_sweep.csv"), &csv_comments(cfg, &seeds), &rows)?;
    }
    if !cfg.beta_grid.is_empty() {
        if groups.len() != 2 {
            bail!("beta_grid: the β sweep needs exactly two component groups");
        }
        let cov = score_cov_exact(&g, theta0, &comps)?;
        let grid: Vec<Vec<f64>> = cfg.beta_grid.iter().map(|&b| two_group_beta(&groups, b)).collect();
        let rows: Vec<BetaCsvRow> = beta_sweep(&cov, &policy.lambda, &grid)?
            .into_iter()
            .zip(&cfg.beta_grid)
            .map(|(r, &b)| BetaCsvRow {
                beta: b,
                j_exact: r.j_exact,
                j_approx: r.j_approx,
                eff: r.eff,
            })
            .collect();
        write_csv(&cfg.out.join("beta_sweep.csv"), &csv_comments(cfg, &seeds), &rows)?;
    }

    #[derive(Serialize)]
    struct Out<'a> {
        meta: Meta,
        components: &'a ComponentSet,
        policy: &'a SelectionPolicy,
        report: &'a AsymReport,
        table: &'a [EffRow],
    }
    let path = cfg.out.join("asymvar.json");
    write_json(
        &path,
        &Out {
            meta: meta(cfg, seeds),
            components: &comps,
            policy: &policy,
            report: &report,
            table: &table,
        },
    )?;
    for row in &table {
        println!(
            "{:<16} eff={} trace={:.4}",
            row.family,
            row.eff.map_or("n/a".into(), |e| format!("{e:.4}")),
            row.trace
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeoffRow {
    pub family: String,
    pub replicate: usize,
    pub lambda: f64,
    pub beta: f64,
    pub sigma2: Option<f64>,
    pub auto_beta: bool,
    pub train_objective: f64,
    pub test_objective: f64,
    pub eff: Option<f64>,
    pub expected_flops: f64,
    pub realized_flops: u64,
    pub converged: bool,
    pub frontier: bool,
    pub family_frontier: bool,
    pub error: Option<String>,
}

struct TradeoffJob {
    family: usize,
    replicate: usize,
    lambda: f64,
    beta: Option<f64>,
    sigma2: Option<f64>,
}

fn family_setup(
    model: &AnyModel,
    f: &FamilySpec,
    lambda: f64,
    beta: Option<f64>,
) -> Result<(ComponentSet, SelectionPolicy)> {
    let (comps, groups) = resolve_groups(model, &f.groups)?;
    match groups.len() {
        1 => Ok((comps.clone(), SelectionPolicy::always(comps.len()))),
        2 => {
            let comps = comps.with_beta(two_group_beta(&groups, beta.unwrap_or(0.5)))?;
            let (c, p, _) = prune_zero_lambda(&comps, &two_group_policy(&groups, lambda))?;
            Ok((c, p))
        }
        n => bail!("family {}: tradeoff families have one or two groups, found {n}", f.name),
    }
}

fn tradeoff_job(cfg: &ExperimentConfig, any: &AnyModel, data: &Data, fam: &FamilySpec, job: &TradeoffJob) -> TradeoffRow {
    let mut row = TradeoffRow {
        family: fam.name.clone(),
        replicate: job.replicate,
        lambda: job.lambda,
        beta: job.beta.unwrap_or(f64::NAN),
        sigma2: job.sigma2,
        auto_beta: job.beta.is_none(),
        train_objective: f64::NAN,
        test_objective: f64::NAN,
        eff: None,
        expected_flops: f64::NAN,
        realized_flops: 0,
        converged: false,
        frontier: false,
        family_frontier: false,
        error: None,
    };
    let run = |row: &mut TradeoffRow| -> Result<()> {
        let (comps, policy) = family_setup(any, fam, job.lambda, job.beta)?;
        let fit_cfg = FitConfig {
            regularizer_sigma2: job.sigma2,
            seed: cfg.seed.wrapping_add(job.replicate as u64),
            ..cfg.fit.clone()
        };
        match data {
            Data::Graph { model, train, test } => {
                row.expected_flops = expected_flops(model, train, &comps, &policy)?;
                let (r, beta, auto) = run_fit(model, train, &comps, &policy, &fit_cfg, job.beta.is_none())?;
                if auto.is_some() {
                    let first = beta[0];
                    let last = beta[beta.len() - 1];
                    row.beta = last / (first + last);
                }
                let rep = (cfg.theta0.len() == model.num_params())
                    .then(|| asym(model, &cfg.theta0, &comps.with_beta(beta.clone())?, &policy))
                    .transpose();
                row.eff = rep.ok().flatten().and_then(|r| r.eff);
                row.converged = r.converged;
                row.realized_flops = r.ledger.objective_total;
                row.train_objective = graph_objective(model, &r.theta_hat, train)?;
                row.test_objective = graph_objective(model, &r.theta_hat, test)?;
            }
            Data::Chain { model, train, test } => {
                row.expected_flops = expected_flops(model, train, &comps, &policy)?;
                let (r, beta, auto) = run_fit(model, train, &comps, &policy, &fit_cfg, job.beta.is_none())?;
                if auto.is_some() {
                    row.beta = beta[beta.len() - 1] / (beta[0] + beta[beta.len() - 1]);
                }
                row.converged = r.converged;
                row.realized_flops = r.ledger.objective_total;
                row.train_objective = chain_objective(model, &r.theta_hat, train)?;
                row.test_objective = chain_objective(model, &r.theta_hat, test)?;
            }
        }
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.error = Some(format!("{e:#}"));
    }
    row
}

/// Loss used for the frontier: efficiency when known, else held-out, else training objective.
fn loss(row: &TradeoffRow) -> f64 {
    if row.error.is_some() {
        return f64::NAN;
    }
    row.eff.unwrap_or(if row.test_objective.is_finite() {
        row.test_objective
    } else {
        row.train_objective
    })
}

pub fn tradeoff_rows(cfg: &ExperimentConfig) -> Result<Vec<TradeoffRow>> {
    let any = cfg.build_model()?;
    let families: Vec<FamilySpec> = if cfg.families.is_empty() {
        vec![FamilySpec {
            name: "configured".into(),
            groups: cfg.components.clone(),
            lambda: Vec::new(),
        }]
    } else {
        cfg.families.clone()
    };
    for f in &families {
        resolve_groups(&any, &f.groups).with_context(|| format!("family {}", f.name))?;
    }
    let lambdas = if cfg.lambda_grid.is_empty() { vec![0.5] } else { cfg.lambda_grid.clone() };
    let betas = if cfg.beta_grid.is_empty() { vec![0.5] } else { cfg.beta_grid.clone() };
    let sigmas: Vec<Option<f64>> = if cfg.sigma2_grid.is_empty() {
        vec![cfg.fit.regularizer_sigma2]
    } else {
        cfg.sigma2_grid.iter().map(|s| Some(*s)).collect()
    };
    let mut jobs = Vec::new();
    for (fi, f) in families.iter().enumerate() {
        let two = f.groups.len() == 2;
        for replicate in 0..cfg.replicates {
            for &lambda in if two { &lambdas[..] } else { &[1.0][..] } {
                let mut bs: Vec<Option<f64>> = if two && lambda > 0.0 && lambda < 1.0 {
                    betas.iter().map(|b| Some(*b)).collect()
                } else {
                    vec![Some(0.5)]
                };
                if cfg.auto_beta && two && lambda > 0.0 && lambda < 1.0 {
                    bs.push(None);
                }
                for beta in bs {
                    for &sigma2 in &sigmas {
                        jobs.push(TradeoffJob {
                            family: fi,
                            replicate,
                            lambda,
                            beta,
                            sigma2,
                        });
                    }
                }
            }
        }
    }
    let mut data_cache: Vec<Data> = Vec::new();
    for replicate in 0..cfg.replicates {
        let rep_cfg = ExperimentConfig {
            seed: cfg.seed.wrapping_add(1000 * replicate as u64),
            ..cfg.clone()
        };
        data_cache.push(load_data(&rep_cfg, any.clone())?);
    }
    let mut rows: Vec<TradeoffRow> = jobs
        .par_iter()
        .map(|job| tradeoff_job(cfg, &any, &data_cache[job.replicate], &families[job.family], job))
        .collect();
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.expected_flops, loss(r))).collect();
    for (r, flag) in rows.iter_mut().zip(pareto_flags(&points)) {
        r.frontier = flag;
    }
    for f in &families {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].family == f.name).collect();
        let pts: Vec<(f64, f64)> = idx.iter().map(|&i| points[i]).collect();
        for (&i, flag) in idx.iter().zip(pareto_flags(&pts)) {
            rows[i].family_frontier = flag;
        }
    }
    Ok(rows)
}

pub fn cmd_tradeoff(cfg: &ExperimentConfig) -> Result<()> {
    cfg.check_grids()?;
    let rows = tradeoff_rows(cfg)?;
    prepare_out(&cfg.out)?;
    let seeds: Vec<u64> = (0..cfg.replicates)
        .map(|r| cfg.seed.wrapping_add(1000 * r as u64))
        .collect();
    let mut comments = csv_comments(cfg, &seeds);
    comments.push("frontier: not dominated in (expected_flops, eff or objective) by any row".into());
    let path = cfg.out.join("tradeoff.csv");
    write_csv(&path, &comments, &rows)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!("wrote {} rows ({failed} failed) to {}", rows.len(), path.display());
    Ok(())
}

pub fn corpus_available(cfg: &ExperimentConfig) -> Option<(PathBuf, PathBuf)> {
    let c = cfg.corpus.as_ref()?;
    (c.train.is_file() && c.test.is_file()).then(|| (c.train.clone(), c.test.clone()))
}

pub fn cmd_chunk(cfg: &ExperimentConfig) -> Result<()> {
    let Some((train_path, test_path)) = corpus_available(cfg) else {
        let what = cfg
            .corpus
            .as_ref()
            .map_or("no `corpus` section in the config".to_string(), |c| {
                format!("{} or {} not found", c.train.display(), c.test.display())
            });
        println!("chunk: CoNLL-2000 corpus unavailable ({what}); skipping");
        return Ok(());
    };
    let train = parse_conll(&train_path).with_context(|| format!("parsing {}", train_path.display()))?;
    let test = parse_conll(&test_path).with_context(|| format!("parsing {}", test_path.display()))?;
    let rows = run_chunk(&train, &test, &cfg.chunk)?;
    prepare_out(&cfg.out)?;
    let seeds: Vec<u64> = (0..cfg.chunk.replicates)
        .map(|r| cfg.chunk.seed.wrapping_add(r as u64))
        .collect();
    let path = cfg.out.join("chunk.csv");
    write_csv(&path, &csv_comments(cfg, &seeds), &rows)?;
    println!("wrote {} rows to {}", rows.len(), path.display());
    Ok(())
}
