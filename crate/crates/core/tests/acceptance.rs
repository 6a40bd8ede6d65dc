//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for each, and exits
//! non-zero when any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scl_core::asymptotics::{asymptotic_variance, sandwich_variance, score_cov_exact, weighted_conditional_kl};
use scl_core::beta::{j_exact, optimize_beta, BetaConstraints, BetaMode, BetaObjective};
use scl_core::data::{label_histogram, parse_conll, subsample, FeatureSpec, ACTIVE_PER_POSITION};
use scl_core::estimator::{fit, FitConfig};
use scl_core::experiment::{run_chunk, ChunkConfig, ChunkFamily, ChunkModel};
use scl_core::mrf::{Assignment, ChainModel, Family, FeatureMap, GraphModel, Sequence};
use scl_core::scl::{
    expected_flops, flop_count, scl_gradient, scl_value, ComponentSet, IndicatorMatrix, SelectionPolicy,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn figure1_theta() -> Vec<f64> {
    [-1.0; 5].into_iter().chain([1.0; 5]).collect()
}

fn pl(m: usize, order: usize) -> ComponentSet {
    ComponentSet::pseudo(m, order).unwrap()
}

/// `(1 − α)·PL_ℓ + α·PL_{ℓ+1}` as selection probabilities; zero-probability blocks are
/// left out.
fn mixture(m: usize, low: usize, alpha: f64) -> (ComponentSet, SelectionPolicy) {
    let (a, b) = (pl(m, low), pl(m, low + 1));
    if alpha == 0.0 {
        let k = a.len();
        return (a, SelectionPolicy::always(k));
    }
    if alpha == 1.0 {
        let k = b.len();
        return (b, SelectionPolicy::always(k));
    }
    let policy = SelectionPolicy::mixed(a.len(), 1.0 - alpha, b.len(), alpha).unwrap();
    (a.concat(&b), policy)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let bm = GraphModel::boltzmann_machine(5).unwrap();
    let theta = figure1_theta();
    let eff = |comps: &ComponentSet, policy: &SelectionPolicy| {
        let cov = score_cov_exact(&bm, &theta, comps).unwrap();
        asymptotic_variance(&cov, policy, &comps.beta).unwrap()
    };
    let fl = eff(&pl(5, 5), &SelectionPolicy::always(1));
    let pl1 = eff(&pl(5, 1), &SelectionPolicy::always(5));
    let (mc, mp) = mixture(5, 1, 0.3);
    let mixed = eff(&mc, &mp);
    let (e_fl, e_pl1, e_mix) = (fl.eff.unwrap(), pl1.eff.unwrap(), mixed.eff.unwrap());
    let elapsed = start.elapsed();
    Outcome {
        pass: (e_fl - 1.0).abs() < 1e-9
            && (e_pl1 - 1.83).abs() <= 0.02
            && (e_mix - 1.48).abs() <= 0.02
            && elapsed < Duration::from_secs(10),
        detail: format!(
            "eff FL={e_fl:.6} PL1={e_pl1:.4} (target 1.83±0.02) mixed={e_mix:.4} (target 1.48±0.02); \
             selection-aware mixed={:.4}; trace ratios PL1={:.4} mixed={:.4}; {elapsed:.2?}",
            mixed.eff_z.unwrap(),
            pl1.eff_trace.unwrap(),
            mixed.eff_trace.unwrap()
        ),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let bm = GraphModel::boltzmann_machine(5).unwrap();
    let data = bm.sample_exact(&figure1_theta(), 14, 1).unwrap();
    let fl = flop_count(&bm, &data, &pl(5, 5), &IndicatorMatrix::ones(14, 1)).unwrap();
    let pl1 = flop_count(&bm, &data, &pl(5, 1), &IndicatorMatrix::ones(14, 5)).unwrap();
    let (mc, mp) = mixture(5, 1, 0.3);
    let mixed = expected_flops(&bm, &data, &mc, &mp).unwrap();
    let elapsed = start.elapsed();
    Outcome {
        pass: fl.objective_total == 4620
            && pl1.objective_total == 1540
            && (mixed - 2772.0).abs() <= 0.1 * 2772.0
            && elapsed < Duration::from_secs(1),
        detail: format!(
            "FL={} PL1={} mixed expected={mixed:.1} (2772 ± 10%); {elapsed:.2?}",
            fl.objective_total, pl1.objective_total
        ),
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let bm = GraphModel::boltzmann_machine(5).unwrap();
    let theta = figure1_theta();
    let alphas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut pass = true;
    let mut lines = Vec::new();
    for low in 1..=3 {
        let mut traces = Vec::new();
        let mut dets = Vec::new();
        for &a in &alphas {
            let (comps, policy) = mixture(5, low, a);
            let cov = score_cov_exact(&bm, &theta, &comps).unwrap();
            let rep = asymptotic_variance(&cov, &policy, &comps.beta).unwrap();
            traces.push(rep.trace);
            dets.push(rep.log_det);
        }
        let dec = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
        pass &= dec(&traces) && dec(&dets);
        lines.push(format!(
            "PL{low}/PL{}: trace {:?} logdet {:?}",
            low + 1,
            traces.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>(),
            dets.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>()
        ));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: pass && elapsed < Duration::from_secs(60),
        detail: format!("{}; {elapsed:.2?}", lines.join("; ")),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let bm = GraphModel::boltzmann_machine(5).unwrap();
    let theta = figure1_theta();
    let comps = pl(5, 1);
    let mut medians = Vec::new();
    for (i, n) in [100usize, 1000, 10000].into_iter().enumerate() {
        let errs: Vec<f64> = (0..20)
            .map(|r| {
                let data = bm.sample_exact(&theta, n, 1000 * i as u64 + r).unwrap();
                match fit(&bm, &data, &comps, &IndicatorMatrix::ones(n, 5), &FitConfig::default()) {
                    Ok(f) => dist(&f.theta_hat, &theta),
                    Err(_) => f64::INFINITY,
                }
            })
            .collect();
        medians.push(median(errs));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: medians[1] < medians[0]
            && medians[2] < medians[1]
            && medians[2] < 0.1
            && elapsed < Duration::from_secs(300),
        detail: format!(
            "median ‖θ̂−θ₀‖ at n=1e2,1e3,1e4: {:.4}, {:.4}, {:.4}; {elapsed:.2?}",
            medians[0], medians[1], medians[2]
        ),
    }
}

fn empirical_cov(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = DVector::zeros(r);
    for row in rows {
        mean += DVector::from_column_slice(row);
    }
    mean /= n;
    let mut c = DMatrix::zeros(r, r);
    for row in rows {
        let d = DVector::from_column_slice(row) - &mean;
        c += &d * d.transpose();
    }
    c / (n - 1.0)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let bm = GraphModel::boltzmann_machine(5).unwrap();
    let theta = figure1_theta();
    let comps = pl(5, 1);
    let n = 5000;
    let scaled: Vec<Vec<f64>> = (0..200u64)
        .map(|r| {
            let data = bm.sample_exact(&theta, n, 50_000 + r).unwrap();
            let f = fit(&bm, &data, &comps, &IndicatorMatrix::ones(n, 5), &FitConfig::default()).unwrap();
            f.theta_hat
                .iter()
                .zip(&theta)
                .map(|(a, b)| (n as f64).sqrt() * (a - b))
                .collect()
        })
        .collect();
    let emp = empirical_cov(&scaled);
    let cov = score_cov_exact(&bm, &theta, &comps).unwrap();
    let asym = asymptotic_variance(&cov, &SelectionPolicy::always(5), &comps.beta).unwrap();
    let rel = (&emp - &asym.variance).norm() / asym.variance.norm();
    let elapsed = start.elapsed();
    Outcome {
        pass: rel < 0.25 && elapsed < Duration::from_secs(900),
        detail: format!("Frobenius relative error {rel:.4} (< 0.25); {elapsed:.2?}"),
    }
}

/// Misspecified truth for the 3-node machine: adds biases and a third-order interaction
/// the pairwise model cannot represent,
/// `p(x) ∝ exp(1.2 x₀x₁ + 0.8 x₀x₂ − 0.5 x₁x₂ − 1.5 x₀x₁x₂ + 0.5 x₀ + 0.5 x₂)`.
/// Every pair of estimator coordinates has sandwich correlation of magnitude ≥ 0.3, so
/// each entry is estimated to within a few percent by the Monte Carlo replicates.
fn misspecified_truth(bm: &GraphModel) -> Vec<f64> {
    let states = bm.states().unwrap();
    let w: Vec<f64> = states
        .iter()
        .map(|s| {
            let x: Vec<f64> = s.0.iter().map(|&v| v as f64).collect();
            (1.2 * x[0] * x[1] + 0.8 * x[0] * x[2] - 0.5 * x[1] * x[2] - 1.5 * x[0] * x[1] * x[2]
                + 0.5 * x[0]
                + 0.5 * x[2])
                .exp()
        })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter().map(|v| v / z).collect()
}

fn draw_states(states: &[Assignment], probs: &[f64], n: usize, seed: u64) -> Vec<Assignment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut u: f64 = rng.gen();
            for (s, p) in states.iter().zip(probs) {
                if u < *p {
                    return s.clone();
                }
                u -= p;
            }
            states[states.len() - 1].clone()
        })
        .collect()
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let bm = GraphModel::boltzmann_machine(3).unwrap();
    // in-family: sandwich against the closed-form variance
    let theta = [0.5, 1.0, -0.7];
    let truth: Vec<f64> = bm.joint_table(&theta).unwrap().iter().map(|(_, p)| *p).collect();
    let mut in_family = 0.0_f64;
    let cases = [
        (pl(3, 1), SelectionPolicy::always(3)),
        (pl(3, 1), SelectionPolicy::independence(vec![0.5, 0.8, 0.3]).unwrap()),
        (pl(3, 1).concat(&pl(3, 2)), SelectionPolicy::mixed(3, 0.7, 3, 0.4).unwrap()),
    ];
    for (comps, policy) in &cases {
        let rep = sandwich_variance(&bm, comps, policy, &truth).unwrap();
        let cov = score_cov_exact(&bm, &theta, comps).unwrap();
        let asym = asymptotic_variance(&cov, policy, &comps.beta).unwrap();
        in_family = in_family.max((&rep.sandwich - &asym.variance_z).amax());
    }
    // misspecified: Monte Carlo against the sandwich
    let comps = pl(3, 1);
    let policy = SelectionPolicy::independence(vec![0.9, 0.6, 0.8]).unwrap();
    let truth = misspecified_truth(&bm);
    let robust = sandwich_variance(&bm, &comps, &policy, &truth).unwrap();
    let states = bm.states().unwrap();
    let n = 2000;
    let reps = 2000u64;
    let scaled: Vec<Vec<f64>> = (0..reps)
        .map(|r| {
            let data = draw_states(&states, &truth, n, 70_000 + r);
            let z = policy.draw_indicators(n, 90_000 + r).unwrap();
            let f = fit(&bm, &data, &comps, &z, &FitConfig::default()).unwrap();
            f.theta_hat
                .iter()
                .zip(&robust.theta0)
                .map(|(a, b)| (n as f64).sqrt() * (a - b))
                .collect()
        })
        .collect();
    let emp = empirical_cov(&scaled);
    let worst = emp
        .iter()
        .zip(robust.sandwich.iter())
        .map(|(e, s)| ((e - s) / s).abs())
        .fold(0.0_f64, f64::max);
    let elapsed = start.elapsed();
    Outcome {
        pass: in_family < 1e-8 && worst < 0.25 && elapsed < Duration::from_secs(600),
        detail: format!(
            "in-family max |sandwich − ΥΣΥ| = {in_family:.2e}; misspecified worst entrywise relative error \
             {worst:.4} over {reps} replicates (n={n}); {elapsed:.2?}"
        ),
    }
}

fn random_policy(family: usize, k: usize, rng: &mut ChaCha8Rng) -> SelectionPolicy {
    match family {
        0 => SelectionPolicy::independence((0..k).map(|_| rng.gen_range(0.2..1.0)).collect()).unwrap(),
        1 => {
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
            let s: f64 = w.iter().sum();
            SelectionPolicy::multinomial(w.iter().map(|v| v / s).collect()).unwrap()
        }
        _ => {
            let half = k / 2;
            let mut lambda = vec![0.0; k];
            let blocks = vec![(0..half).collect::<Vec<_>>(), (half..k).collect()];
            for b in &blocks {
                let w: Vec<f64> = b.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
                let s: f64 = w.iter().sum();
                for (&j, v) in b.iter().zip(&w) {
                    lambda[j] = v / s;
                }
            }
            SelectionPolicy::product_of_multinomials(lambda, blocks).unwrap()
        }
    }
}

fn gradient_error<F: Family>(
    model: &F,
    data: &[F::Sample],
    comps: &ComponentSet,
    policy: &SelectionPolicy,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let theta: Vec<f64> = (0..model.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let z = policy.draw_indicators(data.len(), rng.gen()).unwrap();
    let g = scl_gradient(model, &theta, data, comps, &z).unwrap();
    let h = 1e-5;
    let mut worst = 0.0_f64;
    let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for i in 0..theta.len() {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[i] += h;
        tm[i] -= h;
        let fd = (scl_value(model, &tp, data, comps, &z).unwrap() - scl_value(model, &tm, data, comps, &z).unwrap())
            / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / scale);
    }
    worst
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for c in 0..20usize {
        let kind = c % 4;
        let family = (c / 4) % 3;
        let beta_rand = |k: usize, rng: &mut ChaCha8Rng| (0..k).map(|_| rng.gen_range(0.3..2.0)).collect::<Vec<f64>>();
        let err = match kind {
            0 => {
                let bm = GraphModel::boltzmann_machine(4).unwrap();
                let theta: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let data = bm.sample_exact(&theta, 40, rng.gen()).unwrap();
                let base = pl(4, 1).concat(&pl(4, 2));
                let comps = base.with_beta(beta_rand(base.len(), &mut rng)).unwrap();
                let policy = random_policy(family, comps.len(), &mut rng);
                gradient_error(&bm, &data, &comps, &policy, &mut rng)
            }
            1 => {
                let g = GraphModel::generic(vec![2, 3, 2], &[vec![0, 1], vec![1, 2], vec![0, 2]], FeatureMap::Indicator)
                    .unwrap();
                let theta: Vec<f64> = (0..g.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let data = g.sample_exact(&theta, 40, rng.gen()).unwrap();
                let base = pl(3, 1).concat(&pl(3, 2)).concat(&pl(3, 3));
                let comps = base.with_beta(beta_rand(base.len(), &mut rng)).unwrap();
                let policy = random_policy(family, comps.len(), &mut rng);
                gradient_error(&g, &data, &comps, &policy, &mut rng)
            }
            2 => {
                let bc = ChainModel::boltzmann_chain(3, 4).unwrap();
                let theta: Vec<f64> = (0..bc.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let data = bc.sample_boltzmann(&theta, 5, 20, rng.gen()).unwrap();
                let base = ComponentSet::chain_windows(1)
                    .unwrap()
                    .concat(&ComponentSet::chain_windows(2).unwrap())
                    .concat(&ComponentSet::chain_full());
                let comps = base.with_beta(beta_rand(base.len(), &mut rng)).unwrap();
                let policy = random_policy(family, comps.len(), &mut rng);
                gradient_error(&bc, &data, &comps, &policy, &mut rng)
            }
            _ => {
                let crf = ChainModel::crf_dense(3, 5).unwrap();
                let theta: Vec<f64> = (0..crf.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let data = crf.sample_crf(&theta, 5, 20, &[], rng.gen()).unwrap();
                let base = ComponentSet::chain_windows(1)
                    .unwrap()
                    .concat(&ComponentSet::chain_windows(3).unwrap())
                    .concat(&ComponentSet::chain_full());
                let comps = base.with_beta(beta_rand(base.len(), &mut rng)).unwrap();
                let policy = random_policy(family, comps.len(), &mut rng);
                gradient_error(&crf, &data, &comps, &policy, &mut rng)
            }
        };
        worst = worst.max(err);
    }
    Outcome {
        pass: worst < 1e-6,
        detail: format!("worst relative error {worst:.2e} over 20 configurations (< 1e-6)"),
    }
}

fn criterion_8() -> Outcome {
    let bm = GraphModel::boltzmann_machine(5).unwrap();
    let theta = figure1_theta();
    // (a) single component
    let fl = pl(5, 5);
    let cov = score_cov_exact(&bm, &theta, &fl).unwrap();
    let one = SelectionPolicy::always(1);
    let base = asymptotic_variance(&cov, &one, &[1.0]).unwrap().variance;
    let a = [0.01, 0.3, 7.5, 1e3]
        .iter()
        .map(|b| (&asymptotic_variance(&cov, &one, &[*b]).unwrap().variance - &base).amax())
        .fold(0.0_f64, f64::max);
    // (b) scale invariance
    let (comps, policy) = mixture(5, 1, 0.3);
    let cov = score_cov_exact(&bm, &theta, &comps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let beta: Vec<f64> = (0..comps.len()).map(|_| rng.gen_range(0.2..3.0)).collect();
    let base = asymptotic_variance(&cov, &policy, &beta).unwrap().variance;
    let b = [0.01, 2.5, 100.0]
        .iter()
        .map(|c| {
            let scaled: Vec<f64> = beta.iter().map(|v| v * c).collect();
            (&asymptotic_variance(&cov, &policy, &scaled).unwrap().variance - &base).amax()
        })
        .fold(0.0_f64, f64::max);
    // (c) heuristic argmin against the exact grid
    let (n1, n2) = (5, 10);
    let grouped = |alpha: f64| -> Vec<f64> {
        std::iter::repeat(1.0 - alpha)
            .take(n1)
            .chain(std::iter::repeat(alpha).take(n2))
            .collect()
    };
    let exact = BetaObjective::new(&cov, policy.lambda.clone(), BetaMode::Exact).unwrap();
    let grid: Vec<f64> = (1..20).map(|i| i as f64 * 0.05).collect();
    let (best_alpha, _) = grid
        .iter()
        .map(|&al| (al, j_exact(&exact, &grouped(al)).unwrap()))
        .fold((f64::NAN, f64::INFINITY), |acc, (al, j)| if j < acc.1 { (al, j) } else { acc });
    let approx = BetaObjective::new(&cov, policy.lambda.clone(), BetaMode::DiagonalApprox).unwrap();
    let constraints = BetaConstraints {
        groups: vec![(0..n1).collect(), (n1..n1 + n2).collect()],
        normalize: true,
    };
    let out = optimize_beta(&approx, &grouped(0.5), &constraints).unwrap();
    let heuristic = out.beta[n1] / (out.beta[0] + out.beta[n1]);
    let c = (heuristic - best_alpha).abs();
    Outcome {
        pass: a < 1e-10 && b < 1e-10 && c <= 0.1 + 1e-12,
        detail: format!(
            "(a) max deviation {a:.2e}; (b) max deviation {b:.2e}; (c) diagonal argmin α={heuristic:.4} vs exact grid \
             argmin α={best_alpha:.2} (|Δ|={c:.4} ≤ 0.1)"
        ),
    }
}

fn criterion_9() -> Outcome {
    let bm = GraphModel::boltzmann_machine(3).unwrap();
    let comps = pl(3, 1).concat(&pl(3, 2)).concat(&pl(3, 3));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut min_kl = f64::INFINITY;
    let mut max_self = 0.0_f64;
    for _ in 0..1000 {
        let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let other: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let alpha: Vec<f64> = (0..comps.len()).map(|_| rng.gen_range(0.05..2.0)).collect();
        min_kl = min_kl.min(weighted_conditional_kl(&bm, &theta, &other, &comps, &alpha).unwrap());
        max_self = max_self.max(weighted_conditional_kl(&bm, &theta, &theta, &comps, &alpha).unwrap().abs());
    }
    Outcome {
        pass: min_kl > 0.0 && max_self < 1e-12,
        detail: format!("min over θ≠θ′ = {min_kl:.3e} (> 0); max |value| at θ=θ′ = {max_self:.2e} (< 1e-12)"),
    }
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_z = 0.0_f64;
    let mut chains = 0;
    for s in 2..=4usize {
        for len in 1..=6usize {
            let bc = ChainModel::boltzmann_chain(s, 2).unwrap();
            let theta: Vec<f64> = (0..bc.num_params()).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let seq = Sequence {
                labels: vec![0; len],
                obs: vec![vec![0]; len],
            };
            let (g, _) = bc.unroll(&seq).unwrap();
            worst_z = worst_z.max((bc.log_partition(&theta, len).unwrap() - g.log_partition(&theta).unwrap()).abs());
            let crf = ChainModel::crf_dense(s, 3).unwrap();
            let theta: Vec<f64> = (0..crf.num_params()).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let obs: Vec<Vec<u32>> = (0..len)
                .map(|_| {
                    let mut o: Vec<u32> = (0..3u32).filter(|_| rng.gen_bool(0.5)).collect();
                    if o.is_empty() {
                        o.push(rng.gen_range(0..3));
                    }
                    o
                })
                .collect();
            let seq = Sequence {
                labels: vec![0; len],
                obs: obs.clone(),
            };
            let (g, _) = crf.unroll(&seq).unwrap();
            worst_z = worst_z
                .max((crf.conditional_log_partition(&theta, &obs).unwrap() - g.log_partition(&theta).unwrap()).abs());
            chains += 2;
        }
    }
    let mut worst_sum = 0.0_f64;
    for _ in 0..100 {
        let m = rng.gen_range(3..=6usize);
        let g = if rng.gen_bool(0.5) {
            GraphModel::boltzmann_machine(m).unwrap()
        } else {
            let cards: Vec<usize> = (0..m).map(|_| rng.gen_range(2..=3)).collect();
            let mut cliques: Vec<Vec<usize>> = (0..m - 1).map(|i| vec![i, i + 1]).collect();
            cliques.push(vec![0, m - 1]);
            cliques.push(vec![rng.gen_range(0..m)]);
            GraphModel::generic(cards, &cliques, FeatureMap::Indicator).unwrap()
        };
        let theta: Vec<f64> = (0..g.num_params()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let mut vars: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            vars.swap(i, rng.gen_range(0..=i));
        }
        let na = rng.gen_range(1..m);
        let nb = rng.gen_range(0..=m - na);
        let a = vars[..na].to_vec();
        let b = vars[na..na + nb].to_vec();
        let mut x: Vec<usize> = g.cardinalities().iter().map(|&c| rng.gen_range(0..c)).collect();
        let mut total = 0.0;
        let radix: Vec<usize> = a.iter().map(|&v| g.cardinalities()[v]).collect();
        let count: usize = radix.iter().product();
        for mut code in 0..count {
            for (i, &v) in a.iter().enumerate().rev() {
                x[v] = code % radix[i];
                code /= radix[i];
            }
            total += g.conditional_log_prob(&theta, &a, &b, &Assignment(x.clone())).unwrap().exp();
        }
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    Outcome {
        pass: worst_z < 1e-10 && worst_sum < 1e-10,
        detail: format!(
            "max |DP − enumeration| = {worst_z:.2e} over {chains} chains; max |Σ p(x_A|x_B) − 1| = {worst_sum:.2e} \
             over 100 m-pairs"
        ),
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn all_seven(spec: &FeatureSpec, seqs: &[scl_core::data::TokenSequence]) -> bool {
    seqs.iter()
        .flat_map(|s| spec.featurize(s))
        .all(|f| f.len() == ACTIVE_PER_POSITION)
}

fn criterion_11() -> Outcome {
    let train = parse_conll(&fixture("conll_train.txt")).unwrap();
    let test = parse_conll(&fixture("conll_test.txt")).unwrap();
    let spec = FeatureSpec::from_training(&train);
    let tokens: usize = label_histogram(&train).values().sum();
    let mut pass = tokens == 25 && spec.num_features() == 112 && all_seven(&spec, &train) && all_seven(&spec, &test);
    let mut detail = format!(
        "fixture: {tokens} tokens, {} features, 7 active per position: {}",
        spec.num_features(),
        all_seven(&spec, &train) && all_seven(&spec, &test)
    );
    let Ok(dir) = std::env::var("SCL_CONLL_DIR") else {
        detail.push_str("; corpus checks skipped (SCL_CONLL_DIR unset)");
        return Outcome { pass, detail };
    };
    let dir = PathBuf::from(dir);
    let (full_train, full_test) = match (parse_conll(&dir.join("train.txt")), parse_conll(&dir.join("test.txt"))) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            detail.push_str("; corpus files unreadable, corpus checks skipped");
            return Outcome { pass, detail };
        }
    };
    let n_train: usize = full_train.iter().map(|s| s.len()).sum();
    let n_test: usize = full_test.iter().map(|s| s.len()).sum();
    let sub = subsample(&full_train, 100, 0).unwrap();
    let spec = FeatureSpec::from_training(&sub);
    let seven = all_seven(&spec, &full_train) && all_seven(&spec, &full_test);
    let cfg = ChunkConfig {
        models: vec![ChunkModel::BoltzmannChain],
        families: vec![ChunkFamily::Fl, ChunkFamily::Pl1Fl],
        lambda_grid: vec![0.1, 0.3],
        beta_grid: vec![0.5],
        sigma2_grid: vec![10.0, 100.0],
        ..ChunkConfig::default()
    };
    let rows = run_chunk(&full_train, &full_test, &cfg).unwrap();
    let win = cfg.sigma2_grid.iter().any(|&s2| {
        let fl = rows
            .iter()
            .find(|r| r.family == ChunkFamily::Fl && r.sigma2 == s2)
            .map(|r| r.test_perplexity);
        let mixed = rows
            .iter()
            .filter(|r| r.family == ChunkFamily::Pl1Fl && r.sigma2 == s2)
            .map(|r| r.test_perplexity)
            .fold(f64::INFINITY, f64::min);
        fl.is_some_and(|f| mixed <= f)
    });
    pass &= n_train == 211_727 && n_test == 47_377 && seven && win;
    detail.push_str(&format!(
        "; corpus: train {n_train} tokens (211727), test {n_test} (47377), 7 active everywhere: {seven}, mixed ≤ FL \
         test perplexity at some σ²: {win}"
    ));
    Outcome { pass, detail }
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 11] = [
        (1, "efficiency triple", criterion_1),
        (2, "FLOP totals", criterion_2),
        (3, "monotone variance curves", criterion_3),
        (4, "consistency", criterion_4),
        (5, "asymptotic normality", criterion_5),
        (6, "sandwich correctness", criterion_6),
        (7, "gradient fidelity", criterion_7),
        (8, "weight selection", criterion_8),
        (9, "conditional KL inequality", criterion_9),
        (10, "inference oracles", criterion_10),
        (11, "chunking pipeline", criterion_11),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let outcome = run();
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {name}: {}", outcome.detail);
        if !outcome.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
