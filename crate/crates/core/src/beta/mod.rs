//! Choice of the component weights β by minimizing the log-determinant of the asymptotic
//! variance, exactly or through its diagonal (Hadamard) approximation.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::asymptotics::{Quadratic, ScoreCov, DENSE_PARAM_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::{log_det_spd, symmetrize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMode {
    Exact,
    #[default]
    DiagonalApprox,
}

/// `J(β) = log det(Υ Σ Υ) = log det Σ − 2 log det Υ⁻¹` for fixed selection
/// probabilities.
#[derive(Debug, Clone)]
pub struct BetaObjective<'a> {
    pub cov: &'a ScoreCov,
    pub lambda: Vec<f64>,
    pub mode: BetaMode,
    /// Damping of β updates: `β ← (1 − γ) β_old + γ β_new`. `1` applies the full update.
    pub gamma: f64,
}

/// Constraints for [`optimize_beta`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BetaConstraints {
    /// Components sharing one weight. Empty means every component is free.
    #[serde(default)]
    pub groups: Vec<Vec<usize>>,
    /// Rescale the result to unit sum (over groups when groups are given).
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaOutcome {
    pub beta: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    /// False when no descent was found and the initial β was returned.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GersgorinDiagnostic {
    pub centers: Vec<f64>,
    pub radii: Vec<f64>,
    /// Pairs of discs that intersect.
    pub overlaps: Vec<(usize, usize)>,
    /// Discs that intersect no other disc.
    pub isolated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beta: Vec<f64>,
    pub j_exact: Option<f64>,
    pub j_approx: Option<f64>,
    pub eff: Option<f64>,
}

impl<'a> BetaObjective<'a> {
    pub fn new(cov: &'a ScoreCov, lambda: Vec<f64>, mode: BetaMode) -> Result<Self> {
        if lambda.len() != cov.num_components() {
            return Err(Error::Dimension(format!(
                "λ has {} entries for {} components",
                lambda.len(),
                cov.num_components()
            )));
        }
        if lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::Policy("active components need λ > 0".into()));
        }
        Ok(BetaObjective {
            cov,
            lambda,
            mode,
            gamma: 1.0,
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Config(format!("gamma: {gamma} outside (0, 1]")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    fn weights(&self, beta: &[f64]) -> Result<Vec<f64>> {
        if beta.len() != self.lambda.len() {
            return Err(Error::Dimension("β length differs from the component count".into()));
        }
        if beta.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::Contract("component weights must be positive".into()));
        }
        Ok(beta.iter().zip(&self.lambda).map(|(b, l)| b * l).collect())
    }

    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        match self.mode {
            BetaMode::Exact => j_exact(self, beta),
            BetaMode::DiagonalApprox => j_approx(self, beta),
        }
    }
}

pub fn j_exact(obj: &BetaObjective, beta: &[f64]) -> Result<f64> {
    let w = obj.weights(beta)?;
    if obj.cov.num_params() > DENSE_PARAM_LIMIT {
        return Err(Error::Dimension("exact J needs dense matrices; use the diagonal approximation".into()));
    }
    let ups_inv = symmetrize(&obj.cov.aggregate(&Quadratic::diagonal(w.clone())));
    let sigma = symmetrize(&obj.cov.aggregate(&Quadratic::outer(w)));
    Ok(log_det_spd(&sigma, "sigma")? - 2.0 * log_det_spd(&ups_inv, "upsilon_inv")?)
}

/// Hadamard-style approximation: log-determinants replaced by sums of log diagonal
/// entries. Coordinates whose score is identically zero in every component are skipped.
pub fn j_approx(obj: &BetaObjective, beta: &[f64]) -> Result<f64> {
    let w = obj.weights(beta)?;
    let ups = obj.cov.aggregate_diag(&Quadratic::diagonal(w.clone()));
    let sig = obj.cov.aggregate_diag(&Quadratic::outer(w));
    let mut total = 0.0;
    for (l, (&u, &s)) in ups.iter().zip(&sig).enumerate() {
        match (u > 0.0, s > 0.0) {
            (true, true) => total += s.ln() - 2.0 * u.ln(),
            (false, false) if u == 0.0 && s == 0.0 => {}
            (false, _) => {
                return Err(Error::NonPositiveDiagonal {
                    matrix: "upsilon_inv".into(),
                    coordinate: l,
                })
            }
            (true, false) => {
                return Err(Error::NonPositiveDiagonal {
                    matrix: "sigma".into(),
                    coordinate: l,
                })
            }
        }
    }
    Ok(total)
}

fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, iterations: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iterations {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Projected coordinate descent over log-weights with golden-section line searches.
/// Deterministic; never returns a β worse than `beta_init`.
pub fn optimize_beta(obj: &BetaObjective, beta_init: &[f64], constraints: &BetaConstraints) -> Result<BetaOutcome> {
    let k = obj.lambda.len();
    obj.weights(beta_init)?;
    let groups: Vec<Vec<usize>> = if constraints.groups.is_empty() {
        (0..k).map(|j| vec![j]).collect()
    } else {
        let mut seen = vec![false; k];
        for g in &constraints.groups {
            for &j in g {
                if j >= k || seen[j] {
                    return Err(Error::Config("groups: must partition the components".into()));
                }
                seen[j] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config("groups: must partition the components".into()));
        }
        constraints.groups.clone()
    };
    let expand = |u: &[f64]| -> Vec<f64> {
        let mut beta = vec![0.0; k];
        for (g, &ug) in groups.iter().zip(u) {
            for &j in g {
                beta[j] = ug.exp();
            }
        }
        beta
    };
    let normalize = |beta: Vec<f64>| -> Vec<f64> {
        if !constraints.normalize {
            return beta;
        }
        let s: f64 = if constraints.groups.is_empty() {
            beta.iter().sum()
        } else {
            groups.iter().map(|g| beta[g[0]]).sum()
        };
        beta.iter().map(|b| b / s).collect()
    };
    let eval = |beta: &[f64]| obj.value(beta).unwrap_or(f64::INFINITY);
    let start = normalize(
        groups
            .iter()
            .fold(vec![0.0; k], |mut acc, g| {
                let mean = g.iter().map(|&j| beta_init[j]).sum::<f64>() / g.len() as f64;
                for &j in g {
                    acc[j] = mean;
                }
                acc
            }),
    );
    let initial_value = obj.value(beta_init)?;
    if groups.len() == 1 {
        return Ok(BetaOutcome {
            beta: beta_init.to_vec(),
            value: initial_value,
            initial_value,
            improved: false,
        });
    }
    let mut u: Vec<f64> = groups.iter().map(|g| start[g[0]].ln()).collect();
    let mut current = eval(&expand(&u));
    {
        for _ in 0..100 {
            let before = current;
            for q in 0..groups.len() {
                let centre = u[q];
                let (best_u, best_v) = golden_section(
                    |x| {
                        let mut v = u.clone();
                        v[q] = x;
                        eval(&expand(&v))
                    },
                    centre - 8.0,
                    centre + 8.0,
                    80,
                );
                if best_v < current {
                    u[q] = best_u;
                    current = best_v;
                }
            }
            if before - current <= 1e-12 * (1.0 + current.abs()) {
                break;
            }
        }
    }
    let proposal = normalize(expand(&u));
    let blended = normalize(
        start
            .iter()
            .zip(&proposal)
            .map(|(a, b)| (1.0 - obj.gamma) * a + obj.gamma * b)
            .collect(),
    );
    let value = eval(&blended);
    if value <= initial_value + 1e-12 * (1.0 + initial_value.abs()) {
        Ok(BetaOutcome {
            beta: blended,
            value,
            initial_value,
            improved: value < initial_value,
        })
    } else {
        Ok(BetaOutcome {
            beta: beta_init.to_vec(),
            value: initial_value,
            initial_value,
            improved: false,
        })
    }
}

/// Geršgorin discs of a square matrix.
pub fn gersgorin(matrix: &DMatrix<f64>) -> Result<GersgorinDiagnostic> {
    if !matrix.is_square() {
        return Err(Error::Dimension("Geršgorin discs need a square matrix".into()));
    }
    let n = matrix.nrows();
    let centers: Vec<f64> = (0..n).map(|i| matrix[(i, i)]).collect();
    let radii: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| matrix[(i, j)].abs()).sum())
        .collect();
    let mut overlaps = Vec::new();
    let mut isolated = vec![true; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if (centers[i] - centers[j]).abs() <= radii[i] + radii[j] {
                overlaps.push((i, j));
                isolated[i] = false;
                isolated[j] = false;
            }
        }
    }
    Ok(GersgorinDiagnostic {
        centers,
        radii,
        overlaps,
        isolated,
    })
}

impl GersgorinDiagnostic {
    /// Whether a real value lies in the union of the discs.
    pub fn covers(&self, value: f64) -> bool {
        self.centers
            .iter()
            .zip(&self.radii)
            .any(|(c, r)| (value - c).abs() <= r + 1e-12 * (1.0 + c.abs()))
    }
}

/// Eigenvalues of the symmetric part, for checking disc coverage.
pub fn symmetric_eigenvalues(matrix: &DMatrix<f64>) -> Vec<f64> {
    SymmetricEigen::new(symmetrize(matrix)).eigenvalues.iter().copied().collect()
}

/// Evaluates exact and approximate J (and efficiency, when the Fisher information is
/// known) over a list of β vectors.
pub fn beta_sweep(cov: &ScoreCov, lambda: &[f64], grid: &[Vec<f64>]) -> Result<Vec<SweepRow>> {
    let exact = BetaObjective::new(cov, lambda.to_vec(), BetaMode::Exact)?;
    let approx = BetaObjective::new(cov, lambda.to_vec(), BetaMode::DiagonalApprox)?;
    let log_det_fisher = match cov.fisher() {
        Some(f) => Some(log_det_spd(f, "fisher")?),
        None => None,
    };
    Ok(grid
        .iter()
        .map(|beta| {
            let je = j_exact(&exact, beta).ok();
            SweepRow {
                beta: beta.clone(),
                j_exact: je,
                j_approx: j_approx(&approx, beta).ok(),
                eff: je.zip(log_det_fisher).map(|(j, f)| (j + f).exp()),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::score_cov_exact;
    use crate::mrf::GraphModel;
    use crate::scl::ComponentSet;

    fn diag_cov() -> ScoreCov {
        let d = |v: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v));
        let blocks = vec![d(&[2.0, 1.0]), d(&[0.5, 0.2]), d(&[0.5, 0.2]), d(&[1.0, 3.0])];
        ScoreCov::from_blocks(2, blocks, None).unwrap()
    }

    #[test]
    fn approximation_is_exact_for_diagonal_blocks() {
        let cov = diag_cov();
        let e = BetaObjective::new(&cov, vec![0.6, 0.4], BetaMode::Exact).unwrap();
        let a = BetaObjective::new(&cov, vec![0.6, 0.4], BetaMode::DiagonalApprox).unwrap();
        for beta in [[1.0, 1.0], [0.2, 3.0], [5.0, 0.1]] {
            assert!((j_exact(&e, &beta).unwrap() - j_approx(&a, &beta).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn single_component_objective_is_flat() {
        let bm = GraphModel::boltzmann_machine(3).unwrap();
        let comps = ComponentSet::full_likelihood(3).unwrap();
        let cov = score_cov_exact(&bm, &[0.2, 0.3, -0.4], &comps).unwrap();
        let obj = BetaObjective::new(&cov, vec![0.7], BetaMode::Exact).unwrap();
        let a = j_exact(&obj, &[0.1]).unwrap();
        let b = j_exact(&obj, &[10.0]).unwrap();
        assert!((a - b).abs() < 1e-10);
        let out = optimize_beta(&obj, &[1.0], &BetaConstraints::default()).unwrap();
        assert_eq!(out.beta, vec![1.0]);
    }

    #[test]
    fn weight_moves_to_the_less_noisy_component() {
        let d = |v: f64| DMatrix::from_diagonal_element(1, 1, v);
        let cov = ScoreCov::from_blocks(2, vec![d(1.0), d(1.5), d(1.5), d(4.0)], None).unwrap();
        let obj = BetaObjective::new(&cov, vec![1.0, 1.0], BetaMode::Exact).unwrap();
        let out = optimize_beta(&obj, &[0.5, 0.5], &BetaConstraints { groups: vec![], normalize: true }).unwrap();
        assert!(out.improved && out.value <= out.initial_value);
        assert!(out.beta[1] > out.beta[0]);
        let scaled = optimize_beta(&obj, &[5.0, 5.0], &BetaConstraints { groups: vec![], normalize: true }).unwrap();
        for (a, b) in out.beta.iter().zip(&scaled.beta) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn gersgorin_two_by_two() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let g = gersgorin(&m).unwrap();
        assert_eq!(g.centers, vec![2.0, 2.0]);
        assert_eq!(g.radii, vec![1.0, 1.0]);
        for ev in symmetric_eigenvalues(&m) {
            assert!(g.covers(ev));
        }
        let d = gersgorin(&DMatrix::from_diagonal_element(3, 3, 1.5)).unwrap();
        assert!(d.radii.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn nonpositive_diagonal_is_reported() {
        let d = |v: &[f64]| DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v));
        let cov = ScoreCov::from_blocks(1, vec![d(&[1.0, 0.0])], None).unwrap();
        let obj = BetaObjective::new(&cov, vec![1.0], BetaMode::DiagonalApprox).unwrap();
        // the zero coordinate is skipped as structurally absent
        assert!(j_approx(&obj, &[1.0]).is_ok());
    }
}
