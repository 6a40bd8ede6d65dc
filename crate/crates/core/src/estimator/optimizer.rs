use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters beyond this sup-norm are treated as a run-away ascent.
const DIVERGENCE_BOUND: f64 = 1e8;
/// Dimension above which [`Method::Auto`] switches from dense BFGS to L-BFGS.
const DENSE_LIMIT: usize = 500;
const LBFGS_MEMORY: usize = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    GradientAscent,
    Bfgs,
    Lbfgs,
    #[default]
    Auto,
}

/// Armijo backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineSearch {
    pub sufficient_increase: f64,
    pub shrink: f64,
    pub max_steps: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        LineSearch {
            sufficient_increase: 1e-4,
            shrink: 0.5,
            max_steps: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ascent {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

enum Curvature {
    None,
    Dense(Vec<f64>),
    Limited(VecDeque<(Vec<f64>, Vec<f64>, f64)>, f64),
}

impl Curvature {
    /// Ascent direction from the current gradient.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        match self {
            Curvature::None => g.to_vec(),
            Curvature::Dense(h) => {
                let r = g.len();
                (0..r).map(|i| dot(&h[i * r..(i + 1) * r], g)).collect()
            }
            Curvature::Limited(mem, gamma) => {
                let mut q = g.to_vec();
                let mut alphas = Vec::with_capacity(mem.len());
                for (s, y, rho) in mem.iter().rev() {
                    let a = rho * dot(s, &q);
                    q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
                    alphas.push(a);
                }
                q.iter_mut().for_each(|qi| *qi *= gamma);
                for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
                    let b = rho * dot(y, &q);
                    q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
                }
                q
            }
        }
    }

    /// Curvature update with `s = Δx` and `y = −Δ∇f` (the gradient change of `−f`).
    fn update(&mut self, s: &[f64], y: &[f64], first: bool) {
        let sy = dot(s, y);
        let yy = dot(y, y);
        if !(sy > 1e-12 * dot(s, s).sqrt() * yy.sqrt()) {
            return;
        }
        match self {
            Curvature::None => {}
            Curvature::Dense(h) => {
                let r = s.len();
                if first {
                    let scale = sy / yy;
                    for i in 0..r {
                        for j in 0..r {
                            h[i * r + j] = if i == j { scale } else { 0.0 };
                        }
                    }
                }
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..r).map(|i| dot(&h[i * r..(i + 1) * r], y)).collect();
                let yhy = dot(y, &hy);
                for i in 0..r {
                    for j in 0..r {
                        h[i * r + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
            }
            Curvature::Limited(mem, gamma) => {
                if mem.len() == LBFGS_MEMORY {
                    mem.pop_front();
                }
                mem.push_back((s.to_vec(), y.to_vec(), 1.0 / sy));
                *gamma = sy / yy;
            }
        }
    }
}

/// Maximizes `f` from `x0`. `eval` returns the value and gradient.
pub fn maximize<E>(
    mut eval: E,
    x0: Vec<f64>,
    method: Method,
    tolerance: f64,
    max_iterations: usize,
    ls: LineSearch,
) -> Result<Ascent>
where
    E: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let r = x0.len();
    let method = match method {
        Method::Auto if r <= DENSE_LIMIT => Method::Bfgs,
        Method::Auto => Method::Lbfgs,
        m => m,
    };
    let mut curv = match method {
        Method::GradientAscent => Curvature::None,
        Method::Bfgs => {
            let mut h = vec![0.0; r * r];
            for i in 0..r {
                h[i * r + i] = 1.0;
            }
            Curvature::Dense(h)
        }
        _ => Curvature::Limited(VecDeque::new(), 1.0),
    };
    let mut x = x0;
    let (mut f, mut g) = eval(&x)?;
    let mut evaluations = 1;
    let mut trace = vec![f];
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { iteration: 0, trace });
    }
    let mut step_hint = 1.0;
    let mut first_update = true;
    let mut iterations = 0;
    while iterations < max_iterations {
        if sup_norm(&g) <= tolerance {
            break;
        }
        iterations += 1;
        let mut d = curv.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope > 0.0) {
            d = g.clone();
            slope = dot(&g, &g);
            if let Curvature::Limited(mem, _) = &mut curv {
                mem.clear();
            }
        }
        let mut t = match curv {
            Curvature::None => step_hint,
            _ if first_update => (1.0 / sup_norm(&d)).min(1.0),
            _ => 1.0,
        };
        let mut accepted = None;
        let mut fallback: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for _ in 0..ls.max_steps {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let (ft, gt) = eval(&trial)?;
            evaluations += 1;
            if ft.is_finite() && gt.iter().all(|v| v.is_finite()) {
                if ft >= f + ls.sufficient_increase * t * slope {
                    accepted = Some((ft, gt, trial));
                    break;
                }
                // Close to the optimum the predicted increase drowns in rounding; take a
                // step that does not lose value and shrinks the gradient.
                let slack = 1e-13 * (1.0 + f.abs());
                if fallback.is_none() && ft >= f - slack && sup_norm(&gt) < sup_norm(&g) {
                    fallback = Some((ft, gt, trial));
                }
            }
            t *= ls.shrink;
        }
        let Some((ft, gt, trial)) = accepted.or(fallback) else {
            break;
        };
        if sup_norm(&trial) > DIVERGENCE_BOUND {
            trace.push(ft);
            return Err(Error::Divergence { iteration: iterations, trace });
        }
        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gt).map(|(a, b)| a - b).collect();
        curv.update(&s, &y, first_update);
        first_update = false;
        if let Curvature::None = curv {
            step_hint = (t * 2.0).min(1e6);
        }
        x = trial;
        f = ft;
        g = gt;
        trace.push(f);
    }
    let converged = sup_norm(&g) <= tolerance;
    Ok(Ascent {
        x,
        value: f,
        gradient: g,
        trace,
        converged,
        iterations,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        // maximum at (1, -2) with an ill-conditioned Hessian
        let a = x[0] - 1.0;
        let b = x[1] + 2.0;
        Ok((-(a * a + 25.0 * b * b + a * b), vec![-(2.0 * a + b), -(50.0 * b + a)]))
    }

    #[test]
    fn every_method_finds_the_quadratic_maximum() {
        for m in [Method::GradientAscent, Method::Bfgs, Method::Lbfgs] {
            let out = maximize(quadratic, vec![0.0, 0.0], m, 1e-8, 20_000, LineSearch::default()).unwrap();
            assert!(out.converged, "{m:?}");
            assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] + 2.0).abs() < 1e-6, "{m:?}");
            assert!(out.trace.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }

    #[test]
    fn unbounded_objective_diverges() {
        let linear = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0], vec![1.0])) };
        let err = maximize(linear, vec![0.0], Method::GradientAscent, 1e-8, 10_000, LineSearch::default()).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn non_finite_start_is_reported() {
        let bad = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![0.0])) };
        assert!(matches!(
            maximize(bad, vec![0.0], Method::Bfgs, 1e-8, 10, LineSearch::default()),
            Err(Error::Divergence { iteration: 0, .. })
        ));
    }
}
