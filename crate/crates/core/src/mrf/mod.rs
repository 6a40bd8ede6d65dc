//! Discrete Markov random fields with exact inference.
//!
//! Two model families are provided. [`GraphModel`] covers arbitrary clique sets over a
//! fixed number of variables and answers every query by enumerating the relevant
//! sub-table. [`ChainModel`] covers the tied-parameter Boltzmann chain and linear-chain
//! CRF, where queries are answered by forward-backward dynamic programming over
//! variable-length sequences.

mod chain;
mod graph;
mod spec;

pub use chain::{ChainAccum, ChainKind, ChainModel, ChainPlan, ChainPrepared, Sequence};
pub use graph::{
    Assignment, Factor, FeatureMap, GraphModel, GraphPlan, GraphPrepared, ModelKind,
    DEFAULT_ENUM_CAP,
};
pub use spec::{AnyModel, ModelSpec};

use std::fmt::Debug;
use std::hash::Hash;

use crate::error::Result;
use crate::scl::Component;

/// Floating-point-operation cost of evaluating one likelihood object on one sample.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Flops {
    pub objective: u64,
    pub gradient: u64,
}

/// The interface the composite-likelihood machinery needs from a model family.
///
/// A `Plan` is the sample-independent part of a likelihood object (which variables are
/// enumerated, which factors matter). `Prepared` caches everything that depends only on
/// θ. `Accum` collects gradient contributions; families are free to defer dense work
/// until [`Family::finish_accum`].
pub trait Family: Sync {
    type Sample: Clone + Debug + Eq + Hash + Send + Sync;
    type Plan: Debug + Send + Sync;
    type Prepared: Send + Sync;
    type Accum: Send;

    fn num_params(&self) -> usize;

    fn check_sample(&self, sample: &Self::Sample) -> Result<()>;

    fn plan(&self, component: &Component) -> Result<Self::Plan>;

    /// Number of variables in the conditioned-upon block, used to share per-sample
    /// bookkeeping between likelihood objects of equal order.
    fn component_order(&self, plan: &Self::Plan) -> usize;

    fn prepare(&self, theta: &[f64]) -> Result<Self::Prepared>;

    /// `log p(x_A | x_B)` for the likelihood object described by `plan`.
    fn component_log_prob(
        &self,
        prepared: &Self::Prepared,
        plan: &Self::Plan,
        sample: &Self::Sample,
    ) -> f64;

    /// Same as [`Family::component_log_prob`], additionally adding `weight × ∇ log p`
    /// into `acc`.
    fn accumulate_component(
        &self,
        prepared: &Self::Prepared,
        plan: &Self::Plan,
        sample: &Self::Sample,
        weight: f64,
        acc: &mut Self::Accum,
    ) -> f64;

    fn new_accum(&self) -> Self::Accum;

    fn merge_accum(&self, into: &mut Self::Accum, other: Self::Accum);

    fn finish_accum(&self, prepared: &Self::Prepared, acc: Self::Accum) -> Vec<f64>;

    /// FLOP cost of one evaluation; `shared` is the number of likelihood objects of the
    /// same order in the component set.
    fn component_flops(&self, plan: &Self::Plan, sample: &Self::Sample, shared: usize) -> Flops;

    /// Score vector `∇ log p(x_A | x_B)` of one likelihood object.
    fn component_score(
        &self,
        prepared: &Self::Prepared,
        plan: &Self::Plan,
        sample: &Self::Sample,
    ) -> Vec<f64> {
        let mut acc = self.new_accum();
        self.accumulate_component(prepared, plan, sample, 1.0, &mut acc);
        self.finish_accum(prepared, acc)
    }
}

/// Iterates over all configurations of a mixed-radix counter, last digit fastest.
pub(crate) struct Odometer {
    radix: Vec<usize>,
    state: Vec<usize>,
    started: bool,
}

impl Odometer {
    pub(crate) fn new(radix: Vec<usize>) -> Self {
        let state = vec![0; radix.len()];
        Odometer {
            radix,
            state,
            started: false,
        }
    }

    /// Advances to the next configuration; returns `None` once exhausted.
    pub(crate) fn next(&mut self) -> Option<&[usize]> {
        if !self.started {
            self.started = true;
            return Some(&self.state);
        }
        for i in (0..self.radix.len()).rev() {
            self.state[i] += 1;
            if self.state[i] < self.radix[i] {
                return Some(&self.state);
            }
            self.state[i] = 0;
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::Odometer;

    #[test]
    fn odometer_visits_every_configuration_once() {
        let mut odo = Odometer::new(vec![2, 3]);
        let mut seen = Vec::new();
        while let Some(s) = odo.next() {
            seen.push(s.to_vec());
        }
        assert_eq!(
            seen,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![1, 2]
            ]
        );
        let mut empty = Odometer::new(vec![]);
        assert_eq!(empty.next(), Some(&[][..]));
        assert_eq!(empty.next(), None);
    }
}
