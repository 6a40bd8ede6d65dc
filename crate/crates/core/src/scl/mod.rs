//! Stochastic composite likelihood: component sets, selection policies, the objective
//! and its gradient, and FLOP accounting.

mod components;
mod objective;
mod policy;

pub use components::{subsets, Component, ComponentSet, ComponentSpec, MPair};
pub use objective::{
    expected_flops, flop_count, plan_all, scl_gradient, scl_value, shared_counts, FlopLedger, Objective,
};
pub use policy::{prune_zero_lambda, IndicatorMatrix, PolicyFamily, SelectionPolicy};
