use serde::{Deserialize, Serialize};

use super::chain::ChainModel;
use super::graph::{FeatureMap, GraphModel, ModelKind};
use crate::error::{Error, Result};

/// JSON model description.
///
/// For `generic` models `cardinalities` and `cliques` are required. For a
/// `boltzmann_machine` only `m` is used. For chain kinds `cardinalities` is
/// `[labels, observations]`, `m` is the default sequence length and `tied` must be true.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub m: usize,
    #[serde(default)]
    pub cardinalities: Vec<usize>,
    #[serde(default)]
    pub cliques: Vec<Vec<usize>>,
    #[serde(default = "default_tied")]
    pub tied: bool,
    #[serde(default)]
    pub features: FeatureMap,
}

fn default_tied() -> bool {
    true
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    Graph(GraphModel),
    Chain(ChainModel),
}

impl ModelSpec {
    pub fn boltzmann_machine(m: usize) -> Self {
        ModelSpec {
            kind: ModelKind::BoltzmannMachine,
            m,
            cardinalities: Vec::new(),
            cliques: Vec::new(),
            tied: true,
            features: FeatureMap::Product,
        }
    }

    pub fn build(&self) -> Result<AnyModel> {
        match self.kind {
            ModelKind::BoltzmannMachine => Ok(AnyModel::Graph(GraphModel::boltzmann_machine(self.m)?)),
            ModelKind::Generic => {
                if self.cardinalities.len() != self.m {
                    return Err(Error::Config(format!(
                        "cardinalities: expected {} entries, found {}",
                        self.m,
                        self.cardinalities.len()
                    )));
                }
                if self.cliques.is_empty() {
                    return Err(Error::Config("cliques: a generic model needs at least one clique".into()));
                }
                Ok(AnyModel::Graph(GraphModel::generic(
                    self.cardinalities.clone(),
                    &self.cliques,
                    self.features,
                )?))
            }
            ModelKind::BoltzmannChain | ModelKind::LinearChainCrf => {
                if !self.tied {
                    return Err(Error::Config("tied: chain models are only supported with tied parameters".into()));
                }
                let [labels, obs] = self.cardinalities[..] else {
                    return Err(Error::Config(
                        "cardinalities: chain models expect [labels, observations]".into(),
                    ));
                };
                let chain = if self.kind == ModelKind::BoltzmannChain {
                    ChainModel::boltzmann_chain(labels, obs)?
                } else {
                    ChainModel::crf_dense(labels, obs)?
                };
                Ok(AnyModel::Chain(chain))
            }
        }
    }
}
