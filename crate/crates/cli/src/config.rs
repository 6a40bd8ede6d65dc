use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scl_core::estimator::FitConfig;
use scl_core::experiment::ChunkConfig;
use scl_core::mrf::{AnyModel, ModelSpec};
use scl_core::scl::{ComponentSet, ComponentSpec, PolicyFamily, SelectionPolicy};

/// Selection policy over component groups.
///
/// `lambda` holds one probability per group (broadcast to the group's components) or
/// one per component; empty means "always select" for independence and uniform
/// probabilities otherwise. Product-of-multinomial blocks default to the groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySpec {
    pub family: PolicyFamily,
    pub lambda: Vec<f64>,
    pub blocks: Vec<Vec<usize>>,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            family: PolicyFamily::Independence,
            lambda: Vec::new(),
            blocks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPaths {
    pub train: PathBuf,
    pub test: PathBuf,
}

/// Named list of component groups. `tradeoff` mixes two groups by the λ and β grids;
/// `asymvar` uses `lambda` (per group, empty = always select) for its table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub groups: Vec<ComponentSpec>,
    #[serde(default)]
    pub lambda: Vec<f64>,
}

fn default_components() -> Vec<ComponentSpec> {
    vec![ComponentSpec::named("FL")]
}

fn default_n() -> usize {
    100
}

fn default_replicates() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub theta0: Vec<f64>,
    /// Training samples drawn when no dataset file is given.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Held-out samples (seed + 1) for tradeoff test objectives.
    #[serde(default)]
    pub test_n: usize,
    /// Dataset JSON written by `sample`; overrides synthetic generation.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub corpus: Option<CorpusPaths>,
    #[serde(default = "default_components")]
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub policy: PolicySpec,
    #[serde(default)]
    pub families: Vec<FamilySpec>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub beta_grid: Vec<f64>,
    #[serde(default)]
    pub sigma2_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub auto_beta: bool,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub chunk: ChunkConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// SHA-256 of the effective configuration (after command-line overrides), excluding
    /// the output directory.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("configuration serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("out");
        }
        let canonical = value.to_string();
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn build_model(&self) -> Result<AnyModel> {
        let mut model = self.model.build().context("model")?;
        if let Ok(cap) = std::env::var("SCL_ENUM_CAP") {
            let cap: u64 = cap.parse().context("SCL_ENUM_CAP must be a non-negative integer")?;
            if let AnyModel::Graph(g) = model {
                model = AnyModel::Graph(g.with_enum_cap(cap));
            }
        }
        Ok(model)
    }

    pub fn check_grids(&self) -> Result<()> {
        if self.replicates == 0 {
            bail!("replicates: must be at least 1");
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            bail!("lambda_grid: {l} outside [0, 1]");
        }
        if let Some(b) = self.beta_grid.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            bail!("beta_grid: {b} outside (0, 1)");
        }
        if let Some(s) = self.sigma2_grid.iter().find(|s| !(**s > 0.0)) {
            bail!("sigma2_grid: {s} is not positive");
        }
        Ok(())
    }
}

/// Concatenated component groups and the index range of each group.
pub fn resolve_groups(model: &AnyModel, specs: &[ComponentSpec]) -> Result<(ComponentSet, Vec<Vec<usize>>)> {
    if specs.is_empty() {
        bail!("components: at least one component group is required");
    }
    let mut set: Option<ComponentSet> = None;
    let mut groups = Vec::new();
    for (i, spec) in specs.iter().enumerate() {
        let part = spec.resolve(model).with_context(|| format!("components[{i}]"))?;
        let start = set.as_ref().map_or(0, |s| s.len());
        groups.push((start..start + part.len()).collect());
        set = Some(match set {
            None => part,
            Some(s) => s.concat(&part),
        });
    }
    Ok((set.expect("non-empty"), groups))
}

pub fn resolve_policy(spec: &PolicySpec, groups: &[Vec<usize>]) -> Result<SelectionPolicy> {
    let k: usize = groups.iter().map(Vec::len).sum();
    let blocks = if spec.blocks.is_empty() { groups.to_vec() } else { spec.blocks.clone() };
    let lambda = if spec.lambda.is_empty() {
        match spec.family {
            PolicyFamily::Independence => vec![1.0; k],
            PolicyFamily::Multinomial => vec![1.0 / k as f64; k],
            PolicyFamily::ProductOfMultinomials => {
                let mut l = vec![0.0; k];
                for b in &blocks {
                    for &j in b {
                        if j < k {
                            l[j] = 1.0 / b.len() as f64;
                        }
                    }
                }
                l
            }
        }
    } else if spec.lambda.len() == groups.len() && groups.len() != k {
        let mut l = vec![0.0; k];
        for (g, &v) in groups.iter().zip(&spec.lambda) {
            for &j in g {
                l[j] = v;
            }
        }
        l
    } else if spec.lambda.len() == k {
        spec.lambda.clone()
    } else {
        bail!(
            "policy.lambda: expected {} (one per group) or {k} (one per component) values, found {}",
            groups.len(),
            spec.lambda.len()
        );
    };
    let policy = match spec.family {
        PolicyFamily::Independence => SelectionPolicy::independence(lambda),
        PolicyFamily::Multinomial => SelectionPolicy::multinomial(lambda),
        PolicyFamily::ProductOfMultinomials => SelectionPolicy::product_of_multinomials(lambda, blocks),
    };
    policy.context("policy")
}

pub fn parse_grid(text: &str, name: &str) -> Result<Vec<f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("{name}: `{s}` is not a number"))
        })
        .collect()
}
