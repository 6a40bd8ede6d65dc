use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mrf::AnyModel;

/// An m-pair `(A, B)`: the likelihood object `log p(x_A | x_B)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct MPair {
    a: Vec<usize>,
    b: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    #[serde(rename = "A")]
    a: Vec<usize>,
    #[serde(rename = "B", default)]
    b: Vec<usize>,
}

impl TryFrom<RawPair> for MPair {
    type Error = Error;

    fn try_from(raw: RawPair) -> Result<Self> {
        MPair::new(raw.a, raw.b)
    }
}

impl From<MPair> for RawPair {
    fn from(p: MPair) -> Self {
        RawPair { a: p.a, b: p.b }
    }
}

impl MPair {
    pub fn new(mut a: Vec<usize>, mut b: Vec<usize>) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Contract("A must be non-empty".into()));
        }
        a.sort_unstable();
        b.sort_unstable();
        if a.windows(2).any(|w| w[0] == w[1]) || b.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Contract("A and B must not repeat variables".into()));
        }
        if let Some(v) = a.iter().find(|v| b.binary_search(v).is_ok()) {
            return Err(Error::Contract(format!("variable {v} appears in both A and B")));
        }
        Ok(MPair { a, b })
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }
}

/// One likelihood object of a component set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// Explicit m-pair over a fixed-size model.
    Pair(MPair),
    /// Full likelihood of a whole sample (chains: the whole sequence).
    Full,
    /// For chains: the sum over every window of `order` consecutive positions of the
    /// window's log-probability given the labels on either side.
    Window { order: usize },
}

/// Ordered likelihood objects with positive weights β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSet {
    pub components: Vec<Component>,
    pub beta: Vec<f64>,
}

/// Every size-`size` subset of `0..m` in lexicographic order.
pub fn subsets(m: usize, size: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for v in start..m {
            if m - v < size - cur.len() {
                break;
            }
            cur.push(v);
            rec(v + 1, m, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if size <= m {
        rec(0, m, size, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

impl ComponentSet {
    pub fn new(components: Vec<Component>, beta: Vec<f64>) -> Result<Self> {
        let set = ComponentSet { components, beta };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Dimension("component set is empty".into()));
        }
        if self.beta.len() != self.components.len() {
            return Err(Error::Dimension(format!(
                "{} components but {} weights",
                self.components.len(),
                self.beta.len()
            )));
        }
        if let Some(b) = self.beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::Contract(format!("component weight {b} must be positive")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// The single pair `A = {0..m}`, `B = ∅`.
    pub fn full_likelihood(m: usize) -> Result<Self> {
        Self::new(vec![Component::Pair(MPair::new((0..m).collect(), vec![])?)], vec![1.0])
    }

    /// Order-`order` pseudo-likelihood: every `A` of that size, conditioned on the rest.
    pub fn pseudo(m: usize, order: usize) -> Result<Self> {
        if order == 0 || order > m {
            return Err(Error::Contract(format!("pseudo-likelihood order {order} outside 1..={m}")));
        }
        let components = subsets(m, order)
            .into_iter()
            .map(|a| {
                let b = (0..m).filter(|v| !a.contains(v)).collect();
                MPair::new(a, b).map(Component::Pair)
            })
            .collect::<Result<Vec<_>>>()?;
        let k = components.len();
        Self::new(components, vec![1.0; k])
    }

    pub fn chain_full() -> Self {
        ComponentSet {
            components: vec![Component::Full],
            beta: vec![1.0],
        }
    }

    pub fn chain_windows(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Contract("window order must be ≥ 1".into()));
        }
        Ok(ComponentSet {
            components: vec![Component::Window { order }],
            beta: vec![1.0],
        })
    }

    pub fn concat(&self, other: &ComponentSet) -> Self {
        let mut out = self.clone();
        out.components.extend(other.components.iter().cloned());
        out.beta.extend(&other.beta);
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        ComponentSet {
            components: self.components.clone(),
            beta: self.beta.iter().map(|b| b * c).collect(),
        }
    }

    pub fn with_beta(&self, beta: Vec<f64>) -> Result<Self> {
        Self::new(self.components.clone(), beta)
    }

    /// Restricts the set to the given component indices.
    pub fn subset(&self, keep: &[usize]) -> Self {
        ComponentSet {
            components: keep.iter().map(|&j| self.components[j].clone()).collect(),
            beta: keep.iter().map(|&j| self.beta[j]).collect(),
        }
    }
}

/// JSON component specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub pairs: Vec<MPair>,
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl ComponentSpec {
    pub fn named(kind: &str) -> Self {
        ComponentSpec {
            kind: kind.to_string(),
            pairs: Vec::new(),
            beta: Vec::new(),
        }
    }

    /// Expands the spec for `model`. An empty `beta` means all ones; a single value is
    /// broadcast.
    pub fn resolve(&self, model: &AnyModel) -> Result<ComponentSet> {
        let kind = self.kind.to_ascii_uppercase();
        let mut set = match (model, kind.as_str()) {
            (AnyModel::Graph(g), "FL") => ComponentSet::full_likelihood(g.num_vars())?,
            (AnyModel::Chain(_), "FL") => ComponentSet::chain_full(),
            (_, "CUSTOM") => {
                if self.pairs.is_empty() {
                    return Err(Error::Config("pairs: custom component sets need at least one pair".into()));
                }
                if matches!(model, AnyModel::Chain(_)) {
                    return Err(Error::Config("pairs: custom m-pairs require a fixed-size model".into()));
                }
                let k = self.pairs.len();
                ComponentSet::new(self.pairs.iter().cloned().map(Component::Pair).collect(), vec![1.0; k])?
            }
            (_, pl) if pl.starts_with("PL") => {
                let order: usize = pl[2..]
                    .parse()
                    .map_err(|_| Error::Config(format!("type: unknown component type `{}`", self.kind)))?;
                match model {
                    AnyModel::Graph(g) => ComponentSet::pseudo(g.num_vars(), order)?,
                    AnyModel::Chain(_) => ComponentSet::chain_windows(order)?,
                }
            }
            _ => return Err(Error::Config(format!("type: unknown component type `{}`", self.kind))),
        };
        match self.beta.len() {
            0 => {}
            1 => set.beta = vec![self.beta[0]; set.len()],
            n if n == set.len() => set.beta = self.beta.clone(),
            n => {
                return Err(Error::Config(format!(
                    "beta: expected 1 or {} weights, found {n}",
                    set.len()
                )))
            }
        }
        set.validate()?;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mpair_validation() {
        assert!(MPair::new(vec![], vec![1]).is_err());
        assert!(MPair::new(vec![1], vec![1, 2]).is_err());
        assert!(MPair::new(vec![1, 1], vec![]).is_err());
        let p = MPair::new(vec![3, 0], vec![2]).unwrap();
        assert_eq!(p.a(), &[0, 3]);
    }

    #[test]
    fn pseudo_sets_have_binomial_size() {
        assert_eq!(ComponentSet::pseudo(5, 1).unwrap().len(), 5);
        assert_eq!(ComponentSet::pseudo(5, 2).unwrap().len(), 10);
        assert_eq!(ComponentSet::pseudo(5, 3).unwrap().len(), 10);
        let pl2 = ComponentSet::pseudo(4, 2).unwrap();
        match &pl2.components[1] {
            Component::Pair(p) => {
                assert_eq!(p.a(), &[0, 2]);
                assert_eq!(p.b(), &[1, 3]);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn json_pairs_round_trip() {
        let spec: ComponentSpec =
            serde_json::from_str(r#"{"type":"custom","pairs":[{"A":[0],"B":[1,2]}],"beta":[2.0]}"#).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains(r#""A":[0]"#));
        let bad = serde_json::from_str::<ComponentSpec>(r#"{"type":"custom","pairs":[{"A":[0],"B":[0]}]}"#);
        assert!(bad.is_err());
    }
}
