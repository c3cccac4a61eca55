//! Discretization rules for continuous features.
//!
//! A [`BinRule`] is either a fixed list of ascending cut points or a quantile
//! count resolved against observed values. Resolved [`Bins`] map a finite
//! value to a level `L1..Ln` using half-open intervals `[edge_k, edge_k+1)`,
//! where the first interval is unbounded below and the last unbounded above.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinRule {
    Edges(Vec<f64>),
    Quantile(usize),
}

impl BinRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            BinRule::Edges(edges) => check_edges(edges),
            BinRule::Quantile(n) if *n < 2 => {
                Err(Error::Config(format!("quantile count must be >= 2, got {n}")))
            }
            BinRule::Quantile(_) => Ok(()),
        }
    }

    /// Turns the rule into concrete cut points. Quantile edges use linear
    /// interpolation between order statistics; coincident cut points are
    /// collapsed so the result stays strictly ascending.
    pub fn resolve(&self, values: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            BinRule::Edges(edges) => Ok(edges.clone()),
            BinRule::Quantile(n) => {
                if values.is_empty() {
                    return Err(Error::Config("no values to compute quantiles from".into()));
                }
                if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Value(format!("non-finite value {bad}")));
                }
                let mut sorted = values.to_vec();
                sorted.sort_by(f64::total_cmp);
                let m = sorted.len();
                let mut edges: Vec<f64> = Vec::with_capacity(n - 1);
                for k in 1..*n {
                    let h = (m - 1) as f64 * k as f64 / *n as f64;
                    let lo = h.floor() as usize;
                    let hi = (lo + 1).min(m - 1);
                    let q = sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]);
                    if edges.last().is_none_or(|&last| q > last) {
                        edges.push(q);
                    }
                }
                Ok(edges)
            }
        }
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.is_empty() {
        return Err(Error::Config("bin edge list is empty".into()));
    }
    if edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config("bin edges must be finite".into()));
    }
    if edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "bin edges must be strictly ascending: {edges:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpec {
    pub feature: String,
    pub rule: BinRule,
}

/// Resolved cut points for one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub feature: String,
    pub rule: BinRule,
    edges: Vec<f64>,
}

impl Bins {
    pub fn new(feature: impl Into<String>, rule: BinRule, edges: Vec<f64>) -> Result<Self> {
        if !edges.is_empty() {
            check_edges(&edges)?;
        }
        Ok(Self {
            feature: feature.into(),
            rule,
            edges,
        })
    }

    pub fn with_edges(feature: impl Into<String>, edges: Vec<f64>) -> Result<Self> {
        let rule = BinRule::Edges(edges.clone());
        rule.validate()?;
        Self::new(feature, rule, edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_levels(&self) -> usize {
        self.edges.len() + 1
    }

    /// 1-based level of `value`.
    pub fn level(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(Error::Value(format!(
                "cannot discretize non-finite value {value} for {}",
                self.feature
            )));
        }
        Ok(self.edges.partition_point(|&e| e <= value) + 1)
    }
}

pub fn level_label(level: usize) -> String {
    format!("L{level}")
}

/// Level label (`"L1"`, `"L2"`, ...) of `value` under `bins`.
pub fn discretize(value: f64, bins: &Bins) -> Result<String> {
    bins.level(value).map(level_label)
}

/// Per-feature rules as read from a bin configuration file. Features
/// without an explicit entry fall back to `default`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinConfig {
    pub rules: BTreeMap<String, BinRule>,
    pub default: Option<BinRule>,
}

impl Default for BinConfig {
    fn default() -> Self {
        Self {
            rules: BTreeMap::new(),
            default: Some(BinRule::Quantile(4)),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantile: Option<usize>,
}

impl BinConfig {
    /// Parses a TOML document with one table per feature relation, each
    /// holding either `edges = [...]` or `quantile = n`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: BTreeMap<String, RuleEntry> =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut rules = BTreeMap::new();
        for (feature, entry) in table {
            let rule = match (entry.edges, entry.quantile) {
                (Some(e), None) => BinRule::Edges(e),
                (None, Some(n)) => BinRule::Quantile(n),
                _ => {
                    return Err(Error::Config(format!(
                        "{feature}: exactly one of `edges` or `quantile` is required"
                    )))
                }
            };
            rule.validate()
                .map_err(|e| Error::Config(format!("{feature}: {e}")))?;
            rules.insert(feature, rule);
        }
        Ok(Self {
            rules,
            ..Self::default()
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Inverse of [`BinConfig::from_toml`]; the default rule is not written.
    pub fn to_toml(&self) -> String {
        let table: BTreeMap<&str, RuleEntry> = self
            .rules
            .iter()
            .map(|(k, r)| {
                let entry = match r {
                    BinRule::Edges(e) => RuleEntry {
                        edges: Some(e.clone()),
                        quantile: None,
                    },
                    BinRule::Quantile(n) => RuleEntry {
                        edges: None,
                        quantile: Some(*n),
                    },
                };
                (k.as_str(), entry)
            })
            .collect();
        toml::to_string(&table).expect("bin rules serialize")
    }

    pub fn rule_for(&self, feature: &str) -> Option<&BinRule> {
        self.rules.get(feature).or(self.default.as_ref())
    }
}
