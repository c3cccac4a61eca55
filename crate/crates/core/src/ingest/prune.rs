use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::kg::{EntityId, EntityKind, GraphBuilder, GraphStats, KnowledgeGraph, Triple};

use super::bins::{level_label, BinConfig, BinRule, Bins};
use super::level_node_name;

/// Resolved bins keyed by relation name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinSet {
    bins: BTreeMap<String, Bins>,
}

impl BinSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, bins: Bins) {
        self.bins.insert(bins.feature.clone(), bins);
    }

    pub fn get(&self, relation: &str) -> Option<&Bins> {
        self.bins.get(relation)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Bins> {
        self.bins.values()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Fixed-edge rules reproducing these bins exactly.
    pub fn to_config(&self) -> BinConfig {
        BinConfig {
            rules: self
                .bins
                .iter()
                .map(|(k, b)| (k.clone(), BinRule::Edges(b.edges().to_vec())))
                .collect(),
            default: None,
        }
    }

    /// Bins from a configuration holding only fixed-edge rules.
    pub fn from_config(config: &BinConfig) -> Result<Self> {
        let mut set = Self::new();
        for (feature, rule) in &config.rules {
            match rule {
                BinRule::Edges(e) => set.insert(Bins::new(feature, rule.clone(), e.clone())?),
                BinRule::Quantile(_) => {
                    return Err(Error::Config(format!(
                        "{feature}: quantile rules need data; expected fixed edges"
                    )))
                }
            }
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneReport {
    pub nodes_removed: usize,
    pub nodes_created: usize,
    pub stats_before: GraphStats,
    pub stats_after: GraphStats,
}

/// Resolves a rule for every relation that has continuous-valued nodes in
/// `ug`. Quantile rules see one value per region edge.
pub fn resolve_bins(ug: &KnowledgeGraph, config: &BinConfig) -> Result<BinSet> {
    let mut values: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for t in ug.triples() {
        if let Some(x) = ug.literal(t.tail)? {
            values
                .entry(ug.relation_name(t.relation)?)
                .or_default()
                .push(x);
        }
    }
    let mut set = BinSet::new();
    for (relation, vals) in values {
        let rule = config
            .rule_for(relation)
            .ok_or_else(|| Error::Config(format!("no bin rule for {relation}")))?;
        let edges = rule.resolve(&vals)?;
        set.insert(Bins::new(relation, rule.clone(), edges)?);
    }
    Ok(set)
}

/// Replaces every continuous-value node with a shared per-relation level
/// node. Region edges to continuous values are rewired to `rel:Lk`; all
/// other triples, the entity order of surviving nodes and the relation
/// vocabulary are kept.
pub fn prune_graph(ug: &KnowledgeGraph, bins: &BinSet) -> Result<(KnowledgeGraph, PruneReport)> {
    let stats_before = ug.stats()?;
    let mut b = GraphBuilder::new();
    let mut remap: Vec<Option<EntityId>> = vec![None; ug.num_entities()];
    let mut nodes_removed = 0;
    for (i, name) in ug.entity_names().iter().enumerate() {
        let id = EntityId(i);
        if ug.literal(id)?.is_some() {
            nodes_removed += 1;
        } else {
            remap[i] = Some(b.add_entity(name, ug.kind(id)?)?);
        }
    }
    for name in ug.relation_names() {
        b.add_relation(name);
    }
    let mut nodes_created = 0;
    for t in ug.triples() {
        let (head, tail) = match (remap[t.head.0], remap[t.tail.0]) {
            (Some(h), Some(tl)) => (h, tl),
            (Some(h), None) => (h, level_node(ug, &mut b, bins, t, t.tail, &mut nodes_created)?),
            (None, Some(tl)) => (level_node(ug, &mut b, bins, t, t.head, &mut nodes_created)?, tl),
            (None, None) => {
                return Err(Error::Ingestion(format!(
                    "triple between two continuous values: {t:?}"
                )))
            }
        };
        b.add_triple(Triple::new(head, t.relation, tail))?;
    }
    let ugp = b.freeze();
    let stats_after = ugp.stats()?;
    Ok((
        ugp,
        PruneReport {
            nodes_removed,
            nodes_created,
            stats_before,
            stats_after,
        },
    ))
}

fn level_node(
    ug: &KnowledgeGraph,
    b: &mut GraphBuilder,
    bins: &BinSet,
    t: &Triple,
    value_node: EntityId,
    created: &mut usize,
) -> Result<EntityId> {
    let relation = ug.relation_name(t.relation)?;
    let spec = bins
        .get(relation)
        .ok_or_else(|| Error::Config(format!("missing bin spec for continuous feature {relation}")))?;
    let x = ug.literal(value_node)?.expect("caller checked literal");
    let name = level_node_name(relation, &level_label(spec.level(x)?));
    if b.entity_id(&name).is_none() {
        *created += 1;
    }
    b.add_entity(&name, EntityKind::LevelNode)
}

#[cfg(test)]
mod tests {
    use super::super::{build_user_graph, Category, FeatureDef, FeatureRecord, FeatureSchema, FeatureValue, ValueKind};
    use super::*;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureDef {
                name: "Soil".into(),
                relation: "Area.Soil".into(),
                kind: ValueKind::Discrete,
                category: Category::GeographicalLocation,
                multi_valued: false,
            },
            FeatureDef {
                name: "Gross GDP".into(),
                relation: "Area.GDP".into(),
                kind: ValueKind::Continuous,
                category: Category::EconomicDevelopment,
                multi_valued: false,
            },
        ])
        .unwrap()
    }

    fn gdp_only(values: &[(&str, f64)]) -> KnowledgeGraph {
        let recs: Vec<_> = values
            .iter()
            .map(|(r, x)| FeatureRecord {
                region: (*r).into(),
                values: vec![FeatureValue::Missing, FeatureValue::Continuous(*x)],
            })
            .collect();
        build_user_graph(&recs, &schema()).unwrap()
    }

    fn gdp_bins() -> BinSet {
        let mut set = BinSet::new();
        set.insert(Bins::with_edges("Area.GDP", vec![200.0, 400.0]).unwrap());
        set
    }

    #[test]
    fn same_bin_values_merge() {
        let ug = gdp_only(&[("a", 100.2), ("b", 100.5)]);
        let (ugp, report) = prune_graph(&ug, &gdp_bins()).unwrap();
        assert_eq!(report.nodes_removed, 2);
        assert_eq!(report.nodes_created, 1);
        let level = ugp.entity_id("Area.GDP:L1").unwrap();
        assert_eq!(ugp.kind(level).unwrap(), EntityKind::LevelNode);
        assert_eq!(ugp.degree(level).unwrap(), 2);
        assert!(report.stats_after.density > report.stats_before.density);
        assert_eq!(ugp.num_relations(), ug.num_relations());
    }

    #[test]
    fn discrete_only_graph_is_unchanged() {
        let recs: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|r| FeatureRecord {
                region: (*r).into(),
                values: vec![FeatureValue::Discrete(vec!["red".into()]), FeatureValue::Missing],
            })
            .collect();
        let ug = build_user_graph(&recs, &schema()).unwrap();
        let (ugp, report) = prune_graph(&ug, &BinSet::new()).unwrap();
        assert_eq!((report.nodes_removed, report.nodes_created), (0, 0));
        assert_eq!(report.stats_before, report.stats_after);
        assert_eq!(ugp.entity_names(), ug.entity_names());
        assert_eq!(ugp.triples(), ug.triples());
    }

    #[test]
    fn missing_bins_is_config_error() {
        let ug = gdp_only(&[("a", 1.0), ("b", 2.0)]);
        assert!(matches!(prune_graph(&ug, &BinSet::new()), Err(Error::Config(_))));
    }

    #[test]
    fn idempotent_and_degree_preserving() {
        let ug = gdp_only(&[("a", 10.0), ("b", 250.0), ("c", 260.0), ("d", 900.0)]);
        let (once, _) = prune_graph(&ug, &gdp_bins()).unwrap();
        let (twice, report) = prune_graph(&once, &gdp_bins()).unwrap();
        assert_eq!(report.nodes_removed, 0);
        assert_eq!(once.entity_names(), twice.entity_names());
        assert_eq!(once.triples(), twice.triples());
        for r in ug.regions() {
            assert_eq!(ug.degree(r).unwrap(), once.degree(r).unwrap());
        }
        // b and c share a level, so a length-2 path joins them.
        let b = once.entity_id("b").unwrap();
        let c = once.entity_id("c").unwrap();
        let via: Vec<_> = once.neighbors(b).unwrap().iter().map(|p| p.1).collect();
        assert!(via
            .iter()
            .any(|&v| once.neighbors(v).unwrap().iter().any(|p| p.1 == c)));
    }

    #[test]
    fn quantile_resolution_covers_continuous_relations() {
        let ug = gdp_only(&[("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 4.0), ("e", 5.0)]);
        let set = resolve_bins(&ug, &BinConfig::default()).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get("Area.GDP").unwrap().edges(), &[2.0, 3.0, 4.0]);
    }
}
