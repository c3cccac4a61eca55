//! Feature table to training graph.

use crate::error::{Error, Result};
use crate::ingest::{build_user_graph, prune_graph, resolve_bins, BinConfig, BinSet, FeatureRecord, FeatureSchema, PruneReport};
use crate::interactions::Vocab;
use crate::kg::{EntityKind, KnowledgeGraph};

#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub graph: KnowledgeGraph,
    pub bins: BinSet,
    /// Present when the graph was pruned.
    pub report: Option<PruneReport>,
    pub users: Vocab,
}

/// Builds the region graph from `records` and, when `prune` is set, replaces
/// continuous values with level nodes. Bins are resolved either way so they
/// can be stored with a model.
pub fn prepare_graph(
    records: &[FeatureRecord],
    schema: &FeatureSchema,
    bins: &BinConfig,
    prune: bool,
) -> Result<PreparedGraph> {
    let ug = build_user_graph(records, schema)?;
    let resolved = resolve_bins(&ug, bins)?;
    let (graph, report) = if prune {
        let (g, r) = prune_graph(&ug, &resolved)?;
        (g, Some(r))
    } else {
        (ug, None)
    };
    let users = region_vocab(&graph)?;
    Ok(PreparedGraph {
        graph,
        bins: resolved,
        report,
        users,
    })
}

/// Region names in entity order. Regions must hold the first entity ids,
/// since a region's entity id doubles as its user index.
pub fn region_vocab(graph: &KnowledgeGraph) -> Result<Vocab> {
    let regions = graph.regions();
    if let Some((pos, id)) = regions.iter().enumerate().find(|(k, id)| id.0 != *k) {
        return Err(Error::Ingestion(format!(
            "region {:?} has entity id {} but should be {pos}",
            graph.entity_name(*id)?,
            id.0
        )));
    }
    debug_assert!(regions.iter().all(|&r| graph.kind(r).ok() == Some(EntityKind::Region)));
    Vocab::from_names(graph.entity_names()[..regions.len()].iter().cloned())
}
