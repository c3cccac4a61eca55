//! Region feature ingestion and graph pruning.

mod bins;
mod prune;
mod schema;

pub use bins::{discretize, level_label, BinConfig, BinRule, BinSpec, Bins};
pub use prune::{prune_graph, resolve_bins, BinSet, PruneReport};
pub use schema::{Category, FeatureDef, FeatureSchema, ValueKind};

use std::collections::HashSet;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::kg::{EntityKind, GraphBuilder, KnowledgeGraph, Triple};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Missing,
    Discrete(Vec<String>),
    Continuous(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub region: String,
    /// One value per schema entry, in schema order.
    pub values: Vec<FeatureValue>,
}

impl FeatureRecord {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::Schema(format!(
                "region {}: {} values for {} schema entries",
                self.region,
                self.values.len(),
                schema.len()
            )));
        }
        for (v, f) in self.values.iter().zip(schema.features()) {
            match (v, f.kind) {
                (FeatureValue::Missing, _) => {}
                (FeatureValue::Discrete(items), ValueKind::Discrete) => {
                    if !f.multi_valued && items.len() > 1 {
                        return Err(Error::Schema(format!(
                            "region {}: {} is single-valued",
                            self.region, f.name
                        )));
                    }
                }
                (FeatureValue::Continuous(x), ValueKind::Continuous) => {
                    if !x.is_finite() {
                        return Err(Error::Value(format!(
                            "region {}: {} = {x}",
                            self.region, f.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "region {}: value kind mismatch for {}",
                        self.region, f.name
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Entity name for a raw feature value. Continuous values use Rust's
/// shortest round-trip formatting so the literal can be parsed back exactly.
pub fn value_node_name(relation: &str, value: &str) -> String {
    format!("{relation}={value}")
}

pub fn level_node_name(relation: &str, label: &str) -> String {
    format!("{relation}:{label}")
}

/// Builds the unpruned region-feature graph.
///
/// Region entities take ids `0..records.len()` in record order, and every
/// schema relation is registered in schema order whether used or not.
pub fn build_user_graph(records: &[FeatureRecord], schema: &FeatureSchema) -> Result<KnowledgeGraph> {
    let mut b = GraphBuilder::new();
    let mut seen = HashSet::new();
    for rec in records {
        rec.validate(schema)?;
        if !seen.insert(rec.region.as_str()) {
            return Err(Error::Ingestion(format!("duplicate region id {:?}", rec.region)));
        }
        b.add_entity(&rec.region, EntityKind::Region)?;
    }
    let relations: Vec<_> = schema
        .features()
        .iter()
        .map(|f| b.add_relation(&f.relation))
        .collect();
    for (u, rec) in records.iter().enumerate() {
        let head = crate::kg::EntityId(u);
        for ((value, f), &r) in rec.values.iter().zip(schema.features()).zip(&relations) {
            match value {
                FeatureValue::Missing => {}
                FeatureValue::Discrete(items) => {
                    for item in items {
                        let tail = b.add_entity(
                            &value_node_name(&f.relation, item),
                            EntityKind::FeatureValue,
                        )?;
                        b.add_triple(Triple::new(head, r, tail))?;
                    }
                }
                FeatureValue::Continuous(x) => {
                    let tail = b.add_literal(&value_node_name(&f.relation, &x.to_string()), *x)?;
                    b.add_triple(Triple::new(head, r, tail))?;
                }
            }
        }
    }
    Ok(b.freeze())
}

/// Rebuilds a graph from named triples using the node naming convention of
/// [`build_user_graph`] and [`prune_graph`]: heads are regions, tails named
/// `rel:Lk` are level nodes, and tails of continuous relations named
/// `rel=x` carry the literal `x`.
pub fn graph_from_triples(
    rows: &[(String, String, String)],
    schema: &FeatureSchema,
) -> Result<KnowledgeGraph> {
    let mut b = GraphBuilder::new();
    for (h, _, _) in rows {
        b.add_entity(h, EntityKind::Region)?;
    }
    for f in schema.features() {
        b.add_relation(&f.relation);
    }
    for (h, r, t) in rows {
        let feature = schema
            .by_relation(r)
            .ok_or_else(|| Error::Schema(format!("unknown relation {r:?}")))?;
        let head = b.entity_id(h).expect("registered above");
        let rel = b.add_relation(r);
        let tail = if let Some(label) = t.strip_prefix(&format!("{r}:")) {
            if !is_level_label(label) {
                return Err(Error::Ingestion(format!("malformed level node {t:?}")));
            }
            b.add_entity(t, EntityKind::LevelNode)?
        } else if let Some(raw) = t.strip_prefix(&format!("{r}=")) {
            match feature.kind {
                ValueKind::Continuous => {
                    let x: f64 = raw
                        .parse()
                        .map_err(|_| Error::Schema(format!("non-numeric value {t:?}")))?;
                    b.add_literal(t, x)?
                }
                ValueKind::Discrete => b.add_entity(t, EntityKind::FeatureValue)?,
            }
        } else {
            return Err(Error::Ingestion(format!(
                "tail {t:?} does not belong to relation {r:?}"
            )));
        };
        b.add_triple(Triple::new(head, rel, tail))?;
    }
    Ok(b.freeze())
}

fn is_level_label(s: &str) -> bool {
    s.strip_prefix('L')
        .is_some_and(|n| !n.is_empty() && n.bytes().all(|c| c.is_ascii_digit()))
}

/// Reads a feature table: first column is the region id, remaining header
/// cells are schema feature names in any order. Empty cells are missing;
/// list-valued cells use `|` separators.
pub fn read_feature_table<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Vec<FeatureRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Schema("empty header row".into()));
    }
    let mut columns = vec![None; schema.len()];
    for (col, name) in headers.iter().enumerate().skip(1) {
        let idx = schema
            .by_name(name.trim())
            .ok_or_else(|| Error::Schema(format!("unknown feature column {name:?}")))?;
        if columns[idx].replace(col).is_some() {
            return Err(Error::Schema(format!("duplicate feature column {name:?}")));
        }
    }
    if let Some(missing) = columns.iter().position(Option::is_none) {
        return Err(Error::Schema(format!(
            "missing feature column {:?}",
            schema.features()[missing].name
        )));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let region = row.get(0).unwrap_or("").trim().to_owned();
        if region.is_empty() {
            return Err(Error::Ingestion("empty region id".into()));
        }
        let mut values = Vec::with_capacity(schema.len());
        for (f, col) in schema.features().iter().zip(&columns) {
            let cell = row.get(col.expect("checked")).unwrap_or("").trim();
            values.push(parse_cell(cell, f, &region)?);
        }
        let rec = FeatureRecord { region, values };
        rec.validate(schema)?;
        records.push(rec);
    }
    Ok(records)
}

fn parse_cell(cell: &str, f: &FeatureDef, region: &str) -> Result<FeatureValue> {
    if cell.is_empty() {
        return Ok(FeatureValue::Missing);
    }
    match f.kind {
        ValueKind::Continuous => {
            let x: f64 = cell.parse().map_err(|_| {
                Error::Schema(format!("region {region}: {} = {cell:?} is not numeric", f.name))
            })?;
            if !x.is_finite() {
                return Err(Error::Value(format!("region {region}: {} = {cell}", f.name)));
            }
            Ok(FeatureValue::Continuous(x))
        }
        ValueKind::Discrete => {
            let items: Vec<String> = cell
                .split('|')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect();
            Ok(if items.is_empty() {
                FeatureValue::Missing
            } else {
                FeatureValue::Discrete(items)
            })
        }
    }
}

pub fn write_feature_table<W: Write>(
    writer: W,
    schema: &FeatureSchema,
    records: &[FeatureRecord],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["region_id".to_owned()];
    header.extend(schema.features().iter().map(|f| f.name.clone()));
    w.write_record(&header)?;
    for rec in records {
        let mut row = vec![rec.region.clone()];
        for v in &rec.values {
            row.push(match v {
                FeatureValue::Missing => String::new(),
                FeatureValue::Discrete(items) => items.join("|"),
                FeatureValue::Continuous(x) => x.to_string(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
