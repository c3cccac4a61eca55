//! Typed triple store with symmetric adjacency.
//!
//! A [`GraphBuilder`] interns entity and relation names into dense ids in
//! first-seen order and collects deduplicated triples. [`GraphBuilder::freeze`]
//! produces an immutable [`KnowledgeGraph`] whose adjacency lists expose every
//! triple from both endpoints, sorted by `(relation, entity)`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub usize);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Region,
    FeatureValue,
    LevelNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub density: f64,
}

/// String interner assigning dense ids in first-seen order.
#[derive(Debug, Clone, Default, PartialEq)]
struct Interner {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> (usize, bool) {
        if let Some(&i) = self.index.get(name) {
            return (i, false);
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        (i, true)
    }

    fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn len(&self) -> usize {
        self.names.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    entities: Interner,
    kinds: Vec<EntityKind>,
    literals: Vec<Option<f64>>,
    relations: Interner,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers an entity, returning the existing id when the name is known.
    pub fn add_entity(&mut self, name: &str, kind: EntityKind) -> Result<EntityId> {
        self.add_entity_inner(name, kind, None)
    }

    /// Registers a feature-value entity carrying a numeric literal.
    pub fn add_literal(&mut self, name: &str, value: f64) -> Result<EntityId> {
        self.add_entity_inner(name, EntityKind::FeatureValue, Some(value))
    }

    fn add_entity_inner(
        &mut self,
        name: &str,
        kind: EntityKind,
        literal: Option<f64>,
    ) -> Result<EntityId> {
        let (i, fresh) = self.entities.intern(name);
        if fresh {
            self.kinds.push(kind);
            self.literals.push(literal);
        } else if self.kinds[i] != kind {
            return Err(Error::Vocabulary(format!(
                "entity {name:?} registered as {:?}, requested as {kind:?}",
                self.kinds[i]
            )));
        }
        Ok(EntityId(i))
    }

    pub fn add_relation(&mut self, name: &str) -> RelationId {
        RelationId(self.relations.intern(name).0)
    }

    /// Inserts a triple. Returns `false` when it was already present.
    pub fn add_triple(&mut self, t: Triple) -> Result<bool> {
        let n = self.entities.len();
        if t.head.0 >= n || t.tail.0 >= n {
            return Err(Error::Vocabulary(format!(
                "entity id out of range in {t:?} (count {n})"
            )));
        }
        if t.relation.0 >= self.relations.len() {
            return Err(Error::Vocabulary(format!(
                "relation id {} out of range (count {})",
                t.relation.0,
                self.relations.len()
            )));
        }
        if t.head == t.tail {
            return Err(Error::Vocabulary(format!("self-loop on {}", t.head)));
        }
        if !self.seen.insert(t) {
            return Ok(false);
        }
        self.triples.push(t);
        Ok(true)
    }

    /// Convenience: intern names and insert in one call.
    pub fn add_named(
        &mut self,
        head: (&str, EntityKind),
        relation: &str,
        tail: (&str, EntityKind),
    ) -> Result<bool> {
        let h = self.add_entity(head.0, head.1)?;
        let r = self.add_relation(relation);
        let t = self.add_entity(tail.0, tail.1)?;
        self.add_triple(Triple::new(h, r, t))
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn freeze(self) -> KnowledgeGraph {
        let n = self.entities.len();
        let mut lists: Vec<Vec<(RelationId, EntityId)>> = vec![Vec::new(); n];
        let mut by_relation: Vec<Vec<(EntityId, EntityId)>> =
            vec![Vec::new(); self.relations.len()];
        for t in &self.triples {
            lists[t.head.0].push((t.relation, t.tail));
            lists[t.tail.0].push((t.relation, t.head));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut adjacency = Vec::with_capacity(2 * self.triples.len());
        offsets.push(0);
        for (x, mut list) in lists.into_iter().enumerate() {
            list.sort_unstable();
            for &(r, v) in &list {
                by_relation[r.0].push((EntityId(x), v));
            }
            adjacency.extend(list);
            offsets.push(adjacency.len());
        }
        KnowledgeGraph {
            entities: self.entities,
            kinds: self.kinds,
            literals: self.literals,
            relations: self.relations,
            triples: self.triples,
            offsets,
            adjacency,
            by_relation,
        }
    }
}

/// Frozen knowledge graph. Safe to share across threads.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Interner,
    kinds: Vec<EntityKind>,
    literals: Vec<Option<f64>>,
    relations: Interner,
    triples: Vec<Triple>,
    offsets: Vec<usize>,
    adjacency: Vec<(RelationId, EntityId)>,
    by_relation: Vec<Vec<(EntityId, EntityId)>>,
}

impl KnowledgeGraph {
    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    fn check(&self, u: EntityId) -> Result<()> {
        if u.0 < self.num_entities() {
            Ok(())
        } else {
            Err(Error::Vocabulary(format!(
                "entity id {} out of range (count {})",
                u.0,
                self.num_entities()
            )))
        }
    }

    /// Relation-entity pairs adjacent to `u`, sorted by relation then entity.
    pub fn neighbors(&self, u: EntityId) -> Result<&[(RelationId, EntityId)]> {
        self.check(u)?;
        Ok(self.neighbors_unchecked(u.0))
    }

    #[inline]
    pub(crate) fn neighbors_unchecked(&self, u: usize) -> &[(RelationId, EntityId)] {
        &self.adjacency[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn degree(&self, u: EntityId) -> Result<usize> {
        Ok(self.neighbors(u)?.len())
    }

    /// Directed `(x, v)` adjacency pairs grouped by relation, each group in
    /// ascending `x` order.
    pub(crate) fn pairs_by_relation(&self) -> &[Vec<(EntityId, EntityId)>] {
        &self.by_relation
    }

    pub fn adjacency_len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn entity_name(&self, u: EntityId) -> Result<&str> {
        self.check(u)?;
        Ok(&self.entities.names[u.0])
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities.names
    }

    pub fn kind(&self, u: EntityId) -> Result<EntityKind> {
        self.check(u)?;
        Ok(self.kinds[u.0])
    }

    pub fn literal(&self, u: EntityId) -> Result<Option<f64>> {
        self.check(u)?;
        Ok(self.literals[u.0])
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn relation_name(&self, r: RelationId) -> Result<&str> {
        self.relations
            .names
            .get(r.0)
            .map(String::as_str)
            .ok_or_else(|| Error::Vocabulary(format!("relation id {} out of range", r.0)))
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations.names
    }

    pub fn count_kind(&self, kind: EntityKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Ids of all region entities in id order.
    pub fn regions(&self) -> Vec<EntityId> {
        (0..self.num_entities())
            .filter(|&i| self.kinds[i] == EntityKind::Region)
            .map(EntityId)
            .collect()
    }

    /// Simple-graph statistics: parallel triples between the same pair of
    /// nodes count as one undirected edge.
    pub fn stats(&self) -> Result<GraphStats> {
        let node_count = self.num_entities();
        if node_count < 2 {
            return Err(Error::UndefinedDensity(node_count));
        }
        let pairs: HashSet<(usize, usize)> = self
            .triples
            .iter()
            .map(|t| {
                let (a, b) = (t.head.0, t.tail.0);
                (a.min(b), a.max(b))
            })
            .collect();
        let edge_count = pairs.len();
        let possible = node_count as f64 * (node_count as f64 - 1.0) / 2.0;
        Ok(GraphStats {
            node_count,
            edge_count,
            density: edge_count as f64 / possible,
        })
    }
}

/// Density of `graph`; see [`KnowledgeGraph::stats`].
pub fn graph_density(graph: &KnowledgeGraph) -> Result<GraphStats> {
    graph.stats()
}

/// Reads `head<TAB>relation<TAB>tail` lines, skipping blanks and `#` comments.
pub fn read_triples<R: BufRead>(reader: R) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(h), Some(r), Some(t), None) => {
                out.push((h.to_owned(), r.to_owned(), t.to_owned()))
            }
            _ => {
                return Err(Error::Input(format!(
                    "line {}: expected 3 tab-separated fields",
                    lineno + 1
                )))
            }
        }
    }
    Ok(out)
}

pub fn write_triples<W: Write>(graph: &KnowledgeGraph, mut w: W) -> Result<()> {
    for t in graph.triples() {
        writeln!(
            w,
            "{}\t{}\t{}",
            graph.entities.names[t.head.0],
            graph.relations.names[t.relation.0],
            graph.entities.names[t.tail.0]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn region(name: &str) -> (&str, EntityKind) {
        (name, EntityKind::Region)
    }

    fn value(name: &str) -> (&str, EntityKind) {
        (name, EntityKind::FeatureValue)
    }

    #[test]
    fn single_insertion_is_visible_from_both_ends() {
        let mut b = GraphBuilder::new();
        b.add_named(region("u1"), "Area.Soil", value("s1")).unwrap();
        let g = b.freeze();
        let u = g.entity_id("u1").unwrap();
        let s = g.entity_id("s1").unwrap();
        let r = g.relation_id("Area.Soil").unwrap();
        assert_eq!(g.neighbors(u).unwrap(), &[(r, s)]);
        assert_eq!(g.neighbors(s).unwrap(), &[(r, u)]);
        assert_eq!(g.stats().unwrap().edge_count, 1);
    }

    #[test]
    fn duplicate_triple_is_noop() {
        let mut b = GraphBuilder::new();
        assert!(b.add_named(region("u1"), "Area.Soil", value("s1")).unwrap());
        assert!(!b.add_named(region("u1"), "Area.Soil", value("s1")).unwrap());
        let g = b.freeze();
        assert_eq!(g.num_triples(), 1);
        assert_eq!(g.stats().unwrap().edge_count, 1);
        assert_eq!(g.adjacency_len(), 2);
    }

    #[test]
    fn shared_node_degree() {
        let mut b = GraphBuilder::new();
        for u in ["a", "b", "c"] {
            b.add_named(region(u), "Area.Soil", value("red")).unwrap();
        }
        let g = b.freeze();
        assert_eq!(g.degree(g.entity_id("red").unwrap()).unwrap(), 3);
    }

    #[test]
    fn unknown_ids_and_self_loops_rejected() {
        let mut b = GraphBuilder::new();
        let u = b.add_entity("u", EntityKind::Region).unwrap();
        let r = b.add_relation("r");
        assert!(matches!(
            b.add_triple(Triple::new(u, r, EntityId(5))),
            Err(Error::Vocabulary(_))
        ));
        assert!(matches!(
            b.add_triple(Triple::new(u, RelationId(3), u)),
            Err(Error::Vocabulary(_))
        ));
        assert!(matches!(
            b.add_triple(Triple::new(u, r, u)),
            Err(Error::Vocabulary(_))
        ));
        assert!(b.add_entity("u", EntityKind::LevelNode).is_err());
        let g = b.freeze();
        assert!(g.neighbors(EntityId(9)).is_err());
    }

    #[test]
    fn isolated_and_star_neighbors() {
        let mut b = GraphBuilder::new();
        b.add_entity("lonely", EntityKind::Region).unwrap();
        for i in 0..5 {
            b.add_named(region("hub"), "r", value(&format!("leaf{i}")))
                .unwrap();
        }
        let g = b.freeze();
        assert!(g.neighbors(g.entity_id("lonely").unwrap()).unwrap().is_empty());
        assert_eq!(g.neighbors(g.entity_id("hub").unwrap()).unwrap().len(), 5);
    }

    #[test]
    fn neighbors_sorted_by_relation_then_entity() {
        let mut b = GraphBuilder::new();
        b.add_named(region("u"), "r1", value("z")).unwrap();
        b.add_named(region("u"), "r0", value("y")).unwrap();
        b.add_named(region("u"), "r0", value("x")).unwrap();
        let g = b.freeze();
        let n = g.neighbors(g.entity_id("u").unwrap()).unwrap();
        let mut sorted = n.to_vec();
        sorted.sort();
        assert_eq!(n, &sorted[..]);
    }

    #[test]
    fn symmetric_access_on_random_graph() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let mut b = GraphBuilder::new();
        let ids: Vec<_> = (0..30)
            .map(|i| b.add_entity(&format!("n{i}"), EntityKind::FeatureValue).unwrap())
            .collect();
        let rels: Vec<_> = (0..3).map(|i| b.add_relation(&format!("r{i}"))).collect();
        for _ in 0..80 {
            let h = ids[rng.random_range(0..30)];
            let t = ids[rng.random_range(0..30)];
            if h != t {
                b.add_triple(Triple::new(h, rels[rng.random_range(0..3)], t))
                    .unwrap();
            }
        }
        let g = b.freeze();
        assert_eq!(g.adjacency_len(), 2 * g.num_triples());
        for &u in &ids {
            for &(r, v) in g.neighbors(u).unwrap() {
                assert!(g.neighbors(v).unwrap().contains(&(r, u)));
            }
        }
    }

    #[test]
    fn density_examples() {
        let mut b = GraphBuilder::new();
        b.add_named(value("a"), "r", value("b")).unwrap();
        b.add_named(value("b"), "r", value("c")).unwrap();
        b.add_named(value("a"), "r", value("c")).unwrap();
        assert_eq!(b.freeze().stats().unwrap().density, 1.0);

        // 8 nodes, 4 edges: 4 / C(8,2) = 4/28.
        let mut b = GraphBuilder::new();
        for i in 0..4 {
            b.add_named(
                region(&format!("u{i}")),
                "r",
                value(&format!("v{i}")),
            )
            .unwrap();
        }
        let s = b.freeze().stats().unwrap();
        assert_eq!((s.node_count, s.edge_count), (8, 4));
        assert!((s.density - 0.142857).abs() < 1e-6);

        let mut b = GraphBuilder::new();
        b.add_entity("x", EntityKind::Region).unwrap();
        assert!(matches!(
            b.freeze().stats(),
            Err(Error::UndefinedDensity(1))
        ));
    }

    #[test]
    fn triple_file_roundtrip() {
        let text = "# comment\nu1\tArea.Soil\tred\n\nu2\tArea.Soil\tred\n";
        let rows = read_triples(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        let mut b = GraphBuilder::new();
        for (h, r, t) in &rows {
            b.add_named(region(h), r, value(t)).unwrap();
        }
        let g = b.freeze();
        let mut out = Vec::new();
        write_triples(&g, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "u1\tArea.Soil\tred\nu2\tArea.Soil\tred\n");
        assert!(read_triples("a\tb\n".as_bytes()).is_err());
    }
}
