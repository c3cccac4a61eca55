//! Interpretability and planning reports built on a trained model.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::io::BufRead;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interactions::{read_pairs, InteractionMatrix, Vocab};
use crate::kg::KnowledgeGraph;
use crate::model::{intent_attention, rank_items, Encoder, ModelParams};
use crate::parallel::Execution;

/// Second-level grouping of catalog patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum PatternCategory {
    NatureConservation,
    EcologicalRestorationAndGovernance,
    EcologicalAgriculture,
    NewUrbanization,
    EcologicalIndustrial,
    GreenConsumption,
}

impl PatternCategory {
    pub const ALL: [PatternCategory; 6] = [
        PatternCategory::NatureConservation,
        PatternCategory::EcologicalRestorationAndGovernance,
        PatternCategory::EcologicalAgriculture,
        PatternCategory::NewUrbanization,
        PatternCategory::EcologicalIndustrial,
        PatternCategory::GreenConsumption,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PatternCategory::NatureConservation => "Nature Conservation",
            PatternCategory::EcologicalRestorationAndGovernance => {
                "Ecological Restoration and Governance"
            }
            PatternCategory::EcologicalAgriculture => "Ecological Agriculture",
            PatternCategory::NewUrbanization => "New Urbanization",
            PatternCategory::EcologicalIndustrial => "Ecological Industrial",
            PatternCategory::GreenConsumption => "Green Consumption",
        }
    }
}

impl fmt::Display for PatternCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PatternCategory {
    type Err = Error;

    /// Accepts the display label or the variant name, ignoring case, spaces
    /// and underscores.
    fn from_str(s: &str) -> Result<Self> {
        let key = |x: &str| {
            x.chars()
                .filter(|c| !c.is_whitespace() && *c != '_')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        };
        let wanted = key(s);
        Self::ALL
            .into_iter()
            .find(|c| key(c.label()) == wanted || key(&format!("{c:?}")) == wanted)
            .ok_or_else(|| Error::Input(format!("unknown pattern category {s:?}")))
    }
}

/// Pattern id to category mapping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PatternTaxonomy {
    map: HashMap<String, PatternCategory>,
}

impl PatternTaxonomy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pattern: impl Into<String>, category: PatternCategory) -> Result<()> {
        let pattern = pattern.into();
        match self.map.get(&pattern) {
            Some(&c) if c != category => Err(Error::Input(format!(
                "pattern {pattern:?} assigned to both {c} and {category}"
            ))),
            _ => {
                self.map.insert(pattern, category);
                Ok(())
            }
        }
    }

    pub fn category(&self, pattern: &str) -> Option<PatternCategory> {
        self.map.get(pattern).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Fails unless every catalog item has a category.
    pub fn check_catalog(&self, items: &Vocab) -> Result<()> {
        let missing: Vec<&str> = items
            .names()
            .iter()
            .filter(|n| !self.map.contains_key(n.as_str()))
            .map(String::as_str)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "{} pattern(s) missing from the taxonomy, e.g. {:?}",
                missing.len(),
                missing[0]
            )))
        }
    }

    /// Reads `pattern<TAB>category` lines.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut t = Self::new();
        for (pattern, category) in read_pairs(reader)? {
            t.insert(pattern, category.parse()?)?;
        }
        Ok(t)
    }

    /// Writes `pattern<TAB>category` lines in `items` order.
    pub fn write<W: std::io::Write>(&self, items: &Vocab, mut w: W) -> Result<()> {
        for name in items.names() {
            if let Some(c) = self.category(name) {
                writeln!(w, "{name}\t{c}")?;
            }
        }
        Ok(())
    }

    pub fn categories<'a>(&self, patterns: impl IntoIterator<Item = &'a str>) -> BTreeSet<PatternCategory> {
        patterns.into_iter().filter_map(|p| self.category(p)).collect()
    }
}

/// Reads a government plan file of `region<TAB>pattern` lines.
pub fn read_plan_sets<R: BufRead>(reader: R) -> Result<BTreeMap<String, BTreeSet<String>>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (region, pattern) in read_pairs(reader)? {
        out.entry(region).or_default().insert(pattern);
    }
    Ok(out)
}

/// Indices of the `k` relations with the largest attention weight for each
/// intent, highest first, ties broken by lower index.
pub fn top_relation_indices(params: &ModelParams, k: usize) -> Vec<Vec<usize>> {
    let alpha = intent_attention(params);
    (0..alpha.cols())
        .map(|p| {
            let mut idx: Vec<usize> = (0..alpha.rows()).collect();
            idx.sort_by(|&a, &b| alpha.get(b, p).total_cmp(&alpha.get(a, p)).then(a.cmp(&b)));
            idx.truncate(k);
            idx
        })
        .collect()
}

/// Relation names of [`top_relation_indices`], one row per intent.
pub fn top_relations_per_intent(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    k: usize,
) -> Result<Vec<Vec<String>>> {
    if params.relation.rows() != graph.num_relations() {
        return Err(Error::Input(format!(
            "model has {} relations, graph has {}",
            params.relation.rows(),
            graph.num_relations()
        )));
    }
    Ok(top_relation_indices(params, k)
        .into_iter()
        .map(|row| row.into_iter().map(|r| graph.relation_names()[r].clone()).collect())
        .collect())
}

/// Text table with one row per intent.
pub fn format_intent_table(rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    for (p, names) in rows.iter().enumerate() {
        let _ = writeln!(s, "p{}\t{}", p + 1, names.join("\t"));
    }
    s
}

/// Share of the past categories that also appear among the recommended
/// ones, or `None` when there is no history.
pub fn coincidence_degree(
    past: &BTreeSet<PatternCategory>,
    recommended: &BTreeSet<PatternCategory>,
) -> Option<f64> {
    if past.is_empty() {
        return None;
    }
    Some(past.intersection(recommended).count() as f64 / past.len() as f64)
}

/// Development direction, ordered from most to least in need of change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Direction {
    UrgentlyTransitional,
    ExpectantlyTransitional,
    UnhurriedlyAdjustable,
    ClearlyOriented,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::UrgentlyTransitional => "Urgently Transitional",
            Direction::ExpectantlyTransitional => "Expectantly Transitional",
            Direction::UnhurriedlyAdjustable => "Unhurriedly Adjustable",
            Direction::ClearlyOriented => "Clearly Oriented",
        })
    }
}

/// Exactly one half counts as expectantly transitional.
pub fn classify_direction(cd: f64) -> Result<Direction> {
    if !(0.0..=1.0).contains(&cd) {
        return Err(Error::Range(cd));
    }
    Ok(if cd == 1.0 {
        Direction::ClearlyOriented
    } else if cd > 0.5 {
        Direction::UnhurriedlyAdjustable
    } else if cd > 0.0 {
        Direction::ExpectantlyTransitional
    } else {
        Direction::UrgentlyTransitional
    })
}

pub const PLAN_TOP_K: usize = 5;

/// Mean overlap between each region's top patterns and its plan patterns,
/// counted against five slots per region.
pub fn planning_accuracy(
    top: &BTreeMap<String, BTreeSet<String>>,
    gov: &BTreeMap<String, BTreeSet<String>>,
) -> Result<f64> {
    if top.is_empty() {
        return Err(Error::Input("no regions to score".into()));
    }
    if !top.keys().eq(gov.keys()) {
        let only_top = top.keys().find(|k| !gov.contains_key(*k));
        let only_gov = gov.keys().find(|k| !top.contains_key(*k));
        return Err(Error::Input(format!(
            "region sets differ (e.g. {:?} only in recommendations, {:?} only in plans)",
            only_top, only_gov
        )));
    }
    let mut hits = 0usize;
    for (region, rec) in top {
        if rec.len() > PLAN_TOP_K {
            return Err(Error::Input(format!(
                "region {region:?} has {} recommendations, at most {PLAN_TOP_K} allowed",
                rec.len()
            )));
        }
        hits += rec.intersection(&gov[region]).count();
    }
    Ok(hits as f64 / (PLAN_TOP_K * top.len()) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRow {
    pub region: String,
    pub recommended: Vec<String>,
    pub coincidence: Option<f64>,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanReport {
    pub rows: Vec<PlanRow>,
    pub accuracy: Option<f64>,
}

impl PlanReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "region\tcoincidence\tdirection\ttop patterns");
        for r in &self.rows {
            let (cd, dir) = match (r.coincidence, r.direction) {
                (Some(cd), Some(d)) => (format!("{:.2}%", cd * 100.0), d.to_string()),
                _ => ("-".to_owned(), "no history".to_owned()),
            };
            let _ = writeln!(s, "{}\t{}\t{}\t{}", r.region, cd, dir, r.recommended.join(","));
        }
        if let Some(a) = self.accuracy {
            let _ = writeln!(s, "planning accuracy: {:.2}%", a * 100.0);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Recommends `top_k` patterns to every region, compares their categories
/// with the region's history and, when plans are given, scores the
/// recommendations of the planned regions against them.
#[allow(clippy::too_many_arguments)]
pub fn plan_report(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    history: &InteractionMatrix,
    users: &Vocab,
    items: &Vocab,
    taxonomy: &PatternTaxonomy,
    gov: Option<&BTreeMap<String, BTreeSet<String>>>,
    top_k: usize,
    exec: Execution,
) -> Result<PlanReport> {
    if top_k == 0 {
        return Err(Error::Input("top-k must be positive".into()));
    }
    if users.len() != history.num_users() || items.len() != history.num_items() {
        return Err(Error::Input("vocabulary sizes do not match the interactions".into()));
    }
    taxonomy.check_catalog(items)?;
    let encoder = Encoder::new(params, graph, exec)?;
    let users_idx: Vec<usize> = (0..users.len()).collect();
    let tops = exec.map(&users_idx, |&u| {
        let scores = encoder.scores(history.items(u), u);
        rank_items(&scores, history.items(u), top_k)
            .into_iter()
            .map(|(i, _)| items.name(i).to_owned())
            .collect::<Vec<_>>()
    });
    let mut rows = Vec::with_capacity(users.len());
    for (u, recommended) in tops.into_iter().enumerate() {
        let past = taxonomy.categories(history.items(u).iter().map(|&i| items.name(i)));
        let rec = taxonomy.categories(recommended.iter().map(String::as_str));
        let coincidence = coincidence_degree(&past, &rec);
        let direction = coincidence.map(classify_direction).transpose()?;
        rows.push(PlanRow {
            region: users.name(u).to_owned(),
            recommended,
            coincidence,
            direction,
        });
    }
    let accuracy = match gov {
        None => None,
        Some(gov) => {
            let mut top = BTreeMap::new();
            for region in gov.keys() {
                let u = users
                    .get(region)
                    .ok_or_else(|| Error::Input(format!("plan region {region:?} is unknown")))?;
                let set: BTreeSet<String> = rows[u].recommended.iter().take(PLAN_TOP_K).cloned().collect();
                top.insert(region.clone(), set);
            }
            Some(planning_accuracy(&top, gov)?)
        }
    };
    Ok(PlanReport { rows, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Fusion, Matrix, ModelShape};
    use proptest::prelude::*;
    use PatternCategory::*;

    fn set<const N: usize>(c: [PatternCategory; N]) -> BTreeSet<PatternCategory> {
        c.into_iter().collect()
    }

    fn names(rows: &[(&str, &[&str])]) -> BTreeMap<String, BTreeSet<String>> {
        rows.iter()
            .map(|(r, ps)| (r.to_string(), ps.iter().map(|p| p.to_string()).collect()))
            .collect()
    }

    fn params_with_weights(rel: usize, intents: usize, w: Vec<f64>) -> ModelParams {
        let shape = ModelShape {
            dim: 2,
            num_intents: intents,
            num_layers: 1,
            include_self: true,
            fusion: Fusion::Attention,
        };
        let mut p = ModelParams::zeros(shape, 1, rel, 1);
        p.intent_weights = Matrix::from_vec(rel, intents, w);
        p
    }

    #[test]
    fn siming_example() {
        let past = set([EcologicalAgriculture, NewUrbanization, GreenConsumption]);
        let rec = set([EcologicalAgriculture, NatureConservation, EcologicalIndustrial]);
        let cd = coincidence_degree(&past, &rec).unwrap();
        assert_eq!(cd, 1.0 / 3.0);
        assert_eq!(format!("{:.2}%", cd * 100.0), "33.33%");
        assert_eq!(classify_direction(cd).unwrap(), Direction::ExpectantlyTransitional);
    }

    #[test]
    fn coincidence_extremes() {
        let past = set([NatureConservation, GreenConsumption]);
        assert_eq!(coincidence_degree(&past, &set(PatternCategory::ALL)), Some(1.0));
        assert_eq!(coincidence_degree(&past, &set([NewUrbanization])), Some(0.0));
        assert_eq!(coincidence_degree(&BTreeSet::new(), &past), None);
    }

    #[test]
    fn direction_thresholds() {
        assert_eq!(classify_direction(1.0).unwrap(), Direction::ClearlyOriented);
        assert_eq!(classify_direction(0.75).unwrap(), Direction::UnhurriedlyAdjustable);
        assert_eq!(classify_direction(0.5).unwrap(), Direction::ExpectantlyTransitional);
        assert_eq!(classify_direction(0.0).unwrap(), Direction::UrgentlyTransitional);
        assert!(matches!(classify_direction(1.2), Err(Error::Range(_))));
        assert!(classify_direction(-0.1).is_err());
        assert!(classify_direction(f64::NAN).is_err());
    }

    #[test]
    fn planning_accuracy_fixtures() {
        let top = names(&[("a", &["1", "2", "3", "4", "5"]), ("b", &["1", "2", "3", "4", "5"])]);
        let full = names(&[("a", &["1", "2", "3", "4", "5", "9"]), ("b", &["1", "2", "3", "4", "5"])]);
        assert_eq!(planning_accuracy(&top, &full).unwrap(), 1.0);
        let empty = names(&[("a", &[]), ("b", &[])]);
        assert_eq!(planning_accuracy(&top, &empty).unwrap(), 0.0);
        let half = names(&[("a", &["1", "2", "3"]), ("b", &["4", "5", "8"])]);
        assert_eq!(planning_accuracy(&top, &half).unwrap(), 0.5);
        let other = names(&[("a", &["1"]), ("c", &["1"])]);
        assert!(matches!(planning_accuracy(&top, &other), Err(Error::Input(_))));
    }

    #[test]
    fn dominant_relation_ranks_first() {
        // rows are relations, columns intents
        let p = params_with_weights(3, 2, vec![0.0, 5.0, 4.0, 0.0, 1.0, 1.0]);
        let top = top_relation_indices(&p, 2);
        assert_eq!(top, vec![vec![1, 2], vec![0, 2]]);
    }

    #[test]
    fn uniform_weights_rank_by_index() {
        let p = params_with_weights(4, 3, vec![0.0; 12]);
        let top = top_relation_indices(&p, 4);
        assert_eq!(top.len(), 3);
        assert!(top.iter().all(|r| r == &vec![0, 1, 2, 3]));
    }

    #[test]
    fn category_parsing() {
        assert_eq!("Nature Conservation".parse::<PatternCategory>().unwrap(), NatureConservation);
        assert_eq!("green_consumption".parse::<PatternCategory>().unwrap(), GreenConsumption);
        assert!("Forestry".parse::<PatternCategory>().is_err());
        let t = PatternTaxonomy::read("p1\tNew Urbanization\np2\tEcological Industrial\n".as_bytes()).unwrap();
        assert_eq!(t.category("p2"), Some(EcologicalIndustrial));
        assert!(PatternTaxonomy::read("p1\tNew Urbanization\np1\tGreen Consumption\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn direction_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(classify_direction(lo).unwrap() <= classify_direction(hi).unwrap());
        }

        #[test]
        fn coincidence_bounds(past in prop::collection::btree_set(0usize..6, 1..6),
                              rec in prop::collection::btree_set(0usize..6, 0..6)) {
            let p: BTreeSet<_> = past.iter().map(|&i| PatternCategory::ALL[i]).collect();
            let r: BTreeSet<_> = rec.iter().map(|&i| PatternCategory::ALL[i]).collect();
            let cd = coincidence_degree(&p, &r).unwrap();
            prop_assert!((0.0..=1.0).contains(&cd));
            prop_assert_eq!(cd == 1.0, p.is_subset(&r));
            prop_assert_eq!(cd == 0.0, p.is_disjoint(&r));
        }

        #[test]
        fn ranking_shift_invariant(w in prop::collection::vec(-3.0f64..3.0, 10), c in -5.0f64..5.0) {
            let p = params_with_weights(5, 2, w.clone());
            let mut shifted = w;
            for r in 0..5 {
                shifted[r * 2] += c;
            }
            let q = params_with_weights(5, 2, shifted);
            prop_assert_eq!(top_relation_indices(&p, 5)[0].clone(), top_relation_indices(&q, 5)[0].clone());
        }

        #[test]
        fn accuracy_is_mean_overlap(overlaps in prop::collection::vec(0usize..=5, 1..8)) {
            let mut top = BTreeMap::new();
            let mut gov = BTreeMap::new();
            for (d, &o) in overlaps.iter().enumerate() {
                let rec: BTreeSet<String> = (0..5).map(|i| format!("p{i}")).collect();
                let plan: BTreeSet<String> = (0..o).map(|i| format!("p{i}")).collect();
                top.insert(format!("r{d}"), rec);
                gov.insert(format!("r{d}"), plan);
            }
            let acc = planning_accuracy(&top, &gov).unwrap();
            let want = overlaps.iter().sum::<usize>() as f64 / (5 * overlaps.len()) as f64;
            prop_assert_eq!(acc, want);
            prop_assert!((0.0..=1.0).contains(&acc));
        }
    }
}
