//! All-ranking Top-K evaluation.
//!
//! Every item outside a user's excluded set is scored and ranked; users with
//! an empty truth set are skipped and the remaining per-user metrics are
//! averaged with equal weight.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::{DataSplit, InteractionMatrix};
use crate::kg::KnowledgeGraph;
use crate::model::{rank_items, Encoder, ModelParams};
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsAtK {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Metrics for one ranked list against a non-empty truth set.
pub fn metrics_at_k(recommended: &[usize], truth: &[usize], k: usize) -> Result<MetricsAtK> {
    if truth.is_empty() {
        return Err(Error::Evaluation("empty truth set".into()));
    }
    if k == 0 || recommended.len() > k {
        return Err(Error::Evaluation(format!(
            "{} recommendations for K = {k}",
            recommended.len()
        )));
    }
    let hits = recommended.iter().filter(|i| truth.contains(i)).count();
    let precision = hits as f64 / k as f64;
    let recall = hits as f64 / truth.len() as f64;
    Ok(MetricsAtK {
        k,
        precision,
        recall,
        f1: f1_score(precision, recall),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<MetricsAtK>,
    pub users_evaluated: usize,
}

impl EvalReport {
    pub fn at(&self, k: usize) -> Option<&MetricsAtK> {
        self.metrics.iter().find(|m| m.k == k)
    }

    /// Aligned plain-text table, one row per K.
    pub fn to_table(&self, label: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>4} {:>12} {:>12} {:>12}", label, "K", "Precision", "Recall", "F1");
        for m in &self.metrics {
            let _ = writeln!(
                s,
                "{:<10} {:>4} {:>12.4} {:>12.4} {:>12.4}",
                "", m.k, m.precision, m.recall, m.f1
            );
        }
        let _ = writeln!(s, "users evaluated: {}", self.users_evaluated);
        s
    }
}

/// Anything that can score the full catalog for a user.
pub trait Scorer: Sync {
    fn num_items(&self) -> usize;
    fn scores(&self, user: usize) -> Vec<f64>;
}

pub struct ModelScorer<'a> {
    encoder: Encoder<'a>,
    train: &'a InteractionMatrix,
}

impl<'a> ModelScorer<'a> {
    pub fn new(
        params: &'a ModelParams,
        graph: &KnowledgeGraph,
        train: &'a InteractionMatrix,
        exec: Execution,
    ) -> Result<Self> {
        Ok(Self {
            encoder: Encoder::new(params, graph, exec)?,
            train,
        })
    }

    pub fn encoder(&self) -> &Encoder<'a> {
        &self.encoder
    }
}

impl Scorer for ModelScorer<'_> {
    fn num_items(&self) -> usize {
        self.encoder.params().num_items()
    }

    fn scores(&self, user: usize) -> Vec<f64> {
        self.encoder.scores(self.train.items(user), user)
    }
}

/// Ranks by training popularity.
pub struct PopularityScorer {
    counts: Vec<f64>,
}

impl PopularityScorer {
    pub fn new(train: &InteractionMatrix) -> Self {
        Self {
            counts: train.item_counts().into_iter().map(|c| c as f64).collect(),
        }
    }
}

impl Scorer for PopularityScorer {
    fn num_items(&self) -> usize {
        self.counts.len()
    }

    fn scores(&self, _user: usize) -> Vec<f64> {
        self.counts.clone()
    }
}

/// Evaluates `scorer` on `truth`, never recommending items in `exclude`.
pub fn evaluate_scorer<S: Scorer + ?Sized>(
    scorer: &S,
    exclude: &InteractionMatrix,
    truth: &InteractionMatrix,
    ks: &[usize],
    exec: Execution,
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Evaluation(format!("invalid K list {ks:?}")));
    }
    let max_k = *ks.iter().max().expect("non-empty");
    let users: Vec<usize> = (0..truth.num_users())
        .filter(|&u| !truth.items(u).is_empty())
        .collect();
    if users.is_empty() {
        return Err(Error::Evaluation("no users with held-out interactions".into()));
    }
    let per_user = exec.map(&users, |&u| -> Result<Vec<MetricsAtK>> {
        let ranked: Vec<usize> = rank_items(&scorer.scores(u), exclude.items(u), max_k)
            .into_iter()
            .map(|(i, _)| i)
            .collect();
        ks.iter()
            .map(|&k| metrics_at_k(&ranked[..k.min(ranked.len())], truth.items(u), k))
            .collect()
    });
    let mut sums = vec![[0.0f64; 3]; ks.len()];
    for row in per_user {
        for (acc, m) in sums.iter_mut().zip(row?) {
            acc[0] += m.precision;
            acc[1] += m.recall;
            acc[2] += m.f1;
        }
    }
    let n = users.len() as f64;
    Ok(EvalReport {
        metrics: ks
            .iter()
            .zip(sums)
            .map(|(&k, s)| MetricsAtK {
                k,
                precision: s[0] / n,
                recall: s[1] / n,
                f1: s[2] / n,
            })
            .collect(),
        users_evaluated: users.len(),
    })
}

/// Test-set evaluation: candidates are all items outside the training set.
pub fn evaluate_all(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    split: &DataSplit,
    ks: &[usize],
    exec: Execution,
) -> Result<EvalReport> {
    let scorer = ModelScorer::new(params, graph, &split.train, exec)?;
    evaluate_scorer(&scorer, &split.train, &split.test, ks, exec)
}

/// Expected Precision@K and Recall@K of a uniformly random ranking. A user
/// with `c` candidates has each held-out item in the top K with probability
/// `min(K, c) / c`. The F1 field holds the F1 of the expected values.
pub fn random_baseline(
    exclude: &InteractionMatrix,
    truth: &InteractionMatrix,
    k: usize,
) -> Result<MetricsAtK> {
    let mut n = 0usize;
    let (mut p, mut r) = (0.0, 0.0);
    for u in 0..truth.num_users() {
        let t = truth.items(u).len();
        if t == 0 {
            continue;
        }
        let c = truth.num_items() - exclude.items(u).len();
        let hit_prob = k.min(c) as f64 / c as f64;
        p += t as f64 * hit_prob / k as f64;
        r += hit_prob;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Evaluation("no users with held-out interactions".into()));
    }
    let (p, r) = (p / n as f64, r / n as f64);
    Ok(MetricsAtK {
        k,
        precision: p,
        recall: r,
        f1: f1_score(p, r),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<Vec<f64>>);

    impl Scorer for Fixed {
        fn num_items(&self) -> usize {
            self.0[0].len()
        }
        fn scores(&self, user: usize) -> Vec<f64> {
            self.0[user].clone()
        }
    }

    #[test]
    fn direct_arithmetic() {
        let m = metrics_at_k(&[4, 1, 7], &[1, 9], 3).unwrap();
        assert!((m.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall, 0.5);
        assert!((m.f1 - 0.4).abs() < 1e-15);
        let z = metrics_at_k(&[0, 2], &[5], 3).unwrap();
        assert_eq!((z.precision, z.recall, z.f1), (0.0, 0.0, 0.0));
        assert!(metrics_at_k(&[1], &[], 3).is_err());
        assert!(metrics_at_k(&[1, 2, 3, 4], &[1], 3).is_err());
    }

    #[test]
    fn f1_reproduces_published_cell() {
        assert!((f1_score(0.1007, 0.2518) - 0.1439).abs() < 5e-5);
    }

    #[test]
    fn perfect_ranking() {
        let scorer = Fixed(vec![vec![0.0, 5.0, 4.0, 1.0]]);
        let train = InteractionMatrix::new(1, 4);
        let test = InteractionMatrix::from_pairs(1, 4, [(0, 1), (0, 2)]).unwrap();
        let r = evaluate_scorer(&scorer, &train, &test, &[3], Execution::Sequential).unwrap();
        let m = r.at(3).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.recall, 1.0);
        assert!((m.f1 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn empty_truth_users_excluded() {
        let scorer = Fixed(vec![vec![3.0, 2.0, 1.0]; 3]);
        let train = InteractionMatrix::new(3, 3);
        let one = InteractionMatrix::from_pairs(3, 3, [(0, 0)]).unwrap();
        let a = evaluate_scorer(&scorer, &train, &one, &[1, 2], Execution::Sequential).unwrap();
        assert_eq!(a.users_evaluated, 1);
        assert_eq!(a.at(1).unwrap().precision, 1.0);
        let none = InteractionMatrix::new(3, 3);
        assert!(evaluate_scorer(&scorer, &train, &none, &[1], Execution::Sequential).is_err());
    }

    #[test]
    fn recall_monotone_in_k() {
        let scorer = Fixed(vec![vec![0.3, 0.9, 0.1, 0.5, 0.7, 0.2]]);
        let train = InteractionMatrix::from_pairs(1, 6, [(0, 1)]).unwrap();
        let test = InteractionMatrix::from_pairs(1, 6, [(0, 2), (0, 3)]).unwrap();
        let r = evaluate_scorer(&scorer, &train, &test, &[1, 2, 3, 4, 5], Execution::Sequential).unwrap();
        let recalls: Vec<f64> = r.metrics.iter().map(|m| m.recall).collect();
        assert!(recalls.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn random_baseline_expectation() {
        let train = InteractionMatrix::from_pairs(1, 10, [(0, 0), (0, 1)]).unwrap();
        let test = InteractionMatrix::from_pairs(1, 10, [(0, 5)]).unwrap();
        let b = random_baseline(&train, &test, 3).unwrap();
        assert!((b.recall - 3.0 / 8.0).abs() < 1e-15);
        assert!((b.precision - 1.0 / 8.0).abs() < 1e-15);
    }
}
