//! Forward model: relation-attention intents, multi-hop aggregation over the
//! pruned graph, intent-weighted history aggregation, attention fusion and
//! inner-product scoring.
//!
//! Users are region entities, so a user index is also the region's entity id.

mod matrix;

pub use matrix::{add_hadamard, axpy, dot, softmax, softmax_backward, softmax_in_place, Matrix};

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::InteractionMatrix;
use crate::kg::{EntityId, KnowledgeGraph};
use crate::parallel::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    /// Softmax-weighted combination with a learned projection.
    Attention,
    /// Plain sum of the two representations.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub dim: usize,
    pub num_intents: usize,
    pub num_layers: usize,
    /// Add the region's own embedding to the layer sum.
    pub include_self: bool,
    pub fusion: Fusion,
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    /// `|V| x d`
    pub entity: Matrix,
    /// `|R| x d`
    pub relation: Matrix,
    /// `|I| x d`
    pub item: Matrix,
    /// `|R| x |P|` relation logits per intent.
    pub intent_weights: Matrix,
    /// Length-`d` fusion projection.
    pub fusion: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape, entities: usize, relations: usize, items: usize) -> Self {
        let d = shape.dim;
        Self {
            shape,
            entity: Matrix::zeros(entities, d),
            relation: Matrix::zeros(relations, d),
            item: Matrix::zeros(items, d),
            intent_weights: Matrix::zeros(relations, shape.num_intents),
            fusion: vec![0.0; d],
        }
    }

    /// Embedding tables and intent logits uniform in `±1/sqrt(d)`; the
    /// fusion projection starts at zero. Identical intent logits would
    /// receive identical updates and never separate.
    pub fn init<R: Rng + ?Sized>(
        shape: ModelShape,
        entities: usize,
        relations: usize,
        items: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(shape, entities, relations, items);
        let bound = 1.0 / (shape.dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        for m in [&mut p.entity, &mut p.relation, &mut p.item, &mut p.intent_weights] {
            m.as_mut_slice().iter_mut().for_each(|x| *x = dist.sample(rng));
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn num_items(&self) -> usize {
        self.item.rows()
    }

    /// Flat views of every tensor in a fixed order.
    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.entity.as_slice(),
            self.relation.as_slice(),
            self.item.as_slice(),
            self.intent_weights.as_slice(),
            &self.fusion,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.entity.as_mut_slice(),
            self.relation.as_mut_slice(),
            self.item.as_mut_slice(),
            self.intent_weights.as_mut_slice(),
            &mut self.fusion,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn check_graph(&self, graph: &KnowledgeGraph) -> Result<()> {
        if self.entity.rows() != graph.num_entities() || self.relation.rows() != graph.num_relations()
        {
            return Err(Error::Input(format!(
                "parameters sized for {} entities / {} relations, graph has {} / {}",
                self.entity.rows(),
                self.relation.rows(),
                graph.num_entities(),
                graph.num_relations()
            )));
        }
        Ok(())
    }

    fn check_item(&self, i: usize) -> Result<()> {
        if i < self.num_items() {
            Ok(())
        } else {
            Err(Error::Vocabulary(format!(
                "item {i} out of range (count {})",
                self.num_items()
            )))
        }
    }
}

/// Column-wise softmax of the intent logits: `alpha[r][p]`.
pub fn intent_attention(params: &ModelParams) -> Matrix {
    let (nr, np) = (params.intent_weights.rows(), params.intent_weights.cols());
    let mut alpha = Matrix::zeros(nr, np);
    for p in 0..np {
        let mut col: Vec<f64> = (0..nr).map(|r| params.intent_weights.get(r, p)).collect();
        softmax_in_place(&mut col);
        for (r, a) in col.into_iter().enumerate() {
            alpha.set(r, p, a);
        }
    }
    alpha
}

/// Intent vectors `e_p = sum_r alpha(r, p) e_r`, one row per intent.
pub fn intent_embeddings(params: &ModelParams) -> Matrix {
    intents_from_attention(params, &intent_attention(params))
}

fn intents_from_attention(params: &ModelParams, alpha: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(alpha.cols(), params.dim());
    for p in 0..alpha.cols() {
        let row = out.row_mut(p);
        for r in 0..alpha.rows() {
            axpy(row, alpha.get(r, p), params.relation.row(r));
        }
    }
    out
}

/// Layer states `s^(1)..s^(layers)` for every entity, where
/// `s_x^(l) = mean over (r, v) in N(x) of e_r ⊙ s_v^(l-1)` and `s^(0)` is
/// the entity table. Isolated entities get zero rows.
pub fn propagate(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    layers: usize,
    exec: Execution,
) -> Vec<Matrix> {
    let d = params.dim();
    let mut out: Vec<Matrix> = Vec::with_capacity(layers);
    for l in 0..layers {
        let prev = if l == 0 { &params.entity } else { &out[l - 1] };
        let mut next = Matrix::zeros(graph.num_entities(), d);
        exec.for_each_row(next.as_mut_slice(), d, |x, row| {
            let nbrs = graph.neighbors_unchecked(x);
            if nbrs.is_empty() {
                return;
            }
            let k = 1.0 / nbrs.len() as f64;
            for &(r, v) in nbrs {
                add_hadamard(row, k, params.relation.row(r.0), prev.row(v.0));
            }
        });
        out.push(next);
    }
    out
}

/// Graph-side representation of entity `u` using `layers` hops.
pub fn aggregate_ugp(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    u: EntityId,
    layers: usize,
) -> Result<Vec<f64>> {
    params.check_graph(graph)?;
    graph.neighbors(u)?;
    let states = propagate(params, graph, layers, Execution::Sequential);
    Ok(kg_from_states(params, &states, u.0))
}

fn kg_from_states(params: &ModelParams, states: &[Matrix], u: usize) -> Vec<f64> {
    let mut e = if params.shape.include_self {
        params.entity.row(u).to_vec()
    } else {
        vec![0.0; params.dim()]
    };
    for s in states {
        axpy(&mut e, 1.0, s.row(u));
    }
    e
}

/// Softmax over intents of `e_p · e_u`, with `e_u` the region's own
/// embedding row.
pub fn intent_importance_with(params: &ModelParams, intents: &Matrix, u: usize) -> Vec<f64> {
    let eu = params.entity.row(u);
    let mut logits: Vec<f64> = (0..intents.rows()).map(|p| dot(intents.row(p), eu)).collect();
    softmax_in_place(&mut logits);
    logits
}

pub fn intent_importance(params: &ModelParams, u: EntityId) -> Result<Vec<f64>> {
    check_user(params, u.0)?;
    Ok(intent_importance_with(params, &intent_embeddings(params), u.0))
}

fn check_user(params: &ModelParams, u: usize) -> Result<()> {
    if u < params.entity.rows() {
        Ok(())
    } else {
        Err(Error::Vocabulary(format!(
            "region {u} out of range (count {})",
            params.entity.rows()
        )))
    }
}

/// History-side representation:
/// `(1 / (|P| |H|)) * sum over p, i in H of beta_p (e_p ⊙ e_i)`,
/// zero when the region has no training history.
pub fn aggregate_ig_with(
    params: &ModelParams,
    intents: &Matrix,
    beta: &[f64],
    history: &[usize],
) -> Vec<f64> {
    let d = params.dim();
    let mut out = vec![0.0; d];
    if history.is_empty() {
        return out;
    }
    let norm = 1.0 / (intents.rows() * history.len()) as f64;
    for (p, &b) in beta.iter().enumerate() {
        for &i in history {
            add_hadamard(&mut out, norm * b, intents.row(p), params.item.row(i));
        }
    }
    out
}

pub fn aggregate_ig(
    params: &ModelParams,
    train: &InteractionMatrix,
    u: EntityId,
) -> Result<Vec<f64>> {
    check_user(params, u.0)?;
    if u.0 >= train.num_users() && train.num_users() > 0 {
        return Err(Error::Vocabulary(format!("region {} has no interaction row", u.0)));
    }
    let intents = intent_embeddings(params);
    let beta = intent_importance_with(params, &intents, u.0);
    Ok(aggregate_ig_with(params, &intents, &beta, train.items(u.0)))
}

/// Source weights `gamma = ReLU(softmax(W·e_kg, W·e_ig))`.
pub fn fusion_weights(params: &ModelParams, e_kg: &[f64], e_ig: &[f64]) -> [f64; 2] {
    let mut g = [dot(&params.fusion, e_kg), dot(&params.fusion, e_ig)];
    softmax_in_place(&mut g);
    g.map(|x| x.max(0.0))
}

/// Attention fusion of the two representations.
pub fn fuse(params: &ModelParams, e_kg: &[f64], e_ig: &[f64]) -> (Vec<f64>, [f64; 2]) {
    let gamma = fusion_weights(params, e_kg, e_ig);
    let e = e_kg
        .iter()
        .zip(e_ig)
        .map(|(k, i)| gamma[0] * k + gamma[1] * i)
        .collect();
    (e, gamma)
}

pub fn score(params: &ModelParams, e_u: &[f64], i: usize) -> Result<f64> {
    params.check_item(i)?;
    Ok(dot(e_u, params.item.row(i)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserRepresentation {
    pub e_kg: Vec<f64>,
    pub e_ig: Vec<f64>,
    pub e_u: Vec<f64>,
    pub beta: Vec<f64>,
    /// Fusion weights; `[1, 1]` under [`Fusion::Sum`].
    pub gamma: [f64; 2],
}

/// Forward pass state shared by all users of one parameter snapshot.
pub struct Encoder<'a> {
    params: &'a ModelParams,
    pub alpha: Matrix,
    pub intents: Matrix,
    pub states: Vec<Matrix>,
}

impl<'a> Encoder<'a> {
    pub fn new(params: &'a ModelParams, graph: &KnowledgeGraph, exec: Execution) -> Result<Self> {
        params.check_graph(graph)?;
        let alpha = intent_attention(params);
        let intents = intents_from_attention(params, &alpha);
        let states = propagate(params, graph, params.shape.num_layers, exec);
        Ok(Self {
            params,
            alpha,
            intents,
            states,
        })
    }

    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn kg(&self, u: usize) -> Vec<f64> {
        kg_from_states(self.params, &self.states, u)
    }

    pub fn represent(&self, history: &[usize], u: usize) -> UserRepresentation {
        let e_kg = self.kg(u);
        let beta = intent_importance_with(self.params, &self.intents, u);
        let e_ig = aggregate_ig_with(self.params, &self.intents, &beta, history);
        let (e_u, gamma) = match self.params.shape.fusion {
            Fusion::Attention => fuse(self.params, &e_kg, &e_ig),
            Fusion::Sum => (
                e_kg.iter().zip(&e_ig).map(|(a, b)| a + b).collect(),
                [1.0, 1.0],
            ),
        };
        UserRepresentation {
            e_kg,
            e_ig,
            e_u,
            beta,
            gamma,
        }
    }

    /// Scores of every item for region `u`.
    pub fn scores(&self, history: &[usize], u: usize) -> Vec<f64> {
        let e_u = self.represent(history, u).e_u;
        (0..self.params.num_items())
            .map(|i| dot(&e_u, self.params.item.row(i)))
            .collect()
    }
}

/// Top-`k` items by descending score (ties by ascending index), skipping
/// `exclude` (sorted).
pub fn rank_items(scores: &[f64], exclude: &[usize], k: usize) -> Vec<(usize, f64)> {
    let mut candidates: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(i, _)| exclude.binary_search(i).is_err())
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    candidates.truncate(k);
    candidates
}

/// Ranked recommendations for region `u` among items outside its training
/// history.
pub fn recommend_topk(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    train: &InteractionMatrix,
    u: EntityId,
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if k == 0 {
        return Err(Error::Input("K must be at least 1".into()));
    }
    graph.neighbors(u)?;
    let enc = Encoder::new(params, graph, Execution::default())?;
    let history = train.items(u.0);
    Ok(rank_items(&enc.scores(history, u.0), history, k))
}
