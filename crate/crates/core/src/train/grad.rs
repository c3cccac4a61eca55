//! Analytic gradients of the batch ranking objective.
//!
//! For a batch `B` of `(region, positive, negative)` triples the objective is
//!
//! ```text
//! (1/|B|) * sum_b [ softplus(-(y+ - y-)) + l2 * (|e_u|^2 + |e_i+|^2 + |e_i-|^2) ]
//! ```
//!
//! Per-sample work (fusion, history aggregation, intent importance) runs
//! through [`Execution`] and is accumulated in batch order; the graph and
//! intent backward passes are done once per batch.

use crate::error::Result;
use crate::interactions::InteractionMatrix;
use crate::kg::KnowledgeGraph;
use crate::model::{
    add_hadamard, axpy, dot, softmax_backward, Encoder, Fusion, Matrix, ModelParams,
};
use crate::parallel::Execution;

use super::loss::{bpr_loss, bpr_slope};

/// One training example.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sample {
    pub user: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Dense gradient with the same layout as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub entity: Matrix,
    pub relation: Matrix,
    pub item: Matrix,
    pub intent_weights: Matrix,
    pub fusion: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        Self {
            entity: Matrix::zeros(p.entity.rows(), p.entity.cols()),
            relation: Matrix::zeros(p.relation.rows(), p.relation.cols()),
            item: Matrix::zeros(p.item.rows(), p.item.cols()),
            intent_weights: Matrix::zeros(p.intent_weights.rows(), p.intent_weights.cols()),
            fusion: vec![0.0; p.fusion.len()],
        }
    }

    pub fn tensors(&self) -> [&[f64]; 5] {
        [
            self.entity.as_slice(),
            self.relation.as_slice(),
            self.item.as_slice(),
            self.intent_weights.as_slice(),
            &self.fusion,
        ]
    }
}

struct SampleGrad {
    loss: f64,
    user: usize,
    /// d loss / d e_kg
    kg: Vec<f64>,
    /// direct gradient on the region's entity row (importance logits + L2)
    entity: Vec<f64>,
    positive: Vec<f64>,
    negative: Vec<f64>,
    /// gradient shared by every history item, if any
    history: Option<Vec<f64>>,
    /// `|P| x d` gradient on the intent vectors
    intents: Matrix,
    fusion: Vec<f64>,
}

fn sample_grad(
    enc: &Encoder<'_>,
    train: &InteractionMatrix,
    s: &Sample,
    l2: f64,
) -> SampleGrad {
    let p = enc.params();
    let d = p.dim();
    let np = enc.intents.rows();
    let u = s.user;
    let history = train.items(u);
    let rep = enc.represent(history, u);
    let eu_base = p.entity.row(u);
    let ip = p.item.row(s.positive);
    let ineg = p.item.row(s.negative);

    let margin = dot(&rep.e_u, ip) - dot(&rep.e_u, ineg);
    let reg = dot(eu_base, eu_base) + dot(ip, ip) + dot(ineg, ineg);
    let loss = bpr_loss(margin, 0.0) + l2 * reg;
    let slope = bpr_slope(margin);

    let g_eu: Vec<f64> = ip.iter().zip(ineg).map(|(a, b)| slope * (a - b)).collect();
    let positive: Vec<f64> = rep
        .e_u
        .iter()
        .zip(ip)
        .map(|(e, w)| slope * e + 2.0 * l2 * w)
        .collect();
    let negative: Vec<f64> = rep
        .e_u
        .iter()
        .zip(ineg)
        .map(|(e, w)| -slope * e + 2.0 * l2 * w)
        .collect();

    let mut g_kg = vec![0.0; d];
    let mut g_ig = vec![0.0; d];
    let mut g_fusion = vec![0.0; d];
    match p.shape.fusion {
        Fusion::Attention => {
            let [gk, gi] = rep.gamma;
            axpy(&mut g_kg, gk, &g_eu);
            axpy(&mut g_ig, gi, &g_eu);
            // ReLU passes gradient through on the strictly positive softmax.
            let dgamma = [
                if gk > 0.0 { dot(&g_eu, &rep.e_kg) } else { 0.0 },
                if gi > 0.0 { dot(&g_eu, &rep.e_ig) } else { 0.0 },
            ];
            let dlogit = softmax_backward(&rep.gamma, &dgamma);
            axpy(&mut g_fusion, dlogit[0], &rep.e_kg);
            axpy(&mut g_fusion, dlogit[1], &rep.e_ig);
            axpy(&mut g_kg, dlogit[0], &p.fusion);
            axpy(&mut g_ig, dlogit[1], &p.fusion);
        }
        Fusion::Sum => {
            g_kg.copy_from_slice(&g_eu);
            g_ig.copy_from_slice(&g_eu);
        }
    }

    let mut g_entity: Vec<f64> = eu_base.iter().map(|x| 2.0 * l2 * x).collect();
    let mut g_intents = Matrix::zeros(np, d);
    let mut g_history = None;
    if !history.is_empty() {
        let norm = 1.0 / (np * history.len()) as f64;
        let mut mix = vec![0.0; d];
        for (q, &b) in rep.beta.iter().enumerate() {
            axpy(&mut mix, b, enc.intents.row(q));
        }
        let mut hsum = vec![0.0; d];
        for &i in history {
            axpy(&mut hsum, 1.0, p.item.row(i));
        }
        let mut d_mix = vec![0.0; d];
        add_hadamard(&mut d_mix, norm, &g_ig, &hsum);
        let mut d_h = vec![0.0; d];
        add_hadamard(&mut d_h, norm, &g_ig, &mix);
        g_history = Some(d_h);

        let d_beta: Vec<f64> = (0..np).map(|q| dot(&d_mix, enc.intents.row(q))).collect();
        let d_logit = softmax_backward(&rep.beta, &d_beta);
        for (q, &dl) in d_logit.iter().enumerate() {
            let row = g_intents.row_mut(q);
            axpy(row, rep.beta[q], &d_mix);
            axpy(row, dl, eu_base);
            axpy(&mut g_entity, dl, enc.intents.row(q));
        }
    }

    SampleGrad {
        loss,
        user: u,
        kg: g_kg,
        entity: g_entity,
        positive,
        negative,
        history: g_history,
        intents: g_intents,
        fusion: g_fusion,
    }
}

/// Mean batch objective without gradients.
pub fn batch_loss(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    train: &InteractionMatrix,
    batch: &[Sample],
    l2: f64,
    exec: Execution,
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let enc = Encoder::new(params, graph, exec)?;
    let losses = exec.map(batch, |s| {
        let ip = params.item.row(s.positive);
        let ineg = params.item.row(s.negative);
        let rep = enc.represent(train.items(s.user), s.user);
        let eu = params.entity.row(s.user);
        let margin = dot(&rep.e_u, ip) - dot(&rep.e_u, ineg);
        bpr_loss(margin, 0.0) + l2 * (dot(eu, eu) + dot(ip, ip) + dot(ineg, ineg))
    });
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}

/// Mean batch objective and its full gradient.
pub fn batch_gradient(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    train: &InteractionMatrix,
    batch: &[Sample],
    l2: f64,
    exec: Execution,
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(params);
    if batch.is_empty() {
        return Ok((0.0, grads));
    }
    let enc = Encoder::new(params, graph, exec)?;
    let d = params.dim();
    let scale = 1.0 / batch.len() as f64;
    let per_sample = exec.map(batch, |s| sample_grad(&enc, train, s, l2));

    let mut loss = 0.0;
    let mut seeds = Matrix::zeros(params.entity.rows(), d);
    let mut seeded = vec![false; params.entity.rows()];
    let mut g_intents = Matrix::zeros(enc.intents.rows(), d);
    for (s, g) in batch.iter().zip(&per_sample) {
        loss += g.loss;
        axpy(seeds.row_mut(g.user), scale, &g.kg);
        seeded[g.user] = true;
        axpy(grads.entity.row_mut(g.user), scale, &g.entity);
        axpy(grads.item.row_mut(s.positive), scale, &g.positive);
        axpy(grads.item.row_mut(s.negative), scale, &g.negative);
        if let Some(h) = &g.history {
            for &i in train.items(g.user) {
                axpy(grads.item.row_mut(i), scale, h);
            }
        }
        axpy(g_intents.as_mut_slice(), scale, g.intents.as_slice());
        axpy(&mut grads.fusion, scale, &g.fusion);
    }

    intent_backward(params, &enc, &g_intents, &mut grads);
    graph_backward(params, graph, &enc.states, &seeds, &seeded, &mut grads, exec);
    Ok((loss * scale, grads))
}

/// Backward through `e_p = sum_r softmax_r(w_{.p}) e_r`.
fn intent_backward(params: &ModelParams, enc: &Encoder<'_>, g_intents: &Matrix, grads: &mut Gradients) {
    let nr = params.relation.rows();
    for q in 0..g_intents.rows() {
        let gp = g_intents.row(q);
        let alpha: Vec<f64> = (0..nr).map(|r| enc.alpha.get(r, q)).collect();
        let d_alpha: Vec<f64> = (0..nr).map(|r| dot(gp, params.relation.row(r))).collect();
        let d_w = softmax_backward(&alpha, &d_alpha);
        for r in 0..nr {
            axpy(grads.relation.row_mut(r), alpha[r], gp);
            let cur = grads.intent_weights.get(r, q);
            grads.intent_weights.set(r, q, cur + d_w[r]);
        }
    }
}

/// Backward through the layer recursion. `seeds` holds d loss / d e_kg per
/// region; every layer `1..=L` (and layer 0 when the self term is on)
/// receives it.
fn graph_backward(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    states: &[Matrix],
    seeds: &Matrix,
    seeded: &[bool],
    grads: &mut Gradients,
    exec: Execution,
) {
    let d = params.dim();
    let n = params.entity.rows();
    let layers = states.len();
    let inv_deg: Vec<f64> = (0..n)
        .map(|x| {
            let k = graph.neighbors_unchecked(x).len();
            if k == 0 { 0.0 } else { 1.0 / k as f64 }
        })
        .collect();

    let mut upstream = seeds.clone();
    let mut active = seeded.to_vec();
    for l in (1..=layers).rev() {
        let prev = if l == 1 { &params.entity } else { &states[l - 2] };

        // Relation gradient: sum over directed pairs (x, v) with relation r
        // of G_x ⊙ s_v / |N(x)|, one relation per task, pairs in fixed order.
        let by_rel = graph.pairs_by_relation();
        let rel_grads = exec.map_range(by_rel.len(), |r| {
            let mut acc = vec![0.0; d];
            for &(x, v) in &by_rel[r] {
                if active[x.0] {
                    add_hadamard(&mut acc, inv_deg[x.0], upstream.row(x.0), prev.row(v.0));
                }
            }
            acc
        });
        for (r, g) in rel_grads.iter().enumerate() {
            axpy(grads.relation.row_mut(r), 1.0, g);
        }

        // Gradient to layer l-1 in gather form (adjacency is symmetric).
        let mut down = Matrix::zeros(n, d);
        exec.for_each_row(down.as_mut_slice(), d, |v, row| {
            for &(r, x) in graph.neighbors_unchecked(v) {
                if active[x.0] {
                    add_hadamard(row, inv_deg[x.0], upstream.row(x.0), params.relation.row(r.0));
                }
            }
        });
        let mut next_active: Vec<bool> = (0..n)
            .map(|v| {
                graph
                    .neighbors_unchecked(v)
                    .iter()
                    .any(|&(_, x)| active[x.0])
            })
            .collect();
        if l > 1 || params.shape.include_self {
            for x in 0..n {
                if seeded[x] {
                    axpy(down.row_mut(x), 1.0, seeds.row(x));
                    next_active[x] = true;
                }
            }
        }
        upstream = down;
        active = next_active;
    }
    if layers == 0 && !params.shape.include_self {
        return;
    }
    axpy(grads.entity.as_mut_slice(), 1.0, upstream.as_slice());
}
