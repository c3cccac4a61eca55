//! Pairwise ranking training with analytic gradients.

mod grad;
mod loss;
mod optim;

pub use grad::{batch_gradient, batch_loss, Gradients, Sample};
pub use loss::{bpr_loss, bpr_slope, sigmoid, softplus};
pub use optim::{Optimizer, OptimizerKind};

use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_scorer, ModelScorer};
use crate::interactions::{sample_negative, DataSplit, InteractionMatrix};
use crate::kg::KnowledgeGraph;
use crate::model::{Fusion, ModelParams, ModelShape};
use crate::parallel::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub batch_size: usize,
    pub num_intents: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    pub seed: u64,
    pub include_self: bool,
    pub fusion: Fusion,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            batch_size: 128,
            num_intents: 4,
            num_layers: 4,
            learning_rate: 1e-3,
            l2: 1e-5,
            epochs: 50,
            seed: 0,
            include_self: true,
            fusion: Fusion::Attention,
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_size == 0 || self.num_intents == 0 || self.num_layers == 0 {
            return Err(Error::Config(
                "dim, batch_size, num_intents and num_layers must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("bad learning rate {}", self.learning_rate)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("bad l2 coefficient {}", self.l2)));
        }
        Ok(())
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            dim: self.dim,
            num_intents: self.num_intents,
            num_layers: self.num_layers,
            include_self: self.include_self,
            fusion: self.fusion,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// F1@3 on the validation split, when it has evaluable users.
    pub validation_f1_at_3: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept (0 = initial parameters).
    pub best_epoch: usize,
    pub wall_time: Duration,
}

/// Shuffles the training positives and pairs each with one sampled negative.
pub fn epoch_batches<R: Rng + ?Sized>(
    train: &InteractionMatrix,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Sample>>> {
    let mut positives: Vec<(usize, usize)> = train.pairs().collect();
    positives.shuffle(rng);
    let mut batches = Vec::with_capacity(positives.len().div_ceil(batch_size.max(1)));
    for chunk in positives.chunks(batch_size.max(1)) {
        let mut batch = Vec::with_capacity(chunk.len());
        for &(user, positive) in chunk {
            let negative = sample_negative(train, user, rng)?;
            batch.push(Sample {
                user,
                positive,
                negative,
            });
        }
        batches.push(batch);
    }
    Ok(batches)
}

/// One pass over the shuffled training positives. Returns the mean sample
/// loss (0 when there is nothing to train on).
pub fn train_epoch<R: Rng + ?Sized>(
    params: &mut ModelParams,
    optimizer: &mut Optimizer,
    graph: &KnowledgeGraph,
    train: &InteractionMatrix,
    cfg: &TrainConfig,
    rng: &mut R,
    exec: Execution,
) -> Result<f64> {
    let batches = epoch_batches(train, cfg.batch_size, rng)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in &batches {
        let (loss, grads) = batch_gradient(params, graph, train, batch, cfg.l2, exec)?;
        if !loss.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite batch loss after {} optimizer steps",
                optimizer.steps()
            )));
        }
        optimizer.apply(params, &grads);
        total += loss * batch.len() as f64;
        count += batch.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Trains from a fresh initialization and keeps the parameters with the
/// best validation F1@3.
pub fn fit(
    graph: &KnowledgeGraph,
    split: &DataSplit,
    cfg: &TrainConfig,
    exec: Execution,
) -> Result<(ModelParams, TrainReport)> {
    fit_with(graph, split, cfg, exec, |_| {})
}

/// [`fit`] with a per-epoch callback.
pub fn fit_with(
    graph: &KnowledgeGraph,
    split: &DataSplit,
    cfg: &TrainConfig,
    exec: Execution,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(ModelParams, TrainReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::init(
        cfg.shape(),
        graph.num_entities(),
        graph.num_relations(),
        split.train.num_items(),
        &mut rng,
    );
    let mut optimizer = Optimizer::new(cfg.optimizer, cfg.learning_rate, &params);
    let has_validation = !split.validation.is_empty();
    let validate = |p: &ModelParams| -> Result<Option<f64>> {
        if !has_validation {
            return Ok(None);
        }
        let scorer = ModelScorer::new(p, graph, &split.train, exec)?;
        let r = evaluate_scorer(&scorer, &split.train, &split.validation, &[3], exec)?;
        Ok(Some(r.metrics[0].f1))
    };

    let mut best = (validate(&params)?, 0usize, params.clone());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mean_loss = train_epoch(&mut params, &mut optimizer, graph, &split.train, cfg, &mut rng, exec)?;
        let f1 = validate(&params)?;
        let stats = EpochStats {
            epoch,
            mean_loss,
            validation_f1_at_3: f1,
        };
        on_epoch(&stats);
        epochs.push(stats);
        let better = match (f1, best.0) {
            (Some(f), Some(b)) => f > b,
            _ => true,
        };
        if better {
            best = (f1, epoch, params.clone());
        }
    }
    Ok((
        best.2,
        TrainReport {
            epochs,
            best_epoch: best.1,
            wall_time: start.elapsed(),
        },
    ))
}

/// Largest `|analytic - numeric| / max(1, |numeric|)` over every parameter,
/// with central differences of step `eps` on the objective of one sample.
pub fn grad_check(
    params: &ModelParams,
    graph: &KnowledgeGraph,
    train: &InteractionMatrix,
    sample: Sample,
    l2: f64,
    eps: f64,
) -> Result<f64> {
    let batch = [sample];
    let exec = Execution::Sequential;
    let (_, analytic) = batch_gradient(params, graph, train, &batch, l2, exec)?;
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for t in 0..5 {
        let n = params.tensors()[t].len();
        for k in 0..n {
            let orig = params.tensors()[t][k];
            probe.tensors_mut()[t][k] = orig + eps;
            let up = batch_loss(&probe, graph, train, &batch, l2, exec)?;
            probe.tensors_mut()[t][k] = orig - eps;
            let down = batch_loss(&probe, graph, train, &batch, l2, exec)?;
            probe.tensors_mut()[t][k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic.tensors()[t][k];
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}
