use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{backward, forward_cached, hard_ce_loss, soft_ce_loss_with, NetError, NetParams, TargetRule};
use crate::codec::SparseFrame;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Hard,
    Soft { temperature: f64, rule: TargetRule },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    /// Utterances per update.
    pub batch_size: usize,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f64,
    /// Global gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 10,
            batch_size: 8,
            lr_decay: 1.0,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidConfig(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay {} outside (0, 1]", self.lr_decay));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad(format!("clip_norm {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HardExample<'a> {
    pub feats: &'a Array2<f64>,
    pub labels: &'a [u16],
}

/// Student input: features and teacher soft targets only.
#[derive(Debug, Clone, Copy)]
pub struct SoftExample<'a> {
    pub feats: &'a Array2<f64>,
    pub targets: &'a [SparseFrame],
}

#[derive(Debug, Clone)]
pub enum TrainingSet<'a> {
    Hard(Vec<HardExample<'a>>),
    Soft {
        examples: Vec<SoftExample<'a>>,
        temperature: f64,
        rule: TargetRule,
    },
}

impl TrainingSet<'_> {
    pub fn len(&self) -> usize {
        match self {
            TrainingSet::Hard(v) => v.len(),
            TrainingSet::Soft { examples, .. } => examples.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn loss_kind(&self) -> LossKind {
        match self {
            TrainingSet::Hard(_) => LossKind::Hard,
            TrainingSet::Soft {
                temperature, rule, ..
            } => LossKind::Soft {
                temperature: *temperature,
                rule: *rule,
            },
        }
    }

    fn loss_and_grad(&self, params: &NetParams, i: usize) -> Result<(f64, NetParams), NetError> {
        let cache = match self {
            TrainingSet::Hard(v) => forward_cached(params, v[i].feats)?,
            TrainingSet::Soft { examples, .. } => forward_cached(params, examples[i].feats)?,
        };
        let (loss, g) = match self {
            TrainingSet::Hard(v) => hard_ce_loss(cache.logits(), v[i].labels, params.label_delay)?,
            TrainingSet::Soft {
                examples,
                temperature,
                rule,
            } => soft_ce_loss_with(cache.logits(), examples[i].targets, *temperature, *rule)?,
        };
        Ok((loss, backward(params, &cache, &g)?))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: NetParams,
    /// Mean per-utterance loss of each epoch, accumulated during the epoch.
    pub loss_trace: Vec<f64>,
}

/// Minibatch SGD with momentum. Each update averages per-utterance gradients
/// over the batch; utterance order is reshuffled every epoch from `cfg.seed`.
pub fn train(init: NetParams, data: &TrainingSet<'_>, cfg: &TrainConfig) -> Result<TrainOutcome, NetError> {
    cfg.validate()?;
    init.validate()?;
    if data.is_empty() {
        return Err(NetError::InvalidConfig("empty training set".into()));
    }
    let mut params = init;
    let mut velocity = params.zeros_like();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut lr = cfg.learning_rate;
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::stream(cfg.seed, "shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, NetParams), NetError>> = batch
                .par_iter()
                .map(|&i| data.loss_and_grad(&params, i))
                .collect();
            let mut grad = params.zeros_like();
            for r in results {
                let (loss, g) = r?;
                epoch_loss += loss;
                grad.add_scaled(&g, 1.0 / batch.len() as f64);
            }
            if let Some(c) = cfg.clip_norm {
                let n = grad.norm();
                if n > c {
                    grad.scale(c / n);
                }
            }
            velocity.scale(cfg.momentum);
            velocity.add_scaled(&grad, -lr);
            params.add_scaled(&velocity, 1.0);
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || !params.all_finite() {
            return Err(NetError::Diverged { epoch, loss: mean });
        }
        trace.push(mean);
        lr *= cfg.lr_decay;
    }
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
    })
}
