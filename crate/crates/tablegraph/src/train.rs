//! Stochastic training loop.
//!
//! One step works on one table: sample balanced pairs per head, run the
//! forward pass, average the three cross-entropy losses, and apply Adam.
//! Sample order reshuffles every epoch.
//!
//! All randomness is derived from `TrainConfig::seed` and the absolute
//! step counter stored in the parameter store, so a run that checkpoints
//! and resumes reproduces an uninterrupted run bit for bit.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::AdjacencyTriple;
use crate::model::{featurize, forward, Features, ModelConfig, HEAD_NAMES};
use crate::nn::checkpoint::{self, CheckpointError};
use crate::nn::{AdamConfig, Element, NnError, ParamStore, Tape};
use crate::sampler::HeadPairs;
use crate::seed;
use crate::synth::Sample;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training needs at least one sample")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of optimizer updates to run in this call.
    pub steps: u64,
    /// Pairs drawn per vertex and head each step.
    pub pairs_per_vertex: usize,
    pub lr: f64,
    pub seed: u64,
    /// Save a checkpoint every this many completed steps. 0 disables
    /// periodic saves; the final state is always saved when a path is given.
    pub checkpoint_every: u64,
    /// Write a runlog line every this many completed steps. 0 disables.
    pub log_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            pairs_per_vertex: 10,
            lr: 1e-3,
            seed: 0,
            checkpoint_every: 0,
            log_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.pairs_per_vertex == 0 {
            return Err(TrainError::Config("pairs_per_vertex must be at least 1".into()));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One runlog line. `step` counts completed updates across resumes, so a
/// resumed run continues the numbering instead of restarting it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub sample: usize,
    pub loss: f64,
    pub loss_cells: f64,
    pub loss_rows: f64,
    pub loss_cols: f64,
    pub acc_cells: f64,
    pub acc_rows: f64,
    pub acc_cols: f64,
    pub elapsed_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub steps_run: u64,
    pub final_step: u64,
    pub final_loss: f64,
    pub mean_loss: f64,
}

/// Runs `cfg.steps` updates on `store`, mutating it in place.
///
/// The absolute step counter lives in the store, so passing a freshly
/// loaded checkpoint picks up exactly where the saving run stopped.
pub fn train<E: Element>(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    samples: &[Sample],
    store: &mut ParamStore<E>,
    checkpoint_path: Option<&Path>,
    mut runlog: Option<&mut dyn Write>,
) -> Result<TrainSummary, TrainError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.checkpoint_every > 0 && checkpoint_path.is_none() {
        return Err(TrainError::Config(
            "checkpoint_every needs a checkpoint path".into(),
        ));
    }

    let features: Vec<Features<E>> = samples
        .iter()
        .map(|s| featurize(s, model_cfg.max_word_len))
        .collect();
    let triples: Vec<AdjacencyTriple> = samples.iter().map(Sample::adjacency).collect();
    let n = samples.len() as u64;

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut order_epoch = None;
    let adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut loss_sum = 0.0;
    let mut last_loss = 0.0;

    for _ in 0..cfg.steps {
        let step = store.step();
        let epoch = step / n;
        if order_epoch != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, 2 * epoch));
            // Reshuffle from the identity so the order depends only on the
            // epoch number, not on how many epochs this process has seen.
            order = (0..samples.len()).collect();
            order.shuffle(&mut rng);
            order_epoch = Some(epoch);
        }
        let sample_index = order[(step % n) as usize];
        let started = Instant::now();

        let mut pair_rng = ChaCha8Rng::seed_from_u64(seed::derive(cfg.seed, 2 * step + 1));
        let triple = &triples[sample_index];
        let pairs = HeadPairs::sampled(triple, cfg.pairs_per_vertex, &mut pair_rng);

        let mut tape = Tape::new();
        let logits = forward(model_cfg, store, &mut tape, &features[sample_index], &pairs)?;

        let mut head_loss = [0.0f64; 3];
        let mut head_acc = [0.0f64; 3];
        let mut loss_nodes = Vec::with_capacity(3);
        for (i, head) in HEAD_NAMES.iter().enumerate() {
            let pair_set = pairs.by_name(head);
            let labels = pair_set.labels(triple.by_name(head));
            let node = logits.by_name(head);
            let scores = tape.value(node).data();
            let correct = labels
                .iter()
                .enumerate()
                .filter(|&(k, &lab)| {
                    let one = scores[2 * k + 1].to_f64() > scores[2 * k].to_f64();
                    one == (lab == 1)
                })
                .count();
            head_acc[i] = correct as f64 / labels.len() as f64;
            let loss = tape.softmax_xent_mean(node, &labels)?;
            head_loss[i] = tape.value(loss).item().to_f64();
            loss_nodes.push(loss);
        }
        let sum = tape.add(loss_nodes[0], loss_nodes[1])?;
        let sum = tape.add(sum, loss_nodes[2])?;
        let total = tape.scale(sum, 1.0 / 3.0)?;
        let loss_val = tape.value(total).item().to_f64();

        let grads = tape.backward(total)?;
        store.adam_step(&grads, &adam)?;

        let done = store.step();
        loss_sum += loss_val;
        last_loss = loss_val;

        if let Some(w) = runlog.as_deref_mut() {
            if cfg.log_every > 0 && done % cfg.log_every == 0 {
                let entry = StepLog {
                    step: done,
                    sample: sample_index,
                    loss: loss_val,
                    loss_cells: head_loss[0],
                    loss_rows: head_loss[1],
                    loss_cols: head_loss[2],
                    acc_cells: head_acc[0],
                    acc_rows: head_acc[1],
                    acc_cols: head_acc[2],
                    elapsed_ms: started.elapsed().as_millis() as u64,
                };
                serde_json::to_writer(&mut *w, &entry)?;
                writeln!(w)?;
            }
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 {
            checkpoint::save(store, checkpoint_path.expect("checked above"))?;
        }
    }

    if let Some(path) = checkpoint_path {
        checkpoint::save(store, path)?;
    }
    Ok(TrainSummary {
        steps_run: cfg.steps,
        final_step: store.step(),
        final_loss: last_loss,
        mean_loss: if cfg.steps > 0 {
            loss_sum / cfg.steps as f64
        } else {
            0.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, InteractionKind};
    use crate::synth::{generate_sample, Category, GenConfig};

    fn desk_samples(count: usize) -> Vec<Sample> {
        (0..count)
            .map(|i| generate_sample(&GenConfig::desk(), Category::FullGrid, 90 + i as u64).unwrap())
            .collect()
    }

    fn quick_cfg(steps: u64) -> TrainConfig {
        TrainConfig {
            steps,
            pairs_per_vertex: 4,
            lr: 3e-3,
            seed: 17,
            checkpoint_every: 0,
            log_every: 1,
        }
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut cfg = TrainConfig::default();
        cfg.pairs_per_vertex = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = TrainConfig::default();
        cfg.lr = -1.0;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let model_cfg = ModelConfig::tiny(InteractionKind::Fcnn);
        let mut store = init_params::<f64>(&model_cfg, 1).unwrap();
        let err = train(&model_cfg, &quick_cfg(1), &[], &mut store, None, None).unwrap_err();
        assert!(matches!(err, TrainError::EmptyDataset));
    }

    #[test]
    fn periodic_checkpoints_need_a_path() {
        let model_cfg = ModelConfig::tiny(InteractionKind::Fcnn);
        let mut store = init_params::<f64>(&model_cfg, 1).unwrap();
        let samples = desk_samples(1);
        let mut cfg = quick_cfg(1);
        cfg.checkpoint_every = 1;
        let err = train(&model_cfg, &cfg, &samples, &mut store, None, None).unwrap_err();
        assert!(matches!(err, TrainError::Config(_)));
    }

    #[test]
    fn loss_drops_on_a_tiny_problem() {
        let model_cfg = ModelConfig::tiny(InteractionKind::Fcnn);
        let mut store = init_params::<f64>(&model_cfg, 5).unwrap();
        let samples = desk_samples(2);
        let mut log = Vec::new();
        let summary = train(
            &model_cfg,
            &quick_cfg(40),
            &samples,
            &mut store,
            None,
            Some(&mut log),
        )
        .unwrap();
        assert_eq!(summary.final_step, 40);
        let lines: Vec<StepLog> = String::from_utf8(log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 40);
        let head: f64 = lines[..5].iter().map(|l| l.loss).sum::<f64>() / 5.0;
        let tail: f64 = lines[35..].iter().map(|l| l.loss).sum::<f64>() / 5.0;
        assert!(
            tail < head,
            "loss should fall, went {head:.4} -> {tail:.4}"
        );
        assert!(lines.iter().all(|l| l.loss.is_finite()));
        assert!(lines.iter().all(|l| (0.0..=1.0).contains(&l.acc_rows)));
    }

    #[test]
    fn runlog_respects_log_every() {
        let model_cfg = ModelConfig::tiny(InteractionKind::Fcnn);
        let mut store = init_params::<f64>(&model_cfg, 5).unwrap();
        let samples = desk_samples(1);
        let mut cfg = quick_cfg(5);
        cfg.log_every = 2;
        let mut log = Vec::new();
        train(&model_cfg, &cfg, &samples, &mut store, None, Some(&mut log)).unwrap();
        let steps: Vec<u64> = String::from_utf8(log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str::<StepLog>(l).unwrap().step)
            .collect();
        assert_eq!(steps, vec![2, 4]);
    }

    #[test]
    fn resume_reproduces_an_uninterrupted_run() {
        let model_cfg = ModelConfig::tiny(InteractionKind::DgcnnStar);
        let samples = desk_samples(3);
        let dir = tempfile::tempdir().unwrap();
        let straight_path = dir.path().join("straight.ckpt");
        let resumed_path = dir.path().join("resumed.ckpt");

        let mut straight = init_params::<f64>(&model_cfg, 21).unwrap();
        train(
            &model_cfg,
            &quick_cfg(6),
            &samples,
            &mut straight,
            Some(&straight_path),
            None,
        )
        .unwrap();

        let mut first = init_params::<f64>(&model_cfg, 21).unwrap();
        train(
            &model_cfg,
            &quick_cfg(3),
            &samples,
            &mut first,
            Some(&resumed_path),
            None,
        )
        .unwrap();
        let mut second = checkpoint::load::<f64>(&resumed_path).unwrap();
        assert_eq!(second.step(), 3);
        train(
            &model_cfg,
            &quick_cfg(3),
            &samples,
            &mut second,
            Some(&resumed_path),
            None,
        )
        .unwrap();

        let a = std::fs::read(&straight_path).unwrap();
        let b = std::fs::read(&resumed_path).unwrap();
        assert_eq!(a, b, "resumed run diverged from the straight run");
    }

    #[test]
    fn periodic_checkpoint_lands_on_schedule() {
        let model_cfg = ModelConfig::tiny(InteractionKind::Fcnn);
        let mut store = init_params::<f64>(&model_cfg, 2).unwrap();
        let samples = desk_samples(1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut cfg = quick_cfg(3);
        cfg.checkpoint_every = 2;
        train(&model_cfg, &cfg, &samples, &mut store, Some(&path), None).unwrap();
        let loaded = checkpoint::load::<f64>(&path).unwrap();
        // The final save after the loop wins over the step-2 periodic one.
        assert_eq!(loaded.step(), 3);
    }
}
