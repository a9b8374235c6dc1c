//! Full-batch supervised training with best-validation checkpoint selection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingCorpus, Split};
use crate::diff::{Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::metrics::{evaluate, Metrics};
use crate::model::{
    forward_full, forward_tape, init_params, GraphPlan, MaskVars, ModelConfig, ModelParams,
};
use crate::optim::{adam_step, AdamConfig, AdamState};

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.001,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    pub val_macro_f1: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub test_accuracy: Option<f64>,
    pub test_macro_f1: Option<f64>,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }
}

/// Mean negative log-likelihood of `labels` over the rows in `nodes`.
pub fn cross_entropy<T: Real>(
    tape: &mut Tape<T>,
    probs: Var,
    labels: &[usize],
    nodes: &[usize],
) -> Result<Var> {
    if nodes.is_empty() {
        return Err(Error::EmptySplit("selection".into()));
    }
    let rows = tape.gather_rows(probs, Arc::from(nodes))?;
    let picked: Arc<[usize]> = nodes.iter().map(|&i| labels[i]).collect();
    let p = tape.pick_cols(rows, picked)?;
    let logp = tape.ln(p, T::from_f64(PROB_FLOOR));
    let mean = tape.mean(logp);
    Ok(tape.affine(mean, -T::one(), T::zero()))
}

fn split_nodes(corpus: &EmbeddingCorpus, split: Split) -> Result<Vec<usize>> {
    let nodes = corpus.split_indices(split);
    if nodes.is_empty() {
        return Err(Error::EmptySplit(split.name().into()));
    }
    Ok(nodes)
}

/// Checks that corpus, graph and model config describe the same problem.
pub fn check_compatible(
    corpus: &EmbeddingCorpus,
    graph: &SimilarityGraph,
    cfg: &ModelConfig,
) -> Result<()> {
    if graph.num_nodes() != corpus.len() {
        return Err(Error::Config(format!(
            "graph has {} nodes but the corpus has {}",
            graph.num_nodes(),
            corpus.len()
        )));
    }
    if cfg.feature_dim != corpus.feature_dim || cfg.num_classes != corpus.num_classes {
        return Err(Error::Config(format!(
            "model expects F={} K={}, corpus has F={} K={}",
            cfg.feature_dim, cfg.num_classes, corpus.feature_dim, corpus.num_classes
        )));
    }
    Ok(())
}

pub fn train<T: Real>(
    corpus: &EmbeddingCorpus,
    graph: &SimilarityGraph,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainReport)> {
    train_cfg.validate()?;
    check_compatible(corpus, graph, model_cfg)?;
    let train_nodes = split_nodes(corpus, Split::Train)?;
    let val_nodes = split_nodes(corpus, Split::Val)?;
    let test_nodes = corpus.split_indices(Split::Test);

    let labels = corpus.labels();
    let x: Tensor<T> = corpus.features();
    let plan = GraphPlan::new(graph);
    let slope = T::from_f64(model_cfg.leaky_slope);

    let mut params: ModelParams<T> = init_params(model_cfg)?;
    let mut state = AdamState::new(&params.tensors());
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;
    let mut report = TrainReport {
        epochs: train_cfg.epochs,
        train_loss: Vec::with_capacity(train_cfg.epochs),
        val_accuracy: Vec::with_capacity(train_cfg.epochs),
        val_macro_f1: Vec::with_capacity(train_cfg.epochs),
        best_epoch: 0,
        test_accuracy: None,
        test_macro_f1: None,
    };

    for epoch in 1..=train_cfg.epochs {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let pv = params.record(&mut tape, true);
        let out = forward_tape(&mut tape, xv, &plan, &pv, slope, &MaskVars::default())?;
        let loss = cross_entropy(&mut tape, out.probs, &labels, &train_nodes)?;
        let loss_value = tape.value(loss).item().as_f64();
        if !loss_value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                value: loss_value,
            });
        }
        let grads = tape.backward(loss)?;
        let grad_tensors: Vec<Tensor<T>> = pv
            .all()
            .iter()
            .zip(params.tensors())
            .map(|(&v, p)| grads.get_or_zeros(v, p))
            .collect();
        drop(tape);
        let grad_refs: Vec<&Tensor<T>> = grad_tensors.iter().collect();
        adam_step(
            &mut params.tensors_mut(),
            &grad_refs,
            &mut state,
            train_cfg.learning_rate,
            train_cfg.adam,
        )?;
        if !params.is_finite() {
            return Err(Error::Divergence {
                epoch,
                value: f64::NAN,
            });
        }

        let probs = forward_full(&x, &plan, &params)?.probs;
        let val = evaluate(&probs, &labels, &val_nodes)?;
        report.train_loss.push(loss_value);
        report.val_accuracy.push(val.accuracy);
        report.val_macro_f1.push(val.macro_f1);
        if best.as_ref().is_none_or(|(f1, _, _)| val.macro_f1 > *f1) {
            best = Some((val.macro_f1, epoch, params.clone()));
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    report.best_epoch = best_epoch;
    if !test_nodes.is_empty() {
        let probs = forward_full(&x, &plan, &best_params)?.probs;
        let test = evaluate(&probs, &labels, &test_nodes)?;
        report.test_accuracy = Some(test.accuracy);
        report.test_macro_f1 = Some(test.macro_f1);
    }
    Ok((best_params, report))
}

/// Metrics of `params` on one split.
pub fn evaluate_split<T: Real>(
    corpus: &EmbeddingCorpus,
    graph: &SimilarityGraph,
    params: &ModelParams<T>,
    split: Split,
) -> Result<Metrics> {
    check_compatible(corpus, graph, &params.config)?;
    let nodes = split_nodes(corpus, split)?;
    let probs = forward_full(&corpus.features(), &GraphPlan::new(graph), params)?.probs;
    evaluate(&probs, &corpus.labels(), &nodes)
}
