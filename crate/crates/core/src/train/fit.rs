use std::fmt::Write as _;

use crate::coarsen::CoarseTrajectory;
use crate::ebm::{EbmConfig, EbmParams};
use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::par::Exec;
use crate::seed::stage_rng;

use super::adam::AdamState;
use super::tape::{batch_loss, grad};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub ebm: EbmConfig,
    pub learning_rate: f64,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    /// Keep a parameter snapshot every this many epochs (0 disables).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ebm: EbmConfig::default(),
            learning_rate: 0.01,
            patience: 100,
            max_epochs: 5000,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_params: EbmParams,
    pub initial_params: EbmParams,
    pub checkpoints: Vec<(usize, EbmParams)>,
}

impl TrainReport {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// `epoch,train_loss,val_loss,best_val_loss` with full round-trip precision.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,best_val_loss\n");
        let mut best = f64::INFINITY;
        for (e, (t, v)) in self.train_loss.iter().zip(&self.val_loss).enumerate() {
            best = best.min(*v);
            let _ = writeln!(out, "{e},{t:?},{v:?},{best:?}");
        }
        out
    }
}

/// Full-batch Adam with validation-based early stopping.
///
/// Epoch `e` evaluates both losses at the current parameters, then takes one
/// Adam step on the training gradient. Training stops once `patience` epochs
/// have passed without improving the best validation loss, and the
/// parameters from the best epoch are returned. With an empty validation set
/// the training loss is monitored instead.
pub fn train(
    train_set: &[CoarseTrajectory],
    val_set: &[CoarseTrajectory],
    graph: &RegionGraph,
    config: &TrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<TrainReport> {
    let init = EbmParams::init(graph.n_nodes(), &mut stage_rng(seed, "train-init", 0));
    train_from(init, train_set, val_set, graph, config, exec)
}

pub fn train_from(
    init: EbmParams,
    train_set: &[CoarseTrajectory],
    val_set: &[CoarseTrajectory],
    graph: &RegionGraph,
    config: &TrainConfig,
    exec: Exec,
) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    config.ebm.validate()?;
    if !(config.learning_rate > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", config.learning_rate)));
    }
    let mut params = init.clone();
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let mut report = TrainReport {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        best_params: params.clone(),
        initial_params: init,
        checkpoints: Vec::new(),
    };
    let diverged = |epoch: usize, e: Error| Error::TrainingDiverged {
        epoch,
        reason: e.to_string(),
    };

    for epoch in 0..config.max_epochs {
        let (train_loss, g) = grad(&params, train_set, graph, &config.ebm, exec).map_err(|e| diverged(epoch, e))?;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            batch_loss(&params, val_set, graph, &config.ebm, exec).map_err(|e| diverged(epoch, e))?
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(diverged(epoch, Error::Domain("non-finite loss".into())));
        }
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
            report.checkpoints.push((epoch, params.clone()));
        }
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            report.best_params = params.clone();
        } else if epoch - report.best_epoch > config.patience {
            break;
        }
        adam.step(&mut params, &g)?;
        if !params.is_finite() {
            return Err(diverged(epoch, Error::Domain("non-finite parameters".into())));
        }
    }
    Ok(report)
}
