//! Mini-batch training on benign windows only.
//!
//! The loop is deterministic given the seed: parameter initialization and
//! the per-epoch shuffle both derive from `rng_seed`, and every update is
//! pure `f64` arithmetic. Attack-labeled rows abort before the first update
//! — training on anything but benign data would break the premise that high
//! reconstruction loss marks an anomaly.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::seeding;
use crate::telemetry::Label;

use crate::engineering::WindowedMatrix;

use super::adam::{adam_step, AdamState};
use super::backprop::gradients_with_cache;
use super::forward::{forward_batch, penalty, reconstruction_loss, ForwardCache, ForwardMode};
use super::{Architecture, ModelParams};

/// Exact header of the persisted training trace.
pub const TRACE_HEADER: &str = "epoch,mean_loss,penalty";

/// Every training knob. Defaults are the reference configuration; all are
/// overridable through the pipeline config file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub lambda_l1: f64,
    pub lambda_l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rng_seed: u64,
    pub batchnorm_enabled: bool,
    pub batchnorm_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lambda_l1: 1e-5,
            lambda_l2: 1e-4,
            batch_size: 32,
            epochs: 200,
            rng_seed: 0,
            batchnorm_enabled: true,
            batchnorm_momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::BadConfig { reason });
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{} must lie in (0, 1), got {}", name, v));
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return bad(format!("adam_epsilon must be positive, got {}", self.adam_epsilon));
        }
        if self.lambda_l1 < 0.0 || self.lambda_l2 < 0.0 {
            return bad("regularization strengths must be non-negative".to_string());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".to_string());
        }
        if !(self.batchnorm_momentum > 0.0 && self.batchnorm_momentum < 1.0) {
            return bad(format!(
                "batchnorm_momentum must lie in (0, 1), got {}",
                self.batchnorm_momentum
            ));
        }
        Ok(())
    }
}

/// Per-epoch training statistics. Wall time is informational only and is
/// never persisted (artifacts must be byte-identical across reruns).
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-window reconstruction loss over the epoch's forward passes.
    pub mean_loss: f64,
    /// Weight penalty evaluated after the epoch's final update.
    pub penalty: f64,
    pub wall_ms: f64,
}

/// One entry per completed epoch.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

impl TrainTrace {
    /// Persist as CSV (`epoch,mean_loss,penalty`); deterministic bytes.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(TRACE_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, e.penalty));
        }
        let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Fold a Train-mode forward cache's batch statistics into the running
/// statistics: `running ← momentum·running + (1-momentum)·batch`.
pub fn update_running_stats(params: &mut ModelParams, cache: &ForwardCache, momentum: f64) {
    for (layer, lc) in params.layers_mut().iter_mut().zip(&cache.layers) {
        if let (Some(norm), Some(mean), Some(var)) =
            (&mut layer.norm, &lc.batch_mean, &lc.batch_var)
        {
            for c in 0..norm.running_mean.len() {
                norm.running_mean[c] = momentum * norm.running_mean[c] + (1.0 - momentum) * mean[c];
                norm.running_var[c] = momentum * norm.running_var[c] + (1.0 - momentum) * var[c];
            }
        }
    }
}

/// Train on benign windows.
///
/// Epochs iterate seeded shuffles of the row set in mini-batches (the last
/// batch may be short). Per batch: forward in Train mode, fold batch
/// statistics into the running statistics, backpropagate, Adam step.
pub fn train(
    data: &WindowedMatrix,
    arch: &Architecture,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainTrace)> {
    cfg.validate()?;
    arch.validate()?;

    if let Some(labels) = data.labels() {
        let attacks = labels.iter().filter(|&&l| l == Label::Attack).count();
        if attacks > 0 {
            return Err(Error::AttackRowsInTraining { count: attacks });
        }
    }
    if data.n_windows() == 0 {
        return Err(Error::EmptyInput {
            what: "training matrix".to_string(),
        });
    }
    if data.n_features() != arch.input_dim {
        return Err(Error::ShapeMismatch {
            tensor: "training matrix".to_string(),
            expected: (data.n_windows(), arch.input_dim),
            found: (data.n_windows(), data.n_features()),
        });
    }

    let mut params = ModelParams::init(arch, cfg.batchnorm_enabled, cfg.rng_seed)?;
    let mut state = AdamState::new(&params);
    let mut trace = TrainTrace::default();
    let n_rows = data.n_windows();

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n_rows).collect();
        let mut rng = seeding::labeled_rng(cfg.rng_seed, &format!("shuffle:{}", epoch));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut batch = Mat::zeros(chunk.len(), arch.input_dim);
            for (r, &idx) in chunk.iter().enumerate() {
                batch.row_mut(r).copy_from_slice(data.row(idx));
            }

            let cache = forward_batch(&params, &batch, ForwardMode::Train)?;
            let out = cache.output();
            for r in 0..batch.rows() {
                epoch_loss += reconstruction_loss(out.row(r), batch.row(r))?;
            }

            let grads = gradients_with_cache(&params, &batch, &cache, cfg.lambda_l1, cfg.lambda_l2);
            if cfg.batchnorm_enabled {
                update_running_stats(&mut params, &cache, cfg.batchnorm_momentum);
            }
            adam_step(&mut params, &grads, &mut state, cfg)?;
        }

        trace.epochs.push(EpochStats {
            epoch,
            mean_loss: epoch_loss / n_rows as f64,
            penalty: penalty(&params, cfg.lambda_l1, cfg.lambda_l2),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    Ok((params, trace))
}
