//! From-scratch autoencoder: forward pass, reconstruction loss, analytic
//! gradients, Adam updates, and batch normalization — all in plain `f64`
//! arithmetic over [`crate::linalg::Mat`].
//!
//! The network is a mirrored stack of affine+ReLU layers: the encoder
//! compresses the input through a bottleneck, the decoder reconstructs it,
//! and `e(x) = ReLU(W_enc·x + b_enc)`, `d(r) = ReLU(W_dec·r + b_dec)`. The
//! anomaly score downstream is the squared reconstruction error
//! `L(x, y) = ||f(x) - y||²` with the target `y` equal to the input.
//!
//! Batch normalization, when enabled, sits between the affine transform and
//! the ReLU on every hidden layer (never the output layer). Training-mode
//! forward uses batch statistics; inference uses running statistics frozen
//! during training.

mod adam;
mod backprop;
mod forward;
mod persist;
mod train;

pub use adam::{adam_step, AdamState};
pub use backprop::gradients;
pub use forward::{
    forward, forward_batch, objective, penalty, reconstruction_loss, ForwardCache, ForwardMode,
};
pub use persist::{load_model, model_fingerprint, model_to_string, save_model};
pub use train::{train, update_running_stats, EpochStats, TrainConfig, TrainTrace};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::seeding;

/// Numerical floor added to variances before taking the inverse square root.
pub const NORM_EPS: f64 = 1e-5;

/// Encoder/decoder layout. The decoder mirrors the encoder: widths
/// `input → e₁ → … → bottleneck → … → e₁ → input`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    /// Width after each encoder layer; the last entry is the bottleneck.
    pub encoder_dims: Vec<usize>,
}

impl Architecture {
    pub fn new(input_dim: usize, encoder_dims: Vec<usize>) -> Result<Architecture> {
        let arch = Architecture {
            input_dim,
            encoder_dims,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::BadConfig {
                reason: "input_dim must be positive".to_string(),
            });
        }
        if self.encoder_dims.is_empty() {
            return Err(Error::BadConfig {
                reason: "encoder_dims must contain at least one layer width".to_string(),
            });
        }
        if self.encoder_dims.iter().any(|&d| d == 0) {
            return Err(Error::BadConfig {
                reason: "layer widths must be positive".to_string(),
            });
        }
        if self.bottleneck() >= self.input_dim {
            return Err(Error::BadConfig {
                reason: format!(
                    "bottleneck width {} must be smaller than input_dim {}",
                    self.bottleneck(),
                    self.input_dim
                ),
            });
        }
        Ok(())
    }

    /// Number of encoder layers (= decoder layers).
    pub fn n_layers(&self) -> usize {
        self.encoder_dims.len()
    }

    pub fn bottleneck(&self) -> usize {
        *self.encoder_dims.last().expect("validated non-empty")
    }

    /// Widths of the decoder layers, mirroring the encoder back up to the
    /// input dimension.
    pub fn decoder_dims(&self) -> Vec<usize> {
        let mut dims: Vec<usize> = self.encoder_dims[..self.n_layers() - 1]
            .iter()
            .rev()
            .copied()
            .collect();
        dims.push(self.input_dim);
        dims
    }

    /// Full width chain including the input:
    /// `[input, e₁, …, bottleneck, …, e₁, input]`.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(2 * self.n_layers() + 1);
        w.push(self.input_dim);
        w.extend_from_slice(&self.encoder_dims);
        w.extend(self.decoder_dims());
        w
    }

    /// Total affine layers (encoder + decoder).
    pub fn total_layers(&self) -> usize {
        2 * self.n_layers()
    }
}

/// Batch-normalization parameters for one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl NormParams {
    fn identity(width: usize) -> NormParams {
        NormParams {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// One affine layer: `z = W·x + b`, weight shape (out, in).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Mat,
    pub bias: Vec<f64>,
    /// Present on hidden layers when batch normalization is enabled.
    pub norm: Option<NormParams>,
}

/// Every trainable parameter plus the architecture that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    layers: Vec<LayerParams>,
}

impl ModelParams {
    /// Seeded uniform He initialization: `W ~ U(±√(6/fan_in))`, zero biases,
    /// identity normalization. Deterministic for a given seed.
    pub fn init(arch: &Architecture, batchnorm_enabled: bool, seed: u64) -> Result<ModelParams> {
        arch.validate()?;
        let widths = arch.layer_widths();
        let total = arch.total_layers();
        let mut rng = seeding::labeled_rng(seed, "init");
        let mut layers = Vec::with_capacity(total);
        for i in 0..total {
            let (fan_in, fan_out) = (widths[i], widths[i + 1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            let weight = {
                let mut m = Mat::zeros(fan_out, fan_in);
                for v in m.as_mut_slice() {
                    *v = rng.gen_range(-limit..=limit);
                }
                m
            };
            let is_hidden = i + 1 < total;
            layers.push(LayerParams {
                weight,
                bias: vec![0.0; fan_out],
                norm: (batchnorm_enabled && is_hidden).then(|| NormParams::identity(fan_out)),
            });
        }
        Ok(ModelParams { arch: arch.clone(), layers })
    }

    /// Assemble from explicit layers, validating shapes against `arch`.
    pub fn from_layers(arch: Architecture, layers: Vec<LayerParams>) -> Result<ModelParams> {
        arch.validate()?;
        if layers.len() != arch.total_layers() {
            return Err(Error::BadConfig {
                reason: format!(
                    "expected {} layers, found {}",
                    arch.total_layers(),
                    layers.len()
                ),
            });
        }
        let widths = arch.layer_widths();
        for (i, layer) in layers.iter().enumerate() {
            let expected = (widths[i + 1], widths[i]);
            let found = (layer.weight.rows(), layer.weight.cols());
            if expected != found {
                return Err(Error::ShapeMismatch {
                    tensor: layer_name(i, arch.n_layers()) + ".weight",
                    expected,
                    found,
                });
            }
            if layer.bias.len() != widths[i + 1] {
                return Err(Error::ShapeMismatch {
                    tensor: layer_name(i, arch.n_layers()) + ".bias",
                    expected: (1, widths[i + 1]),
                    found: (1, layer.bias.len()),
                });
            }
            if let Some(norm) = &layer.norm {
                if i + 1 == layers.len() {
                    return Err(Error::BadConfig {
                        reason: "output layer must not carry normalization parameters"
                            .to_string(),
                    });
                }
                for (name, v) in [
                    ("gamma", &norm.gamma),
                    ("beta", &norm.beta),
                    ("running_mean", &norm.running_mean),
                    ("running_var", &norm.running_var),
                ] {
                    if v.len() != widths[i + 1] {
                        return Err(Error::ShapeMismatch {
                            tensor: format!("{}.{}", layer_name(i, arch.n_layers()), name),
                            expected: (1, widths[i + 1]),
                            found: (1, v.len()),
                        });
                    }
                }
                if norm.running_var.iter().any(|&v| v < 0.0) {
                    return Err(Error::BadConfig {
                        reason: "running variance must be non-negative".to_string(),
                    });
                }
            }
        }
        Ok(ModelParams { arch, layers })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn batchnorm_enabled(&self) -> bool {
        self.layers.first().map(|l| l.norm.is_some()).unwrap_or(false)
    }

    /// Flatten every trainable parameter — weights (row-major), biases,
    /// normalization scale and shift, layer by layer — into one vector.
    /// Running statistics are not trainable and are excluded. The order
    /// matches [`Gradients::values`].
    pub fn trainable_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.as_slice());
            out.extend_from_slice(&layer.bias);
            if let Some(norm) = &layer.norm {
                out.extend_from_slice(&norm.gamma);
                out.extend_from_slice(&norm.beta);
            }
        }
        out
    }

    /// Inverse of [`ModelParams::trainable_values`]. Panics if `values` has
    /// the wrong length — callers round-trip vectors from the same model.
    pub fn set_trainable_values(&mut self, values: &[f64]) {
        let mut it = values.iter();
        let mut next = || *it.next().expect("value vector too short");
        for layer in &mut self.layers {
            for w in layer.weight.as_mut_slice() {
                *w = next();
            }
            for b in &mut layer.bias {
                *b = next();
            }
            if let Some(norm) = &mut layer.norm {
                for g in &mut norm.gamma {
                    *g = next();
                }
                for b in &mut norm.beta {
                    *b = next();
                }
            }
        }
        assert!(it.next().is_none(), "value vector too long");
    }
}

/// Canonical tensor-name prefix of layer `i`: encoder layers are
/// `enc0..enc{n-1}`, decoder layers `dec0..dec{n-1}`.
pub fn layer_name(i: usize, n_encoder: usize) -> String {
    if i < n_encoder {
        format!("enc{}", i)
    } else {
        format!("dec{}", i - n_encoder)
    }
}

/// Gradient of the objective for one layer's trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Mat,
    pub bias: Vec<f64>,
    pub norm: Option<NormGrads>,
}

/// Gradients for normalization scale/shift (running statistics are not
/// gradient-trained).
#[derive(Debug, Clone, PartialEq)]
pub struct NormGrads {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Gradients for every trainable parameter, same shapes as [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// Flatten in the order of [`ModelParams::trainable_values`].
    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.as_slice());
            out.extend_from_slice(&layer.bias);
            if let Some(norm) = &layer.norm {
                out.extend_from_slice(&norm.gamma);
                out.extend_from_slice(&norm.beta);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_architecture_mirrors_encoder() {
        let arch = Architecture::new(33, vec![24, 12, 6]).unwrap();
        assert_eq!(arch.layer_widths(), vec![33, 24, 12, 6, 12, 24, 33]);
        assert_eq!(arch.decoder_dims(), vec![12, 24, 33]);
        assert_eq!(arch.total_layers(), 6);
        assert_eq!(arch.bottleneck(), 6);
    }

    #[test]
    fn bottleneck_must_compress() {
        assert!(Architecture::new(8, vec![8]).is_err());
        assert!(Architecture::new(8, vec![9]).is_err());
        assert!(Architecture::new(8, vec![4]).is_ok());
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let arch = Architecture::new(8, vec![4, 2]).unwrap();
        let a = ModelParams::init(&arch, true, 7).unwrap();
        let b = ModelParams::init(&arch, true, 7).unwrap();
        assert_eq!(a, b);
        let c = ModelParams::init(&arch, true, 8).unwrap();
        assert_ne!(a, c);

        assert_eq!(a.layers().len(), 4);
        assert_eq!((a.layers()[0].weight.rows(), a.layers()[0].weight.cols()), (4, 8));
        assert_eq!((a.layers()[3].weight.rows(), a.layers()[3].weight.cols()), (8, 4));
        assert!(a.layers()[0].norm.is_some());
        assert!(a.layers()[2].norm.is_some());
        assert!(a.layers()[3].norm.is_none(), "output layer is not normalized");
    }

    #[test]
    fn from_layers_rejects_wrong_shapes() {
        let arch = Architecture::new(4, vec![2]).unwrap();
        let bad = vec![
            LayerParams {
                weight: Mat::zeros(2, 4),
                bias: vec![0.0; 2],
                norm: None,
            },
            LayerParams {
                weight: Mat::zeros(4, 3), // should be 4x2
                bias: vec![0.0; 4],
                norm: None,
            },
        ];
        match ModelParams::from_layers(arch, bad) {
            Err(Error::ShapeMismatch { tensor, .. }) => assert_eq!(tensor, "dec0.weight"),
            other => panic!("expected ShapeMismatch, got {:?}", other),
        }
    }

    #[test]
    fn layer_names_split_at_encoder_boundary() {
        assert_eq!(layer_name(0, 3), "enc0");
        assert_eq!(layer_name(2, 3), "enc2");
        assert_eq!(layer_name(3, 3), "dec0");
        assert_eq!(layer_name(5, 3), "dec2");
    }
}
