//! GIN and GCN graph classifiers: message-passing encoder, global mean
//! pooling, linear head.

mod forward;
mod io;
mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::diff::Tensor;
use crate::{rng, Error, Result};

pub(crate) use forward::argmax;
pub use forward::{encode, forward, forward_batch, forward_tape, head_tape, params_on_tape, ForwardOutput, GraphBatch, TapeForward};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_FORMAT_VERSION};
pub use train::{run_epochs, train_model, train_model_with_history, EpochRecord, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    #[serde(alias = "gin")]
    GIN,
    #[serde(alias = "gcn")]
    GCN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub arch: Arch,
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::GIN,
            num_layers: 3,
            hidden_dim: 128,
            num_classes: 2,
            feature_dim: 7,
            seed: 41,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("num_layers and hidden_dim must be at least 1".into()));
        }
        if self.num_classes < 2 || self.feature_dim == 0 {
            return Err(Error::Config("need >= 2 classes and a nonzero feature dim".into()));
        }
        Ok(())
    }
}

/// Parameters of one message-passing layer.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    /// `h' = ReLU(MLP((1 + eps)·h_v + Σ_{u∈N(v)} h_u))` with
    /// `MLP(x) = ReLU(x·W1 + b1)·W2 + b2`.
    Gin {
        w1: Tensor,
        b1: Tensor,
        w2: Tensor,
        b2: Tensor,
        eps: Tensor,
    },
    /// `h' = ReLU(Â·h·W + b)` with `Â = D̂^{-1/2}(A + I)D̂^{-1/2}`.
    Gcn { w: Tensor, b: Tensor },
}

impl Layer {
    fn params(&self) -> Vec<&Tensor> {
        match self {
            Layer::Gin { w1, b1, w2, b2, eps } => vec![w1, b1, w2, b2, eps],
            Layer::Gcn { w, b } => vec![w, b],
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Layer::Gin { w1, b1, w2, b2, eps } => vec![w1, b1, w2, b2, eps],
            Layer::Gcn { w, b } => vec![w, b],
        }
    }
}

/// Trainable state: encoder layers plus the classifier `W_cls [hidden × C]`, `b [1 × C]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub layers: Vec<Layer>,
    pub cls_w: Tensor,
    pub cls_b: Tensor,
}

fn glorot(rng: &mut rng::Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-a..a)).collect();
    Tensor::new(fan_in, fan_out, data).expect("shape")
}

impl ModelState {
    /// Seeded initialisation: weights uniform in `±sqrt(6/(fan_in+fan_out))`,
    /// biases zero, GIN `eps` zero.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(config.seed, "init");
        let h = config.hidden_dim;
        let layers = (0..config.num_layers)
            .map(|i| {
                let fan_in = if i == 0 { config.feature_dim } else { h };
                match config.arch {
                    Arch::GIN => Layer::Gin {
                        w1: glorot(&mut rng, fan_in, h),
                        b1: Tensor::zeros(1, h),
                        w2: glorot(&mut rng, h, h),
                        b2: Tensor::zeros(1, h),
                        eps: Tensor::scalar(0.0),
                    },
                    Arch::GCN => Layer::Gcn {
                        w: glorot(&mut rng, fan_in, h),
                        b: Tensor::zeros(1, h),
                    },
                }
            })
            .collect();
        let cls_w = glorot(&mut rng, h, config.num_classes);
        Ok(ModelState {
            config: config.clone(),
            layers,
            cls_w,
            cls_b: Tensor::zeros(1, config.num_classes),
        })
    }

    /// Flat parameter list: each layer's tensors in declaration order, then `cls_w`, `cls_b`.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.layers.iter().flat_map(Layer::params).collect();
        out.push(&self.cls_w);
        out.push(&self.cls_b);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.layers.iter_mut().flat_map(Layer::params_mut).collect();
        out.push(&mut self.cls_w);
        out.push(&mut self.cls_b);
        out
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    /// Column `c` of the classifier weights.
    pub fn class_weights(&self, c: usize) -> Result<Vec<f64>> {
        if c >= self.num_classes() {
            return Err(Error::Index {
                op: "class_weights",
                index: c,
                bound: self.num_classes(),
            });
        }
        Ok((0..self.cls_w.rows()).map(|k| self.cls_w.get(k, c)).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_shapes_and_determinism() {
        let cfg = ModelConfig {
            hidden_dim: 8,
            feature_dim: 3,
            ..Default::default()
        };
        let a = ModelState::init(&cfg).unwrap();
        let b = ModelState::init(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params().len(), 3 * 5 + 2);
        assert_eq!(a.cls_w.shape(), &[8, 2]);
        let bound = (6.0f64 / 11.0).sqrt();
        if let Layer::Gin { w1, eps, .. } = &a.layers[0] {
            assert_eq!(w1.shape(), &[3, 8]);
            assert!(w1.data().iter().all(|v| v.abs() <= bound));
            assert_eq!(eps.item(), 0.0);
        } else {
            panic!("expected GIN layer");
        }
    }

    #[test]
    fn rejects_degenerate_config() {
        let cfg = ModelConfig {
            num_layers: 0,
            ..Default::default()
        };
        assert!(ModelState::init(&cfg).is_err());
    }
}
