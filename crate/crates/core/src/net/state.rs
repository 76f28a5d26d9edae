use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng as _;

use super::ModelConfig;
use crate::rng::stream;
use crate::{Error, Mat, Result, Scalar};

/// Scale applied to the final head layer at initialization so that initial
/// embeddings start near zero.
pub const HEAD_OUTPUT_INIT_SCALE: f64 = 0.01;

/// Row-major `f32` parameter with its shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// View as a matrix; 1-D tensors become a single row.
    pub fn to_mat<T: Scalar>(&self) -> Mat<T> {
        let (r, c) = match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (1, self.data.len()),
        };
        Mat::from_vec(r, c, self.data.iter().map(|&v| T::from_f32(v)).collect())
            .expect("tensor shape matches data")
    }
}

/// How a parameter is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform on `±gain/√fan_in`.
    Uniform { fan_in: usize, gain: f64 },
    Zeros,
    Ones,
}

/// Layer family of a parameter; gradient checks sample per family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LayerClass {
    Embed,
    Cpe,
    Norm,
    Attention,
    FeedForward,
    Pool,
    Unpool,
    Head,
}

impl LayerClass {
    pub const ALL: [Self; 8] = [
        Self::Embed,
        Self::Cpe,
        Self::Norm,
        Self::Attention,
        Self::FeedForward,
        Self::Pool,
        Self::Unpool,
        Self::Head,
    ];

    pub fn of(name: &str) -> Self {
        if name.starts_with("embed.") {
            Self::Embed
        } else if name.starts_with("cpe.") {
            Self::Cpe
        } else if name.starts_with("head.") {
            Self::Head
        } else if name.contains(".norm") {
            Self::Norm
        } else if name.contains(".attn.") {
            Self::Attention
        } else if name.contains(".ffn.") {
            Self::FeedForward
        } else if name.contains(".unpool.") {
            Self::Unpool
        } else {
            Self::Pool
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: [usize; 2],
    pub init: Init,
}

fn linear(specs: &mut Vec<ParamSpec>, name: &str, fan_in: usize, fan_out: usize, gain: f64) {
    specs.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: [fan_in, fan_out],
        init: Init::Uniform { fan_in, gain },
    });
    specs.push(ParamSpec { name: format!("{name}.bias"), shape: [1, fan_out], init: Init::Zeros });
}

fn norm(specs: &mut Vec<ParamSpec>, name: &str, width: usize) {
    specs.push(ParamSpec { name: format!("{name}.gamma"), shape: [1, width], init: Init::Ones });
    specs.push(ParamSpec { name: format!("{name}.beta"), shape: [1, width], init: Init::Zeros });
}

fn transformer_layer(specs: &mut Vec<ParamSpec>, prefix: &str, w: usize, ratio: usize) {
    norm(specs, &format!("{prefix}.norm1"), w);
    for p in ["q", "k", "v", "out"] {
        linear(specs, &format!("{prefix}.attn.{p}"), w, w, 1.0);
    }
    norm(specs, &format!("{prefix}.norm2"), w);
    linear(specs, &format!("{prefix}.ffn.fc1"), w, ratio * w, 1.0);
    linear(specs, &format!("{prefix}.ffn.fc2"), ratio * w, w, 1.0);
}

/// Prefix of transformer layer `i` of a stage.
pub(crate) fn layer_prefix(stage: &str, i: usize) -> String {
    format!("{stage}.layer{i}")
}

/// Every parameter of the architecture, in execution order.
pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let w = &config.widths;
    let r = config.ffn_ratio;
    linear(&mut specs, "embed", config.in_dim, w[0], 1.0);
    linear(&mut specs, "cpe", w[0], w[0], 1.0);
    for k in 0..config.encoder_depth {
        for i in 0..config.layers_per_stage {
            transformer_layer(&mut specs, &layer_prefix(&format!("enc{k}"), i), w[k], r);
        }
        linear(&mut specs, &format!("enc{k}.pool"), w[k], w[k + 1], 1.0);
    }
    let deepest = config.encoder_depth;
    for i in 0..config.layers_per_stage {
        transformer_layer(&mut specs, &layer_prefix("bottleneck", i), w[deepest], r);
    }
    for k in (0..config.decoder_depth).rev() {
        linear(&mut specs, &format!("dec{k}.unpool.parent"), w[k + 1], w[k], 1.0);
        linear(&mut specs, &format!("dec{k}.unpool.skip"), w[k], w[k], 1.0);
        for i in 0..config.layers_per_stage {
            transformer_layer(&mut specs, &layer_prefix(&format!("dec{k}"), i), w[k], r);
        }
    }
    let dims = [w[0], config.head_hidden, config.head_hidden, config.head_hidden, config.out_dim];
    for l in 0..4 {
        let gain = if l == 3 { HEAD_OUTPUT_INIT_SCALE } else { 1.0 };
        linear(&mut specs, &format!("head.{l}"), dims[l], dims[l + 1], gain);
    }
    specs
}

/// Parameter count per layer family plus the total.
#[derive(Debug, Clone, PartialEq)]
pub struct Description {
    pub total: usize,
    pub by_class: Vec<(LayerClass, usize)>,
    pub tensors: usize,
}

pub fn describe(config: &ModelConfig) -> Description {
    let specs = param_specs(config);
    let mut by: BTreeMap<LayerClass, usize> = BTreeMap::new();
    for s in &specs {
        *by.entry(LayerClass::of(&s.name)).or_default() += s.shape[0] * s.shape[1];
    }
    Description {
        total: by.values().sum(),
        by_class: by.into_iter().collect(),
        tensors: specs.len(),
    }
}

/// Configuration plus named parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Tensor>,
}

impl ModelState {
    /// Seeded initialization.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, &[0x696e_6974]);
        let mut params = BTreeMap::new();
        for spec in param_specs(&config) {
            let mut t = Tensor::zeros(&spec.shape);
            match spec.init {
                Init::Zeros => {}
                Init::Ones => t.data.iter_mut().for_each(|v| *v = 1.0),
                Init::Uniform { fan_in, gain } => {
                    let bound = 1.0 / Float::sqrt(fan_in as f64);
                    for v in &mut t.data {
                        *v = (rng.random_range(-bound..bound) * gain) as f32;
                    }
                }
            }
            params.insert(spec.name, t);
        }
        Ok(Self { config, params })
    }

    /// Checks that the parameter set matches the configuration exactly and
    /// every value is finite.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let specs = param_specs(&self.config);
        if specs.len() != self.params.len() {
            return Err(Error::Config(format!(
                "{} parameters for an architecture with {}",
                self.params.len(),
                specs.len()
            )));
        }
        for s in &specs {
            let t = self.params.get(&s.name).ok_or_else(|| Error::MissingParam(s.name.clone()))?;
            let numel = s.shape[0] * s.shape[1];
            if t.numel() != numel || t.shape.iter().product::<usize>() != numel {
                return Err(Error::Shape(format!("parameter `{}` has shape {:?}", s.name, t.shape)));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(s.name.clone()));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.params.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    /// Parameters as matrices of `T`.
    pub fn store<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore(self.params.iter().map(|(k, v)| (k.clone(), v.to_mat())).collect())
    }
}

/// Named parameter matrices in the precision of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T>(pub BTreeMap<String, Mat<T>>);

impl<T: Scalar> ParamStore<T> {
    pub fn get(&self, name: &str) -> Result<&Mat<T>> {
        self.0.get(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Mat<T>> {
        self.0.get_mut(name).ok_or_else(|| Error::MissingParam(name.to_string()))
    }
}
