//! Conditional generator/discriminator MLPs and their parameter stores.

use std::ops::Deref;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Fully connected stack: ReLU on hidden layers, sigmoid on the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.output_dim));
        for d in all {
            if d == 0 {
                return Err(Error::InvalidDims(format!("zero-width layer in {self:?}")));
            }
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Immutable, cheaply clonable flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(Arc<[f64]>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values.into())
    }

    pub fn shared(&self) -> Arc<[f64]> {
        self.0.clone()
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

/// Named, ordered trainable tensors of one network.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore {
    entries: Vec<(String, Tensor)>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for t in self.tensors() {
            out.extend_from_slice(&t.data());
        }
        out
    }

    /// Deep copy of the current values, detached from any graph.
    pub fn snapshot(&self) -> ParamVector {
        ParamVector::new(self.flatten())
    }

    pub fn load_flat(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.numel() {
            return Err(Error::InvalidDims(format!(
                "flat vector of {} values for {} parameters",
                values.len(),
                self.numel()
            )));
        }
        let mut off = 0;
        for t in self.tensors() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Concatenated gradients; absent buffers read as zeros.
    pub fn flat_grad(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for t in self.tensors() {
            match t.grad_ref().as_ref() {
                Some(g) => out.extend_from_slice(g),
                None => out.extend(std::iter::repeat_n(0.0, t.numel())),
            }
        }
        out
    }

    pub fn zero_grad(&self) {
        self.tensors().for_each(Tensor::zero_grad);
    }

    pub fn set_requires_grad(&self, on: bool) {
        self.tensors().for_each(|t| t.set_requires_grad(on));
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    params: ParameterStore,
}

impl Mlp {
    /// Weights ~ N(0, init_std^2), biases zero. Weight tensors are stored
    /// `in x out` so a layer computes `x * W + b`.
    pub fn new(spec: MlpSpec, prefix: &str, init_std: f64, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let mut params = ParameterStore::new();
        for (i, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let w = (0..fan_in * fan_out).map(|_| rng.normal(0.0, init_std)).collect();
            params.push(format!("{prefix}.{i}.weight"), Tensor::param(fan_in, fan_out, w)?)?;
            params.push(
                format!("{prefix}.{i}.bias"),
                Tensor::param(1, fan_out, vec![0.0; fan_out])?,
            )?;
        }
        Ok(Self { spec, params })
    }

    fn from_params(spec: MlpSpec, params: ParameterStore) -> Self {
        Self { spec, params }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterStore {
        &self.params
    }

    /// Pre-sigmoid output of the last layer.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::InvalidDims(format!(
                "input width {} for an MLP expecting {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        let layers: Vec<&Tensor> = self.params.tensors().collect();
        let n_layers = layers.len() / 2;
        let mut h = x.clone();
        for i in 0..n_layers {
            h = h.matmul(layers[2 * i])?.add(layers[2 * i + 1])?;
            if i + 1 < n_layers {
                h = h.relu();
            }
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.logits(x)?.sigmoid())
    }

    /// Fresh tensors holding a copy of the current values.
    pub fn deep_clone(&self) -> Self {
        let mut params = ParameterStore::new();
        for (name, t) in self.params.iter() {
            let copy = Tensor::param(t.rows(), t.cols(), t.to_vec()).expect("same shape");
            copy.set_requires_grad(t.requires_grad());
            params.push(name, copy).expect("names already unique");
        }
        Self::from_params(self.spec.clone(), params)
    }
}

/// Dimensions of a conditional GAN. `classes` is the conditional capacity K,
/// fixed up front; classes outside the current task see a zero input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanSpec {
    pub z_dim: usize,
    pub data_dim: usize,
    pub hidden: usize,
    pub classes: usize,
    pub init_std: f64,
}

impl GanSpec {
    pub fn mnist() -> Self {
        Self {
            z_dim: 64,
            data_dim: 784,
            hidden: 128,
            classes: 10,
            init_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.z_dim == 0 || self.data_dim == 0 || self.hidden == 0 || self.classes == 0 {
            return Err(Error::InvalidDims(format!("{self:?}")));
        }
        if !(self.init_std >= 0.0) {
            return Err(Error::InvalidDims(format!("init_std {}", self.init_std)));
        }
        Ok(())
    }

    pub fn generator_spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.z_dim + self.classes,
            hidden_dims: vec![self.hidden],
            output_dim: self.data_dim,
        }
    }

    pub fn discriminator_spec(&self) -> MlpSpec {
        MlpSpec {
            input_dim: self.data_dim + self.classes,
            hidden_dims: vec![self.hidden],
            output_dim: 1,
        }
    }

    pub fn generator_param_count(&self) -> usize {
        self.generator_spec().param_count()
    }

    pub fn discriminator_param_count(&self) -> usize {
        self.discriminator_spec().param_count()
    }
}

#[derive(Clone, Debug)]
pub struct CondGan {
    spec: GanSpec,
    generator: Mlp,
    discriminator: Mlp,
}

impl CondGan {
    pub fn init(spec: GanSpec, rng: &mut RngStream) -> Result<Self> {
        spec.validate()?;
        let generator = Mlp::new(spec.generator_spec(), "g", spec.init_std, rng)?;
        let discriminator = Mlp::new(spec.discriminator_spec(), "d", spec.init_std, rng)?;
        Ok(Self {
            spec,
            generator,
            discriminator,
        })
    }

    /// Builds a model from flat generator and discriminator vectors.
    pub fn from_flat(spec: GanSpec, generator: &[f64], discriminator: &[f64]) -> Result<Self> {
        let gan = Self::init(
            GanSpec {
                init_std: 0.0,
                ..spec
            },
            &mut RngStream::new(0),
        )?;
        gan.generator.params.load_flat(generator)?;
        gan.discriminator.params.load_flat(discriminator)?;
        Ok(Self { spec, ..gan })
    }

    pub fn spec(&self) -> &GanSpec {
        &self.spec
    }

    pub fn generator(&self) -> &Mlp {
        &self.generator
    }

    pub fn discriminator(&self) -> &Mlp {
        &self.discriminator
    }

    pub fn generator_params(&self) -> &ParameterStore {
        self.generator.params()
    }

    pub fn discriminator_params(&self) -> &ParameterStore {
        self.discriminator.params()
    }

    pub fn deep_clone(&self) -> Self {
        Self {
            spec: self.spec,
            generator: self.generator.deep_clone(),
            discriminator: self.discriminator.deep_clone(),
        }
    }

    fn check_batch(&self, what: &str, a: &Tensor, width: usize, y: &Tensor) -> Result<()> {
        if a.cols() != width || y.cols() != self.spec.classes || a.rows() != y.rows() {
            return Err(Error::InvalidDims(format!(
                "{what}: got {} with labels {}, expected width {width} and {} label columns",
                a.shape(),
                y.shape(),
                self.spec.classes
            )));
        }
        Ok(())
    }

    /// `G(z, y)`: samples in `(0, 1)^data_dim`, one row per noise row.
    pub fn gen_forward(&self, z: &Tensor, y: &Tensor) -> Result<Tensor> {
        self.check_batch("generator", z, self.spec.z_dim, y)?;
        self.generator.forward(&z.concat_cols(y)?)
    }

    /// `D(x, y)`: probability that each row of `x` is real, shape `B x 1`.
    pub fn disc_forward(&self, x: &Tensor, y: &Tensor) -> Result<Tensor> {
        self.check_batch("discriminator", x, self.spec.data_dim, y)?;
        self.discriminator.forward(&x.concat_cols(y)?)
    }

    /// Draws `rows` noise vectors from the prior, Uniform(-1, 1).
    pub fn sample_noise(&self, rows: usize, rng: &mut RngStream) -> Tensor {
        sample_noise(rows, self.spec.z_dim, rng)
    }

    /// Generator first-layer weights fed by the conditional input of `class`.
    pub fn conditional_input_weights(&self, class: usize) -> Result<Vec<f64>> {
        if class >= self.spec.classes {
            return Err(Error::Capacity {
                class,
                capacity: self.spec.classes,
            });
        }
        let w = self
            .generator_params()
            .tensors()
            .next()
            .expect("generator has a first layer");
        let row = self.spec.z_dim + class;
        let cols = w.cols();
        Ok(w.data()[row * cols..(row + 1) * cols].to_vec())
    }
}

pub fn sample_noise(rows: usize, z_dim: usize, rng: &mut RngStream) -> Tensor {
    let data = (0..rows * z_dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Tensor::from_vec(rows, z_dim, data).expect("shape matches")
}

pub fn one_hot(class: usize, capacity: usize) -> Result<Tensor> {
    one_hot_batch(&[class], capacity)
}

/// One one-hot row per label.
pub fn one_hot_batch(classes: &[usize], capacity: usize) -> Result<Tensor> {
    let mut data = vec![0.0; classes.len() * capacity];
    for (r, &c) in classes.iter().enumerate() {
        if c >= capacity {
            return Err(Error::Capacity { class: c, capacity });
        }
        data[r * capacity + c] = 1.0;
    }
    Ok(Tensor::from_vec(classes.len(), capacity, data)?)
}
