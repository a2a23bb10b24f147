use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

pub const DNET_MAGIC: &[u8; 4] = b"DNET";
pub const DNET_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// out x in
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    /// out x out, applied to the previous time step's output.
    pub recurrent: Option<Array2<f64>>,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Array2::zeros(self.weight.raw_dim()),
            bias: Array1::zeros(self.bias.raw_dim()),
            activation: self.activation,
            recurrent: self.recurrent.as_ref().map(|u| Array2::zeros(u.raw_dim())),
        }
    }
}

/// Architecture description: hidden tanh layers (optionally recurrent) and a
/// linear output layer over `n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub feature_dim: usize,
    /// Frames of context on each side of the center frame (0 in recurrent mode).
    pub context: usize,
    pub hidden: Vec<usize>,
    pub recurrent: bool,
    pub n_classes: usize,
    pub label_delay: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            feature_dim: 64,
            context: 5,
            hidden: vec![64],
            recurrent: false,
            n_classes: 40,
            label_delay: 3,
        }
    }
}

impl ArchConfig {
    pub fn input_dim(&self) -> usize {
        self.feature_dim * (2 * self.context + 1)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.feature_dim == 0 || self.n_classes == 0 {
            return Err(NetError::InvalidConfig(
                "feature_dim and n_classes must be positive".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(NetError::InvalidConfig("hidden layers must be non-empty".into()));
        }
        if self.n_classes > u16::MAX as usize {
            return Err(NetError::InvalidConfig("too many classes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub feature_dim: usize,
    pub context: usize,
    pub label_delay: usize,
    pub layers: Vec<Layer>,
}

impl NetParams {
    /// Glorot-uniform input weights, zero biases, recurrent weights uniform
    /// in `±0.5 / sqrt(units)`.
    pub fn init(arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Result<Self, NetError> {
        arch.validate()?;
        let mut layers = Vec::with_capacity(arch.hidden.len() + 1);
        let mut in_dim = arch.input_dim();
        let dims = arch.hidden.iter().copied().chain(std::iter::once(arch.n_classes));
        let n_hidden = arch.hidden.len();
        for (i, out_dim) in dims.enumerate() {
            let hidden = i < n_hidden;
            let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
            let weight = Array2::from_shape_simple_fn((out_dim, in_dim), || rng.random_range(-limit..limit));
            let recurrent = (hidden && arch.recurrent).then(|| {
                let r = 0.5 / (out_dim as f64).sqrt();
                Array2::from_shape_simple_fn((out_dim, out_dim), || rng.random_range(-r..r))
            });
            layers.push(Layer {
                weight,
                bias: Array1::zeros(out_dim),
                activation: if hidden { Activation::Tanh } else { Activation::Identity },
                recurrent,
            });
            in_dim = out_dim;
        }
        Ok(Self {
            feature_dim: arch.feature_dim,
            context: arch.context,
            label_delay: arch.label_delay,
            layers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.feature_dim * (2 * self.context + 1)
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, Layer::out_dim)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            feature_dim: self.feature_dim,
            context: self.context,
            label_delay: self.label_delay,
            layers: self.layers.iter().map(Layer::zeros_like).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.layers.is_empty() {
            return Err(NetError::Dimension("network has no layers".into()));
        }
        let mut in_dim = self.input_dim();
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim() != in_dim || l.bias.len() != l.out_dim() {
                return Err(NetError::Dimension(format!(
                    "layer {i}: weight {:?}, bias {}, expected input {in_dim}",
                    l.weight.dim(),
                    l.bias.len()
                )));
            }
            if let Some(u) = &l.recurrent {
                if u.dim() != (l.out_dim(), l.out_dim()) {
                    return Err(NetError::Dimension(format!(
                        "layer {i}: recurrent matrix {:?}",
                        u.dim()
                    )));
                }
            }
            in_dim = l.out_dim();
        }
        if !self.all_finite() {
            return Err(NetError::BadModel("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Parameter arrays in declaration order: per layer weight, recurrent, bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.weight.as_slice().expect("standard layout"));
            if let Some(u) = &l.recurrent {
                out.push(u.as_slice().expect("standard layout"));
            }
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.weight.as_slice_mut().expect("standard layout"));
            if let Some(u) = &mut l.recurrent {
                out.push(u.as_slice_mut().expect("standard layout"));
            }
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// `self += alpha * other`, element-wise.
    pub fn add_scaled(&mut self, other: &NetParams, alpha: f64) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= alpha);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Model file: magic "DNET", u16 version, architecture descriptor
    /// (u16 layers, u16 feature dim, u16 context, u16 label delay, then per
    /// layer u32 in, u32 out, u8 activation, u8 recurrent), then every
    /// parameter as f64 little-endian in declaration order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 10 * self.layers.len() + 8 * self.n_params());
        out.extend_from_slice(DNET_MAGIC);
        out.extend_from_slice(&DNET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u16).to_le_bytes());
        out.extend_from_slice(&(self.feature_dim as u16).to_le_bytes());
        out.extend_from_slice(&(self.context as u16).to_le_bytes());
        out.extend_from_slice(&(self.label_delay as u16).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim() as u32).to_le_bytes());
            out.push(l.activation.tag());
            out.push(l.recurrent.is_some() as u8);
        }
        for t in self.tensors() {
            for v in t {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let bad = |m: &str| NetError::BadModel(m.to_string());
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], NetError> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != DNET_MAGIC {
            return Err(bad("missing DNET magic"));
        }
        let u16_at = |b: &[u8]| u16::from_le_bytes([b[0], b[1]]) as usize;
        let version = u16_at(take(2)?);
        if version != DNET_VERSION as usize {
            return Err(NetError::BadModel(format!("unsupported version {version}")));
        }
        let n_layers = u16_at(take(2)?);
        let feature_dim = u16_at(take(2)?);
        let context = u16_at(take(2)?);
        let label_delay = u16_at(take(2)?);
        let mut shapes = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let d = take(10)?;
            let in_dim = u32::from_le_bytes(d[0..4].try_into().unwrap()) as usize;
            let out_dim = u32::from_le_bytes(d[4..8].try_into().unwrap()) as usize;
            let act = Activation::from_tag(d[8]).ok_or_else(|| bad("unknown activation tag"))?;
            shapes.push((in_dim, out_dim, act, d[9] != 0));
        }
        let mut read_f64s = |n: usize| -> Result<Vec<f64>, NetError> {
            Ok(take(8 * n)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let mut layers = Vec::with_capacity(n_layers);
        for (in_dim, out_dim, activation, rec) in shapes {
            let weight = Array2::from_shape_vec((out_dim, in_dim), read_f64s(in_dim * out_dim)?)
                .map_err(|e| NetError::BadModel(e.to_string()))?;
            let recurrent = if rec {
                Some(
                    Array2::from_shape_vec((out_dim, out_dim), read_f64s(out_dim * out_dim)?)
                        .map_err(|e| NetError::BadModel(e.to_string()))?,
                )
            } else {
                None
            };
            let bias = Array1::from_vec(read_f64s(out_dim)?);
            layers.push(Layer {
                weight,
                bias,
                activation,
                recurrent,
            });
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let params = Self {
            feature_dim,
            context,
            label_delay,
            layers,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, NetError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
