use std::fs;
use std::path::Path;

use autodiff::functional::l2_squared;
use autodiff::{with_no_grad, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"DCRNN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinalActivation {
    None,
    LeakyRelu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    /// input, hidden..., output
    pub layer_sizes: Vec<usize>,
    pub activation_slope: f64,
    pub final_activation: FinalActivation,
}

impl MlpConfig {
    /// LeakyReLU(0.2) hidden layers and a linear output layer.
    pub fn new(layer_sizes: Vec<usize>) -> Self {
        MlpConfig {
            layer_sizes,
            activation_slope: 0.2,
            final_activation: FinalActivation::None,
        }
    }

    /// `input → hidden → output`, or a single affine map when `hidden` is empty.
    pub fn with_hidden(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        MlpConfig::new(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output sizes, got {:?}",
                self.layer_sizes
            )));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {:?}",
                self.layer_sizes
            )));
        }
        if !(self.activation_slope > 0.0 && self.activation_slope < 1.0) {
            return Err(Error::Config(format!(
                "activation slope must lie in (0,1), got {}",
                self.activation_slope
            )));
        }
        Ok(())
    }
}

/// Fully connected network. Layer `i` holds a `sizes[i+1] × sizes[i]` weight and a bias vector.
#[derive(Debug)]
pub struct Mlp {
    config: MlpConfig,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
}

/// Cloning copies the parameters into fresh leaves with empty gradient accumulators.
impl Clone for Mlp {
    fn clone(&self) -> Self {
        Mlp {
            config: self.config.clone(),
            weights: self.weights.iter().map(Tensor::requires_grad_leaf).collect(),
            biases: self.biases.iter().map(Tensor::requires_grad_leaf).collect(),
        }
    }
}

impl Mlp {
    /// Xavier-uniform weights, zero biases.
    pub fn init(config: MlpConfig, seed: u64) -> Result<Mlp> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in config.layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(Tensor::param(&[fan_out, fan_in], w)?);
            biases.push(Tensor::param(&[fan_out], vec![0.0; fan_out])?);
        }
        Ok(Mlp {
            config,
            weights,
            biases,
        })
    }

    /// Builds a network from explicit `(weight rows-major [out×in], bias [out])` layers.
    pub fn from_layers(config: MlpConfig, layers: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Mlp> {
        config.validate()?;
        if layers.len() != config.layer_sizes.len() - 1 {
            return Err(Error::Config(format!(
                "{} layers given for sizes {:?}",
                layers.len(),
                config.layer_sizes
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (pair, (w, b)) in config.layer_sizes.windows(2).zip(layers) {
            weights.push(Tensor::param(&[pair[1], pair[0]], w)?);
            biases.push(Tensor::param(&[pair[1]], b)?);
        }
        Ok(Mlp {
            config,
            weights,
            biases,
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.config.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.config.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weight(&self, layer: usize) -> &Tensor {
        &self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &Tensor {
        &self.biases[layer]
    }

    /// `[B×in] → [B×out]`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::Invalid(format!(
                "MLP expects [B×{}] input, got {:?}",
                self.input_dim(),
                x.shape()
            )));
        }
        let batch = x.shape()[0];
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let bias = b.reshape(&[1, b.numel()])?.repeat_axis(0, batch)?;
            h = h.matmul(&w.transpose()?)?.add(&bias)?;
            let activate = i < last || self.config.final_activation == FinalActivation::LeakyRelu;
            if activate {
                h = h.leaky_relu(self.config.activation_slope)?;
            }
        }
        Ok(h)
    }

    /// Forward pass without recording a graph.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        with_no_grad(|| self.forward(x))
    }

    /// Parameters in layer order: w0, b0, w1, b1, ...
    pub fn params(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn zero_grad(&self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    /// Total number of scalar parameters.
    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    /// Order-sensitive hash of the parameter bits; constant iff parameters are untouched.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in self.params() {
            for v in p.data() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Serializes to the flat `DCRNN1` checkpoint layout (all integers and floats little-endian).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.num_params() * 8 + self.weights.len() * 16);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.weights.len() as u64).to_le_bytes());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(&(w.shape()[0] as u64).to_le_bytes());
            out.extend_from_slice(&(w.shape()[1] as u64).to_le_bytes());
            for v in w.data().iter().chain(b.data()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a `DCRNN1` checkpoint. Activation settings are not stored and must be supplied.
    pub fn from_bytes(
        bytes: &[u8],
        activation_slope: f64,
        final_activation: FinalActivation,
    ) -> std::result::Result<Mlp, String> {
        let mut cursor = bytes;
        let mut take = |n: usize| -> std::result::Result<&[u8], String> {
            if cursor.len() < n {
                return Err("truncated".into());
            }
            let (head, tail) = cursor.split_at(n);
            cursor = tail;
            Ok(head)
        };
        if take(6)? != MAGIC {
            return Err("bad magic".into());
        }
        let read_u64 = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap()) as usize;
        let count = read_u64(take(8)?);
        let mut sizes = Vec::new();
        let mut layers = Vec::new();
        for i in 0..count {
            let rows = read_u64(take(8)?);
            let cols = read_u64(take(8)?);
            if i == 0 {
                sizes.push(cols);
            } else if sizes[i] != cols {
                return Err(format!("layer {i} input {cols} does not match previous output {}", sizes[i]));
            }
            sizes.push(rows);
            let n = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_add(rows))
                .ok_or("layer too large")?;
            let raw = take(n.checked_mul(8).ok_or("layer too large")?)?;
            let vals: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let (w, b) = vals.split_at(rows * cols);
            layers.push((w.to_vec(), b.to_vec()));
        }
        if !cursor.is_empty() {
            return Err("trailing bytes".into());
        }
        let config = MlpConfig {
            layer_sizes: sizes,
            activation_slope,
            final_activation,
        };
        Mlp::from_layers(config, layers).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, activation_slope: f64, final_activation: FinalActivation) -> Result<Mlp> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Mlp::from_bytes(&bytes, activation_slope, final_activation).map_err(|msg| Error::Checkpoint {
            path: path.to_path_buf(),
            msg,
        })
    }
}

/// `coefficient · Σ ‖θ‖²` over every weight and bias.
pub fn weight_decay_term(mlp: &Mlp, coefficient: f64) -> Result<Tensor> {
    let mut total = Tensor::scalar(0.0);
    for p in mlp.params() {
        total = total.add(&l2_squared(p))?;
    }
    Ok(total.scale(coefficient))
}
