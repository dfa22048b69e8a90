//! Small dense networks with tanh hidden layers, hand-written reverse-mode
//! gradients, and Adam.
//!
//! Parameters live in one flat vector, layer by layer: the `in x out` weight
//! matrix row-major, then the `out` biases. The same layout is used for
//! gradients, optimizer moments and on-disk snapshots.

use std::io::{self, Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use thiserror::Error;

pub const HIDDEN_UNITS: usize = 64;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {got} features, network expects {expected}")]
    InputSize { got: usize, expected: usize },
    #[error("gradient has {got} columns, network outputs {expected}")]
    GradientSize { got: usize, expected: usize },
    #[error("invalid snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to every layer; `activations[0]` is the batch itself.
    activations: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

impl Mlp {
    /// Network with the given layer widths, weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let mut params = Vec::with_capacity(Self::param_count_for(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self { sizes: sizes.to_vec(), params }
    }

    /// `input -> 64 -> 64 -> output`.
    pub fn two_hidden<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Self::new(&[input, HIDDEN_UNITS, HIDDEN_UNITS, output], rng)
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        Self { sizes: sizes.to_vec(), params: vec![0.0; Self::param_count_for(sizes)] }
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        if sizes.len() < 2 || sizes.contains(&0) || params.len() != Self::param_count_for(sizes) {
            return Err(NnError::Snapshot(format!(
                "{} parameters do not fit layer sizes {sizes:?}",
                params.len()
            )));
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    fn param_count_for(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Multiplies the last layer's weights and biases by `factor`.
    pub fn scale_output_layer(&mut self, factor: f64) {
        let n = self.sizes.len();
        let last = self.sizes[n - 2] * self.sizes[n - 1] + self.sizes[n - 1];
        let len = self.params.len();
        self.params[len - last..].iter_mut().for_each(|p| *p *= factor);
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.sizes
            .windows(2)
            .map(|w| {
                let o = off;
                off += w[0] * w[1] + w[1];
                o
            })
            .collect()
    }

    fn layer(&self, l: usize, offset: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((i, o), &self.params[offset..offset + i * o]).unwrap();
        let b = ArrayView1::from(&self.params[offset + i * o..offset + i * o + o]);
        (w, b)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).unwrap();
        Ok(self.forward_batch(x)?.output.iter().copied().collect())
    }

    /// Forward pass over a `batch x input` matrix.
    pub fn forward_batch(&self, input: ArrayView2<'_, f64>) -> Result<ForwardCache, NnError> {
        if input.ncols() != self.input_size() {
            return Err(NnError::InputSize { got: input.ncols(), expected: self.input_size() });
        }
        let layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(layers);
        let mut current = input.to_owned();
        for (l, off) in self.layer_offsets().into_iter().enumerate() {
            let (w, b) = self.layer(l, off);
            let mut z = current.dot(&w);
            z += &b;
            if l + 1 < layers {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(std::mem::replace(&mut current, z));
        }
        Ok(ForwardCache { activations, output: current })
    }

    /// Gradient of `sum(output_gradient * output)` with respect to every
    /// parameter, summed over the batch.
    pub fn backward(&self, cache: &ForwardCache, output_gradient: ArrayView2<'_, f64>) -> Result<Vec<f64>, NnError> {
        if output_gradient.dim() != cache.output.dim() {
            return Err(NnError::GradientSize { got: output_gradient.ncols(), expected: self.output_size() });
        }
        let offsets = self.layer_offsets();
        let layers = offsets.len();
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = output_gradient.to_owned();
        for l in (0..layers).rev() {
            let (w, _) = self.layer(l, offsets[l]);
            let a = &cache.activations[l];
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let gw = a.t().dot(&delta);
            let gb: Array1<f64> = delta.sum_axis(Axis(0));
            let off = offsets[l];
            // logical (row-major) order regardless of the product's memory layout
            grads[off..off + i * o].iter_mut().zip(gw.iter()).for_each(|(g, v)| *g = *v);
            grads[off + i * o..off + i * o + o].iter_mut().zip(gb.iter()).for_each(|(g, v)| *g = *v);
            if l > 0 {
                let mut back = delta.dot(&w.t());
                // a is tanh output of the previous layer
                back.zip_mut_with(a, |d, &y| *d *= 1.0 - y * y);
                delta = back;
            }
        }
        Ok(grads)
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    const MAGIC: &'static [u8; 4] = b"FMLP";
    const VERSION: u32 = 1;

    /// Snapshot layout, all little-endian: magic `FMLP`, `u32` version (1),
    /// `u32` layer-size count `L`, `L` x `u32` sizes, `u64` parameter count,
    /// then the flat parameters as `f64`.
    pub fn write_snapshot<W: Write>(&self, out: &mut W) -> Result<(), NnError> {
        out.write_all(Self::MAGIC)?;
        out.write_all(&Self::VERSION.to_le_bytes())?;
        out.write_all(&(self.sizes.len() as u32).to_le_bytes())?;
        for &s in &self.sizes {
            out.write_all(&(s as u32).to_le_bytes())?;
        }
        out.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(input: &mut R) -> Result<Self, NnError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(NnError::Snapshot("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != Self::VERSION {
            return Err(NnError::Snapshot(format!("unsupported version {version}")));
        }
        input.read_exact(&mut u32buf)?;
        let n = u32::from_le_bytes(u32buf) as usize;
        if n > 64 {
            return Err(NnError::Snapshot(format!("{n} layers")));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut u32buf)?;
            sizes.push(u32::from_le_bytes(u32buf) as usize);
        }
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        if sizes.len() < 2 || count != Self::param_count_for(&sizes) {
            return Err(NnError::Snapshot(format!("parameter count {count} does not match sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            input.read_exact(&mut u64buf)?;
            params.push(f64::from_le_bytes(u64buf));
        }
        Self::from_params(&sizes, params)
    }
}

/// Adam optimizer state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update, descending along `gradients`.
    pub fn step(&mut self, params: &mut [f64], gradients: &[f64]) {
        assert_eq!(params.len(), gradients.len(), "parameter/gradient length mismatch");
        assert_eq!(params.len(), self.first_moment.len(), "optimizer state length mismatch");
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(gradients)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
