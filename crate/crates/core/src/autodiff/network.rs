use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AutodiffError;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    /// Global Lipschitz constant of the scalar activation.
    pub fn lipschitz(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "sigmoid" => Some(Activation::Sigmoid),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Shape of one affine layer followed by an activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

impl LayerShape {
    pub fn parameter_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

/// A stack of dense layers whose parameters live in one flat buffer.
///
/// Layer `l` occupies a contiguous block: its `outputs × inputs` weight
/// matrix in row-major order followed by its bias vector.
#[derive(Debug, Clone)]
pub struct DenseNetwork {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    generation: u64,
}

impl PartialEq for DenseNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

fn layout(layers: &[LayerShape]) -> Result<(Vec<usize>, usize), AutodiffError> {
    if layers.is_empty() {
        return Err(AutodiffError::EmptyNetwork);
    }
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].outputs != pair[1].inputs {
            return Err(AutodiffError::BrokenChain {
                layer: i + 1,
                expected: pair[1].inputs,
                found: pair[0].outputs,
            });
        }
    }
    let mut offsets = Vec::with_capacity(layers.len());
    let mut total = 0;
    for l in layers {
        offsets.push(total);
        total += l.parameter_count();
    }
    Ok((offsets, total))
}

impl DenseNetwork {
    /// Builds a network from layer shapes and an existing parameter buffer.
    pub fn from_parameters(
        layers: Vec<LayerShape>,
        params: Vec<f64>,
    ) -> Result<Self, AutodiffError> {
        let (offsets, total) = layout(&layers)?;
        if params.len() != total {
            return Err(AutodiffError::ParameterCount {
                expected: total,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(AutodiffError::NonFinite("parameters"));
        }
        Ok(Self {
            layers,
            offsets,
            params,
            generation: next_generation(),
        })
    }

    /// All-zero parameters.
    pub fn zeros(layers: Vec<LayerShape>) -> Result<Self, AutodiffError> {
        let (_, total) = layout(&layers)?;
        Self::from_parameters(layers, vec![0.0; total])
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(
        layers: Vec<LayerShape>,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        let mut net = Self::zeros(layers)?;
        for l in 0..net.layers.len() {
            let shape = net.layers[l];
            let limit = (6.0 / (shape.inputs + shape.outputs) as f64).sqrt();
            let off = net.offsets[l];
            for w in &mut net.params[off..off + shape.inputs * shape.outputs] {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(net)
    }

    /// Convenience constructor: `sizes = [in, h1, ..., out]`, `hidden` on every
    /// layer except the last, which uses `output`.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self, AutodiffError> {
        if sizes.len() < 2 {
            return Err(AutodiffError::EmptyNetwork);
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| LayerShape {
                inputs: sizes[i],
                outputs: sizes[i + 1],
                activation: if i + 1 == n { output } else { hidden },
            })
            .collect();
        Self::glorot(layers, rng)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the flat parameter buffer. Invalidates existing tapes.
    pub fn parameters_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.params
    }

    pub fn weights(&self, layer: usize) -> ArrayView2<'_, f64> {
        let s = self.layers[layer];
        let off = self.offsets[layer];
        ArrayView2::from_shape((s.outputs, s.inputs), &self.params[off..off + s.outputs * s.inputs])
            .expect("layout checked at construction")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        let s = self.layers[layer];
        let off = self.offsets[layer] + s.outputs * s.inputs;
        ArrayView1::from(&self.params[off..off + s.outputs])
    }

    /// Mutable weight matrix of one layer. Invalidates existing tapes.
    pub fn weights_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        self.generation = next_generation();
        let s = self.layers[layer];
        let off = self.offsets[layer];
        ArrayViewMut2::from_shape(
            (s.outputs, s.inputs),
            &mut self.params[off..off + s.outputs * s.inputs],
        )
        .expect("layout checked at construction")
    }

    /// Mutable bias of one layer. Invalidates existing tapes.
    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        self.generation = next_generation();
        let s = self.layers[layer];
        let off = self.offsets[layer] + s.outputs * s.inputs;
        &mut self.params[off..off + s.outputs]
    }

    fn check_input(&self, x: &ArrayView2<'_, f64>) -> Result<(), AutodiffError> {
        if x.ncols() != self.input_dim() {
            return Err(AutodiffError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFiniteInput);
        }
        Ok(())
    }

    fn layer_forward(&self, l: usize, a: &ArrayView2<'_, f64>) -> Array2<f64> {
        let shape = self.layers[l];
        let mut z = a.dot(&self.weights(l).t());
        z += &self.bias(l);
        if shape.activation != Activation::Identity {
            z.mapv_inplace(|v| shape.activation.apply(v));
        }
        z
    }

    /// Forward pass over a batch (`rows = examples`) without recording.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, AutodiffError> {
        self.check_input(&x)?;
        let mut a = self.layer_forward(0, &x);
        for l in 1..self.layers.len() {
            a = self.layer_forward(l, &a.view());
        }
        Ok(a)
    }

    /// Forward pass on a single example.
    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>, AutodiffError> {
        Ok(self.predict(row(x))?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch, recording the activations needed by
    /// [`DenseNetwork::backward`].
    pub fn forward(
        &self,
        x: ArrayView2<'_, f64>,
    ) -> Result<(Array2<f64>, GradientTape), AutodiffError> {
        self.check_input(&x)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_owned());
        for l in 0..self.layers.len() {
            let next = self.layer_forward(l, &activations[l].view());
            activations.push(next);
        }
        let output = activations[self.layers.len()].clone();
        Ok((
            output,
            GradientTape {
                generation: self.generation,
                activations,
            },
        ))
    }

    /// Reverse pass: gradients of `Σ seed ∘ output` with respect to every
    /// parameter (summed over the batch in row order) and every input.
    pub fn backward(
        &self,
        tape: &GradientTape,
        seed: ArrayView2<'_, f64>,
    ) -> Result<Gradients, AutodiffError> {
        if tape.generation != self.generation || tape.activations.len() != self.layers.len() + 1 {
            return Err(AutodiffError::StaleTape);
        }
        let out = &tape.activations[self.layers.len()];
        if seed.dim() != out.dim() {
            return Err(AutodiffError::DimensionMismatch {
                expected: out.ncols(),
                found: seed.ncols(),
            });
        }
        let mut params = vec![0.0; self.params.len()];
        let mut upstream = seed.to_owned();
        for l in (0..self.layers.len()).rev() {
            let shape = self.layers[l];
            let a_out = &tape.activations[l + 1];
            let a_in = &tape.activations[l];
            if shape.activation != Activation::Identity {
                upstream.zip_mut_with(a_out, |d, &a| *d *= shape.activation.derivative_from_output(a));
            }
            let delta = upstream;
            let off = self.offsets[l];
            let (w_grad, rest) = params[off..off + shape.parameter_count()]
                .split_at_mut(shape.outputs * shape.inputs);
            let mut w_grad = ArrayViewMut2::from_shape((shape.outputs, shape.inputs), w_grad)
                .expect("layout checked at construction");
            general_mat_mul(1.0, &delta.t(), a_in, 0.0, &mut w_grad);
            for (b, col) in rest.iter_mut().zip(delta.axis_iter(Axis(1))) {
                *b = col.iter().sum();
            }
            upstream = delta.dot(&self.weights(l));
        }
        Ok(Gradients {
            params,
            input: upstream,
        })
    }
}

/// Record of one forward pass.
#[derive(Debug, Clone)]
pub struct GradientTape {
    generation: u64,
    activations: Vec<Array2<f64>>,
}

impl GradientTape {
    pub fn output(&self) -> &Array2<f64> {
        &self.activations[self.activations.len() - 1]
    }
}

/// Gradients in the network's flat parameter layout plus the input gradient.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|g| g.is_finite()) && self.input.iter().all(|g| g.is_finite())
    }
}

/// Views a slice as a one-row batch.
pub(crate) fn row(x: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, x.len()), x).expect("row vector")
}
