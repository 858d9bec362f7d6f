use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Float, NeuralError};

/// One affine layer, `y = x·weight + bias` with `weight` shaped `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Float")]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Float> Dense<T> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    fn uniform(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let mut draw = || T::from_f64(rng.random_range(-bound..bound)).unwrap();
        Self {
            weight: Array2::from_shape_simple_fn((input, output), &mut draw),
            bias: Array1::from_shape_simple_fn(output, &mut draw),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.weight.iter().chain(self.bias.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.weight.iter_mut().chain(self.bias.iter_mut())
    }

    fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Fully connected ReLU network with a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Float")]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

/// Parameter gradients, laid out like [`Mlp::layers`].
pub type Gradients<T> = Vec<Dense<T>>;

/// Activations kept from a forward pass for [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Layer inputs: the features, then every post-ReLU hidden activation.
    inputs: Vec<Array2<T>>,
}

impl<T: Float> Mlp<T> {
    /// `hidden` ReLU layers of size `width`. Hidden layers draw weights and
    /// biases from `U(±1/√fan_in)`; the output layer starts at zero.
    pub fn new(input: usize, width: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden + 1);
        let mut fan_in = input;
        for _ in 0..hidden {
            layers.push(Dense::uniform(fan_in, width, rng));
            fan_in = width;
        }
        layers.push(Dense::zeros(fan_in, output));
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        self.layers.iter().map(|l| Dense::zeros(l.weight.nrows(), l.weight.ncols())).collect()
    }

    pub fn forward(&self, features: &Array2<T>) -> Result<Array2<T>, NeuralError> {
        Ok(self.forward_cached(features)?.0)
    }

    pub fn forward_cached(&self, features: &Array2<T>) -> Result<(Array2<T>, ForwardCache<T>), NeuralError> {
        if features.ncols() != self.input_width() {
            return Err(NeuralError::FeatureWidth {
                expected: self.input_width(),
                found: features.ncols(),
            });
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(NeuralError::NonFiniteInput);
        }
        if !self.layers.iter().all(Dense::is_finite) {
            return Err(NeuralError::NonFiniteParameters);
        }
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut x = features.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.weight);
            z += &layer.bias;
            if k < last {
                z.mapv_inplace(|v| v.max(T::zero()));
            }
            inputs.push(x);
            x = z;
        }
        Ok((x, ForwardCache { inputs }))
    }

    /// Reverse-mode gradients of `Σ upstream ⊙ output` with respect to
    /// every parameter.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &Array2<T>) -> Gradients<T> {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = upstream.clone();
        for k in (0..self.layers.len()).rev() {
            let input = &cache.inputs[k];
            grads.push(Dense {
                weight: input.t().dot(&g),
                bias: g.sum_axis(Axis(0)),
            });
            if k > 0 {
                let mut prev = g.dot(&self.layers[k].weight.t());
                Zip::from(&mut prev).and(input).for_each(|p, &a| {
                    if a <= T::zero() {
                        *p = T::zero();
                    }
                });
                g = prev;
            }
        }
        grads.reverse();
        grads
    }
}
