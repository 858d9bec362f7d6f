use serde::{Deserialize, Serialize};

use super::{Float, Gradients, Mlp, NeuralError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adaptive-moment optimizer state with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Float")]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    first: Gradients<T>,
    second: Gradients<T>,
}

impl<T: Float> Adam<T> {
    pub fn new(net: &Mlp<T>, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: net.zero_gradients(),
            second: net.zero_gradients(),
        }
    }

    /// Apply one update. A non-finite gradient leaves both `net` and the
    /// optimizer state untouched.
    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>) -> Result<(), NeuralError> {
        let shapes_match = grads.len() == net.layers.len()
            && grads
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.weight.dim() == l.weight.dim() && g.bias.dim() == l.bias.dim());
        if !shapes_match {
            return Err(NeuralError::ShapeMismatch);
        }
        if !grads.iter().all(|g| g.values().all(|v| v.is_finite())) {
            return Err(NeuralError::NonFiniteGradient);
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let step_size = c.learning_rate / (1.0 - c.beta1.powi(t));
        let second_scale = 1.0 / (1.0 - c.beta2.powi(t));
        let cast = |x: f64| T::from_f64(x).unwrap();
        let (b1, b2, eps) = (cast(c.beta1), cast(c.beta2), cast(c.epsilon));
        let (step_size, second_scale) = (cast(step_size), cast(second_scale));
        let one = T::one();
        for (((layer, g), m), v) in net.layers.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((p, &g), m), v) in layer.values_mut().zip(g.values()).zip(m.values_mut()).zip(v.values_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                *p -= step_size * *m / ((*v * second_scale).sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> Mlp<f64> {
        Mlp::new(3, 4, 1, 2, &mut ChaCha8Rng::seed_from_u64(2))
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut n = net();
        let before = n.clone();
        let mut opt = Adam::new(&n, AdamConfig::default());
        let g = n.zero_gradients();
        opt.step(&mut n, &g).unwrap();
        assert_eq!(n, before);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut n = net();
        let before = n.clone();
        let mut opt = Adam::new(&n, AdamConfig::default());
        let mut g = n.zero_gradients();
        for d in &mut g {
            d.values_mut().for_each(|v| *v = 3.0);
        }
        opt.step(&mut n, &g).unwrap();
        for (a, b) in n.layers.iter().zip(&before.layers) {
            for (x, y) in a.values().zip(b.values()) {
                // lr · g / (|g| + ε)
                assert!(((y - x) - 5e-4 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut n = net();
        let before = n.clone();
        let mut opt = Adam::new(&n, AdamConfig::default());
        let mut g = n.zero_gradients();
        g[0].bias[1] = f64::NAN;
        assert!(matches!(opt.step(&mut n, &g), Err(NeuralError::NonFiniteGradient)));
        assert_eq!(n, before);
        assert_eq!(opt.step, 0);
    }

    #[test]
    fn identical_runs_are_bit_identical() {
        let run = || {
            let mut n = net();
            let mut opt = Adam::new(&n, AdamConfig::default());
            for k in 0..5 {
                let mut g = n.zero_gradients();
                for d in &mut g {
                    d.values_mut().enumerate().for_each(|(i, v)| *v = ((i + k) as f64).sin());
                }
                opt.step(&mut n, &g).unwrap();
            }
            n
        };
        assert_eq!(run(), run());
    }
}
