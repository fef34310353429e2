use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math::{sigmoid, softplus};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    /// `softplus(sharpness * x) / sharpness`: a ReLU with its kink rounded over a width of
    /// about `1 / sharpness`, so the objective stays differentiable everywhere.
    Softplus { sharpness: f64 },
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Softplus { sharpness: 100.0 }
    }
}

// Past this |z| the softplus tails are flushed: z itself above, zero below. Both are off by
// less than 1e-16 relative (resp. 1e-16 / sharpness absolute), and the zeros keep hidden
// layers as sparse as a ReLU network's.
const SOFTPLUS_TAIL: f64 = 36.8;

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus { sharpness } => {
                let z = sharpness * x;
                if z > SOFTPLUS_TAIL {
                    x
                } else if z < -SOFTPLUS_TAIL {
                    0.0
                } else {
                    softplus(z) / sharpness
                }
            }
        }
    }

    /// Derivative at pre-activation `x`; the ReLU kink takes derivative zero.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => (x > 0.0) as u8 as f64,
            Activation::Softplus { sharpness } => {
                let z = sharpness * x;
                if z > SOFTPLUS_TAIL {
                    1.0
                } else if z < -SOFTPLUS_TAIL {
                    0.0
                } else {
                    sigmoid(z)
                }
            }
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Activation::Softplus { sharpness } if !(sharpness > 0.0 && sharpness.is_finite()) => {
                Err(Error::invalid("softplus sharpness must be positive"))
            }
            _ => Ok(()),
        }
    }
}

/// Fully connected network with all parameters in one flat buffer.
///
/// Layer `l` in `skips` receives the network input concatenated after the previous activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub skips: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub params: Vec<f64>,
    layers: Vec<Layer>,
}

/// Intermediates recorded by a forward pass.
#[derive(Clone, Debug, Default)]
pub struct MlpTape {
    // inputs[l] is the vector fed to layer l, pre[l] its pre-activation
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpTape {
    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

impl Mlp {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, skips: Vec<usize>) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|w| *w == 0) {
            return Err(Error::invalid("network layer widths must be positive"));
        }
        let n_layers = hidden.len() + 1;
        if skips.iter().any(|s| *s == 0 || *s >= n_layers) {
            return Err(Error::invalid("skip connection must target a layer after the first"));
        }
        let mut layers = Vec::with_capacity(n_layers);
        let mut offset = 0;
        let mut prev = input_dim;
        for l in 0..n_layers {
            let fan_in = prev + if skips.contains(&l) { input_dim } else { 0 };
            let fan_out = if l < hidden.len() { hidden[l] } else { output_dim };
            layers.push(Layer { fan_in, fan_out, weights: offset, bias: offset + fan_in * fan_out });
            offset += fan_in * fan_out + fan_out;
            prev = fan_out;
        }
        Ok(Self { input_dim, hidden, output_dim, skips, activation: Activation::default(), params: vec![0.0; offset], layers })
    }

    pub fn with_activation(mut self, activation: Activation) -> Result<Self> {
        activation.validate()?;
        self.activation = activation;
        Ok(self)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// He-uniform weights, zero biases. With `zero_last` the output layer starts at zero.
    pub fn init<R: Rng>(&mut self, rng: &mut R, zero_last: bool) {
        self.params.iter_mut().for_each(|p| *p = 0.0);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            if l == last && zero_last {
                continue;
            }
            let gain = if l == last { 1.0 } else { 6.0 };
            let bound = (gain / layer.fan_in as f64).sqrt();
            for w in &mut self.params[layer.weights..layer.bias] {
                *w = rng.gen_range(-bound..bound);
            }
        }
    }

    /// Output-layer bias, e.g. to shift an activation's starting point.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let last = self.layers[self.layers.len() - 1];
        &mut self.params[last.bias..last.bias + last.fan_out]
    }

    pub fn forward(&self, x: &[f64], mut tape: Option<&mut MlpTape>) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_dim);
        if let Some(t) = tape.as_deref_mut() {
            t.inputs.clear();
            t.pre.clear();
        }
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            if self.skips.contains(&l) {
                h.extend_from_slice(x);
            }
            let w = &self.params[layer.weights..layer.bias];
            let mut y = self.params[layer.bias..layer.bias + layer.fan_out].to_vec();
            for (k, xk) in h.iter().enumerate() {
                if *xk == 0.0 {
                    continue;
                }
                let row = &w[k * layer.fan_out..(k + 1) * layer.fan_out];
                for (yj, wj) in y.iter_mut().zip(row) {
                    *yj += xk * wj;
                }
            }
            let next = if l == last { y.clone() } else { y.iter().map(|v| self.activation.apply(*v)).collect() };
            if let Some(t) = tape.as_deref_mut() {
                t.inputs.push(std::mem::take(&mut h));
                t.pre.push(y);
            }
            h = next;
        }
        h
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient of the input.
    pub fn backward(&self, tape: &MlpTape, d_out: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        if tape.inputs.len() != self.layers.len() {
            return Err(Error::BackwardWithoutForward);
        }
        if grad.len() != self.params.len() || d_out.len() != self.output_dim {
            return Err(Error::Contract("gradient buffer shape mismatch".into()));
        }
        let last = self.layers.len() - 1;
        let mut d_input = vec![0.0; self.input_dim];
        let mut dy = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            if l != last {
                for (d, p) in dy.iter_mut().zip(&tape.pre[l]) {
                    *d *= self.activation.derivative(*p);
                }
            }
            let input = &tape.inputs[l];
            let w = &self.params[layer.weights..layer.bias];
            let mut dh = vec![0.0; layer.fan_in];
            {
                let (gw, gb) = grad[layer.weights..layer.bias + layer.fan_out].split_at_mut(layer.bias - layer.weights);
                for (g, d) in gb.iter_mut().zip(&dy) {
                    *g += d;
                }
                for k in 0..layer.fan_in {
                    let row = &w[k * layer.fan_out..(k + 1) * layer.fan_out];
                    let grow = &mut gw[k * layer.fan_out..(k + 1) * layer.fan_out];
                    let xk = input[k];
                    let mut acc = 0.0;
                    for j in 0..layer.fan_out {
                        grow[j] += xk * dy[j];
                        acc += row[j] * dy[j];
                    }
                    dh[k] = acc;
                }
            }
            if self.skips.contains(&l) {
                let split = layer.fan_in - self.input_dim;
                for (d, s) in d_input.iter_mut().zip(&dh[split..]) {
                    *d += s;
                }
                dh.truncate(split);
            }
            if l == 0 {
                for (d, s) in d_input.iter_mut().zip(&dh) {
                    *d += s;
                }
            }
            dy = dh;
        }
        Ok(d_input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> Mlp {
        net_with(seed, Activation::Relu)
    }

    fn net_with(seed: u64, activation: Activation) -> Mlp {
        let mut m = Mlp::new(5, vec![7, 6, 7], 3, vec![2]).unwrap().with_activation(activation).unwrap();
        m.init(&mut ChaCha8Rng::seed_from_u64(seed), false);
        for (i, b) in m.params.iter_mut().enumerate() {
            if *b == 0.0 {
                *b = 0.05 * ((i % 5) as f64 - 2.0);
            }
        }
        m
    }

    #[test]
    fn parameter_count_includes_skip_inputs() {
        let m = Mlp::new(4, vec![8, 8], 2, vec![1]).unwrap();
        assert_eq!(m.n_params(), (4 * 8 + 8) + (12 * 8 + 8) + (8 * 2 + 2));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::new(0, vec![4], 1, vec![]).is_err());
        assert!(Mlp::new(2, vec![4], 1, vec![0]).is_err());
        assert!(Mlp::new(2, vec![4], 1, vec![2]).is_err());
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let m = net(0);
        let mut g = vec![0.0; m.n_params()];
        assert!(matches!(m.backward(&MlpTape::default(), &[1.0; 3], &mut g), Err(Error::BackwardWithoutForward)));
    }

    #[test]
    fn zero_network_bias_gradient() {
        let m = Mlp::new(3, vec![4], 2, vec![]).unwrap().with_activation(Activation::Relu).unwrap();
        let mut tape = MlpTape::default();
        let y = m.forward(&[0.1, 0.2, 0.3], Some(&mut tape));
        assert_eq!(y, vec![0.0, 0.0]);
        let mut g = vec![0.0; m.n_params()];
        m.backward(&tape, &[1.0, 1.0], &mut g).unwrap();
        let out_bias = &g[g.len() - 2..];
        assert_eq!(out_bias, &[1.0, 1.0]);
        // hidden pre-activations sit at the relu kink, whose derivative is taken as zero
        assert!(g[12..16].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn softplus_derivative_matches_differences() {
        for sharpness in [1.0, 100.0] {
            let a = Activation::Softplus { sharpness };
            for x in [-3.0, -0.2, -0.004, 0.0, 0.003, 0.7, 4.0] {
                let h = 1e-7;
                let fd = (a.apply(x + h) - a.apply(x - h)) / (2.0 * h);
                assert!((fd - a.derivative(x)).abs() < 1e-6, "{sharpness} {x}");
            }
        }
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
    }

    #[test]
    fn sharp_softplus_tails_are_exact() {
        let a = Activation::Softplus { sharpness: 100.0 };
        for x in [0.37, 0.5, 3.0] {
            assert_eq!(a.apply(x), x);
            assert!((softplus(100.0 * x) / 100.0 - x).abs() <= f64::EPSILON * x);
        }
        for x in [-0.37, -2.0] {
            assert_eq!(a.apply(x), 0.0);
            assert!(softplus(100.0 * x) / 100.0 < 1e-17);
        }
        assert!(Mlp::new(2, vec![3], 1, vec![]).unwrap().with_activation(Activation::Softplus { sharpness: 0.0 }).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_finite_differences(net(1));
        check_finite_differences(net_with(1, Activation::Softplus { sharpness: 1.0 }));
        check_finite_differences(net_with(1, Activation::Softplus { sharpness: 20.0 }));
    }

    fn check_finite_differences(m: Mlp) {
        let x = [0.3, -0.2, 0.5, 0.1, -0.4];
        let probe = [0.7, -1.1, 0.4];
        let loss = |m: &Mlp, x: &[f64]| m.forward(x, None).iter().zip(&probe).map(|(a, b)| a * b).sum::<f64>();
        let mut tape = MlpTape::default();
        m.forward(&x, Some(&mut tape));
        let mut g = vec![0.0; m.n_params()];
        let dx = m.backward(&tape, &probe, &mut g).unwrap();
        let h = 1e-6;
        for p in 0..m.n_params() {
            let (mut a, mut b) = (m.clone(), m.clone());
            a.params[p] += h;
            b.params[p] -= h;
            let fd = (loss(&a, &x) - loss(&b, &x)) / (2.0 * h);
            assert!((fd - g[p]).abs() <= 1e-6 * (1.0 + fd.abs()), "param {p}: {fd} vs {}", g[p]);
        }
        for i in 0..5 {
            let (mut a, mut b) = (x, x);
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&m, &a) - loss(&m, &b)) / (2.0 * h);
            assert!((fd - dx[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn forward_is_deterministic_and_tape_free_matches() {
        let m = net(2);
        let x = [0.1, 0.2, 0.3, 0.4, 0.5];
        let mut tape = MlpTape::default();
        let a = m.forward(&x, Some(&mut tape));
        let b = m.forward(&x, None);
        assert_eq!(a, b);
    }
}
