//! Affine + activation layer stacks with hand-written reverse mode.
//!
//! Shared by layered generators and layered classifiers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Relu,
        Activation::Tanh,
        Activation::Sigmoid,
    ];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    /// Derivative at the pre-activation `x`. ReLU uses subgradient 0 at 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::param("activation", format!("unknown activation `{s}`")))
    }
}

/// `y = act(W x + b)` with `W` of shape `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        check_dim("layer bias", weight.rows(), bias.len())?;
        Ok(Dense {
            weight,
            bias,
            activation,
        })
    }

    /// Glorot-normal weights, zero bias.
    pub fn random<R: Rng + ?Sized>(
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let scale = (2.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dense {
            weight: Matrix::from_row_major(output, input, data).expect("shape by construction"),
            bias: vec![0.0; output],
            activation,
        }
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.output_dim())
            .map(|r| dot(self.weight.row(r), x) + self.bias[r])
            .collect()
    }
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    layers: Vec<Dense>,
}

struct Trace {
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl LayerStack {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("layers", "at least one layer is required"));
        }
        for pair in layers.windows(2) {
            check_dim("layer chain", pair[0].output_dim(), pair[1].input_dim())?;
        }
        for (i, layer) in layers.iter().enumerate() {
            if !layer.weight.is_finite() || layer.bias.iter().any(|b| !b.is_finite()) {
                return Err(Error::NonFinite(format!("weights of layer {i}")));
            }
        }
        Ok(LayerStack { layers })
    }

    /// Random stack with `activation` on hidden layers and `last` on the
    /// output layer. `sizes` lists every width including input and output.
    pub fn random<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        last: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::param("layer sizes", format!("need >= 2 positive widths, got {sizes:?}")));
        }
        let n = sizes.len() - 1;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::random(w[0], w[1], if i + 1 == n { last } else { activation }, rng))
            .collect();
        LayerStack::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), x.len())?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer
                .preactivation(&h)
                .into_iter()
                .map(|v| layer.activation.apply(v))
                .collect();
        }
        Ok(h)
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let pre = layer.preactivation(&h);
            let next = pre.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(h);
            preacts.push(pre);
            h = next;
        }
        Trace {
            inputs,
            preacts,
            output: h,
        }
    }

    /// Returns the forward output and `Jᵀ u` at `x`.
    pub fn forward_vjp(&self, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("network input", self.input_dim(), x.len())?;
        check_dim("output cotangent", self.output_dim(), u.len())?;
        let trace = self.trace(x);
        let grad = self.backward(&trace, u, None);
        Ok((trace.output, grad))
    }

    /// Like [`LayerStack::forward_vjp`], with the cotangent computed from
    /// the forward output by `cotangent`.
    pub fn forward_vjp_with<F>(&self, x: &[f64], cotangent: F) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: FnOnce(&[f64]) -> Result<Vec<f64>>,
    {
        check_dim("network input", self.input_dim(), x.len())?;
        let trace = self.trace(x);
        let u = cotangent(&trace.output)?;
        check_dim("output cotangent", self.output_dim(), u.len())?;
        let grad = self.backward(&trace, &u, None);
        Ok((trace.output, grad))
    }

    /// Forward pass, then parameter gradients of `<u(output), output>` where
    /// `u` is computed from the output by `cotangent`. Gradients are added
    /// into `grads`; returns the output and the input gradient.
    pub fn accumulate_param_grads<F>(
        &self,
        x: &[f64],
        grads: &mut [LayerGrad],
        cotangent: F,
    ) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: FnOnce(&[f64]) -> Vec<f64>,
    {
        check_dim("network input", self.input_dim(), x.len())?;
        let trace = self.trace(x);
        let u = cotangent(&trace.output);
        check_dim("output cotangent", self.output_dim(), u.len())?;
        let gx = self.backward(&trace, &u, Some(grads));
        Ok((trace.output, gx))
    }

    fn backward(&self, trace: &Trace, u: &[f64], mut grads: Option<&mut [LayerGrad]>) -> Vec<f64> {
        let mut upstream = u.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let delta: Vec<f64> = upstream
                .iter()
                .zip(&trace.preacts[l])
                .map(|(g, &p)| g * layer.activation.derivative(p))
                .collect();
            if let Some(grads) = grads.as_deref_mut() {
                let g = &mut grads[l];
                let input = &trace.inputs[l];
                let cols = layer.input_dim();
                let w = g.weight.as_mut_slice();
                for (r, &dr) in delta.iter().enumerate() {
                    if dr == 0.0 {
                        continue;
                    }
                    g.bias[r] += dr;
                    for (wc, &xc) in w[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                        *wc += dr * xc;
                    }
                }
            }
            upstream = layer.weight.matvec_t(&delta);
        }
        upstream
    }

    pub fn zero_grads(&self) -> Vec<LayerGrad> {
        self.layers
            .iter()
            .map(|l| LayerGrad {
                weight: Matrix::zeros(l.output_dim(), l.input_dim()),
                bias: vec![0.0; l.output_dim()],
            })
            .collect()
    }

    /// `θ ← θ − lr · g`
    pub fn apply_grads(&mut self, grads: &[LayerGrad], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (w, gw) in layer.weight.as_mut_slice().iter_mut().zip(g.weight.as_slice()) {
                *w -= lr * gw;
            }
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
    }

    pub fn parameters_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::RngStream;

    #[test]
    fn identity_stack_collapses_to_single_affine() {
        let mut rng = RngStream::new(3, 0).rng();
        let net = LayerStack::random(&[3, 4, 2], Activation::Identity, Activation::Identity, &mut rng).unwrap();
        let mut net = net;
        net.layers_mut()[0].bias = vec![0.1, -0.2, 0.3, 0.0];
        net.layers_mut()[1].bias = vec![0.5, -0.5];
        let (l0, l1) = (&net.layers()[0], &net.layers()[1]);
        let w = l1.weight.matmul(&l0.weight).unwrap();
        let b: Vec<f64> = l1
            .weight
            .matvec(&l0.bias)
            .iter()
            .zip(&l1.bias)
            .map(|(a, b)| a + b)
            .collect();
        let x = [0.7, -1.1, 2.0];
        let collapsed: Vec<f64> = w.matvec(&x).iter().zip(&b).map(|(a, b)| a + b).collect();
        for (a, b) in net.forward(&x).unwrap().iter().zip(&collapsed) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_subgradient_is_zero_at_origin() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300), 1.0);
    }

    #[test]
    fn broken_chain_rejected() {
        let mut rng = RngStream::new(0, 0).rng();
        let a = Dense::random(2, 3, Activation::Tanh, &mut rng);
        let b = Dense::random(4, 1, Activation::Tanh, &mut rng);
        assert!(matches!(LayerStack::new(vec![a, b]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn activation_round_trips_through_code_and_name() {
        for a in Activation::ALL {
            assert_eq!(Activation::from_code(a.code()), Some(a));
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert!(Activation::from_code(9).is_none());
    }
}
