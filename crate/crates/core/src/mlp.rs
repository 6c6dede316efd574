//! Plain multi-layer perceptron with manual backpropagation: the building
//! block for both the feature autoencoders and the per-domain recommenders.

use crate::error::{Error, Result};
use crate::tensor::DenseMatrix;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Logistic,
    /// Leaky rectifier: negative inputs pass scaled by [`LEAK`]; units
    /// cannot die under a burst of large gradients.
    Relu,
}

/// Negative-side slope of the leaky rectifier.
pub const LEAK: f64 = 0.01;

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => if x >= 0.0 { x } else { LEAK * x },
        }
    }

    /// Derivative expressed through the activation's own output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Logistic => y * (1.0 - y),
            Activation::Relu => {
                if y >= 0.0 {
                    1.0
                } else {
                    LEAK
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
            Activation::Relu => "relu",
        }
    }
}

/// One affine layer; weights are `out × in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Linear>,
    hidden: Activation,
    output: Activation,
}

/// Per-layer parameter gradients from one backward pass.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Linear>,
}

impl MlpGrads {
    fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| Linear {
                    weight: DenseMatrix::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            mine.weight
                .add_scaled(&theirs.weight, 1.0)
                .expect("same shape");
            for (b, g) in mine.bias.iter_mut().zip(&theirs.bias) {
                *b += g;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            let w = layer.weight.clone();
            layer.weight = DenseMatrix::zeros(w.rows(), w.cols());
            layer.weight.add_scaled(&w, factor).expect("same shape");
            for b in &mut layer.bias {
                *b *= factor;
            }
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct Trace {
    /// `post[0]` is the input; `post[l]` is layer `l`'s activation after any
    /// dropout mask, i.e. the input to layer `l+1`.
    post: Vec<Vec<f64>>,
    /// Activations before dropout, per layer (1-indexed into `post`).
    raw: Vec<Vec<f64>>,
    /// Inverted-dropout masks for hidden layers, when training with dropout.
    masks: Option<Vec<Vec<f64>>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("nonempty trace")
    }
}

impl Mlp {
    /// Builds `dims[0] → dims[1] → … → dims.last()` with seeded uniform
    /// initialization in `[−1/√fan_in, +1/√fan_in]`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut ChaCha20Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Validation(
                "an MLP needs at least input and output dimensions".into(),
            ));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation("layer widths must be positive".into()));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weight = DenseMatrix::new(
                fan_out,
                fan_in,
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect(),
            )?;
            let bias = (0..fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
            layers.push(Linear { weight, bias });
        }
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.rows()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weight.rows()));
        dims
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn from_layers(layers: Vec<Linear>, hidden: Activation, output: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].weight.rows() != pair[1].weight.cols() {
                return Err(Error::Shape("consecutive layer widths disagree".into()));
            }
        }
        for l in &layers {
            if l.bias.len() != l.weight.rows() {
                return Err(Error::Shape("bias length must match output width".into()));
            }
        }
        Ok(Self {
            layers,
            hidden,
            output,
        })
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x, None, &mut None)?.post.pop().expect("output"))
    }

    /// Forward pass retaining intermediates. `dropout` is the drop
    /// probability for hidden activations; masks use inverted scaling so
    /// inference needs no correction.
    pub fn forward_trace(
        &self,
        x: &[f64],
        dropout: Option<f64>,
        rng: &mut Option<&mut ChaCha20Rng>,
    ) -> Result<Trace> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut post = Vec::with_capacity(n_layers + 1);
        let mut raw = Vec::with_capacity(n_layers);
        let mut masks = match dropout {
            Some(rate) if rate > 0.0 => Some(Vec::with_capacity(n_layers.saturating_sub(1))),
            _ => None,
        };
        post.push(x.to_vec());
        for (idx, layer) in self.layers.iter().enumerate() {
            let is_output = idx == n_layers - 1;
            let act = if is_output { self.output } else { self.hidden };
            let input = post.last().expect("nonempty");
            let mut z = layer.weight.mat_vec(input)?;
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi = act.apply(*zi + b);
            }
            raw.push(z.clone());
            if !is_output {
                if let Some(masks) = masks.as_mut() {
                    let rate = dropout.expect("masks imply dropout");
                    let rng = rng
                        .as_mut()
                        .ok_or_else(|| Error::Validation("dropout needs an rng".into()))?;
                    let keep = 1.0 - rate;
                    let mask: Vec<f64> = z
                        .iter()
                        .map(|_| {
                            if rng.random::<f64>() < rate {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect();
                    for (zi, m) in z.iter_mut().zip(&mask) {
                        *zi *= m;
                    }
                    masks.push(mask);
                }
            }
            post.push(z);
        }
        Ok(Trace { post, raw, masks })
    }

    /// Backpropagates `d(loss)/d(output)` through the trace; returns
    /// parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, trace: &Trace, output_grad: &[f64]) -> (MlpGrads, Vec<f64>) {
        let n_layers = self.layers.len();
        debug_assert_eq!(output_grad.len(), self.output_dim());
        let mut grads = MlpGrads::zeros_like(self);
        // dz for the output layer.
        let mut delta: Vec<f64> = output_grad
            .iter()
            .zip(&trace.raw[n_layers - 1])
            .map(|(g, y)| g * self.output.derivative_from_output(*y))
            .collect();
        for idx in (0..n_layers).rev() {
            let layer = &self.layers[idx];
            let input = &trace.post[idx];
            {
                let g = &mut grads.layers[idx];
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = g.weight.row_mut(i);
                        for (grad_entry, &inp) in row.iter_mut().zip(input) {
                            *grad_entry += d * inp;
                        }
                    }
                    g.bias[i] += d;
                }
            }
            // Gradient w.r.t. this layer's input.
            let mut d_input = layer
                .weight
                .mat_vec_transposed(&delta)
                .expect("consistent trace");
            if idx > 0 {
                if let Some(masks) = &trace.masks {
                    for (di, m) in d_input.iter_mut().zip(&masks[idx - 1]) {
                        *di *= m;
                    }
                }
                for (di, y) in d_input.iter_mut().zip(&trace.raw[idx - 1]) {
                    *di *= self.hidden.derivative_from_output(*y);
                }
                delta = d_input;
            } else {
                return (grads, d_input);
            }
        }
        unreachable!("loop returns at layer 0");
    }

    /// SGD update: `θ ← θ − lr · g`.
    pub fn apply_step(&mut self, grads: &MlpGrads, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weight.add_scaled(&g.weight, -lr).expect("same shape");
            for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= lr * gb;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let wlen = l.weight.data().len();
            l.weight = DenseMatrix::new(
                l.weight.rows(),
                l.weight.cols(),
                flat[offset..offset + wlen].to_vec(),
            )?;
            offset += wlen;
            let blen = l.bias.len();
            l.bias.copy_from_slice(&flat[offset..offset + blen]);
            offset += blen;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use crate::tensor::{finite_diff_grad, gradient_relative_error, DenseVector};

    fn mse_loss(mlp: &Mlp, x: &[f64], target: &[f64]) -> f64 {
        let y = mlp.forward(x).unwrap();
        y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn forward_zero_weights_logistic_gives_half() {
        let mut rng = rng_for(0, &[]);
        let mut mlp = Mlp::new(&[3, 1], Activation::Tanh, Activation::Logistic, &mut rng).unwrap();
        mlp.set_params_flat(&vec![0.0; mlp.param_count()]).unwrap();
        let y = mlp.forward(&[0.4, -0.6, 1.0]).unwrap();
        assert_eq!(y, vec![0.5]);
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::new(&[4, 3, 2], Activation::Tanh, Activation::Identity, &mut rng_for(5, &[1]))
            .unwrap();
        let b = Mlp::new(&[4, 3, 2], Activation::Tanh, Activation::Identity, &mut rng_for(5, &[1]))
            .unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        let c = Mlp::new(&[4, 3, 2], Activation::Tanh, Activation::Identity, &mut rng_for(6, &[1]))
            .unwrap();
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn gradients_match_finite_differences_across_activations() {
        for (hidden, output) in [
            (Activation::Tanh, Activation::Identity),
            (Activation::Tanh, Activation::Logistic),
            (Activation::Identity, Activation::Identity),
        ] {
            let mut rng = rng_for(2, &[hidden as u64, output as u64]);
            let mlp = Mlp::new(&[4, 5, 3], hidden, output, &mut rng).unwrap();
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let target: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..0.9)).collect();

            let trace = mlp.forward_trace(&x, None, &mut None).unwrap();
            let out = trace.output();
            let dout: Vec<f64> = out.iter().zip(&target).map(|(y, t)| 2.0 * (y - t)).collect();
            let (grads, dx) = mlp.backward(&trace, &dout);

            let mut analytic = Vec::new();
            for l in &grads.layers {
                analytic.extend_from_slice(l.weight.data());
                analytic.extend_from_slice(&l.bias);
            }
            let params = DenseVector::new(mlp.params_flat()).unwrap();
            let mut probe = mlp.clone();
            let numeric = finite_diff_grad(
                |p| {
                    probe.set_params_flat(p).unwrap();
                    mse_loss(&probe, &x, &target)
                },
                &params,
                1e-5,
            )
            .unwrap();
            let rel = gradient_relative_error(&analytic, numeric.data());
            assert!(rel <= 1e-6, "{hidden:?}/{output:?} parameter grads off by {rel}");

            // Input gradient against finite differences too.
            let xin = DenseVector::new(x.clone()).unwrap();
            let numeric_x =
                finite_diff_grad(|p| mse_loss(&mlp, p, &target), &xin, 1e-5).unwrap();
            let rel_x = gradient_relative_error(&dx, numeric_x.data());
            assert!(rel_x <= 1e-6, "{hidden:?}/{output:?} input grads off by {rel_x}");
        }
    }

    #[test]
    fn dropout_masks_use_inverted_scaling() {
        let mut rng = rng_for(3, &[]);
        let mlp = Mlp::new(&[2, 400, 1], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let mut drop_rng = rng_for(3, &[9]);
        let trace = mlp
            .forward_trace(&[0.5, -0.5], Some(0.25), &mut Some(&mut drop_rng))
            .unwrap();
        let masks = trace.masks.as_ref().unwrap();
        assert_eq!(masks.len(), 1);
        let m = &masks[0];
        let zeros = m.iter().filter(|&&v| v == 0.0).count();
        let scaled = m.iter().filter(|&&v| (v - 1.0 / 0.75).abs() < 1e-12).count();
        assert_eq!(zeros + scaled, m.len());
        let frac = zeros as f64 / m.len() as f64;
        assert!((frac - 0.25).abs() < 0.08, "drop fraction {frac}");
    }

    #[test]
    fn dropout_is_seeded() {
        let mut rng = rng_for(4, &[]);
        let mlp = Mlp::new(&[3, 8, 1], Activation::Tanh, Activation::Logistic, &mut rng).unwrap();
        let x = [0.1, 0.2, 0.3];
        let t1 = mlp
            .forward_trace(&x, Some(0.5), &mut Some(&mut rng_for(11, &[])))
            .unwrap();
        let t2 = mlp
            .forward_trace(&x, Some(0.5), &mut Some(&mut rng_for(11, &[])))
            .unwrap();
        assert_eq!(t1.output(), t2.output());
    }

    #[test]
    fn sgd_reduces_loss_on_toy_problem() {
        let mut rng = rng_for(8, &[]);
        let mut mlp = Mlp::new(&[2, 6, 1], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let data = [([0.0, 0.0], 0.1), ([0.0, 1.0], 0.9), ([1.0, 0.0], 0.9), ([1.0, 1.0], 0.1)];
        let loss_of = |m: &Mlp| -> f64 {
            data.iter().map(|(x, t)| mse_loss(m, x, &[*t])).sum::<f64>() / data.len() as f64
        };
        let before = loss_of(&mlp);
        for _ in 0..800 {
            let mut acc = MlpGrads::zeros_like(&mlp);
            for (x, t) in &data {
                let trace = mlp.forward_trace(x, None, &mut None).unwrap();
                let dout = vec![2.0 * (trace.output()[0] - t)];
                let (g, _) = mlp.backward(&trace, &dout);
                acc.accumulate(&g);
            }
            acc.scale(1.0 / data.len() as f64);
            mlp.apply_step(&acc, 0.5);
        }
        let after = loss_of(&mlp);
        assert!(after < before * 0.05, "loss {before} -> {after}");
    }

    #[test]
    fn params_round_trip() {
        let mut rng = rng_for(12, &[]);
        let mlp = Mlp::new(&[5, 4, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let flat = mlp.params_flat();
        let mut clone = mlp.clone();
        clone.set_params_flat(&flat).unwrap();
        assert_eq!(clone.params_flat(), flat);
        assert!(clone.set_params_flat(&flat[1..]).is_err());
    }

    #[test]
    fn rejects_zero_width_layers() {
        let mut rng = rng_for(1, &[]);
        assert!(Mlp::new(&[3, 0, 1], Activation::Tanh, Activation::Identity, &mut rng).is_err());
    }
}
