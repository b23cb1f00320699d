//! Fully connected network with hand-written backpropagation and RMSprop.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{input, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// No nonlinearity; used to compare against closed-form gradients.
    Linear,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        if self == Activation::Relu {
            z.mapv_inplace(|x| x.max(0.0));
        }
    }

    fn derivative_mask(self, z: &Array2<f64>, grad: &mut Array2<f64>) {
        if self == Activation::Relu {
            grad.zip_mut_with(z, |g, &x| {
                if x <= 0.0 {
                    *g = 0.0;
                }
            });
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Hidden layers use `activation`; the output layer is always linear.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
}

/// Same shapes as the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`. Parameters are drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(input(format!("invalid layer sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weights: Array2::from_shape_fn((w[1], w[0]), |_| rng.gen_range(-bound..bound)),
                    bias: Array1::from_shape_fn(w[1], |_| rng.gen_range(-bound..bound)),
                }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    /// Six linear layers: `K -> 64 -> 64 -> 64 -> 64 -> 64 -> |A|`.
    pub fn q_network<R: Rng + ?Sized>(bins: usize, actions: usize, width: usize, rng: &mut R) -> Result<Self> {
        let mut sizes = vec![bins];
        sizes.extend(std::iter::repeat_n(width, 5));
        sizes.push(actions);
        Self::new(&sizes, Activation::Relu, rng)
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(input("network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].weights.nrows() != w[1].weights.ncols() {
                return Err(input("consecutive layer shapes do not chain"));
            }
        }
        for l in &layers {
            if l.bias.len() != l.weights.nrows() {
                return Err(input("bias length does not match layer output"));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// `[input, ..., output]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.layers[0].weights.ncols()];
        sizes.extend(self.layers.iter().map(|l| l.weights.nrows()));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Batch forward pass; rows are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            if i < last {
                self.activation.apply(&mut z);
            }
            a = z;
        }
        a
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        self.forward(view).into_raw_vec()
    }

    /// Loss `mean_i 1/2 (Q(s_i, a_i) - y_i)^2` and its gradient.
    pub fn td_gradient(&self, states: ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> (f64, Gradients) {
        let batch = states.nrows();
        assert_eq!(actions.len(), batch);
        assert_eq!(targets.len(), batch);

        // Keep pre-activations for the backward pass.
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = states.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.bias;
            inputs.push(a);
            let mut next = z.clone();
            if i < last {
                self.activation.apply(&mut next);
            }
            pre.push(z);
            a = next;
        }

        let scale = 1.0 / batch as f64;
        let mut loss = 0.0;
        let mut delta = Array2::<f64>::zeros(a.raw_dim());
        for (i, (&act, &y)) in actions.iter().zip(targets).enumerate() {
            let err = a[[i, act]] - y;
            loss += 0.5 * err * err;
            delta[[i, act]] = err * scale;
        }
        loss *= scale;

        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            if i < last {
                self.activation.derivative_mask(&pre[i], &mut delta);
            }
            let dw = delta.t().dot(&inputs[i]);
            let db = delta.sum_axis(Axis(0));
            let next_delta = if i > 0 { Some(delta.dot(&self.layers[i].weights)) } else { None };
            grads.push(Layer { weights: dw, bias: db });
            if let Some(d) = next_delta {
                delta = d;
            }
        }
        grads.reverse();
        (loss, Gradients { layers: grads })
    }

    /// Little-endian checkpoint: `u32` size count, `u32` sizes, then for each
    /// layer the row-major weights followed by the bias as `f64`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.sizes();
        let mut out = Vec::with_capacity(4 + 4 * sizes.len() + 8 * self.parameter_count());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in &sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
        for l in &self.layers {
            for x in l.weights.iter().chain(l.bias.iter()) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], activation: Activation) -> Result<Self> {
        let mut cursor = 0usize;
        let read_u32 = |cursor: &mut usize| -> Result<u32> {
            let chunk = bytes
                .get(*cursor..*cursor + 4)
                .ok_or_else(|| input("checkpoint truncated in header"))?;
            *cursor += 4;
            Ok(u32::from_le_bytes(chunk.try_into().unwrap()))
        };
        let count = read_u32(&mut cursor)? as usize;
        if count < 2 {
            return Err(input("checkpoint needs at least two layer sizes"));
        }
        let sizes = (0..count)
            .map(|_| read_u32(&mut cursor).map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut floats = bytes[cursor..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let expected: usize = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if bytes.len() - cursor != 8 * expected {
            return Err(input(format!(
                "checkpoint holds {} bytes of parameters, expected {}",
                bytes.len() - cursor,
                8 * expected
            )));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let weights = Array2::from_shape_fn((w[1], w[0]), |_| floats.next().unwrap());
                let bias = Array1::from_shape_fn(w[1], |_| floats.next().unwrap());
                Layer { weights, bias }
            })
            .collect();
        Self::from_layers(layers, activation)
    }
}

/// Outcome of [`finite_difference_error`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteDifference {
    /// Largest per-parameter relative error over the checked parameters.
    pub worst: f64,
    pub checked: usize,
    /// Parameters whose probe flipped a ReLU on or off; a central difference
    /// across a kink is not a derivative, so these are left out.
    pub skipped: usize,
}

/// Per-layer inputs and pre-activations of a batch forward pass.
fn forward_trace(net: &Mlp, states: ArrayView2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let last = net.layers.len() - 1;
    let (mut inputs, mut pre) = (Vec::new(), Vec::new());
    let mut a = states.to_owned();
    for (i, layer) in net.layers.iter().enumerate() {
        let mut z = a.dot(&layer.weights.t());
        z += &layer.bias;
        inputs.push(a);
        a = z.clone();
        if i < last {
            net.activation.apply(&mut a);
        }
        pre.push(z);
    }
    (inputs, pre)
}

/// Finishes a forward pass from layer `l`, whose pre-activation is `z`. Returns
/// the batch loss and whether any hidden unit changed sign relative to `base`.
fn finish_from(
    net: &Mlp,
    l: usize,
    mut z: Array2<f64>,
    base: &[Array2<f64>],
    actions: &[usize],
    targets: &[f64],
) -> (f64, bool) {
    let last = net.layers.len() - 1;
    let crossed = |z: &Array2<f64>, b: &Array2<f64>| z.iter().zip(b).any(|(&x, &y)| (x > 0.0) != (y > 0.0));
    let mut flipped = false;
    for i in l..=last {
        if i > l {
            let mut next = z.dot(&net.layers[i].weights.t());
            next += &net.layers[i].bias;
            z = next;
        }
        if i < last {
            flipped |= crossed(&z, &base[i]);
            net.activation.apply(&mut z);
        }
    }
    let loss = actions
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (&act, &y))| 0.5 * (z[[i, act]] - y).powi(2))
        .sum::<f64>()
        / actions.len() as f64;
    (loss, flipped)
}

/// Compares the backpropagated gradient with central finite differences of the
/// given step, parameter by parameter. Relative error is used, falling back to
/// absolute error where both values are below `1e-7`.
pub fn finite_difference_error(
    net: &Mlp,
    states: ArrayView2<f64>,
    actions: &[usize],
    targets: &[f64],
    step: f64,
) -> FiniteDifference {
    let (_, grads) = net.td_gradient(states, actions, targets);
    let (inputs, pre) = forward_trace(net, states);
    let mut out = FiniteDifference { worst: 0.0, checked: 0, skipped: 0 };
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].weights.dim();
        for idx in 0..rows * cols + rows {
            // One parameter moves one unit's pre-activation; the layers before
            // it are unaffected.
            let (analytic, unit, source) = if idx < rows * cols {
                let (i, j) = (idx / cols, idx % cols);
                (grads.layers[l].weights[[i, j]], i, Some(j))
            } else {
                let i = idx - rows * cols;
                (grads.layers[l].bias[i], i, None)
            };
            let probe = |h: f64| {
                let mut z = pre[l].clone();
                let mut column = z.column_mut(unit);
                match source {
                    Some(j) => column.scaled_add(h, &inputs[l].column(j)),
                    None => column += h,
                }
                finish_from(net, l, z, &pre, actions, targets)
            };
            let ((up, up_flip), (down, down_flip)) = (probe(step), probe(-step));
            if up_flip || down_flip {
                out.skipped += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * step);
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-7 {
                (analytic - numeric).abs()
            } else {
                (analytic - numeric).abs() / scale
            };
            out.worst = out.worst.max(err);
            out.checked += 1;
        }
    }
    out
}

/// RMSprop: `v <- a v + (1 - a) g^2`, `theta <- theta - lr g / (sqrt(v) + eps)`.
#[derive(Clone, Debug)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub smoothing: f64,
    pub floor: f64,
    square_avg: Vec<Layer>,
}

impl RmsProp {
    pub fn new(net: &Mlp, learning_rate: f64, smoothing: f64, floor: f64) -> Self {
        let square_avg = net
            .layers()
            .iter()
            .map(|l| Layer {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.raw_dim()),
            })
            .collect();
        Self {
            learning_rate,
            smoothing,
            floor,
            square_avg,
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        let (lr, a, eps) = (self.learning_rate, self.smoothing, self.floor);
        for ((layer, g), v) in net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut self.square_avg) {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, v| {
                    *v = a * *v + (1.0 - a) * g * g;
                    *p -= lr * g / (v.sqrt() + eps);
                });
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, v| {
                    *v = a * *v + (1.0 - a) * g * g;
                    *p -= lr * g / (v.sqrt() + eps);
                });
        }
    }
}
