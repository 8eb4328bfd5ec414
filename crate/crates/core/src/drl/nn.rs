//! Dense feed-forward networks with batched forward and backward passes.
//!
//! Weights are stored row-major as `outputs x inputs`, so a layer computes
//! `Y = act(X W^T + b)` on a row-major batch `X`.
//!
//! Checkpoint layout (all integers `u32`, all values `f64`, little endian):
//!
//! ```text
//! b"AOIW" | version | layer count
//! per layer: inputs | outputs | activation (0 linear, 1 relu, 2 tanh)
//! per layer: weights (outputs x inputs, row-major) | biases (outputs)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"AOIW";
const VERSION: u32 = 1;
/// Half-width of the uniform init of the output layer.
pub const OUTPUT_INIT: f64 = 3e-3;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("expected input of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("network architectures differ")]
    ArchitectureMismatch,
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn slope(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    fn code(self) -> u32 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    fn from_code(c: u32) -> Result<Self, NnError> {
        match c {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Tanh),
            other => Err(NnError::Format(format!("unknown activation {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
            activation,
        }
    }
}

/// Parameter gradients, laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn is_zero(&self) -> bool {
        self.weights.iter().chain(&self.biases).flatten().all(|g| *g == 0.0)
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.weights.iter_mut().chain(self.biases.iter_mut()).flatten() {
            *g *= factor;
        }
    }
}

/// Activations of every layer for one batch, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape holds the input")
    }
}

/// `c = alpha a b + beta c` on strided matrices (`m x k` times `k x n`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
    c_cols: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    let span = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= span(m, k, a_strides), "gemm: lhs too short");
    assert!(b.len() >= span(k, n, b_strides), "gemm: rhs too short");
    assert!(c.len() >= span(m, n, (c_cols, 1)), "gemm: output too short");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` is borrowed mutably so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            c_cols as isize,
            1,
        );
    }
}

/// Ordered dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// `sizes = [in, h1, ..., out]`. Hidden layers get He-normal weights, the
    /// output layer uniform weights in `[-3e-3, 3e-3]`; biases start at zero.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "a network needs at least one layer");
        let count = sizes.len() - 1;
        let layers = (0..count)
            .map(|l| {
                let (inputs, outputs) = (sizes[l], sizes[l + 1]);
                let last = l + 1 == count;
                let mut layer = Layer::zeros(inputs, outputs, if last { output } else { hidden });
                let scale = (2.0 / inputs as f64).sqrt();
                for w in &mut layer.weights {
                    *w = if last {
                        rng.random_range(-OUTPUT_INIT..=OUTPUT_INIT)
                    } else {
                        scale * Distribution::<f64>::sample(&StandardNormal, rng)
                    };
                }
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn same_shape(&self, other: &Network) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let mut tape = self.forward_batch(input, 1)?;
        Ok(tape.acts.pop().unwrap_or_default())
    }

    /// Forward pass over `batch` row-major samples.
    pub fn forward_batch(&self, input: &[f64], batch: usize) -> Result<Tape, NnError> {
        let expected = batch * self.input_dim();
        if input.len() != expected {
            return Err(NnError::DimensionMismatch {
                expected,
                got: input.len(),
            });
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let x = acts.last().expect("non-empty");
            let mut y = Vec::with_capacity(batch * layer.outputs);
            for _ in 0..batch {
                y.extend_from_slice(&layer.biases);
            }
            // W^T viewed in place: element (i, o) sits at o * inputs + i
            gemm(
                batch,
                layer.inputs,
                layer.outputs,
                1.0,
                x,
                (layer.inputs, 1),
                &layer.weights,
                (1, layer.inputs),
                1.0,
                &mut y,
                layer.outputs,
            );
            if layer.activation != Activation::Linear {
                for v in &mut y {
                    *v = layer.activation.apply(*v);
                }
            }
            acts.push(y);
        }
        Ok(Tape { batch, acts })
    }

    /// Backpropagates `grad_out` (d loss / d output, one row per sample) and
    /// returns parameter gradients summed over the batch together with
    /// d loss / d input.
    pub fn backward(&self, tape: &Tape, grad_out: &[f64]) -> Result<(Gradients, Vec<f64>), NnError> {
        let batch = tape.batch;
        let expected = batch * self.output_dim();
        if grad_out.len() != expected {
            return Err(NnError::DimensionMismatch {
                expected,
                got: grad_out.len(),
            });
        }
        if tape.acts.len() != self.layers.len() + 1 {
            return Err(NnError::ArchitectureMismatch);
        }
        let count = self.layers.len();
        let mut weights = vec![Vec::new(); count];
        let mut biases = vec![Vec::new(); count];
        let mut delta = grad_out.to_vec();
        for l in (0..count).rev() {
            let layer = &self.layers[l];
            let y = &tape.acts[l + 1];
            let x = &tape.acts[l];
            if layer.activation != Activation::Linear {
                for (d, v) in delta.iter_mut().zip(y) {
                    *d *= layer.activation.slope(*v);
                }
            }
            let mut gb = vec![0.0; layer.outputs];
            for row in delta.chunks_exact(layer.outputs) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            // dW = delta^T X
            let mut gw = vec![0.0; layer.outputs * layer.inputs];
            gemm(
                layer.outputs,
                batch,
                layer.inputs,
                1.0,
                &delta,
                (1, layer.outputs),
                x,
                (layer.inputs, 1),
                0.0,
                &mut gw,
                layer.inputs,
            );
            // dX = delta W
            let mut dx = vec![0.0; batch * layer.inputs];
            gemm(
                batch,
                layer.outputs,
                layer.inputs,
                1.0,
                &delta,
                (layer.outputs, 1),
                &layer.weights,
                (layer.inputs, 1),
                0.0,
                &mut dx,
                layer.inputs,
            );
            weights[l] = gw;
            biases[l] = gb;
            delta = dx;
        }
        Ok((Gradients { weights, biases }, delta))
    }

    /// Plain gradient step `theta -= lr g`.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (w, g) in layer.weights.iter_mut().zip(&grads.weights[l]) {
                *w -= lr * g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&grads.biases[l]) {
                *b -= lr * g;
            }
        }
    }

    /// `self <- nu online + (1 - nu) self`, elementwise.
    pub fn soft_update(&mut self, online: &Network, nu: f64) -> Result<(), NnError> {
        if !self.same_shape(online) {
            return Err(NnError::ArchitectureMismatch);
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (a, b) in t.weights.iter_mut().zip(&o.weights) {
                *a = nu * b + (1.0 - nu) * *a;
            }
            for (a, b) in t.biases.iter_mut().zip(&o.biases) {
                *a = nu * b + (1.0 - nu) * *a;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<(), NnError> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            for v in [l.inputs as u32, l.outputs as u32, l.activation.code()] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.biases) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from(mut input: impl Read) -> Result<Self, NnError> {
        fn u32_of(r: &mut impl Read) -> Result<u32, NnError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = u32_of(&mut input)?;
        if version != VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let count = u32_of(&mut input)? as usize;
        if count == 0 || count > 64 {
            return Err(NnError::Format(format!("implausible layer count {count}")));
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let inputs = u32_of(&mut input)? as usize;
            let outputs = u32_of(&mut input)? as usize;
            let act = Activation::from_code(u32_of(&mut input)?)?;
            if let Some(prev) = layers.last().map(|l: &Layer| l.outputs) {
                if prev != inputs {
                    return Err(NnError::Format("layer dimensions do not chain".into()));
                }
            }
            layers.push(Layer::zeros(inputs, outputs, act));
        }
        let mut b = [0u8; 8];
        for l in &mut layers {
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                input.read_exact(&mut b)?;
                *v = f64::from_le_bytes(b);
            }
        }
        Ok(Self { layers })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_forward(net: &Network, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for l in &net.layers {
            let mut out = vec![0.0; l.outputs];
            for o in 0..l.outputs {
                let mut z = l.biases[o];
                for i in 0..l.inputs {
                    z += l.weights[o * l.inputs + i] * a[i];
                }
                out[o] = match l.activation {
                    Activation::Linear => z,
                    Activation::Relu => z.max(0.0),
                    Activation::Tanh => z.tanh(),
                };
            }
            a = out;
        }
        a
    }

    #[test]
    fn zero_network_gives_zero() {
        let net = Network {
            layers: vec![Layer::zeros(3, 4, Activation::Relu), Layer::zeros(4, 2, Activation::Tanh)],
        };
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_passes_through() {
        let mut l = Layer::zeros(3, 3, Activation::Linear);
        for i in 0..3 {
            l.weights[i * 3 + i] = 1.0;
        }
        let net = Network { layers: vec![l] };
        assert_eq!(net.forward(&[0.5, -7.0, 2.0]).unwrap(), vec![0.5, -7.0, 2.0]);
    }

    #[test]
    fn batched_forward_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::new(&[7, 11, 5, 3], Activation::Relu, Activation::Tanh, &mut rng);
        let batch = 4;
        let x: Vec<f64> = (0..batch * 7).map(|i| (i as f64 * 0.37).sin()).collect();
        let tape = net.forward_batch(&x, batch).unwrap();
        for b in 0..batch {
            let want = naive_forward(&net, &x[b * 7..(b + 1) * 7]);
            for (g, w) in tape.output()[b * 3..(b + 1) * 3].iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::new(&[3, 2], Activation::Relu, Activation::Linear, &mut rng);
        assert!(matches!(net.forward(&[1.0]), Err(NnError::DimensionMismatch { .. })));
        let tape = net.forward_batch(&[0.0; 6], 2).unwrap();
        assert!(matches!(net.backward(&tape, &[1.0]), Err(NnError::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Network::new(&[4, 6, 2], Activation::Relu, Activation::Tanh, &mut rng);
        let tape = net.forward_batch(&[0.3, -0.2, 0.9, 0.1], 1).unwrap();
        let (g, dx) = net.backward(&tape, &[0.0, 0.0]).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_least_squares_gradient() {
        // loss = 0.5 |W x + b - t|^2 gives dW = (y - t) x^T, db = y - t
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::new(&[3, 2], Activation::Linear, Activation::Linear, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let t = [0.2, -0.4];
        let tape = net.forward_batch(&x, 1).unwrap();
        let y = tape.output().to_vec();
        let r: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a - b).collect();
        let (g, _) = net.backward(&tape, &r).unwrap();
        for o in 0..2 {
            assert_relative_eq!(g.biases[0][o], r[o], max_relative = 1e-14);
            for i in 0..3 {
                assert_relative_eq!(g.weights[0][o * 3 + i], r[o] * x[i], max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn soft_update_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let online = Network::new(&[2, 3, 1], Activation::Relu, Activation::Linear, &mut rng);
        let base = Network::new(&[2, 3, 1], Activation::Relu, Activation::Linear, &mut rng);
        let mut t = base.clone();
        t.soft_update(&online, 1.0).unwrap();
        assert_eq!(t, online);
        let mut t = base.clone();
        t.soft_update(&online, 0.0).unwrap();
        assert_eq!(t, base);
        let mut one = Network {
            layers: vec![Layer::zeros(1, 1, Activation::Linear)],
        };
        one.layers[0].weights[0] = 1.0;
        let mut zero = Network {
            layers: vec![Layer::zeros(1, 1, Activation::Linear)],
        };
        zero.soft_update(&one, 0.9).unwrap();
        assert_relative_eq!(zero.layers[0].weights[0], 0.9);
        let other = Network::new(&[2, 4, 1], Activation::Relu, Activation::Linear, &mut rng);
        assert!(matches!(t.soft_update(&other, 0.5), Err(NnError::ArchitectureMismatch)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Network::new(&[5, 8, 3], Activation::Relu, Activation::Tanh, &mut rng);
        let mut buf = Vec::new();
        net.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"AOIW");
        assert_eq!(buf.len(), 4 + 8 + 2 * 12 + 8 * net.param_count());
        assert_eq!(Network::read_from(buf.as_slice()).unwrap(), net);
        buf[0] = b'X';
        assert!(matches!(Network::read_from(buf.as_slice()), Err(NnError::Format(_))));
    }
}
