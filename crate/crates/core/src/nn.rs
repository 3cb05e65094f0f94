//! Batched multi-layer perceptrons with leaky-rectifier hidden units.
//!
//! Parameters live in one flat vector (per layer: weights `out × in`
//! row-major, then biases) so a single [`Adam`](crate::diff::Adam) instance
//! can drive them. Forward and backward passes are dense GEMMs over a
//! row-major batch.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::diff::tape::sigmoid;
use crate::error::{contract, Result};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Output squashing applied by [`Mlp::forward`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Output {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Mlp {
    widths: Vec<usize>,
    output: Output,
    params: Vec<f64>,
}

/// Activations recorded by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    batch: usize,
    /// `inputs[l]` feeds layer `l` (post-activation of layer `l - 1`).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<f64>>,
}

fn leaky(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// All-zero network with the given layer widths (`[input, hidden…, output]`).
    pub fn zeros(widths: &[usize], output: Output) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(contract!("an MLP needs at least two positive widths, got {widths:?}"));
        }
        Ok(Self { widths: widths.to_vec(), output, params: vec![0.0; param_count(widths)] })
    }

    /// He-uniform weights scaled for the leaky rectifier, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], output: Output, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, output)?;
        let mut at = 0;
        for l in 0..net.layers() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = libm::sqrt(6.0 / ((1.0 + LEAKY_SLOPE * LEAKY_SLOPE) * fan_in as f64));
            for w in &mut net.params[at..at + fan_in * fan_out] {
                *w = rng.random_range(-bound..bound);
            }
            at += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// `layers` affine maps: `input → hidden × (layers − 1) → output`.
    pub fn uniform_depth<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output_dim: usize,
        layers: usize,
        output: Output,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 {
            return Err(contract!("an MLP needs at least one layer"));
        }
        let mut widths = vec![input];
        widths.extend(core::iter::repeat_n(hidden, layers - 1));
        widths.push(output_dim);
        Self::new(&widths, output, rng)
    }

    /// Rebuild from explicit layer matrices `(weights out×in row-major, bias)`.
    pub fn from_layers(widths: &[usize], output: Output, layers: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let mut net = Self::zeros(widths, output)?;
        if layers.len() != net.layers() {
            return Err(contract!("expected {} layers, got {}", net.layers(), layers.len()));
        }
        let mut params = Vec::with_capacity(net.params.len());
        for (l, (w, b)) in layers.iter().enumerate() {
            if w.len() != widths[l] * widths[l + 1] || b.len() != widths[l + 1] {
                return Err(contract!("layer {l} has the wrong shape"));
            }
            params.extend_from_slice(w);
            params.extend_from_slice(b);
        }
        net.params = params;
        Ok(net)
    }

    /// Shape check for networks rebuilt from serialized fields.
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(contract!("an MLP needs at least two positive widths, got {:?}", self.widths));
        }
        if self.params.len() != param_count(&self.widths) {
            return Err(contract!("widths {:?} need {} parameters, found {}", self.widths, param_count(&self.widths), self.params.len()));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(contract!("network parameters must be finite"));
        }
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn output(&self) -> Output {
        self.output
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(contract!("expected {} parameters, got {}", self.params.len(), params.len()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Weights and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let at: usize = self.widths[..=l].windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        (&self.params[at..at + i * o], &self.params[at + i * o..at + i * o + o])
    }

    fn check_input(&self, x: &[f64], batch: usize) -> Result<()> {
        if batch == 0 || x.len() != batch * self.input_dim() {
            return Err(contract!(
                "MLP input of length {} does not hold {batch} rows of width {}",
                x.len(),
                self.input_dim()
            ));
        }
        Ok(())
    }

    /// Final affine outputs, before any squashing.
    pub fn logits(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.run(x, batch, None)
    }

    /// Network output, squashed by the output activation.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        let mut y = self.logits(x, batch)?;
        if self.output == Output::Logistic {
            y.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        Ok(y)
    }

    /// Logits plus the cache needed by [`Mlp::backward`].
    pub fn forward_cached(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, MlpCache)> {
        let mut cache = MlpCache { batch, inputs: Vec::with_capacity(self.layers()), pre: Vec::new() };
        let y = self.run(x, batch, Some(&mut cache))?;
        Ok((y, cache))
    }

    fn run(&self, x: &[f64], batch: usize, mut cache: Option<&mut MlpCache>) -> Result<Vec<f64>> {
        self.check_input(x, batch)?;
        let mut h = x.to_vec();
        let last = self.layers() - 1;
        for l in 0..self.layers() {
            let (w, b) = self.layer(l);
            let (i, o) = (self.widths[l], self.widths[l + 1]);
            let mut z = vec![0.0; batch * o];
            gemm(batch, i, o, &h, (i as isize, 1), w, (1, i as isize), &mut z, false);
            for row in z.chunks_exact_mut(o) {
                row.iter_mut().zip(b).for_each(|(v, bias)| *v += bias);
            }
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(core::mem::take(&mut h));
            }
            if l == last {
                return Ok(z);
            }
            let act = z.iter().map(|&v| leaky(v)).collect();
            if let Some(c) = cache.as_deref_mut() {
                c.pre.push(z);
            }
            h = act;
        }
        unreachable!("loop returns at the last layer")
    }

    /// Parameter gradient and input gradient given `∂L/∂logits`.
    pub fn backward(&self, cache: &MlpCache, d_logits: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let batch = cache.batch;
        if d_logits.len() != batch * self.output_dim() || cache.inputs.len() != self.layers() {
            return Err(contract!("backward pass does not match the cached forward pass"));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut offsets = Vec::with_capacity(self.layers());
        let mut at = 0;
        for l in 0..self.layers() {
            offsets.push(at);
            at += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        let mut dz = d_logits.to_vec();
        for l in (0..self.layers()).rev() {
            let (i, o) = (self.widths[l], self.widths[l + 1]);
            let (w, _) = self.layer(l);
            let (gw, gb) = grad[offsets[l]..offsets[l] + i * o + o].split_at_mut(i * o);
            // dW = dZᵀ X
            gemm(o, batch, i, &dz, (1, o as isize), &cache.inputs[l], (i as isize, 1), gw, false);
            for row in dz.chunks_exact(o) {
                gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
            }
            // dX = dZ W
            let mut dx = vec![0.0; batch * i];
            gemm(batch, o, i, &dz, (o as isize, 1), w, (i as isize, 1), &mut dx, false);
            if l > 0 {
                for (d, &p) in dx.iter_mut().zip(&cache.pre[l - 1]) {
                    if p <= 0.0 {
                        *d *= LEAKY_SLOPE;
                    }
                }
            }
            dz = dx;
        }
        Ok((grad, dz))
    }
}

/// `C (m×n) = A (m×k) · B (k×n)` with explicit (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (isize, isize), b: &[f64], sb: (isize, isize), c: &mut [f64], acc: bool) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the strides address `a` as m×k, `b` as k×n and `c` as a dense
    // m×n row-major block, all within the slices' bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0,
            sa.1,
            b.as_ptr(),
            sb.0,
            sb.1,
            if acc { 1.0 } else { 0.0 },
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::check_gradient_coords;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for l in 0..net.layers() {
            let (w, b) = net.layer(l);
            let (i, o) = (net.widths()[l], net.widths()[l + 1]);
            let mut z: Vec<f64> = (0..o).map(|r| b[r] + (0..i).map(|c| w[r * i + c] * h[c]).sum::<f64>()).collect();
            if l + 1 < net.layers() {
                z.iter_mut().for_each(|v| *v = leaky(*v));
            }
            h = z;
        }
        h
    }

    #[test]
    fn batched_forward_matches_naive_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[5, 7, 6, 3], Output::Linear, &mut rng).unwrap();
        let x: Vec<f64> = (0..20).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = net.logits(&x, 4).unwrap();
        for r in 0..4 {
            let e = naive(&net, &x[r * 5..r * 5 + 5]);
            for c in 0..3 {
                assert!((y[r * 3 + c] - e[c]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut net = Mlp::zeros(&[4, 8, 8, 2], Output::Linear).unwrap();
        let n = net.params().len();
        net.params_mut()[n - 2..].copy_from_slice(&[0.5, 0.5]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 4.0], 1).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn logistic_output_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::uniform_depth(4, 16, 1, 8, Output::Logistic, &mut rng).unwrap();
        assert_eq!(net.layers(), 8);
        let y = net.forward(&[10.0, -3.0, 0.2, 1.0, 0.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(&[3, 6, 5, 2], Output::Linear, &mut rng).unwrap();
        let x = [0.3, -0.8, 0.5, 1.1, 0.2, -0.4];
        let weights = [0.7, -1.3, 0.4, 0.9];
        let f = |p: &[f64]| {
            let mut n = net.clone();
            n.set_params(p).unwrap();
            let (y, cache) = n.forward_cached(&x, 2).unwrap();
            let value = y.iter().zip(&weights).map(|(a, b)| a * b).sum();
            (value, n.backward(&cache, &weights).unwrap().0)
        };
        let coords: Vec<usize> = (0..net.params().len()).collect();
        let rep = check_gradient_coords(f, net.params(), 1e-6, &coords);
        assert!(rep.passes(1e-5), "{rep:?}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 6, 1], Output::Linear, &mut rng).unwrap();
        let f = |x: &[f64]| {
            let (y, cache) = net.forward_cached(x, 1).unwrap();
            (y[0], net.backward(&cache, &[1.0]).unwrap().1)
        };
        let rep = crate::diff::check_gradient(f, &[0.3, -0.2, 0.9], 1e-6);
        assert!(rep.passes(1e-6), "{rep:?}");
    }

    #[test]
    fn shape_errors() {
        let net = Mlp::zeros(&[3, 2], Output::Linear).unwrap();
        assert!(net.forward(&[1.0, 2.0], 1).is_err());
        assert!(Mlp::zeros(&[3], Output::Linear).is_err());
    }
}
