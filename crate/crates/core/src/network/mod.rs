//! Dense tanh body `R`, linear readout layers `L`, hyper-dual forward passes
//! and fixed-structure reverse-mode gradients.
//!
//! The full network is `NN(x) = (L ∘ R)(x)`: `R` is a stack of affine+tanh
//! layers whose final width is the basis dimension `w`, and `L` is a plain
//! linear map grouping its output columns into readouts of `solution_dim`
//! columns each. Reverse passes are hand-derived layer adjoints for the
//! supported primitive set; they treat the four hyper-dual channels as
//! ordinary intermediate values, so losses built from derivative channels
//! backpropagate exactly (including the third-derivative terms of `tanh`).

pub mod checkpoint;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperdual::HyperDualBatch;

/// Shape of the basis body `R`: affine+tanh layers sized
/// `input_dim → hidden_widths… → n_basis`. The activation is always `tanh`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkArch {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub n_basis: usize,
}

impl NetworkArch {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>, n_basis: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_widths,
            n_basis,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.n_basis == 0 {
            return Err(Error::config("network widths must be at least 1"));
        }
        if self.hidden_widths.is_empty() {
            return Err(Error::config("hidden_widths must be non-empty"));
        }
        if self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::config("network widths must be at least 1"));
        }
        Ok(())
    }

    /// Layer boundary widths: `[input_dim, hidden…, n_basis]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.n_basis);
        dims
    }

    pub fn n_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }
}

/// One affine layer: `weight` is `[out × in]`, `bias` is `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(out: usize, input: usize) -> Self {
        Self {
            weight: Array2::zeros((out, input)),
            bias: Array1::zeros(out),
        }
    }
}

/// Parameters of the basis body `R`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: NetworkArch,
    pub layers: Vec<DenseLayer>,
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_network(arch: &NetworkArch, seed: u64) -> Result<MlpParams> {
    arch.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dims = arch.layer_dims();
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Array2::from_shape_fn((fan_out, fan_in), |_| {
                (2.0 * rng.gen::<f64>() - 1.0) * limit
            });
            DenseLayer {
                weight,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Ok(MlpParams {
        arch: arch.clone(),
        layers,
    })
}

impl MlpParams {
    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.arch.input_dim {
            return Err(Error::shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Plain forward pass to the basis outputs, `[n_points × n_basis]`.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.into_basis())
    }

    /// Plain forward pass retaining per-layer pre- and post-activations for a
    /// later reverse pass.
    pub fn forward_cached(&self, x: &Array2<f64>) -> Result<PlainCache> {
        self.check_input(x)?;
        let mut z = Vec::with_capacity(self.layers.len());
        let mut a = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let pre = cur.dot(&layer.weight.t()) + &layer.bias;
            cur = pre.mapv(f64::tanh);
            z.push(pre);
            a.push(cur.clone());
        }
        Ok(PlainCache {
            input: x.clone(),
            z,
            a,
        })
    }

    /// Hyper-dual forward pass: value, the two seeded first derivatives and
    /// the mixed second derivative of every basis output in one sweep.
    pub fn forward_hd(&self, x: &Array2<f64>, i: usize, j: usize) -> Result<HyperDualBatch> {
        Ok(self.forward_hd_cached(x, i, j)?.into_basis())
    }

    /// Hyper-dual forward pass retaining per-layer channel batches.
    pub fn forward_hd_cached(&self, x: &Array2<f64>, i: usize, j: usize) -> Result<HdCache> {
        self.check_input(x)?;
        let input = HyperDualBatch::seed(x, i, j)?;
        let mut z = Vec::with_capacity(self.layers.len());
        let mut a = Vec::with_capacity(self.layers.len());
        let mut cur = input.clone();
        for layer in &self.layers {
            let pre = cur.affine(&layer.weight, &layer.bias)?;
            cur = pre.tanh();
            z.push(pre);
            a.push(cur.clone());
        }
        Ok(HdCache { input, z, a })
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weight.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }
}

/// Linear output map. `weight` is `[n_basis × n_readouts·solution_dim]` with
/// readout `i` owning the column block `[i·d, (i+1)·d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub n_readouts: usize,
    pub solution_dim: usize,
}

impl ReadoutLayer {
    pub fn zeros(n_basis: usize, n_readouts: usize, solution_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((n_basis, n_readouts * solution_dim)),
            bias: Array1::zeros(n_readouts * solution_dim),
            n_readouts,
            solution_dim,
        }
    }

    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    pub fn glorot(n_basis: usize, n_readouts: usize, solution_dim: usize, seed: u64) -> Self {
        let cols = n_readouts * solution_dim;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let limit = (6.0 / (n_basis + cols) as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((n_basis, cols), |_| {
                (2.0 * rng.gen::<f64>() - 1.0) * limit
            }),
            bias: Array1::zeros(cols),
            n_readouts,
            solution_dim,
        }
    }

    pub fn n_basis(&self) -> usize {
        self.weight.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_readouts * self.solution_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight.ncols() != self.n_outputs() || self.bias.len() != self.n_outputs() {
            return Err(Error::shape(format!(
                "readout declares {}×{} readouts but stores {} columns / {} biases",
                self.n_readouts,
                self.solution_dim,
                self.weight.ncols(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

/// Full-network forward pass: `[n_points × n_readouts·solution_dim]`.
pub fn forward(r: &MlpParams, l: &ReadoutLayer, x: &Array2<f64>) -> Result<Array2<f64>> {
    let basis = r.forward(x)?;
    apply_readout(&basis, l)
}

/// Apply the readout to plain basis values.
pub fn apply_readout(basis: &Array2<f64>, l: &ReadoutLayer) -> Result<Array2<f64>> {
    l.validate()?;
    if basis.ncols() != l.n_basis() {
        return Err(Error::shape(format!(
            "basis width {} does not match readout input {}",
            basis.ncols(),
            l.n_basis()
        )));
    }
    Ok(basis.dot(&l.weight) + &l.bias)
}

/// Apply the readout through hyper-dual channels. The bias joins the value
/// channel only: it vanishes under differentiation.
pub fn apply_readout_hd(basis: &HyperDualBatch, l: &ReadoutLayer) -> Result<HyperDualBatch> {
    l.validate()?;
    if basis.n_outputs() != l.n_basis() {
        return Err(Error::shape(format!(
            "basis width {} does not match readout input {}",
            basis.n_outputs(),
            l.n_basis()
        )));
    }
    HyperDualBatch::new(
        basis.re.dot(&l.weight) + &l.bias,
        basis.e1.dot(&l.weight),
        basis.e2.dot(&l.weight),
        basis.e12.dot(&l.weight),
    )
}

/// Stored intermediates of a plain forward pass.
#[derive(Debug, Clone)]
pub struct PlainCache {
    pub input: Array2<f64>,
    z: Vec<Array2<f64>>,
    a: Vec<Array2<f64>>,
}

impl PlainCache {
    pub fn basis(&self) -> &Array2<f64> {
        self.a.last().expect("network has at least one layer")
    }

    pub fn into_basis(mut self) -> Array2<f64> {
        self.a.pop().expect("network has at least one layer")
    }
}

/// Stored intermediates of a hyper-dual forward pass.
#[derive(Debug, Clone)]
pub struct HdCache {
    pub input: HyperDualBatch,
    z: Vec<HyperDualBatch>,
    a: Vec<HyperDualBatch>,
}

impl HdCache {
    pub fn basis(&self) -> &HyperDualBatch {
        self.a.last().expect("network has at least one layer")
    }

    pub fn into_basis(mut self) -> HyperDualBatch {
        self.a.pop().expect("network has at least one layer")
    }
}

/// Gradients shaped like [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<DenseLayer>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer::zeros(l.weight.nrows(), l.weight.ncols()))
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads) {
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weight += &src.weight;
            dst.bias += &src.bias;
        }
    }
}

/// Reverse pass through a plain forward. Returns parameter gradients and the
/// adjoint of the input batch.
pub fn backward_plain(
    r: &MlpParams,
    cache: &PlainCache,
    basis_adjoint: &Array2<f64>,
) -> (MlpGrads, Array2<f64>) {
    let mut grads = MlpGrads::zeros_like(r);
    let mut ga = basis_adjoint.clone();
    for l in (0..r.layers.len()).rev() {
        // through tanh: gz = ga ⊙ (1 − a²)
        let f1 = cache.a[l].mapv(|t| 1.0 - t * t);
        let gz = &ga * &f1;
        let below = if l == 0 { &cache.input } else { &cache.a[l - 1] };
        grads.layers[l].weight = gz.t().dot(below);
        grads.layers[l].bias = gz.sum_axis(Axis(0));
        ga = gz.dot(&r.layers[l].weight);
    }
    (grads, ga)
}

/// Reverse pass through a hyper-dual forward. `basis_adjoint` holds the
/// adjoints of the four output channels; gradients flow through `f`, `f'`
/// and `f''` of `tanh`, which brings in its third derivative.
pub fn backward_hd(
    r: &MlpParams,
    cache: &HdCache,
    basis_adjoint: &HyperDualBatch,
) -> (MlpGrads, HyperDualBatch) {
    let mut grads = MlpGrads::zeros_like(r);
    let mut ga = basis_adjoint.clone();
    for l in (0..r.layers.len()).rev() {
        let t = &cache.a[l].re;
        let z = &cache.z[l];
        let f1 = t.mapv(|v| 1.0 - v * v);
        let f2 = -2.0 * t * &f1;
        // f''' of tanh expressed in t and f1
        let f3 = -2.0 * &f1 * &f1 + 4.0 * (t * t) * &f1;

        let gz_re = &ga.re * &f1
            + &f2 * (&(&ga.e1 * &z.e1) + &(&ga.e2 * &z.e2) + &(&ga.e12 * &z.e12))
            + &ga.e12 * &f3 * &z.e1 * &z.e2;
        let gz_e1 = &ga.e1 * &f1 + &ga.e12 * &f2 * &z.e2;
        let gz_e2 = &ga.e2 * &f1 + &ga.e12 * &f2 * &z.e1;
        let gz_e12 = &ga.e12 * &f1;

        let below = if l == 0 { &cache.input } else { &cache.a[l - 1] };
        grads.layers[l].weight = gz_re.t().dot(&below.re)
            + gz_e1.t().dot(&below.e1)
            + gz_e2.t().dot(&below.e2)
            + gz_e12.t().dot(&below.e12);
        grads.layers[l].bias = gz_re.sum_axis(Axis(0));

        let w = &r.layers[l].weight;
        ga = HyperDualBatch {
            re: gz_re.dot(w),
            e1: gz_e1.dot(w),
            e2: gz_e2.dot(w),
            e12: gz_e12.dot(w),
        };
    }
    (grads, ga)
}

/// Adjoint counterpart of [`apply_readout_hd`]: given adjoints of the readout
/// output channels, accumulate readout gradients and return the basis-channel
/// adjoints.
pub fn readout_backward_hd(
    basis: &HyperDualBatch,
    l: &ReadoutLayer,
    out_adjoint: &HyperDualBatch,
    grad_weight: &mut Array2<f64>,
    grad_bias: &mut Array1<f64>,
) -> HyperDualBatch {
    *grad_weight += &(basis.re.t().dot(&out_adjoint.re)
        + basis.e1.t().dot(&out_adjoint.e1)
        + basis.e2.t().dot(&out_adjoint.e2)
        + basis.e12.t().dot(&out_adjoint.e12));
    *grad_bias += &out_adjoint.re.sum_axis(Axis(0));
    let wt = l.weight.t();
    HyperDualBatch {
        re: out_adjoint.re.dot(&wt),
        e1: out_adjoint.e1.dot(&wt),
        e2: out_adjoint.e2.dot(&wt),
        e12: out_adjoint.e12.dot(&wt),
    }
}
