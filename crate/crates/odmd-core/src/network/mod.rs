//! Recurrent depth regressor: a peephole LSTM whose per-step outputs feed a
//! fully-connected head conditioned on the whole normalized input.
//!
//! Parameters live in one flat buffer described by a tensor registry, which
//! keeps the optimizer, the checkpoint format, and the finite-difference
//! gradient check all working over the same representation. The scalar type
//! is generic: training runs in `f32`, gradient checks instantiate `f64`.

mod backprop;
mod checkpoint;
mod normalize;

pub use backprop::{backward, forward_all, forward_last, loss, BatchInput, PreparedBatch};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use normalize::{normalize, NormalizedInput, EPS_MOVEMENT_RANGE};

use serde::{Deserialize, Serialize};

use crate::error::{OdmdError, Result};
use crate::generate::DepthExample;
use crate::geometry::{CameraIntrinsics, ObservationSet};
use crate::rng::StreamRng;

/// Which quantity the network predicts and is trained against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Depth divided by the overall camera movement range; dimensionless
    /// inputs and output.
    Rel,
    /// Absolute depth in meters; positions stay metric (relative to the
    /// final position).
    Abs,
}

/// Network dimensions, fixed at construction. The fully-connected layers
/// consume the flattened normalized input, so `n` is baked into the shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    /// Observations per example.
    pub n: usize,
    /// LSTM hidden/cell size.
    pub hidden: usize,
    /// Width of each fully-connected layer.
    pub fc_width: usize,
    /// Number of fully-connected layers between the LSTM and the output unit.
    pub fc_layers: usize,
}

/// Features per observation: box center, box size, camera position.
pub const INPUT_DIM: usize = 7;

impl NetworkShape {
    /// The reference DBox architecture: hidden 128, six 256-wide layers.
    pub fn dbox(n: usize) -> Self {
        NetworkShape {
            n,
            hidden: 128,
            fc_width: 256,
            fc_layers: 6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.hidden == 0 || self.fc_width == 0 || self.fc_layers == 0 {
            return Err(OdmdError::contract(format!("invalid network shape {self:?}")));
        }
        Ok(())
    }

    /// Flattened normalized-input length `7 n`.
    pub fn x_dim(&self) -> usize {
        INPUT_DIM * self.n
    }

    /// Tensor registry in storage order.
    pub fn tensors(&self) -> Vec<TensorInfo> {
        let h = self.hidden;
        let fc = self.fc_width;
        let x_dim = self.x_dim();
        let mut out = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: String, dims: Vec<usize>, fan: (usize, usize)| {
            let len: usize = dims.iter().product();
            out.push(TensorInfo {
                name,
                dims,
                offset,
                init_fan: fan,
            });
            offset += len;
        };

        push("lstm.w_x".into(), vec![4 * h, INPUT_DIM], (INPUT_DIM, 4 * h));
        push("lstm.w_h".into(), vec![4 * h, h], (h, 4 * h));
        push("lstm.bias".into(), vec![4 * h], (0, 0));
        push("lstm.peep_i".into(), vec![h], (0, 0));
        push("lstm.peep_f".into(), vec![h], (0, 0));
        push("lstm.peep_o".into(), vec![h], (0, 0));
        for j in 0..self.fc_layers {
            let in_main = if j == 0 { h } else { fc };
            // Both blocks of a layer share the fan of the full concatenated
            // weight matrix.
            let fan = (in_main + x_dim, fc);
            push(format!("fc{j}.w_in"), vec![fc, in_main], fan);
            push(format!("fc{j}.w_ctx"), vec![fc, x_dim], fan);
            push(format!("fc{j}.bias"), vec![fc], (0, 0));
        }
        push("head.w".into(), vec![1, fc], (fc, 1));
        push("head.bias".into(), vec![1], (0, 0));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors()
            .iter()
            .map(|t| t.dims.iter().product::<usize>())
            .sum()
    }
}

/// One named tensor inside the flat parameter buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
    /// (fan_in, fan_out) for weight init; (0, 0) marks biases and peepholes.
    pub init_fan: (usize, usize),
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scalar type the network runs in. `f32` for training, `f64` for gradient
/// checks.
pub trait Scalar:
    num_traits::Float + Send + Sync + std::fmt::Debug + std::fmt::Display + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C := alpha * A B + beta * C` with explicit strides, delegating to the
    /// matrixmultiply kernels.
    ///
    /// # Safety
    ///
    /// Every element addressed by the stride patterns (`base + i*rs + j*cs`
    /// for the full index ranges) must be in bounds, and `c` must not alias
    /// `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }

    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Flat parameter (or gradient) storage for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct DBoxParams<F: Scalar> {
    shape: NetworkShape,
    data: Vec<F>,
}

impl<F: Scalar> DBoxParams<F> {
    /// All-zero parameters.
    pub fn zeros(shape: NetworkShape) -> Self {
        DBoxParams {
            shape,
            data: vec![F::zero(); shape.param_count()],
        }
    }

    /// Seeded initialization: weights uniform in
    /// `±sqrt(6 / (fan_in + fan_out))` per matrix, biases zero except the
    /// forget-gate block at 1, peepholes zero.
    pub fn init(shape: NetworkShape, seed: u64) -> Self {
        let mut params = DBoxParams::zeros(shape);
        let mut rng = StreamRng::new(seed);
        for t in shape.tensors() {
            let (fan_in, fan_out) = t.init_fan;
            if fan_in == 0 {
                continue;
            }
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut params.data[t.offset..t.offset + t.len()] {
                *v = F::from_f64(rng.uniform(-bound, bound));
            }
        }
        // Forget-gate bias block starts stable.
        let h = shape.hidden;
        let bias = params.tensor_offset("lstm.bias");
        for v in &mut params.data[bias + h..bias + 2 * h] {
            *v = F::one();
        }
        params
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn flat(&self) -> &[F] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub(crate) fn tensor_offset(&self, name: &str) -> usize {
        self.shape
            .tensors()
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.offset)
            .unwrap_or_else(|| panic!("unknown tensor {name}"))
    }

    pub fn tensor(&self, name: &str) -> &[F] {
        let info = self
            .shape
            .tensors()
            .into_iter()
            .find(|t| t.name == name)
            .unwrap_or_else(|| panic!("unknown tensor {name}"));
        &self.data[info.offset..info.offset + info.len()]
    }

    /// Cast to another scalar type (used to widen f32 checkpoints for f64
    /// diagnostics and to narrow for saving).
    pub fn cast<G: Scalar>(&self) -> DBoxParams<G> {
        DBoxParams {
            shape: self.shape,
            data: self.data.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }

    /// `self += other`, used for ordered gradient accumulation.
    pub fn add_assign(&mut self, other: &DBoxParams<F>) -> Result<()> {
        if self.shape != other.shape {
            return Err(OdmdError::contract("parameter shapes differ"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + *b;
        }
        Ok(())
    }

    /// `self += w * other`, used for ordered weighted gradient accumulation.
    pub fn add_scaled(&mut self, other: &DBoxParams<F>, w: F) -> Result<()> {
        if self.shape != other.shape {
            return Err(OdmdError::contract("parameter shapes differ"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + w * *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: F) {
        for v in &mut self.data {
            *v = *v * s;
        }
    }
}

/// Depth prediction for one observation set: normalize, run the network,
/// undo the normalization (`Rel` multiplies the dimensionless output by the
/// movement range).
pub fn predict_depth<F: Scalar>(
    params: &DBoxParams<F>,
    obs: &ObservationSet,
    k: &CameraIntrinsics,
    mode: LossMode,
) -> Result<f64> {
    let ni = normalize(obs, k, mode)?;
    let input = BatchInput::from_normalized(std::slice::from_ref(&ni), params.shape())?;
    let f = forward_last(params, &input)[0].as_f64();
    Ok(match mode {
        LossMode::Rel => f * ni.scale,
        LossMode::Abs => f,
    })
}

/// Batched prediction. Per-example failures (degenerate movement range in
/// `Rel` mode) are reported individually; the rest run as one batch.
pub fn predict_depth_batch<F: Scalar>(
    params: &DBoxParams<F>,
    examples: &[DepthExample],
    k: &CameraIntrinsics,
    mode: LossMode,
) -> Vec<Result<f64>> {
    let normalized: Vec<Result<NormalizedInput>> = examples
        .iter()
        .map(|e| normalize(&e.obs, k, mode))
        .collect();
    let good: Vec<&NormalizedInput> = normalized.iter().filter_map(|r| r.as_ref().ok()).collect();

    let mut outputs = Vec::new();
    if !good.is_empty() {
        let owned: Vec<NormalizedInput> = good.iter().map(|&ni| ni.clone()).collect();
        match BatchInput::from_normalized(&owned, params.shape()) {
            Ok(input) => outputs = forward_last(params, &input),
            Err(e) => return examples.iter().map(|_| Err(clone_err(&e))).collect(),
        }
    }

    let mut out_iter = outputs.into_iter();
    normalized
        .into_iter()
        .map(|r| {
            r.map(|ni| {
                let f = out_iter.next().expect("one output per prepared input").as_f64();
                match mode {
                    LossMode::Rel => f * ni.scale,
                    LossMode::Abs => f,
                }
            })
        })
        .collect()
}

fn clone_err(e: &OdmdError) -> OdmdError {
    OdmdError::contract(e.to_string())
}
