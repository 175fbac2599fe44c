//! Batched forward and backward passes.
//!
//! Everything is formulated over row-major `batch x features` buffers so the
//! heavy lifting lands in GEMM kernels. The recurrence per step `t`:
//!
//! ```text
//! pre          = bias + x_t W_x^T + h_{t-1} W_h^T          (B x 4h)
//! i            = sigmoid(pre_i + peep_i . c_{t-1})
//! f            = sigmoid(pre_f + peep_f . c_{t-1})
//! g            = tanh(pre_g)
//! c_t          = f . c_{t-1} + i . g
//! o            = sigmoid(pre_o + peep_o . c_t)
//! h_t          = o . tanh(c_t)
//! ```
//!
//! The head at a step feeds `h_t` through `fc_layers` ReLU layers, each with
//! the flattened normalized input concatenated to its input (stored as a
//! separate weight block, which is the same linear map), then one linear
//! output unit. Training only evaluates the head at the final step because
//! the loss reads `f_n` alone; `forward_all` runs it at every step.

use super::{DBoxParams, LossMode, NetworkShape, NormalizedInput, Scalar, INPUT_DIM};
use crate::error::{OdmdError, Result};
use crate::generate::DepthExample;
use crate::geometry::CameraIntrinsics;
use crate::network::normalize;

/// A batch of normalized inputs, row-major `batch x 7n`.
#[derive(Debug, Clone)]
pub struct BatchInput<F: Scalar> {
    pub batch: usize,
    pub n: usize,
    pub x: Vec<F>,
}

impl<F: Scalar> BatchInput<F> {
    pub fn from_normalized(inputs: &[NormalizedInput], shape: NetworkShape) -> Result<Self> {
        if inputs.is_empty() {
            return Err(OdmdError::contract("empty batch"));
        }
        let x_dim = shape.x_dim();
        let mut x = Vec::with_capacity(inputs.len() * x_dim);
        for ni in inputs {
            if ni.n != shape.n {
                return Err(OdmdError::contract(format!(
                    "input has n={}, network expects n={}",
                    ni.n, shape.n
                )));
            }
            x.extend(ni.data.iter().map(|&v| F::from_f64(v)));
        }
        Ok(BatchInput {
            batch: inputs.len(),
            n: shape.n,
            x,
        })
    }
}

/// A batch ready for loss/backward: inputs, per-example targets in the units
/// of the loss mode, and the scales that map predictions back to meters.
/// `skipped` lists input indices dropped because `Rel` normalization was
/// degenerate.
#[derive(Debug, Clone)]
pub struct PreparedBatch<F: Scalar> {
    pub input: BatchInput<F>,
    pub targets: Vec<F>,
    pub scales: Vec<f64>,
    pub labels: Vec<f64>,
    pub mode: LossMode,
    pub skipped: Vec<usize>,
}

impl<F: Scalar> PreparedBatch<F> {
    pub fn new(
        examples: &[DepthExample],
        k: &CameraIntrinsics,
        mode: LossMode,
        shape: NetworkShape,
    ) -> Result<Self> {
        let mut normalized = Vec::with_capacity(examples.len());
        let mut targets = Vec::with_capacity(examples.len());
        let mut scales = Vec::with_capacity(examples.len());
        let mut labels = Vec::with_capacity(examples.len());
        let mut skipped = Vec::new();
        for (i, ex) in examples.iter().enumerate() {
            match normalize(&ex.obs, k, mode) {
                Ok(ni) => {
                    targets.push(F::from_f64(ex.label_z / ni.scale));
                    scales.push(ni.scale);
                    labels.push(ex.label_z);
                    normalized.push(ni);
                }
                Err(_) => skipped.push(i),
            }
        }
        if normalized.is_empty() {
            return Err(OdmdError::degenerate(
                "every example in the batch failed normalization",
                0.0,
            ));
        }
        Ok(PreparedBatch {
            input: BatchInput::from_normalized(&normalized, shape)?,
            targets,
            scales,
            labels,
            mode,
            skipped,
        })
    }
}

// ---------------------------------------------------------------------------
// GEMM wrappers (row-major)

/// `c[m x n] = alpha a b^T + beta c` where `a` is `m x k` with row stride
/// `rsa` and `b` is `n x k` contiguous row-major (used transposed).
#[allow(clippy::too_many_arguments)]
fn matmul_nt<F: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    alpha: F,
    a: &[F],
    rsa: usize,
    b: &[F],
    beta: F,
    c: &mut [F],
) {
    debug_assert!(m == 0 || a.len() >= (m - 1) * rsa + k);
    debug_assert!(b.len() >= n * k);
    debug_assert!(c.len() >= m * n);
    unsafe {
        F::gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m x n] = alpha a b + beta c` with contiguous row-major operands.
#[allow(clippy::too_many_arguments)]
fn matmul_nn<F: Scalar>(m: usize, k: usize, n: usize, alpha: F, a: &[F], b: &[F], beta: F, c: &mut [F]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        F::gemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c[m x n] += a^T b` where `a` is `k x m` contiguous (used transposed) and
/// `b` is `k x n` with row stride `rsb`.
#[allow(clippy::too_many_arguments)]
fn matmul_tn_acc<F: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[F],
    b: &[F],
    rsb: usize,
    c: &mut [F],
) {
    debug_assert!(a.len() >= k * m);
    debug_assert!(k == 0 || b.len() >= (k - 1) * rsb + n);
    debug_assert!(c.len() >= m * n);
    unsafe {
        F::gemm(
            m,
            k,
            n,
            F::one(),
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            rsb as isize,
            1,
            F::one(),
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

// ---------------------------------------------------------------------------
// Parameter views

struct View<'a, F: Scalar> {
    shape: NetworkShape,
    w_x: &'a [F],
    w_h: &'a [F],
    bias: &'a [F],
    peep_i: &'a [F],
    peep_f: &'a [F],
    peep_o: &'a [F],
    fc_w_in: Vec<&'a [F]>,
    fc_w_ctx: Vec<&'a [F]>,
    fc_bias: Vec<&'a [F]>,
    head_w: &'a [F],
    head_bias: F,
}

impl<'a, F: Scalar> View<'a, F> {
    fn new(p: &'a DBoxParams<F>) -> Self {
        let shape = p.shape();
        let mut rest = p.flat();
        let mut take = |len: usize| {
            let (a, b) = rest.split_at(len);
            rest = b;
            a
        };
        let h = shape.hidden;
        let fc = shape.fc_width;
        let x_dim = shape.x_dim();
        let w_x = take(4 * h * INPUT_DIM);
        let w_h = take(4 * h * h);
        let bias = take(4 * h);
        let peep_i = take(h);
        let peep_f = take(h);
        let peep_o = take(h);
        let mut fc_w_in = Vec::with_capacity(shape.fc_layers);
        let mut fc_w_ctx = Vec::with_capacity(shape.fc_layers);
        let mut fc_bias = Vec::with_capacity(shape.fc_layers);
        for j in 0..shape.fc_layers {
            let in_main = if j == 0 { h } else { fc };
            fc_w_in.push(take(fc * in_main));
            fc_w_ctx.push(take(fc * x_dim));
            fc_bias.push(take(fc));
        }
        let head_w = take(fc);
        let head_bias = take(1)[0];
        debug_assert!(rest.is_empty());
        View {
            shape,
            w_x,
            w_h,
            bias,
            peep_i,
            peep_f,
            peep_o,
            fc_w_in,
            fc_w_ctx,
            fc_bias,
            head_w,
            head_bias,
        }
    }
}

struct ViewMut<'a, F: Scalar> {
    w_x: &'a mut [F],
    w_h: &'a mut [F],
    bias: &'a mut [F],
    peep_i: &'a mut [F],
    peep_f: &'a mut [F],
    peep_o: &'a mut [F],
    fc_w_in: Vec<&'a mut [F]>,
    fc_w_ctx: Vec<&'a mut [F]>,
    fc_bias: Vec<&'a mut [F]>,
    head_w: &'a mut [F],
    head_bias: &'a mut [F],
}

fn take_mut<'a, F>(rest: &mut &'a mut [F], len: usize) -> &'a mut [F] {
    let (a, b) = std::mem::take(rest).split_at_mut(len);
    *rest = b;
    a
}

impl<'a, F: Scalar> ViewMut<'a, F> {
    fn new(p: &'a mut DBoxParams<F>) -> Self {
        let shape = p.shape();
        let h = shape.hidden;
        let fc = shape.fc_width;
        let x_dim = shape.x_dim();
        let mut rest = p.flat_mut();
        let w_x = take_mut(&mut rest, 4 * h * INPUT_DIM);
        let w_h = take_mut(&mut rest, 4 * h * h);
        let bias = take_mut(&mut rest, 4 * h);
        let peep_i = take_mut(&mut rest, h);
        let peep_f = take_mut(&mut rest, h);
        let peep_o = take_mut(&mut rest, h);
        let mut fc_w_in = Vec::with_capacity(shape.fc_layers);
        let mut fc_w_ctx = Vec::with_capacity(shape.fc_layers);
        let mut fc_bias = Vec::with_capacity(shape.fc_layers);
        for j in 0..shape.fc_layers {
            let in_main = if j == 0 { h } else { fc };
            fc_w_in.push(take_mut(&mut rest, fc * in_main));
            fc_w_ctx.push(take_mut(&mut rest, fc * x_dim));
            fc_bias.push(take_mut(&mut rest, fc));
        }
        let head_w = take_mut(&mut rest, fc);
        let head_bias = take_mut(&mut rest, 1);
        debug_assert!(rest.is_empty());
        ViewMut {
            w_x,
            w_h,
            bias,
            peep_i,
            peep_f,
            peep_o,
            fc_w_in,
            fc_w_ctx,
            fc_bias,
            head_w,
            head_bias,
        }
    }
}

// ---------------------------------------------------------------------------
// Forward

struct StepCache<F> {
    /// Gate activations, `B x 4h`, blocks (i, f, g, o).
    gates: Vec<F>,
    c: Vec<F>,
    tanh_c: Vec<F>,
    h: Vec<F>,
}

#[allow(clippy::too_many_arguments)]
fn lstm_step<F: Scalar>(
    view: &View<'_, F>,
    x: &[F],
    x_offset: usize,
    x_stride: usize,
    h_prev: &[F],
    c_prev: &[F],
    batch: usize,
    first_step: bool,
) -> StepCache<F> {
    let h = view.shape.hidden;
    let mut pre = vec![F::zero(); batch * 4 * h];
    for row in pre.chunks_exact_mut(4 * h) {
        row.copy_from_slice(view.bias);
    }
    matmul_nt(
        batch,
        INPUT_DIM,
        4 * h,
        F::one(),
        &x[x_offset..],
        x_stride,
        view.w_x,
        F::one(),
        &mut pre,
    );
    if !first_step {
        matmul_nt(batch, h, 4 * h, F::one(), h_prev, h, view.w_h, F::one(), &mut pre);
    }

    let mut c = vec![F::zero(); batch * h];
    let mut tanh_c = vec![F::zero(); batch * h];
    let mut h_out = vec![F::zero(); batch * h];
    for (((row, cp), (c_row, t_row)), h_row) in pre
        .chunks_exact_mut(4 * h)
        .zip(c_prev.chunks_exact(h))
        .zip(c.chunks_exact_mut(h).zip(tanh_c.chunks_exact_mut(h)))
        .zip(h_out.chunks_exact_mut(h))
    {
        let (i_blk, rest) = row.split_at_mut(h);
        let (f_blk, rest) = rest.split_at_mut(h);
        let (g_blk, o_blk) = rest.split_at_mut(h);
        for g in 0..h {
            let i_act = sigmoid(i_blk[g] + view.peep_i[g] * cp[g]);
            let f_act = sigmoid(f_blk[g] + view.peep_f[g] * cp[g]);
            let g_act = g_blk[g].tanh();
            let c_new = f_act * cp[g] + i_act * g_act;
            let o_act = sigmoid(o_blk[g] + view.peep_o[g] * c_new);
            let t = c_new.tanh();
            i_blk[g] = i_act;
            f_blk[g] = f_act;
            g_blk[g] = g_act;
            o_blk[g] = o_act;
            c_row[g] = c_new;
            t_row[g] = t;
            h_row[g] = o_act * t;
        }
    }
    StepCache {
        gates: pre,
        c,
        tanh_c,
        h: h_out,
    }
}

/// Head forward at one step. Returns the ReLU outputs of every layer plus the
/// scalar outputs.
fn head_forward<F: Scalar>(
    view: &View<'_, F>,
    h_t: &[F],
    input: &BatchInput<F>,
) -> (Vec<Vec<F>>, Vec<F>) {
    let shape = view.shape;
    let batch = input.batch;
    let fc = shape.fc_width;
    let x_dim = shape.x_dim();
    let mut activations: Vec<Vec<F>> = Vec::with_capacity(shape.fc_layers);
    for j in 0..shape.fc_layers {
        let mut y = vec![F::zero(); batch * fc];
        for row in y.chunks_exact_mut(fc) {
            row.copy_from_slice(view.fc_bias[j]);
        }
        let (prev, in_main): (&[F], usize) = if j == 0 {
            (h_t, shape.hidden)
        } else {
            (&activations[j - 1], fc)
        };
        matmul_nt(batch, in_main, fc, F::one(), prev, in_main, view.fc_w_in[j], F::one(), &mut y);
        matmul_nt(batch, x_dim, fc, F::one(), &input.x, x_dim, view.fc_w_ctx[j], F::one(), &mut y);
        for v in &mut y {
            if *v < F::zero() {
                *v = F::zero();
            }
        }
        activations.push(y);
    }
    let last = &activations[shape.fc_layers - 1];
    let mut f = vec![view.head_bias; batch];
    for b in 0..batch {
        let row = &last[b * fc..(b + 1) * fc];
        let mut acc = F::zero();
        for (w, u) in view.head_w.iter().zip(row) {
            acc = acc + *w * *u;
        }
        f[b] = f[b] + acc;
    }
    (activations, f)
}

fn run_lstm<F: Scalar>(view: &View<'_, F>, input: &BatchInput<F>) -> Vec<StepCache<F>> {
    let shape = view.shape;
    let batch = input.batch;
    let h = shape.hidden;
    let x_dim = shape.x_dim();
    let zeros = vec![F::zero(); batch * h];
    let mut steps: Vec<StepCache<F>> = Vec::with_capacity(shape.n);
    for t in 0..shape.n {
        let (h_prev, c_prev) = match steps.last() {
            Some(prev) => (&prev.h[..], &prev.c[..]),
            None => (&zeros[..], &zeros[..]),
        };
        steps.push(lstm_step(
            view,
            &input.x,
            t * INPUT_DIM,
            x_dim,
            h_prev,
            c_prev,
            batch,
            t == 0,
        ));
    }
    steps
}

fn check_input<F: Scalar>(params: &DBoxParams<F>, input: &BatchInput<F>) -> Result<()> {
    let shape = params.shape();
    if input.n != shape.n {
        return Err(OdmdError::contract(format!(
            "input n={} does not match network n={}",
            input.n, shape.n
        )));
    }
    if input.x.len() != input.batch * shape.x_dim() || input.batch == 0 {
        return Err(OdmdError::contract("batch buffer size mismatch"));
    }
    Ok(())
}

/// Per-step outputs `f_1 .. f_n` for every example, row-major `batch x n`.
/// The depth prediction is the final column.
pub fn forward_all<F: Scalar>(params: &DBoxParams<F>, input: &BatchInput<F>) -> Result<Vec<F>> {
    check_input(params, input)?;
    let view = View::new(params);
    let steps = run_lstm(&view, input);
    let mut out = vec![F::zero(); input.batch * input.n];
    for (t, step) in steps.iter().enumerate() {
        let (_, f) = head_forward(&view, &step.h, input);
        for b in 0..input.batch {
            out[b * input.n + t] = f[b];
        }
    }
    Ok(out)
}

/// Final-step outputs only (the quantity the loss reads); one value per
/// example. Panics never; shape errors were rejected by `BatchInput`.
pub fn forward_last<F: Scalar>(params: &DBoxParams<F>, input: &BatchInput<F>) -> Vec<F> {
    check_input(params, input).expect("batch built for a different shape");
    let view = View::new(params);
    let steps = run_lstm(&view, input);
    let (_, f) = head_forward(&view, &steps[steps.len() - 1].h, input);
    f
}

/// Mean squared residual over the batch plus the per-example residuals
/// `target - f_n`.
pub fn loss<F: Scalar>(params: &DBoxParams<F>, batch: &PreparedBatch<F>) -> (f64, Vec<F>) {
    let f = forward_last(params, &batch.input);
    let residuals: Vec<F> = batch
        .targets
        .iter()
        .zip(&f)
        .map(|(t, y)| *t - *y)
        .collect();
    let sum: f64 = residuals.iter().map(|r| r.as_f64() * r.as_f64()).sum();
    (sum / residuals.len() as f64, residuals)
}

/// Gradient of the mean squared residual with respect to every parameter,
/// computed by backpropagation through time. Returns `(loss, grads)`.
pub fn backward<F: Scalar>(
    params: &DBoxParams<F>,
    batch: &PreparedBatch<F>,
) -> (f64, DBoxParams<F>) {
    let view = View::new(params);
    let shape = view.shape;
    let batch_n = batch.input.batch;
    let h = shape.hidden;
    let fc = shape.fc_width;
    let x_dim = shape.x_dim();

    let steps = run_lstm(&view, &batch.input);
    let final_h = &steps[shape.n - 1].h;
    let (head_acts, f) = head_forward(&view, final_h, &batch.input);

    let residuals: Vec<F> = batch
        .targets
        .iter()
        .zip(&f)
        .map(|(t, y)| *t - *y)
        .collect();
    let loss_val: f64 =
        residuals.iter().map(|r| r.as_f64() * r.as_f64()).sum::<f64>() / batch_n as f64;

    let mut grads = DBoxParams::zeros(shape);
    let mut g = ViewMut::new(&mut grads);

    // d(mean loss) / d f_b = -2 r_b / B.
    let inv_b = F::from_f64(1.0 / batch_n as f64);
    let df: Vec<F> = residuals
        .iter()
        .map(|r| -(F::one() + F::one()) * *r * inv_b)
        .collect();

    // Head backward at the final step.
    let last_act = &head_acts[shape.fc_layers - 1];
    for b in 0..batch_n {
        g.head_bias[0] = g.head_bias[0] + df[b];
        let row = &last_act[b * fc..(b + 1) * fc];
        for (wg, u) in g.head_w.iter_mut().zip(row) {
            *wg = *wg + df[b] * *u;
        }
    }
    // du through the output unit.
    let mut du = vec![F::zero(); batch_n * fc];
    for b in 0..batch_n {
        let row = &mut du[b * fc..(b + 1) * fc];
        for (d, w) in row.iter_mut().zip(view.head_w) {
            *d = df[b] * *w;
        }
    }

    let mut dh = vec![F::zero(); batch_n * h];
    for j in (0..shape.fc_layers).rev() {
        // ReLU gate: the cached activation is max(0, pre).
        let act = &head_acts[j];
        for (d, a) in du.iter_mut().zip(act) {
            if *a <= F::zero() {
                *d = F::zero();
            }
        }
        let (prev, in_main): (&[F], usize) = if j == 0 {
            (&final_h[..], h)
        } else {
            (&head_acts[j - 1], fc)
        };
        matmul_tn_acc(fc, batch_n, in_main, &du, prev, in_main, g.fc_w_in[j]);
        matmul_tn_acc(fc, batch_n, x_dim, &du, &batch.input.x, x_dim, g.fc_w_ctx[j]);
        for b in 0..batch_n {
            let row = &du[b * fc..(b + 1) * fc];
            for (bg, d) in g.fc_bias[j].iter_mut().zip(row) {
                *bg = *bg + *d;
            }
        }
        if j == 0 {
            matmul_nn(batch_n, fc, h, F::one(), &du, view.fc_w_in[0], F::zero(), &mut dh);
        } else {
            let mut next = vec![F::zero(); batch_n * fc];
            matmul_nn(batch_n, fc, fc, F::one(), &du, view.fc_w_in[j], F::zero(), &mut next);
            du = next;
        }
    }

    // Backpropagation through time.
    let zeros = vec![F::zero(); batch_n * h];
    let mut dc_carry = vec![F::zero(); batch_n * h];
    let mut dgates = vec![F::zero(); batch_n * 4 * h];
    for t in (0..shape.n).rev() {
        let step = &steps[t];
        let c_prev: &[F] = if t == 0 { &zeros } else { &steps[t - 1].c };
        for b in 0..batch_n {
            let gates = &step.gates[b * 4 * h..(b + 1) * 4 * h];
            let dg_row = &mut dgates[b * 4 * h..(b + 1) * 4 * h];
            for gi in 0..h {
                let idx = b * h + gi;
                let (i_act, f_act, g_act, o_act) =
                    (gates[gi], gates[h + gi], gates[2 * h + gi], gates[3 * h + gi]);
                let tanh_c = step.tanh_c[idx];
                let dh_v = dh[idx];

                let do_pre = dh_v * tanh_c * o_act * (F::one() - o_act);
                let mut dc = dc_carry[idx]
                    + dh_v * o_act * (F::one() - tanh_c * tanh_c)
                    + do_pre * view.peep_o[gi];
                let di_pre = dc * g_act * i_act * (F::one() - i_act);
                let df_pre = dc * c_prev[idx] * f_act * (F::one() - f_act);
                let dg_pre = dc * i_act * (F::one() - g_act * g_act);

                dg_row[gi] = di_pre;
                dg_row[h + gi] = df_pre;
                dg_row[2 * h + gi] = dg_pre;
                dg_row[3 * h + gi] = do_pre;

                g.peep_i[gi] = g.peep_i[gi] + di_pre * c_prev[idx];
                g.peep_f[gi] = g.peep_f[gi] + df_pre * c_prev[idx];
                g.peep_o[gi] = g.peep_o[gi] + do_pre * step.c[idx];

                dc = dc * f_act + di_pre * view.peep_i[gi] + df_pre * view.peep_f[gi];
                dc_carry[idx] = dc;
            }
        }

        for b in 0..batch_n {
            let dg_row = &dgates[b * 4 * h..(b + 1) * 4 * h];
            for (bg, d) in g.bias.iter_mut().zip(dg_row) {
                *bg = *bg + *d;
            }
        }
        matmul_tn_acc(
            4 * h,
            batch_n,
            INPUT_DIM,
            &dgates,
            &batch.input.x[t * INPUT_DIM..],
            x_dim,
            g.w_x,
        );
        if t > 0 {
            matmul_tn_acc(4 * h, batch_n, h, &dgates, &steps[t - 1].h, h, g.w_h);
            matmul_nn(batch_n, 4 * h, h, F::one(), &dgates, view.w_h, F::zero(), &mut dh);
        }
    }

    (loss_val, grads)
}
