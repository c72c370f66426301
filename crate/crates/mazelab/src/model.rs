//! Tiny decoder-only transformer with exact hand-written reverse-mode
//! gradients, per-layer residual capture, and additive steering.
//!
//! Blocks are pre-norm: `x += attn(ln1(x)); x += mlp(ln2(x))`. The residual
//! stream "at layer l" always means the output of block `l`, after both
//! residual adds; that is where activations are captured and where steering
//! vectors are injected. Compute is generic over `f32`/`f64`: training runs
//! in `f32`, gradient checks and analyses in `f64`.

use std::io::{Read, Write};
use std::path::Path;

use num_traits::Float;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};

/// Scalar type the network computes in.
pub trait Scalar:
    Float + num_traits::NumAssign + std::fmt::Debug + Copy + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub context_len: usize,
    pub vocab_size: usize,
    /// Weight init is Gaussian with std `init_scale / sqrt(d_model)`.
    pub init_scale: f64,
    pub tied_unembedding: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 4,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            context_len: 512,
            vocab_size: crate::codec::VOCAB_SIZE,
            init_scale: 0.1,
            tied_unembedding: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(ModelError::BadConfig(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.d_ff == 0 || self.vocab_size == 0 || self.context_len == 0 {
            return Err(ModelError::BadConfig("all dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("sequence length {0} exceeds context length {1}")]
    ContextExceeded(usize, usize),
    #[error("steering vector dimension {0} does not match d_model {1}")]
    SteerDimMismatch(usize, usize),
    #[error("steering layer {0} out of range (n_layers {1})")]
    SteerLayerOutOfRange(usize, usize),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// Row-major matrix of `rows x cols` scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Mat<T> {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // Four independent accumulators so the reduction vectorizes.
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// y[n x out] = x[n x in] * W^T + b, with W stored (out x in).
fn linear<T: Scalar>(x: &Mat<T>, w: &Mat<T>, b: &[T], y: &mut Mat<T>) {
    for i in 0..x.rows {
        let xi = x.row(i);
        let yi = y.row_mut(i);
        for o in 0..w.rows {
            yi[o] = b[o] + dot(xi, w.row(o));
        }
    }
}

/// Accumulates gradients for `linear`: dW += dy^T x, db += dy, dx += dy W.
fn linear_backward<T: Scalar>(
    x: &Mat<T>,
    w: &Mat<T>,
    dy: &Mat<T>,
    dw: &mut Mat<T>,
    db: &mut [T],
    dx: &mut Mat<T>,
) {
    for i in 0..x.rows {
        let dyi = dy.row(i);
        let xi = x.row(i);
        for o in 0..w.rows {
            let g = dyi[o];
            if g != T::zero() {
                axpy(g, xi, dw.row_mut(o));
                db[o] += g;
                axpy(g, w.row(o), dx.row_mut(i));
            }
        }
    }
}

const LN_EPS: f64 = 1e-5;

struct LnTape<T> {
    /// normalized (pre-gain) values, n x d
    xhat: Mat<T>,
    rstd: Vec<T>,
}

fn layer_norm<T: Scalar>(x: &Mat<T>, gain: &[T], bias: &[T], y: &mut Mat<T>) -> LnTape<T> {
    let d = x.cols;
    let mut xhat = Mat::zeros(x.rows, d);
    let mut rstd = vec![T::zero(); x.rows];
    let dinv = T::from_f64(1.0 / d as f64);
    for i in 0..x.rows {
        let xi = x.row(i);
        let mut mean = T::zero();
        for &v in xi {
            mean += v;
        }
        mean *= dinv;
        let mut var = T::zero();
        for &v in xi {
            let c = v - mean;
            var += c * c;
        }
        var *= dinv;
        let r = (var + T::from_f64(LN_EPS)).sqrt().recip();
        rstd[i] = r;
        let xh = xhat.row_mut(i);
        let yi = y.row_mut(i);
        for j in 0..d {
            xh[j] = (xi[j] - mean) * r;
            yi[j] = xh[j] * gain[j] + bias[j];
        }
    }
    LnTape { xhat, rstd }
}

fn layer_norm_backward<T: Scalar>(
    tape: &LnTape<T>,
    gain: &[T],
    dy: &Mat<T>,
    dgain: &mut [T],
    dbias: &mut [T],
    dx: &mut Mat<T>,
) {
    let d = tape.xhat.cols;
    let dinv = T::from_f64(1.0 / d as f64);
    for i in 0..dy.rows {
        let dyi = dy.row(i);
        let xh = tape.xhat.row(i);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for j in 0..d {
            let g = dyi[j] * gain[j];
            sum_g += g;
            sum_gx += g * xh[j];
            dgain[j] += dyi[j] * xh[j];
            dbias[j] += dyi[j];
        }
        sum_g *= dinv;
        sum_gx *= dinv;
        let r = tape.rstd[i];
        let dxi = dx.row_mut(i);
        for j in 0..d {
            let g = dyi[j] * gain[j];
            dxi[j] += r * (g - sum_g - xh[j] * sum_gx);
        }
    }
}

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654); // sqrt(2/pi)
    let a = T::from_f64(0.044715);
    let u = c * (x + a * x * x * x);
    T::from_f64(0.5) * x * (T::one() + u.tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.7978845608028654);
    let a = T::from_f64(0.044715);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::from_f64(3.0) * a * x * x);
    T::from_f64(0.5) * (T::one() + t) + T::from_f64(0.5) * x * (T::one() - t * t) * du
}

#[derive(Debug, Clone)]
pub struct BlockParams<T> {
    pub ln1_g: Vec<T>,
    pub ln1_b: Vec<T>,
    pub wq: Mat<T>,
    pub bq: Vec<T>,
    pub wk: Mat<T>,
    pub bk: Vec<T>,
    pub wv: Mat<T>,
    pub bv: Vec<T>,
    pub wo: Mat<T>,
    pub bo: Vec<T>,
    pub ln2_g: Vec<T>,
    pub ln2_b: Vec<T>,
    pub w1: Mat<T>,
    pub b1: Vec<T>,
    pub w2: Mat<T>,
    pub b2: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct PolicyModel<T> {
    pub config: ModelConfig,
    pub tok_emb: Mat<T>,
    pub pos_emb: Mat<T>,
    pub blocks: Vec<BlockParams<T>>,
    pub lnf_g: Vec<T>,
    pub lnf_b: Vec<T>,
    /// None when tied to `tok_emb`.
    pub unembed: Option<Mat<T>>,
}

/// Per-layer residual-stream vectors captured at requested positions,
/// always in f64 for analysis.
#[derive(Debug, Clone)]
pub struct ActivationCache {
    pub positions: Vec<usize>,
    /// `residual[layer][k]` is the d_model vector at `positions[k]`.
    pub residual: Vec<Vec<Vec<f64>>>,
}

impl ActivationCache {
    fn empty(n_layers: usize) -> ActivationCache {
        ActivationCache {
            positions: Vec::new(),
            residual: vec![Vec::new(); n_layers],
        }
    }

    /// The captured vector at (layer, position-index k).
    pub fn at(&self, layer: usize, k: usize) -> &[f64] {
        &self.residual[layer][k]
    }
}

/// Additive steering request: `factor * vector` is added to the residual
/// stream at the output of block `layer` at each listed position.
#[derive(Debug, Clone)]
pub struct Steering<'a, T> {
    pub vector: &'a [T],
    pub layer: usize,
    pub factor: T,
    pub positions: &'a [usize],
}

struct BlockTape<T> {
    ln1: LnTape<T>,
    ln1_out: Mat<T>,
    q: Mat<T>,
    k: Mat<T>,
    v: Mat<T>,
    /// attention weights, [head][i * n + j], zero for j > i
    attn_w: Vec<Vec<T>>,
    ctx: Mat<T>,
    ln2: LnTape<T>,
    ln2_out: Mat<T>,
    h_pre: Mat<T>,
    h_act: Mat<T>,
}

/// Forward activations retained for the backward pass.
pub struct Tape<T> {
    tokens: Vec<u32>,
    blocks: Vec<BlockTape<T>>,
    lnf: LnTape<T>,
    lnf_out: Mat<T>,
}

pub struct ForwardResult<T> {
    /// Logits for every position, n x vocab.
    pub logits: Mat<T>,
    pub cache: ActivationCache,
}

impl<T: Scalar> PolicyModel<T> {
    /// Gaussian init with std `init_scale / sqrt(d_model)`; layer norms at
    /// identity, biases at zero.
    pub fn init(config: &ModelConfig) -> Result<PolicyModel<T>, ModelError> {
        config.validate()?;
        let mut rng = rng::stream_rng(config.seed, stream::MODEL_INIT);
        let std = config.init_scale / (config.d_model as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("valid std");
        let d = config.d_model;
        let mut gauss = |rows: usize, cols: usize| -> Mat<T> {
            let mut m = Mat::zeros(rows, cols);
            for v in m.data.iter_mut() {
                *v = T::from_f64(normal.sample(&mut rng));
            }
            m
        };
        let blocks = (0..config.n_layers)
            .map(|_| BlockParams {
                ln1_g: vec![T::one(); d],
                ln1_b: vec![T::zero(); d],
                wq: gauss(d, d),
                bq: vec![T::zero(); d],
                wk: gauss(d, d),
                bk: vec![T::zero(); d],
                wv: gauss(d, d),
                bv: vec![T::zero(); d],
                wo: gauss(d, d),
                bo: vec![T::zero(); d],
                ln2_g: vec![T::one(); d],
                ln2_b: vec![T::zero(); d],
                w1: gauss(config.d_ff, d),
                b1: vec![T::zero(); config.d_ff],
                w2: gauss(d, config.d_ff),
                b2: vec![T::zero(); d],
            })
            .collect();
        Ok(PolicyModel {
            tok_emb: gauss(config.vocab_size, d),
            pos_emb: gauss(config.context_len, d),
            blocks,
            lnf_g: vec![T::one(); d],
            lnf_b: vec![T::zero(); d],
            unembed: if config.tied_unembedding {
                None
            } else {
                Some(gauss(config.vocab_size, d))
            },
            config: config.clone(),
        })
    }

    /// All-zero parameters with the same shapes; the gradient accumulator.
    pub fn zeros_like(&self) -> PolicyModel<T> {
        let mut z = self.clone();
        z.for_each_tensor_mut(|_, t| {
            for v in t {
                *v = T::zero();
            }
        });
        z
    }

    fn unembed_mat(&self) -> &Mat<T> {
        self.unembed.as_ref().unwrap_or(&self.tok_emb)
    }

    /// Visits every parameter tensor in a fixed order.
    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&str, &mut [T])) {
        f("tok_emb", &mut self.tok_emb.data);
        f("pos_emb", &mut self.pos_emb.data);
        for (l, b) in self.blocks.iter_mut().enumerate() {
            let names = [
                "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_g",
                "ln2_b", "w1", "b1", "w2", "b2",
            ];
            let slices: [&mut [T]; 16] = [
                &mut b.ln1_g,
                &mut b.ln1_b,
                &mut b.wq.data,
                &mut b.bq,
                &mut b.wk.data,
                &mut b.bk,
                &mut b.wv.data,
                &mut b.bv,
                &mut b.wo.data,
                &mut b.bo,
                &mut b.ln2_g,
                &mut b.ln2_b,
                &mut b.w1.data,
                &mut b.b1,
                &mut b.w2.data,
                &mut b.b2,
            ];
            for (name, s) in names.into_iter().zip(slices) {
                f(&format!("block{l}.{name}"), s);
            }
        }
        f("lnf_g", &mut self.lnf_g);
        f("lnf_b", &mut self.lnf_b);
        if let Some(u) = self.unembed.as_mut() {
            f("unembed", &mut u.data);
        }
    }

    /// Tensor names in the same fixed order as [`Self::for_each_tensor_mut`].
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["tok_emb".to_string(), "pos_emb".to_string()];
        for l in 0..self.blocks.len() {
            for n in [
                "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo", "ln2_g",
                "ln2_b", "w1", "b1", "w2", "b2",
            ] {
                names.push(format!("block{l}.{n}"));
            }
        }
        names.push("lnf_g".into());
        names.push("lnf_b".into());
        if self.unembed.is_some() {
            names.push("unembed".into());
        }
        names
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut m = self.clone();
        m.for_each_tensor_mut(|_, t| n += t.len());
        n
    }

    fn embed(&self, tokens: &[u32]) -> Mat<T> {
        let d = self.config.d_model;
        let mut x = Mat::zeros(tokens.len(), d);
        for (i, &t) in tokens.iter().enumerate() {
            let e = self.tok_emb.row(t as usize);
            let p = self.pos_emb.row(i);
            let xi = x.row_mut(i);
            for j in 0..d {
                xi[j] = e[j] + p[j];
            }
        }
        x
    }

    fn check_inputs(&self, tokens: &[u32], steer: Option<&Steering<T>>) -> Result<(), ModelError> {
        if tokens.len() > self.config.context_len {
            return Err(ModelError::ContextExceeded(
                tokens.len(),
                self.config.context_len,
            ));
        }
        if let Some(s) = steer {
            if s.vector.len() != self.config.d_model {
                return Err(ModelError::SteerDimMismatch(
                    s.vector.len(),
                    self.config.d_model,
                ));
            }
            if s.layer >= self.config.n_layers {
                return Err(ModelError::SteerLayerOutOfRange(
                    s.layer,
                    self.config.n_layers,
                ));
            }
        }
        Ok(())
    }

    fn block_forward(
        &self,
        l: usize,
        x: Mat<T>,
        want_tape: bool,
    ) -> (Mat<T>, Option<BlockTape<T>>) {
        let cfg = &self.config;
        let b = &self.blocks[l];
        let n = x.rows;
        let d = cfg.d_model;
        let nh = cfg.n_heads;
        let dh = cfg.head_dim();
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());

        let mut ln1_out = Mat::zeros(n, d);
        let ln1 = layer_norm(&x, &b.ln1_g, &b.ln1_b, &mut ln1_out);

        let mut q = Mat::zeros(n, d);
        let mut k = Mat::zeros(n, d);
        let mut v = Mat::zeros(n, d);
        linear(&ln1_out, &b.wq, &b.bq, &mut q);
        linear(&ln1_out, &b.wk, &b.bk, &mut k);
        linear(&ln1_out, &b.wv, &b.bv, &mut v);

        let mut attn_w: Vec<Vec<T>> = if want_tape {
            (0..nh).map(|_| vec![T::zero(); n * n]).collect()
        } else {
            Vec::new()
        };
        let mut ctx = Mat::zeros(n, d);
        let mut scores = vec![T::zero(); n];
        for h in 0..nh {
            let off = h * dh;
            for i in 0..n {
                let qi = &q.row(i)[off..off + dh];
                let mut maxs = T::neg_infinity();
                for (j, s) in scores.iter_mut().enumerate().take(i + 1) {
                    let kj = &k.row(j)[off..off + dh];
                    *s = dot(qi, kj) * scale;
                    if *s > maxs {
                        maxs = *s;
                    }
                }
                let mut denom = T::zero();
                for s in scores.iter_mut().take(i + 1) {
                    *s = (*s - maxs).exp();
                    denom += *s;
                }
                let dinv = denom.recip();
                let ci = &mut ctx.row_mut(i)[off..off + dh];
                for j in 0..=i {
                    let wij = scores[j] * dinv;
                    if want_tape {
                        attn_w[h][i * n + j] = wij;
                    }
                    axpy(wij, &v.row(j)[off..off + dh], ci);
                }
            }
        }

        let mut att_proj = Mat::zeros(n, d);
        linear(&ctx, &b.wo, &b.bo, &mut att_proj);

        let mut x_mid = x;
        for i in 0..n {
            axpy(T::one(), att_proj.row(i), x_mid.row_mut(i));
        }

        let mut ln2_out = Mat::zeros(n, d);
        let ln2 = layer_norm(&x_mid, &b.ln2_g, &b.ln2_b, &mut ln2_out);

        let mut h_pre = Mat::zeros(n, cfg.d_ff);
        linear(&ln2_out, &b.w1, &b.b1, &mut h_pre);
        let mut h_act = Mat::zeros(n, cfg.d_ff);
        for i in 0..n * cfg.d_ff {
            h_act.data[i] = gelu(h_pre.data[i]);
        }
        let mut mlp_out = Mat::zeros(n, d);
        linear(&h_act, &b.w2, &b.b2, &mut mlp_out);

        let mut x_out = x_mid;
        for i in 0..n {
            axpy(T::one(), mlp_out.row(i), x_out.row_mut(i));
        }

        let tape = want_tape.then(|| BlockTape {
            ln1,
            ln1_out,
            q,
            k,
            v,
            attn_w,
            ctx,
            ln2,
            ln2_out,
            h_pre,
            h_act,
        });
        (x_out, tape)
    }

    fn run(
        &self,
        tokens: &[u32],
        capture: &[usize],
        steer: Option<&Steering<T>>,
        want_tape: bool,
    ) -> Result<(Mat<T>, ActivationCache, Option<Tape<T>>), ModelError> {
        self.check_inputs(tokens, steer)?;
        let cfg = &self.config;
        let mut cache = ActivationCache::empty(cfg.n_layers);
        cache.positions = capture.to_vec();

        let mut x = self.embed(tokens);
        let mut block_tapes = Vec::with_capacity(if want_tape { cfg.n_layers } else { 0 });
        for l in 0..cfg.n_layers {
            let (mut x_out, tape) = self.block_forward(l, x, want_tape);
            if let Some(s) = steer {
                if s.layer == l && s.factor != T::zero() {
                    for &p in s.positions {
                        axpy(s.factor, s.vector, x_out.row_mut(p));
                    }
                }
            }
            for &p in capture {
                cache.residual[l].push(x_out.row(p).iter().map(|v| v.as_f64()).collect());
            }
            if let Some(t) = tape {
                block_tapes.push(t);
            }
            x = x_out;
        }

        let n = tokens.len();
        let d = cfg.d_model;
        let mut lnf_out = Mat::zeros(n, d);
        let lnf = layer_norm(&x, &self.lnf_g, &self.lnf_b, &mut lnf_out);
        let wu = self.unembed_mat();
        let mut logits = Mat::zeros(n, cfg.vocab_size);
        for i in 0..n {
            let fi = lnf_out.row(i);
            let li = logits.row_mut(i);
            for t in 0..cfg.vocab_size {
                li[t] = dot(fi, wu.row(t));
            }
        }

        let tape = want_tape.then(|| Tape {
            tokens: tokens.to_vec(),
            blocks: block_tapes,
            lnf,
            lnf_out,
        });
        Ok((logits, cache, tape))
    }

    /// Inference pass: logits at every position plus requested captures.
    pub fn forward(
        &self,
        tokens: &[u32],
        capture: &[usize],
        steer: Option<&Steering<T>>,
    ) -> Result<ForwardResult<T>, ModelError> {
        let (logits, cache, _) = self.run(tokens, capture, steer, false)?;
        Ok(ForwardResult { logits, cache })
    }

    /// Training pass: records the tape needed by [`Self::backward`].
    pub fn forward_train(&self, tokens: &[u32]) -> Result<(Mat<T>, Tape<T>), ModelError> {
        let (logits, _, tape) = self.run(tokens, &[], None, true)?;
        Ok((logits, tape.expect("tape requested")))
    }

    /// Accumulates exact parameter gradients of `sum(dlogits * logits)` into
    /// `grads` (a zero-initialized clone of the model).
    pub fn backward(&self, tape: &Tape<T>, dlogits: &Mat<T>, grads: &mut PolicyModel<T>) {
        let cfg = &self.config;
        let n = tape.tokens.len();
        let d = cfg.d_model;
        let nh = cfg.n_heads;
        let dh = cfg.head_dim();
        let scale = T::from_f64(1.0 / (dh as f64).sqrt());

        // unembedding
        let wu = self.unembed_mat();
        let mut dlnf_out = Mat::zeros(n, d);
        {
            let tied = self.unembed.is_none();
            let du = if tied {
                &mut grads.tok_emb
            } else {
                grads.unembed.as_mut().expect("untied grads")
            };
            for i in 0..n {
                let dli = dlogits.row(i);
                let fi = tape.lnf_out.row(i);
                for t in 0..cfg.vocab_size {
                    let g = dli[t];
                    if g != T::zero() {
                        axpy(g, fi, du.row_mut(t));
                        axpy(g, wu.row(t), dlnf_out.row_mut(i));
                    }
                }
            }
        }

        let mut dx = Mat::zeros(n, d);
        layer_norm_backward(
            &tape.lnf,
            &self.lnf_g,
            &dlnf_out,
            &mut grads.lnf_g,
            &mut grads.lnf_b,
            &mut dx,
        );

        for l in (0..cfg.n_layers).rev() {
            let b = &self.blocks[l];
            let gb = &mut grads.blocks[l];
            let t = &tape.blocks[l];

            // mlp branch: x_out = x_mid + W2 gelu(W1 ln2(x_mid) + b1) + b2
            let mut dh_act = Mat::zeros(n, cfg.d_ff);
            let mut dln2_out = Mat::zeros(n, d);
            linear_backward(&t.h_act, &b.w2, &dx, &mut gb.w2, &mut gb.b2, &mut dh_act);
            for i in 0..n * cfg.d_ff {
                dh_act.data[i] *= gelu_grad(t.h_pre.data[i]);
            }
            linear_backward(
                &t.ln2_out, &b.w1, &dh_act, &mut gb.w1, &mut gb.b1, &mut dln2_out,
            );
            // dx currently holds d(x_out); the residual passes it to x_mid
            // and the ln2 path adds its contribution.
            let mut dx_mid = dx;
            layer_norm_backward(
                &t.ln2,
                &b.ln2_g,
                &dln2_out,
                &mut gb.ln2_g,
                &mut gb.ln2_b,
                &mut dx_mid,
            );

            // attention branch: x_mid = x_in + Wo ctx + bo
            let mut dctx = Mat::zeros(n, d);
            linear_backward(&t.ctx, &b.wo, &dx_mid, &mut gb.wo, &mut gb.bo, &mut dctx);

            let mut dq = Mat::zeros(n, d);
            let mut dk = Mat::zeros(n, d);
            let mut dv = Mat::zeros(n, d);
            let mut dscore = vec![T::zero(); n];
            for h in 0..nh {
                let off = h * dh;
                let w = &t.attn_w[h];
                for i in 0..n {
                    let dci = &dctx.row(i)[off..off + dh];
                    let mut dw_dot = T::zero();
                    for j in 0..=i {
                        let wij = w[i * n + j];
                        axpy(wij, dci, &mut dv.row_mut(j)[off..off + dh]);
                        let dwij = dot(dci, &t.v.row(j)[off..off + dh]);
                        dscore[j] = dwij;
                        dw_dot += wij * dwij;
                    }
                    // softmax jacobian, then q/k grads
                    let qi = t.q.row(i)[off..off + dh].to_vec();
                    for j in 0..=i {
                        let wij = w[i * n + j];
                        let ds = wij * (dscore[j] - dw_dot) * scale;
                        if ds != T::zero() {
                            axpy(
                                ds,
                                &t.k.row(j)[off..off + dh],
                                &mut dq.row_mut(i)[off..off + dh],
                            );
                            axpy(ds, &qi, &mut dk.row_mut(j)[off..off + dh]);
                        }
                    }
                }
            }

            let mut dln1_out = Mat::zeros(n, d);
            linear_backward(&t.ln1_out, &b.wq, &dq, &mut gb.wq, &mut gb.bq, &mut dln1_out);
            linear_backward(&t.ln1_out, &b.wk, &dk, &mut gb.wk, &mut gb.bk, &mut dln1_out);
            linear_backward(&t.ln1_out, &b.wv, &dv, &mut gb.wv, &mut gb.bv, &mut dln1_out);

            let mut dx_in = dx_mid; // residual path
            layer_norm_backward(
                &t.ln1,
                &b.ln1_g,
                &dln1_out,
                &mut gb.ln1_g,
                &mut gb.ln1_b,
                &mut dx_in,
            );
            dx = dx_in;
        }

        // embeddings
        for (i, &tok) in tape.tokens.iter().enumerate() {
            let gi: Vec<T> = dx.row(i).to_vec();
            axpy(T::one(), &gi, grads.tok_emb.row_mut(tok as usize));
            axpy(T::one(), &gi, grads.pos_emb.row_mut(i));
        }
    }

    pub fn save(&self, path: &Path, step: u64) -> Result<(), ModelError> {
        let mut tensors = Vec::new();
        let mut offset = 0usize;
        let mut payload: Vec<u8> = Vec::new();
        let mut me = self.clone();
        me.for_each_tensor_mut(|name, data| {
            tensors.push(serde_json::json!({
                "name": name,
                "len": data.len(),
                "offset": offset,
            }));
            offset += data.len() * 4;
            for v in data.iter() {
                payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        });
        let header = serde_json::json!({
            "format_version": 1,
            "config": self.config,
            "step": step,
            "tensors": tensors,
        });
        let mut f = std::fs::File::create(path)?;
        f.write_all(serde_json::to_string(&header).expect("header json").as_bytes())?;
        f.write_all(b"\n")?;
        f.write_all(&payload)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(PolicyModel<T>, u64), ModelError> {
        let mut f = std::fs::File::open(path)?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| ModelError::Format("missing header line".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..nl])
            .map_err(|e| ModelError::Format(format!("bad header: {e}")))?;
        if header["format_version"] != 1 {
            return Err(ModelError::Format(format!(
                "unsupported format_version {}",
                header["format_version"]
            )));
        }
        let config: ModelConfig = serde_json::from_value(header["config"].clone())
            .map_err(|e| ModelError::Format(format!("bad config: {e}")))?;
        let step = header["step"]
            .as_u64()
            .ok_or_else(|| ModelError::Format("missing step".into()))?;
        let payload = &bytes[nl + 1..];
        let mut model: PolicyModel<T> = PolicyModel::init(&config)?;
        let manifest = header["tensors"]
            .as_array()
            .ok_or_else(|| ModelError::Format("missing tensor manifest".into()))?
            .clone();
        let mut idx = 0usize;
        let mut err = None;
        model.for_each_tensor_mut(|name, data| {
            if err.is_some() {
                return;
            }
            let Some(entry) = manifest.get(idx) else {
                err = Some(format!("manifest too short at {name}"));
                return;
            };
            idx += 1;
            if entry["name"] != name || entry["len"] != data.len() as u64 {
                err = Some(format!("manifest mismatch at {name}"));
                return;
            }
            let off = entry["offset"].as_u64().unwrap_or(u64::MAX) as usize;
            if off + data.len() * 4 > payload.len() {
                err = Some(format!("payload too short at {name}"));
                return;
            }
            for (i, v) in data.iter_mut().enumerate() {
                let b = &payload[off + i * 4..off + i * 4 + 4];
                *v = T::from_f64(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64);
            }
        });
        if let Some(e) = err {
            return Err(ModelError::Format(e));
        }
        Ok((model, step))
    }
}

/// Softmax over the four direction-token logits at the given temperature;
/// every other vocabulary entry is masked out. Computed in f64.
pub fn masked_action_distribution<T: Scalar>(
    logits_row: &[T],
    dir_ids: [usize; 4],
    temperature: f64,
) -> [f64; 4] {
    valid_action_distribution(logits_row, dir_ids, temperature, [true; 4])
}

/// Log-probabilities of the masked action distribution.
pub fn masked_action_log_probs<T: Scalar>(
    logits_row: &[T],
    dir_ids: [usize; 4],
    temperature: f64,
) -> [f64; 4] {
    valid_action_log_probs(logits_row, dir_ids, temperature, [true; 4])
}

/// Masked softmax additionally restricted to the valid-action set (moves
/// that stay on the grid); invalid entries carry zero probability.
pub fn valid_action_distribution<T: Scalar>(
    logits_row: &[T],
    dir_ids: [usize; 4],
    temperature: f64,
    valid: [bool; 4],
) -> [f64; 4] {
    let lp = valid_action_log_probs(logits_row, dir_ids, temperature, valid);
    let mut e = [0.0; 4];
    for i in 0..4 {
        if valid[i] {
            e[i] = lp[i].exp();
        }
    }
    e
}

/// Log-probabilities over the valid-action set; invalid entries are
/// negative infinity.
pub fn valid_action_log_probs<T: Scalar>(
    logits_row: &[T],
    dir_ids: [usize; 4],
    temperature: f64,
    valid: [bool; 4],
) -> [f64; 4] {
    let mut z = [f64::NEG_INFINITY; 4];
    let mut m = f64::NEG_INFINITY;
    for i in 0..4 {
        if valid[i] {
            z[i] = logits_row[dir_ids[i]].as_f64() / temperature;
            m = m.max(z[i]);
        }
    }
    let mut sum = 0.0;
    for i in 0..4 {
        if valid[i] {
            sum += (z[i] - m).exp();
        }
    }
    let lse = m + sum.ln();
    let mut out = [f64::NEG_INFINITY; 4];
    for i in 0..4 {
        if valid[i] {
            out[i] = z[i] - lse;
        }
    }
    out
}
