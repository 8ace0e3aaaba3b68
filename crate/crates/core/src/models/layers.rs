//! Per-sample layers with explicit backward passes. Every tensor flowing
//! between layers is a `time × features` matrix.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamSet};

pub(crate) struct Init<'a> {
    pub params: &'a mut ParamSet,
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    fn uniform(&mut self, name: String, shape: Vec<usize>, bound: f64) -> ParamId {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.params.push(name, shape, data)
    }

    fn constant(&mut self, name: String, shape: Vec<usize>, value: f64) -> ParamId {
        let n = shape.iter().product();
        self.params.push(name, shape, vec![value; n])
    }
}

/// `acc += aᵀ · b`
fn add_at_b(acc: &mut ndarray::ArrayViewMut2<f64>, a: &ArrayView2<f64>, b: &ArrayView2<f64>) {
    general_mat_mul(1.0, &a.t(), b, 1.0, acc);
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            w: init.uniform(format!("{name}.weight"), vec![fan_in, fan_out], bound),
            b: init.uniform(format!("{name}.bias"), vec![fan_out], bound),
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&p.mat(self.w)) + &p.vec(self.b)
    }

    pub fn backward(&self, p: &ParamSet, x: &Array2<f64>, dy: &Array2<f64>, g: &mut ParamSet) -> Array2<f64> {
        add_at_b(&mut g.mat_mut(self.w), &x.view(), &dy.view());
        g.vec_mut(self.b).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        dy.dot(&p.mat(self.w).t())
    }
}

/// Temporal convolution with zero "same" padding.
#[derive(Debug, Clone)]
pub(crate) struct Conv1d {
    w: ParamId,
    b: ParamId,
    kernel: usize,
    c_in: usize,
}

impl Conv1d {
    pub fn new(init: &mut Init, name: &str, c_in: usize, c_out: usize, kernel: usize) -> Self {
        let bound = 1.0 / ((kernel * c_in) as f64).sqrt();
        Self {
            w: init.uniform(format!("{name}.weight"), vec![kernel * c_in, c_out], bound),
            b: init.uniform(format!("{name}.bias"), vec![c_out], bound),
            kernel,
            c_in,
        }
    }

    fn pad_left(&self) -> usize {
        (self.kernel - 1) / 2
    }

    fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let t_len = x.nrows();
        let pad = self.pad_left() as isize;
        let mut cols = Array2::zeros((t_len, self.kernel * self.c_in));
        for t in 0..t_len {
            for k in 0..self.kernel {
                let src = t as isize + k as isize - pad;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                cols.slice_mut(s![t, k * self.c_in..(k + 1) * self.c_in])
                    .assign(&x.row(src as usize));
            }
        }
        cols
    }

    /// Returns the output and the im2col matrix needed by `backward`.
    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let cols = self.im2col(x);
        let y = cols.dot(&p.mat(self.w)) + &p.vec(self.b);
        (y, cols)
    }

    pub fn backward(&self, p: &ParamSet, cols: &Array2<f64>, dy: &Array2<f64>, g: &mut ParamSet) -> Array2<f64> {
        add_at_b(&mut g.mat_mut(self.w), &cols.view(), &dy.view());
        g.vec_mut(self.b).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        let dcols = dy.dot(&p.mat(self.w).t());
        let t_len = dy.nrows();
        let pad = self.pad_left() as isize;
        let mut dx = Array2::zeros((t_len, self.c_in));
        for t in 0..t_len {
            for k in 0..self.kernel {
                let src = t as isize + k as isize - pad;
                if src < 0 || src >= t_len as isize {
                    continue;
                }
                let mut row = dx.row_mut(src as usize);
                row += &dcols.slice(s![t, k * self.c_in..(k + 1) * self.c_in]);
            }
        }
        dx
    }
}

pub(crate) fn relu(x: Array2<f64>) -> Array2<f64> {
    // NaN passes through so divergence stays visible.
    x.mapv_into(|v| if v < 0.0 { 0.0 } else { v })
}

/// Gradient through a ReLU given its output.
pub(crate) fn relu_backward(out: &Array2<f64>, mut dy: Array2<f64>) -> Array2<f64> {
    dy.zip_mut_with(out, |d, &o| {
        if o <= 0.0 {
            *d = 0.0
        }
    });
    dy
}

/// Max-pool of width 2 and stride 2 over time; a single row passes through.
pub(crate) fn max_pool(x: &Array2<f64>) -> (Array2<f64>, Vec<usize>) {
    let (t_len, c) = x.dim();
    if t_len < 2 {
        return (x.clone(), (0..c).map(|_| 0).collect());
    }
    let out_len = t_len / 2;
    let mut y = Array2::zeros((out_len, c));
    let mut argmax = vec![0usize; out_len * c];
    for t in 0..out_len {
        for j in 0..c {
            let (a, b) = (x[[2 * t, j]], x[[2 * t + 1, j]]);
            let (idx, v) = if b > a || b.is_nan() { (2 * t + 1, b) } else { (2 * t, a) };
            y[[t, j]] = v;
            argmax[t * c + j] = idx;
        }
    }
    (y, argmax)
}

pub(crate) fn max_pool_backward(in_len: usize, argmax: &[usize], dy: &Array2<f64>) -> Array2<f64> {
    let (out_len, c) = dy.dim();
    if in_len < 2 {
        return dy.clone();
    }
    let mut dx = Array2::zeros((in_len, c));
    for t in 0..out_len {
        for j in 0..c {
            dx[[argmax[t * c + j], j]] += dy[[t, j]];
        }
    }
    dx
}

pub(crate) fn mean_pool(x: &Array2<f64>) -> Array2<f64> {
    x.mean_axis(Axis(0)).expect("non-empty sequence").insert_axis(Axis(0))
}

pub(crate) fn mean_pool_backward(in_len: usize, dy: &Array2<f64>) -> Array2<f64> {
    let row = dy.row(0).mapv(|v| v / in_len as f64);
    let mut dx = Array2::zeros((in_len, row.len()));
    for mut r in dx.rows_mut() {
        r.assign(&row);
    }
    dx
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Single-layer LSTM returning the final hidden state. Gate order i, f, g, o.
#[derive(Debug, Clone)]
pub(crate) struct Lstm {
    wx: ParamId,
    wh: ParamId,
    b: ParamId,
    hidden: usize,
}

pub(crate) struct LstmCache {
    x: Array2<f64>,
    /// activated gates per step, `T × 4H`
    gates: Array2<f64>,
    /// cell states c_1..c_T
    cells: Array2<f64>,
    /// hidden states h_0..h_{T-1} (inputs to each step)
    h_prev: Array2<f64>,
}

impl Lstm {
    pub fn new(init: &mut Init, name: &str, input: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            wx: init.uniform(format!("{name}.weight_ih"), vec![input, 4 * hidden], bound),
            wh: init.uniform(format!("{name}.weight_hh"), vec![hidden, 4 * hidden], bound),
            b: init.uniform(format!("{name}.bias"), vec![4 * hidden], bound),
            hidden,
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, LstmCache) {
        let h = self.hidden;
        let t_len = x.nrows();
        let xz = x.dot(&p.mat(self.wx)) + &p.vec(self.b);
        let wh = p.mat(self.wh);
        let mut gates = Array2::zeros((t_len, 4 * h));
        let mut cells = Array2::zeros((t_len, h));
        let mut h_prev = Array2::zeros((t_len, h));
        let mut h_t = Array1::<f64>::zeros(h);
        let mut c_t = Array1::<f64>::zeros(h);
        for t in 0..t_len {
            h_prev.row_mut(t).assign(&h_t);
            let z = &xz.row(t) + &h_t.dot(&wh);
            let mut g = gates.row_mut(t);
            for k in 0..h {
                let (i, f, gg, o) = (
                    sigmoid(z[k]),
                    sigmoid(z[h + k]),
                    z[2 * h + k].tanh(),
                    sigmoid(z[3 * h + k]),
                );
                g[k] = i;
                g[h + k] = f;
                g[2 * h + k] = gg;
                g[3 * h + k] = o;
                c_t[k] = f * c_t[k] + i * gg;
                h_t[k] = o * c_t[k].tanh();
            }
            cells.row_mut(t).assign(&c_t);
        }
        let out = h_t.insert_axis(Axis(0));
        (
            out,
            LstmCache {
                x: x.clone(),
                gates,
                cells,
                h_prev,
            },
        )
    }

    pub fn backward(&self, p: &ParamSet, cache: &LstmCache, dy: &Array2<f64>, g: &mut ParamSet) -> Array2<f64> {
        let h = self.hidden;
        let t_len = cache.x.nrows();
        let wh = p.mat(self.wh);
        let mut dz = Array2::zeros((t_len, 4 * h));
        let mut dh = dy.row(0).to_owned();
        let mut dc = Array1::<f64>::zeros(h);
        for t in (0..t_len).rev() {
            let gt = cache.gates.row(t);
            let c = cache.cells.row(t);
            let mut dzt = dz.row_mut(t);
            for k in 0..h {
                let (i, f, gg, o) = (gt[k], gt[h + k], gt[2 * h + k], gt[3 * h + k]);
                let tc = c[k].tanh();
                let c_prev = if t > 0 { cache.cells[[t - 1, k]] } else { 0.0 };
                let d_o = dh[k] * tc;
                dc[k] += dh[k] * o * (1.0 - tc * tc);
                let d_i = dc[k] * gg;
                let d_g = dc[k] * i;
                let d_f = dc[k] * c_prev;
                dzt[k] = d_i * i * (1.0 - i);
                dzt[h + k] = d_f * f * (1.0 - f);
                dzt[2 * h + k] = d_g * (1.0 - gg * gg);
                dzt[3 * h + k] = d_o * o * (1.0 - o);
                dc[k] *= f;
            }
            dh = dzt.dot(&wh.t());
        }
        add_at_b(&mut g.mat_mut(self.wx), &cache.x.view(), &dz.view());
        add_at_b(&mut g.mat_mut(self.wh), &cache.h_prev.view(), &dz.view());
        g.vec_mut(self.b).scaled_add(1.0, &dz.sum_axis(Axis(0)));
        dz.dot(&p.mat(self.wx).t())
    }
}

/// Sinusoidal position table, `length × d`.
pub(crate) fn positional_encoding(length: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((length, d), |(t, j)| {
        let pair = (j / 2) as f64;
        let angle = t as f64 / 10000f64.powf(2.0 * pair / d as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
}

pub(crate) struct LayerNormCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(init: &mut Init, name: &str, d: usize) -> Self {
        Self {
            gamma: init.constant(format!("{name}.gamma"), vec![d], 1.0),
            beta: init.constant(format!("{name}.beta"), vec![d], 0.0),
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut x_hat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, is) in x_hat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            *is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * *is);
        }
        let y = &x_hat * &p.vec(self.gamma) + &p.vec(self.beta);
        (y, LayerNormCache { x_hat, inv_std })
    }

    pub fn backward(&self, p: &ParamSet, cache: &LayerNormCache, dy: &Array2<f64>, g: &mut ParamSet) -> Array2<f64> {
        g.vec_mut(self.gamma)
            .scaled_add(1.0, &(dy * &cache.x_hat).sum_axis(Axis(0)));
        g.vec_mut(self.beta).scaled_add(1.0, &dy.sum_axis(Axis(0)));
        let dx_hat = dy * &p.vec(self.gamma);
        let d = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.dim());
        for t in 0..dy.nrows() {
            let dxh = dx_hat.row(t);
            let xh = cache.x_hat.row(t);
            let mean_d = dxh.sum() / d;
            let mean_dx = dxh.dot(&xh) / d;
            let is = cache.inv_std[t];
            for j in 0..dy.ncols() {
                dx[[t, j]] = is * (dxh[j] - mean_d - xh[j] * mean_dx);
            }
        }
        dx
    }
}

#[derive(Debug, Clone)]
pub(crate) struct SelfAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

pub(crate) struct AttentionCache {
    x: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// softmax weights per head, each `T × T`
    weights: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

impl SelfAttention {
    pub fn new(init: &mut Init, name: &str, d: usize, heads: usize) -> Self {
        Self {
            q: Linear::new(init, &format!("{name}.q"), d, d),
            k: Linear::new(init, &format!("{name}.k"), d, d),
            v: Linear::new(init, &format!("{name}.v"), d, d),
            o: Linear::new(init, &format!("{name}.out"), d, d),
            heads,
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, AttentionCache) {
        let (t_len, d) = x.dim();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.q.forward(p, x);
        let k = self.k.forward(p, x);
        let v = self.v.forward(p, x);
        let mut concat = Array2::zeros((t_len, d));
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let mut a = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            for mut row in a.rows_mut() {
                let m = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                row.mapv_inplace(|v| (v - m).exp());
                let z = row.sum();
                row /= z;
            }
            concat.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            weights.push(a);
        }
        let y = self.o.forward(p, &concat);
        (
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                weights,
                concat,
            },
        )
    }

    pub fn backward(&self, p: &ParamSet, c: &AttentionCache, dy: &Array2<f64>, g: &mut ParamSet) -> Array2<f64> {
        let (t_len, d) = c.x.dim();
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let dconcat = self.o.backward(p, &c.concat, dy, g);
        let mut dq = Array2::zeros((t_len, d));
        let mut dk = Array2::zeros((t_len, d));
        let mut dv = Array2::zeros((t_len, d));
        for (h, a) in c.weights.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dout = dconcat.slice(cols);
            let da = dout.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dout));
            let mut ds = a * &da;
            for (mut row, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                let dot = row.sum();
                row.zip_mut_with(&arow, |r, &w| *r -= w * dot);
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
        }
        self.q.backward(p, &c.x, &dq, g) + self.k.backward(p, &c.x, &dk, g) + self.v.backward(p, &c.x, &dv, g)
    }
}

/// Post-norm transformer encoder block: `LN(x + MHA(x))`, then
/// `LN(y + FFN(y))` with a ReLU feed-forward.
#[derive(Debug, Clone)]
pub(crate) struct EncoderBlock {
    attn: SelfAttention,
    norm1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    norm2: LayerNorm,
}

pub(crate) struct EncoderCache {
    attn: AttentionCache,
    norm1: LayerNormCache,
    y1: Array2<f64>,
    hidden: Array2<f64>,
    norm2: LayerNormCache,
}

impl EncoderBlock {
    pub fn new(init: &mut Init, name: &str, d: usize, heads: usize, ff: usize) -> Self {
        Self {
            attn: SelfAttention::new(init, &format!("{name}.attn"), d, heads),
            norm1: LayerNorm::new(init, &format!("{name}.norm1"), d),
            ff1: Linear::new(init, &format!("{name}.ff1"), d, ff),
            ff2: Linear::new(init, &format!("{name}.ff2"), ff, d),
            norm2: LayerNorm::new(init, &format!("{name}.norm2"), d),
        }
    }

    pub fn forward(&self, p: &ParamSet, x: &Array2<f64>) -> (Array2<f64>, EncoderCache) {
        let (a, attn) = self.attn.forward(p, x);
        let (y1, norm1) = self.norm1.forward(p, &(x + &a));
        let hidden = relu(self.ff1.forward(p, &y1));
        let f = self.ff2.forward(p, &hidden);
        let (y2, norm2) = self.norm2.forward(p, &(&y1 + &f));
        (
            y2,
            EncoderCache {
                attn,
                norm1,
                y1,
                hidden,
                norm2,
            },
        )
    }

    pub fn backward(&self, p: &ParamSet, c: &EncoderCache, dy: &Array2<f64>, g: &mut ParamSet) -> Array2<f64> {
        let dr2 = self.norm2.backward(p, &c.norm2, dy, g);
        let dhidden = relu_backward(&c.hidden, self.ff2.backward(p, &c.hidden, &dr2, g));
        let dy1 = &dr2 + &self.ff1.backward(p, &c.y1, &dhidden, g);
        let dr1 = self.norm1.backward(p, &c.norm1, &dy1, g);
        &dr1 + &self.attn.backward(p, &c.attn, &dr1, g)
    }
}
