//! Reference architectures for windowed sensor classification.
//!
//! Default sizes:
//!
//! * `MCNN`: 3 × [conv(kernel 5, 64 filters) → ReLU → max-pool 2], global
//!   average pool, linear head.
//! * `CNNLSTM`: 2 × [conv(kernel 5, 64 filters) → ReLU], one LSTM layer with
//!   128 hidden units (last state), linear head.
//! * `TRANSFORMER`: linear embedding to d = 64, sinusoidal positions, 2
//!   post-norm encoder blocks (4 heads, feed-forward 128), mean pool, linear
//!   head.
//!
//! Models run in f64. All layers are deterministic: there is no dropout and no
//! batch statistic, so training and evaluation forward passes coincide.

mod checkpoint;
mod layers;
mod params;

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use layers::{
    max_pool, max_pool_backward, mean_pool, mean_pool_backward, positional_encoding, relu, relu_backward,
    Conv1d, EncoderBlock, EncoderCache, Init, Linear, Lstm, LstmCache,
};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use params::{ParamSet, Tensor, TensorInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Arch {
    Mcnn,
    Cnnlstm,
    Transformer,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Mcnn, Arch::Cnnlstm, Arch::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Mcnn => "MCNN",
            Arch::Cnnlstm => "CNNLSTM",
            Arch::Transformer => "TRANSFORMER",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '_'], "").as_str() {
            "MCNN" => Ok(Arch::Mcnn),
            "CNNLSTM" => Ok(Arch::Cnnlstm),
            "TRANSFORMER" => Ok(Arch::Transformer),
            _ => Err(Error::InvalidArgument(format!("unknown architecture `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Arch,
    pub window_length: usize,
    pub n_channels: usize,
    pub n_classes: usize,
    /// Convolution filters (MCNN, CNNLSTM).
    pub filters: usize,
    pub kernel_size: usize,
    /// Conv blocks (MCNN, CNNLSTM) or encoder blocks (TRANSFORMER).
    pub depth: usize,
    /// LSTM hidden units.
    pub hidden: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
}

impl ModelSpec {
    pub fn new(arch: Arch, window_length: usize, n_channels: usize, n_classes: usize) -> Self {
        Self {
            arch,
            window_length,
            n_channels,
            n_classes,
            filters: 64,
            kernel_size: 5,
            depth: match arch {
                Arch::Mcnn => 3,
                Arch::Cnnlstm | Arch::Transformer => 2,
            },
            hidden: 128,
            d_model: 64,
            heads: 4,
            ff_dim: 128,
        }
    }

    /// Narrow variant of the same topology, small enough for finite-difference
    /// checks.
    pub fn tiny(arch: Arch, window_length: usize, n_channels: usize, n_classes: usize) -> Self {
        Self {
            filters: 4,
            kernel_size: 3,
            hidden: 5,
            d_model: 8,
            heads: 2,
            ff_dim: 6,
            depth: match arch {
                Arch::Mcnn => 2,
                Arch::Cnnlstm => 1,
                Arch::Transformer => 1,
            },
            ..Self::new(arch, window_length, n_channels, n_classes)
        }
    }

    pub fn check(&self) -> Result<()> {
        let dims = [
            ("window_length", self.window_length),
            ("n_channels", self.n_channels),
            ("n_classes", self.n_classes),
            ("filters", self.filters),
            ("kernel_size", self.kernel_size),
            ("depth", self.depth),
            ("hidden", self.hidden),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Shape(format!("{name} must be positive")));
        }
        if self.arch == Arch::Transformer && self.d_model % self.heads != 0 {
            return Err(Error::Shape(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        Ok(())
    }
}

enum Stage {
    Conv(Conv1d),
    Relu,
    MaxPool,
    MeanPool,
    Lstm(Lstm),
    Linear(Linear),
    AddPositions(Array2<f64>),
    Encoder(EncoderBlock),
}

enum StageCache {
    Conv(Array2<f64>),
    Relu(Array2<f64>),
    MaxPool { in_len: usize, argmax: Vec<usize> },
    MeanPool { in_len: usize },
    Lstm(LstmCache),
    Linear(Array2<f64>),
    Nothing,
    Encoder(Box<EncoderCache>),
}

pub struct Model {
    spec: ModelSpec,
    params: ParamSet,
    stages: Vec<Stage>,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self::from_parts(self.spec.clone(), self.params.clone()).expect("layout already checked")
    }
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("spec", &self.spec)
            .field("n_params", &self.params.n_params())
            .finish()
    }
}

fn build_stages(spec: &ModelSpec, init: &mut Init) -> Vec<Stage> {
    let mut stages = Vec::new();
    match spec.arch {
        Arch::Mcnn | Arch::Cnnlstm => {
            let mut c_in = spec.n_channels;
            for i in 0..spec.depth {
                stages.push(Stage::Conv(Conv1d::new(
                    init,
                    &format!("conv{i}"),
                    c_in,
                    spec.filters,
                    spec.kernel_size,
                )));
                stages.push(Stage::Relu);
                if spec.arch == Arch::Mcnn {
                    stages.push(Stage::MaxPool);
                }
                c_in = spec.filters;
            }
            if spec.arch == Arch::Mcnn {
                stages.push(Stage::MeanPool);
                stages.push(Stage::Linear(Linear::new(init, "head", spec.filters, spec.n_classes)));
            } else {
                stages.push(Stage::Lstm(Lstm::new(init, "lstm", spec.filters, spec.hidden)));
                stages.push(Stage::Linear(Linear::new(init, "head", spec.hidden, spec.n_classes)));
            }
        }
        Arch::Transformer => {
            stages.push(Stage::Linear(Linear::new(init, "embed", spec.n_channels, spec.d_model)));
            stages.push(Stage::AddPositions(positional_encoding(spec.window_length, spec.d_model)));
            for i in 0..spec.depth {
                stages.push(Stage::Encoder(EncoderBlock::new(
                    init,
                    &format!("encoder{i}"),
                    spec.d_model,
                    spec.heads,
                    spec.ff_dim,
                )));
            }
            stages.push(Stage::MeanPool);
            stages.push(Stage::Linear(Linear::new(init, "head", spec.d_model, spec.n_classes)));
        }
    }
    stages
}

/// Builds a freshly initialized model; identical seeds give identical
/// parameters.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.check()?;
    let mut params = ParamSet::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stages = build_stages(
        spec,
        &mut Init {
            params: &mut params,
            rng: &mut rng,
        },
    );
    Ok(Model {
        spec: spec.clone(),
        params,
        stages,
    })
}

/// Output of [`loss_and_grads`].
#[derive(Debug, Clone)]
pub struct BatchGradients {
    pub loss: f64,
    pub grads: ParamSet,
    /// `batch × n_classes`
    pub logits: Array2<f64>,
}

impl Model {
    /// Reassembles a model from a spec and a parameter set with the matching
    /// layout.
    pub fn from_parts(spec: ModelSpec, params: ParamSet) -> Result<Self> {
        let fresh = build_model(&spec, 0)?;
        if fresh.params.layout() != params.layout() {
            return Err(Error::Shape("parameter layout does not match the model spec".into()));
        }
        Ok(Self {
            spec,
            params,
            stages: fresh.stages,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.n_params()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        let want = (self.spec.window_length, self.spec.n_channels);
        if x.dim() != want {
            return Err(Error::Shape(format!("input {:?}, expected {want:?}", x.dim())));
        }
        Ok(())
    }

    fn forward_one(&self, x: &ArrayView2<f64>, caches: Option<&mut Vec<StageCache>>) -> Array1<f64> {
        let p = &self.params;
        let mut h = x.to_owned();
        let mut sink = Vec::new();
        let caches = caches.unwrap_or(&mut sink);
        let keep = |c: StageCache, caches: &mut Vec<StageCache>| caches.push(c);
        for stage in &self.stages {
            h = match stage {
                Stage::Conv(conv) => {
                    let (y, cols) = conv.forward(p, &h);
                    keep(StageCache::Conv(cols), caches);
                    y
                }
                Stage::Relu => {
                    let y = relu(h);
                    keep(StageCache::Relu(y.clone()), caches);
                    y
                }
                Stage::MaxPool => {
                    let in_len = h.nrows();
                    let (y, argmax) = max_pool(&h);
                    keep(StageCache::MaxPool { in_len, argmax }, caches);
                    y
                }
                Stage::MeanPool => {
                    keep(StageCache::MeanPool { in_len: h.nrows() }, caches);
                    mean_pool(&h)
                }
                Stage::Lstm(lstm) => {
                    let (y, c) = lstm.forward(p, &h);
                    keep(StageCache::Lstm(c), caches);
                    y
                }
                Stage::Linear(lin) => {
                    let y = lin.forward(p, &h);
                    keep(StageCache::Linear(h), caches);
                    y
                }
                Stage::AddPositions(table) => {
                    keep(StageCache::Nothing, caches);
                    h + table
                }
                Stage::Encoder(block) => {
                    let (y, c) = block.forward(p, &h);
                    keep(StageCache::Encoder(Box::new(c)), caches);
                    y
                }
            };
        }
        h.row(0).to_owned()
    }

    fn backward_one(&self, caches: Vec<StageCache>, dlogits: Array1<f64>, g: &mut ParamSet) {
        let p = &self.params;
        let mut d = dlogits.insert_axis(ndarray::Axis(0));
        for (stage, cache) in self.stages.iter().zip(caches).rev() {
            d = match (stage, cache) {
                (Stage::Conv(conv), StageCache::Conv(cols)) => conv.backward(p, &cols, &d, g),
                (Stage::Relu, StageCache::Relu(out)) => relu_backward(&out, d),
                (Stage::MaxPool, StageCache::MaxPool { in_len, argmax }) => max_pool_backward(in_len, &argmax, &d),
                (Stage::MeanPool, StageCache::MeanPool { in_len }) => mean_pool_backward(in_len, &d),
                (Stage::Lstm(lstm), StageCache::Lstm(c)) => lstm.backward(p, &c, &d, g),
                (Stage::Linear(lin), StageCache::Linear(x)) => lin.backward(p, &x, &d, g),
                (Stage::AddPositions(_), StageCache::Nothing) => d,
                (Stage::Encoder(block), StageCache::Encoder(c)) => block.backward(p, &c, &d, g),
                _ => unreachable!("cache does not match stage"),
            };
        }
    }

    /// Unnormalized class scores, `batch × n_classes`.
    pub fn forward(&self, inputs: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((inputs.len(), self.spec.n_classes));
        for (i, x) in inputs.iter().enumerate() {
            self.check_input(x)?;
            out.row_mut(i).assign(&self.forward_one(x, None));
        }
        Ok(out)
    }
}

fn log_softmax(z: &Array1<f64>) -> Array1<f64> {
    let m = z.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.mapv(|v| v - lse)
}

/// Mean cross-entropy of `−log softmax(score)[label]` over the batch, with its
/// gradient for every parameter.
pub fn loss_and_grads(model: &Model, inputs: &[ArrayView2<f64>], labels: &[usize]) -> Result<BatchGradients> {
    if inputs.len() != labels.len() || inputs.is_empty() {
        return Err(Error::Shape(format!(
            "{} inputs for {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.spec.n_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range")));
    }
    let n = inputs.len() as f64;
    let mut grads = model.params.zeros_like();
    let mut logits = Array2::zeros((inputs.len(), model.spec.n_classes));
    let mut total = 0.0;
    for (i, (x, &label)) in inputs.iter().zip(labels).enumerate() {
        model.check_input(x)?;
        let mut caches = Vec::with_capacity(model.stages.len());
        let z = model.forward_one(x, Some(&mut caches));
        let logp = log_softmax(&z);
        total -= logp[label];
        let mut dz = logp.mapv(f64::exp);
        dz[label] -= 1.0;
        dz /= n;
        logits.row_mut(i).assign(&z);
        model.backward_one(caches, dz, &mut grads);
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::Numerical(loss));
    }
    Ok(BatchGradients { loss, grads, logits })
}

/// Per-sample cross-entropy for already computed scores.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    logits
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(z, &l)| -log_softmax(&z.to_owned())[l])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand_distr::{Distribution, StandardNormal};

    fn random_batch(n: usize, t: usize, c: usize, seed: u64) -> Vec<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Array2::from_shape_fn((t, c), |_| StandardNormal.sample(&mut rng)))
            .collect()
    }

    fn views(xs: &[Array2<f64>]) -> Vec<ArrayView2<'_, f64>> {
        xs.iter().map(|x| x.view()).collect()
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let spec = ModelSpec::new(Arch::Mcnn, 128, 6, 12);
        let a = build_model(&spec, 0).unwrap();
        let b = build_model(&spec, 0).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), build_model(&spec, 1).unwrap().params());
        assert!(a.n_params() > 0);
    }

    #[test]
    fn output_shapes() {
        let spec = ModelSpec::new(Arch::Mcnn, 128, 6, 12);
        let m = build_model(&spec, 0).unwrap();
        let xs = random_batch(16, 128, 6, 1);
        assert_eq!(m.forward(&views(&xs)).unwrap().dim(), (16, 12));

        let spec = ModelSpec::new(Arch::Transformer, 30, 77, 18);
        let m = build_model(&spec, 0).unwrap();
        let xs = random_batch(3, 30, 77, 2);
        assert_eq!(m.forward(&views(&xs)).unwrap().dim(), (3, 18));

        let spec = ModelSpec::new(Arch::Cnnlstm, 30, 77, 18);
        let m = build_model(&spec, 0).unwrap();
        assert_eq!(m.forward(&views(&xs)).unwrap().dim(), (3, 18));
    }

    #[test]
    fn shape_errors() {
        let spec = ModelSpec::new(Arch::Mcnn, 0, 6, 12);
        assert!(matches!(build_model(&spec, 0), Err(Error::Shape(_))));
        let spec = ModelSpec {
            heads: 3,
            ..ModelSpec::new(Arch::Transformer, 16, 3, 4)
        };
        assert!(matches!(build_model(&spec, 0), Err(Error::Shape(_))));
        let m = build_model(&ModelSpec::new(Arch::Mcnn, 16, 3, 4), 0).unwrap();
        let wrong = random_batch(1, 15, 3, 0);
        assert!(matches!(m.forward(&views(&wrong)), Err(Error::Shape(_))));
    }

    #[test]
    fn uniform_scores_give_log_c() {
        let logits = Array2::zeros((4, 7));
        for l in cross_entropy(&logits, &[0, 1, 2, 6]) {
            assert!((l - 7f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_correct_scores_give_zero_loss() {
        let mut logits = Array2::zeros((1, 3));
        logits[[0, 1]] = 50.0;
        assert!(cross_entropy(&logits, &[1])[0] < 1e-20);
    }

    #[test]
    fn zero_head_gives_log_c() {
        let spec = ModelSpec::tiny(Arch::Mcnn, 12, 2, 5);
        let mut m = build_model(&spec, 0).unwrap();
        for t in m.params_mut().tensors_mut() {
            if t.name.starts_with("head") {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let xs = random_batch(4, 12, 2, 3);
        let out = loss_and_grads(&m, &views(&xs), &[0, 1, 2, 3]).unwrap();
        assert!((out.loss - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn batch_order_does_not_change_mean_loss() {
        for arch in Arch::ALL {
            let spec = ModelSpec::tiny(arch, 10, 3, 4);
            let m = build_model(&spec, 5).unwrap();
            let xs = random_batch(6, 10, 3, 9);
            let labels = [0, 1, 2, 3, 0, 2];
            let a = loss_and_grads(&m, &views(&xs), &labels).unwrap();
            let perm = [3, 0, 5, 1, 4, 2];
            let xp: Vec<_> = perm.iter().map(|&i| xs[i].clone()).collect();
            let lp: Vec<_> = perm.iter().map(|&i| labels[i]).collect();
            let b = loss_and_grads(&m, &views(&xp), &lp).unwrap();
            assert!((a.loss - b.loss).abs() < 1e-9, "{arch:?}");
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = ModelSpec::tiny(Arch::Transformer, 10, 3, 4);
        let m = build_model(&spec, 5).unwrap();
        let xs = random_batch(3, 10, 3, 1);
        assert_eq!(m.forward(&views(&xs)).unwrap(), m.forward(&views(&xs)).unwrap());
    }

    #[test]
    fn non_finite_loss_is_surfaced() {
        let spec = ModelSpec::tiny(Arch::Mcnn, 8, 2, 3);
        let mut m = build_model(&spec, 0).unwrap();
        m.params_mut().tensors_mut()[0].data[0] = f64::NAN;
        let xs = random_batch(2, 8, 2, 0);
        assert!(matches!(loss_and_grads(&m, &views(&xs), &[0, 1]), Err(Error::Numerical(_))));
    }

    #[test]
    fn batch_tensor_layout() {
        // (batch, window_length, n_channels) batches map row-wise to outputs.
        let spec = ModelSpec::tiny(Arch::Cnnlstm, 6, 2, 3);
        let m = build_model(&spec, 0).unwrap();
        let batch = Array3::from_shape_fn((4, 6, 2), |(b, t, c)| (b * 12 + t * 2 + c) as f64 / 10.0);
        let inputs: Vec<_> = batch.outer_iter().collect();
        let out = m.forward(&inputs).unwrap();
        let single = m.forward(&inputs[2..3]).unwrap();
        assert_eq!(out.row(2), single.row(0));
    }
}
