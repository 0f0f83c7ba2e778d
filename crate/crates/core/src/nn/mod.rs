//! Desk-scale neural networks trained by full-batch gradient descent with
//! manual reverse-mode gradients: 2-layer `L(sigma(X W1) W2, T)` and
//! 3-layer `L(sigma(X W1 W2) W3, T)` with a fixed random sign matrix `W3`,
//! optional per-feature batch normalization in front of the activation,
//! Lanczos sharpness on finite-difference Hessian-vector products, and the
//! Frobenius balancing gap `(|W1|_F - |W2|_F)^2`.

pub mod idx;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension {0} must be positive")]
    BadDim(usize),
    #[error("depth must be 2 or 3, got {0}")]
    BadDepth(u32),
    #[error("Frobenius target must be positive, got {0}")]
    BadFrobenius(f64),
    #[error("huber delta must be positive, got {0}")]
    BadHuberDelta(f64),
    #[error("relu exponent must be at least 2, got {0}")]
    BadReluExponent(u32),
    #[error("initial weight draw had zero norm twice")]
    ZeroNormDraw,
    #[error("dataset is {got}-dimensional but the network expects {want} inputs")]
    InputDim { got: usize, want: usize },
    #[error("dataset targets are {got}-dimensional but the network emits {want}")]
    TargetDim { got: usize, want: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Loss {
    L2,
    Huber {
        #[serde(default = "default_huber_delta")]
        delta: f64,
    },
}

fn default_huber_delta() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Tanh,
    Relu,
    ReluK { k: u32 },
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::ReluK { k } => z.max(0.0).powi(*k as i32),
        }
    }

    /// Subgradient 0 at the kink.
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::ReluK { k } => *k as f64 * z.max(0.0).powi(*k as i32 - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub seed: u64,
    pub frob_w1: f64,
    pub frob_w2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// (inputs, hidden, outputs).
    pub dims: [usize; 3],
    /// 2, or 3 with a fixed random +-1 last layer and linear first
    /// activation.
    pub depth: u32,
    pub loss: Loss,
    pub activation: Activation,
    pub batch_norm: bool,
    pub init: InitConfig,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f64,
}

fn default_bn_eps() -> f64 {
    1e-5
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        for &d in &self.dims {
            if d == 0 {
                return Err(NnError::BadDim(d));
            }
        }
        if self.depth != 2 && self.depth != 3 {
            return Err(NnError::BadDepth(self.depth));
        }
        if self.init.frob_w1 <= 0.0 {
            return Err(NnError::BadFrobenius(self.init.frob_w1));
        }
        if self.init.frob_w2 <= 0.0 {
            return Err(NnError::BadFrobenius(self.init.frob_w2));
        }
        if let Loss::Huber { delta } = self.loss {
            if delta <= 0.0 {
                return Err(NnError::BadHuberDelta(delta));
            }
        }
        if let Activation::ReluK { k } = self.activation {
            if k < 2 {
                return Err(NnError::BadReluExponent(k));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    /// samples x inputs.
    pub inputs: DMatrix<f64>,
    /// samples x outputs, one-hot rows.
    pub targets: DMatrix<f64>,
}

impl Dataset {
    /// Uniform `[0, 1)` inputs with uniformly random one-hot targets.
    pub fn synthetic(seed: u64, samples: usize, n_in: usize, n_out: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = DMatrix::from_fn(samples, n_in, |_, _| rng.random_range(0.0..1.0));
        let mut targets = DMatrix::zeros(samples, n_out);
        for i in 0..samples {
            let class = rng.random_range(0..n_out);
            targets[(i, class)] = 1.0;
        }
        Self { inputs, targets }
    }

    pub fn samples(&self) -> usize {
        self.inputs.nrows()
    }
}

/// Weights plus the architecture they belong to. The fixed last layer of
/// the 3-layer variant is drawn at init and never updated.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: NetworkConfig,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub w3: Option<DMatrix<f64>>,
}

fn uniform_layer(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> DMatrix<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

fn rescale_to(mut m: DMatrix<f64>, target: f64) -> Result<DMatrix<f64>, NnError> {
    let norm = m.norm();
    if norm == 0.0 {
        return Err(NnError::ZeroNormDraw);
    }
    m *= target / norm;
    Ok(m)
}

impl Network {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` draws rescaled so the
    /// Frobenius norms match the configured targets exactly.
    pub fn init(config: NetworkConfig) -> Result<Self, NnError> {
        config.validate()?;
        let [n0, n1, n2] = config.dims;
        let mut rng = ChaCha8Rng::seed_from_u64(config.init.seed);
        let draw = |rng: &mut ChaCha8Rng| -> (DMatrix<f64>, DMatrix<f64>) {
            (uniform_layer(rng, n0, n1, n0), uniform_layer(rng, n1, n2, n1))
        };
        let (raw1, raw2) = draw(&mut rng);
        let (raw1, raw2) = if raw1.norm() == 0.0 || raw2.norm() == 0.0 {
            let mut retry = ChaCha8Rng::seed_from_u64(config.init.seed.wrapping_add(1));
            draw(&mut retry)
        } else {
            (raw1, raw2)
        };
        let w1 = rescale_to(raw1, config.init.frob_w1)?;
        let w2 = rescale_to(raw2, config.init.frob_w2)?;
        let w3 = if config.depth == 3 {
            Some(DMatrix::from_fn(n2, n2, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 }))
        } else {
            None
        };
        Ok(Self { config, w1, w2, w3 })
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.w2.len()
    }

    /// Trainable parameters as one vector; `w3` is fixed and excluded.
    pub fn flatten(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.param_count());
        v.as_mut_slice()[..self.w1.len()].copy_from_slice(self.w1.as_slice());
        v.as_mut_slice()[self.w1.len()..].copy_from_slice(self.w2.as_slice());
        v
    }

    pub fn set_flat(&mut self, v: &DVector<f64>) {
        assert_eq!(v.len(), self.param_count());
        let split = self.w1.len();
        self.w1.as_mut_slice().copy_from_slice(&v.as_slice()[..split]);
        self.w2.as_mut_slice().copy_from_slice(&v.as_slice()[split..]);
    }

    pub fn balancing_gap_sq(&self) -> f64 {
        let gap = self.w1.norm() - self.w2.norm();
        gap * gap
    }

    fn check_shapes(&self, data: &Dataset) -> Result<(), NnError> {
        let [n0, _, n2] = self.config.dims;
        if data.inputs.ncols() != n0 {
            return Err(NnError::InputDim { got: data.inputs.ncols(), want: n0 });
        }
        if data.targets.ncols() != n2 {
            return Err(NnError::TargetDim { got: data.targets.ncols(), want: n2 });
        }
        Ok(())
    }

    /// Network outputs, samples x outputs.
    pub fn forward(&self, data: &Dataset) -> DMatrix<f64> {
        match self.config.depth {
            2 => {
                let z = &data.inputs * &self.w1;
                let z = self.maybe_bn(z);
                let h = z.map(|v| self.config.activation.apply(v));
                h * &self.w2
            }
            _ => {
                let b = (&data.inputs * &self.w1) * &self.w2;
                let b = self.maybe_bn(b);
                let g = b.map(|v| self.config.activation.apply(v));
                g * self.w3.as_ref().expect("depth 3 carries a fixed last layer")
            }
        }
    }

    fn maybe_bn(&self, z: DMatrix<f64>) -> DMatrix<f64> {
        if !self.config.batch_norm {
            return z;
        }
        batch_norm_forward(&z, self.config.bn_eps).0
    }

    /// Mean loss over all output entries.
    pub fn loss(&self, data: &Dataset) -> f64 {
        self.check_shapes(data).expect("dataset shape");
        let out = self.forward(data);
        let n = (out.nrows() * out.ncols()) as f64;
        let mut acc = 0.0;
        for (o, t) in out.iter().zip(data.targets.iter()) {
            acc += match self.config.loss {
                Loss::L2 => 0.5 * (t - o) * (t - o),
                Loss::Huber { delta } => {
                    let d = (t - o).abs();
                    if d <= delta {
                        0.5 * d * d
                    } else {
                        delta * (d - 0.5 * delta)
                    }
                }
            };
        }
        acc / n
    }

    /// d loss / d output for the mean-entry loss.
    fn loss_grad(&self, out: &DMatrix<f64>, targets: &DMatrix<f64>) -> DMatrix<f64> {
        let n = (out.nrows() * out.ncols()) as f64;
        DMatrix::from_fn(out.nrows(), out.ncols(), |i, j| {
            let d = out[(i, j)] - targets[(i, j)];
            let g = match self.config.loss {
                Loss::L2 => d,
                Loss::Huber { delta } => d.clamp(-delta, delta),
            };
            g / n
        })
    }

    /// Reverse-mode gradient of the full-batch loss in the flat layout.
    pub fn grad(&self, data: &Dataset) -> DVector<f64> {
        self.check_shapes(data).expect("dataset shape");
        let (dw1, dw2) = match self.config.depth {
            2 => {
                let z = &data.inputs * &self.w1;
                let (zn, bn_ctx) = if self.config.batch_norm {
                    let (zn, ctx) = batch_norm_forward(&z, self.config.bn_eps);
                    (zn, Some(ctx))
                } else {
                    (z.clone(), None)
                };
                let h = zn.map(|v| self.config.activation.apply(v));
                let out = &h * &self.w2;
                let dout = self.loss_grad(&out, &data.targets);
                let dw2 = h.transpose() * &dout;
                let dh = dout * self.w2.transpose();
                let dzn = dh.zip_map(&zn, |g, v| g * self.config.activation.derivative(v));
                let dz = match bn_ctx {
                    Some(ctx) => batch_norm_backward(&dzn, &ctx),
                    None => dzn,
                };
                let dw1 = data.inputs.transpose() * dz;
                (dw1, dw2)
            }
            _ => {
                let a = &data.inputs * &self.w1;
                let b = &a * &self.w2;
                let (bn, bn_ctx) = if self.config.batch_norm {
                    let (bn, ctx) = batch_norm_forward(&b, self.config.bn_eps);
                    (bn, Some(ctx))
                } else {
                    (b.clone(), None)
                };
                let g = bn.map(|v| self.config.activation.apply(v));
                let w3 = self.w3.as_ref().expect("depth 3 carries a fixed last layer");
                let out = &g * w3;
                let dout = self.loss_grad(&out, &data.targets);
                let dg = dout * w3.transpose();
                let dbn = dg.zip_map(&bn, |gr, v| gr * self.config.activation.derivative(v));
                let db = match bn_ctx {
                    Some(ctx) => batch_norm_backward(&dbn, &ctx),
                    None => dbn,
                };
                let dw2 = a.transpose() * &db;
                let da = db * self.w2.transpose();
                let dw1 = data.inputs.transpose() * da;
                (dw1, dw2)
            }
        };
        let mut v = DVector::zeros(self.param_count());
        v.as_mut_slice()[..dw1.len()].copy_from_slice(dw1.as_slice());
        v.as_mut_slice()[dw1.len()..].copy_from_slice(dw2.as_slice());
        v
    }

    fn grad_at(&self, data: &Dataset, params: &DVector<f64>) -> DVector<f64> {
        let mut probe = self.clone();
        probe.set_flat(params);
        probe.grad(data)
    }

    /// Leading Hessian eigenvalue by Lanczos on central-difference
    /// Hessian-vector products of the analytic gradient.
    pub fn sharpness_lanczos(&self, data: &Dataset, iters: usize, seed: u64) -> f64 {
        let theta = self.flatten();
        let scale = 1e-4 * (1.0 + theta.norm());
        let hvp = |v: &DVector<f64>| {
            let eps = scale / v.norm();
            let plus = self.grad_at(data, &(&theta + &(v * eps)));
            let minus = self.grad_at(data, &(&theta - &(v * eps)));
            (plus - minus) / (2.0 * eps)
        };
        lanczos_max_eig(self.param_count(), iters, seed, hvp)
    }

    /// Log-log slope of the output norm as the pre-activation input is
    /// scaled: the growth exponent the activation (with or without batch
    /// normalization) imposes on the objective.
    pub fn output_scaling_slope(&self, data: &Dataset, scales: &[f64]) -> f64 {
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &s in scales {
            let mut probe = self.clone();
            probe.w1 *= s;
            let norm = probe.forward(data).norm().max(1e-300);
            let (lx, ly) = (s.ln(), norm.ln());
            sx += lx;
            sy += ly;
            sxx += lx * lx;
            sxy += lx * ly;
        }
        let n = scales.len() as f64;
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    /// Full-batch GD. Sharpness is evaluated at recorded epochs only.
    pub fn train(&mut self, data: &Dataset, cfg: &TrainConfig) -> NnTrajectory {
        let mut records = Vec::new();
        let mut diverged = false;
        let mut epoch = 0u64;
        loop {
            let loss = self.loss(data);
            if !loss.is_finite() {
                diverged = true;
                break;
            }
            if epoch.is_multiple_of(cfg.record_stride) || epoch == cfg.epochs {
                records.push(NnRecord {
                    epoch,
                    loss,
                    sharpness: self.sharpness_lanczos(data, cfg.lanczos_iters, cfg.lanczos_seed),
                    balancing_gap_sq: self.balancing_gap_sq(),
                });
            }
            if epoch == cfg.epochs {
                break;
            }
            let g = self.grad(data);
            let mut theta = self.flatten();
            theta -= g * cfg.learning_rate;
            self.set_flat(&theta);
            epoch += 1;
        }
        NnTrajectory { records, diverged }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: u64,
    pub record_stride: u64,
    pub lanczos_iters: usize,
    pub lanczos_seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct NnRecord {
    pub epoch: u64,
    pub loss: f64,
    pub sharpness: f64,
    pub balancing_gap_sq: f64,
}

#[derive(Clone, Debug)]
pub struct NnTrajectory {
    pub records: Vec<NnRecord>,
    pub diverged: bool,
}

impl NnTrajectory {
    pub fn max_sharpness(&self) -> f64 {
        self.records.iter().map(|r| r.sharpness).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_record(&self) -> &NnRecord {
        self.records.last().expect("epoch 0 is always recorded")
    }
}

struct BnContext {
    z_hat: DMatrix<f64>,
    inv_std: Vec<f64>,
}

/// Per-feature standardization over the batch with biased variance and no
/// learnable affine part.
fn batch_norm_forward(z: &DMatrix<f64>, eps: f64) -> (DMatrix<f64>, BnContext) {
    let n = z.nrows() as f64;
    let mut out = z.clone();
    let mut inv_std = Vec::with_capacity(z.ncols());
    for j in 0..z.ncols() {
        let col = z.column(j);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let is = 1.0 / (var + eps).sqrt();
        inv_std.push(is);
        for i in 0..z.nrows() {
            out[(i, j)] = (z[(i, j)] - mean) * is;
        }
    }
    let ctx = BnContext { z_hat: out.clone(), inv_std };
    (out, ctx)
}

fn batch_norm_backward(d_out: &DMatrix<f64>, ctx: &BnContext) -> DMatrix<f64> {
    let n = d_out.nrows() as f64;
    let mut dz = d_out.clone();
    for j in 0..d_out.ncols() {
        let dcol = d_out.column(j);
        let zcol = ctx.z_hat.column(j);
        let mean_d = dcol.sum() / n;
        let mean_dz = dcol.iter().zip(zcol.iter()).map(|(d, z)| d * z).sum::<f64>() / n;
        for i in 0..d_out.nrows() {
            dz[(i, j)] = ctx.inv_std[j] * (dcol[i] - mean_d - zcol[i] * mean_dz);
        }
    }
    dz
}

/// Largest eigenvalue of a symmetric operator by Lanczos with full
/// reorthogonalization; on breakdown the Ritz values accumulated so far
/// are returned.
pub fn lanczos_max_eig(
    dim: usize,
    iters: usize,
    seed: u64,
    mut matvec: impl FnMut(&DVector<f64>) -> DVector<f64>,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0f64));
    v /= v.norm();
    let mut basis: Vec<DVector<f64>> = vec![v.clone()];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let m = iters.max(1).min(dim);
    for j in 0..m {
        let mut w = matvec(&basis[j]);
        let alpha = basis[j].dot(&w);
        alphas.push(alpha);
        w -= &basis[j] * alpha;
        if j > 0 {
            w -= &basis[j - 1] * betas[j - 1];
        }
        // Two passes of reorthogonalization against the whole basis.
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w -= b * c;
            }
        }
        let beta = w.norm();
        if !beta.is_finite() || beta < 1e-12 * alpha.abs().max(1.0) || j + 1 == m {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    let k = alphas.len();
    let mut t = DMatrix::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    t.symmetric_eigen().eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// `h = c_target / S_0` with `S_0` measured by Lanczos at the initial
/// weights; returns `(h, s_0)`.
pub fn select_learning_rate(
    net: &Network,
    data: &Dataset,
    c_target: f64,
    lanczos_iters: usize,
    lanczos_seed: u64,
) -> (f64, f64) {
    let s0 = net.sharpness_lanczos(data, lanczos_iters, lanczos_seed);
    (c_target / s0, s0)
}
