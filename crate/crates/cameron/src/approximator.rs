//! Small feed-forward function approximators with hand-rolled reverse-mode
//! gradients, plus SGD/Adam steps.
//!
//! Heads:
//! - `ScalarSigmoid`: one output in (0,1), clamped to `[SIGMOID_CLAMP, 1-SIGMOID_CLAMP]`
//!   so every log term downstream stays finite.
//! - `ScalarLinear`: one unbounded output.
//! - `Gaussian`: a mean vector and a strictly positive diagonal scale
//!   (softplus of the raw output).
//!
//! Losses in the rest of the crate are written as explicit functions of the
//! parameters with any importance weights precomputed and passed in as
//! constants; that is the stop-gradient contract. Gradients are checked
//! against central finite differences in the tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sigmoid outputs are clamped away from {0,1} by this margin, bounding the
/// density ratio E/(1-E) by roughly 1e6.
pub const SIGMOID_CLAMP: f64 = 1e-6;

/// Learning rate used by every update unless overridden.
pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    ScalarSigmoid,
    ScalarLinear,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        head: Head,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidParameter(
                "mlp dimensions must be positive".into(),
            ));
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidParameter(
                "hidden widths must be positive".into(),
            ));
        }
        if matches!(head, Head::ScalarSigmoid | Head::ScalarLinear) && output_dim != 1 {
            return Err(Error::InvalidParameter(
                "scalar heads require output_dim == 1".into(),
            ));
        }
        Ok(Self {
            input_dim,
            output_dim,
            hidden,
            activation,
            head,
        })
    }

    /// Width of the final linear layer (Gaussian heads emit mean and raw scale).
    fn final_out(&self) -> usize {
        match self.head {
            Head::Gaussian => 2 * self.output_dim,
            _ => self.output_dim,
        }
    }

    fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.final_out());
        dims
    }

    pub fn param_count(&self) -> usize {
        let dims = self.dims();
        dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }
}

/// Flat parameter storage with a step counter. Entries are kept finite:
/// the optimiser rejects non-finite gradients before touching them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamBlock {
    pub values: Vec<f64>,
    pub step: u64,
}

impl ParamBlock {
    /// Small-uniform initialisation in ±0.05.
    pub fn init<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Self {
        let values = (0..spec.param_count())
            .map(|_| rng.gen_range(-0.05..0.05))
            .collect();
        Self { values, step: 0 }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            values: vec![0.0; spec.param_count()],
            step: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Output {
    Scalar(f64),
    Gaussian { mean: Vec<f64>, scale: Vec<f64> },
}

impl Output {
    pub fn scalar(&self) -> f64 {
        match self {
            Output::Scalar(v) => *v,
            Output::Gaussian { .. } => panic!("gaussian output used as scalar"),
        }
    }

    pub fn gaussian(&self) -> (&[f64], &[f64]) {
        match self {
            Output::Gaussian { mean, scale } => (mean, scale),
            Output::Scalar(_) => panic!("scalar output used as gaussian"),
        }
    }
}

/// Cached activations from a forward pass, consumed by [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input to each linear layer (acts[0] is the network input).
    acts: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Output of the final linear layer, before the head.
    final_pre: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: ParamBlock,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn clamp_sigmoid(y: f64) -> f64 {
    y.clamp(SIGMOID_CLAMP, 1.0 - SIGMOID_CLAMP)
}

impl Mlp {
    pub fn new<R: Rng>(spec: MlpSpec, rng: &mut R) -> Self {
        let params = ParamBlock::init(&spec, rng);
        Self { spec, params }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Output> {
        Ok(self.forward_trace(input)?.0)
    }

    /// Convenience for scalar heads.
    pub fn scalar(&self, input: &[f64]) -> Result<f64> {
        Ok(self.forward(input)?.scalar())
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<(Output, Trace)> {
        if input.len() != self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim,
                got: input.len(),
            });
        }
        let dims = self.spec.dims();
        let n_layers = dims.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers.saturating_sub(1));
        let mut cur = input.to_vec();
        let mut offset = 0usize;
        for l in 0..n_layers {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let w = &self.params.values[offset..offset + n_out * n_in];
            let b = &self.params.values[offset + n_out * n_in..offset + n_out * n_in + n_out];
            offset += n_out * n_in + n_out;
            let mut z = vec![0.0; n_out];
            for (j, zj) in z.iter_mut().enumerate() {
                let row = &w[j * n_in..(j + 1) * n_in];
                let mut acc = b[j];
                for (wi, xi) in row.iter().zip(cur.iter()) {
                    acc += wi * xi;
                }
                *zj = acc;
            }
            acts.push(cur);
            if l + 1 < n_layers {
                pre.push(z.clone());
                cur = z
                    .iter()
                    .map(|&v| match self.spec.activation {
                        Activation::Tanh => v.tanh(),
                        Activation::Relu => v.max(0.0),
                    })
                    .collect();
            } else {
                let output = match self.spec.head {
                    Head::ScalarSigmoid => Output::Scalar(clamp_sigmoid(sigmoid(z[0]))),
                    Head::ScalarLinear => Output::Scalar(z[0]),
                    Head::Gaussian => {
                        let k = self.spec.output_dim;
                        Output::Gaussian {
                            mean: z[..k].to_vec(),
                            scale: z[k..].iter().map(|&v| softplus(v)).collect(),
                        }
                    }
                };
                let trace = Trace {
                    acts,
                    pre,
                    final_pre: z,
                };
                return Ok((output, trace));
            }
        }
        unreachable!("mlp has at least one layer");
    }

    /// Reverse pass. `dl_dout` is the loss gradient with respect to the head
    /// output: `[dl/dy]` for scalar heads, `[dl/dmean.., dl/dscale..]` for the
    /// Gaussian head. Returns the parameter gradient and the gradient with
    /// respect to the network input.
    pub fn backward(&self, trace: &Trace, dl_dout: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let dims = self.spec.dims();
        let n_layers = dims.len() - 1;
        // Head: convert dl_dout into gradient wrt the final linear output.
        let mut dz: Vec<f64> = match self.spec.head {
            Head::ScalarSigmoid => {
                let y = sigmoid(trace.final_pre[0]);
                let d = if y <= SIGMOID_CLAMP || y >= 1.0 - SIGMOID_CLAMP {
                    0.0
                } else {
                    y * (1.0 - y)
                };
                vec![dl_dout[0] * d]
            }
            Head::ScalarLinear => vec![dl_dout[0]],
            Head::Gaussian => {
                let k = self.spec.output_dim;
                let mut v = Vec::with_capacity(2 * k);
                v.extend_from_slice(&dl_dout[..k]);
                for i in 0..k {
                    v.push(dl_dout[k + i] * sigmoid(trace.final_pre[k + i]));
                }
                v
            }
        };
        let mut grad = vec![0.0; self.params.values.len()];
        // Layer offsets, front to back.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0usize;
        for l in 0..n_layers {
            offsets.push(off);
            off += dims[l + 1] * dims[l] + dims[l + 1];
        }
        let mut dl_dinput = Vec::new();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let off = offsets[l];
            let a = &trace.acts[l];
            let w = &self.params.values[off..off + n_out * n_in];
            // Parameter gradients.
            for j in 0..n_out {
                let g = dz[j];
                let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                for (gi, ai) in row.iter_mut().zip(a.iter()) {
                    *gi += g * ai;
                }
                grad[off + n_out * n_in + j] += g;
            }
            // Propagate to the layer input.
            let mut da = vec![0.0; n_in];
            for j in 0..n_out {
                let g = dz[j];
                let row = &w[j * n_in..(j + 1) * n_in];
                for (di, wi) in da.iter_mut().zip(row.iter()) {
                    *di += g * wi;
                }
            }
            if l == 0 {
                dl_dinput = da;
            } else {
                let z_prev = &trace.pre[l - 1];
                dz = da
                    .iter()
                    .zip(z_prev.iter())
                    .map(|(&d, &z)| match self.spec.activation {
                        Activation::Tanh => d * (1.0 - z.tanh().powi(2)),
                        Activation::Relu => {
                            if z > 0.0 {
                                d
                            } else {
                                0.0
                            }
                        }
                    })
                    .collect();
            }
        }
        (grad, dl_dinput)
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_prob(mean: &[f64], scale: &[f64], x: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let z = (x[i] - mean[i]) / scale[i];
        lp += -0.5 * z * z - scale[i].ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    lp
}

/// Gradients of [`gaussian_log_prob`] with respect to mean, scale and x.
pub fn gaussian_log_prob_grad(
    mean: &[f64],
    scale: &[f64],
    x: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let k = mean.len();
    let mut dmean = vec![0.0; k];
    let mut dscale = vec![0.0; k];
    let mut dx = vec![0.0; k];
    for i in 0..k {
        let z = (x[i] - mean[i]) / scale[i];
        dmean[i] = z / scale[i];
        dx[i] = -z / scale[i];
        dscale[i] = (z * z - 1.0) / scale[i];
    }
    (dmean, dscale, dx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            ..Self::sgd(lr)
        }
    }

    /// One descent step. Non-finite gradients are rejected with the
    /// parameters left untouched.
    pub fn step(&mut self, params: &mut ParamBlock, grad: &[f64]) -> Result<()> {
        if grad.len() != params.values.len() {
            return Err(Error::DimensionMismatch {
                expected: params.values.len(),
                got: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.values.iter_mut().zip(grad.iter()) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != grad.len() {
                    self.m = vec![0.0; grad.len()];
                    self.v = vec![0.0; grad.len()];
                    self.t = 0;
                }
                self.t += 1;
                let b1t = 1.0 - self.beta1.powi(self.t as i32);
                let b2t = 1.0 - self.beta2.powi(self.t as i32);
                for i in 0..grad.len() {
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                    let mhat = self.m[i] / b1t;
                    let vhat = self.v[i] / b2t;
                    params.values[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
        params.step += 1;
        debug_assert!(params.values.iter().all(|p| p.is_finite()));
        Ok(())
    }
}

/// Maximum relative error between `grad` and a central finite-difference
/// estimate of `f`'s gradient at `params`.
pub fn max_rel_error_fd(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    grad: &[f64],
    h: f64,
) -> f64 {
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p);
        p[i] = orig - h;
        let fm = f(&p);
        p[i] = orig;
        let fd = (fp - fm) / (2.0 * h);
        let err = (grad[i] - fd).abs() / (grad[i].abs() + fd.abs() + 1e-6);
        worst = worst.max(err);
    }
    worst
}
