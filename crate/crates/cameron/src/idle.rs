//! Off-policy learning of discounted occupancy measures.
//!
//! A single evaluation function E plays both the classifier role (trained on
//! an importance-weighted bootstrap loss whose stationary point encodes the
//! occupancy through the ratio E/(1−E)) and the discriminator role of a
//! conditional GAN whose generator G produces future state-action pairs. Both
//! objectives are combined with a Lagrange multiplier λ and the two networks
//! are updated in alternation.
//!
//! All importance weights (`w`, `w_d`) are precomputed by the caller and enter
//! the losses as constants: that is the stop-gradient contract, and it is what
//! makes the analytic gradients here match finite differences exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::approximator::{Activation, Head, Mlp, MlpSpec, Optimizer, DEFAULT_LR};
use crate::datasets::{sample_batch, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::mdp::{Env, FiniteMdp, Policy};

/// Default Lagrange multiplier tying the GAN constraint into the classifier
/// objective.
pub const DEFAULT_LAMBDA: f64 = 0.03;

/// Default weight of the generator's latent-entropy bonus.
pub const DEFAULT_GEN_ENTROPY: f64 = 0.05;

/// Scaling of the bootstrap term in the classifier loss.
///
/// `AsWritten` keeps the three-term loss exactly as displayed; with it the
/// importance-weighted bootstrap is undiscounted and the loss has no interior
/// stationary point (the bootstrap recursion u = (1−γ)P₁ + K u has a singular
/// kernel), so training drifts toward the clamp. `GammaScaled` multiplies the
/// bootstrap term by γ, giving the well-defined fixed point
/// E/(1−E) · P_D = (1−γ) Σ_t γ^t P_{t+1}; it is the default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BootstrapScaling {
    AsWritten,
    GammaScaled,
}

impl BootstrapScaling {
    fn factor(&self, gamma: f64) -> f64 {
        match self {
            BootstrapScaling::AsWritten => 1.0,
            BootstrapScaling::GammaScaled => gamma,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct IdleConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    /// Generator learning rate; `None` reuses `lr`. A slower generator lets
    /// the evaluation function track its own balance point between updates,
    /// which stabilises the adversarial game.
    pub lr_g: Option<f64>,
    /// Weight of the entropy bonus on the generator's latent Gaussian
    /// (Σ log scale). Keeps the noise scales from collapsing, so the softmax
    /// relaxation never saturates into a zero-gradient point mass.
    pub gen_entropy: f64,
    pub bootstrap: BootstrapScaling,
    /// Hidden widths of the evaluation function. An empty list on a finite
    /// environment makes E an exact table over (s₊,a₊,s₀).
    pub hidden_e: Vec<usize>,
    pub hidden_g: Vec<usize>,
}

impl Default for IdleConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: DEFAULT_LAMBDA,
            iterations: 100,
            batch: 64,
            lr: DEFAULT_LR,
            lr_g: None,
            gen_entropy: DEFAULT_GEN_ENTROPY,
            bootstrap: BootstrapScaling::GammaScaled,
            hidden_e: vec![64, 64, 64],
            hidden_g: vec![64, 64, 64],
        }
    }
}

impl IdleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {} not in [0,1)",
                self.gamma
            )));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter("lambda must be >= 0".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidParameter("batch must be positive".into()));
        }
        Ok(())
    }
}

/// E/(1−E); finite because sigmoid outputs are clamped.
pub fn density_ratio(e: f64) -> f64 {
    e / (1.0 - e)
}

/// Input dimension of the evaluation function: a joint one-hot over
/// (s₊, a₊, s₀) for finite environments, a concatenation for continuous ones.
pub fn eval_input_dim(env: &Env) -> usize {
    match env {
        Env::Finite(m) => m.n_states * m.n_actions * m.n_states,
        Env::Continuous(_) => 2 * env.enc_state_dim() + env.enc_action_dim(),
    }
}

/// Builds the evaluation-function input from already-encoded components.
/// Finite environments use the outer product of the three one-hot blocks,
/// which stays differentiable for relaxed (generator-produced) components and
/// reduces to a joint one-hot at the vertices.
pub fn eval_encode_parts(env: &Env, s_enc: &[f64], a_enc: &[f64], cond_enc: &[f64]) -> Vec<f64> {
    match env {
        Env::Finite(_) => {
            let mut v = Vec::with_capacity(s_enc.len() * a_enc.len() * cond_enc.len());
            for si in s_enc {
                for aj in a_enc {
                    let sa = si * aj;
                    for ck in cond_enc {
                        v.push(sa * ck);
                    }
                }
            }
            v
        }
        Env::Continuous(_) => {
            let mut v = Vec::with_capacity(s_enc.len() + a_enc.len() + cond_enc.len());
            v.extend_from_slice(s_enc);
            v.extend_from_slice(a_enc);
            v.extend_from_slice(cond_enc);
            v
        }
    }
}

/// Gradient of [`eval_encode_parts`] with respect to the pair components:
/// maps dL/d(encoded input) back to (dL/ds_enc, dL/da_enc).
pub fn eval_encode_grad(
    env: &Env,
    dl: &[f64],
    s_enc: &[f64],
    a_enc: &[f64],
    cond_enc: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    match env {
        Env::Finite(_) => {
            let (ns, na, nc) = (s_enc.len(), a_enc.len(), cond_enc.len());
            let mut ds = vec![0.0; ns];
            let mut da = vec![0.0; na];
            for i in 0..ns {
                for j in 0..na {
                    for (k, ck) in cond_enc.iter().enumerate() {
                        let g = dl[(i * na + j) * nc + k] * ck;
                        ds[i] += g * a_enc[j];
                        da[j] += g * s_enc[i];
                    }
                }
            }
            (ds, da)
        }
        Env::Continuous(_) => (
            dl[..s_enc.len()].to_vec(),
            dl[s_enc.len()..s_enc.len() + a_enc.len()].to_vec(),
        ),
    }
}

/// Encodes raw record components into an evaluation-function input.
pub fn eval_encode_raw(env: &Env, pair_s: &[f64], pair_a: &[f64], cond_s: &[f64]) -> Vec<f64> {
    eval_encode_parts(
        env,
        &env.encode_state(pair_s),
        &env.encode_action(pair_a),
        &env.encode_state(cond_s),
    )
}

/// The combined classifier/discriminator network.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvaluationFunction {
    pub mlp: Mlp,
}

impl EvaluationFunction {
    pub fn new(env: &Env, hidden: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let spec = MlpSpec::new(
            eval_input_dim(env),
            1,
            hidden,
            Activation::Tanh,
            Head::ScalarSigmoid,
        )?;
        Ok(Self {
            mlp: Mlp::new(spec, rng),
        })
    }

    /// E(s₊,a₊|s₀) from raw components.
    pub fn value(&self, env: &Env, pair_s: &[f64], pair_a: &[f64], cond_s: &[f64]) -> Result<f64> {
        self.mlp.scalar(&eval_encode_raw(env, pair_s, pair_a, cond_s))
    }

    pub fn ratio(&self, env: &Env, pair_s: &[f64], pair_a: &[f64], cond_s: &[f64]) -> Result<f64> {
        Ok(density_ratio(self.value(env, pair_s, pair_a, cond_s)?))
    }
}

/// Exact tabular evaluation function: a zero-hidden-layer network over the
/// joint one-hot whose output reproduces `table[s₀][x]` entry-wise.
pub fn tabular_evaluation(mdp: &FiniteMdp, table: &[Vec<f64>]) -> Result<EvaluationFunction> {
    let ns = mdp.n_states;
    let na = mdp.n_actions;
    let dim = ns * na * ns;
    let spec = MlpSpec::new(dim, 1, vec![], Activation::Tanh, Head::ScalarSigmoid)?;
    let mut params = crate::approximator::ParamBlock::zeros(&spec);
    for s0 in 0..ns {
        for x in 0..ns * na {
            let c: f64 = table[s0][x];
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::InvalidParameter(format!(
                    "classifier value {c} outside [0,1]"
                )));
            }
            let clamped = c.clamp(1e-9, 1.0 - 1e-9);
            params.values[x * ns + s0] = (clamped / (1.0 - clamped)).ln();
        }
    }
    Ok(EvaluationFunction {
        mlp: Mlp { spec, params },
    })
}

/// Numerically stable in-place softmax.
fn softmax_inplace(x: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in x.iter_mut() {
        *v /= z;
    }
}

/// Backward through `y = softmax(x)`: dL/dx_i = y_i (dL/dy_i − ⟨dL/dy, y⟩).
fn softmax_backward_inplace(d: &mut [f64], y: &[f64]) {
    let dot: f64 = d.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
    for (di, &yi) in d.iter_mut().zip(y.iter()) {
        *di = yi * (*di - dot);
    }
}

/// Conditional generator s₀ → Gaussian over encoded (s₊, a₊).
///
/// On finite environments the encoded pairs are one-hot vertices, so relaxed
/// samples are projected with a per-block softmax onto the state and action
/// probability simplexes. Without the projection the generator drifts off the
/// simplex, where a tabular evaluation function (multilinear in the encoding)
/// extrapolates without limit and the GAN game degenerates; on the simplex
/// its extrema sit at the vertices. Continuous encodings are unbounded and
/// pass through unchanged.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Generator {
    pub mlp: Mlp,
    /// Length of the state block under simplex projection; 0 disables it.
    #[serde(default)]
    pub state_block: usize,
}

impl Generator {
    pub fn new(env: &Env, hidden: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let spec = MlpSpec::new(
            env.enc_state_dim(),
            env.enc_state_dim() + env.enc_action_dim(),
            hidden,
            Activation::Tanh,
            Head::Gaussian,
        )?;
        Ok(Self {
            mlp: Mlp::new(spec, rng),
            state_block: match env {
                Env::Finite(_) => env.enc_state_dim(),
                Env::Continuous(_) => 0,
            },
        })
    }

    fn project(&self, pair: &mut [f64]) {
        if self.state_block > 0 {
            let (s, a) = pair.split_at_mut(self.state_block);
            softmax_inplace(s);
            softmax_inplace(a);
        }
    }

    /// Relaxed (encoded-space) sample via the reparameterisation
    /// pair = mean + scale ⊙ ε, simplex-projected per block when finite.
    pub fn sample_relaxed<R: Rng>(&self, cond_enc: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let out = self.mlp.forward(cond_enc)?;
        let (mean, scale) = out.gaussian();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut pair: Vec<f64> = mean
            .iter()
            .zip(scale.iter())
            .map(|(&m, &s)| m + s * normal.sample(rng))
            .collect();
        self.project(&mut pair);
        Ok(pair)
    }

    /// Decoded sample: raw (state, action) of the environment.
    pub fn sample<R: Rng>(
        &self,
        env: &Env,
        cond_state: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let relaxed = self.sample_relaxed(&env.encode_state(cond_state), rng)?;
        let (s_part, a_part) = relaxed.split_at(env.enc_state_dim());
        Ok((env.decode_state(s_part), env.decode_action(a_part)))
    }
}

/// One classifier-loss term with everything precomputed: encoded inputs, the
/// policy importance factor π(a_t|s_t), the frozen bootstrap weight
/// w = E/(1−E) at (s₊,a₊|s_{t+1}), and a probability weight (1/batch for
/// Monte-Carlo batches, an exact probability for enumerated expectations).
#[derive(Clone, Debug)]
pub struct ClassifierSample {
    pub next_input: Vec<f64>,
    pub future_input: Vec<f64>,
    pub pi_factor: f64,
    pub w: f64,
    pub weight: f64,
}

/// Importance-weighted classifier loss
/// Σ weight · π(a_t|s_t) [ (1−γ) log E(s_{t+1},a_{t+1}|s_t)
///   + b·⌊w⌋ log E(s₊,a₊|s_t) + log(1−E(s₊,a₊|s_t)) ],
/// with b = 1 (as written) or γ (scaled). Returns the value and its gradient
/// with respect to the evaluation parameters; the trainer ascends it.
pub fn classifier_loss(
    e: &Mlp,
    samples: &[ClassifierSample],
    gamma: f64,
    scaling: BootstrapScaling,
) -> Result<(f64, Vec<f64>)> {
    let b = scaling.factor(gamma);
    let mut value = 0.0;
    let mut grad = vec![0.0; e.params.values.len()];
    for s in samples {
        if !s.w.is_finite() || !s.pi_factor.is_finite() {
            return Err(Error::NonFinite("classifier sample weight".into()));
        }
        let coeff = s.weight * s.pi_factor;
        let (out1, tr1) = e.forward_trace(&s.next_input)?;
        let e1 = out1.scalar();
        value += coeff * (1.0 - gamma) * e1.ln();
        let (g1, _) = e.backward(&tr1, &[coeff * (1.0 - gamma) / e1]);
        let (out2, tr2) = e.forward_trace(&s.future_input)?;
        let e2 = out2.scalar();
        value += coeff * (b * s.w * e2.ln() + (1.0 - e2).ln());
        let (g2, _) = e.backward(&tr2, &[coeff * (b * s.w / e2 - 1.0 / (1.0 - e2))]);
        for i in 0..grad.len() {
            grad[i] += g1[i] + g2[i];
        }
    }
    Ok((value, grad))
}

/// One GAN-score term: a replay pair, its frozen ratio weight w_d, and a
/// generated pair, all conditioned on the same state.
#[derive(Clone, Debug)]
pub struct GanSample {
    pub real_input: Vec<f64>,
    pub gen_input: Vec<f64>,
    pub w: f64,
    pub weight: f64,
}

/// Discrimination score Σ weight · [ w log D(s₊,a₊|s) + log(1−D(G(s)|s)) ]
/// and its gradient with respect to D's parameters (ascent direction for the
/// discriminator role).
pub fn gan_score(d: &Mlp, samples: &[GanSample]) -> Result<(f64, Vec<f64>)> {
    let mut value = 0.0;
    let mut grad = vec![0.0; d.params.values.len()];
    for s in samples {
        if !s.w.is_finite() {
            return Err(Error::NonFinite("gan sample weight".into()));
        }
        let (out_r, tr_r) = d.forward_trace(&s.real_input)?;
        let dr = out_r.scalar();
        value += s.weight * s.w * dr.ln();
        let (gr, _) = d.backward(&tr_r, &[s.weight * s.w / dr]);
        let (out_g, tr_g) = d.forward_trace(&s.gen_input)?;
        let dg = out_g.scalar();
        value += s.weight * (1.0 - dg).ln();
        let (gg, _) = d.backward(&tr_g, &[-s.weight / (1.0 - dg)]);
        for i in 0..grad.len() {
            grad[i] += gr[i] + gg[i];
        }
    }
    Ok((value, grad))
}

/// Joint objective 𝒪 = classifier loss + λ · GAN score, with gradients for
/// the evaluation function. λ = 0 recovers the classifier loss bitwise.
pub fn joint_objective(
    e: &Mlp,
    cls: &[ClassifierSample],
    gan: &[GanSample],
    gamma: f64,
    scaling: BootstrapScaling,
    lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    let (mut value, mut grad) = classifier_loss(e, cls, gamma, scaling)?;
    let (gv, gg) = gan_score(e, gan)?;
    value += lambda * gv;
    for (gi, g) in grad.iter_mut().zip(gg.iter()) {
        *gi += lambda * g;
    }
    Ok((value, grad))
}

/// Non-saturating generator objective: mean of log E(G(s)|s) over the
/// conditioning batch plus `kappa` times the latent Gaussian entropy
/// (Σ log scale up to a constant), with reparameterised gradients through the
/// relaxed generator output. Returns (value, gradient wrt generator
/// parameters).
pub fn generator_objective<R: Rng>(
    env: &Env,
    e: &Mlp,
    g: &Generator,
    cond_states: &[Vec<f64>],
    kappa: f64,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    if cond_states.is_empty() {
        return Err(Error::EmptyDataset("no conditioning states".into()));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = cond_states.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; g.mlp.params.values.len()];
    let k = env.enc_state_dim();
    for cond in cond_states {
        let cond_enc = env.encode_state(cond);
        let (out_g, tr_g) = g.mlp.forward_trace(&cond_enc)?;
        let (mean, scale) = out_g.gaussian();
        let eps: Vec<f64> = (0..mean.len()).map(|_| normal.sample(rng)).collect();
        let mut pair: Vec<f64> = mean
            .iter()
            .zip(scale.iter())
            .zip(eps.iter())
            .map(|((&m, &s), &z)| m + s * z)
            .collect();
        g.project(&mut pair);
        let (s_part, a_part) = pair.split_at(k);
        let input = eval_encode_parts(env, s_part, a_part, &cond_enc);
        let (out_e, tr_e) = e.forward_trace(&input)?;
        let ev = out_e.scalar();
        value += ev.ln() / n;
        let (_, dinput) = e.backward(&tr_e, &[1.0 / (ev * n)]);
        let (mut ds, mut da) = eval_encode_grad(env, &dinput, s_part, a_part, &cond_enc);
        // Chain through the simplex projection, then pair = mean + scale ⊙ ε.
        if g.state_block > 0 {
            softmax_backward_inplace(&mut ds, s_part);
            softmax_backward_inplace(&mut da, a_part);
        }
        let dpair: Vec<f64> = ds.into_iter().chain(da).collect();
        for &s in scale.iter() {
            value += kappa * s.ln() / n;
        }
        let mut dl_dout = Vec::with_capacity(2 * pair.len());
        dl_dout.extend(dpair.iter());
        dl_dout.extend(
            dpair
                .iter()
                .zip(eps.iter())
                .zip(scale.iter())
                .map(|((d, z), s)| d * z + kappa / (s * n)),
        );
        let (gg, _) = g.mlp.backward(&tr_g, &dl_dout);
        for (gi, gv) in grad.iter_mut().zip(gg.iter()) {
            *gi += gv;
        }
    }
    Ok((value, grad))
}

/// Enumerates the exact expectation of the classifier loss on a finite MDP:
/// (s_t,a_t) and (s₊,a₊) from the replay distribution, s_{t+1} from the true
/// dynamics, a_{t+1} from the policy, with bootstrap weights read from `e`.
pub fn exact_classifier_batch(
    mdp: &FiniteMdp,
    env: &Env,
    policy: &Policy,
    data_dist: &[Vec<f64>],
    e: &EvaluationFunction,
) -> Result<Vec<ClassifierSample>> {
    let pi = policy
        .as_tabular()
        .ok_or_else(|| Error::InvalidParameter("exact batch needs a tabular policy".into()))?;
    let mut samples = Vec::new();
    for st in 0..mdp.n_states {
        for at in 0..mdp.n_actions {
            let p_sa = data_dist[st][at];
            if p_sa == 0.0 {
                continue;
            }
            for (s1, &p_s1) in mdp.transition[st][at].iter().enumerate() {
                if p_s1 == 0.0 {
                    continue;
                }
                for sp in 0..mdp.n_states {
                    for ap in 0..mdp.n_actions {
                        let p_fut = data_dist[sp][ap];
                        if p_fut == 0.0 {
                            continue;
                        }
                        let w = e.ratio(env, &[sp as f64], &[ap as f64], &[s1 as f64])?;
                        for a1 in 0..mdp.n_actions {
                            let p_a1 = pi[s1][a1];
                            if p_a1 == 0.0 {
                                continue;
                            }
                            samples.push(ClassifierSample {
                                next_input: eval_encode_raw(
                                    env,
                                    &[s1 as f64],
                                    &[a1 as f64],
                                    &[st as f64],
                                ),
                                future_input: eval_encode_raw(
                                    env,
                                    &[sp as f64],
                                    &[ap as f64],
                                    &[st as f64],
                                ),
                                pi_factor: pi[st][at],
                                w,
                                weight: p_sa * p_s1 * p_a1 * p_fut,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(samples)
}

/// Persistent training state for the alternating E/G updates, so an outer
/// loop can keep both networks warm while the target policy changes.
pub struct IdleTrainer {
    pub e: EvaluationFunction,
    pub g: Generator,
    opt_e: Optimizer,
    opt_g: Optimizer,
    rng: ChaCha8Rng,
}

impl IdleTrainer {
    pub fn new(env: &Env, config: &IdleConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = EvaluationFunction::new(env, config.hidden_e.clone(), &mut rng)?;
        let g = Generator::new(env, config.hidden_g.clone(), &mut rng)?;
        Ok(Self {
            e,
            g,
            opt_e: Optimizer::adam(config.lr),
            opt_g: Optimizer::adam(config.lr_g.unwrap_or(config.lr)),
            rng,
        })
    }

    /// One alternating update: ascend the joint objective in E, then the
    /// non-saturating score in G.
    pub fn step(
        &mut self,
        dataset: &TrajectoryDataset,
        env: &Env,
        policy: &Policy,
        config: &IdleConfig,
    ) -> Result<()> {
        let rng = &mut self.rng;
        let transitions = sample_batch(dataset, config.batch, rng)?;
        let futures = sample_batch(dataset, config.batch, rng)?;
        let mut cls = Vec::with_capacity(config.batch);
        for (rec, fut) in transitions.iter().zip(futures.iter()) {
            let a_next = policy.sample_action(&rec.next_state, rng);
            let w = self.e.ratio(env, &fut.state, &fut.action, &rec.next_state)?;
            cls.push(ClassifierSample {
                next_input: eval_encode_raw(env, &rec.next_state, &a_next, &rec.state),
                future_input: eval_encode_raw(env, &fut.state, &fut.action, &rec.state),
                pi_factor: policy.log_prob(&rec.state, &rec.action).exp(),
                w,
                weight: 1.0 / config.batch as f64,
            });
        }
        let gan_real = sample_batch(dataset, config.batch, rng)?;
        let mut gan = Vec::with_capacity(config.batch);
        let mut conds = Vec::with_capacity(config.batch);
        for real in &gan_real {
            let cond = sample_conditioning_state(env, dataset, rng);
            let w = self.e.ratio(env, &real.state, &real.action, &cond)?;
            let cond_enc = env.encode_state(&cond);
            let gen_pair = self.g.sample_relaxed(&cond_enc, rng)?;
            let (s_part, a_part) = gen_pair.split_at(env.enc_state_dim());
            gan.push(GanSample {
                real_input: eval_encode_raw(env, &real.state, &real.action, &cond),
                gen_input: eval_encode_parts(env, s_part, a_part, &cond_enc),
                w,
                weight: 1.0 / config.batch as f64,
            });
            conds.push(cond);
        }
        // Self-normalise the replay-side importance weights: their mean is 1
        // at the classifier fixed point, so this is a no-op at equilibrium,
        // but it bounds the discriminator's real-sample mass away from it and
        // breaks the feedback loop between a drifting E and its own frozen
        // ratios.
        let mean_w: f64 = gan.iter().map(|s| s.w).sum::<f64>() / gan.len() as f64;
        if mean_w > 0.0 {
            for s in &mut gan {
                s.w /= mean_w;
            }
        }
        let (_, grad_e) = joint_objective(
            &self.e.mlp,
            &cls,
            &gan,
            config.gamma,
            config.bootstrap,
            config.lambda,
        )?;
        // Ascent on the objective.
        let neg: Vec<f64> = grad_e.iter().map(|v| -v).collect();
        self.opt_e.step(&mut self.e.mlp.params, &neg)?;
        let (_, grad_g) =
            generator_objective(env, &self.e.mlp, &self.g, &conds, config.gen_entropy, &mut self.rng)?;
        let neg_g: Vec<f64> = grad_g.iter().map(|v| -v).collect();
        self.opt_g.step(&mut self.g.mlp.params, &neg_g)?;
        Ok(())
    }
}

/// Alternating E/G training on a fixed dataset. Deterministic per seed.
pub fn idle_train(
    dataset: &TrajectoryDataset,
    env: &Env,
    policy: &Policy,
    config: &IdleConfig,
    seed: u64,
) -> Result<(EvaluationFunction, Generator)> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("idle training needs data".into()));
    }
    let mut trainer = IdleTrainer::new(env, config, seed)?;
    for _ in 0..config.iterations {
        trainer.step(dataset, env, policy, config)?;
    }
    Ok((trainer.e, trainer.g))
}

/// Conditioning states for the GAN term: uniform over the state set for
/// finite environments, dataset states for continuous ones.
pub fn sample_conditioning_state<R: Rng>(
    env: &Env,
    dataset: &TrajectoryDataset,
    rng: &mut R,
) -> Vec<f64> {
    match env {
        Env::Finite(m) => vec![rng.gen_range(0..m.n_states) as f64],
        Env::Continuous(_) => dataset.records[rng.gen_range(0..dataset.len())]
            .state
            .clone(),
    }
}
