//! Cost learning and the full training loop.
//!
//! The learned cost c : S×A → (0,1) is a discriminator: pairs frequently
//! visited by the current policy's future-state distribution are driven
//! toward high cost, pairs frequent under the expert's toward low cost. The
//! same module houses the positive-unlabelled and time-guided baseline
//! losses, a behaviour-cloning baseline, and the outer loop that alternates
//! occupancy estimation, future sampling, conservative policy optimisation
//! and cost updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::{
    gaussian_log_prob, gaussian_log_prob_grad, Activation, Head, Mlp, MlpSpec, Optimizer,
};
use crate::datasets::{
    sample_batch, CostReplayBuffer, MixtureWeights, TrajectoryDataset, TransitionRecord,
    DEFAULT_COST_BUFFER_CAPACITY,
};
use crate::dynamics::{fit_ensemble, DynamicsConfig};
use crate::error::{Error, Result};
use crate::future_sampler::{fill_cost_buffer, truncated_geometric_weights, FutureSamplers};
use crate::idle::{IdleConfig, IdleTrainer};
use crate::mdp::{policy_eval_return, sample_categorical, Env, Policy};
use crate::offline_rl::{critic_input, critic_input_dim, ComboConfig, ComboState};

/// Learned cost/discriminator with a sigmoid head; outputs are consumed as
/// costs directly (lower = more expert-like).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostModel {
    pub mlp: Mlp,
}

impl CostModel {
    pub fn new(env: &Env, hidden: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let spec = MlpSpec::new(
            critic_input_dim(env),
            1,
            hidden,
            Activation::Tanh,
            Head::ScalarSigmoid,
        )?;
        Ok(Self {
            mlp: Mlp::new(spec, rng),
        })
    }

    pub fn value(&self, env: &Env, state: &[f64], action: &[f64]) -> Result<f64> {
        self.mlp.scalar(&critic_input(env, state, action))
    }
}

/// Per-parameter settings of the two baseline discrimination losses.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub oril_phi: f64,
    pub tgr_t0: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            oril_phi: 0.5,
            tgr_t0: 50,
        }
    }
}

fn log_term(
    c: &Mlp,
    input: &[f64],
    coeff: f64,
    positive: bool,
    value: &mut f64,
    grad: &mut [f64],
) -> Result<()> {
    let (out, tr) = c.forward_trace(input)?;
    let v = out.scalar();
    if positive {
        *value += coeff * v.ln();
        let (g, _) = c.backward(&tr, &[coeff / v]);
        for (gi, gv) in grad.iter_mut().zip(g.iter()) {
            *gi += gv;
        }
    } else {
        *value += coeff * (1.0 - v).ln();
        let (g, _) = c.backward(&tr, &[-coeff / (1.0 - v)]);
        for (gi, gv) in grad.iter_mut().zip(g.iter()) {
            *gi += gv;
        }
    }
    Ok(())
}

/// Discrimination objective: mean log c over policy-side inputs plus mean
/// log(1−c) over expert-side inputs, with its gradient. Maximised.
pub fn discrimination_loss(
    c: &Mlp,
    policy_inputs: &[Vec<f64>],
    expert_inputs: &[Vec<f64>],
) -> Result<(f64, Vec<f64>)> {
    if policy_inputs.is_empty() || expert_inputs.is_empty() {
        return Err(Error::EmptyDataset("discrimination needs both sides".into()));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; c.params.values.len()];
    for x in policy_inputs {
        log_term(c, x, 1.0 / policy_inputs.len() as f64, true, &mut value, &mut grad)?;
    }
    for x in expert_inputs {
        log_term(c, x, 1.0 / expert_inputs.len() as f64, false, &mut value, &mut grad)?;
    }
    Ok((value, grad))
}

/// Draws η-weighted future pairs from within expert episodes: a transition
/// index t with weight γ^t, then a future offset k ~ truncated-Geometric(δ)
/// capped at the episode end.
pub struct ExpertMuSampler<'a> {
    episodes: Vec<&'a [TransitionRecord]>,
    gamma: f64,
    delta: f64,
}

impl<'a> ExpertMuSampler<'a> {
    pub fn new(expert: &'a TrajectoryDataset, gamma: f64, delta: f64) -> Result<Self> {
        if expert.is_empty() {
            return Err(Error::EmptyDataset("expert data required".into()));
        }
        let recs = &expert.records;
        let mut episodes = Vec::new();
        let mut start = 0;
        for i in 1..=recs.len() {
            if i == recs.len() || recs[i].episode_id != recs[start].episode_id {
                episodes.push(&recs[start..i]);
                start = i;
            }
        }
        Ok(Self {
            episodes,
            gamma,
            delta,
        })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let ep = self.episodes[rng.gen_range(0..self.episodes.len())];
        let wt = truncated_geometric_weights(self.gamma, ep.len() - 1)?;
        let t = sample_categorical(&wt, rng);
        let wk = truncated_geometric_weights(self.delta, ep.len() - 1 - t)?;
        let k = sample_categorical(&wk, rng);
        let rec = &ep[t + k];
        Ok((rec.state.clone(), rec.action.clone()))
    }
}

/// Gradient steps maximising E_buffer[log c] + E_expert-μ[log(1−c)]. The
/// buffer holds the policy-side future pairs, the expert side is drawn from
/// the η-weighted in-episode sampler. Returns the last objective value.
#[allow(clippy::too_many_arguments)]
pub fn cameron_cost_update(
    cost: &mut CostModel,
    opt: &mut Optimizer,
    env: &Env,
    buffer: &CostReplayBuffer,
    expert_mu: &ExpertMuSampler,
    steps: usize,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if buffer.is_empty() {
        return Err(Error::EmptyDataset("cost buffer is empty".into()));
    }
    if batch == 0 {
        return Err(Error::InvalidParameter("batch must be positive".into()));
    }
    let mut last = 0.0;
    for _ in 0..steps {
        let policy_side: Vec<Vec<f64>> = buffer
            .sample(batch, rng)?
            .iter()
            .map(|e| critic_input(env, &e.future_state, &e.future_action))
            .collect();
        let mut expert_side = Vec::with_capacity(batch);
        for _ in 0..batch {
            let (s, a) = expert_mu.sample(rng)?;
            expert_side.push(critic_input(env, &s, &a));
        }
        let (v, grad) = discrimination_loss(&cost.mlp, &policy_side, &expert_side)?;
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        opt.step(&mut cost.mlp.params, &neg)?;
        last = v;
    }
    Ok(last)
}

/// Positive-unlabelled discrimination objective (maximised):
/// φ E_expert[log(1−c)] + E_unlabelled[log c] − φ E_expert[log c].
/// The expert set is the labelled positive (low-cost) class; subtracting the
/// φ-weighted expert term converts the unlabelled mean into an estimate of
/// the negative-class expectation. With the unlabelled batch equal to the
/// expert batch and φ = 1 the correction cancels the unlabelled term and the
/// plain success-vs-failure form remains.
pub fn oril_pu_loss(
    c: &Mlp,
    expert_inputs: &[Vec<f64>],
    unlabeled_inputs: &[Vec<f64>],
    phi: f64,
) -> Result<(f64, Vec<f64>)> {
    if !(0.0 < phi && phi <= 1.0) {
        return Err(Error::InvalidParameter(format!("phi = {phi} not in (0,1]")));
    }
    if expert_inputs.is_empty() || unlabeled_inputs.is_empty() {
        return Err(Error::EmptyDataset("pu loss needs both batches".into()));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; c.params.values.len()];
    let ne = expert_inputs.len() as f64;
    let nu = unlabeled_inputs.len() as f64;
    for x in expert_inputs {
        log_term(c, x, phi / ne, false, &mut value, &mut grad)?;
        log_term(c, x, -phi / ne, true, &mut value, &mut grad)?;
    }
    for x in unlabeled_inputs {
        log_term(c, x, 1.0 / nu, true, &mut value, &mut grad)?;
    }
    Ok((value, grad))
}

/// A pair with an optional in-episode time index, as the time-guided loss
/// requires.
#[derive(Clone, Debug)]
pub struct TgrSample {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub t: Option<usize>,
}

impl TgrSample {
    pub fn from_record(rec: &TransitionRecord) -> Self {
        Self {
            state: rec.state.clone(),
            action: rec.action.clone(),
            t: Some(rec.t),
        }
    }
}

/// Time-guided discrimination objective (maximised): late expert pairs
/// (t ≥ t₀) form the low-cost class, early expert pairs and exploratory
/// pairs are pooled into the high-cost class; the class means enter with
/// weight ½ each, so c ≡ 0.5 scores −log 2. With every expert record early,
/// only the pooled high-cost terms remain.
pub fn tgr_loss(
    c: &Mlp,
    env: &Env,
    expert: &[TgrSample],
    exploratory: &[TgrSample],
    t0: usize,
) -> Result<(f64, Vec<f64>)> {
    if expert.is_empty() {
        return Err(Error::EmptyDataset("tgr needs expert records".into()));
    }
    let mut low = Vec::new();
    let mut high = Vec::new();
    for s in expert {
        let t = s.t.ok_or_else(|| {
            Error::MissingSource("expert record without a time index".into())
        })?;
        let input = critic_input(env, &s.state, &s.action);
        if t >= t0 {
            low.push(input);
        } else {
            high.push(input);
        }
    }
    for s in exploratory {
        high.push(critic_input(env, &s.state, &s.action));
    }
    if high.is_empty() {
        return Err(Error::EmptyDataset("tgr high-cost class is empty".into()));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; c.params.values.len()];
    for x in &low {
        log_term(c, x, 0.5 / low.len() as f64, false, &mut value, &mut grad)?;
    }
    for x in &high {
        log_term(c, x, 0.5 / high.len() as f64, true, &mut value, &mut grad)?;
    }
    Ok((value, grad))
}

/// Trains a cost model with the positive-unlabelled loss on static expert
/// vs pooled (expert + exploratory) batches.
#[allow(clippy::too_many_arguments)]
pub fn train_cost_oril(
    env: &Env,
    expert: &TrajectoryDataset,
    exploratory: &TrajectoryDataset,
    phi: f64,
    hidden: Vec<usize>,
    steps: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<CostModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cost = CostModel::new(env, hidden, &mut rng)?;
    let mut opt = Optimizer::adam(lr);
    for _ in 0..steps {
        let expert_batch: Vec<Vec<f64>> = sample_batch(expert, batch, &mut rng)?
            .iter()
            .map(|r| critic_input(env, &r.state, &r.action))
            .collect();
        // The unlabelled pool mixes expert and exploratory pairs evenly.
        let mut unlabeled = Vec::with_capacity(batch);
        for _ in 0..batch {
            let rec = if rng.gen::<f64>() < 0.5 {
                sample_batch(expert, 1, &mut rng)?[0]
            } else {
                sample_batch(exploratory, 1, &mut rng)?[0]
            };
            unlabeled.push(critic_input(env, &rec.state, &rec.action));
        }
        let (_, grad) = oril_pu_loss(&cost.mlp, &expert_batch, &unlabeled, phi)?;
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        opt.step(&mut cost.mlp.params, &neg)?;
    }
    Ok(cost)
}

/// Trains a cost model with the time-guided loss on static batches.
#[allow(clippy::too_many_arguments)]
pub fn train_cost_tgr(
    env: &Env,
    expert: &TrajectoryDataset,
    exploratory: &TrajectoryDataset,
    t0: usize,
    hidden: Vec<usize>,
    steps: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<CostModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cost = CostModel::new(env, hidden, &mut rng)?;
    let mut opt = Optimizer::adam(lr);
    for _ in 0..steps {
        let expert_batch: Vec<TgrSample> = sample_batch(expert, batch, &mut rng)?
            .iter()
            .map(|r| TgrSample::from_record(r))
            .collect();
        let expl_batch: Vec<TgrSample> = sample_batch(exploratory, batch, &mut rng)?
            .iter()
            .map(|r| TgrSample::from_record(r))
            .collect();
        let (_, grad) = tgr_loss(&cost.mlp, env, &expert_batch, &expl_batch, t0)?;
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        opt.step(&mut cost.mlp.params, &neg)?;
    }
    Ok(cost)
}

/// Mean log-likelihood of tabular softmax logits on (s,a) index pairs, with
/// its gradient.
pub fn bc_tabular_loss(
    logits: &[Vec<f64>],
    batch: &[(usize, usize)],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("bc batch is empty".into()));
    }
    let n = batch.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![vec![0.0; logits[0].len()]; logits.len()];
    for &(s, a) in batch {
        let row = &logits[s];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        value += (row[a] - m - z.ln()) / n;
        for (j, e) in exps.iter().enumerate() {
            grad[s][j] += (((j == a) as usize as f64) - e / z) / n;
        }
    }
    Ok((value, grad))
}

/// Mean Gaussian log-likelihood of a policy network on (state, action)
/// pairs, with its parameter gradient.
pub fn bc_gaussian_loss(
    policy: &Mlp,
    batch: &[(Vec<f64>, Vec<f64>)],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset("bc batch is empty".into()));
    }
    let n = batch.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; policy.params.values.len()];
    for (s, a) in batch {
        let (out, tr) = policy.forward_trace(s)?;
        let (mean, scale) = out.gaussian();
        value += gaussian_log_prob(mean, scale, a) / n;
        let (dmean, dscale, _) = gaussian_log_prob_grad(mean, scale, a);
        let mut dl_dout: Vec<f64> = dmean.iter().map(|d| d / n).collect();
        dl_dout.extend(dscale.iter().map(|d| d / n));
        let (g, _) = policy.backward(&tr, &dl_dout);
        for (gi, gv) in grad.iter_mut().zip(g.iter()) {
            *gi += gv;
        }
    }
    Ok((value, grad))
}

/// Behaviour cloning: maximum likelihood on the expert actions. Zero steps
/// return the initial (uniform / untrained) policy.
pub fn bc_baseline(
    env: &Env,
    expert: &TrajectoryDataset,
    steps: usize,
    batch: usize,
    lr: f64,
    seed: u64,
) -> Result<Policy> {
    if expert.is_empty() {
        return Err(Error::EmptyDataset("bc needs expert data".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match env {
        Env::Finite(m) => {
            let mut logits = vec![vec![0.0; m.n_actions]; m.n_states];
            let mut opt = Optimizer::adam(lr);
            // A flat view so the shared optimizer can step the table.
            let mut params = crate::approximator::ParamBlock {
                values: vec![0.0; m.n_states * m.n_actions],
                step: 0,
            };
            for _ in 0..steps {
                let idx: Vec<(usize, usize)> = sample_batch(expert, batch, &mut rng)?
                    .iter()
                    .map(|r| (r.state[0] as usize, r.action[0] as usize))
                    .collect();
                let (_, grad) = bc_tabular_loss(&logits, &idx)?;
                let flat: Vec<f64> = grad
                    .iter()
                    .flat_map(|row| row.iter().map(|g| -g))
                    .collect();
                opt.step(&mut params, &flat)?;
                for s in 0..m.n_states {
                    for a in 0..m.n_actions {
                        logits[s][a] = params.values[s * m.n_actions + a];
                    }
                }
            }
            let rows: Vec<Vec<f64>> = logits
                .iter()
                .map(|row| {
                    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    exps.into_iter().map(|e| e / z).collect()
                })
                .collect();
            let policy = Policy::Tabular(rows);
            policy.validate()?;
            Ok(policy)
        }
        Env::Continuous(c) => {
            let spec = MlpSpec::new(
                c.state_dim,
                c.action_dim,
                vec![64, 64, 64],
                Activation::Tanh,
                Head::Gaussian,
            )?;
            let mut mlp = Mlp::new(spec, &mut rng);
            let mut opt = Optimizer::adam(lr);
            for _ in 0..steps {
                let pairs: Vec<(Vec<f64>, Vec<f64>)> = sample_batch(expert, batch, &mut rng)?
                    .iter()
                    .map(|r| (r.state.clone(), r.action.clone()))
                    .collect();
                let (_, grad) = bc_gaussian_loss(&mlp, &pairs)?;
                let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
                opt.step(&mut mlp.params, &neg)?;
            }
            Ok(Policy::Gaussian(mlp))
        }
    }
}

/// Outer-loop schedule and component settings.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct CameronConfig {
    pub gamma: f64,
    pub delta: f64,
    /// Outer iterations.
    pub iterations: usize,
    /// Idle updates per outer iteration, for each discount.
    pub idle_updates: usize,
    /// Actor-critic updates per outer iteration.
    pub ac_updates: usize,
    /// Discriminator (cost) updates per outer iteration.
    pub disc_updates: usize,
    /// Cost-buffer entries added per outer iteration.
    pub buffer_fill: usize,
    pub buffer_capacity: usize,
    pub mixture: MixtureWeights,
    pub batch: usize,
    pub cost_hidden: Vec<usize>,
    pub cost_lr: f64,
    pub rollout_horizon: usize,
    pub rollouts_per_fill: usize,
    /// Evaluate (and update the best-policy snapshot) every this many outer
    /// iterations.
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub idle: IdleConfig,
    pub combo: ComboConfig,
    pub dynamics: DynamicsConfig,
}

impl Default for CameronConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            delta: 0.9,
            iterations: 150,
            idle_updates: 100,
            ac_updates: 50,
            disc_updates: 3,
            buffer_fill: 192,
            buffer_capacity: DEFAULT_COST_BUFFER_CAPACITY,
            mixture: MixtureWeights::balanced(),
            batch: 64,
            cost_hidden: vec![32, 32],
            cost_lr: 1e-3,
            rollout_horizon: 5,
            rollouts_per_fill: 32,
            eval_every: 10,
            eval_episodes: 20,
            idle: IdleConfig::default(),
            combo: ComboConfig::default(),
            dynamics: DynamicsConfig::default(),
        }
    }
}

impl CameronConfig {
    /// Small-scale preset for the built-in finite environments.
    pub fn desk_finite() -> Self {
        Self {
            iterations: 120,
            idle_updates: 100,
            ac_updates: 40,
            disc_updates: 5,
            cost_lr: 5e-4,
            eval_every: 5,
            eval_episodes: 150,
            idle: IdleConfig {
                hidden_e: vec![],
                hidden_g: vec![16],
                lr: 1e-2,
                lr_g: Some(1e-3),
                lambda: 0.3,
                ..IdleConfig::default()
            },
            combo: ComboConfig {
                iterations: 0,
                ..ComboConfig::desk_finite()
            },
            dynamics: DynamicsConfig {
                members_trained: 3,
                members_kept: 2,
                hidden: vec![16],
                train_steps: 400,
                lr: 1e-2,
                ..DynamicsConfig::default()
            },
            ..Self::default()
        }
    }
}

/// One metrics row per outer iteration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CameronMetrics {
    pub iteration: usize,
    pub cost_objective: f64,
    pub eval_return: Option<f64>,
    pub buffer_fractions: (f64, f64, f64),
}

pub struct CameronResult {
    pub policy: Policy,
    pub best_policy: Policy,
    pub cost: CostModel,
    pub metrics: Vec<CameronMetrics>,
}

/// The full loop: fit dynamics once, then per outer iteration run the two
/// occupancy estimations (discounts γ and δ) against the current policy,
/// refill the cost buffer from the mixed samplers, take the conservative
/// policy steps with the current cost, and update the cost against the
/// expert's future distribution. The best policy under periodic evaluation
/// is tracked separately.
pub fn cameron_run(
    env: &Env,
    expert: &TrajectoryDataset,
    exploratory: &TrajectoryDataset,
    config: &CameronConfig,
    seed: u64,
) -> Result<CameronResult> {
    if expert.is_empty() {
        return Err(Error::EmptyDataset("expert data required".into()));
    }
    if exploratory.is_empty() {
        return Err(Error::EmptyDataset("exploratory data required".into()));
    }
    let combined = TrajectoryDataset::concat(
        &[expert, exploratory],
        crate::datasets::DatasetTag::Mixed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dynamics = match env {
        // Desk-scale finite runs still learn the model from data.
        _ => fit_ensemble(&combined, env, &config.dynamics, seed ^ 0x51_7c_c1_b7)?,
    };
    let mut cost = CostModel::new(env, config.cost_hidden.clone(), &mut rng)?;
    let mut cost_opt = Optimizer::adam(config.cost_lr);
    let expert_mu = ExpertMuSampler::new(expert, config.gamma, config.delta)?;
    let mut buffer = CostReplayBuffer::new(config.buffer_capacity);
    let idle_cfg_gamma = IdleConfig {
        gamma: config.gamma,
        ..config.idle.clone()
    };
    let idle_cfg_delta = IdleConfig {
        gamma: config.delta,
        ..config.idle.clone()
    };
    let mut idle_gamma = IdleTrainer::new(env, &idle_cfg_gamma, seed ^ 0xA5A5)?;
    let mut idle_delta = IdleTrainer::new(env, &idle_cfg_delta, seed ^ 0x5A5A)?;
    let mut combo = ComboState::new(env, &config.combo, seed ^ 0xC0C0)?;
    let mut metrics = Vec::with_capacity(config.iterations);
    let mut best_policy = combo.policy.clone();
    let mut best_return = f64::INFINITY;
    for iter in 0..config.iterations {
        for _ in 0..config.idle_updates {
            idle_gamma.step(&combined, env, &combo.policy, &idle_cfg_gamma)?;
            idle_delta.step(&combined, env, &combo.policy, &idle_cfg_delta)?;
        }
        {
            let samplers = FutureSamplers {
                env,
                dataset: &combined,
                policy: &combo.policy,
                dynamics: &dynamics,
                e_gamma: &idle_gamma.e,
                g_gamma: &idle_gamma.g,
                g_delta: &idle_delta.g,
                delta: config.delta,
                rollout_horizon: config.rollout_horizon,
                rollouts_per_fill: config.rollouts_per_fill,
            };
            fill_cost_buffer(&mut buffer, &samplers, &config.mixture, config.buffer_fill, &mut rng)?;
        }
        let cost_snapshot = cost.clone();
        let cost_fn = |s: &[f64], a: &[f64]| -> f64 {
            cost_snapshot.value(env, s, a).unwrap_or(0.5)
        };
        for _ in 0..config.ac_updates {
            combo.step(env, &combined, &cost_fn, &dynamics, &config.combo)?;
        }
        let cost_objective = cameron_cost_update(
            &mut cost,
            &mut cost_opt,
            env,
            &buffer,
            &expert_mu,
            config.disc_updates,
            config.batch,
            &mut rng,
        )?;
        let eval_return = if (iter + 1) % config.eval_every == 0 || iter + 1 == config.iterations
        {
            let (ret, _) = policy_eval_return(
                env,
                &combo.policy,
                config.eval_episodes,
                seed ^ 0xE7A1 ^ iter as u64,
            )?;
            if ret < best_return {
                best_return = ret;
                best_policy = combo.policy.clone();
            }
            Some(ret)
        } else {
            None
        };
        metrics.push(CameronMetrics {
            iteration: iter,
            cost_objective,
            eval_return,
            buffer_fractions: buffer.source_fractions(),
        });
    }
    Ok(CameronResult {
        policy: combo.policy,
        best_policy,
        cost,
        metrics,
    })
}
