//! Conservative model-based offline RL.
//!
//! Critics regress onto sampled entropy-regularised Bellman targets over a
//! mixture of replay and synthetic model rollouts, with a conservatism
//! penalty β(E_data[Q] − E_synthetic[Q]). Costs are minimised, so the penalty
//! inflates the estimated cost of model-generated state-action pairs and
//! deflates it on the support of the data. Policies are improved against the
//! pessimistic critic: a softmax over −Q/τ in the tabular case, a
//! reparameterised gradient step for Gaussian actors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::approximator::{Activation, Head, Mlp, MlpSpec, Optimizer, DEFAULT_LR};
use crate::datasets::{sample_batch, TrajectoryDataset, TransitionRecord};
use crate::dynamics::{rollout, DynamicsEnsemble, RolloutStart};
use crate::error::{Error, Result};
use crate::mdp::{Env, Policy};

/// Cost source for critic targets: learned model or ground truth.
pub type CostFn<'a> = dyn Fn(&[f64], &[f64]) -> f64 + Sync + 'a;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ComboConfig {
    /// Conservatism coefficient; 5 is the default preset, 1 the light one.
    pub beta: f64,
    /// Fraction of each Bellman batch drawn from the replay dataset.
    pub f_data: f64,
    pub rollout_horizon: usize,
    pub rollouts_per_refresh: usize,
    /// Refresh the synthetic buffer every this many iterations.
    pub rollout_refresh: usize,
    /// Copy the live critics into the target critics every this many
    /// iterations.
    pub target_refresh: usize,
    pub batch: usize,
    pub gamma: f64,
    pub critic_lr: f64,
    pub actor_lr: f64,
    /// Softmax temperature of tabular improvement and entropy weight of the
    /// Gaussian actor step.
    pub temperature: f64,
    pub iterations: usize,
    pub hidden_critic: Vec<usize>,
    pub hidden_actor: Vec<usize>,
}

impl Default for ComboConfig {
    fn default() -> Self {
        Self {
            beta: 5.0,
            f_data: 0.5,
            rollout_horizon: 5,
            rollouts_per_refresh: 64,
            rollout_refresh: 10,
            target_refresh: 25,
            batch: 64,
            gamma: 0.99,
            critic_lr: DEFAULT_LR,
            actor_lr: DEFAULT_LR,
            temperature: 1.0,
            iterations: 500,
            hidden_critic: vec![64, 64, 64],
            hidden_actor: vec![64, 64, 64],
        }
    }
}

impl ComboConfig {
    /// Small-scale preset for the built-in finite environments: exact
    /// tabular critics, a learning rate that converges in a few thousand
    /// updates, and a penalty weight matched to the [0,1] cost scale of the
    /// built-in tasks.
    pub fn desk_finite() -> Self {
        Self {
            hidden_critic: vec![],
            critic_lr: 5e-2,
            target_refresh: 10,
            temperature: 0.05,
            beta: 0.1,
            iterations: 3000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 {
            return Err(Error::InvalidParameter("beta must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.f_data) {
            return Err(Error::InvalidParameter("f_data must be in [0,1]".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter("gamma must be in [0,1)".into()));
        }
        if self.temperature <= 0.0 {
            return Err(Error::InvalidParameter("temperature must be > 0".into()));
        }
        if self.batch == 0 || self.rollouts_per_refresh == 0 {
            return Err(Error::InvalidParameter("batch sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Critic input: joint one-hot over (s,a) for finite environments, a
/// concatenation of the raw vectors for continuous ones.
pub fn critic_input_dim(env: &Env) -> usize {
    match env {
        Env::Finite(m) => m.n_states * m.n_actions,
        Env::Continuous(_) => env.enc_state_dim() + env.enc_action_dim(),
    }
}

pub fn critic_input(env: &Env, state: &[f64], action: &[f64]) -> Vec<f64> {
    match env {
        Env::Finite(m) => {
            let mut v = vec![0.0; m.n_states * m.n_actions];
            v[(state[0] as usize) * m.n_actions + action[0] as usize] = 1.0;
            v
        }
        Env::Continuous(_) => {
            let mut v = Vec::with_capacity(state.len() + action.len());
            v.extend_from_slice(state);
            v.extend_from_slice(action);
            v
        }
    }
}

/// Q estimators with frozen target copies. Finite environments use a single
/// tabular net, continuous ones a pessimistic pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Critic {
    pub nets: Vec<Mlp>,
    pub targets: Vec<Mlp>,
}

impl Critic {
    pub fn new(env: &Env, hidden: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let n = match env {
            Env::Finite(_) => 1,
            Env::Continuous(_) => 2,
        };
        let mut nets = Vec::with_capacity(n);
        for _ in 0..n {
            let spec = MlpSpec::new(
                critic_input_dim(env),
                1,
                hidden.clone(),
                Activation::Tanh,
                Head::ScalarLinear,
            )?;
            nets.push(Mlp::new(spec, rng));
        }
        let targets = nets.clone();
        Ok(Self { nets, targets })
    }

    fn eval(nets: &[Mlp], input: &[f64]) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for net in nets {
            best = best.max(net.scalar(input)?);
        }
        Ok(best)
    }

    /// Pessimistic (largest-cost) live estimate.
    pub fn value(&self, env: &Env, state: &[f64], action: &[f64]) -> Result<f64> {
        Self::eval(&self.nets, &critic_input(env, state, action))
    }

    /// Pessimistic estimate from the frozen target copies.
    pub fn target_value(&self, env: &Env, state: &[f64], action: &[f64]) -> Result<f64> {
        Self::eval(&self.targets, &critic_input(env, state, action))
    }

    pub fn sync_targets(&mut self) {
        self.targets = self.nets.clone();
    }

    /// Full Q table; finite environments only.
    pub fn q_table(&self, env: &Env) -> Result<Vec<Vec<f64>>> {
        let m = env
            .as_finite()
            .ok_or_else(|| Error::InvalidParameter("q_table needs a finite env".into()))?;
        let mut q = vec![vec![0.0; m.n_actions]; m.n_states];
        for s in 0..m.n_states {
            for a in 0..m.n_actions {
                q[s][a] = self.value(env, &[s as f64], &[a as f64])?;
            }
        }
        Ok(q)
    }
}

/// Entropy-regularised one-sample Bellman target
/// c + γ (Q(s',a') + log π(a'|s')).
pub fn sampled_bellman_target(cost: f64, gamma: f64, q_next: f64, log_pi_next: f64) -> f64 {
    cost + gamma * (q_next + log_pi_next)
}

/// Critic loss for one net: mean squared Bellman residual over the mixed
/// batch plus β (mean_data Q − mean_synthetic Q), with its parameter
/// gradient. β = 0 skips the penalty entirely, so the result is bit-for-bit
/// the plain regression.
pub fn combo_critic_update(
    net: &Mlp,
    inputs: &[Vec<f64>],
    targets: &[f64],
    data_inputs: &[Vec<f64>],
    synth_inputs: &[Vec<f64>],
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    if inputs.is_empty() {
        return Err(Error::EmptyDataset("empty critic batch".into()));
    }
    let n = inputs.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; net.params.values.len()];
    for (x, t) in inputs.iter().zip(targets.iter()) {
        let (out, tr) = net.forward_trace(x)?;
        let q = out.scalar();
        let r = q - t;
        value += r * r / n;
        let (g, _) = net.backward(&tr, &[2.0 * r / n]);
        for (gi, gv) in grad.iter_mut().zip(g.iter()) {
            *gi += gv;
        }
    }
    if beta != 0.0 {
        if data_inputs.is_empty() || synth_inputs.is_empty() {
            return Err(Error::EmptyDataset(
                "conservatism penalty needs both data and synthetic samples".into(),
            ));
        }
        for (batch, sign) in [(data_inputs, 1.0), (synth_inputs, -1.0)] {
            let m = batch.len() as f64;
            for x in batch {
                let (out, tr) = net.forward_trace(x)?;
                value += sign * beta * out.scalar() / m;
                let (g, _) = net.backward(&tr, &[sign * beta / m]);
                for (gi, gv) in grad.iter_mut().zip(g.iter()) {
                    *gi += gv;
                }
            }
        }
    }
    Ok((value, grad))
}

/// Tabular improvement: π(a|s) ∝ exp(−Q(s,a)/τ).
pub fn policy_improvement(q: &[Vec<f64>], temperature: f64) -> Result<Policy> {
    if temperature <= 0.0 {
        return Err(Error::InvalidParameter("temperature must be > 0".into()));
    }
    let mut rows = Vec::with_capacity(q.len());
    for row in q {
        if row.is_empty() {
            return Err(Error::InvalidParameter("empty action row".into()));
        }
        let m = row.iter().cloned().fold(f64::INFINITY, f64::min);
        let exps: Vec<f64> = row.iter().map(|v| (-(v - m) / temperature).exp()).collect();
        let z: f64 = exps.iter().sum();
        rows.push(exps.into_iter().map(|e| e / z).collect());
    }
    let policy = Policy::Tabular(rows);
    policy.validate()?;
    Ok(policy)
}

/// Gaussian-actor objective to minimise: mean pessimistic Q at a
/// reparameterised action, minus τ times the policy entropy (up to its
/// constant). Returns (value, gradient wrt actor parameters).
pub fn actor_objective<R: Rng>(
    env: &Env,
    critic: &Critic,
    actor: &Mlp,
    states: &[Vec<f64>],
    temperature: f64,
    rng: &mut R,
) -> Result<(f64, Vec<f64>)> {
    if states.is_empty() {
        return Err(Error::EmptyDataset("no actor states".into()));
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = states.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; actor.params.values.len()];
    for s in states {
        let (out_a, tr_a) = actor.forward_trace(s)?;
        let (mean, scale) = out_a.gaussian();
        let eps: Vec<f64> = (0..mean.len()).map(|_| normal.sample(rng)).collect();
        let action: Vec<f64> = mean
            .iter()
            .zip(scale.iter())
            .zip(eps.iter())
            .map(|((&m, &sc), &z)| m + sc * z)
            .collect();
        let input = critic_input(env, s, &action);
        // Pessimism: backprop through whichever net currently dominates.
        let mut best = f64::NEG_INFINITY;
        let mut best_tr = None;
        for net in &critic.nets {
            let (out, tr) = net.forward_trace(&input)?;
            if out.scalar() > best {
                best = out.scalar();
                best_tr = Some((net, tr));
            }
        }
        let (net, tr) = best_tr.unwrap();
        value += best / n;
        let (_, dinput) = net.backward(&tr, &[1.0 / n]);
        let daction = &dinput[s.len()..s.len() + action.len()];
        let mut dl_dout = Vec::with_capacity(2 * mean.len());
        dl_dout.extend_from_slice(daction);
        // Scale path of the sample plus the entropy bonus −τ Σ log scale.
        for (j, &sc) in scale.iter().enumerate() {
            value -= temperature * sc.ln() / n;
            dl_dout.push(daction[j] * eps[j] - temperature / (sc * n));
        }
        let (ga, _) = actor.backward(&tr_a, &dl_dout);
        for (gi, gv) in grad.iter_mut().zip(ga.iter()) {
            *gi += gv;
        }
    }
    Ok((value, grad))
}

#[derive(Clone, Debug)]
pub struct OfflineRlResult {
    pub policy: Policy,
    pub critic: Critic,
}

fn initial_policy(env: &Env, hidden: &[usize], rng: &mut impl Rng) -> Result<Policy> {
    match env {
        Env::Finite(m) => Ok(Policy::uniform_tabular(m.n_states, m.n_actions)),
        Env::Continuous(c) => {
            let spec = MlpSpec::new(
                c.state_dim,
                c.action_dim,
                hidden.to_vec(),
                Activation::Tanh,
                Head::Gaussian,
            )?;
            Ok(Policy::Gaussian(Mlp::new(spec, rng)))
        }
    }
}

/// Persistent actor-critic state, advanced one iteration at a time so an
/// outer loop can interleave policy steps with cost and sampler updates.
pub struct ComboState {
    pub policy: Policy,
    pub critic: Critic,
    opt_c: Vec<Optimizer>,
    opt_a: Optimizer,
    synth: Vec<TransitionRecord>,
    iter: usize,
    seed: u64,
    rng: ChaCha8Rng,
}

impl ComboState {
    pub fn new(env: &Env, config: &ComboConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = initial_policy(env, &config.hidden_actor, &mut rng)?;
        let critic = Critic::new(env, config.hidden_critic.clone(), &mut rng)?;
        let opt_c = critic
            .nets
            .iter()
            .map(|_| Optimizer::adam(config.critic_lr))
            .collect();
        Ok(Self {
            policy,
            critic,
            opt_c,
            opt_a: Optimizer::adam(config.actor_lr),
            synth: Vec::new(),
            iter: 0,
            seed,
            rng,
        })
    }

    /// One iteration: refresh synthetic rollouts if due, one conservative
    /// critic regression step per net, one policy improvement.
    pub fn step(
        &mut self,
        env: &Env,
        dataset: &TrajectoryDataset,
        cost: &CostFn,
        dynamics: &DynamicsEnsemble,
        config: &ComboConfig,
    ) -> Result<()> {
        if self.iter % config.rollout_refresh == 0 {
            let starts: Vec<RolloutStart> =
                sample_batch(dataset, config.rollouts_per_refresh, &mut self.rng)?
                    .iter()
                    .map(|r| RolloutStart::State(r.state.clone()))
                    .collect();
            self.synth = rollout(
                dynamics,
                env,
                &self.policy,
                &starts,
                config.rollout_horizon,
                self.seed ^ (self.iter as u64).wrapping_mul(0xA076_1D64_78BD_642F),
            )?;
        }
        let n_data = ((config.f_data * config.batch as f64).round() as usize).min(config.batch);
        let n_synth = config.batch - n_data;
        let mut batch: Vec<TransitionRecord> = sample_batch(dataset, n_data, &mut self.rng)?
            .into_iter()
            .cloned()
            .collect();
        for _ in 0..n_synth {
            batch.push(self.synth[self.rng.gen_range(0..self.synth.len())].clone());
        }
        let mut inputs = Vec::with_capacity(config.batch);
        let mut targets = Vec::with_capacity(config.batch);
        for rec in &batch {
            let a_next = self.policy.sample_action(&rec.next_state, &mut self.rng);
            let q_next = self.critic.target_value(env, &rec.next_state, &a_next)?;
            // Entropy coefficient matches the improvement temperature, so the
            // soft backup and softmax(-Q/tau) improvement share a fixed point.
            let lp = config.temperature * self.policy.log_prob(&rec.next_state, &a_next);
            let c = cost(&rec.state, &rec.action);
            inputs.push(critic_input(env, &rec.state, &rec.action));
            targets.push(sampled_bellman_target(c, config.gamma, q_next, lp));
        }
        let data_inputs = &inputs[..n_data];
        let synth_inputs = &inputs[n_data..];
        for (net_idx, opt) in self.opt_c.iter_mut().enumerate() {
            let (_, grad) = combo_critic_update(
                &self.critic.nets[net_idx],
                &inputs,
                &targets,
                data_inputs,
                synth_inputs,
                config.beta,
            )?;
            opt.step(&mut self.critic.nets[net_idx].params, &grad)?;
        }
        if (self.iter + 1) % config.target_refresh == 0 {
            self.critic.sync_targets();
        }
        match env {
            Env::Finite(_) => {
                self.policy =
                    policy_improvement(&self.critic.q_table(env)?, config.temperature)?;
            }
            Env::Continuous(_) => {
                let states: Vec<Vec<f64>> = batch.iter().map(|r| r.state.clone()).collect();
                if let Policy::Gaussian(actor) = &mut self.policy {
                    let (_, grad) = actor_objective(
                        env,
                        &self.critic,
                        actor,
                        &states,
                        config.temperature,
                        &mut self.rng,
                    )?;
                    self.opt_a.step(&mut actor.params, &grad)?;
                }
            }
        }
        self.iter += 1;
        Ok(())
    }
}

/// Full actor-critic loop over a fixed dataset, a cost source and a dynamics
/// model. Deterministic per seed; zero iterations return the untouched
/// initial policy and critic.
pub fn solve_offline_rl(
    env: &Env,
    dataset: &TrajectoryDataset,
    cost: &CostFn,
    dynamics: &DynamicsEnsemble,
    config: &ComboConfig,
    seed: u64,
) -> Result<OfflineRlResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("offline RL needs data".into()));
    }
    let mut state = ComboState::new(env, config, seed)?;
    for _ in 0..config.iterations {
        state.step(env, dataset, cost, dynamics, config)?;
    }
    Ok(OfflineRlResult {
        policy: state.policy,
        critic: state.critic,
    })
}
