//! Environment and policy abstractions: finite MDPs with exact transition
//! tables, a small continuous point-mass environment, discount/time-weighting
//! machinery, built-in toy environments and offline dataset generation.
//!
//! Costs, not rewards, everywhere: lower is better and all values lie in
//! [0,1].

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::approximator::{gaussian_log_prob, Activation, Head, Mlp, MlpSpec, ParamBlock};
use crate::datasets::{DatasetTag, TrajectoryDataset, TransitionRecord};
use crate::error::{Error, Result};
use crate::par;
use rand::SeedableRng;

const PROB_TOL: f64 = 1e-12;

/// Number of Monte-Carlo steps after which a γ-discounted tail is negligible.
pub fn effective_horizon(gamma: f64) -> usize {
    if gamma == 0.0 {
        return 1;
    }
    let t = ((1e-10 * (1.0 - gamma)).ln() / gamma.ln()).ceil();
    (t as usize).clamp(1, 10_000)
}

/// Time-offset weighting η over ℕ: a Dirac mass at 0 recovers the classical
/// discounted objective, a geometric distribution re-weights future states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TimeWeighting {
    Dirac0,
    Geometric { delta: f64 },
}

impl TimeWeighting {
    pub fn validate(&self) -> Result<()> {
        if let TimeWeighting::Geometric { delta } = self {
            if !(0.0..1.0).contains(delta) {
                return Err(Error::InvalidParameter(format!(
                    "geometric delta = {delta} not in [0,1)"
                )));
            }
        }
        Ok(())
    }

    /// Untruncated weight η(t).
    pub fn weight(&self, t: usize) -> f64 {
        match self {
            TimeWeighting::Dirac0 => {
                if t == 0 {
                    1.0
                } else {
                    0.0
                }
            }
            TimeWeighting::Geometric { delta } => (1.0 - delta) * delta.powi(t as i32),
        }
    }
}

/// η(0..=horizon), renormalised to sum to 1 over the truncated support.
pub fn eta_weights(weighting: TimeWeighting, horizon: usize) -> Result<Vec<f64>> {
    weighting.validate()?;
    let mut w: Vec<f64> = (0..=horizon).map(|t| weighting.weight(t)).collect();
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Numerical("eta weights sum to zero".into()));
    }
    for v in &mut w {
        *v /= sum;
    }
    Ok(w)
}

/// A finite MDP with explicit tables. `transition[s][a]` is a probability
/// row over next states, `cost[s][a]` lies in [0,1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub cost: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
    pub gamma: f64,
}

impl FiniteMdp {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {} not in [0,1)",
                self.gamma
            )));
        }
        check_prob_row(&self.p0, "p0")?;
        for (s, rows) in self.transition.iter().enumerate() {
            for (a, row) in rows.iter().enumerate() {
                check_prob_row(row, &format!("transition[{s}][{a}]"))?;
            }
        }
        for row in &self.cost {
            for &c in row {
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::Validation(format!("cost {c} outside [0,1]")));
                }
            }
        }
        Ok(())
    }

    pub fn encode_state(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s] = 1.0;
        v
    }

    pub fn encode_action(&self, a: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_actions];
        v[a] = 1.0;
        v
    }

    /// Nearest-vertex projection of a continuous one-hot-space vector.
    pub fn nearest_index(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap()
    }

    pub fn sample_next<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        sample_categorical(&self.transition[s][a], rng)
    }

    pub fn sample_start<R: Rng>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.p0, rng)
    }
}

fn check_prob_row(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| p < 0.0) {
        return Err(Error::Validation(format!("{what} has a negative entry")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::Validation(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

pub fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Point-mass style continuous environment: deterministic linear step plus
/// Gaussian velocity noise, bounded shaped cost, fixed horizon, no terminal
/// states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousEnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub dt: f64,
    pub noise_std: f64,
    pub start: Vec<f64>,
    pub start_noise_std: f64,
    pub gamma: f64,
}

impl ContinuousEnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be > 0".into()));
        }
        if self.state_dim != 2 * self.action_dim {
            return Err(Error::InvalidParameter(
                "point-mass state is position + velocity".into(),
            ));
        }
        Ok(())
    }

    pub fn init_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let normal = Normal::new(0.0, self.start_noise_std).unwrap();
        self.start.iter().map(|&v| v + normal.sample(rng)).collect()
    }

    pub fn step<R: Rng>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Vec<f64> {
        let k = self.action_dim;
        let normal = Normal::new(0.0, self.noise_std).unwrap();
        let mut next = vec![0.0; self.state_dim];
        for i in 0..k {
            let (p, v) = (state[i], state[k + i]);
            let a = action[i].clamp(-1.0, 1.0);
            next[i] = p + self.dt * v;
            next[k + i] = v + self.dt * a + normal.sample(rng);
        }
        next
    }

    /// Bounded quadratic-shaped cost in [0,1).
    pub fn cost(&self, state: &[f64], action: &[f64]) -> f64 {
        let k = self.action_dim;
        let pos2: f64 = state[..k].iter().map(|p| p * p).sum();
        let vel2: f64 = state[k..].iter().map(|v| v * v).sum();
        let act2: f64 = action.iter().map(|a| a * a).sum();
        1.0 - (-(pos2 + 0.1 * vel2 + 0.05 * act2)).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Env {
    Finite(FiniteMdp),
    Continuous(ContinuousEnvSpec),
}

impl Env {
    pub fn gamma(&self) -> f64 {
        match self {
            Env::Finite(m) => m.gamma,
            Env::Continuous(c) => c.gamma,
        }
    }

    pub fn as_finite(&self) -> Option<&FiniteMdp> {
        match self {
            Env::Finite(m) => Some(m),
            Env::Continuous(_) => None,
        }
    }

    /// Dimension of the raw state representation used in records:
    /// `[index]` for finite states, the full vector for continuous ones.
    pub fn raw_state_dim(&self) -> usize {
        match self {
            Env::Finite(_) => 1,
            Env::Continuous(c) => c.state_dim,
        }
    }

    pub fn raw_action_dim(&self) -> usize {
        match self {
            Env::Finite(_) => 1,
            Env::Continuous(c) => c.action_dim,
        }
    }

    /// Dimension of the encoded state fed to approximators (one-hot for
    /// finite environments).
    pub fn enc_state_dim(&self) -> usize {
        match self {
            Env::Finite(m) => m.n_states,
            Env::Continuous(c) => c.state_dim,
        }
    }

    pub fn enc_action_dim(&self) -> usize {
        match self {
            Env::Finite(m) => m.n_actions,
            Env::Continuous(c) => c.action_dim,
        }
    }

    pub fn encode_state(&self, raw: &[f64]) -> Vec<f64> {
        match self {
            Env::Finite(m) => m.encode_state(raw[0] as usize),
            Env::Continuous(_) => raw.to_vec(),
        }
    }

    pub fn encode_action(&self, raw: &[f64]) -> Vec<f64> {
        match self {
            Env::Finite(m) => m.encode_action(raw[0] as usize),
            Env::Continuous(_) => raw.to_vec(),
        }
    }

    /// Inverse of `encode_state` up to nearest-vertex projection.
    pub fn decode_state(&self, enc: &[f64]) -> Vec<f64> {
        match self {
            Env::Finite(_) => vec![FiniteMdp::nearest_index(enc) as f64],
            Env::Continuous(_) => enc.to_vec(),
        }
    }

    pub fn decode_action(&self, enc: &[f64]) -> Vec<f64> {
        match self {
            Env::Finite(_) => vec![FiniteMdp::nearest_index(enc) as f64],
            Env::Continuous(_) => enc.to_vec(),
        }
    }

    pub fn init_state<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Env::Finite(m) => vec![m.sample_start(rng) as f64],
            Env::Continuous(c) => c.init_state(rng),
        }
    }

    pub fn step<R: Rng>(&self, state: &[f64], action: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            Env::Finite(m) => {
                vec![m.sample_next(state[0] as usize, action[0] as usize, rng) as f64]
            }
            Env::Continuous(c) => c.step(state, action, rng),
        }
    }

    pub fn true_cost(&self, state: &[f64], action: &[f64]) -> f64 {
        match self {
            Env::Finite(m) => m.cost[state[0] as usize][action[0] as usize],
            Env::Continuous(c) => c.cost(state, action),
        }
    }

    /// Episode length used for dataset generation and evaluation.
    pub fn default_horizon(&self) -> usize {
        match self {
            Env::Finite(_) => 20,
            Env::Continuous(c) => c.horizon,
        }
    }
}

/// A policy: either an explicit tabular distribution per state, or a
/// parametric Gaussian over actions, or simple mixtures used for dataset
/// tiers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Policy {
    Tabular(Vec<Vec<f64>>),
    Gaussian(Mlp),
    UniformBox {
        low: f64,
        high: f64,
        dim: usize,
    },
    Mixture {
        base: Box<Policy>,
        other: Box<Policy>,
        eps: f64,
    },
}

impl Policy {
    pub fn uniform_tabular(n_states: usize, n_actions: usize) -> Self {
        Policy::Tabular(vec![vec![1.0 / n_actions as f64; n_actions]; n_states])
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Policy::Tabular(rows) => {
                for (s, row) in rows.iter().enumerate() {
                    check_prob_row(row, &format!("policy row {s}"))?;
                }
                Ok(())
            }
            Policy::Gaussian(mlp) => {
                if mlp.spec.head != Head::Gaussian {
                    return Err(Error::InvalidParameter(
                        "gaussian policy needs a gaussian head".into(),
                    ));
                }
                Ok(())
            }
            Policy::UniformBox { low, high, .. } => {
                if high <= low {
                    return Err(Error::InvalidParameter("empty uniform box".into()));
                }
                Ok(())
            }
            Policy::Mixture { base, other, eps } => {
                if !(0.0..=1.0).contains(eps) {
                    return Err(Error::InvalidParameter("mixture eps outside [0,1]".into()));
                }
                base.validate()?;
                other.validate()
            }
        }
    }

    pub fn as_tabular(&self) -> Option<&Vec<Vec<f64>>> {
        match self {
            Policy::Tabular(rows) => Some(rows),
            _ => None,
        }
    }

    pub fn sample_action<R: Rng>(&self, state: &[f64], rng: &mut R) -> Vec<f64> {
        match self {
            Policy::Tabular(rows) => {
                let s = state[0] as usize;
                vec![sample_categorical(&rows[s], rng) as f64]
            }
            Policy::Gaussian(mlp) => {
                let out = mlp.forward(state).expect("policy forward");
                let (mean, scale) = out.gaussian();
                let normal = Normal::new(0.0, 1.0).unwrap();
                mean.iter()
                    .zip(scale.iter())
                    .map(|(&m, &s)| m + s * normal.sample(rng))
                    .collect()
            }
            Policy::UniformBox { low, high, dim } => {
                (0..*dim).map(|_| rng.gen_range(*low..*high)).collect()
            }
            Policy::Mixture { base, other, eps } => {
                if rng.gen::<f64>() < *eps {
                    other.sample_action(state, rng)
                } else {
                    base.sample_action(state, rng)
                }
            }
        }
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> f64 {
        self.prob_density(state, action).ln()
    }

    fn prob_density(&self, state: &[f64], action: &[f64]) -> f64 {
        match self {
            Policy::Tabular(rows) => rows[state[0] as usize][action[0] as usize],
            Policy::Gaussian(mlp) => {
                let out = mlp.forward(state).expect("policy forward");
                let (mean, scale) = out.gaussian();
                gaussian_log_prob(mean, scale, action).exp()
            }
            Policy::UniformBox { low, high, dim } => {
                let inside = action.iter().all(|a| *a >= *low && *a <= *high);
                if inside {
                    (1.0 / (high - low)).powi(*dim as i32)
                } else {
                    0.0
                }
            }
            Policy::Mixture { base, other, eps } => {
                eps * other.prob_density(state, action)
                    + (1.0 - eps) * base.prob_density(state, action)
            }
        }
    }
}

/// Exact value iteration on a finite MDP (cost minimisation, no entropy
/// term). Returns the optimal Q table and the greedy deterministic policy.
pub fn value_iteration(mdp: &FiniteMdp) -> (Vec<Vec<f64>>, Policy) {
    let mut q = vec![vec![0.0; mdp.n_actions]; mdp.n_states];
    let mut values = vec![0.0; mdp.n_states];
    for _ in 0..100_000 {
        let mut delta = 0.0f64;
        for s in 0..mdp.n_states {
            for a in 0..mdp.n_actions {
                let mut v = mdp.cost[s][a];
                for (s2, &p) in mdp.transition[s][a].iter().enumerate() {
                    v += mdp.gamma * p * values[s2];
                }
                q[s][a] = v;
            }
        }
        for s in 0..mdp.n_states {
            let best = q[s].iter().cloned().fold(f64::INFINITY, f64::min);
            delta = delta.max((best - values[s]).abs());
            values[s] = best;
        }
        if delta < 1e-12 {
            break;
        }
    }
    let rows = q
        .iter()
        .map(|row| {
            let best = row
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let mut r = vec![0.0; mdp.n_actions];
            r[best] = 1.0;
            r
        })
        .collect();
    (q, Policy::Tabular(rows))
}

const BUILTIN_NAMES: &str = "chain5, gridworld4x4, pointmass2d";

/// Built-in toy environments: a stochastic 5-state chain, a 4x4 goal
/// gridworld and a 2-d point mass.
pub fn builtin_env(name: &str) -> Result<Env> {
    match name {
        "chain5" => Ok(Env::Finite(chain5())),
        "gridworld4x4" => Ok(Env::Finite(gridworld4x4())),
        "pointmass2d" => Ok(Env::Continuous(pointmass2d())),
        _ => Err(Error::UnknownEnv {
            name: name.to_string(),
            valid: BUILTIN_NAMES.to_string(),
        }),
    }
}

/// 5-state chain with slip probability 0.1. Action 0 moves toward the far
/// end, action 1 moves back; cost falls linearly toward the far end.
pub fn chain5() -> FiniteMdp {
    let n = 5;
    let slip = 0.1;
    let mut transition = vec![vec![vec![0.0; n]; 2]; n];
    for s in 0..n {
        let fwd = (s + 1).min(n - 1);
        let back = s.saturating_sub(1);
        transition[s][0][fwd] += 1.0 - slip;
        transition[s][0][back] += slip;
        transition[s][1][back] += 1.0 - slip;
        transition[s][1][fwd] += slip;
    }
    let cost = (0..n)
        .map(|s| vec![(n - 1 - s) as f64 / (n - 1) as f64; 2])
        .collect();
    let mut p0 = vec![0.0; n];
    p0[0] = 1.0;
    FiniteMdp {
        n_states: n,
        n_actions: 2,
        transition,
        cost,
        p0,
        gamma: 0.99,
    }
}

/// 4x4 gridworld, goal in the far corner (absorbing), unit step cost off the
/// goal, slip probability 0.1 split across the perpendicular directions.
pub fn gridworld4x4() -> FiniteMdp {
    let side = 4;
    let n = side * side;
    let goal = n - 1;
    let n_actions = 4;
    let slip = 0.1;
    let step = |s: usize, a: usize| -> usize {
        let (r, c) = (s / side, s % side);
        let (nr, nc) = match a {
            0 => (r.saturating_sub(1), c),
            1 => ((r + 1).min(side - 1), c),
            2 => (r, c.saturating_sub(1)),
            _ => (r, (c + 1).min(side - 1)),
        };
        nr * side + nc
    };
    let perp = |a: usize| -> [usize; 2] {
        if a < 2 {
            [2, 3]
        } else {
            [0, 1]
        }
    };
    let mut transition = vec![vec![vec![0.0; n]; n_actions]; n];
    for s in 0..n {
        for a in 0..n_actions {
            if s == goal {
                transition[s][a][goal] = 1.0;
                continue;
            }
            transition[s][a][step(s, a)] += 1.0 - slip;
            for &pa in &perp(a) {
                transition[s][a][step(s, pa)] += slip / 2.0;
            }
        }
    }
    let cost = (0..n)
        .map(|s| vec![if s == goal { 0.0 } else { 1.0 }; n_actions])
        .collect();
    let mut p0 = vec![0.0; n];
    p0[0] = 1.0;
    FiniteMdp {
        n_states: n,
        n_actions,
        transition,
        cost,
        p0,
        gamma: 0.99,
    }
}

/// Linear point-mass: 2-d position and velocity, acceleration actions.
pub fn pointmass2d() -> ContinuousEnvSpec {
    ContinuousEnvSpec {
        state_dim: 4,
        action_dim: 2,
        horizon: 200,
        dt: 0.1,
        noise_std: 0.02,
        start: vec![1.0, 1.0, 0.0, 0.0],
        start_noise_std: 0.05,
        gamma: 0.99,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Expert,
    Medium,
    Random,
}

impl std::str::FromStr for Quality {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expert" => Ok(Quality::Expert),
            "medium" => Ok(Quality::Medium),
            "random" => Ok(Quality::Random),
            _ => Err(Error::InvalidParameter(format!(
                "unknown quality `{s}`; valid: expert, medium, random"
            ))),
        }
    }
}

/// Mixing weight of the uniform policy in the medium tier.
pub const MEDIUM_EPS: f64 = 0.5;
/// Softening of the expert policy (it stays near-optimal but stochastic).
pub const EXPERT_EPS: f64 = 0.1;

/// The policy that generates each dataset tier: a softened value-iteration
/// optimum (finite) or a damped proportional controller (continuous) for the
/// expert, an ε=0.5 uniform mixture for the medium tier, uniform for random.
pub fn tier_policy(env: &Env, quality: Quality) -> Policy {
    match env {
        Env::Finite(mdp) => {
            let uniform = 1.0 / mdp.n_actions as f64;
            match quality {
                Quality::Random => Policy::uniform_tabular(mdp.n_states, mdp.n_actions),
                Quality::Expert | Quality::Medium => {
                    let (_, greedy) = value_iteration(mdp);
                    let greedy = greedy.as_tabular().unwrap().clone();
                    let eps = match quality {
                        Quality::Expert => EXPERT_EPS,
                        _ => MEDIUM_EPS,
                    };
                    let rows = greedy
                        .iter()
                        .map(|row| {
                            row.iter()
                                .map(|&p| (1.0 - eps) * p + eps * uniform)
                                .collect()
                        })
                        .collect();
                    Policy::Tabular(rows)
                }
            }
        }
        Env::Continuous(spec) => {
            let k = spec.action_dim;
            let uniform = Policy::UniformBox {
                low: -1.0,
                high: 1.0,
                dim: k,
            };
            match quality {
                Quality::Random => uniform,
                Quality::Expert | Quality::Medium => {
                    let expert = pointmass_controller(spec);
                    match quality {
                        Quality::Expert => expert,
                        _ => Policy::Mixture {
                            base: Box::new(expert),
                            other: Box::new(uniform),
                            eps: MEDIUM_EPS,
                        },
                    }
                }
            }
        }
    }
}

/// Proportional-derivative controller toward the origin, expressed as a
/// zero-hidden-layer Gaussian network so it shares the Policy machinery.
fn pointmass_controller(spec: &ContinuousEnvSpec) -> Policy {
    let k = spec.action_dim;
    let mlp_spec = MlpSpec::new(spec.state_dim, k, vec![], Activation::Tanh, Head::Gaussian)
        .expect("controller spec");
    let mut params = ParamBlock::zeros(&mlp_spec);
    // Final layer: rows 0..k produce the mean, rows k..2k the raw scale.
    let n_in = spec.state_dim;
    let (kp, kd) = (1.0, 2.0);
    for i in 0..k {
        params.values[i * n_in + i] = -kp; // position term
        params.values[i * n_in + k + i] = -kd; // velocity term
    }
    // Raw scale bias: softplus^{-1}(0.05).
    let raw = (0.05f64.exp() - 1.0).ln();
    let bias_off = 2 * k * n_in;
    for i in 0..k {
        params.values[bias_off + k + i] = raw;
    }
    Policy::Gaussian(Mlp {
        spec: mlp_spec,
        params,
    })
}

/// Rolls out `episodes` seeded episodes of the tier policy and records every
/// transition (with the true cost attached). Bitwise reproducible per seed.
pub fn generate_dataset(
    env: &Env,
    quality: Quality,
    episodes: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    generate_dataset_with_horizon(env, quality, episodes, env.default_horizon(), seed)
}

pub fn generate_dataset_with_horizon(
    env: &Env,
    quality: Quality,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryDataset> {
    if episodes == 0 {
        return Err(Error::EmptyDataset("episodes must be positive".into()));
    }
    let policy = tier_policy(env, quality);
    let mut records = Vec::with_capacity(episodes * horizon);
    for ep in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (ep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut state = env.init_state(&mut rng);
        for t in 0..horizon {
            let action = policy.sample_action(&state, &mut rng);
            let next = env.step(&state, &action, &mut rng);
            records.push(TransitionRecord {
                episode_id: ep,
                t,
                state: state.clone(),
                action: action.clone(),
                next_state: next.clone(),
                cost: Some(env.true_cost(&state, &action)),
                terminal: t + 1 == horizon,
            });
            state = next;
        }
    }
    let tag = match quality {
        Quality::Expert => DatasetTag::Expert,
        _ => DatasetTag::Exploratory,
    };
    let name = match env {
        Env::Finite(m) if m.n_states == 5 => "chain5",
        Env::Finite(_) => "gridworld4x4",
        Env::Continuous(_) => "pointmass2d",
    };
    Ok(TrajectoryDataset::new(records, tag, name.to_string()))
}

/// Mean discounted cumulative cost over seeded rollouts, with a 95%
/// confidence half-width. Episodes run on independent RNG streams so the
/// result is deterministic given the seed (parallel and sequential paths
/// produce identical output).
pub fn policy_eval_return(
    env: &Env,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("episodes must be >= 1".into()));
    }
    let horizon = match env {
        Env::Finite(_) => effective_horizon(env.gamma()),
        Env::Continuous(c) => c.horizon,
    };
    let returns = par::indexed_map(episodes, |ep| episode_return(env, policy, horizon, seed, ep));
    Ok(mean_half_width(&returns))
}

/// Sequential twin of [`policy_eval_return`], kept public for benchmarks.
pub fn policy_eval_return_seq(
    env: &Env,
    policy: &Policy,
    episodes: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if episodes == 0 {
        return Err(Error::InvalidParameter("episodes must be >= 1".into()));
    }
    let horizon = match env {
        Env::Finite(_) => effective_horizon(env.gamma()),
        Env::Continuous(c) => c.horizon,
    };
    let returns =
        par::indexed_map_seq(episodes, |ep| episode_return(env, policy, horizon, seed, ep));
    Ok(mean_half_width(&returns))
}

fn episode_return(env: &Env, policy: &Policy, horizon: usize, seed: u64, ep: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (ep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let gamma = env.gamma();
    let mut state = env.init_state(&mut rng);
    let mut total = 0.0;
    let mut disc = 1.0;
    for _ in 0..horizon {
        let action = policy.sample_action(&state, &mut rng);
        total += disc * env.true_cost(&state, &action);
        disc *= gamma;
        state = env.step(&state, &action, &mut rng);
    }
    total
}

fn mean_half_width(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}

/// Monte-Carlo anchors for normalised-return reporting: the returns of the
/// random and expert tier policies. The expert anchor maps to 100 by
/// construction.
pub fn anchors(env: &Env, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let random = policy_eval_return(env, &tier_policy(env, Quality::Random), episodes, seed)?.0;
    let expert = policy_eval_return(env, &tier_policy(env, Quality::Expert), episodes, seed)?.0;
    Ok((random, expert))
}
