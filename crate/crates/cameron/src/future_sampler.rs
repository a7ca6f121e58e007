//! Samplers for doubly-discounted future state-action pairs.
//!
//! Two approximate samplers target μ^{γ,δ}(·|s₀), the distribution of a pair
//! reached by a γ-discounted number of steps followed by a δ-discounted
//! number of further steps:
//!
//! * the generator-composition sampler chains two learned conditional
//!   generators (a γ-discounted one from s₀, then a δ-discounted one from the
//!   intermediate state);
//! * the roll-out sampler importance-resamples replay pairs toward the
//!   γ-discounted occupancy using a learned density ratio, then rolls the
//!   learned dynamics forward and picks a step with truncated-geometric
//!   weights.
//!
//! [`fill_cost_buffer`] mixes these with raw replay pairs according to
//! configured mixture weights and tags every entry with its source.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{
    sample_batch, CostEntry, CostReplayBuffer, MixtureWeights, SourceTag, TrajectoryDataset,
};
use crate::dynamics::{rollout, DynamicsEnsemble, RolloutStart, MAX_ROLLOUT_HORIZON};
use crate::error::{Error, Result};
use crate::idle::{EvaluationFunction, Generator};
use crate::mdp::{sample_categorical, Env, Policy};

/// Candidates drawn per kept roll-out start during self-normalised
/// resampling.
pub const RESAMPLE_OVERSAMPLE: usize = 4;

/// Normalised weights δ^t / Σ_{u≤H} δ^u for t = 0..=H.
pub fn truncated_geometric_weights(delta: f64, horizon: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} not in [0,1)"
        )));
    }
    let raw: Vec<f64> = (0..=horizon).map(|t| delta.powi(t as i32)).collect();
    let z: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / z).collect())
}

/// Anything that can draw a future (state, action) pair conditioned on a
/// state: a trained generator, or an exact occupancy table in tests.
pub trait PairSampler {
    fn sample_pair(
        &self,
        env: &Env,
        cond_state: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl PairSampler for Generator {
    fn sample_pair(
        &self,
        env: &Env,
        cond_state: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.sample(env, cond_state, rng)
    }
}

/// Exact conditional pair sampler over a finite index space:
/// `table[s₀][s·A + a]` holds the normalised occupancy.
pub struct ExactOccupancySampler {
    pub table: Vec<Vec<f64>>,
    pub n_actions: usize,
}

impl ExactOccupancySampler {
    /// Normalises an unnormalised occupancy table (mass 1/(1−γ) per row).
    pub fn from_occupancy(table: &[Vec<f64>], n_actions: usize) -> Result<Self> {
        let mut rows = Vec::with_capacity(table.len());
        for row in table {
            let z: f64 = row.iter().sum();
            if z <= 0.0 {
                return Err(Error::InvalidParameter("empty occupancy row".into()));
            }
            rows.push(row.iter().map(|v| v / z).collect());
        }
        Ok(Self {
            table: rows,
            n_actions,
        })
    }
}

impl PairSampler for ExactOccupancySampler {
    fn sample_pair(
        &self,
        _env: &Env,
        cond_state: &[f64],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let s0 = cond_state[0] as usize;
        let x = sample_categorical(&self.table[s0], rng);
        Ok((
            vec![(x / self.n_actions) as f64],
            vec![(x % self.n_actions) as f64],
        ))
    }
}

/// Generator-composition sampler: x ~ γ-sampler(s₀), then x₊ ~ δ-sampler at
/// the intermediate state.
pub fn sample_mu_idle(
    env: &Env,
    g_gamma: &impl PairSampler,
    g_delta: &impl PairSampler,
    cond_state: &[f64],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (mid_state, _mid_action) = g_gamma.sample_pair(env, cond_state, rng)?;
        out.push(g_delta.sample_pair(env, &mid_state, rng)?);
    }
    Ok(out)
}

/// Roll-out sampler. Replay pairs are drawn uniformly (oversampled 4×),
/// resampled in proportion to the γ-ratio E/(1−E) conditioned on s₀, rolled
/// forward through the dynamics model for `horizon` steps with the first
/// action forced, and a step index t ~ truncated-Geometric(δ) picks the
/// returned pair (t = 0 is the resampled start itself).
#[allow(clippy::too_many_arguments)]
pub fn sample_mu_rollout(
    env: &Env,
    e_gamma: &EvaluationFunction,
    dataset: &TrajectoryDataset,
    dynamics: &DynamicsEnsemble,
    policy: &Policy,
    delta: f64,
    cond_state: &[f64],
    n: usize,
    n_rollouts: usize,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    if n_rollouts == 0 {
        return Err(Error::InvalidParameter("need at least one rollout".into()));
    }
    if horizon == 0 || horizon > MAX_ROLLOUT_HORIZON {
        return Err(Error::InvalidParameter(format!(
            "rollout horizon {horizon} outside 1..={MAX_ROLLOUT_HORIZON}"
        )));
    }
    let candidates = sample_batch(dataset, RESAMPLE_OVERSAMPLE * n_rollouts, rng)?;
    let mut weights = Vec::with_capacity(candidates.len());
    for rec in &candidates {
        weights.push(e_gamma.ratio(env, &rec.state, &rec.action, cond_state)?);
    }
    let z: f64 = weights.iter().sum();
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Numerical(format!(
            "resampling weights sum to {z}"
        )));
    }
    let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let starts: Vec<RolloutStart> = (0..n_rollouts)
        .map(|_| {
            let i = sample_categorical(&probs, rng);
            RolloutStart::Pair(candidates[i].state.clone(), candidates[i].action.clone())
        })
        .collect();
    let records = rollout(dynamics, env, policy, &starts, horizon, rng.gen())?;
    let geo = truncated_geometric_weights(delta, horizon)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let r = rng.gen_range(0..n_rollouts);
        let t = sample_categorical(&geo, rng);
        let chunk = &records[r * horizon..(r + 1) * horizon];
        let pair = if t < horizon {
            (chunk[t].state.clone(), chunk[t].action.clone())
        } else {
            let last = &chunk[horizon - 1].next_state;
            (last.clone(), policy.sample_action(last, rng))
        };
        out.push(pair);
    }
    Ok(out)
}

/// Conditioning start state: the initial distribution for finite
/// environments, a recorded episode start for continuous ones.
pub fn sample_start_state(
    env: &Env,
    dataset: &TrajectoryDataset,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    match env {
        Env::Finite(m) => Ok(vec![m.sample_start(rng) as f64]),
        Env::Continuous(_) => {
            let starts = dataset.episode_starts();
            if starts.is_empty() {
                return Err(Error::EmptyDataset("no episode starts".into()));
            }
            Ok(starts[rng.gen_range(0..starts.len())].state.clone())
        }
    }
}

/// Everything needed to draw tagged future samples for the cost buffer.
pub struct FutureSamplers<'a> {
    pub env: &'a Env,
    pub dataset: &'a TrajectoryDataset,
    pub policy: &'a Policy,
    pub dynamics: &'a DynamicsEnsemble,
    pub e_gamma: &'a EvaluationFunction,
    pub g_gamma: &'a Generator,
    pub g_delta: &'a Generator,
    pub delta: f64,
    pub rollout_horizon: usize,
    pub rollouts_per_fill: usize,
}

/// Pushes `n` entries drawn from the configured source mixture. Each entry
/// records its conditioning state, future pair and source tag.
pub fn fill_cost_buffer(
    buffer: &mut CostReplayBuffer,
    samplers: &FutureSamplers,
    weights: &MixtureWeights,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    weights.validate()?;
    let probs = [weights.f_data, weights.f_idle, weights.f_rollout];
    // The roll-out source is the expensive one: pre-draw a shared pool.
    let mut rollout_pool: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    if weights.f_rollout > 0.0 {
        let expected = ((weights.f_rollout * n as f64).ceil() as usize).max(1);
        let cond = sample_start_state(samplers.env, samplers.dataset, rng)?;
        let pairs = sample_mu_rollout(
            samplers.env,
            samplers.e_gamma,
            samplers.dataset,
            samplers.dynamics,
            samplers.policy,
            samplers.delta,
            &cond,
            expected,
            samplers.rollouts_per_fill,
            samplers.rollout_horizon,
            rng,
        )?;
        rollout_pool = pairs
            .into_iter()
            .map(|(s, a)| (cond.clone(), s, a))
            .collect();
    }
    let mut rollout_idx = 0;
    for _ in 0..n {
        let source = sample_categorical(&probs, rng);
        let entry = match source {
            0 => {
                let rec = sample_batch(samplers.dataset, 1, rng)?[0];
                let cond = sample_start_state(samplers.env, samplers.dataset, rng)?;
                CostEntry {
                    cond_state: cond,
                    future_state: rec.state.clone(),
                    future_action: rec.action.clone(),
                    source: SourceTag::Data,
                }
            }
            1 => {
                let cond = sample_start_state(samplers.env, samplers.dataset, rng)?;
                let (s, a) = sample_mu_idle(
                    samplers.env,
                    samplers.g_gamma,
                    samplers.g_delta,
                    &cond,
                    1,
                    rng,
                )?
                .pop()
                .unwrap();
                CostEntry {
                    cond_state: cond,
                    future_state: s,
                    future_action: a,
                    source: SourceTag::Idle,
                }
            }
            _ => {
                if rollout_idx >= rollout_pool.len() {
                    // Pool exhausted: draw a fresh conditioned batch.
                    let cond = sample_start_state(samplers.env, samplers.dataset, rng)?;
                    let pairs = sample_mu_rollout(
                        samplers.env,
                        samplers.e_gamma,
                        samplers.dataset,
                        samplers.dynamics,
                        samplers.policy,
                        samplers.delta,
                        &cond,
                        rollout_pool.len().max(16),
                        samplers.rollouts_per_fill,
                        samplers.rollout_horizon,
                        rng,
                    )?;
                    rollout_pool
                        .extend(pairs.into_iter().map(|(s, a)| (cond.clone(), s, a)));
                }
                let (cond, s, a) = rollout_pool[rollout_idx].clone();
                rollout_idx += 1;
                CostEntry {
                    cond_state: cond,
                    future_state: s,
                    future_action: a,
                    source: SourceTag::Rollout,
                }
            }
        };
        buffer.push(entry);
    }
    Ok(())
}
