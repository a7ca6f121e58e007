//! Maximum-likelihood dynamics models and rollouts in the learned MDP.
//!
//! An ensemble of Gaussian next-state predictors is trained on (s,a) → s′
//! pairs; of the members trained, only the ones with the lowest held-out
//! negative log-likelihood are kept, and each rollout step picks a retained
//! member uniformly at random. Finite-state environments ride the same code
//! path through one-hot encodings with nearest-vertex projection back to a
//! valid state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::approximator::{
    gaussian_log_prob, gaussian_log_prob_grad, Activation, Head, Mlp, MlpSpec, Optimizer,
};
use crate::datasets::{TrajectoryDataset, TransitionRecord};
use crate::error::{Error, Result};
use crate::mdp::{Env, FiniteMdp, Policy};
use crate::par;

/// Hard cap on model-rollout horizons; compounding model error makes longer
/// rollouts unreliable.
pub const MAX_ROLLOUT_HORIZON: usize = 10;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsConfig {
    pub members_trained: usize,
    pub members_kept: usize,
    pub hidden: Vec<usize>,
    pub train_steps: usize,
    pub batch: usize,
    pub lr: f64,
    /// Lower bound on the predictive scale. Without it, near-deterministic
    /// targets drive the per-coordinate scales toward zero and the exploding
    /// likelihood curvature stalls the mean fit.
    pub scale_floor: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            members_trained: 7,
            members_kept: 5,
            hidden: vec![32, 32],
            train_steps: 1500,
            batch: 64,
            lr: 1e-3,
            scale_floor: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Backend {
    /// Trained Gaussian predictors over encoded states.
    Learned(Vec<Mlp>),
    /// The true finite MDP, used as an oracle-grade stand-in in verification.
    Exact(FiniteMdp),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DynamicsEnsemble {
    backend: Backend,
    /// Held-out NLL of each retained member (empty for exact backends).
    pub validation_scores: Vec<f64>,
    scale_floor: f64,
}

/// Start of a model rollout: either a bare state (the policy supplies every
/// action) or a state-action pair (the given action is taken first).
#[derive(Clone, Debug)]
pub enum RolloutStart {
    State(Vec<f64>),
    Pair(Vec<f64>, Vec<f64>),
}

impl DynamicsEnsemble {
    /// Wraps the true dynamics of a finite environment as a perfect model.
    pub fn exact(mdp: FiniteMdp) -> Self {
        Self {
            backend: Backend::Exact(mdp),
            validation_scores: Vec::new(),
            scale_floor: 0.0,
        }
    }

    pub fn n_members(&self) -> usize {
        match &self.backend {
            Backend::Learned(m) => m.len(),
            Backend::Exact(_) => 1,
        }
    }

    /// Uniform draw over retained members, exposed so the selection
    /// distribution itself is testable.
    pub fn sample_member_index<R: Rng>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.n_members())
    }

    /// One model step from a raw (state, action) pair, returning the raw
    /// next state (decoded / projected for finite environments).
    pub fn step<R: Rng>(&self, env: &Env, state: &[f64], action: &[f64], rng: &mut R) -> Vec<f64> {
        match &self.backend {
            Backend::Exact(mdp) => {
                vec![mdp.sample_next(state[0] as usize, action[0] as usize, rng) as f64]
            }
            Backend::Learned(members) => {
                let member = &members[self.sample_member_index(rng)];
                let input = model_input(env, state, action);
                let out = member.forward(&input).expect("dynamics forward");
                let (mean, scale) = out.gaussian();
                let normal = Normal::new(0.0, 1.0).unwrap();
                let sampled: Vec<f64> = mean
                    .iter()
                    .zip(scale.iter())
                    .map(|(&m, &s)| m + s.max(self.scale_floor) * normal.sample(rng))
                    .collect();
                env.decode_state(&sampled)
            }
        }
    }

    /// Greedy (noise-free, first-member) prediction, for accuracy probes.
    pub fn predict_mean(&self, env: &Env, state: &[f64], action: &[f64]) -> Vec<f64> {
        match &self.backend {
            Backend::Exact(mdp) => {
                let row = &mdp.transition[state[0] as usize][action[0] as usize];
                vec![FiniteMdp::nearest_index(row) as f64]
            }
            Backend::Learned(members) => {
                let input = model_input(env, state, action);
                let out = members[0].forward(&input).expect("dynamics forward");
                env.decode_state(out.gaussian().0)
            }
        }
    }
}

fn model_input(env: &Env, state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut v = env.encode_state(state);
    v.extend(env.encode_action(action));
    v
}

/// Trains the ensemble: 90/10 train/validation split, `members_trained`
/// Gaussian predictors fit by Adam on the negative log-likelihood, and the
/// `members_kept` lowest-validation members retained. Deterministic per seed.
pub fn fit_ensemble(
    dataset: &TrajectoryDataset,
    env: &Env,
    config: &DynamicsConfig,
    seed: u64,
) -> Result<DynamicsEnsemble> {
    if dataset.len() < 100 {
        return Err(Error::EmptyDataset(format!(
            "dynamics fitting needs at least 100 transitions, got {}",
            dataset.len()
        )));
    }
    if config.members_kept > config.members_trained || config.members_kept == 0 {
        return Err(Error::InvalidParameter(
            "members_kept must be in 1..=members_trained".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    // Fisher-Yates with the seeded stream.
    for i in (1..indices.len()).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let n_val = (dataset.len() / 10).max(1);
    let (val_idx, train_idx) = indices.split_at(n_val);

    let input_dim = env.enc_state_dim() + env.enc_action_dim();
    let spec = MlpSpec::new(
        input_dim,
        env.enc_state_dim(),
        config.hidden.clone(),
        Activation::Tanh,
        Head::Gaussian,
    )?;

    let mut scored: Vec<(f64, Mlp)> = Vec::with_capacity(config.members_trained);
    for member in 0..config.members_trained {
        let mut mrng = ChaCha8Rng::seed_from_u64(
            seed ^ (member as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
        );
        let mut mlp = Mlp::new(spec.clone(), &mut mrng);
        let mut opt = Optimizer::adam(config.lr);
        for _ in 0..config.train_steps {
            let mut grad = vec![0.0; mlp.params.values.len()];
            for _ in 0..config.batch {
                let rec = &dataset.records[train_idx[mrng.gen_range(0..train_idx.len())]];
                let input = model_input(env, &rec.state, &rec.action);
                let target = env.encode_state(&rec.next_state);
                let (out, trace) = mlp.forward_trace(&input)?;
                let (mean, scale) = out.gaussian();
                let floored: Vec<f64> = scale.iter().map(|s| s.max(config.scale_floor)).collect();
                let (dmean, dscale, _) = gaussian_log_prob_grad(mean, &floored, &target);
                // Minimise the NLL: descend on −∇ log p. Scale gradients are
                // cut off below the floor.
                let mut dl_dout = Vec::with_capacity(2 * mean.len());
                dl_dout.extend(dmean.iter().map(|d| -d / config.batch as f64));
                dl_dout.extend(dscale.iter().zip(scale.iter()).map(|(d, s)| {
                    if *s < config.scale_floor {
                        0.0
                    } else {
                        -d / config.batch as f64
                    }
                }));
                let (g, _) = mlp.backward(&trace, &dl_dout);
                for (gi, gv) in grad.iter_mut().zip(g.iter()) {
                    *gi += gv;
                }
            }
            opt.step(&mut mlp.params, &grad)?;
        }
        let nll = validation_nll(&mlp, env, dataset, val_idx, config.scale_floor)?;
        scored.push((nll, mlp));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    scored.truncate(config.members_kept);
    let validation_scores = scored.iter().map(|(s, _)| *s).collect();
    Ok(DynamicsEnsemble {
        backend: Backend::Learned(scored.into_iter().map(|(_, m)| m).collect()),
        validation_scores,
        scale_floor: config.scale_floor,
    })
}

fn validation_nll(
    mlp: &Mlp,
    env: &Env,
    dataset: &TrajectoryDataset,
    val_idx: &[usize],
    scale_floor: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for &i in val_idx {
        let rec = &dataset.records[i];
        let input = model_input(env, &rec.state, &rec.action);
        let target = env.encode_state(&rec.next_state);
        let out = mlp.forward(&input)?;
        let (mean, scale) = out.gaussian();
        let floored: Vec<f64> = scale.iter().map(|s| s.max(scale_floor)).collect();
        total -= gaussian_log_prob(mean, &floored, &target);
    }
    Ok(total / val_idx.len() as f64)
}

/// Rolls the model forward for `horizon` steps from each start, sampling
/// actions from the policy (after any supplied first action). Rollouts run
/// on independent seeded streams, so the result is deterministic and
/// identical under the parallel and sequential paths.
pub fn rollout(
    ensemble: &DynamicsEnsemble,
    env: &Env,
    policy: &Policy,
    starts: &[RolloutStart],
    horizon: usize,
    seed: u64,
) -> Result<Vec<TransitionRecord>> {
    if horizon == 0 || horizon > MAX_ROLLOUT_HORIZON {
        return Err(Error::InvalidParameter(format!(
            "rollout horizon {horizon} outside 1..={MAX_ROLLOUT_HORIZON}"
        )));
    }
    let per_start = par::indexed_map(starts.len(), |i| {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut records = Vec::with_capacity(horizon);
        let (mut state, mut forced) = match &starts[i] {
            RolloutStart::State(s) => (s.clone(), None),
            RolloutStart::Pair(s, a) => (s.clone(), Some(a.clone())),
        };
        for t in 0..horizon {
            let action = forced
                .take()
                .unwrap_or_else(|| policy.sample_action(&state, &mut rng));
            let next = ensemble.step(env, &state, &action, &mut rng);
            records.push(TransitionRecord {
                episode_id: i,
                t,
                state: state.clone(),
                action,
                next_state: next.clone(),
                cost: None,
                terminal: t + 1 == horizon,
            });
            state = next;
        }
        records
    });
    Ok(per_start.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{builtin_env, chain5, generate_dataset, Quality};

    fn deterministic_chain() -> FiniteMdp {
        let mut m = chain5();
        for s in 0..5usize {
            let fwd = (s + 1).min(4);
            let back = s.saturating_sub(1);
            m.transition[s][0] = vec![0.0; 5];
            m.transition[s][0][fwd] = 1.0;
            m.transition[s][1] = vec![0.0; 5];
            m.transition[s][1][back] = 1.0;
        }
        m
    }

    fn small_config() -> DynamicsConfig {
        DynamicsConfig {
            members_trained: 7,
            members_kept: 5,
            hidden: vec![16],
            train_steps: 800,
            batch: 32,
            lr: 1e-2,
            scale_floor: 0.1,
        }
    }

    #[test]
    fn keeps_five_of_seven_and_is_deterministic() {
        let env = Env::Finite(deterministic_chain());
        let ds = generate_dataset(&env, Quality::Random, 30, 1).unwrap();
        let cfg = small_config();
        let e1 = fit_ensemble(&ds, &env, &cfg, 7).unwrap();
        let e2 = fit_ensemble(&ds, &env, &cfg, 7).unwrap();
        assert_eq!(e1.n_members(), 5);
        assert_eq!(e1.validation_scores.len(), 5);
        assert_eq!(e1.validation_scores, e2.validation_scores);
    }

    #[test]
    fn too_small_dataset_is_an_error() {
        let env = builtin_env("chain5").unwrap();
        let ds = generate_dataset(&env, Quality::Random, 2, 1).unwrap();
        assert!(fit_ensemble(&ds, &env, &small_config(), 0).is_err());
    }

    #[test]
    fn deterministic_env_heldout_prediction_accuracy() {
        let env = Env::Finite(deterministic_chain());
        let ds = generate_dataset(&env, Quality::Random, 60, 3).unwrap();
        let ensemble = fit_ensemble(&ds, &env, &small_config(), 11).unwrap();
        // Fresh data as the held-out probe.
        let probe = generate_dataset(&env, Quality::Random, 20, 99).unwrap();
        let correct = probe
            .records
            .iter()
            .filter(|r| ensemble.predict_mean(&env, &r.state, &r.action) == r.next_state)
            .count();
        let acc = correct as f64 / probe.len() as f64;
        assert!(acc >= 0.99, "held-out accuracy {acc}");
    }

    #[test]
    fn member_selection_is_uniform() {
        let ensemble = DynamicsEnsemble {
            backend: Backend::Learned(vec![
                Mlp {
                    spec: MlpSpec::new(2, 1, vec![], Activation::Tanh, Head::Gaussian).unwrap(),
                    params: crate::approximator::ParamBlock::zeros(
                        &MlpSpec::new(2, 1, vec![], Activation::Tanh, Head::Gaussian).unwrap(),
                    ),
                };
                5
            ]),
            validation_scores: vec![0.0; 5],
            scale_floor: 0.1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[ensemble.sample_member_index(&mut rng)] += 1;
        }
        // Chi-squared, 4 dof; 13.28 is the 0.01 critical value.
        let e = n as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 13.28, "chi2 = {chi2}");
    }

    #[test]
    fn rollout_length_and_horizon_bounds() {
        let env = builtin_env("chain5").unwrap();
        let ensemble = DynamicsEnsemble::exact(chain5());
        let policy = Policy::uniform_tabular(5, 2);
        let starts = vec![RolloutStart::State(vec![0.0])];
        let recs = rollout(&ensemble, &env, &policy, &starts, 5, 1).unwrap();
        assert_eq!(recs.len(), 5);
        assert!(rollout(&ensemble, &env, &policy, &starts, 0, 1).is_err());
        assert!(rollout(&ensemble, &env, &policy, &starts, 11, 1).is_err());
    }

    #[test]
    fn pair_start_forces_first_action() {
        let env = Env::Finite(deterministic_chain());
        let ensemble = DynamicsEnsemble::exact(deterministic_chain());
        // Policy always moves back; forced first action moves forward.
        let policy = Policy::Tabular(vec![vec![0.0, 1.0]; 5]);
        let starts = vec![RolloutStart::Pair(vec![2.0], vec![0.0])];
        let recs = rollout(&ensemble, &env, &policy, &starts, 2, 3).unwrap();
        assert_eq!(recs[0].action, vec![0.0]);
        assert_eq!(recs[0].next_state, vec![3.0]);
        assert_eq!(recs[1].action, vec![1.0]);
    }

    #[test]
    fn learned_rollout_visitation_close_to_true_rollouts() {
        let env = Env::Finite(deterministic_chain());
        let ds = generate_dataset(&env, Quality::Random, 60, 5).unwrap();
        let ensemble = fit_ensemble(&ds, &env, &small_config(), 21).unwrap();
        let policy = Policy::uniform_tabular(5, 2);
        let starts: Vec<RolloutStart> =
            (0..10_000).map(|_| RolloutStart::State(vec![0.0])).collect();
        let synth = rollout(&ensemble, &env, &policy, &starts, 5, 77).unwrap();
        let real = rollout(
            &DynamicsEnsemble::exact(deterministic_chain()),
            &env,
            &policy,
            &starts,
            5,
            78,
        )
        .unwrap();
        let visitation = |recs: &[TransitionRecord]| -> Vec<f64> {
            let mut v = vec![0.0; 5];
            for r in recs {
                v[r.next_state[0] as usize] += 1.0;
            }
            let total: f64 = v.iter().sum();
            v.into_iter().map(|x| x / total).collect()
        };
        let (a, b) = (visitation(&synth), visitation(&real));
        let tv: f64 = a
            .iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv <= 0.1, "total variation {tv}");
    }

    #[test]
    fn rollouts_reproducible_per_seed() {
        let env = builtin_env("chain5").unwrap();
        let ensemble = DynamicsEnsemble::exact(chain5());
        let policy = Policy::uniform_tabular(5, 2);
        let starts: Vec<RolloutStart> = (0..8).map(|s| RolloutStart::State(vec![(s % 5) as f64])).collect();
        let a = rollout(&ensemble, &env, &policy, &starts, 5, 42).unwrap();
        let b = rollout(&ensemble, &env, &policy, &starts, 5, 42).unwrap();
        assert_eq!(a, b);
    }
}
