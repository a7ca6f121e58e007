//! Evaluation utilities: an unbiased MMD² estimator, return normalisation
//! against anchor policies, and the generator-quality curve experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::future_sampler::{ExactOccupancySampler, PairSampler};
use crate::idle::{idle_train, IdleConfig};
use crate::mdp::{Env, Policy};
use crate::oracle;
use crate::par;

fn kernel(x: &[f64], y: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / d).exp()
}

/// Unbiased MMD² between two sample sets under the Gaussian kernel
/// exp(−‖x−y‖²/d), d the dimension: diagonal-free within-set means and a
/// 2/(NM) cross term. Needs at least two samples per set; can be slightly
/// negative by design.
pub fn mmd_unbiased(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "mmd needs >= 2 samples per set, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let d = xs[0].len();
    if d == 0 || xs.iter().chain(ys.iter()).any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: xs.iter().chain(ys.iter()).map(|v| v.len()).find(|&l| l != d).unwrap_or(0),
        });
    }
    let (n, m) = (xs.len(), ys.len());
    // Row sums in parallel; folded in index order so the result does not
    // depend on the scheduling.
    let xx: f64 = par::indexed_map(n, |i| {
        (0..n)
            .filter(|&j| j != i)
            .map(|j| kernel(&xs[i], &xs[j]))
            .sum::<f64>()
    })
    .iter()
    .sum();
    let yy: f64 = par::indexed_map(m, |i| {
        (0..m)
            .filter(|&j| j != i)
            .map(|j| kernel(&ys[i], &ys[j]))
            .sum::<f64>()
    })
    .iter()
    .sum();
    let xy: f64 = par::indexed_map(n, |i| (0..m).map(|j| kernel(&xs[i], &ys[j])).sum::<f64>())
        .iter()
        .sum();
    Ok(xx / (n * (n - 1)) as f64 + yy / (m * (m - 1)) as f64 - 2.0 * xy / (n * m) as f64)
}

/// 100 · (raw − random) / (expert − random); anchors must differ.
pub fn normalized_return(raw: f64, random_anchor: f64, expert_anchor: f64) -> Result<f64> {
    let span = expert_anchor - random_anchor;
    if span == 0.0 || !span.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degenerate anchors: random = {random_anchor}, expert = {expert_anchor}"
        )));
    }
    Ok(100.0 * (raw - random_anchor) / span)
}

/// MMD² between generator outputs and exact discounted-occupancy samples at
/// a sequence of training checkpoints, one curve per discount, averaged over
/// a set of target policies.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MmdCurve {
    pub gamma: f64,
    pub checkpoints: Vec<usize>,
    pub values: Vec<f64>,
}

impl MmdCurve {
    /// Last checkpoint value over the first; how far the generator moved.
    pub fn final_over_initial(&self) -> f64 {
        self.values[self.values.len() - 1] / self.values[0]
    }
}

/// Retrains from scratch up to each checkpoint (deterministic per seed), then
/// compares raw relaxed generator samples with encoded pairs drawn from the
/// exact shifted discounted occupancy (the distribution the estimator's
/// classifier ratio encodes), conditioning states from the initial
/// distribution in both cases. Each curve point is the mean over the policy
/// set; the set must be non-empty.
pub fn mmd_curve_experiment(
    env: &Env,
    dataset: &TrajectoryDataset,
    policies: &[Policy],
    gammas: &[f64],
    checkpoints: &[usize],
    base: &IdleConfig,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<MmdCurve>> {
    let mdp = env
        .as_finite()
        .ok_or_else(|| Error::InvalidParameter("curve experiment needs a finite env".into()))?;
    if policies.is_empty() {
        return Err(Error::InvalidParameter("empty policy set".into()));
    }
    if checkpoints.is_empty() || n_samples < 2 {
        return Err(Error::InvalidParameter(
            "need checkpoints and >= 2 samples".into(),
        ));
    }
    let mut curves = Vec::with_capacity(gammas.len());
    for (gi, &gamma) in gammas.iter().enumerate() {
        let mut values = vec![0.0; checkpoints.len()];
        for (pi, policy) in policies.iter().enumerate() {
            let q = oracle::shifted_normalized_occupancy(mdp, policy, gamma)?;
            let reference = ExactOccupancySampler::from_occupancy(&q, mdp.n_actions)?;
            for (ci, &iters) in checkpoints.iter().enumerate() {
                let cfg = IdleConfig {
                    gamma,
                    iterations: iters,
                    ..base.clone()
                };
                let (_, g) = idle_train(dataset, env, policy, &cfg, seed ^ pi as u64)?;
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ ((gi * 10_000 + pi * 100 + ci + 1) as u64)
                        .wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let mut gen_samples = Vec::with_capacity(n_samples);
                let mut ref_samples = Vec::with_capacity(n_samples);
                for _ in 0..n_samples {
                    let s0 = mdp.sample_start(&mut rng) as f64;
                    let (gs, ga) = g.sample_pair(env, &[s0], &mut rng)?;
                    let mut genc = env.encode_state(&gs);
                    genc.extend(env.encode_action(&ga));
                    gen_samples.push(genc);
                    let s0r = mdp.sample_start(&mut rng) as f64;
                    let (ps, pa) = reference.sample_pair(env, &[s0r], &mut rng)?;
                    let mut enc = env.encode_state(&ps);
                    enc.extend(env.encode_action(&pa));
                    ref_samples.push(enc);
                }
                values[ci] += mmd_unbiased(&gen_samples, &ref_samples)? / policies.len() as f64;
            }
        }
        curves.push(MmdCurve {
            gamma,
            checkpoints: checkpoints.to_vec(),
            values,
        });
    }
    Ok(curves)
}
