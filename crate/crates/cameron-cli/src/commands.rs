//! Subcommand implementations. Every training run emits `summary.csv`
//! (per-seed normalised returns), algorithm-specific metrics CSVs and JSON
//! checkpoints into its run directory.

use std::path::Path;

use cameron::cost::{
    bc_baseline, cameron_run, train_cost_oril, train_cost_tgr, CameronConfig, CostModel,
};
use cameron::datasets::{
    load_dataset, save_dataset, DatasetTag, MixtureWeights, TrajectoryDataset,
};
use cameron::dynamics::fit_ensemble;
use cameron::eval::{mmd_curve_experiment, normalized_return};
use cameron::mdp::{
    anchors, builtin_env, generate_dataset_with_horizon, policy_eval_return, tier_policy, Env,
    Policy, Quality,
};
use cameron::offline_rl::ComboState;

use crate::config::Config;
use crate::runs::RunDir;
use crate::CliError;

pub struct Context {
    pub cfg: Config,
    pub root: std::path::PathBuf,
    pub seed: u64,
}

/// Seed offset of the normalisation anchors; fixed so that every run of an
/// experiment normalises against the same constants.
const ANCHOR_SEED: u64 = 0xA11C;

impl Context {
    fn env(&self) -> Result<Env, CliError> {
        builtin_env(&self.cfg.run.env).map_err(|e| CliError::Config(e.to_string()))
    }

    fn horizon(&self, env: &Env) -> usize {
        if self.cfg.run.horizon == 0 {
            env.default_horizon()
        } else {
            self.cfg.run.horizon
        }
    }

    fn tier(&self, env: &Env, quality: Quality, salt: u64) -> Result<TrajectoryDataset, CliError> {
        Ok(generate_dataset_with_horizon(
            env,
            quality,
            self.cfg.run.episodes,
            self.horizon(env),
            self.seed ^ salt,
        )?)
    }

    /// Loads the three tiers from a gen-data directory, or regenerates them
    /// deterministically from the base seed.
    fn datasets(
        &self,
        env: &Env,
        data_dir: Option<&Path>,
    ) -> Result<(TrajectoryDataset, TrajectoryDataset, TrajectoryDataset), CliError> {
        match data_dir {
            Some(dir) => {
                let load = |name: &str| -> Result<TrajectoryDataset, CliError> {
                    load_dataset(&dir.join(name)).map_err(|e| {
                        CliError::Config(format!("{}/{name}: {e}", dir.display()))
                    })
                };
                Ok((load("expert.jsonl")?, load("medium.jsonl")?, load("random.jsonl")?))
            }
            None => Ok((
                self.tier(env, Quality::Expert, 0xE0)?,
                self.tier(env, Quality::Medium, 0xED)?,
                self.tier(env, Quality::Random, 0x4A)?,
            )),
        }
    }

    fn ablation_seeds(&self) -> Vec<u64> {
        if self.cfg.run.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.cfg.run.seeds.clone()
        }
    }

    fn evaluate(&self, env: &Env, policy: &Policy, seed: u64) -> Result<(f64, f64), CliError> {
        let (raw, _) = policy_eval_return(env, policy, self.cfg.run.eval_episodes, seed)?;
        let (random, expert) = anchors(env, self.cfg.run.anchor_episodes, ANCHOR_SEED)?;
        Ok((raw, normalized_return(raw, random, expert)?))
    }
}

struct SummaryRow {
    algorithm: String,
    env: String,
    variant: String,
    seed: u64,
    raw_return: f64,
    normalized_return: f64,
}

fn write_summary(run: &RunDir, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(run.file("summary.csv"))?;
    w.write_record(["algorithm", "env", "variant", "seed", "raw_return", "normalized_return"])?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.env.clone(),
            r.variant.clone(),
            r.seed.to_string(),
            r.raw_return.to_string(),
            r.normalized_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    let env = ctx.env()?;
    let run = RunDir::create(&ctx.root, "gen-data", &ctx.cfg, &[ctx.seed])?;
    for (name, quality, salt) in [
        ("expert.jsonl", Quality::Expert, 0xE0),
        ("medium.jsonl", Quality::Medium, 0xED),
        ("random.jsonl", Quality::Random, 0x4A),
    ] {
        let ds = ctx.tier(&env, quality, salt)?;
        save_dataset(&ds, &run.file(name))?;
    }
    Ok(())
}

/// Offline RL loop with periodic evaluation rows in metrics.csv; returns the
/// final policy.
fn combo_loop(
    ctx: &Context,
    env: &Env,
    dataset: &TrajectoryDataset,
    cost: &cameron::offline_rl::CostFn,
    run: &RunDir,
    seed: u64,
) -> Result<Policy, CliError> {
    let cfg = &ctx.cfg;
    let dynamics = fit_ensemble(dataset, env, &cfg.cameron.dynamics, seed ^ 0x51_7C)?;
    let mut state = ComboState::new(env, &cfg.combo, seed)?;
    let mut w = csv::Writer::from_path(run.file("metrics.csv"))?;
    w.write_record(["iteration", "eval_return"])?;
    let every = cfg.cameron.eval_every.max(1);
    for iter in 0..cfg.combo.iterations {
        state.step(env, dataset, cost, &dynamics, &cfg.combo)?;
        if (iter + 1) % every == 0 || iter + 1 == cfg.combo.iterations {
            let (ret, _) = policy_eval_return(env, &state.policy, cfg.run.eval_episodes, seed)?;
            w.write_record([iter.to_string(), ret.to_string()])?;
        }
    }
    w.flush()?;
    Ok(state.policy)
}

pub fn train_combo(ctx: &Context, data_dir: Option<&Path>) -> Result<(), CliError> {
    let env = ctx.env()?;
    let (expert, medium, random) = ctx.datasets(&env, data_dir)?;
    let combined =
        TrajectoryDataset::concat(&[&expert, &medium, &random], DatasetTag::Mixed)?;
    let run = RunDir::create(&ctx.root, "train-combo", &ctx.cfg, &[ctx.seed])?;
    let env_ref = &env;
    let cost = move |s: &[f64], a: &[f64]| env_ref.true_cost(s, a);
    let policy = combo_loop(ctx, &env, &combined, &cost, &run, ctx.seed)?;
    run.write_json("policy.json", &policy)?;
    let (raw, norm) = ctx.evaluate(&env, &policy, ctx.seed ^ 0xE7)?;
    write_summary(
        &run,
        &[SummaryRow {
            algorithm: "combo".into(),
            env: ctx.cfg.run.env.clone(),
            variant: "true-cost".into(),
            seed: ctx.seed,
            raw_return: raw,
            normalized_return: norm,
        }],
    )
}

fn cameron_metrics(run: &RunDir, metrics: &[cameron::cost::CameronMetrics]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(run.file("metrics.csv"))?;
    w.write_record([
        "iteration",
        "cost_objective",
        "eval_return",
        "frac_data",
        "frac_idle",
        "frac_rollout",
    ])?;
    for m in metrics {
        let (fd, fi, fr) = m.buffer_fractions;
        w.write_record([
            m.iteration.to_string(),
            m.cost_objective.to_string(),
            m.eval_return.map(|v| v.to_string()).unwrap_or_default(),
            fd.to_string(),
            fi.to_string(),
            fr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn train_cameron(ctx: &Context, data_dir: Option<&Path>) -> Result<(), CliError> {
    let env = ctx.env()?;
    let (expert, medium, random) = ctx.datasets(&env, data_dir)?;
    let exploratory =
        TrajectoryDataset::concat(&[&medium, &random], DatasetTag::Exploratory)?;
    let run = RunDir::create(&ctx.root, "train-cameron", &ctx.cfg, &[ctx.seed])?;
    let mut cam = ctx.cfg.cameron.clone();
    cam.mixture = ctx.cfg.mixture;
    let res = cameron_run(&env, &expert, &exploratory, &cam, ctx.seed)?;
    cameron_metrics(&run, &res.metrics)?;
    run.write_json("policy.json", &res.policy)?;
    run.write_json("best_policy.json", &res.best_policy)?;
    run.write_json("cost.json", &res.cost)?;
    let (raw, norm) = ctx.evaluate(&env, &res.policy, ctx.seed ^ 0xE7)?;
    write_summary(
        &run,
        &[SummaryRow {
            algorithm: "cameron".into(),
            env: ctx.cfg.run.env.clone(),
            variant: "default".into(),
            seed: ctx.seed,
            raw_return: raw,
            normalized_return: norm,
        }],
    )
}

/// ORIL (`pu = true`) or TGR: train a static cost, then run offline RL on it.
pub fn train_baseline(ctx: &Context, data_dir: Option<&Path>, pu: bool) -> Result<(), CliError> {
    let env = ctx.env()?;
    let (expert, medium, random) = ctx.datasets(&env, data_dir)?;
    let exploratory =
        TrajectoryDataset::concat(&[&medium, &random], DatasetTag::Exploratory)?;
    let combined =
        TrajectoryDataset::concat(&[&expert, &medium, &random], DatasetTag::Mixed)?;
    let b = &ctx.cfg.baseline;
    let name = if pu { "train-oril" } else { "train-tgr" };
    let run = RunDir::create(&ctx.root, name, &ctx.cfg, &[ctx.seed])?;
    let cost: CostModel = if pu {
        train_cost_oril(
            &env,
            &expert,
            &exploratory,
            b.oril_phi,
            b.hidden.clone(),
            b.steps,
            b.batch,
            b.lr,
            ctx.seed ^ 0x0B1,
        )?
    } else {
        train_cost_tgr(
            &env,
            &expert,
            &exploratory,
            b.tgr_t0,
            b.hidden.clone(),
            b.steps,
            b.batch,
            b.lr,
            ctx.seed ^ 0x7B2,
        )?
    };
    run.write_json("cost.json", &cost)?;
    let env_ref = &env;
    let cost_ref = &cost;
    let cost_fn = move |s: &[f64], a: &[f64]| cost_ref.value(env_ref, s, a).unwrap_or(0.5);
    let policy = combo_loop(ctx, &env, &combined, &cost_fn, &run, ctx.seed)?;
    run.write_json("policy.json", &policy)?;
    let (raw, norm) = ctx.evaluate(&env, &policy, ctx.seed ^ 0xE7)?;
    write_summary(
        &run,
        &[SummaryRow {
            algorithm: if pu { "oril".into() } else { "tgr".into() },
            env: ctx.cfg.run.env.clone(),
            variant: "default".into(),
            seed: ctx.seed,
            raw_return: raw,
            normalized_return: norm,
        }],
    )
}

pub fn train_bc(ctx: &Context, data_dir: Option<&Path>) -> Result<(), CliError> {
    let env = ctx.env()?;
    let (expert, _, _) = ctx.datasets(&env, data_dir)?;
    let b = &ctx.cfg.baseline;
    let run = RunDir::create(&ctx.root, "train-bc", &ctx.cfg, &[ctx.seed])?;
    let policy = bc_baseline(&env, &expert, b.bc_steps, b.bc_batch, b.bc_lr, ctx.seed)?;
    run.write_json("policy.json", &policy)?;
    let (raw, norm) = ctx.evaluate(&env, &policy, ctx.seed ^ 0xE7)?;
    write_summary(
        &run,
        &[SummaryRow {
            algorithm: "bc".into(),
            env: ctx.cfg.run.env.clone(),
            variant: "default".into(),
            seed: ctx.seed,
            raw_return: raw,
            normalized_return: norm,
        }],
    )
}

pub fn eval_mmd(ctx: &Context, data_dir: Option<&Path>) -> Result<(), CliError> {
    let env = ctx.env()?;
    let (_, medium, random) = ctx.datasets(&env, data_dir)?;
    let dataset = TrajectoryDataset::concat(&[&medium, &random], DatasetTag::Exploratory)?;
    let mut policies = Vec::new();
    for name in &ctx.cfg.mmd.policies {
        let quality: Quality = name
            .parse()
            .map_err(|e: cameron::Error| CliError::Config(e.to_string()))?;
        policies.push(tier_policy(&env, quality));
    }
    let run = RunDir::create(&ctx.root, "eval-mmd", &ctx.cfg, &[ctx.seed])?;
    let curves = mmd_curve_experiment(
        &env,
        &dataset,
        &policies,
        &ctx.cfg.mmd.gammas,
        &ctx.cfg.mmd.checkpoints,
        &ctx.cfg.idle,
        ctx.cfg.mmd.n_samples,
        ctx.seed,
    )?;
    let mut w = csv::Writer::from_path(run.file("mmd.csv"))?;
    w.write_record(["gamma", "checkpoint", "mmd"])?;
    for curve in &curves {
        for (ck, v) in curve.checkpoints.iter().zip(curve.values.iter()) {
            w.write_record([curve.gamma.to_string(), ck.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(run.file("ratios.csv"))?;
    w.write_record(["gamma", "final_over_initial"])?;
    for curve in &curves {
        w.write_record([
            curve.gamma.to_string(),
            curve.final_over_initial().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the full loop once per (variant label, config, seed) triple and
/// writes a pooled summary.csv.
fn ablate(
    ctx: &Context,
    run: &RunDir,
    env: &Env,
    cases: &[(String, CameronConfig, TrajectoryDataset, TrajectoryDataset)],
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (variant, cam, expert, exploratory) in cases {
        for &seed in &ctx.ablation_seeds() {
            let res = cameron_run(env, expert, exploratory, cam, seed)?;
            let (raw, norm) = ctx.evaluate(env, &res.policy, seed ^ 0xE7)?;
            rows.push(SummaryRow {
                algorithm: "cameron".into(),
                env: ctx.cfg.run.env.clone(),
                variant: variant.clone(),
                seed,
                raw_return: raw,
                normalized_return: norm,
            });
        }
    }
    write_summary(run, &rows)
}

pub fn ablate_mixture(ctx: &Context, data_dir: Option<&Path>) -> Result<(), CliError> {
    let env = ctx.env()?;
    let (expert, medium, random) = ctx.datasets(&env, data_dir)?;
    let exploratory =
        TrajectoryDataset::concat(&[&medium, &random], DatasetTag::Exploratory)?;
    let run = RunDir::create(&ctx.root, "ablate-mixture", &ctx.cfg, &ctx.ablation_seeds())?;
    let settings = [
        ("balanced", MixtureWeights::balanced()),
        ("data-only", MixtureWeights::new(1.0, 0.0, 0.0)?),
        ("idle-only", MixtureWeights::new(0.0, 1.0, 0.0)?),
        ("rollout-only", MixtureWeights::new(0.0, 0.0, 1.0)?),
    ];
    let cases: Vec<_> = settings
        .iter()
        .map(|(name, m)| {
            let mut cam = ctx.cfg.cameron.clone();
            cam.mixture = *m;
            (name.to_string(), cam, expert.clone(), exploratory.clone())
        })
        .collect();
    ablate(ctx, &run, &env, &cases)
}

pub fn ablate_data_diversity(ctx: &Context) -> Result<(), CliError> {
    let env = ctx.env()?;
    let (expert, medium, random) = ctx.datasets(&env, None)?;
    let run = RunDir::create(
        &ctx.root,
        "ablate-data-diversity",
        &ctx.cfg,
        &ctx.ablation_seeds(),
    )?;
    let mut cam = ctx.cfg.cameron.clone();
    cam.mixture = ctx.cfg.mixture;
    let mixes: Vec<(String, TrajectoryDataset)> = vec![
        (
            "expert+medium+random".into(),
            TrajectoryDataset::concat(&[&medium, &random], DatasetTag::Exploratory)?,
        ),
        ("expert+medium".into(), medium.clone()),
        ("expert+random".into(), random.clone()),
    ];
    let cases: Vec<_> = mixes
        .into_iter()
        .map(|(name, exploratory)| (name, cam.clone(), expert.clone(), exploratory))
        .collect();
    ablate(ctx, &run, &env, &cases)
}
