//! Scratch harness for sizing the desk-scale comparison runs.

use std::time::Instant;

use cameron::cost::{
    bc_baseline, cameron_run, train_cost_oril, train_cost_tgr, CameronConfig,
};
use cameron::datasets::{DatasetTag, TrajectoryDataset};
use cameron::dynamics::fit_ensemble;
use cameron::eval::normalized_return;
use cameron::mdp::{builtin_env, generate_dataset, policy_eval_return, Quality};
use cameron::offline_rl::ComboState;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let env_name = args.get(1).map(String::as_str).unwrap_or("chain5");
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let env = builtin_env(env_name).unwrap();

    let exp_eps: usize = std::env::var("EXP_EPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(60);
    let expert = generate_dataset(&env, Quality::Expert, exp_eps, seed ^ 0xE0).unwrap();
    let medium = generate_dataset(&env, Quality::Medium, 60, seed ^ 0xED).unwrap();
    let random = generate_dataset(&env, Quality::Random, 60, seed ^ 0x4A).unwrap();
    let exploratory =
        TrajectoryDataset::concat(&[&medium, &random], DatasetTag::Exploratory).unwrap();
    let combined =
        TrajectoryDataset::concat(&[&expert, &medium, &random], DatasetTag::Mixed).unwrap();

    let (rand_ret, exp_ret) = cameron::mdp::anchors(&env, 400, 0xA11C).unwrap();
    println!("anchors: random={rand_ret:.3} expert={exp_ret:.3}");
    let norm = |raw: f64| normalized_return(raw, rand_ret, exp_ret).unwrap();
    let eval = |p: &cameron::mdp::Policy| {
        policy_eval_return(&env, p, 400, 0xE7).unwrap().0
    };
    // Exact (oracle) anchors and evaluation to factor out Monte-Carlo noise.
    let mfin = env.as_finite().unwrap().clone();
    let gamma = mfin.gamma;
    let exact_ret = |p: &cameron::mdp::Policy| {
        cameron::oracle::exact_policy_return(&mfin, p, &mfin.cost, gamma).unwrap()
    };
    let exact_rand = exact_ret(&cameron::mdp::tier_policy(&env, Quality::Random));
    let exact_exp = exact_ret(&cameron::mdp::tier_policy(&env, Quality::Expert));
    let xnorm =
        |p: &cameron::mdp::Policy| normalized_return(exact_ret(p), exact_rand, exact_exp).unwrap();

    let mut cfg = CameronConfig::desk_finite();
    let getf = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    cfg.combo.beta = getf("BETA", cfg.combo.beta);
    cfg.combo.temperature = getf("TEMP", cfg.combo.temperature);
    cfg.combo.iterations = getf("ITERS", cfg.combo.iterations as f64) as usize;
    let combo_iters = cfg.combo.iterations;
    cfg.dynamics.train_steps = getf("DYN_STEPS", cfg.dynamics.train_steps as f64) as usize;
    cfg.dynamics.hidden = vec![getf("DYN_HIDDEN", 16.0) as usize];

    // BC
    let t = Instant::now();
    let bc = bc_baseline(&env, &expert, 2_000, 128, 5e-2, seed).unwrap();
    println!("bc: norm={:.1} xnorm={:.1} ({:?})", norm(eval(&bc)), xnorm(&bc), t.elapsed());

    // COMBO with true cost
    let t = Instant::now();
    let dynamics = if std::env::var("EXACT_DYN").is_ok() {
        cameron::dynamics::DynamicsEnsemble::exact(env.as_finite().unwrap().clone())
    } else {
        fit_ensemble(&combined, &env, &cfg.dynamics, seed ^ 0x51).unwrap()
    };
    println!("dynamics fit: {:?}", t.elapsed());
    let env_ref = &env;
    let true_cost = move |s: &[f64], a: &[f64]| env_ref.true_cost(s, a);
    let t = Instant::now();
    let mut st = ComboState::new(&env, &cfg.combo, seed).unwrap();
    for _ in 0..combo_iters {
        st.step(&env, &combined, &true_cost, &dynamics, &cfg.combo).unwrap();
    }
    println!("combo-true: norm={:.1} xnorm={:.1} ({:?})", norm(eval(&st.policy)), xnorm(&st.policy), t.elapsed());

    // ORIL
    let cost_steps = getf("COST_STEPS", 1_500.0) as usize;
    let cost_batch = getf("COST_BATCH", 128.0) as usize;
    let t = Instant::now();
    let oril_cost = train_cost_oril(
        &env, &expert, &exploratory, 0.5, vec![32, 32], cost_steps, cost_batch, 1e-3, seed,
    )
    .unwrap();
    let cost_ref = &oril_cost;
    let oril_fn = move |s: &[f64], a: &[f64]| cost_ref.value(env_ref, s, a).unwrap_or(0.5);
    let mut st = ComboState::new(&env, &cfg.combo, seed).unwrap();
    for _ in 0..combo_iters {
        st.step(&env, &combined, &oril_fn, &dynamics, &cfg.combo).unwrap();
    }
    println!("oril: norm={:.1} xnorm={:.1} ({:?})", norm(eval(&st.policy)), xnorm(&st.policy), t.elapsed());

    // TGR
    let t = Instant::now();
    let tgr_cost = train_cost_tgr(
        &env, &expert, &exploratory, 5, vec![32, 32], cost_steps, cost_batch, 1e-3, seed,
    )
    .unwrap();
    let cost_ref = &tgr_cost;
    let tgr_fn = move |s: &[f64], a: &[f64]| cost_ref.value(env_ref, s, a).unwrap_or(0.5);
    let mut st = ComboState::new(&env, &cfg.combo, seed).unwrap();
    for _ in 0..combo_iters {
        st.step(&env, &combined, &tgr_fn, &dynamics, &cfg.combo).unwrap();
    }
    println!("tgr: norm={:.1} xnorm={:.1} ({:?})", norm(eval(&st.policy)), xnorm(&st.policy), t.elapsed());

    // CAMERON
    let t = Instant::now();
    cfg.iterations = getf("CAM_ITERS", cfg.iterations as f64) as usize;
    cfg.eval_every = getf("CAM_EVERY", cfg.eval_every as f64) as usize;
    cfg.ac_updates = getf("CAM_AC", cfg.ac_updates as f64) as usize;
    cfg.idle_updates = getf("CAM_IDLE", cfg.idle_updates as f64) as usize;
    cfg.disc_updates = getf("CAM_DISC", cfg.disc_updates as f64) as usize;
    cfg.cost_lr = getf("COST_LR", cfg.cost_lr);
    cfg.eval_episodes = getf("EVAL_EP", cfg.eval_episodes as f64) as usize;
    let res = cameron_run(&env, &expert, &exploratory, &cfg, seed).unwrap();
    for m in &res.metrics {
        if let Some(r) = m.eval_return {
            println!(
                "  iter {:3} cost_obj {:7.3} eval {:6.2} norm {:6.1}",
                m.iteration,
                m.cost_objective,
                r,
                norm(r)
            );
        }
    }
    println!(
        "cameron: norm={:.1} best={:.1} xnorm={:.1} xbest={:.1} ({:?})",
        norm(eval(&res.policy)),
        norm(eval(&res.best_policy)),
        xnorm(&res.policy),
        xnorm(&res.best_policy),
        t.elapsed()
    );
    if env_name == "chain5" {
        let m = env.as_finite().unwrap();
        println!("learned cost / true cost:");
        for s in 0..m.n_states {
            let mut line = format!("  s{s}:");
            for a in 0..m.n_actions {
                let c = res.cost.value(&env, &[s as f64], &[a as f64]).unwrap();
                line += &format!("  {:.2}/{:.2}", c, m.cost[s][a]);
            }
            println!("{line}");
        }
    }
}
