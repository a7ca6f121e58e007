use cameron::eval::mmd_curve_experiment;
use cameron::idle::IdleConfig;
use cameron::mdp::{builtin_env, generate_dataset, value_iteration, Policy, Quality};

fn main() {
    let env = builtin_env("chain5").unwrap();
    let m = env.as_finite().unwrap().clone();
    let dataset = generate_dataset(&env, Quality::Random, 60, 5).unwrap();
    let (_, greedy) = value_iteration(&m);
    let greedy = greedy.as_tabular().unwrap().clone();
    let uniform = 1.0 / m.n_actions as f64;
    let getf = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let policies: Vec<Policy> = (1..=5)
        .map(|i| {
            let eps = 0.1 * i as f64;
            Policy::Tabular(
                greedy
                    .iter()
                    .map(|row| row.iter().map(|p| (1.0 - eps) * p + eps * uniform).collect())
                    .collect(),
            )
        })
        .collect();
    let cfg = IdleConfig {
        hidden_e: vec![],
        hidden_g: vec![16],
        lr: getf("LR", 1e-2),
        lr_g: Some(getf("LRG", 1e-3)),
        lambda: getf("LAMBDA", 0.3),
        gen_entropy: getf("KAPPA", 0.03),
        ..IdleConfig::default()
    };
    let iters = getf("ITERS", 6000.0) as usize;
    let t = std::time::Instant::now();
    let curves = mmd_curve_experiment(
        &env, &dataset, &policies, &[0.5, 0.9, 0.99], &[0, iters], &cfg, 200, 31,
    )
    .unwrap();
    for c in &curves {
        println!(
            "gamma={} values={:?} ratio={:.3}",
            c.gamma,
            c.values,
            c.final_over_initial()
        );
    }
    println!("elapsed {:?}", t.elapsed());
}
