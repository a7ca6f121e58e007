use cameron::idle::{idle_train, IdleConfig};
use cameron::mdp::{builtin_env, generate_dataset, value_iteration, Policy, Quality};
use cameron::oracle::shifted_normalized_occupancy;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let getf = |k: &str, d: f64| std::env::var(k).ok().and_then(|v| v.parse().ok()).unwrap_or(d);
    let env = builtin_env("chain5").unwrap();
    let m = env.as_finite().unwrap().clone();
    let dataset = generate_dataset(&env, Quality::Random, 60, 5).unwrap();
    let (_, greedy) = value_iteration(&m);
    let greedy = greedy.as_tabular().unwrap().clone();
    let uniform = 1.0 / m.n_actions as f64;
    let eps = 0.3;
    let policy = Policy::Tabular(
        greedy.iter().map(|row| row.iter().map(|p| (1.0 - eps) * p + eps * uniform).collect()).collect(),
    );
    let gamma = getf("GAMMA", 0.5);
    let cfg = IdleConfig {
        gamma,
        iterations: getf("ITERS", 6000.0) as usize,
        hidden_e: vec![],
        hidden_g: vec![16],
        lr: getf("LR", 3e-3),
        lr_g: Some(getf("LRG", 3e-4)),
        lambda: getf("LAMBDA", 0.1),
        ..IdleConfig::default()
    };
    let (e, g) = idle_train(&dataset, &env, &policy, &cfg, 31).unwrap();
    let q = shifted_normalized_occupancy(&m, &policy, gamma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut hist = vec![0.0; m.n_states * m.n_actions];
    let n = 4000;
    for _ in 0..n {
        let (s, a) = g.sample(&env, &[0.0], &mut rng).unwrap();
        hist[s[0] as usize * m.n_actions + a[0] as usize] += 1.0 / n as f64;
    }
    println!("x: gen vs q_hat (cond s0=0), E value:");
    for x in 0..m.n_states * m.n_actions {
        let (s, a) = (x / m.n_actions, x % m.n_actions);
        let ev = e.value(&env, &[s as f64], &[a as f64], &[0.0]).unwrap();
        println!("  s{s}a{a}: {:.3} vs {:.3}   E={:.3}", hist[x], q[0][x], ev);
    }
}
