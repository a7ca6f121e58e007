//! Exact quantities on finite MDPs, computed with linear solves and
//! cross-checked against brute-force power series in the tests. Everything
//! downstream (occupancy learners, critics, cost updates) is verified against
//! this module.
//!
//! Conventions: a joint index x = s * n_actions + a ranges over state-action
//! pairs. Occupancy tables are indexed `[conditioning state][x]`. The
//! γ-discounted occupancy ρ(x|s₀) = Σ_t γ^t P_t(x|s₀) is kept unnormalised,
//! so its mass is 1/(1−γ).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mdp::{FiniteMdp, Policy, TimeWeighting};

pub type Table = Vec<Vec<f64>>;

fn tabular_rows<'a>(policy: &'a Policy, mdp: &FiniteMdp) -> Result<&'a Vec<Vec<f64>>> {
    let rows = policy.as_tabular().ok_or_else(|| {
        Error::InvalidParameter("exact oracles require a tabular policy".into())
    })?;
    if rows.len() != mdp.n_states || rows.iter().any(|r| r.len() != mdp.n_actions) {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states,
            got: rows.len(),
        });
    }
    Ok(rows)
}

fn check_discount(name: &str, v: f64) -> Result<()> {
    if !(0.0..1.0).contains(&v) {
        return Err(Error::InvalidParameter(format!("{name} = {v} not in [0,1)")));
    }
    Ok(())
}

/// Joint transition matrix P[(s,a) -> (s',a')] = P(s'|s,a) π(a'|s').
pub fn joint_transition(mdp: &FiniteMdp, pi: &[Vec<f64>]) -> DMatrix<f64> {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let n = ns * na;
    DMatrix::from_fn(n, n, |x, x2| {
        let (s, a) = (x / na, x % na);
        let (s2, a2) = (x2 / na, x2 % na);
        mdp.transition[s][a][s2] * pi[s2][a2]
    })
}

/// Initial joint distribution conditioned on s₀: P₀(x|s₀) = 1{s=s₀} π(a|s₀).
pub fn initial_joint(mdp: &FiniteMdp, pi: &[Vec<f64>], s0: usize) -> Vec<f64> {
    let mut v = vec![0.0; mdp.n_states * mdp.n_actions];
    for a in 0..mdp.n_actions {
        v[s0 * mdp.n_actions + a] = pi[s0][a];
    }
    v
}

/// γ-discounted occupancy ρ(x|s₀) for every conditioning state, by solving
/// (I − γ Pᵀ) ρ = P₀ column-wise.
pub fn exact_occupancy(mdp: &FiniteMdp, policy: &Policy, gamma: f64) -> Result<Table> {
    check_discount("gamma", gamma)?;
    let pi = tabular_rows(policy, mdp)?;
    let n = mdp.n_states * mdp.n_actions;
    let p = joint_transition(mdp, pi);
    let a = DMatrix::identity(n, n) - p.transpose() * gamma;
    let rhs = DMatrix::from_fn(n, mdp.n_states, |x, s0| initial_joint(mdp, pi, s0)[x]);
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("occupancy resolvent solve failed".into()))?;
    Ok((0..mdp.n_states)
        .map(|s0| (0..n).map(|x| sol[(x, s0)]).collect())
        .collect())
}

/// Brute-force truncated power series for ρ; cross-checks the linear solve.
pub fn exact_occupancy_series(mdp: &FiniteMdp, policy: &Policy, gamma: f64) -> Result<Table> {
    check_discount("gamma", gamma)?;
    let pi = tabular_rows(policy, mdp)?;
    let n = mdp.n_states * mdp.n_actions;
    let p_t = joint_transition(mdp, pi).transpose();
    let horizon = series_horizon(gamma);
    let mut out = Vec::with_capacity(mdp.n_states);
    for s0 in 0..mdp.n_states {
        let mut v = nalgebra::DVector::from_vec(initial_joint(mdp, pi, s0));
        let mut acc = vec![0.0; n];
        let mut disc = 1.0;
        for _ in 0..=horizon {
            for x in 0..n {
                acc[x] += disc * v[x];
            }
            disc *= gamma;
            v = &p_t * v;
        }
        out.push(acc);
    }
    Ok(out)
}

fn series_horizon(discount: f64) -> usize {
    if discount == 0.0 {
        return 0;
    }
    ((1e-12f64.ln() / discount.ln()).ceil() as usize).max(1)
}

/// Doubly-discounted measure μ(x₊|s₀) = Σ_{t,k} γ^t δ^k P_{t+k}(x₊|s₀),
/// computed as the composition Σ_x ρ^γ(x|s₀) ρ^δ(x₊|s_x). Mass is
/// 1/((1−γ)(1−δ)).
pub fn exact_mu(mdp: &FiniteMdp, policy: &Policy, gamma: f64, delta: f64) -> Result<Table> {
    check_discount("delta", delta)?;
    let rho_g = exact_occupancy(mdp, policy, gamma)?;
    let rho_d = exact_occupancy(mdp, policy, delta)?;
    let na = mdp.n_actions;
    let n = mdp.n_states * na;
    Ok((0..mdp.n_states)
        .map(|s0| {
            let mut mu = vec![0.0; n];
            for (x, &w) in rho_g[s0].iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let s = x / na;
                for (xp, m) in mu.iter_mut().enumerate() {
                    *m += w * rho_d[s][xp];
                }
            }
            mu
        })
        .collect())
}

/// Double power series for μ, folded into a single series over m = t + k with
/// weight Σ_{t+k=m} γ^t δ^k.
pub fn exact_mu_series(mdp: &FiniteMdp, policy: &Policy, gamma: f64, delta: f64) -> Result<Table> {
    check_discount("gamma", gamma)?;
    check_discount("delta", delta)?;
    let pi = tabular_rows(policy, mdp)?;
    let n = mdp.n_states * mdp.n_actions;
    let p_t = joint_transition(mdp, pi).transpose();
    let horizon = 2 * series_horizon(gamma.max(delta)) + 1;
    let weight = |m: usize| -> f64 {
        if (gamma - delta).abs() < 1e-12 {
            (m as f64 + 1.0) * gamma.powi(m as i32)
        } else {
            (gamma.powi(m as i32 + 1) - delta.powi(m as i32 + 1)) / (gamma - delta)
        }
    };
    let mut out = Vec::with_capacity(mdp.n_states);
    for s0 in 0..mdp.n_states {
        let mut v = nalgebra::DVector::from_vec(initial_joint(mdp, pi, s0));
        let mut acc = vec![0.0; n];
        for m in 0..=horizon {
            let w = weight(m);
            for x in 0..n {
                acc[x] += w * v[x];
            }
            v = &p_t * v;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Q_π^δ(s,a) = Σ_t δ^t E[c(s_t,a_t) | s_0=s, a_0=a], without any entropy
/// term, via the joint resolvent (I − δP) Q = c.
pub fn exact_q_delta(
    mdp: &FiniteMdp,
    policy: &Policy,
    cost: &[Vec<f64>],
    delta: f64,
) -> Result<Table> {
    check_discount("delta", delta)?;
    let pi = tabular_rows(policy, mdp)?;
    let na = mdp.n_actions;
    let n = mdp.n_states * na;
    let p = joint_transition(mdp, pi);
    let a = DMatrix::identity(n, n) - p * delta;
    let c = nalgebra::DVector::from_fn(n, |x, _| cost[x / na][x % na]);
    let q = a
        .lu()
        .solve(&c)
        .ok_or_else(|| Error::Numerical("critic resolvent solve failed".into()))?;
    Ok((0..mdp.n_states)
        .map(|s| (0..na).map(|a| q[s * na + a]).collect())
        .collect())
}

/// Brute-force truncated series for Q_π^δ.
pub fn exact_q_delta_series(
    mdp: &FiniteMdp,
    policy: &Policy,
    cost: &[Vec<f64>],
    delta: f64,
    horizon: usize,
) -> Result<Table> {
    check_discount("delta", delta)?;
    let pi = tabular_rows(policy, mdp)?;
    let na = mdp.n_actions;
    let n = mdp.n_states * na;
    let p = joint_transition(mdp, pi);
    let c = nalgebra::DVector::from_fn(n, |x, _| cost[x / na][x % na]);
    let mut q = nalgebra::DVector::zeros(n);
    let mut v = c.clone();
    let mut disc = 1.0;
    for _ in 0..=horizon {
        q += &v * disc;
        disc *= delta;
        v = &p * v;
    }
    Ok((0..mdp.n_states)
        .map(|s| (0..na).map(|a| q[s * na + a]).collect())
        .collect())
}

/// η-discounted future-state distribution P^η(x₊|s) = Σ_t η(t) P_t(x₊|s),
/// normalised (mass 1 per conditioning state).
pub fn eta_occupancy(mdp: &FiniteMdp, policy: &Policy, weighting: TimeWeighting) -> Result<Table> {
    weighting.validate()?;
    let pi = tabular_rows(policy, mdp)?;
    match weighting {
        TimeWeighting::Dirac0 => Ok((0..mdp.n_states)
            .map(|s| initial_joint(mdp, pi, s))
            .collect()),
        TimeWeighting::Geometric { delta } => {
            let rho = exact_occupancy(mdp, policy, delta)?;
            Ok(rho
                .into_iter()
                .map(|row| row.into_iter().map(|v| v * (1.0 - delta)).collect())
                .collect())
        }
    }
}

/// Entropy-regularised loss L^η(π,c): the expected re-weighted future cost
/// plus log-policy term,
/// Σ_{s₀} p₀ Σ_x ρ^γ(x|s₀) Σ_{x₊} P^η(x₊|s_x) [c(x₊) + log π(a₊|s₊)].
/// With a Dirac-at-0 weighting this is exactly the classical regularised
/// discounted loss L(π,c).
pub fn exact_regularized_loss(
    mdp: &FiniteMdp,
    policy: &Policy,
    cost: &[Vec<f64>],
    gamma: f64,
    weighting: TimeWeighting,
) -> Result<f64> {
    let pi = tabular_rows(policy, mdp)?;
    let rho = exact_occupancy(mdp, policy, gamma)?;
    let eta = eta_occupancy(mdp, policy, weighting)?;
    let na = mdp.n_actions;
    // inner(s) = E_{x₊ ~ P^η(·|s)}[c + log π], skipping zero-probability terms.
    let inner: Vec<f64> = (0..mdp.n_states)
        .map(|s| {
            eta[s]
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(xp, &p)| {
                    let (sp, ap) = (xp / na, xp % na);
                    p * (cost[sp][ap] + pi[sp][ap].ln())
                })
                .sum()
        })
        .collect();
    let mut total = 0.0;
    for (s0, &p0) in mdp.p0.iter().enumerate() {
        if p0 == 0.0 {
            continue;
        }
        let mut v = 0.0;
        for (x, &w) in rho[s0].iter().enumerate() {
            v += w * inner[x / na];
        }
        total += p0 * v;
    }
    Ok(total)
}

/// Expected discounted cumulative cost of a policy (no entropy term),
/// Σ_{s₀} p₀ Σ_x ρ^γ(x|s₀) c(x).
pub fn exact_policy_return(
    mdp: &FiniteMdp,
    policy: &Policy,
    cost: &[Vec<f64>],
    gamma: f64,
) -> Result<f64> {
    let rho = exact_occupancy(mdp, policy, gamma)?;
    let na = mdp.n_actions;
    let mut total = 0.0;
    for (s0, &p0) in mdp.p0.iter().enumerate() {
        for (x, &w) in rho[s0].iter().enumerate() {
            total += p0 * w * cost[x / na][x % na];
        }
    }
    Ok(total)
}

/// Cost-weighted divergence d_c^{γ,δ}(π_A‖π_B)(s₀) = Σ_{x₊} c(x₊)
/// (μ_A − μ_B)(x₊|s₀), one value per conditioning state.
pub fn exact_divergence(
    mdp: &FiniteMdp,
    policy_a: &Policy,
    policy_b: &Policy,
    cost: &[Vec<f64>],
    gamma: f64,
    delta: f64,
) -> Result<Vec<f64>> {
    let mu_a = exact_mu(mdp, policy_a, gamma, delta)?;
    let mu_b = exact_mu(mdp, policy_b, gamma, delta)?;
    let na = mdp.n_actions;
    Ok((0..mdp.n_states)
        .map(|s0| {
            mu_a[s0]
                .iter()
                .zip(mu_b[s0].iter())
                .enumerate()
                .map(|(x, (a, b))| cost[x / na][x % na] * (a - b))
                .sum()
        })
        .collect())
}

/// Closed-form classifier C*(x|s₀) = ρ(x|s₀) / (ρ(x|s₀) + P_D(x)) built from
/// the exact (unnormalised) occupancy, so that C*/(1−C*) = ρ/P_D.
///
/// `data_dist[s][a]` is the state-action probability table of the replay
/// data; it must be positive wherever ρ is.
pub fn optimal_classifier(
    mdp: &FiniteMdp,
    policy: &Policy,
    gamma: f64,
    data_dist: &[Vec<f64>],
) -> Result<Table> {
    let rho = exact_occupancy(mdp, policy, gamma)?;
    let na = mdp.n_actions;
    let mut out = Vec::with_capacity(mdp.n_states);
    for (s0, row) in rho.iter().enumerate() {
        let mut c = vec![0.0; row.len()];
        for (x, &r) in row.iter().enumerate() {
            let pd = data_dist[x / na][x % na];
            if pd <= 0.0 && r > 1e-12 {
                return Err(Error::UndefinedRatio(format!(
                    "(s={}, a={}) conditioned on s0={s0}",
                    x / na,
                    x % na
                )));
            }
            c[x] = if r <= 0.0 { 0.0 } else { r / (r + pd) };
        }
        out.push(c);
    }
    Ok(out)
}

/// Recovers the occupancy from a classifier table: ρ = P_D · C/(1−C).
pub fn ratio_from_classifier(classifier: &[Vec<f64>], data_dist: &[Vec<f64>], na: usize) -> Table {
    classifier
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(x, &c)| data_dist[x / na][x % na] * c / (1.0 - c))
                .collect()
        })
        .collect()
}

/// Shifted normalised occupancy q(x|s₀) = (1−γ) Σ_t γ^t P_{t+1}(x|s₀): the
/// distribution of the pair one step after a Geometric(γ) stopping time. It
/// has mass 1 and relates to the occupancy by ρ = P₀ + γ q / (1−γ).
pub fn shifted_normalized_occupancy(
    mdp: &FiniteMdp,
    policy: &Policy,
    gamma: f64,
) -> Result<Table> {
    let pi = tabular_rows(policy, mdp)?;
    let kernel = |s0: usize, s2: usize| -> f64 {
        (0..mdp.n_actions)
            .map(|a| pi[s0][a] * mdp.transition[s0][a][s2])
            .sum()
    };
    shifted_occupancy_for_kernel(mdp, pi, gamma, kernel)
}

fn shifted_occupancy_for_kernel(
    mdp: &FiniteMdp,
    pi: &[Vec<f64>],
    gamma: f64,
    kernel: impl Fn(usize, usize) -> f64,
) -> Result<Table> {
    check_discount("gamma", gamma)?;
    let ns = mdp.n_states;
    let na = mdp.n_actions;
    let k = DMatrix::from_fn(ns, ns, |s0, s2| kernel(s0, s2));
    // One-step pair distribution P₁(x|s₀) = K(s₀, s_x) π(a_x|s_x).
    let p1 = DMatrix::from_fn(ns, ns * na, |s0, x| k[(s0, x / na)] * pi[x / na][x % na]);
    // (I − γK) q = (1−γ) P₁, solved for all joint columns at once.
    let a = DMatrix::identity(ns, ns) - &k * gamma;
    let q = a
        .lu()
        .solve(&(p1 * (1.0 - gamma)))
        .ok_or_else(|| Error::Numerical("shifted occupancy solve failed".into()))?;
    Ok((0..ns)
        .map(|s0| (0..ns * na).map(|x| q[(s0, x)]).collect())
        .collect())
}

/// The exact stationary point of the γ-scaled importance-weighted classifier
/// loss under a given replay distribution.
///
/// The loss reweights the conditioning action a_t ~ P_D(·|s_t) by π(a_t|s_t),
/// so its stationary classifier satisfies C/(1−C) · P_D(x) = u(x|s₀), where u
/// is the shifted occupancy of the kernel K(s'|s₀) ∝ Σ_a P_D(a|s₀) π(a|s₀)
/// P(s'|s₀,a). When the replay actions are uniform this reduces to
/// [`shifted_normalized_occupancy`].
pub fn classifier_loss_stationary(
    mdp: &FiniteMdp,
    policy: &Policy,
    gamma: f64,
    data_dist: &[Vec<f64>],
) -> Result<Table> {
    let pi = tabular_rows(policy, mdp)?;
    let ns = mdp.n_states;
    let na = mdp.n_actions;
    // ω(a|s₀) ∝ P_D(a|s₀) π(a|s₀).
    let mut omega = vec![vec![0.0; na]; ns];
    for s in 0..ns {
        let z: f64 = (0..na).map(|a| data_dist[s][a] * pi[s][a]).sum();
        if z <= 0.0 {
            return Err(Error::Validation(format!(
                "conditioning state {s} has no replay support under the policy"
            )));
        }
        for a in 0..na {
            omega[s][a] = data_dist[s][a] * pi[s][a] / z;
        }
    }
    let u = shifted_occupancy_for_kernel(mdp, pi, gamma, |s0, s2| {
        (0..na)
            .map(|a| omega[s0][a] * mdp.transition[s0][a][s2])
            .sum()
    })?;
    let mut out = Vec::with_capacity(ns);
    for (s0, row) in u.iter().enumerate() {
        let mut c = vec![0.0; row.len()];
        for (x, &ux) in row.iter().enumerate() {
            let pd = data_dist[x / na][x % na];
            if pd <= 0.0 && ux > 1e-12 {
                return Err(Error::UndefinedRatio(format!(
                    "(s={}, a={}) conditioned on s0={s0}",
                    x / na,
                    x % na
                )));
            }
            c[x] = if ux <= 0.0 { 0.0 } else { ux / (ux + pd) };
        }
        out.push(c);
    }
    Ok(out)
}

/// Cost penalisation kernel: g(x) = −x − log(1 − eˣ) for x < 0, +∞ otherwise.
pub fn psi_g(x: f64) -> f64 {
    if x < 0.0 {
        -x - (-x.exp()).ln_1p()
    } else {
        f64::INFINITY
    }
}
