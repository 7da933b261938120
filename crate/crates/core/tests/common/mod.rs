//! Shared environment builders for the integration tests.
#![allow(dead_code)] // each test binary uses a different subset

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsflab::mdp::{
    check_ergodicity, policy_transition, stationary_distribution, ErgodicityVerdict, Mdp, Policy,
    StateActionFn, StateActionWeights,
};

pub fn weights_for(mdp: &Mdp, pi: &Policy) -> StateActionWeights {
    let p_pi = policy_transition(mdp, pi).unwrap();
    assert_eq!(check_ergodicity(&p_pi), ErgodicityVerdict::Ergodic);
    stationary_distribution(&p_pi, mdp.num_actions(), 1e-13, 1_000_000).unwrap()
}

/// Fully-supported random stochastic MDP with a uniform reference policy.
pub fn random_stochastic(
    n: usize,
    m: usize,
    gamma: f64,
    seed: u64,
) -> (Mdp, Policy, StateActionWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nm = n * m;
    let mut t = DMatrix::zeros(nm, n);
    for i in 0..nm {
        let mut row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
        for (j, &p) in row.iter().enumerate() {
            t[(i, j)] = p;
        }
    }
    let mdp = Mdp::new(n, m, t, gamma).unwrap();
    let pi = Policy::uniform(n, m);
    let w = weights_for(&mdp, &pi);
    (mdp, pi, w)
}

/// Deterministic, ergodic, non-reversible directed cycle with `advance`
/// and `stay` actions.
pub fn directed_cycle(n: usize, gamma: f64) -> (Mdp, Policy, StateActionWeights) {
    let m = 2;
    let mut t = DMatrix::zeros(n * m, n);
    for s in 0..n {
        t[(s * m, (s + 1) % n)] = 1.0;
        t[(s * m + 1, s)] = 1.0;
    }
    let mdp = Mdp::new(n, m, t, gamma).unwrap();
    let pi = Policy::uniform(n, m);
    let w = weights_for(&mdp, &pi);
    (mdp, pi, w)
}

/// Random deterministic MDP (each state-action jumps to a random state),
/// reseeded until the uniform-policy chain is ergodic.
pub fn random_deterministic(
    n: usize,
    m: usize,
    gamma: f64,
    seed: u64,
) -> (Mdp, Policy, StateActionWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let mut t = DMatrix::zeros(n * m, n);
        for i in 0..n * m {
            t[(i, rng.random_range(0..n))] = 1.0;
        }
        let mdp = Mdp::new(n, m, t, gamma).unwrap();
        let pi = Policy::uniform(n, m);
        let p_pi = policy_transition(&mdp, &pi).unwrap();
        if check_ergodicity(&p_pi) == ErgodicityVerdict::Ergodic {
            let w = stationary_distribution(&p_pi, m, 1e-13, 1_000_000).unwrap();
            return (mdp, pi, w);
        }
    }
    panic!("no ergodic deterministic MDP found for n={n}, m={m}, seed={seed}");
}

/// Reversible birth-death state chain lifted to an MDP with two identical
/// actions; the induced state-action chain satisfies detailed balance.
pub fn reversible_chain(n: usize, gamma: f64) -> (Mdp, Policy, StateActionWeights) {
    let m = 2;
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let up = if i + 1 < n { 0.3 } else { 0.0 };
        let down = if i > 0 { 0.2 } else { 0.0 };
        if i + 1 < n {
            k[(i, i + 1)] = up;
        }
        if i > 0 {
            k[(i, i - 1)] = down;
        }
        k[(i, i)] = 1.0 - up - down;
    }
    let mut t = DMatrix::zeros(n * m, n);
    for s in 0..n {
        for a in 0..m {
            for s2 in 0..n {
                t[(s * m + a, s2)] = k[(s, s2)];
            }
        }
    }
    let mdp = Mdp::new(n, m, t, gamma).unwrap();
    let pi = Policy::uniform(n, m);
    let w = weights_for(&mdp, &pi);
    (mdp, pi, w)
}

/// Softmax policy with random logits, floored away from zero.
pub fn softmax_policy(n: usize, m: usize, floor: f64, rng: &mut ChaCha8Rng) -> Policy {
    let mut probs = DMatrix::zeros(n, m);
    for s in 0..n {
        let logits: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for a in 0..m {
            let e = (logits[a] - top).exp();
            probs[(s, a)] = e;
            total += e;
        }
        for a in 0..m {
            probs[(s, a)] = (1.0 - floor) * probs[(s, a)] / total + floor / m as f64;
        }
    }
    Policy::new(probs).unwrap()
}

pub fn random_fn(len: usize, rng: &mut ChaCha8Rng) -> StateActionFn {
    StateActionFn::from_fn(len, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}
