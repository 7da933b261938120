//! Property-based invariants over randomized MDPs, policies, and
//! functions. Inputs are generated from seeds so shrinking stays
//! well-behaved.

mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsflab::geometry::{l2rho_inner, orthonormalize, Provenance, RhoOperator};
use rsflab::mdp::{
    policy_transition, q_function, stationary_distribution, value_and_advantage, Mdp, Policy,
    StateActionFn,
};
use rsflab::rsf::boltzmann_policy;

fn build_random_mdp(n: usize, m: usize, gamma: f64, seed: u64) -> (Mdp, Policy) {
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
    // softmax-like strictly positive policy
    let mut probs = DMatrix::zeros(n, m);
    for s in 0..n {
        let mut total = 0.0;
        for a in 0..m {
            let v: f64 = rng.random::<f64>() + 0.05;
            probs[(s, a)] = v;
            total += v;
        }
        for a in 0..m {
            probs[(s, a)] /= total;
        }
    }
    (mdp, Policy::new(probs).unwrap())
}

fn random_vector(len: usize, seed: u64) -> StateActionFn {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StateActionFn::from_fn(len, |_, _| rng.random::<f64>() * 4.0 - 2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn induced_chain_rows_are_stochastic(
        n in 2usize..6, m in 1usize..4, seed: u64, gamma in 0.0f64..0.99
    ) {
        let (mdp, pi) = build_random_mdp(n, m, gamma, seed);
        let p = policy_transition(&mdp, &pi).unwrap();
        for i in 0..n * m {
            let row_sum: f64 = (0..n * m).map(|j| p[(i, j)]).sum();
            prop_assert!((row_sum - 1.0).abs() <= 1e-12);
            prop_assert!((0..n * m).all(|j| p[(i, j)] >= 0.0));
        }
    }

    #[test]
    fn bellman_residual_bound_holds(
        n in 2usize..6, m in 1usize..4, seed: u64, gamma in 0.0f64..0.99
    ) {
        let (mdp, pi) = build_random_mdp(n, m, gamma, seed);
        let r = random_vector(n * m, seed.wrapping_add(1));
        let q = q_function(&mdp, &pi, &r).unwrap();
        let p = policy_transition(&mdp, &pi).unwrap();
        let residual = (&q - &r - gamma * (&p * &q)).amax();
        prop_assert!(residual <= 1e-10 * r.amax().max(1.0));
    }

    #[test]
    fn advantage_has_zero_policy_mean(
        n in 2usize..6, m in 1usize..4, seed: u64
    ) {
        let (_, pi) = build_random_mdp(n, m, 0.9, seed);
        let q = random_vector(n * m, seed.wrapping_add(2));
        let (_, adv) = value_and_advantage(&pi, &q);
        for s in 0..n {
            let mean: f64 = (0..m).map(|a| pi.prob(s, a) * adv[s * m + a]).sum();
            prop_assert!(mean.abs() <= 1e-12);
        }
    }

    #[test]
    fn adjoint_involution_and_pairing(
        n in 2usize..5, m in 1usize..3, seed: u64
    ) {
        let (mdp, pi) = build_random_mdp(n, m, 0.9, seed);
        let p_pi = policy_transition(&mdp, &pi).unwrap();
        if rsflab::mdp::check_ergodicity(&p_pi) != rsflab::mdp::ErgodicityVerdict::Ergodic {
            return Ok(());
        }
        let w = stationary_distribution(&p_pi, m, 1e-13, 1_000_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(3));
        let mat = DMatrix::from_fn(n * m, n * m, |_, _| rng.random::<f64>() - 0.5);
        let op = RhoOperator::new(mat.clone(), w.clone()).unwrap();
        let adj = op.adjoint();
        prop_assert!((adj.adjoint().matrix - &mat).amax() <= 1e-12 * mat.amax().max(1.0));
        for k in 0..5 {
            let x = random_vector(n * m, seed.wrapping_add(10 + k));
            let y = random_vector(n * m, seed.wrapping_add(20 + k));
            let lhs = l2rho_inner(&x, &op.apply(&y), &w);
            let rhs = l2rho_inner(&adj.apply(&x), &y, &w);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn boltzmann_rows_sum_and_shift_invariance(
        n in 2usize..6, m in 2usize..4, seed: u64, t in 0.5f64..100.0
    ) {
        let (_, pi0) = build_random_mdp(n, m, 0.9, seed);
        let f = random_vector(n * m, seed.wrapping_add(4));
        let tilted = boltzmann_policy(&pi0, &f, t).unwrap();
        for s in 0..n {
            let sum: f64 = (0..m).map(|a| tilted.prob(s, a)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(5));
        let per_state: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let shift = StateActionFn::from_fn(n * m, |i, _| per_state[i / m]);
        let shifted = boltzmann_policy(&pi0, &(&f + shift), t).unwrap();
        prop_assert!((tilted.probs() - shifted.probs()).amax() <= 1e-13);
    }

    #[test]
    fn orthonormalized_gram_is_identity(
        n in 2usize..5, m in 1usize..3, d in 1usize..4, seed: u64
    ) {
        let (mdp, pi) = build_random_mdp(n, m, 0.9, seed);
        let d = d.min(n * m);
        let p_pi = policy_transition(&mdp, &pi).unwrap();
        if rsflab::mdp::check_ergodicity(&p_pi) != rsflab::mdp::ErgodicityVerdict::Ergodic {
            return Ok(());
        }
        let w = stationary_distribution(&p_pi, m, 1e-13, 1_000_000).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(6));
        let cols = DMatrix::from_fn(n * m, d, |_, _| rng.random::<f64>() - 0.5);
        match orthonormalize(&cols, &w, Provenance::Random) {
            Ok(fs) => {
                let gram = fs.gram();
                prop_assert!((gram - DMatrix::identity(d, d)).amax() <= 1e-10);
            }
            // random columns can be numerically degenerate; rejection is the
            // contract there
            Err(rsflab::Error::RankDeficient { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }
}
