//! The regularized successor-features pipeline and exact KL-regularized
//! policy evaluation.
//!
//! Train time: precompute the successor feature map ψ of an orthonormal
//! feature set under the reference policy. Test time: project a reward onto
//! the features (the task vector z), read off `Q̂ = ψz`, and act with the
//! Boltzmann tilt `π₀ · exp(Q̂/T)`. The quality of that policy is measured
//! by its regularized return: discounted return minus a temperature-T KL
//! penalty toward π₀ at every visited state, evaluated here exactly by
//! dense solves rather than rollouts.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{advantage_norm_sq, FeatureSet};
use crate::mdp::{policy_transition, Mdp, Policy, StateActionFn, StateActionWeights};
use crate::rewards::{RewardMetadata, RewardSample};

/// Temperatures below this are rejected; the tilt `exp(f/T)` is numerically
/// meaningless there.
pub const MIN_TEMPERATURE: f64 = 1e-6;

/// Successor features ψ of a feature set: column i solves
/// `(Id − γP_π₀) ψ_i = φ_i`, i.e. ψ_i is the Q-function of the reward φ_i.
#[derive(Debug, Clone)]
pub struct SuccessorFeatures {
    psi: DMatrix<f64>,
    covariance: DMatrix<f64>,
}

impl SuccessorFeatures {
    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    /// Feature covariance `C = φᵀ diag(ρ) φ`; the identity for orthonormal
    /// features.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.psi.ncols()
    }
}

/// Solves the vector-valued Bellman equation for all feature columns at
/// once (one LU factorization). Requires γ < 1.
pub fn successor_feature_map(
    features: &FeatureSet,
    mdp: &Mdp,
    pi0: &Policy,
) -> Result<SuccessorFeatures> {
    if mdp.gamma() >= 1.0 {
        return Err(Error::SingularSystem(
            "successor features need gamma < 1".into(),
        ));
    }
    let p_pi = policy_transition(mdp, pi0)?;
    let nm = p_pi.nrows();
    if features.columns().nrows() != nm {
        return Err(Error::ShapeMismatch(format!(
            "features have {} rows, MDP has {} state-actions",
            features.columns().nrows(),
            nm
        )));
    }
    let a = DMatrix::<f64>::identity(nm, nm) - mdp.gamma() * p_pi;
    let psi = a
        .lu()
        .solve(features.columns())
        .ok_or_else(|| Error::SingularSystem("Bellman system for successor features".into()))?;
    Ok(SuccessorFeatures {
        psi,
        covariance: features.gram(),
    })
}

/// Task vector `z`: the ρ-correlation of the reward with each feature
/// (`C = Id` for orthonormal features, so no solve is needed). Spike
/// samples use their exact support: a goal sample gives `z = φ(s*,a*)`, a
/// scattered sample the weighted sum of feature rows at its spikes.
pub fn task_vector(features: &FeatureSet, sample: &RewardSample) -> DVector<f64> {
    match &sample.metadata {
        RewardMetadata::Dense => task_vector_dense(features, &sample.reward),
        RewardMetadata::Goal { index } => features.at_index(*index),
        RewardMetadata::Scattered { atoms } => {
            let mut z = DVector::zeros(features.dim());
            for &(index, weight) in atoms {
                z += weight * features.at_index(index);
            }
            z
        }
    }
}

/// Task vector of a dense reward vector: `z_i = Σ ρ(s,a) r(s,a) φ_i(s,a)`.
pub fn task_vector_dense(features: &FeatureSet, reward: &StateActionFn) -> DVector<f64> {
    let rho = features.weights().rho();
    let weighted = StateActionFn::from_fn(reward.len(), |i, _| rho[i] * reward[i]);
    features.columns().tr_mul(&weighted)
}

/// `Q̂ = ψ z`, the zero-shot Q-estimate. Equals the Q-function of the
/// feature-projected reward.
pub fn q_estimate(sf: &SuccessorFeatures, z: &DVector<f64>) -> StateActionFn {
    &sf.psi * z
}

/// Per-state exponential tilt of the reference policy:
/// `π(a|s) ∝ π₀(a|s) exp(f(s,a)/T)`, with per-state max subtraction before
/// exponentiation. Constant shifts of `f` over the actions of a state leave
/// the result unchanged.
pub fn boltzmann_policy(pi0: &Policy, f: &StateActionFn, temperature: f64) -> Result<Policy> {
    if !(temperature.is_finite() && temperature >= MIN_TEMPERATURE) {
        return Err(Error::InvalidTemperature(temperature, MIN_TEMPERATURE));
    }
    let (n, m) = (pi0.num_states(), pi0.num_actions());
    if f.len() != n * m {
        return Err(Error::ShapeMismatch(format!(
            "f has length {}, need {}",
            f.len(),
            n * m
        )));
    }
    let mut probs = DMatrix::zeros(n, m);
    for s in 0..n {
        let top = (0..m)
            .map(|a| f[s * m + a])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for a in 0..m {
            let v = pi0.prob(s, a) * ((f[s * m + a] - top) / temperature).exp();
            probs[(s, a)] = v;
            total += v;
        }
        for a in 0..m {
            probs[(s, a)] /= total;
        }
    }
    Policy::new(probs)
}

/// Per-state penalty `K(π, s) = T · KL(π(s) ‖ π₀(s)) ≥ 0`. Errors when π
/// puts mass on an action with π₀ probability zero (infinite divergence).
pub fn kl_penalty(pi: &Policy, pi0: &Policy, temperature: f64) -> Result<DVector<f64>> {
    if pi.num_states() != pi0.num_states() || pi.num_actions() != pi0.num_actions() {
        return Err(Error::ShapeMismatch("policy shapes differ".into()));
    }
    let (n, m) = (pi.num_states(), pi.num_actions());
    let mut out = DVector::zeros(n);
    for s in 0..n {
        let mut kl = 0.0;
        for a in 0..m {
            let p = pi.prob(s, a);
            if p == 0.0 {
                continue;
            }
            let q = pi0.prob(s, a);
            if q == 0.0 {
                return Err(Error::InfinitePenalty(s));
            }
            kl += p * (p / q).ln();
        }
        out[s] = temperature * kl.max(0.0);
    }
    Ok(out)
}

/// Exact regularized return, split into its two parts.
#[derive(Debug, Clone, Copy)]
pub struct RegularizedReturn {
    /// `unpenalized − penalty`.
    pub value: f64,
    /// Expected discounted return of π for the raw reward.
    pub unpenalized: f64,
    /// Expected discounted accumulated KL penalty (≥ 0; exactly 0 at π₀).
    pub penalty: f64,
    pub temperature: f64,
}

/// Evaluates `G_r^π`: the discounted return of π from `s₀ ∼ ρ_S` for the
/// penalized reward `r̄(s,a) = r(s,a) − T·KL(π(s)‖π₀(s))`, the state-level
/// penalty replicated across that state's actions. Everything is a dense
/// solve; there is no rollout noise.
pub fn regularized_return(
    mdp: &Mdp,
    pi0: &Policy,
    pi: &Policy,
    reward: &StateActionFn,
    temperature: f64,
    w: &StateActionWeights,
) -> Result<RegularizedReturn> {
    let nm = mdp.num_state_actions();
    if reward.len() != nm {
        return Err(Error::ShapeMismatch(format!(
            "reward length {} != {}",
            reward.len(),
            nm
        )));
    }
    let m = mdp.num_actions();
    let penalty_per_state = kl_penalty(pi, pi0, temperature)?;
    let penalty_lifted = StateActionFn::from_fn(nm, |i, _| penalty_per_state[i / m]);

    let p_pi = policy_transition(mdp, pi)?;
    let lu = (DMatrix::<f64>::identity(nm, nm) - mdp.gamma() * p_pi).lu();
    let q_reward = lu
        .solve(reward)
        .ok_or_else(|| Error::SingularSystem("return evaluation".into()))?;
    let q_penalty = lu
        .solve(&penalty_lifted)
        .ok_or_else(|| Error::SingularSystem("penalty evaluation".into()))?;

    let start_value = |q: &StateActionFn| -> f64 {
        let v = pi.state_average(q);
        w.rho_s().dot(&v)
    };
    let unpenalized = start_value(&q_reward);
    let penalty = start_value(&q_penalty);
    Ok(RegularizedReturn {
        value: unpenalized - penalty,
        unpenalized,
        penalty,
        temperature,
    })
}

/// First-order prediction of the regularized return of `Bolt_{π₀}(Q̂)`:
/// `G^{π₀} + (‖Q‖²_A − ‖Q̂ − Q‖²_A) / (2T(1−γ))`, dropping the `O(1/T²)`
/// remainder.
#[allow(clippy::too_many_arguments)]
pub fn first_order_return_prediction(
    q_true: &StateActionFn,
    q_hat: &StateActionFn,
    g_pi0: f64,
    temperature: f64,
    gamma: f64,
    w: &StateActionWeights,
    pi0: &Policy,
) -> f64 {
    let err = q_hat - q_true;
    g_pi0
        + (advantage_norm_sq(q_true, w, pi0) - advantage_norm_sq(&err, w, pi0))
            / (2.0 * temperature * (1.0 - gamma))
}

/// `G_r^{π₀}`: the reference policy's own regularized return, whose penalty
/// term is exactly zero.
pub fn reference_return(
    mdp: &Mdp,
    pi0: &Policy,
    reward: &StateActionFn,
    w: &StateActionWeights,
) -> Result<f64> {
    let q = crate::mdp::q_function(mdp, pi0, reward)?;
    Ok(w.rho_s().dot(&pi0.state_average(&q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{orthonormalize, Provenance};
    use crate::mdp::{q_function, stationary_distribution};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_env(n: usize, m: usize, seed: u64, gamma: f64) -> (Mdp, Policy, StateActionWeights) {
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
        let p_pi = policy_transition(&mdp, &pi).unwrap();
        let w = stationary_distribution(&p_pi, m, 1e-13, 1_000_000).unwrap();
        (mdp, pi, w)
    }

    fn random_features(nm: usize, d: usize, w: &StateActionWeights, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols = DMatrix::from_fn(nm, d, |_, _| rng.random::<f64>() - 0.5);
        orthonormalize(&cols, w, Provenance::Random).unwrap()
    }

    #[test]
    fn successor_features_gamma_zero_is_identity() {
        let (mdp, pi, w) = random_env(3, 2, 1, 0.0);
        let phi = random_features(6, 2, &w, 2);
        let sf = successor_feature_map(&phi, &mdp, &pi).unwrap();
        assert!((sf.psi() - phi.columns()).amax() < 1e-12);
    }

    #[test]
    fn successor_features_constant_feature() {
        let (mdp, pi, w) = random_env(3, 2, 3, 0.9);
        // the constant function has unit L2(rho) norm, so it is a valid
        // one-column orthonormal set
        let ones = DMatrix::from_element(6, 1, 1.0);
        let phi = FeatureSet::new(ones, w.clone(), Provenance::Custom).unwrap();
        let sf = successor_feature_map(&phi, &mdp, &pi).unwrap();
        for i in 0..6 {
            assert_relative_eq!(sf.psi()[(i, 0)], 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn successor_features_match_neumann_series() {
        let (mdp, pi, w) = random_env(3, 2, 4, 0.8);
        let phi = random_features(6, 2, &w, 5);
        let sf = successor_feature_map(&phi, &mdp, &pi).unwrap();
        let p = policy_transition(&mdp, &pi).unwrap();
        let mut acc = phi.columns().clone();
        let mut term = phi.columns().clone();
        for _ in 0..200 {
            term = 0.8 * (&p * term);
            acc += &term;
        }
        assert!((sf.psi() - acc).amax() < 1e-8);
    }

    #[test]
    fn successor_features_bellman_residual() {
        let (mdp, pi, w) = random_env(4, 2, 6, 0.95);
        let phi = random_features(8, 3, &w, 7);
        let sf = successor_feature_map(&phi, &mdp, &pi).unwrap();
        let p = policy_transition(&mdp, &pi).unwrap();
        let residual = (sf.psi() - phi.columns() - 0.95 * (&p * sf.psi())).amax();
        assert!(residual <= 1e-9 * phi.columns().amax());
    }

    #[test]
    fn task_vector_goal_sample_reads_feature_row() {
        let (_, _, w) = random_env(3, 2, 8, 0.9);
        let phi = random_features(6, 3, &w, 9);
        let mut reward = StateActionFn::zeros(6);
        reward[4] = 1.0 / w.rho()[4];
        let sample = RewardSample {
            reward,
            metadata: RewardMetadata::Goal { index: 4 },
        };
        let z = task_vector(&phi, &sample);
        assert_eq!(z, phi.at_index(4));
    }

    #[test]
    fn task_vector_orthonormality() {
        let (_, _, w) = random_env(3, 2, 10, 0.9);
        let phi = random_features(6, 2, &w, 11);
        // r = phi_0 => z = e_0
        let z = task_vector_dense(&phi, &phi.column(0));
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-10);
        assert!(z[1].abs() < 1e-10);
        // r orthogonal to both features => z = 0
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let raw = StateActionFn::from_fn(6, |_, _| rng.random::<f64>() - 0.5);
        let z_raw = task_vector_dense(&phi, &raw);
        let projected = &raw - phi.columns() * z_raw;
        let z_perp = task_vector_dense(&phi, &projected);
        assert!(z_perp.amax() < 1e-10);
    }

    #[test]
    fn q_estimate_zero_and_full_basis() {
        let (mdp, pi, w) = random_env(3, 2, 13, 0.9);
        let phi = random_features(6, 6, &w, 14);
        let sf = successor_feature_map(&phi, &mdp, &pi).unwrap();
        assert_eq!(q_estimate(&sf, &DVector::zeros(6)), StateActionFn::zeros(6));

        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let r = StateActionFn::from_fn(6, |_, _| rng.random::<f64>() - 0.5);
        let z = task_vector_dense(&phi, &r);
        let q_hat = q_estimate(&sf, &z);
        let q = q_function(&mdp, &pi, &r).unwrap();
        assert!((q_hat - q).amax() < 1e-9);
    }

    #[test]
    fn boltzmann_identity_cases() {
        let (_, pi0, _) = random_env(3, 2, 16, 0.9);
        let zero = StateActionFn::zeros(6);
        assert_eq!(boltzmann_policy(&pi0, &zero, 10.0).unwrap(), pi0);
        // constant over actions at every state: tilt cancels
        let per_state = StateActionFn::from_fn(6, |i, _| (i / 2) as f64 * 3.0);
        let tilted = boltzmann_policy(&pi0, &per_state, 5.0).unwrap();
        assert!((tilted.probs() - pi0.probs()).amax() < 1e-15);
    }

    #[test]
    fn boltzmann_shift_invariance_and_row_sums() {
        let (_, pi0, _) = random_env(3, 2, 17, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let f = StateActionFn::from_fn(6, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let shift = StateActionFn::from_fn(6, |i, _| (i / 2) as f64 * 7.0);
        let a = boltzmann_policy(&pi0, &f, 2.0).unwrap();
        let b = boltzmann_policy(&pi0, &(&f + shift), 2.0).unwrap();
        assert!((a.probs() - b.probs()).amax() < 1e-14);
        for s in 0..3 {
            let sum: f64 = (0..2).map(|x| a.prob(s, x)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn boltzmann_rejects_tiny_temperature() {
        let (_, pi0, _) = random_env(2, 2, 19, 0.9);
        let f = StateActionFn::zeros(4);
        assert!(matches!(
            boltzmann_policy(&pi0, &f, 1e-9),
            Err(Error::InvalidTemperature(_, _))
        ));
    }

    #[test]
    fn kl_penalty_hand_computed() {
        let pi0 = Policy::uniform(1, 2);
        let pi = Policy::new(DMatrix::from_row_slice(1, 2, &[0.6, 0.4])).unwrap();
        let k = kl_penalty(&pi, &pi0, 1.0).unwrap();
        let expected = 0.6 * (1.2f64).ln() + 0.4 * (0.8f64).ln();
        assert_relative_eq!(k[0], expected, epsilon = 1e-14);
        // identical policies: exactly zero
        let k0 = kl_penalty(&pi0, &pi0, 3.0).unwrap();
        assert_eq!(k0[0], 0.0);
    }

    #[test]
    fn kl_penalty_rejects_unsupported_mass() {
        let pi0 = Policy::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let pi = Policy::new(DMatrix::from_row_slice(1, 2, &[0.5, 0.5])).unwrap();
        assert!(matches!(
            kl_penalty(&pi, &pi0, 1.0),
            Err(Error::InfinitePenalty(0))
        ));
    }

    #[test]
    fn regularized_return_at_reference_policy() {
        let (mdp, pi0, w) = random_env(3, 2, 20, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let r = StateActionFn::from_fn(6, |_, _| rng.random::<f64>() - 0.5);
        let g = regularized_return(&mdp, &pi0, &pi0, &r, 50.0, &w).unwrap();
        assert_eq!(g.penalty, 0.0);
        assert_relative_eq!(
            g.value,
            reference_return(&mdp, &pi0, &r, &w).unwrap(),
            epsilon = 1e-12
        );

        let zero = StateActionFn::zeros(6);
        let g0 = regularized_return(&mdp, &pi0, &pi0, &zero, 50.0, &w).unwrap();
        assert_eq!(g0.value, 0.0);
    }

    #[test]
    fn first_order_return_prediction_special_cases() {
        let (mdp, pi0, w) = random_env(3, 2, 22, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let r = StateActionFn::from_fn(6, |_, _| rng.random::<f64>() - 0.5);
        let q = q_function(&mdp, &pi0, &r).unwrap();
        let g0 = reference_return(&mdp, &pi0, &r, &w).unwrap();
        let t = 64.0;

        // perfect estimate: the first-order maximum
        let at_q = first_order_return_prediction(&q, &q, g0, t, 0.9, &w, &pi0);
        assert_relative_eq!(
            at_q,
            g0 + advantage_norm_sq(&q, &w, &pi0) / (2.0 * t * 0.1),
            epsilon = 1e-12
        );
        // zero estimate corresponds to pi0 itself
        let at_zero =
            first_order_return_prediction(&q, &StateActionFn::zeros(6), g0, t, 0.9, &w, &pi0);
        assert_relative_eq!(at_zero, g0, epsilon = 1e-12);
    }
}
