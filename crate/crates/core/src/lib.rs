//! Tabular laboratory for regularized successor features.
//!
//! Everything here operates on finite MDPs at desk scale, with exact dense
//! linear algebra instead of sampling wherever a closed form exists. The
//! crate is organized around the stationary distribution ρ of a reference
//! policy: all norms, adjoints, and spectral problems live in the weighted
//! space L²(ρ) over state-actions.
//!
//! Module map:
//! - [`mdp`]: MDPs, policies, induced state-action chains, stationary
//!   distributions, exact policy evaluation.
//! - [`geometry`]: the L²(ρ) apparatus — inner products, the advantage
//!   norm, operator adjoints, the Laplacian `Id − γP`, orthonormal feature
//!   sets and projectors.
//! - [`kernel`]: the advantage kernel (the quadratic form mapping a reward
//!   to the squared norm of its advantage function) and its closed forms in
//!   deterministic environments.
//! - [`rewards`]: the three downstream reward models (Gaussian white noise,
//!   goal-reaching, scattered sparse rewards) with exact second moments.
//! - [`rsf`]: the zero-shot pipeline — successor features, task vectors,
//!   Boltzmann policies, and exact KL-regularized returns.
//! - [`features`]: feature construction — optimal features from the
//!   advantage kernel, Laplacian-eigenfunction and related baselines, and
//!   subspace comparison utilities.
//!
//! State-action indexing is `index = s * num_actions + a` everywhere.

pub mod error;
pub mod features;
pub mod geometry;
pub mod kernel;
pub mod linalg;
pub mod mdp;
pub mod rewards;
pub mod rsf;

pub use error::{Error, Result};
pub use features::{
    baseline_features, constant_projection, inverse_laplacian_features, optimal_features,
    self_adjoint_eigs, subspace_distance, trace_gain, BaselineKind, SpectralResult,
};
pub use geometry::{
    advantage_norm_sq, apply_inverse_laplacian, center, centering_projector, dirichlet_form,
    l2rho_inner, l2rho_norm_sq, laplacian, orthonormalize, projector, FeatureSet, Provenance,
    RhoOperator,
};
pub use kernel::{
    alt_form_quadratic, build_kernel, closed_form_operator, norm_identities, AdvantageKernel,
    NormIdentities,
};
pub use mdp::{
    check_ergodicity, is_deterministic, policy_transition, q_function, stationary_distribution,
    value_and_advantage, ErgodicityVerdict, Mdp, Policy, StateActionFn, StateActionWeights,
};
pub use rewards::{
    expected_quadratic, sample_reward, second_moment, RewardMetadata, RewardModel, RewardSample,
    WeightLaw,
};
pub use rsf::{
    boltzmann_policy, first_order_return_prediction, kl_penalty, q_estimate, regularized_return,
    successor_feature_map, task_vector, task_vector_dense, RegularizedReturn, SuccessorFeatures,
};
