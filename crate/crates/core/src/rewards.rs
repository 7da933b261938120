//! The three downstream reward models — dense Gaussian rewards, single
//! goal-reaching rewards, and scattered sparse rewards — with seeded
//! samplers and exact second moments.
//!
//! All three models are tied to the stationary distribution ρ: the Gaussian
//! density is `∝ exp(−‖r‖²_{L²(ρ)}/2)` (independent coordinates with
//! variance `1/ρ(s,a)`), goal rewards place `1/ρ(s*,a*)` at a ρ-sampled
//! state-action, and scattered rewards place a Poisson number of weighted
//! ρ-scaled spikes. Spike-type samples carry their support as metadata so
//! ρ-integrals against them evaluate exactly (the `ρ·(w/ρ)` products reduce
//! to the literal weights).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{StateActionFn, StateActionWeights};

/// Distribution of the per-spike weights in the scattered model. Only the
/// mean and variance enter the closed forms, so the law is pluggable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightLaw {
    #[default]
    Normal,
    /// Uniform on `[μ − √3σ, μ + √3σ]` (same mean and variance).
    Uniform,
}

/// A downstream-task reward model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RewardModel {
    Gaussian,
    #[serde(rename = "goal")]
    GoalReaching,
    Scattered {
        /// Poisson intensity κ > 0: the expected number of spikes.
        kappa: f64,
        /// Mean μ of the spike weights.
        #[serde(rename = "mu")]
        weight_mean: f64,
        /// Variance σ² ≥ 0 of the spike weights.
        #[serde(rename = "sigma2")]
        weight_variance: f64,
        #[serde(default)]
        weight_law: WeightLaw,
    },
}

impl RewardModel {
    /// Scattered model with normal weights.
    pub fn scattered(kappa: f64, weight_mean: f64, weight_variance: f64) -> Self {
        RewardModel::Scattered {
            kappa,
            weight_mean,
            weight_variance,
            weight_law: WeightLaw::Normal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let RewardModel::Scattered {
            kappa,
            weight_variance,
            ..
        } = self
        {
            if !(kappa.is_finite() && *kappa > 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "kappa {kappa} must be positive"
                )));
            }
            if *weight_variance < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "weight variance {weight_variance} must be non-negative"
                )));
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> &'static str {
        match self {
            RewardModel::Gaussian => "gaussian",
            RewardModel::GoalReaching => "goal",
            RewardModel::Scattered { .. } => "scattered",
        }
    }
}

/// Structure of a sampled reward, kept alongside the dense vector so that
/// integrals against ρ can use the exact spike representation.
#[derive(Debug, Clone)]
pub enum RewardMetadata {
    /// Dense sample (Gaussian model).
    Dense,
    /// One spike of mass `1/ρ` at this state-action index.
    Goal { index: usize },
    /// Spikes `(index, weight)`; the dense vector holds `weight/ρ` summed
    /// over coincident indices.
    Scattered { atoms: Vec<(usize, f64)> },
}

/// One sampled reward.
#[derive(Debug, Clone)]
pub struct RewardSample {
    pub reward: StateActionFn,
    pub metadata: RewardMetadata,
}

impl RewardSample {
    /// Wraps an arbitrary dense reward vector.
    pub fn dense(reward: StateActionFn) -> Self {
        Self {
            reward,
            metadata: RewardMetadata::Dense,
        }
    }

    /// `Σ ρ(s,a) r(s,a)`, evaluated structurally for spike samples: a goal
    /// sample integrates to the literal 1, a scattered sample to the sum of
    /// its weights.
    pub fn rho_integral(&self, w: &StateActionWeights) -> f64 {
        match &self.metadata {
            RewardMetadata::Dense => w.mean(&self.reward),
            RewardMetadata::Goal { .. } => 1.0,
            RewardMetadata::Scattered { atoms } => atoms.iter().map(|&(_, wt)| wt).sum(),
        }
    }
}

fn draw_index_from_rho(w: &StateActionWeights, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let rho = w.rho();
    let mut acc = 0.0;
    for i in 0..rho.len() {
        acc += rho[i];
        if u < acc {
            return i;
        }
    }
    rho.len() - 1
}

fn draw_weight(law: WeightLaw, mean: f64, variance: f64, rng: &mut impl Rng) -> f64 {
    match law {
        WeightLaw::Normal => Normal::new(mean, variance.sqrt())
            .expect("validated variance")
            .sample(rng),
        WeightLaw::Uniform => {
            let half_width = (3.0 * variance).sqrt();
            mean + half_width * (2.0 * rng.random::<f64>() - 1.0)
        }
    }
}

/// Draws one reward from the model. All randomness comes from the caller's
/// seeded generator.
pub fn sample_reward(
    model: &RewardModel,
    w: &StateActionWeights,
    rng: &mut impl Rng,
) -> Result<RewardSample> {
    model.validate()?;
    let nm = w.len();
    match model {
        RewardModel::Gaussian => {
            let rho = w.rho();
            let reward = StateActionFn::from_fn(nm, |i, _| {
                let z: f64 = rng.sample(StandardNormal);
                z / rho[i].sqrt()
            });
            Ok(RewardSample {
                reward,
                metadata: RewardMetadata::Dense,
            })
        }
        RewardModel::GoalReaching => {
            let index = draw_index_from_rho(w, rng);
            let mut reward = StateActionFn::zeros(nm);
            reward[index] = 1.0 / w.rho()[index];
            Ok(RewardSample {
                reward,
                metadata: RewardMetadata::Goal { index },
            })
        }
        RewardModel::Scattered {
            kappa,
            weight_mean,
            weight_variance,
            weight_law,
        } => {
            let n_spikes = Poisson::new(*kappa)
                .map_err(|e| Error::InvalidDistribution(format!("poisson({kappa}): {e}")))?
                .sample(rng) as usize;
            let mut reward = StateActionFn::zeros(nm);
            let mut atoms = Vec::with_capacity(n_spikes);
            for _ in 0..n_spikes {
                let index = draw_index_from_rho(w, rng);
                let weight = draw_weight(*weight_law, *weight_mean, *weight_variance, rng);
                reward[index] += weight / w.rho()[index];
                atoms.push((index, weight));
            }
            Ok(RewardSample {
                reward,
                metadata: RewardMetadata::Scattered { atoms },
            })
        }
    }
}

/// Exact second moment `E[rrᵀ]`:
/// `diag(ρ)⁻¹` for the Gaussian and goal models, and
/// `κ(μ²+σ²) diag(ρ)⁻¹ + (κμ)² 𝟙𝟙ᵀ` for the scattered model.
pub fn second_moment(model: &RewardModel, w: &StateActionWeights) -> DMatrix<f64> {
    let nm = w.len();
    let rho = w.rho();
    match model {
        RewardModel::Gaussian | RewardModel::GoalReaching => {
            DMatrix::from_diagonal(&DVector::from_fn(nm, |i, _| 1.0 / rho[i]))
        }
        RewardModel::Scattered {
            kappa,
            weight_mean,
            weight_variance,
            ..
        } => {
            let diag_scale = kappa * (weight_mean * weight_mean + weight_variance);
            let rank_one = (kappa * weight_mean) * (kappa * weight_mean);
            DMatrix::from_fn(nm, nm, |i, j| {
                let d = if i == j { diag_scale / rho[i] } else { 0.0 };
                d + rank_one
            })
        }
    }
}

/// `E_r[rᵀ M r] = Tr(M · E[rrᵀ])` for a symmetric matrix `M`, evaluated
/// through the structured form of the second moment:
/// `Tr(M diag(ρ)⁻¹) = Σ_i M_ii/ρ_i` and `Tr(M 𝟙𝟙ᵀ) = 𝟙ᵀM𝟙`.
pub fn expected_quadratic(
    m: &DMatrix<f64>,
    model: &RewardModel,
    w: &StateActionWeights,
) -> Result<f64> {
    if m.nrows() != w.len() || m.ncols() != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "matrix is {}x{} but weights have length {}",
            m.nrows(),
            m.ncols(),
            w.len()
        )));
    }
    let asym = crate::linalg::max_diff(m, &m.transpose());
    if asym > 1e-8 * (1.0 + m.amax()) {
        return Err(Error::NotSymmetric(asym));
    }
    let rho = w.rho();
    let weighted_trace: f64 = (0..w.len()).map(|i| m[(i, i)] / rho[i]).sum();
    match model {
        RewardModel::Gaussian | RewardModel::GoalReaching => Ok(weighted_trace),
        RewardModel::Scattered {
            kappa,
            weight_mean,
            weight_variance,
            ..
        } => {
            let total: f64 = m.iter().sum();
            Ok(
                kappa * (weight_mean * weight_mean + weight_variance) * weighted_trace
                    + (kappa * weight_mean) * (kappa * weight_mean) * total,
            )
        }
    }
}
