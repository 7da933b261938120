//! Feature-family sweep: for each family and dimension, the exact expected
//! regularized gain from the trace formulas next to a Monte-Carlo estimate
//! through the full pipeline, plus the reference-policy baseline.

use std::time::Instant;

use anyhow::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsflab::features::{baseline_features, optimal_features, BaselineKind};
use rsflab::geometry::FeatureSet;
use rsflab::kernel::build_kernel;
use rsflab::rewards::{sample_reward, RewardModel};

use crate::checks::{exact_expected_gain, mc_stats, monte_carlo_gain};
use crate::env::Environment;
use crate::report::ReportRow;

/// The families compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFamily {
    Optimal,
    LaplacianEigs,
    PSymmetrized,
    Random,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 4] = [
        FeatureFamily::Optimal,
        FeatureFamily::LaplacianEigs,
        FeatureFamily::PSymmetrized,
        FeatureFamily::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FeatureFamily::Optimal => "optimal",
            FeatureFamily::LaplacianEigs => "laplacian_eigs",
            FeatureFamily::PSymmetrized => "p_symmetrized",
            FeatureFamily::Random => "random",
        }
    }
}

impl std::str::FromStr for FeatureFamily {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optimal" => Ok(FeatureFamily::Optimal),
            "laplacian_eigs" | "laplacian" => Ok(FeatureFamily::LaplacianEigs),
            "p_symmetrized" => Ok(FeatureFamily::PSymmetrized),
            "random" => Ok(FeatureFamily::Random),
            other => anyhow::bail!("unknown feature family {other:?}"),
        }
    }
}

fn build_family(
    family: FeatureFamily,
    env: &Environment,
    kernel: &rsflab::kernel::AdvantageKernel,
    d: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FeatureSet> {
    Ok(match family {
        FeatureFamily::Optimal => optimal_features(kernel, d)?,
        FeatureFamily::LaplacianEigs => baseline_features(
            BaselineKind::LaplacianEigs,
            &env.mdp,
            &env.pi0,
            &env.weights,
            d,
            rng,
        )?,
        FeatureFamily::PSymmetrized => baseline_features(
            BaselineKind::PSymmetrized,
            &env.mdp,
            &env.pi0,
            &env.weights,
            d,
            rng,
        )?,
        FeatureFamily::Random => baseline_features(
            BaselineKind::Random,
            &env.mdp,
            &env.pi0,
            &env.weights,
            d,
            rng,
        )?,
    })
}

/// Runs the sweep. `d = 0` rows report the degenerate pipeline (the
/// estimated policy is the reference policy; gain exactly zero). One extra
/// row per model reports the Monte-Carlo reference-policy return
/// `E_r[G^{π₀}]`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_features(
    env: &Environment,
    gamma: f64,
    temperature: f64,
    dims: &[usize],
    model: &RewardModel,
    n_mc: usize,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let kernel = build_kernel(&env.mdp, &env.pi0, &env.weights, gamma)?;
    let mut rows = Vec::new();

    // reference-policy baseline, one row per sweep
    {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mdp = env.mdp.with_gamma(gamma)?;
        let mut values = Vec::with_capacity(n_mc.min(2000));
        for _ in 0..n_mc.min(2000) {
            let sample = sample_reward(model, &env.weights, &mut rng)?;
            values.push(rsflab::rsf::reference_return(
                &mdp,
                &env.pi0,
                &sample.reward,
                &env.weights,
            )?);
        }
        let (mean, se) = mc_stats(&values);
        rows.push(ReportRow {
            temperature: Some(temperature),
            d: Some(0),
            model: format!("{}:baseline_pi0", model.tag()),
            exact: None,
            predicted: None,
            mc_mean: Some(mean),
            mc_se: Some(se),
            pass: true,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
            ..ReportRow::new("SWEEP", &env.label(), seed, gamma)
        });
    }

    for family in FeatureFamily::ALL {
        for &d in dims {
            let start = Instant::now();
            let mut rng =
                ChaCha8Rng::seed_from_u64(seed ^ ((d as u64) << 20) ^ family.name().len() as u64);
            let features = if d == 0 {
                FeatureSet::empty(env.weights.clone())
            } else if d >= env.num_state_actions() {
                continue;
            } else {
                build_family(family, env, &kernel, d, &mut rng)?
            };
            let exact = exact_expected_gain(&features, &kernel, model, temperature, gamma)?;
            let (mc_mean, mc_se) =
                monte_carlo_gain(env, &features, model, temperature, gamma, n_mc, &mut rng)?;
            let pass = if d == 0 {
                exact == 0.0 && mc_mean == 0.0
            } else {
                (mc_mean - exact).abs() <= 3.0 * mc_se + crate::checks::MC_ABS_FLOOR
            };
            rows.push(ReportRow {
                temperature: Some(temperature),
                d: Some(d),
                model: format!("{}:{}", model.tag(), family.name()),
                exact: Some(exact),
                predicted: Some(exact),
                mc_mean: Some(mc_mean),
                mc_se: Some(mc_se),
                pass,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                ..ReportRow::new("SWEEP", &env.label(), seed, gamma)
            });
        }
    }
    Ok(rows)
}
