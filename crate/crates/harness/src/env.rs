//! Seeded environment generators: gridworlds, directed cycles, random
//! deterministic and stochastic MDPs, and reversible chains, each paired
//! with a reference policy and its stationary distribution.

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rsflab::mdp::{
    check_ergodicity, policy_transition, stationary_distribution, ErgodicityVerdict, Mdp, Policy,
    StateActionWeights,
};

fn default_floor() -> f64 {
    1e-3
}

/// Which transition structure to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `width × height` grid, four move actions, walls clamp. `slip` is the
    /// total probability of moving in one of the three unintended
    /// directions; `slip = 0` is deterministic.
    Gridworld {
        width: usize,
        height: usize,
        slip: f64,
    },
    /// Deterministic, ergodic, non-reversible: `advance` and `stay`
    /// actions on a directed ring.
    DirectedCycle { n: usize },
    /// Every state-action jumps to one random state; reseeded until the
    /// reference chain is ergodic.
    RandomDeterministic { n: usize, m: usize },
    /// Strictly positive random rows.
    RandomStochastic { n: usize, m: usize },
    /// Birth-death state chain with two identical actions; the induced
    /// state-action chain satisfies detailed balance.
    ReversibleChain { n: usize },
}

/// How to build the reference policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Uniform,
    /// Softmax of standard-normal logits, mixed with the uniform policy at
    /// weight `floor` so every action keeps positive probability.
    SoftmaxRandomLogits {
        #[serde(default = "default_floor")]
        floor: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub generator: GeneratorKind,
    pub policy: PolicyKind,
    pub gamma: f64,
    pub seed: u64,
}

impl EnvironmentSpec {
    pub fn label(&self) -> String {
        let gen = match &self.generator {
            GeneratorKind::Gridworld {
                width,
                height,
                slip,
            } => {
                format!("gridworld{width}x{height}_slip{slip}")
            }
            GeneratorKind::DirectedCycle { n } => format!("directed_cycle{n}"),
            GeneratorKind::RandomDeterministic { n, m } => format!("random_det{n}x{m}"),
            GeneratorKind::RandomStochastic { n, m } => format!("random_stoch{n}x{m}"),
            GeneratorKind::ReversibleChain { n } => format!("reversible_chain{n}"),
        };
        let pol = match &self.policy {
            PolicyKind::Uniform => "uniform",
            PolicyKind::SoftmaxRandomLogits { .. } => "softmax",
        };
        format!("{gen}_{pol}_s{}", self.seed)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.as_ref().display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A generated environment: MDP, reference policy, its chain, and the
/// stationary weights.
#[derive(Debug, Clone)]
pub struct Environment {
    pub spec: EnvironmentSpec,
    pub mdp: Mdp,
    pub pi0: Policy,
    pub weights: StateActionWeights,
    pub p_pi0: DMatrix<f64>,
}

impl Environment {
    pub fn label(&self) -> String {
        self.spec.label()
    }

    pub fn num_state_actions(&self) -> usize {
        self.mdp.num_state_actions()
    }
}

fn gridworld_transition(width: usize, height: usize, slip: f64) -> DMatrix<f64> {
    let n = width * height;
    let m = 4;
    // up, down, left, right
    let moves: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];
    let mut t = DMatrix::zeros(n * m, n);
    for y in 0..height {
        for x in 0..width {
            let s = y * width + x;
            let dest = |d: (i64, i64)| -> usize {
                let (nx, ny) = (x as i64 + d.0, y as i64 + d.1);
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    s
                } else {
                    ny as usize * width + nx as usize
                }
            };
            for (a, &mv) in moves.iter().enumerate() {
                let row = s * m + a;
                t[(row, dest(mv))] += 1.0 - slip;
                for (b, &other) in moves.iter().enumerate() {
                    if b != a {
                        t[(row, dest(other))] += slip / 3.0;
                    }
                }
            }
        }
    }
    t
}

fn directed_cycle_transition(n: usize) -> DMatrix<f64> {
    let m = 2;
    let mut t = DMatrix::zeros(n * m, n);
    for s in 0..n {
        t[(s * m, (s + 1) % n)] = 1.0; // advance
        t[(s * m + 1, s)] = 1.0; // stay
    }
    t
}

fn reversible_chain_transition(n: usize) -> DMatrix<f64> {
    let m = 2;
    let mut t = DMatrix::zeros(n * m, n);
    for s in 0..n {
        let up = if s + 1 < n { 0.3 } else { 0.0 };
        let down = if s > 0 { 0.2 } else { 0.0 };
        for a in 0..m {
            if up > 0.0 {
                t[(s * m + a, s + 1)] = up;
            }
            if down > 0.0 {
                t[(s * m + a, s - 1)] = down;
            }
            t[(s * m + a, s)] = 1.0 - up - down;
        }
    }
    t
}

fn random_stochastic_transition(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(n * m, n);
    for i in 0..n * m {
        let mut row: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= sum);
        for (j, &p) in row.iter().enumerate() {
            t[(i, j)] = p;
        }
    }
    t
}

fn random_deterministic_transition(n: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(n * m, n);
    for i in 0..n * m {
        t[(i, rng.random_range(0..n))] = 1.0;
    }
    t
}

fn build_policy(kind: &PolicyKind, n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<Policy> {
    match kind {
        PolicyKind::Uniform => Ok(Policy::uniform(n, m)),
        PolicyKind::SoftmaxRandomLogits { floor } => {
            if !(0.0..1.0).contains(floor) || *floor == 0.0 {
                bail!("policy floor must lie in (0, 1), got {floor}");
            }
            let mut probs = DMatrix::zeros(n, m);
            for s in 0..n {
                let logits: Vec<f64> = (0..m)
                    .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng))
                    .collect();
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
            Ok(Policy::new(probs)?)
        }
    }
}

/// Builds the environment: transition kernel, reference policy, ergodicity
/// check, stationary distribution. Random generators are reseeded up to 10
/// times if the induced chain is not ergodic.
pub fn generate_environment(spec: &EnvironmentSpec) -> Result<Environment> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let max_attempts = 10;
    let mut last_verdict = ErgodicityVerdict::Ergodic;

    for _attempt in 0..max_attempts {
        let (transition, n, m) = match &spec.generator {
            GeneratorKind::Gridworld {
                width,
                height,
                slip,
            } => {
                if !(0.0..1.0).contains(slip) {
                    bail!("slip probability {slip} outside [0, 1)");
                }
                (
                    gridworld_transition(*width, *height, *slip),
                    width * height,
                    4,
                )
            }
            GeneratorKind::DirectedCycle { n } => (directed_cycle_transition(*n), *n, 2),
            GeneratorKind::RandomDeterministic { n, m } => {
                (random_deterministic_transition(*n, *m, &mut rng), *n, *m)
            }
            GeneratorKind::RandomStochastic { n, m } => {
                (random_stochastic_transition(*n, *m, &mut rng), *n, *m)
            }
            GeneratorKind::ReversibleChain { n } => (reversible_chain_transition(*n), *n, 2),
        };
        let mdp = Mdp::new(n, m, transition, spec.gamma)?;
        let pi0 = build_policy(&spec.policy, n, m, &mut rng)?;
        let p_pi0 = policy_transition(&mdp, &pi0)?;
        match check_ergodicity(&p_pi0) {
            ErgodicityVerdict::Ergodic => {
                let weights = stationary_distribution(&p_pi0, m, 1e-12, 1_000_000)?;
                return Ok(Environment {
                    spec: spec.clone(),
                    mdp,
                    pi0,
                    weights,
                    p_pi0,
                });
            }
            verdict => {
                last_verdict = verdict;
                // deterministic structures never change across attempts
                if matches!(
                    spec.generator,
                    GeneratorKind::Gridworld { .. }
                        | GeneratorKind::DirectedCycle { .. }
                        | GeneratorKind::ReversibleChain { .. }
                ) {
                    break;
                }
            }
        }
    }
    bail!(
        "generator {:?} produced no ergodic chain after {max_attempts} attempts (last verdict: {last_verdict:?})",
        spec.generator
    )
}
