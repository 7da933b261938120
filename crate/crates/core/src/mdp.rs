//! Finite reward-free MDPs, policies, induced state-action chains, and
//! exact policy evaluation.
//!
//! Conventions, used everywhere in the crate:
//! - rewards and Q-functions are column vectors over state-actions with
//!   index `s * num_actions + a`;
//! - the transition kernel `P` is `(#S·#A) × #S` with rows `P(·|s,a)`;
//! - a policy doubles as the `#S × (#S·#A)` matrix `π[s, (s',a')] =
//!   π(a'|s') · [s = s']`, so the state-action chain of a policy is the
//!   product `P_π = P · π`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Row-sum tolerance for probability matrices.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Componentwise floor below which a stationary distribution is rejected.
pub const RHO_FLOOR: f64 = 1e-12;

/// A real-valued function on state-actions (reward, Q-function, feature
/// column), stored as a dense vector with index `s * num_actions + a`.
pub type StateActionFn = DVector<f64>;

/// A finite reward-free MDP.
#[derive(Debug, Clone)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    /// `(#S·#A) × #S` kernel; row `s*num_actions + a` is `P(·|s,a)`.
    transition: DMatrix<f64>,
    gamma: f64,
}

impl Mdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::ShapeMismatch(
                "state and action counts must be positive".into(),
            ));
        }
        let nm = num_states * num_actions;
        if transition.nrows() != nm || transition.ncols() != num_states {
            return Err(Error::ShapeMismatch(format!(
                "transition must be {}x{}, got {}x{}",
                nm,
                num_states,
                transition.nrows(),
                transition.ncols()
            )));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidDistribution(format!(
                "gamma {gamma} outside [0, 1]"
            )));
        }
        for i in 0..nm {
            let mut sum = 0.0;
            for j in 0..num_states {
                let p = transition[(i, j)];
                if p < 0.0 || !p.is_finite() {
                    return Err(Error::InvalidDistribution(format!(
                        "transition[{i},{j}] = {p} is not a probability"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "transition row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            transition,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_state_actions(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    /// Flat state-action index.
    pub fn sa_index(&self, state: usize, action: usize) -> usize {
        debug_assert!(state < self.num_states && action < self.num_actions);
        state * self.num_actions + action
    }

    /// Replaces the discount factor.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            gamma,
        )
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text)?;
        let nm = file.num_states * file.num_actions;
        let mut transition = DMatrix::zeros(nm, file.num_states);
        for &(s, a, s_next, prob) in &file.transitions {
            if s >= file.num_states || a >= file.num_actions || s_next >= file.num_states {
                return Err(Error::ShapeMismatch(format!(
                    "transition entry ({s},{a},{s_next}) out of range"
                )));
            }
            transition[(s * file.num_actions + a, s_next)] += prob;
        }
        Self::new(file.num_states, file.num_actions, transition, file.gamma)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut transitions = Vec::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                for s_next in 0..self.num_states {
                    let p = self.transition[(self.sa_index(s, a), s_next)];
                    if p != 0.0 {
                        transitions.push((s, a, s_next, p));
                    }
                }
            }
        }
        let file = MdpFile {
            num_states: self.num_states,
            num_actions: self.num_actions,
            gamma: self.gamma,
            transitions,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// On-disk MDP format: sparse list of `[s, a, s_next, prob]` rows; unlisted
/// triples have probability zero.
#[derive(Serialize, Deserialize)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    transitions: Vec<(usize, usize, usize, f64)>,
}

/// A stationary stochastic policy, `probs[s, a] = π(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    probs: DMatrix<f64>,
}

impl Policy {
    pub fn new(probs: DMatrix<f64>) -> Result<Self> {
        for s in 0..probs.nrows() {
            let mut sum = 0.0;
            for a in 0..probs.ncols() {
                let p = probs[(s, a)];
                if p < 0.0 || !p.is_finite() {
                    return Err(Error::InvalidDistribution(format!(
                        "policy[{s},{a}] = {p} is not a probability"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "policy row {s} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            probs: DMatrix::from_element(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn probs(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn prob(&self, state: usize, action: usize) -> f64 {
        self.probs[(state, action)]
    }

    /// True when every action has positive probability at every state, a
    /// requirement for reference policies (KL divergences and exponential
    /// tilts must stay finite).
    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    /// The `#S × (#S·#A)` matrix view `π[s, (s',a')] = π(a'|s')·[s = s']`.
    pub fn state_action_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.num_states(), self.num_actions());
        let mut out = DMatrix::zeros(n, n * m);
        for s in 0..n {
            for a in 0..m {
                out[(s, s * m + a)] = self.probs[(s, a)];
            }
        }
        out
    }

    /// Per-state policy average of a state-action function:
    /// `(πf)(s) = Σ_a π(a|s) f(s,a)`.
    pub fn state_average(&self, f: &StateActionFn) -> DVector<f64> {
        let (n, m) = (self.num_states(), self.num_actions());
        debug_assert_eq!(f.len(), n * m);
        DVector::from_fn(n, |s, _| {
            (0..m).map(|a| self.probs[(s, a)] * f[s * m + a]).sum()
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PolicyFile = serde_json::from_str(text)?;
        let n = file.probs.len();
        if n == 0
            || file
                .probs
                .iter()
                .any(|row| row.len() != file.probs[0].len())
        {
            return Err(Error::ShapeMismatch(
                "policy rows must be non-empty and equal length".into(),
            ));
        }
        let m = file.probs[0].len();
        Self::new(DMatrix::from_fn(n, m, |s, a| file.probs[s][a]))
    }

    pub fn to_json_string(&self) -> Result<String> {
        let probs: Vec<Vec<f64>> = (0..self.num_states())
            .map(|s| {
                (0..self.num_actions())
                    .map(|a| self.probs[(s, a)])
                    .collect()
            })
            .collect();
        Ok(serde_json::to_string_pretty(&PolicyFile { probs })?)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// On-disk policy format: row-major `probs[s][a]`.
#[derive(Serialize, Deserialize)]
struct PolicyFile {
    probs: Vec<Vec<f64>>,
}

/// Stationary distribution ρ of a state-action chain, together with its
/// state marginal. This is the weight structure behind every norm and
/// adjoint in the crate.
#[derive(Debug, Clone)]
pub struct StateActionWeights {
    rho: DVector<f64>,
    rho_s: DVector<f64>,
    num_actions: usize,
}

impl StateActionWeights {
    /// Builds weights from an explicit distribution over state-actions.
    /// Entries must be strictly positive and sum to 1 within 1e-10.
    pub fn new(rho: DVector<f64>, num_actions: usize) -> Result<Self> {
        if num_actions == 0 || !rho.len().is_multiple_of(num_actions) {
            return Err(Error::ShapeMismatch(format!(
                "rho length {} is not a multiple of num_actions {num_actions}",
                rho.len()
            )));
        }
        if let Some(i) = (0..rho.len()).find(|&i| !(rho[i].is_finite() && rho[i] > 0.0)) {
            return Err(Error::ZeroWeight(i));
        }
        let total: f64 = rho.sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidDistribution(format!(
                "rho sums to {total}, not 1"
            )));
        }
        let n = rho.len() / num_actions;
        let rho_s = DVector::from_fn(n, |s, _| {
            (0..num_actions).map(|a| rho[s * num_actions + a]).sum()
        });
        Ok(Self {
            rho,
            rho_s,
            num_actions,
        })
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn rho_s(&self) -> &DVector<f64> {
        &self.rho_s
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_states(&self) -> usize {
        self.rho_s.len()
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.len() == 0
    }

    /// ρ-mean of a state-action function, `Σ ρ(s,a) f(s,a)`.
    pub fn mean(&self, f: &StateActionFn) -> f64 {
        self.rho.dot(f)
    }

    /// diag(ρ) as a dense matrix.
    pub fn rho_hat(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.rho)
    }

    /// diag(ρ)⁻¹ as a dense matrix.
    pub fn rho_hat_inv(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.rho.map(|x| 1.0 / x))
    }
}

/// Verdict of the structural ergodicity check on a chain's support graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErgodicityVerdict {
    /// Strongly connected and aperiodic.
    Ergodic,
    /// Support graph is not strongly connected.
    Reducible,
    /// Strongly connected but the gcd of cycle lengths exceeds 1.
    Periodic,
}

/// Induced state-action transition matrix `P_π = P·π`, with
/// `P_π[(s,a),(s',a')] = P(s'|s,a) π(a'|s')`.
pub fn policy_transition(mdp: &Mdp, policy: &Policy) -> Result<DMatrix<f64>> {
    if policy.num_states() != mdp.num_states() || policy.num_actions() != mdp.num_actions() {
        return Err(Error::ShapeMismatch(format!(
            "policy is {}x{} but MDP needs {}x{}",
            policy.num_states(),
            policy.num_actions(),
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    let (n, m) = (mdp.num_states(), mdp.num_actions());
    let nm = n * m;
    let mut out = DMatrix::zeros(nm, nm);
    for row in 0..nm {
        for s_next in 0..n {
            let p = mdp.transition()[(row, s_next)];
            if p == 0.0 {
                continue;
            }
            for a_next in 0..m {
                out[(row, s_next * m + a_next)] = p * policy.prob(s_next, a_next);
            }
        }
    }
    Ok(out)
}

/// Structural ergodicity check: strong connectivity plus aperiodicity of
/// the support graph. Exact — no spectral tolerances involved.
pub fn check_ergodicity(p_pi: &DMatrix<f64>) -> ErgodicityVerdict {
    let n = p_pi.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| p_pi[(i, j)] > 0.0).collect())
        .collect();
    let radj: Vec<Vec<usize>> = {
        let mut r = vec![Vec::new(); n];
        for (i, outs) in adj.iter().enumerate() {
            for &j in outs {
                r[j].push(i);
            }
        }
        r
    };

    let reach = |graph: &Vec<Vec<usize>>| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &graph[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    };
    if !reach(&adj).iter().all(|&b| b) || !reach(&radj).iter().all(|&b| b) {
        return ErgodicityVerdict::Reducible;
    }

    // Period = gcd over edges (u,v) of dist(u) + 1 - dist(v), with dist from
    // a BFS rooted anywhere; standard for strongly connected graphs.
    let mut dist = vec![i64::MIN; n];
    dist[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == i64::MIN {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: i64 = 0;
    for (u, outs) in adj.iter().enumerate() {
        for &v in outs {
            g = gcd(g, (dist[u] + 1 - dist[v]).abs());
        }
    }
    if g == 1 {
        ErgodicityVerdict::Ergodic
    } else {
        ErgodicityVerdict::Periodic
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Stationary distribution of an ergodic state-action chain.
///
/// Power iteration on `ρᵀ ← ρᵀ P_π` from the uniform start; falls back to a
/// direct left-eigenvector extraction (bordered solve of `ρᵀ(P_π − Id) = 0`,
/// `Σρ = 1`) if the iteration has not converged after `max_iters` steps.
pub fn stationary_distribution(
    p_pi: &DMatrix<f64>,
    num_actions: usize,
    tol: f64,
    max_iters: usize,
) -> Result<StateActionWeights> {
    let nm = p_pi.nrows();
    if p_pi.ncols() != nm {
        return Err(Error::ShapeMismatch(format!(
            "P_pi must be square, got {}x{}",
            nm,
            p_pi.ncols()
        )));
    }
    let verdict = check_ergodicity(p_pi);
    if verdict != ErgodicityVerdict::Ergodic {
        return Err(Error::NotErgodic(verdict));
    }

    let mut rho = DVector::from_element(nm, 1.0 / nm as f64);
    let mut converged = false;
    for _ in 0..max_iters {
        let next = p_pi.tr_mul(&rho); // (P_piᵀ ρ) = (ρᵀ P_pi)ᵀ
        let delta = (&next - &rho).amax();
        rho = next;
        if delta <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        rho = left_eigenvector_fallback(p_pi)?;
    }

    // Renormalize and validate.
    let total = rho.sum();
    rho /= total;
    let residual = (p_pi.tr_mul(&rho) - &rho).amax();
    if residual > tol.max(1e-10) {
        return Err(Error::NonConvergence(max_iters));
    }
    if let Some(i) = (0..nm).find(|&i| rho[i] < RHO_FLOOR) {
        return Err(Error::ZeroWeight(i));
    }
    StateActionWeights::new(rho, num_actions)
}

/// Left Perron vector via the bordered system
/// `[(P_πᵀ − Id); 𝟙ᵀ] ρ = [0; 1]`, solved as a square system with the last
/// row replacing one redundant equation.
fn left_eigenvector_fallback(p_pi: &DMatrix<f64>) -> Result<DVector<f64>> {
    let nm = p_pi.nrows();
    let mut a = p_pi.transpose() - DMatrix::<f64>::identity(nm, nm);
    let mut b = DVector::zeros(nm);
    // Replace the last equation (redundant for an ergodic chain) with the
    // normalization constraint.
    for j in 0..nm {
        a[(nm - 1, j)] = 1.0;
    }
    b[nm - 1] = 1.0;
    linalg::solve(&a, &b)
}

/// True iff every transition row is a point mass (single entry equal to 1
/// within 1e-12, everything else below 1e-12).
pub fn is_deterministic(mdp: &Mdp) -> bool {
    let nm = mdp.num_state_actions();
    for i in 0..nm {
        let mut support = 0usize;
        let mut biggest = 0.0f64;
        for j in 0..mdp.num_states() {
            let p = mdp.transition()[(i, j)];
            if p > 1e-12 {
                support += 1;
                biggest = biggest.max(p);
            }
        }
        if support != 1 || (biggest - 1.0).abs() > 1e-12 {
            return false;
        }
    }
    true
}

/// Exact Q-function of `policy` for `reward`: solves
/// `(Id − γ P_π) Q = r` by dense LU. Requires γ < 1 (for γ = 1 use the
/// centered Laplacian inverse in [`crate::geometry`]).
pub fn q_function(mdp: &Mdp, policy: &Policy, reward: &StateActionFn) -> Result<StateActionFn> {
    let nm = mdp.num_state_actions();
    if reward.len() != nm {
        return Err(Error::ShapeMismatch(format!(
            "reward length {} != {}",
            reward.len(),
            nm
        )));
    }
    let p_pi = policy_transition(mdp, policy)?;
    let a = DMatrix::identity(nm, nm) - mdp.gamma() * p_pi;
    linalg::solve(&a, reward)
}

/// Splits a Q-function into the per-state value `V(s) = Σ_a π(a|s) Q(s,a)`
/// and the state-action advantage `A = Q − V`.
pub fn value_and_advantage(policy: &Policy, q: &StateActionFn) -> (DVector<f64>, StateActionFn) {
    let m = policy.num_actions();
    let value = policy.state_average(q);
    let advantage = StateActionFn::from_fn(q.len(), |i, _| q[i] - value[i / m]);
    (value, advantage)
}
