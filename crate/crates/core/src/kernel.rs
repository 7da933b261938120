//! The advantage kernel: the symmetric positive semi-definite matrix `𝒜`
//! with `rᵀ𝒜r = ‖A_r‖²_{L²(ρ)}` for every reward `r`, where `A_r` is the
//! advantage function of the reference policy for `r`.
//!
//! The general assembly is
//! `𝒜 = (Δ⁻¹)ᵀ (diag(ρ) − π₀ᵀ diag(ρ_S) π₀) Δ⁻¹` for γ < 1; in
//! deterministic environments the associated weighted operator collapses to
//! closed forms in `Δ⁻¹` and `P_π₀` alone, which this module also builds and
//! cross-checks.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geometry::{centered_inverse_laplacian, centering_projector, l2rho_inner, RhoOperator};
use crate::linalg;
use crate::mdp::{
    is_deterministic, policy_transition, Mdp, Policy, StateActionFn, StateActionWeights,
};

/// The advantage kernel of a reference policy at a fixed decay factor.
#[derive(Debug, Clone)]
pub struct AdvantageKernel {
    kernel: DMatrix<f64>,
    selfadjoint_form: DMatrix<f64>,
    gamma: f64,
    deterministic_env: bool,
    weights: StateActionWeights,
}

impl AdvantageKernel {
    /// The symmetric matrix `𝒜`.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// `diag(ρ)⁻¹ 𝒜`: the L²(ρ)-self-adjoint operator whose eigenvectors
    /// are the optimal features.
    pub fn selfadjoint_form(&self) -> &DMatrix<f64> {
        &self.selfadjoint_form
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn deterministic_env(&self) -> bool {
        self.deterministic_env
    }

    pub fn weights(&self) -> &StateActionWeights {
        &self.weights
    }

    /// `rᵀ𝒜r`, the squared advantage norm of the Q-function for `r`.
    pub fn quadratic(&self, r: &StateActionFn) -> f64 {
        self.quadratic_pair(r, r)
    }

    /// Polar form `r₁ᵀ𝒜r₂`: the ρ-correlation of the two advantage
    /// functions.
    pub fn quadratic_pair(&self, r1: &StateActionFn, r2: &StateActionFn) -> f64 {
        debug_assert_eq!(r1.len(), self.kernel.nrows());
        debug_assert_eq!(r2.len(), self.kernel.nrows());
        (r1.transpose() * &self.kernel * r2)[(0, 0)]
    }

    /// The self-adjoint form as a [`RhoOperator`].
    pub fn operator(&self) -> RhoOperator {
        RhoOperator::new(self.selfadjoint_form.clone(), self.weights.clone())
            .expect("kernel and weights have matching dimensions")
    }
}

/// The block-diagonal middle matrix `diag(ρ) − π₀ᵀ diag(ρ_S) π₀`; its
/// quadratic form is the squared advantage seminorm itself.
fn advantage_metric(pi0: &Policy, w: &StateActionWeights) -> DMatrix<f64> {
    let (n, m) = (pi0.num_states(), pi0.num_actions());
    let mut out = DMatrix::zeros(n * m, n * m);
    for s in 0..n {
        for a in 0..m {
            for a2 in 0..m {
                let mut v = -w.rho_s()[s] * pi0.prob(s, a) * pi0.prob(s, a2);
                if a == a2 {
                    v += w.rho()[s * m + a];
                }
                out[(s * m + a, s * m + a2)] = v;
            }
        }
    }
    out
}

/// Builds the advantage kernel for γ < 1 by the general assembly. The
/// result is explicitly symmetrized to remove roundoff drift before any
/// eigendecomposition. For γ = 1 use [`closed_form_operator`], which works
/// on the centered subspace of a deterministic environment.
pub fn build_kernel(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    gamma: f64,
) -> Result<AdvantageKernel> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDistribution(format!(
            "kernel assembly needs 0 <= gamma < 1, got {gamma}"
        )));
    }
    let p_pi = policy_transition(mdp, pi0)?;
    let nm = p_pi.nrows();
    let delta = DMatrix::<f64>::identity(nm, nm) - gamma * &p_pi;
    let dinv = linalg::invert(&delta)?;
    let mid = advantage_metric(pi0, w);
    let raw = dinv.tr_mul(&(&mid * &dinv));
    let kernel = (&raw + raw.transpose()) * 0.5;

    let rho = w.rho();
    let selfadjoint_form = DMatrix::from_fn(nm, nm, |i, j| kernel[(i, j)] / rho[i]);
    Ok(AdvantageKernel {
        kernel,
        selfadjoint_form,
        gamma,
        deterministic_env: is_deterministic(mdp),
        weights: w.clone(),
    })
}

/// Closed-form weighted operator `B` with `rᵀ𝒜r = ⟨r, Br⟩_{L²(ρ)}`, valid
/// only in deterministic environments:
///
/// - γ = 0: `B = Id − P* P`;
/// - 0 < γ < 1: `B = γ⁻² (Δ⁻¹ + (Δ⁻¹)* − Id − (1−γ²)(Δ⁻¹)*Δ⁻¹)`;
/// - γ = 1: `B = Δ⁺ + (Δ⁺)* − Π_c` on the ρ-centered subspace, where `Δ⁺`
///   is the centered inverse and `Π_c` the centering projector. `B`
///   annihilates constants and maps into centered functions.
pub fn closed_form_operator(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    gamma: f64,
) -> Result<RhoOperator> {
    if !is_deterministic(mdp) {
        return Err(Error::StochasticEnvironment);
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidDistribution(format!(
            "gamma {gamma} outside [0, 1]"
        )));
    }
    let p_pi = policy_transition(mdp, pi0)?;
    let nm = p_pi.nrows();
    let id = DMatrix::<f64>::identity(nm, nm);

    let matrix = if gamma == 0.0 {
        let p_op = RhoOperator::new(p_pi.clone(), w.clone())?;
        &id - p_op.adjoint().matrix * &p_pi
    } else if gamma < 1.0 {
        let dinv = linalg::invert(&(&id - gamma * &p_pi))?;
        let dinv_op = RhoOperator::new(dinv.clone(), w.clone())?;
        let dinv_adj = dinv_op.adjoint().matrix;
        (&dinv + &dinv_adj - &id - (1.0 - gamma * gamma) * (&dinv_adj * &dinv)) / (gamma * gamma)
    } else {
        let dplus = centered_inverse_laplacian(&p_pi, w)?;
        let dplus_op = RhoOperator::new(dplus.clone(), w.clone())?;
        &dplus + dplus_op.adjoint().matrix - centering_projector(w).matrix
    };
    RhoOperator::new(matrix, w.clone())
}

/// The alternative deterministic-environment quadratic form
/// `⟨r, (Δ⁻¹)*(Id − P*P)Δ⁻¹ r⟩_{L²(ρ)}`, equal to the kernel quadratic for
/// γ < 1.
pub fn alt_form_quadratic(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    gamma: f64,
    r: &StateActionFn,
) -> Result<f64> {
    if !is_deterministic(mdp) {
        return Err(Error::StochasticEnvironment);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidDistribution(format!(
            "the mixed closed form needs 0 <= gamma < 1, got {gamma}"
        )));
    }
    let p_pi = policy_transition(mdp, pi0)?;
    let nm = p_pi.nrows();
    let id = DMatrix::<f64>::identity(nm, nm);
    let dinv = linalg::invert(&(&id - gamma * &p_pi))?;
    let q = &dinv * r;
    let pq = &p_pi * &q;
    // <q, (Id - P*P) q>_rho = |q|^2 - |Pq|^2, then adjoints fold into the
    // inner product
    Ok(l2rho_inner(&q, &q, w) - l2rho_inner(&pq, &pq, w))
}

/// The three expressions equated by the deterministic-environment norm
/// identity: the advantage seminorm, the transition form
/// `‖f‖² − ‖P_π₀ f‖²`, and (for γ > 0) the Laplacian form
/// `γ⁻²(2⟨f,Δf⟩ − ‖Δf‖² − (1−γ²)‖f‖²)`.
#[derive(Debug, Clone, Copy)]
pub struct NormIdentities {
    pub advantage: f64,
    pub transition_form: f64,
    /// `None` at γ = 0, where the Laplacian form is unavailable.
    pub laplacian_form: Option<f64>,
}

/// Evaluates the norm identities for one function. Errors on stochastic
/// environments, where the equality `advantage = transition_form` genuinely
/// fails (by the conditional variance of the next-state value).
pub fn norm_identities(
    f: &StateActionFn,
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    gamma: f64,
) -> Result<NormIdentities> {
    if !is_deterministic(mdp) {
        return Err(Error::StochasticEnvironment);
    }
    norm_identity_terms(f, mdp, pi0, w, gamma)
}

/// The raw terms of the norm identity, computable on any environment (used
/// to exhibit the violation on stochastic ones).
pub fn norm_identity_terms(
    f: &StateActionFn,
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    gamma: f64,
) -> Result<NormIdentities> {
    let p_pi = policy_transition(mdp, pi0)?;
    let advantage = crate::geometry::advantage_norm_sq(f, w, pi0);
    let pf = &p_pi * f;
    let transition_form = l2rho_inner(f, f, w) - l2rho_inner(&pf, &pf, w);
    let laplacian_form = if gamma > 0.0 {
        let df = f - gamma * &pf;
        Some(
            (2.0 * l2rho_inner(f, &df, w)
                - l2rho_inner(&df, &df, w)
                - (1.0 - gamma * gamma) * l2rho_inner(f, f, w))
                / (gamma * gamma),
        )
    } else {
        None
    };
    Ok(NormIdentities {
        advantage,
        transition_form,
        laplacian_form,
    })
}
