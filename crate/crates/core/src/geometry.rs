//! The weighted geometry of L²(ρ): inner products, the advantage norm,
//! operator adjoints, the Laplacian `Δ = Id − γP_π₀` and its inverse, the
//! Dirichlet form, and ρ-orthonormal feature sets.
//!
//! The adjoint of an operator `M` with respect to `⟨f,g⟩ = fᵀ diag(ρ) g` is
//! `M* = diag(ρ)⁻¹ Mᵀ diag(ρ)`; self-adjointness is always meant in this
//! weighted sense, not plain matrix symmetry.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mdp::{policy_transition, Mdp, Policy, StateActionFn, StateActionWeights};

/// Gram deviation allowed when a feature set claims orthonormality.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Gram condition number beyond which columns are declared rank deficient.
pub const RANK_CONDITION_LIMIT: f64 = 1e12;
/// ρ-mean magnitude above which a γ=1 inverse refuses its input.
pub const CENTERED_TOL: f64 = 1e-10;

/// A linear operator on state-action functions, carrying the weights that
/// define its adjoint.
#[derive(Debug, Clone)]
pub struct RhoOperator {
    pub matrix: DMatrix<f64>,
    weights: StateActionWeights,
}

impl RhoOperator {
    pub fn new(matrix: DMatrix<f64>, weights: StateActionWeights) -> Result<Self> {
        if matrix.nrows() != weights.len() || matrix.ncols() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "operator is {}x{} but weights have length {}",
                matrix.nrows(),
                matrix.ncols(),
                weights.len()
            )));
        }
        Ok(Self { matrix, weights })
    }

    pub fn weights(&self) -> &StateActionWeights {
        &self.weights
    }

    pub fn apply(&self, f: &StateActionFn) -> StateActionFn {
        &self.matrix * f
    }

    /// Adjoint in L²(ρ): `M* = diag(ρ)⁻¹ Mᵀ diag(ρ)`, computed entrywise as
    /// `M*[i,j] = M[j,i] ρ[j] / ρ[i]`.
    pub fn adjoint(&self) -> RhoOperator {
        let rho = self.weights.rho();
        let n = rho.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| self.matrix[(j, i)] * rho[j] / rho[i]);
        RhoOperator {
            matrix,
            weights: self.weights.clone(),
        }
    }

    /// Deviation from self-adjointness, `max |M − M*|`.
    pub fn self_adjoint_deviation(&self) -> f64 {
        linalg::max_diff(&self.matrix, &self.adjoint().matrix)
    }
}

/// `⟨f, g⟩_{L²(ρ)} = Σ ρ(s,a) f(s,a) g(s,a)`.
pub fn l2rho_inner(f: &StateActionFn, g: &StateActionFn, w: &StateActionWeights) -> f64 {
    debug_assert_eq!(f.len(), w.len());
    debug_assert_eq!(g.len(), w.len());
    let rho = w.rho();
    (0..f.len()).map(|i| rho[i] * f[i] * g[i]).sum()
}

/// Squared L²(ρ) norm.
pub fn l2rho_norm_sq(f: &StateActionFn, w: &StateActionWeights) -> f64 {
    l2rho_inner(f, f, w)
}

/// Squared advantage (semi)norm: the ρ-weighted variance of `f` around its
/// π₀-mean over actions at each state,
/// `E_{(s,a)∼ρ} (f(s,a) − E_{a'∼π₀(s)} f(s,a'))²`.
///
/// Zero exactly when `f` is constant over actions at every state. The
/// centering policy is always the reference policy, regardless of which
/// policy produced `f`.
pub fn advantage_norm_sq(f: &StateActionFn, w: &StateActionWeights, pi0: &Policy) -> f64 {
    debug_assert_eq!(f.len(), w.len());
    let m = pi0.num_actions();
    let fbar = pi0.state_average(f);
    let rho = w.rho();
    (0..f.len())
        .map(|i| rho[i] * (f[i] - fbar[i / m]).powi(2))
        .sum()
}

/// Advantage inner product by polarization of [`advantage_norm_sq`].
pub fn advantage_inner(
    f: &StateActionFn,
    g: &StateActionFn,
    w: &StateActionWeights,
    pi0: &Policy,
) -> f64 {
    let m = pi0.num_actions();
    let fbar = pi0.state_average(f);
    let gbar = pi0.state_average(g);
    let rho = w.rho();
    (0..f.len())
        .map(|i| rho[i] * (f[i] - fbar[i / m]) * (g[i] - gbar[i / m]))
        .sum()
}

/// Laplacian operator `Δ = Id − γ P_π₀` for a given decay factor. At γ = 1
/// the constants are in its kernel; inversion then only makes sense on the
/// ρ-centered subspace (see [`apply_inverse_laplacian`]).
pub fn laplacian(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    gamma: f64,
) -> Result<RhoOperator> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidDistribution(format!(
            "gamma {gamma} outside [0, 1]"
        )));
    }
    let p_pi = policy_transition(mdp, pi0)?;
    let nm = p_pi.nrows();
    RhoOperator::new(DMatrix::identity(nm, nm) - gamma * p_pi, w.clone())
}

/// Solves `ΔQ = r`.
///
/// For γ < 1 this is a plain LU solve. For γ = 1 the operator is singular on
/// constants, so `r` must be ρ-centered (mean below [`CENTERED_TOL`]); the
/// solution is pinned to the centered subspace via the bordered system
/// `[Δ 𝟙; ρᵀ 0]·[Q; λ] = [r; 0]`.
pub fn apply_inverse_laplacian(
    delta: &RhoOperator,
    r: &StateActionFn,
    gamma: f64,
) -> Result<StateActionFn> {
    if gamma < 1.0 {
        return linalg::solve(&delta.matrix, r);
    }
    let w = delta.weights();
    let mean = w.mean(r);
    if mean.abs() > CENTERED_TOL {
        return Err(Error::CenterRewardFirst(mean));
    }
    let q = bordered_centered_solve(&delta.matrix, w, r)?;
    // Pin the mean exactly; the bordered solve leaves it at roundoff level.
    Ok(center(&q, w))
}

fn bordered_centered_solve(
    delta: &DMatrix<f64>,
    w: &StateActionWeights,
    r: &StateActionFn,
) -> Result<StateActionFn> {
    let nm = delta.nrows();
    let mut a = DMatrix::zeros(nm + 1, nm + 1);
    a.view_mut((0, 0), (nm, nm)).copy_from(delta);
    for i in 0..nm {
        a[(i, nm)] = 1.0;
        a[(nm, i)] = w.rho()[i];
    }
    let mut b = DVector::zeros(nm + 1);
    b.rows_mut(0, nm).copy_from(r);
    let x = linalg::solve(&a, &b)?;
    Ok(x.rows(0, nm).into_owned())
}

/// The γ=1 Laplacian inverse restricted to the ρ-centered subspace,
/// assembled as a dense matrix: column `j` is the centered solution of
/// `ΔQ = center(e_j)`. Satisfies `Δ⁺ 𝟙 = 0` and `ρᵀ Δ⁺ = 0`.
pub fn centered_inverse_laplacian(
    p_pi: &DMatrix<f64>,
    w: &StateActionWeights,
) -> Result<DMatrix<f64>> {
    let nm = p_pi.nrows();
    let delta = DMatrix::<f64>::identity(nm, nm) - p_pi;
    let mut a = DMatrix::zeros(nm + 1, nm + 1);
    a.view_mut((0, 0), (nm, nm)).copy_from(&delta);
    for i in 0..nm {
        a[(i, nm)] = 1.0;
        a[(nm, i)] = w.rho()[i];
    }
    let lu = a.lu();
    let mut out = DMatrix::zeros(nm, nm);
    for j in 0..nm {
        let mut b = DVector::zeros(nm + 1);
        for i in 0..nm {
            b[i] = -w.rho()[j];
        }
        b[j] += 1.0;
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::SingularSystem("bordered gamma=1 system".into()))?;
        out.column_mut(j).copy_from(&x.rows(0, nm));
    }
    Ok(out)
}

/// Dirichlet form `⟨f, Δf⟩_{L²(ρ)}`. At γ = 1 (and ρ stationary) this equals
/// half the expected squared increment of `f` along the chain and is
/// non-negative; at γ = 0 it reduces to the squared L²(ρ) norm.
pub fn dirichlet_form(f: &StateActionFn, delta: &RhoOperator) -> f64 {
    l2rho_inner(f, &delta.apply(f), delta.weights())
}

/// Projector onto the ρ-centered subspace: `f ↦ f − (ρᵀf)𝟙`, as a matrix
/// `Id − 𝟙ρᵀ`. Idempotent and annihilates constants.
pub fn centering_projector(w: &StateActionWeights) -> RhoOperator {
    let n = w.len();
    let rho = w.rho();
    let matrix = DMatrix::from_fn(n, n, |i, j| (if i == j { 1.0 } else { 0.0 }) - rho[j]);
    RhoOperator {
        matrix,
        weights: w.clone(),
    }
}

/// Subtracts the ρ-mean: the vector form of [`centering_projector`].
pub fn center(f: &StateActionFn, w: &StateActionWeights) -> StateActionFn {
    let mean = w.mean(f);
    f.map(|x| x - mean)
}

/// Where a feature set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// Top eigenvectors of the weighted advantage kernel.
    Optimal,
    /// Smallest eigenfunctions of `Δ + Δ*` at γ = 1.
    LaplacianEigs,
    /// Largest eigenfunctions of `P + P*`.
    PSymmetrized,
    /// Largest eigenfunctions of `Δ⁻¹ + (Δ⁻¹)*` at γ = 1.
    InverseLaplacian,
    /// Orthonormalized standard-normal columns.
    Random,
    Custom,
}

impl Provenance {
    pub fn tag(&self) -> &'static str {
        match self {
            Provenance::Optimal => "optimal",
            Provenance::LaplacianEigs => "laplacian_eigs",
            Provenance::PSymmetrized => "p_symmetrized",
            Provenance::InverseLaplacian => "inv_laplacian",
            Provenance::Random => "random",
            Provenance::Custom => "custom",
        }
    }
}

/// `d` feature columns over state-actions, L²(ρ)-orthonormal by
/// construction: `φᵀ diag(ρ) φ = Id` within [`ORTHONORMAL_TOL`].
#[derive(Debug, Clone)]
pub struct FeatureSet {
    columns: DMatrix<f64>,
    weights: StateActionWeights,
    provenance: Provenance,
}

impl FeatureSet {
    /// Wraps already-orthonormal columns, verifying the Gram matrix.
    pub fn new(
        columns: DMatrix<f64>,
        weights: StateActionWeights,
        provenance: Provenance,
    ) -> Result<Self> {
        if columns.nrows() != weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows vs {} weights",
                columns.nrows(),
                weights.len()
            )));
        }
        let deviation = gram_deviation(&columns, &weights);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(deviation));
        }
        Ok(Self {
            columns,
            weights,
            provenance,
        })
    }

    /// An empty feature set (d = 0).
    pub fn empty(weights: StateActionWeights) -> Self {
        let n = weights.len();
        Self {
            columns: DMatrix::zeros(n, 0),
            weights,
            provenance: Provenance::Custom,
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn column(&self, i: usize) -> StateActionFn {
        self.columns.column(i).into_owned()
    }

    pub fn weights(&self) -> &StateActionWeights {
        &self.weights
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// The feature vector φ(s,a) at one state-action, as a d-vector.
    pub fn at_index(&self, index: usize) -> DVector<f64> {
        self.columns.row(index).transpose()
    }

    /// Gram matrix `φᵀ diag(ρ) φ`.
    pub fn gram(&self) -> DMatrix<f64> {
        weighted_gram(&self.columns, &self.columns, &self.weights)
    }
}

/// `aᵀ diag(ρ) b` for column blocks.
pub fn weighted_gram(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &StateActionWeights) -> DMatrix<f64> {
    let rho = w.rho();
    let mut scaled = b.clone();
    for i in 0..scaled.nrows() {
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= rho[i];
        }
    }
    a.tr_mul(&scaled)
}

fn gram_deviation(columns: &DMatrix<f64>, w: &StateActionWeights) -> f64 {
    let d = columns.ncols();
    let gram = weighted_gram(columns, columns, w);
    linalg::max_diff(&gram, &DMatrix::identity(d, d))
}

/// Orthonormalizes columns in L²(ρ) by the symmetric (Gram inverse square
/// root) change of basis `φ ← φ C^{−1/2}`, preserving the span. Rejects
/// inputs whose Gram condition number exceeds [`RANK_CONDITION_LIMIT`].
pub fn orthonormalize(
    columns: &DMatrix<f64>,
    w: &StateActionWeights,
    provenance: Provenance,
) -> Result<FeatureSet> {
    if columns.nrows() != w.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} weights",
            columns.nrows(),
            w.len()
        )));
    }
    if columns.ncols() == 0 {
        return Ok(FeatureSet {
            columns: columns.clone(),
            weights: w.clone(),
            provenance,
        });
    }
    let gram = weighted_gram(columns, columns, w);
    let (vals, vecs) = linalg::symmetric_eigen_desc(&gram);
    let (largest, smallest) = (vals[0], vals[vals.len() - 1]);
    if smallest <= 0.0 || largest / smallest > RANK_CONDITION_LIMIT {
        return Err(Error::RankDeficient {
            cond: if smallest > 0.0 {
                largest / smallest
            } else {
                f64::INFINITY
            },
            limit: RANK_CONDITION_LIMIT,
        });
    }
    let mut out = columns * inverse_sqrt(&vals, &vecs);
    // inputs near the condition limit can leave roundoff above the
    // orthonormality tolerance; one more pass on the now well-conditioned
    // Gram settles it
    let deviation = gram_deviation(&out, w);
    if deviation > ORTHONORMAL_TOL / 10.0 {
        let gram2 = weighted_gram(&out, &out, w);
        let (vals2, vecs2) = linalg::symmetric_eigen_desc(&gram2);
        out *= inverse_sqrt(&vals2, &vecs2);
    }
    FeatureSet::new(out, w.clone(), provenance)
}

fn inverse_sqrt(vals: &[f64], vecs: &DMatrix<f64>) -> DMatrix<f64> {
    let d = vals.len();
    let scaled = DMatrix::from_fn(d, d, |i, j| vecs[(i, j)] / vals[j].sqrt());
    scaled * vecs.transpose()
}

/// L²(ρ)-orthogonal projector onto the span of an orthonormal feature set:
/// `Π = φ φᵀ diag(ρ)`. Idempotent and self-adjoint in L²(ρ).
pub fn projector(features: &FeatureSet) -> RhoOperator {
    let w = features.weights();
    let rho = w.rho();
    let phi = features.columns();
    let n = phi.nrows();
    let mut weighted = phi.transpose();
    for j in 0..n {
        for k in 0..weighted.nrows() {
            weighted[(k, j)] *= rho[j];
        }
    }
    RhoOperator {
        matrix: phi * weighted,
        weights: w.clone(),
    }
}
