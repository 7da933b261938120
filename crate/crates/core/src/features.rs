//! Feature construction and comparison.
//!
//! The optimal features for the regularized successor-feature pipeline are
//! the top eigenvectors of the weighted advantage kernel; this module
//! extracts them, builds the classical baselines (Laplacian eigenfunctions,
//! symmetrized-transition eigenfunctions, random orthonormal columns), and
//! measures trace gains and principal angles between feature subspaces.
//!
//! Every eigenproblem here is self-adjoint in L²(ρ) and is solved through
//! the similarity transform by diag(ρ)^{1/2}, which turns it into an
//! ordinary symmetric problem; eigenvectors are mapped back and
//! re-orthonormalized in L²(ρ).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    centered_inverse_laplacian, orthonormalize, weighted_gram, FeatureSet, Provenance, RhoOperator,
};
use crate::kernel::AdvantageKernel;
use crate::linalg;
use crate::mdp::{policy_transition, Mdp, Policy, StateActionFn, StateActionWeights};

/// Eigenvalue gap below which adjacent eigenvalues are treated as tied;
/// subspace comparisons must not cut inside such a cluster.
pub const CLUSTER_GAP: f64 = 1e-6;

/// Result of an L²(ρ)-self-adjoint eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Columns, L²(ρ)-orthonormal, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub source: String,
    weights: StateActionWeights,
}

impl SpectralResult {
    pub fn weights(&self) -> &StateActionWeights {
        &self.weights
    }

    /// The top-d eigenvectors as a feature set.
    pub fn top_features(&self, d: usize, provenance: Provenance) -> Result<FeatureSet> {
        let n = self.eigenvectors.nrows();
        if d == 0 || d > n {
            return Err(Error::DimensionOutOfRange { d, max: n });
        }
        let cols = self.eigenvectors.columns(0, d).into_owned();
        orthonormalize(&cols, &self.weights, provenance)
    }

    /// The bottom-d eigenvectors as a feature set.
    pub fn bottom_features(&self, d: usize, provenance: Provenance) -> Result<FeatureSet> {
        let n = self.eigenvectors.nrows();
        if d == 0 || d > n {
            return Err(Error::DimensionOutOfRange { d, max: n });
        }
        let cols = self.eigenvectors.columns(n - d, d).into_owned();
        orthonormalize(&cols, &self.weights, provenance)
    }

    /// Residual `‖Op v − λ v‖_{L²(ρ)}` of one eigenpair against an operator.
    pub fn residual(&self, op: &RhoOperator, i: usize) -> f64 {
        let v = self.eigenvectors.column(i).into_owned();
        let r = op.apply(&v) - self.eigenvalues[i] * &v;
        crate::geometry::l2rho_norm_sq(&r, &self.weights).sqrt()
    }

    /// Demotes the eigenvector closest (in ρ-cosine) to the constant vector
    /// to the end of the order with a `-inf` eigenvalue, so that "top-d"
    /// never selects the constant direction. Used with operators that
    /// annihilate constants (γ=1 closed forms).
    pub fn demote_constant_direction(&mut self) {
        let n = self.eigenvectors.nrows();
        let ones = DVector::from_element(n, 1.0);
        let ones_norm = crate::geometry::l2rho_norm_sq(&ones, &self.weights).sqrt();
        let mut best = 0usize;
        let mut best_cos = -1.0;
        for i in 0..self.eigenvalues.len() {
            let v = self.eigenvectors.column(i).into_owned();
            let vn = crate::geometry::l2rho_norm_sq(&v, &self.weights).sqrt();
            let cos =
                (crate::geometry::l2rho_inner(&v, &ones, &self.weights) / (vn * ones_norm)).abs();
            if cos > best_cos {
                best_cos = cos;
                best = i;
            }
        }
        let v = self.eigenvectors.column(best).into_owned();
        let k = self.eigenvalues.len();
        for i in best..k - 1 {
            self.eigenvalues[i] = self.eigenvalues[i + 1];
            let next = self.eigenvectors.column(i + 1).into_owned();
            self.eigenvectors.column_mut(i).copy_from(&next);
        }
        self.eigenvalues[k - 1] = f64::NEG_INFINITY;
        self.eigenvectors.column_mut(k - 1).copy_from(&v);
    }
}

/// Eigendecomposition of an operator that is self-adjoint in L²(ρ): solve
/// the symmetric problem for `ρ̂^{1/2} Op ρ̂^{−1/2}`, map the eigenvectors
/// back with `ρ̂^{−1/2}`, and re-orthonormalize in L²(ρ).
pub fn self_adjoint_eigs(op: &RhoOperator, source: &str) -> Result<SpectralResult> {
    let w = op.weights().clone();
    let n = w.len();
    let sqrt_rho = DVector::from_fn(n, |i, _| w.rho()[i].sqrt());
    let sym = DMatrix::from_fn(n, n, |i, j| sqrt_rho[i] * op.matrix[(i, j)] / sqrt_rho[j]);
    let (eigenvalues, vecs) = linalg::symmetric_eigen_desc(&sym);
    let mapped = DMatrix::from_fn(n, n, |i, j| vecs[(i, j)] / sqrt_rho[i]);
    let ortho = orthonormalize(&mapped, &w, Provenance::Custom)?;
    Ok(SpectralResult {
        eigenvalues,
        eigenvectors: ortho.columns().clone(),
        source: source.to_string(),
        weights: w,
    })
}

/// Spectrum of the weighted advantage kernel.
pub fn kernel_spectrum(kernel: &AdvantageKernel) -> Result<SpectralResult> {
    self_adjoint_eigs(&kernel.operator(), "advantage_kernel")
}

/// The optimal feature set: top-d eigenvectors of `diag(ρ)⁻¹ 𝒜`.
pub fn optimal_features(kernel: &AdvantageKernel, d: usize) -> Result<FeatureSet> {
    kernel_spectrum(kernel)?.top_features(d, Provenance::Optimal)
}

/// Baseline feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    /// Smallest eigenfunctions of `Δ + Δ*` with the γ=1 Laplacian
    /// `Δ = Id − P_π₀` (the proto-value-function convention). The smallest
    /// eigenfunction is the constant.
    LaplacianEigs,
    /// Largest eigenfunctions of `P_π₀ + P_π₀*`; spans match
    /// [`BaselineKind::LaplacianEigs`] exactly since `Δ + Δ* = 2·Id − (P + P*)`.
    PSymmetrized,
    /// L²(ρ)-orthonormalized standard-normal columns.
    Random,
}

/// Builds a baseline feature set of dimension `d`.
pub fn baseline_features(
    kind: BaselineKind,
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    d: usize,
    rng: &mut impl Rng,
) -> Result<FeatureSet> {
    let nm = mdp.num_state_actions();
    if d == 0 || d > nm {
        return Err(Error::DimensionOutOfRange { d, max: nm });
    }
    match kind {
        BaselineKind::LaplacianEigs => {
            let spec = laplacian_spectrum(mdp, pi0, w)?;
            spec.bottom_features(d, Provenance::LaplacianEigs)
        }
        BaselineKind::PSymmetrized => {
            let p_pi = policy_transition(mdp, pi0)?;
            let p_op = RhoOperator::new(p_pi, w.clone())?;
            let sym = &p_op.matrix + p_op.adjoint().matrix;
            let spec = self_adjoint_eigs(&RhoOperator::new(sym, w.clone())?, "p_symmetrized")?;
            spec.top_features(d, Provenance::PSymmetrized)
        }
        BaselineKind::Random => {
            use rand_distr::StandardNormal;
            let cols = DMatrix::from_fn(nm, d, |_, _| rng.sample(StandardNormal));
            orthonormalize(&cols, w, Provenance::Random)
        }
    }
}

/// Spectrum of `Δ + Δ*` at γ = 1 (ascending order is `bottom_features`).
pub fn laplacian_spectrum(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
) -> Result<SpectralResult> {
    let p_pi = policy_transition(mdp, pi0)?;
    let nm = p_pi.nrows();
    let delta = DMatrix::<f64>::identity(nm, nm) - p_pi;
    let d_op = RhoOperator::new(delta, w.clone())?;
    let sym = &d_op.matrix + d_op.adjoint().matrix;
    self_adjoint_eigs(&RhoOperator::new(sym, w.clone())?, "laplacian_symmetrized")
}

/// Largest eigenfunctions of `Δ⁻¹ + (Δ⁻¹)*` at γ = 1, computed with the
/// centered inverse on any ergodic chain. The constant direction is demoted
/// so top-d never selects it. In deterministic environments this span
/// coincides with the γ=1 optimal features; on reversible chains it
/// coincides with the non-constant Laplacian eigenfunctions.
pub fn inverse_laplacian_features(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    d: usize,
) -> Result<FeatureSet> {
    inverse_laplacian_spectrum(mdp, pi0, w)?.top_features(d, Provenance::InverseLaplacian)
}

/// The `d` smallest non-constant eigenfunctions of `Δ + Δ*` at γ = 1: the
/// Laplacian-eigenfunction baseline with its leading constant direction
/// removed, for span comparisons against feature sets that are ρ-orthogonal
/// to constants by construction.
pub fn laplacian_nonconstant_features(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
    d: usize,
) -> Result<FeatureSet> {
    let spec = laplacian_spectrum(mdp, pi0, w)?;
    // reverse to ascending order so "top" means "smallest of Δ + Δ*", then
    // drop the constant
    let n = w.len();
    let mut flipped = SpectralResult {
        eigenvalues: spec.eigenvalues.iter().rev().map(|v| -v).collect(),
        eigenvectors: {
            let mut cols = DMatrix::zeros(n, n);
            for j in 0..n {
                cols.column_mut(j)
                    .copy_from(&spec.eigenvectors.column(n - 1 - j));
            }
            cols
        },
        source: "laplacian_symmetrized_ascending".to_string(),
        weights: w.clone(),
    };
    flipped.demote_constant_direction();
    flipped.top_features(d, Provenance::LaplacianEigs)
}

/// Spectrum of `Δ⁺ + (Δ⁺)*` with the constant direction demoted.
pub fn inverse_laplacian_spectrum(
    mdp: &Mdp,
    pi0: &Policy,
    w: &StateActionWeights,
) -> Result<SpectralResult> {
    let p_pi = policy_transition(mdp, pi0)?;
    let dplus = centered_inverse_laplacian(&p_pi, w)?;
    let dplus_op = RhoOperator::new(dplus, w.clone())?;
    let sym = &dplus_op.matrix + dplus_op.adjoint().matrix;
    let mut spec = self_adjoint_eigs(&RhoOperator::new(sym, w.clone())?, "inverse_laplacian")?;
    spec.demote_constant_direction();
    Ok(spec)
}

/// `Tr(φᵀ 𝒜 φ)`: the feature-dependent factor of the expected gain.
/// Rejects feature sets whose Gram deviates from the identity by more than
/// 1e-8; bounded above by the sum of the top-d kernel eigenvalues.
pub fn trace_gain(features: &FeatureSet, kernel: &AdvantageKernel) -> Result<f64> {
    let d = features.dim();
    let gram = features.gram();
    let deviation = linalg::max_diff(&gram, &DMatrix::identity(d, d));
    if deviation > 1e-8 {
        return Err(Error::NotOrthonormal(deviation));
    }
    let mut total = 0.0;
    for i in 0..d {
        let col = features.column(i);
        total += kernel.quadratic(&col);
    }
    Ok(total)
}

/// Projection of the constant reward onto the feature span:
/// `φ_cst = Π𝟙 = φ (φᵀ diag(ρ) 𝟙)`. Zero exactly when every feature is
/// ρ-orthogonal to constants.
pub fn constant_projection(features: &FeatureSet) -> StateActionFn {
    let n = features.columns().nrows();
    let ones = DVector::from_element(n, 1.0);
    let coeffs = weighted_gram(
        features.columns(),
        &DMatrix::from_column_slice(n, 1, ones.as_slice()),
        features.weights(),
    );
    features.columns() * coeffs.column(0).into_owned()
}

/// Largest principal angle (radians) between the spans of two equally-sized
/// orthonormal feature sets, from the singular values of the ρ-weighted
/// cross-Gram. Zero iff the spans coincide; π/2 for ρ-orthogonal spans.
pub fn subspace_distance(a: &FeatureSet, b: &FeatureSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch(format!(
            "subspace dimensions differ: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.dim() == 0 {
        return Ok(0.0);
    }
    let cross = weighted_gram(a.columns(), b.columns(), a.weights());
    let svals = cross.singular_values();
    let smallest = svals
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 1.0);
    Ok(smallest.acos())
}

/// Snaps a requested dimension to the nearest cut where the (descending)
/// eigenvalue list has a gap larger than `gap`, so the cut never splits a
/// degenerate cluster. Returns `None` when no valid interior cut exists.
pub fn cluster_boundary(eigenvalues: &[f64], d: usize, gap: f64) -> Option<usize> {
    let n = eigenvalues.len();
    let mut best: Option<usize> = None;
    for cut in 1..n {
        if eigenvalues[cut - 1] - eigenvalues[cut] > gap {
            let better = match best {
                None => true,
                Some(b) => (cut as i64 - d as i64).abs() < (b as i64 - d as i64).abs(),
            };
            if better {
                best = Some(cut);
            }
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct FeatureFile {
    d: usize,
    provenance: String,
    /// Column-major: one inner list per feature.
    columns: Vec<Vec<f64>>,
}

/// Serializes a feature set (column-major JSON).
pub fn features_to_json(features: &FeatureSet) -> Result<String> {
    let cols: Vec<Vec<f64>> = (0..features.dim())
        .map(|j| features.column(j).iter().cloned().collect())
        .collect();
    let file = FeatureFile {
        d: features.dim(),
        provenance: features.provenance().tag().to_string(),
        columns: cols,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Reads a feature set back; orthonormality is re-checked against the
/// supplied weights.
pub fn features_from_json(text: &str, w: &StateActionWeights) -> Result<FeatureSet> {
    let file: FeatureFile = serde_json::from_str(text)?;
    if file.columns.len() != file.d {
        return Err(Error::ShapeMismatch(format!(
            "feature file declares d = {} but has {} columns",
            file.d,
            file.columns.len()
        )));
    }
    let n = w.len();
    if file.columns.iter().any(|c| c.len() != n) {
        return Err(Error::ShapeMismatch(
            "feature column length mismatch".into(),
        ));
    }
    let cols = DMatrix::from_fn(n, file.d, |i, j| file.columns[j][i]);
    FeatureSet::new(cols, w.clone(), Provenance::Custom)
}

pub fn features_to_json_file(features: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, features_to_json(features)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;
    use crate::mdp::stationary_distribution;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_env(n: usize, m: usize, seed: u64) -> (Mdp, Policy, StateActionWeights) {
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
        let mdp = Mdp::new(n, m, t, 0.9).unwrap();
        let pi = Policy::uniform(n, m);
        let p_pi = policy_transition(&mdp, &pi).unwrap();
        let w = stationary_distribution(&p_pi, m, 1e-13, 1_000_000).unwrap();
        (mdp, pi, w)
    }

    #[test]
    fn spectral_result_residuals_and_gram() {
        let (mdp, pi, w) = random_env(3, 2, 1);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        let spec = kernel_spectrum(&kern).unwrap();
        assert!(spec.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
        let op = kern.operator();
        for i in 0..6 {
            assert!(
                spec.residual(&op, i) < 1e-8,
                "residual {}",
                spec.residual(&op, i)
            );
        }
        let fs = spec.top_features(6, Provenance::Optimal).unwrap();
        assert!(linalg::max_diff(&fs.gram(), &DMatrix::identity(6, 6)) < 1e-9);
    }

    #[test]
    fn optimal_trace_equals_top_eigenvalue_sum() {
        let (mdp, pi, w) = random_env(4, 2, 2);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        let spec = kernel_spectrum(&kern).unwrap();
        for d in [1, 2, 4] {
            let opt = optimal_features(&kern, d).unwrap();
            let gain = trace_gain(&opt, &kern).unwrap();
            let top_sum: f64 = spec.eigenvalues[..d].iter().sum();
            assert_relative_eq!(gain, top_sum, epsilon = 1e-8);
        }
        // full dimension: the whole weighted trace
        let full = optimal_features(&kern, 8).unwrap();
        let full_gain = trace_gain(&full, &kern).unwrap();
        let weighted_trace: f64 = (0..8).map(|i| kern.selfadjoint_form()[(i, i)]).sum();
        assert_relative_eq!(full_gain, weighted_trace, epsilon = 1e-8);
    }

    #[test]
    fn optimal_features_orthogonal_to_constants() {
        let (mdp, pi, w) = random_env(4, 2, 3);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        let opt = optimal_features(&kern, 3).unwrap();
        let cst = constant_projection(&opt);
        assert!(cst.amax() < 1e-9);
    }

    #[test]
    fn laplacian_smallest_is_constant_and_matches_p_symmetrized() {
        let (mdp, pi, w) = random_env(4, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lap1 =
            baseline_features(BaselineKind::LaplacianEigs, &mdp, &pi, &w, 1, &mut rng).unwrap();
        // smallest eigenfunction of Delta + Delta* is the constant
        let col = lap1.column(0);
        let mean = col.sum() / 8.0;
        assert!((0..8).all(|i| (col[i] - mean).abs() < 1e-8));

        for d in [2, 3, 5] {
            let lap =
                baseline_features(BaselineKind::LaplacianEigs, &mdp, &pi, &w, d, &mut rng).unwrap();
            let psym =
                baseline_features(BaselineKind::PSymmetrized, &mdp, &pi, &w, d, &mut rng).unwrap();
            let angle = subspace_distance(&lap, &psym).unwrap();
            assert!(angle < 1e-7, "angle {angle} at d={d}");
        }
    }

    #[test]
    fn random_features_orthonormal() {
        let (mdp, pi, w) = random_env(3, 2, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = baseline_features(BaselineKind::Random, &mdp, &pi, &w, 4, &mut rng).unwrap();
        assert!(linalg::max_diff(&f.gram(), &DMatrix::identity(4, 4)) < 1e-10);
    }

    #[test]
    fn trace_gain_poincare_bound_and_constant_column() {
        let (mdp, pi, w) = random_env(3, 2, 8);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        let spec = kernel_spectrum(&kern).unwrap();
        let d = 2;
        let top_sum: f64 = spec.eigenvalues[..d].iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let f = baseline_features(BaselineKind::Random, &mdp, &pi, &w, d, &mut rng).unwrap();
            assert!(trace_gain(&f, &kern).unwrap() <= top_sum + 1e-8);
        }

        // a feature set containing the constant: that column contributes 0
        let ones = DMatrix::from_element(6, 1, 1.0);
        let fs = FeatureSet::new(ones, w.clone(), Provenance::Custom).unwrap();
        assert!(trace_gain(&fs, &kern).unwrap().abs() < 1e-9);
    }

    #[test]
    fn trace_gain_rejects_non_orthonormal() {
        let (mdp, pi, w) = random_env(3, 2, 10);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        // bypass the constructor check by scaling a valid set
        let opt = optimal_features(&kern, 2).unwrap();
        let scaled = opt.columns() * 1.5;
        let bad = FeatureSet::new(scaled, w.clone(), Provenance::Custom);
        assert!(bad.is_err()); // constructor already refuses
    }

    #[test]
    fn constant_projection_cases() {
        let (mdp, pi, w) = random_env(3, 2, 11);
        let _ = (&mdp, &pi);
        // span contains the constant: projection returns it exactly
        let ones = DMatrix::from_element(6, 1, 1.0);
        let fs = FeatureSet::new(ones, w.clone(), Provenance::Custom).unwrap();
        let cst = constant_projection(&fs);
        assert!((cst - StateActionFn::from_element(6, 1.0)).amax() < 1e-12);

        // rank-one case: <u,1> u
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let raw = DMatrix::from_fn(6, 1, |_, _| rng.random::<f64>() - 0.3);
        let u = orthonormalize(&raw, &w, Provenance::Custom).unwrap();
        let ucol = u.column(0);
        let expected =
            crate::geometry::l2rho_inner(&ucol, &StateActionFn::from_element(6, 1.0), &w) * &ucol;
        assert!((constant_projection(&u) - expected).amax() < 1e-12);
    }

    #[test]
    fn subspace_distance_cases() {
        let (mdp, pi, w) = random_env(3, 2, 13);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        let a = optimal_features(&kern, 2).unwrap();
        assert!(subspace_distance(&a, &a).unwrap() < 1e-9);

        // rho-orthogonal spans: eigenvectors from disjoint parts of the
        // spectrum
        let spec = kernel_spectrum(&kern).unwrap();
        let top = spec.top_features(2, Provenance::Custom).unwrap();
        let bottom = spec.bottom_features(2, Provenance::Custom).unwrap();
        let angle = subspace_distance(&top, &bottom).unwrap();
        assert_relative_eq!(angle, std::f64::consts::FRAC_PI_2, epsilon = 1e-7);

        let b = optimal_features(&kern, 3).unwrap();
        assert!(subspace_distance(&a, &b).is_err());
    }

    #[test]
    fn cluster_boundary_snapping() {
        let vals = [3.0, 3.0, 3.0, 2.0, 1.0, 1.0];
        assert_eq!(cluster_boundary(&vals, 1, 1e-6), Some(3));
        assert_eq!(cluster_boundary(&vals, 4, 1e-6), Some(4));
        assert_eq!(cluster_boundary(&vals, 6, 1e-6), Some(4));
        let flat = [1.0; 4];
        assert_eq!(cluster_boundary(&flat, 2, 1e-6), None);
    }

    #[test]
    fn feature_json_round_trip() {
        let (mdp, pi, w) = random_env(3, 2, 14);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        let fs = optimal_features(&kern, 2).unwrap();
        let text = features_to_json(&fs).unwrap();
        let back = features_from_json(&text, &w).unwrap();
        assert_eq!(back.dim(), 2);
        assert!((back.columns() - fs.columns()).amax() < 1e-12);
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed["provenance"], "optimal");
        assert_eq!(parsed["d"], 2);
    }

    #[test]
    fn dimension_bounds_enforced() {
        let (mdp, pi, w) = random_env(2, 2, 15);
        let kern = build_kernel(&mdp, &pi, &w, 0.9).unwrap();
        assert!(optimal_features(&kern, 0).is_err());
        assert!(optimal_features(&kern, 5).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        assert!(baseline_features(BaselineKind::Random, &mdp, &pi, &w, 9, &mut rng).is_err());
    }

    #[test]
    fn inverse_laplacian_demotes_constant() {
        let (mdp, pi, w) = random_env(3, 2, 17);
        let spec = inverse_laplacian_spectrum(&mdp, &pi, &w).unwrap();
        assert_eq!(*spec.eigenvalues.last().unwrap(), f64::NEG_INFINITY);
        // all retained top features are rho-orthogonal to constants
        let fs = spec.top_features(3, Provenance::InverseLaplacian).unwrap();
        assert!(constant_projection(&fs).amax() < 1e-8);
    }
}
