//! Truncated Fock-space kernel.
//!
//! States and operators live on the number basis `|0>, ..., |D-1>`. Composite
//! field-mechanics states use field-major ordering: the basis vector
//! `|n>_field ⊗ |i>_mech` sits at index `n * dim_m + i`. Always go through
//! [`JointState::index`] rather than repeating that arithmetic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Largest tolerated deviation of `Σ|amp|²` (or `Tr ρ`) from one.
pub const NORM_TOLERANCE: f64 = 1e-9;
/// Largest tolerated `max |M - M†|` for matrices flagged Hermitian.
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
/// Default maximum probability mass a truncation may discard.
pub const DEFAULT_TRUNCATION_THRESHOLD: f64 = 1e-10;

const PURE_STATE_TOLERANCE: f64 = 1e-12;
const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Truncation dimension that keeps the tail of a distribution with the
/// given mean occupation negligible: `⌈n + 10√(n+1) + 10⌉`.
pub fn suggested_dim(mean_occupation: f64) -> usize {
    let n = mean_occupation.max(0.0);
    (n + 10.0 * (n + 1.0).sqrt() + 10.0).ceil() as usize
}

fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Pure state over a truncated number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockVector {
    amp: CVector,
}

impl FockVector {
    pub fn new(amp: CVector) -> Result<Self> {
        if amp.is_empty() {
            return Err(Error::InvalidArgument("Fock vector needs dim >= 1".into()));
        }
        Ok(Self { amp })
    }

    pub fn from_amplitudes(amp: Vec<Complex64>) -> Result<Self> {
        Self::new(CVector::from_vec(amp))
    }

    /// Number state `|n>` in dimension `dim`.
    pub fn basis(n: usize, dim: usize) -> Result<Self> {
        if n >= dim {
            return Err(Error::InvalidArgument(format!(
                "level {n} outside dimension {dim}"
            )));
        }
        let mut amp = CVector::zeros(dim);
        amp[n] = Complex64::new(1.0, 0.0);
        Self::new(amp)
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amp
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amp
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() < NORM_TOLERANCE
    }

    pub fn check_normalized(&self) -> Result<()> {
        if self.is_normalized() {
            Ok(())
        } else {
            Err(Error::Norm {
                norm: self.norm_sqr().sqrt(),
            })
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Norm { norm: n });
        }
        Ok(Self {
            amp: self.amp.unscale(n),
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &FockVector) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.amp.dotc(&other.amp))
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amp.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `<n^k>`.
    pub fn number_moment(&self, k: i32) -> f64 {
        self.amp
            .iter()
            .enumerate()
            .map(|(n, c)| c.norm_sqr() * (n as f64).powi(k))
            .sum()
    }

    pub fn mean_number(&self) -> f64 {
        self.number_moment(1)
    }

    pub fn apply(&self, op: &OperatorMatrix) -> Result<FockVector> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                found: self.dim(),
            });
        }
        Ok(Self {
            amp: op.matrix() * &self.amp,
        })
    }

    pub fn to_density(&self) -> FockDensity {
        FockDensity {
            mat: &self.amp * self.amp.adjoint(),
        }
    }
}

/// Coherent state `|α>` truncated to `dim` levels with the default threshold.
pub fn coherent_vector(alpha: Complex64, dim: usize) -> Result<FockVector> {
    coherent_vector_with_threshold(alpha, dim, DEFAULT_TRUNCATION_THRESHOLD)
}

/// Coherent state `|α>` truncated to `dim` levels. The kept amplitudes are
/// renormalised provided the discarded Poisson tail is below `threshold`.
pub fn coherent_vector_with_threshold(
    alpha: Complex64,
    dim: usize,
    threshold: f64,
) -> Result<FockVector> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    if !alpha.re.is_finite() || !alpha.im.is_finite() {
        return Err(Error::InvalidArgument("non-finite coherent amplitude".into()));
    }
    let r = alpha.norm();
    let mut mags = vec![0.0f64; dim];
    if r == 0.0 {
        mags[0] = 1.0;
    } else {
        // recurse outwards from the Poisson mode so nothing underflows for
        // large |α|²
        let mode = ((r * r).floor() as usize).min(dim - 1);
        let mut log_mode = -0.5 * r * r + mode as f64 * r.ln();
        for k in 1..=mode {
            log_mode -= 0.5 * (k as f64).ln();
        }
        mags[mode] = log_mode.exp();
        for n in mode + 1..dim {
            mags[n] = mags[n - 1] * r / (n as f64).sqrt();
        }
        for n in (0..mode).rev() {
            mags[n] = mags[n + 1] * ((n + 1) as f64).sqrt() / r;
        }
    }
    let kept: f64 = mags.iter().map(|m| m * m).sum();
    let deficit = 1.0 - kept;
    if deficit > threshold {
        return Err(Error::Truncation {
            deficit,
            threshold,
            dim,
        });
    }
    let scale = kept.sqrt();
    let theta = alpha.arg();
    let amp = mags
        .iter()
        .enumerate()
        .map(|(n, m)| Complex64::from_polar(m / scale, n as f64 * theta))
        .collect();
    FockVector::from_amplitudes(amp)
}

/// Density matrix over a truncated number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensity {
    mat: CMatrix,
}

impl FockDensity {
    /// Wraps `mat` after checking shape, Hermiticity and unit trace.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        let herm = max_abs_diff(&mat, &mat.adjoint());
        if herm > HERMITICITY_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "density matrix not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > NORM_TOLERANCE || tr.im.abs() > NORM_TOLERANCE {
            return Err(Error::Norm { norm: tr.re });
        }
        Ok(Self { mat })
    }

    /// Wraps `mat` without validation; for internal results whose
    /// invariants hold by construction.
    pub(crate) fn from_matrix_unchecked(mat: CMatrix) -> Self {
        Self { mat }
    }

    pub fn from_populations(pops: &[f64]) -> Result<Self> {
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            pops.len(),
            pops.iter().map(|p| Complex64::new(*p, 0.0)),
        ));
        Self::new(d)
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::from_populations(&vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.mat.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.mat[(n, n)].re).collect()
    }

    pub fn mean_number(&self) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: op.dim(),
                found: self.dim(),
            });
        }
        Ok((&self.mat * op.matrix()).trace())
    }

    /// `<a>` with the truncated annihilation operator.
    pub fn mean_annihilation(&self) -> Complex64 {
        (0..self.dim().saturating_sub(1))
            .map(|n| self.mat[(n + 1, n)] * ((n + 1) as f64).sqrt())
            .sum()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let e = hermitian_eigen(&self.mat)?;
        Ok(e.values.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// `U ρ U†`.
    pub fn conjugate_by(&self, u: &OperatorMatrix) -> Result<FockDensity> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: u.dim(),
                found: self.dim(),
            });
        }
        Ok(Self {
            mat: u.matrix() * &self.mat * u.matrix().adjoint(),
        })
    }

    /// The state vector when `ρ` is pure (up to rounding), recovered from
    /// the column with the largest population so no square roots of tiny
    /// eigenvalues are involved.
    pub fn pure_vector(&self) -> Option<FockVector> {
        let tr = self.trace().re;
        if (self.purity() - tr * tr).abs() > PURE_STATE_TOLERANCE {
            return None;
        }
        let (k, pk) = self
            .populations()
            .into_iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| {
                if p > acc.1 {
                    (i, p)
                } else {
                    acc
                }
            });
        if pk <= 0.0 {
            return None;
        }
        let col = self.mat.column(k).into_owned().unscale(pk.sqrt());
        FockVector::new(col).ok()
    }
}

/// Thermal state with mean occupation `nbar`, truncated to `dim` levels.
pub fn thermal_density(nbar: f64, dim: usize) -> Result<FockDensity> {
    thermal_density_with_threshold(nbar, dim, DEFAULT_TRUNCATION_THRESHOLD)
}

pub fn thermal_density_with_threshold(nbar: f64, dim: usize, threshold: f64) -> Result<FockDensity> {
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(Error::InvalidArgument(format!("nbar must be >= 0, got {nbar}")));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    let q = nbar / (1.0 + nbar);
    let deficit = q.powi(dim as i32);
    if deficit > threshold {
        return Err(Error::Truncation {
            deficit,
            threshold,
            dim,
        });
    }
    let mut pops: Vec<f64> = (0..dim).map(|n| (1.0 - q) * q.powi(n as i32)).collect();
    let total: f64 = pops.iter().sum();
    for p in pops.iter_mut() {
        *p /= total;
    }
    FockDensity::from_populations(&pops)
}

/// Square complex matrix acting on a truncated number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    mat: CMatrix,
    hermitian: bool,
}

impl OperatorMatrix {
    /// Wraps `mat`; when `hermitian` is set the matrix is checked against
    /// [`HERMITICITY_TOLERANCE`].
    pub fn new(mat: CMatrix, hermitian: bool) -> Result<Self> {
        if !mat.is_square() || mat.nrows() == 0 {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        if hermitian {
            let dev = max_abs_diff(&mat, &mat.adjoint());
            if dev > HERMITICITY_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "operator flagged Hermitian deviates by {dev:.3e}"
                )));
            }
        }
        Ok(Self { mat, hermitian })
    }

    pub(crate) fn general(mat: CMatrix) -> Self {
        Self {
            mat,
            hermitian: false,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mat: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        Self {
            mat: self.mat.adjoint(),
            hermitian: self.hermitian,
        }
    }

    /// Leading `dim × dim` block.
    pub fn cropped(&self, dim: usize) -> OperatorMatrix {
        Self {
            mat: self.mat.view((0, 0), (dim, dim)).into_owned(),
            hermitian: self.hermitian,
        }
    }

    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> f64 {
        max_abs_diff(&self.mat, &other.mat)
    }
}

/// Truncated ladder, quadrature and number operators.
#[derive(Debug, Clone)]
pub struct Ladder {
    pub a: OperatorMatrix,
    pub x: OperatorMatrix,
    pub p: OperatorMatrix,
    pub n: OperatorMatrix,
}

/// `a`, `x = (a† + a)/√2`, `p = i(a† − a)/√2` and `n = a†a` in dimension `dim`.
pub fn ladder_operators(dim: usize) -> Result<Ladder> {
    if dim < 2 {
        return Err(Error::InvalidArgument("ladder operators need dim >= 2".into()));
    }
    let a = annihilation_matrix(dim);
    let ad = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&ad + &a) * Complex64::new(s, 0.0);
    let p = (&ad - &a) * Complex64::new(0.0, s);
    let n = CMatrix::from_diagonal(&CVector::from_iterator(
        dim,
        (0..dim).map(|k| Complex64::new(k as f64, 0.0)),
    ));
    Ok(Ladder {
        a: OperatorMatrix::general(a),
        x: OperatorMatrix { mat: x, hermitian: true },
        p: OperatorMatrix { mat: p, hermitian: true },
        n: OperatorMatrix { mat: n, hermitian: true },
    })
}

pub(crate) fn annihilation_matrix(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for k in 1..dim {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Field ⊗ mechanics density matrix, field-major ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    dim_c: usize,
    dim_m: usize,
    mat: CMatrix,
}

impl JointState {
    pub fn new(dim_c: usize, dim_m: usize, mat: CMatrix) -> Result<Self> {
        let d = dim_c * dim_m;
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: mat.nrows(),
            });
        }
        Ok(Self { dim_c, dim_m, mat })
    }

    /// Position of `|n>_field ⊗ |i>_mech` in the composite basis.
    #[inline]
    pub fn index(&self, n: usize, i: usize) -> usize {
        n * self.dim_m + i
    }

    pub fn dim_c(&self) -> usize {
        self.dim_c
    }

    pub fn dim_m(&self) -> usize {
        self.dim_m
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn trace(&self) -> Complex64 {
        self.mat.trace()
    }

    /// Mechanics block `<n|ρ|m>_field`.
    pub fn block(&self, n: usize, m: usize) -> CMatrix {
        self.mat
            .view((n * self.dim_m, m * self.dim_m), (self.dim_m, self.dim_m))
            .into_owned()
    }

    pub(crate) fn set_block(&mut self, n: usize, m: usize, block: &CMatrix) {
        let (r, c) = (n * self.dim_m, m * self.dim_m);
        self.mat
            .view_mut((r, c), (self.dim_m, self.dim_m))
            .copy_from(block);
    }

    pub fn zeros(dim_c: usize, dim_m: usize) -> Self {
        let d = dim_c * dim_m;
        Self {
            dim_c,
            dim_m,
            mat: CMatrix::zeros(d, d),
        }
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let e = hermitian_eigen(&self.mat)?;
        Ok(e.values.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

/// `ρ_field ⊗ ρ_mech`.
pub fn tensor(field: &FockDensity, mech: &FockDensity) -> JointState {
    let mat = field.matrix().kronecker(mech.matrix());
    JointState {
        dim_c: field.dim(),
        dim_m: mech.dim(),
        mat,
    }
}

/// Reduced field state `Tr_mech ρ`.
pub fn partial_trace_mech(joint: &JointState) -> FockDensity {
    let dc = joint.dim_c;
    let mut out = CMatrix::zeros(dc, dc);
    for n in 0..dc {
        for m in 0..dc {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..joint.dim_m {
                acc += joint.mat[(joint.index(n, i), joint.index(m, i))];
            }
            out[(n, m)] = acc;
        }
    }
    FockDensity::from_matrix_unchecked(out)
}

/// Reduced mechanics state `Tr_field ρ`.
pub fn partial_trace_field(joint: &JointState) -> FockDensity {
    let dm = joint.dim_m;
    let mut out = CMatrix::zeros(dm, dm);
    for n in 0..joint.dim_c {
        let r = n * dm;
        out += joint.mat.view((r, r), (dm, dm));
    }
    FockDensity::from_matrix_unchecked(out)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `V f(Λ) V†` for a complex function of the eigenvalues.
    pub fn apply_fn<F: Fn(f64) -> Complex64>(&self, f: F) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for (k, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[k]);
        }
        scaled * self.vectors.adjoint()
    }

    /// `exp(−i H t)`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        self.apply_fn(|e| Complex64::from_polar(1.0, -e * t))
    }
}

pub fn hermitian_eigen(mat: &CMatrix) -> Result<HermitianEigen> {
    let sym = (mat + mat.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::try_new(sym, EIGEN_EPS, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::EigenFailure(format!("no convergence at dim {}", mat.nrows())))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    Ok(HermitianEigen { values, vectors })
}

/// `exp(−i H t)` through the eigen-decomposition of `H`.
pub fn unitary_from_hermitian(h: &OperatorMatrix, t: f64) -> Result<OperatorMatrix> {
    if !h.is_hermitian() {
        return Err(Error::InvalidArgument(
            "unitary_from_hermitian needs an operator flagged Hermitian".into(),
        ));
    }
    let eig = hermitian_eigen(h.matrix())?;
    Ok(OperatorMatrix::general(eig.propagator(t)))
}

/// `Tr ρ²`.
pub fn purity(rho: &FockDensity) -> f64 {
    rho.purity()
}

/// Uhlmann fidelity `(Tr √(√σ ρ √σ))²`, reducing to `<ψ|ρ|ψ>` when either
/// argument is pure.
pub fn fidelity(rho: &FockDensity, sigma: &FockDensity) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    if let Some(psi) = sigma.pure_vector() {
        return fidelity_with_pure(&psi, rho);
    }
    if let Some(psi) = rho.pure_vector() {
        return fidelity_with_pure(&psi, sigma);
    }
    let es = hermitian_eigen(sigma.matrix())?;
    let sqrt_sigma = es.apply_fn(|e| Complex64::new(e.max(0.0).sqrt(), 0.0));
    let inner = &sqrt_sigma * rho.matrix() * &sqrt_sigma;
    let ei = hermitian_eigen(&inner)?;
    let s: f64 = ei.values.iter().map(|v| v.max(0.0).sqrt()).sum();
    Ok((s * s).clamp(0.0, 1.0))
}

/// `<ψ|ρ|ψ>`.
pub fn fidelity_with_pure(psi: &FockVector, rho: &FockDensity) -> Result<f64> {
    if psi.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: psi.dim(),
        });
    }
    let v = psi.amplitudes();
    let f = v.dotc(&(rho.matrix() * v)).re;
    Ok(f.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_coherent_state() {
        let v = coherent_vector(c(0.0, 0.0), 5).unwrap();
        assert_eq!(v.amplitudes()[0], c(1.0, 0.0));
        for n in 1..5 {
            assert_eq!(v.amplitudes()[n], c(0.0, 0.0));
        }
    }

    #[test]
    fn coherent_poisson_mean() {
        let v = coherent_vector(c(2.0, 0.0), suggested_dim(4.0)).unwrap();
        assert!((v.mean_number() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn coherent_truncation_error() {
        // deficit = 1 - e^{-1}(1 + 1) ≈ 0.2642
        match coherent_vector(c(1.0, 0.0), 2) {
            Err(Error::Truncation { deficit, .. }) => {
                assert!((deficit - (1.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-12)
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn coherent_large_amplitude_does_not_underflow() {
        let v = coherent_vector(c(40.0, 0.0), suggested_dim(1600.0)).unwrap();
        assert!(v.is_normalized());
        assert!((v.mean_number() - 1600.0).abs() < 1e-6);
    }

    #[test]
    fn thermal_examples() {
        let t = thermal_density(0.0, 4).unwrap();
        assert_eq!(t.populations(), vec![1.0, 0.0, 0.0, 0.0]);
        let t = thermal_density(0.5, 60).unwrap();
        assert!((t.trace().re - 1.0).abs() < 1e-12);
        assert!((t.mean_number() - 0.5).abs() < 1e-10);
        let t = thermal_density(1.0, 40).unwrap();
        let p = t.populations();
        assert!((p[0] - 0.5).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
        assert!(thermal_density(1.0, 5).is_err());
        assert!(thermal_density(-1.0, 5).is_err());
    }

    #[test]
    fn canonical_commutator_on_interior() {
        let d = 12;
        let l = ladder_operators(d).unwrap();
        let comm = l.x.matrix() * l.p.matrix() - l.p.matrix() * l.x.matrix();
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                let expect = if i == j { c(0.0, 1.0) } else { c(0.0, 0.0) };
                assert!((comm[(i, j)] - expect).norm() < 1e-12);
            }
        }
        for k in 0..d {
            assert_eq!(l.n.matrix()[(k, k)], c(k as f64, 0.0));
        }
    }

    #[test]
    fn annihilation_on_coherent_state() {
        let d = 40;
        let alpha = c(1.2, -0.7);
        let v = coherent_vector(alpha, d).unwrap();
        let l = ladder_operators(d).unwrap();
        let av = v.apply(&l.a).unwrap();
        for n in 0..d - 1 {
            assert!((av.amplitudes()[n] - alpha * v.amplitudes()[n]).norm() < 1e-10);
        }
    }

    #[test]
    fn partial_trace_examples() {
        let rho = coherent_vector(c(0.5, 0.2), 12).unwrap().to_density();
        let nu = thermal_density(0.3, 30).unwrap();
        let j = tensor(&rho, &nu);
        let back = partial_trace_mech(&j);
        assert!((back.matrix() - rho.matrix()).camax() < 1e-14);
        assert!((j.trace() - back.trace()).norm() < 1e-12);

        // (|00> + |11>)/√2
        let mut bell = CMatrix::zeros(4, 4);
        let s = 0.5;
        for &(r, cc) in &[(0, 0), (0, 3), (3, 0), (3, 3)] {
            bell[(r, cc)] = c(s, 0.0);
        }
        let j = JointState::new(2, 2, bell).unwrap();
        let red = partial_trace_mech(&j);
        let mm = FockDensity::maximally_mixed(2).unwrap();
        assert!((red.matrix() - mm.matrix()).camax() < 1e-15);
        assert!(JointState::new(2, 3, CMatrix::zeros(4, 4)).is_err());
    }

    #[test]
    fn unitary_examples() {
        let l = ladder_operators(8).unwrap();
        let u0 = unitary_from_hermitian(&l.n, 0.0).unwrap();
        assert!(u0.max_abs_diff(&OperatorMatrix::identity(8)) < 1e-12);
        let upi = unitary_from_hermitian(&l.n, std::f64::consts::PI).unwrap();
        let twice = upi.matrix() * upi.matrix();
        let u2pi = unitary_from_hermitian(&l.n, 2.0 * std::f64::consts::PI).unwrap();
        assert!((twice - u2pi.matrix()).camax() < 1e-10);
        assert!(u2pi.max_abs_diff(&OperatorMatrix::identity(8)) < 1e-10);
        assert!(unitary_from_hermitian(&l.a, 1.0).is_err());
    }

    #[test]
    fn fidelity_and_purity_examples() {
        let zero = FockVector::basis(0, 2).unwrap().to_density();
        let one = FockVector::basis(1, 2).unwrap().to_density();
        let mm = FockDensity::maximally_mixed(2).unwrap();
        assert_eq!(purity(&zero), 1.0);
        assert!((purity(&mm) - 0.5).abs() < 1e-15);
        assert!((fidelity(&zero, &zero).unwrap() - 1.0).abs() < 1e-14);
        assert!(fidelity(&zero, &one).unwrap().abs() < 1e-14);
        assert!((fidelity(&mm, &mm).unwrap() - 1.0).abs() < 1e-12);
        let t = thermal_density(0.7, 40).unwrap();
        assert!((fidelity(&t, &t).unwrap() - 1.0).abs() < 1e-9);
        assert!(fidelity(&zero, &thermal_density(0.1, 30).unwrap()).is_err());
    }

    #[test]
    fn pure_vector_roundtrip() {
        let v = coherent_vector(c(1.0, 1.0), 25).unwrap();
        let back = v.to_density().pure_vector().unwrap();
        let ov = v.inner(&back).unwrap().norm();
        assert!((ov - 1.0).abs() < 1e-14);
        assert!(FockDensity::maximally_mixed(3).unwrap().pure_vector().is_none());
    }
}
