//! Small dense linear-algebra primitives used by the filter recursions.
//!
//! Everything here works on `nalgebra` dynamic matrices. The routines are
//! tailored to the sizes that occur in state-space work (a handful of rows),
//! and all of them accept singular or rank-deficient inputs: covariances in
//! practical models are routinely only positive *semi*-definite.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{dim_check, Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff used by [`pseudo_inverse`] unless told otherwise.
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Relative eigenvalue slack tolerated before a matrix is rejected as not PSD.
pub const PSD_TOL: f64 = 1e-10;

/// Roundoff on a numerically zero matrix has no scale to be relative to.
const PSD_ABS_SLACK: f64 = 1e-13;

fn psd_slack(lambda_scale: f64) -> f64 {
    (PSD_TOL * lambda_scale).max(PSD_ABS_SLACK)
}

const SYMMETRY_TOL: f64 = 1e-8;

fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Moore–Penrose pseudoinverse.
///
/// Singular values below `tol * s_max` are treated as zero.
pub fn pseudo_inverse(m: &Matrix, tol: f64) -> Result<Matrix> {
    Ok(pinv_parts(m, tol, 0.0)?.0)
}

/// `M⁺` together with the orthogonal projector `M⁺M` onto the row space of
/// `M`. The projector is assembled from the right singular vectors, which
/// keeps it accurate when `M` is badly conditioned.
pub fn pinv_with_projector(m: &Matrix) -> Result<(Matrix, Matrix)> {
    pinv_parts(m, DEFAULT_PINV_TOL, 0.0)
}

/// [`pinv_with_projector`] that also treats singular values at roundoff
/// level relative to `scale`, the size of the inputs `m` was computed from,
/// as zero.
pub fn pinv_with_projector_scaled(m: &Matrix, scale: f64) -> Result<(Matrix, Matrix)> {
    let n = m.nrows().max(m.ncols()) as f64;
    pinv_parts(m, DEFAULT_PINV_TOL, FACTOR_FLOOR * f64::EPSILON * n * scale)
}

fn pinv_parts(m: &Matrix, tol: f64, abs_cutoff: f64) -> Result<(Matrix, Matrix)> {
    check_finite(m, "matrix")?;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "pseudoinverse tolerance must lie in (0, 1), got {tol}"
        )));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok((Matrix::zeros(cols, rows), Matrix::zeros(cols, cols)));
    }
    // nalgebra's SVD occasionally fails to reconstruct rank-deficient
    // inputs, so the decomposition comes from faer.
    let a = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("singular value decomposition failed: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let sv = svd.S().column_vector();
    let k = rows.min(cols);
    let s_max = (0..k).map(|i| sv[i]).fold(0.0_f64, f64::max);
    let cutoff = (tol * s_max).max(abs_cutoff);

    let mut out = Matrix::zeros(cols, rows);
    let mut proj = Matrix::zeros(cols, cols);
    for idx in 0..k {
        let s = sv[idx];
        if s > cutoff && s > 0.0 {
            for c in 0..rows {
                let uc = u[(c, idx)] / s;
                for r in 0..cols {
                    out[(r, c)] += v[(r, idx)] * uc;
                }
            }
            for c in 0..cols {
                let vc = v[(c, idx)];
                for r in 0..cols {
                    proj[(r, c)] += v[(r, idx)] * vc;
                }
            }
        }
    }
    Ok((out, proj))
}

/// [`pseudo_inverse`] with the default cutoff.
pub fn pinv(m: &Matrix) -> Result<Matrix> {
    pseudo_inverse(m, DEFAULT_PINV_TOL)
}

/// Symmetric eigen-decomposition of a matrix that must be PSD up to [`PSD_TOL`].
///
/// Returns eigenvalues with the tolerated negative roundoff clamped to zero.
fn psd_eigen(s: &Matrix, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    check_finite(s, what)?;
    if !s.is_square() {
        return Err(Error::DimensionMismatch(format!("{what} must be square")));
    }
    let scale = s.amax();
    if (s - s.transpose()).amax() > SYMMETRY_TOL * (1.0 + scale) {
        return Err(Error::InvalidModel(format!("{what} is not symmetric")));
    }
    let mut eig = symmetrize(s).symmetric_eigen();
    let lambda_scale = eig.eigenvalues.amax();
    for l in eig.eigenvalues.iter_mut() {
        if *l < 0.0 {
            if *l < -psd_slack(lambda_scale) {
                return Err(Error::InvalidModel(format!(
                    "{what} is not positive semi-definite (eigenvalue {l:e})"
                )));
            }
            *l = 0.0;
        }
    }
    Ok(eig)
}

/// Validate that `s` is symmetric PSD within tolerance.
pub fn check_psd(s: &Matrix, what: &str) -> Result<()> {
    psd_eigen(s, what).map(|_| ())
}

/// Symmetrize and, if needed, clamp tiny negative eigenvalues to zero.
///
/// Matrices that are already PSD come back symmetrized but otherwise untouched.
pub fn clamp_psd(s: &Matrix) -> Result<Matrix> {
    clamp_psd_scaled(s, 0.0)
}

/// [`clamp_psd`] for a matrix obtained by cancellation from inputs of
/// magnitude `scale`; roundoff up to that scale is tolerated.
pub fn clamp_psd_scaled(s: &Matrix, scale: f64) -> Result<Matrix> {
    let sym = symmetrize(s);
    let eig = sym.clone().symmetric_eigen();
    let lambda_scale = eig.eigenvalues.amax().max(scale);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= 0.0 || sym.is_empty() {
        return Ok(sym);
    }
    if min < -psd_slack(lambda_scale) {
        return Err(Error::Numerical(format!(
            "covariance lost positive semi-definiteness (eigenvalue {min:e})"
        )));
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * Matrix::from_diagonal(&clamped) * q.transpose())))
}

/// Symmetric square root `R` of a PSD matrix, so that `R·R = S`.
pub fn symmetric_sqrt(s: &Matrix) -> Result<Matrix> {
    let eig = psd_eigen(s, "matrix")?;
    let lambda_max = eig.eigenvalues.amax();
    let roots = eig.eigenvalues.map(|l| {
        if l <= PSD_TOL * lambda_max * 1e-2 {
            0.0
        } else {
            l.sqrt()
        }
    });
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * Matrix::from_diagonal(&roots) * q.transpose())))
}

/// Factor `L` with `L·Lᵀ = S` for a PSD matrix. Eigenvalues within
/// roundoff of zero (`n·ε·λ_max`) are dropped, so `L` has the numerical rank
/// of `S`.
pub fn psd_factor(s: &Matrix) -> Result<Matrix> {
    let eig = psd_eigen(s, "matrix")?;
    let floor = f64::EPSILON * s.nrows() as f64 * eig.eigenvalues.amax();
    let roots = eig.eigenvalues.map(|l| if l <= floor { 0.0 } else { l.sqrt() });
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&roots))
}

/// Singular values of a factor at or below this multiple of `n·ε` times the
/// scale of its inputs are roundoff and get dropped.
const FACTOR_FLOOR: f64 = 8.0;

/// Square `n × n` factor with the same `W Wᵀ` as an `n × k` matrix `W`.
pub fn compress_factor(w: &Matrix) -> Result<Matrix> {
    Ok(compress_factor_with_basis(w, 0.0)?.0)
}

/// [`compress_factor`] together with the `k × n` matrix `Q` with orthonormal
/// (or zero) columns for which the factor equals `W Q`. `scale` is the size
/// of the quantities `W` was computed from; directions of `W` below
/// roundoff relative to it are dropped. With `scale = 0` only exact zeros
/// are.
pub fn compress_factor_with_basis(w: &Matrix, scale: f64) -> Result<(Matrix, Matrix)> {
    check_finite(w, "factor")?;
    let (n, k) = w.shape();
    let mut out = Matrix::zeros(n, n);
    let mut basis = Matrix::zeros(k, n);
    if k == 0 || n == 0 {
        return Ok((out, basis));
    }
    let a = faer::Mat::<f64>::from_fn(n, k, |i, j| w[(i, j)]);
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("singular value decomposition failed: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let sv = svd.S().column_vector();
    let m = n.min(k);
    let floor = FACTOR_FLOOR * f64::EPSILON * n.max(k) as f64 * scale;
    for idx in 0..m {
        let s = sv[idx];
        if s <= floor {
            continue;
        }
        for r in 0..n {
            out[(r, idx)] = u[(r, idx)] * s;
        }
        for r in 0..k {
            basis[(r, idx)] = v[(r, idx)];
        }
    }
    Ok((out, basis))
}

/// `L Lᵀ`, symmetrized.
pub fn factor_product(l: &Matrix) -> Matrix {
    symmetrize(&(l * l.transpose()))
}

/// Seminorm `‖x‖²_D = xᵀ D⁻ x` generated by a PSD matrix `D`.
#[derive(Debug, Clone)]
pub struct SemiNorm {
    d: Matrix,
    d_minus: Matrix,
}

impl SemiNorm {
    pub fn new(d: Matrix) -> Result<Self> {
        check_psd(&d, "seminorm generator")?;
        let d = symmetrize(&d);
        let d_minus = symmetrize(&pinv(&d)?);
        Ok(Self { d, d_minus })
    }

    /// Build from `D⁻` directly, which is how the observable-part seminorm is
    /// naturally expressed.
    pub fn from_inverse(d_minus: Matrix) -> Result<Self> {
        check_psd(&d_minus, "seminorm inverse")?;
        let d_minus = symmetrize(&d_minus);
        let d = symmetrize(&pinv(&d_minus)?);
        Ok(Self { d, d_minus })
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    pub fn generator(&self) -> &Matrix {
        &self.d
    }

    pub fn inverse(&self) -> &Matrix {
        &self.d_minus
    }

    pub fn norm_sq(&self, x: &Vector) -> Result<f64> {
        semi_norm_sq(x, self)
    }
}

/// `xᵀ D⁻ x`, with roundoff below zero clamped.
pub fn semi_norm_sq(x: &Vector, sn: &SemiNorm) -> Result<f64> {
    dim_check(x.len() == sn.dim(), || {
        format!("vector of length {} against {}-dim seminorm", x.len(), sn.dim())
    })?;
    let v = x.dot(&(&sn.d_minus * x));
    Ok(if v < 0.0 { 0.0 } else { v })
}

/// Norm in which a Huber clip measures its argument.
#[derive(Debug, Clone, Copy)]
pub enum ClipNorm<'a> {
    Euclidean,
    Mahalanobis(&'a SemiNorm),
}

impl ClipNorm<'_> {
    pub fn norm(&self, x: &Vector) -> Result<f64> {
        match self {
            ClipNorm::Euclidean => Ok(x.norm()),
            ClipNorm::Mahalanobis(sn) => Ok(semi_norm_sq(x, sn)?.sqrt()),
        }
    }
}

/// Huber clipping `H_b(x) = x · min(1, b / ‖x‖)`.
///
/// `b = f64::INFINITY` disables the clip.
pub fn huber_clip(x: &Vector, b: f64, norm: ClipNorm<'_>) -> Result<Vector> {
    Ok(huber_clip_flagged(x, b, norm)?.0)
}

/// Like [`huber_clip`], also reporting whether the clip was active.
pub fn huber_clip_flagged(x: &Vector, b: f64, norm: ClipNorm<'_>) -> Result<(Vector, bool)> {
    let (w, clipped) = huber_weight(x, b, norm)?;
    Ok((if clipped { x * w } else { x.clone() }, clipped))
}

/// The factor `min(1, b / ‖x‖)` of a Huber clip and whether it is below one.
pub fn huber_weight(x: &Vector, b: f64, norm: ClipNorm<'_>) -> Result<(f64, bool)> {
    if b.is_nan() || b <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "clipping height must be positive, got {b}"
        )));
    }
    let n = norm.norm(x)?;
    if n <= b || n == 0.0 {
        Ok((1.0, false))
    } else {
        Ok((b / n, true))
    }
}

/// The generalized inverse `Z^Σ = Σ Zᵀ (Z Σ Zᵀ)⁻` together with the
/// projector `π = Z Z^Σ` and its complement.
#[derive(Debug, Clone)]
pub struct GenInvBundle {
    pub zsigma: Matrix,
    pub proj: Matrix,
    pub proj_bar: Matrix,
    /// `B⁻ = (Z Σ Zᵀ)⁻`, kept because the observable-part seminorm needs it.
    pub b_minus: Matrix,
}

pub fn gen_inverse_bundle(z: &Matrix, sigma: &Matrix, tol: f64) -> Result<GenInvBundle> {
    let (q, p) = z.shape();
    dim_check(sigma.shape() == (p, p), || {
        format!("Sigma is {:?}, expected {p}x{p}", sigma.shape())
    })?;
    check_finite(z, "Z")?;
    check_psd(sigma, "Sigma")?;
    let sigma = symmetrize(sigma);
    let sz_t = &sigma * z.transpose();
    let b = symmetrize(&(z * &sz_t));
    let b_minus = pseudo_inverse(&b, tol)?;
    let zsigma = &sz_t * &b_minus;
    let proj = z * &zsigma;
    let proj_bar = Matrix::identity(q, q) - &proj;
    Ok(GenInvBundle {
        zsigma,
        proj,
        proj_bar,
        b_minus,
    })
}

impl GenInvBundle {
    /// The seminorm in state space that ignores directions invisible to `Z`:
    /// `D⁻ = (Z^Σ Z)ᵀ Σ⁻ (Z^Σ Z)`.
    pub fn observable_semi_norm(&self, z: &Matrix, sigma: &Matrix) -> Result<SemiNorm> {
        let zz = &self.zsigma * z;
        let sigma_minus = pinv(&symmetrize(sigma))?;
        SemiNorm::from_inverse(symmetrize(&(zz.transpose() * sigma_minus * &zz)))
    }
}
