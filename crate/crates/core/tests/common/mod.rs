//! Shared helpers: random linear models and the batch best-linear-predictor
//! oracle.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use robust_kalman::linalg::pinv_with_projector;
use robust_kalman::{LinearSsm, Matrix, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_fn(r, c, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `L Lᵀ` with `L` of size `n × rank`; `rank = 0` gives the zero matrix.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> Matrix {
    if rank == 0 {
        return Matrix::zeros(n, n);
    }
    let l = normal_matrix(rng, n, rank, 1.0);
    &l * l.transpose()
}

/// Random time-invariant model with `p, q ≤ 3`. Roughly a third of the
/// models get a rank-deficient `Z`, and `Q`, `V`, `Q0` have random rank.
pub fn random_model(rng: &mut ChaCha8Rng) -> LinearSsm {
    let p = rng.random_range(1..=3);
    let q = rng.random_range(1..=3);
    let f = normal_matrix(rng, p, p, 0.6);
    let mut z = normal_matrix(rng, q, p, 1.0);
    if rng.random::<f64>() < 0.35 {
        if q >= 2 {
            let row = z.row(0) * 2.0;
            z.set_row(1, &row);
        } else {
            z.set_column(0, &Vector::zeros(q));
        }
    }
    let q_cov = { let k = rng.random_range(0..=p); random_psd(rng, p, k) };
    let v_cov = { let k = rng.random_range(0..=q); random_psd(rng, q, k) };
    let q0 = { let k = rng.random_range(1..=p); random_psd(rng, p, k) };
    let a0 = Vector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
    LinearSsm::new(f, z, q_cov, v_cov, a0, q0).expect("valid random model")
}

/// Symmetric square root of a PSD matrix via its eigen-decomposition.
/// Eigenvalues at roundoff level count as zero, so `L Lᵀ` has the numerical
/// rank of the input.
fn sqrt_psd(s: &Matrix) -> Matrix {
    let eig = s.clone().symmetric_eigen();
    let floor = f64::EPSILON * s.nrows() as f64 * eig.eigenvalues.amax();
    let roots = eig.eigenvalues.map(|l| if l <= floor { 0.0 } else { l.sqrt() });
    &eig.eigenvectors * Matrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Best linear predictors `E[X_t | Y_1..Y_s]` for every `t` and fixed `s`.
///
/// Every state and observation is written as a linear map of one vector `w`
/// of independent standard normals (`X_0`, each `v_t` and each `e_t`), so
/// `Cov(X, Y) Cov(Y)⁻ = G_x G_y⁺` and the conditional covariance is
/// `G_x (I - G_y⁺ G_y) G_xᵀ`.
pub struct BatchOracle {
    means: Vec<Vector>,
    /// `gx[t]` maps `w` to `X_t - E X_t` for `t = 0..=T`.
    gx: Vec<Matrix>,
    /// `gy[t - 1]` maps `w` to `Y_t - E Y_t`.
    gy: Vec<Matrix>,
    z: Matrix,
}

impl BatchOracle {
    pub fn new(m: &LinearSsm, horizon: usize) -> Self {
        let f = m.f(1).unwrap();
        let z = m.z(1).unwrap();
        let (p, q) = (m.a0.len(), z.nrows());
        let dim = p + horizon * (p + q);
        let sq = sqrt_psd(&m.q(1).unwrap());
        let sv = sqrt_psd(&m.v(1).unwrap());
        let mut means = vec![m.a0.clone()];
        let mut g = Matrix::zeros(p, dim);
        g.columns_mut(0, p).copy_from(&sqrt_psd(&m.q0));
        let mut gx = vec![g];
        let mut gy = Vec::new();
        for t in 1..=horizon {
            means.push(&f * &means[t - 1]);
            let mut g = &f * &gx[t - 1];
            g.columns_mut(p + (t - 1) * p, p).copy_from(&sq);
            let mut h = &z * &g;
            h.columns_mut(p + horizon * p + (t - 1) * q, q).copy_from(&sv);
            gx.push(g);
            gy.push(h);
        }
        Self { means, gx, gy, z }
    }

    /// `(E[X_t | Y_1..Y_s], Cov(X_t | Y_1..Y_s))` for `t = 0..=T`.
    pub fn predict(&self, ys: &[Vector], s: usize) -> Vec<(Vector, Matrix)> {
        let q = self.z.nrows();
        let dim = self.gx[0].ncols();
        let mut g_y = Matrix::zeros(q * s, dim);
        let mut dy = Vector::zeros(q * s);
        for i in 1..=s {
            g_y.rows_mut((i - 1) * q, q).copy_from(&self.gy[i - 1]);
            let r = &ys[i - 1] - &self.z * &self.means[i];
            dy.rows_mut((i - 1) * q, q).copy_from(&r);
        }
        // The projector comes from the singular vectors; `G⁺G` formed as a
        // product loses accuracy with the conditioning of `G_y`.
        let (g_pinv, g_proj) = pinv_with_projector(&g_y).unwrap();
        let w_hat = &g_pinv * &dy;
        let resid = Matrix::identity(dim, dim) - g_proj;
        (0..self.means.len())
            .map(|t| {
                let x = &self.means[t] + &self.gx[t] * &w_hat;
                let cov = &self.gx[t] * &resid * self.gx[t].transpose();
                (x, cov)
            })
            .collect()
    }
}

/// Largest elementwise difference between two vectors.
pub fn max_diff(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}
