//! Seeded random streams and multivariate Gaussian sampling.
//!
//! All randomness goes through ChaCha8 generators. A stream is identified by
//! `(seed, replication, purpose)`: the 64-bit seed is the ChaCha key and
//! `replication * 8 + purpose` selects the ChaCha stream, so replications can
//! be generated in any order (or in parallel) and still be reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::{symmetric_sqrt, Matrix, Vector};

/// What a random stream is used for. Keeping purposes apart means that e.g.
/// enabling contamination never perturbs the ideal noise draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Noise = 0,
    Contamination = 1,
    InitialState = 2,
    Calibration = 3,
    Auxiliary = 4,
}

pub fn stream_rng(seed: u64, replication: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication.wrapping_mul(8).wrapping_add(purpose as u64));
    rng
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vector {
    Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Draws from `N(mean, cov)` through the symmetric square root of `cov`, so
/// singular covariances are fine.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: Vector,
    root: Matrix,
    degenerate: bool,
}

impl Gaussian {
    pub fn new(mean: Vector, cov: &Matrix) -> Result<Self> {
        crate::error::dim_check(cov.shape() == (mean.len(), mean.len()), || {
            format!("covariance {:?} for mean of length {}", cov.shape(), mean.len())
        })?;
        let root = symmetric_sqrt(cov)?;
        let degenerate = root.iter().all(|v| *v == 0.0);
        Ok(Self {
            mean,
            root,
            degenerate,
        })
    }

    pub fn centered(cov: &Matrix) -> Result<Self> {
        Self::new(Vector::zeros(cov.nrows()), cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn root(&self) -> &Matrix {
        &self.root
    }

    /// Always consumes `dim` standard normals, even for a degenerate
    /// distribution, so that streams stay aligned across models.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let z = standard_normal_vec(rng, self.dim());
        if self.degenerate {
            self.mean.clone()
        } else {
            &self.mean + &self.root * z
        }
    }
}
