use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// N paired samples; `xs` is N × d_x and `ys` is N × d_y.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    xs: Matrix,
    ys: Matrix,
}

impl SampleBatch {
    pub fn new(xs: Matrix, ys: Matrix) -> Result<Self> {
        if xs.rows() != ys.rows() {
            return Err(Error::mismatch("paired sample count", xs.rows(), ys.rows()));
        }
        if xs.rows() == 0 {
            return Err(Error::invalid("sample batch needs at least one pair"));
        }
        if !xs.is_finite() || !ys.is_finite() {
            return Err(Error::NonFinite("sample batch entry".into()));
        }
        Ok(SampleBatch { xs, ys })
    }

    /// Scalar pairs as two N × 1 columns.
    pub fn from_scalars(xs: &[f64], ys: &[f64]) -> Result<Self> {
        Self::new(
            Matrix::from_vec(xs.len(), 1, xs.to_vec())?,
            Matrix::from_vec(ys.len(), 1, ys.to_vec())?,
        )
    }

    pub fn len(&self) -> usize {
        self.xs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.rows() == 0
    }

    pub fn xs(&self) -> &Matrix {
        &self.xs
    }

    pub fn ys(&self) -> &Matrix {
        &self.ys
    }
}

/// Analytic MI of a standard bivariate normal with correlation `rho`, nats.
pub fn gaussian_mi(rho: f64) -> f64 {
    -0.5 * (1.0 - rho * rho).ln()
}

/// n pairs from a standard bivariate normal with correlation `rho`.
pub fn gaussian_pair_sampler(rho: f64, n: usize, seed: u64) -> Result<SampleBatch> {
    if !(rho.abs() < 1.0) {
        return Err(Error::invalid(format!("|rho| must be < 1, got {rho}")));
    }
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (1.0 - rho * rho).sqrt();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = StandardNormal.sample(&mut rng);
        let v: f64 = StandardNormal.sample(&mut rng);
        xs.push(u);
        ys.push(rho * u + c * v);
    }
    SampleBatch::from_scalars(&xs, &ys)
}
