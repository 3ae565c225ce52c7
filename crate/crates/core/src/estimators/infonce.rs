use serde::Serialize;

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::losses::symmetric_infonce_unchecked;
use crate::numeric::{derive_seed, Matrix};

use super::sampler::gaussian_pair_sampler;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoNceBound {
    /// Symmetric InfoNCE loss, nats.
    pub loss: f64,
    /// ln N − loss, a lower bound on I(X; Y) in expectation.
    pub bound: f64,
}

/// InfoNCE lower-bound estimate from one batch of paired embeddings, with
/// logits ⟨x_i, y_j⟩ / temperature.
pub fn infonce_bound(
    xs: &EmbeddingBatch,
    ys: &EmbeddingBatch,
    temperature: f64,
) -> Result<InfoNceBound> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if xs.len() != ys.len() {
        return Err(Error::mismatch("InfoNCE batch size", xs.len(), ys.len()));
    }
    let eval = symmetric_infonce_unchecked(xs.matrix(), ys.matrix(), 1.0 / temperature)?;
    let loss = eval.value.max(0.0);
    Ok(InfoNceBound {
        loss,
        bound: (xs.len() as f64).ln() - loss,
    })
}

/// Maps scalars onto the unit circle, u ↦ (cos ωu, sin ωu).
///
/// The induced critic ⟨e(x), e(y)⟩ = cos ω(x − y) is a fixed, data-independent
/// similarity, so the InfoNCE bound it yields is a valid lower bound.
pub fn phase_embedding(values: &[f64], frequency: f64) -> Result<EmbeddingBatch> {
    let data = values
        .iter()
        .flat_map(|&u| [(frequency * u).cos(), (frequency * u).sin()])
        .collect();
    EmbeddingBatch::new(Matrix::from_vec(values.len(), 2, data)?)
}

/// Phase critic for unit-variance Gaussian pairs. For small ω the critic is
/// ≈ (1 − ω²(x−y)²/2)/T, matching the optimal quadratic log density ratio
/// −(y−ρx)²/(2(1−ρ²)) near ρ = 0.9 when ω²/T ≈ 5.
pub const GAUSS_CRITIC_FREQUENCY: f64 = 0.5;
pub const GAUSS_CRITIC_TEMPERATURE: f64 = 0.05;

/// InfoNCE bounds from `batches` independent Gaussian batches of size `n`,
/// batch `i` drawn with seed `derive_seed(seed, i)`; parallel, in batch order.
pub fn gaussian_infonce_bounds(
    rho: f64,
    n: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<InfoNceBound>> {
    (0..batches)
        .into_par_iter()
        .map(|i| {
            let batch = gaussian_pair_sampler(rho, n, derive_seed(seed, i as u64))?;
            let first = |m: &Matrix| m.row_iter().map(|r| r[0]).collect::<Vec<_>>();
            let xs = phase_embedding(&first(batch.xs()), GAUSS_CRITIC_FREQUENCY)?;
            let ys = phase_embedding(&first(batch.ys()), GAUSS_CRITIC_FREQUENCY)?;
            infonce_bound(&xs, &ys, GAUSS_CRITIC_TEMPERATURE)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pair_has_zero_bound() {
        let x = EmbeddingBatch::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let y = EmbeddingBatch::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let b = infonce_bound(&x, &y, 0.5).unwrap();
        assert_eq!(b.loss, 0.0);
        assert_eq!(b.bound, 0.0);
    }

    #[test]
    fn identical_rows_give_zero_bound() {
        let x = EmbeddingBatch::from_rows(&vec![vec![0.0, 1.0]; 4]).unwrap();
        let b = infonce_bound(&x, &x, 0.1).unwrap();
        assert!((b.loss - 4f64.ln()).abs() < 1e-12);
        assert!(b.bound.abs() < 1e-12);
    }

    #[test]
    fn two_sample_fixture_matches_softmax_oracle() {
        let x = EmbeddingBatch::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]]).unwrap();
        let y = EmbeddingBatch::from_rows(&[vec![0.8, 0.6], vec![0.0, 1.0]]).unwrap();
        // logits with temperature 1: s = [[0.8, 0.0], [0.96, 0.8]]
        let s = [[0.8f64, 0.0], [0.96, 0.8]];
        let row0 = -(s[0][0].exp() / (s[0][0].exp() + s[0][1].exp())).ln();
        let row1 = -(s[1][1].exp() / (s[1][0].exp() + s[1][1].exp())).ln();
        let col0 = -(s[0][0].exp() / (s[0][0].exp() + s[1][0].exp())).ln();
        let col1 = -(s[1][1].exp() / (s[0][1].exp() + s[1][1].exp())).ln();
        let oracle = (row0 + row1 + col0 + col1) / 4.0;
        let b = infonce_bound(&x, &y, 1.0).unwrap();
        assert!((b.loss - oracle).abs() < 1e-14);
        assert!((b.bound - (2f64.ln() - oracle)).abs() < 1e-14);
    }

    #[test]
    fn rejects_mismatch_and_bad_temperature() {
        let x = EmbeddingBatch::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let y = EmbeddingBatch::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(infonce_bound(&x, &y, 1.0).is_err());
        assert!(infonce_bound(&x, &x, 0.0).is_err());
    }

    #[test]
    fn phase_embedding_is_unit_norm() {
        let e = phase_embedding(&[0.0, 1.5, -3.0], 0.7).unwrap();
        assert_eq!(e.row(0), &[1.0, 0.0]);
        assert_eq!(e.dim(), 2);
    }

    #[test]
    fn gaussian_bound_stays_below_analytic_mi() {
        let bounds = gaussian_infonce_bounds(0.9, 128, 40, 2).unwrap();
        let vals: Vec<f64> = bounds.iter().map(|b| b.bound).collect();
        let mean = crate::numeric::mean(&vals);
        let se = (crate::numeric::sample_var(&vals) / vals.len() as f64).sqrt();
        let truth = crate::estimators::gaussian_mi(0.9);
        assert!(mean <= truth + 3.0 * se, "mean {mean}, truth {truth}");
        assert!(mean > 0.5, "critic too weak: {mean}");
        assert!(vals.iter().all(|&b| b <= 128f64.ln()));
        assert_eq!(bounds, gaussian_infonce_bounds(0.9, 128, 40, 2).unwrap());
    }
}
