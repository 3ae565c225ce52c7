//! Kraskov–Stögbauer–Grassberger k-nearest-neighbour MI estimator (first
//! variant, max-norm balls, exact brute-force neighbour search).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::SampleBatch;
use crate::error::{Error, Result};
use crate::numeric::{digamma, Matrix};

/// Magnitude of the tie-breaking jitter added to every coordinate.
const JITTER: f64 = 1e-10;

fn jittered(m: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let mut out = m.clone();
    for v in out.as_mut_slice() {
        *v += JITTER * rng.gen_range(-1.0..1.0);
    }
    out
}

#[inline]
fn max_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// ψ(k) + ψ(N) − ⟨ψ(n_x + 1) + ψ(n_y + 1)⟩, in nats.
///
/// For each sample, ε is the max-norm distance to its k-th neighbour in the
/// joint space and n_x, n_y count marginal neighbours strictly inside ε.
pub fn ksg_mi(batch: &SampleBatch, k: usize, seed: u64) -> Result<f64> {
    let n = batch.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k >= n {
        return Err(Error::invalid(format!(
            "k = {k} needs more than {n} samples"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = jittered(batch.xs(), &mut rng);
    let ys = jittered(batch.ys(), &mut rng);

    let terms: Vec<f64> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; n], Vec::with_capacity(n)),
            |(dx, dy, joint), i| {
                joint.clear();
                for j in 0..n {
                    dx[j] = max_norm(xs.row(i), xs.row(j));
                    dy[j] = max_norm(ys.row(i), ys.row(j));
                    if j != i {
                        joint.push(dx[j].max(dy[j]));
                    }
                }
                let (_, eps, _) = joint.select_nth_unstable_by(k - 1, |a, b| a.total_cmp(b));
                let eps = *eps;
                let nx = (0..n).filter(|&j| j != i && dx[j] < eps).count();
                let ny = (0..n).filter(|&j| j != i && dy[j] < eps).count();
                digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0)
            },
        )
        .collect();

    let avg = terms.iter().sum::<f64>() / n as f64;
    Ok(digamma(k as f64) + digamma(n as f64) - avg)
}
