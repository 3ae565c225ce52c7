//! Two-regime convergence detection on loss curves: a window has converged
//! once its linear trend is no larger than its residual noise.

use serde::Serialize;

use crate::error::{Error, Result};

pub const MIN_WINDOW: usize = 5;

/// Returns the end index (exclusive) of the first window of length `window`
/// whose least-squares slope satisfies |slope|·W ≤ factor·σ̂, where σ̂ is the
/// residual standard deviation with W−2 degrees of freedom.
pub fn detect_convergence(curve: &[f64], window: usize, factor: f64) -> Result<Option<usize>> {
    if window < MIN_WINDOW {
        return Err(Error::invalid(format!(
            "window {window} below {MIN_WINDOW}"
        )));
    }
    if curve.len() < window {
        return Err(Error::invalid(format!(
            "curve of length {} shorter than window {window}",
            curve.len()
        )));
    }
    if curve.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss curve".into()));
    }
    let w = window as f64;
    let x_mean = (w - 1.0) / 2.0;
    let sxx: f64 = (0..window).map(|i| (i as f64 - x_mean).powi(2)).sum();
    for end in window..=curve.len() {
        let seg = &curve[end - window..end];
        let y_mean = seg.iter().sum::<f64>() / w;
        let sxy: f64 = seg
            .iter()
            .enumerate()
            .map(|(i, y)| (i as f64 - x_mean) * (y - y_mean))
            .sum();
        let slope = sxy / sxx;
        let ssr: f64 = seg
            .iter()
            .enumerate()
            .map(|(i, y)| (y - y_mean - slope * (i as f64 - x_mean)).powi(2))
            .sum();
        let sigma = (ssr / (w - 2.0)).sqrt();
        if slope.abs() * w <= factor * sigma {
            return Ok(Some(end));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConvergenceOrdering {
    pub iter_main: Option<usize>,
    pub iter_struct: Option<usize>,
    /// The structural loss converged no earlier than the main loss; a curve
    /// that never converges counts as converging at infinity.
    pub aux_later: bool,
}

pub fn order_curves(
    main: &[f64],
    structural: &[f64],
    window: usize,
    factor: f64,
) -> Result<ConvergenceOrdering> {
    let iter_main = detect_convergence(main, window, factor)?;
    let iter_struct = detect_convergence(structural, window, factor)?;
    let aux_later = match (iter_main, iter_struct) {
        (_, None) => true,
        (None, Some(_)) => false,
        (Some(m), Some(s)) => s >= m,
    };
    Ok(ConvergenceOrdering {
        iter_main,
        iter_struct,
        aux_later,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_curve_converges_at_first_window() {
        assert_eq!(detect_convergence(&[0.5; 200], 50, 1.0).unwrap(), Some(50));
    }

    #[test]
    fn noise_free_line_never_converges() {
        let curve: Vec<f64> = (0..500).map(|t| 3.0 - 0.001 * t as f64).collect();
        assert_eq!(detect_convergence(&curve, 50, 1.0).unwrap(), None);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(detect_convergence(&[1.0; 10], 4, 1.0).is_err());
        assert!(detect_convergence(&[1.0; 10], 11, 1.0).is_err());
        assert!(detect_convergence(&[1.0, f64::NAN, 1.0, 1.0, 1.0], 5, 1.0).is_err());
    }

    /// First index where the remaining noiseless decay exp(−t/τ) drops below `level`.
    fn plateau_onset(tau: f64, level: f64, len: usize) -> usize {
        (0..len)
            .find(|&t| (-(t as f64) / tau).exp() < level)
            .unwrap()
    }

    #[test]
    fn noisy_exponential_detected_near_plateau() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let curve: Vec<f64> = (0..2000)
            .map(|t| (-(t as f64) / 100.0).exp() + noise.sample(&mut rng))
            .collect();
        let onset = plateau_onset(100.0, 0.01, 2000) as i64;
        let found = detect_convergence(&curve, 50, 1.0).unwrap().unwrap() as i64;
        assert!((found - onset).abs() <= 150, "found {found}, onset {onset}");
    }

    #[test]
    fn ordering_fixtures() {
        let flat = vec![1.0; 300];
        let o = order_curves(&flat, &flat, 50, 1.0).unwrap();
        assert_eq!(o.iter_main, o.iter_struct);
        assert!(o.aux_later);

        let falling: Vec<f64> = (0..300).map(|t| 2.0 - 0.01 * t as f64).collect();
        let o = order_curves(&flat, &falling, 50, 1.0).unwrap();
        assert_eq!(o.iter_struct, None);
        assert!(o.aux_later);
        let o = order_curves(&falling, &flat, 50, 1.0).unwrap();
        assert!(!o.aux_later);
    }
}
