//! Control-variate combination of two correlated estimator streams.
//!
//! Î_cv = Î_XY + β (Î_EE − μ_EE). With μ_EE the mean of Î_EE the combination
//! keeps the expectation of Î_XY, and β* = −Cov(Î_XY, Î_EE) / Var(Î_EE)
//! shrinks the variance to Var(Î_XY)·(1 − ρ²).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::numeric::{correlation, mean, sample_cov, sample_var};

pub const DEFAULT_PILOT_FRACTION: f64 = 0.2;

/// Below this variance the control stream is treated as constant.
const DEGENERATE_VAR: f64 = 1e-300;

/// Ordered per-batch estimates in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorTrace {
    values: Vec<f64>,
}

impl EstimatorTrace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("trace value at index {i}")));
        }
        Ok(EstimatorTrace { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// Bessel-corrected variance; needs at least two values.
    pub fn variance(&self) -> Result<f64> {
        if self.values.len() < 2 {
            return Err(Error::invalid("variance needs a trace of length >= 2"));
        }
        Ok(sample_var(&self.values))
    }

    pub fn to_csv(&self) -> String {
        io::write_trace_csv(&self.values)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        Self::new(io::read_trace_csv(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotSplit {
    pub mu: f64,
    pub remainder: EstimatorTrace,
}

fn pilot_len(len: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "pilot fraction must lie in (0, 1), got {fraction}"
        )));
    }
    // the epsilon keeps products like 0.2 * 12500 from rounding up a slot
    let pilot = ((fraction * len as f64) - 1e-9).ceil().max(0.0) as usize;
    if pilot < 2 || len.saturating_sub(pilot) < 2 {
        return Err(Error::invalid(format!(
            "trace of length {len} is too short for a pilot fraction of {fraction}"
        )));
    }
    Ok(pilot)
}

/// Mean of the first ⌈fraction·len⌉ values; the rest is returned untouched.
pub fn pilot_mean(trace: &EstimatorTrace, pilot_fraction: f64) -> Result<PilotSplit> {
    let pilot = pilot_len(trace.len(), pilot_fraction)?;
    Ok(PilotSplit {
        mu: mean(&trace.values[..pilot]),
        remainder: EstimatorTrace {
            values: trace.values[pilot..].to_vec(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaEstimate {
    pub beta: f64,
    /// Set when Var(Î_EE) is numerically zero; `beta` is then 0.
    pub degenerate: bool,
}

fn check_pair(xy: &EstimatorTrace, ee: &EstimatorTrace) -> Result<()> {
    if xy.len() != ee.len() {
        return Err(Error::mismatch(
            "control-variate trace length",
            xy.len(),
            ee.len(),
        ));
    }
    Ok(())
}

/// β* = −Cov(xy, ee) / Var(ee) with Bessel-corrected moments.
pub fn optimal_beta(trace_xy: &EstimatorTrace, trace_ee: &EstimatorTrace) -> Result<BetaEstimate> {
    check_pair(trace_xy, trace_ee)?;
    if trace_xy.len() < 2 {
        return Err(Error::invalid("optimal beta needs traces of length >= 2"));
    }
    let var_ee = sample_var(&trace_ee.values);
    if var_ee < DEGENERATE_VAR {
        return Ok(BetaEstimate {
            beta: 0.0,
            degenerate: true,
        });
    }
    Ok(BetaEstimate {
        beta: -sample_cov(&trace_xy.values, &trace_ee.values) / var_ee,
        degenerate: false,
    })
}

/// Element-wise Î_XY[i] + β (Î_EE[i] − μ_EE).
pub fn combine_cv(
    trace_xy: &EstimatorTrace,
    trace_ee: &EstimatorTrace,
    beta: f64,
    mu_ee: f64,
) -> Result<EstimatorTrace> {
    check_pair(trace_xy, trace_ee)?;
    if !beta.is_finite() || !mu_ee.is_finite() {
        return Err(Error::NonFinite("beta or mu_ee".into()));
    }
    Ok(EstimatorTrace {
        values: trace_xy
            .values
            .iter()
            .zip(&trace_ee.values)
            .map(|(x, e)| x + beta * (e - mu_ee))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlVariateReport {
    pub beta_star: f64,
    pub rho: f64,
    pub var_xy: f64,
    pub var_ee: f64,
    pub var_cv: f64,
    pub predicted_var_cv: f64,
    pub mean_xy: f64,
    pub mean_cv: f64,
    pub mu_ee_pilot: f64,
}

impl ControlVariateReport {
    pub fn var_ratio(&self) -> f64 {
        self.var_cv / self.var_xy
    }
}

/// β* and μ_EE from the pilot prefix, everything else on the remainder.
pub fn variance_reduction_report(
    trace_xy: &EstimatorTrace,
    trace_ee: &EstimatorTrace,
    pilot_fraction: f64,
) -> Result<ControlVariateReport> {
    variance_reduction_report_with(trace_xy, trace_ee, pilot_fraction, None)
}

/// Like [`variance_reduction_report`], with an optional fixed β in place of
/// the pilot estimate.
pub fn variance_reduction_report_with(
    trace_xy: &EstimatorTrace,
    trace_ee: &EstimatorTrace,
    pilot_fraction: f64,
    beta_override: Option<f64>,
) -> Result<ControlVariateReport> {
    check_pair(trace_xy, trace_ee)?;
    let pilot = pilot_len(trace_xy.len(), pilot_fraction)?;
    let (pilot_xy, eval_xy) = trace_xy.values.split_at(pilot);
    let (pilot_ee, eval_ee) = trace_ee.values.split_at(pilot);
    let pilot_xy = EstimatorTrace::new(pilot_xy.to_vec())?;
    let pilot_ee = EstimatorTrace::new(pilot_ee.to_vec())?;

    let beta = match beta_override {
        Some(b) => b,
        None => optimal_beta(&pilot_xy, &pilot_ee)?.beta,
    };
    let mu_ee = pilot_ee.mean();

    let eval_xy = EstimatorTrace::new(eval_xy.to_vec())?;
    let eval_ee = EstimatorTrace::new(eval_ee.to_vec())?;
    let cv = combine_cv(&eval_xy, &eval_ee, beta, mu_ee)?;

    let var_xy = eval_xy.variance()?;
    let rho = correlation(&eval_xy.values, &eval_ee.values);
    Ok(ControlVariateReport {
        beta_star: beta,
        rho,
        var_xy,
        var_ee: eval_ee.variance()?,
        var_cv: cv.variance()?,
        predicted_var_cv: var_xy * (1.0 - rho * rho),
        mean_xy: eval_xy.mean(),
        mean_cv: cv.mean(),
        mu_ee_pilot: mu_ee,
    })
}
