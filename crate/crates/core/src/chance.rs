//! Sample-average chance estimates with logistic smoothing, and the exterior
//! quadratic penalty used to enforce the chance constraint.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::field::NodalField;
use crate::random_field::SampleSet;

/// Beyond this value of `2 beta |x|` the logistic is returned saturated.
const SATURATION: f64 = 700.0;

/// `1 / (1 + exp(-2 beta x))`.
pub fn logistic(x: f64, beta: f64) -> f64 {
    let s = 2.0 * beta * x;
    if s > SATURATION {
        1.0
    } else if s < -SATURATION {
        0.0
    } else if s >= 0.0 {
        1.0 / (1.0 + libm::exp(-s))
    } else {
        let e = libm::exp(s);
        e / (1.0 + e)
    }
}

/// Derivative of [`logistic`] in `x`.
pub fn logistic_grad(x: f64, beta: f64) -> f64 {
    let s = 2.0 * beta * x;
    if s.abs() > SATURATION {
        return 0.0;
    }
    let e = libm::exp(-s.abs());
    2.0 * beta * e / ((1.0 + e) * (1.0 + e))
}

/// `(gamma / 2) max(0, x)^2`.
pub fn penalty(x: f64, gamma: f64) -> f64 {
    let p = x.max(0.0);
    0.5 * gamma * p * p
}

pub fn penalty_grad(x: f64, gamma: f64) -> f64 {
    gamma * x.max(0.0)
}

/// Smoothing sharpness and penalty weight of one continuation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingParams {
    pub beta: f64,
    pub gamma: f64,
}

impl SmoothingParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) || !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(invalid(
                "beta must be positive and gamma nonnegative, both finite",
            ));
        }
        Ok(Self { beta, gamma })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChanceMode {
    /// `I[f >= 0]`, with the value 1 at exactly 0.
    Indicator,
    /// `logistic(f, beta)`.
    Smoothed(f64),
}

impl ChanceMode {
    pub fn beta(&self) -> Option<f64> {
        match self {
            ChanceMode::Indicator => None,
            ChanceMode::Smoothed(beta) => Some(*beta),
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.beta() {
            None => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Some(beta) => logistic(x, beta),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ChanceMode::Indicator => "indicator",
            ChanceMode::Smoothed(_) => "smoothed",
        }
    }
}

/// What produced the constraint values of a chance estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChanceSource {
    FullModel,
    T0,
    T1,
    T2,
}

impl ChanceSource {
    pub const ALL: [ChanceSource; 4] = [
        ChanceSource::FullModel,
        ChanceSource::T0,
        ChanceSource::T1,
        ChanceSource::T2,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            ChanceSource::FullModel => "full",
            ChanceSource::T0 => "T0",
            ChanceSource::T1 => "T1",
            ChanceSource::T2 => "T2",
        }
    }

    /// Taylor order of a surrogate source.
    pub fn order(&self) -> Option<usize> {
        match self {
            ChanceSource::FullModel => None,
            ChanceSource::T0 => Some(0),
            ChanceSource::T1 => Some(1),
            ChanceSource::T2 => Some(2),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChanceEstimate {
    pub value: f64,
    pub sample_count: usize,
    /// `sqrt(sample variance / M)`, with the unbiased sample variance.
    pub std_error: f64,
    pub mode: ChanceMode,
    pub source: ChanceSource,
}

impl ChanceEstimate {
    /// Estimate from precomputed constraint values.
    pub fn from_values(values: &[f64], mode: ChanceMode, source: ChanceSource) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("chance estimate needs at least one sample"));
        }
        let mapped: Vec<f64> = values.iter().map(|v| mode.apply(*v)).collect();
        let (mean, var) = mean_and_variance(&mapped);
        Ok(Self {
            value: mean,
            sample_count: values.len(),
            std_error: libm::sqrt(var / values.len() as f64),
            mode,
            source,
        })
    }
}

fn mean_and_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Averages `mode(evaluator(m_i))` over the sample set. The first evaluator
/// failure aborts the estimate.
pub fn chance_saa(
    evaluator: &mut dyn FnMut(&NodalField) -> Result<f64>,
    samples: &SampleSet,
    mode: ChanceMode,
    source: ChanceSource,
) -> Result<ChanceEstimate> {
    if samples.is_empty() {
        return Err(invalid("chance estimate needs at least one sample"));
    }
    let values = samples
        .samples()
        .iter()
        .map(evaluator)
        .collect::<Result<Vec<_>>>()?;
    ChanceEstimate::from_values(&values, mode, source)
}

/// `sqrt(mean((x_i - mean)^2) / M)`.
pub fn saa_bias(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(invalid("bias estimate needs at least two values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mse = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(libm::sqrt(mse / n))
}
