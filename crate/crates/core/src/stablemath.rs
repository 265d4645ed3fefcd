//! Log-domain kernels.
//!
//! Every density and loss in the crate is evaluated through these functions so
//! that softmax and sigmoid never overflow or underflow on finite input. The
//! softmax family shifts by the maximum before exponentiating; the sigmoid
//! family uses `-ln(1 + e^{-x})` and switches to the linear asymptote `x` far
//! in the negative tail.

use crate::error::{Error, Result};

/// Below this input `log_sigmoid` uses its linear asymptote.
pub const LOG_SIGMOID_LINEAR_BELOW: f64 = -30.0;

const PAIRWISE_BLOCK: usize = 1024;

/// Sum with pairwise reduction once the input is longer than 1024 elements.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

fn max_of(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn sum_exp_shifted(x: &[f64], shift: f64) -> f64 {
    if x.len() <= PAIRWISE_BLOCK {
        x.iter().map(|v| (v - shift).exp()).sum()
    } else {
        let terms: Vec<f64> = x.iter().map(|v| (v - shift).exp()).collect();
        pairwise_sum(&terms)
    }
}

/// `ln Σ exp(x_i)`, shifted by `max(x)`.
pub fn logsumexp(x: &[f64]) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Domain("logsumexp of an empty vector".into()));
    }
    let m = max_of(x);
    if m == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(m + sum_exp_shifted(x, m).ln())
}

/// `x_i - logsumexp(x)` for every element.
pub fn log_softmax(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::Domain("log_softmax of an empty vector".into()));
    }
    let m = max_of(x);
    let log_z = sum_exp_shifted(x, m).ln();
    Ok(x.iter().map(|v| v - m - log_z).collect())
}

pub fn softmax(x: &[f64]) -> Result<Vec<f64>> {
    Ok(log_softmax(x)?.into_iter().map(f64::exp).collect())
}

/// `ln σ(x) = -ln(1 + e^{-x})`.
///
/// For `x < -30` the result is `x - e^x`, the first two terms of the
/// asymptotic expansion. When the true value rounds to zero (x beyond ~745)
/// the smallest negative subnormal is returned so the output stays strictly
/// negative.
pub fn log_sigmoid(x: f64) -> f64 {
    let v = if x < LOG_SIGMOID_LINEAR_BELOW {
        x - x.exp()
    } else {
        -(-x).exp().ln_1p()
    };
    if v == 0.0 {
        -f64::from_bits(1)
    } else {
        v
    }
}

/// `ln(1 - σ(x)) = ln σ(-x)`.
pub fn log_one_minus_sigmoid(x: f64) -> f64 {
    log_sigmoid(-x)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 - softmax(x)_c)` for every `c`, computed as
/// `logsumexp(x without c) - logsumexp(x)` so that a dominant logit does not
/// cancel to `ln 0`.
pub fn log_softmax_complement(x: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 {
        return Err(Error::Domain(
            "softmax complement needs at least two classes".into(),
        ));
    }
    let total = logsumexp(x)?;
    let mut rest = Vec::with_capacity(x.len() - 1);
    Ok((0..x.len())
        .map(|c| {
            rest.clear();
            rest.extend(x.iter().enumerate().filter(|(k, _)| *k != c).map(|(_, v)| *v));
            // rest is non-empty because len >= 2
            logsumexp(&rest).unwrap_or(f64::NEG_INFINITY) - total
        })
        .collect())
}
