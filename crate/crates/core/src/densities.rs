//! Parametric conditional and marginal densities over class labels.
//!
//! All densities are returned in the log domain. A classifier output `f(x)`
//! and a one-hot label `y` give the score `s(x, y) = y · f(x)`; normalising
//! over classes yields the softmax conditional, while the self-normalised
//! form yields the elementwise sigmoid. The two are selected with
//! [`RescaleKind`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stablemath::{
    log_one_minus_sigmoid, log_sigmoid, log_softmax, log_softmax_complement, logsumexp,
};

/// How classifier outputs are rescaled into `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RescaleKind {
    /// Globally normalised: outputs sum to one over classes.
    Softmax,
    /// Self-normalised: each output is squashed independently.
    Sigmoid,
}

impl std::fmt::Display for RescaleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RescaleKind::Softmax => "softmax",
            RescaleKind::Sigmoid => "sigmoid",
        })
    }
}

/// Partition-function convention of an exponential-family density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalisationKind {
    /// `p(y) e^{s(x,y)} / Z(x)` with `Z(x) = E_{p(y)}[e^{s(x,y)}]`.
    ScaledNormalised,
    /// `e^{s(x,y)} / Z(x)` with `Z(x) = Σ_y e^{s(x,y)}`.
    GloballyNormalised,
    /// `e^{s(x,y)}`, assumed to sum to one.
    SelfNormalised,
}

impl NormalisationKind {
    /// The rescaling that realises this normalisation for linear scores, if any.
    pub fn rescale(self) -> Option<RescaleKind> {
        match self {
            NormalisationKind::GloballyNormalised => Some(RescaleKind::Softmax),
            NormalisationKind::SelfNormalised => Some(RescaleKind::Sigmoid),
            NormalisationKind::ScaledNormalised => None,
        }
    }
}

/// A class label in `[0, classes)`, viewed as a one-hot vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OneHot {
    index: usize,
    classes: usize,
}

impl OneHot {
    pub fn new(index: usize, classes: usize) -> Result<Self> {
        if index >= classes {
            return Err(Error::ClassOutOfRange { index, classes });
        }
        Ok(Self { index, classes })
    }

    pub fn index(self) -> usize {
        self.index
    }

    pub fn classes(self) -> usize {
        self.classes
    }

    pub fn to_vec(self) -> Vec<f64> {
        let mut v = vec![0.0; self.classes];
        v[self.index] = 1.0;
        v
    }
}

fn check_label(logits: &[f64], y: OneHot) -> Result<()> {
    if logits.len() < 2 {
        return Err(Error::Domain("conditional needs at least two classes".into()));
    }
    if y.classes != logits.len() || y.index >= logits.len() {
        return Err(Error::ClassOutOfRange {
            index: y.index,
            classes: logits.len(),
        });
    }
    Ok(())
}

/// `ln σ_y(f)`: the log-probability assigned to class `y`.
pub fn log_conditional(logits: &[f64], y: OneHot, kind: RescaleKind) -> Result<f64> {
    check_label(logits, y)?;
    Ok(match kind {
        RescaleKind::Softmax => log_softmax(logits)?[y.index],
        RescaleKind::Sigmoid => log_sigmoid(logits[y.index]),
    })
}

/// Per-class rescaled log-probabilities `ln σ(f)_c` and `ln(1 - σ(f)_c)`.
pub fn log_rescaled(logits: &[f64], kind: RescaleKind) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok(match kind {
        RescaleKind::Softmax => (log_softmax(logits)?, log_softmax_complement(logits)?),
        RescaleKind::Sigmoid => (
            logits.iter().map(|v| log_sigmoid(*v)).collect(),
            logits.iter().map(|v| log_one_minus_sigmoid(*v)).collect(),
        ),
    })
}

/// Log of the product-of-binary-outcomes density:
/// `Σ_c y_c ln σ(f)_c + (1 - y_c) ln(1 - σ(f)_c)`.
pub fn log_binary_conditional(logits: &[f64], y: OneHot, kind: RescaleKind) -> Result<f64> {
    check_label(logits, y)?;
    let (log_p, log_not_p) = log_rescaled(logits, kind)?;
    Ok((0..logits.len())
        .map(|c| if c == y.index { log_p[c] } else { log_not_p[c] })
        .sum())
}

/// Empirical marginal `ln (1/N) Σ_j σ_y(f_j)` over every row of `batch`.
pub fn log_marginal(batch: &[Vec<f64>], y: OneHot, kind: RescaleKind) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Domain("marginal over an empty batch".into()));
    }
    let per_row = batch
        .iter()
        .map(|row| log_conditional(row, y, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(logsumexp(&per_row)? - (batch.len() as f64).ln())
}

/// `ln Σ_y p(y) e^{s_y}`, the log partition function of the scaled-normalised
/// density.
pub fn log_partition_scaled(scores: &[f64], prior: &[f64]) -> Result<f64> {
    if scores.len() != prior.len() {
        return Err(Error::Shape {
            op: "log_partition_scaled",
            detail: format!("{} scores vs {} prior entries", scores.len(), prior.len()),
        });
    }
    if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::Distribution("prior has negative or non-finite mass".into()));
    }
    let total: f64 = prior.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Distribution(format!("prior sums to {total}")));
    }
    let terms: Vec<f64> = scores
        .iter()
        .zip(prior)
        .filter(|(_, p)| **p > 0.0)
        .map(|(s, p)| s + p.ln())
        .collect();
    logsumexp(&terms)
}

/// Cosine similarity `a·b / (‖a‖ ‖b‖)`.
pub fn cosine_score(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "cosine_score",
            detail: format!("lengths {} and {}", a.len(), b.len()),
        });
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine score of a zero-norm vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    fn y(i: usize, c: usize) -> OneHot {
        OneHot::new(i, c).unwrap()
    }

    #[test]
    fn conditional_examples() {
        let v = log_conditional(&[0.0; 10], y(3, 10), RescaleKind::Softmax).unwrap();
        assert!((v - 0.1f64.ln()).abs() < 1e-14);
        let v = log_conditional(&[2.0, 1.0, 0.0], y(0, 3), RescaleKind::Softmax).unwrap();
        assert!((v + 0.4076059).abs() < 1e-7);
        let v = log_conditional(&[0.0, 0.0], y(1, 2), RescaleKind::Sigmoid).unwrap();
        assert!((v + LN2).abs() < 1e-15);
        assert!(OneHot::new(3, 3).is_err());
        assert!(log_conditional(&[0.0, 0.0], y(2, 3), RescaleKind::Softmax).is_err());
    }

    #[test]
    fn binary_conditional_examples() {
        for kind in [RescaleKind::Sigmoid, RescaleKind::Softmax] {
            let v = log_binary_conditional(&[0.0, 0.0], y(0, 2), kind).unwrap();
            assert!((v + 2.0 * LN2).abs() < 1e-15);
        }
        let v = log_binary_conditional(&[3.0, -3.0], y(0, 2), RescaleKind::Sigmoid).unwrap();
        let reference = 2.0 * -(1.0 + (-3.0f64).exp()).ln();
        assert!((v - reference).abs() < 1e-15);
        assert!((v + 0.0971748).abs() < 1e-7);
        let v = log_binary_conditional(&[1000.0, -1000.0], y(0, 2), RescaleKind::Softmax).unwrap();
        assert!(v.is_finite() && v <= 0.0);
    }

    #[test]
    fn marginal_examples() {
        let row = vec![0.4, -1.0, 2.0];
        let single = log_marginal(std::slice::from_ref(&row), y(1, 3), RescaleKind::Softmax).unwrap();
        let cond = log_conditional(&row, y(1, 3), RescaleKind::Softmax).unwrap();
        assert!((single - cond).abs() < 1e-14);
        let same = log_marginal(&[row.clone(), row.clone(), row], y(1, 3), RescaleKind::Sigmoid)
            .unwrap();
        assert!((same - log_conditional(&[0.4, -1.0, 2.0], y(1, 3), RescaleKind::Sigmoid).unwrap()).abs() < 1e-14);
        // softmax([ln 3, 0]) = (0.75, 0.25) and softmax([0, ln 3]) = (0.25, 0.75)
        let l3 = 3f64.ln();
        let m = log_marginal(&[vec![l3, 0.0], vec![0.0, l3]], y(0, 2), RescaleKind::Softmax).unwrap();
        assert!((m - 0.5f64.ln()).abs() < 1e-14);
        assert!(log_marginal(&[], y(0, 2), RescaleKind::Softmax).is_err());
    }

    #[test]
    fn partition_examples() {
        assert!(log_partition_scaled(&[0.0, 0.0, 0.0], &[0.2, 0.3, 0.5]).unwrap().abs() < 1e-15);
        assert!((log_partition_scaled(&[1.0, 1.0], &[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        let reference = (0.25 * 2f64.exp() + 0.75).ln();
        let v = log_partition_scaled(&[2.0, 0.0], &[0.25, 0.75]).unwrap();
        assert!((v - reference).abs() < 1e-15);
        assert!((v - 0.9544586).abs() < 1e-7);
        assert!(log_partition_scaled(&[1.0], &[0.5, 0.5]).is_err());
        assert!(log_partition_scaled(&[1.0, 1.0], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_score(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = cosine_score(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(cosine_score(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(cosine_score(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sigmoid_conditional_can_exceed_unit_mass() {
        let logits = [3.0, 3.0, 3.0];
        let mass: f64 = (0..3)
            .map(|c| log_conditional(&logits, y(c, 3), RescaleKind::Sigmoid).unwrap().exp())
            .sum();
        assert!(mass > 1.0);
    }

    #[test]
    fn binary_identity_on_antisymmetric_grid() {
        // C = 2, softmax, f_0 = -f_1: the binary density squares the correct-class probability.
        for i in -200..=200 {
            let a = i as f64 * 0.05;
            let logits = [a, -a];
            for c in 0..2 {
                let b = log_binary_conditional(&logits, y(c, 2), RescaleKind::Softmax).unwrap();
                let k = log_conditional(&logits, y(c, 2), RescaleKind::Softmax).unwrap();
                assert!((b - 2.0 * k).abs() < 1e-12, "a = {a}");
            }
        }
    }

    fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-20.0f64..20.0, 2..8)
    }

    proptest! {
        #[test]
        fn softmax_conditional_normalised(logits in logits_strategy()) {
            let c = logits.len();
            let mass: f64 = (0..c)
                .map(|k| log_conditional(&logits, y(k, c), RescaleKind::Softmax).unwrap().exp())
                .sum();
            prop_assert!((mass - 1.0).abs() < 1e-10);
        }

        #[test]
        fn sigmoid_conditional_in_unit_interval(logits in logits_strategy()) {
            let c = logits.len();
            for k in 0..c {
                let p = log_conditional(&logits, y(k, c), RescaleKind::Sigmoid).unwrap().exp();
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }

        #[test]
        fn marginal_between_row_extremes(
            rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..10),
            k in 0usize..4,
            sigmoid in any::<bool>(),
        ) {
            let kind = if sigmoid { RescaleKind::Sigmoid } else { RescaleKind::Softmax };
            let per: Vec<f64> = rows.iter().map(|r| log_conditional(r, y(k, 4), kind).unwrap()).collect();
            let m = log_marginal(&rows, y(k, 4), kind).unwrap();
            let lo = per.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = per.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }

        #[test]
        fn cosine_scale_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in prop::collection::vec(-5.0f64..5.0, 3),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3) && b.iter().any(|v| v.abs() > 1e-3));
            let s = cosine_score(&a, &b).unwrap();
            let sa: Vec<f64> = a.iter().map(|v| v * alpha).collect();
            let sb: Vec<f64> = b.iter().map(|v| v * beta).collect();
            prop_assert!((cosine_score(&sa, &sb).unwrap() - s).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&s));
            prop_assert!((cosine_score(&b, &a).unwrap() - s).abs() < 1e-15);
        }
    }
}
