//! Training losses.
//!
//! Every loss is recorded on a [`Graph`] so its gradient is available; the
//! `loss_*` functions at the bottom of the module evaluate the same code on
//! constant inputs for callers that only need the value.
//!
//! Supervised losses in the label space:
//! * [`cat_cross`]: `-(1/N) Σ ln σ_{y_i}(f_i)`.
//! * [`cat_twin`]: the same numerator divided by the empirical marginal
//!   `(1/M) Σ_j σ_{y_i}(f'_j)` over a denominator batch.
//! * [`bin_cross`]: every output pushed towards its one-hot target.
//!
//! The critic pair [`critic_disc`]/[`critic_model`] is the binary
//! cross-entropy form of the Jensen-Shannon divergence between exact one-hot
//! prior samples and the model's rescaled outputs, with the constant `ln 2`
//! and the factor `1/2` dropped.
//!
//! Latent losses are InfoNCE over cosine scores with gradient-detached
//! targets: [`latent_supervised`] pairs samples of the same class,
//! [`latent_augment`] pairs each sample with its augmentation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::densities::RescaleKind;
use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_critic: f64,
    pub lambda_latent: f64,
    pub lambda_augment: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::zero()
    }
}

impl LossWeights {
    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub const fn new(lambda_critic: f64, lambda_latent: f64, lambda_augment: f64) -> Self {
        Self {
            lambda_critic,
            lambda_latent,
            lambda_augment,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in [
            ("lambda_critic", self.lambda_critic),
            ("lambda_latent", self.lambda_latent),
            ("lambda_augment", self.lambda_augment),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("`{k}` must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which expectation the InfoNCE denominator averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InfoNceAxis {
    /// `(1/N) Σ_j e^{s(x_i, y_j)}`: partition-function form.
    OverTargets,
    /// `(1/N) Σ_j e^{s(x_j, y_i)}`: marginal-density form.
    OverSources,
}

fn check_labels(logits_shape: (usize, usize), labels: &[usize]) -> Result<()> {
    let (n, c) = logits_shape;
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape {
            op: "labels",
            detail: format!("{} labels for {n} rows", labels.len()),
        });
    }
    if c < 2 {
        return Err(Error::Domain("at least two classes are required".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::ClassOutOfRange { index: bad, classes: c });
    }
    Ok(())
}

/// `ln σ(f)_c` for every entry.
pub fn log_rescaled(g: &mut Graph, logits: Var, kind: RescaleKind) -> Result<Var> {
    match kind {
        RescaleKind::Softmax => g.log_softmax_rows(logits),
        RescaleKind::Sigmoid => Ok(g.log_sigmoid(logits)),
    }
}

/// `ln(1 - σ(f)_c)` for every entry.
pub fn log_rescaled_complement(g: &mut Graph, logits: Var, kind: RescaleKind) -> Result<Var> {
    match kind {
        RescaleKind::Softmax => g.log_softmax_complement_rows(logits),
        RescaleKind::Sigmoid => {
            let neg = g.neg(logits);
            Ok(g.log_sigmoid(neg))
        }
    }
}

/// `σ(f)`: the rescaled outputs the critic sees.
pub fn rescale(g: &mut Graph, logits: Var, kind: RescaleKind) -> Result<Var> {
    match kind {
        RescaleKind::Softmax => g.softmax_rows(logits),
        RescaleKind::Sigmoid => Ok(g.sigmoid(logits)),
    }
}

fn label_positions(labels: &[usize]) -> Vec<(usize, usize)> {
    labels.iter().enumerate().map(|(i, &y)| (i, y)).collect()
}

pub fn cat_cross(g: &mut Graph, logits: Var, labels: &[usize], kind: RescaleKind) -> Result<Var> {
    check_labels(g.shape(logits), labels)?;
    let logp = log_rescaled(g, logits, kind)?;
    let picked = g.gather(logp, label_positions(labels))?;
    let m = g.mean(picked);
    Ok(g.neg(m))
}

pub fn cat_twin(
    g: &mut Graph,
    logits: Var,
    labels: &[usize],
    denom_logits: Var,
    kind: RescaleKind,
) -> Result<Var> {
    check_labels(g.shape(logits), labels)?;
    let (m, c) = g.shape(denom_logits);
    if m == 0 || c != g.shape(logits).1 {
        return Err(Error::Shape {
            op: "cat_twin",
            detail: format!("denominator batch {m}x{c} vs logits {:?}", g.shape(logits)),
        });
    }
    let logp = log_rescaled(g, logits, kind)?;
    let num = g.gather(logp, label_positions(labels))?;

    let logd = log_rescaled(g, denom_logits, kind)?;
    let per_class = g.transpose(logd);
    let lse = g.logsumexp_rows(per_class)?;
    let log_marginal = g.add_scalar(lse, -(m as f64).ln());
    let den = g.gather(log_marginal, labels.iter().map(|&y| (y, 0)).collect())?;

    let ratio = g.sub(num, den)?;
    let mean = g.mean(ratio);
    Ok(g.neg(mean))
}

pub fn bin_cross(g: &mut Graph, logits: Var, labels: &[usize], kind: RescaleKind) -> Result<Var> {
    let (n, c) = g.shape(logits);
    check_labels((n, c), labels)?;
    let mut onehot = Tensor::zeros(n, c);
    for (i, &y) in labels.iter().enumerate() {
        onehot.set(i, y, 1.0);
    }
    let others = onehot.map(|v| 1.0 - v);
    let onehot = g.constant(onehot);
    let others = g.constant(others);

    let logp = log_rescaled(g, logits, kind)?;
    let lognp = log_rescaled_complement(g, logits, kind)?;
    let pos = g.mul(onehot, logp)?;
    let neg = g.mul(others, lognp)?;
    let both = g.add(pos, neg)?;
    let s = g.sum(both);
    Ok(g.scale(s, -1.0 / n as f64))
}

/// Discriminator objective, minimised by the discriminator:
/// `-(1/M) Σ ln D(y_prior) - (1/N) Σ ln(1 - D(σ(f)))`.
///
/// Inputs are discriminator logits (`D = σ(l)`).
pub fn critic_disc(g: &mut Graph, prior_logits: Var, model_logits: Var) -> Result<Var> {
    let real = g.log_sigmoid(prior_logits);
    let real = g.mean(real);
    let neg = g.neg(model_logits);
    let fake = g.log_sigmoid(neg);
    let fake = g.mean(fake);
    let s = g.add(real, fake)?;
    Ok(g.neg(s))
}

/// Model side of the critic, minimised by encoder and predictor:
/// `(1/N) Σ ln(1 - D(σ(f)))`.
pub fn critic_model(g: &mut Graph, model_logits: Var) -> Var {
    let neg = g.neg(model_logits);
    let fake = g.log_sigmoid(neg);
    g.mean(fake)
}

pub fn infonce(g: &mut Graph, scores: Var, axis: InfoNceAxis) -> Result<Var> {
    let (n, m) = g.shape(scores);
    if n != m || n == 0 {
        return Err(Error::Shape {
            op: "infonce",
            detail: format!("score matrix must be square and non-empty, got {n}x{m}"),
        });
    }
    let diag = g.gather(scores, (0..n).map(|i| (i, i)).collect())?;
    let lse = match axis {
        InfoNceAxis::OverTargets => g.logsumexp_rows(scores)?,
        InfoNceAxis::OverSources => {
            let t = g.transpose(scores);
            g.logsumexp_rows(t)?
        }
    };
    let log_mean = g.add_scalar(lse, -(n as f64).ln());
    let per = g.sub(diag, log_mean)?;
    let mean = g.mean(per);
    Ok(g.neg(mean))
}

/// Cosine-similarity matrix `S_ij = cos(a_i, b_j)`.
pub fn cosine_scores(g: &mut Graph, anchors: Var, targets: Var) -> Result<Var> {
    if g.shape(anchors).1 != g.shape(targets).1 {
        return Err(Error::Shape {
            op: "cosine_scores",
            detail: format!("{:?} vs {:?}", g.shape(anchors), g.shape(targets)),
        });
    }
    let a = g.l2_normalize_rows(anchors)?;
    let b = g.l2_normalize_rows(targets)?;
    let bt = g.transpose(b);
    g.matmul(a, bt)
}

#[derive(Debug, Clone, Copy)]
pub struct LatentLoss {
    pub loss: Var,
    /// Anchors that found a same-class partner.
    pub anchors: usize,
    pub skipped: usize,
    /// No anchor had a partner; `loss` is the constant 0.
    pub degenerate: bool,
}

/// For each anchor, a uniformly drawn other index of the same class.
pub fn draw_partners(labels: &[usize], rng: &mut impl Rng) -> Vec<Option<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let candidates: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter(|&(j, &yj)| j != i && yj == y)
                .map(|(j, _)| j)
                .collect();
            if candidates.is_empty() {
                None
            } else {
                Some(candidates[rng.random_range(0..candidates.len())])
            }
        })
        .collect()
}

/// Supervised latent alignment: each anchor's positive is another sample of
/// its class (drawn with `rng`), the other anchors' positives are its
/// negatives.
pub fn latent_supervised(
    g: &mut Graph,
    latents: Var,
    labels: &[usize],
    temperature: f64,
    rng: &mut impl Rng,
) -> Result<LatentLoss> {
    let n = g.shape(latents).0;
    if labels.len() != n {
        return Err(Error::Shape {
            op: "latent_supervised",
            detail: format!("{} labels for {n} latents", labels.len()),
        });
    }
    let partners = draw_partners(labels, rng);
    let (kept, targets): (Vec<usize>, Vec<usize>) = partners
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.map(|j| (i, j)))
        .unzip();
    let skipped = n - kept.len();
    if kept.is_empty() {
        let zero = g.constant(Tensor::scalar(0.0));
        return Ok(LatentLoss {
            loss: zero,
            anchors: 0,
            skipped,
            degenerate: true,
        });
    }
    let anchors = g.select_rows(latents, kept.clone())?;
    let positives = g.select_rows(latents, targets)?;
    let positives = g.detach(positives);
    let scores = cosine_scores(g, anchors, positives)?;
    let scores = g.scale(scores, 1.0 / temperature);
    let loss = infonce(g, scores, InfoNceAxis::OverTargets)?;
    Ok(LatentLoss {
        loss,
        anchors: kept.len(),
        skipped,
        degenerate: false,
    })
}

/// Self-supervised latent alignment against augmented views. The augmented
/// latents are detached here, whatever their origin.
pub fn latent_augment(g: &mut Graph, anchors: Var, augmented: Var, temperature: f64) -> Result<Var> {
    if g.shape(anchors) != g.shape(augmented) {
        return Err(Error::Shape {
            op: "latent_augment",
            detail: format!("{:?} vs {:?}", g.shape(anchors), g.shape(augmented)),
        });
    }
    let targets = g.detach(augmented);
    let scores = cosine_scores(g, anchors, targets)?;
    let scores = g.scale(scores, 1.0 / temperature);
    infonce(g, scores, InfoNceAxis::OverTargets)
}

/// `sup + λ_C critic + λ_L latent + λ_A augment`, skipping absent terms.
/// Callers pass `None` for terms whose weight is zero so they are never
/// computed.
pub fn total(
    g: &mut Graph,
    sup: Var,
    critic: Option<Var>,
    latent: Option<Var>,
    augment: Option<Var>,
    w: &LossWeights,
) -> Result<Var> {
    let mut acc = sup;
    for (term, weight) in [
        (critic, w.lambda_critic),
        (latent, w.lambda_latent),
        (augment, w.lambda_augment),
    ] {
        if let Some(t) = term {
            if weight != 0.0 {
                let scaled = g.scale(t, weight);
                acc = g.add(acc, scaled)?;
            }
        }
    }
    Ok(acc)
}

/// Labelled logits for value-only evaluation.
#[derive(Debug, Clone)]
pub struct SupervisedBatch {
    pub logits: Tensor,
    pub labels: Vec<usize>,
}

impl SupervisedBatch {
    pub fn new(logits: Tensor, labels: Vec<usize>) -> Result<Self> {
        check_labels(logits.shape(), &labels)?;
        Ok(Self { logits, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?, labels)
    }
}

fn eval_scalar(build: impl FnOnce(&mut Graph) -> Result<Var>) -> Result<f64> {
    let mut g = Graph::new();
    let v = build(&mut g)?;
    Ok(g.value(v).item())
}

pub fn loss_cat_cross(batch: &SupervisedBatch, kind: RescaleKind) -> Result<f64> {
    eval_scalar(|g| {
        let l = g.constant(batch.logits.clone());
        cat_cross(g, l, &batch.labels, kind)
    })
}

pub fn loss_cat_twin(batch: &SupervisedBatch, denom_logits: &Tensor, kind: RescaleKind) -> Result<f64> {
    eval_scalar(|g| {
        let l = g.constant(batch.logits.clone());
        let d = g.constant(denom_logits.clone());
        cat_twin(g, l, &batch.labels, d, kind)
    })
}

pub fn loss_bin_cross(batch: &SupervisedBatch, kind: RescaleKind) -> Result<f64> {
    eval_scalar(|g| {
        let l = g.constant(batch.logits.clone());
        bin_cross(g, l, &batch.labels, kind)
    })
}

pub fn loss_infonce(scores: &Tensor, axis: InfoNceAxis) -> Result<f64> {
    eval_scalar(|g| {
        let s = g.constant(scores.clone());
        infonce(g, s, axis)
    })
}

pub fn loss_latent_augment(anchors: &Tensor, augmented: &Tensor) -> Result<f64> {
    eval_scalar(|g| {
        let a = g.constant(anchors.clone());
        let b = g.constant(augmented.clone());
        latent_augment(g, a, b, 1.0)
    })
}

/// Value and degenerate flag of [`latent_supervised`].
pub fn loss_latent_supervised(latents: &Tensor, labels: &[usize], rng: &mut impl Rng) -> Result<(f64, bool)> {
    let mut g = Graph::new();
    let z = g.constant(latents.clone());
    let out = latent_supervised(&mut g, z, labels, 1.0, rng)?;
    Ok((g.value(out.loss).item(), out.degenerate))
}

/// `disc` and `model` critic values from discriminator outputs `D ∈ (0, 1)`.
pub fn loss_critic_from_outputs(d_prior: &[f64], d_model: &[f64]) -> Result<(f64, f64)> {
    let to_logits = |d: &[f64]| -> Result<Tensor> {
        if let Some(bad) = d.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Domain(format!("discriminator output {bad} outside (0, 1)")));
        }
        Tensor::from_vec(d.len(), 1, d.iter().map(|p| (p / (1.0 - p)).ln()).collect())
    };
    let lp = to_logits(d_prior)?;
    let lm = to_logits(d_model)?;
    let mut g = Graph::new();
    let p = g.constant(lp);
    let m = g.constant(lm);
    let disc = critic_disc(&mut g, p, m)?;
    let model = critic_model(&mut g, m);
    Ok((g.value(disc).item(), g.value(model).item()))
}

/// Scalar form of the combined objective.
pub fn loss_total(sup: f64, critic: f64, latent: f64, augment: f64, w: &LossWeights) -> f64 {
    let mut t = sup;
    if w.lambda_critic != 0.0 {
        t += w.lambda_critic * critic;
    }
    if w.lambda_latent != 0.0 {
        t += w.lambda_latent * latent;
    }
    if w.lambda_augment != 0.0 {
        t += w.lambda_augment * augment;
    }
    t
}
