//! Self-check suites run by `miturbo verify` and the acceptance tests.
//!
//! Each suite returns a [`SuiteReport`]: a list of named properties with the
//! measured value, the threshold it is held to and the margin between them.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::densities::RescaleKind;
use crate::error::{Error, Result};
use crate::losses::{self, InfoNceAxis};
use crate::nn::gradcheck::{check_graph, check_params, compare, numeric_gradient, GradCheckReport};
use crate::nn::{
    Discriminator, DiscriminatorConfig, Encoder, EncoderConfig, Graph, Linear, Mode, ParamStore,
    Predictor, PredictorConfig, SelfAttention, SwiGlu, Tensor, TransformerLayer, Var,
};
use crate::oracles::{
    ba_bound, exact_jsd, exact_kld, exact_mi, jsd_via_discriminator, kld_via_discriminator,
    optimal_discriminator, twin_bound, ConditionalTable, DiscreteJoint,
};
use crate::stablemath::{log_sigmoid, log_softmax, logsumexp};

/// How a measured value is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// value < threshold
    Below,
    /// value >= threshold
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub bound: Bound,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            bound: Bound::Below,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            bound: Bound::AtLeast,
        }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::Below => self.value < self.threshold,
            Bound::AtLeast => self.value >= self.threshold,
        }
    }

    /// Distance to the threshold, positive when passing.
    pub fn margin(&self) -> f64 {
        match self.bound {
            Bound::Below => self.threshold - self.value,
            Bound::AtLeast => self.value - self.threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let op = match c.bound {
                Bound::Below => "<",
                Bound::AtLeast => ">=",
            };
            writeln!(
                f,
                "{} {}/{}: {:.3e} {op} {:.3e} (margin {:.3e})",
                if c.passed() { "PASS" } else { "FAIL" },
                self.suite,
                c.name,
                c.value,
                c.threshold,
                c.margin()
            )?;
        }
        Ok(())
    }
}

/// Named suites accepted by [`run_suite`].
pub const SUITES: [&str; 4] = ["gradcheck", "bounds", "stability", "collapse"];

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteReport> {
    match name {
        "gradcheck" => gradcheck_suite(seed),
        "bounds" => bounds_suite(1000, seed),
        "stability" => stability_suite(seed),
        "collapse" => collapse_suite(2000, seed),
        other => Err(Error::Config(format!(
            "unknown suite `{other}`, expected one of {}",
            SUITES.join(", ")
        ))),
    }
}

/// `ba_bound` and `twin_bound` against `exact_mi` on random joints of at most
/// 8x8, equality at the true conditional, and the discriminator forms of the
/// divergences against their closed forms.
pub fn bounds_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_ba = f64::INFINITY;
    let mut worst_twin = f64::INFINITY;
    let mut worst_eq: f64 = 0.0;
    let mut worst_jsd: f64 = 0.0;
    let mut worst_kld: f64 = 0.0;
    for _ in 0..trials {
        let nx = rng.random_range(1..=8);
        let ny = rng.random_range(1..=8);
        let j = DiscreteJoint::random(nx, ny, &mut rng)?;
        let scale = rng.random_range(0.1..5.0);
        let q = ConditionalTable::random(nx, ny, scale, &mut rng);
        let mi = exact_mi(&j);
        worst_ba = worst_ba.min(mi - ba_bound(&j, &q)?);
        worst_twin = worst_twin.min(mi - twin_bound(&j, &q)?);
        let truth = j.conditional();
        worst_eq = worst_eq
            .max((ba_bound(&j, &truth)? - mi).abs())
            .max((twin_bound(&j, &truth)? - mi).abs());

        let p = j.py().to_vec();
        let r = DiscreteJoint::random(1, ny, &mut rng)?.py().to_vec();
        let d = optimal_discriminator(&p, &r);
        worst_jsd = worst_jsd.max((jsd_via_discriminator(&p, &r, &d)? - exact_jsd(&p, &r)?).abs());
        worst_kld = worst_kld.max((kld_via_discriminator(&p, &d)? - exact_kld(&p, &r)?).abs());
    }
    let bern = [0.9, 0.1];
    let fair = [0.5, 0.5];
    let d = optimal_discriminator(&bern, &fair);
    let kld = kld_via_discriminator(&bern, &d)?;
    Ok(SuiteReport {
        suite: "bounds".into(),
        checks: vec![
            Check::at_least(format!("mi - ba_bound over {trials} joints (min)"), worst_ba, -1e-10),
            Check::at_least(format!("mi - twin_bound over {trials} joints (min)"), worst_twin, -1e-10),
            Check::below("|bound - mi| at the true conditional (max)", worst_eq, 1e-12),
            Check::below("|jsd via optimal discriminator - exact| (max)", worst_jsd, 1e-12),
            Check::below("|kld via optimal discriminator - exact| (max)", worst_kld, 1e-12),
            Check::below("bernoulli kld (0.9,0.1) vs (0.5,0.5) error", (kld - 0.3680642071684971).abs(), 1e-12),
        ],
    })
}

/// Finite outputs for inputs up to `|x| = 1e6` and shift invariance.
pub fn stability_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lsm = log_softmax(&[1000.0, 0.0])?;
    let mut extremes_finite = true;
    let mut worst_shift: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=32);
        let amp = 10f64.powf(rng.random_range(-3.0..6.0));
        let x: Vec<f64> = (0..n).map(|_| amp * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let lse = logsumexp(&x)?;
        let ls = log_softmax(&x)?;
        extremes_finite &= lse.is_finite() && ls.iter().all(|v| v.is_finite());
        extremes_finite &= x.iter().all(|&v| log_sigmoid(v).is_finite() && log_sigmoid(v) <= 0.0);
        // inputs and shift on a 2^-20 grid, so `x + shift` is exact in f64
        let grid = |v: f64| (v * 1048576.0).round() / 1048576.0;
        let x: Vec<f64> = x.into_iter().map(grid).collect();
        let ls = log_softmax(&x)?;
        let shift = grid(amp * (2.0 * rng.random::<f64>() - 1.0));
        let xs: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let ls2 = log_softmax(&xs)?;
        for (a, b) in ls.iter().zip(&ls2) {
            worst_shift = worst_shift.max((a - b).abs());
        }
        let total: f64 = ls.iter().map(|v| v.exp()).sum();
        worst_norm = worst_norm.max((total - 1.0).abs());
    }
    let edge = [1e6, -1e6, 0.0];
    extremes_finite &= logsumexp(&edge)?.is_finite() && log_softmax(&edge)?.iter().all(|v| v.is_finite());
    extremes_finite &= log_sigmoid(1e6).is_finite() && log_sigmoid(-1e6).is_finite();
    let lsm_err = (lsm[0].abs()).max((lsm[1] + 1000.0).abs());
    Ok(SuiteReport {
        suite: "stability".into(),
        checks: vec![
            Check::below("log_softmax([1000, 0]) error", if lsm.iter().all(|v| v.is_finite()) { lsm_err } else { f64::INFINITY }, 1e-12),
            Check::at_least("finite outputs for |x| <= 1e6", f64::from(u8::from(extremes_finite)), 1.0),
            Check::below("log_softmax shift invariance (max error)", worst_shift, 1e-10),
            Check::below("softmax normalisation error (max)", worst_norm, 1e-12),
        ],
    })
}

fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
    Tensor::from_vec(rows, cols, data).expect("sized by construction")
}

fn project(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.shape(v);
    let w = g.constant(random(r, c, &mut ChaCha8Rng::seed_from_u64(seed)));
    let m = g.mul(v, w)?;
    Ok(g.sum(m))
}

/// Gradient-check tolerance of the suite.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const H: f64 = 1e-5;

/// Central finite differences against the analytic gradient of every loss
/// and every layer, on random small instances.
pub fn gradcheck_suite(seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut record = |name: &str, r: GradCheckReport| {
        checks.push(Check::below(name, r.max_rel_error, GRADCHECK_TOLERANCE));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // losses, over several random instances each
    let mut worst: Vec<(&str, GradCheckReport)> = Vec::new();
    let mut merge = |name: &'static str, r: GradCheckReport| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some((_, acc)) => *acc = acc.merge(r),
        None => worst.push((name, r)),
    };
    for _ in 0..10 {
        let n = rng.random_range(1..=8);
        let c = rng.random_range(2..=5);
        let d = rng.random_range(2..=7);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let logits = random(n, c, &mut rng).map(|v| 2.0 * v);
        let denom = random(rng.random_range(1..=8), c, &mut rng).map(|v| 2.0 * v);
        let scores = random(n, n, &mut rng).map(|v| 2.0 * v);
        let za = random(n, d, &mut rng);
        let zb = random(n, d, &mut rng);
        for (kind, tag) in [(RescaleKind::Softmax, "softmax"), (RescaleKind::Sigmoid, "sigmoid")] {
            let cross = if tag == "softmax" { "loss cat-cross softmax" } else { "loss cat-cross sigmoid" };
            let twin = if tag == "softmax" { "loss cat-twin softmax" } else { "loss cat-twin sigmoid" };
            let bin = if tag == "softmax" { "loss bin-cross softmax" } else { "loss bin-cross sigmoid" };
            merge(cross, check_graph(std::slice::from_ref(&logits), H, |g, v| losses::cat_cross(g, v[0], &labels, kind))?);
            merge(bin, check_graph(std::slice::from_ref(&logits), H, |g, v| losses::bin_cross(g, v[0], &labels, kind))?);
            merge(
                twin,
                check_graph(&[logits.clone(), denom.clone()], H, |g, v| {
                    losses::cat_twin(g, v[0], &labels, v[1], kind)
                })?,
            );
        }
        merge(
            "loss infonce over-targets",
            check_graph(std::slice::from_ref(&scores), H, |g, v| losses::infonce(g, v[0], InfoNceAxis::OverTargets))?,
        );
        merge(
            "loss infonce over-sources",
            check_graph(std::slice::from_ref(&scores), H, |g, v| losses::infonce(g, v[0], InfoNceAxis::OverSources))?,
        );
        merge(
            "loss latent-augment",
            check_graph(std::slice::from_ref(&za), H, |g, v| {
                let b = g.constant(zb.clone());
                losses::latent_augment(g, v[0], b, 1.0)
            })?,
        );
        let lm = random(n, 1, &mut rng).map(|v| 3.0 * v);
        let lp = random(n + 1, 1, &mut rng).map(|v| 3.0 * v);
        merge("loss critic-disc", check_graph(&[lp, lm.clone()], H, |g, v| losses::critic_disc(g, v[0], v[1]))?);
        merge("loss critic-model", check_graph(&[lm], H, |g, v| Ok(losses::critic_model(g, v[0])))?);

        // positives are detached, so the numeric side holds them fixed
        let pair_seed: u64 = rng.random();
        let mut g = Graph::new();
        let zv = g.input(za.clone());
        let out = losses::latent_supervised(&mut g, zv, &labels, 1.0, &mut ChaCha8Rng::seed_from_u64(pair_seed))?;
        if !out.degenerate {
            let analytic = g.backward(out.loss)?.get(zv).cloned().unwrap_or_else(|| Tensor::zeros(n, d));
            let partners = losses::draw_partners(&labels, &mut ChaCha8Rng::seed_from_u64(pair_seed));
            let (kept, targets): (Vec<usize>, Vec<usize>) =
                partners.iter().enumerate().filter_map(|(i, p)| p.map(|j| (i, j))).unzip();
            let numeric = numeric_gradient(
                |xs| {
                    let mut g = Graph::new();
                    let z = g.constant(xs[0].clone());
                    let z0 = g.constant(za.clone());
                    let a = g.select_rows(z, kept.clone())?;
                    let p = g.select_rows(z0, targets.clone())?;
                    let l = losses::latent_augment(&mut g, a, p, 1.0)?;
                    Ok(g.value(l).item())
                },
                std::slice::from_ref(&za),
                H,
            )?;
            merge("loss latent-supervised", compare(&[analytic], &numeric));
        }
    }
    for (name, r) in worst {
        record(name, r);
    }

    // layers
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 5, 3, true, &mut rng);
    let attn = SelfAttention::new(&mut store, "attn", 4, &mut rng);
    let ffn = SwiGlu::new(&mut store, "ffn", 4, 3, &mut rng);
    let block = TransformerLayer::new(&mut store, "block", 4, &mut rng);
    randomise_biases(&mut store, &mut rng);
    let x5 = random(4, 5, &mut rng);
    let x4 = random(6, 4, &mut rng);
    record(
        "layer linear",
        check_params(&store, &[x5], H, |g, s, v| {
            let y = lin.forward(g, s, v[0])?;
            project(g, y, 1)
        })?,
    );
    record(
        "layer self-attention",
        check_params(&store, std::slice::from_ref(&x4), H, |g, s, v| {
            let (y, _) = attn.forward(g, s, v[0], 3)?;
            project(g, y, 2)
        })?,
    );
    record(
        "layer swiglu",
        check_params(&store, std::slice::from_ref(&x4), H, |g, s, v| {
            let y = ffn.forward(g, s, v[0])?;
            project(g, y, 3)
        })?,
    );
    record(
        "layer transformer",
        check_params(&store, &[x4], H, |g, s, v| {
            let y = block.forward(g, s, v[0], 2)?;
            project(g, y, 4)
        })?,
    );

    // composed encoder -> predictor -> loss
    let mut store = ParamStore::new();
    let enc_cfg = EncoderConfig {
        input_dim: 4,
        feature_dim: 5,
        n_patch_tokens: 4,
        token_dim: 3,
        projector_hidden: 6,
        ..EncoderConfig::default()
    };
    let encoder = Encoder::new(enc_cfg, &mut store, &mut rng)?;
    let pred_cfg = PredictorConfig {
        hidden: 5,
        n_classes: 3,
        ..PredictorConfig::default()
    };
    let predictor = Predictor::new(pred_cfg, encoder.latent_dim(), &mut store, &mut rng)?;
    let mut disc_store = ParamStore::new();
    let disc = Discriminator::new(DiscriminatorConfig { hidden: 4 }, 3, &mut disc_store, &mut rng)?;
    randomise_biases(&mut store, &mut rng);
    randomise_biases(&mut disc_store, &mut rng);
    let x = random(5, 4, &mut rng);
    let labels = [0usize, 2, 1, 2, 0];
    let forward = |g: &mut Graph, s: &ParamStore, x: Var| -> Result<(Var, Var)> {
        let z = encoder.forward(g, s, x, Mode::Train, &mut ChaCha8Rng::seed_from_u64(7))?;
        Ok((z, predictor.forward(g, s, z)?))
    };
    record(
        "encoder+predictor cat-cross",
        check_params(&store, std::slice::from_ref(&x), H, |g, s, v| {
            let (_, f) = forward(g, s, v[0])?;
            losses::cat_cross(g, f, &labels, RescaleKind::Softmax)
        })?,
    );
    record(
        "encoder+predictor cat-twin",
        check_params(&store, std::slice::from_ref(&x), H, |g, s, v| {
            let (_, f) = forward(g, s, v[0])?;
            losses::cat_twin(g, f, &labels, f, RescaleKind::Sigmoid)
        })?,
    );
    record(
        "encoder+predictor bin-cross",
        check_params(&store, std::slice::from_ref(&x), H, |g, s, v| {
            let (_, f) = forward(g, s, v[0])?;
            losses::bin_cross(g, f, &labels, RescaleKind::Softmax)
        })?,
    );
    record(
        "encoder+predictor critic-model",
        check_params(&store, std::slice::from_ref(&x), H, |g, s, v| {
            let (_, f) = forward(g, s, v[0])?;
            let p = losses::rescale(g, f, RescaleKind::Softmax)?;
            let l = disc.logits(g, &disc_store, p)?;
            Ok(losses::critic_model(g, l))
        })?,
    );
    let target = random(5, 6, &mut rng);
    record(
        "encoder latent-augment",
        check_params(&store, &[x], H, |g, s, v| {
            let (z, _) = forward(g, s, v[0])?;
            let t = g.constant(target.clone());
            losses::latent_augment(g, z, t, 1.0)
        })?,
    );
    let probs = random(5, 3, &mut rng).map(f64::abs);
    let prior = Tensor::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]])?;
    record(
        "discriminator critic-disc",
        check_params(&disc_store, &[probs, prior], H, |g, s, v| {
            let lm = disc.logits(g, s, v[0])?;
            let lp = disc.logits(g, s, v[1])?;
            losses::critic_disc(g, lp, lm)
        })?,
    );

    Ok(SuiteReport {
        suite: "gradcheck".into(),
        checks,
    })
}

// Zero biases behind a dead ReLU put pre-activations exactly on the kink,
// where one-sided and central differences disagree.
fn randomise_biases(store: &mut ParamStore, rng: &mut impl Rng) {
    for p in store.iter_mut() {
        if p.name.ends_with(".bias") {
            p.value = random(1, p.value.cols(), rng).map(|v| 0.3 * v);
        }
    }
}

/// Objective used by [`sigmoid_collapse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapseObjective {
    /// Conditional term only: `-ln σ(f_y)`.
    Conditional,
    /// Conditional term over the batch marginal of the outputs.
    Twin,
    /// Conditional term plus the critic against one-hot prior samples.
    Critic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseOutcome {
    pub objective: CollapseObjective,
    pub steps: usize,
    /// Mean sigmoid output over every sample and class.
    pub mean_output: f64,
    pub mean_target_output: f64,
    pub mean_non_target_output: f64,
}

/// Linear classifier with sigmoid outputs trained by plain gradient descent
/// on four well separated clusters in the positive orthant.
pub fn sigmoid_collapse(objective: CollapseObjective, steps: usize, seed: u64) -> Result<CollapseOutcome> {
    const C: usize = 4;
    const PER_CLASS: usize = 16;
    const LR: f64 = 1.0;
    const DISC_LR: f64 = 0.2;
    const LAMBDA_CRITIC: f64 = 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = C * PER_CLASS;
    let mut x = Tensor::zeros(n, C);
    let labels: Vec<usize> = (0..n).map(|i| i % C).collect();
    for (i, &y) in labels.iter().enumerate() {
        for c in 0..C {
            let centre = if c == y { 3.0 } else { 1.5 };
            x.set(i, c, centre + 0.3 * (2.0 * rng.random::<f64>() - 1.0));
        }
    }

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "linear", C, C, true, &mut rng);
    let mut disc_store = ParamStore::new();
    let disc = Discriminator::new(DiscriminatorConfig { hidden: 16 }, C, &mut disc_store, &mut rng)?;
    let descend = |s: &mut ParamStore, lr: f64| {
        for p in s.iter_mut() {
            if let Some(grad) = p.grad.take() {
                p.value = p.value.zip_map(&grad, |v, g| v - lr * g);
            }
        }
    };

    for _ in 0..steps {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let f = lin.forward(&mut g, &store, xv)?;
        let mut loss = match objective {
            CollapseObjective::Twin => losses::cat_twin(&mut g, f, &labels, f, RescaleKind::Sigmoid)?,
            _ => losses::cat_cross(&mut g, f, &labels, RescaleKind::Sigmoid)?,
        };
        if objective == CollapseObjective::Critic {
            let p = g.sigmoid(f);
            let mut dg = Graph::new();
            let fake = dg.constant(g.value(p).clone());
            let mut onehot = Tensor::zeros(n, C);
            for r in 0..n {
                onehot.set(r, rng.random_range(0..C), 1.0);
            }
            let real = dg.constant(onehot);
            let lf = disc.logits(&mut dg, &disc_store, fake)?;
            let lr = disc.logits(&mut dg, &disc_store, real)?;
            let d_loss = losses::critic_disc(&mut dg, lr, lf)?;
            dg.backward(d_loss)?.accumulate_into(&mut disc_store);
            descend(&mut disc_store, DISC_LR);

            let lm = disc.logits(&mut g, &disc_store, p)?;
            let critic = losses::critic_model(&mut g, lm);
            let critic = g.scale(critic, LAMBDA_CRITIC);
            loss = g.add(loss, critic)?;
        }
        g.backward(loss)?.accumulate_into(&mut store);
        descend(&mut store, LR);
        disc_store.zero_grad();
    }

    let mut g = Graph::new();
    let xv = g.constant(x);
    let f = lin.forward(&mut g, &store, xv)?;
    let out = g.value(f).map(crate::stablemath::sigmoid);
    let (mut target, mut other) = (0.0, 0.0);
    for (i, &y) in labels.iter().enumerate() {
        for c in 0..C {
            if c == y {
                target += out.get(i, c);
            } else {
                other += out.get(i, c);
            }
        }
    }
    Ok(CollapseOutcome {
        objective,
        steps,
        mean_output: out.sum() / (n * C) as f64,
        mean_target_output: target / n as f64,
        mean_non_target_output: other / (n * (C - 1)) as f64,
    })
}

/// The three [`sigmoid_collapse`] runs held to their thresholds.
pub fn collapse_suite(steps: usize, seed: u64) -> Result<SuiteReport> {
    let plain = sigmoid_collapse(CollapseObjective::Conditional, steps, seed)?;
    let twin = sigmoid_collapse(CollapseObjective::Twin, steps, seed)?;
    let critic = sigmoid_collapse(CollapseObjective::Critic, steps, seed)?;
    Ok(SuiteReport {
        suite: "collapse".into(),
        checks: vec![
            Check::at_least("conditional only: mean output", plain.mean_output, 0.99),
            Check::below("twin denominator: mean non-target output", twin.mean_non_target_output, 0.5),
            Check::below("critic: mean non-target output", critic.mean_non_target_output, 0.5),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass() {
        for name in SUITES {
            let r = run_suite(name, 0).unwrap();
            assert!(r.passed(), "{r}");
            assert!(!r.checks.is_empty());
        }
        assert!(run_suite("nope", 0).is_err());
    }

    #[test]
    fn collapse_directions() {
        for seed in 0..3 {
            let r = collapse_suite(2000, seed).unwrap();
            assert!(r.passed(), "seed {seed}\n{r}");
        }
    }

    #[test]
    fn check_margins() {
        let c = Check::below("x", 0.25, 1.0);
        assert!(c.passed() && c.margin() == 0.75);
        let c = Check::at_least("y", -1.0, 0.0);
        assert!(!c.passed() && c.margin() == -1.0);
        let report = SuiteReport {
            suite: "s".into(),
            checks: vec![c],
        };
        assert!(report.to_string().starts_with("FAIL s/y"));
    }
}
