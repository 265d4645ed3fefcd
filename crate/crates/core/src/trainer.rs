//! The adversarial semi-supervised training loop, evaluation and ablations.
//!
//! One training step alternates two updates:
//!
//! 1. the discriminator minimises [`losses::critic_disc`] on one-hot prior
//!    samples against the current model's rescaled outputs on the
//!    unlabelled batch (the model is constant for this half-step);
//! 2. encoder and predictor minimise the combined objective: the supervised
//!    loss on the labelled batch, plus the weighted critic, supervised latent
//!    and augmentation latent terms. Terms with weight zero are never built.
//!
//! Runs are deterministic per seed: every random draw comes from a generator
//! derived from the seed.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentationConfig, Dataset, DualBatch, DualSampler, LabelledSubset};
use crate::densities::RescaleKind;
use crate::error::{Error, Result};
use crate::losses::{self, LossWeights};
use crate::nn::{
    warmup_lr, AdamW, AdamWConfig, Discriminator, DiscriminatorConfig, Encoder, EncoderConfig, Graph,
    Mode, ParamStore, Predictor, PredictorConfig, Tensor, Var,
};

/// Supervised objective on the labelled batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    CatCross,
    CatTwin,
    BinCross,
}

impl std::fmt::Display for LossVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossVariant::CatCross => "cat-cross",
            LossVariant::CatTwin => "cat-twin",
            LossVariant::BinCross => "bin-cross",
        })
    }
}

/// Which batch supplies the empirical marginal of the twin loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TwinDenominator {
    Unlabelled,
    Labelled,
}

/// Label prior the critic's real samples are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Uniform,
    /// Class frequencies of the labelled subset.
    Labelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Unlabelled rows per step.
    pub batch_size: usize,
    /// Labelled rows per step; `None` means `min(subset_size, 128)`.
    pub labelled_batch_size: Option<usize>,
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub warmup_factor: f64,
    pub weight_decay: f64,
    pub seeds: Vec<u64>,
    pub loss_variant: LossVariant,
    pub rescale: RescaleKind,
    pub weights: LossWeights,
    pub subset_size: usize,
    /// Divides cosine scores in both latent losses.
    pub temperature: f64,
    pub twin_denominator: TwinDenominator,
    pub prior: PriorKind,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 128,
            labelled_batch_size: None,
            base_lr: 5e-5,
            warmup_steps: 150,
            warmup_factor: 0.001,
            weight_decay: 0.01,
            seeds: vec![42, 1337, 3435],
            loss_variant: LossVariant::CatCross,
            rescale: RescaleKind::Softmax,
            weights: LossWeights::zero(),
            subset_size: 100,
            temperature: 1.0,
            twin_denominator: TwinDenominator::Unlabelled,
            prior: PriorKind::Uniform,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("train.epochs", self.epochs),
            ("train.batch_size", self.batch_size),
            ("train.subset_size", self.subset_size),
            ("train.labelled_batch_size", self.labelled_batch_size.unwrap_or(1)),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{k}` must be positive")));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config("`train.base_lr` must be positive".into()));
        }
        if !(self.warmup_factor > 0.0 && self.warmup_factor <= 1.0) {
            return Err(Error::Config("`train.warmup_factor` must lie in (0, 1]".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("`train.weight_decay` must be non-negative".into()));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config("`train.temperature` must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("`train.seeds` must not be empty".into()));
        }
        self.weights
            .validate()
            .map_err(|e| Error::Config(e.to_string().replace("config: `", "`train.weights.")))
    }

    pub fn labelled_batch(&self) -> usize {
        self.labelled_batch_size.unwrap_or(self.subset_size.min(128))
    }

    fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Everything a single run needs besides the data.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Setup {
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub predictor: PredictorConfig,
    pub discriminator: DiscriminatorConfig,
    pub augment: AugmentationConfig,
}

impl Setup {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.predictor.validate()?;
        self.discriminator.validate()?;
        self.augment.validate()
    }
}

/// Encoder, predictor and critic with their optimisers.
#[derive(Debug, Clone)]
pub struct Model {
    pub store: ParamStore,
    pub encoder: Encoder,
    pub predictor: Predictor,
    pub disc_store: ParamStore,
    pub discriminator: Discriminator,
    opt: AdamW,
    disc_opt: AdamW,
}

impl Model {
    /// Builds the networks for data of width `input_dim` with `n_classes`
    /// labels. A zero `encoder.input_dim` is filled in from `input_dim`.
    pub fn new(setup: &Setup, input_dim: usize, n_classes: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut enc = setup.encoder.clone();
        if enc.input_dim == 0 {
            enc.input_dim = input_dim;
        } else if enc.input_dim != input_dim {
            return Err(Error::Config(format!(
                "`encoder.input_dim` is {} but the data has width {input_dim}",
                enc.input_dim
            )));
        }
        if setup.predictor.n_classes != n_classes {
            return Err(Error::Config(format!(
                "`predictor.n_classes` is {} but the data has {n_classes} classes",
                setup.predictor.n_classes
            )));
        }
        let mut store = ParamStore::new();
        let encoder = Encoder::new(enc, &mut store, rng)?;
        let predictor = Predictor::new(setup.predictor.clone(), encoder.latent_dim(), &mut store, rng)?;
        let mut disc_store = ParamStore::new();
        let discriminator = Discriminator::new(setup.discriminator.clone(), n_classes, &mut disc_store, rng)?;
        let adamw = setup.train.adamw();
        Ok(Self {
            opt: AdamW::new(adamw, &store),
            disc_opt: AdamW::new(adamw, &disc_store),
            store,
            encoder,
            predictor,
            disc_store,
            discriminator,
        })
    }

    fn forward(&self, g: &mut Graph, x: &Tensor, mode: Mode, rng: &mut impl Rng) -> Result<(Var, Var)> {
        let xv = g.constant(x.clone());
        let z = self.encoder.forward(g, &self.store, xv, mode, rng)?;
        let f = self.predictor.forward(g, &self.store, z)?;
        Ok((z, f))
    }

    /// Eval-mode logits.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        // eval mode never draws
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let (_, f) = self.forward(&mut g, x, Mode::Eval, &mut unused)?;
        Ok(g.value(f).clone())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }
}

/// Loss values of one step; absent terms were not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub supervised: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_disc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub critic_model: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augment: Option<f64>,
    pub total: f64,
    /// The supervised latent loss found no same-class pair.
    pub degenerate: bool,
    pub skipped_anchors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub final_accuracy: f64,
    pub degenerate_batches: usize,
    pub skipped_anchors: usize,
    /// Not written to metric files, which must be reproducible.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Line<'a> {
    Step(&'a StepRecord),
    Epoch(&'a EpochRecord),
}

#[derive(Serialize)]
struct Summary<'a> {
    seed: u64,
    steps: usize,
    final_accuracy: f64,
    epoch_accuracy: Vec<f64>,
    degenerate_batches: usize,
    skipped_anchors: usize,
    setup: &'a Setup,
}

impl RunMetrics {
    /// One JSON object per step and per epoch, in the order they happened.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: Line| {
            out.push_str(&serde_json::to_string(&line).expect("plain data"));
            out.push('\n');
        };
        let mut epochs = self.epochs.iter().peekable();
        for (i, s) in self.steps.iter().enumerate() {
            push(Line::Step(s));
            let last_of_epoch = self.steps.get(i + 1).is_none_or(|n| n.epoch != s.epoch);
            if last_of_epoch {
                if let Some(e) = epochs.next_if(|e| e.epoch == s.epoch) {
                    push(Line::Epoch(e));
                }
            }
        }
        for e in epochs {
            push(Line::Epoch(e));
        }
        out
    }

    pub fn summary_json(&self, setup: &Setup) -> String {
        let s = Summary {
            seed: self.seed,
            steps: self.steps.len(),
            final_accuracy: self.final_accuracy,
            epoch_accuracy: self.epochs.iter().map(|e| e.test_accuracy).collect(),
            degenerate_batches: self.degenerate_batches,
            skipped_anchors: self.skipped_anchors,
            setup,
        };
        serde_json::to_string_pretty(&s).expect("plain data") + "\n"
    }

    /// Writes `metrics.jsonl` and `summary.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>, setup: &Setup) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.jsonl"), self.to_jsonl())?;
        std::fs::write(dir.join("summary.json"), self.summary_json(setup))?;
        Ok(())
    }
}

fn finite(component: &'static str, step: usize, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss { component, step, value })
    }
}

fn draw_prior(n: usize, freqs: &[f64], rng: &mut impl Rng) -> Tensor {
    let c = freqs.len();
    let mut t = Tensor::zeros(n, c);
    for r in 0..n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = c - 1;
        for (j, p) in freqs.iter().enumerate() {
            acc += p;
            if u < acc {
                k = j;
                break;
            }
        }
        t.set(r, k, 1.0);
    }
    t
}

/// Per-step inputs that do not change during a run.
pub struct StepContext<'a> {
    pub setup: &'a Setup,
    pub image_shape: Option<(usize, usize)>,
    /// Class probabilities the critic's real samples are drawn from.
    pub prior: &'a [f64],
}

/// One discriminator update followed by one model update.
pub fn train_step(
    model: &mut Model,
    batch: &DualBatch,
    ctx: &StepContext,
    step: usize,
    epoch: usize,
    rng: &mut impl Rng,
) -> Result<StepRecord> {
    let cfg = &ctx.setup.train;
    let w = cfg.weights;
    let kind = cfg.rescale;
    let lr = warmup_lr(step, cfg.base_lr, cfg.warmup_steps, cfg.warmup_factor);
    let labels = &batch.labelled.labels;

    let use_critic = w.lambda_critic != 0.0;
    let use_latent = w.lambda_latent != 0.0;
    let use_augment = w.lambda_augment != 0.0;
    let twin_on_unlabelled =
        cfg.loss_variant == LossVariant::CatTwin && cfg.twin_denominator == TwinDenominator::Unlabelled;
    let need_unlabelled = use_critic || use_augment || twin_on_unlabelled;

    let mut g = Graph::new();
    let (z_l, f_l) = model.forward(&mut g, &batch.labelled.features, Mode::Train, rng)?;
    let unlabelled = if need_unlabelled {
        Some(model.forward(&mut g, &batch.unlabelled.features, Mode::Train, rng)?)
    } else {
        None
    };

    let sup = match cfg.loss_variant {
        LossVariant::CatCross => losses::cat_cross(&mut g, f_l, labels, kind)?,
        LossVariant::BinCross => losses::bin_cross(&mut g, f_l, labels, kind)?,
        LossVariant::CatTwin => {
            let denom = match unlabelled {
                Some((_, f_u)) if twin_on_unlabelled => f_u,
                _ => f_l,
            };
            losses::cat_twin(&mut g, f_l, labels, denom, kind)?
        }
    };
    let sup_value = finite("supervised", step, g.value(sup).item())?;

    let mut critic_disc = None;
    let critic = match unlabelled {
        Some((_, f_u)) if use_critic => {
            let p_u = losses::rescale(&mut g, f_u, kind)?;

            // (a) discriminator half-step on the current outputs
            let mut dg = Graph::new();
            let fake = dg.constant(g.value(p_u).clone());
            let real = dg.constant(draw_prior(batch.unlabelled.features.rows(), ctx.prior, rng));
            let lf = model.discriminator.logits(&mut dg, &model.disc_store, fake)?;
            let lr_ = model.discriminator.logits(&mut dg, &model.disc_store, real)?;
            let d_loss = losses::critic_disc(&mut dg, lr_, lf)?;
            critic_disc = Some(finite("critic-disc", step, dg.value(d_loss).item())?);
            dg.backward(d_loss)?.accumulate_into(&mut model.disc_store);
            model.disc_opt.step(&mut model.disc_store, lr)?;

            // (b) model term against the updated critic
            let lm = model.discriminator.logits(&mut g, &model.disc_store, p_u)?;
            Some(losses::critic_model(&mut g, lm))
        }
        _ => None,
    };

    let mut degenerate = false;
    let mut skipped = 0;
    let latent = if use_latent {
        let out = losses::latent_supervised(&mut g, z_l, labels, cfg.temperature, rng)?;
        degenerate = out.degenerate;
        skipped = out.skipped;
        (!out.degenerate).then_some(out.loss)
    } else {
        None
    };

    let augmented = match unlabelled {
        Some((z_u, _)) if use_augment => {
            let x_aug = augment(&batch.unlabelled.features, ctx.image_shape, &ctx.setup.augment, rng)?;
            let xv = g.constant(x_aug);
            let z_aug = model.encoder.forward(&mut g, &model.store, xv, Mode::Train, rng)?;
            Some(losses::latent_augment(&mut g, z_u, z_aug, cfg.temperature)?)
        }
        _ => None,
    };

    let value = |g: &Graph, v: Option<Var>, name: &'static str| -> Result<Option<f64>> {
        v.map(|v| finite(name, step, g.value(v).item())).transpose()
    };
    let critic_model = value(&g, critic, "critic-model")?;
    let latent_value = value(&g, latent, "latent")?;
    let augment_value = value(&g, augmented, "augment")?;

    let total = losses::total(&mut g, sup, critic, latent, augmented, &w)?;
    let total_value = finite("total", step, g.value(total).item())?;
    g.backward(total)?.accumulate_into(&mut model.store);
    model.opt.step(&mut model.store, lr)?;
    // critic gradients reaching the discriminator through the model term are discarded
    model.disc_store.zero_grad();

    Ok(StepRecord {
        step,
        epoch,
        lr,
        supervised: sup_value,
        critic_disc,
        critic_model,
        latent: latent_value.or(degenerate.then_some(0.0)),
        augment: augment_value,
        total: total_value,
        degenerate,
        skipped_anchors: skipped,
    })
}

/// Fraction of rows whose argmax prediction equals the label (ties go to the
/// lowest class index).
pub fn evaluate_accuracy(model: &Model, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Data("test set is empty".into()));
    }
    const CHUNK: usize = 512;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..test.len()).collect();
    for chunk in idx.chunks(CHUNK) {
        let pred = model.predict(&test.rows(chunk))?;
        correct += pred.iter().zip(chunk).filter(|(p, &i)| **p == test.labels()[i]).count();
    }
    Ok(correct as f64 / test.len() as f64)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// A run's trained model and its metrics.
pub struct RunOutput {
    pub model: Model,
    pub metrics: RunMetrics,
}

/// Trains from scratch with `seed`, evaluating on `test` after every epoch.
pub fn run(setup: &Setup, train: &Dataset, test: &Dataset, seed: u64) -> Result<RunOutput> {
    setup.validate()?;
    let start = Instant::now();
    let cfg = &setup.train;
    let mut model = Model::new(setup, train.dim(), train.n_classes(), &mut stream(seed, 0))?;
    let subset = LabelledSubset::stratified(train, cfg.subset_size, &mut stream(seed, 1))?;
    let prior = match cfg.prior {
        PriorKind::Uniform => vec![1.0 / train.n_classes() as f64; train.n_classes()],
        PriorKind::Labelled => subset.class_frequencies(),
    };
    let mut sampler = DualSampler::new(train, subset, cfg.labelled_batch(), cfg.batch_size, cfg.shuffle, seed)?;
    let mut rng = stream(seed, 3);
    let ctx = StepContext {
        setup,
        image_shape: train.image_shape(),
        prior: &prior,
    };

    let mut steps = Vec::new();
    let mut epochs = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for _ in 0..sampler.steps_per_epoch() {
            let batch = sampler.sample(train);
            steps.push(train_step(&mut model, &batch, &ctx, step, epoch, &mut rng)?);
            step += 1;
        }
        epochs.push(EpochRecord {
            epoch,
            test_accuracy: evaluate_accuracy(&model, test)?,
        });
    }
    let metrics = RunMetrics {
        seed,
        final_accuracy: epochs.last().map_or(0.0, |e| e.test_accuracy),
        degenerate_batches: steps.iter().filter(|s| s.degenerate).count(),
        skipped_anchors: steps.iter().map(|s| s.skipped_anchors).sum(),
        steps,
        epochs,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput { model, metrics })
}

/// One configuration of the ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub name: String,
    pub loss_variant: LossVariant,
    pub rescale: RescaleKind,
    pub weights: LossWeights,
}

impl Cell {
    pub fn new(name: &str, loss_variant: LossVariant, rescale: RescaleKind, weights: LossWeights) -> Self {
        Self {
            name: name.into(),
            loss_variant,
            rescale,
            weights,
        }
    }
}

/// Weight values the grid draws from.
pub const WEIGHT_VALUES: [f64; 4] = [0.001, 0.01, 0.1, 1.0];

/// The activation sequence: baseline, cat-twin, +sigmoid, bin-cross,
/// +critic, +latent, +augment. Later cells keep the earlier terms.
pub fn standard_sequence(w: LossWeights) -> Vec<Cell> {
    use LossVariant::*;
    use RescaleKind::*;
    let critic = LossWeights::new(w.lambda_critic, 0.0, 0.0);
    let latent = LossWeights::new(w.lambda_critic, w.lambda_latent, 0.0);
    vec![
        Cell::new("baseline", CatCross, Softmax, LossWeights::zero()),
        Cell::new("cat-twin", CatTwin, Softmax, LossWeights::zero()),
        Cell::new("+sigmoid", CatTwin, Sigmoid, LossWeights::zero()),
        Cell::new("bin-cross", BinCross, Softmax, LossWeights::zero()),
        Cell::new("+critic", BinCross, Softmax, critic),
        Cell::new("+latent", BinCross, Softmax, latent),
        Cell::new("+augment", BinCross, Softmax, w),
    ]
}

/// Critic-free twins of the cells after `+critic`, so every cell with
/// `λ_C > 0` has a partner differing only in `λ_C`.
pub fn critic_controls(w: LossWeights) -> Vec<Cell> {
    use LossVariant::*;
    use RescaleKind::*;
    vec![
        Cell::new("+latent-critic", BinCross, Softmax, LossWeights::new(0.0, w.lambda_latent, 0.0)),
        Cell::new(
            "+augment-critic",
            BinCross,
            Softmax,
            LossWeights::new(0.0, w.lambda_latent, w.lambda_augment),
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub subset_sizes: Vec<usize>,
    /// Weights of the full configuration; the sequence activates them one by one.
    pub weights: LossWeights,
    /// Add the critic-free control cells.
    pub critic_controls: bool,
    /// Replaces the standard sequence when non-empty.
    pub cells: Vec<Cell>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            subset_sizes: vec![100, 1000],
            weights: LossWeights::new(0.001, 0.1, 0.1),
            critic_controls: true,
            cells: Vec::new(),
        }
    }
}

impl AblationConfig {
    pub fn grid(&self) -> Vec<Cell> {
        if !self.cells.is_empty() {
            return self.cells.clone();
        }
        let mut cells = standard_sequence(self.weights);
        if self.critic_controls {
            cells.extend(critic_controls(self.weights));
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.subset_sizes.is_empty() || self.subset_sizes.contains(&0) {
            return Err(Error::Config("`ablation.subset_sizes` must be non-empty and positive".into()));
        }
        self.weights.validate()?;
        for c in &self.cells {
            c.weights.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub subset_size: usize,
    pub seeds: Vec<SeedResult>,
    /// Some seed failed; statistics cover the remaining ones.
    pub failed: bool,
    pub best: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub median: Option<f64>,
}

impl CellResult {
    fn from_seeds(cell: Cell, subset_size: usize, seeds: Vec<SeedResult>) -> Self {
        let mut acc: Vec<f64> = seeds.iter().filter_map(|s| s.accuracy).collect();
        acc.sort_by(f64::total_cmp);
        let median = (!acc.is_empty()).then(|| {
            let m = acc.len() / 2;
            if acc.len() % 2 == 1 {
                acc[m]
            } else {
                0.5 * (acc[m - 1] + acc[m])
            }
        });
        Self {
            failed: seeds.iter().any(|s| s.error.is_some()),
            best: acc.last().copied(),
            min: acc.first().copied(),
            max: acc.last().copied(),
            median,
            cell,
            subset_size,
            seeds,
        }
    }

    pub fn range(&self) -> Option<f64> {
        Some(self.max? - self.min?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<CellResult>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

impl AblationReport {
    pub fn find(&self, name: &str, subset_size: usize) -> Option<&CellResult> {
        self.rows
            .iter()
            .find(|r| r.cell.name == name && r.subset_size == subset_size)
    }

    /// At least one seed of one cell succeeded.
    pub fn any_success(&self) -> bool {
        self.rows.iter().any(|r| r.best.is_some())
    }

    /// Median seed range over cells with `λ_C > 0`, and over their partners
    /// that differ only by `λ_C = 0`. Cells without a partner are ignored.
    pub fn critic_range_medians(&self) -> Option<(f64, f64)> {
        let mut with = Vec::new();
        let mut without = Vec::new();
        for r in self.rows.iter().filter(|r| r.cell.weights.lambda_critic > 0.0) {
            let partner = self.rows.iter().find(|o| {
                o.subset_size == r.subset_size
                    && o.cell.loss_variant == r.cell.loss_variant
                    && o.cell.rescale == r.cell.rescale
                    && o.cell.weights.lambda_critic == 0.0
                    && o.cell.weights.lambda_latent == r.cell.weights.lambda_latent
                    && o.cell.weights.lambda_augment == r.cell.weights.lambda_augment
            });
            if let (Some(a), Some(b)) = (r.range(), partner.and_then(CellResult::range)) {
                with.push(a);
                without.push(b);
            }
        }
        Some((median(with)?, median(without)?))
    }

    /// Tab-separated table, one row per cell and subset size.
    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"));
        let mut out = String::from(
            "cell\tvariant\trescale\tlambda_critic\tlambda_latent\tlambda_augment\tsubset_size\tbest\tmin\tmax\trange\tmedian\tfailed\n",
        );
        for r in &self.rows {
            let w = r.cell.weights;
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.cell.name,
                r.cell.loss_variant,
                r.cell.rescale,
                w.lambda_critic,
                w.lambda_latent,
                w.lambda_augment,
                r.subset_size,
                fmt(r.best),
                fmt(r.min),
                fmt(r.max),
                fmt(r.range()),
                fmt(r.median),
                r.failed
            ));
        }
        out
    }

    /// Writes `ablation.tsv` and `ablation.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ablation.tsv"), self.to_tsv())?;
        let json = serde_json::to_string_pretty(self).expect("plain data") + "\n";
        std::fs::write(dir.join("ablation.json"), json)?;
        Ok(())
    }
}

/// Runs every cell of the grid for every subset size and seed. Runs are
/// independent and execute in parallel on the current rayon pool; a failing
/// run is recorded and the sweep continues.
pub fn run_ablation(base: &Setup, ablation: &AblationConfig, train: &Dataset, test: &Dataset) -> Result<AblationReport> {
    ablation.validate()?;
    let grid = ablation.grid();
    let seeds = &base.train.seeds;
    let jobs: Vec<(usize, usize, u64)> = (0..grid.len())
        .flat_map(|c| {
            ablation
                .subset_sizes
                .iter()
                .flat_map(move |&s| seeds.iter().map(move |&seed| (c, s, seed)))
        })
        .collect();
    let results: Vec<SeedResult> = jobs
        .par_iter()
        .map(|&(c, subset_size, seed)| {
            let mut setup = base.clone();
            setup.train.loss_variant = grid[c].loss_variant;
            setup.train.rescale = grid[c].rescale;
            setup.train.weights = grid[c].weights;
            setup.train.subset_size = subset_size;
            match run(&setup, train, test, seed) {
                Ok(out) => SeedResult {
                    seed,
                    accuracy: Some(out.metrics.final_accuracy),
                    error: None,
                },
                Err(e) => SeedResult {
                    seed,
                    accuracy: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut results = results.into_iter();
    let mut rows = Vec::new();
    for cell in &grid {
        for &subset_size in &ablation.subset_sizes {
            let seed_results = results.by_ref().take(seeds.len()).collect();
            rows.push(CellResult::from_seeds(cell.clone(), subset_size, seed_results));
        }
    }
    Ok(AblationReport { rows })
}
