//! Encoder, predictor and discriminator networks.
//!
//! The encoder keeps the topology of a foundation-model adapter: a feature
//! extractor yields a global (CLS-analog) vector plus a small set of patch
//! tokens; the tokens pass through one transformer layer and are mean-pooled;
//! the pooled token is concatenated with the CLS vector and projected into
//! the latent space. The CLS vector bypasses the transformer.
//!
//! Here the feature extractor is small and trainable rather than a frozen
//! pretrained backbone. Setting [`EncoderConfig::freeze_backbone`] fixes its
//! initial weights to emulate the frozen regime.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::layers::{Linear, TransformerLayer};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Whether stochastic layers are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Flattened input size; 0 means "take it from the dataset".
    pub input_dim: usize,
    /// Width of the CLS-analog vector.
    pub feature_dim: usize,
    pub n_patch_tokens: usize,
    pub token_dim: usize,
    pub projector_hidden: usize,
    pub dropout_p: f64,
    pub leaky_slope: f64,
    pub freeze_backbone: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_dim: 0,
            feature_dim: 64,
            n_patch_tokens: 4,
            token_dim: 32,
            projector_hidden: 256,
            dropout_p: 0.3,
            leaky_slope: 0.01,
            freeze_backbone: false,
        }
    }
}

impl EncoderConfig {
    /// Full-size widths: 2304-wide CLS analog, 768-wide tokens, 8000-wide projector.
    pub fn full_scale(input_dim: usize) -> Self {
        Self {
            input_dim,
            feature_dim: 2304,
            token_dim: 768,
            projector_hidden: 8000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("encoder.input_dim", self.input_dim),
            ("encoder.feature_dim", self.feature_dim),
            ("encoder.n_patch_tokens", self.n_patch_tokens),
            ("encoder.token_dim", self.token_dim),
            ("encoder.projector_hidden", self.projector_hidden),
        ];
        if let Some((k, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("`{k}` must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config("`encoder.dropout_p` must lie in [0, 1)".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(Error::Config("`encoder.leaky_slope` must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub hidden: usize,
    pub n_classes: usize,
    pub leaky_slope: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            n_classes: 10,
            leaky_slope: 0.01,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("`predictor.hidden` must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config("`predictor.n_classes` must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub hidden: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { hidden: 64 }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("`discriminator.hidden` must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    cls: Linear,
    patches: Linear,
    transformer: TransformerLayer,
    projector: Linear,
}

impl Encoder {
    pub fn new(config: EncoderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let tokens = config.n_patch_tokens * config.token_dim;
        let cls = Linear::new(store, "encoder.backbone.cls", config.input_dim, config.feature_dim, true, rng);
        let patches = Linear::new(store, "encoder.backbone.patches", config.input_dim, tokens, true, rng);
        let transformer = TransformerLayer::new(store, "encoder.transformer", config.token_dim, rng);
        let projector = Linear::new(
            store,
            "encoder.projector",
            config.feature_dim + config.token_dim,
            config.projector_hidden,
            true,
            rng,
        );
        if config.freeze_backbone {
            for id in cls.params().into_iter().chain(patches.params()) {
                store.set_trainable(id, false);
            }
        }
        Ok(Self {
            config,
            cls,
            patches,
            transformer,
            projector,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.projector_hidden
    }

    /// Backbone substitute: the CLS-analog `N x feature_dim` and the patch
    /// tokens as `(N·T) x token_dim`.
    pub fn backbone(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<(Var, Var)> {
        let slope = self.config.leaky_slope;
        let n = g.shape(x).0;
        let cls = self.cls.forward(g, store, x)?;
        let cls = g.leaky_relu(cls, slope);
        let p = self.patches.forward(g, store, x)?;
        let p = g.leaky_relu(p, slope);
        let tokens = g.reshape(p, n * self.config.n_patch_tokens, self.config.token_dim)?;
        Ok((cls, tokens))
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let (_, d) = g.shape(x);
        if d != self.config.input_dim {
            return Err(Error::Shape {
                op: "encoder",
                detail: format!("input width {d}, expected {}", self.config.input_dim),
            });
        }
        let (cls, tokens) = self.backbone(g, store, x)?;
        let t = self.config.n_patch_tokens;
        let mixed = self.transformer.forward(g, store, tokens, t)?;
        let pooled = g.mean_pool_groups(mixed, t)?;
        let joined = g.concat_cols(&[cls, pooled])?;
        let z = self.projector.forward(g, store, joined)?;
        let z = g.leaky_relu(z, self.config.leaky_slope);
        match mode {
            Mode::Train => g.dropout(z, self.config.dropout_p, rng),
            Mode::Eval => Ok(z),
        }
    }

    pub fn transformer(&self) -> &TransformerLayer {
        &self.transformer
    }
}

/// Classifier head `h(z̃)`.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub config: PredictorConfig,
    hidden: Linear,
    out: Linear,
}

impl Predictor {
    pub fn new(
        config: PredictorConfig,
        latent_dim: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            hidden: Linear::new(store, "predictor.hidden", latent_dim, config.hidden, true, rng),
            out: Linear::new(store, "predictor.out", config.hidden, config.n_classes, true, rng),
            config,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Result<Var> {
        let h = self.hidden.forward(g, store, z)?;
        let h = g.leaky_relu(h, self.config.leaky_slope);
        self.out.forward(g, store, h)
    }
}

/// Critic over class-probability vectors; outputs one logit per row.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    layers: [Linear; 3],
}

impl Discriminator {
    pub fn new(
        config: DiscriminatorConfig,
        n_classes: usize,
        store: &mut ParamStore,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        Ok(Self {
            layers: [
                Linear::new(store, "discriminator.0", n_classes, h, true, rng),
                Linear::new(store, "discriminator.1", h, h, true, rng),
                Linear::new(store, "discriminator.2", h, 1, true, rng),
            ],
            config,
        })
    }

    /// Logit `l` with `D = σ(l)`, shape `N x 1`.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, y: Var) -> Result<Var> {
        let h = self.layers[0].forward(g, store, y)?;
        let h = g.relu(h);
        let h = self.layers[1].forward(g, store, h)?;
        let h = g.relu(h);
        self.layers[2].forward(g, store, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(Linear::params).collect()
    }
}
