//! The run-configuration document.
//!
//! A run is described by one TOML file with a section per component. Every
//! key has a default, so an empty file is a valid configuration; unknown keys
//! are rejected.
//!
//! ```toml
//! output_dir = "runs/blobs"
//!
//! [dataset]
//! kind = "blobs"
//! separation = 4.0
//!
//! [train]
//! base_lr = 2e-3
//! loss_variant = "bin-cross"
//! weights = { lambda_critic = 0.01, lambda_latent = 0.1, lambda_augment = 0.1 }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_idx, AugmentationConfig, BlobSpec, Dataset};
use crate::error::{Error, Result};
use crate::nn::{DiscriminatorConfig, EncoderConfig, PredictorConfig};
use crate::trainer::{AblationConfig, Setup, TrainConfig};

/// Paths of an IDX train/test pair. Relative paths are resolved against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSpec {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Keep only the first rows of the training file.
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetConfig {
    Blobs(BlobSpec),
    Idx(IdxSpec),
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs(BlobSpec::default())
    }
}

impl DatasetConfig {
    /// Training and test sets.
    pub fn load(&self, base_dir: &Path) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetConfig::Blobs(spec) => spec.generate(),
            DatasetConfig::Idx(spec) => {
                let p = |q: &Path| base_dir.join(q);
                let train = load_idx(p(&spec.train_images), p(&spec.train_labels))?;
                let test = load_idx(p(&spec.test_images), p(&spec.test_labels))?;
                let train = spec.train_limit.map_or_else(|| train.clone(), |n| train.truncated(n));
                let test = spec.test_limit.map_or_else(|| test.clone(), |n| test.truncated(n));
                if train.n_classes() != test.n_classes() {
                    // the label range of a truncated file can be narrower
                    let c = train.n_classes().max(test.n_classes());
                    let widen = |d: Dataset| {
                        Dataset::new(d.features().clone(), d.labels().to_vec(), c, d.image_shape())
                    };
                    return Ok((widen(train)?, widen(test)?));
                }
                Ok((train, test))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub predictor: PredictorConfig,
    pub discriminator: DiscriminatorConfig,
    pub augment: AugmentationConfig,
    pub ablation: AblationConfig,
    /// Directory relative dataset paths are resolved against; set by [`RunConfig::load`].
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs"),
            dataset: DatasetConfig::default(),
            train: TrainConfig::default(),
            encoder: EncoderConfig::default(),
            predictor: PredictorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            augment: AugmentationConfig::default(),
            ablation: AblationConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::ConfigNotFound(path.display().to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let mut cfg = Self::parse(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config: "))))?;
        cfg.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data")
    }

    pub fn validate(&self) -> Result<()> {
        self.setup().validate()?;
        let mut enc = self.encoder.clone();
        if enc.input_dim == 0 {
            enc.input_dim = 1;
        }
        enc.validate()?;
        self.ablation.validate()?;
        if let DatasetConfig::Blobs(spec) = &self.dataset {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn setup(&self) -> Setup {
        Setup {
            train: self.train.clone(),
            encoder: self.encoder.clone(),
            predictor: self.predictor.clone(),
            discriminator: self.discriminator.clone(),
            augment: self.augment.clone(),
        }
    }

    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        self.dataset.load(&self.base_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::LossVariant;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.train.loss_variant = LossVariant::BinCross;
        cfg.train.base_lr = 3e-3;
        cfg.dataset = DatasetConfig::Idx(IdxSpec {
            train_images: "a".into(),
            train_labels: "b".into(),
            test_images: "c".into(),
            test_labels: "d".into(),
            train_limit: Some(10),
            test_limit: None,
        });
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn sections_and_inline_tables() {
        let cfg = RunConfig::parse(
            r#"
            output_dir = "x"
            [dataset]
            kind = "blobs"
            dim = 3
            [train]
            loss_variant = "cat-twin"
            rescale = "sigmoid"
            weights = { lambda_critic = 0.5, lambda_latent = 0.0, lambda_augment = 1.0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.output_dir, PathBuf::from("x"));
        assert!(matches!(cfg.dataset, DatasetConfig::Blobs(BlobSpec { dim: 3, .. })));
        assert_eq!(cfg.train.weights.lambda_augment, 1.0);
    }

    #[test]
    fn unknown_keys_are_named() {
        for (doc, key) in [
            ("[train]\nepochz = 3", "epochz"),
            ("lr = 1", "lr"),
            ("[encoder]\nwidth = 2", "width"),
            ("[dataset]\nkind = \"blobs\"\nsep = 2", "sep"),
        ] {
            let msg = RunConfig::parse(doc).unwrap_err().to_string();
            assert!(msg.contains(key), "{msg}");
        }
    }

    #[test]
    fn invalid_values_are_named() {
        let msg = RunConfig::parse("[train]\nepochs = 0").unwrap_err().to_string();
        assert!(msg.contains("train.epochs"), "{msg}");
        let msg = RunConfig::parse("[train]\nepochs = \"five\"").unwrap_err().to_string();
        assert!(msg.contains("epochs"), "{msg}");
        let msg = RunConfig::parse("[train.weights]\nlambda_critic = -1.0\nlambda_latent = 0.0\nlambda_augment = 0.0")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("lambda_critic"), "{msg}");
        let msg = RunConfig::parse("[encoder]\ndropout_p = 1.0").unwrap_err().to_string();
        assert!(msg.contains("encoder.dropout_p"), "{msg}");
    }

    #[test]
    fn missing_file() {
        let err = RunConfig::load("/definitely/not/here.toml").unwrap_err();
        assert!(matches!(err, Error::ConfigNotFound(_)));
        assert!(err.to_string().contains("config not found"));
    }
}
