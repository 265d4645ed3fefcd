//! Datasets, the dual labelled/unlabelled sampler and augmentations.
//!
//! A [`Dataset`] is a flat `N x D` feature matrix with class labels. Image
//! datasets additionally remember their `H x W` shape so that spatial
//! augmentations can be applied; pixel values lie in `[0, 1]`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    n_classes: usize,
    image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        n_classes: usize,
        image_shape: Option<(usize, usize)>,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::ClassOutOfRange {
                index: bad,
                classes: n_classes,
            });
        }
        if let Some((h, w)) = image_shape {
            if h * w != features.cols() {
                return Err(Error::Data(format!(
                    "image shape {h}x{w} does not match feature width {}",
                    features.cols()
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            image_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    /// Feature rows at `indices`, in order.
    pub fn rows(&self, indices: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
        }
        Tensor::from_vec(indices.len(), d, data).expect("sized by construction")
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// The first `n` rows and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Dataset, Dataset)> {
        if n > self.len() {
            return Err(Error::Data(format!("cannot split {} rows at {n}", self.len())));
        }
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        let part = |idx: &[usize]| {
            Dataset::new(self.rows(idx), self.labels_at(idx), self.n_classes, self.image_shape)
        };
        Ok((part(&head)?, part(&tail)?))
    }

    /// The first `n` rows (all of them if `n` is larger).
    pub fn truncated(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        Dataset::new(self.rows(&idx), self.labels_at(&idx), self.n_classes, self.image_shape)
            .expect("subset of a valid dataset")
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn idx_header(bytes: &[u8], magic: u32, ndims: usize, what: &str) -> Result<Vec<usize>> {
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(Error::Truncated {
            expected: header,
            actual: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(Error::Idx(format!(
            "bad magic number in {what} file: expected {magic:#010x}, found {found:#010x}"
        )));
    }
    let dims: Vec<usize> = (0..ndims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = header + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Idx(format!(
            "{what} file has {} trailing bytes",
            bytes.len() - expected
        )));
    }
    Ok(dims)
}

/// Parses an IDX image file (`u8` pixels, three dimensions).
/// Returns `(count, height, width, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let dims = idx_header(bytes, IDX_IMAGES_MAGIC, 3, "image")?;
    Ok((dims[0], dims[1], dims[2], &bytes[16..]))
}

/// Parses an IDX label file (`u8` labels, one dimension).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    idx_header(bytes, IDX_LABELS_MAGIC, 1, "label")?;
    Ok(&bytes[8..])
}

/// Builds a dataset from in-memory IDX image and label files. Pixels are
/// scaled to `[0, 1]`; the class count is one more than the largest label.
pub fn idx_dataset(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let (n, h, w, pixels) = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if labels.len() != n {
        return Err(Error::Idx(format!(
            "image file holds {n} images but label file holds {} labels",
            labels.len()
        )));
    }
    let features = Tensor::from_vec(n, h * w, pixels.iter().map(|&p| f64::from(p) / 255.0).collect())?;
    let labels: Vec<usize> = labels.iter().map(|&y| usize::from(y)).collect();
    let n_classes = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    Dataset::new(features, labels, n_classes, Some((h, w)))
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| {
        std::fs::read(p).map_err(|e| Error::Idx(format!("cannot read {}: {e}", p.display())))
    };
    idx_dataset(&read(images_path.as_ref())?, &read(labels_path.as_ref())?)
}

/// Serialises `images` (values in `[0, 1]`) and labels as IDX files.
pub fn encode_idx(ds: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (h, w) = ds
        .image_shape
        .ok_or_else(|| Error::Data("only image datasets can be written as IDX".into()))?;
    let mut images = Vec::with_capacity(16 + ds.features.len());
    images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for d in [ds.len(), h, w] {
        images.extend_from_slice(&(d as u32).to_be_bytes());
    }
    images.extend(ds.features.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + ds.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    for &y in &ds.labels {
        let y = u8::try_from(y).map_err(|_| Error::Data(format!("label {y} does not fit in a byte")))?;
        labels.push(y);
    }
    Ok((images, labels))
}

/// Synthetic Gaussian clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlobSpec {
    pub n_classes: usize,
    /// Training rows per class.
    pub n_per_class: usize,
    /// Held-out rows per class, drawn around the same centers.
    pub test_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            n_classes: 10,
            n_per_class: 1000,
            test_per_class: 200,
            dim: 16,
            separation: 4.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("`blobs.n_classes` must be at least 2".into()));
        }
        if self.n_per_class == 0 || self.test_per_class == 0 || self.dim == 0 {
            return Err(Error::Config(
                "`blobs.n_per_class`, `blobs.test_per_class` and `blobs.dim` must be positive".into(),
            ));
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return Err(Error::Config("`blobs.separation` must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Training and test sets.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let all = gen_blobs(
            self.n_classes,
            self.n_per_class + self.test_per_class,
            self.dim,
            self.separation,
            self.seed,
        )?;
        all.split_at(self.n_classes * self.n_per_class)
    }
}

/// Cluster centers with every pair (when `dim >= n_classes`) or every pair of
/// neighbours on a circle (otherwise) at distance `separation`.
pub fn blob_centers(n_classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..n_classes)
        .map(|k| {
            let mut c = vec![0.0; dim];
            if dim >= n_classes {
                c[k] = separation / std::f64::consts::SQRT_2;
            } else {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / n_classes as f64;
                let radius = separation / (2.0 * (std::f64::consts::PI / n_classes as f64).sin());
                c[0] = radius * angle.cos();
                if dim > 1 {
                    c[1] = radius * angle.sin();
                }
            }
            c
        })
        .collect()
}

/// Unit-covariance Gaussian clusters around [`blob_centers`]. Row `i` has
/// class `i mod n_classes`.
pub fn gen_blobs(
    n_classes: usize,
    n_per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_classes < 2 || dim == 0 {
        return Err(Error::Data("blobs need at least two classes and one dimension".into()));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::Data(format!("invalid blob separation {separation}")));
    }
    let centers = blob_centers(n_classes, dim, separation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_classes * n_per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % n_classes;
        labels.push(y);
        data.extend(centers[y].iter().map(|c| c + Distribution::<f64>::sample(&StandardNormal, &mut rng)));
    }
    Dataset::new(Tensor::from_vec(n, dim, data)?, labels, n_classes, None)
}

/// The fixed labelled subset of one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledSubset {
    indices: Vec<usize>,
    per_class: Vec<usize>,
}

impl LabelledSubset {
    /// Draws `size` distinct rows with per-class counts differing by at most
    /// one. Classes receiving the extra rows are chosen at random.
    pub fn stratified(ds: &Dataset, size: usize, rng: &mut impl Rng) -> Result<Self> {
        if size == 0 {
            return Err(Error::Data("labelled subset is empty".into()));
        }
        let c = ds.n_classes();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &y) in ds.labels().iter().enumerate() {
            by_class[y].push(i);
        }
        let mut extra: Vec<usize> = (0..c).collect();
        extra.shuffle(rng);
        let mut want = vec![size / c; c];
        for &k in &extra[..size % c] {
            want[k] += 1;
        }
        let mut indices = Vec::with_capacity(size);
        for (k, pool) in by_class.iter_mut().enumerate() {
            if pool.len() < want[k] {
                return Err(Error::Data(format!(
                    "class {k} has {} rows, {} requested for the labelled subset",
                    pool.len(),
                    want[k]
                )));
            }
            let (chosen, _) = pool.partial_shuffle(rng, want[k]);
            indices.extend_from_slice(chosen);
        }
        indices.sort_unstable();
        Ok(Self {
            indices,
            per_class: want,
        })
    }

    pub fn from_indices(ds: &Dataset, mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Data("labelled subset is empty".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data("labelled subset has duplicate indices".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= ds.len()) {
            return Err(Error::Data(format!("subset index {bad} out of range")));
        }
        let mut per_class = vec![0; ds.n_classes()];
        for &i in &indices {
            per_class[ds.labels()[i]] += 1;
        }
        Ok(Self { indices, per_class })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn per_class(&self) -> &[usize] {
        &self.per_class
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Empirical class frequencies of the subset.
    pub fn class_frequencies(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.per_class.iter().map(|&k| k as f64 / n).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LabelledBatch {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub indices: Vec<usize>,
}

/// Rows from the full dataset with their labels stripped.
#[derive(Debug, Clone)]
pub struct UnlabelledBatch {
    pub features: Tensor,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DualBatch {
    pub labelled: LabelledBatch,
    pub unlabelled: UnlabelledBatch,
}

/// Parallel labelled and unlabelled streams.
///
/// The unlabelled stream walks an epoch permutation of the whole dataset in
/// chunks of `n_u` (the last chunk may be shorter); the labelled stream draws
/// `n_l` rows with replacement from the subset at every step. The two streams
/// own independent generators derived from one seed.
#[derive(Debug, Clone)]
pub struct DualSampler {
    subset: LabelledSubset,
    n_l: usize,
    n_u: usize,
    shuffle: bool,
    order: Vec<usize>,
    cursor: usize,
    labelled_rng: ChaCha8Rng,
    unlabelled_rng: ChaCha8Rng,
}

impl DualSampler {
    pub fn new(
        ds: &Dataset,
        subset: LabelledSubset,
        n_l: usize,
        n_u: usize,
        shuffle: bool,
        seed: u64,
    ) -> Result<Self> {
        if subset.is_empty() {
            return Err(Error::Data("labelled subset is empty".into()));
        }
        if n_l == 0 || n_u == 0 {
            return Err(Error::Data("batch sizes must be positive".into()));
        }
        if ds.is_empty() {
            return Err(Error::Data("dataset is empty".into()));
        }
        let mut labelled_rng = ChaCha8Rng::seed_from_u64(seed);
        labelled_rng.set_stream(1);
        let mut unlabelled_rng = ChaCha8Rng::seed_from_u64(seed);
        unlabelled_rng.set_stream(2);
        Ok(Self {
            subset,
            n_l,
            n_u: n_u.min(ds.len()),
            shuffle,
            order: (0..ds.len()).collect(),
            cursor: 0,
            labelled_rng,
            unlabelled_rng,
        })
    }

    pub fn subset(&self) -> &LabelledSubset {
        &self.subset
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.n_u)
    }

    /// The next batch pair. A new epoch starts (and is reshuffled) when the
    /// previous one is exhausted.
    pub fn sample(&mut self, ds: &Dataset) -> DualBatch {
        if self.cursor == 0 && self.shuffle {
            self.order.shuffle(&mut self.unlabelled_rng);
        }
        let end = (self.cursor + self.n_u).min(self.order.len());
        let u_idx = self.order[self.cursor..end].to_vec();
        self.cursor = if end == self.order.len() { 0 } else { end };

        let pool = self.subset.indices();
        let l_idx: Vec<usize> = (0..self.n_l)
            .map(|_| pool[self.labelled_rng.random_range(0..pool.len())])
            .collect();
        DualBatch {
            labelled: LabelledBatch {
                features: ds.rows(&l_idx),
                labels: ds.labels_at(&l_idx),
                indices: l_idx,
            },
            unlabelled: UnlabelledBatch {
                features: ds.rows(&u_idx),
                indices: u_idx,
            },
        }
    }
}

/// Stochastic input transformations. Each enabled op fires independently per
/// image with its own probability. On non-image data only Gaussian noise
/// applies, and values are not clamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationConfig {
    pub resize_crop: bool,
    /// Range of the kept area fraction.
    pub crop_scale: [f64; 2],
    /// Range of the crop aspect ratio.
    pub crop_ratio: [f64; 2],
    pub horizontal_flip: bool,
    /// Off for data whose meaning changes under mirroring (digits).
    pub flip_allowed: bool,
    pub flip_p: f64,
    pub jitter: bool,
    /// Brightness and contrast factors are drawn from `[1 - s, 1 + s]`.
    pub jitter_strength: f64,
    pub jitter_p: f64,
    pub grayscale: bool,
    pub grayscale_p: f64,
    pub blur: bool,
    pub blur_sigma: [f64; 2],
    pub blur_p: f64,
    pub solarize: bool,
    pub solarize_threshold: f64,
    pub solarize_p: f64,
    pub gaussian_noise: bool,
    pub noise_sigma: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        Self {
            resize_crop: true,
            crop_scale: [0.8, 1.0],
            crop_ratio: [3.0 / 4.0, 4.0 / 3.0],
            horizontal_flip: true,
            flip_allowed: false,
            flip_p: 0.5,
            jitter: true,
            jitter_strength: 0.4,
            jitter_p: 0.8,
            grayscale: true,
            grayscale_p: 0.2,
            blur: true,
            blur_sigma: [0.1, 2.0],
            blur_p: 0.5,
            solarize: true,
            solarize_threshold: 0.5,
            solarize_p: 0.2,
            gaussian_noise: true,
            noise_sigma: 0.1,
        }
    }
}

impl AugmentationConfig {
    /// Every op disabled: [`augment`] is the identity.
    pub fn none() -> Self {
        Self {
            resize_crop: false,
            horizontal_flip: false,
            jitter: false,
            grayscale: false,
            blur: false,
            solarize: false,
            gaussian_noise: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |k: &str, why: &str| Err(Error::Config(format!("`augment.{k}` {why}")));
        let [lo, hi] = self.crop_scale;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad("crop_scale", "must satisfy 0 < lo <= hi <= 1");
        }
        let [lo, hi] = self.crop_ratio;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("crop_ratio", "must satisfy 0 < lo <= hi");
        }
        let [lo, hi] = self.blur_sigma;
        if !(lo > 0.0 && lo <= hi && hi <= 10.0) {
            return bad("blur_sigma", "must satisfy 0 < lo <= hi <= 10");
        }
        if !(0.0..=1.0).contains(&self.jitter_strength) {
            return bad("jitter_strength", "must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.solarize_threshold) {
            return bad("solarize_threshold", "must lie in [0, 1]");
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return bad("noise_sigma", "must be finite and non-negative");
        }
        for (k, p) in [
            ("flip_p", self.flip_p),
            ("jitter_p", self.jitter_p),
            ("grayscale_p", self.grayscale_p),
            ("blur_p", self.blur_p),
            ("solarize_p", self.solarize_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(k, "must be a probability");
            }
        }
        Ok(())
    }
}

fn bilinear(img: &[f64], w: usize, y: f64, x: f64) -> f64 {
    let h = img.len() / w;
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = img[y0 * w + x0] * (1.0 - fx) + img[y0 * w + x1] * fx;
    let bottom = img[y1 * w + x0] * (1.0 - fx) + img[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

fn resize_crop(img: &[f64], h: usize, w: usize, cfg: &AugmentationConfig, rng: &mut impl Rng) -> Vec<f64> {
    let scale = rng.random_range(cfg.crop_scale[0]..=cfg.crop_scale[1]);
    let log_ratio = rng.random_range(cfg.crop_ratio[0].ln()..=cfg.crop_ratio[1].ln());
    let ratio = log_ratio.exp();
    let cw = ((w as f64) * (scale * ratio).sqrt()).clamp(1.0, w as f64);
    let ch = ((h as f64) * (scale / ratio).sqrt()).clamp(1.0, h as f64);
    let oy = rng.random_range(0.0..=(h as f64 - ch));
    let ox = rng.random_range(0.0..=(w as f64 - cw));
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            // pixel centers of the output grid mapped into the crop box
            let y = oy + (r as f64 + 0.5) * ch / h as f64 - 0.5;
            let x = ox + (c as f64 + 0.5) * cw / w as f64 - 0.5;
            out[r * w + c] = bilinear(img, w, y, x);
        }
    }
    out
}

fn gaussian_blur(img: &mut [f64], h: usize, w: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * img[r * w + clampi(c as isize + k as isize - radius, w)])
                .sum();
        }
    }
    for r in 0..h {
        for c in 0..w {
            img[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * tmp[clampi(r as isize + k as isize - radius, h) * w + c])
                .sum();
        }
    }
}

fn augment_image(img: &mut Vec<f64>, h: usize, w: usize, cfg: &AugmentationConfig, rng: &mut impl Rng) {
    if cfg.resize_crop {
        *img = resize_crop(img, h, w, cfg, rng);
    }
    if cfg.horizontal_flip && cfg.flip_allowed && rng.random_bool(cfg.flip_p) {
        for row in img.chunks_mut(w) {
            row.reverse();
        }
    }
    if cfg.jitter && rng.random_bool(cfg.jitter_p) {
        let s = cfg.jitter_strength;
        let brightness = rng.random_range(1.0 - s..=1.0 + s);
        let contrast = rng.random_range(1.0 - s..=1.0 + s);
        for v in img.iter_mut() {
            *v = (*v * brightness).clamp(0.0, 1.0);
        }
        let mean = img.iter().sum::<f64>() / img.len() as f64;
        for v in img.iter_mut() {
            *v = ((*v - mean) * contrast + mean).clamp(0.0, 1.0);
        }
    }
    // Single-channel images are already grey; the draw keeps the random
    // stream aligned with multi-channel inputs.
    if cfg.grayscale {
        let _ = rng.random_bool(cfg.grayscale_p);
    }
    if cfg.blur && rng.random_bool(cfg.blur_p) {
        let sigma = rng.random_range(cfg.blur_sigma[0]..=cfg.blur_sigma[1]);
        gaussian_blur(img, h, w, sigma);
    }
    if cfg.solarize && rng.random_bool(cfg.solarize_p) {
        for v in img.iter_mut() {
            if *v >= cfg.solarize_threshold {
                *v = 1.0 - *v;
            }
        }
    }
    if cfg.gaussian_noise && cfg.noise_sigma > 0.0 {
        for v in img.iter_mut() {
            *v += cfg.noise_sigma * Distribution::<f64>::sample(&StandardNormal, rng);
        }
    }
    for v in img.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Applies independent random augmentations to each row of `x`.
pub fn augment(
    x: &Tensor,
    image_shape: Option<(usize, usize)>,
    cfg: &AugmentationConfig,
    rng: &mut impl Rng,
) -> Result<Tensor> {
    cfg.validate()?;
    let (n, d) = x.shape();
    let mut out = x.clone();
    match image_shape {
        Some((h, w)) => {
            if h * w != d {
                return Err(Error::Shape {
                    op: "augment",
                    detail: format!("image shape {h}x{w} vs width {d}"),
                });
            }
            for r in 0..n {
                let mut img = x.row(r).to_vec();
                augment_image(&mut img, h, w, cfg, rng);
                out.row_mut(r).copy_from_slice(&img);
            }
        }
        None => {
            if cfg.gaussian_noise && cfg.noise_sigma > 0.0 {
                for v in out.data_mut() {
                    *v += cfg.noise_sigma * Distribution::<f64>::sample(&StandardNormal, rng);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_set(n: usize, h: usize, w: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * h * w).map(|_| rng.random::<f64>()).collect();
        let labels = (0..n).map(|i| i % 10).collect();
        Dataset::new(Tensor::from_vec(n, h * w, data).unwrap(), labels, 10, Some((h, w))).unwrap()
    }

    #[test]
    fn idx_round_trip() {
        let ds = image_set(7, 3, 4, 0);
        let (img, lab) = encode_idx(&ds).unwrap();
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        assert_eq!(&lab[..4], &[0, 0, 8, 1]);
        let back = idx_dataset(&img, &lab).unwrap();
        assert_eq!(back.len(), 7);
        assert_eq!(back.image_shape(), Some((3, 4)));
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.features().data().iter().zip(ds.features().data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
            assert!((0.0..=1.0).contains(a));
        }
    }

    #[test]
    fn idx_errors() {
        let ds = image_set(5, 2, 2, 1);
        let (img, lab) = encode_idx(&ds).unwrap();

        let mut bad = img.clone();
        bad[3] = 0x01;
        assert!(matches!(idx_dataset(&bad, &lab), Err(Error::Idx(m)) if m.contains("magic")));
        assert!(matches!(idx_dataset(&img, &img), Err(Error::Idx(_))));

        let cut = &img[..img.len() - 3];
        match idx_dataset(cut, &lab) {
            Err(Error::Truncated { expected, actual }) => {
                assert_eq!(expected, 16 + 20);
                assert_eq!(actual, 33);
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = idx_dataset(cut, &lab).unwrap_err().to_string();
        assert!(msg.contains("36") && msg.contains("33"));
        assert!(matches!(idx_dataset(&img[..10], &lab), Err(Error::Truncated { .. })));

        let (_, short_labels) = encode_idx(&ds.truncated(4)).unwrap();
        assert!(matches!(idx_dataset(&img, &short_labels), Err(Error::Idx(m)) if m.contains("5 images")));
    }

    #[test]
    fn load_idx_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let ds = image_set(3, 2, 2, 2);
        let (img, lab) = encode_idx(&ds).unwrap();
        std::fs::write(dir.path().join("i"), img).unwrap();
        std::fs::write(dir.path().join("l"), lab).unwrap();
        let back = load_idx(dir.path().join("i"), dir.path().join("l")).unwrap();
        assert_eq!(back.len(), 3);
        assert!(load_idx(dir.path().join("missing"), dir.path().join("l")).is_err());
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = gen_blobs(3, 20, 5, 2.0, 9).unwrap();
        let b = gen_blobs(3, 20, 5, 2.0, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, gen_blobs(3, 20, 5, 2.0, 10).unwrap());
        assert_eq!(a.class_counts(), vec![20; 3]);
        assert!(gen_blobs(3, 20, 5, -1.0, 9).is_err());
    }

    #[test]
    fn blob_center_spacing() {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let c = blob_centers(4, 6, 3.0);
        for i in 0..4 {
            for j in 0..i {
                assert!((dist(&c[i], &c[j]) - 3.0).abs() < 1e-12);
            }
        }
        let c = blob_centers(10, 2, 10.0);
        for i in 0..10 {
            assert!((dist(&c[i], &c[(i + 1) % 10]) - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn stratified_subset() {
        let ds = gen_blobs(10, 50, 2, 1.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = LabelledSubset::stratified(&ds, 100, &mut rng).unwrap();
        assert_eq!(s.per_class(), &[10; 10]);
        let mut counts = vec![0; 10];
        for &i in s.indices() {
            counts[ds.labels()[i]] += 1;
        }
        assert_eq!(counts, vec![10; 10]);
        let s = LabelledSubset::stratified(&ds, 37, &mut rng).unwrap();
        let (lo, hi) = (s.per_class().iter().min().unwrap(), s.per_class().iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert_eq!(s.len(), 37);
        assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
        assert!(LabelledSubset::stratified(&ds, 0, &mut rng).is_err());
        assert!(LabelledSubset::stratified(&ds, 501, &mut rng).is_err());
    }

    #[test]
    fn unshuffled_epoch_covers_everything() {
        let ds = gen_blobs(2, 10, 3, 1.0, 0).unwrap();
        let subset = LabelledSubset::from_indices(&ds, vec![0, 1, 2]).unwrap();
        let mut s = DualSampler::new(&ds, subset, 4, ds.len(), false, 0).unwrap();
        assert_eq!(s.steps_per_epoch(), 1);
        let b = s.sample(&ds);
        assert_eq!(b.unlabelled.indices, (0..20).collect::<Vec<_>>());
        assert_eq!(b.unlabelled.features, *ds.features());
        assert!(b.labelled.indices.iter().all(|i| *i < 3));
        assert_eq!(b.labelled.labels, ds.labels_at(&b.labelled.indices));
    }

    #[test]
    fn shuffled_epochs_are_permutations() {
        let ds = gen_blobs(3, 7, 2, 1.0, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let subset = LabelledSubset::stratified(&ds, 6, &mut rng).unwrap();
        let mut s = DualSampler::new(&ds, subset, 5, 4, true, 3).unwrap();
        assert_eq!(s.steps_per_epoch(), 6);
        for _ in 0..2 {
            let mut seen: Vec<usize> = (0..6).flat_map(|_| s.sample(&ds).unlabelled.indices).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..21).collect::<Vec<_>>());
        }
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let ds = gen_blobs(3, 30, 2, 1.0, 0).unwrap();
        let subset = LabelledSubset::stratified(&ds, 9, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let run = |n_u: usize| {
            let mut s = DualSampler::new(&ds, subset.clone(), 4, n_u, true, 11).unwrap();
            (0..5).map(|_| s.sample(&ds)).collect::<Vec<_>>()
        };
        let (a, b, c) = (run(8), run(8), run(16));
        for i in 0..5 {
            assert_eq!(a[i].unlabelled.indices, b[i].unlabelled.indices);
            assert_eq!(a[i].labelled.indices, b[i].labelled.indices);
            // a different unlabelled cadence leaves the labelled stream untouched
            assert_eq!(a[i].labelled.indices, c[i].labelled.indices);
        }
    }

    #[test]
    fn disabled_augmentation_is_identity() {
        let ds = image_set(4, 5, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = augment(ds.features(), ds.image_shape(), &AugmentationConfig::none(), &mut rng).unwrap();
        assert_eq!(&out, ds.features());
    }

    #[test]
    fn augmentation_keeps_shape_and_range() {
        let ds = image_set(16, 6, 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = AugmentationConfig {
            noise_sigma: 0.5,
            ..AugmentationConfig::default()
        };
        let out = augment(ds.features(), ds.image_shape(), &cfg, &mut rng).unwrap();
        assert_eq!(out.shape(), ds.features().shape());
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(&out, ds.features());
    }

    #[test]
    fn flip_never_applied_when_disallowed() {
        // a left-right ramp: flipping is the only op that reverses it
        let (h, w) = (3, 8);
        let row: Vec<f64> = (0..w).map(|c| c as f64 / (w - 1) as f64).collect();
        let x = Tensor::from_rows(&vec![row.repeat(h); 50]).unwrap();
        let mut cfg = AugmentationConfig::none();
        cfg.horizontal_flip = true;
        cfg.flip_p = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(augment(&x, Some((h, w)), &cfg, &mut rng).unwrap(), x);
        cfg.flip_allowed = true;
        let flipped = augment(&x, Some((h, w)), &cfg, &mut rng).unwrap();
        assert_eq!(flipped.get(0, 0), 1.0);
    }

    #[test]
    fn blob_augmentation_is_noise_only() {
        let ds = gen_blobs(2, 5, 3, 20.0, 0).unwrap();
        let cfg = AugmentationConfig {
            noise_sigma: 0.0,
            ..AugmentationConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(&augment(ds.features(), None, &cfg, &mut rng).unwrap(), ds.features());
        let cfg = AugmentationConfig::default();
        let out = augment(ds.features(), None, &cfg, &mut rng).unwrap();
        // unclamped: blob coordinates far outside [0, 1] survive
        assert!(out.data().iter().any(|v| *v > 5.0));
        let diff: f64 = out.data().iter().zip(ds.features().data()).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 0.0 && diff / 30.0 < 0.5);
    }

    #[test]
    fn blur_preserves_constant_images() {
        let mut img = vec![0.25; 20];
        gaussian_blur(&mut img, 4, 5, 1.7);
        assert!(img.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn augmentation_validation() {
        let mut cfg = AugmentationConfig::default();
        cfg.crop_scale = [0.9, 0.8];
        assert!(cfg.validate().is_err());
        let mut cfg = AugmentationConfig::default();
        cfg.blur_p = 1.5;
        assert!(cfg.validate().unwrap_err().to_string().contains("blur_p"));
    }
}
