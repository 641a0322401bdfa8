//! File-to-file pipeline stages and experiment protocols.
//!
//! Stages communicate through artifacts in one output directory, so the
//! expensive steps (extraction, codebook fitting) are independently
//! rerunnable and cacheable. The in-memory path ([`extract_descriptors`] +
//! [`run_experiment`]) backs the sweep and grid commands, which reuse one
//! extraction across many train/evaluate rounds.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::codebook::{inertia, lloyd_exact, minibatch_fit, Codebook, MiniBatchConfig, TrainMeta};
use crate::container;
use crate::daisy::{daisy_grid, DaisyParams};
use crate::dataset::{
    scan_corpus, split, stratified_split_indices, LabeledCorpus, SplitSpec,
};
use crate::descriptor::{Descriptor, DescriptorKind, DescriptorSet};
use crate::encoding::{bovw_histogram, encode_feature, FeatureLayout, FeatureMode};
use crate::error::{Error, Result};
use crate::evaluate::{
    confusion_csv, evaluate_model, grid_csv, grid_search, k_sweep, EvalMeta, EvalReport,
    GridSearchResult, GridSpec,
};
use crate::gray::{load_image, GrayImage};
use crate::hog::{hog_descriptor, HogParams};
use crate::svm::{ovr_train, predict, KernelSpec, SvmConfig};
use crate::synth::gaussian_blobs_nd;

/// Fraction of the training split held out as validation data during the
/// C/gamma grid search.
pub const GRID_VALIDATION_FRACTION: f64 = 0.25;

/// Everything a pipeline run needs. Stage seeds are derived from the master
/// `seed`: the split uses `seed`, the codebook `seed + 1`, and the grid
/// search's validation carve-out `seed + 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    pub train_fraction: f64,
    pub seed: u64,
    pub mode: FeatureMode,
    pub hog: HogParams,
    /// Fixed `(width, height)` window for the global HOG descriptor: larger
    /// images are center-cropped, smaller ones zero-padded. `None` uses each
    /// image's full frame, which requires every image in the corpus to share
    /// one size (the HOG length must be constant across the feature matrix).
    pub hog_window: Option<(usize, usize)>,
    pub daisy: DaisyParams,
    pub k: usize,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub shift_tolerance: f64,
    pub kernel: KernelSpec,
    pub c: f64,
    pub svm_tol: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset_root: PathBuf::from("."),
            output_dir: PathBuf::from("out"),
            train_fraction: 0.4,
            seed: 0,
            mode: FeatureMode::Hybrid,
            hog: HogParams::default(),
            hog_window: None,
            daisy: DaisyParams::default(),
            k: 600,
            batch_size: 1024,
            max_iterations: 300,
            shift_tolerance: 1e-4,
            kernel: KernelSpec::Linear,
            c: 1.0,
            svm_tol: 1e-3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if let Some((w, h)) = self.hog_window {
            if w == 0 || h == 0 {
                return Err(Error::Config("hog_window sides must be positive".into()));
            }
        }
        self.hog.validate()?;
        self.daisy.validate()?;
        self.codebook_config().validate()?;
        self.kernel.validate()?;
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.svm_tol > 0.0) {
            return Err(Error::Config(format!(
                "svm_tol must be positive, got {}",
                self.svm_tol
            )));
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
        }
    }

    pub fn codebook_config(&self) -> MiniBatchConfig {
        MiniBatchConfig {
            k: self.k,
            batch_size: self.batch_size,
            max_iterations: self.max_iterations,
            shift_tolerance: self.shift_tolerance,
            seed: self.seed.wrapping_add(1),
        }
    }

    pub fn svm_config(&self) -> SvmConfig {
        SvmConfig {
            c: self.c,
            kernel: self.kernel,
            tol: self.svm_tol,
            ..SvmConfig::default()
        }
    }

    /// Report metadata for this configuration; `k` is passed in because it
    /// is 0 in hog_only mode regardless of the configured vocabulary size.
    pub fn eval_meta(&self, k: usize) -> EvalMeta {
        EvalMeta {
            seed: self.seed,
            train_fraction: self.train_fraction,
            feature_mode: self.mode.as_str().to_string(),
            k,
            kernel: self.kernel.kind_str().to_string(),
            c: self.c,
            gamma: self.kernel.gamma(),
        }
    }
}

/// Names of every artifact a pipeline writes under its output directory.
#[derive(Debug, Clone)]
pub struct ArtifactPaths {
    pub dir: PathBuf,
}

/// Which half of the train/test partition an artifact belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Train,
    Test,
}

impl Side {
    pub fn name(&self) -> &'static str {
        match self {
            Side::Train => "train",
            Side::Test => "test",
        }
    }
}

impl ArtifactPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ArtifactPaths { dir: dir.into() }
    }

    pub fn split_manifest(&self) -> PathBuf {
        self.dir.join("split.json")
    }

    pub fn classes(&self) -> PathBuf {
        self.dir.join("classes.json")
    }

    pub fn labels(&self, side: Side) -> PathBuf {
        self.dir.join(format!("labels_{}.json", side.name()))
    }

    pub fn daisy(&self, side: Side) -> PathBuf {
        self.dir.join(format!("daisy_{}.skdesc", side.name()))
    }

    pub fn hog(&self, side: Side) -> PathBuf {
        self.dir.join(format!("hog_{}.skdesc", side.name()))
    }

    pub fn features(&self, side: Side) -> PathBuf {
        self.dir.join(format!("features_{}.skdesc", side.name()))
    }

    pub fn codebook(&self) -> PathBuf {
        self.dir.join("codebook.skcbk")
    }

    pub fn model(&self) -> PathBuf {
        self.dir.join("model.sksvm")
    }

    pub fn train_report(&self) -> PathBuf {
        self.dir.join("train_report.json")
    }

    pub fn eval_report(&self) -> PathBuf {
        self.dir.join("eval_report.json")
    }

    pub fn confusion(&self) -> PathBuf {
        self.dir.join("confusion.csv")
    }

    pub fn sweep(&self) -> PathBuf {
        self.dir.join("sweep_k.csv")
    }

    pub fn grid(&self) -> PathBuf {
        self.dir.join("grid.csv")
    }

    pub fn grid_report(&self) -> PathBuf {
        self.dir.join("grid_report.json")
    }

    pub fn bench_report(&self) -> PathBuf {
        self.dir.join("bench_kmeans.json")
    }
}

/// Sizes rayon's global pool; `None` keeps the default (logical cores).
/// Safe to call repeatedly — only the first global initialization wins.
pub fn init_thread_pool(threads: Option<usize>) {
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global();
    }
}

/// The image as the HOG stage sees it: the full frame, or a fixed centered
/// window (crop from larger images, zero-pad around smaller ones). Cropping
/// and padding keep the native resolution, which resizing would not.
pub fn hog_input(img: &GrayImage, window: Option<(usize, usize)>) -> GrayImage {
    match window {
        None => img.clone(),
        Some((w, h)) => {
            let dx = img.width() as isize - w as isize;
            let dy = img.height() as isize - h as isize;
            GrayImage::from_fn(w, h, |x, y| {
                let sx = x as isize + dx / 2;
                let sy = y as isize + dy / 2;
                if sx >= 0 && sy >= 0 && (sx as usize) < img.width() && (sy as usize) < img.height()
                {
                    img.get(sx as usize, sy as usize)
                } else {
                    0.0
                }
            })
        }
    }
}

/// Extracted descriptors for an ordered list of images: all DAISY rows
/// concatenated (with per-image row counts), one HOG row per image, and the
/// parallel label list.
#[derive(Debug, Clone)]
pub struct CorpusDescriptors {
    pub daisy: DescriptorSet,
    pub per_image_counts: Vec<usize>,
    pub hog: DescriptorSet,
    pub labels: Vec<usize>,
}

impl CorpusDescriptors {
    pub fn n_images(&self) -> usize {
        self.labels.len()
    }

    /// Descriptors for a sub-list of images, given by indices into this
    /// collection's image order.
    pub fn subset(&self, image_indices: &[usize]) -> Result<CorpusDescriptors> {
        let mut offsets = Vec::with_capacity(self.per_image_counts.len() + 1);
        offsets.push(0usize);
        for &c in &self.per_image_counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let dim = self.daisy.dim();
        let mut daisy_flat = Vec::new();
        let mut counts = Vec::with_capacity(image_indices.len());
        let mut hog = DescriptorSet::new(DescriptorKind::Hog, self.hog.dim())?;
        let mut labels = Vec::with_capacity(image_indices.len());
        for &i in image_indices {
            if i >= self.n_images() {
                return Err(Error::Config(format!(
                    "image index {i} out of range for {} images",
                    self.n_images()
                )));
            }
            daisy_flat.extend_from_slice(&self.daisy.as_flat()[offsets[i] * dim..offsets[i + 1] * dim]);
            counts.push(self.per_image_counts[i]);
            hog.push(self.hog.row(i))?;
            labels.push(self.labels[i]);
        }
        Ok(CorpusDescriptors {
            daisy: DescriptorSet::from_rows(DescriptorKind::Daisy, dim, daisy_flat)?,
            per_image_counts: counts,
            hog,
            labels,
        })
    }
}

/// Runs DAISY and HOG over the corpus items selected by `indices`, in
/// parallel across images. Both descriptor families are always extracted so
/// one extraction serves every feature mode.
pub fn extract_descriptors(
    corpus: &LabeledCorpus,
    indices: &[usize],
    config: &PipelineConfig,
) -> Result<CorpusDescriptors> {
    if indices.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    struct PerImage {
        daisy: Vec<f32>,
        rows: usize,
        hog: Vec<f32>,
        label: usize,
    }
    let per_image: Vec<PerImage> = indices
        .par_iter()
        .map(|&i| {
            let item = &corpus.items[i];
            let img = load_image(&item.path)?;
            let with_path =
                |e: Error| Error::Descriptor(format!("{}: {e}", item.path.display()));
            let daisy = daisy_grid(&img, &config.daisy).map_err(with_path)?;
            let hog = hog_descriptor(&hog_input(&img, config.hog_window), &config.hog)
                .map_err(with_path)?;
            Ok(PerImage {
                rows: daisy.count(),
                daisy: daisy.into_flat(),
                hog,
                label: item.label,
            })
        })
        .collect::<Result<_>>()?;

    let hog_dim = per_image[0].hog.len();
    if per_image.iter().any(|p| p.hog.len() != hog_dim) {
        return Err(Error::Descriptor(
            "HOG descriptor length varies across the corpus (image sizes differ); \
             set hog_window to compute HOG over a fixed centered window"
                .into(),
        ));
    }

    let daisy_dim = config.daisy.descriptor_len();
    let mut daisy_flat = Vec::with_capacity(per_image.iter().map(|p| p.daisy.len()).sum());
    let mut counts = Vec::with_capacity(per_image.len());
    let mut hog = DescriptorSet::new(DescriptorKind::Hog, hog_dim)?;
    let mut labels = Vec::with_capacity(per_image.len());
    for p in per_image {
        daisy_flat.extend_from_slice(&p.daisy);
        counts.push(p.rows);
        hog.push(&p.hog)?;
        labels.push(p.label);
    }
    Ok(CorpusDescriptors {
        daisy: DescriptorSet::from_rows(DescriptorKind::Daisy, daisy_dim, daisy_flat)?,
        per_image_counts: counts,
        hog,
        labels,
    })
}

/// Encodes one feature row per image for the given layout: visual-word
/// histograms from the DAISY rows (when the mode uses a codebook) and/or the
/// HOG rows, combined by [`encode_feature`].
pub fn encode_matrix(
    layout: &FeatureLayout,
    codebook: Option<&Codebook>,
    daisy: Option<(&DescriptorSet, &[usize])>,
    hog: Option<&DescriptorSet>,
) -> Result<DescriptorSet> {
    let n = match (daisy, hog) {
        (_, Some(h)) => h.count(),
        (Some((_, counts)), None) => counts.len(),
        (None, None) => {
            return Err(Error::Config(
                "encode_matrix needs at least one descriptor family".into(),
            ))
        }
    };
    if let (Some((_, counts)), Some(h)) = (daisy, hog) {
        if counts.len() != h.count() {
            return Err(Error::DimMismatch {
                expected: h.count(),
                got: counts.len(),
            });
        }
    }
    let offsets: Option<Vec<usize>> = daisy.map(|(_, counts)| {
        let mut offsets = Vec::with_capacity(counts.len() + 1);
        offsets.push(0usize);
        for &c in counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        offsets
    });

    let rows: Vec<Vec<f32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hist = match (codebook, daisy, &offsets) {
                (Some(cb), Some((set, _)), Some(offsets)) => {
                    let dim = set.dim();
                    let slice = &set.as_flat()[offsets[i] * dim..offsets[i + 1] * dim];
                    let image_set =
                        DescriptorSet::from_rows(DescriptorKind::Daisy, dim, slice.to_vec())?;
                    Some(bovw_histogram(cb, &image_set)?)
                }
                _ => None,
            };
            let hog_row = hog.map(|set| Descriptor {
                kind: DescriptorKind::Hog,
                values: set.row(i).to_vec(),
            });
            encode_feature(layout, hist.as_ref(), hog_row.as_ref())
        })
        .collect::<Result<_>>()?;

    let mut out = DescriptorSet::new(DescriptorKind::Hybrid, layout.feature_dim())?;
    for row in rows {
        out.push(&row)?;
    }
    Ok(out)
}

/// Fits the codebook (when the mode needs one), encodes both sides, trains
/// the one-vs-rest model, and evaluates it — all in memory. The sweep and
/// grid commands, and any experiment that reuses one extraction, build on
/// this.
pub fn run_experiment(
    train: &CorpusDescriptors,
    test: &CorpusDescriptors,
    classes: &[String],
    config: &PipelineConfig,
) -> Result<EvalReport> {
    config.validate()?;
    let mode = config.mode;
    let codebook = if mode.uses_codebook() {
        Some(minibatch_fit(&train.daisy, &config.codebook_config())?)
    } else {
        None
    };
    let layout = FeatureLayout {
        mode,
        k: if mode.uses_codebook() { config.k } else { 0 },
        hog_len: if mode.uses_hog() { train.hog.dim() } else { 0 },
    };
    let encode = |side: &CorpusDescriptors| {
        encode_matrix(
            &layout,
            codebook.as_ref(),
            mode.uses_codebook()
                .then(|| (&side.daisy, side.per_image_counts.as_slice())),
            mode.uses_hog().then_some(&side.hog),
        )
    };
    let features_train = encode(train)?;
    let features_test = encode(test)?;
    let model = ovr_train(&features_train, &train.labels, classes, &config.svm_config())?;
    let mut report = evaluate_model(&model, &features_test, &test.labels)?;
    report.meta = config.eval_meta(layout.k);
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// What `cmd_extract` wrote.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub classes: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub daisy_rows_train: usize,
    pub daisy_rows_test: usize,
    pub hog_len: usize,
    pub elapsed_seconds: f64,
}

/// Splits the corpus and writes per-split DAISY containers, HOG containers,
/// labels, the split manifest, and the class list. Deterministic given
/// (config, seed): reruns produce byte-identical artifacts.
pub fn cmd_extract(config: &PipelineConfig) -> Result<ExtractSummary> {
    config.validate()?;
    let start = Instant::now();
    let corpus = scan_corpus(&config.dataset_root)?;
    let manifest = split(&corpus, &config.split_spec())?;
    let paths = ArtifactPaths::new(&config.output_dir);
    fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    container::write_split(paths.split_manifest(), &manifest)?;
    container::write_classes(paths.classes(), &corpus.classes)?;

    let mut summary = ExtractSummary {
        classes: corpus.classes.clone(),
        n_train: manifest.train.len(),
        n_test: manifest.test.len(),
        daisy_rows_train: 0,
        daisy_rows_test: 0,
        hog_len: 0,
        elapsed_seconds: 0.0,
    };
    for (side, indices) in [(Side::Train, &manifest.train), (Side::Test, &manifest.test)] {
        let extracted = extract_descriptors(&corpus, indices, config)?;
        let mut daisy_params =
            serde_json::to_value(&config.daisy).expect("daisy params serialize");
        daisy_params
            .as_object_mut()
            .expect("params are an object")
            .insert("per_image_counts".into(), json!(extracted.per_image_counts));
        container::write_descriptors(paths.daisy(side), &extracted.daisy, &daisy_params)?;
        let hog_params = serde_json::to_value(&config.hog).expect("hog params serialize");
        container::write_descriptors(paths.hog(side), &extracted.hog, &hog_params)?;
        container::write_labels(paths.labels(side), &extracted.labels)?;
        match side {
            Side::Train => summary.daisy_rows_train = extracted.daisy.count(),
            Side::Test => summary.daisy_rows_test = extracted.daisy.count(),
        }
        summary.hog_len = extracted.hog.dim();
    }
    summary.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(summary)
}

/// Wall-clock seconds per training stage.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StageTimings {
    pub codebook: f64,
    pub encode: f64,
    pub svm: f64,
    pub total: f64,
}

/// The JSON training report: configuration echo plus stage outcomes.
/// Everything except `timings_seconds` is deterministic given the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: PipelineConfig,
    pub mode: String,
    pub feature_dim: usize,
    pub k: usize,
    pub hog_len: usize,
    pub n_train: usize,
    pub codebook: Option<TrainMeta>,
    pub timings_seconds: StageTimings,
}

fn per_image_counts_param(params: &serde_json::Value, path: &Path) -> Result<Vec<usize>> {
    params
        .get("per_image_counts")
        .cloned()
        .and_then(|v| serde_json::from_value(v).ok())
        .ok_or_else(|| Error::format(path, "descriptor params lack per_image_counts"))
}

/// Builds the codebook (unless hog_only), encodes train and test feature
/// matrices, trains the one-vs-rest SVM, and writes the model plus a JSON
/// training report.
pub fn cmd_train(config: &PipelineConfig) -> Result<TrainReport> {
    config.validate()?;
    let total_start = Instant::now();
    let paths = ArtifactPaths::new(&config.output_dir);
    let classes = container::read_classes(paths.classes())?;
    let labels_train = container::read_labels(paths.labels(Side::Train))?;
    let mode = config.mode;

    // Codebook stage (daisy modes only; hog_only writes no codebook file).
    let mut timings = StageTimings::default();
    let mut codebook = None;
    let mut daisy_sides: [Option<(DescriptorSet, Vec<usize>)>; 2] = [None, None];
    if mode.uses_codebook() {
        for (slot, side) in [(0, Side::Train), (1, Side::Test)] {
            let path = paths.daisy(side);
            let (set, params) = container::read_descriptors(&path)?;
            let counts = per_image_counts_param(&params, &path)?;
            daisy_sides[slot] = Some((set, counts));
        }
        let t = Instant::now();
        let cb = minibatch_fit(&daisy_sides[0].as_ref().unwrap().0, &config.codebook_config())?;
        timings.codebook = t.elapsed().as_secs_f64();
        container::write_codebook(paths.codebook(), &cb)?;
        codebook = Some(cb);
    }

    let mut hog_sides: [Option<DescriptorSet>; 2] = [None, None];
    if mode.uses_hog() {
        for (slot, side) in [(0, Side::Train), (1, Side::Test)] {
            hog_sides[slot] = Some(container::read_descriptors(paths.hog(side))?.0);
        }
    }

    let layout = FeatureLayout {
        mode,
        k: if mode.uses_codebook() { config.k } else { 0 },
        hog_len: hog_sides[0].as_ref().map_or(0, |s| s.dim()),
    };

    // Encoding stage: both sides, so evaluate never needs raw descriptors.
    let t = Instant::now();
    let mut features: [Option<DescriptorSet>; 2] = [None, None];
    for slot in 0..2 {
        let encoded = encode_matrix(
            &layout,
            codebook.as_ref(),
            daisy_sides[slot]
                .as_ref()
                .map(|(set, counts)| (set, counts.as_slice())),
            hog_sides[slot].as_ref(),
        )?;
        let side = if slot == 0 { Side::Train } else { Side::Test };
        let params = serde_json::to_value(layout).expect("layout serializes");
        container::write_descriptors(paths.features(side), &encoded, &params)?;
        features[slot] = Some(encoded);
    }
    timings.encode = t.elapsed().as_secs_f64();

    // Classifier stage.
    let t = Instant::now();
    let features_train = features[0].take().unwrap();
    let model = ovr_train(&features_train, &labels_train, &classes, &config.svm_config())?;
    timings.svm = t.elapsed().as_secs_f64();
    container::write_svm(paths.model(), &model, &layout)?;

    timings.total = total_start.elapsed().as_secs_f64();
    let report = TrainReport {
        config: config.clone(),
        mode: mode.as_str().to_string(),
        feature_dim: layout.feature_dim(),
        k: layout.k,
        hog_len: layout.hog_len,
        n_train: labels_train.len(),
        codebook: codebook.and_then(|cb| cb.train_meta),
        timings_seconds: timings,
    };
    write_json(&paths.train_report(), &report)?;
    Ok(report)
}

/// Evaluates the persisted model on the persisted test features and writes
/// the JSON report plus the confusion CSV. Reads only stage artifacts —
/// never the image corpus.
pub fn cmd_evaluate(config: &PipelineConfig) -> Result<EvalReport> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let (model, layout) = container::read_svm(paths.model())?;
    let (features, _) = container::read_descriptors(paths.features(Side::Test))?;
    let labels = container::read_labels(paths.labels(Side::Test))?;
    let mut report = evaluate_model(&model, &features, &labels)?;
    let first = &model.binaries[0];
    report.meta = EvalMeta {
        seed: config.seed,
        train_fraction: config.train_fraction,
        feature_mode: layout.mode.as_str().to_string(),
        k: layout.k,
        kernel: first.kernel.kind_str().to_string(),
        c: first.c,
        gamma: first.kernel.gamma(),
    };
    write_json(&paths.eval_report(), &report)?;
    write_text(&paths.confusion(), &confusion_csv(&report))?;
    Ok(report)
}

/// One class's decision value for a prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDecision {
    pub class: String,
    pub decision: f64,
}

/// The outcome of the single-image path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub class_index: usize,
    pub class_name: String,
    pub decisions: Vec<ClassDecision>,
}

/// Runs the full single-image path — load, descriptors, encoding, predict —
/// against the persisted model and codebook.
/// Classifies one image with the stored model. Descriptor parameters come
/// from `config` and must match the ones used at training time; a mismatch
/// surfaces as a feature-length error from encoding.
pub fn cmd_predict(config: &PipelineConfig, image: impl AsRef<Path>) -> Result<Prediction> {
    let paths = ArtifactPaths::new(&config.output_dir);
    let (model, layout) = container::read_svm(paths.model())?;
    let img = load_image(image)?;

    let hist = if layout.mode.uses_codebook() {
        let codebook = container::read_codebook(paths.codebook())?;
        let daisy = daisy_grid(&img, &config.daisy)?;
        Some(bovw_histogram(&codebook, &daisy)?)
    } else {
        None
    };
    let hog_row = if layout.mode.uses_hog() {
        Some(Descriptor {
            kind: DescriptorKind::Hog,
            values: hog_descriptor(&hog_input(&img, config.hog_window), &config.hog)?,
        })
    } else {
        None
    };
    let feature = encode_feature(&layout, hist.as_ref(), hog_row.as_ref())?;
    let (class_index, decisions) = predict(&model, &feature)?;
    Ok(Prediction {
        class_index,
        class_name: model.classes[class_index].clone(),
        decisions: model
            .classes
            .iter()
            .zip(decisions)
            .map(|(class, decision)| ClassDecision {
                class: class.clone(),
                decision,
            })
            .collect(),
    })
}

/// Extracts descriptors once, then for each K averages accuracy over
/// `repeats` re-seeded split/codebook/train/evaluate rounds. Writes a
/// `k,accuracy` CSV (one row per K, in input order) and returns the rows.
pub fn cmd_sweep_k(
    config: &PipelineConfig,
    ks: &[usize],
    repeats: usize,
) -> Result<Vec<(usize, f64)>> {
    config.validate()?;
    let corpus = scan_corpus(&config.dataset_root)?;
    let all: Vec<usize> = (0..corpus.items.len()).collect();
    let extracted = extract_descriptors(&corpus, &all, config)?;

    let results = k_sweep(ks, repeats, config.seed, |k, seed| {
        let mut round = config.clone();
        round.k = k;
        round.seed = seed;
        let (train_idx, test_idx) = stratified_split_indices(
            &extracted.labels,
            corpus.classes.len(),
            &round.split_spec(),
        )?;
        let train = extracted.subset(&train_idx)?;
        let test = extracted.subset(&test_idx)?;
        Ok(run_experiment(&train, &test, &corpus.classes, &round)?.accuracy)
    })?;

    let paths = ArtifactPaths::new(&config.output_dir);
    fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    let mut csv = String::from("k,accuracy\n");
    for (k, accuracy) in &results {
        csv.push_str(&format!("{k},{accuracy}\n"));
    }
    write_text(&paths.sweep(), &csv)?;
    Ok(results)
}

/// The grid search's JSON report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub config: PipelineConfig,
    pub spec: GridSpec,
    pub validation_fraction: f64,
    pub result: GridSearchResult,
}

/// RBF C/gamma search: one extraction and one codebook, then an SVM per grid
/// point, trained on the training split minus a stratified validation
/// carve-out and scored on that validation set. Writes the
/// `logC,logGamma,accuracy` surface CSV and a JSON report.
pub fn cmd_grid_search(config: &PipelineConfig, spec: &GridSpec) -> Result<GridReport> {
    config.validate()?;
    let corpus = scan_corpus(&config.dataset_root)?;
    let all: Vec<usize> = (0..corpus.items.len()).collect();
    let extracted = extract_descriptors(&corpus, &all, config)?;
    let (train_idx, _) = stratified_split_indices(
        &extracted.labels,
        corpus.classes.len(),
        &config.split_spec(),
    )?;
    let train = extracted.subset(&train_idx)?;
    let (fit_idx, val_idx) = stratified_split_indices(
        &train.labels,
        corpus.classes.len(),
        &SplitSpec {
            train_fraction: 1.0 - GRID_VALIDATION_FRACTION,
            seed: config.seed.wrapping_add(2),
        },
    )?;
    let fit = train.subset(&fit_idx)?;
    let val = train.subset(&val_idx)?;

    // One codebook for the whole search: the vocabulary is unsupervised and
    // C/gamma do not touch it.
    let mode = config.mode;
    let codebook = if mode.uses_codebook() {
        Some(minibatch_fit(&train.daisy, &config.codebook_config())?)
    } else {
        None
    };
    let layout = FeatureLayout {
        mode,
        k: if mode.uses_codebook() { config.k } else { 0 },
        hog_len: if mode.uses_hog() { train.hog.dim() } else { 0 },
    };
    let encode = |side: &CorpusDescriptors| {
        encode_matrix(
            &layout,
            codebook.as_ref(),
            mode.uses_codebook()
                .then(|| (&side.daisy, side.per_image_counts.as_slice())),
            mode.uses_hog().then_some(&side.hog),
        )
    };
    let features_fit = encode(&fit)?;
    let features_val = encode(&val)?;

    let result = grid_search(spec, |log_c, log_gamma| {
        let svm_config = SvmConfig {
            c: 10f64.powf(log_c),
            kernel: KernelSpec::Rbf {
                gamma: 10f64.powf(log_gamma),
            },
            tol: config.svm_tol,
            ..SvmConfig::default()
        };
        let model = ovr_train(&features_fit, &fit.labels, &corpus.classes, &svm_config)?;
        Ok(evaluate_model(&model, &features_val, &val.labels)?.accuracy)
    })?;

    let paths = ArtifactPaths::new(&config.output_dir);
    fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
    write_text(&paths.grid(), &grid_csv(&result))?;
    let report = GridReport {
        config: config.clone(),
        spec: *spec,
        validation_fraction: GRID_VALIDATION_FRACTION,
        result,
    };
    write_json(&paths.grid_report(), &report)?;
    Ok(report)
}

/// Synthetic-data benchmark setup for the mini-batch fitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchKmeansConfig {
    pub points: usize,
    pub dim: usize,
    pub blobs: usize,
    pub sigma: f64,
    pub k: usize,
    pub batch_size: usize,
    pub max_iterations: usize,
    pub shift_tolerance: f64,
    pub seed: u64,
    /// Points in the subsample used for the inertia comparison.
    pub subsample: usize,
    pub lloyd_max_iterations: usize,
}

impl Default for BenchKmeansConfig {
    fn default() -> Self {
        BenchKmeansConfig {
            points: 1_000_000,
            dim: 200,
            blobs: 600,
            sigma: 0.05,
            k: 600,
            batch_size: 1024,
            max_iterations: 300,
            shift_tolerance: 1e-4,
            seed: 0,
            subsample: 50_000,
            lloyd_max_iterations: 30,
        }
    }
}

/// Timings and the mini-batch-vs-Lloyd inertia comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchKmeansReport {
    pub config: BenchKmeansConfig,
    pub generate_seconds: f64,
    pub fit_seconds: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Inertia of the mini-batch codebook over the subsample.
    pub minibatch_inertia: f64,
    pub lloyd_seconds: f64,
    /// Inertia of a full-batch Lloyd codebook fitted on the same subsample.
    pub lloyd_inertia: f64,
    /// `minibatch_inertia / lloyd_inertia`.
    pub inertia_ratio: f64,
}

/// Times a mini-batch fit on synthetic blob descriptors, then compares its
/// inertia against exact Lloyd on a subsample. Lloyd is fitted *on* the
/// subsample it is scored on, which can only flatter the baseline.
pub fn cmd_bench_kmeans(config: &BenchKmeansConfig) -> Result<BenchKmeansReport> {
    use rand::SeedableRng;

    let t = Instant::now();
    let data = gaussian_blobs_nd(config.blobs, config.points, config.dim, config.sigma, config.seed);
    let generate_seconds = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let codebook = minibatch_fit(
        &data,
        &MiniBatchConfig {
            k: config.k,
            batch_size: config.batch_size,
            max_iterations: config.max_iterations,
            shift_tolerance: config.shift_tolerance,
            seed: config.seed.wrapping_add(1),
        },
    )?;
    let fit_seconds = t.elapsed().as_secs_f64();
    let meta = codebook.train_meta.clone().expect("fit always sets meta");

    let sub_n = config.subsample.clamp(1, data.count());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut picks = rand::seq::index::sample(&mut rng, data.count(), sub_n).into_vec();
    picks.sort_unstable();
    let mut sub_flat = Vec::with_capacity(sub_n * data.dim());
    for &i in &picks {
        sub_flat.extend_from_slice(data.row(i));
    }
    let sub = DescriptorSet::from_rows(DescriptorKind::Daisy, data.dim(), sub_flat)?;

    let minibatch_inertia = inertia(&codebook, &sub)?;
    let t = Instant::now();
    let lloyd = lloyd_exact(&sub, config.k, config.seed.wrapping_add(3), config.lloyd_max_iterations)?;
    let lloyd_seconds = t.elapsed().as_secs_f64();
    let lloyd_inertia = inertia(&lloyd, &sub)?;

    let inertia_ratio = if lloyd_inertia > 0.0 {
        minibatch_inertia / lloyd_inertia
    } else if minibatch_inertia == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    Ok(BenchKmeansReport {
        config: *config,
        generate_seconds,
        fit_seconds,
        iterations: meta.iterations,
        converged: meta.converged,
        minibatch_inertia,
        lloyd_seconds,
        lloyd_inertia,
        inertia_ratio,
    })
}
