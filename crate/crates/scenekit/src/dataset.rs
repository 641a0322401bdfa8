//! Corpus scanning and seeded stratified train/test splitting.
//!
//! A corpus is a directory of class subdirectories; class names are the
//! subdirectory names sorted lexicographically, and every supported image
//! file under a class belongs to that class.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// File extensions (lowercased) that `scan_corpus` picks up.
const IMAGE_EXTENSIONS: [&str; 4] = ["pgm", "png", "jpg", "jpeg"];

/// One image path with its class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub path: PathBuf,
    pub label: usize,
}

/// An enumerated image corpus: class names plus labeled image paths.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub classes: Vec<String>,
    pub items: Vec<LabeledImage>,
}

impl LabeledCorpus {
    /// Number of items carrying each label, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for item in &self.items {
            counts[item.label] += 1;
        }
        counts
    }
}

/// Parameters of a stratified split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

/// A train/test partition as index lists into a corpus' `items`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub train_fraction: f64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Walks `root`, treating each immediate subdirectory as one class.
///
/// Classes are sorted lexicographically by name; items within a class are
/// sorted by path, so the same directory tree always enumerates identically.
pub fn scan_corpus(root: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let root = root.as_ref();
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            class_dirs.push((name, path));
        }
    }
    class_dirs.sort_by(|a, b| a.0.cmp(&b.0));
    if class_dirs.is_empty() {
        return Err(Error::Corpus(format!(
            "no class subdirectories under {}",
            root.display()
        )));
    }

    let mut classes = Vec::with_capacity(class_dirs.len());
    let mut items = Vec::new();
    for (label, (name, dir)) in class_dirs.into_iter().enumerate() {
        let mut files: Vec<PathBuf> = Vec::new();
        collect_images(&dir, &mut files)?;
        files.sort();
        if files.is_empty() {
            return Err(Error::Corpus(format!(
                "class directory {} contains no images",
                dir.display()
            )));
        }
        classes.push(name);
        items.extend(files.into_iter().map(|path| LabeledImage { path, label }));
    }
    Ok(LabeledCorpus { classes, items })
}

fn collect_images(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            collect_images(&path, out)?;
        } else if is_image_file(&path) {
            out.push(path);
        }
    }
    Ok(())
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

/// Stratified split of `labels` (values in `0..n_classes`) into train/test
/// index lists.
///
/// Each class is shuffled with a class-independent stream from the seed and
/// cut at `round(train_fraction * class_size)`, clamped so both sides keep at
/// least one item per class. Returned index lists are sorted ascending.
pub fn stratified_split_indices(
    labels: &[usize],
    n_classes: usize,
    spec: &SplitSpec,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train_fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        if label >= n_classes {
            return Err(Error::Split(format!(
                "label {label} out of range for {n_classes} classes"
            )));
        }
        by_class[label].push(i);
    }
    if let Some(pos) = by_class.iter().position(|c| c.len() < 2) {
        return Err(Error::Split(format!(
            "class {pos} has {} items; need at least 2 to split",
            by_class[pos].len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for indices in &mut by_class {
        indices.shuffle(&mut rng);
        let n = indices.len();
        let cut = ((spec.train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&indices[..cut]);
        test.extend_from_slice(&indices[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Splits a corpus into a [`SplitManifest`] via [`stratified_split_indices`].
pub fn split(corpus: &LabeledCorpus, spec: &SplitSpec) -> Result<SplitManifest> {
    let labels: Vec<usize> = corpus.items.iter().map(|i| i.label).collect();
    let (train, test) = stratified_split_indices(&labels, corpus.classes.len(), spec)?;
    Ok(SplitManifest {
        seed: spec.seed,
        train_fraction: spec.train_fraction,
        train,
        test,
    })
}
