//! Visual-word histograms and hybrid feature assembly.
//!
//! An image's DAISY descriptors are pooled into a K-bin histogram by hard
//! assignment (one vote per descriptor), L2-normalized, and concatenated
//! with the L2-normalized HOG vector. Neither half is re-normalized after
//! concatenation, so each contributes at most unit norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codebook::{assign, Codebook};
use crate::descriptor::{Descriptor, DescriptorKind, DescriptorSet};
use crate::error::{Error, Result};

/// Which descriptor halves feed the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    HogOnly,
    DaisyOnly,
    Hybrid,
}

impl FeatureMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureMode::HogOnly => "hog_only",
            FeatureMode::DaisyOnly => "daisy_only",
            FeatureMode::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hog_only" => Ok(FeatureMode::HogOnly),
            "daisy_only" => Ok(FeatureMode::DaisyOnly),
            "hybrid" => Ok(FeatureMode::Hybrid),
            other => Err(Error::Config(format!(
                "unknown feature mode {other:?}; expected hog_only, daisy_only, or hybrid"
            ))),
        }
    }

    /// Whether this mode needs a codebook and DAISY descriptors.
    pub fn uses_codebook(&self) -> bool {
        !matches!(self, FeatureMode::HogOnly)
    }

    /// Whether this mode needs the HOG descriptor.
    pub fn uses_hog(&self) -> bool {
        !matches!(self, FeatureMode::DaisyOnly)
    }
}

/// Shape of the encoded feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub mode: FeatureMode,
    /// Vocabulary size (0 in hog_only mode).
    pub k: usize,
    /// HOG descriptor length (0 in daisy_only mode).
    pub hog_len: usize,
}

impl FeatureLayout {
    pub fn feature_dim(&self) -> usize {
        match self.mode {
            FeatureMode::HogOnly => self.hog_len,
            FeatureMode::DaisyOnly => self.k,
            FeatureMode::Hybrid => self.k + self.hog_len,
        }
    }
}

/// A K-bin visual-word histogram; raw counts until `normalized`.
#[derive(Debug, Clone, PartialEq)]
pub struct BovwHistogram {
    pub values: Vec<f32>,
    pub normalized: bool,
}

impl BovwHistogram {
    /// Returns the L2-normalized copy of this histogram.
    pub fn normalized(&self) -> Result<BovwHistogram> {
        Ok(BovwHistogram {
            values: l2_normalize(&self.values)?,
            normalized: true,
        })
    }
}

/// Hard-assignment sum pooling: one count per descriptor at its nearest
/// visual word. An empty descriptor set yields the zero histogram.
pub fn bovw_histogram(codebook: &Codebook, descriptors: &DescriptorSet) -> Result<BovwHistogram> {
    if !descriptors.is_empty() && descriptors.dim() != codebook.dim() {
        return Err(Error::DimMismatch {
            expected: codebook.dim(),
            got: descriptors.dim(),
        });
    }
    let words: Vec<usize> = (0..descriptors.count())
        .into_par_iter()
        .map(|i| assign(codebook, descriptors.row(i)))
        .collect::<Result<_>>()?;
    let mut values = vec![0.0f32; codebook.k()];
    for w in words {
        values[w] += 1.0;
    }
    Ok(BovwHistogram {
        values,
        normalized: false,
    })
}

/// `v / ||v||` for nonzero `v`; the zero vector passes through unchanged.
pub fn l2_normalize(v: &[f32]) -> Result<Vec<f32>> {
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!(
            "cannot normalize vector containing {bad}"
        )));
    }
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        Ok(v.iter().map(|&x| ((x as f64) / norm) as f32).collect())
    } else {
        Ok(v.to_vec())
    }
}

/// The hybrid feature: normalized histogram followed by normalized HOG.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridFeature {
    pub values: Vec<f32>,
    pub k: usize,
    pub hog_len: usize,
}

/// Concatenates the L2-normalized histogram with the L2-normalized HOG
/// descriptor. The result is deliberately not re-normalized.
pub fn hybrid_feature(hist: &BovwHistogram, hog: &Descriptor) -> Result<HybridFeature> {
    if hog.kind != DescriptorKind::Hog {
        return Err(Error::Descriptor(format!(
            "hybrid feature needs a HOG descriptor, got {:?}",
            hog.kind
        )));
    }
    let mut values = l2_normalize(&hist.values)?;
    values.extend(l2_normalize(&hog.values)?);
    Ok(HybridFeature {
        k: hist.values.len(),
        hog_len: hog.values.len(),
        values,
    })
}

/// Builds the classifier input for `layout.mode` from whichever halves the
/// mode requires.
pub fn encode_feature(
    layout: &FeatureLayout,
    hist: Option<&BovwHistogram>,
    hog: Option<&Descriptor>,
) -> Result<Vec<f32>> {
    let need = |part: Option<&str>| {
        Error::Config(format!(
            "feature mode {} requires {}",
            layout.mode.as_str(),
            part.unwrap_or("both descriptor halves")
        ))
    };
    let check_len = |got: usize, expected: usize| {
        if got != expected {
            Err(Error::DimMismatch { expected, got })
        } else {
            Ok(())
        }
    };
    match layout.mode {
        FeatureMode::HogOnly => {
            let hog = hog.ok_or_else(|| need(Some("a HOG descriptor")))?;
            check_len(hog.values.len(), layout.hog_len)?;
            l2_normalize(&hog.values)
        }
        FeatureMode::DaisyOnly => {
            let hist = hist.ok_or_else(|| need(Some("a visual-word histogram")))?;
            check_len(hist.values.len(), layout.k)?;
            l2_normalize(&hist.values)
        }
        FeatureMode::Hybrid => {
            let hist = hist.ok_or_else(|| need(None))?;
            let hog = hog.ok_or_else(|| need(None))?;
            check_len(hist.values.len(), layout.k)?;
            check_len(hog.values.len(), layout.hog_len)?;
            Ok(hybrid_feature(hist, hog)?.values)
        }
    }
}
