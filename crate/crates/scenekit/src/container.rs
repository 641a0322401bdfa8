//! Versioned on-disk artifacts.
//!
//! Binary containers share one layout: magic bytes, a little-endian u32
//! header length, a JSON header, then a little-endian float payload.
//! Mismatched magic fails loudly instead of misreading. Small artifacts
//! (labels, class names, split manifests) are plain JSON.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, TrainMeta};
use crate::dataset::SplitManifest;
use crate::descriptor::{DescriptorKind, DescriptorSet};
use crate::encoding::{FeatureLayout, FeatureMode};
use crate::error::{Error, Result};
use crate::svm::{BinarySvm, KernelSpec, SvmModel};

pub const DESCRIPTOR_MAGIC: &[u8] = b"SKDESC1";
pub const CODEBOOK_MAGIC: &[u8] = b"SKCBK1";
pub const SVM_MAGIC: &[u8] = b"SKSVM1";

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

fn write_container(path: &Path, magic: &[u8], header: &[u8], payload: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(magic.len() + 4 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Splits a container file into its JSON header and payload bytes.
fn read_container(path: &Path, magic: &[u8]) -> Result<(Vec<u8>, Vec<u8>)> {
    let bytes = read_file(path)?;
    if !bytes.starts_with(magic) {
        return Err(Error::format(
            path,
            format!(
                "bad magic; expected {:?}",
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let rest = &bytes[magic.len()..];
    if rest.len() < 4 {
        return Err(Error::format(path, "truncated header length"));
    }
    let header_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    let rest = &rest[4..];
    if rest.len() < header_len {
        return Err(Error::format(path, "header extends past end of file"));
    }
    Ok((rest[..header_len].to_vec(), rest[header_len..].to_vec()))
}

fn f32s_to_le(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_to_f32s(bytes: &[u8], path: &Path) -> Result<Vec<f32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "payload is not a whole number of f32s"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

fn f64s_to_le(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn le_to_f64s(bytes: &[u8], path: &Path) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::format(path, "payload is not a whole number of f64s"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect())
}

#[derive(Serialize, Deserialize)]
struct DescriptorHeader {
    kind: DescriptorKind,
    dim: usize,
    count: usize,
    params: serde_json::Value,
}

/// Writes a descriptor matrix; `params` records the extraction parameters
/// (and, for multi-image dumps, the per-image row counts).
pub fn write_descriptors(
    path: impl AsRef<Path>,
    set: &DescriptorSet,
    params: &serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let header = DescriptorHeader {
        kind: set.kind,
        dim: set.dim(),
        count: set.count(),
        params: params.clone(),
    };
    let header = serde_json::to_vec(&header).expect("descriptor header serializes");
    write_container(path, DESCRIPTOR_MAGIC, &header, &f32s_to_le(set.as_flat()))
}

pub fn read_descriptors(path: impl AsRef<Path>) -> Result<(DescriptorSet, serde_json::Value)> {
    let path = path.as_ref();
    let (header, payload) = read_container(path, DESCRIPTOR_MAGIC)?;
    let header: DescriptorHeader =
        serde_json::from_slice(&header).map_err(|e| Error::format(path, e.to_string()))?;
    let data = le_to_f32s(&payload, path)?;
    if header.dim == 0 || data.len() != header.dim * header.count {
        return Err(Error::format(
            path,
            format!(
                "payload holds {} floats, header claims {}x{}",
                data.len(),
                header.count,
                header.dim
            ),
        ));
    }
    let set = DescriptorSet::from_rows(header.kind, header.dim, data)?;
    Ok((set, header.params))
}

#[derive(Serialize, Deserialize)]
struct CodebookHeader {
    k: usize,
    dim: usize,
    train_meta: Option<TrainMeta>,
}

pub fn write_codebook(path: impl AsRef<Path>, codebook: &Codebook) -> Result<()> {
    let path = path.as_ref();
    let header = CodebookHeader {
        k: codebook.k(),
        dim: codebook.dim(),
        train_meta: codebook.train_meta.clone(),
    };
    let header = serde_json::to_vec(&header).expect("codebook header serializes");
    write_container(path, CODEBOOK_MAGIC, &header, &f32s_to_le(codebook.centers()))
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook> {
    let path = path.as_ref();
    let (header, payload) = read_container(path, CODEBOOK_MAGIC)?;
    let header: CodebookHeader =
        serde_json::from_slice(&header).map_err(|e| Error::format(path, e.to_string()))?;
    let centers = le_to_f32s(&payload, path)?;
    if centers.len() != header.k * header.dim {
        return Err(Error::format(
            path,
            format!(
                "payload holds {} floats, header claims {}x{}",
                centers.len(),
                header.k,
                header.dim
            ),
        ));
    }
    Codebook::new(header.k, header.dim, centers, header.train_meta)
}

#[derive(Serialize, Deserialize)]
struct SvmDims {
    feature_dim: usize,
    k: usize,
    hog_len: usize,
    mode: FeatureMode,
}

#[derive(Serialize, Deserialize)]
struct SvmHeader {
    classes: Vec<String>,
    kernel: String,
    c: f64,
    gamma: Option<f64>,
    dims: SvmDims,
    sv_counts: Vec<usize>,
}

/// Writes a one-vs-rest model. Per binary, the payload holds the support
/// vectors, then the dual coefficients, then the bias, all as f64.
pub fn write_svm(path: impl AsRef<Path>, model: &SvmModel, layout: &FeatureLayout) -> Result<()> {
    let path = path.as_ref();
    let first = model
        .binaries
        .first()
        .ok_or_else(|| Error::Config("cannot persist a model with no binaries".into()))?;
    let header = SvmHeader {
        classes: model.classes.clone(),
        kernel: first.kernel.kind_str().to_string(),
        c: first.c,
        gamma: first.kernel.gamma(),
        dims: SvmDims {
            feature_dim: model.feature_dim,
            k: layout.k,
            hog_len: layout.hog_len,
            mode: layout.mode,
        },
        sv_counts: model.binaries.iter().map(|b| b.n_support()).collect(),
    };
    let header = serde_json::to_vec(&header).expect("svm header serializes");

    let mut payload: Vec<f64> = Vec::new();
    for binary in &model.binaries {
        payload.extend(binary.support_vectors.iter().map(|&v| v as f64));
        payload.extend_from_slice(&binary.dual_coefs);
        payload.push(binary.bias);
    }
    write_container(path, SVM_MAGIC, &header, &f64s_to_le(&payload))
}

pub fn read_svm(path: impl AsRef<Path>) -> Result<(SvmModel, FeatureLayout)> {
    let path = path.as_ref();
    let (header, payload) = read_container(path, SVM_MAGIC)?;
    let header: SvmHeader =
        serde_json::from_slice(&header).map_err(|e| Error::format(path, e.to_string()))?;
    let kernel = match (header.kernel.as_str(), header.gamma) {
        ("linear", _) => KernelSpec::Linear,
        ("rbf", Some(gamma)) => KernelSpec::Rbf { gamma },
        ("rbf", None) => return Err(Error::format(path, "rbf model without gamma")),
        (other, _) => return Err(Error::format(path, format!("unknown kernel {other:?}"))),
    };
    if header.classes.len() != header.sv_counts.len() {
        return Err(Error::format(path, "class and sv_counts lengths disagree"));
    }
    let values = le_to_f64s(&payload, path)?;
    let dim = header.dims.feature_dim;
    let expected: usize = header.sv_counts.iter().map(|&m| m * dim + m + 1).sum();
    if values.len() != expected {
        return Err(Error::format(
            path,
            format!("payload holds {} floats, header implies {expected}", values.len()),
        ));
    }

    let mut binaries = Vec::with_capacity(header.sv_counts.len());
    let mut offset = 0usize;
    for &m in &header.sv_counts {
        let svs = &values[offset..offset + m * dim];
        offset += m * dim;
        let coefs = &values[offset..offset + m];
        offset += m;
        let bias = values[offset];
        offset += 1;
        binaries.push(BinarySvm {
            support_vectors: svs.iter().map(|&v| v as f32).collect(),
            dual_coefs: coefs.to_vec(),
            bias,
            kernel,
            c: header.c,
            dim,
        });
    }
    let layout = FeatureLayout {
        mode: header.dims.mode,
        k: header.dims.k,
        hog_len: header.dims.hog_len,
    };
    if layout.feature_dim() != dim {
        return Err(Error::format(
            path,
            format!(
                "feature layout implies dim {}, header says {dim}",
                layout.feature_dim()
            ),
        ));
    }
    Ok((
        SvmModel {
            classes: header.classes,
            binaries,
            feature_dim: dim,
        },
        layout,
    ))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_vec(labels).expect("labels serialize");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    serde_json::from_slice(&read_file(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_classes(path: impl AsRef<Path>, classes: &[String]) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_vec_pretty(classes).expect("classes serialize");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_classes(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    serde_json::from_slice(&read_file(path)?).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_split(path: impl AsRef<Path>, manifest: &SplitManifest) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_vec_pretty(manifest).expect("split manifest serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_split(path: impl AsRef<Path>) -> Result<SplitManifest> {
    let path = path.as_ref();
    serde_json::from_slice(&read_file(path)?).map_err(|e| Error::format(path, e.to_string()))
}
