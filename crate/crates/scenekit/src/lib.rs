//! Scene recognition from hybrid local/global image descriptors.
//!
//! The pipeline classifies grayscale scene photographs in four steps:
//!
//! 1. **Descriptors** — dense DAISY descriptors on a grid capture local
//!    texture ([`daisy`]); one whole-image HOG descriptor captures global
//!    layout ([`hog`]).
//! 2. **Vocabulary** — Mini-Batch K-Means clusters the training DAISY
//!    descriptors into K visual words ([`codebook`]).
//! 3. **Encoding** — each image becomes an L2-normalized K-bin word
//!    histogram, concatenated with its L2-normalized HOG vector into a
//!    hybrid feature ([`encoding`]).
//! 4. **Classification** — a one-vs-rest SVM (linear or RBF), trained by
//!    sequential minimal optimization, labels the feature ([`svm`]), and
//!    [`evaluate`] scores the result.
//!
//! [`pipeline`] wires the steps into rerunnable stages that persist their
//! artifacts ([`container`]) under one output directory, plus the K-sweep,
//! C/gamma grid-search, and clustering-benchmark protocols. The
//! `scenekit-cli` binary exposes each stage as a command.
//!
//! ```no_run
//! use scenekit::pipeline::{cmd_evaluate, cmd_extract, cmd_train, PipelineConfig};
//!
//! # fn main() -> scenekit::Result<()> {
//! let config = PipelineConfig {
//!     dataset_root: "scenes/".into(),   // one subdirectory per class
//!     output_dir: "runs/demo".into(),
//!     ..PipelineConfig::default()
//! };
//! cmd_extract(&config)?;
//! cmd_train(&config)?;
//! let report = cmd_evaluate(&config)?;
//! println!("accuracy {:.4}", report.accuracy);
//! # Ok(())
//! # }
//! ```
//!
//! Determinism: every randomized step draws from a seeded generator derived
//! from the configured master seed, so identical configs reproduce identical
//! artifacts and reports (wall-clock timings aside).

pub mod codebook;
pub mod container;
pub mod daisy;
pub mod dataset;
pub mod descriptor;
pub mod encoding;
pub mod error;
pub mod evaluate;
pub mod gray;
pub mod hog;
#[cfg(feature = "oracles")]
pub mod oracles;
pub mod pipeline;
pub mod svm;
pub mod synth;

pub use error::{Error, Result};
