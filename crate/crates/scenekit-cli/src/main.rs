//! Command-line front end for the scene-recognition pipeline.
//!
//! Stages communicate through files under the output directory so each is
//! independently rerunnable: `extract` writes descriptor containers and the
//! split manifest, `train` the codebook/features/model, `evaluate` the
//! reports. `sweep-k`, `grid-search`, `predict`, and `bench-kmeans` are
//! self-contained experiment commands.
//!
//! Configuration comes from an optional TOML file (`--config`), with every
//! flag overriding the corresponding file value. Exit codes distinguish
//! usage errors (1), data errors (2), and missing stage artifacts (3).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use scenekit::encoding::FeatureMode;
use scenekit::evaluate::GridSpec;
use scenekit::pipeline::{self, ArtifactPaths, BenchKmeansConfig, PipelineConfig};
use scenekit::svm::KernelSpec;
use scenekit::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_MISSING_STAGE: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "scenekit",
    version,
    about = "Scene recognition with DAISY + HOG hybrid features, \
             bag-of-visual-words encoding, and a kernel SVM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan the corpus, split it, and write per-split descriptor containers
    Extract(PipelineArgs),
    /// Fit the codebook, encode features, and train the classifier
    Train(PipelineArgs),
    /// Score the held-out split and write the evaluation reports
    Evaluate(PipelineArgs),
    /// Re-run split/codebook/train/evaluate across vocabulary sizes
    SweepK {
        #[command(flatten)]
        args: PipelineArgs,
        /// Comma-separated vocabulary sizes to sweep
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "100,200,300,400,500,600,700,800,900,1000"
        )]
        ks: Vec<usize>,
        /// Evaluations averaged per K (reseeded seed, seed+1, ...)
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Search the RBF (C, gamma) surface on a validation carve-out
    GridSearch {
        #[command(flatten)]
        args: PipelineArgs,
        /// log10(C) range as MIN,MAX
        #[arg(long, value_name = "MIN,MAX", allow_hyphen_values = true)]
        grid_logc: Option<String>,
        /// log10(gamma) range as MIN,MAX
        #[arg(long, value_name = "MIN,MAX", allow_hyphen_values = true)]
        grid_loggamma: Option<String>,
        /// Coarse grid spacing in log10 units
        #[arg(long)]
        grid_step: Option<f64>,
        /// Skip the half-step refinement pass around the coarse best
        #[arg(long)]
        no_refine: bool,
    },
    /// Classify one image with the trained model
    Predict {
        #[command(flatten)]
        args: PipelineArgs,
        /// Image to classify
        image: PathBuf,
    },
    /// Time mini-batch k-means against exact Lloyd on synthetic blobs
    BenchKmeans {
        /// Directory for the JSON benchmark report
        #[arg(long, value_name = "DIR", default_value = "out")]
        output: PathBuf,
        /// Synthetic descriptor count
        #[arg(long, default_value_t = BenchKmeansConfig::default().points)]
        points: usize,
        /// Descriptor dimensionality
        #[arg(long, default_value_t = BenchKmeansConfig::default().dim)]
        dim: usize,
        /// Gaussian blob count in the synthetic mixture
        #[arg(long, default_value_t = BenchKmeansConfig::default().blobs)]
        blobs: usize,
        /// Blob standard deviation
        #[arg(long, default_value_t = BenchKmeansConfig::default().sigma)]
        sigma: f64,
        /// Number of centers to fit
        #[arg(long, default_value_t = BenchKmeansConfig::default().k)]
        k: usize,
        /// Mini-batch size
        #[arg(long, default_value_t = BenchKmeansConfig::default().batch_size)]
        batch_size: usize,
        /// Mini-batch iteration cap
        #[arg(long, default_value_t = BenchKmeansConfig::default().max_iterations)]
        max_iters: usize,
        /// Center-shift convergence tolerance
        #[arg(long, default_value_t = BenchKmeansConfig::default().shift_tolerance)]
        tol: f64,
        /// Seed for data generation and both fits
        #[arg(long, default_value_t = BenchKmeansConfig::default().seed)]
        seed: u64,
        /// Subsample size for the inertia comparison
        #[arg(long, default_value_t = BenchKmeansConfig::default().subsample)]
        subsample: usize,
        /// Iteration cap for the exact-Lloyd baseline
        #[arg(long, default_value_t = BenchKmeansConfig::default().lloyd_max_iterations)]
        lloyd_max_iters: usize,
        /// Worker threads (default: logical cores)
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Config file plus per-field overrides shared by the pipeline commands.
/// Flags always win over file values, which win over built-in defaults.
#[derive(Args, Debug)]
struct PipelineArgs {
    /// TOML config file mirroring the pipeline configuration
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Corpus root: one subdirectory of images per class
    #[arg(long, value_name = "DIR")]
    dataset: Option<PathBuf>,
    /// Directory for stage artifacts and reports
    #[arg(long, value_name = "DIR")]
    output: Option<PathBuf>,
    /// Fraction of each class used for training
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Master seed; stage seeds derive from it
    #[arg(long)]
    seed: Option<u64>,
    /// Feature mode: hog_only, daisy_only, or hybrid
    #[arg(long)]
    mode: Option<String>,
    /// HOG orientation bin count
    #[arg(long)]
    hog_orientations: Option<usize>,
    /// HOG cell side in pixels
    #[arg(long)]
    hog_cell: Option<usize>,
    /// HOG block side in cells
    #[arg(long)]
    hog_block: Option<usize>,
    /// Fixed WxH window for HOG: larger frames are center-cropped,
    /// smaller ones zero-padded
    #[arg(long, value_name = "WxH")]
    hog_window: Option<String>,
    /// DAISY outermost ring radius in pixels
    #[arg(long)]
    daisy_radius: Option<usize>,
    /// DAISY ring count
    #[arg(long)]
    daisy_rings: Option<usize>,
    /// Histograms per DAISY ring
    #[arg(long)]
    daisy_histograms: Option<usize>,
    /// Orientation bins per DAISY histogram
    #[arg(long)]
    daisy_orientations: Option<usize>,
    /// DAISY grid spacing in pixels
    #[arg(long)]
    daisy_step: Option<usize>,
    /// Vocabulary size K
    #[arg(long)]
    k: Option<usize>,
    /// Mini-batch size for the codebook fit
    #[arg(long)]
    batch_size: Option<usize>,
    /// Mini-batch iteration cap
    #[arg(long)]
    max_iters: Option<usize>,
    /// Codebook center-shift convergence tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// SVM kernel: linear or rbf
    #[arg(long)]
    kernel: Option<String>,
    /// Soft-margin penalty C
    #[arg(long)]
    c: Option<f64>,
    /// RBF kernel bandwidth gamma
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    /// SMO KKT violation tolerance
    #[arg(long)]
    svm_tol: Option<f64>,
    /// Worker threads (default: logical cores)
    #[arg(long)]
    threads: Option<usize>,
}

impl PipelineArgs {
    /// Layers CLI flags over the config file over built-in defaults.
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Config(format!("cannot read config {}: {e}", path.display()))
                })?;
                toml::from_str::<PipelineConfig>(&text).map_err(|e| {
                    Error::Config(format!("invalid config {}: {e}", path.display()))
                })?
            }
            None => PipelineConfig::default(),
        };

        if let Some(v) = &self.dataset {
            config.dataset_root = v.clone();
        }
        if let Some(v) = &self.output {
            config.output_dir = v.clone();
        }
        if let Some(v) = self.train_fraction {
            config.train_fraction = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = &self.mode {
            config.mode = FeatureMode::parse(v)?;
        }
        if let Some(v) = self.hog_orientations {
            config.hog.orientations = v;
        }
        if let Some(v) = self.hog_cell {
            config.hog.cell_size = v;
        }
        if let Some(v) = self.hog_block {
            config.hog.block_size = v;
        }
        if let Some(v) = &self.hog_window {
            config.hog_window = Some(parse_window(v)?);
        }
        if let Some(v) = self.daisy_radius {
            config.daisy.radius = v;
        }
        if let Some(v) = self.daisy_rings {
            config.daisy.rings = v;
        }
        if let Some(v) = self.daisy_histograms {
            config.daisy.ring_histograms = v;
        }
        if let Some(v) = self.daisy_orientations {
            config.daisy.orientations = v;
        }
        if let Some(v) = self.daisy_step {
            config.daisy.step = v;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = self.batch_size {
            config.batch_size = v;
        }
        if let Some(v) = self.max_iters {
            config.max_iterations = v;
        }
        if let Some(v) = self.tol {
            config.shift_tolerance = v;
        }
        config.kernel = resolve_kernel(config.kernel, self.kernel.as_deref(), self.gamma)?;
        if let Some(v) = self.c {
            config.c = v;
        }
        if let Some(v) = self.svm_tol {
            config.svm_tol = v;
        }

        pipeline::init_thread_pool(self.threads);
        config.validate()?;
        Ok(config)
    }
}

/// Applies `--kernel`/`--gamma` on top of the configured kernel.
fn resolve_kernel(
    configured: KernelSpec,
    kernel: Option<&str>,
    gamma: Option<f64>,
) -> Result<KernelSpec> {
    let configured_gamma = match configured {
        KernelSpec::Rbf { gamma } => Some(gamma),
        KernelSpec::Linear => None,
    };
    match (kernel, gamma) {
        (None, None) => Ok(configured),
        (Some("linear"), None) => Ok(KernelSpec::Linear),
        (Some("linear"), Some(_)) => Err(Error::Config(
            "--gamma only applies to the rbf kernel".into(),
        )),
        (Some("rbf"), Some(gamma)) => Ok(KernelSpec::Rbf { gamma }),
        (Some("rbf"), None) => configured_gamma
            .map(|gamma| KernelSpec::Rbf { gamma })
            .ok_or_else(|| Error::Config("rbf kernel requires --gamma".into())),
        (None, Some(gamma)) => match configured {
            KernelSpec::Rbf { .. } => Ok(KernelSpec::Rbf { gamma }),
            KernelSpec::Linear => Err(Error::Config(
                "--gamma only applies to the rbf kernel; pass --kernel rbf".into(),
            )),
        },
        (Some(other), _) => Err(Error::Config(format!(
            "unknown kernel {other:?}; expected linear or rbf"
        ))),
    }
}

/// Parses a `WIDTHxHEIGHT` window like `256x256`.
fn parse_window(s: &str) -> Result<(usize, usize)> {
    let err = || Error::Config(format!("invalid window {s:?}; expected WIDTHxHEIGHT"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(err)?;
    let w = w.trim().parse().map_err(|_| err())?;
    let h = h.trim().parse().map_err(|_| err())?;
    Ok((w, h))
}

/// Parses a `MIN,MAX` pair like `-3,3`.
fn parse_range(s: &str) -> Result<(f64, f64)> {
    let err = || Error::Config(format!("invalid range {s:?}; expected MIN,MAX"));
    let (lo, hi) = s.split_once(',').ok_or_else(err)?;
    let lo = lo.trim().parse().map_err(|_| err())?;
    let hi = hi.trim().parse().map_err(|_| err())?;
    Ok((lo, hi))
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Extract(args) => {
            let config = args.resolve()?;
            let summary = pipeline::cmd_extract(&config)?;
            println!(
                "extracted {} classes: {} train + {} test images, \
                 {} + {} DAISY rows, HOG length {}, {:.1}s",
                summary.classes.len(),
                summary.n_train,
                summary.n_test,
                summary.daisy_rows_train,
                summary.daisy_rows_test,
                summary.hog_len,
                summary.elapsed_seconds,
            );
            println!("artifacts in {}", config.output_dir.display());
        }
        Command::Train(args) => {
            let config = args.resolve()?;
            let report = pipeline::cmd_train(&config)?;
            println!(
                "trained {} model: feature dim {} (K {} + HOG {}), {} images, {:.1}s \
                 (codebook {:.1}s, encode {:.1}s, svm {:.1}s)",
                report.mode,
                report.feature_dim,
                report.k,
                report.hog_len,
                report.n_train,
                report.timings_seconds.total,
                report.timings_seconds.codebook,
                report.timings_seconds.encode,
                report.timings_seconds.svm,
            );
            let paths = ArtifactPaths::new(&config.output_dir);
            println!("model in {}", paths.model().display());
        }
        Command::Evaluate(args) => {
            let config = args.resolve()?;
            let report = pipeline::cmd_evaluate(&config)?;
            println!(
                "accuracy {:.4} over {} classes (macro F1 {:.4})",
                report.accuracy,
                report.classes.len(),
                report.macro_f1,
            );
            let paths = ArtifactPaths::new(&config.output_dir);
            println!(
                "report in {}, confusion in {}",
                paths.eval_report().display(),
                paths.confusion().display(),
            );
        }
        Command::SweepK { args, ks, repeats } => {
            if ks.is_empty() {
                return Err(Error::Config("--ks needs at least one value".into()));
            }
            if repeats == 0 {
                return Err(Error::Config("--repeats must be positive".into()));
            }
            let config = args.resolve()?;
            let rows = pipeline::cmd_sweep_k(&config, &ks, repeats)?;
            for (k, accuracy) in &rows {
                println!("K {k}: accuracy {accuracy:.4}");
            }
            let paths = ArtifactPaths::new(&config.output_dir);
            println!("surface in {}", paths.sweep().display());
        }
        Command::GridSearch {
            args,
            grid_logc,
            grid_loggamma,
            grid_step,
            no_refine,
        } => {
            let config = args.resolve()?;
            let mut spec = GridSpec::default();
            if let Some(s) = &grid_logc {
                spec.log_c = parse_range(s)?;
            }
            if let Some(s) = &grid_loggamma {
                spec.log_gamma = parse_range(s)?;
            }
            if let Some(step) = grid_step {
                spec.step = step;
            }
            spec.refine = !no_refine;
            let report = pipeline::cmd_grid_search(&config, &spec)?;
            let best = &report.result.best;
            println!(
                "best log10(C) {} log10(gamma) {} -> validation accuracy {:.4} \
                 over {} points",
                best.log_c,
                best.log_gamma,
                best.accuracy,
                report.result.grid.len(),
            );
            let paths = ArtifactPaths::new(&config.output_dir);
            println!("surface in {}", paths.grid().display());
        }
        Command::Predict { args, image } => {
            let config = args.resolve()?;
            let prediction = pipeline::cmd_predict(&config, &image)?;
            println!("{}", prediction.class_name);
            for d in &prediction.decisions {
                println!("  {}: {:.6}", d.class, d.decision);
            }
        }
        Command::BenchKmeans {
            output,
            points,
            dim,
            blobs,
            sigma,
            k,
            batch_size,
            max_iters,
            tol,
            seed,
            subsample,
            lloyd_max_iters,
            threads,
        } => {
            pipeline::init_thread_pool(threads);
            let config = BenchKmeansConfig {
                points,
                dim,
                blobs,
                sigma,
                k,
                batch_size,
                max_iterations: max_iters,
                shift_tolerance: tol,
                seed,
                subsample,
                lloyd_max_iterations: lloyd_max_iters,
            };
            let report = pipeline::cmd_bench_kmeans(&config)?;
            println!(
                "mini-batch fit {:.1}s over {} iterations ({}), \
                 inertia ratio vs Lloyd {:.4}",
                report.fit_seconds,
                report.iterations,
                if report.converged { "converged" } else { "iteration cap" },
                report.inertia_ratio,
            );
            let paths = ArtifactPaths::new(&output);
            fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
            let json = serde_json::to_string_pretty(&report)
                .expect("report serializes") + "\n";
            fs::write(paths.bench_report(), json)
                .map_err(|e| Error::io(paths.bench_report(), e))?;
            println!("report in {}", paths.bench_report().display());
        }
    }
    Ok(())
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::MissingArtifact(_) => EXIT_MISSING_STAGE,
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
