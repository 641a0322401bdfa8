//! Acceptance gate: one test per criterion, each printing a single
//! `ACCEPTANCE <n> <name>: PASS|FAIL|SKIP (...)` line (visible with
//! `cargo test --test acceptance -- --nocapture`).
//!
//! Criteria 1–3 reproduce the reference fifteen-scene results and need the
//! corpus on disk: set `SCENEKIT_FIFTEEN_SCENE` to its root (one
//! subdirectory of images per category) to enable them; they SKIP
//! otherwise. Criteria 4–7 always run. The dataset runs hold multi-GB
//! descriptor sets in memory, so prefer `--test-threads=1` when the corpus
//! is configured.

use std::env;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use scenekit::codebook::{assign, inertia, lloyd_exact, Codebook};
use scenekit::daisy::{daisy_grid, DaisyParams};
use scenekit::dataset::{scan_corpus, stratified_split_indices};
use scenekit::descriptor::{DescriptorKind, DescriptorSet};
use scenekit::encoding::{bovw_histogram, FeatureMode};
use scenekit::evaluate::{grid_search, k_sweep, report_from_confusion, GridSpec};
use scenekit::gray::GrayImage;
use scenekit::hog::{hog_descriptor, hog_len, HogParams};
use scenekit::oracles::{brute_histogram, linear_scan_nearest, tiny_qp_svm};
use scenekit::pipeline::{
    self, extract_descriptors, run_experiment, BenchKmeansConfig, CorpusDescriptors,
    PipelineConfig,
};
use scenekit::svm::{dual_objective, ovr_train, smo_train_binary, KernelSpec, SvmConfig};
use scenekit::synth::{gaussian_blobs, toy_corpus};

const DATASET_ENV: &str = "SCENEKIT_FIFTEEN_SCENE";

fn report(n: usize, name: &str, outcome: &str, detail: impl Display) {
    println!("ACCEPTANCE {n} {name}: {outcome} ({detail})");
}

fn skip(n: usize, name: &str) {
    report(
        n,
        name,
        "SKIP",
        format!("set {DATASET_ENV} to the fifteen-scene corpus root to enable"),
    );
}

fn dataset_root() -> Option<PathBuf> {
    let root = PathBuf::from(env::var_os(DATASET_ENV)?);
    assert!(
        root.is_dir(),
        "{DATASET_ENV} is set to {} but that is not a directory",
        root.display()
    );
    Some(root)
}

/// The reference configuration: hybrid features, K = 600, linear SVM,
/// 40/60 stratified split. HOG runs over a fixed centered 256x256 window
/// because the corpus images vary slightly in size.
fn reproduction_config(root: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        dataset_root: root.to_path_buf(),
        output_dir: out.to_path_buf(),
        train_fraction: 0.4,
        seed: 0,
        mode: FeatureMode::Hybrid,
        hog_window: Some((256, 256)),
        k: 600,
        ..PipelineConfig::default()
    }
}

/// One shared full-corpus extraction for the in-memory reproduction runs
/// (criteria 2 and 3), so each does not pay the extraction cost again.
fn shared_extraction() -> Option<&'static (Vec<String>, CorpusDescriptors)> {
    static EXTRACTED: OnceLock<Option<(Vec<String>, CorpusDescriptors)>> = OnceLock::new();
    EXTRACTED
        .get_or_init(|| {
            let root = dataset_root()?;
            let corpus = scan_corpus(&root).expect("corpus scans");
            let config = reproduction_config(&root, Path::new("unused"));
            let all: Vec<usize> = (0..corpus.items.len()).collect();
            let descriptors =
                extract_descriptors(&corpus, &all, &config).expect("descriptors extract");
            Some((corpus.classes, descriptors))
        })
        .as_ref()
}

#[test]
fn criterion_1_reproduction_hybrid_k600_linear() {
    let name = "reproduction-hybrid-k600-linear";
    let Some(root) = dataset_root() else {
        skip(1, name);
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let config = reproduction_config(&root, dir.path());
    let start = Instant::now();
    pipeline::cmd_extract(&config).expect("extract succeeds");
    pipeline::cmd_train(&config).expect("train succeeds");
    let eval = pipeline::cmd_evaluate(&config).expect("evaluate succeeds");
    let elapsed = start.elapsed().as_secs_f64();

    let ok = eval.accuracy >= 0.70 && elapsed < 7200.0;
    report(
        1,
        name,
        if ok { "PASS" } else { "FAIL" },
        format!(
            "accuracy {:.4} needs >= 0.70, end-to-end {:.0}s needs < 7200s",
            eval.accuracy, elapsed
        ),
    );
    assert!(ok, "accuracy {:.4}, elapsed {elapsed:.0}s", eval.accuracy);
}

#[test]
fn criterion_2_ablation_ordering() {
    let name = "ablation-ordering";
    let Some((classes, all)) = shared_extraction() else {
        skip(2, name);
        return;
    };
    let config = reproduction_config(Path::new("unused"), Path::new("unused"));
    let (train_idx, test_idx) =
        stratified_split_indices(&all.labels, classes.len(), &config.split_spec()).unwrap();
    let train = all.subset(&train_idx).unwrap();
    let test = all.subset(&test_idx).unwrap();

    let accuracy = |mode: FeatureMode| {
        let round = PipelineConfig { mode, ..config.clone() };
        run_experiment(&train, &test, classes, &round)
            .expect("experiment runs")
            .accuracy
    };
    let hybrid = accuracy(FeatureMode::Hybrid);
    let daisy = accuracy(FeatureMode::DaisyOnly);
    let hog = accuracy(FeatureMode::HogOnly);

    // Strict ordering with at least two points between neighbors.
    let ok = hybrid >= daisy + 0.02 && daisy >= hog + 0.02;
    report(
        2,
        name,
        if ok { "PASS" } else { "FAIL" },
        format!("hybrid {hybrid:.4} > daisy {daisy:.4} > hog {hog:.4}, gaps need >= 0.02"),
    );
    assert!(ok, "hybrid {hybrid:.4}, daisy {daisy:.4}, hog {hog:.4}");
}

#[test]
fn criterion_3_vocabulary_sweep_plateau() {
    let name = "vocabulary-sweep-plateau";
    let Some((classes, all)) = shared_extraction() else {
        skip(3, name);
        return;
    };
    let config = reproduction_config(Path::new("unused"), Path::new("unused"));
    let ks: Vec<usize> = (1..=10).map(|i| i * 100).collect();
    let rows = k_sweep(&ks, 1, config.seed, |k, seed| {
        let round = PipelineConfig { k, seed, ..config.clone() };
        let (train_idx, test_idx) =
            stratified_split_indices(&all.labels, classes.len(), &round.split_spec())?;
        let train = all.subset(&train_idx)?;
        let test = all.subset(&test_idx)?;
        Ok(run_experiment(&train, &test, classes, &round)?.accuracy)
    })
    .expect("sweep runs");

    let at = |k: usize| rows.iter().find(|(rk, _)| *rk == k).unwrap().1;
    // Reference accuracy for hybrid features at K = 600 on this corpus.
    let reference = 0.7314;
    let plateau = at(500).max(at(600)).max(at(700));
    let overshoot = rows
        .iter()
        .map(|&(_, a)| a - plateau)
        .fold(f64::MIN, f64::max);
    let ok = (at(600) - reference).abs() <= 0.03 && overshoot <= 0.02;
    let detail = rows
        .iter()
        .map(|(k, a)| format!("K{k} {a:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    report(
        3,
        name,
        if ok { "PASS" } else { "FAIL" },
        format!(
            "{detail}; K600 needs within 0.03 of {reference}, no K above plateau by > 0.02"
        ),
    );
    assert!(ok, "K600 {:.4} vs reference {reference}, overshoot {overshoot:.4}", at(600));
}

#[test]
fn criterion_4_minibatch_scale_and_quality() {
    let name = "minibatch-scale-and-quality";
    let config = BenchKmeansConfig::default();
    assert!(config.points >= 1_000_000 && config.dim == 200 && config.k == 600);
    let bench = pipeline::cmd_bench_kmeans(&config).expect("benchmark runs");

    let ok = bench.fit_seconds < 300.0 && bench.inertia_ratio <= 1.1;
    report(
        4,
        name,
        if ok { "PASS" } else { "FAIL" },
        format!(
            "fit {:.1}s needs < 300s, inertia ratio {:.4} needs <= 1.1 \
             (mini-batch {:.1} vs Lloyd {:.1} on a {}-point subsample)",
            bench.fit_seconds,
            bench.inertia_ratio,
            bench.minibatch_inertia,
            bench.lloyd_inertia,
            config.subsample,
        ),
    );
    assert!(
        ok,
        "fit {:.1}s, inertia ratio {:.4}",
        bench.fit_seconds, bench.inertia_ratio
    );
}

#[test]
fn criterion_5_oracle_equivalence() {
    let name = "oracle-equivalence";
    let mut failures: Vec<String> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(50);

    // Nearest-center assignment against an independent linear scan.
    let (k, dim) = (64, 32);
    let centers: Vec<f32> = (0..k * dim).map(|_| rng.random::<f32>()).collect();
    let codebook = Codebook::new(k, dim, centers.clone(), None).unwrap();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let q: Vec<f32> = (0..dim).map(|_| rng.random::<f32>()).collect();
        if assign(&codebook, &q).unwrap() != linear_scan_nearest(&centers, dim, &q) {
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        failures.push(format!("assign disagreed with linear scan {mismatches}/1000 times"));
    }

    // Pooled histogram against a brute-force tally.
    let rows: Vec<f32> = (0..500 * dim).map(|_| rng.random::<f32>()).collect();
    let set = DescriptorSet::from_rows(DescriptorKind::Daisy, dim, rows).unwrap();
    let pooled = bovw_histogram(&codebook, &set).unwrap();
    if pooled.values != brute_histogram(&centers, dim, k, &set) {
        failures.push("bovw histogram differs from the brute-force tally".into());
    }

    // Lloyd on the 1-D instance {0, 1, 8, 9} with k = 2: the optimum puts
    // centers at 0.5 and 8.5 for an inertia of exactly 1.0.
    let quad = DescriptorSet::from_rows(DescriptorKind::Daisy, 1, vec![0.0, 1.0, 8.0, 9.0])
        .unwrap();
    let lloyd = lloyd_exact(&quad, 2, 0, 100).unwrap();
    let lloyd_inertia = inertia(&lloyd, &quad).unwrap();
    if (lloyd_inertia - 1.0).abs() > 1e-9 {
        failures.push(format!("lloyd inertia {lloyd_inertia} on {{0,1,8,9}}, expected 1.0"));
    }

    // SMO against the active-set QP oracle on random 6-point instances.
    let mut max_gap = 0.0f64;
    for trial in 0..12 {
        let kernel = if trial % 2 == 0 {
            KernelSpec::Linear
        } else {
            KernelSpec::Rbf { gamma: 0.8 }
        };
        let flat: Vec<f32> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
        let features = DescriptorSet::from_rows(DescriptorKind::Hybrid, 2, flat).unwrap();
        let labels: [i8; 6] = [1, 1, 1, -1, -1, -1];
        let svm_config = SvmConfig {
            c: 1.5,
            kernel,
            tol: 1e-6,
            ..SvmConfig::default()
        };
        let svm = smo_train_binary(&features, &labels, &svm_config).unwrap();
        let qp = tiny_qp_svm(&features, &labels, 1.5, &kernel)
            .unwrap()
            .expect("oracle finds an optimum");
        max_gap = max_gap.max((dual_objective(&svm) - qp.objective).abs());
    }
    if max_gap > 1e-4 {
        failures.push(format!("SMO-vs-QP dual objective gap {max_gap:.2e} exceeds 1e-4"));
    }

    // The two-point instance x = 0 (y = -1), x = 2 (y = +1) solves in closed
    // form to alpha = (0.5, 0.5) and bias = -1.
    let pair = DescriptorSet::from_rows(DescriptorKind::Hybrid, 1, vec![0.0, 2.0]).unwrap();
    let svm = smo_train_binary(
        &pair,
        &[-1, 1],
        &SvmConfig {
            c: 10.0,
            kernel: KernelSpec::Linear,
            tol: 1e-8,
            ..SvmConfig::default()
        },
    )
    .unwrap();
    let alphas: Vec<f64> = svm.dual_coefs.iter().map(|c| c.abs()).collect();
    if alphas.len() != 2
        || (alphas[0] - 0.5).abs() > 1e-6
        || (alphas[1] - 0.5).abs() > 1e-6
        || (svm.bias - (-1.0)).abs() > 1e-6
    {
        failures.push(format!(
            "two-point instance gave alphas {alphas:?}, bias {}; expected (0.5, 0.5), -1",
            svm.bias
        ));
    }

    let ok = failures.is_empty();
    report(
        5,
        name,
        if ok { "PASS" } else { "FAIL" },
        if ok {
            format!(
                "assign 1000/1000, bovw exact, lloyd inertia {lloyd_inertia}, \
                 smo-vs-qp gap {max_gap:.2e}, two-point closed form exact"
            )
        } else {
            failures.join("; ")
        },
    );
    assert!(ok, "{}", failures.join("; "));
}

#[test]
fn criterion_6_invariant_suites() {
    let name = "invariant-suites";
    let mut failures: Vec<String> = Vec::new();

    // Brightness shifts leave descriptors unchanged; contrast scaling
    // survives the per-segment/per-block normalization.
    let base = GrayImage::from_fn(96, 96, |x, y| {
        0.35 + 0.25 * ((x as f32 * 3.0 + y as f32 * 5.0) / 9.5).sin()
    });
    let brighter = GrayImage::from_fn(96, 96, |x, y| base.get(x, y) + 0.2);
    let stretched = GrayImage::from_fn(96, 96, |x, y| base.get(x, y) * 1.5);
    let daisy_params = DaisyParams::default();
    let hog_params = HogParams::default();
    let close = |a: &[f32], b: &[f32]| -> f32 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
    };
    let daisy_ref = daisy_grid(&base, &daisy_params).unwrap();
    let hog_ref = hog_descriptor(&base, &hog_params).unwrap();
    for (label, img) in [("brightness", &brighter), ("contrast", &stretched)] {
        let d = close(
            daisy_grid(img, &daisy_params).unwrap().as_flat(),
            daisy_ref.as_flat(),
        );
        let h = close(&hog_descriptor(img, &hog_params).unwrap(), &hog_ref);
        if d > 1e-4 || h > 1e-4 {
            failures.push(format!("{label} shifted descriptors by daisy {d:.2e} / hog {h:.2e}"));
        }
    }

    // Every DAISY segment is L2-normalized or identically zero.
    let segments = daisy_params.rings * daisy_params.ring_histograms + 1;
    let h = daisy_params.orientations;
    let mut bad_norms = 0;
    for i in 0..daisy_ref.count() {
        let row = daisy_ref.row(i);
        for s in 0..segments {
            let norm: f32 = row[s * h..(s + 1) * h].iter().map(|v| v * v).sum::<f32>().sqrt();
            if (norm - 1.0).abs() > 1e-4 && norm > 1e-4 {
                bad_norms += 1;
            }
        }
    }
    if bad_norms > 0 {
        failures.push(format!("{bad_norms} DAISY segment norms outside {{0, 1}}"));
    }

    // Descriptor length matches the block-count formula on random shapes.
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut checked = 0;
    while checked < 5 {
        let params = HogParams {
            orientations: rng.random_range(5..=12),
            cell_size: rng.random_range(4..=12),
            block_size: rng.random_range(1..=3),
            clip: 0.2,
        };
        let (w, h) = (rng.random_range(48..=128), rng.random_range(48..=128));
        let Ok(expected) = hog_len(w, h, &params) else {
            continue; // too small for a block; resample
        };
        let img = GrayImage::from_fn(w, h, |x, y| ((x * 31 + y * 17) % 97) as f32 / 97.0);
        let got = hog_descriptor(&img, &params).unwrap().len();
        if got != expected {
            failures.push(format!(
                "HOG length {got} != formula {expected} for {w}x{h} {params:?}"
            ));
        }
        checked += 1;
    }

    // Histogram mass equals the descriptor count and ignores row order.
    let (k, dim) = (8, 16);
    let centers: Vec<f32> = (0..k * dim).map(|_| rng.random::<f32>()).collect();
    let codebook = Codebook::new(k, dim, centers, None).unwrap();
    let rows: Vec<f32> = (0..200 * dim).map(|_| rng.random::<f32>()).collect();
    let set = DescriptorSet::from_rows(DescriptorKind::Daisy, dim, rows).unwrap();
    let hist = bovw_histogram(&codebook, &set).unwrap();
    if hist.values.iter().sum::<f32>() != 200.0 {
        failures.push(format!(
            "histogram mass {} != 200 descriptors",
            hist.values.iter().sum::<f32>()
        ));
    }
    let mut order: Vec<usize> = (0..set.count()).collect();
    order.shuffle(&mut rng);
    let mut shuffled = DescriptorSet::new(DescriptorKind::Daisy, dim).unwrap();
    for &i in &order {
        shuffled.push(set.row(i)).unwrap();
    }
    if bovw_histogram(&codebook, &shuffled).unwrap().values != hist.values {
        failures.push("histogram changed under descriptor permutation".into());
    }

    // Every trained binary machine satisfies the dual constraints.
    let blobs = gaussian_blobs(
        &[([0.0, 0.0], 40), ([3.0, 3.0], 40), ([0.0, 3.0], 40)],
        0.3,
        5,
    );
    let labels: Vec<usize> = (0..3).flat_map(|c| std::iter::repeat_n(c, 40)).collect();
    let classes: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let c_penalty = 2.0;
    let model = ovr_train(
        &blobs,
        &labels,
        &classes,
        &SvmConfig {
            c: c_penalty,
            ..SvmConfig::default()
        },
    )
    .unwrap();
    for (i, binary) in model.binaries.iter().enumerate() {
        let balance: f64 = binary.dual_coefs.iter().sum();
        if balance.abs() > 1e-8 {
            failures.push(format!("binary {i} violates sum(alpha*y) = 0 by {balance:.2e}"));
        }
        if binary.dual_coefs.iter().any(|c| c.abs() > c_penalty + 1e-9) {
            failures.push(format!("binary {i} has a dual coefficient outside [-C, C]"));
        }
    }

    // Confusion-matrix accounting identities on random predictions.
    let n_classes = 4;
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for _ in 0..500 {
        confusion[rng.random_range(0..n_classes)][rng.random_range(0..n_classes)] += 1;
    }
    let diag: usize = (0..n_classes).map(|i| confusion[i][i]).sum();
    let eval = report_from_confusion(
        confusion.clone(),
        (0..n_classes).map(|c| format!("class_{c}")).collect(),
    );
    if (eval.accuracy - diag as f64 / 500.0).abs() > 1e-12 {
        failures.push("accuracy != trace / total".into());
    }
    let support_total: usize = eval.per_class.iter().map(|m| m.support).sum();
    if support_total != 500 {
        failures.push(format!("per-class supports sum to {support_total} != 500"));
    }
    for (i, m) in eval.per_class.iter().enumerate() {
        if m.support != confusion[i].iter().sum::<usize>() {
            failures.push(format!("class {i} support != confusion row sum"));
        }
    }
    if (eval.weighted_recall - eval.accuracy).abs() > 1e-12 {
        failures.push("weighted recall != accuracy".into());
    }

    // Grid search returns the argmax and breaks ties toward the smaller
    // (logC, logGamma) corner.
    let spec = GridSpec {
        log_c: (0.0, 1.0),
        log_gamma: (0.0, 1.0),
        step: 1.0,
        refine: false,
    };
    let surface = grid_search(&spec, |log_c, log_gamma| {
        Ok(match (log_c as i64, log_gamma as i64) {
            (0, 0) => 0.1,
            (0, 1) => 0.9,
            (1, 0) => 0.9,
            _ => 0.5,
        })
    })
    .unwrap();
    if (surface.best.log_c, surface.best.log_gamma) != (0.0, 1.0) {
        failures.push(format!(
            "2x2 grid argmax picked ({}, {})",
            surface.best.log_c, surface.best.log_gamma
        ));
    }

    let ok = failures.is_empty();
    report(
        6,
        name,
        if ok { "PASS" } else { "FAIL" },
        if ok {
            "brightness/contrast, daisy norms, hog length formula, histogram \
             mass/permutation, dual constraints, confusion accounting, grid argmax"
                .to_string()
        } else {
            failures.join("; ")
        },
    );
    assert!(ok, "{}", failures.join("; "));
}

#[test]
fn criterion_7_desk_scale_end_to_end() {
    let name = "desk-scale-end-to-end";
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    toy_corpus(&corpus, 3, 30, 96, 11).expect("toy corpus writes");

    let config = PipelineConfig {
        dataset_root: corpus,
        output_dir: dir.path().join("run"),
        mode: FeatureMode::Hybrid,
        kernel: KernelSpec::Linear,
        k: 64,
        batch_size: 256,
        seed: 11,
        ..PipelineConfig::default()
    };
    let start = Instant::now();
    pipeline::cmd_extract(&config).expect("extract succeeds");
    pipeline::cmd_train(&config).expect("train succeeds");
    let eval = pipeline::cmd_evaluate(&config).expect("evaluate succeeds");
    let elapsed = start.elapsed().as_secs_f64();

    let ok = eval.accuracy >= 0.90 && elapsed < 60.0;
    report(
        7,
        name,
        if ok { "PASS" } else { "FAIL" },
        format!(
            "accuracy {:.4} needs >= 0.90, end-to-end {:.1}s needs < 60s \
             (3 classes x 30 oriented textures)",
            eval.accuracy, elapsed
        ),
    );
    assert!(ok, "accuracy {:.4}, elapsed {elapsed:.1}s", eval.accuracy);
}
