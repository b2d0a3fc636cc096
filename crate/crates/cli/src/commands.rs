//! Implementations of the CLI subcommands.

use crate::dataset::{DatasetIndex, PatchEntry};
use crate::manifest::RunManifest;
use anyhow::{Context, Result, bail};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use requant_codec::{JpegStream, QMatrixPool, QuantizedBlockGrid};
use requant_forensics::features::{FeatureSpec, build_feature, write_feature};
use requant_forensics::localization::{ModelScorer, localize, score_localization};
use requant_forensics::pgm;
use requant_forensics::synthesis::{
    ForgeryKind, ForgeryOptions, make_double_patch_between, make_single_patch, procedural_patch,
    window_ground_truth,
};
use requant_forensics::training::{self, Dataset, TrainConfig, split_by_source};
use requant_forensics::{BlockMask, Label};
use requant_nn::{DenseNet, Mode, ModelConfig, checkpoint};
use std::path::{Path, PathBuf};

/// Default pool when none is supplied: the standard tables for quality
/// factors 51-100 plus 50 seeded step perturbations to stand in for
/// non-standard matrices.
pub fn default_pool() -> QMatrixPool {
    let mut pool = QMatrixPool::standard_51_to_100();
    pool.extend_with_perturbations(50, 0xDEFA17).expect("default pool perturbations");
    pool
}

pub fn load_pool(path: Option<&Path>) -> Result<QMatrixPool> {
    match path {
        Some(p) => {
            QMatrixPool::load(p).with_context(|| format!("loading q-matrix pool {}", p.display()))
        }
        None => Ok(default_pool()),
    }
}

// ---------------------------------------------------------------------------
// qpool
// ---------------------------------------------------------------------------

pub fn qpool_make(out: &Path, size: usize, seed: u64) -> Result<()> {
    let mut pool = QMatrixPool::standard_51_to_100();
    if size < pool.len() {
        bail!("pool size {size} below the {} standard tables", pool.len());
    }
    pool.extend_with_perturbations(size - pool.len(), seed)?;
    pool.save(out)?;
    println!("wrote pool of {} matrices to {}", pool.len(), out.display());
    Ok(())
}

pub fn qpool_split(pool_path: &Path, split: &str, out_train: &Path, out_test: &Path) -> Result<()> {
    let (seed, train_count) = parse_split_spec(split)?;
    let pool = load_pool(Some(pool_path))?;
    let (train, test) = pool.split(seed, train_count)?;
    train.save(out_train)?;
    test.save(out_test)?;
    println!(
        "split {} matrices into {} train / {} test (seed {seed})",
        pool.len(),
        train.len(),
        test.len()
    );
    Ok(())
}

/// Parses the `<seed>:<trainCount>` form of --qpool-split.
pub fn parse_split_spec(spec: &str) -> Result<(u64, usize)> {
    let (seed, count) = spec
        .split_once(':')
        .with_context(|| format!("--qpool-split {spec:?} is not of the form <seed>:<trainCount>"))?;
    Ok((seed.parse().context("split seed")?, count.parse().context("split train count")?))
}

pub fn qpool_show(pool_path: &Path) -> Result<()> {
    let pool = load_pool(Some(pool_path))?;
    for entry in pool.entries() {
        let steps = entry.matrix.steps();
        println!(
            "{:12} {:?} first row {:?}",
            entry.id,
            entry.origin,
            &steps[0..8]
        );
    }
    println!("{} matrices", pool.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------------

pub struct SynthesizeParams {
    pub kind: String,
    pub out: PathBuf,
    pub count: usize,
    pub patch_size: usize,
    pub image_size: usize,
    pub region_size: usize,
    pub unaligned: bool,
    pub seed: u64,
    pub qpool: Option<PathBuf>,
    pub qpool_first: Option<PathBuf>,
    pub qpool_final: Option<PathBuf>,
}

fn resolve_pools(params: &SynthesizeParams) -> Result<(QMatrixPool, QMatrixPool)> {
    let shared = load_pool(params.qpool.as_deref())?;
    let first = match &params.qpool_first {
        Some(p) => load_pool(Some(p))?,
        None => shared.clone(),
    };
    let last = match &params.qpool_final {
        Some(p) => load_pool(Some(p))?,
        None => shared,
    };
    Ok((first, last))
}

pub fn synthesize(params: SynthesizeParams) -> Result<()> {
    std::fs::create_dir_all(&params.out)?;
    let (first_pool, final_pool) = resolve_pools(&params)?;
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);

    match params.kind.as_str() {
        "patches" => {
            if params.patch_size == 0 || !params.patch_size.is_multiple_of(8) {
                bail!("patch size must be a nonzero multiple of 8");
            }
            let patch_dir = params.out.join("patches");
            std::fs::create_dir_all(&patch_dir)?;
            let mut entries = Vec::with_capacity(2 * params.count);
            for id in 0..params.count {
                let src = procedural_patch(params.patch_size, params.patch_size, &mut rng);
                let single = make_single_patch(id as u64, &src, &final_pool, &mut rng);
                let double =
                    make_double_patch_between(id as u64, &src, &first_pool, &final_pool, &mut rng)?;
                for patch in [single, double] {
                    let file = format!("patches/{:06}.jpg", entries.len());
                    patch.stream.write_file(params.out.join(&file))?;
                    entries.push(PatchEntry {
                        file,
                        label: patch.label,
                        source: patch.source_id,
                        q_first: patch.q_first,
                        q_final: patch.q_final,
                    });
                }
            }
            let index = DatasetIndex { patch_size: params.patch_size, entries };
            index.save(&params.out)?;
            println!(
                "wrote {} labeled patches ({}x{}) to {}",
                index.entries.len(),
                params.patch_size,
                params.patch_size,
                params.out.display()
            );
        }
        kind @ ("copymove" | "blur") => {
            let forgery_kind =
                if kind == "copymove" { ForgeryKind::CopyMove } else { ForgeryKind::Blur };
            let options = ForgeryOptions {
                region_size: params.region_size,
                grid_aligned: !params.unaligned,
                blur_sigma: 2.0,
            };
            for case_idx in 0..params.count {
                let src = procedural_patch(params.image_size, params.image_size, &mut rng);
                let case = requant_forensics::synthesis::make_forgery(
                    &src,
                    forgery_kind,
                    &first_pool,
                    &final_pool,
                    &options,
                    &mut rng,
                )?;
                case.save_bundle(params.out.join(format!("case_{case_idx:03}")))?;
            }
            println!("wrote {} {kind} cases to {}", params.count, params.out.display());
        }
        other => bail!("unknown synthesis kind {other:?}; expected patches, copymove, or blur"),
    }

    RunManifest::new("synthesize", Some(params.seed), serde_json::json!({
        "kind": params.kind,
        "count": params.count,
        "patch_size": params.patch_size,
        "image_size": params.image_size,
        "region_size": params.region_size,
        "unaligned": params.unaligned,
    }))
    .output(&params.out)
    .write(&params.out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// feature extraction and dataset loading
// ---------------------------------------------------------------------------

fn cropped_grid(grid: QuantizedBlockGrid, crop: Option<usize>) -> Result<QuantizedBlockGrid> {
    match crop {
        None => Ok(grid),
        Some(pixels) => {
            if pixels == 0 || pixels % 8 != 0 {
                bail!("crop size must be a nonzero multiple of 8");
            }
            let blocks = pixels / 8;
            if blocks > grid.blocks_x() || blocks > grid.blocks_y() {
                bail!(
                    "crop {pixels} exceeds patch {}x{}",
                    grid.blocks_x() * 8,
                    grid.blocks_y() * 8
                );
            }
            Ok(grid.crop_top_left(blocks, blocks))
        }
    }
}

/// Loads a synthesized dataset directory into feature tensors. `crop`
/// keeps only the top-left square of that many pixels, mirroring the
/// smaller-patch protocol.
pub fn load_dataset(dir: &Path, spec: &FeatureSpec, crop: Option<usize>) -> Result<Dataset> {
    let index = DatasetIndex::load(dir)?;
    let mut set = Dataset::default();
    for entry in &index.entries {
        let stream = JpegStream::read_file(index.patch_path(dir, entry))
            .with_context(|| format!("reading {}", entry.file))?;
        let grid = cropped_grid(stream.decode_coefficients()?, crop)?;
        set.push(build_feature(&grid, spec), entry.label, entry.source);
    }
    Ok(set)
}

pub fn extract_features(
    data: &Path,
    out: &Path,
    spec: FeatureSpec,
    crop: Option<usize>,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut written = 0usize;
    if data.is_file() {
        let stream = JpegStream::read_file(data)?;
        let grid = cropped_grid(stream.decode_coefficients()?, crop)?;
        let stem = data.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        write_feature(out.join(format!("{stem}.dqf")), &build_feature(&grid, &spec))?;
        written = 1;
    } else {
        let index = DatasetIndex::load(data)?;
        for entry in &index.entries {
            let stream = JpegStream::read_file(index.patch_path(data, entry))?;
            let grid = cropped_grid(stream.decode_coefficients()?, crop)?;
            let stem = Path::new(&entry.file)
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            write_feature(out.join(format!("{stem}.dqf")), &build_feature(&grid, &spec))?;
            written += 1;
        }
    }
    RunManifest::new("extract-features", None, serde_json::json!({
        "b": spec.bin_half_range,
        "with_qfactors": spec.with_qfactors,
        "crop": crop,
    }))
    .input(data)
    .output(out)
    .write(out)?;
    println!("wrote {written} feature tensors to {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train / evaluate / classify / localize
// ---------------------------------------------------------------------------

pub struct TrainParams {
    pub data: PathBuf,
    pub out: PathBuf,
    pub bin_half_range: usize,
    pub with_qfactors: bool,
    pub normalize: bool,
    pub patch_size: Option<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_drop_epoch: usize,
    pub seed: u64,
    pub toy: bool,
    pub split: String,
}

fn parse_fractions(split: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = split
        .split('/')
        .map(|p| p.parse::<f64>().map(|v| v / 100.0))
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("--split {split:?} is not of the form 30/10/10"))?;
    if parts.is_empty() || parts.iter().sum::<f64>() > 1.0 + 1e-9 {
        bail!("--split fractions must total at most 100");
    }
    Ok(parts)
}

pub fn train(params: TrainParams) -> Result<()> {
    std::fs::create_dir_all(&params.out)?;
    let spec = FeatureSpec {
        bin_half_range: params.bin_half_range,
        with_qfactors: params.with_qfactors,
        normalize: params.normalize,
    };
    let full = load_dataset(&params.data, &spec, params.patch_size)?;
    let fractions = parse_fractions(&params.split)?;
    let groups = split_by_source(&full.sources, &fractions, params.seed);
    let train_set = full.subset(&groups[0]);
    let (val_set, test_set) = match groups.len() {
        1 => (None, None),
        2 => (None, Some(full.subset(&groups[1]))),
        _ => (Some(full.subset(&groups[1])), Some(full.subset(&groups[2]))),
    };

    let channels = spec.channels();
    let model_config = if params.toy {
        ModelConfig::toy(params.bin_half_range, channels)
    } else {
        ModelConfig::full(params.bin_half_range, channels)
    };
    let mut model = DenseNet::<f32>::build(model_config, params.seed)?;
    let train_config = TrainConfig {
        epochs: params.epochs,
        batch_size: params.batch_size,
        base_lr: params.lr,
        lr_drop_epoch: params.lr_drop_epoch,
        seed: params.seed,
        normalize: params.normalize,
    };
    let history = training::train(&mut model, &train_set, val_set.as_ref(), &train_config)?;

    let ckpt_path = params.out.join("model.ckpt");
    checkpoint::save(&ckpt_path, &mut model, &serde_json::to_string(&spec)?)?;
    std::fs::write(params.out.join("history.json"), serde_json::to_string_pretty(&history)?)?;

    if let Some(test) = &test_set {
        let report = training::evaluate(&mut model, test, &train_config)?;
        std::fs::write(params.out.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
        println!(
            "test accuracy {:.2}% over {} patches",
            report.rates.accuracy.unwrap_or(f64::NAN) * 100.0,
            test.len()
        );
    }

    RunManifest::new("train", Some(params.seed), serde_json::json!({
        "b": params.bin_half_range,
        "with_qfactors": params.with_qfactors,
        "normalize": params.normalize,
        "patch_size": params.patch_size,
        "epochs": params.epochs,
        "batch_size": params.batch_size,
        "lr": params.lr,
        "lr_drop_epoch": params.lr_drop_epoch,
        "toy": params.toy,
        "split": params.split,
        "train_patches": train_set.len(),
    }))
    .input(&params.data)
    .output(&ckpt_path)
    .write(&params.out)?;
    println!("checkpoint written to {}", ckpt_path.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<(DenseNet<f32>, FeatureSpec)> {
    let (model, extra) =
        checkpoint::load::<f32>(path).with_context(|| format!("loading {}", path.display()))?;
    let spec: FeatureSpec =
        serde_json::from_str(&extra).context("checkpoint feature spec metadata")?;
    Ok((model, spec))
}

pub fn evaluate(data: &Path, model_path: &Path, out: Option<&Path>, crop: Option<usize>) -> Result<()> {
    let (mut model, spec) = load_model(model_path)?;
    let set = load_dataset(data, &spec, crop)?;
    let config = TrainConfig { normalize: spec.normalize, ..Default::default() };
    let report = training::evaluate(&mut model, &set, &config)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.json"), &json)?;
        RunManifest::new("evaluate", None, serde_json::json!({
            "crop": crop,
            "patches": set.len(),
        }))
        .input(data)
        .input(model_path)
        .output(dir.join("metrics.json"))
        .write(dir)?;
    }
    Ok(())
}

pub fn classify(patch: &Path, model_path: &Path) -> Result<()> {
    let (mut model, spec) = load_model(model_path)?;
    let stream = JpegStream::read_file(patch)?;
    let grid = stream.decode_coefficients()?;
    let feature = build_feature(&grid, &spec);
    let x = requant_forensics::features::to_batch(&[&feature], spec.normalize);
    let probs = model.probabilities(&x, Mode::Eval)?;
    let p_double = probs.data()[1] as f64;
    let label = if p_double > probs.data()[0] as f64 { Label::Double } else { Label::Single };
    let name = match label {
        Label::Single => "single",
        Label::Double => "double",
    };
    println!("{name} {p_double:.4}");
    Ok(())
}

pub struct LocalizeParams {
    pub image: PathBuf,
    pub model: PathBuf,
    pub out: PathBuf,
    pub window: usize,
    pub stride: usize,
    pub mask: Option<PathBuf>,
}

pub fn localize_image(params: LocalizeParams) -> Result<()> {
    let (mut model, spec) = load_model(&params.model)?;
    let stream = JpegStream::read_file(&params.image)?;
    let mut scorer = ModelScorer::new(&mut model, spec);
    let map = localize(&stream, &spec, &mut scorer, params.window, params.stride)?;

    std::fs::create_dir_all(&params.out)?;
    pgm::write_pgm(params.out.join("heatmap.pgm"), map.width, map.height, &map.heatmap_u8())?;
    std::fs::write(params.out.join("tamper_map.json"), serde_json::to_string_pretty(&map)?)?;
    println!(
        "{} windows ({} x {}), {} flagged tampered",
        map.window_count(),
        map.starts_x.len(),
        map.starts_y.len(),
        map.decisions().iter().filter(|&&d| d).count()
    );

    if let Some(mask_path) = &params.mask {
        let (w, h, data) = pgm::read_pgm(mask_path)?;
        let mask = BlockMask::from_bytes(w, h, &data)?;
        let truth = window_ground_truth(&mask, params.window, params.stride);
        let report = score_localization(&map, &truth)?;
        std::fs::write(
            params.out.join("metrics.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        println!(
            "window-level P {:.4} R {:.4} F {:.4}",
            report.derived.precision.unwrap_or(f64::NAN),
            report.derived.recall.unwrap_or(f64::NAN),
            report.derived.f_measure.unwrap_or(f64::NAN)
        );
    }

    RunManifest::new("localize", None, serde_json::json!({
        "window": params.window,
        "stride": params.stride,
    }))
    .input(&params.image)
    .input(&params.model)
    .output(&params.out)
    .write(&params.out)?;
    Ok(())
}
