use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use infocam::cam::{ClassifierHead, HeadMode, IntensityMap, MapKind, RegionSpec};
use infocam::eval::{self, DigitAccuracy, MapRecipe, MapSettings, Prepared, SampleRecord, Summary};
use infocam::localize::{BBox, BoxConfig, BoxMapping, Space, ThresholdMode};
use infocam::manifest::load_manifest;
use infocam::multimnist::{
    label_priors, load_dataset, load_idx, save_dataset, synthesize, MnistSource, MultiMnistSet, MultiSample,
    SynthConfig, CANVAS_HEIGHT, CANVAS_WIDTH, NUM_DIGITS,
};
use infocam::nn::{
    default_architecture, fit, gradcheck as run_gradcheck, load_checkpoint, save_checkpoint, synthetic_example,
    EpochLog, Example, GradcheckOptions, LossHead, Network, Shape3, Target, TrainConfig,
};
use infocam::{cam, pnm, Scalar};

use crate::args::{
    AblateArgs, ExportCheckArgs, GradcheckArgs, HeadArg, LocalizeArgs, MapArg, MapArgs, Precision, SourceArgs,
    Split, SynthArgs, TrainArgs,
};
use crate::{io_err, CliError};

type Out<'a> = &'a mut dyn Write;

macro_rules! say {
    ($out:expr, $($t:tt)*) => {
        writeln!($out, $($t)*).map_err(|e| CliError::Data(format!("writing output: {e}")))?
    };
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("--{flag} is required")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn canvas_bytes(src: &MnistSource, s: &MultiSample) -> Vec<u8> {
    s.render::<f64>(src).iter().map(|v| (v * 255.0).round() as u8).collect()
}

pub fn synth(a: SynthArgs, out: Out) -> Result<(), CliError> {
    let split = a.split.unwrap_or(Split::Train);
    let (images, labels) = match (a.images, a.labels) {
        (Some(i), Some(l)) => (i, l),
        (None, None) => {
            let dir = required(a.mnist_dir, "mnist-dir")?;
            let prefix = match split {
                Split::Train => "train",
                Split::Test => "t10k",
            };
            (
                dir.join(format!("{prefix}-images-idx3-ubyte")),
                dir.join(format!("{prefix}-labels-idx1-ubyte")),
            )
        }
        _ => return Err(CliError::Config("--images and --labels must be given together".into())),
    };
    let cfg = SynthConfig {
        seed: a.seed.unwrap_or(0),
        count: a.count.unwrap_or(match split {
            Split::Train => 60_000,
            Split::Test => 10_000,
        }),
        p_slot: a.p_slot.unwrap_or(0.7),
    };
    cfg.validate()?;
    let dir = required(a.out, "out")?;

    let src = load_idx(&images, &labels)?;
    let samples = synthesize(&src, &cfg)?;
    let abs = |p: &Path| std::path::absolute(p).map_err(|e| io_err(p, e));
    save_dataset(&dir, &abs(&images)?, &abs(&labels)?, &cfg, &samples)?;

    if let Some(n) = a.dump_pgm.filter(|&n| n > 0) {
        let pgm = dir.join("pgm");
        create_dir(&pgm)?;
        for (i, s) in samples.iter().take(n).enumerate() {
            pnm::write_pgm(pgm.join(format!("{i:06}.pgm")), CANVAS_WIDTH, CANVAS_HEIGHT, &canvas_bytes(&src, s))?;
        }
    }
    let two = samples.iter().filter(|s| s.digit_count() == 2).count();
    say!(
        out,
        "wrote {} canvases to {} (two digits: {:.4}, one digit: {:.4})",
        samples.len(),
        dir.display(),
        two as f64 / samples.len() as f64,
        (samples.len() - two) as f64 / samples.len() as f64
    );
    Ok(())
}

/// Written next to the checkpoint by `train`.
#[derive(Debug, Serialize)]
struct TrainLog {
    head: LossHead,
    precision: Precision,
    config: TrainConfig,
    train_samples: usize,
    class_priors: Option<Vec<f64>>,
    epochs: Vec<EpochLog>,
    test_accuracy: Option<DigitAccuracy>,
    test_mean_accuracy: Option<f64>,
}

pub const TRAIN_LOG_FILE: &str = "train_log.json";

pub fn train(a: TrainArgs, out: Out) -> Result<(), CliError> {
    let data = required(a.data, "data")?;
    let dir = required(a.out, "out")?;
    let head: LossHead = a.head.unwrap_or(HeadArg::Sigmoid).into();
    if head == LossHead::Softmax {
        return Err(CliError::Config(
            "the softmax head needs single-label targets; multi-MNIST canvases carry label vectors".into(),
        ));
    }
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        seed: a.seed.unwrap_or(d.seed),
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        momentum: a.momentum.unwrap_or(d.momentum),
        weight_init_scale: a.weight_init_scale.unwrap_or(d.weight_init_scale),
    };
    cfg.validate()?;
    let precision = a.precision.unwrap_or(Precision::F32);

    let (src, samples, _) = load_dataset(&data)?;
    let test = a.eval_data.as_deref().map(load_dataset).transpose()?;
    let test = test.as_ref().map(|(s, smp, _)| (s, smp.as_slice()));
    match precision {
        Precision::F32 => train_with::<f32>(head, precision, cfg, &src, &samples, test, &dir, out),
        Precision::F64 => train_with::<f64>(head, precision, cfg, &src, &samples, test, &dir, out),
    }
}

#[allow(clippy::too_many_arguments)]
fn train_with<T: Scalar>(
    head: LossHead,
    precision: Precision,
    cfg: TrainConfig,
    src: &MnistSource,
    samples: &[MultiSample],
    test: Option<(&MnistSource, &[MultiSample])>,
    dir: &Path,
    out: Out,
) -> Result<(), CliError> {
    let priors = (head == LossHead::PcSigmoid).then(|| label_priors(samples));
    let mut net = Network::<T>::init(
        Shape3::new(1, CANVAS_HEIGHT, CANVAS_WIDTH),
        &default_architecture(),
        head,
        priors.as_ref().map(|p| p.iter().map(|&v| T::from_f64_lossy(v)).collect()),
        cfg.weight_init_scale,
        cfg.seed,
    )?;
    let start = Instant::now();
    let set = MultiMnistSet { source: src, samples };
    let mut report = Ok(());
    let logs = fit(&mut net, &set, cfg, |l| {
        if report.is_ok() {
            report = writeln!(
                out,
                "epoch {:>3}  loss {:.5}  train-acc {:.4}  ({:.0}s)",
                l.epoch + 1,
                l.mean_loss,
                l.train_accuracy,
                start.elapsed().as_secs_f64()
            );
        }
    })?;
    report.map_err(|e| CliError::Data(format!("writing output: {e}")))?;
    save_checkpoint(&net, dir)?;

    let accuracy = test.map(|(s, smp)| eval::digit_accuracy(&net, s, smp)).transpose()?;
    write_json(
        &dir.join(TRAIN_LOG_FILE),
        &TrainLog {
            head,
            precision,
            config: cfg,
            train_samples: samples.len(),
            class_priors: priors,
            epochs: logs,
            test_accuracy: accuracy,
            test_mean_accuracy: accuracy.map(|a| a.mean()),
        },
    )?;
    say!(out, "checkpoint written to {}", dir.display());
    if let Some(acc) = accuracy {
        let name = match head {
            LossHead::PcSigmoid => "PC-sigmoid",
            _ => "sigmoid",
        };
        write!(out, "{}", acc.table(name)).map_err(|e| CliError::Data(e.to_string()))?;
        say!(out, "mean per-digit accuracy {:.4}", acc.mean());
    }
    Ok(())
}

/// Samples ready for map evaluation plus, for multi-MNIST, the canvases behind them.
struct Loaded {
    head: ClassifierHead<f64>,
    prepared: Vec<Prepared<f64>>,
    canvases: Option<(MnistSource, Vec<MultiSample>)>,
}

fn load_source(s: &SourceArgs) -> Result<Loaded, CliError> {
    let limit = s.limit.unwrap_or(usize::MAX);
    match (&s.checkpoint, &s.data, &s.manifest) {
        (Some(ck), Some(data), None) => {
            let digit = s.digit.unwrap_or(0);
            if digit as usize >= NUM_DIGITS {
                return Err(CliError::Config(format!("--digit {digit} is not a digit")));
            }
            let net: Network<f64> = load_checkpoint(ck)?;
            let (src, mut samples, _) = load_dataset(data)?;
            samples.truncate(limit);
            let prepared = eval::prepare_multimnist(&net, &src, &samples, digit)?;
            Ok(Loaded {
                head: net.classifier_head(),
                prepared,
                canvases: Some((src, samples)),
            })
        }
        (None, None, Some(m)) => {
            let mode: HeadMode = s.head.unwrap_or(HeadArg::Softmax).into();
            let (head, mut prepared) = eval::prepare_manifest(&load_manifest(m)?, mode)?;
            prepared.truncate(limit);
            Ok(Loaded {
                head,
                prepared,
                canvases: None,
            })
        }
        _ => Err(CliError::Config(
            "give either --checkpoint with --data, or --manifest".into(),
        )),
    }
}

fn map_settings(m: &MapArgs, recipe: MapRecipe, side: usize) -> Result<MapSettings, CliError> {
    let boxes = BoxConfig {
        fraction: m.threshold.unwrap_or(0.2),
        mode: if m.raw_threshold {
            ThresholdMode::Raw
        } else {
            ThresholdMode::Normalized
        },
        connectivity: m.connectivity.map(Into::into).unwrap_or_default(),
    };
    boxes.validate()?;
    let mut s = MapSettings::new(MapKind::Cam, side)?;
    s.recipe = recipe;
    s.options.argmin_excludes_true = m.exclude_true_label_argmin;
    s.boxes = boxes;
    s.mapping = if m.upsample {
        BoxMapping::Upsample
    } else {
        BoxMapping::CornerScale
    };
    Ok(s)
}

fn slug(kind: MapKind) -> &'static str {
    match kind {
        MapKind::Cam => "cam",
        MapKind::InfoCam => "infocam",
        MapKind::InfoCamPlus => "infocam-plus",
    }
}

fn check_gt(l: &Loaded) -> Result<(), CliError> {
    if l.prepared.is_empty() {
        return Err(CliError::Data("no samples to evaluate".into()));
    }
    match l.prepared.iter().find(|p| p.gt_boxes.is_empty()) {
        Some(p) => Err(CliError::Data(format!("sample {:?} has no ground-truth boxes", p.id))),
        None => Ok(()),
    }
}

fn write_overlay(
    l: &Loaded,
    p: &Prepared<f64>,
    rec: &SampleRecord,
    map: &IntensityMap<f64>,
    stem: &Path,
) -> Result<(), CliError> {
    let (h, w) = p.image_hw;
    let heat = pnm::resize_nearest(&pnm::to_gray(map.values()), map.width(), map.height(), w, h);
    let gray = match (&l.canvases, p.id.parse::<usize>()) {
        (Some((src, samples)), Ok(i)) if i < samples.len() => canvas_bytes(src, &samples[i]),
        _ => heat.clone(),
    };
    let mut boxes = vec![(BBox::from_corners(rec.bbox, Space::ImagePixels)?, [0, 255, 0])];
    boxes.extend(p.gt_boxes.iter().map(|b| (*b, [255, 0, 0])));
    pnm::write_ppm(stem.with_extension("ppm"), w, h, &pnm::overlay(&gray, &heat, w, h, &boxes))?;
    pnm::write_pgm(stem.with_extension("pgm"), w, h, &heat)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    map: MapKind,
    region_side: usize,
    threshold: f64,
    threshold_mode: ThresholdMode,
    connectivity: infocam::Connectivity,
    mapping: BoxMapping,
    #[serde(flatten)]
    summary: Summary,
}

fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(
        "map,region_side,threshold,threshold_mode,connectivity,mapping,samples,gt_loc,top1_loc,top1_cls,fallbacks\n",
    );
    for r in rows {
        let name = |v: &dyn erased::Named| v.name();
        s += &format!(
            "{},{},{},{},{},{},{},{:.4},{:.4},{:.4},{}\n",
            r.map.name(),
            r.region_side,
            r.threshold,
            name(&r.threshold_mode),
            name(&r.connectivity),
            name(&r.mapping),
            r.summary.samples,
            r.summary.gt_loc,
            r.summary.top1_loc,
            r.summary.top1_cls,
            r.summary.fallbacks
        );
    }
    s
}

mod erased {
    /// Serialized name of a unit enum value.
    pub trait Named {
        fn name(&self) -> String;
    }

    impl<T: serde::Serialize> Named for T {
        fn name(&self) -> String {
            match serde_json::to_value(self) {
                Ok(serde_json::Value::String(s)) => s,
                other => format!("{other:?}"),
            }
        }
    }
}

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";

pub fn localize(a: LocalizeArgs, out: Out) -> Result<(), CliError> {
    let dir = required(a.out.clone(), "out")?;
    let kinds: Vec<MapKind> = if a.maps.map.is_empty() {
        vec![MapKind::InfoCam]
    } else {
        a.maps.map.iter().copied().map(MapArg::into).collect()
    };
    let side = a.maps.region_side.unwrap_or(3);
    let settings = kinds
        .iter()
        .map(|&k| map_settings(&a.maps, MapRecipe::Standard(k), if k == MapKind::Cam { 1 } else { side }))
        .collect::<Result<Vec<_>, _>>()?;
    let loaded = load_source(&a.source)?;
    check_gt(&loaded)?;
    create_dir(&dir)?;
    let overlays = a.overlays.unwrap_or(8);
    if overlays > 0 {
        create_dir(&dir.join("overlays"))?;
    }

    let mut rows = Vec::new();
    for (kind, s) in kinds.iter().zip(&settings) {
        let records = eval::localize_all(&loaded.head, &loaded.prepared, s)?;
        write_json(&dir.join(format!("records-{}.json", slug(*kind))), &records)?;
        for (p, rec) in loaded.prepared.iter().zip(&records).take(overlays) {
            let map = s.map(&p.features, &loaded.head, p.label)?;
            let stem: PathBuf = dir.join("overlays").join(format!("{}-{}", slug(*kind), p.id));
            write_overlay(&loaded, p, rec, &map, &stem)?;
        }
        rows.push(SummaryRow {
            map: *kind,
            region_side: s.region.side(),
            threshold: s.boxes.fraction,
            threshold_mode: s.boxes.mode,
            connectivity: s.boxes.connectivity,
            mapping: s.mapping,
            summary: eval::summarize(&records)?,
        });
    }
    std::fs::write(dir.join(SUMMARY_CSV), summary_csv(&rows)).map_err(|e| io_err(&dir, e))?;
    write_json(&dir.join(SUMMARY_JSON), &rows)?;

    say!(out, "{:<10} {:>3} {:>8} {:>8} {:>9} {:>9} {:>9}", "map", "s", "samples", "GT Loc", "Top-1 Loc", "Top-1 Cls", "fallback");
    for r in &rows {
        say!(
            out,
            "{:<10} {:>3} {:>8} {:>8.2} {:>9.2} {:>9.2} {:>9}",
            r.map.name(),
            r.region_side,
            r.summary.samples,
            r.summary.gt_loc,
            r.summary.top1_loc,
            r.summary.top1_cls,
            r.summary.fallbacks
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationCell {
    region_side: usize,
    subtraction: bool,
    gt_loc: f64,
    top1_loc: f64,
    gt_loc_delta: f64,
    top1_loc_delta: f64,
}

fn arrow(delta: f64) -> String {
    if delta > 0.0 {
        format!("\u{2191}{delta:.2}")
    } else if delta < 0.0 {
        format!("\u{2193}{:.2}", -delta)
    } else {
        "=".into()
    }
}

pub fn ablate(a: AblateArgs, out: Out) -> Result<(), CliError> {
    if !a.maps.map.is_empty() {
        return Err(CliError::Config("ablate builds its own maps; drop --map".into()));
    }
    let side = RegionSpec::new(a.maps.region_side.unwrap_or(3))?.side();
    if side <= 1 {
        return Err(CliError::Config("ablate needs --region-side greater than 1".into()));
    }
    let mut grid = Vec::new();
    for s in [1, side] {
        for subtract in [false, true] {
            grid.push((s, subtract, map_settings(&a.maps, MapRecipe::Ablation { subtract }, s)?));
        }
    }
    let loaded = load_source(&a.source)?;
    check_gt(&loaded)?;

    let mut cells = Vec::new();
    for (s, subtract, settings) in &grid {
        let sum = eval::summarize(&eval::localize_all(&loaded.head, &loaded.prepared, settings)?)?;
        cells.push((*s, *subtract, sum));
    }
    let base = cells[0].2;
    let cells: Vec<AblationCell> = cells
        .into_iter()
        .map(|(region_side, subtraction, s)| AblationCell {
            region_side,
            subtraction,
            gt_loc: s.gt_loc,
            top1_loc: s.top1_loc,
            gt_loc_delta: s.gt_loc - base.gt_loc,
            top1_loc_delta: s.top1_loc - base.top1_loc,
        })
        .collect();

    for (title, pick) in [
        ("GT Loc", (|c: &AblationCell| (c.gt_loc, c.gt_loc_delta)) as fn(&AblationCell) -> (f64, f64)),
        ("Top-1 Loc", |c: &AblationCell| (c.top1_loc, c.top1_loc_delta)),
    ] {
        say!(out, "{title} (%)");
        say!(out, "{:<14} {:>20} {:>20}", "", "no subtraction", "subtraction");
        for row in cells.chunks(2) {
            let label = format!("R = {}", row[0].region_side);
            let cell = |c: &AblationCell| {
                let (v, d) = pick(c);
                if c.region_side == 1 && !c.subtraction {
                    format!("{v:.2} (base)")
                } else {
                    format!("{v:.2} {}", arrow(d))
                }
            };
            say!(out, "{label:<14} {:>20} {:>20}", cell(&row[0]), cell(&row[1]));
        }
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_json(&dir.join("ablation.json"), &cells)?;
        let mut csv = String::from("region_side,subtraction,gt_loc,top1_loc,gt_loc_delta,top1_loc_delta\n");
        for c in &cells {
            csv += &format!(
                "{},{},{:.4},{:.4},{:.4},{:.4}\n",
                c.region_side, c.subtraction, c.gt_loc, c.top1_loc, c.gt_loc_delta, c.top1_loc_delta
            );
        }
        std::fs::write(dir.join("ablation.csv"), csv).map_err(|e| io_err(dir, e))?;
    }
    Ok(())
}

pub fn gradcheck(a: GradcheckArgs, out: Out) -> Result<(), CliError> {
    let head: LossHead = a.head.unwrap_or(HeadArg::Sigmoid).into();
    let seed = a.seed.unwrap_or(0);
    let tolerance = a.tolerance.unwrap_or(1e-4);
    let coordinates = a.coordinates.unwrap_or(200);
    if coordinates == 0 {
        return Err(CliError::Config("--coordinates must be positive".into()));
    }
    let data = a.data.as_deref().map(load_dataset).transpose()?;
    let priors = (head == LossHead::PcSigmoid).then(|| match &data {
        Some((_, samples, _)) => label_priors(samples),
        None => vec![0.15; NUM_DIGITS],
    });
    let net = Network::<f64>::init(
        Shape3::new(1, CANVAS_HEIGHT, CANVAS_WIDTH),
        &default_architecture(),
        head,
        priors,
        TrainConfig::default().weight_init_scale,
        seed,
    )?;
    let example = match &data {
        Some((src, samples, _)) => {
            let s = samples
                .first()
                .ok_or_else(|| CliError::Data("dataset is empty".into()))?;
            let present = s.present();
            Example {
                input: s.render(src),
                target: match head {
                    LossHead::Softmax => Target::Class(present.iter().position(|&p| p).unwrap_or(0)),
                    _ => Target::Labels(present.to_vec()),
                },
            }
        }
        None => synthetic_example(&net, seed),
    };
    let report = run_gradcheck(
        &net,
        &example,
        GradcheckOptions {
            coordinates,
            seed,
            ..GradcheckOptions::default()
        },
    )?;
    say!(
        out,
        "checked {} coordinates ({} skipped at ReLU/max-pool switches), max relative error {:.3e}",
        report.checked,
        report.skipped_kinks,
        report.max_rel_error
    );
    if report.checked < coordinates {
        return Err(CliError::Numeric(format!(
            "only {} of {coordinates} coordinates could be checked",
            report.checked
        )));
    }
    if !(report.max_rel_error < tolerance) {
        return Err(CliError::Numeric(format!(
            "max relative error {:.3e} exceeds {tolerance:e} at {:?}",
            report.max_rel_error, report.worst
        )));
    }
    Ok(())
}

pub fn export_check(a: ExportCheckArgs, out: Out) -> Result<(), CliError> {
    let path = required(a.manifest, "manifest")?;
    let tolerance = a.tolerance.unwrap_or(1e-3);
    let mode: HeadMode = a.head.unwrap_or(HeadArg::Softmax).into();
    let kind = a.maps.map.first().copied().map(MapKind::from).unwrap_or(MapKind::InfoCam);
    let side = if kind == MapKind::Cam { 1 } else { a.maps.region_side.unwrap_or(3) };
    let settings = map_settings(&a.maps, MapRecipe::Standard(kind), side)?;

    let manifest = load_manifest(&path)?;
    let head = manifest.head(mode)?;
    let mut worst = 0.0f64;
    let mut compared = 0usize;
    for s in &manifest.samples {
        let Some(exported) = manifest.logits(s)? else { continue };
        let recomputed = cam::logits(&manifest.features(s)?, &head)?;
        for (x, y) in exported.iter().zip(&recomputed) {
            worst = worst.max((x - y).abs());
        }
        compared += 1;
    }
    if compared == 0 {
        return Err(CliError::Data("manifest carries no exported logits to compare".into()));
    }
    say!(
        out,
        "{} samples, {compared} with exported logits; max |recomputed - exported| = {worst:.3e} (tolerance {tolerance:e})",
        manifest.samples.len()
    );

    let (head, prepared) = eval::prepare_manifest(&manifest, mode)?;
    let records = eval::localize_all(&head, &prepared, &settings)?;
    let fallbacks = records.iter().filter(|r| r.fallback).count();
    say!(
        out,
        "{} boxes from {} maps; empty-mask fallback on {} ({:.1}%)",
        records.len(),
        kind.name(),
        fallbacks,
        100.0 * fallbacks as f64 / records.len().max(1) as f64
    );
    if !(worst <= tolerance) {
        return Err(CliError::Numeric(format!(
            "recomputed logits differ from exported ones by {worst:.3e} > {tolerance:e}"
        )));
    }
    Ok(())
}
