//! Map-to-box evaluation shared by the command-line tool and the test suites.
//!
//! Features are computed once per sample into a [`Prepared`] record, then
//! any number of [`MapSettings`] can be scored against them.

use serde::{Deserialize, Serialize};

use crate::cam::{self, ClassifierHead, FeatureStack, HeadMode, InfoCamOptions, IntensityMap, MapKind, RegionSpec};
use crate::error::{Error, Result};
use crate::localize::{locate_in_image, BBox, BoxConfig, BoxMapping, LocalizationResult, Space};
use crate::manifest::Manifest;
use crate::multimnist::{MnistSource, MultiSample, CANVAS_HEIGHT, CANVAS_WIDTH, NUM_DIGITS};
use crate::nn::{predict, LossHead, Network, Target};
use crate::scalar::Scalar;

/// Which intensity map to threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapRecipe {
    Standard(MapKind),
    /// Region sum with (`subtract`) or without the mean-of-other-classes term.
    Ablation { subtract: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapSettings {
    pub recipe: MapRecipe,
    pub region: RegionSpec,
    pub options: InfoCamOptions,
    pub boxes: BoxConfig,
    pub mapping: BoxMapping,
}

impl MapSettings {
    pub fn new(kind: MapKind, region_side: usize) -> Result<Self> {
        Ok(MapSettings {
            recipe: MapRecipe::Standard(kind),
            region: RegionSpec::new(region_side)?,
            options: InfoCamOptions::default(),
            boxes: BoxConfig::default(),
            mapping: BoxMapping::default(),
        })
    }

    pub fn map<T: Scalar>(&self, fs: &FeatureStack<T>, head: &ClassifierHead<T>, y: usize) -> Result<IntensityMap<T>> {
        match self.recipe {
            MapRecipe::Standard(kind) => cam::intensity_map(fs, head, y, kind, self.region, self.options),
            MapRecipe::Ablation { subtract: true } => cam::infocam(fs, head, y, self.region),
            MapRecipe::Ablation { subtract: false } => cam::region_cam(fs, head, y, self.region),
        }
    }
}

/// One sample with everything needed to score any map setting.
#[derive(Debug, Clone)]
pub struct Prepared<T> {
    pub id: String,
    pub features: FeatureStack<T>,
    pub logits: Vec<T>,
    pub label: usize,
    pub pred_label: Option<usize>,
    pub gt_boxes: Vec<BBox>,
    /// `(height, width)` of the input image.
    pub image_hw: (usize, usize),
}

/// Per-sample output, serialized as one JSON record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub label: usize,
    pub pred_label: Option<usize>,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub iou: f64,
    pub correct: bool,
    #[serde(skip)]
    pub fallback: bool,
}

/// Accuracies in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    pub gt_loc: f64,
    pub top1_loc: f64,
    pub top1_cls: f64,
    pub fallbacks: usize,
}

/// The label a sample is predicted as.
///
/// Softmax heads take the argmax. Multi-label heads predict the true label
/// when it is detected, otherwise the strongest detected label, otherwise
/// nothing.
pub fn predicted_label<T: Scalar>(head: LossHead, logits: &[T], priors: Option<&[T]>, true_label: usize) -> Option<usize> {
    match predict(head, logits, priors) {
        Target::Class(c) => Some(c),
        Target::Labels(on) => {
            if on.get(true_label).copied().unwrap_or(false) {
                return Some(true_label);
            }
            (0..on.len()).filter(|&l| on[l]).fold(None, |best: Option<usize>, l| match best {
                Some(b) if logits[b] >= logits[l] => Some(b),
                _ => Some(l),
            })
        }
    }
}

/// Runs one map setting on one sample. GT-Loc scoring: the box comes from
/// the true label's map and the best IoU over all ground-truth boxes counts.
pub fn localize_prepared<T: Scalar>(
    head: &ClassifierHead<T>,
    p: &Prepared<T>,
    settings: &MapSettings,
) -> Result<SampleRecord> {
    let map = settings.map(&p.features, head, p.label)?;
    let est = locate_in_image(&map, p.image_hw, &settings.boxes, settings.mapping)?;
    let (iou, correct) = if p.gt_boxes.is_empty() {
        (f64::NAN, false)
    } else {
        let r = LocalizationResult::score(est.bbox, p.label, &p.gt_boxes)?;
        (r.iou, r.correct)
    };
    Ok(SampleRecord {
        id: p.id.clone(),
        label: p.label,
        pred_label: p.pred_label,
        bbox: est.bbox.corners(),
        iou,
        correct,
        fallback: est.fallback,
    })
}

pub fn localize_all<T: Scalar>(
    head: &ClassifierHead<T>,
    prepared: &[Prepared<T>],
    settings: &MapSettings,
) -> Result<Vec<SampleRecord>> {
    settings.boxes.validate()?;
    prepared.iter().map(|p| localize_prepared(head, p, settings)).collect()
}

/// GT Loc counts box hits; Top-1 Loc additionally needs the predicted label
/// to be the true one (in which case both use the same map).
pub fn summarize(records: &[SampleRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("no samples to summarize".into()));
    }
    let n = records.len() as f64;
    let count = |f: &dyn Fn(&SampleRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 * 100.0 / n;
    Ok(Summary {
        samples: records.len(),
        gt_loc: count(&|r| r.correct),
        top1_loc: count(&|r| r.correct && r.pred_label == Some(r.label)),
        top1_cls: count(&|r| r.pred_label == Some(r.label)),
        fallbacks: records.iter().filter(|r| r.fallback).count(),
    })
}

/// Forward passes for every canvas containing `digit`, scored against that digit's boxes.
pub fn prepare_multimnist<T: Scalar>(
    net: &Network<T>,
    src: &MnistSource,
    samples: &[MultiSample],
    digit: u8,
) -> Result<Vec<Prepared<T>>> {
    let set = crate::multimnist::localization_eval_set(samples, digit)?;
    set.into_iter()
        .map(|(i, gt_boxes)| {
            let out = net.forward_slice(&samples[i].render::<T>(src))?;
            let pred_label = predicted_label(net.head(), &out.logits, net.class_priors(), digit as usize);
            Ok(Prepared {
                id: format!("{i}"),
                features: out.features,
                logits: out.logits,
                label: digit as usize,
                pred_label,
                gt_boxes,
                image_hw: (CANVAS_HEIGHT, CANVAS_WIDTH),
            })
        })
        .collect()
}

/// Reads features, head and labels from an interchange manifest. The first
/// listed label is the target; every ground-truth box belongs to it.
pub fn prepare_manifest(m: &Manifest, mode: HeadMode) -> Result<(ClassifierHead<f64>, Vec<Prepared<f64>>)> {
    let head = m.head(mode)?;
    let loss_head = match mode {
        HeadMode::Softmax => LossHead::Softmax,
        HeadMode::MultiLabel => LossHead::Sigmoid,
    };
    let mut out = Vec::with_capacity(m.samples.len());
    for s in &m.samples {
        let features = m.features(s)?;
        let logits = match m.logits(s)? {
            Some(l) => l,
            None => cam::logits(&features, &head)?,
        };
        let label = *s
            .labels
            .first()
            .ok_or_else(|| Error::Manifest(format!("sample {:?} has no label", s.id)))?;
        let gt_boxes = s
            .gt_boxes
            .iter()
            .map(|&c| BBox::from_corners(c, Space::ImagePixels))
            .collect::<Result<Vec<_>>>()?;
        out.push(Prepared {
            id: s.id.clone(),
            pred_label: predicted_label(loss_head, &logits, None, label),
            features,
            logits,
            label,
            gt_boxes,
            image_hw: (s.image_size[0], s.image_size[1]),
        });
    }
    Ok((head, out))
}

/// Per-digit accuracy: among test canvases containing digit `d`, the
/// fraction whose prediction marks `d` present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DigitAccuracy {
    pub per_digit: [f64; NUM_DIGITS],
    pub support: [usize; NUM_DIGITS],
}

impl DigitAccuracy {
    pub fn mean(&self) -> f64 {
        self.per_digit.iter().sum::<f64>() / NUM_DIGITS as f64
    }

    /// Two-row table: digit header, then accuracies to two decimals.
    pub fn table(&self, row_name: &str) -> String {
        let mut head = format!("{:<12}", "digit");
        let mut row = format!("{row_name:<12}");
        for d in 0..NUM_DIGITS {
            head += &format!(" {d:>5}");
            row += &format!(" {:>5.2}", self.per_digit[d]);
        }
        format!("{head}\n{row}\n")
    }
}

pub fn digit_accuracy<T: Scalar>(net: &Network<T>, src: &MnistSource, samples: &[MultiSample]) -> Result<DigitAccuracy> {
    let mut hits = [0usize; NUM_DIGITS];
    let mut support = [0usize; NUM_DIGITS];
    for s in samples {
        let out = net.forward_slice(&s.render::<T>(src))?;
        let pred = match predict(net.head(), &out.logits, net.class_priors()) {
            Target::Labels(on) => on,
            Target::Class(c) => (0..NUM_DIGITS).map(|d| d == c).collect(),
        };
        for (d, present) in s.present().iter().enumerate() {
            if *present {
                support[d] += 1;
                hits[d] += pred[d] as usize;
            }
        }
    }
    let mut per_digit = [0.0; NUM_DIGITS];
    for d in 0..NUM_DIGITS {
        per_digit[d] = if support[d] == 0 { f64::NAN } else { hits[d] as f64 / support[d] as f64 };
    }
    Ok(DigitAccuracy { per_digit, support })
}
