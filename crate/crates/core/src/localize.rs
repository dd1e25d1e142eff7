//! From an intensity map to a bounding box, and box-level metrics.

use serde::{Deserialize, Serialize};

use crate::cam::IntensityMap;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    FeatureGrid,
    ImagePixels,
}

/// Half-open axis-aligned box `[x0, x1) x [y0, y1)`; `x` is the column axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub space: Space,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64, space: Space) -> Result<Self> {
        let ok = [x0, y0, x1, y1].iter().all(|v| v.is_finite()) && x0 >= 0.0 && y0 >= 0.0 && x0 < x1 && y0 < y1;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid box ({x0}, {y0}, {x1}, {y1})"
            )));
        }
        Ok(BBox { x0, y0, x1, y1, space })
    }

    pub fn from_corners(c: [f64; 4], space: Space) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3], space)
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x0, self.y0, self.x1, self.y1]
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }
}

/// Intersection over union. Disjoint boxes give 0.
pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    if a.space != b.space {
        return Err(Error::MixedSpaces);
    }
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return Ok(0.0);
    }
    Ok(inter / (a.area() + b.area() - inter))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Compare the min-max normalized map against the fraction.
    #[default]
    Normalized,
    /// Compare raw intensities against `fraction * max`.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    #[default]
    #[serde(rename = "4")]
    Four,
    /// All eight neighbours.
    #[serde(rename = "8")]
    Eight,
}

/// Binary grid, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    cells: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, cells: Vec<bool>) -> Result<Self> {
        if cells.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for a {height}x{width} mask",
                cells.len()
            )));
        }
        Ok(Mask { height, width, cells })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, a: usize, b: usize) -> bool {
        self.cells[a * self.width + b]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Keeps the cells whose intensity exceeds `fraction` of the map's range.
///
/// In normalized mode a constant map keeps every cell.
pub fn threshold_mask<T: Scalar>(map: &IntensityMap<T>, fraction: f64, mode: ThresholdMode) -> Mask {
    let v = map.values();
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let cells = match mode {
        ThresholdMode::Normalized => {
            let min = v.iter().copied().fold(T::infinity(), T::min);
            let range = max - min;
            if range <= T::zero() {
                vec![true; v.len()]
            } else {
                v.iter().map(|&x| (x - min) / range > lit::<T>(fraction)).collect()
            }
        }
        ThresholdMode::Raw => {
            let cut = lit::<T>(fraction) * max;
            v.iter().map(|&x| x > cut).collect()
        }
    };
    Mask {
        height: map.height(),
        width: map.width(),
        cells,
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Keeps the smaller index as root, so a root is its set's first cell in raster order.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Labels every foreground cell with the raster index of its component's first cell.
pub fn component_roots(mask: &Mask, conn: Connectivity) -> Vec<Option<usize>> {
    let (h, w) = (mask.height, mask.width);
    let mut sets = DisjointSet::new(h * w);
    for a in 0..h {
        for b in 0..w {
            if !mask.get(a, b) {
                continue;
            }
            let i = a * w + b;
            // previously visited neighbours only
            if b > 0 && mask.get(a, b - 1) {
                sets.union(i, i - 1);
            }
            if a > 0 {
                if mask.get(a - 1, b) {
                    sets.union(i, i - w);
                }
                if conn == Connectivity::Eight {
                    if b > 0 && mask.get(a - 1, b - 1) {
                        sets.union(i, i - w - 1);
                    }
                    if b + 1 < w && mask.get(a - 1, b + 1) {
                        sets.union(i, i - w + 1);
                    }
                }
            }
        }
    }
    (0..h * w)
        .map(|i| mask.cells[i].then(|| sets.find(i)))
        .collect()
}

/// The largest connected component as `(row, col)` cells in raster order.
///
/// Size ties go to the component whose first cell comes earliest in raster
/// order. `None` for an empty mask.
pub fn largest_component(mask: &Mask, conn: Connectivity) -> Option<Vec<(usize, usize)>> {
    let roots = component_roots(mask, conn);
    let mut sizes = vec![0usize; roots.len()];
    for r in roots.iter().flatten() {
        sizes[*r] += 1;
    }
    // roots are raster-ordered, so the first maximum wins ties
    let (best, &size) = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &usize)>, (i, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        })?;
    if size == 0 {
        return None;
    }
    let w = mask.width;
    Some(
        roots
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == Some(best))
            .map(|(i, _)| (i / w, i % w))
            .collect(),
    )
}

/// Smallest half-open box covering a set of cells.
pub fn cover(cells: &[(usize, usize)], space: Space) -> Option<BBox> {
    let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
    for &(r, c) in cells {
        r0 = r0.min(r);
        c0 = c0.min(c);
        r1 = r1.max(r + 1);
        c1 = c1.max(c + 1);
    }
    (!cells.is_empty()).then_some(BBox {
        x0: c0 as f64,
        y0: r0 as f64,
        x1: c1 as f64,
        y1: r1 as f64,
        space,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxConfig {
    pub fraction: f64,
    pub mode: ThresholdMode,
    pub connectivity: Connectivity,
}

impl Default for BoxConfig {
    fn default() -> Self {
        BoxConfig {
            fraction: 0.2,
            mode: ThresholdMode::Normalized,
            connectivity: Connectivity::Four,
        }
    }
}

impl BoxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "threshold fraction must lie in (0, 1), got {}",
                self.fraction
            )));
        }
        Ok(())
    }
}

/// A box plus whether it came from the empty-mask fallback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxEstimate {
    pub bbox: BBox,
    pub fallback: bool,
}

fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Threshold, keep the largest component, and cover it with a box in grid
/// coordinates. An empty mask falls back to the 1x1 box at the map's argmax.
pub fn locate<T: Scalar>(map: &IntensityMap<T>, cfg: &BoxConfig) -> BoxEstimate {
    let mask = threshold_mask(map, cfg.fraction, cfg.mode);
    match largest_component(&mask, cfg.connectivity) {
        Some(cells) => BoxEstimate {
            bbox: cover(&cells, Space::FeatureGrid).expect("non-empty component"),
            fallback: false,
        },
        None => {
            let i = argmax(map.values());
            let (r, c) = (i / map.width(), i % map.width());
            BoxEstimate {
                bbox: cover(&[(r, c)], Space::FeatureGrid).expect("one cell"),
                fallback: true,
            }
        }
    }
}

pub fn bounding_box<T: Scalar>(map: &IntensityMap<T>, cfg: &BoxConfig) -> BBox {
    locate(map, cfg).bbox
}

/// Scales a grid box to image pixels: `x' = x * W_img / W`, `y' = y * H_img / H`.
pub fn to_image_space(b: &BBox, feat_hw: (usize, usize), img_hw: (usize, usize)) -> Result<BBox> {
    if feat_hw.0 == 0 || feat_hw.1 == 0 || img_hw.0 == 0 || img_hw.1 == 0 {
        return Err(Error::InvalidArgument("zero-sized grid".into()));
    }
    if b.space != Space::FeatureGrid {
        return Err(Error::MixedSpaces);
    }
    let sx = img_hw.1 as f64 / feat_hw.1 as f64;
    let sy = img_hw.0 as f64 / feat_hw.0 as f64;
    Ok(BBox {
        x0: b.x0 * sx,
        y0: b.y0 * sy,
        x1: b.x1 * sx,
        y1: b.y1 * sy,
        space: Space::ImagePixels,
    })
}

/// Bilinear resize with half-pixel centres and edge clamping.
pub fn upsample_bilinear<T: Scalar>(map: &IntensityMap<T>, img_hw: (usize, usize)) -> Result<IntensityMap<T>> {
    let (h, w) = (map.height(), map.width());
    let (ho, wo) = img_hw;
    if ho == 0 || wo == 0 {
        return Err(Error::InvalidArgument("zero-sized image".into()));
    }
    let coord = |i: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(ho * wo);
    for i in 0..ho {
        let (r0, r1, fy) = coord(i, h, ho);
        for j in 0..wo {
            let (c0, c1, fx) = coord(j, w, wo);
            let top = map.at(r0, c0) * lit(1.0 - fx) + map.at(r0, c1) * lit(fx);
            let bottom = map.at(r1, c0) * lit(1.0 - fx) + map.at(r1, c1) * lit(fx);
            out.push(top * lit(1.0 - fy) + bottom * lit(fy));
        }
    }
    IntensityMap::new(
        crate::array::Array::from_vec(vec![ho, wo], out)?,
        map.label(),
        map.kind(),
        map.region_side(),
    )
}

/// How grid-level boxes reach image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxMapping {
    /// Box on the grid first, then scale its corners.
    #[default]
    CornerScale,
    /// Upsample the map to image size, then threshold and box in pixels.
    Upsample,
}

/// Full map-to-image-box step under either mapping.
pub fn locate_in_image<T: Scalar>(
    map: &IntensityMap<T>,
    img_hw: (usize, usize),
    cfg: &BoxConfig,
    mapping: BoxMapping,
) -> Result<BoxEstimate> {
    match mapping {
        BoxMapping::CornerScale => {
            let est = locate(map, cfg);
            Ok(BoxEstimate {
                bbox: to_image_space(&est.bbox, (map.height(), map.width()), img_hw)?,
                fallback: est.fallback,
            })
        }
        BoxMapping::Upsample => {
            let up = upsample_bilinear(map, img_hw)?;
            let est = locate(&up, cfg);
            Ok(BoxEstimate {
                bbox: BBox {
                    space: Space::ImagePixels,
                    ..est.bbox
                },
                fallback: est.fallback,
            })
        }
    }
}

/// Outcome for one sample: the predicted box and its best IoU against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub predicted_box: BBox,
    pub used_label: usize,
    pub iou: f64,
    pub correct: bool,
}

/// IoU above this counts as a hit.
pub const IOU_HIT: f64 = 0.5;

impl LocalizationResult {
    /// Scores against every ground-truth box; the best match counts.
    pub fn score(predicted_box: BBox, used_label: usize, gt_boxes: &[BBox]) -> Result<Self> {
        let mut best = 0.0f64;
        for gt in gt_boxes {
            best = best.max(iou(&predicted_box, gt)?);
        }
        Ok(LocalizationResult {
            predicted_box,
            used_label,
            iou: best,
            correct: best > IOU_HIT,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Box from the ground-truth label's map.
    GtLoc,
    /// Box from the predicted label's map, and the prediction must be right.
    Top1Loc,
}

/// Per-sample input to [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub true_label: usize,
    pub gt_boxes: Vec<BBox>,
    /// Box from the true label's map.
    pub true_label_box: BBox,
    /// Predicted label and the box from its map; `None` when nothing was predicted.
    pub predicted: Option<(usize, BBox)>,
}

/// Localization accuracy in percent.
pub fn evaluate(samples: &[EvalSample], metric: Metric) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        let hit = match metric {
            Metric::GtLoc => LocalizationResult::score(s.true_label_box, s.true_label, &s.gt_boxes)?.correct,
            Metric::Top1Loc => match s.predicted {
                Some((label, b)) if label == s.true_label => {
                    LocalizationResult::score(b, label, &s.gt_boxes)?.correct
                }
                _ => false,
            },
        };
        hits += hit as usize;
    }
    Ok(100.0 * hits as f64 / samples.len() as f64)
}
