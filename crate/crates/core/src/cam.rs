//! Class activation maps and their information-theoretic refinements.
//!
//! All maps share one structure: a per-class linear readout of the final
//! feature stack, evaluated point-wise and optionally aggregated over a
//! square window before classes are compared.

use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The `K` feature grids `g_1..g_K` of the final convolutional layer, shape `(K, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack<T> {
    values: Array<T>,
}

impl<T: Scalar> FeatureStack<T> {
    pub fn new(values: Array<T>) -> Result<Self> {
        if values.ndim() != 3 || values.shape().contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "feature stack must be (K,H,W) with non-zero extents, found {:?}",
                values.shape()
            )));
        }
        Ok(FeatureStack { values })
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn at(&self, k: usize, a: usize, b: usize) -> T {
        self.values.get(&[k, a, b])
    }

    /// Row-major grid of channel `k`.
    pub fn channel(&self, k: usize) -> &[T] {
        let n = self.height() * self.width();
        &self.values.data()[k * n..(k + 1) * n]
    }

    pub fn array(&self) -> &Array<T> {
        &self.values
    }

    /// Spatial mean of every channel (global average pooling).
    pub fn pooled(&self) -> Vec<T> {
        let n = T::from_usize(self.height() * self.width()).unwrap();
        (0..self.channels())
            .map(|k| self.channel(k).iter().copied().sum::<T>() / n)
            .collect()
    }
}

/// How the classifier head turns logits into probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    /// One softmax over all classes.
    Softmax,
    /// Independent per-label sigmoids.
    MultiLabel,
}

/// Linear head over globally pooled features: weights `(M, K)` plus optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<T> {
    weights: Array<T>,
    bias: Option<Vec<T>>,
    mode: HeadMode,
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn new(weights: Array<T>, bias: Option<Vec<T>>, mode: HeadMode) -> Result<Self> {
        if weights.ndim() != 2 || weights.shape()[1] == 0 {
            return Err(Error::ShapeMismatch(format!(
                "head weights must be (M,K), found {:?}",
                weights.shape()
            )));
        }
        let m = weights.shape()[0];
        let min_classes = match mode {
            HeadMode::Softmax => 2,
            HeadMode::MultiLabel => 1,
        };
        if m < min_classes {
            return Err(Error::InvalidArgument(format!(
                "{mode:?} head needs at least {min_classes} classes, found {m}"
            )));
        }
        if let Some(b) = &bias {
            if b.len() != m {
                return Err(Error::ShapeMismatch(format!("bias has {} entries for {m} classes", b.len())));
            }
        }
        Ok(ClassifierHead { weights, bias, mode })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn num_features(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn mode(&self) -> HeadMode {
        self.mode
    }

    pub fn weights(&self) -> &Array<T> {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }

    /// `w^y`, the weights of class `y` over the `K` features.
    pub fn class_weights(&self, y: usize) -> &[T] {
        let k = self.num_features();
        &self.weights.data()[y * k..(y + 1) * k]
    }

    fn check(&self, fs: &FeatureStack<T>, y: Option<usize>) -> Result<()> {
        if fs.channels() != self.num_features() {
            return Err(Error::ShapeMismatch(format!(
                "feature stack has K={} but head expects K={}",
                fs.channels(),
                self.num_features()
            )));
        }
        if let Some(y) = y {
            if y >= self.num_classes() {
                return Err(Error::LabelOutOfRange {
                    label: y,
                    classes: self.num_classes(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MapKind {
    #[serde(rename = "cam")]
    Cam,
    #[serde(rename = "infocam")]
    InfoCam,
    #[serde(rename = "infocam+")]
    InfoCamPlus,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Cam => "cam",
            MapKind::InfoCam => "infocam",
            MapKind::InfoCamPlus => "infocam+",
        }
    }
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cam" => Ok(MapKind::Cam),
            "infocam" => Ok(MapKind::InfoCam),
            "infocam+" | "infocam-plus" => Ok(MapKind::InfoCamPlus),
            other => Err(Error::InvalidArgument(format!("unknown map kind {other:?}"))),
        }
    }
}

/// Placement of the square aggregation window relative to its output point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    /// Odd side, centered on the point.
    #[default]
    Centered,
    /// Window spans `[a, a+s) x [b, b+s)`; allows even sides.
    TopLeft,
}

/// Square region `R` of side `s`, slid with stride 1 and zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    side: usize,
    anchor: Anchor,
}

impl RegionSpec {
    /// Centered window. Even sides are rounded up to the next odd side.
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidArgument("region side must be positive".into()));
        }
        Ok(RegionSpec {
            side: side | 1,
            anchor: Anchor::Centered,
        })
    }

    pub fn top_left(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidArgument("region side must be positive".into()));
        }
        Ok(RegionSpec {
            side,
            anchor: Anchor::TopLeft,
        })
    }

    pub fn with_anchor(side: usize, anchor: Anchor) -> Result<Self> {
        match anchor {
            Anchor::Centered => Self::new(side),
            Anchor::TopLeft => Self::top_left(side),
        }
    }

    /// The degenerate single-point region.
    pub fn point() -> Self {
        RegionSpec {
            side: 1,
            anchor: Anchor::Centered,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.side > height.min(width) {
            return Err(Error::InvalidRegion {
                side: self.side,
                height,
                width,
            });
        }
        Ok(())
    }

    /// Row (or column) span `[lo, hi)` of the window for output index `i`, clipped to `0..n`.
    fn span(&self, i: usize, n: usize) -> (usize, usize) {
        match self.anchor {
            Anchor::Centered => {
                let r = self.side / 2;
                (i.saturating_sub(r), (i + r + 1).min(n))
            }
            Anchor::TopLeft => (i, (i + self.side).min(n)),
        }
    }
}

/// A per-location intensity grid for one label.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap<T> {
    values: Array<T>,
    label: usize,
    kind: MapKind,
    region_side: usize,
}

impl<T: Scalar> IntensityMap<T> {
    pub fn new(values: Array<T>, label: usize, kind: MapKind, region_side: usize) -> Result<Self> {
        if values.ndim() != 2 || values.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "intensity map must be a non-empty (H,W) grid, found {:?}",
                values.shape()
            )));
        }
        Ok(IntensityMap {
            values,
            label,
            kind,
            region_side,
        })
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn at(&self, a: usize, b: usize) -> T {
        self.values.data()[a * self.width() + b]
    }

    pub fn values(&self) -> &[T] {
        self.values.data()
    }

    pub fn array(&self) -> &Array<T> {
        &self.values
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn region_side(&self) -> usize {
        self.region_side
    }
}

/// Options for the infoCAM+ comparison label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InfoCamOptions {
    /// Restrict the per-window argmin to labels other than the target.
    pub argmin_excludes_true: bool,
}

/// `sum_k v_k g_k(a,b)` for an arbitrary per-feature weight vector.
fn weighted_sum<T: Scalar>(fs: &FeatureStack<T>, weights: &[T]) -> Vec<T> {
    let n = fs.height() * fs.width();
    let mut out = vec![T::zero(); n];
    for (k, &w) in weights.iter().enumerate() {
        for (o, &g) in out.iter_mut().zip(fs.channel(k)) {
            *o += w * g;
        }
    }
    out
}

fn grid<T: Scalar>(fs: &FeatureStack<T>, values: Vec<T>) -> Array<T> {
    Array::from_vec(vec![fs.height(), fs.width()], values).expect("grid shape")
}

/// Plain class activation map: `M_y(a,b) = sum_k w_k^y g_k(a,b)`.
pub fn cam<T: Scalar>(fs: &FeatureStack<T>, head: &ClassifierHead<T>, y: usize) -> Result<IntensityMap<T>> {
    head.check(fs, Some(y))?;
    let values = weighted_sum(fs, head.class_weights(y));
    IntensityMap::new(grid(fs, values), y, MapKind::Cam, 1)
}

/// Logits as the spatial sum of each class's CAM, plus bias.
pub fn logits<T: Scalar>(fs: &FeatureStack<T>, head: &ClassifierHead<T>) -> Result<Vec<T>> {
    head.check(fs, None)?;
    Ok((0..head.num_classes())
        .map(|y| {
            let s: T = weighted_sum(fs, head.class_weights(y)).into_iter().sum();
            s + head.bias().map_or(T::zero(), |b| b[y])
        })
        .collect())
}

/// Logits via global average pooling then the linear head, rescaled by `H*W`.
///
/// Algebraically identical to [`logits`]; kept as an independent route.
pub fn logits_pooled<T: Scalar>(fs: &FeatureStack<T>, head: &ClassifierHead<T>) -> Result<Vec<T>> {
    head.check(fs, None)?;
    let pooled = fs.pooled();
    let area = T::from_usize(fs.height() * fs.width()).unwrap();
    Ok((0..head.num_classes())
        .map(|y| {
            let dot: T = head
                .class_weights(y)
                .iter()
                .zip(&pooled)
                .map(|(&w, &p)| w * p)
                .sum();
            dot * area + head.bias().map_or(T::zero(), |b| b[y])
        })
        .collect())
}

/// Max-shifted log-sum-exp.
pub fn log_sum_exp<T: Scalar>(n: &[T]) -> T {
    let max = n.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    max + n.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

/// Pointwise mutual information under uniform label priors:
/// `n_y - logsumexp(n) + log M`.
pub fn pmi<T: Scalar>(n: &[T], y: usize) -> Result<T> {
    let m = n.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("PMI needs at least 2 classes, found {m}")));
    }
    if y >= m {
        return Err(Error::LabelOutOfRange { label: y, classes: m });
    }
    if let Some(index) = n.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(n[y] - log_sum_exp(n) + T::from_usize(m).unwrap().ln())
}

/// Mutual information estimate: mean PMI of each sample with its true label.
pub fn estimate_mi<T: Scalar>(samples: &[(FeatureStack<T>, usize)], head: &ClassifierHead<T>) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Empty("mutual information needs at least one sample".into()));
    }
    let mut total = T::zero();
    for (fs, y) in samples {
        total += pmi(&logits(fs, head)?, *y)?;
    }
    Ok(total / T::from_usize(samples.len()).unwrap())
}

/// Sum of `values` over the region window at every point of an `h x w` grid.
///
/// Uses a summed-area table; out-of-grid cells count as zero.
pub fn box_filter<T: Scalar>(values: &[T], h: usize, w: usize, region: RegionSpec) -> Vec<T> {
    assert_eq!(values.len(), h * w, "grid size mismatch");
    if region.side() == 1 {
        return values.to_vec();
    }
    let stride = w + 1;
    let mut table = vec![T::zero(); (h + 1) * stride];
    for a in 0..h {
        let mut row = T::zero();
        for b in 0..w {
            row += values[a * w + b];
            table[(a + 1) * stride + b + 1] = table[a * stride + b + 1] + row;
        }
    }
    let mut out = Vec::with_capacity(h * w);
    for a in 0..h {
        let (r0, r1) = region.span(a, h);
        for b in 0..w {
            let (c0, c1) = region.span(b, w);
            out.push(
                table[r1 * stride + c1] - table[r0 * stride + c1] - table[r1 * stride + c0]
                    + table[r0 * stride + c0],
            );
        }
    }
    out
}

fn check_region<T: Scalar>(fs: &FeatureStack<T>, region: RegionSpec) -> Result<()> {
    region.validate(fs.height(), fs.width())
}

fn check_contrastive<T: Scalar>(head: &ClassifierHead<T>) -> Result<()> {
    if head.num_classes() < 2 {
        return Err(Error::InvalidArgument(
            "contrastive maps need at least 2 classes".into(),
        ));
    }
    Ok(())
}

/// Region sum of every class's CAM.
fn window_sums<T: Scalar>(fs: &FeatureStack<T>, head: &ClassifierHead<T>, region: RegionSpec) -> Vec<Vec<T>> {
    (0..head.num_classes())
        .map(|m| box_filter(&weighted_sum(fs, head.class_weights(m)), fs.height(), fs.width(), region))
        .collect()
}

/// infoCAM: region sum of `w^y g - mean_{y' != y} w^{y'} g`.
pub fn infocam<T: Scalar>(
    fs: &FeatureStack<T>,
    head: &ClassifierHead<T>,
    y: usize,
    region: RegionSpec,
) -> Result<IntensityMap<T>> {
    head.check(fs, Some(y))?;
    check_contrastive(head)?;
    check_region(fs, region)?;

    let sums = window_sums(fs, head, region);
    let others = T::from_usize(head.num_classes() - 1).unwrap();
    let values = (0..fs.height() * fs.width())
        .map(|i| {
            let rest: T = sums.iter().enumerate().filter(|&(m, _)| m != y).map(|(_, s)| s[i]).sum();
            sums[y][i] - rest / others
        })
        .collect();
    IntensityMap::new(grid(fs, values), y, MapKind::InfoCam, region.side())
}

/// infoCAM+: region sum of class `y` minus that of the per-window least likely class.
///
/// The comparison label minimizes the window sum; ties go to the smallest index.
pub fn infocam_plus<T: Scalar>(
    fs: &FeatureStack<T>,
    head: &ClassifierHead<T>,
    y: usize,
    region: RegionSpec,
    opts: InfoCamOptions,
) -> Result<IntensityMap<T>> {
    head.check(fs, Some(y))?;
    check_contrastive(head)?;
    check_region(fs, region)?;

    let sums = window_sums(fs, head, region);
    let values = (0..fs.height() * fs.width())
        .map(|i| {
            let mut best: Option<T> = None;
            for (m, s) in sums.iter().enumerate() {
                if opts.argmin_excludes_true && m == y {
                    continue;
                }
                if best.is_none_or(|b| s[i] < b) {
                    best = Some(s[i]);
                }
            }
            sums[y][i] - best.expect("at least one comparison label")
        })
        .collect();
    IntensityMap::new(grid(fs, values), y, MapKind::InfoCamPlus, region.side())
}

/// Region sum of the plain CAM. With a point region this is [`cam`].
pub fn region_cam<T: Scalar>(
    fs: &FeatureStack<T>,
    head: &ClassifierHead<T>,
    y: usize,
    region: RegionSpec,
) -> Result<IntensityMap<T>> {
    check_region(fs, region)?;
    let base = cam(fs, head, y)?;
    let values = box_filter(base.values(), fs.height(), fs.width(), region);
    let kind = if region.side() == 1 { MapKind::Cam } else { MapKind::InfoCam };
    IntensityMap::new(grid(fs, values), y, kind, region.side())
}

fn check_multilabel<T: Scalar>(head: &ClassifierHead<T>) -> Result<()> {
    if head.mode() != HeadMode::MultiLabel {
        return Err(Error::InvalidArgument(
            "multi-label maps need a per-label sigmoid head".into(),
        ));
    }
    Ok(())
}

/// Multi-label infoCAM for one sigmoid label.
///
/// For a binary sigmoid output the PMI difference between "present" and
/// "absent" is the logit itself, so the intensity is the region sum of the
/// label's CAM.
pub fn multilabel_infocam<T: Scalar>(
    fs: &FeatureStack<T>,
    head: &ClassifierHead<T>,
    label: usize,
    region: RegionSpec,
) -> Result<IntensityMap<T>> {
    check_multilabel(head)?;
    region_cam(fs, head, label, region).map(|m| IntensityMap { kind: MapKind::InfoCam, ..m })
}

/// Multi-label infoCAM+: the binary "absent" outcome has a zero logit, so the
/// per-window argmin picks it whenever the region sum is non-negative.
pub fn multilabel_infocam_plus<T: Scalar>(
    fs: &FeatureStack<T>,
    head: &ClassifierHead<T>,
    label: usize,
    region: RegionSpec,
    opts: InfoCamOptions,
) -> Result<IntensityMap<T>> {
    let base = multilabel_infocam(fs, head, label, region)?;
    let values = if opts.argmin_excludes_true {
        base.values().to_vec()
    } else {
        base.values().iter().map(|&v| v.max(T::zero())).collect()
    };
    IntensityMap::new(grid(fs, values), label, MapKind::InfoCamPlus, region.side())
}

/// Dispatches on map kind and head mode.
pub fn intensity_map<T: Scalar>(
    fs: &FeatureStack<T>,
    head: &ClassifierHead<T>,
    label: usize,
    kind: MapKind,
    region: RegionSpec,
    opts: InfoCamOptions,
) -> Result<IntensityMap<T>> {
    match (kind, head.mode()) {
        (MapKind::Cam, _) => cam(fs, head, label),
        (MapKind::InfoCam, HeadMode::Softmax) => infocam(fs, head, label, region),
        (MapKind::InfoCamPlus, HeadMode::Softmax) => infocam_plus(fs, head, label, region, opts),
        (MapKind::InfoCam, HeadMode::MultiLabel) => multilabel_infocam(fs, head, label, region),
        (MapKind::InfoCamPlus, HeadMode::MultiLabel) => {
            multilabel_infocam_plus(fs, head, label, region, opts)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stack(k: usize, h: usize, w: usize, data: Vec<f64>) -> FeatureStack<f64> {
        FeatureStack::new(Array::from_vec(vec![k, h, w], data).unwrap()).unwrap()
    }

    fn head(m: usize, k: usize, data: Vec<f64>) -> ClassifierHead<f64> {
        ClassifierHead::new(Array::from_vec(vec![m, k], data).unwrap(), None, HeadMode::Softmax).unwrap()
    }

    #[test]
    fn cam_scalar_weighting() {
        let fs = stack(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let h = ClassifierHead::new(Array::from_vec(vec![1, 1], vec![2.0]).unwrap(), None, HeadMode::MultiLabel)
            .unwrap();
        let m = cam(&fs, &h, 0).unwrap();
        assert_eq!(m.values(), &[2.0, 4.0, 6.0, 8.0]);
        assert_eq!(logits(&fs, &h).unwrap(), vec![20.0]);
    }

    #[test]
    fn zero_weights_zero_map() {
        let fs = stack(2, 2, 2, vec![1.0, -2.0, 3.0, 0.5, 7.0, 1.0, 1.0, 1.0]);
        let h = head(2, 2, vec![0.0, 0.0, 1.0, 1.0]);
        assert!(cam(&fs, &h, 0).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_features_give_bias() {
        let fs = stack(2, 3, 3, vec![0.0; 18]);
        let h = ClassifierHead::new(
            Array::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            Some(vec![0.5, -1.5]),
            HeadMode::Softmax,
        )
        .unwrap();
        assert_eq!(logits(&fs, &h).unwrap(), vec![0.5, -1.5]);
    }

    #[test]
    fn cam_errors() {
        let fs = stack(2, 2, 2, vec![0.0; 8]);
        let h = head(2, 3, vec![0.0; 6]);
        assert!(matches!(cam(&fs, &h, 0), Err(Error::ShapeMismatch(_))));
        let h = head(2, 2, vec![0.0; 4]);
        assert!(matches!(cam(&fs, &h, 2), Err(Error::LabelOutOfRange { label: 2, classes: 2 })));
    }

    #[test]
    fn pmi_values() {
        assert_eq!(pmi(&[0.0f64, 0.0], 0).unwrap(), 0.0);
        assert_eq!(pmi(&[0.0f64, 0.0], 1).unwrap(), 0.0);
        // 1 - ln(e + 1) + ln 2
        let v = pmi(&[1.0f64, 0.0], 0).unwrap();
        assert!((v - 0.379_885_493_041_722_3).abs() < 1e-12, "{v}");
        assert!(pmi(&[1.0f64], 0).is_err());
        assert!(pmi(&[1.0f64, f64::NAN], 0).is_err());
    }

    #[test]
    fn lse_is_shift_stable() {
        let v = log_sum_exp(&[1000.0f64, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn mi_of_uniform_logits() {
        let fs = stack(1, 1, 1, vec![0.0]);
        let h = head(2, 1, vec![1.0, -1.0]);
        assert_eq!(estimate_mi(&[(fs, 0)], &h).unwrap(), 0.0);
        assert!(estimate_mi(&[], &h).is_err());
    }

    #[test]
    fn infocam_hand_evaluation() {
        let fs = stack(1, 1, 1, vec![1.0]);
        let h = head(3, 1, vec![2.0, 1.0, 0.0]);
        let r = RegionSpec::point();
        assert_eq!(infocam(&fs, &h, 0, r).unwrap().values(), &[1.5]);
        assert_eq!(infocam_plus(&fs, &h, 0, r, InfoCamOptions::default()).unwrap().values(), &[2.0]);
    }

    #[test]
    fn infocam_plus_identical_classes_is_zero() {
        let fs = stack(2, 3, 3, (0..18).map(|i| i as f64 * 0.3 - 2.0).collect());
        let h = head(3, 2, vec![0.7, -0.2, 0.7, -0.2, 0.7, -0.2]);
        let m = infocam_plus(&fs, &h, 1, RegionSpec::new(3).unwrap(), InfoCamOptions::default()).unwrap();
        assert!(m.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn argmin_can_exclude_target() {
        let fs = stack(1, 1, 1, vec![1.0]);
        let h = head(3, 1, vec![0.0, 1.0, 2.0]);
        let r = RegionSpec::point();
        // target is the minimum itself: literal reading compares against itself
        assert_eq!(infocam_plus(&fs, &h, 0, r, InfoCamOptions::default()).unwrap().values(), &[0.0]);
        let excl = InfoCamOptions { argmin_excludes_true: true };
        assert_eq!(infocam_plus(&fs, &h, 0, r, excl).unwrap().values(), &[-1.0]);
    }

    #[test]
    fn region_validation() {
        let fs = stack(1, 2, 3, vec![0.0; 6]);
        let h = head(2, 1, vec![1.0, 0.0]);
        assert!(matches!(
            infocam(&fs, &h, 0, RegionSpec::new(3).unwrap()),
            Err(Error::InvalidRegion { side: 3, .. })
        ));
        assert_eq!(RegionSpec::new(4).unwrap().side(), 5);
        assert_eq!(RegionSpec::top_left(4).unwrap().side(), 4);
        assert!(RegionSpec::new(0).is_err());
    }

    #[test]
    fn delta_spreads_to_plateau() {
        let mut data = vec![0.0; 25];
        data[12] = 1.0;
        let fs = stack(1, 5, 5, data);
        let h = ClassifierHead::new(Array::from_vec(vec![1, 1], vec![1.0]).unwrap(), None, HeadMode::MultiLabel)
            .unwrap();
        let m = multilabel_infocam(&fs, &h, 0, RegionSpec::new(3).unwrap()).unwrap();
        for a in 0..5 {
            for b in 0..5 {
                let inside = (1..=3).contains(&a) && (1..=3).contains(&b);
                assert_eq!(m.at(a, b), if inside { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(multilabel_infocam(&fs, &h, 0, RegionSpec::point()).unwrap().values(), cam(&fs, &h, 0).unwrap().values());
    }

    #[test]
    fn multilabel_requires_sigmoid_head() {
        let fs = stack(1, 1, 1, vec![1.0]);
        let h = head(2, 1, vec![1.0, 0.0]);
        assert!(multilabel_infocam(&fs, &h, 0, RegionSpec::point()).is_err());
    }

    #[test]
    fn top_left_anchor_windows() {
        let vals: Vec<f64> = (1..=9).map(f64::from).collect();
        let out = box_filter(&vals, 3, 3, RegionSpec::top_left(2).unwrap());
        assert_eq!(out, vec![12.0, 16.0, 9.0, 24.0, 28.0, 15.0, 15.0, 17.0, 9.0]);
    }

    #[test]
    fn generic_over_f32() {
        let fs = FeatureStack::new(Array::from_vec(vec![1, 1, 1], vec![1.0f32]).unwrap()).unwrap();
        let h = ClassifierHead::new(Array::from_vec(vec![3, 1], vec![2.0f32, 1.0, 0.0]).unwrap(), None, HeadMode::Softmax)
            .unwrap();
        assert_eq!(infocam(&fs, &h, 0, RegionSpec::point()).unwrap().values(), &[1.5f32]);
    }
}
