//! Double-digit MNIST: two fixed 28x28 slots on a 28x56 canvas, each filled
//! independently with probability `p_slot`, empty canvases rejected.
//!
//! Sampling uses `ChaCha8Rng` seeded with `SynthConfig::seed`, so a dataset
//! is a pure function of (source files, seed, count, p_slot).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::error::{Error, Result};
use crate::localize::{BBox, Space};
use crate::nn::{Dataset, Example, Target};
use crate::npy::{self, Dtype};
use crate::scalar::Scalar;

pub const DIGIT_SIDE: usize = 28;
pub const CANVAS_HEIGHT: usize = 28;
pub const CANVAS_WIDTH: usize = 56;
pub const NUM_DIGITS: usize = 10;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Grayscale digits with labels, kept as raw bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct MnistSource {
    pixels: Vec<u8>,
    labels: Vec<u8>,
    by_class: Vec<Vec<usize>>,
}

impl MnistSource {
    pub fn new(pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Empty("MNIST source has no images".into()));
        }
        if pixels.len() != n * DIGIT_SIDE * DIGIT_SIDE {
            return Err(Error::Idx(format!(
                "{} pixel bytes for {n} images of 28x28",
                pixels.len()
            )));
        }
        let mut by_class = vec![Vec::new(); NUM_DIGITS];
        for (i, &l) in labels.iter().enumerate() {
            if l as usize >= NUM_DIGITS {
                return Err(Error::Idx(format!("label {l} at index {i} is not a digit")));
            }
            by_class[l as usize].push(i);
        }
        Ok(MnistSource {
            pixels,
            labels,
            by_class,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn raw(&self, i: usize) -> &[u8] {
        &self.pixels[i * 784..(i + 1) * 784]
    }

    /// Pixel `(row, col)` of image `i`, scaled to `[0, 1]`.
    pub fn pixel(&self, i: usize, row: usize, col: usize) -> f64 {
        self.raw(i)[row * DIGIT_SIDE + col] as f64 / 255.0
    }

    /// All images as an `(N, 28, 28)` array in `[0, 1]`.
    pub fn images<T: Scalar>(&self) -> Array<T> {
        let data = self.pixels.iter().map(|&p| T::from_f64_lossy(p as f64 / 255.0)).collect();
        Array::from_vec(vec![self.len(), DIGIT_SIDE, DIGIT_SIDE], data).expect("source shape")
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_indices(&self, digit: u8) -> &[usize] {
        &self.by_class[digit as usize]
    }

    /// Tight half-open box around the nonzero pixels of image `i`, in its own 28x28 frame.
    pub fn tight_box(&self, i: usize) -> Option<(usize, usize, usize, usize)> {
        let img = self.raw(i);
        let (mut r0, mut c0, mut r1, mut c1) = (usize::MAX, usize::MAX, 0, 0);
        for r in 0..DIGIT_SIDE {
            for c in 0..DIGIT_SIDE {
                if img[r * DIGIT_SIDE + c] > 0 {
                    r0 = r0.min(r);
                    c0 = c0.min(c);
                    r1 = r1.max(r + 1);
                    c1 = c1.max(c + 1);
                }
            }
        }
        (r1 > 0).then_some((c0, r0, c1, r1))
    }
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::Idx(format!("{what}: truncated header")))?;
    Ok(u32::from_be_bytes(b))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn read_payload<R: Read>(r: &mut R, len: usize, what: &str) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(len);
    r.take(len as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(what, e))?;
    if buf.len() != len {
        return Err(Error::Idx(format!("{what}: expected {len} bytes, found {}", buf.len())));
    }
    Ok(buf)
}

/// Reads an IDX image file (magic 0x803) and its label file (magic 0x801).
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<MnistSource> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let iname = ip.display().to_string();
    let lname = lp.display().to_string();

    let mut ir = open(ip)?;
    let magic = read_u32(&mut ir, &iname)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Idx(format!("{iname}: bad magic {magic:#010x}")));
    }
    let n = read_u32(&mut ir, &iname)? as usize;
    let rows = read_u32(&mut ir, &iname)? as usize;
    let cols = read_u32(&mut ir, &iname)? as usize;
    if rows != DIGIT_SIDE || cols != DIGIT_SIDE {
        return Err(Error::Idx(format!("{iname}: images are {rows}x{cols}, expected 28x28")));
    }

    let mut lr = open(lp)?;
    let magic = read_u32(&mut lr, &lname)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Idx(format!("{lname}: bad magic {magic:#010x}")));
    }
    let nl = read_u32(&mut lr, &lname)? as usize;
    if nl != n {
        return Err(Error::Idx(format!("{n} images but {nl} labels")));
    }

    let pixels = read_payload(&mut ir, n * rows * cols, &iname)?;
    let labels = read_payload(&mut lr, n, &lname)?;
    MnistSource::new(pixels, labels)
}

/// Writes a source back out as an IDX image/label pair.
pub fn write_idx(src: &MnistSource, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let mut w = BufWriter::new(File::create(ip).map_err(|e| Error::io(ip, e))?);
    let n = src.len() as u32;
    for v in [IMAGES_MAGIC, n, DIGIT_SIDE as u32, DIGIT_SIDE as u32] {
        w.write_all(&v.to_be_bytes()).map_err(|e| Error::io(ip, e))?;
    }
    w.write_all(&src.pixels).map_err(|e| Error::io(ip, e))?;
    w.flush().map_err(|e| Error::io(ip, e))?;

    let mut w = BufWriter::new(File::create(lp).map_err(|e| Error::io(lp, e))?);
    for v in [LABELS_MAGIC, n] {
        w.write_all(&v.to_be_bytes()).map_err(|e| Error::io(lp, e))?;
    }
    w.write_all(&src.labels).map_err(|e| Error::io(lp, e))?;
    w.flush().map_err(|e| Error::io(lp, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    pub p_slot: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            count: 1000,
            p_slot: 0.7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("count must be positive".into()));
        }
        if !(self.p_slot > 0.0 && self.p_slot <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "p_slot must lie in (0, 1], got {}",
                self.p_slot
            )));
        }
        Ok(())
    }
}

/// A source digit placed in a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDigit {
    pub digit: u8,
    pub source: usize,
}

/// One synthesized canvas, stored as the recipe that renders it.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSample {
    /// Left (columns 0..28) and right (columns 28..56) slots.
    pub slots: [Option<SlotDigit>; 2],
    /// Tight ground-truth box per occupied slot, in canvas pixels.
    pub boxes: [Option<BBox>; 2],
}

impl MultiSample {
    pub fn present(&self) -> [bool; NUM_DIGITS] {
        let mut p = [false; NUM_DIGITS];
        for s in self.slots.iter().flatten() {
            p[s.digit as usize] = true;
        }
        p
    }

    pub fn digit_count(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    /// Ground-truth boxes of every instance of `digit`.
    pub fn boxes_for(&self, digit: u8) -> Vec<BBox> {
        self.slots
            .iter()
            .zip(&self.boxes)
            .filter_map(|(s, b)| match (s, b) {
                (Some(s), Some(b)) if s.digit == digit => Some(*b),
                _ => None,
            })
            .collect()
    }

    /// Row-major 28x56 canvas in `[0, 1]`.
    pub fn render<T: Scalar>(&self, src: &MnistSource) -> Vec<T> {
        let mut out = vec![T::zero(); CANVAS_HEIGHT * CANVAS_WIDTH];
        for (slot, s) in self.slots.iter().enumerate() {
            let Some(s) = s else { continue };
            let img = src.raw(s.source);
            for r in 0..DIGIT_SIDE {
                for c in 0..DIGIT_SIDE {
                    out[r * CANVAS_WIDTH + slot * DIGIT_SIDE + c] =
                        T::from_f64_lossy(img[r * DIGIT_SIDE + c] as f64 / 255.0);
                }
            }
        }
        out
    }

    pub fn image<T: Scalar>(&self, src: &MnistSource) -> Array<T> {
        Array::from_vec(vec![CANVAS_HEIGHT, CANVAS_WIDTH], self.render(src)).expect("canvas shape")
    }
}

fn place(src: &MnistSource, slot: usize, s: SlotDigit) -> Result<BBox> {
    let (c0, r0, c1, r1) = src
        .tight_box(s.source)
        .ok_or_else(|| Error::Idx(format!("source image {} is blank", s.source)))?;
    let off = (slot * DIGIT_SIDE) as f64;
    BBox::new(c0 as f64 + off, r0 as f64, c1 as f64 + off, r1 as f64, Space::ImagePixels)
}

/// Draws `cfg.count` canvases.
///
/// Per canvas: each slot is occupied with probability `p_slot`; both-empty
/// draws are rejected and redrawn. An occupied slot takes a uniformly chosen
/// digit class (among classes present in the source), then a uniformly
/// chosen image of that class.
pub fn synthesize(src: &MnistSource, cfg: &SynthConfig) -> Result<Vec<MultiSample>> {
    cfg.validate()?;
    if src.is_empty() {
        return Err(Error::Empty("MNIST source has no images".into()));
    }
    let classes: Vec<u8> = (0..NUM_DIGITS as u8).filter(|&d| !src.class_indices(d).is_empty()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.count);
    for _ in 0..cfg.count {
        let occupied = loop {
            let left = rng.random_bool(cfg.p_slot);
            let right = rng.random_bool(cfg.p_slot);
            if left || right {
                break [left, right];
            }
        };
        let mut slots = [None; 2];
        let mut boxes = [None; 2];
        for slot in 0..2 {
            if !occupied[slot] {
                continue;
            }
            let digit = classes[rng.random_range(0..classes.len())];
            let pool = src.class_indices(digit);
            let s = SlotDigit {
                digit,
                source: pool[rng.random_range(0..pool.len())],
            };
            boxes[slot] = Some(place(src, slot, s)?);
            slots[slot] = Some(s);
        }
        out.push(MultiSample { slots, boxes });
    }
    Ok(out)
}

/// Samples containing `target`, with every ground-truth box of that digit.
pub fn localization_eval_set(samples: &[MultiSample], target: u8) -> Result<Vec<(usize, Vec<BBox>)>> {
    if target as usize >= NUM_DIGITS {
        return Err(Error::InvalidArgument(format!("target {target} is not a digit")));
    }
    let set: Vec<_> = samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let boxes = s.boxes_for(target);
            (!boxes.is_empty()).then_some((i, boxes))
        })
        .collect();
    if set.is_empty() {
        return Err(Error::Empty(format!("no sample contains digit {target}")));
    }
    Ok(set)
}

/// Empirical per-label presence frequency, clamped into the open unit interval.
pub fn label_priors(samples: &[MultiSample]) -> Vec<f64> {
    let mut counts = [0usize; NUM_DIGITS];
    for s in samples {
        for (d, p) in s.present().iter().enumerate() {
            counts[d] += *p as usize;
        }
    }
    let n = samples.len().max(1) as f64;
    counts
        .iter()
        .map(|&c| (c as f64 / n).clamp(1e-6, 1.0 - 1e-6))
        .collect()
}

/// Training view: rendered canvases with presence vectors as targets.
pub struct MultiMnistSet<'a> {
    pub source: &'a MnistSource,
    pub samples: &'a [MultiSample],
}

impl<T: Scalar> Dataset<T> for MultiMnistSet<'_> {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn example(&self, index: usize) -> Example<T> {
        let s = &self.samples[index];
        Example {
            input: s.render(self.source),
            target: Target::Labels(s.present().to_vec()),
        }
    }
}

pub const DATASET_FILE: &str = "dataset.json";
const DATASET_FORMAT: &str = "infocam-multimnist/1";

/// On-disk description of a synthesized dataset. Canvases are not stored;
/// they are re-rendered from the referenced IDX source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDoc {
    pub format: String,
    pub source_images: PathBuf,
    pub source_labels: PathBuf,
    pub config: SynthConfig,
    pub canvas: [usize; 2],
    /// `(N, 2, 2)`: `[digit, source index]` per slot, `-1` when empty.
    pub slots: String,
    /// `(N, 10)` presence vector.
    pub present: String,
    /// `(N, 2, 4)`: `[x0, y0, x1, y1]` per slot, `-1` when empty.
    pub boxes: String,
}

pub fn save_dataset(
    dir: impl AsRef<Path>,
    source_images: &Path,
    source_labels: &Path,
    cfg: &SynthConfig,
    samples: &[MultiSample],
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = samples.len();
    let mut slots = Vec::with_capacity(n * 4);
    let mut present = Vec::with_capacity(n * NUM_DIGITS);
    let mut boxes = Vec::with_capacity(n * 8);
    for s in samples {
        for (slot, b) in s.slots.iter().zip(&s.boxes) {
            match slot {
                Some(d) => slots.extend([d.digit as f64, d.source as f64]),
                None => slots.extend([-1.0, -1.0]),
            }
            match b {
                Some(b) => boxes.extend(b.corners()),
                None => boxes.extend([-1.0; 4]),
            }
        }
        present.extend(s.present().iter().map(|&p| p as u8 as f64));
    }
    npy::write_array(dir.join("slots.npy"), &Array::from_vec(vec![n, 2, 2], slots)?, Dtype::F64)?;
    npy::write_array(dir.join("present.npy"), &Array::from_vec(vec![n, NUM_DIGITS], present)?, Dtype::F64)?;
    npy::write_array(dir.join("boxes.npy"), &Array::from_vec(vec![n, 2, 4], boxes)?, Dtype::F64)?;
    let doc = DatasetDoc {
        format: DATASET_FORMAT.into(),
        source_images: source_images.to_path_buf(),
        source_labels: source_labels.to_path_buf(),
        config: *cfg,
        canvas: [CANVAS_HEIGHT, CANVAS_WIDTH],
        slots: "slots.npy".into(),
        present: "present.npy".into(),
        boxes: "boxes.npy".into(),
    };
    let path = dir.join(DATASET_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a dataset and its source, re-deriving and cross-checking every
/// label vector and box against the source images.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(MnistSource, Vec<MultiSample>, DatasetDoc)> {
    let dir = dir.as_ref();
    let path = dir.join(DATASET_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: DatasetDoc = serde_json::from_str(&text)?;
    if doc.format != DATASET_FORMAT {
        return Err(Error::Manifest(format!("unknown dataset format {:?}", doc.format)));
    }
    let src = load_idx(dir.join(&doc.source_images), dir.join(&doc.source_labels))?;
    let slots = npy::read_array(dir.join(&doc.slots))?;
    let present = npy::read_array(dir.join(&doc.present))?;
    let boxes = npy::read_array(dir.join(&doc.boxes))?;
    let n = slots.shape().first().copied().unwrap_or(0);
    if slots.shape() != [n, 2, 2] || present.shape() != [n, NUM_DIGITS] || boxes.shape() != [n, 2, 4] {
        return Err(Error::ShapeMismatch("dataset arrays disagree on sample count".into()));
    }

    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = MultiSample {
            slots: [None; 2],
            boxes: [None; 2],
        };
        for slot in 0..2 {
            let digit = slots.get(&[i, slot, 0]);
            let source = slots.get(&[i, slot, 1]);
            if digit < 0.0 {
                continue;
            }
            let sd = SlotDigit {
                digit: digit as u8,
                source: source as usize,
            };
            if sd.source >= src.len() || src.label(sd.source) != sd.digit {
                return Err(Error::Manifest(format!("sample {i}: slot {slot} does not match the source")));
            }
            let b = place(&src, slot, sd)?;
            let stored: Vec<f64> = (0..4).map(|j| boxes.get(&[i, slot, j])).collect();
            if stored != b.corners() {
                return Err(Error::Manifest(format!("sample {i}: stored box differs from the source")));
            }
            s.slots[slot] = Some(sd);
            s.boxes[slot] = Some(b);
        }
        if s.digit_count() == 0 {
            return Err(Error::Manifest(format!("sample {i} is empty")));
        }
        let p = s.present();
        if (0..NUM_DIGITS).any(|d| (present.get(&[i, d]) != 0.0) != p[d]) {
            return Err(Error::Manifest(format!("sample {i}: presence vector disagrees with slots")));
        }
        samples.push(s);
    }
    Ok((src, samples, doc))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ten tiny synthetic "digits": digit d is a filled square at a class-specific offset.
    pub(crate) fn fixture(per_class: usize) -> MnistSource {
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        for d in 0..10u8 {
            for j in 0..per_class {
                let mut img = [0u8; 784];
                let r0 = 4 + d as usize;
                let c0 = 3 + j % 5;
                for r in r0..r0 + 10 {
                    for c in c0..c0 + 8 + d as usize % 3 {
                        img[r * 28 + c] = 255;
                    }
                }
                pixels.extend_from_slice(&img);
                labels.push(d);
            }
        }
        MnistSource::new(pixels, labels).unwrap()
    }

    #[test]
    fn idx_round_trip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let src = MnistSource::new(
            (0..3 * 784).map(|i| (i % 256) as u8).collect(),
            vec![1, 7, 7],
        )
        .unwrap();
        write_idx(&src, dir.path().join("i"), dir.path().join("l")).unwrap();
        let back = load_idx(dir.path().join("i"), dir.path().join("l")).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back, src);
        assert_eq!(back.pixel(0, 9, 3), 1.0); // byte 255 at flat index 255
        assert_eq!(back.images::<f64>().shape(), &[3, 28, 28]);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let src = MnistSource::new(vec![0; 2 * 784], vec![1, 2]).unwrap();
        let other = MnistSource::new(vec![0; 3 * 784], vec![1, 2, 3]).unwrap();
        write_idx(&src, dir.path().join("i"), dir.path().join("l")).unwrap();
        write_idx(&other, dir.path().join("i3"), dir.path().join("l3")).unwrap();
        assert!(load_idx(dir.path().join("i"), dir.path().join("l3")).is_err());
        // labels file passed as images file: wrong magic
        assert!(load_idx(dir.path().join("l"), dir.path().join("l")).is_err());
        let bytes = std::fs::read(dir.path().join("i")).unwrap();
        std::fs::write(dir.path().join("short"), &bytes[..bytes.len() - 10]).unwrap();
        assert!(load_idx(dir.path().join("short"), dir.path().join("l")).is_err());
    }

    #[test]
    fn synthesis_invariants() {
        let src = fixture(4);
        let cfg = SynthConfig {
            seed: 3,
            count: 500,
            p_slot: 0.7,
        };
        let samples = synthesize(&src, &cfg).unwrap();
        assert_eq!(samples.len(), 500);
        for s in &samples {
            assert!(s.digit_count() >= 1);
            for (slot, (d, b)) in s.slots.iter().zip(&s.boxes).enumerate() {
                assert_eq!(d.is_some(), b.is_some());
                if let (Some(d), Some(b)) = (d, b) {
                    assert_eq!(src.label(d.source), d.digit);
                    let lo = (slot * 28) as f64;
                    assert!(b.x0 >= lo && b.x1 <= lo + 28.0 && b.y1 <= 28.0);
                }
            }
        }
        assert_eq!(samples, synthesize(&src, &cfg).unwrap());
    }

    #[test]
    fn certain_slots_always_pair() {
        let src = fixture(2);
        let cfg = SynthConfig {
            seed: 1,
            count: 200,
            p_slot: 1.0,
        };
        assert!(synthesize(&src, &cfg).unwrap().iter().all(|s| s.digit_count() == 2));
    }

    #[test]
    fn eval_set_geometry() {
        let src = fixture(1);
        let left_zero = MultiSample {
            slots: [Some(SlotDigit { digit: 0, source: 0 }), Some(SlotDigit { digit: 3, source: 3 })],
            boxes: [Some(place(&src, 0, SlotDigit { digit: 0, source: 0 }).unwrap()), Some(place(&src, 1, SlotDigit { digit: 3, source: 3 }).unwrap())],
        };
        let both = MultiSample {
            slots: [Some(SlotDigit { digit: 0, source: 0 }); 2],
            boxes: [
                Some(place(&src, 0, SlotDigit { digit: 0, source: 0 }).unwrap()),
                Some(place(&src, 1, SlotDigit { digit: 0, source: 0 }).unwrap()),
            ],
        };
        let none = MultiSample {
            slots: [None, Some(SlotDigit { digit: 5, source: 5 })],
            boxes: [None, Some(place(&src, 1, SlotDigit { digit: 5, source: 5 }).unwrap())],
        };
        let set = localization_eval_set(&[left_zero, both, none.clone()], 0).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set[0].1.len(), 1);
        assert!(set[0].1[0].x1 <= 28.0);
        assert_eq!(set[1].1.len(), 2);
        assert!(localization_eval_set(&[none], 0).is_err());
        assert!(localization_eval_set(&[], 11).is_err());
    }

    #[test]
    fn render_places_slots() {
        let src = fixture(1);
        let s = MultiSample {
            slots: [None, Some(SlotDigit { digit: 2, source: 2 })],
            boxes: [None, None],
        };
        let img: Vec<f64> = s.render(&src);
        assert!(img.iter().enumerate().all(|(i, &v)| v == 0.0 || i % 56 >= 28));
        assert_eq!(img.iter().filter(|&&v| v == 1.0).count(), 10 * 10);
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let src = fixture(3);
        let ip = dir.path().join("imgs");
        let lp = dir.path().join("lbls");
        write_idx(&src, &ip, &lp).unwrap();
        let cfg = SynthConfig {
            seed: 9,
            count: 50,
            p_slot: 0.7,
        };
        let samples = synthesize(&src, &cfg).unwrap();
        save_dataset(dir.path().join("ds"), &ip, &lp, &cfg, &samples).unwrap();
        let (back_src, back, doc) = load_dataset(dir.path().join("ds")).unwrap();
        assert_eq!(back_src, src);
        assert_eq!(back, samples);
        assert_eq!(doc.config, cfg);
    }

    #[test]
    fn priors_are_frequencies() {
        let src = fixture(2);
        let samples = synthesize(&src, &SynthConfig { seed: 4, count: 2000, p_slot: 0.7 }).unwrap();
        let p = label_priors(&samples);
        // each slot holds a given digit w.p. 0.1; presence is about 1 - (1 - 0.1 q)^2 with q ~ 0.77
        for v in p {
            assert!(v > 0.1 && v < 0.2, "{v}");
        }
    }
}
