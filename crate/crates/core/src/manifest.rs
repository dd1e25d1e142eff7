//! JSON manifest tying together per-sample feature stacks, the classifier
//! head and ground truth.
//!
//! ```json
//! {"samples": [{"id": "img0", "features": "img0.npy", "image_size": [224, 224],
//!               "labels": [3], "gt_boxes": [[10, 20, 110, 200]]}],
//!  "weights": "weights.npy", "num_classes": 200}
//! ```
//!
//! Any array reference may also be written as
//! `{"path": "...", "shape": [..], "dtype": "<f4"}` to declare its shape; the
//! declaration is checked against the file header. Optional keys: `"bias"`
//! (top level), `"logits"` and `"index"` (per sample; `index` selects a row
//! of a rank-4 `(N,K,H,W)` feature file).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::cam::{ClassifierHead, FeatureStack, HeadMode};
use crate::error::{Error, Result};
use crate::npy::{self, Dtype};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrayRef {
    Path(String),
    Declared {
        path: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dtype: Option<Dtype>,
    },
}

impl ArrayRef {
    fn path(&self) -> &str {
        match self {
            ArrayRef::Path(p) | ArrayRef::Declared { path: p, .. } => p,
        }
    }
}

impl From<&str> for ArrayRef {
    fn from(p: &str) -> Self {
        ArrayRef::Path(p.to_string())
    }
}

/// Serialized form of a sample entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleDoc {
    pub id: String,
    pub features: ArrayRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub image_size: [usize; 2],
    #[serde(default)]
    pub labels: Vec<usize>,
    #[serde(default)]
    pub gt_boxes: Vec<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logits: Option<ArrayRef>,
}

/// Serialized form of the whole manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub samples: Vec<SampleDoc>,
    pub weights: ArrayRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<ArrayRef>,
    pub num_classes: usize,
}

impl ManifestDoc {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A validated reference to an array file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayEntry {
    pub path: PathBuf,
    pub shape: Vec<usize>,
    pub dtype: Dtype,
}

impl ArrayEntry {
    fn resolve(root: &Path, name: &str, r: &ArrayRef) -> Result<Self> {
        let path = root.join(r.path());
        if !path.is_file() {
            return Err(Error::Manifest(format!(
                "{name}: dangling path {}",
                path.display()
            )));
        }
        let header = npy::read_header(&path)?;
        if let ArrayRef::Declared { shape, dtype, .. } = r {
            if let Some(shape) = shape {
                if *shape != header.shape {
                    return Err(Error::ShapeMismatch(format!(
                        "{name}: declared {:?} but {} holds {:?}",
                        shape,
                        path.display(),
                        header.shape
                    )));
                }
            }
            if let Some(dtype) = dtype {
                if *dtype != header.dtype {
                    return Err(Error::Manifest(format!(
                        "{name}: declared dtype {} but file holds {}",
                        dtype.descr(),
                        header.dtype.descr()
                    )));
                }
            }
        }
        Ok(ArrayEntry {
            path,
            shape: header.shape,
            dtype: header.dtype,
        })
    }

    fn load(&self) -> Result<Array<f64>> {
        let a = npy::read_array(&self.path)?;
        if a.shape() != self.shape.as_slice() {
            return Err(Error::ShapeMismatch(format!(
                "{} changed since validation",
                self.path.display()
            )));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleEntry {
    pub id: String,
    pub features: ArrayEntry,
    pub index: Option<usize>,
    /// `(height, width)` of the source image in pixels.
    pub image_size: [usize; 2],
    pub labels: Vec<usize>,
    pub gt_boxes: Vec<[f64; 4]>,
    pub logits: Option<ArrayEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub num_classes: usize,
    pub weights: ArrayEntry,
    pub bias: Option<ArrayEntry>,
    pub samples: Vec<SampleEntry>,
}

/// Loads and cross-checks a manifest. Relative paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    for key in ["samples", "weights", "num_classes"] {
        if value.get(key).is_none() {
            return Err(Error::Manifest(format!("missing entry {key:?}")));
        }
    }
    let doc: ManifestDoc = serde_json::from_value(value)?;
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    validate(root, doc)
}

fn validate(root: PathBuf, doc: ManifestDoc) -> Result<Manifest> {
    let m = doc.num_classes;
    if m == 0 {
        return Err(Error::Manifest("num_classes must be positive".into()));
    }
    let weights = ArrayEntry::resolve(&root, "weights", &doc.weights)?;
    if weights.shape.len() != 2 || weights.shape[0] != m {
        return Err(Error::ShapeMismatch(format!(
            "weights must be ({m}, K), found {:?}",
            weights.shape
        )));
    }
    let k = weights.shape[1];
    let bias = doc
        .bias
        .as_ref()
        .map(|b| ArrayEntry::resolve(&root, "bias", b))
        .transpose()?;
    if let Some(b) = &bias {
        if b.shape != [m] {
            return Err(Error::ShapeMismatch(format!("bias must be ({m},), found {:?}", b.shape)));
        }
    }

    let mut samples = Vec::with_capacity(doc.samples.len());
    for s in doc.samples {
        let name = format!("sample {:?} features", s.id);
        let features = ArrayEntry::resolve(&root, &name, &s.features)?;
        let channels = match (features.shape.len(), s.index) {
            (3, None) => features.shape[0],
            (3, Some(_)) => {
                return Err(Error::Manifest(format!("{name}: index given for a rank-3 file")))
            }
            (4, index) => {
                let n = features.shape[0];
                let i = index.unwrap_or(0);
                if index.is_none() && n != 1 {
                    return Err(Error::Manifest(format!(
                        "{name}: rank-4 file with {n} rows needs an index"
                    )));
                }
                if i >= n {
                    return Err(Error::Manifest(format!("{name}: index {i} out of {n} rows")));
                }
                features.shape[1]
            }
            (r, _) => {
                return Err(Error::ShapeMismatch(format!("{name}: expected rank 3 or 4, found rank {r}")))
            }
        };
        if channels != k {
            return Err(Error::ShapeMismatch(format!(
                "{name}: {channels} channels but weights have K={k}"
            )));
        }
        if features.shape.contains(&0) {
            return Err(Error::ShapeMismatch(format!("{name}: zero extent {:?}", features.shape)));
        }
        if s.image_size.contains(&0) {
            return Err(Error::Manifest(format!("sample {:?}: zero image size", s.id)));
        }
        if let Some(&l) = s.labels.iter().find(|&&l| l >= m) {
            return Err(Error::LabelOutOfRange { label: l, classes: m });
        }
        for b in &s.gt_boxes {
            if !(b.iter().all(|v| v.is_finite() && *v >= 0.0) && b[0] < b[2] && b[1] < b[3]) {
                return Err(Error::Manifest(format!("sample {:?}: invalid box {b:?}", s.id)));
            }
        }
        let logits = s
            .logits
            .as_ref()
            .map(|l| ArrayEntry::resolve(&root, &format!("sample {:?} logits", s.id), l))
            .transpose()?;
        if let Some(l) = &logits {
            if l.shape != [m] {
                return Err(Error::ShapeMismatch(format!(
                    "sample {:?} logits must be ({m},), found {:?}",
                    s.id, l.shape
                )));
            }
        }
        samples.push(SampleEntry {
            id: s.id,
            features,
            index: s.index,
            image_size: s.image_size,
            labels: s.labels,
            gt_boxes: s.gt_boxes,
            logits,
        });
    }

    Ok(Manifest {
        root,
        num_classes: m,
        weights,
        bias,
        samples,
    })
}

impl Manifest {
    pub fn head(&self, mode: HeadMode) -> Result<ClassifierHead<f64>> {
        let weights = self.weights.load()?;
        let bias = self.bias.as_ref().map(|b| b.load()).transpose()?;
        ClassifierHead::new(weights, bias.map(Array::into_vec), mode)
    }

    pub fn features(&self, sample: &SampleEntry) -> Result<FeatureStack<f64>> {
        let a = sample.features.load()?;
        if a.ndim() == 3 {
            return FeatureStack::new(a);
        }
        let (k, h, w) = (a.shape()[1], a.shape()[2], a.shape()[3]);
        let i = sample.index.unwrap_or(0);
        let stride = k * h * w;
        let row = a.data()[i * stride..(i + 1) * stride].to_vec();
        FeatureStack::new(Array::from_vec(vec![k, h, w], row)?)
    }

    pub fn logits(&self, sample: &SampleEntry) -> Result<Option<Vec<f64>>> {
        sample
            .logits
            .as_ref()
            .map(|l| l.load().map(Array::into_vec))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, shape: Vec<usize>) {
        let n = shape.iter().product();
        let a = Array::from_vec(shape, (0..n).map(|i| i as f64 * 0.25).collect()).unwrap();
        npy::write_array(dir.join(name), &a, Dtype::F32).unwrap();
    }

    fn doc_with(features: ArrayRef) -> ManifestDoc {
        ManifestDoc {
            samples: vec![SampleDoc {
                id: "s0".into(),
                features,
                index: None,
                image_size: [32, 32],
                labels: vec![1],
                gt_boxes: vec![[0.0, 0.0, 8.0, 8.0]],
                logits: None,
            }],
            weights: "w.npy".into(),
            bias: None,
            num_classes: 2,
        }
    }

    #[test]
    fn single_feature_entry() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "f.npy", vec![3, 4, 4]);
        write(dir.path(), "w.npy", vec![2, 3]);
        doc_with("f.npy".into()).save(dir.path().join("m.json")).unwrap();
        let m = load_manifest(dir.path().join("m.json")).unwrap();
        assert_eq!(m.samples.len(), 1);
        assert_eq!(m.samples[0].features.shape, vec![3, 4, 4]);
        assert_eq!(m.samples[0].features.dtype, Dtype::F32);
        let fs = m.features(&m.samples[0]).unwrap();
        assert_eq!((fs.channels(), fs.height(), fs.width()), (3, 4, 4));
    }

    #[test]
    fn declared_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "f.npy", vec![4]);
        write(dir.path(), "w.npy", vec![2, 3]);
        let r = ArrayRef::Declared {
            path: "f.npy".into(),
            shape: Some(vec![2, 2]),
            dtype: None,
        };
        doc_with(r).save(dir.path().join("m.json")).unwrap();
        assert!(matches!(
            load_manifest(dir.path().join("m.json")),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn dangling_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "w.npy", vec![2, 3]);
        doc_with("nope.npy".into()).save(dir.path().join("m.json")).unwrap();
        let err = load_manifest(dir.path().join("m.json")).unwrap_err();
        assert!(err.to_string().contains("dangling"), "{err}");

        std::fs::write(dir.path().join("m2.json"), r#"{"samples": []}"#).unwrap();
        let err = load_manifest(dir.path().join("m2.json")).unwrap_err();
        assert!(err.to_string().contains("missing entry"), "{err}");
    }

    #[test]
    fn rank4_rows() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "batch.npy", vec![2, 3, 2, 2]);
        write(dir.path(), "w.npy", vec![2, 3]);
        let mut doc = doc_with("batch.npy".into());
        doc.samples[0].index = Some(1);
        doc.save(dir.path().join("m.json")).unwrap();
        let m = load_manifest(dir.path().join("m.json")).unwrap();
        let fs = m.features(&m.samples[0]).unwrap();
        // row 1 starts at flat index 12
        assert_eq!(fs.at(0, 0, 0), 12.0 * 0.25);

        doc.samples[0].index = None;
        doc.save(dir.path().join("m.json")).unwrap();
        assert!(load_manifest(dir.path().join("m.json")).is_err());
    }

    #[test]
    fn channel_count_cross_checked() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "f.npy", vec![5, 4, 4]);
        write(dir.path(), "w.npy", vec![2, 3]);
        doc_with("f.npy".into()).save(dir.path().join("m.json")).unwrap();
        assert!(matches!(
            load_manifest(dir.path().join("m.json")),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
