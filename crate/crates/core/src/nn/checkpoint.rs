//! Checkpoints: a JSON document plus one NPY file per parameter tensor,
//! named `layer<i>.<kind>.weight` / `layer<i>.<kind>.bias`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::{Layer, LayerSpec, Shape3};
use super::network::{LossHead, Network};
use crate::array::Array;
use crate::error::{Error, Result};
use crate::npy::{self, Dtype};
use crate::scalar::Scalar;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
const FORMAT: &str = "infocam-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format: String,
    input_shape: Shape3,
    architecture: Vec<LayerSpec>,
    head: LossHead,
    class_priors: Option<Vec<f64>>,
    params: BTreeMap<String, String>,
}

fn param_shapes(spec: &LayerSpec) -> Option<(Vec<usize>, Vec<usize>)> {
    match *spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => Some((vec![out_channels, in_channels, kernel, kernel], vec![out_channels])),
        LayerSpec::Linear {
            in_features,
            out_features,
        } => Some((vec![out_features, in_features], vec![out_features])),
        _ => None,
    }
}

fn param_name(i: usize, spec: &LayerSpec, which: &str) -> String {
    format!("layer{i}.{}.{which}", spec.kind_name())
}

/// Writes `checkpoint.json` and the parameter arrays (always `<f8`) into `dir`.
pub fn save_checkpoint<T: Scalar>(net: &Network<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut params = BTreeMap::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let Some((wshape, bshape)) = param_shapes(&layer.spec) else {
            continue;
        };
        for (which, shape, values) in [("weight", wshape, &layer.weight), ("bias", bshape, &layer.bias)] {
            let name = param_name(i, &layer.spec, which);
            let file = format!("{name}.npy");
            npy::write_array(dir.join(&file), &Array::from_vec(shape, values.clone())?, Dtype::F64)?;
            params.insert(name, file);
        }
    }
    let doc = CheckpointDoc {
        format: FORMAT.to_string(),
        input_shape: net.input_shape(),
        architecture: net.specs(),
        head: net.head(),
        class_priors: net
            .class_priors()
            .map(|p| p.iter().map(|v| v.to_f64_lossless()).collect()),
        params,
    };
    let path = dir.join(CHECKPOINT_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load_checkpoint<T: Scalar>(dir: impl AsRef<Path>) -> Result<Network<T>> {
    let dir = dir.as_ref();
    let path = dir.join(CHECKPOINT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let doc: CheckpointDoc = serde_json::from_str(&text)?;
    if doc.format != FORMAT {
        return Err(Error::Manifest(format!("unknown checkpoint format {:?}", doc.format)));
    }
    let mut layers = Vec::with_capacity(doc.architecture.len());
    for (i, spec) in doc.architecture.iter().enumerate() {
        let mut layer = Layer::<T>::zeros(*spec);
        if let Some((wshape, bshape)) = param_shapes(spec) {
            for (which, shape) in [("weight", wshape), ("bias", bshape)] {
                let name = param_name(i, spec, which);
                let file = doc
                    .params
                    .get(&name)
                    .ok_or_else(|| Error::Manifest(format!("checkpoint is missing {name}")))?;
                let a = npy::read_array(dir.join(file))?;
                if a.shape() != shape.as_slice() {
                    return Err(Error::ShapeMismatch(format!(
                        "{name}: expected {shape:?}, found {:?}",
                        a.shape()
                    )));
                }
                let values: Vec<T> = a.data().iter().map(|&v| T::from_f64_lossy(v)).collect();
                match which {
                    "weight" => layer.weight = values,
                    _ => layer.bias = values,
                }
            }
        }
        layers.push(layer);
    }
    let priors = doc
        .class_priors
        .map(|p| p.into_iter().map(T::from_f64_lossy).collect());
    Network::from_layers(doc.input_shape, layers, doc.head, priors)
}
