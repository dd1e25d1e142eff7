//! Weakly supervised object localization with class activation maps.
//!
//! The pipeline: a GAP-headed CNN produces a feature stack; [`cam`] turns it
//! into per-class intensity maps (plain CAM, infoCAM, infoCAM+); [`localize`]
//! thresholds a map, keeps the largest connected region and scores the
//! resulting box. [`nn`] trains such a network from scratch and
//! [`multimnist`] synthesizes the double-digit data it is trained on.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the 64-bit reference precision.

pub mod array;
pub mod cam;
pub mod error;
pub mod eval;
pub mod localize;
pub mod manifest;
pub mod multimnist;
pub mod nn;
pub mod npy;
pub mod pnm;
pub mod scalar;

pub use array::Array;
pub use cam::{ClassifierHead, FeatureStack, HeadMode, InfoCamOptions, IntensityMap, MapKind, RegionSpec};
pub use error::{Error, ErrorKind, Result};
pub use localize::{BBox, BoxConfig, Connectivity, Space, ThresholdMode};
pub use scalar::Scalar;

pub type Array64 = Array<f64>;
pub type Array32 = Array<f32>;
pub type FeatureStack64 = FeatureStack<f64>;
pub type ClassifierHead64 = ClassifierHead<f64>;
pub type IntensityMap64 = IntensityMap<f64>;
pub type Network64 = nn::Network<f64>;
pub type Network32 = nn::Network<f32>;
