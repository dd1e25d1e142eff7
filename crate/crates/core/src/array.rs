//! Dense row-major arrays.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense, row-major n-dimensional array.
#[derive(Debug, Clone, PartialEq)]
pub struct Array<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T> Array<T> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} holds {} elements but {} were given",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Array { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Array::from_vec(shape, self.data)
    }

    fn flat_index(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        let mut flat = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            assert!(i < n, "index {i} out of bounds for extent {n}");
            flat = flat * n + i;
        }
        flat
    }
}

impl<T: Copy> Array<T> {
    pub fn get(&self, index: &[usize]) -> T {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let i = self.flat_index(index);
        self.data[i] = value;
    }
}

impl<T: Scalar> Array<T> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Array {
            shape,
            data: vec![T::zero(); n],
        }
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Array<U> {
        Array {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossless()))
                .collect(),
        }
    }

    /// Index of the first NaN or infinity, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|v| !v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_len() {
        assert!(Array::from_vec(vec![2, 2], vec![1.0f64; 3]).is_err());
        let a = Array::from_vec(vec![2, 3], (0..6).map(f64::from).collect()).unwrap();
        assert_eq!(a.get(&[1, 2]), 5.0);
        assert_eq!(a.get(&[0, 1]), 1.0);
    }

    #[test]
    fn empty_extent() {
        let a = Array::<f64>::zeros(vec![0]);
        assert!(a.is_empty());
        assert_eq!(a.shape(), &[0]);
    }

    #[test]
    fn cast_roundtrip_through_f32() {
        let a = Array::from_vec(vec![2], vec![0.1f64, 2.5]).unwrap();
        let b: Array<f32> = a.cast();
        assert_eq!(b.data(), &[0.1f32, 2.5]);
    }
}
