use crate::{Result, TensorError};

/// Dense row-major f32 array. Plain value, no graph state, `Send + Sync`.
///
/// A rank-0 shape (`[]`) denotes a scalar holding one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(TensorError::InvalidArgument {
                context: "tensor shape",
                details: format!("dimension sizes must be positive, got {shape:?}"),
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ElementCount {
                shape,
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True for tensors holding exactly one element, whatever the rank.
    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> Result<f32> {
        if !self.is_scalar() {
            return Err(TensorError::NonScalarLoss {
                shape: self.shape.clone(),
            });
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Dimensions of a rank-4 [N, C, H, W] tensor.
    pub fn dims4(&self, context: &'static str) -> Result<[usize; 4]> {
        if self.shape.len() != 4 {
            return Err(TensorError::RankMismatch {
                context,
                expected: 4,
                got: self.shape.clone(),
            });
        }
        Ok([self.shape[0], self.shape[1], self.shape[2], self.shape[3]])
    }

    pub fn same_shape(&self, other: &Tensor, context: &'static str) -> Result<()> {
        if self.shape != other.shape {
            for (dim, (a, b)) in self.shape.iter().zip(other.shape.iter()).enumerate() {
                if a != b {
                    return Err(TensorError::DimMismatch {
                        context,
                        dim,
                        expected: *a,
                        got: *b,
                    });
                }
            }
            return Err(TensorError::RankMismatch {
                context,
                expected: self.shape.len(),
                got: other.shape.clone(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn element_count_enforced() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(TensorError::ElementCount { .. })
        ));
    }

    #[test]
    fn scalar_has_empty_shape() {
        let s = Tensor::scalar(4.0);
        assert!(s.is_scalar());
        assert_eq!(s.item().unwrap(), 4.0);
        assert_eq!(s.shape(), &[] as &[usize]);
    }

    #[test]
    fn mismatch_names_offending_dimension() {
        let a = Tensor::zeros(&[1, 5, 8, 8]);
        let b = Tensor::zeros(&[1, 6, 8, 8]);
        match a.same_shape(&b, "test") {
            Err(TensorError::DimMismatch { dim, expected, got, .. }) => {
                assert_eq!((dim, expected, got), (1, 5, 6));
            }
            other => panic!("expected DimMismatch, got {other:?}"),
        }
    }
}
