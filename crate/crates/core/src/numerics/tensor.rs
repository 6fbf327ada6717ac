//! Dense 64-bit tensors.
//!
//! Storage is canonical row-major order: the last dimension varies fastest.
//! Scalars are width-1 vectors. The checkpoint format depends on this order.

use crate::error::{shape_string, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::dimension(
                "from_vec",
                format!("shape {} needs {expect} values, got {}", shape_string(shape), data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(x: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Tensor {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::from_vec(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_scalar(&self) -> Result<f64> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::dimension(
                "as_scalar",
                format!("expected a single value, got shape {}", shape_string(&self.shape)),
            ))
        }
    }

    /// Width of a rank-1 tensor.
    pub fn expect_vector(&self, op: &'static str) -> Result<usize> {
        if self.shape.len() == 1 {
            Ok(self.shape[0])
        } else {
            Err(Error::dimension(
                op,
                format!("expected a vector, got shape {}", shape_string(&self.shape)),
            ))
        }
    }

    /// (rows, cols) of a rank-2 tensor.
    pub fn expect_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        if self.shape.len() == 2 {
            Ok((self.shape[0], self.shape[1]))
        } else {
            Err(Error::dimension(
                op,
                format!("expected a matrix, got shape {}", shape_string(&self.shape)),
            ))
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn shape_string(&self) -> String {
        shape_string(&self.shape)
    }
}
