//! Dense row-major tensors. Activations are rank-4 (N, C, H, W);
//! parameters use whatever rank fits them.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![F::ZERO; len] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<F>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {shape:?} does not match {} elements",
            data.len()
        );
        Self { shape: shape.to_vec(), data }
    }

    pub fn scalar(v: F) -> Self {
        Self { shape: vec![1], data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn fill(&mut self, v: F) {
        self.data.fill(v);
    }

    /// Rank-4 dimensions (N, C, H, W).
    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.shape.len(), 4, "expected rank-4 tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    /// Rank-2 dimensions (rows, cols).
    pub fn dims2(&self) -> (usize, usize) {
        assert_eq!(self.shape.len(), 2, "expected rank-2 tensor, got {:?}", self.shape);
        (self.shape[0], self.shape[1])
    }

    /// Contiguous slice holding sample `n` of a rank-4 tensor.
    pub fn sample(&self, n: usize) -> &[F] {
        let (batch, c, h, w) = self.dims4();
        debug_assert!(n < batch);
        let stride = c * h * w;
        &self.data[n * stride..(n + 1) * stride]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [F] {
        let (batch, c, h, w) = self.dims4();
        debug_assert!(n < batch);
        let stride = c * h * w;
        &mut self.data[n * stride..(n + 1) * stride]
    }
}
