//! Distances and norms built from the primitives.

use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

/// Added under every square root so that gradients stay finite at coincident points.
pub const SQRT_EPS: f64 = 1e-12;

fn same_shape(op: &'static str, u: &Tensor, v: &Tensor) -> Result<()> {
    if u.shape() != v.shape() {
        return Err(AutodiffError::ShapeMismatch {
            op,
            left: u.shape().to_vec(),
            right: v.shape().to_vec(),
        });
    }
    Ok(())
}

/// `sqrt(Σ(uᵢ−vᵢ)² + ε)` over all elements.
pub fn euclidean_distance(u: &Tensor, v: &Tensor) -> Result<Tensor> {
    same_shape("euclidean_distance", u, v)?;
    Ok(u.sub(v)?.square().sum().add_scalar(SQRT_EPS).sqrt())
}

/// Row-wise Euclidean distances of two `[B×d]` tensors, as `[B×1]`.
pub fn row_distances(u: &Tensor, v: &Tensor) -> Result<Tensor> {
    same_shape("row_distances", u, v)?;
    if u.rank() != 2 {
        return Err(AutodiffError::Rank {
            op: "row_distances",
            expected: 2,
            shape: u.shape().to_vec(),
        });
    }
    row_norms(&u.sub(v)?)
}

/// Row-wise L2 norms of a `[B×d]` tensor, as `[B×1]`.
pub fn row_norms(t: &Tensor) -> Result<Tensor> {
    Ok(t.square().sum_axis(1)?.add_scalar(SQRT_EPS).sqrt())
}

/// Row-wise L1 norms of a `[B×d]` tensor, as `[B×1]`.
pub fn row_l1(t: &Tensor) -> Result<Tensor> {
    t.abs().sum_axis(1)
}

pub fn l1(t: &Tensor) -> Tensor {
    t.abs().sum()
}

pub fn l2(t: &Tensor) -> Tensor {
    t.square().sum().add_scalar(SQRT_EPS).sqrt()
}

pub fn l2_squared(t: &Tensor) -> Tensor {
    t.square().sum()
}
