//! Forward primitives.
//!
//! Public methods validate shapes and return `Result`; the `*_raw` variants
//! skip validation and are what the backward rules are written in, so that
//! gradients are themselves graph-recorded when `create_graph` is requested.

use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::tensor::{numel, Op, Tensor};

/// Splits `shape` around `axis` into (outer, axis length, inner) strides.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(AutodiffError::Axis {
            op,
            axis,
            shape: shape.to_vec(),
        });
    }
    Ok(())
}

fn check_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(AutodiffError::Rank {
            op,
            expected: rank,
            shape: t.shape().to_vec(),
        });
    }
    Ok(())
}

impl Tensor {
    /// Brings a rank-0 operand to the other operand's shape; otherwise shapes must match.
    fn align(&self, other: &Tensor, op: &'static str) -> Result<(Tensor, Tensor)> {
        if self.shape() == other.shape() {
            return Ok((self.clone(), other.clone()));
        }
        if other.rank() == 0 {
            return Ok((self.clone(), other.expand_raw(self.shape())));
        }
        if self.rank() == 0 {
            return Ok((self.expand_raw(other.shape()), other.clone()));
        }
        Err(AutodiffError::ShapeMismatch {
            op,
            left: self.shape().to_vec(),
            right: other.shape().to_vec(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = self.align(other, "add")?;
        Ok(a.add_raw(&b))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = self.align(other, "sub")?;
        Ok(a.sub_raw(&b))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (a, b) = self.align(other, "mul")?;
        Ok(a.mul_raw(&b))
    }

    pub(crate) fn add_raw(&self, other: &Tensor) -> Tensor {
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a + b).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Add(self.clone(), other.clone()))
    }

    pub(crate) fn sub_raw(&self, other: &Tensor) -> Tensor {
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a - b).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Sub(self.clone(), other.clone()))
    }

    pub(crate) fn mul_raw(&self, other: &Tensor) -> Tensor {
        let data = self.data().iter().zip(other.data()).map(|(a, b)| a * b).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Mul(self.clone(), other.clone()))
    }

    /// Elementwise product with a constant array of the same length.
    pub(crate) fn mul_const_raw(&self, mask: Rc<Vec<f64>>) -> Tensor {
        let data = self.data().iter().zip(mask.iter()).map(|(a, b)| a * b).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::MulConst(self.clone(), mask))
    }

    pub fn neg(&self) -> Tensor {
        let data = self.data().iter().map(|a| -a).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Neg(self.clone()))
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|a| a * c).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Scale(self.clone(), c))
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|a| a + c).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::AddScalar(self.clone()))
    }

    /// Broadcasts a single-element tensor to `shape`.
    pub fn expand(&self, shape: &[usize]) -> Result<Tensor> {
        if self.numel() != 1 {
            return Err(AutodiffError::NotScalar {
                op: "expand",
                shape: self.shape().to_vec(),
            });
        }
        Ok(self.expand_raw(shape))
    }

    pub(crate) fn expand_raw(&self, shape: &[usize]) -> Tensor {
        let data = vec![self.data()[0]; numel(shape)];
        Tensor::from_op(shape.to_vec(), data, Op::Expand(self.clone()))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self) -> Tensor {
        let total = self.data().iter().sum();
        Tensor::from_op(Vec::new(), vec![total], Op::Sum(self.clone()))
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sums along `axis`, keeping it with length 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        check_axis("sum_axis", self.shape(), axis)?;
        Ok(self.sum_axis_raw(axis))
    }

    pub(crate) fn sum_axis_raw(&self, axis: usize) -> Tensor {
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let src = self.data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    data[o * inner + i] += src[base + i];
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = 1;
        Tensor::from_op(shape, data, Op::SumAxis(self.clone(), axis))
    }

    /// Repeats a length-1 `axis` `n` times. The only non-scalar broadcast, and it is explicit.
    pub fn repeat_axis(&self, axis: usize, n: usize) -> Result<Tensor> {
        check_axis("repeat_axis", self.shape(), axis)?;
        if self.shape()[axis] != 1 || n == 0 {
            return Err(AutodiffError::Invalid(format!(
                "repeat_axis needs length 1 on axis {axis} and n > 0, got shape {:?}, n={n}",
                self.shape()
            )));
        }
        Ok(self.repeat_axis_raw(axis, n))
    }

    pub(crate) fn repeat_axis_raw(&self, axis: usize, n: usize) -> Tensor {
        let (outer, _, inner) = split_axis(self.shape(), axis);
        let src = self.data();
        let mut data = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            let row = &src[o * inner..(o + 1) * inner];
            for _ in 0..n {
                data.extend_from_slice(row);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = n;
        Tensor::from_op(shape, data, Op::RepeatAxis(self.clone(), axis))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                left: self.shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        Ok(self.reshape_raw(shape))
    }

    pub(crate) fn reshape_raw(&self, shape: &[usize]) -> Tensor {
        Tensor::from_op(shape.to_vec(), self.to_vec(), Op::Reshape(self.clone()))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        check_rank("transpose", self, 2)?;
        Ok(self.transpose_raw())
    }

    pub(crate) fn transpose_raw(&self) -> Tensor {
        let (r, c) = (self.shape()[0], self.shape()[1]);
        let src = self.data();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = src[i * c + j];
            }
        }
        Tensor::from_op(vec![c, r], data, Op::Transpose(self.clone()))
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        check_rank("matmul", self, 2)?;
        check_rank("matmul", other, 2)?;
        if self.shape()[1] != other.shape()[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: self.shape().to_vec(),
                right: other.shape().to_vec(),
            });
        }
        Ok(self.matmul_raw(other))
    }

    pub(crate) fn matmul_raw(&self, other: &Tensor) -> Tensor {
        let (m, k) = (self.shape()[0], self.shape()[1]);
        let n = other.shape()[1];
        let a = self.data();
        let b = other.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = a[i * k + p];
                let b_row = &b[p * n..(p + 1) * n];
                for (o, bv) in out_row.iter_mut().zip(b_row) {
                    *o += aip * bv;
                }
            }
        }
        Tensor::from_op(vec![m, n], out, Op::MatMul(self.clone(), other.clone()))
    }

    /// `max(x, slope * x)`; the derivative at exactly 0 is taken as 1.
    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(AutodiffError::Invalid(format!(
                "leaky_relu slope must lie in (0,1), got {slope}"
            )));
        }
        let data = self
            .data()
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            data,
            Op::LeakyRelu(self.clone(), slope),
        ))
    }

    /// `max(0, x)`; derivative 0 at x = 0.
    pub fn relu(&self) -> Tensor {
        let data = self.data().iter().map(|&x| x.max(0.0)).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Relu(self.clone()))
    }

    pub fn abs(&self) -> Tensor {
        let data = self.data().iter().map(|x| x.abs()).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Abs(self.clone()))
    }

    pub fn powf(&self, p: f64) -> Tensor {
        let data = if p == 2.0 {
            self.data().iter().map(|x| x * x).collect()
        } else {
            self.data().iter().map(|x| x.powf(p)).collect()
        };
        Tensor::from_op(self.shape().to_vec(), data, Op::Powf(self.clone(), p))
    }

    pub fn square(&self) -> Tensor {
        self.powf(2.0)
    }

    pub fn sqrt(&self) -> Tensor {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Tensor {
        let data = self.data().iter().map(|x| x.exp()).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Exp(self.clone()))
    }

    pub fn ln(&self) -> Tensor {
        let data = self.data().iter().map(|x| x.ln()).collect();
        Tensor::from_op(self.shape().to_vec(), data, Op::Ln(self.clone()))
    }

    /// Concatenates along `axis`; every other axis must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| AutodiffError::Invalid("concat of zero tensors".into()))?;
        check_axis("concat", first.shape(), axis)?;
        for p in &parts[1..] {
            let compatible = p.rank() == first.rank()
                && p
                    .shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: first.shape().to_vec(),
                    right: p.shape().to_vec(),
                });
            }
        }
        Ok(Tensor::concat_raw(parts, axis))
    }

    pub(crate) fn concat_raw(parts: &[Tensor], axis: usize) -> Tensor {
        if parts.len() == 1 {
            return parts[0].clone();
        }
        let (outer, _, inner) = split_axis(parts[0].shape(), axis);
        let total: usize = parts.iter().map(|p| p.shape()[axis]).sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let chunk = p.shape()[axis] * inner;
                data.extend_from_slice(&p.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = parts[0].shape().to_vec();
        shape[axis] = total;
        Tensor::from_op(shape, data, Op::Concat(parts.to_vec(), axis))
    }

    /// Elements `start..start+len` along `axis`.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        check_axis("slice", self.shape(), axis)?;
        if len == 0 || start + len > self.shape()[axis] {
            return Err(AutodiffError::Invalid(format!(
                "slice {start}..{} out of range for axis {axis} of {:?}",
                start + len,
                self.shape()
            )));
        }
        Ok(self.slice_raw(axis, start, len))
    }

    pub(crate) fn slice_raw(&self, axis: usize, start: usize, len: usize) -> Tensor {
        let (outer, n, inner) = split_axis(self.shape(), axis);
        let src = self.data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Tensor::from_op(shape, data, Op::Slice(self.clone(), axis, start))
    }

    /// Row-wise log-softmax of a rank-2 tensor, via the max-shifted log-sum-exp.
    pub fn log_softmax(&self) -> Result<Tensor> {
        check_rank("log_softmax", self, 2)?;
        Ok(self.log_softmax_raw())
    }

    pub(crate) fn log_softmax_raw(&self) -> Tensor {
        let c = self.shape()[1];
        let mut data = Vec::with_capacity(self.numel());
        for row in self.data().chunks(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lse));
        }
        Tensor::from_op(self.shape().to_vec(), data, Op::LogSoftmax(self.clone()))
    }

    /// Row-wise softmax probabilities.
    pub fn softmax(&self) -> Result<Tensor> {
        Ok(self.log_softmax()?.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn elementwise_basics() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, 4.0]);
        assert_eq!(a.add(&b).unwrap().data(), &[4.0, 6.0]);
        assert_eq!(a.sub(&b).unwrap().data(), &[-2.0, -2.0]);
        assert_eq!(a.mul(&b).unwrap().data(), &[3.0, 8.0]);
        assert_eq!(a.scale(0.0).data(), &[0.0, 0.0]);
        let s = Tensor::scalar(10.0);
        assert_eq!(a.mul(&s).unwrap().data(), &[10.0, 20.0]);
        assert_eq!(s.add(&a).unwrap().data(), &[11.0, 12.0]);
    }

    #[test]
    fn shape_mismatch_reports_both_shapes() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[3], &[1.0, 2.0, 3.0]);
        let err = a.add(&b).unwrap_err();
        assert_eq!(
            err,
            AutodiffError::ShapeMismatch {
                op: "add",
                left: vec![2],
                right: vec![3]
            }
        );
        assert!(err.to_string().contains("[2]") && err.to_string().contains("[3]"));
        // [1]-shaped tensors are not scalars; only rank 0 broadcasts
        assert!(a.add(&t(&[1], &[1.0])).is_err());
    }

    #[test]
    fn matmul_examples() {
        let id = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(id.matmul(&x).unwrap().data(), x.data());
        let r = t(&[1, 2], &[1.0, 2.0]).matmul(&t(&[2, 1], &[3.0, 4.0])).unwrap();
        assert_eq!(r.shape(), &[1, 1]);
        assert_eq!(r.data(), &[11.0]);
        assert!(matches!(
            x.matmul(&x),
            Err(AutodiffError::ShapeMismatch { op: "matmul", .. })
        ));
    }

    #[test]
    fn leaky_relu_examples() {
        let y = t(&[2], &[-1.0, 2.0]).leaky_relu(0.2).unwrap();
        assert!((y.data()[0] + 0.2).abs() < 1e-15);
        assert_eq!(y.data()[1], 2.0);
        assert_eq!(t(&[1], &[0.0]).leaky_relu(0.2).unwrap().data(), &[0.0]);
        assert!(t(&[1], &[0.0]).leaky_relu(1.0).is_err());
        assert!(t(&[1], &[0.0]).leaky_relu(0.0).is_err());
    }

    #[test]
    fn concat_examples() {
        let x = Tensor::ones(&[2048]);
        let a = Tensor::zeros(&[85]);
        let e = Tensor::concat(&[x, a], 0).unwrap();
        assert_eq!(e.shape(), &[2133]);
        let v = t(&[3], &[1.0, 2.0, 3.0]);
        assert_eq!(Tensor::concat(&[v.clone()], 0).unwrap().data(), v.data());
        let m1 = t(&[2, 1], &[1.0, 2.0]);
        let m2 = t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]);
        let c = Tensor::concat(&[m1.clone(), m2.clone()], 1).unwrap();
        assert_eq!(c.data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        assert!(Tensor::concat(&[m1, m2], 0).is_err());
    }

    #[test]
    fn axis_reductions() {
        let m = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m.sum_axis(0).unwrap().data(), &[5.0, 7.0, 9.0]);
        assert_eq!(m.sum_axis(1).unwrap().data(), &[6.0, 15.0]);
        let r = t(&[1, 2], &[1.0, 2.0]).repeat_axis(0, 3).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert_eq!(m.transpose().unwrap().data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(m.slice(1, 1, 2).unwrap().data(), &[2.0, 3.0, 5.0, 6.0]);
        assert!(m.sum_axis(2).is_err());
    }

    #[test]
    fn log_softmax_is_stable() {
        let z = t(&[1, 3], &[1000.0, 1000.0, 1000.0]);
        let ls = z.log_softmax().unwrap();
        for v in ls.data() {
            assert!((v + 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn constructor_validation() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(&[0, 2], vec![]).is_err());
        assert!(Tensor::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
