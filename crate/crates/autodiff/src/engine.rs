//! Reverse sweep.
//!
//! Every vector-Jacobian product below is expressed with tensor primitives.
//! Under `create_graph` the sweep runs with recording enabled, so the
//! returned gradients carry their own graph and can be differentiated again.

use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use crate::error::{AutodiffError, Result};
use crate::tensor::{set_grad_enabled, Op, Tensor};

/// Nodes reachable from `root` through gradient-carrying edges, in reverse topological order.
fn reverse_topological(root: &Tensor) -> Vec<Tensor> {
    let mut seen = HashSet::new();
    let mut stack = vec![root.clone()];
    let mut nodes = Vec::new();
    seen.insert(root.id());
    while let Some(t) = stack.pop() {
        if let Some(op) = &t.0.op {
            for p in op.parents() {
                if p.requires_grad() && seen.insert(p.id()) {
                    stack.push(p.clone());
                }
            }
        }
        nodes.push(t);
    }
    // Parents are always created before children, so ids order the graph.
    nodes.sort_unstable_by_key(|t| std::cmp::Reverse(t.id()));
    nodes
}

/// Gradients of `node`'s parents given the gradient `g` flowing into `node`.
fn vjp(node: &Tensor, g: &Tensor) -> Vec<Option<Tensor>> {
    let op = node.0.op.as_ref().expect("vjp on a leaf");
    let needs = |t: &Tensor| t.requires_grad();
    let when = |t: &Tensor, f: &dyn Fn() -> Tensor| if needs(t) { Some(f()) } else { None };
    match op {
        Op::Add(a, b) => vec![when(a, &|| g.clone()), when(b, &|| g.clone())],
        Op::Sub(a, b) => vec![when(a, &|| g.clone()), when(b, &|| g.neg())],
        Op::Mul(a, b) => vec![when(a, &|| g.mul_raw(b)), when(b, &|| g.mul_raw(a))],
        Op::MulConst(_, mask) => vec![Some(g.mul_const_raw(Rc::clone(mask)))],
        Op::Neg(_) => vec![Some(g.neg())],
        Op::Scale(_, c) => vec![Some(g.scale(*c))],
        Op::AddScalar(_) => vec![Some(g.clone())],
        Op::Expand(a) => vec![Some(g.sum().reshape_raw(a.shape()))],
        Op::Sum(a) => vec![Some(g.expand_raw(a.shape()))],
        Op::SumAxis(a, axis) => vec![Some(g.repeat_axis_raw(*axis, a.shape()[*axis]))],
        Op::RepeatAxis(_, axis) => vec![Some(g.sum_axis_raw(*axis))],
        Op::Reshape(a) => vec![Some(g.reshape_raw(a.shape()))],
        Op::Transpose(_) => vec![Some(g.transpose_raw())],
        Op::MatMul(a, b) => vec![
            when(a, &|| g.matmul_raw(&b.transpose_raw())),
            when(b, &|| a.transpose_raw().matmul_raw(g)),
        ],
        Op::LeakyRelu(a, slope) => {
            let mask = a
                .data()
                .iter()
                .map(|&x| if x >= 0.0 { 1.0 } else { *slope })
                .collect();
            vec![Some(g.mul_const_raw(Rc::new(mask)))]
        }
        Op::Relu(a) => {
            let mask = a.data().iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
            vec![Some(g.mul_const_raw(Rc::new(mask)))]
        }
        Op::Abs(a) => {
            let mask = a.data().iter().map(|&x| x.signum() * (x != 0.0) as u8 as f64).collect();
            vec![Some(g.mul_const_raw(Rc::new(mask)))]
        }
        Op::Powf(a, p) => {
            let p = *p;
            let local = if p == 1.0 {
                return vec![Some(g.clone())];
            } else if p == 2.0 {
                a.scale(2.0)
            } else {
                a.powf(p - 1.0).scale(p)
            };
            vec![Some(g.mul_raw(&local))]
        }
        Op::Exp(a) => vec![Some(g.mul_raw(&a.exp()))],
        Op::Ln(a) => vec![Some(g.mul_raw(&a.powf(-1.0)))],
        Op::Concat(parts, axis) => {
            let mut start = 0;
            parts
                .iter()
                .map(|p| {
                    let len = p.shape()[*axis];
                    let s = start;
                    start += len;
                    when(p, &|| g.slice_raw(*axis, s, len))
                })
                .collect()
        }
        Op::Slice(a, axis, start) => {
            let axis = *axis;
            let total = a.shape()[axis];
            let len = node.shape()[axis];
            let mut pieces = Vec::with_capacity(3);
            let zeros_along = |n: usize| {
                let mut shape = a.shape().to_vec();
                shape[axis] = n;
                Tensor::zeros(&shape)
            };
            if *start > 0 {
                pieces.push(zeros_along(*start));
            }
            pieces.push(g.clone());
            if start + len < total {
                pieces.push(zeros_along(total - start - len));
            }
            vec![Some(Tensor::concat_raw(&pieces, axis))]
        }
        Op::LogSoftmax(a) => {
            let c = a.shape()[1];
            let probs = a.log_softmax_raw().exp();
            let row_sums = g.sum_axis_raw(1).repeat_axis_raw(1, c);
            vec![Some(g.sub_raw(&probs.mul_raw(&row_sums)))]
        }
    }
}

fn accumulate(grads: &mut HashMap<u64, Tensor>, t: &Tensor, g: Tensor) {
    match grads.remove(&t.id()) {
        Some(prev) => {
            grads.insert(t.id(), prev.add_raw(&g));
        }
        None => {
            grads.insert(t.id(), g);
        }
    }
}

/// Runs the sweep from a scalar root. Returns (node, gradient) for every reached
/// leaf and for every node listed in `keep`.
fn sweep(
    root: &Tensor,
    create_graph: bool,
    keep: &HashSet<u64>,
) -> HashMap<u64, (Tensor, Tensor)> {
    let _mode = set_grad_enabled(create_graph);
    let mut grads: HashMap<u64, Tensor> = HashMap::new();
    grads.insert(root.id(), Tensor::ones(root.shape()));
    let mut kept = HashMap::new();
    for node in reverse_topological(root) {
        let Some(g) = grads.remove(&node.id()) else {
            continue;
        };
        if node.0.op.is_some() {
            let parents = node.0.op.as_ref().map(Op::parents).unwrap_or_default();
            for (parent, pg) in parents.into_iter().zip(vjp(&node, &g)) {
                if let Some(pg) = pg {
                    if parent.requires_grad() {
                        accumulate(&mut grads, parent, pg);
                    }
                }
            }
        }
        if keep.contains(&node.id()) || node.0.op.is_none() {
            kept.insert(node.id(), (node, g));
        }
    }
    kept
}

fn check_root(op: &'static str, root: &Tensor) -> Result<()> {
    if root.numel() != 1 {
        return Err(AutodiffError::NotScalar {
            op,
            shape: root.shape().to_vec(),
        });
    }
    Ok(())
}

impl Tensor {
    /// Accumulates d(self)/d(leaf) into every gradient-tracking leaf reachable from `self`.
    ///
    /// Repeated calls accumulate; use [`Tensor::zero_grad`] to reset.
    pub fn backward(&self) -> Result<()> {
        check_root("backward", self)?;
        if !self.requires_grad() {
            return Ok(());
        }
        for (node, g) in sweep(self, false, &HashSet::new()).into_values() {
            if node.is_leaf() {
                node.accumulate_grad(g.data());
            }
        }
        Ok(())
    }
}

/// Gradients of the scalar `output` with respect to each of `inputs`.
///
/// Leaf accumulators are not touched. With `create_graph` the returned
/// tensors are recorded on the graph and can be differentiated again.
/// Inputs the output does not depend on receive zeros.
pub fn grad(output: &Tensor, inputs: &[&Tensor], create_graph: bool) -> Result<Vec<Tensor>> {
    check_root("grad", output)?;
    let keep: HashSet<u64> = inputs.iter().map(|t| t.id()).collect();
    let grads = if output.requires_grad() {
        sweep(output, create_graph, &keep)
    } else {
        HashMap::new()
    };
    Ok(inputs
        .iter()
        .map(|t| {
            grads
                .get(&t.id())
                .map(|(_, g)| g.clone())
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect())
}

/// Gradient of a per-row scalar function with respect to its rank-2 input.
///
/// `output` must be `[B×1]` (one value per row of `input`, which is `[B×d]`).
/// Rows are treated as independent, so the gradient of the summed output is
/// the stack of per-row gradients. The result is graph-recorded so that
/// penalties built from it are differentiable.
pub fn grad_per_row(output: &Tensor, input: &Tensor) -> Result<Tensor> {
    let ok = output.rank() == 2
        && output.shape()[1] == 1
        && input.rank() == 2
        && output.shape()[0] == input.shape()[0];
    if !ok {
        return Err(AutodiffError::ShapeMismatch {
            op: "grad_per_row",
            left: output.shape().to_vec(),
            right: input.shape().to_vec(),
        });
    }
    let mut g = grad(&output.sum(), &[input], true)?;
    Ok(g.remove(0))
}
