//! Tape-based computation graph with reverse-mode differentiation.
//!
//! Nodes are appended eagerly: every builder method validates shapes, runs
//! the forward kernel immediately and stores the result, so the tape is
//! always topologically ordered and always holds a consistent forward state.
//! [`Graph::backward`] walks the tape once in reverse, accumulating
//! gradients; [`Graph::recompute`] re-runs the forward kernels in place,
//! which lets a caller perturb a leaf and re-evaluate without rebuilding
//! the graph (the core of finite-difference checking).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::ops;
use crate::tensor::{Shape, Tensor};
use crate::Result;

/// Handle to a node in one specific [`Graph`]. The default value points at
/// the graph's first node; it exists so arrays of ids can be initialized
/// before being filled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    },
    Relu {
        input: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Resize {
        input: NodeId,
        out_h: usize,
        out_w: usize,
    },
    GlobalAvgPool {
        input: NodeId,
    },
    Linear {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    SoftmaxBranches {
        logits: Vec<NodeId>,
    },
    Fuse {
        branches: Vec<NodeId>,
        weights: NodeId,
    },
    ChannelAffine {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
    },
    Scale {
        input: NodeId,
        factor: NodeId,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
    name: Option<String>,
    trainable: bool,
}

/// The tape. See the module docs for the lifecycle.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    shared: BTreeMap<String, NodeId>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A data leaf: not reported by [`Graph::parameters`].
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, None, false)
    }

    /// A named data leaf that finite-difference checks should perturb even
    /// though it is not a weight (e.g. a test input).
    pub fn probe_input(&mut self, value: Tensor, name: impl Into<String>) -> NodeId {
        self.push_leaf(value, Some(name.into()), true)
    }

    /// A trainable leaf (weights, biases, gains).
    pub fn parameter(&mut self, value: Tensor, name: impl Into<String>) -> NodeId {
        self.push_leaf(value, Some(name.into()), true)
    }

    /// A trainable leaf registered once per name. Repeat registrations
    /// return the original node, so a layer forwarded at several sites
    /// shares one leaf and its gradient accumulates across all uses.
    pub fn shared_parameter(&mut self, value: &Tensor, name: &str) -> NodeId {
        if let Some(&id) = self.shared.get(name) {
            return id;
        }
        let id = self.parameter(value.clone(), name);
        self.shared.insert(String::from(name), id);
        id
    }

    fn push_leaf(&mut self, value: Tensor, name: Option<String>, trainable: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            name,
            trainable,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::UnknownNode { index: id.0 });
        }
        Ok(())
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> Result<&Tensor> {
        self.check(id)?;
        Ok(&self.nodes[id.0].value)
    }

    /// Mutable access to a leaf's value; computed nodes are refused. The
    /// caller is responsible for running [`Graph::recompute`] afterwards.
    pub fn leaf_value_mut(&mut self, id: NodeId) -> Result<&mut Tensor> {
        self.check(id)?;
        if !matches!(self.nodes[id.0].op, Op::Leaf) {
            return Err(Error::NotALeaf { index: id.0 });
        }
        Ok(&mut self.nodes[id.0].value)
    }

    /// All trainable leaves in creation order, with their names.
    pub fn parameters(&self) -> impl Iterator<Item = (NodeId, &str)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| {
            if n.trainable {
                Some((NodeId(i), n.name.as_deref().unwrap_or("")))
            } else {
                None
            }
        })
    }

    fn push_op(&mut self, op: Op) -> Result<NodeId> {
        let value = self.eval(&op)?;
        self.nodes.push(Node {
            op,
            value,
            name: None,
            trainable: false,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        match op {
            Op::Leaf => unreachable!("leaves carry their value"),
            Op::Conv {
                input,
                kernel,
                bias,
                stride,
                padding,
            } => ops::conv2d(v(input), v(kernel), v(bias).data(), *stride, *padding),
            Op::Relu { input } => Ok(ops::relu(v(input))),
            Op::Add { a, b } => ops::add(v(a), v(b)),
            Op::Resize {
                input,
                out_h,
                out_w,
            } => ops::bilinear_resize(v(input), *out_h, *out_w),
            Op::GlobalAvgPool { input } => ops::global_avg_pool(v(input)),
            Op::Linear {
                input,
                weight,
                bias,
            } => ops::linear(v(input), v(weight), v(bias).data()),
            Op::SoftmaxBranches { logits } => {
                let refs: Vec<&Tensor> = logits.iter().map(v).collect();
                ops::softmax_branches(&refs)
            }
            Op::Fuse { branches, weights } => {
                let refs: Vec<&Tensor> = branches.iter().map(v).collect();
                ops::fuse(&refs, v(weights))
            }
            Op::ChannelAffine { input, gamma, beta } => {
                ops::channel_affine(v(input), v(gamma).data(), v(beta).data())
            }
            Op::Scale { input, factor } => {
                let f = v(factor);
                if f.shape().len() != 1 {
                    return Err(Error::ShapeMismatch {
                        op: "graph::scale",
                        left: f.shape(),
                        right: Shape::new(1, 1, 1, 1),
                    });
                }
                Ok(ops::scale_mul(v(input), f.data()[0]))
            }
        }
    }

    pub fn conv(
        &mut self,
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        for id in [input, kernel, bias] {
            self.check(id)?;
        }
        self.push_op(Op::Conv {
            input,
            kernel,
            bias,
            stride,
            padding,
        })
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        self.push_op(Op::Relu { input })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.check(a)?;
        self.check(b)?;
        self.push_op(Op::Add { a, b })
    }

    pub fn resize(&mut self, input: NodeId, out_h: usize, out_w: usize) -> Result<NodeId> {
        self.check(input)?;
        self.push_op(Op::Resize {
            input,
            out_h,
            out_w,
        })
    }

    pub fn global_avg_pool(&mut self, input: NodeId) -> Result<NodeId> {
        self.check(input)?;
        self.push_op(Op::GlobalAvgPool { input })
    }

    pub fn linear(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        for id in [input, weight, bias] {
            self.check(id)?;
        }
        self.push_op(Op::Linear {
            input,
            weight,
            bias,
        })
    }

    pub fn softmax_branches(&mut self, logits: &[NodeId]) -> Result<NodeId> {
        for id in logits {
            self.check(*id)?;
        }
        self.push_op(Op::SoftmaxBranches {
            logits: logits.to_vec(),
        })
    }

    pub fn fuse(&mut self, branches: &[NodeId], weights: NodeId) -> Result<NodeId> {
        for id in branches {
            self.check(*id)?;
        }
        self.check(weights)?;
        self.push_op(Op::Fuse {
            branches: branches.to_vec(),
            weights,
        })
    }

    pub fn channel_affine(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
    ) -> Result<NodeId> {
        for id in [input, gamma, beta] {
            self.check(id)?;
        }
        self.push_op(Op::ChannelAffine { input, gamma, beta })
    }

    pub fn scale(&mut self, input: NodeId, factor: NodeId) -> Result<NodeId> {
        self.check(input)?;
        self.check(factor)?;
        self.push_op(Op::Scale { input, factor })
    }

    /// Re-run every forward kernel in tape order, refreshing stored values
    /// from the current leaf contents.
    pub fn recompute(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            self.nodes[i].value = self.eval(&op)?;
        }
        Ok(())
    }

    /// Reverse-accumulate gradients from the given seed tensors.
    ///
    /// Each seed supplies `dL/d(node)` for one node; seeds for the same node
    /// accumulate. Seed shapes must match their node's value shape. Nodes
    /// the seeds cannot reach report a `None` gradient.
    pub fn backward(&self, seeds: &[(NodeId, Tensor)]) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (id, seed) in seeds {
            self.check(*id)?;
            let shape = self.nodes[id.0].value.shape();
            if seed.shape() != shape {
                return Err(Error::ShapeMismatch {
                    op: "backward::seed",
                    left: seed.shape(),
                    right: shape,
                });
            }
            accumulate(&mut grads[id.0], seed.clone());
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(upstream) = grads[i].clone() else {
                continue;
            };
            let v = |id: &NodeId| &self.nodes[id.0].value;
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Conv {
                    input,
                    kernel,
                    bias,
                    stride,
                    padding,
                } => {
                    let g =
                        ops::conv2d_backward(v(input), v(kernel), *stride, *padding, &upstream)?;
                    accumulate(&mut grads[input.0], g.input);
                    accumulate(&mut grads[kernel.0], g.kernel);
                    let bias_shape = v(bias).shape();
                    accumulate(&mut grads[bias.0], Tensor::from_vec(bias_shape, g.bias)?);
                }
                Op::Relu { input } => {
                    let g = ops::relu_backward(v(input), &upstream)?;
                    accumulate(&mut grads[input.0], g);
                }
                Op::Add { a, b } => {
                    let (ga, gb) = ops::add_backward(&upstream);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Resize { input, .. } => {
                    let g = ops::bilinear_resize_backward(v(input).shape(), &upstream)?;
                    accumulate(&mut grads[input.0], g);
                }
                Op::GlobalAvgPool { input } => {
                    let g = ops::global_avg_pool_backward(v(input).shape(), &upstream)?;
                    accumulate(&mut grads[input.0], g);
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let g = ops::linear_backward(v(input), v(weight), &upstream)?;
                    accumulate(&mut grads[input.0], g.input);
                    accumulate(&mut grads[weight.0], g.weight);
                    let bias_shape = v(bias).shape();
                    accumulate(&mut grads[bias.0], Tensor::from_vec(bias_shape, g.bias)?);
                }
                Op::SoftmaxBranches { logits } => {
                    let weights = &self.nodes[i].value;
                    let gs = ops::softmax_branches_backward(weights, &upstream)?;
                    for (logit, g) in logits.iter().zip(gs) {
                        accumulate(&mut grads[logit.0], g);
                    }
                }
                Op::Fuse { branches, weights } => {
                    let refs: Vec<&Tensor> = branches.iter().map(v).collect();
                    let g = ops::fuse_backward(&refs, v(weights), &upstream)?;
                    for (branch, gb) in branches.iter().zip(g.branches) {
                        accumulate(&mut grads[branch.0], gb);
                    }
                    accumulate(&mut grads[weights.0], g.weights);
                }
                Op::ChannelAffine { input, gamma, beta } => {
                    let g =
                        ops::channel_affine_backward(v(input), v(gamma).data(), &upstream)?;
                    accumulate(&mut grads[input.0], g.input);
                    let gamma_shape = v(gamma).shape();
                    let beta_shape = v(beta).shape();
                    accumulate(&mut grads[gamma.0], Tensor::from_vec(gamma_shape, g.gamma)?);
                    accumulate(&mut grads[beta.0], Tensor::from_vec(beta_shape, g.beta)?);
                }
                Op::Scale { input, factor } => {
                    let f = v(factor).data()[0];
                    let g = ops::scale_mul_backward(v(input), f, &upstream)?;
                    accumulate(&mut grads[input.0], g.input);
                    let factor_shape = v(factor).shape();
                    accumulate(
                        &mut grads[factor.0],
                        Tensor::from_vec(factor_shape, vec![g.factor])?,
                    );
                }
            }
        }
        Ok(Gradients {
            grads,
            node_count: self.nodes.len(),
        })
    }
}

fn accumulate(slot: &mut Option<Tensor>, delta: Tensor) {
    match slot {
        None => *slot = Some(delta),
        Some(t) => {
            debug_assert_eq!(t.shape(), delta.shape());
            for (o, &d) in t.data_mut().iter_mut().zip(delta.data()) {
                *o += d;
            }
        }
    }
}

/// Result of one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    node_count: usize,
}

impl Gradients {
    /// Gradient with respect to a node. `Ok(None)` means the node exists but
    /// no seed reaches it (its gradient is identically zero); an id from a
    /// different graph is rejected.
    pub fn wrt(&self, id: NodeId) -> Result<Option<&Tensor>> {
        if id.0 >= self.node_count {
            return Err(Error::UnknownNode { index: id.0 });
        }
        Ok(self.grads[id.0].as_ref())
    }
}
