use crate::error::{Error, Result};
use crate::nn::kernels::{self as k, ConvParams};
use crate::nn::{Backend, Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, params: ConvParams },
    ConvTranspose2 { x: Var, w: Var, b: Var },
    MaxPool2 { x: Var, argmax: Vec<u32> },
    LeakyRelu { x: Var, slope: f64 },
    Concat { a: Var, b: Var, a_channels: usize },
    PixelShuffle { x: Var, r: usize },
    SpaceToDepth { x: Var, r: usize },
    L1 { pred: Var, target: Var },
    L2 { pred: Var, target: Var },
    SsimLoss { pred: Var, target: Var },
    WeightedSum { x: Var, weights: Tensor<T> },
}

struct Node<T> {
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    op: Op<T>,
}

/// Append-only operation record. Nodes are stored in creation order, which is
/// a topological order, so the backward pass is a single reverse sweep.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite(name));
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn space_to_depth(&mut self, x: Var, r: usize) -> Result<Var> {
        let y = k::space_to_depth(self.value(x), r)?;
        self.push("space_to_depth", y, &[x], Op::SpaceToDepth { x, r })
    }

    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let v = k::l1_forward(self.value(pred), self.value(target))?;
        self.push("l1_loss", Tensor::scalar(v), &[pred, target], Op::L1 { pred, target })
    }

    pub fn l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let v = k::l2_forward(self.value(pred), self.value(target))?;
        self.push("l2_loss", Tensor::scalar(v), &[pred, target], Op::L2 { pred, target })
    }

    pub fn ssim_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let v = k::ssim_loss_forward(self.value(pred), self.value(target))?;
        self.push("ssim_loss", Tensor::scalar(v), &[pred, target], Op::SsimLoss { pred, target })
    }

    pub fn weighted_sum(&mut self, x: Var, weights: Tensor<T>) -> Result<Var> {
        let v = k::weighted_sum_forward(self.value(x), &weights)?;
        self.push("weighted_sum", Tensor::scalar(v), &[x], Op::WeightedSum { x, weights })
    }

    /// Propagates d(loss)/d(node) to every node that requires a gradient.
    /// Gradients from an earlier pass are discarded first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        for n in self.nodes.iter_mut() {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::full(self.nodes[loss.0].value.shape(), T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.input_grads(i, &g)?;
            self.nodes[i].grad = Some(g);
            for (v, t) in contributions {
                let node = &mut self.nodes[v.0];
                if !node.requires_grad {
                    continue;
                }
                match node.grad.as_mut() {
                    Some(acc) => acc.add_assign(&t),
                    None => node.grad = Some(t),
                }
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn input_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let val = |v: Var| &self.nodes[v.0].value;
        let out = match &self.nodes[i].op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { x, w, b, params } => {
                let (gx, gw, gb) = k::conv2d_backward(val(*x), val(*w), g, *params)?;
                vec![(*x, gx), (*w, gw), (*b, gb)]
            }
            Op::ConvTranspose2 { x, w, b } => {
                let (gx, gw, gb) = k::conv_transpose2_backward(val(*x), val(*w), g)?;
                vec![(*x, gx), (*w, gw), (*b, gb)]
            }
            Op::MaxPool2 { x, argmax } => {
                vec![(*x, k::maxpool2_backward(val(*x).shape(), argmax, g)?)]
            }
            Op::LeakyRelu { x, slope } => vec![(*x, k::leaky_relu_backward(val(*x), g, *slope))],
            Op::Concat { a, b, a_channels } => {
                let (ga, gb) = k::split_channels(g, *a_channels)?;
                vec![(*a, ga), (*b, gb)]
            }
            Op::PixelShuffle { x, r } => vec![(*x, k::space_to_depth(g, *r)?)],
            Op::SpaceToDepth { x, r } => vec![(*x, k::pixel_shuffle(g, *r)?)],
            Op::L1 { pred, target } => {
                let gp = k::l1_backward(val(*pred), val(*target), g.item());
                let mut v = Vec::new();
                if self.needs(*target) {
                    v.push((*target, gp.map(|e| -e)));
                }
                v.push((*pred, gp));
                v
            }
            Op::L2 { pred, target } => {
                let gp = k::l2_backward(val(*pred), val(*target), g.item());
                let mut v = Vec::new();
                if self.needs(*target) {
                    v.push((*target, gp.map(|e| -e)));
                }
                v.push((*pred, gp));
                v
            }
            Op::SsimLoss { pred, target } => {
                let (gp, gt) = k::ssim_loss_backward(val(*pred), val(*target), g.item())?;
                vec![(*pred, gp), (*target, gt)]
            }
            Op::WeightedSum { x, weights } => {
                let s = g.item();
                vec![(*x, weights.map(|w| w * s))]
            }
        };
        Ok(out)
    }
}

impl<T: Scalar> Backend<T> for Tape<T> {
    type Value = Var;

    fn conv2d(&mut self, x: &Var, w: &Var, b: &Var, params: ConvParams) -> Result<Var> {
        let y = k::conv2d_forward(self.value(*x), self.value(*w), self.value(*b), params)?;
        let (x, w, b) = (*x, *w, *b);
        self.push("conv2d", y, &[x, w, b], Op::Conv2d { x, w, b, params })
    }

    fn conv_transpose2(&mut self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let y = k::conv_transpose2_forward(self.value(*x), self.value(*w), self.value(*b))?;
        let (x, w, b) = (*x, *w, *b);
        self.push("conv_transpose2", y, &[x, w, b], Op::ConvTranspose2 { x, w, b })
    }

    fn maxpool2(&mut self, x: &Var) -> Result<Var> {
        let (y, argmax) = k::maxpool2_forward(self.value(*x))?;
        self.push("maxpool2", y, &[*x], Op::MaxPool2 { x: *x, argmax })
    }

    fn leaky_relu(&mut self, x: &Var, slope: f64) -> Result<Var> {
        let y = k::leaky_relu_forward(self.value(*x), slope);
        self.push("leaky_relu", y, &[*x], Op::LeakyRelu { x: *x, slope })
    }

    fn concat_channels(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let y = k::concat_channels_forward(self.value(*a), self.value(*b))?;
        let a_channels = self.value(*a).dims4()?.1;
        self.push("concat", y, &[*a, *b], Op::Concat { a: *a, b: *b, a_channels })
    }

    fn pixel_shuffle(&mut self, x: &Var, r: usize) -> Result<Var> {
        let y = k::pixel_shuffle(self.value(*x), r)?;
        self.push("pixel_shuffle", y, &[*x], Op::PixelShuffle { x: *x, r })
    }

    fn shape(&self, x: &Var) -> Vec<usize> {
        self.value(*x).shape().to_vec()
    }
}
