//! Reverse-mode differentiation over a Wengert list.
//!
//! A [`Tape`] records each primitive as it runs, keeping only the context its
//! backward rule needs. Values are reference counted, so activations the
//! caller drops are freed unless a backward rule still holds them.
//! [`Tape::backward`] consumes the tape and walks it in reverse, releasing
//! each record once its gradient has been propagated.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::ops::batchnorm::{bn_backward, bn_eval_forward, bn_train_forward, BatchStats, RunningStats};
use crate::ops::conv::{conv2d_backward, conv2d_forward};
use crate::ops::elementwise::{concat_channels, relu, relu_backward, residual_subtract, split_channels};
use crate::rng::mix64;
use crate::tensor::{Real, Shape, Tensor};

/// Handle to a value on a tape.
#[derive(Debug, Clone)]
pub struct Var<T> {
    id: usize,
    value: Rc<Tensor<T>>,
}

impl<T: Real> Var<T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shape(&self) -> Shape {
        self.value.shape()
    }

    /// The value, cloned only if the tape still shares it.
    pub fn into_value(self) -> Tensor<T> {
        Rc::try_unwrap(self.value).unwrap_or_else(|rc| (*rc).clone())
    }
}

/// Batch-norm behaviour for one tape op.
#[derive(Debug, Clone, Copy)]
pub enum BnRun<'a, T> {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with fixed running statistics.
    Eval(&'a RunningStats<T>),
}

enum Op<T> {
    Leaf,
    Conv {
        x: usize,
        w: usize,
        b: Option<usize>,
        input: Rc<Tensor<T>>,
        weight: Rc<Tensor<T>>,
        dilation: usize,
        padding: usize,
    },
    BatchNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Tensor<T>,
        inv_std: Vec<f64>,
        gamma_value: Rc<Tensor<T>>,
        train: bool,
    },
    Relu {
        x: usize,
        out: Rc<Tensor<T>>,
    },
    Concat {
        a: usize,
        b: usize,
        ca: usize,
    },
    Sub {
        y: usize,
        r: usize,
    },
}

struct Node<T> {
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    record: bool,
    relu_signature: u64,
    relu_zeros: usize,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    /// A tape that records backward context.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            record: true,
            relu_signature: 0,
            relu_zeros: 0,
        }
    }

    /// A tape that only evaluates; [`Tape::backward`] yields no gradients.
    pub fn inference() -> Self {
        Self {
            record: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hash of the sign pattern seen by every ReLU so far. Two evaluations with
    /// equal signatures followed the same linear piece of the network.
    pub fn relu_signature(&self) -> u64 {
        self.relu_signature
    }

    /// ReLU inputs that were exactly zero.
    pub fn relu_zeros(&self) -> usize {
        self.relu_zeros
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<T> {
        let (op, requires_grad) = if self.record { (op, requires_grad) } else { (Op::Leaf, false) };
        self.nodes.push(Node { op, requires_grad });
        Var {
            id: self.nodes.len() - 1,
            value: Rc::new(value),
        }
    }

    fn needs(&self, v: &Var<T>) -> bool {
        self.nodes[v.id].requires_grad
    }

    /// A value that receives no gradient (network input, targets).
    pub fn constant(&mut self, value: Tensor<T>) -> Var<T> {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn variable(&mut self, value: Tensor<T>) -> Var<T> {
        self.push(value, Op::Leaf, true)
    }

    pub fn conv2d(
        &mut self,
        x: &Var<T>,
        weight: &Var<T>,
        bias: Option<&Var<T>>,
        dilation: usize,
        padding: usize,
    ) -> Result<Var<T>> {
        let out = conv2d_forward(x.value(), weight.value(), bias.map(|b| b.value()), dilation, padding)?;
        let rg = self.needs(x) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        let op = Op::Conv {
            x: x.id,
            w: weight.id,
            b: bias.map(|b| b.id),
            input: Rc::clone(&x.value),
            weight: Rc::clone(&weight.value),
            dilation,
            padding,
        };
        Ok(self.push(out, op, rg))
    }

    /// Returns the output and, in train mode, the batch statistics for the caller
    /// to fold into its running averages.
    pub fn batchnorm(
        &mut self,
        x: &Var<T>,
        gamma: &Var<T>,
        beta: &Var<T>,
        run: BnRun<'_, T>,
        epsilon: f64,
    ) -> Result<(Var<T>, Option<BatchStats>)> {
        let (fwd, train) = match run {
            BnRun::Train => (bn_train_forward(x.value(), gamma.value(), beta.value(), epsilon)?, true),
            BnRun::Eval(rs) => (bn_eval_forward(x.value(), gamma.value(), beta.value(), rs, epsilon)?, false),
        };
        let rg = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let xhat = if self.record { fwd.xhat } else { Tensor::zeros(Shape::new(0, 0, 0, 0)) };
        let op = Op::BatchNorm {
            x: x.id,
            gamma: gamma.id,
            beta: beta.id,
            xhat,
            inv_std: fwd.inv_std,
            gamma_value: Rc::clone(&gamma.value),
            train,
        };
        Ok((self.push(fwd.out, op, rg), fwd.stats))
    }

    pub fn relu(&mut self, x: &Var<T>) -> Var<T> {
        let mut sig = self.relu_signature;
        let mut word = 0u64;
        for (i, &v) in x.value().data().iter().enumerate() {
            if v > T::zero() {
                word |= 1 << (i % 64);
            } else if v == T::zero() {
                self.relu_zeros += 1;
            }
            if i % 64 == 63 {
                sig = mix64(sig ^ word);
                word = 0;
            }
        }
        self.relu_signature = mix64(sig ^ word);
        let out = Rc::new(relu(x.value()));
        let rg = self.needs(x);
        let op = Op::Relu {
            x: x.id,
            out: Rc::clone(&out),
        };
        let (op, rg) = if self.record { (op, rg) } else { (Op::Leaf, false) };
        self.nodes.push(Node { op, requires_grad: rg });
        Var {
            id: self.nodes.len() - 1,
            value: out,
        }
    }

    pub fn concat(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let out = concat_channels(a.value(), b.value())?;
        let rg = self.needs(a) || self.needs(b);
        let op = Op::Concat {
            a: a.id,
            b: b.id,
            ca: a.shape().c,
        };
        Ok(self.push(out, op, rg))
    }

    /// `y - r`.
    pub fn sub(&mut self, y: &Var<T>, r: &Var<T>) -> Result<Var<T>> {
        let out = residual_subtract(y.value(), r.value())?;
        let rg = self.needs(y) || self.needs(r);
        Ok(self.push(out, Op::Sub { y: y.id, r: r.id }, rg))
    }

    /// Propagates `seed` (dL/d`output`) back to every variable leaf.
    pub fn backward(mut self, output: &Var<T>, seed: Tensor<T>) -> Result<Gradients<T>> {
        seed.expect_shape(output.shape(), "backward seed")?;
        if output.id >= self.nodes.len() {
            return Err(Error::InvalidArgument("output is not on this tape".into()));
        }
        self.nodes.truncate(output.id + 1);
        let requires: Vec<bool> = self.nodes.iter().map(|n| n.requires_grad).collect();
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.id] = Some(seed);
        let mut leaves = HashMap::new();

        let acc = |grads: &mut Vec<Option<Tensor<T>>>, id: usize, g: Tensor<T>| -> Result<()> {
            if !requires[id] {
                return Ok(());
            }
            match &mut grads[id] {
                Some(existing) => existing.add_assign(&g)?,
                slot @ None => *slot = Some(g),
            }
            Ok(())
        };

        while let Some(node) = self.nodes.pop() {
            let id = self.nodes.len();
            let Some(g) = grads[id].take() else { continue };
            match node.op {
                Op::Leaf => {
                    if node.requires_grad {
                        leaves.insert(id, g);
                    }
                }
                Op::Conv {
                    x,
                    w,
                    b,
                    input,
                    weight,
                    dilation,
                    padding,
                } => {
                    let cg = conv2d_backward(&input, &weight, dilation, padding, &g, requires[x])?;
                    if let Some(dx) = cg.dx {
                        acc(&mut grads, x, dx)?;
                    }
                    acc(&mut grads, w, cg.dweight)?;
                    if let Some(b) = b {
                        acc(&mut grads, b, cg.dbias)?;
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                    gamma_value,
                    train,
                } => {
                    let bg = bn_backward(&g, &xhat, &gamma_value, &inv_std, train)?;
                    acc(&mut grads, x, bg.dx)?;
                    acc(&mut grads, gamma, bg.dgamma)?;
                    acc(&mut grads, beta, bg.dbeta)?;
                }
                Op::Relu { x, out } => {
                    acc(&mut grads, x, relu_backward(&out, &g)?)?;
                }
                Op::Concat { a, b, ca } => {
                    let (ga, gb) = split_channels(&g, ca)?;
                    acc(&mut grads, a, ga)?;
                    acc(&mut grads, b, gb)?;
                }
                Op::Sub { y, r } => {
                    acc(&mut grads, r, g.scale(-T::one()))?;
                    acc(&mut grads, y, g)?;
                }
            }
        }
        Ok(Gradients { leaves })
    }
}

/// Gradients of variable leaves, keyed by the leaf's [`Var`].
#[derive(Debug, Default)]
pub struct Gradients<T> {
    leaves: HashMap<usize, Tensor<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: &Var<T>) -> Option<&Tensor<T>> {
        self.leaves.get(&v.id)
    }

    pub fn take(&mut self, v: &Var<T>) -> Option<Tensor<T>> {
        self.leaves.remove(&v.id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::conv::tests::random_tensor;

    #[test]
    fn sub_sends_opposite_gradients() {
        let mut tape = Tape::<f64>::new();
        let s = Shape::new(1, 1, 2, 2);
        let y = tape.variable(random_tensor(s, 1));
        let r = tape.variable(random_tensor(s, 2));
        let out = tape.sub(&y, &r).unwrap();
        let seed = random_tensor(s, 3);
        let g = tape.backward(&out, seed.clone()).unwrap();
        assert_eq!(g.get(&y).unwrap(), &seed);
        assert_eq!(g.get(&r).unwrap(), &seed.scale(-1.0));
    }

    #[test]
    fn fan_out_accumulates() {
        // out = relu(x) ⊕ x, gradient of x receives both paths
        let mut tape = Tape::<f64>::new();
        let s = Shape::new(1, 1, 1, 2);
        let x = tape.variable(Tensor::from_vec(s, vec![-1.0, 2.0]).unwrap());
        let r = tape.relu(&x);
        let out = tape.concat(&r, &x).unwrap();
        let g = tape.backward(&out, Tensor::full(out.shape(), 1.0)).unwrap();
        assert_eq!(g.get(&x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::<f32>::new();
        let s = Shape::new(1, 1, 2, 2);
        let c = tape.constant(Tensor::full(s, 1.0));
        let v = tape.variable(Tensor::full(s, 2.0));
        let out = tape.sub(&c, &v).unwrap();
        let g = tape.backward(&out, Tensor::full(s, 1.0)).unwrap();
        assert!(g.get(&c).is_none());
        assert!(g.get(&v).is_some());
    }

    #[test]
    fn inference_tape_records_nothing() {
        let mut tape = Tape::<f32>::inference();
        let v = tape.variable(Tensor::full(Shape::new(1, 1, 2, 2), 2.0));
        let out = tape.relu(&v);
        let g = tape.backward(&out, Tensor::full(out.shape(), 1.0)).unwrap();
        assert!(g.get(&v).is_none());
    }

    #[test]
    fn relu_signature_tracks_sign_pattern() {
        let s = Shape::new(1, 1, 1, 3);
        let sig = |vals: Vec<f64>| {
            let mut t = Tape::<f64>::inference();
            let x = t.constant(Tensor::from_vec(s, vals).unwrap());
            t.relu(&x);
            (t.relu_signature(), t.relu_zeros())
        };
        assert_eq!(sig(vec![1.0, -1.0, 2.0]).0, sig(vec![3.0, -0.5, 0.1]).0);
        assert_ne!(sig(vec![1.0, -1.0, 2.0]).0, sig(vec![1.0, 1.0, 2.0]).0);
        assert_eq!(sig(vec![0.0, 1.0, 0.0]).1, 2);
    }
}
