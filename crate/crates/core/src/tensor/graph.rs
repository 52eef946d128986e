use super::kernels;
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operations.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// `(n x k) * (k x m)`.
    MatMul,
    /// Elementwise sum of two same-shape tensors.
    Add,
    /// `(n x m) + bias (m)`, bias broadcast over rows.
    AddBias,
    Relu,
    Scale(f64),
    /// Sum of squared entries, a scalar.
    SumOfSquares,
    /// Mean of all entries, a scalar.
    Mean,
    /// Mean softmax cross-entropy of `n x C` logits against `n` labels.
    SoftmaxCrossEntropy(Vec<usize>),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::MatMul => "matmul",
            Op::Add => "add",
            Op::AddBias => "add-bias-broadcast",
            Op::Relu => "relu",
            Op::Scale(_) => "scale",
            Op::SumOfSquares => "sum-of-squares",
            Op::Mean => "mean",
            Op::SoftmaxCrossEntropy(_) => "softmax-cross-entropy",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Op::MatMul | Op::Add | Op::AddBias => 2,
            _ => 1,
        }
    }
}

/// How `backward` treats gradients left over from a previous call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum GradMode {
    /// Clear every accumulator first.
    #[default]
    Zero,
    /// Add to whatever is already stored.
    Accumulate,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    /// `None` for leaves and for nodes computed from constants only.
    op: Option<(Op, Vec<Var>)>,
    /// Softmax probabilities kept for the cross-entropy backward.
    saved: Option<Tensor>,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Arena of recorded operations. Node order is a topological order, so the
/// backward sweep is a single reverse pass over the arena.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    fn push(&mut self, node: Node) -> Var {
        self.nodes.push(node);
        Var(self.nodes.len() - 1)
    }

    /// A leaf that is not differentiated.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Node {
            value,
            op: None,
            saved: None,
            requires_grad: false,
            grad: None,
        })
    }

    /// A leaf whose gradient is wanted.
    pub fn variable(&mut self, value: Tensor) -> Var {
        let grad = Some(Tensor::zeros(value.shape()));
        self.push(Node {
            value,
            op: None,
            saved: None,
            requires_grad: true,
            grad,
        })
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Recorded inputs of `v` (empty for leaves and constant-folded nodes).
    pub fn inputs(&self, v: Var) -> &[Var] {
        self.nodes[v.0].op.as_ref().map_or(&[], |(_, i)| i.as_slice())
    }

    /// Whether a recorded path leads from `input` to `output`.
    pub fn depends_on(&self, output: Var, input: Var) -> bool {
        if output == input {
            return true;
        }
        if input.0 > output.0 {
            return false;
        }
        let mut seen = vec![false; output.0 + 1];
        let mut stack = vec![output];
        while let Some(v) = stack.pop() {
            if v == input {
                return true;
            }
            for &i in self.inputs(v) {
                if i.0 >= input.0 && !seen[i.0] {
                    seen[i.0] = true;
                    stack.push(i);
                }
            }
        }
        false
    }

    /// Applies `op` to `inputs` and records it when any input requires grad.
    pub fn forward(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != op.arity() {
            return Err(Error::dim(
                op.name(),
                format!("expected {} inputs, got {}", op.arity(), inputs.len()),
            ));
        }
        let shapes: Vec<&[usize]> = inputs.iter().map(|&v| self.value(v).shape()).collect();
        check_shapes(&op, &shapes)?;

        let mut saved = None;
        let value = {
            let x = self.value(inputs[0]);
            match &op {
                Op::MatMul => kernels::matmul(x, self.value(inputs[1])),
                Op::Add => kernels::add(x, self.value(inputs[1])),
                Op::AddBias => kernels::add_bias(x, self.value(inputs[1])),
                Op::Relu => kernels::relu(x),
                Op::Scale(c) => kernels::scale(x, *c),
                Op::SumOfSquares => Tensor::scalar(kernels::sum_of_squares(x)),
                Op::Mean => Tensor::scalar(kernels::mean(x)),
                Op::SoftmaxCrossEntropy(labels) => {
                    saved = Some(kernels::softmax_rows(x));
                    Tensor::scalar(kernels::cross_entropy(x, labels))
                }
            }
        };

        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        let node = if requires_grad {
            Node {
                grad: Some(Tensor::zeros(value.shape())),
                value,
                op: Some((op, inputs.to_vec())),
                saved,
                requires_grad: true,
            }
        } else {
            Node {
                value,
                op: None,
                saved: None,
                requires_grad: false,
                grad: None,
            }
        };
        Ok(self.push(node))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(Op::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(Op::Add, &[a, b])
    }

    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.forward(Op::AddBias, &[x, bias])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::Relu, &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.forward(Op::Scale(c), &[x])
    }

    pub fn sum_of_squares(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::SumOfSquares, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::Mean, &[x])
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.forward(Op::SoftmaxCrossEntropy(labels.to_vec()), &[logits])
    }

    /// Reverse sweep from a scalar `loss`. Every node that requires grad ends
    /// up holding d(loss)/d(node), summed over all of its consumers.
    pub fn backward(&mut self, loss: Var, mode: GradMode) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.requires_grad(loss) {
            return Err(Error::Contract(
                "backward on a value that depends on no differentiable input".into(),
            ));
        }
        if mode == GradMode::Zero {
            for node in self.nodes.iter_mut().filter(|n| n.requires_grad) {
                node.grad.as_mut().unwrap().data_mut().fill(0.0);
            }
        }
        {
            let g = self.nodes[loss.0].grad.as_mut().unwrap();
            g.data_mut()[0] += 1.0;
        }

        let mut upstream = vec![None; self.nodes.len()];
        // seed with the loss gradient only; other nodes receive contributions
        // from their consumers during this sweep
        upstream[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(dout) = upstream[idx].take() else {
                continue;
            };
            let Some((op, inputs)) = self.nodes[idx].op.clone() else {
                continue;
            };
            let contributions = self.vjp(idx, &op, &inputs, &dout);
            for (input, contrib) in inputs.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                let acc = self.nodes[input.0].grad.as_mut().unwrap();
                for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                    *a += c;
                }
                match &mut upstream[input.0] {
                    Some(u) => {
                        for (a, c) in u.data_mut().iter_mut().zip(contrib.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products for the inputs of node `idx`.
    fn vjp(&self, idx: usize, op: &Op, inputs: &[Var], dout: &Tensor) -> Vec<Option<Tensor>> {
        let wants = |i: usize| self.requires_grad(inputs[i]);
        let x = self.value(inputs[0]);
        match op {
            Op::MatMul => {
                let b = self.value(inputs[1]);
                vec![
                    wants(0).then(|| kernels::matmul_nt(dout, b)),
                    wants(1).then(|| kernels::matmul_tn(x, dout)),
                ]
            }
            Op::Add => vec![
                wants(0).then(|| dout.clone()),
                wants(1).then(|| dout.clone()),
            ],
            Op::AddBias => {
                let m = x.cols();
                let db = wants(1).then(|| {
                    let mut acc = vec![0.0; m];
                    for row in dout.data().chunks(m) {
                        for (a, v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    Tensor::new(self.value(inputs[1]).shape().to_vec(), acc).unwrap()
                });
                vec![wants(0).then(|| dout.clone()), db]
            }
            Op::Relu => {
                let data = x
                    .data()
                    .iter()
                    .zip(dout.data())
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect();
                vec![Some(Tensor::new(x.shape().to_vec(), data).unwrap())]
            }
            Op::Scale(c) => vec![Some(kernels::scale(dout, *c))],
            Op::SumOfSquares => {
                let d = dout.item();
                vec![Some(kernels::scale(x, 2.0 * d))]
            }
            Op::Mean => {
                let d = dout.item() / x.numel() as f64;
                vec![Some(Tensor::filled(x.shape(), d))]
            }
            Op::SoftmaxCrossEntropy(labels) => {
                let probs = self.nodes[idx].saved.as_ref().expect("saved softmax");
                let c = probs.cols();
                let n = labels.len() as f64;
                let d = dout.item() / n;
                let mut g = probs.clone();
                for (row, &y) in g.data_mut().chunks_mut(c).zip(labels) {
                    row[y] -= 1.0;
                    for v in row.iter_mut() {
                        *v *= d;
                    }
                }
                vec![Some(g)]
            }
        }
    }
}

fn check_shapes(op: &Op, shapes: &[&[usize]]) -> Result<()> {
    let fail = || {
        Err(Error::dim(
            op.name(),
            format!("incompatible shapes {:?}", shapes),
        ))
    };
    match op {
        Op::MatMul => {
            let (a, b) = (shapes[0], shapes[1]);
            if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
                return fail();
            }
        }
        Op::Add => {
            if shapes[0] != shapes[1] {
                return fail();
            }
        }
        Op::AddBias => {
            let (x, b) = (shapes[0], shapes[1]);
            let bias_len = match b {
                [m] => *m,
                [1, m] => *m,
                _ => return fail(),
            };
            if x.len() != 2 || x[1] != bias_len {
                return fail();
            }
        }
        Op::Relu | Op::Scale(_) | Op::SumOfSquares => {}
        Op::Mean => {
            if shapes[0].iter().product::<usize>() == 0 {
                return fail();
            }
        }
        Op::SoftmaxCrossEntropy(labels) => {
            let x = shapes[0];
            if x.len() != 2 || x[0] != labels.len() || x[0] == 0 || x[1] == 0 {
                return fail();
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= x[1]) {
                return Err(Error::Data(format!(
                    "label {} out of range for {} classes",
                    bad, x[1]
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn matmul_shape_rule() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 4]));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c).shape(), &[2, 4]);
    }

    #[test]
    fn matmul_mismatch_names_op_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 4]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
        assert!(err.contains("[2, 3]") && err.contains("[2, 4]"), "{err}");
    }

    #[test]
    fn uniform_logits_give_log_c() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[3, 10]));
        let l = g.softmax_cross_entropy(x, &[0, 4, 9]).unwrap();
        assert!(approx(g.value(l).item(), 10f64.ln()));
        assert!(approx(g.value(l).item(), std::f64::consts::LN_10));
    }

    #[test]
    fn relu_forward_and_backward() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);
        let s = g.sum_of_squares(r).unwrap();
        g.backward(s, GradMode::Zero).unwrap();
        // subgradient at exactly 0 is 0
        assert_eq!(g.grad(x).unwrap().data(), &[0.0, 0.0, 4.0]);
    }

    #[test]
    fn sum_of_squares_grad_is_two_x() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
        let l = g.sum_of_squares(x).unwrap();
        g.backward(l, GradMode::Zero).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
        let y = g.scale(x, 2.0).unwrap();
        assert!(matches!(g.backward(y, GradMode::Zero), Err(Error::Contract(_))));
    }

    #[test]
    fn shared_input_sums_both_paths() {
        // l = sum(x^2) + mean(3x); dl/dx = 2x + 3/n
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![1.0, -2.0, 0.5]));
        let a = g.sum_of_squares(x).unwrap();
        let s = g.scale(x, 3.0).unwrap();
        let b = g.mean(s).unwrap();
        let l = g.add(a, b).unwrap();
        g.backward(l, GradMode::Zero).unwrap();
        let grad = g.grad(x).unwrap().data().to_vec();
        for (gv, xv) in grad.iter().zip([1.0, -2.0, 0.5]) {
            assert!(approx(*gv, 2.0 * xv + 1.0));
        }
    }

    #[test]
    fn accumulate_mode_adds_and_zero_mode_resets() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::vector(vec![1.0, 2.0]));
        let l = g.sum_of_squares(x).unwrap();
        g.backward(l, GradMode::Zero).unwrap();
        g.backward(l, GradMode::Accumulate).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[4.0, 8.0]);
        g.backward(l, GradMode::Zero).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn constants_record_no_edges() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::vector(vec![1.0]));
        let d = g.scale(c, 2.0).unwrap();
        assert!(g.inputs(d).is_empty());
        assert!(!g.requires_grad(d));
        let x = g.variable(Tensor::vector(vec![1.0]));
        let e = g.add(d, x).unwrap();
        assert!(g.depends_on(e, x));
        assert!(!g.depends_on(e, c));
    }

    #[test]
    fn label_out_of_range_is_data_error() {
        let mut g = Graph::new();
        let x = g.variable(Tensor::zeros(&[1, 3]));
        assert!(matches!(
            g.softmax_cross_entropy(x, &[3]),
            Err(Error::Data(_))
        ));
    }
}
