//! Residual trunk: encoder, residual blocks `T = id + r`, auxiliary
//! classifiers, and the split of the trunk into `K` modules of `M` blocks.
//!
//! Every layer has two evaluation paths: a graph path used for training and
//! a plain tensor path used for inference. Both go through the same kernels,
//! so they agree bit for bit.

mod checkpoint;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{kernels, orthogonal_init, GradMode, Graph, Param, Tensor, Var};

/// Collects the graph variables created for parameters, in binding order,
/// so that gradients can be copied back after `backward`.
#[derive(Debug)]
pub struct Binder {
    trainable: bool,
    vars: Vec<Var>,
}

impl Binder {
    /// Parameters become differentiable leaves.
    pub fn trainable() -> Self {
        Binder {
            trainable: true,
            vars: Vec::new(),
        }
    }

    /// Parameters become constants; nothing upstream of them is differentiated.
    pub fn frozen() -> Self {
        Binder {
            trainable: false,
            vars: Vec::new(),
        }
    }

    pub fn bind(&mut self, g: &mut Graph, p: &Param) -> Var {
        let v = if self.trainable {
            g.variable(p.value.clone())
        } else {
            g.constant(p.value.clone())
        };
        self.vars.push(v);
        v
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Copies gradients from `g` into `params`, which must be listed in the
    /// order they were bound.
    pub fn write_grads(&self, g: &Graph, params: Vec<&mut Param>, mode: GradMode) -> Result<()> {
        if params.len() != self.vars.len() {
            return Err(Error::Contract(format!(
                "bound {} parameters but {} were given back",
                self.vars.len(),
                params.len()
            )));
        }
        for (p, &v) in params.into_iter().zip(&self.vars) {
            let grad = g
                .grad(v)
                .ok_or_else(|| Error::Contract(format!("{} was bound frozen", p.name)))?;
            p.set_grad(grad, mode == GradMode::Accumulate);
        }
        Ok(())
    }
}

/// Affine map `x W + b` with `W` stored `in x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn init(name: &str, input: usize, output: usize, gain: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Linear {
            weight: Param::new(format!("{name}.weight"), orthogonal_init(input, output, gain, rng)?),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[output])),
        })
    }

    pub fn zeros(name: &str, input: usize, output: usize) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), Tensor::zeros(&[input, output])),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[output])),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        kernels::add_bias(&kernels::matmul(x, &self.weight.value), &self.bias.value)
    }

    pub fn forward(&self, g: &mut Graph, x: Var, binder: &mut Binder) -> Result<Var> {
        let w = binder.bind(g, &self.weight);
        let b = binder.bind(g, &self.bias);
        let xw = g.matmul(x, w)?;
        g.add_bias(xw, b)
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

fn check_width(op: &'static str, x: &Tensor, want: usize) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != want {
        return Err(Error::dim(
            op,
            format!("expected a batch of width {want}, got shape {:?}", x.shape()),
        ));
    }
    Ok(())
}

/// `T(x) = x + r(x)` with residue `r(x) = W2 relu(W1 x + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl ResidualBlock {
    pub fn init(name: &str, width: usize, hidden: usize, gain: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(ResidualBlock {
            fc1: Linear::init(&format!("{name}.fc1"), width, hidden, gain, rng)?,
            fc2: Linear::init(&format!("{name}.fc2"), hidden, width, gain, rng)?,
        })
    }

    pub fn width(&self) -> usize {
        self.fc1.input_dim()
    }

    pub fn residue(&self, x: &Tensor) -> Tensor {
        self.fc2.apply(&kernels::relu(&self.fc1.apply(x)))
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        kernels::add(x, &self.residue(x))
    }

    /// Returns `(T(x), r(x))`.
    pub fn forward(&self, g: &mut Graph, x: Var, binder: &mut Binder) -> Result<(Var, Var)> {
        check_width("residual block", g.value(x), self.width())?;
        let h = self.fc1.forward(g, x, binder)?;
        let h = g.relu(h)?;
        let r = self.fc2.forward(g, h, binder)?;
        let out = g.add(x, r)?;
        Ok((out, r))
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.fc1.params();
        p.extend(self.fc2.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.fc1.params_mut();
        p.extend(self.fc2.params_mut());
        p
    }
}

/// Input layer: `relu(x W + b)`, mapping the raw input into trunk width.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub fc: Linear,
}

impl Encoder {
    pub fn apply(&self, x: &Tensor) -> Tensor {
        kernels::relu(&self.fc.apply(x))
    }

    pub fn forward(&self, g: &mut Graph, x: Var, binder: &mut Binder) -> Result<Var> {
        check_width("encoder", g.value(x), self.fc.input_dim())?;
        let h = self.fc.forward(g, x, binder)?;
        g.relu(h)
    }

    pub fn output_dim(&self) -> usize {
        self.fc.output_dim()
    }
}

/// Auxiliary classifier head: a single affine map to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryClassifier {
    pub fc: Linear,
}

impl AuxiliaryClassifier {
    pub fn classes(&self) -> usize {
        self.fc.output_dim()
    }

    pub fn logits(&self, state: &Tensor) -> Tensor {
        self.fc.apply(state)
    }

    /// Mean cross-entropy and accuracy (argmax ties go to the lowest class).
    pub fn evaluate(&self, state: &Tensor, labels: &[usize]) -> Result<(f64, f64)> {
        check_width("classify", state, self.fc.input_dim())?;
        check_labels(labels, state.rows(), self.classes())?;
        let logits = self.logits(state);
        Ok((kernels::cross_entropy(&logits, labels), kernels::accuracy(&logits, labels)))
    }

    /// Graph version of [`evaluate`](Self::evaluate); returns the loss node
    /// and the batch accuracy.
    pub fn classify(&self, g: &mut Graph, state: Var, labels: &[usize], binder: &mut Binder) -> Result<(Var, f64)> {
        check_width("classify", g.value(state), self.fc.input_dim())?;
        check_labels(labels, g.value(state).rows(), self.classes())?;
        let logits = self.fc.forward(g, state, binder)?;
        let acc = kernels::accuracy(g.value(logits), labels);
        let loss = g.softmax_cross_entropy(logits, labels)?;
        Ok((loss, acc))
    }
}

fn check_labels(labels: &[usize], rows: usize, classes: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Data(format!("{} labels for {} rows", labels.len(), rows)));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Data(format!("label {y} outside [0, {classes})")));
    }
    Ok(())
}

/// Intermediate states of one module on a batch: `states[0]` is the input,
/// `states[m + 1] = states[m] + residues[m]`.
#[derive(Clone, Debug)]
pub struct ModuleTrace {
    pub states: Vec<Var>,
    pub residues: Vec<Var>,
}

impl ModuleTrace {
    pub fn input(&self) -> Var {
        self.states[0]
    }

    pub fn output(&self) -> Var {
        *self.states.last().unwrap()
    }
}

/// An ordered run of `M` residual blocks trained as one unit.
#[derive(Clone, Debug, PartialEq)]
pub struct TrunkModule {
    pub blocks: Vec<ResidualBlock>,
}

impl TrunkModule {
    pub fn width(&self) -> usize {
        self.blocks[0].width()
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let mut cur = x.clone();
        for b in &self.blocks {
            cur = b.apply(&cur);
        }
        cur
    }

    /// Value-only trace: all states `psi_0..psi_M` and residues.
    pub fn trace_values(&self, x: &Tensor) -> (Vec<Tensor>, Vec<Tensor>) {
        let mut states = vec![x.clone()];
        let mut residues = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let cur = states.last().unwrap();
            let r = b.residue(cur);
            states.push(kernels::add(cur, &r));
            residues.push(r);
        }
        (states, residues)
    }

    pub fn forward(&self, g: &mut Graph, input: Var, binder: &mut Binder) -> Result<ModuleTrace> {
        check_width("module forward", g.value(input), self.width())?;
        let mut states = vec![input];
        let mut residues = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, r) = b.forward(g, *states.last().unwrap(), binder)?;
            states.push(out);
            residues.push(r);
        }
        Ok(ModuleTrace { states, residues })
    }

    pub fn params(&self) -> Vec<&Param> {
        self.blocks.iter().flat_map(|b| b.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.blocks.iter_mut().flat_map(|b| b.params_mut()).collect()
    }
}

/// Shape and initialization of a `K-M` residual trunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    /// Number of modules `K`.
    pub modules: usize,
    /// Residual blocks per module `M`.
    pub blocks_per_module: usize,
    /// Trunk width `d`.
    pub width: usize,
    /// Hidden width inside each residue; defaults to `width`.
    #[serde(default)]
    pub hidden: Option<usize>,
    pub input_dim: usize,
    pub classes: usize,
    pub init_gain: f64,
    /// Gain for the encoder only; defaults to `init_gain`.
    #[serde(default)]
    pub encoder_gain: Option<f64>,
    /// Initialization seed; experiment runs overwrite it with the run seed.
    #[serde(default)]
    pub seed: u64,
}

impl PartitionSpec {
    pub fn hidden(&self) -> usize {
        self.hidden.unwrap_or(self.width)
    }

    pub fn encoder_gain(&self) -> f64 {
        self.encoder_gain.unwrap_or(self.init_gain)
    }

    pub fn total_blocks(&self) -> usize {
        self.modules * self.blocks_per_module
    }

    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("modules", self.modules),
            ("blocks_per_module", self.blocks_per_module),
            ("width", self.width),
            ("hidden", self.hidden()),
            ("input_dim", self.input_dim),
            ("classes", self.classes),
        ];
        if let Some((name, _)) = extents.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("network.{name} must be >= 1")));
        }
        for (name, g) in [("init_gain", self.init_gain), ("encoder_gain", self.encoder_gain())] {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Config(format!("network.{name} must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Encoder, `K` modules of `M` blocks, and one auxiliary head per module.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkPartition {
    pub spec: PartitionSpec,
    pub encoder: Encoder,
    pub modules: Vec<TrunkModule>,
    pub heads: Vec<AuxiliaryClassifier>,
}

/// Builds a seeded `K-M` trunk. Weights are orthogonal with the configured
/// gain, biases are zero.
pub fn build_partition(spec: &PartitionSpec) -> Result<NetworkPartition> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let encoder = Encoder {
        fc: Linear::init("encoder", spec.input_dim, spec.width, spec.encoder_gain(), &mut rng)?,
    };
    let mut modules = Vec::with_capacity(spec.modules);
    for k in 1..=spec.modules {
        let blocks = (0..spec.blocks_per_module)
            .map(|m| ResidualBlock::init(&format!("module{k}.block{m}"), spec.width, spec.hidden(), spec.init_gain, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        modules.push(TrunkModule { blocks });
    }
    let heads = (1..=spec.modules)
        .map(|k| {
            Ok(AuxiliaryClassifier {
                fc: Linear::init(&format!("head{k}"), spec.width, spec.classes, spec.init_gain, &mut rng)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkPartition {
        spec: spec.clone(),
        encoder,
        modules,
        heads,
    })
}

impl NetworkPartition {
    pub fn num_modules(&self) -> usize {
        self.modules.len()
    }

    /// Module `k`, counted from 1.
    pub fn module(&self, k: usize) -> &TrunkModule {
        &self.modules[k - 1]
    }

    /// Head `k`, counted from 1.
    pub fn head(&self, k: usize) -> &AuxiliaryClassifier {
        &self.heads[k - 1]
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        check_width("encoder", x, self.spec.input_dim)?;
        Ok(self.encoder.apply(x))
    }

    /// `G_k(encoder(x))`; `k = 0` is the encoder output.
    pub fn forward_to(&self, k: usize, x: &Tensor) -> Result<Tensor> {
        let mut cur = self.encode(x)?;
        for m in &self.modules[..k] {
            cur = m.apply(&cur);
        }
        Ok(cur)
    }

    /// All `K * M` blocks applied one after another, ignoring module boundaries.
    pub fn forward_flat(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = self.encode(x)?;
        for b in self.modules.iter().flat_map(|m| &m.blocks) {
            cur = b.apply(&cur);
        }
        Ok(cur)
    }

    /// Every parameter with its name, in a fixed order.
    pub fn named_params(&self) -> Vec<&Param> {
        let mut out = self.encoder.fc.params();
        for m in &self.modules {
            out.extend(m.params());
        }
        for h in &self.heads {
            out.extend(h.fc.params());
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.encoder.fc.params_mut();
        for m in &mut self.modules {
            out.extend(m.params_mut());
        }
        for h in &mut self.heads {
            out.extend(h.fc.params_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|p| p.numel()).sum()
    }

    /// Bitwise parameter equality with another partition.
    pub fn bit_eq(&self, other: &NetworkPartition) -> bool {
        let (a, b) = (self.named_params(), other.named_params());
        a.len() == b.len() && a.iter().zip(&b).all(|(p, q)| p.name == q.name && p.value.bit_eq(&q.value))
    }
}
