use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plan::{lap_epochs, Regime, TauSchedule, TrainPlan, Weighting};
use super::{weighted_penalty, raw_transport, MetricsRecord, MetricsRow};
use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::multiplier::{multiplier_objective, MultiplierConfig, MultiplierState};
use crate::net::{Binder, NetworkPartition};
use crate::tensor::{kernels, sgd_step, GradMode, Graph, Param, SgdState, Tensor};

/// Row order for cumulative epoch `epoch` of a run seeded with `seed`. Every
/// module sees the same order in the same epoch, whatever the regime.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

struct StepOut {
    loss: f64,
    penalty: f64,
    acc: f64,
    output: Tensor,
}

#[derive(Default)]
struct EpochStats {
    n: usize,
    loss: f64,
    penalty: f64,
    acc: f64,
}

impl EpochStats {
    fn add(&mut self, s: &StepOut, batch: usize) {
        let w = batch as f64;
        self.n += batch;
        self.loss += w * s.loss;
        self.penalty += w * s.penalty;
        self.acc += w * s.acc;
    }

    fn means(&self) -> (f64, f64, f64) {
        let n = self.n as f64;
        (self.loss / n, self.penalty / n, self.acc / n)
    }
}

/// Module-`k` inputs for the three splits.
struct Inputs {
    train: Tensor,
    val: Tensor,
    test: Tensor,
}

/// Trainable parameters of module `k`, in graph binding order.
fn module_params(net: &mut NetworkPartition, k: usize, with_encoder: bool) -> Vec<&mut Param> {
    let mut out = Vec::new();
    if with_encoder {
        out.extend(net.encoder.fc.params_mut());
    }
    out.extend(net.modules[k - 1].params_mut());
    out.extend(net.heads[k - 1].fc.params_mut());
    out
}

struct Engine<'a> {
    net: &'a mut NetworkPartition,
    plan: &'a TrainPlan,
    data: &'a Splits,
    optimizers: Vec<SgdState>,
    steps: Vec<usize>,
    module_epoch: Vec<usize>,
    multiplier: Option<(MultiplierConfig, MultiplierState)>,
    metrics: MetricsRecord,
}

impl<'a> Engine<'a> {
    fn new(net: &'a mut NetworkPartition, plan: &'a TrainPlan, data: &'a Splits) -> Result<Self> {
        let k_total = net.num_modules();
        plan.validate(k_total)?;
        for (name, ds) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
            if ds.is_empty() {
                return Err(Error::Data(format!("{name} split is empty")));
            }
            if ds.input_dim() != net.spec.input_dim {
                return Err(Error::Data(format!(
                    "{name} split has {} features, the network expects {}",
                    ds.input_dim(),
                    net.spec.input_dim
                )));
            }
            if ds.classes > net.spec.classes {
                return Err(Error::Data(format!(
                    "{name} split has {} classes, the network predicts {}",
                    ds.classes, net.spec.classes
                )));
            }
        }
        let mut engine = Engine {
            optimizers: Vec::with_capacity(k_total),
            steps: vec![0; k_total],
            module_epoch: vec![0; k_total],
            multiplier: match &plan.regularizer {
                Some(r) => match &r.tau {
                    TauSchedule::Multiplier(c) => Some((c.clone(), MultiplierState::new(c, k_total))),
                    _ => None,
                },
                None => None,
            },
            metrics: MetricsRecord::default(),
            net,
            plan,
            data,
        };
        for k in 1..=k_total {
            let with_enc = engine.with_encoder(k);
            let params = module_params(engine.net, k, with_enc);
            let state = SgdState::new(plan.optimizer.clone(), params.into_iter().map(|p| &*p));
            engine.optimizers.push(state);
        }
        Ok(engine)
    }

    fn with_encoder(&self, k: usize) -> bool {
        k == 1 && !self.plan.freeze_encoder
    }

    /// Raw input of module `k` (what the caller hands over) to the state the
    /// first residual block sees.
    fn block_input(&self, k: usize, x: &Tensor) -> Tensor {
        if self.with_encoder(k) {
            self.net.encoder.apply(x)
        } else {
            x.clone()
        }
    }

    /// Graph-free module output.
    fn module_apply(&self, k: usize, x: &Tensor) -> Tensor {
        self.net.module(k).apply(&self.block_input(k, x))
    }

    /// Input of module `k` for raw data rows `x`.
    fn module_input(&self, k: usize, x: &Tensor) -> Tensor {
        let mut cur = if self.plan.freeze_encoder { self.net.encoder.apply(x) } else { x.clone() };
        for j in 1..k {
            cur = self.module_apply(j, &cur);
        }
        cur
    }

    fn initial_inputs(&self) -> Inputs {
        let f = |ds: &Dataset| self.module_input(1, &ds.features);
        Inputs {
            train: f(&self.data.train),
            val: f(&self.data.val),
            test: f(&self.data.test),
        }
    }

    fn weighting(&self, k: usize) -> Option<Weighting> {
        self.plan
            .regularizer
            .as_ref()
            .map(|r| r.tau.weighting(k, self.net.num_modules()))
    }

    fn local_step(&mut self, k: usize, input: &Tensor, labels: &[usize]) -> Result<StepOut> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let mut binder = Binder::trainable();
        let start = if self.with_encoder(k) {
            self.net.encoder.forward(&mut g, x, &mut binder)?
        } else {
            x
        };
        let trace = self.net.module(k).forward(&mut g, start, &mut binder)?;
        let (loss, acc) = self.net.head(k).classify(&mut g, trace.output(), labels, &mut binder)?;
        let form = self.plan.regularizer.as_ref().map(|r| r.form).unwrap_or_default();
        let (objective, penalty) = match self.weighting(k) {
            None => (loss, None),
            Some(Weighting::Penalty(w)) => {
                let p = weighted_penalty(&mut g, &trace, w, form)?;
                (g.add(loss, p)?, Some(p))
            }
            Some(Weighting::Lambda(lambda)) => {
                let w = raw_transport(&mut g, &trace, form)?;
                (multiplier_objective(&mut g, loss, w, lambda)?, Some(w))
            }
            Some(Weighting::Multiplier) => {
                let lambda = self.multiplier.as_ref().unwrap().1.lambda(k);
                let w = raw_transport(&mut g, &trace, form)?;
                (multiplier_objective(&mut g, loss, w, lambda)?, Some(w))
            }
        };
        let loss_value = g.value(loss).item();
        let penalty_value = penalty.map_or(0.0, |p| g.value(p).item());
        if !(loss_value.is_finite() && g.value(objective).item().is_finite()) {
            return Err(Error::NonFinite {
                module: k,
                epoch: self.module_epoch[k - 1],
                what: format!("local objective (loss {loss_value}, penalty {penalty_value})"),
            });
        }
        g.backward(objective, GradMode::Zero)?;
        let with_enc = self.with_encoder(k);
        let mut params = module_params(self.net, k, with_enc);
        binder.write_grads(&g, params.iter_mut().map(|p| &mut **p).collect(), GradMode::Zero)?;
        sgd_step(&mut params, &mut self.optimizers[k - 1], self.steps[k - 1])?;
        self.steps[k - 1] += 1;
        Ok(StepOut {
            loss: loss_value,
            penalty: penalty_value,
            acc,
            output: g.value(trace.output()).clone(),
        })
    }

    /// Advances the multiplier of module `k` after one step; `fresh` yields
    /// the module input and labels the fresh loss is measured on.
    fn advance_multiplier(&mut self, k: usize, fresh: impl FnOnce(&Self) -> (Tensor, Vec<usize>)) -> Result<()> {
        let Some((config, mut state)) = self.multiplier.take() else {
            return Ok(());
        };
        let result = state.advance(k, &config, || {
            let (input, labels) = fresh(self);
            let out = self.module_apply(k, &input);
            Ok(self.net.head(k).evaluate(&out, &labels)?.0)
        });
        self.multiplier = Some((config, state));
        result
    }

    fn uses_next_batch(&self) -> bool {
        self.multiplier.as_ref().is_some_and(|(c, _)| !c.same_batch)
    }

    fn row(&self, k: usize, lap: usize, stats: &EpochStats, train_in: &Tensor, val_in: &Tensor, test_in: &Tensor) -> Result<MetricsRow> {
        let epoch = self.module_epoch[k - 1];
        let start = self.block_input(k, train_in);
        let out = self.net.module(k).apply(&start);
        let disp = kernels::mean_sq_distance(&out, &start);
        let head = self.net.head(k);
        let (_, val_acc) = head.evaluate(&self.module_apply(k, val_in), &self.data.val.labels)?;
        let (_, test_acc) = head.evaluate(&self.module_apply(k, test_in), &self.data.test.labels)?;
        let (train_loss, penalty, train_acc) = stats.means();
        let row = MetricsRow {
            regime: self.plan.regime.name().to_string(),
            module: k,
            lap,
            epoch,
            train_loss,
            penalty,
            train_acc,
            val_acc,
            test_acc,
            mean_sq_displacement: disp,
            lambda: self.multiplier.as_ref().map(|(_, s)| s.lambda(k)),
        };
        if !(disp.is_finite() && penalty.is_finite()) {
            return Err(Error::NonFinite {
                module: k,
                epoch,
                what: format!("epoch metrics (displacement {disp}, penalty {penalty})"),
            });
        }
        Ok(row)
    }

    /// Module `k`'s epochs of lap `lap` (of `laps`) on fixed inputs.
    fn train_module_lap(&mut self, k: usize, lap: usize, laps: usize, inputs: &Inputs) -> Result<()> {
        let data = self.data;
        let n = data.train.len();
        let bs = self.plan.batch_size;
        for _ in 0..lap_epochs(self.plan.epochs.epochs(k), laps, lap) {
            self.module_epoch[k - 1] += 1;
            let order = epoch_order(self.plan.seed, self.module_epoch[k - 1], n);
            let batches: Vec<&[usize]> = order.chunks(bs).collect();
            let mut stats = EpochStats::default();
            for (b, batch) in batches.iter().enumerate() {
                let x = inputs.train.select_rows(batch);
                let y: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
                let out = self.local_step(k, &x, &y)?;
                stats.add(&out, batch.len());
                let fresh_rows = if self.uses_next_batch() { batches[(b + 1) % batches.len()] } else { batch };
                let train_in = &inputs.train;
                self.advance_multiplier(k, |_| {
                    (
                        train_in.select_rows(fresh_rows),
                        fresh_rows.iter().map(|&i| data.train.labels[i]).collect(),
                    )
                })?;
            }
            let row = self.row(k, lap, &stats, &inputs.train, &inputs.val, &inputs.test)?;
            self.metrics.rows.push(row);
        }
        Ok(())
    }

    /// Sequential sweeps; `laps = 1` is plain sequential training.
    fn run_sweeps(&mut self, laps: usize) -> Result<()> {
        let k_total = self.net.num_modules();
        for lap in 1..=laps {
            let mut inputs = self.initial_inputs();
            for k in 1..=k_total {
                self.train_module_lap(k, lap, laps, &inputs)?;
                inputs = Inputs {
                    train: self.module_apply(k, &inputs.train),
                    val: self.module_apply(k, &inputs.val),
                    test: self.module_apply(k, &inputs.test),
                };
            }
        }
        Ok(())
    }

    fn run_parallel(&mut self) -> Result<()> {
        let k_total = self.net.num_modules();
        let data = self.data;
        let n = data.train.len();
        let bs = self.plan.batch_size;
        let horizon = (1..=k_total).map(|k| self.plan.epochs.epochs(k)).max().unwrap();
        let train_x = &data.train.features;
        for e in 1..=horizon {
            let active: Vec<bool> = (1..=k_total).map(|k| e <= self.plan.epochs.epochs(k)).collect();
            for k in 1..=k_total {
                if active[k - 1] {
                    self.module_epoch[k - 1] += 1;
                }
            }
            let order = epoch_order(self.plan.seed, e, n);
            let batches: Vec<&[usize]> = order.chunks(bs).collect();
            let mut stats: Vec<EpochStats> = (0..k_total).map(|_| EpochStats::default()).collect();
            for (b, batch) in batches.iter().enumerate() {
                let y: Vec<usize> = batch.iter().map(|&i| data.train.labels[i]).collect();
                let mut state = self.module_input(1, &train_x.select_rows(batch));
                for k in 1..=k_total {
                    state = if active[k - 1] {
                        let out = self.local_step(k, &state, &y)?;
                        stats[k - 1].add(&out, batch.len());
                        let next = self.uses_next_batch().then(|| batches[(b + 1) % batches.len()]);
                        let current = state;
                        self.advance_multiplier(k, |eng| match next {
                            Some(rows) => (
                                eng.module_input(k, &train_x.select_rows(rows)),
                                rows.iter().map(|&i| data.train.labels[i]).collect(),
                            ),
                            None => (current, y.clone()),
                        })?;
                        out.output
                    } else {
                        self.module_apply(k, &state)
                    };
                }
            }
            let mut inputs = self.initial_inputs();
            for k in 1..=k_total {
                if active[k - 1] {
                    let row = self.row(k, 1, &stats[k - 1], &inputs.train, &inputs.val, &inputs.test)?;
                    self.metrics.rows.push(row);
                }
                if k < k_total {
                    inputs = Inputs {
                        train: self.module_apply(k, &inputs.train),
                        val: self.module_apply(k, &inputs.val),
                        test: self.module_apply(k, &inputs.test),
                    };
                }
            }
        }
        Ok(())
    }
}

fn check_regime(plan: &TrainPlan, want: &str) -> Result<()> {
    if plan.regime.name() != want {
        return Err(Error::Config(format!(
            "plan regime is {}, but {want} training was requested",
            plan.regime.name()
        )));
    }
    Ok(())
}

/// Trains modules one after another: module `k` and its head for
/// `epochs(k)` epochs on the outputs of the frozen modules before it.
pub fn train_sequential(net: &mut NetworkPartition, plan: &TrainPlan, data: &Splits) -> Result<MetricsRecord> {
    check_regime(plan, "sequential")?;
    let mut engine = Engine::new(net, plan, data)?;
    engine.run_sweeps(1)?;
    Ok(engine.metrics)
}

/// Trains all modules batch by batch. Each module gets its input as a
/// constant, so no gradient crosses a module boundary; it steps right after
/// its own backward pass and forwards the output it computed before the step.
/// Module `k` trains during the first `epochs(k)` epochs.
pub fn train_parallel(net: &mut NetworkPartition, plan: &TrainPlan, data: &Splits) -> Result<MetricsRecord> {
    check_regime(plan, "parallel")?;
    let mut engine = Engine::new(net, plan, data)?;
    engine.run_parallel()?;
    Ok(engine.metrics)
}

/// `R` sequential sweeps; module `k` trains `epochs(k) / R` epochs per lap,
/// plus the remainder in the last lap. Optimizer state carries over between laps.
pub fn train_multilap(net: &mut NetworkPartition, plan: &TrainPlan, data: &Splits) -> Result<MetricsRecord> {
    let Regime::MultiLap { laps } = plan.regime else {
        return Err(Error::Config(format!(
            "plan regime is {}, but multi-lap training was requested",
            plan.regime.name()
        )));
    };
    let mut engine = Engine::new(net, plan, data)?;
    engine.run_sweeps(laps)?;
    Ok(engine.metrics)
}

/// Dispatches on the plan's regime.
pub fn train(net: &mut NetworkPartition, plan: &TrainPlan, data: &Splits) -> Result<MetricsRecord> {
    match plan.regime {
        Regime::Sequential => train_sequential(net, plan, data),
        Regime::Parallel => train_parallel(net, plan, data),
        Regime::MultiLap { .. } => train_multilap(net, plan, data),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_two_moons, prepare_splits};
    use crate::greedy::{EpochSchedule, PenaltyForm, Regularizer};
    use crate::net::{build_partition, PartitionSpec};
    use crate::tensor::SgdConfig;

    fn setup() -> (NetworkPartition, TrainPlan, Splits) {
        let pool = gen_two_moons(200, 0.2, 1).unwrap();
        let test = gen_two_moons(60, 0.2, 2).unwrap();
        let splits = prepare_splits(&pool, test, 0.1, Some(80), 0).unwrap();
        let spec = PartitionSpec {
            modules: 3,
            blocks_per_module: 2,
            width: 4,
            hidden: None,
            input_dim: 2,
            classes: 2,
            init_gain: 0.1,
            encoder_gain: None,
            seed: 5,
        };
        let plan = TrainPlan {
            regime: Regime::Sequential,
            epochs: EpochSchedule::Uniform { epochs: 2 },
            batch_size: 16,
            optimizer: SgdConfig::constant(0.05, 0.9, 0.0),
            regularizer: Some(Regularizer {
                tau: TauSchedule::Fixed { tau: 0.5 },
                form: PenaltyForm::ResidueSum,
            }),
            seed: 0,
            freeze_encoder: false,
        };
        (build_partition(&spec).unwrap(), plan, splits)
    }

    fn snapshot(net: &NetworkPartition) -> Vec<Tensor> {
        net.named_params().iter().map(|p| p.value.clone()).collect()
    }

    #[test]
    fn epoch_order_is_a_seeded_permutation() {
        let a = epoch_order(3, 1, 50);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..50).collect::<Vec<_>>());
        assert_eq!(a, epoch_order(3, 1, 50));
        assert_ne!(a, epoch_order(3, 2, 50));
        assert_ne!(a, epoch_order(4, 1, 50));
    }

    #[test]
    fn training_module_two_leaves_everything_else_alone() {
        let (mut net, plan, splits) = setup();
        let before = snapshot(&net);
        let names: Vec<String> = net.named_params().iter().map(|p| p.name.clone()).collect();
        let mut engine = Engine::new(&mut net, &plan, &splits).unwrap();
        let inputs = engine.initial_inputs();
        let inputs = Inputs {
            train: engine.module_apply(1, &inputs.train),
            val: engine.module_apply(1, &inputs.val),
            test: engine.module_apply(1, &inputs.test),
        };
        engine.train_module_lap(2, 1, 1, &inputs).unwrap();
        assert_eq!(engine.metrics.rows.len(), 2);
        let after = snapshot(&net);
        for ((name, b), a) in names.iter().zip(&before).zip(&after) {
            let owned = name.starts_with("module2.") || name.starts_with("head2");
            assert_eq!(!a.bit_eq(b), owned, "{name}");
        }
    }

    #[test]
    fn regime_mismatch_is_config_error() {
        let (mut net, plan, splits) = setup();
        assert!(matches!(train_parallel(&mut net, &plan, &splits), Err(Error::Config(_))));
        assert!(matches!(train_multilap(&mut net, &plan, &splits), Err(Error::Config(_))));
    }

    #[test]
    fn wrong_feature_count_is_data_error() {
        let (_, plan, splits) = setup();
        let spec = PartitionSpec {
            input_dim: 3,
            ..setup().0.spec.clone()
        };
        let mut net = build_partition(&spec).unwrap();
        assert!(matches!(train(&mut net, &plan, &splits), Err(Error::Data(_))));
    }

    #[test]
    fn diverging_lr_is_reported_as_non_finite() {
        let (mut net, mut plan, splits) = setup();
        plan.optimizer = SgdConfig::constant(1e6, 0.9, 0.0);
        plan.epochs = EpochSchedule::Uniform { epochs: 20 };
        assert!(matches!(train(&mut net, &plan, &splits), Err(Error::NonFinite { .. })));
    }
}
