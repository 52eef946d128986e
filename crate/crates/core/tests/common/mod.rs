#![allow(dead_code)]

use trgl::data::{gen_two_moons, prepare_splits, Splits};
use trgl::greedy::{EpochSchedule, PenaltyForm, Regime, Regularizer, TauSchedule, TrainPlan};
use trgl::net::PartitionSpec;
use trgl::tensor::SgdConfig;

pub fn moons(seed: u64, train_size: usize, noise: f64) -> Splits {
    let pool = gen_two_moons(1000, noise, 100 + seed).unwrap();
    let test = gen_two_moons(500, noise, 10_000 + seed).unwrap();
    prepare_splits(&pool, test, 0.1, Some(train_size), seed).unwrap()
}

pub fn spec(modules: usize, blocks: usize, width: usize, seed: u64) -> PartitionSpec {
    PartitionSpec {
        modules,
        blocks_per_module: blocks,
        width,
        hidden: None,
        input_dim: 2,
        classes: 2,
        init_gain: 0.1,
        encoder_gain: Some(1.0),
        seed,
    }
}

pub fn plan(regime: Regime, epochs: usize, regularizer: Option<Regularizer>, seed: u64) -> TrainPlan {
    TrainPlan {
        regime,
        epochs: EpochSchedule::Uniform { epochs },
        batch_size: 32,
        optimizer: SgdConfig::constant(0.05, 0.9, 0.0),
        regularizer,
        seed,
        freeze_encoder: false,
    }
}

pub fn reg(tau: TauSchedule) -> Option<Regularizer> {
    Some(Regularizer {
        tau,
        form: PenaltyForm::ResidueSum,
    })
}

pub fn regimes() -> [Regime; 3] {
    [Regime::Sequential, Regime::Parallel, Regime::MultiLap { laps: 2 }]
}
