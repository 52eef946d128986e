//! The varying-weight scheme: each module minimizes `lambda_k L + W` and
//! raises `lambda_k` by `h` times its loss every `s` steps.

use trgl::data::{gen_two_moons, prepare_splits};
use trgl::greedy::{train, EpochSchedule, PenaltyForm, Regime, Regularizer, TauSchedule, TrainPlan};
use trgl::multiplier::MultiplierConfig;
use trgl::net::{build_partition, PartitionSpec};
use trgl::tensor::SgdConfig;

fn main() -> trgl::Result<()> {
    let pool = gen_two_moons(1000, 0.2, 100)?;
    let test = gen_two_moons(500, 0.2, 10_000)?;
    let splits = prepare_splits(&pool, test, 0.1, Some(200), 0)?;
    let spec = PartitionSpec {
        modules: 4,
        blocks_per_module: 1,
        width: 8,
        hidden: None,
        input_dim: 2,
        classes: 2,
        init_gain: 0.1,
        encoder_gain: Some(1.0),
        seed: 0,
    };
    let mut net = build_partition(&spec)?;
    let plan = TrainPlan {
        regime: Regime::Sequential,
        epochs: EpochSchedule::Uniform { epochs: 10 },
        batch_size: 32,
        optimizer: SgdConfig::constant(0.05, 0.9, 0.0),
        regularizer: Some(Regularizer {
            tau: TauSchedule::Multiplier(MultiplierConfig {
                lambda_init: 1.0,
                h: 1.0,
                s: 5,
                same_batch: false,
            }),
            form: PenaltyForm::ResidueSum,
        }),
        seed: 0,
        freeze_encoder: false,
    };
    let rec = train(&mut net, &plan, &splits)?;
    for k in 1..=4 {
        let lambdas: Vec<String> = rec.series(k).iter().step_by(3).map(|r| format!("{:.2}", r.lambda.unwrap())).collect();
        let series = rec.series(k);
        let last = series.last().unwrap();
        println!("module {k}: lambda {} ... {:.2}, test acc {:.3}", lambdas.join(" "), last.lambda.unwrap(), last.test_acc);
    }
    Ok(())
}
