//! VanGL and TRGL on two moons under the three training regimes, with the
//! last-epoch test accuracy of every module's head.

use trgl::data::{gen_two_moons, prepare_splits};
use trgl::greedy::{train, EpochSchedule, PenaltyForm, Regime, Regularizer, TauSchedule, TrainPlan};
use trgl::net::{build_partition, PartitionSpec};
use trgl::tensor::SgdConfig;

fn main() -> trgl::Result<()> {
    let pool = gen_two_moons(1000, 0.25, 100)?;
    let test = gen_two_moons(1000, 0.25, 10_000)?;
    let splits = prepare_splits(&pool, test, 0.1, Some(200), 0)?;
    let spec = PartitionSpec {
        modules: 6,
        blocks_per_module: 1,
        width: 16,
        hidden: Some(32),
        input_dim: 2,
        classes: 2,
        init_gain: 0.05,
        encoder_gain: Some(1.0),
        seed: 0,
    };
    for regime in [Regime::Sequential, Regime::Parallel, Regime::MultiLap { laps: 2 }] {
        for (name, reg) in [
            ("VanGL", None),
            (
                "TRGL ",
                Some(Regularizer {
                    tau: TauSchedule::Fixed { tau: 1.0 },
                    form: PenaltyForm::ResidueSum,
                }),
            ),
        ] {
            let mut net = build_partition(&spec)?;
            let plan = TrainPlan {
                regime: regime.clone(),
                epochs: EpochSchedule::Uniform { epochs: 40 },
                batch_size: 32,
                optimizer: SgdConfig::constant(0.03, 0.9, 0.0),
                regularizer: reg,
                seed: 0,
                freeze_encoder: false,
            };
            let acc = train(&mut net, &plan, &splits)?.final_test_acc();
            let shown: Vec<String> = acc.iter().map(|a| format!("{a:.3}")).collect();
            println!("{:<10} {name} {}", regime.name(), shown.join(" "));
        }
    }
    Ok(())
}
