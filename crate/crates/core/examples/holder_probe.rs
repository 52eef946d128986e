//! Empirical Hölder exponent of a few maps, including a trained module.

use trgl::data::gen_two_moons;
use trgl::greedy::{train, EpochSchedule, PenaltyForm, Regime, Regularizer, TauSchedule, TrainPlan};
use trgl::net::{build_partition, PartitionSpec};
use trgl::ot::{holder_probe, DiscreteDistribution};
use trgl::tensor::SgdConfig;
use trgl::verify::{multiscale_cloud, sqrt_radial};

fn main() -> trgl::Result<()> {
    let cloud = multiscale_cloud(300, 2, 0);
    let r = holder_probe(|x| Ok(sqrt_radial(x)), &cloud, 400, 1)?;
    println!("sqrt radial map: eta {:.3}, C {:.3}", r.eta, r.c);

    let pool = gen_two_moons(600, 0.15, 1)?;
    let test = gen_two_moons(300, 0.15, 2)?;
    let splits = trgl::data::prepare_splits(&pool, test, 0.1, None, 0)?;
    let spec = PartitionSpec {
        modules: 2,
        blocks_per_module: 2,
        width: 2,
        hidden: Some(16),
        input_dim: 2,
        classes: 2,
        init_gain: 0.1,
        encoder_gain: Some(1.0),
        seed: 0,
    };
    let support = DiscreteDistribution::from_dataset(&splits.test)?;
    for tau in [0.05, 5.0] {
        let mut net = build_partition(&spec)?;
        let plan = TrainPlan {
            regime: Regime::Sequential,
            epochs: EpochSchedule::Uniform { epochs: 30 },
            batch_size: 32,
            optimizer: SgdConfig::constant(0.02, 0.9, 0.0),
            regularizer: Some(Regularizer {
                tau: TauSchedule::Fixed { tau },
                form: PenaltyForm::ResidueSum,
            }),
            seed: 0,
            freeze_encoder: true,
        };
        train(&mut net, &plan, &splits)?;
        let r = holder_probe(|x| net.forward_to(2, x), &support, 400, 3)?;
        println!("trunk after training with tau {tau}: eta {:.3}, C {:.3}, max ratio {:.3}", r.eta, r.c, r.max_ratio);
    }
    Ok(())
}
