use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ModuleTrace;
use crate::tensor::{Graph, Var};

/// Which displacement a module pays for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyForm {
    /// Kinetic energy along the module: `sum_m |r_m|^2`.
    #[default]
    ResidueSum,
    /// Only the end-to-end displacement `|T(x) - x|^2`.
    Endpoint,
}

/// Unweighted transport cost: batch mean of the per-sample cost.
///
/// The endpoint form computes `T(x) - x` as `sum_m r_m`, which equals it in
/// exact arithmetic and makes both forms agree bitwise when `M = 1`.
pub fn raw_transport(g: &mut Graph, trace: &ModuleTrace, form: PenaltyForm) -> Result<Var> {
    if trace.residues.is_empty() {
        return Err(Error::Contract("module trace has no residues".into()));
    }
    let n = g.value(trace.input()).rows();
    let total = match form {
        PenaltyForm::ResidueSum => {
            let mut acc = g.sum_of_squares(trace.residues[0])?;
            for &r in &trace.residues[1..] {
                let s = g.sum_of_squares(r)?;
                acc = g.add(acc, s)?;
            }
            acc
        }
        PenaltyForm::Endpoint => {
            let mut disp = trace.residues[0];
            for &r in &trace.residues[1..] {
                disp = g.add(disp, r)?;
            }
            g.sum_of_squares(disp)?
        }
    };
    g.scale(total, 1.0 / n as f64)
}

/// `weight * raw_transport`. A weight of exactly 0 switches the penalty off
/// while keeping it in the graph.
pub fn weighted_penalty(g: &mut Graph, trace: &ModuleTrace, weight: f64, form: PenaltyForm) -> Result<Var> {
    let raw = raw_transport(g, trace, form)?;
    g.scale(raw, weight)
}

/// `(1 / (2 tau)) * raw_transport`.
pub fn transport_penalty(g: &mut Graph, trace: &ModuleTrace, tau: f64, form: PenaltyForm) -> Result<Var> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!("tau must be positive and finite, got {tau}")));
    }
    weighted_penalty(g, trace, 1.0 / (2.0 * tau), form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{build_partition, Binder, PartitionSpec};
    use crate::tensor::{gaussian, GradMode, Tensor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hand_trace(g: &mut Graph, residues: &[Vec<f64>]) -> ModuleTrace {
        let d = residues[0].len();
        let mut states = vec![g.constant(Tensor::zeros(&[1, d]))];
        let mut rs = Vec::new();
        for r in residues {
            let rv = g.variable(Tensor::matrix(1, d, r.clone()).unwrap());
            let next = g.add(*states.last().unwrap(), rv).unwrap();
            states.push(next);
            rs.push(rv);
        }
        ModuleTrace { states, residues: rs }
    }

    #[test]
    fn zero_residues_cost_nothing() {
        let mut g = Graph::new();
        let t = hand_trace(&mut g, &[vec![0.0, 0.0], vec![0.0, 0.0]]);
        for form in [PenaltyForm::ResidueSum, PenaltyForm::Endpoint] {
            let p = transport_penalty(&mut g, &t, 0.3, form).unwrap();
            assert_eq!(g.value(p).item(), 0.0);
        }
    }

    #[test]
    fn two_residues_by_hand() {
        let mut g = Graph::new();
        let t = hand_trace(&mut g, &[vec![1.0, 0.0], vec![0.0, 2.0]]);
        let p = transport_penalty(&mut g, &t, 0.5, PenaltyForm::ResidueSum).unwrap();
        assert_eq!(g.value(p).item(), 5.0);
        // the endpoint (1, 2) happens to have the same squared norm here
        let e = transport_penalty(&mut g, &t, 0.5, PenaltyForm::Endpoint).unwrap();
        assert_eq!(g.value(e).item(), 5.0);
    }

    #[test]
    fn endpoint_cancels_opposing_moves() {
        let mut g = Graph::new();
        let t = hand_trace(&mut g, &[vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let e = transport_penalty(&mut g, &t, 0.5, PenaltyForm::Endpoint).unwrap();
        let r = transport_penalty(&mut g, &t, 0.5, PenaltyForm::ResidueSum).unwrap();
        assert_eq!(g.value(e).item(), 0.0);
        assert_eq!(g.value(r).item(), 2.0);
    }

    #[test]
    fn nonpositive_tau_is_config_error() {
        let mut g = Graph::new();
        let t = hand_trace(&mut g, &[vec![1.0]]);
        assert!(matches!(transport_penalty(&mut g, &t, 0.0, PenaltyForm::ResidueSum), Err(Error::Config(_))));
        assert!(matches!(transport_penalty(&mut g, &t, -1.0, PenaltyForm::ResidueSum), Err(Error::Config(_))));
    }

    fn random_module_penalties(seed: u64, m: usize, tau: f64) -> (f64, f64, Graph, Vec<crate::tensor::Var>, crate::tensor::Var) {
        let net = build_partition(&PartitionSpec {
            modules: 1,
            blocks_per_module: m,
            width: 3,
            hidden: Some(5),
            input_dim: 3,
            classes: 2,
            init_gain: 0.7,
            encoder_gain: None,
            seed,
        })
        .unwrap();
        let x = gaussian(6, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut g = Graph::new();
        let xv = g.constant(x);
        let mut b = Binder::trainable();
        let trace = net.modules[0].forward(&mut g, xv, &mut b).unwrap();
        let r = transport_penalty(&mut g, &trace, tau, PenaltyForm::ResidueSum).unwrap();
        let e = transport_penalty(&mut g, &trace, tau, PenaltyForm::Endpoint).unwrap();
        let (rv, ev) = (g.value(r).item(), g.value(e).item());
        (rv, ev, g, b.vars().to_vec(), r)
    }

    #[test]
    fn forms_agree_exactly_for_single_block() {
        for seed in 0..10 {
            let (r, e, ..) = random_module_penalties(seed, 1, 0.37);
            assert_eq!(r.to_bits(), e.to_bits());
        }
    }

    #[test]
    fn penalty_reaches_module_parameters() {
        let (_, _, mut g, vars, r) = random_module_penalties(3, 2, 1.0);
        g.backward(r, GradMode::Zero).unwrap();
        // every block weight and the second bias of each block influence the residues
        assert!(vars.iter().any(|&v| g.grad(v).unwrap().data().iter().any(|&x| x != 0.0)));
    }

    #[test]
    fn penalty_matches_graph_free_formula() {
        let net = build_partition(&PartitionSpec {
            modules: 1,
            blocks_per_module: 3,
            width: 2,
            hidden: None,
            input_dim: 2,
            classes: 2,
            init_gain: 1.0,
            encoder_gain: None,
            seed: 4,
        })
        .unwrap();
        let x = gaussian(5, 2, &mut ChaCha8Rng::seed_from_u64(8));
        let (_, residues) = net.modules[0].trace_values(&x);
        let expect: f64 = residues.iter().flat_map(|r| r.data()).map(|v| v * v).sum::<f64>() / 5.0 / (2.0 * 0.25);
        let mut g = Graph::new();
        let xv = g.constant(x);
        let trace = net.modules[0].forward(&mut g, xv, &mut Binder::frozen()).unwrap();
        let p = transport_penalty(&mut g, &trace, 0.25, PenaltyForm::ResidueSum).unwrap();
        assert!((g.value(p).item() - expect).abs() < 1e-12 * expect.max(1.0));
    }

    proptest! {
        #[test]
        fn penalty_is_nonnegative(seed in 0u64..500, m in 1usize..4, tau in 1e-3f64..1e3) {
            let (r, e, ..) = random_module_penalties(seed, m, tau);
            prop_assert!(r >= 0.0 && e >= 0.0);
        }
    }
}
