use proptest::prelude::*;
use trgl::ot::{brute_force_w2, exact_w2, holder_probe, mms_oracle, w2, DiscreteDistribution, MmsConfig, TransportPlan};
use trgl::tensor::Tensor;

fn cloud(n: usize) -> impl Strategy<Value = DiscreteDistribution> {
    prop::collection::vec(-5.0f64..5.0, 2 * n).prop_map(move |v| DiscreteDistribution::new(Tensor::matrix(n, 2, v).unwrap(), None).unwrap())
}

fn pair(max_n: usize) -> impl Strategy<Value = (DiscreteDistribution, DiscreteDistribution)> {
    (1..=max_n).prop_flat_map(|n| (cloud(n), cloud(n)))
}

fn shifted(a: &DiscreteDistribution, v: [f64; 2]) -> DiscreteDistribution {
    let data = a.points.data().chunks(2).flat_map(|p| [p[0] + v[0], p[1] + v[1]]).collect();
    DiscreteDistribution::new(Tensor::matrix(a.len(), 2, data).unwrap(), None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assignment_attains_the_brute_force_minimum((a, b) in pair(6)) {
        let (fast, plan) = exact_w2(&a, &b).unwrap();
        let (slow, _) = brute_force_w2(&a, &b).unwrap();
        prop_assert_eq!(fast, slow);
        prop_assert_eq!(TransportPlan::recompute(&plan.perm, &a, &b), fast);
    }

    #[test]
    fn plan_is_a_bijection((a, b) in pair(30)) {
        let (_, plan) = exact_w2(&a, &b).unwrap();
        let mut seen = plan.perm.clone();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..a.len()).collect::<Vec<_>>());
    }

    #[test]
    fn symmetric_and_zero_on_the_diagonal((a, b) in pair(25)) {
        prop_assert_eq!(w2(&a, &b).unwrap(), w2(&b, &a).unwrap());
        prop_assert_eq!(w2(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn triangle_inequality((a, b, c) in (1usize..20).prop_flat_map(|n| (cloud(n), cloud(n), cloud(n)))) {
        let (ab, bc, ac) = (w2(&a, &b).unwrap(), w2(&b, &c).unwrap(), w2(&a, &c).unwrap());
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn relabeling_changes_nothing((a, b) in pair(25), rot in 0usize..25) {
        let n = b.len();
        let idx: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let b2 = b.with_points(b.points.select_rows(&idx)).unwrap();
        prop_assert_eq!(w2(&a, &b).unwrap(), w2(&a, &b2).unwrap());
    }

    #[test]
    fn rigid_shift_costs_its_squared_length(a in (1usize..20).prop_flat_map(cloud), vx in -3.0f64..3.0, vy in -3.0f64..3.0) {
        let (cost, _) = exact_w2(&a, &shifted(&a, [vx, vy])).unwrap();
        prop_assert!((cost - (vx * vx + vy * vy)).abs() <= 1e-9 * (1.0 + vx * vx + vy * vy));
    }

    #[test]
    fn common_translation_preserves_distance((a, b) in pair(15), vx in -3.0f64..3.0, vy in -3.0f64..3.0) {
        let d = w2(&a, &b).unwrap();
        let moved = w2(&shifted(&a, [vx, vy]), &shifted(&b, [vx, vy])).unwrap();
        prop_assert!((d - moved).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn scaled_identity_recovers_its_constant(a in (12usize..40).prop_flat_map(cloud), c in 0.1f64..10.0) {
        prop_assume!(a.points.data().chunks(2).any(|p| p != a.points.row(0)));
        let map = |x: &Tensor| Ok(Tensor::matrix(x.rows(), x.cols(), x.data().iter().map(|v| c * v).collect()).unwrap());
        let r = holder_probe(map, &a, 50, 1).unwrap();
        prop_assert!((r.eta - 1.0).abs() < 1e-6);
        prop_assert!((r.c - c).abs() < 1e-6 * c);
    }
}

#[test]
fn oracle_never_worse_than_staying_put() {
    for seed in 0..3 {
        let ds = trgl::data::gen_two_moons(40, 0.1, seed).unwrap();
        let rho = DiscreteDistribution::from_dataset(&ds).unwrap();
        for tau in [0.1, 1.0] {
            let step = mms_oracle(&rho, &MmsConfig::new(tau), None).unwrap();
            assert!(step.objective <= step.z_input + 1e-6);
            assert!(step.z_output <= step.z_input + 1e-6);
            let moved = exact_w2(&step.output, &rho).unwrap().0;
            assert!((step.objective - (step.z_output + moved / (2.0 * tau))).abs() < 1e-9);
        }
    }
}
