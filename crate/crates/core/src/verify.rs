//! Self-contained property suites with embedded seeds, shared by the
//! `verify` command and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::gen_two_moons;
use crate::error::Result;
use crate::gradcheck::{op_suite, DEFAULT_TOLERANCE};
use crate::ot::{
    brute_force_w2, exact_w2, holder_probe, mms_chain, mms_oracle, verify_prop1, DiscreteDistribution, MmsConfig,
    Prop1Config, Prop1Report,
};
use crate::tensor::{gaussian, kernels, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Ot,
    Mms,
    Prop1,
    Holder,
    Gradcheck,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Ot => "ot",
            Suite::Mms => "mms",
            Suite::Prop1 => "prop1",
            Suite::Holder => "holder",
            Suite::Gradcheck => "gradcheck",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        SuiteReport {
            suite: suite.name().into(),
            checks: Vec::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One `PASS`/`FAIL` line per check.
    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {} ({})", if c.passed { "PASS" } else { "FAIL" }, self.suite, c.name, c.detail))
            .collect()
    }
}

/// Settings of the suites; the defaults are the embedded acceptance values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSettings {
    pub gradcheck_instances: usize,
    pub ot_instances: usize,
    pub mms_seeds: Vec<u64>,
    pub mms_taus: Vec<f64>,
    pub mms_chain_steps: usize,
    pub cloud_n: usize,
    pub cloud_noise: f64,
    pub prop1_seeds: Vec<u64>,
    pub prop1_tau: f64,
    /// A seed passes when its ratio is below this.
    pub prop1_threshold: f64,
    /// Seeds that must pass.
    pub prop1_required: usize,
    pub holder_pairs: usize,
}

impl Default for SuiteSettings {
    fn default() -> Self {
        SuiteSettings {
            gradcheck_instances: 20,
            ot_instances: 120,
            mms_seeds: (0..10).collect(),
            mms_taus: vec![0.1, 0.5, 2.0],
            mms_chain_steps: 5,
            cloud_n: 128,
            cloud_noise: 0.1,
            prop1_seeds: (0..5).collect(),
            prop1_tau: 0.5,
            prop1_threshold: 0.5,
            prop1_required: 4,
            holder_pairs: 400,
        }
    }
}

pub fn moons_cloud(n: usize, noise: f64, seed: u64) -> Result<DiscreteDistribution> {
    DiscreteDistribution::from_dataset(&gen_two_moons(n, noise, seed)?)
}

pub fn run_suite(suite: Suite, s: &SuiteSettings) -> Result<SuiteReport> {
    match suite {
        Suite::Gradcheck => gradcheck_suite(s),
        Suite::Ot => ot_suite(s),
        Suite::Mms => mms_suite(s),
        Suite::Prop1 => Ok(prop1_suite(s)?.0),
        Suite::Holder => holder_suite(s),
    }
}

fn gradcheck_suite(s: &SuiteSettings) -> Result<SuiteReport> {
    let mut r = SuiteReport::new(Suite::Gradcheck);
    let checks = op_suite(s.gradcheck_instances, 2024)?;
    // group by op: "matmul #3" -> "matmul"
    let mut ops: Vec<(String, f64, usize)> = Vec::new();
    for c in &checks {
        let op = c.label.split(" #").next().unwrap_or(&c.label).to_string();
        match ops.iter_mut().find(|o| o.0 == op) {
            Some(o) => {
                o.1 = o.1.max(c.max_rel_error);
                o.2 += 1;
            }
            None => ops.push((op, c.max_rel_error, 1)),
        }
    }
    for (op, worst, count) in ops {
        r.push(
            format!("{op} finite differences"),
            worst <= DEFAULT_TOLERANCE,
            format!("{count} instances, max relative error {worst:.2e}"),
        );
    }
    Ok(r)
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteDistribution {
    DiscreteDistribution::new(gaussian(n, d, rng), None).unwrap()
}

fn permuted(c: &DiscreteDistribution, rng: &mut ChaCha8Rng) -> DiscreteDistribution {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.shuffle(rng);
    DiscreteDistribution::new(c.points.select_rows(&idx), None).unwrap()
}

fn ot_suite(s: &SuiteSettings) -> Result<SuiteReport> {
    let mut r = SuiteReport::new(Suite::Ot);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut mismatches = 0;
    for i in 0..s.ot_instances {
        let n = 1 + i % 6;
        let d = rng.random_range(1..=3);
        let a = random_cloud(&mut rng, n, d);
        let b = random_cloud(&mut rng, n, d);
        if exact_w2(&a, &b)?.0 != brute_force_w2(&a, &b)?.0 {
            mismatches += 1;
        }
    }
    r.push(
        "assignment equals factorial brute force (n <= 6)",
        mismatches == 0,
        format!("{} clouds, {mismatches} mismatches", s.ot_instances),
    );

    let (mut asym, mut tri, mut perm, mut self_zero) = (0, 0, 0, 0);
    let trials = 40;
    for i in 0..trials {
        let n = 2 + i % 59;
        let a = random_cloud(&mut rng, n, 2);
        let b = random_cloud(&mut rng, n, 2);
        let c = random_cloud(&mut rng, n, 2);
        let ab = exact_w2(&a, &b)?.0;
        if ab != exact_w2(&b, &a)?.0 {
            asym += 1;
        }
        let (bc, ac) = (exact_w2(&b, &c)?.0, exact_w2(&a, &c)?.0);
        if ac.sqrt() > ab.sqrt() + bc.sqrt() + 1e-9 {
            tri += 1;
        }
        if exact_w2(&permuted(&a, &mut rng), &permuted(&b, &mut rng))?.0 != ab {
            perm += 1;
        }
        if exact_w2(&a, &permuted(&a, &mut rng))?.0 != 0.0 {
            self_zero += 1;
        }
    }
    r.push("symmetry (exact)", asym == 0, format!("{trials} pairs, {asym} violations"));
    r.push("triangle inequality on W2 (1e-9)", tri == 0, format!("{trials} triples, {tri} violations"));
    r.push("relabeling invariance (n <= 60, exact)", perm == 0, format!("{trials} pairs, {perm} violations"));
    r.push("zero on equal multisets", self_zero == 0, format!("{trials} clouds, {self_zero} violations"));
    Ok(r)
}

fn mms_suite(s: &SuiteSettings) -> Result<SuiteReport> {
    let mut r = SuiteReport::new(Suite::Mms);
    let (mut worst_step, mut worst_chain) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut step_fail, mut chain_fail, mut escaped) = (0, 0, 0);
    let mut runs = 0;
    for &seed in &s.mms_seeds {
        let rho = moons_cloud(s.cloud_n, s.cloud_noise, seed)?;
        for &tau in &s.mms_taus {
            let cfg = MmsConfig::new(tau);
            let chain = mms_chain(&rho, &cfg, s.mms_chain_steps)?;
            runs += 1;
            // objective <= Z(input) bounds the coupling cost, so no particle
            // moves further than sqrt(2 tau n Z(input))
            let mut prev = &rho;
            for st in &chain {
                let reach = (2.0 * tau * prev.len() as f64 * st.z_input).sqrt();
                if !st.output.within_box_of(prev, reach) {
                    escaped += 1;
                }
                prev = &st.output;
            }
            let first = &chain[0];
            let excess = first.objective - first.z_input;
            worst_step = worst_step.max(excess);
            if excess > 1e-6 {
                step_fail += 1;
            }
            // each step's Z(output) must not exceed its Z(input)
            for st in &chain {
                let rise = st.z_output - st.z_input;
                worst_chain = worst_chain.max(rise);
                if rise > 1e-6 || st.objective - st.z_input > 1e-6 {
                    chain_fail += 1;
                }
            }
        }
    }
    r.push(
        "proximal decrease: objective <= Z(input) + 1e-6",
        step_fail == 0,
        format!("{runs} clouds x tau, worst excess {worst_step:.3e}"),
    );
    r.push(
        format!("chained steps non-increasing in Z over {} steps", s.mms_chain_steps),
        chain_fail == 0,
        format!("{runs} chains, worst rise {worst_chain:.3e}"),
    );

    r.push(
        "outputs stay in the input box grown by sqrt(2 tau n Z)",
        escaped == 0,
        format!("{} steps, {escaped} outside", runs * s.mms_chain_steps),
    );

    let rho = moons_cloud(64, s.cloud_noise, 99)?;
    let tiny = mms_oracle(&rho, &MmsConfig::new(1e-8), None)?;
    let disp = tiny.mean_displacement(&rho);
    r.push("tau = 1e-8 keeps the cloud in place", disp < 1e-4, format!("mean displacement {disp:.2e}"));
    Ok(r)
}

/// The suite and the per-seed reports.
pub fn prop1_suite(s: &SuiteSettings) -> Result<(SuiteReport, Vec<Prop1Report>)> {
    let mut r = SuiteReport::new(Suite::Prop1);
    let mut reports = Vec::new();
    for &seed in &s.prop1_seeds {
        let rho = moons_cloud(s.cloud_n, s.cloud_noise, seed)?;
        reports.push(verify_prop1(&rho, &Prop1Config::new(s.prop1_tau, seed))?);
    }
    let below = reports.iter().filter(|p| p.below(s.prop1_threshold)).count();
    let ratios: Vec<String> = reports
        .iter()
        .map(|p| p.ratio.map_or("degenerate".into(), |x| format!("{x:.3}")))
        .collect();
    r.push(
        format!(
            "module output within ratio {} of the oracle step on >= {} of {} seeds",
            s.prop1_threshold,
            s.prop1_required,
            reports.len()
        ),
        below >= s.prop1_required,
        format!("tau {}, ratios [{}]", s.prop1_tau, ratios.join(", ")),
    );
    Ok((r, reports))
}

/// `x -> |x|^(1/2) x / |x|`, Hölder with exponent 1/2.
pub fn sqrt_radial(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let d = x.cols();
    for (i, n2) in kernels::row_sq_norms(x).into_iter().enumerate() {
        let n = n2.sqrt();
        let c = if n > 0.0 { n.sqrt() / n } else { 0.0 };
        for v in &mut out.data_mut()[i * d..(i + 1) * d] {
            *v *= c;
        }
    }
    out
}

/// Points with norms log-uniform in `(1e-8, 1)` and uniform directions.
pub fn multiscale_cloud(n: usize, d: usize, seed: u64) -> DiscreteDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = gaussian(n, d, &mut rng);
    let norms = kernels::row_sq_norms(&g);
    for (i, n2) in norms.into_iter().enumerate() {
        let target = 10f64.powf(rng.random_range(-8.0..0.0));
        let c = target / n2.sqrt();
        for v in &mut g.data_mut()[i * d..(i + 1) * d] {
            *v *= c;
        }
    }
    DiscreteDistribution::new(g, None).unwrap()
}

fn holder_suite(s: &SuiteSettings) -> Result<SuiteReport> {
    let mut r = SuiteReport::new(Suite::Holder);
    let support = moons_cloud(200, s.cloud_noise, 3)?;
    let id = holder_probe(|x| Ok(x.clone()), &support, s.holder_pairs, 1)?;
    r.push(
        "identity: eta = 1, C = 1 (1e-6)",
        (id.eta - 1.0).abs() <= 1e-6 && (id.c - 1.0).abs() <= 1e-6,
        format!("eta {:.9}, C {:.9}", id.eta, id.c),
    );
    let two = holder_probe(|x| Ok(kernels::scale(x, 2.0)), &support, s.holder_pairs, 2)?;
    r.push(
        "doubling: eta = 1, C = 2 (1e-6)",
        (two.eta - 1.0).abs() <= 1e-6 && (two.c - 2.0).abs() <= 1e-6,
        format!("eta {:.9}, C {:.9}", two.eta, two.c),
    );
    let half = holder_probe(|x| Ok(sqrt_radial(x)), &multiscale_cloud(400, 2, 5), s.holder_pairs, 3)?;
    r.push(
        "square-root radial map: eta = 0.5 (0.05)",
        (half.eta - 0.5).abs() <= 0.05,
        format!("eta {:.4}", half.eta),
    );
    Ok(r)
}
