//! Analytic count of stored scalars during training.
//!
//! Per sample, a layer keeps what its backward pass needs: a residual block
//! its input (`d`) and hidden activation (`h`), the encoder its input and
//! output (`in + d`), a head its input and logits (`d + C`). Every trainable
//! parameter also carries a gradient and a momentum buffer.
//!
//! Parallel training runs modules one after another on each batch and frees
//! a module's graph once it has stepped, so only one module's activations are
//! live at a time, while all parameters (with `K` heads) stay resident.

use serde::{Deserialize, Serialize};

use super::Regime;
use crate::net::PartitionSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryCounts {
    /// Resident parameter scalars.
    pub params: usize,
    /// Gradient plus velocity scalars of the trainable parameters.
    pub optimizer: usize,
    /// Activation scalars kept for backward.
    pub activations: usize,
}

impl MemoryCounts {
    pub fn total(&self) -> usize {
        self.params + self.optimizer + self.activations
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryAccount {
    pub batch: usize,
    pub e2e: MemoryCounts,
    /// Peak over modules; also the multi-lap figure.
    pub sequential: MemoryCounts,
    pub parallel: MemoryCounts,
}

impl MemoryAccount {
    pub fn counts(&self, regime: &Regime) -> MemoryCounts {
        match regime {
            Regime::Sequential | Regime::MultiLap { .. } => self.sequential,
            Regime::Parallel => self.parallel,
        }
    }

    /// Percentage of the end-to-end total saved by `regime`.
    pub fn saved_pct(&self, regime: &Regime) -> f64 {
        let base = self.e2e.total() as f64;
        100.0 * (base - self.counts(regime).total() as f64) / base
    }
}

struct Sizes {
    enc_params: usize,
    block_params: usize,
    head_params: usize,
    enc_acts: usize,
    block_acts: usize,
    head_acts: usize,
}

fn sizes(spec: &PartitionSpec) -> Sizes {
    let (i, d, h, c) = (spec.input_dim, spec.width, spec.hidden(), spec.classes);
    Sizes {
        enc_params: i * d + d,
        block_params: d * h + h + h * d + d,
        head_params: d * c + c,
        enc_acts: i + d,
        block_acts: d + h,
        head_acts: d + c,
    }
}

pub fn memory_account(spec: &PartitionSpec, batch: usize) -> MemoryAccount {
    let s = sizes(spec);
    let (k_total, m) = (spec.modules, spec.blocks_per_module);
    let blocks = k_total * m;

    let e2e_params = s.enc_params + blocks * s.block_params + s.head_params;
    let e2e = MemoryCounts {
        params: e2e_params,
        optimizer: 2 * e2e_params,
        activations: batch * (s.enc_acts + blocks * s.block_acts + s.head_acts),
    };

    // module k's live activations; the encoder trains with module 1
    let module_acts = |k: usize| batch * (usize::from(k == 1) * s.enc_acts + m * s.block_acts + s.head_acts);
    let module_trainable = |k: usize| usize::from(k == 1) * s.enc_params + m * s.block_params + s.head_params;

    let sequential = (1..=k_total)
        .map(|k| {
            let prefix = s.enc_params + (k - 1) * m * s.block_params;
            let resident = prefix + m * s.block_params + s.head_params;
            let trainable = module_trainable(k);
            MemoryCounts {
                params: resident,
                optimizer: 2 * trainable,
                activations: module_acts(k),
            }
        })
        .max_by_key(|c| c.total())
        .unwrap();

    let all_params = s.enc_params + blocks * s.block_params + k_total * s.head_params;
    let parallel = MemoryCounts {
        params: all_params,
        optimizer: 2 * all_params,
        activations: (1..=k_total).map(module_acts).max().unwrap(),
    };

    MemoryAccount {
        batch,
        e2e,
        sequential,
        parallel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(k: usize, m: usize, input: usize, d: usize, c: usize) -> PartitionSpec {
        PartitionSpec {
            modules: k,
            blocks_per_module: m,
            width: d,
            hidden: None,
            input_dim: input,
            classes: c,
            init_gain: 0.05,
            encoder_gain: None,
            seed: 0,
        }
    }

    #[test]
    fn one_module_saves_nothing() {
        for (m, b) in [(1, 1), (4, 32), (16, 256)] {
            let a = memory_account(&spec(1, m, 784, 64, 10), b);
            assert_eq!(a.sequential, a.e2e);
            assert_eq!(a.parallel, a.e2e);
            assert_eq!(a.saved_pct(&Regime::Sequential), 0.0);
            assert_eq!(a.saved_pct(&Regime::Parallel), 0.0);
        }
    }

    #[test]
    fn two_block_trunk_by_hand() {
        // input 2, d = h = 2, C = 3, K = 2, M = 1, batch 1
        // encoder W 2x2 + b 2 = 6; block W1 4 + b1 2 + W2 4 + b2 2 = 12; head W 6 + b 3 = 9
        let a = memory_account(&spec(2, 1, 2, 2, 3), 1);
        // e2e: params 6 + 12 + 12 + 9 = 39; acts: x 2, enc out 2, (2 + 2) per block, head in 2 + logits 3
        assert_eq!(a.e2e, MemoryCounts { params: 39, optimizer: 78, activations: 2 + 2 + 4 + 4 + 2 + 3 });
        // sequential module 1: encoder + block + head resident and trainable, acts 4 + 4 + 5
        // sequential module 2: encoder + 2 blocks + head resident, block + head trainable, acts 4 + 5
        let m1 = MemoryCounts { params: 27, optimizer: 54, activations: 13 };
        let m2 = MemoryCounts { params: 39, optimizer: 42, activations: 9 };
        assert_eq!(m1.total(), 94);
        assert_eq!(m2.total(), 90);
        assert_eq!(a.sequential, m1);
        // parallel: everything plus two heads resident and trained; module 1 acts are the peak
        assert_eq!(a.parallel, MemoryCounts { params: 48, optimizer: 96, activations: 13 });
    }

    #[test]
    fn parallel_savings_grow_with_module_count() {
        let pct = |k: usize| memory_account(&spec(k, 16 / k, 784, 64, 10), 256).saved_pct(&Regime::Parallel);
        let s: Vec<f64> = [1, 2, 4, 8, 16].iter().map(|&k| pct(k)).collect();
        assert_eq!(s[0], 0.0);
        for w in s.windows(2) {
            assert!(w[1] > w[0], "{s:?}");
        }
    }

    #[test]
    fn sequential_savings_grow_with_module_count() {
        let pct = |k: usize| memory_account(&spec(k, 16 / k, 784, 64, 10), 256).saved_pct(&Regime::Sequential);
        assert!(pct(16) > pct(4) && pct(4) > 0.0);
    }
}
