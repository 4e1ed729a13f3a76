#![allow(dead_code)]

use cmdp_core::confidence::TransitionBox;
use cmdp_core::{Cmdp, CostNoise, Kernel, SaTable, Shape, TabularPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row of `n` probabilities, some of them exactly zero.
pub fn random_row<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n)
        .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() })
        .collect();
    if row.iter().all(|x| *x == 0.0) {
        row[rng.random_range(0..n)] = 1.0;
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= total);
    row
}

pub fn random_kernel<R: Rng>(rng: &mut R, shape: Shape) -> Kernel {
    let mut probs = Vec::with_capacity(shape.sas_len());
    for _ in 0..shape.sa_len() {
        probs.extend(random_row(rng, shape.states));
    }
    Kernel::from_vec(shape, probs).unwrap()
}

pub fn random_policy<R: Rng>(rng: &mut R, shape: Shape) -> TabularPolicy {
    let mut probs = Vec::with_capacity(shape.sa_len());
    for _ in 0..shape.horizon * shape.states {
        probs.extend(random_row(rng, shape.actions));
    }
    TabularPolicy::from_vec(shape, probs).unwrap()
}

pub fn random_table<R: Rng>(rng: &mut R, shape: Shape) -> SaTable {
    SaTable::from_fn(shape, |_, _, _| rng.random::<f64>())
}

pub fn random_shape<R: Rng>(rng: &mut R, max_s: usize, max_a: usize, max_h: usize) -> Shape {
    Shape::new(
        rng.random_range(1..=max_s),
        rng.random_range(1..=max_a),
        rng.random_range(1..=max_h),
    )
    .unwrap()
}

/// Random CMDP whose thresholds are met with slack by some random policy.
pub fn random_cmdp<R: Rng>(rng: &mut R, shape: Shape, constraints: usize) -> Cmdp {
    let kernel = random_kernel(rng, shape);
    let objective = random_table(rng, shape);
    let tables: Vec<SaTable> = (0..constraints).map(|_| random_table(rng, shape)).collect();
    let anchor = random_policy(rng, shape);
    let thresholds = tables
        .iter()
        .map(|d| {
            let probe = Cmdp::new(kernel.clone(), objective.clone(), vec![d.clone()], vec![shape.horizon as f64], 0, CostNoise::Deterministic)
                .unwrap();
            let v = probe.constraint_values(&anchor).unwrap()[0];
            (v + rng.random::<f64>() * 0.3).min(shape.horizon as f64)
        })
        .collect();
    Cmdp::new(kernel, objective, tables, thresholds, 0, CostNoise::Deterministic).unwrap()
}

/// Box of random half-width around `kernel`.
pub fn random_box<R: Rng>(rng: &mut R, kernel: &Kernel) -> TransitionBox {
    let radius = rng.random::<f64>() * 0.3;
    TransitionBox::around(kernel, radius)
}

/// All vertices of `{lower <= p <= upper, sum p = 1}`: every coordinate but one
/// sits at a bound and the free one absorbs the remainder.
pub fn box_simplex_vertices(lower: &[f64], upper: &[f64]) -> Vec<Vec<f64>> {
    let n = lower.len();
    let mut out = Vec::new();
    for free in 0..n {
        for mask in 0..(1u32 << (n - 1)) {
            let mut p = vec![0.0; n];
            let mut bit = 0;
            for i in 0..n {
                if i == free {
                    continue;
                }
                p[i] = if mask & (1 << bit) != 0 { upper[i] } else { lower[i] };
                bit += 1;
            }
            let rest = 1.0 - p.iter().sum::<f64>();
            if rest >= lower[free] - 1e-12 && rest <= upper[free] + 1e-12 {
                p[free] = rest;
                out.push(p);
            }
        }
    }
    out
}

/// Plain finite-horizon value iteration on a known kernel.
pub fn value_iteration(kernel: &Kernel, reward: &SaTable) -> Vec<f64> {
    let shape = kernel.shape();
    let (ns, na, nh) = (shape.states, shape.actions, shape.horizon);
    let mut v = vec![0.0; (nh + 1) * ns];
    for h in (0..nh).rev() {
        for s in 0..ns {
            let mut best = f64::INFINITY;
            for a in 0..na {
                let mut q = reward.get(h, s, a);
                for n in 0..ns {
                    q += kernel.get(h, s, a, n) * v[(h + 1) * ns + n];
                }
                best = best.min(q);
            }
            v[h * ns + s] = best;
        }
    }
    v
}
