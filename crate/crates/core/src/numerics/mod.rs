//! Dense `f64` tensors, reverse-mode gradients, Adam, and finite-difference checks.

mod adam;
mod gradcheck;
mod graph;
pub mod ops;
mod tensor;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use gradcheck::{finite_diff_check, relative_error, CoordCheck, GradCheckConfig, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use ops::{cross_entropy_masked, gelu, layer_norm, matmul, softmax_rows};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::StandardNormal;

/// Seeded normal draws truncated to two standard deviations.
pub fn truncated_normal<R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape matches numel")
}

#[cfg(test)]
mod graph_tests {
    use super::*;
    use crate::error::Result;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Builds a scalar loss `Σ w ⊙ out` from a graph expression so every output
    /// coordinate contributes with a distinct weight.
    fn check<F>(inputs: Vec<Tensor>, seed: u64, build: F)
    where
        F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    {
        let probe_shape = {
            let mut g = Graph::new();
            let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
            let out = build(&mut g, &vars).unwrap();
            g.value(out).shape().to_vec()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = random(&mut rng, &probe_shape);
        let f = |ps: &[Tensor]| -> Result<(f64, Vec<Tensor>)> {
            let mut g = Graph::new();
            let vars: Vec<Var> = ps.iter().map(|t| g.param(t.clone())).collect();
            let out = build(&mut g, &vars)?;
            let flat_len = g.value(out).numel();
            let w = g.constant(weights.reshape(&[flat_len, 1])?);
            let flat = g.reshape(out, &[1, flat_len])?;
            let loss = g.matmul(flat, w)?;
            let loss = g.reshape(loss, &[1])?;
            let grads = g.backward(loss);
            let gs = vars
                .iter()
                .zip(ps)
                .map(|(v, t)| grads.get_or_zeros(*v, t))
                .collect();
            Ok((g.value(loss).data()[0], gs))
        };
        let report = finite_diff_check(f, &inputs, &GradCheckConfig::default()).unwrap();
        assert!(
            report.passed(),
            "max rel err {} at {:?}",
            report.max_relative_error,
            report.worst
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matmul_matches_triple_loop(m in 1usize..=8, k in 1usize..=8, n in 1usize..=8, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, &[m, k]);
            let b = random(&mut rng, &[k, n]);
            let c = matmul(&a, &b).unwrap();
            for i in 0..m {
                for j in 0..n {
                    let mut s = 0.0;
                    for p in 0..k {
                        s += a.at(i, p) * b.at(p, j);
                    }
                    prop_assert!((c.at(i, j) - s).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn matmul_gradients(m in 1usize..5, k in 1usize..5, n in 1usize..5, ta: bool, tb: bool, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, &if ta { [k, m] } else { [m, k] });
            let b = random(&mut rng, &if tb { [n, k] } else { [k, n] });
            check(vec![a, b], seed, |g, v| g.matmul_t(v[0], ta, v[1], tb));
        }

        #[test]
        fn softmax_gradients(r in 1usize..5, c in 1usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&mut rng, &[r, c]);
            let mut mask = Tensor::zeros(&[r, c]);
            for i in 0..r {
                if c > 1 { mask.set(i, i % c, f64::NEG_INFINITY); }
            }
            check(vec![x], seed, move |g, v| g.softmax_rows(v[0], Some(&mask)));
        }

        #[test]
        // d = 2 is excluded: its normalized output is ±1 for any input, so the
        // true input gradient is zero and the check would compare rounding noise.
        fn layer_norm_gradients(r in 1usize..4, d in 3usize..7, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&mut rng, &[r, d]);
            let gamma = random(&mut rng, &[d]);
            let beta = random(&mut rng, &[d]);
            check(vec![x, gamma, beta], seed, |g, v| g.layer_norm(v[0], v[1], v[2], 1e-12));
        }

        #[test]
        fn elementwise_and_shape_gradients(r in 1usize..4, c in 2usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random(&mut rng, &[r, c]);
            let y = random(&mut rng, &[r, c]);
            let b = random(&mut rng, &[c]);
            check(vec![x, y, b], seed, |g, v| {
                let s = g.add(v[0], v[1])?;
                let s = g.add_bias(s, v[2])?;
                let s = g.gelu(s);
                let s = g.scale(s, 1.7);
                let left = g.slice_cols(s, 0, 1)?;
                let right = g.slice_cols(s, 1, c)?;
                g.concat_cols(&[right, left, right])
            });
        }

        #[test]
        fn gather_and_nll_gradients(rows in 2usize..6, c in 2usize..6, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let table = random(&mut rng, &[rows, c]);
            let ids: Vec<usize> = (0..3).map(|i| (i * 7 + seed as usize) % rows).collect();
            let pairs: Vec<(usize, usize)> = (0..3).map(|i| (i, (i + seed as usize) % c)).collect();
            check(vec![table], seed, move |g, v| {
                let x = g.gather_rows(v[0], &ids)?;
                g.nll(x, &pairs, None)
            });
        }

        #[test]
        fn relative_gradients(len in 1usize..5, dk in 1usize..4, k in 1usize..3, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = random(&mut rng, &[len, dk]);
            let t = random(&mut rng, &[2 * k + 1, dk]);
            let p = random(&mut rng, &[len, len]);
            check(vec![q, t, p], seed, move |g, v| {
                let s = g.relative_scores(v[0], v[1], k)?;
                let r = g.relative_values(v[2], v[1], k)?;
                let sr = g.matmul(s, r)?;
                g.add(sr, r)
            });
        }
    }

    #[test]
    fn dropout_scales_kept_entries() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_rows(&[[1.0, 2.0, 3.0, 4.0]]));
        let y = g.dropout(x, &[true, false, true, false], 0.5).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 0.0, 6.0, 0.0]);
    }

    #[test]
    fn truncated_normal_is_bounded_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let x = truncated_normal(&mut a, &[50, 20], 0.02);
        let y = truncated_normal(&mut b, &[50, 20], 0.02);
        assert_eq!(x, y);
        assert!(x.data().iter().all(|v| v.abs() <= 0.04));
    }
}
