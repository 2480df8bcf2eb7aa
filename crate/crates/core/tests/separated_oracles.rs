//! Separated tensors against dense Kronecker oracles.

use std::sync::Arc;

use ddpgd::param_grid::{ParamAxis, ParamPoint};
use ddpgd::separated::{SeparatedOperator, SeparatedVector, Term};
use ddpgd::sparse::CsrMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense tensor `T[i][a][b]` of a vector with two parametric axes.
fn dense(v: &SeparatedVector) -> Vec<f64> {
    let (n, na, nb) = (v.space_len(), v.dim_len(1), v.dim_len(2));
    let mut out = vec![0.0; n * na * nb];
    for t in v.terms() {
        for i in 0..n {
            for a in 0..na {
                for b in 0..nb {
                    out[(i * na + a) * nb + b] += t.space[i] * t.modes[0][a] * t.modes[1][b];
                }
            }
        }
    }
    out
}

fn frob(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn axes(na: usize, nb: usize) -> Vec<ParamAxis> {
    vec![
        ParamAxis::with_intervals("a", 0.0, 1.0, na - 1),
        ParamAxis::with_intervals("b", -1.0, 2.0, nb - 1),
    ]
}

fn vector_strategy() -> impl Strategy<Value = SeparatedVector> {
    (1usize..=8, 2usize..=8, 2usize..=8, 1usize..=5).prop_flat_map(|(n, na, nb, m)| {
        prop::collection::vec(
            (
                prop::collection::vec(-1.0f64..1.0, n),
                prop::collection::vec(-1.0f64..1.0, na),
                prop::collection::vec(-1.0f64..1.0, nb),
            ),
            m,
        )
        .prop_map(move |terms| {
            let terms = terms.into_iter().map(|(s, a, b)| Term::new(s, vec![a, b])).collect();
            SeparatedVector::from_terms(n, axes(na, nb), terms).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evaluation_at_grid_nodes_matches_dense(v in vector_strategy()) {
        let d = dense(&v);
        let (na, nb) = (v.dim_len(1), v.dim_len(2));
        let scale = frob(&d).max(1.0);
        for a in 0..na {
            for b in 0..nb {
                let p = ParamPoint::new().with("a", v.axes()[0].nodes()[a]).with("b", v.axes()[1].nodes()[b]);
                let e = v.evaluate(&p).unwrap();
                let at = v.evaluate_at_nodes(&[a, b]);
                for i in 0..v.space_len() {
                    let r = d[(i * na + a) * nb + b];
                    prop_assert!((e[i] - r).abs() <= 1e-12 * scale);
                    prop_assert!((at[i] - r).abs() <= 1e-12 * scale);
                }
            }
        }
    }

    #[test]
    fn canonical_norm_is_frobenius(v in vector_strategy()) {
        let f = frob(&dense(&v));
        prop_assert!((v.norm() - f).abs() <= 1e-12 * f.max(1.0));
    }

    #[test]
    fn apply_matches_kronecker_product(
        v in vector_strategy(),
        seed in 0u64..1000,
    ) {
        let (n, na, nb) = (v.space_len(), v.dim_len(1), v.dim_len(2));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = |_: u64| rng.random_range(-1.0..1.0);
        let mut k = SeparatedOperator::new(n, n, v.axes().to_vec());
        let mut dense_ops = Vec::new();
        for l in 0..2u64 {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| r(100 * l + (i * n + j) as u64)).collect()).collect();
            let ca: Vec<f64> = (0..na).map(|a| r(1000 + 100 * l + a as u64)).collect();
            let cb: Vec<f64> = (0..nb).map(|b| r(5000 + 100 * l + b as u64)).collect();
            k.push_term(Arc::new(CsrMatrix::from_dense(&rows)), vec![ca.clone(), cb.clone()]).unwrap();
            dense_ops.push((rows, ca, cb));
        }
        let got = dense(&k.apply(&v).unwrap());
        let t = dense(&v);
        let mut want = vec![0.0; n * na * nb];
        for (rows, ca, cb) in &dense_ops {
            for i in 0..n {
                for a in 0..na {
                    for b in 0..nb {
                        let s: f64 = (0..n).map(|j| rows[i][j] * t[(j * na + a) * nb + b]).sum();
                        want[(i * na + a) * nb + b] += ca[a] * cb[b] * s;
                    }
                }
            }
        }
        let scale = frob(&want).max(1.0);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn compression_honours_its_tolerance(v in vector_strategy(), eps in prop::sample::select(vec![1e-1, 1e-2, 1e-3])) {
        let w = v.compress(eps);
        prop_assert!(w.len() <= v.len().max(1));
        let (dv, dw) = (dense(&v), dense(&w));
        let diff: Vec<f64> = dv.iter().zip(&dw).map(|(a, b)| a - b).collect();
        prop_assert!(frob(&diff) <= eps * frob(&dv) + 1e-12, "{} > {}", frob(&diff), eps * frob(&dv));
    }
}

#[test]
fn redundant_terms_compress_to_their_rank() {
    let ax = axes(5, 4);
    let u = || Term::new(vec![1.0, 2.0, -1.0], vec![vec![1.0, 0.5, 0.0, -0.5, -1.0], vec![1.0, 1.0, 2.0, 0.0]]);
    let w = || Term::new(vec![0.0, 1.0, 1.0], vec![vec![1.0, 0.0, -2.0, 0.0, 1.0], vec![1.0, -1.0, 0.0, 3.0]]);
    let mut a = u();
    a.space.iter_mut().for_each(|x| *x *= 2.0);
    let v = SeparatedVector::from_terms(3, ax, vec![u(), w(), a, w()]).unwrap();
    let c = v.compress(1e-10);
    assert_eq!(c.len(), 2);
    let (dv, dc) = (dense(&v), dense(&c));
    let err: f64 = frob(&dv.iter().zip(&dc).map(|(x, y)| x - y).collect::<Vec<_>>());
    assert!(err <= 1e-10 * frob(&dv));
}

#[test]
fn interpolation_between_nodes_is_linear() {
    let ax = vec![ParamAxis::with_intervals("a", 0.0, 2.0, 2), ParamAxis::with_intervals("b", 0.0, 1.0, 1)];
    let v = SeparatedVector::from_terms(1, ax, vec![Term::new(vec![3.0], vec![vec![0.0, 1.0, 4.0], vec![1.0, 2.0]])]).unwrap();
    let e = v.evaluate(&ParamPoint::new().with("a", 1.5).with("b", 0.25)).unwrap();
    assert!((e[0] - 3.0 * 2.5 * 1.25).abs() < 1e-14);
}
