//! PGD solutions against per-grid-node direct solves and closed forms.

use std::sync::Arc;

use ddpgd::param_grid::ParamAxis;
use ddpgd::pgd::{enrich_once, residual, solve, PgdSettings};
use ddpgd::separated::{SeparatedOperator, SeparatedVector, Term};
use ddpgd::sparse::{dense_solve, CsrMatrix};
use proptest::prelude::*;

fn uncompressed(eps: f64) -> PgdSettings {
    PgdSettings {
        eps_enrich: eps,
        eps_compress: None,
        ..PgdSettings::default()
    }
}

/// Dense `Σ_l c_l(μ_a) K_l` at grid node `a` of the single parametric axis.
fn dense_at(k: &SeparatedOperator, a: usize) -> Vec<Vec<f64>> {
    let n = k.nrows();
    let mut out = vec![vec![0.0; n]; n];
    for t in k.terms() {
        let d = t.matrix.to_dense();
        for i in 0..n {
            for j in 0..n {
                out[i][j] += t.coeffs[0][a] * d[i][j];
            }
        }
    }
    out
}

/// Relative discrete L² error over all grid nodes against per-node direct solves.
fn grid_error(k: &SeparatedOperator, f: &SeparatedVector, u: &SeparatedVector) -> f64 {
    let (mut err, mut nrm) = (0.0, 0.0);
    for a in 0..f.dim_len(1) {
        let b = f.evaluate_at_nodes(&[a]);
        let x = &dense_solve(dense_at(k, a), vec![b]).unwrap()[0];
        let y = u.evaluate_at_nodes(&[a]);
        for (p, q) in x.iter().zip(&y) {
            err += (p - q).powi(2);
            nrm += p * p;
        }
    }
    (err / nrm).sqrt()
}

fn poisson_1d(n: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.push((i, i + 1, -1.0));
            t.push((i + 1, i, -1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, &t)
}

#[test]
fn poisson_with_parametric_reaction_matches_direct_solves() {
    let mu = ParamAxis::with_intervals("mu", 1.0, 10.0, 90);
    let mut k = SeparatedOperator::new(3, 3, vec![mu.clone()]);
    k.push_term(Arc::new(poisson_1d(3)), vec![vec![1.0; mu.len()]]).unwrap();
    k.push_term(Arc::new(CsrMatrix::identity(3)), vec![mu.nodes().to_vec()]).unwrap();
    let f = SeparatedVector::from_terms(3, vec![mu.clone()], vec![Term::new(vec![1.0, 2.0, 3.0], vec![vec![1.0; mu.len()]])]).unwrap();
    let out = solve(&k, &f, &uncompressed(1e-10)).unwrap();
    assert!(out.tolerance_met);
    let e = grid_error(&k, &f, &out.solution);
    assert!(e <= 1e-6, "relative error {e:e}");
}

#[test]
fn diagonal_reaction_matches_closed_form() {
    let mu = ParamAxis::with_intervals("mu", 0.0, 5.0, 500);
    let k0 = [1.0, 2.0, 0.5, 4.0];
    let k1 = [1.0, 0.2, 3.0, 0.0];
    let fv = [1.0, -1.0, 2.0, 0.5];
    let diag = |d: &[f64]| CsrMatrix::from_triplets(4, 4, &d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect::<Vec<_>>());
    let mut k = SeparatedOperator::new(4, 4, vec![mu.clone()]);
    k.push_term(Arc::new(diag(&k0)), vec![vec![1.0; mu.len()]]).unwrap();
    k.push_term(Arc::new(diag(&k1)), vec![mu.nodes().to_vec()]).unwrap();
    let f = SeparatedVector::from_terms(4, vec![mu.clone()], vec![Term::new(fv.to_vec(), vec![vec![1.0; mu.len()]])]).unwrap();
    let u = solve(&k, &f, &uncompressed(1e-6)).unwrap().solution;
    for (a, &m) in mu.nodes().iter().enumerate() {
        let v = u.evaluate_at_nodes(&[a]);
        for i in 0..4 {
            let exact = fv[i] / (k0[i] + m * k1[i]);
            assert!((v[i] - exact).abs() <= 1e-3 * exact.abs(), "mu = {m}, dof {i}: {} vs {exact}", v[i]);
        }
    }
}

#[test]
fn identity_operator_reproduces_the_right_hand_side() {
    let mu = ParamAxis::with_intervals("mu", 0.0, 1.0, 10);
    let f = SeparatedVector::from_terms(
        3,
        vec![mu.clone()],
        vec![
            Term::new(vec![1.0, 0.0, 2.0], vec![mu.collocate(|x| 1.0 + x)]),
            Term::new(vec![0.0, 1.0, -1.0], vec![mu.collocate(|x| x * x)]),
        ],
    )
    .unwrap();
    let k = SeparatedOperator::identity(3, vec![mu.clone()]);
    let first = enrich_once(&k, &f, &SeparatedVector::zeros(3, vec![mu.clone()]), &PgdSettings::default()).unwrap();
    assert!(first.converged);
    let u = solve(&k, &f, &PgdSettings::default()).unwrap().solution;
    let e = grid_error(&k, &f, &u);
    assert!(e <= 1e-3, "{e:e}");
}

#[test]
fn residual_norm_does_not_grow_during_enrichment() {
    let mu = ParamAxis::with_intervals("mu", 1.0, 50.0, 98);
    let n = 12;
    let mut k = SeparatedOperator::new(n, n, vec![mu.clone()]);
    k.push_term(Arc::new(poisson_1d(n)), vec![vec![1.0; mu.len()]]).unwrap();
    let x: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let t = Vec::from_iter(x.iter().map(|&xi| 1.0 + xi));
    let kx = CsrMatrix::from_triplets(n, n, &(0..n).map(|i| (i, i, t[i])).collect::<Vec<_>>());
    k.push_term(Arc::new(kx), vec![mu.nodes().to_vec()]).unwrap();
    let f = SeparatedVector::from_terms(
        n,
        vec![mu.clone()],
        vec![
            Term::new(x.iter().map(|v| (6.0 * v).sin()).collect(), vec![vec![1.0; mu.len()]]),
            Term::new(vec![1.0; n], vec![mu.collocate(|m| 1e-2 * m * m)]),
        ],
    )
    .unwrap();
    let settings = PgdSettings::default();
    let mut u = SeparatedVector::zeros(n, vec![mu.clone()]);
    let mut last = residual(&k, &f, &u).unwrap().norm();
    for m in 0..8 {
        let e = enrich_once(&k, &f, &u, &settings).unwrap();
        u.push_term(e.term).unwrap();
        let r = residual(&k, &f, &u).unwrap().norm();
        assert!(r <= 1.01 * last, "mode {}: residual {r:e} after {last:e}", m + 1);
        last = r;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn random_spd_pairs_match_direct_solves(
        n in 3usize..7,
        seed in 0u64..10_000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut gram = |shift: f64| {
            let b: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    a[i][j] = (0..n).map(|k| b[k][i] * b[k][j]).sum::<f64>();
                }
                a[i][i] += shift;
            }
            CsrMatrix::from_dense(&a)
        };
        let k0 = gram(1.0);
        let k1 = gram(0.0);
        let mu = ParamAxis::with_intervals("mu", 0.0, 2.0, 40);
        let mut k = SeparatedOperator::new(n, n, vec![mu.clone()]);
        k.push_term(Arc::new(k0), vec![vec![1.0; mu.len()]]).unwrap();
        k.push_term(Arc::new(k1), vec![mu.nodes().to_vec()]).unwrap();
        let fs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = SeparatedVector::from_terms(n, vec![mu.clone()], vec![Term::new(fs, vec![vec![1.0; mu.len()]])]).unwrap();
        let eps = 1e-6;
        let out = solve(&k, &f, &uncompressed(eps)).unwrap();
        let e = grid_error(&k, &f, &out.solution);
        prop_assert!(e <= 10.0 * eps, "relative error {e:e}");
    }

}
