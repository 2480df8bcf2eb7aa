//! Surrogate-based interface operators against the DD-FEM algebraic oracle on a 1D Laplace toy.

use std::sync::{Arc, OnceLock};

use ddpgd::param_grid::{ParamAxis, ParamPoint};
use ddpgd::pgd::PgdSettings;
use ddpgd::reference::{laplace_strip, monolithic_fem};
use ddpgd::schwarz::{
    glue_global, schwarz_iterate, solve_gmres, FemSolver, GmresSettings, InterfaceSystem, LocalSolver, SubdomainInstance,
    SurrogateSolver,
};
use ddpgd::subdomain::{build_surrogate, partition_active, SubdomainProblem};
use proptest::prelude::*;

struct Toy {
    global: SubdomainProblem,
    problems: Vec<Arc<SubdomainProblem>>,
    surrogates: Vec<Arc<dyn LocalSolver>>,
    exact: Vec<Arc<dyn LocalSolver>>,
}

const EPS: f64 = 1e-10;

fn toy() -> &'static Toy {
    static TOY: OnceLock<Toy> = OnceLock::new();
    TOY.get_or_init(|| {
        let lam = ParamAxis::with_intervals("lambda", -1.0, 2.0, 30);
        let mu = ParamAxis::with_intervals("mu", 0.0, 1.0, 1);
        let global = laplace_strip("global", 0.0, 1.0, 10, &lam, &mu).unwrap();
        let problems = vec![
            Arc::new(laplace_strip("a", 0.0, 0.6, 6, &lam, &mu).unwrap()),
            Arc::new(laplace_strip("b", 0.4, 1.0, 6, &lam, &mu).unwrap()),
        ];
        let settings = PgdSettings {
            eps_enrich: EPS,
            eps_compress: None,
            ..PgdSettings::default()
        };
        let surrogates = problems
            .iter()
            .map(|p| {
                let active = partition_active(p.partition.n_interface_dofs(), 2).unwrap();
                let model = build_surrogate(p, &active, &settings, 1).unwrap();
                Arc::new(SurrogateSolver::new(Arc::new(model), &p.partition).unwrap()) as Arc<dyn LocalSolver>
            })
            .collect();
        let exact = problems
            .iter()
            .map(|p| Arc::new(FemSolver::new(p.clone())) as Arc<dyn LocalSolver>)
            .collect();
        Toy {
            global,
            problems,
            surrogates,
            exact,
        }
    })
}

fn system(solvers: &[Arc<dyn LocalSolver>]) -> InterfaceSystem {
    let t = toy();
    let instances = t
        .problems
        .iter()
        .zip(solvers)
        .map(|(p, s)| SubdomainInstance {
            name: p.id.clone(),
            solver: s.clone(),
            mu: ParamPoint::new().with("mu", 0.5),
            physical_nodes: p.mesh.nodes().to_vec(),
        })
        .collect();
    InterfaceSystem::discover(instances, &[]).unwrap()
}

fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Grid-aligned interface values: multiples of 0.05 in [−0.5, 1].
fn on_grid(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-10i32..=20).prop_map(|k| k as f64 * 0.05), n)
}

#[test]
fn interface_system_has_two_blocks() {
    let sys = system(&toy().surrogates);
    assert_eq!(sys.n_unknowns(), 4);
}

#[test]
fn apply_at_zero_vanishes() {
    let sys = system(&toy().surrogates);
    let s = sys.session().unwrap();
    let y = s.pgd_interface_apply(&[0.0; 4]).unwrap();
    assert!(y.iter().all(|v| v.abs() <= 10.0 * EPS), "{y:?}");
}

#[test]
fn rhs_matches_dd_fem() {
    let (ps, fs) = (system(&toy().surrogates), system(&toy().exact));
    let a = ps.session().unwrap().pgd_interface_rhs().unwrap();
    let b = fs.session().unwrap().interface_rhs().unwrap();
    assert!(linf(&a, &b) <= 1e-8, "{a:?} vs {b:?}");
}

#[test]
fn gmres_solution_is_glued_monolithic_and_a_fixed_point() {
    let t = toy();
    let sys = system(&t.surrogates);
    let s = sys.session().unwrap();
    let tol = 1e-10;
    let sol = solve_gmres(&s, &GmresSettings { tol, restart: 10, max_iters: 50 }).unwrap();
    assert!(sol.converged);
    let glued = glue_global(t.global.mesh.nodes(), &sys.instances, &sol.fields).unwrap();
    assert!(glued.overlap_mismatch <= 1e-8, "mismatch {:e}", glued.overlap_mismatch);
    let mono = monolithic_fem(&t.global, &ParamPoint::new().with("mu", 0.5)).unwrap();
    assert!(linf(&glued.values, &mono) <= 1e-8);
    let sweep = s.map(&sol.lambda).unwrap();
    assert!(linf(&sweep, &sol.lambda) <= 10.0 * tol.max(1e-9));
}

#[test]
fn gauss_seidel_contracts_faster_with_wider_overlap() {
    let lam = ParamAxis::with_intervals("lambda", -1.0, 2.0, 30);
    let mu = ParamAxis::with_intervals("mu", 0.0, 1.0, 1);
    let sweeps = |lo: f64, hi: f64| {
        let ps = [
            Arc::new(laplace_strip("a", 0.0, hi, (hi * 20.0).round() as usize, &lam, &mu).unwrap()),
            Arc::new(laplace_strip("b", lo, 1.0, ((1.0 - lo) * 20.0).round() as usize, &lam, &mu).unwrap()),
        ];
        let instances = ps
            .iter()
            .map(|p| SubdomainInstance {
                name: p.id.clone(),
                solver: Arc::new(FemSolver::new(p.clone())),
                mu: ParamPoint::new().with("mu", 0.5),
                physical_nodes: p.mesh.nodes().to_vec(),
            })
            .collect();
        let sys = InterfaceSystem::discover(instances, &[]).unwrap();
        let out = schwarz_iterate(&sys.session().unwrap(), 1e-10, 10_000).unwrap();
        assert!(out.converged);
        out.iterations
    };
    let narrow = sweeps(0.45, 0.55);
    let wide = sweeps(0.3, 0.7);
    assert!(wide < narrow, "{wide} sweeps with wide overlap, {narrow} with narrow");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn apply_matches_dd_fem_operator(x in on_grid(4)) {
        let (ps, fs) = (system(&toy().surrogates), system(&toy().exact));
        let (p, f) = (ps.session().unwrap(), fs.session().unwrap());
        let a = p.pgd_interface_apply(&x).unwrap();
        let n0 = f.interface_rhs().unwrap();
        let b = f.interface_apply(&x, &n0).unwrap();
        prop_assert!(linf(&a, &b) <= 1e-8, "{:?} vs {:?}", a, b);
    }

    #[test]
    fn apply_is_additive_over_disjoint_interfaces(x in on_grid(4)) {
        let sys = system(&toy().surrogates);
        let s = sys.session().unwrap();
        let z = s.pgd_interface_apply(&[0.0; 4]).unwrap();
        let first = [x[0], x[1], 0.0, 0.0];
        let second = [0.0, 0.0, x[2], x[3]];
        let (a, b, ab) = (
            s.pgd_interface_apply(&first).unwrap(),
            s.pgd_interface_apply(&second).unwrap(),
            s.pgd_interface_apply(&x).unwrap(),
        );
        for i in 0..4 {
            prop_assert!(((ab[i] - z[i]) - (a[i] - z[i]) - (b[i] - z[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn doubling_grid_aligned_values_doubles_the_output(x in on_grid(4)) {
        let sys = system(&toy().surrogates);
        let s = sys.session().unwrap();
        let y = s.pgd_interface_apply(&x).unwrap();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y2 = s.pgd_interface_apply(&x2).unwrap();
        for (a, b) in y.iter().zip(&y2) {
            prop_assert!((2.0 * a - b).abs() <= 1e-9);
        }
    }
}
