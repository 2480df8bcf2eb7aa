//! Finite element discretizations against closed forms and mapped-mesh assembly.

use std::path::Path;

use ddpgd::bench::{fem_solvers, run_monolithic, test1_relative_l2, BenchmarkConfig, Scale, Setup};
use ddpgd::fem::{assemble_convection, assemble_stiffness, assemble_supg, supg_tau, SpaceFunction, StructuredMesh, VectorField};
use ddpgd::param_grid::ParamPoint;
use ddpgd::schwarz::InterfaceSystem;
use ddpgd::sparse::CsrMatrix;
use ddpgd::subdomain::{partition_active, GeometricMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(name: &str) -> BenchmarkConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    BenchmarkConfig::load(&path).unwrap()
}

#[test]
fn q1_converges_at_second_order_in_l2() {
    let mut errors = Vec::new();
    for nx in [10, 20, 40] {
        let mut cfg = config("test1.toml");
        let t = cfg.test1.as_mut().unwrap();
        t.nx = nx;
        t.ny = nx / 2;
        let setup = Setup::new(cfg, Scale::Desk).unwrap();
        let (mesh, u) = run_monolithic(&setup, &[3.0]).unwrap();
        errors.push(test1_relative_l2(&mesh, &u, 3.0).unwrap());
    }
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&rate), "rate {rate} from errors {errors:?}");
    }
}

fn max_abs(a: &CsrMatrix) -> f64 {
    a.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[test]
fn graetz_pull_back_matches_mapped_mesh_assembly() {
    let setup = Setup::new(config("graetz.toml"), Scale::Desk).unwrap();
    let g = setup.config.graetz.clone().unwrap();
    let reference = &setup.references[1];
    let map = setup.placements[1].map.clone();
    let m = &reference.mesh;
    let vel = VectorField::new(SpaceFunction::from_fn(|_, y| 4.0 * y * (1.0 - y)), SpaceFunction::Constant(0.0));
    let tau_ref = supg_tau(m, &vel, g.tau_mu1, None);
    let tau = SpaceFunction::PerElement(
        (0..m.n_elements())
            .map(|e| {
                let (cx, cy) = m.element(e).centroid();
                tau_ref.eval(e, cx, cy)
            })
            .collect(),
    );
    let one = SpaceFunction::Constant(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let mu1 = rng.random_range(1e4..2e4);
        let mu2 = rng.random_range(0.5..4.0);
        let xb: Vec<f64> = m.x_breaks().iter().map(|&x| map.to_physical([x, 0.0], mu2)[0]).collect();
        let phys = StructuredMesh::new(xb, m.y_breaks().to_vec(), 1).unwrap();
        let k = assemble_stiffness(&phys, &one, None).unwrap();
        let c = assemble_convection(&phys, &vel).unwrap();
        let s = assemble_supg(&phys, &vel, &tau, &one, &one).unwrap();
        let want = CsrMatrix::linear_combination(&[(1.0 / mu1, &k), (1.0, &c), (1.0, &s)]);
        let p = ParamPoint::new().with("mu1", mu1).with("mu2", mu2);
        let (got, _, _) = reference.assemble_at(&p).unwrap();
        let diff = CsrMatrix::linear_combination(&[(1.0, &want), (-1.0, &got)]);
        let rel = max_abs(&diff) / max_abs(&want);
        assert!(rel <= 1e-12, "mu = ({mu1}, {mu2}): relative difference {rel:e}");
        assert!((GeometricMap::zeta(g.h_bar, mu2) - (mu2 - g.h_bar) / (1.0 - g.h_bar)).abs() < 1e-14);
    }
}

#[test]
fn thermal_structure_counts() {
    let setup = Setup::new(config("thermal.toml"), Scale::Desk).unwrap();
    assert_eq!(setup.placements.len(), 9);
    let mut iface = Vec::new();
    let mut sets = Vec::new();
    for r in &setup.references {
        let n = r.partition.n_interface_dofs();
        iface.push(n);
        sets.push(partition_active(n, setup.config.lambda.max_active_for(&r.id)).unwrap().n_sets());
    }
    assert_eq!(iface, vec![42, 63, 84, 42]);
    assert_eq!(sets, vec![14, 21, 28, 14]);
    assert_eq!(setup.references[0].partition.interior().len(), 2163);
    let mu = setup.config.parse_point("case1").unwrap();
    let sys = InterfaceSystem::discover(setup.instances(&fem_solvers(&setup), &mu).unwrap(), &setup.fixed()).unwrap();
    assert_eq!(sys.n_unknowns(), 504);
}
