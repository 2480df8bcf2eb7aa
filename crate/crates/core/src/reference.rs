//! High-fidelity oracles: monolithic FEM, algebraic DD-FEM Schwarz and the
//! closed-form solution of the diffusion benchmark.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, DofPartition, EdgeTag, SpaceFunction, StructuredMesh};
use crate::param_grid::{ParamAxis, ParamPoint};
use crate::schwarz::{glue_global, schwarz_iterate, solve_gmres, FemSolver, GmresSettings, InterfaceSystem, OnlineSolution, SubdomainInstance};
use crate::subdomain::{AffineMatrix, AffineVector, Separable, SubdomainProblem};

/// Direct solve of a problem without interfaces at `μ`.
pub fn monolithic_fem(problem: &SubdomainProblem, mu: &ParamPoint) -> Result<Vec<f64>> {
    if problem.partition.n_interface_dofs() != 0 {
        return Err(Error::Config(format!("`{}` has interfaces; not a global problem", problem.id)));
    }
    Ok(problem.prepare_exact(mu)?.solve(&[]))
}

/// Which algebraic Schwarz driver to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DdMethod {
    GaussSeidel { tol: f64, max_sweeps: usize },
    Gmres(GmresSettings),
}

/// Converged DD solution glued onto global nodes.
#[derive(Debug, Clone)]
pub struct DdResult {
    pub field: Vec<f64>,
    pub solution: OnlineSolution,
    pub overlap_mismatch: f64,
}

/// Solve the interface system of `instances` and glue the local fields.
pub fn solve_and_glue(
    instances: Vec<SubdomainInstance>,
    fixed: &[(usize, usize, Vec<f64>)],
    global_nodes: &[[f64; 2]],
    method: DdMethod,
) -> Result<DdResult> {
    let sys = InterfaceSystem::discover(instances, fixed)?;
    let session = sys.session()?;
    let solution = match method {
        DdMethod::GaussSeidel { tol, max_sweeps } => schwarz_iterate(&session, tol, max_sweeps)?,
        DdMethod::Gmres(s) => solve_gmres(&session, &s)?,
    };
    let glued = glue_global(global_nodes, &sys.instances, &solution.fields)?;
    Ok(DdResult {
        field: glued.values,
        overlap_mismatch: glued.overlap_mismatch,
        solution,
    })
}

/// DD-FEM: every subdomain solved exactly.
pub fn dd_fem_schwarz(
    subdomains: &[(Arc<SubdomainProblem>, ParamPoint, Vec<[f64; 2]>)],
    fixed: &[(usize, usize, Vec<f64>)],
    global_nodes: &[[f64; 2]],
    method: DdMethod,
) -> Result<DdResult> {
    let instances = subdomains
        .iter()
        .map(|(p, mu, nodes)| SubdomainInstance {
            name: p.id.clone(),
            solver: Arc::new(FemSolver::new(p.clone())),
            mu: mu.clone(),
            physical_nodes: nodes.clone(),
        })
        .collect();
    solve_and_glue(instances, fixed, global_nodes, method)
}

/// `sin(2πx) sin(2πy) + (μ/2) x y (y − 1)(x − 2)`.
pub fn analytic_test1(mu: f64, x: f64, y: f64) -> f64 {
    (2.0 * PI * x).sin() * (2.0 * PI * y).sin() + 0.5 * mu * x * y * (y - 1.0) * (x - 2.0)
}

/// Source terms `b_k(x, y)` with `f = b₁ + μ b₂ + μ² b₃` for `ν = 1 + μx`.
pub fn test1_source_modes() -> [SpaceFunction; 3] {
    let s = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
    let lap_p = |x: f64, y: f64| y * (y - 1.0) + x * (x - 2.0);
    let k = 8.0 * PI * PI;
    [
        SpaceFunction::from_fn(move |x, y| k * s(x, y)),
        SpaceFunction::from_fn(move |x, y| {
            k * x * s(x, y) - lap_p(x, y) - 2.0 * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).sin()
        }),
        SpaceFunction::from_fn(move |x, y| -x * lap_p(x, y) - (x - 1.0) * y * (y - 1.0)),
    ]
}

/// One-row strip `[x0, x1] × [0, h]` for `−u'' = 0`, `u(0) = 0`, `u(1) = 1`,
/// insulated top and bottom; interfaces are the vertical edges inside `(0, 1)`.
pub fn laplace_strip(id: &str, x0: f64, x1: f64, nx: usize, lambda: &ParamAxis, mu: &ParamAxis) -> Result<SubdomainProblem> {
    let h = (x1 - x0) / nx as f64;
    let mesh = StructuredMesh::uniform(x0, x1, nx, 0.0, h, 1, 1)?;
    let mut names = Vec::new();
    let left_is_iface = x0 > 1e-12;
    let right_is_iface = x1 < 1.0 - 1e-12;
    if left_is_iface {
        names.push("left");
    }
    if right_is_iface {
        names.push("right");
    }
    let partition = DofPartition::classify(&mesh, &names, |e| {
        let xm = e.midpoint()[0];
        let vertical = (e.start[0] - e.end[0]).abs() < 1e-12;
        if !vertical {
            EdgeTag::Neumann
        } else if (xm - x0).abs() < 1e-12 {
            if left_is_iface {
                EdgeTag::Interface(0)
            } else {
                EdgeTag::Dirichlet
            }
        } else if right_is_iface {
            EdgeTag::Interface(usize::from(left_is_iface))
        } else {
            EdgeTag::Dirichlet
        }
    })?;
    let k = assemble_stiffness(&mesh, &SpaceFunction::Constant(1.0), None)?;
    let g: Vec<f64> = mesh.nodes().iter().map(|p| if (p[0] - 1.0).abs() < 1e-12 { 1.0 } else { 0.0 }).collect();
    Ok(SubdomainProblem {
        id: id.to_string(),
        mesh,
        partition,
        mu_axes: vec![mu.clone()],
        operator: vec![AffineMatrix {
            matrix: Arc::new(k),
            coeff: Separable::ones(1),
        }],
        loads: Vec::new(),
        dirichlet: vec![AffineVector {
            vector: g,
            coeff: Separable::ones(1),
        }],
        lambda_axis: lambda.clone(),
    })
}
