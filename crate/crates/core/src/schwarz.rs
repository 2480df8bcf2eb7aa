//! Online phase: overlapping Schwarz coupling of local solvers through
//! interface values, solved by matrix-free GMRES or block Gauss-Seidel sweeps.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{DofPartition, DofRole};
use crate::param_grid::{AxisStencil, ParamPoint};
use crate::sparse::{axpy, dot, norm2, norm_inf};
use crate::subdomain::{ExactLocal, SubdomainProblem, SurrogateModel};

/// Something that returns a subdomain field for given parameters and interface values.
pub trait LocalSolver: Send + Sync {
    fn id(&self) -> &str;
    fn n_nodes(&self) -> usize;
    /// Node ids of each interface, in interface order.
    fn interface_groups(&self) -> &[Vec<usize>];
    /// True for nodes whose value the local problem computes.
    fn is_unknown(&self, node: usize) -> bool;
    /// Admissible interface-value range, if any.
    fn lambda_bounds(&self) -> Option<(f64, f64)>;
    /// Fix `μ` and the output nodes of `eval_nodes`.
    fn prepare(&self, mu: &ParamPoint, nodes: &[usize]) -> Result<Box<dyn PreparedLocal + '_>>;
}

/// A local solver at fixed `μ`.
pub trait PreparedLocal: Send + Sync {
    /// Values at the prepared nodes.
    fn eval_nodes(&self, lambda: &[f64]) -> Result<Vec<f64>>;
    /// Full nodal field.
    fn eval_full(&self, lambda: &[f64]) -> Result<Vec<f64>>;
    /// Values at the prepared nodes of the part driven by loads and external data only.
    fn eval_source_nodes(&self) -> Result<Vec<f64>>;
    /// Values at the prepared nodes of the part driven by the interface values only.
    fn eval_boundary_nodes(&self, lambda: &[f64]) -> Result<Vec<f64>>;
}

/// Surrogate-based local solver.
pub struct SurrogateSolver {
    model: Arc<SurrogateModel>,
    groups: Vec<Vec<usize>>,
    unknown: Vec<bool>,
}

impl SurrogateSolver {
    pub fn new(model: Arc<SurrogateModel>, partition: &DofPartition) -> Result<Self> {
        let groups: Vec<Vec<usize>> = partition.interfaces().iter().map(|i| i.dofs.clone()).collect();
        let flat: Vec<usize> = groups.iter().flatten().copied().collect();
        if flat != model.interface_dofs || partition.n_dofs() != model.n_nodes {
            return Err(Error::DimensionMismatch(format!(
                "surrogate `{}` does not match the given partition",
                model.id
            )));
        }
        let unknown = (0..partition.n_dofs())
            .map(|n| matches!(partition.role(n), DofRole::Interior(_)))
            .collect();
        Ok(Self { model, groups, unknown })
    }

    pub fn model(&self) -> &SurrogateModel {
        &self.model
    }
}

struct PreparedSet {
    positions: Vec<usize>,
    mu_weights: Vec<f64>,
    /// `modes[term][axis]` for the set's Λ axes.
    modes: Vec<Vec<Vec<f64>>>,
    axes: Vec<crate::param_grid::ParamAxis>,
    /// Spatial vectors at the prepared nodes, term-major.
    local: Vec<f64>,
}

struct PreparedSurrogate<'a> {
    solver: &'a SurrogateSolver,
    mu: ParamPoint,
    nodes: Vec<usize>,
    source: Vec<f64>,
    sets: Vec<PreparedSet>,
}

impl LocalSolver for SurrogateSolver {
    fn id(&self) -> &str {
        &self.model.id
    }

    fn n_nodes(&self) -> usize {
        self.model.n_nodes
    }

    fn interface_groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    fn is_unknown(&self, node: usize) -> bool {
        self.unknown[node]
    }

    fn lambda_bounds(&self) -> Option<(f64, f64)> {
        Some((self.model.lambda_axis.lo(), self.model.lambda_axis.hi()))
    }

    fn prepare(&self, mu: &ParamPoint, nodes: &[usize]) -> Result<Box<dyn PreparedLocal + '_>> {
        let m = &self.model;
        let mu_st: Vec<AxisStencil> = m
            .mu_axes
            .iter()
            .map(|a| {
                let v = mu.value_on(a)?;
                if !a.contains(v) {
                    return Err(Error::OutOfRange {
                        axis: a.name().to_string(),
                        value: v,
                        lo: a.lo(),
                        hi: a.hi(),
                    });
                }
                Ok(AxisStencil::new(a, v))
            })
            .collect::<Result<_>>()?;
        let sw = m.source.term_weights(&mu_st);
        let mut source = vec![0.0; nodes.len()];
        for (t, &w) in m.source.terms().iter().zip(&sw) {
            for (o, &n) in source.iter_mut().zip(nodes) {
                *o += w * t.space[n];
            }
        }
        let nmu = m.mu_axes.len();
        let sets = m
            .sets
            .iter()
            .map(|s| {
                let terms = s.part.terms();
                let mu_weights = terms
                    .iter()
                    .map(|t| mu_st.iter().zip(&t.modes[..nmu]).map(|(st, md)| st.apply(md)).product())
                    .collect();
                let modes = terms.iter().map(|t| t.modes[nmu..].to_vec()).collect();
                let mut local = Vec::with_capacity(terms.len() * nodes.len());
                for t in terms {
                    local.extend(nodes.iter().map(|&n| t.space[n]));
                }
                PreparedSet {
                    positions: s.positions.clone(),
                    mu_weights,
                    modes,
                    axes: s.lambda_axes.clone(),
                    local,
                }
            })
            .collect();
        Ok(Box::new(PreparedSurrogate {
            solver: self,
            mu: mu.clone(),
            nodes: nodes.to_vec(),
            source,
            sets,
        }))
    }
}

impl PreparedSurrogate<'_> {
    fn add_boundary(&self, lambda: &[f64], out: &mut [f64]) -> Result<()> {
        let m = &self.solver.model;
        if lambda.len() != m.interface_dofs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} interface values for `{}`",
                lambda.len(),
                m.id
            )));
        }
        let k = self.nodes.len();
        for s in &self.sets {
            let st: Vec<AxisStencil> = s
                .axes
                .iter()
                .zip(&s.positions)
                .map(|(a, &q)| AxisStencil::new(a, lambda[q]))
                .collect();
            for (t, (&w0, modes)) in s.mu_weights.iter().zip(&s.modes).enumerate() {
                let w = w0 * st.iter().zip(modes).map(|(a, md)| a.apply(md)).product::<f64>();
                if w != 0.0 {
                    axpy(w, &s.local[t * k..(t + 1) * k], out);
                }
            }
        }
        Ok(())
    }
}

impl PreparedLocal for PreparedSurrogate<'_> {
    fn eval_nodes(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.source.clone();
        self.add_boundary(lambda, &mut out)?;
        Ok(out)
    }

    fn eval_full(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        self.solver.model.evaluate(&self.mu, lambda)
    }

    fn eval_source_nodes(&self) -> Result<Vec<f64>> {
        Ok(self.source.clone())
    }

    fn eval_boundary_nodes(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.nodes.len()];
        self.add_boundary(lambda, &mut out)?;
        Ok(out)
    }
}

/// Local solver by direct FEM solves.
pub struct FemSolver {
    problem: Arc<SubdomainProblem>,
    groups: Vec<Vec<usize>>,
}

impl FemSolver {
    pub fn new(problem: Arc<SubdomainProblem>) -> Self {
        let groups = problem.partition.interfaces().iter().map(|i| i.dofs.clone()).collect();
        Self { problem, groups }
    }
}

struct PreparedFem {
    exact: ExactLocal,
    nodes: Vec<usize>,
}

impl LocalSolver for FemSolver {
    fn id(&self) -> &str {
        &self.problem.id
    }

    fn n_nodes(&self) -> usize {
        self.problem.n_nodes()
    }

    fn interface_groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    fn is_unknown(&self, node: usize) -> bool {
        matches!(self.problem.partition.role(node), DofRole::Interior(_))
    }

    fn lambda_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    fn prepare(&self, mu: &ParamPoint, nodes: &[usize]) -> Result<Box<dyn PreparedLocal + '_>> {
        Ok(Box::new(PreparedFem {
            exact: self.problem.prepare_exact(mu)?,
            nodes: nodes.to_vec(),
        }))
    }
}

impl PreparedLocal for PreparedFem {
    fn eval_nodes(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let u = self.exact.solve(lambda);
        Ok(self.nodes.iter().map(|&n| u[n]).collect())
    }

    fn eval_full(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        Ok(self.exact.solve(lambda))
    }

    fn eval_source_nodes(&self) -> Result<Vec<f64>> {
        let n = self.exact.solve(&vec![0.0; self.exact.n_interface()]);
        Ok(self.nodes.iter().map(|&i| n[i]).collect())
    }

    fn eval_boundary_nodes(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let u = self.exact.solve_homogeneous(lambda);
        Ok(self.nodes.iter().map(|&n| u[n]).collect())
    }
}

/// Spatial hash for matching node coordinates across meshes.
pub struct PointLocator {
    cell: f64,
    tol: f64,
    points: Vec<[f64; 2]>,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl PointLocator {
    pub fn new(points: &[[f64; 2]], tol: f64) -> Self {
        let cell = (tol * 4.0).max(f64::MIN_POSITIVE);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(cell, *p)).or_default().push(i);
        }
        Self {
            cell,
            tol,
            points: points.to_vec(),
            buckets,
        }
    }

    fn key(cell: f64, p: [f64; 2]) -> (i64, i64) {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64)
    }

    pub fn find(&self, p: [f64; 2]) -> Option<usize> {
        let (kx, ky) = Self::key(self.cell, p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.buckets.get(&(kx + dx, ky + dy)) {
                    for &i in ids {
                        let q = self.points[i];
                        if (q[0] - p[0]).abs() <= self.tol && (q[1] - p[1]).abs() <= self.tol {
                            return Some(i);
                        }
                    }
                }
            }
        }
        None
    }
}

fn locator_tolerance(points: &[[f64; 2]]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    1e-10 * ((hi[0] - lo[0]).hypot(hi[1] - lo[1])).max(1.0)
}

/// A local solver positioned in physical space with its local parameters.
#[derive(Clone)]
pub struct SubdomainInstance {
    pub name: String,
    pub solver: Arc<dyn LocalSolver>,
    pub mu: ParamPoint,
    /// Physical coordinates of every local node.
    pub physical_nodes: Vec<[f64; 2]>,
}

/// One interface of one subdomain and where its values come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub owner: usize,
    pub interface: usize,
    /// Donor subdomain and its nodes, or `None` for fixed values.
    pub donor: Option<usize>,
    pub donor_nodes: Vec<usize>,
    pub fixed: Vec<f64>,
}

/// Interface unknowns of a set of overlapping subdomains.
pub struct InterfaceSystem {
    pub instances: Vec<SubdomainInstance>,
    pub couplings: Vec<Coupling>,
    /// Offset of every coupling in the unknown vector; `None` when fixed.
    offsets: Vec<Option<usize>>,
    n_unknowns: usize,
}

impl InterfaceSystem {
    /// Match every interface to the unique subdomain that computes its nodes.
    ///
    /// `fixed` lists `(owner, interface, values)` that are data instead of unknowns.
    pub fn discover(instances: Vec<SubdomainInstance>, fixed: &[(usize, usize, Vec<f64>)]) -> Result<Self> {
        let locators: Vec<PointLocator> = instances
            .iter()
            .map(|s| PointLocator::new(&s.physical_nodes, locator_tolerance(&s.physical_nodes)))
            .collect();
        let mut couplings = Vec::new();
        for (i, inst) in instances.iter().enumerate() {
            if inst.physical_nodes.len() != inst.solver.n_nodes() {
                return Err(Error::DimensionMismatch(format!(
                    "`{}` has {} coordinates for {} nodes",
                    inst.name,
                    inst.physical_nodes.len(),
                    inst.solver.n_nodes()
                )));
            }
            for (k, group) in inst.solver.interface_groups().iter().enumerate() {
                if let Some((_, _, v)) = fixed.iter().find(|(o, f, _)| *o == i && *f == k) {
                    if v.len() != group.len() {
                        return Err(Error::DimensionMismatch(format!(
                            "{} fixed values for interface {k} of `{}`",
                            v.len(),
                            inst.name
                        )));
                    }
                    couplings.push(Coupling {
                        owner: i,
                        interface: k,
                        donor: None,
                        donor_nodes: Vec::new(),
                        fixed: v.clone(),
                    });
                    continue;
                }
                let pts: Vec<[f64; 2]> = group.iter().map(|&n| inst.physical_nodes[n]).collect();
                let mut found = Vec::new();
                for (d, other) in instances.iter().enumerate() {
                    if d == i {
                        continue;
                    }
                    let ids: Option<Vec<usize>> = pts
                        .iter()
                        .map(|&p| locators[d].find(p).filter(|&n| other.solver.is_unknown(n)))
                        .collect();
                    if let Some(ids) = ids {
                        found.push((d, ids));
                    }
                }
                match found.len() {
                    1 => {
                        let (d, ids) = found.pop().unwrap();
                        couplings.push(Coupling {
                            owner: i,
                            interface: k,
                            donor: Some(d),
                            donor_nodes: ids,
                            fixed: Vec::new(),
                        });
                    }
                    0 => {
                        return Err(Error::Config(format!(
                            "interface {k} of `{}` lies inside no other subdomain",
                            inst.name
                        )))
                    }
                    _ => {
                        return Err(Error::Config(format!(
                            "interface {k} of `{}` lies inside several subdomains",
                            inst.name
                        )))
                    }
                }
            }
        }
        let mut offsets = Vec::with_capacity(couplings.len());
        let mut n = 0;
        for c in &couplings {
            if c.donor.is_some() {
                offsets.push(Some(n));
                n += c.donor_nodes.len();
            } else {
                offsets.push(None);
            }
        }
        Ok(Self {
            instances,
            couplings,
            offsets,
            n_unknowns: n,
        })
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    /// Factorize or pre-evaluate every local solver at its own `μ`.
    pub fn session(&self) -> Result<OnlineSession<'_>> {
        let mut nodes: Vec<Vec<usize>> = vec![Vec::new(); self.instances.len()];
        let mut slices = Vec::with_capacity(self.couplings.len());
        for c in &self.couplings {
            if let Some(d) = c.donor {
                let start = nodes[d].len();
                nodes[d].extend_from_slice(&c.donor_nodes);
                slices.push(start..nodes[d].len());
            } else {
                slices.push(0..0);
            }
        }
        let prepared = self
            .instances
            .iter()
            .zip(&nodes)
            .map(|(s, n)| {
                s.solver.prepare(&s.mu, n).map_err(|e| Error::Subproblem {
                    id: s.name.clone(),
                    source: Box::new(e),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(OnlineSession {
            system: self,
            prepared,
            slices,
            clamp_events: AtomicUsize::new(0),
        })
    }
}

/// An interface system with all local solvers prepared at fixed parameters.
pub struct OnlineSession<'a> {
    system: &'a InterfaceSystem,
    prepared: Vec<Box<dyn PreparedLocal + 'a>>,
    slices: Vec<std::ops::Range<usize>>,
    clamp_events: AtomicUsize,
}

impl OnlineSession<'_> {
    pub fn n_unknowns(&self) -> usize {
        self.system.n_unknowns
    }

    pub fn clamp_events(&self) -> usize {
        self.clamp_events.load(Ordering::Relaxed)
    }

    /// Interface values of every subdomain, clamped to its admissible range.
    pub fn owner_lambdas(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.gather_lambdas(x, true)
    }

    fn gather_lambdas(&self, x: &[f64], with_fixed: bool) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.n_unknowns() {
            return Err(Error::DimensionMismatch(format!(
                "{} interface values for {} unknowns",
                x.len(),
                self.n_unknowns()
            )));
        }
        let sys = self.system;
        let mut out: Vec<Vec<f64>> = sys
            .instances
            .iter()
            .map(|s| Vec::with_capacity(s.solver.interface_groups().iter().map(Vec::len).sum()))
            .collect();
        for (c, off) in sys.couplings.iter().zip(&sys.offsets) {
            match off {
                Some(o) => out[c.owner].extend_from_slice(&x[*o..*o + c.donor_nodes.len()]),
                None if with_fixed => out[c.owner].extend_from_slice(&c.fixed),
                None => out[c.owner].extend(std::iter::repeat_n(0.0, c.fixed.len())),
            }
        }
        for (s, lam) in sys.instances.iter().zip(out.iter_mut()) {
            if let Some((lo, hi)) = s.solver.lambda_bounds() {
                let mut clamped = 0;
                for v in lam.iter_mut() {
                    if *v < lo || *v > hi {
                        *v = v.clamp(lo, hi);
                        clamped += 1;
                    }
                }
                if clamped > 0 {
                    self.clamp_events.fetch_add(clamped, Ordering::Relaxed);
                    debug!("clamped {clamped} interface values of `{}`", s.name);
                }
            }
        }
        Ok(out)
    }

    /// `N(x)`: interface values implied by the local solutions driven by `x`.
    pub fn map(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lams = self.owner_lambdas(x)?;
        let vals = self
            .prepared
            .iter()
            .zip(&lams)
            .map(|(p, l)| p.eval_nodes(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.scatter(&vals))
    }

    /// Donor values of the source parts plus the response to fixed interface data.
    pub fn pgd_interface_rhs(&self) -> Result<Vec<f64>> {
        let lams = self.gather_lambdas(&vec![0.0; self.n_unknowns()], true)?;
        let vals = self
            .prepared
            .iter()
            .zip(&lams)
            .map(|(p, l)| {
                let mut v = p.eval_source_nodes()?;
                axpy(1.0, &p.eval_boundary_nodes(l)?, &mut v);
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.scatter(&vals))
    }

    /// `x − B(x)` with `B` the boundary parts driven by the unknowns alone.
    pub fn pgd_interface_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let lams = self.gather_lambdas(x, false)?;
        let vals = self
            .prepared
            .iter()
            .zip(&lams)
            .map(|(p, l)| p.eval_boundary_nodes(l))
            .collect::<Result<Vec<_>>>()?;
        let b = self.scatter(&vals);
        Ok(x.iter().zip(&b).map(|(a, b)| a - b).collect())
    }

    fn scatter(&self, vals: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_unknowns()];
        for ((c, off), r) in self.system.couplings.iter().zip(&self.system.offsets).zip(&self.slices) {
            if let (Some(o), Some(d)) = (off, c.donor) {
                out[*o..*o + r.len()].copy_from_slice(&vals[d][r.clone()]);
            }
        }
        out
    }

    /// Right-hand side `N(0)` of the interface system.
    pub fn interface_rhs(&self) -> Result<Vec<f64>> {
        self.map(&vec![0.0; self.n_unknowns()])
    }

    /// Linear part `x − (N(x) − N(0))` of the interface operator.
    pub fn interface_apply(&self, x: &[f64], n0: &[f64]) -> Result<Vec<f64>> {
        let nx = self.map(x)?;
        Ok(x.iter().zip(nx.iter().zip(n0)).map(|(a, (b, c))| a - (b - c)).collect())
    }

    /// Full local fields for interface unknowns `x`.
    pub fn local_solutions(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let lams = self.owner_lambdas(x)?;
        self.prepared.iter().zip(&lams).map(|(p, l)| p.eval_full(l)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmresSettings {
    pub tol: f64,
    pub restart: usize,
    pub max_iters: usize,
}

impl Default for GmresSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            restart: 30,
            max_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GmresStatus {
    Converged,
    MaxIterations,
    Stagnated,
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after every inner iteration, starting with the initial one.
    pub history: Vec<f64>,
    pub status: GmresStatus,
}

impl GmresOutcome {
    pub fn converged(&self) -> bool {
        self.status == GmresStatus::Converged
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

/// Restarted GMRES with Givens rotations, from `x0` or zero.
///
/// Convergence is `‖b − A x‖ ≤ tol ‖b‖`. A restart cycle that fails to reduce
/// the residual ends the solve as stagnated.
pub fn gmres(
    mut apply: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    x0: Option<&[f64]>,
    settings: &GmresSettings,
) -> Result<GmresOutcome> {
    if !(settings.tol > 0.0) || settings.restart == 0 {
        return Err(Error::Config("gmres needs tol > 0 and restart >= 1".into()));
    }
    let n = b.len();
    let mut x = x0.map_or_else(|| vec![0.0; n], |v| v.to_vec());
    let bnorm = norm2(b);
    if bnorm == 0.0 && x0.is_none() {
        return Ok(GmresOutcome {
            x,
            iterations: 0,
            history: vec![0.0],
            status: GmresStatus::Converged,
        });
    }
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let residual = |x: &[f64], apply: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>| -> Result<Vec<f64>> {
        let ax = apply(x)?;
        Ok(b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect())
    };
    let mut r = if x0.is_some() { residual(&x, &mut apply)? } else { b.to_vec() };
    let mut beta = norm2(&r);
    let mut history = vec![beta / scale];
    let mut iterations = 0;
    if beta <= settings.tol * scale {
        return Ok(GmresOutcome {
            x,
            iterations,
            history,
            status: GmresStatus::Converged,
        });
    }
    let m = settings.restart;
    loop {
        let cycle_start = beta;
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        let mut done = false;
        for k in 0..m {
            let mut w = apply(&v[k])?;
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                axpy(-h[i][k], &v[i], &mut w);
            }
            for i in 0..=k {
                let c = dot(&w, &v[i]);
                h[i][k] += c;
                axpy(-c, &v[i], &mut w);
            }
            h[k + 1][k] = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c * h[k][k] + s * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            iterations += 1;
            k_used = k + 1;
            let rel = g[k + 1].abs() / scale;
            history.push(rel);
            let breakdown = h[k][k] == 0.0 || w.iter().all(|&x| x == 0.0);
            if rel <= settings.tol || iterations >= settings.max_iters || breakdown {
                done = true;
                break;
            }
            let wn = norm2(&w);
            v.push(w.into_iter().map(|x| x / wn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (j, yj) in y.iter().enumerate() {
            axpy(*yj, &v[j], &mut x);
        }
        let est = history.last().copied().unwrap_or(f64::INFINITY);
        if est <= settings.tol {
            return Ok(GmresOutcome {
                x,
                iterations,
                history,
                status: GmresStatus::Converged,
            });
        }
        if iterations >= settings.max_iters {
            return Ok(GmresOutcome {
                x,
                iterations,
                history,
                status: GmresStatus::MaxIterations,
            });
        }
        r = residual(&x, &mut apply)?;
        beta = norm2(&r);
        if beta <= settings.tol * scale {
            history.push(beta / scale);
            return Ok(GmresOutcome {
                x,
                iterations,
                history,
                status: GmresStatus::Converged,
            });
        }
        if done || beta >= cycle_start * (1.0 - 1e-12) {
            warn!("gmres stagnated at relative residual {:.3e}", beta / scale);
            return Ok(GmresOutcome {
                x,
                iterations,
                history,
                status: GmresStatus::Stagnated,
            });
        }
    }
}

/// Result of an online Schwarz solve.
#[derive(Debug, Clone)]
pub struct OnlineSolution {
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub converged: bool,
    pub status: Option<GmresStatus>,
    pub clamp_events: usize,
    /// Local fields of all subdomains at the converged interface values.
    pub fields: Vec<Vec<f64>>,
}

/// Solve `(I − (N − N(0))) x = N(0)` by GMRES from `x = 0`.
pub fn solve_gmres(session: &OnlineSession<'_>, settings: &GmresSettings) -> Result<OnlineSolution> {
    let n0 = session.interface_rhs()?;
    let out = gmres(|x| session.interface_apply(x, &n0), &n0, None, settings)?;
    let fields = session.local_solutions(&out.x)?;
    Ok(OnlineSolution {
        converged: out.converged(),
        status: Some(out.status),
        iterations: out.iterations,
        history: out.history,
        clamp_events: session.clamp_events(),
        lambda: out.x,
        fields,
    })
}

/// Block Gauss-Seidel sweeps over subdomains in order, from `x = 0`.
///
/// Each sweep solves every subdomain with the latest interface values and
/// updates the interfaces it donates to. Stops when a sweep changes no value
/// by more than `tol`; with `tol = ∞` exactly one sweep is done.
pub fn schwarz_iterate(session: &OnlineSession<'_>, tol: f64, max_sweeps: usize) -> Result<OnlineSolution> {
    let sys = session.system;
    let mut x = vec![0.0; session.n_unknowns()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut change: f64 = 0.0;
        for (d, prep) in session.prepared.iter().enumerate() {
            let lams = session.owner_lambdas(&x)?;
            let vals = prep.eval_nodes(&lams[d])?;
            for ((c, off), r) in sys.couplings.iter().zip(&sys.offsets).zip(&session.slices) {
                if let (Some(o), Some(dd)) = (off, c.donor) {
                    if dd == d {
                        for (xi, v) in x[*o..*o + r.len()].iter_mut().zip(&vals[r.clone()]) {
                            change = change.max((*xi - v).abs());
                            *xi = *v;
                        }
                    }
                }
            }
        }
        history.push(change);
        if change <= tol || tol.is_infinite() {
            converged = change <= tol;
            break;
        }
    }
    let fields = session.local_solutions(&x)?;
    Ok(OnlineSolution {
        lambda: x,
        iterations: sweeps,
        history,
        converged,
        status: None,
        clamp_events: session.clamp_events(),
        fields,
    })
}

/// A global field assembled from overlapping local fields.
#[derive(Debug, Clone)]
pub struct Glued {
    pub values: Vec<f64>,
    /// Index of the subdomain that supplied each value.
    pub owner: Vec<usize>,
    /// Largest disagreement between subdomains at shared nodes.
    pub overlap_mismatch: f64,
}

/// Assemble a global nodal field; the first listed subdomain containing a node owns it.
pub fn glue_global(global_nodes: &[[f64; 2]], instances: &[SubdomainInstance], fields: &[Vec<f64>]) -> Result<Glued> {
    let locators: Vec<PointLocator> = instances
        .iter()
        .map(|s| PointLocator::new(&s.physical_nodes, locator_tolerance(&s.physical_nodes)))
        .collect();
    let mut values = vec![0.0; global_nodes.len()];
    let mut owner = vec![usize::MAX; global_nodes.len()];
    let mut mismatch: f64 = 0.0;
    for (g, &p) in global_nodes.iter().enumerate() {
        let mut first: Option<f64> = None;
        for (i, loc) in locators.iter().enumerate() {
            if let Some(n) = loc.find(p) {
                let v = fields[i][n];
                match first {
                    None => {
                        first = Some(v);
                        values[g] = v;
                        owner[g] = i;
                    }
                    Some(f) => mismatch = mismatch.max((f - v).abs()),
                }
            }
        }
        if first.is_none() {
            return Err(Error::Config(format!(
                "global node ({}, {}) is covered by no subdomain",
                p[0], p[1]
            )));
        }
    }
    Ok(Glued {
        values,
        owner,
        overlap_mismatch: mismatch,
    })
}

/// Infinity norm of the difference of two fields.
pub fn max_difference(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm_inf(&d)
}
