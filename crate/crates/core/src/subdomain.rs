//! Offline phase: subdomain problems in affine separated form, active
//! interface-parameter sets, and surrogate models built by PGD.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_convection, assemble_stiffness, assemble_supg, dirichlet_columns, Anisotropy, DofPartition,
    SpaceFunction, StructuredMesh, VectorField,
};
use crate::param_grid::{AxisStencil, ParamAxis, ParamPoint};
use crate::pgd::{self, PgdSettings};
use crate::separated::{SeparatedOperator, SeparatedVector, Term};
use crate::sparse::{axpy, BandedLu, CsrMatrix};

/// Scalar function of one parameter.
pub type ParamFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Product `Π_d ξ_d(μ_d)` of one factor per parametric axis.
#[derive(Clone)]
pub struct Separable {
    pub factors: Vec<ParamFn>,
}

impl Separable {
    pub fn new(factors: Vec<ParamFn>) -> Self {
        Self { factors }
    }

    /// Constant one on `n` axes.
    pub fn ones(n: usize) -> Self {
        Self {
            factors: (0..n).map(|_| Arc::new(|_: f64| 1.0) as ParamFn).collect(),
        }
    }

    pub fn eval(&self, mu: &[f64]) -> f64 {
        self.factors.iter().zip(mu).map(|(f, &m)| f(m)).product()
    }

    pub fn collocate(&self, axes: &[ParamAxis]) -> Vec<Vec<f64>> {
        self.factors.iter().zip(axes).map(|(f, a)| a.collocate(|x| f(x))).collect()
    }
}

impl fmt::Debug for Separable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Separable({} factors)", self.factors.len())
    }
}

/// Convenience constructor for a parameter factor.
pub fn param_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ParamFn {
    Arc::new(f)
}

/// `ξ(μ) K` with `K` assembled over all mesh nodes.
#[derive(Debug, Clone)]
pub struct AffineMatrix {
    pub matrix: Arc<CsrMatrix>,
    pub coeff: Separable,
}

/// `ξ(μ) f` with `f` a full nodal vector.
#[derive(Debug, Clone)]
pub struct AffineVector {
    pub vector: Vec<f64>,
    pub coeff: Separable,
}

/// A local problem with parametrized Dirichlet data on its interfaces.
#[derive(Debug, Clone)]
pub struct SubdomainProblem {
    pub id: String,
    pub mesh: StructuredMesh,
    pub partition: DofPartition,
    pub mu_axes: Vec<ParamAxis>,
    pub operator: Vec<AffineMatrix>,
    /// Volume and Neumann load vectors.
    pub loads: Vec<AffineVector>,
    /// Nodal Dirichlet values (nonzero only on external Dirichlet DOFs).
    pub dirichlet: Vec<AffineVector>,
    /// Template for every interface-parameter axis.
    pub lambda_axis: ParamAxis,
}

impl SubdomainProblem {
    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes()
    }

    /// Interface DOFs of all interfaces, concatenated.
    pub fn interface_dofs(&self) -> Vec<usize> {
        self.partition.interface_dofs()
    }

    fn mu_values(&self, mu: &ParamPoint) -> Result<Vec<f64>> {
        self.mu_axes.iter().map(|a| mu.value_on(a)).collect()
    }

    /// Full operator, load and Dirichlet vector at `μ`.
    pub fn assemble_at(&self, mu: &ParamPoint) -> Result<(CsrMatrix, Vec<f64>, Vec<f64>)> {
        let m = self.mu_values(mu)?;
        let terms: Vec<(f64, &CsrMatrix)> = self.operator.iter().map(|t| (t.coeff.eval(&m), t.matrix.as_ref())).collect();
        let k = CsrMatrix::linear_combination(&terms);
        let n = self.n_nodes();
        let mut f = vec![0.0; n];
        for l in &self.loads {
            axpy(l.coeff.eval(&m), &l.vector, &mut f);
        }
        let mut g = vec![0.0; n];
        for d in &self.dirichlet {
            axpy(d.coeff.eval(&m), &d.vector, &mut g);
        }
        Ok((k, f, g))
    }

    /// Direct FEM solve at `μ` with the given interface values.
    pub fn prepare_exact(&self, mu: &ParamPoint) -> Result<ExactLocal> {
        let (k, f, g) = self.assemble_at(mu)?;
        let interior = self.partition.interior().to_vec();
        let boundary: Vec<usize> = self.partition.dirichlet().to_vec();
        let iface = self.interface_dofs();
        let kii = k.submatrix(&interior, &interior);
        let lu = BandedLu::factor(&kii)?;
        let kid = k.submatrix(&interior, &boundary);
        let gd: Vec<f64> = boundary.iter().map(|&b| g[b]).collect();
        let mut base: Vec<f64> = interior.iter().map(|&i| f[i]).collect();
        axpy(-1.0, &kid.matvec(&gd), &mut base);
        let kig = k.submatrix(&interior, &iface);
        Ok(ExactLocal {
            n: self.n_nodes(),
            interior,
            iface,
            lu,
            base,
            kig,
            dirichlet_values: g,
        })
    }
}

/// Factorized local problem at fixed `μ`.
#[derive(Debug, Clone)]
pub struct ExactLocal {
    n: usize,
    interior: Vec<usize>,
    iface: Vec<usize>,
    lu: BandedLu,
    base: Vec<f64>,
    kig: CsrMatrix,
    dirichlet_values: Vec<f64>,
}

impl ExactLocal {
    pub fn n_interface(&self) -> usize {
        self.iface.len()
    }

    /// Full nodal solution for interface values `lambda` (one per interface DOF).
    pub fn solve(&self, lambda: &[f64]) -> Vec<f64> {
        let mut rhs = self.base.clone();
        axpy(-1.0, &self.kig.matvec(lambda), &mut rhs);
        let ui = self.lu.solve(&rhs);
        let mut u = self.dirichlet_values.clone();
        for (&i, &v) in self.interior.iter().zip(&ui) {
            u[i] = v;
        }
        for (&q, &v) in self.iface.iter().zip(lambda) {
            u[q] = v;
        }
        debug_assert_eq!(u.len(), self.n);
        u
    }

    /// Solution of the homogeneous problem (zero loads and external data) driven by `lambda`.
    pub fn solve_homogeneous(&self, lambda: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.interior.len()];
        axpy(-1.0, &self.kig.matvec(lambda), &mut rhs);
        let ui = self.lu.solve(&rhs);
        let mut u = vec![0.0; self.n];
        for (&i, &v) in self.interior.iter().zip(&ui) {
            u[i] = v;
        }
        for (&q, &v) in self.iface.iter().zip(lambda) {
            u[q] = v;
        }
        u
    }
}

/// Disjoint groups of interface-parameter positions, each solved as one subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePartition {
    /// Positions in the concatenated interface DOF list.
    pub sets: Vec<Vec<usize>>,
}

impl ActivePartition {
    pub fn n_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.sets.iter().map(|s| s.len()).collect()
    }
}

/// Consecutive blocks of `max_active` positions, the last holding the remainder.
pub fn partition_active(n_interface_dofs: usize, max_active: usize) -> Result<ActivePartition> {
    if max_active == 0 {
        return Err(Error::Config("max_active must be at least 1".into()));
    }
    let idx: Vec<usize> = (0..n_interface_dofs).collect();
    Ok(ActivePartition {
        sets: idx.chunks(max_active).map(|c| c.to_vec()).collect(),
    })
}

/// Name of the parameter axis carrying the value of interface position `q`.
pub fn lambda_name(q: usize) -> String {
    format!("lambda{q}")
}

/// Which local subproblem to set up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Source,
    Boundary(usize),
}

/// Parametric system of the source or of one boundary subproblem, on interior DOFs.
pub fn build_parametric_system(
    problem: &SubdomainProblem,
    active: &ActivePartition,
    which: Which,
) -> Result<(SeparatedOperator, SeparatedVector)> {
    let interior = problem.partition.interior();
    let ni = interior.len();
    let iface = problem.interface_dofs();
    let lambda_axes: Vec<ParamAxis> = match which {
        Which::Source => Vec::new(),
        Which::Boundary(j) => {
            let set = active
                .sets
                .get(j)
                .ok_or_else(|| Error::Config(format!("no active set {j}")))?;
            set.iter().map(|&q| problem.lambda_axis.renamed(lambda_name(q))).collect()
        }
    };
    let mut axes = problem.mu_axes.clone();
    axes.extend(lambda_axes.iter().cloned());
    let ones_lambda: Vec<Vec<f64>> = lambda_axes.iter().map(|a| vec![1.0; a.len()]).collect();

    let mut op = SeparatedOperator::new(ni, ni, axes.clone());
    let mut mu_coeffs = Vec::new();
    for t in &problem.operator {
        if t.coeff.factors.len() != problem.mu_axes.len() {
            return Err(Error::Config(format!(
                "operator term of `{}` is not separated over its {} parameters",
                problem.id,
                problem.mu_axes.len()
            )));
        }
        let c = t.coeff.collocate(&problem.mu_axes);
        let mut all = c.clone();
        all.extend(ones_lambda.iter().cloned());
        op.push_term(Arc::new(t.matrix.submatrix(interior, interior)), all)?;
        mu_coeffs.push(c);
    }

    let mut rhs = SeparatedVector::zeros(ni, axes.clone());
    match which {
        Which::Source => {
            for l in &problem.loads {
                let v: Vec<f64> = interior.iter().map(|&i| l.vector[i]).collect();
                if v.iter().any(|&x| x != 0.0) {
                    rhs.push_term(Term::new(v, l.coeff.collocate(&problem.mu_axes)))?;
                }
            }
            for d in &problem.dirichlet {
                let gd = d.coeff.collocate(&problem.mu_axes);
                for (t, c) in problem.operator.iter().zip(&mu_coeffs) {
                    let kg = t.matrix.matvec(&d.vector);
                    let v: Vec<f64> = interior.iter().map(|&i| -kg[i]).collect();
                    if v.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let modes = c.iter().zip(&gd).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect()).collect();
                    rhs.push_term(Term::new(v, modes))?;
                }
            }
        }
        Which::Boundary(j) => {
            let set = &active.sets[j];
            let dofs: Vec<usize> = set.iter().map(|&q| iface[q]).collect();
            for (t, c) in problem.operator.iter().zip(&mu_coeffs) {
                let lifts = dirichlet_columns(&t.matrix, &problem.partition, &dofs)?;
                for (s, lift) in lifts.into_iter().enumerate() {
                    if lift.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let mut modes = c.clone();
                    for (k, a) in lambda_axes.iter().enumerate() {
                        modes.push(if k == s { a.nodes().to_vec() } else { vec![1.0; a.len()] });
                    }
                    rhs.push_term(Term::new(lift, modes))?;
                }
            }
        }
    }
    Ok((op, rhs))
}

/// Diagnostics of one PGD subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubproblemStats {
    pub name: String,
    pub raw_modes: usize,
    pub compressed_modes: usize,
    pub relative_amplitudes: Vec<f64>,
    pub tolerance_met: bool,
    pub als_not_converged: usize,
    pub seconds: f64,
}

/// Surrogate for the boundary subproblem of one active set.
#[derive(Debug, Clone)]
pub struct BoundarySet {
    /// Positions in the interface DOF list.
    pub positions: Vec<usize>,
    pub lambda_axes: Vec<ParamAxis>,
    /// Over (space, μ axes, this set's Λ axes), including the nodal lift.
    pub part: SeparatedVector,
}

/// Source part plus one boundary part per active set, all over full nodal vectors.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub id: String,
    pub n_nodes: usize,
    pub interface_dofs: Vec<usize>,
    pub mu_axes: Vec<ParamAxis>,
    pub lambda_axis: ParamAxis,
    pub source: SeparatedVector,
    pub sets: Vec<BoundarySet>,
    pub stats: Vec<SubproblemStats>,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn prolong(interior: &[usize], n: usize, v: &SeparatedVector) -> Result<SeparatedVector> {
    let terms = v
        .terms()
        .iter()
        .map(|t| {
            let mut full = vec![0.0; n];
            for (&i, &x) in interior.iter().zip(&t.space) {
                full[i] = x;
            }
            Term::new(full, t.modes.clone())
        })
        .collect();
    SeparatedVector::from_terms(n, v.axes().to_vec(), terms)
}

/// Solve the source and all boundary subproblems and superpose the lifts.
///
/// Subproblems run on a pool of `workers` threads; results do not depend on
/// the worker count.
pub fn build_surrogate(
    problem: &SubdomainProblem,
    active: &ActivePartition,
    settings: &PgdSettings,
    workers: usize,
) -> Result<SurrogateModel> {
    settings.validate()?;
    let n = problem.n_nodes();
    let interior = problem.partition.interior();
    let iface = problem.interface_dofs();
    let covered: usize = active.sets.iter().map(|s| s.len()).sum();
    if covered != iface.len() {
        return Err(Error::Config(format!(
            "active sets cover {covered} of {} interface DOFs of `{}`",
            iface.len(),
            problem.id
        )));
    }
    let jobs: Vec<Which> = std::iter::once(Which::Source)
        .chain((0..active.n_sets()).map(Which::Boundary))
        .collect();
    let run = |w: &Which| -> Result<(SeparatedVector, SubproblemStats)> {
        let name = match w {
            Which::Source => format!("{}/source", problem.id),
            Which::Boundary(j) => format!("{}/set{}", problem.id, j + 1),
        };
        let annotate = |e: Error| Error::Subproblem {
            id: name.clone(),
            source: Box::new(e),
        };
        let start = Instant::now();
        let (k, f) = build_parametric_system(problem, active, *w).map_err(annotate)?;
        let local = PgdSettings {
            seed: settings.seed ^ fnv1a(&name),
            ..settings.clone()
        };
        let out = pgd::solve(&k, &f, &local).map_err(annotate)?;
        let stats = SubproblemStats {
            name: name.clone(),
            raw_modes: out.raw_modes,
            compressed_modes: out.solution.len(),
            relative_amplitudes: out.relative_amplitudes,
            tolerance_met: out.tolerance_met,
            als_not_converged: out.als_not_converged,
            seconds: start.elapsed().as_secs_f64(),
        };
        info!("{name}: {} modes, {} after compression", stats.raw_modes, stats.compressed_modes);
        Ok((prolong(interior, n, &out.solution).map_err(annotate)?, stats))
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let results: Vec<Result<(SeparatedVector, SubproblemStats)>> = pool.install(|| jobs.par_iter().map(run).collect());
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter();

    let (mut source, s0) = results.next().unwrap();
    let mut stats = vec![s0];
    for d in &problem.dirichlet {
        source.push_term(Term::new(d.vector.clone(), d.coeff.collocate(&problem.mu_axes)))?;
    }
    let mut sets = Vec::with_capacity(active.n_sets());
    for (j, (part, st)) in results.enumerate() {
        let positions = active.sets[j].clone();
        let lambda_axes: Vec<ParamAxis> = positions.iter().map(|&q| problem.lambda_axis.renamed(lambda_name(q))).collect();
        let mut part = part;
        for (s, &q) in positions.iter().enumerate() {
            let mut e = vec![0.0; n];
            e[iface[q]] = 1.0;
            let mut modes: Vec<Vec<f64>> = problem.mu_axes.iter().map(|a| vec![1.0; a.len()]).collect();
            for (k, a) in lambda_axes.iter().enumerate() {
                modes.push(if k == s { a.nodes().to_vec() } else { vec![1.0; a.len()] });
            }
            part.push_term(Term::new(e, modes))?;
        }
        sets.push(BoundarySet {
            positions,
            lambda_axes,
            part,
        });
        stats.push(st);
    }
    Ok(SurrogateModel {
        id: problem.id.clone(),
        n_nodes: n,
        interface_dofs: iface,
        mu_axes: problem.mu_axes.clone(),
        lambda_axis: problem.lambda_axis.clone(),
        source,
        sets,
        stats,
    })
}

/// On-disk description of a surrogate; tensors live in sibling container files.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    id: String,
    n_nodes: usize,
    interface_dofs: Vec<usize>,
    mu_axes: Vec<ParamAxis>,
    lambda_axis: ParamAxis,
    sets: Vec<Vec<usize>>,
    stats: Vec<SubproblemStats>,
    source_file: String,
    set_files: Vec<String>,
    extra: BTreeMap<String, serde_json::Value>,
}

impl SurrogateModel {
    /// Total modes over all parts, lifts excluded.
    pub fn compressed_modes(&self) -> usize {
        self.stats.iter().map(|s| s.compressed_modes).sum()
    }

    pub fn raw_modes(&self) -> usize {
        self.stats.iter().map(|s| s.raw_modes).sum()
    }

    /// All Λ axes of the subdomain in interface order.
    pub fn lambda_axes(&self) -> Vec<ParamAxis> {
        (0..self.interface_dofs.len())
            .map(|q| self.lambda_axis.renamed(lambda_name(q)))
            .collect()
    }

    /// Boundary part `j` extended with constant modes to all Λ axes.
    pub fn extended_boundary_part(&self, j: usize) -> Result<SeparatedVector> {
        let mut axes = self.mu_axes.clone();
        axes.extend(self.lambda_axes());
        self.sets[j].part.extend_dims(&axes)
    }

    /// Full surrogate `u_0(μ) + Σ_j u_j(μ, Λ_j)` at `μ` and interface values `lambda`.
    pub fn evaluate(&self, mu: &ParamPoint, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda.len() != self.interface_dofs.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} interface values for {} interface DOFs",
                lambda.len(),
                self.interface_dofs.len()
            )));
        }
        let mut u = self.source.evaluate(mu)?;
        let mu_st: Vec<AxisStencil> = self.mu_axes.iter().map(|a| Ok(AxisStencil::new(a, mu.value_on(a)?))).collect::<Result<_>>()?;
        for set in &self.sets {
            let mut st = mu_st.clone();
            for (a, &q) in set.lambda_axes.iter().zip(&set.positions) {
                if !a.contains(lambda[q]) {
                    return Err(Error::OutOfRange {
                        axis: a.name().to_string(),
                        value: lambda[q],
                        lo: a.lo(),
                        hi: a.hi(),
                    });
                }
                st.push(AxisStencil::new(a, lambda[q]));
            }
            let w = set.part.term_weights(&st);
            for (t, &c) in set.part.terms().iter().zip(&w) {
                if c != 0.0 {
                    axpy(c, &t.space, &mut u);
                }
            }
        }
        Ok(u)
    }

    /// Boundary part `j` alone at `μ` and its own Λ values.
    pub fn evaluate_boundary_part(&self, j: usize, mu: &ParamPoint, lambda_j: &[f64]) -> Result<Vec<f64>> {
        let set = &self.sets[j];
        let mut p = mu.clone();
        for (a, &v) in set.lambda_axes.iter().zip(lambda_j) {
            p.set(a.name(), v);
        }
        set.part.evaluate(&p)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let source_file = format!("{}.source.bin", self.id);
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&source_file))?);
        self.source.write_to(&mut w)?;
        let mut set_files = Vec::new();
        for (j, s) in self.sets.iter().enumerate() {
            let name = format!("{}.set{}.bin", self.id, j + 1);
            let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
            s.part.write_to(&mut w)?;
            set_files.push(name);
        }
        let m = Manifest {
            id: self.id.clone(),
            n_nodes: self.n_nodes,
            interface_dofs: self.interface_dofs.clone(),
            mu_axes: self.mu_axes.clone(),
            lambda_axis: self.lambda_axis.clone(),
            sets: self.sets.iter().map(|s| s.positions.clone()).collect(),
            stats: self.stats.clone(),
            source_file,
            set_files,
            extra: BTreeMap::new(),
        };
        std::fs::write(dir.join(format!("{}.json", self.id)), serde_json::to_string_pretty(&m)?)?;
        Ok(())
    }

    pub fn load(dir: &Path, id: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{id}.json")))?)?;
        let mut r = std::io::BufReader::new(std::fs::File::open(dir.join(&m.source_file))?);
        let source = SeparatedVector::read_from(&mut r)?;
        if m.sets.len() != m.set_files.len() {
            return Err(Error::Container("set list and file list differ".into()));
        }
        let mut sets = Vec::new();
        for (positions, file) in m.sets.iter().zip(&m.set_files) {
            let mut r = std::io::BufReader::new(std::fs::File::open(dir.join(file))?);
            let part = SeparatedVector::read_from(&mut r)?;
            let lambda_axes: Vec<ParamAxis> = positions.iter().map(|&q| m.lambda_axis.renamed(lambda_name(q))).collect();
            if part.space_len() != m.n_nodes || part.axes().len() != m.mu_axes.len() + lambda_axes.len() {
                return Err(Error::Container(format!("{file} does not match its manifest")));
            }
            sets.push(BoundarySet {
                positions: positions.clone(),
                lambda_axes,
                part,
            });
        }
        Ok(Self {
            id: m.id,
            n_nodes: m.n_nodes,
            interface_dofs: m.interface_dofs,
            mu_axes: m.mu_axes,
            lambda_axis: m.lambda_axis,
            source,
            sets,
            stats: m.stats,
        })
    }
}

/// Maps between reference and physical coordinates of a subdomain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeometricMap {
    Identity,
    /// `x = 1 + x̂` for `x̂ ≤ h̄`, linear stretch to `1 + μ₂` beyond; `y = ŷ`.
    GraetzStretch { h_bar: f64 },
    /// Rotation by `quarter_turns · π/2` about `(0.5, 0.5)`, then translation.
    Rigid { translation: [f64; 2], quarter_turns: u8 },
}

/// `(cos, sin)` of an exact quarter turn.
fn quarter(k: u8) -> (f64, f64) {
    match k % 4 {
        0 => (1.0, 0.0),
        1 => (0.0, 1.0),
        2 => (-1.0, 0.0),
        _ => (0.0, -1.0),
    }
}

const ROT_CENTER: [f64; 2] = [0.5, 0.5];

impl GeometricMap {
    /// Rigid map from a rotation angle that must be a multiple of π/2.
    pub fn rigid(translation: [f64; 2], angle: f64) -> Result<Self> {
        let turns = angle / std::f64::consts::FRAC_PI_2;
        let r = turns.round();
        if (turns - r).abs() > 1e-9 {
            return Err(Error::Config(format!("rotation {angle} is not a quarter turn")));
        }
        Ok(Self::Rigid {
            translation,
            quarter_turns: r.rem_euclid(4.0) as u8,
        })
    }

    /// `ζ(μ₂) = (μ₂ − h̄) / (1 − h̄)`.
    pub fn zeta(h_bar: f64, mu2: f64) -> f64 {
        (mu2 - h_bar) / (1.0 - h_bar)
    }

    /// Reference to physical; `mu2` is only used by the stretch.
    pub fn to_physical(&self, p: [f64; 2], mu2: f64) -> [f64; 2] {
        match *self {
            Self::Identity => p,
            Self::GraetzStretch { h_bar } => {
                let x = if p[0] <= h_bar {
                    1.0 + p[0]
                } else {
                    (1.0 - h_bar * p[0]) / (1.0 - h_bar) + mu2 * (p[0] - h_bar) / (1.0 - h_bar)
                };
                [x, p[1]]
            }
            Self::Rigid { translation, quarter_turns } => {
                let (c, s) = quarter(quarter_turns);
                let (dx, dy) = (p[0] - ROT_CENTER[0], p[1] - ROT_CENTER[1]);
                [
                    translation[0] + ROT_CENTER[0] + c * dx - s * dy,
                    translation[1] + ROT_CENTER[1] + s * dx + c * dy,
                ]
            }
        }
    }

    pub fn to_reference(&self, p: [f64; 2], mu2: f64) -> [f64; 2] {
        match *self {
            Self::Identity => p,
            Self::GraetzStretch { h_bar } => {
                let x = if p[0] <= 1.0 + h_bar {
                    p[0] - 1.0
                } else {
                    h_bar + (p[0] - 1.0 - h_bar) / Self::zeta(h_bar, mu2)
                };
                [x, p[1]]
            }
            Self::Rigid { translation, quarter_turns } => {
                let (c, s) = quarter(quarter_turns);
                let (dx, dy) = (
                    p[0] - translation[0] - ROT_CENTER[0],
                    p[1] - translation[1] - ROT_CENTER[1],
                );
                [ROT_CENTER[0] + c * dx + s * dy, ROT_CENTER[1] - s * dx + c * dy]
            }
        }
    }
}

/// A surrogate positioned in physical space.
#[derive(Debug, Clone)]
pub struct PlacedModel {
    pub model: Arc<SurrogateModel>,
    pub map: GeometricMap,
    /// Physical coordinates of every reference node.
    pub physical_nodes: Vec<[f64; 2]>,
}

/// Physical node coordinates of a rigidly placed model (pure coordinate permutation).
pub fn place_rigid(model: Arc<SurrogateModel>, mesh: &StructuredMesh, map: GeometricMap) -> Result<PlacedModel> {
    if !matches!(map, GeometricMap::Rigid { .. } | GeometricMap::Identity) {
        return Err(Error::Config("place_rigid needs a rigid map".into()));
    }
    if mesh.n_nodes() != model.n_nodes {
        return Err(Error::DimensionMismatch("mesh and surrogate node counts differ".into()));
    }
    let physical_nodes = mesh.nodes().iter().map(|&p| map.to_physical(p, 0.0)).collect();
    Ok(PlacedModel {
        model,
        map,
        physical_nodes,
    })
}

/// Affine-in-μ operator terms of the stretched Graetz subdomain on its reference mesh.
///
/// Parameters are ordered `(μ₁, μ₂)`; `μ₁` enters as `1/μ₁` on diffusion. The
/// mesh must have a grid line at `x̂ = h̄`. `tau` is the frozen stabilization
/// field on the reference mesh.
pub fn pull_back_graetz(
    mesh: &StructuredMesh,
    map: &GeometricMap,
    velocity: &VectorField,
    tau: &SpaceFunction,
    mu2_axis: &ParamAxis,
) -> Result<Vec<AffineMatrix>> {
    let GeometricMap::GraetzStretch { h_bar } = *map else {
        return Err(Error::Config("pull_back_graetz needs a stretch map".into()));
    };
    if mu2_axis.nodes().iter().any(|&m| !(GeometricMap::zeta(h_bar, m) > 0.0)) {
        return Err(Error::Config(format!(
            "stretch factor is not positive on [{}, {}] with h_bar = {h_bar}",
            mu2_axis.lo(),
            mu2_axis.hi()
        )));
    }
    let mut r1 = Vec::with_capacity(mesh.n_elements());
    for el in mesh.elements() {
        let inside = el.x1 <= h_bar + 1e-12;
        if !inside && el.x0 < h_bar - 1e-12 {
            return Err(Error::InvalidMesh(format!("no grid line at x = {h_bar}")));
        }
        r1.push(if inside { 1.0 } else { 0.0 });
    }
    let r2: Vec<f64> = r1.iter().map(|v| 1.0 - v).collect();
    let reg1 = SpaceFunction::PerElement(r1);
    let reg2 = SpaceFunction::PerElement(r2);
    let one = SpaceFunction::Constant(1.0);
    let tau_vals = |mask: &SpaceFunction| -> SpaceFunction {
        SpaceFunction::PerElement(
            (0..mesh.n_elements())
                .map(|e| {
                    let (cx, cy) = mesh.element(e).centroid();
                    tau.eval(e, cx, cy) * mask.eval(e, cx, cy)
                })
                .collect(),
        )
    };
    let inv_mu1 = param_fn(|m| 1.0 / m);
    let unit = param_fn(|_| 1.0);
    let inv_zeta = param_fn(move |m| 1.0 / GeometricMap::zeta(h_bar, m));
    let zeta = param_fn(move |m| GeometricMap::zeta(h_bar, m));

    let k_r1 = assemble_stiffness(mesh, &reg1, None)?;
    let k_xx = assemble_stiffness(mesh, &reg2, Some(&Anisotropy::constant([[1.0, 0.0], [0.0, 0.0]])))?;
    let k_yy = assemble_stiffness(mesh, &reg2, Some(&Anisotropy::constant([[0.0, 0.0], [0.0, 1.0]])))?;
    let conv = assemble_convection(mesh, velocity)?;
    let s1 = assemble_supg(mesh, velocity, &tau_vals(&reg1), &one, &one)?;
    let s2 = assemble_supg(mesh, velocity, &tau_vals(&reg2), &one, &one)?;
    let c1 = CsrMatrix::linear_combination(&[(1.0, &conv), (1.0, &s1)]);
    let term = |m: CsrMatrix, a: &ParamFn, b: &ParamFn| AffineMatrix {
        matrix: Arc::new(m),
        coeff: Separable::new(vec![a.clone(), b.clone()]),
    };
    Ok(vec![
        term(k_r1, &inv_mu1, &unit),
        term(k_xx, &inv_mu1, &inv_zeta),
        term(k_yy, &inv_mu1, &zeta),
        term(c1, &unit, &unit),
        term(s2, &unit, &inv_zeta),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_chunking() {
        assert_eq!(partition_active(19, 3).unwrap().block_sizes(), vec![3, 3, 3, 3, 3, 3, 1]);
        assert_eq!(partition_active(4, 4).unwrap().n_sets(), 1);
        assert_eq!(partition_active(63, 3).unwrap().n_sets(), 21);
        assert!(partition_active(5, 0).is_err());
    }

    #[test]
    fn rigid_maps_are_exact() {
        let m = GeometricMap::rigid([1.5, 0.0], std::f64::consts::PI).unwrap();
        let p = [-0.2625, 0.3];
        let q = m.to_physical(p, 0.0);
        let close = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14;
        assert!(close(q, [1.5 + 1.2625, 0.7]));
        assert!(close(m.to_reference(q, 0.0), p));
        let twice = GeometricMap::rigid([0.0, 0.0], std::f64::consts::PI).unwrap();
        let back = twice.to_physical(twice.to_physical(p, 0.0), 0.0);
        assert!(close(back, p));
        assert!(GeometricMap::rigid([0.0, 0.0], 1.0).is_err());
        assert_eq!(GeometricMap::Identity.to_physical(p, 3.0), p);
    }

    #[test]
    fn stretch_map() {
        let m = GeometricMap::GraetzStretch { h_bar: 0.05 };
        assert_eq!(m.to_physical([0.05, 0.2], 3.0), [1.05, 0.2]);
        let end = m.to_physical([1.0, 0.0], 3.0);
        assert!((end[0] - 4.0).abs() < 1e-14);
        let back = m.to_reference(m.to_physical([0.4, 0.1], 2.5), 2.5);
        assert!((back[0] - 0.4).abs() < 1e-14);
        assert!((1.0 / GeometricMap::zeta(0.05, 4.0) - 0.95 / 3.95).abs() < 1e-15);
        assert_eq!(GeometricMap::zeta(0.05, 1.0), 1.0);
    }
}
