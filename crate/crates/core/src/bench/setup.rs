use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    assemble_convection, assemble_load, assemble_neumann, assemble_stiffness, assemble_supg, supg_tau, BoundaryEdge,
    DofPartition, EdgeTag, SpaceFunction, StructuredMesh, VectorField,
};
use crate::param_grid::{ParamAxis, ParamPoint};
use crate::reference::test1_source_modes;
use crate::schwarz::{LocalSolver, SubdomainInstance};
use crate::subdomain::{param_fn, pull_back_graetz, AffineMatrix, AffineVector, GeometricMap, Separable, SubdomainProblem};

use super::config::{BenchmarkConfig, BenchmarkKind, GraetzSpec, Scale, Segments, ThermalSpec, WingSide};

/// One physical subdomain: a reference problem, its placement and its parameters.
#[derive(Debug, Clone)]
pub struct Placement {
    pub name: String,
    pub reference: usize,
    pub map: GeometricMap,
    /// `(local axis name, index into the global parameter point)`.
    pub local_mu: Vec<(String, usize)>,
    /// `(interface, value)` pairs imposed as data.
    pub fixed: Vec<(usize, f64)>,
}

/// The global problem at one parameter point.
pub struct GlobalProblem {
    pub problem: SubdomainProblem,
    pub point: ParamPoint,
}

/// Everything needed to run one benchmark at one parametric scale.
pub struct Setup {
    pub config: BenchmarkConfig,
    pub scale: Scale,
    pub references: Vec<Arc<SubdomainProblem>>,
    pub placements: Vec<Placement>,
}

fn breaks(segments: &Segments) -> Vec<f64> {
    let mut out = vec![segments[0].0];
    for &(a, b, n) in segments {
        for k in 1..=n {
            out.push(if k == n { b } else { a + (b - a) * k as f64 / n as f64 });
        }
    }
    out
}

fn clustered_breaks(n: usize, beta: f64) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            let s = i as f64 / n as f64;
            if beta == 0.0 {
                s
            } else {
                0.5 * (1.0 - (beta * (1.0 - 2.0 * s)).tanh() / beta.tanh())
            }
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-10
}

fn ones(n: usize) -> Separable {
    Separable::ones(n)
}

fn unique_sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

impl Setup {
    pub fn new(config: BenchmarkConfig, scale: Scale) -> Result<Self> {
        config.validate()?;
        match config.benchmark {
            BenchmarkKind::Test1 => Self::test1(config, scale),
            BenchmarkKind::Graetz => Self::graetz(config, scale),
            BenchmarkKind::Thermal => Self::thermal(config, scale),
        }
    }

    pub fn kind(&self) -> BenchmarkKind {
        self.config.benchmark
    }

    /// Parameters of placement `i` at global point `mu`.
    pub fn local_point(&self, i: usize, mu: &[f64]) -> ParamPoint {
        let mut p = ParamPoint::new();
        for (name, k) in &self.placements[i].local_mu {
            p.set(name.clone(), mu[*k]);
        }
        p
    }

    fn geometric_mu(&self, mu: &[f64]) -> f64 {
        match self.kind() {
            BenchmarkKind::Graetz => mu[1],
            _ => 0.0,
        }
    }

    /// Physical node coordinates of placement `i`.
    pub fn physical_nodes(&self, i: usize, mu: &[f64]) -> Vec<[f64; 2]> {
        let pl = &self.placements[i];
        let g = self.geometric_mu(mu);
        self.references[pl.reference]
            .mesh
            .nodes()
            .iter()
            .map(|&p| pl.map.to_physical(p, g))
            .collect()
    }

    /// `(placement, interface, values)` for all interfaces imposed as data.
    pub fn fixed(&self) -> Vec<(usize, usize, Vec<f64>)> {
        let mut out = Vec::new();
        for (i, pl) in self.placements.iter().enumerate() {
            for &(k, v) in &pl.fixed {
                let n = self.references[pl.reference].partition.interface(k).dofs.len();
                out.push((i, k, vec![v; n]));
            }
        }
        out
    }

    /// One instance per placement, with local solvers given per reference.
    pub fn instances(&self, solvers: &[Arc<dyn LocalSolver>], mu: &[f64]) -> Result<Vec<SubdomainInstance>> {
        if solvers.len() != self.references.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} local solvers for {} reference subdomains",
                solvers.len(),
                self.references.len()
            )));
        }
        self.config.check_point(mu)?;
        Ok(self
            .placements
            .iter()
            .enumerate()
            .map(|(i, pl)| SubdomainInstance {
                name: pl.name.clone(),
                solver: solvers[pl.reference].clone(),
                mu: self.local_point(i, mu),
                physical_nodes: self.physical_nodes(i, mu),
            })
            .collect())
    }

    /// Monolithic problem on the union mesh at `mu`.
    pub fn global_problem(&self, mu: &[f64]) -> Result<GlobalProblem> {
        self.config.check_point(mu)?;
        match self.kind() {
            BenchmarkKind::Test1 => self.test1_global(mu),
            BenchmarkKind::Graetz => self.graetz_global(mu),
            BenchmarkKind::Thermal => self.thermal_global(mu),
        }
    }

    // Diffusion with ν = 1 + μx and a manufactured source.

    fn test1_problem(
        id: &str,
        mesh: StructuredMesh,
        interface: Option<f64>,
        mu_axis: &ParamAxis,
        lambda: &ParamAxis,
    ) -> Result<SubdomainProblem> {
        let names: Vec<&str> = if interface.is_some() { vec!["cut"] } else { vec![] };
        let partition = DofPartition::classify(&mesh, &names, |e| match interface {
            Some(x) if close(e.start[0], x) && close(e.end[0], x) => EdgeTag::Interface(0),
            _ => EdgeTag::Dirichlet,
        })?;
        let k0 = assemble_stiffness(&mesh, &SpaceFunction::Constant(1.0), None)?;
        let k1 = assemble_stiffness(&mesh, &SpaceFunction::from_fn(|x, _| x), None)?;
        let id_fn = param_fn(|m| m);
        let sq_fn = param_fn(|m| m * m);
        let [b1, b2, b3] = test1_source_modes();
        let loads = vec![
            AffineVector {
                vector: assemble_load(&mesh, &b1)?,
                coeff: ones(1),
            },
            AffineVector {
                vector: assemble_load(&mesh, &b2)?,
                coeff: Separable::new(vec![id_fn.clone()]),
            },
            AffineVector {
                vector: assemble_load(&mesh, &b3)?,
                coeff: Separable::new(vec![sq_fn]),
            },
        ];
        Ok(SubdomainProblem {
            id: id.to_string(),
            mesh,
            partition,
            mu_axes: vec![mu_axis.clone()],
            operator: vec![
                AffineMatrix {
                    matrix: Arc::new(k0),
                    coeff: ones(1),
                },
                AffineMatrix {
                    matrix: Arc::new(k1),
                    coeff: Separable::new(vec![id_fn]),
                },
            ],
            loads,
            dirichlet: Vec::new(),
            lambda_axis: lambda.clone(),
        })
    }

    fn test1(config: BenchmarkConfig, scale: Scale) -> Result<Self> {
        let t = config.test1.clone().unwrap();
        let mu_axes = config.mu_axes(scale)?;
        let lambda = config.lambda_axis(scale)?;
        let h = t.length / t.nx as f64;
        let k = (t.cut / h).round() as usize;
        let (a1, b2) = (k + t.overlap, k - t.overlap);
        let x1 = a1 as f64 * h;
        let x2 = b2 as f64 * h;
        let m1 = StructuredMesh::uniform(0.0, x1, a1, 0.0, t.height, t.ny, 1)?;
        let m2 = StructuredMesh::uniform(x2, t.length, t.nx - b2, 0.0, t.height, t.ny, 1)?;
        let p1 = Self::test1_problem("omega1", m1, Some(x1), &mu_axes[0], &lambda)?;
        let p2 = Self::test1_problem("omega2", m2, Some(x2), &mu_axes[0], &lambda)?;
        let axis = mu_axes[0].name().to_string();
        let placements = ["omega1", "omega2"]
            .iter()
            .enumerate()
            .map(|(i, n)| Placement {
                name: n.to_string(),
                reference: i,
                map: GeometricMap::Identity,
                local_mu: vec![(axis.clone(), 0)],
                fixed: Vec::new(),
            })
            .collect();
        Ok(Self {
            config,
            scale,
            references: vec![Arc::new(p1), Arc::new(p2)],
            placements,
        })
    }

    fn test1_global(&self, mu: &[f64]) -> Result<GlobalProblem> {
        let t = self.config.test1.as_ref().unwrap();
        let mesh = StructuredMesh::uniform(0.0, t.length, t.nx, 0.0, t.height, t.ny, 1)?;
        let axis = &self.references[0].mu_axes[0];
        let problem = Self::test1_problem("global", mesh, None, axis, &self.references[0].lambda_axis)?;
        Ok(GlobalProblem {
            problem,
            point: ParamPoint::new().with(axis.name(), mu[0]),
        })
    }

    // Convection-dominated channel flow in a stretched domain.

    fn graetz_velocity() -> VectorField {
        VectorField::new(SpaceFunction::from_fn(|_, y| 4.0 * y * (1.0 - y)), SpaceFunction::Constant(0.0))
    }

    fn graetz_walls(mesh: &StructuredMesh, wall_value: impl Fn(f64) -> f64) -> Vec<f64> {
        mesh.nodes()
            .iter()
            .map(|p| if close(p[1], 0.0) || close(p[1], 1.0) { wall_value(p[0]) } else { 0.0 })
            .collect()
    }

    fn graetz(config: BenchmarkConfig, scale: Scale) -> Result<Self> {
        let g: GraetzSpec = config.graetz.clone().unwrap();
        let mu_axes = config.mu_axes(scale)?;
        let lambda = config.lambda_axis(scale)?;
        let yb = clustered_breaks(g.ny, g.y_clustering);
        let vel = Self::graetz_velocity();
        let inv = param_fn(|m| 1.0 / m);

        let m1 = StructuredMesh::new(breaks(&g.omega1_x), yb.clone(), 1)?;
        let x_end = *m1.x_breaks().last().unwrap();
        let part1 = DofPartition::classify(&m1, &["right"], |e| {
            if close(e.start[0], x_end) && close(e.end[0], x_end) {
                EdgeTag::Interface(0)
            } else {
                EdgeTag::Dirichlet
            }
        })?;
        let tau1 = supg_tau(&m1, &vel, g.tau_mu1, None);
        let k1 = assemble_stiffness(&m1, &SpaceFunction::Constant(1.0), None)?;
        let c1 = assemble_convection(&m1, &vel)?;
        let s1 = assemble_supg(&m1, &vel, &tau1, &SpaceFunction::Constant(1.0), &SpaceFunction::Constant(1.0))?;
        let cs1 = crate::sparse::CsrMatrix::linear_combination(&[(1.0, &c1), (1.0, &s1)]);
        let g1 = Self::graetz_walls(&m1, |x| if x > 1.0 + 1e-10 { 1.0 } else { 0.0 });
        let p1 = SubdomainProblem {
            id: "omega1".into(),
            mesh: m1,
            partition: part1,
            mu_axes: vec![mu_axes[0].clone()],
            operator: vec![
                AffineMatrix {
                    matrix: Arc::new(k1),
                    coeff: Separable::new(vec![inv.clone()]),
                },
                AffineMatrix {
                    matrix: Arc::new(cs1),
                    coeff: ones(1),
                },
            ],
            loads: Vec::new(),
            dirichlet: vec![AffineVector {
                vector: g1,
                coeff: ones(1),
            }],
            lambda_axis: lambda.clone(),
        };

        let m2 = StructuredMesh::new(breaks(&g.reference_x), yb, 1)?;
        let part2 = DofPartition::classify(&m2, &["left"], |e| {
            let horizontal = close(e.start[1], e.end[1]);
            if !horizontal && close(e.start[0], 0.0) {
                EdgeTag::Interface(0)
            } else if horizontal {
                EdgeTag::Dirichlet
            } else {
                EdgeTag::Neumann
            }
        })?;
        let map = GeometricMap::GraetzStretch { h_bar: g.h_bar };
        let tau2 = supg_tau(&m2, &vel, g.tau_mu1, None);
        let operator = pull_back_graetz(&m2, &map, &vel, &tau2, &mu_axes[1])?;
        let g2 = Self::graetz_walls(&m2, |x| if x > 1e-10 { 1.0 } else { 0.0 });
        let p2 = SubdomainProblem {
            id: "omega2".into(),
            mesh: m2,
            partition: part2,
            mu_axes: mu_axes.clone(),
            operator,
            loads: Vec::new(),
            dirichlet: vec![AffineVector {
                vector: g2,
                coeff: ones(2),
            }],
            lambda_axis: lambda,
        };
        let names: Vec<String> = mu_axes.iter().map(|a| a.name().to_string()).collect();
        let placements = vec![
            Placement {
                name: "omega1".into(),
                reference: 0,
                map: GeometricMap::Identity,
                local_mu: vec![(names[0].clone(), 0)],
                fixed: Vec::new(),
            },
            Placement {
                name: "omega2".into(),
                reference: 1,
                map,
                local_mu: vec![(names[0].clone(), 0), (names[1].clone(), 1)],
                fixed: Vec::new(),
            },
        ];
        Ok(Self {
            config,
            scale,
            references: vec![Arc::new(p1), Arc::new(p2)],
            placements,
        })
    }

    fn graetz_global(&self, mu: &[f64]) -> Result<GlobalProblem> {
        let g = self.config.graetz.as_ref().unwrap();
        let map = &self.placements[1].map;
        let zeta = GeometricMap::zeta(g.h_bar, mu[1]);
        let mut xb: Vec<f64> = self.references[0].mesh.x_breaks().to_vec();
        xb.extend(self.references[1].mesh.x_breaks().iter().map(|&x| map.to_physical([x, 0.0], mu[1])[0]));
        let xb = unique_sorted(xb);
        let mesh = StructuredMesh::new(xb, self.references[1].mesh.y_breaks().to_vec(), 1)?;
        let x_end = 1.0 + mu[1];
        let partition = DofPartition::classify(&mesh, &[], |e| {
            if close(e.start[0], x_end) && close(e.end[0], x_end) {
                EdgeTag::Neumann
            } else {
                EdgeTag::Dirichlet
            }
        })?;
        let vel = Self::graetz_velocity();
        let widths: Vec<f64> = mesh
            .elements()
            .iter()
            .map(|el| {
                if el.centroid().0 > 1.0 + g.h_bar {
                    el.hx() / zeta
                } else {
                    el.hx()
                }
            })
            .collect();
        let tau = supg_tau(&mesh, &vel, g.tau_mu1, Some(&widths));
        let k = assemble_stiffness(&mesh, &SpaceFunction::Constant(1.0), None)?;
        let c = assemble_convection(&mesh, &vel)?;
        let s = assemble_supg(&mesh, &vel, &tau, &SpaceFunction::Constant(1.0), &SpaceFunction::Constant(1.0))?;
        let cs = crate::sparse::CsrMatrix::linear_combination(&[(1.0, &c), (1.0, &s)]);
        let gv = Self::graetz_walls(&mesh, |x| if x > 1.0 + 1e-10 { 1.0 } else { 0.0 });
        let axis = self.references[0].mu_axes[0].clone();
        let problem = SubdomainProblem {
            id: "global".into(),
            mesh,
            partition,
            mu_axes: vec![axis.clone()],
            operator: vec![
                AffineMatrix {
                    matrix: Arc::new(k),
                    coeff: Separable::new(vec![param_fn(|m| 1.0 / m)]),
                },
                AffineMatrix {
                    matrix: Arc::new(cs),
                    coeff: ones(1),
                },
            ],
            loads: Vec::new(),
            dirichlet: vec![AffineVector {
                vector: gv,
                coeff: ones(1),
            }],
            lambda_axis: self.references[0].lambda_axis.clone(),
        };
        Ok(GlobalProblem {
            problem,
            point: ParamPoint::new().with(axis.name(), mu[0]),
        })
    }

    // Modular heat conduction through plus-shaped cells.

    fn thermal_breaks(t: &ThermalSpec) -> Vec<f64> {
        let w = t.wing_width;
        let b = t.bulk_size;
        breaks(&vec![(-w, 0.0, t.wing_cells), (0.0, b, t.bulk_cells), (b, b + w, t.wing_cells)])
    }

    /// Whether a reference point lies in the plus shape, and whether in its bulk.
    fn plus_region(t: &ThermalSpec, p: [f64; 2]) -> Option<bool> {
        let (w, b) = (t.wing_width, t.bulk_size);
        let eps = 1e-10;
        let inb = |v: f64| v > -eps && v < b + eps;
        let inw = |v: f64| v > -w - eps && v < b + w + eps;
        if inb(p[0]) && inb(p[1]) {
            Some(true)
        } else if (inb(p[0]) && inw(p[1])) || (inb(p[1]) && inw(p[0])) {
            Some(false)
        } else {
            None
        }
    }

    /// Outer wing end a reference edge lies on, if any.
    fn wing_side(t: &ThermalSpec, e: &BoundaryEdge) -> Option<WingSide> {
        let (w, b) = (t.wing_width, t.bulk_size);
        let (s, f) = (e.start, e.end);
        if close(s[0], -w) && close(f[0], -w) {
            Some(WingSide::Left)
        } else if close(s[0], b + w) && close(f[0], b + w) {
            Some(WingSide::Right)
        } else if close(s[1], -w) && close(f[1], -w) {
            Some(WingSide::Bottom)
        } else if close(s[1], b + w) && close(f[1], b + w) {
            Some(WingSide::Top)
        } else {
            None
        }
    }

    fn thermal(config: BenchmarkConfig, scale: Scale) -> Result<Self> {
        let t = config.thermal.clone().unwrap();
        let mu_axes = config.mu_axes(scale)?;
        let lambda = config.lambda_axis(scale)?;
        let br = Self::thermal_breaks(&t);
        let n = br.len() - 1;
        let mut active = vec![false; n * n];
        for j in 0..n {
            for i in 0..n {
                let c = [0.5 * (br[i] + br[i + 1]), 0.5 * (br[j] + br[j + 1])];
                active[j * n + i] = Self::plus_region(&t, c).is_some();
            }
        }
        let mesh = StructuredMesh::with_mask(br.clone(), br, 1, active)?;
        let bulk: Vec<f64> = mesh
            .elements()
            .iter()
            .map(|el| if Self::plus_region(&t, [el.centroid().0, el.centroid().1]) == Some(true) { 1.0 } else { 0.0 })
            .collect();
        let wing: Vec<f64> = bulk.iter().map(|b| (1.0 - b) * t.wing_conductivity).collect();
        let kb = Arc::new(assemble_stiffness(&mesh, &SpaceFunction::PerElement(bulk), None)?);
        let kw = Arc::new(assemble_stiffness(&mesh, &SpaceFunction::PerElement(wing), None)?);
        let mut references = Vec::new();
        for r in &t.references {
            let names: Vec<String> = r.interfaces.iter().map(|s| format!("{s:?}").to_lowercase()).collect();
            let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let partition = DofPartition::classify(&mesh, &name_refs, |e| match Self::wing_side(&t, e) {
                Some(s) => match r.interfaces.iter().position(|x| *x == s) {
                    Some(k) => EdgeTag::Interface(k),
                    None => EdgeTag::Neumann,
                },
                None => EdgeTag::Neumann,
            })?;
            let mut loads = Vec::new();
            for f in &r.flux {
                let edges: Vec<BoundaryEdge> = mesh
                    .boundary_edges()
                    .into_iter()
                    .filter(|e| Self::wing_side(&t, e).as_ref() == Some(&f.side))
                    .collect();
                loads.push(AffineVector {
                    vector: assemble_neumann(&mesh, &edges, &SpaceFunction::Constant(f.value))?,
                    coeff: ones(1),
                });
            }
            references.push(Arc::new(SubdomainProblem {
                id: r.name.clone(),
                mesh: mesh.clone(),
                partition,
                mu_axes: mu_axes.clone(),
                operator: vec![
                    AffineMatrix {
                        matrix: kb.clone(),
                        coeff: Separable::new(vec![param_fn(|m| m)]),
                    },
                    AffineMatrix {
                        matrix: kw.clone(),
                        coeff: ones(1),
                    },
                ],
                loads,
                dirichlet: Vec::new(),
                lambda_axis: lambda.clone(),
            }));
        }
        let axis = mu_axes[0].name().to_string();
        let placements = t
            .placements
            .iter()
            .enumerate()
            .map(|(i, p)| {
                Ok(Placement {
                    name: p.name.clone(),
                    reference: t.references.iter().position(|r| r.name == p.reference).unwrap(),
                    map: GeometricMap::rigid(p.translation, p.rotation_pi * std::f64::consts::PI)?,
                    local_mu: vec![(axis.clone(), i)],
                    fixed: p.fixed.iter().map(|f| (f.interface, f.value)).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            scale,
            references,
            placements,
        })
    }

    fn thermal_global(&self, mu: &[f64]) -> Result<GlobalProblem> {
        let t = self.config.thermal.as_ref().unwrap();
        let np = self.placements.len();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..np {
            for p in self.physical_nodes(i, mu) {
                xs.push(p[0]);
                ys.push(p[1]);
            }
        }
        let (xb, yb) = (unique_sorted(xs), unique_sorted(ys));
        let (nx, ny) = (xb.len() - 1, yb.len() - 1);
        let locate = |c: [f64; 2]| -> Option<(usize, bool)> {
            self.placements.iter().enumerate().find_map(|(i, pl)| {
                Self::plus_region(t, pl.map.to_reference(c, 0.0)).map(|bulk| (i, bulk))
            })
        };
        let mut active = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let c = [0.5 * (xb[i] + xb[i + 1]), 0.5 * (yb[j] + yb[j + 1])];
                active[j * nx + i] = locate(c).is_some();
            }
        }
        let mesh = StructuredMesh::with_mask(xb, yb, 1, active)?;
        let mut bulk = vec![vec![0.0; mesh.n_elements()]; np];
        let mut wing = vec![0.0; mesh.n_elements()];
        for (e, el) in mesh.elements().iter().enumerate() {
            let (cx, cy) = el.centroid();
            match locate([cx, cy]) {
                Some((i, true)) => bulk[i][e] = 1.0,
                _ => wing[e] = t.wing_conductivity,
            }
        }
        let axes: Vec<ParamAxis> = (0..np).map(|i| self.references[0].mu_axes[0].renamed(format!("mu{}", i + 1))).collect();
        let factor = |i: usize| {
            Separable::new(
                (0..np)
                    .map(|k| if k == i { param_fn(|m| m) } else { param_fn(|_| 1.0) })
                    .collect(),
            )
        };
        let mut operator = Vec::new();
        for (i, b) in bulk.into_iter().enumerate() {
            operator.push(AffineMatrix {
                matrix: Arc::new(assemble_stiffness(&mesh, &SpaceFunction::PerElement(b), None)?),
                coeff: factor(i),
            });
        }
        operator.push(AffineMatrix {
            matrix: Arc::new(assemble_stiffness(&mesh, &SpaceFunction::PerElement(wing), None)?),
            coeff: ones(np),
        });

        let refs = &t.references;
        let classify_edge = |e: &BoundaryEdge| -> (EdgeTag, f64, f64) {
            for (i, pl) in self.placements.iter().enumerate() {
                let a = pl.map.to_reference(e.start, 0.0);
                let b = pl.map.to_reference(e.end, 0.0);
                let r = BoundaryEdge {
                    element: e.element,
                    side: e.side,
                    nodes: Vec::new(),
                    start: a,
                    end: b,
                };
                let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                if Self::plus_region(t, mid).is_none() {
                    continue;
                }
                if let Some(side) = Self::wing_side(t, &r) {
                    let spec = &refs[self.placements[i].reference];
                    if let Some(k) = spec.interfaces.iter().position(|s| *s == side) {
                        if let Some(&(_, v)) = pl.fixed.iter().find(|(f, _)| *f == k) {
                            return (EdgeTag::Dirichlet, v, 0.0);
                        }
                    }
                    if let Some(f) = spec.flux.iter().find(|f| f.side == side) {
                        return (EdgeTag::Neumann, 0.0, f.value);
                    }
                    return (EdgeTag::Neumann, 0.0, 0.0);
                }
            }
            (EdgeTag::Neumann, 0.0, 0.0)
        };
        let partition = DofPartition::classify(&mesh, &[], |e| classify_edge(e).0)?;
        let mut g = vec![0.0; mesh.n_nodes()];
        let mut flux_edges: Vec<(BoundaryEdge, f64)> = Vec::new();
        for e in mesh.boundary_edges() {
            let (tag, v, q) = classify_edge(&e);
            if tag == EdgeTag::Dirichlet {
                e.nodes.iter().for_each(|&n| g[n] = v);
            } else if q != 0.0 {
                flux_edges.push((e, q));
            }
        }
        let mut load = vec![0.0; mesh.n_nodes()];
        for (e, q) in flux_edges {
            let v = assemble_neumann(&mesh, std::slice::from_ref(&e), &SpaceFunction::Constant(q))?;
            crate::sparse::axpy(1.0, &v, &mut load);
        }
        let mut point = ParamPoint::new();
        for (a, &v) in axes.iter().zip(mu) {
            point.set(a.name(), v);
        }
        let problem = SubdomainProblem {
            id: "global".into(),
            mesh,
            partition,
            mu_axes: axes,
            operator,
            loads: vec![AffineVector {
                vector: load,
                coeff: ones(np),
            }],
            dirichlet: vec![AffineVector {
                vector: g,
                coeff: ones(np),
            }],
            lambda_axis: self.references[0].lambda_axis.clone(),
        };
        Ok(GlobalProblem { problem, point })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_breaks() {
        let b = breaks(&vec![(0.0, 1.0, 4), (1.0, 1.5, 2)]);
        assert_eq!(b, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5]);
        let c = clustered_breaks(4, 1.5);
        assert_eq!(c[0], 0.0);
        assert!((c[4] - 1.0).abs() < 1e-15);
        assert!((c[2] - 0.5).abs() < 1e-15);
        assert!(c[1] < 0.25);
    }
}
