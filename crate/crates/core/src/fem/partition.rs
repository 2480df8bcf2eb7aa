use super::mesh::{BoundaryEdge, StructuredMesh};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Boundary condition type attached to a boundary edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeTag {
    Dirichlet,
    Neumann,
    /// Index into the partition's interface list.
    Interface(usize),
}

/// Role of one DOF with its position inside the corresponding set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofRole {
    Interior(usize),
    Interface { interface: usize, index: usize },
    Dirichlet(usize),
}

#[derive(Debug, Clone)]
pub struct Interface {
    pub name: String,
    /// DOFs ordered along the interface.
    pub dofs: Vec<usize>,
}

/// Disjoint split of mesh DOFs into interior, interface and external Dirichlet sets.
///
/// Nodes shared by a Dirichlet edge and an interface edge are Dirichlet.
/// Nodes on Neumann edges are interior unknowns.
#[derive(Debug, Clone)]
pub struct DofPartition {
    n_dofs: usize,
    interior: Vec<usize>,
    interfaces: Vec<Interface>,
    dirichlet: Vec<usize>,
    roles: Vec<DofRole>,
    edges: Vec<(BoundaryEdge, EdgeTag)>,
}

impl DofPartition {
    pub fn classify(
        mesh: &StructuredMesh,
        interface_names: &[&str],
        tag: impl Fn(&BoundaryEdge) -> EdgeTag,
    ) -> Result<Self> {
        let n = mesh.n_nodes();
        let edges: Vec<(BoundaryEdge, EdgeTag)> = mesh
            .boundary_edges()
            .into_iter()
            .map(|e| {
                let t = tag(&e);
                (e, t)
            })
            .collect();
        let mut is_dirichlet = vec![false; n];
        let mut iface: Vec<Option<usize>> = vec![None; n];
        for (e, t) in &edges {
            match *t {
                EdgeTag::Dirichlet => e.nodes.iter().for_each(|&k| is_dirichlet[k] = true),
                EdgeTag::Interface(k) => {
                    if k >= interface_names.len() {
                        return Err(Error::Config(format!("interface index {k} has no name")));
                    }
                    for &node in &e.nodes {
                        match iface[node] {
                            Some(other) if other != k => {
                                return Err(Error::Config(format!(
                                    "node {node} lies on interfaces `{}` and `{}` (cross points are unsupported)",
                                    interface_names[other], interface_names[k]
                                )))
                            }
                            _ => iface[node] = Some(k),
                        }
                    }
                }
                EdgeTag::Neumann => {}
            }
        }
        let mut interior = Vec::new();
        let mut dirichlet = Vec::new();
        let mut iface_dofs: Vec<Vec<usize>> = vec![Vec::new(); interface_names.len()];
        for k in 0..n {
            if is_dirichlet[k] {
                dirichlet.push(k);
            } else if let Some(i) = iface[k] {
                iface_dofs[i].push(k);
            } else {
                interior.push(k);
            }
        }
        let mut interfaces = Vec::new();
        for (name, mut dofs) in interface_names.iter().zip(iface_dofs) {
            let xs: Vec<f64> = dofs.iter().map(|&d| mesh.node(d)[0]).collect();
            let vertical = xs.iter().all(|&x| (x - xs[0]).abs() <= 1e-12 * mesh.diameter());
            if vertical {
                dofs.sort_by(|&a, &b| mesh.node(a)[1].total_cmp(&mesh.node(b)[1]));
            } else {
                dofs.sort_by(|&a, &b| {
                    let (pa, pb) = (mesh.node(a), mesh.node(b));
                    pa[0].total_cmp(&pb[0]).then(pa[1].total_cmp(&pb[1]))
                });
            }
            interfaces.push(Interface {
                name: name.to_string(),
                dofs,
            });
        }
        let mut roles = vec![DofRole::Interior(0); n];
        for (i, &d) in interior.iter().enumerate() {
            roles[d] = DofRole::Interior(i);
        }
        for (i, &d) in dirichlet.iter().enumerate() {
            roles[d] = DofRole::Dirichlet(i);
        }
        for (k, f) in interfaces.iter().enumerate() {
            for (i, &d) in f.dofs.iter().enumerate() {
                roles[d] = DofRole::Interface { interface: k, index: i };
            }
        }
        Ok(Self {
            n_dofs: n,
            interior,
            interfaces,
            dirichlet,
            roles,
            edges,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn interfaces(&self) -> &[Interface] {
        &self.interfaces
    }

    pub fn interface(&self, k: usize) -> &Interface {
        &self.interfaces[k]
    }

    pub fn dirichlet(&self) -> &[usize] {
        &self.dirichlet
    }

    pub fn role(&self, dof: usize) -> DofRole {
        self.roles[dof]
    }

    /// All interface DOFs, interface by interface.
    pub fn interface_dofs(&self) -> Vec<usize> {
        self.interfaces.iter().flat_map(|f| f.dofs.iter().copied()).collect()
    }

    pub fn n_interface_dofs(&self) -> usize {
        self.interfaces.iter().map(|f| f.dofs.len()).sum()
    }

    /// Boundary edges carrying `tag`.
    pub fn edges_with(&self, tag: EdgeTag) -> Vec<BoundaryEdge> {
        self.edges
            .iter()
            .filter(|(_, t)| *t == tag)
            .map(|(e, _)| e.clone())
            .collect()
    }

    pub fn tagged_edges(&self) -> &[(BoundaryEdge, EdgeTag)] {
        &self.edges
    }

    /// Scatter interior values into a full nodal vector (zero elsewhere).
    pub fn prolong_interior(&self, values: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_dofs];
        for (&d, &v) in self.interior.iter().zip(values) {
            out[d] = v;
        }
        out
    }

    pub fn restrict_interior(&self, full: &[f64]) -> Vec<f64> {
        self.interior.iter().map(|&d| full[d]).collect()
    }
}

/// For each boundary DOF `q`, the lifting vector `−A[interior, q]`.
pub fn dirichlet_columns(full: &CsrMatrix, partition: &DofPartition, dofs: &[usize]) -> Result<Vec<Vec<f64>>> {
    if full.nrows() != partition.n_dofs() || full.ncols() != partition.n_dofs() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} matrix for {} DOFs",
            full.nrows(),
            full.ncols(),
            partition.n_dofs()
        )));
    }
    let cols = full.submatrix(partition.interior(), dofs).transpose();
    let mut out = Vec::with_capacity(dofs.len());
    for (k, &q) in dofs.iter().enumerate() {
        if matches!(partition.role(q), DofRole::Interior(_)) {
            return Err(Error::Config(format!("DOF {q} is not a boundary DOF")));
        }
        let mut v = vec![0.0; partition.interior().len()];
        for (i, a) in cols.row(k) {
            v[i] = -a;
        }
        out.push(v);
    }
    Ok(out)
}

/// Ids of the source-mesh nodes coinciding with `targets` (given in source coordinates).
///
/// Matching tolerance is `1e-10` times the source mesh diameter. Every match
/// must be an unknown of the source problem (not a Dirichlet or interface DOF).
pub fn restriction(mesh: &StructuredMesh, partition: &DofPartition, targets: &[[f64; 2]]) -> Result<Vec<usize>> {
    let tol = 1e-10 * mesh.diameter();
    targets
        .iter()
        .map(|&p| {
            let n = mesh.find_node(p, tol).ok_or_else(|| {
                Error::Config(format!(
                    "no node at ({}, {}) in the donor mesh: meshes do not conform in the overlap",
                    p[0], p[1]
                ))
            })?;
            match partition.role(n) {
                DofRole::Interior(_) => Ok(n),
                other => Err(Error::Config(format!(
                    "node at ({}, {}) is {:?} in the donor, not an interior unknown",
                    p[0], p[1], other
                ))),
            }
        })
        .collect()
}
