use super::function::{Anisotropy, SpaceFunction, VectorField};
use super::mesh::{BoundaryEdge, StructuredMesh};
use super::quadrature::{gauss_legendre, lagrange, ReferenceTable};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Physical data of one quadrature point of one element.
struct Qp<'a> {
    x: f64,
    y: f64,
    w: f64,
    phi: &'a [f64],
    gx: &'a [f64],
    gy: &'a [f64],
}

fn default_rule(mesh: &StructuredMesh, piecewise_constant: bool) -> usize {
    if mesh.degree() == 2 || !piecewise_constant {
        3
    } else {
        2
    }
}

fn for_each_qp(
    mesh: &StructuredMesh,
    n_gauss: usize,
    mut f: impl FnMut(usize, &Qp<'_>) ,
) -> Result<()> {
    let table = ReferenceTable::new(mesh.degree(), n_gauss);
    let nl = table.n_local;
    let mut gx = vec![0.0; nl];
    let mut gy = vec![0.0; nl];
    for (e, el) in mesh.elements().iter().enumerate() {
        let (hx, hy) = (el.hx(), el.hy());
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::SingularJacobian { element: e });
        }
        let det = 0.25 * hx * hy;
        let (sx, sy) = (2.0 / hx, 2.0 / hy);
        for (q, &(tx, ty, w)) in table.points.iter().enumerate() {
            for k in 0..nl {
                gx[k] = table.dphi_dtx[q][k] * sx;
                gy[k] = table.dphi_dty[q][k] * sy;
            }
            let qp = Qp {
                x: el.x0 + 0.5 * (tx + 1.0) * hx,
                y: el.y0 + 0.5 * (ty + 1.0) * hy,
                w: w * det,
                phi: &table.phi[q],
                gx: &gx,
                gy: &gy,
            };
            f(e, &qp);
        }
    }
    Ok(())
}

fn assemble_matrix(
    mesh: &StructuredMesh,
    n_gauss: usize,
    mut kernel: impl FnMut(usize, &Qp<'_>, &mut [f64]),
) -> Result<CsrMatrix> {
    let nl = (mesh.degree() + 1).pow(2);
    let n = mesh.n_nodes();
    let mut local = vec![0.0; nl * nl];
    let mut triplets = Vec::with_capacity(mesh.n_elements() * nl * nl);
    let mut current = usize::MAX;
    let flush = |e: usize, local: &mut [f64], t: &mut Vec<(usize, usize, f64)>| {
        let nodes = &mesh.element(e).nodes;
        for a in 0..nl {
            for b in 0..nl {
                t.push((nodes[a], nodes[b], local[a * nl + b]));
            }
        }
        local.iter_mut().for_each(|v| *v = 0.0);
    };
    for_each_qp(mesh, n_gauss, |e, qp| {
        if e != current {
            if current != usize::MAX {
                flush(current, &mut local, &mut triplets);
            }
            current = e;
        }
        kernel(e, qp, &mut local);
    })?;
    if current != usize::MAX {
        flush(current, &mut local, &mut triplets);
    }
    Ok(CsrMatrix::from_triplets(n, n, &triplets))
}

/// `∫ c (A ∇u) · ∇v` with `A` the identity when no anisotropy is given.
pub fn assemble_stiffness(
    mesh: &StructuredMesh,
    coeff: &SpaceFunction,
    anisotropy: Option<&Anisotropy>,
) -> Result<CsrMatrix> {
    let pc = coeff.is_piecewise_constant() && anisotropy.is_none_or(|a| a.is_piecewise_constant());
    assemble_stiffness_rule(mesh, coeff, anisotropy, default_rule(mesh, pc))
}

pub fn assemble_stiffness_rule(
    mesh: &StructuredMesh,
    coeff: &SpaceFunction,
    anisotropy: Option<&Anisotropy>,
    n_gauss: usize,
) -> Result<CsrMatrix> {
    let nl = (mesh.degree() + 1).pow(2);
    assemble_matrix(mesh, n_gauss, |e, qp, local| {
        let c = coeff.eval(e, qp.x, qp.y) * qp.w;
        if c == 0.0 {
            return;
        }
        let a = anisotropy.map_or([[1.0, 0.0], [0.0, 1.0]], |a| a.eval(e, qp.x, qp.y));
        for j in 0..nl {
            let tx = a[0][0] * qp.gx[j] + a[0][1] * qp.gy[j];
            let ty = a[1][0] * qp.gx[j] + a[1][1] * qp.gy[j];
            for i in 0..nl {
                local[i * nl + j] += c * (qp.gx[i] * tx + qp.gy[i] * ty);
            }
        }
    })
}

/// `∫ (α · ∇u) v`.
pub fn assemble_convection(mesh: &StructuredMesh, velocity: &VectorField) -> Result<CsrMatrix> {
    assemble_convection_rule(mesh, velocity, default_rule(mesh, velocity.is_piecewise_constant()))
}

pub fn assemble_convection_rule(
    mesh: &StructuredMesh,
    velocity: &VectorField,
    n_gauss: usize,
) -> Result<CsrMatrix> {
    let nl = (mesh.degree() + 1).pow(2);
    assemble_matrix(mesh, n_gauss, |e, qp, local| {
        let [ax, ay] = velocity.eval(e, qp.x, qp.y);
        if ax == 0.0 && ay == 0.0 {
            return;
        }
        for j in 0..nl {
            let s = qp.w * (ax * qp.gx[j] + ay * qp.gy[j]);
            for i in 0..nl {
                local[i * nl + j] += s * qp.phi[i];
            }
        }
    })
}

/// `∫ c u v`.
pub fn assemble_mass(mesh: &StructuredMesh, coeff: &SpaceFunction) -> Result<CsrMatrix> {
    assemble_mass_rule(mesh, coeff, default_rule(mesh, coeff.is_piecewise_constant()))
}

pub fn assemble_mass_rule(mesh: &StructuredMesh, coeff: &SpaceFunction, n_gauss: usize) -> Result<CsrMatrix> {
    let nl = (mesh.degree() + 1).pow(2);
    assemble_matrix(mesh, n_gauss, |e, qp, local| {
        let c = coeff.eval(e, qp.x, qp.y) * qp.w;
        if c == 0.0 {
            return;
        }
        for j in 0..nl {
            for i in 0..nl {
                local[i * nl + j] += c * qp.phi[i] * qp.phi[j];
            }
        }
    })
}

/// Element-interior streamline stabilization `Σ_T ∫_T τ (l α·∇v)(r α·∇u)`,
/// with `l` scaling the test and `r` the trial streamline derivative.
pub fn assemble_supg(
    mesh: &StructuredMesh,
    velocity: &VectorField,
    tau: &SpaceFunction,
    left_scale: &SpaceFunction,
    right_scale: &SpaceFunction,
) -> Result<CsrMatrix> {
    let pc = velocity.is_piecewise_constant()
        && tau.is_piecewise_constant()
        && left_scale.is_piecewise_constant()
        && right_scale.is_piecewise_constant();
    let nl = (mesh.degree() + 1).pow(2);
    let mut stream = vec![0.0; nl];
    assemble_matrix(mesh, default_rule(mesh, pc), |e, qp, local| {
        let t = tau.eval(e, qp.x, qp.y);
        if t == 0.0 {
            return;
        }
        let [ax, ay] = velocity.eval(e, qp.x, qp.y);
        let c = qp.w * t * left_scale.eval(e, qp.x, qp.y) * right_scale.eval(e, qp.x, qp.y);
        for k in 0..nl {
            stream[k] = ax * qp.gx[k] + ay * qp.gy[k];
        }
        for i in 0..nl {
            for j in 0..nl {
                local[i * nl + j] += c * stream[i] * stream[j];
            }
        }
    })
}

/// `h (1 + 9/Pe²)^(-1/(4|α₁|))` with `Pe = |α₁| h μ₁ / 2`; zero when `α₁ = 0`.
pub fn supg_tau_value(alpha1: f64, h: f64, mu1: f64) -> f64 {
    let a = alpha1.abs();
    if a == 0.0 {
        return 0.0;
    }
    let pe = a * h * mu1 / 2.0;
    h * (1.0 + 9.0 / (pe * pe)).powf(-1.0 / (4.0 * a))
}

/// Element-wise stabilization parameter with `α₁` taken at element centroids.
///
/// `widths` overrides the horizontal element sizes, e.g. to use the widths of a
/// reference configuration on a mapped mesh.
pub fn supg_tau(mesh: &StructuredMesh, velocity: &VectorField, mu1: f64, widths: Option<&[f64]>) -> SpaceFunction {
    let vals = mesh
        .elements()
        .iter()
        .enumerate()
        .map(|(e, el)| {
            let (cx, cy) = el.centroid();
            let h = widths.map_or(el.hx(), |w| w[e]);
            supg_tau_value(velocity.x.eval(e, cx, cy), h, mu1)
        })
        .collect();
    SpaceFunction::PerElement(vals)
}

/// `∫ s v`.
pub fn assemble_load(mesh: &StructuredMesh, source: &SpaceFunction) -> Result<Vec<f64>> {
    assemble_load_rule(mesh, source, default_rule(mesh, source.is_piecewise_constant()))
}

pub fn assemble_load_rule(mesh: &StructuredMesh, source: &SpaceFunction, n_gauss: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mesh.n_nodes()];
    for_each_qp(mesh, n_gauss, |e, qp| {
        let s = source.eval(e, qp.x, qp.y) * qp.w;
        if s == 0.0 {
            return;
        }
        for (k, &n) in mesh.element(e).nodes.iter().enumerate() {
            out[n] += s * qp.phi[k];
        }
    })?;
    Ok(out)
}

/// `∫_{edges} g v` over the given boundary edges.
pub fn assemble_neumann(mesh: &StructuredMesh, edges: &[BoundaryEdge], flux: &SpaceFunction) -> Result<Vec<f64>> {
    let p = mesh.degree();
    let (pts, wts) = gauss_legendre(3);
    let mut out = vec![0.0; mesh.n_nodes()];
    for edge in edges {
        let len = edge.length();
        if !(len > 0.0) {
            return Err(Error::SingularJacobian { element: edge.element });
        }
        for (&t, &w) in pts.iter().zip(&wts) {
            let s = 0.5 * (t + 1.0);
            let x = edge.start[0] + s * (edge.end[0] - edge.start[0]);
            let y = edge.start[1] + s * (edge.end[1] - edge.start[1]);
            let g = flux.eval(edge.element, x, y) * w * 0.5 * len;
            for (k, l) in lagrange(p, t).into_iter().enumerate() {
                out[edge.nodes[k]] += g * l;
            }
        }
    }
    Ok(out)
}

/// Nodal interpolant of `f`.
pub fn interpolate(mesh: &StructuredMesh, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    mesh.nodes().iter().map(|p| f(p[0], p[1])).collect()
}

/// `(‖u_h − u‖_{L²}, ‖u‖_{L²})` computed with an `n_gauss × n_gauss` rule.
pub fn l2_error(
    mesh: &StructuredMesh,
    u_h: &[f64],
    exact: impl Fn(f64, f64) -> f64,
    n_gauss: usize,
) -> Result<(f64, f64)> {
    if u_h.len() != mesh.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "field of length {} on a mesh with {} nodes",
            u_h.len(),
            mesh.n_nodes()
        )));
    }
    let (mut err, mut nrm) = (0.0, 0.0);
    for_each_qp(mesh, n_gauss, |e, qp| {
        let uh: f64 = mesh
            .element(e)
            .nodes
            .iter()
            .zip(qp.phi)
            .map(|(&n, &ph)| u_h[n] * ph)
            .sum();
        let u = exact(qp.x, qp.y);
        err += qp.w * (uh - u).powi(2);
        nrm += qp.w * u * u;
    })?;
    Ok((err.sqrt(), nrm.sqrt()))
}
