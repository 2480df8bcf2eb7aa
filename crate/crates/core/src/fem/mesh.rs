use crate::error::{Error, Result};

/// Side of a rectangular cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];
}

/// An axis-aligned quadrilateral element of a structured mesh.
#[derive(Debug, Clone)]
pub struct Element {
    /// Cell index `(i, j)` in the break grid.
    pub cell: (usize, usize),
    /// Global node ids, x-fastest within the element.
    pub nodes: Vec<usize>,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Element {
    pub fn hx(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn hy(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn centroid(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
}

/// An element side on the boundary of the active region.
#[derive(Debug, Clone)]
pub struct BoundaryEdge {
    pub element: usize,
    pub side: Side,
    /// Nodes along the edge in increasing coordinate order.
    pub nodes: Vec<usize>,
    pub start: [f64; 2],
    pub end: [f64; 2],
}

impl BoundaryEdge {
    pub fn midpoint(&self) -> [f64; 2] {
        [
            0.5 * (self.start[0] + self.end[0]),
            0.5 * (self.start[1] + self.end[1]),
        ]
    }

    pub fn length(&self) -> f64 {
        ((self.end[0] - self.start[0]).powi(2) + (self.end[1] - self.start[1]).powi(2)).sqrt()
    }
}

/// Tensor-product grid of rectangles with Q1 or Q2 Lagrange elements.
///
/// An optional cell mask removes cells, which allows plus-shaped and other
/// rectilinear regions while keeping lexicographic (x-fastest) numbering.
#[derive(Debug, Clone)]
pub struct StructuredMesh {
    x_breaks: Vec<f64>,
    y_breaks: Vec<f64>,
    degree: usize,
    active: Vec<bool>,
    lattice_x: Vec<f64>,
    lattice_y: Vec<f64>,
    lattice_node: Vec<usize>,
    nodes: Vec<[f64; 2]>,
    node_lattice: Vec<(usize, usize)>,
    elements: Vec<Element>,
    cell_element: Vec<usize>,
}

const NONE: usize = usize::MAX;

fn check_breaks(name: &str, b: &[f64]) -> Result<()> {
    if b.len() < 2 {
        return Err(Error::InvalidMesh(format!("{name} needs at least two grid lines")));
    }
    if b.iter().any(|v| !v.is_finite()) || b.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidMesh(format!(
            "{name} must be finite and strictly increasing"
        )));
    }
    Ok(())
}

impl StructuredMesh {
    pub fn new(x_breaks: Vec<f64>, y_breaks: Vec<f64>, degree: usize) -> Result<Self> {
        let n = (x_breaks.len().max(1) - 1) * (y_breaks.len().max(1) - 1);
        Self::with_mask(x_breaks, y_breaks, degree, vec![true; n])
    }

    /// Uniform `nx × ny` grid on `[x0, x1] × [y0, y1]`.
    pub fn uniform(x0: f64, x1: f64, nx: usize, y0: f64, y1: f64, ny: usize, degree: usize) -> Result<Self> {
        Self::new(uniform_breaks(x0, x1, nx), uniform_breaks(y0, y1, ny), degree)
    }

    /// Mesh restricted to cells `(i, j)` with `active[j * nx + i]`.
    pub fn with_mask(x_breaks: Vec<f64>, y_breaks: Vec<f64>, degree: usize, active: Vec<bool>) -> Result<Self> {
        check_breaks("x_breaks", &x_breaks)?;
        check_breaks("y_breaks", &y_breaks)?;
        if !(1..=2).contains(&degree) {
            return Err(Error::InvalidMesh(format!("element degree {degree} not in {{1, 2}}")));
        }
        let (nx, ny) = (x_breaks.len() - 1, y_breaks.len() - 1);
        if active.len() != nx * ny {
            return Err(Error::InvalidMesh(format!(
                "cell mask has {} entries for {} cells",
                active.len(),
                nx * ny
            )));
        }
        if !active.iter().any(|&a| a) {
            return Err(Error::InvalidMesh("no active cells".into()));
        }
        let p = degree;
        let refine = |b: &[f64]| -> Vec<f64> {
            let mut out = Vec::with_capacity(p * (b.len() - 1) + 1);
            for w in b.windows(2) {
                for k in 0..p {
                    out.push(w[0] + (w[1] - w[0]) * k as f64 / p as f64);
                }
            }
            out.push(*b.last().unwrap());
            out
        };
        let lattice_x = refine(&x_breaks);
        let lattice_y = refine(&y_breaks);
        let (lnx, lny) = (lattice_x.len(), lattice_y.len());

        let mut used = vec![false; lnx * lny];
        for j in 0..ny {
            for i in 0..nx {
                if !active[j * nx + i] {
                    continue;
                }
                for b in 0..=p {
                    for a in 0..=p {
                        used[(p * j + b) * lnx + p * i + a] = true;
                    }
                }
            }
        }
        let mut lattice_node = vec![NONE; lnx * lny];
        let mut nodes = Vec::new();
        let mut node_lattice = Vec::new();
        for b in 0..lny {
            for a in 0..lnx {
                if used[b * lnx + a] {
                    lattice_node[b * lnx + a] = nodes.len();
                    nodes.push([lattice_x[a], lattice_y[b]]);
                    node_lattice.push((a, b));
                }
            }
        }
        let mut elements = Vec::new();
        let mut cell_element = vec![NONE; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if !active[j * nx + i] {
                    continue;
                }
                let mut en = Vec::with_capacity((p + 1) * (p + 1));
                for b in 0..=p {
                    for a in 0..=p {
                        en.push(lattice_node[(p * j + b) * lnx + p * i + a]);
                    }
                }
                cell_element[j * nx + i] = elements.len();
                elements.push(Element {
                    cell: (i, j),
                    nodes: en,
                    x0: x_breaks[i],
                    x1: x_breaks[i + 1],
                    y0: y_breaks[j],
                    y1: y_breaks[j + 1],
                });
            }
        }
        Ok(Self {
            x_breaks,
            y_breaks,
            degree,
            active,
            lattice_x,
            lattice_y,
            lattice_node,
            nodes,
            node_lattice,
            elements,
            cell_element,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn x_breaks(&self) -> &[f64] {
        &self.x_breaks
    }

    pub fn y_breaks(&self) -> &[f64] {
        &self.y_breaks
    }

    pub fn n_cells_x(&self) -> usize {
        self.x_breaks.len() - 1
    }

    pub fn n_cells_y(&self) -> usize {
        self.y_breaks.len() - 1
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        i < self.n_cells_x() && j < self.n_cells_y() && self.active[j * self.n_cells_x() + i]
    }

    pub fn element_of_cell(&self, i: usize, j: usize) -> Option<usize> {
        if i < self.n_cells_x() && j < self.n_cells_y() {
            let e = self.cell_element[j * self.n_cells_x() + i];
            (e != NONE).then_some(e)
        } else {
            None
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> [f64; 2] {
        self.nodes[i]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, e: usize) -> &Element {
        &self.elements[e]
    }

    /// Lattice position `(a, b)` of a node.
    pub fn node_lattice(&self, i: usize) -> (usize, usize) {
        self.node_lattice[i]
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        (
            [self.x_breaks[0], self.y_breaks[0]],
            [*self.x_breaks.last().unwrap(), *self.y_breaks.last().unwrap()],
        )
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    /// Node located within `tol` of `p`, if any.
    pub fn find_node(&self, p: [f64; 2], tol: f64) -> Option<usize> {
        let a = nearest(&self.lattice_x, p[0], tol)?;
        let b = nearest(&self.lattice_y, p[1], tol)?;
        let n = self.lattice_node[b * self.lattice_x.len() + a];
        (n != NONE).then_some(n)
    }

    /// Element sides not shared with another active cell, ordered by element then side.
    pub fn boundary_edges(&self) -> Vec<BoundaryEdge> {
        let p = self.degree;
        let mut out = Vec::new();
        for (e, el) in self.elements.iter().enumerate() {
            let (i, j) = el.cell;
            for side in Side::ALL {
                let neighbor = match side {
                    Side::Bottom => j.checked_sub(1).map(|jj| (i, jj)),
                    Side::Top => Some((i, j + 1)),
                    Side::Left => i.checked_sub(1).map(|ii| (ii, j)),
                    Side::Right => Some((i + 1, j)),
                };
                if neighbor.is_some_and(|(a, b)| self.is_active(a, b)) {
                    continue;
                }
                let local: Vec<usize> = match side {
                    Side::Bottom => (0..=p).collect(),
                    Side::Top => (0..=p).map(|a| p * (p + 1) + a).collect(),
                    Side::Left => (0..=p).map(|b| b * (p + 1)).collect(),
                    Side::Right => (0..=p).map(|b| b * (p + 1) + p).collect(),
                };
                let (start, end) = match side {
                    Side::Bottom => ([el.x0, el.y0], [el.x1, el.y0]),
                    Side::Top => ([el.x0, el.y1], [el.x1, el.y1]),
                    Side::Left => ([el.x0, el.y0], [el.x0, el.y1]),
                    Side::Right => ([el.x1, el.y0], [el.x1, el.y1]),
                };
                out.push(BoundaryEdge {
                    element: e,
                    side,
                    nodes: local.iter().map(|&l| el.nodes[l]).collect(),
                    start,
                    end,
                });
            }
        }
        out
    }
}

fn nearest(sorted: &[f64], x: f64, tol: f64) -> Option<usize> {
    let k = sorted.partition_point(|&v| v < x);
    let mut best: Option<usize> = None;
    for c in [k.wrapping_sub(1), k] {
        if c < sorted.len() && (sorted[c] - x).abs() <= tol {
            if best.is_none_or(|b| (sorted[c] - x).abs() < (sorted[b] - x).abs()) {
                best = Some(c);
            }
        }
    }
    best
}

/// `n + 1` equally spaced grid lines on `[a, b]`.
pub fn uniform_breaks(a: f64, b: f64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    v[n] = b;
    v
}
