//! Separated (canonical rank-R) representations over one spatial dimension and
//! any number of collocated parametric dimensions.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::param_grid::{AxisStencil, ParamAxis, ParamPoint};
use crate::sparse::{axpy, dense_solve, dot, norm2, CsrMatrix};

/// One rank-one term: a spatial vector and one pointwise mode per parametric axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub space: Vec<f64>,
    pub modes: Vec<Vec<f64>>,
}

impl Term {
    pub fn new(space: Vec<f64>, modes: Vec<Vec<f64>>) -> Self {
        Self { space, modes }
    }

    /// Product of the Euclidean norms of all sections.
    pub fn amplitude(&self) -> f64 {
        norm2(&self.space) * self.modes.iter().map(|m| norm2(m)).product::<f64>()
    }

    /// Scale every parametric mode to unit norm and fold the magnitudes into the spatial vector.
    pub fn normalize(&mut self) {
        let mut s = 1.0;
        for m in &mut self.modes {
            let n = norm2(m);
            if n > 0.0 {
                m.iter_mut().for_each(|v| *v /= n);
            }
            s *= n;
        }
        self.space.iter_mut().for_each(|v| *v *= s);
    }

    fn section(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.space
        } else {
            &self.modes[k - 1]
        }
    }

    fn section_mut(&mut self, k: usize) -> &mut Vec<f64> {
        if k == 0 {
            &mut self.space
        } else {
            &mut self.modes[k - 1]
        }
    }
}

/// `Σ_m V^m ⊗ φ_1^m ⊗ … ⊗ φ_D^m` with pointwise parametric modes.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedVector {
    space_len: usize,
    axes: Vec<ParamAxis>,
    terms: Vec<Term>,
}

impl SeparatedVector {
    pub fn zeros(space_len: usize, axes: Vec<ParamAxis>) -> Self {
        Self {
            space_len,
            axes,
            terms: Vec::new(),
        }
    }

    pub fn from_terms(space_len: usize, axes: Vec<ParamAxis>, terms: Vec<Term>) -> Result<Self> {
        let mut v = Self::zeros(space_len, axes);
        for t in terms {
            v.push_term(t)?;
        }
        Ok(v)
    }

    pub fn space_len(&self) -> usize {
        self.space_len
    }

    pub fn axes(&self) -> &[ParamAxis] {
        &self.axes
    }

    pub fn n_dims(&self) -> usize {
        self.axes.len() + 1
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Length of dimension `k` (0 is space).
    pub fn dim_len(&self, k: usize) -> usize {
        if k == 0 {
            self.space_len
        } else {
            self.axes[k - 1].len()
        }
    }

    fn check_term(&self, t: &Term) -> Result<()> {
        if t.space.len() != self.space_len || t.modes.len() != self.axes.len() {
            return Err(Error::DimensionMismatch(format!(
                "term with {} spatial values and {} modes for a tensor with {} and {}",
                t.space.len(),
                t.modes.len(),
                self.space_len,
                self.axes.len()
            )));
        }
        for (m, a) in t.modes.iter().zip(&self.axes) {
            if m.len() != a.len() {
                return Err(Error::DimensionMismatch(format!(
                    "mode of length {} on axis `{}` with {} nodes",
                    m.len(),
                    a.name(),
                    a.len()
                )));
            }
        }
        Ok(())
    }

    pub fn push_term(&mut self, t: Term) -> Result<()> {
        self.check_term(&t)?;
        self.terms.push(t);
        Ok(())
    }

    pub fn append_term(&self, t: Term) -> Result<Self> {
        let mut out = self.clone();
        out.push_term(t)?;
        Ok(out)
    }

    fn same_structure(&self, other: &Self) -> Result<()> {
        if self.space_len != other.space_len || self.axes != other.axes {
            return Err(Error::DimensionMismatch(
                "separated tensors live on different dimensions".into(),
            ));
        }
        Ok(())
    }

    /// Term-list concatenation.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_structure(other)?;
        let mut out = self.clone();
        out.terms.extend(other.terms.iter().cloned());
        Ok(out)
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.space.iter_mut().for_each(|v| *v *= c);
        }
        out
    }

    /// Stencils for the parametric values of `p`, validating bounds.
    pub fn stencils(&self, p: &ParamPoint) -> Result<Vec<AxisStencil>> {
        self.axes
            .iter()
            .map(|a| Ok(AxisStencil::new(a, p.value_on(a)?)))
            .collect()
    }

    /// Per-term products of interpolated parametric modes.
    pub fn term_weights(&self, stencils: &[AxisStencil]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| t.modes.iter().zip(stencils).map(|(m, s)| s.apply(m)).product())
            .collect()
    }

    /// `Σ_m V^m Π_k φ_k^m(p_k)` with piecewise-linear interpolation of the modes.
    pub fn evaluate(&self, p: &ParamPoint) -> Result<Vec<f64>> {
        let st = self.stencils(p)?;
        Ok(self.combine_space(&self.term_weights(&st)))
    }

    /// Evaluation at grid node indices (one per axis).
    pub fn evaluate_at_nodes(&self, idx: &[usize]) -> Vec<f64> {
        assert_eq!(idx.len(), self.axes.len());
        let w: Vec<f64> = self
            .terms
            .iter()
            .map(|t| t.modes.iter().zip(idx).map(|(m, &i)| m[i]).product())
            .collect();
        self.combine_space(&w)
    }

    /// `Σ_m w_m V^m`.
    pub fn combine_space(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space_len];
        for (t, &w) in self.terms.iter().zip(weights) {
            if w != 0.0 {
                axpy(w, &t.space, &mut out);
            }
        }
        out
    }

    /// Re-express over `target` axes, which must contain every current axis (by name).
    /// Axes not present so far receive constant-one modes.
    pub fn extend_dims(&self, target: &[ParamAxis]) -> Result<Self> {
        let mut source_of = Vec::with_capacity(target.len());
        for a in target {
            match self.axes.iter().position(|b| b.name() == a.name()) {
                Some(k) => {
                    if self.axes[k] != *a {
                        return Err(Error::DimensionMismatch(format!(
                            "axis `{}` differs from the existing one",
                            a.name()
                        )));
                    }
                    source_of.push(Some(k));
                }
                None => source_of.push(None),
            }
        }
        for b in &self.axes {
            if !target.iter().any(|a| a.name() == b.name()) {
                return Err(Error::MissingAxis(b.name().to_string()));
            }
        }
        let terms = self
            .terms
            .iter()
            .map(|t| Term {
                space: t.space.clone(),
                modes: source_of
                    .iter()
                    .zip(target)
                    .map(|(s, a)| match s {
                        Some(k) => t.modes[*k].clone(),
                        None => vec![1.0; a.len()],
                    })
                    .collect(),
            })
            .collect();
        Ok(Self {
            space_len: self.space_len,
            axes: target.to_vec(),
            terms,
        })
    }

    pub fn normalized(&self) -> Self {
        let mut out = self.clone();
        out.terms.iter_mut().for_each(Term::normalize);
        out
    }

    /// Per-dimension Gram matrices `G_k[m][n] = ⟨a_m^k, b_n^k⟩`.
    fn section_grams(a: &[Term], b: &[Term], n_dims: usize) -> Vec<Vec<Vec<f64>>> {
        (0..n_dims)
            .map(|k| {
                a.iter()
                    .map(|ta| b.iter().map(|tb| dot(ta.section(k), tb.section(k))).collect())
                    .collect()
            })
            .collect()
    }

    /// Canonical inner product `Σ_{m,n} Π_k ⟨a_m^k, b_n^k⟩`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.same_structure(other)?;
        let g = Self::section_grams(&self.terms, &other.terms, self.n_dims());
        let mut s = 0.0;
        for m in 0..self.len() {
            for n in 0..other.len() {
                s += g.iter().map(|gk| gk[m][n]).product::<f64>();
            }
        }
        Ok(s)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Re-approximation with fewer terms by greedy rank-one least-squares fits.
    ///
    /// Each greedy step runs alternating least squares on the identity operator
    /// against the current residual, then refits all spatial vectors by a small
    /// Galerkin projection. Stops once `‖w − v‖ ≤ eps_star ‖v‖` in the canonical
    /// norm; returns `self` unchanged if that needs as many terms as `self` has.
    pub fn compress(&self, eps_star: f64) -> Self {
        assert!(eps_star > 0.0);
        let t_len = self.len();
        if t_len <= 1 {
            return self.normalized();
        }
        let d = self.n_dims();
        let v = &self.terms;
        let gvv = Self::section_grams(v, v, d);
        let vnorm2: f64 = (0..t_len)
            .flat_map(|a| (0..t_len).map(move |b| (a, b)))
            .map(|(a, b)| gvv.iter().map(|g| g[a][b]).product::<f64>())
            .sum();
        if !(vnorm2 > 0.0) {
            return Self::zeros(self.space_len, self.axes.clone());
        }
        let mut w: Vec<Term> = Vec::new();
        while w.len() + 1 < t_len {
            let seed = {
                // term of v most aligned with the current residual
                let gvw = Self::section_grams(v, &w, d);
                (0..t_len)
                    .max_by(|&a, &b| {
                        let score = |t: usize| {
                            let pv: f64 = (0..t_len).map(|s| gvv.iter().map(|g| g[s][t]).product::<f64>()).sum();
                            let pw: f64 = (0..w.len()).map(|m| gvw.iter().map(|g| g[t][m]).product::<f64>()).sum();
                            ((pv - pw) / gvv.iter().map(|g| g[t][t]).product::<f64>().sqrt().max(1e-300)).abs()
                        };
                        score(a).total_cmp(&score(b))
                    })
                    .unwrap()
            };
            let mut x = v[seed].clone();
            x.normalize();
            rank_one_fit(v, &w, &mut x, d, 25, 1e-6);
            x.normalize();
            w.push(x);
            project_spatial(v, &mut w, d);
            let gvw = Self::section_grams(v, &w, d);
            let gww = Self::section_grams(&w, &w, d);
            let cross: f64 = (0..t_len)
                .flat_map(|a| (0..w.len()).map(move |b| (a, b)))
                .map(|(a, b)| gvw.iter().map(|g| g[a][b]).product::<f64>())
                .sum();
            let wn: f64 = (0..w.len())
                .flat_map(|a| (0..w.len()).map(move |b| (a, b)))
                .map(|(a, b)| gww.iter().map(|g| g[a][b]).product::<f64>())
                .sum();
            let mismatch = (vnorm2 - 2.0 * cross + wn).max(0.0).sqrt() / vnorm2.sqrt();
            if mismatch <= eps_star {
                let mut out = Self::zeros(self.space_len, self.axes.clone());
                out.terms = w;
                out.terms.iter_mut().for_each(Term::normalize);
                return out;
            }
        }
        self.clone()
    }

    pub fn terms_mut(&mut self) -> &mut Vec<Term> {
        &mut self.terms
    }
}

/// ALS for the best rank-one approximation of `v − w`, updating `x` in place.
fn rank_one_fit(v: &[Term], w: &[Term], x: &mut Term, d: usize, max_iters: usize, tol: f64) {
    // dots of every target section with the trial sections
    let mut dv: Vec<Vec<f64>> = (0..d).map(|k| v.iter().map(|t| dot(t.section(k), x.section(k))).collect()).collect();
    let mut dw: Vec<Vec<f64>> = (0..d).map(|k| w.iter().map(|t| dot(t.section(k), x.section(k))).collect()).collect();
    let mut nx: Vec<f64> = (0..d).map(|k| dot(x.section(k), x.section(k))).collect();
    for _ in 0..max_iters {
        let old = x.clone();
        for k in 0..d {
            let others = |dd: &Vec<Vec<f64>>, t: usize| -> f64 { (0..d).filter(|&j| j != k).map(|j| dd[j][t]).product() };
            let denom: f64 = (0..d).filter(|&j| j != k).map(|j| nx[j]).product();
            if !(denom > 0.0) {
                return;
            }
            let len = x.section(k).len();
            let mut new = vec![0.0; len];
            for (t, term) in v.iter().enumerate() {
                let c = others(&dv, t);
                if c != 0.0 {
                    axpy(c, term.section(k), &mut new);
                }
            }
            for (t, term) in w.iter().enumerate() {
                let c = others(&dw, t);
                if c != 0.0 {
                    axpy(-c, term.section(k), &mut new);
                }
            }
            new.iter_mut().for_each(|z| *z /= denom);
            *x.section_mut(k) = new;
            dv[k] = v.iter().map(|t| dot(t.section(k), x.section(k))).collect();
            dw[k] = w.iter().map(|t| dot(t.section(k), x.section(k))).collect();
            nx[k] = dot(x.section(k), x.section(k));
        }
        if rank_one_relative_change(&old, x) < tol {
            break;
        }
    }
}

/// `‖a − b‖ / ‖b‖` for rank-one terms in the canonical norm.
pub(crate) fn rank_one_relative_change(a: &Term, b: &Term) -> f64 {
    let (mut aa, mut bb, mut ab) = (1.0, 1.0, 1.0);
    for k in 0..=a.modes.len() {
        let (sa, sb) = (a.section(k), b.section(k));
        aa *= dot(sa, sa);
        bb *= dot(sb, sb);
        ab *= dot(sa, sb);
    }
    if bb <= 0.0 {
        return if aa <= 0.0 { 0.0 } else { f64::INFINITY };
    }
    ((aa + bb - 2.0 * ab).max(0.0) / bb).sqrt()
}

/// Least-squares refit of all spatial vectors of `w` against `v` with the parametric modes frozen.
fn project_spatial(v: &[Term], w: &mut [Term], d: usize) {
    let m = w.len();
    if m < 2 {
        return;
    }
    let p: Vec<Vec<f64>> = (0..m)
        .map(|a| (0..m).map(|b| (1..d).map(|k| dot(w[a].section(k), w[b].section(k))).product()).collect())
        .collect();
    let c: Vec<Vec<f64>> = v
        .iter()
        .map(|t| (0..m).map(|b| (1..d).map(|k| dot(t.section(k), w[b].section(k))).product()).collect())
        .collect();
    let n = w[0].space.len();
    // one right-hand side per spatial node
    let rhs: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..m).map(|b| v.iter().zip(&c).map(|(t, cr)| t.space[i] * cr[b]).sum()).collect())
        .collect();
    if let Ok(sol) = dense_solve(p, rhs) {
        if sol.iter().flatten().all(|z| z.is_finite()) {
            for (i, row) in sol.iter().enumerate() {
                for (b, &z) in row.iter().enumerate() {
                    w[b].space[i] = z;
                }
            }
        }
    }
}

/// One operator term: a shared sparse matrix and one collocated coefficient vector per axis.
#[derive(Debug, Clone)]
pub struct OpTerm {
    pub matrix: Arc<CsrMatrix>,
    pub coeffs: Vec<Vec<f64>>,
}

/// `Σ_ℓ K_ℓ ⊗ diag(a_ℓ1) ⊗ … ⊗ diag(a_ℓD)`.
#[derive(Debug, Clone)]
pub struct SeparatedOperator {
    nrows: usize,
    ncols: usize,
    axes: Vec<ParamAxis>,
    terms: Vec<OpTerm>,
}

impl SeparatedOperator {
    pub fn new(nrows: usize, ncols: usize, axes: Vec<ParamAxis>) -> Self {
        Self {
            nrows,
            ncols,
            axes,
            terms: Vec::new(),
        }
    }

    pub fn identity(n: usize, axes: Vec<ParamAxis>) -> Self {
        let coeffs = axes.iter().map(|a| vec![1.0; a.len()]).collect();
        let mut op = Self::new(n, n, axes);
        op.terms.push(OpTerm {
            matrix: Arc::new(CsrMatrix::identity(n)),
            coeffs,
        });
        op
    }

    pub fn push_term(&mut self, matrix: Arc<CsrMatrix>, coeffs: Vec<Vec<f64>>) -> Result<()> {
        if matrix.nrows() != self.nrows || matrix.ncols() != self.ncols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix in a {}x{} operator",
                matrix.nrows(),
                matrix.ncols(),
                self.nrows,
                self.ncols
            )));
        }
        if coeffs.len() != self.axes.len() || coeffs.iter().zip(&self.axes).any(|(c, a)| c.len() != a.len()) {
            return Err(Error::DimensionMismatch("operator coefficients do not match the axes".into()));
        }
        self.terms.push(OpTerm { matrix, coeffs });
        Ok(())
    }

    pub fn axes(&self) -> &[ParamAxis] {
        &self.axes
    }

    pub fn terms(&self) -> &[OpTerm] {
        &self.terms
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Separated product: one output term per (operator term, vector term) pair.
    pub fn apply(&self, v: &SeparatedVector) -> Result<SeparatedVector> {
        if v.space_len != self.ncols || v.axes != self.axes {
            return Err(Error::DimensionMismatch("operator and vector dimensions differ".into()));
        }
        let mut out = SeparatedVector::zeros(self.nrows, self.axes.clone());
        for op in &self.terms {
            for t in &v.terms {
                out.terms.push(Term {
                    space: op.matrix.matvec(&t.space),
                    modes: op
                        .coeffs
                        .iter()
                        .zip(&t.modes)
                        .map(|(a, m)| a.iter().zip(m).map(|(x, y)| x * y).collect())
                        .collect(),
                });
            }
        }
        Ok(out)
    }

    /// `Σ_ℓ ξ_ℓ(p) K_ℓ` with interpolated coefficients.
    pub fn evaluate(&self, p: &ParamPoint) -> Result<CsrMatrix> {
        let st: Vec<AxisStencil> = self
            .axes
            .iter()
            .map(|a| Ok(AxisStencil::new(a, p.value_on(a)?)))
            .collect::<Result<_>>()?;
        let terms: Vec<(f64, &CsrMatrix)> = self
            .terms
            .iter()
            .map(|t| (t.coeffs.iter().zip(&st).map(|(c, s)| s.apply(c)).product(), t.matrix.as_ref()))
            .collect();
        if terms.is_empty() {
            return Ok(CsrMatrix::zeros(self.nrows, self.ncols));
        }
        Ok(CsrMatrix::linear_combination(&terms))
    }
}

/// `F − K u` as a term concatenation.
pub fn residual(k: &SeparatedOperator, f: &SeparatedVector, u: &SeparatedVector) -> Result<SeparatedVector> {
    f.add(&k.apply(u)?.scale(-1.0))
}

const MAGIC: &[u8; 8] = b"DDPGDSV\0";
const VERSION: u32 = 1;

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * v.len());
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    Ok(w.write_all(&buf)?)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; 8 * n];
    r.read_exact(&mut buf)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Upper bound on any length read from a container, to reject corrupt headers early.
const MAX_LEN: u64 = 1 << 32;

fn checked_len(v: u64, what: &str) -> Result<usize> {
    if v > MAX_LEN {
        return Err(Error::Container(format!("{what} = {v} is implausible")));
    }
    Ok(v as usize)
}

impl SeparatedVector {
    /// Versioned little-endian binary encoding.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u32(w, VERSION)?;
        write_u64(w, self.space_len as u64)?;
        write_u32(w, self.axes.len() as u32)?;
        for a in &self.axes {
            let name = a.name().as_bytes();
            write_u32(w, name.len() as u32)?;
            w.write_all(name)?;
            write_u64(w, a.len() as u64)?;
            write_f64s(w, a.nodes())?;
        }
        write_u64(w, self.terms.len() as u64)?;
        for t in &self.terms {
            write_f64s(w, &t.space)?;
            for m in &t.modes {
                write_f64s(w, m)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Container("bad magic number".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Container(format!("unsupported version {version}")));
        }
        let space_len = checked_len(read_u64(r)?, "spatial length")?;
        let n_axes = read_u32(r)? as usize;
        if n_axes > 64 {
            return Err(Error::Container(format!("{n_axes} axes is implausible")));
        }
        let mut axes = Vec::with_capacity(n_axes);
        for _ in 0..n_axes {
            let nl = read_u32(r)? as usize;
            if nl > 4096 {
                return Err(Error::Container("axis name too long".into()));
            }
            let mut name = vec![0u8; nl];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| Error::Container("axis name is not UTF-8".into()))?;
            let n = checked_len(read_u64(r)?, "axis length")?;
            let nodes = read_f64s(r, n)?;
            axes.push(ParamAxis::from_nodes(name, nodes).map_err(|e| Error::Container(e.to_string()))?);
        }
        let n_terms = checked_len(read_u64(r)?, "term count")?;
        let mut terms = Vec::with_capacity(n_terms.min(1 << 16));
        for _ in 0..n_terms {
            let space = read_f64s(r, space_len)?;
            let modes = axes.iter().map(|a| read_f64s(r, a.len())).collect::<Result<_>>()?;
            terms.push(Term { space, modes });
        }
        Ok(Self {
            space_len,
            axes,
            terms,
        })
    }
}
