//! Greedy rank-one enrichment with an alternating-directions fixed point for
//! parametric linear systems `K(p) u(p) = F(p)` given in separated form.

use std::cell::RefCell;
use std::io::Write;

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schwarz::{gmres, GmresSettings};
use crate::separated::{rank_one_relative_change, SeparatedOperator, SeparatedVector, Term};
use crate::sparse::{dot, norm2, reverse_cuthill_mckee, BandedLu, CombinationPattern};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgdSettings {
    /// Stop once a new mode's amplitude relative to the first falls below this.
    pub eps_enrich: f64,
    /// Compression tolerance; `None` disables compression.
    pub eps_compress: Option<f64>,
    pub max_modes: usize,
    pub als_tol: f64,
    pub als_max_iters: usize,
    /// Base seed of the random ALS initializations.
    pub seed: u64,
}

impl Default for PgdSettings {
    fn default() -> Self {
        Self {
            eps_enrich: 1e-4,
            eps_compress: Some(1e-3),
            max_modes: 300,
            als_tol: 1e-4,
            als_max_iters: 25,
            seed: 20240,
        }
    }
}

impl PgdSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |f: &str| Err(Error::Config(format!("pgd.{f} must be positive")));
        if !(self.eps_enrich > 0.0) {
            return bad("eps_enrich");
        }
        if self.eps_compress.is_some_and(|e| !(e > 0.0)) {
            return bad("eps_compress");
        }
        if self.max_modes == 0 {
            return bad("max_modes");
        }
        if !(self.als_tol > 0.0) {
            return bad("als_tol");
        }
        if self.als_max_iters == 0 {
            return bad("als_max_iters");
        }
        Ok(())
    }
}

/// Result of one greedy enrichment step.
#[derive(Debug, Clone)]
pub struct Enrichment {
    pub term: Term,
    pub converged: bool,
    pub iterations: usize,
}

/// Result of a full PGD solve.
#[derive(Debug, Clone)]
pub struct PgdOutcome {
    pub solution: SeparatedVector,
    /// Mode count before compression.
    pub raw_modes: usize,
    /// `amplitude(m) / amplitude(1)` for every computed mode.
    pub relative_amplitudes: Vec<f64>,
    /// False when `max_modes` was hit before the amplitude criterion.
    pub tolerance_met: bool,
    /// Enrichment steps whose ALS loop hit `als_max_iters`.
    pub als_not_converged: usize,
}

/// Residual `F − K u`.
pub fn residual(k: &SeparatedOperator, f: &SeparatedVector, u: &SeparatedVector) -> Result<SeparatedVector> {
    crate::separated::residual(k, f, u)
}

/// Cached data shared by all enrichment steps of one problem.
struct Enricher<'a> {
    k: &'a SeparatedOperator,
    f: &'a SeparatedVector,
    n_param: usize,
    pattern: CombinationPattern,
    perm: Vec<usize>,
    pivoting: bool,
    prev: Vec<Term>,
    /// Factorization reused as a preconditioner while the combined operator drifts little.
    cached: RefCell<Option<BandedLu>>,
    reuse: bool,
    /// `kv[k][l] = K_l V_k` for the previous modes.
    kv: Vec<Vec<Vec<f64>>>,
}

/// Contractions of the operator, right-hand side and previous modes against the trial modes.
struct Contractions {
    op: Vec<Vec<f64>>,
    rhs: Vec<Vec<f64>>,
    prev: Vec<Vec<Vec<f64>>>,
}

impl<'a> Enricher<'a> {
    fn new(k: &'a SeparatedOperator, f: &'a SeparatedVector) -> Result<Self> {
        if k.nrows() != k.ncols() || k.ncols() != f.space_len() || k.axes() != f.axes() {
            return Err(Error::DimensionMismatch("operator and right-hand side dimensions differ".into()));
        }
        if k.terms().is_empty() {
            return Err(Error::Config("empty operator".into()));
        }
        let mats: Vec<_> = k.terms().iter().map(|t| t.matrix.as_ref()).collect();
        let pattern = CombinationPattern::new(&mats);
        let probe = pattern.combine(&vec![1.0; mats.len()]);
        let perm = reverse_cuthill_mckee(&probe);
        let (kl, ku) = probe.permuted(&perm).bandwidths();
        debug!("spatial operator: n = {}, bandwidths ({kl}, {ku})", probe.nrows());
        let pivoting = !mats.iter().all(|m| m.is_symmetric(1e-12));
        Ok(Self {
            k,
            f,
            n_param: f.axes().len(),
            pattern,
            perm,
            pivoting,
            prev: Vec::new(),
            cached: RefCell::new(None),
            reuse: kl.max(ku) >= REUSE_MIN_BANDWIDTH,
            kv: Vec::new(),
        })
    }

    fn push_prev(&mut self, t: Term) {
        self.kv.push(self.k.terms().iter().map(|op| op.matrix.matvec(&t.space)).collect());
        self.prev.push(t);
    }

    fn contract(&self, modes: &[Vec<f64>]) -> Contractions {
        let d = self.n_param;
        let op = self
            .k
            .terms()
            .iter()
            .map(|t| (0..d).map(|j| t.coeffs[j].iter().zip(&modes[j]).map(|(a, p)| a * p * p).sum()).collect())
            .collect();
        let rhs = self
            .f
            .terms()
            .iter()
            .map(|t| (0..d).map(|j| dot(&t.modes[j], &modes[j])).collect())
            .collect();
        let prev = self
            .prev
            .iter()
            .map(|pk| {
                self.k
                    .terms()
                    .iter()
                    .map(|t| {
                        (0..d)
                            .map(|j| {
                                t.coeffs[j]
                                    .iter()
                                    .zip(&pk.modes[j])
                                    .zip(&modes[j])
                                    .map(|((a, q), p)| a * q * p)
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Contractions { op, rhs, prev }
    }

    fn recontract_dim(&self, c: &mut Contractions, modes: &[Vec<f64>], j: usize) {
        for (l, t) in self.k.terms().iter().enumerate() {
            c.op[l][j] = t.coeffs[j].iter().zip(&modes[j]).map(|(a, p)| a * p * p).sum();
        }
        for (r, t) in self.f.terms().iter().enumerate() {
            c.rhs[r][j] = dot(&t.modes[j], &modes[j]);
        }
        for (k, pk) in self.prev.iter().enumerate() {
            for (l, t) in self.k.terms().iter().enumerate() {
                c.prev[k][l][j] = t.coeffs[j]
                    .iter()
                    .zip(&pk.modes[j])
                    .zip(&modes[j])
                    .map(|((a, q), p)| a * q * p)
                    .sum();
            }
        }
    }

    fn spatial_update(&self, c: &Contractions) -> Result<Vec<f64>> {
        let n = self.f.space_len();
        let weights: Vec<f64> = c.op.iter().map(|v| v.iter().product()).collect();
        let mut b = vec![0.0; n];
        for (r, t) in self.f.terms().iter().enumerate() {
            let w: f64 = c.rhs[r].iter().product();
            if w != 0.0 {
                crate::sparse::axpy(w, &t.space, &mut b);
            }
        }
        for (k, kvk) in self.kv.iter().enumerate() {
            for (l, kvl) in kvk.iter().enumerate() {
                let w: f64 = c.prev[k][l].iter().product();
                if w != 0.0 {
                    crate::sparse::axpy(-w, kvl, &mut b);
                }
            }
        }
        if b.iter().all(|&v| v == 0.0) {
            return Ok(b);
        }
        let a = self.pattern.combine(&weights);
        if let Some(lu) = self.cached.borrow().as_ref() {
            let settings = GmresSettings {
                tol: 1e-12,
                restart: REUSE_MAX_ITERS,
                max_iters: REUSE_MAX_ITERS,
            };
            let out = gmres(|y| Ok(a.matvec(&lu.solve(y))), &b, None, &settings)?;
            if out.converged() {
                return Ok(lu.solve(&out.x));
            }
        }
        let lu = BandedLu::factor_with(&a, self.perm.clone(), self.pivoting)?;
        let x = lu.solve(&b);
        if self.reuse {
            *self.cached.borrow_mut() = Some(lu);
        }
        Ok(x)
    }

    fn parametric_update(&self, c: &Contractions, space: &[f64], j: usize) -> Result<Vec<f64>> {
        let others = |v: &[f64]| -> f64 { v.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, x)| x).product() };
        let ops = self.k.terms();
        let vkv: Vec<f64> = ops.iter().map(|t| t.matrix.bilinear(space, space)).collect();
        let vf: Vec<f64> = self.f.terms().iter().map(|t| dot(space, &t.space)).collect();
        let w_op: Vec<f64> = (0..ops.len()).map(|l| vkv[l] * others(&c.op[l])).collect();
        let w_rhs: Vec<f64> = (0..self.f.len()).map(|r| vf[r] * others(&c.rhs[r])).collect();
        let w_prev: Vec<Vec<f64>> = self
            .kv
            .iter()
            .enumerate()
            .map(|(k, kvk)| kvk.iter().enumerate().map(|(l, kvl)| dot(space, kvl) * others(&c.prev[k][l])).collect())
            .collect();
        let nn = self.f.axes()[j].len();
        let mut out = vec![0.0; nn];
        for (i, o) in out.iter_mut().enumerate() {
            let mut den = 0.0;
            for (l, t) in ops.iter().enumerate() {
                den += w_op[l] * t.coeffs[j][i];
            }
            let mut num = 0.0;
            for (r, t) in self.f.terms().iter().enumerate() {
                num += w_rhs[r] * t.modes[j][i];
            }
            for (k, pk) in self.prev.iter().enumerate() {
                let q = pk.modes[j][i];
                if q == 0.0 {
                    continue;
                }
                for (l, t) in ops.iter().enumerate() {
                    num -= w_prev[k][l] * t.coeffs[j][i] * q;
                }
            }
            if den == 0.0 || !den.is_finite() {
                return Err(Error::SingularCollocation { axis: j, node: i });
            }
            *o = num / den;
        }
        Ok(out)
    }

    fn enrich(&self, settings: &PgdSettings, seed: u64) -> Result<Enrichment> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.f.space_len();
        let mut term = Term::new(
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            self.f
                .axes()
                .iter()
                .map(|a| (0..a.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
        );
        term.normalize();
        let mut c = self.contract(&term.modes);
        for it in 1..=settings.als_max_iters {
            let old = term.clone();
            term.space = self.spatial_update(&c)?;
            if norm2(&term.space) == 0.0 {
                term.space.iter_mut().for_each(|v| *v = 0.0);
                return Ok(Enrichment {
                    term,
                    converged: true,
                    iterations: it,
                });
            }
            for j in 0..self.n_param {
                let mut m = self.parametric_update(&c, &term.space, j)?;
                let s = norm2(&m);
                if s == 0.0 {
                    term.space.iter_mut().for_each(|v| *v = 0.0);
                    return Ok(Enrichment {
                        term,
                        converged: true,
                        iterations: it,
                    });
                }
                m.iter_mut().for_each(|v| *v /= s);
                term.space.iter_mut().for_each(|v| *v *= s);
                term.modes[j] = m;
                self.recontract_dim(&mut c, &term.modes, j);
            }
            if rank_one_relative_change(&old, &term) < settings.als_tol {
                term.normalize();
                return Ok(Enrichment {
                    term,
                    converged: true,
                    iterations: it,
                });
            }
        }
        term.normalize();
        Ok(Enrichment {
            term,
            converged: false,
            iterations: settings.als_max_iters,
        })
    }
}

const REUSE_MAX_ITERS: usize = 12;
const REUSE_MIN_BANDWIDTH: usize = 64;

fn mode_seed(base: u64, mode: usize) -> u64 {
    base ^ (mode as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One greedy step against the residual of `u_prev`.
pub fn enrich_once(
    k: &SeparatedOperator,
    f: &SeparatedVector,
    u_prev: &SeparatedVector,
    settings: &PgdSettings,
) -> Result<Enrichment> {
    let mut e = Enricher::new(k, f)?;
    for t in u_prev.terms() {
        e.push_prev(t.clone());
    }
    e.enrich(settings, mode_seed(settings.seed, u_prev.len()))
}

/// Greedy enrichment until the relative amplitude criterion or `max_modes`, then optional compression.
pub fn solve(k: &SeparatedOperator, f: &SeparatedVector, settings: &PgdSettings) -> Result<PgdOutcome> {
    settings.validate()?;
    let mut e = Enricher::new(k, f)?;
    let mut amplitudes = Vec::new();
    let mut first = 0.0;
    let mut tolerance_met = false;
    let mut als_not_converged = 0;
    while e.prev.len() < settings.max_modes {
        let step = e.enrich(settings, mode_seed(settings.seed, e.prev.len()))?;
        if !step.converged {
            als_not_converged += 1;
        }
        let amp = step.term.amplitude();
        if e.prev.is_empty() {
            first = amp;
            if amp == 0.0 {
                tolerance_met = true;
                break;
            }
        }
        let rel = amp / first;
        amplitudes.push(rel);
        debug!("mode {} relative amplitude {rel:.3e} after {} ALS sweeps", e.prev.len() + 1, step.iterations);
        e.push_prev(step.term);
        if rel < settings.eps_enrich {
            tolerance_met = true;
            break;
        }
    }
    if !tolerance_met {
        warn!("PGD stopped at max_modes = {} before reaching eps = {}", settings.max_modes, settings.eps_enrich);
    }
    let raw = SeparatedVector::from_terms(f.space_len(), f.axes().to_vec(), e.prev)?;
    let raw_modes = raw.len();
    let solution = match settings.eps_compress {
        Some(eps) => raw.compress(eps),
        None => raw,
    };
    Ok(PgdOutcome {
        solution,
        raw_modes,
        relative_amplitudes: amplitudes,
        tolerance_met,
        als_not_converged,
    })
}

/// Append `subproblem,mode,relative_amplitude` rows.
pub fn write_amplitude_csv<W: Write>(out: &mut W, subproblem: &str, amplitudes: &[f64]) -> std::io::Result<()> {
    for (m, a) in amplitudes.iter().enumerate() {
        writeln!(out, "{subproblem},{},{a:.6e}", m + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_grid::make_uniform_axis;
    use crate::sparse::CsrMatrix;
    use std::sync::Arc;

    #[test]
    fn identity_operator_recovers_rank_one_rhs() {
        let mu = make_uniform_axis("mu", 1.0, 2.0, 0.1).unwrap();
        let mut k = SeparatedOperator::new(3, 3, vec![mu.clone()]);
        k.push_term(Arc::new(CsrMatrix::identity(3)), vec![vec![1.0; mu.len()]]).unwrap();
        let mut t = Term::new(vec![1.0, -2.0, 0.5], vec![mu.collocate(|x| x * x)]);
        t.normalize();
        let f = SeparatedVector::from_terms(3, vec![mu.clone()], vec![t.clone()]).unwrap();
        let e = enrich_once(&k, &f, &SeparatedVector::zeros(3, vec![mu]), &PgdSettings::default()).unwrap();
        assert!(e.converged);
        assert!(e.iterations <= 2);
        assert!(rank_one_relative_change(&e.term, &t) < 1e-12);
    }

    #[test]
    fn zero_rhs_stops_with_zero_term() {
        let mu = make_uniform_axis("mu", 0.0, 1.0, 0.5).unwrap();
        let k = SeparatedOperator::identity(2, vec![mu.clone()]);
        let f = SeparatedVector::from_terms(2, vec![mu.clone()], vec![Term::new(vec![0.0; 2], vec![vec![1.0; 3]])]).unwrap();
        let e = enrich_once(&k, &f, &SeparatedVector::zeros(2, vec![mu]), &PgdSettings::default()).unwrap();
        assert!(e.converged && e.term.amplitude() == 0.0);
        let out = solve(&k, &f, &PgdSettings::default()).unwrap();
        assert!(out.solution.is_empty() && out.tolerance_met);
    }

    #[test]
    fn settings_validation() {
        assert!(PgdSettings::default().validate().is_ok());
        let s = PgdSettings { als_max_iters: 0, ..Default::default() };
        assert!(s.validate().is_err());
        let s = PgdSettings { eps_compress: Some(-1.0), ..Default::default() };
        assert!(s.validate().is_err());
    }
}
