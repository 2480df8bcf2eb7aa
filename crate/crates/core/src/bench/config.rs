use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::param_grid::ParamAxis;
use crate::pgd::PgdSettings;
use crate::schwarz::GmresSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Test1,
    Graetz,
    Thermal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    Desk,
}

impl Scale {
    pub fn key(self) -> &'static str {
        match self {
            Scale::Paper => "paper",
            Scale::Desk => "desk",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaSpec {
    pub lo: f64,
    pub hi: f64,
    /// Largest number of interface parameters active in one subproblem.
    pub max_active: usize,
    /// Per-subdomain overrides of `max_active`, keyed by subdomain name.
    #[serde(default)]
    pub max_active_by: BTreeMap<String, usize>,
}

impl LambdaSpec {
    pub fn max_active_for(&self, id: &str) -> usize {
        self.max_active_by.get(id).copied().unwrap_or(self.max_active)
    }
}

/// Parametric spacings of one scale, keyed by axis name; `lambda` for interface axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub spacing: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OnlineSpec {
    /// Default parameter points, values in axis order.
    pub mu: Vec<Vec<f64>>,
    /// Random points drawn by `compare` when no list is given.
    pub compare_random: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Test1Spec {
    pub length: f64,
    pub height: f64,
    pub nx: usize,
    pub ny: usize,
    /// Overlap half-width in elements.
    pub overlap: usize,
    /// Abscissa of the cut the overlap is centred on.
    pub cut: f64,
}

/// `[start, end, cells]` runs of uniformly spaced breaks.
pub type Segments = Vec<(f64, f64, usize)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraetzSpec {
    pub h_bar: f64,
    /// Value of the inverse diffusivity used to freeze the stabilization.
    pub tau_mu1: f64,
    pub omega1_x: Segments,
    pub reference_x: Segments,
    pub ny: usize,
    /// Wall clustering strength of the vertical grid (0 = uniform).
    pub y_clustering: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WingSide {
    Left,
    Bottom,
    Right,
    Top,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSpec {
    pub side: WingSide,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub name: String,
    /// Wing ends carrying interface data, in interface order.
    pub interfaces: Vec<WingSide>,
    #[serde(default)]
    pub flux: Vec<FluxSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSpec {
    pub interface: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub name: String,
    pub reference: String,
    pub translation: [f64; 2],
    /// Rotation angle in units of π.
    pub rotation_pi: f64,
    #[serde(default)]
    pub fixed: Vec<FixedSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSpec {
    pub bulk_size: f64,
    pub bulk_cells: usize,
    pub wing_width: f64,
    pub wing_cells: usize,
    /// Conductivity outside the bulk squares.
    pub wing_conductivity: f64,
    pub references: Vec<ReferenceSpec>,
    pub placements: Vec<PlacementSpec>,
    /// Named conductivity vectors, one value per placement.
    pub cases: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub benchmark: BenchmarkKind,
    pub axes: Vec<AxisSpec>,
    pub lambda: LambdaSpec,
    pub scale: BTreeMap<String, ScaleSpec>,
    #[serde(default)]
    pub pgd: PgdSettings,
    pub gmres: GmresSettings,
    #[serde(default)]
    pub online: OnlineSpec,
    pub test1: Option<Test1Spec>,
    pub graetz: Option<GraetzSpec>,
    pub thermal: Option<ThermalSpec>,
}

fn bad(field: &str, why: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {why}"))
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(field, format!("must be positive, got {v}")))
    }
}

fn check_segments(field: &str, s: &Segments) -> Result<()> {
    if s.is_empty() {
        return Err(bad(field, "needs at least one segment"));
    }
    for (k, &(a, b, n)) in s.iter().enumerate() {
        if !(b > a) || n == 0 {
            return Err(bad(field, format!("segment {k} must have end > start and cells > 0")));
        }
        if k > 0 && (s[k - 1].1 - a).abs() > 1e-12 {
            return Err(bad(field, format!("segment {k} does not start where segment {} ends", k - 1)));
        }
    }
    Ok(())
}

impl BenchmarkConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(bad("axes", "at least one parameter axis is required"));
        }
        for (i, a) in self.axes.iter().enumerate() {
            if !(a.hi > a.lo) {
                return Err(bad(&format!("axes[{i}] ({})", a.name), "hi must exceed lo"));
            }
        }
        if !(self.lambda.hi > self.lambda.lo) {
            return Err(bad("lambda", "hi must exceed lo"));
        }
        if self.lambda.max_active == 0 || self.lambda.max_active_by.values().any(|&m| m == 0) {
            return Err(bad("lambda.max_active", "must be at least 1"));
        }
        if self.scale.is_empty() {
            return Err(bad("scale", "no scale presets"));
        }
        for (name, s) in &self.scale {
            for a in self.axes.iter().map(|a| a.name.as_str()).chain(["lambda"]) {
                let v = s
                    .spacing
                    .get(a)
                    .ok_or_else(|| bad(&format!("scale.{name}.spacing"), format!("missing `{a}`")))?;
                positive(&format!("scale.{name}.spacing.{a}"), *v)?;
            }
        }
        self.pgd.validate()?;
        positive("gmres.tol", self.gmres.tol)?;
        if self.gmres.restart == 0 || self.gmres.max_iters == 0 {
            return Err(bad("gmres", "restart and max_iters must be at least 1"));
        }
        for (k, p) in self.online.mu.iter().enumerate() {
            self.check_point(p).map_err(|e| bad(&format!("online.mu[{k}]"), e))?;
        }
        match self.benchmark {
            BenchmarkKind::Test1 => {
                let t = self.test1.as_ref().ok_or_else(|| bad("test1", "section missing"))?;
                positive("test1.length", t.length)?;
                positive("test1.height", t.height)?;
                if t.nx == 0 || t.ny == 0 {
                    return Err(bad("test1.nx/ny", "must be positive"));
                }
                if t.overlap == 0 {
                    return Err(bad("test1.overlap", "must be at least 1"));
                }
                let h = t.length / t.nx as f64;
                let k = t.cut / h;
                if (k - k.round()).abs() > 1e-9 || k.round() as usize <= t.overlap || k.round() as usize + t.overlap >= t.nx {
                    return Err(bad("test1.cut", "must be a grid line with room for the overlap"));
                }
            }
            BenchmarkKind::Graetz => {
                let g = self.graetz.as_ref().ok_or_else(|| bad("graetz", "section missing"))?;
                if !(g.h_bar > 0.0 && g.h_bar < 1.0) {
                    return Err(bad("graetz.h_bar", "must lie in (0, 1)"));
                }
                positive("graetz.tau_mu1", g.tau_mu1)?;
                check_segments("graetz.omega1_x", &g.omega1_x)?;
                check_segments("graetz.reference_x", &g.reference_x)?;
                if g.ny == 0 {
                    return Err(bad("graetz.ny", "must be positive"));
                }
                if g.y_clustering < 0.0 {
                    return Err(bad("graetz.y_clustering", "must be non-negative"));
                }
                if self.axes.len() != 2 {
                    return Err(bad("axes", "graetz needs exactly two axes (mu1, mu2)"));
                }
                if !(self.axes[1].lo > g.h_bar) {
                    return Err(bad("axes[1]", "lower bound must exceed h_bar"));
                }
            }
            BenchmarkKind::Thermal => {
                let t = self.thermal.as_ref().ok_or_else(|| bad("thermal", "section missing"))?;
                positive("thermal.bulk_size", t.bulk_size)?;
                positive("thermal.wing_width", t.wing_width)?;
                positive("thermal.wing_conductivity", t.wing_conductivity)?;
                if t.bulk_cells == 0 || t.wing_cells == 0 {
                    return Err(bad("thermal.bulk_cells/wing_cells", "must be positive"));
                }
                if self.axes.len() != 1 {
                    return Err(bad("axes", "thermal needs exactly one conductivity axis"));
                }
                for (k, r) in t.references.iter().enumerate() {
                    let mut seen = r.interfaces.clone();
                    seen.extend(r.flux.iter().map(|f| f.side.clone()));
                    for (i, s) in seen.iter().enumerate() {
                        if seen[..i].contains(s) {
                            return Err(bad(&format!("thermal.references[{k}]"), format!("side {s:?} used twice")));
                        }
                    }
                }
                for (k, p) in t.placements.iter().enumerate() {
                    let f = format!("thermal.placements[{k}] ({})", p.name);
                    let r = t
                        .references
                        .iter()
                        .find(|r| r.name == p.reference)
                        .ok_or_else(|| bad(&f, format!("unknown reference `{}`", p.reference)))?;
                    let turns = p.rotation_pi * 2.0;
                    if (turns - turns.round()).abs() > 1e-9 {
                        return Err(bad(&format!("{f}.rotation_pi"), "must be a quarter turn"));
                    }
                    for fx in &p.fixed {
                        if fx.interface >= r.interfaces.len() {
                            return Err(bad(&format!("{f}.fixed"), format!("no interface {}", fx.interface)));
                        }
                    }
                }
                let a = &self.axes[0];
                for (name, vals) in &t.cases {
                    if vals.len() != t.placements.len() {
                        return Err(bad(
                            &format!("thermal.cases.{name}"),
                            format!("{} values for {} placements", vals.len(), t.placements.len()),
                        ));
                    }
                    if let Some(v) = vals.iter().find(|&&v| v < a.lo || v > a.hi) {
                        return Err(bad(&format!("thermal.cases.{name}"), format!("{v} outside [{}, {}]", a.lo, a.hi)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of values in a global parameter point.
    pub fn point_len(&self) -> usize {
        match (self.benchmark, &self.thermal) {
            (BenchmarkKind::Thermal, Some(t)) => t.placements.len(),
            _ => self.axes.len(),
        }
    }

    /// Bounds of entry `k` of a global parameter point.
    pub fn point_bounds(&self, k: usize) -> (f64, f64) {
        let a = if self.benchmark == BenchmarkKind::Thermal { &self.axes[0] } else { &self.axes[k] };
        (a.lo, a.hi)
    }

    pub fn check_point(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.point_len() {
            return Err(Error::DimensionMismatch(format!(
                "parameter point has {} values, expected {}",
                p.len(),
                self.point_len()
            )));
        }
        for (k, &v) in p.iter().enumerate() {
            let (lo, hi) = self.point_bounds(k);
            if !(v >= lo && v <= hi) {
                return Err(Error::OutOfRange {
                    axis: format!("mu[{k}]"),
                    value: v,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    fn spacing(&self, scale: Scale, axis: &str) -> Result<f64> {
        self.scale
            .get(scale.key())
            .ok_or_else(|| bad("scale", format!("no `{}` preset", scale.key())))?
            .spacing
            .get(axis)
            .copied()
            .ok_or_else(|| bad(&format!("scale.{}.spacing", scale.key()), format!("missing `{axis}`")))
    }

    /// Parameter axes at the given scale.
    pub fn mu_axes(&self, scale: Scale) -> Result<Vec<ParamAxis>> {
        self.axes
            .iter()
            .map(|a| ParamAxis::uniform(a.name.clone(), a.lo, a.hi, self.spacing(scale, &a.name)?))
            .collect()
    }

    pub fn lambda_axis(&self, scale: Scale) -> Result<ParamAxis> {
        ParamAxis::uniform("lambda", self.lambda.lo, self.lambda.hi, self.spacing(scale, "lambda")?)
    }

    /// Parse `--mu`: comma-separated values or, for the thermal benchmark, a case name.
    pub fn parse_point(&self, s: &str) -> Result<Vec<f64>> {
        if let Some(t) = &self.thermal {
            if let Some(v) = t.cases.get(s.trim()) {
                return Ok(v.clone());
            }
        }
        let p = s
            .split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| bad("--mu", format!("`{x}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.check_point(&p)?;
        Ok(p)
    }
}
