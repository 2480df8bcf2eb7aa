//! One-dimensional parametric domains and piecewise-linear evaluation of
//! collocated parametric modes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack used when deciding whether a query sits on the boundary of an axis.
const BOUND_SLACK: f64 = 1e-12;

/// A compact interval `[lo, hi]` discretized by strictly increasing collocation nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamAxis {
    name: String,
    lo: f64,
    hi: f64,
    nodes: Vec<f64>,
    uniform: bool,
}

impl ParamAxis {
    /// Equally spaced nodes over `[lo, hi]` with spacing no larger than `spacing`.
    ///
    /// When `(hi - lo) / spacing` is an integer `n` the axis has exactly `n + 1`
    /// nodes; otherwise the interval count is rounded up so the actual spacing
    /// stays below the request.
    pub fn uniform(name: impl Into<String>, lo: f64, hi: f64, spacing: f64) -> Result<Self> {
        let name = name.into();
        if !(lo.is_finite() && hi.is_finite() && spacing.is_finite()) {
            return Err(Error::InvalidAxis {
                axis: name,
                reason: "non-finite bounds or spacing".into(),
            });
        }
        if lo >= hi {
            return Err(Error::InvalidAxis {
                axis: name,
                reason: format!("lo = {lo} must be below hi = {hi}"),
            });
        }
        if spacing <= 0.0 || spacing >= hi - lo {
            return Err(Error::InvalidAxis {
                axis: name,
                reason: format!("spacing {spacing} must lie in (0, {})", hi - lo),
            });
        }
        let ratio = (hi - lo) / spacing;
        let nearest = ratio.round();
        let intervals = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            nearest as usize
        } else {
            ratio.ceil() as usize
        };
        Ok(Self::with_intervals(name, lo, hi, intervals))
    }

    /// Equally spaced axis with `intervals` sub-intervals.
    pub fn with_intervals(name: impl Into<String>, lo: f64, hi: f64, intervals: usize) -> Self {
        assert!(intervals >= 1 && lo < hi);
        let h = (hi - lo) / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|k| lo + k as f64 * h).collect();
        nodes[intervals] = hi;
        Self {
            name: name.into(),
            lo,
            hi,
            nodes,
            uniform: true,
        }
    }

    /// Axis over arbitrary strictly increasing nodes.
    pub fn from_nodes(name: impl Into<String>, nodes: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if nodes.len() < 2 {
            return Err(Error::InvalidAxis {
                axis: name,
                reason: "at least two nodes are required".into(),
            });
        }
        if nodes.iter().any(|v| !v.is_finite()) || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidAxis {
                axis: name,
                reason: "nodes must be finite and strictly increasing".into(),
            });
        }
        let lo = nodes[0];
        let hi = *nodes.last().unwrap();
        let h = (hi - lo) / (nodes.len() - 1) as f64;
        let uniform = nodes
            .iter()
            .enumerate()
            .all(|(k, &v)| (v - (lo + k as f64 * h)).abs() <= 1e-12 * (hi - lo));
        Ok(Self {
            name,
            lo,
            hi,
            nodes,
            uniform,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Same nodes under a different name.
    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..self.clone()
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let slack = BOUND_SLACK * (self.hi - self.lo);
        x >= self.lo - slack && x <= self.hi + slack
    }

    /// Map a function over the nodes.
    pub fn collocate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Index `k` and weight `t` such that `x = (1 - t) nodes[k] + t nodes[k + 1]`.
    /// `x` must already be inside the axis.
    fn bracket(&self, x: f64) -> (usize, f64) {
        let n = self.nodes.len();
        let k = if self.uniform {
            let h = (self.hi - self.lo) / (n - 1) as f64;
            (((x - self.lo) / h).floor().max(0.0) as usize).min(n - 2)
        } else {
            match self
                .nodes
                .binary_search_by(|v| v.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less))
            {
                Ok(i) => i.min(n - 2),
                Err(i) => i.saturating_sub(1).min(n - 2),
            }
        };
        let (a, b) = (self.nodes[k], self.nodes[k + 1]);
        let t = ((x - a) / (b - a)).clamp(0.0, 1.0);
        (k, t)
    }

    /// Clamp into `[lo, hi]`, reporting whether clamping happened.
    pub fn clamp(&self, x: f64) -> (f64, bool) {
        if self.contains(x) {
            (x.clamp(self.lo, self.hi), false)
        } else {
            (x.clamp(self.lo, self.hi), true)
        }
    }

    fn out_of_range(&self, x: f64) -> Error {
        Error::OutOfRange {
            axis: self.name.clone(),
            value: x,
            lo: self.lo,
            hi: self.hi,
        }
    }
}

/// `make_uniform_axis` under its operational name.
pub fn make_uniform_axis(name: &str, lo: f64, hi: f64, spacing: f64) -> Result<ParamAxis> {
    ParamAxis::uniform(name, lo, hi, spacing)
}

/// Piecewise-linear interpolant of `values` (aligned with the axis nodes) at `x`.
pub fn interp_mode(axis: &ParamAxis, values: &[f64], x: f64) -> Result<f64> {
    if values.len() != axis.len() {
        return Err(Error::DimensionMismatch(format!(
            "mode of length {} on axis `{}` with {} nodes",
            values.len(),
            axis.name,
            axis.len()
        )));
    }
    if !x.is_finite() || !axis.contains(x) {
        return Err(axis.out_of_range(x));
    }
    Ok(interp_unchecked(axis, values, x))
}

/// Interpolation without bounds checks; `x` is clamped into the axis.
#[inline]
pub fn interp_unchecked(axis: &ParamAxis, values: &[f64], x: f64) -> f64 {
    let x = x.clamp(axis.lo, axis.hi);
    let (k, t) = axis.bracket(x);
    (1.0 - t) * values[k] + t * values[k + 1]
}

/// Precomputed bracket of one query value, reusable across many modes on the same axis.
#[derive(Debug, Clone, Copy)]
pub struct AxisStencil {
    pub index: usize,
    pub weight: f64,
}

impl AxisStencil {
    pub fn new(axis: &ParamAxis, x: f64) -> Self {
        let (index, weight) = axis.bracket(x.clamp(axis.lo, axis.hi));
        Self { index, weight }
    }

    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        (1.0 - self.weight) * values[self.index] + self.weight * values[self.index + 1]
    }
}

/// Values of named parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    pub axis_values: BTreeMap<String, f64>,
}

impl ParamPoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, axis: impl Into<String>, value: f64) -> Self {
        self.axis_values.insert(axis.into(), value);
        self
    }

    pub fn set(&mut self, axis: impl Into<String>, value: f64) {
        self.axis_values.insert(axis.into(), value);
    }

    pub fn get(&self, axis: &str) -> Option<f64> {
        self.axis_values.get(axis).copied()
    }

    /// Value for `axis`, failing when absent or outside the axis bounds.
    pub fn value_on(&self, axis: &ParamAxis) -> Result<f64> {
        let v = self
            .get(axis.name())
            .ok_or_else(|| Error::MissingAxis(axis.name().to_string()))?;
        if !axis.contains(v) {
            return Err(axis.out_of_range(v));
        }
        Ok(v)
    }
}
