use std::fmt;
use std::sync::Arc;

/// Scalar coefficient field over the mesh.
#[derive(Clone)]
pub enum SpaceFunction {
    Constant(f64),
    Fn(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// One value per mesh element, in element order.
    PerElement(Vec<f64>),
}

impl SpaceFunction {
    pub fn constant(v: f64) -> Self {
        Self::Constant(v)
    }

    pub fn zero() -> Self {
        Self::Constant(0.0)
    }

    pub fn from_fn(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Fn(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, element: usize, x: f64, y: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Fn(f) => f(x, y),
            Self::PerElement(v) => v[element],
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Constant(c) => *c == 0.0,
            Self::PerElement(v) => v.iter().all(|&x| x == 0.0),
            Self::Fn(_) => false,
        }
    }

    /// True when the value is constant on each element, so low-order rules stay exact.
    pub fn is_piecewise_constant(&self) -> bool {
        !matches!(self, Self::Fn(_))
    }
}

impl fmt::Debug for SpaceFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Fn(_) => write!(f, "Fn(..)"),
            Self::PerElement(v) => write!(f, "PerElement(len={})", v.len()),
        }
    }
}

/// Two-component field, e.g. a convective velocity.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub x: SpaceFunction,
    pub y: SpaceFunction,
}

impl VectorField {
    pub fn new(x: SpaceFunction, y: SpaceFunction) -> Self {
        Self { x, y }
    }

    pub fn constant(a: f64, b: f64) -> Self {
        Self::new(SpaceFunction::Constant(a), SpaceFunction::Constant(b))
    }

    #[inline]
    pub fn eval(&self, element: usize, x: f64, y: f64) -> [f64; 2] {
        [self.x.eval(element, x, y), self.y.eval(element, x, y)]
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero() && self.y.is_zero()
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.x.is_piecewise_constant() && self.y.is_piecewise_constant()
    }
}

/// 2×2 tensor field multiplying the gradient of the trial function.
#[derive(Debug, Clone)]
pub struct Anisotropy {
    pub entries: [[SpaceFunction; 2]; 2],
}

impl Anisotropy {
    pub fn diagonal(a: SpaceFunction, b: SpaceFunction) -> Self {
        Self {
            entries: [[a, SpaceFunction::zero()], [SpaceFunction::zero(), b]],
        }
    }

    pub fn constant(m: [[f64; 2]; 2]) -> Self {
        Self {
            entries: [
                [SpaceFunction::Constant(m[0][0]), SpaceFunction::Constant(m[0][1])],
                [SpaceFunction::Constant(m[1][0]), SpaceFunction::Constant(m[1][1])],
            ],
        }
    }

    #[inline]
    pub fn eval(&self, element: usize, x: f64, y: f64) -> [[f64; 2]; 2] {
        let e = &self.entries;
        [
            [e[0][0].eval(element, x, y), e[0][1].eval(element, x, y)],
            [e[1][0].eval(element, x, y), e[1][1].eval(element, x, y)],
        ]
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.entries.iter().flatten().all(|f| f.is_piecewise_constant())
    }
}
