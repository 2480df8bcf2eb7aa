//! Gauss–Legendre rules and one-dimensional Lagrange bases on `[-1, 1]`.

/// Points and weights of the `n`-point Gauss–Legendre rule, `1 <= n <= 5`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![0.0], vec![2.0]),
        2 => {
            let a = 1.0 / 3f64.sqrt();
            (vec![-a, a], vec![1.0, 1.0])
        }
        3 => {
            let a = (3.0f64 / 5.0).sqrt();
            (vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])
        }
        4 => {
            let s = (6.0f64 / 5.0).sqrt();
            let a = ((3.0 - 2.0 * s) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * s) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            (vec![-b, -a, a, b], vec![wb, wa, wa, wb])
        }
        5 => {
            let s = 2.0 * (10.0f64 / 7.0).sqrt();
            let a = (5.0 - s).sqrt() / 3.0;
            let b = (5.0 + s).sqrt() / 3.0;
            let w0 = 128.0 / 225.0;
            let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
            (vec![-b, -a, 0.0, a, b], vec![wb, wa, w0, wa, wb])
        }
        _ => panic!("Gauss-Legendre rule with {n} points is not tabulated"),
    }
}

/// Values of the 1D Lagrange basis of degree `p` (equispaced nodes) at `t`.
pub fn lagrange(p: usize, t: f64) -> Vec<f64> {
    match p {
        1 => vec![0.5 * (1.0 - t), 0.5 * (1.0 + t)],
        2 => vec![0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)],
        _ => panic!("unsupported element degree {p}"),
    }
}

/// Derivatives of [`lagrange`] with respect to `t`.
pub fn lagrange_deriv(p: usize, t: f64) -> Vec<f64> {
    match p {
        1 => vec![-0.5, 0.5],
        2 => vec![t - 0.5, -2.0 * t, t + 0.5],
        _ => panic!("unsupported element degree {p}"),
    }
}

/// Tensor-product shape data of a degree-`p` element at the points of an `n × n` rule.
///
/// Local nodes are numbered x-fastest. Derivatives are with respect to the
/// reference coordinates.
#[derive(Debug, Clone)]
pub struct ReferenceTable {
    pub n_local: usize,
    /// (t_x, t_y, weight) per quadrature point.
    pub points: Vec<(f64, f64, f64)>,
    pub phi: Vec<Vec<f64>>,
    pub dphi_dtx: Vec<Vec<f64>>,
    pub dphi_dty: Vec<Vec<f64>>,
}

impl ReferenceTable {
    pub fn new(p: usize, n: usize) -> Self {
        let (pts, wts) = gauss_legendre(n);
        let n_local = (p + 1) * (p + 1);
        let mut points = Vec::new();
        let mut phi = Vec::new();
        let mut dx = Vec::new();
        let mut dy = Vec::new();
        for (qy, &ty) in pts.iter().enumerate() {
            for (qx, &tx) in pts.iter().enumerate() {
                points.push((tx, ty, wts[qx] * wts[qy]));
                let (lx, ly) = (lagrange(p, tx), lagrange(p, ty));
                let (dlx, dly) = (lagrange_deriv(p, tx), lagrange_deriv(p, ty));
                let mut v = Vec::with_capacity(n_local);
                let mut gx = Vec::with_capacity(n_local);
                let mut gy = Vec::with_capacity(n_local);
                for b in 0..=p {
                    for a in 0..=p {
                        v.push(lx[a] * ly[b]);
                        gx.push(dlx[a] * ly[b]);
                        gy.push(lx[a] * dly[b]);
                    }
                }
                phi.push(v);
                dx.push(gx);
                dy.push(gy);
            }
        }
        Self {
            n_local,
            points,
            phi,
            dphi_dtx: dx,
            dphi_dty: dy,
        }
    }
}
