//! Tensor-product cubic B-spline interpolation.
//!
//! Periodic axes use the periodic interpolating spline; reflecting axes use
//! not-a-knot end conditions, which makes the interpolant exact on cubic
//! polynomials. The interpolant is C² everywhere, which keeps RK4 at full
//! order when it integrates interpolated velocity fields.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::lines;

#[derive(Debug, Clone)]
struct SplineAxis {
    points: usize,
    lower: f64,
    inv_spacing: f64,
    periodic: bool,
}

impl SplineAxis {
    fn coefficients(&self) -> usize {
        if self.periodic {
            self.points
        } else {
            self.points + 2
        }
    }
}

/// Per-axis coefficient indices and weights for one evaluation point. A
/// stencil can be shared by all splines built on the same grid.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    dims: usize,
    index: [[usize; 4]; 3],
    weight: [[f64; 4]; 3],
}

#[derive(Debug, Clone)]
pub struct Spline {
    axes: Vec<SplineAxis>,
    strides: Vec<usize>,
    coef: Vec<f64>,
}

impl Spline {
    pub fn new(grid: &GridSpec, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.len());
        let axes: Vec<SplineAxis> = grid
            .axes()
            .iter()
            .map(|a| SplineAxis {
                points: a.points,
                lower: a.lower,
                inv_spacing: 1.0 / a.spacing(),
                periodic: a.is_periodic(),
            })
            .collect();
        let mut shape = grid.shape();
        let mut coef = values.to_vec();
        for (d, ax) in axes.iter().enumerate() {
            let m = ax.coefficients();
            coef = if ax.periodic {
                lines::map_lines(&coef, &shape, d, m, |f, c| periodic_coefficients(f, c))
            } else {
                lines::map_lines(&coef, &shape, d, m, |f, c| not_a_knot_coefficients(f, c))
            };
            shape[d] = m;
        }
        let strides = (0..shape.len()).map(|d| lines::stride(&shape, d)).collect();
        Spline { axes, strides, coef }
    }

    pub fn stencil(&self, q: &[f64]) -> Result<Stencil> {
        stencil_for(&self.axes, q)
    }

    pub fn apply(&self, s: &Stencil) -> f64 {
        let mut acc = 0.0;
        match s.dims {
            1 => {
                for a in 0..4 {
                    acc += s.weight[0][a] * self.coef[s.index[0][a]];
                }
            }
            2 => {
                for a in 0..4 {
                    let base = s.index[0][a] * self.strides[0];
                    let mut row = 0.0;
                    for b in 0..4 {
                        row += s.weight[1][b] * self.coef[base + s.index[1][b]];
                    }
                    acc += s.weight[0][a] * row;
                }
            }
            _ => {
                for a in 0..4 {
                    let base_a = s.index[0][a] * self.strides[0];
                    let mut plane = 0.0;
                    for b in 0..4 {
                        let base_b = base_a + s.index[1][b] * self.strides[1];
                        let mut row = 0.0;
                        for c in 0..4 {
                            row += s.weight[2][c] * self.coef[base_b + s.index[2][c]];
                        }
                        plane += s.weight[1][b] * row;
                    }
                    acc += s.weight[0][a] * plane;
                }
            }
        }
        acc
    }

    pub fn eval(&self, q: &[f64]) -> Result<f64> {
        Ok(self.apply(&self.stencil(q)?))
    }
}

fn stencil_for(axes: &[SplineAxis], q: &[f64]) -> Result<Stencil> {
    if q.len() != axes.len() {
        return Err(Error::InvalidArgument(format!("point has {} coordinates, grid has {}", q.len(), axes.len())));
    }
    let mut s = Stencil { dims: axes.len(), index: [[0; 4]; 3], weight: [[0.0; 4]; 3] };
    for (d, ax) in axes.iter().enumerate() {
        let n = ax.points;
        let u = (q[d] - ax.lower) * ax.inv_spacing;
        if !u.is_finite() {
            return Err(Error::OutOfDomain { axis: d, value: q[d] });
        }
        let (j, t) = if ax.periodic {
            let nf = n as f64;
            let w = if (0.0..nf).contains(&u) { u } else { u.rem_euclid(nf) };
            let j = (w as usize).min(n - 1);
            (j, w - j as f64)
        } else {
            let slack = 1e-12 * (n - 1) as f64;
            if u < -slack || u > (n - 1) as f64 + slack {
                return Err(Error::OutOfDomain { axis: d, value: q[d] });
            }
            let u = u.clamp(0.0, (n - 1) as f64);
            let j = (u as usize).min(n - 2);
            (j, u - j as f64)
        };
        let t2 = t * t;
        let t3 = t2 * t;
        let omt = 1.0 - t;
        const SIXTH: f64 = 1.0 / 6.0;
        s.weight[d] = [
            omt * omt * omt * SIXTH,
            (3.0 * t3 - 6.0 * t2 + 4.0) * SIXTH,
            (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) * SIXTH,
            t3 * SIXTH,
        ];
        s.index[d] = if !ax.periodic {
            [j, j + 1, j + 2, j + 3]
        } else if j >= 1 && j + 2 < n {
            [j - 1, j, j + 1, j + 2]
        } else {
            [(j + n - 1) % n, j % n, (j + 1) % n, (j + 2) % n]
        };
    }
    Ok(s)
}

/// Solves the cyclic system `c[i-1] + 4c[i] + c[i+1] = 6f[i]`.
fn periodic_coefficients(f: &[f64], c: &mut [f64]) {
    let n = f.len();
    // Sherman-Morrison on top of a Thomas sweep.
    let gamma = -4.0;
    let mut diag = vec![4.0; n];
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    let rhs: Vec<f64> = f.iter().map(|v| 6.0 * v).collect();
    let x = thomas(&diag, &rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = 1.0;
    let z = thomas(&diag, &u);
    let fact = (x[0] + x[n - 1] / gamma) / (1.0 + z[0] + z[n - 1] / gamma);
    for i in 0..n {
        c[i] = x[i] - fact * z[i];
    }
}

/// Not-a-knot coefficients `c[-1..=n]` stored at offset +1.
fn not_a_knot_coefficients(f: &[f64], c: &mut [f64]) {
    let n = f.len();
    let at = |i: isize| (i + 1) as usize;
    let c1 = (8.0 * f[1] - f[0] - f[2]) / 6.0;
    let cm = (8.0 * f[n - 2] - f[n - 1] - f[n - 3]) / 6.0;
    // Interior rows i = 2..=n-3 for unknowns c[2..=n-3].
    let m = n - 4;
    let mut rhs: Vec<f64> = (2..n - 2).map(|i| 6.0 * f[i]).collect();
    rhs[0] -= c1;
    rhs[m - 1] -= cm;
    let inner = thomas(&vec![4.0; m], &rhs);
    c[at(1)] = c1;
    c[at(n as isize - 2)] = cm;
    for (k, v) in inner.iter().enumerate() {
        c[at(k as isize + 2)] = *v;
    }
    c[at(0)] = 6.0 * f[1] - 4.0 * c1 - c[at(2)];
    c[at(-1)] = 6.0 * f[0] - 4.0 * c[at(0)] - c1;
    let nn = n as isize;
    c[at(nn - 1)] = 6.0 * f[n - 2] - 4.0 * cm - c[at(nn - 3)];
    c[at(nn)] = 6.0 * f[n - 1] - 4.0 * c[at(nn - 1)] - cm;
}

/// Tridiagonal solve with unit off-diagonals.
fn thomas(diag: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = 1.0 / diag[0];
    dp[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - cp[i - 1];
        cp[i] = 1.0 / m;
        dp[i] = (rhs[i] - dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, RealField};
    use proptest::prelude::*;

    #[test]
    fn exact_on_cubics() {
        let g = GridSpec::line(Axis::reflecting(41, -2.0, 2.0)).unwrap();
        let f = RealField::from_fn(g, |q| q[0].powi(3) - 2.0 * q[0] * q[0] + 0.5).unwrap();
        let s = f.interpolator();
        assert!((s.eval(&[0.5]).unwrap() - (0.125 - 0.5 + 0.5)).abs() < 1e-10);
        let g = GridSpec::line(Axis::reflecting(200, -1.0, 1.0)).unwrap();
        let s = RealField::from_fn(g, |q| q[0].powi(3)).unwrap().interpolator();
        for x in [-0.99, -0.3, 0.5, 0.77, 0.999] {
            assert!((s.eval(&[x]).unwrap() - x * x * x).abs() < 1e-10);
        }
    }

    #[test]
    fn exact_on_bicubic_products() {
        let g = GridSpec::new(vec![Axis::reflecting(12, 0.0, 1.0), Axis::reflecting(15, -1.0, 2.0)]).unwrap();
        let f = |x: f64, y: f64| (x * x * x - x) * (y * y + 2.0 * y * y * y);
        let s = RealField::from_fn(g, |q| f(q[0], q[1])).unwrap().interpolator();
        for (x, y) in [(0.13, -0.7), (0.91, 1.95), (0.5, 0.5)] {
            assert!((s.eval(&[x, y]).unwrap() - f(x, y)).abs() < 1e-10);
        }
    }

    #[test]
    fn periodic_sine() {
        let g = GridSpec::line(Axis::periodic(256, 0.0, 2.0 * std::f64::consts::PI)).unwrap();
        let s = RealField::from_fn(g, |q| q[0].sin()).unwrap().interpolator();
        assert!((s.eval(&[1.234]).unwrap() - 1.234f64.sin()).abs() < 1e-6);
        // wraps
        assert!((s.eval(&[1.234 + 4.0 * std::f64::consts::PI]).unwrap() - 1.234f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn out_of_domain_on_reflecting_axis() {
        let g = GridSpec::line(Axis::reflecting(16, 0.0, 1.0)).unwrap();
        let s = RealField::zeros(g).interpolator();
        assert!(matches!(s.eval(&[1.5]), Err(Error::OutOfDomain { axis: 0, .. })));
        assert!(s.eval(&[1.0]).is_ok());
    }

    proptest! {
        #[test]
        fn reproduces_node_values(vals in proptest::collection::vec(-5.0f64..5.0, 8 * 16), periodic in any::<bool>()) {
            let ax0 = if periodic { Axis::periodic(8, 0.0, 1.0) } else { Axis::reflecting(8, 0.0, 1.0) };
            let g = GridSpec::new(vec![ax0, Axis::reflecting(16, -1.0, 1.0)]).unwrap();
            let f = RealField::new(g.clone(), vals.clone()).unwrap();
            let s = f.interpolator();
            for k in 0..g.len() {
                let v = s.eval(&g.point(k)).unwrap();
                prop_assert!((v - vals[k]).abs() < 1e-10);
            }
        }
    }
}
