//! Uniform rectangular grids over configuration space and the fields that
//! live on them.
//!
//! Storage is row-major: the last axis varies fastest. Periodic axes hold
//! `points` nodes spaced `(upper - lower) / points` apart (the node at
//! `upper` is identified with `lower`); reflecting axes include both end
//! points, so their spacing is `(upper - lower) / (points - 1)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lines;
use crate::spline::Spline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Reflecting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub points: usize,
    pub lower: f64,
    pub upper: f64,
    pub boundary: Boundary,
}

impl Axis {
    pub fn periodic(points: usize, lower: f64, upper: f64) -> Self {
        Axis { points, lower, upper, boundary: Boundary::Periodic }
    }

    pub fn reflecting(points: usize, lower: f64, upper: f64) -> Self {
        Axis { points, lower, upper, boundary: Boundary::Reflecting }
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn spacing(&self) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.length() / self.points as f64,
            Boundary::Reflecting => self.length() / (self.points - 1) as f64,
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.spacing()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.coord(i)).collect()
    }

    /// Angular wavenumbers in FFT order; meaningful for periodic axes.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.points as i64;
        let dk = 2.0 * std::f64::consts::PI / self.length();
        (0..n)
            .map(|i| if i < (n + 1) / 2 { i } else { i - n })
            .map(|i| i as f64 * dk)
            .collect()
    }

    /// Maps `q` into the canonical interval of a periodic axis; reflecting
    /// axes are returned unchanged.
    pub fn wrap(&self, q: f64) -> f64 {
        if self.is_periodic() {
            self.lower + (q - self.lower).rem_euclid(self.length())
        } else {
            q
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        if self.is_periodic() {
            q.is_finite()
        } else {
            let slack = 1e-12 * self.length();
            q >= self.lower - slack && q <= self.upper + slack
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if self.points < 8 {
            return Err(Error::InvalidGrid(format!("axis {index} has {} < 8 points", self.points)));
        }
        if !(self.upper > self.lower) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::InvalidGrid(format!("axis {index} needs finite upper > lower")));
        }
        if self.is_periodic() && !self.points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "periodic axis {index} needs a power-of-two point count, got {}",
                self.points
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Axis>", into = "Vec<Axis>")]
pub struct GridSpec {
    axes: Vec<Axis>,
}

impl TryFrom<Vec<Axis>> for GridSpec {
    type Error = Error;
    fn try_from(axes: Vec<Axis>) -> Result<Self> {
        GridSpec::new(axes)
    }
}

impl From<GridSpec> for Vec<Axis> {
    fn from(g: GridSpec) -> Self {
        g.axes
    }
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::InvalidGrid(format!("{} dimensions (1-3 supported)", axes.len())));
        }
        for (i, a) in axes.iter().enumerate() {
            a.validate(i)?;
        }
        Ok(GridSpec { axes })
    }

    pub fn line(axis: Axis) -> Result<Self> {
        GridSpec::new(vec![axis])
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.points).collect()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.points).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).product()
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.axes.iter().all(Axis::is_periodic)
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, a)| acc * a.points + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for d in (0..self.dims()).rev() {
            let n = self.axes[d].points;
            out[d] = flat % n;
            flat /= n;
        }
        out
    }

    /// Coordinates of the node with flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.multi_index(flat);
        self.axes.iter().enumerate().map(|(d, a)| a.coord(idx[d])).collect()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        q.len() == self.dims() && self.axes.iter().zip(q).all(|(a, &x)| a.contains(x))
    }
}

fn check_finite<T>(values: &[T], finite: impl Fn(&T) -> bool) -> Result<()> {
    match values.iter().position(|v| !finite(v)) {
        Some(i) => Err(Error::NonFinite(i)),
        None => Ok(()),
    }
}

/// Complex amplitudes on a grid, labelled with a time (or τ) value.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: GridSpec,
    values: Vec<Complex64>,
    time: f64,
}

impl WaveFunction {
    pub fn new(grid: GridSpec, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} amplitudes for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        check_finite(&values, |v| v.re.is_finite() && v.im.is_finite())?;
        Ok(WaveFunction { grid, values, time })
    }

    pub fn from_fn(grid: GridSpec, time: f64, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        WaveFunction::new(grid, values, time)
    }

    pub fn zeros(grid: GridSpec, time: f64) -> Self {
        let n = grid.len();
        WaveFunction { grid, values: vec![Complex64::new(0.0, 0.0); n], time }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn norm(&self) -> f64 {
        norm(self)
    }

    /// Returns the state rescaled to unit L² norm.
    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::InvalidArgument("cannot normalize a zero wave function".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        WaveFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
            time: self.time,
        }
    }

    /// `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: Complex64, other: &WaveFunction, b: Complex64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(WaveFunction { grid: self.grid.clone(), values, time: self.time })
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument("field length does not match grid".into()));
        }
        check_finite(&values, |v| v.is_finite())?;
        Ok(RealField { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        RealField::new(grid, values)
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let n = grid.len();
        RealField { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn interpolator(&self) -> Spline {
        Spline::new(&self.grid, &self.values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: GridSpec, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.len() != grid.dims() || components.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::InvalidArgument("vector field shape does not match grid".into()));
        }
        for c in &components {
            check_finite(c, |v| v.is_finite())?;
        }
        Ok(VectorField { grid, components })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn scaled(&self, c: f64) -> Self {
        VectorField {
            grid: self.grid.clone(),
            components: self.components.iter().map(|v| v.iter().map(|x| x * c).collect()).collect(),
        }
    }
}

/// L² norm `sqrt(Σ |ψ_k|² ΔV)`.
pub fn norm(psi: &WaveFunction) -> f64 {
    (psi.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * psi.grid.cell_volume()).sqrt()
}

/// `Σ conj(ψ_k) φ_k ΔV`.
pub fn overlap(psi: &WaveFunction, phi: &WaveFunction) -> Result<Complex64> {
    if psi.grid != phi.grid {
        return Err(Error::GridMismatch);
    }
    let s: Complex64 = psi.values.iter().zip(&phi.values).map(|(a, b)| a.conj() * b).sum();
    Ok(s * psi.grid.cell_volume())
}

/// Pointwise `|ψ|²`.
pub fn density(psi: &WaveFunction) -> RealField {
    RealField { grid: psi.grid.clone(), values: psi.values.iter().map(|v| v.norm_sqr()).collect() }
}

/// Partial derivative along `axis`: spectral on periodic axes, fourth-order
/// central differences (one-sided at the ends) on reflecting axes.
pub fn gradient(psi: &WaveFunction, axis: usize) -> Vec<Complex64> {
    let mut out = psi.values.clone();
    differentiate_in_place(&mut out, &psi.grid, axis);
    out
}

pub(crate) fn differentiate_in_place(data: &mut [Complex64], grid: &GridSpec, axis: usize) {
    let shape = grid.shape();
    let ax = grid.axis(axis);
    match ax.boundary {
        Boundary::Periodic => {
            let n = ax.points;
            let factor: Vec<Complex64> = ax
                .wavenumbers()
                .into_iter()
                .enumerate()
                .map(|(i, k)| if 2 * i == n { Complex64::new(0.0, 0.0) } else { Complex64::new(0.0, k) })
                .collect();
            lines::spectral_multiply(data, &shape, axis, &factor);
        }
        Boundary::Reflecting => {
            let h = ax.spacing();
            let mut tmp = vec![Complex64::new(0.0, 0.0); ax.points];
            lines::for_each_line(data, &shape, axis, |line| {
                fd4_derivative(line, h, &mut tmp);
                line.copy_from_slice(&tmp);
            });
        }
    }
}

fn fd4_derivative(f: &[Complex64], h: f64, out: &mut [Complex64]) {
    let n = f.len();
    let c = 1.0 / (12.0 * h);
    out[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) * c;
    out[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) * c;
    for i in 2..n - 2 {
        out[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) * c;
    }
    out[n - 2] = -(-3.0 * f[n - 1] - 10.0 * f[n - 2] + 18.0 * f[n - 3] - 6.0 * f[n - 4] + f[n - 5]) * c;
    out[n - 1] = -(-25.0 * f[n - 1] + 48.0 * f[n - 2] - 36.0 * f[n - 3] + 16.0 * f[n - 4] - 3.0 * f[n - 5]) * c;
}

/// Probability current `j_k = Im(ψ* ∂_k ψ) / m_k` (ℏ = 1).
pub fn current(psi: &WaveFunction, masses: &[f64]) -> Result<VectorField> {
    check_masses(psi.grid.dims(), masses)?;
    let components = (0..psi.grid.dims())
        .map(|d| {
            let g = gradient(psi, d);
            psi.values.iter().zip(&g).map(|(p, dp)| (p.conj() * dp).im / masses[d]).collect()
        })
        .collect();
    VectorField::new(psi.grid.clone(), components)
}

pub(crate) fn check_masses(dims: usize, masses: &[f64]) -> Result<()> {
    if masses.len() != dims {
        return Err(Error::InvalidArgument(format!("{} masses for {dims} axes", masses.len())));
    }
    if masses.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidArgument("masses must be positive and finite".into()));
    }
    Ok(())
}

/// Cubic-spline value of `field` at `q`. Builds the spline on every call;
/// hold on to [`RealField::interpolator`] for repeated evaluation.
pub fn interpolate(field: &RealField, q: &[f64]) -> Result<f64> {
    field.interpolator().eval(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize, lo: f64, hi: f64) -> GridSpec {
        GridSpec::line(Axis::periodic(n, lo, hi)).unwrap()
    }

    fn gaussian(grid: &GridSpec, k: f64) -> WaveFunction {
        WaveFunction::from_fn(grid.clone(), 0.0, |q| {
            Complex64::new(0.0, k * q[0]).exp() * (-q[0] * q[0] / 2.0).exp() / PI.powf(0.25)
        })
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::line(Axis::periodic(100, 0.0, 1.0)).is_err());
        assert!(GridSpec::line(Axis::periodic(4, 0.0, 1.0)).is_err());
        assert!(GridSpec::line(Axis::reflecting(100, 1.0, 0.0)).is_err());
        assert!(GridSpec::line(Axis::reflecting(100, 0.0, 1.0)).is_ok());
        assert!(GridSpec::new(vec![]).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = GridSpec::new(vec![
            Axis::periodic(8, 0.0, 1.0),
            Axis::reflecting(9, 0.0, 1.0),
            Axis::periodic(16, 0.0, 1.0),
        ])
        .unwrap();
        for k in [0, 1, 17, 500, g.len() - 1] {
            let idx = g.multi_index(k);
            assert_eq!(g.flat_index(&idx), k);
        }
    }

    #[test]
    fn norms() {
        let g = line(256, -10.0, 10.0);
        assert!((gaussian(&g, 0.0).norm() - 1.0).abs() < 1e-8);
        assert_eq!(WaveFunction::zeros(g.clone(), 0.0).norm(), 0.0);
        let l = 2.0 * PI * 3.0;
        let g = line(64, 0.0, l);
        let k = g.axis(0).wavenumbers()[5];
        let pw = WaveFunction::from_fn(g, 0.0, |q| Complex64::new(0.0, k * q[0]).exp()).unwrap();
        assert!((pw.norm() - l.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let g = line(8, 0.0, 1.0);
        let mut v = vec![Complex64::new(1.0, 0.0); 8];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert_eq!(WaveFunction::new(g, v, 0.0), Err(Error::NonFinite(3)));
    }

    #[test]
    fn plane_wave_derivative_is_exact() {
        let g = line(64, 0.0, 2.0 * PI);
        let k = g.axis(0).wavenumbers()[7];
        let pw = WaveFunction::from_fn(g, 0.0, |q| Complex64::new(0.0, k * q[0]).exp()).unwrap();
        let d = gradient(&pw, 0);
        for (v, dv) in pw.values().iter().zip(&d) {
            assert!((dv - Complex64::new(0.0, k) * v).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_has_zero_derivative() {
        for axis in [Axis::periodic(32, 0.0, 1.0), Axis::reflecting(32, 0.0, 1.0)] {
            let g = GridSpec::line(axis).unwrap();
            let c = WaveFunction::from_fn(g, 0.0, |_| Complex64::new(2.0, -1.0)).unwrap();
            assert!(gradient(&c, 0).iter().all(|v| v.norm() < 1e-12));
        }
    }

    #[test]
    fn gaussian_derivative_against_closed_form() {
        let g = line(256, -10.0, 10.0);
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new((-q[0] * q[0] / 2.0).exp(), 0.0)).unwrap();
        let d = gradient(&psi, 0);
        let err = (0..g.len())
            .map(|k| {
                let x = g.point(k)[0];
                (d[k] - Complex64::new(-x * (-x * x / 2.0).exp(), 0.0)).norm()
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn reflecting_derivative_is_fourth_order() {
        let err = |n: usize| {
            let g = GridSpec::line(Axis::reflecting(n, 0.0, 1.0)).unwrap();
            let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new(0.0, 3.0 * q[0]).exp()).unwrap();
            let d = gradient(&psi, 0);
            (0..n)
                .map(|k| (d[k] - Complex64::new(0.0, 3.0) * psi.values()[k]).norm())
                .fold(0.0, f64::max)
        };
        let ratio = err(64) / err(128);
        assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn density_and_current() {
        let g = line(256, -10.0, 10.0);
        let psi = gaussian(&g, 1.5);
        assert!((density(&psi).integral() - 1.0).abs() < 1e-8);
        let j = current(&psi, &[2.0]).unwrap();
        let rho = density(&psi);
        for k in 0..g.len() {
            if rho.values()[k] > 1e-10 {
                assert!((j.component(0)[k] / rho.values()[k] - 0.75).abs() < 1e-6);
            }
        }
        let real = gaussian(&g, 0.0);
        assert!(current(&real, &[1.0]).unwrap().component(0).iter().all(|v| v.abs() < 1e-14));
        assert!(current(&real, &[0.0]).is_err());
    }

    #[test]
    fn plane_wave_current() {
        let g = line(64, 0.0, 2.0 * PI);
        let k = g.axis(0).wavenumbers()[3];
        let pw = WaveFunction::from_fn(g, 0.0, |q| Complex64::new(0.0, k * q[0]).exp()).unwrap();
        let j = current(&pw, &[3.0]).unwrap();
        assert!(j.component(0).iter().all(|v| (v - k / 3.0).abs() < 1e-12));
        assert!(density(&pw).values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn overlap_properties() {
        let g = line(256, -20.0, 20.0);
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new((-(q[0] + 5.0).powi(2) * 2.0).exp(), 0.0))
            .unwrap()
            .normalize()
            .unwrap();
        let o = overlap(&psi, &psi).unwrap();
        assert!((o.re - psi.norm().powi(2)).abs() < 1e-12 && o.im.abs() < 1e-14);
        // shifted by half the box width
        let shifted = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new((-(q[0] - 15.0).powi(2) * 2.0).exp(), 0.0))
            .unwrap();
        assert!(overlap(&psi, &shifted).unwrap().norm() < 1e-6);
        let other = WaveFunction::zeros(line(128, -20.0, 20.0), 0.0);
        assert_eq!(overlap(&psi, &other), Err(Error::GridMismatch));
    }

    #[test]
    fn normalize_is_idempotent() {
        let g = line(128, -10.0, 10.0);
        let psi = gaussian(&g, 0.3).scaled(Complex64::new(3.0, 1.0));
        let a = psi.normalize().unwrap();
        let b = a.normalize().unwrap();
        let diff = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }
}
