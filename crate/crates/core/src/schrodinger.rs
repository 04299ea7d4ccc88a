//! Time-dependent Schrödinger propagation and stationary states.
//!
//! Propagation uses Strang splitting: a potential half-kick, the full
//! kinetic step, another potential half-kick. The kinetic factor is exact in
//! Fourier space on periodic axes and a Crank–Nicolson (Cayley) step on
//! reflecting axes, where the walls sit one spacing beyond the end nodes.
//! Both factors are unitary, so the norm is preserved to round-off.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Axis, Boundary, GridSpec, RealField, WaveFunction};
use crate::lines;

/// Time profile `g(t)` of a coupling term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Window {
    /// `g ≡ 1`.
    Constant,
    /// Smooth on/off switch: rises over `rise` from `start`, falls over
    /// `rise` ending at `end` (sin² edges), one in between.
    SmoothBox { start: f64, end: f64, rise: f64 },
    /// `g = (t - start) / (end - start)` clamped to [0, 1].
    Ramp { start: f64, end: f64 },
}

impl Window {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Window::Constant => 1.0,
            Window::SmoothBox { start, end, rise } => {
                if t <= start || t >= end {
                    0.0
                } else if t < start + rise {
                    (0.5 * PI * (t - start) / rise).sin().powi(2)
                } else if t > end - rise {
                    (0.5 * PI * (end - t) / rise).sin().powi(2)
                } else {
                    1.0
                }
            }
            Window::Ramp { start, end } => ((t - start) / (end - start)).clamp(0.0, 1.0),
        }
    }

    /// `∫ g dt` over `[0, t]` by composite Simpson quadrature.
    pub fn integral(&self, t: f64) -> f64 {
        let n = 4000;
        let h = t / n as f64;
        let mut s = self.value(0.0) + self.value(t);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * self.value(k as f64 * h);
        }
        s * h / 3.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub window: Window,
    pub field: RealField,
}

/// `H = Σ_k p_k²/(2m_k) + V(q) [+ g(t) W(q)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianSpec {
    masses: Vec<f64>,
    potential: RealField,
    coupling: Option<Coupling>,
}

impl HamiltonianSpec {
    pub fn new(masses: Vec<f64>, potential: RealField) -> Result<Self> {
        grid::check_masses(potential.grid().dims(), &masses)?;
        Ok(HamiltonianSpec { masses, potential, coupling: None })
    }

    pub fn with_coupling(mut self, window: Window, field: RealField) -> Result<Self> {
        if field.grid() != self.potential.grid() {
            return Err(Error::GridMismatch);
        }
        self.coupling = Some(Coupling { window, field });
        Ok(self)
    }

    pub fn free(grid: GridSpec, masses: Vec<f64>) -> Result<Self> {
        HamiltonianSpec::new(masses, RealField::zeros(grid))
    }

    pub fn grid(&self) -> &GridSpec {
        self.potential.grid()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn potential(&self) -> &RealField {
        &self.potential
    }

    pub fn coupling(&self) -> Option<&Coupling> {
        self.coupling.as_ref()
    }

    pub fn is_static(&self) -> bool {
        match &self.coupling {
            None => true,
            Some(c) => matches!(c.window, Window::Constant),
        }
    }

    /// Total potential at time `t`.
    pub fn potential_at(&self, t: f64) -> Vec<f64> {
        let v = self.potential.values();
        match &self.coupling {
            None => v.to_vec(),
            Some(c) => {
                let g = c.window.value(t);
                v.iter().zip(c.field.values()).map(|(a, b)| a + g * b).collect()
            }
        }
    }

    /// `Hψ` with the same discrete kinetic operator the propagator uses.
    pub fn apply(&self, psi: &WaveFunction, t: f64) -> Vec<Complex64> {
        let grid = psi.grid();
        let shape = grid.shape();
        let mut out: Vec<Complex64> = psi
            .values()
            .iter()
            .zip(self.potential_at(t))
            .map(|(p, v)| p * v)
            .collect();
        for (d, ax) in grid.axes().iter().enumerate() {
            let mut term = psi.values().to_vec();
            let m = self.masses[d];
            match ax.boundary {
                Boundary::Periodic => {
                    let f: Vec<Complex64> =
                        ax.wavenumbers().iter().map(|k| Complex64::new(k * k / (2.0 * m), 0.0)).collect();
                    lines::spectral_multiply(&mut term, &shape, d, &f);
                }
                Boundary::Reflecting => {
                    let c = 1.0 / (2.0 * m * ax.spacing().powi(2));
                    let mut tmp = vec![Complex64::new(0.0, 0.0); ax.points];
                    lines::for_each_line(&mut term, &shape, d, |line| {
                        let n = line.len();
                        for j in 0..n {
                            let l = if j > 0 { line[j - 1] } else { Complex64::new(0.0, 0.0) };
                            let r = if j + 1 < n { line[j + 1] } else { Complex64::new(0.0, 0.0) };
                            tmp[j] = (2.0 * line[j] - l - r) * c;
                        }
                        line.copy_from_slice(&tmp);
                    });
                }
            }
            for (o, t) in out.iter_mut().zip(term) {
                *o += t;
            }
        }
        out
    }
}

/// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩` at time `t`.
pub fn energy(psi: &WaveFunction, h: &HamiltonianSpec, t: f64) -> f64 {
    let hp = h.apply(psi, t);
    let num: f64 = psi.values().iter().zip(&hp).map(|(a, b)| (a.conj() * b).re).sum();
    let den: f64 = psi.values().iter().map(|a| a.norm_sqr()).sum();
    num / den
}

enum Kinetic {
    Spectral(Vec<Complex64>),
    /// Pre-factored Cayley step: `(1 + r·L) ψ' = (1 - r·L) ψ` with the
    /// three-point stencil `L`, `r = i dt / (4 m h²)`.
    Cayley { r: Complex64, cp: Vec<Complex64>, denom: Vec<Complex64> },
}

impl Kinetic {
    fn new(ax: &Axis, mass: f64, dt: f64, imaginary: bool) -> Self {
        // real-time factor exp(-i T dt); imaginary-time exp(-T dt)
        let scale = if imaginary { Complex64::new(-dt, 0.0) } else { Complex64::new(0.0, -dt) };
        match ax.boundary {
            Boundary::Periodic => Kinetic::Spectral(
                ax.wavenumbers().iter().map(|k| (scale * (k * k / (2.0 * mass))).exp()).collect(),
            ),
            Boundary::Reflecting => {
                // exp(-s T) with T = -D2/(2m): (1 + s T/2) ψ' = (1 - s T/2) ψ
                // stencil L ψ_j = 2ψ_j - ψ_{j-1} - ψ_{j+1}, T = L / (2 m h²)
                let r = -scale / (4.0 * mass * ax.spacing().powi(2));
                let n = ax.points;
                let diag = Complex64::new(1.0, 0.0) + 2.0 * r;
                let off = -r;
                let mut cp = vec![Complex64::new(0.0, 0.0); n];
                let mut denom = vec![Complex64::new(0.0, 0.0); n];
                denom[0] = diag;
                cp[0] = off / diag;
                for i in 1..n {
                    denom[i] = diag - off * cp[i - 1];
                    cp[i] = off / denom[i];
                }
                Kinetic::Cayley { r, cp, denom }
            }
        }
    }

    fn apply(&self, data: &mut [Complex64], shape: &[usize], axis: usize) {
        match self {
            Kinetic::Spectral(f) => {
                let n = shape[axis];
                let fwd = lines::forward(n);
                let inv = lines::inverse(n);
                let s = 1.0 / n as f64;
                lines::for_each_line(data, shape, axis, |line| {
                    fwd.process(line);
                    for (v, p) in line.iter_mut().zip(f) {
                        *v *= p * s;
                    }
                    inv.process(line);
                });
            }
            Kinetic::Cayley { r, cp, denom } => {
                let n = shape[axis];
                let off = -*r;
                let mut rhs = vec![Complex64::new(0.0, 0.0); n];
                lines::for_each_line(data, shape, axis, |line| {
                    for j in 0..n {
                        let l = if j > 0 { line[j - 1] } else { Complex64::new(0.0, 0.0) };
                        let rr = if j + 1 < n { line[j + 1] } else { Complex64::new(0.0, 0.0) };
                        rhs[j] = (1.0 - 2.0 * r) * line[j] + r * (l + rr);
                    }
                    // forward sweep
                    let mut dp = rhs[0] / denom[0];
                    line[0] = dp;
                    for j in 1..n {
                        dp = (rhs[j] - off * dp) / denom[j];
                        line[j] = dp;
                    }
                    for j in (0..n - 1).rev() {
                        line[j] = line[j] - cp[j] * line[j + 1];
                    }
                });
            }
        }
    }
}

/// Reusable Strang-split stepper for a fixed Hamiltonian and step size.
pub struct Propagator<'h> {
    h: &'h HamiltonianSpec,
    dt: f64,
    shape: Vec<usize>,
    kinetic: Vec<Kinetic>,
    static_kick: Option<Vec<Complex64>>,
    imaginary: bool,
}

impl<'h> Propagator<'h> {
    pub fn new(h: &'h HamiltonianSpec, dt: f64) -> Result<Self> {
        Self::build(h, dt, false)
    }

    fn build(h: &'h HamiltonianSpec, dt: f64, imaginary: bool) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        let grid = h.grid();
        let kinetic = grid.axes().iter().zip(h.masses()).map(|(ax, &m)| Kinetic::new(ax, m, dt, imaginary)).collect();
        let mut p = Propagator { h, dt, shape: grid.shape(), kinetic, static_kick: None, imaginary };
        if h.is_static() {
            p.static_kick = Some(p.half_kick(0.0));
        }
        Ok(p)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn half_kick(&self, t_mid: f64) -> Vec<Complex64> {
        let s = if self.imaginary { Complex64::new(-0.5 * self.dt, 0.0) } else { Complex64::new(0.0, -0.5 * self.dt) };
        self.h.potential_at(t_mid).into_iter().map(|v| (s * v).exp()).collect()
    }

    fn raw_step(&self, data: &mut [Complex64], t: f64) {
        let owned;
        let kick = match &self.static_kick {
            Some(k) => k,
            None => {
                owned = self.half_kick(t + 0.5 * self.dt);
                &owned
            }
        };
        for (v, k) in data.iter_mut().zip(kick) {
            *v *= k;
        }
        for (d, kin) in self.kinetic.iter().enumerate() {
            kin.apply(data, &self.shape, d);
        }
        for (v, k) in data.iter_mut().zip(kick) {
            *v *= k;
        }
    }

    /// Advances `psi` by one step in place.
    pub fn step(&self, psi: &mut WaveFunction) -> Result<()> {
        if psi.grid() != self.h.grid() {
            return Err(Error::GridMismatch);
        }
        let before = psi.norm();
        let t = psi.time();
        self.raw_step(psi.values_mut(), t);
        let after = psi.norm();
        let drift = (after - before).abs() / before.max(f64::MIN_POSITIVE);
        if !(drift <= 1e-6) {
            return Err(Error::StabilityFailure { drift });
        }
        psi.set_time(t + self.dt);
        Ok(())
    }
}

/// Advances `psi` by `steps` steps of size `dt`.
pub fn propagate(psi: &WaveFunction, h: &HamiltonianSpec, dt: f64, steps: usize) -> Result<WaveFunction> {
    let p = Propagator::new(h, dt)?;
    let mut out = psi.clone();
    for _ in 0..steps {
        p.step(&mut out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    /// Residual bound on `‖Hψ − Eψ‖`.
    pub tolerance: f64,
    /// Imaginary-time steps allowed per relaxation stage.
    pub max_iterations: usize,
    /// Grids up to this size fall back to dense diagonalization.
    pub dense_limit: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tolerance: 1e-6, max_iterations: 200_000, dense_limit: 2048 }
    }
}

/// The `n`-th eigenpair (0 = ground state) of a static Hamiltonian.
pub fn stationary_state(h: &HamiltonianSpec, n: usize) -> Result<(f64, WaveFunction)> {
    let mut all = stationary_states(h, n + 1, &EigenOptions::default())?;
    Ok(all.pop().expect("n + 1 states"))
}

/// The lowest `count` eigenpairs, by imaginary-time relaxation with
/// Gram–Schmidt deflation and a dense fallback on small grids.
pub fn stationary_states(h: &HamiltonianSpec, count: usize, opts: &EigenOptions) -> Result<Vec<(f64, WaveFunction)>> {
    match relax(h, count, opts) {
        Ok(states) => Ok(states),
        Err(e) if h.grid().len() <= opts.dense_limit => dense_states(h, count, opts.tolerance).map_err(|_| e),
        Err(e) => Err(e),
    }
}

fn residual(h: &HamiltonianSpec, psi: &WaveFunction) -> (f64, f64) {
    let hp = h.apply(psi, 0.0);
    let e = energy(psi, h, 0.0);
    let r: f64 = hp.iter().zip(psi.values()).map(|(a, b)| (a - e * b).norm_sqr()).sum();
    (e, (r * psi.grid().cell_volume()).sqrt())
}

fn initial_guess(grid: &GridSpec, level: usize) -> WaveFunction {
    let centers: Vec<f64> = grid.axes().iter().map(|a| 0.5 * (a.lower + a.upper)).collect();
    let widths: Vec<f64> = grid.axes().iter().map(|a| a.length() / 16.0).collect();
    let dims = grid.dims();
    WaveFunction::from_fn(grid.clone(), 0.0, |q| {
        let mut g = 1.0;
        let mut poly = 1.0;
        for d in 0..dims {
            let u = (q[d] - centers[d]) / widths[d];
            g *= (-0.5 * u * u).exp();
            if d == 0 {
                poly *= u.powi(level as i32);
            } else {
                // break symmetries so every low state has some weight
                poly *= 1.0 + 0.31 * u + 0.17 * u * u;
            }
        }
        Complex64::new(g * poly, 0.0)
    })
    .expect("finite guess")
}

fn project_out(psi: &mut WaveFunction, lower: &[(f64, WaveFunction)]) {
    for (_, phi) in lower {
        let c = grid::overlap(phi, psi).expect("same grid");
        for (v, p) in psi.values_mut().iter_mut().zip(phi.values()) {
            *v -= c * p;
        }
    }
}

fn relax(h: &HamiltonianSpec, count: usize, opts: &EigenOptions) -> Result<Vec<(f64, WaveFunction)>> {
    if !h.is_static() {
        return Err(Error::InvalidArgument("stationary states need a static Hamiltonian".into()));
    }
    let stages = [0.05, 0.01, 0.002, 0.0005];
    let mut found: Vec<(f64, WaveFunction)> = Vec::with_capacity(count);
    for level in 0..count {
        let mut psi = initial_guess(h.grid(), level);
        project_out(&mut psi, &found);
        psi = psi.normalize()?;
        for &dtau in &stages {
            let p = Propagator::build(h, dtau, true)?;
            let mut converged = false;
            for _ in 0..opts.max_iterations {
                let prev = psi.clone();
                p.raw_step(psi.values_mut(), 0.0);
                project_out(&mut psi, &found);
                psi = psi.normalize()?;
                let change: f64 = psi
                    .values()
                    .iter()
                    .zip(prev.values())
                    .map(|(a, b)| (a - b).norm_sqr())
                    .sum::<f64>()
                    * psi.grid().cell_volume();
                if change.sqrt() / dtau < 0.1 * opts.tolerance {
                    converged = true;
                    break;
                }
            }
            if !converged {
                let (_, r) = residual(h, &psi);
                return Err(Error::NoConvergence { level, residual: r });
            }
            let (_, r) = residual(h, &psi);
            if r < opts.tolerance {
                break;
            }
        }
        let (e, r) = residual(h, &psi);
        if r >= opts.tolerance {
            return Err(Error::NoConvergence { level, residual: r });
        }
        found.push((e, fix_phase(psi)));
    }
    Ok(found)
}

/// Dense diagonalization of the discretized Hamiltonian.
fn dense_states(h: &HamiltonianSpec, count: usize, tolerance: f64) -> Result<Vec<(f64, WaveFunction)>> {
    let grid = h.grid().clone();
    let n = grid.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut unit = WaveFunction::zeros(grid.clone(), 0.0);
    for j in 0..n {
        unit.values_mut()[j] = Complex64::new(1.0, 0.0);
        let col = h.apply(&unit, 0.0);
        for i in 0..n {
            m[(i, j)] = col[i].re;
        }
        unit.values_mut()[j] = Complex64::new(0.0, 0.0);
    }
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut out = Vec::with_capacity(count);
    for (level, &k) in order.iter().take(count).enumerate() {
        let v: Vec<Complex64> = eig.eigenvectors.column(k).iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let psi = WaveFunction::new(grid.clone(), v, 0.0)?.normalize()?;
        let (e, r) = residual(h, &psi);
        if r >= tolerance {
            return Err(Error::NoConvergence { level, residual: r });
        }
        out.push((e, fix_phase(psi)));
    }
    Ok(out)
}

/// Makes the amplitude of largest modulus real and positive.
pub(crate) fn fix_phase(psi: WaveFunction) -> WaveFunction {
    let peak = psi
        .values()
        .iter()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    if peak.norm() == 0.0 {
        return psi;
    }
    psi.scaled(peak.conj() / peak.norm())
}

/// Named potential shapes accepted in scenario configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialPreset {
    Free,
    /// `Σ_k ½ m_k ω² (q_k − c_k)²`.
    Harmonic {
        omega: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// `scale · (x² − a²)²` along axis 0.
    DoubleWell { a: f64, scale: f64 },
    /// A wall of height `height` across axis 0 at `wall_center` with two
    /// openings in axis 1 centred at `±slit_separation / 2`.
    DoubleSlitBarrier { height: f64, wall_center: f64, wall_width: f64, slit_separation: f64, slit_width: f64 },
    /// Values read from a grid CSV file (see [`crate::io`]); the file must
    /// describe exactly the scenario grid.
    Tabulated { path: String },
}

impl PotentialPreset {
    pub fn field(&self, grid: &GridSpec, masses: &[f64]) -> Result<RealField> {
        grid::check_masses(grid.dims(), masses)?;
        match self {
            PotentialPreset::Free => Ok(RealField::zeros(grid.clone())),
            PotentialPreset::Harmonic { omega, center } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0; grid.dims()]);
                if c.len() != grid.dims() {
                    return Err(Error::InvalidArgument("harmonic centre has wrong dimension".into()));
                }
                RealField::from_fn(grid.clone(), |q| {
                    q.iter().zip(&c).zip(masses).map(|((x, c), m)| 0.5 * m * omega * omega * (x - c).powi(2)).sum()
                })
            }
            PotentialPreset::DoubleWell { a, scale } => {
                RealField::from_fn(grid.clone(), |q| scale * (q[0] * q[0] - a * a).powi(2))
            }
            PotentialPreset::DoubleSlitBarrier { height, wall_center, wall_width, slit_separation, slit_width } => {
                if grid.dims() != 2 {
                    return Err(Error::InvalidArgument("double-slit barrier needs a 2D grid".into()));
                }
                RealField::from_fn(grid.clone(), |q| {
                    let in_wall = (q[0] - wall_center).abs() <= 0.5 * wall_width;
                    let in_slit = ((q[1] - 0.5 * slit_separation).abs() <= 0.5 * slit_width)
                        || ((q[1] + 0.5 * slit_separation).abs() <= 0.5 * slit_width);
                    if in_wall && !in_slit {
                        *height
                    } else {
                        0.0
                    }
                })
            }
            PotentialPreset::Tabulated { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{path}: {e}")))?;
                crate::io::read_potential_csv(&text, grid)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, lo: f64, hi: f64) -> GridSpec {
        GridSpec::line(Axis::periodic(n, lo, hi)).unwrap()
    }

    fn harmonic(grid: &GridSpec) -> HamiltonianSpec {
        let v = PotentialPreset::Harmonic { omega: 1.0, center: None }.field(grid, &[1.0]).unwrap();
        HamiltonianSpec::new(vec![1.0], v).unwrap()
    }

    fn width(psi: &WaveFunction) -> f64 {
        let rho = grid::density(psi);
        let g = psi.grid();
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for k in 0..g.len() {
            let x = g.point(k)[0];
            let r = rho.values()[k];
            m0 += r;
            m1 += r * x;
            m2 += r * x * x;
        }
        (m2 / m0 - (m1 / m0).powi(2)).sqrt()
    }

    #[test]
    fn free_gaussian_width_matches_closed_form() {
        let g = line(256, -20.0, 20.0);
        let s0: f64 = 1.0;
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new((-q[0] * q[0] / (4.0 * s0 * s0)).exp(), 0.0))
            .unwrap()
            .normalize()
            .unwrap();
        let h = HamiltonianSpec::free(g, vec![1.0]).unwrap();
        let out = propagate(&psi, &h, 1e-3, 2000).unwrap();
        let expected = s0 * (1.0 + (2.0 / (2.0 * s0 * s0)).powi(2)).sqrt();
        assert!((width(&out) / expected - 1.0).abs() < 1e-4);
        assert!((out.time() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn plane_wave_evolves_exactly() {
        let g = line(64, 0.0, 2.0 * PI);
        let k = g.axis(0).wavenumbers()[4];
        let m = 1.5;
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new(0.0, k * q[0]).exp()).unwrap();
        let h = HamiltonianSpec::free(g.clone(), vec![m]).unwrap();
        let out = propagate(&psi, &h, 0.01, 100).unwrap();
        let t = out.time();
        for j in 0..g.len() {
            let x = g.point(j)[0];
            let want = Complex64::new(0.0, k * x - k * k * t / (2.0 * m)).exp();
            assert!((out.values()[j] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn harmonic_spectrum() {
        let g = line(256, -10.0, 10.0);
        let h = harmonic(&g);
        let states = stationary_states(&h, 4, &EigenOptions::default()).unwrap();
        assert!((states[0].0 - 0.5).abs() < 1e-4);
        assert!((states[3].0 - 3.5).abs() < 1e-3);
        let o = grid::overlap(&states[0].1, &states[1].1).unwrap();
        assert!(o.norm() < 1e-8);
    }

    #[test]
    fn ground_state_is_stationary() {
        let g = line(256, -10.0, 10.0);
        let h = harmonic(&g);
        let (_, phi0) = stationary_state(&h, 0).unwrap();
        let out = propagate(&phi0, &h, 1e-3, 2000).unwrap();
        let f = grid::overlap(&out, &phi0).unwrap().norm();
        assert!(f > 1.0 - 1e-8, "{f}");
    }

    /// Independent oracle: explicit cosine-series kinetic matrix.
    fn dense_oracle(grid: &GridSpec, v: &[f64]) -> Vec<f64> {
        let n = grid.len();
        let ks = grid.axis(0).wavenumbers();
        let dx = grid.axis(0).spacing();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let r = (i as f64 - j as f64) * dx;
                let t: f64 = ks.iter().map(|k| 0.5 * k * k * (k * r).cos()).sum::<f64>() / n as f64;
                m[(i, j)] = t + if i == j { v[i] } else { 0.0 };
            }
        }
        let mut e: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().cloned().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    #[test]
    fn double_well_splitting_matches_dense_oracle() {
        let g = line(256, -10.0, 10.0);
        let v = PotentialPreset::DoubleWell { a: 2.0, scale: 0.125 }.field(&g, &[1.0]).unwrap();
        let oracle = dense_oracle(&g, v.values());
        let h = HamiltonianSpec::new(vec![1.0], v).unwrap();
        let states = stationary_states(&h, 2, &EigenOptions::default()).unwrap();
        let split = states[1].0 - states[0].0;
        assert!(split > 0.0 && split < 0.1);
        assert!((split - (oracle[1] - oracle[0])).abs() < 1e-5, "{split} vs {}", oracle[1] - oracle[0]);
    }

    #[test]
    fn reflecting_axis_conserves_norm() {
        let g = GridSpec::line(Axis::reflecting(200, -10.0, 10.0)).unwrap();
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| {
            Complex64::new(0.0, 2.0 * q[0]).exp() * (-(q[0] - 3.0).powi(2)).exp()
        })
        .unwrap()
        .normalize()
        .unwrap();
        let h = HamiltonianSpec::free(g, vec![1.0]).unwrap();
        // long enough to bounce off the wall
        let out = propagate(&psi, &h, 5e-3, 2000).unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn windows() {
        let w = Window::SmoothBox { start: 1.0, end: 3.0, rise: 0.5 };
        assert_eq!(w.value(0.5), 0.0);
        assert_eq!(w.value(2.0), 1.0);
        assert!((w.value(1.25) - 0.5).abs() < 1e-12);
        assert!((w.integral(4.0) - 1.5).abs() < 1e-6);
        assert_eq!(Window::Ramp { start: 0.0, end: 2.0 }.value(1.0), 0.5);
    }

    #[test]
    fn rejects_bad_step() {
        let g = line(16, 0.0, 1.0);
        let h = HamiltonianSpec::free(g, vec![1.0]).unwrap();
        assert!(Propagator::new(&h, 0.0).is_err());
    }
}

#[cfg(test)]
mod relax_tests {
    use super::*;

    #[test]
    fn imaginary_time_converges_without_fallback() {
        let g = GridSpec::line(Axis::periodic(256, -10.0, 10.0)).unwrap();
        let v = PotentialPreset::Harmonic { omega: 1.0, center: None }.field(&g, &[1.0]).unwrap();
        let h = HamiltonianSpec::new(vec![1.0], v).unwrap();
        let opts = EigenOptions { dense_limit: 0, ..EigenOptions::default() };
        let states = relax(&h, 4, &opts).unwrap();
        for (n, (e, _)) in states.iter().enumerate() {
            assert!((e - (n as f64 + 0.5)).abs() < 1e-4, "level {n}: {e}");
        }
    }
}
