//! The guidance law `dQ_k/dt = Im(∂_k ψ / ψ)(Q) / m_k` and its integration.
//!
//! Velocities are precomputed on the grid, flagged where the density falls
//! below the node floor, and evaluated off-grid by cubic-spline
//! interpolation. Trajectories use classical RK4 on the same clock as the
//! wave function: the propagator advances in half steps so every RK4 stage
//! has an exact wave function behind it.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, GridSpec, VectorField, WaveFunction};
use crate::schrodinger::{HamiltonianSpec, Propagator};
use crate::spline::Spline;

/// Relative node floor: `ε_node = NODE_FLOOR · max ρ`.
pub const NODE_FLOOR: f64 = 1e-12;
/// Step halvings attempted before a trajectory is aborted at a node.
pub const MAX_HALVINGS: u32 = 20;

/// A point in configuration space (1 to 3 coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    coords: [f64; 3],
    dims: usize,
}

impl Configuration {
    pub fn new(coords: &[f64]) -> Self {
        assert!(!coords.is_empty() && coords.len() <= 3, "1-3 coordinates");
        let mut c = [0.0; 3];
        c[..coords.len()].copy_from_slice(coords);
        Configuration { coords: c, dims: coords.len() }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords[..self.dims]
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }

    fn axpy(&self, a: f64, v: &Configuration) -> Configuration {
        let mut out = *self;
        for d in 0..self.dims {
            out.coords[d] += a * v.coords[d];
        }
        out
    }
}

impl std::ops::Index<usize> for Configuration {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    NodeAbort,
    OutOfDomain,
}

impl TrajectoryStatus {
    pub fn flag(self) -> u8 {
        match self {
            TrajectoryStatus::Completed => 0,
            TrajectoryStatus::NodeAbort => 1,
            TrajectoryStatus::OutOfDomain => 2,
        }
    }

    fn from_error(e: &Error) -> Option<Self> {
        match e {
            Error::NodeEncounter { .. } => Some(TrajectoryStatus::NodeAbort),
            Error::OutOfDomain { .. } => Some(TrajectoryStatus::OutOfDomain),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, Configuration)>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn last(&self) -> &Configuration {
        &self.samples.last().expect("trajectory has samples").1
    }

    /// CSV with header `t,q0[,q1[,q2]],status_flag`. Every row but the last
    /// carries flag 0; the last row carries the termination status.
    pub fn to_csv(&self) -> String {
        let dims = self.samples.first().map_or(1, |s| s.1.dims());
        let mut out = String::from("t");
        for d in 0..dims {
            out.push_str(&format!(",q{d}"));
        }
        out.push_str(",status_flag\n");
        let n = self.samples.len();
        for (i, (t, q)) in self.samples.iter().enumerate() {
            out.push_str(&format!("{t:.12e}"));
            for v in q.as_slice() {
                out.push_str(&format!(",{v:.12e}"));
            }
            let flag = if i + 1 == n { self.status.flag() } else { 0 };
            out.push_str(&format!(",{flag}\n"));
        }
        out
    }
}

/// Velocity field with node flags.
#[derive(Debug, Clone)]
pub struct FlaggedVelocity {
    pub field: VectorField,
    /// `true` where `|ψ|² < floor`.
    pub flagged: Vec<bool>,
    pub floor: f64,
}

/// Pointwise `Im(∂_k ψ / ψ) / m_k`, computed as `j / ρ`.
///
/// Below the node floor the entry is flagged and holds `j ρ / ε²`, which
/// matches `j / ρ` at the floor and decays to zero in the tails, so the
/// spline built on top stays tame.
pub fn velocity_field(psi: &WaveFunction, masses: &[f64]) -> Result<FlaggedVelocity> {
    let j = grid::current(psi, masses)?;
    let rho = grid::density(psi);
    let floor = NODE_FLOOR * rho.max();
    let flagged: Vec<bool> = rho.values().iter().map(|&r| r < floor).collect();
    let comps = j
        .components()
        .iter()
        .map(|c| {
            c.iter()
                .zip(rho.values())
                .map(|(&jk, &r)| if r >= floor && r > 0.0 { jk / r } else if floor > 0.0 { jk * r / (floor * floor) } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(FlaggedVelocity { field: VectorField::new(psi.grid().clone(), comps)?, flagged, floor })
}

/// Interpolating view of the guidance field at one instant.
#[derive(Debug, Clone)]
pub struct Frame {
    time: f64,
    grid: GridSpec,
    velocity: Vec<Spline>,
    density: Spline,
    floor: f64,
}

impl Frame {
    pub fn new(psi: &WaveFunction, masses: &[f64]) -> Result<Self> {
        let v = velocity_field(psi, masses)?;
        Ok(Self::from_field(psi, &v))
    }

    /// Frame for a velocity field scaled by per-axis factors (used by the
    /// minisuperspace metric).
    pub(crate) fn from_field(psi: &WaveFunction, v: &FlaggedVelocity) -> Self {
        let grid = psi.grid().clone();
        let rho = grid::density(psi);
        Frame {
            time: psi.time(),
            velocity: v.field.components().iter().map(|c| Spline::new(&grid, c)).collect(),
            density: Spline::new(&grid, rho.values()),
            grid,
            floor: v.floor,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Density and velocity at `q`.
    fn sample(&self, q: &Configuration) -> Result<(f64, Configuration)> {
        let s = self.density.stencil(q.as_slice())?;
        let rho = self.density.apply(&s);
        let mut v = Configuration::new(&[0.0; 3][..q.dims()]);
        for (d, sp) in self.velocity.iter().enumerate() {
            v.coords[d] = sp.apply(&s);
        }
        Ok((rho, v))
    }

    pub fn velocity(&self, q: &Configuration) -> Result<Configuration> {
        let (rho, v) = self.sample(q)?;
        if rho < self.floor {
            return Err(Error::NodeEncounter { time: self.time });
        }
        Ok(v)
    }
}

/// Anything that can supply the guidance velocity at `(t, q)`.
pub trait VelocitySource: Sync {
    fn velocity(&self, t: f64, q: &Configuration) -> Result<Configuration>;

    /// Canonical representative of `q` (periodic wrap); errors if `q` has
    /// left a reflecting axis.
    fn canonical(&self, q: Configuration) -> Result<Configuration>;
}

/// Three frames at `t`, `t + dt/2`, `t + dt`; exact at the RK4 stage times,
/// quadratic in time in between (only reached after step halving).
#[derive(Debug, Clone)]
pub struct StepWindow {
    pub frames: [Arc<Frame>; 3],
}

impl StepWindow {
    pub fn start(&self) -> f64 {
        self.frames[0].time
    }

    pub fn dt(&self) -> f64 {
        self.frames[2].time - self.frames[0].time
    }
}

impl VelocitySource for StepWindow {
    fn velocity(&self, t: f64, q: &Configuration) -> Result<Configuration> {
        let dt = self.dt();
        let s = (t - self.start()) / dt;
        for (k, node) in [0.0, 0.5, 1.0].iter().enumerate() {
            if (s - node).abs() < 1e-9 {
                return self.frames[k].velocity(q);
            }
        }
        let l = [2.0 * (s - 0.5) * (s - 1.0), -4.0 * s * (s - 1.0), 2.0 * s * (s - 0.5)];
        let mut rho = 0.0;
        let mut v = Configuration::new(&[0.0; 3][..q.dims()]);
        let mut floor = 0.0f64;
        for (k, f) in self.frames.iter().enumerate() {
            let (r, vk) = f.sample(q)?;
            rho += l[k] * r;
            v = v.axpy(l[k], &vk);
            floor = floor.max(f.floor);
        }
        if rho < floor {
            return Err(Error::NodeEncounter { time: t });
        }
        Ok(v)
    }

    fn canonical(&self, q: Configuration) -> Result<Configuration> {
        canonical_on(self.frames[0].grid(), q)
    }
}

pub(crate) fn canonical_on(grid: &GridSpec, mut q: Configuration) -> Result<Configuration> {
    for (d, ax) in grid.axes().iter().enumerate() {
        let x = q.coords[d];
        if !ax.contains(x) {
            return Err(Error::OutOfDomain { axis: d, value: x });
        }
        q.coords[d] = ax.wrap(x).clamp(ax.lower, ax.upper);
    }
    Ok(q)
}

/// Velocity given by a closure; for closed-form fields.
pub struct AnalyticVelocity<F> {
    f: F,
}

impl<F> AnalyticVelocity<F>
where
    F: Fn(f64, &Configuration) -> Configuration + Sync,
{
    pub fn new(f: F) -> Self {
        AnalyticVelocity { f }
    }
}

impl<F> VelocitySource for AnalyticVelocity<F>
where
    F: Fn(f64, &Configuration) -> Configuration + Sync,
{
    fn velocity(&self, t: f64, q: &Configuration) -> Result<Configuration> {
        Ok((self.f)(t, q))
    }

    fn canonical(&self, q: Configuration) -> Result<Configuration> {
        Ok(q)
    }
}

fn rk4<S: VelocitySource + ?Sized>(src: &S, q: &Configuration, t: f64, h: f64) -> Result<Configuration> {
    let k1 = src.velocity(t, q)?;
    let k2 = src.velocity(t + 0.5 * h, &q.axpy(0.5 * h, &k1))?;
    let k3 = src.velocity(t + 0.5 * h, &q.axpy(0.5 * h, &k2))?;
    let k4 = src.velocity(t + h, &q.axpy(h, &k3))?;
    let mut out = *q;
    for d in 0..q.dims() {
        out.coords[d] += h / 6.0 * (k1.coords[d] + 2.0 * k2.coords[d] + 2.0 * k3.coords[d] + k4.coords[d]);
    }
    if !out.is_finite() {
        return Err(Error::NodeEncounter { time: t + h });
    }
    src.canonical(out)
}

fn step_policy<S: VelocitySource + ?Sized>(src: &S, q: &Configuration, t: f64, dt: f64, depth: u32) -> Result<Configuration> {
    match rk4(src, q, t, dt) {
        Err(Error::NodeEncounter { .. }) if depth < MAX_HALVINGS => {
            let h = 0.5 * dt;
            let mid = step_policy(src, q, t, h, depth + 1)?;
            step_policy(src, &mid, t + h, h, depth + 1)
        }
        other => other,
    }
}

/// One RK4 step of the guidance law from `(t, q)` to `t + dt`, halving the
/// step (up to [`MAX_HALVINGS`] times) when a stage lands at a node.
pub fn step<S: VelocitySource + ?Sized>(src: &S, q: &Configuration, t: f64, dt: f64) -> Result<Configuration> {
    step_policy(src, q, t, dt, 0)
}

/// A particle being carried along by [`GuidedRun`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Member {
    pub q: Configuration,
    pub status: Option<TrajectoryStatus>,
}

impl Member {
    pub fn new(q: Configuration) -> Self {
        Member { q, status: None }
    }

    pub fn is_running(&self) -> bool {
        self.status.is_none()
    }
}

/// Co-advances a wave function and any number of configurations on one
/// clock. The wave function moves in half steps; each full step builds a
/// [`StepWindow`] shared read-only by all members.
pub struct GuidedRun<'h> {
    propagator: Propagator<'h>,
    masses: Vec<f64>,
    psi: WaveFunction,
    frame: Arc<Frame>,
    dt: f64,
}

impl<'h> GuidedRun<'h> {
    pub fn new(h: &'h HamiltonianSpec, psi0: WaveFunction, dt: f64) -> Result<Self> {
        Self::with_masses(h, psi0, dt, h.masses().to_vec())
    }

    /// Guidance masses may differ from the Hamiltonian's when the caller
    /// rescales the velocity law.
    pub fn with_masses(h: &'h HamiltonianSpec, psi0: WaveFunction, dt: f64, masses: Vec<f64>) -> Result<Self> {
        let propagator = Propagator::new(h, 0.5 * dt)?;
        let frame = Arc::new(Frame::new(&psi0, &masses)?);
        Ok(GuidedRun { propagator, masses, psi: psi0, frame, dt })
    }

    pub fn psi(&self) -> &WaveFunction {
        &self.psi
    }

    pub fn time(&self) -> f64 {
        self.psi.time()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances the wave function one full step and returns the window
    /// covering it.
    pub fn advance(&mut self) -> Result<StepWindow> {
        let f0 = self.frame.clone();
        self.propagator.step(&mut self.psi)?;
        let f1 = Arc::new(Frame::new(&self.psi, &self.masses)?);
        self.propagator.step(&mut self.psi)?;
        let f2 = Arc::new(Frame::new(&self.psi, &self.masses)?);
        self.frame = f2.clone();
        Ok(StepWindow { frames: [f0, f1, f2] })
    }

    /// Advances the wave function and moves every running member.
    pub fn advance_members(&mut self, members: &mut [Member]) -> Result<()> {
        let window = self.advance()?;
        move_members(&window, members);
        Ok(())
    }
}

/// Steps all running members through `window` in parallel.
pub fn move_members(window: &StepWindow, members: &mut [Member]) {
    let (t, dt) = (window.start(), window.dt());
    members.par_iter_mut().filter(|m| m.is_running()).for_each(|m| match step(window, &m.q, t, dt) {
        Ok(q) => m.q = q,
        Err(e) => m.status = Some(TrajectoryStatus::from_error(&e).unwrap_or(TrajectoryStatus::NodeAbort)),
    });
}

/// Scenario for a single guided trajectory: Hamiltonian, initial state and
/// clock settings.
#[derive(Debug, Clone)]
pub struct ParticleScenario {
    pub hamiltonian: HamiltonianSpec,
    pub initial: WaveFunction,
    pub dt: f64,
    /// Record every `stride`-th step.
    pub stride: usize,
}

impl ParticleScenario {
    pub fn steps_to(&self, t0: f64, t1: f64) -> Result<usize> {
        if !(t1 > t0) {
            return Err(Error::InvalidArgument(format!("need t1 > t0, got [{t0}, {t1}]")));
        }
        Ok(((t1 - t0) / self.dt).round().max(1.0) as usize)
    }

    /// Wave function at `t0`, propagating from the scenario start if needed.
    pub fn state_at(&self, t0: f64) -> Result<WaveFunction> {
        let start = self.initial.time();
        if (t0 - start).abs() < 1e-12 {
            return Ok(self.initial.clone());
        }
        if t0 < start {
            return Err(Error::InvalidArgument("t0 precedes the scenario start".into()));
        }
        let steps = ((t0 - start) / self.dt).round() as usize;
        crate::schrodinger::propagate(&self.initial, &self.hamiltonian, self.dt, steps)
    }
}

/// Integrates one trajectory from `q0` at `t0` to `t1`. Step failures end the
/// trajectory and are reported through its status.
pub fn integrate(s: &ParticleScenario, q0: Configuration, t0: f64, t1: f64, dt: f64) -> Result<Trajectory> {
    let steps = ParticleScenario { dt, ..s.clone() }.steps_to(t0, t1)?;
    let psi = s.state_at(t0)?;
    let mut run = GuidedRun::new(&s.hamiltonian, psi, dt)?;
    let mut member = [Member::new(canonical_on(s.initial.grid(), q0)?)];
    let stride = s.stride.max(1);
    let mut samples = vec![(run.time(), member[0].q)];
    for i in 0..steps {
        run.advance_members(&mut member)?;
        if !member[0].is_running() {
            break;
        }
        if (i + 1) % stride == 0 || i + 1 == steps {
            samples.push((run.time(), member[0].q));
        }
    }
    Ok(Trajectory { samples, status: member[0].status.unwrap_or(TrajectoryStatus::Completed) })
}

/// Integrates a trajectory against an arbitrary velocity source on a fixed
/// step.
pub fn integrate_source<S: VelocitySource + ?Sized>(
    src: &S,
    q0: Configuration,
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
) -> Result<Trajectory> {
    if !(t1 > t0) || !(dt > 0.0) {
        return Err(Error::InvalidArgument("need t1 > t0 and dt > 0".into()));
    }
    let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
    let mut q = q0;
    let mut samples = vec![(t0, q)];
    let mut status = TrajectoryStatus::Completed;
    for i in 0..steps {
        let t = t0 + i as f64 * dt;
        match step(src, &q, t, dt) {
            Ok(next) => q = next,
            Err(e) => match TrajectoryStatus::from_error(&e) {
                Some(s) => {
                    status = s;
                    break;
                }
                None => return Err(e),
            },
        }
        if (i + 1) % stride.max(1) == 0 || i + 1 == steps {
            samples.push((t0 + (i + 1) as f64 * dt, q));
        }
    }
    Ok(Trajectory { samples, status })
}

/// `(φ₀ + e^{iθ} φ₁)/√2` style helper used in tests and scenarios.
pub fn superpose(a: &WaveFunction, ca: Complex64, b: &WaveFunction, cb: Complex64) -> Result<WaveFunction> {
    a.combine(ca, b, cb)?.normalize()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, RealField};
    use crate::schrodinger::{stationary_states, EigenOptions, PotentialPreset};
    use std::f64::consts::PI;

    fn harmonic_line() -> HamiltonianSpec {
        let g = GridSpec::line(Axis::periodic(256, -10.0, 10.0)).unwrap();
        let v = PotentialPreset::Harmonic { omega: 1.0, center: None }.field(&g, &[1.0]).unwrap();
        HamiltonianSpec::new(vec![1.0], v).unwrap()
    }

    #[test]
    fn plane_wave_field_and_step() {
        let l = 2.0 * PI * 4.0;
        let g = GridSpec::line(Axis::periodic(64, -0.5 * l, 0.5 * l)).unwrap();
        let k = 2.0;
        assert!(g.axis(0).wavenumbers().iter().any(|w| (w - k).abs() < 1e-12));
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new(0.0, k * q[0]).exp()).unwrap();
        let v = velocity_field(&psi, &[1.0]).unwrap();
        assert!(v.field.component(0).iter().all(|x| (x - k).abs() < 1e-10));
        assert!(v.flagged.iter().all(|f| !f));
        let h = HamiltonianSpec::free(g, vec![1.0]).unwrap();
        let mut run = GuidedRun::new(&h, psi, 0.1).unwrap();
        let w = run.advance().unwrap();
        let q = step(&w, &Configuration::new(&[0.0]), 0.0, 0.1).unwrap();
        assert!((q[0] - 0.2).abs() < 1e-10);
    }

    #[test]
    fn real_state_does_not_move() {
        let h = harmonic_line();
        let states = stationary_states(&h, 1, &EigenOptions::default()).unwrap();
        let v = velocity_field(&states[0].1, &[1.0]).unwrap();
        let rho = grid::density(&states[0].1);
        for (x, r) in v.field.component(0).iter().zip(rho.values()) {
            if *r > 1e-8 * rho.max() {
                assert!(x.abs() < 1e-10, "{x}");
            }
        }
        let s = ParticleScenario { hamiltonian: h, initial: states[0].1.clone(), dt: 1e-3, stride: 100 };
        let tr = integrate(&s, Configuration::new(&[0.7]), 0.0, 1.0, 1e-3).unwrap();
        assert_eq!(tr.status, TrajectoryStatus::Completed);
        // The eigenstate is only resolved to the solver's 1e-6 residual.
        assert!((tr.last()[0] - 0.7).abs() < 1e-6, "{}", tr.last()[0] - 0.7);
    }

    #[test]
    fn velocity_equals_current_over_density() {
        let h = harmonic_line();
        let st = stationary_states(&h, 2, &EigenOptions::default()).unwrap();
        let psi = superpose(&st[0].1, Complex64::new(1.0, 0.0), &st[1].1, Complex64::new(0.0, 1.0)).unwrap();
        let v = velocity_field(&psi, &[1.0]).unwrap();
        let j = grid::current(&psi, &[1.0]).unwrap();
        let rho = grid::density(&psi);
        for k in 0..rho.values().len() {
            if !v.flagged[k] {
                let want = j.component(0)[k] / rho.values()[k];
                assert!((v.field.component(0)[k] - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn free_packet_center_moves_uniformly() {
        let g = GridSpec::line(Axis::periodic(512, -20.0, 20.0)).unwrap();
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| {
            Complex64::new(0.0, q[0]).exp() * (-q[0] * q[0] / 2.0).exp()
        })
        .unwrap()
        .normalize()
        .unwrap();
        let h = HamiltonianSpec::free(g, vec![1.0]).unwrap();
        let s = ParticleScenario { hamiltonian: h, initial: psi, dt: 1e-3, stride: 100 };
        let tr = integrate(&s, Configuration::new(&[0.0]), 0.0, 1.0, 1e-3).unwrap();
        assert!((tr.last()[0] - 1.0).abs() < 1e-4, "{}", tr.last()[0]);
    }

    #[test]
    fn node_is_reported_not_smoothed() {
        // φ₁ has an exact node at the origin; nothing moves, but a source
        // that drives the particle onto the node must abort.
        let g = GridSpec::line(Axis::periodic(64, -8.0, 8.0)).unwrap();
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new(q[0] * (-q[0] * q[0] / 2.0).exp(), 0.0)).unwrap();
        let frame = Arc::new(Frame::new(&psi, &[1.0]).unwrap());
        let mut shifted = frame.as_ref().clone();
        shifted.time = 1.0;
        let mid = {
            let mut m = frame.as_ref().clone();
            m.time = 0.5;
            m
        };
        let w = StepWindow { frames: [frame, Arc::new(mid), Arc::new(shifted)] };
        let q = Configuration::new(&[0.0]);
        assert!(matches!(w.velocity(0.0, &q), Err(Error::NodeEncounter { .. })));
        assert!(matches!(step(&w, &q, 0.0, 1.0), Err(Error::NodeEncounter { .. })));
    }

    #[test]
    fn out_of_domain_on_reflecting_exit() {
        let g = GridSpec::line(Axis::reflecting(64, -1.0, 1.0)).unwrap();
        let src = AnalyticVelocity::new(|_, _q: &Configuration| Configuration::new(&[1.0]));
        let frame_grid = g.clone();
        let q = Configuration::new(&[0.95]);
        let next = q.axpy(0.1, &src.velocity(0.0, &q).unwrap());
        assert!(matches!(canonical_on(&frame_grid, next), Err(Error::OutOfDomain { .. })));
        let _ = RealField::zeros(g);
    }

    #[test]
    fn csv_layout() {
        let tr = Trajectory {
            samples: vec![(0.0, Configuration::new(&[1.0, 2.0])), (0.5, Configuration::new(&[1.5, 2.5]))],
            status: TrajectoryStatus::NodeAbort,
        };
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,q0,q1,status_flag");
        assert!(lines[1].ends_with(",0"));
        assert!(lines[2].ends_with(",1"));
    }
}
