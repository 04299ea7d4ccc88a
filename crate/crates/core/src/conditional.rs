//! Conditional wave functions `ψ(x) = Ψ(x, Y)` of a subsystem, branch
//! decompositions of two-axis states, and the comparison of conditional
//! wave functions against an effective one-body Schrödinger evolution.
//!
//! Axis 0 is the subsystem `x`, axis 1 the environment `y`.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, Axis, GridSpec, RealField, WaveFunction};
use crate::guidance::{Configuration, GuidedRun, Member, TrajectoryStatus};
use crate::schrodinger::{fix_phase, HamiltonianSpec, Propagator, Window};
use crate::spline::Spline;

/// Slices with a smaller norm are treated as lying in a node.
pub const NULL_SLICE_NORM: f64 = 1e-10;
/// Default disjointness threshold for branch packets (overlap magnitude).
pub const DISJOINT_OVERLAP: f64 = 1e-6;
/// Default relative threshold for clustering the environment marginal.
pub const CLUSTER_THRESHOLD: f64 = 1e-6;

fn check_two_axes(psi: &WaveFunction) -> Result<()> {
    if psi.grid().dims() != 2 {
        return Err(Error::InvalidArgument("expected a two-axis wave function".into()));
    }
    Ok(())
}

/// The normalized slice of `Ψ` at `value` on `fixed_axis`, as a wave function
/// on the remaining axis. Off-node values are spline-interpolated.
pub fn slice(psi: &WaveFunction, fixed_axis: usize, value: f64) -> Result<WaveFunction> {
    check_two_axes(psi)?;
    let grid = psi.grid();
    let fixed = grid.axis(fixed_axis).clone();
    let free_axis = 1 - fixed_axis;
    if !fixed.contains(value) {
        return Err(Error::OutOfDomain { axis: fixed_axis, value });
    }
    let line = GridSpec::line(fixed.clone())?;
    let n_free = grid.axis(free_axis).points;
    let n_fixed = fixed.points;
    let q = [fixed.wrap(value).clamp(fixed.lower, fixed.upper)];
    let mut stencil = None;
    let mut out = Vec::with_capacity(n_free);
    let mut re = vec![0.0; n_fixed];
    let mut im = vec![0.0; n_fixed];
    for i in 0..n_free {
        for j in 0..n_fixed {
            let idx = if fixed_axis == 1 { [i, j] } else { [j, i] };
            let v = psi.values()[grid.flat_index(&idx)];
            re[j] = v.re;
            im[j] = v.im;
        }
        let sr = Spline::new(&line, &re);
        let si = Spline::new(&line, &im);
        let s = match stencil {
            Some(s) => s,
            None => {
                let s = sr.stencil(&q)?;
                stencil = Some(s);
                s
            }
        };
        out.push(Complex64::new(sr.apply(&s), si.apply(&s)));
    }
    let sub = GridSpec::line(grid.axis(free_axis).clone())?;
    let raw = WaveFunction::new(sub, out, psi.time())?;
    let norm = raw.norm();
    if norm < NULL_SLICE_NORM {
        return Err(Error::NullSlice { norm });
    }
    Ok(fix_phase(raw.normalize()?))
}

/// `x ↦ Ψ(x, Y)`, normalized, phase fixed so the peak amplitude is real and
/// positive.
pub fn conditional_wavefunction(psi: &WaveFunction, y: f64) -> Result<WaveFunction> {
    slice(psi, 1, y)
}

/// Phase-insensitive distance `min_θ ‖ψ − e^{iθ}φ‖` between normalized
/// states.
/// Evaluated as a direct sum at the optimal phase, which stays accurate
/// far below the `√ε` floor of `√(2 − 2|⟨ψ|φ⟩|)`.
pub fn gauge_distance(psi: &WaveFunction, phi: &WaveFunction) -> Result<f64> {
    let o = grid::overlap(psi, phi)?.conj();
    let c = if o.norm() > 0.0 { o / o.norm() } else { Complex64::new(1.0, 0.0) };
    let sum: f64 = psi.values().iter().zip(phi.values()).map(|(a, b)| (a - c * b).norm_sqr()).sum();
    Ok((sum * psi.grid().cell_volume()).sqrt())
}

/// `|⟨ψ|φ⟩|²` for normalized states.
pub fn fidelity(psi: &WaveFunction, phi: &WaveFunction) -> Result<f64> {
    Ok(grid::overlap(psi, phi)?.norm_sqr())
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub x_state: WaveFunction,
    pub y_packet: WaveFunction,
    pub weight: f64,
    /// Environment nodes `[start, end)` owned by this branch (indices may
    /// wrap on a periodic axis).
    pub region: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct BranchDecomposition {
    pub branches: Vec<Branch>,
    pub residual: f64,
}

impl BranchDecomposition {
    /// Fails with `NoBranches` unless the state actually splits.
    pub fn require_split(self) -> Result<Self> {
        if self.branches.len() < 2 {
            return Err(Error::NoBranches);
        }
        Ok(self)
    }

    /// Index of the branch whose region contains `y`.
    pub fn branch_of(&self, axis: &Axis, y: f64) -> Option<usize> {
        let n = axis.points;
        let u = ((axis.wrap(y) - axis.lower) / axis.spacing()).round() as usize;
        let j = if axis.is_periodic() { u % n } else { u.min(n - 1) };
        self.branches.iter().position(|b| in_region(b.region, j, n))
    }

    pub fn max_pairwise_overlap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.branches.len() {
            for b in a + 1..self.branches.len() {
                let o = grid::overlap(&self.branches[a].y_packet, &self.branches[b].y_packet).map_or(1.0, |c| c.norm());
                worst = worst.max(o);
            }
        }
        worst
    }
}

fn in_region((start, end): (usize, usize), j: usize, n: usize) -> bool {
    if start < end {
        (start..end).contains(&j)
    } else {
        j >= start || j < end || (start == end && n > 0)
    }
}

/// Marginal density of axis `axis` (integrated over the other axis).
fn axis_marginal(psi: &WaveFunction, axis: usize) -> Vec<f64> {
    let grid = psi.grid();
    let other = grid.axis(1 - axis).spacing();
    let mut m = vec![0.0; grid.axis(axis).points];
    for (k, v) in psi.values().iter().enumerate() {
        m[grid.multi_index(k)[axis]] += v.norm_sqr() * other;
    }
    m
}

/// Splits the environment axis into regions, one per connected cluster of
/// the environment marginal above `threshold · max`. Region boundaries sit
/// at the marginal's minimum between neighbouring clusters, so the regions
/// tile the axis.
fn environment_regions(marg: &[f64], periodic: bool, threshold: f64) -> Vec<(usize, usize)> {
    let n = marg.len();
    let peak = marg.iter().copied().fold(0.0, f64::max);
    if peak == 0.0 {
        return Vec::new();
    }
    let above: Vec<bool> = marg.iter().map(|&m| m > threshold * peak).collect();
    if above.iter().all(|&a| a) {
        return vec![(0, n)];
    }
    // Walk from a point below threshold so clusters never straddle the start.
    let origin = if periodic { above.iter().position(|&a| !a).expect("some node below threshold") } else { 0 };
    let mut clusters: Vec<(usize, usize)> = Vec::new();
    let mut k = 0;
    let span = n;
    while k < span {
        let j = (origin + k) % n;
        if above[j] {
            let s = k;
            while k < span && above[(origin + k) % n] {
                k += 1;
            }
            clusters.push((s, k));
        } else {
            k += 1;
        }
    }
    if clusters.len() <= 1 {
        return vec![(0, n)];
    }
    // Cut between consecutive clusters at the marginal minimum; positions
    // are counted from `origin`.
    let at = |k: usize| marg[(origin + k) % n];
    let cut_between = |lo: usize, hi: usize| (lo..hi).min_by(|&a, &b| at(a).total_cmp(&at(b))).unwrap_or(lo);
    let cuts: Vec<usize> = clusters.windows(2).map(|w| cut_between(w[0].1, w[1].0)).collect();
    let mut bounds: Vec<isize> = Vec::with_capacity(cuts.len() + 2);
    if periodic {
        // The stretch from the last cluster round to the first one.
        let wrap = cut_between(clusters[clusters.len() - 1].1, clusters[0].0 + n) as isize;
        bounds.push(wrap - n as isize);
        bounds.extend(cuts.iter().map(|&c| c as isize));
        bounds.push(wrap);
    } else {
        bounds.push(0);
        bounds.extend(cuts.iter().map(|&c| c as isize));
        bounds.push(n as isize);
    }
    let mut regions = Vec::with_capacity(bounds.len() - 1);
    for w in bounds.windows(2) {
        let map = |k: isize| ((origin as isize + k).rem_euclid(n as isize)) as usize;
        if periodic {
            regions.push((map(w[0]), map(w[1])));
        } else {
            regions.push((w[0] as usize, w[1] as usize));
        }
    }
    regions
}

fn region_indices((start, end): (usize, usize), n: usize) -> Vec<usize> {
    if start < end {
        (start..end).collect()
    } else {
        (start..n).chain(0..end).collect()
    }
}

/// Largest singular triplet `(s, u, vᴴ)` of `m`, from the real SVD of the
/// embedding `[[Re, −Im], [Im, Re]]`: the complex SVD in nalgebra 0.35 is
/// unreliable for square and wide inputs. Wide matrices are reduced through
/// their adjoint.
fn dominant_triplet(m: &DMatrix<Complex64>) -> (f64, DVector<Complex64>, RowDVector<Complex64>) {
    let (r, c) = m.shape();
    if r < c {
        let (s, u, v_t) = dominant_triplet(&m.adjoint());
        return (s, v_t.adjoint(), u.adjoint());
    }
    let real = DMatrix::<f64>::from_fn(2 * r, 2 * c, |i, j| {
        let z = m[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let svd = real.svd(true, false);
    let k = svd.singular_values.imax();
    let s = svd.singular_values[k];
    let col = svd.u.as_ref().expect("u requested").column(k);
    let u = DVector::from_fn(r, |i, _| Complex64::new(col[i], col[r + i]));
    let v_t = if s > 0.0 { u.adjoint() * m / Complex64::new(s, 0.0) } else { RowDVector::zeros(c) };
    (s, u, v_t)
}

/// Dominant product factor of `Ψ` restricted to environment nodes `cols`.
fn dominant_product(psi: &WaveFunction, cols: &[usize]) -> Result<(WaveFunction, WaveFunction, f64, DMatrix<Complex64>)> {
    let grid = psi.grid();
    let (nx, ny) = (grid.axis(0).points, grid.axis(1).points);
    let (dx, dy) = (grid.axis(0).spacing(), grid.axis(1).spacing());
    let scale = (dx * dy).sqrt();
    let m = DMatrix::from_fn(nx, cols.len(), |i, c| psi.values()[grid.flat_index(&[i, cols[c]])] * scale);
    let (s, u, v_t) = dominant_triplet(&m);
    let rank1 = &u * v_t.clone() * Complex64::new(s, 0.0);
    let xs = GridSpec::line(grid.axis(0).clone())?;
    let ys = GridSpec::line(grid.axis(1).clone())?;
    let x_vals: Vec<Complex64> = u.iter().map(|c| c / dx.sqrt()).collect();
    let mut y_vals = vec![Complex64::new(0.0, 0.0); ny];
    for (c, &j) in cols.iter().enumerate() {
        y_vals[j] = v_t[c] / dy.sqrt();
    }
    let x_state = WaveFunction::new(xs, x_vals, psi.time())?;
    let y_packet = WaveFunction::new(ys, y_vals, psi.time())?;
    // Move the phase to the environment factor so the subsystem factor has
    // the standard phase convention.
    let fixed = fix_phase(x_state.clone());
    let ratio = grid::overlap(&fixed, &x_state)?;
    let y_packet = y_packet.scaled(ratio);
    Ok((fixed, y_packet, s * s, &m - rank1))
}

/// Branches of `Ψ` along the environment axis: clusters of the environment
/// marginal above `threshold · max`, each reduced to its dominant product by
/// singular-value decomposition. A state that does not split yields a
/// single branch; see [`BranchDecomposition::require_split`].
pub fn detect_branches(psi: &WaveFunction, threshold: f64) -> Result<BranchDecomposition> {
    check_two_axes(psi)?;
    let ax = psi.grid().axis(1).clone();
    let marg = axis_marginal(psi, 1);
    let regions = environment_regions(&marg, ax.is_periodic(), threshold);
    if regions.is_empty() {
        return Err(Error::NoBranches);
    }
    let mut branches = Vec::with_capacity(regions.len());
    let mut residual_sq = 0.0;
    for region in regions {
        let cols = region_indices(region, ax.points);
        let (x_state, y_packet, weight, rest) = dominant_product(psi, &cols)?;
        residual_sq += rest.iter().map(|c| c.norm_sqr()).sum::<f64>();
        branches.push(Branch { x_state, y_packet, weight, region });
    }
    Ok(BranchDecomposition { branches, residual: residual_sq.sqrt() })
}

/// How environment packets are followed along an effective-evolution run,
/// to report when they stop being disjoint.
#[derive(Debug, Clone)]
pub enum BranchTracking {
    /// No tracking; overlaps are reported as zero and no branch is assigned.
    None,
    /// Environment packets that evolve on their own under `hamiltonian`
    /// (non-interacting scenarios).
    Separable { packets: Vec<WaveFunction>, hamiltonian: HamiltonianSpec },
    /// Environment packets read off the state itself: the dominant
    /// environment factor of `Ψ` restricted to each subsystem window.
    XWindows(Vec<(f64, f64)>),
}

/// A two-axis scenario for effective-evolution studies.
#[derive(Debug, Clone)]
pub struct CompositeScenario {
    pub name: String,
    /// Full Hamiltonian on the (x, y) grid. A coupling term, if any, is the
    /// interaction `g(t) W(x, y)`.
    pub hamiltonian: HamiltonianSpec,
    /// `H_x` on the subsystem axis.
    pub subsystem: HamiltonianSpec,
    /// Include `g(t) W(x, Y(t))` in the reference evolution.
    pub interaction_in_reference: bool,
    pub initial: WaveFunction,
    pub x0: f64,
    pub y0: f64,
    pub dt: f64,
    pub stride: usize,
    pub tracking: BranchTracking,
}

impl CompositeScenario {
    pub fn validate(&self) -> Result<()> {
        check_two_axes(&self.initial)?;
        if self.hamiltonian.grid() != self.initial.grid() {
            return Err(Error::GridMismatch);
        }
        let xs = GridSpec::line(self.initial.grid().axis(0).clone())?;
        if self.subsystem.grid() != &xs {
            return Err(Error::GridMismatch);
        }
        if (self.initial.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument("initial state must be normalized".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument("dt must be positive".into()));
        }
        Ok(())
    }

    /// `W(x, Y)` on the subsystem grid, or `None` without an interaction.
    fn interaction_slice(&self, y: f64) -> Result<Option<(Window, RealField)>> {
        let Some(c) = self.hamiltonian.coupling() else { return Ok(None) };
        let grid = self.initial.grid();
        let w = WaveFunction::new(
            grid.clone(),
            c.field.values().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            0.0,
        )?;
        // Interpolate W along y without normalizing.
        let line = GridSpec::line(grid.axis(1).clone())?;
        let nx = grid.axis(0).points;
        let ny = grid.axis(1).points;
        let mut row = vec![0.0; ny];
        let mut out = Vec::with_capacity(nx);
        let q = [grid.axis(1).wrap(y)];
        for i in 0..nx {
            for (j, r) in row.iter_mut().enumerate() {
                *r = w.values()[grid.flat_index(&[i, j])].re;
            }
            out.push(Spline::new(&line, &row).eval(&q)?);
        }
        let xs = GridSpec::line(grid.axis(0).clone())?;
        Ok(Some((c.window.clone(), RealField::new(xs, out)?)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPoint {
    pub t: f64,
    pub delta: f64,
    pub branch_overlap_max: f64,
    /// Branch whose environment packet carries `Y`; `-1` when untracked.
    pub branch_of_y: i64,
}

#[derive(Debug, Clone)]
pub struct ErrorCurve {
    pub points: Vec<ErrorPoint>,
    pub trajectory: Vec<(f64, Configuration)>,
    pub status: TrajectoryStatus,
}

impl ErrorCurve {
    /// CSV with header `t,delta,branch_overlap_max,branch_id_of_Y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,delta,branch_overlap_max,branch_id_of_Y\n");
        for p in &self.points {
            out.push_str(&format!("{:.12e},{:.12e},{:.12e},{}\n", p.t, p.delta, p.branch_overlap_max, p.branch_of_y));
        }
        out
    }

    /// Largest δ before the first point whose overlap reaches `threshold`.
    pub fn max_delta_while_disjoint(&self, threshold: f64) -> f64 {
        self.points
            .iter()
            .take_while(|p| p.branch_overlap_max < threshold)
            .map(|p| p.delta)
            .fold(0.0, f64::max)
    }

    pub fn max_delta(&self) -> f64 {
        self.points.iter().map(|p| p.delta).fold(0.0, f64::max)
    }
}

struct Tracker<'a> {
    mode: &'a BranchTracking,
    packets: Vec<WaveFunction>,
    propagator: Option<Propagator<'a>>,
}

impl<'a> Tracker<'a> {
    fn new(mode: &'a BranchTracking, dt: f64) -> Result<Self> {
        match mode {
            BranchTracking::Separable { packets, hamiltonian } => Ok(Tracker {
                mode,
                packets: packets.clone(),
                propagator: Some(Propagator::new(hamiltonian, dt)?),
            }),
            _ => Ok(Tracker { mode, packets: Vec::new(), propagator: None }),
        }
    }

    fn advance(&mut self) -> Result<()> {
        if let Some(p) = &self.propagator {
            for phi in self.packets.iter_mut() {
                p.step(phi)?;
            }
        }
        Ok(())
    }

    /// (max pairwise overlap, branch of Y).
    fn observe(&self, psi: &WaveFunction, y: f64) -> Result<(f64, i64)> {
        let packets: Vec<WaveFunction> = match self.mode {
            BranchTracking::None => return Ok((0.0, -1)),
            BranchTracking::Separable { .. } => self.packets.clone(),
            BranchTracking::XWindows(windows) => x_window_packets(psi, windows)?,
        };
        let mut worst: f64 = 0.0;
        for a in 0..packets.len() {
            for b in a + 1..packets.len() {
                let o = grid::overlap(&packets[a], &packets[b])?.norm() / (packets[a].norm() * packets[b].norm()).max(f64::MIN_POSITIVE);
                worst = worst.max(o);
            }
        }
        let q = [y];
        let mut best = (-1i64, 0.0);
        for (k, phi) in packets.iter().enumerate() {
            let line = phi.grid();
            let re: Vec<f64> = phi.values().iter().map(|c| c.re).collect();
            let im: Vec<f64> = phi.values().iter().map(|c| c.im).collect();
            let amp = Spline::new(line, &re).eval(&q)?.powi(2) + Spline::new(line, &im).eval(&q)?.powi(2);
            if amp > best.1 {
                best = (k as i64, amp);
            }
        }
        Ok((worst, best.0))
    }
}

/// Dominant environment factor of `Ψ` restricted to each x window, weighted
/// by its singular value.
fn x_window_packets(psi: &WaveFunction, windows: &[(f64, f64)]) -> Result<Vec<WaveFunction>> {
    let grid = psi.grid();
    let xs = grid.axis(0);
    let ys = GridSpec::line(grid.axis(1).clone())?;
    let (dx, dy) = (xs.spacing(), grid.axis(1).spacing());
    let ny = grid.axis(1).points;
    windows
        .iter()
        .map(|&(lo, hi)| {
            let rows: Vec<usize> = (0..xs.points).filter(|&i| (lo..hi).contains(&xs.coord(i))).collect();
            if rows.is_empty() {
                return Err(Error::InvalidArgument(format!("x window [{lo}, {hi}) holds no grid nodes")));
            }
            let m = DMatrix::from_fn(rows.len(), ny, |r, j| psi.values()[grid.flat_index(&[rows[r], j])] * (dx * dy).sqrt());
            let (s, _, v) = dominant_triplet(&m);
            WaveFunction::new(ys.clone(), v.iter().map(|c| c * s / dy.sqrt()).collect(), psi.time())
        })
        .collect()
}

/// Co-evolves `Ψ` (two-axis propagation), the actual configuration `(X, Y)`
/// under the guidance law, and a reference `ψ_ref` under the one-body
/// effective Hamiltonian; records `δ = min_θ ‖ψ_τ − e^{iθ} ψ_ref‖` where
/// `ψ_τ = Ψ(·, Y(τ))` is the conditional wave function.
pub fn effective_evolution_error(s: &CompositeScenario, t1: f64, dt: f64) -> Result<ErrorCurve> {
    let s = CompositeScenario { dt, ..s.clone() };
    s.validate()?;
    let t0 = s.initial.time();
    if !(t1 > t0) {
        return Err(Error::InvalidArgument("need t1 > t0".into()));
    }
    let steps = ((t1 - t0) / dt).round().max(1.0) as usize;
    let stride = s.stride.max(1);
    let mut run = GuidedRun::new(&s.hamiltonian, s.initial.clone(), dt)?;
    let mut member = [Member::new(Configuration::new(&[s.x0, s.y0]))];
    let mut reference = conditional_wavefunction(&s.initial, s.y0)?;
    let mut tracker = Tracker::new(&s.tracking, dt)?;
    let mut points = Vec::new();
    let mut trajectory = vec![(t0, member[0].q)];
    let record = |psi: &WaveFunction, reference: &WaveFunction, tracker: &Tracker, y: f64| -> Result<ErrorPoint> {
        let cond = conditional_wavefunction(psi, y)?;
        let delta = gauge_distance(&cond, reference)?;
        let (overlap, branch) = tracker.observe(psi, y)?;
        Ok(ErrorPoint { t: psi.time(), delta, branch_overlap_max: overlap, branch_of_y: branch })
    };
    points.push(record(run.psi(), &reference, &tracker, s.y0)?);
    for k in 0..steps {
        let t = run.time();
        let y_start = member[0].q[1];
        run.advance_members(&mut member)?;
        if !member[0].is_running() {
            break;
        }
        let y_end = member[0].q[1];
        step_reference(&s, &mut reference, t, dt, y_start, y_end)?;
        tracker.advance()?;
        if (k + 1) % stride == 0 || k + 1 == steps {
            trajectory.push((run.time(), member[0].q));
            points.push(record(run.psi(), &reference, &tracker, y_end)?);
        }
    }
    Ok(ErrorCurve { points, trajectory, status: member[0].status.unwrap_or(TrajectoryStatus::Completed) })
}

/// One step of the reference under `H_x [+ g(t) W(x, Y)]`, taken as two
/// Strang half steps to match the discretization of the full evolution.
/// `Y` is interpolated linearly across the step and sampled at each half
/// step's midpoint.
fn step_reference(s: &CompositeScenario, psi: &mut WaveFunction, t: f64, dt: f64, y_start: f64, y_end: f64) -> Result<()> {
    debug_assert!((psi.time() - t).abs() < 1e-9);
    for y_mid in [0.75 * y_start + 0.25 * y_end, 0.25 * y_start + 0.75 * y_end] {
        let h = if s.interaction_in_reference {
            match s.interaction_slice(y_mid)? {
                Some((window, w)) => s.subsystem.clone().with_coupling(window, w)?,
                None => s.subsystem.clone(),
            }
        } else {
            s.subsystem.clone()
        };
        Propagator::new(&h, 0.5 * dt)?.step(psi)?;
    }
    Ok(())
}

fn gaussian(x: f64, center: f64, sigma: f64, k: f64) -> Complex64 {
    let u = (x - center) / sigma;
    Complex64::from_polar((-0.25 * u * u).exp(), k * x)
}

/// Normalized Gaussian packet `exp(−(q − c)²/(4σ²) + i k q)` on a line.
pub fn gaussian_packet(axis: &Axis, center: f64, sigma: f64, k: f64) -> Result<WaveFunction> {
    WaveFunction::from_fn(GridSpec::line(axis.clone())?, 0.0, |q| gaussian(q[0], center, sigma, k))?.normalize()
}

/// `Σ_α c_α ψ_α(x) φ_α(y)` on the product grid, normalized.
pub fn entangled_state(terms: &[(Complex64, &WaveFunction, &WaveFunction)]) -> Result<WaveFunction> {
    let (_, x0, y0) = terms.first().ok_or_else(|| Error::InvalidArgument("no terms".into()))?;
    let grid = GridSpec::new(vec![x0.grid().axis(0).clone(), y0.grid().axis(0).clone()])?;
    let (nx, ny) = (grid.axis(0).points, grid.axis(1).points);
    let mut vals = vec![Complex64::new(0.0, 0.0); nx * ny];
    for (c, psi, phi) in terms {
        if psi.grid() != x0.grid() || phi.grid() != y0.grid() {
            return Err(Error::GridMismatch);
        }
        for i in 0..nx {
            for j in 0..ny {
                vals[i * ny + j] += c * psi.values()[i] * phi.values()[j];
            }
        }
    }
    WaveFunction::new(grid, vals, 0.0)?.normalize()
}

/// Parameters of the pointer-measurement scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasurementParams {
    /// Force `F` of the gated ramp `W = −g(t) F tanh(x/w) y`.
    pub coupling: f64,
    /// Length of the coupling window (the scenario ends with it).
    pub duration: f64,
    /// Amplitudes of `ψ_a` and `ψ_b`.
    pub amplitudes: [f64; 2],
    pub x_centers: [f64; 2],
    pub x_width: f64,
    pub x_mass: f64,
    pub gate_width: f64,
    pub pointer_mass: f64,
    pub pointer_width: f64,
    pub x_points: usize,
    pub y_points: usize,
    pub x_half_length: f64,
    pub y_half_length: f64,
    pub dt: f64,
}

impl Default for MeasurementParams {
    fn default() -> Self {
        MeasurementParams {
            coupling: 20.0,
            duration: 2.0,
            amplitudes: [2.0, 1.0],
            x_centers: [-4.0, 4.0],
            x_width: 0.5,
            x_mass: 10.0,
            gate_width: 0.5,
            pointer_mass: 10.0,
            pointer_width: 0.5,
            x_points: 128,
            y_points: 256,
            x_half_length: 8.0,
            y_half_length: 8.0,
            dt: 2e-3,
        }
    }
}

impl MeasurementParams {
    pub fn window(&self) -> Window {
        Window::SmoothBox { start: 0.0, end: self.duration, rise: 0.1 * self.duration }
    }

    /// Pointer displacement `(F/M) ∫₀ᵀ (T − s) g(s) ds` by the end of the
    /// window.
    pub fn pointer_shift(&self) -> f64 {
        let w = self.window();
        let t = self.duration;
        let n = 4000;
        let h = t / n as f64;
        let f = |s: f64| (t - s) * w.value(s);
        let mut acc = f(0.0) + f(t);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
        }
        self.coupling / self.pointer_mass * acc * h / 3.0
    }

    /// Free-spreading pointer width at the end of the window.
    pub fn pointer_width_at_end(&self) -> f64 {
        let s = self.pointer_width;
        let tau = 2.0 * self.pointer_mass * s * s;
        s * (1.0 + (self.duration / tau).powi(2)).sqrt()
    }

    /// Separation of the two pointer positions in units of pointer width.
    pub fn separation_in_widths(&self) -> f64 {
        2.0 * self.pointer_shift() / self.pointer_width_at_end()
    }

    /// Subsystem states `ψ_a`, `ψ_b` at `t = 0`.
    pub fn x_states(&self) -> Result<[WaveFunction; 2]> {
        let ax = Axis::periodic(self.x_points, -self.x_half_length, self.x_half_length);
        Ok([
            gaussian_packet(&ax, self.x_centers[0], self.x_width, 0.0)?,
            gaussian_packet(&ax, self.x_centers[1], self.x_width, 0.0)?,
        ])
    }

    /// Born weights `|c_a|² / Σ|c|²` of the input superposition.
    pub fn born_weights(&self) -> [f64; 2] {
        let [a, b] = self.amplitudes;
        let t = a * a + b * b;
        [a * a / t, b * b / t]
    }
}

/// Builds `Ψ₀ = (c_a ψ_a(x) + c_b ψ_b(x)) χ_ready(y)` with the gated
/// pointer coupling. Fails with `InsufficientSeparation` when the pointer
/// cannot separate by at least five widths within the window.
pub fn measurement_scenario(p: &MeasurementParams) -> Result<CompositeScenario> {
    let required = 5.0;
    let separation = p.separation_in_widths();
    if !(separation >= required) {
        return Err(Error::InsufficientSeparation { separation, required });
    }
    let xa = Axis::periodic(p.x_points, -p.x_half_length, p.x_half_length);
    let ya = Axis::periodic(p.y_points, -p.y_half_length, p.y_half_length);
    let [psi_a, psi_b] = p.x_states()?;
    let ready = gaussian_packet(&ya, 0.0, p.pointer_width, 0.0)?;
    let c = |v: f64| Complex64::new(v, 0.0);
    let initial = entangled_state(&[(c(p.amplitudes[0]), &psi_a, &ready), (c(p.amplitudes[1]), &psi_b, &ready)])?;
    let grid = initial.grid().clone();
    let (f, w) = (p.coupling, p.gate_width);
    let field = RealField::from_fn(grid.clone(), |q| -f * (q[0] / w).tanh() * q[1])?;
    let hamiltonian = HamiltonianSpec::free(grid, vec![p.x_mass, p.pointer_mass])?.with_coupling(p.window(), field)?;
    let subsystem = HamiltonianSpec::free(GridSpec::line(xa)?, vec![p.x_mass])?;
    let half = 0.5 * (p.x_centers[1] - p.x_centers[0]);
    let windows = vec![(p.x_centers[0] - half, p.x_centers[0] + half), (p.x_centers[1] - half, p.x_centers[1] + half)];
    Ok(CompositeScenario {
        name: "cwf-measurement".into(),
        hamiltonian,
        subsystem,
        interaction_in_reference: false,
        initial,
        x0: p.x_centers[0],
        y0: 0.0,
        dt: p.dt,
        stride: 50,
        tracking: BranchTracking::XWindows(windows),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementRun {
    pub x0: f64,
    pub y0: f64,
    pub y_end: f64,
    /// Branch whose environment region holds `Y` at the end.
    pub branch: Option<usize>,
    /// Subsystem state (0 = a, 1 = b) the conditional wave function matches
    /// best, and that fidelity.
    pub matched: usize,
    pub fidelity: f64,
    pub other_fidelity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementReport {
    pub weights: Vec<f64>,
    pub born_weights: [f64; 2],
    pub residual: f64,
    pub separation_in_widths: f64,
    pub frequencies: [f64; 2],
    pub runs: Vec<MeasurementRun>,
    pub aborts: usize,
}

impl MeasurementReport {
    pub fn min_fidelity(&self) -> f64 {
        self.runs.iter().map(|r| r.fidelity).fold(1.0, f64::min)
    }

    /// Every run's best-matching state agrees with the region holding `Y`.
    pub fn branches_consistent(&self) -> bool {
        self.runs.iter().all(|r| r.branch == Some(r.matched))
    }
}

/// Runs the measurement with `runs` initial configurations drawn from
/// `|Ψ₀|²` (seeded), carried in lockstep with `Ψ`. After the window the
/// state is decomposed into branches and each run's conditional wave
/// function is compared with the freely evolved `ψ_a`, `ψ_b`.
pub fn measurement_statistics(p: &MeasurementParams, runs: usize, seed: u64) -> Result<MeasurementReport> {
    let s = measurement_scenario(p)?;
    let e = crate::equilibrium::sample(&s.initial, runs, seed)?;
    let mut members: Vec<Member> = e.members.iter().map(|&q| Member::new(q)).collect();
    let steps = (p.duration / p.dt).round() as usize;
    let mut run = GuidedRun::new(&s.hamiltonian, s.initial.clone(), p.dt)?;
    for _ in 0..steps {
        run.advance_members(&mut members)?;
    }
    let psi = run.psi();
    let split = detect_branches(psi, CLUSTER_THRESHOLD)?.require_split()?;
    let [mut a, mut b] = p.x_states()?;
    propagate_to(&s.subsystem, &mut a, p.dt, steps)?;
    propagate_to(&s.subsystem, &mut b, p.dt, steps)?;
    let targets = [a, b];
    // Order branches by which subsystem state they carry.
    let mut weights = vec![0.0; 2];
    let mut region_owner = Vec::with_capacity(split.branches.len());
    for br in &split.branches {
        let fa = fidelity(&br.x_state, &targets[0])?;
        let fb = fidelity(&br.x_state, &targets[1])?;
        let owner = if fa >= fb { 0 } else { 1 };
        weights[owner] += br.weight;
        region_owner.push(owner);
    }
    let y_axis = psi.grid().axis(1).clone();
    let results: Vec<Option<MeasurementRun>> = members
        .par_iter()
        .zip(e.members.par_iter())
        .map(|(m, q0)| {
            if !m.is_running() {
                return Ok(None);
            }
            let cond = conditional_wavefunction(psi, m.q[1])?;
            let fa = fidelity(&cond, &targets[0])?;
            let fb = fidelity(&cond, &targets[1])?;
            let (matched, fidelity, other_fidelity) = if fa >= fb { (0, fa, fb) } else { (1, fb, fa) };
            let branch = split.branch_of(&y_axis, m.q[1]).map(|k| region_owner[k]);
            Ok(Some(MeasurementRun { x0: q0[0], y0: q0[1], y_end: m.q[1], branch, matched, fidelity, other_fidelity }))
        })
        .collect::<Result<_>>()?;
    let aborts = results.iter().filter(|r| r.is_none()).count();
    let runs: Vec<MeasurementRun> = results.into_iter().flatten().collect();
    let mut counts = [0.0; 2];
    for r in &runs {
        if let Some(b) = r.branch {
            counts[b] += 1.0;
        }
    }
    let total = runs.len().max(1) as f64;
    Ok(MeasurementReport {
        weights,
        born_weights: p.born_weights(),
        residual: split.residual,
        separation_in_widths: p.separation_in_widths(),
        frequencies: [counts[0] / total, counts[1] / total],
        runs,
        aborts,
    })
}

fn propagate_to(h: &HamiltonianSpec, psi: &mut WaveFunction, dt: f64, steps: usize) -> Result<()> {
    let p = Propagator::new(h, dt)?;
    for _ in 0..steps {
        p.step(psi)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axes() -> (Axis, Axis) {
        (Axis::periodic(64, -8.0, 8.0), Axis::periodic(128, -16.0, 16.0))
    }

    #[test]
    fn product_state_slices_are_constant() {
        let (xa, ya) = axes();
        let psi = gaussian_packet(&xa, 1.0, 0.7, 0.5).unwrap();
        let chi = gaussian_packet(&ya, 0.0, 2.0, -0.3).unwrap();
        let big = entangled_state(&[(Complex64::new(1.0, 0.0), &psi, &chi)]).unwrap();
        let want = fix_phase(psi.clone());
        for y in [-3.0, -0.37, 0.0, 2.5] {
            let c = conditional_wavefunction(&big, y).unwrap();
            assert!(fidelity(&c, &want).unwrap() > 1.0 - 1e-10);
        }
    }

    #[test]
    fn null_slice() {
        let (xa, ya) = axes();
        let psi = gaussian_packet(&xa, 0.0, 0.5, 0.0).unwrap();
        let chi = gaussian_packet(&ya, -8.0, 0.3, 0.0).unwrap();
        let big = entangled_state(&[(Complex64::new(1.0, 0.0), &psi, &chi)]).unwrap();
        assert!(matches!(conditional_wavefunction(&big, 8.0), Err(Error::NullSlice { .. })));
    }

    #[test]
    fn product_has_one_branch() {
        let (xa, ya) = axes();
        let psi = gaussian_packet(&xa, 0.0, 0.5, 1.0).unwrap();
        let chi = gaussian_packet(&ya, 0.0, 1.0, 0.0).unwrap();
        let big = entangled_state(&[(Complex64::new(1.0, 0.0), &psi, &chi)]).unwrap();
        let d = detect_branches(&big, CLUSTER_THRESHOLD).unwrap();
        assert_eq!(d.branches.len(), 1);
        assert!(d.residual < 1e-8, "{}", d.residual);
        assert!(matches!(d.require_split(), Err(Error::NoBranches)));
    }

    #[test]
    fn region_tiling_wraps() {
        let mut m = vec![0.0; 20];
        for j in [18, 19, 0, 1] {
            m[j] = 1.0;
        }
        for j in 8..11 {
            m[j] = 1.0;
        }
        let r = environment_regions(&m, true, 1e-3);
        assert_eq!(r.len(), 2);
        let mut owned = vec![0; 20];
        for reg in &r {
            for j in region_indices(*reg, 20) {
                owned[j] += 1;
            }
        }
        assert!(owned.iter().all(|&c| c == 1));
    }

    #[test]
    fn measurement_separation_guard() {
        let p = MeasurementParams { coupling: 1.0, ..MeasurementParams::default() };
        assert!(matches!(measurement_scenario(&p), Err(Error::InsufficientSeparation { .. })));
        assert!(MeasurementParams::default().separation_in_widths() > 12.0);
    }
}
