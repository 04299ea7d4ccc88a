//! Quantum-equilibrium ensembles: sampling from `|ψ|²`, co-evolution with
//! the wave function, and goodness-of-fit statistics.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::grid::{self, Axis, GridSpec, WaveFunction};
use crate::guidance::{Configuration, GuidedRun, Member, ParticleScenario, TrajectoryStatus};

/// Name of the generator recorded in reports.
pub const PRNG_NAME: &str = "ChaCha20 (rand_chacha 0.3), key = seed, stream = member index";
/// Largest tolerated fraction of aborted members.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;
/// Rejection sampling gives up below this expected acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Ensembles smaller than this get a warning in reports.
pub const SMALL_ENSEMBLE: usize = 100;

/// KS critical value at the 1% level for sample size `n`.
pub fn ks_critical_value(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<Configuration>,
    pub seed: u64,
    pub source: String,
    pub time: f64,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Coordinates of every member along `axis`.
    pub fn axis_values(&self, axis: usize) -> Vec<f64> {
        self.members.iter().map(|q| q[axis]).collect()
    }

    /// CSV with header `member_id,q0[,q1[,q2]]`.
    pub fn to_csv(&self) -> String {
        let dims = self.members.first().map_or(1, |q| q.dims());
        let mut out = String::from("member_id");
        for d in 0..dims {
            out.push_str(&format!(",q{d}"));
        }
        out.push('\n');
        for (i, q) in self.members.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in q.as_slice() {
                out.push_str(&format!(",{v:.12e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Piecewise-linear density along one axis with its exact CDF.
#[derive(Debug, Clone)]
struct LinearDensity {
    lower: f64,
    spacing: f64,
    /// Node values, one more than the number of cells.
    nodes: Vec<f64>,
    /// Cumulative mass at the left edge of each cell, plus the total.
    cum: Vec<f64>,
}

impl LinearDensity {
    fn new(axis: &Axis, values: &[f64]) -> Self {
        let mut nodes = values.to_vec();
        if axis.is_periodic() {
            nodes.push(values[0]);
        }
        let h = axis.spacing();
        let mut cum = Vec::with_capacity(nodes.len());
        cum.push(0.0);
        for w in nodes.windows(2) {
            let last = *cum.last().expect("nonempty");
            cum.push(last + 0.5 * h * (w[0] + w[1]));
        }
        LinearDensity { lower: axis.lower, spacing: h, nodes, cum }
    }

    fn total(&self) -> f64 {
        *self.cum.last().expect("nonempty")
    }

    fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let u = ((x - self.lower) / self.spacing).max(0.0);
        let j = (u.floor() as usize).min(self.cells() - 1);
        (j, (u - j as f64).clamp(0.0, 1.0))
    }

    /// Normalized CDF at `x` (already wrapped into the axis range).
    fn cdf(&self, x: f64) -> f64 {
        let (j, s) = self.locate(x);
        let (a, b) = (self.nodes[j], self.nodes[j + 1]);
        (self.cum[j] + self.spacing * (a * s + 0.5 * (b - a) * s * s)) / self.total()
    }

    fn quantile(&self, u: f64) -> f64 {
        let target = u * self.total();
        let j = match self.cum.partition_point(|&c| c <= target) {
            0 => 0,
            k => (k - 1).min(self.cells() - 1),
        };
        let (a, b) = (self.nodes[j], self.nodes[j + 1]);
        let r = (target - self.cum[j]) / self.spacing;
        let s = if a + b <= 0.0 {
            0.5
        } else {
            let disc = (a * a + 2.0 * (b - a) * r).max(0.0);
            2.0 * r / (a + disc.sqrt())
        };
        self.lower + self.spacing * (j as f64 + s.clamp(0.0, 1.0))
    }
}

/// Quadrature weight of node `i` for a piecewise-linear integrand.
fn node_weight(axis: &Axis, i: usize) -> f64 {
    let h = axis.spacing();
    if !axis.is_periodic() && (i == 0 || i + 1 == axis.points) {
        0.5 * h
    } else {
        h
    }
}

/// Nodal values of the marginal density along `axis`.
fn marginal(grid: &GridSpec, rho: &[f64], axis: usize) -> Vec<f64> {
    let mut m = vec![0.0; grid.axis(axis).points];
    for (k, &r) in rho.iter().enumerate() {
        let idx = grid.multi_index(k);
        let mut w = 1.0;
        for d in 0..grid.dims() {
            if d != axis {
                w *= node_weight(grid.axis(d), idx[d]);
            }
        }
        m[idx[axis]] += w * r;
    }
    m
}

/// Multilinear interpolation of nodal values (periodic axes wrap).
fn multilinear(grid: &GridSpec, rho: &[f64], q: &[f64]) -> f64 {
    let dims = grid.dims();
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for d in 0..dims {
        let ax = grid.axis(d);
        let cells = if ax.is_periodic() { ax.points } else { ax.points - 1 };
        let u = ((ax.wrap(q[d]) - ax.lower) / ax.spacing()).max(0.0);
        let j = (u.floor() as usize).min(cells - 1);
        base[d] = j;
        frac[d] = (u - j as f64).clamp(0.0, 1.0);
    }
    let mut acc = 0.0;
    for corner in 0..(1usize << dims) {
        let mut idx = [0usize; 3];
        let mut w = 1.0;
        for d in 0..dims {
            let up = (corner >> d) & 1;
            let n = grid.axis(d).points;
            idx[d] = (base[d] + up) % n;
            w *= if up == 1 { frac[d] } else { 1.0 - frac[d] };
        }
        if w != 0.0 {
            acc += w * rho[grid.flat_index(&idx[..dims])];
        }
    }
    acc
}

fn member_rng(seed: u64, member: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    rng
}

/// `n` independent draws from `|ψ|²`, deterministic in `seed`.
///
/// One-dimensional grids use the inverse CDF of the piecewise-linear
/// density; higher dimensions use rejection from a uniform majorizer over
/// the multilinear density.
pub fn sample(psi: &WaveFunction, n: usize, seed: u64) -> Result<Ensemble> {
    if n == 0 {
        return Err(Error::InvalidArgument("ensemble size must be at least 1".into()));
    }
    let grid = psi.grid();
    let rho = grid::density(psi);
    let rho = rho.values();
    if rho.iter().all(|&r| r == 0.0) {
        return Err(Error::InvalidArgument("cannot sample from a zero density".into()));
    }
    let members: Vec<Configuration> = if grid.dims() == 1 {
        let dens = LinearDensity::new(grid.axis(0), rho);
        (0..n)
            .into_par_iter()
            .map(|i| {
                let u: f64 = member_rng(seed, i).gen();
                Configuration::new(&[dens.quantile(u)])
            })
            .collect()
    } else {
        let peak = rho.iter().copied().fold(0.0, f64::max);
        let volume: f64 = grid.axes().iter().map(|a| a.length()).product();
        let mass: f64 = marginal(grid, rho, 0).iter().enumerate().map(|(i, m)| node_weight(grid.axis(0), i) * m).sum();
        let rate = mass / volume / peak;
        if rate < MIN_ACCEPTANCE {
            return Err(Error::RejectionStall { rate });
        }
        let dims = grid.dims();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = member_rng(seed, i);
                let mut q = [0.0; 3];
                loop {
                    for d in 0..dims {
                        let ax = grid.axis(d);
                        q[d] = ax.lower + rng.gen::<f64>() * ax.length();
                        if !ax.is_periodic() {
                            q[d] = q[d].min(ax.upper);
                        }
                    }
                    if rng.gen::<f64>() * peak < multilinear(grid, rho, &q[..dims]) {
                        return Configuration::new(&q[..dims]);
                    }
                }
            })
            .collect()
    };
    Ok(Ensemble { members, seed, source: format!("|psi|^2 at t = {}", psi.time()), time: psi.time() })
}

/// Kolmogorov–Smirnov statistic between the ensemble's marginal along
/// `axis` and the marginal of `|ψ|²` (piecewise-linear, trapezoid CDF).
pub fn ks_distance(e: &Ensemble, psi: &WaveFunction, axis: usize) -> Result<f64> {
    let grid = psi.grid();
    if axis >= grid.dims() {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    if e.is_empty() {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    }
    let ax = grid.axis(axis);
    let rho = grid::density(psi);
    let dens = LinearDensity::new(ax, &marginal(grid, rho.values(), axis));
    let mut xs: Vec<f64> = e.members.iter().map(|q| ax.wrap(q[axis])).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = dens.cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub bins: usize,
}

/// Pearson χ² of the ensemble histogram against `|ψ|²`. Bins are blocks of
/// `block` grid cells per axis; adjacent bins (in row-major order) are
/// merged until every expected count is at least 5.
pub fn chi_square(e: &Ensemble, psi: &WaveFunction, block: usize) -> Result<ChiSquare> {
    let grid = psi.grid();
    let block = block.max(1);
    let dims = grid.dims();
    let cells: Vec<usize> = grid.axes().iter().map(|a| if a.is_periodic() { a.points } else { a.points - 1 }).collect();
    let bins_per: Vec<usize> = cells.iter().map(|c| c.div_ceil(block)).collect();
    let nbins: usize = bins_per.iter().product();
    let bin_of = |cell: &[usize]| -> usize {
        let mut b = 0;
        for d in 0..dims {
            b = b * bins_per[d] + cell[d] / block;
        }
        b
    };
    let rho = grid::density(psi);
    let rho = rho.values();
    let cell_volume = grid.cell_volume();
    let mut expected = vec![0.0; nbins];
    let total_cells: usize = cells.iter().product();
    for c in 0..total_cells {
        let mut cell = [0usize; 3];
        let mut rem = c;
        for d in (0..dims).rev() {
            cell[d] = rem % cells[d];
            rem /= cells[d];
        }
        let mut corner_sum = 0.0;
        for corner in 0..(1usize << dims) {
            let mut idx = [0usize; 3];
            for d in 0..dims {
                idx[d] = (cell[d] + ((corner >> d) & 1)) % grid.axis(d).points;
            }
            corner_sum += rho[grid.flat_index(&idx[..dims])];
        }
        expected[bin_of(&cell[..dims])] += corner_sum / (1usize << dims) as f64 * cell_volume;
    }
    let mass: f64 = expected.iter().sum();
    let n = e.len() as f64;
    for x in expected.iter_mut() {
        *x *= n / mass;
    }
    let mut observed = vec![0.0; nbins];
    for q in &e.members {
        let mut cell = [0usize; 3];
        for d in 0..dims {
            let ax = grid.axis(d);
            let u = ((ax.wrap(q[d]) - ax.lower) / ax.spacing()).max(0.0);
            cell[d] = (u.floor() as usize).min(cells[d] - 1);
        }
        observed[bin_of(&cell[..dims])] += 1.0;
    }
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut eo, mut ee) = (0.0, 0.0);
    for (o, x) in observed.iter().zip(&expected) {
        eo += o;
        ee += x;
        if ee >= 5.0 {
            merged.push((eo, ee));
            eo = 0.0;
            ee = 0.0;
        }
    }
    if ee > 0.0 || eo > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += eo;
                last.1 += ee;
            }
            None => merged.push((eo, ee)),
        }
    }
    if merged.len() < 2 {
        return Err(Error::InvalidArgument("too few populated bins for a chi-square test".into()));
    }
    let statistic: f64 = merged.iter().map(|(o, x)| (o - x) * (o - x) / x).sum();
    let dof = merged.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|err| Error::InvalidArgument(err.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: 1.0 - dist.cdf(statistic), bins: merged.len() })
}

/// Result of carrying an ensemble forward.
#[derive(Debug, Clone)]
pub struct EvolvedEnsemble {
    /// Surviving members only.
    pub ensemble: Ensemble,
    pub node_aborts: usize,
    pub out_of_domain: usize,
    /// The wave function at the final time.
    pub psi: WaveFunction,
}

impl EvolvedEnsemble {
    pub fn aborts(&self) -> usize {
        self.node_aborts + self.out_of_domain
    }
}

fn check_start(s: &ParticleScenario, time: f64) -> Result<()> {
    if (time - s.initial.time()).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "ensemble time {time} differs from scenario start {}",
            s.initial.time()
        )));
    }
    Ok(())
}

/// Co-advances the members with the wave function and calls `observe`
/// after every step. Returns the final wave function.
pub fn co_evolve<F>(s: &ParticleScenario, members: &mut [Member], t1: f64, mut observe: F) -> Result<WaveFunction>
where
    F: FnMut(f64, &[Member]),
{
    let steps = s.steps_to(s.initial.time(), t1)?;
    let mut run = GuidedRun::new(&s.hamiltonian, s.initial.clone(), s.dt)?;
    for _ in 0..steps {
        run.advance_members(members)?;
        observe(run.time(), members);
    }
    Ok(run.psi().clone())
}

fn split_members(members: &[Member], seed: u64, source: &str, time: f64) -> (Ensemble, usize, usize) {
    let mut kept = Vec::with_capacity(members.len());
    let (mut nodes, mut outside) = (0, 0);
    for m in members {
        match m.status {
            None | Some(TrajectoryStatus::Completed) => kept.push(m.q),
            Some(TrajectoryStatus::NodeAbort) => nodes += 1,
            Some(TrajectoryStatus::OutOfDomain) => outside += 1,
        }
    }
    (Ensemble { members: kept, seed, source: source.to_string(), time }, nodes, outside)
}

/// Evolves every member under the guidance law up to `t1`. Aborted members
/// are excluded and counted.
pub fn evolve_ensemble(s: &ParticleScenario, e: &Ensemble, t1: f64) -> Result<EvolvedEnsemble> {
    check_start(s, e.time)?;
    let mut members: Vec<Member> = e.members.iter().map(|&q| Member::new(q)).collect();
    let psi = co_evolve(s, &mut members, t1, |_, _| {})?;
    let (ensemble, node_aborts, out_of_domain) = split_members(&members, e.seed, &e.source, psi.time());
    let aborted = node_aborts + out_of_domain;
    if aborted as f64 > MAX_ABORT_FRACTION * e.len() as f64 {
        return Err(Error::AbortFractionExceeded { aborted, total: e.len() });
    }
    Ok(EvolvedEnsemble { ensemble, node_aborts, out_of_domain, psi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsPair {
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
    pub prng: String,
    pub ks: BTreeMap<String, KsPair>,
    pub critical_value: f64,
    pub aborts: usize,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Samples one ensemble per seed at the scenario start, evolves all of them
/// together with the wave function to `t1`, and tests every axis marginal
/// at both ends.
pub fn equivariance_report(name: &str, s: &ParticleScenario, n: usize, seeds: &[u64], t1: f64) -> Result<Vec<EquivarianceReport>> {
    let psi0 = &s.initial;
    let initial: Vec<Ensemble> = seeds.iter().map(|&seed| sample(psi0, n, seed)).collect::<Result<_>>()?;
    let mut members: Vec<Member> = initial.iter().flat_map(|e| e.members.iter().map(|&q| Member::new(q))).collect();
    let psi1 = co_evolve(s, &mut members, t1, |_, _| {})?;
    let critical = ks_critical_value(n);
    let warning = (n < SMALL_ENSEMBLE).then(|| format!("n = {n} is below {SMALL_ENSEMBLE}; the asymptotic KS critical value is loose"));
    let dims = psi0.grid().dims();
    let mut reports = Vec::with_capacity(seeds.len());
    for (k, e0) in initial.iter().enumerate() {
        let chunk = &members[k * n..(k + 1) * n];
        let (e1, nodes, outside) = split_members(chunk, e0.seed, &e0.source, psi1.time());
        let aborts = nodes + outside;
        let mut ks = BTreeMap::new();
        let mut pass = aborts as f64 <= MAX_ABORT_FRACTION * n as f64;
        for axis in 0..dims {
            let t0 = ks_distance(e0, psi0, axis)?;
            let t1v = if e1.is_empty() { 1.0 } else { ks_distance(&e1, &psi1, axis)? };
            pass &= t0 < critical && t1v < critical;
            ks.insert(format!("q{axis}"), KsPair { t0, t1: t1v });
        }
        reports.push(EquivarianceReport {
            scenario: name.to_string(),
            n,
            seed: e0.seed,
            prng: PRNG_NAME.to_string(),
            ks,
            critical_value: critical,
            aborts,
            pass,
            warning: warning.clone(),
        });
    }
    Ok(reports)
}

/// First violation of one-dimensional trajectory ordering: members are
/// listed in increasing initial position, `positions[i]` is member `i` at
/// one recorded time. A pair counts as crossed only when the earlier member
/// has overtaken the later one by more than `margin`.
pub fn ordering_violation(positions: &[f64], margin: f64) -> Option<(usize, usize)> {
    let mut lead = 0usize;
    for b in 1..positions.len() {
        if positions[lead] - positions[b] > margin {
            return Some((lead, b));
        }
        if positions[b] > positions[lead] {
            lead = b;
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schrodinger::HamiltonianSpec;
    use num_complex::Complex64;

    fn gaussian_line(n: usize, l: f64, sigma: f64) -> WaveFunction {
        let g = GridSpec::line(Axis::periodic(n, -l, l)).unwrap();
        WaveFunction::from_fn(g, 0.0, |q| Complex64::new((-q[0] * q[0] / (4.0 * sigma * sigma)).exp(), 0.0))
            .unwrap()
            .normalize()
            .unwrap()
    }

    #[test]
    fn quantile_inverts_cdf() {
        let ax = Axis::reflecting(9, 0.0, 8.0);
        let vals = [0.0, 1.0, 3.0, 0.5, 0.0, 2.0, 2.0, 1.0, 0.2];
        let d = LinearDensity::new(&ax, &vals);
        for u in [0.01, 0.2, 0.5, 0.77, 0.999] {
            assert!((d.cdf(d.quantile(u)) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_variance() {
        let psi = gaussian_line(256, 10.0, std::f64::consts::FRAC_1_SQRT_2);
        let e = sample(&psi, 100_000, 3).unwrap();
        let xs = e.axis_values(0);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((var - 0.5).abs() < 0.01, "{var}");
    }

    #[test]
    fn deterministic_and_single_member() {
        let psi = gaussian_line(64, 8.0, 1.0);
        assert_eq!(sample(&psi, 50, 9).unwrap(), sample(&psi, 50, 9).unwrap());
        assert_ne!(sample(&psi, 50, 9).unwrap().members, sample(&psi, 50, 10).unwrap().members);
        let one = sample(&psi, 1, 0).unwrap();
        assert_eq!(one.len(), 1);
        assert!(psi.grid().contains(one.members[0].as_slice()));
    }

    #[test]
    fn uniform_box_mean_2d() {
        let g = GridSpec::new(vec![Axis::periodic(16, 0.0, 2.0), Axis::periodic(16, -1.0, 3.0)]).unwrap();
        let psi = WaveFunction::from_fn(g, 0.0, |_| Complex64::new(1.0, 0.0)).unwrap().normalize().unwrap();
        let n = 20_000;
        let e = sample(&psi, n, 1).unwrap();
        for (axis, (center, len)) in [(1.0, 2.0), (1.0, 4.0)].iter().enumerate() {
            let xs = e.axis_values(axis);
            let mean = xs.iter().sum::<f64>() / n as f64;
            let sigma = len / 12f64.sqrt();
            assert!((mean - center).abs() < 4.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn disjoint_support_gives_unit_distance() {
        let psi = gaussian_line(256, 10.0, 0.3);
        let e = Ensemble { members: vec![Configuration::new(&[8.0]); 100], seed: 0, source: "far".into(), time: 0.0 };
        assert!(ks_distance(&e, &psi, 0).unwrap() > 0.99);
    }

    #[test]
    fn rejection_stall_on_spike() {
        let g = GridSpec::new(vec![Axis::periodic(128, 0.0, 1.0), Axis::periodic(128, 0.0, 1.0)]).unwrap();
        let mut vals = vec![Complex64::new(0.0, 0.0); g.len()];
        vals[g.flat_index(&[3, 3])] = Complex64::new(1.0, 0.0);
        let psi = WaveFunction::new(g, vals, 0.0).unwrap();
        assert!(matches!(sample(&psi, 10, 0), Err(Error::RejectionStall { .. })));
    }

    #[test]
    fn plane_wave_translates_members() {
        let l = 8.0 * std::f64::consts::PI;
        let g = GridSpec::line(Axis::periodic(64, 0.0, l)).unwrap();
        let psi = WaveFunction::from_fn(g.clone(), 0.0, |q| Complex64::new(0.0, 1.5 * q[0]).exp()).unwrap().normalize().unwrap();
        let h = HamiltonianSpec::free(g.clone(), vec![1.0]).unwrap();
        let s = ParticleScenario { hamiltonian: h, initial: psi.clone(), dt: 0.05, stride: 1 };
        let e = sample(&psi, 20, 4).unwrap();
        let out = evolve_ensemble(&s, &e, 1.0).unwrap();
        for (a, b) in e.members.iter().zip(&out.ensemble.members) {
            let want = g.axis(0).wrap(a[0] + 1.5);
            let diff = (b[0] - want).abs();
            assert!(diff < 1e-9 || (diff - l).abs() < 1e-9);
        }
        assert_eq!(out.aborts(), 0);
    }

    #[test]
    fn chi_square_accepts_own_samples() {
        let psi = gaussian_line(256, 10.0, 1.0);
        let e = sample(&psi, 10_000, 12).unwrap();
        let c = chi_square(&e, &psi, 4).unwrap();
        assert!(c.p_value > 0.001, "{c:?}");
        let shifted = Ensemble { members: e.members.iter().map(|q| Configuration::new(&[q[0] + 0.3])).collect(), ..e.clone() };
        assert!(chi_square(&shifted, &psi, 4).unwrap().p_value < 1e-6);
    }

    #[test]
    fn ordering() {
        assert_eq!(ordering_violation(&[0.0, 1.0, 2.0], 0.1), None);
        assert_eq!(ordering_violation(&[0.0, 1.0, 0.95, 2.0], 0.1), None);
        assert_eq!(ordering_violation(&[0.0, 1.0, 0.5, 2.0], 0.1), Some((1, 2)));
    }
}
