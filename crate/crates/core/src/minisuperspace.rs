//! Minisuperspace cosmology in `(α, φ)` with `α = ln a`.
//!
//! Classical Hamiltonian for lapse `N`:
//!
//! `H = ½ N e^{−3α} [−p_α² + p_φ²/κ + U(α, φ)]`,
//! `U = U₀ + (Λ/3 + κ v(φ)) e^{6α} − k_c e^{4α}`.
//!
//! With this normalization an empty universe obeys
//! `(dα/dT)² = Λ/3 − k_c e^{−2α}`, so de Sitter expands at `H = √(Λ/3)` and
//! the closed model bounces at `a = √(3/Λ)`. The scalar carries mass `κ`,
//! which keeps it quantum while gravity turns classical as `κ → 0`.
//!
//! Quantization `p → −iκ∂` in Laplace–Beltrami ordering (conformally trivial
//! in two dimensions) gives the constraint `[κ² ∂²_α − κ ∂²_φ + U] Ψ = 0`.
//! Grids put `α` on axis 0 (reflecting) and `φ` on axis 1 (periodic).

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::conditional::{gauge_distance, slice};
use crate::error::{Error, Result};
use crate::grid::{self, Axis, Boundary, GridSpec, VectorField, WaveFunction};
use crate::guidance::{self, canonical_on, Configuration, FlaggedVelocity, Frame, TrajectoryStatus, VelocitySource, NODE_FLOOR};
use crate::lines;

/// Proper-time geometry agreement below which two lapse choices count as
/// gauge-equivalent.
pub const TOL_EQUIV: f64 = 1e-2;
/// Largest `κ|S''|/S'²` for which the WKB form is trusted.
pub const VALIDITY_LIMIT: f64 = 0.1;
/// Relative density at the `φ` boundary above which a solution is flagged.
pub const BOUNDARY_DENSITY: f64 = 1e-8;
/// Largest admissible `(Δα ω_max)²` for the α stepper.
pub const STIFFNESS_BOUND: f64 = 1.0;
/// Largest relative constraint violation accepted for classical initial data.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-8;

/// Matter potential `v(φ)`; it enters `U` as `κ v(φ) e^{6α}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatterPotential {
    #[default]
    None,
    /// `v = ω² φ²`.
    Harmonic { omega: f64 },
}

impl MatterPotential {
    pub fn value(&self, phi: f64) -> f64 {
        match *self {
            MatterPotential::None => 0.0,
            MatterPotential::Harmonic { omega } => omega * omega * phi * phi,
        }
    }

    pub fn derivative(&self, phi: f64) -> f64 {
        match *self {
            MatterPotential::None => 0.0,
            MatterPotential::Harmonic { omega } => 2.0 * omega * omega * phi,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, MatterPotential::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinisuperspaceModel {
    pub lambda: f64,
    /// `k_c ∈ {−1, 0, 1}`.
    #[serde(default)]
    pub curvature: i8,
    #[serde(default)]
    pub matter_potential: MatterPotential,
    pub kappa_eff: f64,
    /// Constant term `U₀`.
    #[serde(default)]
    pub offset: f64,
}

impl MinisuperspaceModel {
    pub fn de_sitter(lambda: f64, kappa_eff: f64) -> Self {
        MinisuperspaceModel { lambda, curvature: 0, matter_potential: MatterPotential::None, kappa_eff, offset: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument("lambda must be finite and non-negative".into()));
        }
        if !(-1..=1).contains(&self.curvature) {
            return Err(Error::InvalidArgument("curvature must be -1, 0 or 1".into()));
        }
        if !(self.kappa_eff > 0.0) || !self.kappa_eff.is_finite() {
            return Err(Error::InvalidArgument("kappa_eff must be positive".into()));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidArgument("offset must be finite".into()));
        }
        if let MatterPotential::Harmonic { omega } = self.matter_potential {
            if !omega.is_finite() {
                return Err(Error::InvalidArgument("matter frequency must be finite".into()));
            }
        }
        Ok(())
    }

    /// No potential at all: allowed, but nothing drives the geometry.
    pub fn is_trivial(&self) -> bool {
        self.lambda == 0.0 && self.curvature == 0 && self.matter_potential.is_none() && self.offset == 0.0
    }

    pub fn hubble(&self) -> f64 {
        (self.lambda / 3.0).sqrt()
    }

    /// `U` without the matter term.
    pub fn gravity_potential(&self, alpha: f64) -> f64 {
        self.offset + self.lambda / 3.0 * (6.0 * alpha).exp() - self.curvature as f64 * (4.0 * alpha).exp()
    }

    fn gravity_potential_derivative(&self, alpha: f64) -> f64 {
        2.0 * self.lambda * (6.0 * alpha).exp() - 4.0 * self.curvature as f64 * (4.0 * alpha).exp()
    }

    pub fn potential(&self, alpha: f64, phi: f64) -> f64 {
        self.gravity_potential(alpha) + self.kappa_eff * self.matter_potential.value(phi) * (6.0 * alpha).exp()
    }

    fn potential_gradient(&self, alpha: f64, phi: f64) -> (f64, f64) {
        let e6 = (6.0 * alpha).exp();
        let k = self.kappa_eff;
        (
            self.gravity_potential_derivative(alpha) + 6.0 * k * self.matter_potential.value(phi) * e6,
            k * self.matter_potential.derivative(phi) * e6,
        )
    }

    /// `−p_α² + p_φ²/κ + U` divided by the sum of the magnitudes of its
    /// individual terms, so the measure stays finite at turning points.
    pub fn constraint(&self, z: &PhaseSpacePoint) -> f64 {
        let kin_a = z.p_alpha * z.p_alpha;
        let kin_p = z.p_phi * z.p_phi / self.kappa_eff;
        let u = self.potential(z.alpha, z.phi);
        let e6 = (6.0 * z.alpha).exp();
        let terms = self.offset.abs()
            + self.lambda / 3.0 * e6
            + (self.curvature as f64 * (4.0 * z.alpha).exp()).abs()
            + self.kappa_eff * self.matter_potential.value(z.phi).abs() * e6;
        let scale = kin_a + kin_p + terms;
        if scale == 0.0 {
            0.0
        } else {
            (-kin_a + kin_p + u) / scale
        }
    }
}

/// Lapse `N(α, φ, τ) > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LapseFunction {
    Unit,
    Scaled { factor: f64 },
    /// `1 + amplitude · tanh φ`.
    TanhPhi { amplitude: f64 },
}

impl LapseFunction {
    pub fn evaluate(&self, _alpha: f64, phi: f64, _tau: f64) -> f64 {
        match *self {
            LapseFunction::Unit => 1.0,
            LapseFunction::Scaled { factor } => factor,
            LapseFunction::TanhPhi { amplitude } => 1.0 + amplitude * phi.tanh(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LapseFunction::Unit => true,
            LapseFunction::Scaled { factor } => factor > 0.0 && factor.is_finite(),
            LapseFunction::TanhPhi { amplitude } => amplitude.abs() < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("lapse {self:?} is not strictly positive")))
        }
    }

    /// Constant lapses differ from each other by a pure reparametrization.
    pub fn is_constant(&self) -> bool {
        !matches!(self, LapseFunction::TanhPhi { .. })
    }
}

fn check_grid(grid: &GridSpec) -> Result<()> {
    if grid.dims() != 2 || grid.axis(0).boundary != Boundary::Reflecting || grid.axis(1).boundary != Boundary::Periodic {
        return Err(Error::InvalidGrid("minisuperspace grids are (alpha reflecting, phi periodic)".into()));
    }
    if grid.axis(0).points < 5 {
        return Err(Error::InvalidGrid("need at least 5 alpha points".into()));
    }
    Ok(())
}

/// `∂²_φ` of one row, spectrally.
fn phi_laplacian(row: &[Complex64], k2: &[f64], out: &mut [Complex64]) {
    let n = row.len();
    out.copy_from_slice(row);
    lines::forward(n).process(out);
    let scale = 1.0 / n as f64;
    for (v, k) in out.iter_mut().zip(k2) {
        *v *= -k * scale;
    }
    lines::inverse(n).process(out);
}

fn squared_wavenumbers(axis: &Axis) -> Vec<f64> {
    axis.wavenumbers().iter().map(|k| k * k).collect()
}

#[derive(Debug, Clone)]
pub struct WdwSolution {
    pub psi: WaveFunction,
    /// Largest `|Ψ|²` on the `φ` boundary relative to the global maximum.
    pub boundary_density: f64,
    pub boundary_contaminated: bool,
}

/// Integrates the constraint in `α` from data `Ψ(α₀, ·)`, `∂_αΨ(α₀, ·)` on
/// the first row of `grid`, with `substeps` fourth-order steps per row.
///
/// The φ part is spectral; the α stepper is a Yoshida triple-jump of the
/// symmetric drift–kick–drift scheme for `∂²_α Ψ = (∂²_φ/κ − U/κ²) Ψ`.
pub fn solve_wdw(
    model: &MinisuperspaceModel,
    grid: &GridSpec,
    psi0: &[Complex64],
    dpsi0: &[Complex64],
    substeps: usize,
) -> Result<WdwSolution> {
    model.validate()?;
    check_grid(grid)?;
    let (aa, pa) = (grid.axis(0), grid.axis(1));
    let m = pa.points;
    if psi0.len() != m || dpsi0.len() != m {
        return Err(Error::InvalidArgument(format!("initial data needs {m} values per slice")));
    }
    if substeps == 0 {
        return Err(Error::InvalidArgument("substeps must be positive".into()));
    }
    let kappa = model.kappa_eff;
    let phis = pa.coords();
    let k2 = squared_wavenumbers(pa);
    let h = aa.spacing() / substeps as f64;
    let u_max = aa
        .coords()
        .iter()
        .flat_map(|&a| phis.iter().map(move |&p| (a, p)))
        .map(|(a, p)| model.potential(a, p).abs())
        .fold(0.0, f64::max);
    let k2_max = k2.iter().cloned().fold(0.0, f64::max);
    let stiffness = h * h * (k2_max / kappa + u_max / (kappa * kappa));
    if !(stiffness <= STIFFNESS_BOUND) {
        return Err(Error::StiffnessFailure { value: stiffness, bound: STIFFNESS_BOUND });
    }
    let v: Vec<f64> = phis.iter().map(|&p| model.matter_potential.value(p)).collect();
    let mut psi = psi0.to_vec();
    let mut pi = dpsi0.to_vec();
    let mut lap = vec![Complex64::new(0.0, 0.0); m];
    let mut out = Vec::with_capacity(grid.len());
    out.extend_from_slice(&psi);
    let w1 = 1.0 / (2.0 - 2f64.cbrt());
    let w0 = -(2f64.cbrt()) * w1;
    let mut alpha = aa.lower;
    let mut kick = |psi: &mut [Complex64], pi: &mut [Complex64], alpha: &mut f64, h: f64| {
        for (y, p) in psi.iter_mut().zip(pi.iter()) {
            *y += 0.5 * h * p;
        }
        *alpha += 0.5 * h;
        phi_laplacian(psi, &k2, &mut lap);
        let e6 = (6.0 * *alpha).exp();
        let ug = model.gravity_potential(*alpha);
        for j in 0..m {
            let u = ug + kappa * v[j] * e6;
            pi[j] += h * (lap[j] / kappa - psi[j] * (u / (kappa * kappa)));
        }
        for (y, p) in psi.iter_mut().zip(pi.iter()) {
            *y += 0.5 * h * p;
        }
        *alpha += 0.5 * h;
    };
    for i in 1..aa.points {
        for _ in 0..substeps {
            for w in [w1, w0, w1] {
                kick(&mut psi, &mut pi, &mut alpha, w * h);
            }
        }
        // Pin the clock to the grid so rounding does not accumulate.
        alpha = aa.coord(i);
        out.extend_from_slice(&psi);
    }
    let psi = WaveFunction::new(grid.clone(), out, 0.0)?;
    let rho_max = psi.values().iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    let edge = psi.values().chunks(m).map(|row| row[0].norm_sqr().max(row[m - 1].norm_sqr())).fold(0.0, f64::max);
    let boundary_density = if rho_max > 0.0 { edge / rho_max } else { 0.0 };
    Ok(WdwSolution { psi, boundary_density, boundary_contaminated: boundary_density > BOUNDARY_DENSITY })
}

/// Relative L² residual of the constraint operator on interior `α` rows:
/// `‖κ²∂²_αΨ − κ∂²_φΨ + UΨ‖` over the sum of the three terms' norms.
/// Being a ratio of α-integrals it is a per-unit-α measure.
pub fn wdw_residual(model: &MinisuperspaceModel, psi: &WaveFunction) -> Result<f64> {
    check_grid(psi.grid())?;
    let (aa, pa) = (psi.grid().axis(0), psi.grid().axis(1));
    let (n, m) = (aa.points, pa.points);
    let kappa = model.kappa_eff;
    let h = aa.spacing();
    let k2 = squared_wavenumbers(pa);
    let phis = pa.coords();
    let f = psi.values();
    let mut lap = vec![Complex64::new(0.0, 0.0); m];
    let (mut num, mut den) = (0.0, 0.0);
    for i in 2..n - 2 {
        let row = |r: usize| &f[r * m..(r + 1) * m];
        phi_laplacian(row(i), &k2, &mut lap);
        let a = aa.coord(i);
        for j in 0..m {
            let d2a = (-row(i - 2)[j] + 16.0 * row(i - 1)[j] - 30.0 * row(i)[j] + 16.0 * row(i + 1)[j] - row(i + 2)[j])
                / (12.0 * h * h);
            let ta = d2a * (kappa * kappa);
            let tp = lap[j] * (-kappa);
            let tu = row(i)[j] * model.potential(a, phis[j]);
            num += (ta + tp + tu).norm_sqr();
            den += ta.norm_sqr() + tp.norm_sqr() + tu.norm_sqr();
        }
    }
    Ok(if den > 0.0 { (num / den).sqrt() } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WkbBranch {
    Expanding,
    Contracting,
    /// `c₊ Ψ₊ + c₋ Ψ₋`.
    Superposition { expanding: f64, contracting: f64 },
}

#[derive(Debug, Clone)]
pub struct WkbState {
    pub psi: WaveFunction,
    /// `κ |S''| / S'²` at each α node.
    pub validity: Vec<f64>,
    /// `S(α)` of the expanding branch is `p_φ φ − action[i]`.
    pub action: Vec<f64>,
}

impl WkbState {
    pub fn max_validity(&self) -> f64 {
        self.validity.iter().cloned().fold(0.0, f64::max)
    }
}

const GAUSS5: [(f64, f64); 5] = [
    (0.0, 0.568_888_888_888_888_9),
    (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
    (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
    (0.906_179_845_938_664, 0.236_926_885_056_189_1),
];

/// Running integral of `f` from `a[0]` to each node, Gauss–Legendre per cell.
fn cumulative(nodes: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(nodes.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in nodes.windows(2) {
        let (mid, half) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
        acc += half * GAUSS5.iter().map(|(x, wt)| wt * f(mid + half * x)).sum::<f64>();
        out.push(acc);
    }
    out
}

fn allowed_region(model: &MinisuperspaceModel, axis: &Axis, p_phi: f64) -> Result<()> {
    let extra = p_phi * p_phi / model.kappa_eff;
    for a in axis.coords() {
        if !(model.gravity_potential(a) + extra > 0.0) {
            return Err(Error::TurningPointInDomain { alpha: a });
        }
    }
    Ok(())
}

/// Gravitational action `s(α) = ∫ √(U_g + p_φ²/κ) dα` at the α nodes, taken
/// from the first node. Closed form for flat models without offset,
/// quadrature otherwise. The matter term is ignored.
pub fn wkb_action(model: &MinisuperspaceModel, axis: &Axis, p_phi: f64) -> Result<Vec<f64>> {
    model.validate()?;
    allowed_region(model, axis, p_phi)?;
    let q = p_phi.abs() / model.kappa_eff.sqrt();
    let nodes = axis.coords();
    if model.curvature == 0 && model.offset == 0.0 {
        let c = model.lambda / 3.0;
        let closed = |a: f64| {
            if c == 0.0 {
                return q * a;
            }
            let w = (c * (6.0 * a).exp() + q * q).sqrt();
            // artanh(q/w) = ln(w + q) − ½ ln c − 3α, stable as w → q.
            let at = if q == 0.0 { 0.0 } else { (w + q).ln() - 0.5 * c.ln() - 3.0 * a };
            (w - q * at) / 3.0
        };
        let s0 = closed(nodes[0]);
        return Ok(nodes.iter().map(|&a| closed(a) - s0).collect());
    }
    let extra = p_phi * p_phi / model.kappa_eff;
    Ok(cumulative(&nodes, |a| (model.gravity_potential(a) + extra).sqrt()))
}

/// `κ|W'| / (2 W^{3/2})` with `W = U_g + p_φ²/κ`.
fn validity_at(model: &MinisuperspaceModel, alpha: f64, p_phi: f64) -> f64 {
    let w = model.gravity_potential(alpha) + p_phi * p_phi / model.kappa_eff;
    model.kappa_eff * model.gravity_potential_derivative(alpha).abs() / (2.0 * w.powf(1.5))
}

/// `A e^{i(p_φ φ ∓ s(α))/κ}` with `A = W^{−1/4}`, normalized on the first
/// α slice. Needs a φ-independent potential and `p_φ/κ` commensurate with
/// the φ period.
pub fn construct_wkb(model: &MinisuperspaceModel, grid: &GridSpec, branch: WkbBranch, p_phi: f64) -> Result<WkbState> {
    check_grid(grid)?;
    if !model.matter_potential.is_none() {
        return Err(Error::InvalidArgument("construct_wkb needs a phi-independent potential".into()));
    }
    let (aa, pa) = (grid.axis(0), grid.axis(1));
    let kappa = model.kappa_eff;
    let turns = p_phi / kappa * pa.length() / (2.0 * std::f64::consts::PI);
    if (turns - turns.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument("p_phi / kappa_eff is not a wavenumber of the phi grid".into()));
    }
    let action = wkb_action(model, aa, p_phi)?;
    let (cp, cm) = match branch {
        WkbBranch::Expanding => (1.0, 0.0),
        WkbBranch::Contracting => (0.0, 1.0),
        WkbBranch::Superposition { expanding, contracting } => (expanding, contracting),
    };
    let extra = p_phi * p_phi / kappa;
    let m = pa.points;
    let phis = pa.coords();
    let mut values = Vec::with_capacity(grid.len());
    for (i, a) in aa.coords().into_iter().enumerate() {
        let amp = (model.gravity_potential(a) + extra).powf(-0.25);
        let s = action[i] / kappa;
        for &p in &phis {
            let base = p_phi * p / kappa;
            let z = Complex64::from_polar(cp, base - s) + Complex64::from_polar(cm, base + s);
            values.push(z * amp);
        }
    }
    let slice_norm = (values[..m].iter().map(|z| z.norm_sqr()).sum::<f64>() * pa.spacing()).sqrt();
    if !(slice_norm > 0.0) {
        return Err(Error::InvalidArgument("WKB state vanishes on the first slice".into()));
    }
    for z in &mut values {
        *z /= slice_norm;
    }
    let validity = aa.coords().into_iter().map(|a| validity_at(model, a, p_phi)).collect();
    Ok(WkbState { psi: WaveFunction::new(grid.clone(), values, 0.0)?, validity, action })
}

/// Guidance field for unit lapse: `α̇ = −κ e^{−3α} Im ∂_α log Ψ`,
/// `φ̇ = e^{−3α} Im ∂_φ log Ψ`, with the node policy of `guidance`.
fn unit_velocity(model: &MinisuperspaceModel, psi: &WaveFunction) -> Result<FlaggedVelocity> {
    model.validate()?;
    check_grid(psi.grid())?;
    let grid = psi.grid();
    let ga = grid::gradient(psi, 0);
    let gp = grid::gradient(psi, 1);
    let rho: Vec<f64> = psi.values().iter().map(|z| z.norm_sqr()).collect();
    let floor = NODE_FLOOR * rho.iter().cloned().fold(0.0, f64::max);
    let m = grid.axis(1).points;
    let aa = grid.axis(0);
    let mut va = Vec::with_capacity(grid.len());
    let mut vp = Vec::with_capacity(grid.len());
    let mut flagged = Vec::with_capacity(grid.len());
    for (k, z) in psi.values().iter().enumerate() {
        let e = (-3.0 * aa.coord(k / m)).exp();
        let ja = -model.kappa_eff * e * (z.conj() * ga[k]).im;
        let jp = e * (z.conj() * gp[k]).im;
        let r = rho[k];
        let below = r < floor;
        let w = if !below && r > 0.0 {
            1.0 / r
        } else if floor > 0.0 {
            r / (floor * floor)
        } else {
            0.0
        };
        va.push(ja * w);
        vp.push(jp * w);
        flagged.push(below);
    }
    Ok(FlaggedVelocity { field: VectorField::new(grid.clone(), vec![va, vp])?, flagged, floor })
}

/// Guidance field `N · G^{AB} Im ∂_B log Ψ` on the grid, with the lapse
/// evaluated at `τ = 0`.
pub fn bohmian_velocity(model: &MinisuperspaceModel, psi: &WaveFunction, lapse: &LapseFunction) -> Result<FlaggedVelocity> {
    lapse.validate()?;
    let mut v = unit_velocity(model, psi)?;
    let grid = v.field.grid().clone();
    let n: Vec<f64> = (0..grid.len())
        .map(|k| {
            let q = grid.point(k);
            lapse.evaluate(q[0], q[1], 0.0)
        })
        .collect();
    let comps = v.field.components().iter().map(|c| c.iter().zip(&n).map(|(x, n)| x * n).collect()).collect();
    v.field = VectorField::new(grid, comps)?;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosmoSample {
    pub tau: f64,
    pub alpha: f64,
    pub phi: f64,
    pub proper_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosmoTrajectory {
    pub samples: Vec<CosmoSample>,
    pub status: TrajectoryStatus,
}

impl CosmoTrajectory {
    /// `tau,alpha,phi,proper_time,status_flag`; the flag is set on the last
    /// row only.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,alpha,phi,proper_time,status_flag\n");
        let n = self.samples.len();
        for (i, s) in self.samples.iter().enumerate() {
            let flag = if i + 1 == n { self.status.flag() } else { 0 };
            out.push_str(&format!("{},{},{},{},{}\n", s.tau, s.alpha, s.phi, s.proper_time, flag));
        }
        out
    }

    pub fn proper_time_range(&self) -> (f64, f64) {
        let first = self.samples.first().map_or(0.0, |s| s.proper_time);
        let last = self.samples.last().map_or(0.0, |s| s.proper_time);
        (first, last)
    }

    /// `α` at proper time `t` by four-point Lagrange interpolation.
    pub fn alpha_at(&self, t: f64) -> Option<f64> {
        let ts: Vec<f64> = self.samples.iter().map(|s| s.proper_time).collect();
        let ys: Vec<f64> = self.samples.iter().map(|s| s.alpha).collect();
        lagrange4(&ts, &ys, t)
    }
}

fn lagrange4(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n < 4 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    let hi = xs.partition_point(|&v| v < x).clamp(2, n - 2);
    let lo = hi - 2;
    let mut acc = 0.0;
    for i in lo..lo + 4 {
        let mut w = 1.0;
        for j in lo..lo + 4 {
            if i != j {
                w *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += w * ys[i];
    }
    Some(acc)
}

/// Interpolated guidance for a fixed (timeless) `Ψ`; integrates the
/// configuration `(α, φ, T)` with `dT/dτ = N`.
#[derive(Debug, Clone)]
pub struct CosmoGuide {
    frame: Arc<Frame>,
    lapse: LapseFunction,
}

impl CosmoGuide {
    pub fn new(model: &MinisuperspaceModel, psi: &WaveFunction, lapse: LapseFunction) -> Result<Self> {
        lapse.validate()?;
        let v = unit_velocity(model, psi)?;
        Ok(CosmoGuide { frame: Arc::new(Frame::from_field(psi, &v)), lapse })
    }

    /// The same field under a different lapse.
    pub fn with_lapse(&self, lapse: LapseFunction) -> Result<Self> {
        lapse.validate()?;
        Ok(CosmoGuide { frame: Arc::clone(&self.frame), lapse })
    }

    pub fn integrate(&self, q0: (f64, f64), tau_span: (f64, f64), dtau: f64) -> Result<CosmoTrajectory> {
        let start = self.canonical(Configuration::new(&[q0.0, q0.1, 0.0]))?;
        self.velocity(tau_span.0, &start)?;
        let t = guidance::integrate_source(self, start, tau_span.0, tau_span.1, dtau, 1)?;
        let samples = t
            .samples
            .iter()
            .map(|(tau, q)| CosmoSample { tau: *tau, alpha: q[0], phi: q[1], proper_time: q[2] })
            .collect();
        Ok(CosmoTrajectory { samples, status: t.status })
    }
}

impl VelocitySource for CosmoGuide {
    fn velocity(&self, tau: f64, q: &Configuration) -> Result<Configuration> {
        let v = self.frame.velocity(&Configuration::new(&q.as_slice()[..2]))?;
        let n = self.lapse.evaluate(q[0], q[1], tau);
        Ok(Configuration::new(&[n * v[0], n * v[1], n]))
    }

    fn canonical(&self, q: Configuration) -> Result<Configuration> {
        let c = canonical_on(self.frame.grid(), Configuration::new(&q.as_slice()[..2]))?;
        Ok(Configuration::new(&[c[0], c[1], q[2]]))
    }
}

/// Bohmian trajectory in `Ψ` from `q0 = (α₀, φ₀)` over `τ_span`, recording
/// proper time `T = ∫ N dτ`.
pub fn integrate_cosmology(
    model: &MinisuperspaceModel,
    psi: &WaveFunction,
    lapse: &LapseFunction,
    q0: (f64, f64),
    tau_span: (f64, f64),
    dtau: f64,
) -> Result<CosmoTrajectory> {
    CosmoGuide::new(model, psi, lapse.clone())?.integrate(q0, tau_span, dtau)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub alpha: f64,
    pub phi: f64,
    pub p_alpha: f64,
    pub p_phi: f64,
}

impl PhaseSpacePoint {
    /// Solves the constraint for `p_α`; expanding means `α̇ > 0`, i.e.
    /// `p_α < 0`.
    pub fn on_shell(model: &MinisuperspaceModel, alpha: f64, phi: f64, p_phi: f64, expanding: bool) -> Result<Self> {
        let w = model.potential(alpha, phi) + p_phi * p_phi / model.kappa_eff;
        if w < 0.0 {
            return Err(Error::TurningPointInDomain { alpha });
        }
        let p = w.sqrt();
        Ok(PhaseSpacePoint { alpha, phi, p_alpha: if expanding { -p } else { p }, p_phi })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalRun {
    pub trajectory: CosmoTrajectory,
    pub momenta: Vec<(f64, f64)>,
    /// Largest change of the relative constraint along the run.
    pub max_constraint_drift: f64,
}

fn classical_rhs(model: &MinisuperspaceModel, lapse: &LapseFunction, tau: f64, z: &[f64; 5]) -> [f64; 5] {
    let [a, p, pa, pp, _] = *z;
    let k = model.kappa_eff;
    let n = lapse.evaluate(a, p, tau);
    let e = (-3.0 * a).exp();
    let (ua, up) = model.potential_gradient(a, p);
    let h = 0.5 * e * (-pa * pa + pp * pp / k + model.potential(a, p));
    [n * (-e * pa), n * (e * pp / k), n * (3.0 * h - 0.5 * e * ua), n * (-0.5 * e * up), n]
}

/// Classical canonical equations by RK4 on a fixed `dτ`.
pub fn classical_solution(
    model: &MinisuperspaceModel,
    initial: PhaseSpacePoint,
    lapse: &LapseFunction,
    tau_span: (f64, f64),
    dtau: f64,
) -> Result<ClassicalRun> {
    model.validate()?;
    lapse.validate()?;
    let c0 = model.constraint(&initial);
    if !(c0.abs() <= CONSTRAINT_TOLERANCE) {
        return Err(Error::ConstraintViolation { residual: c0 });
    }
    let (t0, t1) = tau_span;
    if !(t1 > t0) || !(dtau > 0.0) {
        return Err(Error::InvalidArgument("need tau1 > tau0 and dtau > 0".into()));
    }
    let steps = ((t1 - t0) / dtau).round().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut z = [initial.alpha, initial.phi, initial.p_alpha, initial.p_phi, 0.0];
    let sample = |tau: f64, z: &[f64; 5]| CosmoSample { tau, alpha: z[0], phi: z[1], proper_time: z[4] };
    let mut samples = vec![sample(t0, &z)];
    let mut momenta = vec![(z[2], z[3])];
    let mut drift: f64 = 0.0;
    let mut status = TrajectoryStatus::Completed;
    let add = |z: &[f64; 5], k: &[f64; 5], s: f64| {
        let mut o = *z;
        for d in 0..5 {
            o[d] += s * k[d];
        }
        o
    };
    for i in 0..steps {
        let tau = t0 + i as f64 * h;
        let k1 = classical_rhs(model, lapse, tau, &z);
        let k2 = classical_rhs(model, lapse, tau + 0.5 * h, &add(&z, &k1, 0.5 * h));
        let k3 = classical_rhs(model, lapse, tau + 0.5 * h, &add(&z, &k2, 0.5 * h));
        let k4 = classical_rhs(model, lapse, tau + h, &add(&z, &k3, h));
        for d in 0..5 {
            z[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
        }
        if z.iter().any(|v| !v.is_finite()) {
            status = TrajectoryStatus::NodeAbort;
            break;
        }
        let c = model.constraint(&PhaseSpacePoint { alpha: z[0], phi: z[1], p_alpha: z[2], p_phi: z[3] });
        drift = drift.max((c - c0).abs());
        samples.push(sample(t0 + (i + 1) as f64 * h, &z));
        momenta.push((z[2], z[3]));
    }
    Ok(ClassicalRun { trajectory: CosmoTrajectory { samples, status }, momenta, max_constraint_drift: drift })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LapseReport {
    pub lapse_1: LapseFunction,
    pub lapse_2: LapseFunction,
    /// `max |α₁(T) − α₂(T)|` over the shared proper-time range.
    pub d: f64,
    pub tol_equiv: f64,
    pub gauge_equivalent: bool,
    /// False when both lapses are constant: such a pair only checks the
    /// harness.
    pub certifiable: bool,
    pub overlap: (f64, f64),
    pub compared: usize,
}

/// Integrates under two lapses and compares `α` as a function of proper
/// time.
pub fn lapse_dependence_report(
    model: &MinisuperspaceModel,
    psi: &WaveFunction,
    lapse_1: &LapseFunction,
    lapse_2: &LapseFunction,
    q0: (f64, f64),
    tau_span: (f64, f64),
    dtau: f64,
) -> Result<LapseReport> {
    let g1 = CosmoGuide::new(model, psi, lapse_1.clone())?;
    let g2 = g1.with_lapse(lapse_2.clone())?;
    let r1 = g1.integrate(q0, tau_span, dtau)?;
    let r2 = g2.integrate(q0, tau_span, dtau)?;
    for r in [&r1, &r2] {
        if r.status != TrajectoryStatus::Completed {
            let time = r.samples.last().map_or(tau_span.0, |s| s.tau);
            return Err(match r.status {
                TrajectoryStatus::OutOfDomain => {
                    Error::OutOfDomain { axis: 0, value: r.samples.last().map_or(q0.0, |s| s.alpha) }
                }
                _ => Error::NodeEncounter { time },
            });
        }
    }
    let (a1, b1) = r1.proper_time_range();
    let (a2, b2) = r2.proper_time_range();
    let (lo, hi) = (a1.max(a2), b1.min(b2));
    let shorter = (b1 - a1).min(b2 - a2);
    if !(hi - lo >= 0.5 * shorter) {
        return Err(Error::InsufficientOverlap { overlap: hi - lo });
    }
    let mut d: f64 = 0.0;
    let mut compared = 0;
    for s in &r1.samples {
        if s.proper_time < lo || s.proper_time > hi {
            continue;
        }
        if let Some(a) = r2.alpha_at(s.proper_time) {
            d = d.max((s.alpha - a).abs());
            compared += 1;
        }
    }
    Ok(LapseReport {
        lapse_1: lapse_1.clone(),
        lapse_2: lapse_2.clone(),
        d,
        tol_equiv: TOL_EQUIV,
        gauge_equivalent: d < TOL_EQUIV,
        certifiable: !(lapse_1.is_constant() && lapse_2.is_constant()),
        overlap: (lo, hi),
        compared,
    })
}

/// Settings for the light-scalar run on a flat de Sitter background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiclassicalParams {
    pub kappa_eff: f64,
    pub lambda: f64,
    /// Matter frequency; `v = ω² φ²`.
    pub omega: f64,
    /// Where the trajectory starts.
    pub alpha_start: f64,
    pub efolds: f64,
    /// Grid padding in α on both sides of the trajectory.
    pub margin: f64,
    pub phi_points: usize,
    pub phi_half_length: f64,
    /// Centre of the initial matter packet (and of the trajectory).
    pub phi_shift: f64,
    /// Gravitational phase advance per α cell at the top of the grid.
    pub phase_step: f64,
    pub dtau: f64,
    pub stride: usize,
    pub tolerance: f64,
    /// Build the exact product ansatz instead of solving the constraint.
    pub product_ansatz: bool,
}

impl Default for SemiclassicalParams {
    fn default() -> Self {
        SemiclassicalParams {
            kappa_eff: 0.05,
            lambda: 3.0,
            omega: 0.25,
            alpha_start: 0.25,
            efolds: 1.0,
            margin: 0.1,
            phi_points: 256,
            phi_half_length: 8.0,
            phi_shift: 1.0,
            phase_step: 0.1,
            dtau: 1e-3,
            stride: 20,
            tolerance: 5e-2,
            product_ansatz: false,
        }
    }
}

impl SemiclassicalParams {
    pub fn model(&self) -> MinisuperspaceModel {
        MinisuperspaceModel {
            lambda: self.lambda,
            curvature: 0,
            matter_potential: MatterPotential::Harmonic { omega: self.omega },
            kappa_eff: self.kappa_eff,
            offset: 0.0,
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let model = self.model();
        model.validate()?;
        if !(self.efolds > 0.0) || !(self.margin > 0.0) || !(self.phase_step > 0.0) {
            return Err(Error::InvalidArgument("efolds, margin and phase_step must be positive".into()));
        }
        let lo = self.alpha_start - self.margin;
        let hi = self.alpha_start + self.efolds + self.margin;
        let rate = model.gravity_potential(hi).max(0.0).sqrt() / self.kappa_eff;
        let n = (((hi - lo) * rate / self.phase_step).ceil() as usize + 1).max(5);
        GridSpec::new(vec![
            Axis::reflecting(n, lo, hi),
            Axis::periodic(self.phi_points, -self.phi_half_length, self.phi_half_length),
        ])
    }
}

/// Matter Hamiltonian on the background: `½ e^{−3α} p² + ½ e^{3α} v(φ)`.
fn matter_apply(model: &MinisuperspaceModel, axis: &Axis, alpha: f64, chi: &[Complex64]) -> Vec<Complex64> {
    let k2 = squared_wavenumbers(axis);
    let mut lap = vec![Complex64::new(0.0, 0.0); chi.len()];
    phi_laplacian(chi, &k2, &mut lap);
    let (em, ep) = ((-3.0 * alpha).exp(), (3.0 * alpha).exp());
    chi.iter()
        .zip(&lap)
        .zip(axis.coords())
        .map(|((c, l), p)| -0.5 * em * l + 0.5 * ep * model.matter_potential.value(p) * c)
        .collect()
}

/// Strang step of the matter equation with the background frozen at `alpha`.
fn matter_step(model: &MinisuperspaceModel, axis: &Axis, alpha: f64, dt: f64, chi: &mut [Complex64]) {
    let n = chi.len();
    let ep = (3.0 * alpha).exp();
    let em = 1.0 / ep;
    let half: Vec<Complex64> = axis
        .coords()
        .iter()
        .map(|&p| Complex64::from_polar(1.0, -0.25 * dt * ep * model.matter_potential.value(p)))
        .collect();
    for (c, f) in chi.iter_mut().zip(&half) {
        *c *= f;
    }
    lines::forward(n).process(chi);
    let scale = 1.0 / n as f64;
    for (c, k) in chi.iter_mut().zip(axis.wavenumbers()) {
        *c *= Complex64::from_polar(scale, -0.5 * dt * em * k * k);
    }
    lines::inverse(n).process(chi);
    for (c, f) in chi.iter_mut().zip(&half) {
        *c *= f;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalPoint {
    pub proper_time: f64,
    pub alpha: f64,
    pub phi: f64,
    pub delta: f64,
    pub validity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalReport {
    pub kappa_eff: f64,
    pub points: Vec<SemiclassicalPoint>,
    pub max_delta: f64,
    pub tolerance: f64,
    pub validity_max: f64,
    /// Set when `κ` or the WKB validity ratio is out of range; the run is
    /// then reported, never passed.
    pub validity_violation: bool,
    /// Constraint residual of the solved `Ψ` (absent for the product ansatz).
    pub residual: Option<f64>,
    pub boundary_contaminated: bool,
    pub status: TrajectoryStatus,
    pub pass: bool,
}

/// Full Bohmian run for `(α, φ)` against the matter Schrödinger equation on
/// the classical background.
///
/// The reference `χ` is evolved in the background's proper time and compared
/// at equal scale factor: the conditional wave function `Ψ(α(T), ·)` at
/// trajectory time `T` is set against `χ` at the classical time when the
/// background reaches `α(T)`.
pub fn semiclassical_matter_report(p: &SemiclassicalParams) -> Result<SemiclassicalReport> {
    let model = p.model();
    let grid = p.grid()?;
    let (aa, pa) = (grid.axis(0).clone(), grid.axis(1).clone());
    let kappa = p.kappa_eff;
    let alphas = aa.coords();
    for &a in &alphas {
        if !(model.gravity_potential(a) > 0.0) {
            return Err(Error::TurningPointInDomain { alpha: a });
        }
    }
    let action = wkb_action(&model, &aa, 0.0)?;
    let clock = cumulative(&alphas, |a| (3.0 * a).exp() / model.gravity_potential(a).sqrt());
    let m0 = (3.0 * aa.lower).exp() * p.omega;
    let chi0: Vec<Complex64> = pa
        .coords()
        .iter()
        .map(|&x| Complex64::new((m0 / std::f64::consts::PI).powf(0.25) * (-0.5 * m0 * (x - p.phi_shift).powi(2)).exp(), 0.0))
        .collect();
    let mut reference = Vec::with_capacity(grid.len());
    let mut chi = chi0.clone();
    reference.extend_from_slice(&chi);
    for i in 1..alphas.len() {
        let mid = 0.5 * (alphas[i - 1] + alphas[i]);
        matter_step(&model, &pa, mid, clock[i] - clock[i - 1], &mut chi);
        reference.extend_from_slice(&chi);
    }
    let m = pa.points;
    let amp = |a: f64| model.gravity_potential(a).powf(-0.25);
    let carrier = |i: usize| Complex64::from_polar(amp(alphas[i]), -action[i] / kappa);
    let (psi, residual, boundary) = if p.product_ansatz {
        let values = reference.iter().enumerate().map(|(k, r)| carrier(k / m) * r).collect();
        (WaveFunction::new(grid.clone(), values, 0.0)?, None, false)
    } else {
        let a0 = aa.lower;
        let ug = model.gravity_potential(a0);
        let c0 = carrier(0);
        let log_d = Complex64::new(-model.gravity_potential_derivative(a0) / (4.0 * ug), -ug.sqrt() / kappa);
        let hchi = matter_apply(&model, &pa, a0, &chi0);
        let dt_da = (3.0 * a0).exp() / ug.sqrt();
        let psi0: Vec<Complex64> = chi0.iter().map(|c| c0 * c).collect();
        let dpsi0: Vec<Complex64> = psi0
            .iter()
            .zip(&hchi)
            .map(|(y, hc)| log_d * y + c0 * Complex64::new(0.0, -dt_da) * hc)
            .collect();
        let k2_max = squared_wavenumbers(&pa).into_iter().fold(0.0, f64::max);
        let u_max = alphas
            .iter()
            .flat_map(|&a| pa.coords().into_iter().map(move |x| (a, x)))
            .map(|(a, x)| model.potential(a, x).abs())
            .fold(0.0, f64::max);
        let omega_max = (k2_max / kappa + u_max / (kappa * kappa)).sqrt();
        let substeps = ((aa.spacing() * omega_max / 0.5).ceil() as usize).max(1);
        let sol = solve_wdw(&model, &grid, &psi0, &dpsi0, substeps)?;
        let r = wdw_residual(&model, &sol.psi)?;
        (sol.psi, Some(r), sol.boundary_contaminated)
    };
    let reference = WaveFunction::new(grid.clone(), reference, 0.0)?;
    let guide = CosmoGuide::new(&model, &psi, LapseFunction::Unit)?;
    let span = p.efolds / model.hubble();
    let traj = guide.integrate((p.alpha_start, p.phi_shift), (0.0, span), p.dtau)?;
    let stride = p.stride.max(1);
    let mut points = Vec::new();
    let n = traj.samples.len();
    for (i, s) in traj.samples.iter().enumerate() {
        if i % stride != 0 && i + 1 != n {
            continue;
        }
        let cond = slice(&psi, 0, s.alpha)?;
        let refr = slice(&reference, 0, s.alpha)?;
        points.push(SemiclassicalPoint {
            proper_time: s.proper_time,
            alpha: s.alpha,
            phi: s.phi,
            delta: gauge_distance(&cond, &refr)?,
            validity: validity_at(&model, s.alpha, 0.0),
        });
    }
    let max_delta = points.iter().map(|q| q.delta).fold(0.0, f64::max);
    let validity_max = points.iter().map(|q| q.validity).fold(0.0, f64::max);
    let validity_violation = kappa > VALIDITY_LIMIT || validity_max > VALIDITY_LIMIT;
    let pass = !validity_violation && traj.status == TrajectoryStatus::Completed && max_delta < p.tolerance;
    Ok(SemiclassicalReport {
        kappa_eff: kappa,
        points,
        max_delta,
        tolerance: p.tolerance,
        validity_max,
        validity_violation,
        residual,
        boundary_contaminated: boundary,
        status: traj.status,
        pass,
    })
}
