use std::f64::consts::PI;

use num_complex::Complex64;
use pwl_core::guidance::TrajectoryStatus;
use pwl_core::minisuperspace::*;
use pwl_core::{Axis, Error, GridSpec, WaveFunction};

fn grid(n_alpha: usize, lo: f64, hi: f64, n_phi: usize) -> GridSpec {
    GridSpec::new(vec![Axis::reflecting(n_alpha, lo, hi), Axis::periodic(n_phi, -PI, PI)]).unwrap()
}

fn empty_model() -> MinisuperspaceModel {
    MinisuperspaceModel { lambda: 0.0, curvature: 0, matter_potential: MatterPotential::None, kappa_eff: 1.0, offset: 0.0 }
}

fn row(psi: &WaveFunction, i: usize) -> &[Complex64] {
    let m = psi.grid().axis(1).points;
    &psi.values()[i * m..(i + 1) * m]
}

#[test]
fn massless_plane_wave_moves_along_the_characteristic() {
    let g = grid(201, 0.0, 2.0, 32);
    let k = 3.0;
    let phis = g.axis(1).coords();
    let psi0: Vec<Complex64> = phis.iter().map(|&p| Complex64::from_polar(1.0, k * p)).collect();
    let dpsi0: Vec<Complex64> = psi0.iter().map(|z| z * Complex64::new(0.0, k)).collect();
    let model = empty_model();
    assert!(model.is_trivial());
    let sol = solve_wdw(&model, &g, &psi0, &dpsi0, 4).unwrap();
    let mut worst: f64 = 0.0;
    for (flat, z) in sol.psi.values().iter().enumerate() {
        let q = g.point(flat);
        worst = worst.max((z - Complex64::from_polar(1.0, k * (q[1] + q[0]))).norm());
    }
    assert!(worst < 1e-8, "{worst:e}");
    assert!(wdw_residual(&model, &sol.psi).unwrap() < 1e-4);
}

#[test]
fn constant_potential_gives_massive_dispersion() {
    let m2 = 2.5;
    let model = MinisuperspaceModel { offset: m2, ..empty_model() };
    let g = grid(401, 0.0, 4.0, 16);
    let phis = g.axis(1).coords();
    for k in [0.0, 1.0, 3.0] {
        let omega = (k * k + m2).sqrt();
        let psi0: Vec<Complex64> = phis.iter().map(|&p| Complex64::from_polar(1.0, k * p)).collect();
        let dpsi0: Vec<Complex64> = psi0.iter().map(|z| z * Complex64::new(0.0, omega)).collect();
        let sol = solve_wdw(&model, &g, &psi0, &dpsi0, 2).unwrap();
        let j = 5;
        let mut phase = 0.0;
        for i in 1..g.axis(0).points {
            phase += (row(&sol.psi, i)[j] / row(&sol.psi, i - 1)[j]).arg();
        }
        let measured = phase / g.axis(0).length();
        assert!((measured / omega - 1.0).abs() < 1e-4, "k {k}: {measured} vs {omega}");
    }
}

#[test]
fn stiffness_is_rejected() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let g = grid(11, 0.0, 3.0, 8);
    let ones = vec![Complex64::new(1.0, 0.0); 8];
    assert!(matches!(solve_wdw(&model, &g, &ones, &ones, 1), Err(Error::StiffnessFailure { .. })));
}

/// `s(α) = ∫ √(c e^{6α} + q²) dα` by RK4 on a fine step; for a quadrature
/// RK4 reduces to Simpson's rule.
fn action_oracle(c: f64, q2: f64, k: f64, a0: f64, a1: f64) -> f64 {
    let f = |a: f64| (c * (6.0 * a).exp() + q2 - k * (4.0 * a).exp()).sqrt();
    let n = 200_000;
    let h = (a1 - a0) / n as f64;
    (0..n).map(|i| {
        let a = a0 + i as f64 * h;
        h / 6.0 * (f(a) + 4.0 * f(a + 0.5 * h) + f(a + h))
    })
    .sum()
}

#[test]
fn de_sitter_action_matches_ode_oracle() {
    let g = grid(65, -0.5, 1.5, 8);
    for (lambda, kappa, p_phi) in [(3.0, 1.0, 0.0), (3.0, 0.5, 1.0), (0.6, 1.0, 2.0)] {
        let model = MinisuperspaceModel::de_sitter(lambda, kappa);
        let action = wkb_action(&model, g.axis(0), p_phi).unwrap();
        let nodes = g.axis(0).coords();
        for i in [1, 20, 64] {
            let oracle = action_oracle(lambda / 3.0, p_phi * p_phi / kappa, 0.0, nodes[0], nodes[i]);
            assert!((action[i] - oracle).abs() < 1e-10 * oracle.abs().max(1.0), "{lambda} {p_phi}: {} vs {oracle}", action[i]);
        }
    }
    // Closed universe: quadrature path.
    let model = MinisuperspaceModel { curvature: 1, ..MinisuperspaceModel::de_sitter(3.0, 1.0) };
    let g = grid(257, 0.1, 1.0, 8);
    let action = wkb_action(&model, g.axis(0), 0.0).unwrap();
    let oracle = action_oracle(1.0, 0.0, 1.0, 0.1, 1.0);
    assert!((action[256] - oracle).abs() < 1e-10 * oracle);
}

#[test]
fn turning_point_inside_grid_is_an_error() {
    let model = MinisuperspaceModel { curvature: 1, ..MinisuperspaceModel::de_sitter(3.0, 1.0) };
    let g = grid(65, -0.5, 1.0, 8);
    assert!(matches!(construct_wkb(&model, &g, WkbBranch::Expanding, 0.0), Err(Error::TurningPointInDomain { .. })));
}

#[test]
fn wkb_without_potential_is_a_plane_wave() {
    let g = grid(33, 0.0, 1.0, 16);
    let k = 2.0;
    let w = construct_wkb(&empty_model(), &g, WkbBranch::Contracting, k).unwrap();
    let c = w.psi.values()[0] / Complex64::from_polar(1.0, k * g.point(0)[1]);
    for (flat, z) in w.psi.values().iter().enumerate() {
        let q = g.point(flat);
        assert!((z - c * Complex64::from_polar(1.0, k * (q[0] + q[1]) - k * g.axis(0).lower)).norm() < 1e-12);
    }
    assert!(w.max_validity() < 1e-12);
}

#[test]
fn superposition_is_the_sum_of_branches() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let g = grid(101, 0.3, 1.3, 8);
    let e = construct_wkb(&model, &g, WkbBranch::Expanding, 0.0).unwrap().psi;
    let c = construct_wkb(&model, &g, WkbBranch::Contracting, 0.0).unwrap().psi;
    let s = construct_wkb(&model, &g, WkbBranch::Superposition { expanding: 1.0, contracting: 1.0 }, 0.0).unwrap().psi;
    let sum = e.combine(Complex64::new(1.0, 0.0), &c, Complex64::new(1.0, 0.0)).unwrap();
    let ratio = s.values()[0] / sum.values()[0];
    for (a, b) in s.values().iter().zip(sum.values()) {
        assert!((a - ratio * b).norm() < 1e-12);
    }
    let slice: f64 = row(&s, 0).iter().map(|z| z.norm_sqr()).sum::<f64>() * g.axis(1).spacing();
    assert!((slice - 1.0).abs() < 1e-12);
}

#[test]
fn wkb_data_reproduces_itself_under_the_constraint() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let g = grid(20_001, 1.2, 2.2, 8);
    let w = construct_wkb(&model, &g, WkbBranch::Expanding, 0.0).unwrap();
    assert!(w.max_validity() < VALIDITY_LIMIT);
    let a0 = g.axis(0).lower;
    // ∂_α(W^{−1/4} e^{−is}) = (−W'/4W − i√W) Ψ with W = e^{6α}.
    let factor = Complex64::new(-1.5, -(3.0 * a0).exp());
    let psi0 = row(&w.psi, 0).to_vec();
    let dpsi0: Vec<Complex64> = psi0.iter().map(|z| z * factor).collect();
    let sol = solve_wdw(&model, &g, &psi0, &dpsi0, 1).unwrap();
    let mut worst: f64 = 0.0;
    for i in (0..g.axis(0).points).step_by(500) {
        let (a, b) = (row(&sol.psi, i), row(&w.psi, i));
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
        let norm: f64 = b.iter().map(|y| y.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    assert!(worst < 1e-2, "{worst:e}");
    assert!(wdw_residual(&model, &sol.psi).unwrap() < 1e-4);
}

#[test]
fn wkb_velocity_is_the_classical_flow() {
    let kappa = 0.5;
    let model = MinisuperspaceModel::de_sitter(3.0, kappa);
    let g = grid(1601, 0.2, 1.0, 16);
    let p_phi = 1.0;
    let w = construct_wkb(&model, &g, WkbBranch::Expanding, p_phi).unwrap();
    let v = bohmian_velocity(&model, &w.psi, &LapseFunction::Unit).unwrap();
    let m = g.axis(1).points;
    let mut worst: f64 = 0.0;
    for flat in 4 * m..g.len() - 4 * m {
        let a = g.point(flat)[0];
        let e = (-3.0 * a).exp();
        let s_alpha = ((6.0 * a).exp() + p_phi * p_phi / kappa).sqrt();
        let expect = [e * s_alpha, e * p_phi / kappa];
        for d in 0..2 {
            let got = v.field.component(d)[flat];
            worst = worst.max((got - expect[d]).abs() / expect[d].abs());
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
    assert!(v.flagged.iter().all(|f| !f));
}

#[test]
fn velocity_is_linear_in_the_lapse() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let g = grid(201, 0.2, 1.0, 16);
    let w = construct_wkb(&model, &g, WkbBranch::Superposition { expanding: 1.0, contracting: 0.4 }, 1.0).unwrap();
    let unit = bohmian_velocity(&model, &w.psi, &LapseFunction::Unit).unwrap();
    let double = bohmian_velocity(&model, &w.psi, &LapseFunction::Scaled { factor: 2.0 }).unwrap();
    let tanh = bohmian_velocity(&model, &w.psi, &LapseFunction::TanhPhi { amplitude: 0.5 }).unwrap();
    for d in 0..2 {
        for (k, &u) in unit.field.component(d).iter().enumerate() {
            assert_eq!(double.field.component(d)[k], 2.0 * u);
            let n = 1.0 + 0.5 * g.point(k)[1].tanh();
            assert_eq!(tanh.field.component(d)[k], n * u);
        }
    }
    assert!(LapseFunction::TanhPhi { amplitude: 1.0 }.validate().is_err());
    assert!(LapseFunction::Scaled { factor: 0.0 }.validate().is_err());
}

#[test]
fn real_wave_function_gives_a_static_universe() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let g = grid(101, 0.0, 1.0, 16);
    let psi = WaveFunction::from_fn(g, 0.0, |q| Complex64::new((-(q[0] - 0.5).powi(2) - 0.3 * q[1] * q[1]).exp(), 0.0)).unwrap();
    let v = bohmian_velocity(&model, &psi, &LapseFunction::Unit).unwrap();
    // Zero up to the roundoff of the spectral φ derivative.
    assert!(v.field.components().iter().flatten().all(|x| x.abs() < 1e-12));
    let tr = integrate_cosmology(&model, &psi, &LapseFunction::TanhPhi { amplitude: 0.3 }, (0.4, 0.2), (0.0, 1.0), 0.05).unwrap();
    assert_eq!(tr.status, TrajectoryStatus::Completed);
    for s in &tr.samples {
        assert!((s.alpha - 0.4).abs() < 1e-12 && (s.phi - 0.2).abs() < 1e-12);
    }
    let n = 1.0 + 0.3 * 0.2f64.tanh();
    assert!((tr.samples.last().unwrap().proper_time - n).abs() < 1e-12);
}

#[test]
fn classical_de_sitter_grows_exponentially() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let z = PhaseSpacePoint::on_shell(&model, 0.1, 0.0, 0.0, true).unwrap();
    let run = classical_solution(&model, z, &LapseFunction::TanhPhi { amplitude: 0.0 }, (0.0, 2.0), 1e-3).unwrap();
    assert!(run.max_constraint_drift < 1e-6);
    let h = model.hubble();
    for s in &run.trajectory.samples {
        let exact = 0.1 + h * s.proper_time;
        assert!(((s.alpha - exact).exp() - 1.0).abs() < 1e-6);
    }
    let bad = PhaseSpacePoint { p_alpha: 0.0, ..z };
    assert!(matches!(
        classical_solution(&model, bad, &LapseFunction::Unit, (0.0, 1.0), 1e-2),
        Err(Error::ConstraintViolation { .. })
    ));
}

#[test]
fn closed_de_sitter_bounces_at_the_throat() {
    let lambda = 3.0;
    let model = MinisuperspaceModel { curvature: 1, ..MinisuperspaceModel::de_sitter(lambda, 1.0) };
    let z = PhaseSpacePoint::on_shell(&model, 0.5, 0.0, 0.0, false).unwrap();
    let run = classical_solution(&model, z, &LapseFunction::Unit, (0.0, 3.0), 1e-3).unwrap();
    assert!(run.max_constraint_drift < 1e-6, "{:e}", run.max_constraint_drift);
    let s = &run.trajectory.samples;
    let i = (1..s.len() - 1).min_by(|&a, &b| s[a].alpha.total_cmp(&s[b].alpha)).unwrap();
    assert!(i > 1 && i < s.len() - 2, "no interior minimum");
    // Vertex of the parabola through the three samples around the minimum.
    let (y0, y1, y2) = (s[i - 1].alpha, s[i].alpha, s[i + 1].alpha);
    let alpha_min = y1 - (y2 - y0).powi(2) / (8.0 * (y2 - 2.0 * y1 + y0));
    let a_min = alpha_min.exp();
    assert!((a_min - (3.0 / lambda).sqrt()).abs() < 1e-4, "{a_min}");
}

#[test]
fn zero_momenta_at_an_extremum_are_static() {
    let model = MinisuperspaceModel {
        matter_potential: MatterPotential::Harmonic { omega: 1.0 },
        ..empty_model()
    };
    let z = PhaseSpacePoint::on_shell(&model, 0.3, 0.0, 0.0, true).unwrap();
    assert_eq!(z.p_alpha, 0.0);
    let run = classical_solution(&model, z, &LapseFunction::Unit, (0.0, 1.0), 0.1).unwrap();
    for s in &run.trajectory.samples {
        assert_eq!((s.alpha, s.phi), (0.3, 0.0));
    }
}

#[test]
fn constant_rescaling_is_a_pure_reparametrization() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let g = grid(4097, 0.2, 1.6, 8);
    let w = construct_wkb(&model, &g, WkbBranch::Superposition { expanding: 1.0, contracting: 0.5 }, 0.0).unwrap();
    let r = lapse_dependence_report(
        &model,
        &w.psi,
        &LapseFunction::Unit,
        &LapseFunction::Scaled { factor: 0.5 },
        (0.3, 0.0),
        (0.0, 0.6),
        1e-3,
    )
    .unwrap();
    assert!(r.d < 1e-2, "{}", r.d);
    assert!(!r.certifiable);
    assert!(r.compared > 10);
}

#[test]
fn single_branch_geometry_does_not_depend_on_lapse() {
    let model = MinisuperspaceModel::de_sitter(3.0, 1.0);
    let g = grid(4097, 0.2, 1.6, 16);
    let w = construct_wkb(&model, &g, WkbBranch::Expanding, 1.0).unwrap();
    let r = lapse_dependence_report(
        &model,
        &w.psi,
        &LapseFunction::Unit,
        &LapseFunction::TanhPhi { amplitude: 0.5 },
        (0.3, 0.5),
        (0.0, 0.8),
        1e-3,
    )
    .unwrap();
    assert!(r.certifiable);
    assert!(r.gauge_equivalent && r.d < 1e-2, "{}", r.d);
}

#[test]
fn product_ansatz_matches_the_matter_equation() {
    let p = SemiclassicalParams { product_ansatz: true, ..SemiclassicalParams::default() };
    let r = semiclassical_matter_report(&p).unwrap();
    assert!(r.max_delta < 1e-6, "{:e}", r.max_delta);
    assert!(!r.validity_violation);
}

#[test]
fn strong_coupling_is_flagged_not_passed() {
    let p = SemiclassicalParams { kappa_eff: 0.5, product_ansatz: true, ..SemiclassicalParams::default() };
    let r = semiclassical_matter_report(&p).unwrap();
    assert!(r.validity_violation);
    assert!(!r.pass);
}
