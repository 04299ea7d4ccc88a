use num_complex::Complex64;
use pwl_core::conditional::{detect_branches, entangled_state, gauge_distance, gaussian_packet, CLUSTER_THRESHOLD};
use pwl_core::guidance::{integrate, superpose, Configuration, ParticleScenario, TrajectoryStatus};
use pwl_core::schrodinger::{stationary_states, EigenOptions, HamiltonianSpec, PotentialPreset};
use pwl_core::{Axis, GridSpec, WaveFunction};

fn oscillator() -> (HamiltonianSpec, WaveFunction, WaveFunction) {
    let g = GridSpec::line(Axis::periodic(256, -10.0, 10.0)).unwrap();
    let v = PotentialPreset::Harmonic { omega: 1.0, center: None }.field(&g, &[1.0]).unwrap();
    let h = HamiltonianSpec::new(vec![1.0], v).unwrap();
    let mut states = stationary_states(&h, 2, &EigenOptions::default()).unwrap();
    let (_, phi1) = states.pop().unwrap();
    let (_, phi0) = states.pop().unwrap();
    (h, phi0, phi1)
}

fn positions(s: &ParticleScenario, x0: f64, t1: f64, dt: f64) -> Vec<(f64, f64)> {
    let tr = integrate(s, Configuration::new(&[x0]), 0.0, t1, dt).unwrap();
    assert_eq!(tr.status, TrajectoryStatus::Completed);
    tr.samples.iter().map(|(t, q)| (*t, q.as_slice()[0])).collect()
}

/// Time of the first interior local maximum, refined by a parabola through
/// the three samples around it.
fn first_maximum_after(path: &[(f64, f64)], after: f64) -> f64 {
    let i = (1..path.len() - 1)
        .find(|&i| path[i].0 > after && path[i].1 >= path[i - 1].1 && path[i].1 > path[i + 1].1)
        .expect("maximum");
    let h = path[i].0 - path[i - 1].0;
    let (y0, y1, y2) = (path[i - 1].1, path[i].1, path[i + 1].1);
    path[i].0 + 0.5 * h * (y0 - y2) / (y0 - 2.0 * y1 + y2)
}

#[test]
fn superposition_trajectory_has_the_bohr_period() {
    let (h, phi0, phi1) = oscillator();
    let one = Complex64::new(1.0, 0.0);
    let psi = superpose(&phi0, one, &phi1, one).unwrap();
    let s = ParticleScenario { hamiltonian: h, initial: psi, dt: 0.01, stride: 1 };
    // x = 0.5 is a turning point of the motion at t = 0, so maxima recur
    // once per period.
    let coarse = positions(&s, 0.5, 8.0, 0.01);
    let fine = positions(&s, 0.5, 8.0, 0.01 / 16.0);
    let t_coarse = first_maximum_after(&coarse, 1.0);
    let t_fine = first_maximum_after(&fine, 1.0);
    let period = 2.0 * std::f64::consts::PI;
    assert!((t_coarse / t_fine - 1.0).abs() < 1e-2, "{t_coarse} vs {t_fine}");
    assert!((t_fine / period - 1.0).abs() < 1e-2, "{t_fine}");
}

#[test]
fn mirrored_start_gives_mirrored_trajectory() {
    let (h, _, _) = oscillator();
    // Two packets approaching each other: ψ(−x) = ψ(x), so v is odd.
    let axis = h.grid().axis(0).clone();
    let left = gaussian_packet(&axis, -2.0, 0.8, 1.0).unwrap();
    let right = gaussian_packet(&axis, 2.0, 0.8, -1.0).unwrap();
    let psi = superpose(&left, Complex64::new(1.0, 0.0), &right, Complex64::new(1.0, 0.0)).unwrap();
    let s = ParticleScenario { hamiltonian: h, initial: psi, dt: 0.01, stride: 10 };
    for x0 in [0.3, 1.1] {
        let a = positions(&s, x0, 3.0, 0.01);
        let b = positions(&s, -x0, 3.0, 0.01);
        for ((_, xa), (_, xb)) in a.iter().zip(&b) {
            assert!((xa + xb).abs() < 1e-8, "{xa} {xb}");
        }
    }
}

#[test]
fn square_product_grid_has_a_single_unit_branch() {
    let a = Axis::periodic(128, -16.0, 16.0);
    let psi = gaussian_packet(&a, -2.0, 0.7, 0.5).unwrap();
    let chi = gaussian_packet(&a, 1.0, 1.0, -0.3).unwrap();
    let big = entangled_state(&[(Complex64::new(0.0, 1.0), &psi, &chi)]).unwrap();
    let d = detect_branches(&big, CLUSTER_THRESHOLD).unwrap();
    assert_eq!(d.branches.len(), 1);
    let b = &d.branches[0];
    assert!((b.weight - 1.0).abs() < 1e-10, "{}", b.weight);
    assert!(gauge_distance(&b.x_state, &psi).unwrap() < 1e-10);
    assert!(gauge_distance(&b.y_packet, &chi).unwrap() < 1e-10);
}
