//! Phase-map reconstruction against a second emission line and under changes
//! of the reference fringe that must not matter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use wgmirror::inference::{fit_sinusoid, reconstruct_phase_map};
use wgmirror::synthlab::phase_of_voltage;

const COEFF: f64 = 11.0 * std::f64::consts::PI / 1200.0;

fn voltages(n: usize, v_max: f64) -> Vec<f64> {
    (0..n).map(|i| v_max * i as f64 / (n - 1) as f64).collect()
}

fn line(volts: &[f64], scale: f64, nu: f64, theta: f64) -> Vec<f64> {
    volts.iter().map(|v| scale * (1.0 + nu * (2.0 * COEFF * v * v + theta).cos())).collect()
}

fn noisy(mean: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    mean.iter().map(|&m| Poisson::new(m).unwrap().sample(rng)).collect()
}

#[test]
fn map_from_one_line_describes_another() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let volts = voltages(160, 14.0);
    let reference = noisy(&line(&volts, 2e5, 0.8, 0.3), &mut rng);
    let map = reconstruct_phase_map(&volts, &reference).unwrap();
    assert!(!map.reflection_ambiguous);

    let phases: Vec<f64> = volts.iter().map(|&v| phase_of_voltage(&map.calibration, v).unwrap()).collect();
    let other_mean = line(&volts, 3e3, 0.45, 2.0);
    let other = noisy(&other_mean, &mut rng);
    let sigmas: Vec<f64> = other.iter().map(|c| c.max(1.0).sqrt()).collect();
    let fit = fit_sinusoid(&phases, &other, Some(&sigmas)).unwrap();
    assert!(fit.goodness < 2.0, "chi2/dof = {}", fit.goodness);
    let nu = fit.get("nu").unwrap();
    assert!((nu - 0.45).abs() < 3.0 * fit.sigma("nu").unwrap() + 0.01, "nu = {nu}");
}

#[test]
fn map_ignores_scale_and_fringe_offset() {
    let volts = voltages(200, 14.0);
    let base = reconstruct_phase_map(&volts, &line(&volts, 1.0, 0.8, 0.5)).unwrap();
    let phase = |m: &wgmirror::inference::PhaseMap, v: f64| phase_of_voltage(&m.calibration, v).unwrap();

    // overall brightness cancels in the normalisation
    let scaled = reconstruct_phase_map(&volts, &line(&volts, 250.0, 0.8, 0.5)).unwrap();
    for &v in &volts {
        assert!((phase(&base, v) - phase(&scaled, v)).abs() < 1e-9);
    }

    // the gauge pins phi at the first voltage, so the fringe offset drops out
    for theta in [1.0, 2.2, 4.0, 5.5] {
        let shifted = reconstruct_phase_map(&volts, &line(&volts, 1.0, 0.6, theta)).unwrap();
        for &v in &volts {
            let d = phase(&base, v) - phase(&shifted, v);
            assert!(d.abs() < 0.03, "theta {theta}, V {v}: {d}");
            let truth = COEFF * v * v;
            assert!((phase(&shifted, v) - truth).abs() < 0.03, "theta {theta}, V {v}");
        }
    }
}
