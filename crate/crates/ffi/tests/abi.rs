use std::ffi::CStr;
use std::ptr;

use wgmirror::emission::{self, Dipole, EmitterScene, LeakyModel};
use wgmirror::inference;
use wgmirror::modesolver::{self, WaveguideGeometry};
use wgmirror::opticalstack::{self, PhotonicCrystalSpec};
use wgmirror_ffi::*;

fn geometry() -> WgmGeometry {
    let g = WaveguideGeometry::default();
    WgmGeometry {
        width_nm: g.width_nm,
        thickness_nm: g.thickness_nm,
        core_index: g.core_index,
        clad_index: g.clad_index,
        wavelength_nm: g.wavelength_nm,
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(wgm_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn mode_handle_matches_the_library() {
    let reference = modesolver::solve_te0(&WaveguideGeometry::default(), 128).unwrap();
    let mut mode: *mut WgmMode = ptr::null_mut();
    let g = geometry();
    assert_eq!(unsafe { wgm_mode_solve(&g, 128, &mut mode) }, WgmStatus::Ok);
    assert!(!mode.is_null());

    let (mut n_eff, mut k) = (0.0, 0.0);
    assert_eq!(unsafe { wgm_mode_index(mode, &mut n_eff, &mut k) }, WgmStatus::Ok);
    assert_eq!(n_eff, reference.n_eff);
    assert_eq!(k, reference.k);

    let n = unsafe { wgm_mode_len(mode) };
    assert_eq!(n, reference.grid.len());
    let (mut y, mut ex, mut ey) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let short = unsafe { wgm_mode_profile(mode, y.as_mut_ptr(), ex.as_mut_ptr(), ey.as_mut_ptr(), n - 1) };
    assert_eq!(short, WgmStatus::BufferTooSmall);
    let ok = unsafe { wgm_mode_profile(mode, y.as_mut_ptr(), ex.as_mut_ptr(), ey.as_mut_ptr(), n) };
    assert_eq!(ok, WgmStatus::Ok);
    assert_eq!(y, reference.grid);
    assert_eq!(ey, reference.e_y);

    let (mut wx, mut wy) = (0.0, 0.0);
    assert_eq!(unsafe { wgm_mode_weights(mode, 60.0, &mut wx, &mut wy) }, WgmStatus::Ok);
    assert_eq!((wx, wy), reference.weights(60.0).unwrap());
    assert_eq!(unsafe { wgm_mode_weights(mode, 1e6, &mut wx, &mut wy) }, WgmStatus::OutOfRange);

    unsafe { wgm_mode_free(mode) };
    unsafe { wgm_mode_free(ptr::null_mut()) };
}

#[test]
fn unguided_geometry_reports_no_bound_mode() {
    let mut g = geometry();
    g.width_nm = 50.0;
    // a non-null sentinel that the call must reset
    let mut mode: *mut WgmMode = ptr::NonNull::dangling().as_ptr();
    assert_eq!(unsafe { wgm_mode_solve(&g, 256, &mut mode) }, WgmStatus::NoBoundMode);
    assert!(mode.is_null());
    assert!(last_error().contains("no bound mode"));
}

#[test]
fn null_pointers_are_rejected() {
    let mut mode: *mut WgmMode = ptr::null_mut();
    assert_eq!(unsafe { wgm_mode_solve(ptr::null(), 128, &mut mode) }, WgmStatus::NullPointer);
    assert_eq!(unsafe { wgm_visibility_intensity(0.5, ptr::null_mut()) }, WgmStatus::NullPointer);
    let mut out = WgmSinusoidFit::default();
    assert_eq!(
        unsafe { wgm_fit_sinusoid(ptr::null(), ptr::null(), ptr::null(), 8, &mut out) },
        WgmStatus::NullPointer
    );
}

#[test]
fn scalar_functions_agree_with_the_library() {
    let mut v = 0.0;
    assert_eq!(unsafe { wgm_visibility_intensity(0.6, &mut v) }, WgmStatus::Ok);
    assert_eq!(v, emission::visibility_intensity(0.6).unwrap());
    assert_eq!(unsafe { wgm_visibility_intensity(1.5, &mut v) }, WgmStatus::ReflectivityOutOfRange);

    assert_eq!(unsafe { wgm_visibility_intensity_mixed(0.6, 0.2, 0.8, &mut v) }, WgmStatus::Ok);
    assert_eq!(v, emission::visibility_intensity_mixed(0.6, (0.2, 0.8)).unwrap());
    assert_eq!(unsafe { wgm_visibility_intensity_mixed(0.6, 0.0, 0.0, &mut v) }, WgmStatus::ZeroField);

    assert_eq!(unsafe { wgm_r_t_lower_bound(0.67, &mut v) }, WgmStatus::Ok);
    assert_eq!(v, inference::r_t_lower_bound(0.67).unwrap());

    let scene = WgmScene {
        y0_nm: 40.0,
        mirror_distance_nm: 30_000.0,
        k: 0.02,
        gamma_x0: 0.3,
        gamma_y0: 0.9,
        gamma_b: 0.1,
        gamma_nrad: 0.1,
        leaky: WgmLeakyModel::EqualTotal,
    };
    let lib_scene = EmitterScene {
        y0_nm: 40.0,
        mirror_distance_nm: 30_000.0,
        k: 0.02,
        gamma_x0: 0.3,
        gamma_y0: 0.9,
        gamma_b: 0.1,
        gamma_nrad: 0.1,
        leaky: LeakyModel::EqualTotal,
        dipole_moment: None,
    };
    for (d, ld) in [
        (WgmDipole::X, Dipole::X),
        (WgmDipole::Y, Dipole::Y),
        (WgmDipole::AveragedBoth, Dipole::AveragedBoth),
    ] {
        assert_eq!(unsafe { wgm_decay_rate(&scene, 0.6, 0.4, d, &mut v) }, WgmStatus::Ok);
        assert_eq!(v, emission::decay_rate(&lib_scene, 0.6, 0.4, ld).unwrap());
    }
    assert_eq!(unsafe { wgm_visibility_rate(&scene, 0.6, &mut v) }, WgmStatus::Ok);
    assert_eq!(v, emission::scene_visibility_rate(&lib_scene, 0.6).unwrap());

    let mut bad = scene;
    bad.gamma_b = -1.0;
    assert_eq!(unsafe { wgm_decay_rate(&bad, 0.6, 0.4, WgmDipole::Y, &mut v) }, WgmStatus::InvalidParameter);
}

#[test]
fn tmm_reflectivity_agrees_with_the_library() {
    let s = PhotonicCrystalSpec::default();
    let spec = WgmPhotonicCrystal {
        n_holes: s.n_holes,
        pitch_nm: s.pitch_nm,
        hole_radius_nm: s.hole_radius_nm,
        n_unetched: s.n_unetched,
        n_hole: s.n_hole,
        termination_index: s.termination_index,
    };
    let (mut re, mut im) = (0.0, 0.0);
    assert_eq!(unsafe { wgm_tmm_reflectivity(&spec, 950.0, &mut re, &mut im) }, WgmStatus::Ok);
    let r = opticalstack::tmm_reflectivity(&s, 950.0).unwrap();
    assert_eq!((re, im), (r.re, r.im));
    assert!(re * re + im * im > 0.9);
}

#[test]
fn sinusoid_fit_recovers_visibility() {
    let n = 24;
    let phases: Vec<f64> = (0..n).map(|i| std::f64::consts::PI * i as f64 / n as f64).collect();
    let values: Vec<f64> = phases.iter().map(|p| 10.0 + 4.0 * (2.0 * p + 0.7).cos()).collect();
    let mut fit = WgmSinusoidFit::default();
    let s = unsafe { wgm_fit_sinusoid(phases.as_ptr(), values.as_ptr(), ptr::null(), n, &mut fit) };
    assert_eq!(s, WgmStatus::Ok);
    assert!((fit.nu - 0.4).abs() < 1e-10);
    assert!((fit.theta - 0.7).abs() < 1e-10);
    assert!(!fit.theta_undefined);

    let s = unsafe { wgm_fit_sinusoid(phases.as_ptr(), values.as_ptr(), ptr::null(), 4, &mut fit) };
    assert_eq!(s, WgmStatus::InsufficientPhaseSpan);
}

#[test]
fn biexponential_fit_recovers_noiseless_rates() {
    let t: Vec<f64> = (0..400).map(|i| 0.05 * i as f64 + 0.025).collect();
    let c: Vec<f64> = t.iter().map(|t| 5000.0 * (-1.2 * t).exp() + 300.0 * (-0.1 * t).exp() + 2.0).collect();
    let mut fit = WgmBiexpFit::default();
    let s = unsafe { wgm_fit_biexponential(t.as_ptr(), c.as_ptr(), t.len(), &mut fit) };
    assert_eq!(s, WgmStatus::Ok, "{}", last_error());
    assert!(fit.converged);
    assert!((fit.gamma_f - 1.2).abs() < 1e-6);
    assert!((fit.gamma_s - 0.1).abs() < 1e-6);
    assert!((fit.gamma_rad - 1.1).abs() < 1e-6);
}

#[test]
fn phase_map_handle_round_trips() {
    let v: Vec<f64> = (0..300).map(|i| 14.0 * i as f64 / 299.0).collect();
    let coeff = 11.0 * std::f64::consts::PI / 1200.0;
    let intensity: Vec<f64> = v.iter().map(|v| 1.0 + 0.8 * (2.0 * coeff * v * v).cos()).collect();
    let mut map: *mut WgmPhaseMap = ptr::null_mut();
    let s = unsafe { wgm_phase_map_reconstruct(v.as_ptr(), intensity.as_ptr(), v.len(), &mut map) };
    assert_eq!(s, WgmStatus::Ok, "{}", last_error());
    let (mut fringes, mut ambiguous) = (0.0, true);
    assert_eq!(unsafe { wgm_phase_map_info(map, &mut fringes, &mut ambiguous) }, WgmStatus::Ok);
    assert!(fringes > 1.5);
    assert!(!ambiguous);
    let mut phi = 0.0;
    assert_eq!(unsafe { wgm_phase_map_phase(map, 7.0, &mut phi) }, WgmStatus::Ok);
    assert!((phi - coeff * 49.0).abs() < 0.02, "phi = {phi}");
    assert_eq!(unsafe { wgm_phase_map_phase(map, 15.0, &mut phi) }, WgmStatus::OutOfCalibration);
    unsafe { wgm_phase_map_free(map) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(wgm_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
