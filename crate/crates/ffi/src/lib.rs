//! C ABI over the `wgmirror` library.
//!
//! Every fallible entry point returns a [`WgmStatus`] and writes its results
//! through out-pointers. On failure the message of the last error on the
//! calling thread is available from [`wgm_last_error`]. Heavy objects (a solved
//! guided mode, a reconstructed phase map) are handed out as opaque pointers
//! that must be released with their matching `*_free` function.
//!
//! Panics never cross the boundary; they are reported as
//! [`WgmStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use wgmirror::emission::{self, Dipole, EmitterScene, LeakyModel};
use wgmirror::inference::{self, FitResult};
use wgmirror::modesolver::{self, ModeProfile, WaveguideGeometry};
use wgmirror::opticalstack::{self, PhotonicCrystalSpec};
use wgmirror::synthlab::{self, PhaseCalibration};
use wgmirror::Error;

/// Result code of every fallible call. `WGM_STATUS_OK` is zero.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WgmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    NoBoundMode = 3,
    GridTooCoarse = 4,
    OutOfRange = 5,
    SingularMatrix = 6,
    ReflectivityOutOfRange = 7,
    ZeroField = 8,
    DegenerateRates = 9,
    OutOfCalibration = 10,
    NonIdentifiable = 11,
    NotConverged = 12,
    InsufficientPhaseSpan = 13,
    InsufficientFringes = 14,
    BranchAmbiguity = 15,
    EmptyFeasibleSet = 16,
    MalformedRow = 17,
    BufferTooSmall = 18,
    Internal = 99,
}

impl From<&Error> for WgmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) => WgmStatus::InvalidParameter,
            Error::NoBoundMode(_) => WgmStatus::NoBoundMode,
            Error::GridTooCoarse(_) => WgmStatus::GridTooCoarse,
            Error::OutOfRange { .. } => WgmStatus::OutOfRange,
            Error::SingularMatrix(_) => WgmStatus::SingularMatrix,
            Error::ReflectivityOutOfRange(_) => WgmStatus::ReflectivityOutOfRange,
            Error::ZeroField => WgmStatus::ZeroField,
            Error::DegenerateRates => WgmStatus::DegenerateRates,
            Error::OutOfCalibration { .. } => WgmStatus::OutOfCalibration,
            Error::NonIdentifiable(_) => WgmStatus::NonIdentifiable,
            Error::NotConverged(_) => WgmStatus::NotConverged,
            Error::InsufficientPhaseSpan(_) => WgmStatus::InsufficientPhaseSpan,
            Error::InsufficientFringes(_) => WgmStatus::InsufficientFringes,
            Error::BranchAmbiguity(_) => WgmStatus::BranchAmbiguity,
            Error::EmptyFeasibleSet => WgmStatus::EmptyFeasibleSet,
            Error::MalformedRow { .. } => WgmStatus::MalformedRow,
        }
    }
}

/// Dipole selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WgmDipole {
    X = 0,
    Y = 1,
    AveragedBoth = 2,
}

impl From<WgmDipole> for Dipole {
    fn from(d: WgmDipole) -> Self {
        match d {
            WgmDipole::X => Dipole::X,
            WgmDipole::Y => Dipole::Y,
            WgmDipole::AveragedBoth => Dipole::AveragedBoth,
        }
    }
}

/// Leaky-rate split between the two dipoles.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WgmLeakyModel {
    Shared = 0,
    EqualTotal = 1,
}

impl From<WgmLeakyModel> for LeakyModel {
    fn from(l: WgmLeakyModel) -> Self {
        match l {
            WgmLeakyModel::Shared => LeakyModel::Shared,
            WgmLeakyModel::EqualTotal => LeakyModel::EqualTotal,
        }
    }
}

/// Rectangular ridge waveguide. Lengths in nm.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WgmGeometry {
    pub width_nm: f64,
    pub thickness_nm: f64,
    pub core_index: f64,
    pub clad_index: f64,
    pub wavelength_nm: f64,
}

impl From<&WgmGeometry> for WaveguideGeometry {
    fn from(g: &WgmGeometry) -> Self {
        WaveguideGeometry {
            width_nm: g.width_nm,
            thickness_nm: g.thickness_nm,
            core_index: g.core_index,
            clad_index: g.clad_index,
            wavelength_nm: g.wavelength_nm,
        }
    }
}

/// Emitter position and rates. `k` is the guided propagation constant in rad/nm.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WgmScene {
    pub y0_nm: f64,
    pub mirror_distance_nm: f64,
    pub k: f64,
    pub gamma_x0: f64,
    pub gamma_y0: f64,
    pub gamma_b: f64,
    pub gamma_nrad: f64,
    pub leaky: WgmLeakyModel,
}

impl From<&WgmScene> for EmitterScene {
    fn from(s: &WgmScene) -> Self {
        EmitterScene {
            y0_nm: s.y0_nm,
            mirror_distance_nm: s.mirror_distance_nm,
            k: s.k,
            gamma_x0: s.gamma_x0,
            gamma_y0: s.gamma_y0,
            gamma_b: s.gamma_b,
            gamma_nrad: s.gamma_nrad,
            leaky: s.leaky.into(),
            dipole_moment: None,
        }
    }
}

/// Periodic hole mirror.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct WgmPhotonicCrystal {
    pub n_holes: usize,
    pub pitch_nm: f64,
    pub hole_radius_nm: f64,
    pub n_unetched: f64,
    pub n_hole: f64,
    pub termination_index: f64,
}

impl From<&WgmPhotonicCrystal> for PhotonicCrystalSpec {
    fn from(p: &WgmPhotonicCrystal) -> Self {
        PhotonicCrystalSpec {
            n_holes: p.n_holes,
            pitch_nm: p.pitch_nm,
            hole_radius_nm: p.hole_radius_nm,
            n_unetched: p.n_unetched,
            n_hole: p.n_hole,
            termination_index: p.termination_index,
        }
    }
}

/// Bi-exponential decay fit `A_f exp(-gamma_f t) + A_s exp(-gamma_s t) + bg`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WgmBiexpFit {
    pub a_f: f64,
    pub gamma_f: f64,
    pub a_s: f64,
    pub gamma_s: f64,
    pub background: f64,
    pub sigma_gamma_f: f64,
    pub sigma_gamma_s: f64,
    /// Radiative rate `gamma_f - gamma_s`.
    pub gamma_rad: f64,
    pub sigma_gamma_rad: f64,
    /// Reduced deviance.
    pub goodness: f64,
    pub n_iter: usize,
    pub converged: bool,
}

/// Fit of `m + amp cos(2 phi + theta)` and its visibility `nu = amp / |m|`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct WgmSinusoidFit {
    pub mean: f64,
    pub amplitude: f64,
    pub theta: f64,
    pub nu: f64,
    pub sigma_mean: f64,
    pub sigma_amplitude: f64,
    pub sigma_nu: f64,
    pub goodness: f64,
    /// True when the data carry no modulation and `theta` is arbitrary.
    pub theta_undefined: bool,
}

/// Opaque solved guided mode.
pub struct WgmMode {
    profile: ModeProfile,
}

/// Opaque voltage-to-phase map reconstructed from a reference sweep.
pub struct WgmPhaseMap {
    calibration: PhaseCalibration,
    fringes: f64,
    reflection_ambiguous: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, records any error or panic and maps it to a status.
fn guard(f: impl FnOnce() -> Result<(), WgmStatus>) -> WgmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            WgmStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => {
            set_last_error("internal panic");
            WgmStatus::Internal
        }
    }
}

fn lib<T>(r: wgmirror::Result<T>) -> Result<T, WgmStatus> {
    r.map_err(|e| {
        set_last_error(&e.to_string());
        WgmStatus::from(&e)
    })
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, WgmStatus> {
    // SAFETY: the caller guarantees that a non-null pointer is valid for reads.
    unsafe { p.as_ref() }.ok_or_else(|| {
        set_last_error(&format!("{name} is null"));
        WgmStatus::NullPointer
    })
}

fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), WgmStatus> {
    if out.is_null() {
        set_last_error(&format!("{name} is null"));
        return Err(WgmStatus::NullPointer);
    }
    // SAFETY: non-null and, per the contract, valid for writes.
    unsafe { out.write(value) };
    Ok(())
}

fn array<'a>(p: *const f64, n: usize, name: &str) -> Result<&'a [f64], WgmStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        set_last_error(&format!("{name} is null"));
        return Err(WgmStatus::NullPointer);
    }
    // SAFETY: the caller guarantees `n` readable elements.
    Ok(unsafe { slice::from_raw_parts(p, n) })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wgm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn wgm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Solves the fundamental quasi-TE mode on `n_points` lateral samples.
/// On success `*out` owns a new handle; release it with [`wgm_mode_free`].
///
/// # Safety
/// `geometry` must point to a valid struct and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_mode_solve(
    geometry: *const WgmGeometry,
    n_points: usize,
    out: *mut *mut WgmMode,
) -> WgmStatus {
    guard(|| {
        if !out.is_null() {
            *out = ptr::null_mut();
        }
        let g = WaveguideGeometry::from(non_null(geometry, "geometry")?);
        let profile = lib(modesolver::solve_te0(&g, n_points))?;
        write(out, Box::into_raw(Box::new(WgmMode { profile })), "out")
    })
}

/// Releases a mode handle. Null is ignored.
///
/// # Safety
/// `mode` must come from [`wgm_mode_solve`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wgm_mode_free(mode: *mut WgmMode) {
    if !mode.is_null() {
        drop(Box::from_raw(mode));
    }
}

/// Effective index and propagation constant (rad/nm).
///
/// # Safety
/// `mode` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_mode_index(
    mode: *const WgmMode,
    n_eff: *mut f64,
    k: *mut f64,
) -> WgmStatus {
    guard(|| {
        let m = non_null(mode, "mode")?;
        write(n_eff, m.profile.n_eff, "n_eff")?;
        write(k, m.profile.k, "k")
    })
}

/// Number of lateral samples in the profile.
///
/// # Safety
/// `mode` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn wgm_mode_len(mode: *const WgmMode) -> usize {
    mode.as_ref().map_or(0, |m| m.profile.grid.len())
}

/// Copies the grid and both field components into caller buffers of length
/// `capacity`. Returns `BufferTooSmall` if `capacity < wgm_mode_len(mode)`.
///
/// # Safety
/// Each buffer must be writable for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn wgm_mode_profile(
    mode: *const WgmMode,
    y_nm: *mut f64,
    e_x: *mut f64,
    e_y: *mut f64,
    capacity: usize,
) -> WgmStatus {
    guard(|| {
        let m = non_null(mode, "mode")?;
        let n = m.profile.grid.len();
        if capacity < n {
            set_last_error(&format!("capacity {capacity} < {n}"));
            return Err(WgmStatus::BufferTooSmall);
        }
        for (dst, src, name) in [
            (y_nm, &m.profile.grid, "y_nm"),
            (e_x, &m.profile.e_x, "e_x"),
            (e_y, &m.profile.e_y, "e_y"),
        ] {
            if dst.is_null() {
                set_last_error(&format!("{name} is null"));
                return Err(WgmStatus::NullPointer);
            }
            ptr::copy_nonoverlapping(src.as_ptr(), dst, n);
        }
        Ok(())
    })
}

/// Normalised field weights `|e_x|^2, |e_y|^2` at lateral offset `y0_nm`.
///
/// # Safety
/// `mode` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_mode_weights(
    mode: *const WgmMode,
    y0_nm: f64,
    wx: *mut f64,
    wy: *mut f64,
) -> WgmStatus {
    guard(|| {
        let m = non_null(mode, "mode")?;
        let (x, y) = lib(m.profile.weights(y0_nm))?;
        write(wx, x, "wx")?;
        write(wy, y, "wy")
    })
}

/// Intensity visibility of a single dipole, `2r / (1 + r^2)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_visibility_intensity(r_t: f64, out: *mut f64) -> WgmStatus {
    guard(|| write(out, lib(emission::visibility_intensity(r_t))?, "out"))
}

/// Intensity visibility with both dipoles excited at weights `(wx, wy)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_visibility_intensity_mixed(
    r_t: f64,
    wx: f64,
    wy: f64,
    out: *mut f64,
) -> WgmStatus {
    guard(|| write(out, lib(emission::visibility_intensity_mixed(r_t, (wx, wy)))?, "out"))
}

/// Decay-rate visibility of the averaged dipoles of `scene`.
///
/// # Safety
/// `scene` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_visibility_rate(
    scene: *const WgmScene,
    r_t: f64,
    out: *mut f64,
) -> WgmStatus {
    guard(|| {
        let s = EmitterScene::from(non_null(scene, "scene")?);
        lib(s.validate())?;
        write(out, lib(emission::scene_visibility_rate(&s, r_t))?, "out")
    })
}

/// Smallest mirror reflectivity compatible with an intensity visibility.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_r_t_lower_bound(nu_i: f64, out: *mut f64) -> WgmStatus {
    guard(|| write(out, lib(inference::r_t_lower_bound(nu_i))?, "out"))
}

/// Radiative decay rate (mirror-modified waveguide part plus leaky part) at
/// mirror phase `phi`.
///
/// # Safety
/// `scene` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_decay_rate(
    scene: *const WgmScene,
    r_t: f64,
    phi: f64,
    dipole: WgmDipole,
    out: *mut f64,
) -> WgmStatus {
    guard(|| {
        let s = EmitterScene::from(non_null(scene, "scene")?);
        lib(s.validate())?;
        write(out, lib(emission::decay_rate(&s, r_t, phi, dipole.into()))?, "out")
    })
}

/// Complex amplitude reflectivity of the hole mirror at one wavelength.
///
/// # Safety
/// `spec` must be valid; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_tmm_reflectivity(
    spec: *const WgmPhotonicCrystal,
    wavelength_nm: f64,
    re: *mut f64,
    im: *mut f64,
) -> WgmStatus {
    guard(|| {
        let p = PhotonicCrystalSpec::from(non_null(spec, "spec")?);
        let r = lib(opticalstack::tmm_reflectivity(&p, wavelength_nm))?;
        write(re, r.re, "re")?;
        write(im, r.im, "im")
    })
}

fn param(res: &FitResult, name: &str) -> f64 {
    res.get(name).unwrap_or(f64::NAN)
}

fn sigma(res: &FitResult, name: &str) -> f64 {
    res.sigma(name).unwrap_or(f64::NAN)
}

/// Poisson maximum-likelihood bi-exponential fit of `n` samples.
///
/// # Safety
/// `t` and `counts` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_fit_biexponential(
    t: *const f64,
    counts: *const f64,
    n: usize,
    out: *mut WgmBiexpFit,
) -> WgmStatus {
    guard(|| {
        let t = array(t, n, "t")?;
        let c = array(counts, n, "counts")?;
        let res = lib(inference::fit_biexponential_counts(t, c, None))?;
        let fit = WgmBiexpFit {
            a_f: param(&res, "a_f"),
            gamma_f: param(&res, "gamma_f"),
            a_s: param(&res, "a_s"),
            gamma_s: param(&res, "gamma_s"),
            background: param(&res, "background"),
            sigma_gamma_f: sigma(&res, "gamma_f"),
            sigma_gamma_s: sigma(&res, "gamma_s"),
            gamma_rad: param(&res, "gamma_rad"),
            sigma_gamma_rad: sigma(&res, "gamma_rad"),
            goodness: res.goodness,
            n_iter: res.n_iter,
            converged: res.converged,
        };
        write(out, fit, "out")
    })
}

/// Weighted sinusoid fit in `2 phi`. `sigmas` may be null for uniform weights.
///
/// # Safety
/// `phases` and `values` (and `sigmas` if non-null) must hold `n` doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_fit_sinusoid(
    phases: *const f64,
    values: *const f64,
    sigmas: *const f64,
    n: usize,
    out: *mut WgmSinusoidFit,
) -> WgmStatus {
    guard(|| {
        let p = array(phases, n, "phases")?;
        let v = array(values, n, "values")?;
        let s = if sigmas.is_null() { None } else { Some(array(sigmas, n, "sigmas")?) };
        let res = lib(inference::fit_sinusoid(p, v, s))?;
        let fit = WgmSinusoidFit {
            mean: param(&res, "mean"),
            amplitude: param(&res, "amplitude"),
            theta: param(&res, "theta"),
            nu: param(&res, "nu"),
            sigma_mean: sigma(&res, "mean"),
            sigma_amplitude: sigma(&res, "amplitude"),
            sigma_nu: sigma(&res, "nu"),
            goodness: res.goodness,
            theta_undefined: res.has_flag("theta_undefined"),
        };
        write(out, fit, "out")
    })
}

/// Reconstructs the voltage-to-phase map from a reference-line intensity sweep.
/// Release the handle with [`wgm_phase_map_free`].
///
/// # Safety
/// `voltages` and `intensities` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_phase_map_reconstruct(
    voltages: *const f64,
    intensities: *const f64,
    n: usize,
    out: *mut *mut WgmPhaseMap,
) -> WgmStatus {
    guard(|| {
        if !out.is_null() {
            *out = ptr::null_mut();
        }
        let v = array(voltages, n, "voltages")?;
        let i = array(intensities, n, "intensities")?;
        let map = lib(inference::reconstruct_phase_map(v, i))?;
        let handle = WgmPhaseMap {
            calibration: map.calibration,
            fringes: map.fringes,
            reflection_ambiguous: map.reflection_ambiguous,
        };
        write(out, Box::into_raw(Box::new(handle)), "out")
    })
}

/// Releases a phase-map handle. Null is ignored.
///
/// # Safety
/// `map` must come from [`wgm_phase_map_reconstruct`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn wgm_phase_map_free(map: *mut WgmPhaseMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// Mirror phase at `voltage`; `OutOfCalibration` outside the swept range.
///
/// # Safety
/// `map` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_phase_map_phase(
    map: *const WgmPhaseMap,
    voltage: f64,
    out: *mut f64,
) -> WgmStatus {
    guard(|| {
        let m = non_null(map, "map")?;
        write(out, lib(synthlab::phase_of_voltage(&m.calibration, voltage))?, "out")
    })
}

/// Number of fringes covered by the sweep and whether the phase direction is
/// ambiguous.
///
/// # Safety
/// `map` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn wgm_phase_map_info(
    map: *const WgmPhaseMap,
    fringes: *mut f64,
    reflection_ambiguous: *mut bool,
) -> WgmStatus {
    guard(|| {
        let m = non_null(map, "map")?;
        write(fringes, m.fringes, "fringes")?;
        write(reflection_ambiguous, m.reflection_ambiguous, "reflection_ambiguous")
    })
}
