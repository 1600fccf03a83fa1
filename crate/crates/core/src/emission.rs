//! Emitter in a one-sided waveguide: image-dipole Green's function, decay
//! rates, radiated intensities and the visibilities they produce.
//!
//! Units are fixed: rates in ns^-1, lengths in nm, phases in rad. The mirror
//! phase `2 phi` and the propagation phase `theta = 2 k L` only ever appear in
//! the combination `2 phi + theta`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::modesolver::{mode_weights, ModeProfile};

/// Transition dipole orientation. `X` is along the waveguide axis, `Y` across it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dipole {
    X,
    Y,
    /// Both dipoles populated equally (above-band excitation).
    AveragedBoth,
}

impl Dipole {
    /// Sign of the reflected-field term: `+` for X, `-` for Y.
    pub fn sign(self) -> f64 {
        match self {
            Dipole::X => 1.0,
            Dipole::Y => -1.0,
            Dipole::AveragedBoth => 0.0,
        }
    }
}

/// How the leaky-mode rate is split between the two dipoles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeakyModel {
    /// Both dipoles leak at `gamma_b`.
    Shared,
    /// `gamma_b` belongs to the dipole with the larger waveguide rate; the other
    /// dipole leaks just enough that both total rates are equal.
    #[default]
    EqualTotal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterScene {
    pub y0_nm: f64,
    /// Emitter-mirror distance `L` (nm).
    pub mirror_distance_nm: f64,
    /// Propagation constant of the guided mode (rad/nm).
    pub k: f64,
    pub gamma_x0: f64,
    pub gamma_y0: f64,
    pub gamma_b: f64,
    pub gamma_nrad: f64,
    pub leaky: LeakyModel,
    /// Only used for absolute rates.
    pub dipole_moment: Option<f64>,
}

impl EmitterScene {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.gamma_x0, self.gamma_y0, self.gamma_b, self.gamma_nrad];
        if rates.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::InvalidParameter(format!("rates must be >= 0, got {rates:?}")));
        }
        if !(self.k > 0.0) || !self.mirror_distance_nm.is_finite() || !self.y0_nm.is_finite() {
            return Err(Error::InvalidParameter("k must be > 0 and positions finite".into()));
        }
        Ok(())
    }

    /// Fixed propagation phase `theta = 2 k L`.
    pub fn theta(&self) -> f64 {
        2.0 * self.k * self.mirror_distance_nm
    }

    /// Leaky rate of one dipole.
    pub fn leaky_rate(&self, dip: Dipole) -> f64 {
        match (self.leaky, dip) {
            (LeakyModel::Shared, _) | (_, Dipole::AveragedBoth) => self.gamma_b,
            (LeakyModel::EqualTotal, _) => {
                self.gamma_x0.max(self.gamma_y0) + self.gamma_b - self.intrinsic(dip)
            }
        }
    }

    /// Waveguide rate without mirror, `gamma_d0`.
    pub fn intrinsic(&self, dip: Dipole) -> f64 {
        match dip {
            Dipole::X => self.gamma_x0,
            Dipole::Y => self.gamma_y0,
            Dipole::AveragedBoth => 0.5 * (self.gamma_x0 + self.gamma_y0),
        }
    }

    /// Total radiative rate without mirror, `Gamma_d0 = gamma_d0 + gamma_b,d`.
    pub fn total_without_mirror(&self, dip: Dipole) -> f64 {
        match dip {
            Dipole::AveragedBoth => {
                0.5 * (self.total_without_mirror(Dipole::X) + self.total_without_mirror(Dipole::Y))
            }
            d => self.intrinsic(d) + self.leaky_rate(d),
        }
    }

    /// `beta_d0 = gamma_d0 / Gamma_d0`.
    pub fn beta(&self, dip: Dipole) -> f64 {
        let total = self.total_without_mirror(dip);
        if total > 0.0 {
            self.intrinsic(dip) / total
        } else {
            0.0
        }
    }
}

/// Wraps a phase into `[0, 2 pi)`.
pub fn wrap_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

fn check_reflectivity(r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::ReflectivityOutOfRange(r))
    }
}

/// 1D scalar Green's function `(i / 2k) exp(i k |x - x_src|)`.
pub fn scalar_green(x: f64, x_src: f64, k: f64) -> Complex64 {
    Complex64::new(0.0, 0.5 / k) * Complex64::from_polar(1.0, k * (x - x_src).abs())
}

/// Rate (or LDOS) ratio `gamma_phi / gamma_0` from the mirror image at `2L`:
/// `1 +- r Im{e^{2 i phi} G0(0, 2L)} / Im G0(0, 0)`.
pub fn image_dipole_ratio(r_t_mag: f64, phi: f64, k: f64, mirror_distance_nm: f64, sign: f64) -> f64 {
    let reflected = Complex64::from_polar(1.0, 2.0 * phi) * scalar_green(0.0, 2.0 * mirror_distance_nm, k);
    let direct = scalar_green(0.0, 0.0, k);
    1.0 + sign * r_t_mag * reflected.im / direct.im
}

/// Closed form `1 +- r cos(2 phi + theta)`.
pub fn modulation_factor(r_t_mag: f64, phase: f64, sign: f64) -> f64 {
    1.0 + sign * r_t_mag * phase.cos()
}

/// Radiative decay rate `Gamma_phi` (ns^-1), non-radiative decay excluded.
pub fn decay_rate(scene: &EmitterScene, r_t_mag: f64, phi: f64, dip: Dipole) -> Result<f64> {
    check_reflectivity(r_t_mag)?;
    let single = |d: Dipole| {
        let ratio = image_dipole_ratio(r_t_mag, phi, scene.k, scene.mirror_distance_nm, d.sign());
        scene.intrinsic(d) * ratio + scene.leaky_rate(d)
    };
    Ok(match dip {
        Dipole::AveragedBoth => 0.5 * (single(Dipole::X) + single(Dipole::Y)),
        d => single(d),
    })
}

/// `decay_rate` plus `gamma_nrad`: the rate a lifetime measurement sees.
pub fn decay_rate_total(scene: &EmitterScene, r_t_mag: f64, phi: f64, dip: Dipole) -> Result<f64> {
    Ok(decay_rate(scene, r_t_mag, phi, dip)? + scene.gamma_nrad)
}

/// Single-dipole intensity `I / I_0 = (1 + r^2 +- 2 r cos(phase)) / 2`.
pub fn intensity_single(r_t_mag: f64, phase: f64, sign: f64) -> f64 {
    0.5 * (1.0 + r_t_mag * r_t_mag + sign * 2.0 * r_t_mag * phase.cos())
}

/// Relative intensity collected at the grating. For `AveragedBoth` the two
/// dipole fringes are summed with weights `(wx, wy)`.
pub fn intensity(
    scene: &EmitterScene,
    weights: (f64, f64),
    r_t_mag: f64,
    phi: f64,
    dip: Dipole,
) -> Result<f64> {
    check_reflectivity(r_t_mag)?;
    let phase = 2.0 * phi + scene.theta();
    Ok(match dip {
        Dipole::AveragedBoth => {
            let (wx, wy) = weights;
            if wx + wy <= 0.0 {
                return Err(Error::ZeroField);
            }
            wx * intensity_single(r_t_mag, phase, 1.0) + wy * intensity_single(r_t_mag, phase, -1.0)
        }
        d => intensity_single(r_t_mag, phase, d.sign()),
    })
}

/// `nu_I = 2 r / (1 + r^2)` for a single dipole.
pub fn visibility_intensity(r_t_mag: f64) -> Result<f64> {
    check_reflectivity(r_t_mag)?;
    Ok(2.0 * r_t_mag / (1.0 + r_t_mag * r_t_mag))
}

/// `|wy - wx| / (wy + wx)`, the reduction from mixing both dipoles.
pub fn mode_factor(wx: f64, wy: f64) -> Result<f64> {
    if !(wx >= 0.0 && wy >= 0.0) {
        return Err(Error::InvalidParameter(format!("weights must be >= 0, got ({wx}, {wy})")));
    }
    if wx + wy == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok((wy - wx).abs() / (wy + wx))
}

/// Intensity visibility with both dipoles excited.
pub fn visibility_intensity_mixed(r_t_mag: f64, weights: (f64, f64)) -> Result<f64> {
    Ok(visibility_intensity(r_t_mag)? * mode_factor(weights.0, weights.1)?)
}

/// Decay-rate visibility. Single dipoles give `beta r`; `AveragedBoth` weighs
/// the two betas by their total rates.
pub fn visibility_rate(
    beta_x0: f64,
    beta_y0: f64,
    big_gamma_x0: f64,
    big_gamma_y0: f64,
    r_t_mag: f64,
    dip: Dipole,
) -> Result<f64> {
    check_reflectivity(r_t_mag)?;
    for b in [beta_x0, beta_y0] {
        if !(0.0..=1.0).contains(&b) {
            return Err(Error::InvalidParameter(format!("beta = {b} outside [0, 1]")));
        }
    }
    match dip {
        Dipole::X => Ok(beta_x0 * r_t_mag),
        Dipole::Y => Ok(beta_y0 * r_t_mag),
        Dipole::AveragedBoth => {
            let sum = big_gamma_x0 + big_gamma_y0;
            if sum == 0.0 {
                return Err(Error::DegenerateRates);
            }
            Ok((beta_x0 * big_gamma_x0 / sum - beta_y0 * big_gamma_y0 / sum).abs() * r_t_mag)
        }
    }
}

/// Centred-emitter approximation `nu_gamma ~ beta_y0 r / 2`.
pub fn visibility_rate_centered(beta_y0: f64, r_t_mag: f64) -> f64 {
    0.5 * beta_y0 * r_t_mag
}

/// `visibility_rate` for the averaged dipoles of a scene.
pub fn scene_visibility_rate(scene: &EmitterScene, r_t_mag: f64) -> Result<f64> {
    visibility_rate(
        scene.beta(Dipole::X),
        scene.beta(Dipole::Y),
        scene.total_without_mirror(Dipole::X),
        scene.total_without_mirror(Dipole::Y),
        r_t_mag,
        Dipole::AveragedBoth,
    )
}

/// SI constants that only enter absolute rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub c: f64,
    pub eps0: f64,
    pub hbar: f64,
}

pub const SI: PhysicalConstants = PhysicalConstants {
    c: 299_792_458.0,
    eps0: 8.854_187_812_8e-12,
    hbar: 1.054_571_817e-34,
};

/// LDOS of the guided mode at `y0` for a single dipole axis,
/// `rho_0 = 6 omega / (pi c^2) p.Im G(r0, r0).p` with
/// `G = c^2 / (omega v_g N) E E^* k G0`. Lengths are converted to metres.
pub fn waveguide_ldos(profile: &ModeProfile, y0_nm: f64, dip: Dipole, omega: f64) -> Result<f64> {
    let (wx, wy) = mode_weights(profile, y0_nm)?;
    let field_sq = match dip {
        Dipole::X => wx,
        Dipole::Y => wy,
        Dipole::AveragedBoth => 0.5 * (wx + wy),
    };
    let c = SI.c;
    let v_g = c / profile.group_index;
    let k = profile.k * 1e9;
    let norm = profile.norm_n * 1e-9;
    let im_g0 = scalar_green(0.0, 0.0, k).im;
    let im_g = c * c / (omega * v_g * norm) * field_sq * k * im_g0;
    Ok(6.0 * omega / (PI * c * c) * im_g)
}

/// `gamma_0 = pi omega |d|^2 rho_0 / (3 hbar eps0)`.
pub fn ldos_to_rate(ldos: f64, dipole_moment: f64, omega: f64) -> f64 {
    PI * omega * dipole_moment * dipole_moment * ldos / (3.0 * SI.hbar * SI.eps0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseRow {
    pub phi_rad: f64,
    pub gamma_total: f64,
    pub intensity_rel: f64,
}

/// Decay rate and intensity over `phi in [0, pi)`.
pub fn phase_curve(
    scene: &EmitterScene,
    weights: (f64, f64),
    r_t_mag: f64,
    dip: Dipole,
    n: usize,
) -> Result<Vec<PhaseRow>> {
    (0..n)
        .map(|i| {
            let phi = PI * i as f64 / n as f64;
            Ok(PhaseRow {
                phi_rad: phi,
                gamma_total: decay_rate(scene, r_t_mag, phi, dip)?,
                intensity_rel: intensity(scene, weights, r_t_mag, phi, dip)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffsetRow {
    pub y0_nm: f64,
    pub nu_i: f64,
    pub nu_gamma: f64,
}

/// Scene at lateral offset `y0`: waveguide rates follow the mode weights,
/// anchored so that the centre has `gamma_y0 = scene.gamma_y0`.
pub fn scene_at_offset(profile: &ModeProfile, scene: &EmitterScene, y0_nm: f64) -> Result<EmitterScene> {
    let (_, wy_center) = mode_weights(profile, 0.0)?;
    let (wx, wy) = mode_weights(profile, y0_nm)?;
    let scale = scene.gamma_y0 / wy_center;
    Ok(EmitterScene { y0_nm, gamma_x0: scale * wx, gamma_y0: scale * wy, ..*scene })
}

/// Visibilities across the waveguide width, `n` offsets from `-w/2` to `w/2`.
pub fn figure1d_curves(
    profile: &ModeProfile,
    scene: &EmitterScene,
    r_t_mag: f64,
    n: usize,
) -> Result<Vec<OffsetRow>> {
    check_reflectivity(r_t_mag)?;
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two offsets".into()));
    }
    let half = 0.5 * profile.width_nm;
    (0..n)
        .map(|i| {
            let y0 = -half + 2.0 * half * i as f64 / (n - 1) as f64;
            let local = scene_at_offset(profile, scene, y0)?;
            let weights = mode_weights(profile, y0)?;
            Ok(OffsetRow {
                y0_nm: y0,
                nu_i: visibility_intensity_mixed(r_t_mag, weights)?,
                nu_gamma: scene_visibility_rate(&local, r_t_mag)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const K: f64 = 2.0 * PI * 2.56 / 930.0;

    fn scene(gamma_x0: f64, gamma_y0: f64, gamma_b: f64, leaky: LeakyModel) -> EmitterScene {
        EmitterScene {
            y0_nm: 0.0,
            mirror_distance_nm: 30_000.0,
            k: K,
            gamma_x0,
            gamma_y0,
            gamma_b,
            gamma_nrad: 0.1,
            leaky,
            dipole_moment: None,
        }
    }

    /// Phase that makes `2 phi + theta` equal `target`.
    fn phi_for(s: &EmitterScene, target: f64) -> f64 {
        0.5 * (target - s.theta())
    }

    #[test]
    fn green_function_values() {
        let k = 2.0 * PI / 930.0;
        let g = scalar_green(0.0, 0.0, k);
        assert_eq!(g.re, 0.0);
        assert_relative_eq!(g.im, 1.0 / (2.0 * k), epsilon = 1e-15);
        let g = scalar_green(930.0, 0.0, k);
        assert_relative_eq!(g.re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(g.im, 1.0 / (2.0 * k), max_relative = 1e-12);
        for x in [1.0, 77.0, 1e4, -3e5] {
            assert_relative_eq!(scalar_green(x, 3.0, k).norm(), 0.5 / k, max_relative = 1e-14);
        }
    }

    #[test]
    fn no_mirror_rate_is_flat() {
        let s = scene(0.2, 1.0, 0.1, LeakyModel::Shared);
        for phi in [0.0, 0.4, 1.9] {
            assert_relative_eq!(decay_rate(&s, 0.0, phi, Dipole::Y).unwrap(), 1.1, epsilon = 1e-15);
            assert_relative_eq!(decay_rate(&s, 0.0, phi, Dipole::X).unwrap(), 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn y_dipole_suppressed_example() {
        let s = scene(0.0, 1.0, 0.1, LeakyModel::Shared);
        let phi = phi_for(&s, PI);
        assert_relative_eq!(decay_rate(&s, 0.5, phi, Dipole::Y).unwrap(), 1.6, epsilon = 1e-10);
    }

    #[test]
    fn image_dipole_reduces_to_closed_form() {
        let s = scene(0.3, 1.0, 0.1, LeakyModel::Shared);
        for &(r, phi) in &[(0.3, 0.1), (0.9, 2.2), (1.0, 4.0)] {
            for sign in [1.0, -1.0] {
                let a = image_dipole_ratio(r, phi, s.k, s.mirror_distance_nm, sign);
                let b = modulation_factor(r, 2.0 * phi + s.theta(), sign);
                assert!((a - b).abs() < 1e-12);
            }
        }
        // image in phase with an X dipole doubles the LDOS
        assert_relative_eq!(image_dipole_ratio(1.0, 0.0, K, 0.0, 1.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rate_ratio_has_no_frequency_dependence() {
        // at fixed theta the ratio depends on k only through 2kL
        let theta = 1.234;
        for k in [0.005, 0.0173, 0.04] {
            let l = theta / (2.0 * k);
            let ratio = image_dipole_ratio(0.6, 0.3, k, l, -1.0);
            assert!((ratio - modulation_factor(0.6, 0.6 + theta, -1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn extremal_rates() {
        let s = scene(0.2, 0.9, 0.15, LeakyModel::Shared);
        let r = 0.55;
        let g0 = s.gamma_y0;
        let gb = s.leaky_rate(Dipole::Y);
        let max = decay_rate(&s, r, phi_for(&s, PI), Dipole::Y).unwrap();
        let min = decay_rate(&s, r, phi_for(&s, 0.0), Dipole::Y).unwrap();
        assert_relative_eq!(max, g0 * (1.0 + r) + gb, epsilon = 1e-12);
        assert_relative_eq!(min, g0 * (1.0 - r) + gb, epsilon = 1e-12);
    }

    #[test]
    fn intensity_examples() {
        let s = scene(0.2, 1.0, 0.1, LeakyModel::Shared);
        for phi in [0.0, 0.7] {
            assert_relative_eq!(intensity(&s, (0.0, 1.0), 0.0, phi, Dipole::Y).unwrap(), 0.5);
        }
        let phi = phi_for(&s, 0.0);
        assert_relative_eq!(intensity(&s, (0.0, 1.0), 1.0, phi, Dipole::X).unwrap(), 2.0, epsilon = 1e-12);
        // sampled sinusoid at r = 0.5 has visibility 0.8
        let vals: Vec<f64> = (0..2000)
            .map(|i| intensity(&s, (0.0, 1.0), 0.5, PI * i as f64 / 2000.0, Dipole::Y).unwrap())
            .collect();
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        assert_relative_eq!((max - min) / (max + min), 0.8, epsilon = 1e-5);
    }

    #[test]
    fn visibility_examples() {
        assert_eq!(visibility_intensity(1.0).unwrap(), 1.0);
        assert_eq!(visibility_intensity(0.0).unwrap(), 0.0);
        assert_relative_eq!(visibility_intensity(0.5).unwrap(), 0.8, epsilon = 1e-15);
        assert_relative_eq!(visibility_intensity_mixed(0.5, (0.0, 0.7)).unwrap(), 0.8, epsilon = 1e-15);
        assert_eq!(visibility_intensity_mixed(0.9, (0.3, 0.3)).unwrap(), 0.0);
        assert_eq!(visibility_intensity_mixed(0.9, (0.0, 0.0)), Err(Error::ZeroField));
        assert!(matches!(visibility_intensity(1.2), Err(Error::ReflectivityOutOfRange(_))));
    }

    #[test]
    fn rate_visibility_examples() {
        assert_eq!(visibility_rate(0.0, 1.0, 1.0, 1.0, 1.0, Dipole::Y).unwrap(), 1.0);
        let v = visibility_rate(0.0, 0.9, 1.0, 1.0, 0.6, Dipole::AveragedBoth).unwrap();
        assert_relative_eq!(v, 0.27, epsilon = 1e-15);
        assert_eq!(visibility_rate(0.4, 0.4, 2.0, 2.0, 0.6, Dipole::AveragedBoth).unwrap(), 0.0);
        assert_eq!(
            visibility_rate(0.4, 0.4, 0.0, 0.0, 0.6, Dipole::AveragedBoth),
            Err(Error::DegenerateRates)
        );
        assert_relative_eq!(visibility_rate_centered(0.9, 0.6), 0.27, epsilon = 1e-15);
    }

    #[test]
    fn equal_total_closure() {
        let s = scene(0.2, 1.0, 0.1, LeakyModel::EqualTotal);
        assert_relative_eq!(s.total_without_mirror(Dipole::X), 1.1, epsilon = 1e-15);
        assert_relative_eq!(s.total_without_mirror(Dipole::Y), 1.1, epsilon = 1e-15);
        let v = scene_visibility_rate(&s, 0.5).unwrap();
        assert_relative_eq!(v, 0.5 * (s.beta(Dipole::Y) - s.beta(Dipole::X)) * 0.5, epsilon = 1e-15);
        let centred = scene(0.0, 1.0, 0.1, LeakyModel::EqualTotal);
        assert_relative_eq!(
            scene_visibility_rate(&centred, 0.5).unwrap(),
            visibility_rate_centered(centred.beta(Dipole::Y), 0.5),
            epsilon = 1e-15
        );
    }

    #[test]
    fn ldos_chain_is_linear() {
        let omega = 2.0 * PI * SI.c / 930e-9;
        assert_relative_eq!(ldos_to_rate(2.0, 1.0, omega), 2.0 * ldos_to_rate(1.0, 1.0, omega));
        let m = crate::modesolver::solve_te0(&Default::default(), 256).unwrap();
        let rho = waveguide_ldos(&m, 0.0, Dipole::Y, omega).unwrap();
        assert!(rho > 0.0);
        // rescaling the raw eigenvector leaves the LDOS unchanged
        let scaled = waveguide_ldos(&m.scaled(7.3), 0.0, Dipole::Y, omega).unwrap();
        assert_relative_eq!(rho, scaled, max_relative = 1e-12);
    }

    #[test]
    fn averaging_never_beats_single_dipole() {
        for &(bx, by, gx, gy, r) in &[(0.1, 0.8, 1.0, 1.2, 0.6), (0.0, 0.9, 0.3, 1.0, 1.0), (0.5, 0.5, 1.0, 0.2, 0.4)] {
            let avg = visibility_rate(bx, by, gx, gy, r, Dipole::AveragedBoth).unwrap();
            let single = visibility_rate(bx, by, gx, gy, r, Dipole::Y).unwrap();
            assert!(avg <= single + 1e-15);
        }
    }

    #[test]
    fn rate_and_intensity_share_argmax() {
        let s = scene(0.1, 1.0, 0.2, LeakyModel::Shared);
        let n = 4096;
        let argmax = |f: &dyn Fn(f64) -> f64| {
            (0..n)
                .map(|i| PI * i as f64 / n as f64)
                .max_by(|a, b| f(*a).partial_cmp(&f(*b)).unwrap())
                .unwrap()
        };
        let a = argmax(&|phi| intensity(&s, (0.0, 1.0), 0.6, phi, Dipole::Y).unwrap());
        let b = argmax(&|phi| decay_rate(&s, 0.6, phi, Dipole::Y).unwrap());
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn interference_expansion(r in 0.0..=1.0f64, phi in -10.0..10.0f64, theta in 0.0..(2.0 * PI)) {
            let e = Complex64::from_polar(r, 2.0 * phi + theta);
            let one = Complex64::new(1.0, 0.0);
            let x = 0.5 * (one + e).norm_sqr();
            let y = 0.5 * (one - e).norm_sqr();
            prop_assert!((intensity_single(r, 2.0 * phi + theta, 1.0) - x).abs() < 1e-12);
            prop_assert!((intensity_single(r, 2.0 * phi + theta, -1.0) - y).abs() < 1e-12);
        }

        #[test]
        fn sign_opposition(r in 0.0..=1.0f64, phi in 0.0..PI, gx in 0.01..2.0f64, gy in 0.01..2.0f64, gb in 0.0..1.0f64) {
            let s = scene(gx, gy, gb, LeakyModel::Shared);
            let dx = decay_rate(&s, r, phi, Dipole::X).unwrap() - decay_rate(&s, 0.0, phi, Dipole::X).unwrap();
            let dy = decay_rate(&s, r, phi, Dipole::Y).unwrap() - decay_rate(&s, 0.0, phi, Dipole::Y).unwrap();
            prop_assert!((dx + dy * gx / gy).abs() < 1e-12);
        }

        #[test]
        fn wrapped_phase_in_range(p in -1e3..1e3f64) {
            let w = wrap_phase(p);
            prop_assert!((0.0..2.0 * PI).contains(&w));
            prop_assert!(((w - p) / (2.0 * PI) - ((w - p) / (2.0 * PI)).round()).abs() < 1e-9);
        }
    }
}
