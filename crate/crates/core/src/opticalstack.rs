//! Lumped mirror reflectivity seen by the emitter, and a 1D transfer-matrix
//! model of the photonic-crystal hole mirror.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure, Error, Result};

/// Phase shifter, propagation and mirror factors composing `r_T`.
///
/// `t_phi_sq` and `t_wg_sq` are the power figures quoted for the device; they
/// already describe the emitter-mirror-emitter round trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorChain {
    pub t_phi_sq: f64,
    pub t_wg_sq: f64,
    pub r_m_mag: f64,
    /// Phase-shifter phase (rad).
    pub phi: f64,
}

impl MirrorChain {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t_phi_sq", self.t_phi_sq),
            ("t_wg_sq", self.t_wg_sq),
            ("r_m_mag", self.r_m_mag),
        ] {
            ensure((0.0..=1.0).contains(&v), || format!("{name} = {v} outside [0, 1]"))?;
        }
        ensure(self.phi.is_finite(), || "phi must be finite".into())
    }

    /// `|r_T|`, independent of the phase.
    pub fn magnitude(&self) -> f64 {
        self.t_phi_sq * self.t_wg_sq * self.r_m_mag
    }
}

/// `r_T = |t_phi^2 t_wg^2 r_M| exp(2 i phi)`.
pub fn lumped_reflectivity(chain: &MirrorChain) -> Result<Complex64> {
    chain.validate()?;
    Ok(Complex64::from_polar(chain.magnitude(), 2.0 * chain.phi))
}

/// Power transmittivity `10^(-loss L / 10)` of a lossy waveguide section.
pub fn waveguide_transmission(loss_db_per_mm: f64, length_nm: f64) -> Result<f64> {
    ensure(loss_db_per_mm >= 0.0, || format!("loss {loss_db_per_mm} dB/mm is negative"))?;
    ensure(length_nm >= 0.0, || format!("length {length_nm} nm is negative"))?;
    Ok(10f64.powf(-loss_db_per_mm * length_nm * 1e-6 / 10.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonicCrystalSpec {
    pub n_holes: usize,
    pub pitch_nm: f64,
    pub hole_radius_nm: f64,
    pub n_unetched: f64,
    pub n_hole: f64,
    pub termination_index: f64,
}

impl Default for PhotonicCrystalSpec {
    /// Segment indices put the Bragg centre near 950 nm (mean index ~1.79).
    fn default() -> Self {
        Self {
            n_holes: 12,
            pitch_nm: 265.0,
            hole_radius_nm: 70.0,
            n_unetched: 2.1,
            n_hole: 1.5,
            termination_index: 2.1,
        }
    }
}

impl PhotonicCrystalSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.pitch_nm > 0.0, || "pitch_nm must be > 0".into())?;
        ensure(self.hole_radius_nm > 0.0 && 2.0 * self.hole_radius_nm < self.pitch_nm, || {
            format!(
                "hole diameter {} nm must lie in (0, pitch {} nm)",
                2.0 * self.hole_radius_nm,
                self.pitch_nm
            )
        })?;
        ensure(self.n_hole > 0.0 && self.n_hole < self.n_unetched, || {
            format!("need 0 < n_hole ({}) < n_unetched ({})", self.n_hole, self.n_unetched)
        })?;
        ensure(self.termination_index > 0.0, || "termination_index must be > 0".into())
    }

    /// Period-averaged index.
    pub fn mean_index(&self) -> f64 {
        let hole = 2.0 * self.hole_radius_nm;
        (hole * self.n_hole + (self.pitch_nm - hole) * self.n_unetched) / self.pitch_nm
    }

    /// First-order Bragg wavelength `2 n_mean pitch`.
    pub fn bragg_wavelength(&self) -> f64 {
        2.0 * self.mean_index() * self.pitch_nm
    }

    /// Layer sequence `(index, thickness)`; each period is centred on its hole.
    pub fn layers(&self) -> Vec<(f64, f64)> {
        let hole = 2.0 * self.hole_radius_nm;
        let web = 0.5 * (self.pitch_nm - hole);
        (0..self.n_holes)
            .flat_map(|_| [(self.n_unetched, web), (self.n_hole, hole), (self.n_unetched, web)])
            .collect()
    }
}

/// 2x2 complex matrix acting on (forward, backward) amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer(pub [[Complex64; 2]; 2]);

impl Transfer {
    pub fn identity() -> Self {
        let (o, z) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        Transfer([[o, z], [z, o]])
    }

    /// Step from index `left` into index `right`.
    pub fn interface(left: f64, right: f64) -> Self {
        let r = (left - right) / (left + right);
        let t = 2.0 * left / (left + right);
        let (a, b) = (Complex64::new(1.0 / t, 0.0), Complex64::new(r / t, 0.0));
        Transfer([[a, b], [b, a]])
    }

    pub fn propagation(index: f64, thickness_nm: f64, wavelength_nm: f64) -> Self {
        let delta = 2.0 * PI / wavelength_nm * index * thickness_nm;
        let z = Complex64::new(0.0, 0.0);
        Transfer([[Complex64::from_polar(1.0, -delta), z], [z, Complex64::from_polar(1.0, delta)]])
    }

    pub fn mul(&self, rhs: &Transfer) -> Transfer {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Transfer(out)
    }

    pub fn det(&self) -> Complex64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Result<Transfer> {
        let d = self.det();
        if d.norm() < 1e-300 {
            return Err(Error::SingularMatrix("determinant vanishes".into()));
        }
        let m = &self.0;
        Ok(Transfer([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }
}

/// Reflection and transmission of a stack between two semi-infinite media.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackResponse {
    pub r: Complex64,
    pub t: Complex64,
    pub n_in: f64,
    pub n_out: f64,
}

impl StackResponse {
    pub fn reflectance(&self) -> f64 {
        self.r.norm_sqr()
    }

    pub fn transmittance(&self) -> f64 {
        self.t.norm_sqr() * self.n_out / self.n_in
    }
}

/// Total transfer matrix of `layers` between media `n_in` and `n_out`.
pub fn stack_matrix(layers: &[(f64, f64)], n_in: f64, n_out: f64, wavelength_nm: f64) -> Transfer {
    let mut m = Transfer::identity();
    let mut current = n_in;
    for &(n, d) in layers {
        m = m.mul(&Transfer::interface(current, n));
        m = m.mul(&Transfer::propagation(n, d, wavelength_nm));
        current = n;
    }
    m.mul(&Transfer::interface(current, n_out))
}

fn response(layers: &[(f64, f64)], n_in: f64, n_out: f64, wavelength_nm: f64) -> Result<StackResponse> {
    if !(wavelength_nm > 0.0) {
        return Err(Error::InvalidParameter(format!("wavelength {wavelength_nm} nm must be > 0")));
    }
    if layers.iter().any(|&(_, d)| !(d > 0.0)) {
        return Err(Error::SingularMatrix("non-positive layer thickness".into()));
    }
    let m = stack_matrix(layers, n_in, n_out, wavelength_nm);
    let m11 = m.0[0][0];
    if m11.norm() < 1e-300 || !m11.is_finite() {
        return Err(Error::SingularMatrix(format!("M11 = {m11} at {wavelength_nm} nm")));
    }
    Ok(StackResponse { r: m.0[1][0] / m11, t: m11.inv(), n_in, n_out })
}

/// Response for light incident from the termination side at `wavelength_nm`.
pub fn tmm_response(spec: &PhotonicCrystalSpec, wavelength_nm: f64) -> Result<StackResponse> {
    spec.validate()?;
    response(&spec.layers(), spec.termination_index, spec.termination_index, wavelength_nm)
}

/// Same stack illuminated from the far side.
pub fn tmm_response_reversed(spec: &PhotonicCrystalSpec, wavelength_nm: f64) -> Result<StackResponse> {
    spec.validate()?;
    let mut layers = spec.layers();
    layers.reverse();
    response(&layers, spec.termination_index, spec.termination_index, wavelength_nm)
}

/// Field reflection coefficient `r_M(lambda)`.
pub fn tmm_reflectivity(spec: &PhotonicCrystalSpec, wavelength_nm: f64) -> Result<Complex64> {
    Ok(tmm_response(spec, wavelength_nm)?.r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub lambda_nm: f64,
    pub r: Complex64,
    pub transmittance: f64,
}

/// Wavelength sweep `start..=stop` in `n` evenly spaced points.
pub fn reflectivity_sweep(
    spec: &PhotonicCrystalSpec,
    start_nm: f64,
    stop_nm: f64,
    n: usize,
) -> Result<Vec<SweepPoint>> {
    ensure(n >= 2, || "a sweep needs at least two points".into())?;
    ensure(stop_nm > start_nm && start_nm > 0.0, || {
        format!("bad sweep range [{start_nm}, {stop_nm}] nm")
    })?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let lambda_nm = start_nm + (stop_nm - start_nm) * i as f64 / (n - 1) as f64;
            let resp = tmm_response(spec, lambda_nm)?;
            Ok(SweepPoint { lambda_nm, r: resp.r, transmittance: resp.transmittance() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn device_chain_gives_half() {
        let chain = MirrorChain { t_phi_sq: 0.55, t_wg_sq: 0.9, r_m_mag: 1.0, phi: 0.0 };
        let r = lumped_reflectivity(&chain).unwrap();
        assert_relative_eq!(r.norm(), 0.495, epsilon = 1e-12);
        assert_relative_eq!(r.arg(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn lossless_chain_is_pure_phase() {
        let chain = MirrorChain { t_phi_sq: 1.0, t_wg_sq: 1.0, r_m_mag: 1.0, phi: PI / 4.0 };
        let r = lumped_reflectivity(&chain).unwrap();
        assert_relative_eq!(r.re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(r.im, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn no_mirror_no_reflection() {
        for phi in [0.0, 0.3, 2.0] {
            let chain = MirrorChain { t_phi_sq: 0.7, t_wg_sq: 0.8, r_m_mag: 0.0, phi };
            assert_eq!(lumped_reflectivity(&chain).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn chain_magnitude_ignores_phase() {
        let base = MirrorChain { t_phi_sq: 0.55, t_wg_sq: 0.9, r_m_mag: 0.97, phi: 0.0 };
        let m0 = lumped_reflectivity(&base).unwrap().norm();
        for phi in [0.1, 1.0, 2.5, -4.0] {
            let r = lumped_reflectivity(&MirrorChain { phi, ..base }).unwrap();
            assert_relative_eq!(r.norm(), m0, epsilon = 1e-15);
        }
    }

    #[test]
    fn chain_rejects_gain() {
        let chain = MirrorChain { t_phi_sq: 1.2, t_wg_sq: 0.9, r_m_mag: 1.0, phi: 0.0 };
        assert!(lumped_reflectivity(&chain).is_err());
    }

    #[test]
    fn waveguide_loss_over_thirty_microns() {
        let one_way = waveguide_transmission(7.5, 30_000.0).unwrap();
        assert_relative_eq!(one_way, 0.95, epsilon = 1e-3);
        assert_relative_eq!(one_way * one_way, 0.9, epsilon = 3e-3);
        assert_eq!(waveguide_transmission(0.0, 30_000.0).unwrap(), 1.0);
        assert_eq!(waveguide_transmission(7.5, 0.0).unwrap(), 1.0);
        assert!(waveguide_transmission(-1.0, 10.0).is_err());
    }

    #[test]
    fn empty_stack_is_fresnel() {
        let r = response(&[], 2.0, 1.0, 900.0).unwrap().r;
        assert_relative_eq!(r.re, 1.0 / 3.0, epsilon = 1e-15);
        let spec = PhotonicCrystalSpec { n_holes: 0, ..Default::default() };
        assert_eq!(tmm_reflectivity(&spec, 930.0).unwrap().norm(), 0.0);
    }

    #[test]
    fn interface_determinant_is_index_ratio() {
        let d = Transfer::interface(2.1, 1.5).det();
        assert_relative_eq!(d.re, 1.5 / 2.1, epsilon = 1e-14);
        assert_relative_eq!(d.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cascade_inverts_to_identity() {
        let spec = PhotonicCrystalSpec::default();
        let m = stack_matrix(&spec.layers(), spec.termination_index, spec.termination_index, 943.0);
        let prod = m.mul(&m.inverse().unwrap());
        let id = Transfer::identity();
        for i in 0..2 {
            for j in 0..2 {
                assert!((prod.0[i][j] - id.0[i][j]).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn flux_conserved_across_band() {
        let spec = PhotonicCrystalSpec::default();
        for lambda in (800..=1100).step_by(7) {
            let resp = tmm_response(&spec, lambda as f64).unwrap();
            assert!((resp.reflectance() + resp.transmittance() - 1.0).abs() < 1e-10);
        }
        // unequal terminations
        let resp = response(&spec.layers(), 2.1, 1.0, 950.0).unwrap();
        assert!((resp.reflectance() + resp.transmittance() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn reciprocal_for_symmetric_stack() {
        let spec = PhotonicCrystalSpec::default();
        for lambda in [880.0, 930.0, 951.5, 1010.0] {
            let a = tmm_response(&spec, lambda).unwrap().r;
            let b = tmm_response_reversed(&spec, lambda).unwrap().r;
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn stopband_centred_on_bragg_condition() {
        let spec = PhotonicCrystalSpec::default();
        let bragg = spec.bragg_wavelength();
        // |r|^2 on a fine scan peaks within 1% of 2 n_mean pitch
        let (mut best, mut best_r) = (0.0, 0.0);
        let mut lambda = 800.0;
        while lambda <= 1100.0 {
            let r = tmm_reflectivity(&spec, lambda).unwrap().norm_sqr();
            if r > best_r {
                best_r = r;
                best = lambda;
            }
            lambda += 0.25;
        }
        assert!((best - bragg).abs() / bragg < 0.01, "peak {best} vs Bragg {bragg}");
        let at = |l: f64| tmm_reflectivity(&spec, l).unwrap().norm_sqr();
        assert!(at(bragg) >= at(bragg - 5.0) && at(bragg) >= at(bragg + 5.0));
    }

    #[test]
    fn more_holes_reflect_more() {
        let mut last = 0.0;
        for n_holes in [4, 8, 12] {
            let spec = PhotonicCrystalSpec { n_holes, ..Default::default() };
            let r = tmm_reflectivity(&spec, spec.bragg_wavelength()).unwrap().norm();
            assert!(r >= last, "{n_holes} holes: {r} < {last}");
            last = r;
        }
    }

    #[test]
    fn bad_crystal_rejected() {
        let spec = PhotonicCrystalSpec { hole_radius_nm: 140.0, ..Default::default() };
        assert!(tmm_reflectivity(&spec, 930.0).is_err());
        let spec = PhotonicCrystalSpec { n_hole: 2.5, ..Default::default() };
        assert!(tmm_reflectivity(&spec, 930.0).is_err());
    }
}
