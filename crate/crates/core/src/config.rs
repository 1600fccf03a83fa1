//! Run configuration: one JSON document describing the device, the emitter,
//! the phase shifter and the synthetic acquisition.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::Path;

use crate::emission::{visibility_intensity, EmitterScene, LeakyModel};
use crate::error::{ensure, Error, Result};
use crate::modesolver::{mode_weights, solve_te0, ModeProfile, WaveguideGeometry, DEFAULT_GRID_POINTS};
use crate::opticalstack::{MirrorChain, PhotonicCrystalSpec};
use crate::synthlab::{HistogramBins, PhaseCalibration, SweepSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterConfig {
    pub y0_nm: f64,
    pub mirror_distance_nm: f64,
    /// Waveguide rate of the X dipole; when absent it follows the mode
    /// weights, `gamma_y0 |e_x|^2 / |e_y|^2`.
    #[serde(default)]
    pub gamma_x0: Option<f64>,
    pub gamma_y0: f64,
    pub gamma_b: f64,
    pub gamma_nrad: f64,
    #[serde(default)]
    pub leaky: LeakyModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub v_start: f64,
    pub v_stop: f64,
    pub n_points: usize,
    pub counts_scale: f64,
    #[serde(default)]
    pub noiseless: bool,
    pub histogram_counts: u64,
    #[serde(default)]
    pub bins: HistogramBins,
    #[serde(default)]
    pub irf_sigma: Option<f64>,
    #[serde(default = "default_amp_ratio")]
    pub amp_ratio: f64,
    #[serde(default)]
    pub background: f64,
}

fn default_amp_ratio() -> f64 {
    0.05
}

impl SweepConfig {
    pub fn voltages(&self) -> Vec<f64> {
        if self.n_points == 1 {
            return vec![self.v_start];
        }
        (0..self.n_points)
            .map(|i| self.v_start + (self.v_stop - self.v_start) * i as f64 / (self.n_points - 1) as f64)
            .collect()
    }

    pub fn settings(&self) -> SweepSettings {
        SweepSettings {
            counts_scale: self.counts_scale,
            noiseless: self.noiseless,
            histogram_counts: self.histogram_counts,
            bins: self.bins,
            irf_sigma: self.irf_sigma,
            amp_ratio: self.amp_ratio,
            background: self.background,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorSweepConfig {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub n_points: usize,
}

impl Default for MirrorSweepConfig {
    fn default() -> Self {
        Self { start_nm: 850.0, stop_nm: 1050.0, n_points: 401 }
    }
}

/// Settings of the exported visibility and phase curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureConfig {
    pub r_t: f64,
    pub n_offsets: usize,
    pub n_phase: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self { r_t: 0.5, n_offsets: 201, n_phase: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: WaveguideGeometry,
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    pub photonic_crystal: PhotonicCrystalSpec,
    pub mirror: MirrorChain,
    pub emitter: EmitterConfig,
    pub calibration: PhaseCalibration,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub mirror_sweep: MirrorSweepConfig,
    #[serde(default)]
    pub figure: FigureConfig,
    pub seed: u64,
    pub output_dir: String,
}

fn default_grid() -> usize {
    DEFAULT_GRID_POINTS
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Hex SHA-256 of the compact JSON form. The output directory is left out
    /// so that the same run written to two places hashes the same.
    pub fn hash(&self) -> String {
        let keyed = RunConfig { output_dir: String::new(), ..self.clone() };
        let bytes = serde_json::to_vec(&keyed).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }

    /// Checks everything that can be checked without solving for the mode.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.photonic_crystal.validate()?;
        self.mirror.validate()?;
        self.calibration.validate()?;
        let e = &self.emitter;
        let rates = [e.gamma_y0, e.gamma_b, e.gamma_nrad, e.gamma_x0.unwrap_or(0.0)];
        ensure(rates.iter().all(|r| *r >= 0.0 && r.is_finite()), || {
            "emitter rates must be finite and >= 0".into()
        })?;
        ensure(e.y0_nm.is_finite() && e.mirror_distance_nm >= 0.0, || {
            "emitter position must be finite with a non-negative mirror distance".into()
        })?;
        let s = &self.sweep;
        ensure(s.n_points >= 1 && s.counts_scale > 0.0 && s.histogram_counts > 0, || {
            "sweep needs points, counts_scale > 0 and histogram_counts > 0".into()
        })?;
        ensure(s.amp_ratio >= 0.0 && s.background >= 0.0, || {
            "amp_ratio and background must be >= 0".into()
        })?;
        s.bins.edges()?;
        let (lo, hi) = self.calibration.range();
        for v in [s.v_start, s.v_stop] {
            if !(v >= lo && v <= hi) {
                return Err(Error::OutOfCalibration { voltage: v, min: lo, max: hi });
            }
        }
        let m = &self.mirror_sweep;
        ensure(m.n_points >= 2 && m.stop_nm > m.start_nm && m.start_nm > 0.0, || {
            "mirror sweep needs two points over a positive wavelength range".into()
        })?;
        let f = &self.figure;
        ensure((0.0..=1.0).contains(&f.r_t) && f.n_offsets >= 2 && f.n_phase >= 2, || {
            "figure settings need r_t in [0, 1] and two samples per curve".into()
        })?;
        ensure(!self.output_dir.is_empty(), || "output_dir is empty".into())
    }

    pub fn solve_mode(&self) -> Result<ModeProfile> {
        solve_te0(&self.geometry, self.grid_points)
    }

    pub fn r_t_mag(&self) -> f64 {
        self.mirror.magnitude()
    }

    /// Scene and normalised mode weights `(wx, wy) / (wx + wy)` at the
    /// emitter position.
    pub fn scene(&self, profile: &ModeProfile) -> Result<(EmitterScene, (f64, f64))> {
        let e = &self.emitter;
        let (wx, wy) = mode_weights(profile, e.y0_nm)?;
        let total = wx + wy;
        if total <= 0.0 {
            return Err(Error::ZeroField);
        }
        let gamma_x0 = match e.gamma_x0 {
            Some(g) => g,
            None if wy > 0.0 => e.gamma_y0 * wx / wy,
            None => return Err(Error::ZeroField),
        };
        let scene = EmitterScene {
            y0_nm: e.y0_nm,
            mirror_distance_nm: e.mirror_distance_nm,
            k: profile.k,
            gamma_x0,
            gamma_y0: e.gamma_y0,
            gamma_b: e.gamma_b,
            gamma_nrad: e.gamma_nrad,
            leaky: e.leaky,
            dipole_moment: None,
        };
        Ok((scene, (wx / total, wy / total)))
    }

    /// Device defaults with a centred emitter.
    pub fn device_default() -> Self {
        Self {
            geometry: WaveguideGeometry::default(),
            grid_points: DEFAULT_GRID_POINTS,
            photonic_crystal: PhotonicCrystalSpec::default(),
            mirror: MirrorChain { t_phi_sq: 0.55, t_wg_sq: 0.9, r_m_mag: 1.0, phi: 0.0 },
            emitter: EmitterConfig {
                y0_nm: 0.0,
                mirror_distance_nm: 30_000.0,
                gamma_x0: None,
                gamma_y0: 0.9,
                gamma_b: 0.1,
                gamma_nrad: 0.1,
                leaky: LeakyModel::EqualTotal,
            },
            calibration: PhaseCalibration::Quadratic {
                coeff: 11.0 * PI / 1200.0,
                offset: 0.0,
                v_min: 0.0,
                v_max: 10.0,
            },
            sweep: SweepConfig {
                v_start: 0.0,
                v_stop: 10.0,
                n_points: 12,
                counts_scale: 20_000.0,
                noiseless: false,
                histogram_counts: 100_000,
                bins: HistogramBins::default(),
                irf_sigma: None,
                amp_ratio: default_amp_ratio(),
                background: 0.0,
            },
            mirror_sweep: MirrorSweepConfig::default(),
            figure: FigureConfig::default(),
            seed: 1,
            output_dir: "out".into(),
        }
    }

    /// Parameter set of the first emitter of the lifetime table: |r_T| = 0.6,
    /// the offset chosen so that nu_I = 0.48, and rates that swing between
    /// 1.03 and 0.60 ns^-1.
    pub fn qd1() -> Result<Self> {
        let mut cfg = Self::device_default();
        cfg.mirror.t_phi_sq = 2.0 / 3.0;
        let profile = cfg.solve_mode()?;
        let r = cfg.r_t_mag();
        let target = QD1_NU_I / visibility_intensity(r)?;
        let factor = |y0: f64| -> Result<f64> {
            let (wx, wy) = mode_weights(&profile, y0)?;
            Ok((wy - wx) / (wy + wx))
        };
        // the mode factor falls from 1 at the centre to zero near the wall
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if factor(mid)? > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let y0 = 0.5 * (lo + hi);
        let (wx, wy) = mode_weights(&profile, y0)?;
        let rho = wx / wy;
        let mean = 0.5 * (QD1_GAMMA_MAX + QD1_GAMMA_MIN);
        let amp = 0.5 * (QD1_GAMMA_MAX - QD1_GAMMA_MIN);
        // averaged rate: mean = (gx + gy) / 2 + gb, swing = r (gy - gx) / 2
        let gamma_y0 = 2.0 * amp / (r * (1.0 - rho));
        let gamma_x0 = rho * gamma_y0;
        let gamma_b = mean - 0.5 * (gamma_x0 + gamma_y0);
        ensure(gamma_b >= 0.0, || "preset rates need a negative leaky rate".into())?;
        cfg.emitter = EmitterConfig {
            y0_nm: y0,
            gamma_x0: Some(gamma_x0),
            gamma_y0,
            gamma_b,
            leaky: LeakyModel::Shared,
            ..cfg.emitter
        };
        cfg.output_dir = "out/qd1".into();
        Ok(cfg)
    }
}

/// Targets of the QD-1 preset.
pub const QD1_NU_I: f64 = 0.48;
pub const QD1_GAMMA_MAX: f64 = 1.03;
pub const QD1_GAMMA_MIN: f64 = 0.60;
