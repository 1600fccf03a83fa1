//! Synthetic measurements: voltage-to-phase calibration, shot-noise-limited
//! intensity sweeps and bi-exponential time-resolved decay histograms.
//!
//! Every sweep point draws from its own ChaCha stream derived from
//! `(seed, point index)`, so results do not depend on how points are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emission::{decay_rate, intensity, Dipole, EmitterScene};
use crate::error::{ensure, Error, Result};

/// Voltage-to-phase map of the phase shifter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseCalibration {
    /// Piecewise-linear through `(voltage, phase)` knots.
    Table { knots: Vec<(f64, f64)> },
    /// `phi = coeff v^2 + offset` on `[v_min, v_max]`.
    Quadratic { coeff: f64, offset: f64, v_min: f64, v_max: f64 },
}

impl PhaseCalibration {
    pub fn validate(&self) -> Result<()> {
        match self {
            PhaseCalibration::Table { knots } => {
                ensure(knots.len() >= 2, || "calibration table needs two knots".into())?;
                ensure(knots.windows(2).all(|w| w[1].0 > w[0].0), || {
                    "calibration voltages must be strictly increasing".into()
                })?;
                let rising = knots.windows(2).all(|w| w[1].1 >= w[0].1);
                let falling = knots.windows(2).all(|w| w[1].1 <= w[0].1);
                ensure(rising || falling, || "calibration phase must be monotone".into())
            }
            PhaseCalibration::Quadratic { coeff, offset, v_min, v_max } => {
                ensure(coeff.is_finite() && offset.is_finite(), || "non-finite coefficients".into())?;
                ensure(v_max > v_min, || format!("empty range [{v_min}, {v_max}]"))?;
                // phase must stay monotone, so the range cannot straddle 0 V
                ensure(*v_min >= 0.0 || *v_max <= 0.0, || {
                    "quadratic calibration range must not contain a turning point".into()
                })
            }
        }
    }

    pub fn range(&self) -> (f64, f64) {
        match self {
            PhaseCalibration::Table { knots } => (knots[0].0, knots[knots.len() - 1].0),
            PhaseCalibration::Quadratic { v_min, v_max, .. } => (*v_min, *v_max),
        }
    }
}

pub fn phase_of_voltage(cal: &PhaseCalibration, v: f64) -> Result<f64> {
    let (min, max) = cal.range();
    if !(v >= min && v <= max) {
        return Err(Error::OutOfCalibration { voltage: v, min, max });
    }
    Ok(match cal {
        PhaseCalibration::Quadratic { coeff, offset, .. } => coeff * v * v + offset,
        PhaseCalibration::Table { knots } => {
            let j = knots.partition_point(|k| k.0 <= v).clamp(1, knots.len() - 1);
            let (a, b) = (knots[j - 1], knots[j]);
            a.1 + (v - a.0) / (b.0 - a.0) * (b.1 - a.1)
        }
    })
}

/// Bright (fast) and dark (slow) exciton decay with a flat background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitonModel {
    pub gamma_f: f64,
    pub gamma_s: f64,
    /// `A_s / A_f`.
    pub amp_ratio: f64,
    /// Counts per bin.
    pub background: f64,
}

impl ExcitonModel {
    /// `gamma_f == gamma_s` is accepted so degenerate data can be produced.
    pub fn validate(&self) -> Result<()> {
        ensure(self.gamma_s >= 0.0 && self.gamma_f >= self.gamma_s && self.gamma_f > 0.0, || {
            format!("need gamma_f ({}) >= gamma_s ({}) >= 0", self.gamma_f, self.gamma_s)
        })?;
        ensure(self.amp_ratio >= 0.0 && self.background >= 0.0, || {
            "amp_ratio and background must be >= 0".into()
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramBins {
    pub t_max_ns: f64,
    pub bin_ns: f64,
}

impl Default for HistogramBins {
    fn default() -> Self {
        Self { t_max_ns: 25.0, bin_ns: 0.05 }
    }
}

impl HistogramBins {
    pub fn edges(&self) -> Result<Vec<f64>> {
        ensure(self.bin_ns > 0.0 && self.t_max_ns > self.bin_ns, || {
            format!("bad binning: {} ns bins up to {} ns", self.bin_ns, self.t_max_ns)
        })?;
        let n = (self.t_max_ns / self.bin_ns).round() as usize;
        Ok((0..=n).map(|i| i as f64 * self.bin_ns).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_counts: u64,
    pub irf_sigma: Option<f64>,
    pub seed: u64,
}

impl DecayHistogram {
    pub fn bin_centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn from_counts(bin_edges: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        ensure(bin_edges.len() == counts.len() + 1, || {
            format!("{} edges for {} bins", bin_edges.len(), counts.len())
        })?;
        ensure(bin_edges.windows(2).all(|w| w[1] > w[0]), || {
            "bin edges must be strictly increasing".into()
        })?;
        let total_counts = counts.iter().sum();
        Ok(Self { bin_edges, counts, total_counts, irf_sigma: None, seed: 0 })
    }
}

/// Expected counts per bin, evaluated at bin centres. The decay part sums to
/// `total_counts` before the optional Gaussian instrument response.
pub fn expected_counts(
    model: &ExcitonModel,
    centers: &[f64],
    total_counts: f64,
    irf_sigma: Option<f64>,
) -> Vec<f64> {
    let shape: Vec<f64> = centers
        .iter()
        .map(|&t| (-model.gamma_f * t).exp() + model.amp_ratio * (-model.gamma_s * t).exp())
        .collect();
    let norm: f64 = shape.iter().sum();
    let mut decay: Vec<f64> = shape.iter().map(|s| s * total_counts / norm).collect();
    if let Some(sigma) = irf_sigma.filter(|s| *s > 0.0) {
        decay = convolve_gaussian(&decay, centers, sigma);
    }
    decay.iter().map(|d| d + model.background).collect()
}

/// Convolution with a unit-area Gaussian on the bin grid, zero outside it.
fn convolve_gaussian(values: &[f64], centers: &[f64], sigma: f64) -> Vec<f64> {
    let dt = if centers.len() > 1 { centers[1] - centers[0] } else { 1.0 };
    let reach = (5.0 * sigma / dt).ceil() as isize;
    let kernel: Vec<f64> = (-reach..=reach)
        .map(|k| (-0.5 * (k as f64 * dt / sigma).powi(2)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            (-reach..=reach)
                .filter_map(|k| {
                    let j = i - k;
                    (0..n).contains(&j).then(|| values[j as usize] * kernel[(k + reach) as usize])
                })
                .sum::<f64>()
                / ksum
        })
        .collect()
}

/// Generator for one reproducible random stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn poisson_draw(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean > 0.0 {
        Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
    } else {
        0
    }
}

pub fn generate_decay_histogram(
    model: &ExcitonModel,
    total_counts: u64,
    bins: &HistogramBins,
    irf_sigma: Option<f64>,
    seed: u64,
) -> Result<DecayHistogram> {
    generate_on_stream(model, total_counts, bins, irf_sigma, seed, 0, false)
}

fn generate_on_stream(
    model: &ExcitonModel,
    total_counts: u64,
    bins: &HistogramBins,
    irf_sigma: Option<f64>,
    seed: u64,
    stream: u64,
    noiseless: bool,
) -> Result<DecayHistogram> {
    model.validate()?;
    ensure(total_counts > 0, || "total_counts must be > 0".into())?;
    let edges = bins.edges()?;
    let centers: Vec<f64> = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let expected = expected_counts(model, &centers, total_counts as f64, irf_sigma);
    let counts: Vec<u64> = if noiseless {
        expected.iter().map(|e| e.round() as u64).collect()
    } else {
        let mut rng = stream_rng(seed, stream);
        expected.iter().map(|&m| poisson_draw(&mut rng, m)).collect()
    };
    let total_counts = counts.iter().sum();
    Ok(DecayHistogram { bin_edges: edges, counts, total_counts, irf_sigma, seed })
}

/// Acquisition settings shared by every point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Expected counts at `I / I_0 = 1`.
    pub counts_scale: f64,
    /// Skip shot noise on intensities and round histogram expectations.
    pub noiseless: bool,
    pub histogram_counts: u64,
    pub bins: HistogramBins,
    pub irf_sigma: Option<f64>,
    pub amp_ratio: f64,
    pub background: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub voltage: f64,
    pub phi_rad: f64,
    pub intensity_expected: f64,
    pub intensity_counts: f64,
    /// True `gamma_f - gamma_s` at this phase.
    pub gamma_rad: f64,
    pub histogram: DecayHistogram,
}

/// Forward sweep over `voltages`. Runs on the current rayon pool.
pub fn generate_sweep(
    scene: &EmitterScene,
    weights: (f64, f64),
    r_t_mag: f64,
    cal: &PhaseCalibration,
    voltages: &[f64],
    settings: &SweepSettings,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    scene.validate()?;
    cal.validate()?;
    ensure(settings.counts_scale > 0.0, || "counts_scale must be > 0".into())?;
    voltages
        .par_iter()
        .enumerate()
        .map(|(i, &voltage)| {
            let phi = phase_of_voltage(cal, voltage)?;
            let rel = intensity(scene, weights, r_t_mag, phi, Dipole::AveragedBoth)?;
            let intensity_expected = settings.counts_scale * rel;
            let intensity_counts = if settings.noiseless {
                intensity_expected
            } else {
                poisson_draw(&mut stream_rng(seed, 2 * i as u64), intensity_expected) as f64
            };
            let gamma_rad = decay_rate(scene, r_t_mag, phi, Dipole::AveragedBoth)?;
            let exciton = ExcitonModel {
                gamma_f: gamma_rad + scene.gamma_nrad,
                gamma_s: scene.gamma_nrad,
                amp_ratio: settings.amp_ratio,
                background: settings.background,
            };
            let histogram = generate_on_stream(
                &exciton,
                settings.histogram_counts,
                &settings.bins,
                settings.irf_sigma,
                seed,
                2 * i as u64 + 1,
                settings.noiseless,
            )?;
            Ok(SweepRecord {
                voltage,
                phi_rad: phi,
                intensity_expected,
                intensity_counts,
                gamma_rad,
                histogram,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::LeakyModel;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn table() -> PhaseCalibration {
        PhaseCalibration::Table { knots: vec![(0.0, 0.0), (1.0, 0.5), (3.0, 2.0), (4.0, 3.5)] }
    }

    fn scene() -> EmitterScene {
        EmitterScene {
            y0_nm: 0.0,
            mirror_distance_nm: 30_000.0,
            k: 0.0173,
            gamma_x0: 0.0,
            gamma_y0: 0.8,
            gamma_b: 0.2,
            gamma_nrad: 0.1,
            leaky: LeakyModel::EqualTotal,
            dipole_moment: None,
        }
    }

    fn settings() -> SweepSettings {
        SweepSettings {
            counts_scale: 20_000.0,
            noiseless: false,
            histogram_counts: 10_000,
            bins: HistogramBins::default(),
            irf_sigma: None,
            amp_ratio: 0.05,
            background: 0.0,
        }
    }

    #[test]
    fn table_knots_exact() {
        let cal = table();
        for (v, p) in [(0.0, 0.0), (1.0, 0.5), (3.0, 2.0), (4.0, 3.5)] {
            assert_eq!(phase_of_voltage(&cal, v).unwrap(), p);
        }
        assert_relative_eq!(phase_of_voltage(&cal, 2.0).unwrap(), 1.25);
        assert!(matches!(phase_of_voltage(&cal, 4.5), Err(Error::OutOfCalibration { .. })));
    }

    #[test]
    fn quadratic_scaling_law() {
        let cal = PhaseCalibration::Quadratic { coeff: 0.03, offset: 0.4, v_min: 0.0, v_max: 10.0 };
        for v in [0.5, 1.7, 4.9] {
            let a = phase_of_voltage(&cal, v).unwrap() - 0.4;
            let b = phase_of_voltage(&cal, 2.0 * v).unwrap() - 0.4;
            assert_relative_eq!(b, 4.0 * a, max_relative = 1e-14);
        }
    }

    #[test]
    fn non_monotone_table_rejected() {
        let cal = PhaseCalibration::Table { knots: vec![(0.0, 0.0), (1.0, 1.0), (2.0, 0.5)] };
        assert!(cal.validate().is_err());
        let cal = PhaseCalibration::Table { knots: vec![(0.0, 0.0), (0.0, 1.0)] };
        assert!(cal.validate().is_err());
    }

    #[test]
    fn histogram_invariants_and_determinism() {
        let model = ExcitonModel { gamma_f: 1.1, gamma_s: 0.1, amp_ratio: 0.05, background: 1.0 };
        let bins = HistogramBins::default();
        let a = generate_decay_histogram(&model, 100_000, &bins, None, 42).unwrap();
        let b = generate_decay_histogram(&model, 100_000, &bins, None, 42).unwrap();
        let c = generate_decay_histogram(&model, 100_000, &bins, None, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.counts, c.counts);
        assert_eq!(a.counts.iter().sum::<u64>(), a.total_counts);
        assert_eq!(a.counts.len(), 500);
        assert!(a.bin_edges.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn single_exponential_slope() {
        let model = ExcitonModel { gamma_f: 1.1, gamma_s: 0.1, amp_ratio: 0.0, background: 0.0 };
        let h = generate_decay_histogram(&model, 100_000, &HistogramBins::default(), None, 7).unwrap();
        // log-linear regression over the first decade (t < ln(10) / gamma)
        let t_end = 10f64.ln() / 1.1;
        let pts: Vec<(f64, f64)> = h
            .bin_centers()
            .into_iter()
            .zip(&h.counts)
            .filter(|(t, c)| *t < t_end && **c > 0)
            .map(|(t, &c)| (t, (c as f64).ln()))
            .collect();
        let n = pts.len() as f64;
        let (st, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mt, my) = (st / n, sy / n);
        let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
        assert!((-slope - 1.1).abs() / 1.1 < 0.03, "slope {slope}");
    }

    #[test]
    fn irf_preserves_tail() {
        let model = ExcitonModel { gamma_f: 1.0, gamma_s: 0.1, amp_ratio: 0.05, background: 0.0 };
        let centers: Vec<f64> = (0..500).map(|i| 0.025 + 0.05 * i as f64).collect();
        let plain = expected_counts(&model, &centers, 1e5, None);
        let blurred = expected_counts(&model, &centers, 1e5, Some(0.05));
        assert!(blurred[0] < plain[0]);
        assert_relative_eq!(blurred[200], plain[200], max_relative = 1e-2);
    }

    #[test]
    fn poisson_variance_matches_mean() {
        let model = ExcitonModel { gamma_f: 1.1, gamma_s: 0.1, amp_ratio: 0.05, background: 0.0 };
        let bins = HistogramBins::default();
        let reps: Vec<DecayHistogram> = (0..200)
            .map(|s| generate_decay_histogram(&model, 100_000, &bins, None, s).unwrap())
            .collect();
        let n_bins = reps[0].counts.len();
        let centers = reps[0].bin_centers();
        let expected = expected_counts(&model, &centers, 1e5, None);
        let mut checked = 0;
        for b in (0..n_bins).filter(|&b| expected[b] >= 50.0) {
            let xs: Vec<f64> = reps.iter().map(|h| h.counts[b] as f64).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            let ratio = var / mean;
            // 200 samples give a ~10% spread on the variance, so only the
            // ensemble of bins is held to the tight window
            assert!(ratio > 0.6 && ratio < 1.4, "bin {b}: {ratio}");
            checked += 1;
        }
        let ratios: Vec<f64> = (0..n_bins)
            .filter(|&b| expected[b] >= 50.0)
            .map(|b| {
                let xs: Vec<f64> = reps.iter().map(|h| h.counts[b] as f64).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64 / mean
            })
            .collect();
        let avg = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(checked > 100);
        assert!(avg > 0.9 && avg < 1.1, "mean variance/mean {avg}");
    }

    #[test]
    fn noiseless_sweep_follows_interference() {
        let cal = PhaseCalibration::Quadratic { coeff: PI / 100.0, offset: 0.0, v_min: 0.0, v_max: 10.0 };
        let volts: Vec<f64> = (0..12).map(|i| 10.0 * i as f64 / 11.0).collect();
        let s = SweepSettings { noiseless: true, ..settings() };
        let sc = scene();
        let recs = generate_sweep(&sc, (0.0, 1.0), 0.5, &cal, &volts, &s, 1).unwrap();
        for r in &recs {
            let phase = 2.0 * r.phi_rad + sc.theta();
            let exact = 20_000.0 * 0.5 * (1.0 + 0.25 - 2.0 * 0.5 * phase.cos());
            assert_relative_eq!(r.intensity_counts, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn no_mirror_flat_sweep() {
        let cal = PhaseCalibration::Quadratic { coeff: PI / 100.0, offset: 0.0, v_min: 0.0, v_max: 10.0 };
        let volts: Vec<f64> = (0..12).map(|i| 10.0 * i as f64 / 11.0).collect();
        let recs = generate_sweep(&scene(), (0.0, 1.0), 0.0, &cal, &volts, &settings(), 5).unwrap();
        let mean = recs.iter().map(|r| r.intensity_counts).sum::<f64>() / 12.0;
        let chi2: f64 = recs.iter().map(|r| (r.intensity_counts - mean).powi(2) / mean).sum();
        // 95% quantile of chi^2 with 11 degrees of freedom
        assert!(chi2 < 19.675, "chi2 = {chi2}");
    }

    #[test]
    fn sweep_independent_of_thread_count() {
        let cal = PhaseCalibration::Quadratic { coeff: PI / 100.0, offset: 0.0, v_min: 0.0, v_max: 10.0 };
        let volts: Vec<f64> = (0..12).map(|i| 10.0 * i as f64 / 11.0).collect();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| generate_sweep(&scene(), (0.1, 1.0), 0.6, &cal, &volts, &settings(), 9).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
