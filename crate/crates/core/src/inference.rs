//! Inverse problems: Poisson maximum-likelihood lifetime fits, sinusoid fits,
//! phase-map reconstruction from a reference line, and the joint estimate of
//! mirror reflectivity, beta factor and lateral offset from two visibilities.

use nalgebra::{Matrix3, Matrix5, Vector3, Vector5};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::emission::{scene_visibility_rate, EmitterScene, LeakyModel};
use crate::error::{ensure, Error, Result};
use crate::modesolver::{mode_weights, ModeProfile};
use crate::synthlab::{DecayHistogram, ExcitonModel, PhaseCalibration};

/// Outcome of any fit. Parameters are addressed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// One standard deviation per parameter.
    pub uncertainties: Vec<f64>,
    /// Reduced deviance for counting fits, reduced chi^2 otherwise.
    pub goodness: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub flags: Vec<String>,
}

impl FitResult {
    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.uncertainties[i])
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }
}

// ---------------------------------------------------------------------------
// Bi-exponential Poisson fit

/// Parameter order: `[A_f, gamma_f, A_s, gamma_s, background]`.
pub type BiexpParams = [f64; 5];

pub const MAX_FIT_ITERATIONS: usize = 200;
/// Below this many counts a histogram fit is flagged `low_statistics`.
pub const LOW_STATISTICS_COUNTS: f64 = 1000.0;
const MIN_RATE_RATIO: f64 = 1.5;
const MIN_COMPONENT_FRACTION: f64 = 1e-3;

fn biexp_terms(p: &BiexpParams, t: f64) -> (f64, [f64; 5]) {
    let ef = (-p[1] * t).exp();
    let es = (-p[3] * t).exp();
    let mu = p[0] * ef + p[2] * es + p[4];
    (mu, [ef, -p[0] * t * ef, es, -p[2] * t * es, 1.0])
}

pub fn biexp_mean(p: &BiexpParams, t: f64) -> f64 {
    biexp_terms(p, t).0
}

/// Poisson log-likelihood without the parameter-free `ln c!` term.
/// Returns `-inf` if the mean is not positive in a bin that has counts.
pub fn biexp_loglik(p: &BiexpParams, t: &[f64], counts: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (&ti, &c) in t.iter().zip(counts) {
        let mu = biexp_mean(p, ti);
        if mu <= 0.0 {
            return f64::NEG_INFINITY;
        }
        ll += c * mu.ln() - mu;
    }
    ll
}

/// Analytic gradient of [`biexp_loglik`].
pub fn biexp_gradient(p: &BiexpParams, t: &[f64], counts: &[f64]) -> BiexpParams {
    let mut g = [0.0; 5];
    for (&ti, &c) in t.iter().zip(counts) {
        let (mu, d) = biexp_terms(p, ti);
        let w = c / mu - 1.0;
        for k in 0..5 {
            g[k] += w * d[k];
        }
    }
    g
}

/// Expected (Fisher) and observed information matrices.
fn information(p: &BiexpParams, t: &[f64], counts: &[f64]) -> (Matrix5<f64>, Matrix5<f64>) {
    let mut fisher = Matrix5::zeros();
    let mut observed = Matrix5::zeros();
    for (&ti, &c) in t.iter().zip(counts) {
        let (mu, d) = biexp_terms(p, ti);
        let dv = Vector5::from(d);
        let outer = dv * dv.transpose();
        fisher += outer / mu;
        observed += outer * (c / (mu * mu));
        // second derivatives of mu; only the (A, gamma) blocks are nonzero
        let w = c / mu - 1.0;
        let ef = (-p[1] * ti).exp();
        let es = (-p[3] * ti).exp();
        observed[(0, 1)] += w * ti * ef;
        observed[(1, 0)] += w * ti * ef;
        observed[(1, 1)] -= w * p[0] * ti * ti * ef;
        observed[(2, 3)] += w * ti * es;
        observed[(3, 2)] += w * ti * es;
        observed[(3, 3)] -= w * p[2] * ti * ti * es;
    }
    (fisher, observed)
}

fn linear_regression(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    Some((slope, my - slope * mx))
}

/// Tail slope gives the slow rate; the early slope of what the tail leaves
/// behind gives the fast rate.
fn initial_guess(t: &[f64], counts: &[f64]) -> BiexpParams {
    let n = t.len();
    let span = t[n - 1] - t[0];
    let tail: Vec<(f64, f64)> = t
        .iter()
        .zip(counts)
        .filter(|(ti, c)| **ti >= t[0] + 0.5 * span && **c > 0.0)
        .map(|(&ti, &c)| (ti, c.ln()))
        .collect();
    let (mut gs, mut a_s) = match linear_regression(&tail) {
        Some((slope, icpt)) if slope < 0.0 => (-slope, icpt.exp()),
        _ => (1.0 / span, counts[n - 1].max(1.0)),
    };
    let first_excess = counts[0] - a_s * (-gs * t[0]).exp();
    let early: Vec<(f64, f64)> = t
        .iter()
        .zip(counts)
        .map(|(&ti, &c)| (ti, c - a_s * (-gs * ti).exp()))
        .take_while(|(_, r)| *r > 0.1 * first_excess && first_excess > 0.0)
        .map(|(ti, r)| (ti, r.ln()))
        .collect();
    let (mut gf, mut a_f) = match linear_regression(&early) {
        Some((slope, icpt)) if -slope > gs => (-slope, icpt.exp()),
        _ => (5.0 * gs, counts[0].max(1.0)),
    };
    if !(gf.is_finite() && a_f.is_finite()) {
        gf = 5.0 * gs;
        a_f = counts[0].max(1.0);
    }
    if !(gs.is_finite() && a_s.is_finite()) {
        gs = 1.0 / span;
        a_s = 1.0;
    }
    [a_f, gf, a_s, gs, 0.0]
}

fn admissible(p: &BiexpParams, t: &[f64]) -> bool {
    p.iter().all(|v| v.is_finite())
        && p[1] > 0.0
        && p[3] >= 0.0
        && p[0] >= 0.0
        && p[2] >= 0.0
        && t.iter().all(|&ti| biexp_mean(p, ti) > 0.0)
}

/// Fit window: from the histogram peak to the end.
fn fit_window(hist: &DecayHistogram) -> (Vec<f64>, Vec<f64>) {
    let centers = hist.bin_centers();
    let peak = hist
        .counts
        .iter()
        .enumerate()
        .fold(0, |best, (i, &c)| if c > hist.counts[best] { i } else { best });
    let counts = hist.counts[peak..].iter().map(|&c| c as f64).collect();
    (centers[peak..].to_vec(), counts)
}

/// Poisson maximum-likelihood fit of a decay histogram.
pub fn fit_biexponential(hist: &DecayHistogram, init: Option<&ExcitonModel>) -> Result<FitResult> {
    let (t, counts) = fit_window(hist);
    let mut res = fit_biexponential_counts(&t, &counts, init)?;
    if (hist.total_counts as f64) < LOW_STATISTICS_COUNTS {
        res.flags.push("low_statistics".into());
    }
    Ok(res)
}

/// Same fit on raw `(t, counts)` samples; counts may be non-integer, e.g. a
/// noiseless expectation.
pub fn fit_biexponential_counts(
    t: &[f64],
    counts: &[f64],
    init: Option<&ExcitonModel>,
) -> Result<FitResult> {
    ensure(t.len() == counts.len(), || "times and counts differ in length".into())?;
    ensure(t.len() >= 8, || format!("{} bins are too few for five parameters", t.len()))?;
    ensure(counts.iter().all(|c| *c >= 0.0 && c.is_finite()), || "counts must be >= 0".into())?;

    let guess = initial_guess(t, counts);
    let mut p = match init {
        Some(m) => {
            // amplitudes come from the data, rates from the caller
            let scale = counts[0] / ((-m.gamma_f * t[0]).exp() + m.amp_ratio * (-m.gamma_s * t[0]).exp());
            [scale, m.gamma_f, scale * m.amp_ratio, m.gamma_s, m.background]
        }
        None => guess,
    };
    if !admissible(&p, t) {
        p = guess;
    }
    let guess_ratio = guess[1] / guess[3];

    let mut lambda = 1e-3;
    let mut ll = biexp_loglik(&p, t, counts);
    let mut converged = false;
    let mut last_small: Option<f64> = None;
    let mut n_iter = 0;
    while n_iter < MAX_FIT_ITERATIONS {
        n_iter += 1;
        let g = Vector5::from(biexp_gradient(&p, t, counts));
        let (fisher, _) = information(&p, t, counts);
        let decrement = fisher
            .try_inverse()
            .map(|inv| g.dot(&(inv * g)))
            .unwrap_or(f64::INFINITY);
        if decrement < 1e-14 {
            converged = true;
            break;
        }
        if decrement < 1e-6 {
            // Likelihood differences are at rounding level here, so they cannot
            // steer the step. Take plain scoring steps while the decrement
            // keeps shrinking and stop once it stalls.
            if last_small.is_some_and(|d| decrement > 0.5 * d) {
                converged = true;
                break;
            }
            let trial = fisher.lu().solve(&g).map(|d| [p[0] + d[0], p[1] + d[1], p[2] + d[2], p[3] + d[3], p[4] + d[4]]);
            match trial {
                Some(q) if admissible(&q, t) => {
                    p = q;
                    ll = biexp_loglik(&p, t, counts);
                    last_small = Some(decrement);
                    continue;
                }
                _ => {
                    converged = true;
                    break;
                }
            }
        }
        let mut stepped = false;
        while lambda < 1e12 {
            let mut a = fisher;
            for k in 0..5 {
                a[(k, k)] *= 1.0 + lambda;
            }
            if let Some(delta) = a.lu().solve(&g) {
                let trial = [
                    p[0] + delta[0],
                    p[1] + delta[1],
                    p[2] + delta[2],
                    p[3] + delta[3],
                    p[4] + delta[4],
                ];
                if admissible(&trial, t) {
                    let trial_ll = biexp_loglik(&trial, t, counts);
                    if trial_ll >= ll {
                        p = trial;
                        ll = trial_ll;
                        lambda = (lambda * 0.1).max(1e-12);
                        stepped = true;
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !stepped {
            // no ascent direction left: converged up to rounding, or stuck
            converged = decrement < 1e-6;
            break;
        }
    }

    // order the two components so that `f` is the faster one
    if p[3] > p[1] {
        p = [p[2], p[3], p[0], p[1], p[4]];
    }
    // signal carried by each component over the window, relative to the total
    let component = |a: f64, g: f64| {
        let (t0, t1) = (t[0], t[t.len() - 1]);
        if g > 0.0 { a * ((-g * t0).exp() - (-g * t1).exp()) / g } else { a * (t1 - t0) }
    };
    let (sig_f, sig_s) = (component(p[0], p[1]), component(p[2], p[3]));
    if sig_f.min(sig_s) < MIN_COMPONENT_FRACTION * (sig_f + sig_s) {
        return Err(Error::NonIdentifiable(
            "one exponential component carries no measurable signal".into(),
        ));
    }
    // the weaker component must stand out of its own uncertainty
    let (weak_amp, weak_idx) = if sig_f < sig_s { (p[0], 0) } else { (p[2], 2) };
    let weak_sigma = information(&p, t, counts)
        .0
        .try_inverse()
        .map(|c| c[(weak_idx, weak_idx)].max(0.0).sqrt())
        .unwrap_or(f64::INFINITY);
    if weak_amp < 3.0 * weak_sigma {
        return Err(Error::NonIdentifiable(format!(
            "weaker component amplitude {weak_amp:.3e} is within 3 sigma ({weak_sigma:.3e}) of zero"
        )));
    }
    let ratio = if p[3] > 0.0 { p[1] / p[3] } else { f64::INFINITY };
    if ratio < MIN_RATE_RATIO || (!converged && guess_ratio < MIN_RATE_RATIO) {
        return Err(Error::NonIdentifiable(format!(
            "gamma_f / gamma_s = {ratio:.3} is below {MIN_RATE_RATIO}"
        )));
    }
    if !converged {
        return Err(Error::NotConverged(n_iter));
    }

    let (fisher, observed) = information(&p, t, counts);
    let cov = observed
        .try_inverse()
        .filter(|c| (0..5).all(|k| c[(k, k)] >= 0.0))
        .or_else(|| fisher.try_inverse())
        .ok_or_else(|| Error::NonIdentifiable("singular information matrix".into()))?;
    let sd = |k: usize| cov[(k, k)].max(0.0).sqrt();
    let var_rad = cov[(1, 1)] + cov[(3, 3)] - 2.0 * cov[(1, 3)];

    let deviance: f64 = t
        .iter()
        .zip(counts)
        .map(|(&ti, &c)| {
            let mu = biexp_mean(&p, ti);
            2.0 * (if c > 0.0 { c * (c / mu).ln() } else { 0.0 } - (c - mu))
        })
        .sum();
    let dof = (t.len() - 5).max(1) as f64;

    let names = ["a_f", "gamma_f", "a_s", "gamma_s", "background", "gamma_rad", "gamma_nrad"];
    Ok(FitResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        params: vec![p[0], p[1], p[2], p[3], p[4], p[1] - p[3], p[3]],
        uncertainties: vec![sd(0), sd(1), sd(2), sd(3), sd(4), var_rad.max(0.0).sqrt(), sd(3)],
        goodness: deviance / dof,
        converged,
        n_iter,
        flags: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// Sinusoid fit

/// Smallest arc of the circle containing every angle, in rad.
fn circular_span(angles: &[f64]) -> f64 {
    let mut a: Vec<f64> = angles.iter().map(|x| x.rem_euclid(2.0 * PI)).collect();
    a.sort_by(f64::total_cmp);
    let mut gap = a[0] + 2.0 * PI - a[a.len() - 1];
    for w in a.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    2.0 * PI - gap
}

/// Weighted least-squares fit of `v = m (1 + nu cos(2 phi + theta))`.
///
/// Without `sigmas` all points get unit weight and the covariance is scaled
/// by the residual variance.
pub fn fit_sinusoid(phases: &[f64], values: &[f64], sigmas: Option<&[f64]>) -> Result<FitResult> {
    ensure(phases.len() == values.len(), || "phases and values differ in length".into())?;
    if let Some(s) = sigmas {
        ensure(s.len() == values.len(), || "sigmas and values differ in length".into())?;
        ensure(s.iter().all(|x| *x > 0.0 && x.is_finite()), || "sigmas must be > 0".into())?;
    }
    if phases.len() < 6 {
        return Err(Error::InsufficientPhaseSpan(format!("{} points, need 6", phases.len())));
    }
    let doubled: Vec<f64> = phases.iter().map(|p| 2.0 * p).collect();
    let span = circular_span(&doubled);
    if span < PI - 1e-9 {
        return Err(Error::InsufficientPhaseSpan(format!("2 phi covers {span:.3} rad, need pi")));
    }

    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for (i, (&x, &v)) in doubled.iter().zip(values).enumerate() {
        let w = sigmas.map_or(1.0, |s| s[i].powi(-2));
        let row = Vector3::new(1.0, x.cos(), x.sin());
        normal += row * row.transpose() * w;
        rhs += row * (w * v);
    }
    let inv = normal
        .try_inverse()
        .ok_or_else(|| Error::InsufficientPhaseSpan("degenerate phase sampling".into()))?;
    let beta = inv * rhs;
    let (m, a, b) = (beta[0], beta[1], beta[2]);

    let chi2: f64 = doubled
        .iter()
        .zip(values)
        .enumerate()
        .map(|(i, (&x, &v))| {
            let r = v - (m + a * x.cos() + b * x.sin());
            r * r * sigmas.map_or(1.0, |s| s[i].powi(-2))
        })
        .sum();
    let dof = (values.len() - 3) as f64;
    let cov = if sigmas.is_some() { inv } else { inv * (chi2 / dof) };

    let amp = a.hypot(b);
    let nu = amp / m.abs();
    let theta = (-b).atan2(a).rem_euclid(2.0 * PI);
    let mut flags = Vec::new();
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if amp <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        flags.push("theta_undefined".to_string());
    }

    // delta-method propagation from (m, a, b)
    let var = |g: Vector3<f64>| (g.transpose() * cov * g)[(0, 0)].max(0.0).sqrt();
    let (d_amp, d_theta) = if amp > 0.0 {
        (
            Vector3::new(0.0, a / amp, b / amp),
            Vector3::new(0.0, b / (amp * amp), -a / (amp * amp)),
        )
    } else {
        (Vector3::zeros(), Vector3::zeros())
    };
    let d_nu = (d_amp - Vector3::new(amp / m, 0.0, 0.0)) / m.abs();

    Ok(FitResult {
        names: ["mean", "amplitude", "theta", "nu"].iter().map(|s| s.to_string()).collect(),
        params: vec![m, amp, theta, nu],
        uncertainties: vec![cov[(0, 0)].max(0.0).sqrt(), var(d_amp), var(d_theta), var(d_nu)],
        goodness: chi2 / dof,
        converged: true,
        n_iter: 1,
        flags,
    })
}

// ---------------------------------------------------------------------------
// Phase-map reconstruction

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMap {
    /// Gauge: zero at the first voltage, increasing with voltage.
    pub calibration: PhaseCalibration,
    pub fringes: f64,
    /// Fewer than 1.5 fringes: the branch direction is a guess.
    pub reflection_ambiguous: bool,
    pub note: String,
}

/// Extremum of a parabola through three equally spaced samples.
fn parabolic_peak(y0: f64, y1: f64, y2: f64) -> f64 {
    let curv = y0 - 2.0 * y1 + y2;
    if curv == 0.0 {
        y1
    } else {
        y1 - (y2 - y0).powi(2) / (8.0 * curv)
    }
}

/// Recover `phi(V)` from the fringe of one emission line, assuming the phase
/// is monotone in voltage. The overall sign and offset of the phase are not
/// observable and are fixed by convention.
pub fn reconstruct_phase_map(voltages: &[f64], intensities: &[f64]) -> Result<PhaseMap> {
    let n = voltages.len();
    ensure(n == intensities.len(), || "voltages and intensities differ in length".into())?;
    ensure(n >= 5, || format!("{n} samples are too few"))?;
    ensure(voltages.windows(2).all(|w| w[1] > w[0]), || {
        "voltages must be strictly increasing".into()
    })?;

    // fringe extremes, refined where they fall between samples
    let mut hi = intensities.iter().cloned().fold(f64::MIN, f64::max);
    let mut lo = intensities.iter().cloned().fold(f64::MAX, f64::min);
    for j in 1..n - 1 {
        let (a, b, c) = (intensities[j - 1], intensities[j], intensities[j + 1]);
        if b >= a && b >= c {
            hi = hi.max(parabolic_peak(a, b, c));
        }
        if b <= a && b <= c {
            lo = lo.min(parabolic_peak(a, b, c));
        }
    }
    if !(hi > lo) {
        return Err(Error::InsufficientFringes("flat intensity".into()));
    }
    let c: Vec<f64> = intensities
        .iter()
        .map(|&v| ((2.0 * v - hi - lo) / (hi - lo)).clamp(-1.0, 1.0))
        .collect();

    // Sample noise of the normalised fringe from the median absolute second
    // difference. An extremum found before the first full swing only counts
    // as a turning point if it sits at a fringe extreme; otherwise it is a
    // noise wiggle on a slowly starting phase.
    let mut d2: Vec<f64> = c.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).collect();
    d2.sort_by(f64::total_cmp);
    let noise = 1.4826 * d2[d2.len() / 2] / 6f64.sqrt();
    let at_extreme = |j: usize| 1.0 - c[j].abs() < (4.0 * noise).max(1e-3);

    // turning points with hysteresis
    const HYST: f64 = 0.2;
    let mut turns: Vec<usize> = Vec::new();
    let mut dir = 0i8;
    let mut first_dir = 0i8;
    let (mut hi_i, mut lo_i, mut ext) = (0usize, 0usize, 0usize);
    for i in 1..n {
        match dir {
            0 => {
                if c[i] > c[hi_i] {
                    hi_i = i;
                }
                if c[i] < c[lo_i] {
                    lo_i = i;
                }
                if c[i] - c[lo_i] > HYST {
                    dir = 1;
                    if lo_i > 0 && at_extreme(lo_i) {
                        first_dir = -1;
                        turns.push(lo_i);
                    } else {
                        first_dir = 1;
                    }
                    ext = i;
                } else if c[hi_i] - c[i] > HYST {
                    dir = -1;
                    if hi_i > 0 && at_extreme(hi_i) {
                        first_dir = 1;
                        turns.push(hi_i);
                    } else {
                        first_dir = -1;
                    }
                    ext = i;
                }
            }
            1 => {
                if c[i] >= c[ext] {
                    ext = i;
                } else if c[ext] - c[i] > HYST {
                    turns.push(ext);
                    dir = -1;
                    ext = i;
                }
            }
            _ => {
                if c[i] <= c[ext] {
                    ext = i;
                } else if c[i] - c[ext] > HYST {
                    turns.push(ext);
                    dir = 1;
                    ext = i;
                }
            }
        }
    }
    if dir == 0 {
        return Err(Error::InsufficientFringes("no fringe contrast above noise".into()));
    }
    // an extremum close to the end never builds the full hysteresis; near a
    // fringe peak both branches agree, so accepting it costs little
    if ext + 1 < n && c[ext].abs() > 0.9 {
        turns.push(ext);
    }
    for w in turns.windows(2) {
        if w[1] - w[0] <= 2 {
            return Err(Error::BranchAmbiguity(format!(
                "turning points at {} V and {} V are {} samples apart",
                voltages[w[0]],
                voltages[w[1]],
                w[1] - w[0]
            )));
        }
    }
    if let Some(&j) = turns.iter().find(|&&j| c[j].abs() < 0.8) {
        return Err(Error::BranchAmbiguity(format!(
            "intensity reverses at {} V without reaching a fringe extremum",
            voltages[j]
        )));
    }

    // sub-sample position of each turning point from the parabola vertex, so
    // the sample nearest an extremum lands on the correct side of it
    let turn_pos: Vec<f64> = turns
        .iter()
        .map(|&j| {
            if j == 0 || j + 1 >= n {
                return j as f64;
            }
            let (a, b, d) = (c[j - 1], c[j], c[j + 1]);
            let curv = a - 2.0 * b + d;
            let shift = if curv == 0.0 { 0.0 } else { 0.5 * (a - d) / curv };
            j as f64 + shift.clamp(-0.5, 0.5)
        })
        .collect();

    // falling normalised intensity means arccos is rising: start on branch 0
    let k0 = if first_dir < 0 { 0 } else { 1 };
    let mut psi = Vec::with_capacity(n);
    let mut passed = 0;
    for i in 0..n {
        while passed < turn_pos.len() && turn_pos[passed] < i as f64 {
            passed += 1;
        }
        let k = k0 + passed;
        let a = c[i].acos();
        let base = k as f64 * PI;
        psi.push(if k % 2 == 0 { base + a } else { base + PI - a });
    }
    let mut knots = Vec::with_capacity(n);
    let mut running = 0.0f64;
    for (i, &v) in voltages.iter().enumerate() {
        running = running.max(0.5 * (psi[i] - psi[0]));
        knots.push((v, running));
    }
    let fringes = (psi[n - 1] - psi[0]) / (2.0 * PI);
    if fringes < 0.95 {
        return Err(Error::InsufficientFringes(format!("{fringes:.2} fringes, need at least 0.95")));
    }
    let reflection_ambiguous = fringes < 1.5;
    let note = if reflection_ambiguous {
        format!("{fringes:.2} fringes: the branch direction cannot be verified; phase sign and offset are conventional")
    } else {
        "phase sign and offset are conventional (zero at first voltage, increasing)".into()
    };
    Ok(PhaseMap { calibration: PhaseCalibration::Table { knots }, fringes, reflection_ambiguous, note })
}

// ---------------------------------------------------------------------------
// Parameter estimation

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasiblePoint {
    pub r_t: f64,
    pub beta_y0: f64,
    pub y0_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityEstimate {
    pub nu_i: Measured,
    pub nu_gamma: Measured,
    pub theta_offset: Option<f64>,
    pub r_t_lower_bound: f64,
    pub feasible_set: Vec<FeasiblePoint>,
    pub beta_y0_range: (f64, f64),
    pub r_t_range: (f64, f64),
    pub y0_range_nm: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub leaky: LeakyModel,
    pub n_y0: usize,
    pub n_r: usize,
    /// Acceptance window in units of the measurement sigma.
    pub n_sigma: f64,
    /// Sigmas are floored here so the window stays wider than a grid step.
    pub sigma_floor: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { leaky: LeakyModel::EqualTotal, n_y0: 201, n_r: 101, n_sigma: 2.0, sigma_floor: 0.01 }
    }
}

/// Smallest reflectivity compatible with an intensity visibility: the value a
/// perfectly centred emitter would need.
pub fn r_t_lower_bound(nu_i: f64) -> Result<f64> {
    ensure((0.0..=1.0).contains(&nu_i), || format!("nu_I = {nu_i} outside [0, 1]"))?;
    if nu_i == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 - (1.0 - nu_i * nu_i).sqrt()) / nu_i)
}

/// Scene with waveguide rates proportional to the mode weights and the leaky
/// rate set by `beta_y0`. Rates are in arbitrary units; only ratios matter.
pub fn scene_for_beta(
    weights: (f64, f64),
    beta_y0: f64,
    leaky: LeakyModel,
) -> Option<EmitterScene> {
    let (wx, wy) = weights;
    if !(wy > 0.0 && beta_y0 > 0.0) {
        return None;
    }
    let (gx, gy) = (wx / wy, 1.0);
    let gamma_b = match leaky {
        LeakyModel::Shared => gy / beta_y0 - gy,
        // total of the dominant dipole is gy / beta_y0
        LeakyModel::EqualTotal => gy / beta_y0 - gx.max(gy),
    };
    if gamma_b < -1e-12 {
        return None;
    }
    Some(EmitterScene {
        y0_nm: 0.0,
        mirror_distance_nm: 0.0,
        k: 1.0,
        gamma_x0: gx,
        gamma_y0: gy,
        gamma_b: gamma_b.max(0.0),
        gamma_nrad: 0.0,
        leaky,
        dipole_moment: None,
    })
}

/// Largest admissible `beta_y0` for the given weights.
fn beta_y0_max(weights: (f64, f64), leaky: LeakyModel) -> f64 {
    match leaky {
        LeakyModel::Shared => 1.0,
        LeakyModel::EqualTotal => (weights.1 / weights.0).min(1.0),
    }
}

/// Forward visibility pair of a `(r_T, beta_y0, y0)` triple.
pub fn forward_visibilities(
    profile: &ModeProfile,
    point: &FeasiblePoint,
    leaky: LeakyModel,
) -> Result<(f64, f64)> {
    let w = mode_weights(profile, point.y0_nm)?;
    let nu_i = crate::emission::visibility_intensity_mixed(point.r_t, w)?;
    let scene = scene_for_beta(w, point.beta_y0, leaky)
        .ok_or_else(|| Error::InvalidParameter(format!("beta_y0 = {} not admissible", point.beta_y0)))?;
    Ok((nu_i, scene_visibility_rate(&scene, point.r_t)?))
}

/// Centred bound plus a grid scan over `(y0, r_T)` keeping every triple whose
/// forward visibilities match both measurements.
pub fn estimate_parameters(
    nu_i: Measured,
    nu_gamma: Measured,
    profile: &ModeProfile,
    opts: &EstimateOptions,
) -> Result<VisibilityEstimate> {
    for (name, m) in [("nu_I", nu_i), ("nu_gamma", nu_gamma)] {
        ensure((0.0..=1.0).contains(&m.value), || format!("{name} = {} outside [0, 1]", m.value))?;
        ensure(m.sigma >= 0.0 && m.sigma.is_finite(), || format!("{name} sigma must be finite"))?;
    }
    ensure(opts.n_y0 >= 2 && opts.n_r >= 2, || "scan grid needs two points per axis".into())?;
    let bound = r_t_lower_bound(nu_i.value)?;
    let tol_i = opts.n_sigma * nu_i.sigma.max(opts.sigma_floor);
    let tol_g = opts.n_sigma * nu_gamma.sigma.max(opts.sigma_floor);
    // emitters sit inside the core
    let half = 0.5 * profile.width_nm;

    let rows: Vec<Vec<FeasiblePoint>> = (0..opts.n_y0)
        .into_par_iter()
        .map(|iy| {
            let y0 = half * iy as f64 / (opts.n_y0 - 1) as f64;
            let Ok(w) = mode_weights(profile, y0) else { return Vec::new() };
            if w.1 <= 0.0 {
                return Vec::new();
            }
            let beta_max = beta_y0_max(w, opts.leaky);
            let nu_g_at = |r: f64, beta: f64| {
                scene_for_beta(w, beta, opts.leaky)
                    .and_then(|s| scene_visibility_rate(&s, r).ok())
                    .unwrap_or(0.0)
            };
            let mut out = Vec::new();
            for ir in 0..opts.n_r {
                let r = ir as f64 / (opts.n_r - 1) as f64;
                if r < bound {
                    continue;
                }
                let Ok(model_i) = crate::emission::visibility_intensity_mixed(r, w) else { continue };
                if (model_i - nu_i.value).abs() > tol_i {
                    continue;
                }
                // nu_gamma rises monotonically with beta_y0
                let (mut lo, mut hi) = (0.0, beta_max);
                if nu_g_at(r, hi) < nu_gamma.value {
                    lo = hi;
                } else {
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if nu_g_at(r, mid) < nu_gamma.value {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                }
                let beta = if lo == beta_max { beta_max } else { 0.5 * (lo + hi) };
                if beta <= 0.0 {
                    continue;
                }
                if (nu_g_at(r, beta) - nu_gamma.value).abs() <= tol_g {
                    out.push(FeasiblePoint { r_t: r, beta_y0: beta, y0_nm: y0 });
                }
            }
            out
        })
        .collect();
    let feasible_set: Vec<FeasiblePoint> = rows.into_iter().flatten().collect();
    if feasible_set.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    let range = |f: fn(&FeasiblePoint) -> f64| {
        feasible_set
            .iter()
            .map(f)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    Ok(VisibilityEstimate {
        nu_i,
        nu_gamma,
        theta_offset: None,
        r_t_lower_bound: bound,
        beta_y0_range: range(|p| p.beta_y0),
        r_t_range: range(|p| p.r_t),
        y0_range_nm: range(|p| p.y0_nm),
        feasible_set,
    })
}

// ---------------------------------------------------------------------------
// Sweep analysis

/// One phase point of a measured sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub voltage: f64,
    pub phi_rad: f64,
    pub intensity_counts: f64,
    pub histogram: Option<DecayHistogram>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFit {
    pub voltage: f64,
    pub phi_rad: f64,
    pub gamma_rad: f64,
    pub gamma_rad_sigma: f64,
    pub gamma_nrad: f64,
    pub gamma_nrad_sigma: f64,
    pub goodness: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAnalysis {
    pub points: Vec<PointFit>,
    pub intensity_fit: FitResult,
    pub rate_fit: Option<FitResult>,
    pub nu_i: Measured,
    pub nu_gamma: Option<Measured>,
    pub gamma_max: Option<Measured>,
    pub gamma_min: Option<Measured>,
    pub estimate: Option<VisibilityEstimate>,
    pub estimate_error: Option<String>,
}

/// Fits every histogram, fits sinusoids to intensity and radiative rate, and
/// runs the parameter estimate on the two visibilities.
pub fn analyze_sweep(
    points: &[SweepPoint],
    profile: Option<&ModeProfile>,
    opts: &EstimateOptions,
) -> Result<SweepAnalysis> {
    ensure(!points.is_empty(), || "empty sweep".into())?;
    let phis: Vec<f64> = points.iter().map(|p| p.phi_rad).collect();
    let counts: Vec<f64> = points.iter().map(|p| p.intensity_counts).collect();
    let sig: Vec<f64> = counts.iter().map(|c| c.max(1.0).sqrt()).collect();
    let intensity_fit = fit_sinusoid(&phis, &counts, Some(&sig))?;
    let nu_i = Measured::new(
        intensity_fit.get("nu").unwrap_or(0.0).min(1.0),
        intensity_fit.sigma("nu").unwrap_or(0.0),
    );

    let fits: Vec<Option<PointFit>> = points
        .par_iter()
        .map(|p| -> Result<Option<PointFit>> {
            let Some(h) = &p.histogram else { return Ok(None) };
            let f = fit_biexponential(h, None)?;
            Ok(Some(PointFit {
                voltage: p.voltage,
                phi_rad: p.phi_rad,
                gamma_rad: f.get("gamma_rad").unwrap_or(f64::NAN),
                gamma_rad_sigma: f.sigma("gamma_rad").unwrap_or(f64::NAN),
                gamma_nrad: f.get("gamma_nrad").unwrap_or(f64::NAN),
                gamma_nrad_sigma: f.sigma("gamma_nrad").unwrap_or(f64::NAN),
                goodness: f.goodness,
                flags: f.flags,
            }))
        })
        .collect::<Result<_>>()?;
    let fitted: Vec<PointFit> = fits.into_iter().flatten().collect();

    let (mut rate_fit, mut nu_gamma, mut gamma_max, mut gamma_min) = (None, None, None, None);
    if !fitted.is_empty() {
        let ph: Vec<f64> = fitted.iter().map(|p| p.phi_rad).collect();
        let g: Vec<f64> = fitted.iter().map(|p| p.gamma_rad).collect();
        let s: Vec<f64> = fitted.iter().map(|p| p.gamma_rad_sigma.max(1e-12)).collect();
        let f = fit_sinusoid(&ph, &g, Some(&s))?;
        let (m, a) = (f.params[0], f.params[1]);
        let (sm, sa) = (f.uncertainties[0], f.uncertainties[1]);
        let spread = sm.hypot(sa);
        gamma_max = Some(Measured::new(m + a, spread));
        gamma_min = Some(Measured::new(m - a, spread));
        nu_gamma = Some(Measured::new(f.params[3].min(1.0), f.uncertainties[3]));
        rate_fit = Some(f);
    }

    let (mut estimate, mut estimate_error) = (None, None);
    if let (Some(profile), Some(nu_g)) = (profile, nu_gamma) {
        match estimate_parameters(nu_i, nu_g, profile, opts) {
            Ok(mut e) => {
                e.theta_offset = intensity_fit.get("theta");
                estimate = Some(e);
            }
            Err(err) => estimate_error = Some(err.to_string()),
        }
    }
    Ok(SweepAnalysis {
        points: fitted,
        intensity_fit,
        rate_fit,
        nu_i,
        nu_gamma,
        gamma_max,
        gamma_min,
        estimate,
        estimate_error,
    })
}

// ---------------------------------------------------------------------------
// Lifetime-modulation table

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRow {
    pub qd: String,
    pub lambda_nm: f64,
    pub gamma_max: f64,
    pub gamma_min: f64,
    pub nu_gamma: f64,
    pub nu_i: f64,
    pub gamma_max_sigma: f64,
    pub gamma_min_sigma: f64,
    pub nu_gamma_sigma: f64,
    pub nu_i_sigma: f64,
}

/// Used when a row carries no intensity-visibility uncertainty.
pub const DEFAULT_NU_I_SIGMA: f64 = 0.05;

#[derive(Debug, Deserialize)]
struct RawRow {
    qd: String,
    lambda_nm: f64,
    gamma_max: f64,
    gamma_min: f64,
    nu_gamma: f64,
    #[serde(rename = "nu_I")]
    nu_i: f64,
    gamma_max_sigma: Option<f64>,
    gamma_min_sigma: Option<f64>,
    nu_gamma_sigma: Option<f64>,
    #[serde(rename = "nu_I_sigma")]
    nu_i_sigma: Option<f64>,
}

/// Parses the table CSV (header `qd,lambda_nm,gamma_max,gamma_min,nu_gamma,nu_I`,
/// optionally followed by `*_sigma` columns). Line numbers in errors are 1-based
/// and count the header.
pub fn parse_lifetime_table<R: std::io::Read>(reader: R) -> Result<Vec<LifetimeRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedRow { line: 1, reason: e.to_string() })?
        .clone();
    for required in ["qd", "lambda_nm", "gamma_max", "gamma_min", "nu_gamma", "nu_I"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::MalformedRow { line: 1, reason: format!("missing column {required}") });
        }
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
        let raw: RawRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
        let row = LifetimeRow {
            qd: raw.qd,
            lambda_nm: raw.lambda_nm,
            gamma_max: raw.gamma_max,
            gamma_min: raw.gamma_min,
            nu_gamma: raw.nu_gamma,
            nu_i: raw.nu_i,
            gamma_max_sigma: raw.gamma_max_sigma.unwrap_or(0.0),
            gamma_min_sigma: raw.gamma_min_sigma.unwrap_or(0.0),
            nu_gamma_sigma: raw.nu_gamma_sigma.unwrap_or(0.0),
            nu_i_sigma: raw.nu_i_sigma.unwrap_or(DEFAULT_NU_I_SIGMA),
        };
        let values = [row.lambda_nm, row.gamma_max, row.gamma_min, row.nu_gamma, row.nu_i];
        if values.iter().any(|v| !v.is_finite()) || row.gamma_max < row.gamma_min || row.gamma_min < 0.0 {
            return Err(Error::MalformedRow { line, reason: "need finite values with gamma_max >= gamma_min >= 0".into() });
        }
        if !(0.0..=1.0).contains(&row.nu_i) || !(0.0..=1.0).contains(&row.nu_gamma) {
            return Err(Error::MalformedRow { line, reason: "visibilities must lie in [0, 1]".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeEntry {
    pub qd: String,
    pub lambda_nm: f64,
    /// `(gamma_max - gamma_min) / (gamma_max + gamma_min)`.
    pub rate_contrast: f64,
    pub rate_contrast_sigma: f64,
    pub nu_gamma_tabulated: f64,
    pub nu_gamma_sigma: f64,
    /// `|contrast - tabulated| <= sqrt(sigma_c^2 + sigma_tab^2)`.
    pub within_1sigma: bool,
    pub nu_i: f64,
    pub r_t_lower_bound: f64,
    pub beta_y0_range: Option<(f64, f64)>,
    pub r_t_range: Option<(f64, f64)>,
    pub y0_range_nm: Option<(f64, f64)>,
    pub note: Option<String>,
}

pub fn rate_contrast(gamma_max: f64, gamma_min: f64) -> f64 {
    let sum = gamma_max + gamma_min;
    if sum == 0.0 {
        0.0
    } else {
        (gamma_max - gamma_min) / sum
    }
}

pub fn lifetime_table_report(
    rows: &[LifetimeRow],
    profile: Option<&ModeProfile>,
    opts: &EstimateOptions,
) -> Result<Vec<LifetimeEntry>> {
    rows.iter()
        .map(|row| {
            let (a, b) = (row.gamma_max, row.gamma_min);
            let contrast = rate_contrast(a, b);
            let sum2 = (a + b).powi(2);
            let sigma_c = if sum2 > 0.0 {
                2.0 * (b * b * row.gamma_max_sigma.powi(2) + a * a * row.gamma_min_sigma.powi(2)).sqrt() / sum2
            } else {
                0.0
            };
            let combined = sigma_c.hypot(row.nu_gamma_sigma);
            let within = (contrast - row.nu_gamma).abs() <= combined;
            let mut entry = LifetimeEntry {
                qd: row.qd.clone(),
                lambda_nm: row.lambda_nm,
                rate_contrast: contrast,
                rate_contrast_sigma: sigma_c,
                nu_gamma_tabulated: row.nu_gamma,
                nu_gamma_sigma: row.nu_gamma_sigma,
                within_1sigma: within,
                nu_i: row.nu_i,
                r_t_lower_bound: r_t_lower_bound(row.nu_i)?,
                beta_y0_range: None,
                r_t_range: None,
                y0_range_nm: None,
                note: None,
            };
            if let Some(profile) = profile {
                match estimate_parameters(
                    Measured::new(row.nu_i, row.nu_i_sigma),
                    Measured::new(row.nu_gamma, row.nu_gamma_sigma),
                    profile,
                    opts,
                ) {
                    Ok(e) => {
                        entry.beta_y0_range = Some(e.beta_y0_range);
                        entry.r_t_range = Some(e.r_t_range);
                        entry.y0_range_nm = Some(e.y0_range_nm);
                    }
                    Err(err) => entry.note = Some(err.to_string()),
                }
            }
            Ok(entry)
        })
        .collect()
}
