//! Fundamental quasi-TE mode of a suspended rectangular waveguide.
//!
//! The cross-section is reduced with the effective-index method: the membrane
//! thickness is first collapsed into the effective index of a symmetric TE
//! slab, then the lateral profile is the top eigenvector of a finite-difference
//! Helmholtz operator across the width. The dominant field `e_y` is normal to
//! the sidewalls, so the lateral problem is solved for the continuous magnetic
//! field `H` and `e_y = H / eps` jumps at the walls. The grid is
//! laid out so that both sidewalls fall exactly on cell faces, which keeps the
//! discretisation error a clean series in `h^2`; the reported effective index
//! is the Richardson extrapolation of the `h` and `h/2` eigenvalues.
//!
//! Units: lengths in nm, propagation constants in rad/nm.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{ensure, Error, Result};

/// Lateral cladding kept on each side of the core, in free-space wavelengths.
const CLADDING_WAVELENGTHS: f64 = 0.6;
/// A mode whose field at the window wall exceeds this fraction of its peak is
/// not confined by the guide.
const EDGE_FIELD_LIMIT: f64 = 1e-3;
pub const MIN_GRID_POINTS: usize = 64;
pub const DEFAULT_GRID_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideGeometry {
    pub width_nm: f64,
    pub thickness_nm: f64,
    pub core_index: f64,
    pub clad_index: f64,
    pub wavelength_nm: f64,
}

impl Default for WaveguideGeometry {
    fn default() -> Self {
        Self {
            width_nm: 300.0,
            thickness_nm: 160.0,
            core_index: 3.48,
            clad_index: 1.0,
            wavelength_nm: 930.0,
        }
    }
}

impl WaveguideGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure(self.width_nm > 0.0, || format!("width_nm = {} must be > 0", self.width_nm))?;
        ensure(self.thickness_nm > 0.0, || {
            format!("thickness_nm = {} must be > 0", self.thickness_nm)
        })?;
        ensure(self.clad_index >= 1.0, || {
            format!("clad_index = {} must be >= 1", self.clad_index)
        })?;
        ensure(self.core_index > self.clad_index, || {
            format!(
                "core_index = {} must exceed clad_index = {}",
                self.core_index, self.clad_index
            )
        })?;
        ensure(self.wavelength_nm > 0.0, || {
            format!("wavelength_nm = {} must be > 0", self.wavelength_nm)
        })
    }

    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength_nm
    }
}

/// Sampled transverse eigenfunction `E = (i e_x(y), e_y(y), 0)` of the TE0 mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProfile {
    /// Lateral positions, symmetric about 0 (nm).
    pub grid: Vec<f64>,
    pub e_x: Vec<f64>,
    pub e_y: Vec<f64>,
    pub n_eff: f64,
    /// Propagation constant (rad/nm).
    pub k: f64,
    pub group_index: f64,
    /// `sum eps_r (e_x^2 + e_y^2) dy` per unit thickness.
    pub norm_n: f64,
    /// Effective index of the vertically collapsed slab.
    pub slab_index: f64,
    pub width_nm: f64,
    /// Top eigenvalue of the discrete operator on `grid` (nm^-2), before extrapolation.
    pub discrete_eigenvalue: f64,
    pub spacing_nm: f64,
}

impl ModeProfile {
    /// Largest |y| covered by the grid.
    pub fn half_width(&self) -> f64 {
        self.grid.last().copied().unwrap_or(0.0)
    }

    /// Relative permittivity sampled on `grid`.
    pub fn permittivity(&self, clad_index: f64) -> Vec<f64> {
        self.grid
            .iter()
            .map(|&y| {
                if y.abs() < 0.5 * self.width_nm {
                    self.slab_index * self.slab_index
                } else {
                    clad_index * clad_index
                }
            })
            .collect()
    }

    /// Same mode with the raw amplitudes multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> ModeProfile {
        let mut out = self.clone();
        out.e_x.iter_mut().for_each(|v| *v *= factor);
        out.e_y.iter_mut().for_each(|v| *v *= factor);
        out.norm_n *= factor * factor;
        out
    }

    pub fn weights(&self, y0_nm: f64) -> Result<(f64, f64)> {
        mode_weights(self, y0_nm)
    }

    pub fn csv_rows(&self) -> Vec<[f64; 3]> {
        self.grid
            .iter()
            .zip(&self.e_x)
            .zip(&self.e_y)
            .map(|((&y, &ex), &ey)| [y, ex, ey])
            .collect()
    }
}

/// Effective index of the fundamental TE mode of a symmetric slab.
///
/// Solves `u tan u = sqrt(V^2 - u^2)` with `u = kappa t / 2` by bisection.
pub fn slab_te0_index(thickness_nm: f64, core: f64, clad: f64, wavelength_nm: f64) -> Result<f64> {
    let k0 = 2.0 * PI / wavelength_nm;
    let half = 0.5 * thickness_nm;
    let v = k0 * half * (core * core - clad * clad).sqrt();
    if !(v > 0.0) {
        return Err(Error::NoBoundMode(format!("slab V-number {v} is not positive")));
    }
    let f = |u: f64| u * u.tan() - (v * v - u * u).max(0.0).sqrt();
    let mut lo = 0.0_f64;
    let mut hi = v.min(0.5 * PI * (1.0 - 1e-15));
    if f(hi) < 0.0 {
        return Err(Error::NoBoundMode("slab dispersion has no root".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    let kappa = u / half;
    Ok((core * core - (kappa / k0).powi(2)).sqrt())
}

/// Uniform lateral grid with sidewalls on cell faces.
#[derive(Debug, Clone, Copy)]
struct LateralGrid {
    n: usize,
    h: f64,
}

impl LateralGrid {
    fn new(width: f64, wavelength: f64, n: usize) -> Self {
        let target_half = 0.5 * width + CLADDING_WAVELENGTHS * wavelength;
        let h0 = 2.0 * target_half / n as f64;
        let cells = 0.5 * width / h0;
        // Nodes sit at (j - (n-1)/2) h, so faces are at integer multiples of h
        // for even n and at half-integers for odd n.
        let cells = if n % 2 == 0 {
            cells.round().max(1.0)
        } else {
            ((cells - 0.5).round() + 0.5).max(0.5)
        };
        Self { n, h: width / (2.0 * cells) }
    }

    fn refined(self) -> Self {
        Self { n: 2 * self.n, h: 0.5 * self.h }
    }

    fn y(&self, j: usize) -> f64 {
        (j as f64 - 0.5 * (self.n as f64 - 1.0)) * self.h
    }
}

/// Lateral operator for the sidewall-normal field, symmetrised.
///
/// The magnetic field `H(y)` obeys `(d/dy eps^-1 d/dy + k0^2) H = beta^2 eps^-1 H`
/// with Dirichlet walls. Cell faces carry `2 / (eps_l + eps_r)`, the exact
/// series combination when an interface sits on the face. With
/// `u = H / sqrt(eps)` the generalized problem becomes a symmetric
/// tridiagonal one.
struct Helmholtz {
    diag: Vec<f64>,
    off: Vec<f64>,
    eps: Vec<f64>,
}

impl Helmholtz {
    fn new(grid: LateralGrid, width: f64, slab: f64, clad: f64, k0: f64) -> Self {
        let eps: Vec<f64> = (0..grid.n)
            .map(|j| {
                let n = if grid.y(j).abs() < 0.5 * width { slab } else { clad };
                n * n
            })
            .collect();
        let h2 = grid.h * grid.h;
        // inverse permittivity on the face between j and j+1; walls see eps_j
        let face = |j: usize| 2.0 / (eps[j] + eps[j + 1]);
        let n = grid.n;
        let diag = (0..n)
            .map(|j| {
                let left = if j > 0 { face(j - 1) } else { 1.0 / eps[0] };
                let right = if j + 1 < n { face(j) } else { 1.0 / eps[n - 1] };
                eps[j] * (k0 * k0 - (left + right) / h2)
            })
            .collect();
        let off = (0..n - 1)
            .map(|j| (eps[j] * eps[j + 1]).sqrt() * face(j) / h2)
            .collect();
        Self { diag, off, eps }
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence).
    fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0_f64;
        for (j, &d) in self.diag.iter().enumerate() {
            let prev = if j == 0 { 0.0 } else { self.off[j - 1] * self.off[j - 1] / q };
            q = d - x - prev;
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + x.abs()).max(1e-300);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn largest_eigenvalue(&self) -> f64 {
        let n = self.diag.len();
        let bound = 2.0 * self.off.iter().cloned().fold(0.0, f64::max);
        let mut lo = self.diag.iter().cloned().fold(f64::INFINITY, f64::min) - bound;
        let mut hi = self.diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + bound;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) == n {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|j| {
                let left = if j > 0 { self.off[j - 1] * v[j - 1] } else { 0.0 };
                let right = if j + 1 < n { self.off[j] * v[j + 1] } else { 0.0 };
                self.diag[j] * v[j] + left + right
            })
            .collect()
    }

    /// Solves `(C - shift I) x = rhs` with the Thomas algorithm.
    fn solve_shifted(&self, shift: f64, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0] - shift;
        c[0] = if n > 1 { self.off[0] / denom } else { 0.0 };
        d[0] = rhs[0] / denom;
        for j in 1..n {
            denom = self.diag[j] - shift - self.off[j - 1] * c[j - 1];
            c[j] = if j + 1 < n { self.off[j] / denom } else { 0.0 };
            d[j] = (rhs[j] - self.off[j - 1] * d[j - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for j in (0..n - 1).rev() {
            x[j] = d[j] - c[j] * x[j + 1];
        }
        x
    }

    fn field_from(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.eps).map(|(v, e)| v * e.sqrt()).collect()
    }

    /// `eps^-1 dH/dy` on the face between `j` and `j + 1`; `j = -1` and `j = n - 1`
    /// are the walls.
    fn face_flux(&self, field: &[f64], j: isize, h: f64) -> f64 {
        let n = field.len() as isize;
        if j < 0 {
            field[0] / (self.eps[0] * h)
        } else if j >= n - 1 {
            -field[(n - 1) as usize] / (self.eps[(n - 1) as usize] * h)
        } else {
            let (a, b) = (j as usize, j as usize + 1);
            2.0 / (self.eps[a] + self.eps[b]) * (field[b] - field[a]) / h
        }
    }
}

struct LateralSolution {
    grid: LateralGrid,
    eigenvalue: f64,
    extrapolated: f64,
    helmholtz: Helmholtz,
}

fn lateral_eigen(geom: &WaveguideGeometry, slab: f64, n_points: usize) -> LateralSolution {
    let k0 = geom.k0();
    let grid = LateralGrid::new(geom.width_nm, geom.wavelength_nm, n_points);
    let helmholtz = Helmholtz::new(grid, geom.width_nm, slab, geom.clad_index, k0);
    let coarse = helmholtz.largest_eigenvalue();
    let fine = Helmholtz::new(grid.refined(), geom.width_nm, slab, geom.clad_index, k0)
        .largest_eigenvalue();
    LateralSolution {
        grid,
        eigenvalue: coarse,
        extrapolated: (4.0 * fine - coarse) / 3.0,
        helmholtz,
    }
}

fn effective_index(geom: &WaveguideGeometry, n_points: usize) -> Result<f64> {
    let slab = slab_te0_index(geom.thickness_nm, geom.core_index, geom.clad_index, geom.wavelength_nm)?;
    let sol = lateral_eigen(geom, slab, n_points);
    Ok(sol.extrapolated.max(0.0).sqrt() / geom.k0())
}

/// Fundamental even quasi-TE mode on an `n_points` lateral grid.
pub fn solve_te0(geom: &WaveguideGeometry, n_points: usize) -> Result<ModeProfile> {
    geom.validate()?;
    if n_points < MIN_GRID_POINTS {
        return Err(Error::GridTooCoarse(format!(
            "{n_points} grid points, at least {MIN_GRID_POINTS} required"
        )));
    }
    let k0 = geom.k0();
    let slab = slab_te0_index(geom.thickness_nm, geom.core_index, geom.clad_index, geom.wavelength_nm)?;
    let sol = lateral_eigen(geom, slab, n_points);
    let clad_line = k0 * k0 * geom.clad_index * geom.clad_index;
    if sol.eigenvalue <= clad_line {
        return Err(Error::NoBoundMode(format!(
            "top eigenvalue {:.6e} nm^-2 is below the cladding light line {:.6e} nm^-2",
            sol.eigenvalue, clad_line
        )));
    }

    // Inverse iteration just above the top eigenvalue; A - shift I is then
    // negative definite and the Thomas sweep needs no pivoting.
    let lambda = sol.eigenvalue;
    let shift = lambda + 1e-10 * lambda.abs().max(1e-30);
    let n = n_points;
    let mut v: Vec<f64> = (0..n)
        .map(|j| {
            let y = sol.grid.y(j) / geom.width_nm;
            (-y * y).exp()
        })
        .collect();
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let mut next = sol.helmholtz.solve_shifted(shift, &v);
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        v = next;
        let av = sol.helmholtz.apply(&v);
        residual = av
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / lambda.abs();
        if residual < 1e-12 {
            break;
        }
    }
    if !(residual < 1e-9) {
        return Err(Error::GridTooCoarse(format!(
            "eigenvector residual {residual:.3e} did not reach 1e-9"
        )));
    }

    let u: Vec<f64> = (0..n).map(|j| 0.5 * (v[j] + v[n - 1 - j])).collect();
    let field = sol.helmholtz.field_from(&u);
    let mut e_y: Vec<f64> = field.iter().zip(&sol.helmholtz.eps).map(|(f, e)| f / e).collect();
    let peak = e_y.iter().cloned().fold(0.0_f64, |m, x| if x.abs() > m.abs() { x } else { m });
    e_y.iter_mut().for_each(|x| *x /= peak);
    let field: Vec<f64> = field.iter().map(|f| f / peak).collect();
    let edge = e_y[0].abs().max(e_y[n - 1].abs());
    if edge > EDGE_FIELD_LIMIT {
        return Err(Error::NoBoundMode(format!(
            "field at the window wall is {edge:.3e} of its peak; the guide does not confine the mode"
        )));
    }

    let n_eff = sol.extrapolated.sqrt() / k0;
    let k = k0 * n_eff;
    let h = sol.grid.h;
    // k eps e_x = d(eps e_y)/dy, with eps^-1 dH/dy averaged over the two faces
    let e_x: Vec<f64> = (0..n as isize)
        .map(|j| {
            let left = sol.helmholtz.face_flux(&field, j - 1, h);
            let right = sol.helmholtz.face_flux(&field, j, h);
            0.5 * (left + right) / k
        })
        .collect();
    let grid: Vec<f64> = (0..n).map(|j| sol.grid.y(j)).collect();

    let group_index = {
        let dl = 1e-4 * geom.wavelength_nm;
        let at = |wl: f64| effective_index(&WaveguideGeometry { wavelength_nm: wl, ..*geom }, n_points);
        let slope = (at(geom.wavelength_nm + dl)? - at(geom.wavelength_nm - dl)?) / (2.0 * dl);
        n_eff - geom.wavelength_nm * slope
    };

    let mut profile = ModeProfile {
        grid,
        e_x,
        e_y,
        n_eff,
        k,
        group_index,
        norm_n: 0.0,
        slab_index: slab,
        width_nm: geom.width_nm,
        discrete_eigenvalue: lambda,
        spacing_nm: h,
    };
    let eps = profile.permittivity(geom.clad_index);
    profile.norm_n = eps
        .iter()
        .zip(profile.e_x.iter().zip(&profile.e_y))
        .map(|(e, (x, y))| e * (x * x + y * y))
        .sum::<f64>()
        * h;
    Ok(profile)
}

/// Relative residual `||C u - lambda u|| / ||lambda u||` of the discrete
/// operator, evaluated on `u = sqrt(eps) e_y`.
pub fn eigen_residual(profile: &ModeProfile, geom: &WaveguideGeometry) -> f64 {
    let grid = LateralGrid { n: profile.grid.len(), h: profile.spacing_nm };
    let op = Helmholtz::new(grid, geom.width_nm, profile.slab_index, geom.clad_index, geom.k0());
    let u: Vec<f64> = profile.e_y.iter().zip(&op.eps).map(|(e, p)| e * p.sqrt()).collect();
    let cu = op.apply(&u);
    let lambda = profile.discrete_eigenvalue;
    let num = cu
        .iter()
        .zip(&u)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt();
    let den = u.iter().map(|b| (lambda * b).powi(2)).sum::<f64>().sqrt();
    num / den
}

/// Field weights `(|e_x(y0)|^2, |e_y(y0)|^2)` with linear interpolation of the fields.
pub fn mode_weights(profile: &ModeProfile, y0_nm: f64) -> Result<(f64, f64)> {
    let grid = &profile.grid;
    let half = profile.half_width();
    if !y0_nm.is_finite() || y0_nm.abs() > half {
        return Err(Error::OutOfRange { y0_nm, half_width_nm: half });
    }
    let h = profile.spacing_nm;
    let pos = (y0_nm - grid[0]) / h;
    let j = (pos.floor() as usize).min(grid.len() - 2);
    let t = (y0_nm - grid[j]) / (grid[j + 1] - grid[j]);
    let lerp = |v: &[f64]| v[j] + t * (v[j + 1] - v[j]);
    let ex = lerp(&profile.e_x);
    let ey = lerp(&profile.e_y);
    Ok((ex * ex, ey * ey))
}
