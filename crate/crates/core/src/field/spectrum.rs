//! Discrete Fourier analysis of periodic fields.
//!
//! Coefficients are Fourier-series coefficients,
//! `ĉ_k = (1/(nx·ny)) Σ_x f(x) e^{-ik·x}`, so they are directly comparable
//! across resolutions. Storage follows FFT order: index `i` along x holds the
//! wavenumber `i` for `i < nx/2` and `i - nx` otherwise.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::{pairwise_sum, Grid, PeriodicField};
use crate::error::{Error, Result};

struct Plans {
    planner: FftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn Fft<f64>>>,
    inverse: HashMap<usize, Arc<dyn Fft<f64>>>,
}

thread_local! {
    static PLANS: RefCell<Plans> = RefCell::new(Plans {
        planner: FftPlanner::new(),
        forward: HashMap::new(),
        inverse: HashMap::new(),
    });
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let Plans {
            planner,
            forward,
            inverse: inv,
        } = &mut *p;
        let cache = if inverse { inv } else { forward };
        cache
            .entry(n)
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    })
}

/// Unnormalised in-place 2D transform on `ny × nx` row-major data.
pub(crate) fn fft2_in_place(data: &mut [Complex64], nx: usize, ny: usize, inverse: bool) {
    let row = plan(nx, inverse);
    row.process(data);
    let col = plan(ny, inverse);
    let mut column = vec![Complex64::new(0.0, 0.0); ny];
    for i in 0..nx {
        for j in 0..ny {
            column[j] = data[j * nx + i];
        }
        col.process(&mut column);
        for j in 0..ny {
            data[j * nx + i] = column[j];
        }
    }
}

/// Signed wavenumber held at FFT index `i` of an `n`-point transform.
#[inline]
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

#[inline]
fn fft_index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Fourier coefficients of a scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    pub fn from_coeffs(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            )));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient of wavevector `(kx, ky)`, taken modulo the grid.
    pub fn get(&self, kx: i64, ky: i64) -> Complex64 {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        self.coeffs[fft_index(ky, ny) * nx + fft_index(kx, nx)]
    }

    pub fn set(&mut self, kx: i64, ky: i64, value: Complex64) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        self.coeffs[fft_index(ky, ny) * nx + fft_index(kx, nx)] = value;
    }

    /// Iterates `(kx, ky, ĉ)` over all stored modes.
    pub fn modes(&self) -> impl Iterator<Item = (i64, i64, Complex64)> + '_ {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        self.coeffs.iter().enumerate().map(move |(idx, c)| {
            (wavenumber(idx % nx, nx), wavenumber(idx / nx, ny), *c)
        })
    }

    /// `Σ_k |ĉ_k|²`.
    pub fn energy(&self) -> f64 {
        let terms: Vec<f64> = self.coeffs.iter().map(|c| c.norm_sqr()).collect();
        pairwise_sum(&terms)
    }
}

/// Forward transform of a scalar field.
pub fn dft(field: &PeriodicField) -> Result<Spectrum> {
    field.ensure_scalar()?;
    Ok(dft_values(field.grid(), field.data()))
}

pub(crate) fn dft_values(grid: Grid, values: &[f64]) -> Spectrum {
    let (nx, ny) = (grid.nx(), grid.ny());
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_in_place(&mut data, nx, ny, false);
    let scale = 1.0 / (nx * ny) as f64;
    for c in &mut data {
        *c *= scale;
    }
    Spectrum {
        grid,
        coeffs: data,
    }
}

/// Inverse transform; the imaginary residue of a non-Hermitian spectrum is dropped.
pub fn idft(spec: &Spectrum) -> PeriodicField {
    let values = idft_values(spec);
    PeriodicField::new(spec.grid, 1, values).expect("finite spectrum yields finite field")
}

pub(crate) fn idft_values(spec: &Spectrum) -> Vec<f64> {
    let (nx, ny) = (spec.grid.nx(), spec.grid.ny());
    let mut data = spec.coeffs.clone();
    fft2_in_place(&mut data, nx, ny, true);
    data.into_iter().map(|c| c.re).collect()
}

/// Multiplier of a spectral derivative of order `(ox, oy)`.
///
/// Odd derivatives of the Nyquist mode are zeroed so real fields stay real.
fn derivative_multiplier(kx: i64, ky: i64, nx: usize, ny: usize, ox: u32, oy: u32) -> Complex64 {
    if (ox % 2 == 1 && kx == -(nx as i64) / 2) || (oy % 2 == 1 && ky == -(ny as i64) / 2) {
        return Complex64::new(0.0, 0.0);
    }
    let ikx = Complex64::new(0.0, kx as f64);
    let iky = Complex64::new(0.0, ky as f64);
    ikx.powu(ox) * iky.powu(oy)
}

/// Applies `∂x^ox ∂y^oy` to a spectrum.
pub fn differentiate(spec: &Spectrum, ox: u32, oy: u32) -> Spectrum {
    let (nx, ny) = (spec.grid.nx(), spec.grid.ny());
    let coeffs = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let kx = wavenumber(idx % nx, nx);
            let ky = wavenumber(idx / nx, ny);
            c * derivative_multiplier(kx, ky, nx, ny, ox, oy)
        })
        .collect();
    Spectrum {
        grid: spec.grid,
        coeffs,
    }
}

/// Spectral derivative `∂x^ox ∂y^oy` of a scalar field.
pub fn spectral_derivative(field: &PeriodicField, ox: u32, oy: u32) -> Result<PeriodicField> {
    Ok(idft(&differentiate(&dft(field)?, ox, oy)))
}

/// Trigonometric interpolation of a scalar field onto another grid.
///
/// Modes that do not fit in the target are truncated; Nyquist modes are
/// split or merged so the result stays real.
pub fn spectral_resample(field: &PeriodicField, target: Grid) -> Result<PeriodicField> {
    let src = dft(field)?;
    let mut out = Spectrum::zeros(target);
    let (tx, ty) = (target.nx() as i64, target.ny() as i64);
    for (kx, ky, c) in src.modes() {
        let (sx, sy) = (src.grid.nx() as i64, src.grid.ny() as i64);
        // source Nyquist modes are split symmetrically between ±n/2
        let mut weight = 1.0;
        let mut targets = vec![(kx, ky)];
        if kx == -sx / 2 && tx > sx {
            weight *= 0.5;
            targets = targets.into_iter().flat_map(|(a, b)| [(a, b), (-a, b)]).collect();
        }
        if ky == -sy / 2 && ty > sy {
            weight *= 0.5;
            targets = targets.into_iter().flat_map(|(a, b)| [(a, b), (a, -b)]).collect();
        }
        for (ax, ay) in targets {
            if ax < -tx / 2 || ax > tx / 2 || ay < -ty / 2 || ay > ty / 2 {
                continue;
            }
            // +n/2 and -n/2 alias onto the same target Nyquist slot; their sum is real
            let prev = out.get(ax, ay);
            out.set(ax, ay, prev + c * weight);
        }
    }
    Ok(idft(&out))
}

/// Smallest integer radius `R` with `Σ_{|k|₂ ≥ R} |ĉ_k|² ≤ eps²`.
pub fn effective_bandwidth(field: &PeriodicField, eps: f64) -> Result<usize> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let spec = dft(field)?;
    Ok(bandwidth_of_spectra(&[&spec], eps))
}

/// Joint ε-effective bandwidth of several spectra (tail energies are summed).
pub(crate) fn bandwidth_of_spectra(specs: &[&Spectrum], eps: f64) -> usize {
    // |k| ≥ R for integer R exactly when ceil(|k|) ≥ R
    let mut bins: Vec<f64> = Vec::new();
    for spec in specs {
        for (kx, ky, c) in spec.modes() {
            let r2 = (kx * kx + ky * ky) as u64;
            let b = ceil_sqrt(r2) as usize;
            if bins.len() <= b {
                bins.resize(b + 1, 0.0);
            }
            bins[b] += c.norm_sqr();
        }
    }
    let eps2 = eps * eps;
    let mut tail = 0.0;
    let mut radius = bins.len();
    for b in (0..bins.len()).rev() {
        tail += bins[b];
        if tail > eps2 {
            break;
        }
        radius = b;
    }
    radius
}

fn ceil_sqrt(n: u64) -> u64 {
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while r * r < n {
        r += 1;
    }
    r
}

/// Shell-summed kinetic energy spectrum of a vorticity field.
///
/// `E(n) = ½ Σ_{n-½ ≤ |k| < n+½} |ω̂_k|² / |k|²` for `n = 1 .. min(nx,ny)/2 - 1`.
pub fn energy_spectrum(vorticity: &PeriodicField) -> Result<Vec<(usize, f64)>> {
    let spec = dft(vorticity)?;
    let g = spec.grid();
    let shells = g.nx().min(g.ny()) / 2 - 1;
    let mut energy = vec![0.0; shells + 1];
    for (kx, ky, c) in spec.modes() {
        if kx == 0 && ky == 0 {
            continue;
        }
        let k2 = (kx * kx + ky * ky) as f64;
        let shell = (k2.sqrt() + 0.5).floor() as usize;
        if (1..=shells).contains(&shell) {
            energy[shell] += 0.5 * c.norm_sqr() / k2;
        }
    }
    Ok((1..=shells).map(|n| (n, energy[n])).collect())
}
