//! Log-Gabor filter bank applied in the frequency domain.
//!
//! The radial transfer function is a Gaussian on a log-frequency axis,
//!
//! ```text
//! G(w) = exp(-ln²(w / w0) / (2 ln²(k / w0)))
//! ```
//!
//! with the bandwidth ratio `k / w0` held fixed across scales so every scale
//! has the same shape. The angular term is a Gaussian in the wrapped angle to
//! the filter orientation. Filters are stored in unshifted DFT order (DC at
//! index 0) so they multiply an FFT directly.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{mean_std, Descriptor, FeatureVector};
use crate::image::GrayImage;

/// Radial log-Gabor response at frequency `w` (cycles/pixel). Zero at DC.
pub fn log_gabor_transfer(w: f64, w0: f64, ratio: f64) -> Result<f64> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Parameter(format!(
            "log-Gabor bandwidth ratio {ratio} outside (0, 1)"
        )));
    }
    if !(w0 > 0.0 && w0.is_finite()) {
        return Err(Error::Parameter(format!("center frequency {w0} must be positive")));
    }
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Parameter(format!("frequency {w} must be nonnegative")));
    }
    Ok(radial(w, w0, ratio.ln()))
}

#[inline]
fn radial(w: f64, w0: f64, ln_ratio: f64) -> f64 {
    if w == 0.0 {
        return 0.0;
    }
    let l = (w / w0).ln();
    (-(l * l) / (2.0 * ln_ratio * ln_ratio)).exp()
}

#[inline]
fn angular(theta: f64, theta0: f64, sigma: f64) -> f64 {
    let d = (theta - theta0).sin().atan2((theta - theta0).cos());
    (-(d * d) / (2.0 * sigma * sigma)).exp()
}

/// Bank geometry. Scale `s` (0-based) has centre frequency
/// `1 / (min_wavelength · mult^s)`; orientation `o` points at `o · π / O`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogGaborParams {
    pub scales: usize,
    pub orientations: usize,
    pub min_wavelength: f64,
    pub mult: f64,
    /// `k / w0`, in `(0, 1)`.
    pub ratio: f64,
    /// Angular standard deviation in radians; `None` means `0.6 · π / O`.
    #[serde(default)]
    pub angular_sigma: Option<f64>,
}

impl Default for LogGaborParams {
    fn default() -> Self {
        LogGaborParams {
            scales: 4,
            orientations: 6,
            min_wavelength: 4.0,
            mult: 2.0,
            ratio: 0.55,
            angular_sigma: None,
        }
    }
}

impl LogGaborParams {
    pub fn angular_sigma(&self) -> f64 {
        self.angular_sigma
            .unwrap_or(0.6 * PI / self.orientations.max(1) as f64)
    }

    pub fn center_frequency(&self, scale: usize) -> f64 {
        1.0 / (self.min_wavelength * self.mult.powi(scale as i32))
    }

    pub fn orientation(&self, index: usize) -> f64 {
        index as f64 * PI / self.orientations as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 || self.orientations == 0 {
            return Err(Error::Parameter("log-Gabor bank needs at least one scale and orientation".into()));
        }
        if !(self.min_wavelength >= 2.0) {
            return Err(Error::Parameter(format!(
                "minimum wavelength {} below the Nyquist limit of 2 pixels",
                self.min_wavelength
            )));
        }
        if !(self.mult > 0.0 && self.mult.is_finite()) {
            return Err(Error::Parameter(format!("scale multiplier {} must be positive", self.mult)));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Parameter(format!(
                "log-Gabor bandwidth ratio {} outside (0, 1)",
                self.ratio
            )));
        }
        let sigma = self.angular_sigma();
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Parameter(format!("angular sigma {sigma} must be positive")));
        }
        Ok(())
    }
}

/// DFT sample frequency of bin `k` out of `n`, in cycles/sample.
pub fn dft_frequency(k: usize, n: usize) -> f64 {
    if 2 * k < n {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}

/// Immutable frequency-domain filter bank for one image size.
#[derive(Clone, Debug)]
pub struct LogGaborBank {
    width: usize,
    height: usize,
    params: LogGaborParams,
    /// `scales × orientations` grids, scale-major, row-major, unshifted.
    filters: Vec<Vec<f64>>,
}

/// Builds every filter of the bank on the `width × height` DFT grid.
pub fn build_log_gabor_bank(width: usize, height: usize, params: LogGaborParams) -> Result<LogGaborBank> {
    params.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::Parameter("log-Gabor grid must be non-empty".into()));
    }
    let mut bank = LogGaborBank {
        width,
        height,
        params,
        filters: Vec::with_capacity(params.scales * params.orientations),
    };
    for s in 0..params.scales {
        for o in 0..params.orientations {
            let mut grid = Vec::with_capacity(width * height);
            for ky in 0..height {
                let fy = dft_frequency(ky, height);
                for kx in 0..width {
                    grid.push(bank.response_at(s, o, dft_frequency(kx, width), fy));
                }
            }
            bank.filters.push(grid);
        }
    }
    Ok(bank)
}

impl LogGaborBank {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> &LogGaborParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Filter `(scale, orientation)` in unshifted DFT order.
    pub fn filter(&self, scale: usize, orientation: usize) -> &[f64] {
        &self.filters[scale * self.params.orientations + orientation]
    }

    /// Analytic filter value at an arbitrary frequency `(fx, fy)`.
    pub fn response_at(&self, scale: usize, orientation: usize, fx: f64, fy: f64) -> f64 {
        let p = &self.params;
        let w = fx.hypot(fy);
        let r = radial(w, p.center_frequency(scale), p.ratio.ln());
        if r == 0.0 {
            return 0.0;
        }
        r * angular(fy.atan2(fx), p.orientation(orientation), p.angular_sigma())
    }
}

/// Separable 2-D FFT over a row-major buffer.
pub(crate) struct Fft2 {
    row: std::sync::Arc<dyn Fft<f64>>,
    col: std::sync::Arc<dyn Fft<f64>>,
    width: usize,
    height: usize,
}

impl Fft2 {
    pub(crate) fn new(width: usize, height: usize, inverse: bool) -> Self {
        let mut planner = FftPlanner::new();
        let (row, col) = if inverse {
            (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
        } else {
            (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
        };
        Fft2 {
            row,
            col,
            width,
            height,
        }
    }

    pub(crate) fn process(&self, data: &mut [Complex64]) {
        for row in data.chunks_exact_mut(self.width) {
            self.row.process(row);
        }
        let mut column = vec![Complex64::new(0.0, 0.0); self.height];
        for x in 0..self.width {
            for (y, c) in column.iter_mut().enumerate() {
                *c = data[y * self.width + x];
            }
            self.col.process(&mut column);
            for (y, c) in column.iter().enumerate() {
                data[y * self.width + x] = *c;
            }
        }
    }
}

/// Magnitude of the complex response of every filter, row-major.
pub fn log_gabor_magnitudes(img: &GrayImage, bank: &LogGaborBank) -> Result<Vec<Vec<f64>>> {
    if (img.width(), img.height()) != (bank.width, bank.height) {
        return Err(Error::Parameter(format!(
            "bank built for {}x{} applied to {}x{} image",
            bank.width,
            bank.height,
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (bank.width, bank.height);
    let forward = Fft2::new(w, h, false);
    let inverse = Fft2::new(w, h, true);
    let mut spectrum: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut spectrum);
    let norm = 1.0 / (w * h) as f64;

    let mut out = Vec::with_capacity(bank.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); w * h];
    for filter in &bank.filters {
        for ((b, s), g) in buf.iter_mut().zip(&spectrum).zip(filter) {
            *b = s * g;
        }
        inverse.process(&mut buf);
        out.push(buf.iter().map(|c| c.norm() * norm).collect());
    }
    Ok(out)
}

/// Mean and standard deviation of each filter's response magnitude, ordered
/// scale-major then orientation, mean before std; `dim = 2 · S · O`.
pub fn log_gabor_descriptor(img: &GrayImage, bank: &LogGaborBank) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(2 * bank.len());
    for magnitude in log_gabor_magnitudes(img, bank)? {
        let (mean, std) = mean_std(magnitude.iter().copied());
        values.push(mean);
        values.push(std);
    }
    FeatureVector::new(Descriptor::LogGabor, values)
}
