//! Local phase quantization.
//!
//! At every pixel `x` whose `M×M` neighbourhood fits inside the image, the
//! short-term Fourier transform
//!
//! ```text
//! F(u, x) = Σ_{y ∈ N_x} f(x - y) · exp(-2πi uᵀy)
//! ```
//!
//! is evaluated at `u₁ = (a, 0)`, `u₂ = (0, a)`, `u₃ = (a, a)`, `u₄ = (a, -a)`
//! with `a = 1/M` (`u = (horizontal, vertical)`, `y` ranging over offsets in
//! `[-r, r]²`, `r = (M - 1)/2`). The signs of
//! `[Re F(u₁..u₄), Im F(u₁..u₄)]` form bits `0..8` of the pixel's code.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::features::{normalized_histogram, Descriptor, FeatureVector};
use crate::image::GrayImage;

pub const DEFAULT_WINDOW: usize = 7;

/// Coefficients whose magnitude is below this fraction of the window's L1
/// mass are treated as exactly zero (and so quantize to 1). Nonzero-frequency
/// sums over a flat window cancel only up to rounding.
pub const ZERO_TOLERANCE: f64 = 1e-9;

/// The four local Fourier coefficients at every valid pixel, row-major over
/// the `(w - M + 1) × (h - M + 1)` valid region, plus each window's sum.
pub struct LocalSpectra {
    pub width: usize,
    pub height: usize,
    pub coefficients: Vec<[Complex64; 4]>,
    pub window_mass: Vec<f64>,
}

fn check_window(img: &GrayImage, window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Parameter(format!(
            "LPQ window must be odd and at least 3, got {window}"
        )));
    }
    if img.width() < window || img.height() < window {
        return Err(Error::Size(format!(
            "LPQ window {window} exceeds image {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

/// Computes the local spectra with two separable passes.
pub fn local_spectra(img: &GrayImage, window: usize) -> Result<LocalSpectra> {
    check_window(img, window)?;
    let r = (window - 1) / 2;
    let a = 1.0 / window as f64;
    // basis[k] = exp(-2πi a d) for offset d = k - r
    let basis: Vec<Complex64> = (0..window)
        .map(|k| {
            let d = k as f64 - r as f64;
            Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * a * d)
        })
        .collect();

    let (w, h) = (img.width(), img.height());
    let vw = w - window + 1;
    let vh = h - window + 1;

    // Horizontal pass over every row: plain sum and the u_x = a term.
    let mut plain = vec![0.0; vw * h];
    let mut tuned = vec![Complex64::new(0.0, 0.0); vw * h];
    for y in 0..h {
        for vx in 0..vw {
            let px = vx + r;
            let (mut s, mut c) = (0.0, Complex64::new(0.0, 0.0));
            for (k, b) in basis.iter().enumerate() {
                // offset d = k - r reads f(px - d)
                let v = img.get(px + r - k, y);
                s += v;
                c += b * v;
            }
            plain[y * vw + vx] = s;
            tuned[y * vw + vx] = c;
        }
    }

    let mut coefficients = Vec::with_capacity(vw * vh);
    let mut window_mass = Vec::with_capacity(vw * vh);
    for vy in 0..vh {
        let py = vy + r;
        for vx in 0..vw {
            let zero = Complex64::new(0.0, 0.0);
            let (mut mass, mut f1, mut f2, mut f3, mut f4) = (0.0, zero, zero, zero, zero);
            for (k, b) in basis.iter().enumerate() {
                let row = (py + r - k) * vw + vx;
                let (p, t) = (plain[row], tuned[row]);
                mass += p;
                f1 += t;
                f2 += b * p;
                f3 += b * t;
                f4 += b.conj() * t;
            }
            coefficients.push([f1, f2, f3, f4]);
            window_mass.push(mass);
        }
    }
    Ok(LocalSpectra {
        width: vw,
        height: vh,
        coefficients,
        window_mass,
    })
}

/// Quantizes four coefficients into an 8-bit code: bit `i` is set when the
/// `i`-th entry of `[Re F₁..Re F₄, Im F₁..Im F₄]` is nonnegative.
pub fn lpq_code(coefficients: &[Complex64; 4], window_mass: f64) -> u8 {
    let floor = ZERO_TOLERANCE * window_mass.abs();
    let parts = coefficients
        .iter()
        .map(|c| c.re)
        .chain(coefficients.iter().map(|c| c.im));
    parts.enumerate().fold(0u8, |code, (i, v)| {
        let bit = v >= 0.0 || v.abs() <= floor;
        code | (u8::from(bit) << i)
    })
}

/// Per-pixel LPQ codes over the valid region, row-major.
pub fn lpq_codes(img: &GrayImage, window: usize) -> Result<Vec<u8>> {
    let spectra = local_spectra(img, window)?;
    Ok(spectra
        .coefficients
        .iter()
        .zip(&spectra.window_mass)
        .map(|(c, &m)| lpq_code(c, m))
        .collect())
}

/// 256-bin normalized histogram of LPQ codes.
pub fn lpq_descriptor(img: &GrayImage, window: usize) -> Result<FeatureVector> {
    let mut counts = [0u64; 256];
    for code in lpq_codes(img, window)? {
        counts[code as usize] += 1;
    }
    normalized_histogram(Descriptor::Lpq, &counts)
}
