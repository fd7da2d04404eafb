//! Separable 2-D discrete wavelet transform with orthonormal Haar and
//! Daubechies-8 filters.
//!
//! Each level filters the rows and then the columns with the lowpass and
//! highpass taps, keeping every second output, and recurses on the
//! lowpass/lowpass quadrant. Signals are extended periodically; an odd length
//! is first padded by repeating its last sample, so a level maps `n` samples
//! to `ceil(n / 2)` and the transform stays orthonormal, which makes the
//! inverse exact up to rounding for any filter length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{mean_std, Descriptor, FeatureVector};
use crate::image::{GrayImage, Grid};

pub const DEFAULT_LEVELS: usize = 3;

/// Daubechies scaling filter with 8 vanishing moments.
const DB8_LOWPASS: [f64; 16] = [
    0.05441584224310401,
    0.31287159091429995,
    0.6756307362972898,
    0.5853546836542067,
    -0.015829105256349306,
    -0.2840155429615469,
    0.0004724845739132828,
    0.12874742662047847,
    -0.017369301001807547,
    -0.044088253930794755,
    0.013981027917398282,
    0.008746094047405777,
    -0.004870352993451574,
    -0.00039174037337694705,
    0.0006754494064505693,
    -0.00011747678412476953,
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveletKind {
    Haar,
    Db8,
}

impl WaveletKind {
    pub fn descriptor(self) -> Descriptor {
        match self {
            WaveletKind::Haar => Descriptor::Haar,
            WaveletKind::Db8 => Descriptor::Db8,
        }
    }
}

/// Lowpass taps and their quadrature mirror,
/// `highpass[n] = (-1)^n · lowpass[L - 1 - n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletFilter {
    kind: WaveletKind,
    lowpass: Vec<f64>,
    highpass: Vec<f64>,
}

impl WaveletFilter {
    pub fn new(kind: WaveletKind) -> Self {
        let lowpass = match kind {
            WaveletKind::Haar => vec![std::f64::consts::FRAC_1_SQRT_2; 2],
            WaveletKind::Db8 => DB8_LOWPASS.to_vec(),
        };
        let len = lowpass.len();
        let highpass = (0..len)
            .map(|n| {
                let v = lowpass[len - 1 - n];
                if n % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect();
        WaveletFilter {
            kind,
            lowpass,
            highpass,
        }
    }

    pub fn haar() -> Self {
        Self::new(WaveletKind::Haar)
    }

    pub fn db8() -> Self {
        Self::new(WaveletKind::Db8)
    }

    pub fn kind(&self) -> WaveletKind {
        self.kind
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn highpass(&self) -> &[f64] {
        &self.highpass
    }

    /// One analysis step: `(approximation, detail)`, each of length
    /// `ceil(n / 2)`.
    pub fn analyze(&self, signal: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let padded = even_length(signal);
        let m = padded.len();
        let half = m / 2;
        let mut approx = vec![0.0; half];
        let mut detail = vec![0.0; half];
        for k in 0..half {
            let (mut a, mut d) = (0.0, 0.0);
            for (j, (lo, hi)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                let v = padded[(2 * k + j) % m];
                a += lo * v;
                d += hi * v;
            }
            approx[k] = a;
            detail[k] = d;
        }
        (approx, detail)
    }

    /// Inverts [`analyze`](Self::analyze) for an original length `n`.
    pub fn synthesize(&self, approx: &[f64], detail: &[f64], n: usize) -> Vec<f64> {
        let m = 2 * approx.len();
        debug_assert_eq!(approx.len(), detail.len());
        debug_assert!(n == m || n + 1 == m);
        let mut out = vec![0.0; m];
        for (k, (a, d)) in approx.iter().zip(detail).enumerate() {
            for (j, (lo, hi)) in self.lowpass.iter().zip(&self.highpass).enumerate() {
                out[(2 * k + j) % m] += lo * a + hi * d;
            }
        }
        out.truncate(n);
        out
    }
}

fn even_length(signal: &[f64]) -> std::borrow::Cow<'_, [f64]> {
    if signal.len().is_multiple_of(2) {
        signal.into()
    } else {
        let mut v = signal.to_vec();
        v.push(*signal.last().expect("non-empty signal"));
        v.into()
    }
}

/// Detail sub-bands of one level. `horizontal` is lowpass along x and
/// highpass along y, `vertical` the reverse, `diagonal` highpass in both.
#[derive(Clone, Debug, PartialEq)]
pub struct DetailLevel {
    /// Size of the grid this level decomposed.
    pub input_width: usize,
    pub input_height: usize,
    pub horizontal: Grid,
    pub vertical: Grid,
    pub diagonal: Grid,
}

/// Multi-level decomposition; `details[0]` is the finest level.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandPyramid {
    pub approximation: Grid,
    pub details: Vec<DetailLevel>,
}

impl SubbandPyramid {
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Sub-bands in descriptor order: approximation, then for each level
    /// from coarse to fine, horizontal, vertical, diagonal.
    pub fn subbands(&self) -> impl Iterator<Item = &Grid> {
        std::iter::once(&self.approximation).chain(
            self.details
                .iter()
                .rev()
                .flat_map(|l| [&l.horizontal, &l.vertical, &l.diagonal]),
        )
    }
}

/// Applies `f` to every row, producing two grids of width `ceil(w/2)`.
fn split_rows(grid: &Grid, filter: &WaveletFilter) -> (Grid, Grid) {
    let (w, h) = (grid.width(), grid.height());
    let half = w.div_ceil(2);
    let mut lo = Vec::with_capacity(half * h);
    let mut hi = Vec::with_capacity(half * h);
    for row in grid.data().chunks_exact(w) {
        let (a, d) = filter.analyze(row);
        lo.extend(a);
        hi.extend(d);
    }
    (
        Grid::new(half, h, lo).expect("shape"),
        Grid::new(half, h, hi).expect("shape"),
    )
}

fn split_columns(grid: &Grid, filter: &WaveletFilter) -> (Grid, Grid) {
    let (w, h) = (grid.width(), grid.height());
    let half = h.div_ceil(2);
    let mut lo = Grid::zeros(w, half);
    let mut hi = Grid::zeros(w, half);
    let mut column = vec![0.0; h];
    for x in 0..w {
        for (y, c) in column.iter_mut().enumerate() {
            *c = grid.get(x, y);
        }
        let (a, d) = filter.analyze(&column);
        for y in 0..half {
            lo.set(x, y, a[y]);
            hi.set(x, y, d[y]);
        }
    }
    (lo, hi)
}

fn merge_rows(lo: &Grid, hi: &Grid, width: usize, filter: &WaveletFilter) -> Grid {
    let h = lo.height();
    let mut data = Vec::with_capacity(width * h);
    for (a, d) in lo.data().chunks_exact(lo.width()).zip(hi.data().chunks_exact(hi.width())) {
        data.extend(filter.synthesize(a, d, width));
    }
    Grid::new(width, h, data).expect("shape")
}

fn merge_columns(lo: &Grid, hi: &Grid, height: usize, filter: &WaveletFilter) -> Grid {
    let w = lo.width();
    let mut out = Grid::zeros(w, height);
    let mut a = vec![0.0; lo.height()];
    let mut d = vec![0.0; hi.height()];
    for x in 0..w {
        for y in 0..lo.height() {
            a[y] = lo.get(x, y);
            d[y] = hi.get(x, y);
        }
        for (y, v) in filter.synthesize(&a, &d, height).into_iter().enumerate() {
            out.set(x, y, v);
        }
    }
    out
}

fn check_levels(width: usize, height: usize, levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::Parameter("wavelet decomposition needs at least one level".into()));
    }
    if levels >= usize::BITS as usize || width.min(height) >> levels == 0 {
        return Err(Error::Parameter(format!(
            "{levels} levels is too many for a {width}x{height} image"
        )));
    }
    Ok(())
}

/// Decomposes a real grid into `levels` levels.
pub fn dwt2_grid(grid: &Grid, filter: &WaveletFilter, levels: usize) -> Result<SubbandPyramid> {
    check_levels(grid.width(), grid.height(), levels)?;
    let mut current = grid.clone();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (input_width, input_height) = (current.width(), current.height());
        let (row_lo, row_hi) = split_rows(&current, filter);
        let (approx, horizontal) = split_columns(&row_lo, filter);
        let (vertical, diagonal) = split_columns(&row_hi, filter);
        details.push(DetailLevel {
            input_width,
            input_height,
            horizontal,
            vertical,
            diagonal,
        });
        current = approx;
    }
    Ok(SubbandPyramid {
        approximation: current,
        details,
    })
}

/// Multi-level 2-D DWT of an image.
pub fn dwt2(img: &GrayImage, filter: &WaveletFilter, levels: usize) -> Result<SubbandPyramid> {
    dwt2_grid(img.as_grid(), filter, levels)
}

/// Reconstructs the grid a pyramid was computed from.
pub fn idwt2(pyr: &SubbandPyramid, filter: &WaveletFilter) -> Result<Grid> {
    if pyr.details.is_empty() {
        return Err(Error::Structure("pyramid has no levels".into()));
    }
    let mut current = pyr.approximation.clone();
    for (depth, level) in pyr.details.iter().enumerate().rev() {
        let shape = (level.input_width.div_ceil(2), level.input_height.div_ceil(2));
        for (name, band) in [
            ("approximation", &current),
            ("horizontal", &level.horizontal),
            ("vertical", &level.vertical),
            ("diagonal", &level.diagonal),
        ] {
            if (band.width(), band.height()) != shape {
                return Err(Error::Structure(format!(
                    "level {} {name} band is {}x{}, expected {}x{}",
                    depth + 1,
                    band.width(),
                    band.height(),
                    shape.0,
                    shape.1
                )));
            }
        }
        let row_lo = merge_columns(&current, &level.horizontal, level.input_height, filter);
        let row_hi = merge_columns(&level.vertical, &level.diagonal, level.input_height, filter);
        current = merge_rows(&row_lo, &row_hi, level.input_width, filter);
    }
    Ok(current)
}

/// Pools each of the `3L + 1` sub-bands into (mean absolute value, standard
/// deviation); `dim = 2 · (3L + 1)`.
pub fn dwt_descriptor(img: &GrayImage, filter: &WaveletFilter, levels: usize) -> Result<FeatureVector> {
    let pyr = dwt2(img, filter, levels)?;
    let mut values = Vec::with_capacity(2 * (3 * levels + 1));
    for band in pyr.subbands() {
        let mean_abs = band.data().iter().map(|v| v.abs()).sum::<f64>() / band.data().len() as f64;
        let (_, std) = mean_std(band.data().iter().copied());
        values.push(mean_abs);
        values.push(std);
    }
    FeatureVector::new(filter.kind().descriptor(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar_taps() {
        let f = WaveletFilter::haar();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(f.lowpass(), &[s, s]);
        assert_eq!(f.highpass(), &[s, -s]);
    }

    #[test]
    fn filter_normalization() {
        for f in [WaveletFilter::haar(), WaveletFilter::db8()] {
            let sum: f64 = f.lowpass().iter().sum();
            let energy: f64 = f.lowpass().iter().map(|v| v * v).sum();
            assert!((sum - 2f64.sqrt()).abs() < 1e-10);
            assert!((energy - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn db8_orthogonal_to_even_shifts() {
        let lo = WaveletFilter::db8().lowpass().to_vec();
        for shift in (2..16).step_by(2) {
            let dot: f64 = (0..16 - shift).map(|n| lo[n] * lo[n + shift]).sum();
            assert!(dot.abs() < 1e-12, "shift {shift}: {dot}");
        }
    }

    #[test]
    fn haar_step_by_hand() {
        let (a, d) = WaveletFilter::haar().analyze(&[4.0, 6.0, 10.0, 12.0]);
        let s = 2f64.sqrt();
        assert!((a[0] - 10.0 / s).abs() < 1e-12 && (a[1] - 22.0 / s).abs() < 1e-12);
        assert!((d[0] + 2.0 / s).abs() < 1e-12 && (d[1] + 2.0 / s).abs() < 1e-12);
        assert!((a[0] - 7.0711).abs() < 1e-4 && (a[1] - 15.5563).abs() < 1e-4);
    }

    #[test]
    fn odd_lengths_round_trip() {
        let f = WaveletFilter::db8();
        let signal: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3).sin()).collect();
        let (a, d) = f.analyze(&signal);
        assert_eq!(a.len(), 4);
        let back = f.synthesize(&a, &d, 7);
        for (x, y) in signal.iter().zip(back) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn pyramid_shapes() {
        let img = GrayImage::constant(13, 9, 0.5).unwrap();
        let pyr = dwt2(&img, &WaveletFilter::haar(), 3).unwrap();
        let dims: Vec<_> = pyr
            .details
            .iter()
            .map(|l| (l.horizontal.width(), l.horizontal.height()))
            .collect();
        assert_eq!(dims, vec![(7, 5), (4, 3), (2, 2)]);
        assert_eq!((pyr.approximation.width(), pyr.approximation.height()), (2, 2));
        let back = idwt2(&pyr, &WaveletFilter::haar()).unwrap();
        assert!(back.max_abs_diff(img.as_grid()) < 1e-12);
    }

    #[test]
    fn too_many_levels() {
        let img = GrayImage::constant(8, 8, 0.5).unwrap();
        assert!(dwt2(&img, &WaveletFilter::haar(), 3).is_ok());
        assert!(matches!(dwt2(&img, &WaveletFilter::haar(), 4), Err(Error::Parameter(_))));
        assert!(matches!(dwt2(&img, &WaveletFilter::haar(), 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_pyramid_and_bad_structure() {
        let img = GrayImage::constant(16, 16, 0.0).unwrap();
        let mut pyr = dwt2(&img, &WaveletFilter::db8(), 2).unwrap();
        let back = idwt2(&pyr, &WaveletFilter::db8()).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
        pyr.details[1].diagonal = Grid::zeros(3, 4);
        assert!(matches!(idwt2(&pyr, &WaveletFilter::db8()), Err(Error::Structure(_))));
    }

    #[test]
    fn delta_round_trip() {
        let mut data = vec![0.0; 32 * 32];
        data[17 * 32 + 5] = 1.0;
        let img = GrayImage::new(32, 32, data).unwrap();
        for f in [WaveletFilter::haar(), WaveletFilter::db8()] {
            let back = idwt2(&dwt2(&img, &f, 3).unwrap(), &f).unwrap();
            assert!(back.max_abs_diff(img.as_grid()) < 1e-8);
        }
    }

    #[test]
    fn constant_descriptor() {
        let c = 0.3;
        let img = GrayImage::constant(64, 64, c).unwrap();
        for f in [WaveletFilter::haar(), WaveletFilter::db8()] {
            let fv = dwt_descriptor(&img, &f, 3).unwrap();
            assert_eq!(fv.dim(), 20);
            assert!((fv.values()[0] - 8.0 * c).abs() < 1e-10);
            assert!(fv.values()[1].abs() < 1e-10);
            assert!(fv.values()[2..].iter().all(|v| v.abs() < 1e-10));
        }
    }
}
