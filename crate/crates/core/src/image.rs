//! Grayscale images: loading, PGM output, resizing and histogram equalization.
//!
//! Every descriptor consumes a [`GrayImage`], a row-major grid of intensities
//! in `[0, 1]`. Files are read as 8-bit PGM (`P2` or `P5`, maxval 255) or
//! 8-bit PNG; colour PNGs are reduced with luma weights `0.299 R + 0.587 G +
//! 0.114 B`.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Row-major real grid without range restrictions. Transform outputs
/// (wavelet reconstructions, filter responses) live here.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Parameter(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Parameter(format!(
                "grid {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        assert_eq!(
            (self.width, self.height),
            (other.width, other.height),
            "grid shapes differ"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A grayscale image with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    grid: Grid,
}

impl GrayImage {
    /// Builds an image, rejecting zero dimensions, length mismatches and
    /// samples outside `[0, 1]` (including NaN).
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!(
                "image sample {bad} outside [0, 1]"
            )));
        }
        Ok(GrayImage {
            grid: Grid::new(width, height, data)?,
        })
    }

    /// Builds an image from 8-bit samples scaled by 1/255.
    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        GrayImage::new(width, height, data)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        GrayImage::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.grid.width
    }

    pub fn height(&self) -> usize {
        self.grid.height
    }

    pub fn data(&self) -> &[f64] {
        &self.grid.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.grid.get(x, y)
    }

    pub fn as_grid(&self) -> &Grid {
        &self.grid
    }

    pub fn into_grid(self) -> Grid {
        self.grid
    }

    /// Quantizes every sample to the nearest of 256 levels.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data()
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}

/// Reads a PGM (`P2`/`P5`, maxval 255) or 8-bit PNG file.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, path)
}

/// Decodes an in-memory image; `path` is only used for error messages.
pub fn decode_image(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    match bytes {
        [b'P', b'2', ..] | [b'P', b'5', ..] => decode_pgm(bytes, path),
        [0x89, b'P', b'N', b'G', ..] => decode_png(bytes, path),
        _ => Err(Error::format(path, "not a PGM (P2/P5) or PNG file")),
    }
}

fn decode_pgm(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    let ascii = bytes[1] == b'2';
    let mut pos = 2;
    let mut header = [0usize; 3];
    for field in header.iter_mut() {
        *field = read_pgm_number(bytes, &mut pos)
            .ok_or_else(|| Error::format(path, "truncated PGM header"))?;
    }
    let [width, height, maxval] = header;
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    if maxval != 255 {
        return Err(Error::format(
            path,
            format!("PGM maxval must be 255, found {maxval}"),
        ));
    }
    let count = width * height;
    let samples: Vec<u8> = if ascii {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let v = read_pgm_number(bytes, &mut pos)
                .ok_or_else(|| Error::format(path, "truncated P2 raster"))?;
            if v > 255 {
                return Err(Error::format(path, format!("sample {v} exceeds maxval")));
            }
            out.push(v as u8);
        }
        out
    } else {
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| Error::format(path, "truncated P5 raster"))?;
        raster.to_vec()
    };
    GrayImage::from_bytes(width, height, &samples)
}

/// Parses the next decimal token, skipping whitespace and `#` comments.
/// Leaves `pos` on the byte right after the token.
fn read_pgm_number(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        match bytes.get(*pos)? {
            b'#' => {
                while *bytes.get(*pos)? != b'\n' {
                    *pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<GrayImage> {
    use image::DynamicImage;

    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    if width == 0 || height == 0 {
        return Err(Error::format(path, "zero image dimension"));
    }
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(buf) => buf.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => {
            buf.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect()
        }
        DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| luma(&p.0)).collect(),
        DynamicImage::ImageRgba8(buf) => buf.pixels().map(|p| luma(&p.0)).collect(),
        other => {
            return Err(Error::format(
                path,
                format!("only 8-bit PNG is supported, found {:?}", other.color()),
            ))
        }
    };
    GrayImage::new(width, height, data)
}

fn luma(rgb: &[u8]) -> f64 {
    let y: f64 = rgb
        .iter()
        .zip(LUMA)
        .map(|(&c, w)| w * f64::from(c))
        .sum();
    (y / 255.0).clamp(0.0, 1.0)
}

/// Writes the image as binary PGM (`P5`), quantized to 8 bits.
pub fn write_pgm(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_bytes());
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

/// 256-bin histogram equalization. Samples are binned at `round(255 v)` and
/// mapped through the normalized cumulative histogram; a single-level image
/// is returned unchanged.
pub fn equalize_histogram(img: &GrayImage) -> GrayImage {
    let bins: Vec<usize> = img
        .data()
        .iter()
        .map(|v| (v * 255.0).round() as usize)
        .collect();
    let mut hist = [0usize; 256];
    for &b in &bins {
        hist[b] += 1;
    }
    let mut cdf = [0usize; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let total = bins.len();
    let cdf_min = hist
        .iter()
        .zip(cdf)
        .find(|(h, _)| **h > 0)
        .map_or(0, |(_, c)| c);
    if total == cdf_min {
        return img.clone();
    }
    let span = (total - cdf_min) as f64;
    let data = bins
        .iter()
        .map(|&b| (cdf[b] - cdf_min) as f64 / span)
        .collect();
    GrayImage {
        grid: Grid {
            width: img.width(),
            height: img.height(),
            data,
        },
    }
}

/// Bilinear resize with edge-aligned sampling: output sample `i` of `n` reads
/// source position `i (m - 1) / (n - 1)`, so the corners map onto corners.
pub fn resize_bilinear(img: &GrayImage, target_w: usize, target_h: usize) -> Result<GrayImage> {
    if target_w == 0 || target_h == 0 {
        return Err(Error::Parameter(format!(
            "target size must be positive, got {target_w}x{target_h}"
        )));
    }
    let xs = sample_positions(img.width(), target_w);
    let ys = sample_positions(img.height(), target_h);
    let mut data = Vec::with_capacity(target_w * target_h);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            let v = top * (1.0 - fy) + bottom * fy;
            data.push(v.clamp(0.0, 1.0));
        }
    }
    GrayImage::new(target_w, target_h, data)
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let pos = if dst == 1 {
                (src - 1) as f64 / 2.0
            } else {
                i as f64 * (src - 1) as f64 / (dst - 1) as f64
            };
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Canonicalizes an image: optional histogram equalization, then bilinear
/// resize to the target size.
pub fn preprocess(
    img: &GrayImage,
    target_w: usize,
    target_h: usize,
    equalize: bool,
) -> Result<GrayImage> {
    if equalize {
        resize_bilinear(&equalize_histogram(img), target_w, target_h)
    } else {
        resize_bilinear(img, target_w, target_h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(bytes: &[u8]) -> Result<GrayImage> {
        decode_image(bytes, Path::new("mem"))
    }

    #[test]
    fn p5_endpoints() {
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = decode(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn p2_constant_with_comment() {
        let mut text = String::from("P2\n# a comment\n4 4\n255\n");
        for _ in 0..16 {
            text.push_str("128 ");
        }
        let img = decode(text.as_bytes()).unwrap();
        assert!(img.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-15));
        assert!((img.data()[0] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn rgb_png_uses_luma_weights() {
        let mut png = Vec::new();
        let buf = image::RgbImage::from_pixel(1, 1, image::Rgb([255, 0, 0]));
        buf.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .unwrap();
        let img = decode(&png).unwrap();
        assert!((img.data()[0] - 0.299).abs() < 1e-12);
    }

    #[test]
    fn gray_png() {
        let mut png = Vec::new();
        let buf = image::GrayImage::from_raw(2, 1, vec![0, 51]).unwrap();
        buf.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .unwrap();
        let img = decode(&png).unwrap();
        assert_eq!(img.data(), &[0.0, 0.2]);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(decode(b"GIF89a"), Err(Error::Format { .. })));
        assert!(matches!(decode(b"P5\n0 3\n255\n"), Err(Error::Format { .. })));
        assert!(matches!(
            decode(b"P5\n1 1\n65535\n\0\0"),
            Err(Error::Format { .. })
        ));
        assert!(matches!(decode(b"P5\n4 4\n255\n\0"), Err(Error::Format { .. })));
        assert!(matches!(
            load_image("/nonexistent/file.pgm"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn constant_survives_resize_and_equalization() {
        let img = GrayImage::constant(5, 3, 0.3).unwrap();
        for eq in [false, true] {
            let out = preprocess(&img, 7, 11, eq).unwrap();
            assert_eq!((out.width(), out.height()), (7, 11));
            assert!(out.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        }
    }

    #[test]
    fn same_size_resize_is_identity() {
        let img = GrayImage::new(2, 2, vec![0.1, 0.7, 0.4, 0.9]).unwrap();
        assert_eq!(preprocess(&img, 2, 2, false).unwrap(), img);
    }

    #[test]
    fn upsample_column() {
        // independent oracle: piecewise-linear interpolation through the
        // samples placed at 0 and 1, evaluated at 0, 1/3, 2/3, 1
        let img = GrayImage::new(1, 2, vec![0.0, 1.0]).unwrap();
        let out = resize_bilinear(&img, 1, 4).unwrap();
        let oracle = |t: f64| 0.0 * (1.0 - t) + 1.0 * t;
        for (i, v) in out.data().iter().enumerate() {
            assert!((v - oracle(i as f64 / 3.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn equalization_spreads_levels() {
        let img = GrayImage::from_bytes(4, 1, &[10, 10, 20, 30]).unwrap();
        let eq = equalize_histogram(&img);
        assert_eq!(eq.data(), &[0.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = GrayImage::new(3, 2, vec![0.0, 0.11, 0.5, 0.77, 0.999, 1.0]).unwrap();
        write_pgm(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert!(img.as_grid().max_abs_diff(back.as_grid()) <= 1.0 / 255.0);
    }
}
