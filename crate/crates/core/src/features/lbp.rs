//! Classic 3×3 local binary patterns.

use crate::error::{Error, Result};
use crate::features::{normalized_histogram, Descriptor, FeatureVector};
use crate::image::GrayImage;

/// Neighbour offsets clockwise from the top-left; the first entry is the
/// most significant bit.
///
/// <pre>
/// 7  6  5
/// 0  c  4
/// 1  2  3
/// </pre>
/// (numbers are bit positions)
const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

/// LBP code of the interior pixel `(x, y)`. A bit is set when the neighbour
/// is greater than or equal to the centre.
pub fn lbp_code(img: &GrayImage, x: usize, y: usize) -> u8 {
    let center = img.get(x, y);
    NEIGHBOURS.iter().fold(0u8, |code, &(dx, dy)| {
        let nx = (x as isize + dx) as usize;
        let ny = (y as isize + dy) as usize;
        (code << 1) | u8::from(img.get(nx, ny) >= center)
    })
}

/// 256-bin normalized histogram of the LBP codes of all interior pixels.
pub fn lbp_descriptor(img: &GrayImage) -> Result<FeatureVector> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(Error::Size(format!("LBP needs at least 3x3, got {w}x{h}")));
    }
    let mut counts = [0u64; 256];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            counts[lbp_code(img, x, y) as usize] += 1;
        }
    }
    normalized_histogram(Descriptor::Lbp, &counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window(ring: [f64; 8], center: f64) -> GrayImage {
        // ring listed clockwise from top-left
        let data = vec![
            ring[0], ring[1], ring[2], //
            ring[7], center, ring[3], //
            ring[6], ring[5], ring[4],
        ];
        GrayImage::new(3, 3, data.iter().map(|v| v / 10.0).collect()).unwrap()
    }

    /// Straightforward re-derivation: walk the ring explicitly and weight bit
    /// `i` (clockwise from top-left) by `2^(7 - i)`.
    fn reference_code(ring: [f64; 8], center: f64) -> u8 {
        ring.iter()
            .enumerate()
            .map(|(i, &v)| if v >= center { 1u8 << (7 - i) } else { 0 })
            .sum()
    }

    #[test]
    fn constant_image_is_all_ones() {
        let img = GrayImage::constant(6, 5, 0.4).unwrap();
        let fv = lbp_descriptor(&img).unwrap();
        assert_eq!(fv.dim(), 256);
        assert_eq!(fv.values()[255], 1.0);
    }

    #[test]
    fn all_darker_neighbours_give_zero() {
        let fv = lbp_descriptor(&window([0.0; 8], 5.0)).unwrap();
        assert_eq!(fv.values()[0], 1.0);
    }

    #[test]
    fn alternating_ring() {
        let ring = [9.0, 0.0, 9.0, 0.0, 9.0, 0.0, 9.0, 0.0];
        let img = window(ring, 5.0);
        assert_eq!(lbp_code(&img, 1, 1), 0b1010_1010);
        assert_eq!(reference_code(ring, 5.0), 170);
        assert_eq!(lbp_descriptor(&img).unwrap().values()[170], 1.0);
    }

    #[test]
    fn matches_reference_on_every_single_bit() {
        for bit in 0..8 {
            let mut ring = [0.0; 8];
            ring[bit] = 9.0;
            let img = window(ring, 5.0);
            assert_eq!(lbp_code(&img, 1, 1), reference_code(ring, 5.0));
        }
    }

    #[test]
    fn too_small() {
        let img = GrayImage::constant(2, 5, 0.0).unwrap();
        assert!(matches!(lbp_descriptor(&img), Err(Error::Size(_))));
    }
}
