//! Joint L*a*b* color histogram.

use crate::imageproc::ImageLab;

pub const L_BINS: usize = 4;
pub const AB_BINS: usize = 14;
pub const DIM: usize = L_BINS * AB_BINS * AB_BINS;

const L_RANGE: (f64, f64) = (0.0, 100.0);
const AB_RANGE: (f64, f64) = (-110.0, 110.0);

/// Uniform bin index of `v` on `[lo, hi]` with `bins` bins; values outside
/// the range clip to the end bins.
fn bin(v: f64, (lo, hi): (f64, f64), bins: usize) -> usize {
    let pos = (v - lo) * bins as f64 / (hi - lo);
    (pos.floor().max(0.0) as usize).min(bins - 1)
}

/// Flat index of a color in the 4×14×14 layout (L-major, then a*, then b*).
pub fn bin_index(lab: [f64; 3]) -> usize {
    let l = bin(lab[0], L_RANGE, L_BINS);
    let a = bin(lab[1], AB_RANGE, AB_BINS);
    let b = bin(lab[2], AB_RANGE, AB_BINS);
    (l * AB_BINS + a) * AB_BINS + b
}

/// 784-bin joint histogram normalized to unit mass.
pub fn lab_histogram(img: &ImageLab) -> Vec<f64> {
    let mut counts = vec![0u64; DIM];
    for &p in img.pixels() {
        counts[bin_index(p)] += 1;
    }
    let total = img.pixels().len() as f64;
    counts.into_iter().map(|c| c as f64 / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageproc::{srgb_to_cielab, ImageRgb};
    use proptest::prelude::*;

    #[test]
    fn black_image_lands_in_center_ab_bin() {
        let lab = srgb_to_cielab(&ImageRgb::filled(5, 4, [0, 0, 0]).unwrap());
        let h = lab_histogram(&lab);
        assert_eq!(h.len(), 784);
        assert_eq!(h[7 * 14 + 7], 1.0);
        assert_eq!(h.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn matches_brute_force_binning() {
        let colors = [[12.5, -3.0, 40.0], [99.0, 109.9, -110.0], [50.0, 0.0, 15.7142]];
        let img = ImageLab::new(3, 1, colors.to_vec()).unwrap();
        let h = lab_histogram(&img);
        // brute force: scan every bin box and test membership
        let mut expected = vec![0.0; DIM];
        for c in colors {
            for l in 0..4 {
                for a in 0..14 {
                    for b in 0..14 {
                        let inside = |v: f64, lo: f64, w: f64, k: usize, n: usize| {
                            let lo_edge = lo + w * k as f64;
                            (v >= lo_edge || k == 0) && (v < lo_edge + w || k == n - 1)
                        };
                        if inside(c[0], 0.0, 25.0, l, 4)
                            && inside(c[1], -110.0, 220.0 / 14.0, a, 14)
                            && inside(c[2], -110.0, 220.0 / 14.0, b, 14)
                        {
                            expected[(l * 14 + a) * 14 + b] += 1.0 / 3.0;
                        }
                    }
                }
            }
        }
        for (got, want) in h.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_values_clip() {
        assert_eq!(bin_index([-5.0, -500.0, 500.0]), 13);
        assert_eq!(bin_index([100.0, 110.0, 110.0]), DIM - 1);
    }

    proptest! {
        #[test]
        fn normalized_and_order_invariant(pixels in proptest::collection::vec(any::<[u8; 3]>(), 1..64), rot in 0usize..64) {
            let n = pixels.len();
            let flat: Vec<u8> = pixels.iter().flatten().copied().collect();
            let img = ImageRgb::new(n, 1, flat).unwrap();
            let h = lab_histogram(&srgb_to_cielab(&img));
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(h.iter().all(|&v| v >= 0.0));
            let mut rotated = pixels.clone();
            rotated.rotate_left(rot % n);
            let flat: Vec<u8> = rotated.iter().flatten().copied().collect();
            let h2 = lab_histogram(&srgb_to_cielab(&ImageRgb::new(n, 1, flat).unwrap()));
            prop_assert_eq!(h, h2);
        }
    }
}
