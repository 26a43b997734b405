//! Image decoding and the preprocessing shared by the feature extractors.

use std::path::Path;

use image::ImageFormat;

use crate::error::{Error, Result};

/// Side length every native extractor resizes to.
pub const WORKING_SIDE: usize = 256;

/// 8-bit non-linear sRGB raster, row-major RGB triples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Validation(format!("image must be non-empty, got {width}x{height}")));
        }
        if pixels.len() != 3 * width * height {
            return Err(Error::DimensionMismatch {
                expected: 3 * width * height,
                actual: pixels.len(),
            });
        }
        Ok(ImageRgb { width, height, pixels })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let pixels = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self::new(width, height, pixels)
    }

    /// Build an image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut pixels = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// One color channel (0 = R, 1 = G, 2 = B) as raw 0..255 values.
    pub fn channel(&self, c: usize) -> Plane {
        let data = self.pixels.chunks_exact(3).map(|p| p[c] as f64).collect();
        Plane::new(self.width, self.height, data)
    }
}

/// CIELAB raster, row-major `[L*, a*, b*]` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageLab {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl ImageLab {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(ImageLab { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }
}

/// Single-channel real raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size");
        Plane { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Plane::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Average over non-overlapping blocks. Block edges follow
    /// `floor(i * size / n)` so sizes need not divide evenly.
    pub fn block_mean(&self, out_w: usize, out_h: usize) -> Plane {
        let xs: Vec<usize> = (0..=out_w).map(|i| i * self.width / out_w).collect();
        let ys: Vec<usize> = (0..=out_h).map(|i| i * self.height / out_h).collect();
        let mut data = Vec::with_capacity(out_w * out_h);
        for by in 0..out_h {
            for bx in 0..out_w {
                let (x0, x1, y0, y1) = (xs[bx], xs[bx + 1].max(xs[bx] + 1), ys[by], ys[by + 1].max(ys[by] + 1));
                let mut sum = 0.0;
                for y in y0..y1 {
                    sum += self.data[y * self.width + x0..y * self.width + x1].iter().sum::<f64>();
                }
                data.push(sum / ((x1 - x0) * (y1 - y0)) as f64);
            }
        }
        Plane::new(out_w, out_h, data)
    }
}

/// Decode a JPEG or PNG payload into 8-bit RGB.
pub fn decode(bytes: &[u8]) -> Result<ImageRgb> {
    let format = image::guess_format(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    if !matches!(format, ImageFormat::Png | ImageFormat::Jpeg) {
        return Err(Error::Decode(format!("unsupported format {format:?}")));
    }
    let img = image::load_from_memory_with_format(bytes, format).map_err(|e| Error::Decode(e.to_string()))?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    ImageRgb::new(w as usize, h as usize, rgb.into_raw())
}

/// Read and decode an image file.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

/// Source coordinate and interpolation weight table for one axis, with
/// half-pixel centers: `src = (dst + 0.5) * in / out - 0.5`, clamped.
fn axis_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(input - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resize with half-pixel-center alignment; results round half up.
pub fn resize(img: &ImageRgb, width: usize, height: usize) -> Result<ImageRgb> {
    if width == 0 || height == 0 {
        return Err(Error::Validation(format!("target size must be positive, got {width}x{height}")));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let xt = axis_taps(img.width, width);
    let yt = axis_taps(img.height, height);
    let mut pixels = Vec::with_capacity(3 * width * height);
    for &(y0, y1, fy) in &yt {
        for &(x0, x1, fx) in &xt {
            for c in 0..3 {
                let v = |x: usize, y: usize| img.pixels[3 * (y * img.width + x) + c] as f64;
                let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
                let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
                let value = top * (1.0 - fy) + bottom * fy;
                pixels.push((value + 0.5).floor().clamp(0.0, 255.0) as u8);
            }
        }
    }
    ImageRgb::new(width, height, pixels)
}

/// Central `side`×`side` window; odd margins drop the extra row/column at
/// the bottom/right.
pub fn center_crop(img: &ImageRgb, side: usize) -> Result<ImageRgb> {
    if side == 0 || side > img.width.min(img.height) {
        return Err(Error::Validation(format!(
            "crop side {side} does not fit a {}x{} image",
            img.width, img.height
        )));
    }
    let x0 = (img.width - side) / 2;
    let y0 = (img.height - side) / 2;
    let mut pixels = Vec::with_capacity(3 * side * side);
    for y in y0..y0 + side {
        let row = 3 * (y * img.width + x0);
        pixels.extend_from_slice(&img.pixels[row..row + 3 * side]);
    }
    ImageRgb::new(side, side, pixels)
}

// sRGB primaries, D65 white, 2° observer.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];

fn srgb_to_linear(v: u8) -> f64 {
    let c = v as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Convert one sRGB triple to CIELAB. Outputs are clamped into
/// L* ∈ [0,100], a*, b* ∈ [-110,110].
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    lab_from_linear(lin)
}

fn lab_from_linear(lin: [f64; 3]) -> [f64; 3] {
    let xyz: [f64; 3] = std::array::from_fn(|r| RGB_TO_XYZ[r].iter().zip(&lin).map(|(m, v)| m * v).sum());
    let [fx, fy, fz] = std::array::from_fn(|i| lab_f(xyz[i] / WHITE_D65[i]));
    [
        (116.0 * fy - 16.0).clamp(0.0, 100.0),
        (500.0 * (fx - fy)).clamp(-110.0, 110.0),
        (200.0 * (fy - fz)).clamp(-110.0, 110.0),
    ]
}

/// Per-pixel sRGB → linear RGB → XYZ (D65) → CIELAB.
pub fn srgb_to_cielab(img: &ImageRgb) -> ImageLab {
    let lut: Vec<f64> = (0..=255u8).map(srgb_to_linear).collect();
    let pixels = img
        .pixels
        .chunks_exact(3)
        .map(|p| lab_from_linear([lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]]))
        .collect();
    ImageLab {
        width: img.width,
        height: img.height,
        pixels,
    }
}

/// Rec.601 luma on non-linear sRGB values, scaled to [0, 1].
pub fn rgb_to_gray(img: &ImageRgb) -> Plane {
    let data = img
        .pixels
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
        .collect();
    Plane::new(img.width, img.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // 4x2 RGB PNG written by an independent encoder (Pillow), pixels
    // (x*60, y*120, 255-x*60) for x in 0..4, y in 0..2.
    const PATTERN_PNG: &[u8] = include_bytes!("../tests/data/pattern_4x2.png");

    fn encode_png(img: &ImageRgb) -> Vec<u8> {
        let mut out = Vec::new();
        image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
            .unwrap()
            .write_to(&mut std::io::Cursor::new(&mut out), ImageFormat::Png)
            .unwrap();
        out
    }

    #[test]
    fn decodes_white_pixel() {
        let white = ImageRgb::filled(1, 1, [255, 255, 255]).unwrap();
        let decoded = decode(&encode_png(&white)).unwrap();
        assert_eq!(decoded, white);
    }

    #[test]
    fn decodes_reference_png_exactly() {
        let img = decode(PATTERN_PNG).unwrap();
        assert_eq!((img.width(), img.height()), (4, 2));
        for y in 0..2 {
            for x in 0..4 {
                assert_eq!(img.pixel(x, y), [(x * 60) as u8, (y * 120) as u8, (255 - x * 60) as u8]);
            }
        }
    }

    #[test]
    fn rejects_corrupt_and_foreign_formats() {
        assert!(matches!(decode(b"\x89PNG\r\n\x1a\nnot really"), Err(Error::Decode(_))));
        assert!(matches!(decode(b"garbage bytes"), Err(Error::Decode(_))));
        assert!(matches!(decode(b"GIF89a\x01\x00\x01\x00"), Err(Error::Decode(_))));
    }

    #[test]
    fn resize_identity_and_checkerboard() {
        let img = ImageRgb::from_fn(5, 3, |x, y| [(x * 40) as u8, (y * 70) as u8, 9]).unwrap();
        assert_eq!(resize(&img, 5, 3).unwrap(), img);
        let checker = ImageRgb::from_fn(2, 2, |x, y| if (x + y) % 2 == 0 { [0; 3] } else { [255; 3] }).unwrap();
        // mean of the four corners is 127.5, which rounds half up
        assert_eq!(resize(&checker, 1, 1).unwrap().pixel(0, 0), [128; 3]);
        assert!(resize(&img, 0, 4).is_err());
    }

    #[test]
    fn resize_keeps_constant_images() {
        let img = ImageRgb::filled(7, 5, [13, 200, 77]).unwrap();
        for (w, h) in [(1, 1), (3, 11), (256, 256), (13, 2)] {
            let out = resize(&img, w, h).unwrap();
            assert!(out.pixels().chunks(3).all(|p| p == [13, 200, 77]));
        }
    }

    #[test]
    fn crop_index_arithmetic() {
        let img = ImageRgb::from_fn(4, 4, |x, y| [x as u8, y as u8, 0]).unwrap();
        let c = center_crop(&img, 2).unwrap();
        assert_eq!(c.pixel(0, 0), [1, 1, 0]);
        assert_eq!(c.pixel(1, 1), [2, 2, 0]);
        assert_eq!(center_crop(&img, 4).unwrap(), img);
        // 5 wide, 4 tall: the odd column margin is dropped at the right
        let wide = ImageRgb::from_fn(5, 4, |x, y| [x as u8, y as u8, 0]).unwrap();
        let c = center_crop(&wide, 4).unwrap();
        assert_eq!(c.pixel(0, 0), [0, 0, 0]);
        assert_eq!(c.pixel(3, 3), [3, 3, 0]);
        // 4 wide, 5 tall: the odd row margin is dropped at the bottom
        let tall = ImageRgb::from_fn(4, 5, |x, y| [x as u8, y as u8, 0]).unwrap();
        assert_eq!(center_crop(&tall, 4).unwrap().pixel(0, 0), [0, 0, 0]);
        assert!(center_crop(&img, 5).is_err());
    }

    #[test]
    fn lab_white_and_black_points() {
        let white = rgb_to_lab([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 1e-6);
        assert!(white[1].abs() < 0.01 && white[2].abs() < 0.01);
        assert_eq!(rgb_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn lab_matches_reference_converter() {
        for rgb in [[255u8, 0, 0], [0, 255, 0], [0, 0, 255], [253, 120, 138], [12, 34, 56]] {
            let ours = rgb_to_lab(rgb);
            let theirs = lab::Lab::from_rgb(&rgb);
            let diff = [ours[0] - theirs.l as f64, ours[1] - theirs.a as f64, ours[2] - theirs.b as f64];
            assert!(diff.iter().all(|d| d.abs() < 0.05), "{rgb:?}: {ours:?} vs {theirs:?}");
        }
    }

    #[test]
    fn lab_corner_colors_in_range() {
        for r in [0u8, 255] {
            for g in [0u8, 255] {
                for b in [0u8, 255] {
                    let [l, a, bb] = rgb_to_lab([r, g, b]);
                    assert!((0.0..=100.0).contains(&l) && a.abs() <= 110.0 && bb.abs() <= 110.0);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn lab_outputs_in_declared_ranges(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
            // evaluate without the final clamp so the range claim is not vacuous
            let lin = [r, g, b].map(srgb_to_linear);
            let xyz: [f64; 3] = std::array::from_fn(|i| RGB_TO_XYZ[i].iter().zip(&lin).map(|(m, v)| m * v).sum());
            let [fx, fy, fz] = std::array::from_fn(|i| lab_f(xyz[i] / WHITE_D65[i]));
            let (l, a, bb) = (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz));
            prop_assert!((-1e-9..=100.0 + 1e-4).contains(&l));
            prop_assert!(a.abs() <= 110.0 && bb.abs() <= 110.0);
        }

        #[test]
        fn crop_output_is_square(w in 1usize..20, h in 1usize..20, frac in 0.0f64..1.0) {
            let img = ImageRgb::filled(w, h, [1, 2, 3]).unwrap();
            let side = 1 + ((w.min(h) - 1) as f64 * frac) as usize;
            let c = center_crop(&img, side).unwrap();
            prop_assert_eq!((c.width(), c.height()), (side, side));
        }
    }

    #[test]
    fn gray_levels() {
        let white = rgb_to_gray(&ImageRgb::filled(3, 2, [255; 3]).unwrap());
        assert!(white.data.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let black = rgb_to_gray(&ImageRgb::filled(3, 2, [0; 3]).unwrap());
        assert!(black.data.iter().all(|&v| v == 0.0));
        let red = rgb_to_gray(&ImageRgb::filled(1, 1, [255, 0, 0]).unwrap());
        assert!((red.data[0] - 0.299).abs() < 1e-6);
    }

    #[test]
    fn block_mean_averages() {
        let p = Plane::new(4, 2, vec![1.0, 3.0, 5.0, 7.0, 1.0, 3.0, 5.0, 7.0]);
        let m = p.block_mean(2, 1);
        assert_eq!(m.data, vec![2.0, 6.0]);
    }
}
