//! Square 2-D FFTs, symmetric padding and the frequency-domain Gabor bank
//! used by the GIST and saliency extractors.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::imageproc::Plane;

/// Forward/inverse 2-D transform of an `n`×`n` grid.
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    fn run(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        fft.process(data);
        transpose(data, n);
        fft.process(data);
        transpose(data, n);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform, normalized by `1/n²`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    pub fn forward_real(&self, plane: &Plane) -> Vec<Complex64> {
        assert_eq!((plane.width, plane.height), (self.n, self.n));
        let mut buf: Vec<Complex64> = plane.data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// `ifft(spectrum · transfer)`, returning the complex result.
    pub fn filter(&self, spectrum: &[Complex64], transfer: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = spectrum.iter().zip(transfer).map(|(s, g)| s * g).collect();
        self.inverse(&mut buf);
        buf
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Signed integer frequency of FFT bin `k` in an `n`-point transform.
#[inline]
pub fn signed_freq(k: usize, n: usize) -> f64 {
    if k < n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

/// Mirror-pad by `pad` on every side, repeating the edge sample
/// (`x[-1] = x[0]`, `x[-2] = x[1]`, ...), then extend at the bottom/right
/// by further mirroring until the grid is `size`×`size`.
pub fn pad_symmetric(plane: &Plane, pad: usize, size: usize) -> Plane {
    let reflect = |i: isize, len: usize| -> usize {
        let len = len as isize;
        let period = 2 * len;
        let mut m = i.rem_euclid(period);
        if m >= len {
            m = period - 1 - m;
        }
        m as usize
    };
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        let sy = reflect(y as isize - pad as isize, plane.height);
        for x in 0..size {
            let sx = reflect(x as isize - pad as isize, plane.width);
            data.push(plane.at(sx, sy));
        }
    }
    Plane::new(size, size, data)
}

/// Crop the `width`×`height` window starting at `(x0, y0)`.
pub fn crop(plane: &Plane, x0: usize, y0: usize, width: usize, height: usize) -> Plane {
    let mut data = Vec::with_capacity(width * height);
    for y in y0..y0 + height {
        data.extend_from_slice(&plane.data[y * plane.width + x0..y * plane.width + x0 + width]);
    }
    Plane::new(width, height, data)
}

/// Isotropic Gaussian transfer `exp(-(fx² + fy²) / s²)` in FFT layout,
/// with integer frequencies.
pub fn gaussian_transfer(n: usize, s: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(n * n);
    for r in 0..n {
        let fy = signed_freq(r, n);
        for c in 0..n {
            let fx = signed_freq(c, n);
            g.push((-(fx * fx + fy * fy) / (s * s)).exp());
        }
    }
    g
}

/// One Gabor transfer function of the bank.
#[derive(Debug, Clone)]
pub struct GaborFilter {
    pub scale: usize,
    pub orientation: usize,
    /// Radians; 0 passes horizontal frequencies, i.e. vertical edges.
    pub angle: f64,
    pub transfer: Vec<f64>,
}

/// Gabor bank defined in the frequency domain on an `n`×`n` grid.
///
/// Scale `s` has `orientations[s]` filters at angles `π·j/orientations[s]`;
/// the radial peak sits at `0.3 / 1.85^s` cycles per pixel. The DC bin is
/// zeroed so every filter ignores constant input.
pub fn gabor_bank(n: usize, orientations: &[usize]) -> Vec<GaborFilter> {
    let mut bank = Vec::new();
    for (scale, &count) in orientations.iter().enumerate() {
        let radial_width = 0.35;
        let peak = 0.3 / 1.85f64.powi(scale as i32);
        let angular = 16.0 * (count * count) as f64 / (32.0 * 32.0);
        for j in 0..count {
            let angle = PI / count as f64 * j as f64;
            let mut transfer = Vec::with_capacity(n * n);
            for r in 0..n {
                let fy = signed_freq(r, n);
                for c in 0..n {
                    let fx = signed_freq(c, n);
                    let fr = (fx * fx + fy * fy).sqrt();
                    let mut tr = fy.atan2(fx) + angle;
                    if tr < -PI {
                        tr += 2.0 * PI;
                    } else if tr > PI {
                        tr -= 2.0 * PI;
                    }
                    let radial = fr / n as f64 / peak - 1.0;
                    transfer.push((-10.0 * radial_width * radial * radial - 2.0 * angular * PI * tr * tr).exp());
                }
            }
            transfer[0] = 0.0;
            bank.push(GaborFilter {
                scale,
                orientation: j,
                angle,
                transfer,
            });
        }
    }
    bank
}

/// Magnitude responses of every filter in `bank` to `plane`, which is
/// mirror-padded by `pad` before filtering and cropped back afterwards.
/// `fft` must be sized for the padded grid.
pub fn gabor_magnitudes(plane: &Plane, pad: usize, fft: &Fft2, bank: &[GaborFilter]) -> Vec<Plane> {
    let n = fft.size();
    let padded = pad_symmetric(plane, pad, n);
    let spectrum = fft.forward_real(&padded);
    bank.iter()
        .map(|f| {
            let response = fft.filter(&spectrum, &f.transfer);
            let mag = Plane::new(n, n, response.iter().map(|c| c.norm()).collect());
            crop(&mag, pad, pad, plane.width, plane.height)
        })
        .collect()
}
