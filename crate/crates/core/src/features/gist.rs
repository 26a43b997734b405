//! Color GIST descriptor.
//!
//! Each RGB channel is log-compressed and prefiltered with a local
//! luminance/contrast normalization (Gaussian low-pass with cutoff 4,
//! contrast pooled over the three channels), then filtered by a 20-filter
//! Gabor bank (3 scales with 8, 8 and 4 orientations) on a grid mirror-padded
//! by 32 pixels. Filter magnitudes are averaged over a 4×4 spatial grid.
//!
//! Layout: `[channel][filter][grid row][grid col]`, filters ordered by
//! scale then orientation, so index = `c*320 + f*16 + row*4 + col`.

use std::sync::OnceLock;

use crate::features::spectral::{crop, gabor_bank, gabor_magnitudes, gaussian_transfer, pad_symmetric, Fft2, GaborFilter};
use crate::imageproc::{resize, ImageRgb, Plane, WORKING_SIDE};

pub const ORIENTATIONS: [usize; 3] = [8, 8, 4];
pub const FILTERS: usize = 20;
pub const GRID: usize = 4;
pub const DIM: usize = 3 * FILTERS * GRID * GRID;

const PREFILTER_PAD: usize = 5;
const PREFILTER_CUTOFF: f64 = 4.0;
const BOUNDARY: usize = 32;

struct GistKernels {
    pre_fft: Fft2,
    pre_lowpass: Vec<f64>,
    fft: Fft2,
    bank: Vec<GaborFilter>,
}

fn kernels() -> &'static GistKernels {
    static KERNELS: OnceLock<GistKernels> = OnceLock::new();
    KERNELS.get_or_init(|| {
        let pre_n = WORKING_SIDE + 2 * PREFILTER_PAD;
        let n = WORKING_SIDE + 2 * BOUNDARY;
        GistKernels {
            pre_fft: Fft2::new(pre_n),
            pre_lowpass: gaussian_transfer(pre_n, PREFILTER_CUTOFF / 2f64.ln().sqrt()),
            fft: Fft2::new(n),
            bank: gabor_bank(n, &ORIENTATIONS),
        }
    })
}

/// Local luminance and contrast normalization of the three channels.
/// Inputs are raw 0..255 values; outputs have the input's size.
pub fn prefilter(channels: &[Plane; 3]) -> [Plane; 3] {
    let k = kernels();
    let (w, h) = (channels[0].width, channels[0].height);
    let n = k.pre_fft.size();
    let highpass: Vec<Plane> = channels
        .iter()
        .map(|ch| {
            // the high-pass is invariant to a constant offset
            let offset = (ch.data[0] + 1.0).ln();
            let logged = Plane::new(w, h, ch.data.iter().map(|v| (v + 1.0).ln() - offset).collect());
            let padded = pad_symmetric(&logged, PREFILTER_PAD, n);
            let low = k.pre_fft.filter(&k.pre_fft.forward_real(&padded), &k.pre_lowpass);
            Plane::new(n, n, padded.data.iter().zip(&low).map(|(v, l)| v - l.re).collect())
        })
        .collect();
    let energy = Plane::new(
        n,
        n,
        (0..n * n)
            .map(|i| highpass.iter().map(|p| p.data[i]).sum::<f64>() / 3.0)
            .map(|m| m * m)
            .collect(),
    );
    let local = k.pre_fft.filter(&k.pre_fft.forward_real(&energy), &k.pre_lowpass);
    let local_std: Vec<f64> = local.iter().map(|c| c.norm().sqrt()).collect();
    std::array::from_fn(|c| {
        let normalized = Plane::new(
            n,
            n,
            highpass[c].data.iter().zip(&local_std).map(|(v, s)| v / (0.2 + s)).collect(),
        );
        crop(&normalized, PREFILTER_PAD, PREFILTER_PAD, w, h)
    })
}

/// GIST of one prefiltered channel: 20 filters × 16 grid cells.
fn channel_gist(plane: &Plane) -> Vec<f64> {
    let k = kernels();
    let mut out = Vec::with_capacity(FILTERS * GRID * GRID);
    for response in gabor_magnitudes(plane, BOUNDARY, &k.fft, &k.bank) {
        out.extend(response.block_mean(GRID, GRID).data);
    }
    out
}

/// 960-dimensional color GIST of `img` after resizing to 256×256.
pub fn color_gist(img: &ImageRgb) -> Vec<f64> {
    let img = resize(img, WORKING_SIDE, WORKING_SIDE).expect("working size is positive");
    let channels = [img.channel(0), img.channel(1), img.channel(2)];
    prefilter(&channels).iter().flat_map(channel_gist).collect()
}
