//! Graph-based visual saliency.
//!
//! Seven feature maps (intensity, red-green and blue-yellow opponency, four
//! Gabor orientations) are computed at 32×32. Each map becomes a fully
//! connected Markov chain with edge weight `|M(a) - M(b)| · K(a, b)`, where
//! `K` is a Gaussian of the grid distance with σ = 0.15·32. The chain's
//! equilibrium is the activation map. A second chain with weights
//! `A(b) · K(a, b)` concentrates the activation, and the normalized maps are
//! summed into a master map of unit mass.

use std::sync::OnceLock;

use rayon::prelude::*;

use crate::features::spectral::{gabor_bank, gabor_magnitudes, Fft2, GaborFilter};
use crate::imageproc::{resize, ImageRgb, Plane, WORKING_SIDE};

pub const MAP_SIDE: usize = 32;
pub const DIM: usize = MAP_SIDE * MAP_SIDE;
pub const SIGMA_FRACTION: f64 = 0.15;
pub const MAX_ITERATIONS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-9;

const ORIENTATION_PAD: usize = 8;
const DARK_THRESHOLD: f64 = 0.1;

/// Result of a power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub distribution: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Row-normalize an `n`×`n` weight matrix in place. Returns `false` when
/// some row has no outgoing weight.
pub fn row_normalize(weights: &mut [f64], n: usize) -> bool {
    for row in weights.chunks_exact_mut(n) {
        let total: f64 = row.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return false;
        }
        row.iter_mut().for_each(|w| *w /= total);
    }
    true
}

/// Stationary distribution of the row-stochastic `transition` matrix by
/// power iteration from the uniform distribution. Iterates the lazy chain
/// `(P + I) / 2`, which has the same equilibrium but is aperiodic, until the
/// L1 change drops below `TOLERANCE` or `MAX_ITERATIONS` is reached.
pub fn stationary_distribution(transition: &[f64], n: usize) -> Equilibrium {
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    for iteration in 1..=MAX_ITERATIONS {
        next.iter_mut().zip(&pi).for_each(|(v, p)| *v = 0.5 * p);
        for (a, row) in transition.chunks_exact(n).enumerate() {
            let mass = 0.5 * pi[a];
            if mass != 0.0 {
                next.iter_mut().zip(row).for_each(|(v, p)| *v += mass * p);
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < TOLERANCE {
            return Equilibrium {
                distribution: pi,
                iterations: iteration,
                converged: true,
            };
        }
    }
    Equilibrium {
        distribution: pi,
        iterations: MAX_ITERATIONS,
        converged: false,
    }
}

/// Gaussian of squared grid distance between all cell pairs of a
/// `side`×`side` grid.
pub fn distance_kernel(side: usize, sigma: f64) -> Vec<f64> {
    let n = side * side;
    let mut k = Vec::with_capacity(n * n);
    for a in 0..n {
        let (ay, ax) = ((a / side) as f64, (a % side) as f64);
        for b in 0..n {
            let (by, bx) = ((b / side) as f64, (b % side) as f64);
            let d2 = (ay - by).powi(2) + (ax - bx).powi(2);
            k.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    k
}

fn map_kernel() -> &'static [f64] {
    static KERNEL: OnceLock<Vec<f64>> = OnceLock::new();
    KERNEL.get_or_init(|| distance_kernel(MAP_SIDE, SIGMA_FRACTION * MAP_SIDE as f64))
}

/// Transition matrix of the activation chain, or `None` when the map is
/// constant and the chain has no edges.
pub fn activation_chain(map: &[f64], kernel: &[f64]) -> Option<Vec<f64>> {
    let n = map.len();
    let mut w: Vec<f64> = Vec::with_capacity(n * n);
    for &ma in map {
        w.extend(map.iter().map(|mb| (ma - mb).abs()));
    }
    w.iter_mut().zip(kernel).for_each(|(v, k)| *v *= k);
    row_normalize(&mut w, n).then_some(w)
}

/// Transition matrix of the normalization chain, edges into `b` weighted by
/// `activation[b]`.
pub fn normalization_chain(activation: &[f64], kernel: &[f64]) -> Option<Vec<f64>> {
    let n = activation.len();
    let mut w = kernel.to_vec();
    for row in w.chunks_exact_mut(n) {
        row.iter_mut().zip(activation).for_each(|(v, a)| *v *= a);
    }
    row_normalize(&mut w, n).then_some(w)
}

/// Outcome of running both chains on one feature map.
#[derive(Debug, Clone)]
pub struct MapOutcome {
    pub normalized: Vec<f64>,
    /// True when either chain degenerated or failed to converge and the
    /// uniform map was used instead.
    pub fell_back: bool,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Activation followed by normalization for one map. A constant map, or a
/// chain that does not converge, contributes the uniform map.
pub fn process_map(map: &[f64], kernel: &[f64]) -> MapOutcome {
    let n = map.len();
    let fallback = MapOutcome {
        normalized: uniform(n),
        fell_back: true,
    };
    let Some(p) = activation_chain(map, kernel) else {
        return fallback;
    };
    let activation = stationary_distribution(&p, n);
    if !activation.converged {
        return fallback;
    }
    let Some(q) = normalization_chain(&activation.distribution, kernel) else {
        return fallback;
    };
    let normalized = stationary_distribution(&q, n);
    if !normalized.converged {
        return fallback;
    }
    MapOutcome {
        normalized: normalized.distribution,
        fell_back: false,
    }
}

fn orientation_kernels() -> &'static (Fft2, Vec<GaborFilter>) {
    static K: OnceLock<(Fft2, Vec<GaborFilter>)> = OnceLock::new();
    K.get_or_init(|| {
        let n = MAP_SIDE + 2 * ORIENTATION_PAD;
        (Fft2::new(n), gabor_bank(n, &[4]))
    })
}

/// The seven 32×32 feature maps of an image (any size; averaged down).
pub fn feature_maps(img: &ImageRgb) -> Vec<Plane> {
    let [r, g, b] = [0, 1, 2].map(|c| {
        let mut p = img.channel(c).block_mean(MAP_SIDE, MAP_SIDE);
        p.data.iter_mut().for_each(|v| *v /= 255.0);
        p
    });
    let n = MAP_SIDE * MAP_SIDE;
    let mut intensity = Vec::with_capacity(n);
    let mut red_green = Vec::with_capacity(n);
    let mut blue_yellow = Vec::with_capacity(n);
    for i in 0..n {
        let (rv, gv, bv) = (r.data[i], g.data[i], b.data[i]);
        intensity.push((rv + gv + bv) / 3.0);
        let max = rv.max(gv).max(bv);
        if max < DARK_THRESHOLD {
            red_green.push(0.0);
            blue_yellow.push(0.0);
        } else {
            red_green.push((rv - gv) / max);
            blue_yellow.push((bv - rv.min(gv)) / max);
        }
    }
    let intensity = Plane::new(MAP_SIDE, MAP_SIDE, intensity);
    let (fft, bank) = orientation_kernels();
    let mut maps = vec![
        intensity.clone(),
        Plane::new(MAP_SIDE, MAP_SIDE, red_green),
        Plane::new(MAP_SIDE, MAP_SIDE, blue_yellow),
    ];
    maps.extend(gabor_magnitudes(&intensity, ORIENTATION_PAD, fft, bank));
    maps
}

/// Saliency map with diagnostics.
#[derive(Debug, Clone)]
pub struct Saliency {
    pub map: Vec<f64>,
    pub fallbacks: usize,
}

/// Saliency of an image after resizing to 256×256, with the number of
/// feature maps that fell back to uniform.
pub fn gbvs_saliency_detailed(img: &ImageRgb) -> Saliency {
    let img = resize(img, WORKING_SIDE, WORKING_SIDE).expect("working size is positive");
    let kernel = map_kernel();
    let outcomes: Vec<MapOutcome> = feature_maps(&img)
        .par_iter()
        .map(|m| {
            // Maps whose range is at rounding level carry no structure.
            let (lo, hi) = m.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            if hi - lo < 1e-12 {
                MapOutcome {
                    normalized: uniform(DIM),
                    fell_back: true,
                }
            } else {
                process_map(&m.data, kernel)
            }
        })
        .collect();
    let mut master = vec![0.0; DIM];
    for o in &outcomes {
        master.iter_mut().zip(&o.normalized).for_each(|(m, v)| *m += v);
    }
    let total: f64 = master.iter().sum();
    master.iter_mut().for_each(|v| *v /= total);
    Saliency {
        map: master,
        fallbacks: outcomes.iter().filter(|o| o.fell_back).count(),
    }
}

/// 1024-dimensional saliency feature (32×32 master map, row-major).
pub fn gbvs_saliency(img: &ImageRgb) -> Vec<f64> {
    gbvs_saliency_detailed(img).map
}
