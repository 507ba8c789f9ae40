//! Image parametrizations for activation maximization.
//!
//! Both end in a sigmoid. The naive parametrization holds one value per
//! pixel. The Fourier parametrization holds a complex 2D spectrum `z` per
//! channel and forms `x = Re(IFFT(s * z))` with a unitary transform and
//! `s_k = 1 / max(S * |f_k|, 1)`, where `|f_k|` is the radial frequency in
//! cycles per pixel and `S` the larger image side.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    NaivePixel,
    FourierBasis,
}

impl Parametrization {
    pub const ALL: [Parametrization; 2] = [Parametrization::NaivePixel, Parametrization::FourierBasis];

    pub fn as_str(self) -> &'static str {
        match self {
            Parametrization::NaivePixel => "naive_pixel",
            Parametrization::FourierBasis => "fourier_basis",
        }
    }
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Unitary 2D FFT over one `h x w` plane.
pub struct Fft2 {
    h: usize,
    w: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(h: usize, w: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            h,
            w,
            rows: planner.plan_fft_forward(w),
            cols: planner.plan_fft_forward(h),
            rows_inv: planner.plan_fft_inverse(w),
            cols_inv: planner.plan_fft_inverse(h),
        }
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let (rows, cols) = if inverse {
            (&self.rows_inv, &self.cols_inv)
        } else {
            (&self.rows, &self.cols)
        };
        rows.process(data);
        let mut column = vec![Complex64::default(); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                column[y] = data[y * self.w + x];
            }
            cols.process(&mut column);
            for y in 0..self.h {
                data[y * self.w + x] = column[y];
            }
        }
        let norm = 1.0 / ((self.h * self.w) as f64).sqrt();
        for v in data.iter_mut() {
            *v *= norm;
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, true);
    }
}

/// Per-coefficient spectrum scale for an `h x w` plane.
pub fn spectrum_scale(h: usize, w: usize) -> Vec<f64> {
    let side = h.max(w) as f64;
    let freq = |k: usize, n: usize| k.min(n - k) as f64 / n as f64;
    let mut s = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let f = freq(y, h).hypot(freq(x, w));
            s.push(1.0 / (side * f).max(1.0));
        }
    }
    s
}

/// A parametrized 3-channel image of fixed size.
pub enum ImageParam {
    Naive {
        w: usize,
        h: usize,
        values: Vec<f32>,
    },
    Fourier {
        w: usize,
        h: usize,
        spectrum: Vec<Complex64>,
        scale: Vec<f64>,
        fft: Fft2,
    },
}

impl ImageParam {
    /// `noise` supplies standard-normal samples; parameters start at
    /// `init_std * noise`.
    pub fn new(kind: Parametrization, w: usize, h: usize, init_std: f32, mut noise: impl FnMut() -> f32) -> Self {
        match kind {
            Parametrization::NaivePixel => ImageParam::Naive {
                w,
                h,
                values: (0..3 * w * h).map(|_| init_std * noise()).collect(),
            },
            Parametrization::FourierBasis => ImageParam::Fourier {
                w,
                h,
                spectrum: (0..3 * w * h)
                    .map(|_| Complex64::new((init_std * noise()) as f64, (init_std * noise()) as f64))
                    .collect(),
                scale: spectrum_scale(h, w),
                fft: Fft2::new(h, w),
            },
        }
    }

    pub fn size(&self) -> (usize, usize) {
        match self {
            ImageParam::Naive { w, h, .. } | ImageParam::Fourier { w, h, .. } => (*w, *h),
        }
    }

    /// Pre-sigmoid planar image.
    pub fn logits(&self) -> Vec<f32> {
        match self {
            ImageParam::Naive { values, .. } => values.clone(),
            ImageParam::Fourier {
                w,
                h,
                spectrum,
                scale,
                fft,
            } => {
                let n = w * h;
                let mut out = Vec::with_capacity(3 * n);
                for c in 0..3 {
                    let mut plane: Vec<Complex64> = spectrum[c * n..(c + 1) * n]
                        .iter()
                        .zip(scale)
                        .map(|(z, s)| z * s)
                        .collect();
                    fft.inverse(&mut plane);
                    out.extend(plane.iter().map(|v| v.re as f32));
                }
                out
            }
        }
    }

    /// Image in `[0, 1]`.
    pub fn image(&self) -> Vec<f32> {
        self.logits().into_iter().map(sigmoid).collect()
    }

    /// Gradient with respect to the parameters given the gradient with
    /// respect to the pre-sigmoid image. Fourier gradients are returned as
    /// interleaved (re, im) pairs.
    pub fn backward(&self, grad_logits: &[f32]) -> Vec<f64> {
        match self {
            ImageParam::Naive { .. } => grad_logits.iter().map(|&g| g as f64).collect(),
            ImageParam::Fourier { w, h, scale, fft, .. } => {
                let n = w * h;
                let mut out = Vec::with_capacity(6 * n);
                for c in 0..3 {
                    let mut plane: Vec<Complex64> = grad_logits[c * n..(c + 1) * n]
                        .iter()
                        .map(|&g| Complex64::new(g as f64, 0.0))
                        .collect();
                    fft.forward(&mut plane);
                    for (z, s) in plane.iter().zip(scale) {
                        out.push(z.re * s);
                        out.push(z.im * s);
                    }
                }
                out
            }
        }
    }

    /// Adds `step * direction` (same layout as [`ImageParam::backward`]).
    pub fn update(&mut self, direction: &[f64], step: f64) {
        match self {
            ImageParam::Naive { values, .. } => {
                for (v, d) in values.iter_mut().zip(direction) {
                    *v += (step * d) as f32;
                }
            }
            ImageParam::Fourier { spectrum, .. } => {
                for (z, d) in spectrum.iter_mut().zip(direction.chunks_exact(2)) {
                    z.re += step * d[0];
                    z.im += step * d[1];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fft_round_trip() {
        let fft = Fft2::new(6, 10);
        let orig: Vec<Complex64> = (0..60).map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0)).collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dc_and_lowest_frequencies_are_unscaled() {
        let s = spectrum_scale(8, 8);
        assert_eq!(s[0], 1.0);
        assert_eq!(s[1], 1.0);
        assert!(s[4 * 8 + 4] < 0.2);
    }

    #[test]
    fn fourier_backward_is_adjoint() {
        let mut k = 0u32;
        let mut noise = || {
            k += 1;
            ((k as f32) * 1.7).sin()
        };
        let p = ImageParam::new(Parametrization::FourierBasis, 6, 5, 0.5, &mut noise);
        let g: Vec<f32> = (0..90).map(|i| ((i as f32) * 0.3).cos()).collect();
        let grad = p.backward(&g);
        // directional derivative along a random spectrum direction
        let dir: Vec<f64> = (0..180).map(|i| ((i as f64) * 0.11).sin()).collect();
        let h = 1e-3;
        let eval = |sign: f64| {
            let ImageParam::Fourier { w, h: hh, spectrum, scale, .. } = &p else { unreachable!() };
            let mut q = ImageParam::Fourier {
                w: *w,
                h: *hh,
                spectrum: spectrum.clone(),
                scale: scale.clone(),
                fft: Fft2::new(*hh, *w),
            };
            q.update(&dir, sign * h);
            q.logits().iter().zip(&g).map(|(x, gi)| *x as f64 * *gi as f64).sum::<f64>()
        };
        let fd = (eval(1.0) - eval(-1.0)) / (2.0 * h);
        let analytic: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        assert!((fd - analytic).abs() < 1e-3 * analytic.abs().max(1.0), "{fd} vs {analytic}");
    }
}
