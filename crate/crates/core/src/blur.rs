//! Separable Gaussian filtering with clamp-to-edge borders.

use crate::img::Image;

/// Normalized 1D Gaussian taps truncated at `ceil(3 * sigma)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / s2).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

fn blur_plane(src: &[f32], width: usize, height: usize, kernel: &[f32], dst: &mut [f32]) {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0f32; src.len()];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0f64;
            for (k, &wk) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, width as isize - 1) as usize;
                acc += wk as f64 * row[sx] as f64;
            }
            tmp[y * width + x] = acc as f32;
        }
    }
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0f64;
            for (k, &wk) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - r).clamp(0, height as isize - 1) as usize;
                acc += wk as f64 * tmp[sy * width + x] as f64;
            }
            dst[y * width + x] = acc as f32;
        }
    }
}

/// Gaussian blur of every channel; `sigma <= 0` returns the input unchanged.
pub fn gaussian_blur(img: &Image, sigma: f32) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let (w, h) = (img.width(), img.height());
    let mut out = img.clone();
    for c in 0..3 {
        blur_plane(img.plane(c), w, h, &kernel, out.plane_mut(c));
    }
    out
}
