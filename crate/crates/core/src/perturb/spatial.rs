//! k x k patch shuffling.
//!
//! Grid lines sit at `round(i * H / k)` and `round(j * W / k)` (halves round
//! up). The permutation is a Fisher-Yates shuffle driven by SplitMix64 seeded
//! with the raw seed: for `i` from `n - 1` down to `1`, draw `u = next_u64()`
//! and swap `perm[i]` with `perm[(u as u128 * (i + 1) as u128 >> 64) as usize]`.
//! Destination cell `d` (row-major) receives source cell `perm[d]`, resized
//! nearest-neighbor when the two cells differ in size.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::img::Image;

pub fn grid_lines(len: usize, k: usize) -> Vec<usize> {
    (0..=k).map(|i| (2 * i * len + k) / (2 * k)).collect()
}

pub fn shuffle_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        perm.swap(i, j);
    }
    perm
}

pub fn patch_shuffle(img: &Image, k: usize, seed: u64) -> Result<Image> {
    let (w, h) = (img.width(), img.height());
    if k == 0 || k > w.min(h) {
        return Err(Error::param(
            "spatial.patch_k",
            format!("must be in 1..={} for a {w}x{h} image", w.min(h)),
        ));
    }
    if k == 1 {
        return Ok(img.clone());
    }
    let rows = grid_lines(h, k);
    let cols = grid_lines(w, k);
    let perm = shuffle_permutation(k * k, seed);
    let plane = w * h;
    let mut out = img.clone();
    let src = img.data();
    let dst = out.data_mut();
    for (d, &s) in perm.iter().enumerate() {
        let (dr, dc) = (d / k, d % k);
        let (sr, sc) = (s / k, s % k);
        let (dy0, dh) = (rows[dr], rows[dr + 1] - rows[dr]);
        let (dx0, dw) = (cols[dc], cols[dc + 1] - cols[dc]);
        let (sy0, sh) = (rows[sr], rows[sr + 1] - rows[sr]);
        let (sx0, sw) = (cols[sc], cols[sc + 1] - cols[sc]);
        for y in 0..dh {
            let sy = sy0 + y * sh / dh;
            for x in 0..dw {
                let sx = sx0 + x * sw / dw;
                for c in 0..3 {
                    dst[c * plane + (dy0 + y) * w + dx0 + x] = src[c * plane + sy * w + sx];
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_lines_round_half_up() {
        assert_eq!(grid_lines(224, 2), vec![0, 112, 224]);
        assert_eq!(grid_lines(10, 4), vec![0, 3, 5, 8, 10]);
        assert_eq!(grid_lines(7, 3), vec![0, 2, 5, 7]);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = shuffle_permutation(49, 7);
        p.sort_unstable();
        assert_eq!(p, (0..49).collect::<Vec<_>>());
    }

    #[test]
    fn k_one_is_identity() {
        let img = Image::from_fn(5, 4, |x, y| [x as f32 / 4.0, y as f32 / 3.0, 0.0]);
        assert_eq!(patch_shuffle(&img, 1, 99).unwrap(), img);
    }

    #[test]
    fn k_out_of_range() {
        let img = Image::filled(5, 4, [0.0; 3]);
        assert!(patch_shuffle(&img, 5, 0).is_err());
        assert!(patch_shuffle(&img, 0, 0).is_err());
    }

    #[test]
    fn cells_move_as_blocks() {
        // each pixel encodes its own cell
        let img = Image::from_fn(4, 4, |x, y| [(x / 2) as f32, (y / 2) as f32, 0.0]);
        let out = patch_shuffle(&img, 2, 42).unwrap();
        let perm = shuffle_permutation(4, 42);
        for y in 0..4 {
            for x in 0..4 {
                let s = perm[(y / 2) * 2 + x / 2];
                assert_eq!(out.get(x, y), [(s % 2) as f32, (s / 2) as f32, 0.0]);
            }
        }
    }
}
