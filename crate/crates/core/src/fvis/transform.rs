//! Random affine warps (jitter, scale, rotation) with bilinear sampling and
//! the matching adjoint for backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    /// Maximum translation in output pixels, per axis.
    pub jitter: f32,
    pub scale_min: f32,
    pub scale_max: f32,
    /// Maximum rotation, degrees.
    pub rotation_deg: f32,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            jitter: 8.0,
            scale_min: 0.95,
            scale_max: 1.05,
            rotation_deg: 5.0,
        }
    }
}

impl TransformConfig {
    pub fn none() -> Self {
        Self {
            jitter: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            rotation_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter >= 0.0 && self.rotation_deg >= 0.0) {
            return Err(Error::param("transform", "jitter and rotation must be non-negative"));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max) {
            return Err(Error::param("transform.scale_min", "need 0 < scale_min <= scale_max"));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Affine {
        let mut uniform = |lo: f32, hi: f32| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        Affine {
            tx: uniform(-self.jitter, self.jitter),
            ty: uniform(-self.jitter, self.jitter),
            scale: uniform(self.scale_min, self.scale_max),
            rotation_deg: uniform(-self.rotation_deg, self.rotation_deg),
        }
    }
}

/// Output pixel `q` samples the source at
/// `R(-rot) (q - c_out - t) / scale * (src / out) + c_src`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub tx: f32,
    pub ty: f32,
    pub scale: f32,
    pub rotation_deg: f32,
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            tx: 0.0,
            ty: 0.0,
            scale: 1.0,
            rotation_deg: 0.0,
        }
    }
}

/// One tap of the bilinear stencil: source index and weight.
type Taps = [(usize, f32); 4];

/// Precomputed sampling stencil from a `src_w x src_h` plane to an
/// `out_w x out_h` plane, clamp-to-edge addressing.
#[derive(Clone, Debug)]
pub struct Warp {
    src_len: usize,
    out_len: usize,
    taps: Vec<Taps>,
}

impl Warp {
    pub fn new(a: &Affine, src: (usize, usize), out: (usize, usize)) -> Self {
        let (sw, sh) = src;
        let (ow, oh) = out;
        let (cos, sin) = {
            let r = (a.rotation_deg as f64).to_radians();
            (r.cos(), r.sin())
        };
        let (ocx, ocy) = ((ow as f64 - 1.0) / 2.0, (oh as f64 - 1.0) / 2.0);
        let (scx, scy) = ((sw as f64 - 1.0) / 2.0, (sh as f64 - 1.0) / 2.0);
        let (kx, ky) = (sw as f64 / ow as f64 / a.scale as f64, sh as f64 / oh as f64 / a.scale as f64);
        let mut taps = Vec::with_capacity(ow * oh);
        for y in 0..oh {
            for x in 0..ow {
                let dx = x as f64 - ocx - a.tx as f64;
                let dy = y as f64 - ocy - a.ty as f64;
                let rx = cos * dx + sin * dy;
                let ry = -sin * dx + cos * dy;
                let fx = (rx * kx + scx).clamp(0.0, (sw - 1) as f64);
                let fy = (ry * ky + scy).clamp(0.0, (sh - 1) as f64);
                let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
                let (tx, ty) = ((fx - x0 as f64) as f32, (fy - y0 as f64) as f32);
                taps.push([
                    (y0 * sw + x0, (1.0 - tx) * (1.0 - ty)),
                    (y0 * sw + x1, tx * (1.0 - ty)),
                    (y1 * sw + x0, (1.0 - tx) * ty),
                    (y1 * sw + x1, tx * ty),
                ]);
            }
        }
        Self {
            src_len: sw * sh,
            out_len: ow * oh,
            taps,
        }
    }

    /// Warps each of `planes` consecutive planes.
    pub fn apply(&self, src: &[f32], planes: usize) -> Vec<f32> {
        let mut out = vec![0.0; planes * self.out_len];
        for p in 0..planes {
            let s = &src[p * self.src_len..(p + 1) * self.src_len];
            for (o, taps) in out[p * self.out_len..(p + 1) * self.out_len].iter_mut().zip(&self.taps) {
                *o = taps.iter().map(|&(i, w)| s[i] * w).sum();
            }
        }
        out
    }

    /// Transpose of [`Warp::apply`]: scatters output gradients to the source.
    pub fn adjoint(&self, grad_out: &[f32], planes: usize) -> Vec<f32> {
        let mut g = vec![0.0; planes * self.src_len];
        for p in 0..planes {
            let gs = &mut g[p * self.src_len..(p + 1) * self.src_len];
            for (&go, taps) in grad_out[p * self.out_len..(p + 1) * self.out_len].iter().zip(&self.taps) {
                for &(i, w) in taps {
                    gs[i] += go * w;
                }
            }
        }
        g
    }
}
