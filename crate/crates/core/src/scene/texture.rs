//! Box-filtered mip pyramids and trilinear sampling with wrap addressing.

use crate::img::Image;

#[derive(Clone, Debug)]
pub struct MipPyramid {
    levels: Vec<Image>,
}

impl MipPyramid {
    /// Halves each dimension per level (2x2 box average) down to 1x1.
    /// Odd dimensions drop their last row/column at the next level.
    pub fn build(base: &Image) -> Self {
        let mut levels = vec![base.clone()];
        loop {
            let prev = levels.last().expect("at least one level");
            if prev.width() == 1 && prev.height() == 1 {
                break;
            }
            let (w, h) = ((prev.width() / 2).max(1), (prev.height() / 2).max(1));
            let next = Image::from_fn(w, h, |x, y| {
                let xs = [(2 * x).min(prev.width() - 1), (2 * x + 1).min(prev.width() - 1)];
                let ys = [(2 * y).min(prev.height() - 1), (2 * y + 1).min(prev.height() - 1)];
                let mut acc = [0f32; 3];
                for &sy in &ys {
                    for &sx in &xs {
                        let p = prev.get(sx, sy);
                        for k in 0..3 {
                            acc[k] += p[k];
                        }
                    }
                }
                acc.map(|v| v * 0.25)
            });
            levels.push(next);
        }
        Self { levels }
    }

    /// Per-texel blend of two equally sized textures, then a pyramid.
    pub fn blended(base: &Image, target: Option<&Image>, t: f32) -> Self {
        match target {
            Some(target) if t > 0.0 => {
                if t >= 1.0 {
                    return Self::build(target);
                }
                let data = base
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(&a, &b)| (1.0 - t) * a + t * b)
                    .collect();
                let mixed = Image::new(base.width(), base.height(), data).expect("same-sized textures");
                Self::build(&mixed)
            }
            _ => Self::build(base),
        }
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, i: usize) -> &Image {
        &self.levels[i]
    }

    /// Bilinear sample of one level. `v = 1` is the top row.
    pub fn sample_level(&self, level: usize, uv: [f32; 2]) -> [f32; 3] {
        let img = &self.levels[level];
        let (w, h) = (img.width() as f32, img.height() as f32);
        let fx = uv[0] * w - 0.5;
        let fy = (1.0 - uv[1]) * h - 0.5;
        let (x0f, y0f) = (fx.floor(), fy.floor());
        let (tx, ty) = (fx - x0f, fy - y0f);
        let wrap = |v: f32, n: usize| (v as i64).rem_euclid(n as i64) as usize;
        let (x0, y0) = (wrap(x0f, img.width()), wrap(y0f, img.height()));
        let (x1, y1) = ((x0 + 1) % img.width(), (y0 + 1) % img.height());
        let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
        std::array::from_fn(|k| {
            let top = a[k] + (b[k] - a[k]) * tx;
            let bottom = c[k] + (d[k] - c[k]) * tx;
            top + (bottom - top) * ty
        })
    }

    /// Trilinear sample at `blur * (level_count - 1)`.
    pub fn sample(&self, uv: [f32; 2], blur: f32) -> [f32; 3] {
        let top = (self.levels.len() - 1) as f32;
        let level = (blur.clamp(0.0, 1.0) * top).min(top);
        let l0 = level.floor() as usize;
        let t = level - l0 as f32;
        let a = self.sample_level(l0, uv);
        if t == 0.0 {
            return a;
        }
        let b = self.sample_level((l0 + 1).min(self.levels.len() - 1), uv);
        std::array::from_fn(|k| a[k] * (1.0 - t) + b[k] * t)
    }
}
