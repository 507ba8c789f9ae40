//! Independent f64 reference implementations used as test oracles: plain
//! nested-loop kernels, a whole-network interpreter working straight from a
//! manifest, and a reimplementation of the shuffle PRNG.

#![allow(dead_code)]

pub mod checks;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenescope::model::Manifest;
use scenescope::{OpSpec, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

pub fn to_f64(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// `|a - b| / max(|a|, |b|, 1e-6)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Dense f64 array with a shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Arr {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Arr {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn of(t: &Tensor) -> Self {
        Self::new(t.shape().to_vec(), to_f64(t))
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape[1] + y) * self.shape[2] + x]
    }
}

/// Records branch decisions (ReLU signs, pool argmaxes) so callers can tell
/// whether two evaluations lie in the same linear region.
#[derive(Default, Debug, PartialEq, Eq, Clone)]
pub struct Pattern(pub Vec<u32>);

pub fn conv(x: &Arr, w: &[f64], b: &[f64], cout: usize, k: usize, stride: usize, pad: usize) -> Arr {
    let (cin, h, wd) = (x.shape[0], x.shape[1], x.shape[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[co];
                for ci in 0..cin {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                continue;
                            }
                            acc += w[((co * cin + ci) * k + ky) * k + kx] * x.at(ci, iy as usize, ix as usize);
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Arr::new(vec![cout, oh, ow], out)
}

pub fn relu(x: &Arr, pat: &mut Pattern) -> Arr {
    pat.0.extend(x.data.iter().map(|&v| (v > 0.0) as u32));
    Arr::new(x.shape.clone(), x.data.iter().map(|&v| v.max(0.0)).collect())
}

/// Pooling windows over in-bounds taps. Max keeps the first maximum.
pub fn pool(x: &Arr, k: usize, stride: usize, pad: usize, max: bool, pat: &mut Pattern) -> Arr {
    let (c, h, w) = (x.shape[0], x.shape[1], x.shape[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut taps = Vec::new();
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize {
                            taps.push(x.at(ch, iy as usize, ix as usize));
                        }
                    }
                }
                if max {
                    let mut best = 0;
                    for (i, &v) in taps.iter().enumerate() {
                        if v > taps[best] {
                            best = i;
                        }
                    }
                    pat.0.push(best as u32);
                    out.push(taps[best]);
                } else {
                    out.push(taps.iter().sum::<f64>() / taps.len() as f64);
                }
            }
        }
    }
    Arr::new(vec![c, oh, ow], out)
}

pub fn dense(x: &Arr, w: &[f64], b: &[f64]) -> Arr {
    let n = x.data.len();
    let out: Vec<f64> = b
        .iter()
        .enumerate()
        .map(|(o, &bias)| bias + (0..n).map(|i| w[o * n + i] * x.data[i]).sum::<f64>())
        .collect();
    Arr::new(vec![b.len()], out)
}

pub fn concat(xs: &[&Arr]) -> Arr {
    let mut shape = xs[0].shape.clone();
    shape[0] = xs.iter().map(|x| x.shape[0]).sum();
    Arr::new(shape, xs.iter().flat_map(|x| x.data.iter().copied()).collect())
}

pub fn global_avg(x: &Arr) -> Arr {
    let plane = x.shape[1] * x.shape[2];
    Arr::new(
        vec![x.shape[0]],
        x.data.chunks(plane).map(|p| p.iter().sum::<f64>() / plane as f64).collect(),
    )
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Whole-network f64 interpreter built from a manifest and raw weight blobs.
pub struct Oracle {
    pub manifest: Manifest,
    pub blobs: HashMap<String, Vec<f64>>,
}

impl Oracle {
    pub fn new(manifest: &Manifest, blobs: &HashMap<String, Vec<f32>>) -> Self {
        Self {
            manifest: manifest.clone(),
            blobs: blobs
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|&x| x as f64).collect()))
                .collect(),
        }
    }

    /// Every node output for an un-normalized `[3, H, W]` image.
    pub fn run(&self, image: &[f64]) -> (HashMap<String, Arr>, Pattern) {
        let m = &self.manifest;
        let plane = m.input_shape[1] * m.input_shape[2];
        let norm: Vec<f64> = image
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i / plane;
                (v - m.normalization.mean[c] as f64) / m.normalization.std[c] as f64
            })
            .collect();
        let mut values: HashMap<String, Arr> = HashMap::new();
        values.insert("input".into(), Arr::new(m.input_shape.clone(), norm));
        let mut pat = Pattern::default();
        let mut pending: Vec<_> = m.nodes.iter().collect();
        while !pending.is_empty() {
            let ready = pending
                .iter()
                .position(|n| n.inputs.iter().all(|i| values.contains_key(i)))
                .expect("oracle: graph has unresolved inputs");
            let node = pending.remove(ready);
            let args: Vec<&Arr> = node.inputs.iter().map(|i| &values[i]).collect();
            let params = || {
                let blob = &self.blobs[&node.id];
                let (ws, _) = node.op.param_shapes().expect("weighted op");
                let wl: usize = ws.iter().product();
                (&blob[..wl], &blob[wl..])
            };
            let out = match node.op {
                OpSpec::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let (w, b) = params();
                    conv(args[0], w, b, out_channels, kernel, stride, padding)
                }
                OpSpec::Relu => relu(args[0], &mut pat),
                OpSpec::MaxPool2d { kernel, stride, padding } => pool(args[0], kernel, stride, padding, true, &mut pat),
                OpSpec::AvgPool2d { kernel, stride, padding } => pool(args[0], kernel, stride, padding, false, &mut pat),
                OpSpec::Dense { .. } => {
                    let (w, b) = params();
                    dense(args[0], w, b)
                }
                OpSpec::Concat { .. } => concat(&args),
                OpSpec::Softmax => Arr::new(args[0].shape.clone(), softmax(&args[0].data)),
                OpSpec::Add => Arr::new(
                    args[0].shape.clone(),
                    args[0].data.iter().zip(&args[1].data).map(|(a, b)| a + b).collect(),
                ),
                OpSpec::GlobalAvgPool => global_avg(args[0]),
            };
            values.insert(node.id.clone(), out);
        }
        (values, pat)
    }

    pub fn logits(&self, image: &[f64]) -> Vec<f64> {
        self.run(image).0.remove(&self.manifest.output).expect("output").data
    }
}

/// Scalar objectives mirrored on the oracle side.
#[derive(Clone, Debug)]
pub enum Goal {
    Logit(usize),
    NegLogit(usize),
    Mean(String, usize),
}

impl Goal {
    pub fn objective(&self) -> scenescope::Objective {
        match self {
            Goal::Logit(c) => scenescope::Objective::Logit { class: *c },
            Goal::NegLogit(c) => scenescope::Objective::NegLogit { class: *c },
            Goal::Mean(n, c) => scenescope::Objective::MeanActivation {
                node: n.clone(),
                channel: *c,
            },
        }
    }

    pub fn eval(&self, oracle: &Oracle, image: &[f64]) -> (f64, Pattern) {
        let (values, pat) = oracle.run(image);
        let v = match self {
            Goal::Logit(c) => values[&oracle.manifest.output].data[*c],
            Goal::NegLogit(c) => -values[&oracle.manifest.output].data[*c],
            Goal::Mean(n, c) => {
                let a = &values[n];
                let plane = a.shape[1] * a.shape[2];
                a.data[c * plane..(c + 1) * plane].iter().sum::<f64>() / plane as f64
            }
        };
        (v, pat)
    }
}

/// Central difference of `goal` along pixel `index`, or `None` when the
/// three evaluations do not share one linear region (a kink lies inside).
pub fn central_difference(oracle: &Oracle, goal: &Goal, image: &[f64], index: usize, h: f64) -> Option<f64> {
    let mut plus = image.to_vec();
    plus[index] += h;
    let mut minus = image.to_vec();
    minus[index] -= h;
    let (_, p0) = goal.eval(oracle, image);
    let (fp, pp) = goal.eval(oracle, &plus);
    let (fm, pm) = goal.eval(oracle, &minus);
    (p0 == pp && p0 == pm).then(|| (fp - fm) / (2.0 * h))
}

/// SplitMix64 written out from its published constants.
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
}

/// Fisher-Yates from the top, index `floor(u * (i + 1) / 2^64)`.
pub fn reference_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut r = SplitMix::new(seed);
    let mut p: Vec<usize> = (0..n).collect();
    let mut i = n;
    while i > 1 {
        i -= 1;
        let u = r.next();
        let j = ((u as u128 * (i as u128 + 1)) >> 64) as usize;
        p.swap(i, j);
    }
    p
}

/// Direct 2D Gaussian convolution with clamp-to-edge addressing and a
/// kernel truncated at `radius`, normalized over the full square window.
pub fn gaussian_2d(plane: &[f64], w: usize, h: usize, sigma: f64, radius: isize) -> Vec<f64> {
    let mut k = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            k.push((dx, dy, (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = k.iter().map(|t| t.2).sum();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for &(dx, dy, kv) in &k {
                let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                acc += kv * plane[sy * w + sx];
            }
            out[y * w + x] = acc / total;
        }
    }
    out
}

/// A smooth test image with edges: gradients, a disc and stripes.
pub fn natural_image(w: usize, h: usize) -> scenescope::Image {
    scenescope::Image::from_fn(w, h, |x, y| {
        let (u, v) = (x as f32 / w as f32, y as f32 / h as f32);
        let disc = (((u - 0.4).powi(2) + (v - 0.55).powi(2)).sqrt() < 0.25) as u8 as f32;
        let stripe = ((x / 6) % 2) as f32;
        [
            0.2 + 0.6 * u * (1.0 - 0.5 * disc),
            0.3 + 0.4 * disc + 0.2 * v,
            0.15 + 0.5 * stripe * v,
        ]
    })
}

/// A random fixture scene: mesh, camera, background and a few sliders.
pub fn random_scene(r: &mut impl Rng) -> scenescope::SceneState {
    use scenescope::scene::Background;
    let mut s = scenescope::SceneState::default();
    s.mesh = ["orb", "pod"][r.random_range(0..2)].into();
    s.camera.yaw = r.random_range(-180.0..180.0);
    s.camera.pitch = r.random_range(-20.0..40.0);
    s.camera.distance = r.random_range(2.8..5.0);
    s.scene.background = match r.random_range(0..4) {
        0 => Background::Color([r.random(), r.random(), r.random()]),
        1 => Background::Asset("meadow".into()),
        2 => Background::Asset("studio".into()),
        _ => Background::Asset("brick".into()),
    };
    s.scene.texture_influence = r.random_range(0.0..=1.0);
    s.shape.shape_morph = r.random_range(0.0..=1.0);
    s.color.hue_shift = r.random_range(0.0..360.0);
    s
}

/// The fixture engine at the default 224x224 resolution.
pub fn engine() -> scenescope::engine::Engine {
    scenescope::engine::Engine::new(
        std::sync::Arc::new(scenescope::fixtures::asset_library()),
        scenescope::scene::RenderConfig::default(),
    )
}

/// Render plus the stages before the attack overlay.
pub fn attack_input(engine: &scenescope::engine::Engine, s: &scenescope::SceneState) -> scenescope::Image {
    scenescope::perturb::apply_pre_attack(&engine.render(s).unwrap(), s).unwrap()
}
