//! Z-buffered triangle rasterizer with an orbit camera, Lambert shading and
//! background compositing.

use super::assets::AssetLibrary;
use super::mesh::{morph_vertices, Mesh};
use super::state::{Background, CameraParams, SceneState};
use super::texture::MipPyramid;
use crate::blur::gaussian_blur;
use crate::error::Result;
use crate::img::{Image, LUMA};

type V3 = [f32; 3];

const NEAR: f32 = 0.05;

/// Light direction in camera coordinates (x right, y up, z forward), pointing
/// from the surface toward the light.
const LIGHT_FROM_CAMERA: V3 = [-0.45, 0.6, -0.66];

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Background blur radius in pixels at `background_blur = 1`.
    pub max_background_blur: f32,
    /// Vertical field of view in degrees.
    pub fov_deg: f32,
    /// 2x2 supersampling of the foreground.
    pub supersample: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 224,
            height: 224,
            max_background_blur: 12.0,
            fov_deg: 40.0,
            supersample: false,
        }
    }
}

impl RenderConfig {
    pub fn with_size(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ..Self::default()
        }
    }
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: V3, b: V3) -> f32 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: V3) -> V3 {
    let n = dot(a, a).sqrt();
    if n > 0.0 {
        a.map(|v| v / n)
    } else {
        a
    }
}

fn axpy(s: f32, x: V3, y: V3) -> V3 {
    [s * x[0] + y[0], s * x[1] + y[1], s * x[2] + y[2]]
}

/// Camera frame: eye position plus right/up/forward unit vectors.
#[derive(Clone, Copy, Debug)]
pub struct CameraFrame {
    pub eye: V3,
    pub right: V3,
    pub up: V3,
    pub forward: V3,
}

impl CameraFrame {
    /// Orbit camera looking at the origin. Angles are reduced modulo 360
    /// degrees first so periodic inputs give identical frames.
    pub fn orbit(c: &CameraParams) -> Self {
        let yaw = c.yaw.rem_euclid(360.0).to_radians();
        let pitch = c.pitch.to_radians();
        let roll = c.roll.rem_euclid(360.0).to_radians();
        let eye = [
            c.distance * pitch.cos() * yaw.sin(),
            c.distance * pitch.sin(),
            c.distance * pitch.cos() * yaw.cos(),
        ];
        let forward = normalize(sub([0.0; 3], eye));
        let right = normalize(cross(forward, [0.0, 1.0, 0.0]));
        let up = cross(right, forward);
        let (s, co) = roll.sin_cos();
        let right_r = axpy(s, up, right.map(|v| v * co));
        let up_r = axpy(-s, right, up.map(|v| v * co));
        let eye = axpy(c.pan_y, up_r, axpy(c.pan_x, right_r, eye));
        Self {
            eye,
            right: right_r,
            up: up_r,
            forward,
        }
    }

    pub fn to_camera(&self, p: V3) -> V3 {
        let d = sub(p, self.eye);
        [dot(d, self.right), dot(d, self.up), dot(d, self.forward)]
    }

    fn light_world(&self) -> V3 {
        let [lx, ly, lz] = LIGHT_FROM_CAMERA;
        normalize(axpy(lz, self.forward, axpy(ly, self.up, self.right.map(|v| v * lx))))
    }
}

/// `albedo = mix(base, texture, texture_influence)`,
/// `out = albedo * mix(1, lambert, lighting_influence)`.
pub fn shade_fragment(
    base_color: [f32; 3],
    texture_sample: [f32; 3],
    lambert: f32,
    lighting_influence: f32,
    texture_influence: f32,
) -> [f32; 3] {
    let shading = 1.0 * (1.0 - lighting_influence) + lambert * lighting_influence;
    std::array::from_fn(|k| {
        let albedo = base_color[k] * (1.0 - texture_influence) + texture_sample[k] * texture_influence;
        albedo * shading
    })
}

/// Trilinear texture lookup at mip level `texture_blur * (levels - 1)`.
pub fn texture_blur_sample(pyramid: &MipPyramid, uv: [f32; 2], texture_blur: f32) -> [f32; 3] {
    pyramid.sample(uv, texture_blur)
}

/// Blur and desaturate `background`, then composite the foreground over it
/// using fractional `coverage` (premultiplied foreground).
pub fn composite_background(
    foreground: &Image,
    coverage: &[f32],
    background: &Image,
    background_blur: f32,
    background_saturation: f32,
    max_blur: f32,
) -> Image {
    let processed = process_background(background, background_blur, background_saturation, max_blur);
    composite(foreground, coverage, &processed)
}

/// Gaussian blur with sigma `blur * max_blur / 3` (so the 3-sigma support is
/// the blur radius) followed by linear desaturation toward BT.601 luma.
pub fn process_background(background: &Image, blur: f32, saturation: f32, max_blur: f32) -> Image {
    let mut bg = if blur > 0.0 {
        gaussian_blur(background, blur * max_blur / 3.0)
    } else {
        background.clone()
    };
    if saturation < 1.0 {
        desaturate_in_place(&mut bg, saturation);
    }
    bg
}

pub(crate) fn desaturate_in_place(img: &mut Image, saturation: f32) {
    let n = img.width() * img.height();
    let data = img.data_mut();
    for i in 0..n {
        let rgb = [data[i], data[n + i], data[2 * n + i]];
        let luma = LUMA[0] * rgb[0] + LUMA[1] * rgb[1] + LUMA[2] * rgb[2];
        for k in 0..3 {
            data[k * n + i] = luma + (rgb[k] - luma) * saturation;
        }
    }
}

fn composite(foreground: &Image, coverage: &[f32], background: &Image) -> Image {
    let n = background.width() * background.height();
    let mut out = background.clone();
    let data = out.data_mut();
    for (i, &cov) in coverage.iter().enumerate() {
        if cov <= 0.0 {
            continue;
        }
        for k in 0..3 {
            let fg = foreground.data()[k * n + i];
            data[k * n + i] = if cov >= 1.0 { fg } else { fg + (1.0 - cov) * data[k * n + i] };
        }
    }
    out.clamp01()
}

fn vertex_normals(positions: &[V3], indices: &[[u32; 3]]) -> Vec<V3> {
    let mut normals = vec![[0f32; 3]; positions.len()];
    for tri in indices {
        let [a, b, c] = tri.map(|i| positions[i as usize]);
        let n = cross(sub(b, a), sub(c, a));
        for &i in tri {
            let acc = &mut normals[i as usize];
            for k in 0..3 {
                acc[k] += n[k];
            }
        }
    }
    normals.into_iter().map(normalize).collect()
}

struct Target {
    width: usize,
    height: usize,
    color: Vec<[f32; 3]>,
    depth: Vec<f32>,
}

/// Rasterizes the morphed, shaded mesh. Returns premultiplied foreground and
/// coverage at the output resolution.
fn rasterize(scene: &SceneState, mesh: &Mesh, config: &RenderConfig) -> (Image, Vec<f32>) {
    let ss = if config.supersample { 2 } else { 1 };
    let (w, h) = (config.width * ss, config.height * ss);
    let cam = CameraFrame::orbit(&scene.camera);
    let light = cam.light_world();
    let focal = (h as f32 / 2.0) / (config.fov_deg.to_radians() / 2.0).tan();
    let (cx, cy) = (w as f32 / 2.0, h as f32 / 2.0);

    let positions = morph_vertices(mesh, scene.shape.shape_morph);
    let normals = vertex_normals(&positions, &mesh.indices);
    let pyramid = mesh
        .texture
        .as_ref()
        .map(|t| MipPyramid::blended(t, mesh.target_texture.as_ref(), scene.shape.texture_morph));
    let cam_pos: Vec<V3> = positions.iter().map(|&p| cam.to_camera(p)).collect();
    let screen: Vec<[f32; 2]> = cam_pos
        .iter()
        .map(|p| [cx + focal * p[0] / p[2], cy - focal * p[1] / p[2]])
        .collect();

    let mut target = Target {
        width: w,
        height: h,
        color: vec![[0.0; 3]; w * h],
        depth: vec![f32::INFINITY; w * h],
    };
    let params = &scene.scene;

    for tri in &mesh.indices {
        let [i0, i1, i2] = tri.map(|i| i as usize);
        let z = [cam_pos[i0][2], cam_pos[i1][2], cam_pos[i2][2]];
        if z.iter().any(|&zi| zi < NEAR) {
            continue;
        }
        let s = [screen[i0], screen[i1], screen[i2]];
        let area = edge(s[0], s[1], s[2]);
        if area.abs() < 1e-9 {
            continue;
        }
        let sign = area.signum();
        let min_x = s.iter().map(|p| p[0]).fold(f32::INFINITY, f32::min).floor().max(0.0) as usize;
        let min_y = s.iter().map(|p| p[1]).fold(f32::INFINITY, f32::min).floor().max(0.0) as usize;
        let max_x = s.iter().map(|p| p[0]).fold(f32::NEG_INFINITY, f32::max).ceil();
        let max_y = s.iter().map(|p| p[1]).fold(f32::NEG_INFINITY, f32::max).ceil();
        if max_x < 0.0 || max_y < 0.0 {
            continue;
        }
        let max_x = (max_x as usize).min(w - 1);
        let max_y = (max_y as usize).min(h - 1);
        let inv_z = z.map(|zi| 1.0 / zi);
        for py in min_y..=max_y {
            for px in min_x..=max_x {
                let p = [px as f32 + 0.5, py as f32 + 0.5];
                let b = [
                    edge(s[1], s[2], p) * sign,
                    edge(s[2], s[0], p) * sign,
                    edge(s[0], s[1], p) * sign,
                ];
                if b[0] < 0.0 || b[1] < 0.0 || b[2] < 0.0 {
                    continue;
                }
                let total = b[0] + b[1] + b[2];
                let b = b.map(|v| v / total);
                let iz = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
                let depth = 1.0 / iz;
                let slot = py * w + px;
                if depth >= target.depth[slot] {
                    continue;
                }
                target.depth[slot] = depth;
                let pw = [b[0] * inv_z[0] * depth, b[1] * inv_z[1] * depth, b[2] * inv_z[2] * depth];
                let uv = [
                    pw[0] * mesh.uvs[i0][0] + pw[1] * mesh.uvs[i1][0] + pw[2] * mesh.uvs[i2][0],
                    pw[0] * mesh.uvs[i0][1] + pw[1] * mesh.uvs[i1][1] + pw[2] * mesh.uvs[i2][1],
                ];
                let n = normalize(axpy(pw[2], normals[i2], axpy(pw[1], normals[i1], normals[i0].map(|v| v * pw[0]))));
                let lambert = dot(n, light).max(0.0);
                let tex = match &pyramid {
                    Some(p) => texture_blur_sample(p, uv, params.texture_blur),
                    None => mesh.base_color,
                };
                target.color[slot] = shade_fragment(
                    mesh.base_color,
                    tex,
                    lambert,
                    params.lighting_influence,
                    params.texture_influence,
                );
            }
        }
    }
    resolve(&target, ss, config)
}

fn edge(a: [f32; 2], b: [f32; 2], p: [f32; 2]) -> f32 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn resolve(target: &Target, ss: usize, config: &RenderConfig) -> (Image, Vec<f32>) {
    let (w, h) = (config.width, config.height);
    let mut coverage = vec![0f32; w * h];
    let mut fg = Image::filled(w, h, [0.0; 3]);
    let inv = 1.0 / (ss * ss) as f32;
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            let mut count = 0usize;
            for sy in 0..ss {
                for sx in 0..ss {
                    let i = (y * ss + sy) * target.width + x * ss + sx;
                    if target.depth[i].is_finite() {
                        count += 1;
                        for k in 0..3 {
                            acc[k] += target.color[i][k];
                        }
                    }
                }
            }
            if count > 0 {
                coverage[y * w + x] = if ss == 1 { 1.0 } else { count as f32 * inv };
                let color = if ss == 1 { acc } else { acc.map(|v| v * inv) };
                fg.set(x, y, color);
            }
        }
    }
    debug_assert_eq!(target.height, h * ss);
    (fg, coverage)
}

/// Background image at the output resolution, before blur/desaturation.
fn resolve_background(scene: &SceneState, assets: &AssetLibrary, config: &RenderConfig) -> Result<(Image, bool)> {
    Ok(match &scene.scene.background {
        Background::Color(rgb) => (Image::filled(config.width, config.height, *rgb), true),
        Background::Asset(id) => {
            let img = assets.background(id)?;
            (img.resize_bilinear(config.width, config.height), false)
        }
    })
}

/// Renders the scene: morph, camera transform, z-buffered rasterization,
/// shading, then compositing over the processed background. Post-processing
/// perturbations are applied separately.
pub fn render_frame(scene: &SceneState, mesh: &Mesh, assets: &AssetLibrary, config: &RenderConfig) -> Result<Image> {
    let (bg, flat) = resolve_background(scene, assets, config)?;
    let (fg, coverage) = rasterize(scene, mesh, config);
    // a constant image is a fixed point of the blur; skipping keeps it exact
    let blur = if flat { 0.0 } else { scene.scene.background_blur };
    Ok(composite_background(
        &fg,
        &coverage,
        &bg,
        blur,
        scene.scene.background_saturation,
        config.max_background_blur,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shading_neutral_cases() {
        let base = [0.2, 0.4, 0.6];
        let tex = [0.9, 0.1, 0.3];
        assert_eq!(shade_fragment(base, tex, 0.37, 0.0, 1.0), tex);
        assert_eq!(shade_fragment(base, tex, 0.37, 1.0, 0.0), base.map(|v| v * 0.37));
        assert_eq!(shade_fragment(base, [0.5; 3], 0.8, 0.5, 0.0), shade_fragment(base, [0.0; 3], 0.8, 0.5, 0.0));
        assert_eq!(shade_fragment(base, tex, 1.0, 1.0, 1.0), tex);
    }

    #[test]
    fn camera_frame_is_orthonormal() {
        let cam = CameraFrame::orbit(&CameraParams {
            yaw: 33.0,
            pitch: -20.0,
            distance: 4.0,
            pan_x: 0.3,
            pan_y: -0.2,
            roll: 15.0,
        });
        for (a, b) in [(cam.right, cam.up), (cam.up, cam.forward), (cam.right, cam.forward)] {
            assert!(dot(a, b).abs() < 1e-5);
        }
        for v in [cam.right, cam.up, cam.forward] {
            assert!((dot(v, v) - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn neutral_background_processing_is_identity() {
        let bg = Image::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        assert_eq!(process_background(&bg, 0.0, 1.0, 12.0), bg);
    }

    #[test]
    fn zero_saturation_background_is_gray() {
        let bg = Image::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        let out = process_background(&bg, 0.0, 0.0, 12.0);
        for y in 0..8 {
            for x in 0..8 {
                let [r, g, b] = out.get(x, y);
                assert!((r - g).abs() < 1e-6 && (g - b).abs() < 1e-6);
            }
        }
    }
}
