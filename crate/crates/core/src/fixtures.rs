//! Small deterministic models, meshes and backgrounds used by the tests, the
//! benchmarks and `scenescope fixtures`.
//!
//! `tinynet` takes a 3x224x224 image:
//!
//! ```text
//! conv1 3->8 k3 s2 p1, relu1, pool1 (max 2)      -> 8x56x56
//! conv2 8->16 k3 p1, relu2, pool2 (max 2)        -> 16x28x28
//! mixed_1x1 16->8 k1 | mixed_3x3 16->8 k3 p1, relu, concat "mixed" -> 16x28x28
//! pool3 (max 2), gap, fc 16->12                  -> 12 logits
//! ```
//!
//! Channel 0 of `conv1` is a Sobel filter on luminance that responds to
//! horizontal intensity changes.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::blur::gaussian_blur;
use crate::error::{Error, Result};
use crate::fvis::{asset_id, Parametrization};
use crate::img::Image;
use crate::model::{save_model, Manifest, ModelGraph, NeuronGroup, NeuronGroupCatalog, NodeSpec, Normalization};
use crate::scene::assets::{AssetManifest, BackgroundEntry, MeshEntry, ASSET_MANIFEST};
use crate::scene::mesh::{uv_sphere, write_obj};
use crate::scene::{AssetLibrary, Mesh};
use crate::tensor::OpSpec;

pub const STANDARD_ID: &str = "tinynet-std";
pub const ADVERSARIAL_ID: &str = "tinynet-adv";
pub const LINEAR_ID: &str = "linear";
pub const ZERO_ID: &str = "tinynet-zero";
pub const CHECKPOINT: &str = "final";

pub const LABELS: [&str; 12] = [
    "sphere", "cube", "ellipsoid", "urchin", "checker", "stripes", "spots", "zebra", "meadow", "studio", "brick",
    "blank",
];

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

pub const SOBEL_X: [f32; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];

/// A manifest with in-memory weights.
#[derive(Clone, Debug)]
pub struct ModelParts {
    pub manifest: Manifest,
    pub blobs: HashMap<String, Vec<f32>>,
}

impl ModelParts {
    pub fn build(&self) -> Result<ModelGraph> {
        ModelGraph::from_parts(self.manifest.clone(), self.blobs.clone())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_model(dir, &self.manifest, &self.blobs)
    }
}

fn node(id: &str, op: OpSpec, inputs: &[&str]) -> NodeSpec {
    let blob = op.param_shapes().map(|_| format!("{id}.bin"));
    NodeSpec {
        id: id.into(),
        op,
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        blob,
    }
}

fn conv(i: usize, o: usize, k: usize, s: usize, p: usize) -> OpSpec {
    OpSpec::Conv2d {
        in_channels: i,
        out_channels: o,
        kernel: k,
        stride: s,
        padding: p,
    }
}

fn pool2() -> OpSpec {
    OpSpec::MaxPool2d {
        kernel: 2,
        stride: 2,
        padding: 0,
    }
}

fn tinynet_manifest(model_id: &str) -> Manifest {
    let nodes = vec![
        node("conv1", conv(3, 8, 3, 2, 1), &["input"]),
        node("relu1", OpSpec::Relu, &["conv1"]),
        node("pool1", pool2(), &["relu1"]),
        node("conv2", conv(8, 16, 3, 1, 1), &["pool1"]),
        node("relu2", OpSpec::Relu, &["conv2"]),
        node("pool2", pool2(), &["relu2"]),
        node("mixed_1x1", conv(16, 8, 1, 1, 0), &["pool2"]),
        node("mixed_1x1_relu", OpSpec::Relu, &["mixed_1x1"]),
        node("mixed_3x3", conv(16, 8, 3, 1, 1), &["pool2"]),
        node("mixed_3x3_relu", OpSpec::Relu, &["mixed_3x3"]),
        node("mixed", OpSpec::Concat { axis: 0 }, &["mixed_1x1_relu", "mixed_3x3_relu"]),
        node("pool3", pool2(), &["mixed"]),
        node("gap", OpSpec::GlobalAvgPool, &["pool3"]),
        node(
            "fc",
            OpSpec::Dense {
                in_features: 16,
                out_features: LABELS.len(),
            },
            &["gap"],
        ),
    ];
    Manifest {
        model_id: model_id.into(),
        checkpoint: CHECKPOINT.into(),
        input_shape: vec![3, 224, 224],
        normalization: Normalization {
            mean: IMAGENET_MEAN.to_vec(),
            std: IMAGENET_STD.to_vec(),
        },
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
        nodes,
        output: "fc".into(),
        capture_nodes: vec!["relu1".into(), "relu2".into(), "mixed".into()],
    }
}

/// He-normal weights and small positive biases for every weighted node.
fn random_blobs(manifest: &Manifest, seed: u64) -> HashMap<String, Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blobs = HashMap::new();
    for n in &manifest.nodes {
        let Some((w, b)) = n.op.param_shapes() else { continue };
        let fan_in: usize = w[1..].iter().product();
        let normal = Normal::new(0.0f32, (2.0 / fan_in as f32).sqrt()).expect("valid std");
        let mut values: Vec<f32> = (0..w.iter().product::<usize>()).map(|_| normal.sample(&mut rng)).collect();
        values.extend((0..b[0]).map(|_| rng.random_range(0.0f32..0.1)));
        blobs.insert(n.id.clone(), values);
    }
    blobs
}

fn install_sobel(blobs: &mut HashMap<String, Vec<f32>>) {
    let conv1 = blobs.get_mut("conv1").expect("tinynet has conv1");
    // output channel 0 spans the first 3 * 9 weights
    for c in 0..3 {
        for (k, &v) in SOBEL_X.iter().enumerate() {
            conv1[c * 9 + k] = v / 3.0;
        }
    }
    // bias sits after the 8 * 27 weights
    conv1[8 * 27] = 0.0;
}

/// The standard fixture network.
pub fn tinynet_standard() -> ModelParts {
    let manifest = tinynet_manifest(STANDARD_ID);
    let mut blobs = random_blobs(&manifest, 0x5eed_0001);
    install_sobel(&mut blobs);
    ModelParts { manifest, blobs }
}

/// Same architecture as [`tinynet_standard`] with perturbed weights, standing
/// in for an adversarially fine-tuned checkpoint.
pub fn tinynet_adversarial() -> ModelParts {
    let mut parts = tinynet_standard();
    parts.manifest.model_id = ADVERSARIAL_ID.into();
    let noise = random_blobs(&parts.manifest, 0x5eed_0002);
    for (id, values) in parts.blobs.iter_mut() {
        for (v, n) in values.iter_mut().zip(&noise[id]) {
            *v += 0.35 * n;
        }
    }
    install_sobel(&mut parts.blobs);
    parts
}

/// Tinynet with every weight and bias zero: constant logits, zero gradients.
pub fn tinynet_zero() -> ModelParts {
    let manifest = tinynet_manifest(ZERO_ID);
    let blobs = random_blobs(&manifest, 0)
        .into_iter()
        .map(|(k, v)| (k, vec![0.0; v.len()]))
        .collect();
    ModelParts { manifest, blobs }
}

/// A single dense layer on the flattened `3 x size x size` input.
pub fn linear(size: usize, seed: u64) -> ModelParts {
    let classes = LABELS.len();
    let manifest = Manifest {
        model_id: LINEAR_ID.into(),
        checkpoint: CHECKPOINT.into(),
        input_shape: vec![3, size, size],
        normalization: Normalization {
            mean: IMAGENET_MEAN.to_vec(),
            std: IMAGENET_STD.to_vec(),
        },
        labels: LABELS.iter().map(|s| s.to_string()).collect(),
        nodes: vec![node(
            "fc",
            OpSpec::Dense {
                in_features: 3 * size * size,
                out_features: classes,
            },
            &["input"],
        )],
        output: "fc".into(),
        capture_nodes: vec![],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = classes * 3 * size * size + classes;
    let blobs = HashMap::from([("fc".to_string(), (0..n).map(|_| rng.random_range(-0.05f32..0.05)).collect())]);
    ModelParts { manifest, blobs }
}

pub fn neuron_groups(parts: &ModelParts) -> NeuronGroupCatalog {
    let m = &parts.manifest;
    let group = |name: &str, node: &str, channels: Vec<usize>| NeuronGroup {
        name: name.into(),
        node: node.into(),
        fvis_assets: channels
            .iter()
            .map(|&c| asset_id(&m.model_id, &m.checkpoint, node, c, Parametrization::FourierBasis))
            .collect(),
        channels,
    };
    NeuronGroupCatalog {
        model_id: m.model_id.clone(),
        groups: vec![
            group("edges", "relu1", (0..8).collect()),
            group("conv2", "relu2", (0..8).collect()),
            group("mixed", "mixed", (0..16).collect()),
        ],
    }
}

fn cube_of(p: [f32; 3], half: f32) -> [f32; 3] {
    let m = p[0].abs().max(p[1].abs()).max(p[2].abs());
    p.map(|v| v / m * half)
}

fn tex(f: impl Fn(f32, f32) -> [f32; 3]) -> Image {
    Image::from_fn(64, 64, |x, y| f(x as f32 / 64.0, y as f32 / 64.0))
}

/// Sphere morphing into a cube, checker texture morphing into stripes.
pub fn orb() -> Mesh {
    let (positions, uvs, indices) = uv_sphere(16, 24);
    let target = positions.iter().map(|&p| cube_of(p, 0.8)).collect();
    Mesh {
        positions,
        target_positions: Some(target),
        uvs,
        indices,
        base_color: [0.75, 0.45, 0.25],
        texture: Some(tex(|u, v| {
            if ((u * 8.0) as u32 + (v * 8.0) as u32).is_multiple_of(2) {
                [0.95, 0.55, 0.15]
            } else {
                [0.15, 0.3, 0.8]
            }
        })),
        target_texture: Some(tex(|_, v| {
            if ((v * 10.0) as u32).is_multiple_of(2) {
                [0.9, 0.1, 0.1]
            } else {
                [0.95, 0.95, 0.95]
            }
        })),
    }
}

/// Ellipsoid morphing into a bumpy ball, spots morphing into zebra stripes.
pub fn pod() -> Mesh {
    let (positions, uvs, indices) = uv_sphere(16, 24);
    let base = positions.iter().map(|p| [p[0] * 1.2, p[1] * 0.7, p[2] * 0.8]).collect();
    let target = positions
        .iter()
        .map(|p| {
            let theta = p[1].clamp(-1.0, 1.0).acos();
            let phi = p[2].atan2(p[0]);
            let r = 0.9 + 0.15 * (5.0 * theta).sin() * (4.0 * phi).cos();
            p.map(|v| v * r)
        })
        .collect();
    Mesh {
        positions: base,
        target_positions: Some(target),
        uvs,
        indices,
        base_color: [0.55, 0.6, 0.35],
        texture: Some(tex(|u, v| {
            let (fu, fv) = ((u * 6.0).fract() - 0.5, (v * 6.0).fract() - 0.5);
            if fu * fu + fv * fv < 0.09 {
                [0.25, 0.15, 0.1]
            } else {
                [0.85, 0.75, 0.5]
            }
        })),
        target_texture: Some(tex(|u, v| {
            if (((u + v) * 9.0) as u32).is_multiple_of(2) {
                [0.05, 0.05, 0.05]
            } else {
                [0.95, 0.95, 0.9]
            }
        })),
    }
}

fn noise(w: usize, h: usize, seed: u64, sigma: f32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = Image::from_fn(w, h, |_, _| {
        let v = rng.random::<f32>();
        [v, v, v]
    });
    gaussian_blur(&img, sigma)
}

/// 224x224 procedural backgrounds: `meadow`, `studio` and `brick`.
pub fn backgrounds() -> Vec<(String, Image)> {
    let (w, h) = (224, 224);
    let n = noise(w, h, 11, 3.0);
    let meadow = Image::from_fn(w, h, |x, y| {
        let t = y as f32 / h as f32;
        let k = (n.get(x, y)[0] - 0.5) * 2.0;
        if t < 0.45 {
            [0.45 + 0.2 * t, 0.65 + 0.2 * t, 0.95]
        } else {
            [(0.25 + 0.25 * k).clamp(0.0, 1.0), (0.55 + 0.3 * k).clamp(0.0, 1.0), (0.2 + 0.1 * k).clamp(0.0, 1.0)]
        }
    });
    let studio = Image::from_fn(w, h, |x, y| {
        let (dx, dy) = (x as f32 / w as f32 - 0.5, y as f32 / h as f32 - 0.4);
        let v = (0.9 - 0.9 * (dx * dx + dy * dy)).clamp(0.0, 1.0);
        [v, v * 0.97, v * 0.92]
    });
    let brick = Image::from_fn(w, h, |x, y| {
        let row = y / 14;
        let offset = if row % 2 == 0 { 0 } else { 14 };
        let mortar = y % 14 < 2 || (x + offset) % 28 < 2;
        let k = n.get(x, y)[0] * 0.2;
        if mortar {
            [0.8, 0.8, 0.78]
        } else {
            [0.6 + k, 0.22 + k * 0.5, 0.15]
        }
    });
    vec![("meadow".into(), meadow), ("studio".into(), studio), ("brick".into(), brick)]
}

/// The fixture meshes and backgrounds, in memory.
pub fn asset_library() -> AssetLibrary {
    let mut lib = AssetLibrary::new();
    lib.insert_mesh("orb", orb()).expect("valid fixture mesh");
    lib.insert_mesh("pod", pod()).expect("valid fixture mesh");
    for (id, img) in backgrounds() {
        lib.insert_background(&id, img);
    }
    lib
}

/// The models shipped by [`write_fixtures`], in a stable order.
pub fn fixture_models() -> Vec<ModelParts> {
    vec![tinynet_standard(), tinynet_adversarial()]
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the asset directory (`assets.json`, OBJ and PNG files).
pub fn write_assets(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = AssetManifest::default();
    for (id, mesh) in [("orb", orb()), ("pod", pod())] {
        write_text(&dir.join(format!("{id}.obj")), &write_obj(&mesh.positions, &mesh.uvs, &mesh.indices))?;
        let target = mesh.target_positions.as_ref().expect("fixture meshes morph");
        write_text(&dir.join(format!("{id}_target.obj")), &write_obj(target, &mesh.uvs, &mesh.indices))?;
        mesh.texture.as_ref().expect("textured").save_png(&dir.join(format!("{id}.png")))?;
        mesh.target_texture
            .as_ref()
            .expect("textured")
            .save_png(&dir.join(format!("{id}_target.png")))?;
        manifest.meshes.push(MeshEntry {
            id: id.into(),
            obj: format!("{id}.obj"),
            target_obj: Some(format!("{id}_target.obj")),
            texture: Some(format!("{id}.png")),
            target_texture: Some(format!("{id}_target.png")),
            base_color: mesh.base_color,
        });
    }
    for (id, img) in backgrounds() {
        let file = format!("bg_{id}.png");
        img.save_png(&dir.join(&file))?;
        manifest.backgrounds.push(BackgroundEntry { id, file });
    }
    let text = serde_json::to_string_pretty(&manifest).expect("asset manifest serializes");
    write_text(&dir.join(ASSET_MANIFEST), &text)
}

/// Writes every fixture model container plus its neuron-group sidecar.
pub fn write_models(dir: &Path) -> Result<()> {
    for parts in fixture_models() {
        parts.save(&dir.join(&parts.manifest.model_id))?;
        neuron_groups(&parts).write(&dir.join(NeuronGroupCatalog::file_name(&parts.manifest.model_id)))?;
    }
    Ok(())
}

/// `<root>/models` and `<root>/assets`.
pub fn write_fixtures(root: &Path) -> Result<()> {
    write_models(&root.join("models"))?;
    write_assets(&root.join("assets"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_models_validate_and_compare() {
        let a = tinynet_standard().build().unwrap();
        let b = tinynet_adversarial().build().unwrap();
        a.check_comparable(&b).unwrap();
        assert_eq!(a.node_shape("mixed"), Some(&[16usize, 28, 28][..]));
        assert_eq!(a.labels().len(), 12);
        for parts in fixture_models() {
            neuron_groups(&parts).validate(&parts.build().unwrap()).unwrap();
        }
    }

    #[test]
    fn fixture_meshes_validate() {
        orb().validate().unwrap();
        pod().validate().unwrap();
    }

    #[test]
    fn linear_builds() {
        let m = linear(8, 1).build().unwrap();
        assert_eq!(m.input_shape(), &[3, 8, 8]);
    }
}
