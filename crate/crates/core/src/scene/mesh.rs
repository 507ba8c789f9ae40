//! Triangle meshes with optional morph targets, plus a Wavefront OBJ subset
//! loader (`v`, `vt`, `f`; polygons are fan-triangulated).

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::img::Image;

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub positions: Vec<[f32; 3]>,
    /// Morph target positions, same count and order as `positions`.
    pub target_positions: Option<Vec<[f32; 3]>>,
    pub uvs: Vec<[f32; 2]>,
    pub indices: Vec<[u32; 3]>,
    /// Flat albedo used where texture influence is zero.
    pub base_color: [f32; 3],
    pub texture: Option<Image>,
    /// Morph target texture, same size as `texture`.
    pub target_texture: Option<Image>,
}

impl Mesh {
    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 || self.indices.is_empty() {
            return Err(Error::Mesh("mesh has no vertices or no triangles".into()));
        }
        if self.uvs.len() != n {
            return Err(Error::Mesh(format!("{} uvs for {n} vertices", self.uvs.len())));
        }
        for (t, tri) in self.indices.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i as usize >= n) {
                return Err(Error::Mesh(format!(
                    "triangle {t} references vertex {bad}, mesh has {n} vertices"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::Mesh(format!("triangle {t} repeats a vertex index")));
            }
        }
        if self.positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Mesh("non-finite vertex position".into()));
        }
        if let Some(target) = &self.target_positions {
            if target.len() != n {
                return Err(Error::Mesh(format!(
                    "morph target has {} vertices, base has {n}",
                    target.len()
                )));
            }
        }
        match (&self.texture, &self.target_texture) {
            (None, Some(_)) => {
                return Err(Error::Mesh("morph target texture without a base texture".into()));
            }
            (Some(a), Some(b)) if !a.same_size(b) => {
                return Err(Error::Mesh(format!(
                    "morph textures differ in size: {}x{} vs {}x{}",
                    a.width(),
                    a.height(),
                    b.width(),
                    b.height()
                )));
            }
            _ => {}
        }
        Ok(())
    }

    /// Combines two separately loaded meshes into a morph pair, requiring
    /// identical topology.
    pub fn with_morph_target(mut self, target: &Mesh) -> Result<Mesh> {
        if target.positions.len() != self.positions.len() {
            return Err(Error::Mesh(format!(
                "morph pair vertex counts differ: base {} vs target {}",
                self.positions.len(),
                target.positions.len()
            )));
        }
        if target.indices.len() != self.indices.len() {
            return Err(Error::Mesh(format!(
                "morph pair triangle counts differ: base {} vs target {}",
                self.indices.len(),
                target.indices.len()
            )));
        }
        if target.indices != self.indices {
            return Err(Error::Mesh("morph pair triangle indices differ".into()));
        }
        self.target_positions = Some(target.positions.clone());
        Ok(self)
    }
}

/// `(1 - t) * base + t * target` per vertex; endpoints are reproduced exactly.
pub fn morph_vertices(mesh: &Mesh, t: f32) -> Vec<[f32; 3]> {
    let Some(target) = &mesh.target_positions else {
        return mesh.positions.clone();
    };
    if t == 0.0 {
        return mesh.positions.clone();
    }
    if t == 1.0 {
        return target.clone();
    }
    mesh.positions
        .iter()
        .zip(target)
        .map(|(a, b)| std::array::from_fn(|k| (1.0 - t) * a[k] + t * b[k]))
        .collect()
}

/// Parses the OBJ subset into a mesh with unit-gray base color and no texture.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut vs: Vec<[f32; 3]> = Vec::new();
    let mut vts: Vec<[f32; 2]> = Vec::new();
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut indices = Vec::new();
    let mut remap: HashMap<(usize, Option<usize>), u32> = HashMap::new();

    let floats = |parts: &[&str], n: usize, line: usize| -> Result<Vec<f32>> {
        if parts.len() < n {
            return Err(Error::parse("obj", format!("line {line}: expected {n} numbers")));
        }
        parts[..n]
            .iter()
            .map(|p| {
                p.parse::<f32>()
                    .map_err(|e| Error::parse("obj", format!("line {line}: {e}")))
            })
            .collect()
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let raw = raw.split('#').next().unwrap_or("").trim();
        let mut parts = raw.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                let f = floats(&rest, 3, line)?;
                vs.push([f[0], f[1], f[2]]);
            }
            "vt" => {
                let f = floats(&rest, 2, line)?;
                vts.push([f[0], f[1]]);
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(Error::parse("obj", format!("line {line}: face needs 3+ vertices")));
                }
                let mut corner = Vec::with_capacity(rest.len());
                for r in &rest {
                    let mut it = r.split('/');
                    let vi = parse_index(it.next(), vs.len(), line)?
                        .ok_or_else(|| Error::parse("obj", format!("line {line}: missing vertex index")))?;
                    let ti = parse_index(it.next(), vts.len(), line)?;
                    let key = (vi, ti);
                    let idx = *remap.entry(key).or_insert_with(|| {
                        positions.push(vs[vi]);
                        uvs.push(ti.map(|t| vts[t]).unwrap_or([0.0, 0.0]));
                        (positions.len() - 1) as u32
                    });
                    corner.push(idx);
                }
                for k in 1..corner.len() - 1 {
                    indices.push([corner[0], corner[k], corner[k + 1]]);
                }
            }
            _ => {}
        }
    }
    let mesh = Mesh {
        positions,
        target_positions: None,
        uvs,
        indices,
        base_color: [0.5, 0.5, 0.5],
        texture: None,
        target_texture: None,
    };
    mesh.validate()?;
    Ok(mesh)
}

fn parse_index(field: Option<&str>, count: usize, line: usize) -> Result<Option<usize>> {
    let Some(s) = field.filter(|s| !s.is_empty()) else {
        return Ok(None);
    };
    let i: usize = s
        .parse()
        .map_err(|e| Error::parse("obj", format!("line {line}: index `{s}`: {e}")))?;
    if i == 0 || i > count {
        return Err(Error::Mesh(format!(
            "line {line}: index {i} out of range (1..={count})"
        )));
    }
    Ok(Some(i - 1))
}

/// Writes positions, uvs and faces in the same OBJ subset.
pub fn write_obj(positions: &[[f32; 3]], uvs: &[[f32; 2]], indices: &[[u32; 3]]) -> String {
    let mut out = String::new();
    for p in positions {
        out.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    for t in uvs {
        out.push_str(&format!("vt {} {}\n", t[0], t[1]));
    }
    for tri in indices {
        let [a, b, c] = tri.map(|i| i + 1);
        out.push_str(&format!("f {a}/{a} {b}/{b} {c}/{c}\n"));
    }
    out
}

/// Latitude/longitude sphere of radius 1. The seam column is duplicated so
/// uvs stay continuous.
pub fn uv_sphere(rings: usize, segments: usize) -> (Vec<[f32; 3]>, Vec<[f32; 2]>, Vec<[u32; 3]>) {
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    for r in 0..=rings {
        let v = r as f32 / rings as f32;
        let theta = v * std::f32::consts::PI;
        for s in 0..=segments {
            let u = s as f32 / segments as f32;
            let phi = u * 2.0 * std::f32::consts::PI;
            positions.push([theta.sin() * phi.cos(), theta.cos(), theta.sin() * phi.sin()]);
            uvs.push([u, 1.0 - v]);
        }
    }
    let stride = (segments + 1) as u32;
    let mut indices = Vec::new();
    for r in 0..rings as u32 {
        for s in 0..segments as u32 {
            let a = r * stride + s;
            let b = a + stride;
            if r != 0 {
                indices.push([a, a + 1, b]);
            }
            if r != rings as u32 - 1 {
                indices.push([a + 1, b + 1, b]);
            }
        }
    }
    (positions, uvs, indices)
}
