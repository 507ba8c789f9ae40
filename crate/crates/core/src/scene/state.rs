use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraParams {
    /// Orbit angle around the vertical axis, degrees.
    pub yaw: f32,
    /// Elevation, degrees in `[-89, 89]`.
    pub pitch: f32,
    /// Distance from the orbit center in scene units.
    pub distance: f32,
    pub pan_x: f32,
    pub pan_y: f32,
    /// Rotation about the view axis, degrees.
    pub roll: f32,
}

impl Default for CameraParams {
    fn default() -> Self {
        Self {
            yaw: 0.0,
            pitch: 10.0,
            distance: 3.2,
            pan_x: 0.0,
            pan_y: 0.0,
            roll: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Asset(String),
    Color([f32; 3]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub lighting_influence: f32,
    pub texture_influence: f32,
    pub texture_blur: f32,
    pub background: Background,
    pub background_blur: f32,
    pub background_saturation: f32,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            lighting_influence: 1.0,
            texture_influence: 1.0,
            texture_blur: 0.0,
            background: Background::Color([0.82, 0.84, 0.86]),
            background_blur: 0.0,
            background_saturation: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeParams {
    pub shape_morph: f32,
    pub texture_morph: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorParams {
    pub fade_to_black: f32,
    /// Degrees in `[0, 360)`.
    pub hue_shift: f32,
    pub saturation: f32,
    pub contrast: f32,
}

impl Default for ColorParams {
    fn default() -> Self {
        Self {
            fade_to_black: 0.0,
            hue_shift: 0.0,
            saturation: 1.0,
            contrast: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrequencyParams {
    pub split_sigma: f32,
    pub low_gain: f32,
    pub high_gain: f32,
}

impl Default for FrequencyParams {
    fn default() -> Self {
        Self {
            split_sigma: 2.0,
            low_gain: 1.0,
            high_gain: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpatialParams {
    pub patch_k: usize,
    pub shuffle_seed: u64,
}

impl Default for SpatialParams {
    fn default() -> Self {
        Self {
            patch_k: 1,
            shuffle_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackOverlayParams {
    pub alpha: f32,
    pub image_fade: f32,
}

impl Default for AttackOverlayParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            image_fade: 0.0,
        }
    }
}

/// Every perturbation parameter of a frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneState {
    /// Mesh asset id of the main object.
    pub mesh: String,
    pub camera: CameraParams,
    pub scene: SceneParams,
    pub shape: ShapeParams,
    pub color: ColorParams,
    pub frequency: FrequencyParams,
    pub spatial: SpatialParams,
    pub attack: AttackOverlayParams,
}

impl Default for SceneState {
    fn default() -> Self {
        Self {
            mesh: "orb".into(),
            camera: CameraParams::default(),
            scene: SceneParams::default(),
            shape: ShapeParams::default(),
            color: ColorParams::default(),
            frequency: FrequencyParams::default(),
            spatial: SpatialParams::default(),
            attack: AttackOverlayParams::default(),
        }
    }
}

fn check_range(field: &str, v: f32, lo: f32, hi: f32) -> Result<()> {
    if !(v.is_finite() && v >= lo && v <= hi) {
        return Err(Error::param(field, format!("{v} is outside [{lo}, {hi}]")));
    }
    Ok(())
}

fn check_finite(field: &str, v: f32) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::param(field, "must be finite"));
    }
    Ok(())
}

impl SceneState {
    pub fn validate(&self) -> Result<()> {
        if self.mesh.is_empty() {
            return Err(Error::param("mesh", "mesh id must not be empty"));
        }
        let c = &self.camera;
        check_finite("camera.yaw", c.yaw)?;
        check_range("camera.pitch", c.pitch, -89.0, 89.0)?;
        check_range("camera.distance", c.distance, 0.5, 100.0)?;
        check_finite("camera.pan_x", c.pan_x)?;
        check_finite("camera.pan_y", c.pan_y)?;
        check_finite("camera.roll", c.roll)?;

        let s = &self.scene;
        check_range("scene.lighting_influence", s.lighting_influence, 0.0, 1.0)?;
        check_range("scene.texture_influence", s.texture_influence, 0.0, 1.0)?;
        check_range("scene.texture_blur", s.texture_blur, 0.0, 1.0)?;
        check_range("scene.background_blur", s.background_blur, 0.0, 1.0)?;
        check_range("scene.background_saturation", s.background_saturation, 0.0, 1.0)?;
        match &s.background {
            Background::Color(rgb) => {
                for v in rgb {
                    check_range("scene.background", *v, 0.0, 1.0)?;
                }
            }
            Background::Asset(id) if id.is_empty() => {
                return Err(Error::param("scene.background", "asset id must not be empty"));
            }
            Background::Asset(_) => {}
        }

        check_range("shape.shape_morph", self.shape.shape_morph, 0.0, 1.0)?;
        check_range("shape.texture_morph", self.shape.texture_morph, 0.0, 1.0)?;

        let col = &self.color;
        check_range("color.fade_to_black", col.fade_to_black, 0.0, 1.0)?;
        check_finite("color.hue_shift", col.hue_shift)?;
        if !(0.0..=360.0).contains(&col.hue_shift) {
            return Err(Error::param("color.hue_shift", format!("{} is outside [0, 360]", col.hue_shift)));
        }
        check_range("color.saturation", col.saturation, 0.0, 1.0)?;
        check_range("color.contrast", col.contrast, 0.0, 2.0)?;

        let f = &self.frequency;
        check_finite("frequency.split_sigma", f.split_sigma)?;
        if f.split_sigma <= 0.0 || f.split_sigma > 64.0 {
            return Err(Error::param("frequency.split_sigma", "must be in (0, 64]"));
        }
        check_range("frequency.low_gain", f.low_gain, 0.0, 2.0)?;
        check_range("frequency.high_gain", f.high_gain, 0.0, 2.0)?;

        if self.spatial.patch_k == 0 {
            return Err(Error::param("spatial.patch_k", "must be at least 1"));
        }

        check_range("attack.alpha", self.attack.alpha, 0.0, 1.0)?;
        check_range("attack.image_fade", self.attack.image_fade, 0.0, 1.0)?;
        Ok(())
    }

    /// Merges a partial JSON object into this state and validates the result.
    /// The receiver is left untouched on error.
    pub fn apply_delta(&self, delta: &Value) -> Result<SceneState> {
        if !delta.is_object() {
            return Err(Error::param("delta", "must be a JSON object"));
        }
        let mut merged = serde_json::to_value(self).expect("scene state serializes");
        merge_json(&mut merged, delta);
        let next: SceneState =
            serde_json::from_value(merged).map_err(|e| Error::param("delta", e.to_string()))?;
        next.validate()?;
        Ok(next)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scene state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let state: SceneState = serde_json::from_str(text).map_err(|e| Error::parse("scene state", e))?;
        state.validate()?;
        Ok(state)
    }
}

/// Merges `patch` into `target` section by section: top-level objects are
/// merged key-wise, anything below a section field is replaced whole.
pub fn merge_json(target: &mut Value, patch: &Value) {
    let (Value::Object(t), Value::Object(p)) = (target, patch) else {
        return;
    };
    for (k, v) in p {
        match (t.get_mut(k), v) {
            (Some(Value::Object(section)), Value::Object(fields)) => {
                for (fk, fv) in fields {
                    section.insert(fk.clone(), fv.clone());
                }
            }
            _ => {
                t.insert(k.clone(), v.clone());
            }
        }
    }
}
