//! Wire messages for the live session stream. Every message is a JSON object
//! with a `type` field. Frames carry a PNG-encoded image and 8-bit signed
//! activation maps (base64), each scaled by its own `vmax`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::ModelInfo;
use crate::attack::{AttackConfig, Norm, StepOutcome};
use crate::engine::Timings;
use crate::error::{Error, Result};
use crate::img::Image;
use crate::metrics::PredictionSet;
use crate::model::ActivationMap;
use crate::scene::SceneState;

pub const PROTOCOL_VERSION: u32 = 1;

/// Outputs of one model for one frame, full precision.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPayload {
    pub model_id: String,
    pub checkpoint: String,
    pub prediction: PredictionSet,
    pub maps: Vec<ActivationMap>,
}

/// Everything a frame carries before encoding. A pure function of the
/// session's models, assets, state, capture set and attack delta.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePayload {
    pub state_version: u64,
    pub frame: Image,
    pub models: Vec<ModelPayload>,
}

/// One computed frame with its sequence number.
#[derive(Clone, Debug)]
pub struct Frame {
    pub seq: u64,
    pub payload: FramePayload,
    pub timings: Timings,
}

impl Frame {
    pub fn to_packet(&self) -> FramePacket {
        let p = &self.payload;
        FramePacket {
            protocol_version: PROTOCOL_VERSION,
            seq: self.seq,
            state_version: p.state_version,
            width: p.frame.width(),
            height: p.frame.height(),
            frame_png: STANDARD.encode(p.frame.encode_png()),
            models: p
                .models
                .iter()
                .map(|m| ModelPacket {
                    model_id: m.model_id.clone(),
                    checkpoint: m.checkpoint.clone(),
                    prediction: m.prediction.clone(),
                    maps: m.maps.iter().map(MapPacket::from_map).collect(),
                })
                .collect(),
            timings: self.timings,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapPacket {
    pub node: String,
    pub channel: usize,
    pub width: usize,
    pub height: usize,
    pub vmax: f32,
    /// Row-major `i8` values, base64. `v / 127 * vmax` recovers the value.
    pub data: String,
}

impl MapPacket {
    pub fn from_map(m: &ActivationMap) -> Self {
        let bytes: Vec<u8> = m.quantize().into_iter().map(|v| v as u8).collect();
        Self {
            node: m.node.clone(),
            channel: m.channel,
            width: m.width,
            height: m.height,
            vmax: m.vmax,
            data: STANDARD.encode(bytes),
        }
    }

    pub fn quantized(&self) -> Result<Vec<i8>> {
        let bytes = STANDARD.decode(&self.data).map_err(|e| Error::parse("activation map data", e))?;
        if bytes.len() != self.width * self.height {
            return Err(Error::shape(format!(
                "map `{}`:{} has {} values for {}x{}",
                self.node,
                self.channel,
                bytes.len(),
                self.width,
                self.height
            )));
        }
        Ok(bytes.into_iter().map(|b| b as i8).collect())
    }

    pub fn values(&self) -> Result<Vec<f32>> {
        Ok(ActivationMap::dequantize(&self.quantized()?, self.vmax))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPacket {
    pub model_id: String,
    pub checkpoint: String,
    pub prediction: PredictionSet,
    pub maps: Vec<MapPacket>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePacket {
    pub protocol_version: u32,
    pub seq: u64,
    pub state_version: u64,
    pub width: usize,
    pub height: usize,
    /// PNG, base64.
    pub frame_png: String,
    pub models: Vec<ModelPacket>,
    pub timings: Timings,
}

impl FramePacket {
    pub fn decode_frame(&self) -> Result<Image> {
        let bytes = STANDARD.decode(&self.frame_png).map_err(|e| Error::parse("frame", e))?;
        Image::decode(&bytes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AttackCommand {
    Init { config: AttackConfig },
    Step,
    Reset,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackStatus {
    /// An attack has been initialized.
    pub active: bool,
    /// A step is being computed.
    pub running: bool,
    /// The request was rejected because a step is already running.
    pub busy: bool,
    pub steps: usize,
    pub epsilon: Option<f32>,
    pub norm: Option<Norm>,
    pub delta_l2: f64,
    pub delta_linf: f64,
    pub last_outcome: Option<StepOutcome>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Partial scene state, merged section by section.
    Update { delta: Value },
    /// Neuron group names from the first model's catalog.
    SetCapture { groups: Vec<String> },
    SetDisplay { as_probability: bool },
    Attack { command: AttackCommand },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello {
        protocol_version: u32,
        session_id: String,
        state: SceneState,
        state_version: u64,
        models: Vec<ModelInfo>,
    },
    Ack {
        state_version: u64,
    },
    Frame(FramePacket),
    /// Nothing changed since the last frame.
    Keepalive {
        seq: u64,
        state_version: u64,
    },
    AttackStatus(AttackStatus),
    Error {
        message: String,
        field: Option<String>,
    },
    /// The session was closed; no further messages follow.
    End,
}

impl ServerMessage {
    pub fn from_error(e: &Error) -> Self {
        ServerMessage::Error {
            message: e.to_string(),
            field: e.field().map(str::to_string),
        }
    }
}
