//! One live exploration session: scene state, up to two comparable models,
//! the captured neuron groups and an optional attack.
//!
//! Frames are pulled. [`Session::poll`] waits for a change, snapshots the
//! newest state and computes one frame from it, so updates arriving while a
//! frame is computed are coalesced into the next one. Attack steps run on
//! their own thread and publish the new delta when done.

use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::time::{Duration, Instant};

use serde_json::Value;

use super::protocol::{AttackCommand, AttackStatus, ClientMessage, Frame, FramePayload, ModelPayload, ServerMessage};
use crate::attack::{attack_init, AttackState, Norm, StepOutcome};
use crate::engine::{ms_since, Engine, Timings};
use crate::error::{Error, Result};
use crate::img::Image;
use crate::metrics::topk;
use crate::model::{activation_map, ActivationMap, ModelGraph, NeuronGroup, NeuronGroupCatalog};
use crate::perturb::apply_pre_attack;
use crate::scene::{AssetLibrary, Background, RenderConfig, SceneState};

pub const MAX_MODELS: usize = 2;
pub const TOP_K: usize = 5;

/// Shared, swappable asset library (mesh uploads replace it).
pub type AssetHandle = Arc<RwLock<Arc<AssetLibrary>>>;

#[derive(Debug)]
pub enum Tick {
    Frame(Frame),
    /// Nothing changed within the wait period.
    Idle { seq: u64, state_version: u64 },
    Closed,
}

struct AttackSlot {
    source: usize,
    state: AttackState,
    running: bool,
    last_outcome: Option<StepOutcome>,
    error: Option<String>,
}

struct Inner {
    state: SceneState,
    version: u64,
    /// Bumped on every change that affects frame content.
    generation: u64,
    emitted: Option<u64>,
    seq: u64,
    capture: Vec<NeuronGroup>,
    as_probability: bool,
    attack: Option<AttackSlot>,
    /// Bumped on attack init and reset; stale step results are dropped.
    attack_epoch: u64,
    last_maps: Vec<ActivationMap>,
    closed: bool,
}

struct Shared {
    id: String,
    models: Vec<Arc<ModelGraph>>,
    catalog: Option<NeuronGroupCatalog>,
    assets: AssetHandle,
    render: RenderConfig,
    inner: Mutex<Inner>,
    changed: Condvar,
}

#[derive(Clone)]
pub struct Session {
    shared: Arc<Shared>,
}

/// Render settings matching a model's `[3, H, W]` input.
pub fn render_config_for(model: &ModelGraph) -> RenderConfig {
    let s = model.input_shape();
    RenderConfig {
        width: s[2],
        height: s[1],
        ..RenderConfig::default()
    }
}

impl Session {
    /// `catalog` provides the neuron groups for [`ClientMessage::SetCapture`].
    pub fn new(
        id: impl Into<String>,
        models: Vec<Arc<ModelGraph>>,
        catalog: Option<NeuronGroupCatalog>,
        assets: AssetHandle,
    ) -> Result<Self> {
        if models.is_empty() || models.len() > MAX_MODELS {
            return Err(Error::param(
                "models",
                format!("a session takes 1 to {MAX_MODELS} models, got {}", models.len()),
            ));
        }
        if let [a, b] = &models[..] {
            a.check_comparable(b)?;
        }
        let render = render_config_for(&models[0]);
        Ok(Self {
            shared: Arc::new(Shared {
                id: id.into(),
                models,
                catalog,
                assets,
                render,
                inner: Mutex::new(Inner {
                    state: SceneState::default(),
                    version: 0,
                    generation: 0,
                    emitted: None,
                    seq: 0,
                    capture: vec![],
                    as_probability: false,
                    attack: None,
                    attack_epoch: 0,
                    last_maps: vec![],
                    closed: false,
                }),
                changed: Condvar::new(),
            }),
        })
    }

    pub fn id(&self) -> &str {
        &self.shared.id
    }

    pub fn models(&self) -> &[Arc<ModelGraph>] {
        &self.shared.models
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.shared.inner.lock().expect("session lock poisoned")
    }

    fn open(&self) -> Result<MutexGuard<'_, Inner>> {
        let inner = self.lock();
        if inner.closed {
            return Err(Error::SessionClosed);
        }
        Ok(inner)
    }

    fn touch(&self, inner: &mut Inner) {
        inner.generation += 1;
        self.shared.changed.notify_all();
    }

    pub fn state(&self) -> (SceneState, u64) {
        let inner = self.lock();
        (inner.state.clone(), inner.version)
    }

    /// Merges a partial state and returns the acknowledged version. On error
    /// the state is unchanged and the error names the field.
    pub fn update_state(&self, delta: &Value) -> Result<u64> {
        let mut inner = self.open()?;
        let next = inner.state.apply_delta(delta)?;
        self.check_assets(&next)?;
        inner.state = next;
        inner.version += 1;
        self.touch(&mut inner);
        Ok(inner.version)
    }

    /// Replaces the whole state.
    pub fn set_state(&self, state: SceneState) -> Result<u64> {
        state.validate()?;
        self.check_assets(&state)?;
        let mut inner = self.open()?;
        inner.state = state;
        inner.version += 1;
        self.touch(&mut inner);
        Ok(inner.version)
    }

    fn check_assets(&self, state: &SceneState) -> Result<()> {
        let assets = self.shared.assets.read().expect("asset lock");
        assets.mesh(&state.mesh)?;
        if let Background::Asset(id) = &state.scene.background {
            assets.background(id)?;
        }
        Ok(())
    }

    pub fn capture(&self) -> Vec<NeuronGroup> {
        self.lock().capture.clone()
    }

    pub fn set_capture(&self, groups: Vec<NeuronGroup>) -> Result<()> {
        let catalog = NeuronGroupCatalog {
            model_id: self.shared.models[0].model_id().into(),
            groups,
        };
        catalog.validate(&self.shared.models[0])?;
        let mut inner = self.open()?;
        inner.capture = catalog.groups;
        self.touch(&mut inner);
        Ok(())
    }

    /// Selects groups by name from the session's catalog.
    pub fn set_capture_groups(&self, names: &[String]) -> Result<()> {
        let groups = names
            .iter()
            .map(|n| {
                self.shared
                    .catalog
                    .as_ref()
                    .and_then(|c| c.group(n))
                    .cloned()
                    .ok_or_else(|| Error::NotFound {
                        kind: "neuron group",
                        id: n.clone(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        self.set_capture(groups)
    }

    pub fn set_display(&self, as_probability: bool) -> Result<()> {
        let mut inner = self.open()?;
        inner.as_probability = as_probability;
        self.touch(&mut inner);
        Ok(())
    }

    pub fn close(&self) {
        let mut inner = self.lock();
        inner.closed = true;
        self.shared.changed.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }

    fn engine(&self) -> Engine {
        let assets = self.shared.assets.read().expect("asset lock").clone();
        Engine::new(assets, self.shared.render.clone())
    }

    /// Computes the payload for the current state without emitting a frame.
    pub fn render_payload(&self) -> Result<(FramePayload, Timings)> {
        let (state, version, capture, delta, as_probability) = {
            let inner = self.open()?;
            (
                inner.state.clone(),
                inner.version,
                inner.capture.clone(),
                inner.attack.as_ref().map(|a| a.state.delta().clone()),
                inner.as_probability,
            )
        };
        self.compute(&state, version, &capture, delta.as_ref(), as_probability)
    }

    fn compute(
        &self,
        state: &SceneState,
        version: u64,
        capture: &[NeuronGroup],
        delta: Option<&Image>,
        as_probability: bool,
    ) -> Result<(FramePayload, Timings)> {
        let (frame, mut timings) = self.engine().frame_timed(state, delta)?;
        let t = Instant::now();
        let input = frame.to_tensor();
        let mut nodes: Vec<&str> = Vec::new();
        for g in capture {
            if !nodes.contains(&g.node.as_str()) {
                nodes.push(&g.node);
            }
        }
        let mut models = Vec::with_capacity(self.shared.models.len());
        for m in &self.shared.models {
            let store = m.forward(&input, &nodes)?;
            let k = TOP_K.min(m.labels().len());
            let prediction = topk(m.model_id(), m.labels(), store.logits.data(), k, as_probability)?;
            let maps = capture
                .iter()
                .flat_map(|g| g.channels.iter().map(move |&c| (g.node.as_str(), c)))
                .map(|(node, c)| activation_map(&store, node, c))
                .collect::<Result<Vec<_>>>()?;
            models.push(ModelPayload {
                model_id: m.model_id().into(),
                checkpoint: m.checkpoint().into(),
                prediction,
                maps,
            });
        }
        timings.inference_ms = ms_since(t);
        Ok((
            FramePayload {
                state_version: version,
                frame,
                models,
            },
            timings,
        ))
    }

    /// Waits up to `wait` for a change, then computes a frame from the newest
    /// state. Sequence numbers increase by one per emitted frame.
    pub fn poll(&self, wait: Duration) -> Result<Tick> {
        let deadline = Instant::now() + wait;
        let snapshot = {
            let mut inner = self.lock();
            loop {
                if inner.closed {
                    return Ok(Tick::Closed);
                }
                if inner.emitted != Some(inner.generation) {
                    break;
                }
                let now = Instant::now();
                if now >= deadline {
                    return Ok(Tick::Idle {
                        seq: inner.seq,
                        state_version: inner.version,
                    });
                }
                inner = self.shared.changed.wait_timeout(inner, deadline - now).expect("session lock poisoned").0;
            }
            (
                inner.generation,
                inner.state.clone(),
                inner.version,
                inner.capture.clone(),
                inner.attack.as_ref().map(|a| a.state.delta().clone()),
                inner.as_probability,
            )
        };
        let (generation, state, version, capture, delta, as_probability) = snapshot;
        let (payload, timings) = self.compute(&state, version, &capture, delta.as_ref(), as_probability)?;
        let mut inner = self.lock();
        inner.emitted = Some(generation);
        inner.seq += 1;
        inner.last_maps = payload.models.iter().flat_map(|m| m.maps.iter().cloned()).collect();
        Ok(Tick::Frame(Frame {
            seq: inner.seq,
            payload,
            timings,
        }))
    }

    /// Full-precision map from the most recent frame.
    pub fn activation(&self, model_id: &str, node: &str, channel: usize) -> Result<ActivationMap> {
        self.lock()
            .last_maps
            .iter()
            .find(|m| m.model_id == model_id && m.node == node && m.channel == channel)
            .cloned()
            .ok_or_else(|| Error::NotFound {
                kind: "activation map",
                id: format!("{model_id}/{node}/{channel}"),
            })
    }

    fn status(inner: &Inner) -> AttackStatus {
        match &inner.attack {
            None => AttackStatus::default(),
            Some(a) => AttackStatus {
                active: true,
                running: a.running,
                busy: false,
                steps: a.state.steps(),
                epsilon: Some(a.state.config().epsilon),
                norm: Some(a.state.config().norm),
                delta_l2: a.state.delta_norm(Norm::L2),
                delta_linf: a.state.delta_norm(Norm::Linf),
                last_outcome: a.last_outcome,
                error: a.error.clone(),
            },
        }
    }

    pub fn attack_status(&self) -> AttackStatus {
        Self::status(&self.lock())
    }

    /// Init snapshots the current pre-overlay frame. Step starts one
    /// asynchronous PGD step; while one runs further steps report `busy`.
    pub fn attack_control(&self, command: AttackCommand) -> Result<AttackStatus> {
        match command {
            AttackCommand::Init { config } => {
                let source = self
                    .shared
                    .models
                    .iter()
                    .position(|m| m.model_id() == config.model)
                    .ok_or_else(|| Error::NotFound {
                        kind: "session model",
                        id: config.model.clone(),
                    })?;
                let state = self.state().0;
                let base = apply_pre_attack(&self.engine().render(&state)?, &state)?;
                let attack = attack_init(&self.shared.models[source], &base, config)?;
                let mut inner = self.open()?;
                inner.attack_epoch += 1;
                inner.attack = Some(AttackSlot {
                    source,
                    state: attack,
                    running: false,
                    last_outcome: None,
                    error: None,
                });
                self.touch(&mut inner);
                Ok(Self::status(&inner))
            }
            AttackCommand::Reset => {
                let mut inner = self.open()?;
                inner.attack_epoch += 1;
                inner.attack = None;
                self.touch(&mut inner);
                Ok(Self::status(&inner))
            }
            AttackCommand::Step => {
                let mut inner = self.open()?;
                let epoch = inner.attack_epoch;
                let Some(slot) = inner.attack.as_mut() else {
                    return Err(Error::param("attack", "no attack initialized"));
                };
                if slot.running {
                    let mut status = Self::status(&inner);
                    status.busy = true;
                    return Ok(status);
                }
                slot.running = true;
                let mut work = slot.state.clone();
                let model = self.shared.models[slot.source].clone();
                let status = Self::status(&inner);
                let session = self.clone();
                std::thread::spawn(move || {
                    let result = work.step(&model);
                    let mut inner = session.lock();
                    if inner.attack_epoch != epoch {
                        return;
                    }
                    if let Some(slot) = inner.attack.as_mut() {
                        slot.running = false;
                        match result {
                            Ok(outcome) => {
                                slot.state = work;
                                slot.last_outcome = Some(outcome);
                                slot.error = None;
                            }
                            Err(e) => slot.error = Some(e.to_string()),
                        }
                    }
                    session.touch(&mut inner);
                });
                Ok(status)
            }
        }
    }

    /// Blocks until no attack step is running or `timeout` passes.
    pub fn wait_attack_idle(&self, timeout: Duration) -> AttackStatus {
        let deadline = Instant::now() + timeout;
        let mut inner = self.lock();
        while inner.attack.as_ref().is_some_and(|a| a.running) {
            let now = Instant::now();
            if now >= deadline {
                break;
            }
            inner = self.shared.changed.wait_timeout(inner, deadline - now).expect("session lock poisoned").0;
        }
        Self::status(&inner)
    }

    /// Current attack delta, if an attack is active.
    pub fn attack_delta(&self) -> Option<Image> {
        self.lock().attack.as_ref().map(|a| a.state.delta().clone())
    }

    /// Handles one client message and returns the reply.
    pub fn handle(&self, message: ClientMessage) -> ServerMessage {
        let reply = match message {
            ClientMessage::Update { delta } => self.update_state(&delta).map(|v| ServerMessage::Ack { state_version: v }),
            ClientMessage::SetCapture { groups } => self.set_capture_groups(&groups).map(|_| ServerMessage::Ack {
                state_version: self.state().1,
            }),
            ClientMessage::SetDisplay { as_probability } => self.set_display(as_probability).map(|_| ServerMessage::Ack {
                state_version: self.state().1,
            }),
            ClientMessage::Attack { command } => self.attack_control(command).map(ServerMessage::AttackStatus),
        };
        reply.unwrap_or_else(|e| ServerMessage::from_error(&e))
    }
}
