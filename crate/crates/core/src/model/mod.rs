//! Model containers, DAG validation, forward passes with activation capture,
//! and input gradients of scalar objectives.

mod activation;
mod groups;
mod manifest;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ops, read_blob, write_blob, OpSpec, Tensor};

pub use activation::{activation_map, diverging_rgb, map_from_tensor, ActivationMap, ActivationStore, VMAX_EPSILON};
pub use groups::{NeuronGroup, NeuronGroupCatalog};
pub use manifest::{Manifest, NodeSpec, Normalization, INPUT_NODE, MANIFEST_FILE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Input,
    Node(usize),
}

#[derive(Clone, Debug)]
struct Node {
    id: String,
    op: OpSpec,
    inputs: Vec<Source>,
    shape: Vec<usize>,
    params: Option<(Tensor, Tensor)>,
}

/// Scalar objectives whose input gradient can be requested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Logit { class: usize },
    NegLogit { class: usize },
    /// Spatial mean of one channel of a node output.
    MeanActivation { node: String, channel: usize },
}

/// A validated model graph with nodes in topological order.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    manifest: Manifest,
    nodes: Vec<Node>,
    index: HashMap<String, usize>,
    output: usize,
}

/// Loads and validates a model container directory.
pub fn load_model(dir: &Path) -> Result<ModelGraph> {
    let manifest = Manifest::read(dir)?;
    let mut blobs = HashMap::new();
    for node in &manifest.nodes {
        if let Some(file) = &node.blob {
            let path = dir.join(file);
            if !path.is_file() {
                return Err(Error::MissingBlob {
                    node: node.id.clone(),
                    path,
                });
            }
            blobs.insert(node.id.clone(), read_blob(&path)?);
        }
    }
    ModelGraph::from_parts(manifest, blobs)
}

/// Writes a container directory: the manifest plus one blob per weighted
/// node, named by the node's `blob` field.
pub fn save_model(dir: &Path, manifest: &Manifest, blobs: &HashMap<String, Vec<f32>>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for node in &manifest.nodes {
        if let Some(file) = &node.blob {
            let values = blobs.get(&node.id).ok_or_else(|| Error::MissingBlob {
                node: node.id.clone(),
                path: dir.join(file),
            })?;
            write_blob(&dir.join(file), values)?;
        }
    }
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))
}

impl ModelGraph {
    /// Validates a manifest against in-memory weight blobs keyed by node id.
    pub fn from_parts(manifest: Manifest, mut blobs: HashMap<String, Vec<f32>>) -> Result<Self> {
        if manifest.input_shape.len() != 3 || manifest.input_shape.contains(&0) {
            return Err(Error::shape(format!(
                "input shape {:?} must be [C, H, W]",
                manifest.input_shape
            )));
        }
        let channels = manifest.input_shape[0];
        let norm = &manifest.normalization;
        if norm.mean.len() != channels || norm.std.len() != channels {
            return Err(Error::param(
                "normalization",
                format!("needs {channels} mean and std values"),
            ));
        }
        if norm.std.iter().any(|&s| !(s > 0.0 && s.is_finite())) || norm.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::param("normalization", "std must be positive and finite"));
        }

        let mut positions = HashMap::new();
        for (i, node) in manifest.nodes.iter().enumerate() {
            if node.id == INPUT_NODE {
                return Err(Error::graph(&node.id, "node id is reserved for the image input"));
            }
            if positions.insert(node.id.as_str(), i).is_some() {
                return Err(Error::graph(&node.id, "duplicate node id"));
            }
            node.op.validate().map_err(|e| Error::graph(&node.id, e.to_string()))?;
        }
        for node in &manifest.nodes {
            for input in &node.inputs {
                if input != INPUT_NODE && !positions.contains_key(input.as_str()) {
                    return Err(Error::graph(&node.id, format!("dangling input reference `{input}`")));
                }
            }
        }

        let order = topological_order(&manifest.nodes, &positions)?;

        let mut index = HashMap::new();
        let mut nodes: Vec<Node> = Vec::with_capacity(order.len());
        for &spec_idx in &order {
            let spec = &manifest.nodes[spec_idx];
            let inputs: Vec<Source> = spec
                .inputs
                .iter()
                .map(|name| {
                    if name == INPUT_NODE {
                        Source::Input
                    } else {
                        Source::Node(index[name.as_str()])
                    }
                })
                .collect();
            let input_shapes: Vec<&[usize]> = inputs
                .iter()
                .map(|s| match s {
                    Source::Input => manifest.input_shape.as_slice(),
                    Source::Node(i) => nodes[*i].shape.as_slice(),
                })
                .collect();
            let shape = spec
                .op
                .output_shape(&input_shapes)
                .map_err(|e| Error::graph(&spec.id, e.to_string()))?;

            let params = match (spec.op.param_shapes(), &spec.blob) {
                (Some((wshape, bshape)), Some(_)) => {
                    let data = blobs.remove(&spec.id).ok_or_else(|| Error::MissingBlob {
                        node: spec.id.clone(),
                        path: spec.blob.clone().unwrap_or_default().into(),
                    })?;
                    let wlen: usize = wshape.iter().product();
                    let blen: usize = bshape.iter().product();
                    if data.len() != wlen + blen {
                        return Err(Error::graph(
                            &spec.id,
                            format!(
                                "weight blob has {} elements, expected {} ({wshape:?} weights + {bshape:?} bias)",
                                data.len(),
                                wlen + blen
                            ),
                        ));
                    }
                    let mut data = data;
                    let bias = data.split_off(wlen);
                    let w = Tensor::new(wshape, data).map_err(|e| Error::graph(&spec.id, e.to_string()))?;
                    let b = Tensor::new(bshape, bias).map_err(|e| Error::graph(&spec.id, e.to_string()))?;
                    Some((w, b))
                }
                (Some(_), None) => {
                    return Err(Error::graph(&spec.id, "weighted op declares no blob"));
                }
                (None, Some(_)) => {
                    return Err(Error::graph(&spec.id, "op takes no weights but declares a blob"));
                }
                (None, None) => None,
            };

            index.insert(spec.id.clone(), nodes.len());
            nodes.push(Node {
                id: spec.id.clone(),
                op: spec.op.clone(),
                inputs,
                shape,
                params,
            });
        }

        let output = *index
            .get(manifest.output.as_str())
            .ok_or_else(|| Error::graph(&manifest.output, "output node does not exist"))?;
        let out_shape = &nodes[output].shape;
        if out_shape.as_slice() != [manifest.labels.len()] {
            return Err(Error::graph(
                &manifest.output,
                format!(
                    "output shape {out_shape:?} does not match {} class labels",
                    manifest.labels.len()
                ),
            ));
        }
        for name in &manifest.capture_nodes {
            if !index.contains_key(name.as_str()) {
                return Err(Error::graph(name, "capture node does not exist"));
            }
        }

        Ok(Self {
            manifest,
            nodes,
            index,
            output,
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn model_id(&self) -> &str {
        &self.manifest.model_id
    }

    pub fn checkpoint(&self) -> &str {
        &self.manifest.checkpoint
    }

    pub fn labels(&self) -> &[String] {
        &self.manifest.labels
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.manifest.input_shape
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Node ids in execution order.
    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    pub fn node_shape(&self, id: &str) -> Option<&[usize]> {
        self.index.get(id).map(|&i| self.nodes[i].shape.as_slice())
    }

    pub fn node_op(&self, id: &str) -> Option<&OpSpec> {
        self.index.get(id).map(|&i| &self.nodes[i].op)
    }

    pub fn output_id(&self) -> &str {
        &self.nodes[self.output].id
    }

    /// Nodes whose activations may be captured or visualized.
    pub fn capture_nodes(&self) -> &[String] {
        &self.manifest.capture_nodes
    }

    /// Channel count of a node output (first dimension).
    pub fn channels(&self, id: &str) -> Option<usize> {
        self.node_shape(id).map(|s| s[0])
    }

    /// Checks that `other` shares this graph's architecture: node names, ops
    /// and shapes. Weights may differ.
    pub fn check_comparable(&self, other: &ModelGraph) -> Result<()> {
        if self.input_shape() != other.input_shape() {
            return Err(Error::Incomparable(format!(
                "input shapes {:?} and {:?} differ",
                self.input_shape(),
                other.input_shape()
            )));
        }
        if self.nodes.len() != other.nodes.len() {
            return Err(Error::Incomparable(format!(
                "{} has {} nodes, {} has {}",
                self.model_id(),
                self.nodes.len(),
                other.model_id(),
                other.nodes.len()
            )));
        }
        for a in &self.nodes {
            let Some(&j) = other.index.get(&a.id) else {
                return Err(Error::Incomparable(format!(
                    "node `{}` missing from {}",
                    a.id,
                    other.model_id()
                )));
            };
            let b = &other.nodes[j];
            if a.op != b.op || a.shape != b.shape {
                return Err(Error::Incomparable(format!("node `{}` differs in op or shape", a.id)));
            }
        }
        Ok(())
    }

    pub fn is_comparable(&self, other: &ModelGraph) -> bool {
        self.check_comparable(other).is_ok()
    }

    fn node_index(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::NotFound {
            kind: "node",
            id: id.to_string(),
        })
    }

    fn normalize(&self, image: &Tensor) -> Result<Tensor> {
        if image.shape() != self.input_shape() {
            return Err(Error::shape(format!(
                "image shape {:?} does not match model input {:?}",
                image.shape(),
                self.input_shape()
            )));
        }
        let (_, h, w) = image.dims3()?;
        let plane = h * w;
        let norm = &self.manifest.normalization;
        Ok(Tensor::from_fn(image.shape(), |i| {
            let c = i / plane;
            (image.data()[i] - norm.mean[c]) / norm.std[c]
        }))
    }

    /// Marks every node needed to compute `targets`.
    fn ancestors(&self, targets: &[usize]) -> Vec<bool> {
        let mut needed = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = targets.to_vec();
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut needed[i], true) {
                continue;
            }
            for src in &self.nodes[i].inputs {
                if let Source::Node(j) = src {
                    stack.push(*j);
                }
            }
        }
        needed
    }

    fn evaluate(&self, input: &Tensor, needed: &[bool]) -> Result<Vec<Option<Tensor>>> {
        let mut values: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if !needed[i] {
                continue;
            }
            let args: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|s| match s {
                    Source::Input => input,
                    Source::Node(j) => values[*j].as_ref().expect("inputs evaluated first"),
                })
                .collect();
            let out = apply_op(node, &args).map_err(|e| Error::graph(&node.id, e.to_string()))?;
            values[i] = Some(out);
        }
        Ok(values)
    }

    /// Node indices of `capture`, first occurrence only.
    fn capture_indices<S: AsRef<str>>(&self, capture: &[S]) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = Vec::with_capacity(capture.len());
        for c in capture {
            let i = self.node_index(c.as_ref())?;
            if !out.contains(&i) {
                out.push(i);
            }
        }
        Ok(out)
    }

    /// Full forward pass: logits plus the outputs of the requested nodes.
    pub fn forward<S: AsRef<str>>(&self, image: &Tensor, capture: &[S]) -> Result<ActivationStore> {
        let captured = self.capture_indices(capture)?;
        let input = self.normalize(image)?;
        let mut targets = captured.clone();
        targets.push(self.output);
        let mut values = self.evaluate(&input, &self.ancestors(&targets))?;
        let logits = values[self.output].clone().expect("output evaluated");
        let activations = captured
            .into_iter()
            .map(|i| (self.nodes[i].id.clone(), values[i].take().expect("captured node evaluated")))
            .collect::<BTreeMap<_, _>>();
        Ok(ActivationStore {
            model_id: self.model_id().to_string(),
            checkpoint: self.checkpoint().to_string(),
            logits,
            activations,
        })
    }

    /// Evaluates only what the captured nodes depend on; no logits.
    pub fn capture_only<S: AsRef<str>>(&self, image: &Tensor, capture: &[S]) -> Result<BTreeMap<String, Tensor>> {
        let captured = self.capture_indices(capture)?;
        let input = self.normalize(image)?;
        let mut values = self.evaluate(&input, &self.ancestors(&captured))?;
        Ok(captured
            .into_iter()
            .map(|i| (self.nodes[i].id.clone(), values[i].take().expect("captured node evaluated")))
            .collect())
    }

    pub fn logits(&self, image: &Tensor) -> Result<Tensor> {
        Ok(self.forward::<&str>(image, &[])?.logits)
    }

    fn objective_seed(&self, objective: &Objective) -> Result<(usize, Tensor)> {
        let classes = self.labels().len();
        match objective {
            Objective::Logit { class } | Objective::NegLogit { class } => {
                if *class >= classes {
                    return Err(Error::NotFound {
                        kind: "class",
                        id: class.to_string(),
                    });
                }
                let sign = if matches!(objective, Objective::Logit { .. }) { 1.0 } else { -1.0 };
                let seed = Tensor::from_fn(&[classes], |i| if i == *class { sign } else { 0.0 });
                Ok((self.output, seed))
            }
            Objective::MeanActivation { node, channel } => {
                let idx = self.node_index(node)?;
                let shape = &self.nodes[idx].shape;
                if *channel >= shape[0] {
                    return Err(Error::param(
                        "channel",
                        format!("channel {channel} out of range for node `{node}` with {} channels", shape[0]),
                    ));
                }
                let plane: usize = shape[1..].iter().product();
                let weight = 1.0 / plane as f32;
                let seed = Tensor::from_fn(shape, |i| if i / plane == *channel { weight } else { 0.0 });
                Ok((idx, seed))
            }
        }
    }

    /// Scalar value of an objective at `image`.
    pub fn objective_value(&self, image: &Tensor, objective: &Objective) -> Result<f64> {
        let (target, seed) = self.objective_seed(objective)?;
        let input = self.normalize(image)?;
        let values = self.evaluate(&input, &self.ancestors(&[target]))?;
        let out = values[target].as_ref().expect("target evaluated");
        Ok(out
            .data()
            .iter()
            .zip(seed.data())
            .map(|(&v, &s)| v as f64 * s as f64)
            .sum())
    }

    /// Gradient of the objective with respect to the un-normalized `[0, 1]`
    /// image.
    pub fn input_gradient(&self, image: &Tensor, objective: &Objective) -> Result<Tensor> {
        Ok(self.value_and_gradient(image, objective)?.1)
    }

    pub fn value_and_gradient(&self, image: &Tensor, objective: &Objective) -> Result<(f64, Tensor)> {
        let (target, seed) = self.objective_seed(objective)?;
        let input = self.normalize(image)?;
        let needed = self.ancestors(&[target]);
        let values = self.evaluate(&input, &needed)?;
        let value = values[target]
            .as_ref()
            .expect("target evaluated")
            .data()
            .iter()
            .zip(seed.data())
            .map(|(&v, &s)| v as f64 * s as f64)
            .sum();

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[target] = Some(seed);
        let mut input_grad: Option<Tensor> = None;
        for i in (0..=target).rev() {
            let Some(upstream) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let args: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|s| match s {
                    Source::Input => &input,
                    Source::Node(j) => values[*j].as_ref().expect("ancestor evaluated"),
                })
                .collect();
            let out = values[i].as_ref().expect("ancestor evaluated");
            let input_grads = apply_vjp(node, &args, out, &upstream).map_err(|e| Error::graph(&node.id, e.to_string()))?;
            for (src, g) in node.inputs.iter().zip(input_grads) {
                let slot = match src {
                    Source::Input => &mut input_grad,
                    Source::Node(j) => &mut grads[*j],
                };
                *slot = Some(match slot.take() {
                    Some(acc) => acc.zip_map(&g, |a, b| a + b)?,
                    None => g,
                });
            }
        }

        let (_, h, w) = input.dims3()?;
        let plane = h * w;
        let std = &self.manifest.normalization.std;
        let grad = match input_grad {
            Some(g) => Tensor::from_fn(g.shape(), |i| g.data()[i] / std[i / plane]),
            None => Tensor::zeros(input.shape()),
        };
        Ok((value, grad))
    }
}

fn apply_op(node: &Node, args: &[&Tensor]) -> Result<Tensor> {
    match node.op {
        OpSpec::Conv2d { stride, padding, .. } => {
            let (w, b) = node.params.as_ref().expect("validated params");
            ops::conv2d_forward(args[0], w, b, stride, padding)
        }
        OpSpec::Relu => Ok(ops::relu_forward(args[0])),
        OpSpec::MaxPool2d { kernel, stride, padding } => ops::maxpool2d_forward(args[0], kernel, stride, padding),
        OpSpec::AvgPool2d { kernel, stride, padding } => ops::avgpool2d_forward(args[0], kernel, stride, padding),
        OpSpec::Dense { .. } => {
            let (w, b) = node.params.as_ref().expect("validated params");
            ops::dense_forward(args[0], w, b)
        }
        OpSpec::Concat { axis } => ops::concat_forward(args, axis),
        OpSpec::Softmax => Ok(ops::softmax_forward(args[0])),
        OpSpec::Add => ops::add_forward(args[0], args[1]),
        OpSpec::GlobalAvgPool => ops::global_avgpool_forward(args[0]),
    }
}

fn apply_vjp(node: &Node, args: &[&Tensor], _output: &Tensor, upstream: &Tensor) -> Result<Vec<Tensor>> {
    Ok(match node.op {
        OpSpec::Conv2d { stride, padding, .. } => {
            let (w, _) = node.params.as_ref().expect("validated params");
            vec![ops::conv2d_vjp(args[0], w, stride, padding, upstream)?]
        }
        OpSpec::Relu => vec![ops::relu_vjp(args[0], upstream)?],
        OpSpec::MaxPool2d { kernel, stride, padding } => {
            vec![ops::maxpool2d_vjp(args[0], kernel, stride, padding, upstream)?]
        }
        OpSpec::AvgPool2d { kernel, stride, padding } => {
            vec![ops::avgpool2d_vjp(args[0], kernel, stride, padding, upstream)?]
        }
        OpSpec::Dense { .. } => {
            let (w, _) = node.params.as_ref().expect("validated params");
            vec![ops::dense_vjp(args[0], w, upstream)?]
        }
        OpSpec::Concat { axis } => {
            let shapes: Vec<&[usize]> = args.iter().map(|t| t.shape()).collect();
            ops::concat_vjp(&shapes, axis, upstream)?
        }
        OpSpec::Softmax => vec![ops::softmax_vjp(args[0], upstream)?],
        OpSpec::Add => vec![upstream.clone(), upstream.clone()],
        OpSpec::GlobalAvgPool => vec![ops::global_avgpool_vjp(args[0], upstream)?],
    })
}

/// Kahn's algorithm, stable in manifest order. On failure, reports one cycle.
fn topological_order(nodes: &[NodeSpec], positions: &HashMap<&str, usize>) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut indegree = vec![0usize; n];
    let mut consumers: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, node) in nodes.iter().enumerate() {
        for input in &node.inputs {
            if let Some(&j) = positions.get(input.as_str()) {
                indegree[i] += 1;
                consumers[j].push(i);
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &consumers[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Walk predecessor links among the unresolved nodes until one repeats.
    let stuck: HashSet<usize> = (0..n).filter(|&i| indegree[i] > 0).collect();
    let start = *stuck.iter().min().expect("unresolved nodes exist");
    let mut path = vec![start];
    let mut seen = HashMap::from([(start, 0usize)]);
    let mut cur = start;
    loop {
        let next = nodes[cur]
            .inputs
            .iter()
            .filter_map(|name| positions.get(name.as_str()).copied())
            .find(|j| stuck.contains(j))
            .expect("unresolved node has an unresolved input");
        if let Some(&pos) = seen.get(&next) {
            let mut cycle: Vec<String> = path[pos..].iter().rev().map(|&i| nodes[i].id.clone()).collect();
            cycle.sort();
            return Err(Error::Cycle { nodes: cycle });
        }
        seen.insert(next, path.len());
        path.push(next);
        cur = next;
    }
}
