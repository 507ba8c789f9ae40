//! Batch generation of feature-visualization assets into a content-addressed
//! directory: `<id>.png` per asset plus `index.json`.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{asset_id, feature_vis, FvisConfig, Parametrization};
use crate::error::{Error, Result};
use crate::model::ModelGraph;

pub const INDEX_FILE: &str = "index.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FvisAsset {
    pub id: String,
    pub model_id: String,
    pub checkpoint: String,
    pub node: String,
    pub channel: usize,
    pub parametrization: Parametrization,
    pub file: String,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub dead: bool,
}

#[derive(Clone, Debug, Default)]
pub struct CatalogReport {
    /// Every requested asset that exists after the run, in request order.
    pub assets: Vec<FvisAsset>,
    pub generated: usize,
    pub skipped: usize,
    /// `(asset id, error)` for assets that could not be produced.
    pub failures: Vec<(String, String)>,
}

pub fn read_index(dir: &Path) -> Result<BTreeMap<String, FvisAsset>> {
    let path = dir.join(INDEX_FILE);
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let list: Vec<FvisAsset> = serde_json::from_str(&text).map_err(|e| Error::parse("fvis index", e))?;
    Ok(list.into_iter().map(|a| (a.id.clone(), a)).collect())
}

fn write_index(dir: &Path, index: &BTreeMap<String, FvisAsset>) -> Result<()> {
    let path = dir.join(INDEX_FILE);
    let list: Vec<&FvisAsset> = index.values().collect();
    let text = serde_json::to_string_pretty(&list).expect("index serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

struct Job<'a> {
    model: &'a ModelGraph,
    node: String,
    channel: usize,
    parametrization: Parametrization,
    id: String,
}

/// Seed for one asset, independent of job order.
fn job_seed(base: u64, id: &str) -> u64 {
    base ^ u64::from_str_radix(id, 16).unwrap_or(0)
}

/// Generates every channel of every `layers` node of every model under both
/// parametrizations, skipping assets already present in the index. The
/// parametrization in `config` is ignored.
pub fn generate_catalog(models: &[&ModelGraph], layers: &[String], config: &FvisConfig, dir: &Path) -> Result<CatalogReport> {
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut index = read_index(dir)?;

    let mut jobs = Vec::new();
    for model in models {
        for node in layers {
            if !model.capture_nodes().contains(node) {
                return Err(Error::param(
                    "layers",
                    format!("`{node}` is not capture-eligible in {}", model.model_id()),
                ));
            }
            for channel in 0..model.channels(node).unwrap_or(0) {
                for p in Parametrization::ALL {
                    jobs.push(Job {
                        model,
                        node: node.clone(),
                        channel,
                        parametrization: p,
                        id: asset_id(model.model_id(), model.checkpoint(), node, channel, p),
                    });
                }
            }
        }
    }

    let exists = |id: &str| index.get(id).is_some_and(|a| dir.join(&a.file).is_file());
    let (done, todo): (Vec<&Job>, Vec<&Job>) = jobs.iter().partition(|j| exists(&j.id));
    let skipped = done.len();

    let results: Vec<(String, Result<FvisAsset>)> = todo
        .par_iter()
        .map(|job| {
            let run = || -> Result<FvisAsset> {
                let cfg = FvisConfig {
                    parametrization: job.parametrization,
                    seed: job_seed(config.seed, &job.id),
                    ..config.clone()
                };
                let r = feature_vis(job.model, &job.node, job.channel, &cfg)?;
                let file = format!("{}.png", job.id);
                r.image.save_png(&dir.join(&file))?;
                Ok(FvisAsset {
                    id: job.id.clone(),
                    model_id: job.model.model_id().into(),
                    checkpoint: job.model.checkpoint().into(),
                    node: job.node.clone(),
                    channel: job.channel,
                    parametrization: job.parametrization,
                    file,
                    initial_objective: r.initial_objective,
                    final_objective: r.final_objective,
                    dead: r.dead,
                })
            };
            (job.id.clone(), run())
        })
        .collect();

    let mut report = CatalogReport {
        skipped,
        ..Default::default()
    };
    for (id, r) in results {
        match r {
            Ok(asset) => {
                report.generated += 1;
                index.insert(id, asset);
            }
            Err(e) => {
                log::error!("fvis asset {id}: {e}");
                report.failures.push((id, e.to_string()));
            }
        }
    }
    if report.generated > 0 {
        write_index(dir, &index)?;
    }
    report.assets = jobs.iter().filter_map(|j| index.get(&j.id).cloned()).collect();
    Ok(report)
}
