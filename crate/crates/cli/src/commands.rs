//! Batch subcommands. Each reads its inputs from disk, writes its outputs
//! under `out` and returns a summary for the caller to print.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;

use scenescope::attack::{attack_init, StepOutcome};
use scenescope::fvis::{generate_catalog, CatalogReport, FvisConfig};
use scenescope::metrics::{bench, select_models, topk, yaw_sweep, BenchConfig, BenchReport, FluctuationReport, SweepConfig, TopEntry};
use scenescope::perturb::{apply_pipeline, apply_pre_attack};
use scenescope::service::{load_model_dir, render_config_for};
use scenescope::{AssetLibrary, AttackConfig, AttackMode, Engine, Image, ModelGraph, Norm, SceneState};

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Every model below `dir`; neuron-group sidecars are validated on the way.
pub fn load_models(dir: &Path) -> Result<Vec<ModelGraph>> {
    let (models, _) = load_model_dir(dir)?;
    ensure!(!models.is_empty(), "no model containers found in {}", dir.display());
    Ok(models)
}

fn pick<'a>(models: &'a [ModelGraph], reference: &str) -> Result<&'a ModelGraph> {
    let all: Vec<&ModelGraph> = models.iter().collect();
    let found = select_models(&all, &[reference.to_string()])?;
    match found[..] {
        [m] => Ok(m),
        _ => bail!("`{reference}` matches several checkpoints; use id@checkpoint"),
    }
}

/// Engine rendering at the input size shared by `models`.
fn engine_for(assets: &Path, models: &[&ModelGraph]) -> Result<Engine> {
    let first = models.first().context("no models selected")?;
    for m in models {
        ensure!(
            m.input_shape() == first.input_shape(),
            "{} takes {:?} but {} takes {:?}",
            m.model_id(),
            m.input_shape(),
            first.model_id(),
            first.input_shape()
        );
    }
    let library = AssetLibrary::load(assets)?;
    Ok(Engine::new(Arc::new(library), render_config_for(first)))
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub models: PathBuf,
    pub assets: PathBuf,
    pub out: PathBuf,
}

/// Writes `report.json` (views, prototypes, summaries) and `scores.tsv`.
pub fn sweep(args: &SweepArgs) -> Result<FluctuationReport> {
    let config: SweepConfig = read_json(&args.config)?;
    let models = load_models(&args.models)?;
    let all: Vec<&ModelGraph> = models.iter().collect();
    let selected = select_models(&all, &config.models)?;
    let engine = engine_for(&args.assets, &selected)?;
    let report = yaw_sweep(&config, &engine, &selected)?;
    create_dir(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    std::fs::write(args.out.join("scores.tsv"), report.to_table())?;
    Ok(report)
}

pub struct AttackArgs {
    pub model: String,
    pub scene: Option<PathBuf>,
    pub epsilon: f32,
    pub norm: Norm,
    pub steps: usize,
    /// Targeted mode for this class; suppress the top-1 class otherwise.
    pub target: Option<usize>,
    pub models: PathBuf,
    pub assets: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct AttackStepRecord {
    pub step: usize,
    pub outcome: StepOutcome,
    pub objective: f64,
    pub delta_l2: f64,
    pub delta_linf: f64,
    pub top1: usize,
}

#[derive(Debug, Serialize)]
pub struct AttackReport {
    pub config: AttackConfig,
    pub base_top: Vec<TopEntry>,
    pub final_top: Vec<TopEntry>,
    pub initial_objective: f64,
    pub steps: Vec<AttackStepRecord>,
}

/// Runs `steps` PGD steps on the pre-overlay frame of the scene. Writes
/// `base.png`, `adversarial.png`, `delta.png` (mid-gray is zero, scaled to
/// the largest component), `frame.png` (the full pipeline with the overlay)
/// and `report.json`.
pub fn attack(args: &AttackArgs) -> Result<AttackReport> {
    let models = load_models(&args.models)?;
    let model = pick(&models, &args.model)?;
    let state = match &args.scene {
        Some(p) => SceneState::from_json(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => SceneState::default(),
    };
    let engine = engine_for(&args.assets, &[model])?;
    let base = apply_pre_attack(&engine.render(&state)?, &state)?;
    let config = AttackConfig {
        model: model.model_id().into(),
        mode: match args.target {
            Some(class) => AttackMode::Targeted { class },
            None => AttackMode::Suppress,
        },
        epsilon: args.epsilon,
        norm: args.norm,
    };
    let mut attack = attack_init(model, &base, config.clone())?;
    let top = |img: &Image| -> Result<Vec<TopEntry>> {
        let logits = model.logits(&img.to_tensor())?;
        Ok(topk(model.model_id(), model.labels(), logits.data(), 5, false)?.top)
    };
    let initial_objective = model.objective_value(&base.to_tensor(), attack.objective())?;
    let mut steps = Vec::with_capacity(args.steps);
    for step in 1..=args.steps {
        let outcome = attack.step(model)?;
        let adv = attack.adversarial_image();
        let objective = model.objective_value(&adv.to_tensor(), attack.objective())?;
        let record = AttackStepRecord {
            step,
            outcome,
            objective,
            delta_l2: attack.delta_norm(Norm::L2),
            delta_linf: attack.delta_norm(Norm::Linf),
            top1: top(&adv)?[0].class,
        };
        log::info!(
            "step {step}: objective {:.4}, |d|2 {:.4}, |d|inf {:.4}, top-1 {}",
            record.objective,
            record.delta_l2,
            record.delta_linf,
            record.top1
        );
        steps.push(record);
    }

    create_dir(&args.out)?;
    let adv = attack.adversarial_image();
    base.save_png(&args.out.join("base.png"))?;
    adv.save_png(&args.out.join("adversarial.png"))?;
    let scale = attack.delta_norm(Norm::Linf).max(1e-12) as f32;
    attack.delta().map(|d| 0.5 + 0.5 * d / scale).save_png(&args.out.join("delta.png"))?;
    let rendered = engine.render(&state)?;
    apply_pipeline(&rendered, &state, Some(attack.delta()))?.save_png(&args.out.join("frame.png"))?;
    let report = AttackReport {
        config,
        base_top: top(&base)?,
        final_top: top(&adv)?,
        initial_objective,
        steps,
    };
    write_json(&args.out.join("report.json"), &report)?;
    Ok(report)
}

pub struct FvisArgs {
    pub model: String,
    pub layers: Vec<String>,
    pub steps: Option<usize>,
    pub size: Option<usize>,
    pub seed: u64,
    pub models: PathBuf,
    pub out: PathBuf,
}

/// Both parametrizations for every channel of `layers`. Existing assets in
/// `out/index.json` are kept.
pub fn fvis(args: &FvisArgs) -> Result<CatalogReport> {
    let models = load_models(&args.models)?;
    let model = pick(&models, &args.model)?;
    let mut config = FvisConfig {
        size: args.size,
        seed: args.seed,
        ..FvisConfig::default()
    };
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    let report = generate_catalog(&[model], &args.layers, &config, &args.out)?;
    if !report.failures.is_empty() {
        for (id, e) in &report.failures {
            log::error!("{id}: {e}");
        }
        bail!("{} of {} assets failed", report.failures.len(), report.assets.len() + report.failures.len());
    }
    Ok(report)
}

pub struct BenchArgs {
    pub config: Option<PathBuf>,
    pub models: PathBuf,
    pub assets: PathBuf,
    pub out: Option<PathBuf>,
}

/// Runs every configured run, by default NAV and NAV+PV with one model and
/// NAV+PV with the first two.
pub fn bench_runs(args: &BenchArgs) -> Result<Vec<BenchReport>> {
    let mut config: BenchConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => BenchConfig::default(),
    };
    let models = load_models(&args.models)?;
    if config.runs.is_empty() {
        config.runs = default_runs(&models);
    }
    let all: Vec<&ModelGraph> = models.iter().collect();
    let mut reports = Vec::new();
    for run in &config.runs {
        let selected = select_models(&all, &run.models)?;
        let engine = engine_for(&args.assets, &selected)?;
        let r = bench(
            &engine,
            &selected,
            run.mode,
            config.frames,
            config.yaw_step,
            config.activation_maps,
            &config.base_state,
        )?;
        log::info!("{}: {:.1} fps", r.label, r.fps);
        reports.push(r);
    }
    if let Some(out) = &args.out {
        write_json(out, &reports)?;
    }
    Ok(reports)
}

fn default_runs(models: &[ModelGraph]) -> Vec<scenescope::metrics::BenchRun> {
    use scenescope::metrics::{BenchMode, BenchRun};
    let reference = |m: &ModelGraph| format!("{}@{}", m.model_id(), m.checkpoint());
    let one = vec![reference(&models[0])];
    let mut runs = vec![
        BenchRun {
            mode: BenchMode::Nav,
            models: one.clone(),
        },
        BenchRun {
            mode: BenchMode::NavPv,
            models: one,
        },
    ];
    if let Some(second) = models[1..].iter().find(|m| m.is_comparable(&models[0])) {
        runs.push(BenchRun {
            mode: BenchMode::NavPv,
            models: vec![reference(&models[0]), reference(second)],
        });
    }
    runs
}

pub fn bench_table(reports: &[BenchReport]) -> String {
    let mut out = String::from("run\tframes\tfps\tmean_ms\tp95_ms\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{:.1}\t{:.2}\t{:.2}\n",
            r.label, r.frames, r.fps, r.frame_time.mean_ms, r.frame_time.p95_ms
        ));
    }
    out
}
