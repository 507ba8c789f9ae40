mod common;

use std::time::Instant;

use common::checks::{directional_gradients, fvis_grid, resized};
use scenescope::fixtures;
use scenescope::fvis::{asset_id, feature_vis, generate_catalog, FvisConfig, Parametrization, TransformConfig, INDEX_FILE};

fn small_std() -> scenescope::ModelGraph {
    resized(fixtures::tinynet_standard(), 64).build().unwrap()
}

#[test]
fn zero_steps_rejected_and_one_step_moves() {
    let m = small_std();
    let zero = FvisConfig {
        steps: 0,
        ..FvisConfig::default()
    };
    assert!(feature_vis(&m, "relu1", 0, &zero).is_err());
    for p in Parametrization::ALL {
        let c = |steps| FvisConfig {
            steps,
            parametrization: p,
            ..FvisConfig::default()
        };
        let init = feature_vis(&m, "relu1", 1, &FvisConfig { warmup: 0, ..c(1) }).unwrap();
        assert!(init.dead);
        let one = feature_vis(&m, "relu1", 1, &c(1)).unwrap();
        assert!(!one.dead);
        assert_ne!(one.image.data(), init.image.data());
    }
}

#[test]
fn invalid_targets() {
    let m = small_std();
    let c = FvisConfig {
        steps: 1,
        ..FvisConfig::default()
    };
    assert!(feature_vis(&m, "conv1", 0, &c).is_err());
    assert!(feature_vis(&m, "relu1", 8, &c).is_err());
    assert!(feature_vis(&m, "nope", 0, &c).is_err());
}

/// Channel 0 of the first conv layer is a Sobel-x filter, which responds to
/// intensity changes along x.
#[test]
fn sobel_channel_grows_horizontal_gradients() {
    let m = small_std();
    for p in Parametrization::ALL {
        let c = FvisConfig {
            parametrization: p,
            steps: 64,
            seed: 3,
            ..FvisConfig::default()
        };
        let r = feature_vis(&m, "relu1", 0, &c).unwrap();
        let (gx, gy) = directional_gradients(&r.image);
        assert!(gx > gy, "{p:?}: {gx} vs {gy}");
        assert!(r.final_objective > r.initial_objective);
    }
}

#[test]
fn fixed_seed_is_deterministic() {
    let m = small_std();
    let c = FvisConfig {
        steps: 8,
        seed: 11,
        ..FvisConfig::default()
    };
    let a = feature_vis(&m, "mixed", 3, &c).unwrap();
    let b = feature_vis(&m, "mixed", 3, &c).unwrap();
    assert_eq!(a.image.encode_png(), b.image.encode_png());
    let other = feature_vis(&m, "mixed", 3, &FvisConfig { seed: 12, ..c }).unwrap();
    assert_ne!(a.image, other.image);
}

#[test]
fn dead_channel_yields_gray() {
    let zero = resized(fixtures::tinynet_zero(), 32).build().unwrap();
    let r = feature_vis(&zero, "relu2", 1, &FvisConfig::default()).unwrap();
    assert!(r.dead);
    assert!(r.image.data().iter().all(|&v| v == 0.5));
}

#[test]
fn catalog_counts_reruns_and_empty_layers() {
    let dir = tempfile::tempdir().unwrap();
    let m = small_std();
    let config = FvisConfig {
        steps: 4,
        transform: TransformConfig::none(),
        ..FvisConfig::default()
    };
    let empty = generate_catalog(&[&m], &[], &config, dir.path()).unwrap();
    assert!(empty.assets.is_empty() && empty.generated == 0);
    assert!(!dir.path().join(INDEX_FILE).exists());

    let layers = vec!["relu1".to_string(), "mixed".into()];
    let first = generate_catalog(&[&m], &layers, &config, dir.path()).unwrap();
    assert_eq!(first.assets.len(), (8 + 16) * 2);
    assert_eq!((first.generated, first.skipped), (48, 0));
    let want = asset_id("tinynet-std", "final", "mixed", 15, Parametrization::FourierBasis);
    assert!(first.assets.iter().any(|a| a.id == want));
    let png = dir.path().join(format!("{want}.png"));
    let bytes = std::fs::read(&png).unwrap();
    let modified = std::fs::metadata(&png).unwrap().modified().unwrap();

    let t = Instant::now();
    let second = generate_catalog(&[&m], &layers, &config, dir.path()).unwrap();
    assert_eq!((second.generated, second.skipped), (0, 48));
    assert_eq!(second.assets, first.assets);
    assert_eq!(std::fs::metadata(&png).unwrap().modified().unwrap(), modified);
    assert!(t.elapsed().as_secs_f64() < 1.0);

    // a removed file is regenerated with identical bytes
    std::fs::remove_file(&png).unwrap();
    let third = generate_catalog(&[&m], &layers, &config, dir.path()).unwrap();
    assert_eq!(third.generated, 1);
    assert_eq!(std::fs::read(&png).unwrap(), bytes);

    assert!(generate_catalog(&[&m], &["conv1".into()], &config, dir.path()).is_err());
}

#[test]
fn small_grid_ascends() {
    let dir = tempfile::tempdir().unwrap();
    let g = fvis_grid(dir.path(), 64, 64, 1);
    assert_eq!((g.assets, g.channels, g.failures), (64, 32, 0));
    assert!(g.ascended as f64 >= 0.99 * g.assets as f64, "{g:?}");
}
