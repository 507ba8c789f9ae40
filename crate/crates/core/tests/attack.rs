mod common;

use common::checks::{dyadic_image, linear_closed_form, pgd_invariants, targeted_monotone};
use common::*;
use proptest::prelude::*;
use scenescope::attack::{attack_init, norm_of, pgd_step, project_norm, StepOutcome};
use scenescope::fixtures;
use scenescope::{AttackConfig, AttackMode, Error, Image, Norm, Objective};

fn config(model: &str, mode: AttackMode, epsilon: f32, norm: Norm) -> AttackConfig {
    AttackConfig {
        model: model.into(),
        mode,
        epsilon,
        norm,
    }
}

#[test]
fn ball_and_box_hold_after_every_step() {
    let s = pgd_invariants(4, 10, 7);
    assert_eq!(s.steps, 40);
    assert!(s.max_excess <= 1e-6, "{s:?}");
    assert_eq!(s.box_violations, 0);
}

#[test]
fn one_linf_step_on_the_linear_model_matches_closed_form() {
    for (class, seed) in [(0, 1), (5, 2), (11, 3)] {
        let (bad, ratio) = linear_closed_form(32, class, seed);
        assert_eq!(bad, 0);
        assert_eq!(ratio, 1.0 / 8.0);
    }
}

#[test]
fn one_l2_step_has_length_epsilon_over_eight() {
    let model = fixtures::tinynet_standard().build().unwrap();
    let image = dyadic_image(&mut rng(4), 224);
    let c = config("tinynet-std", AttackMode::Targeted { class: 2 }, 0.8, Norm::L2);
    let mut state = attack_init(&model, &image, c).unwrap();
    assert_eq!(state.config().step_length() / state.config().epsilon, 0.125);
    state.step(&model).unwrap();
    assert!((state.delta_norm(Norm::L2) - 0.1).abs() < 1e-6);
    // direction is the normalized gradient at the base image
    let g = model.input_gradient(&image.to_tensor(), &Objective::Logit { class: 2 }).unwrap();
    let gn = norm_of(g.data(), Norm::L2);
    for (d, gi) in state.delta().data().iter().zip(g.data()) {
        assert!((*d as f64 - 0.1 * *gi as f64 / gn).abs() < 1e-6);
    }
}

#[test]
fn eight_linf_steps_saturate_the_ball() {
    let model = fixtures::linear(64, 5).build().unwrap();
    let image = dyadic_image(&mut rng(5), 64);
    let mut state = attack_init(&model, &image, config("linear", AttackMode::Targeted { class: 4 }, 0.2, Norm::Linf)).unwrap();
    for _ in 0..8 {
        assert_eq!(pgd_step(&model, &mut state).unwrap(), StepOutcome::Stepped);
    }
    assert!((state.delta_norm(Norm::Linf) - 0.2).abs() < 1e-6);
    // constant gradient: every element is pushed to the boundary
    assert!(state.delta().data().iter().all(|d| (d.abs() - 0.2).abs() < 1e-6));
    let adv = state.adversarial_image();
    assert!(adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
    for _ in 0..4 {
        state.step(&model).unwrap();
    }
    assert!(state.delta_norm(Norm::Linf) <= 0.2 + 1e-6);
    assert_eq!(state.steps(), 12);
}

#[test]
fn box_clip_binds_at_saturated_pixels() {
    let model = fixtures::linear(16, 8).build().unwrap();
    let image = Image::from_fn(16, 16, |x, _| if x < 8 { [1.0; 3] } else { [0.0; 3] });
    let mut state = attack_init(&model, &image, config("linear", AttackMode::Targeted { class: 0 }, 0.5, Norm::Linf)).unwrap();
    state.step(&model).unwrap();
    for (b, d) in image.data().iter().zip(state.delta().data()) {
        let v = b + d;
        assert!((0.0..=1.0).contains(&v));
        assert!(if *b == 1.0 { *d <= 0.0 } else { *d >= 0.0 });
    }
}

#[test]
fn zero_epsilon_keeps_delta_zero_and_zero_gradient_stalls() {
    let model = fixtures::tinynet_standard().build().unwrap();
    let image = attack_input(&engine(), &scenescope::SceneState::default());
    let mut state = attack_init(&model, &image, config("tinynet-std", AttackMode::Suppress, 0.0, Norm::L2)).unwrap();
    state.step(&model).unwrap();
    assert!(state.delta().data().iter().all(|&d| d == 0.0));

    let zero = fixtures::tinynet_zero().build().unwrap();
    let mut state = attack_init(&zero, &image, config("tinynet-zero", AttackMode::Suppress, 0.1, Norm::Linf)).unwrap();
    assert_eq!(state.step(&zero).unwrap(), StepOutcome::Stalled);
    assert_eq!(state.steps(), 0);
}

#[test]
fn init_errors_and_reset() {
    let model = fixtures::tinynet_standard().build().unwrap();
    let image = Image::filled(224, 224, [0.5; 3]);
    let bad_class = attack_init(&model, &image, config("tinynet-std", AttackMode::Targeted { class: 12 }, 0.1, Norm::L2));
    assert!(matches!(bad_class, Err(Error::NotFound { kind: "class", .. })));
    let bad_model = attack_init(&model, &image, config("other", AttackMode::Suppress, 0.1, Norm::L2));
    assert!(matches!(bad_model, Err(Error::NotFound { kind: "model", .. })));
    assert!(attack_init(&model, &image, config("tinynet-std", AttackMode::Suppress, -0.1, Norm::L2)).is_err());
    let c = config("tinynet-std", AttackMode::Suppress, 0.1, Norm::L2);
    let mut state = attack_init(&model, &image, c.clone()).unwrap();
    state.step(&model).unwrap();
    let fresh = attack_init(&model, &image, c).unwrap();
    assert_eq!(fresh.steps(), 0);
    assert!(fresh.delta().data().iter().all(|&d| d == 0.0));
}

#[test]
fn suppress_fixes_the_base_top1_class() {
    let model = fixtures::tinynet_standard().build().unwrap();
    let image = attack_input(&engine(), &scenescope::SceneState::default());
    let logits = model.logits(&image.to_tensor()).unwrap();
    let top = (0..12).max_by(|&a, &b| logits.data()[a].total_cmp(&logits.data()[b])).unwrap();
    let mut state = attack_init(&model, &image, config("tinynet-std", AttackMode::Suppress, 0.05, Norm::Linf)).unwrap();
    assert_eq!(state.objective(), &Objective::NegLogit { class: top });
    for _ in 0..6 {
        state.step(&model).unwrap();
    }
    assert_eq!(state.objective(), &Objective::NegLogit { class: top });
    let after = model.logits(&state.adversarial_image().to_tensor()).unwrap();
    assert!(after.data()[top] < logits.data()[top]);
}

#[test]
fn snapshot_ignores_later_scene_changes() {
    let engine = engine();
    let model = fixtures::tinynet_standard().build().unwrap();
    let mut scene = scenescope::SceneState::default();
    let image = attack_input(&engine, &scene);
    let bytes = image.encode_png();
    let mut state = attack_init(&model, &image, config("tinynet-std", AttackMode::Suppress, 0.05, Norm::Linf)).unwrap();
    scene.camera.yaw = 80.0;
    scene.color.saturation = 0.0;
    let moved = attack_input(&engine, &scene);
    assert_ne!(moved, image);
    state.step(&model).unwrap();
    assert_eq!(state.base().encode_png(), bytes);
    assert_eq!(state.base(), &image);
}

#[test]
fn delta_sequence_is_deterministic() {
    let model = fixtures::tinynet_adversarial().build().unwrap();
    let image = attack_input(&engine(), &random_scene(&mut rng(11)));
    let run = || {
        let c = config("tinynet-adv", AttackMode::Targeted { class: 6 }, 0.9, Norm::L2);
        let mut state = attack_init(&model, &image, c).unwrap();
        (0..5)
            .map(|_| {
                state.step(&model).unwrap();
                state.delta().clone()
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn targeted_logit_rises_monotonically_in_most_trials() {
    let (ok, total) = targeted_monotone(12, 2.0 / 255.0, 21);
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
}

proptest! {
    #[test]
    fn projection_matches_arithmetic_oracle(
        v in prop::collection::vec(-2.0f32..2.0, 1..64),
        eps in 0.0f32..1.5,
    ) {
        let mut inf = v.clone();
        project_norm(&mut inf, eps, Norm::Linf);
        for (p, x) in inf.iter().zip(&v) {
            prop_assert_eq!(*p, x.max(-eps).min(eps));
        }
        let mut l2 = v.clone();
        project_norm(&mut l2, eps, Norm::L2);
        let n = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        for (p, x) in l2.iter().zip(&v) {
            let want = if n > eps as f64 { *x as f64 * eps as f64 / n } else { *x as f64 };
            prop_assert!((*p as f64 - want).abs() < 1e-6);
        }
        prop_assert!(norm_of(&l2, Norm::L2) <= eps as f64 + 1e-6);
        let mut twice = l2.clone();
        project_norm(&mut twice, eps, Norm::L2);
        for (a, b) in twice.iter().zip(&l2) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }
}
