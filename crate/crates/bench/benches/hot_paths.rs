use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use scenescope::perturb::apply_pipeline;
use scenescope::tensor::ops::{conv2d_forward, conv2d_vjp};
use scenescope::{fixtures, Objective, SceneState, Tensor};
use scenescope_bench::{busy_scene, fixture_engine};

fn wave(shape: &[usize], k: f32) -> Tensor {
    Tensor::from_fn(shape, |i| (i as f32 * k).sin())
}

fn conv(c: &mut Criterion) {
    let input = wave(&[8, 112, 112], 0.37);
    let weights = wave(&[16, 8, 3, 3], 0.91);
    let bias = Tensor::zeros(&[16]);
    let upstream = wave(&[16, 112, 112], 0.13);
    c.bench_function("conv2d forward 8->16 3x3 @112", |b| {
        b.iter(|| conv2d_forward(black_box(&input), &weights, &bias, 1, 1).unwrap())
    });
    c.bench_function("conv2d vjp 8->16 3x3 @112", |b| {
        b.iter(|| conv2d_vjp(black_box(&input), &weights, 1, 1, &upstream).unwrap())
    });
}

fn scene(c: &mut Criterion) {
    let engine = fixture_engine();
    let neutral = SceneState::default();
    let busy = busy_scene();
    c.bench_function("render 224", |b| b.iter(|| engine.render(black_box(&neutral)).unwrap()));
    let img = engine.render(&busy).unwrap();
    c.bench_function("pipeline all stages 224", |b| {
        b.iter(|| apply_pipeline(black_box(&img), &busy, None).unwrap())
    });
}

fn model(c: &mut Criterion) {
    let engine = fixture_engine();
    let model = fixtures::tinynet_standard().build().unwrap();
    let input = engine.render(&SceneState::default()).unwrap().to_tensor();
    let objective = Objective::Logit { class: 3 };
    c.bench_function("tinynet logits", |b| b.iter(|| model.logits(black_box(&input)).unwrap()));
    c.bench_function("tinynet input gradient", |b| {
        b.iter(|| model.input_gradient(black_box(&input), &objective).unwrap())
    });
}

fn frame_loop(c: &mut Criterion) {
    let engine = fixture_engine();
    let std = fixtures::tinynet_standard().build().unwrap();
    let adv = fixtures::tinynet_adversarial().build().unwrap();
    let state = busy_scene();
    let capture = ["relu1", "relu2"];
    let mut g = c.benchmark_group("one frame");
    for (name, models) in [("x1", vec![&std]), ("x2", vec![&std, &adv])] {
        g.bench_function(name, |b| {
            b.iter(|| {
                let input = engine.frame(black_box(&state), None).unwrap().to_tensor();
                for m in &models {
                    black_box(m.forward(&input, &capture).unwrap());
                }
            })
        });
    }
    g.finish();
}

criterion_group!(benches, conv, scene, model, frame_loop);
criterion_main!(benches);
