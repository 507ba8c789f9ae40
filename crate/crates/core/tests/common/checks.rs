//! Measurements shared by the per-module tests and the acceptance report.

#![allow(dead_code)]

use rand::Rng;
use scenescope::fixtures::ModelParts;
use scenescope::tensor::ops;
use scenescope::{Image, Tensor};

use super::*;

pub const FD_STEP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default)]
pub struct GradStats {
    pub probes: usize,
    /// Probes discarded because a ReLU or pool decision flipped inside the
    /// difference stencil.
    pub redraws: usize,
    pub max_rel: f64,
}

impl GradStats {
    pub fn merge(&mut self, o: GradStats) {
        self.probes += o.probes;
        self.redraws += o.redraws;
        self.max_rel = self.max_rel.max(o.max_rel);
    }
}

/// Checks `vjp(x, u)` against central differences of `sum(forward(x) * u)`
/// at every input element.
fn op_probe(
    rng: &mut impl Rng,
    x: &Tensor,
    forward: impl Fn(&Arr) -> (Arr, Pattern),
    vjp: impl Fn(&Tensor, &Tensor) -> Tensor,
) -> GradStats {
    let base = Arr::of(x);
    let (out, p0) = forward(&base);
    let u = random_tensor(rng, &out.shape, -1.0, 1.0);
    let ud = to_f64(&u);
    let analytic = vjp(x, &u);
    let f = |a: &Arr| {
        let (o, p) = forward(a);
        (o.data.iter().zip(&ud).map(|(a, b)| a * b).sum::<f64>(), p)
    };
    let mut s = GradStats::default();
    for i in 0..base.data.len() {
        let mut plus = base.clone();
        plus.data[i] += FD_STEP;
        let mut minus = base.clone();
        minus.data[i] -= FD_STEP;
        let ((fp, pp), (fm, pm)) = (f(&plus), f(&minus));
        if pp != p0 || pm != p0 {
            s.redraws += 1;
            continue;
        }
        let fd = (fp - fm) / (2.0 * FD_STEP);
        s.probes += 1;
        s.max_rel = s.max_rel.max(rel_err(analytic.data()[i] as f64, fd));
    }
    s
}

/// Every op with a VJP, on random small tensors.
pub fn op_gradients(seed: u64) -> Vec<(&'static str, GradStats)> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let none = |a: Arr| (a, Pattern::default());

    let mut conv_stats = GradStats::default();
    for _ in 0..4 {
        let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
        let k = r.random_range(1..4);
        let (stride, pad) = (r.random_range(1..3), r.random_range(0..2));
        let (h, w) = (r.random_range(k..7), r.random_range(k..7));
        let x = random_tensor(&mut r, &[cin, h, w], -1.0, 1.0);
        let wt = random_tensor(&mut r, &[cout, cin, k, k], -1.0, 1.0);
        let b = random_tensor(&mut r, &[cout], -1.0, 1.0);
        let (wd, bd) = (to_f64(&wt), to_f64(&b));
        conv_stats.merge(op_probe(
            &mut r,
            &x,
            |a| none(conv(a, &wd, &bd, cout, k, stride, pad)),
            |x, u| ops::conv2d_vjp(x, &wt, stride, pad, u).unwrap(),
        ));
    }
    out.push(("conv2d", conv_stats));

    let x = random_tensor(&mut r, &[2, 5, 6], -1.0, 1.0);
    out.push((
        "relu",
        op_probe(&mut r, &x, |a| {
            let mut p = Pattern::default();
            (relu(a, &mut p), p)
        }, |x, u| ops::relu_vjp(x, u).unwrap()),
    ));

    let mut pool_stats = GradStats::default();
    for (k, s, p) in [(2, 2, 0), (3, 2, 1), (3, 1, 0)] {
        let x = random_tensor(&mut r, &[2, 6, 7], -1.0, 1.0);
        pool_stats.merge(op_probe(
            &mut r,
            &x,
            |a| {
                let mut pat = Pattern::default();
                (pool(a, k, s, p, true, &mut pat), pat)
            },
            |x, u| ops::maxpool2d_vjp(x, k, s, p, u).unwrap(),
        ));
    }
    out.push(("maxpool2d", pool_stats));

    let mut avg_stats = GradStats::default();
    for (k, s, p) in [(2, 2, 0), (3, 1, 1)] {
        let x = random_tensor(&mut r, &[2, 5, 6], -1.0, 1.0);
        avg_stats.merge(op_probe(
            &mut r,
            &x,
            |a| none(pool(a, k, s, p, false, &mut Pattern::default())),
            |x, u| ops::avgpool2d_vjp(x, k, s, p, u).unwrap(),
        ));
    }
    out.push(("avgpool2d", avg_stats));

    let x = random_tensor(&mut r, &[2, 3, 3], -1.0, 1.0);
    let wt = random_tensor(&mut r, &[5, 18], -1.0, 1.0);
    let b = random_tensor(&mut r, &[5], -1.0, 1.0);
    let (wd, bd) = (to_f64(&wt), to_f64(&b));
    out.push((
        "dense",
        op_probe(&mut r, &x, |a| none(dense(a, &wd, &bd)), |x, u| ops::dense_vjp(x, &wt, u).unwrap()),
    ));

    let other = random_tensor(&mut r, &[3, 4, 4], -1.0, 1.0);
    let other_arr = Arr::of(&other);
    let x = random_tensor(&mut r, &[2, 4, 4], -1.0, 1.0);
    let mut cat = op_probe(
        &mut r,
        &x,
        |a| none(super::concat(&[a, &other_arr])),
        |x, u| ops::concat_vjp(&[x.shape(), other.shape()], 0, u).unwrap().remove(0),
    );
    cat.merge(op_probe(
        &mut r,
        &x,
        |a| none(super::concat(&[&other_arr, a])),
        |x, u| ops::concat_vjp(&[other.shape(), x.shape()], 0, u).unwrap().remove(1),
    ));
    out.push(("concat", cat));

    let x = random_tensor(&mut r, &[9], -3.0, 3.0);
    out.push((
        "softmax",
        op_probe(&mut r, &x, |a| none(Arr::new(a.shape.clone(), softmax(&a.data))), |x, u| {
            ops::softmax_vjp(x, u).unwrap()
        }),
    ));

    let x = random_tensor(&mut r, &[3, 4, 5], -1.0, 1.0);
    out.push((
        "globalavgpool",
        op_probe(&mut r, &x, |a| none(global_avg(a)), |x, u| ops::global_avgpool_vjp(x, u).unwrap()),
    ));
    out
}

/// Input-gradient probes on a whole model at random pixels of a random
/// image. Probes whose stencil crosses a kink are redrawn.
pub fn model_gradient(parts: &ModelParts, goal: &Goal, probes: usize, seed: u64) -> GradStats {
    let model = parts.build().unwrap();
    let oracle = Oracle::new(&parts.manifest, &parts.blobs);
    let mut r = rng(seed);
    let shape = model.input_shape().to_vec();
    let image = random_tensor(&mut r, &shape, 0.05, 0.95);
    let analytic = model.input_gradient(&image, &goal.objective()).unwrap();
    let x = to_f64(&image);
    let (_, p0) = goal.eval(&oracle, &x);
    let mut s = GradStats::default();
    while s.probes < probes {
        assert!(s.redraws < 10 * probes, "too many kinks");
        let i = r.random_range(0..x.len());
        let mut plus = x.clone();
        plus[i] += FD_STEP;
        let mut minus = x.clone();
        minus[i] -= FD_STEP;
        let ((fp, pp), (fm, pm)) = (goal.eval(&oracle, &plus), goal.eval(&oracle, &minus));
        if pp != p0 || pm != p0 {
            s.redraws += 1;
            continue;
        }
        let fd = (fp - fm) / (2.0 * FD_STEP);
        s.probes += 1;
        s.max_rel = s.max_rel.max(rel_err(analytic.data()[i] as f64, fd));
    }
    s
}

/// Max absolute difference between `conv2d_forward` and the nested-loop
/// reference over `n` random configurations.
pub fn conv_configs(n: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0f64;
    for _ in 0..n {
        let (cin, cout) = (r.random_range(1..5), r.random_range(1..5));
        let k: usize = r.random_range(1..6);
        let stride = r.random_range(1..4);
        let pad = r.random_range(0..3);
        let lo = k.saturating_sub(2 * pad).max(1);
        let (h, w) = (r.random_range(lo..lo + 9), r.random_range(lo..lo + 9));
        let x = random_tensor(&mut r, &[cin, h, w], -1.0, 1.0);
        let wt = random_tensor(&mut r, &[cout, cin, k, k], -1.0, 1.0);
        let b = random_tensor(&mut r, &[cout], -1.0, 1.0);
        let got = ops::conv2d_forward(&x, &wt, &b, stride, pad).unwrap();
        let want = conv(&Arr::of(&x), &to_f64(&wt), &to_f64(&b), cout, k, stride, pad);
        assert_eq!(got.shape(), want.shape.as_slice());
        for (a, b) in got.data().iter().zip(&want.data) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    worst
}

/// Mean squared high band (`frequency_split`, sigma 2) over all pixels.
pub fn high_band_energy(img: &Image) -> f64 {
    let bands = scenescope::perturb::frequency_split(img, 2.0).unwrap();
    let d = bands.high.data();
    d.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / d.len() as f64
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PgdStats {
    pub steps: usize,
    pub stalls: usize,
    /// Largest `|delta|_p - epsilon` seen after any step.
    pub max_excess: f64,
    /// Elements of `base + delta` outside `[0, 1]`, over all steps.
    pub box_violations: usize,
}

/// Runs `steps` PGD steps on `scenes` random fixture scenes (alternating
/// models, norms and modes) and checks the ball and box after every step.
pub fn pgd_invariants(scenes: usize, steps: usize, seed: u64) -> PgdStats {
    use scenescope::attack::{attack_init, norm_of};
    use scenescope::{AttackConfig, AttackMode, Norm};
    let models = [
        scenescope::fixtures::tinynet_standard().build().unwrap(),
        scenescope::fixtures::tinynet_adversarial().build().unwrap(),
    ];
    let engine = engine();
    let mut r = rng(seed);
    let mut s = PgdStats::default();
    for i in 0..scenes {
        let model = &models[i % 2];
        let image = attack_input(&engine, &random_scene(&mut r));
        let norm = if i % 2 == 0 { Norm::Linf } else { Norm::L2 };
        let epsilon = match norm {
            Norm::Linf => r.random_range(0.005..0.1),
            Norm::L2 => r.random_range(0.2..1.0),
        };
        let mode = if i % 3 == 0 {
            AttackMode::Suppress
        } else {
            AttackMode::Targeted {
                class: r.random_range(0..model.labels().len()),
            }
        };
        let config = AttackConfig {
            model: model.model_id().into(),
            mode,
            epsilon,
            norm,
        };
        let mut state = attack_init(model, &image, config).unwrap();
        for _ in 0..steps {
            if state.step(model).unwrap() == scenescope::attack::StepOutcome::Stalled {
                s.stalls += 1;
            }
            s.steps += 1;
            s.max_excess = s.max_excess.max(norm_of(state.delta().data(), norm) - epsilon as f64);
            s.box_violations += image
                .data()
                .iter()
                .zip(state.delta().data())
                .filter(|(b, d)| !(0.0..=1.0).contains(&(*b + *d)))
                .count();
        }
    }
    s
}

/// Base image on a 1/64 grid inside `[0.25, 0.75]`, so that adding an
/// epsilon / 8 of 1/32 and subtracting again is exact.
pub fn dyadic_image(r: &mut impl Rng, size: usize) -> Image {
    Image::from_fn(size, size, |_, _| std::array::from_fn(|_| r.random_range(16..=48) as f32 / 64.0))
}

/// One L-inf step on the linear fixture against the hand-derived gradient
/// `W[c, i] / std[channel(i)]`: the delta must be `epsilon / 8 * sign(W[c, i])`.
/// Returns the number of mismatching elements and the observed step length.
pub fn linear_closed_form(size: usize, class: usize, seed: u64) -> (usize, f32) {
    use scenescope::attack::attack_init;
    use scenescope::{AttackConfig, AttackMode, Norm};
    let parts = scenescope::fixtures::linear(size, seed);
    let model = parts.build().unwrap();
    let n = 3 * size * size;
    let w = &parts.blobs["fc"][class * n..(class + 1) * n];
    let std = &parts.manifest.normalization.std;
    let epsilon = 0.25f32;
    let image = dyadic_image(&mut rng(seed), size);
    let config = AttackConfig {
        model: model.model_id().into(),
        mode: AttackMode::Targeted { class },
        epsilon,
        norm: Norm::Linf,
    };
    let mut state = attack_init(&model, &image, config).unwrap();
    state.step(&model).unwrap();
    let mut bad = 0;
    for (i, &d) in state.delta().data().iter().enumerate() {
        let g = w[i] as f64 / std[i / (size * size)] as f64;
        let want = if g > 0.0 { epsilon / 8.0 } else { -epsilon / 8.0 };
        bad += (d != want) as usize;
    }
    let step = state.delta().data().iter().fold(0f32, |m, v| m.max(v.abs()));
    (bad, step / epsilon)
}

/// Fraction of targeted trials whose target logit never decreases over the
/// first 8 L-inf steps.
pub fn targeted_monotone(trials: usize, epsilon: f32, seed: u64) -> (usize, usize) {
    use scenescope::attack::attack_init;
    use scenescope::{AttackConfig, AttackMode, Norm};
    let models = [
        scenescope::fixtures::tinynet_standard().build().unwrap(),
        scenescope::fixtures::tinynet_adversarial().build().unwrap(),
        scenescope::fixtures::linear(224, 3).build().unwrap(),
    ];
    let engine = engine();
    let mut r = rng(seed);
    let mut ok = 0;
    for t in 0..trials {
        let model = &models[t % models.len()];
        let image = attack_input(&engine, &random_scene(&mut r));
        let class = r.random_range(0..model.labels().len());
        let config = AttackConfig {
            model: model.model_id().into(),
            mode: AttackMode::Targeted { class },
            epsilon,
            norm: Norm::Linf,
        };
        let mut state = attack_init(model, &image, config).unwrap();
        let logit = |s: &scenescope::AttackState| model.logits(&s.adversarial_image().to_tensor()).unwrap().data()[class];
        let mut prev = logit(&state);
        let mut monotone = true;
        for _ in 0..8 {
            state.step(model).unwrap();
            let now = logit(&state);
            monotone &= now >= prev;
            prev = now;
        }
        ok += monotone as usize;
    }
    (ok, trials)
}

/// Brute force: repeated first-index argmax for the top ten, mean and
/// variance by definition.
pub fn fluctuation_oracle(prototype: &[f32], views: &[Vec<f32>]) -> f64 {
    let p: Vec<f64> = prototype.iter().map(|&v| v as f64).collect();
    let mut taken = vec![false; p.len()];
    let mut top = Vec::new();
    for _ in 0..10 {
        let mut best = None;
        for i in 0..p.len() {
            if !taken[i] && best.is_none_or(|b: usize| p[i] > p[b]) {
                best = Some(i);
            }
        }
        taken[best.unwrap()] = true;
        top.push(best.unwrap());
    }
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let sd = (p.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    let mut total = 0.0;
    for v in views {
        let mut sq = 0.0;
        for &c in &top {
            sq += (p[c] - v[c] as f64).powi(2);
        }
        total += sq.sqrt();
    }
    total / sd
}

#[derive(Clone, Copy, Debug, Default)]
pub struct FluctuationCheck {
    pub sets: usize,
    pub max_abs_err: f64,
    /// Largest relative change under uniform power-of-two logit scaling.
    pub max_scale_err: f64,
    /// Largest score with every view equal to the prototype.
    pub max_identical: f64,
}

/// Random synthetic logit sets (n in 10..=40, 1..=12 views) against the
/// oracle, plus scale invariance and the identical-view case.
pub fn fluctuation_sets(sets: usize, seed: u64) -> FluctuationCheck {
    use scenescope::metrics::fluctuation_score;
    let mut r = rng(seed);
    let mut c = FluctuationCheck {
        sets,
        ..Default::default()
    };
    for _ in 0..sets {
        let n = r.random_range(10..=40);
        let spread = r.random_range(0.1f32..20.0);
        let proto: Vec<f32> = (0..n).map(|_| r.random_range(-spread..spread)).collect();
        let noise = r.random_range(0.0f32..2.0) * spread;
        let views: Vec<Vec<f32>> = (0..r.random_range(1..=12))
            .map(|_| proto.iter().map(|v| v + r.random_range(-noise..=noise)).collect())
            .collect();
        let got = fluctuation_score(&proto, &views).unwrap();
        c.max_abs_err = c.max_abs_err.max((got - fluctuation_oracle(&proto, &views)).abs());
        // powers of two keep the scaled f32 logits exact
        let k = 2f32.powi(r.random_range(-8..=8));
        let scaled = fluctuation_score(
            &proto.iter().map(|v| v * k).collect::<Vec<_>>(),
            &views.iter().map(|v| v.iter().map(|x| x * k).collect()).collect::<Vec<_>>(),
        )
        .unwrap();
        c.max_scale_err = c.max_scale_err.max((scaled - got).abs() / got.max(1e-12));
        let same = fluctuation_score(&proto, &vec![proto.clone(); 3]).unwrap();
        c.max_identical = c.max_identical.max(same);
    }
    c
}

/// The same fixture architecture and weights at a smaller input size. The
/// global average pool keeps every weight shape unchanged.
pub fn resized(mut parts: ModelParts, side: usize) -> ModelParts {
    parts.manifest.input_shape = vec![3, side, side];
    parts
}

#[derive(Clone, Debug, Default)]
pub struct FvisGrid {
    pub assets: usize,
    pub ascended: usize,
    pub dead: usize,
    pub channels: usize,
    /// Channels whose Fourier asset has lower high-band energy than the
    /// naive-pixel asset.
    pub fourier_smoother: usize,
    /// Live channels where both assets have the same high-band energy,
    /// typically because both saturated to the same flat image.
    pub ties: usize,
    pub failures: usize,
}

/// Catalog run over `relu1` and `relu2` of the standard fixture and `relu1`
/// of the adversarial one (32 channels, 64 assets) at `side` pixels.
pub fn fvis_grid(dir: &std::path::Path, side: usize, steps: usize, seed: u64) -> FvisGrid {
    use scenescope::fvis::{generate_catalog, FvisConfig, Parametrization};
    let std = resized(scenescope::fixtures::tinynet_standard(), side).build().unwrap();
    let adv = resized(scenescope::fixtures::tinynet_adversarial(), side).build().unwrap();
    let config = FvisConfig {
        steps,
        seed,
        ..FvisConfig::default()
    };
    let mut g = FvisGrid::default();
    let mut assets = Vec::new();
    for (model, layers) in [(&std, vec!["relu1".to_string(), "relu2".into()]), (&adv, vec!["relu1".into()])] {
        let report = generate_catalog(&[model], &layers, &config, dir).unwrap();
        g.failures += report.failures.len();
        assets.extend(report.assets);
    }
    g.assets = assets.len();
    g.ascended = assets.iter().filter(|a| a.final_objective >= a.initial_objective).count();
    g.dead = assets.iter().filter(|a| a.dead).count();
    for a in assets.iter().filter(|a| a.parametrization == Parametrization::FourierBasis) {
        let naive = assets
            .iter()
            .find(|b| {
                b.parametrization == Parametrization::NaivePixel
                    && (&b.model_id, &b.node, b.channel) == (&a.model_id, &a.node, a.channel)
            })
            .unwrap();
        let load = |f: &str| Image::load(&dir.join(f)).unwrap();
        let (ef, en) = (high_band_energy(&load(&a.file)), high_band_energy(&load(&naive.file)));
        g.channels += 1;
        g.fourier_smoother += (ef < en) as usize;
        g.ties += (ef == en && !a.dead) as usize;
    }
    g
}

/// Mean absolute horizontal and vertical forward differences.
pub fn directional_gradients(img: &Image) -> (f64, f64) {
    let (w, h) = (img.width(), img.height());
    let (mut gx, mut gy) = (0.0, 0.0);
    for c in 0..3 {
        let p = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                if x + 1 < w {
                    gx += (p[y * w + x + 1] - p[y * w + x]).abs() as f64;
                }
                if y + 1 < h {
                    gy += (p[(y + 1) * w + x] - p[y * w + x]).abs() as f64;
                }
            }
        }
    }
    (gx / (3 * h * (w - 1)) as f64, gy / (3 * w * (h - 1)) as f64)
}

pub fn fixture_service() -> scenescope::Service {
    use scenescope::fixtures;
    let parts = fixtures::fixture_models();
    let groups = parts
        .iter()
        .map(|p| (p.manifest.model_id.clone(), fixtures::neuron_groups(p)))
        .collect();
    let models = parts.iter().map(|p| p.build().unwrap()).collect();
    scenescope::Service::new(models, groups, fixtures::asset_library(), None).unwrap()
}

/// Random update script over camera, shape, color, frequency and spatial
/// parameters. Every delta is valid.
pub fn update_script(len: usize, seed: u64) -> Vec<serde_json::Value> {
    use serde_json::json;
    let mut r = rng(seed);
    (0..len)
        .map(|_| match r.random_range(0..5) {
            0 => json!({"camera": {"yaw": r.random_range(-180.0..180.0f32), "pitch": r.random_range(-20.0..40.0f32)}}),
            1 => json!({"shape": {"shape_morph": r.random_range(0.0..1.0f32)}, "mesh": if r.random_bool(0.5) { "orb" } else { "pod" }}),
            2 => json!({"color": {"hue_shift": r.random_range(0.0..360.0f32), "saturation": r.random_range(0.0..1.0f32)}}),
            3 => json!({"frequency": {"low_gain": r.random_range(0.0..2.0f32), "high_gain": r.random_range(0.0..2.0f32)}}),
            _ => json!({"spatial": {"patch_k": r.random_range(1..5usize), "shuffle_seed": r.random_range(0..1000u64)}}),
        })
        .collect()
}

/// Plays the same script on two fresh services and compares the payload
/// after every update. Returns (compared, equal).
pub fn protocol_replay(len: usize, seed: u64) -> (usize, usize) {
    use scenescope::service::Tick;
    use std::time::Duration;
    let script = update_script(len, seed);
    let run = || {
        let service = fixture_service();
        let s = service
            .create_session(&["tinynet-std".into(), "tinynet-adv".into()])
            .unwrap();
        s.set_capture_groups(&["edges".into()]).unwrap();
        script
            .iter()
            .map(|d| {
                s.update_state(d).unwrap();
                match s.poll(Duration::ZERO).unwrap() {
                    Tick::Frame(f) => f.payload,
                    t => panic!("expected a frame, got {t:?}"),
                }
            })
            .collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    (a.len(), a.iter().zip(&b).filter(|(x, y)| x == y).count())
}
