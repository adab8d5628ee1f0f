//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{graph_objective, loop_conv, random};
use dudenet::autodiff::{BnRun, Tape};
use dudenet::config::TrainConfig;
use dudenet::data::{
    add_gaussian_noise, bicubic_resize, build_epoch, extract_patches, patch_origins, AugmentOp, Batch, EpochConfig,
    Image, SigmaMode, TrainingSet, SAMPLES_PER_IMAGE,
};
use dudenet::eval::{evaluate_images, psnr, Denoiser, EvalOptions};
use dudenet::gradcheck::{grad_check, Evaluation, GradCheckOptions, GradCheckReport};
use dudenet::graph::{build, forward, init_params, preset, variant_presets, ArchVariant, Branch, Mode};
use dudenet::ops::{conv2d, mse_residual_loss, ConvParams, BN_EPSILON};
use dudenet::optim::AdamConfig;
use dudenet::rng::{stream, Purpose};
use dudenet::store::ParameterStore;
use dudenet::train::{resume, train, train_step, Checkpoint, Trainer};
use dudenet::{Shape, Tensor};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// 1: gradient checks

fn op_check(store: ParameterStore<f64>, proj: Tensor<f64>, build_op: OpBuilder) -> GradCheckReport {
    let opts = GradCheckOptions {
        tol: 1e-5,
        step: 1e-6,
        max_per_tensor: 64,
        ..Default::default()
    };
    let obj = common::projected(proj, build_op);
    grad_check(&store, obj, &opts).unwrap()
}

type OpBuilder = Box<
    dyn FnMut(
        &ParameterStore<f64>,
        &mut Tape<f64>,
        &mut std::collections::BTreeMap<String, dudenet::autodiff::Var<f64>>,
    ) -> dudenet::Result<dudenet::autodiff::Var<f64>>,
>;

fn store_of(entries: &[(&str, Shape)], seed: u64) -> ParameterStore<f64> {
    let mut s = ParameterStore::new(seed);
    for (i, (name, shape)) in entries.iter().enumerate() {
        s.insert_param(*name, random(*shape, seed * 100 + i as u64));
    }
    s
}

fn gradient_checks() -> Outcome {
    let t = Instant::now();
    let mut worst_op = 0.0f64;
    let mut op_ok = true;
    for (k, dil) in [(3, 1), (3, 2), (1, 1)] {
        let store = store_of(
            &[("x", Shape::new(2, 3, 6, 6)), ("w", Shape::new(4, 3, k, k)), ("b", Shape::vector(4))],
            k as u64 * 10 + dil as u64,
        );
        let pad = dil * (k - 1) / 2;
        let r = op_check(
            store,
            random(Shape::new(2, 4, 6, 6), 1),
            Box::new(move |s, t, p| {
                let x = common::bind(s, t, p, "x")?;
                let w = common::bind(s, t, p, "w")?;
                let b = common::bind(s, t, p, "b")?;
                t.conv2d(&x, &w, Some(&b), dil, pad)
            }),
        );
        op_ok &= r.passed();
        worst_op = worst_op.max(r.max_rel_error);
    }
    let bn = op_check(
        store_of(&[("x", Shape::new(2, 3, 4, 4)), ("g", Shape::vector(3)), ("b", Shape::vector(3))], 5),
        random(Shape::new(2, 3, 4, 4), 2),
        Box::new(|s, t, p| {
            let x = common::bind(s, t, p, "x")?;
            let g = common::bind(s, t, p, "g")?;
            let b = common::bind(s, t, p, "b")?;
            Ok(t.batchnorm(&x, &g, &b, BnRun::Train, BN_EPSILON)?.0)
        }),
    );
    let misc = op_check(
        store_of(&[("a", Shape::new(2, 2, 4, 4)), ("b", Shape::new(2, 1, 4, 4)), ("y", Shape::new(2, 3, 4, 4))], 6),
        random(Shape::new(2, 3, 4, 4), 3),
        Box::new(|s, t, p| {
            let a = common::bind(s, t, p, "a")?;
            let b = common::bind(s, t, p, "b")?;
            let y = common::bind(s, t, p, "y")?;
            let r = t.relu(&a);
            let c = t.concat(&r, &b)?;
            t.sub(&y, &c)
        }),
    );
    let shape = Shape::new(2, 1, 4, 4);
    let (ly, lx) = (random(shape, 7), random(shape, 8));
    let loss = grad_check(
        &store_of(&[("pred", shape)], 9),
        |s: &ParameterStore<f64>, t: &mut Tape<f64>| {
            let mut params = std::collections::BTreeMap::new();
            let pred = common::bind(s, t, &mut params, "pred")?;
            let l = mse_residual_loss(pred.value(), &ly, &lx)?;
            Ok(Evaluation {
                loss: l.loss,
                output: pred,
                seed: l.grad,
                params,
            })
        },
        &GradCheckOptions {
            tol: 1e-5,
            step: 1e-6,
            ..Default::default()
        },
    )
    .unwrap();
    for r in [&bn, &misc, &loss] {
        op_ok &= r.passed();
        worst_op = worst_op.max(r.max_rel_error);
    }

    let g = build(&ArchVariant::canonical(1)).unwrap();
    let store = init_params::<f64>(&g, 11);
    let y = random(Shape::new(2, 1, 8, 8), 12).map(|v| 0.5 + 0.1 * v);
    let x = random(Shape::new(2, 1, 8, 8), 13).map(|v| 0.5 + 0.05 * v);
    let full = grad_check(&store, graph_objective(&g, &y, &x), &GradCheckOptions::default()).unwrap();
    let elapsed = t.elapsed();
    let pass = op_ok && worst_op < 1e-5 && full.passed() && full.max_rel_error < 1e-4 && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "single ops max rel {:.2e} (< 1e-5), canonical graph max rel {:.2e} over {} elements, {} at ReLU kinks (< 1e-4), {:.1} s (< 120 s)",
            worst_op,
            full.max_rel_error,
            full.checked,
            full.excluded,
            secs(elapsed)
        ),
    )
}

// 2: conv oracle

fn conv_oracle() -> Outcome {
    let t = Instant::now();
    let mut r = stream(21, Purpose::Test, 0);
    let mut pick = |lo: usize, hi: usize| lo + dudenet::rng::uniform_index(&mut r, hi - lo + 1);
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let k = if pick(0, 3) == 0 { 1 } else { 3 };
        let dil = if k == 3 { pick(1, 2) } else { 1 };
        let (n, ci, co, h, w) = (pick(1, 3), pick(1, 6), pick(1, 6), pick(5, 14), pick(5, 14));
        let x = random(Shape::new(n, ci, h, w), 100 + case);
        let wt = random(Shape::new(co, ci, k, k), 200 + case);
        let b = random(Shape::vector(co), 300 + case);
        let got = conv2d(&x, &ConvParams::new(wt.clone(), Some(b.clone()), dil).unwrap()).unwrap();
        let want = loop_conv(&x, &wt, Some(&b), dil, dil * (k - 1) / 2);
        for (g, w) in got.data().iter().zip(want.data()) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    let elapsed = t.elapsed();
    outcome(
        worst < 1e-6 && elapsed < Duration::from_secs(10),
        format!("20 random cases, max rel error {worst:.2e} (< 1e-6), {:.2} s (< 10 s)", secs(elapsed)),
    )
}

// 3: accounting

fn accounting() -> Outcome {
    let canon = build(&ArchVariant::canonical(1)).unwrap();
    let all3 = build(&preset("all-3x3", 1).unwrap()).unwrap();
    let dncnn = build(&preset("dncnn", 1).unwrap()).unwrap();
    let depth = canon.depth();
    let rf = canon.receptive_field(Branch::Feb1).unwrap();
    let p_dn = dncnn.count_params() as f64;
    let p_canon = canon.count_params() as f64;
    let ratio = canon.gflops() / all3.gflops();
    let checks = [
        depth == 18,
        rf == 41,
        (p_dn / 0.56e6 - 1.0).abs() <= 0.02,
        (p_canon / 1.03e6 - 1.0).abs() <= 0.08,
        (ratio - 0.925).abs() <= 0.02,
    ];
    outcome(
        checks.iter().all(|&c| c),
        format!(
            "depth {depth} (18) [{}], FEB1 RF {rf} (41) [{}], DnCNN params {:.4}M (0.56M ±2%) [{}], canonical params {:.4}M (1.03M ±8%) [{}], Gflops ratio {:.4} (0.925 ±0.02) [{}]",
            ok(checks[0]),
            ok(checks[1]),
            p_dn / 1e6,
            ok(checks[2]),
            p_canon / 1e6,
            ok(checks[3]),
            ratio,
            ok(checks[4])
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "MISS"
    }
}

// 4: structural identity

fn structural() -> Outcome {
    let mut presets = 0;
    let mut macs_ok = true;
    for c in [1, 3] {
        for p in variant_presets(c) {
            let g = build(&p.variant).unwrap();
            let store = init_params::<f32>(&g, 0);
            let weights: usize = store.params().filter(|(n, _)| n.ends_with(".weight")).map(|(_, t)| t.len()).sum();
            for (h, w) in [(41, 41), (180, 180), (321, 481)] {
                macs_ok &= g.count_macs(h, w) == (weights * h * w) as u64;
            }
            presets += 1;
        }
    }
    let g = build(&ArchVariant::canonical(1)).unwrap();
    let mut store = init_params::<f32>(&g, 3);
    for name in ["cb3.weight", "cb3.bias"] {
        let s = store.param(name).unwrap().shape();
        *store.param_mut(name).unwrap() = Tensor::zeros(s);
    }
    let ck = Checkpoint {
        config: TrainConfig::default(),
        rng: dudenet::train::RngState::at_epoch(0, 1),
        store,
        epoch: 0,
        metrics: vec![],
    };
    let ck = Checkpoint::decode(&ck.encode()).unwrap();
    let y = random(Shape::new(2, 1, 33, 29), 4).cast::<f32>();
    let (x, _) = forward(&g, &ck.store, &y, Mode::Eval).unwrap();
    let identity = x == y;
    outcome(
        macs_ok && identity,
        format!(
            "count_macs = conv weights·h·w for {presets} presets × 3 sizes [{}]; zero-CB3 checkpoint gives x̂ ≡ y [{}]",
            ok(macs_ok),
            ok(identity)
        ),
    )
}

// 5: noise calibration

fn noise_calibration() -> Outcome {
    let img = Image::from_fn(1, 256, 256, |_, _, _| 0.5).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for (sigma, want) in [(15.0, 24.61), (25.0, 20.17), (50.0, 14.15)] {
        let p = add_gaussian_noise(&img, sigma, &mut stream(5, Purpose::Test, sigma as u64)).unwrap();
        let got = psnr(&img, &p.noisy).unwrap();
        pass &= (got - want).abs() <= 0.1;
        parts.push(format!("σ {sigma}: {got:.3} dB ({want} ±0.1)"));
    }
    outcome(pass, parts.join(", "))
}

// 6: overfit

fn overfit() -> Outcome {
    const STEPS: usize = 2000;
    let g = build(&ArchVariant::canonical(1)).unwrap();
    let mut store = init_params::<f32>(&g, 61);
    let clean = common::synthetic_image(61, 41, 41);
    let pair = add_gaussian_noise(&clean, 25.0, &mut stream(61, Purpose::Noise, 0)).unwrap();
    let batch = Batch {
        noisy: pair.noisy.to_tensor(),
        clean: pair.clean.to_tensor(),
        sigmas: vec![25.0],
    };
    let adam = AdamConfig::default();
    let t = Instant::now();
    let mut losses = Vec::with_capacity(STEPS);
    for _ in 0..STEPS {
        losses.push(train_step(&g, &mut store, &batch, 1e-3, &adam).unwrap());
    }
    let (_, r) = forward(&g, &store, &batch.noisy, Mode::Train).unwrap();
    let final_loss = mse_residual_loss(&r, &batch.noisy, &batch.clean).unwrap().loss;
    let elapsed = t.elapsed();
    let initial = losses[0];
    let block = STEPS / 20;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (first, last) = (mean(&losses[..block]), mean(&losses[STEPS - block..]));
    let converged = final_loss < 0.01 * initial;
    let blocks = last < 0.1 * first;
    let fast = elapsed < Duration::from_secs(300);
    outcome(
        converged && blocks && fast,
        format!(
            "loss {initial:.4} → {final_loss:.4} ({:.3}% of initial, < 1%) [{}]; mean of last 100 steps {:.3}× the first 100 (< 0.1) [{}]; {:.0} s (< 300 s) [{}]",
            100.0 * final_loss / initial,
            ok(converged),
            last / first,
            ok(blocks),
            secs(elapsed),
            ok(fast)
        ),
    )
}

// 7: desk-scale denoising gain

fn desk_scale() -> Outcome {
    let train_imgs: Vec<Image> = (0..10).map(|i| common::synthetic_image(100 + i, 128, 128)).collect();
    let held_out: Vec<(String, Image)> = (0..2).map(|i| (format!("held{i}"), common::synthetic_image(200 + i, 128, 128))).collect();
    let cfg = TrainConfig {
        variant: "canonical".into(),
        sigma: 25.0,
        epochs: 20,
        batch_size: 2,
        seed: 7,
        ..Default::default()
    };
    let t = Instant::now();
    let ck = train(&cfg, &train_imgs).unwrap();
    let d = Denoiser::from_checkpoint(&ck).unwrap();
    let opts = EvalOptions {
        sigmas: vec![25.0],
        seed: 7,
        quantize: false,
    };
    let rows = evaluate_images(&d, &held_out, &opts).unwrap();
    let elapsed = t.elapsed();
    let noisy = rows.iter().map(|r| r.noisy_psnr).sum::<f64>() / rows.len() as f64;
    let denoised = rows.iter().map(|r| r.denoised_psnr).sum::<f64>() / rows.len() as f64;
    let gain = denoised - noisy;
    outcome(
        gain >= 3.0 && elapsed < Duration::from_secs(3600),
        format!(
            "held-out mean PSNR noisy {noisy:.2} dB → denoised {denoised:.2} dB, gain {gain:.2} dB (≥ 3), {:.0} s (< 3600 s)",
            secs(elapsed)
        ),
    )
}

// 8: determinism

fn determinism() -> Outcome {
    let imgs: Vec<Image> = (0..3).map(|i| common::synthetic_image(300 + i, 40, 44)).collect();
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 4,
        patch_size: 20,
        seed: 8,
        ..Default::default()
    };
    let a = train(&cfg, &imgs).unwrap().encode();
    let b = train(&cfg, &imgs).unwrap().encode();
    let same = a == b;
    let mut splits_ok = true;
    for k in 1..cfg.epochs {
        let mut t = Trainer::new(cfg.clone(), &imgs).unwrap();
        for _ in 0..k {
            t.run_epoch().unwrap();
        }
        let saved = Checkpoint::decode(&t.checkpoint().encode()).unwrap();
        splits_ok &= resume(saved, &imgs).unwrap().encode() == a;
    }
    outcome(
        same && splits_ok,
        format!(
            "repeat run bytewise identical [{}]; save/resume after each of epochs 1–{} equals the unsplit run [{}]",
            ok(same),
            cfg.epochs - 1,
            ok(splits_ok)
        ),
    )
}

// 9: data pipeline

fn data_algebra() -> Outcome {
    let img = Image::from_fn(1, 5, 7, |_, r, x| (r * 7 + x) as f32 / 35.0).unwrap();
    let outs: Vec<Image> = AugmentOp::all().map(|op| op.apply(&img)).collect();
    let group = AugmentOp::all().all(|a| {
        a.inverse().apply(&a.apply(&img)) == img && AugmentOp::all().all(|b| outs.contains(&b.apply(&a.apply(&img))))
    });
    let distinct = (0..outs.len()).all(|i| (i + 1..outs.len()).all(|j| outs[i] != outs[j]));

    let constant = Image::from_fn(1, 90, 70, |_, _, _| 0.61).unwrap();
    let bicubic = [0.7, 0.8, 0.9, 1.0]
        .iter()
        .all(|&s| bicubic_resize(&constant, s).unwrap().pixels().iter().all(|&v| (v - 0.61).abs() < 1e-6));

    let counts = [(41, 41, 41, 10, 1), (100, 80, 41, 10, 35), (61, 61, 41, 20, 4)].iter().all(|&(h, w, size, stride, want)| {
        let n = extract_patches(&Image::from_fn(1, h, w, |_, _, _| 0.0).unwrap(), size, stride).unwrap().len();
        n == want && n == patch_origins(h, size, stride).len() * patch_origins(w, size, stride).len()
    });

    let imgs: Vec<Image> = (0..5).map(|i| common::synthetic_image(400 + i, 60, 64)).collect();
    let set = TrainingSet::new(&imgs, 41).unwrap();
    let cfg = EpochConfig {
        patch_size: 41,
        batch_size: 128,
        sigma: SigmaMode::Fixed(25.0),
    };
    let four = (1..=3).all(|e| build_epoch(&set, &cfg, 9, e).unwrap().len() == SAMPLES_PER_IMAGE * imgs.len());

    outcome(
        group && distinct && bicubic && counts && four,
        format!(
            "augment group closure/inverse [{}], 8 distinct ops [{}], bicubic keeps constants [{}], patch counts [{}], 4 samples per image per epoch [{}]",
            ok(group),
            ok(distinct),
            ok(bicubic),
            ok(counts),
            ok(four)
        ),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 9] = [
        (1, "gradient check", gradient_checks),
        (2, "conv2d oracle", conv_oracle),
        (3, "architecture accounting", accounting),
        (4, "structural identity", structural),
        (5, "noise/PSNR calibration", noise_calibration),
        (6, "overfit regression", overfit),
        (7, "desk-scale denoising gain", desk_scale),
        (8, "determinism and resumption", determinism),
        (9, "data-pipeline algebra", data_algebra),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let o = run();
        println!("{} [{id}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
