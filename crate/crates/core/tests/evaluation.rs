mod common;

use dudenet::config::TrainConfig;
use dudenet::data::{save_image, Image};
use dudenet::eval::{benchmark, denoise, evaluate_dataset, Denoiser, EvalOptions};
use dudenet::graph::{build, init_params, ArchVariant};
use dudenet::train::{Checkpoint, RngState};
use dudenet::Tensor;

fn identity_checkpoint() -> Checkpoint {
    let config = TrainConfig::default();
    let g = build(&config.variant().unwrap()).unwrap();
    let mut store = init_params::<f32>(&g, 1);
    for name in ["cb3.weight", "cb3.bias"] {
        let s = store.param(name).unwrap().shape();
        *store.param_mut(name).unwrap() = Tensor::zeros(s);
    }
    Checkpoint {
        rng: RngState::at_epoch(config.seed, 1),
        config,
        store,
        epoch: 0,
        metrics: vec![],
    }
}

fn write_dataset(dir: &std::path::Path) {
    for i in 0..3 {
        save_image(&common::synthetic_image(i, 20 + i as usize, 26), dir.join(format!("im{i}.pgm"))).unwrap();
    }
}

#[test]
fn identity_model_scores_like_the_noisy_input() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let opts = EvalOptions {
        sigmas: vec![25.0],
        ..Default::default()
    };
    let r = evaluate_dataset(&identity_checkpoint(), dir.path(), &opts).unwrap();
    assert_eq!(r.rows.len(), 3);
    for row in &r.rows {
        assert_eq!(row.noisy_psnr, row.denoised_psnr, "{}", row.name);
    }
}

#[test]
fn reports_are_reproducible_and_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    std::fs::write(dir.path().join("broken.pgm"), b"P5\n4 4\n255\n").unwrap();
    let ck = identity_checkpoint();
    let opts = EvalOptions::default();
    let a = evaluate_dataset(&ck, dir.path(), &opts).unwrap();
    let b = evaluate_dataset(&ck, dir.path(), &opts).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.means, b.means);
    assert_eq!((a.dataset_hash, a.checkpoint_id), (b.dataset_hash, b.checkpoint_id));
    assert_eq!(a.skipped.len(), 1);

    let names: Vec<&str> = a.rows.iter().map(|r| r.name.as_str()).collect();
    assert_eq!(names, ["im0", "im0", "im0", "im1", "im1", "im1", "im2", "im2", "im2"]);
    for m in &a.means {
        let sel: Vec<f64> = a.rows.iter().filter(|r| r.sigma == m.sigma).map(|r| r.denoised_psnr).collect();
        let mean = sel.iter().sum::<f64>() / sel.len() as f64;
        assert!((m.denoised_psnr - mean).abs() < 1e-9);
    }
    assert!(a.means[0].noisy_psnr > a.means[1].noisy_psnr && a.means[1].noisy_psnr > a.means[2].noisy_psnr);

    let other = EvalOptions { seed: 1, ..opts };
    assert_ne!(evaluate_dataset(&ck, dir.path(), &other).unwrap().rows, a.rows);
}

#[test]
fn quantized_mode_rounds_before_measuring() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    let ck = identity_checkpoint();
    let plain = evaluate_dataset(&ck, dir.path(), &EvalOptions::default()).unwrap();
    let quant = evaluate_dataset(&ck, dir.path(), &EvalOptions { quantize: true, ..Default::default() }).unwrap();
    assert_ne!(plain.rows, quant.rows);
    assert!(quant.to_text().contains("quantized"));
}

#[test]
fn full_size_images_keep_their_shape() {
    let g = build(&ArchVariant::canonical(1)).unwrap();
    let d = Denoiser::new(g.clone(), init_params(&g, 3)).unwrap();
    for (h, w) in [(321, 481), (500, 500)] {
        let img = Image::from_fn(1, h, w, |_, r, x| ((r ^ x) % 7) as f32 / 6.0).unwrap();
        let out = d.denoise(&img).unwrap();
        assert_eq!((out.clamped.height(), out.clamped.width()), (h, w));
    }
}

#[test]
fn zero_cb3_checkpoint_denoises_to_its_input() {
    let img = common::synthetic_image(9, 33, 40);
    assert_eq!(denoise(&identity_checkpoint(), &img).unwrap().clamped, img);
}

#[test]
fn benchmark_macs_scale_with_area() {
    let ck = identity_checkpoint();
    let r = benchmark(&Denoiser::from_checkpoint(&ck).unwrap(), &[16, 64], 1).unwrap();
    assert_eq!(r.rows[1].macs, 16 * r.rows[0].macs);
    assert!(r.to_text().contains("gflops"));
}
