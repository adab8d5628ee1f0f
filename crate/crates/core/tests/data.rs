mod common;

use std::collections::HashSet;

use dudenet::data::augment::{hflip, rot90, vflip};
use dudenet::data::{
    add_gaussian_noise, bicubic_resize, build_epoch, extract_patches, patch_origins, AugmentOp, EpochConfig, Image,
    SigmaMode, TrainingSet, SAMPLES_PER_IMAGE,
};
use dudenet::eval::psnr;
use dudenet::rng::{stream, Purpose};

fn asymmetric(h: usize, w: usize) -> Image {
    Image::from_fn(1, h, w, |_, r, x| (r * w + x) as f32 / (h * w) as f32).unwrap()
}

#[test]
fn augment_ops_form_a_group() {
    let img = asymmetric(5, 5);
    let images: Vec<Image> = AugmentOp::all().map(|op| op.apply(&img)).collect();
    for a in AugmentOp::all() {
        assert_eq!(a.inverse().apply(&a.apply(&img)), img, "inverse of {}", a.index());
        for b in AugmentOp::all() {
            let composed = b.apply(&a.apply(&img));
            assert!(images.contains(&composed), "{} then {} leaves the set", a.index(), b.index());
        }
    }
    let distinct: HashSet<Vec<u32>> = images.iter().map(|i| i.pixels().iter().map(|v| v.to_bits()).collect()).collect();
    assert_eq!(distinct.len(), AugmentOp::COUNT);
}

#[test]
fn rotation_and_flip_identities() {
    let img = asymmetric(4, 7);
    let r4 = rot90(&rot90(&rot90(&rot90(&img))));
    assert_eq!(r4, img);
    assert_eq!(hflip(&hflip(&img)), img);
    assert_eq!(vflip(&img), rot90(&rot90(&hflip(&img))));
    let r = rot90(&img);
    assert_eq!((r.height(), r.width()), (7, 4));
}

#[test]
fn bicubic_keeps_constants() {
    let img = Image::from_fn(1, 60, 45, |_, _, _| 0.37).unwrap();
    for s in [0.7, 0.8, 0.9, 1.0] {
        let out = bicubic_resize(&img, s).unwrap();
        assert_eq!((out.height(), out.width()), ((60.0 * s) as usize, (45.0 * s) as usize));
        assert!(out.pixels().iter().all(|&v| (v - 0.37).abs() < 1e-6));
    }
}

#[test]
fn patch_count_arithmetic() {
    for (h, w, size, stride) in [(41, 41, 41, 10), (100, 80, 41, 10), (180, 180, 40, 10), (64, 50, 16, 7)] {
        let img = asymmetric(h, w);
        let patches = extract_patches(&img, size, stride).unwrap();
        let per_axis = |d: usize| {
            let full = (d - size) / stride + 1;
            full + usize::from((d - size) % stride != 0)
        };
        assert_eq!(patches.len(), per_axis(h) * per_axis(w), "{h}x{w}");
        assert_eq!(patch_origins(h, size, stride).len(), per_axis(h));
        assert!(patches.iter().all(|p| p.height() == size && p.width() == size));
    }
}

#[test]
fn each_image_is_used_four_times_per_epoch() {
    let images: Vec<Image> = (0..3).map(|i| common::synthetic_image(i, 70, 90)).collect();
    let set = TrainingSet::new(&images, 41).unwrap();
    let cfg = EpochConfig {
        patch_size: 41,
        batch_size: 5,
        sigma: SigmaMode::Fixed(25.0),
    };
    let e = build_epoch(&set, &cfg, 3, 1).unwrap();
    assert_eq!(e.len(), SAMPLES_PER_IMAGE * images.len());
    assert_eq!(e.num_batches(), 3);
    let sizes: Vec<usize> = e.batches().map(|b| b.noisy.shape().n).collect();
    assert_eq!(sizes, vec![5, 5, 2]);
    assert_eq!(e.samples, build_epoch(&set, &cfg, 3, 1).unwrap().samples);
    assert_ne!(e.samples, build_epoch(&set, &cfg, 3, 2).unwrap().samples);
}

#[test]
fn noise_is_exactly_recoverable() {
    let img = common::synthetic_image(4, 30, 30);
    let p = add_gaussian_noise(&img, 25.0, &mut stream(1, Purpose::Test, 0)).unwrap();
    for ((c, n), y) in img.pixels().iter().zip(&p.noise).zip(p.noisy.pixels()) {
        assert_eq!(c + n, *y);
    }
}

#[test]
fn constant_image_psnr_matches_analytic() {
    let img = Image::from_fn(1, 256, 256, |_, _, _| 0.5).unwrap();
    for (sigma, want) in [(15.0, 24.61), (25.0, 20.17), (50.0, 14.15)] {
        let p = add_gaussian_noise(&img, sigma, &mut stream(0, Purpose::Test, sigma as u64)).unwrap();
        let got = psnr(&img, &p.noisy).unwrap();
        assert!((got - want).abs() < 0.1, "sigma {sigma}: {got}");
    }
}
