//! PSNR, whole-image denoising, dataset reports and timing.

mod benchmark;
mod denoise;
mod psnr;
mod report;

pub use benchmark::{benchmark, BenchReport, BenchRow, BENCH_REPEATS, BENCH_SIZES};
pub use denoise::{denoise, Denoised, Denoiser};
pub use psnr::{format_db, psnr, psnr_max};
pub use report::{
    dataset_hash, eval_noise_seed, evaluate_dataset, evaluate_images, sigma_means, EvalOptions, EvalReport, EvalRow,
    SigmaMean,
};
