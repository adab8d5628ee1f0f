use std::fmt::Write as _;
use std::time::Instant;

use crate::data::Image;
use crate::error::{Error, Result};

use super::denoise::Denoiser;

pub const BENCH_SIZES: [usize; 3] = [256, 512, 1024];
pub const BENCH_REPEATS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub macs: u64,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub variant: String,
    pub params: usize,
    pub gflops: f64,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
}

/// Times `repeats` eval-mode forwards on a square image of each size.
pub fn benchmark(denoiser: &Denoiser, sizes: &[usize], repeats: usize) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("benchmark needs at least one repeat".into()));
    }
    let g = denoiser.graph();
    let c = g.variant().channels;
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let img = Image::from_fn(c, size, size, |ch, r, x| ((r * 31 + x * 17 + ch * 7) % 256) as f32 / 255.0)?;
        let mut times: Vec<f64> = (0..repeats)
            .map(|_| {
                let t = Instant::now();
                denoiser.denoise(&img).map(|_| t.elapsed().as_secs_f64())
            })
            .collect::<Result<_>>()?;
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            size,
            macs: g.count_macs(size, size),
            median_s: times[times.len() / 2],
            min_s: times[0],
            max_s: times[times.len() - 1],
        });
    }
    Ok(BenchReport {
        variant: g.variant().name.clone(),
        params: g.count_params(),
        gflops: g.gflops(),
        repeats,
        rows,
    })
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variant {}  params {}  gflops {:.3}  repeats {}", self.variant, self.params, self.gflops, self.repeats);
        let _ = writeln!(s, "{:>6} {:>16} {:>10} {:>10} {:>10}", "size", "macs", "median_s", "min_s", "max_s");
        for r in &self.rows {
            let _ = writeln!(s, "{:>6} {:>16} {:>10.4} {:>10.4} {:>10.4}", r.size, r.macs, r.median_s, r.min_s, r.max_s);
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("size\tmacs\tmedian_s\tmin_s\tmax_s\n");
        for r in &self.rows {
            let _ = writeln!(s, "{}\t{}\t{:.6}\t{:.6}\t{:.6}", r.size, r.macs, r.median_s, r.min_s, r.max_s);
        }
        s
    }
}
