use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use dudenet::config::TrainConfig;
use dudenet::data::{add_gaussian_noise, load_dir, load_image, save_image, Image};
use dudenet::eval::{benchmark, evaluate_dataset, format_db, psnr, Denoiser, EvalOptions, BENCH_REPEATS, BENCH_SIZES};
use dudenet::graph::{build, preset, MACS_PATCH};
use dudenet::rng::{stream, Purpose};
use dudenet::train::{run_to_dir, Checkpoint, Trainer};
use dudenet::Error;

#[derive(Parser)]
#[command(name = "dudenet", version, about = "Train and evaluate dual-branch denoising networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON config.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Continue a run from a checkpoint.
    Resume {
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
        /// Refuse to resume unless the checkpoint was made with this config.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Defaults to the config output directory, then the checkpoint's directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Denoise one image.
    Denoise {
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Treat the input as clean and corrupt it with this noise level first.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// PSNR table over a directory of clean images.
    Eval {
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [15.0, 25.0, 50.0])]
        sigmas: Vec<f64>,
        /// Round images to 8 bits before measuring.
        #[arg(long)]
        quantize: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the tab-separated rows here.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Layer table, depth, receptive fields, parameters and Gflops.
    Inspect(InspectArgs),
    /// Train several presets under one config and compare them.
    Ablate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long, value_delimiter = ',', required = true)]
        presets: Vec<String>,
    },
    /// Time whole-image denoising at several sizes.
    Benchmark {
        #[arg(short = 'k', long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = BENCH_SIZES)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = BENCH_REPEATS)]
        repeats: usize,
    },
}

#[derive(Args)]
struct InspectArgs {
    /// Preset name.
    #[arg(short, long, required_unless_present = "checkpoint", conflicts_with = "checkpoint")]
    variant: Option<String>,
    #[arg(short = 'k', long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    channels: usize,
    /// Image side used for the MAC count.
    #[arg(long, default_value_t = MACS_PATCH)]
    size: usize,
    #[arg(long)]
    json: bool,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(Error::Config(_) | Error::InvalidArgument(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn configure_threads() -> CliResult {
    let deterministic = std::env::var("DUDE_DETERMINISTIC").is_ok_and(|v| v == "1");
    let threads = match std::env::var("DUDE_THREADS") {
        Ok(v) => Some(
            v.parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("DUDE_THREADS must be a positive integer, got {v:?}")))?,
        ),
        Err(_) => None,
    };
    let threads = if deterministic { Some(1) } else { threads };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn training_images(cfg: &TrainConfig) -> CliResult<Vec<Image>> {
    let dir = cfg
        .train_dir
        .as_ref()
        .ok_or_else(|| CliError::Core(Error::Config("train_dir is required for training".into())))?;
    let images: Vec<Image> = load_dir(dir)?.into_iter().map(|(_, img)| img).collect();
    if images.is_empty() {
        return Err(Error::Data(format!("no .pgm/.ppm images in {}", dir.display())).into());
    }
    Ok(images)
}

fn report_run(ck: &Checkpoint, out: &Path) {
    let last = ck.metrics.last().map_or(f64::NAN, |m| m.mean_loss);
    println!(
        "trained {} for {} epochs (seed {}, config {:016x}); final loss {last:.6}",
        ck.config.variant,
        ck.epoch,
        ck.config.seed,
        ck.config_hash()
    );
    println!("checkpoint {}", out.join("final.ckpt").display());
}

fn cmd_train(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> CliResult {
    let mut cfg = TrainConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out = out
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Usage("no output directory: set out_dir in the config or pass --out".into()))?;
    let images = training_images(&cfg)?;
    info!("training {} on {} images, config {:016x}", cfg.variant, images.len(), cfg.hash());
    let mut trainer = Trainer::new(cfg, &images)?;
    let ck = run_to_dir(&mut trainer, &out)?;
    report_run(&ck, &out);
    Ok(())
}

fn cmd_resume(checkpoint: &Path, config: Option<PathBuf>, out: Option<PathBuf>) -> CliResult {
    let ck = Checkpoint::load(checkpoint)?;
    if let Some(path) = config {
        let cfg = TrainConfig::load(path)?;
        let (expected, found) = (cfg.hash(), ck.config_hash());
        if expected != found {
            return Err(Error::ConfigMismatch { expected, found }.into());
        }
    }
    let out = out
        .or_else(|| ck.config.out_dir.clone())
        .or_else(|| checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    let images = training_images(&ck.config)?;
    info!("resuming {} after epoch {}", ck.config.variant, ck.epoch);
    let mut trainer = Trainer::resume(ck, &images)?;
    let ck = run_to_dir(&mut trainer, &out)?;
    report_run(&ck, &out);
    Ok(())
}

fn cmd_denoise(checkpoint: &Path, input: &Path, output: &Path, sigma: Option<f64>, seed: u64) -> CliResult {
    let ck = Checkpoint::load(checkpoint)?;
    let denoiser = Denoiser::from_checkpoint(&ck)?;
    let img = load_image(input)?;
    let out = match sigma {
        Some(s) => {
            let noisy = add_gaussian_noise(&img, s, &mut stream(seed, Purpose::Demo, 0))?.noisy;
            let out = denoiser.denoise(&noisy)?.clamped;
            let noisy_psnr = psnr(&img, &noisy.map(|v| v.clamp(0.0, 1.0)))?;
            println!("sigma {s}  seed {seed}");
            println!("noisy PSNR    {} dB", format_db(noisy_psnr));
            println!("denoised PSNR {} dB", format_db(psnr(&img, &out)?));
            out
        }
        None => denoiser.denoise(&img)?.clamped,
    };
    save_image(&out, output)?;
    Ok(())
}

fn cmd_eval(checkpoint: &Path, dir: &Path, opts: EvalOptions, tsv: Option<PathBuf>) -> CliResult {
    let ck = Checkpoint::load(checkpoint)?;
    let report = evaluate_dataset(&ck, dir, &opts)?;
    print!("{}", report.to_text());
    if let Some(path) = tsv {
        fs::write(path, report.to_tsv())?;
    }
    Ok(())
}

fn cmd_inspect(args: InspectArgs) -> CliResult {
    let graph = match (&args.variant, &args.checkpoint) {
        (Some(name), _) => build(&preset(name, args.channels)?)?,
        (None, Some(path)) => Checkpoint::load(path)?.graph()?,
        (None, None) => return Err(CliError::Usage("pass --variant or --checkpoint".into())),
    };
    let report = graph.inspect(args.size, args.size);
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn cmd_ablate(config: &Path, presets: &[String]) -> CliResult {
    let base = TrainConfig::load(config)?;
    let test_dir = base
        .test_dir
        .clone()
        .ok_or_else(|| CliError::Core(Error::Config("test_dir is required for ablate".into())))?;
    let root = base.out_dir.clone().unwrap_or_else(|| PathBuf::from("ablate"));
    for p in presets {
        preset(p, base.channels)?;
    }
    let images = training_images(&base)?;
    let sigmas = match base.sigma_mode {
        dudenet::config::SigmaKind::Fixed => vec![base.sigma],
        dudenet::config::SigmaKind::Blind => vec![15.0, 25.0, 50.0],
    };
    let opts = EvalOptions {
        sigmas,
        seed: base.seed,
        quantize: false,
    };
    let mut table = String::from("preset\tparams\tsigma\tnoisy_psnr\tdenoised_psnr\n");
    for p in presets {
        let cfg = TrainConfig {
            variant: p.clone(),
            ..base.clone()
        };
        cfg.validate()?;
        let out = root.join(p);
        info!("ablate: training {p}");
        let mut trainer = Trainer::new(cfg, &images)?;
        let ck = run_to_dir(&mut trainer, &out)?;
        let params = trainer.graph().count_params();
        let report = evaluate_dataset(&ck, &test_dir, &opts)?;
        for m in &report.means {
            let _ = writeln!(
                table,
                "{p}\t{params}\t{}\t{}\t{}",
                m.sigma,
                format_db(m.noisy_psnr),
                format_db(m.denoised_psnr)
            );
        }
    }
    fs::create_dir_all(&root)?;
    fs::write(root.join("ablate.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_benchmark(checkpoint: &Path, sizes: &[usize], repeats: usize) -> CliResult {
    let ck = Checkpoint::load(checkpoint)?;
    let report = benchmark(&Denoiser::from_checkpoint(&ck)?, sizes, repeats)?;
    print!("{}", report.to_text());
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    configure_threads()?;
    match cli.cmd {
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Resume { checkpoint, config, out } => cmd_resume(&checkpoint, config, out),
        Command::Denoise {
            checkpoint,
            input,
            output,
            sigma,
            seed,
        } => cmd_denoise(&checkpoint, &input, &output, sigma, seed),
        Command::Eval {
            checkpoint,
            dir,
            sigmas,
            quantize,
            seed,
            tsv,
        } => cmd_eval(&checkpoint, &dir, EvalOptions { sigmas, seed, quantize }, tsv),
        Command::Inspect(args) => cmd_inspect(args),
        Command::Ablate { config, presets } => cmd_ablate(&config, &presets),
        Command::Benchmark {
            checkpoint,
            sizes,
            repeats,
        } => cmd_benchmark(&checkpoint, &sizes, repeats),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
