//! `stegopurge` command line: dataset construction, embedding/extraction,
//! purification, training, metrics reports, residual visualization, and the
//! audio pipeline.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
//! failure (non-finite loss during training).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stegopurge::audio::{self, AudioFilterParams};
use stegopurge::dataset::{self, DatasetManifest, EmbedMethod};
use stegopurge::error::{Error, Result};
use stegopurge::harness::{self, Checkpoints, PurifyMethod};
use stegopurge::imageio::{read_image, write_image};
use stegopurge::metrics::{per_image_csv, report_csv, report_json};
use stegopurge::model::{
    load_generator, save_generator, ArchConfig, CheckpointMeta, Discriminator, Generator,
};
use stegopurge::par;
use stegopurge::purify::{bayes_shrink_denoise, bicubic_purify, purify_with_generator};
use stegopurge::stego::{
    adaptive_embed, lsb_embed, lsb_extract, random_payload, EmbedRate, StegoPayload,
};
use stegopurge::training::{pretrain_autoencoder, train_gan, TrainConfig};

#[derive(Parser)]
#[command(name = "stegopurge", version, about = "Steganography destruction toolkit")]
struct Cli {
    /// Seed for every random choice this invocation makes
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Report output format
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    format: ReportFormat,

    /// key=value configuration file (training and architecture overrides)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Dataset construction
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Embed a payload into a cover image
    Embed(EmbedArgs),
    /// Extract an LSB payload from a stego image
    Extract {
        input: PathBuf,
        output: PathBuf,
    },
    /// Purify a single image
    Purify(PurifyArgs),
    /// Model training
    Train {
        #[command(subcommand)]
        cmd: TrainCmd,
    },
    /// Metrics reports
    Metrics {
        #[command(subcommand)]
        cmd: MetricsCmd,
    },
    /// Amplified |cover - other| residual image
    Diff(DiffArgs),
    /// Audio pipeline
    Audio {
        #[command(subcommand)]
        cmd: AudioCmd,
    },
}

#[derive(Subcommand)]
enum DatasetCmd {
    /// Generate covers (or load them), embed the method/rate grid, write the
    /// manifest
    Gen(DatasetGenArgs),
}

#[derive(Args)]
struct DatasetGenArgs {
    /// Directory of existing cover images (.pgm/.png); otherwise synthetic
    #[arg(long)]
    covers: Option<PathBuf>,
    /// Number of synthetic covers when --covers is absent
    #[arg(long, default_value_t = 64)]
    synth: usize,
    /// Synthetic cover side in pixels
    #[arg(long, default_value_t = 32)]
    side: usize,
    /// Comma-separated embedding methods
    #[arg(long, default_value = "lsb,adaptive")]
    methods: String,
    /// Comma-separated embedding rates in (0, 0.5]
    #[arg(long, default_value = "0.3,0.5")]
    rates: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    method: String,
    /// Embedding rate in bits per pixel (adaptive; sizes --random payloads)
    #[arg(long, default_value_t = 0.4)]
    rate: f64,
    /// Payload file to embed (lsb)
    #[arg(long, conflicts_with = "random")]
    payload: Option<PathBuf>,
    /// Embed N seeded random payload bytes (lsb)
    #[arg(long)]
    random: Option<usize>,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct PurifyArgs {
    #[arg(long)]
    method: String,
    /// Wavelet decomposition depth
    #[arg(long, default_value_t = 2)]
    levels: usize,
    /// Checkpoint for the neural methods
    #[arg(long)]
    model: Option<PathBuf>,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Subcommand)]
enum TrainCmd {
    /// Phase 1: MSE pretraining with early stopping
    Pretrain {
        #[arg(long)]
        data: PathBuf,
        /// key=value configuration file (alias for --config)
        #[arg(long)]
        cfg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phase 2: GAN fine-tuning from a pretrained checkpoint
    Gan {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        cfg: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Benchmark purifiers over a dataset's test split
    Run(MetricsRunArgs),
}

#[derive(Args)]
struct MetricsRunArgs {
    /// Dataset directory with manifest.json
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated purify methods
    #[arg(long, default_value = "bicubic,wavelet,autoencoder,ddsp")]
    methods: String,
    #[arg(long)]
    model_ae: Option<PathBuf>,
    #[arg(long)]
    model_ddsp: Option<PathBuf>,
    /// Wavelet decomposition depth
    #[arg(long, default_value_t = 2)]
    levels: usize,
    /// Report file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-image rows (CSV)
    #[arg(long)]
    per_image: Option<PathBuf>,
    /// Label this run as a transfer evaluation
    #[arg(long)]
    transfer: bool,
}

#[derive(Args)]
struct DiffArgs {
    /// Residual amplification
    #[arg(long, default_value_t = 8.0)]
    gain: f64,
    cover: PathBuf,
    other: PathBuf,
    output: PathBuf,
}

#[derive(Subcommand)]
enum AudioCmd {
    /// Purify a 16-bit mono PCM WAV through the tile pipeline
    Purify(AudioPurifyArgs),
}

#[derive(Args)]
struct AudioPurifyArgs {
    #[arg(long)]
    method: String,
    /// Tile side; for neural methods the model's input side wins
    #[arg(long, default_value_t = 32)]
    side: usize,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    butter_order: usize,
    #[arg(long, default_value_t = 0.8)]
    butter_cutoff: f64,
    #[arg(long, default_value_t = 5)]
    hann_len: usize,
    input: PathBuf,
    output: PathBuf,
}

/// Training and architecture settings assembled from defaults plus an
/// optional key=value file.
struct RunConfig {
    train: TrainConfig,
    arch: ArchConfig,
}

fn load_run_config(path: Option<&Path>, seed: u64) -> Result<RunConfig> {
    let mut cfg = RunConfig {
        train: TrainConfig {
            seed,
            ..TrainConfig::default()
        },
        arch: ArchConfig::DESK,
    };
    let Some(path) = path else {
        return Ok(cfg);
    };
    let text = std::fs::read_to_string(path)?;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidArgument(format!(
                "{}:{}: expected key=value, got {line}",
                path.display(),
                lineno + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let bad = |what: &str| {
            Error::InvalidArgument(format!("{}: bad {what} value {value}", path.display()))
        };
        match key {
            "alpha" => cfg.train.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "beta1" => cfg.train.beta1 = value.parse().map_err(|_| bad("beta1"))?,
            "beta2" => cfg.train.beta2 = value.parse().map_err(|_| bad("beta2"))?,
            "eps" => cfg.train.eps = value.parse().map_err(|_| bad("eps"))?,
            "batch_size" => cfg.train.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
            "lambda_adv" => cfg.train.lambda_adv = value.parse().map_err(|_| bad("lambda_adv"))?,
            "gan_epochs" => cfg.train.gan_epochs = value.parse().map_err(|_| bad("gan_epochs"))?,
            "patience" => cfg.train.patience = value.parse().map_err(|_| bad("patience"))?,
            "max_epochs" => cfg.train.max_epochs = value.parse().map_err(|_| bad("max_epochs"))?,
            "seed" => cfg.train.seed = value.parse().map_err(|_| bad("seed"))?,
            "base_filters" => cfg.arch.base_filters = value.parse().map_err(|_| bad("base_filters"))?,
            "n_res_blocks" => cfg.arch.n_res_blocks = value.parse().map_err(|_| bad("n_res_blocks"))?,
            "input_side" => cfg.arch.input_side = value.parse().map_err(|_| bad("input_side"))?,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "{}: unknown configuration key {other}",
                    path.display()
                )))
            }
        }
    }
    Ok(cfg)
}

fn parse_methods(text: &str) -> Result<Vec<EmbedMethod>> {
    text.split(',').map(|s| EmbedMethod::parse(s.trim())).collect()
}

fn parse_rates(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            let r: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad rate {s}")))?;
            EmbedRate::new(r)?;
            Ok(r)
        })
        .collect()
}

fn load_covers_dir(dir: &Path) -> Result<Vec<stegopurge::GrayImage>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("pnm") | Some("png")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput("no cover images in directory"));
    }
    paths.iter().map(read_image).collect()
}

fn cmd_dataset_gen(args: &DatasetGenArgs, seed: u64) -> Result<()> {
    let covers = match &args.covers {
        Some(dir) => load_covers_dir(dir)?,
        None => dataset::synth_covers(args.synth, args.side, seed),
    };
    let methods = parse_methods(&args.methods)?;
    let rates = parse_rates(&args.rates)?;
    std::fs::create_dir_all(&args.out)?;
    let manifest = dataset::dataset_generate(&covers, &methods, &rates, seed, &args.out)?;
    println!(
        "wrote {} covers and {} stego images to {}",
        covers.len(),
        manifest.entries.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_embed(args: &EmbedArgs, seed: u64) -> Result<()> {
    let cover = read_image(&args.input)?;
    let stego = match args.method.as_str() {
        "adaptive" => adaptive_embed(&cover, EmbedRate::new(args.rate)?, seed),
        "lsb" => {
            let payload = match (&args.payload, args.random) {
                (Some(path), _) => StegoPayload::new(std::fs::read(path)?),
                (None, Some(n)) => random_payload(n, seed),
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "lsb embedding needs --payload FILE or --random N".into(),
                    ))
                }
            };
            lsb_embed(&cover, &payload)?
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown embedding method {other}"
            )))
        }
    };
    write_image(&stego, &args.output)
}

fn cmd_extract(input: &Path, output: &Path) -> Result<()> {
    let stego = read_image(input)?;
    let payload = lsb_extract(&stego)?;
    std::fs::write(output, payload.bytes())?;
    println!("extracted {} payload bytes", payload.len());
    Ok(())
}

fn load_ckpt_generator(model: Option<&Path>, method: &str) -> Result<Generator<f32>> {
    let path = model.ok_or_else(|| Error::MissingCheckpoint(method.to_string()))?;
    Ok(load_generator(path)?.0)
}

fn cmd_purify(args: &PurifyArgs) -> Result<()> {
    let img = read_image(&args.input)?;
    let out = match args.method.as_str() {
        "bicubic" => bicubic_purify(&img)?,
        "wavelet" => bayes_shrink_denoise(&img, args.levels)?,
        "autoencoder" | "ddsp" => {
            let mut gen = load_ckpt_generator(args.model.as_deref(), &args.method)?;
            purify_with_generator(&mut gen, std::slice::from_ref(&img))?.remove(0)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown purify method {other}"
            )))
        }
    };
    write_image(&out, &args.output)
}

fn dataset_side(manifest: &DatasetManifest, root: &Path) -> Result<usize> {
    let entry = manifest
        .entries
        .first()
        .ok_or(Error::EmptyInput("manifest has no entries"))?;
    let img = read_image(root.join(&entry.cover))?;
    Ok(img.width())
}

fn cmd_train_pretrain(data: &Path, cfg_path: Option<&Path>, out: &Path, seed: u64) -> Result<()> {
    let cfg = load_run_config(cfg_path, seed)?;
    let manifest = DatasetManifest::load(data)?;
    let mut arch = cfg.arch;
    arch.input_side = dataset_side(&manifest, data)?;
    let pairs = dataset::load_paired_dataset(data, &manifest)?;

    let mut gen = Generator::new(arch, cfg.train.seed)?;
    let log = pretrain_autoencoder(&mut gen, &pairs, &cfg.train)?;
    let trained_method = manifest
        .methods()
        .iter()
        .map(|m| m.name())
        .collect::<Vec<_>>()
        .join("+");
    let meta = CheckpointMeta {
        epoch: log.records.len() as u32,
        loss: log.best_val_mse() as f32,
        trained_method,
    };
    save_generator(&gen, &meta, out)?;
    std::fs::write(log_path(out), log.to_csv())?;
    println!(
        "pretrained {} epochs, val mse {:.4} -> {:.4}; wrote {}",
        log.records.len(),
        log.initial_val_mse,
        log.best_val_mse(),
        out.display()
    );
    Ok(())
}

fn cmd_train_gan(
    init: &Path,
    data: &Path,
    cfg_path: Option<&Path>,
    out: &Path,
    seed: u64,
) -> Result<()> {
    let cfg = load_run_config(cfg_path, seed)?;
    let manifest = DatasetManifest::load(data)?;
    let pairs = dataset::load_paired_dataset(data, &manifest)?;

    let (mut gen, meta) = load_generator(init)?;
    let mut disc = Discriminator::new(*gen.cfg(), cfg.train.seed ^ 0xD15C)?;
    let log = train_gan(&mut gen, &mut disc, &pairs, &cfg.train)?;
    let meta = CheckpointMeta {
        epoch: meta.epoch + log.records.len() as u32,
        loss: log.final_val_mse() as f32,
        trained_method: meta.trained_method,
    };
    save_generator(&gen, &meta, out)?;
    std::fs::write(log_path(out), log.to_csv())?;
    println!(
        "fine-tuned {} epochs, val mse {:.4} -> {:.4}; wrote {}",
        log.records.len(),
        log.initial_val_mse,
        log.final_val_mse(),
        out.display()
    );
    Ok(())
}

fn log_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".log.csv");
    ckpt.with_file_name(name)
}

fn cmd_metrics_run(args: &MetricsRunArgs, format: ReportFormat) -> Result<()> {
    let manifest = DatasetManifest::load(&args.data)?;
    let methods: Vec<PurifyMethod> = args
        .methods
        .split(',')
        .map(|s| PurifyMethod::parse(s.trim()))
        .collect::<Result<_>>()?;
    let ckpts = Checkpoints {
        autoencoder: args.model_ae.clone(),
        ddsp: args.model_ddsp.clone(),
    };
    let out = harness::run_benchmark(
        &args.data,
        &manifest,
        &methods,
        args.levels,
        &ckpts,
        args.transfer,
    )?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let report = match format {
        ReportFormat::Csv => report_csv(&out.rows),
        ReportFormat::Json => report_json(&out.rows),
    };
    match &args.out {
        Some(path) => std::fs::write(path, report)?,
        None => print!("{report}"),
    }
    if let Some(path) = &args.per_image {
        std::fs::write(path, per_image_csv(&out.per_image))?;
    }
    Ok(())
}

fn cmd_diff(args: &DiffArgs) -> Result<()> {
    let cover = read_image(&args.cover)?;
    let other = read_image(&args.other)?;
    let out = harness::diff_image(&cover, &other, args.gain)?;
    write_image(&out, &args.output)
}

fn cmd_audio_purify(args: &AudioPurifyArgs) -> Result<()> {
    let sig = audio::read_wav(&args.input)?;
    let params = AudioFilterParams {
        butter_order: args.butter_order,
        butter_cutoff: args.butter_cutoff,
        hann_len: args.hann_len,
    };
    let out = match args.method.as_str() {
        "bicubic" => audio::purify_audio(
            &sig,
            args.side,
            |tiles| par::batch_map(tiles, bicubic_purify).into_iter().collect(),
            &params,
        )?,
        "wavelet" => {
            let levels = args.levels;
            audio::purify_audio(
                &sig,
                args.side,
                |tiles| {
                    par::batch_map(tiles, |t| bayes_shrink_denoise(t, levels))
                        .into_iter()
                        .collect()
                },
                &params,
            )?
        }
        "autoencoder" | "ddsp" => {
            let mut gen = load_ckpt_generator(args.model.as_deref(), &args.method)?;
            let side = gen.cfg().input_side;
            audio::purify_audio(
                &sig,
                side,
                |tiles| purify_with_generator(&mut gen, tiles),
                &params,
            )?
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown purify method {other}"
            )))
        }
    };
    audio::write_wav(&out, &args.output)
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Dataset { cmd: DatasetCmd::Gen(args) } => cmd_dataset_gen(args, cli.seed),
        Command::Embed(args) => cmd_embed(args, cli.seed),
        Command::Extract { input, output } => cmd_extract(input, output),
        Command::Purify(args) => cmd_purify(args),
        Command::Train { cmd } => match cmd {
            TrainCmd::Pretrain { data, cfg, out } => {
                cmd_train_pretrain(data, cfg.as_deref().or(cli.config.as_deref()), out, cli.seed)
            }
            TrainCmd::Gan { init, data, cfg, out } => cmd_train_gan(
                init,
                data,
                cfg.as_deref().or(cli.config.as_deref()),
                out,
                cli.seed,
            ),
        },
        Command::Metrics { cmd: MetricsCmd::Run(args) } => cmd_metrics_run(args, cli.format),
        Command::Diff(args) => cmd_diff(args),
        Command::Audio { cmd: AudioCmd::Purify(args) } => cmd_audio_purify(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
