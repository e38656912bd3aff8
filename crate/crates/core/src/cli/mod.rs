//! The `cfcg` command line: dataset generation, training, inference,
//! evaluation, model reports and the invariant battery.
//!
//! Every command prints a human summary, or a single JSON object with
//! `--json`. Exit status is 0 on success, 1 when `verify` finds a failing
//! check and 2 on any error.

mod config;
mod verify;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

pub use config::{RunConfig, RunPaths};
pub use verify::{
    logdet_oracle, verify_generator, Check, VerifyReport, CYCLE_TOL, LOGDET_TOL, ROUND_TRIP_TOL_F32,
    ROUND_TRIP_TOL_F64, SN_RANGE, WAVELET_TOL,
};

use crate::ctsim::{build_dataset, read_manifest, write_pgm16, Dataset, DIFF_WINDOW_HU, IMAGE_WINDOW_HU};
use crate::disc::DiscConfig;
use crate::error::{Error, Result};
use crate::invgen::{GeneratorParams, MixInit};
use crate::metrics::{score, MetricReport, SsimMode, Units};
use crate::tensor::{read_ntsr_file, write_ntsr_file, Dtype, Tensor};
use crate::train::{Denoiser, LossRecord, TrainData, Trainer};

/// Trainable-parameter counts of the published full-size model, printed
/// for comparison only.
pub const REFERENCE_GENERATOR_PARAMS: usize = 1_204_320;
pub const REFERENCE_TOTAL_PARAMS: usize = 1_866_721;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "CFCG_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cfcg", version, about = "Cycle-free CycleGAN for low-dose CT denoising")]
pub struct Cli {
    /// Print a machine-readable JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the unpaired training pools and the paired eval set.
    GenData(GenDataArgs),
    /// Train the generator and discriminator.
    Train(TrainArgs),
    /// Remove noise from low-dose images with G.
    Denoise(MapArgs),
    /// Add low-dose-like noise to standard-dose images with G^-1.
    SynthesizeNoise(MapArgs),
    /// PSNR/SSIM of noisy inputs and denoised outputs against clean references.
    Eval(EvalArgs),
    /// Parameter counts and invertibility figures of a model.
    Info(InfoArgs),
    /// Run the invertibility and consistency checks.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON run configuration (preset, train, data, paths).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset to start from: desk or paper.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override one config key, e.g. `--set train.lr=2e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), self.preset.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Output directory (its parent must exist).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub cfg: ConfigArgs,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory for checkpoints and the loss log.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue from a checkpoint; its stored config is used.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Override the total iteration count.
    #[arg(long)]
    pub iters: Option<u64>,
    /// Print progress to stderr every this many iterations (0 = never).
    #[arg(long, default_value_t = 100)]
    pub log_every: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F64,
    F32,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// An NTSR tensor file, or a directory of them.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory for tensors and previews.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    /// Skip the PGM previews.
    #[arg(long)]
    pub no_preview: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitsArg {
    Normalized,
    Hu,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory containing eval pairs.
    #[arg(long)]
    pub data: PathBuf,
    /// Directory for input.csv, output.csv and delta.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = UnitsArg::Normalized)]
    pub units: UnitsArg,
    /// Use whole-image SSIM instead of the 11x11 Gaussian window.
    #[arg(long)]
    pub global_ssim: bool,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// Checkpoint to describe; without it, a fresh model from the config.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Checkpoint to verify.
    #[arg(long, conflicts_with = "random")]
    pub checkpoint: Option<PathBuf>,
    /// Verify this many random parameter draws instead.
    #[arg(long)]
    pub random: Option<usize>,
    /// Base seed for random draws and test inputs.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Side of the square test image.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

/// What a command produced: a human summary, a JSON summary, and whether
/// it found failures (as opposed to errors).
#[derive(Debug, Clone)]
pub struct Outcome {
    pub text: String,
    pub json: Value,
    pub failed: bool,
}

impl Outcome {
    fn ok(text: String, json: Value) -> Self {
        Outcome { text, json, failed: false }
    }
}

fn need(path: Option<PathBuf>, fallback: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.or_else(|| fallback.clone())
        .ok_or_else(|| Error::InvalidArgument(format!("missing {flag} (or the matching paths entry in the config)")))
}

pub fn gen_data(args: GenDataArgs) -> Result<Outcome> {
    let cfg = args.cfg.resolve()?;
    let out = need(args.out, &cfg.paths.data_dir, "--out")?;
    let start = Instant::now();
    let ds = build_dataset(&cfg.data)?;
    ds.write(&out)?;
    let m = &ds.manifest;
    let text = format!(
        "wrote {} low-dose + {} standard-dose training images and {} eval pairs ({}x{}) to {} in {:.1}s",
        m.train_ld_count,
        m.train_sd_count,
        m.eval_count,
        m.grid,
        m.grid,
        out.display(),
        start.elapsed().as_secs_f64()
    );
    let json = json!({
        "command": "gen-data",
        "out_dir": out,
        "grid": m.grid,
        "train_ld": m.train_ld_count,
        "train_sd": m.train_sd_count,
        "eval": m.eval_count,
    });
    Ok(Outcome::ok(text, json))
}

/// Checkpoint file name for iteration `iter`.
pub fn checkpoint_name(iter: u64) -> String {
    format!("ckpt_{iter:07}.cfcg")
}

pub const FINAL_CHECKPOINT: &str = "final.cfcg";
pub const LOSS_LOG: &str = "loss.csv";

/// Loss-log rows from an earlier run that precede `iter`.
fn kept_rows(path: &Path, iter: u64) -> Result<Vec<String>> {
    if iter == 0 || !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(Error::at_path(path))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| l.split(',').next().and_then(|v| v.parse::<u64>().ok()).is_some_and(|i| i < iter))
        .map(str::to_string)
        .collect())
}

pub fn train(args: TrainArgs) -> Result<Outcome> {
    let cfg = args.cfg.resolve()?;
    let data_dir = need(args.data, &cfg.paths.data_dir, "--data")?;
    let out = need(args.out, &cfg.paths.out_dir, "--out")?;
    let mut trainer = match &args.resume {
        Some(p) => Trainer::load(p)?,
        None => Trainer::new(cfg.train.clone())?,
    };
    if let Some(n) = args.iters {
        trainer.config.total_iters = n;
    }
    let manifest = read_manifest(&data_dir)?;
    let ds = Dataset::load(&data_dir)?;
    let data = TrainData::from_images(&ds.train_ld, &ds.train_sd, trainer.config.generator.levels)?;
    fs::create_dir_all(&out).map_err(Error::at_path(&out))?;
    trainer.dump_dir = Some(out.join("nonfinite"));

    let log_path = out.join(LOSS_LOG);
    let kept = kept_rows(&log_path, trainer.iter)?;
    let file = fs::File::create(&log_path).map_err(Error::at_path(&log_path))?;
    let mut log = BufWriter::new(file);
    let io = |e: std::io::Error| Error::at_path(&log_path)(e);
    writeln!(log, "{}", LossRecord::CSV_HEADER).map_err(io)?;
    for row in &kept {
        writeln!(log, "{row}").map_err(io)?;
    }

    let start = Instant::now();
    let first = trainer.iter;
    let period = trainer.config.checkpoint_period;
    let mut last = None;
    let result = trainer.run(&data, |t, rec| {
        writeln!(log, "{}", rec.csv_row()).map_err(io)?;
        if t.iter % period == 0 {
            log.flush().map_err(io)?;
            t.save(out.join(checkpoint_name(t.iter)))?;
        }
        if args.log_every > 0 && (t.iter % args.log_every == 0 || t.iter == t.config.total_iters) {
            eprintln!(
                "iter {:>7}/{}  d {:.4}  g_adv {:.4}  g_id {:.5}  lr {:.2e}  {:.1}s",
                t.iter,
                t.config.total_iters,
                rec.d_loss,
                rec.g_adv,
                rec.g_id,
                rec.lr,
                start.elapsed().as_secs_f64()
            );
        }
        last = Some(rec.clone());
        Ok(())
    });
    log.flush().map_err(io)?;
    result?;
    let final_path = out.join(FINAL_CHECKPOINT);
    trainer.save(&final_path)?;
    let secs = start.elapsed().as_secs_f64();
    let text = format!(
        "trained iterations {}..{} on {} ({} LD / {} SD images) in {:.1}s; final checkpoint {}",
        first,
        trainer.iter,
        data_dir.display(),
        manifest.train_ld_count,
        manifest.train_sd_count,
        secs,
        final_path.display()
    );
    let json = json!({
        "command": "train",
        "start_iter": first,
        "iterations": trainer.iter,
        "seconds": secs,
        "checkpoint": final_path,
        "loss_log": log_path,
        "last": last.map(|r| json!({"d_loss": r.d_loss, "g_adv": r.g_adv, "g_id": r.g_id, "lr": r.lr})),
    });
    Ok(Outcome::ok(text, json))
}

/// Denoising or noise synthesis with a frozen generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Denoise,
    Synthesize,
}

enum AnyDenoiser {
    F64(Denoiser<f64>),
    F32(Denoiser<f32>),
}

impl AnyDenoiser {
    fn new(gen: &GeneratorParams, p: Precision) -> Result<Self> {
        Ok(match p {
            Precision::F64 => AnyDenoiser::F64(Denoiser::new(gen)?),
            Precision::F32 => AnyDenoiser::F32(Denoiser::new(gen)?),
        })
    }

    fn apply(&self, image: &Tensor, dir: Direction) -> Result<Tensor> {
        match (self, dir) {
            (AnyDenoiser::F64(d), Direction::Denoise) => d.denoise(image),
            (AnyDenoiser::F64(d), Direction::Synthesize) => d.synthesize_noise(image),
            (AnyDenoiser::F32(d), Direction::Denoise) => d.denoise(image),
            (AnyDenoiser::F32(d), Direction::Synthesize) => d.synthesize_noise(image),
        }
    }

    /// Applies the map to every image of a `(N,1,H,W)` batch.
    fn apply_batch(&self, t: &Tensor, dir: Direction) -> Result<Tensor> {
        let items: Vec<Tensor> = (0..t.shape().batch).map(|n| t.batch_item(n)).collect();
        let out = items.iter().map(|x| self.apply(x, dir)).collect::<Result<Vec<_>>>()?;
        Tensor::stack(&out)
    }
}

fn ntsr_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if !input.is_dir() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(Error::at_path(input))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ntsr"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!("no .ntsr files in {}", input.display())));
    }
    Ok(files)
}

pub fn map_images(args: MapArgs, dir: Direction) -> Result<Outcome> {
    let trainer = Trainer::load(&args.checkpoint)?;
    let model = AnyDenoiser::new(&trainer.gen, args.precision)?;
    let inputs = ntsr_inputs(&args.input)?;
    fs::create_dir_all(&args.out).map_err(Error::at_path(&args.out))?;
    let dtype = match args.precision {
        Precision::F64 => Dtype::F64,
        Precision::F32 => Dtype::F32,
    };
    let mut written = Vec::new();
    for path in &inputs {
        let x = read_ntsr_file(path)?;
        let y = model.apply_batch(&x, dir)?;
        let stem = path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned());
        let target = args.out.join(format!("{stem}.ntsr"));
        write_ntsr_file(&target, &y, dtype)?;
        if !args.no_preview {
            for n in 0..y.shape().batch {
                let tag = if y.shape().batch == 1 { stem.clone() } else { format!("{stem}_{n}") };
                let (xi, yi) = (x.batch_item(n), y.batch_item(n));
                write_pgm16(args.out.join(format!("{tag}.pgm")), &yi, IMAGE_WINDOW_HU)?;
                write_pgm16(args.out.join(format!("{tag}_input.pgm")), &xi, IMAGE_WINDOW_HU)?;
                write_pgm16(args.out.join(format!("{tag}_diff.pgm")), &xi.sub(&yi)?, DIFF_WINDOW_HU)?;
            }
        }
        written.push(target);
    }
    let name = match dir {
        Direction::Denoise => "denoise",
        Direction::Synthesize => "synthesize-noise",
    };
    let text = format!("{name}: wrote {} tensor file(s) to {}", written.len(), args.out.display());
    Ok(Outcome::ok(text, json!({"command": name, "outputs": written})))
}

/// Scores for the eval set: noisy input vs clean, and mapped output vs clean.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub input: MetricReport,
    pub output: MetricReport,
}

impl EvalResult {
    pub fn delta_psnr(&self) -> f64 {
        self.output.psnr_mean_std().0 - self.input.psnr_mean_std().0
    }

    pub fn delta_ssim(&self) -> f64 {
        self.output.ssim_mean_std().0 - self.input.ssim_mean_std().0
    }

    /// `image_id,delta_psnr_db,delta_ssim` rows with a mean row.
    pub fn delta_csv(&self) -> String {
        let mut s = String::from("image_id,delta_psnr_db,delta_ssim\n");
        for i in 0..self.input.count() {
            s += &format!(
                "{},{},{}\n",
                self.input.ids[i],
                self.output.psnr[i] - self.input.psnr[i],
                self.output.ssim[i] - self.input.ssim[i]
            );
        }
        s += &format!("mean,{},{}\n", self.delta_psnr(), self.delta_ssim());
        s
    }
}

/// Denoises every noisy eval image with `gen` and scores both versions.
pub fn evaluate(
    gen: &GeneratorParams,
    ds: &Dataset,
    units: Units,
    mode: SsimMode,
    precision: Precision,
) -> Result<EvalResult> {
    if ds.eval.is_empty() {
        return Err(Error::InvalidArgument("the dataset has no paired eval images".into()));
    }
    let model = AnyDenoiser::new(gen, precision)?;
    let rows = ds
        .eval
        .par_iter()
        .map(|p| {
            let out = model.apply(&p.noisy, Direction::Denoise)?;
            Ok((score(&p.noisy, &p.clean, units, mode)?, score(&out, &p.clean, units, mode)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut res = EvalResult { input: MetricReport::default(), output: MetricReport::default() };
    for (p, (a, b)) in ds.eval.iter().zip(rows) {
        let id = format!("{}", p.seed);
        res.input.push(id.clone(), a.0, a.1);
        res.output.push(id, b.0, b.1);
    }
    Ok(res)
}

pub fn eval(args: EvalArgs) -> Result<Outcome> {
    let trainer = Trainer::load(&args.checkpoint)?;
    let ds = Dataset::load(&args.data)?;
    let units = match args.units {
        UnitsArg::Normalized => Units::Normalized,
        UnitsArg::Hu => Units::Hu,
    };
    let mode = if args.global_ssim { SsimMode::Global } else { SsimMode::Windowed };
    let res = evaluate(&trainer.gen, &ds, units, mode, args.precision)?;
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(Error::at_path(out))?;
        for (name, body) in [
            ("input.csv", res.input.to_csv()),
            ("output.csv", res.output.to_csv()),
            ("delta.csv", res.delta_csv()),
        ] {
            let p = out.join(name);
            fs::write(&p, body).map_err(Error::at_path(&p))?;
        }
    }
    let (ip, is) = (res.input.psnr_mean_std(), res.input.ssim_mean_std());
    let (op, os) = (res.output.psnr_mean_std(), res.output.ssim_mean_std());
    let text = format!(
        "{} eval pairs ({:?} units)\n  input   PSNR {:.3} +- {:.3} dB  SSIM {:.4} +- {:.4}\n  output  PSNR {:.3} +- {:.3} dB  SSIM {:.4} +- {:.4}\n  delta   PSNR {:+.3} dB  SSIM {:+.4}",
        res.input.count(),
        units,
        ip.0,
        ip.1,
        is.0,
        is.1,
        op.0,
        op.1,
        os.0,
        os.1,
        res.delta_psnr(),
        res.delta_ssim()
    );
    let json = json!({
        "command": "eval",
        "pairs": res.input.count(),
        "units": units,
        "input": {"psnr_mean": ip.0, "psnr_std": ip.1, "ssim_mean": is.0, "ssim_std": is.1},
        "output": {"psnr_mean": op.0, "psnr_std": op.1, "ssim_mean": os.0, "ssim_std": os.1},
        "delta_psnr": res.delta_psnr(),
        "delta_ssim": res.delta_ssim(),
    });
    Ok(Outcome::ok(text, json))
}

/// Counts and invertibility figures of one model.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ModelInfo {
    pub blocks: usize,
    pub levels: usize,
    pub width: usize,
    pub generator_params: usize,
    pub generator_closed_form: usize,
    pub discriminator_params: usize,
    pub discriminator_closed_form: usize,
    pub total_params: usize,
    pub lipschitz_bound: f64,
    pub mix_determinants: Vec<f64>,
}

impl ModelInfo {
    pub fn new(gen: &GeneratorParams, disc_cfg: &DiscConfig, disc_params: usize) -> Self {
        let g = gen.parameter_count();
        ModelInfo {
            blocks: gen.config.blocks,
            levels: gen.config.levels,
            width: gen.config.width,
            generator_params: g,
            generator_closed_form: gen.config.parameter_count(),
            discriminator_params: disc_params,
            discriminator_closed_form: disc_cfg.parameter_count(),
            total_params: g + disc_params,
            lipschitz_bound: gen.lipschitz_bound(),
            mix_determinants: gen.mix_determinants(),
        }
    }

    pub fn to_text(&self) -> String {
        let dets = self.mix_determinants.iter().map(|d| format!("{d:.6}")).collect::<Vec<_>>().join(", ");
        format!(
            "generator      {:>10} parameters (closed form {})\n\
             discriminator  {:>10} parameters (closed form {})\n\
             total          {:>10}\n\
             reference      generator {}, total {} (comparison only, not an exact-match claim)\n\
             L = {} blocks, J = {} wavelet levels, c = {} hidden channels\n\
             lipschitz bound {:.6e}\n\
             |det W_i|       [{}]",
            self.generator_params,
            self.generator_closed_form,
            self.discriminator_params,
            self.discriminator_closed_form,
            self.total_params,
            REFERENCE_GENERATOR_PARAMS,
            REFERENCE_TOTAL_PARAMS,
            self.blocks,
            self.levels,
            self.width,
            self.lipschitz_bound,
            dets
        )
    }
}

pub fn info(args: InfoArgs) -> Result<Outcome> {
    let (trainer, source) = match &args.checkpoint {
        Some(p) => (Trainer::load(p)?, p.display().to_string()),
        None => {
            let cfg = args.cfg.resolve()?;
            (Trainer::new(cfg.train)?, format!("fresh {} model", cfg.preset))
        }
    };
    let disc_params: usize = trainer.disc.params().iter().map(|t| t.numel()).sum();
    let info = ModelInfo::new(&trainer.gen, &trainer.disc.config, disc_params);
    let text = format!("{source} (iteration {})\n{}", trainer.iter, info.to_text());
    let mut json = serde_json::to_value(&info)?;
    json["command"] = json!("info");
    json["source"] = json!(source);
    json["iteration"] = json!(trainer.iter);
    json["reference"] = json!({
        "generator_params": REFERENCE_GENERATOR_PARAMS,
        "total_params": REFERENCE_TOTAL_PARAMS,
        "note": "not an exact-match claim",
    });
    Ok(Outcome::ok(text, json))
}

/// A random generator for verification: orthogonal mixes and randomized
/// output layers, so every coupling step is non-trivial.
pub fn random_generator(cfg: &RunConfig, seed: u64) -> GeneratorParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gcfg = crate::invgen::GeneratorConfig { mix_init: MixInit::Orthogonal, ..cfg.train.generator };
    let mut g = GeneratorParams::new(gcfg, &mut rng);
    g.randomize_outputs(0.05, &mut rng);
    g
}

pub fn verify(args: VerifyArgs) -> Result<Outcome> {
    let mut reports = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    rng.set_stream(7);
    match (&args.checkpoint, args.random) {
        (Some(p), _) => {
            let t = Trainer::load(p)?;
            reports.push(verify_generator(p.display().to_string(), &t.gen, args.size, &mut rng));
        }
        (None, Some(n)) => {
            let cfg = args.cfg.resolve()?;
            for i in 0..n as u64 {
                let g = random_generator(&cfg, args.seed + i);
                reports.push(verify_generator(format!("random draw {}", args.seed + i), &g, args.size, &mut rng));
            }
        }
        (None, None) => return Err(Error::InvalidArgument("verify needs --checkpoint or --random N".into())),
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    let mut text: String = reports.iter().map(VerifyReport::to_text).collect();
    text += &format!("{passed}/{} passed", reports.len());
    let json = json!({
        "command": "verify",
        "passed": passed == reports.len(),
        "reports": reports,
    });
    Ok(Outcome { text, json, failed: passed != reports.len() })
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Denoise(a) => map_images(a, Direction::Denoise),
        Command::SynthesizeNoise(a) => map_images(a, Direction::Synthesize),
        Command::Eval(a) => eval(a),
        Command::Info(a) => info(a),
        Command::Verify(a) => verify(a),
    }
}

/// Applies `CFCG_THREADS` to the global thread pool.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.max(1))
        .build_global()
        .map_err(|e| Error::Config(format!("{THREADS_ENV}: {e}")))
}

/// Parses the process arguments, runs the command and reports.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let as_json = cli.json;
    let result = init_threads().and_then(|_| run(cli));
    match result {
        Ok(o) => {
            if as_json {
                println!("{}", o.json);
            } else {
                println!("{}", o.text);
            }
            if o.failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            if as_json {
                println!("{}", json!({"error": e.to_string()}));
            }
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
