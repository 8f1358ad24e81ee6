//! `diffsep` — train, run and evaluate the diffusion vocal separator.
//!
//! Exit codes: 2 bad arguments or unusable inputs, 3 I/O and file-format
//! failures, 4 numeric failures during training or sampling.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use diffsep::dsp::ChunkPlan;
use diffsep::io::{scan_dataset, DatasetLayout};
use diffsep::kv::KvMap;
use diffsep::metrics::{self, EvalSource};
use diffsep::nn::{load_model, save_model, ModelConfig, ModelDenoiser, SeparationModel};
use diffsep::sampler::{self, SamplerConfig};
use diffsep::synth::{synthesize, SynthSpec};
use diffsep::train::{train, TrainSinks, TrainingConfig, TrainingSet};
use diffsep::{Error, Result};

#[derive(Parser)]
#[command(
    name = "diffsep",
    about = "Diffusion-based vocal source separation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mixture/vocals dataset.
    Synth(SynthCmd),
    /// Train a separation model.
    Train(TrainCmd),
    /// Separate the vocals from a mixture file.
    Separate(SeparateCmd),
    /// Evaluate separation quality over a dataset.
    Eval(EvalCmd),
    /// Sweep sampler settings over a grid and record every cell.
    Ablate(AblateCmd),
    /// Noise-schedule utilities.
    Schedule {
        #[command(subcommand)]
        command: ScheduleCmd,
    },
    /// Filter-design utilities.
    Dsp {
        #[command(subcommand)]
        command: DspCmd,
    },
}

fn parse_cutoff(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("bad cutoff {s:?}"))
}

/// Sampler flags shared by separate / eval / ablate.
#[derive(Args, Debug)]
struct SamplerArgs {
    /// Sampling steps T.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Stochasticity level.
    #[arg(long, default_value_t = 0.4)]
    eta: f64,
    /// Refinement-noise high-pass cutoff in Hz; omit flag entirely or pass
    /// `--no-cutoff` for unfiltered noise.
    #[arg(long, value_parser = parse_cutoff, default_value = "5000")]
    cutoff_hz: f64,
    /// Disable the refinement-noise high-pass filter.
    #[arg(long, default_value_t = false)]
    no_cutoff: bool,
    /// Base seed for all random streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SamplerArgs {
    fn to_config(&self) -> SamplerConfig {
        SamplerConfig {
            steps: self.steps,
            eta: self.eta,
            cutoff_hz: (!self.no_cutoff).then_some(self.cutoff_hz),
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct ChunkArgs {
    /// Chunk length for overlap-add inference, seconds.
    #[arg(long, default_value_t = 3.0)]
    chunk_seconds: f64,
    /// Chunk overlap fraction in [0, 0.5).
    #[arg(long, default_value_t = 0.20)]
    overlap: f64,
}

impl ChunkArgs {
    fn plan(&self, sample_rate: u32) -> Result<ChunkPlan> {
        let len = (self.chunk_seconds * sample_rate as f64).round() as usize;
        ChunkPlan::new(len.max(1), self.overlap)
    }
}

#[derive(Args)]
struct SynthCmd {
    /// Synthesis spec as key = value text; defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's track count.
    #[arg(long)]
    tracks: Option<usize>,
}

#[derive(Args)]
struct TrainCmd {
    /// Dataset root (`<root>/<track>/{mixture.wav, vocals.wav}`).
    #[arg(long)]
    dataset: PathBuf,
    /// Training config as key = value text; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the trained model.
    #[arg(long)]
    out: PathBuf,
    /// Model architecture: `toy`, `tiny`, `paper`, or a key = value file.
    #[arg(long, default_value = "toy")]
    model_config: String,
    /// Resume from an existing model file instead of a fresh init.
    #[arg(long)]
    init_model: Option<PathBuf>,
    /// Per-step loss curve CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SeparateCmd {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Input mixture WAV.
    #[arg(long)]
    input: PathBuf,
    /// Output vocals WAV.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    chunks: ChunkArgs,
    /// Dump per-step diagnostics to CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output sample format.
    #[arg(long, default_value = "float32")]
    format: String,
}

#[derive(Args)]
struct EvalCmd {
    /// Trained model file (mutually exclusive with --estimates).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory of prepared estimates `<dir>/<track>/vocals.wav`.
    #[arg(long)]
    estimates: Option<PathBuf>,
    /// Dataset root with references.
    #[arg(long)]
    dataset: PathBuf,
    /// Output CSV (appended).
    #[arg(long)]
    out: PathBuf,
    /// Evaluation repeats when eta > 0.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    chunks: ChunkArgs,
}

#[derive(Args)]
struct AblateCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Output CSV; existing cells are skipped (resumable).
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated step counts.
    #[arg(long, default_value = "20,50,100")]
    steps_grid: String,
    /// Comma-separated eta values.
    #[arg(long, default_value = "0,0.2,0.4,0.8")]
    eta_grid: String,
    /// Comma-separated cutoffs in Hz, with `none` for unfiltered.
    #[arg(long, default_value = "none,600,2000,5000")]
    cutoff_grid: String,
    /// Evaluation repeats for stochastic cells.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    chunks: ChunkArgs,
}

#[derive(Subcommand)]
enum ScheduleCmd {
    /// Print the schedule as CSV (columns t, sigma, alpha, beta).
    Dump {
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value = "csv")]
        format: String,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DspCmd {
    /// Design a Butterworth high-pass filter and print its sections as CSV.
    Design {
        #[arg(long)]
        cutoff_hz: f64,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long, default_value_t = 44_100.0)]
        rate: f64,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(cmd) => cmd_synth(cmd),
        Command::Train(cmd) => cmd_train(cmd),
        Command::Separate(cmd) => cmd_separate(cmd),
        Command::Eval(cmd) => cmd_eval(cmd),
        Command::Ablate(cmd) => cmd_ablate(cmd),
        Command::Schedule { command } => cmd_schedule(command),
        Command::Dsp { command } => cmd_dsp(command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::EmptyDataset(_)
        | Error::ContractViolation(_)
        | Error::UndefinedReference(_) => 2,
        Error::Io { .. }
        | Error::CorruptFile { .. }
        | Error::UnsupportedFormat(_)
        | Error::ModelFormat { .. } => 3,
        Error::Numeric(_) => 4,
    }
}

fn read_kv(path: &Path) -> Result<KvMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    KvMap::parse(&text)
}

fn print_config(title: &str, kv: &KvMap) {
    println!("# resolved {title}");
    print!("{}", kv.serialize());
}

fn cmd_synth(cmd: SynthCmd) -> Result<()> {
    let mut spec = match &cmd.spec {
        Some(path) => SynthSpec::from_kv(&read_kv(path)?)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = cmd.seed {
        spec.seed = seed;
    }
    if let Some(tracks) = cmd.tracks {
        spec.track_count = tracks;
    }
    spec.validate()?;
    print_config("synthesis spec", &spec.to_kv());
    synthesize(&spec, &cmd.out)?;
    println!(
        "wrote {} tracks to {}",
        spec.track_count,
        cmd.out.display()
    );
    Ok(())
}

fn model_config_from_arg(arg: &str) -> Result<ModelConfig> {
    match arg {
        "toy" => Ok(ModelConfig::toy()),
        "tiny" => Ok(ModelConfig::tiny()),
        "paper" => Ok(ModelConfig::paper()),
        path => ModelConfig::from_kv(&read_kv(Path::new(path))?),
    }
}

fn cmd_train(cmd: TrainCmd) -> Result<()> {
    let mut cfg = match &cmd.config {
        Some(path) => TrainingConfig::from_kv(&read_kv(path)?)?,
        None => TrainingConfig::default(),
    };
    if let Some(seed) = cmd.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let mut model = match &cmd.init_model {
        Some(path) => load_model(path)?,
        None => {
            let mut mc = model_config_from_arg(&cmd.model_config)?;
            let items = scan_dataset(&cmd.dataset, DatasetLayout::PairedSubdirs)?;
            // Bind the architecture to the dataset rate so training and
            // inference agree.
            mc.sample_rate = items[0].sample_rate;
            SeparationModel::new(mc, cfg.seed)?
        }
    };

    print_config("training config", &cfg.to_kv());
    print_config("model config", &model.config.to_kv());
    println!("# parameters: {}", model.param_count());

    let items = scan_dataset(&cmd.dataset, DatasetLayout::PairedSubdirs)?;
    let dataset = TrainingSet::load(&items, model.config.channel_count)?;
    let sinks = TrainSinks {
        loss_csv: cmd.loss_csv.clone(),
        checkpoint: Some(cmd.out.clone()),
    };
    let reports = train(&dataset, &mut model, &cfg, &sinks)?;
    save_model(&cmd.out, &model)?;
    if let Some(last) = reports.last() {
        println!(
            "finished {} steps: l_diff {:.5} l_lat {:.5} l_rec {:.5}",
            reports.len(),
            last.l_diff,
            last.l_lat,
            last.l_rec
        );
    } else {
        println!("finished 0 steps: model saved unmodified");
    }
    println!("model written to {}", cmd.out.display());
    Ok(())
}

fn cmd_separate(cmd: SeparateCmd) -> Result<()> {
    let cfg = cmd.sampler.to_config();
    let model = load_model(&cmd.model)?;
    let mixture =
        diffsep::io::read_wav(&cmd.input)?.adapt_channels(model.config.channel_count)?;
    if mixture.sample_rate() != model.config.sample_rate {
        return Err(Error::InvalidArgument(format!(
            "input is {} Hz but the model was trained at {} Hz (resampling is not supported)",
            mixture.sample_rate(),
            model.config.sample_rate
        )));
    }
    let plan = cmd.chunks.plan(mixture.sample_rate())?;

    let mut resolved = KvMap::new();
    resolved.set("steps", cfg.steps);
    resolved.set("eta", cfg.eta);
    resolved.set("cutoff_hz", metrics::cutoff_label(cfg.cutoff_hz));
    resolved.set("seed", cfg.seed);
    resolved.set("chunk_seconds", cmd.chunks.chunk_seconds);
    resolved.set("overlap", cmd.chunks.overlap);
    print_config("sampler config", &resolved);

    let denoiser = ModelDenoiser::new(&model);
    let (estimate, trace) = sampler::separate_chunked(&mixture, &denoiser, &cfg, &plan)?;
    if let Some(path) = &cmd.trace {
        sampler::write_trace_csv(path, &trace)?;
    }
    let format = match cmd.format.as_str() {
        "float32" => diffsep::io::WavFormat::Float32,
        "pcm16" => diffsep::io::WavFormat::Pcm16,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown output format {other:?} (use float32 or pcm16)"
            )))
        }
    };
    diffsep::io::write_wav(&cmd.output, &estimate, format)?;
    println!("wrote {}", cmd.output.display());
    Ok(())
}

fn cmd_eval(cmd: EvalCmd) -> Result<()> {
    let cfg = cmd.sampler.to_config();
    let items = scan_dataset(&cmd.dataset, DatasetLayout::PairedSubdirs)?;

    let mut resolved = KvMap::new();
    resolved.set("steps", cfg.steps);
    resolved.set("eta", cfg.eta);
    resolved.set("cutoff_hz", metrics::cutoff_label(cfg.cutoff_hz));
    resolved.set("seed", cfg.seed);
    resolved.set("repeats", cmd.repeats);
    resolved.set("tracks", items.len());
    print_config("evaluation config", &resolved);

    let result = match (&cmd.model, &cmd.estimates) {
        (Some(model_path), None) => {
            let model = load_model(model_path)?;
            let plan = cmd.chunks.plan(model.config.sample_rate)?;
            metrics::evaluate_dataset(
                &EvalSource::Model {
                    model: &model,
                    plan,
                },
                &items,
                &cfg,
                cmd.repeats,
            )?
        }
        (None, Some(dir)) => {
            metrics::evaluate_dataset(&EvalSource::EstimatesDir(dir), &items, &cfg, cmd.repeats)?
        }
        _ => {
            return Err(Error::InvalidArgument(
                "pass exactly one of --model or --estimates".into(),
            ))
        }
    };
    metrics::append_eval_csv(&cmd.out, &result)?;
    println!(
        "median SDR {:.2} dB over {} repeats (mixture baseline {:.2} dB), median SIR {:.2} dB",
        result.mean_median_sdr_db,
        result.repeats,
        result.baseline_median_sdr_db,
        result.mean_median_sir_db
    );
    println!("rows appended to {}", cmd.out.display());
    Ok(())
}

fn parse_grid<T: std::str::FromStr>(raw: &str, what: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|_| Error::InvalidArgument(format!("bad {what} entry {p:?}")))
        })
        .collect()
}

fn cmd_ablate(cmd: AblateCmd) -> Result<()> {
    let steps_grid: Vec<usize> = parse_grid(&cmd.steps_grid, "steps")?;
    let eta_grid: Vec<f64> = parse_grid(&cmd.eta_grid, "eta")?;
    let cutoff_grid: Vec<Option<f64>> = cmd
        .cutoff_grid
        .split(',')
        .map(|p| {
            let p = p.trim();
            if p == "none" {
                Ok(None)
            } else {
                p.parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::InvalidArgument(format!("bad cutoff entry {p:?}")))
            }
        })
        .collect::<Result<_>>()?;

    let mut resolved = KvMap::new();
    resolved.set_list("steps_grid", steps_grid.iter());
    resolved.set_list("eta_grid", eta_grid.iter());
    resolved.set(
        "cutoff_grid",
        cutoff_grid
            .iter()
            .map(|c| metrics::cutoff_label(*c))
            .collect::<Vec<_>>()
            .join(","),
    );
    resolved.set("repeats", cmd.repeats);
    resolved.set("seed", cmd.seed);
    print_config("ablation config", &resolved);

    let model = load_model(&cmd.model)?;
    let items = scan_dataset(&cmd.dataset, DatasetLayout::PairedSubdirs)?;
    let plan = cmd.chunks.plan(model.config.sample_rate)?;
    let done = metrics::completed_cells(&cmd.out)?;

    let total = steps_grid.len() * eta_grid.len() * cutoff_grid.len();
    let mut run = 0usize;
    for &steps in &steps_grid {
        for &eta in &eta_grid {
            for &cutoff in &cutoff_grid {
                run += 1;
                let label = metrics::cutoff_label(cutoff);
                if done
                    .iter()
                    .any(|(s, e, c)| *s == steps && *e == eta && *c == label)
                {
                    println!("[{run}/{total}] T={steps} eta={eta} f_c={label}: already in CSV, skipping");
                    continue;
                }
                let repeats = if eta == 0.0 {
                    if cmd.repeats > 1 {
                        println!(
                            "[{run}/{total}] T={steps} eta=0 is deterministic; ignoring --repeats {}",
                            cmd.repeats
                        );
                    }
                    1
                } else {
                    cmd.repeats
                };
                let cfg = SamplerConfig {
                    steps,
                    eta,
                    cutoff_hz: cutoff,
                    seed: cmd.seed,
                };
                let result = metrics::evaluate_dataset(
                    &EvalSource::Model {
                        model: &model,
                        plan,
                    },
                    &items,
                    &cfg,
                    repeats,
                )?;
                metrics::append_eval_csv(&cmd.out, &result)?;
                println!(
                    "[{run}/{total}] T={steps} eta={eta} f_c={label}: median SDR {:.2} dB ({} repeats)",
                    result.mean_median_sdr_db, result.repeats
                );
            }
        }
    }
    println!("sweep complete: {}", cmd.out.display());
    Ok(())
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_schedule(cmd: ScheduleCmd) -> Result<()> {
    match cmd {
        ScheduleCmd::Dump { steps, format, out } => {
            if format != "csv" {
                return Err(Error::InvalidArgument(format!(
                    "unknown format {format:?} (only csv)"
                )));
            }
            let sched = diffsep::schedule::make_schedule(steps, diffsep::schedule::Spacing::Linear)?;
            let mut text = String::from("t,sigma,alpha,beta\n");
            for (t, &sigma) in sched.sigmas().iter().enumerate() {
                let c = diffsep::schedule::coeffs(sigma)?;
                text.push_str(&format!("{t},{sigma:.9},{:.9},{:.9}\n", c.alpha, c.beta));
            }
            write_or_print(out.as_deref(), &text)
        }
    }
}

fn cmd_dsp(cmd: DspCmd) -> Result<()> {
    match cmd {
        DspCmd::Design {
            cutoff_hz,
            order,
            rate,
            format,
            out,
        } => {
            if format != "csv" {
                return Err(Error::InvalidArgument(format!(
                    "unknown format {format:?} (only csv)"
                )));
            }
            let filter = diffsep::dsp::design_butterworth_hp(cutoff_hz, rate, order)?;
            let mut text = String::from("section,b0,b1,b2,a1,a2\n");
            for (i, s) in filter.sections().iter().enumerate() {
                text.push_str(&format!(
                    "{i},{:.12},{:.12},{:.12},{:.12},{:.12}\n",
                    s.b0, s.b1, s.b2, s.a1, s.a2
                ));
            }
            write_or_print(out.as_deref(), &text)
        }
    }
}
