//! Command-line front end for the ATLAS experiments and property checks.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use atlas::harness::{
    run_appendix, run_grid, write_appendix, ExperimentConfig, LrMode, NoiseMode, Protocol,
};
use atlas::optim::AdamMode;
use atlas::rng::Stream;
use atlas::targets::{AnalyticId, ThetaMode};
use atlas::verify::{run_suite, SuiteConfig};
use atlas::{model_file, AtlasModel, Variant};

#[derive(Parser)]
#[command(name = "atlas", version, about = "ATLAS spline approximator experiments", long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continual-learning grid over dimensions, region widths and trials
    Grid {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for records, CSV files and manifest; reruns resume from it
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train-expand run on one analytic target
    Appendix {
        /// Target id: A, B, C or D
        #[arg(long, short = 'e', default_value = "A")]
        experiment: AnalyticId,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the sampled property checks against a model file
    Verify {
        /// Model file
        model: PathBuf,
        #[arg(long, env = "ATLAS_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 20)]
        fd_points: usize,
        #[arg(long, default_value_t = 1e-5)]
        fd_step: f64,
        /// Orthogonality gap (default: support width of the trainable bank)
        #[arg(long)]
        gap: Option<f64>,
    },
    /// Forward pass of a model on points read from a CSV file (`-` for stdin)
    Eval { model: PathBuf, points: PathBuf },
    /// Write a new model file, zero-initialized unless `--random` is given
    Init {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long = "M", alias = "m", default_value_t = 10)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        r: u32,
        #[arg(long, default_value = "distal_orthogonal")]
        variant: Variant,
        /// Fill every coefficient with N(0, scale^2) drawn from this seed
        #[arg(long)]
        random: Option<u64>,
        #[arg(long, default_value_t = 0.1)]
        scale: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Start from a JSON configuration (as stored in a manifest's `config`)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Full grid: dims 1,2,8 and 30 trials
    #[arg(long)]
    full: bool,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long)]
    r: Option<u32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs_task1: Option<usize>,
    #[arg(long)]
    epochs_task2: Option<usize>,
    /// Fixed learning rate for every trial
    #[arg(long, conflicts_with = "lr_range")]
    lr: Option<f64>,
    /// Uniform learning-rate range per trial
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    lr_range: Option<Vec<f64>>,
    /// Fixed training-noise standard deviation
    #[arg(long, conflicts_with = "noise_mean")]
    noise_sigma: Option<f64>,
    /// Mean of the exponential noise-level distribution
    #[arg(long)]
    noise_mean: Option<f64>,
    #[arg(long, env = "ATLAS_SEED")]
    seed: Option<u64>,
    /// Angle convention of target A: as_written or atan2_unsquared
    #[arg(long)]
    theta: Option<ThetaMode>,
    /// dense or lazy
    #[arg(long)]
    adam: Option<AdamMode>,
    #[arg(long)]
    points_per_split: Option<usize>,
    #[arg(long)]
    rbf_count: Option<usize>,
    /// Worker threads (0 = one per core)
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    segment_epochs: Option<usize>,
    #[arg(long)]
    appendix_task2_epochs: Option<usize>,
    #[arg(long)]
    appendix_lr: Option<f64>,
    #[arg(long)]
    appendix_noise: Option<f64>,
    #[arg(long)]
    delta_m: Option<usize>,
}

macro_rules! set {
    ($target:expr, $value:expr) => {
        if let Some(v) = $value {
            $target = v;
        }
    };
}

impl ConfigArgs {
    fn build(self, protocol: Protocol) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(
                &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
            )
            .with_context(|| format!("parsing {}", path.display()))?,
            None if self.full => ExperimentConfig::full(),
            None => ExperimentConfig::default(),
        };
        if self.full {
            let full = ExperimentConfig::full();
            cfg.dims = full.dims;
            cfg.trials = full.trials;
        }
        cfg.protocol = protocol;
        set!(cfg.dims, self.dims);
        set!(cfg.widths, self.widths);
        set!(cfg.trials, self.trials);
        set!(cfg.m, self.m);
        set!(cfg.r, self.r);
        set!(cfg.batch_size, self.batch_size);
        set!(cfg.epochs_task1, self.epochs_task1);
        set!(cfg.epochs_task2, self.epochs_task2);
        if let Some(value) = self.lr {
            cfg.lr_mode = LrMode::Fixed { value };
        }
        if let Some(range) = self.lr_range {
            cfg.lr_mode = LrMode::RandomUniform {
                lo: range[0],
                hi: range[1],
            };
        }
        if let Some(sigma) = self.noise_sigma {
            cfg.noise_mode = NoiseMode::Fixed { sigma };
        }
        if let Some(mean) = self.noise_mean {
            cfg.noise_mode = NoiseMode::Exponential { mean };
        }
        set!(cfg.master_seed, self.seed);
        set!(cfg.expa_theta, self.theta);
        set!(cfg.adam_mode, self.adam);
        set!(cfg.points_per_split, self.points_per_split);
        set!(cfg.rbf_count, self.rbf_count);
        set!(cfg.workers, self.workers);
        set!(cfg.appendix.segments, self.segments);
        set!(cfg.appendix.segment_epochs, self.segment_epochs);
        set!(cfg.appendix.task2_epochs, self.appendix_task2_epochs);
        set!(cfg.appendix.lr, self.appendix_lr);
        set!(cfg.appendix.noise_sigma, self.appendix_noise);
        set!(cfg.appendix.delta_m, self.delta_m);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn grid(config: ConfigArgs, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let cfg = config.build(Protocol::Grid)?;
    eprintln!(
        "running {} records (dims {:?}, {} widths, {} trials)",
        cfg.expected_records(),
        cfg.dims,
        cfg.widths.len(),
        cfg.trials
    );
    let outcome = run_grid(&cfg, out.as_deref())?;
    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "n\tdelta\tvariant\tcompleted\ttask1_test\ttask2_test\tdegradation"
    )?;
    for row in &outcome.summary {
        writeln!(
            stdout,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.n,
            row.delta,
            row.variant,
            row.completed,
            fmt_opt(row.mean_task1_test_mae),
            fmt_opt(row.mean_task2_test_mae),
            fmt_opt(row.mean_degradation)
        )?;
    }
    let failed = outcome.records.iter().filter(|r| !r.is_completed()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", outcome.records.len());
    }
    Ok(ExitCode::SUCCESS)
}

fn appendix(id: AnalyticId, config: ConfigArgs, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let cfg = config.build(Protocol::Appendix)?;
    let run = run_appendix(&cfg, id)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "segment\tr\tM\tvalidation_mae\tafter_expansion")?;
    for (i, seg) in run.segments.iter().enumerate() {
        writeln!(
            stdout,
            "{}\t{}\t{}\t{:.6}\t{}",
            i + 1,
            seg.r,
            seg.m,
            seg.end_validation_mae,
            fmt_opt(seg.expanded_validation_mae)
        )?;
    }
    writeln!(
        stdout,
        "task2 test MAE inside hole: {} -> {}",
        fmt_opt(run.before_task2.inside),
        fmt_opt(run.after_task2.inside)
    )?;
    writeln!(
        stdout,
        "task2 test MAE outside hole: {} -> {}",
        fmt_opt(run.before_task2.outside),
        fmt_opt(run.after_task2.outside)
    )?;
    if let Some(dir) = out {
        write_appendix(&run, &cfg, &dir)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn verify(model: &Path, seed: u64, cfg: SuiteConfig) -> anyhow::Result<ExitCode> {
    let model = model_file::load(model).with_context(|| format!("loading {}", model.display()))?;
    let reports = run_suite(&model, seed, &cfg)?;
    let mut stdout = io::stdout().lock();
    for report in &reports {
        writeln!(stdout, "{}", serde_json::to_string(report)?)?;
    }
    Ok(if reports.iter().all(|r| r.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}

fn eval(model: &Path, points: &Path) -> anyhow::Result<ExitCode> {
    let model = model_file::load(model).with_context(|| format!("loading {}", model.display()))?;
    let reader: Box<dyn BufRead> = if points.as_os_str() == "-" {
        Box::new(io::stdin().lock())
    } else {
        Box::new(BufReader::new(
            fs::File::open(points).with_context(|| format!("opening {}", points.display()))?,
        ))
    };
    let mut stdout = io::stdout().lock();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let x: Vec<f64> = match line.split(',').map(|v| v.trim().parse()).collect() {
            Ok(x) => x,
            // a non-numeric first line is a header
            Err(_) if i == 0 => continue,
            Err(_) => bail!("line {}: not a list of numbers", i + 1),
        };
        let y = model
            .forward(&x)
            .with_context(|| format!("line {}", i + 1))?;
        let text: Vec<String> = y.iter().map(f64::to_string).collect();
        writeln!(stdout, "{}", text.join(","))?;
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn init(
    n: usize,
    p: usize,
    m: usize,
    r: u32,
    variant: Variant,
    random: Option<u64>,
    scale: f64,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let mut model = AtlasModel::new(n, p, m, r, variant)?;
    if let Some(seed) = random {
        let mut rng = Stream::new(seed);
        model.for_each_coeff_mut(|c| *c = rng.normal_with(0.0, scale));
    }
    model_file::save(&model, out)?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Grid { config, out } => grid(config, out),
        Command::Appendix {
            experiment,
            config,
            out,
        } => appendix(experiment, config, out),
        Command::Verify {
            model,
            seed,
            points,
            pairs,
            fd_points,
            fd_step,
            gap,
        } => verify(
            &model,
            seed,
            SuiteConfig {
                points,
                pairs,
                fd_points,
                fd_step,
                gap,
            },
        ),
        Command::Eval { model, points } => eval(&model, &points),
        Command::Init {
            n,
            p,
            m,
            r,
            variant,
            random,
            scale,
            out,
        } => init(n, p, m, r, variant, random, scale, &out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
