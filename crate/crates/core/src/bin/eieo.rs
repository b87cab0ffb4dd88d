use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eieo::envs::BARRIER_PENALTY;
use eieo::geometry::{ConvexPolygon, Point2, RegionSet};
use eieo::harness::{plot_dir, run_landscape, run_train, run_transfer, Experiment, ExperimentConfig};
use eieo::homotopy::{read_trajectory_set, signature, Anchors, Trajectory};
use eieo::wasserstein::{w_infinity, EmpiricalDistribution};
use eieo::Error;

const EXIT_DIFFERENT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "eieo", version, about = "Ease-in-ease-out transfer across homotopy classes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds to run, replacing the configured list. Repeatable. The
    /// landscape scan uses the first.
    #[arg(long, global = true, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory, replacing the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Interaction-step budget per run, replacing the configured one.
    #[arg(long, global = true)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train source policies and write their checkpoints.
    Train,
    /// Run the method × seed transfer grid and write the results table.
    Transfer,
    /// Scan the two-parameter loss landscape with and without the barrier.
    Landscape,
    /// Compare the homotopy classes of two trajectories.
    Homotopy {
        first: PathBuf,
        second: PathBuf,
        /// Barrier rectangle `xmin,ymin,xmax,ymax`, instead of the
        /// configured environment's barrier. Repeatable.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rect: Vec<f64>,
        /// Start anchor `x,y`; defaults to the first state of FIRST.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Vec<f64>,
        /// Goal anchor `x,y`; defaults to the last state of FIRST.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        goal: Vec<f64>,
    },
    /// Bottleneck W∞ distance between two trajectory-set CSVs.
    Winf {
        first: PathBuf,
        second: PathBuf,
        /// States per trajectory after arc-length resampling.
        #[arg(long, default_value_t = 129)]
        length: usize,
    },
    /// Render SVG figures for every run below a directory.
    Plot { dir: PathBuf },
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. }
            | Error::MissingCheckpoint(_)
            | Error::MissingData(_)
            | Error::Parse { .. }
            | Error::UnequalSupport(..)
            | Error::CollidingTrajectory
            | Error::LengthMismatch(..)
            | Error::InvalidTrajectory(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

fn experiment(common: &Common, command: &Command) -> Result<Experiment, Failure> {
    let path = common.config.as_ref().ok_or_else(|| usage("--config is required"))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(&first) = common.seed.first() {
        config.seeds = common.seed.clone();
        // The landscape scan is a single run; it takes the first seed.
        config.landscape.seed = first;
    }
    if let Some(out) = &common.out {
        config.output = out.clone();
    }
    if let Some(budget) = common.budget {
        match command {
            Command::Train => config.source.budget = budget,
            _ => config.budget = budget,
        }
    }
    Ok(Experiment::new(config)?)
}

fn read_trajectory(path: &Path) -> Result<Trajectory, Failure> {
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Trajectory::read_csv(file).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_set(path: &Path) -> Result<Vec<Trajectory>, Failure> {
    let file = File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    read_trajectory_set(file).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn point(v: &[f64]) -> Option<Point2> {
    (v.len() == 2).then(|| Point2::new(v[0], v[1]))
}

fn homotopy(common: &Common, first: &Path, second: &Path, rect: &[f64], start: &[f64], goal: &[f64]) -> Result<u8, Failure> {
    if !rect.len().is_multiple_of(4) {
        return Err(usage("--rect takes xmin,ymin,xmax,ymax"));
    }
    if [start, goal].iter().any(|p| !p.is_empty() && p.len() != 2) {
        return Err(usage("--start and --goal take x,y"));
    }
    let t1 = read_trajectory(first)?;
    let t2 = read_trajectory(second)?;
    let (region, default_anchors) = if rect.is_empty() {
        let path = common.config.as_ref().ok_or_else(|| usage("give --rect or --config"))?;
        let env = ExperimentConfig::load(path)?.environment.build()?;
        (env.barrier_regions(), env.anchors())
    } else {
        let parts = rect
            .chunks(4)
            .map(|r| ConvexPolygon::rect(r[0], r[1], r[2], r[3]))
            .collect::<Result<Vec<_>, _>>()?;
        let anchors = Anchors {
            start: t1.first(),
            goal: t1.last(),
        };
        (RegionSet::new(parts, BARRIER_PENALTY)?, anchors)
    };
    let anchors = Anchors {
        start: point(start).unwrap_or(default_anchors.start),
        goal: point(goal).unwrap_or(default_anchors.goal),
    };
    let s1 = signature(&t1, &region, anchors)?;
    let s2 = signature(&t2, &region, anchors)?;
    println!("{}\t{}", first.display(), s1.label());
    println!("{}\t{}", second.display(), s2.label());
    if s1 == s2 {
        println!("same");
        Ok(0)
    } else {
        println!("different");
        Ok(EXIT_DIFFERENT)
    }
}

fn run(cli: &Cli) -> Result<u8, Failure> {
    let common = &cli.common;
    match &cli.command {
        Command::Train => {
            let exp = experiment(common, &cli.command)?;
            for s in run_train(&exp, &exp.config.seeds)? {
                println!(
                    "seed {}: return {:.3} after {} steps ({} attempt(s)) -> {}",
                    s.seed,
                    s.mean_return,
                    s.total_steps,
                    s.attempts,
                    exp.source_dir(s.seed).join("checkpoint.json").display()
                );
            }
        }
        Command::Transfer => {
            let exp = experiment(common, &cli.command)?;
            let summary = run_transfer(&exp, &exp.config.seeds)?;
            if let Some(c) = summary.band_centre {
                println!("band centre {c:.3}");
            }
            print!("{}", summary.table.to_text());
        }
        Command::Landscape => {
            let exp = experiment(common, &cli.command)?;
            let land = run_landscape(&exp)?;
            println!("hump with barrier    {:.3}", land.hump_barrier);
            println!("hump without barrier {:.3}", land.hump_no_barrier);
        }
        Command::Homotopy {
            first,
            second,
            rect,
            start,
            goal,
        } => return homotopy(common, first, second, rect, start, goal),
        Command::Winf { first, second, length } => {
            let mu = EmpiricalDistribution::new(&read_set(first)?, *length)?;
            let nu = EmpiricalDistribution::new(&read_set(second)?, *length)?;
            let m = w_infinity(&mu, &nu)?;
            println!("{}", m.value);
            for (i, j) in m.assignment.iter().enumerate() {
                println!("{i} -> {j}");
            }
        }
        Command::Plot { dir } => {
            for path in plot_dir(dir)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
