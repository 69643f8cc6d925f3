//! Command-line entry point. Exit codes: 0 success, 1 usage error,
//! 2 data error, 3 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use obstacle_forge::config::PipelineConfig;
use obstacle_forge::error::Result;
use obstacle_forge::pipeline;

#[derive(Parser)]
#[command(name = "obstacle-forge", version, about = "Offline 3D obstacle detection from recorded lidar and camera mask sequences")]
struct Cli {
    /// Worker threads for the parallel regions. Defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DatasetArgs {
    /// Sequence directory (manifest.json, lidar/, masks/, ...).
    #[arg(long)]
    dataset: PathBuf,

    /// Pipeline configuration JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory. Defaults to the dataset directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl DatasetArgs {
    fn config(&self) -> Result<PipelineConfig> {
        match &self.config {
            Some(path) => PipelineConfig::load(path),
            None => Ok(PipelineConfig::default()),
        }
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.dataset.clone())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sequence from a scene description.
    Synth {
        /// Scene description JSON.
        #[arg(long)]
        spec: PathBuf,

        /// Directory to create the sequence in.
        #[arg(long)]
        out: PathBuf,
    },

    /// Run detection and write predictions/boxes.csv plus report.json.
    Detect(DatasetArgs),

    /// Naive per-candidate mean projected depth, written to baseline.csv.
    Baseline(DatasetArgs),

    /// Compare predictions against ground truth; writes eval/ heatmaps.
    Eval(DatasetArgs),
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth { spec, out } => {
            let manifest = pipeline::run_synth(spec, out)?;
            println!("wrote {} frames to {}", manifest.n_frames, out.display());
        }
        Command::Detect(args) => {
            let out = args.out();
            let report = pipeline::run_detect(&args.dataset, &args.config()?, &out)?;
            let boxes = report.stage("emit").map_or(0, |s| s.count);
            println!("wrote {boxes} boxes to {}", out.join("predictions/boxes.csv").display());
        }
        Command::Baseline(args) => {
            let out = args.out();
            let rows = pipeline::run_baseline(&args.dataset, &args.config()?, &out)?;
            println!("wrote {rows} rows to {}", out.join("baseline.csv").display());
        }
        Command::Eval(args) => {
            let out = args.out();
            let report = pipeline::run_eval(&args.dataset, &out)?;
            println!(
                "tp {} fp {} fn {} precision {:.4} recall {:.4}; heatmaps in {}",
                report.tp,
                report.fp,
                report.fn_,
                report.overall_precision().unwrap_or(f64::NAN),
                report.overall_recall().unwrap_or(f64::NAN),
                out.join("eval").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage problems (unknown flags, missing args) exit 1 via clap's
    // error kinds; --help and --version exit 0.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
