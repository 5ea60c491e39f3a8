use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use romap_core::dataset::{load_sequence, save_sequence};
use romap_core::pipeline::{
    evaluate_meshes, read_mesh_dir, render_markdown, run_ablation, run_pipeline, DatasetSource, PipelineConfig, SweepSpec,
};

#[derive(Parser)]
#[command(name = "romap", version, about = "Object-level mapping with per-object radiance fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run tracking, training, meshing and evaluation on a sequence.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Seed for training, outlier removal and evaluation sampling.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extract meshes every K frames while tracking.
        #[arg(long, value_name = "K")]
        online_mesh_every: Option<usize>,
    },
    /// Generate the synthetic sequence described by a config and write it to disk.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter sweep, e.g. `table_size_log2=14,20;hidden_layers=1,3`
    /// or `lambda_density=0,0.01;iterations=1200`.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sweep: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score world-frame meshes (`<id>.obj`) against a sequence's ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Optional config supplying mesh evaluation settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf) -> Result<PipelineConfig> {
    PipelineConfig::from_file(path).context("loading config")
}

fn write_json(path: PathBuf, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed,
            deterministic,
            workers,
            out,
            online_mesh_every,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
                cfg.objslam.seed = s;
                cfg.mesh.eval_seed = s;
            }
            cfg.deterministic |= deterministic;
            if let Some(w) = workers {
                cfg.train.worker_count = w;
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            if online_mesh_every.is_some() {
                cfg.online_mesh_every = online_mesh_every;
            }
            let output = run_pipeline(&cfg)?;
            print!("{}", render_markdown(&output.report));
        }
        Command::Synth { config, out } => {
            let cfg = load_config(&config)?;
            if !matches!(cfg.dataset, DatasetSource::Synthetic { .. }) {
                bail!("{} does not describe a synthetic dataset", config.display());
            }
            let bundle = cfg.dataset.load()?;
            save_sequence(&bundle, &out)?;
            println!("wrote {} frames and {} objects to {}", bundle.frames.len(), bundle.gt_objects.len(), out.display());
        }
        Command::Ablate { config, sweep, out } => {
            let mut cfg = load_config(&config)?;
            let spec: SweepSpec = sweep.parse().context("parsing --sweep")?;
            if out.is_some() {
                cfg.output_dir = out.clone();
            }
            let table = run_ablation(&cfg, &spec)?;
            print!("{}", table.to_markdown());
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_json(dir.join("ablation.json"), &table)?;
            }
        }
        Command::Eval { pred, gt, config } => {
            let settings = match config {
                Some(c) => load_config(&c)?.mesh,
                None => Default::default(),
            };
            let meshes = read_mesh_dir(&pred)?;
            let bundle = load_sequence(&gt)?;
            if bundle.gt_objects.is_empty() {
                bail!("{} has no ground-truth objects", gt.display());
            }
            let results = evaluate_meshes(&meshes, &bundle.gt_objects, &settings)?;
            println!("{}", serde_json::to_string_pretty(&results)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
