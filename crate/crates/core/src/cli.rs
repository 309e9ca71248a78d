//! The `spie` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::model_math::verify::run_checks;
use crate::pipeline::{build, evaluate, list_ids, run_stage, write_eval_report, PipelineConfig, Stage};
use crate::prompts::Category;

#[derive(Debug, Parser)]
#[command(
    name = "spie",
    version,
    about = "Spectral-prompt instruction datasets from multispectral imagery"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Leave spectral prompts out of instructions.
    #[arg(long, global = true)]
    pub ablation: bool,

    /// Directory of input `.msr` rasters.
    #[arg(long, global = true)]
    pub rasters: Option<PathBuf>,

    /// Output root.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true)]
    pub category: Option<Category>,

    /// Logging verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Restrict to these image ids (default: every raster).
    #[arg(long = "image")]
    pub images: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectral index grids under `<output>/index`.
    Index(ImageArgs),
    /// Otsu coarse masks under `<output>/coarse`.
    CoarseMask(ImageArgs),
    /// Region attributes under `<output>/regions`.
    Regions(ImageArgs),
    /// Spectral prompt text under `<output>/prompt`.
    Prompt(ImageArgs),
    /// Patches, masks, responses and `manifest.jsonl`.
    Build,
    /// Score predicted masks against ground truth.
    Eval {
        /// Directory of predicted `.pgm` masks.
        pred: PathBuf,
        /// Directory of ground-truth `.pgm` masks, paired by file name.
        gt: PathBuf,
        /// Where to write `pooled.json`, `per_image.json` and `table.txt`.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Run the reference-numerics self-checks.
    Modelcheck,
}

impl Cli {
    /// The config file (if any) with command-line overrides applied.
    pub fn config(&self) -> Result<PipelineConfig> {
        let g = &self.global;
        let mut cfg = match &g.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(j) = g.jobs {
            cfg.jobs = j;
        }
        if let Some(s) = g.seed {
            cfg.seed = s;
        }
        if g.ablation {
            cfg.ablation = true;
        }
        if let Some(r) = &g.rasters {
            cfg.rasters = r.clone();
        }
        if let Some(o) = &g.output {
            cfg.output = o.clone();
        }
        if let Some(c) = g.category {
            cfg.category = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn stage_ids(cfg: &PipelineConfig, args: &ImageArgs) -> Result<Vec<String>> {
    if !args.images.is_empty() {
        let mut ids = args.images.clone();
        ids.sort();
        ids.dedup();
        return Ok(ids);
    }
    list_ids(&cfg.rasters, "msr")
}

fn run_stages(cfg: &PipelineConfig, stage: Stage, args: &ImageArgs) -> Result<()> {
    let ids = stage_ids(cfg, args)?;
    let wrote = run_stage(cfg, stage, &cfg.rasters, &ids)?;
    println!(
        "{}: {wrote} written, {} up to date, in {}",
        stage.name(),
        ids.len() - wrote,
        cfg.output.display()
    );
    Ok(())
}

fn eval(pred: &Path, gt: &Path, report_dir: Option<&Path>, jobs: usize) -> Result<()> {
    let report = evaluate(pred, gt, jobs)?;
    if let Some(dir) = report_dir {
        write_eval_report(&report, dir)?;
    }
    print!("{}", report.table());
    Ok(())
}

fn modelcheck(seed: u64) -> Result<()> {
    let checks = run_checks(seed);
    let mut failed = 0;
    for c in &checks {
        println!("{} {:<14} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Error::Numeric(format!(
            "{failed} of {} model checks failed",
            checks.len()
        )));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Modelcheck => modelcheck(cli.global.seed.unwrap_or(0)),
        Command::Eval { pred, gt, report_dir } => {
            let jobs = match &cli.global.config {
                Some(_) => cli.config()?.jobs,
                None => cli.global.jobs.unwrap_or(0),
            };
            eval(pred, gt, report_dir.as_deref(), jobs)
        }
        Command::Index(a) => run_stages(&cli.config()?, Stage::Index, a),
        Command::CoarseMask(a) => run_stages(&cli.config()?, Stage::CoarseMask, a),
        Command::Regions(a) => run_stages(&cli.config()?, Stage::Regions, a),
        Command::Prompt(a) => run_stages(&cli.config()?, Stage::Prompt, a),
        Command::Build => {
            let summary = build(&cli.config()?)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(())
        }
    }
}
