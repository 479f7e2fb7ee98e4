use std::path::PathBuf;

use afdc::afdc::WeightMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "afdc", version, about = "Aspect-ratio-aware dilated convolution experiments")]
pub struct Cli {
    /// Run configuration (JSON); omitted sections use the synthetic-experiment defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the built-in invariant suites.
    Selftest(SelftestArgs),
    /// Write the synthetic train/val/test splits.
    Synth,
    /// Train a model on a synthetic or manifest dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint under one or all weight modes.
    Eval(EvalArgs),
    /// Predicted mean score of one image resized to a grid of aspect ratios.
    Sweep(SweepArgs),
    /// Parameter and Mult-Adds report.
    Cost(CostArgs),
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding `train/` and optionally `val/` manifests.
    #[arg(long)]
    pub data: PathBuf,
    /// Train with every AFDC layer replaced by a plain convolution.
    #[arg(long)]
    pub vanilla: bool,
}

/// `all` or one mode name.
#[derive(Clone, Debug, PartialEq)]
pub enum ModeChoice {
    All,
    One(WeightMode),
}

impl ModeChoice {
    pub fn modes(&self) -> Vec<WeightMode> {
        match self {
            ModeChoice::All => WeightMode::ALL.to_vec(),
            ModeChoice::One(m) => vec![*m],
        }
    }
}

fn parse_mode_choice(s: &str) -> Result<ModeChoice, String> {
    if s == "all" {
        return Ok(ModeChoice::All);
    }
    s.parse::<WeightMode>().map(ModeChoice::One).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<WeightMode, String> {
    s.parse::<WeightMode>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory or manifest file.
    #[arg(long)]
    pub data: PathBuf,
    /// vanilla, constant21, nearest, second-nearest, mean2, fractional or all.
    #[arg(long, default_value = "all", value_parser = parse_mode_choice)]
    pub weight_mode: ModeChoice,
}

/// Inclusive `a:b:step` grid of `h / w` ratios.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl RatioGrid {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                (v * 1e9).round() / 1e9
            })
            .collect()
    }
}

fn parse_grid(s: &str) -> Result<RatioGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err("expected a:b:step".into());
    };
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad number {x:?}"));
    let g = RatioGrid {
        start: num(a)?,
        stop: num(b)?,
        step: num(c)?,
    };
    if !(g.start > 0.0 && g.stop >= g.start && g.step > 0.0 && g.stop.is_finite()) {
        return Err("need 0 < a <= b and step > 0".into());
    }
    if (g.stop - g.start) / g.step > 10_000.0 {
        return Err("grid has too many points".into());
    }
    Ok(g)
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Source image (PGM/PPM or raw tensor file).
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long, value_parser = parse_grid)]
    pub ratio_grid: RatioGrid,
    #[arg(long, default_value = "fractional", value_parser = parse_mode)]
    pub weight_mode: WeightMode,
    /// Square warp size; defaults to the evaluation size of the run config.
    #[arg(long)]
    pub warp: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Arch {
    Resnet50,
    Vgg16,
    /// The `network` section of `--config`.
    Custom,
}

#[derive(Debug, Args)]
pub struct CostArgs {
    #[arg(long, value_enum, default_value = "resnet50")]
    pub arch: Arch,
    /// Branch counts to report, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 7])]
    pub k_dilations: Vec<usize>,
    /// Also dilate the 7x7 stem (resnet50).
    #[arg(long)]
    pub first_conv_dilated: bool,
    #[arg(long, default_value_t = 224)]
    pub input_size: usize,
}
