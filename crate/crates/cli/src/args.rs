use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use depthloss::geometry::CameraRig;
use depthloss::losses::{Stencil, DEFAULT_BETA, DEFAULT_D_MAX, DEFAULT_LAMBDA};
use depthloss::synth::Preset;
use depthloss::toymatcher::{
    DEFAULT_INIT_SIGMA, DEFAULT_KERNEL_SIZE, DEFAULT_TAU, DEFAULT_TOY_D_MAX, DEFAULT_WINDOW,
};
use serde::Serialize;

/// Stereo loss, metric and toy-training toolkit.
#[derive(Debug, Parser)]
#[command(name = "depthloss", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for per-sample work; defaults to the number of cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Disparity error caused by a fixed depth error, across depths.
    Sensitivity(SensitivityArgs),
    /// Per-sample and aggregate loss breakdowns of stored predictions.
    Loss(LossArgs),
    /// Finite-difference check of the analytic loss gradient.
    Gradcheck(GradcheckArgs),
    /// Disparity and range-binned depth metrics of stored predictions.
    Eval(EvalArgs),
    /// Foreground/background by near/far pixel shares and a depth histogram.
    Distribution(DistributionArgs),
    /// Generate a synthetic stereo dataset and its manifest.
    Synth(SynthArgs),
    /// Train the toy matcher under one loss objective.
    TrainToy(TrainArgs),
    /// Merge the metrics of several training runs into one table.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sensitivity(_) => "sensitivity",
            Command::Loss(_) => "loss",
            Command::Gradcheck(_) => "gradcheck",
            Command::Eval(_) => "eval",
            Command::Distribution(_) => "distribution",
            Command::Synth(_) => "synth",
            Command::TrainToy(_) => "train-toy",
            Command::Report(_) => "report",
        }
    }
}

pub fn parse_rig(s: &str) -> Result<CameraRig, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [f, b] = parts[..] else {
        return Err(format!("expected FOCAL_PX,BASELINE_M, got {s:?}"));
    };
    let f: f64 = f.parse().map_err(|e| format!("focal length {f:?}: {e}"))?;
    let b: f64 = b.parse().map_err(|e| format!("baseline {b:?}: {e}"))?;
    CameraRig::new(f, b).map_err(|e| e.to_string())
}

#[derive(Debug, Args, Serialize)]
pub struct SensitivityArgs {
    /// Camera rig as `focal_px,baseline_m`.
    #[arg(long, value_parser = parse_rig, default_value = "721,0.54")]
    pub rig: CameraRig,
    /// Depth error in metres.
    #[arg(long, default_value_t = 1.0)]
    pub dz: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub z_min: f64,
    #[arg(long, default_value_t = 80.0, allow_negative_numbers = true)]
    pub z_max: f64,
    /// Number of depths sampled, endpoints included.
    #[arg(long, default_value_t = 80)]
    pub n: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LossKnobs {
    /// Foreground weight of the combined depth loss.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Weight of the depth term in the total loss.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Largest valid ground-truth disparity.
    #[arg(long, default_value_t = DEFAULT_D_MAX)]
    pub dmax: f64,
    /// Predictions below this disparity are left out of the depth terms.
    #[arg(long, default_value_t = depthloss::geometry::DEFAULT_MIN_DISP)]
    pub min_disp: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct LossArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Overrides the rig of every sample.
    #[arg(long, value_parser = parse_rig)]
    pub rig: Option<CameraRig>,
    #[command(flatten)]
    pub knobs: LossKnobs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_rig)]
    pub rig: Option<CameraRig>,
    #[command(flatten)]
    pub knobs: LossKnobs,
    /// Central-difference step in pixels.
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    /// Largest accepted relative deviation.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Finite-difference formula.
    #[arg(long, value_enum, default_value = "five-point")]
    pub stencil: StencilArg,
    /// Pixels closer than this to a smooth-L1 knee are skipped.
    #[arg(long, default_value_t = 1e-2)]
    pub knee_margin: f64,
    /// Checked pixels per sample, spread evenly over the valid ones.
    #[arg(long, default_value_t = 256)]
    pub max_pixels: usize,
    /// Test hook: perturbs the analytic gradient before comparing.
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StencilArg {
    ThreePoint,
    FivePoint,
}

impl From<StencilArg> for Stencil {
    fn from(s: StencilArg) -> Stencil {
        match s {
            StencilArg::ThreePoint => Stencil::ThreePoint,
            StencilArg::FivePoint => Stencil::FivePoint,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct BinArgs {
    /// Depth bin edges in metres.
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50,60,70,80")]
    pub bins: Vec<f64>,
    /// Near/far split of the distribution table, in metres.
    #[arg(long, default_value_t = depthloss::metrics::DEFAULT_NEAR_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_rig)]
    pub rig: Option<CameraRig>,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DistributionArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_rig)]
    pub rig: Option<CameraRig>,
    #[arg(long, default_value_t = depthloss::metrics::DEFAULT_NEAR_THRESHOLD)]
    pub threshold: f64,
    /// Histogram bin width in metres.
    #[arg(long, default_value_t = 5.0)]
    pub bin_width: f64,
    #[arg(long, default_value_t = depthloss::metrics::DEFAULT_MAX_DEPTH)]
    pub max_depth: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetArg {
    KittiLike,
    FarObjects,
    IntegerShift,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Preset {
        match p {
            PresetArg::KittiLike => Preset::KittiLike,
            PresetArg::FarObjects => Preset::FarObjects,
            PresetArg::IntegerShift => Preset::IntegerShift,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "kitti-like", conflicts_with = "spec")]
    pub preset: PresetArg,
    /// Dataset spec as JSON; replaces the preset and its defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of scenes.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long, value_parser = parse_rig)]
    pub rig: Option<CameraRig>,
    /// Largest disparity a scene may contain.
    #[arg(long)]
    pub dmax: Option<f64>,
    /// Standard deviation of the additive image noise.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    /// Disparity loss alone.
    Disp,
    /// Unsplit depth loss alone.
    Depth,
    /// Disparity loss plus the foreground/background weighted depth loss.
    Combined,
}

impl ObjectiveArg {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveArg::Disp => "disp",
            ObjectiveArg::Depth => "depth",
            ObjectiveArg::Combined => "combined",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training samples.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Held-out samples for the final evaluation; the training set when absent.
    #[arg(long)]
    pub eval_manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "combined")]
    pub objective: ObjectiveArg,
    #[arg(long, value_parser = parse_rig)]
    pub rig: Option<CameraRig>,
    #[command(flatten)]
    pub knobs: LossKnobs,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Seed of the kernel initialisation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Soft-argmin temperature.
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: f64,
    /// Side of the matching window.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: usize,
    /// Side of the learned aggregation kernel.
    #[arg(long, default_value_t = DEFAULT_KERNEL_SIZE)]
    pub kernel: usize,
    /// Number of disparity hypotheses of the matcher.
    #[arg(long, default_value_t = DEFAULT_TOY_D_MAX)]
    pub toy_dmax: usize,
    #[arg(long, default_value_t = DEFAULT_INIT_SIGMA)]
    pub init_sigma: f64,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Output directories of `train-toy` runs.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

impl Command {
    pub fn out_dir(&self) -> &std::path::Path {
        match self {
            Command::Sensitivity(a) => &a.out,
            Command::Loss(a) => &a.out,
            Command::Gradcheck(a) => &a.out,
            Command::Eval(a) => &a.out,
            Command::Distribution(a) => &a.out,
            Command::Synth(a) => &a.out,
            Command::TrainToy(a) => &a.out,
            Command::Report(a) => &a.out,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rig_parsing() {
        let rig = parse_rig("721, 0.54").unwrap();
        assert_eq!(rig.focal_px(), 721.0);
        assert!(parse_rig("721").is_err());
        assert!(parse_rig("721,x").is_err());
        assert!(parse_rig("-1,0.5").is_err());
    }

    #[test]
    fn default_bins_are_eight_ten_metre_intervals() {
        let cli = Cli::try_parse_from(["depthloss", "eval", "--manifest", "m.json", "--out", "o"]).unwrap();
        let Command::Eval(a) = cli.command else { panic!() };
        assert_eq!(a.bins.bins, (0..=8).map(|k| 10.0 * k as f64).collect::<Vec<_>>());
        assert_eq!(a.bins.threshold, 20.0);
    }

    #[test]
    fn loss_defaults() {
        let cli = Cli::try_parse_from(["depthloss", "loss", "--manifest", "m", "--out", "o"]).unwrap();
        let Command::Loss(a) = cli.command else { panic!() };
        assert_eq!((a.knobs.lambda, a.knobs.beta, a.knobs.dmax), (0.6, 1.0, 192.0));
    }
}
