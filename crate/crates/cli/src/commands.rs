use std::path::{Path, PathBuf};

use depthloss::dataio::{load_manifest, Sample, SampleManifest};
use depthloss::geometry::sensitivity_curve;
use depthloss::losses::{
    depth_loss, finite_diff_check_against, total_loss, total_loss_grad, GradCheckOptions,
    GradCheckReport, LossFlag,
};
use depthloss::metrics::{
    distribution_histogram, distribution_table, merge_histograms, DistributionTable, HistBin,
    MetricAccumulator, MetricReport, MetricRow, RangeBins,
};
use depthloss::synth::{generate_dataset, DatasetSpec};
use depthloss::toymatcher::{self, MatcherParams, Objective, Schedule, TrainLogRow};
use depthloss::{CameraRig, Error, LossBreakdown, LossConfig, ObjectMask, PixelField, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::*;
use crate::output::{create_dir, write_csv, write_json, write_provenance, write_text};
use crate::plot;
use crate::Failure;

pub fn run(command: &Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Sensitivity(a) => sensitivity(a)?,
        Command::Loss(a) => loss(a)?,
        Command::Gradcheck(a) => gradcheck(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Distribution(a) => distribution(a)?,
        Command::Synth(a) => synth(a)?,
        Command::TrainToy(a) => train_toy(a)?,
        Command::Report(a) => report(a)?,
    }
    write_provenance(command.out_dir(), command)?;
    if let Command::Gradcheck(a) = command {
        check_gradcheck_outcome(&a.out)?;
    }
    Ok(())
}

fn open_manifest(path: &Path) -> Result<SampleManifest> {
    let m = load_manifest(path)?;
    if m.is_empty() {
        return Err(Error::Config(format!("manifest {} has no samples", path.display())));
    }
    Ok(m)
}

/// Ground truth, mask (all background when absent), prediction and rig of
/// one sample; the prediction is required when `need_pred` is set.
struct Fields {
    id: String,
    gt: PixelField,
    mask: Option<ObjectMask>,
    pred: Option<PixelField>,
    rig: CameraRig,
}

impl Fields {
    fn mask_or_background(&self) -> ObjectMask {
        self.mask
            .clone()
            .unwrap_or_else(|| ObjectMask::filled(self.gt.height(), self.gt.width(), false))
    }

    fn pred(&self) -> &PixelField {
        self.pred.as_ref().expect("prediction checked at load time")
    }
}

fn load_all(manifest: &SampleManifest, rig: Option<CameraRig>, need_pred: bool) -> Result<Vec<Fields>> {
    manifest
        .samples
        .par_iter()
        .map(|s: &Sample| {
            let f = s.load_fields()?;
            if need_pred && f.pred.is_none() {
                return Err(Error::Config(format!("sample {} has no pred_disparity", s.id)));
            }
            Ok(Fields {
                id: s.id.clone(),
                gt: f.gt,
                mask: f.mask,
                pred: f.pred,
                rig: rig.unwrap_or(s.rig),
            })
        })
        .collect()
}

fn loss_config(knobs: &LossKnobs, rig: CameraRig) -> Result<LossConfig> {
    let cfg = LossConfig {
        lambda: knobs.lambda,
        beta: knobs.beta,
        d_max: knobs.dmax,
        min_disp: knobs.min_disp,
        rig,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct SensitivityRow {
    depth_m: f64,
    disp_error_px: f64,
}

fn sensitivity(a: &SensitivityArgs) -> Result<()> {
    let curve = sensitivity_curve(&a.rig, a.dz, a.z_min, a.z_max, a.n)?;
    create_dir(&a.out)?;
    let rows: Vec<_> = curve
        .iter()
        .map(|&(depth_m, disp_error_px)| SensitivityRow { depth_m, disp_error_px })
        .collect();
    write_csv(&a.out.join("sensitivity.csv"), &rows)?;
    let svg = plot::line_chart(
        &format!("Disparity error for a {} m depth error", a.dz),
        "depth (m)",
        "disparity error (px)",
        &curve,
    );
    write_text(&a.out.join("sensitivity.svg"), &svg)
}

#[derive(Serialize)]
struct LossRow {
    sample: String,
    l_disp: f64,
    l_depth: f64,
    l_depth_fg: f64,
    l_depth_bg: f64,
    l_depth_combined: f64,
    total: f64,
    n_valid: usize,
    n_fg: usize,
    n_bg: usize,
    flags: String,
}

fn flag_names(flags: &[LossFlag]) -> String {
    flags
        .iter()
        .map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default())
        .collect::<Vec<_>>()
        .join(";")
}

fn loss_row(sample: &str, b: &LossBreakdown, l_depth: f64) -> LossRow {
    LossRow {
        sample: sample.to_string(),
        l_disp: b.l_disp,
        l_depth,
        l_depth_fg: b.l_depth_fg,
        l_depth_bg: b.l_depth_bg,
        l_depth_combined: b.l_depth_combined,
        total: b.total,
        n_valid: b.n_valid,
        n_fg: b.n_fg,
        n_bg: b.n_bg,
        flags: flag_names(&b.flags),
    }
}

fn loss(a: &LossArgs) -> Result<()> {
    let manifest = open_manifest(&a.manifest)?;
    loss_config(&a.knobs, CameraRig::kitti())?;
    let samples = load_all(&manifest, a.rig, true)?;
    let results = samples
        .par_iter()
        .map(|s| {
            let cfg = loss_config(&a.knobs, s.rig)?;
            let b = total_loss(s.pred(), &s.gt, &s.mask_or_background(), &cfg)?;
            let unsplit = depth_loss(s.pred(), &s.gt, &cfg)?.value;
            Ok((b, unsplit))
        })
        .collect::<Result<Vec<_>>>()?;
    let breakdowns: Vec<LossBreakdown> = results.iter().map(|r| r.0.clone()).collect();
    let aggregate = LossBreakdown::mean_of(&breakdowns);
    let unsplit_mean = results.iter().map(|r| r.1).collect::<depthloss::reduce::Accumulator>().value()
        / results.len() as f64;

    create_dir(&a.out)?;
    let mut rows: Vec<LossRow> = samples
        .iter()
        .zip(&results)
        .map(|(s, (b, u))| loss_row(&s.id, b, *u))
        .collect();
    rows.push(loss_row("mean", &aggregate, unsplit_mean));
    write_csv(&a.out.join("loss.csv"), &rows)?;
    let per_sample: Vec<_> = samples
        .iter()
        .zip(&results)
        .map(|(s, (b, u))| json!({"sample": s.id, "breakdown": b, "l_depth": u}))
        .collect();
    write_json(
        &a.out.join("loss.json"),
        &json!({"samples": per_sample, "mean": {"breakdown": aggregate, "l_depth": unsplit_mean}}),
    )
}

#[derive(Serialize, Deserialize)]
struct GradcheckRow {
    sample: String,
    n_compared: usize,
    n_skipped: usize,
    max_abs_dev: f64,
    max_rel_dev: f64,
    vacuous: bool,
    pass: bool,
}

#[derive(Serialize, Deserialize)]
struct GradcheckSummary {
    step: f64,
    tolerance: f64,
    pass: bool,
    samples: Vec<GradcheckRow>,
}

fn gradcheck(a: &GradcheckArgs) -> Result<()> {
    let manifest = open_manifest(&a.manifest)?;
    loss_config(&a.knobs, CameraRig::kitti())?;
    let samples = load_all(&manifest, a.rig, true)?;
    let opts = GradCheckOptions {
        step: a.step,
        knee_margin: a.knee_margin,
        max_pixels: Some(a.max_pixels),
        stencil: a.stencil.into(),
        ..GradCheckOptions::default()
    };
    let reports = samples
        .par_iter()
        .map(|s| {
            let cfg = loss_config(&a.knobs, s.rig)?;
            let mask = s.mask_or_background();
            let mut analytic = total_loss_grad(s.pred(), &s.gt, &mask, &cfg)?;
            if a.corrupt_gradient {
                for g in analytic.values_mut() {
                    *g = *g * 1.01 + 1e-6;
                }
            }
            finite_diff_check_against(&analytic, s.pred(), &s.gt, &mask, &cfg, &opts)
        })
        .collect::<Result<Vec<GradCheckReport>>>()?;
    let rows: Vec<GradcheckRow> = samples
        .iter()
        .zip(&reports)
        .map(|(s, r)| GradcheckRow {
            sample: s.id.clone(),
            n_compared: r.n_compared,
            n_skipped: r.n_skipped,
            max_abs_dev: r.max_abs_dev,
            max_rel_dev: r.max_rel_dev,
            vacuous: r.is_vacuous(),
            pass: r.is_vacuous() || r.passes(a.tolerance),
        })
        .collect();
    for r in rows.iter().filter(|r| r.vacuous) {
        eprintln!("warning: sample {} has no comparable pixel", r.sample);
    }
    create_dir(&a.out)?;
    write_csv(&a.out.join("gradcheck.csv"), &rows)?;
    let summary = GradcheckSummary {
        step: a.step,
        tolerance: a.tolerance,
        pass: rows.iter().all(|r| r.pass),
        samples: rows,
    };
    write_json(&a.out.join("gradcheck.json"), &summary)
}

fn check_gradcheck_outcome(out: &Path) -> std::result::Result<(), Failure> {
    let path = out.join("gradcheck.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let summary: GradcheckSummary =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    let failed: Vec<String> = summary
        .samples
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} (max rel dev {:.3e})", r.sample, r.max_rel_dev))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient deviates beyond {:e} on {}",
            summary.tolerance,
            failed.join(", ")
        )))
    }
}

fn depth_epe_chart(report: &MetricReport) -> String {
    let cats: Vec<String> = report
        .depth_epe_per_bin
        .iter()
        .map(|b| format!("{}-{}", b.lo, b.hi))
        .collect();
    let values = report
        .depth_epe_per_bin
        .iter()
        .map(|b| (b.count > 0).then_some(b.mean_abs_m))
        .collect();
    plot::bar_chart("Depth error per range", "ground-truth depth (m)", "mean |depth error| (m)", &cats, &[("depth".into(), values)])
}

fn eval(a: &EvalArgs) -> Result<()> {
    let manifest = open_manifest(&a.manifest)?;
    let bins = RangeBins::from_edges(&a.bins.bins)?;
    let samples = load_all(&manifest, a.rig, true)?;
    let use_masks = manifest.has_masks();
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let mut acc = MetricAccumulator::new(bins.clone(), a.bins.threshold);
            acc.add(s.pred(), &s.gt, &s.rig, s.mask.as_ref().filter(|_| use_masks))?;
            Ok(acc.finish())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = MetricAccumulator::new(bins.clone(), a.bins.threshold);
    for s in &samples {
        acc.add(s.pred(), &s.gt, &s.rig, s.mask.as_ref().filter(|_| use_masks))?;
    }
    let aggregate = acc.finish();

    create_dir(&a.out)?;
    let mut rows: Vec<MetricRow> = Vec::new();
    for (s, r) in samples.iter().zip(&per_sample) {
        rows.extend(r.rows(&s.id));
    }
    rows.extend(aggregate.rows("all"));
    write_csv(&a.out.join("metrics.csv"), &rows)?;
    let samples_json: Vec<_> = samples
        .iter()
        .zip(&per_sample)
        .map(|(s, r)| json!({"sample": s.id, "report": r}))
        .collect();
    write_json(
        &a.out.join("metrics.json"),
        &json!({"aggregate": aggregate, "samples": samples_json}),
    )?;
    write_text(&a.out.join("depth_epe.svg"), &depth_epe_chart(&aggregate))
}

#[derive(Serialize)]
struct DistributionRow {
    class: &'static str,
    near_pct: f64,
    far_pct: f64,
    total_pct: f64,
    near_count: usize,
    far_count: usize,
}

fn distribution_rows(t: &DistributionTable) -> Vec<DistributionRow> {
    let pct = |x: f64| 100.0 * x;
    vec![
        DistributionRow {
            class: "foreground",
            near_pct: pct(t.fg_near),
            far_pct: pct(t.fg_far),
            total_pct: pct(t.fg_total),
            near_count: t.counts[0],
            far_count: t.counts[1],
        },
        DistributionRow {
            class: "background",
            near_pct: pct(t.bg_near),
            far_pct: pct(t.bg_far),
            total_pct: pct(t.bg_total),
            near_count: t.counts[2],
            far_count: t.counts[3],
        },
        DistributionRow {
            class: "total",
            near_pct: pct(t.near_total),
            far_pct: pct(t.far_total),
            total_pct: if t.empty { 0.0 } else { 100.0 },
            near_count: t.counts[0] + t.counts[2],
            far_count: t.counts[1] + t.counts[3],
        },
    ]
}

fn distribution(a: &DistributionArgs) -> Result<()> {
    let manifest = open_manifest(&a.manifest)?;
    let samples = load_all(&manifest, a.rig, false)?;
    let parts = samples
        .par_iter()
        .map(|s| {
            let t = distribution_table(&s.gt, &s.rig, &s.mask_or_background(), a.threshold)?;
            let h = distribution_histogram(&s.gt, &s.rig, a.bin_width, a.max_depth)?;
            Ok((t, h))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = DistributionTable::empty(a.threshold);
    let mut hist: Vec<HistBin> = Vec::new();
    for (t, h) in &parts {
        table = table.merge(t);
        hist = merge_histograms(&hist, h);
    }

    create_dir(&a.out)?;
    write_csv(&a.out.join("distribution.csv"), &distribution_rows(&table))?;
    write_csv(&a.out.join("histogram.csv"), &hist)?;
    write_json(&a.out.join("distribution.json"), &json!({"table": table, "histogram": hist}))?;
    let cats: Vec<String> = hist.iter().map(|b| format!("{}", b.lo)).collect();
    let counts = hist.iter().map(|b| Some(b.count as f64)).collect();
    let svg = plot::bar_chart(
        "Ground-truth depth distribution",
        "depth bucket start (m)",
        "pixels",
        &cats,
        &[("pixels".into(), counts)],
    );
    write_text(&a.out.join("histogram.svg"), &svg)
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str::<DatasetSpec>(&text).map_err(|e| Error::format(path, e.to_string()))?
        }
        None => DatasetSpec::new(a.preset.into(), a.seed),
    };
    if a.spec.is_none() || a.seed != 0 {
        spec.seed = a.seed;
    }
    if let Some(h) = a.height {
        spec.height = h;
    }
    if let Some(w) = a.width {
        spec.width = w;
    }
    if let Some(r) = a.rig {
        spec.rig = r;
    }
    if let Some(d) = a.dmax {
        spec.d_max = d;
    }
    if let Some(n) = a.noise {
        spec.noise = n;
    }
    let manifest = generate_dataset(&spec, a.n, &a.out)?;
    println!("{} scenes written to {}", manifest.len(), a.out.join("manifest.json").display());
    Ok(())
}

/// Summary of one `train-toy` run, read back by `report`.
#[derive(Debug, Serialize, Deserialize)]
struct RunSummary {
    objective: String,
    lambda: f64,
    beta: f64,
    schedule: Schedule,
    train_samples: usize,
    eval_samples: usize,
    initial: TrainLogRow,
    last: TrainLogRow,
    metrics: MetricReport,
}

fn train_toy(a: &TrainArgs) -> Result<()> {
    let manifest = open_manifest(&a.manifest)?;
    let mut train_set = toymatcher::load_samples(&manifest)?;
    let mut eval_set = match &a.eval_manifest {
        Some(p) => toymatcher::load_samples(&open_manifest(p)?)?,
        None => train_set.clone(),
    };
    if let Some(r) = a.rig {
        for s in train_set.iter_mut().chain(eval_set.iter_mut()) {
            s.rig = r;
        }
    }
    let cfg = loss_config(&a.knobs, train_set[0].rig)?;
    let objective = match a.objective {
        ObjectiveArg::Disp => Objective::disparity_only(cfg),
        ObjectiveArg::Depth => Objective::depth_only(cfg),
        ObjectiveArg::Combined => Objective::combined(cfg),
    };
    let bins = RangeBins::from_edges(&a.bins.bins)?;
    let params0 = MatcherParams::init(a.kernel, a.window, a.toy_dmax, a.tau, a.init_sigma, a.seed)?;
    let schedule = Schedule {
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
    };
    let outcome = toymatcher::train(&train_set, &objective, &params0, &schedule)?;
    let metrics = toymatcher::evaluate(&outcome.params, &eval_set, &bins, a.bins.threshold)?;

    create_dir(&a.out)?;
    let log: Vec<TrainLogRow> = outcome.log.iter().map(|e| e.row()).collect();
    write_json(&a.out.join("params.json"), &outcome.params)?;
    write_csv(&a.out.join("training_log.csv"), &log)?;
    write_json(&a.out.join("metrics.json"), &metrics)?;
    write_csv(&a.out.join("metrics.csv"), &metrics.rows("all"))?;
    write_text(&a.out.join("depth_epe.svg"), &depth_epe_chart(&metrics))?;
    let summary = RunSummary {
        objective: a.objective.name().to_string(),
        lambda: objective.loss.lambda,
        beta: objective.loss.beta,
        schedule,
        train_samples: train_set.len(),
        eval_samples: eval_set.len(),
        initial: log[0].clone(),
        last: log[log.len() - 1].clone(),
        metrics,
    };
    write_json(&a.out.join("run.json"), &summary)
}

/// Depth ranges reported by `report`, as `(column, lo, hi)`.
pub const REPORT_RANGES: [(&str, f64, f64); 4] = [
    ("depth_epe_0_10_m", 0.0, 10.0),
    ("depth_epe_10_40_m", 10.0, 40.0),
    ("depth_epe_40_80_m", 40.0, 80.0),
    ("depth_epe_0_80_m", 0.0, 80.0),
];

#[derive(Serialize)]
struct ComparisonRow {
    run: String,
    objective: String,
    lambda: f64,
    beta: f64,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
    final_objective: f64,
    epe_px: f64,
    d1_all: f64,
    depth_epe_0_10_m: Option<f64>,
    depth_epe_10_40_m: Option<f64>,
    depth_epe_40_80_m: Option<f64>,
    depth_epe_0_80_m: Option<f64>,
}

fn read_run(dir: &Path) -> Result<RunSummary> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("run directory {} does not exist", dir.display())));
    }
    let path = dir.join("run.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

fn run_name(dir: &PathBuf) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn report(a: &ReportArgs) -> Result<()> {
    let runs = a.runs.iter().map(|d| read_run(d)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<ComparisonRow> = a
        .runs
        .iter()
        .zip(&runs)
        .map(|(dir, r)| {
            let m = &r.metrics;
            ComparisonRow {
                run: run_name(dir),
                objective: r.objective.clone(),
                lambda: r.lambda,
                beta: r.beta,
                epochs: r.schedule.epochs,
                learning_rate: r.schedule.learning_rate,
                seed: r.schedule.seed,
                final_objective: r.last.objective,
                epe_px: m.epe_px,
                d1_all: m.d1_all,
                depth_epe_0_10_m: m.depth_epe_over(0.0, 10.0),
                depth_epe_10_40_m: m.depth_epe_over(10.0, 40.0),
                depth_epe_40_80_m: m.depth_epe_over(40.0, 80.0),
                depth_epe_0_80_m: m.depth_epe_over(0.0, 80.0),
            }
        })
        .collect();
    create_dir(&a.out)?;
    write_csv(&a.out.join("comparison.csv"), &rows)?;
    let cats: Vec<String> = REPORT_RANGES.iter().map(|(_, lo, hi)| format!("{lo}-{hi} m")).collect();
    let series: Vec<(String, Vec<Option<f64>>)> = rows
        .iter()
        .zip(&runs)
        .map(|(row, r)| {
            let v = REPORT_RANGES
                .iter()
                .map(|&(_, lo, hi)| r.metrics.depth_epe_over(lo, hi))
                .collect();
            (row.run.clone(), v)
        })
        .collect();
    let svg = plot::bar_chart("Depth error by range and run", "ground-truth depth", "mean |depth error| (m)", &cats, &series);
    write_text(&a.out.join("comparison.svg"), &svg)
}
