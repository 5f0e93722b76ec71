//! A small differentiable stereo matcher: SAD cost volume, a learnable
//! aggregation kernel applied to every disparity slice, and soft-argmin
//! regression. Gradients are propagated by hand from the loss back to the
//! kernel weights.
//!
//! With aggregated costs `A_d` at a pixel and temperature `τ`, the prediction
//! is `d̂ = Σ d·p_d` with `p = softmax(-A/τ)`, hence
//! `∂d̂/∂A_d = -p_d (d - d̂) / τ`, and each kernel tap collects
//! `Σ_pixels Σ_d ∂L/∂A_d · C_d(pixel + offset)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{Sample, SampleManifest};
use crate::error::{Error, Result};
use crate::field::PixelField;
use crate::geometry::CameraRig;
use crate::image::GrayImage;
use crate::losses::{loss_and_grad_parts, total_loss, LossBreakdown, LossConfig};
use crate::masks::ObjectMask;
use crate::metrics::{MetricAccumulator, MetricReport, RangeBins};
use crate::reduce::Accumulator;

/// Cost of a candidate whose window leaves the right image. Mean absolute
/// differences of unit-range images never exceed it.
pub const SENTINEL_COST: f64 = 1.0;

/// Version tag of serialized parameters.
pub const PARAMS_VERSION: u32 = 1;

pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_KERNEL_SIZE: usize = 5;
pub const DEFAULT_TOY_D_MAX: usize = 64;
pub const DEFAULT_TAU: f64 = 0.05;
/// Standard deviation of the noise added to the identity kernel at init.
pub const DEFAULT_INIT_SIGMA: f64 = 0.01;

/// Matching costs `C(row, col, d)` for `d = 0..=d_max`, stored slice by slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CostVolume {
    height: usize,
    width: usize,
    d_max: usize,
    window: usize,
    costs: Vec<f64>,
}

impl CostVolume {
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn slice(&self, d: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.costs[d * n..(d + 1) * n]
    }

    pub fn cost(&self, row: usize, col: usize, d: usize) -> f64 {
        self.slice(d)[row * self.width + col]
    }

    /// Costs of every candidate at one pixel.
    pub fn candidates(&self, row: usize, col: usize) -> Vec<f64> {
        (0..=self.d_max).map(|d| self.cost(row, col, d)).collect()
    }

    /// Whether the matching window fits inside the image at this pixel.
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        let r = self.window / 2;
        row >= r && row + r < self.height && col >= r && col + r < self.width
    }

    /// Lowest-cost candidate; ties go to the smaller disparity.
    pub fn argmin(&self, row: usize, col: usize) -> usize {
        let c = self.candidates(row, col);
        (0..c.len()).fold(0, |best, d| if c[d] < c[best] { d } else { best })
    }
}

/// SAD cost volume: mean absolute difference over a `window x window`
/// neighborhood between left `(row, col)` and right `(row, col - d)`.
/// A candidate with `col - d < 0` lies outside the right image and gets
/// [`SENTINEL_COST`]; otherwise window columns falling off the right image
/// are left out of the mean. Pixels whose window leaves the left image keep
/// the sentinel in every slice and are reported invalid by
/// [`CostVolume::is_valid`].
pub fn build_cost_volume(
    left: &GrayImage,
    right: &GrayImage,
    window: usize,
    d_max: usize,
) -> Result<CostVolume> {
    if window % 2 == 0 {
        return Err(Error::Config(format!("matching window must be odd, got {window}")));
    }
    if d_max == 0 {
        return Err(Error::Config("d_max must be at least 1".into()));
    }
    if left.shape() != right.shape() {
        return Err(Error::shape(left.shape(), right.shape()));
    }
    let (h, w) = left.shape();
    let n = h * w;
    let r = window / 2;
    let mut costs = vec![SENTINEL_COST; (d_max + 1) * n];
    costs.par_chunks_mut(n).enumerate().for_each(|(d, slice)| {
        let mut diff = vec![0.0; n];
        for row in 0..h {
            for col in d..w {
                diff[row * w + col] = (left.at(row, col) - right.at(row, col - d)).abs();
            }
        }
        let mut horiz = vec![0.0; n];
        for row in 0..h {
            for col in (r.max(d))..w.saturating_sub(r) {
                let lo = (col - r).max(d);
                horiz[row * w + col] = diff[row * w + lo..=row * w + col + r].iter().sum();
            }
        }
        for row in r..h.saturating_sub(r) {
            for col in (r.max(d))..w.saturating_sub(r) {
                let mut s = 0.0;
                for k in row - r..=row + r {
                    s += horiz[k * w + col];
                }
                let cols = col + r + 1 - (col - r).max(d);
                slice[row * w + col] = s / (cols * window) as f64;
            }
        }
    });
    Ok(CostVolume {
        height: h,
        width: w,
        d_max,
        window,
        costs,
    })
}

/// Softmax of `-costs / tau`, computed with the minimum cost subtracted.
pub fn softmin_weights(costs: &[f64], tau: f64) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::Domain("soft-argmin needs at least one candidate".into()));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("temperature must be > 0, got {tau}")));
    }
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = costs.iter().map(|c| (-(c - min) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / z).collect())
}

/// Expected candidate disparity under [`softmin_weights`]; candidate `k`
/// stands for disparity `k`.
pub fn soft_argmin(costs: &[f64], tau: f64) -> Result<f64> {
    let p = softmin_weights(costs, tau)?;
    Ok(p.iter().enumerate().map(|(d, w)| d as f64 * w).sum())
}

/// Learnable state and architecture of the matcher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatcherParams {
    pub version: u32,
    /// Side of the square matching window.
    pub window: usize,
    /// Largest candidate disparity.
    pub d_max: usize,
    pub tau: f64,
    pub kernel_size: usize,
    /// Row-major `kernel_size x kernel_size` aggregation weights.
    pub kernel: Vec<f64>,
}

impl MatcherParams {
    /// Identity kernel: the center tap is 1, the rest 0.
    pub fn identity(kernel_size: usize, window: usize, d_max: usize, tau: f64) -> Result<Self> {
        let mut kernel = vec![0.0; kernel_size * kernel_size];
        if kernel_size > 0 {
            let center = kernel.len() / 2;
            kernel[center] = 1.0;
        }
        let p = MatcherParams {
            version: PARAMS_VERSION,
            window,
            d_max,
            tau,
            kernel_size,
            kernel,
        };
        p.validate()?;
        Ok(p)
    }

    /// Per-pixel matching with a vanishing temperature, i.e. a hard argmin
    /// of single-pixel absolute differences. Exact on noiseless scenes with
    /// integer disparities, where the true candidate is the only zero-cost one.
    pub fn oracle(d_max: usize) -> Result<Self> {
        Self::identity(1, 1, d_max, 1e-9)
    }

    /// Identity kernel plus zero-mean Gaussian noise with `sigma`.
    pub fn init(kernel_size: usize, window: usize, d_max: usize, tau: f64, sigma: f64, seed: u64) -> Result<Self> {
        let mut p = Self::identity(kernel_size, window, d_max, tau)?;
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in &mut p.kernel {
                *k += normal.sample(&mut rng);
            }
        }
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != PARAMS_VERSION {
            return Err(Error::Config(format!("unsupported params version {}", self.version)));
        }
        if self.kernel_size % 2 == 0 || self.window % 2 == 0 {
            return Err(Error::Config("kernel and window sizes must be odd".into()));
        }
        if self.kernel.len() != self.kernel_size * self.kernel_size {
            return Err(Error::Config(format!(
                "kernel of size {} needs {} weights, got {}",
                self.kernel_size,
                self.kernel_size * self.kernel_size,
                self.kernel.len()
            )));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be > 0, got {}", self.tau)));
        }
        if self.d_max == 0 {
            return Err(Error::Config("d_max must be at least 1".into()));
        }
        if self.kernel.iter().any(|k| !k.is_finite()) {
            return Err(Error::Config("kernel weights must be finite".into()));
        }
        Ok(())
    }

    /// Border lost on each side: matching window plus aggregation kernel.
    pub fn margin(&self) -> usize {
        self.window / 2 + self.kernel_size / 2
    }

    /// Rows and columns of the pixels the matcher predicts: every candidate
    /// of every tap must lie inside both images.
    pub fn support(&self, height: usize, width: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let m = self.margin();
        let rows = m..height.saturating_sub(m).max(m);
        let cols = m + self.d_max..width.saturating_sub(m).max(m + self.d_max);
        (rows, cols)
    }
}

/// Result of a forward pass, with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct Forward {
    pub pred: PixelField,
    volume: CostVolume,
    // softmax weights, laid out like the cost volume
    probs: Vec<f64>,
}

impl Forward {
    pub fn volume(&self) -> &CostVolume {
        &self.volume
    }
}

/// Runs the matcher. Pixels outside [`MatcherParams::support`] are invalid
/// in the prediction.
pub fn forward(params: &MatcherParams, left: &GrayImage, right: &GrayImage) -> Result<Forward> {
    params.validate()?;
    let volume = build_cost_volume(left, right, params.window, params.d_max)?;
    let (h, w) = volume.shape();
    let n = h * w;
    let ks = params.kernel_size;
    let rk = ks / 2;
    let nd = params.d_max + 1;
    let (rows, cols) = params.support(h, w);

    let mut agg = vec![0.0; nd * n];
    agg.par_chunks_mut(n).enumerate().for_each(|(d, out)| {
        let c = volume.slice(d);
        for u in 0..ks {
            for v in 0..ks {
                let k = params.kernel[u * ks + v];
                for row in rows.clone() {
                    let src = (row + u - rk) * w;
                    let dst = row * w;
                    for col in cols.clone() {
                        out[dst + col] += k * c[src + col + v - rk];
                    }
                }
            }
        }
    });

    let mut probs = vec![0.0; nd * n];
    let mut values = vec![0.0; n];
    let mut valid = vec![false; n];
    let inv_tau = 1.0 / params.tau;
    for row in rows.clone() {
        for col in cols.clone() {
            let i = row * w + col;
            let min = (0..nd).map(|d| agg[d * n + i]).fold(f64::INFINITY, f64::min);
            let mut z = 0.0;
            for d in 0..nd {
                let e = (-(agg[d * n + i] - min) * inv_tau).exp();
                probs[d * n + i] = e;
                z += e;
            }
            let mut dhat = 0.0;
            for d in 0..nd {
                probs[d * n + i] /= z;
                dhat += d as f64 * probs[d * n + i];
            }
            values[i] = dhat;
            valid[i] = true;
        }
    }
    Ok(Forward {
        pred: PixelField::new(h, w, values, valid)?,
        volume,
        probs,
    })
}

/// Back-propagates `∂L/∂d̂` (one value per pixel, ignored where the
/// prediction is invalid) to the kernel weights.
pub fn kernel_gradient(params: &MatcherParams, fwd: &Forward, dl_dpred: &[f64]) -> Vec<f64> {
    let (h, w) = fwd.volume.shape();
    let n = h * w;
    let ks = params.kernel_size;
    let rk = ks / 2;
    let (rows, cols) = params.support(h, w);
    let inv_tau = 1.0 / params.tau;
    let pred = fwd.pred.values();

    let per_slice: Vec<Vec<f64>> = (0..=params.d_max)
        .into_par_iter()
        .map(|d| {
            let p = &fwd.probs[d * n..(d + 1) * n];
            let c = fwd.volume.slice(d);
            let mut g_a = vec![0.0; n];
            for row in rows.clone() {
                for col in cols.clone() {
                    let i = row * w + col;
                    g_a[i] = -dl_dpred[i] * p[i] * (d as f64 - pred[i]) * inv_tau;
                }
            }
            let mut out = vec![0.0; ks * ks];
            for u in 0..ks {
                for v in 0..ks {
                    let mut s = 0.0;
                    for row in rows.clone() {
                        let src = (row + u - rk) * w;
                        let dst = row * w;
                        for col in cols.clone() {
                            s += g_a[dst + col] * c[src + col + v - rk];
                        }
                    }
                    out[u * ks + v] = s;
                }
            }
            out
        })
        .collect();
    (0..ks * ks)
        .map(|t| per_slice.iter().map(|s| s[t]).collect::<Accumulator>().value())
        .collect()
}

/// How the depth part of the training objective treats the mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepthTerm {
    /// `λ·L_depth_fg + (1-λ)·L_depth_bg`.
    Split,
    /// The plain mean over all pixels, ignoring the mask.
    Unsplit,
}

/// What training minimizes: `disp_weight·L_disp + β·(depth term)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub loss: LossConfig,
    pub disp_weight: f64,
    pub depth_term: DepthTerm,
}

impl Objective {
    /// `L_disp` alone.
    pub fn disparity_only(loss: LossConfig) -> Self {
        Objective {
            loss: LossConfig { beta: 0.0, ..loss },
            disp_weight: 1.0,
            depth_term: DepthTerm::Unsplit,
        }
    }

    /// The unsplit depth loss alone.
    pub fn depth_only(loss: LossConfig) -> Self {
        Objective {
            loss: LossConfig { beta: 1.0, ..loss },
            disp_weight: 0.0,
            depth_term: DepthTerm::Unsplit,
        }
    }

    /// `L_disp + β·(λ·L_depth_fg + (1-λ)·L_depth_bg)`.
    pub fn combined(loss: LossConfig) -> Self {
        Objective {
            loss,
            disp_weight: 1.0,
            depth_term: DepthTerm::Split,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.disp_weight >= 0.0 && self.disp_weight.is_finite()) {
            return Err(Error::Config(format!("disp_weight must be >= 0, got {}", self.disp_weight)));
        }
        Ok(())
    }

    /// Objective value, the breakdown of the configured loss (with the real
    /// mask), and `∂objective/∂D̂`.
    pub fn evaluate(
        &self,
        pred: &PixelField,
        gt: &PixelField,
        mask: &ObjectMask,
        rig: CameraRig,
    ) -> Result<(f64, LossBreakdown, Vec<f64>)> {
        let cfg = LossConfig { rig, ..self.loss };
        let (b, g_disp, g_depth, depth_value) = match self.depth_term {
            DepthTerm::Split => {
                let (b, gd, gz) = loss_and_grad_parts(pred, gt, mask, &cfg)?;
                let v = b.l_depth_combined;
                (b, gd, gz, v)
            }
            DepthTerm::Unsplit => {
                let plain = LossConfig { lambda: 0.0, ..cfg };
                let all_bg = ObjectMask::filled(gt.height(), gt.width(), false);
                let (u, gd, gz) = loss_and_grad_parts(pred, gt, &all_bg, &plain)?;
                let b = total_loss(pred, gt, mask, &cfg)?;
                (b, gd, gz, u.l_depth_bg)
            }
        };
        let value = self.disp_weight * b.l_disp + cfg.beta * depth_value;
        let grad = g_disp
            .values()
            .iter()
            .zip(g_depth.values())
            .map(|(a, z)| self.disp_weight * a + z)
            .collect();
        Ok((value, b, grad))
    }
}

/// A sample held in memory for training and evaluation.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub left: GrayImage,
    pub right: GrayImage,
    pub gt: PixelField,
    pub mask: ObjectMask,
    pub rig: CameraRig,
}

impl TrainSample {
    /// Loads images, ground truth and mask; a missing mask means all background.
    pub fn load(sample: &Sample) -> Result<Self> {
        let (left, right) = sample.load_images()?;
        let fields = sample.load_fields()?;
        fields.gt.ensure_shape(left.shape())?;
        let (h, w) = fields.gt.shape();
        Ok(TrainSample {
            id: sample.id.clone(),
            left,
            right,
            gt: fields.gt,
            mask: fields.mask.unwrap_or_else(|| ObjectMask::filled(h, w, false)),
            rig: sample.rig,
        })
    }

    /// A `height x width` window starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        let (h, w) = self.gt.shape();
        if top + height > h || left + width > w {
            return Err(Error::Domain(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {h}x{w}"
            )));
        }
        let idx = |r: usize, c: usize| (top + r) * w + left + c;
        let cells = || (0..height).flat_map(move |r| (0..width).map(move |c| (r, c)));
        let img = |src: &GrayImage| {
            GrayImage::new(height, width, cells().map(|(r, c)| src.data()[idx(r, c)]).collect())
        };
        Ok(TrainSample {
            id: self.id.clone(),
            left: img(&self.left)?,
            right: img(&self.right)?,
            gt: PixelField::new(
                height,
                width,
                cells().map(|(r, c)| self.gt.values()[idx(r, c)]).collect(),
                cells().map(|(r, c)| self.gt.valid()[idx(r, c)]).collect(),
            )?,
            mask: ObjectMask::new(height, width, cells().map(|(r, c)| self.mask.is_fg(idx(r, c))).collect())?,
            rig: self.rig,
        })
    }
}

/// Loads every sample of a manifest, in manifest order.
pub fn load_samples(manifest: &SampleManifest) -> Result<Vec<TrainSample>> {
    if manifest.is_empty() {
        return Err(Error::Config("manifest has no samples".into()));
    }
    manifest.samples.par_iter().map(TrainSample::load).collect()
}

/// Objective value, loss breakdown and kernel gradient for one sample.
pub fn sample_gradient(
    params: &MatcherParams,
    sample: &TrainSample,
    objective: &Objective,
) -> Result<(f64, LossBreakdown, Vec<f64>)> {
    let fwd = forward(params, &sample.left, &sample.right)?;
    let (value, b, dl_dpred) = objective.evaluate(&fwd.pred, &sample.gt, &sample.mask, sample.rig)?;
    let g = kernel_gradient(params, &fwd, &dl_dpred);
    Ok((value, b, g))
}

/// Gradient-descent schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Seeds the kernel initialization.
    pub seed: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            epochs: 20,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

/// Mean objective and loss terms over the training set at one epoch.
/// Losses are averaged over samples; pixel counts are summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub objective: f64,
    pub breakdown: LossBreakdown,
}

impl EpochLog {
    /// Flat record for tabular output.
    pub fn row(&self) -> TrainLogRow {
        let b = &self.breakdown;
        TrainLogRow {
            epoch: self.epoch,
            objective: self.objective,
            l_disp: b.l_disp,
            l_depth_fg: b.l_depth_fg,
            l_depth_bg: b.l_depth_bg,
            l_depth_combined: b.l_depth_combined,
            total: b.total,
            n_valid: b.n_valid,
            n_fg: b.n_fg,
            n_bg: b.n_bg,
        }
    }
}

/// One training-log line: the objective and every loss term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub objective: f64,
    pub l_disp: f64,
    pub l_depth_fg: f64,
    pub l_depth_bg: f64,
    pub l_depth_combined: f64,
    pub total: f64,
    pub n_valid: usize,
    pub n_fg: usize,
    pub n_bg: usize,
}

/// Objective, breakdown and mean kernel gradient over all samples.
fn full_batch(
    params: &MatcherParams,
    samples: &[TrainSample],
    objective: &Objective,
    epoch: usize,
) -> Result<(EpochLog, Vec<f64>)> {
    let results = samples
        .par_iter()
        .map(|s| {
            let r = sample_gradient(params, s, objective)?;
            if !r.0.is_finite() || r.2.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    epoch,
                    stage: format!("sample {}", s.id),
                });
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = samples.len() as f64;
    let objective_value = results.iter().map(|r| r.0).collect::<Accumulator>().value() / n;
    let breakdowns: Vec<LossBreakdown> = results.iter().map(|r| r.1.clone()).collect();
    let grad = (0..params.kernel.len())
        .map(|t| results.iter().map(|r| r.2[t]).collect::<Accumulator>().value() / n)
        .collect();
    Ok((
        EpochLog {
            epoch,
            objective: objective_value,
            breakdown: LossBreakdown::mean_of(&breakdowns),
        },
        grad,
    ))
}

/// Outcome of [`train`]. The log has `epochs + 1` rows: row `e` holds the
/// losses of the parameters after `e` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: MatcherParams,
    pub log: Vec<EpochLog>,
}

/// Full-batch gradient descent on the kernel weights. The temperature,
/// window and candidate range stay fixed.
pub fn train(
    samples: &[TrainSample],
    objective: &Objective,
    params0: &MatcherParams,
    schedule: &Schedule,
) -> Result<TrainOutcome> {
    if samples.is_empty() {
        return Err(Error::Config("training needs at least one sample".into()));
    }
    objective.validate()?;
    params0.validate()?;
    if !(schedule.learning_rate > 0.0 && schedule.learning_rate.is_finite()) {
        return Err(Error::Config(format!("learning rate must be > 0, got {}", schedule.learning_rate)));
    }
    let mut params = params0.clone();
    let mut log = Vec::with_capacity(schedule.epochs + 1);
    for epoch in 0..=schedule.epochs {
        let (entry, grad) = full_batch(&params, samples, objective, epoch)?;
        log.push(entry);
        if epoch == schedule.epochs {
            break;
        }
        for (k, g) in params.kernel.iter_mut().zip(&grad) {
            *k -= schedule.learning_rate * g;
        }
        if params.kernel.iter().any(|k| !k.is_finite()) {
            return Err(Error::NonFinite {
                epoch,
                stage: "kernel update".into(),
            });
        }
    }
    Ok(TrainOutcome { params, log })
}

/// Predicts every sample and aggregates the metrics in sample order.
pub fn evaluate(
    params: &MatcherParams,
    samples: &[TrainSample],
    bins: &RangeBins,
    threshold_m: f64,
) -> Result<MetricReport> {
    let preds = samples
        .par_iter()
        .map(|s| forward(params, &s.left, &s.right).map(|f| f.pred))
        .collect::<Result<Vec<_>>>()?;
    let mut acc = MetricAccumulator::new(bins.clone(), threshold_m);
    for (s, p) in samples.iter().zip(&preds) {
        acc.add(p, &s.gt, &s.rig, Some(&s.mask))?;
    }
    Ok(acc.finish())
}
