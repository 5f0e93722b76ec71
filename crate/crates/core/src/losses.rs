//! The disparity/depth loss family and its analytic gradient.
//!
//! With ground-truth disparity `D`, prediction `D̂`, depths `Z = fb/D`,
//! `Ẑ = fb/D̂` and a foreground mask `B`, over the `N` jointly valid pixels:
//!
//! ```text
//! L_disp     = (1/N)  Σ s(D - D̂)
//! L_depth    = (1/N)  Σ s(Z - Ẑ)
//! L_depth_fg = Σ s(Z - Ẑ)·B / Σ B
//! L_depth_bg = Σ s(Z - Ẑ)·(1-B) / Σ (1-B)
//! L_depth_λ  = λ·L_depth_fg + (1-λ)·L_depth_bg
//! L          = L_disp + β·L_depth_λ
//! ```
//!
//! where `s` is the smooth-L1 kernel. The gradient with respect to each
//! predicted disparity follows from `∂Ẑ/∂D̂ = -fb/D̂²`:
//!
//! ```text
//! ∂L/∂D̂ᵢ = -s'(Dᵢ - D̂ᵢ)/N + β·[λ·Bᵢ/N_fg + (1-λ)(1-Bᵢ)/N_bg]·s'(Zᵢ - Ẑᵢ)·fb/D̂ᵢ²
//! ```
//!
//! A pixel is jointly valid when its ground truth is valid with
//! `0 < D ≤ d_max` and its prediction is valid. Jointly valid pixels whose
//! predicted or true disparity is below `min_disp` stay in every denominator
//! but add nothing to the depth terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PixelField;
use crate::geometry::{CameraRig, DEFAULT_MIN_DISP};
use crate::masks::ObjectMask;
use crate::reduce::{self, Accumulator};

/// Default maximum disparity (pixels).
pub const DEFAULT_D_MAX: f64 = 192.0;
/// Default foreground weight in the combined depth loss.
pub const DEFAULT_LAMBDA: f64 = 0.6;
/// Default scale of the depth term.
pub const DEFAULT_BETA: f64 = 1.0;

/// Knobs of the overall loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda: f64,
    pub beta: f64,
    pub d_max: f64,
    pub min_disp: f64,
    pub rig: CameraRig,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: DEFAULT_LAMBDA,
            beta: DEFAULT_BETA,
            d_max: DEFAULT_D_MAX,
            min_disp: DEFAULT_MIN_DISP,
            rig: CameraRig::kitti(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Domain(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::Domain(format!("d_max must be > 0, got {}", self.d_max)));
        }
        if !(self.min_disp > 0.0 && self.min_disp.is_finite()) {
            return Err(Error::Domain(format!("min_disp must be > 0, got {}", self.min_disp)));
        }
        Ok(())
    }
}

/// Smooth-L1 kernel: `0.5x²` for `|x| < 1`, `|x| - 0.5` otherwise.
#[inline]
pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * x * x
    } else {
        a - 0.5
    }
}

/// Derivative of [`smooth_l1`]: `x` inside the knee, `sign(x)` outside.
#[inline]
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() < 1.0 {
        x
    } else {
        x.signum()
    }
}

/// A normalized loss term with the size of its denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub value: f64,
    pub count: usize,
}

impl Term {
    /// True when the denominator was zero and the value defaulted to 0.
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn mean(sum: f64, count: usize) -> Term {
        let value = if count == 0 { 0.0 } else { sum / count as f64 };
        Term { value, count }
    }
}

/// Which side of the object mask a reduction covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Foreground,
    Background,
}

impl Class {
    #[inline]
    fn selects(self, fg: bool) -> bool {
        match self {
            Class::Foreground => fg,
            Class::Background => !fg,
        }
    }
}

/// Conditions a training loop may want to react to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossFlag {
    /// No jointly valid pixel; every term is 0.
    NoValidPixels,
    /// No foreground pixel; `l_depth_fg` defaulted to 0.
    EmptyForeground,
    /// No background pixel; `l_depth_bg` defaulted to 0.
    EmptyBackground,
    /// Some pixels were kept out of the depth terms by `min_disp`.
    DepthExcluded,
}

/// Every term of the overall loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_disp: f64,
    pub l_depth_fg: f64,
    pub l_depth_bg: f64,
    pub l_depth_combined: f64,
    pub total: f64,
    pub n_valid: usize,
    pub n_fg: usize,
    pub n_bg: usize,
    pub flags: Vec<LossFlag>,
}

impl LossBreakdown {
    pub fn has_flag(&self, flag: LossFlag) -> bool {
        self.flags.contains(&flag)
    }

    /// Per-sample losses averaged over samples, counts summed, flags merged
    /// in order of first appearance.
    pub fn mean_of(parts: &[LossBreakdown]) -> LossBreakdown {
        let n = parts.len().max(1) as f64;
        let mean = |f: fn(&LossBreakdown) -> f64| parts.iter().map(f).collect::<Accumulator>().value() / n;
        let mut flags: Vec<LossFlag> = Vec::new();
        for f in parts.iter().flat_map(|b| &b.flags) {
            if !flags.contains(f) {
                flags.push(*f);
            }
        }
        LossBreakdown {
            l_disp: mean(|b| b.l_disp),
            l_depth_fg: mean(|b| b.l_depth_fg),
            l_depth_bg: mean(|b| b.l_depth_bg),
            l_depth_combined: mean(|b| b.l_depth_combined),
            total: mean(|b| b.total),
            n_valid: parts.iter().map(|b| b.n_valid).sum(),
            n_fg: parts.iter().map(|b| b.n_fg).sum(),
            n_bg: parts.iter().map(|b| b.n_bg).sum(),
            flags,
        }
    }
}

/// `∂L/∂D̂` per pixel; exactly zero where the pixel is not jointly valid.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl GradientField {
    pub fn zeros(height: usize, width: usize) -> Self {
        GradientField {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Per-pixel quantities shared by the loss and its gradient.
struct Pixelwise {
    joint: Vec<bool>,
    disp_err: Vec<f64>,
    // Z - Ẑ, or None when a disparity sits below min_disp.
    depth_err: Vec<Option<f64>>,
}

fn pixelwise(pred: &PixelField, gt: &PixelField, cfg: &LossConfig) -> Result<Pixelwise> {
    cfg.validate()?;
    pred.ensure_shape(gt.shape())?;
    let n = gt.len();
    let mut joint = vec![false; n];
    let mut disp_err = vec![0.0; n];
    let mut depth_err = vec![None; n];
    for i in 0..n {
        let (Some(d), Some(p)) = (gt.value_at(i), pred.value_at(i)) else {
            continue;
        };
        if !(d > 0.0 && d <= cfg.d_max) {
            continue;
        }
        joint[i] = true;
        disp_err[i] = d - p;
        if d >= cfg.min_disp && p >= cfg.min_disp {
            depth_err[i] = Some(cfg.rig.depth_of(d) - cfg.rig.depth_of(p));
        }
    }
    Ok(Pixelwise {
        joint,
        disp_err,
        depth_err,
    })
}

/// Pixels counted by every loss term: `0 < D ≤ d_max` and both fields valid.
pub fn joint_validity(pred: &PixelField, gt: &PixelField, cfg: &LossConfig) -> Result<Vec<bool>> {
    Ok(pixelwise(pred, gt, cfg)?.joint)
}

/// Smooth-L1 disparity loss averaged over jointly valid pixels.
pub fn disparity_loss(pred: &PixelField, gt: &PixelField, cfg: &LossConfig) -> Result<Term> {
    let px = pixelwise(pred, gt, cfg)?;
    let mut acc = Accumulator::new();
    let mut count = 0;
    for i in 0..px.joint.len() {
        if px.joint[i] {
            acc.add(smooth_l1(px.disp_err[i]));
            count += 1;
        }
    }
    Ok(Term::mean(acc.value(), count))
}

/// Per-pixel smooth-L1 of the depth error; `None` outside the jointly valid
/// set, `Some(0.0)` where `min_disp` keeps the pixel out of the depth path.
pub fn depth_terms(pred: &PixelField, gt: &PixelField, cfg: &LossConfig) -> Result<Vec<Option<f64>>> {
    let px = pixelwise(pred, gt, cfg)?;
    Ok(px
        .joint
        .iter()
        .zip(&px.depth_err)
        .map(|(&ok, e)| ok.then(|| e.map_or(0.0, smooth_l1)))
        .collect())
}

/// Unsplit smooth-L1 depth loss averaged over jointly valid pixels.
pub fn depth_loss(pred: &PixelField, gt: &PixelField, cfg: &LossConfig) -> Result<Term> {
    let terms = depth_terms(pred, gt, cfg)?;
    let count = terms.iter().flatten().count();
    Ok(Term::mean(reduce::sum(terms.iter().flatten().copied()), count))
}

/// Mask-weighted mean of per-pixel terms over one class.
pub fn class_mean(terms: &[Option<f64>], mask: &ObjectMask, class: Class) -> Result<Term> {
    if terms.len() != mask.bits().len() {
        return Err(Error::Domain(format!(
            "{} per-pixel terms against a mask of {} pixels",
            terms.len(),
            mask.bits().len()
        )));
    }
    let mut acc = Accumulator::new();
    let mut count = 0;
    for (t, &fg) in terms.iter().zip(mask.bits()) {
        if let Some(v) = t {
            if class.selects(fg) {
                acc.add(*v);
                count += 1;
            }
        }
    }
    Ok(Term::mean(acc.value(), count))
}

/// Foreground depth loss: depth smooth-L1 averaged over masked pixels.
pub fn fg_depth_loss(
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
) -> Result<Term> {
    mask.ensure_shape(gt.shape())?;
    class_mean(&depth_terms(pred, gt, cfg)?, mask, Class::Foreground)
}

/// Background depth loss: depth smooth-L1 averaged over unmasked pixels.
pub fn bg_depth_loss(
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
) -> Result<Term> {
    mask.ensure_shape(gt.shape())?;
    class_mean(&depth_terms(pred, gt, cfg)?, mask, Class::Background)
}

/// `λ·fg + (1-λ)·bg`.
pub fn combined_depth_loss(fg: f64, bg: f64, lambda: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    Ok(lambda * fg + (1.0 - lambda) * bg)
}

fn breakdown(px: &Pixelwise, mask: &ObjectMask, cfg: &LossConfig) -> LossBreakdown {
    let mut disp = Accumulator::new();
    let mut fg = Accumulator::new();
    let mut bg = Accumulator::new();
    let (mut n_valid, mut n_fg, mut n_bg, mut excluded) = (0, 0, 0, 0);
    for i in 0..px.joint.len() {
        if !px.joint[i] {
            continue;
        }
        n_valid += 1;
        disp.add(smooth_l1(px.disp_err[i]));
        let depth = match px.depth_err[i] {
            Some(e) => smooth_l1(e),
            None => {
                excluded += 1;
                0.0
            }
        };
        if mask.is_fg(i) {
            n_fg += 1;
            fg.add(depth);
        } else {
            n_bg += 1;
            bg.add(depth);
        }
    }
    let l_disp = Term::mean(disp.value(), n_valid).value;
    let l_depth_fg = Term::mean(fg.value(), n_fg).value;
    let l_depth_bg = Term::mean(bg.value(), n_bg).value;
    let l_depth_combined = cfg.lambda * l_depth_fg + (1.0 - cfg.lambda) * l_depth_bg;
    let total = l_disp + cfg.beta * l_depth_combined;

    let mut flags = Vec::new();
    if n_valid == 0 {
        flags.push(LossFlag::NoValidPixels);
    }
    if n_fg == 0 {
        flags.push(LossFlag::EmptyForeground);
    }
    if n_bg == 0 {
        flags.push(LossFlag::EmptyBackground);
    }
    if excluded > 0 {
        flags.push(LossFlag::DepthExcluded);
    }
    LossBreakdown {
        l_disp,
        l_depth_fg,
        l_depth_bg,
        l_depth_combined,
        total,
        n_valid,
        n_fg,
        n_bg,
        flags,
    }
}

fn gradient_parts(
    px: &Pixelwise,
    pred: &PixelField,
    mask: &ObjectMask,
    b: &LossBreakdown,
    cfg: &LossConfig,
) -> (GradientField, GradientField) {
    let (h, w) = pred.shape();
    let mut disp = GradientField::zeros(h, w);
    let mut depth = GradientField::zeros(h, w);
    if b.n_valid == 0 {
        return (disp, depth);
    }
    let inv_n = 1.0 / b.n_valid as f64;
    let fg_w = if b.n_fg > 0 {
        cfg.beta * cfg.lambda / b.n_fg as f64
    } else {
        0.0
    };
    let bg_w = if b.n_bg > 0 {
        cfg.beta * (1.0 - cfg.lambda) / b.n_bg as f64
    } else {
        0.0
    };
    let fb = cfg.rig.fb();
    for i in 0..px.joint.len() {
        if !px.joint[i] {
            continue;
        }
        disp.values[i] = -smooth_l1_grad(px.disp_err[i]) * inv_n;
        if let Some(e) = px.depth_err[i] {
            let p = pred.values()[i];
            let weight = if mask.is_fg(i) { fg_w } else { bg_w };
            depth.values[i] = weight * smooth_l1_grad(e) * fb / (p * p);
        }
    }
    (disp, depth)
}

/// The full loss breakdown.
pub fn total_loss(
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    mask.ensure_shape(gt.shape())?;
    let px = pixelwise(pred, gt, cfg)?;
    Ok(breakdown(&px, mask, cfg))
}

/// Analytic `∂(total)/∂D̂`.
pub fn total_loss_grad(
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
) -> Result<GradientField> {
    Ok(loss_and_grad(pred, gt, mask, cfg)?.1)
}

/// Loss breakdown and gradient from a single pass over the pixels.
pub fn loss_and_grad(
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, GradientField)> {
    mask.ensure_shape(gt.shape())?;
    let px = pixelwise(pred, gt, cfg)?;
    let b = breakdown(&px, mask, cfg);
    let (mut g, depth) = gradient_parts(&px, pred, mask, &b, cfg);
    for (a, d) in g.values.iter_mut().zip(&depth.values) {
        *a += d;
    }
    Ok((b, g))
}

/// Gradient split by term: `∂L_disp/∂D̂` and `∂(β·L_depth)/∂D̂`, whose sum is
/// the total gradient.
pub fn loss_and_grad_parts(
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, GradientField, GradientField)> {
    mask.ensure_shape(gt.shape())?;
    let px = pixelwise(pred, gt, cfg)?;
    let b = breakdown(&px, mask, cfg);
    let (disp, depth) = gradient_parts(&px, pred, mask, &b, cfg);
    Ok((b, disp, depth))
}

/// Settings of the finite-difference gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step in pixels.
    pub step: f64,
    /// Pixels whose disparity or depth residual lies this close to the
    /// smooth-L1 knee `|x| = 1` are skipped.
    pub knee_margin: f64,
    /// Gradients below this magnitude are compared absolutely rather than
    /// relatively, since round-off in the loss dominates there.
    pub rel_floor: f64,
    /// Check at most this many pixels, spread evenly in row-major order.
    pub max_pixels: Option<usize>,
    pub stencil: Stencil,
}

/// Finite-difference formula used by the gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stencil {
    /// `(f(x+h) - f(x-h)) / 2h`, truncation error `O(h^2)`.
    #[default]
    ThreePoint,
    /// `(f(x-2h) - 8f(x-h) + 8f(x+h) - f(x+2h)) / 12h`, truncation error
    /// `O(h^4)`. Needed where the true gradient vanishes but the depth
    /// term's third derivative does not, e.g. at `pred == gt`.
    FivePoint,
}

impl Stencil {
    /// Largest offset from the probed value, in steps.
    fn reach(self) -> f64 {
        match self {
            Stencil::ThreePoint => 1.0,
            Stencil::FivePoint => 2.0,
        }
    }
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-3,
            knee_margin: 1e-2,
            rel_floor: 1e-7,
            max_pixels: None,
            stencil: Stencil::ThreePoint,
        }
    }
}

/// Outcome of a finite-difference gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub n_compared: usize,
    pub n_skipped: usize,
    pub max_abs_dev: f64,
    pub max_rel_dev: f64,
    /// Row-major index of the pixel with the largest relative deviation.
    pub worst_pixel: Option<usize>,
}

impl GradCheckReport {
    /// True when no pixel could be compared.
    pub fn is_vacuous(&self) -> bool {
        self.n_compared == 0
    }

    pub fn passes(&self, max_rel: f64) -> bool {
        self.max_rel_dev < max_rel
    }
}

/// Compares [`total_loss_grad`] against central differences of [`total_loss`].
pub fn finite_diff_check(
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let opts = GradCheckOptions {
        step,
        ..GradCheckOptions::default()
    };
    let analytic = total_loss_grad(pred, gt, mask, cfg)?;
    finite_diff_check_against(&analytic, pred, gt, mask, cfg, &opts)
}

/// Like [`finite_diff_check`] but against a caller-supplied gradient.
pub fn finite_diff_check_against(
    analytic: &GradientField,
    pred: &PixelField,
    gt: &PixelField,
    mask: &ObjectMask,
    cfg: &LossConfig,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let h = opts.step;
    let reach = h * opts.stencil.reach();
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("finite-difference step must be > 0, got {h}")));
    }
    mask.ensure_shape(gt.shape())?;
    if analytic.shape() != gt.shape() {
        return Err(Error::shape(gt.shape(), analytic.shape()));
    }
    let px = pixelwise(pred, gt, cfg)?;
    let fb = cfg.rig.fb();

    let near_knee = |x: f64, margin: f64| (x.abs() - 1.0).abs() <= margin;
    let comparable = |i: usize| -> bool {
        if !px.joint[i] {
            return false;
        }
        if near_knee(px.disp_err[i], opts.knee_margin) {
            return false;
        }
        let p = pred.values()[i];
        let d = gt.values()[i];
        // the perturbed prediction must stay on one side of min_disp
        if d >= cfg.min_disp && (p - reach < cfg.min_disp) != (p + reach < cfg.min_disp) {
            return false;
        }
        if let Some(e) = px.depth_err[i] {
            let swing = 2.0 * fb * reach / (p * (p - reach)).abs();
            if near_knee(e, opts.knee_margin.max(swing)) {
                return false;
            }
        }
        true
    };

    let candidates: Vec<usize> = (0..px.joint.len()).filter(|&i| px.joint[i]).collect();
    let selected: Vec<usize> = match opts.max_pixels {
        Some(m) if m < candidates.len() && m > 0 => (0..m)
            .map(|k| candidates[k * candidates.len() / m])
            .collect(),
        _ => candidates,
    };

    let mut report = GradCheckReport {
        step: h,
        n_compared: 0,
        n_skipped: 0,
        max_abs_dev: 0.0,
        max_rel_dev: 0.0,
        worst_pixel: None,
    };
    let mut probe = pred.clone();
    for &i in &selected {
        if !comparable(i) {
            report.n_skipped += 1;
            continue;
        }
        let p = pred.values()[i];
        let mut at = |offset: f64| -> Result<f64> {
            probe.set(i, p + offset);
            let v = total_loss(&probe, gt, mask, cfg)?.total;
            probe.set(i, p);
            Ok(v)
        };
        let numeric = match opts.stencil {
            Stencil::ThreePoint => (at(h)? - at(-h)?) / (2.0 * h),
            Stencil::FivePoint => {
                (at(-2.0 * h)? - 8.0 * at(-h)? + 8.0 * at(h)? - at(2.0 * h)?) / (12.0 * h)
            }
        };
        let a = analytic.values()[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(opts.rel_floor);
        report.n_compared += 1;
        report.max_abs_dev = report.max_abs_dev.max(abs);
        if report.worst_pixel.is_none() || rel > report.max_rel_dev {
            report.max_rel_dev = rel;
            report.worst_pixel = Some(i);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> PixelField {
        PixelField::from_values(1, v.len(), v.to_vec()).unwrap()
    }

    fn fb_cfg(fb: f64) -> LossConfig {
        LossConfig {
            rig: CameraRig::new(fb, 1.0).unwrap(),
            ..LossConfig::default()
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert_eq!(smooth_l1(1.0 - 1e-12), 0.5 * (1.0 - 1e-12f64).powi(2));
        assert_eq!(smooth_l1(-3.0), 2.5);
        assert_eq!(smooth_l1_grad(0.5), 0.5);
        assert_eq!(smooth_l1_grad(-3.0), -1.0);
        assert_eq!(smooth_l1_grad(1.0), 1.0);
        assert_eq!(smooth_l1_grad(-1.0), -1.0);
        assert_eq!(smooth_l1_grad(0.0), 0.0);
    }

    #[test]
    fn disparity_loss_examples() {
        let cfg = LossConfig::default();
        let t = disparity_loss(&row(&[10.5, 23.0]), &row(&[10.0, 20.0]), &cfg).unwrap();
        // brute force over the two pixels
        let oracle = (smooth_l1(10.0 - 10.5) + smooth_l1(20.0 - 23.0)) / 2.0;
        assert_eq!(t.value, oracle);
        assert_eq!(t.value, 1.3125);

        let same = disparity_loss(&row(&[4.0, 9.0]), &row(&[4.0, 9.0]), &cfg).unwrap();
        assert_eq!(same.value, 0.0);

        let gt = PixelField::new(1, 2, vec![0.0, 10.0], vec![false, true]).unwrap();
        let masked = disparity_loss(&row(&[99.0, 10.0]), &gt, &cfg).unwrap();
        assert_eq!((masked.value, masked.count), (0.0, 1));
    }

    #[test]
    fn ground_truth_validity_rule() {
        let cfg = LossConfig::default();
        // 0, negative and beyond d_max are ignored even when flagged valid
        let gt = row(&[0.0, -4.0, 192.0, 193.0]);
        let pred = row(&[1.0, 1.0, 190.0, 1.0]);
        assert_eq!(joint_validity(&pred, &gt, &cfg).unwrap(), vec![false, false, true, false]);
        let empty = disparity_loss(&row(&[1.0]), &row(&[0.0]), &cfg).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.value, 0.0);
    }

    #[test]
    fn depth_loss_examples() {
        let cfg = fb_cfg(389.34);
        let t = depth_loss(&row(&[64.89]), &row(&[77.868]), &cfg).unwrap();
        assert!((t.value - 0.5).abs() < 1e-12, "{}", t.value);

        let t = depth_loss(&row(&[77.0]), &row(&[77.868]), &cfg).unwrap();
        let err: f64 = 5.0 - 389.34 / 77.0;
        assert!((err.abs() - 0.056363).abs() < 1e-6);
        assert!((t.value - 1.588e-3).abs() < 1e-6, "{}", t.value);

        let same = depth_loss(&row(&[3.0, 50.0]), &row(&[3.0, 50.0]), &cfg).unwrap();
        assert_eq!(same.value, 0.0);
    }

    #[test]
    fn tiny_prediction_skips_depth_path() {
        let cfg = LossConfig::default();
        let pred = row(&[1e-4, 10.0]);
        let gt = row(&[10.0, 10.0]);
        let terms = depth_terms(&pred, &gt, &cfg).unwrap();
        assert_eq!(terms, vec![Some(0.0), Some(0.0)]);
        let mask = ObjectMask::filled(1, 2, false);
        let (b, g) = loss_and_grad(&pred, &gt, &mask, &cfg).unwrap();
        assert!(b.has_flag(LossFlag::DepthExcluded));
        assert_eq!(b.n_valid, 2);
        // disparity term only: -s'(10 - 1e-4)/2
        assert_eq!(g.values()[0], -0.5);
        assert!(g.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn class_means() {
        let two = [Some(0.5), Some(0.2)];
        let m = ObjectMask::new(1, 2, vec![true, false]).unwrap();
        assert_eq!(class_mean(&two, &m, Class::Foreground).unwrap().value, 0.5);
        assert_eq!(class_mean(&two, &m, Class::Background).unwrap().value, 0.2);

        let none = class_mean(&two, &ObjectMask::filled(1, 2, false), Class::Foreground).unwrap();
        assert!(none.is_empty() && none.value == 0.0);
        let none = class_mean(&two, &ObjectMask::filled(1, 2, true), Class::Background).unwrap();
        assert!(none.is_empty() && none.value == 0.0);

        let three = [Some(0.5), Some(0.2), Some(0.3)];
        let m = ObjectMask::new(1, 3, vec![true, false, true]).unwrap();
        assert!((class_mean(&three, &m, Class::Foreground).unwrap().value - 0.4).abs() < 1e-15);
        assert_eq!(class_mean(&three, &m, Class::Background).unwrap().value, 0.2);
    }

    #[test]
    fn combined_examples() {
        assert!((combined_depth_loss(2.0, 1.0, 0.6).unwrap() - 1.6).abs() < 1e-15);
        assert_eq!(combined_depth_loss(0.7, 0.7, 0.3).unwrap(), 0.7);
        assert!((combined_depth_loss(0.5, 0.2, 0.5).unwrap() - 0.35).abs() < 1e-15);
        assert!(combined_depth_loss(1.0, 1.0, 1.5).is_err());
        assert!(combined_depth_loss(1.0, 1.0, -0.1).is_err());
    }

    #[test]
    fn total_composition() {
        let l_disp = 1.3125;
        let combined = combined_depth_loss(2.0, 1.0, 0.6).unwrap();
        assert!((l_disp + 1.0 * combined - 2.9125).abs() < 1e-12);

        let cfg = LossConfig {
            beta: 0.0,
            ..LossConfig::default()
        };
        let pred = row(&[10.5, 23.0]);
        let gt = row(&[10.0, 20.0]);
        let mask = ObjectMask::new(1, 2, vec![true, false]).unwrap();
        let b = total_loss(&pred, &gt, &mask, &cfg).unwrap();
        assert_eq!(b.total, disparity_loss(&pred, &gt, &cfg).unwrap().value);

        let zero = total_loss(&gt, &gt, &mask, &LossConfig::default()).unwrap();
        assert_eq!(
            (zero.l_disp, zero.l_depth_fg, zero.l_depth_bg, zero.l_depth_combined, zero.total),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn empty_class_flags() {
        let pred = row(&[10.5, 23.0]);
        let gt = row(&[10.0, 20.0]);
        let b = total_loss(&pred, &gt, &ObjectMask::filled(1, 2, false), &LossConfig::default())
            .unwrap();
        assert!(b.has_flag(LossFlag::EmptyForeground));
        assert!(!b.has_flag(LossFlag::EmptyBackground));
        assert_eq!(b.l_depth_fg, 0.0);

        let none = total_loss(&pred, &row(&[0.0, 0.0]), &ObjectMask::filled(1, 2, true), &LossConfig::default())
            .unwrap();
        assert!(none.has_flag(LossFlag::NoValidPixels));
        assert_eq!(none.total, 0.0);
    }

    #[test]
    fn gradient_single_background_pixel_without_depth() {
        let cfg = LossConfig {
            beta: 0.0,
            ..LossConfig::default()
        };
        let g = total_loss_grad(&row(&[10.4]), &row(&[10.0]), &ObjectMask::filled(1, 1, false), &cfg)
            .unwrap();
        assert_eq!(g.values()[0], -smooth_l1_grad(10.0 - 10.4));
    }

    #[test]
    fn gradient_single_foreground_pixel() {
        let cfg = LossConfig {
            lambda: 1.0,
            beta: 1.0,
            ..fb_cfg(389.34)
        };
        let pred = row(&[64.89]);
        let gt = row(&[77.868]);
        let g = total_loss_grad(&pred, &gt, &ObjectMask::filled(1, 1, true), &cfg).unwrap();
        let depth_part = -smooth_l1_grad(5.0 - 6.0) * (-389.34 / (64.89 * 64.89));
        assert!((depth_part + 0.09246).abs() < 1e-4);
        let expected = depth_part - smooth_l1_grad(12.978);
        assert!((g.values()[0] - expected).abs() < 1e-9, "{}", g.values()[0]);

        // the example sits on the depth knee (Z - Ẑ = -1); check just off it
        let off = row(&[60.0]);
        let rep = finite_diff_check(&off, &gt, &ObjectMask::filled(1, 1, true), &cfg, 1e-3).unwrap();
        assert_eq!(rep.n_compared, 1);
        assert!(rep.max_rel_dev < 1e-4, "{rep:?}");
    }

    #[test]
    fn gradient_is_zero_off_the_valid_set() {
        let gt = PixelField::new(1, 3, vec![10.0, 0.0, 300.0], vec![true, true, true]).unwrap();
        let pred = PixelField::new(1, 3, vec![12.0, 3.0, 3.0], vec![true, true, true]).unwrap();
        let g = total_loss_grad(&pred, &gt, &ObjectMask::filled(1, 3, true), &LossConfig::default())
            .unwrap();
        assert_ne!(g.values()[0], 0.0);
        assert_eq!(&g.values()[1..], &[0.0, 0.0]);
    }

    #[test]
    fn gradcheck_at_exact_prediction() {
        let gt = row(&[10.0, 20.0, 30.0]);
        let mask = ObjectMask::new(1, 3, vec![true, false, false]).unwrap();
        let rep = finite_diff_check(&gt, &gt, &mask, &LossConfig::default(), 1e-3).unwrap();
        assert_eq!(rep.n_compared, 3);
        assert!(rep.max_abs_dev < 1e-3);
    }

    #[test]
    fn gradcheck_on_all_invalid_field() {
        let gt = PixelField::new(2, 2, vec![0.0; 4], vec![false; 4]).unwrap();
        let rep = finite_diff_check(&gt, &gt, &ObjectMask::filled(2, 2, false), &LossConfig::default(), 1e-3)
            .unwrap();
        assert!(rep.is_vacuous());
        assert_eq!(rep.worst_pixel, None);
    }

    #[test]
    fn gradcheck_rejects_bad_step() {
        let f = row(&[1.0]);
        let m = ObjectMask::filled(1, 1, false);
        assert!(finite_diff_check(&f, &f, &m, &LossConfig::default(), 0.0).is_err());
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let pred = row(&[10.5, 23.0, 7.0]);
        let gt = row(&[10.0, 20.0, 9.0]);
        let mask = ObjectMask::new(1, 3, vec![true, false, false]).unwrap();
        let cfg = LossConfig::default();
        let mut g = total_loss_grad(&pred, &gt, &mask, &cfg).unwrap();
        g.values_mut()[1] *= 1.01;
        let rep = finite_diff_check_against(&g, &pred, &gt, &mask, &cfg, &GradCheckOptions::default())
            .unwrap();
        assert_eq!(rep.worst_pixel, Some(1));
        assert!(rep.max_rel_dev > 1e-3);
    }

    #[test]
    fn config_validation() {
        let bad = [
            LossConfig { lambda: 1.2, ..LossConfig::default() },
            LossConfig { beta: -1.0, ..LossConfig::default() },
            LossConfig { d_max: 0.0, ..LossConfig::default() },
            LossConfig { min_disp: 0.0, ..LossConfig::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        let d = LossConfig::default();
        assert_eq!((d.lambda, d.beta, d.d_max), (0.6, 1.0, 192.0));
    }

    #[test]
    fn breakdown_json_is_flat() {
        let b = total_loss(&row(&[10.5]), &row(&[10.0]), &ObjectMask::filled(1, 1, false), &LossConfig::default())
            .unwrap();
        let v = serde_json::to_value(&b).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["l_disp", "l_depth_fg", "l_depth_bg", "l_depth_combined", "total", "n_valid", "n_fg", "n_bg", "flags"] {
            assert!(keys.contains(&k), "missing {k}");
        }
        assert_eq!(v["flags"], serde_json::json!(["empty_foreground"]));
    }
}
