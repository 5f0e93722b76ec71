//! Evaluation metrics: disparity EPE, the KITTI D1 outlier rate, depth EPE
//! binned by true depth, and the foreground/background by near/far pixel
//! distribution of a dataset.
//!
//! A pixel is evaluated when its ground truth is valid and positive and its
//! prediction is valid. Sums run sequentially in row-major order, then in
//! sample order when aggregating a dataset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PixelField;
use crate::geometry::{CameraRig, DEFAULT_MIN_DISP};
use crate::losses::Class;
use crate::masks::ObjectMask;

/// Depth beyond which pixels are left out of depth metrics.
pub const DEFAULT_MAX_DEPTH: f64 = 80.0;
/// Near/far split used by the distribution table.
pub const DEFAULT_NEAR_THRESHOLD: f64 = 20.0;

/// Which pixels a metric covers.
#[derive(Debug, Clone, Copy)]
pub enum Selection<'a> {
    All,
    Class(&'a ObjectMask, Class),
}

impl Selection<'_> {
    #[inline]
    fn contains(&self, i: usize) -> bool {
        match self {
            Selection::All => true,
            Selection::Class(m, Class::Foreground) => m.is_fg(i),
            Selection::Class(m, Class::Background) => !m.is_fg(i),
        }
    }

    fn check(&self, shape: (usize, usize)) -> Result<()> {
        match self {
            Selection::All => Ok(()),
            Selection::Class(m, _) => m.ensure_shape(shape),
        }
    }
}

/// A ratio or mean with the number of pixels behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    pub count: usize,
}

impl Rate {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }
}

fn evaluated(pred: &PixelField, gt: &PixelField, i: usize) -> Option<(f64, f64)> {
    match (pred.value_at(i), gt.value_at(i)) {
        (Some(p), Some(d)) if d > 0.0 => Some((p, d)),
        _ => None,
    }
}

/// KITTI outlier rule: error above 3 px and above 5% of the true disparity.
#[inline]
pub fn is_d1_outlier(pred: f64, gt: f64) -> bool {
    let err = (pred - gt).abs();
    err > 3.0 && err > 0.05 * gt
}

/// Mean absolute disparity error (pixels).
pub fn epe(pred: &PixelField, gt: &PixelField, sel: Selection<'_>) -> Result<Rate> {
    pred.ensure_shape(gt.shape())?;
    sel.check(gt.shape())?;
    let (mut sum, mut count) = (0.0, 0usize);
    for i in 0..gt.len() {
        if let Some((p, d)) = evaluated(pred, gt, i) {
            if sel.contains(i) {
                sum += (d - p).abs();
                count += 1;
            }
        }
    }
    Ok(Rate {
        value: if count == 0 { 0.0 } else { sum / count as f64 },
        count,
    })
}

/// Fraction of evaluated pixels that are D1 outliers.
pub fn d1_rate(pred: &PixelField, gt: &PixelField, sel: Selection<'_>) -> Result<Rate> {
    pred.ensure_shape(gt.shape())?;
    sel.check(gt.shape())?;
    let (mut outliers, mut count) = (0usize, 0usize);
    for i in 0..gt.len() {
        if let Some((p, d)) = evaluated(pred, gt, i) {
            if sel.contains(i) {
                count += 1;
                outliers += is_d1_outlier(p, d) as usize;
            }
        }
    }
    Ok(Rate {
        value: if count == 0 { 0.0 } else { outliers as f64 / count as f64 },
        count,
    })
}

/// Ascending, non-overlapping half-open depth intervals `[lo, hi)` in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct RangeBins(Vec<(f64, f64)>);

impl RangeBins {
    pub fn new(bins: Vec<(f64, f64)>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::Config("at least one depth bin is required".into()));
        }
        for (k, &(lo, hi)) in bins.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                return Err(Error::Config(format!("bin {k} = [{lo}, {hi}) is not a valid interval")));
            }
            if k > 0 && bins[k - 1].1 > lo {
                return Err(Error::Config(format!("bin {k} overlaps or precedes bin {}", k - 1)));
            }
        }
        Ok(RangeBins(bins))
    }

    /// Contiguous bins from consecutive edges, e.g. `[0, 10, 20]`.
    pub fn from_edges(edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Config("need at least two bin edges".into()));
        }
        Self::new(edges.windows(2).map(|w| (w[0], w[1])).collect())
    }

    /// `width`-meter bins covering `[0, max)`.
    pub fn uniform(width: f64, max: f64) -> Result<Self> {
        if !(width > 0.0 && max > 0.0) {
            return Err(Error::Config(format!("bad uniform bins: width {width}, max {max}")));
        }
        let n = (max / width).ceil() as usize;
        Self::new(
            (0..n)
                .map(|k| (k as f64 * width, ((k + 1) as f64 * width).min(max)))
                .collect(),
        )
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the bin holding `z`, if any.
    pub fn locate(&self, z: f64) -> Option<usize> {
        self.0.iter().position(|&(lo, hi)| z >= lo && z < hi)
    }
}

impl Default for RangeBins {
    /// Eight 10 m bins covering `[0, 80)`.
    fn default() -> Self {
        RangeBins((0..8).map(|k| (k as f64 * 10.0, (k + 1) as f64 * 10.0)).collect())
    }
}

impl TryFrom<Vec<(f64, f64)>> for RangeBins {
    type Error = Error;

    fn try_from(v: Vec<(f64, f64)>) -> Result<Self> {
        RangeBins::new(v)
    }
}

impl From<RangeBins> for Vec<(f64, f64)> {
    fn from(b: RangeBins) -> Self {
        b.0
    }
}

/// Mean absolute depth error of one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStat {
    pub lo: f64,
    pub hi: f64,
    pub mean_abs_m: f64,
    pub count: usize,
    pub sum_abs_m: f64,
}

impl BinStat {
    fn empty(lo: f64, hi: f64) -> Self {
        BinStat {
            lo,
            hi,
            mean_abs_m: 0.0,
            count: 0,
            sum_abs_m: 0.0,
        }
    }

    fn push(&mut self, err: f64) {
        self.sum_abs_m += err;
        self.count += 1;
        self.mean_abs_m = self.sum_abs_m / self.count as f64;
    }
}

/// Depth EPE per bin of ground-truth depth.
///
/// Predictions below the minimum disparity are clamped to it, so a matcher
/// that collapses to zero disparity is charged a large but finite error.
/// Pixels whose true depth falls outside every bin are dropped.
pub fn depth_epe_binned(
    pred: &PixelField,
    gt: &PixelField,
    rig: &CameraRig,
    bins: &RangeBins,
    sel: Selection<'_>,
) -> Result<Vec<BinStat>> {
    pred.ensure_shape(gt.shape())?;
    sel.check(gt.shape())?;
    let mut stats: Vec<BinStat> = bins.0.iter().map(|&(lo, hi)| BinStat::empty(lo, hi)).collect();
    for i in 0..gt.len() {
        let Some((p, d)) = evaluated(pred, gt, i) else {
            continue;
        };
        if !sel.contains(i) {
            continue;
        }
        let z = rig.depth_of(d);
        if let Some(k) = bins.locate(z) {
            let z_hat = rig.depth_of(p.max(DEFAULT_MIN_DISP));
            stats[k].push((z - z_hat).abs());
        }
    }
    Ok(stats)
}

/// Share of valid ground-truth pixels in each foreground/background by
/// near/far cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub threshold_m: f64,
    pub n_valid: usize,
    /// Pixel counts `[fg_near, fg_far, bg_near, bg_far]`.
    pub counts: [usize; 4],
    pub fg_near: f64,
    pub fg_far: f64,
    pub bg_near: f64,
    pub bg_far: f64,
    pub fg_total: f64,
    pub bg_total: f64,
    pub near_total: f64,
    pub far_total: f64,
    pub empty: bool,
}

impl DistributionTable {
    fn from_counts(threshold_m: f64, counts: [usize; 4]) -> Self {
        let n: usize = counts.iter().sum();
        let frac = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let [a, b, c, d] = counts;
        DistributionTable {
            threshold_m,
            n_valid: n,
            counts,
            fg_near: frac(a),
            fg_far: frac(b),
            bg_near: frac(c),
            bg_far: frac(d),
            fg_total: frac(a + b),
            bg_total: frac(c + d),
            near_total: frac(a + c),
            far_total: frac(b + d),
            empty: n == 0,
        }
    }

    /// Folds in the counts of another table with the same threshold.
    pub fn merge(&self, other: &DistributionTable) -> DistributionTable {
        let mut counts = self.counts;
        for (c, o) in counts.iter_mut().zip(other.counts) {
            *c += o;
        }
        Self::from_counts(self.threshold_m, counts)
    }

    pub fn empty(threshold_m: f64) -> Self {
        Self::from_counts(threshold_m, [0; 4])
    }
}

/// Foreground/background by `≤ t` / `> t` meters table over valid ground truth.
pub fn distribution_table(
    gt: &PixelField,
    rig: &CameraRig,
    mask: &ObjectMask,
    threshold_m: f64,
) -> Result<DistributionTable> {
    if !(threshold_m > 0.0 && threshold_m.is_finite()) {
        return Err(Error::Domain(format!("depth threshold must be > 0, got {threshold_m}")));
    }
    mask.ensure_shape(gt.shape())?;
    let mut counts = [0usize; 4];
    for (i, d) in gt.iter_valid() {
        if d <= 0.0 {
            continue;
        }
        let far = rig.depth_of(d) > threshold_m;
        let cell = if mask.is_fg(i) { 0 } else { 2 } + far as usize;
        counts[cell] += 1;
    }
    Ok(DistributionTable::from_counts(threshold_m, counts))
}

/// One histogram bucket `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Pixel counts per `bin_width`-meter depth bucket below `max_depth`.
///
/// Buckets run from 0 up to the last populated one; an empty field yields
/// an empty histogram.
pub fn distribution_histogram(
    gt: &PixelField,
    rig: &CameraRig,
    bin_width: f64,
    max_depth: f64,
) -> Result<Vec<HistBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::Domain(format!("bin width must be > 0, got {bin_width}")));
    }
    let mut counts: Vec<usize> = Vec::new();
    for (_, d) in gt.iter_valid() {
        if d <= 0.0 {
            continue;
        }
        let z = rig.depth_of(d);
        if z >= max_depth {
            continue;
        }
        let k = (z / bin_width).floor() as usize;
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistBin {
            lo: k as f64 * bin_width,
            hi: ((k + 1) as f64 * bin_width).min(max_depth),
            count,
        })
        .collect())
}

/// Adds two histograms bucket by bucket.
pub fn merge_histograms(a: &[HistBin], b: &[HistBin]) -> Vec<HistBin> {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut out = long.to_vec();
    for (o, s) in out.iter_mut().zip(short) {
        o.count += s.count;
    }
    out
}

/// Disparity and depth metrics of one image or a whole dataset. In the
/// distribution rows, near means gt depth `<= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_valid: usize,
    pub epe_px: f64,
    pub d1_all: f64,
    pub epe_fg: Option<f64>,
    pub epe_bg: Option<f64>,
    pub d1_fg: Option<f64>,
    pub d1_bg: Option<f64>,
    pub depth_epe_per_bin: Vec<BinStat>,
    pub distribution: DistributionTable,
}

impl MetricReport {
    /// Pixel-weighted mean depth error over the bins overlapping `[lo, hi)`.
    pub fn depth_epe_over(&self, lo: f64, hi: f64) -> Option<f64> {
        let (sum, n) = self
            .depth_epe_per_bin
            .iter()
            .filter(|b| b.lo >= lo && b.hi <= hi)
            .fold((0.0, 0usize), |(s, n), b| (s + b.sum_abs_m, n + b.count));
        (n > 0).then(|| sum / n as f64)
    }

    pub fn bin(&self, lo: f64) -> Option<&BinStat> {
        self.depth_epe_per_bin.iter().find(|b| b.lo == lo)
    }

    /// The report in long format, one row per value.
    pub fn rows(&self, sample: &str) -> Vec<MetricRow> {
        let row = |metric, class, (bin_lo, bin_hi): (Option<f64>, Option<f64>), value, count| MetricRow {
            sample: sample.to_string(),
            metric,
            class,
            bin_lo,
            bin_hi,
            value,
            count,
        };
        let mut rows = vec![
            row("epe_px", "all", (None, None), self.epe_px, Some(self.n_valid)),
            row("d1", "all", (None, None), self.d1_all, Some(self.n_valid)),
        ];
        for (name, class, v) in [
            ("epe_px", "fg", self.epe_fg),
            ("epe_px", "bg", self.epe_bg),
            ("d1", "fg", self.d1_fg),
            ("d1", "bg", self.d1_bg),
        ] {
            if let Some(value) = v {
                rows.push(row(name, class, (None, None), value, None));
            }
        }
        for b in &self.depth_epe_per_bin {
            rows.push(row("depth_epe_m", "all", (Some(b.lo), Some(b.hi)), b.mean_abs_m, Some(b.count)));
        }
        let t = &self.distribution;
        for (cell, v, c, bin) in [
            ("fg_near", t.fg_near, t.counts[0], (None, Some(t.threshold_m))),
            ("fg_far", t.fg_far, t.counts[1], (Some(t.threshold_m), None)),
            ("bg_near", t.bg_near, t.counts[2], (None, Some(t.threshold_m))),
            ("bg_far", t.bg_far, t.counts[3], (Some(t.threshold_m), None)),
        ] {
            rows.push(row("distribution", cell, bin, v, Some(c)));
        }
        rows
    }
}

/// One value of a [`MetricReport`] in long format. Absent fields serialize
/// as empty CSV cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub sample: String,
    pub metric: &'static str,
    pub class: &'static str,
    pub bin_lo: Option<f64>,
    pub bin_hi: Option<f64>,
    pub value: f64,
    pub count: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    abs_sum: f64,
    outliers: usize,
    count: usize,
}

impl Tally {
    fn push(&mut self, p: f64, d: f64) {
        self.abs_sum += (d - p).abs();
        self.outliers += is_d1_outlier(p, d) as usize;
        self.count += 1;
    }

    fn epe(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.abs_sum / self.count as f64
        }
    }

    fn d1(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.outliers as f64 / self.count as f64
        }
    }
}

/// Aggregates metrics over samples in the order they are added.
#[derive(Debug, Clone)]
pub struct MetricAccumulator {
    bins: RangeBins,
    threshold_m: f64,
    all: Tally,
    fg: Tally,
    bg: Tally,
    any_mask: bool,
    depth: Vec<BinStat>,
    distribution: DistributionTable,
}

impl MetricAccumulator {
    pub fn new(bins: RangeBins, threshold_m: f64) -> Self {
        let depth = bins.0.iter().map(|&(lo, hi)| BinStat::empty(lo, hi)).collect();
        MetricAccumulator {
            bins,
            threshold_m,
            all: Tally::default(),
            fg: Tally::default(),
            bg: Tally::default(),
            any_mask: false,
            depth,
            distribution: DistributionTable::empty(threshold_m),
        }
    }

    /// Adds one sample; without a mask every pixel counts as background for
    /// the distribution table and the per-class rates stay absent.
    pub fn add(
        &mut self,
        pred: &PixelField,
        gt: &PixelField,
        rig: &CameraRig,
        mask: Option<&ObjectMask>,
    ) -> Result<()> {
        pred.ensure_shape(gt.shape())?;
        if let Some(m) = mask {
            m.ensure_shape(gt.shape())?;
            self.any_mask = true;
        }
        for i in 0..gt.len() {
            let Some((p, d)) = evaluated(pred, gt, i) else {
                continue;
            };
            self.all.push(p, d);
            if let Some(m) = mask {
                if m.is_fg(i) {
                    self.fg.push(p, d);
                } else {
                    self.bg.push(p, d);
                }
            }
            let z = rig.depth_of(d);
            if let Some(k) = self.bins.locate(z) {
                self.depth[k].push((z - rig.depth_of(p.max(DEFAULT_MIN_DISP))).abs());
            }
        }
        let bg_only;
        let m = match mask {
            Some(m) => m,
            None => {
                bg_only = ObjectMask::filled(gt.height(), gt.width(), false);
                &bg_only
            }
        };
        self.distribution = self
            .distribution
            .merge(&distribution_table(gt, rig, m, self.threshold_m)?);
        Ok(())
    }

    pub fn finish(&self) -> MetricReport {
        let class = |t: &Tally, f: fn(&Tally) -> f64| self.any_mask.then(|| f(t));
        MetricReport {
            n_valid: self.all.count,
            epe_px: self.all.epe(),
            d1_all: self.all.d1(),
            epe_fg: class(&self.fg, Tally::epe),
            epe_bg: class(&self.bg, Tally::epe),
            d1_fg: class(&self.fg, Tally::d1),
            d1_bg: class(&self.bg, Tally::d1),
            depth_epe_per_bin: self.depth.clone(),
            distribution: self.distribution.clone(),
        }
    }
}

/// Metrics of a single sample.
pub fn evaluate_sample(
    pred: &PixelField,
    gt: &PixelField,
    rig: &CameraRig,
    mask: Option<&ObjectMask>,
    bins: &RangeBins,
    threshold_m: f64,
) -> Result<MetricReport> {
    let mut acc = MetricAccumulator::new(bins.clone(), threshold_m);
    acc.add(pred, gt, rig, mask)?;
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> PixelField {
        PixelField::from_values(1, v.len(), v.to_vec()).unwrap()
    }

    fn unit_rig() -> CameraRig {
        CameraRig::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn epe_examples() {
        let r = epe(&row(&[10.5, 23.0]), &row(&[10.0, 20.0]), Selection::All).unwrap();
        assert_eq!(r.value, 1.75);
        assert_eq!(epe(&row(&[3.0]), &row(&[3.0]), Selection::All).unwrap().value, 0.0);
        let gt = PixelField::new(1, 2, vec![10.0, 20.0], vec![true, false]).unwrap();
        let r = epe(&row(&[11.0, 99.0]), &gt, Selection::All).unwrap();
        assert_eq!((r.value, r.count), (1.0, 1));
        let none = epe(&row(&[1.0]), &row(&[0.0]), Selection::All).unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn d1_examples() {
        let gt = row(&[10.0, 100.0, 50.0]);
        let pred = row(&[10.5, 104.0, 54.0]);
        let r = d1_rate(&pred, &gt, Selection::All).unwrap();
        assert_eq!(r.value, 1.0 / 3.0);
        assert_eq!(d1_rate(&gt, &gt, Selection::All).unwrap().value, 0.0);
        assert_eq!(d1_rate(&row(&[20.0]), &row(&[10.0]), Selection::All).unwrap().value, 1.0);
    }

    #[test]
    fn d1_restricted_to_class() {
        let gt = row(&[10.0, 100.0, 50.0]);
        let pred = row(&[10.5, 104.0, 54.0]);
        let m = ObjectMask::new(1, 3, vec![false, false, true]).unwrap();
        let fg = d1_rate(&pred, &gt, Selection::Class(&m, Class::Foreground)).unwrap();
        let bg = d1_rate(&pred, &gt, Selection::Class(&m, Class::Background)).unwrap();
        assert_eq!((fg.value, fg.count), (1.0, 1));
        assert_eq!((bg.value, bg.count), (0.0, 2));
    }

    #[test]
    fn binned_depth_examples() {
        let rig = unit_rig();
        // disparity = 1/depth under fb = 1
        let gt = row(&[1.0 / 5.0, 1.0 / 35.0]);
        let pred = row(&[1.0 / 5.5, 1.0 / 36.0]);
        let s = depth_epe_binned(&pred, &gt, &rig, &RangeBins::default(), Selection::All).unwrap();
        assert!((s[0].mean_abs_m - 0.5).abs() < 1e-12);
        assert_eq!(s[0].count, 1);
        assert!((s[3].mean_abs_m - 1.0).abs() < 1e-12);
        assert_eq!(s[3].count, 1);
        assert_eq!(s.iter().map(|b| b.count).sum::<usize>(), 2);

        let same = depth_epe_binned(&gt, &gt, &rig, &RangeBins::default(), Selection::All).unwrap();
        assert!(same.iter().all(|b| b.mean_abs_m == 0.0));
    }

    #[test]
    fn eighty_meter_boundary() {
        let rig = CameraRig::new(80.0, 1.0).unwrap();
        let at_80 = row(&[1.0]);
        let s = depth_epe_binned(&at_80, &at_80, &rig, &RangeBins::default(), Selection::All).unwrap();
        assert_eq!(s.iter().map(|b| b.count).sum::<usize>(), 0);

        let rig = CameraRig::new(79.999, 1.0).unwrap();
        let s = depth_epe_binned(&at_80, &at_80, &rig, &RangeBins::default(), Selection::All).unwrap();
        assert_eq!(s[7].count, 1);
    }

    #[test]
    fn default_bins_cover_zero_to_eighty() {
        let b = RangeBins::default();
        assert_eq!(b.len(), 8);
        assert_eq!(b.intervals()[0], (0.0, 10.0));
        assert_eq!(b.intervals()[7], (70.0, 80.0));
        assert_eq!(RangeBins::uniform(10.0, 80.0).unwrap(), b);
        assert!(RangeBins::new(vec![(0.0, 10.0), (5.0, 20.0)]).is_err());
        assert!(RangeBins::new(vec![(10.0, 10.0)]).is_err());
    }

    #[test]
    fn kitti_share_fixture() {
        // counts per cell: fg near, fg far, bg near, bg far
        let counts = [1490usize, 191, 6479, 1840];
        let rig = unit_rig();
        let (near, far) = (1.0 / 10.0, 1.0 / 40.0);
        let mut values = Vec::new();
        let mut bits = Vec::new();
        for (cell, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                values.push(if cell % 2 == 0 { near } else { far });
                bits.push(cell < 2);
            }
        }
        let gt = PixelField::from_values(100, 100, values).unwrap();
        let mask = ObjectMask::new(100, 100, bits).unwrap();
        let t = distribution_table(&gt, &rig, &mask, 20.0).unwrap();
        let pct = |x: f64| (x * 10_000.0).round() / 100.0;
        assert_eq!(
            [pct(t.fg_near), pct(t.fg_far), pct(t.bg_near), pct(t.bg_far)],
            [14.90, 1.91, 64.79, 18.40]
        );
        assert_eq!([pct(t.fg_total), pct(t.bg_total)], [16.81, 83.19]);
        assert_eq!([pct(t.near_total), pct(t.far_total)], [79.69, 20.31]);
    }

    #[test]
    fn distribution_edge_cases() {
        let rig = unit_rig();
        let gt = row(&[1.0 / 5.0, 1.0 / 7.0]);
        let t = distribution_table(&gt, &rig, &ObjectMask::filled(1, 2, true), 20.0).unwrap();
        assert_eq!((t.fg_near, t.fg_far, t.bg_near, t.bg_far), (1.0, 0.0, 0.0, 0.0));

        let empty = PixelField::new(1, 2, vec![0.0; 2], vec![false; 2]).unwrap();
        let t = distribution_table(&empty, &rig, &ObjectMask::filled(1, 2, true), 20.0).unwrap();
        assert!(t.empty);
        assert_eq!(t.fg_near + t.fg_far + t.bg_near + t.bg_far, 0.0);

        assert!(distribution_table(&gt, &rig, &ObjectMask::filled(1, 2, true), 0.0).is_err());
    }

    #[test]
    fn histogram_examples() {
        let rig = unit_rig();
        let h = distribution_histogram(&row(&[1.0 / 5.0, 1.0 / 15.0]), &rig, 10.0, 80.0).unwrap();
        assert_eq!(
            h,
            vec![
                HistBin { lo: 0.0, hi: 10.0, count: 1 },
                HistBin { lo: 10.0, hi: 20.0, count: 1 }
            ]
        );
        let empty = PixelField::new(0, 0, vec![], vec![]).unwrap();
        assert!(distribution_histogram(&empty, &rig, 10.0, 80.0).unwrap().is_empty());
        assert!(distribution_histogram(&empty, &rig, 0.0, 80.0).is_err());
    }

    #[test]
    fn report_classes_follow_mask_presence() {
        let gt = row(&[10.0, 20.0]);
        let pred = row(&[10.0, 26.0]);
        let rig = CameraRig::kitti();
        let bins = RangeBins::default();
        let plain = evaluate_sample(&pred, &gt, &rig, None, &bins, 20.0).unwrap();
        assert!(plain.d1_fg.is_none() && plain.d1_bg.is_none());
        let m = ObjectMask::new(1, 2, vec![false, true]).unwrap();
        let masked = evaluate_sample(&pred, &gt, &rig, Some(&m), &bins, 20.0).unwrap();
        assert_eq!((masked.d1_fg, masked.d1_bg), (Some(1.0), Some(0.0)));
        assert_eq!(masked.d1_all, 0.5);
    }

    #[test]
    fn perfect_prediction_report_is_zero() {
        let gt = row(&[10.0, 20.0, 40.0]);
        let r = evaluate_sample(&gt, &gt, &CameraRig::kitti(), None, &RangeBins::default(), 20.0)
            .unwrap();
        assert_eq!((r.epe_px, r.d1_all), (0.0, 0.0));
        assert!(r.depth_epe_per_bin.iter().all(|b| b.mean_abs_m == 0.0));
    }
}
