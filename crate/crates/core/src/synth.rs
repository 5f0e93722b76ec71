//! Synthetic rectified stereo scenes with exact ground truth.
//!
//! A scene is a stack of fronto-parallel layers: a background whose depth
//! recedes from the bottom row towards a horizon (one constant-depth strip
//! per row), and textured rectangles in front of it. Each layer carries a
//! procedural texture defined on the left-view column `u`, so the left image
//! samples it at integer `u` and the right image at `u = x' + d`. Between
//! integer columns a texture is linear, which makes right-view samples agree
//! with linear interpolation of the left image wherever the left pixels on
//! both sides belong to the same layer.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataio::{self, Sample, SampleManifest};
use crate::error::{Error, Result};
use crate::field::PixelField;
use crate::geometry::{CameraRig, DEFAULT_MIN_DISP};
use crate::image::GrayImage;
use crate::masks::ObjectMask;

/// Largest depth a layer may sit at, in meters.
pub const MAX_SCENE_DEPTH: f64 = 80.0;

/// Visible layers whose left-view intensities vary less than this are
/// rejected as untextured.
pub const MIN_TEXTURE_STD: f64 = 0.01;

fn default_contrast() -> f64 {
    0.3
}

fn default_period() -> f64 {
    4.0
}

fn default_d_max() -> f64 {
    192.0
}

/// Seeded band-limited value noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextureSpec {
    pub seed: u64,
    /// Peak deviation from mid-gray; must lie in `(0, 0.5]`.
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    /// Feature size of the coarsest octave, in pixels.
    #[serde(default = "default_period")]
    pub period_px: f64,
}

impl TextureSpec {
    pub fn new(seed: u64) -> Self {
        TextureSpec {
            seed,
            contrast: default_contrast(),
            period_px: default_period(),
        }
    }
}

/// Background depth profile: `far_depth_m` at and above the horizon row,
/// receding linearly in disparity to `near_depth_m` at the bottom row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub near_depth_m: f64,
    pub far_depth_m: f64,
    /// Horizon position as a fraction of the image height.
    #[serde(default)]
    pub horizon: f64,
    pub texture: TextureSpec,
}

/// Axis-aligned foreground rectangle, in left-view pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub depth_m: f64,
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
    pub texture: TextureSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    /// Seeds the sensor noise.
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub rig: CameraRig,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    pub background: BackgroundSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Standard deviation of additive Gaussian noise on both images.
    #[serde(default)]
    pub noise: f64,
    /// Round every layer disparity to the nearest integer.
    #[serde(default)]
    pub integer_disparity: bool,
}

/// A generated scene. `disparity` is dense; `occluded` marks left-view
/// pixels with no correspondence in the right view.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub left: GrayImage,
    pub right: GrayImage,
    pub disparity: PixelField,
    pub mask: ObjectMask,
    pub occluded: Vec<bool>,
}

impl Scene {
    /// Ground truth with occluded pixels invalidated.
    pub fn gt_noc(&self) -> PixelField {
        let mut gt = self.disparity.clone();
        for (i, &occ) in self.occluded.iter().enumerate() {
            if occ {
                gt.invalidate(i);
            }
        }
        gt
    }
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn lattice(seed: u64, octave: u64, ix: i64, iy: i64) -> f64 {
    let h = mix(seed ^ mix(octave.wrapping_add(mix(ix as u64 ^ mix(iy as u64)))));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, octave: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let (ix, iy) = (fx as i64, fy as i64);
    let a = lattice(seed, octave, ix, iy);
    let b = lattice(seed, octave, ix + 1, iy);
    let c = lattice(seed, octave, ix, iy + 1);
    let d = lattice(seed, octave, ix + 1, iy + 1);
    let top = a + tx * (b - a);
    let bottom = c + tx * (d - c);
    top + ty * (bottom - top)
}

impl TextureSpec {
    /// Intensity at integer column `u` and row `v`.
    pub fn at(&self, u: i64, v: i64) -> f64 {
        let p = self.period_px;
        let coarse = value_noise(self.seed, 0, u as f64 / p, v as f64 / p);
        let fine = value_noise(self.seed, 1, 2.0 * u as f64 / p, 2.0 * v as f64 / p);
        0.5 + self.contrast * (2.0 * coarse + fine) / 3.0
    }

    /// Linear interpolation between integer columns.
    pub fn sample(&self, u: f64, v: i64) -> f64 {
        let u0 = u.floor();
        let t = u - u0;
        let a = self.at(u0 as i64, v);
        if t == 0.0 {
            return a;
        }
        a + t * (self.at(u0 as i64 + 1, v) - a)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.contrast > 0.0 && self.contrast <= 0.5) {
            return Err(Error::Spec(format!("{what}: texture contrast must lie in (0, 0.5], got {}", self.contrast)));
        }
        if !(self.period_px >= 1.0 && self.period_px.is_finite()) {
            return Err(Error::Spec(format!("{what}: texture period must be >= 1 px, got {}", self.period_px)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Rect {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
}

struct Layers<'a> {
    spec: &'a SceneSpec,
    bg_disp: Vec<f64>,
    obj_disp: Vec<f64>,
    rects: Vec<Rect>,
}

/// Layer index: objects by position, the background as `None`.
type LayerId = Option<usize>;

impl Layers<'_> {
    fn disp(&self, id: LayerId, row: usize) -> f64 {
        id.map_or(self.bg_disp[row], |k| self.obj_disp[k])
    }

    fn texture(&self, id: LayerId) -> &TextureSpec {
        id.map_or(&self.spec.background.texture, |k| &self.spec.objects[k].texture)
    }

    /// Front-most layer at left-view column `u` (continuous, pixel centers
    /// at integers). Equal disparities resolve to the earlier object.
    fn front_at(&self, row: usize, covers: impl Fn(usize) -> bool) -> LayerId {
        let mut best: LayerId = None;
        let mut best_d = self.bg_disp[row];
        for (k, r) in self.rects.iter().enumerate() {
            if row < r.r0 || row >= r.r1 || !covers(k) {
                continue;
            }
            let d = self.obj_disp[k];
            if best.is_none() || d > best_d {
                best = Some(k);
                best_d = d;
            }
        }
        best
    }

    fn front_left(&self, row: usize, x: usize) -> LayerId {
        self.front_at(row, |k| x >= self.rects[k].c0 && x < self.rects[k].c1)
    }

    /// Front-most layer seen at continuous right-view column `p`.
    fn front_right(&self, row: usize, p: f64) -> LayerId {
        self.front_at(row, |k| {
            let u = p + self.obj_disp[k];
            let r = self.rects[k];
            u >= r.c0 as f64 - 0.5 && u < r.c1 as f64 - 0.5
        })
    }
}

fn layer_disparity(spec: &SceneSpec, depth: f64, what: &str) -> Result<f64> {
    if !(depth > 0.0 && depth <= MAX_SCENE_DEPTH) {
        return Err(Error::Spec(format!("{what}: depth {depth} m outside (0, {MAX_SCENE_DEPTH}]")));
    }
    let mut d = spec.rig.disparity_of(depth);
    if spec.integer_disparity {
        d = d.round();
    }
    if !(d > DEFAULT_MIN_DISP && d <= spec.d_max) {
        return Err(Error::Spec(format!(
            "{what}: depth {depth} m gives disparity {d} px outside ({DEFAULT_MIN_DISP}, {}]",
            spec.d_max
        )));
    }
    Ok(d)
}

fn build_layers(spec: &SceneSpec) -> Result<Layers<'_>> {
    let (h, w) = (spec.height, spec.width);
    if h == 0 || w == 0 {
        return Err(Error::Spec("scene must have at least one pixel".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Spec(format!("noise must be >= 0, got {}", spec.noise)));
    }
    let bg = &spec.background;
    bg.texture.validate("background")?;
    if !(0.0..1.0).contains(&bg.horizon) {
        return Err(Error::Spec(format!("horizon must lie in [0, 1), got {}", bg.horizon)));
    }
    if bg.near_depth_m > bg.far_depth_m {
        return Err(Error::Spec("background near depth exceeds far depth".into()));
    }
    let d_near = layer_disparity(spec, bg.near_depth_m, "background near")?;
    let d_far = layer_disparity(spec, bg.far_depth_m, "background far")?;
    let horizon_row = bg.horizon * (h - 1) as f64;
    let bg_disp = (0..h)
        .map(|row| {
            let r = row as f64;
            if r <= horizon_row || h == 1 {
                return d_far;
            }
            let d = (d_near * (r - horizon_row) / ((h - 1) as f64 - horizon_row)).max(d_far);
            if spec.integer_disparity {
                d.round()
            } else {
                d
            }
        })
        .collect::<Vec<_>>();

    let mut obj_disp = Vec::with_capacity(spec.objects.len());
    let mut rects = Vec::with_capacity(spec.objects.len());
    for (k, o) in spec.objects.iter().enumerate() {
        let what = format!("object {k}");
        o.texture.validate(&what)?;
        if o.height == 0 || o.width == 0 || o.top + o.height > h || o.left + o.width > w {
            return Err(Error::Spec(format!("{what}: rectangle does not fit the image")));
        }
        let d = layer_disparity(spec, o.depth_m, &what)?;
        let rect = Rect {
            r0: o.top,
            r1: o.top + o.height,
            c0: o.left,
            c1: o.left + o.width,
        };
        if let Some(row) = (rect.r0..rect.r1).find(|&row| bg_disp[row] >= d) {
            return Err(Error::Spec(format!(
                "{what}: at {} m it lies behind the background on row {row}",
                o.depth_m
            )));
        }
        obj_disp.push(d);
        rects.push(rect);
    }
    Ok(Layers {
        spec,
        bg_disp,
        obj_disp,
        rects,
    })
}

fn add_noise(img: &mut GrayImage, sigma: f64, rng: &mut ChaCha8Rng) {
    let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
    for v in img.data_mut() {
        if let Some(n) = &normal {
            *v += n.sample(rng);
        }
        *v = v.clamp(0.0, 1.0);
    }
}

/// Renders a scene. Fully determined by the spec.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    let layers = build_layers(spec)?;
    let (h, w) = (spec.height, spec.width);
    let n = h * w;
    let mut left = GrayImage::zeros(h, w);
    let mut right = GrayImage::zeros(h, w);
    let mut disp = vec![0.0; n];
    let mut occluded = vec![false; n];
    let mut bits = vec![false; n];
    let mut visible: Vec<Vec<f64>> = vec![Vec::new(); spec.objects.len() + 1];

    for row in 0..h {
        let v = row as i64;
        for x in 0..w {
            let i = row * w + x;
            let id = layers.front_left(row, x);
            let d = layers.disp(id, row);
            let value = layers.texture(id).at(x as i64, v);
            left.set(row, x, value);
            disp[i] = d;
            bits[i] = id.is_some();
            visible[id.map_or(spec.objects.len(), |k| k)].push(value);
            let p = x as f64 - d;
            occluded[i] = p < 0.0 || layers.front_right(row, p) != id;

            let rid = layers.front_right(row, x as f64);
            let u = x as f64 + layers.disp(rid, row);
            right.set(row, x, layers.texture(rid).sample(u, v));
        }
    }

    for (k, vals) in visible.iter().enumerate() {
        if vals.len() < 16 {
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        if sd < MIN_TEXTURE_STD {
            let what = if k == spec.objects.len() { "background".to_string() } else { format!("object {k}") };
            return Err(Error::Spec(format!("{what}: texture too uniform to match (std {sd:.2e})")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    add_noise(&mut left, spec.noise, &mut rng);
    add_noise(&mut right, spec.noise, &mut rng);

    Ok(Scene {
        left,
        right,
        disparity: PixelField::from_values(h, w, disp)?,
        mask: ObjectMask::new(h, w, bits)?,
        occluded,
    })
}

/// Scene families for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Foreground near 17% of pixels, mostly within 20 m.
    KittiLike,
    /// Small foreground objects between 40 and 78 m, plus an occasional near one.
    FarObjects,
    /// Noiseless kitti-like scenes with integer layer disparities.
    IntegerShift,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::KittiLike => "kitti-like",
            Preset::FarObjects => "far-objects",
            Preset::IntegerShift => "integer-shift",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kitti-like" => Ok(Preset::KittiLike),
            "far-objects" => Ok(Preset::FarObjects),
            "integer-shift" => Ok(Preset::IntegerShift),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected kitti-like, far-objects or integer-shift"
            ))),
        }
    }
}

/// Template from which the scenes of a dataset are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub preset: Preset,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub rig: CameraRig,
    pub d_max: f64,
    pub noise: f64,
}

impl DatasetSpec {
    /// Defaults: 128x256 images, KITTI rig, disparities up to 64 px.
    pub fn new(preset: Preset, seed: u64) -> Self {
        DatasetSpec {
            preset,
            seed,
            height: 128,
            width: 256,
            rig: CameraRig::kitti(),
            d_max: 64.0,
            noise: match preset {
                Preset::IntegerShift => 0.0,
                Preset::KittiLike => 0.01,
                Preset::FarObjects => 0.02,
            },
        }
    }

    /// The spec of scene `index`; independent of how many scenes are drawn.
    pub fn scene(&self, index: u64) -> Result<SceneSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let (h, w) = (self.height, self.width);
        if h < 16 || w < 32 {
            return Err(Error::Spec("dataset scenes need at least 16x32 pixels".into()));
        }
        let fb = self.rig.fb();
        let near = (1.1 * fb / self.d_max).max(7.0);
        let (horizon, far) = match self.preset {
            Preset::FarObjects => (0.1, 79.0),
            _ => (0.3, 75.0),
        };
        let background = BackgroundSpec {
            near_depth_m: near,
            far_depth_m: far,
            horizon,
            texture: TextureSpec::new(rng.random()),
        };
        let mut scene = SceneSpec {
            seed: rng.random(),
            height: h,
            width: w,
            rig: self.rig,
            d_max: self.d_max,
            background,
            objects: Vec::new(),
            noise: self.noise,
            integer_disparity: self.preset == Preset::IntegerShift,
        };
        let probe = build_layers(&scene)?;
        let bg_disp = probe.bg_disp.clone();
        drop(probe);

        // (depth, height, width) per object
        let mut wanted: Vec<(f64, usize, usize)> = Vec::new();
        match self.preset {
            Preset::KittiLike | Preset::IntegerShift => {
                let k = rng.random_range(2..=4);
                let target = rng.random_range(0.15..0.186) * (h * w) as f64;
                let shares: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
                let total: f64 = shares.iter().sum();
                for s in shares {
                    let depth = if rng.random_bool(0.85) {
                        rng.random_range(near.max(8.0)..20.0)
                    } else {
                        rng.random_range(20.0..45.0)
                    };
                    let area = target * s / total;
                    let aspect = rng.random_range(1.3..2.4);
                    let oh = (area / aspect).sqrt().round().max(2.0) as usize;
                    let ow = (area / oh as f64).round().max(2.0) as usize;
                    wanted.push((depth, oh, ow));
                }
            }
            Preset::FarObjects => {
                let scale = h as f64 / 128.0;
                for _ in 0..rng.random_range(2..=3) {
                    let depth = rng.random_range(40.0..78.0);
                    let oh = (rng.random_range(6.0..12.0) * scale).round().max(2.0) as usize;
                    let ow = (rng.random_range(12.0..40.0) * scale).round().max(2.0) as usize;
                    wanted.push((depth, oh, ow));
                }
                if rng.random_bool(0.5) {
                    let depth = rng.random_range(near.max(8.0)..15.0);
                    let oh = (rng.random_range(20.0..40.0) * scale).round() as usize;
                    let ow = (rng.random_range(30.0..70.0) * scale).round() as usize;
                    wanted.push((depth, oh, ow));
                }
            }
        }

        let mut placed: Vec<Rect> = Vec::new();
        for (depth, oh, ow) in wanted {
            let mut d = self.rig.disparity_of(depth);
            if scene.integer_disparity {
                d = d.round();
            }
            // the object stands on the ground: its rows must all be behind it
            let Some(bottom) = (0..h).rev().find(|&r| bg_disp[r] < d) else {
                continue;
            };
            let oh = oh.min(bottom + 1);
            let ow = ow.min(w / 2);
            let top = bottom + 1 - oh;
            for _ in 0..32 {
                let left = rng.random_range(0..=w - ow);
                let r = Rect {
                    r0: top,
                    r1: bottom + 1,
                    c0: left,
                    c1: left + ow,
                };
                let overlaps = placed
                    .iter()
                    .any(|p| r.r0 < p.r1 && p.r0 < r.r1 && r.c0 < p.c1 && p.c0 < r.c1);
                if !overlaps {
                    placed.push(r);
                    scene.objects.push(ObjectSpec {
                        depth_m: depth,
                        top,
                        left,
                        height: oh,
                        width: ow,
                        texture: TextureSpec::new(rng.random()),
                    });
                    break;
                }
            }
        }
        Ok(scene)
    }
}

/// Writes one sample directory and returns its manifest entry.
pub fn write_scene(scene: &Scene, spec: &SceneSpec, id: &str, dir: &Path) -> Result<Sample> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let left = dir.join("left.png");
    let right = dir.join("right.png");
    let gt = dir.join("gt_disp.pfm");
    let mask = dir.join("mask.png");
    dataio::write_image_png16(&left, &scene.left)?;
    dataio::write_image_png16(&right, &scene.right)?;
    dataio::write_pfm(&gt, &scene.gt_noc())?;
    dataio::write_mask_png(&mask, &scene.mask)?;
    let spec_path = dir.join("scene.json");
    let text = serde_json::to_string_pretty(spec).expect("scene specs serialize");
    std::fs::write(&spec_path, text + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(Sample {
        id: id.to_string(),
        left,
        right,
        gt_disparity: gt,
        mask: Some(mask),
        pred_disparity: None,
        rig: spec.rig,
    })
}

/// Generates `n` scenes under `out_dir` and writes `manifest.json` there.
pub fn generate_dataset(template: &DatasetSpec, n: usize, out_dir: &Path) -> Result<SampleManifest> {
    if n == 0 {
        return Err(Error::Config("dataset needs at least one scene".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = template.scene(i as u64)?;
            let scene = generate_scene(&spec)?;
            let id = format!("{i:04}");
            write_scene(&scene, &spec, &id, &out_dir.join(&id))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("generator".into(), json!("depthloss synth"));
    metadata.insert("preset".into(), json!(template.preset.name()));
    metadata.insert("dataset_spec".into(), serde_json::to_value(template).expect("spec serializes"));
    let manifest = SampleManifest {
        base_dir: out_dir.to_path_buf(),
        metadata,
        default_rig: Some(template.rig),
        samples,
    };
    manifest.write("manifest.json")?;
    Ok(manifest)
}
