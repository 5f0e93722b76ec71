//! Readers and writers for disparity maps, masks, label maps, images and
//! dataset manifests.
//!
//! Disparity PNGs follow the KITTI convention: single-channel 16-bit, value
//! `v` decodes to `v / 256` pixels and `v = 0` marks a missing pixel. PFM
//! files carry dense float disparity; their rows are stored bottom-up and
//! the sign of the scale field selects the byte order.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::field::PixelField;
use crate::geometry::CameraRig;
use crate::image::GrayImage;
use crate::masks::{IdTable, ObjectMask};

/// Scale of the 16-bit disparity encoding.
pub const DISPARITY_SCALE: f64 = 256.0;

struct GrayPng {
    width: usize,
    height: usize,
    depth: png::BitDepth,
    samples: Vec<u16>,
}

fn read_gray_png(path: &Path) -> Result<GrayPng> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::format(
            path,
            format!("expected a single-channel PNG, found {:?}", info.color_type),
        ));
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let samples = match info.bit_depth {
        png::BitDepth::Eight => buf[..width * height].iter().map(|&b| b as u16).collect(),
        png::BitDepth::Sixteen => buf[..2 * width * height]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect(),
        other => {
            return Err(Error::format(path, format!("unsupported bit depth {other:?}")));
        }
    };
    Ok(GrayPng {
        width,
        height,
        depth: info.bit_depth,
        samples,
    })
}

fn write_gray_png(path: &Path, width: usize, height: usize, depth: png::BitDepth, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(bytes).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

fn write_png16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    let bytes: Vec<u8> = samples.iter().flat_map(|v| v.to_be_bytes()).collect();
    write_gray_png(path, width, height, png::BitDepth::Sixteen, &bytes)
}

/// Decodes stored 16-bit values into a disparity field.
pub fn decode_disparity(height: usize, width: usize, stored: &[u16]) -> Result<PixelField> {
    let values = stored.iter().map(|&v| v as f64 / DISPARITY_SCALE).collect();
    let valid = stored.iter().map(|&v| v != 0).collect();
    PixelField::new(height, width, values, valid)
}

/// Encodes a disparity field as `round(d * 256)`, invalid pixels as 0.
pub fn encode_disparity(field: &PixelField) -> Result<Vec<u16>> {
    field
        .values()
        .iter()
        .zip(field.valid())
        .map(|(&d, &ok)| {
            if !ok {
                return Ok(0);
            }
            let v = (d * DISPARITY_SCALE).round();
            if !(1.0..=u16::MAX as f64).contains(&v) {
                return Err(Error::Range(format!(
                    "disparity {d} px does not fit the 16-bit encoding"
                )));
            }
            Ok(v as u16)
        })
        .collect()
}

pub fn read_disparity_png16(path: impl AsRef<Path>) -> Result<PixelField> {
    let path = path.as_ref();
    let png = read_gray_png(path)?;
    if png.depth != png::BitDepth::Sixteen {
        return Err(Error::format(path, "disparity PNG must be 16-bit"));
    }
    decode_disparity(png.height, png.width, &png.samples)
}

pub fn write_disparity_png16(path: impl AsRef<Path>, field: &PixelField) -> Result<()> {
    let stored = encode_disparity(field)?;
    write_png16(path.as_ref(), field.width(), field.height(), &stored)
}

/// Reads an 8-bit mask PNG: 0 is background, anything else foreground.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<ObjectMask> {
    let path = path.as_ref();
    let png = read_gray_png(path)?;
    if png.depth != png::BitDepth::Eight {
        return Err(Error::format(path, "mask PNG must be 8-bit"));
    }
    ObjectMask::new(png.height, png.width, png.samples.iter().map(|&v| v != 0).collect())
}

/// Writes a mask as 8-bit 0/255.
pub fn write_mask_png(path: impl AsRef<Path>, mask: &ObjectMask) -> Result<()> {
    let bytes: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_gray_png(path.as_ref(), mask.width(), mask.height(), png::BitDepth::Eight, &bytes)
}

/// Class-id map from an 8- or 16-bit PNG: `(height, width, ids)`.
pub fn read_label_png(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u16>)> {
    let png = read_gray_png(path.as_ref())?;
    Ok((png.height, png.width, png.samples))
}

pub fn read_id_table(path: impl AsRef<Path>) -> Result<IdTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Reads an 8- or 16-bit grayscale PNG into `[0, 1]` intensities.
pub fn read_image_png(path: impl AsRef<Path>) -> Result<GrayImage> {
    let png = read_gray_png(path.as_ref())?;
    let max = match png.depth {
        png::BitDepth::Eight => 255.0,
        _ => 65535.0,
    };
    GrayImage::new(png.height, png.width, png.samples.iter().map(|&v| v as f64 / max).collect())
}

/// Writes intensities clamped to `[0, 1]` as a 16-bit grayscale PNG.
pub fn write_image_png16(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let stored: Vec<u16> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    write_png16(path.as_ref(), img.width(), img.height(), &stored)
}

/// Parses a single-channel PFM document.
pub fn decode_pfm(bytes: &[u8], origin: &Path) -> Result<PixelField> {
    let bad = |why: &str| Error::format(origin, why.to_string());
    // header: three whitespace-separated tokens, then exactly one whitespace byte
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated PFM header"));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ASCII PFM header"))?);
    }
    if pos >= bytes.len() {
        return Err(bad("missing PFM payload"));
    }
    pos += 1;
    match tokens[0] {
        "Pf" => {}
        "PF" => return Err(bad("three-channel PFM is not a disparity map")),
        other => return Err(bad(&format!("unknown PFM magic {other:?}"))),
    }
    let width: usize = tokens[1].parse().map_err(|_| bad("bad PFM width"))?;
    let height: usize = tokens[2].parse().map_err(|_| bad("bad PFM height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| bad("bad PFM scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(bad("PFM scale must be non-zero"));
    }
    let little = scale < 0.0;
    let payload = &bytes[pos..];
    if payload.len() != 4 * width * height {
        return Err(bad(&format!(
            "PFM payload has {} bytes, expected {}",
            payload.len(),
            4 * width * height
        )));
    }
    let mut values = vec![0.0; width * height];
    for (k, c) in payload.chunks_exact(4).enumerate() {
        let raw = [c[0], c[1], c[2], c[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (k / width, k % width);
        values[(height - 1 - file_row) * width + col] = v as f64;
    }
    PixelField::from_values(height, width, values)
}

/// Serializes a field as little-endian PFM; invalid pixels become `+inf`.
pub fn encode_pfm(field: &PixelField) -> Vec<u8> {
    let (h, w) = field.shape();
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(4 * w * h);
    for row in (0..h).rev() {
        for col in 0..w {
            let v = field.get(row, col).map_or(f32::INFINITY, |v| v as f32);
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<PixelField> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pfm(&bytes, path)
}

pub fn write_pfm(path: impl AsRef<Path>, field: &PixelField) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pfm(field)).map_err(|e| Error::io(path, e))
}

/// Reads a disparity map, choosing the codec from the extension.
pub fn read_disparity(path: impl AsRef<Path>) -> Result<PixelField> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pfm") => read_pfm(path),
        Some("png") => read_disparity_png16(path),
        _ => Err(Error::format(path, "disparity maps must be .png or .pfm")),
    }
}

/// Writes a disparity map, choosing the codec from the extension.
pub fn write_disparity(path: impl AsRef<Path>, field: &PixelField) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_deref() {
        Some("pfm") => write_pfm(path, field),
        Some("png") => write_disparity_png16(path, field),
        _ => Err(Error::format(path, "disparity maps must be .png or .pfm")),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

/// Version written to and required from manifest files.
pub const MANIFEST_SCHEMA_VERSION: u64 = 1;

/// One stereo sample with paths resolved against the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub left: PathBuf,
    pub right: PathBuf,
    pub gt_disparity: PathBuf,
    pub mask: Option<PathBuf>,
    pub pred_disparity: Option<PathBuf>,
    pub rig: CameraRig,
}

/// A validated dataset manifest. Sample order is file order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleManifest {
    pub base_dir: PathBuf,
    pub metadata: BTreeMap<String, Value>,
    pub default_rig: Option<CameraRig>,
    pub samples: Vec<Sample>,
}

/// Tensors of one sample, loaded from disk.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub gt: PixelField,
    pub mask: Option<ObjectMask>,
    pub pred: Option<PixelField>,
}

impl Sample {
    pub fn load_images(&self) -> Result<(GrayImage, GrayImage)> {
        let left = read_image_png(&self.left)?;
        let right = read_image_png(&self.right)?;
        if left.shape() != right.shape() {
            return Err(Error::shape(left.shape(), right.shape()));
        }
        Ok((left, right))
    }

    /// Ground truth, optional mask and optional prediction, shape-checked.
    pub fn load_fields(&self) -> Result<LoadedSample> {
        let gt = read_disparity(&self.gt_disparity)?;
        let mask = self.mask.as_ref().map(read_mask_png).transpose()?;
        let pred = self.pred_disparity.as_ref().map(read_disparity).transpose()?;
        if let Some(m) = &mask {
            m.ensure_shape(gt.shape())?;
        }
        if let Some(p) = &pred {
            p.ensure_shape(gt.shape())?;
        }
        Ok(LoadedSample { gt, mask, pred })
    }
}

fn rig_from(v: &Value, at: &str, issues: &mut Vec<String>) -> Option<CameraRig> {
    let f = v.get("focal_px").and_then(Value::as_f64);
    let b = v.get("baseline_m").and_then(Value::as_f64);
    match (f, b) {
        (Some(f), Some(b)) => match CameraRig::new(f, b) {
            Ok(r) => Some(r),
            Err(e) => {
                issues.push(format!("{at}: {e}"));
                None
            }
        },
        _ => {
            issues.push(format!("{at}: needs numeric focal_px and baseline_m"));
            None
        }
    }
}

/// Loads and validates a manifest, reporting every problem at once.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<SampleManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_manifest(&doc, &base_dir).map_err(|issues| Error::Manifest {
        path: path.to_path_buf(),
        issues,
    })
}

fn parse_manifest(doc: &Value, base_dir: &Path) -> std::result::Result<SampleManifest, Vec<String>> {
    let mut issues = Vec::new();
    let Some(obj) = doc.as_object() else {
        return Err(vec!["manifest must be a JSON object".into()]);
    };
    match obj.get("schema_version").and_then(Value::as_u64) {
        Some(MANIFEST_SCHEMA_VERSION) => {}
        Some(v) => issues.push(format!("schema_version: unsupported version {v}")),
        None => issues.push("schema_version: missing or not an integer".into()),
    }
    let metadata = match obj.get("metadata") {
        None => BTreeMap::new(),
        Some(Value::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        Some(_) => {
            issues.push("metadata: must be an object".into());
            BTreeMap::new()
        }
    };
    let default_rig = obj
        .get("default_rig")
        .and_then(|v| rig_from(v, "default_rig", &mut issues));

    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    match obj.get("samples").and_then(Value::as_array) {
        None => issues.push("samples: missing or not an array".into()),
        Some(list) => {
            for (k, s) in list.iter().enumerate() {
                let id = s
                    .get("id")
                    .and_then(Value::as_str)
                    .map(String::from)
                    .unwrap_or_else(|| format!("#{k}"));
                let at = format!("samples[{k}] ({id})");
                if s.get("id").and_then(Value::as_str).is_none() {
                    issues.push(format!("{at}.id: missing"));
                } else if !seen.insert(id.clone()) {
                    issues.push(format!("{at}.id: duplicate sample id"));
                }
                let mut path_field = |name: &str, required: bool| -> Option<PathBuf> {
                    match s.get(name) {
                        None | Some(Value::Null) => {
                            if required {
                                issues.push(format!("{at}.{name}: missing"));
                            }
                            None
                        }
                        Some(Value::String(p)) => {
                            let full = base_dir.join(p);
                            if !full.is_file() {
                                issues.push(format!("{at}.{name}: file not found: {}", full.display()));
                            }
                            Some(full)
                        }
                        Some(_) => {
                            issues.push(format!("{at}.{name}: must be a path string"));
                            None
                        }
                    }
                };
                let left = path_field("left", true);
                let right = path_field("right", true);
                let gt = path_field("gt_disparity", true);
                let mask = path_field("mask", false);
                let pred = path_field("pred_disparity", false);
                let rig = match s.get("rig") {
                    Some(v) => rig_from(v, &format!("{at}.rig"), &mut issues),
                    None => {
                        if default_rig.is_none() {
                            issues.push(format!("{at}.rig: no rig and no default_rig"));
                        }
                        default_rig
                    }
                };
                if let (Some(left), Some(right), Some(gt_disparity), Some(rig)) = (left, right, gt, rig) {
                    samples.push(Sample {
                        id,
                        left,
                        right,
                        gt_disparity,
                        mask,
                        pred_disparity: pred,
                        rig,
                    });
                }
            }
        }
    }
    if issues.is_empty() {
        Ok(SampleManifest {
            base_dir: base_dir.to_path_buf(),
            metadata,
            default_rig,
            samples,
        })
    } else {
        Err(issues)
    }
}

impl SampleManifest {
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn has_masks(&self) -> bool {
        self.samples.iter().any(|s| s.mask.is_some())
    }

    fn rel(&self, p: &Path) -> String {
        p.strip_prefix(&self.base_dir)
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    /// JSON document with paths relative to `base_dir`.
    pub fn to_json(&self) -> Value {
        let rig_json = |r: &CameraRig| json!({"focal_px": r.focal_px(), "baseline_m": r.baseline_m()});
        let samples: Vec<Value> = self
            .samples
            .iter()
            .map(|s| {
                let mut o = serde_json::Map::new();
                o.insert("id".into(), json!(s.id));
                o.insert("left".into(), json!(self.rel(&s.left)));
                o.insert("right".into(), json!(self.rel(&s.right)));
                o.insert("gt_disparity".into(), json!(self.rel(&s.gt_disparity)));
                if let Some(m) = &s.mask {
                    o.insert("mask".into(), json!(self.rel(m)));
                }
                if let Some(p) = &s.pred_disparity {
                    o.insert("pred_disparity".into(), json!(self.rel(p)));
                }
                if Some(s.rig) != self.default_rig {
                    o.insert("rig".into(), rig_json(&s.rig));
                }
                Value::Object(o)
            })
            .collect();
        let mut doc = serde_json::Map::new();
        doc.insert("schema_version".into(), json!(MANIFEST_SCHEMA_VERSION));
        doc.insert("metadata".into(), json!(self.metadata));
        if let Some(r) = &self.default_rig {
            doc.insert("default_rig".into(), rig_json(r));
        }
        doc.insert("samples".into(), Value::Array(samples));
        Value::Object(doc)
    }

    /// Writes the manifest as pretty JSON to `<base_dir>/<name>`.
    pub fn write(&self, name: &str) -> Result<PathBuf> {
        let path = self.base_dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &self.to_json())
            .map_err(|e| Error::io(&path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disparity_codec_examples() {
        let f = decode_disparity(1, 3, &[19934, 256, 0]).unwrap();
        assert_eq!(f.values()[0], 77.8671875);
        assert!((f.values()[0] - 77.8672).abs() < 1e-4);
        assert_eq!(f.values()[1], 1.0);
        assert!(!f.valid()[2]);

        let g = PixelField::new(1, 2, vec![77.868, 5.0], vec![true, false]).unwrap();
        assert_eq!(encode_disparity(&g).unwrap(), vec![19934, 0]);
    }

    #[test]
    fn out_of_range_disparity_is_rejected() {
        for d in [256.0, 1e-4, -3.0] {
            let f = PixelField::filled(1, 1, d);
            assert!(matches!(encode_disparity(&f), Err(Error::Range(_))), "{d}");
        }
    }

    #[test]
    fn pfm_minimal() {
        let mut bytes = b"Pf\n1 1\n-1.0\n".to_vec();
        bytes.extend_from_slice(&2.5f32.to_le_bytes());
        let f = decode_pfm(&bytes, Path::new("mem")).unwrap();
        assert_eq!(f.get(0, 0), Some(2.5));
    }

    #[test]
    fn pfm_big_endian_and_row_order() {
        // positive scale: big-endian; first stored row is the bottom row
        let mut bytes = b"Pf 2 2 1.0\n".to_vec();
        for v in [3.0f32, 4.0, 1.0, 2.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        let f = decode_pfm(&bytes, Path::new("mem")).unwrap();
        assert_eq!(f.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn pfm_non_finite_is_invalid() {
        let mut bytes = b"Pf\n3 1\n-1\n".to_vec();
        for v in [f32::INFINITY, f32::NAN, 7.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let f = decode_pfm(&bytes, Path::new("mem")).unwrap();
        assert_eq!(f.valid(), &[false, false, true]);
    }

    #[test]
    fn pfm_malformed_headers() {
        for doc in [&b"P5\n1 1\n-1\n\0\0\0\0"[..], b"Pf\n1\n", b"Pf\n1 1\n0\n\0\0\0\0", b"Pf\n2 1\n-1\n\0\0\0\0", b"PF\n1 1\n-1\n\0\0\0\0"] {
            assert!(matches!(decode_pfm(doc, Path::new("mem")), Err(Error::Format { .. })));
        }
    }

    #[test]
    fn png_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        let f = PixelField::new(2, 2, vec![77.868, 1.0, 0.0, 191.3], vec![true, true, false, true]).unwrap();
        write_disparity_png16(&p, &f).unwrap();
        let g = read_disparity_png16(&p).unwrap();
        assert_eq!(g.valid(), f.valid());
        for (a, b) in f.iter_valid().zip(g.iter_valid()) {
            assert!((a.1 - b.1).abs() <= 1.0 / 512.0);
        }
    }

    #[test]
    fn eight_bit_png_is_not_a_disparity_map() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_mask_png(&p, &ObjectMask::filled(2, 3, true)).unwrap();
        assert!(matches!(read_disparity_png16(&p), Err(Error::Format { .. })));
        assert_eq!(read_mask_png(&p).unwrap().count_fg(), 6);
    }

    #[test]
    fn mask_reencoding_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        let m = ObjectMask::new(2, 3, vec![true, false, false, true, true, false]).unwrap();
        write_mask_png(&a, &m).unwrap();
        write_mask_png(&b, &read_mask_png(&a).unwrap()).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn label_map_and_id_table() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.png");
        write_png16(&p, 3, 1, &[26, 7, 300]).unwrap();
        assert_eq!(read_label_png(&p).unwrap(), (1, 3, vec![26, 7, 300]));
        let t = dir.path().join("ids.json");
        std::fs::write(&t, r#"{"car": 26, "road": 7}"#).unwrap();
        assert_eq!(read_id_table(&t).unwrap()["car"], 26);
    }
}
