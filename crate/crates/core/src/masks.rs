//! Foreground object masks.
//!
//! Masks are ingested, never computed: an upstream instance segmenter
//! produces per-instance masks or a label map, and only the union of the
//! selected classes is kept.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary per-pixel foreground indicator (`true` = foreground).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl ObjectMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::Domain(format!(
                "mask of {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(ObjectMask {
            height,
            width,
            bits,
        })
    }

    pub fn filled(height: usize, width: usize, fg: bool) -> Self {
        ObjectMask {
            height,
            width,
            bits: vec![fg; height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn is_fg(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, fg: bool) {
        self.bits[i] = fg;
    }

    /// The mask `1 - B`.
    pub fn complement(&self) -> ObjectMask {
        ObjectMask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn count_fg(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::shape(shape, self.shape()));
        }
        Ok(())
    }
}

/// Ordered, non-empty set of class labels treated as foreground.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassFilter(Vec<String>);

impl ClassFilter {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::Config("class filter must name at least one label".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Config(format!("duplicate label {l:?} in class filter")));
            }
        }
        Ok(ClassFilter(labels))
    }

    /// Transportation vehicles: cars, trucks, vans, buses, bicycles, motorcycles.
    pub fn vehicles() -> Self {
        ClassFilter(
            ["car", "truck", "van", "bus", "bicycle", "motorcycle"]
                .into_iter()
                .map(String::from)
                .collect(),
        )
    }

    pub fn labels(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for ClassFilter {
    type Error = Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        ClassFilter::new(v)
    }
}

impl From<ClassFilter> for Vec<String> {
    fn from(f: ClassFilter) -> Self {
        f.0
    }
}

/// Label name to class id table, stored on disk as a flat JSON object.
pub type IdTable = BTreeMap<String, u16>;

/// Builds the union mask of every pixel whose class id is selected by `filter`.
pub fn mask_from_label_map(
    height: usize,
    width: usize,
    labels: &[u16],
    filter: &ClassFilter,
    id_map: &IdTable,
) -> Result<ObjectMask> {
    let mut ids = BTreeSet::new();
    for label in filter.labels() {
        let id = id_map
            .get(label)
            .ok_or_else(|| Error::Config(format!("label {label:?} has no id in the id table")))?;
        ids.insert(*id);
    }
    ObjectMask::new(height, width, labels.iter().map(|l| ids.contains(l)).collect())
}

/// Foreground/background pixel counts over valid pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub n_fg: usize,
    pub n_bg: usize,
    pub fg_fraction: f64,
}

pub fn mask_stats(mask: &ObjectMask, valid: &[bool]) -> Result<MaskStats> {
    if valid.len() != mask.bits.len() {
        return Err(Error::Domain(format!(
            "validity buffer has {} entries, mask has {}",
            valid.len(),
            mask.bits.len()
        )));
    }
    let (mut n_fg, mut n_bg) = (0, 0);
    for (&b, &ok) in mask.bits.iter().zip(valid) {
        match (ok, b) {
            (true, true) => n_fg += 1,
            (true, false) => n_bg += 1,
            _ => {}
        }
    }
    let total = n_fg + n_bg;
    let fg_fraction = if total == 0 {
        0.0
    } else {
        n_fg as f64 / total as f64
    };
    Ok(MaskStats {
        n_fg,
        n_bg,
        fg_fraction,
    })
}
