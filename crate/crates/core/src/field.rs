use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row-major `height x width` buffer of scalars with a paired validity mask.
///
/// The unit is set by context: pixels for disparity, meters for depth.
/// Valid entries are always finite; constructors demote non-finite values to
/// invalid so that reductions never see them. Equality ignores the values
/// stored under invalid entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PixelField {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl PartialEq for PixelField {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self.valid == other.valid
            && self.iter_valid().zip(other.iter_valid()).all(|((_, a), (_, b))| a == b)
    }
}

impl PixelField {
    pub fn new(height: usize, width: usize, values: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let n = height * width;
        if values.len() != n || valid.len() != n {
            return Err(Error::Domain(format!(
                "field of {height}x{width} needs {n} values and flags, got {} and {}",
                values.len(),
                valid.len()
            )));
        }
        let mut field = PixelField {
            height,
            width,
            values,
            valid,
        };
        field.demote_non_finite();
        Ok(field)
    }

    /// Every finite value is valid.
    pub fn from_values(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Self::new(height, width, values, valid)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        let n = height * width;
        PixelField {
            height,
            width,
            values: vec![value; n],
            valid: vec![value.is_finite(); n],
        }
    }

    fn demote_non_finite(&mut self) {
        for (v, ok) in self.values.iter().zip(self.valid.iter_mut()) {
            if !v.is_finite() {
                *ok = false;
            }
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// The value at `(row, col)` when it is valid.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = self.index(row, col);
        self.valid[i].then_some(self.values[i])
    }

    #[inline]
    pub fn value_at(&self, i: usize) -> Option<f64> {
        self.valid[i].then_some(self.values[i])
    }

    /// Stores a value; non-finite values are stored invalid.
    pub fn set(&mut self, i: usize, value: f64) {
        self.values[i] = value;
        self.valid[i] = value.is_finite();
    }

    pub fn invalidate(&mut self, i: usize) {
        self.valid[i] = false;
    }

    /// Number of valid entries.
    pub fn n_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// `(index, value)` for each valid entry, in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.values
            .iter()
            .zip(&self.valid)
            .enumerate()
            .filter_map(|(i, (&v, &ok))| ok.then_some((i, v)))
    }

    /// Applies `f` to each valid value; `None` invalidates the output pixel.
    pub fn map_valid(&self, mut f: impl FnMut(f64) -> Option<f64>) -> PixelField {
        let mut values = vec![0.0; self.len()];
        let mut valid = vec![false; self.len()];
        for (i, v) in self.iter_valid() {
            if let Some(out) = f(v).filter(|o| o.is_finite()) {
                values[i] = out;
                valid[i] = true;
            }
        }
        PixelField {
            height: self.height,
            width: self.width,
            values,
            valid,
        }
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::shape(shape, self.shape()));
        }
        Ok(())
    }
}
