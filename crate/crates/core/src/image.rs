use crate::error::{Error, Result};

/// Single-channel intensity image, row-major, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Domain(format!(
                "image of {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(GrayImage {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        GrayImage {
            height,
            width,
            data: vec![0.0; height * width],
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    /// Linear interpolation along a row at fractional column `x`; `None`
    /// outside `[0, width - 1]`.
    pub fn sample_row(&self, row: usize, x: f64) -> Option<f64> {
        if !(x >= 0.0 && x <= (self.width - 1) as f64) {
            return None;
        }
        let x0 = x.floor() as usize;
        let t = x - x0 as f64;
        let a = self.at(row, x0);
        if t == 0.0 {
            return Some(a);
        }
        let b = self.at(row, x0 + 1);
        Some(a + t * (b - a))
    }

    /// Population standard deviation of the intensities.
    pub fn std_dev(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        (self.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_sampling() {
        let img = GrayImage::new(1, 3, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(img.sample_row(0, 1.0), Some(1.0));
        assert_eq!(img.sample_row(0, 1.5), Some(2.0));
        assert_eq!(img.sample_row(0, 2.0), Some(3.0));
        assert_eq!(img.sample_row(0, -0.1), None);
        assert_eq!(img.sample_row(0, 2.1), None);
    }
}
