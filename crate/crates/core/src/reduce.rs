//! Order-fixed floating point reductions.
//!
//! Every sum the crate reports goes through here. Values are accumulated with
//! Neumaier compensation in a fixed order, and the parallel variant splits the
//! input into chunks of a fixed size whose partial sums are combined in chunk
//! order. The result therefore depends only on the chunk size, never on the
//! number of worker threads.

use rayon::prelude::*;

/// Default chunk length for [`par_sum`].
pub const DEFAULT_CHUNK: usize = 4096;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Accumulator {
    sum: f64,
    comp: f64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another accumulator in, keeping both compensation terms.
    pub fn merge(&mut self, other: &Accumulator) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for Accumulator {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

impl FromIterator<f64> for Accumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Accumulator::new();
        acc.extend(iter);
        acc
    }
}

/// Sequential compensated sum. This is the reference semantics.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<Accumulator>().value()
}

/// Chunked parallel sum, bit-identical for a fixed `chunk` on any pool size.
pub fn par_sum(values: &[f64], chunk: usize) -> f64 {
    let chunk = chunk.max(1);
    let partials: Vec<Accumulator> = values
        .par_chunks(chunk)
        .map(|c| c.iter().copied().collect())
        .collect();
    let mut total = Accumulator::new();
    for p in &partials {
        total.merge(p);
    }
    total.value()
}
