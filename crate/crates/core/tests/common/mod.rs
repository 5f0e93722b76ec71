#![allow(dead_code)]

use depthloss::{ObjectMask, PixelField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Ground truth in `(0.5, 120)` with ~10% holes, a noisy prediction with
/// ~5% holes, and a random mask.
pub fn random_case(r: &mut ChaCha8Rng, h: usize, w: usize) -> (PixelField, PixelField, ObjectMask) {
    let n = h * w;
    let mut gt_v = Vec::with_capacity(n);
    let mut gt_ok = Vec::with_capacity(n);
    let mut pred_v = Vec::with_capacity(n);
    let mut pred_ok = Vec::with_capacity(n);
    let mut fg = Vec::with_capacity(n);
    let fg_rate = r.random_range(0.05..0.6);
    for _ in 0..n {
        let d: f64 = r.random_range(0.5..120.0);
        gt_v.push(d);
        gt_ok.push(r.random_bool(0.9));
        let spread = if r.random_bool(0.5) { 0.8 } else { 6.0 };
        let p = (d + r.random_range(-spread..spread)).max(0.05);
        pred_v.push(p);
        pred_ok.push(r.random_bool(0.95));
        fg.push(r.random_bool(fg_rate));
    }
    (
        PixelField::new(h, w, pred_v, pred_ok).unwrap(),
        PixelField::new(h, w, gt_v, gt_ok).unwrap(),
        ObjectMask::new(h, w, fg).unwrap(),
    )
}

pub fn random_size(r: &mut ChaCha8Rng, max_h: usize, max_w: usize) -> (usize, usize) {
    (r.random_range(1..=max_h), r.random_range(1..=max_w))
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
