//! Pinhole stereo geometry: disparity/depth conversion and how a fixed depth
//! error maps back onto disparity error at different distances.
//!
//! For a rectified pair with focal length `f` (pixels) and baseline `b`
//! (meters), depth and disparity are related by `z = f * b / d`. Because the
//! relation is a hyperbola, one meter of depth error corresponds to
//! `f * b * dz / (z * (z + dz))` pixels of disparity error, which shrinks
//! quadratically with distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PixelField;

/// Default lower bound on disparity before a pixel is treated as infinitely far.
pub const DEFAULT_MIN_DISP: f64 = 1e-3;

/// Focal length and baseline of a rectified stereo pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigRepr", into = "RigRepr")]
pub struct CameraRig {
    focal_px: f64,
    baseline_m: f64,
}

#[derive(Serialize, Deserialize)]
struct RigRepr {
    focal_px: f64,
    baseline_m: f64,
}

impl TryFrom<RigRepr> for CameraRig {
    type Error = Error;

    fn try_from(r: RigRepr) -> Result<Self> {
        CameraRig::new(r.focal_px, r.baseline_m)
    }
}

impl From<CameraRig> for RigRepr {
    fn from(r: CameraRig) -> Self {
        RigRepr {
            focal_px: r.focal_px,
            baseline_m: r.baseline_m,
        }
    }
}

impl CameraRig {
    pub fn new(focal_px: f64, baseline_m: f64) -> Result<Self> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(focal_px) || !ok(baseline_m) || !ok(focal_px * baseline_m) {
            return Err(Error::Domain(format!(
                "camera rig needs positive finite focal length and baseline, got f={focal_px}, b={baseline_m}"
            )));
        }
        Ok(CameraRig {
            focal_px,
            baseline_m,
        })
    }

    /// The KITTI rig: f = 721 px, b = 0.54 m.
    pub fn kitti() -> Self {
        CameraRig {
            focal_px: 721.0,
            baseline_m: 0.54,
        }
    }

    pub fn focal_px(&self) -> f64 {
        self.focal_px
    }

    pub fn baseline_m(&self) -> f64 {
        self.baseline_m
    }

    /// The conversion constant `f * b` (pixel-meters).
    #[inline]
    pub fn fb(&self) -> f64 {
        self.focal_px * self.baseline_m
    }

    #[inline]
    pub fn depth_of(&self, disp: f64) -> f64 {
        self.fb() / disp
    }

    #[inline]
    pub fn disparity_of(&self, depth: f64) -> f64 {
        self.fb() / depth
    }
}

impl Default for CameraRig {
    fn default() -> Self {
        CameraRig::kitti()
    }
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain(format!("{name} must be positive, got {x}")));
    }
    Ok(())
}

/// Converts disparity (pixels) to depth (meters).
///
/// Pixels with disparity below `min_disp` become invalid rather than
/// producing unbounded depths. Invalid input pixels stay invalid.
pub fn disp_to_depth(rig: &CameraRig, disp: &PixelField, min_disp: f64) -> Result<PixelField> {
    check_positive("min_disp", min_disp)?;
    Ok(disp.map_valid(|d| (d >= min_disp).then(|| rig.depth_of(d))))
}

/// Converts depth (meters) to disparity (pixels); depths below `min_depth`
/// become invalid.
pub fn depth_to_disp(rig: &CameraRig, depth: &PixelField, min_depth: f64) -> Result<PixelField> {
    check_positive("min_depth", min_depth)?;
    Ok(depth.map_valid(|z| (z >= min_depth).then(|| rig.disparity_of(z))))
}

/// Disparity error (pixels) produced by a depth error `dz` at depth `z`:
/// `|fb/z - fb/(z + dz)|`.
pub fn disp_error_for_depth_error(rig: &CameraRig, z: f64, dz: f64) -> Result<f64> {
    if !(z > 0.0 && z + dz > 0.0) || !z.is_finite() || !dz.is_finite() {
        return Err(Error::Domain(format!(
            "depth and perturbed depth must be positive, got z={z}, z+dz={}",
            z + dz
        )));
    }
    Ok((rig.fb() / z - rig.fb() / (z + dz)).abs())
}

/// Samples [`disp_error_for_depth_error`] at `n_points` evenly spaced depths
/// in `[z_min, z_max]`, returning `(z, disparity_error)` pairs.
pub fn sensitivity_curve(
    rig: &CameraRig,
    dz: f64,
    z_min: f64,
    z_max: f64,
    n_points: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(z_min > 0.0 && z_min < z_max && z_max.is_finite()) {
        return Err(Error::Domain(format!(
            "need 0 < z_min < z_max, got [{z_min}, {z_max}]"
        )));
    }
    if n_points < 2 {
        return Err(Error::Domain(format!("need at least 2 points, got {n_points}")));
    }
    let step = (z_max - z_min) / (n_points - 1) as f64;
    (0..n_points)
        .map(|k| {
            let z = if k + 1 == n_points {
                z_max
            } else {
                z_min + step * k as f64
            };
            disp_error_for_depth_error(rig, z, dz).map(|e| (z, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fb_rig(fb: f64) -> CameraRig {
        CameraRig::new(fb, 1.0).unwrap()
    }

    #[test]
    fn kitti_anchor_points() {
        let rig = CameraRig::kitti();
        let d = PixelField::from_values(1, 2, vec![77.868, 15.5736]).unwrap();
        let z = disp_to_depth(&rig, &d, DEFAULT_MIN_DISP).unwrap();
        assert!((z.values()[0] - 5.0).abs() < 1e-9);
        assert!((z.values()[1] - 25.0).abs() < 1e-9);

        let unit = disp_to_depth(&fb_rig(389.34), &PixelField::filled(1, 1, 389.34), 1e-3).unwrap();
        assert_eq!(unit.values()[0], 1.0);
    }

    #[test]
    fn inverse_direction() {
        let rig = fb_rig(389.34);
        let d = depth_to_disp(&rig, &PixelField::from_values(1, 2, vec![5.0, 389.34]).unwrap(), 1e-3)
            .unwrap();
        assert!((d.values()[0] - 77.868).abs() < 1e-9);
        assert_eq!(d.values()[1], 1.0);
    }

    #[test]
    fn small_disparities_are_invalidated() {
        let d = PixelField::from_values(1, 3, vec![0.0, 5e-4, 2.0]).unwrap();
        let z = disp_to_depth(&CameraRig::kitti(), &d, 1e-3).unwrap();
        assert_eq!(z.valid(), &[false, false, true]);
    }

    #[test]
    fn sensitivity_claims() {
        let rig = CameraRig::kitti();
        let near = disp_error_for_depth_error(&rig, 5.0, 1.0).unwrap();
        let far = disp_error_for_depth_error(&rig, 25.0, 1.0).unwrap();
        assert!((near - 12.978).abs() < 1e-3, "{near}");
        assert!((far - 0.599).abs() < 1e-3, "{far}");
        assert_eq!(disp_error_for_depth_error(&rig, 10.0, 0.0).unwrap(), 0.0);
        assert_eq!(disp_error_for_depth_error(&fb_rig(1.0), 1.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn sensitivity_domain_errors() {
        let rig = CameraRig::kitti();
        assert!(disp_error_for_depth_error(&rig, 0.0, 1.0).is_err());
        assert!(disp_error_for_depth_error(&rig, 2.0, -2.0).is_err());
        assert!(sensitivity_curve(&rig, 1.0, 0.0, 10.0, 5).is_err());
        assert!(sensitivity_curve(&rig, 1.0, 10.0, 5.0, 5).is_err());
        assert!(sensitivity_curve(&rig, 1.0, 1.0, 5.0, 1).is_err());
    }

    #[test]
    fn two_point_curve() {
        let c = sensitivity_curve(&CameraRig::kitti(), 1.0, 5.0, 25.0, 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].0, c[1].0), (5.0, 25.0));
        assert!((c[0].1 - 12.978).abs() < 1e-3);
        assert!((c[1].1 - 0.599).abs() < 1e-3);
    }

    #[test]
    fn rig_rejects_non_positive() {
        assert!(CameraRig::new(0.0, 0.5).is_err());
        assert!(CameraRig::new(700.0, -0.5).is_err());
        assert!(CameraRig::new(f64::NAN, 0.5).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(d in prop::collection::vec(1e-3f64..500.0, 1..64), fb in 1.0f64..2000.0) {
            let n = d.len();
            let rig = fb_rig(fb);
            let field = PixelField::from_values(1, n, d.clone()).unwrap();
            let z = disp_to_depth(&rig, &field, 1e-3).unwrap();
            let back = depth_to_disp(&rig, &z, 1e-12).unwrap();
            for (a, b) in d.iter().zip(back.values()) {
                prop_assert!(((a - b) / a).abs() <= 1e-12);
            }
        }

        #[test]
        fn curve_strictly_decreasing(z0 in 0.5f64..40.0, span in 1.0f64..100.0, n in 2usize..50, dz in 0.01f64..5.0) {
            let c = sensitivity_curve(&CameraRig::kitti(), dz, z0, z0 + span, n).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[0].1 > w[1].1);
            }
        }

        #[test]
        fn doubling_fb_doubles_sensitivity(z in 0.5f64..100.0, dz in 0.0f64..5.0, fb in 1.0f64..1000.0) {
            let a = disp_error_for_depth_error(&fb_rig(fb), z, dz).unwrap();
            let b = disp_error_for_depth_error(&fb_rig(2.0 * fb), z, dz).unwrap();
            prop_assert_eq!(b, 2.0 * a);
        }

        #[test]
        fn invalid_pixels_stay_invalid(vals in prop::collection::vec((0.0f64..300.0, any::<bool>()), 1..40)) {
            let n = vals.len();
            let field = PixelField::new(1, n, vals.iter().map(|v| v.0).collect(), vals.iter().map(|v| v.1).collect()).unwrap();
            let z = disp_to_depth(&CameraRig::kitti(), &field, 1e-3).unwrap();
            for i in 0..n {
                if !field.valid()[i] {
                    prop_assert!(!z.valid()[i]);
                }
            }
        }
    }
}
