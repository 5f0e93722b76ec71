use depthloss::dataio::{
    decode_disparity, decode_pfm, encode_disparity, encode_pfm, load_manifest, read_disparity,
    read_mask_png, write_disparity, write_mask_png, DISPARITY_SCALE,
};
use depthloss::{ObjectMask, PixelField};
use proptest::prelude::*;
use std::path::Path;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stored_integers_survive_decode_encode(stored in prop::collection::vec(any::<u16>(), 1..200)) {
        let n = stored.len();
        let field = decode_disparity(1, n, &stored).unwrap();
        prop_assert_eq!(encode_disparity(&field).unwrap(), stored);
    }

    #[test]
    fn disparities_survive_within_half_a_step(values in prop::collection::vec(1.0f64 / 256.0..255.99, 1..200)) {
        let n = values.len();
        let field = PixelField::from_values(1, n, values.clone()).unwrap();
        let back = decode_disparity(1, n, &encode_disparity(&field).unwrap()).unwrap();
        for (a, b) in values.iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 0.5 / DISPARITY_SCALE);
        }
    }

    #[test]
    fn pfm_round_trip_is_exact(values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..120), w in 1usize..12) {
        let h = values.len() / w;
        prop_assume!(h > 0);
        let vals: Vec<f64> = values[..h * w].iter().map(|&v| v as f64).collect();
        let field = PixelField::from_values(h, w, vals).unwrap();
        let back = decode_pfm(&encode_pfm(&field), Path::new("mem.pfm")).unwrap();
        prop_assert_eq!(back, field);
    }
}

#[test]
fn files_round_trip_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let mut field = PixelField::from_values(3, 4, (0..12).map(|k| 1.5 + k as f64 * 0.25).collect()).unwrap();
    field.invalidate(5);
    for name in ["d.png", "d.pfm"] {
        let path = dir.path().join(name);
        write_disparity(&path, &field).unwrap();
        assert_eq!(read_disparity(&path).unwrap(), field, "{name}");
    }
}

#[test]
fn masks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mask = ObjectMask::new(2, 3, vec![true, false, false, true, true, false]).unwrap();
    let path = dir.path().join("m.png");
    write_mask_png(&path, &mask).unwrap();
    assert_eq!(read_mask_png(&path).unwrap(), mask);
}

#[test]
fn manifest_reports_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    std::fs::write(
        &path,
        r#"{"schema_version": 1, "samples": [
            {"id": "a", "left": "l.png", "right": "r.png", "gt_disparity": "gt.pfm"},
            {"id": "a", "left": "l.png", "right": "r.png", "gt_disparity": "gt.pfm"}
        ]}"#,
    )
    .unwrap();
    let err = load_manifest(&path).unwrap_err().to_string();
    assert!(err.contains("duplicate"), "{err}");
    assert!(err.contains("l.png"), "{err}");
    assert!(err.contains("rig"), "{err}");
}
