use proptest::prelude::*;
use spal_core::model::ModelParams;
use spal_core::raster::{
    load_label_map, read_prob_map, read_segmentation, save_label_map, write_prob_map, write_segmentation,
    LabelMap, ProbMap, Segmentation,
};
use spal_core::sieve::{SievedDataset, SievedRecord};
use spal_core::Error;

fn dims() -> impl Strategy<Value = (u32, u32)> {
    (1u32..12, 1u32..12)
}

fn segmentation() -> impl Strategy<Value = Segmentation> {
    dims().prop_flat_map(|(w, h)| {
        prop::collection::vec(0u32..6, (w * h) as usize)
            .prop_map(move |ids| Segmentation::from_sparse(w, h, &ids).unwrap())
    })
}

fn prob_map() -> impl Strategy<Value = ProbMap> {
    (dims(), 2u32..5).prop_flat_map(|((w, h), c)| {
        prop::collection::vec(prop::collection::vec(0.01f32..1.0, c as usize), (w * h) as usize).prop_map(
            move |rows| {
                let rows: Vec<Vec<f32>> = rows
                    .into_iter()
                    .map(|r| {
                        let s: f32 = r.iter().sum();
                        r.iter().map(|v| v / s).collect()
                    })
                    .collect();
                ProbMap::from_pixels(w, h, c, &rows).unwrap()
            },
        )
    })
}

proptest! {
    #[test]
    fn segmentation_roundtrip(seg in segmentation()) {
        let bytes = write_segmentation(&seg);
        prop_assert_eq!(bytes.len(), 16 + seg.len() * 4);
        let back = read_segmentation(&bytes, Some((seg.width(), seg.height()))).unwrap();
        prop_assert_eq!(back, seg);
    }

    #[test]
    fn prob_map_roundtrip(map in prob_map()) {
        let back = read_prob_map(&write_prob_map(&map)).unwrap();
        prop_assert_eq!(back, map);
    }

    #[test]
    fn sieved_roundtrip(recs in prop::collection::vec((0u32..4, 0u32..50, 0u16..5), 0..60)) {
        let mut records: Vec<SievedRecord> = recs
            .into_iter()
            .map(|(image_id, pixel, class_id)| SievedRecord { image_id, pixel, class_id })
            .collect();
        // one label per pixel
        records.sort();
        records.dedup_by(|a, b| a.image_id == b.image_id && a.pixel == b.pixel);
        let ds = SievedDataset::from_records(records).unwrap();
        prop_assert_eq!(SievedDataset::from_bytes(&ds.to_bytes()).unwrap(), ds);
    }

    #[test]
    fn model_roundtrip(dim in 1u32..6, c in 2u32..5, seed in any::<u64>()) {
        let mut m = ModelParams::zeros(dim, c);
        for (i, w) in m.weights.iter_mut().enumerate() {
            *w = ((seed.wrapping_mul(i as u64 + 1) % 2001) as f32 - 1000.0) / 37.0;
        }
        let bytes = m.to_bytes();
        prop_assert_eq!(bytes.len(), 12 + m.weights.len() * 4);
        prop_assert_eq!(ModelParams::from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn label_map_png_roundtrip((w, h) in dims(), wide in any::<bool>(), seed in any::<u64>()) {
        let classes: u16 = if wide { 300 } else { 19 };
        let data: Vec<u16> = (0..w * h)
            .map(|i| {
                let v = (seed.rotate_left(i % 64) ^ i as u64) % (classes as u64 + 1);
                if v == classes as u64 { 255 } else { v as u16 }
            })
            .collect();
        let ignore = if wide { 65535 } else { 255 };
        let data: Vec<u16> = data.into_iter().map(|v| if v == 255 && wide { ignore } else { v }).collect();
        let map = LabelMap::new(w, h, data, classes, ignore).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.png");
        save_label_map(&map, &path).unwrap();
        prop_assert_eq!(load_label_map(&path, classes, ignore).unwrap(), map);
    }
}

#[test]
fn prob_map_file_size() {
    let map = ProbMap::uniform(4, 4, 19);
    assert_eq!(write_prob_map(&map).len(), 16 + 16 * 19 * 4);
}

#[test]
fn rejects_malformed_inputs() {
    let seg = Segmentation::new(2, 2, vec![0, 0, 1, 1]).unwrap();
    let bytes = write_segmentation(&seg);
    assert!(read_segmentation(&bytes[..bytes.len() - 1], None).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_segmentation(&bad, None), Err(Error::BadMagic { .. })));
    assert!(matches!(
        read_segmentation(&bytes, Some((4, 1))),
        Err(Error::DimensionMismatch { .. })
    ));

    let mut probs = write_prob_map(&ProbMap::uniform(2, 1, 2));
    // first pixel of class 0 becomes 0.9 so the pixel sums to 1.4
    probs[16..20].copy_from_slice(&0.9f32.to_le_bytes());
    assert!(matches!(read_prob_map(&probs), Err(Error::NotNormalized { .. })));
    probs[16..20].copy_from_slice(&(-0.5f32).to_le_bytes());
    assert!(matches!(read_prob_map(&probs), Err(Error::ProbabilityOutOfRange { .. })));

    assert!(LabelMap::new(2, 1, vec![0, 7], 4, 255).is_err());
    assert!(LabelMap::new(2, 1, vec![0], 4, 255).is_err());
    assert!(SievedDataset::from_bytes(b"SVD1\x01\0\0\0").is_err());
    assert!(ModelParams::from_bytes(b"MLP1\x02\0\0\0\x02\0\0\0").is_err());
}
