//! Contracts shared with external feature exporters: the feature-file byte
//! layout, the manifest CSV and the 224x224 network input resize.

use std::path::Path;

use ilk_core::evaluation::{parse_manifest, ProtocolData};
use ilk_core::features::{decode_feature_file, resize_for_cnn, CNN_INPUT_SIZE};
use ilk_core::{Error, LinearImage};

/// Assembles a feature file byte by byte, as a writer in another language
/// following the documented layout would.
fn handwritten(tag: &str, dim: usize, records: &[(&str, f32)]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"ILKFEAT1");
    b.extend_from_slice(&1u32.to_le_bytes());
    b.extend_from_slice(&(records.len() as u32).to_le_bytes());
    b.extend_from_slice(&(dim as u32).to_le_bytes());
    b.extend_from_slice(&(tag.len() as u16).to_le_bytes());
    b.extend_from_slice(tag.as_bytes());
    for (id, fill) in records {
        b.extend_from_slice(&(id.len() as u16).to_le_bytes());
        b.extend_from_slice(id.as_bytes());
        for j in 0..dim {
            b.extend_from_slice(&(fill * (j % 7) as f32).to_le_bytes());
        }
    }
    b
}

#[test]
fn exporter_layer_widths_load() {
    for (tag, dim) in [("fc6", 4096), ("fc7", 4096), ("fc8", 1000)] {
        let file = decode_feature_file(&handwritten(tag, dim, &[("img_a", 0.5), ("img_b", 1.25)])).unwrap();
        assert_eq!(file.source_tag, tag);
        assert_eq!(file.dim, dim);
        assert_eq!(file.records.len(), 2);
        let b = file.get("img_b").unwrap();
        assert_eq!(b.values()[3], 3.75);
        // Rectified activations stay non-negative through the loader.
        assert!(file.records.iter().all(|(_, f)| f.values().iter().all(|&v| v >= 0.0)));
    }
}

#[test]
fn truncated_export_reports_offset() {
    let bytes = handwritten("fc6", 16, &[("a", 1.0), ("b", 1.0)]);
    match decode_feature_file(&bytes[..bytes.len() - 3]) {
        Err(Error::Format { offset, message }) => {
            // Header (8 + 4 + 4 + 4 + 2 + 3) + first record (2 + 1 + 64) + id (2 + 1).
            assert_eq!(offset, 25 + 67 + 3, "{message}");
            assert!(message.contains("\"b\""), "{message}");
        }
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn exported_features_join_manifest_by_id() {
    let manifest = parse_manifest(
        "image_id,filename,r,g,b\nimg_b,b.png,1,1,1\nimg_a,a.png,0.5,0.4,0.2\n",
        "/nonexistent".into(),
        Path::new("m.csv"),
    )
    .unwrap();
    let file = decode_feature_file(&handwritten("fc6", 8, &[("img_a", 1.0), ("img_b", 2.0), ("extra", 3.0)])).unwrap();
    let data = ProtocolData::from_manifest(&manifest).with_feature_file(&file).unwrap();
    let features = data.features.unwrap();
    // Aligned with manifest order, not file order.
    assert_eq!(features[0].values()[1], 2.0);
    assert_eq!(features[1].values()[1], 1.0);
}

#[test]
fn network_input_is_stretched_to_224() {
    let img = LinearImage::from_fn(640, 360, |x, y| [x as f64, y as f64, 1.0]).unwrap();
    let r = resize_for_cnn(&img).unwrap();
    assert_eq!((r.width(), r.height()), (CNN_INPUT_SIZE, CNN_INPUT_SIZE));
    // Stretching (not cropping) keeps the full extent of both axes.
    assert!(r.pixel(0, 0)[0] < 2.0 && r.pixel(223, 0)[0] > 637.0);
    assert!(r.pixel(0, 0)[1] < 1.0 && r.pixel(0, 223)[1] > 358.0);
}
