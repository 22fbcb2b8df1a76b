use std::path::PathBuf;

use proptest::prelude::*;
use umseg::graph::{FeatureMap, PointCloud};
use umseg::io::*;
use umseg::mask::Mask;
use umseg::segmentation::LabelMap;
use umseg::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name)
}

fn golden(name: &str) -> Vec<u8> {
    std::fs::read(fixture(name)).unwrap()
}

#[test]
fn golden_feature_tensor() {
    let bytes = golden("features_f32.uft");
    let fmap = feature_map_from_tensor(&Tensor::decode(&bytes).unwrap()).unwrap();
    assert_eq!((fmap.height(), fmap.width(), fmap.dim()), (2, 3, 2));
    let expect: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 1.0).collect();
    assert_eq!(fmap.data(), expect.as_slice());
    assert_eq!(feature_map_to_tensor(&fmap, DType::F32).unwrap().encode(), bytes);
}

#[test]
fn golden_depth_tensor() {
    let bytes = golden("depth_f64.uft");
    let depth = read_depth(&fixture("depth_f64.uft")).unwrap();
    assert_eq!(depth.values, vec![1.0, 1.5, 2.25, 0.0]);
    assert_eq!(depth_to_tensor(&depth, DType::F64).unwrap().encode(), bytes);
}

#[test]
fn golden_label_tensor() {
    let bytes = golden("labels_u16.uft");
    let labels = labels_from_tensor(&Tensor::decode(&bytes).unwrap()).unwrap();
    assert_eq!(labels.labels(), &[0, 1, 2, 65535, 7, 300]);
    assert_eq!(labels_to_tensor(&labels).unwrap().encode(), bytes);
}

fn golden_points() -> (Vec<[f64; 3]>, Vec<f64>, Vec<u32>) {
    (
        vec![[0.0, 0.5, -1.0], [1.5, -0.75, 2.0], [-3.0, 4.0, 0.0625]],
        vec![0.25, -2.0, 1.0, 0.125, -0.5, 8.0],
        vec![1, 0, 65535],
    )
}

#[test]
fn golden_binary_ply() {
    let bytes = golden("cloud_binary.ply");
    let cloud = decode_ply(&bytes).unwrap();
    let (pos, feat, labels) = golden_points();
    assert_eq!(cloud.positions(), pos.as_slice());
    assert_eq!(cloud.features(), feat.as_slice());
    assert_eq!(cloud.labels().unwrap(), labels.as_slice());
    assert_eq!(encode_ply(&cloud, PlyFormat::BinaryLittleEndian).unwrap(), bytes);
}

#[test]
fn golden_ascii_ply_keeps_labels() {
    let cloud = read_ply(&fixture("cloud_ascii.ply")).unwrap();
    let (pos, feat, labels) = golden_points();
    assert_eq!(cloud.positions(), pos.as_slice());
    assert_eq!(cloud.features(), feat.as_slice());
    assert_eq!(cloud.labels().unwrap(), labels.as_slice());
}

#[test]
fn golden_masks_report_bad_entries() {
    let loaded = read_masks(&fixture("masks.json")).unwrap();
    assert_eq!(loaded.set.masks.len(), 3);
    assert_eq!(loaded.set.masks[0].pixels(), vec![3, 4]);
    assert_eq!(loaded.set.masks[1].area(), 16);
    assert_eq!(loaded.rejected.len(), 1);
    assert_eq!(loaded.rejected[0].0, 2);
    let file = read_mask_file(&fixture("masks.json")).unwrap();
    assert!(file.decode_strict().is_err());
}

#[test]
fn golden_camera() {
    let cam = read_camera(&fixture("camera.json")).unwrap();
    assert_eq!((cam.width, cam.height), (64, 48));
    assert_eq!(cam.cam_to_world[0], [0.0, 0.0, 1.0, 2.0]);
    assert_eq!(cam.cam_to_world[2], [-1.0, 0.0, 0.0, -1.0]);
}

#[test]
fn golden_label_png() {
    let labels = read_label_png(&fixture("labels16.png")).unwrap();
    assert_eq!((labels.height(), labels.width()), (2, 3));
    assert_eq!(labels.labels(), &[0, 1, 2, 65535, 7, 300]);
    let ours = decode_label_png(&encode_label_png(&labels).unwrap()).unwrap();
    assert_eq!(ours, labels);
}

#[test]
fn tensor_errors() {
    let bytes = golden("features_f32.uft");
    match Tensor::decode(&bytes[..bytes.len() - 3]) {
        Err(Error::Truncated { expected, actual }) => {
            assert_eq!(expected, bytes.len());
            assert_eq!(actual, bytes.len() - 3);
        }
        other => panic!("expected truncation error, got {other:?}"),
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(Tensor::decode(&bad), Err(Error::Format(_))));
    let labels = Tensor::decode(&golden("labels_u16.uft")).unwrap();
    assert!(matches!(depth_from_tensor(&labels), Err(Error::DType { .. })));
    let feats = Tensor::decode(&bytes).unwrap();
    assert!(depth_from_tensor(&feats).is_err());
    assert!(matches!(labels_from_tensor(&feats), Err(Error::InvalidInput(_))));
    let depth = Tensor::decode(&golden("depth_f64.uft")).unwrap();
    assert!(matches!(labels_from_tensor(&depth), Err(Error::DType { .. })));
    assert!(feature_map_from_tensor(&depth).is_err());
}

#[test]
fn ply_errors() {
    let no_features = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n";
    let err = decode_ply(no_features).unwrap_err().to_string();
    assert!(err.contains("feature"), "{err}");
    let no_z = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float f0\nend_header\n0 0 0\n";
    assert!(decode_ply(no_z).unwrap_err().to_string().contains("\"z\""));
    let no_end = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n";
    assert!(decode_ply(no_end).is_err());
    let junk = b"ply\nformat ascii 1.0\nwhat is this\nend_header\n";
    assert!(decode_ply(junk).is_err());
    assert!(decode_ply(b"not a ply\n").is_err());
    let short = &golden("cloud_binary.ply")[..200];
    assert!(matches!(decode_ply(short), Err(Error::Truncated { .. })));
}

#[test]
fn label_overflow_is_explicit() {
    let labels = LabelMap::new(1, 2, vec![1, 70000]).unwrap();
    assert!(matches!(encode_label_png(&labels), Err(Error::LabelOverflow(70000))));
    assert!(matches!(labels_to_tensor(&labels), Err(Error::LabelOverflow(70000))));
    let cloud = PointCloud::new(vec![[0.0; 3]], 1, vec![0.0]).unwrap().with_labels(vec![70000]).unwrap();
    assert!(matches!(encode_ply(&cloud, PlyFormat::Ascii), Err(Error::LabelOverflow(70000))));
}

#[test]
fn camera_validation() {
    let mut file: CameraFile = serde_json::from_slice(&golden("camera.json")).unwrap();
    file.transform[0] = 0.5;
    assert!(file.to_camera().is_err());
    let mut file: CameraFile = serde_json::from_slice(&golden("camera.json")).unwrap();
    file.convention = "+z forward".into();
    assert!(file.to_camera().is_err());
}

#[test]
fn missing_file_is_io_error() {
    assert!(matches!(read_tensor(&fixture("nope.uft")), Err(Error::Io { .. })));
}

#[test]
fn render_colors_are_stable() {
    assert_eq!(label_color(0), [0, 0, 0]);
    assert_eq!(label_color(5), label_color(5));
    assert_ne!(label_color(1), label_color(2));
    let labels = LabelMap::new(2, 2, vec![0, 1, 2, 1]).unwrap();
    let (w, h, rgb) = decode_rgb_png(&encode_color_png(&labels).unwrap()).unwrap();
    assert_eq!((w, h), (2, 2));
    assert_eq!(&rgb[3..6], &label_color(1));
    assert_eq!(&rgb[9..12], &label_color(1));
}

#[test]
fn dendrogram_roundtrip() {
    use umseg::graph::{grid_graph, DistanceMetric};
    use umseg::hierarchy::BinaryPartitionTree;
    let fmap = FeatureMap::new(2, 3, 1, vec![0.0, 0.1, 0.5, 0.2, 0.9, 0.4]).unwrap();
    let bpt = BinaryPartitionTree::build(&grid_graph(&fmap, DistanceMetric::Euclidean).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    write_dendrogram_json(&path, &bpt).unwrap();
    let back = read_dendrogram_json(&path).unwrap();
    assert_eq!(back, DendrogramFile::from_tree(&bpt));
    assert_eq!(back.nodes.len(), 11);
}

fn f32_exact() -> impl Strategy<Value = f64> {
    (-1.0e4f32..1.0e4f32).prop_map(|x| x as f64)
}

proptest! {
    #[test]
    fn tensor_roundtrip(shape in prop::collection::vec(1u64..5, 0..4), seed in any::<u64>(), code in 0u8..3) {
        let n: usize = shape.iter().product::<u64>() as usize;
        let data = match code {
            0 => TensorData::F32((0..n).map(|i| f32::from_bits((seed as u32).wrapping_add((i as u32).wrapping_mul(2654435761)) & 0x7f7f_ffff)).collect()),
            1 => TensorData::F64((0..n).map(|i| (seed.wrapping_mul(i as u64 + 1)) as f64 * 1e-7).collect()),
            _ => TensorData::U16((0..n).map(|i| (seed >> (i % 48)) as u16).collect()),
        };
        let t = Tensor::new(shape, data).unwrap();
        let bytes = t.encode();
        let back = Tensor::decode(&bytes).unwrap();
        prop_assert_eq!(back.encode(), bytes);
        prop_assert_eq!(back, t);
    }

    #[test]
    fn ply_roundtrip(pts in prop::collection::vec((f32_exact(), f32_exact(), f32_exact(), f32_exact(), 0u32..65536), 1..20), binary in any::<bool>()) {
        let positions: Vec<[f64; 3]> = pts.iter().map(|p| [p.0, p.1, p.2]).collect();
        let features: Vec<f64> = pts.iter().map(|p| p.3).collect();
        let labels: Vec<u32> = pts.iter().map(|p| p.4).collect();
        let cloud = PointCloud::new(positions, 1, features).unwrap().with_labels(labels).unwrap();
        let format = if binary { PlyFormat::BinaryLittleEndian } else { PlyFormat::Ascii };
        let bytes = encode_ply(&cloud, format).unwrap();
        let back = decode_ply(&bytes).unwrap();
        prop_assert_eq!(back.positions(), cloud.positions());
        prop_assert_eq!(back.features(), cloud.features());
        prop_assert_eq!(back.labels(), cloud.labels());
        prop_assert_eq!(encode_ply(&back, format).unwrap(), bytes);
    }

    #[test]
    fn mask_file_roundtrip(h in 1usize..8, w in 1usize..8, bits in prop::collection::vec(any::<bool>(), 64), k in 1usize..4) {
        let masks: Vec<Mask> = (0..k)
            .map(|j| Mask::from_fn(h, w, |r, c| bits[(r * w + c + j * 7) % 64]))
            .collect();
        let file = MaskFile::from_masks(ViewId::Int(3), h, w, &masks);
        let json = serde_json::to_vec(&file).unwrap();
        let back: MaskFile = serde_json::from_slice(&json).unwrap();
        prop_assert_eq!(back.decode_strict().unwrap(), masks);
        prop_assert_eq!(serde_json::to_vec(&back).unwrap(), json);
    }

    #[test]
    fn label_png_roundtrip(h in 1usize..10, w in 1usize..10, seed in any::<u64>()) {
        let labels: Vec<u32> = (0..h * w).map(|i| ((seed >> (i % 40)) & 0xffff) as u32).collect();
        let lm = LabelMap::new(h, w, labels).unwrap();
        prop_assert_eq!(decode_label_png(&encode_label_png(&lm).unwrap()).unwrap(), lm);
    }

    #[test]
    fn camera_roundtrip(angle in -3.0f64..3.0, tx in -5.0f64..5.0, f in 1.0f64..500.0) {
        let (s, c) = angle.sin_cos();
        let cam = umseg::camera::CameraModel::new(f, f * 1.1, 10.5, 7.5, 22, 16, [
            [c, 0.0, s, tx],
            [0.0, 1.0, 0.0, 0.0],
            [-s, 0.0, c, 1.0],
            [0.0, 0.0, 0.0, 1.0],
        ]).unwrap();
        let json = serde_json::to_vec(&CameraFile::from_camera(&cam)).unwrap();
        let back: CameraFile = serde_json::from_slice(&json).unwrap();
        prop_assert_eq!(back.to_camera().unwrap(), cam);
    }
}
