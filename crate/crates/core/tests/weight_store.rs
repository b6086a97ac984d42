use deepvqe::model::{count_parameters, tensor_layout, ModelConfig};
use deepvqe::weights::{WeightStore, WeightTensor, FORMAT_VERSION};

#[test]
fn empty_store_roundtrip() {
    let s = WeightStore::new(0, 0);
    let bytes = s.to_bytes();
    assert_eq!(bytes.len(), 24);
    assert_eq!(WeightStore::from_bytes(&bytes).unwrap(), s);
}

#[test]
fn small_store_roundtrip_file() {
    let cfg = ModelConfig::deepvqe_s();
    let s = WeightStore::random_init(&cfg, 11);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    s.save(&path).unwrap();
    let back = WeightStore::load(&path).unwrap();
    assert_eq!(back.metadata(), s.metadata());
    for (name, t) in s.iter() {
        let b = back.get(name).unwrap();
        assert_eq!(b.shape(), t.shape());
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(b.data()), bits(t.data()), "{name}");
    }
    assert_eq!(back.to_bytes(), s.to_bytes());
}

#[test]
fn special_values_survive_bitwise() {
    let mut s = WeightStore::new(2, 0xfeed);
    let values = vec![0.0, -0.0, f32::MIN_POSITIVE, 1e-45, f32::MAX, f32::NAN, -f32::INFINITY];
    s.insert("odd", WeightTensor::new(vec![7], values.clone()).unwrap()).unwrap();
    let back = WeightStore::from_bytes(&s.to_bytes()).unwrap();
    let got: Vec<u32> = back.get("odd").unwrap().data().iter().map(|v| v.to_bits()).collect();
    let want: Vec<u32> = values.iter().map(|v| v.to_bits()).collect();
    assert_eq!(got, want);
}

/// Hand-assembled little-endian file: one tensor "ab" of shape [2] holding
/// 1.0 and -2.5, variant 2, hash 0x0102030405060708.
fn reference_bytes() -> Vec<u8> {
    let mut v = Vec::new();
    v.extend_from_slice(b"DVQE");
    v.extend_from_slice(&[1, 0, 0, 0]);
    v.extend_from_slice(&[2, 0, 0, 0]);
    v.extend_from_slice(&[8, 7, 6, 5, 4, 3, 2, 1]);
    v.extend_from_slice(&[1, 0, 0, 0]);
    v.extend_from_slice(&[2, 0, 0, 0]);
    v.extend_from_slice(b"ab");
    v.push(1);
    v.extend_from_slice(&[2, 0, 0, 0]);
    v.extend_from_slice(&[0x00, 0x00, 0x80, 0x3f]);
    v.extend_from_slice(&[0x00, 0x00, 0x20, 0xc0]);
    // 24 + 4 + 2 + 1 + 4 + 8 = 43, padded to 48.
    v.extend_from_slice(&[0; 5]);
    v
}

#[test]
fn little_endian_reference_vector() {
    let bytes = reference_bytes();
    let s = WeightStore::from_bytes(&bytes).unwrap();
    assert_eq!(s.metadata().format_version, FORMAT_VERSION);
    assert_eq!(s.metadata().variant, 2);
    assert_eq!(s.metadata().config_hash, 0x0102_0304_0506_0708);
    let t = s.get("ab").unwrap();
    assert_eq!(t.shape(), &[2]);
    assert_eq!(t.data(), &[1.0, -2.5]);
    assert_eq!(s.to_bytes(), bytes);
}

#[test]
fn byte_swapped_header_is_rejected() {
    // The same file written big-endian: the version field reads as 2^24.
    let mut bytes = reference_bytes();
    bytes[4..8].copy_from_slice(&[0, 0, 0, 1]);
    let err = WeightStore::from_bytes(&bytes).unwrap_err().to_string();
    assert!(err.contains("version"), "{err}");
}

#[test]
fn corrupt_inputs_are_rejected() {
    let bytes = reference_bytes();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(WeightStore::from_bytes(&bad_magic).unwrap_err().to_string().contains("magic"));

    for cut in [10, 30, 40, 45] {
        let err = WeightStore::from_bytes(&bytes[..cut]).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{cut}: {err}");
        if cut >= 40 {
            assert!(err.contains("'ab'"), "{err}");
        }
    }

    let mut trailing = bytes.clone();
    trailing.extend_from_slice(&[0; 8]);
    assert!(WeightStore::from_bytes(&trailing).is_err());

    let mut dup = WeightStore::new(0, 0);
    dup.insert("x", WeightTensor::new(vec![1], vec![1.0]).unwrap()).unwrap();
    assert!(dup.insert("x", WeightTensor::new(vec![1], vec![1.0]).unwrap()).is_err());
    assert!(WeightTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
}

#[test]
fn truncated_real_file_names_the_tensor() {
    let s = WeightStore::random_init(&ModelConfig::deepvqe_s(), 1);
    let bytes = s.to_bytes();
    let err = WeightStore::from_bytes(&bytes[..bytes.len() / 2]).unwrap_err().to_string();
    assert!(err.contains("tensor '"), "{err}");
}

#[test]
fn random_init_is_deterministic_and_follows_layout() {
    let cfg = ModelConfig::deepvqe_s();
    let a = WeightStore::random_init(&cfg, 5);
    assert_eq!(a, WeightStore::random_init(&cfg, 5));
    assert_ne!(a, WeightStore::random_init(&cfg, 6));

    let layout = tensor_layout(&cfg);
    assert_eq!(a.len(), layout.len());
    let mut learnable = 0;
    for spec in &layout {
        let t = a.get(&spec.name).unwrap();
        assert_eq!(t.shape(), spec.shape.as_slice());
        assert!(t.data().iter().all(|v| v.is_finite()));
        if let deepvqe::model::TensorRole::Weight { fan_in } = spec.role {
            let bound = 1.0 / (fan_in as f32).sqrt();
            assert!(t.data().iter().all(|v| v.abs() <= bound * (1.0 + 1e-6)));
        }
        if spec.role.learnable() {
            learnable += t.data().len();
        }
    }
    assert_eq!(learnable, count_parameters(&cfg));
    assert!(a.get("mic_enc.0.bn.var").unwrap().data().iter().all(|&v| v == 1.0));
    assert!(a.get("align.q.bias").unwrap().data().iter().all(|&v| v == 0.0));
}
