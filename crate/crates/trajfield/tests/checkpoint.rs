mod common;

use std::path::Path;

use common::{tiny_config, tiny_dataset};
use trajfield::checkpoint::Checkpoint;
use trajfield::train::{mask_indices, Trainer};
use trajfield::Error;

fn trained() -> Checkpoint {
    let ds = tiny_dataset("moving-sphere", 4);
    let mut t = Trainer::new(tiny_config(), &ds).unwrap();
    let masks = mask_indices(&ds);
    for _ in 0..2 {
        t.step(&ds, &masks).unwrap();
    }
    t.checkpoint()
}

fn split(bytes: &[u8]) -> (serde_json::Value, &[u8]) {
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    (
        serde_json::from_slice(&bytes[16..16 + hlen]).unwrap(),
        &bytes[16 + hlen..],
    )
}

fn join(header: &serde_json::Value, data: &[u8]) -> Vec<u8> {
    let json = serde_json::to_vec(header).unwrap();
    let mut out = b"TRAJCKPT".to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(data);
    out
}

#[test]
fn save_load_save_is_byte_identical() {
    let ck = trained();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.ckpt");
    ck.save(&a).unwrap();
    let back = Checkpoint::load(&a).unwrap();
    let b = dir.path().join("b.ckpt");
    back.save(&b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(back.params, ck.params);
    assert_eq!(back.global_step, 2);
}

#[test]
fn truncated_files_are_rejected() {
    let bytes = trained().to_bytes();
    let p = Path::new("ck");
    for cut in [4, 20, bytes.len() - 8, bytes.len() - 3] {
        let err = Checkpoint::from_bytes(p, &bytes[..cut])
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("truncated") || err.contains("not a checkpoint"),
            "{cut}: {err}"
        );
    }
}

#[test]
fn other_versions_are_rejected() {
    let bytes = trained().to_bytes();
    let (mut header, data) = split(&bytes);
    header["version"] = 99.into();
    match Checkpoint::from_bytes(Path::new("ck"), &join(&header, data)) {
        Err(Error::Version { found, .. }) => assert_eq!(found, "99"),
        other => panic!("expected a version error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn wrong_coefficient_count_names_the_shape() {
    let ck = trained();
    let mut field = ck.field_config().clone();
    field.num_coeffs -= 1;
    let err = ck.ensure_field(&field).unwrap_err().to_string();
    assert!(err.contains("shape") || err.contains('['), "{err}");

    let bytes = ck.to_bytes();
    let (mut header, data) = split(&bytes);
    header["num_coeffs"] = (field.num_coeffs as u64).into();
    let err = Checkpoint::from_bytes(Path::new("ck"), &join(&header, data))
        .map(|_| ())
        .unwrap_err()
        .to_string();
    assert!(err.contains("shape") || err.contains('['), "{err}");
}
