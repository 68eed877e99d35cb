mod common;

use std::fs;
use std::path::Path;

use common::tiny_dataset;
use trajfield::dataset::SceneDataset;
use trajfield::Error;

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn export_load_round_trip() {
    let ds = tiny_dataset("moving-sphere", 6);
    let dir = tempfile::tempdir().unwrap();
    ds.export(dir.path()).unwrap();
    let back = SceneDataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);

    let again = tempfile::tempdir().unwrap();
    back.export(again.path()).unwrap();
    assert_eq!(tree(dir.path()), tree(again.path()));
}

#[test]
fn unknown_version_is_rejected() {
    let ds = tiny_dataset("static-plane", 3);
    let dir = tempfile::tempdir().unwrap();
    ds.export(dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"version\": \"1\"", "\"version\": \"7\"");
    fs::write(&path, text).unwrap();
    match SceneDataset::load(dir.path()) {
        Err(Error::Version { found, .. }) => assert_eq!(found, "7"),
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn missing_flow_loads_without_it() {
    let ds = tiny_dataset("moving-sphere", 4);
    let dir = tempfile::tempdir().unwrap();
    ds.export(dir.path()).unwrap();
    fs::remove_dir_all(dir.path().join("flow_bwd")).unwrap();
    let back = SceneDataset::load(dir.path()).unwrap();
    assert!(back.flow_fwd.is_none() && back.flow_bwd.is_none());
    assert_eq!(back.flow(0, true, 0, 0), None);
    assert_eq!(back.rgb, ds.rgb);
}

#[test]
fn truncated_depth_is_reported() {
    let ds = tiny_dataset("static-plane", 3);
    let dir = tempfile::tempdir().unwrap();
    ds.export(dir.path()).unwrap();
    let p = dir.path().join("depth/0001.bin");
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
    let err = SceneDataset::load(dir.path()).unwrap_err().to_string();
    assert!(err.contains("0001.bin"), "{err}");
}

#[test]
fn occluder_moves_only_during_its_sweep() {
    let n = 16;
    let ds = tiny_dataset("occluder", n);
    let moving: Vec<usize> = (0..n).filter(|&t| ds.masks[t].iter().any(|&m| m)).collect();
    assert!(!moving.is_empty());
    assert!(
        moving.iter().all(|&t| (n / 4..3 * n / 4).contains(&t)),
        "{moving:?}"
    );
}

#[test]
fn forward_and_backward_flow_agree_on_the_backdrop() {
    let ds = tiny_dataset("moving-sphere", 5);
    let (w, h) = (ds.width(), ds.height());
    let mut checked = 0;
    for t in 0..ds.num_frames - 1 {
        for row in 0..h {
            for col in 0..w {
                if ds.masks[t][row * w + col] {
                    continue;
                }
                let [du, dv] = ds.flow(t, true, row, col).unwrap();
                let (c1, r1) = ((col as f64 + du).round(), (row as f64 + dv).round());
                if c1 < 0.0 || r1 < 0.0 || c1 >= w as f64 || r1 >= h as f64 {
                    continue;
                }
                let (r1, c1) = (r1 as usize, c1 as usize);
                if ds.masks[t + 1][r1 * w + c1] {
                    continue;
                }
                let [bu, bv] = ds.flow(t + 1, false, r1, c1).unwrap();
                assert!(
                    (bu + du).abs() < 1e-3 && (bv + dv).abs() < 1e-3,
                    "t={t} ({row},{col})"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 100);
}

#[test]
fn probe_tracks_start_at_the_first_frame() {
    let ds = tiny_dataset("moving-sphere", 6);
    assert!(ds.probes.iter().any(|p| p.moving));
    assert!(ds.probes.iter().any(|p| !p.moving));
    for p in &ds.probes {
        assert_eq!(p.track.len(), ds.num_frames);
        if !p.moving {
            assert!(p.track.iter().all(|q| *q == p.track[0]));
        }
    }
}
