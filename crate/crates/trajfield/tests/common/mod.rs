#![allow(dead_code)]

use trajfield::dataset::SceneDataset;
use trajfield::scene::{make_scene, SceneSpec};
use trajfield::train::{NetworkSpec, TrainConfig};

pub fn tiny_dataset(preset: &str, frames: usize) -> SceneDataset {
    let spec = SceneSpec::preset(preset, frames, 16, 12).unwrap();
    make_scene(&spec, 3).unwrap()
}

pub fn tiny_network() -> NetworkSpec {
    NetworkSpec {
        trunk_width: 16,
        trunk_depth: 2,
        skip_layer: None,
        embed_width: 8,
        color_width: 8,
        color_layers: 1,
        pos_freqs: 3,
        dir_freqs: 2,
    }
}

pub fn tiny_config() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        steps_per_epoch: Some(2),
        uniform_rays: 12,
        mask_rays: 4,
        samples: 12,
        svs_window: 4,
        network: tiny_network(),
        shard_rays: 8,
        ..TrainConfig::default()
    }
}
